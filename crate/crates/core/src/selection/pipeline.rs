use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contacts::{detect_contacts, CONTACT_THRESHOLD, NUM_HANDS};
use crate::diffopt::OptimConfig;
use crate::discriminator::RankingModel;
use crate::error::{Error, Result};
use crate::geometry::{TriMesh, DEFAULT_RESOLUTION};
use crate::morph::{build_morph_sequence_with, ContactCandidate, MorphSequence, DEFAULT_INTERMEDIATES};
use crate::motion::{MotionSequence, ObjectTrack, SCHEMA_VERSION};
use crate::retarget::{human_optim, object_optim, retarget_object_motion, LossWeights};

use super::beam::{beam_search_select, BeamConfig, BeamResult, CandidateRecord, SelectionContext};
use super::{build_pool, FilterStats};

/// Fully resolved settings of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub morph_intermediates: usize,
    pub morph_resolution: usize,
    pub weights: LossWeights,
    pub object_optim: OptimConfig,
    pub human_optim: OptimConfig,
    pub beam: BeamConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            morph_intermediates: DEFAULT_INTERMEDIATES,
            morph_resolution: DEFAULT_RESOLUTION,
            weights: LossWeights::default(),
            object_optim: object_optim(),
            human_optim: human_optim(),
            beam: BeamConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// SHA-256 of the config's JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct PipelineInputs<'a> {
    pub source_mesh: &'a TriMesh,
    pub target_mesh: &'a TriMesh,
    /// Object id written into the output motions.
    pub target_id: &'a str,
    /// Named source sequences on the source object.
    pub sources: &'a [(String, MotionSequence)],
    pub model: &'a RankingModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedHash {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInputs {
    pub source_mesh: String,
    pub target_mesh: String,
    pub target_id: String,
    pub model: String,
    pub sources: Vec<NamedHash>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub sequence: Option<String>,
    pub frames: Option<[usize; 2]>,
    pub region_sizes: [usize; NUM_HANDS],
}

/// Selection outcome of one source sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
    pub history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterStats>,
    pub candidates: Vec<CandidateRecord>,
}

/// Provenance of a pipeline run; identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub inputs: ManifestInputs,
    pub pool: Vec<PoolEntry>,
    pub sequences: Vec<SequenceReport>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Outputs aligned with the inputs (`None` where a sequence failed) plus the
/// manifest.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub motions: Vec<Option<MotionSequence>>,
    pub manifest: Manifest,
}

/// Beam search of `pool` for one source sequence whose object already follows
/// the retargeted `track`. The returned motion keeps the source object id.
pub fn select_for_sequence(
    seq: &MotionSequence,
    track: &ObjectTrack,
    pool: &[ContactCandidate],
    morph: &MorphSequence,
    model: &RankingModel,
    cfg: &PipelineConfig,
) -> Result<BeamResult> {
    if track.len() != seq.len() {
        return Err(Error::LengthMismatch(format!("object track has {} frames, sequence {}", track.len(), seq.len())));
    }
    let masks = detect_contacts(seq, &morph.source().bvh, CONTACT_THRESHOLD);
    let ctx = SelectionContext {
        source: seq,
        masks: &masks,
        target_track: track,
        morph,
        model,
        weights: &cfg.weights.human,
        optim: &cfg.human_optim,
    };
    beam_search_select(pool, &ctx, &cfg.beam)
}

/// Manifest entry for one sequence's selection outcome.
pub fn sequence_report(name: &str, outcome: &Result<BeamResult>) -> SequenceReport {
    match outcome {
        Ok(res) => SequenceReport {
            name: name.into(),
            status: "ok".into(),
            error: None,
            error_kind: None,
            history: res.history.clone(),
            score: Some(res.best.score),
            filter: Some(res.best.stats),
            candidates: res.records.clone(),
        },
        Err(e) => SequenceReport {
            name: name.into(),
            status: "error".into(),
            error: Some(e.to_string()),
            error_kind: Some(e.kind().into()),
            history: Vec::new(),
            score: None,
            filter: None,
            candidates: Vec::new(),
        },
    }
}

/// Morph, pool, transfer, object stage and beam search for every source
/// sequence. A failing sequence is reported in the manifest and does not stop
/// the others; only invalid meshes or settings abort the run.
pub fn run_pipeline(inputs: &PipelineInputs<'_>, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.beam.validate()?;
    cfg.object_optim.validate()?;
    cfg.human_optim.validate()?;
    let morph = build_morph_sequence_with(inputs.source_mesh, inputs.target_mesh, cfg.morph_intermediates, cfg.morph_resolution)?;
    let pool = build_pool(inputs.sources, inputs.source_mesh);
    let mut motions = Vec::with_capacity(inputs.sources.len());
    let mut reports = Vec::with_capacity(inputs.sources.len());
    for (name, seq) in inputs.sources {
        let outcome = (|| {
            seq.validate()?;
            if pool.is_empty() {
                return Err(Error::EmptyCandidate);
            }
            let track = retarget_object_motion(&seq.object, inputs.target_mesh, &cfg.weights.object, &cfg.object_optim)?.track;
            select_for_sequence(seq, &track, &pool, &morph, inputs.model, cfg)
        })();
        reports.push(sequence_report(name, &outcome));
        motions.push(outcome.ok().map(|res| MotionSequence { object_id: inputs.target_id.to_string(), ..res.best.motion }));
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        inputs: ManifestInputs {
            source_mesh: sha256_hex(inputs.source_mesh.to_obj_string().as_bytes()),
            target_mesh: sha256_hex(inputs.target_mesh.to_obj_string().as_bytes()),
            target_id: inputs.target_id.into(),
            model: sha256_hex(&inputs.model.to_bytes()),
            sources: inputs
                .sources
                .iter()
                .map(|(name, s)| NamedHash { name: name.clone(), sha256: sha256_hex(s.to_json().as_bytes()) })
                .collect(),
        },
        pool: pool
            .iter()
            .map(|c| PoolEntry {
                sequence: c.provenance.as_ref().map(|p| p.sequence.clone()),
                frames: c.provenance.as_ref().map(|p| p.frames),
                region_sizes: c.hands.clone().map(|h| h.len()),
            })
            .collect(),
        sequences: reports,
    };
    Ok(PipelineRun { motions, manifest })
}
