use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contacts::NUM_HANDS;
use crate::diffopt::OptimConfig;
use crate::discriminator::RankingModel;
use crate::error::{Error, Result};
use crate::morph::{transfer_contacts, ContactCandidate, ContactConstraint, MorphSequence};
use crate::motion::{MotionSequence, ObjectTrack};
use crate::retarget::{retarget_human_motion, HumanWeights};

use super::{filter_candidate, FilterStats};

/// Beam width, iteration count (including the initial scoring round) and
/// the size of the initial pool sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub width: usize,
    pub iterations: usize,
    pub initial_sample: usize,
    pub seed: u64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { width: 4, iterations: 3, initial_sample: 8, seed: 0 }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.iterations == 0 || self.initial_sample == 0 {
            return Err(Error::Invalid("beam width, iterations and initial_sample must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a candidate needs to be retargeted, filtered and scored.
pub struct SelectionContext<'a> {
    pub source: &'a MotionSequence,
    /// Per-frame contact flags of the source.
    pub masks: &'a [[bool; NUM_HANDS]],
    pub target_track: &'a ObjectTrack,
    pub morph: &'a MorphSequence,
    pub model: &'a RankingModel,
    pub weights: &'a HumanWeights,
    pub optim: &'a OptimConfig,
}

/// A retargeted, filtered and scored candidate.
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub candidate: ContactCandidate,
    pub constraint: ContactConstraint,
    pub motion: MotionSequence,
    pub score: f64,
    pub stats: FilterStats,
}

/// Manifest line for one evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub iteration: usize,
    /// `pool:<index>`, `dilate`, `contract` or `swap:<index>`.
    pub origin: String,
    pub region_sizes: [usize; NUM_HANDS],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub best: ScoredCandidate,
    /// Best beam score after each iteration.
    pub history: Vec<f64>,
    pub records: Vec<CandidateRecord>,
}

fn evaluate(ctx: &SelectionContext<'_>, candidate: &ContactCandidate) -> Result<ScoredCandidate> {
    let constraint = transfer_contacts(candidate, ctx.morph)?;
    let out = retarget_human_motion(ctx.source, ctx.target_track, &constraint, ctx.masks, ctx.weights, ctx.optim)?;
    let motion = MotionSequence { object: ctx.target_track.clone(), ..ctx.source.with_agents(out.agents) };
    let stats = filter_candidate(&motion, &ctx.morph.target().sdf);
    let score = if stats.keep { ctx.model.score_sequence(&motion) } else { f64::NEG_INFINITY };
    Ok(ScoredCandidate { candidate: candidate.clone(), constraint, motion, score, stats })
}

fn dilate(c: &ContactCandidate, nbrs: &[Vec<u32>]) -> ContactCandidate {
    let hands = c.hands.clone().map(|h| {
        let mut out = h.clone();
        for &v in &h {
            out.extend_from_slice(&nbrs[v as usize]);
        }
        out
    });
    ContactCandidate::new(hands)
}

/// Drops boundary vertices; a hand that would vanish keeps its region.
fn contract(c: &ContactCandidate, nbrs: &[Vec<u32>]) -> ContactCandidate {
    let hands = c.hands.clone().map(|h| {
        let inner: Vec<u32> =
            h.iter().copied().filter(|&v| nbrs[v as usize].iter().all(|n| h.binary_search(n).is_ok())).collect();
        if inner.is_empty() {
            h
        } else {
            inner
        }
    });
    ContactCandidate::new(hands)
}

fn rank(beam: &mut [ScoredCandidate]) {
    beam.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.candidate.hands.cmp(&b.candidate.hands)));
}

/// Scores an initial sample of the pool, then repeatedly expands the beam
/// with neighbouring constraints (one-ring dilation and contraction of each
/// member, and the unvisited pool entry most similar to the current best),
/// keeping the best `width` candidates that pass the penetration filter.
pub fn beam_search_select(pool: &[ContactCandidate], ctx: &SelectionContext<'_>, cfg: &BeamConfig) -> Result<BeamResult> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    let nbrs = ctx.morph.source().mesh.vertex_neighbors();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut seen: BTreeSet<[Vec<u32>; NUM_HANDS]> = BTreeSet::new();
    let mut records = Vec::new();
    let mut beam: Vec<ScoredCandidate> = Vec::new();
    let mut history = Vec::with_capacity(cfg.iterations);

    let mut batch: Vec<(String, ContactCandidate)> = Vec::new();
    for &k in order.iter().take(cfg.initial_sample) {
        if seen.insert(pool[k].hands.clone()) {
            batch.push((format!("pool:{k}"), pool[k].clone()));
        }
    }
    for iteration in 0..cfg.iterations {
        if iteration > 0 {
            batch.clear();
            let mut push = |origin: String, c: ContactCandidate, seen: &mut BTreeSet<_>| {
                if !c.is_empty() && seen.insert(c.hands.clone()) {
                    batch.push((origin, c));
                }
            };
            for member in &beam {
                push("dilate".into(), dilate(&member.candidate, &nbrs), &mut seen);
                push("contract".into(), contract(&member.candidate, &nbrs), &mut seen);
            }
            if let Some(best) = beam.first() {
                let swap = (0..pool.len())
                    .filter(|&k| !seen.contains(&pool[k].hands))
                    .max_by(|&a, &b| pool[a].iou(&best.candidate).total_cmp(&pool[b].iou(&best.candidate)).then(b.cmp(&a)));
                if let Some(k) = swap {
                    push(format!("swap:{k}"), pool[k].clone(), &mut seen);
                }
            }
        }
        let results: Vec<Result<ScoredCandidate>> = batch.par_iter().map(|(_, c)| evaluate(ctx, c)).collect();
        for ((origin, cand), res) in batch.iter().zip(results) {
            let region_sizes = cand.hands.clone().map(|h| h.len());
            match res {
                Ok(sc) => {
                    records.push(CandidateRecord {
                        iteration,
                        origin: origin.clone(),
                        region_sizes,
                        score: sc.stats.keep.then_some(sc.score),
                        filter: Some(sc.stats),
                        error: None,
                    });
                    if sc.stats.keep {
                        beam.push(sc);
                    }
                }
                Err(e) => records.push(CandidateRecord {
                    iteration,
                    origin: origin.clone(),
                    region_sizes,
                    score: None,
                    filter: None,
                    error: Some(e.to_string()),
                }),
            }
        }
        rank(&mut beam);
        beam.truncate(cfg.width);
        match beam.first() {
            Some(best) => history.push(best.score),
            None if iteration == 0 => return Err(Error::AllCandidatesRejected),
            None => unreachable!("elitism keeps the beam non-empty"),
        }
    }
    let best = beam.swap_remove(0);
    Ok(BeamResult { best, history, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::box_mesh;
    use crate::so3::Vec3;

    #[test]
    fn dilate_and_contract_are_one_ring_moves() {
        let mesh = box_mesh(Vec3::repeat(0.5), [4, 4, 4]);
        let nbrs = mesh.vertex_neighbors();
        let seed = ContactCandidate::new([vec![0], vec![], vec![], vec![]]);
        let grown = dilate(&seed, &nbrs);
        assert_eq!(grown.hands[0].len(), 1 + nbrs[0].len());
        assert!(grown.hands[1].is_empty());
        assert_eq!(contract(&grown, &nbrs).hands[0], vec![0]);
        // a lone vertex is never contracted away
        assert_eq!(contract(&seed, &nbrs), seed);
    }
}
