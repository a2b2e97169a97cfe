//! Penetration filtering, the contact candidate pool, beam-search selection
//! of contact constraints and the end-to-end pipeline.

mod beam;
mod pipeline;

pub use beam::{beam_search_select, BeamConfig, BeamResult, CandidateRecord, ScoredCandidate, SelectionContext};
pub use pipeline::{
    run_pipeline, select_for_sequence, sequence_report, Manifest, ManifestInputs, NamedHash, PipelineConfig, PipelineInputs,
    PipelineRun, PoolEntry, SequenceReport,
};

use serde::{Deserialize, Serialize};

use crate::body::Capsule;
use crate::contacts::{extract_candidate, CONTACT_THRESHOLD};
use crate::geometry::{Bvh, SdfGrid, TriMesh};
use crate::morph::ContactCandidate;
use std::path::Path;

use crate::motion::{MotionSequence, SCHEMA_VERSION};
use crate::{Error, Result};
use crate::so3::{Mat3, Vec3};

/// Per-frame human-object overlap above which a frame counts as penetrating (m^3).
pub const PENETRATION_VOLUME: f64 = 1e-4;
/// Largest fraction of penetrating frames a kept candidate may have.
pub const MAX_FLAGGED_RATIO: f64 = 0.025;
/// Candidates overlapping an earlier pool entry at least this much are dropped.
pub const POOL_DEDUP_IOU: f64 = 0.8;

/// Volume of object-interior lattice cells whose centres fall inside any
/// capsule. The grid is in the object frame; capsules are in the world frame
/// and the object sits at `(rotation, translation)`.
pub fn penetration_volume(capsules: &[Capsule], sdf: &SdfGrid, rotation: &Mat3, translation: &Vec3) -> f64 {
    let lat = sdf.lattice;
    let s = lat.spacing;
    let rt = rotation.transpose();
    let mut hits = Vec::new();
    for c in capsules {
        let local = Capsule { a: rt * (c.a - translation), b: rt * (c.b - translation), radius: c.radius };
        let lo = local.a.inf(&local.b).add_scalar(-c.radius) - lat.origin;
        let hi = local.a.sup(&local.b).add_scalar(c.radius) - lat.origin;
        let mut range = [(0usize, 0usize); 3];
        let mut empty = false;
        for k in 0..3 {
            let first = (lo[k] / s).ceil().max(0.0);
            let last = (hi[k] / s).floor().min((lat.dims[k] - 1) as f64);
            if first > last {
                empty = true;
                break;
            }
            range[k] = (first as usize, last as usize);
        }
        if empty {
            continue;
        }
        for z in range[2].0..=range[2].1 {
            for y in range[1].0..=range[1].1 {
                for x in range[0].0..=range[0].1 {
                    let idx = lat.index(x, y, z);
                    if sdf.values[idx] < 0.0 && local.contains(&lat.node(x, y, z)) {
                        hits.push(idx);
                    }
                }
            }
        }
    }
    hits.sort_unstable();
    hits.dedup();
    hits.len() as f64 * s * s * s
}

/// Penetration volume of both agents against the object at every frame.
pub fn frame_volumes(seq: &MotionSequence, sdf: &SdfGrid) -> Vec<f64> {
    (0..seq.len())
        .map(|i| {
            let mut capsules = seq.bodies[0].surface_capsules(&seq.agents[0][i]);
            capsules.extend(seq.bodies[1].surface_capsules(&seq.agents[1][i]));
            penetration_volume(&capsules, sdf, &seq.object.rotation(i), &seq.object.translations[i])
        })
        .collect()
}

/// Outcome of the penetration filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub frames: usize,
    pub flagged: usize,
    pub ratio: f64,
    pub max_volume: f64,
    pub keep: bool,
}

impl FilterStats {
    pub fn from_volumes(volumes: &[f64]) -> Self {
        let flagged = volumes.iter().filter(|&&v| v > PENETRATION_VOLUME).count();
        let ratio = if volumes.is_empty() { 0.0 } else { flagged as f64 / volumes.len() as f64 };
        FilterStats {
            frames: volumes.len(),
            flagged,
            ratio,
            max_volume: volumes.iter().copied().fold(0.0, f64::max),
            keep: ratio <= MAX_FLAGGED_RATIO,
        }
    }
}

pub fn filter_candidate(seq: &MotionSequence, sdf: &SdfGrid) -> FilterStats {
    FilterStats::from_volumes(&frame_volumes(seq, sdf))
}

/// Contact candidates of every sequence that touches the object, skipping
/// any that overlap an earlier one by [`POOL_DEDUP_IOU`] or more.
pub fn build_pool(sequences: &[(String, MotionSequence)], mesh: &TriMesh) -> Vec<ContactCandidate> {
    let bvh = Bvh::new(mesh);
    let mut pool: Vec<ContactCandidate> = Vec::new();
    for (name, seq) in sequences {
        let mut cand = extract_candidate(seq, mesh, &bvh, CONTACT_THRESHOLD);
        if cand.is_empty() || pool.iter().any(|p| p.iou(&cand) >= POOL_DEDUP_IOU) {
            continue;
        }
        if let Some(p) = &mut cand.provenance {
            p.sequence = name.clone();
        }
        pool.push(cand);
    }
    pool
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    schema_version: String,
    candidates: Vec<ContactCandidate>,
}

pub fn read_pool(path: impl AsRef<Path>) -> Result<Vec<ContactCandidate>> {
    let file: PoolFile = crate::io::read_json(path)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch { expected: SCHEMA_VERSION.into(), found: file.schema_version });
    }
    Ok(file.candidates)
}

pub fn write_pool(pool: &[ContactCandidate], path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_json(path, &PoolFile { schema_version: SCHEMA_VERSION.into(), candidates: pool.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_mesh_with_cell, compute_sdf};

    fn big_box_sdf() -> SdfGrid {
        compute_sdf(&box_mesh_with_cell(Vec3::repeat(0.3), 0.05), 0.1, 64).unwrap()
    }

    #[test]
    fn far_capsules_do_not_penetrate() {
        let sdf = big_box_sdf();
        let c = Capsule { a: Vec3::new(10.0, 0.0, 0.0), b: Vec3::new(10.3, 0.0, 0.0), radius: 0.05 };
        assert_eq!(penetration_volume(&[c], &sdf, &Mat3::identity(), &Vec3::zeros()), 0.0);
    }

    #[test]
    fn buried_forearm_matches_capsule_volume() {
        let sdf = big_box_sdf();
        let c = Capsule { a: Vec3::new(-0.12, 0.01, 0.02), b: Vec3::new(0.13, 0.01, 0.02), radius: 0.035 };
        let v = penetration_volume(&[c], &sdf, &Mat3::identity(), &Vec3::zeros());
        let exact = c.volume();
        assert!((v - exact).abs() < 0.1 * exact, "{v} vs {exact}");
    }

    #[test]
    fn touching_capsule_does_not_penetrate() {
        let sdf = big_box_sdf();
        // rests on the top face from outside
        let c = Capsule { a: Vec3::new(-0.1, 0.0, 0.34), b: Vec3::new(0.1, 0.0, 0.34), radius: 0.04 };
        assert_eq!(penetration_volume(&[c], &sdf, &Mat3::identity(), &Vec3::zeros()), 0.0);
    }

    #[test]
    fn object_pose_moves_the_grid() {
        let sdf = big_box_sdf();
        let c = Capsule { a: Vec3::new(5.0, 0.0, 1.0), b: Vec3::new(5.1, 0.0, 1.0), radius: 0.03 };
        let r = crate::so3::rot_z(0.7);
        let inside = penetration_volume(&[c], &sdf, &r, &Vec3::new(5.05, 0.0, 1.0));
        assert!(inside > 0.0);
        // overlapping capsules count shared cells once
        let twice = penetration_volume(&[c, c], &sdf, &r, &Vec3::new(5.05, 0.0, 1.0));
        assert_eq!(inside, twice);
    }

    #[test]
    fn filter_boundary_cases() {
        let vols = |flagged: usize| {
            let mut v = vec![0.0; 100];
            for x in v.iter_mut().take(flagged) {
                *x = 2e-4;
            }
            v
        };
        let three = FilterStats::from_volumes(&vols(3));
        assert!(!three.keep && three.flagged == 3);
        let two = FilterStats::from_volumes(&vols(2));
        assert!(two.keep && two.ratio == 0.02);
        // exactly at the volume threshold is not penetration
        assert_eq!(FilterStats::from_volumes(&[1e-4; 10]).flagged, 0);
        assert!(FilterStats::from_volumes(&[]).keep);
    }
}
