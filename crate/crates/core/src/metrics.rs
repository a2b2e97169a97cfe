//! Evaluation metrics comparing a predicted motion against a reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{ArticulatedBody, Pose, PELVIS};
use crate::contacts::{hand_distances, NUM_HANDS};
use crate::geometry::{Bvh, TriMesh};
use crate::motion::{MotionSequence, ObjectTrack};
use crate::so3;
use crate::{Error, Result};

/// Error summary of one predicted motion against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean per-joint position error (mm).
    #[serde(rename = "J_e")]
    pub joint_error: f64,
    /// Mean object translation error (mm).
    #[serde(rename = "T_e")]
    pub translation_error: f64,
    /// Mean object rotation error (degrees).
    #[serde(rename = "R_e")]
    pub rotation_error: f64,
    /// Contact agreement with the reference (percent).
    #[serde(rename = "C_acc")]
    pub contact_accuracy: f64,
    /// Mean share of object vertices inside the bodies (percent).
    #[serde(rename = "P_r")]
    pub penetration_rate: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "J_e,T_e,R_e,C_acc,P_r";

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV data row matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.joint_error, self.translation_error, self.rotation_error, self.contact_accuracy, self.penetration_rate
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

fn check_lengths(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(format!("{what}: predicted {a} frames, reference {b}")));
    }
    Ok(())
}

fn mean_joint_error(pred: &[Pose], pred_body: &ArticulatedBody, gt: &[Pose], gt_body: &ArticulatedBody, root_relative: bool) -> f64 {
    let per_frame: Vec<f64> = pred
        .par_iter()
        .zip(gt)
        .map(|(p, g)| {
            let (jp, jg) = (pred_body.joint_positions(p), gt_body.joint_positions(g));
            let (op, og) = if root_relative { (jp[PELVIS], jg[PELVIS]) } else { Default::default() };
            jp.iter().zip(&jg).map(|(a, b)| ((a - op) - (b - og)).norm()).sum::<f64>() / jp.len() as f64
        })
        .collect();
    per_frame.iter().sum::<f64>() / pred.len() as f64
}

/// Mean joint position error of one pose track (mm). With `root_relative`
/// the pelvis is subtracted from every joint before comparison.
pub fn mpjpe_track(pred: &[Pose], gt: &[Pose], body: &ArticulatedBody, root_relative: bool) -> Result<f64> {
    check_lengths("pose track", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(mean_joint_error(pred, body, gt, body, root_relative) * 1000.0)
}

/// Mean joint position error over both agents (mm). Each sequence is posed
/// with its own bodies.
pub fn mpjpe(pred: &MotionSequence, gt: &MotionSequence, root_relative: bool) -> Result<f64> {
    check_lengths("motion", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = (0..2)
        .map(|a| mean_joint_error(&pred.agents[a], &pred.bodies[a], &gt.agents[a], &gt.bodies[a], root_relative))
        .sum();
    Ok(sum / 2.0 * 1000.0)
}

/// Mean translation error (mm) and mean geodesic rotation error (degrees).
pub fn object_errors(pred: &ObjectTrack, gt: &ObjectTrack) -> Result<(f64, f64)> {
    check_lengths("object track", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = pred.len() as f64;
    let t: f64 = pred.translations.iter().zip(&gt.translations).map(|(a, b)| (a - b).norm()).sum();
    let r: f64 = (0..pred.len()).map(|i| so3::geodesic(&pred.rotation(i), &gt.rotation(i))).sum();
    Ok((t / n * 1000.0, (r / n).to_degrees()))
}

/// Percentage of hand-frames whose contact state matches the reference.
/// A hand is in contact when a fingertip is strictly closer than `threshold`
/// to the object surface.
pub fn contact_accuracy(pred: &MotionSequence, gt: &MotionSequence, mesh: &TriMesh, threshold: f64) -> Result<f64> {
    check_lengths("motion", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(100.0);
    }
    let bvh = Bvh::new(mesh);
    let (dp, dg) = rayon::join(|| hand_distances(pred, &bvh), || hand_distances(gt, &bvh));
    Ok(contact_agreement(&dp, &dg, threshold))
}

/// Contact agreement from precomputed per-hand distances (percent).
pub fn contact_agreement(pred: &[[f64; NUM_HANDS]], gt: &[[f64; NUM_HANDS]], threshold: f64) -> f64 {
    let total = pred.len() * NUM_HANDS;
    if total == 0 {
        return 100.0;
    }
    let mismatched = pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| p.iter().zip(g).filter(|(a, b)| (**a < threshold) != (**b < threshold)))
        .count();
    100.0 * (1.0 - mismatched as f64 / total as f64)
}

/// Mean percentage of posed object vertices inside any body capsule.
pub fn penetration_rate(seq: &MotionSequence, mesh: &TriMesh) -> f64 {
    if seq.is_empty() || mesh.vertices.is_empty() {
        return 0.0;
    }
    let fractions: Vec<f64> = (0..seq.len())
        .into_par_iter()
        .map(|i| {
            let capsules: Vec<_> = (0..2).flat_map(|a| seq.bodies[a].surface_capsules(&seq.agents[a][i])).collect();
            let inside = mesh
                .vertices
                .iter()
                .filter(|v| {
                    let p = seq.object.to_world(i, v);
                    capsules.iter().any(|c| c.contains(&p))
                })
                .count();
            inside as f64 / mesh.vertices.len() as f64
        })
        .collect();
    100.0 * fractions.iter().sum::<f64>() / seq.len() as f64
}

/// All five metrics of `pred` against `gt` on the shared object `mesh`.
pub fn evaluate(pred: &MotionSequence, gt: &MotionSequence, mesh: &TriMesh, threshold: f64) -> Result<MetricReport> {
    let joint_error = mpjpe(pred, gt, false)?;
    let (translation_error, rotation_error) = object_errors(&pred.object, &gt.object)?;
    Ok(MetricReport {
        joint_error,
        translation_error,
        rotation_error,
        contact_accuracy: contact_accuracy(pred, gt, mesh, threshold)?,
        penetration_rate: penetration_rate(pred, mesh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::Vec3;

    #[test]
    fn agreement_counts_hand_frames() {
        let gt = vec![[0.01, 0.2, 0.2, 0.2]];
        let pred = vec![[0.2, 0.2, 0.2, 0.2]];
        assert_eq!(contact_agreement(&pred, &gt, 0.05), 75.0);
    }

    #[test]
    fn agreement_boundary_is_non_contact() {
        let at = vec![[0.05; NUM_HANDS]];
        let far = vec![[0.3; NUM_HANDS]];
        assert_eq!(contact_agreement(&at, &far, 0.05), 100.0);
    }

    #[test]
    fn object_errors_of_a_quarter_turn() {
        let n = 5;
        let gt = ObjectTrack::new(vec![Vec3::zeros(); n], vec![Vec3::new(0.1, 0.2, 0.3); n]).unwrap();
        let pred = ObjectTrack::new(vec![Vec3::z() * std::f64::consts::FRAC_PI_2; n], gt.translations.clone()).unwrap();
        let (t, r) = object_errors(&pred, &gt).unwrap();
        assert_eq!(t, 0.0);
        assert!((r - 90.0).abs() < 1e-6);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let a = ObjectTrack::new(vec![Vec3::zeros(); 2], vec![Vec3::zeros(); 2]).unwrap();
        let b = ObjectTrack::new(vec![Vec3::zeros(); 3], vec![Vec3::zeros(); 3]).unwrap();
        assert!(matches!(object_errors(&a, &b), Err(Error::LengthMismatch(_))));
    }
}
