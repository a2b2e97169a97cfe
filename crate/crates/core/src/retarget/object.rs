use crate::diffopt::{acceleration_penalty, minimize, Evaluation, LossTrace, Objective, OptimConfig};
use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::motion::{ObjectTrack, MIN_OPT_FRAMES};
use crate::so3::{self, Mat3, Vec3};

use super::{sign0, ObjectWeights};

/// Vertices of the target used for the per-frame lowest point.
pub const HEIGHT_SAMPLES: usize = 500;

/// Fidelity, ground and smoothness terms over a frame-major `[r | t]` track.
pub struct ObjectObjective {
    source: Vec<f64>,
    samples: Vec<Vec3>,
    weights: ObjectWeights,
    /// Frozen lowest sample per frame and whether it is below ground.
    lowest: Vec<(usize, bool)>,
}

impl ObjectObjective {
    pub fn new(source: &ObjectTrack, target_mesh: &TriMesh, weights: ObjectWeights) -> Self {
        let samples = target_mesh.farthest_point_sample(HEIGHT_SAMPLES);
        let n = source.len();
        ObjectObjective { source: source.to_params(), samples, weights, lowest: vec![(0, false); n] }
    }

    fn frames(&self) -> usize {
        self.source.len() / 6
    }
}

impl Objective for ObjectObjective {
    fn dim(&self) -> usize {
        self.source.len()
    }

    fn term_names(&self) -> Vec<String> {
        ["fidelity", "spat", "smooth"].map(String::from).to_vec()
    }

    fn refresh(&mut self, x: &[f64]) {
        for i in 0..self.frames() {
            let r = so3::exp(&Vec3::new(x[6 * i], x[6 * i + 1], x[6 * i + 2]));
            let tz = x[6 * i + 5];
            let (k, h) = self
                .samples
                .iter()
                .enumerate()
                .map(|(k, v)| (k, (r * v).z + tz))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty samples");
            self.lowest[i] = (k, h < 0.0);
        }
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation {
        grad.fill(0.0);
        let w = &self.weights;
        let mut fidelity = 0.0;
        for (k, (&xi, &si)) in x.iter().zip(&self.source).enumerate() {
            let lam = if k % 6 < 3 { w.f_rot } else { w.f_trans };
            let d = xi - si;
            fidelity += lam * d.abs();
            grad[k] += lam * sign0(d);
        }
        let mut spat = 0.0;
        for (i, &(k, active)) in self.lowest.iter().enumerate() {
            if !active {
                continue;
            }
            let v = Vec3::new(x[6 * i], x[6 * i + 1], x[6 * i + 2]);
            let r = so3::exp(&v);
            let p = &self.samples[k];
            let h = (r * p).z + x[6 * i + 5];
            spat -= w.spat * h;
            // d(-h)/dR = -e_z p^T
            let g_r: Mat3 = -(Vec3::z() * p.transpose()) * w.spat;
            let g = so3::pullback(&v, &r, &g_r);
            for c in 0..3 {
                grad[6 * i + c] += g[c];
            }
            grad[6 * i + 5] -= w.spat;
        }
        let smooth = acceleration_penalty(x, 6, w.smooth, grad);
        Evaluation { total: fidelity + spat + smooth, terms: vec![fidelity, spat, smooth] }
    }
}

/// Object-stage output.
#[derive(Debug, Clone)]
pub struct ObjectRetarget {
    pub track: ObjectTrack,
    pub trace: LossTrace,
}

/// Estimates the target object's motion from the source track, starting at
/// the source track. The target mesh is in the object frame.
pub fn retarget_object_motion(
    source: &ObjectTrack,
    target_mesh: &TriMesh,
    weights: &ObjectWeights,
    cfg: &OptimConfig,
) -> Result<ObjectRetarget> {
    source.validate()?;
    if source.len() < MIN_OPT_FRAMES {
        return Err(Error::TrackTooShort { len: source.len(), min: MIN_OPT_FRAMES });
    }
    let mut objective = ObjectObjective::new(source, target_mesh, *weights);
    let x0 = source.to_params();
    let res = minimize(&mut objective, &x0, cfg)?;
    let mut track = ObjectTrack::from_params(&res.best_x);
    for r in &mut track.rotations {
        *r = so3::canonical(r);
    }
    Ok(ObjectRetarget { track, trace: res.trace })
}

/// Lowest world height of the mesh at each frame.
pub fn min_heights(track: &ObjectTrack, mesh: &TriMesh) -> Vec<f64> {
    (0..track.len())
        .map(|i| {
            let r = track.rotation(i);
            let t = track.translations[i];
            mesh.vertices.iter().map(|v| (r * v + t).z).fold(f64::INFINITY, f64::min)
        })
        .collect()
}
