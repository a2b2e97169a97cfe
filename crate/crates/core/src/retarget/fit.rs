use crate::body::{ArticulatedBody, Pose, NUM_BONES, NUM_JOINTS, TIPS_PER_HAND, WRISTS};
use crate::contacts::CONTACT_THRESHOLD;
use crate::diffopt::{minimize, Evaluation, LossTrace, Objective, OptimConfig};
use crate::error::{Error, Result};
use crate::geometry::{Bvh, TriMesh};
use crate::motion::ObjectTrack;
use crate::so3::{self, Mat3, Vec3};

use super::FitWeights;

/// Joints whose local rotation is matched: head, spine1, spine2, both hips,
/// both collars, both shoulders, neck.
pub const ORIENTATION_JOINTS: [usize; 10] = [15, 3, 6, 1, 2, 14, 13, 17, 16, 12];

/// Per-frame fitting targets for one person.
#[derive(Debug, Clone, Default)]
pub struct FitTargets {
    pub joints: Vec<[Vec3; NUM_JOINTS]>,
    /// Local rotations of [`ORIENTATION_JOINTS`].
    pub orientations: Vec<[Mat3; 10]>,
    /// Global wrist frames (left, right); optional.
    pub hand_orientations: Option<Vec<[Mat3; 2]>>,
    /// Ten fingertips, left hand first.
    pub fingertips: Vec<[Vec3; 2 * TIPS_PER_HAND]>,
    /// Object surface (object frame) and its track, for the contact term.
    pub object: Option<(TriMesh, ObjectTrack)>,
}

impl FitTargets {
    /// Targets reproduced exactly by `poses`.
    pub fn from_poses(body: &ArticulatedBody, poses: &[Pose]) -> Self {
        let mut t = FitTargets::default();
        let mut hands = Vec::with_capacity(poses.len());
        for p in poses {
            let kin = body.forward_kinematics(p);
            t.joints.push(kin.positions);
            t.orientations.push(ORIENTATION_JOINTS.map(|j| kin.local[j]));
            hands.push(WRISTS.map(|w| kin.frames[w]));
            let [l, r] = [0, 1].map(|h| body.hand_tips(&kin, h));
            t.fingertips.push(std::array::from_fn(|k| if k < TIPS_PER_HAND { l[k] } else { r[k - TIPS_PER_HAND] }));
        }
        t.hand_orientations = Some(hands);
        t
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        let same = self.orientations.len() == n
            && self.fingertips.len() == n
            && self.hand_orientations.as_ref().is_none_or(|h| h.len() == n)
            && self.object.as_ref().is_none_or(|(_, t)| t.len() == n);
        if !same {
            return Err(Error::LengthMismatch("fit targets disagree on frame count".into()));
        }
        if n == 0 {
            return Err(Error::TrackTooShort { len: 0, min: 1 });
        }
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !self.joints.iter().flatten().chain(self.fingertips.iter().flatten()).all(finite) {
            return Err(Error::Invalid("non-finite fit target".into()));
        }
        Ok(())
    }
}

/// The seven-term fitting loss over frame-major poses.
pub struct FitObjective {
    body: ArticulatedBody,
    targets: FitTargets,
    weights: FitWeights,
    surface: Option<Bvh>,
    /// Frozen closest object point (world) of each fingertip, when in contact.
    contacts: Vec<[Option<Vec3>; 2 * TIPS_PER_HAND]>,
}

impl FitObjective {
    pub fn new(targets: FitTargets, body: ArticulatedBody, weights: FitWeights) -> Result<Self> {
        targets.validate()?;
        let surface = targets.object.as_ref().map(|(m, _)| Bvh::new(m));
        let n = targets.len();
        Ok(FitObjective { body, targets, weights, surface, contacts: vec![[None; 2 * TIPS_PER_HAND]; n] })
    }

    fn frames(&self) -> usize {
        self.targets.len()
    }

    fn tips(&self, kin: &crate::body::Kinematics) -> [Vec3; 2 * TIPS_PER_HAND] {
        let [l, r] = [0, 1].map(|h| self.body.hand_tips(kin, h));
        std::array::from_fn(|k| if k < TIPS_PER_HAND { l[k] } else { r[k - TIPS_PER_HAND] })
    }

    pub fn initial_point(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.frames() * Pose::DIM);
        for joints in &self.targets.joints {
            Pose { root_transl: joints[0], ..Pose::default() }.write_into(&mut x);
        }
        x
    }
}

impl Objective for FitObjective {
    fn dim(&self) -> usize {
        self.frames() * Pose::DIM
    }

    fn term_names(&self) -> Vec<String> {
        ["reg", "j3d", "jori", "smooth", "h3d", "hori", "contact"].map(String::from).to_vec()
    }

    fn refresh(&mut self, x: &[f64]) {
        let (Some(bvh), Some((_, track))) = (&self.surface, &self.targets.object) else { return };
        for i in 0..self.frames() {
            let pose = Pose::from_slice(&x[i * Pose::DIM..(i + 1) * Pose::DIM]);
            let tips = self.tips(&self.body.forward_kinematics(&pose));
            self.contacts[i] = tips.map(|t| {
                let c = bvh.closest(&track.to_local(i, &t));
                (c.distance < CONTACT_THRESHOLD).then(|| track.to_world(i, &c.point))
            });
        }
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation {
        grad.fill(0.0);
        let w = &self.weights;
        let mut terms = [0.0; 7];
        let d = Pose::DIM;
        for i in 0..self.frames() {
            let xi = &x[i * d..(i + 1) * d];
            let pose = Pose::from_slice(xi);
            let kin = self.body.forward_kinematics(&pose);
            let mut gp = [Vec3::zeros(); NUM_JOINTS];
            let mut gf = [Mat3::zeros(); NUM_JOINTS];
            let mut g_local = [Mat3::zeros(); NUM_JOINTS];
            let gi = &mut grad[i * d..(i + 1) * d];
            for k in 0..3 * NUM_BONES {
                terms[0] += w.body * xi[k] * xi[k];
                gi[k] += 2.0 * w.body * xi[k];
            }
            for (j, target) in self.targets.joints[i].iter().enumerate() {
                let e = kin.positions[j] - target;
                terms[1] += w.j3d * e.norm_squared();
                gp[j] += e * (2.0 * w.j3d);
            }
            for (k, &j) in ORIENTATION_JOINTS.iter().enumerate() {
                let e = kin.local[j] - self.targets.orientations[i][k];
                terms[2] += w.ori * e.norm_squared();
                g_local[j] += e * (2.0 * w.ori);
            }
            if let Some(hands) = &self.targets.hand_orientations {
                for (h, &wj) in WRISTS.iter().enumerate() {
                    let e = kin.frames[wj] - hands[i][h];
                    terms[5] += w.ori * e.norm_squared();
                    gf[wj] += e * (2.0 * w.ori);
                }
            }
            let tips = self.tips(&kin);
            let mut g_tips = [Vec3::zeros(); 2 * TIPS_PER_HAND];
            for (k, t) in tips.iter().enumerate() {
                let e = t - self.targets.fingertips[i][k];
                terms[4] += w.h3d * e.norm_squared();
                g_tips[k] += e * (2.0 * w.h3d);
                if let Some(q) = self.contacts[i][k] {
                    let e = t - q;
                    terms[6] += w.contact * e.norm_squared();
                    g_tips[k] += e * (2.0 * w.contact);
                }
            }
            self.body.tips_backward(0, &g_tips[..TIPS_PER_HAND], &mut gp, &mut gf);
            self.body.tips_backward(1, &g_tips[TIPS_PER_HAND..], &mut gp, &mut gf);
            let g = self.body.backward(&pose, &kin, &gp, &gf);
            let mut pose_grad = vec![0.0; d];
            g.write_into(&mut pose_grad);
            for (j, gl) in g_local.iter().enumerate().skip(1) {
                if gl.iter().any(|v| *v != 0.0) {
                    let extra = so3::pullback(&pose.theta[j - 1], &kin.local[j], gl);
                    for c in 0..3 {
                        pose_grad[3 * (j - 1) + c] += extra[c];
                    }
                }
            }
            for k in 0..d {
                gi[k] += pose_grad[k];
            }
            if i > 0 {
                for k in 0..3 * NUM_BONES {
                    let diff = x[i * d + k] - x[(i - 1) * d + k];
                    terms[3] += w.smooth * diff * diff;
                    grad[i * d + k] += 2.0 * w.smooth * diff;
                    grad[(i - 1) * d + k] -= 2.0 * w.smooth * diff;
                }
            }
        }
        Evaluation { total: terms.iter().sum(), terms: terms.to_vec() }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub poses: Vec<Pose>,
    pub trace: LossTrace,
}

/// Fits a pose track to joint, orientation and fingertip targets, starting
/// from the rest pose placed at the target pelvis.
pub fn fit_pose_sequence(targets: FitTargets, body: &ArticulatedBody, weights: &FitWeights, cfg: &OptimConfig) -> Result<FitResult> {
    let mut objective = FitObjective::new(targets, body.clone(), *weights)?;
    let x0 = objective.initial_point();
    let res = minimize(&mut objective, &x0, cfg)?;
    let poses = res.best_x.chunks_exact(Pose::DIM).map(|c| Pose::from_slice(c).canonicalized()).collect();
    Ok(FitResult { poses, trace: res.trace })
}
