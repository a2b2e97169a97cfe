//! Kinematic retargeting onto a 19-joint revolute humanoid: paired-keypoint
//! position matching plus temporal smoothing, with joint limits enforced by
//! projection after every step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::{ArticulatedBody, Pose, JOINT_NAMES};
use crate::diffopt::{Adam, Evaluation, LossTrace, Objective, OptimConfig};
use crate::error::{Error, Result};
use crate::motion::{DEFAULT_FPS, SCHEMA_VERSION};
use crate::so3::{self, Mat3, Vec3};

pub const HUMANOID_DOF: usize = 19;
/// Per-frame parameters: joint angles, root axis-angle, root translation.
pub const FRAME_DIM: usize = HUMANOID_DOF + 6;
/// Name of the floating base keypoint.
pub const BASE: &str = "base";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevoluteJoint {
    pub name: String,
    /// `None` attaches the joint to the floating base.
    pub parent: Option<usize>,
    /// Joint origin in the parent joint's frame at zero angle.
    pub offset: [f64; 3],
    pub axis: [f64; 3],
    /// `[lo, hi]` in radians.
    pub limits: [f64; 2],
}

/// A fixed point rigidly attached to a joint frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub name: String,
    pub parent: usize,
    pub offset: [f64; 3],
}

/// Revolute tree over a floating base. Keypoints are the base origin, every
/// joint origin and every site, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanoidChain {
    pub joints: Vec<RevoluteJoint>,
    #[serde(default)]
    pub sites: Vec<Site>,
}

/// Keypoint positions and joint frames of one configuration.
#[derive(Debug, Clone)]
pub struct ChainKinematics {
    pub keypoints: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
    pub axes: Vec<Vec3>,
}

impl HumanoidChain {
    /// A generic biped: five-joint legs, a torso yaw joint and four-joint
    /// arms. Zero angles give a T-pose facing +y with the left side at -x,
    /// matching the body rest pose.
    pub fn standard() -> Self {
        let j = |name: &str, parent: Option<usize>, offset: [f64; 3], axis: [f64; 3], limits: [f64; 2]| RevoluteJoint {
            name: name.into(),
            parent,
            offset,
            axis,
            limits,
        };
        let mut joints = Vec::with_capacity(HUMANOID_DOF);
        for (side, sx) in [("left", -1.0), ("right", 1.0)] {
            let b = joints.len();
            joints.push(j(&format!("{side}_hip_yaw"), None, [0.09 * sx, 0.0, -0.09], [0.0, 0.0, 1.0], [-0.43, 0.43]));
            joints.push(j(&format!("{side}_hip_roll"), Some(b), [0.0; 3], [0.0, 1.0, 0.0], [-0.43, 0.43]));
            joints.push(j(&format!("{side}_hip_pitch"), Some(b + 1), [0.0; 3], [1.0, 0.0, 0.0], [-1.57, 1.57]));
            joints.push(j(&format!("{side}_knee"), Some(b + 2), [0.0, 0.0, -0.40], [-1.0, 0.0, 0.0], [-0.26, 2.05]));
            joints.push(j(&format!("{side}_ankle"), Some(b + 3), [0.0, 0.0, -0.40], [1.0, 0.0, 0.0], [-0.87, 0.52]));
        }
        let torso = joints.len();
        joints.push(j("torso", None, [0.0, 0.0, 0.10], [0.0, 0.0, 1.0], [-2.35, 2.35]));
        for (side, sx) in [("left", -1.0), ("right", 1.0)] {
            let b = joints.len();
            joints.push(j(&format!("{side}_shoulder_pitch"), Some(torso), [0.17 * sx, 0.0, 0.30], [0.0, 0.0, -sx], [-1.6, 1.6]));
            joints.push(j(&format!("{side}_shoulder_roll"), Some(b), [0.0; 3], [0.0, 1.0, 0.0], [-1.6, 1.6]));
            joints.push(j(&format!("{side}_shoulder_yaw"), Some(b + 1), [0.0; 3], [1.0, 0.0, 0.0], [-1.3, 1.3]));
            joints.push(j(&format!("{side}_elbow"), Some(b + 2), [0.28 * sx, 0.0, 0.0], [0.0, 0.0, -sx], [-1.25, 2.61]));
        }
        let idx = |name: &str| joints.iter().position(|x| x.name == name).expect("joint");
        let site = |name: &str, parent: &str, offset: [f64; 3]| Site { name: name.into(), parent: idx(parent), offset };
        let sites = vec![
            site("left_hand", "left_elbow", [-0.26, 0.0, 0.0]),
            site("right_hand", "right_elbow", [0.26, 0.0, 0.0]),
            site("left_toe", "left_ankle", [0.0, 0.10, -0.07]),
            site("right_toe", "right_ankle", [0.0, 0.10, -0.07]),
            site("head", "torso", [0.0, 0.0, 0.55]),
        ];
        HumanoidChain { joints, sites }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != HUMANOID_DOF {
            return Err(Error::Invalid(format!("humanoid needs {HUMANOID_DOF} joints, got {}", self.joints.len())));
        }
        for (k, j) in self.joints.iter().enumerate() {
            if j.parent.is_some_and(|p| p >= k) {
                return Err(Error::Invalid(format!("joint {} must come after its parent", j.name)));
            }
            if !(j.limits[0] < j.limits[1]) {
                return Err(Error::Invalid(format!("joint {} limits {:?} need lo < hi", j.name, j.limits)));
            }
            if Vec3::from(j.axis).norm() < 1e-9 || j.offset.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("joint {} has a degenerate axis or offset", j.name)));
            }
        }
        if let Some(s) = self.sites.iter().find(|s| s.parent >= self.joints.len()) {
            return Err(Error::Invalid(format!("site {} attached to missing joint", s.name)));
        }
        let mut names: Vec<&str> = self.keypoint_names();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("duplicate joint or site name".into()));
        }
        Ok(())
    }

    pub fn keypoint_names(&self) -> Vec<&str> {
        std::iter::once(BASE).chain(self.joints.iter().map(|j| j.name.as_str())).chain(self.sites.iter().map(|s| s.name.as_str())).collect()
    }

    pub fn keypoint(&self, name: &str) -> Option<usize> {
        self.keypoint_names().iter().position(|n| *n == name)
    }

    pub fn keypoint_count(&self) -> usize {
        1 + self.joints.len() + self.sites.len()
    }

    /// Joint owning keypoint `k` (`None` for the base).
    fn owner(&self, k: usize) -> Option<usize> {
        match k {
            0 => None,
            k if k <= self.joints.len() => Some(k - 1),
            k => Some(self.sites[k - 1 - self.joints.len()].parent),
        }
    }

    pub fn clamp(&self, angles: &mut [f64]) {
        for (q, j) in angles.iter_mut().zip(&self.joints) {
            *q = q.clamp(j.limits[0], j.limits[1]);
        }
    }

    pub fn within_limits(&self, angles: &[f64]) -> bool {
        angles.iter().zip(&self.joints).all(|(q, j)| *q >= j.limits[0] && *q <= j.limits[1])
    }

    pub fn forward_kinematics(&self, frame: &HumanoidFrame) -> ChainKinematics {
        let root = so3::exp(&Vec3::from(frame.root_orient));
        let t = Vec3::from(frame.root_transl);
        let n = self.joints.len();
        let mut rotations = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        for (k, j) in self.joints.iter().enumerate() {
            let (pr, po) = match j.parent {
                Some(p) => (rotations[p], origins[p]),
                None => (root, t),
            };
            let axis_local = Vec3::from(j.axis).normalize();
            let o: Vec3 = po + pr * Vec3::from(j.offset);
            let r: Mat3 = pr * so3::exp(&(axis_local * frame.angles[k]));
            axes.push(pr * axis_local);
            origins.push(o);
            rotations.push(r);
        }
        let mut keypoints = Vec::with_capacity(self.keypoint_count());
        keypoints.push(t);
        keypoints.extend(&origins);
        keypoints.extend(self.sites.iter().map(|s| origins[s.parent] + rotations[s.parent] * Vec3::from(s.offset)));
        ChainKinematics { keypoints, rotations, axes }
    }

    /// Adds the gradient of `sum_k g_k . P_k` into one frame's parameters.
    fn backward(&self, frame: &HumanoidFrame, kin: &ChainKinematics, grad_kp: &[Vec3], out: &mut [f64]) {
        let n = self.joints.len();
        // per joint: sum of gradients and of moments P x g over its subtree
        let mut force = vec![Vec3::zeros(); n];
        let mut moment = vec![Vec3::zeros(); n];
        for (k, g) in grad_kp.iter().enumerate() {
            if let Some(j) = self.owner(k) {
                force[j] += g;
                moment[j] += kin.keypoints[k].cross(g);
            }
        }
        for j in (0..n).rev() {
            let origin = kin.keypoints[1 + j];
            out[j] += kin.axes[j].dot(&(moment[j] - origin.cross(&force[j])));
            if let Some(p) = self.joints[j].parent {
                let (f, m) = (force[j], moment[j]);
                force[p] += f;
                moment[p] += m;
            }
        }
        let t = Vec3::from(frame.root_transl);
        let total: Vec3 = grad_kp.iter().sum();
        let v = Vec3::from(frame.root_orient);
        let r = so3::exp(&v);
        let mut g_r = Mat3::zeros();
        for (p, g) in kin.keypoints.iter().zip(grad_kp) {
            g_r += g * (r.transpose() * (p - t)).transpose();
        }
        let gv = so3::pullback(&v, &r, &g_r);
        for c in 0..3 {
            out[n + c] += gv[c];
            out[n + 3 + c] += total[c];
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let chain: Self = crate::io::read_json(path)?;
        chain.validate()?;
        Ok(chain)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// `(human joint, humanoid keypoint)` index pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPairMap {
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsJson {
    pairs: Vec<[String; 2]>,
}

impl JointPairMap {
    /// Pelvis, hips, knees, ankles, feet, shoulders, elbows, wrists and head.
    pub fn standard(chain: &HumanoidChain) -> Result<Self> {
        let names = [
            ("pelvis", BASE),
            ("left_hip", "left_hip_pitch"),
            ("right_hip", "right_hip_pitch"),
            ("left_knee", "left_knee"),
            ("right_knee", "right_knee"),
            ("left_ankle", "left_ankle"),
            ("right_ankle", "right_ankle"),
            ("left_foot", "left_toe"),
            ("right_foot", "right_toe"),
            ("left_shoulder", "left_shoulder_pitch"),
            ("right_shoulder", "right_shoulder_pitch"),
            ("left_elbow", "left_elbow"),
            ("right_elbow", "right_elbow"),
            ("left_wrist", "left_hand"),
            ("right_wrist", "right_hand"),
            ("head", "head"),
        ];
        Self::from_names(chain, names.iter().map(|(a, b)| (*a, *b)))
    }

    pub fn from_names<'a>(chain: &HumanoidChain, names: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs = names
            .into_iter()
            .map(|(h, r)| {
                let a = JOINT_NAMES.iter().position(|n| *n == h).ok_or_else(|| Error::Invalid(format!("unknown body joint {h}")))?;
                let b = chain.keypoint(r).ok_or_else(|| Error::Invalid(format!("unknown humanoid keypoint {r}")))?;
                Ok((a, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let map = JointPairMap { pairs };
        map.validate(chain)?;
        Ok(map)
    }

    pub fn validate(&self, chain: &HumanoidChain) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Invalid("joint pair map is empty".into()));
        }
        let mut targets: Vec<usize> = self.pairs.iter().map(|p| p.1).collect();
        targets.sort_unstable();
        if targets.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("two body joints map to the same humanoid keypoint".into()));
        }
        if self.pairs.iter().any(|&(_, b)| b >= chain.keypoint_count()) {
            return Err(Error::Invalid("joint pair index out of range".into()));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, chain: &HumanoidChain) -> Result<Self> {
        let j: PairsJson = crate::io::read_json(path)?;
        Self::from_names(chain, j.pairs.iter().map(|[a, b]| (a.as_str(), b.as_str())))
    }

    pub fn write(&self, path: impl AsRef<Path>, chain: &HumanoidChain) -> Result<()> {
        let names = chain.keypoint_names();
        let j = PairsJson { pairs: self.pairs.iter().map(|&(a, b)| [JOINT_NAMES[a].to_string(), names[b].to_string()]).collect() };
        crate::io::write_json(path, &j)
    }
}

/// One frame of a humanoid trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanoidFrame {
    pub angles: Vec<f64>,
    pub root_orient: [f64; 3],
    pub root_transl: [f64; 3],
}

impl HumanoidFrame {
    fn from_slice(x: &[f64]) -> Self {
        HumanoidFrame {
            angles: x[..HUMANOID_DOF].to_vec(),
            root_orient: [x[HUMANOID_DOF], x[HUMANOID_DOF + 1], x[HUMANOID_DOF + 2]],
            root_transl: [x[HUMANOID_DOF + 3], x[HUMANOID_DOF + 4], x[HUMANOID_DOF + 5]],
        }
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend(&self.angles);
        out.extend(self.root_orient);
        out.extend(self.root_transl);
    }
}

/// The `.h4d.json` trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanoidTrajectory {
    pub schema_version: String,
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub frames: Vec<HumanoidFrame>,
}

impl HumanoidTrajectory {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let t: Self = crate::io::read_json(path)?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch { expected: SCHEMA_VERSION.into(), found: t.schema_version });
        }
        Ok(t)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanoidConfig {
    pub optim: OptimConfig,
    /// Weight of the temporal term relative to the position term.
    pub smooth_weight: f64,
}

impl Default for HumanoidConfig {
    fn default() -> Self {
        HumanoidConfig { optim: OptimConfig::new(0.01, 3000), smooth_weight: 1.0 }
    }
}

/// `L_p + L_t` over a frame-major `[angles | root axis-angle | root translation]` vector.
pub struct HumanoidObjective {
    chain: HumanoidChain,
    pairs: JointPairMap,
    /// Per frame, the source points that pairs refer to by their first index.
    targets: Vec<Vec<Vec3>>,
    smooth_weight: f64,
}

impl HumanoidObjective {
    pub fn new(targets: Vec<Vec<Vec3>>, chain: &HumanoidChain, pairs: &JointPairMap, smooth_weight: f64) -> Result<Self> {
        chain.validate()?;
        pairs.validate(chain)?;
        if targets.len() < 2 {
            return Err(Error::TrackTooShort { len: targets.len(), min: 2 });
        }
        if targets.iter().any(|f| pairs.pairs.iter().any(|&(a, _)| a >= f.len())) {
            return Err(Error::Invalid("pair refers to a missing source point".into()));
        }
        Ok(HumanoidObjective { chain: chain.clone(), pairs: pairs.clone(), targets, smooth_weight })
    }

    /// Targets from body poses (source points are the 22 body joints).
    pub fn from_poses(poses: &[Pose], body: &ArticulatedBody, chain: &HumanoidChain, pairs: &JointPairMap, smooth_weight: f64) -> Result<Self> {
        Self::new(poses.iter().map(|p| body.joint_positions(p).to_vec()).collect(), chain, pairs, smooth_weight)
    }

    /// Zero angles with the base at `base[i]`: (axis-angle, translation).
    pub fn initial_point(&self, base: &[(Vec3, Vec3)]) -> Vec<f64> {
        let mut x = Vec::with_capacity(base.len() * FRAME_DIM);
        for (r, t) in base {
            let f = HumanoidFrame { angles: vec![0.0; HUMANOID_DOF], root_orient: (*r).into(), root_transl: (*t).into() };
            f.write_into(&mut x);
        }
        x
    }

    pub fn frames(x: &[f64]) -> Vec<HumanoidFrame> {
        x.chunks_exact(FRAME_DIM).map(HumanoidFrame::from_slice).collect()
    }

    /// Position term alone.
    pub fn position_loss(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.evaluate(x, &mut g).terms[0]
    }

    /// Temporal term alone, unweighted.
    pub fn temporal_loss(x: &[f64]) -> f64 {
        let n = x.len() / FRAME_DIM;
        (1..n)
            .map(|i| (0..FRAME_DIM).map(|k| (x[i * FRAME_DIM + k] - x[(i - 1) * FRAME_DIM + k]).powi(2)).sum::<f64>())
            .sum()
    }
}

impl Objective for HumanoidObjective {
    fn dim(&self) -> usize {
        self.targets.len() * FRAME_DIM
    }

    fn term_names(&self) -> Vec<String> {
        vec!["position".into(), "temporal".into()]
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation {
        grad.fill(0.0);
        let mut lp = 0.0;
        for (i, target) in self.targets.iter().enumerate() {
            let xi = &x[i * FRAME_DIM..(i + 1) * FRAME_DIM];
            let frame = HumanoidFrame::from_slice(xi);
            let kin = self.chain.forward_kinematics(&frame);
            let mut gk = vec![Vec3::zeros(); self.chain.keypoint_count()];
            for &(a, b) in &self.pairs.pairs {
                let e = kin.keypoints[b] - target[a];
                lp += e.norm_squared();
                gk[b] += e * 2.0;
            }
            self.chain.backward(&frame, &kin, &gk, &mut grad[i * FRAME_DIM..(i + 1) * FRAME_DIM]);
        }
        let mut lt = 0.0;
        let w = self.smooth_weight;
        for i in 1..self.targets.len() {
            for k in 0..FRAME_DIM {
                let d = x[i * FRAME_DIM + k] - x[(i - 1) * FRAME_DIM + k];
                lt += w * d * d;
                grad[i * FRAME_DIM + k] += 2.0 * w * d;
                grad[(i - 1) * FRAME_DIM + k] -= 2.0 * w * d;
            }
        }
        Evaluation { total: lp + lt, terms: vec![lp, lt] }
    }
}

/// Output of [`retarget_humanoid`].
#[derive(Debug, Clone)]
pub struct HumanoidRetarget {
    pub trajectory: HumanoidTrajectory,
    pub trace: LossTrace,
    /// Position term at the initial point and at the result.
    pub initial_position_loss: f64,
    pub final_position_loss: f64,
}

/// Projected Adam on `objective` from `x0`; angles are clamped into their
/// limits after every step.
pub fn solve_humanoid(objective: &HumanoidObjective, x0: Vec<f64>, cfg: &HumanoidConfig) -> Result<HumanoidRetarget> {
    cfg.optim.validate()?;
    let chain = &objective.chain;
    let mut x = x0;
    if x.len() != objective.dim() {
        return Err(Error::LengthMismatch(format!("{} parameters for {} expected", x.len(), objective.dim())));
    }
    for f in x.chunks_exact_mut(FRAME_DIM) {
        chain.clamp(&mut f[..HUMANOID_DOF]);
    }
    let initial_position_loss = objective.position_loss(&x);
    let mut adam = Adam::<f64>::new(x.len(), &cfg.optim);
    let mut grad = vec![0.0; x.len()];
    let mut trace = LossTrace::new(objective.term_names());
    for it in 0..cfg.optim.iterations {
        let e = objective.evaluate(&x, &mut grad);
        if !e.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        trace.push(&e);
        adam.step(&mut x, &grad, cfg.optim.lr_at(it));
        for f in x.chunks_exact_mut(FRAME_DIM) {
            chain.clamp(&mut f[..HUMANOID_DOF]);
        }
    }
    let final_position_loss = objective.position_loss(&x);
    let trajectory = HumanoidTrajectory {
        schema_version: SCHEMA_VERSION.into(),
        fps: DEFAULT_FPS,
        joint_names: chain.joints.iter().map(|j| j.name.clone()).collect(),
        frames: HumanoidObjective::frames(&x),
    };
    Ok(HumanoidRetarget { trajectory, trace, initial_position_loss, final_position_loss })
}

/// Fits a humanoid trajectory to a body pose track, starting from zero
/// angles with the base on the pelvis and the body's root rotation.
pub fn retarget_humanoid(
    poses: &[Pose],
    body: &ArticulatedBody,
    chain: &HumanoidChain,
    pairs: &JointPairMap,
    cfg: &HumanoidConfig,
) -> Result<HumanoidRetarget> {
    let objective = HumanoidObjective::from_poses(poses, body, chain, pairs, cfg.smooth_weight)?;
    let base: Vec<(Vec3, Vec3)> = poses.iter().map(|p| (p.root_orient, body.joint_positions(p)[0])).collect();
    let x0 = objective.initial_point(&base);
    solve_humanoid(&objective, x0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffopt::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_chain_is_valid_and_matches_rest_pose_roughly() {
        let chain = HumanoidChain::standard();
        chain.validate().unwrap();
        let pairs = JointPairMap::standard(&chain).unwrap();
        let body = ArticulatedBody::standard();
        let rest = body.rest_positions();
        let kin = chain.forward_kinematics(&HumanoidFrame { angles: vec![0.0; HUMANOID_DOF], ..Default::default() });
        for &(a, b) in &pairs.pairs {
            assert!((kin.keypoints[b] - rest[a]).norm() < 0.15, "{} vs {}", JOINT_NAMES[a], chain.keypoint_names()[b]);
        }
    }

    #[test]
    fn limits_and_duplicates_are_rejected() {
        let mut chain = HumanoidChain::standard();
        chain.joints[3].limits = [1.0, 1.0];
        assert!(chain.validate().is_err());
        let chain = HumanoidChain::standard();
        assert!(JointPairMap::from_names(&chain, [("left_wrist", "left_hand"), ("right_wrist", "left_hand")]).is_err());
        assert!(JointPairMap::from_names(&chain, [("tail", "left_hand")]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let chain = HumanoidChain::standard();
        let pairs = JointPairMap::standard(&chain).unwrap();
        let body = ArticulatedBody::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let poses: Vec<Pose> = (0..3)
            .map(|_| {
                let v: Vec<f64> = (0..Pose::DIM).map(|_| rng.random_range(-0.5..0.5)).collect();
                Pose::from_slice(&v)
            })
            .collect();
        let mut obj = HumanoidObjective::from_poses(&poses, &body, &chain, &pairs, 1.0).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-0.8..0.8)).collect();
            let r = grad_check(&mut obj, &x, 1e-3);
            assert!(r.passed, "{:?}", r.failures.first());
        }
    }
}
