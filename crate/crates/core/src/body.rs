//! Simplified articulated body: a 22-joint kinematic tree with explicit bone
//! lengths, rigid five-fingertip hands and a capsule surface.
//!
//! World frame is z-up with the ground at `z = 0`. In the rest pose the body
//! faces +y, its left side points to -x, and all joint frames are identity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{self, Mat3, Vec3};

pub const NUM_JOINTS: usize = 22;
pub const NUM_BONES: usize = 21;
pub const TIPS_PER_HAND: usize = 5;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck", "left_collar",
    "right_collar", "head", "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
];

/// Parent of each joint; the root is its own parent.
pub const PARENTS: [usize; NUM_JOINTS] =
    [0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19];

pub const PELVIS: usize = 0;
pub const LEFT_WRIST: usize = 20;
pub const RIGHT_WRIST: usize = 21;
pub const WRISTS: [usize; 2] = [LEFT_WRIST, RIGHT_WRIST];

/// Collar, shoulder, elbow and wrist of both arms.
pub const ARM_JOINTS: [usize; 8] = [13, 14, 16, 17, 18, 19, 20, 21];

/// Unit rest direction of the bone ending at each joint (index 0 unused).
fn rest_direction(joint: usize) -> Vec3 {
    let v = match joint {
        1 => Vec3::new(-0.55, 0.0, -0.83),
        2 => Vec3::new(0.55, 0.0, -0.83),
        3 | 6 | 9 | 12 | 15 => Vec3::z(),
        4 | 5 | 7 | 8 => -Vec3::z(),
        10 | 11 => Vec3::new(0.0, 0.8, -0.6),
        13 => Vec3::new(-0.6, 0.0, 0.8),
        14 => Vec3::new(0.6, 0.0, 0.8),
        16 | 18 | 20 => -Vec3::x(),
        17 | 19 | 21 => Vec3::x(),
        _ => Vec3::zeros(),
    };
    if v == Vec3::zeros() {
        v
    } else {
        v.normalize()
    }
}

/// Mirrors a left-side joint index to the right side and vice versa.
pub fn mirror_joint(joint: usize) -> usize {
    let name = JOINT_NAMES[joint];
    let other = if let Some(rest) = name.strip_prefix("left_") {
        format!("right_{rest}")
    } else if let Some(rest) = name.strip_prefix("right_") {
        format!("left_{rest}")
    } else {
        return joint;
    };
    JOINT_NAMES.iter().position(|n| *n == other).expect("mirrored joint exists")
}

/// Per-subject body: bone lengths and capsule radii indexed by child joint
/// (`[j - 1]` for joint `j`), fingertip offsets in the wrist frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedBody {
    pub bone_lengths: [f64; NUM_BONES],
    pub capsule_radii: [f64; NUM_BONES],
    /// `[left, right]`, thumb last.
    pub fingertip_offsets: [[Vec3; TIPS_PER_HAND]; 2],
}

/// Body pose: 21 local joint rotations, root orientation and translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub theta: [Vec3; NUM_BONES],
    pub root_orient: Vec3,
    pub root_transl: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose { theta: [Vec3::zeros(); NUM_BONES], root_orient: Vec3::zeros(), root_transl: Vec3::zeros() }
    }
}

impl Pose {
    pub const DIM: usize = 3 * NUM_BONES + 6;

    /// Flattens as `[theta (63) | root_orient (3) | root_transl (3)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::DIM);
        self.write_into(&mut out);
        out
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        for t in &self.theta {
            out.extend_from_slice(t.as_slice());
        }
        out.extend_from_slice(self.root_orient.as_slice());
        out.extend_from_slice(self.root_transl.as_slice());
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let v = |i: usize| Vec3::new(x[i], x[i + 1], x[i + 2]);
        Pose {
            theta: std::array::from_fn(|j| v(3 * j)),
            root_orient: v(3 * NUM_BONES),
            root_transl: v(3 * NUM_BONES + 3),
        }
    }

    pub fn is_valid(&self) -> bool {
        let ok = |v: &Vec3| v.iter().all(|c| c.is_finite());
        self.theta.iter().chain([&self.root_orient]).all(|v| ok(v) && v.norm() < std::f64::consts::PI)
            && ok(&self.root_transl)
    }

    /// Wraps every axis-angle vector into the canonical range.
    pub fn canonicalized(&self) -> Self {
        Pose {
            theta: self.theta.map(|t| so3::canonical(&t)),
            root_orient: so3::canonical(&self.root_orient),
            root_transl: self.root_transl,
        }
    }
}

/// Forward kinematics output.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub positions: [Vec3; NUM_JOINTS],
    /// Global joint frames.
    pub frames: [Mat3; NUM_JOINTS],
    /// Local rotations `exp(theta)`, root orientation at index 0.
    pub local: [Mat3; NUM_JOINTS],
}

/// Gradient with respect to the pose parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGrad {
    pub theta: [Vec3; NUM_BONES],
    pub root_orient: Vec3,
    pub root_transl: Vec3,
}

impl PoseGrad {
    pub fn write_into(&self, out: &mut [f64]) {
        for (j, t) in self.theta.iter().enumerate() {
            out[3 * j..3 * j + 3].copy_from_slice(t.as_slice());
        }
        out[63..66].copy_from_slice(self.root_orient.as_slice());
        out[66..69].copy_from_slice(self.root_transl.as_slice());
    }
}

/// A bone's collision volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn distance_to_axis(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 { ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.a + ab * t)).norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.distance_to_axis(p) < self.radius
    }

    pub fn volume(&self) -> f64 {
        let r = self.radius;
        std::f64::consts::PI * r * r * ((self.b - self.a).norm() + 4.0 / 3.0 * r)
    }
}

impl ArticulatedBody {
    /// Default adult proportions (about 1.7 m tall).
    pub fn standard() -> Self {
        let len = |j: usize| match j {
            1 | 2 => 0.11,
            3 => 0.11,
            6 => 0.13,
            9 => 0.06,
            4 | 5 | 7 | 8 => 0.40,
            10 | 11 => 0.12,
            12 => 0.20,
            15 => 0.12,
            13 | 14 => 0.13,
            16 | 17 => 0.10,
            18 | 19 => 0.27,
            20 | 21 => 0.25,
            _ => unreachable!(),
        };
        let radius = |j: usize| match j {
            1 | 2 => 0.07,
            3 | 6 | 9 => 0.10,
            4 | 5 => 0.07,
            7 | 8 => 0.05,
            10 | 11 => 0.04,
            12 => 0.05,
            15 => 0.09,
            13 | 14 => 0.05,
            16 | 17 => 0.05,
            18 | 19 => 0.045,
            20 | 21 => 0.03,
            _ => unreachable!(),
        };
        let left: [Vec3; TIPS_PER_HAND] = [
            Vec3::new(-0.08, 0.03, -0.05),
            Vec3::new(-0.08, 0.01, -0.05),
            Vec3::new(-0.08, -0.01, -0.05),
            Vec3::new(-0.08, -0.03, -0.05),
            Vec3::new(-0.03, 0.05, -0.05),
        ];
        let right = left.map(|v| Vec3::new(-v.x, v.y, v.z));
        ArticulatedBody {
            bone_lengths: std::array::from_fn(|i| len(i + 1)),
            capsule_radii: std::array::from_fn(|i| radius(i + 1)),
            fingertip_offsets: [left, right],
        }
    }

    /// Uniformly scaled copy (bone lengths, radii and hand offsets).
    pub fn scaled(&self, s: f64) -> Self {
        ArticulatedBody {
            bone_lengths: self.bone_lengths.map(|l| l * s),
            capsule_radii: self.capsule_radii.map(|r| r * s),
            fingertip_offsets: self.fingertip_offsets.map(|h| h.map(|v| v * s)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for j in 1..NUM_JOINTS {
            let (l, r) = (self.bone_lengths[j - 1], self.capsule_radii[j - 1]);
            if !(l > 0.01 && l < 1.0) {
                return Err(Error::Invalid(format!("bone {} length {l} outside (0.01, 1.0) m", JOINT_NAMES[j])));
            }
            if !(r > 0.01 && r < 0.2) {
                return Err(Error::Invalid(format!("bone {} radius {r} outside (0.01, 0.2) m", JOINT_NAMES[j])));
            }
        }
        if self.fingertip_offsets.iter().flatten().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Invalid("non-finite fingertip offset".into()));
        }
        Ok(())
    }

    /// Bone vector from the parent joint to `joint` in the parent frame.
    pub fn offset(&self, joint: usize) -> Vec3 {
        rest_direction(joint) * self.bone_lengths[joint - 1]
    }

    /// Joint positions of the zero pose at the origin.
    pub fn rest_positions(&self) -> [Vec3; NUM_JOINTS] {
        let mut p = [Vec3::zeros(); NUM_JOINTS];
        for j in 1..NUM_JOINTS {
            p[j] = p[PARENTS[j]] + self.offset(j);
        }
        p
    }

    /// Height of the pelvis above the lowest rest joint.
    pub fn pelvis_height(&self) -> f64 {
        -self.rest_positions().iter().map(|p| p.z).fold(0.0, f64::min)
    }

    pub fn forward_kinematics(&self, pose: &Pose) -> Kinematics {
        let mut local = [Mat3::identity(); NUM_JOINTS];
        local[0] = so3::exp(&pose.root_orient);
        for j in 1..NUM_JOINTS {
            local[j] = so3::exp(&pose.theta[j - 1]);
        }
        let mut positions = [Vec3::zeros(); NUM_JOINTS];
        let mut frames = [Mat3::identity(); NUM_JOINTS];
        positions[0] = pose.root_transl;
        frames[0] = local[0];
        for j in 1..NUM_JOINTS {
            let p = PARENTS[j];
            positions[j] = positions[p] + frames[p] * self.offset(j);
            frames[j] = frames[p] * local[j];
        }
        Kinematics { positions, frames, local }
    }

    pub fn joint_positions(&self, pose: &Pose) -> [Vec3; NUM_JOINTS] {
        self.forward_kinematics(pose).positions
    }

    /// Reverse-mode pass through FK given gradients on joint positions and
    /// global frames.
    pub fn backward(&self, pose: &Pose, kin: &Kinematics, grad_pos: &[Vec3; NUM_JOINTS], grad_frames: &[Mat3; NUM_JOINTS]) -> PoseGrad {
        let mut gp = *grad_pos;
        let mut gf = *grad_frames;
        let mut theta = [Vec3::zeros(); NUM_BONES];
        for j in (1..NUM_JOINTS).rev() {
            let p = PARENTS[j];
            let gpj = gp[j];
            gp[p] += gpj;
            gf[p] += gpj * self.offset(j).transpose() + gf[j] * kin.local[j].transpose();
            let g_local = kin.frames[p].transpose() * gf[j];
            theta[j - 1] = so3::pullback(&pose.theta[j - 1], &kin.local[j], &g_local);
        }
        PoseGrad { theta, root_orient: so3::pullback(&pose.root_orient, &kin.local[0], &gf[0]), root_transl: gp[0] }
    }

    /// Fingertips of one hand (0 = left, 1 = right).
    pub fn hand_tips(&self, kin: &Kinematics, hand: usize) -> [Vec3; TIPS_PER_HAND] {
        let w = WRISTS[hand];
        self.fingertip_offsets[hand].map(|o| kin.positions[w] + kin.frames[w] * o)
    }

    /// Ten fingertips, left hand first.
    pub fn fingertip_positions(&self, pose: &Pose) -> [Vec3; 2 * TIPS_PER_HAND] {
        let kin = self.forward_kinematics(pose);
        let [l, r] = [0, 1].map(|h| self.hand_tips(&kin, h));
        std::array::from_fn(|i| if i < TIPS_PER_HAND { l[i] } else { r[i - TIPS_PER_HAND] })
    }

    /// Accumulates the FK gradients of a loss given gradients on one hand's tips.
    pub fn tips_backward(&self, hand: usize, grad_tips: &[Vec3], grad_pos: &mut [Vec3; NUM_JOINTS], grad_frames: &mut [Mat3; NUM_JOINTS]) {
        let w = WRISTS[hand];
        for (g, o) in grad_tips.iter().zip(&self.fingertip_offsets[hand]) {
            grad_pos[w] += g;
            grad_frames[w] += g * o.transpose();
        }
    }

    pub fn capsules_from(&self, kin: &Kinematics) -> Vec<Capsule> {
        (1..NUM_JOINTS)
            .map(|j| Capsule { a: kin.positions[PARENTS[j]], b: kin.positions[j], radius: self.capsule_radii[j - 1] })
            .collect()
    }

    pub fn surface_capsules(&self, pose: &Pose) -> Vec<Capsule> {
        self.capsules_from(&self.forward_kinematics(pose))
    }

    pub fn to_json(&self) -> BodyJson {
        let named = |v: &[f64; NUM_BONES]| (1..NUM_JOINTS).map(|j| (JOINT_NAMES[j].to_string(), v[j - 1])).collect();
        BodyJson {
            bone_lengths: named(&self.bone_lengths),
            capsule_radii: named(&self.capsule_radii),
            fingertip_offsets: self.fingertip_offsets.iter().flatten().map(|v| [v.x, v.y, v.z]).collect(),
        }
    }

    pub fn from_json(json: &BodyJson) -> Result<Self> {
        let lookup = |map: &BTreeMap<String, f64>, what: &str| -> Result<[f64; NUM_BONES]> {
            if let Some(k) = map.keys().find(|k| !JOINT_NAMES[1..].contains(&k.as_str())) {
                return Err(Error::Invalid(format!("unknown bone {k:?} in {what}")));
            }
            let mut out = [0.0; NUM_BONES];
            for j in 1..NUM_JOINTS {
                out[j - 1] = *map
                    .get(JOINT_NAMES[j])
                    .ok_or_else(|| Error::Invalid(format!("{what} missing bone {:?}", JOINT_NAMES[j])))?;
            }
            Ok(out)
        };
        if json.fingertip_offsets.len() != 2 * TIPS_PER_HAND {
            return Err(Error::LengthMismatch(format!(
                "{} fingertip offsets, expected {}",
                json.fingertip_offsets.len(),
                2 * TIPS_PER_HAND
            )));
        }
        let tip = |i: usize| Vec3::from(json.fingertip_offsets[i]);
        let body = ArticulatedBody {
            bone_lengths: lookup(&json.bone_lengths, "bone_lengths")?,
            capsule_radii: lookup(&json.capsule_radii, "capsule_radii")?,
            fingertip_offsets: [std::array::from_fn(tip), std::array::from_fn(|i| tip(i + TIPS_PER_HAND))],
        };
        body.validate()?;
        Ok(body)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json: BodyJson =
            serde_json::from_str(&text).map_err(|e| Error::parse(format!("{}:{}", path.display(), e.line()), e.to_string()))?;
        Self::from_json(&json)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).expect("body serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl Default for ArticulatedBody {
    fn default() -> Self {
        Self::standard()
    }
}

/// On-disk body description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyJson {
    pub bone_lengths: BTreeMap<String, f64>,
    pub capsule_radii: BTreeMap<String, f64>,
    pub fingertip_offsets: Vec<[f64; 3]>,
}
