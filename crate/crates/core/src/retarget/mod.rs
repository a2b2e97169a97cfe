//! Contact-guided retargeting: object motion first, then both agents' poses,
//! plus the pose-fitting loss family used to fit the skeleton to markers.

mod fit;
mod human;
mod object;

use serde::{Deserialize, Serialize};

pub use fit::{fit_pose_sequence, FitObjective, FitResult, FitTargets, ORIENTATION_JOINTS};
pub use human::{retarget_human_motion, HumanObjective, HumanRetarget};
pub use object::{min_heights, retarget_object_motion, ObjectObjective, ObjectRetarget, HEIGHT_SAMPLES};

use crate::diffopt::OptimConfig;

/// Object-stage loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectWeights {
    pub f_rot: f64,
    pub f_trans: f64,
    pub spat: f64,
    pub smooth: f64,
}

impl Default for ObjectWeights {
    fn default() -> Self {
        ObjectWeights { f_rot: 500.0, f_trans: 0.005, spat: 0.01, smooth: 1.0 }
    }
}

/// Human-stage loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanWeights {
    pub sr: f64,
    pub wr: f64,
    pub c: f64,
    pub spat: f64,
    pub smooth: f64,
}

impl Default for HumanWeights {
    fn default() -> Self {
        HumanWeights { sr: 0.1, wr: 0.003, c: 1000.0, spat: 0.01, smooth: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub object: ObjectWeights,
    pub human: HumanWeights,
}

/// Pose-fitting loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitWeights {
    pub body: f64,
    pub hand: f64,
    pub j3d: f64,
    pub h3d: f64,
    pub ori: f64,
    pub smooth: f64,
    pub contact: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        FitWeights { body: 1e-3, hand: 1e-4, j3d: 1.0, h3d: 2.0, ori: 0.2, smooth: 20.0, contact: 2.0 }
    }
}

/// Adam learning rate of both retargeting stages.
pub const LEARNING_RATE: f64 = 0.01;
pub const OBJECT_ITERATIONS: usize = 1000;
pub const HUMAN_ITERATIONS: usize = 1500;
pub const FIT_ITERATIONS: usize = 3000;
/// Learning rate at the last iteration relative to the first.
pub const FINAL_LR_SCALE: f64 = 1e-4;

pub fn object_optim() -> OptimConfig {
    OptimConfig { final_lr_scale: FINAL_LR_SCALE, ..OptimConfig::new(LEARNING_RATE, OBJECT_ITERATIONS) }
}

pub fn human_optim() -> OptimConfig {
    OptimConfig { final_lr_scale: FINAL_LR_SCALE, ..OptimConfig::new(LEARNING_RATE, HUMAN_ITERATIONS) }
}

pub fn fit_optim() -> OptimConfig {
    OptimConfig::new(LEARNING_RATE, FIT_ITERATIONS)
}

/// `sign` with `sign(0) = 0`, the subgradient used for L1 terms.
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
