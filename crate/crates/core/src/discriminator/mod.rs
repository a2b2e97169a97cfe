//! Pose-plausibility ranking: negative synthesis by object-pose noise,
//! margin-ranking training and scoring.

mod mlp;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use mlp::{Mlp, Real, Tape};

use crate::body::{ArticulatedBody, Pose, NUM_JOINTS};
use crate::contacts::{detect_contacts, extract_candidate, CONTACT_THRESHOLD};
use crate::diffopt::{Adam, Evaluation, Objective, OptimConfig};
use crate::error::{Error, Result};
use crate::geometry::{Bvh, TriMesh};
use crate::morph::ContactConstraint;
use crate::motion::{MotionSequence, ObjectTrack};
use crate::retarget::{retarget_human_motion, HumanWeights};
use crate::so3::{self, Mat3, Vec3};

/// Joints 1..22 relative to the pelvis.
pub const FEATURE_DIM: usize = 3 * (NUM_JOINTS - 1);
pub const HIDDEN: [usize; 2] = [256, 256];
pub const LEARNING_RATE: f64 = 2e-4;
pub const EPOCHS: usize = 1000;
/// Pairs below which training is refused.
pub const MIN_PAIRS: usize = 100;

/// Ranges of the object-pose noise magnitudes; signs are drawn separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Degrees, per Euler component.
    pub rot_range: [f64; 2],
    /// Meters, per axis.
    pub trans_range: [f64; 2],
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { rot_range: [20.0, 60.0], trans_range: [0.2, 0.5] }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("rot_range", self.rot_range), ("trans_range", self.trans_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Invalid(format!("{name} [{lo}, {hi}] must satisfy 0 < lo < hi")));
            }
        }
        Ok(())
    }

    /// Draws one noise record: every component's magnitude is uniform in its
    /// range, with an independent random sign.
    pub fn sample(&self, rng: &mut impl Rng) -> PoseNoise {
        let mut draw = |[lo, hi]: [f64; 2]| {
            let m = if lo < hi { rng.random_range(lo..hi) } else { lo };
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let rot_deg = [0; 3].map(|_| draw(self.rot_range));
        let trans = [0; 3].map(|_| draw(self.trans_range));
        PoseNoise { rot_deg, trans }
    }
}

/// A 6D object-pose perturbation: Euler angles (degrees, x then y then z)
/// and a translation (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseNoise {
    pub rot_deg: [f64; 3],
    pub trans: [f64; 3],
}

impl PoseNoise {
    pub fn rotation(&self) -> Mat3 {
        let [a, b, g] = self.rot_deg.map(f64::to_radians);
        so3::exp(&Vec3::new(0.0, 0.0, g)) * so3::exp(&Vec3::new(0.0, b, 0.0)) * so3::exp(&Vec3::new(a, 0.0, 0.0))
    }

    /// The track with every frame rotated about the object origin and shifted.
    pub fn apply(&self, track: &ObjectTrack) -> ObjectTrack {
        let r = self.rotation();
        let t = Vec3::from(self.trans);
        ObjectTrack {
            rotations: (0..track.len()).map(|i| so3::log(&(r * track.rotation(i)))).collect(),
            translations: track.translations.iter().map(|p| p + t).collect(),
        }
    }
}

/// Required score gap between a positive and its noised negative.
pub fn margin(delta: &PoseNoise) -> f64 {
    delta.rot_deg.iter().map(|a| a.abs()).sum::<f64>() / 10.0 + delta.trans.iter().map(|x| x.abs()).sum::<f64>() * 10.0
}

/// `-log sigmoid(r_pos - r_neg - m)` and its derivative in `r_pos`.
pub fn ranking_loss(r_pos: f64, r_neg: f64, m: f64) -> (f64, f64) {
    let z = r_pos - r_neg - m;
    let loss = if z > 0.0 { (-z).exp().ln_1p() } else { -z + z.exp().ln_1p() };
    (loss, -1.0 / (1.0 + z.exp()))
}

/// Joint positions relative to the pelvis with the root rotation removed.
pub fn pose_features(body: &ArticulatedBody, pose: &Pose) -> [f64; FEATURE_DIM] {
    let local = Pose { theta: pose.theta, root_orient: Vec3::zeros(), root_transl: Vec3::zeros() };
    let p = body.joint_positions(&local);
    std::array::from_fn(|k| {
        let j = k / 3 + 1;
        p[j][k % 3] - p[0][k % 3]
    })
}

/// Output of [`make_negative`].
#[derive(Debug, Clone)]
pub struct Negative {
    pub agents: [Vec<Pose>; 2],
    pub delta: PoseNoise,
}

/// Source contacts of `seq` on `mesh` as a constraint plus per-frame masks.
pub fn source_contacts(seq: &MotionSequence, mesh: &TriMesh) -> (ContactConstraint, Vec<[bool; 4]>) {
    let bvh = Bvh::new(mesh);
    let cand = extract_candidate(seq, mesh, &bvh, CONTACT_THRESHOLD);
    let constraint = ContactConstraint { hands: cand.hands.map(|h| h.iter().map(|&v| mesh.vertices[v as usize]).collect()) };
    (constraint, detect_contacts(seq, &bvh, CONTACT_THRESHOLD))
}

/// Perturbs the object track by a sampled pose noise and re-solves the human
/// stage against the original contacts.
pub fn make_negative(
    seq: &MotionSequence,
    mesh: &TriMesh,
    noise: &NoiseSpec,
    seed: u64,
    weights: &HumanWeights,
    cfg: &OptimConfig,
) -> Result<Negative> {
    seq.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = noise.sample(&mut rng);
    let (constraint, masks) = source_contacts(seq, mesh);
    let track = delta.apply(&seq.object);
    let out = retarget_human_motion(seq, &track, &constraint, &masks, weights, cfg)?;
    Ok(Negative { agents: out.agents, delta })
}

/// One training example: canonical features of a plausible pose, of its
/// noised counterpart, and the noise that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingPair {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub delta: PoseNoise,
}

/// Pairs for every frame where any hand is in contact, one per agent.
pub fn pairs_from_negative(seq: &MotionSequence, masks: &[[bool; 4]], negative: &Negative) -> Vec<RankingPair> {
    let mut pairs = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        if !m.iter().any(|&c| c) {
            continue;
        }
        for a in 0..2 {
            pairs.push(RankingPair {
                pos: pose_features(&seq.bodies[a], &seq.agents[a][i]).to_vec(),
                neg: pose_features(&seq.bodies[a], &negative.agents[a][i]).to_vec(),
                delta: negative.delta,
            });
        }
    }
    pairs
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<RankingPair>> {
    let pairs: Vec<RankingPair> = crate::io::read_json(path)?;
    if let Some(p) = pairs.iter().find(|p| p.pos.len() != FEATURE_DIM || p.neg.len() != FEATURE_DIM) {
        return Err(Error::Invalid(format!("pair feature length {} / {}, expected {FEATURE_DIM}", p.pos.len(), p.neg.len())));
    }
    Ok(pairs)
}

pub fn write_pairs(pairs: &[RankingPair], path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_json(path, &pairs)
}

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: LEARNING_RATE, epochs: EPOCHS, batch_size: 128, hidden: HIDDEN.to_vec(), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("learning_rate, epochs and batch_size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Invalid("hidden layer of width 0".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![FEATURE_DIM];
        d.extend(&self.hidden);
        d.push(1);
        d
    }
}

/// Scores canonicalized poses; higher means more plausible.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingModel {
    pub net: Mlp<f32>,
}

const MAGIC: &[u8; 4] = b"RNK1";

impl RankingModel {
    pub fn new(dims: &[usize], seed: u64) -> Self {
        RankingModel { net: Mlp::new(dims, seed) }
    }

    pub fn score_features(&self, features: &[f64]) -> f64 {
        let x = Array2::from_shape_fn((1, features.len()), |(_, c)| features[c] as f32);
        self.net.score_rows(x.view())[0] as f64
    }

    pub fn score(&self, body: &ArticulatedBody, pose: &Pose) -> f64 {
        self.score_features(&pose_features(body, pose))
    }

    /// Mean score over all frames and both agents.
    pub fn score_sequence(&self, seq: &MotionSequence) -> f64 {
        let n = seq.len();
        let mut rows = Array2::<f32>::zeros((2 * n, FEATURE_DIM));
        for a in 0..2 {
            for (i, pose) in seq.agents[a].iter().enumerate() {
                let f = pose_features(&seq.bodies[a], pose);
                for (c, v) in f.iter().enumerate() {
                    rows[(a * n + i, c)] = *v as f32;
                }
            }
        }
        let scores = self.net.score_rows(rows.view());
        // f64 accumulation in row order keeps the mean reproducible
        scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len().max(1) as f64
    }

    /// Fraction of pairs whose positive outscores its negative.
    pub fn ranking_accuracy(&self, pairs: &[RankingPair]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let (pos, neg, _) = stack::<f32>(pairs);
        let (sp, sn) = (self.net.score_rows(pos.view()), self.net.score_rows(neg.view()));
        sp.iter().zip(sn.iter()).filter(|(p, n)| p > n).count() as f64 / pairs.len() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.net.dims();
        let mut out = Vec::with_capacity(8 + 4 * (dims.len() + self.net.params().len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for p in self.net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let bad = |msg: &str| Error::parse(source, msg);
        let mut r = bytes;
        let mut word = || -> Result<[u8; 4]> {
            let mut w = [0u8; 4];
            r.read_exact(&mut w).map_err(|_| bad("truncated checkpoint"))?;
            Ok(w)
        };
        if &word()? != MAGIC {
            return Err(bad("bad magic, expected RNK1"));
        }
        let n = u32::from_le_bytes(word()?) as usize;
        if !(2..=64).contains(&n) {
            return Err(bad("implausible layer count"));
        }
        let dims = (0..n).map(|_| word().map(|w| u32::from_le_bytes(w) as usize)).collect::<Result<Vec<_>>>()?;
        if dims[0] != FEATURE_DIM || dims[n - 1] != 1 {
            return Err(bad("layer sizes must start at the feature size and end at 1"));
        }
        let count = Mlp::<f32>::param_count(&dims);
        let params = (0..count).map(|_| word().map(f32::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        if !r.is_empty() {
            return Err(bad("trailing bytes after weights"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite weight"));
        }
        let net = Mlp::from_parts(dims, params).ok_or_else(|| bad("inconsistent layer sizes"))?;
        Ok(RankingModel { net })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

fn stack<T: Real>(pairs: &[RankingPair]) -> (Array2<T>, Array2<T>, Array1<T>) {
    let n = pairs.len();
    let cast = |v: f64| T::from(v).expect("finite");
    let pos = Array2::from_shape_fn((n, FEATURE_DIM), |(r, c)| cast(pairs[r].pos[c]));
    let neg = Array2::from_shape_fn((n, FEATURE_DIM), |(r, c)| cast(pairs[r].neg[c]));
    let m = Array1::from_shape_fn(n, |r| cast(margin(&pairs[r].delta)));
    (pos, neg, m)
}

/// Mean ranking loss of a batch and its parameter gradient (accumulated).
fn batch_loss<T: Real>(net: &Mlp<T>, pos: ArrayView2<'_, T>, neg: ArrayView2<'_, T>, m: &[T], grad: &mut [T]) -> f64 {
    let n = pos.nrows();
    let rows = ndarray::concatenate(ndarray::Axis(0), &[pos, neg]).expect("same width");
    let (scores, tape) = net.forward(rows.view());
    let mut d_out = Array1::<T>::zeros(2 * n);
    let mut total = 0.0;
    let inv = 1.0 / n as f64;
    for k in 0..n {
        let (l, d) = ranking_loss(
            scores[k].to_f64().expect("finite"),
            scores[n + k].to_f64().expect("finite"),
            m[k].to_f64().expect("finite"),
        );
        total += l * inv;
        d_out[k] = T::from(d * inv).expect("finite");
        d_out[n + k] = T::from(-d * inv).expect("finite");
    }
    net.backward(&tape, d_out.view(), grad);
    total
}

/// Trained model and the mean training loss of every epoch.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: RankingModel,
    pub epoch_losses: Vec<f64>,
}

/// Minimizes the mean ranking loss with Adam over seeded shuffled
/// mini-batches.
pub fn train(pairs: &[RankingPair], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if pairs.len() < MIN_PAIRS {
        return Err(Error::Invalid(format!("{} training pairs, need at least {MIN_PAIRS}", pairs.len())));
    }
    let (pos, neg, m) = stack::<f32>(pairs);
    let mut net = Mlp::<f32>::new(&cfg.dims(), cfg.seed);
    let adam_cfg = OptimConfig::new(cfg.learning_rate, cfg.epochs);
    let mut adam = Adam::<f32>::new(net.params().len(), &adam_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut grad = vec![0f32; net.params().len()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let lr = cfg.learning_rate as f32;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bp = pos.select(ndarray::Axis(0), chunk);
            let bn = neg.select(ndarray::Axis(0), chunk);
            let bm: Vec<f32> = chunk.iter().map(|&k| m[k]).collect();
            grad.fill(0.0);
            let l = batch_loss(&net, bp.view(), bn.view(), &bm, &mut grad);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: epoch });
            }
            sum += l * chunk.len() as f64;
            adam.step(net.params_mut(), &grad, lr);
        }
        epoch_losses.push(sum / pairs.len() as f64);
    }
    Ok(Trained { model: RankingModel { net }, epoch_losses })
}

/// Mean ranking loss over fixed pairs as a function of the network weights,
/// in double precision.
pub struct RankingObjective {
    dims: Vec<usize>,
    pos: Array2<f64>,
    neg: Array2<f64>,
    margins: Vec<f64>,
}

impl RankingObjective {
    pub fn new(dims: &[usize], pairs: &[RankingPair]) -> Self {
        let (pos, neg, m) = stack::<f64>(pairs);
        RankingObjective { dims: dims.to_vec(), pos, neg, margins: m.to_vec() }
    }
}

impl Objective for RankingObjective {
    fn dim(&self) -> usize {
        Mlp::<f64>::param_count(&self.dims)
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation {
        grad.fill(0.0);
        let net = Mlp::from_parts(self.dims.clone(), x.to_vec()).expect("parameter count");
        Evaluation::single(batch_loss(&net, self.pos.view(), self.neg.view(), &self.margins, grad))
    }
}
