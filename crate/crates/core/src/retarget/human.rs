use crate::body::{ArticulatedBody, Pose, ARM_JOINTS, NUM_JOINTS, PARENTS, TIPS_PER_HAND};
use crate::contacts::{hand_parts, NUM_HANDS};
use crate::diffopt::{acceleration_penalty, minimize, Evaluation, LossTrace, Objective, OptimConfig};
use crate::error::{Error, Result};
use crate::morph::ContactConstraint;
use crate::motion::{MotionSequence, ObjectTrack, MIN_OPT_FRAMES};
use crate::so3::{Mat3, Vec3};

use super::HumanWeights;

const AGENT_DIM: usize = Pose::DIM;
const FRAME_DIM: usize = 2 * AGENT_DIM;

fn is_arm(j: usize) -> bool {
    ARM_JOINTS.contains(&j)
}

/// Frozen nearest-neighbour structure of one hand's Chamfer term.
#[derive(Debug, Clone, Default)]
struct ChamferMatch {
    /// Constraint index nearest to each tip.
    tip_to_c: [usize; TIPS_PER_HAND],
    /// Tip index nearest to each constraint point.
    c_to_tip: Vec<usize>,
}

/// Joint fidelity, contact Chamfer, ground and smoothness terms over both
/// agents, frame-major `[agent 1 (69) | agent 2 (69)]`.
pub struct HumanObjective {
    bodies: [ArticulatedBody; 2],
    source_joints: Vec<[[Vec3; NUM_JOINTS]; 2]>,
    rotations: Vec<Mat3>,
    translations: Vec<Vec3>,
    constraint: ContactConstraint,
    masks: Vec<[bool; NUM_HANDS]>,
    weights: HumanWeights,
    matches: Vec<[ChamferMatch; NUM_HANDS]>,
    lowest: Vec<[(usize, bool); 2]>,
}

impl HumanObjective {
    pub fn new(
        source: &MotionSequence,
        target_track: &ObjectTrack,
        constraint: &ContactConstraint,
        masks: &[[bool; NUM_HANDS]],
        weights: HumanWeights,
    ) -> Result<Self> {
        source.validate()?;
        target_track.validate()?;
        let n = source.len();
        if n < MIN_OPT_FRAMES {
            return Err(Error::TrackTooShort { len: n, min: MIN_OPT_FRAMES });
        }
        if target_track.len() != n || masks.len() != n {
            return Err(Error::LengthMismatch(format!(
                "source has {n} frames, target track {}, contact masks {}",
                target_track.len(),
                masks.len()
            )));
        }
        if constraint.is_empty() {
            return Err(Error::EmptyConstraint);
        }
        let source_joints = (0..n)
            .map(|i| [0, 1].map(|a| source.bodies[a].joint_positions(&source.agents[a][i])))
            .collect();
        Ok(HumanObjective {
            bodies: source.bodies.clone(),
            source_joints,
            rotations: (0..n).map(|i| target_track.rotation(i)).collect(),
            translations: target_track.translations.clone(),
            constraint: constraint.clone(),
            masks: masks.to_vec(),
            weights,
            matches: vec![Default::default(); n],
            lowest: vec![[(0, false); 2]; n],
        })
    }

    pub fn initial_point(source: &MotionSequence) -> Vec<f64> {
        let mut x = Vec::with_capacity(source.len() * FRAME_DIM);
        for i in 0..source.len() {
            for a in 0..2 {
                source.agents[a][i].write_into(&mut x);
            }
        }
        x
    }

    pub fn decode(x: &[f64]) -> [Vec<Pose>; 2] {
        [0, 1].map(|a| {
            x.chunks_exact(FRAME_DIM)
                .map(|f| Pose::from_slice(&f[a * AGENT_DIM..(a + 1) * AGENT_DIM]).canonicalized())
                .collect()
        })
    }

    fn frames(&self) -> usize {
        self.rotations.len()
    }

    fn pose(x: &[f64], frame: usize, agent: usize) -> Pose {
        let o = frame * FRAME_DIM + agent * AGENT_DIM;
        Pose::from_slice(&x[o..o + AGENT_DIM])
    }

    fn local_tips(&self, kin: &crate::body::Kinematics, frame: usize, hand: usize) -> [Vec3; TIPS_PER_HAND] {
        let (agent, side) = hand_parts(hand);
        let rt = self.rotations[frame].transpose();
        self.bodies[agent].hand_tips(kin, side).map(|p| rt * (p - self.translations[frame]))
    }
}

impl Objective for HumanObjective {
    fn dim(&self) -> usize {
        self.frames() * FRAME_DIM
    }

    fn term_names(&self) -> Vec<String> {
        ["sr", "wr", "c", "spat", "smooth"].map(String::from).to_vec()
    }

    fn refresh(&mut self, x: &[f64]) {
        for i in 0..self.frames() {
            for a in 0..2 {
                let kin = self.bodies[a].forward_kinematics(&Self::pose(x, i, a));
                let (j, z) = kin
                    .positions
                    .iter()
                    .enumerate()
                    .map(|(j, p)| (j, p.z))
                    .min_by(|p, q| p.1.total_cmp(&q.1))
                    .expect("joints");
                self.lowest[i][a] = (j, z < 0.0);
                for side in 0..2 {
                    let hand = 2 * a + side;
                    let c = &self.constraint.hands[hand];
                    if c.is_empty() || !self.masks[i][hand] {
                        continue;
                    }
                    let tips = self.local_tips(&kin, i, hand);
                    let nearest = |p: &Vec3, set: &mut dyn Iterator<Item = Vec3>| {
                        set.enumerate()
                            .map(|(k, q)| (k, (q - p).norm_squared()))
                            .min_by(|u, v| u.1.total_cmp(&v.1))
                            .expect("non-empty")
                            .0
                    };
                    let m = &mut self.matches[i][hand];
                    m.tip_to_c = tips.map(|t| nearest(&t, &mut c.iter().copied()));
                    m.c_to_tip = c.iter().map(|q| nearest(q, &mut tips.iter().copied())).collect();
                }
            }
        }
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation {
        grad.fill(0.0);
        let w = &self.weights;
        let (mut sr, mut wr, mut lc, mut spat) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..self.frames() {
            for a in 0..2 {
                let body = &self.bodies[a];
                let pose = Self::pose(x, i, a);
                let kin = body.forward_kinematics(&pose);
                let p = &kin.positions;
                let src = &self.source_joints[i][a];
                let mut gp = [Vec3::zeros(); NUM_JOINTS];
                let mut gf = [Mat3::zeros(); NUM_JOINTS];
                for j in 0..NUM_JOINTS {
                    if is_arm(j) {
                        let par = PARENTS[j];
                        let e = (p[j] - p[par]) - (src[j] - src[par]);
                        sr += w.sr * e.norm_squared();
                        gp[j] += e * (2.0 * w.sr);
                        gp[par] -= e * (2.0 * w.sr);
                    } else {
                        let e = p[j] - src[j];
                        wr += w.wr * e.norm_squared();
                        gp[j] += e * (2.0 * w.wr);
                    }
                }
                let (low, active) = self.lowest[i][a];
                if active {
                    spat -= w.spat * p[low].z;
                    gp[low].z -= w.spat;
                }
                let r = &self.rotations[i];
                for side in 0..2 {
                    let hand = 2 * a + side;
                    let c = &self.constraint.hands[hand];
                    if c.is_empty() || !self.masks[i][hand] {
                        continue;
                    }
                    let m = &self.matches[i][hand];
                    let tips = self.local_tips(&kin, i, hand);
                    let mut g_local = [Vec3::zeros(); TIPS_PER_HAND];
                    let inv_h = 1.0 / TIPS_PER_HAND as f64;
                    for (t, &k) in m.tip_to_c.iter().enumerate() {
                        let d = tips[t] - c[k];
                        lc += w.c * inv_h * d.norm_squared();
                        g_local[t] += d * (2.0 * w.c * inv_h);
                    }
                    let inv_c = 1.0 / c.len() as f64;
                    for (q, &t) in c.iter().zip(&m.c_to_tip) {
                        let d = tips[t] - q;
                        lc += w.c * inv_c * d.norm_squared();
                        g_local[t] += d * (2.0 * w.c * inv_c);
                    }
                    let g_world = g_local.map(|g| r * g);
                    body.tips_backward(side, &g_world, &mut gp, &mut gf);
                }
                let g = body.backward(&pose, &kin, &gp, &gf);
                let o = i * FRAME_DIM + a * AGENT_DIM;
                g.write_into(&mut grad[o..o + AGENT_DIM]);
            }
        }
        let smooth = acceleration_penalty(x, FRAME_DIM, w.smooth, grad);
        Evaluation { total: sr + wr + lc + spat + smooth, terms: vec![sr, wr, lc, spat, smooth] }
    }
}

/// Human-stage output.
#[derive(Debug, Clone)]
pub struct HumanRetarget {
    pub agents: [Vec<Pose>; 2],
    pub trace: LossTrace,
}

/// Optimizes both agents' poses, starting from the source poses, so that
/// fingertips meet the contact constraint on frames where each hand's mask is
/// set while joints stay close to the source motion.
pub fn retarget_human_motion(
    source: &MotionSequence,
    target_track: &ObjectTrack,
    constraint: &ContactConstraint,
    masks: &[[bool; NUM_HANDS]],
    weights: &HumanWeights,
    cfg: &OptimConfig,
) -> Result<HumanRetarget> {
    let mut objective = HumanObjective::new(source, target_track, constraint, masks, *weights)?;
    let x0 = HumanObjective::initial_point(source);
    let res = minimize(&mut objective, &x0, cfg)?;
    Ok(HumanRetarget { agents: HumanObjective::decode(&res.best_x), trace: res.trace })
}
