//! Scripted two-agent scenes around a box-like object, used as source motions.
//!
//! Agents stand at the two ends of the object's x extent and grip the side
//! faces (normal ±y) with fingers pointing down. Roots follow the object's
//! planar motion rigidly; legs and spine stay at rest; arms are solved per
//! frame by damped least squares on the fingertip targets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{ArticulatedBody, Pose, NUM_BONES, TIPS_PER_HAND};
use crate::contacts::{CONTACT_THRESHOLD, NUM_HANDS};
use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::so3::{self, Mat3, Vec3};

use super::{Label, MotionSequence, ObjectTrack, DEFAULT_FPS};

/// Distance of a released hand from the face (m).
const PRE_GRASP: f64 = 0.2;
/// Gap between the object's end face and an agent's pelvis (m).
const STANDOFF: f64 = 0.25;
/// Grip position measured in from the end face along x (m).
const GRIP_INSET: f64 = 0.10;
/// Wrist height below the top face (m).
const WRIST_DROP: f64 = 0.04;
/// Foot clearance above the ground (m).
const FOOT_CLEARANCE: f64 = 0.04;
/// Sideways elbow offset from the wrist in the agent frame (m). Keeps the
/// arms clear of the side faces when the object grows.
const ELBOW_FLARE: f64 = 0.15;
/// Arm solves on the first frame.
const FIRST_FRAME_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// Both agents lift and carry the object together.
    Carry,
    /// Agent 1 carries, hands over, agent 2 carries on.
    Handover,
}

impl ToyKind {
    pub fn label(self) -> Label {
        match self {
            ToyKind::Carry => Label::Move1,
            ToyKind::Handover => Label::Pass,
        }
    }
}

/// A generated scene with its scripted contact labels.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub sequence: MotionSequence,
    pub contacts: Vec<[bool; NUM_HANDS]>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Progress of `frame` through the half-open window `[a, b)`.
fn ramp(frame: usize, a: usize, b: usize) -> f64 {
    if frame < a {
        0.0
    } else if frame + 1 >= b {
        1.0
    } else {
        smoothstep((frame - a) as f64 / (b - 1 - a).max(1) as f64)
    }
}

/// Keeps scripted offsets clear of the contact threshold so labels are
/// unambiguous under small IK residuals.
fn clear_of_threshold(offset: f64) -> f64 {
    if (offset - CONTACT_THRESHOLD).abs() < 0.01 {
        if offset < CONTACT_THRESHOLD {
            CONTACT_THRESHOLD - 0.01
        } else {
            CONTACT_THRESHOLD + 0.01
        }
    } else {
        offset
    }
}

struct Grip {
    /// Wrist rotation in the object frame.
    rotation: Mat3,
    wrist: Vec3,
    normal: Vec3,
}

fn grip(half: &Vec3, agent: usize, side: usize, inset: f64) -> Grip {
    // Agent 1 stands at -x facing +x, its left hand on the +y face.
    let sx = if agent == 0 { -1.0 } else { 1.0 };
    let ny = if (agent == 0) == (side == 0) { 1.0 } else { -1.0 };
    let normal = Vec3::new(0.0, ny, 0.0);
    let down = -Vec3::z();
    let x_axis = if side == 0 { -down } else { down };
    let z_axis = normal;
    let y_axis = z_axis.cross(&x_axis);
    let rotation = Mat3::from_columns(&[x_axis, y_axis, z_axis]);
    let wrist = Vec3::new(sx * (half.x - inset), ny * (half.y + 0.05), half.z - WRIST_DROP);
    Grip { rotation, wrist, normal }
}

fn bezier(p: &[Vec3; 4], u: f64) -> Vec3 {
    let v = 1.0 - u;
    p[0] * (v * v * v) + p[1] * (3.0 * v * v * u) + p[2] * (3.0 * v * u * u) + p[3] * (u * u * u)
}

/// Arm joints (collar, shoulder, elbow, wrist) of each side.
const ARM_CHAIN: [[usize; 4]; 2] = [[13, 16, 18, 20], [14, 17, 19, 21]];

/// Damped least squares on one arm: fingertip targets plus a weak elbow hint
/// and a weak pull towards the previous solution.
fn solve_arm(body: &ArticulatedBody, pose: &mut Pose, side: usize, tips: &[Vec3; TIPS_PER_HAND], elbow_hint: &Vec3) {
    const HINT_WEIGHT: f64 = 0.05;
    const PRIOR_WEIGHT: f64 = 0.01;
    let chain = ARM_CHAIN[side];
    let prior: Vec<f64> = chain.iter().flat_map(|&j| pose.theta[j - 1].iter().copied().collect::<Vec<_>>()).collect();
    let residual = |x: &[f64]| -> DVector<f64> {
        let mut p = *pose;
        for (k, &j) in chain.iter().enumerate() {
            p.theta[j - 1] = Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        }
        let kin = body.forward_kinematics(&p);
        let got = body.hand_tips(&kin, side);
        let mut r = Vec::with_capacity(3 * TIPS_PER_HAND + 3 + 12);
        for (g, t) in got.iter().zip(tips) {
            r.extend((g - t).iter());
        }
        r.extend(((kin.positions[chain[2]] - elbow_hint) * HINT_WEIGHT).iter());
        r.extend(x.iter().zip(&prior).map(|(a, b)| (a - b) * PRIOR_WEIGHT));
        DVector::from_vec(r)
    };
    let mut x = prior.clone();
    let mut r = residual(&x);
    let mut mu = 1e-3;
    for _ in 0..100 {
        let h = 1e-7;
        let mut jac = DMatrix::zeros(r.len(), 12);
        for c in 0..12 {
            let mut xp = x.clone();
            xp[c] += h;
            let rp = residual(&xp);
            jac.set_column(c, &((rp - &r) / h));
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for d in 0..12 {
                a[(d, d)] += mu * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = a.lu().solve(&(-&g)) else { break };
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rc = residual(&cand);
            if rc.norm_squared() < r.norm_squared() {
                let small = step.norm() < 1e-12;
                x = cand;
                r = rc;
                mu = (mu * 0.3).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    for (k, &j) in chain.iter().enumerate() {
        pose.theta[j - 1] = so3::canonical(&Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]));
    }
}

/// Generates a deterministic scripted scene of `frames` frames around
/// `object` (centred at its origin, long axis x, up axis z).
pub fn generate_toy_scene(kind: ToyKind, frames: usize, object: &TriMesh, seed: u64) -> Result<ToyScene> {
    if frames < 10 {
        return Err(Error::TrackTooShort { len: frames, min: 10 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = object.aabb();
    let half = bounds.extent() * 0.5;
    let inset = GRIP_INSET + 0.01 * rng.random_range(-2i32..=2) as f64;
    let end_shift = Vec3::new(rng.random_range(0.4..0.7), rng.random_range(-0.3..0.3), 0.05);
    let end_yaw = rng.random_range(-25f64..25.0).to_radians();
    let start = Vec3::new(0.0, 0.0, 0.95) - bounds.center();
    let path = [start, start + Vec3::new(0.25, 0.0, 0.05), start + end_shift - Vec3::new(0.25, 0.0, 0.0), start + end_shift];

    let n = frames;
    let at = |f: f64| (f * n as f64).round() as usize;
    // Per-frame path progress and per-agent grip offsets (0 = gripping).
    let mut progress = vec![0.0; n];
    let mut offsets = vec![[0.0f64; 2]; n];
    match kind {
        ToyKind::Carry => {
            let (reach, release) = (at(0.25), n - at(0.25));
            for i in 0..n {
                progress[i] = ramp(i, reach, release);
                let o = PRE_GRASP * (1.0 - ramp(i, 0, reach)).max(ramp(i, release, n));
                offsets[i] = [o, o];
            }
        }
        ToyKind::Handover => {
            let (r1, m1, r2, l1, m2, l2) = (at(0.15), at(0.4), at(0.55), at(0.7), at(0.9), n);
            for i in 0..n {
                progress[i] = 0.5 * ramp(i, r1, m1) + 0.5 * ramp(i, l1, m2);
                let o1 = if i < r2 { 1.0 - ramp(i, 0, r1) } else { ramp(i, r2, l1) };
                let o2 = if i < m1 { 1.0 } else if i < m2 { 1.0 - ramp(i, m1, r2) } else { ramp(i, m2, l2) };
                offsets[i] = [PRE_GRASP * o1, PRE_GRASP * o2];
            }
        }
    }
    for o in offsets.iter_mut().flatten() {
        *o = clear_of_threshold(*o);
    }

    let object_track = ObjectTrack {
        rotations: progress.iter().map(|&u| Vec3::z() * (end_yaw * u)).collect(),
        translations: progress.iter().map(|&u| bezier(&path, u)).collect(),
    };
    let body = ArticulatedBody::standard();
    let root_height = body.pelvis_height() + FOOT_CLEARANCE;
    let mut agents: [Vec<Pose>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut contacts = Vec::with_capacity(n);
    for agent in 0..2 {
        let sx = if agent == 0 { -1.0 } else { 1.0 };
        let facing = if agent == 0 { -std::f64::consts::FRAC_PI_2 } else { std::f64::consts::FRAC_PI_2 };
        let mut pose = Pose::default();
        // Start with the arms reaching forward and slightly down.
        pose.theta[ARM_CHAIN[0][1] - 1] = Vec3::new(0.0, 0.3, -1.2);
        pose.theta[ARM_CHAIN[1][1] - 1] = Vec3::new(0.0, -0.3, 1.2);
        pose.theta[ARM_CHAIN[0][2] - 1] = Vec3::new(0.0, 0.0, -0.6);
        pose.theta[ARM_CHAIN[1][2] - 1] = Vec3::new(0.0, 0.0, 0.6);
        for i in 0..n {
            let r_obj = object_track.rotation(i);
            let t_obj = object_track.translations[i];
            let yaw = object_track.rotations[i].z;
            let root_local = Vec3::new(sx * (half.x + STANDOFF), 0.0, 0.0);
            let root = r_obj * root_local + t_obj;
            pose.root_transl = Vec3::new(root.x, root.y, root_height);
            pose.root_orient = Vec3::z() * (yaw + facing);
            let agent_rot = so3::exp(&pose.root_orient);
            for side in 0..2 {
                let g = grip(&half, agent, side, inset);
                let wrist = g.wrist + g.normal * offsets[i][agent];
                let tips = body.fingertip_offsets[side].map(|o| r_obj * (wrist + g.rotation * o) + t_obj);
                let lateral = if side == 0 { -1.0 } else { 1.0 };
                let hint = r_obj * wrist + t_obj + agent_rot * Vec3::new(ELBOW_FLARE * lateral, -0.15, -0.15);
                // The first frame is settled fully so later frames start from a converged prior.
                for _ in 0..if i == 0 { FIRST_FRAME_PASSES } else { 1 } {
                    solve_arm(&body, &mut pose, side, &tips, &hint);
                }
            }
            agents[agent].push(pose);
        }
    }
    for o in &offsets {
        contacts.push([o[0], o[0], o[1], o[1]].map(|v| v < CONTACT_THRESHOLD));
    }
    debug_assert!(agents.iter().flatten().all(|p| p.theta.len() == NUM_BONES));
    let sequence = MotionSequence {
        fps: DEFAULT_FPS,
        object_id: "box".into(),
        label: kind.label(),
        object: object_track,
        agents,
        bodies: [body.clone(), body],
    };
    Ok(ToyScene { sequence, contacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contacts::{detect_contacts, hand_distances};
    use crate::geometry::{box_mesh_with_cell, Bvh};

    fn source_box() -> TriMesh {
        box_mesh_with_cell(Vec3::new(0.35, 0.2, 0.15), 0.01)
    }

    #[test]
    fn carry_labels_match_detected_contacts() {
        let mesh = source_box();
        let scene = generate_toy_scene(ToyKind::Carry, 60, &mesh, 1).unwrap();
        let bvh = Bvh::new(&mesh);
        let detected = detect_contacts(&scene.sequence, &bvh, CONTACT_THRESHOLD);
        assert_eq!(detected, scene.contacts);
        let d = hand_distances(&scene.sequence, &bvh);
        // While the object moves every hand grips the face.
        for (i, dd) in d.iter().enumerate().take(45).skip(15) {
            for h in 0..4 {
                assert!(dd[h] < 1e-3, "frame {i} hand {h}: {}", dd[h]);
            }
        }
    }

    #[test]
    fn carry_moves_object_along_path_endpoints() {
        let scene = generate_toy_scene(ToyKind::Carry, 60, &source_box(), 4).unwrap();
        let t = &scene.sequence.object.translations;
        assert_eq!(t[0], Vec3::new(0.0, 0.0, 0.95));
        assert!(t[59].x > 0.39 && (t[59].z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn handover_contact_intervals() {
        let mesh = source_box();
        let scene = generate_toy_scene(ToyKind::Handover, 60, &mesh, 2).unwrap();
        let c = detect_contacts(&scene.sequence, &Bvh::new(&mesh), CONTACT_THRESHOLD);
        let last = |h: usize| c.iter().rposition(|f| f[h]).unwrap();
        let overlap = c.iter().filter(|f| f[0] && f[2]).count();
        assert!(last(0) < last(2));
        assert!(overlap >= 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let mesh = source_box();
        let a = generate_toy_scene(ToyKind::Carry, 20, &mesh, 9).unwrap();
        let b = generate_toy_scene(ToyKind::Carry, 20, &mesh, 9).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert!(generate_toy_scene(ToyKind::Carry, 9, &mesh, 9).is_err());
    }
}
