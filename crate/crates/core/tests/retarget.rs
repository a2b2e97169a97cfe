use collab_retarget::body::{ArticulatedBody, Pose, NUM_JOINTS};
use collab_retarget::contacts::{detect_contacts, extract_candidate, tips_in_object_frame, CONTACT_THRESHOLD, NUM_HANDS};
use collab_retarget::diffopt::{grad_check, OptimConfig};
use collab_retarget::geometry::{box_mesh_with_cell, Bvh, TriMesh};
use collab_retarget::morph::{build_morph_sequence_with, transfer_contacts, ContactConstraint};
use collab_retarget::motion::{generate_toy_scene, ToyKind, ToyScene};
use collab_retarget::motion::{MotionSequence, ObjectTrack};
use collab_retarget::retarget::*;
use collab_retarget::so3::{self, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn source_box() -> TriMesh {
    box_mesh_with_cell(Vec3::new(0.35, 0.2, 0.15), 0.01)
}

fn carry() -> (TriMesh, ToyScene) {
    let mesh = source_box();
    let scene = generate_toy_scene(ToyKind::Carry, 60, &mesh, 7).unwrap();
    (mesh, scene)
}

fn source_constraint(seq: &MotionSequence, mesh: &TriMesh) -> ContactConstraint {
    let bvh = Bvh::new(mesh);
    let cand = extract_candidate(seq, mesh, &bvh, CONTACT_THRESHOLD);
    ContactConstraint { hands: cand.hands.map(|h| h.iter().map(|&v| mesh.vertices[v as usize]).collect()) }
}

fn mpjpe(seq: &MotionSequence, agents: &[Vec<Pose>; 2]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..2 {
        for (p, q) in seq.agents[a].iter().zip(&agents[a]) {
            let x = seq.bodies[a].joint_positions(p);
            let y = seq.bodies[a].joint_positions(q);
            for j in 0..NUM_JOINTS {
                total += (x[j] - y[j]).norm();
                count += 1;
            }
        }
    }
    total / count as f64
}

fn track_error(a: &ObjectTrack, b: &ObjectTrack) -> (f64, f64) {
    let mut t: f64 = 0.0;
    let mut r: f64 = 0.0;
    for i in 0..a.len() {
        t = t.max((a.translations[i] - b.translations[i]).norm());
        r = r.max(so3::geodesic(&a.rotation(i), &b.rotation(i)).to_degrees());
    }
    (t, r)
}

fn random_x(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn object_identity_retarget_is_a_fixed_point() {
    let (mesh, scene) = carry();
    let out = retarget_object_motion(&scene.sequence.object, &mesh, &ObjectWeights::default(), &object_optim()).unwrap();
    let (t, r) = track_error(&out.track, &scene.sequence.object);
    assert!(t < 1e-3 && r < 0.5, "translation {t} m, rotation {r} deg");
}

#[test]
fn object_loss_never_exceeds_initial() {
    let (mesh, scene) = carry();
    let tall = mesh.scaled(&Vec3::new(1.0, 1.0, 5.0));
    let out = retarget_object_motion(&scene.sequence.object, &tall, &ObjectWeights::default(), &object_optim()).unwrap();
    let totals = &out.trace.totals;
    let best = totals.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best <= totals[0]);
}

#[test]
fn taller_target_is_lifted_out_of_the_floor() {
    let (mesh, scene) = carry();
    let tall = mesh.scaled(&Vec3::new(1.0, 1.0, 8.0));
    let before = min_heights(&scene.sequence.object, &tall);
    assert!(before.iter().any(|&h| h < -0.1));
    let out = retarget_object_motion(&scene.sequence.object, &tall, &ObjectWeights::default(), &object_optim()).unwrap();
    for (i, h) in min_heights(&out.track, &tall).into_iter().enumerate() {
        assert!(h >= -1e-3, "frame {i} at {h}");
    }
}

#[test]
fn constant_velocity_track_stays_smooth() {
    let n = 30;
    let rotations = vec![Vec3::new(0.0, 0.0, 0.3); n];
    let translations = (0..n).map(|i| Vec3::new(0.02 * i as f64, -0.01 * i as f64, 1.0)).collect();
    let track = ObjectTrack::new(rotations, translations).unwrap();
    let out = retarget_object_motion(&track, &source_box(), &ObjectWeights::default(), &object_optim()).unwrap();
    let max_acc = |t: &ObjectTrack| {
        (1..n - 1)
            .map(|i| (t.translations[i] * 2.0 - t.translations[i - 1] - t.translations[i + 1]).amax())
            .fold(0.0, f64::max)
    };
    assert!(max_acc(&out.track) <= max_acc(&track) + 1e-6);
}

#[test]
fn short_tracks_are_rejected() {
    let track = ObjectTrack::new(vec![Vec3::zeros(); 2], vec![Vec3::z(); 2]).unwrap();
    assert!(retarget_object_motion(&track, &source_box(), &ObjectWeights::default(), &object_optim()).is_err());
}

#[test]
fn object_gradients_match_finite_differences() {
    let (mesh, scene) = carry();
    let tall = mesh.scaled(&Vec3::new(1.0, 1.0, 6.0));
    let mut obj = ObjectObjective::new(&scene.sequence.object, &tall, ObjectWeights::default());
    let x0 = scene.sequence.object.to_params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let x: Vec<f64> = x0.iter().zip(random_x(x0.len(), 0.2, &mut rng)).map(|(a, b)| a + b).collect();
        let report = grad_check(&mut obj, &x, 1e-3);
        assert!(report.passed, "{:?}", report.failures.first());
    }
}

#[test]
fn human_identity_retarget_stays_on_source() {
    let (mesh, scene) = carry();
    let seq = &scene.sequence;
    let constraint = source_constraint(seq, &mesh);
    let masks = detect_contacts(seq, &Bvh::new(&mesh), CONTACT_THRESHOLD);
    let out = retarget_human_motion(seq, &seq.object, &constraint, &masks, &HumanWeights::default(), &human_optim()).unwrap();
    let err = mpjpe(seq, &out.agents);
    assert!(err < 0.010, "MPJPE {err}");
}

#[test]
fn closed_masks_equal_the_contact_free_problem() {
    let (mesh, scene) = carry();
    let seq = &scene.sequence;
    let constraint = source_constraint(seq, &mesh);
    let cfg = OptimConfig::new(LEARNING_RATE, 200);
    let closed = vec![[false; NUM_HANDS]; seq.len()];
    let a = retarget_human_motion(seq, &seq.object, &constraint, &closed, &HumanWeights::default(), &cfg).unwrap();
    let open = detect_contacts(seq, &Bvh::new(&mesh), CONTACT_THRESHOLD);
    let no_c = HumanWeights { c: 0.0, ..HumanWeights::default() };
    let b = retarget_human_motion(seq, &seq.object, &constraint, &open, &no_c, &cfg).unwrap();
    for ag in 0..2 {
        for (p, q) in a.agents[ag].iter().zip(&b.agents[ag]) {
            let d = p.to_vec().iter().zip(q.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(d < 1e-6);
        }
    }
}

#[test]
fn empty_constraint_is_rejected() {
    let (_, scene) = carry();
    let seq = &scene.sequence;
    let masks = vec![[true; NUM_HANDS]; seq.len()];
    let err = retarget_human_motion(seq, &seq.object, &ContactConstraint::default(), &masks, &HumanWeights::default(), &human_optim());
    assert!(matches!(err, Err(collab_retarget::Error::EmptyConstraint)));
}

fn chamfer(seq: &MotionSequence, agents: &[Vec<Pose>; 2], c: &ContactConstraint, masks: &[[bool; NUM_HANDS]]) -> f64 {
    let seq = seq.with_agents(agents.clone());
    let mut total = 0.0;
    for (i, m) in masks.iter().enumerate() {
        for h in 0..NUM_HANDS {
            if !m[h] || c.hands[h].is_empty() {
                continue;
            }
            let tips = tips_in_object_frame(&seq, i, h);
            let near = |p: &Vec3, set: &[Vec3]| set.iter().map(|q| (q - p).norm_squared()).fold(f64::INFINITY, f64::min);
            total += tips.iter().map(|t| near(t, &c.hands[h])).sum::<f64>() / tips.len() as f64;
            total += c.hands[h].iter().map(|q| near(q, &tips)).sum::<f64>() / c.hands[h].len() as f64;
        }
    }
    total
}

#[test]
fn wider_box_contacts_are_reached() {
    let (mesh, scene) = carry();
    let seq = &scene.sequence;
    let target = mesh.scaled(&Vec3::new(1.0, 1.3, 1.0));
    let morph = build_morph_sequence_with(&mesh, &target, 4, 32).unwrap();
    let cand = extract_candidate(seq, &mesh, &Bvh::new(&mesh), CONTACT_THRESHOLD);
    let constraint = transfer_contacts(&cand, &morph).unwrap();
    let masks = detect_contacts(seq, &Bvh::new(&mesh), CONTACT_THRESHOLD);
    let track = retarget_object_motion(&seq.object, &target, &ObjectWeights::default(), &object_optim()).unwrap().track;
    let src = seq.with_agents(seq.agents.clone());
    let moved = MotionSequence { object: track.clone(), ..src };
    let before = chamfer(&moved, &seq.agents, &constraint, &masks);
    let out = retarget_human_motion(&moved, &track, &constraint, &masks, &HumanWeights::default(), &human_optim()).unwrap();
    let after = chamfer(&moved, &out.agents, &constraint, &masks);
    assert!(after <= before, "{after} > {before}");
    let result = moved.with_agents(out.agents.clone());
    let mut sum = 0.0;
    let mut count = 0;
    for (i, m) in masks.iter().enumerate() {
        for h in 0..NUM_HANDS {
            if m[h] {
                for t in tips_in_object_frame(&result, i, h) {
                    sum += constraint.hands[h].iter().map(|q| (q - t).norm()).fold(f64::INFINITY, f64::min);
                    count += 1;
                }
            }
        }
        for a in 0..2 {
            let joints = result.bodies[a].joint_positions(&result.agents[a][i]);
            assert!(joints.iter().all(|p| p.z >= 0.0), "frame {i} agent {a} below ground");
        }
    }
    let mean = sum / count as f64;
    assert!(mean < 0.03, "mean fingertip distance {mean}");
}

#[test]
fn human_gradients_match_finite_differences() {
    let (mesh, scene) = carry();
    let seq = &scene.sequence;
    let short = MotionSequence {
        object: ObjectTrack::new(seq.object.rotations[20..24].to_vec(), seq.object.translations[20..24].to_vec()).unwrap(),
        agents: [0, 1].map(|a| seq.agents[a][20..24].to_vec()),
        ..seq.clone()
    };
    let constraint = source_constraint(seq, &mesh);
    let masks = vec![[true; NUM_HANDS]; 4];
    let mut obj = HumanObjective::new(&short, &short.object, &constraint, &masks, HumanWeights::default()).unwrap();
    let x0 = HumanObjective::initial_point(&short);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let mut x: Vec<f64> = x0.iter().zip(random_x(x0.len(), 0.2, &mut rng)).map(|(a, b)| a + b).collect();
        // push one pelvis below ground so the ground term is active
        x[68] -= 1.0;
        let report = grad_check(&mut obj, &x, 1e-3);
        assert!(report.passed, "{:?}", report.failures.first());
    }
}

fn random_poses(n: usize, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let mut prev = random_x(Pose::DIM, 0.4, rng);
    (0..n)
        .map(|_| {
            for v in prev.iter_mut().take(63) {
                *v += rng.random_range(-0.01..0.01);
            }
            let mut p = Pose::from_slice(&prev);
            p.root_transl += Vec3::new(0.0, 0.0, 1.0);
            p
        })
        .collect()
}

#[test]
fn fit_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let body = ArticulatedBody::standard();
    let poses = random_poses(3, &mut rng);
    let mut targets = FitTargets::from_poses(&body, &poses);
    let cube = box_mesh_with_cell(Vec3::new(0.5, 0.5, 0.5), 0.1);
    let track = ObjectTrack::new(vec![Vec3::zeros(); 3], vec![poses[0].root_transl; 3]).unwrap();
    targets.object = Some((cube, track));
    let mut obj = FitObjective::new(targets, body, FitWeights::default()).unwrap();
    for _ in 0..3 {
        let x: Vec<f64> = poses.iter().flat_map(|p| p.to_vec()).zip(random_x(3 * Pose::DIM, 0.3, &mut rng)).map(|(a, b)| a + b).collect();
        let report = grad_check(&mut obj, &x, 1e-3);
        assert!(report.passed, "{:?}", report.failures.first());
    }
}

fn fit_mpjpe(body: &ArticulatedBody, a: &[Pose], b: &[Pose]) -> f64 {
    let mut s = 0.0;
    for (p, q) in a.iter().zip(b) {
        let (x, y) = (body.joint_positions(p), body.joint_positions(q));
        s += (0..NUM_JOINTS).map(|j| (x[j] - y[j]).norm()).sum::<f64>() / NUM_JOINTS as f64;
    }
    s / a.len() as f64
}

#[test]
fn fit_recovers_forward_kinematics_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let body = ArticulatedBody::standard();
    let poses = random_poses(8, &mut rng);
    let targets = FitTargets::from_poses(&body, &poses);
    let cfg = fit_optim();
    let fit = fit_pose_sequence(targets, &body, &FitWeights::default(), &cfg).unwrap();
    let err = fit_mpjpe(&body, &poses, &fit.poses);
    assert!(err < 0.005, "MPJPE {err}");
}

#[test]
fn fit_single_frame_converges_without_smoothness() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let body = ArticulatedBody::standard();
    let poses = random_poses(1, &mut rng);
    let cfg = fit_optim();
    let fit = fit_pose_sequence(FitTargets::from_poses(&body, &poses), &body, &FitWeights::default(), &cfg).unwrap();
    let smooth = fit.trace.term_names.iter().position(|n| n == "smooth").unwrap();
    assert!(fit.trace.terms.iter().all(|t| t[smooth] == 0.0));
    assert!(fit_mpjpe(&body, &poses, &fit.poses) < 0.005);
}

#[test]
fn regularizer_shrinks_joint_angles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let body = ArticulatedBody::standard();
    let poses = random_poses(4, &mut rng);
    let mut targets = FitTargets::from_poses(&body, &poses);
    // inconsistent targets so the regularizer has something to trade against
    for f in &mut targets.joints {
        for p in f.iter_mut() {
            *p += Vec3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), 0.0);
        }
    }
    let cfg = OptimConfig { final_lr_scale: 0.01, ..OptimConfig::new(LEARNING_RATE, 1500) };
    let norm = |ps: &[Pose]| ps.iter().flat_map(|p| p.to_vec()[..63].to_vec()).map(|v| v * v).sum::<f64>();
    let free = FitWeights { body: 0.0, ..FitWeights::default() };
    let a = fit_pose_sequence(targets.clone(), &body, &FitWeights::default(), &cfg).unwrap();
    let b = fit_pose_sequence(targets, &body, &free, &cfg).unwrap();
    assert!(norm(&a.poses) <= norm(&b.poses) + 1e-9);
}
