use collab_retarget::body::{ArticulatedBody, Pose, NUM_BONES, NUM_JOINTS};
use collab_retarget::contacts::{hand_distances, CONTACT_THRESHOLD};
use collab_retarget::geometry::{box_mesh, box_mesh_with_cell, Bvh, TriMesh};
use collab_retarget::metrics::*;
use collab_retarget::motion::{generate_toy_scene, MotionSequence, ObjectTrack, ToyKind};
use collab_retarget::so3::{self, Vec3};
use nalgebra::UnitQuaternion;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(frames: usize, seed: u64) -> (TriMesh, MotionSequence) {
    let mesh = box_mesh_with_cell(Vec3::new(0.35, 0.2, 0.15), 0.02);
    let mut seq = generate_toy_scene(ToyKind::Carry, frames.max(10), &mesh, seed).unwrap().sequence;
    seq.object = ObjectTrack::new(seq.object.rotations[..frames].to_vec(), seq.object.translations[..frames].to_vec()).unwrap();
    for agent in &mut seq.agents {
        agent.truncate(frames);
    }
    (mesh, seq)
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let mut v = || Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    Pose { theta: std::array::from_fn(|_| v()), root_orient: v(), root_transl: v() }
}

fn random_track(n: usize, rng: &mut ChaCha8Rng) -> ObjectTrack {
    let mut v = |s: f64| Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    let rotations = (0..n).map(|_| v(3.0)).collect();
    let translations = (0..n).map(|_| v(1.0)).collect();
    ObjectTrack::new(rotations, translations).unwrap()
}

fn shifted(seq: &MotionSequence, d: Vec3) -> MotionSequence {
    let mut out = seq.clone();
    for t in &mut out.object.translations {
        *t += d;
    }
    for agent in &mut out.agents {
        for p in agent.iter_mut() {
            p.root_transl += d;
        }
    }
    out
}

#[test]
fn identical_motions_give_a_perfect_report() {
    let (mesh, seq) = scene(20, 3);
    let r = evaluate(&seq, &seq, &mesh, CONTACT_THRESHOLD).unwrap();
    assert_eq!(r.joint_error, 0.0);
    assert_eq!(r.translation_error, 0.0);
    assert_eq!(r.rotation_error, 0.0);
    assert_eq!(r.contact_accuracy, 100.0);
    assert!((0.0..=100.0).contains(&r.penetration_rate));
}

#[test]
fn root_offset_of_ten_millimetres_moves_every_joint() {
    let body = ArticulatedBody::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt: Vec<Pose> = (0..12).map(|_| random_pose(&mut rng)).collect();
    let pred: Vec<Pose> = gt.iter().map(|p| Pose { root_transl: p.root_transl + Vec3::new(0.01, 0.0, 0.0), ..*p }).collect();
    let e = mpjpe_track(&pred, &gt, &body, false).unwrap();
    assert!((e - 10.0).abs() < 1e-9, "{e}");
    assert!(mpjpe_track(&pred, &gt, &body, true).unwrap() < 1e-9);
}

#[test]
fn mpjpe_matches_a_double_loop_average() {
    let body = ArticulatedBody::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<Pose> = (0..9).map(|_| random_pose(&mut rng)).collect();
    let b: Vec<Pose> = (0..9).map(|_| random_pose(&mut rng)).collect();
    let mut total = 0.0;
    for f in 0..a.len() {
        let (x, y) = (body.joint_positions(&a[f]), body.joint_positions(&b[f]));
        for j in 0..NUM_JOINTS {
            total += ((x[j] - y[j]).norm_squared()).sqrt();
        }
    }
    let oracle = total / (a.len() * NUM_JOINTS) as f64 * 1000.0;
    assert!((mpjpe_track(&a, &b, &body, false).unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn rotation_error_matches_a_quaternion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, b) = (random_track(50, &mut rng), random_track(50, &mut rng));
    let oracle: f64 = (0..50)
        .map(|i| {
            let qa = UnitQuaternion::from_scaled_axis(a.rotations[i]);
            let qb = UnitQuaternion::from_scaled_axis(b.rotations[i]);
            let dot = qa.coords.dot(&qb.coords).abs().min(1.0);
            (2.0 * dot.acos()).to_degrees()
        })
        .sum::<f64>()
        / 50.0;
    let (_, r) = object_errors(&a, &b).unwrap();
    assert!((r - oracle).abs() < 1e-6, "{r} vs {oracle}");
}

#[test]
fn quarter_turn_about_z_is_ninety_degrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = random_track(30, &mut rng);
    let pred = ObjectTrack::new(
        (0..30).map(|i| so3::log(&(so3::rot_z(std::f64::consts::FRAC_PI_2) * gt.rotation(i)))).collect(),
        gt.translations.clone(),
    )
    .unwrap();
    let (t, r) = object_errors(&pred, &gt).unwrap();
    assert_eq!(t, 0.0);
    assert!((r - 90.0).abs() < 1e-6, "{r}");
}

/// One frame in which only agent 1's left hand is near a small cube.
fn single_hand_fixture() -> (TriMesh, MotionSequence, f64) {
    let (_, mut seq) = scene(1, 0);
    seq.agents[0][0] = Pose::default();
    seq.agents[1][0] = Pose { root_transl: Vec3::new(5.0, 0.0, 0.0), ..Pose::default() };
    let tips = seq.bodies[0].fingertip_positions(&seq.agents[0][0]);
    let cube = box_mesh(Vec3::repeat(0.02), [2, 2, 2]);
    let centre = tips[0] + Vec3::new(0.0, 0.0, 0.045);
    seq.object = ObjectTrack::new(vec![Vec3::zeros()], vec![centre]).unwrap();
    let d = hand_distances(&seq, &Bvh::new(&cube))[0];
    assert!(d[0] < CONTACT_THRESHOLD && d[1..].iter().all(|&x| x > 0.5), "{d:?}");
    (cube, seq, d[0])
}

#[test]
fn one_flipped_hand_frame_gives_seventy_five_percent() {
    let (cube, gt, _) = single_hand_fixture();
    let pred = MotionSequence {
        object: ObjectTrack::new(vec![Vec3::zeros()], vec![gt.object.translations[0] + Vec3::new(0.0, 0.0, 1.0)]).unwrap(),
        ..gt.clone()
    };
    assert_eq!(contact_accuracy(&pred, &gt, &cube, CONTACT_THRESHOLD).unwrap(), 75.0);
}

#[test]
fn hand_exactly_at_the_threshold_is_not_in_contact() {
    let (cube, gt, d) = single_hand_fixture();
    let far = MotionSequence {
        object: ObjectTrack::new(vec![Vec3::zeros()], vec![gt.object.translations[0] + Vec3::new(0.0, 0.0, 1.0)]).unwrap(),
        ..gt.clone()
    };
    assert_eq!(contact_accuracy(&far, &gt, &cube, d).unwrap(), 100.0);
    assert_eq!(contact_accuracy(&far, &gt, &cube, d.next_up()).unwrap(), 75.0);
}

#[test]
fn penetration_rate_extremes() {
    let (mesh, seq) = scene(5, 6);
    let far = MotionSequence {
        object: ObjectTrack::new(vec![Vec3::zeros(); 5], vec![Vec3::new(0.0, 0.0, 50.0); 5]).unwrap(),
        ..seq.clone()
    };
    assert_eq!(penetration_rate(&far, &mesh), 0.0);

    let mut giant = seq.clone();
    giant.bodies[0].capsule_radii = [20.0; NUM_BONES];
    assert_eq!(penetration_rate(&giant, &mesh), 100.0);
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[test]
fn penetration_rate_matches_brute_force_containment() {
    let (mesh, mut seq) = scene(8, 9);
    for (t, p) in seq.object.translations.iter_mut().zip(&seq.agents[0]) {
        *t = p.root_transl;
    }
    let mut inside_total = 0.0;
    for i in 0..seq.len() {
        let caps: Vec<_> = (0..2).flat_map(|a| seq.bodies[a].surface_capsules(&seq.agents[a][i])).collect();
        let mut inside = 0usize;
        for v in &mesh.vertices {
            let p = seq.object.rotation(i) * v + seq.object.translations[i];
            if caps.iter().any(|c| segment_distance(&p, &c.a, &c.b) < c.radius) {
                inside += 1;
            }
        }
        inside_total += inside as f64 / mesh.vertices.len() as f64;
    }
    let oracle = 100.0 * inside_total / seq.len() as f64;
    let rate = penetration_rate(&seq, &mesh);
    assert!(rate > 0.0, "fixture should overlap");
    assert_eq!(rate, oracle);
}

#[test]
fn report_serializes_with_metric_names() {
    let r = MetricReport {
        joint_error: 1.5,
        translation_error: 2.0,
        rotation_error: 3.0,
        contact_accuracy: 97.5,
        penetration_rate: 0.25,
    };
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["J_e"], 1.5);
    assert_eq!(json["C_acc"], 97.5);
    assert_eq!(r.to_csv(), "J_e,T_e,R_e,C_acc,P_r\n1.5,2,3,97.5,0.25\n");
}

#[test]
fn mismatched_lengths_are_rejected() {
    let (mesh, seq) = scene(10, 1);
    let (_, short) = scene(6, 1);
    assert!(evaluate(&seq, &short, &mesh, CONTACT_THRESHOLD).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn joint_and_translation_errors_ignore_a_common_shift(seed in 0u64..1000, dx in -3.0..3.0f64, dy in -3.0..3.0f64, dz in -3.0..3.0f64) {
        let (_, a) = scene(6, seed);
        let (_, b) = scene(6, seed + 1);
        let d = Vec3::new(dx, dy, dz);
        let (sa, sb) = (shifted(&a, d), shifted(&b, d));
        prop_assert!((mpjpe(&a, &b, false).unwrap() - mpjpe(&sa, &sb, false).unwrap()).abs() < 1e-7);
        let t0 = object_errors(&a.object, &b.object).unwrap().0;
        let t1 = object_errors(&sa.object, &sb.object).unwrap().0;
        prop_assert!((t0 - t1).abs() < 1e-7);
    }

    #[test]
    fn rotation_error_stays_in_range(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_track(10, &mut rng), random_track(10, &mut rng));
        let (_, r) = object_errors(&a, &b).unwrap();
        prop_assert!((0.0..=180.0).contains(&r));
        prop_assert_eq!(object_errors(&a, &a).unwrap().1, 0.0);
    }
}
