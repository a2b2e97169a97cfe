//! Hand-to-object contact detection shared by retargeting, selection and
//! metrics. Hands are ordered agent 1 left, agent 1 right, agent 2 left,
//! agent 2 right.

use crate::body::TIPS_PER_HAND;
use crate::geometry::{Bvh, Surface, TriMesh};
use crate::morph::{ContactCandidate, Provenance};
use crate::motion::MotionSequence;
use crate::so3::Vec3;

/// Fingertip-to-surface distance below which a hand is in contact (m).
pub const CONTACT_THRESHOLD: f64 = 0.05;
pub const NUM_HANDS: usize = 4;

/// `(agent, side)` of a hand index, side 0 = left.
pub fn hand_parts(hand: usize) -> (usize, usize) {
    (hand / 2, hand % 2)
}

/// Fingertips of `hand` at `frame`, in the object's coordinate system.
pub fn tips_in_object_frame(seq: &MotionSequence, frame: usize, hand: usize) -> [Vec3; TIPS_PER_HAND] {
    let (agent, side) = hand_parts(hand);
    let body = &seq.bodies[agent];
    let kin = body.forward_kinematics(&seq.agents[agent][frame]);
    body.hand_tips(&kin, side).map(|p| seq.object.to_local(frame, &p))
}

/// Smallest fingertip-to-surface distance of each hand at each frame.
pub fn hand_distances(seq: &MotionSequence, surface: &impl Surface) -> Vec<[f64; NUM_HANDS]> {
    (0..seq.len())
        .map(|i| {
            std::array::from_fn(|h| {
                tips_in_object_frame(seq, i, h).iter().map(|p| surface.nearest(p).1).fold(f64::INFINITY, f64::min)
            })
        })
        .collect()
}

/// Per-frame contact flags (strictly closer than the threshold).
pub fn detect_contacts(seq: &MotionSequence, surface: &impl Surface, threshold: f64) -> Vec<[bool; NUM_HANDS]> {
    hand_distances(seq, surface).into_iter().map(|d| d.map(|x| x < threshold)).collect()
}

/// Per hand, the union over contact frames of the mesh vertices nearest to
/// that hand's in-contact fingertips.
pub fn extract_candidate(seq: &MotionSequence, mesh: &TriMesh, bvh: &Bvh, threshold: f64) -> ContactCandidate {
    let mut hands: [Vec<u32>; NUM_HANDS] = Default::default();
    let mut range: Option<[usize; 2]> = None;
    for i in 0..seq.len() {
        for (h, region) in hands.iter_mut().enumerate() {
            let tips = tips_in_object_frame(seq, i, h);
            let hits: Vec<_> = tips.iter().map(|p| (p, bvh.closest(p))).filter(|(_, c)| c.distance < threshold).collect();
            if hits.is_empty() {
                continue;
            }
            range = Some(range.map_or([i, i], |[a, _]| [a, i]));
            for (p, c) in hits {
                let face = mesh.faces[c.face];
                let v = face
                    .into_iter()
                    .min_by(|&a, &b| {
                        let da = (mesh.vertices[a as usize] - p).norm_squared();
                        let db = (mesh.vertices[b as usize] - p).norm_squared();
                        da.total_cmp(&db)
                    })
                    .expect("triangle");
                region.push(v);
            }
        }
    }
    let mut c = ContactCandidate::new(hands);
    c.provenance = range.map(|frames| Provenance { sequence: seq.object_id.clone(), frames });
    c
}
