//! Shape morphing between two objects through blended distance fields, and
//! nearest-point propagation of contact regions along the morph chain.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contacts::NUM_HANDS;
use crate::error::{Error, Result};
use crate::geometry::{marching_cubes, sdf_on_lattice, Aabb, Bvh, Lattice, SdfGrid, Surface, TriMesh, DEFAULT_PADDING_FRACTION, DEFAULT_RESOLUTION};
use crate::so3::Vec3;

/// Default number of intermediate shapes.
pub const DEFAULT_INTERMEDIATES: usize = 4;

/// Blend weight of the source field at step `i` of `n` intermediates.
pub fn blend_weight(i: usize, n: usize) -> f64 {
    (n + 1 - i) as f64 / (n + 1) as f64
}

/// Lattice covering both boxes at the finer of the two spacings.
pub fn common_lattice(a: &Lattice, b: &Lattice) -> Result<Lattice> {
    let (ba, bb) = (a.bounds(), b.bounds());
    if a == b {
        return Ok(*a);
    }
    if !ba.intersects(&bb) {
        return Err(Error::IncompatibleLattice(format!("disjoint bounds {ba:?} and {bb:?}")));
    }
    let spacing = a.spacing.min(b.spacing);
    let union = ba.union(&bb);
    let extent = union.extent();
    let dims = [0, 1, 2].map(|k| ((extent[k] / spacing - 1e-9).ceil() as usize + 1).max(2));
    Ok(Lattice { origin: union.min, spacing, dims })
}

/// Field `w * source + (1 - w) * target` with `w = (n + 1 - i) / (n + 1)`,
/// both resampled to their common lattice.
pub fn interpolate_sdf(source: &SdfGrid, target: &SdfGrid, i: usize, n: usize) -> Result<SdfGrid> {
    if i < 1 || i > n {
        return Err(Error::Invalid(format!("step {i} outside 1..={n}")));
    }
    let lattice = common_lattice(&source.lattice, &target.lattice)?;
    let (s, t) = (source.resample(lattice), target.resample(lattice));
    Ok(blend(&s, &t, blend_weight(i, n)))
}

fn blend(s: &SdfGrid, t: &SdfGrid, w: f64) -> SdfGrid {
    let values = s.values.iter().zip(&t.values).map(|(&a, &b)| (w * a as f64 + (1.0 - w) * b as f64) as f32).collect();
    SdfGrid { lattice: s.lattice, values }
}

/// One shape of the morph chain.
#[derive(Debug, Clone)]
pub struct MorphStep {
    pub mesh: TriMesh,
    pub sdf: SdfGrid,
    pub bvh: Bvh,
}

/// `[source, M_1, ..., M_N, target]` on one shared lattice.
#[derive(Debug, Clone)]
pub struct MorphSequence {
    pub steps: Vec<MorphStep>,
    pub n_intermediates: usize,
    /// Source weight of each intermediate, `(N + 1 - i) / (N + 1)`.
    pub weights: Vec<f64>,
}

impl MorphSequence {
    pub fn source(&self) -> &MorphStep {
        &self.steps[0]
    }

    pub fn target(&self) -> &MorphStep {
        self.steps.last().expect("at least two steps")
    }

    pub fn spacing(&self) -> f64 {
        self.steps[0].sdf.spacing()
    }
}

fn check_watertight(mesh: &TriMesh) -> Result<()> {
    mesh.validate()?;
    let open_edges = mesh.open_edges();
    if !open_edges.is_empty() || mesh.faces.is_empty() {
        return Err(Error::NonWatertight { open_edges });
    }
    if mesh.vertices.len() < 4 {
        return Err(Error::DegenerateMesh("fewer than 4 vertices".into()));
    }
    Ok(())
}

/// Lattice over the union of both meshes' boxes, padded by a fraction of its
/// diagonal, with `resolution` nodes along the longest axis.
pub fn morph_lattice(source: &TriMesh, target: &TriMesh, resolution: usize) -> Lattice {
    let union: Aabb = source.aabb().union(&target.aabb());
    Lattice::covering(&union.expanded(DEFAULT_PADDING_FRACTION * union.diagonal()), resolution)
}

/// Builds the morph chain. The end steps keep the input meshes; each
/// intermediate is the zero level set of the blended field.
pub fn build_morph_sequence(source: &TriMesh, target: &TriMesh, n: usize) -> Result<MorphSequence> {
    build_morph_sequence_with(source, target, n, DEFAULT_RESOLUTION)
}

pub fn build_morph_sequence_with(source: &TriMesh, target: &TriMesh, n: usize, resolution: usize) -> Result<MorphSequence> {
    if resolution < 8 {
        return Err(Error::Invalid(format!("resolution {resolution} < 8")));
    }
    check_watertight(source)?;
    check_watertight(target)?;
    let lattice = morph_lattice(source, target, resolution);
    let (s, t) = rayon::join(|| sdf_on_lattice(source, lattice), || sdf_on_lattice(target, lattice));
    let weights: Vec<f64> = (1..=n).map(|i| blend_weight(i, n)).collect();
    let middle: Vec<MorphStep> = weights
        .par_iter()
        .map(|&w| {
            let sdf = blend(&s, &t, w);
            let mesh = marching_cubes(&sdf, 0.0)?;
            let bvh = Bvh::new(&mesh);
            Ok(MorphStep { mesh, sdf, bvh })
        })
        .collect::<Result<_>>()?;
    let mut steps = Vec::with_capacity(n + 2);
    steps.push(MorphStep { bvh: Bvh::new(source), mesh: source.clone(), sdf: s });
    steps.extend(middle);
    steps.push(MorphStep { bvh: Bvh::new(target), mesh: target.clone(), sdf: t });
    Ok(MorphSequence { steps, n_intermediates: n, weights })
}

/// Vertex-index contact regions on the source mesh, one set per hand.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContactCandidate {
    pub hands: [Vec<u32>; NUM_HANDS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Where a candidate was observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sequence: String,
    /// Inclusive frame range.
    pub frames: [usize; 2],
}

impl ContactCandidate {
    pub fn new(hands: [Vec<u32>; NUM_HANDS]) -> Self {
        let mut c = ContactCandidate { hands, provenance: None };
        c.normalize();
        c
    }

    /// Sorts and deduplicates every hand's region.
    pub fn normalize(&mut self) {
        for h in &mut self.hands {
            h.sort_unstable();
            h.dedup();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hands.iter().all(Vec::is_empty)
    }

    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        let n = mesh.vertices.len() as u32;
        if let Some(bad) = self.hands.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::Invalid(format!("contact vertex {bad} out of range for {n} vertices")));
        }
        Ok(())
    }

    /// Intersection over union of the `(hand, vertex)` pairs.
    pub fn iou(&self, other: &ContactCandidate) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.hands.iter().zip(&other.hands) {
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                union += 1;
                if i < a.len() && j < b.len() && a[i] == b[j] {
                    inter += 1;
                    i += 1;
                    j += 1;
                } else if j >= b.len() || (i < a.len() && a[i] < b[j]) {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Contact point sets on the target surface, object frame, one per hand.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactConstraint {
    pub hands: [Vec<Vec3>; NUM_HANDS],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintJson {
    hands: [Vec<[f64; 3]>; NUM_HANDS],
}

impl ContactConstraint {
    pub fn is_empty(&self) -> bool {
        self.hands.iter().all(Vec::is_empty)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let j: ConstraintJson = crate::io::read_json(path)?;
        Ok(ContactConstraint { hands: j.hands.map(|h| h.into_iter().map(Vec3::from).collect()) })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, &self.to_json())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("constraint serializes")
    }

    fn to_json(&self) -> ConstraintJson {
        ConstraintJson { hands: self.hands.clone().map(|h| h.into_iter().map(|v| [v.x, v.y, v.z]).collect()) }
    }
}

/// Moves points step by step to the nearest point of each following surface.
pub fn transfer_points(points: &[Vec3], steps: &[MorphStep]) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| steps.iter().skip(1).fold(*p, |q, step| step.bvh.nearest(&q).0))
        .collect()
}

/// Maps every candidate vertex through the morph chain onto the target.
pub fn transfer_contacts(cand: &ContactCandidate, morph: &MorphSequence) -> Result<ContactConstraint> {
    if cand.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    let source = &morph.source().mesh;
    cand.validate(source)?;
    let hands = cand.hands.clone().map(|idx| {
        let pts: Vec<Vec3> = idx.iter().map(|&i| source.vertices[i as usize]).collect();
        transfer_points(&pts, &morph.steps)
    });
    Ok(ContactConstraint { hands })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_mesh, icosphere, surface_chamfer};

    fn sphere_grid(r: f64) -> SdfGrid {
        let lattice = Lattice::covering(&Aabb { min: Vec3::repeat(-2.5), max: Vec3::repeat(2.5) }, 48);
        SdfGrid::from_fn(lattice, |p| p.norm() - r)
    }

    #[test]
    fn weights_follow_blend_formula() {
        assert_eq!(blend_weight(1, 4), 0.8);
        let m = build_morph_sequence_with(&box_mesh(Vec3::repeat(0.2), [2, 2, 2]), &box_mesh(Vec3::repeat(0.3), [2, 2, 2]), 4, 24).unwrap();
        assert_eq!(m.weights, vec![0.8, 0.6, 0.4, 0.2]);
        assert!(m.weights.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn identical_fields_blend_to_themselves() {
        let g = sphere_grid(1.0);
        for i in 1..=3 {
            assert_eq!(interpolate_sdf(&g, &g, i, 3).unwrap(), g);
        }
    }

    #[test]
    fn half_blend_of_spheres_has_mean_radius() {
        let blended = interpolate_sdf(&sphere_grid(1.0), &sphere_grid(2.0), 1, 1).unwrap();
        let mesh = marching_cubes(&blended, 0.0).unwrap();
        for v in &mesh.vertices {
            assert!((v.norm() - 1.5).abs() < 2.0 * blended.spacing());
        }
    }

    #[test]
    fn disjoint_lattices_are_incompatible() {
        let a = sphere_grid(1.0);
        let mut b = a.clone();
        b.lattice.origin += Vec3::repeat(10.0);
        assert!(matches!(interpolate_sdf(&a, &b, 1, 1), Err(Error::IncompatibleLattice(_))));
    }

    #[test]
    fn growing_box_extents_increase_monotonically() {
        let m = build_morph_sequence_with(&box_mesh(Vec3::repeat(0.2), [4, 4, 4]), &box_mesh(Vec3::repeat(0.3), [4, 4, 4]), 4, 48).unwrap();
        assert_eq!(m.steps.len(), 6);
        let extents: Vec<f64> = m.steps.iter().map(|s| s.mesh.aabb().extent().x).collect();
        assert!(extents.windows(2).all(|w| w[1] > w[0]), "{extents:?}");
        assert!(surface_chamfer(&m.source().mesh, &box_mesh(Vec3::repeat(0.2), [4, 4, 4])) < 2.0 * m.spacing());
    }

    #[test]
    fn identity_chain_keeps_vertices() {
        let mesh = icosphere(0.5, 2);
        let m = build_morph_sequence_with(&mesh, &mesh, 0, 24).unwrap();
        let cand = ContactCandidate::new([vec![0, 5], vec![], vec![17], vec![]]);
        let c = transfer_contacts(&cand, &m).unwrap();
        assert_eq!(c.hands[0], vec![mesh.vertices[0], mesh.vertices[5]]);
        assert!(c.hands[1].is_empty());
    }

    #[test]
    fn scaled_box_maps_face_centre_to_face_centre() {
        let src = box_mesh(Vec3::repeat(0.2), [4, 4, 4]);
        let dst = src.scaled(&Vec3::repeat(2.0));
        let m = build_morph_sequence_with(&src, &dst, 4, 48).unwrap();
        let centre = src.vertices.iter().position(|v| (v - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-12).unwrap() as u32;
        let c = transfer_contacts(&ContactCandidate::new([vec![centre], vec![], vec![], vec![]]), &m).unwrap();
        assert!((c.hands[0][0] - Vec3::new(0.4, 0.0, 0.0)).norm() < 2.0 * m.spacing(), "{:?}", c.hands[0]);
    }

    #[test]
    fn empty_candidate_is_rejected() {
        let mesh = icosphere(0.5, 1);
        let m = build_morph_sequence_with(&mesh, &mesh, 0, 16).unwrap();
        assert!(matches!(transfer_contacts(&ContactCandidate::default(), &m), Err(Error::EmptyCandidate)));
    }

    #[test]
    fn candidate_iou() {
        let a = ContactCandidate::new([vec![1, 2, 3], vec![4], vec![], vec![]]);
        let b = ContactCandidate::new([vec![2, 3], vec![4, 5], vec![], vec![]]);
        assert_eq!(a.iou(&b), 3.0 / 5.0);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn json_formats() {
        let c = ContactCandidate::new([vec![3, 1], vec![], vec![2], vec![]]);
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"hands":[[1,3],[],[2],[]]}"#);
        let k = ContactConstraint { hands: [vec![Vec3::new(0.5, 0.0, -1.0)], vec![], vec![], vec![]] };
        assert_eq!(k.to_json_string(), r#"{"hands":[[[0.5,0.0,-1.0]],[],[],[]]}"#);
    }
}
