use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::so3::Vec3;

use super::mesh::TriMesh;
use super::sdf::SdfGrid;

/// Cell faces as corner cycles, counter-clockwise seen from outside the cell.
/// Corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const FACES: [[usize; 4]; 6] =
    [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]];

fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Extracts the `iso` level set as a closed triangle mesh.
///
/// Each cell face is contoured on its own, with face saddles resolved by the
/// asymptotic decider, so neighbouring cells always agree on shared faces.
/// The face segments of a cell are chained into loops and fan-triangulated.
pub fn marching_cubes(grid: &SdfGrid, iso: f64) -> Result<TriMesh> {
    let (min, max) = grid.min_max();
    if !(iso > min && iso < max) {
        return Err(Error::IsoOutOfRange { iso, min, max });
    }
    let l = &grid.lattice;
    let [nx, ny, nz] = l.dims;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut edge_vertex: HashMap<usize, u32> = HashMap::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    let mut vertex_on_edge = |a: [usize; 3], b: [usize; 3], vertices: &mut Vec<Vec3>| -> u32 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let axis = (0..3).find(|&k| lo[k] != hi[k]).expect("edge endpoints differ");
        let key = l.index(lo[0], lo[1], lo[2]) * 3 + axis;
        *edge_vertex.entry(key).or_insert_with(|| {
            let va = grid.at(lo[0], lo[1], lo[2]) - iso;
            let vb = grid.at(hi[0], hi[1], hi[2]) - iso;
            let t = (va / (va - vb)).clamp(1e-9, 1.0 - 1e-9);
            let pa = l.node(lo[0], lo[1], lo[2]);
            let pb = l.node(hi[0], hi[1], hi[2]);
            vertices.push(pa + (pb - pa) * t);
            (vertices.len() - 1) as u32
        })
    };

    let mut segments: Vec<(usize, usize)> = Vec::with_capacity(12);
    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut val = [0.0; 8];
                let mut mask = 0u8;
                for (c, v) in val.iter_mut().enumerate() {
                    let [dx, dy, dz] = corner_offset(c);
                    *v = grid.at(x + dx, y + dy, z + dz) - iso;
                    if *v < 0.0 {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 0xff {
                    continue;
                }
                let inside = |c: usize| mask & (1 << c) != 0;
                // Cube edges are keyed by their corner pair (lo, hi).
                let edge_key = |a: usize, b: usize| a.min(b) * 8 + a.max(b);
                segments.clear();
                for face in &FACES {
                    let ins: Vec<usize> = (0..4).filter(|&k| inside(face[k]) && !inside(face[(k + 1) % 4])).collect();
                    let outs: Vec<usize> = (0..4).filter(|&k| !inside(face[k]) && inside(face[(k + 1) % 4])).collect();
                    let edge = |k: usize| edge_key(face[k], face[(k + 1) % 4]);
                    match ins.len() {
                        0 => {}
                        1 => segments.push((edge(ins[0]), edge(outs[0]))),
                        _ => {
                            let [a, b, c, d] = face.map(|i| val[i]);
                            let saddle = (a * c - b * d) / (a + c - b - d);
                            // A negative saddle joins the inside corners across the face.
                            let step = if saddle < 0.0 { 1 } else { 3 };
                            for &k in &ins {
                                segments.push((edge(k), edge((k + step) % 4)));
                            }
                        }
                    }
                }
                // Chain segments into loops; each edge starts exactly one segment.
                let mut next: HashMap<usize, usize> = segments.iter().copied().collect();
                while let Some(&start) = next.keys().min() {
                    let mut ring = vec![start];
                    let mut cur = next.remove(&start).expect("present");
                    while cur != start {
                        ring.push(cur);
                        cur = next.remove(&cur).expect("face segments form closed loops");
                    }
                    let ids: Vec<u32> = ring
                        .iter()
                        .map(|&key| {
                            let (a, b) = (key / 8, key % 8);
                            let oa = corner_offset(a);
                            let ob = corner_offset(b);
                            vertex_on_edge(
                                [x + oa[0], y + oa[1], z + oa[2]],
                                [x + ob[0], y + ob[1], z + ob[2]],
                                &mut vertices,
                            )
                        })
                        .collect();
                    for j in 1..ids.len() - 1 {
                        faces.push([ids[0], ids[j + 1], ids[j]]);
                    }
                }
            }
        }
    }
    Ok(TriMesh::from_parts_unchecked(vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sdf::Lattice;
    use crate::geometry::mesh::Aabb;

    fn lattice(half: f64, res: usize) -> Lattice {
        Lattice::covering(&Aabb { min: Vec3::repeat(-half), max: Vec3::repeat(half) }, res)
    }

    #[test]
    fn sphere_is_closed_outward_and_on_radius() {
        let g = SdfGrid::from_fn(lattice(1.3, 64), |p| p.norm() - 1.0);
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(m.is_watertight());
        assert_eq!(m.genus(), Some(0));
        let v = m.volume();
        assert!((v - 4.0 / 3.0 * std::f64::consts::PI).abs() < 0.02 * v, "{v}");
        for p in &m.vertices {
            assert!((p.norm() - 1.0).abs() < 1.5 * g.spacing());
        }
    }

    #[test]
    fn saddle_heavy_field_stays_manifold() {
        // Gyroid-like field: many ambiguous faces.
        let g = SdfGrid::from_fn(lattice(1.0, 24), |p| {
            let s = 5.0;
            ((s * p.x).sin() * (s * p.y).cos() + (s * p.y).sin() * (s * p.z).cos() + (s * p.z).sin() * (s * p.x).cos())
                    * 0.3
                + 2.0 * (p.norm_squared() - 0.4)
        });
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(m.is_watertight(), "{} open edges", m.open_edges().len());
        assert!(m.volume() > 0.0);
    }

    #[test]
    fn checkerboard_cell_faces_are_consistent() {
        // Alternating signs on every node: every cell face is a saddle.
        let l = lattice(1.0, 6);
        let g = SdfGrid::from_fn(l, |p| {
            let k = ((p - l.origin) / l.spacing).map(|c| c.round() as i64);
            let base = if (k.x + k.y + k.z) % 2 == 0 { -1.0 } else { 1.0 };
            // Break exact saddle ties and keep the lattice boundary outside.
            let border = (0..3).any(|a| k[a] == 0 || k[a] == 5);
            if border { 2.0 } else { base * (1.0 + 0.1 * p.x + 0.07 * p.y) }
        });
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(m.is_watertight(), "{} open edges", m.open_edges().len());
    }

    #[test]
    fn iso_outside_range_is_rejected() {
        let g = SdfGrid::from_fn(lattice(1.0, 8), |p| p.x + 5.0);
        assert!(matches!(marching_cubes(&g, 0.0), Err(Error::IsoOutOfRange { .. })));
    }
}
