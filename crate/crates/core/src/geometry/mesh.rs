use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::so3::{Mat3, Vec3};

/// Faces with an area below this are considered degenerate (m^2).
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn expanded(&self, pad: f64) -> Aabb {
        Aabb { min: self.min - Vec3::repeat(pad), max: self.max + Vec3::repeat(pad) }
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let d = (self.min - p).sup(&Vec3::zeros()).sup(&(p - self.max));
        d.norm_squared()
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }
}

/// Indexed triangle mesh. Faces are wound counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range indices and degenerate faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh without validation (e.g. iso-surface output, which may
    /// contain needle triangles where the surface grazes a lattice node).
    pub fn from_parts_unchecked(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        TriMesh { vertices, faces }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if let Some(v) = self.vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::DegenerateMesh(format!("non-finite vertex {v:?}")));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&k| k >= n) {
                return Err(Error::DegenerateMesh(format!("face {i} index out of range: {f:?}")));
            }
            let area = self.face_area(i);
            if area < DEGENERATE_AREA {
                return Err(Error::DegenerateMesh(format!("face {i} has area {area:e} m^2")));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Signed enclosed volume (positive for outward winding).
    pub fn volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Undirected edges not shared by exactly two faces, sorted.
    pub fn open_edges(&self) -> Vec<(u32, u32)> {
        let mut open: Vec<_> =
            self.edge_counts().into_iter().filter(|&(_, c)| c != 2).map(|(e, _)| e).collect();
        open.sort_unstable();
        open
    }

    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    /// `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &k in f {
                used[k as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_counts().len() as i64 + self.faces.len() as i64
    }

    /// Number of face-connected components.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let a = find(&mut parent, f[0] as usize);
                let b = find(&mut parent, f[k] as usize);
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut roots: Vec<usize> =
            self.faces.iter().map(|f| find(&mut parent, f[0] as usize)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Genus of a closed, connected, orientable surface.
    pub fn genus(&self) -> Option<i64> {
        if !self.is_watertight() || self.connected_components() != 1 {
            return None;
        }
        Some((2 - self.euler_characteristic()) / 2)
    }

    /// One-ring vertex neighbourhoods.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nbrs[a as usize].push(b);
                nbrs[b as usize].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| rotation * v + translation).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn scaled(&self, scale: &Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.component_mul(scale)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Deterministic farthest-point subsample of the vertices, starting at vertex 0.
    pub fn farthest_point_sample(&self, count: usize) -> Vec<Vec3> {
        let n = self.vertices.len();
        if n <= count {
            return self.vertices.clone();
        }
        let mut picked = Vec::with_capacity(count);
        let mut dist = vec![f64::INFINITY; n];
        let mut next = 0usize;
        for _ in 0..count {
            let p = self.vertices[next];
            picked.push(p);
            let mut best = (0usize, -1.0);
            for (i, v) in self.vertices.iter().enumerate() {
                let d = (v - p).norm_squared();
                if d < dist[i] {
                    dist[i] = d;
                }
                if dist[i] > best.1 {
                    best = (i, dist[i]);
                }
            }
            next = best.0;
        }
        picked
    }

    pub fn read_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text, &path.display().to_string())
    }

    /// Parses `v` and `f` records (1-based, negative indices allowed); other
    /// records are ignored. Polygons are fan-triangulated.
    pub fn parse_obj(text: &str, source: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let loc = || format!("{source}:{}", lineno + 1);
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut c = [0.0; 3];
                    for slot in &mut c {
                        let tok = parts.next().ok_or_else(|| Error::parse(loc(), "vertex needs 3 coordinates"))?;
                        *slot = tok.parse().map_err(|e| Error::parse(loc(), format!("bad coordinate {tok:?}: {e}")))?;
                    }
                    vertices.push(Vec3::from(c));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in parts {
                        let head = tok.split('/').next().unwrap_or(tok);
                        let i: i64 = head.parse().map_err(|e| Error::parse(loc(), format!("bad index {tok:?}: {e}")))?;
                        let resolved = if i > 0 { i - 1 } else { vertices.len() as i64 + i };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(Error::parse(loc(), format!("index {i} out of range")));
                        }
                        idx.push(resolved as u32);
                    }
                    if idx.len() < 3 {
                        return Err(Error::parse(loc(), "face needs at least 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Ok(TriMesh { vertices, faces })
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 40 + self.faces.len() * 24);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

/// Axis-aligned box centred at the origin, each face split into a regular
/// quad grid. `divisions` counts grid cells along x, y and z.
pub fn box_mesh(half_extents: Vec3, divisions: [usize; 3]) -> TriMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let d = divisions.map(|n| n.max(1) as i64);
    let mut vertex = |g: [i64; 3], vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(g).or_insert_with(|| {
            let p = Vec3::from_fn(|k, _| -half_extents[k] + 2.0 * half_extents[k] * g[k] as f64 / d[k] as f64);
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };
    // For each face: fixed axis, side, and the two in-plane axes ordered so
    // that (u x v) points outward.
    let sides = [(0, 1, 1, 2), (0, 0, 2, 1), (1, 1, 2, 0), (1, 0, 0, 2), (2, 1, 0, 1), (2, 0, 1, 0)];
    for &(axis, side, u, v) in &sides {
        for i in 0..d[u] {
            for j in 0..d[v] {
                let corner = |di: i64, dj: i64| {
                    let mut g = [0i64; 3];
                    g[axis] = if side == 1 { d[axis] } else { 0 };
                    g[u] = i + di;
                    g[v] = j + dj;
                    g
                };
                let a = vertex(corner(0, 0), &mut vertices);
                let b = vertex(corner(1, 0), &mut vertices);
                let c = vertex(corner(1, 1), &mut vertices);
                let e = vertex(corner(0, 1), &mut vertices);
                faces.push([a, b, c]);
                faces.push([a, c, e]);
            }
        }
    }
    TriMesh { vertices, faces }
}

/// Box with face grids as close as possible to `cell` metres.
pub fn box_mesh_with_cell(half_extents: Vec3, cell: f64) -> TriMesh {
    let divisions = [0, 1, 2].map(|k| ((2.0 * half_extents[k] / cell).round() as usize).max(1));
    box_mesh(half_extents, divisions)
}

/// Subdivided icosahedron projected to a sphere; `20 * 4^level` faces.
pub fn icosphere(radius: f64, level: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vec3::from(*c).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize());
                (vertices.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriMesh { vertices, faces }
}

/// Torus around the z axis with `major x minor` quads (2 triangles each).
pub fn torus(major_radius: f64, minor_radius: f64, major: usize, minor: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = i as f64 / major as f64 * std::f64::consts::TAU;
        for j in 0..minor {
            let v = j as f64 / minor as f64 * std::f64::consts::TAU;
            let r = major_radius + minor_radius * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor_radius * v.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % major) * minor + (j % minor)) as u32;
    let mut faces = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box_is_closed_with_outward_winding() {
        let m = box_mesh(Vec3::new(0.5, 0.25, 0.1), [4, 3, 2]);
        assert!(m.is_watertight());
        assert_eq!(m.genus(), Some(0));
        assert_relative_eq!(m.volume(), 1.0 * 0.5 * 0.2, epsilon = 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn icosphere_face_count_and_volume() {
        let m = icosphere(1.0, 3);
        assert_eq!(m.faces.len(), 1280);
        assert!(m.is_watertight());
        let v = m.volume();
        assert!(v > 4.0 && v < 4.0 * std::f64::consts::PI / 3.0 + 1e-9, "{v}");
    }

    #[test]
    fn torus_has_genus_one() {
        let m = torus(1.0, 0.3, 25, 10);
        assert_eq!(m.faces.len(), 500);
        assert_eq!(m.genus(), Some(1));
        assert!(m.volume() > 0.0);
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let m = icosphere(0.731, 1);
        let back = TriMesh::parse_obj(&m.to_obj_string(), "mem").unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn obj_polygons_and_slashes() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3 4\n";
        let m = TriMesh::parse_obj(text, "mem").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_reports_line_of_bad_record() {
        let err = TriMesh::parse_obj("v 0 0 0\nv 1 x 0\n", "mesh.obj").unwrap_err();
        assert!(err.to_string().contains("mesh.obj:2"), "{err}");
    }

    #[test]
    fn degenerate_face_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0, Vec3::y()];
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 2]]), Err(Error::DegenerateMesh(_))));
    }

    #[test]
    fn farthest_point_sample_is_greedy() {
        let m = box_mesh(Vec3::new(0.3, 0.2, 0.1), [6, 4, 2]);
        let s = m.farthest_point_sample(12);
        assert_eq!(s[0], m.vertices[0]);
        for k in 1..s.len() {
            let gap = |p: &Vec3| s[..k].iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            let best = m.vertices.iter().map(gap).fold(0.0, f64::max);
            assert_eq!(gap(&s[k]), best);
        }
    }
}
