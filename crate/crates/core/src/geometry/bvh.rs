use crate::so3::Vec3;

use super::mesh::{Aabb, TriMesh};

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Möller–Trumbore; returns the ray parameter of a hit with `t > 0`.
fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = inv * e2.dot(&q);
    (t > 1e-12).then_some(t)
}

fn ray_hits_box(origin: &Vec3, inv_dir: &Vec3, b: &Aabb) -> bool {
    let mut tmin: f64 = 0.0;
    let mut tmax = f64::INFINITY;
    for k in 0..3 {
        let t1 = (b.min[k] - origin[k]) * inv_dir[k];
        let t2 = (b.max[k] - origin[k]) * inv_dir[k];
        tmin = tmin.max(t1.min(t2));
        tmax = tmax.min(t1.max(t2));
    }
    tmin <= tmax
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `start..start+count` into `order`; inner: children at `left`, `left + 1`.
    start: u32,
    count: u32,
    left: u32,
}

/// Bounding-volume hierarchy over the faces of a mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Vec3; 3]>,
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closest {
    pub point: Vec3,
    pub distance: f64,
    pub face: usize,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        nodes.push(Node { bounds: Aabb::empty(), start: 0, count: tris.len() as u32, left: 0 });
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let (start, count) = (nodes[ni].start as usize, nodes[ni].count as usize);
            let slice = &mut order[start..start + count];
            let mut bounds = Aabb::empty();
            let mut cbounds = Aabb::empty();
            for &f in slice.iter() {
                for v in &tris[f as usize] {
                    bounds.grow(v);
                }
                cbounds.grow(&centroids[f as usize]);
            }
            nodes[ni].bounds = bounds;
            if count <= LEAF_SIZE {
                continue;
            }
            let axis = cbounds.extent().imax();
            let mid = count / 2;
            slice.select_nth_unstable_by(mid, |&a, &b| {
                centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
            });
            let left = nodes.len();
            nodes.push(Node { bounds: Aabb::empty(), start: start as u32, count: mid as u32, left: 0 });
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: (start + mid) as u32,
                count: (count - mid) as u32,
                left: 0,
            });
            nodes[ni].left = left as u32;
            nodes[ni].count = 0;
            stack.push(left);
            stack.push(left + 1);
        }
        Bvh { nodes, order, tris }
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Closest surface point to `p`.
    pub fn closest(&self, p: &Vec3) -> Closest {
        let mut best = Closest { point: *p, distance: f64::INFINITY, face: usize::MAX };
        let mut best_sq = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_sq(p) >= best_sq {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = &self.tris[f as usize];
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d = (q - p).norm_squared();
                    if d < best_sq {
                        best_sq = d;
                        best = Closest { point: q, distance: 0.0, face: f as usize };
                    }
                }
            } else {
                let (l, r) = (node.left as usize, node.left as usize + 1);
                let dl = self.nodes[l].bounds.distance_sq(p);
                let dr = self.nodes[r].bounds.distance_sq(p);
                // Visit the nearer child first.
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.distance = best_sq.sqrt();
        best
    }

    /// Number of surface crossings along the ray `origin + t dir`, `t > 0`.
    pub fn ray_crossings(&self, origin: &Vec3, dir: &Vec3) -> usize {
        let inv = dir.map(|d| 1.0 / d);
        let mut hits = 0;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !ray_hits_box(origin, &inv, &node.bounds) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = &self.tris[f as usize];
                    if ray_triangle(origin, dir, a, b, c).is_some() {
                        hits += 1;
                    }
                }
            } else {
                stack.push(node.left as usize);
                stack.push(node.left as usize + 1);
            }
        }
        hits
    }

    /// Inside test by ray-crossing parity, majority vote over three
    /// irrational directions so that edge and vertex grazes are outvoted.
    pub fn contains(&self, p: &Vec3) -> bool {
        #[allow(clippy::approx_constant)]
        const DIRS: [[f64; 3]; 3] = [
            [0.577_215_664_9, 0.618_033_988_7, 0.532_088_886_2],
            [-0.707_106_781_2, 0.301_029_995_6, 0.639_011_257_3],
            [0.271_828_182_8, -0.841_470_984_8, -0.467_912_346_1],
        ];
        let votes = DIRS
            .iter()
            .filter(|d| self.ray_crossings(p, &Vec3::from(**d)) % 2 == 1)
            .count();
        votes >= 2
    }

    /// Signed distance, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.closest(p).distance;
        if self.contains(p) {
            -d
        } else {
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{icosphere, torus};
    use proptest::prelude::*;

    fn brute_force(mesh: &TriMesh, p: &Vec3) -> f64 {
        (0..mesh.faces.len())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), a);
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.25, 0.25, 3.0), &a, &b, &c), Vec3::new(0.25, 0.25, 0.0));
        let q = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn closest_matches_brute_force(x in -2.0..2.0f64, y in -2.0..2.0f64, z in -1.0..1.0f64) {
            let mesh = torus(1.0, 0.3, 25, 10);
            let bvh = Bvh::new(&mesh);
            let p = Vec3::new(x, y, z);
            prop_assert!((bvh.closest(&p).distance - brute_force(&mesh, &p)).abs() < 1e-12);
        }

        #[test]
        fn parity_matches_sphere(x in -1.5..1.5f64, y in -1.5..1.5f64, z in -1.5..1.5f64) {
            let mesh = icosphere(1.0, 2);
            let bvh = Bvh::new(&mesh);
            let p = Vec3::new(x, y, z);
            // Stay clear of the polyhedral approximation band.
            prop_assume!((p.norm() - 1.0).abs() > 0.05);
            prop_assert_eq!(bvh.contains(&p), p.norm() < 1.0);
        }
    }
}
