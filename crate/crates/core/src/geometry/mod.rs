//! Triangle meshes, signed distance grids, iso-surface extraction and
//! closest-point queries.

mod bvh;
mod marching;
mod mesh;
mod sdf;

pub use bvh::{closest_point_on_triangle, Bvh, Closest};
pub use marching::marching_cubes;
pub use mesh::{box_mesh, box_mesh_with_cell, icosphere, torus, Aabb, TriMesh, DEGENERATE_AREA};
pub use sdf::{compute_sdf, sdf_on_lattice, Lattice, SdfGrid};

use crate::so3::Vec3;

/// Default grid resolution along the longest padded axis.
pub const DEFAULT_RESOLUTION: usize = 64;
/// Default padding as a fraction of the AABB diagonal.
pub const DEFAULT_PADDING_FRACTION: f64 = 0.1;

/// Anything that can answer closest-surface-point queries.
pub trait Surface {
    /// Closest surface point to `query` and its distance.
    fn nearest(&self, query: &Vec3) -> (Vec3, f64);
}

impl Surface for Bvh {
    fn nearest(&self, query: &Vec3) -> (Vec3, f64) {
        let c = self.closest(query);
        (c.point, c.distance)
    }
}

impl Surface for SdfGrid {
    /// Projects along the interpolated gradient until the sampled value
    /// vanishes.
    fn nearest(&self, query: &Vec3) -> (Vec3, f64) {
        let tol = 1e-4 * self.spacing();
        let mut p = *query;
        for _ in 0..64 {
            let (v, g) = self.sample_with_gradient(&p);
            if v.abs() < tol {
                break;
            }
            let n2 = g.norm_squared();
            if n2 < 1e-24 {
                break;
            }
            p -= g * (v / n2);
        }
        (p, (p - query).norm())
    }
}

/// Closest point on a mesh or grid surface to `query`.
pub fn nearest_surface_point(surface: &impl Surface, query: &Vec3) -> (Vec3, f64) {
    surface.nearest(query)
}

/// Builds the SDF of `mesh` with the default padding and resolution.
pub fn default_sdf(mesh: &TriMesh) -> crate::Result<SdfGrid> {
    compute_sdf(mesh, DEFAULT_PADDING_FRACTION * mesh.aabb().diagonal(), DEFAULT_RESOLUTION)
}

/// Symmetric Chamfer distance between two vertex sets measured against the
/// other mesh's surface (mean of the two one-sided mean distances).
pub fn surface_chamfer(a: &TriMesh, b: &TriMesh) -> f64 {
    let one_sided = |from: &TriMesh, to: &TriMesh| {
        let bvh = Bvh::new(to);
        from.vertices.iter().map(|v| bvh.closest(v).distance).sum::<f64>() / from.vertices.len() as f64
    };
    0.5 * (one_sided(a, b) + one_sided(b, a))
}
