use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::so3::Vec3;

use super::bvh::Bvh;
use super::mesh::{Aabb, TriMesh};

const MAGIC: &[u8; 4] = b"SDF1";

/// Regular lattice of sample nodes; index `x + dims.x * (y + dims.y * z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Lattice {
    /// Lattice covering `bounds` with `resolution` nodes along the longest axis.
    pub fn covering(bounds: &Aabb, resolution: usize) -> Self {
        let extent = bounds.extent();
        let spacing = extent.max() / (resolution - 1) as f64;
        let dims = [0, 1, 2].map(|k| ((extent[k] / spacing - 1e-9).ceil() as usize + 1).max(2));
        Lattice { origin: bounds.min, spacing, dims }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn node(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64, y as f64, z as f64) * self.spacing
    }

    pub fn node_at(&self, index: usize) -> Vec3 {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        self.node(x, y, z)
    }

    pub fn bounds(&self) -> Aabb {
        let far = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        ) * self.spacing;
        Aabb { min: self.origin, max: self.origin + far }
    }
}

/// Dense signed distance field, negative inside.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub lattice: Lattice,
    pub values: Vec<f32>,
}

/// Signed distance field of a watertight mesh over its AABB grown by `padding`.
pub fn compute_sdf(mesh: &TriMesh, padding: f64, resolution: usize) -> Result<SdfGrid> {
    if resolution < 8 {
        return Err(Error::Invalid(format!("resolution {resolution} < 8")));
    }
    if mesh.vertices.len() < 4 {
        return Err(Error::DegenerateMesh(format!("{} vertices, need at least 4", mesh.vertices.len())));
    }
    mesh.validate()?;
    let open_edges = mesh.open_edges();
    if !open_edges.is_empty() || mesh.faces.is_empty() {
        return Err(Error::NonWatertight { open_edges });
    }
    let lattice = Lattice::covering(&mesh.aabb().expanded(padding), resolution);
    Ok(sdf_on_lattice(mesh, lattice))
}

/// Samples the signed distance of a (watertight) mesh on `lattice`.
///
/// Unsigned distances come from the BVH. Signs use ray parity, but only at
/// nodes where the segment from the previous node along x might cross the
/// surface; elsewhere the sign is carried along the row.
pub fn sdf_on_lattice(mesh: &TriMesh, lattice: Lattice) -> SdfGrid {
    let bvh = Bvh::new(mesh);
    let [nx, ny, nz] = lattice.dims;
    let rows: Vec<Vec<f32>> = (0..ny * nz)
        .into_par_iter()
        .map(|row| {
            let (y, z) = (row % ny, row / ny);
            let mut out = Vec::with_capacity(nx);
            let mut prev: Option<(f64, bool)> = None;
            for x in 0..nx {
                let p = lattice.node(x, y, z);
                let d = bvh.closest(&p).distance;
                let inside = match prev {
                    Some((pd, pin)) if pd > lattice.spacing || d > lattice.spacing => pin,
                    _ => bvh.contains(&p),
                };
                prev = Some((d, inside));
                out.push(if inside { -d } else { d } as f32);
            }
            out
        })
        .collect();
    SdfGrid { lattice, values: rows.concat() }
}

impl SdfGrid {
    pub fn new(lattice: Lattice, values: Vec<f32>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LengthMismatch(format!(
                "{} values for lattice of {} nodes",
                values.len(),
                lattice.len()
            )));
        }
        if !(lattice.spacing > 0.0) || lattice.dims.iter().any(|&d| d < 2) {
            return Err(Error::Invalid("lattice needs positive spacing and >= 2 nodes per axis".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite SDF value".into()));
        }
        Ok(SdfGrid { lattice, values })
    }

    /// Field sampled from an analytic function.
    pub fn from_fn(lattice: Lattice, f: impl Fn(&Vec3) -> f64 + Sync) -> Self {
        let values = (0..lattice.len()).into_par_iter().map(|i| f(&lattice.node_at(i)) as f32).collect();
        SdfGrid { lattice, values }
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.lattice.index(x, y, z)] as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
    }

    /// Trilinear value and gradient. Queries outside the lattice are clamped to
    /// it and the clamping distance is added to the value.
    pub fn sample_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        let l = &self.lattice;
        let b = l.bounds();
        let q = p.sup(&b.min).inf(&b.max);
        let outside = (p - q).norm();
        let g = (q - l.origin) / l.spacing;
        let mut i = [0usize; 3];
        let mut t = [0.0; 3];
        for k in 0..3 {
            let cell = (g[k].floor() as isize).clamp(0, l.dims[k] as isize - 2) as usize;
            i[k] = cell;
            t[k] = g[k] - cell as f64;
        }
        let c = |dx: usize, dy: usize, dz: usize| self.at(i[0] + dx, i[1] + dy, i[2] + dz);
        let (c000, c100, c010, c110) = (c(0, 0, 0), c(1, 0, 0), c(0, 1, 0), c(1, 1, 0));
        let (c001, c101, c011, c111) = (c(0, 0, 1), c(1, 0, 1), c(0, 1, 1), c(1, 1, 1));
        let [tx, ty, tz] = t;
        let x00 = c000 + (c100 - c000) * tx;
        let x10 = c010 + (c110 - c010) * tx;
        let x01 = c001 + (c101 - c001) * tx;
        let x11 = c011 + (c111 - c011) * tx;
        let y0 = x00 + (x10 - x00) * ty;
        let y1 = x01 + (x11 - x01) * ty;
        let value = y0 + (y1 - y0) * tz;
        let dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * ty;
        let dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * ty;
        let gx = dx0 + (dx1 - dx0) * tz;
        let gy = (x10 - x00) + ((x11 - x01) - (x10 - x00)) * tz;
        let gz = y1 - y0;
        let mut grad = Vec3::new(gx, gy, gz) / l.spacing;
        if outside > 0.0 {
            grad = (p - q) / outside;
        }
        (value + outside, grad)
    }

    pub fn sample(&self, p: &Vec3) -> f64 {
        self.sample_with_gradient(p).0
    }

    /// Resamples onto another lattice by trilinear interpolation.
    pub fn resample(&self, lattice: Lattice) -> SdfGrid {
        if lattice == self.lattice {
            return self.clone();
        }
        SdfGrid::from_fn(lattice, |p| self.sample(p))
    }

    /// Largest `|Δvalue| - sqrt(3)·spacing` over axis-adjacent nodes (≤ 0 for a
    /// distance field).
    pub fn lipschitz_excess(&self) -> f64 {
        let [nx, ny, nz] = self.lattice.dims;
        let bound = 3f64.sqrt() * self.lattice.spacing;
        let mut worst = f64::NEG_INFINITY;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let v = self.at(x, y, z);
                    if x + 1 < nx {
                        worst = worst.max((self.at(x + 1, y, z) - v).abs() - bound);
                    }
                    if y + 1 < ny {
                        worst = worst.max((self.at(x, y + 1, z) - v).abs() - bound);
                    }
                    if z + 1 < nz {
                        worst = worst.max((self.at(x, y, z + 1) - v).abs() - bound);
                    }
                }
            }
        }
        worst
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let l = &self.lattice;
        let mut out = Vec::with_capacity(4 + 32 + 12 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        for k in 0..3 {
            out.extend_from_slice(&l.origin[k].to_le_bytes());
        }
        out.extend_from_slice(&l.spacing.to_le_bytes());
        for d in l.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        let short = |_| Error::parse(source, "truncated SDF header");
        r.read_exact(&mut magic).map_err(short)?;
        if &magic != MAGIC {
            return Err(Error::parse(source, format!("bad magic {magic:?}")));
        }
        let mut f64s = [0.0; 4];
        for slot in &mut f64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(short)?;
            *slot = f64::from_le_bytes(b);
        }
        let mut dims = [0usize; 3];
        for slot in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(short)?;
            *slot = u32::from_le_bytes(b) as usize;
        }
        let lattice = Lattice { origin: Vec3::new(f64s[0], f64s[1], f64s[2]), spacing: f64s[3], dims };
        if r.len() != 4 * lattice.len() {
            return Err(Error::parse(
                source,
                format!("expected {} value bytes, found {}", 4 * lattice.len(), r.len()),
            ));
        }
        let values = r.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        SdfGrid::new(lattice, values).map_err(|e| Error::parse(source, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{box_mesh, icosphere};
    use rand::{Rng, SeedableRng};

    #[test]
    fn cube_centre_and_outside() {
        let cube = box_mesh(Vec3::repeat(0.5), [2, 2, 2]);
        let g = compute_sdf(&cube, 0.5, 32).unwrap();
        let h = g.spacing();
        assert!((g.sample(&Vec3::zeros()) + 0.5).abs() < h);
        assert!((g.sample(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() < h);
    }

    #[test]
    fn sphere_matches_analytic_distance() {
        let mesh = icosphere(1.0, 3);
        let g = compute_sdf(&mesh, 0.2, 64).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let b = g.lattice.bounds();
        for _ in 0..1000 {
            let p = Vec3::from_fn(|k, _| rng.random_range(b.min[k]..b.max[k]));
            let err = (g.sample(&p) - (p.norm() - 1.0)).abs();
            assert!(err < g.spacing(), "{p:?}: {err}");
        }
        assert!(g.lipschitz_excess() <= 1e-6);
    }

    #[test]
    fn open_mesh_is_rejected_with_edges() {
        let mut m = box_mesh(Vec3::repeat(0.5), [1, 1, 1]);
        m.faces.pop();
        match compute_sdf(&m, 0.1, 16) {
            Err(Error::NonWatertight { open_edges }) => assert_eq!(open_edges.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_round_trip_is_lossless() {
        let g = compute_sdf(&icosphere(0.5, 1), 0.1, 12).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(&bytes[..4], b"SDF1");
        assert_eq!(SdfGrid::from_bytes(&bytes, "mem").unwrap(), g);
        assert!(SdfGrid::from_bytes(&bytes[..bytes.len() - 1], "mem").is_err());
    }

    #[test]
    fn trilinear_gradient_matches_finite_difference() {
        let g = compute_sdf(&icosphere(1.0, 2), 0.3, 24).unwrap();
        let p = Vec3::new(0.31, -0.42, 0.57);
        let (_, grad) = g.sample_with_gradient(&p);
        let h = 1e-6;
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            let fd = (g.sample(&(p + e)) - g.sample(&(p - e))) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-5, "{k}: {fd} vs {}", grad[k]);
        }
    }
}
