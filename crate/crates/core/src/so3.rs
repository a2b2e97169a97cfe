//! Axis-angle rotations and their derivatives.
//!
//! Rotations are stored as axis-angle vectors `v = angle * axis` everywhere in
//! the crate. The derivative of `exp([v]x)` is expressed through the left
//! Jacobian of SO(3): `R(v + dv) ~ exp([J_l(v) dv]x) R(v)`.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const SMALL_ANGLE: f64 = 1e-4;

#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)` with series near zero.
#[inline]
fn coefficients(angle_sq: f64) -> (f64, f64, f64) {
    if angle_sq < SMALL_ANGLE * SMALL_ANGLE {
        let t2 = angle_sq;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let t = angle_sq.sqrt();
        let (s, c) = t.sin_cos();
        (s / t, (1.0 - c) / angle_sq, (t - s) / (angle_sq * t))
    }
}

/// Rodrigues' formula.
#[inline]
pub fn exp(v: &Vec3) -> Mat3 {
    let (a, b, _) = coefficients(v.norm_squared());
    let k = skew(v);
    Mat3::identity() + k * a + k * k * b
}

/// Left Jacobian of SO(3) at `v`.
#[inline]
pub fn left_jacobian(v: &Vec3) -> Mat3 {
    let (_, b, c) = coefficients(v.norm_squared());
    let k = skew(v);
    Mat3::identity() + k * b + k * k * c
}

/// Axis-angle vector of a rotation matrix, angle in `[0, pi]`.
pub fn log(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let w = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if angle < 1e-6 {
        return w * 0.5;
    }
    if std::f64::consts::PI - angle > 1e-6 {
        return w * (angle / (2.0 * angle.sin()));
    }
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    let m = r + Mat3::identity();
    let col = (0..3)
        .max_by(|&i, &j| m.column(i).norm().total_cmp(&m.column(j).norm()))
        .unwrap_or(0);
    let mut axis: Vec3 = m.column(col).into_owned().normalize();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

/// Wraps an axis-angle vector to the canonical range `|v| <= pi`.
pub fn canonical(v: &Vec3) -> Vec3 {
    let angle = v.norm();
    if angle <= std::f64::consts::PI {
        return *v;
    }
    let tau = 2.0 * std::f64::consts::PI;
    let wrapped = angle - tau * ((angle + std::f64::consts::PI) / tau).floor();
    *v * (wrapped / angle)
}

/// Geodesic distance between two rotations, radians in `[0, pi]`.
pub fn geodesic(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a * b.transpose();
    let w = Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
    (0.5 * w.norm()).atan2((rel.trace() - 1.0) * 0.5)
}

/// Pulls a gradient with respect to `R = exp([v]x)` back onto `v`.
#[inline]
pub fn pullback(v: &Vec3, r: &Mat3, grad_r: &Mat3) -> Vec3 {
    let a = grad_r * r.transpose();
    let s = Vec3::new(a[(2, 1)] - a[(1, 2)], a[(0, 2)] - a[(2, 0)], a[(1, 0)] - a[(0, 1)]);
    left_jacobian(v).transpose() * s
}

pub fn rot_z(angle: f64) -> Mat3 {
    exp(&Vec3::new(0.0, 0.0, angle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let r = exp(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let p = r * Vec3::x();
        assert_relative_eq!(p, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn log_near_pi_keeps_axis() {
        let v = Vec3::new(0.0, 1.0, 0.0) * (std::f64::consts::PI - 1e-9);
        let back = log(&exp(&v));
        assert_relative_eq!(exp(&back), exp(&v), epsilon = 1e-7);
    }

    #[test]
    fn geodesic_of_equal_rotations_is_exactly_zero() {
        let r = exp(&Vec3::new(0.4, -1.1, 2.0));
        assert_eq!(geodesic(&r, &r), 0.0);
    }

    proptest! {
        #[test]
        fn geodesic_matches_the_trace_formula(a in vec3(), b in vec3()) {
            let rel = exp(&a) * exp(&b).transpose();
            let reference = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos();
            prop_assume!(reference > 1e-3 && reference < std::f64::consts::PI - 1e-3);
            prop_assert!((geodesic(&exp(&a), &exp(&b)) - reference).abs() < 1e-9);
        }

        #[test]
        fn exp_is_orthonormal(v in vec3()) {
            let r = exp(&v);
            prop_assert!((r * r.transpose() - Mat3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn log_inverts_exp(v in vec3()) {
            let c = canonical(&v);
            prop_assume!(c.norm() < std::f64::consts::PI - 1e-3);
            prop_assert!((log(&exp(&v)) - c).norm() < 1e-9);
        }

        #[test]
        fn pullback_matches_finite_differences(v in vec3(), g in proptest::array::uniform9(-1.0..1.0f64)) {
            let grad_r = Mat3::from_row_slice(&g);
            let f = |v: &Vec3| exp(v).component_mul(&grad_r).sum();
            let analytic = pullback(&v, &exp(&v), &grad_r);
            let h = 1e-6;
            for k in 0..3 {
                let mut p = v;
                let mut m = v;
                p[k] += h;
                m[k] -= h;
                let numeric = (f(&p) - f(&m)) / (2.0 * h);
                prop_assert!((numeric - analytic[k]).abs() < 1e-7, "{numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn pullback_at_zero_and_tiny_angles() {
        let grad_r = Mat3::new(0.3, -0.2, 0.5, 0.1, 0.7, -0.4, 0.2, 0.0, 0.9);
        for scale in [0.0, 1e-9, 1e-5, 1e-3] {
            let v = Vec3::new(0.3, -0.5, 0.8) * scale;
            let f = |v: &Vec3| exp(v).component_mul(&grad_r).sum();
            let analytic = pullback(&v, &exp(&v), &grad_r);
            for k in 0..3 {
                let mut p = v;
                let mut m = v;
                p[k] += 1e-6;
                m[k] -= 1e-6;
                let numeric = (f(&p) - f(&m)) / 2e-6;
                assert!((numeric - analytic[k]).abs() < 1e-8);
            }
        }
    }
}
