//! Closed-form helpers for the round sphere through its embedding in ℝ³.

use nalgebra::{DMatrix, Matrix3, Vector3};

pub fn unit_point(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Orthonormal tangent frame (e_θ, e_φ) at (θ, φ).
pub fn unit_frame(theta: f64, phi: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vector3::new(ct * cp, ct * sp, -st), Vector3::new(-sp, cp, 0.0))
}

pub fn to_angles(p: &Vector3<f64>) -> (f64, f64) {
    let r = p.norm();
    let theta = (p.z / r).clamp(-1.0, 1.0).acos();
    let mut phi = p.y.atan2(p.x);
    if phi < 0.0 {
        phi += 2.0 * std::f64::consts::PI;
    }
    (theta, phi)
}

/// Angle between unit vectors, stable near 0 and π.
pub fn angle(p: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    p.cross(q).norm().atan2(p.dot(q))
}

/// Great-circle angle between (θ₁,φ₁) and (θ₂,φ₂) by the haversine formula, accurate for nearby points.
pub fn haversine_angle(t1: f64, p1: f64, t2: f64, p2: f64) -> f64 {
    let a = ((t2 - t1) / 2.0).sin().powi(2) + t1.sin() * t2.sin() * ((p2 - p1) / 2.0).sin().powi(2);
    if a <= 0.5 {
        2.0 * a.sqrt().asin()
    } else {
        std::f64::consts::PI - 2.0 * (1.0 - a).max(0.0).sqrt().asin()
    }
}

/// Rotation taking unit p to unit q about the axis p × q (parallel transport along the great circle).
pub fn transport_rotation(p: &Vector3<f64>, q: &Vector3<f64>) -> Matrix3<f64> {
    let c = p.dot(q);
    let k = q * p.transpose() - p * q.transpose();
    Matrix3::identity() + k + k * k / (1.0 + c)
}

/// Matrix ⟨f_a, R e_b⟩ of an ambient map between two tangent frames.
pub fn frame_matrix(to: &[Vector3<f64>], rot: &Matrix3<f64>, from: &[Vector3<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(to.len(), from.len(), |a, b| to[a].dot(&(rot * from[b])))
}

/// Unit-speed exponential in the embedding: start p, unit tangent u, arc angle s.
pub fn exp_unit(p: &Vector3<f64>, u: &Vector3<f64>, s: f64) -> Vector3<f64> {
    p * s.cos() + u * s.sin()
}

/// Tangent vector w at p (ambient) of length angle(p,q) pointing to q.
pub fn log_unit(p: &Vector3<f64>, q: &Vector3<f64>) -> Vector3<f64> {
    let d = angle(p, q);
    let perp = q - p * p.dot(q);
    let n = perp.norm();
    if n == 0.0 {
        Vector3::zeros()
    } else {
        perp * (d / n)
    }
}

/// sin(u)/u with a series near 0.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// (1 − sinc²(u)) / u² with a series near 0.
pub fn one_minus_sinc2_over_u2(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        1.0 / 3.0 - 2.0 * u2 / 45.0 + u2 * u2 / 315.0
    } else {
        let s = sinc(u);
        (1.0 - s * s) / (u * u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_moves_p_to_q_and_is_orthogonal() {
        let p = unit_point(0.7, 0.2);
        let q = unit_point(1.9, 2.5);
        let r = transport_rotation(&p, &q);
        assert!((r * p - q).norm() < 1e-14);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn series_branches_match() {
        for u in [9.9e-4, 1.01e-3] {
            let s = sinc(u);
            let direct = (1.0 - s * s) / (u * u);
            assert!((one_minus_sinc2_over_u2(u) - direct).abs() < 1e-9);
        }
    }
}
