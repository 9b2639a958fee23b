//! Rotation conventions.
//!
//! Rotations live as 3x3 matrices everywhere inside the crate; axis-angle
//! (Rodrigues) vectors appear only at serialization boundaries and when
//! exactifying a linearized rotation update. These helpers pin the
//! convention in one place.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Exponential map: axis-angle vector (axis scaled by angle in radians) to a
/// proper rotation matrix.
pub fn rotation_from_scaled_axis(v: Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(v).into_inner()
}

/// Logarithm map: proper rotation matrix to its axis-angle vector. The input
/// is trusted to be orthonormal (our rotations are products of exact
/// Rodrigues and SVD factors).
pub fn scaled_axis_from_rotation(m: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*m).scaled_axis()
}

/// Cross-product (skew-symmetric) matrix: `skew(a) * b == a x b`.
pub fn skew(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_axis_angle() {
        let v = Vector3::new(0.3, -1.1, 0.7);
        let m = rotation_from_scaled_axis(v);
        let back = scaled_axis_from_rotation(&m);
        assert!((v - back).norm() < 1e-12);
        // Proper rotation: orthonormal with determinant +1.
        assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-12);
        assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skew_reproduces_cross_product() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let b = Vector3::new(-2.0, 0.5, 4.0);
        assert!((skew(a) * b - a.cross(&b)).norm() < 1e-15);
    }

    #[test]
    fn small_angle_matches_first_order_form() {
        let w = Vector3::new(1e-4, -2e-4, 5e-5);
        let exact = rotation_from_scaled_axis(w);
        let linear = Matrix3::identity() + skew(w);
        assert!((exact - linear).norm() < 1e-7);
    }
}
