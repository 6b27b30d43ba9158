//! Device pose and orientation.
//!
//! Orientation uses the yaw/pitch/roll triple of a handheld device. The
//! rotation is composed as `R = Rz(yaw) * Rx(pitch) * Ry(roll)` and maps
//! device coordinates to room coordinates. At rest the screen (and the
//! photodiode on it) faces the ceiling, i.e. the device normal is `+z`.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Joint position (m) and orientation (deg) of a user device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Yaw in `[0, 360)`.
    pub alpha: f64,
    /// Pitch in `[-180, 180)`.
    pub beta: f64,
    /// Roll in `[-90, 90)`.
    pub gamma: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Pose {
            x,
            y,
            z,
            alpha,
            beta,
            gamma,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn angles_in_range(&self) -> bool {
        (0.0..360.0).contains(&self.alpha)
            && (-180.0..180.0).contains(&self.beta)
            && (-90.0..90.0).contains(&self.gamma)
    }

    /// Euclidean distance between the two positions.
    pub fn distance(&self, other: &Pose) -> f64 {
        (self.position() - other.position()).norm()
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }
}

/// Wraps an angle into `[0, 360)`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let w = angle.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Absolute angular difference on the circle, in `[0, 180]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = wrap_degrees(a - b);
    d.min(360.0 - d)
}

pub fn rotation_matrix(alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
    let (sa, ca) = alpha.to_radians().sin_cos();
    let (sb, cb) = beta.to_radians().sin_cos();
    let (sg, cg) = gamma.to_radians().sin_cos();
    #[rustfmt::skip]
    let rz = Matrix3::new(
        ca, -sa, 0.0,
        sa,  ca, 0.0,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let rx = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0,  cb, -sb,
        0.0,  sb,  cb,
    );
    #[rustfmt::skip]
    let ry = Matrix3::new(
         cg, 0.0,  sg,
        0.0, 1.0, 0.0,
        -sg, 0.0,  cg,
    );
    rz * rx * ry
}

/// Unit normal of the device screen in room coordinates.
pub fn ue_normal(pose: &Pose) -> Vec3 {
    rotation_matrix(pose.alpha, pose.beta, pose.gamma) * Vec3::new(0.0, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn identity_at_zero_angles() {
        let r = rotation_matrix(0.0, 0.0, 0.0);
        assert!(max_abs(&(r - Matrix3::identity())) == 0.0);
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let r = rotation_matrix(90.0, 0.0, 0.0);
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn random_rotations_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = rng.gen_range(0.0..360.0);
            let b = rng.gen_range(-180.0..180.0);
            let g = rng.gen_range(-90.0..90.0);
            let r = rotation_matrix(a, b, g);
            assert!(max_abs(&(r * r.transpose() - Matrix3::identity())) < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rest_normal_faces_ceiling() {
        let n = ue_normal(&Pose::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0));
        assert_eq!(n, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn pitch_180_faces_floor() {
        let n = ue_normal(&Pose::new(1.0, 1.0, 1.0, 37.0, -180.0, 0.0));
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).amax() < 1e-12);
    }

    #[test]
    fn wrap_is_exact_at_boundaries() {
        assert_eq!(wrap_degrees(360.0), 0.0);
        assert_eq!(wrap_degrees(-1e-300), 0.0);
        assert_eq!(wrap_degrees(-90.0), 270.0);
        assert_eq!(angle_difference(350.0, 10.0), 20.0);
    }

    proptest::proptest! {
        #[test]
        fn normal_is_unit(a in 0.0f64..360.0, b in -180.0f64..180.0, g in -90.0f64..90.0) {
            let n = ue_normal(&Pose::new(0.0, 0.0, 0.0, a, b, g));
            proptest::prop_assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }
}
