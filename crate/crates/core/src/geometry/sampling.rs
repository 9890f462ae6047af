//! Cone-angle arithmetic and random direction sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Invert r = step / sin(alpha/2): the cone angle that keeps a streamline of
/// the given step size on a turn of the given radius of curvature.
pub fn cone_angle_from_radius(step_size: f64, radius: f64) -> Result<f64> {
    if !(step_size > 0.0) {
        return Err(Error::parameter(format!(
            "step_size must be positive, got {step_size}"
        )));
    }
    if radius < step_size {
        return Err(Error::parameter(format!(
            "radius ({radius}) must be >= step_size ({step_size})"
        )));
    }
    Ok(2.0 * (step_size / radius).asin())
}

/// Uniform draw (in solid angle) from the spherical cap
/// {u : u . axis >= cos(alpha)} around a unit axis.
pub fn sample_direction_in_cone<R: Rng>(axis: Vec3, alpha: f64, rng: &mut R) -> Vec3 {
    let cos_alpha = alpha.cos();
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let cos_theta = 1.0 - u * (1.0 - cos_alpha);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * v;
    let (e1, e2) = orthonormal_frame(axis);
    axis * cos_theta + (e1 * phi.cos() + e2 * phi.sin()) * sin_theta
}

/// Uniform draw over the whole sphere.
pub fn sample_direction_uniform_sphere<R: Rng>(rng: &mut R) -> Vec3 {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let z = 1.0 - 2.0 * u;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * v;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn orthonormal_frame(axis: Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let e1 = helper.cross(axis).normalized();
    let e2 = axis.cross(e1);
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn cone_angle_examples() {
        // step 0.5, radius 1.0 -> 2 asin(0.5) = pi/3.
        let a = cone_angle_from_radius(0.5, 1.0).unwrap();
        assert!((a - PI / 3.0).abs() < 1e-12);
        // Equal step and radius -> 180 degrees.
        let a = cone_angle_from_radius(0.7, 0.7).unwrap();
        assert!((a - PI).abs() < 1e-12);
        // Huge radius -> vanishing angle.
        let a = cone_angle_from_radius(0.5, 1e9).unwrap();
        assert!(a > 0.0 && a < 1.1e-9);
    }

    #[test]
    fn cone_angle_monotone_in_radius() {
        let mut last = f64::INFINITY;
        for r in [1.0, 2.0, 5.0, 50.0, 1e4] {
            let a = cone_angle_from_radius(0.5, r).unwrap();
            assert!(a < last);
            last = a;
        }
    }

    #[test]
    fn cone_angle_invalid_inputs() {
        assert!(cone_angle_from_radius(1.0, 0.5).is_err());
        assert!(cone_angle_from_radius(0.0, 1.0).is_err());
        assert!(cone_angle_from_radius(-1.0, 1.0).is_err());
    }

    #[test]
    fn radius_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let step = 0.1 + rng.gen::<f64>() * 2.0;
            let radius = step * (1.0 + rng.gen::<f64>() * 100.0);
            let alpha = cone_angle_from_radius(step, radius).unwrap();
            let back = step / (alpha / 2.0).sin();
            assert!((back - radius).abs() / radius < 1e-12);
        }
    }

    #[test]
    fn zero_alpha_returns_axis_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let axis = Vec3::new(0.6, -0.64, 0.48).normalized();
        for _ in 0..10 {
            let d = sample_direction_in_cone(axis, 0.0, &mut rng);
            assert_eq!(d, axis);
        }
    }

    #[test]
    fn cone_samples_stay_in_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &alpha in &[0.01, 0.4, PI / 2.0, PI] {
            let axis = sample_direction_uniform_sphere(&mut rng);
            for _ in 0..2000 {
                let d = sample_direction_in_cone(axis, alpha, &mut rng);
                assert!((d.norm() - 1.0).abs() < 1e-12);
                assert!(d.dot(axis) >= alpha.cos() - 1e-12);
            }
        }
    }

    #[test]
    fn cap_mean_matches_analytic() {
        // Uniform on the cap: E[d . axis] = (1 + cos(alpha)) / 2.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let axis = Vec3::new(0.0, 0.0, 1.0);
        let alpha = PI / 2.0;
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_direction_in_cone(axis, alpha, &mut rng).dot(axis))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn uniform_sphere_octants_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0u32; 8];
        for _ in 0..100_000 {
            let d = sample_direction_uniform_sphere(&mut rng);
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let octant = ((d.x > 0.0) as usize) | ((d.y > 0.0) as usize) << 1
                | ((d.z > 0.0) as usize) << 2;
            counts[octant] += 1;
        }
        for c in counts {
            assert!((c as i64 - 12_500).abs() <= 400, "octant count {c}");
        }
    }

    #[test]
    fn fixed_seed_reproducible() {
        let seq1: Vec<Vec3> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..16)
                .map(|_| sample_direction_uniform_sphere(&mut rng))
                .collect()
        };
        let seq2: Vec<Vec3> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..16)
                .map(|_| sample_direction_uniform_sphere(&mut rng))
                .collect()
        };
        assert_eq!(seq1, seq2);
    }
}
