//! FOD volume storage, coefficient interpolation, and amplitude evaluation.

use crate::error::{Error, Result};
use crate::geometry::{Affine, DiscretizedSphere, ShBasis, Vec3};

/// 4-D volume of even-order SH coefficients with a world affine.
///
/// Coefficients are stored voxel-major with the channel contiguous:
/// `((x * ny + y) * nz + z) * ncoeff + c`.
#[derive(Debug, Clone)]
pub struct FodImage {
    pub dims: (usize, usize, usize, usize),
    pub voxel_size: [f64; 3],
    pub affine: Affine,
    pub coefficients: Vec<f64>,
    pub lmax: u32,
}

impl FodImage {
    pub fn new(
        dims: (usize, usize, usize, usize),
        affine: Affine,
        coefficients: Vec<f64>,
    ) -> Result<FodImage> {
        let (nx, ny, nz, nc) = dims;
        if coefficients.len() != nx * ny * nz * nc {
            return Err(Error::format(format!(
                "coefficient buffer has {} values, dims {:?} require {}",
                coefficients.len(),
                dims,
                nx * ny * nz * nc
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                "coefficients: non-finite value in FOD volume".to_string(),
            ));
        }
        let lmax = lmax_from_ncoeffs(nc)?;
        let voxel_size = affine.voxel_size();
        Ok(FodImage {
            dims,
            voxel_size,
            affine,
            coefficients,
            lmax,
        })
    }

    pub fn n_coeffs(&self) -> usize {
        self.dims.3
    }

    fn voxel_offset(&self, x: usize, y: usize, z: usize) -> usize {
        ((x * self.dims.1 + y) * self.dims.2 + z) * self.dims.3
    }

    pub fn coeffs_at_voxel(&self, x: usize, y: usize, z: usize) -> &[f64] {
        let lo = self.voxel_offset(x, y, z);
        &self.coefficients[lo..lo + self.dims.3]
    }

    pub fn coeffs_at_voxel_mut(&mut self, x: usize, y: usize, z: usize) -> &mut [f64] {
        let lo = self.voxel_offset(x, y, z);
        let nc = self.dims.3;
        &mut self.coefficients[lo..lo + nc]
    }

    /// Trilinear interpolation of all channels at a world position.
    /// Corners outside the volume contribute zero, so amplitudes decay to
    /// zero at the edge and out-of-volume positions return the zero vector.
    pub fn interpolate_coeffs_into(&self, pos: Vec3, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dims.3);
        out.fill(0.0);
        let v = self.affine.apply_inverse(pos);
        let x0 = v.x.floor();
        let y0 = v.y.floor();
        let z0 = v.z.floor();
        let fx = v.x - x0;
        let fy = v.y - y0;
        let fz = v.z - z0;
        let (nx, ny, nz, _) = self.dims;
        for corner in 0..8 {
            let cx = x0 + (corner & 1) as f64;
            let cy = y0 + ((corner >> 1) & 1) as f64;
            let cz = z0 + ((corner >> 2) & 1) as f64;
            if cx < 0.0 || cy < 0.0 || cz < 0.0 {
                continue;
            }
            let (ix, iy, iz) = (cx as usize, cy as usize, cz as usize);
            if ix >= nx || iy >= ny || iz >= nz {
                continue;
            }
            let w = (if corner & 1 == 0 { 1.0 - fx } else { fx })
                * (if (corner >> 1) & 1 == 0 { 1.0 - fy } else { fy })
                * (if (corner >> 2) & 1 == 0 { 1.0 - fz } else { fz });
            if w == 0.0 {
                continue;
            }
            let src = self.coeffs_at_voxel(ix, iy, iz);
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }

    pub fn interpolate_coeffs(&self, pos: Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.3];
        self.interpolate_coeffs_into(pos, &mut out);
        out
    }
}

/// Even lmax with (lmax+1)(lmax+2)/2 == n, or a format error.
pub fn lmax_from_ncoeffs(n: usize) -> Result<u32> {
    if n >= 1 {
        let l = ((((8 * n + 1) as f64).sqrt() - 3.0) / 2.0).round() as u32;
        if l % 2 == 0 && ((l + 1) * (l + 2) / 2) as usize == n {
            return Ok(l);
        }
    }
    Err(Error::format(format!(
        "coefficient count {n} does not correspond to any even lmax"
    )))
}

/// FOD amplitude at `pos` in direction `dir`: the interpolated coefficient
/// vector dotted with the basis row of the vertex nearest to `dir`.
pub fn eval_fod(
    img: &FodImage,
    sphere: &DiscretizedSphere,
    basis: &ShBasis,
    pos: Vec3,
    dir: Vec3,
) -> f64 {
    let vertex = sphere.nearest_vertex(dir);
    let coeffs = img.interpolate_coeffs(pos);
    basis.amplitude(vertex, &coeffs)
}

/// FOD amplitudes at every sphere vertex for one interpolated position.
pub fn amplitude_table(
    img: &FodImage,
    sphere: &DiscretizedSphere,
    basis: &ShBasis,
    pos: Vec3,
) -> Vec<f64> {
    let coeffs = img.interpolate_coeffs(pos);
    (0..sphere.len())
        .map(|v| basis.amplitude(v, &coeffs))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_direction_uniform_sphere, sh_basis, subdivide_icosahedron};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_image(dims: (usize, usize, usize, usize), coeffs: &[f64]) -> FodImage {
        let (nx, ny, nz, nc) = dims;
        assert_eq!(coeffs.len(), nc);
        let mut data = Vec::with_capacity(nx * ny * nz * nc);
        for _ in 0..nx * ny * nz {
            data.extend_from_slice(coeffs);
        }
        FodImage::new(dims, Affine::scaled_identity([1.0, 1.0, 1.0]), data).unwrap()
    }

    #[test]
    fn lmax_from_ncoeffs_examples() {
        assert_eq!(lmax_from_ncoeffs(1).unwrap(), 0);
        assert_eq!(lmax_from_ncoeffs(6).unwrap(), 2);
        assert_eq!(lmax_from_ncoeffs(15).unwrap(), 4);
        assert_eq!(lmax_from_ncoeffs(45).unwrap(), 8);
        assert!(lmax_from_ncoeffs(7).is_err());
        assert!(lmax_from_ncoeffs(0).is_err());
        // (l+1)(l+2)/2 for odd l: 3, 10, 21 must be rejected too.
        assert!(lmax_from_ncoeffs(3).is_err());
        assert!(lmax_from_ncoeffs(10).is_err());
    }

    #[test]
    fn voxel_center_is_verbatim() {
        let mut img = constant_image((3, 3, 3, 6), &[0.0; 6]);
        img.coeffs_at_voxel_mut(1, 2, 0)
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let center = img.affine.apply(Vec3::new(1.0, 2.0, 0.0));
        let got = img.interpolate_coeffs(center);
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn outside_volume_is_zero() {
        let img = constant_image((3, 3, 3, 6), &[1.0; 6]);
        for pos in [
            Vec3::new(-5.0, 1.0, 1.0),
            Vec3::new(1.0, 50.0, 1.0),
            Vec3::new(1.0, 1.0, -2.0),
        ] {
            assert_eq!(img.interpolate_coeffs(pos), vec![0.0; 6]);
        }
    }

    #[test]
    fn constant_field_interpolates_to_constant() {
        let coeffs = [0.3, -1.2, 0.05, 2.0, -0.7, 0.11];
        let img = constant_image((4, 4, 4, 6), &coeffs);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            // Interior positions: all eight corners in bounds.
            let pos = Vec3::new(
                0.5 + rng.gen::<f64>() * 3.0,
                0.5 + rng.gen::<f64>() * 3.0,
                0.5 + rng.gen::<f64>() * 3.0,
            );
            let got = img.interpolate_coeffs(pos);
            for (g, c) in got.iter().zip(&coeffs) {
                assert!((g - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trilinear_exact_on_affine_fields() {
        // Channel values that are affine in the voxel index are reproduced
        // exactly by trilinear interpolation at interior points.
        let dims = (5, 5, 5, 3);
        let mut data = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..5 {
                    let (xf, yf, zf) = (x as f64, y as f64, z as f64);
                    data.push(1.0 + 0.5 * xf - 0.25 * yf + 0.125 * zf);
                    data.push(-2.0 + xf + yf);
                    data.push(0.75 * zf);
                }
            }
        }
        let img = FodImage::new(dims, Affine::scaled_identity([2.0, 2.0, 2.0]), data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let v = Vec3::new(
                rng.gen::<f64>() * 4.0,
                rng.gen::<f64>() * 4.0,
                rng.gen::<f64>() * 4.0,
            );
            let pos = img.affine.apply(v);
            let got = img.interpolate_coeffs(pos);
            let expected = [
                1.0 + 0.5 * v.x - 0.25 * v.y + 0.125 * v.z,
                -2.0 + v.x + v.y,
                0.75 * v.z,
            ];
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-9, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn isotropic_coefficient_gives_closed_form_amplitude() {
        let mut coeffs = vec![0.0; 15];
        coeffs[0] = 1.0;
        let img = constant_image((3, 3, 3, 15), &coeffs);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let dir = sample_direction_uniform_sphere(&mut rng);
            let amp = eval_fod(&img, &sphere, &basis, Vec3::new(1.5, 1.5, 1.5), dir);
            assert!((amp - 0.28209479177387814).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_image_evaluates_to_zero() {
        let img = constant_image((3, 3, 3, 15), &[0.0; 15]);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let amp = eval_fod(
            &img,
            &sphere,
            &basis,
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.0, 0.0, 1.0),
        );
        assert_eq!(amp, 0.0);
    }

    #[test]
    fn eval_fod_linear_in_coefficients() {
        let dims = (3, 3, 3, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut random_image = || {
            let n = dims.0 * dims.1 * dims.2 * dims.3;
            let data: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            FodImage::new(dims, Affine::scaled_identity([1.0, 1.0, 1.0]), data).unwrap()
        };
        let img1 = random_image();
        let img2 = random_image();
        let (a, b) = (0.7, -1.3);
        let combo_data: Vec<f64> = img1
            .coefficients
            .iter()
            .zip(&img2.coefficients)
            .map(|(c1, c2)| a * c1 + b * c2)
            .collect();
        let combo = FodImage::new(dims, Affine::scaled_identity([1.0, 1.0, 1.0]), combo_data)
            .unwrap();
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let pos = Vec3::new(
                rng2.gen::<f64>() * 3.0,
                rng2.gen::<f64>() * 3.0,
                rng2.gen::<f64>() * 3.0,
            );
            let dir = sample_direction_uniform_sphere(&mut rng2);
            let lhs = eval_fod(&combo, &sphere, &basis, pos, dir);
            let rhs = a * eval_fod(&img1, &sphere, &basis, pos, dir)
                + b * eval_fod(&img2, &sphere, &basis, pos, dir);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_coefficients_rejected() {
        let mut data = vec![0.0; 27 * 6];
        data[13] = f64::NAN;
        assert!(
            FodImage::new((3, 3, 3, 6), Affine::scaled_identity([1.0; 3]), data).is_err()
        );
    }
}
