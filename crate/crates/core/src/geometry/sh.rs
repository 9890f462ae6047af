//! Real even-order spherical harmonics in the modified real convention used
//! by FOD volumes: m < 0 are sine terms, m > 0 cosine terms, both scaled by
//! sqrt(2); no Condon-Shortley phase.

use crate::error::{Error, Result};
use crate::geometry::{DiscretizedSphere, Vec3};

pub const MAX_LMAX: u32 = 16;

/// Number of even-order coefficients up to and including `lmax`.
pub fn n_coeffs_for_lmax(lmax: u32) -> usize {
    ((lmax + 1) * (lmax + 2) / 2) as usize
}

/// SH basis matrix: one row per sphere vertex, one column per even-order
/// harmonic, ordered by l ascending and m from -l to +l.
#[derive(Debug, Clone)]
pub struct ShBasis {
    pub lmax: u32,
    n_columns: usize,
    data: Vec<f64>,
}

pub fn sh_basis(sphere: &DiscretizedSphere, lmax: u32) -> Result<ShBasis> {
    validate_lmax(lmax)?;
    let n_columns = n_coeffs_for_lmax(lmax);
    let mut data = Vec::with_capacity(sphere.len() * n_columns);
    for &v in &sphere.vertices {
        data.extend_from_slice(&sh_eval_direction(lmax, v)?);
    }
    Ok(ShBasis {
        lmax,
        n_columns,
        data,
    })
}

impl ShBasis {
    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_columns
    }

    pub fn row(&self, vertex: usize) -> &[f64] {
        let lo = vertex * self.n_columns;
        &self.data[lo..lo + self.n_columns]
    }

    /// Amplitude of a coefficient vector along the direction of `vertex`.
    pub fn amplitude(&self, vertex: usize, coeffs: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), self.n_columns);
        self.row(vertex)
            .iter()
            .zip(coeffs)
            .map(|(b, c)| b * c)
            .sum()
    }
}

/// One basis row evaluated at a unit direction.
pub fn sh_eval_direction(lmax: u32, dir: Vec3) -> Result<Vec<f64>> {
    validate_lmax(lmax)?;
    let lmax = lmax as usize;
    let cos_theta = dir.z.clamp(-1.0, 1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = dir.y.atan2(dir.x);

    // Fully normalized associated Legendre values (unit L2 norm on the
    // sphere, no Condon-Shortley phase), all orders 0..=lmax.
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; idx(lmax, lmax) + 1];
    p[0] = 0.5 / std::f64::consts::PI.sqrt();
    for m in 1..=lmax {
        p[idx(m, m)] =
            ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sin_theta * p[idx(m - 1, m - 1)];
    }
    for m in 0..lmax {
        p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * cos_theta * p[idx(m, m)];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            p[idx(l, m)] = a * (cos_theta * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
        }
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut row = Vec::with_capacity(n_coeffs_for_lmax(lmax as u32));
    for l in (0..=lmax).step_by(2) {
        for m in -(l as i64)..=(l as i64) {
            let ma = m.unsigned_abs() as usize;
            let val = if m < 0 {
                sqrt2 * p[idx(l, ma)] * (ma as f64 * phi).sin()
            } else if m == 0 {
                p[idx(l, 0)]
            } else {
                sqrt2 * p[idx(l, ma)] * (ma as f64 * phi).cos()
            };
            row.push(val);
        }
    }
    Ok(row)
}

fn validate_lmax(lmax: u32) -> Result<()> {
    if lmax % 2 != 0 || lmax > MAX_LMAX {
        return Err(Error::parameter(format!(
            "lmax must be even and in 0..={MAX_LMAX}, got {lmax}"
        )));
    }
    Ok(())
}
