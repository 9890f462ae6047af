//! 3-vector and 4x4 affine transform in f64.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Point in world millimeters or a dimensionless direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn zero() -> Self {
        Vec3::new(0.0, 0.0, 0.0)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Invertible 4x4 voxel-index -> world-mm transform. The inverse is computed
/// once at construction so per-point queries stay cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    mat: [[f64; 4]; 4],
    inv: [[f64; 4]; 4],
}

impl Affine {
    pub fn new(mat: [[f64; 4]; 4]) -> Result<Affine> {
        let inv = invert4(&mat)
            .ok_or_else(|| Error::format("affine: matrix is singular (not invertible)"))?;
        Ok(Affine { mat, inv })
    }

    /// Scaled identity mapping voxel index i to voxel center (i + 0.5) * size.
    pub fn scaled_identity(voxel_size: [f64; 3]) -> Affine {
        let [sx, sy, sz] = voxel_size;
        Affine::new([
            [sx, 0.0, 0.0, 0.5 * sx],
            [0.0, sy, 0.0, 0.5 * sy],
            [0.0, 0.0, sz, 0.5 * sz],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .expect("diagonal affine with nonzero scales is invertible")
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.mat
    }

    /// Voxel index -> world mm.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        transform(&self.mat, p)
    }

    /// World mm -> voxel index (continuous).
    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        transform(&self.inv, p)
    }

    /// Per-axis voxel size: Euclidean norms of the three linear columns.
    pub fn voxel_size(&self) -> [f64; 3] {
        let col = |j: usize| {
            (self.mat[0][j] * self.mat[0][j]
                + self.mat[1][j] * self.mat[1][j]
                + self.mat[2][j] * self.mat[2][j])
                .sqrt()
        };
        [col(0), col(1), col(2)]
    }
}

fn transform(m: &[[f64; 4]; 4], p: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
    )
}

/// Gauss-Jordan with partial pivoting; None when singular.
fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..4 {
            if i != col {
                let f = a[i][col];
                for j in 0..4 {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}
