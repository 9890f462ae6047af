//! Binary mask queries, seed sampling, and inclusion/exclusion bookkeeping.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Affine, Vec3};

/// Binary volume with its own affine; masks may be sampled on grids that
/// differ from the FOD image.
#[derive(Debug, Clone)]
pub struct BinaryMask {
    pub dims: (usize, usize, usize),
    pub affine: Affine,
    voxels: Vec<bool>,
    nonzero: Vec<usize>,
}

impl BinaryMask {
    pub fn new(dims: (usize, usize, usize), affine: Affine, voxels: Vec<bool>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if voxels.len() != nx * ny * nz {
            return Err(Error::format(format!(
                "mask buffer has {} voxels, dims {:?} require {}",
                voxels.len(),
                dims,
                nx * ny * nz
            )));
        }
        let nonzero = voxels
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect();
        Ok(BinaryMask {
            dims,
            affine,
            voxels,
            nonzero,
        })
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[(x * self.dims.1 + y) * self.dims.2 + z]
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    pub fn count_nonzero(&self) -> usize {
        self.nonzero.len()
    }

    fn decode(&self, linear: usize) -> (usize, usize, usize) {
        let (_, ny, nz) = self.dims;
        (linear / (ny * nz), (linear / nz) % ny, linear % nz)
    }
}

/// True iff the nearest voxel to `pos` (per-axis round of the inverse-affine
/// image, half biased up) is in bounds and set.
pub fn contains(mask: &BinaryMask, pos: Vec3) -> bool {
    let v = mask.affine.apply_inverse(pos);
    let (nx, ny, nz) = mask.dims;
    let ix = (v.x + 0.5).floor();
    let iy = (v.y + 0.5).floor();
    let iz = (v.z + 0.5).floor();
    if ix < 0.0 || iy < 0.0 || iz < 0.0 {
        return false;
    }
    let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
    ix < nx && iy < ny && iz < nz && mask.get(ix, iy, iz)
}

/// Uniformly pick a nonzero voxel, then a uniform point inside that voxel
/// cube. The returned point always satisfies [`contains`].
pub fn sample_seed<R: Rng>(mask: &BinaryMask, rng: &mut R) -> Result<Vec3> {
    if mask.nonzero.is_empty() {
        return Err(Error::config("seed mask has no nonzero voxels"));
    }
    let pick = ((rng.gen::<f64>() * mask.nonzero.len() as f64) as usize)
        .min(mask.nonzero.len() - 1);
    let (x, y, z) = mask.decode(mask.nonzero[pick]);
    let jitter = |rng: &mut R| rng.gen::<f64>() - 0.5;
    let v = Vec3::new(
        x as f64 + jitter(rng),
        y as f64 + jitter(rng),
        z as f64 + jitter(rng),
    );
    Ok(mask.affine.apply(v))
}

/// Seed mask plus inclusion ('and'/'or') and exclusion zones.
#[derive(Debug, Clone)]
pub struct RoiSet {
    pub seed: BinaryMask,
    pub include_and: Vec<BinaryMask>,
    pub include_or: Vec<BinaryMask>,
    pub exclude: Vec<BinaryMask>,
}

impl RoiSet {
    pub fn new(seed: BinaryMask) -> Self {
        RoiSet {
            seed,
            include_and: Vec::new(),
            include_or: Vec::new(),
            exclude: Vec::new(),
        }
    }

    pub fn in_exclusion(&self, pos: Vec3) -> bool {
        self.exclude.iter().any(|m| contains(m, pos))
    }
}

/// Which inclusion regions a streamline has visited. Bits only ever flip
/// false -> true.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionStatus {
    pub visited_and: Vec<bool>,
    pub visited_or_any: bool,
}

impl InclusionStatus {
    pub fn new(rois: &RoiSet) -> Self {
        InclusionStatus {
            visited_and: vec![false; rois.include_and.len()],
            visited_or_any: false,
        }
    }

    pub fn update(&mut self, rois: &RoiSet, pos: Vec3) {
        for (bit, mask) in self.visited_and.iter_mut().zip(&rois.include_and) {
            if !*bit && contains(mask, pos) {
                *bit = true;
            }
        }
        if !self.visited_or_any && rois.include_or.iter().any(|m| contains(m, pos)) {
            self.visited_or_any = true;
        }
    }

    /// All 'and' zones visited, and at least one 'or' zone when any are
    /// configured.
    pub fn is_satisfied(&self, rois: &RoiSet) -> bool {
        self.visited_and.iter().all(|&b| b)
            && (rois.include_or.is_empty() || self.visited_or_any)
    }
}

/// Status accumulated over a whole point sequence; order independent.
pub fn status_over_points(rois: &RoiSet, points: &[Vec3]) -> InclusionStatus {
    let mut status = InclusionStatus::new(rois);
    for &p in points {
        status.update(rois, p);
    }
    status
}
