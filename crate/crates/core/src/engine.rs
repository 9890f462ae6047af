//! The tracking algorithm: per-streamline parameter sampling, bidirectional
//! tracking with weighted candidate steps, backtracking, and per-attempt
//! record emission.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fod::FodImage;
use crate::geometry::{
    cone_angle_from_radius, sample_direction_in_cone, sample_direction_uniform_sphere,
    DiscretizedSphere, ShBasis, Vec3,
};
use crate::roi::{sample_seed, status_over_points, RoiSet};

/// Tracking constants held fixed across experiments.
#[derive(Debug, Clone, Copy)]
pub struct FixedParams {
    /// Subdivision level of the discretized sphere.
    pub sh_resolution: u32,
    /// Maximum number of backtracks per streamline (both halves combined).
    pub backtrack_lim: u32,
    /// Points evaluated along each candidate step.
    pub intermediate_steps: u32,
    /// Candidate directions sampled per step.
    pub n_samples: u32,
    /// Directions sampled over the whole sphere at the seed.
    pub seed_samples: u32,
    /// FOD threshold when not sampled per streamline.
    pub fod_threshold_default: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        FixedParams {
            sh_resolution: 4,
            backtrack_lim: 64,
            intermediate_steps: 4,
            n_samples: 4,
            seed_samples: 32,
            fod_threshold_default: 0.1,
        }
    }
}

/// Per-streamline sampling ranges plus run budgets.
#[derive(Debug, Clone)]
pub struct ParameterRanges {
    pub step_min: f64,
    pub step_max: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub min_length: f64,
    pub max_length: f64,
    pub target_streamlines: usize,
    pub max_seeds: usize,
}

impl ParameterRanges {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_min > 0.0 && self.step_min <= self.step_max) {
            return Err(Error::config(format!(
                "step range [{}, {}] must satisfy 0 < min <= max",
                self.step_min, self.step_max
            )));
        }
        if self.radius_min > self.radius_max {
            return Err(Error::config(format!(
                "radius range [{}, {}] must satisfy min <= max",
                self.radius_min, self.radius_max
            )));
        }
        if self.step_max > self.radius_min {
            return Err(Error::config(format!(
                "step_max ({}) must not exceed radius_min ({}) so every \
                 sampled pair has a valid cone angle",
                self.step_max, self.radius_min
            )));
        }
        if !(self.threshold_min <= self.threshold_max) {
            return Err(Error::config(format!(
                "threshold range [{}, {}] must satisfy min <= max",
                self.threshold_min, self.threshold_max
            )));
        }
        if !(self.min_length >= 0.0 && self.min_length < self.max_length) {
            return Err(Error::config(format!(
                "length range [{}, {}) must satisfy 0 <= min < max",
                self.min_length, self.max_length
            )));
        }
        Ok(())
    }
}

/// One streamline's sampled parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSample {
    pub step_size: f64,
    pub radius: f64,
    pub cone_angle: f64,
    pub fod_threshold: f64,
}

/// Draw a parameter set: step, radius and threshold are uniform over their
/// ranges; the cone angle is derived from the sampled radius, never sampled
/// directly.
pub fn sample_parameters<R: Rng>(ranges: &ParameterRanges, rng: &mut R) -> ParameterSample {
    let uniform = |lo: f64, hi: f64, rng: &mut R| lo + rng.gen::<f64>() * (hi - lo);
    let step_size = uniform(ranges.step_min, ranges.step_max, rng);
    let radius = uniform(ranges.radius_min, ranges.radius_max, rng);
    let fod_threshold = uniform(ranges.threshold_min, ranges.threshold_max, rng);
    let cone_angle = cone_angle_from_radius(step_size, radius)
        .expect("ranges guarantee radius >= step");
    ParameterSample {
        step_size,
        radius,
        cone_angle,
        fod_threshold,
    }
}

/// Reason a tracking attempt was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureFlag {
    NoValidStartDirection,
    BacktrackExhausted,
    ExclusionTerminated,
    MaxLengthExceeded,
    TooShort,
    MissedInclusion,
}

impl FailureFlag {
    pub const ALL: [FailureFlag; 6] = [
        FailureFlag::NoValidStartDirection,
        FailureFlag::BacktrackExhausted,
        FailureFlag::ExclusionTerminated,
        FailureFlag::MaxLengthExceeded,
        FailureFlag::TooShort,
        FailureFlag::MissedInclusion,
    ];
}

/// Ordered 3-D point sequence in world millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub points: Vec<Vec3>,
}

impl Streamline {
    /// Polyline length for a known per-streamline step size.
    pub fn length(&self, step_size: f64) -> f64 {
        (self.points.len().saturating_sub(1)) as f64 * step_size
    }
}

/// Outcome of one seed attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRecord {
    pub seed_pos: Vec3,
    pub params: ParameterSample,
    pub accepted: bool,
    pub flags: Vec<FailureFlag>,
    pub n_backtracks: u32,
    pub n_points: u32,
    pub duration_us: u64,
    pub streamline_index: Option<u64>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub streamlines: Vec<Streamline>,
    pub records: Vec<TrackingRecord>,
}

/// Categorical draw with probability weight_i / sum(weights).
///
/// Panics on empty input; callers must branch to backtrack instead.
pub fn choose_direction<R: Rng>(candidates: &[Vec3], weights: &[f64], rng: &mut R) -> Vec3 {
    assert!(
        !candidates.is_empty() && candidates.len() == weights.len(),
        "choose_direction requires non-empty candidates with matching weights"
    );
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (c, w) in candidates.iter().zip(weights) {
        x -= w;
        if x < 0.0 {
            return *c;
        }
    }
    *candidates.last().unwrap()
}

enum HalfEnd {
    /// FOD boundary reached: empty candidates with no backtrack possible.
    Boundary { exhausted_at_seed: bool },
    ExclusionTerminated,
    MaxLength,
}

struct HalfOutcome {
    points: Vec<Vec3>,
    dirs: Vec<Vec3>,
    end: HalfEnd,
}

/// Shared read-only tracking state for one run.
pub struct Tracker<'a> {
    pub img: &'a FodImage,
    pub sphere: &'a DiscretizedSphere,
    pub basis: &'a ShBasis,
    pub rois: &'a RoiSet,
    pub ranges: &'a ParameterRanges,
    pub fixed: FixedParams,
}

impl<'a> Tracker<'a> {
    pub fn new(
        img: &'a FodImage,
        sphere: &'a DiscretizedSphere,
        basis: &'a ShBasis,
        rois: &'a RoiSet,
        ranges: &'a ParameterRanges,
        fixed: FixedParams,
    ) -> Result<Self> {
        ranges.validate()?;
        if basis.lmax != img.lmax {
            return Err(Error::Consistency(format!(
                "basis lmax {} does not match image lmax {}",
                basis.lmax, img.lmax
            )));
        }
        if rois.seed.count_nonzero() == 0 {
            return Err(Error::config("seed mask has no nonzero voxels"));
        }
        Ok(Tracker {
            img,
            sphere,
            basis,
            rois,
            ranges,
            fixed,
        })
    }

    /// Sample `seed_samples` whole-sphere directions at the seed and pick one
    /// of the above-threshold ones at random, weighted by amplitude.
    pub fn initial_direction<R: Rng>(
        &self,
        pos: Vec3,
        params: &ParameterSample,
        rng: &mut R,
    ) -> Option<Vec3> {
        let coeffs = self.img.interpolate_coeffs(pos);
        let mut candidates = Vec::new();
        let mut weights = Vec::new();
        for _ in 0..self.fixed.seed_samples {
            let dir = sample_direction_uniform_sphere(rng);
            let amp = self.basis.amplitude(self.sphere.nearest_vertex(dir), &coeffs);
            if amp > params.fod_threshold {
                candidates.push(dir);
                weights.push(amp);
            }
        }
        if candidates.is_empty() {
            None
        } else {
            Some(choose_direction(&candidates, &weights, rng))
        }
    }

    /// Draw `n_samples` cone directions around `d`; a draw survives iff the
    /// FOD amplitude along it exceeds the threshold at all intermediate
    /// points, with weight the product of those amplitudes.
    pub fn candidate_step<R: Rng>(
        &self,
        p: Vec3,
        d: Vec3,
        params: &ParameterSample,
        rng: &mut R,
    ) -> (Vec<Vec3>, Vec<f64>) {
        let mut hint = self.sphere.nearest_vertex(d);
        let mut scratch = vec![0.0; self.img.n_coeffs()];
        self.candidate_step_hinted(p, d, params, &mut hint, &mut scratch, rng)
    }

    fn candidate_step_hinted<R: Rng>(
        &self,
        p: Vec3,
        d: Vec3,
        params: &ParameterSample,
        hint: &mut usize,
        scratch: &mut [f64],
        rng: &mut R,
    ) -> (Vec<Vec3>, Vec<f64>) {
        let n_intermediate = self.fixed.intermediate_steps.max(1);
        let mut candidates = Vec::with_capacity(self.fixed.n_samples as usize);
        let mut weights = Vec::with_capacity(self.fixed.n_samples as usize);
        for _ in 0..self.fixed.n_samples {
            let dir = sample_direction_in_cone(d, params.cone_angle, rng);
            let vertex = self.sphere.nearest_vertex_hinted(dir, *hint);
            *hint = vertex;
            let mut weight = 1.0;
            let mut valid = true;
            for k in 1..=n_intermediate {
                let x = p + dir * (params.step_size * k as f64 / n_intermediate as f64);
                self.img.interpolate_coeffs_into(x, scratch);
                let amp = self.basis.amplitude(vertex, scratch);
                if amp > params.fod_threshold {
                    weight *= amp;
                } else {
                    valid = false;
                    break;
                }
            }
            if valid {
                candidates.push(dir);
                weights.push(weight);
            }
        }
        (candidates, weights)
    }

    /// Track one direction away from the seed.
    ///
    /// `base_points` is the point count already owned by the other half
    /// (excluding the shared seed); the max-length budget covers the merged
    /// streamline. `backtracks` is shared across both halves.
    fn track_half<R: Rng>(
        &self,
        seed: Vec3,
        d0: Vec3,
        params: &ParameterSample,
        base_points: usize,
        backtracks: &mut u32,
        rng: &mut R,
    ) -> HalfOutcome {
        let mut points = vec![seed];
        let mut dirs = vec![d0];
        let mut grew = false;
        let mut hint = self.sphere.nearest_vertex(d0);
        let mut scratch = vec![0.0; self.img.n_coeffs()];
        let limit = self.fixed.backtrack_lim;
        loop {
            // Shared budget: continue while |merged points| * step < max_length.
            if (base_points + points.len()) as f64 * params.step_size >= self.ranges.max_length {
                return HalfOutcome {
                    points,
                    dirs,
                    end: HalfEnd::MaxLength,
                };
            }
            let p = *points.last().unwrap();
            let d = *dirs.last().unwrap();
            let (candidates, weights) =
                self.candidate_step_hinted(p, d, params, &mut hint, &mut scratch, rng);
            if candidates.is_empty() {
                // Step back one point and retry from there, while budget and
                // path allow; otherwise the half ends at the FOD boundary.
                if points.len() > 1 && *backtracks < limit {
                    points.pop();
                    dirs.pop();
                    *backtracks += 1;
                    continue;
                }
                let exhausted_at_seed = *backtracks >= limit && !grew;
                return HalfOutcome {
                    points,
                    dirs,
                    end: HalfEnd::Boundary { exhausted_at_seed },
                };
            }
            let dir = choose_direction(&candidates, &weights, rng);
            let next = p + dir * params.step_size;
            points.push(next);
            dirs.push(dir);
            grew = true;
            if self.rois.in_exclusion(next) {
                // The offending point never stays on the path.
                points.pop();
                dirs.pop();
                if *backtracks < limit {
                    *backtracks += 1;
                    continue;
                }
                return HalfOutcome {
                    points,
                    dirs,
                    end: HalfEnd::ExclusionTerminated,
                };
            }
        }
    }

    /// One full attempt: sample parameters and a seed, track both halves with
    /// shared budgets, merge, and decide acceptance. A record is always
    /// produced; the streamline only on acceptance.
    pub fn track_streamline<R: Rng>(&self, rng: &mut R) -> (TrackingRecord, Option<Streamline>) {
        let start = Instant::now();
        let params = sample_parameters(self.ranges, rng);
        let seed = sample_seed(&self.rois.seed, rng).expect("seed mask validated at construction");

        let mut flag_set = [false; FailureFlag::ALL.len()];
        let set_flag = |flag: FailureFlag, on: bool, flag_set: &mut [bool; 6]| {
            if on {
                flag_set[flag as usize] = true;
            }
        };

        let mut n_backtracks = 0u32;
        let merged: Vec<Vec3> = match self.initial_direction(seed, &params, rng) {
            None => {
                set_flag(FailureFlag::NoValidStartDirection, true, &mut flag_set);
                vec![seed]
            }
            Some(d0) => {
                let half_a = self.track_half(seed, d0, &params, 0, &mut n_backtracks, rng);
                // The second half starts against the first half's opening
                // segment so the junction respects the cone angle.
                let reverse_dir = if half_a.points.len() >= 2 {
                    -half_a.dirs[1]
                } else {
                    -d0
                };
                let half_b = self.track_half(
                    seed,
                    reverse_dir,
                    &params,
                    half_a.points.len() - 1,
                    &mut n_backtracks,
                    rng,
                );
                for end in [&half_a.end, &half_b.end] {
                    match end {
                        HalfEnd::Boundary { exhausted_at_seed } => set_flag(
                            FailureFlag::BacktrackExhausted,
                            *exhausted_at_seed,
                            &mut flag_set,
                        ),
                        HalfEnd::ExclusionTerminated => {
                            set_flag(FailureFlag::ExclusionTerminated, true, &mut flag_set)
                        }
                        HalfEnd::MaxLength => {
                            set_flag(FailureFlag::MaxLengthExceeded, true, &mut flag_set)
                        }
                    }
                }
                half_b
                    .points
                    .iter()
                    .skip(1)
                    .rev()
                    .chain(half_a.points.iter())
                    .copied()
                    .collect()
            }
        };

        let length = (merged.len() - 1) as f64 * params.step_size;
        set_flag(
            FailureFlag::TooShort,
            length < self.ranges.min_length,
            &mut flag_set,
        );
        let status = status_over_points(self.rois, &merged);
        set_flag(
            FailureFlag::MissedInclusion,
            !status.is_satisfied(self.rois),
            &mut flag_set,
        );

        let flags: Vec<FailureFlag> = FailureFlag::ALL
            .iter()
            .copied()
            .filter(|f| flag_set[*f as usize])
            .collect();
        let accepted = flags.is_empty();
        let record = TrackingRecord {
            seed_pos: seed,
            params,
            accepted,
            flags,
            n_backtracks,
            n_points: merged.len() as u32,
            duration_us: start.elapsed().as_micros() as u64,
            streamline_index: None,
        };
        let streamline = accepted.then(|| Streamline { points: merged });
        (record, streamline)
    }

    /// RNG for attempt `i`: one ChaCha stream per attempt index, so results
    /// do not depend on execution order or thread count.
    pub fn attempt_rng(global_seed: u64, attempt: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
        rng.set_stream(attempt as u64);
        rng
    }

    /// Run attempts until `target_streamlines` are accepted or `max_seeds`
    /// attempts are consumed. Attempts are evaluated in fixed-size chunks in
    /// parallel; the output is truncated at the attempt that reached the
    /// target, exactly as a sequential loop would have stopped.
    pub fn run(&self, global_seed: u64, threads: usize) -> Result<RunOutput> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;

        let target = self.ranges.target_streamlines;
        let max_seeds = self.ranges.max_seeds;
        const CHUNK: usize = 512;

        let mut results: Vec<(TrackingRecord, Option<Streamline>)> = Vec::new();
        let mut accepted_total = 0usize;
        let mut next = 0usize;
        while next < max_seeds && accepted_total < target {
            let end = (next + CHUNK).min(max_seeds);
            let batch: Vec<_> = pool.install(|| {
                (next..end)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = Self::attempt_rng(global_seed, i);
                        self.track_streamline(&mut rng)
                    })
                    .collect()
            });
            for item in batch {
                accepted_total += item.0.accepted as usize;
                results.push(item);
            }
            next = end;
        }

        // Cut at the attempt that produced the target-th acceptance.
        let mut cutoff = if target == 0 { 0 } else { results.len() };
        if target > 0 {
            let mut seen = 0usize;
            for (i, (record, _)) in results.iter().enumerate() {
                if record.accepted {
                    seen += 1;
                    if seen == target {
                        cutoff = i + 1;
                        break;
                    }
                }
            }
        }
        results.truncate(cutoff);

        let mut streamlines = Vec::new();
        let mut records = Vec::with_capacity(results.len());
        for (mut record, streamline) in results {
            if let Some(s) = streamline {
                record.streamline_index = Some(streamlines.len() as u64);
                streamlines.push(s);
            }
            records.push(record);
        }
        Ok(RunOutput {
            streamlines,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sh_basis, subdivide_icosahedron, Affine};
    use crate::roi::BinaryMask;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ranges(step: (f64, f64), radius: (f64, f64)) -> ParameterRanges {
        ParameterRanges {
            step_min: step.0,
            step_max: step.1,
            radius_min: radius.0,
            radius_max: radius.1,
            threshold_min: 0.1,
            threshold_max: 0.1,
            min_length: 0.0,
            max_length: 250.0,
            target_streamlines: 10,
            max_seeds: 100,
        }
    }

    fn isotropic_image(dims: (usize, usize, usize), c0: f64) -> FodImage {
        let mut coeffs = vec![0.0; 15];
        coeffs[0] = c0;
        let n = dims.0 * dims.1 * dims.2;
        let mut data = Vec::with_capacity(n * 15);
        for _ in 0..n {
            data.extend_from_slice(&coeffs);
        }
        FodImage::new(
            (dims.0, dims.1, dims.2, 15),
            Affine::scaled_identity([1.0; 3]),
            data,
        )
        .unwrap()
    }

    fn single_voxel_mask(dims: (usize, usize, usize), at: (usize, usize, usize)) -> BinaryMask {
        let (nx, ny, nz) = dims;
        let mut voxels = vec![false; nx * ny * nz];
        voxels[(at.0 * ny + at.1) * nz + at.2] = true;
        BinaryMask::new(dims, Affine::scaled_identity([1.0; 3]), voxels).unwrap()
    }

    fn full_mask(dims: (usize, usize, usize)) -> BinaryMask {
        let (nx, ny, nz) = dims;
        BinaryMask::new(
            dims,
            Affine::scaled_identity([1.0; 3]),
            vec![true; nx * ny * nz],
        )
        .unwrap()
    }

    #[test]
    fn ranges_validation() {
        assert!(ranges((0.4, 0.6), (0.75, 1.0)).validate().is_ok());
        assert!(ranges((0.6, 0.4), (0.75, 1.0)).validate().is_err());
        assert!(ranges((0.0, 0.4), (0.75, 1.0)).validate().is_err());
        // step_max above radius_min would allow asin arguments > 1.
        assert!(ranges((0.4, 0.9), (0.75, 1.0)).validate().is_err());
        let mut r = ranges((0.4, 0.6), (0.75, 1.0));
        r.min_length = 300.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn degenerate_ranges_give_deterministic_sample() {
        let r = ParameterRanges {
            step_min: 0.5,
            step_max: 0.5,
            radius_min: 2.0,
            radius_max: 2.0,
            threshold_min: 0.1,
            threshold_max: 0.1,
            min_length: 0.0,
            max_length: 100.0,
            target_streamlines: 1,
            max_seeds: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_parameters(&r, &mut rng);
        assert_eq!(s.step_size, 0.5);
        assert_eq!(s.radius, 2.0);
        assert_eq!(s.fod_threshold, 0.1);
        assert_eq!(s.cone_angle, cone_angle_from_radius(0.5, 2.0).unwrap());
    }

    #[test]
    fn sampled_cone_angle_stays_in_derived_interval() {
        // Step in [0.4, 0.6], radius in [0.75, 1.0]: the cone angle lies in
        // [2 asin(0.4/1.0), 2 asin(0.6/0.75)] ~= [0.823, 1.855] rad.
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let lo = 2.0 * (0.4f64 / 1.0).asin();
        let hi = 2.0 * (0.6f64 / 0.75).asin();
        assert!((lo - 0.8230).abs() < 1e-3 && (hi - 1.8546).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s = sample_parameters(&r, &mut rng);
            assert!(s.cone_angle >= lo - 1e-12 && s.cone_angle <= hi + 1e-12);
            assert_eq!(
                s.cone_angle,
                cone_angle_from_radius(s.step_size, s.radius).unwrap()
            );
        }
    }

    #[test]
    fn sampled_step_mean_matches_uniform_law() {
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_parameters(&r, &mut rng).step_size)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() / 0.5 < 0.01, "mean {mean}");
    }

    #[test]
    fn choose_direction_single_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Vec3::new(0.0, 1.0, 0.0);
        for _ in 0..10 {
            assert_eq!(choose_direction(&[c], &[0.3], &mut rng), c);
        }
    }

    #[test]
    fn choose_direction_weighted_three_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Vec3::new(1.0, 0.0, 0.0);
        let b = Vec3::new(0.0, 1.0, 0.0);
        let mut first = 0u32;
        for _ in 0..100_000 {
            if choose_direction(&[a, b], &[3.0, 1.0], &mut rng) == a {
                first += 1;
            }
        }
        assert!((first as i64 - 75_000).abs() <= 450, "count {first}");
    }

    #[test]
    fn choose_direction_equal_weights_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dirs = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(-1.0, 0.0, 0.0),
        ];
        let mut counts = [0u64; 4];
        let n = 100_000u64;
        for _ in 0..n {
            let d = choose_direction(&dirs, &[1.0; 4], &mut rng);
            let k = dirs.iter().position(|&x| x == d).unwrap();
            counts[k] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 3 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 16.266, "chi2 {chi2}");
    }

    #[test]
    fn initial_direction_zero_field_is_none() {
        let img = isotropic_image((5, 5, 5), 0.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((5, 5, 5)));
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let params = sample_parameters(&r, &mut ChaCha8Rng::seed_from_u64(7));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            assert!(tracker
                .initial_direction(Vec3::new(2.5, 2.5, 2.5), &params, &mut rng)
                .is_none());
        }
    }

    #[test]
    fn initial_direction_isotropic_always_found() {
        // c0 = 1 gives amplitude 1/(2 sqrt(pi)) ~= 0.282 > 0.1 everywhere.
        let img = isotropic_image((5, 5, 5), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((5, 5, 5)));
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let params = sample_parameters(&r, &mut ChaCha8Rng::seed_from_u64(9));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let d = tracker
                .initial_direction(Vec3::new(2.5, 2.5, 2.5), &params, &mut rng)
                .expect("isotropic field always has a valid start direction");
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn candidate_step_zero_field_is_empty() {
        let img = isotropic_image((5, 5, 5), 0.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((5, 5, 5)));
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let params = sample_parameters(&r, &mut ChaCha8Rng::seed_from_u64(11));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (c, w) = tracker.candidate_step(
            Vec3::new(2.5, 2.5, 2.5),
            Vec3::new(0.0, 1.0, 0.0),
            &params,
            &mut rng,
        );
        assert!(c.is_empty() && w.is_empty());
    }

    #[test]
    fn candidate_step_isotropic_weights_are_fourth_power() {
        let img = isotropic_image((9, 9, 9), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((9, 9, 9)));
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let params = sample_parameters(&r, &mut ChaCha8Rng::seed_from_u64(13));
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (c, w) = tracker.candidate_step(
            Vec3::new(4.5, 4.5, 4.5),
            Vec3::new(0.0, 1.0, 0.0),
            &params,
            &mut rng,
        );
        assert_eq!(c.len(), 4);
        let a = 0.28209479177387814f64;
        for weight in w {
            assert!((weight - a.powi(4)).abs() < 1e-12);
            assert!((weight - 6.33e-3).abs() < 1e-4);
        }
    }

    #[test]
    fn candidate_step_rejects_when_path_drops_below_threshold() {
        // Isotropic amplitude fades along +y: above threshold at the first
        // two intermediate points, below at the third.
        let dims = (9, 9, 9, 15);
        let mut data = Vec::new();
        for x in 0..9 {
            for y in 0..9 {
                for z in 0..9 {
                    let _ = (x, z);
                    let mut c = [0.0; 15];
                    // Amplitude = c0 * Y00; fades linearly from 0.2 at y=4.5
                    // to below 0.1 past y ~= 4.8 (step 0.5: fails at k=3).
                    let yf = y as f64 + 0.5;
                    let amp: f64 = 0.2 - (yf - 5.0).max(0.0) * 2.0;
                    c[0] = amp.max(0.0) / 0.28209479177387814;
                    data.extend_from_slice(&c);
                }
            }
        }
        let img = FodImage::new(dims, Affine::scaled_identity([1.0; 3]), data).unwrap();
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((9, 9, 9)));
        // Degenerate radius -> cone angle 0 -> candidate dir exactly +y.
        let r = ParameterRanges {
            step_min: 0.5,
            step_max: 0.5,
            radius_min: 1e9,
            radius_max: 1e9,
            threshold_min: 0.1,
            threshold_max: 0.1,
            min_length: 0.0,
            max_length: 100.0,
            target_streamlines: 1,
            max_seeds: 1,
        };
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let params = sample_parameters(&r, &mut ChaCha8Rng::seed_from_u64(15));
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let p = Vec3::new(4.5, 4.5, 4.5);
        // Sanity: first intermediate points pass, the later ones fail.
        let probe = |frac: f64| {
            let pos = p + Vec3::new(0.0, 1.0, 0.0) * (0.5 * frac);
            let coeffs = img.interpolate_coeffs(pos);
            basis.amplitude(sphere.nearest_vertex(Vec3::new(0.0, 1.0, 0.0)), &coeffs)
        };
        assert!(probe(0.25) > 0.1 && probe(0.5) > 0.1);
        assert!(probe(1.0) < 0.1);
        let (c, _) = tracker.candidate_step(p, Vec3::new(0.0, 1.0, 0.0), &params, &mut rng);
        assert!(c.is_empty(), "all-points conjunction must reject the draw");
    }

    #[test]
    fn zero_field_attempt_records_no_start_direction() {
        let img = isotropic_image((5, 5, 5), 0.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((5, 5, 5)));
        let r = ranges((0.4, 0.6), (0.75, 1.0));
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (record, streamline) = tracker.track_streamline(&mut rng);
        assert!(!record.accepted);
        assert_eq!(record.flags, vec![FailureFlag::NoValidStartDirection]);
        assert_eq!(record.n_points, 1);
        assert!(streamline.is_none());
    }

    #[test]
    fn exclusion_one_step_ahead_with_zero_budget_terminates() {
        let img = isotropic_image((9, 9, 9), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let mut rois = RoiSet::new(single_voxel_mask((9, 9, 9), (4, 4, 4)));
        // Exclusion everywhere except the seed voxel: the very first step
        // lands in it no matter the direction.
        let excl: Vec<bool> = (0..9usize * 9 * 9).map(|i| i != (4 * 9 + 4) * 9 + 4).collect();
        rois.exclude = vec![BinaryMask::new(
            (9, 9, 9),
            Affine::scaled_identity([1.0; 3]),
            excl,
        )
        .unwrap()];
        let r = ParameterRanges {
            step_min: 1.0,
            step_max: 1.0,
            radius_min: 2.0,
            radius_max: 2.0,
            threshold_min: 0.1,
            threshold_max: 0.1,
            min_length: 0.0,
            max_length: 100.0,
            target_streamlines: 1,
            max_seeds: 1,
        };
        let fixed = FixedParams {
            backtrack_lim: 0,
            ..FixedParams::default()
        };
        let tracker = Tracker::new(&img, &sphere, &basis, &rois, &r, fixed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let (record, streamline) = tracker.track_streamline(&mut rng);
        assert!(record.flags.contains(&FailureFlag::ExclusionTerminated));
        assert_eq!(record.n_backtracks, 0);
        // Both halves collapse to the seed: the offending points are removed.
        assert_eq!(record.n_points, 1);
        assert!(streamline.is_none());
    }

    #[test]
    fn run_target_zero_is_empty() {
        let img = isotropic_image((5, 5, 5), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((5, 5, 5)));
        let mut r = ranges((0.4, 0.6), (0.75, 1.0));
        r.target_streamlines = 0;
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let out = tracker.run(42, 1).unwrap();
        assert!(out.streamlines.is_empty());
        assert!(out.records.is_empty());
    }

    fn mask_durations(records: &mut [TrackingRecord]) {
        for r in records {
            r.duration_us = 0;
        }
    }

    #[test]
    fn run_is_deterministic_across_repeats_and_threads() {
        let img = isotropic_image((7, 7, 7), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((7, 7, 7)));
        let mut r = ranges((0.4, 0.6), (2.0, 10.0));
        r.max_length = 20.0;
        r.min_length = 2.0;
        r.target_streamlines = 40;
        r.max_seeds = 400;
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let mut out1 = tracker.run(123, 1).unwrap();
        let mut out2 = tracker.run(123, 1).unwrap();
        let mut out8 = tracker.run(123, 8).unwrap();
        mask_durations(&mut out1.records);
        mask_durations(&mut out2.records);
        mask_durations(&mut out8.records);
        assert_eq!(out1.records, out2.records);
        assert_eq!(out1.records, out8.records);
        assert_eq!(out1.streamlines, out2.streamlines);
        assert_eq!(out1.streamlines, out8.streamlines);
        assert_eq!(
            out1.streamlines.len(),
            out1.records.iter().filter(|r| r.accepted).count()
        );
    }

    #[test]
    fn records_and_indices_are_consistent() {
        let img = isotropic_image((7, 7, 7), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((7, 7, 7)));
        let mut r = ranges((0.4, 0.6), (2.0, 10.0));
        r.max_length = 20.0;
        r.target_streamlines = 25;
        r.max_seeds = 200;
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let out = tracker.run(7, 2).unwrap();
        assert_eq!(out.streamlines.len(), 25);
        let mut expected_idx = 0u64;
        for record in &out.records {
            assert_eq!(record.accepted, record.flags.is_empty());
            if record.accepted {
                assert_eq!(record.streamline_index, Some(expected_idx));
                expected_idx += 1;
            } else {
                assert_eq!(record.streamline_index, None);
            }
        }
        // The run stops exactly at the attempt that hit the target.
        assert!(out.records.last().unwrap().accepted);
    }

    #[test]
    fn segments_have_uniform_step_length() {
        let img = isotropic_image((7, 7, 7), 1.0);
        let sphere = subdivide_icosahedron(2).unwrap();
        let basis = sh_basis(&sphere, 4).unwrap();
        let rois = RoiSet::new(full_mask((7, 7, 7)));
        let mut r = ranges((0.4, 0.6), (2.0, 10.0));
        r.max_length = 15.0;
        r.target_streamlines = 10;
        r.max_seeds = 100;
        let tracker =
            Tracker::new(&img, &sphere, &basis, &rois, &r, FixedParams::default()).unwrap();
        let out = tracker.run(99, 1).unwrap();
        for record in out.records.iter().filter(|r| r.accepted) {
            let s = &out.streamlines[record.streamline_index.unwrap() as usize];
            assert_eq!(s.points.len() as u32, record.n_points);
            for pair in s.points.windows(2) {
                let d = pair[0].distance(pair[1]);
                assert!((d - record.params.step_size).abs() < 1e-9);
            }
        }
    }
}
