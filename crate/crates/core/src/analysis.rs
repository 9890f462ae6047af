//! Acceptance histograms over sampled parameters, QuickBundles clustering,
//! per-cluster distributions, and acceptance-driven range refinement.

use std::collections::HashMap;

use crate::engine::{Streamline, TrackingRecord};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Which sampled parameter a histogram or suggestion refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    StepSize,
    Radius,
    ConeAngle,
    FodThreshold,
}

impl ParamKind {
    pub const ALL: [ParamKind; 4] = [
        ParamKind::StepSize,
        ParamKind::Radius,
        ParamKind::ConeAngle,
        ParamKind::FodThreshold,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamKind::StepSize => "step_size",
            ParamKind::Radius => "radius",
            ParamKind::ConeAngle => "cone_angle",
            ParamKind::FodThreshold => "fod_threshold",
        }
    }

    pub fn parse(name: &str) -> Result<ParamKind> {
        ParamKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == name)
            .ok_or_else(|| {
                Error::parameter(format!(
                    "unknown parameter '{name}' (expected one of step_size, radius, \
                     cone_angle, fod_threshold)"
                ))
            })
    }

    pub fn extract(&self, record: &TrackingRecord) -> f64 {
        match self {
            ParamKind::StepSize => record.params.step_size,
            ParamKind::Radius => record.params.radius,
            ParamKind::ConeAngle => record.params.cone_angle,
            ParamKind::FodThreshold => record.params.fod_threshold,
        }
    }
}

/// Attempted/accepted counts per equal-width bin over a parameter's
/// configured sampling range.
#[derive(Debug, Clone)]
pub struct ParamHistogram {
    pub param: ParamKind,
    pub bin_edges: Vec<f64>,
    pub attempted_counts: Vec<u64>,
    pub accepted_counts: Vec<u64>,
    pub acceptance_rate: Vec<f64>,
}

impl ParamHistogram {
    pub fn n_bins(&self) -> usize {
        self.attempted_counts.len()
    }
}

/// Histogram the given parameter over `records`.
///
/// Bins span the configured sampling `range` (not the observed min/max) so
/// histograms stay comparable across runs; values outside the range clamp
/// into the edge bins. `subset` restricts counting to those record indices.
pub fn histogram(
    records: &[TrackingRecord],
    param: ParamKind,
    n_bins: usize,
    range: (f64, f64),
    subset: Option<&[usize]>,
) -> Result<ParamHistogram> {
    if n_bins == 0 {
        return Err(Error::parameter("histogram needs at least one bin"));
    }
    if records.is_empty() {
        return Err(Error::parameter("histogram needs at least one record"));
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::parameter(format!(
            "histogram range [{lo}, {hi}] must satisfy lo < hi"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let mut attempted = vec![0u64; n_bins];
    let mut accepted = vec![0u64; n_bins];
    let mut count = |record: &TrackingRecord| {
        let v = param.extract(record);
        let bin = (((v - lo) / width).floor() as i64).clamp(0, n_bins as i64 - 1) as usize;
        attempted[bin] += 1;
        accepted[bin] += record.accepted as u64;
    };
    match subset {
        Some(indices) => {
            for &i in indices {
                count(&records[i]);
            }
        }
        None => {
            for record in records {
                count(record);
            }
        }
    }
    let acceptance_rate = attempted
        .iter()
        .zip(&accepted)
        .map(|(&att, &acc)| if att > 0 { acc as f64 / att as f64 } else { 0.0 })
        .collect();
    Ok(ParamHistogram {
        param,
        bin_edges,
        attempted_counts: attempted,
        accepted_counts: accepted,
        acceptance_rate,
    })
}

/// K points at equal arc-length spacing along the polyline; endpoints are
/// preserved exactly.
pub fn resample(points: &[Vec3], k: usize) -> Result<Vec<Vec3>> {
    if points.len() < 2 || k < 2 {
        return Err(Error::parameter(format!(
            "resample needs >= 2 points and K >= 2 (got {} points, K={k})",
            points.len()
        )));
    }
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(0.0);
    for pair in points.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + pair[0].distance(pair[1]));
    }
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return Err(Error::parameter(
            "resample: degenerate streamline with zero arc length",
        ));
    }
    let mut out = Vec::with_capacity(k);
    out.push(points[0]);
    let mut segment = 0usize;
    for j in 1..k - 1 {
        let target = total * j as f64 / (k - 1) as f64;
        while segment + 2 < points.len() && cumulative[segment + 1] < target {
            segment += 1;
        }
        let seg_len = cumulative[segment + 1] - cumulative[segment];
        let t = if seg_len > 0.0 {
            (target - cumulative[segment]) / seg_len
        } else {
            0.0
        };
        out.push(points[segment] + (points[segment + 1] - points[segment]) * t);
    }
    out.push(*points.last().unwrap());
    Ok(out)
}

/// Minimum average direct-flip distance between two equal-count resamplings.
pub fn mdf_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::parameter(format!(
            "mdf_distance needs equal non-zero point counts (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (direct, flipped) = mdf_terms(a, b);
    Ok(direct.min(flipped))
}

fn mdf_terms(a: &[Vec3], b: &[Vec3]) -> (f64, f64) {
    let k = a.len();
    let mut direct = 0.0;
    let mut flipped = 0.0;
    for i in 0..k {
        direct += a[i].distance(b[i]);
        flipped += a[i].distance(b[k - 1 - i]);
    }
    (direct / k as f64, flipped / k as f64)
}

/// One QuickBundles cluster: member indices into the tractogram plus the
/// running-mean centroid at K resample points.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub id: usize,
    pub member_indices: Vec<usize>,
    pub centroid: Vec<Vec3>,
}

/// Single-pass threshold clustering in input order: each streamline joins
/// the nearest centroid with MDF below the threshold (flip-aligned before
/// averaging) or starts a new cluster. Deterministic given input order.
pub fn quickbundles(
    streamlines: &[Streamline],
    threshold: f64,
    k: usize,
) -> Result<Vec<Cluster>> {
    if !(threshold > 0.0) {
        return Err(Error::parameter(format!(
            "quickbundles threshold must be positive, got {threshold}"
        )));
    }
    struct Build {
        sum: Vec<Vec3>,
        n: usize,
        members: Vec<usize>,
    }
    let mut builds: Vec<Build> = Vec::new();
    let mut centroid_buf: Vec<Vec3> = Vec::new();
    for (index, streamline) in streamlines.iter().enumerate() {
        let r = resample(&streamline.points, k)?;
        let mut best: Option<(usize, f64)> = None;
        for (ci, build) in builds.iter().enumerate() {
            centroid_buf.clear();
            centroid_buf.extend(build.sum.iter().map(|&s| s * (1.0 / build.n as f64)));
            let d = mdf_distance(&r, &centroid_buf)?;
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((ci, d));
            }
        }
        match best {
            Some((ci, d)) if d < threshold => {
                let build = &mut builds[ci];
                centroid_buf.clear();
                centroid_buf.extend(build.sum.iter().map(|&s| s * (1.0 / build.n as f64)));
                let (direct, flipped) = mdf_terms(&r, &centroid_buf);
                let flip = flipped < direct;
                for (i, acc) in build.sum.iter_mut().enumerate() {
                    *acc += if flip { r[k - 1 - i] } else { r[i] };
                }
                build.n += 1;
                build.members.push(index);
            }
            _ => builds.push(Build {
                sum: r,
                n: 1,
                members: vec![index],
            }),
        }
    }
    Ok(builds
        .into_iter()
        .enumerate()
        .map(|(id, b)| Cluster {
            id,
            member_indices: b.members,
            centroid: b.sum.iter().map(|&s| s * (1.0 / b.n as f64)).collect(),
        })
        .collect())
}

/// One histogram per cluster over that cluster's members' records, all with
/// identical bin edges.
pub fn per_cluster_histograms(
    records: &[TrackingRecord],
    clusters: &[Cluster],
    param: ParamKind,
    n_bins: usize,
    range: (f64, f64),
) -> Result<Vec<ParamHistogram>> {
    let by_streamline: HashMap<u64, usize> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.streamline_index.map(|s| (s, i)))
        .collect();
    let mut out = Vec::with_capacity(clusters.len());
    for cluster in clusters {
        let subset: Vec<usize> = cluster
            .member_indices
            .iter()
            .map(|&m| {
                by_streamline.get(&(m as u64)).copied().ok_or_else(|| {
                    Error::Consistency(format!(
                        "cluster {} references streamline {m} with no matching record",
                        cluster.id
                    ))
                })
            })
            .collect::<Result<_>>()?;
        out.push(histogram(records, param, n_bins, range, Some(&subset))?);
    }
    Ok(out)
}

/// Refined sampling range for one parameter.
#[derive(Debug, Clone)]
pub struct RangeSuggestion {
    pub param: ParamKind,
    pub suggested_min: f64,
    pub suggested_max: f64,
    /// Fraction of accepted mass inside the suggested range.
    pub support_fraction: f64,
}

/// Smallest contiguous bin interval holding at least `keep_fraction` of the
/// accepted mass; ties go to the interval with the higher mean acceptance
/// rate. The suggestion never widens the original sampling range.
pub fn suggest_ranges(hist: &ParamHistogram, keep_fraction: f64) -> Result<RangeSuggestion> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::parameter(format!(
            "keep_fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    let total: u64 = hist.accepted_counts.iter().sum();
    if total == 0 {
        return Err(Error::Refinement(
            "no accepted records: nothing to refine (widen ranges or check inputs)".to_string(),
        ));
    }
    let n = hist.n_bins();
    let needed = keep_fraction * total as f64;
    for len in 1..=n {
        let mut best: Option<(usize, f64, u64)> = None;
        for start in 0..=(n - len) {
            let mass: u64 = hist.accepted_counts[start..start + len].iter().sum();
            if (mass as f64) + 1e-9 >= needed {
                let mean_rate: f64 = hist.acceptance_rate[start..start + len]
                    .iter()
                    .sum::<f64>()
                    / len as f64;
                if best.map_or(true, |(_, br, _)| mean_rate > br) {
                    best = Some((start, mean_rate, mass));
                }
            }
        }
        if let Some((start, _, mass)) = best {
            return Ok(RangeSuggestion {
                param: hist.param,
                suggested_min: hist.bin_edges[start],
                suggested_max: hist.bin_edges[start + len],
                support_fraction: mass as f64 / total as f64,
            });
        }
    }
    unreachable!("the full interval always holds the whole accepted mass")
}
