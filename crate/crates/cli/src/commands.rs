//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;

use sspt_core::analysis::{
    histogram, per_cluster_histograms, quickbundles, suggest_ranges, Cluster, ParamKind,
};
use sspt_core::engine::{FixedParams, ParameterRanges, Streamline, Tracker, TrackingRecord};
use sspt_core::error::{Error, Result};
use sspt_core::geometry::{sh_basis, subdivide_icosahedron};
use sspt_core::io;
use sspt_core::phantom::{self, PhantomSpec};
use sspt_core::roi::RoiSet;

/// MIN:MAX pair; a single value means a degenerate range.
fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let parse_one = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| format!("'{v}' is not a number: {e}"))
    };
    match s.split_once(':') {
        Some((lo, hi)) => Ok((parse_one(lo)?, parse_one(hi)?)),
        None => {
            let v = parse_one(s)?;
            Ok((v, v))
        }
    }
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got '{s}'"));
    }
    let one = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("'{v}' is not a voxel count: {e}"))
    };
    Ok((one(parts[0])?, one(parts[1])?, one(parts[2])?))
}

#[derive(Args)]
pub struct TrackArgs {
    /// FOD volume (4-D NIfTI of SH coefficients).
    #[arg(long)]
    fod: PathBuf,
    /// Seed mask (3-D NIfTI).
    #[arg(long)]
    seed: PathBuf,
    /// 'and'-inclusion mask; repeatable.
    #[arg(long = "include")]
    include: Vec<PathBuf>,
    /// 'or'-inclusion mask; repeatable.
    #[arg(long = "include-or")]
    include_or: Vec<PathBuf>,
    /// Exclusion mask; repeatable.
    #[arg(long = "exclude")]
    exclude: Vec<PathBuf>,
    /// Step size range in mm (MIN:MAX, or one value).
    #[arg(long, value_parser = parse_range)]
    step: (f64, f64),
    /// Radius-of-curvature range in mm (MIN:MAX, or one value).
    #[arg(long, value_parser = parse_range)]
    radius: (f64, f64),
    /// Fixed FOD amplitude threshold.
    #[arg(long = "fod-threshold", conflicts_with = "fod_threshold_range")]
    fod_threshold: Option<f64>,
    /// Sample the FOD threshold per streamline (MIN:MAX).
    #[arg(long = "fod-threshold-range", value_parser = parse_range)]
    fod_threshold_range: Option<(f64, f64)>,
    /// Minimum accepted streamline length in mm.
    #[arg(long = "min-length", default_value_t = 0.0)]
    min_length: f64,
    /// Maximum streamline length in mm (reaching it rejects the streamline).
    #[arg(long = "max-length", default_value_t = 250.0)]
    max_length: f64,
    /// Number of accepted streamlines to produce.
    #[arg(long)]
    target: usize,
    /// Attempt budget; defaults to 100x the target.
    #[arg(long = "max-seeds")]
    max_seeds: Option<usize>,
    /// Global RNG seed; attempt i derives its own stream from it.
    #[arg(long = "rng-seed")]
    rng_seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output tractogram (.tck).
    #[arg(long)]
    out: PathBuf,
    /// Output per-attempt records (.jsonl).
    #[arg(long)]
    records: PathBuf,
}

pub fn track(args: TrackArgs) -> Result<()> {
    let fixed = FixedParams::default();
    let (threshold_min, threshold_max) = match (args.fod_threshold, args.fod_threshold_range) {
        (Some(v), _) => (v, v),
        (None, Some(range)) => range,
        (None, None) => (fixed.fod_threshold_default, fixed.fod_threshold_default),
    };
    let ranges = ParameterRanges {
        step_min: args.step.0,
        step_max: args.step.1,
        radius_min: args.radius.0,
        radius_max: args.radius.1,
        threshold_min,
        threshold_max,
        min_length: args.min_length,
        max_length: args.max_length,
        target_streamlines: args.target,
        max_seeds: args.max_seeds.unwrap_or(args.target.saturating_mul(100)),
    };
    ranges.validate()?;

    let img = io::read_fod(&args.fod)?;
    let mut rois = RoiSet::new(io::read_mask(&args.seed)?);
    for path in &args.include {
        rois.include_and.push(io::read_mask(path)?);
    }
    for path in &args.include_or {
        rois.include_or.push(io::read_mask(path)?);
    }
    for path in &args.exclude {
        rois.exclude.push(io::read_mask(path)?);
    }

    let sphere = subdivide_icosahedron(fixed.sh_resolution)?;
    let basis = sh_basis(&sphere, img.lmax)?;
    let tracker = Tracker::new(&img, &sphere, &basis, &rois, &ranges, fixed)?;

    let start = Instant::now();
    let output = tracker.run(args.rng_seed, args.threads)?;
    let elapsed = start.elapsed();

    io::write_tck(&args.out, &output.streamlines)?;
    io::write_records(&args.records, &output.records)?;

    let attempts = output.records.len();
    let accepted = output.streamlines.len();
    let rate = if attempts > 0 {
        accepted as f64 / attempts as f64
    } else {
        0.0
    };
    println!(
        "attempts: {attempts}\naccepted: {accepted}\nacceptance_rate: {rate:.4}\nwall_time_s: {:.3}",
        elapsed.as_secs_f64()
    );
    Ok(())
}

/// Shared by analyze and refine: pick the histogram span.
fn param_range(
    records: &[TrackingRecord],
    param: ParamKind,
    explicit: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    if let Some((lo, hi)) = explicit {
        if !(lo < hi) {
            return Err(Error::Parameter(format!(
                "--range [{lo}, {hi}] must satisfy min < max"
            )));
        }
        return Ok((lo, hi));
    }
    // Fall back to the observed attempted span when the sampling range is
    // not supplied.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in records {
        let v = param.extract(r);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter("no records to span a range".into()));
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    Ok((lo, hi))
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Tracking records (.jsonl).
    #[arg(long)]
    records: PathBuf,
    /// Parameter to histogram: step_size, radius, cone_angle, fod_threshold.
    #[arg(long)]
    param: String,
    /// Number of equal-width bins.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Configured sampling range MIN:MAX (defaults to the observed span).
    #[arg(long, value_parser = parse_range)]
    range: Option<(f64, f64)>,
    /// Cluster assignments CSV; emits one extra histogram per cluster.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Output histogram CSV.
    #[arg(long)]
    out: PathBuf,
}

fn clusters_from_assignments(rows: &[(u64, u64)]) -> Vec<Cluster> {
    let mut ids: Vec<u64> = rows.iter().map(|&(_, c)| c).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.iter()
        .map(|&id| Cluster {
            id: id as usize,
            member_indices: rows
                .iter()
                .filter(|&&(_, c)| c == id)
                .map(|&(s, _)| s as usize)
                .collect(),
            centroid: Vec::new(),
        })
        .collect()
}

fn cluster_csv_path(out: &Path, cluster_id: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("histogram");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}_c{cluster_id}.{ext}"))
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let param = ParamKind::parse(&args.param)?;
    let records = io::read_records(&args.records)?;
    let range = param_range(&records, param, args.range)?;
    let global = histogram(&records, param, args.bins, range, None)?;
    io::write_histogram_csv(&args.out, &global)?;
    println!(
        "histogram: {} bins over [{}, {}] -> {}",
        args.bins,
        range.0,
        range.1,
        args.out.display()
    );
    if let Some(clusters_path) = &args.clusters {
        let assignments = io::read_clusters_csv(clusters_path)?;
        let clusters = clusters_from_assignments(&assignments);
        let per = per_cluster_histograms(&records, &clusters, param, args.bins, range)?;
        for (cluster, hist) in clusters.iter().zip(&per) {
            let path = cluster_csv_path(&args.out, cluster.id);
            io::write_histogram_csv(&path, hist)?;
            println!("cluster {}: {}", cluster.id, path.display());
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct ClusterArgs {
    /// Input tractogram (.tck).
    #[arg(long)]
    tracks: PathBuf,
    /// MDF distance threshold in mm.
    #[arg(long)]
    threshold: f64,
    /// Resample point count for the MDF metric.
    #[arg(long, default_value_t = 12)]
    points: usize,
    /// Output assignments CSV; centroids go to <out>_centroids.tck.
    #[arg(long)]
    out: PathBuf,
}

pub fn cluster(args: ClusterArgs) -> Result<()> {
    let streamlines = io::read_tck(&args.tracks)?;
    let clusters = quickbundles(&streamlines, args.threshold, args.points)?;
    io::write_clusters_csv(&args.out, &clusters)?;
    let centroids: Vec<Streamline> = clusters
        .iter()
        .map(|c| Streamline {
            points: c.centroid.clone(),
        })
        .collect();
    let stem = args
        .out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("clusters");
    let centroid_path = args.out.with_file_name(format!("{stem}_centroids.tck"));
    io::write_tck(&centroid_path, &centroids)?;
    println!(
        "clusters: {} over {} streamlines -> {}, centroids -> {}",
        clusters.len(),
        streamlines.len(),
        args.out.display(),
        centroid_path.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct RefineArgs {
    /// Tracking records (.jsonl).
    #[arg(long)]
    records: PathBuf,
    /// Parameter to refine: step_size, radius, cone_angle, fod_threshold.
    #[arg(long)]
    param: String,
    /// Fraction of accepted mass the refined range must keep.
    #[arg(long, default_value_t = 0.95)]
    keep: f64,
    /// Number of histogram bins used for the refinement.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Configured sampling range MIN:MAX (defaults to the observed span).
    #[arg(long, value_parser = parse_range)]
    range: Option<(f64, f64)>,
    /// Output suggestion CSV.
    #[arg(long)]
    out: PathBuf,
}

pub fn refine(args: RefineArgs) -> Result<()> {
    let param = ParamKind::parse(&args.param)?;
    let records = io::read_records(&args.records)?;
    let range = param_range(&records, param, args.range)?;
    let hist = histogram(&records, param, args.bins, range, None)?;
    let suggestion = suggest_ranges(&hist, args.keep)?;
    io::write_suggestion_csv(&args.out, &suggestion)?;
    let flag = match param {
        ParamKind::StepSize => Some("--step"),
        ParamKind::Radius => Some("--radius"),
        ParamKind::FodThreshold => Some("--fod-threshold-range"),
        ParamKind::ConeAngle => None,
    };
    match flag {
        Some(flag) => println!(
            "suggested: {flag} {:.4}:{:.4} (keeps {:.1}% of accepted mass)",
            suggestion.suggested_min,
            suggestion.suggested_max,
            100.0 * suggestion.support_fraction
        ),
        None => println!(
            "suggested {}: {:.4}:{:.4} (derived from step and radius; keeps {:.1}% of accepted mass)",
            param.as_str(),
            suggestion.suggested_min,
            suggestion.suggested_max,
            100.0 * suggestion.support_fraction
        ),
    }
    Ok(())
}

#[derive(Args)]
pub struct PhantomArgs {
    /// Geometry kind: straight, arc, or crossing.
    #[arg(long)]
    kind: String,
    /// Center-circle radius of the arc phantom in mm.
    #[arg(long = "arc-radius")]
    arc_radius: Option<f64>,
    /// Bundle tube radius in mm.
    #[arg(long = "bundle-radius")]
    bundle_radius: Option<f64>,
    /// Volume dimensions in voxels (X,Y,Z).
    #[arg(long, value_parser = parse_dims)]
    dims: Option<(usize, usize, usize)>,
    /// Isotropic voxel size in mm.
    #[arg(long)]
    voxel: Option<f64>,
    /// Output directory for fod/seed/include volumes.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

pub fn phantom(args: PhantomArgs) -> Result<()> {
    let mut spec = match args.kind.as_str() {
        "straight" => PhantomSpec::straight(),
        "arc" => PhantomSpec::arc(),
        "crossing" => PhantomSpec::crossing(),
        other => {
            // Let the registry report the known names.
            let mut s = PhantomSpec::straight();
            s.kind = other.to_string();
            phantom::geometry_for(&s)?;
            unreachable!("unknown kinds fail geometry lookup");
        }
    };
    if let Some(r) = args.arc_radius {
        spec.arc_radius = r;
    }
    if let Some(r) = args.bundle_radius {
        spec.bundle_radius = r;
    }
    if let Some(d) = args.dims {
        spec.volume_dims = d;
    }
    if let Some(v) = args.voxel {
        spec.voxel_size = v;
    }
    let (img, rois) = phantom::generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let fod_path = args.out_dir.join("fod.nii.gz");
    let seed_path = args.out_dir.join("seed.nii.gz");
    let a_path = args.out_dir.join("include_a.nii.gz");
    let b_path = args.out_dir.join("include_b.nii.gz");
    io::write_fod_nifti(&fod_path, &img)?;
    io::write_mask_nifti(&seed_path, &rois.seed)?;
    io::write_mask_nifti(&a_path, &rois.include_and[0])?;
    io::write_mask_nifti(&b_path, &rois.include_and[1])?;
    for p in [&fod_path, &seed_path, &a_path, &b_path] {
        println!("wrote {}", p.display());
    }
    Ok(())
}
