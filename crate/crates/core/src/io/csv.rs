//! CSV outputs for histograms, cluster assignments, and range suggestions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::analysis::{Cluster, ParamHistogram, RangeSuggestion};
use crate::error::{Error, Result};

/// Columns: bin_lo, bin_hi, attempted, accepted, rate.
pub fn write_histogram_csv(path: impl AsRef<Path>, hist: &ParamHistogram) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "bin_lo,bin_hi,attempted,accepted,rate")?;
    for i in 0..hist.n_bins() {
        writeln!(
            out,
            "{},{},{},{},{}",
            hist.bin_edges[i],
            hist.bin_edges[i + 1],
            hist.attempted_counts[i],
            hist.accepted_counts[i],
            hist.acceptance_rate[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Columns: streamline_index, cluster_id; rows sorted by streamline index.
pub fn write_clusters_csv(path: impl AsRef<Path>, clusters: &[Cluster]) -> Result<()> {
    let mut rows: Vec<(usize, usize)> = clusters
        .iter()
        .flat_map(|c| c.member_indices.iter().map(move |&m| (m, c.id)))
        .collect();
    rows.sort_unstable();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "streamline_index,cluster_id")?;
    for (streamline, cluster) in rows {
        writeln!(out, "{streamline},{cluster}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read cluster assignments back as (streamline_index, cluster_id) pairs.
pub fn read_clusters_csv(path: impl AsRef<Path>) -> Result<Vec<(u64, u64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 {
            if trimmed != "streamline_index,cluster_id" {
                return Err(Error::format(format!(
                    "line 1: expected header 'streamline_index,cluster_id', got '{trimmed}'"
                )));
            }
            continue;
        }
        let (a, b) = trimmed.split_once(',').ok_or_else(|| {
            Error::format(format!("line {}: expected two comma-separated fields", i + 1))
        })?;
        let parse = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::format(format!("line {}: {e}", i + 1)))
        };
        rows.push((parse(a)?, parse(b)?));
    }
    Ok(rows)
}

/// Columns: param, suggested_min, suggested_max, support_fraction.
pub fn write_suggestion_csv(path: impl AsRef<Path>, s: &RangeSuggestion) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "param,suggested_min,suggested_max,support_fraction")?;
    writeln!(
        out,
        "{},{},{},{}",
        s.param.as_str(),
        s.suggested_min,
        s.suggested_max,
        s.support_fraction
    )?;
    out.flush()?;
    Ok(())
}
