//! Parallel `(snr, seed)` sweeps written atomically to CSV, with resume.

use std::path::Path;

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::metrics::{MetricsRow, CSV_HEADER};
use crate::trial::run_trial;

/// Environment variable capping the worker count; unset means all cores.
pub const THREADS_ENV: &str = "JCESD_THREADS";

/// SNR values closer than this are the same grid point.
const SNR_MATCH_TOL: f64 = 1e-9;

/// Parse `LO:HI:STEP` into an inclusive grid.
pub fn parse_snr_range(range: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = range.split(':').collect();
    let bad = || SimError::InvalidArgument(format!("expected LO:HI:STEP, got {range:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && step.is_finite()) || hi < lo {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    // Round to clean decimals so `0:1:0.1` yields 0.3 rather than 0.30000000000000004.
    Ok((0..count).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Worker count requested through the environment, if any.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(SimError::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Run the given cells in parallel; results come back in cell order.
pub fn run_cells(cfg: &SimConfig, cells: &[(f64, u64)]) -> Result<Vec<Vec<MetricsRow>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap()?.unwrap_or(0))
        .build()
        .map_err(|e| SimError::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(|&(snr, seed)| run_trial(cfg, snr, seed)).collect())
}

/// All rows of a grid, ordered by SNR, then seed, then user.
pub fn sweep_rows(cfg: &SimConfig, snrs: &[f64], seeds: &[u64]) -> Result<Vec<MetricsRow>> {
    let cells = grid_cells(snrs, seeds)?;
    Ok(run_cells(cfg, &cells)?.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub computed_cells: usize,
    pub skipped_cells: usize,
    pub rows_written: usize,
}

/// Sweep into `out`. Cells already complete in an existing `out` (every
/// user present for this receiver) are kept as they are and not rerun.
pub fn sweep(cfg: &SimConfig, snrs: &[f64], seeds: &[u64], out: &Path) -> Result<SweepSummary> {
    let cells = grid_cells(snrs, seeds)?;
    let existing = if out.exists() { read_rows(out)? } else { Vec::new() };
    let complete = |&(snr, seed): &(f64, u64)| {
        (0..cfg.k).all(|user| existing.iter().any(|r| same_cell(r, snr, seed) && r.user == user && r.receiver == cfg.receiver))
    };
    let todo: Vec<(f64, u64)> = cells.iter().copied().filter(|c| !complete(c)).collect();
    let mut fresh = run_cells(cfg, &todo)?.into_iter();

    let mut rows = Vec::new();
    for cell in &cells {
        if complete(cell) {
            let mut kept: Vec<MetricsRow> = existing
                .iter()
                .filter(|r| same_cell(r, cell.0, cell.1) && r.receiver == cfg.receiver && r.user < cfg.k)
                .cloned()
                .collect();
            kept.sort_by_key(|r| r.user);
            kept.dedup_by_key(|r| r.user);
            rows.extend(kept);
        } else {
            rows.extend(fresh.next().expect("one result per pending cell"));
        }
    }
    // Rows from outside this grid (other SNRs, seeds or receivers) survive.
    rows.extend(
        existing
            .iter()
            .filter(|r| !(r.receiver == cfg.receiver && cells.iter().any(|c| same_cell(r, c.0, c.1))))
            .cloned(),
    );
    write_rows(out, &rows)?;
    Ok(SweepSummary { computed_cells: todo.len(), skipped_cells: cells.len() - todo.len(), rows_written: rows.len() })
}

fn grid_cells(snrs: &[f64], seeds: &[u64]) -> Result<Vec<(f64, u64)>> {
    if snrs.is_empty() || seeds.is_empty() {
        return Err(SimError::InvalidArgument("SNR and seed grids must be non-empty".into()));
    }
    Ok(snrs.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect())
}

fn same_cell(row: &MetricsRow, snr: f64, seed: u64) -> bool {
    row.seed == seed && (row.snr_db - snr).abs() <= SNR_MATCH_TOL
}

/// Parse a results file, insisting on the exact header.
pub fn read_rows(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(SimError::InvalidArgument(format!("{} does not have the results header", path.display())));
    }
    reader.deserialize().map(|r| r.map_err(SimError::from)).collect()
}

/// Write rows through a temporary file in the target directory, then
/// rename it into place.
pub fn write_rows(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| SimError::io(dir, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut tmp);
        if rows.is_empty() {
            w.write_record(CSV_HEADER.split(','))?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| SimError::io(path, e))?;
    }
    tmp.as_file_mut().sync_all().map_err(|e| SimError::io(path, e))?;
    tmp.persist(path).map_err(|e| SimError::io(path, e.error))?;
    Ok(())
}
