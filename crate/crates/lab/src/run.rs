//! Replica-parallel drivers.
//!
//! Parallel runs collect per-replica results into replica-indexed order
//! before any reduction, so every statistic is byte-identical to a
//! sequential run regardless of the worker count.

use crate::error::LabError;
use hcg_core::geom::{DiskRegion, UnitPoint};
use hcg_core::partition::PartitionTable;
use hcg_core::stats::{
    self, tail_reports_from_deltas, variance_report_from_counts, TailReport, VarianceReport,
};
use hcg_core::tilt::{
    measure_tilted_replica, tilted_report_from_outcomes, TailSide, TiltParams, TiltedOutcome,
    TiltedTreeSampler,
};
use rayon::prelude::*;

/// Build a local rayon pool with the requested worker count (0 = all
/// available cores).
pub fn pool(workers: usize) -> Result<rayon::ThreadPool, LabError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))
}

/// Map replicas `0..replicas` in parallel, preserving index order.
pub fn par_replicas<T, F>(workers: usize, replicas: u64, f: F) -> Result<Vec<T>, LabError>
where
    T: Send,
    F: Fn(u64) -> Result<T, LabError> + Sync,
{
    pool(workers)?.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|idx| f(idx))
            .collect::<Result<Vec<T>, LabError>>()
    })
}

/// Parallel variance scan (see [`stats::variance_scan`]).
pub fn variance_scan(
    table: &PartitionTable,
    n: u32,
    z: UnitPoint,
    r_grid: &[f64],
    replicas: u64,
    seed: u64,
    workers: usize,
) -> Result<VarianceReport, LabError> {
    let disks = stats::microscopic_disks(z, r_grid, n)?;
    let counts = par_replicas(workers, replicas, |idx| {
        Ok(stats::measure_disk_counts(table, n, seed, idx, &disks)?)
    })?;
    Ok(variance_report_from_counts(r_grid, &counts)?)
}

/// Parallel naive tail scan at one radius (see [`stats::tail_scan`]).
pub fn tail_scan(
    table: &PartitionTable,
    n: u32,
    z: UnitPoint,
    r: f64,
    alpha_grid: &[f64],
    replicas: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<(f64, TailReport)>, LabError> {
    if replicas == 0 {
        return Err(LabError::Config("tail scan needs replicas >= 1".into()));
    }
    if alpha_grid.is_empty() {
        return Err(LabError::Config("empty alpha grid".into()));
    }
    let disks = stats::microscopic_disks(z, &[r], n)?;
    let deltas = par_replicas(workers, replicas, |idx| {
        Ok(stats::measure_abs_discrepancies(table, n, seed, idx, &disks)?[0])
    })?;
    Ok(tail_reports_from_deltas(r, alpha_grid, &deltas))
}

/// Parallel tilted tail estimate. Each worker owns a sampler clone; the
/// outcomes are reduced in replica order.
#[allow(clippy::too_many_arguments)]
pub fn tilted_tail_estimate(
    table: &PartitionTable,
    n: u32,
    disk: DiskRegion,
    threshold: f64,
    xi: f64,
    depth: u8,
    replicas: u64,
    seed: u64,
    side: TailSide,
    workers: usize,
) -> Result<TailReport, LabError> {
    if replicas == 0 {
        return Err(LabError::Config("tilted estimate needs replicas >= 1".into()));
    }
    let params = TiltParams { xi, depth };
    // Validate the construction once up front.
    TiltedTreeSampler::new(table, n, disk, params)?;
    let outcomes: Vec<TiltedOutcome> = pool(workers)?.install(|| {
        (0..replicas)
            .into_par_iter()
            .map_init(
                || TiltedTreeSampler::new(table, n, disk, params).expect("validated above"),
                |sampler, idx| Ok(measure_tilted_replica(sampler, seed, idx)?),
            )
            .collect::<Result<Vec<TiltedOutcome>, LabError>>()
    })?;
    Ok(tilted_report_from_outcomes(&outcomes, threshold, side, xi))
}
