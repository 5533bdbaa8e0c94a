//! Charge-fluctuation statistics: disk counts and discrepancies, variance
//! and tail scans over replicas, the piecewise-linear fluctuation exponent
//! and its log-log fits, dyadic concentration tails, the exposure-
//! martingale decomposition identity, and overcrowding probabilities.
//!
//! Monte Carlo reductions consume replica-ordered slices, so results are
//! identical whether replicas were produced sequentially or in parallel.

use crate::energy::{Beta, Configuration};
use crate::error::invalid;
use crate::geom::{disk_cover, relative_area, DiskRegion, DyadicSquare, UnitPoint};
use crate::logreal::LogReal;
use crate::math;
use crate::numeric::{jackknife_var_stderr, pairs, stderr_of_mean, LN_4};
use crate::partition::PartitionTable;
use crate::sampler::sample_replica_points;
use crate::Result;
use alloc::vec::Vec;

/// Point count of one disk against its expectation.
#[derive(Clone, Copy, Debug)]
pub struct DiscrepancyStat {
    pub count: u32,
    /// `n * Leb(D)`.
    pub expected: f64,
    /// `count - expected`.
    pub delta: f64,
}

/// Count the points of a configuration inside a closed disk and center by
/// `n * Leb(D)`.
pub fn disk_discrepancy(cfg: &Configuration, disk: &DiskRegion) -> DiscrepancyStat {
    let count = cfg.points().iter().filter(|p| disk.contains(p)).count() as u32;
    let expected = cfg.len() as f64 * disk.area();
    DiscrepancyStat {
        count,
        expected,
        delta: count as f64 - expected,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    Naive,
    Tilted,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Tilted => "tilted",
        }
    }
}

/// Scale on which a tail report's standard error is expressed.
///
/// Tilted estimates can sit thousands of orders of magnitude below one,
/// where a linear-scale standard error would underflow; those reports
/// carry `ln(stderr)` instead and flag it here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StderrScale {
    Linear,
    Log,
}

/// One rare-event estimate.
#[derive(Clone, Copy, Debug)]
pub struct TailReport {
    pub estimator: EstimatorKind,
    pub threshold: f64,
    pub estimate: LogReal,
    /// Standard error, on the scale declared by `stderr_scale`.
    pub stderr: f64,
    pub stderr_scale: StderrScale,
    pub replicas: u64,
    /// Zero-hit runs report the rule-of-three bound `3 / replicas` and set
    /// this flag instead of claiming a zero estimate.
    pub upper_bound: bool,
    /// Effective sample size (tilted estimates only).
    pub ess: Option<f64>,
    /// Tilt strength (tilted estimates only).
    pub xi: Option<f64>,
}

impl TailReport {
    /// Build a naive report from a hit count.
    pub fn from_hits(hits: u64, replicas: u64, threshold: f64) -> TailReport {
        assert!(replicas > 0);
        if hits == 0 {
            TailReport {
                estimator: EstimatorKind::Naive,
                threshold,
                estimate: LogReal::from_ln(math::ln(3.0) - math::ln(replicas as f64)),
                stderr: 0.0,
                stderr_scale: StderrScale::Linear,
                replicas,
                upper_bound: true,
                ess: None,
                xi: None,
            }
        } else {
            let p = hits as f64 / replicas as f64;
            TailReport {
                estimator: EstimatorKind::Naive,
                threshold,
                estimate: LogReal::from_f64(p),
                stderr: math::sqrt(p * (1.0 - p) / replicas as f64),
                stderr_scale: StderrScale::Linear,
                replicas,
                upper_bound: false,
                ess: None,
                xi: None,
            }
        }
    }

    /// Standard deviation of `ln p̂` implied by the stored standard error.
    pub fn sd_of_log_estimate(&self) -> f64 {
        match self.stderr_scale {
            StderrScale::Linear => self.stderr / self.estimate.to_f64(),
            StderrScale::Log => math::exp(self.stderr - self.estimate.ln_abs()),
        }
    }
}

/// One row of a variance scan.
#[derive(Clone, Copy, Debug)]
pub struct VarianceRow {
    pub r: f64,
    pub variance: f64,
    pub stderr: f64,
    pub replicas: u64,
}

#[derive(Clone, Debug)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
}

/// Build the microscopic disks `D(z, r/sqrt(n))` for a grid of radii,
/// failing with a window error when any disk leaves the unit square.
pub fn microscopic_disks(z: UnitPoint, r_grid: &[f64], n: u32) -> Result<Vec<DiskRegion>> {
    if r_grid.is_empty() {
        return Err(invalid!("empty R grid"));
    }
    r_grid
        .iter()
        .map(|&r| DiskRegion::microscopic(z, r, n as u64))
        .collect()
}

/// Disk counts of one replica, in grid order.
pub fn measure_disk_counts(
    table: &PartitionTable,
    n: u32,
    base_seed: u64,
    idx: u64,
    disks: &[DiskRegion],
) -> Result<Vec<u32>> {
    let pts = sample_replica_points(table, n, base_seed, idx)?;
    Ok(disks
        .iter()
        .map(|d| pts.iter().filter(|p| d.contains(p)).count() as u32)
        .collect())
}

/// Reduce replica-ordered disk counts to a variance report with jackknife
/// standard errors.
pub fn variance_report_from_counts(
    r_grid: &[f64],
    counts: &[Vec<u32>],
) -> Result<VarianceReport> {
    if counts.len() < 3 {
        return Err(invalid!("variance needs at least 3 replicas"));
    }
    let mut rows = Vec::with_capacity(r_grid.len());
    for (j, &r) in r_grid.iter().enumerate() {
        let xs: Vec<f64> = counts.iter().map(|row| row[j] as f64).collect();
        let (_, var) = crate::numeric::mean_var(&xs);
        rows.push(VarianceRow {
            r,
            variance: var,
            stderr: jackknife_var_stderr(&xs),
            replicas: counts.len() as u64,
        });
    }
    Ok(VarianceReport { rows })
}

/// Sequential variance scan over `replicas` exact samples.
pub fn variance_scan(
    table: &PartitionTable,
    n: u32,
    z: UnitPoint,
    r_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<VarianceReport> {
    let disks = microscopic_disks(z, r_grid, n)?;
    let mut counts = Vec::with_capacity(replicas as usize);
    for idx in 0..replicas {
        counts.push(measure_disk_counts(table, n, seed, idx, &disks)?);
    }
    variance_report_from_counts(r_grid, &counts)
}

/// Absolute discrepancies `|Delta(D_r)|` of one replica, in grid order.
pub fn measure_abs_discrepancies(
    table: &PartitionTable,
    n: u32,
    base_seed: u64,
    idx: u64,
    disks: &[DiskRegion],
) -> Result<Vec<f64>> {
    let pts = sample_replica_points(table, n, base_seed, idx)?;
    let nf = n as f64;
    Ok(disks
        .iter()
        .map(|d| {
            let count = pts.iter().filter(|p| d.contains(p)).count() as f64;
            (count - nf * d.area()).abs()
        })
        .collect())
}

/// Reduce replica-ordered `|Delta|` values to naive tail reports over a
/// grid of thresholds `r^alpha`.
pub fn tail_reports_from_deltas(
    r: f64,
    alpha_grid: &[f64],
    abs_deltas: &[f64],
) -> Vec<(f64, TailReport)> {
    let replicas = abs_deltas.len() as u64;
    alpha_grid
        .iter()
        .map(|&alpha| {
            let threshold = math::powf(r, alpha);
            let hits = abs_deltas.iter().filter(|&&d| d >= threshold).count() as u64;
            (alpha, TailReport::from_hits(hits, replicas, threshold))
        })
        .collect()
}

/// Sequential naive tail scan at one radius over a grid of exponents.
pub fn tail_scan(
    table: &PartitionTable,
    n: u32,
    z: UnitPoint,
    r: f64,
    alpha_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<(f64, TailReport)>> {
    if replicas == 0 {
        return Err(invalid!("tail scan needs at least one replica"));
    }
    if alpha_grid.is_empty() {
        return Err(invalid!("empty alpha grid"));
    }
    let disks = microscopic_disks(z, &[r], n)?;
    let mut deltas = Vec::with_capacity(replicas as usize);
    for idx in 0..replicas {
        deltas.push(measure_abs_discrepancies(table, n, seed, idx, &disks)?[0]);
    }
    Ok(tail_reports_from_deltas(r, alpha_grid, &deltas))
}

/// The piecewise-linear fluctuation exponent: `2a - 1` on `(1/2, 1]`,
/// `3a - 2` on `[1, 2]`, `2a` on `[2, inf)`; continuous at both seams.
pub fn jlm_exponent(alpha: f64) -> Result<f64> {
    if !(alpha > 0.5) {
        return Err(invalid!("exponent defined for alpha > 1/2, got {alpha}"));
    }
    Ok(if alpha <= 1.0 {
        2.0 * alpha - 1.0
    } else if alpha <= 2.0 {
        3.0 * alpha - 2.0
    } else {
        2.0 * alpha
    })
}

/// Least-squares fit of `ln(-ln p̂)` against `ln r`.
#[derive(Clone, Copy, Debug)]
pub struct ExponentFit {
    pub slope: f64,
    pub slope_stderr: f64,
    /// 95% confidence interval by the delta method.
    pub ci95: (f64, f64),
    pub intercept: f64,
    pub points_used: usize,
}

/// Fit the tail exponent from reports across a radius grid at fixed alpha.
///
/// Upper-bound (zero-hit) rows carry no usable estimate and are skipped;
/// at least three informative points are required.
pub fn fit_tail_exponent(points: &[(f64, TailReport)]) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sd_y = Vec::new();
    for (r, rep) in points {
        if rep.upper_bound || rep.estimate.is_zero() {
            continue;
        }
        let log_p = rep.estimate.ln_abs();
        if log_p >= 0.0 {
            continue; // p = 1 carries no tail information
        }
        xs.push(math::ln(*r));
        ys.push(math::ln(-log_p));
        let sd_log_p = rep.sd_of_log_estimate();
        sd_y.push(sd_log_p / (-log_p));
    }
    if xs.len() < 3 {
        return Err(invalid!(
            "tail exponent fit needs >= 3 grid points with nonzero estimates, got {}",
            xs.len()
        ));
    }
    let k = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / k;
    let y_bar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    if sxx == 0.0 {
        return Err(invalid!("all radii coincide; slope undefined"));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_bar) * (y - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let var_slope: f64 = xs
        .iter()
        .zip(&sd_y)
        .map(|(x, sd)| {
            let w = (x - x_bar) / sxx;
            w * w * sd * sd
        })
        .sum();
    let se = math::sqrt(var_slope);
    Ok(ExponentFit {
        slope,
        slope_stderr: se,
        ci95: (slope - 1.96 * se, slope + 1.96 * se),
        intercept,
        points_used: xs.len(),
    })
}

/// Tail table for the concentration of the count in one dyadic square:
/// the deviation probability `P[|Delta(Q)| >= L^kappa]` at `n = 4^j * L`.
#[derive(Clone, Debug)]
pub struct DyadicTailReport {
    pub l_points: u32,
    pub level: u8,
    pub kappa: f64,
    pub report: TailReport,
    /// `-ln p̂ / L^(2 kappa)`, the envelope-normalized decay rate.
    pub normalized_rate: Option<f64>,
}

/// Monte Carlo estimate of the dyadic concentration tail for the corner
/// square of level `j`. Level 0 is degenerate (the total count is
/// deterministic) and reports an exact zero.
pub fn dyadic_tail(
    table: &PartitionTable,
    l_points: u32,
    j: u8,
    kappa: f64,
    replicas: u64,
    seed: u64,
) -> Result<DyadicTailReport> {
    if !(0.0..1.0).contains(&kappa) || kappa == 0.0 {
        return Err(invalid!("kappa must lie in (0, 1), got {kappa}"));
    }
    if l_points < 2 {
        return Err(invalid!("need L >= 2"));
    }
    let threshold = math::powf(l_points as f64, kappa);
    if j == 0 {
        return Ok(DyadicTailReport {
            l_points,
            level: 0,
            kappa,
            report: TailReport {
                estimator: EstimatorKind::Naive,
                threshold,
                estimate: LogReal::ZERO,
                stderr: 0.0,
                stderr_scale: StderrScale::Linear,
                replicas: 0,
                upper_bound: false,
                ess: None,
                xi: None,
            },
            normalized_rate: None,
        });
    }
    let n = (l_points as u64) << (2 * j as u64);
    if n > table.n_max() as u64 {
        return Err(invalid!(
            "n = 4^{j} * {l_points} = {n} exceeds table range {}",
            table.n_max()
        ));
    }
    let n = n as u32;
    let target = DyadicSquare::new(j, 0, 0)?;
    let expected = l_points as f64;
    let mut hits = 0u64;
    for idx in 0..replicas {
        let pts = sample_replica_points(table, n, seed, idx)?;
        let count = pts.iter().filter(|p| target.contains(p)).count() as f64;
        if (count - expected).abs() >= threshold {
            hits += 1;
        }
    }
    let report = TailReport::from_hits(hits, replicas, threshold);
    let normalized_rate = if hits > 0 {
        Some(-report.estimate.ln_abs() / math::powf(l_points as f64, 2.0 * kappa))
    } else {
        None
    };
    Ok(DyadicTailReport {
        l_points,
        level: j,
        kappa,
        report,
        normalized_rate,
    })
}

/// The two sums of the exposure martingale at level `k`, its residual,
/// and the per-sample additivity identity residual.
#[derive(Clone, Copy, Debug)]
pub struct MartingaleSplit {
    /// First level whose squares are comparable to the disk.
    pub level_floor: u8,
    /// `sum_{j<=k} sum_{maximal Q} Delta(Q)`.
    pub maximal_sum: f64,
    /// `sum_{boundary Q at level k} p(Q) Delta(Q)`.
    pub boundary_weighted_sum: f64,
    /// `Delta(D) - (maximal_sum + boundary_weighted_sum)`.
    pub residual: f64,
    /// `Delta(D) - (maximal_sum + sum_boundary Delta(D cap Q))`; exactly
    /// zero up to area rounding by additivity of the measures.
    pub identity_residual: f64,
}

/// Decompose the disk discrepancy along the quadtree at level `k`.
pub fn martingale_decomposition(
    cfg: &Configuration,
    disk: &DiskRegion,
    k: u8,
) -> Result<MartingaleSplit> {
    let floor = disk.comparable_level();
    if k < floor {
        return Err(invalid!(
            "level {k} is above the first comparable level {floor}"
        ));
    }
    let n = cfg.len() as f64;
    let cover = disk_cover(disk, k)?;
    let mut maximal_sum = 0.0;
    for level in &cover.maximal {
        for sq in level {
            let count = cfg.points().iter().filter(|p| sq.contains(p)).count() as f64;
            maximal_sum += count - n * sq.side() * sq.side();
        }
    }
    let mut boundary_weighted_sum = 0.0;
    let mut boundary_exact_sum = 0.0;
    for sq in &cover.boundary {
        let p_q = relative_area(sq, disk);
        let leb_q = sq.side() * sq.side();
        let count = cfg.points().iter().filter(|p| sq.contains(p)).count() as f64;
        boundary_weighted_sum += p_q * (count - n * leb_q);
        let count_in_disk = cfg
            .points()
            .iter()
            .filter(|p| sq.contains(p) && disk.contains(p))
            .count() as f64;
        boundary_exact_sum += count_in_disk - n * p_q * leb_q;
    }
    let delta = disk_discrepancy(cfg, disk).delta;
    Ok(MartingaleSplit {
        level_floor: floor,
        maximal_sum,
        boundary_weighted_sum,
        residual: delta - (maximal_sum + boundary_weighted_sum),
        identity_residual: delta - (maximal_sum + boundary_exact_sum),
    })
}

/// Exact probability that all `n` points crowd into one fixed level-`j`
/// square: the product of `j` per-level all-in-one-child split
/// probabilities, `(4^-n e^(-beta C(n,2)))^j`.
pub fn overcrowd_exact_path(beta: Beta, n: u32, j: u8) -> Result<LogReal> {
    if j == 0 {
        return Err(invalid!("overcrowding level must be >= 1"));
    }
    let per_level = -(n as f64) * LN_4 - beta.value() * pairs(n as u64);
    Ok(LogReal::from_ln(j as f64 * per_level))
}

/// Monte Carlo estimate of `P[count(Q) >= delta * n]` for the corner
/// square of level `j`.
pub fn overcrowd_monte_carlo(
    table: &PartitionTable,
    n: u32,
    j: u8,
    delta: f64,
    replicas: u64,
    seed: u64,
) -> Result<TailReport> {
    if j == 0 {
        return Err(invalid!("overcrowding level must be >= 1"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(invalid!("delta must lie in [0, 1], got {delta}"));
    }
    if replicas == 0 {
        return Err(invalid!("need at least one replica"));
    }
    let target = DyadicSquare::new(j, 0, 0)?;
    let threshold = delta * n as f64;
    let mut hits = 0u64;
    for idx in 0..replicas {
        let pts = sample_replica_points(table, n, seed, idx)?;
        let count = pts.iter().filter(|p| target.contains(p)).count() as f64;
        if count >= threshold {
            hits += 1;
        }
    }
    Ok(TailReport::from_hits(hits, replicas, threshold))
}

/// Mean discrepancy over replicas with its standard error; the model
/// forces the mean to vanish for any region.
pub fn mean_discrepancy(
    table: &PartitionTable,
    n: u32,
    disk: &DiskRegion,
    replicas: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut deltas = Vec::with_capacity(replicas as usize);
    let nf = n as f64;
    for idx in 0..replicas {
        let pts = sample_replica_points(table, n, seed, idx)?;
        let count = pts.iter().filter(|p| disk.contains(p)).count() as f64;
        deltas.push(count - nf * disk.area());
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Ok((mean, stderr_of_mean(&deltas)))
}

/// Exact dyadic concentration tail at level 1 by enumeration of the child
/// marginal: `P[|count - n/4| >= threshold]` for one level-1 square.
pub fn level1_tail_exact(table: &PartitionTable, n: u32, threshold: f64) -> Result<LogReal> {
    let expected = n as f64 / 4.0;
    let mut acc = crate::numeric::LogSumAcc::new();
    let mut any = false;
    for t in 0..=n {
        if (t as f64 - expected).abs() >= threshold {
            acc.push(table.child_count_log_pmf(n, t)?);
            any = true;
        }
    }
    if !any {
        return Ok(LogReal::ZERO);
    }
    Ok(LogReal::from_ln(acc.total()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Beta;
    use crate::geom::enclosing_square;

    fn pt(x: f64, y: f64) -> UnitPoint {
        UnitPoint::new(x, y).unwrap()
    }

    fn table(beta: f64, n_max: usize) -> PartitionTable {
        PartitionTable::build(Beta::new(beta).unwrap(), n_max).unwrap()
    }

    #[test]
    fn discrepancy_trivial_cases() {
        let disk = DiskRegion::new(pt(0.5, 0.5), 0.25).unwrap();
        let empty_region = Configuration::new(vec![pt(0.05, 0.05), pt(0.95, 0.95)]).unwrap();
        let stat = disk_discrepancy(&empty_region, &disk);
        assert_eq!(stat.count, 0);
        assert!((stat.delta + 2.0 * disk.area()).abs() < 1e-15);
        let all_in = Configuration::new(vec![pt(0.5, 0.5), pt(0.52, 0.48)]).unwrap();
        let stat = disk_discrepancy(&all_in, &disk);
        assert_eq!(stat.count, 2);
        assert!((stat.delta - (2.0 - 2.0 * disk.area())).abs() < 1e-15);
    }

    #[test]
    fn mean_discrepancy_vanishes() {
        let t = table(1.0, 64);
        let disk = DiskRegion::microscopic(pt(0.5, 0.5), 3.0, 64).unwrap();
        let (mean, se) = mean_discrepancy(&t, 64, &disk, 100_000, 3).unwrap();
        assert!(mean.abs() < 4.0 * se, "mean {mean} vs se {se}");
    }

    #[test]
    fn beta_zero_variance_is_binomial() {
        let t = table(0.0, 256);
        let n = 256u32;
        let z = pt(0.5, 0.5);
        let r_grid = [2.0, 4.0];
        let report = variance_scan(&t, n, z, &r_grid, 30_000, 17).unwrap();
        for row in &report.rows {
            let p = core::f64::consts::PI * row.r * row.r / n as f64;
            let expect = n as f64 * p * (1.0 - p);
            assert!(
                (row.variance - expect).abs() < 4.0 * row.stderr,
                "r {}: var {} vs binomial {expect} (se {})",
                row.r,
                row.variance,
                row.stderr
            );
        }
    }

    #[test]
    fn window_error_when_disk_leaves_square() {
        let t = table(1.0, 16);
        let err = variance_scan(&t, 16, pt(0.5, 0.5), &[3.0, 4.1], 10, 1);
        assert!(err.is_err());
    }

    #[test]
    fn tail_monotone_in_alpha() {
        let t = table(1.0, 64);
        let rows = tail_scan(&t, 64, pt(0.5, 0.5), 2.0, &[0.6, 1.0, 1.4, 1.8], 20_000, 5).unwrap();
        let mut last = f64::INFINITY;
        for (_, rep) in &rows {
            let p = rep.estimate.to_f64();
            assert!(p <= last + 1e-12, "tail not monotone");
            last = p;
        }
    }

    #[test]
    fn zero_hits_become_rule_of_three_bounds() {
        let rep = TailReport::from_hits(0, 1000, 5.0);
        assert!(rep.upper_bound);
        assert!((rep.estimate.to_f64() - 0.003).abs() < 1e-12);
    }

    #[test]
    fn exponent_piecewise_values() {
        assert!(jlm_exponent(0.4).is_err());
        assert!(jlm_exponent(0.5).is_err());
        assert!((jlm_exponent(0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!((jlm_exponent(1.5).unwrap() - 2.5).abs() < 1e-15);
        assert!((jlm_exponent(3.0).unwrap() - 6.0).abs() < 1e-15);
        // Continuity at the seams.
        assert!((jlm_exponent(1.0 - 1e-12).unwrap() - jlm_exponent(1.0 + 1e-12).unwrap()).abs() < 1e-9);
        assert!((jlm_exponent(2.0 - 1e-12).unwrap() - jlm_exponent(2.0 + 1e-12).unwrap()).abs() < 1e-9);
        assert!((jlm_exponent(2.0).unwrap() - 4.0).abs() < 1e-15);
    }

    fn synthetic_report(p: f64) -> TailReport {
        TailReport {
            estimator: EstimatorKind::Naive,
            threshold: 0.0,
            estimate: LogReal::from_f64(p),
            stderr: p * 1e-9,
            stderr_scale: StderrScale::Linear,
            replicas: 1,
            upper_bound: false,
            ess: None,
            xi: None,
        }
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let points: Vec<(f64, TailReport)> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&r| (r, synthetic_report(math::exp(-r * r))))
            .collect();
        let fit = fit_tail_exponent(&points).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9, "slope {}", fit.slope);
        assert!(fit.ci95.0 <= 2.0 && 2.0 <= fit.ci95.1);
    }

    #[test]
    fn fit_sees_polylog_contamination() {
        // p = exp(-r^s * ln r) fits a slope slightly above s.
        let s = 1.5;
        let points: Vec<(f64, TailReport)> = [4.0, 8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&r: &f64| (r, synthetic_report(math::exp(-math::powf(r, s) * math::ln(r)))))
            .collect();
        let fit = fit_tail_exponent(&points).unwrap();
        assert!(fit.slope > s && fit.slope < s + 0.5, "slope {}", fit.slope);
    }

    #[test]
    fn fit_requires_three_informative_points() {
        let points = vec![
            (2.0, synthetic_report(0.1)),
            (4.0, TailReport::from_hits(0, 100, 1.0)),
            (8.0, synthetic_report(0.001)),
        ];
        assert!(fit_tail_exponent(&points).is_err());
    }

    #[test]
    fn dyadic_tail_degenerate_level_zero() {
        let t = table(1.0, 16);
        let rep = dyadic_tail(&t, 8, 0, 0.75, 100, 1).unwrap();
        assert!(rep.report.estimate.is_zero());
        assert!(!rep.report.upper_bound);
    }

    #[test]
    fn dyadic_tail_matches_exact_level1_enumeration() {
        // A low exponent keeps the deviation probability visible to plain
        // Monte Carlo so the exact enumeration is a sharp oracle.
        let t = table(1.0, 64);
        let l = 16u32;
        let kappa = 0.25;
        let mc = dyadic_tail(&t, l, 1, kappa, 40_000, 9).unwrap();
        let exact = level1_tail_exact(&t, 4 * l, mc.report.threshold).unwrap();
        let p = exact.to_f64();
        assert!(p > 1e-3, "oracle probability too small to test: {p}");
        let se = math::sqrt(p * (1.0 - p) / mc.report.replicas as f64);
        assert!(
            (mc.report.estimate.to_f64() - p).abs() < 4.0 * se,
            "mc {} vs exact {p}",
            mc.report.estimate.to_f64()
        );
    }

    #[test]
    fn dyadic_tail_envelope_rate_is_positive_across_scales() {
        // P[|Delta(Q)| >= L^0.75] is beyond Monte Carlo reach at these L,
        // so the reports are rule-of-three upper bounds; the implied
        // lower bound on the decay rate -log p / L^(2 kappa) must stay
        // positive at every scale.
        let t = table(1.0, 256);
        let kappa = 0.75;
        let mut fitted = f64::INFINITY;
        for l in [16u32, 32, 64] {
            let rep = dyadic_tail(&t, l, 1, kappa, 20_000, 3).unwrap();
            let rate = if rep.report.upper_bound {
                -rep.report.estimate.ln_abs() / math::powf(l as f64, 2.0 * kappa)
            } else {
                rep.normalized_rate.unwrap()
            };
            assert!(rate > 0.0, "L = {l}: rate {rate}");
            fitted = fitted.min(rate);
        }
        assert!(fitted > 0.0);
    }

    #[test]
    fn martingale_identity_is_exact() {
        let t = table(1.0, 256);
        let disk = DiskRegion::microscopic(pt(0.5, 0.5), 3.0, 256).unwrap();
        let k = disk.comparable_level() + 3;
        for idx in 0..2_000u64 {
            let pts = sample_replica_points(&t, 256, 31, idx).unwrap();
            let cfg = Configuration::new_unchecked(pts);
            let split = martingale_decomposition(&cfg, &disk, k).unwrap();
            assert!(
                split.identity_residual.abs() < 1e-9,
                "identity residual {}",
                split.identity_residual
            );
        }
    }

    #[test]
    fn martingale_identity_on_empty_configuration() {
        let disk = DiskRegion::new(pt(0.5, 0.5), 0.2).unwrap();
        let cfg = Configuration::new(vec![]).unwrap();
        let split = martingale_decomposition(&cfg, &disk, disk.comparable_level() + 2).unwrap();
        assert!(split.identity_residual.abs() < 1e-12);
        assert!((split.maximal_sum + split.boundary_weighted_sum + split.residual).abs() < 1e-12);
    }

    #[test]
    fn martingale_level_below_floor_errors() {
        let disk = DiskRegion::new(pt(0.5, 0.5), 0.1).unwrap();
        let cfg = Configuration::new(vec![pt(0.4, 0.4)]).unwrap();
        assert!(martingale_decomposition(&cfg, &disk, 0).is_err());
    }

    #[test]
    fn conditional_mean_of_residual_vanishes() {
        // Fix level-k counts, resample interiors, and average the
        // boundary residual.
        let t = table(1.0, 64);
        let n = 64u32;
        let disk = DiskRegion::microscopic(pt(0.5, 0.5), 3.0, n as u64).unwrap();
        let k = disk.comparable_level() + 1;
        let outer = sample_replica_points(&t, n, 47, 0).unwrap();
        let mut frontier: alloc::collections::BTreeMap<DyadicSquare, u32> =
            alloc::collections::BTreeMap::new();
        for p in &outer {
            *frontier.entry(enclosing_square(p, k)).or_insert(0) += 1;
        }
        let frontier: Vec<(DyadicSquare, u32)> = frontier.into_iter().collect();
        let rounds = 30_000u64;
        let mut residuals = Vec::with_capacity(rounds as usize);
        for round in 0..rounds {
            let pts = crate::sampler::resample_below(&t, &frontier, 53, round).unwrap();
            let cfg = Configuration::new_unchecked(pts);
            let split = martingale_decomposition(&cfg, &disk, k).unwrap();
            residuals.push(split.residual);
        }
        let mean = residuals.iter().sum::<f64>() / rounds as f64;
        let se = stderr_of_mean(&residuals);
        assert!(mean.abs() < 4.0 * se, "residual mean {mean} vs se {se}");
    }

    #[test]
    fn overcrowd_exact_path_hand_values() {
        let b = Beta::new(1.0).unwrap();
        let p1 = overcrowd_exact_path(b, 2, 1).unwrap();
        assert!((p1.ln() - (-1.0 - math::ln(16.0))).abs() < 1e-12);
        let p2 = overcrowd_exact_path(b, 2, 2).unwrap();
        assert!((p2.ln() - (-2.0 - math::ln(256.0))).abs() < 1e-12);
        assert!(overcrowd_exact_path(b, 2, 0).is_err());
    }

    #[test]
    fn overcrowd_monte_carlo_matches_exact_path() {
        // P[count(Q) >= n] = P[count(Q) = n] for the full count.
        let t = table(1.0, 4);
        let rep = overcrowd_monte_carlo(&t, 2, 1, 1.0, 2_000_000, 13).unwrap();
        let exact = overcrowd_exact_path(Beta::new(1.0).unwrap(), 2, 1)
            .unwrap()
            .to_f64();
        let se = math::sqrt(exact * (1.0 - exact) / rep.replicas as f64);
        assert!(
            (rep.estimate.to_f64() - exact).abs() < 4.0 * se,
            "mc {} vs exact {exact}",
            rep.estimate.to_f64()
        );
    }
}
