//! Exponential tilting of split laws for rare discrepancy events.
//!
//! The tilt acts on the exact discrete split laws along the dyadic tree
//! rather than on the continuous configuration density, so likelihood
//! ratios are exact and the estimator is unbiased by construction. At a
//! node whose four children carry weights `w_j` (the relative areas of a
//! target disk), child counts are reweighted by `exp(xi * sum_j w_j t_j)`
//! and renormalized; the per-node log-ratio of original to tilted
//! probability is accumulated into the sample. Nodes whose children all
//! carry the same weight are skipped: a constant tilt is the identity
//! measure change.

use crate::energy::Configuration;
use crate::error::{invalid, numeric};
use crate::geom::{relative_area, DiskRegion, DyadicSquare, UnitPoint};
use crate::logreal::LogReal;
use crate::math;
use crate::numeric::log_sum_exp;
use crate::partition::{walk_quantile, PartitionTable, SplitCounts};
use crate::rng::{derive, mix64, replica_key, salt, StreamRng};
use crate::stats::{EstimatorKind, StderrScale, TailReport};
use crate::Result;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// Largest `|xi| * n` product admitted before log-magnitudes threaten the
/// working range of [`LogReal`].
const XI_RANGE_LIMIT: f64 = 5.0e5;

/// Tilt parameters: strength, and the tree depth down to which splits of
/// squares meeting the target disk are tilted.
#[derive(Clone, Copy, Debug)]
pub struct TiltParams {
    pub xi: f64,
    pub depth: u8,
}

impl TiltParams {
    /// Default tilting depth: the level at which the expected count per
    /// square is of constant order, `2^-depth ~ n^-1/2`.
    pub fn natural_depth(n: u32) -> u8 {
        let mut depth = 0u8;
        let target = 1.0 / math::sqrt(n.max(1) as f64);
        while depth < crate::geom::MAX_LEVEL && crate::geom::pow2(-(depth as i32 + 1)) >= target {
            depth += 1;
        }
        depth
    }
}

/// One tilted split law: the law of child counts of a square holding `n`
/// points, reweighted by `exp(xi * sum_j w_j t_j)`.
///
/// Cached suffix convolutions make sequential sampling and exact child
/// means `O(n)` per draw after an `O(n^2)` build.
#[derive(Clone, Debug)]
pub struct TiltedSplitLaw {
    weights: [f64; 4],
    xi: f64,
    /// `log sum_{t3+t4=m} gm3(t3) gm4(t4)` where `gmj(t) = g(t) e^(xi w_j t)`.
    c34: Vec<f64>,
    /// Suffix convolution over children 2..4.
    c234: Vec<f64>,
    /// Full convolution: the tilted partition of the node.
    c1234: Vec<f64>,
}

impl TiltedSplitLaw {
    /// Build the tilted law for node counts up to `n_cap`.
    pub fn new(table: &PartitionTable, n_cap: u32, weights: [f64; 4], xi: f64) -> Result<Self> {
        if !xi.is_finite() {
            return Err(invalid!("tilt strength must be finite"));
        }
        if weights.iter().any(|w| !(-1.0..=1.0).contains(w)) {
            return Err(invalid!("tilt weights must lie in [-1, 1], got {weights:?}"));
        }
        if xi.abs() * (n_cap as f64) > XI_RANGE_LIMIT {
            return Err(numeric!(
                "tilt xi = {xi} with n = {n_cap} exceeds the log-range guard"
            ));
        }
        if n_cap as usize > table.n_max() {
            return Err(invalid!("n_cap {n_cap} exceeds table range {}", table.n_max()));
        }
        let mut law = TiltedSplitLaw {
            weights,
            xi,
            c34: Vec::new(),
            c234: Vec::new(),
            c1234: Vec::new(),
        };
        law.extend_to(table, n_cap);
        Ok(law)
    }

    #[inline]
    fn gm(&self, table: &PartitionTable, child: usize, t: u32) -> f64 {
        table.log_g(t) + self.xi * self.weights[child] * t as f64
    }

    /// Grow the cached convolutions to cover node counts up to `m`.
    ///
    /// Row orders mirror the plain table's convolutions exactly, so at
    /// `xi = 0` every cached value is bit-identical to its untilted
    /// counterpart and likelihood ratios vanish identically.
    pub fn extend_to(&mut self, table: &PartitionTable, m: u32) {
        let mut row = Vec::with_capacity(m as usize + 1);
        for s in self.c34.len() as u32..=m {
            row.clear();
            for t in 0..=s {
                row.push(self.gm(table, 2, t) + self.gm(table, 3, s - t));
            }
            self.c34.push(log_sum_exp(&row));
        }
        for s in self.c234.len() as u32..=m {
            row.clear();
            for t in 0..=s {
                row.push(self.c34[t as usize] + self.gm(table, 1, s - t));
            }
            self.c234.push(log_sum_exp(&row));
        }
        for s in self.c1234.len() as u32..=m {
            row.clear();
            for t in 0..=s {
                row.push(self.c234[t as usize] + self.gm(table, 0, s - t));
            }
            self.c1234.push(log_sum_exp(&row));
        }
    }

    #[inline]
    pub fn capacity(&self) -> u32 {
        self.c1234.len() as u32 - 1
    }

    /// Log-probability of a split of `n` under the tilted law. The
    /// multinomial and exponential prefactors cancel against the
    /// normalization, leaving the modified `g` products.
    pub fn log_prob(&self, table: &PartitionTable, n: u32, t: &SplitCounts) -> Result<f64> {
        if t.total() != n || n > self.capacity() {
            return Err(invalid!("split/capacity mismatch"));
        }
        let mut lp = -self.c1234[n as usize];
        for (j, &part) in t.parts().iter().enumerate() {
            lp += self.gm(table, j, part);
        }
        Ok(lp)
    }

    /// Log of the per-outcome likelihood ratio `dP_plain / dP_tilted`.
    ///
    /// Equals `-xi * sum_j w_j t_j + log phi(xi)` where `phi` is the
    /// moment generating function of the weighted child sum under the
    /// plain split law.
    pub fn log_ratio(&self, table: &PartitionTable, n: u32, t: &SplitCounts) -> f64 {
        let parts = t.parts();
        let weighted: f64 = parts
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * p as f64)
            .sum();
        -self.xi * weighted + self.log_mgf(table, n)
    }

    /// `log E_plain[exp(xi * sum_j w_j t_j)]` for a node holding `n`.
    pub fn log_mgf(&self, table: &PartitionTable, n: u32) -> f64 {
        self.c1234[n as usize] - table.log_g4(n)
    }

    /// Draw one tilted split, returning the counts and the log-ratio.
    pub fn sample(&self, table: &PartitionTable, n: u32, rng: &mut StreamRng) -> (SplitCounts, f64) {
        debug_assert!(n <= self.capacity());
        let t1 = walk_quantile(
            n,
            4,
            |t| self.gm(table, 0, t) + self.c234[(n - t) as usize],
            self.c1234[n as usize],
            rng.next_f64(),
        );
        let r1 = n - t1;
        let t2 = walk_quantile(
            r1,
            3,
            |t| self.gm(table, 1, t) + self.c34[(r1 - t) as usize],
            self.c234[r1 as usize],
            rng.next_f64(),
        );
        let r2 = r1 - t2;
        let t3 = walk_quantile(
            r2,
            2,
            |t| self.gm(table, 2, t) + self.gm(table, 3, r2 - t),
            self.c34[r2 as usize],
            rng.next_f64(),
        );
        let counts = SplitCounts::new([t1, t2, t3, r2 - t3], n).expect("walk stays on support");
        let ratio = self.log_ratio(table, n, &counts);
        (counts, ratio)
    }

    /// Exact mean of the weighted child sum `sum_j w_j t_j` under the
    /// tilted law, for a node holding `n` points. `O(n^2)` work.
    pub fn mean_weighted_sum(&self, table: &PartitionTable, n: u32) -> f64 {
        debug_assert!(n <= self.capacity());
        let norm = self.c1234[n as usize];
        // Child 0 from its marginal against the suffix convolution.
        let mut e0 = 0.0;
        for t in 0..=n {
            e0 += t as f64 * math::exp(self.gm(table, 0, t) + self.c234[(n - t) as usize] - norm);
        }
        // Child 1 from the joint (t0, t1) marginal.
        let mut e1 = 0.0;
        for t0 in 0..=n {
            let base = self.gm(table, 0, t0);
            for t1 in 0..=(n - t0) {
                e1 += t1 as f64
                    * math::exp(
                        base + self.gm(table, 1, t1) + self.c34[(n - t0 - t1) as usize] - norm,
                    );
            }
        }
        // Children 2 and 3 through the law of the residual mass
        // m = t2 + t3: P[m] from the prefix convolution of children 0, 1,
        // and the within-pair mean from the c34 table.
        let mut c01 = Vec::with_capacity(n as usize + 1);
        let mut row = Vec::with_capacity(n as usize + 1);
        for s in 0..=n {
            row.clear();
            for t in 0..=s {
                row.push(self.gm(table, 0, t) + self.gm(table, 1, s - t));
            }
            c01.push(log_sum_exp(&row));
        }
        let mut e2 = 0.0;
        let mut e3 = 0.0;
        for m in 0..=n {
            let log_pm = c01[(n - m) as usize] + self.c34[m as usize] - norm;
            let pm = math::exp(log_pm);
            if pm == 0.0 {
                continue;
            }
            let mut em2 = 0.0;
            for t in 0..=m {
                em2 += t as f64
                    * math::exp(self.gm(table, 2, t) + self.gm(table, 3, m - t) - self.c34[m as usize]);
            }
            e2 += pm * em2;
            e3 += pm * (m as f64 - em2);
        }
        self.weights[0] * e0 + self.weights[1] * e1 + self.weights[2] * e2 + self.weights[3] * e3
    }
}

/// A tilted draw: the realized points and the accumulated log-likelihood
/// ratio of the original law against the sampling law.
#[derive(Clone, Debug)]
pub struct TiltedSample {
    pub configuration: Configuration,
    pub log_likelihood_ratio: f64,
}

/// Sampler for whole configurations with tilted splits at boundary squares
/// of a target disk, down to a fixed depth.
///
/// With `xi = 0` the output is bit-identical to the plain exact sampler.
pub struct TiltedTreeSampler<'a> {
    table: &'a PartitionTable,
    disk: DiskRegion,
    params: TiltParams,
    n: u32,
    /// Tilted nodes: boundary squares of the disk with level < depth.
    /// Nodes with four equal child weights are identity tilts and are not
    /// stored.
    nodes: BTreeMap<DyadicSquare, TiltedSplitLaw>,
    /// Relative disk areas of the level-`depth` squares meeting the disk,
    /// for the weighted count statistic.
    depth_weights: BTreeMap<DyadicSquare, f64>,
}

impl<'a> TiltedTreeSampler<'a> {
    pub fn new(
        table: &'a PartitionTable,
        n: u32,
        disk: DiskRegion,
        params: TiltParams,
    ) -> Result<Self> {
        if n as usize > table.n_max() {
            return Err(invalid!("n = {n} exceeds table range {}", table.n_max()));
        }
        if params.xi.abs() * n as f64 > XI_RANGE_LIMIT {
            return Err(numeric!(
                "tilt xi = {} with n = {n} exceeds the log-range guard",
                params.xi
            ));
        }
        let mut nodes = BTreeMap::new();
        // Boundary squares at levels 0..depth get tilted splits.
        let mut frontier = alloc::vec![DyadicSquare::ROOT];
        for _ in 0..params.depth {
            let mut next = Vec::new();
            for sq in &frontier {
                let weights = child_weights(sq, &disk);
                if weights.iter().any(|&w| (w - weights[0]).abs() > 0.0) {
                    // Start small; capacity grows lazily per replica.
                    nodes.insert(*sq, TiltedSplitLaw::new(table, 0, weights, params.xi)?);
                }
                for child in sq.children() {
                    if crate::geom::classify_square(&child, &disk) == crate::geom::SquareClass::Boundary {
                        next.push(child);
                    }
                }
            }
            frontier = next;
        }
        let mut depth_weights = BTreeMap::new();
        collect_depth_weights(&DyadicSquare::ROOT, &disk, params.depth, &mut depth_weights);
        Ok(TiltedTreeSampler {
            table,
            disk,
            params,
            n,
            nodes,
            depth_weights,
        })
    }

    #[inline]
    pub fn disk(&self) -> &DiskRegion {
        &self.disk
    }

    /// Draw replica `idx`, mirroring the plain sampler's stream schedule.
    pub fn sample_replica(&mut self, base_seed: u64, idx: u64) -> Result<TiltedSample> {
        let seed = replica_key(base_seed, idx);
        let mut points = Vec::with_capacity(self.n as usize);
        let mut log_lr = 0.0;
        if self.n > 0 {
            let root_key = derive(mix64(seed), salt::TREE);
            self.descend(DyadicSquare::ROOT, self.n, root_key, seed, &mut points, &mut log_lr)?;
        }
        let mut perm_rng = StreamRng::new(derive(mix64(seed), salt::PERMUTE));
        perm_rng.shuffle(&mut points);
        Ok(TiltedSample {
            configuration: Configuration::new_unchecked(points),
            log_likelihood_ratio: log_lr,
        })
    }

    fn descend(
        &mut self,
        sq: DyadicSquare,
        count: u32,
        key: u64,
        seed: u64,
        out: &mut Vec<UnitPoint>,
        log_lr: &mut f64,
    ) -> Result<()> {
        if count == 1 {
            out.push(crate::sampler::place_point(seed, &sq));
            return Ok(());
        }
        if sq.level() >= crate::geom::MAX_LEVEL {
            return Err(numeric!("count {count} persists at the depth cap"));
        }
        let mut split_rng = StreamRng::new(derive(key, salt::SPLIT));
        let parts = if let Some(node) = self.nodes.get_mut(&sq) {
            if node.capacity() < count {
                node.extend_to(self.table, count);
            }
            let (counts, ratio) = node.sample(self.table, count, &mut split_rng);
            *log_lr += ratio;
            counts.parts()
        } else {
            self.table.split_law(count)?.sample(&mut split_rng).parts()
        };
        for (idx, child) in sq.children().into_iter().enumerate() {
            let c = parts[idx];
            if c > 0 {
                self.descend(child, c, derive(key, 1 + idx as u64), seed, out, log_lr)?;
            }
        }
        Ok(())
    }

    /// Weighted count statistic `sum_Q p(Q) count(Q)` over the
    /// level-`depth` squares meeting the disk.
    pub fn weighted_count(&self, cfg: &Configuration) -> f64 {
        let mut total = 0.0;
        for p in cfg.points() {
            let sq = crate::geom::enclosing_square(p, self.params.depth);
            if let Some(w) = self.depth_weights.get(&sq) {
                total += w;
            }
        }
        total
    }

    /// Expected weighted count under the plain law: `n * Leb(D)`.
    pub fn expected_weighted_count(&self) -> f64 {
        self.n as f64 * self.disk.area()
    }
}

fn child_weights(sq: &DyadicSquare, disk: &DiskRegion) -> [f64; 4] {
    let children = sq.children();
    [
        relative_area(&children[0], disk),
        relative_area(&children[1], disk),
        relative_area(&children[2], disk),
        relative_area(&children[3], disk),
    ]
}

fn collect_depth_weights(
    sq: &DyadicSquare,
    disk: &DiskRegion,
    depth: u8,
    out: &mut BTreeMap<DyadicSquare, f64>,
) {
    let p = relative_area(sq, disk);
    if p == 0.0 {
        return;
    }
    if sq.level() == depth {
        out.insert(*sq, p);
        return;
    }
    for child in sq.children() {
        collect_depth_weights(&child, disk, depth, out);
    }
}

/// Which side of the discrepancy event to count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailSide {
    /// `Delta >= threshold`.
    Upper,
    /// `Delta <= -threshold`.
    Lower,
    /// `|Delta| >= threshold`.
    Abs,
}

impl TailSide {
    #[inline]
    pub fn hit(&self, delta: f64, threshold: f64) -> bool {
        match self {
            TailSide::Upper => delta >= threshold,
            TailSide::Lower => delta <= -threshold,
            TailSide::Abs => delta.abs() >= threshold,
        }
    }
}

/// Per-replica outcome of a tilted run.
#[derive(Clone, Copy, Debug)]
pub struct TiltedOutcome {
    pub delta: f64,
    pub log_lr: f64,
}

/// Measure one tilted replica: the disk discrepancy and the accumulated
/// log-likelihood ratio.
pub fn measure_tilted_replica(
    sampler: &mut TiltedTreeSampler<'_>,
    base_seed: u64,
    idx: u64,
) -> Result<TiltedOutcome> {
    let sample = sampler.sample_replica(base_seed, idx)?;
    let stat = crate::stats::disk_discrepancy(&sample.configuration, sampler.disk());
    Ok(TiltedOutcome {
        delta: stat.delta,
        log_lr: sample.log_likelihood_ratio,
    })
}

/// Reduce replica-ordered tilted outcomes into a tail report for the
/// event selected by `side`.
///
/// The estimator is the mean of `1{event} * exp(log_lr)`, which is
/// unbiased for the plain-law probability. The standard error is reported
/// on the log scale; the effective sample size is computed from the hit
/// weights, with degeneracy signalled by the caller when it collapses.
pub fn tilted_report_from_outcomes(
    outcomes: &[TiltedOutcome],
    threshold: f64,
    side: TailSide,
    xi: f64,
) -> TailReport {
    let replicas = outcomes.len() as u64;
    let mut hit_logs: Vec<f64> = Vec::new();
    for o in outcomes {
        if side.hit(o.delta, threshold) {
            hit_logs.push(o.log_lr);
        }
    }
    if hit_logs.is_empty() {
        return TailReport {
            estimator: EstimatorKind::Tilted,
            threshold,
            estimate: LogReal::ZERO,
            stderr: 0.0,
            stderr_scale: StderrScale::Log,
            replicas,
            upper_bound: true,
            ess: Some(0.0),
            xi: Some(xi),
        };
    }
    let log_s1 = log_sum_exp(&hit_logs);
    let doubled: Vec<f64> = hit_logs.iter().map(|l| 2.0 * l).collect();
    let log_s2 = log_sum_exp(&doubled);
    let kf = replicas as f64;
    let mean = LogReal::from_ln(log_s1 - math::ln(kf));
    // Sample variance of the weighted indicator via the two power sums.
    let s1 = LogReal::from_ln(log_s1);
    let s2 = LogReal::from_ln(log_s2);
    let var_num = s2 - s1 * s1.div_count(replicas);
    let variance = if var_num.sign() > 0 && replicas > 1 {
        var_num.div_count(replicas - 1)
    } else {
        LogReal::ZERO
    };
    let stderr_log = if variance.is_zero() {
        f64::NEG_INFINITY
    } else {
        0.5 * (variance.ln_abs() - math::ln(kf))
    };
    let ess = math::exp(2.0 * log_s1 - log_s2);
    TailReport {
        estimator: EstimatorKind::Tilted,
        threshold,
        estimate: mean,
        stderr: stderr_log,
        stderr_scale: StderrScale::Log,
        replicas,
        upper_bound: false,
        ess: Some(ess),
        xi: Some(xi),
    }
}

/// Sequential tilted tail estimate for `P[side of Delta(D) at threshold]`.
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
) -> Result<TailReport> {
    if replicas == 0 {
        return Err(invalid!("need at least one replica"));
    }
    let mut sampler = TiltedTreeSampler::new(table, n, disk, TiltParams { xi, depth })?;
    let mut outcomes = Vec::with_capacity(replicas as usize);
    for idx in 0..replicas {
        outcomes.push(measure_tilted_replica(&mut sampler, seed, idx)?);
    }
    Ok(tilted_report_from_outcomes(&outcomes, threshold, side, xi))
}

/// Find `xi` such that the tilted expectation of the weighted count
/// statistic matches `target`, by monotone bisection.
///
/// At depth 1 the expectation is computed exactly from the tilted split
/// law; deeper trees are probed by common-random-number Monte Carlo with
/// `probe_replicas` samples per evaluation.
pub fn tilt_strength_search(
    table: &PartitionTable,
    n: u32,
    disk: DiskRegion,
    target: f64,
    depth: u8,
    probe_replicas: u64,
    probe_seed: u64,
) -> Result<f64> {
    let max_w = if depth == 1 {
        let w = child_weights(&DyadicSquare::ROOT, &disk);
        w.iter().fold(0.0f64, |m, &x| m.max(x))
    } else {
        1.0
    };
    let cap = n as f64 * max_w;
    if target >= cap {
        return Err(invalid!(
            "target mean {target} is unattainable: the maximum attainable mean is {cap}"
        ));
    }
    if target <= 0.0 {
        return Err(invalid!("target mean must be positive, got {target}"));
    }
    let rel_tol = 0.01;
    let eval = |xi: f64| -> Result<f64> {
        if depth == 1 {
            let law = TiltedSplitLaw::new(table, n, child_weights(&DyadicSquare::ROOT, &disk), xi)?;
            Ok(law.mean_weighted_sum(table, n))
        } else {
            let mut sampler =
                TiltedTreeSampler::new(table, n, disk, TiltParams { xi, depth })?;
            let mut total = 0.0;
            for idx in 0..probe_replicas {
                let s = sampler.sample_replica(probe_seed, idx)?;
                total += sampler.weighted_count(&s.configuration);
            }
            Ok(total / probe_replicas as f64)
        }
    };
    let base = eval(0.0)?;
    if (base - target).abs() <= rel_tol * target.abs() {
        return Ok(0.0);
    }
    let upward = target > base;
    // Bracket by doubling.
    let mut lo: f64 = 0.0;
    let mut hi: f64 = if upward { 0.25 } else { -0.25 };
    let mut hi_val = eval(hi)?;
    let mut doublings = 0;
    while (upward && hi_val < target) || (!upward && hi_val > target) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 24 || hi.abs() * n as f64 > XI_RANGE_LIMIT {
            return Err(invalid!(
                "target mean {target} could not be bracketed: tilted mean saturates at {hi_val}"
            ));
        }
        hi_val = eval(hi)?;
    }
    // Bisection.
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        if (v - target).abs() <= rel_tol * target.abs() {
            return Ok(mid);
        }
        if (v < target) == upward {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() < 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of the independent-sign demonstration of the change-of-measure
/// lower bound.
#[derive(Clone, Copy, Debug)]
pub struct RademacherReport {
    pub n_vars: u64,
    pub gamma: f64,
    pub xi: f64,
    pub threshold: f64,
    /// Exact `P[S_N >= N^gamma]` from the binomial tail.
    pub exact: LogReal,
    pub tilted_estimate: LogReal,
    /// Linear-scale standard error of the tilted estimate.
    pub tilted_stderr: f64,
    /// The lower-bound envelope `exp(-N^(2 gamma - 1 + eps))`.
    pub envelope: LogReal,
    pub replicas: u64,
}

/// Estimate `P[S_N >= N^gamma]` for iid signs by exponential tilting with
/// strength `xi = N^(gamma - 1 + eta)`, and compare with the exact
/// binomial tail and the moderate-deviation envelope at exponent margin
/// `eps`.
pub fn rademacher_demo(
    n_vars: u64,
    gamma: f64,
    eta: f64,
    eps: f64,
    replicas: u64,
    seed: u64,
) -> Result<RademacherReport> {
    if !(0.5 < gamma && gamma < 1.0) {
        return Err(invalid!("gamma must lie in (1/2, 1), got {gamma}"));
    }
    if n_vars < 16 {
        return Err(invalid!("need at least 16 variables"));
    }
    if eta <= 0.0 || eta >= 1.0 - gamma {
        return Err(invalid!("eta must lie in (0, 1 - gamma), got {eta}"));
    }
    let nf = n_vars as f64;
    let threshold = math::powf(nf, gamma);
    let xi = math::powf(nf, gamma - 1.0 + eta);
    // Exact tail: S = 2K - N with K ~ Binomial(N, 1/2).
    let k_min = math::ceil((nf + threshold) / 2.0) as u64;
    let exact = binomial_upper_tail_half(n_vars, k_min);
    // Tilted sampling: P[x = +1] = e^xi / (e^xi + e^-xi).
    let p_plus = 1.0 / (1.0 + math::exp(-2.0 * xi));
    let log_phi = math::ln(math::cosh(xi));
    let mut rng = StreamRng::new(derive(mix64(seed), salt::REPLICA));
    let mut weights = Vec::with_capacity(replicas as usize);
    for _ in 0..replicas {
        let mut s: i64 = 0;
        for _ in 0..n_vars {
            s += if rng.next_f64() < p_plus { 1 } else { -1 };
        }
        if s as f64 >= threshold {
            weights.push(-xi * s as f64 + nf * log_phi);
        }
    }
    let (estimate, stderr) = if weights.is_empty() {
        (LogReal::ZERO, 0.0)
    } else {
        let log_s1 = log_sum_exp(&weights);
        let doubled: Vec<f64> = weights.iter().map(|l| 2.0 * l).collect();
        let log_s2 = log_sum_exp(&doubled);
        let kf = replicas as f64;
        let mean = math::exp(log_s1 - math::ln(kf));
        let second = math::exp(log_s2 - math::ln(kf));
        let var = (second - mean * mean).max(0.0) * kf / (kf - 1.0);
        (LogReal::from_f64(mean), math::sqrt(var / kf))
    };
    let envelope = LogReal::from_ln(-math::powf(nf, 2.0 * gamma - 1.0 + eps));
    Ok(RademacherReport {
        n_vars,
        gamma,
        xi,
        threshold,
        exact,
        tilted_estimate: estimate,
        tilted_stderr: stderr,
        envelope,
        replicas,
    })
}

/// `log P[K >= k_min]` for `K ~ Binomial(n, 1/2)`, by direct summation.
pub fn binomial_upper_tail_half(n: u64, k_min: u64) -> LogReal {
    if k_min > n {
        return LogReal::ZERO;
    }
    let ln_half = -core::f64::consts::LN_2;
    let mut acc = crate::numeric::LogSumAcc::new();
    for k in k_min..=n {
        acc.push(crate::numeric::ln_binomial(n, k) + n as f64 * ln_half);
    }
    LogReal::from_ln(acc.total())
}

/// Centered log-MGF of the weighted child sum under the plain split law:
/// `log E[exp(xi (T - E[T]))]` for the top-level split of `n` points.
pub fn centered_top_level_log_mgf(
    table: &PartitionTable,
    n: u32,
    weights: [f64; 4],
    xi: f64,
) -> Result<f64> {
    let law = TiltedSplitLaw::new(table, n, weights, xi)?;
    let plain = TiltedSplitLaw::new(table, n, weights, 0.0)?;
    let mean = plain.mean_weighted_sum(table, n);
    Ok(law.log_mgf(table, n) - xi * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Beta;
    use crate::geom::UnitPoint;
    use crate::partition::for_each_composition;

    fn pt(x: f64, y: f64) -> UnitPoint {
        UnitPoint::new(x, y).unwrap()
    }

    fn table(beta: f64, n_max: usize) -> PartitionTable {
        PartitionTable::build(Beta::new(beta).unwrap(), n_max).unwrap()
    }

    #[test]
    fn zero_tilt_is_identity() {
        let t = table(1.0, 16);
        let law = TiltedSplitLaw::new(&t, 9, [0.9, 0.1, 0.4, 0.0], 0.0).unwrap();
        for_each_composition(9, |c| {
            let tilted = law.log_prob(&t, 9, &c).unwrap();
            let plain = t.log_split_prob(9, &c).unwrap().ln();
            assert!((tilted - plain).abs() < 1e-10, "{tilted} vs {plain}");
            assert!(law.log_ratio(&t, 9, &c).abs() < 1e-10);
        });
    }

    #[test]
    fn tilted_law_normalizes() {
        let t = table(1.0, 12);
        let law = TiltedSplitLaw::new(&t, 12, [0.8, 0.2, 0.05, 0.0], 0.7).unwrap();
        let mut logs = Vec::new();
        for_each_composition(12, |c| {
            logs.push(law.log_prob(&t, 12, &c).unwrap());
        });
        let total = log_sum_exp(&logs);
        assert!(total.abs() < 1e-10, "tilted mass {}", math::exp(total));
    }

    #[test]
    fn tilted_mean_is_strictly_increasing() {
        let t = table(1.0, 8);
        let weights = [0.9, 0.3, 0.1, 0.0];
        let mut last = f64::NEG_INFINITY;
        for i in 0..6 {
            let xi = -1.0 + i as f64 * 0.4;
            let law = TiltedSplitLaw::new(&t, 8, weights, xi).unwrap();
            let mean = law.mean_weighted_sum(&t, 8);
            assert!(mean > last, "mean not increasing at xi = {xi}");
            last = mean;
        }
    }

    #[test]
    fn tilted_mean_matches_enumeration() {
        let t = table(1.0, 8);
        let weights = [0.7, 0.2, 0.1, 0.0];
        let xi = 0.9;
        let law = TiltedSplitLaw::new(&t, 8, weights, xi).unwrap();
        let mut norm = Vec::new();
        let mut weighted = Vec::new();
        for_each_composition(8, |c| {
            let lp = t.log_split_prob(8, &c).unwrap().ln()
                + xi * c
                    .parts()
                    .iter()
                    .zip(&weights)
                    .map(|(&p, &w)| w * p as f64)
                    .sum::<f64>();
            norm.push(lp);
            let wsum: f64 = c
                .parts()
                .iter()
                .zip(&weights)
                .map(|(&p, &w)| w * p as f64)
                .sum();
            weighted.push((lp, wsum));
        });
        let log_norm = log_sum_exp(&norm);
        let mean: f64 = weighted
            .iter()
            .map(|(lp, v)| v * math::exp(lp - log_norm))
            .sum();
        assert!(
            (law.mean_weighted_sum(&t, 8) - mean).abs() < 1e-9,
            "{} vs {mean}",
            law.mean_weighted_sum(&t, 8)
        );
    }

    #[test]
    fn sampled_tilted_splits_match_law() {
        let t = table(1.0, 8);
        let weights = [0.85, 0.15, 0.0, 0.35];
        let xi = 0.8;
        let law = TiltedSplitLaw::new(&t, 6, weights, xi).unwrap();
        let mut cells: Vec<(SplitCounts, f64)> = Vec::new();
        for_each_composition(6, |c| {
            cells.push((c, math::exp(law.log_prob(&t, 6, &c).unwrap())));
        });
        let k = 100_000usize;
        let mut rng = StreamRng::new(4242);
        let mut observed = alloc::vec![0.0f64; cells.len()];
        for _ in 0..k {
            let (c, _) = law.sample(&t, 6, &mut rng);
            let pos = cells.iter().position(|(x, _)| x.parts() == c.parts()).unwrap();
            observed[pos] += 1.0;
        }
        let expected: Vec<f64> = cells.iter().map(|(_, p)| p * k as f64).collect();
        let (_, _, p_value) = crate::numeric::chi_square_gof(&observed, &expected, 5.0);
        assert!(p_value > 1e-3, "tilted sampling rejected: p = {p_value}");
    }

    #[test]
    fn zero_xi_sampler_matches_plain_sampler() {
        let t = table(1.0, 32);
        let disk = DiskRegion::new(pt(0.4, 0.55), 0.2).unwrap();
        let mut sampler = TiltedTreeSampler::new(
            &t,
            24,
            disk,
            TiltParams { xi: 0.0, depth: 3 },
        )
        .unwrap();
        for idx in 0..5u64 {
            let tilted = sampler.sample_replica(77, idx).unwrap();
            let plain = crate::sampler::sample_replica_points(&t, 24, 77, idx).unwrap();
            assert_eq!(tilted.configuration.points(), plain.as_slice());
            assert_eq!(tilted.log_likelihood_ratio, 0.0);
        }
    }

    #[test]
    fn search_finds_mean_matching_tilt() {
        // Quadrant-covering disk at depth 1: request a mean of 8 of 16
        // points in the disk's quadrant region.
        let t = table(1.0, 16);
        let disk = DiskRegion::new(pt(0.25, 0.25), 0.24).unwrap();
        let xi = tilt_strength_search(&t, 16, disk, 8.0 * relative_area(&DyadicSquare::new(1, 0, 0).unwrap(), &disk), 1, 0, 0).unwrap();
        let law = TiltedSplitLaw::new(&t, 16, child_weights(&DyadicSquare::ROOT, &disk), xi).unwrap();
        let target = 8.0 * relative_area(&DyadicSquare::new(1, 0, 0).unwrap(), &disk);
        let mean = law.mean_weighted_sum(&t, 16);
        assert!((mean - target).abs() <= 0.01 * target + 1e-12, "mean {mean} vs {target}");
    }

    #[test]
    fn search_rejects_unattainable_targets() {
        let t = table(1.0, 8);
        let disk = DiskRegion::new(pt(0.25, 0.25), 0.2).unwrap();
        assert!(tilt_strength_search(&t, 8, disk, 8.1, 1, 0, 0).is_err());
    }

    #[test]
    fn search_returns_zero_at_baseline() {
        let t = table(1.0, 16);
        let disk = DiskRegion::new(pt(0.3, 0.3), 0.2).unwrap();
        let base = 16.0 * disk.area();
        let xi = tilt_strength_search(&t, 16, disk, base, 1, 0, 0).unwrap();
        assert_eq!(xi, 0.0);
    }

    #[test]
    fn rademacher_against_exact_binomial() {
        let rep = rademacher_demo(100, 0.75, 0.1, 0.2, 100_000, 5).unwrap();
        let exact = rep.exact.to_f64();
        let est = rep.tilted_estimate.to_f64();
        assert!(
            (est - exact).abs() < 4.0 * rep.tilted_stderr,
            "tilted {est} vs exact {exact} (se {})",
            rep.tilted_stderr
        );
        assert!(rep.exact > rep.envelope, "envelope violated");
    }

    #[test]
    fn rademacher_envelope_across_sizes() {
        for n in [64u64, 128, 256] {
            let rep = rademacher_demo(n, 0.75, 0.1, 0.2, 16, 1).unwrap();
            assert!(
                rep.exact > rep.envelope,
                "N = {n}: exact {} below envelope {}",
                rep.exact.ln_abs(),
                rep.envelope.ln_abs()
            );
        }
    }

    #[test]
    fn binomial_tail_oracle_sanity() {
        // P[K >= 2] for 3 fair flips = 1/2.
        let t = binomial_upper_tail_half(3, 2);
        assert!((t.to_f64() - 0.5).abs() < 1e-12);
        assert!(binomial_upper_tail_half(4, 5).is_zero());
    }

    #[test]
    fn mgf_expansion_is_quadratic_near_zero() {
        // |log E[exp(xi (T - ET))] - xi^2 Var(T)/2| <= K xi^3.
        let t = table(1.0, 16);
        let weights = [0.6, 0.4, 0.2, 0.1];
        let plain = TiltedSplitLaw::new(&t, 16, weights, 0.0).unwrap();
        let mean = plain.mean_weighted_sum(&t, 16);
        // Exact variance by enumeration.
        let mut var = 0.0;
        for_each_composition(16, |c| {
            let w: f64 = c
                .parts()
                .iter()
                .zip(&weights)
                .map(|(&p, &wj)| wj * p as f64)
                .sum();
            var += math::exp(t.log_split_prob(16, &c).unwrap().ln()) * (w - mean) * (w - mean);
        });
        let mut fitted_k: f64 = 0.0;
        for i in 0..7 {
            let xi = 1e-3 * math::powf(10.0, i as f64 / 3.0); // up to 1e-1
            let lhs = centered_top_level_log_mgf(&t, 16, weights, xi).unwrap();
            let resid = (lhs - 0.5 * xi * xi * var).abs();
            fitted_k = fitted_k.max(resid / (xi * xi * xi));
        }
        assert!(fitted_k < 100.0, "cubic envelope constant blew up: {fitted_k}");
    }

    #[test]
    fn ess_decreases_with_tilt_strength() {
        // Enumerated second moments: ESS_inf = (E[LR])^2 / E[LR^2] under
        // the tilted law, which is 1 / E_plain[e^(xi T)] * ... monotone
        // decreasing in |xi| for centered statistics; check numerically.
        let t = table(1.0, 8);
        let weights = [0.9, 0.2, 0.1, 0.0];
        let mut last = f64::INFINITY;
        for i in 0..5 {
            let xi = 0.3 * i as f64;
            let law = TiltedSplitLaw::new(&t, 8, weights, xi).unwrap();
            // E_tilt[LR] = 1 (unbiasedness with indicator = 1);
            // E_tilt[LR^2] = E_plain[LR], both by enumeration.
            let mut e_lr = 0.0;
            for_each_composition(8, |c| {
                let p_plain = math::exp(t.log_split_prob(8, &c).unwrap().ln());
                let lr = math::exp(law.log_ratio(&t, 8, &c));
                e_lr += p_plain * lr;
            });
            let ess_frac = 1.0 / e_lr;
            assert!(ess_frac <= last + 1e-12, "ESS fraction rose at xi = {xi}");
            last = ess_frac;
        }
    }
}
