//! Exact log-space computation of the partition function and the split law
//! of child counts, by dynamic programming over the quadtree.
//!
//! # The recursion
//!
//! Conditioning the gas on how its `n` points distribute over the four
//! level-1 quadrants, every pair contributes one energy unit from the root
//! square, and each quadrant holding `t_j` points carries an independent
//! scaled copy of the `t_j`-point gas over a square of area `1/4`. The
//! normalizing constant therefore satisfies
//!
//! ```text
//! Z(n) = e^(-beta*C(n,2)) * 4^(-n) *
//!        sum_{t1+t2+t3+t4=n} n!/(t1! t2! t3! t4!) * Z(t1) Z(t2) Z(t3) Z(t4)
//! ```
//!
//! with `Z(0) = Z(1) = 1`. The right-hand side contains `Z(n)` itself
//! through the four compositions where one part equals `n`; solving for
//! `Z(n)` leaves a sum over compositions with all parts below `n`, which
//! only involves already-computed values.
//!
//! Writing `g(t) = Z(t)/t!`, the composition sum is the 4-fold convolution
//! `(g*g*g*g)(n)`, so the whole table costs `O(n_max^2)` log-sum-exp
//! operations instead of enumerating all `O(n_max^4)` compositions. The
//! normalization invariant re-verified forward by the test suite (summing
//! the unnormalized split weights over every composition) is the same sum
//! in its unfactored form.
//!
//! The same `g`-convolutions give the split law in sequential form: the
//! first child count has log-mass `g(t) + G3(n-t)` where `G3 = g*g*g`, and
//! the conditionals of the remaining children use `G2 = g*g` and `g`. The
//! cached `G2/G3/G4` arrays are exactly the partial log-sum-exp
//! accumulations needed so that the full joint over compositions is never
//! materialized unless explicitly enumerated.

use crate::energy::Beta;
use crate::error::{invalid, resource};
use crate::logreal::LogReal;
use crate::math;
use crate::numeric::{log_add_exp, log_sum_exp, pairs, LN_4};
use crate::rng::StreamRng;
use crate::Result;
use alloc::vec;
use alloc::vec::Vec;

/// Hard ceiling on table size, guarding accidental huge builds.
pub const DEFAULT_N_CEILING: usize = 8192;

/// Ceiling for exact moment-generating-function enumerations, which cost
/// `O(n^3)` terms.
pub const DEFAULT_MGF_CEILING: u32 = 128;

/// Four child counts summing to the parent count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitCounts {
    parts: [u32; 4],
}

impl SplitCounts {
    pub fn new(parts: [u32; 4], n: u32) -> Result<Self> {
        let sum: u64 = parts.iter().map(|&t| t as u64).sum();
        if sum != n as u64 {
            return Err(invalid!("split {parts:?} does not sum to {n}"));
        }
        Ok(SplitCounts { parts })
    }

    #[inline]
    pub fn parts(&self) -> [u32; 4] {
        self.parts
    }

    #[inline]
    pub fn total(&self) -> u32 {
        self.parts.iter().sum()
    }

    /// Discrepancy view: `k_j = t_j - n/4`, summing to zero.
    pub fn discrepancies(&self) -> [f64; 4] {
        let q = self.total() as f64 / 4.0;
        [
            self.parts[0] as f64 - q,
            self.parts[1] as f64 - q,
            self.parts[2] as f64 - q,
            self.parts[3] as f64 - q,
        ]
    }
}

/// Visit every composition of `n` into four ordered nonnegative parts in
/// lexicographic order of `(t1, t2, t3)`.
pub fn for_each_composition<F: FnMut(SplitCounts)>(n: u32, mut f: F) {
    for t1 in 0..=n {
        for t2 in 0..=(n - t1) {
            for t3 in 0..=(n - t1 - t2) {
                let t4 = n - t1 - t2 - t3;
                f(SplitCounts {
                    parts: [t1, t2, t3, t4],
                });
            }
        }
    }
}

/// Number of compositions of `n` into four ordered parts: `C(n+3, 3)`.
pub fn composition_count(n: u32) -> u64 {
    let n = n as u64;
    (n + 1) * (n + 2) * (n + 3) / 6
}

/// Exact log-space table of partition values and split-law convolutions
/// for one inverse temperature.
///
/// Immutable once built; safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTable {
    beta: Beta,
    n_max: usize,
    /// `log Z(n)`.
    log_z: Vec<f64>,
    /// `log g(n) = log Z(n) - ln n!`.
    log_g: Vec<f64>,
    /// `log (g*g)(n)`.
    log_g2: Vec<f64>,
    /// `log (g*g*g)(n)`.
    log_g3: Vec<f64>,
    /// `log (g*g*g*g)(n)`.
    log_g4: Vec<f64>,
    /// `ln n!`.
    log_fact: Vec<f64>,
}

impl PartitionTable {
    /// Build the exact table for `n = 0..=n_max` under the default size
    /// ceiling. Cost is `O(n_max^2)` log-sum-exp operations.
    pub fn build(beta: Beta, n_max: usize) -> Result<Self> {
        Self::build_with_ceiling(beta, n_max, DEFAULT_N_CEILING)
    }

    /// Build with an explicit resource ceiling.
    pub fn build_with_ceiling(beta: Beta, n_max: usize, ceiling: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(invalid!("table needs n_max >= 2, got {n_max}"));
        }
        if n_max > ceiling {
            return Err(resource!(
                "n_max {n_max} exceeds the configured ceiling {ceiling}; \
                 raise the ceiling explicitly if this size is intended"
            ));
        }
        let b = beta.value();
        let log_fact: Vec<f64> = (0..=n_max as u64).map(crate::numeric::ln_factorial).collect();
        let mut log_z = vec![0.0; n_max + 1];
        let mut g = vec![0.0; n_max + 1];
        g[0] = 0.0;
        g[1] = -log_fact[1]; // = 0
        // Incremental two-fold convolution used only during the solve.
        let mut g2 = vec![f64::NEG_INFINITY; n_max + 1];
        g2[0] = g[0] + g[0];
        g2[1] = log_add_exp(g[0] + g[1], g[1] + g[0]);
        let mut row = Vec::with_capacity(n_max + 1);
        for n in 2..=n_max {
            // Convolution of g with itself at n, restricted to parts < n.
            row.clear();
            for a in 1..n {
                row.push(g[a] + g[n - a]);
            }
            let g2_inner = log_sum_exp(&row);
            // Four-fold convolution at n restricted to all parts < n:
            // pair up halves, using the restricted value when a half is n.
            row.clear();
            for a in 0..=n {
                let left = if a == n { g2_inner } else { g2[a] };
                let right = if a == 0 { g2_inner } else { g2[n - a] };
                row.push(left + right);
            }
            let inner4 = log_sum_exp(&row);
            let ln_pairs_term = b * pairs(n as u64);
            // Solve Z(n)*(1 - e^(-beta*C(n,2)) * 4^(1-n)) = prefactor * inner sum.
            let self_weight = -ln_pairs_term + (1.0 - n as f64) * LN_4;
            let correction = math::ln_1p(-math::exp(self_weight));
            log_z[n] = -ln_pairs_term - n as f64 * LN_4 + log_fact[n] + inner4 - correction;
            g[n] = log_z[n] - log_fact[n];
            g2[n] = log_add_exp(g2_inner, math::ln(2.0) + g[n] + g[0]);
        }
        // Published convolutions are rebuilt canonically from the final g,
        // so a table loaded from cached log Z values is bit-identical to a
        // freshly built one.
        let log_g2 = convolve(&g, &g);
        let log_g3 = convolve(&log_g2, &g);
        let log_g4 = convolve(&log_g3, &g);
        Ok(PartitionTable {
            beta,
            n_max,
            log_z,
            log_g: g,
            log_g2,
            log_g3,
            log_g4,
            log_fact,
        })
    }

    /// Reassemble a table from stored `log Z` values (e.g. a cache file).
    ///
    /// Produces exactly the same table as a fresh build with the same
    /// parameters, since all derived arrays are deterministic functions of
    /// `log Z`.
    pub fn from_log_z(beta: Beta, log_z: Vec<f64>) -> Result<Self> {
        if log_z.len() < 3 {
            return Err(invalid!("log Z table needs at least 3 entries"));
        }
        let n_max = log_z.len() - 1;
        let log_fact: Vec<f64> = (0..=n_max as u64).map(crate::numeric::ln_factorial).collect();
        let g: Vec<f64> = log_z
            .iter()
            .zip(&log_fact)
            .map(|(&z, &lf)| z - lf)
            .collect();
        let log_g2 = convolve(&g, &g);
        let log_g3 = convolve(&log_g2, &g);
        let log_g4 = convolve(&log_g3, &g);
        Ok(PartitionTable {
            beta,
            n_max,
            log_z,
            log_g: g,
            log_g2,
            log_g3,
            log_g4,
            log_fact,
        })
    }

    #[inline]
    pub fn beta(&self) -> Beta {
        self.beta
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `log Z(n)`.
    #[inline]
    pub fn log_z(&self, n: u32) -> f64 {
        self.log_z[n as usize]
    }

    pub fn log_z_slice(&self) -> &[f64] {
        &self.log_z
    }

    /// `Z(n)` as a log-space value.
    pub fn z(&self, n: u32) -> LogReal {
        LogReal::from_ln(self.log_z[n as usize])
    }

    #[inline]
    pub(crate) fn log_g(&self, t: u32) -> f64 {
        self.log_g[t as usize]
    }

    #[inline]
    pub(crate) fn log_g2(&self, t: u32) -> f64 {
        self.log_g2[t as usize]
    }

    #[inline]
    pub(crate) fn log_g3(&self, t: u32) -> f64 {
        self.log_g3[t as usize]
    }

    #[inline]
    pub(crate) fn log_g4(&self, t: u32) -> f64 {
        self.log_g4[t as usize]
    }

    #[inline]
    pub fn ln_factorial(&self, n: u32) -> f64 {
        self.log_fact[n as usize]
    }

    fn check_range(&self, n: u32) -> Result<()> {
        if n as usize > self.n_max {
            return Err(invalid!(
                "count {n} exceeds table range n_max = {}",
                self.n_max
            ));
        }
        Ok(())
    }

    /// Log-probability that a square holding `n` points splits its count
    /// as `t` over its four children:
    ///
    /// `4^(-n) e^(-beta*C(n,2)) * n!/(t1!..t4!) * prod Z(t_j) / Z(n)`.
    pub fn log_split_prob(&self, n: u32, t: &SplitCounts) -> Result<LogReal> {
        self.check_range(n)?;
        if t.total() != n {
            return Err(invalid!("split does not sum to {n}"));
        }
        let mut lp = -(n as f64) * LN_4 - self.beta.value() * pairs(n as u64)
            + self.log_fact[n as usize]
            - self.log_z[n as usize];
        for &part in &t.parts {
            lp += self.log_z[part as usize] - self.log_fact[part as usize];
        }
        Ok(LogReal::from_ln(lp))
    }

    /// The exact split law for a square holding `n` points.
    pub fn split_law(&self, n: u32) -> Result<SplitLaw<'_>> {
        self.check_range(n)?;
        Ok(SplitLaw { table: self, n })
    }

    /// Log-pmf of the count of one fixed child given its parent holds `m`
    /// points (all four children share this marginal by symmetry).
    pub fn child_count_log_pmf(&self, m: u32, t: u32) -> Result<f64> {
        self.check_range(m)?;
        if t > m {
            return Err(invalid!("child count {t} exceeds parent count {m}"));
        }
        Ok(self.log_g(t) + self.log_g3(m - t) - self.log_g4(m))
    }

    /// Probability of the top-level discrepancy vector `k` (with
    /// `sum k_j = 0`); each `n/4 + k_j` must be a nonnegative integer.
    pub fn top_level_discrepancy_prob(&self, n: u32, k: [f64; 4]) -> Result<LogReal> {
        self.check_range(n)?;
        let q = n as f64 / 4.0;
        let mut parts = [0u32; 4];
        for (j, &kj) in k.iter().enumerate() {
            let t = q + kj;
            let rounded = math::round(t);
            if t < -1e-9 || (t - rounded).abs() > 1e-9 {
                return Err(invalid!(
                    "k = {k:?} is outside the support: n/4 + k_{j} = {t} is not a nonnegative integer"
                ));
            }
            parts[j] = rounded as u32;
        }
        let t = SplitCounts::new(parts, n)
            .map_err(|_| invalid!("k = {k:?} does not sum to zero for n = {n}"))?;
        self.log_split_prob(n, &t)
    }

    /// Exact `E[exp(sum_j lambda_j X_j)]` where `X_j = t_j - n/4`, by full
    /// enumeration over the split-law support (`O(n^3)` terms).
    pub fn exact_mgf_linear(&self, n: u32, lambda: [f64; 4]) -> Result<LogReal> {
        self.mgf_enumerate(n, |k| {
            lambda[0] * k[0] + lambda[1] * k[1] + lambda[2] * k[2] + lambda[3] * k[3]
        })
    }

    /// Exact `E[exp(sum_j s_j X_j^2)]`, under the hypothesis
    /// `||s|| < beta/2`.
    pub fn exact_mgf_quadratic(&self, n: u32, s: [f64; 4]) -> Result<LogReal> {
        let norm = math::sqrt(s.iter().map(|v| v * v).sum());
        if norm >= self.beta.value() / 2.0 {
            return Err(invalid!(
                "quadratic tilt ||s|| = {norm} violates the hypothesis ||s|| < beta/2 = {}",
                self.beta.value() / 2.0
            ));
        }
        self.mgf_enumerate(n, |k| {
            s[0] * k[0] * k[0] + s[1] * k[1] * k[1] + s[2] * k[2] * k[2] + s[3] * k[3] * k[3]
        })
    }

    fn mgf_enumerate<F: Fn([f64; 4]) -> f64>(&self, n: u32, exponent: F) -> Result<LogReal> {
        self.check_range(n)?;
        if n > DEFAULT_MGF_CEILING {
            return Err(resource!(
                "exact MGF enumeration is O(n^3); n = {n} exceeds the ceiling {DEFAULT_MGF_CEILING}"
            ));
        }
        let base = -(n as f64) * LN_4 - self.beta.value() * pairs(n as u64)
            + self.log_fact[n as usize]
            - self.log_z[n as usize];
        let mut acc = crate::numeric::LogSumAcc::new();
        for_each_composition(n, |t| {
            let mut lp = base;
            for &part in &t.parts {
                lp += self.log_z[part as usize] - self.log_fact[part as usize];
            }
            acc.push(lp + exponent(t.discrepancies()));
        });
        Ok(LogReal::from_ln(acc.total()))
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(n);
    for m in 0..n {
        row.clear();
        for i in 0..=m {
            row.push(a[i] + b[m - i]);
        }
        out.push(log_sum_exp(&row));
    }
    out
}

/// The split law of one square: log-probabilities of child-count vectors
/// and a sequential sampler drawing `t1`, then `t2 | t1`, then
/// `t3 | t1, t2` from the cached convolution tables.
#[derive(Clone, Copy, Debug)]
pub struct SplitLaw<'a> {
    table: &'a PartitionTable,
    n: u32,
}

impl<'a> SplitLaw<'a> {
    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn log_prob(&self, t: &SplitCounts) -> Result<LogReal> {
        self.table.log_split_prob(self.n, t)
    }

    /// Draw one split, consuming three uniforms from the stream.
    pub fn sample(&self, rng: &mut StreamRng) -> SplitCounts {
        let tab = self.table;
        let r0 = self.n;
        let t1 = walk_quantile(
            r0,
            4,
            |t| tab.log_g(t) + tab.log_g3(r0 - t),
            tab.log_g4(r0),
            rng.next_f64(),
        );
        let r1 = r0 - t1;
        let t2 = walk_quantile(
            r1,
            3,
            |t| tab.log_g(t) + tab.log_g2(r1 - t),
            tab.log_g3(r1),
            rng.next_f64(),
        );
        let r2 = r1 - t2;
        let t3 = walk_quantile(
            r2,
            2,
            |t| tab.log_g(t) + tab.log_g(r2 - t),
            tab.log_g2(r2),
            rng.next_f64(),
        );
        SplitCounts {
            parts: [t1, t2, t3, r2 - t3],
        }
    }
}

/// Inverse-CDF draw over `t in [0, r]` with log-mass `logw(t) - log_norm`,
/// walking outward from the distribution mode near `r / parts_left` so the
/// expected number of visited support points is `O(sqrt r)`.
///
/// The enumeration order is fixed, so the draw is a deterministic function
/// of `u`. If accumulated mass never reaches `u` (the total is below one
/// by a rounding margin), the heaviest visited point is returned.
pub(crate) fn walk_quantile<F: Fn(u32) -> f64>(r: u32, parts_left: u32, logw: F, log_norm: f64, u: f64) -> u32 {
    if r == 0 {
        return 0;
    }
    let center = (r / parts_left).min(r);
    let mut cum = 0.0;
    let mut best_t = center;
    let mut best_p = f64::NEG_INFINITY;
    let mut offset = 0u32;
    loop {
        let mut visit = |t: u32| -> Option<u32> {
            let lp = logw(t) - log_norm;
            if lp > best_p {
                best_p = lp;
                best_t = t;
            }
            cum += math::exp(lp);
            (cum >= u).then_some(t)
        };
        if offset == 0 {
            if let Some(t) = visit(center) {
                return t;
            }
        } else {
            let up = center as u64 + offset as u64;
            if up <= r as u64 {
                if let Some(t) = visit(up as u32) {
                    return t;
                }
            }
            if center >= offset {
                if let Some(t) = visit(center - offset) {
                    return t;
                }
            }
            if up > r as u64 && center < offset {
                break;
            }
        }
        offset += 1;
    }
    best_t
}
