//! Exhaustive enumeration oracles for test suites.
//!
//! Everything here recomputes probabilities by brute force over the full
//! discrete support, independently of the sampling paths it is used to
//! check. The module is compiled only for tests and for consumers that
//! opt into the `exhaustive` feature.

use crate::math;
use crate::numeric::LogSumAcc;
use crate::partition::{for_each_composition, PartitionTable, SplitCounts};
use crate::tilt::TiltedSplitLaw;
use crate::Result;
use alloc::vec::Vec;

/// The split record of a two-level tree: the root split, and one split
/// per level-1 square holding at least two points (squares with fewer
/// points are never split by the sampler).
#[derive(Clone, Debug)]
pub struct DepthTwoRecord {
    pub level1: SplitCounts,
    /// `level2[j]` is present iff `level1.parts()[j] >= 2`.
    pub level2: [Option<SplitCounts>; 4],
}

impl DepthTwoRecord {
    /// Weighted sum over the record: level-1 counts against `w1`, and the
    /// level-2 counts of split nodes against `w2[j]`.
    pub fn weighted_sum(&self, w1: &[f64; 4], w2: &[[f64; 4]; 4]) -> f64 {
        let mut total = 0.0;
        for (j, &t) in self.level1.parts().iter().enumerate() {
            total += w1[j] * t as f64;
        }
        for (j, split) in self.level2.iter().enumerate() {
            if let Some(s) = split {
                for (i, &t) in s.parts().iter().enumerate() {
                    total += w2[j][i] * t as f64;
                }
            }
        }
        total
    }
}

/// Visit every depth-two split record of an `n`-point tree with its plain
/// log-probability.
pub fn for_each_depth_two_record<F: FnMut(&DepthTwoRecord, f64)>(
    table: &PartitionTable,
    n: u32,
    mut f: F,
) -> Result<()> {
    let mut err = None;
    for_each_composition(n, |level1| {
        if err.is_some() {
            return;
        }
        let lp1 = match table.log_split_prob(n, &level1) {
            Ok(p) => p.ln(),
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        // Enumerate the product of level-2 splits for parts >= 2.
        let parts = level1.parts();
        let mut splits: [Vec<(SplitCounts, f64)>; 4] =
            [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for j in 0..4 {
            if parts[j] >= 2 {
                for_each_composition(parts[j], |s| {
                    let lp = table
                        .log_split_prob(parts[j], &s)
                        .expect("in-range split")
                        .ln();
                    splits[j].push((s, lp));
                });
            }
        }
        let idx_bound = |j: usize| -> usize { splits[j].len().max(1) };
        for a in 0..idx_bound(0) {
            for b in 0..idx_bound(1) {
                for c in 0..idx_bound(2) {
                    for d in 0..idx_bound(3) {
                        let pick = |j: usize, i: usize| -> (Option<SplitCounts>, f64) {
                            if splits[j].is_empty() {
                                (None, 0.0)
                            } else {
                                let (s, lp) = splits[j][i];
                                (Some(s), lp)
                            }
                        };
                        let (s0, l0) = pick(0, a);
                        let (s1, l1) = pick(1, b);
                        let (s2, l2) = pick(2, c);
                        let (s3, l3) = pick(3, d);
                        let record = DepthTwoRecord {
                            level1,
                            level2: [s0, s1, s2, s3],
                        };
                        f(&record, lp1 + l0 + l1 + l2 + l3);
                    }
                }
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// A tilted depth-two measure: the root split tilted by `(w1, xi)`, and
/// the level-2 split under quadrant `j` tilted by `(w2[j], xi)`.
pub struct DepthTwoTilt<'a> {
    table: &'a PartitionTable,
    pub w1: [f64; 4],
    pub w2: [[f64; 4]; 4],
    pub xi: f64,
    root: TiltedSplitLaw,
}

impl<'a> DepthTwoTilt<'a> {
    pub fn new(table: &'a PartitionTable, n: u32, w1: [f64; 4], w2: [[f64; 4]; 4], xi: f64) -> Result<Self> {
        let root = TiltedSplitLaw::new(table, n, w1, xi)?;
        Ok(DepthTwoTilt {
            table,
            w1,
            w2,
            xi,
            root,
        })
    }

    /// Tilted log-probability and log-likelihood-ratio of one record.
    pub fn log_prob_and_ratio(&self, n: u32, record: &DepthTwoRecord) -> Result<(f64, f64)> {
        let mut lp = self.root.log_prob(self.table, n, &record.level1)?;
        let mut ratio = self.root.log_ratio(self.table, n, &record.level1);
        for (j, split) in record.level2.iter().enumerate() {
            if let Some(s) = split {
                let m = record.level1.parts()[j];
                let node = TiltedSplitLaw::new(self.table, m, self.w2[j], self.xi)?;
                lp += node.log_prob(self.table, m, s)?;
                ratio += node.log_ratio(self.table, m, s);
            }
        }
        Ok((lp, ratio))
    }
}

/// Exact verification data for the unbiasedness identity
/// `E_tilted[1_A * LR] = P_plain[A]` over depth-two records.
pub struct UnbiasednessCheck {
    pub plain_log_prob: f64,
    pub tilted_log_expectation: f64,
}

/// Enumerate the identity for the event `{weighted_sum >= threshold}`.
pub fn unbiasedness_check(
    table: &PartitionTable,
    n: u32,
    w1: [f64; 4],
    w2: [[f64; 4]; 4],
    xi: f64,
    threshold: f64,
) -> Result<UnbiasednessCheck> {
    let tilt = DepthTwoTilt::new(table, n, w1, w2, xi)?;
    let mut plain = LogSumAcc::new();
    let mut tilted = LogSumAcc::new();
    let mut any = false;
    let mut err = None;
    for_each_depth_two_record(table, n, |record, lp_plain| {
        if err.is_some() {
            return;
        }
        if record.weighted_sum(&w1, &w2) >= threshold {
            any = true;
            plain.push(lp_plain);
            match tilt.log_prob_and_ratio(n, record) {
                Ok((lp_tilt, log_ratio)) => tilted.push(lp_tilt + log_ratio),
                Err(e) => err = Some(e),
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    if !any {
        return Ok(UnbiasednessCheck {
            plain_log_prob: f64::NEG_INFINITY,
            tilted_log_expectation: f64::NEG_INFINITY,
        });
    }
    Ok(UnbiasednessCheck {
        plain_log_prob: plain.total(),
        tilted_log_expectation: tilted.total(),
    })
}

/// Exact `P[|count(Q) - n * Leb(Q)| >= threshold]` for one level-1 square
/// by enumeration of the child marginal.
pub fn level1_abs_deviation_prob(table: &PartitionTable, n: u32, threshold: f64) -> Result<f64> {
    let expected = n as f64 / 4.0;
    let mut acc = LogSumAcc::new();
    let mut any = false;
    for t in 0..=n {
        if (t as f64 - expected).abs() >= threshold {
            acc.push(table.child_count_log_pmf(n, t)?);
            any = true;
        }
    }
    Ok(if any { math::exp(acc.total()) } else { 0.0 })
}
