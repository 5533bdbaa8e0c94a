//! Independent Metropolis oracle over continuous configurations.
//!
//! The proposal relocates one uniformly chosen point to a fresh uniform
//! position, which is irreducible in a single step; acceptance uses the
//! exact integer energy difference. This chain is only a validation
//! reference for the exact sampler at small `n`, with no attempt at
//! optimal mixing.

use crate::energy::{Beta, Configuration};
use crate::error::invalid;
use crate::geom::{enclosing_square, hierarchical_distance, UnitPoint};
use crate::math;
use crate::numeric::{batch_means_ess, chi_square_two_sample};
use crate::partition::{for_each_composition, PartitionTable, SplitCounts};
use crate::rng::{derive, mix64, salt, StreamRng};
use crate::sampler::sample_replica_points;
use crate::Result;
use alloc::vec;
use alloc::vec::Vec;

/// Chain parameters. `burn_in` and `thinning` are in chain steps.
#[derive(Clone, Copy, Debug)]
pub struct McmcSpec {
    pub n: u32,
    pub beta: Beta,
    pub seed: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub total_samples: u64,
}

impl McmcSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid!("chain needs n >= 1"));
        }
        if self.burn_in == 0 || self.thinning == 0 {
            return Err(invalid!("burn_in and thinning must be >= 1"));
        }
        Ok(())
    }
}

/// Metropolis acceptance rule for an integer energy increment.
#[inline]
pub fn accept_move(beta: Beta, delta_energy: i64, u: f64) -> bool {
    delta_energy <= 0 || u < math::exp(-beta.value() * delta_energy as f64)
}

/// A running Metropolis chain; iterate to receive thinned configurations.
pub struct McmcChain {
    spec: McmcSpec,
    rng: StreamRng,
    points: Vec<UnitPoint>,
    steps: u64,
    accepted: u64,
    emitted: u64,
    energy_trace: Vec<u64>,
    energy: u64,
}

impl McmcChain {
    pub fn new(spec: McmcSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = StreamRng::new(derive(mix64(spec.seed), salt::MCMC));
        let points: Vec<UnitPoint> = (0..spec.n)
            .map(|_| {
                UnitPoint::new(rng.next_f64(), rng.next_f64()).expect("uniform draw in [0,1)")
            })
            .collect();
        let energy = crate::energy::pairwise_energy(&Configuration::new_unchecked(points.clone()))
            .unwrap_or(0);
        let mut chain = McmcChain {
            spec,
            rng,
            points,
            steps: 0,
            accepted: 0,
            emitted: 0,
            energy_trace: Vec::new(),
            energy,
        };
        for _ in 0..spec.burn_in {
            chain.step();
        }
        Ok(chain)
    }

    /// One proposal/accept step.
    pub fn step(&mut self) {
        self.steps += 1;
        let i = self.rng.next_below(self.points.len());
        let proposal = UnitPoint::new(self.rng.next_f64(), self.rng.next_f64()).unwrap();
        let u = self.rng.next_f64();
        let mut delta = 0i64;
        for (j, q) in self.points.iter().enumerate() {
            if j == i {
                continue;
            }
            let w_new = match hierarchical_distance(&proposal, q) {
                Ok(w) => w,
                // A proposal exactly on top of an existing point has
                // probability zero; rejecting it leaves the chain's
                // stationary law untouched.
                Err(_) => return,
            };
            let w_old = hierarchical_distance(&self.points[i], q)
                .expect("current configuration is nondegenerate");
            delta += w_new as i64 - w_old as i64;
        }
        if accept_move(self.spec.beta, delta, u) {
            self.points[i] = proposal;
            self.energy = (self.energy as i64 + delta) as u64;
            self.accepted += 1;
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    /// Exact integer energy of the current state.
    pub fn energy(&self) -> u64 {
        self.energy
    }

    /// Energies recorded at each emitted sample.
    pub fn energy_trace(&self) -> &[u64] {
        &self.energy_trace
    }
}

impl Iterator for McmcChain {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        if self.emitted >= self.spec.total_samples {
            return None;
        }
        for _ in 0..self.spec.thinning {
            self.step();
        }
        self.emitted += 1;
        self.energy_trace.push(self.energy);
        Some(Configuration::new_unchecked(self.points.clone()))
    }
}

/// Run the chain to completion, returning samples and diagnostics.
pub fn mcmc_run(spec: McmcSpec) -> Result<(Vec<Configuration>, McmcDiagnostics)> {
    let mut chain = McmcChain::new(spec)?;
    let mut samples = Vec::with_capacity(spec.total_samples as usize);
    for cfg in chain.by_ref() {
        samples.push(cfg);
    }
    let diag = McmcDiagnostics {
        acceptance_rate: chain.acceptance_rate(),
        energy_trace: chain.energy_trace().to_vec(),
    };
    Ok((samples, diag))
}

#[derive(Clone, Debug)]
pub struct McmcDiagnostics {
    pub acceptance_rate: f64,
    pub energy_trace: Vec<u64>,
}

/// Largest point count for which the Metropolis oracle is trusted to mix
/// well enough for comparisons.
pub const ORACLE_MAX_N: u32 = 16;

/// Outcome of an exact-sampler vs Metropolis comparison.
#[derive(Clone, Debug)]
pub struct AgreementReport {
    /// Total variation distance between the two empirical level-1
    /// composition laws.
    pub level1_tv: f64,
    /// Two-sample chi-square p-value on level-1 compositions.
    pub level1_p: f64,
    /// Two-sample chi-square p-value on level-2 occupancy statistics.
    pub level2_p: f64,
    pub exact_samples: u64,
    pub mcmc_samples: u64,
    /// Effective sample size of the thinned chain.
    pub mcmc_ess: f64,
    /// Integrated autocorrelation time of the thinned chain.
    pub mcmc_tau: f64,
    /// Set when the chain's autocorrelation time exceeds its thinning, so
    /// emitted samples are visibly dependent.
    pub mixing_warning: bool,
    pub mcmc_acceptance: f64,
    /// Exact chain energy at each emitted sample, for trace dumps.
    pub mcmc_energy_trace: Vec<u64>,
}

impl AgreementReport {
    /// The comparison agrees when the level-1 law matches in total
    /// variation and no chi-square rejects at the given significance.
    pub fn agrees(&self, tv_limit: f64, significance: f64) -> bool {
        self.level1_tv < tv_limit && self.level1_p > significance && self.level2_p > significance
    }
}

fn level1_index(cfg: &Configuration, cells: &[SplitCounts]) -> usize {
    let mut counts = [0u32; 4];
    for p in cfg.points() {
        let sq = enclosing_square(p, 1);
        counts[(sq.ix() + 2 * sq.iy()) as usize] += 1;
    }
    cells
        .iter()
        .position(|c| c.parts() == counts)
        .expect("level-1 counts lie in the composition support")
}

/// Statistics of the level-2 occupancy pattern: (occupied squares, max
/// count) flattened to one cell index.
fn level2_index(cfg: &Configuration, n: u32) -> usize {
    let mut occupied = 0u32;
    let mut max_count = 0u32;
    let mut counts = [0u32; 16];
    for p in cfg.points() {
        let sq = enclosing_square(p, 2);
        let idx = (sq.ix() + 4 * sq.iy()) as usize;
        counts[idx] += 1;
    }
    for &c in &counts {
        if c > 0 {
            occupied += 1;
        }
        max_count = max_count.max(c);
    }
    ((occupied - 1) * (n + 1) + max_count) as usize
}

/// Compare the exact sampler with the Metropolis oracle on dyadic count
/// statistics at levels 1 and 2.
///
/// `table` drives the exact sampler (including its inverse temperature);
/// `mcmc` describes the oracle chain. In an uncorrupted comparison the two
/// temperatures agree.
pub fn compare_samplers(
    table: &PartitionTable,
    exact_replicas: u64,
    exact_seed: u64,
    mcmc: McmcSpec,
) -> Result<AgreementReport> {
    if mcmc.n > ORACLE_MAX_N {
        return Err(invalid!(
            "oracle comparisons are limited to n <= {ORACLE_MAX_N}, got {}",
            mcmc.n
        ));
    }
    let n = mcmc.n;
    let mut cells: Vec<SplitCounts> = Vec::new();
    for_each_composition(n, |c| cells.push(c));

    let mut exact_l1 = vec![0.0f64; cells.len()];
    let l2_cells = 16usize.min(n as usize) * (n as usize + 1);
    let mut exact_l2 = vec![0.0f64; l2_cells];
    for idx in 0..exact_replicas {
        let pts = sample_replica_points(table, n, exact_seed, idx)?;
        let cfg = Configuration::new_unchecked(pts);
        exact_l1[level1_index(&cfg, &cells)] += 1.0;
        exact_l2[level2_index(&cfg, n)] += 1.0;
    }

    let mut mcmc_l1 = vec![0.0f64; cells.len()];
    let mut mcmc_l2 = vec![0.0f64; l2_cells];
    let mut quadrant_trace = Vec::with_capacity(mcmc.total_samples as usize);
    let mut chain = McmcChain::new(mcmc)?;
    for cfg in chain.by_ref() {
        mcmc_l1[level1_index(&cfg, &cells)] += 1.0;
        mcmc_l2[level2_index(&cfg, n)] += 1.0;
        let q0 = cfg
            .points()
            .iter()
            .filter(|p| p.x() < 0.5 && p.y() < 0.5)
            .count();
        quadrant_trace.push(q0 as f64);
    }

    let (ess, tau) = batch_means_ess(&quadrant_trace);
    let tv = total_variation(&exact_l1, &mcmc_l1);
    let (_, _, p1) = chi_square_two_sample(&exact_l1, &mcmc_l1, 10.0);
    let (_, _, p2) = chi_square_two_sample(&exact_l2, &mcmc_l2, 10.0);
    Ok(AgreementReport {
        level1_tv: tv,
        level1_p: p1,
        level2_p: p2,
        exact_samples: exact_replicas,
        mcmc_samples: quadrant_trace.len() as u64,
        mcmc_ess: ess,
        mcmc_tau: tau,
        mixing_warning: tau > 2.0,
        mcmc_acceptance: chain.acceptance_rate(),
        mcmc_energy_trace: chain.energy_trace().to_vec(),
    })
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().sum();
    let nb: f64 = b.iter().sum();
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x / na - y / nb).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(v: f64) -> Beta {
        Beta::new(v).unwrap()
    }

    #[test]
    fn zero_delta_is_always_accepted() {
        let mut rng = StreamRng::new(1);
        for _ in 0..100 {
            assert!(accept_move(beta(1.7), 0, rng.next_f64()));
            assert!(accept_move(beta(1.7), -3, rng.next_f64()));
        }
    }

    #[test]
    fn rejection_rate_matches_boltzmann_factor() {
        let mut rng = StreamRng::new(2);
        let k = 200_000;
        let mut acc = 0u64;
        for _ in 0..k {
            if accept_move(beta(1.0), 2, rng.next_f64()) {
                acc += 1;
            }
        }
        let p = math::exp(-2.0);
        let freq = acc as f64 / k as f64;
        let se = math::sqrt(p * (1.0 - p) / k as f64);
        assert!((freq - p).abs() < 4.0 * se);
    }

    #[test]
    fn fixed_seed_reproduces_chain() {
        let spec = McmcSpec {
            n: 4,
            beta: beta(1.0),
            seed: 5,
            burn_in: 100,
            thinning: 5,
            total_samples: 50,
        };
        let (a, _) = mcmc_run(spec).unwrap();
        let (b, _) = mcmc_run(spec).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.points(), y.points());
        }
    }

    #[test]
    fn beta_zero_chain_is_multinomial_at_level_one() {
        let spec = McmcSpec {
            n: 5,
            beta: beta(0.0),
            seed: 8,
            burn_in: 500,
            thinning: 17,
            total_samples: 40_000,
        };
        let (samples, diag) = mcmc_run(spec).unwrap();
        assert!(diag.acceptance_rate > 0.999);
        // Count of points in quadrant 0 across samples vs Binomial(5, 1/4).
        let mut observed = vec![0.0f64; 6];
        for cfg in &samples {
            let q0 = cfg
                .points()
                .iter()
                .filter(|p| p.x() < 0.5 && p.y() < 0.5)
                .count();
            observed[q0] += 1.0;
        }
        let total: f64 = observed.iter().sum();
        let expected: Vec<f64> = (0..=5u64)
            .map(|k| {
                math::exp(
                    crate::numeric::ln_binomial(5, k)
                        + k as f64 * math::ln(0.25)
                        + (5 - k) as f64 * math::ln(0.75),
                ) * total
            })
            .collect();
        let (_, _, p) = crate::numeric::chi_square_gof(&observed, &expected, 5.0);
        assert!(p > 1e-4, "beta=0 level-1 law rejected: p = {p}");
    }

    #[test]
    fn pair_energy_histogram_matches_gibbs_law() {
        // For n = 2 the stationary energy w has P[w = k] prop to
        // 3 * 4^-k * e^(-beta k).
        let b = 1.0;
        let spec = McmcSpec {
            n: 2,
            beta: beta(b),
            seed: 12,
            burn_in: 1_000,
            thinning: 25,
            total_samples: 40_000,
        };
        let (_, diag) = mcmc_run(spec).unwrap();
        // Shared level-1 quadrant means w >= 2; its long-run frequency is
        // e^-beta / 4 for beta = 1.
        let shared = diag.energy_trace.iter().filter(|&&e| e >= 2).count() as f64
            / diag.energy_trace.len() as f64;
        let p_shared = math::exp(-1.0) / 4.0;
        // Thinned samples are near-independent; allow a generous margin.
        let se = math::sqrt(p_shared * (1.0 - p_shared) / diag.energy_trace.len() as f64);
        assert!(
            (shared - p_shared).abs() < 5.0 * se,
            "shared-quadrant frequency {shared} vs {p_shared}"
        );
        let kmax = 8usize;
        let mut observed = vec![0.0f64; kmax + 1]; // index k-1, pooled tail at end
        for &e in &diag.energy_trace {
            let k = (e as usize).min(kmax + 1);
            observed[k - 1] += 1.0;
        }
        let total: f64 = observed.iter().sum();
        let z: f64 = (1..=60)
            .map(|k| 3.0 * math::exp(-(k as f64) * (math::ln(4.0) + b)))
            .sum();
        let mut expected: Vec<f64> = (1..=kmax)
            .map(|k| 3.0 * math::exp(-(k as f64) * (math::ln(4.0) + b)) / z * total)
            .collect();
        expected.push(total - expected.iter().sum::<f64>());
        let (_, _, p) = crate::numeric::chi_square_gof(&observed, &expected, 5.0);
        assert!(p > 1e-4, "pair energy law rejected: p = {p}");
    }

    #[test]
    fn exact_sampler_agrees_with_itself() {
        let table = PartitionTable::build(beta(1.0), 8).unwrap();
        let n = 3u32;
        let mut cells: Vec<SplitCounts> = Vec::new();
        for_each_composition(n, |c| cells.push(c));
        let mut a = vec![0.0f64; cells.len()];
        let mut b = vec![0.0f64; cells.len()];
        for idx in 0..30_000u64 {
            let cfg = Configuration::new_unchecked(sample_replica_points(&table, n, 1, idx).unwrap());
            a[level1_index(&cfg, &cells)] += 1.0;
            let cfg = Configuration::new_unchecked(sample_replica_points(&table, n, 2, idx).unwrap());
            b[level1_index(&cfg, &cells)] += 1.0;
        }
        let (_, _, p) = chi_square_two_sample(&a, &b, 10.0);
        assert!(p > 1e-4, "same-law comparison rejected: p = {p}");
    }

    #[test]
    fn undersized_thinning_raises_mixing_warning() {
        let table = PartitionTable::build(beta(1.0), 16).unwrap();
        let spec = McmcSpec {
            n: 8,
            beta: beta(1.0),
            seed: 4,
            burn_in: 200,
            thinning: 1,
            total_samples: 4_000,
        };
        let report = compare_samplers(&table, 2_000, 9, spec).unwrap();
        assert!(
            report.mixing_warning,
            "unthinned chain should warn: tau = {}",
            report.mcmc_tau
        );
    }

    #[test]
    fn oracle_regime_bound_is_enforced() {
        let table = PartitionTable::build(beta(1.0), 64).unwrap();
        let spec = McmcSpec {
            n: 32,
            beta: beta(1.0),
            seed: 1,
            burn_in: 10,
            thinning: 2,
            total_samples: 10,
        };
        assert!(compare_samplers(&table, 100, 1, spec).is_err());
    }
}
