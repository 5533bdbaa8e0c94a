//! The `hcg` command-line interface.
//!
//! Every run is fully determined by its parameters and seed; outputs are
//! CSV files with a JSON metadata sidecar echoing the configuration.
//! Parameters may come from flags or from a `key = value` config file,
//! with flags taking precedence.

use crate::cache;
use crate::error::{io_err, LabError};
use crate::report::{self, RunMeta};
use crate::run;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hcg_core::energy::Beta;
use hcg_core::geom::{classify_square, relative_area, DiskRegion, DyadicSquare, SquareClass, UnitPoint};
use hcg_core::mcmc::{compare_samplers, McmcSpec};
use hcg_core::partition::PartitionTable;
use hcg_core::sampler::{sample_count_tree, SamplerSpec};
use hcg_core::stats::{fit_tail_exponent, jlm_exponent, overcrowd_exact_path, TailReport};
use hcg_core::tilt::{tilt_strength_search, TailSide, TiltParams};
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser, Debug)]
#[command(
    name = "hcg",
    version,
    about = "Exact simulator and fluctuation statistics for the 2-D hierarchical Coulomb gas"
)]
pub struct Cli {
    /// Config file with `key = value` defaults; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for replica-parallel commands (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TableArgs {
    /// Inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Partition cache file (built on demand).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Rebuild the partition table even if a cache file exists.
    #[arg(long, default_value_t = false)]
    pub force_rebuild: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build (or load) the exact partition table and export `log Z`.
    Partition {
        #[command(flatten)]
        table: TableArgs,
        /// Largest point count in the table.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Draw one exact configuration and write it as CSV.
    Sample {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also dump the count tree.
        #[arg(long, default_value_t = false)]
        tree: bool,
    },
    /// Monte Carlo variance of disk counts over a radius grid.
    VarianceScan {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        n: Option<u32>,
        /// Disk center as `x,y`.
        #[arg(long)]
        z: Option<String>,
        /// Comma-separated radius grid (microscopic units).
        #[arg(long)]
        r_grid: Option<String>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Naive tail probabilities of |discrepancy| >= R^alpha.
    TailScan {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        z: Option<String>,
        /// Radius (microscopic units).
        #[arg(long)]
        r: Option<f64>,
        /// Comma-separated exponent grid.
        #[arg(long)]
        alpha_grid: Option<String>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the tail exponent from tail CSV files across radii.
    JlmFit {
        /// Exponent alpha selecting rows from the inputs.
        #[arg(long)]
        alpha: Option<f64>,
        /// Tail CSV files (naive or tilted schema).
        #[arg(long, value_delimiter = ',')]
        inputs: Vec<PathBuf>,
    },
    /// Overcrowding probability of a dyadic square.
    Overcrowd {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        n: Option<u32>,
        /// Dyadic level of the target square.
        #[arg(long)]
        level: Option<u8>,
        #[arg(long, value_enum)]
        mode: Option<OvercrowdMode>,
        /// Occupancy fraction for monte-carlo mode.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate the exact sampler against the Metropolis oracle.
    Validate {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        exact_replicas: Option<u64>,
        #[arg(long)]
        mcmc_samples: Option<u64>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        thinning: Option<u64>,
        /// Multiply the exact sampler's beta by this factor (power check).
        #[arg(long)]
        corrupt_beta_factor: Option<f64>,
        /// Total-variation gate on the level-1 law.
        #[arg(long)]
        tv_limit: Option<f64>,
        /// Chi-square significance gate.
        #[arg(long)]
        significance: Option<f64>,
    },
    /// Tilted (importance-sampled) tail estimate at one radius.
    TiltEstimate {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        z: Option<String>,
        #[arg(long)]
        r: Option<f64>,
        /// Exponent defining the threshold R^alpha.
        #[arg(long)]
        alpha: Option<f64>,
        /// Tilt strength; omit to search for a mean-matching value.
        #[arg(long)]
        xi: Option<f64>,
        /// Tilting depth; defaults to the constant-occupancy level.
        #[arg(long)]
        depth: Option<u8>,
        #[arg(long, value_enum)]
        side: Option<SideArg>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify all squares of one level against a disk.
    Squares {
        /// Disk center as `x,y`.
        #[arg(long)]
        z: Option<String>,
        /// Absolute disk radius.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        level: Option<u8>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OvercrowdMode {
    ExactPath,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SideArg {
    Upper,
    Lower,
    Abs,
    /// Estimate both sides with opposite tilts and report their sum.
    Both,
}

/// Flag-or-config-or-default parameter resolution.
struct Ctx {
    cfg: BTreeMap<String, String>,
    out_dir: PathBuf,
    workers: usize,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self, LabError> {
        let mut cfg = BTreeMap::new();
        if let Some(path) = &cli.config {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    LabError::Config(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                cfg.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        let out_dir = match &cli.out {
            Some(p) => p.clone(),
            None => cfg
                .get("out")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        let workers = match cli.workers {
            Some(w) => w,
            None => cfg
                .get("workers")
                .map(|s| s.parse())
                .transpose()
                .map_err(|e| LabError::Config(format!("workers: {e}")))?
                .unwrap_or(0),
        };
        Ok(Ctx {
            cfg,
            out_dir,
            workers,
        })
    }

    fn get<T: FromStr + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: Option<T>,
    ) -> Result<T, LabError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.cfg.get(key) {
            return raw
                .parse::<T>()
                .map_err(|e| LabError::Config(format!("config key `{key}`: {e}")));
        }
        default.ok_or_else(|| LabError::Config(format!("missing required parameter `{key}`")))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn parse_grid(raw: &str, key: &str) -> Result<Vec<f64>, LabError> {
    let grid: Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let grid = grid.map_err(|e| LabError::Config(format!("{key}: {e}")))?;
    if grid.is_empty() {
        return Err(LabError::Config(format!("{key}: empty grid")));
    }
    Ok(grid)
}

fn parse_point(raw: &str, key: &str) -> Result<UnitPoint, LabError> {
    let (x, y) = raw
        .split_once(',')
        .ok_or_else(|| LabError::Config(format!("{key}: expected `x,y`")))?;
    let x: f64 = x
        .trim()
        .parse()
        .map_err(|e| LabError::Config(format!("{key}: {e}")))?;
    let y: f64 = y
        .trim()
        .parse()
        .map_err(|e| LabError::Config(format!("{key}: {e}")))?;
    Ok(UnitPoint::new(x, y)?)
}

struct TableHandle {
    table: PartitionTable,
    checksum: String,
    from_cache: bool,
    path: PathBuf,
}

fn open_table(
    ctx: &Ctx,
    args: &TableArgs,
    n_max: usize,
) -> Result<TableHandle, LabError> {
    let beta = Beta::new(ctx.get(args.beta, "beta", None)?)?;
    let path = match &args.cache {
        Some(p) => p.clone(),
        None => match ctx.cfg.get("cache") {
            Some(p) => PathBuf::from(p),
            None => ctx.out(&format!("partition-beta{}-n{}.hcgp", beta.value(), n_max)),
        },
    };
    let (table, checksum, from_cache) =
        cache::load_or_build(&path, beta, n_max, args.force_rebuild)?;
    Ok(TableHandle {
        table,
        checksum,
        from_cache,
        path,
    })
}

/// Run one parsed command; returns the process exit code.
pub fn run_command(cli: Cli) -> Result<(), LabError> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Partition { table, n_max } => cmd_partition(&ctx, table, n_max),
        Command::Sample {
            table,
            n,
            seed,
            tree,
        } => cmd_sample(&ctx, table, n, seed, tree),
        Command::VarianceScan {
            table,
            n,
            z,
            r_grid,
            replicas,
            seed,
        } => cmd_variance_scan(&ctx, table, n, z, r_grid, replicas, seed),
        Command::TailScan {
            table,
            n,
            z,
            r,
            alpha_grid,
            replicas,
            seed,
        } => cmd_tail_scan(&ctx, table, n, z, r, alpha_grid, replicas, seed),
        Command::JlmFit { alpha, inputs } => cmd_jlm_fit(&ctx, alpha, inputs),
        Command::Overcrowd {
            table,
            n,
            level,
            mode,
            delta,
            replicas,
            seed,
        } => cmd_overcrowd(&ctx, table, n, level, mode, delta, replicas, seed),
        Command::Validate {
            table,
            n,
            seed,
            exact_replicas,
            mcmc_samples,
            burn_in,
            thinning,
            corrupt_beta_factor,
            tv_limit,
            significance,
        } => cmd_validate(
            &ctx,
            table,
            n,
            seed,
            exact_replicas,
            mcmc_samples,
            burn_in,
            thinning,
            corrupt_beta_factor,
            tv_limit,
            significance,
        ),
        Command::TiltEstimate {
            table,
            n,
            z,
            r,
            alpha,
            xi,
            depth,
            side,
            replicas,
            seed,
        } => cmd_tilt_estimate(&ctx, table, n, z, r, alpha, xi, depth, side, replicas, seed),
        Command::Squares { z, radius, level } => cmd_squares(&ctx, z, radius, level),
    }
}

fn cmd_partition(ctx: &Ctx, table_args: TableArgs, n_max: Option<usize>) -> Result<(), LabError> {
    let n_max = ctx.get(n_max, "n-max", Some(256))?;
    let mut meta = RunMeta::new("partition");
    let handle = open_table(ctx, &table_args, n_max)?;
    let beta = handle.table.beta().value();
    meta.param("beta", beta);
    meta.param("n_max", n_max);
    meta.param("cache", handle.path.display());
    meta.cache_checksum = Some(handle.checksum.clone());
    let out = ctx.out("partition.csv");
    report::write_partition_csv(&out, &handle.table.log_z_slice()[..=n_max])?;
    meta.output(&out);
    meta.write_sidecar(&out)?;
    println!(
        "partition table for beta = {beta}, n_max = {n_max}: {} (checksum {})",
        if handle.from_cache {
            "loaded from cache, no recomputation"
        } else {
            "built and cached"
        },
        &handle.checksum[..12],
    );
    // Envelope diagnostics: the quadratic leading term of log Z and the
    // residual per n ln n, reported over two halves of the range.
    let envelope = |lo: usize, hi: usize| -> f64 {
        (lo..=hi)
            .map(|n| {
                let nf = n as f64;
                (handle.table.log_z(n as u32) + 2.0 * beta / 3.0 * nf * nf).abs()
                    / (nf * nf.ln())
            })
            .fold(0.0, f64::max)
    };
    let mut jensen_margin = f64::INFINITY;
    for n in 2..=n_max {
        let nf = n as f64;
        let bound = -(2.0 * beta / 3.0) * nf * nf + (2.0 * beta / 3.0) * nf;
        jensen_margin = jensen_margin.min(handle.table.log_z(n as u32) - bound);
    }
    if n_max >= 20 {
        let mid = n_max / 2;
        println!(
            "log Z envelope |log Z + (2 beta/3) n^2| / (n ln n): max {:.4} on [10,{mid}], {:.4} on [{mid},{n_max}]",
            envelope(10, mid),
            envelope(mid, n_max)
        );
    }
    println!("Jensen margin min_n (log Z - lower bound) = {jensen_margin:.6} (must be >= 0)");
    Ok(())
}

fn cmd_sample(
    ctx: &Ctx,
    table_args: TableArgs,
    n: Option<u32>,
    seed: Option<u64>,
    tree: bool,
) -> Result<(), LabError> {
    let n = ctx.get(n, "n", None)?;
    let seed = ctx.get(seed, "seed", Some(0))?;
    let handle = open_table(ctx, &table_args, n as usize)?;
    let spec = SamplerSpec::new(n, seed);
    let mut meta = RunMeta::new("sample");
    meta.param("beta", handle.table.beta().value());
    meta.param("n", n);
    meta.seed = Some(seed);
    meta.cache_checksum = Some(handle.checksum.clone());
    let config = hcg_core::sampler::sample_configuration(&handle.table, &spec)?;
    let out = ctx.out("sample.csv");
    report::write_configuration_csv(&out, &config)?;
    meta.output(&out);
    if tree {
        let count_tree = sample_count_tree(&handle.table, &spec)?;
        let tree_out = ctx.out("tree.txt");
        report::write_count_tree(&tree_out, &count_tree)?;
        meta.output(&tree_out);
    }
    meta.write_sidecar(&out)?;
    println!("sampled {n} points (seed {seed}) -> {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_variance_scan(
    ctx: &Ctx,
    table_args: TableArgs,
    n: Option<u32>,
    z: Option<String>,
    r_grid: Option<String>,
    replicas: Option<u64>,
    seed: Option<u64>,
) -> Result<(), LabError> {
    let n = ctx.get(n, "n", None)?;
    let z = parse_point(&ctx.get(z, "z", Some("0.5,0.5".into()))?, "z")?;
    let r_grid = parse_grid(&ctx.get(r_grid, "r-grid", None)?, "r-grid")?;
    let replicas = ctx.get(replicas, "replicas", None)?;
    let seed = ctx.get(seed, "seed", Some(0))?;
    if replicas == 0 {
        return Err(LabError::Config("replicas must be >= 1".into()));
    }
    let handle = open_table(ctx, &table_args, n as usize)?;
    let report_data = run::variance_scan(&handle.table, n, z, &r_grid, replicas, seed, ctx.workers)?;
    let out = ctx.out("variance.csv");
    report::write_variance_csv(&out, &report_data)?;
    let mut meta = RunMeta::new("variance-scan");
    meta.param("beta", handle.table.beta().value());
    meta.param("n", n);
    meta.param("z", format!("{},{}", z.x(), z.y()));
    meta.param("r_grid", r_grid.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","));
    meta.param("replicas", replicas);
    meta.seed = Some(seed);
    meta.cache_checksum = Some(handle.checksum);
    meta.output(&out);
    meta.write_sidecar(&out)?;
    for row in &report_data.rows {
        println!(
            "R = {:>6}: Var = {:.4} +- {:.4}",
            row.r, row.variance, row.stderr
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_tail_scan(
    ctx: &Ctx,
    table_args: TableArgs,
    n: Option<u32>,
    z: Option<String>,
    r: Option<f64>,
    alpha_grid: Option<String>,
    replicas: Option<u64>,
    seed: Option<u64>,
) -> Result<(), LabError> {
    let n = ctx.get(n, "n", None)?;
    let z = parse_point(&ctx.get(z, "z", Some("0.5,0.5".into()))?, "z")?;
    let r = ctx.get(r, "r", None)?;
    let alpha_grid = parse_grid(&ctx.get(alpha_grid, "alpha-grid", None)?, "alpha-grid")?;
    let replicas = ctx.get(replicas, "replicas", None)?;
    let seed = ctx.get(seed, "seed", Some(0))?;
    if replicas == 0 {
        return Err(LabError::Config("replicas must be >= 1".into()));
    }
    let handle = open_table(ctx, &table_args, n as usize)?;
    let rows = run::tail_scan(&handle.table, n, z, r, &alpha_grid, replicas, seed, ctx.workers)?;
    let out = ctx.out("tails.csv");
    report::write_tail_csv(&out, r, &rows)?;
    let mut meta = RunMeta::new("tail-scan");
    meta.param("beta", handle.table.beta().value());
    meta.param("n", n);
    meta.param("r", r);
    meta.param("alpha_grid", alpha_grid.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
    meta.param("replicas", replicas);
    meta.seed = Some(seed);
    meta.cache_checksum = Some(handle.checksum);
    meta.output(&out);
    meta.write_sidecar(&out)?;
    for (alpha, rep) in &rows {
        println!(
            "alpha = {alpha:>5}: P[|Delta| >= {:.3}] ~= {:.3e}{}",
            rep.threshold,
            rep.estimate.to_f64(),
            if rep.upper_bound { " (zero hits; rule-of-three bound)" } else { "" }
        );
    }
    Ok(())
}

fn cmd_jlm_fit(ctx: &Ctx, alpha: Option<f64>, inputs: Vec<PathBuf>) -> Result<(), LabError> {
    let alpha = ctx.get(alpha, "alpha", None)?;
    if inputs.is_empty() {
        return Err(LabError::Config("jlm-fit needs at least one input file".into()));
    }
    let mut points: Vec<(f64, TailReport)> = Vec::new();
    for path in &inputs {
        for (row_alpha, r, report) in report::read_tail_csv(path)? {
            if (row_alpha - alpha).abs() < 1e-12 {
                points.push((r, report));
            }
        }
    }
    let fit = fit_tail_exponent(&points)?;
    let phi = jlm_exponent(alpha)?;
    let out = ctx.out("fit.csv");
    report::write_fit_csv(&out, alpha, &fit, phi)?;
    let mut meta = RunMeta::new("jlm-fit");
    meta.param("alpha", alpha);
    meta.param(
        "inputs",
        inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    meta.output(&out);
    meta.write_sidecar(&out)?;
    println!(
        "alpha = {alpha}: fitted exponent {:.3} +- {:.3} (phi = {phi}) from {} points",
        fit.slope, fit.slope_stderr, fit.points_used
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_overcrowd(
    ctx: &Ctx,
    table_args: TableArgs,
    n: Option<u32>,
    level: Option<u8>,
    mode: Option<OvercrowdMode>,
    delta: Option<f64>,
    replicas: Option<u64>,
    seed: Option<u64>,
) -> Result<(), LabError> {
    let n = ctx.get(n, "n", None)?;
    let level = ctx.get(level, "level", None)?;
    let mode = mode.unwrap_or(OvercrowdMode::ExactPath);
    let mut meta = RunMeta::new("overcrowd");
    meta.param("n", n);
    meta.param("level", level);
    let out = ctx.out("overcrowd.csv");
    let mut body = String::from("mode,n,level,delta,estimate,log_estimate,stderr,replicas,upper_bound\n");
    match mode {
        OvercrowdMode::ExactPath => {
            let beta = Beta::new(ctx.get(table_args.beta, "beta", None)?)?;
            meta.param("beta", beta.value());
            meta.param("mode", "exact-path");
            let p = overcrowd_exact_path(beta, n, level)?;
            body.push_str(&format!(
                "exact-path,{n},{level},1.0,{},{},,0,0\n",
                report::fmt_f64(p.to_f64()),
                report::fmt_f64(p.ln_abs()),
            ));
            println!(
                "P[all {n} points in one level-{level} square] = exp({:.6})",
                p.ln_abs()
            );
        }
        OvercrowdMode::MonteCarlo => {
            let delta = ctx.get(delta, "delta", None)?;
            let replicas = ctx.get(replicas, "replicas", None)?;
            let seed = ctx.get(seed, "seed", Some(0))?;
            let handle = open_table(ctx, &table_args, n as usize)?;
            meta.param("beta", handle.table.beta().value());
            meta.param("mode", "monte-carlo");
            meta.param("delta", delta);
            meta.param("replicas", replicas);
            meta.seed = Some(seed);
            meta.cache_checksum = Some(handle.checksum.clone());
            let rep =
                hcg_core::stats::overcrowd_monte_carlo(&handle.table, n, level, delta, replicas, seed)?;
            body.push_str(&format!(
                "monte-carlo,{n},{level},{},{},{},{},{},{}\n",
                report::fmt_f64(delta),
                report::fmt_f64(rep.estimate.to_f64()),
                report::fmt_f64(rep.estimate.ln_abs()),
                report::fmt_f64(rep.stderr),
                rep.replicas,
                if rep.upper_bound { 1 } else { 0 },
            ));
            println!(
                "P[count >= {delta} n in level-{level} square] ~= {:.3e}",
                rep.estimate.to_f64()
            );
        }
    }
    fs::create_dir_all(&ctx.out_dir).map_err(io_err(&ctx.out_dir))?;
    fs::write(&out, body).map_err(io_err(&out))?;
    meta.output(&out);
    meta.write_sidecar(&out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_validate(
    ctx: &Ctx,
    table_args: TableArgs,
    n: Option<u32>,
    seed: Option<u64>,
    exact_replicas: Option<u64>,
    mcmc_samples: Option<u64>,
    burn_in: Option<u64>,
    thinning: Option<u64>,
    corrupt_beta_factor: Option<f64>,
    tv_limit: Option<f64>,
    significance: Option<f64>,
) -> Result<(), LabError> {
    let n = ctx.get(n, "n", None)?;
    let seed = ctx.get(seed, "seed", Some(0))?;
    let exact_replicas = ctx.get(exact_replicas, "exact-replicas", Some(100_000))?;
    let mcmc_samples = ctx.get(mcmc_samples, "mcmc-samples", Some(100_000))?;
    let burn_in = ctx.get(burn_in, "burn-in", Some(5_000))?;
    let thinning = ctx.get(thinning, "thinning", Some(20))?;
    let corrupt = ctx.get(corrupt_beta_factor, "corrupt-beta-factor", Some(1.0))?;
    let tv_limit = ctx.get(tv_limit, "tv-limit", Some(0.02))?;
    let significance = ctx.get(significance, "significance", Some(1e-6))?;
    let beta = ctx.get(table_args.beta, "beta", None)?;
    // The exact sampler runs at (possibly corrupted) beta; the oracle at
    // the nominal one.
    let exact_beta = Beta::new(beta * corrupt)?;
    let sampler_table = PartitionTable::build(exact_beta, n as usize)?;
    let mcmc_spec = McmcSpec {
        n,
        beta: Beta::new(beta)?,
        seed: seed ^ 0x9e3779b97f4a7c15,
        burn_in,
        thinning,
        total_samples: mcmc_samples,
    };
    let agreement = compare_samplers(&sampler_table, exact_replicas, seed, mcmc_spec)?;
    // Chain diagnostics stream: energy at each emitted sample.
    let trace_out = ctx.out("mcmc_trace.csv");
    let mut trace = String::from("sample,energy\n");
    for (i, e) in agreement.mcmc_energy_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{e}\n"));
    }
    fs::create_dir_all(&ctx.out_dir).map_err(io_err(&ctx.out_dir))?;
    fs::write(&trace_out, trace).map_err(io_err(&trace_out))?;
    let out = ctx.out("validate.json");
    let json = serde_json::json!({
        "n": n,
        "beta": beta,
        "corrupt_beta_factor": corrupt,
        "level1_tv": agreement.level1_tv,
        "level1_p": agreement.level1_p,
        "level2_p": agreement.level2_p,
        "exact_samples": agreement.exact_samples,
        "mcmc_samples": agreement.mcmc_samples,
        "mcmc_ess": agreement.mcmc_ess,
        "mcmc_tau": agreement.mcmc_tau,
        "mcmc_acceptance": agreement.mcmc_acceptance,
        "mixing_warning": agreement.mixing_warning,
        "tv_limit": tv_limit,
        "significance": significance,
    });
    fs::create_dir_all(&ctx.out_dir).map_err(io_err(&ctx.out_dir))?;
    fs::write(&out, serde_json::to_string_pretty(&json).unwrap()).map_err(io_err(&out))?;
    let mut meta = RunMeta::new("validate");
    meta.param("n", n);
    meta.param("beta", beta);
    meta.param("corrupt_beta_factor", corrupt);
    meta.param("mcmc_acceptance", agreement.mcmc_acceptance);
    meta.cache_checksum = Some(crate::cache::table_checksum(&sampler_table));
    meta.seed = Some(seed);
    meta.output(&out);
    meta.output(&trace_out);
    meta.write_sidecar(&out)?;
    if agreement.mixing_warning {
        eprintln!(
            "warning: chain autocorrelation time {:.1} exceeds the thinning interval; \
             effective sample size {:.0}",
            agreement.mcmc_tau, agreement.mcmc_ess
        );
    }
    println!(
        "level-1 TV = {:.4}, chi-square p = {:.3e} (level 1), {:.3e} (level 2), MCMC ESS = {:.0}",
        agreement.level1_tv, agreement.level1_p, agreement.level2_p, agreement.mcmc_ess
    );
    if agreement.agrees(tv_limit, significance) {
        println!("samplers agree");
        Ok(())
    } else {
        Err(LabError::ValidationFailed(format!(
            "samplers disagree: TV = {:.4}, p1 = {:.3e}, p2 = {:.3e}",
            agreement.level1_tv, agreement.level1_p, agreement.level2_p
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_tilt_estimate(
    ctx: &Ctx,
    table_args: TableArgs,
    n: Option<u32>,
    z: Option<String>,
    r: Option<f64>,
    alpha: Option<f64>,
    xi: Option<f64>,
    depth: Option<u8>,
    side: Option<SideArg>,
    replicas: Option<u64>,
    seed: Option<u64>,
) -> Result<(), LabError> {
    let n = ctx.get(n, "n", None)?;
    let z = parse_point(&ctx.get(z, "z", Some("0.5,0.5".into()))?, "z")?;
    let r = ctx.get(r, "r", None)?;
    let alpha = ctx.get(alpha, "alpha", None)?;
    let replicas = ctx.get(replicas, "replicas", None)?;
    let seed = ctx.get(seed, "seed", Some(0))?;
    let side = side.unwrap_or(SideArg::Both);
    if replicas == 0 {
        return Err(LabError::Config("replicas must be >= 1".into()));
    }
    let handle = open_table(ctx, &table_args, n as usize)?;
    let disk = DiskRegion::microscopic(z, r, n as u64)?;
    let depth = match depth {
        Some(d) => d,
        None => ctx
            .cfg
            .get("depth")
            .map(|s| s.parse())
            .transpose()
            .map_err(|e| LabError::Config(format!("depth: {e}")))?
            .unwrap_or_else(|| TiltParams::natural_depth(n)),
    };
    let threshold = r.powf(alpha);
    let expected = n as f64 * disk.area();
    let mut rows: Vec<(f64, f64, TailReport)> = Vec::new();
    let estimate_side = |side: TailSide| -> Result<TailReport, LabError> {
        let target = match side {
            TailSide::Upper | TailSide::Abs => expected + threshold,
            TailSide::Lower => (expected - threshold).max(0.05 * expected),
        };
        let xi_val = match xi {
            Some(v) => v,
            None => tilt_strength_search(&handle.table, n, disk, target, depth, 1500, seed ^ 0xabcd)?,
        };
        Ok(run::tilted_tail_estimate(
            &handle.table,
            n,
            disk,
            threshold,
            xi_val,
            depth,
            replicas,
            seed,
            side,
            ctx.workers,
        )?)
    };
    match side {
        SideArg::Upper => rows.push((alpha, r, estimate_side(TailSide::Upper)?)),
        SideArg::Lower => rows.push((alpha, r, estimate_side(TailSide::Lower)?)),
        SideArg::Abs => rows.push((alpha, r, estimate_side(TailSide::Abs)?)),
        SideArg::Both => {
            let up = estimate_side(TailSide::Upper)?;
            let down = estimate_side(TailSide::Lower)?;
            let combined = combine_sides(&up, &down);
            rows.push((alpha, r, combined));
        }
    }
    let out = ctx.out("tilt.csv");
    report::write_tilted_tail_csv(&out, &rows)?;
    let mut meta = RunMeta::new("tilt-estimate");
    meta.param("beta", handle.table.beta().value());
    meta.param("n", n);
    meta.param("r", r);
    meta.param("alpha", alpha);
    meta.param("depth", depth);
    meta.param("replicas", replicas);
    meta.seed = Some(seed);
    meta.cache_checksum = Some(handle.checksum);
    meta.output(&out);
    meta.write_sidecar(&out)?;
    for (_, _, rep) in &rows {
        let degenerate = rep
            .ess
            .map(|e| e < 0.01 * rep.replicas as f64)
            .unwrap_or(false);
        if degenerate {
            eprintln!(
                "warning: effective sample size {:.1} below 1% of replicas; xi too large",
                rep.ess.unwrap_or(0.0)
            );
        }
        println!(
            "P[|Delta| >= {:.3}] ~= exp({:.3}) with xi = {:.4}, ESS = {:.0}",
            rep.threshold,
            rep.estimate.ln_abs(),
            rep.xi.unwrap_or(0.0),
            rep.ess.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

/// Sum two one-sided tilted reports into an absolute-event report.
pub fn combine_sides(up: &TailReport, down: &TailReport) -> TailReport {
    let estimate = up.estimate + down.estimate;
    // Variances add for independent runs; keep the log scale.
    let var_up = 2.0 * up.stderr;
    let var_down = 2.0 * down.stderr;
    let stderr = 0.5
        * hcg_core::numeric::log_add_exp(
            if up.estimate.is_zero() { f64::NEG_INFINITY } else { var_up },
            if down.estimate.is_zero() { f64::NEG_INFINITY } else { var_down },
        );
    TailReport {
        estimator: up.estimator,
        threshold: up.threshold,
        estimate,
        stderr,
        stderr_scale: hcg_core::stats::StderrScale::Log,
        replicas: up.replicas + down.replicas,
        upper_bound: up.upper_bound && down.upper_bound,
        ess: match (up.ess, down.ess) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        },
        xi: up.xi,
    }
}

fn cmd_squares(
    ctx: &Ctx,
    z: Option<String>,
    radius: Option<f64>,
    level: Option<u8>,
) -> Result<(), LabError> {
    let z = parse_point(&ctx.get(z, "z", None)?, "z")?;
    let radius = ctx.get(radius, "radius", None)?;
    let level = ctx.get(level, "level", None)?;
    if level > 10 {
        return Err(LabError::Config(
            "square dumps are limited to level <= 10 (over a million rows beyond)".into(),
        ));
    }
    let disk = DiskRegion::new(z, radius)?;
    let cells = 1u64 << level;
    let mut rows: Vec<(DyadicSquare, SquareClass, f64)> = Vec::new();
    for iy in 0..cells {
        for ix in 0..cells {
            let sq = DyadicSquare::new(level, ix, iy)?;
            let class = classify_square(&sq, &disk);
            rows.push((sq, class, relative_area(&sq, &disk)));
        }
    }
    let out = ctx.out("squares.csv");
    report::write_squares_csv(&out, &rows)?;
    let mut meta = RunMeta::new("squares");
    meta.param("z", format!("{},{}", z.x(), z.y()));
    meta.param("radius", radius);
    meta.param("level", level);
    meta.output(&out);
    meta.write_sidecar(&out)?;
    let counts = rows.iter().fold([0usize; 4], |mut acc, (_, c, _)| {
        acc[match c {
            SquareClass::Interior => 0,
            SquareClass::Maximal => 1,
            SquareClass::Boundary => 2,
            SquareClass::Exterior => 3,
        }] += 1;
        acc
    });
    println!(
        "level {level}: {} interior, {} maximal, {} boundary, {} exterior -> {}",
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        out.display()
    );
    Ok(())
}
