//! CSV report writers, the JSON metadata sidecar, and the tail-report
//! reader used by the fit command.
//!
//! CSV files are RFC-4180-style: header row, UTF-8, `.` decimal, no
//! quoting (fields never contain separators). Floats are written with 17
//! significant digits so parsing them back is lossless.

use crate::error::{io_err, LabError};
use hcg_core::energy::Configuration;
use hcg_core::geom::{DyadicSquare, SquareClass};
use hcg_core::sampler::CountTree;
use hcg_core::stats::{
    EstimatorKind, ExponentFit, StderrScale, TailReport, VarianceReport,
};
use hcg_core::LogReal;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Lossless float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x:.16e}")
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), LabError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(body.as_bytes()).map_err(io_err(path))
}

/// `(n, log Z)` rows of a partition table.
pub fn write_partition_csv(path: &Path, log_z: &[f64]) -> Result<(), LabError> {
    let mut body = String::from("n,log_z\n");
    for (n, &z) in log_z.iter().enumerate() {
        body.push_str(&format!("{n},{}\n", fmt_f64(z)));
    }
    write_file(path, &body)
}

/// `(index, x, y)` rows of a configuration.
pub fn write_configuration_csv(path: &Path, cfg: &Configuration) -> Result<(), LabError> {
    let mut body = String::from("index,x,y\n");
    for (i, p) in cfg.points().iter().enumerate() {
        body.push_str(&format!("{i},{},{}\n", fmt_f64(p.x()), fmt_f64(p.y())));
    }
    write_file(path, &body)
}

/// Line-oriented count-tree dump: `level ix iy count`, sorted.
pub fn write_count_tree(path: &Path, tree: &CountTree) -> Result<(), LabError> {
    let mut body = String::new();
    for (sq, count) in tree.nodes() {
        body.push_str(&format!("{} {} {} {count}\n", sq.level(), sq.ix(), sq.iy()));
    }
    write_file(path, &body)
}

/// Square classification dump: `level,ix,iy,class,relative_area`.
pub fn write_squares_csv(
    path: &Path,
    rows: &[(DyadicSquare, SquareClass, f64)],
) -> Result<(), LabError> {
    let mut body = String::from("level,ix,iy,class,relative_area\n");
    for (sq, class, area) in rows {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            sq.level(),
            sq.ix(),
            sq.iy(),
            class.as_str(),
            fmt_f64(*area)
        ));
    }
    write_file(path, &body)
}

pub fn write_variance_csv(path: &Path, report: &VarianceReport) -> Result<(), LabError> {
    let mut body = String::from("r,variance,stderr,replicas\n");
    for row in &report.rows {
        body.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(row.r),
            fmt_f64(row.variance),
            fmt_f64(row.stderr),
            row.replicas
        ));
    }
    write_file(path, &body)
}

fn tail_row(alpha: f64, r: f64, rep: &TailReport, with_tilt_columns: bool) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{}",
        fmt_f64(alpha),
        fmt_f64(r),
        fmt_f64(rep.threshold),
        rep.estimator.as_str(),
        fmt_f64(rep.estimate.to_f64()),
        fmt_f64(rep.estimate.ln_abs()),
        fmt_f64(rep.stderr),
        match rep.stderr_scale {
            StderrScale::Linear => "linear",
            StderrScale::Log => "log",
        },
        rep.replicas,
    );
    row.push_str(&format!(",{}", if rep.upper_bound { 1 } else { 0 }));
    if with_tilt_columns {
        row.push_str(&format!(
            ",{},{}",
            rep.ess.map(fmt_f64).unwrap_or_default(),
            rep.xi.map(fmt_f64).unwrap_or_default()
        ));
    }
    row.push('\n');
    row
}

pub const TAIL_HEADER: &str =
    "alpha,r,threshold,estimator,estimate,log_estimate,stderr,stderr_scale,replicas,upper_bound";

/// Naive tail-scan rows at one radius.
pub fn write_tail_csv(path: &Path, r: f64, rows: &[(f64, TailReport)]) -> Result<(), LabError> {
    let mut body = format!("{TAIL_HEADER}\n");
    for (alpha, rep) in rows {
        body.push_str(&tail_row(*alpha, r, rep, false));
    }
    write_file(path, &body)
}

/// Tilted tail rows: the shared schema plus effective sample size and xi.
pub fn write_tilted_tail_csv(
    path: &Path,
    rows: &[(f64, f64, TailReport)],
) -> Result<(), LabError> {
    let mut body = format!("{TAIL_HEADER},ess,xi\n");
    for (alpha, r, rep) in rows {
        body.push_str(&tail_row(*alpha, *r, rep, true));
    }
    write_file(path, &body)
}

/// A tail row read back for fitting: `(alpha, r, report)`.
pub fn read_tail_csv(path: &Path) -> Result<Vec<(f64, f64, TailReport)>, LabError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LabError::Config(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize, LabError> {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| LabError::Config(format!("{}: missing column {name}", path.display())))
    };
    let (ci_alpha, ci_r) = (find("alpha")?, find("r")?);
    let ci_thr = find("threshold")?;
    let ci_est = find("estimator")?;
    let ci_logp = find("log_estimate")?;
    let ci_se = find("stderr")?;
    let ci_scale = find("stderr_scale")?;
    let ci_reps = find("replicas")?;
    let ci_ub = find("upper_bound")?;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<&str, LabError> {
            fields.get(i).copied().ok_or_else(|| {
                LabError::Config(format!("{}:{}: short row", path.display(), lineno + 2))
            })
        };
        let parse = |s: &str| -> Result<f64, LabError> {
            if s == "-inf" {
                return Ok(f64::NEG_INFINITY);
            }
            s.parse::<f64>()
                .map_err(|e| LabError::Config(format!("{}:{}: {e}", path.display(), lineno + 2)))
        };
        let alpha = parse(get(ci_alpha)?)?;
        let r = parse(get(ci_r)?)?;
        let report = TailReport {
            estimator: if get(ci_est)? == "tilted" {
                EstimatorKind::Tilted
            } else {
                EstimatorKind::Naive
            },
            threshold: parse(get(ci_thr)?)?,
            estimate: LogReal::from_ln(parse(get(ci_logp)?)?),
            stderr: parse(get(ci_se)?)?,
            stderr_scale: if get(ci_scale)? == "log" {
                StderrScale::Log
            } else {
                StderrScale::Linear
            },
            replicas: get(ci_reps)?.parse().unwrap_or(0),
            upper_bound: get(ci_ub)? == "1",
            ess: None,
            xi: None,
        };
        out.push((alpha, r, report));
    }
    Ok(out)
}

pub fn write_fit_csv(path: &Path, alpha: f64, fit: &ExponentFit, phi: f64) -> Result<(), LabError> {
    let body = format!(
        "alpha,slope,slope_stderr,ci_lo,ci_hi,intercept,points_used,phi_alpha\n{},{},{},{},{},{},{},{}\n",
        fmt_f64(alpha),
        fmt_f64(fit.slope),
        fmt_f64(fit.slope_stderr),
        fmt_f64(fit.ci95.0),
        fmt_f64(fit.ci95.1),
        fmt_f64(fit.intercept),
        fit.points_used,
        fmt_f64(phi),
    );
    write_file(path, &body)
}

/// Timer plus metadata accumulator for one command run; serializes to the
/// JSON sidecar next to the primary output.
pub struct RunMeta {
    started: Instant,
    pub command: String,
    pub params: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub cache_checksum: Option<String>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SidecarJson<'a> {
    command: &'a str,
    version: &'a str,
    build_id: &'a str,
    params: std::collections::BTreeMap<&'a str, &'a str>,
    seed: Option<u64>,
    cache_checksum: Option<&'a str>,
    outputs: Vec<String>,
    wall_time_secs: f64,
}

impl RunMeta {
    pub fn new(command: &str) -> Self {
        RunMeta {
            started: Instant::now(),
            command: command.to_string(),
            params: Vec::new(),
            seed: None,
            cache_checksum: None,
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_string(), value.to_string()));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write `<primary>.meta.json`.
    pub fn write_sidecar(&self, primary: &Path) -> Result<(), LabError> {
        let sidecar = SidecarJson {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            build_id: option_env!("HCG_BUILD_ID").unwrap_or("unversioned"),
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_str()))
                .collect(),
            seed: self.seed,
            cache_checksum: self.cache_checksum.as_deref(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = sidecar_path(primary);
        let body = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| LabError::Config(format!("sidecar serialization: {e}")))?;
        write_file(&path, &body)
    }
}

pub fn sidecar_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    primary.with_file_name(name)
}
