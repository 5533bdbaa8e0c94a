//! End-to-end tests of the `hcg` binary: output correctness, exit codes,
//! cache behavior, determinism, and config-file handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hcg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn partition_matches_closed_form_and_reuses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = hcg(
        &["partition", "--beta", "1", "--n-max", "2", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("built and cached"));
    let csv = fs::read_to_string(dir.path().join("o/partition.csv")).unwrap();
    let row = csv.lines().nth(3).expect("row for n = 2");
    let log_z2: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    let expect = (3.0 * (-1.0f64).exp() / (4.0 - (-1.0f64).exp())).ln();
    assert!(
        (log_z2 - expect).abs() < 1e-10 * expect.abs(),
        "{log_z2} vs {expect}"
    );

    // Warm rerun: loaded, byte-identical CSV.
    let rerun = hcg(
        &["partition", "--beta", "1", "--n-max", "2", "--out", "o"],
        dir.path(),
    );
    assert!(rerun.status.success());
    assert!(stdout(&rerun).contains("no recomputation"));
    let csv2 = fs::read_to_string(dir.path().join("o/partition.csv")).unwrap();
    assert_eq!(csv, csv2);
}

#[test]
fn partition_ceiling_gives_resource_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = hcg(
        &["partition", "--beta", "1", "--n-max", "10000", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn tail_scan_zero_replicas_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hcg(
        &[
            "tail-scan",
            "--beta",
            "1",
            "--n",
            "16",
            "--r",
            "2",
            "--alpha-grid",
            "1.0",
            "--replicas",
            "0",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn missing_required_parameter_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hcg(&["sample", "--beta", "1", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn jlm_fit_recovers_synthetic_square_law() {
    let dir = tempfile::tempdir().unwrap();
    // Synthetic tails: p = exp(-r^2) at alpha = 1.5 across four radii.
    let mut body = String::from(
        "alpha,r,threshold,estimator,estimate,log_estimate,stderr,stderr_scale,replicas,upper_bound\n",
    );
    for r in [2.0f64, 4.0, 8.0, 16.0] {
        let p = (-r * r).exp();
        body.push_str(&format!(
            "1.5,{r},{},naive,{p:e},{},{:e},linear,1000000,0\n",
            r.powf(1.5),
            -r * r,
            p * 1e-6,
        ));
    }
    fs::write(dir.path().join("tails.csv"), body).unwrap();
    let out = hcg(
        &["jlm-fit", "--alpha", "1.5", "--inputs", "tails.csv", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let fit = fs::read_to_string(dir.path().join("o/fit.csv")).unwrap();
    let slope: f64 = fit
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 2.0).abs() < 1e-9, "slope {slope}");
}

#[test]
fn validate_agrees_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "validate",
        "--beta",
        "2",
        "--n",
        "3",
        "--seed",
        "5",
        "--exact-replicas",
        "40000",
        "--mcmc-samples",
        "40000",
        "--thinning",
        "12",
        "--burn-in",
        "2000",
        "--out",
        "o",
    ];
    let ok = hcg(&base, dir.path());
    assert_eq!(ok.status.code(), Some(0), "{ok:?}");
    assert!(stdout(&ok).contains("samplers agree"));

    let mut corrupted: Vec<&str> = base.to_vec();
    corrupted.extend_from_slice(&["--corrupt-beta-factor", "2"]);
    let bad = hcg(&corrupted, dir.path());
    assert_eq!(bad.status.code(), Some(5), "{bad:?}");
}

#[test]
fn variance_scan_is_deterministic_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, workers: &'static str| {
        vec![
            "variance-scan",
            "--beta",
            "1",
            "--n",
            "64",
            "--z",
            "0.5,0.5",
            "--r-grid",
            "2,3",
            "--replicas",
            "2000",
            "--seed",
            "9",
            "--workers",
            workers,
            "--out",
            out,
        ]
    };
    let a = hcg(&args("oa", "1"), dir.path());
    assert!(a.status.success(), "{a:?}");
    let b = hcg(&args("ob", "2"), dir.path());
    assert!(b.status.success(), "{b:?}");
    let csv_a = fs::read_to_string(dir.path().join("oa/variance.csv")).unwrap();
    let csv_b = fs::read_to_string(dir.path().join("ob/variance.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "CSV bodies must be byte-identical");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("lab.conf"),
        "beta = 1\nn = 8\nseed = 3\nout = conf_out\n",
    )
    .unwrap();
    let from_config = hcg(&["--config", "lab.conf", "sample"], dir.path());
    assert!(from_config.status.success(), "{from_config:?}");
    assert!(dir.path().join("conf_out/sample.csv").exists());

    // A flag overrides the config value: n = 4 gives 4 points.
    let overridden = hcg(&["--config", "lab.conf", "sample", "--n", "4"], dir.path());
    assert!(overridden.status.success());
    let csv = fs::read_to_string(dir.path().join("conf_out/sample.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "header plus 4 points: {csv}");
}

#[test]
fn sample_csv_roundtrips_at_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = hcg(
        &[
            "sample", "--beta", "1", "--n", "16", "--seed", "11", "--tree", "--out", "o",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("o/sample.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "index,x,y");
    assert_eq!(csv.lines().count(), 17);
    for line in csv.lines().skip(1) {
        let mut fields = line.split(',');
        fields.next();
        for f in fields {
            let v: f64 = f.parse().unwrap();
            assert!((0.0..1.0).contains(&v));
        }
    }
    // Count tree dump: root line holds all 16 points.
    let tree = fs::read_to_string(dir.path().join("o/tree.txt")).unwrap();
    assert_eq!(tree.lines().next().unwrap(), "0 0 0 16");
    // Sidecar carries the cache checksum.
    let sidecar = fs::read_to_string(dir.path().join("o/sample.csv.meta.json")).unwrap();
    assert!(sidecar.contains("cache_checksum"));
    assert!(sidecar.contains("\"command\": \"sample\""));
}

#[test]
fn squares_dump_matches_hand_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = hcg(
        &[
            "squares", "--z", "0.5,0.5", "--radius", "0.3", "--level", "1", "--out", "o",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("o/squares.csv")).unwrap();
    let boundary = csv.lines().filter(|l| l.contains(",boundary,")).count();
    assert_eq!(boundary, 4, "all four level-1 quadrants straddle the circle");
}
