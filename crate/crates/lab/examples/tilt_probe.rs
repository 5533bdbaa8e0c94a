//! Exploration harness for tilt tuning: scans xi scalings, depths and
//! replica counts, printing estimate/ESS tables. Not part of the test
//! surface.

use hcg_core::energy::Beta;
use hcg_core::geom::{DiskRegion, UnitPoint};
use hcg_core::partition::PartitionTable;
use hcg_core::stats::TailReport;
use hcg_core::tilt::{tilt_strength_search, TailSide, TiltParams};
use hcg_lab::run;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1024);
    let r: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let replicas: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let table = PartitionTable::build(Beta::new(1.0).unwrap(), n as usize).unwrap();
    let z = UnitPoint::new(0.5, 0.5).unwrap();
    let disk = DiskRegion::microscopic(z, r, n as u64).unwrap();
    let alpha = 2.5;
    let threshold = r.powf(alpha);
    let expected = n as f64 * disk.area();
    println!("n = {n}, R = {r}: expected count {expected:.1}, threshold {threshold:.1}");
    let depth0 = TiltParams::natural_depth(n);
    for depth in [depth0 - 1, depth0, depth0 + 1] {
        let xi_match = match tilt_strength_search(
            &table,
            n,
            disk,
            expected + threshold,
            depth,
            1500,
            42,
        ) {
            Ok(x) => x,
            Err(e) => {
                println!("depth {depth}: search failed: {e}");
                continue;
            }
        };
        for scale in [0.4, 0.55, 0.7, 0.85, 1.0] {
            let xi = xi_match * scale;
            let rep: TailReport = run::tilted_tail_estimate(
                &table,
                n,
                disk,
                threshold,
                xi,
                depth,
                replicas,
                7,
                TailSide::Upper,
                0,
            )
            .unwrap();
            println!(
                "depth {depth} xi = {xi:7.3} (match x {scale:.2}): log P = {:9.3}, \
                 ESS = {:8.1}, sd(logP) ~ {:.2}",
                rep.estimate.ln_abs(),
                rep.ess.unwrap_or(0.0),
                rep.sd_of_log_estimate(),
            );
        }
    }
}
