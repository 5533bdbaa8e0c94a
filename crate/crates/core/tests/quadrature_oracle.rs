//! Independent oracle for the closed-form circle/square overlap: adaptive
//! Simpson quadrature of the chord-length function. Slow but derivative-
//! free of the segment decomposition used by the implementation.

use hcg_core::geom::{relative_area, DiskRegion, DyadicSquare, UnitPoint};

fn chord_len(u: f64, cx: f64, cy: f64, r: f64, y0: f64, y1: f64) -> f64 {
    let d = u - cx;
    if d.abs() >= r {
        return 0.0;
    }
    let h = (r * r - d * d).sqrt();
    ((cy + h).min(y1) - (cy - h).max(y0)).max(0.0)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, tol / 2.0, left, depth - 1) + adaptive(f, m, b, tol / 2.0, right, depth - 1)
}

fn quadrature_area(disk: &DiskRegion, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (cx, cy, r) = (disk.center().x(), disk.center().y(), disk.radius());
    let lo = x0.max(cx - r);
    let hi = x1.min(cx + r);
    if lo >= hi {
        return 0.0;
    }
    let f = |u: f64| chord_len(u, cx, cy, r, y0, y1);
    adaptive(&f, lo, hi, 1e-13, simpson(&f, lo, hi), 48)
}

fn pt(x: f64, y: f64) -> UnitPoint {
    UnitPoint::new(x, y).unwrap()
}

#[test]
fn spec_case_matches_quadrature_to_1e9() {
    let disk = DiskRegion::new(pt(0.5, 0.5), 0.3).unwrap();
    let sq = DyadicSquare::new(1, 0, 0).unwrap(); // [0, 0.5)^2
    let closed_form = relative_area(&sq, &disk);
    let oracle = quadrature_area(&disk, 0.0, 0.5, 0.0, 0.5) / 0.25;
    assert!(
        (closed_form - oracle).abs() < 1e-9,
        "closed form {closed_form} vs quadrature {oracle}"
    );
}

#[test]
fn random_cases_match_quadrature() {
    let mut rng = hcg_core::rng::StreamRng::new(7071);
    let mut tested = 0;
    while tested < 60 {
        let r = 0.02 + 0.4 * rng.next_f64();
        let cx = r + (1.0 - 2.0 * r) * rng.next_f64();
        let cy = r + (1.0 - 2.0 * r) * rng.next_f64();
        let disk = match DiskRegion::new(pt(cx, cy), r) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let level = 1 + rng.next_below(5) as u8;
        let cells = 1u64 << level;
        let sq = DyadicSquare::new(
            level,
            rng.next_below(cells as usize) as u64,
            rng.next_below(cells as usize) as u64,
        )
        .unwrap();
        let (x0, x1, y0, y1) = sq.bounds();
        let closed_form = relative_area(&sq, &disk);
        let oracle = quadrature_area(&disk, x0, x1, y0, y1) / (sq.side() * sq.side());
        assert!(
            (closed_form - oracle).abs() < 1e-9,
            "square {sq:?}, disk ({cx}, {cy}, {r}): {closed_form} vs {oracle}"
        );
        tested += 1;
    }
}
