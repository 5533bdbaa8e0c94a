//! The configuration Hamiltonian: every unordered pair contributes the
//! hierarchical distance between its points. An equivalent form sums
//! `C(count, 2)` over all occupied dyadic squares at all levels, since a
//! pair contributes one unit for each square containing both points.
//!
//! Energies are exact integers; the inverse temperature multiplies only at
//! exponentiation time.

use crate::error::{invalid, numeric};
use crate::geom::{hierarchical_distance, UnitPoint, MAX_LEVEL};
use crate::Result;
use alloc::vec::Vec;

/// Inverse temperature.
///
/// Zero is admitted as the interaction-free control case (independent
/// uniform points), used by validation paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beta(f64);

impl Beta {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(invalid!("inverse temperature must be finite and >= 0, got {value}"));
        }
        Ok(Beta(value))
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0
    }
}

/// An ordered list of distinct points of `[0,1)^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    points: Vec<UnitPoint>,
}

impl Configuration {
    /// Build a configuration, verifying pairwise distinctness.
    pub fn new(points: Vec<UnitPoint>) -> Result<Self> {
        let mut keys: Vec<(u64, u64)> = points
            .iter()
            .map(|p| (fixed(p.x()), fixed(p.y())))
            .collect();
        keys.sort_unstable();
        for w in keys.windows(2) {
            if w[0] == w[1] {
                return Err(numeric!("configuration has coincident points"));
            }
        }
        Ok(Configuration { points })
    }

    /// Build without the distinctness scan.
    ///
    /// Intended for sampler output, where coincidence is an almost-sure
    /// impossibility; energy evaluation still detects degenerate pairs.
    pub fn new_unchecked(points: Vec<UnitPoint>) -> Self {
        Configuration { points }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[UnitPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<UnitPoint> {
        self.points
    }
}

#[inline]
fn fixed(x: f64) -> u64 {
    (x * crate::geom::pow2(64)) as u64
}

/// Hamiltonian as the sum of hierarchical distances over unordered pairs.
/// Zero for fewer than two points.
pub fn pairwise_energy(c: &Configuration) -> Result<u64> {
    let pts = c.points();
    let mut total = 0u64;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            total += hierarchical_distance(&pts[i], &pts[j])? as u64;
        }
    }
    Ok(total)
}

/// Hamiltonian as `C(n,2)` plus the sum of `C(count,2)` over occupied
/// dyadic squares of every level, truncated at the first level where all
/// occupied squares hold at most one point.
///
/// Equals [`pairwise_energy`] exactly, in integer arithmetic.
pub fn dyadic_energy(c: &Configuration) -> Result<u64> {
    let keys: Vec<(u64, u64)> = c
        .points()
        .iter()
        .map(|p| (fixed(p.x()), fixed(p.y())))
        .collect();
    let mut scratch: Vec<(u64, u64)> = keys.clone();
    count_pairs_rec(&mut scratch, 0)
}

fn binom2(m: usize) -> u64 {
    let m = m as u64;
    m * (m.saturating_sub(1)) / 2
}

fn count_pairs_rec(group: &mut [(u64, u64)], level: u8) -> Result<u64> {
    if group.len() <= 1 {
        return Ok(0);
    }
    if level > MAX_LEVEL {
        return Err(numeric!(
            "degenerate configuration: points share dyadic cells beyond level {MAX_LEVEL}"
        ));
    }
    let mut total = binom2(group.len());
    if level == MAX_LEVEL {
        // Distinct fixed-point keys must have split by now.
        return Err(numeric!(
            "degenerate configuration: points share dyadic cells beyond level {MAX_LEVEL}"
        ));
    }
    // Partition by child index at this level: bit (63 - level) of each axis.
    let shift = 63 - level as u32;
    let child = |k: &(u64, u64)| -> usize {
        (((k.0 >> shift) & 1) + 2 * ((k.1 >> shift) & 1)) as usize
    };
    group.sort_unstable_by_key(child);
    let mut start = 0;
    while start < group.len() {
        let c = child(&group[start]);
        let mut end = start + 1;
        while end < group.len() && child(&group[end]) == c {
            end += 1;
        }
        total += count_pairs_rec(&mut group[start..end], level + 1)?;
        start = end;
    }
    Ok(total)
}
