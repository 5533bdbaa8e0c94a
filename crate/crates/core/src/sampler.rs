//! Exact sampling of gas configurations by recursive application of the
//! split law down the dyadic tree.
//!
//! Conditional on the counts at one level, the four child counts of every
//! occupied square are drawn independently from the split law of that
//! square's count, and a square holding a single point receives it
//! uniformly. Every draw consumes a stream derived from `(seed, node
//! path)`, so a sample is a pure function of `(seed, spec)` independent of
//! traversal order or parallel scheduling.

use crate::energy::Configuration;
use crate::error::{invalid, numeric};
use crate::geom::{DyadicSquare, UnitPoint, MAX_LEVEL};
use crate::partition::PartitionTable;
use crate::rng::{self, derive, mix64, salt, StreamRng};
use crate::Result;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// Parameters of one exact draw.
#[derive(Clone, Copy, Debug)]
pub struct SamplerSpec {
    pub n: u32,
    pub seed: u64,
    /// Recursion cap; reaching it with two or more points in one square
    /// is an error (it signals stream misuse, not a plausible sample).
    pub max_depth: u8,
}

impl SamplerSpec {
    pub fn new(n: u32, seed: u64) -> Self {
        SamplerSpec {
            n,
            seed,
            max_depth: MAX_LEVEL,
        }
    }
}

/// Occupation counts of every visited square, down to the depth where all
/// counts are at most one.
///
/// Squares with zero points are not stored; a stored count of one is a
/// leaf holding exactly one point.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountTree {
    nodes: BTreeMap<DyadicSquare, u32>,
}

impl CountTree {
    pub fn count(&self, sq: &DyadicSquare) -> u32 {
        self.nodes.get(sq).copied().unwrap_or(0)
    }

    pub fn root_count(&self) -> u32 {
        self.count(&DyadicSquare::ROOT)
    }

    /// All `(square, count)` pairs ordered by `(level, ix, iy)`.
    pub fn nodes(&self) -> impl Iterator<Item = (&DyadicSquare, &u32)> {
        self.nodes.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Stream key of a node, derived by hashing the child indices along the
/// path from the root. Depends only on `(seed, square)`.
fn node_key(seed: u64, sq: &DyadicSquare) -> u64 {
    let mut key = derive(mix64(seed), salt::TREE);
    for step in (0..sq.level()).rev() {
        let dx = (sq.ix() >> step) & 1;
        let dy = (sq.iy() >> step) & 1;
        key = derive(key, 1 + dx + 2 * dy);
    }
    key
}

/// Draw the count tree of an `n`-point configuration.
pub fn sample_count_tree(table: &PartitionTable, spec: &SamplerSpec) -> Result<CountTree> {
    check_spec(table, spec)?;
    let mut tree = CountTree::default();
    if spec.n == 0 {
        return Ok(tree);
    }
    tree.nodes.insert(DyadicSquare::ROOT, spec.n);
    let root_key = derive(mix64(spec.seed), salt::TREE);
    let mut stack: Vec<(DyadicSquare, u32, u64)> = Vec::new();
    if spec.n >= 2 {
        stack.push((DyadicSquare::ROOT, spec.n, root_key));
    }
    while let Some((sq, count, key)) = stack.pop() {
        if sq.level() >= spec.max_depth {
            return Err(numeric!(
                "count {count} persists at depth cap {}; astronomically unlikely under \
                 correct streams",
                spec.max_depth
            ));
        }
        let law = table.split_law(count)?;
        let mut split_rng = StreamRng::new(derive(key, salt::SPLIT));
        let parts = law.sample(&mut split_rng).parts();
        for (idx, child) in sq.children().into_iter().enumerate() {
            let c = parts[idx];
            if c == 0 {
                continue;
            }
            tree.nodes.insert(child, c);
            if c >= 2 {
                stack.push((child, c, derive(key, 1 + idx as u64)));
            }
        }
    }
    Ok(tree)
}

/// Place one uniform point in each singleton leaf of the tree and emit the
/// points in a uniformly random order.
pub fn realize_points(tree: &CountTree, spec: &SamplerSpec) -> Configuration {
    let mut points = Vec::with_capacity(tree.root_count() as usize);
    if tree.root_count() > 0 {
        // Depth-first replay in fixed child order, mirroring the direct
        // sampling path so both produce identical output.
        let mut stack: Vec<DyadicSquare> = Vec::new();
        stack.push(DyadicSquare::ROOT);
        while let Some(sq) = stack.pop() {
            let count = tree.count(&sq);
            if count == 1 {
                points.push(place_point(spec.seed, &sq));
            } else if count >= 2 {
                // Children pushed in reverse so they pop in fixed order.
                for child in sq.children().into_iter().rev() {
                    if tree.count(&child) > 0 {
                        stack.push(child);
                    }
                }
            }
        }
    }
    let mut perm_rng = StreamRng::new(derive(mix64(spec.seed), salt::PERMUTE));
    perm_rng.shuffle(&mut points);
    Configuration::new_unchecked(points)
}

pub(crate) fn place_point(seed: u64, sq: &DyadicSquare) -> UnitPoint {
    let mut rng = StreamRng::new(derive(node_key(seed, sq), salt::PLACE));
    let side = sq.side();
    let x = (sq.ix() as f64 + rng.next_f64()) * side;
    let y = (sq.iy() as f64 + rng.next_f64()) * side;
    UnitPoint::new(x, y).expect("leaf placement stays inside the unit square")
}

/// Draw a full configuration: count tree plus uniform placements, without
/// materializing the tree.
pub fn sample_configuration(table: &PartitionTable, spec: &SamplerSpec) -> Result<Configuration> {
    check_spec(table, spec)?;
    let mut points = Vec::with_capacity(spec.n as usize);
    if spec.n > 0 {
        let root_key = derive(mix64(spec.seed), salt::TREE);
        descend(
            table,
            spec,
            DyadicSquare::ROOT,
            spec.n,
            root_key,
            &mut points,
        )?;
    }
    let mut perm_rng = StreamRng::new(derive(mix64(spec.seed), salt::PERMUTE));
    perm_rng.shuffle(&mut points);
    Ok(Configuration::new_unchecked(points))
}

fn descend(
    table: &PartitionTable,
    spec: &SamplerSpec,
    sq: DyadicSquare,
    count: u32,
    key: u64,
    out: &mut Vec<UnitPoint>,
) -> Result<()> {
    if count == 1 {
        out.push(place_point(spec.seed, &sq));
        return Ok(());
    }
    if sq.level() >= spec.max_depth {
        return Err(numeric!(
            "count {count} persists at depth cap {}; astronomically unlikely under \
             correct streams",
            spec.max_depth
        ));
    }
    let law = table.split_law(count)?;
    let mut split_rng = StreamRng::new(derive(key, salt::SPLIT));
    let parts = law.sample(&mut split_rng).parts();
    for (idx, child) in sq.children().into_iter().enumerate() {
        let c = parts[idx];
        if c > 0 {
            descend(table, spec, child, c, derive(key, 1 + idx as u64), out)?;
        }
    }
    Ok(())
}

/// Convenience wrapper drawing the points of replica `idx` of a run.
pub fn sample_replica_points(
    table: &PartitionTable,
    n: u32,
    base_seed: u64,
    idx: u64,
) -> Result<Vec<UnitPoint>> {
    let spec = SamplerSpec::new(n, rng::replica_key(base_seed, idx));
    Ok(sample_configuration(table, &spec)?.into_points())
}

/// Resample everything below a fixed frontier of `(square, count)` pairs,
/// i.e. draw from the conditional law given those counts.
///
/// Each frontier square receives an independent scaled copy of the gas
/// with its count; streams are salted so repeated calls with different
/// `(seed, round)` give independent interiors.
pub fn resample_below(
    table: &PartitionTable,
    frontier: &[(DyadicSquare, u32)],
    seed: u64,
    round: u64,
) -> Result<Vec<UnitPoint>> {
    let master = derive(derive(mix64(seed), salt::RESAMPLE), round);
    let total: u64 = frontier.iter().map(|&(_, c)| c as u64).sum();
    let mut points = Vec::with_capacity(total as usize);
    for (sq, count) in frontier {
        if *count == 0 {
            continue;
        }
        let key = derive(master, node_path_label(sq));
        let spec = SamplerSpec {
            n: *count,
            seed: 0, // unused on this path
            max_depth: MAX_LEVEL,
        };
        descend_with_placement_key(table, &spec, *sq, *count, key, &mut points)?;
    }
    Ok(points)
}

fn node_path_label(sq: &DyadicSquare) -> u64 {
    let mut label = 0xA5u64;
    for step in (0..sq.level()).rev() {
        let dx = (sq.ix() >> step) & 1;
        let dy = (sq.iy() >> step) & 1;
        label = derive(label, 1 + dx + 2 * dy);
    }
    label
}

fn descend_with_placement_key(
    table: &PartitionTable,
    spec: &SamplerSpec,
    sq: DyadicSquare,
    count: u32,
    key: u64,
    out: &mut Vec<UnitPoint>,
) -> Result<()> {
    if count == 1 {
        let mut rng = StreamRng::new(derive(key, salt::PLACE));
        let side = sq.side();
        let x = (sq.ix() as f64 + rng.next_f64()) * side;
        let y = (sq.iy() as f64 + rng.next_f64()) * side;
        out.push(UnitPoint::new(x, y).expect("leaf placement inside unit square"));
        return Ok(());
    }
    if sq.level() >= spec.max_depth {
        return Err(numeric!("count {count} persists at depth cap {}", spec.max_depth));
    }
    let law = table.split_law(count)?;
    let mut split_rng = StreamRng::new(derive(key, salt::SPLIT));
    let parts = law.sample(&mut split_rng).parts();
    for (idx, child) in sq.children().into_iter().enumerate() {
        let c = parts[idx];
        if c > 0 {
            descend_with_placement_key(table, spec, child, c, derive(key, 1 + idx as u64), out)?;
        }
    }
    Ok(())
}

fn check_spec(table: &PartitionTable, spec: &SamplerSpec) -> Result<()> {
    if spec.n as usize > table.n_max() {
        return Err(invalid!(
            "n = {} exceeds the partition table range {}",
            spec.n,
            table.n_max()
        ));
    }
    if spec.max_depth > MAX_LEVEL {
        return Err(invalid!("max_depth {} exceeds {MAX_LEVEL}", spec.max_depth));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Beta;
    use crate::geom::enclosing_square;
    use crate::math;

    fn table(beta: f64, n_max: usize) -> PartitionTable {
        PartitionTable::build(Beta::new(beta).unwrap(), n_max).unwrap()
    }

    #[test]
    fn empty_and_singleton_trees() {
        let t = table(1.0, 8);
        let tree = sample_count_tree(&t, &SamplerSpec::new(0, 1)).unwrap();
        assert!(tree.is_empty());
        let tree = sample_count_tree(&t, &SamplerSpec::new(1, 1)).unwrap();
        assert_eq!(tree.root_count(), 1);
        assert_eq!(tree.len(), 1);
    }

    #[test]
    fn tree_counts_are_consistent() {
        let t = table(1.0, 64);
        for seed in 0..20u64 {
            let tree = sample_count_tree(&t, &SamplerSpec::new(64, seed)).unwrap();
            for (sq, &count) in tree.nodes() {
                if count >= 2 {
                    let child_sum: u32 = sq.children().iter().map(|c| tree.count(c)).sum();
                    assert_eq!(child_sum, count, "node {sq:?}");
                }
            }
        }
    }

    #[test]
    fn realize_matches_direct_path() {
        let t = table(1.0, 64);
        for seed in [3u64, 17, 255] {
            let spec = SamplerSpec::new(48, seed);
            let tree = sample_count_tree(&t, &spec).unwrap();
            let via_tree = realize_points(&tree, &spec);
            let direct = sample_configuration(&t, &spec).unwrap();
            assert_eq!(via_tree.points(), direct.points());
        }
    }

    #[test]
    fn every_point_lies_in_its_leaf() {
        let t = table(2.0, 32);
        let spec = SamplerSpec::new(32, 5);
        let tree = sample_count_tree(&t, &spec).unwrap();
        let config = realize_points(&tree, &spec);
        assert_eq!(config.len(), 32);
        for (sq, &count) in tree.nodes() {
            let inside = config.points().iter().filter(|p| sq.contains(p)).count();
            assert_eq!(inside as u32, count, "square {sq:?}");
        }
    }

    #[test]
    fn replay_is_bit_exact_and_seeds_differ() {
        let t = table(1.0, 32);
        let a = sample_configuration(&t, &SamplerSpec::new(20, 42)).unwrap();
        let b = sample_configuration(&t, &SamplerSpec::new(20, 42)).unwrap();
        assert_eq!(a.points(), b.points());
        let c = sample_configuration(&t, &SamplerSpec::new(20, 43)).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn shared_quadrant_frequency_n2() {
        // P[both points share a level-1 quadrant] = 4 * e^-beta / 16.
        let t = table(1.0, 4);
        let k = 100_000u64;
        let mut hits = 0u64;
        for idx in 0..k {
            let pts = sample_replica_points(&t, 2, 7, idx).unwrap();
            if enclosing_square(&pts[0], 1) == enclosing_square(&pts[1], 1) {
                hits += 1;
            }
        }
        let p = math::exp(-1.0) / 4.0;
        let freq = hits as f64 / k as f64;
        let se = math::sqrt(p * (1.0 - p) / k as f64);
        assert!((freq - p).abs() < 4.0 * se, "freq {freq} vs {p}");
    }

    #[test]
    fn singleton_mean_position_is_centered() {
        let t = table(1.0, 2);
        let k = 100_000u64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for idx in 0..k {
            let pts = sample_replica_points(&t, 1, 11, idx).unwrap();
            sx += pts[0].x();
            sy += pts[0].y();
        }
        let se = 4.0 * math::sqrt(1.0 / 12.0 / k as f64);
        assert!((sx / k as f64 - 0.5).abs() < se);
        assert!((sy / k as f64 - 0.5).abs() < se);
    }

    #[test]
    fn rectangle_counts_have_lebesgue_mean() {
        // E[count in U] = n * Leb(U) for U = [0, 0.3) x [0, 0.7).
        let t = table(1.0, 32);
        let n = 32u32;
        let k = 100_000u64;
        let mut total = 0u64;
        for idx in 0..k {
            let pts = sample_replica_points(&t, n, 13, idx).unwrap();
            total += pts.iter().filter(|p| p.x() < 0.3 && p.y() < 0.7).count() as u64;
        }
        let mean = total as f64 / k as f64;
        let expect = n as f64 * 0.21;
        // Counts are in [0, n]; their variance is at most binomial-like.
        let se_bound = math::sqrt(n as f64 * 0.21 * 0.79 / k as f64);
        assert!(
            (mean - expect).abs() < 4.0 * se_bound,
            "mean {mean} vs {expect}"
        );
    }

    #[test]
    fn level1_splits_match_exact_law_chi_square() {
        let t = table(2.0, 8);
        let n = 3u32;
        let k = 100_000usize;
        let mut cells: alloc::vec::Vec<(crate::partition::SplitCounts, f64)> = alloc::vec::Vec::new();
        crate::partition::for_each_composition(n, |c| {
            let p = t.log_split_prob(n, &c).unwrap().to_f64();
            cells.push((c, p));
        });
        let mut observed = alloc::vec![0.0f64; cells.len()];
        for idx in 0..k as u64 {
            let pts = sample_replica_points(&t, n, 23, idx).unwrap();
            let mut counts = [0u32; 4];
            for p in &pts {
                let sq = enclosing_square(p, 1);
                counts[(sq.ix() + 2 * sq.iy()) as usize] += 1;
            }
            let pos = cells
                .iter()
                .position(|(c, _)| c.parts() == counts)
                .expect("observed split in support");
            observed[pos] += 1.0;
        }
        let expected: alloc::vec::Vec<f64> = cells.iter().map(|(_, p)| p * k as f64).collect();
        let (_, _, p_value) = crate::numeric::chi_square_gof(&observed, &expected, 5.0);
        assert!(p_value > 1e-3, "chi-square rejected: p = {p_value}");
    }

    #[test]
    fn overcrowding_path_probability() {
        // P[both points land in one fixed level-2 square] over two split
        // levels is (e^-beta / 16)^2.
        let t = table(1.0, 4);
        let target = DyadicSquare::new(2, 0, 0).unwrap();
        let k = 10_000_000u64;
        let mut hits = 0u64;
        for idx in 0..k {
            let spec = SamplerSpec::new(2, crate::rng::replica_key(29, idx));
            let tree = sample_count_tree(&t, &spec).unwrap();
            if tree.count(&target) == 2 {
                hits += 1;
            }
        }
        let p = math::exp(-2.0) / 256.0;
        let freq = hits as f64 / k as f64;
        let se = math::sqrt(p * (1.0 - p) / k as f64);
        assert!((freq - p).abs() < 4.0 * se, "freq {freq} vs {p}");
    }

    #[test]
    fn resample_below_preserves_frontier_counts() {
        let t = table(1.0, 64);
        let spec = SamplerSpec::new(64, 99);
        let config = sample_configuration(&t, &spec).unwrap();
        let k = 2u8;
        let mut frontier: BTreeMap<DyadicSquare, u32> = BTreeMap::new();
        for p in config.points() {
            *frontier.entry(enclosing_square(p, k)).or_insert(0) += 1;
        }
        let frontier: Vec<(DyadicSquare, u32)> = frontier.into_iter().collect();
        for round in 0..5u64 {
            let pts = resample_below(&t, &frontier, 7, round).unwrap();
            assert_eq!(pts.len(), 64);
            for (sq, count) in &frontier {
                let inside = pts.iter().filter(|p| sq.contains(p)).count();
                assert_eq!(inside as u32, *count);
            }
        }
    }

    #[test]
    fn n_exceeding_table_is_rejected() {
        let t = table(1.0, 8);
        assert!(sample_configuration(&t, &SamplerSpec::new(9, 1)).is_err());
    }

    #[test]
    fn depth_cap_reached_is_an_error() {
        let t = table(1.0, 32);
        // With the cap at level 1, any seed whose level-1 split leaves two
        // points together must error.
        let mut spec = SamplerSpec::new(32, 0);
        spec.max_depth = 1;
        let hit_error = (0..20u64).any(|seed| {
            spec.seed = seed;
            matches!(
                sample_count_tree(&t, &spec),
                Err(crate::Error::Numeric(_))
            )
        });
        assert!(hit_error, "32 points virtually always share a quadrant");
    }
}
