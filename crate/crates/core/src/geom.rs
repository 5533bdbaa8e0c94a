//! Dyadic-square bookkeeping over the unit square, disk regions, square
//! classification against a disk, and exact circle/square overlap areas.
//!
//! Squares are half-open in both axes, `[ix*2^-k, (ix+1)*2^-k) x [iy*2^-k,
//! (iy+1)*2^-k)`, which makes square membership of a point unambiguous.

use crate::error::{invalid, numeric};
use crate::math;
use crate::Result;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Exact power of two as a float (`|k| < 1023`).
#[inline(always)]
pub(crate) fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((1023 + k) as u64) << 52)
}

/// Fixed-point image of a coordinate: `floor(x * 2^64)`, exact for
/// `x in [0, 1)`. Dyadic cell indices at every level `k <= 64` are
/// prefixes of this value.
#[inline(always)]
fn to_fixed(x: f64) -> u64 {
    (x * pow2(64)) as u64
}

/// Deepest level at which dyadic cell indices remain exact.
pub const MAX_LEVEL: u8 = 64;

/// A point of the half-open unit square `[0,1)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitPoint {
    x: f64,
    y: f64,
}

impl UnitPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
            return Err(invalid!("point ({x}, {y}) outside [0,1)^2"));
        }
        Ok(UnitPoint { x, y })
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn dist_sq(&self, other: &UnitPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// A node of the quadtree over `[0,1)^2`, identified by `(level, ix, iy)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DyadicSquare {
    level: u8,
    ix: u64,
    iy: u64,
}

impl DyadicSquare {
    pub const ROOT: DyadicSquare = DyadicSquare {
        level: 0,
        ix: 0,
        iy: 0,
    };

    pub fn new(level: u8, ix: u64, iy: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(invalid!("level {level} exceeds {MAX_LEVEL}"));
        }
        let cells = if level == 64 { u64::MAX } else { (1u64 << level) - 1 };
        if ix > cells || iy > cells {
            return Err(invalid!("cell ({ix}, {iy}) out of range at level {level}"));
        }
        Ok(DyadicSquare { level, ix, iy })
    }

    #[inline]
    pub fn level(&self) -> u8 {
        self.level
    }

    #[inline]
    pub fn ix(&self) -> u64 {
        self.ix
    }

    #[inline]
    pub fn iy(&self) -> u64 {
        self.iy
    }

    /// Side length `2^-level`.
    #[inline]
    pub fn side(&self) -> f64 {
        pow2(-(self.level as i32))
    }

    /// Closure bounds `(x0, x1, y0, y1)`. Exact for levels up to 52.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let s = self.side();
        let x0 = self.ix as f64 * s;
        let y0 = self.iy as f64 * s;
        (x0, x0 + s, y0, y0 + s)
    }

    pub fn parent(&self) -> Option<DyadicSquare> {
        if self.level == 0 {
            None
        } else {
            Some(DyadicSquare {
                level: self.level - 1,
                ix: self.ix >> 1,
                iy: self.iy >> 1,
            })
        }
    }

    /// The four children in fixed order `(dx, dy) = (0,0),(1,0),(0,1),(1,1)`.
    pub fn children(&self) -> [DyadicSquare; 4] {
        debug_assert!(self.level < MAX_LEVEL);
        let l = self.level + 1;
        let (ix, iy) = (self.ix << 1, self.iy << 1);
        [
            DyadicSquare { level: l, ix, iy },
            DyadicSquare { level: l, ix: ix + 1, iy },
            DyadicSquare { level: l, ix, iy: iy + 1 },
            DyadicSquare { level: l, ix: ix + 1, iy: iy + 1 },
        ]
    }

    /// Child index (0..4) of this square within its parent.
    #[inline]
    pub fn child_index(&self) -> usize {
        ((self.ix & 1) + 2 * (self.iy & 1)) as usize
    }

    #[inline]
    pub fn contains(&self, p: &UnitPoint) -> bool {
        enclosing_square(p, self.level) == *self
    }
}

/// The level-`k` dyadic square containing `p` under the half-open
/// convention.
#[inline]
pub fn enclosing_square(p: &UnitPoint, k: u8) -> DyadicSquare {
    debug_assert!(k <= MAX_LEVEL);
    let shift = 64 - k as u32;
    let ix = if k == 0 { 0 } else { to_fixed(p.x) >> shift };
    let iy = if k == 0 { 0 } else { to_fixed(p.y) >> shift };
    DyadicSquare { level: k, ix, iy }
}

/// The hierarchical potential: the minimal `k >= 1` such that `p` and `q`
/// lie in different level-`k` dyadic squares.
///
/// Errors with a degenerate-input condition when the points agree in every
/// cell down to level 64 (in particular when `p == q`); the continuous
/// model gives such pairs probability zero.
pub fn hierarchical_distance(p: &UnitPoint, q: &UnitPoint) -> Result<u32> {
    let dx = to_fixed(p.x) ^ to_fixed(q.x);
    let dy = to_fixed(p.y) ^ to_fixed(q.y);
    if dx == 0 && dy == 0 {
        return Err(numeric!(
            "degenerate pair: points coincide in all dyadic cells to level {MAX_LEVEL}"
        ));
    }
    let kx = if dx == 0 { u32::MAX } else { dx.leading_zeros() + 1 };
    let ky = if dy == 0 { u32::MAX } else { dy.leading_zeros() + 1 };
    Ok(kx.min(ky))
}

/// A closed disk contained in the unit square, with interior center.
#[derive(Clone, Copy, Debug)]
pub struct DiskRegion {
    center: UnitPoint,
    radius: f64,
}

impl DiskRegion {
    pub fn new(center: UnitPoint, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(invalid!("disk radius must be positive, got {radius}"));
        }
        let (cx, cy) = (center.x(), center.y());
        if cx - radius < 0.0 || cy - radius < 0.0 || cx + radius > 1.0 || cy + radius > 1.0 {
            return Err(invalid!(
                "disk of radius {radius} at ({cx}, {cy}) leaves the unit square"
            ));
        }
        Ok(DiskRegion { center, radius })
    }

    /// Disk of radius `big_r / sqrt(n)` around `z`, the natural microscopic
    /// window for an `n`-point gas.
    pub fn microscopic(z: UnitPoint, big_r: f64, n: u64) -> Result<Self> {
        if !(big_r > 0.0) || n == 0 {
            return Err(invalid!("need R > 0 and n > 0"));
        }
        DiskRegion::new(z, big_r / math::sqrt(n as f64))
    }

    #[inline]
    pub fn center(&self) -> UnitPoint {
        self.center
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    /// Closed-disk membership.
    #[inline]
    pub fn contains(&self, p: &UnitPoint) -> bool {
        p.dist_sq(&self.center) <= self.radius * self.radius
    }

    /// The comparable dyadic level: the unique `l >= 1` with
    /// `radius <= 2^-l < 2 * radius`.
    pub fn comparable_level(&self) -> u8 {
        let mut l = 0u8;
        while l < MAX_LEVEL && pow2(-(l as i32 + 1)) >= self.radius {
            l += 1;
        }
        l
    }
}

/// Classification of a dyadic square against a disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SquareClass {
    /// Contained in the disk, parent also contained.
    Interior,
    /// Contained in the disk, parent meets the complement.
    Maximal,
    /// Meets both the disk and its complement.
    Boundary,
    /// Disjoint from the disk.
    Exterior,
}

impl SquareClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SquareClass::Interior => "interior",
            SquareClass::Maximal => "maximal",
            SquareClass::Boundary => "boundary",
            SquareClass::Exterior => "exterior",
        }
    }
}

fn square_disk_relation(sq: &DyadicSquare, disk: &DiskRegion) -> (bool, bool) {
    let (x0, x1, y0, y1) = sq.bounds();
    let (cx, cy) = (disk.center.x(), disk.center.y());
    let r2 = disk.radius * disk.radius;
    let nx = cx.clamp(x0, x1) - cx;
    let ny = cy.clamp(y0, y1) - cy;
    let near2 = nx * nx + ny * ny;
    let fx = (cx - x0).max(x1 - cx);
    let fy = (cy - y0).max(y1 - cy);
    let far2 = fx * fx + fy * fy;
    (near2 <= r2, far2 <= r2)
}

/// Classify a square against a disk.
///
/// The level-0 square is never maximal (it has no parent); with disks
/// confined to the unit square it is always a boundary square.
pub fn classify_square(sq: &DyadicSquare, disk: &DiskRegion) -> SquareClass {
    let (meets, contained) = square_disk_relation(sq, disk);
    if !meets {
        return SquareClass::Exterior;
    }
    if !contained {
        return SquareClass::Boundary;
    }
    match sq.parent() {
        None => SquareClass::Boundary,
        Some(par) => {
            let (_, par_contained) = square_disk_relation(&par, disk);
            if par_contained {
                SquareClass::Interior
            } else {
                SquareClass::Maximal
            }
        }
    }
}

/// The maximal squares of each level up to `k`, and the boundary squares
/// of level `k`, for one disk.
///
/// Together these tile the disk: the union of maximal squares at levels
/// `<= k` plus the disk portions of the level-`k` boundary squares covers
/// it exactly, which is the decomposition behind the exposure martingale.
#[derive(Clone, Debug)]
pub struct DiskCover {
    /// `maximal[j]` holds the maximal squares of level `j`, `j = 0..=k`.
    pub maximal: Vec<Vec<DyadicSquare>>,
    /// Boundary squares of level `k`.
    pub boundary: Vec<DyadicSquare>,
}

/// Walk the quadtree down to level `k`, pruning exterior subtrees.
///
/// Only boundary squares are descended into: children of a contained
/// square are interior (never maximal), children of an exterior square
/// are exterior.
pub fn disk_cover(disk: &DiskRegion, k: u8) -> Result<DiskCover> {
    if k > MAX_LEVEL {
        return Err(invalid!("level {k} exceeds {MAX_LEVEL}"));
    }
    let mut maximal = vec![Vec::new(); k as usize + 1];
    let mut frontier = vec![DyadicSquare::ROOT];
    for _level in 0..k {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for sq in &frontier {
            for child in sq.children() {
                let (meets, contained) = square_disk_relation(&child, disk);
                if !meets {
                    continue;
                }
                if contained {
                    // Parent is a boundary square, so the child is maximal.
                    maximal[child.level() as usize].push(child);
                } else {
                    next.push(child);
                }
            }
        }
        frontier = next;
    }
    Ok(DiskCover {
        maximal,
        boundary: frontier,
    })
}

/// The maximal and boundary squares of order `k` for a disk.
pub fn squares_by_class(disk: &DiskRegion, k: u8) -> Result<(Vec<DyadicSquare>, Vec<DyadicSquare>)> {
    let mut cover = disk_cover(disk, k)?;
    let top = cover.maximal.pop().unwrap_or_default();
    Ok((top, cover.boundary))
}

// --- exact circle/rectangle overlap ---------------------------------------

#[inline]
fn clamp_unit(t: f64) -> f64 {
    t.clamp(-1.0, 1.0)
}

/// Antiderivative of the half-chord: integral of sqrt(r^2 - u^2) du.
#[inline]
fn half_chord_primitive(z: f64, r: f64) -> f64 {
    let zz = z.clamp(-r, r);
    let h = math::sqrt((r * r - zz * zz).max(0.0));
    0.5 * (zz * h + r * r * math::asin(clamp_unit(zz / r)))
}

/// Area of `disk(0, r)` to the left of `x`: integral of the full chord.
#[inline]
fn left_slab_area(x: f64, r: f64) -> f64 {
    if x <= -r {
        return 0.0;
    }
    if x >= r {
        return PI * r * r;
    }
    let h = math::sqrt((r * r - x * x).max(0.0));
    x * h + r * r * (math::asin(clamp_unit(x / r)) + PI / 2.0)
}

/// Area of the set `{u <= x, v <= y}` inside `disk(0, r)`.
///
/// Closed form assembled from circular-segment primitives; all cases are
/// continuous across their boundaries.
fn southwest_area(x: f64, y: f64, r: f64) -> f64 {
    if x <= -r || y <= -r {
        return 0.0;
    }
    if x >= r && y >= r {
        return PI * r * r;
    }
    if y >= r {
        return left_slab_area(x, r);
    }
    if x >= r {
        return left_slab_area(y, r);
    }
    // Both cut lines cross the disk: integrate the chord height
    // min(y, h(u)) + h(u) over u in [-r, x], where h(u) = sqrt(r^2-u^2).
    let uy = math::sqrt((r * r - y * y).max(0.0));
    if y >= 0.0 {
        // Chord top is h(u) for |u| >= uy and y inside [-uy, uy].
        let mut area = left_slab_area(x.min(-uy), r);
        if x > -uy {
            let hi = x.min(uy);
            area += y * (hi + uy) + half_chord_primitive(hi, r) - half_chord_primitive(-uy, r);
        }
        if x > uy {
            area += left_slab_area(x, r) - left_slab_area(uy, r);
        }
        area
    } else {
        // Chord is nonempty only for |u| < uy.
        if x <= -uy {
            0.0
        } else {
            let hi = x.min(uy);
            y * (hi + uy) + half_chord_primitive(hi, r) - half_chord_primitive(-uy, r)
        }
    }
}

/// Lebesgue area of the intersection of a disk with an axis-aligned
/// rectangle, in closed form.
pub fn disk_rect_area(disk: &DiskRegion, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    debug_assert!(x0 <= x1 && y0 <= y1);
    let (cx, cy) = (disk.center.x(), disk.center.y());
    let r = disk.radius;
    let a = southwest_area(x1 - cx, y1 - cy, r) - southwest_area(x0 - cx, y1 - cy, r)
        - southwest_area(x1 - cx, y0 - cy, r)
        + southwest_area(x0 - cx, y0 - cy, r);
    a.max(0.0)
}

/// The relative area `Leb(D cap Q) / Leb(Q)` of a disk inside a dyadic
/// square, computed exactly by segment decomposition.
pub fn relative_area(sq: &DyadicSquare, disk: &DiskRegion) -> f64 {
    let (x0, x1, y0, y1) = sq.bounds();
    let s = sq.side();
    (disk_rect_area(disk, x0, x1, y0, y1) / (s * s)).clamp(0.0, 1.0)
}

/// A boundary square is "good" when the disk covers neither almost none
/// nor almost all of it.
pub fn is_good_boundary(sq: &DyadicSquare, disk: &DiskRegion) -> bool {
    let p = relative_area(sq, disk);
    (1e-5..=1.0 - 1e-5).contains(&p)
}
