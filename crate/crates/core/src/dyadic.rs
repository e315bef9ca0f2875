//! Half-open dyadic cells, grid sets, dyadic intervals on the circle and
//! the multi-scale ladder.
//!
//! Everything here is exact integer arithmetic: a cell at level `k` is
//! `[ix/2^k, (ix+1)/2^k) x [iy/2^k, (iy+1)/2^k)` with integer `ix, iy`.
//! Repeated operations produce bit-identical results.

use crate::exact::{pow2, Scale};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("requested scale 2^{requested} is finer than the set resolution 2^-{resolution}")]
    ScaleTooFine { requested: i32, resolution: u32 },
    #[error("level mismatch: expected {expected}, got {got}")]
    LevelMismatch { expected: u32, got: u32 },
    #[error("resolution underflow: target level {target} is out of range")]
    ResolutionUnderflow { target: i64 },
    #[error("malformed input: {0}")]
    Parse(String),
}

/// A half-open dyadic square `[ix/2^k, (ix+1)/2^k) x [iy/2^k, (iy+1)/2^k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DyadicCell {
    pub level: u32,
    pub ix: i64,
    pub iy: i64,
}

/// An exact rational point of the plane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Point {
    pub x: BigRational,
    pub y: BigRational,
}

impl Point {
    pub fn new(x: BigRational, y: BigRational) -> Self {
        Point { x, y }
    }

    pub fn from_ints(x: i64, y: i64) -> Self {
        Point {
            x: BigRational::from_integer(BigInt::from(x)),
            y: BigRational::from_integer(BigInt::from(y)),
        }
    }

    /// The dyadic point `(nx, ny) / 2^k`.
    pub fn dyadic(nx: i64, ny: i64, k: u32) -> Self {
        let d = pow2(-(k as i64));
        Point {
            x: BigRational::from_integer(BigInt::from(nx)) * &d,
            y: BigRational::from_integer(BigInt::from(ny)) * d,
        }
    }

    pub fn dist_sq(&self, other: &Point) -> BigRational {
        let dx = &self.x - &other.x;
        let dy = &self.y - &other.y;
        &dx * &dx + &dy * &dy
    }
}

impl DyadicCell {
    pub fn new(level: u32, ix: i64, iy: i64) -> Self {
        DyadicCell { level, ix, iy }
    }

    pub fn side(&self) -> Scale {
        Scale::neg(self.level)
    }

    /// The ancestor at level `j <= level` (integer coordinates shifted down).
    pub fn ancestor(&self, j: i32) -> (i64, i64) {
        let shift = self.level as i64 - j as i64;
        debug_assert!(shift >= 0);
        (self.ix >> shift, self.iy >> shift)
    }

    /// Children at level `level + 1` in (x, y) lexicographic order.
    pub fn children(&self) -> [DyadicCell; 4] {
        let l = self.level + 1;
        let (x, y) = (self.ix << 1, self.iy << 1);
        [
            DyadicCell::new(l, x, y),
            DyadicCell::new(l, x, y + 1),
            DyadicCell::new(l, x + 1, y),
            DyadicCell::new(l, x + 1, y + 1),
        ]
    }

    pub fn center(&self) -> Point {
        Point::dyadic(2 * self.ix + 1, 2 * self.iy + 1, self.level + 1)
    }

    pub fn min_corner(&self) -> Point {
        Point::dyadic(self.ix, self.iy, self.level)
    }

    /// Squared Euclidean distance from `p` to the closure of the cell.
    /// Zero when `p` lies in the closed cell.
    pub fn dist_sq_to(&self, p: &Point) -> BigRational {
        let side = pow2(-(self.level as i64));
        let x0 = BigRational::from_integer(BigInt::from(self.ix)) * &side;
        let y0 = BigRational::from_integer(BigInt::from(self.iy)) * &side;
        let x1 = &x0 + &side;
        let y1 = &y0 + &side;
        let dx = axis_gap(&p.x, &x0, &x1);
        let dy = axis_gap(&p.y, &y0, &y1);
        &dx * &dx + &dy * &dy
    }

    /// Does the cell intersect the open ball `B(center, radius)`?
    ///
    /// The half-open cell is dense in its closure, so this holds exactly
    /// when the distance to the closed cell is `< radius`.
    pub fn meets_open_ball(&self, center: &Point, radius: &BigRational) -> bool {
        self.dist_sq_to(center) < radius * radius
    }

    /// Max squared distance from `p` to the closed cell (attained at a corner).
    pub fn max_dist_sq_to(&self, p: &Point) -> BigRational {
        let side = pow2(-(self.level as i64));
        let x0 = BigRational::from_integer(BigInt::from(self.ix)) * &side;
        let y0 = BigRational::from_integer(BigInt::from(self.iy)) * &side;
        let x1 = &x0 + &side;
        let y1 = &y0 + &side;
        let dx = max_abs(&(&p.x - &x0), &(&p.x - &x1));
        let dy = max_abs(&(&p.y - &y0), &(&p.y - &y1));
        &dx * &dx + &dy * &dy
    }
}

/// Andrew's monotone chain on integer points; collinear points dropped.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| -> i128 {
        let (ox, oy) = (o.0 as i128, o.1 as i128);
        (a.0 as i128 - ox) * (b.1 as i128 - oy) - (a.1 as i128 - oy) * (b.0 as i128 - ox)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn axis_gap(v: &BigRational, lo: &BigRational, hi: &BigRational) -> BigRational {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        BigRational::zero()
    }
}

fn max_abs(a: &BigRational, b: &BigRational) -> BigRational {
    let (a, b) = (a.abs(), b.abs());
    if a > b {
        a
    } else {
        b
    }
}

/// A finite union of half-open dyadic cells, all at one resolution level.
/// Cells are kept sorted and duplicate-free, so equality is structural.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSet {
    level: u32,
    cells: Vec<(i64, i64)>,
}

impl GridSet {
    pub fn new(level: u32, mut cells: Vec<(i64, i64)>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        GridSet { level, cells }
    }

    pub fn empty(level: u32) -> Self {
        GridSet {
            level,
            cells: Vec::new(),
        }
    }

    /// The full grid over `[0,1)^2` at the given level.
    pub fn unit_square(level: u32) -> Self {
        let n = 1i64 << level;
        let mut cells = Vec::with_capacity((n * n) as usize);
        for ix in 0..n {
            for iy in 0..n {
                cells.push((ix, iy));
            }
        }
        GridSet { level, cells }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = DyadicCell> + '_ {
        let level = self.level;
        self.cells
            .iter()
            .map(move |&(ix, iy)| DyadicCell::new(level, ix, iy))
    }

    pub fn coords(&self) -> &[(i64, i64)] {
        &self.cells
    }

    pub fn contains(&self, ix: i64, iy: i64) -> bool {
        self.cells.binary_search(&(ix, iy)).is_ok()
    }

    pub fn is_subset_of(&self, other: &GridSet) -> bool {
        self.level == other.level && self.cells.iter().all(|&(x, y)| other.contains(x, y))
    }

    pub fn intersection(&self, other: &GridSet) -> GridSet {
        assert_eq!(self.level, other.level);
        let cells = self
            .cells
            .iter()
            .copied()
            .filter(|&(x, y)| other.contains(x, y))
            .collect();
        GridSet {
            level: self.level,
            cells,
        }
    }

    pub fn union(&self, other: &GridSet) -> GridSet {
        assert_eq!(self.level, other.level);
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        GridSet::new(self.level, cells)
    }

    /// Ancestor cells at level `j <= level`, deduplicated. Idempotent:
    /// coarsening twice equals coarsening once to the coarser level.
    ///
    /// `j` may be negative (cells larger than the unit square).
    pub fn coarsen(&self, j: i32) -> Result<GridSet, GridError> {
        if j > self.level as i32 {
            return Err(GridError::ScaleTooFine {
                requested: -j,
                resolution: self.level,
            });
        }
        if j < 0 {
            // materialise at level 0 lattice shifted: represent coarse cells
            // with their own level; GridSet levels are unsigned, so coarse
            // counts below level 0 go through `covering_count` instead.
            return Err(GridError::ResolutionUnderflow { target: j as i64 });
        }
        let shift = self.level - j as u32;
        let mut cells: Vec<(i64, i64)> = self
            .cells
            .iter()
            .map(|&(x, y)| (x >> shift, y >> shift))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        Ok(GridSet {
            level: j as u32,
            cells,
        })
    }

    /// Dyadic covering number `|A|_r`: the number of level-`j` dyadic cells
    /// meeting the set, where `r = 2^-j` (exact ancestor count).
    pub fn covering_count(&self, r: Scale) -> Result<u64, GridError> {
        let j = r.level();
        if j > self.level as i32 {
            return Err(GridError::ScaleTooFine {
                requested: r.log2,
                resolution: self.level,
            });
        }
        let shift = (self.level as i64 - j as i64) as u32;
        let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
        for &(x, y) in &self.cells {
            seen.insert((x >> shift, y >> shift));
        }
        Ok(seen.len() as u64)
    }

    /// Refine every cell to its descendants at level `j >= level`.
    pub fn refine(&self, j: u32) -> GridSet {
        assert!(j >= self.level);
        let shift = j - self.level;
        let n = 1i64 << shift;
        let mut cells = Vec::with_capacity(self.cells.len() << (2 * shift));
        for &(x, y) in &self.cells {
            for dx in 0..n {
                for dy in 0..n {
                    cells.push(((x << shift) + dx, (y << shift) + dy));
                }
            }
        }
        GridSet { level: j, cells }
    }

    /// All cells at this resolution whose Euclidean distance to some cell of
    /// the set is `< radius`. Superset of the input.
    pub fn neighborhood(&self, radius: &BigRational) -> GridSet {
        if self.cells.is_empty() {
            return self.clone();
        }
        let side = pow2(-(self.level as i64));
        assert!(
            radius >= &side,
            "neighborhood radius must be at least one cell side"
        );
        // Offsets (dx, dy) such that a cell shifted by them is within
        // distance < radius: gap per axis is (|d|-1) * side when |d| >= 1.
        let reach = (radius / &side).ceil().to_integer();
        let reach: i64 = i64::try_from(reach).expect("neighborhood radius too large");
        let r_sq = radius * radius;
        let mut offsets: Vec<(i64, i64)> = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                let gx = (dx.abs() - 1).max(0);
                let gy = (dy.abs() - 1).max(0);
                let g = BigRational::from_integer(BigInt::from(gx * gx + gy * gy));
                if g * &side * &side < r_sq {
                    offsets.push((dx, dy));
                }
            }
        }
        let mut cells = Vec::with_capacity(self.cells.len() * offsets.len());
        for &(x, y) in &self.cells {
            for &(dx, dy) in &offsets {
                cells.push((x + dx, y + dy));
            }
        }
        GridSet::new(self.level, cells)
    }

    /// Translate by an integer multiple of the cell side.
    pub fn translate(&self, dx: i64, dy: i64) -> GridSet {
        GridSet {
            level: self.level,
            cells: self.cells.iter().map(|&(x, y)| (x + dx, y + dy)).collect(),
        }
    }

    /// Exact squared diameter of the union of closed cells: max pairwise
    /// corner-to-corner distance (rational, via integer corner coordinates).
    pub fn diameter_sq(&self) -> BigRational {
        if self.cells.is_empty() {
            return BigRational::zero();
        }
        let mut corners: Vec<(i64, i64)> = Vec::with_capacity(self.cells.len() * 4);
        for &(x, y) in &self.cells {
            corners.extend_from_slice(&[(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]);
        }
        let hull = convex_hull(corners);
        let mut best: i128 = 0;
        for (i, &(x1, y1)) in hull.iter().enumerate() {
            for &(x2, y2) in &hull[i + 1..] {
                let dx = (x1 - x2) as i128;
                let dy = (y1 - y2) as i128;
                best = best.max(dx * dx + dy * dy);
            }
        }
        let side = pow2(-(self.level as i64));
        BigRational::from_integer(BigInt::from(best)) * &side * &side
    }

    /// Serializes to the line-based text format: `level k` header, then one
    /// `ix iy` pair per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "level {}", self.level);
        for &(x, y) in &self.cells {
            let _ = writeln!(out, "{} {}", x, y);
        }
        out
    }

    pub fn from_text(s: &str) -> Result<GridSet, GridError> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GridError::Parse("empty input".into()))?;
        let level = header
            .trim()
            .strip_prefix("level")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| GridError::Parse(format!("bad header `{header}`")))?;
        let mut cells = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let ix = it
                .next()
                .and_then(|v| v.parse::<i64>().ok())
                .ok_or_else(|| GridError::Parse(format!("bad cell line `{line}`")))?;
            let iy = it
                .next()
                .and_then(|v| v.parse::<i64>().ok())
                .ok_or_else(|| GridError::Parse(format!("bad cell line `{line}`")))?;
            cells.push((ix, iy));
        }
        Ok(GridSet::new(level, cells))
    }

    /// Compact binary run-length format: groups consecutive `ix` runs per row.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut rows: Vec<(i64, i64, u64)> = Vec::new(); // (iy, ix0, len)
        let mut by_row: Vec<(i64, i64)> = self.cells.iter().map(|&(x, y)| (y, x)).collect();
        by_row.sort_unstable();
        let mut i = 0;
        while i < by_row.len() {
            let (y, x0) = by_row[i];
            let mut len = 1u64;
            while i + (len as usize) < by_row.len() {
                let (y2, x2) = by_row[i + len as usize];
                if y2 == y && x2 == x0 + len as i64 {
                    len += 1;
                } else {
                    break;
                }
            }
            rows.push((y, x0, len));
            i += len as usize;
        }
        let mut out = Vec::with_capacity(16 + rows.len() * 24);
        out.extend_from_slice(b"FGS1");
        out.extend_from_slice(&self.level.to_le_bytes());
        out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
        for (y, x0, len) in rows {
            out.extend_from_slice(&y.to_le_bytes());
            out.extend_from_slice(&x0.to_le_bytes());
            out.extend_from_slice(&len.to_le_bytes());
        }
        out
    }

    pub fn from_binary(data: &[u8]) -> Result<GridSet, GridError> {
        let fail = |m: &str| GridError::Parse(m.to_string());
        if data.len() < 16 || &data[0..4] != b"FGS1" {
            return Err(fail("bad magic"));
        }
        let level = u32::from_le_bytes(data[4..8].try_into().unwrap());
        let count = u64::from_le_bytes(data[8..16].try_into().unwrap()) as usize;
        if data.len() != 16 + count * 24 {
            return Err(fail("truncated run table"));
        }
        let mut cells = Vec::new();
        for i in 0..count {
            let off = 16 + i * 24;
            let y = i64::from_le_bytes(data[off..off + 8].try_into().unwrap());
            let x0 = i64::from_le_bytes(data[off + 8..off + 16].try_into().unwrap());
            let len = u64::from_le_bytes(data[off + 16..off + 24].try_into().unwrap());
            for d in 0..len as i64 {
                cells.push((x0 + d, y));
            }
        }
        Ok(GridSet::new(level, cells))
    }
}

/// All level-`k` cells intersecting the open ball `B(center, radius)`.
pub fn ball_cells(center: &Point, radius: &BigRational, level: u32) -> GridSet {
    assert!(radius.is_positive(), "ball radius must be positive");
    let side = pow2(-(level as i64));
    let lo_x = ((&center.x - radius) / &side).floor().to_integer();
    let hi_x = ((&center.x + radius) / &side).ceil().to_integer();
    let lo_y = ((&center.y - radius) / &side).floor().to_integer();
    let hi_y = ((&center.y + radius) / &side).ceil().to_integer();
    let (lo_x, hi_x) = (big_to_i64(&lo_x), big_to_i64(&hi_x));
    let (lo_y, hi_y) = (big_to_i64(&lo_y), big_to_i64(&hi_y));
    let mut cells = Vec::new();
    for ix in lo_x..=hi_x {
        for iy in lo_y..=hi_y {
            let cell = DyadicCell::new(level, ix, iy);
            if cell.meets_open_ball(center, radius) {
                cells.push((ix, iy));
            }
        }
    }
    GridSet::new(level, cells)
}

fn big_to_i64(v: &BigInt) -> i64 {
    i64::try_from(v.clone()).expect("coordinate out of i64 range")
}

/// Half-open dyadic interval `[i/2^k, (i+1)/2^k)` in `[0,1)`, the circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
}

impl DyadicInterval {
    pub fn new(level: u32, index: u64) -> Self {
        debug_assert!(index < (1u64 << level));
        DyadicInterval { level, index }
    }

    pub fn len(&self) -> Scale {
        Scale::neg(self.level)
    }

    pub fn left(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.index),
            BigInt::one() << self.level as usize,
        )
    }

    pub fn ancestor(&self, j: u32) -> DyadicInterval {
        debug_assert!(j <= self.level);
        DyadicInterval::new(j, self.index >> (self.level - j))
    }
}

/// Multi-scale frame: base `Delta = 2^-m`, depth `N`, so `delta = Delta^N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleLadder {
    pub m: u32,
    pub depth: u32,
}

impl ScaleLadder {
    pub fn new(m: u32, depth: u32) -> Self {
        assert!(m >= 1 && depth >= 1);
        assert!(m * depth <= 62, "ladder too deep for exact i64 coordinates");
        ScaleLadder { m, depth }
    }

    /// `Delta = 2^-m`
    pub fn base(&self) -> Scale {
        Scale::neg(self.m)
    }

    /// `Delta^j`
    pub fn scale(&self, j: u32) -> Scale {
        debug_assert!(j <= self.depth);
        Scale::neg(self.m * j)
    }

    /// `delta = Delta^N`
    pub fn finest(&self) -> Scale {
        self.scale(self.depth)
    }

    pub fn scales(&self) -> impl Iterator<Item = Scale> + '_ {
        (0..=self.depth).map(|j| self.scale(j))
    }
}
