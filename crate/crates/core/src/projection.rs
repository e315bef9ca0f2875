//! Discretised orthogonal projections: covering numbers of projected sets,
//! tube decompositions, and the greedy minimal-cover oracle for worst-case
//! subsets of a given mass.

use crate::dyadic::{DyadicCell, GridSet};
use crate::exact::{pow2, Scale};
use crate::measure::GridMeasure;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("mass threshold {0} exceeds the total mass {1}")]
    ThresholdTooLarge(String, String),
    #[error("negative mass threshold")]
    NegativeThreshold,
}

/// A projection direction with an exact rational fiber family.
///
/// `Slope(t)` is `pi(x, y) = x + t*y` (the slope form, `t` in `[0,1]` for
/// the standard experiments); `CoSlope(t)` is `pi(x, y) = t*x + y`, which
/// covers steep directions (e.g. `CoSlope(0)` projects to the y-coordinate)
/// so fibers stay exact rational lines in every regime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    Slope(BigRational),
    CoSlope(BigRational),
}

impl Direction {
    pub fn slope_int(p: i64, q: i64) -> Self {
        Direction::Slope(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    /// Linear form coefficients `(a, b)`: the projection is `a*x + b*y`.
    pub fn coefficients(&self) -> (BigRational, BigRational) {
        match self {
            Direction::Slope(t) => (BigRational::one(), t.clone()),
            Direction::CoSlope(t) => (t.clone(), BigRational::one()),
        }
    }

    pub fn project(&self, x: &BigRational, y: &BigRational) -> BigRational {
        let (a, b) = self.coefficients();
        a * x + b * y
    }

    /// Unit vector of the projection direction (floating point view).
    pub fn unit_vector(&self) -> (f64, f64) {
        let (a, b) = self.coefficients();
        let (a, b) = (
            crate::exact::rational_to_f64(&a),
            crate::exact::rational_to_f64(&b),
        );
        let n = (a * a + b * b).sqrt();
        (a / n, b / n)
    }

    /// The projection hull of the closed cell: `[min, max]` over the four
    /// corners. With non-negative coefficients the extremes sit at the
    /// min and max corners.
    pub fn cell_hull(&self, cell: &DyadicCell) -> (BigRational, BigRational) {
        let side = pow2(-(cell.level as i64));
        let x0 = BigRational::from_integer(BigInt::from(cell.ix)) * &side;
        let y0 = BigRational::from_integer(BigInt::from(cell.iy)) * &side;
        let x1 = &x0 + &side;
        let y1 = &y0 + &side;
        let (a, b) = self.coefficients();
        let (xa, xb) = if a.is_negative() {
            (x1.clone(), x0.clone())
        } else {
            (x0.clone(), x1.clone())
        };
        let (ya, yb) = if b.is_negative() {
            (y1.clone(), y0.clone())
        } else {
            (y0.clone(), y1.clone())
        };
        (&a * &xa + &b * &ya, &a * &xb + &b * &yb)
    }

    /// Projection of the cell's reference (min) corner.
    pub fn reference_value(&self, cell: &DyadicCell) -> BigRational {
        let side = pow2(-(cell.level as i64));
        let x0 = BigRational::from_integer(BigInt::from(cell.ix)) * &side;
        let y0 = BigRational::from_integer(BigInt::from(cell.iy)) * &side;
        let (a, b) = self.coefficients();
        a * x0 + b * y0
    }

    /// Does the half-open cell meet the fiber line `{z : pi(z) = t}`?
    ///
    /// Exact: the values of `pi` over the half-open cell form the half-open
    /// interval between the min- and max-corner values (non-negative
    /// coefficients).
    pub fn cell_meets_fiber(&self, cell: &DyadicCell, t: &BigRational) -> bool {
        let (lo, hi) = self.half_open_range(cell);
        &lo <= t && t < &hi
    }

    fn half_open_range(&self, cell: &DyadicCell) -> (BigRational, BigRational) {
        let side = pow2(-(cell.level as i64));
        let x0 = BigRational::from_integer(BigInt::from(cell.ix)) * &side;
        let y0 = BigRational::from_integer(BigInt::from(cell.iy)) * &side;
        let x1 = &x0 + &side;
        let y1 = &y0 + &side;
        let (a, b) = self.coefficients();
        assert!(
            !a.is_negative() && !b.is_negative(),
            "fiber tests assume non-negative projection coefficients"
        );
        (&a * &x0 + &b * &y0, &a * &x1 + &b * &y1)
    }
}

impl FromStr for Direction {
    type Err = String;

    /// `p/q` or a decimal slope; prefix `y:` selects the co-slope form.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("y:") {
            return Ok(Direction::CoSlope(crate::exact::parse_rational(rest)?));
        }
        Ok(Direction::Slope(crate::exact::parse_rational(s)?))
    }
}

/// Number of dyadic `r`-intervals meeting the projection of the set.
///
/// The image of a half-open cell under a non-negative linear form is the
/// half-open interval between its min- and max-corner values, so counting
/// `[lo, hi)` keeps the slope-0 product factorisation exact.
pub fn project_cover(set: &GridSet, dir: &Direction, r: Scale) -> u64 {
    let rv = r.value();
    let mut indices: Vec<i64> = Vec::new();
    for cell in set.cells() {
        let (lo, hi) = dir.cell_hull(&cell);
        let lo_idx = (&lo / &rv).floor().to_integer();
        let hi_scaled = &hi / &rv;
        let hi_idx = if hi_scaled.is_integer() {
            hi_scaled.to_integer() - num::bigint::BigInt::one()
        } else {
            hi_scaled.floor().to_integer()
        };
        let lo_idx = i64::try_from(lo_idx).expect("projection index overflow");
        let hi_idx = i64::try_from(hi_idx).expect("projection index overflow");
        indices.extend(lo_idx..=hi_idx);
    }
    indices.sort_unstable();
    indices.dedup();
    indices.len() as u64
}

/// One tube of a [`TubeDecomposition`]: the preimage of one dyadic interval.
#[derive(Clone, Debug)]
pub struct Tube {
    /// index `i` of the interval `[i*w, (i+1)*w)`
    pub index: i64,
    /// member cells (assigned by reference corner)
    pub cells: Vec<(i64, i64)>,
    pub mass: BigRational,
}

/// Partition of a measure's support into width-`w` tubes perpendicular to
/// a direction; masses are conserved exactly.
#[derive(Clone, Debug)]
pub struct TubeDecomposition {
    pub dir: Direction,
    pub width: Scale,
    pub tubes: Vec<Tube>,
}

impl TubeDecomposition {
    pub fn total_mass(&self) -> BigRational {
        self.tubes.iter().map(|t| &t.mass).sum()
    }

    pub fn tube_of(&self, index: i64) -> Option<&Tube> {
        self.tubes.iter().find(|t| t.index == index)
    }
}

/// Partitions the support cells by the dyadic `w`-interval containing the
/// projection of each cell's reference (min) corner.
pub fn tube_decompose(mu: &GridMeasure, dir: &Direction, w: Scale) -> TubeDecomposition {
    let wv = w.value();
    let mut buckets: BTreeMap<i64, (Vec<(i64, i64)>, BigRational)> = BTreeMap::new();
    for (cell, weight) in mu.iter() {
        let t = dir.reference_value(&cell);
        let idx = i64::try_from((t / &wv).floor().to_integer()).expect("tube index overflow");
        let entry = buckets
            .entry(idx)
            .or_insert_with(|| (Vec::new(), BigRational::zero()));
        entry.0.push((cell.ix, cell.iy));
        entry.1 += weight;
    }
    let tubes = buckets
        .into_iter()
        .map(|(index, (cells, mass))| Tube { index, cells, mass })
        .collect();
    TubeDecomposition {
        dir: dir.clone(),
        width: w,
        tubes,
    }
}

/// Result of the greedy minimal-cover computation.
#[derive(Clone, Debug)]
pub struct MinCover {
    pub count: u64,
    pub witness: Vec<i64>,
    pub mass_covered: BigRational,
}

/// The minimal number of width-`w` tubes whose union carries mass `>= m`,
/// together with the witness tubes (heaviest first, ties by lowest index).
///
/// Under the tube discretisation this equals
/// `min { |pi(F)|_w : F subset of support, mu(F) >= m }`:
/// any `F` meeting `j` tubes has mass at most the sum of the `j` heaviest.
pub fn greedy_min_cover(
    mu: &GridMeasure,
    dir: &Direction,
    w: Scale,
    m: &BigRational,
) -> Result<(MinCover, TubeDecomposition), ProjectionError> {
    if m.is_negative() {
        return Err(ProjectionError::NegativeThreshold);
    }
    let decomp = tube_decompose(mu, dir, w);
    let total = decomp.total_mass();
    if m > &total {
        return Err(ProjectionError::ThresholdTooLarge(
            crate::exact::format_rational(m),
            crate::exact::format_rational(&total),
        ));
    }
    let mut order: Vec<usize> = (0..decomp.tubes.len()).collect();
    order.sort_by(|&i, &j| {
        decomp.tubes[j]
            .mass
            .cmp(&decomp.tubes[i].mass)
            .then(decomp.tubes[i].index.cmp(&decomp.tubes[j].index))
    });
    let mut acc = BigRational::zero();
    let mut witness = Vec::new();
    for &i in &order {
        if &acc >= m {
            break;
        }
        acc += &decomp.tubes[i].mass;
        witness.push(decomp.tubes[i].index);
    }
    Ok((
        MinCover {
            count: witness.len() as u64,
            witness,
            mass_covered: acc,
        },
        decomp,
    ))
}
