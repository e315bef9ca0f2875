//! Discrete measures on grid sets: Frostman / Ahlfors-regularity
//! certification by exhaustive dyadic scan, renormalisation to balls,
//! and verification of David-cube partition families.
//!
//! Weights are exact rationals. Renormalising by a ball of radius `2^-k`
//! multiplies the mass by `2^(k*s)`; that power-of-two prefactor is kept
//! symbolically (`exp2`) so the chain rule holds bit-exactly even for
//! fractional `s`.

use crate::dyadic::{DyadicCell, GridError, GridSet, Point};
use crate::exact::{pow2, Exp, Scale, ScaledRational};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure is empty")]
    Empty,
    #[error("weight for cell ({0}, {1}) must be positive")]
    NonPositiveWeight(i64, i64),
    #[error("weight cell ({0}, {1}) is not in the support set")]
    WeightOffSupport(i64, i64),
    #[error("support cell ({0}, {1}) has no weight")]
    MissingWeight(i64, i64),
    #[error("measure is not a probability measure (mass {0})")]
    NotProbability(String),
    #[error("ball center must lie on the cell lattice at the measure resolution")]
    OffLatticeCenter,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("restriction has zero mass")]
    ZeroMass,
    #[error("absolute continuity fails on atom {0}")]
    NotAbsolutelyContinuous(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

/// An open ball with exact rational center and dyadic radius.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ball {
    pub center: Point,
    pub radius: Scale,
}

impl Ball {
    pub fn new(center: Point, radius: Scale) -> Self {
        Ball { center, radius }
    }

    pub fn unit() -> Self {
        Ball::new(Point::from_ints(0, 0), Scale::one())
    }

    pub fn contains(&self, p: &Point) -> bool {
        let r = self.radius.value();
        self.center.dist_sq(p) < &r * &r
    }

    /// The affine map `T_B(z) = (z - center)/radius` sending the ball to `B(0,1)`.
    pub fn apply(&self, p: &Point) -> Point {
        let r = self.radius.value();
        Point::new((&p.x - &self.center.x) / &r, (&p.y - &self.center.y) / &r)
    }

    /// The ball `B''` with `T_{B''} = T_{B'} o T_B`: renormalising first by
    /// `self` and then by `other` equals renormalising once by the result.
    pub fn compose(&self, other: &Ball) -> Ball {
        let r0 = self.radius.value();
        Ball {
            center: Point::new(
                &self.center.x + &r0 * &other.center.x,
                &self.center.y + &r0 * &other.center.y,
            ),
            radius: Scale::new(self.radius.log2 + other.radius.log2),
        }
    }
}

/// Non-negative exact-rational weights on the cells of a [`GridSet`],
/// with an optional power-of-two prefactor from renormalisation.
///
/// The measure of a (generalised) set is the sum of `2^exp2 * weight`
/// over the cells whose centers lie in it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMeasure {
    support: GridSet,
    weights: Vec<BigRational>, // parallel to support.coords()
    exp2: Exp,
}

impl GridMeasure {
    pub fn new(
        support: GridSet,
        weight_map: &BTreeMap<(i64, i64), BigRational>,
    ) -> Result<Self, MeasureError> {
        for (&(x, y), w) in weight_map {
            if !w.is_positive() {
                return Err(MeasureError::NonPositiveWeight(x, y));
            }
            if !support.contains(x, y) {
                return Err(MeasureError::WeightOffSupport(x, y));
            }
        }
        let mut weights = Vec::with_capacity(support.len());
        for &(x, y) in support.coords() {
            match weight_map.get(&(x, y)) {
                Some(w) => weights.push(w.clone()),
                None => return Err(MeasureError::MissingWeight(x, y)),
            }
        }
        Ok(GridMeasure {
            support,
            weights,
            exp2: Exp::zero(),
        })
    }

    /// Uniform probability measure on the cells of `support`.
    pub fn uniform(support: GridSet) -> Result<Self, MeasureError> {
        if support.is_empty() {
            return Err(MeasureError::Empty);
        }
        let n = BigInt::from(support.len());
        let w = BigRational::new(BigInt::one(), n);
        let weights = vec![w; support.len()];
        Ok(GridMeasure {
            support,
            weights,
            exp2: Exp::zero(),
        })
    }

    pub fn support(&self) -> &GridSet {
        &self.support
    }

    pub fn level(&self) -> u32 {
        self.support.level()
    }

    pub fn exp2(&self) -> Exp {
        self.exp2
    }

    pub fn weight_at(&self, ix: i64, iy: i64) -> Option<&BigRational> {
        self.support
            .coords()
            .binary_search(&(ix, iy))
            .ok()
            .map(|i| &self.weights[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicCell, &BigRational)> + '_ {
        self.support.cells().zip(self.weights.iter())
    }

    /// Total mass as an exact scaled rational `sum(w) * 2^exp2`.
    pub fn mass(&self) -> ScaledRational {
        let sum: BigRational = self.weights.iter().sum();
        ScaledRational::new(sum, self.exp2)
    }

    /// Rational mass, ignoring the power-of-two prefactor when fractional.
    pub fn mass_rational(&self) -> BigRational {
        self.mass()
            .as_rational()
            .unwrap_or_else(|| self.weights.iter().sum())
    }

    pub fn is_probability(&self) -> bool {
        self.mass() == ScaledRational::one()
    }

    /// Mass of the open ball (cells counted by center membership).
    pub fn ball_mass(&self, ball: &Ball) -> BigRational {
        let r = ball.radius.value();
        let r_sq = &r * &r;
        let mut sum = BigRational::zero();
        for (cell, w) in self.iter() {
            if cell.center().dist_sq(&ball.center) < r_sq {
                sum += w;
            }
        }
        sum
    }

    /// Mass carried by the cells of `set` (same resolution required).
    pub fn set_mass(&self, set: &GridSet) -> BigRational {
        assert_eq!(set.level(), self.level());
        let mut sum = BigRational::zero();
        for (i, &(x, y)) in self.support.coords().iter().enumerate() {
            if set.contains(x, y) {
                sum += &self.weights[i];
            }
        }
        sum
    }

    /// Restriction to `set`, renormalised to a probability measure.
    pub fn restrict_normalized(&self, set: &GridSet) -> Result<GridMeasure, MeasureError> {
        let total = self.set_mass(set);
        if total.is_zero() {
            return Err(MeasureError::ZeroMass);
        }
        let mut cells = Vec::new();
        let mut weights = Vec::new();
        for (i, &(x, y)) in self.support.coords().iter().enumerate() {
            if set.contains(x, y) {
                cells.push((x, y));
                weights.push(&self.weights[i] / &total);
            }
        }
        Ok(GridMeasure {
            support: GridSet::new(self.level(), cells),
            weights,
            exp2: Exp::zero(),
        })
    }

    /// Normalise to unit mass (requires the prefactor to stay rational or
    /// cancels it; the result always has `exp2 = 0`).
    pub fn normalized(&self) -> Result<GridMeasure, MeasureError> {
        let total: BigRational = self.weights.iter().sum();
        if total.is_zero() {
            return Err(MeasureError::ZeroMass);
        }
        let weights = self.weights.iter().map(|w| w / &total).collect();
        Ok(GridMeasure {
            support: self.support.clone(),
            weights,
            exp2: Exp::zero(),
        })
    }

    /// Mass per coarse cell at level `j <= level`.
    pub fn coarse_masses(&self, j: u32) -> BTreeMap<(i64, i64), BigRational> {
        assert!(j <= self.level());
        let shift = self.level() - j;
        let mut out: BTreeMap<(i64, i64), BigRational> = BTreeMap::new();
        for (i, &(x, y)) in self.support.coords().iter().enumerate() {
            let key = (x >> shift, y >> shift);
            let entry = out.entry(key).or_insert_with(BigRational::zero);
            *entry += &self.weights[i];
        }
        out
    }

    /// The renormalised measure `2^(k*s) * T_B(mu)` where `T_B(z) =
    /// (z - center)/radius` maps `B` to the unit ball and `radius = 2^-k`.
    ///
    /// Requires the center to be a lattice point at the measure resolution
    /// so cells map to cells; the full measure is pushed forward (nothing
    /// is clipped), which is what makes regularity exactly invariant.
    pub fn renormalize(&self, ball: &Ball, s: Exp) -> Result<GridMeasure, MeasureError> {
        let level = self.level() as i64;
        let k = -(ball.radius.log2 as i64); // radius = 2^-k
        let target = level - k;
        if !(0..=62).contains(&target) {
            return Err(MeasureError::Grid(GridError::ResolutionUnderflow {
                target,
            }));
        }
        // center = (nx, ny) / 2^level exactly, or error
        let scale = pow2(level);
        let nx = &ball.center.x * &scale;
        let ny = &ball.center.y * &scale;
        if !nx.is_integer() || !ny.is_integer() {
            return Err(MeasureError::OffLatticeCenter);
        }
        let nx = i64::try_from(nx.to_integer()).map_err(|_| MeasureError::OffLatticeCenter)?;
        let ny = i64::try_from(ny.to_integer()).map_err(|_| MeasureError::OffLatticeCenter)?;
        // cell [i/2^L, ...) maps to [(i - n)/2^(L-k), ...)
        let cells: Vec<(i64, i64)> = self
            .support
            .coords()
            .iter()
            .map(|&(x, y)| (x - nx, y - ny))
            .collect();
        // translation preserves order, so weights stay aligned
        let exp2 = self.exp2 + s * Exp::from_integer(k);
        Ok(GridMeasure {
            support: GridSet::new(target as u32, cells),
            weights: self.weights.clone(),
            exp2,
        })
    }

    /// Measure file format: the GridSet block, a `weights` marker, then one
    /// `ix iy p q` line per cell (weight `p/q`).
    pub fn to_text(&self) -> String {
        let mut out = self.support.to_text();
        out.push_str("weights\n");
        if !self.exp2.is_zero() {
            let _ = writeln!(out, "exp2 {} {}", self.exp2.numer(), self.exp2.denom());
        }
        for (i, &(x, y)) in self.support.coords().iter().enumerate() {
            let w = &self.weights[i];
            let _ = writeln!(out, "{} {} {} {}", x, y, w.numer(), w.denom());
        }
        out
    }

    pub fn from_text(s: &str) -> Result<GridMeasure, MeasureError> {
        let marker = s
            .lines()
            .position(|l| l.trim() == "weights")
            .ok_or_else(|| MeasureError::Parse("missing `weights` marker".into()))?;
        let lines: Vec<&str> = s.lines().collect();
        let set_block = lines[..marker].join("\n");
        let support = GridSet::from_text(&set_block)?;
        let mut weight_map = BTreeMap::new();
        let mut exp2 = Exp::zero();
        for line in &lines[marker + 1..] {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() == 3 && parts[0] == "exp2" {
                let p: i64 = parts[1]
                    .parse()
                    .map_err(|_| MeasureError::Parse(line.into()))?;
                let q: i64 = parts[2]
                    .parse()
                    .map_err(|_| MeasureError::Parse(line.into()))?;
                exp2 = Exp::new(p, q);
                continue;
            }
            if parts.len() != 4 {
                return Err(MeasureError::Parse(format!("bad weight line `{line}`")));
            }
            let ix: i64 = parts[0]
                .parse()
                .map_err(|_| MeasureError::Parse(line.into()))?;
            let iy: i64 = parts[1]
                .parse()
                .map_err(|_| MeasureError::Parse(line.into()))?;
            let p = BigInt::parse_bytes(parts[2].as_bytes(), 10)
                .ok_or_else(|| MeasureError::Parse(line.into()))?;
            let q = BigInt::parse_bytes(parts[3].as_bytes(), 10)
                .ok_or_else(|| MeasureError::Parse(line.into()))?;
            if q.is_zero() {
                return Err(MeasureError::Parse(format!("zero denominator in `{line}`")));
            }
            weight_map.insert((ix, iy), BigRational::new(p, q));
        }
        let mut mu = GridMeasure::new(support, &weight_map)?;
        mu.exp2 = exp2;
        Ok(mu)
    }
}

/// Image of a grid set under the ball's renormalising map `T_B`; cells map
/// to cells when the radius is a dyadic power and the center sits on the
/// lattice at the set resolution.
pub fn renormalize_set(set: &GridSet, ball: &Ball) -> Result<GridSet, MeasureError> {
    let level = set.level() as i64;
    let k = -(ball.radius.log2 as i64);
    let target = level - k;
    if !(0..=62).contains(&target) {
        return Err(MeasureError::Grid(GridError::ResolutionUnderflow {
            target,
        }));
    }
    let scale = pow2(level);
    let nx = &ball.center.x * &scale;
    let ny = &ball.center.y * &scale;
    if !nx.is_integer() || !ny.is_integer() {
        return Err(MeasureError::OffLatticeCenter);
    }
    let nx = i64::try_from(nx.to_integer()).map_err(|_| MeasureError::OffLatticeCenter)?;
    let ny = i64::try_from(ny.to_integer()).map_err(|_| MeasureError::OffLatticeCenter)?;
    let cells = set
        .coords()
        .iter()
        .map(|&(x, y)| (x - nx, y - ny))
        .collect();
    Ok(GridSet::new(target as u32, cells))
}

/// Which inequality family a report certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularityKind {
    Frostman,
    UpperRegular,
    Ahlfors,
}

/// The extremal test triple found by a scan.
#[derive(Clone, Debug)]
pub struct RegularityWitness {
    pub center: (i64, i64),
    pub r: Scale,
    pub big_r: Option<Scale>,
    /// the tested ratio at the witness, e.g. `mu(B(x,r)) / r^s`
    pub ratio: ScaledRational,
}

/// Outcome of an exhaustive regularity scan at exponent `s`.
///
/// `c_best` is the smallest constant making the scanned inequality family
/// hold; deterministic: identical inputs yield identical witnesses.
#[derive(Clone, Debug)]
pub struct RegularityReport {
    pub kind: RegularityKind,
    pub s: Exp,
    pub c_best: ScaledRational,
    pub witness: Option<RegularityWitness>,
    /// For two-sided checks: the lower-bound side `min mu(B)/r^s` and its witness.
    pub lower_worst: Option<ScaledRational>,
    pub lower_witness: Option<RegularityWitness>,
    pub passes: bool,
    /// The dyadic scan only tests dyadic centers/radii; the continuum
    /// definition holds up to this extra factor (log2 of `4^s`).
    pub dyadic_slack_log2: Exp,
}

impl RegularityReport {
    pub fn verdict_at(&self, c: &BigRational) -> bool {
        let c = ScaledRational::from_rational(c.clone());
        let upper_ok = self.c_best.cmp_exact(&c) != Ordering::Greater;
        match (&self.lower_worst, self.kind) {
            (Some(low), RegularityKind::Ahlfors) => {
                // need mu(B(x,r)) >= r^s / C, i.e. low >= 1/C
                let inv = ScaledRational::new(BigRational::one() / &c.mantissa, -c.exp2);
                upper_ok && low.cmp_exact(&inv) != Ordering::Less
            }
            _ => upper_ok,
        }
    }
}

fn dyadic_radii(level: u32, diam_sq: &BigRational) -> Vec<Scale> {
    // from one cell side up to the first dyadic scale covering the diameter
    let mut top = -(level as i32);
    loop {
        let r = pow2(top as i64);
        if &(&r * &r) >= diam_sq || top > 6 {
            break;
        }
        top += 1;
    }
    (-(level as i32)..=top).map(Scale::new).collect()
}

/// Sorted squared center-to-center distances (integer, in units of the
/// cell side squared) from one cell to every support cell, paired with
/// weight indices. Ball membership is decided at cell centers, matching
/// [`GridMeasure::ball_mass`]; this is what makes regularity verdicts
/// exactly invariant under renormalisation.
fn sorted_cell_distances(mu: &GridMeasure, center: (i64, i64)) -> Vec<(i128, usize)> {
    let (cx, cy) = center;
    let mut v: Vec<(i128, usize)> = mu
        .support()
        .coords()
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let dx = (x - cx) as i128;
            let dy = (y - cy) as i128;
            (dx * dx + dy * dy, i)
        })
        .collect();
    v.sort_unstable();
    v
}

/// `r^2` in units of `side^2` for a dyadic radius `r` at grid level `k`;
/// exact whenever `r >= side`.
fn radius_sq_units(r: Scale, level: u32) -> i128 {
    let e = 2 * (r.log2 + level as i32);
    assert!(e >= 0, "radius below the cell side");
    1i128 << e
}

/// Weight numerators over a single common denominator, so the inner scan
/// loops run on big integers instead of rationals.
fn common_denominator_weights(mu: &GridMeasure) -> (Vec<BigInt>, BigInt) {
    let mut denom = BigInt::one();
    for w in &mu.weights {
        denom = num::integer::lcm(denom, w.denom().clone());
    }
    let nums = mu
        .weights
        .iter()
        .map(|w| w.numer() * (&denom / w.denom()))
        .collect();
    (nums, denom)
}

/// `(s,C)-Frostman` scan: max of `mu(B(x,r))/r^s` over all support-cell
/// centers `x` and dyadic radii from cell side to the support diameter.
pub fn check_frostman(
    mu: &GridMeasure,
    s: Exp,
    c: &BigRational,
) -> Result<RegularityReport, MeasureError> {
    if mu.support().is_empty() {
        return Err(MeasureError::Empty);
    }
    let radii = dyadic_radii(mu.level(), &mu.support().diameter_sq());
    let (nums, denom) = common_denominator_weights(mu);
    let mut best: Option<(ScaledRational, RegularityWitness)> = None;
    for &center in mu.support().coords() {
        let dists = sorted_cell_distances(mu, center);
        let mut cursor = 0usize;
        let mut acc = BigInt::zero();
        for &r in &radii {
            let r_sq = radius_sq_units(r, mu.level());
            while cursor < dists.len() && dists[cursor].0 < r_sq {
                acc += &nums[dists[cursor].1];
                cursor += 1;
            }
            if acc.is_zero() {
                continue;
            }
            // ratio = mass * 2^exp2 / r^s = mass * 2^(exp2 - s*log2 r)
            let ratio = ScaledRational::new(
                BigRational::new(acc.clone(), denom.clone()),
                mu.exp2 - s * Exp::from_integer(r.log2 as i64),
            );
            let better = match &best {
                None => true,
                Some((b, _)) => ratio.cmp_exact(b) == Ordering::Greater,
            };
            if better {
                let witness = RegularityWitness {
                    center,
                    r,
                    big_r: None,
                    ratio: ratio.clone(),
                };
                best = Some((ratio, witness));
            }
        }
    }
    let (c_best, witness) = best.ok_or(MeasureError::Empty)?;
    let passes = c_best.cmp_exact(&ScaledRational::from_rational(c.clone())) != Ordering::Greater;
    Ok(RegularityReport {
        kind: RegularityKind::Frostman,
        s,
        c_best,
        witness: Some(witness),
        lower_worst: None,
        lower_witness: None,
        passes,
        dyadic_slack_log2: s * Exp::from_integer(2),
    })
}

/// Upper `(s,C)`-regularity scan for a set: max of
/// `|K cap B(x,R)|_r / (R/r)^s` over support centers and dyadic `r <= R`.
pub fn check_upper_regular(
    set: &GridSet,
    s: Exp,
    c: &BigRational,
) -> Result<RegularityReport, MeasureError> {
    if set.is_empty() {
        return Err(MeasureError::Empty);
    }
    let mu = GridMeasure::uniform(set.clone())?;
    let radii = dyadic_radii(set.level(), &set.diameter_sq());
    let mut best: Option<(ScaledRational, RegularityWitness)> = None;
    for &center in set.coords() {
        let dists = sorted_cell_distances(&mu, center);
        for &big_r in &radii {
            let r_sq = radius_sq_units(big_r, set.level());
            let inside: Vec<(i64, i64)> = dists
                .iter()
                .take_while(|&&(d, _)| d < r_sq)
                .map(|&(_, i)| set.coords()[i])
                .collect();
            if inside.is_empty() {
                continue;
            }
            for &r in radii.iter().filter(|rr| rr.log2 <= big_r.log2) {
                let shift = (set.level() as i32 + r.log2) as u32;
                let mut coarse: Vec<(i64, i64)> = inside
                    .iter()
                    .map(|&(x, y)| (x >> shift, y >> shift))
                    .collect();
                coarse.sort_unstable();
                coarse.dedup();
                let count = BigRational::from_integer(BigInt::from(coarse.len()));
                // ratio = count / (R/r)^s = count * 2^(-s*(log R - log r))
                let ratio = ScaledRational::new(
                    count,
                    -s * Exp::from_integer((big_r.log2 - r.log2) as i64),
                );
                let better = match &best {
                    None => true,
                    Some((b, _)) => ratio.cmp_exact(b) == Ordering::Greater,
                };
                if better {
                    let witness = RegularityWitness {
                        center,
                        r,
                        big_r: Some(big_r),
                        ratio: ratio.clone(),
                    };
                    best = Some((ratio, witness));
                }
            }
        }
    }
    let (c_best, witness) = best.ok_or(MeasureError::Empty)?;
    let passes = c_best.cmp_exact(&ScaledRational::from_rational(c.clone())) != Ordering::Greater;
    Ok(RegularityReport {
        kind: RegularityKind::UpperRegular,
        s,
        c_best,
        witness: Some(witness),
        lower_worst: None,
        lower_witness: None,
        passes,
        dyadic_slack_log2: s * Exp::from_integer(2),
    })
}

/// Ahlfors `(s,C)`-regularity: the Frostman upper bound everywhere plus the
/// lower bound `mu(B(x,r)) >= r^s / C` at support centers for radii up to
/// the support diameter.
pub fn check_ahlfors(
    mu: &GridMeasure,
    s: Exp,
    c: &BigRational,
) -> Result<RegularityReport, MeasureError> {
    let upper = check_frostman(mu, s, c)?;
    let diam_sq = mu.support().diameter_sq();
    let radii: Vec<Scale> = dyadic_radii(mu.level(), &diam_sq)
        .into_iter()
        .filter(|r| {
            let rv = r.value();
            &rv * &rv <= diam_sq
        })
        .collect();
    let (nums, denom) = common_denominator_weights(mu);
    let mut worst: Option<(ScaledRational, RegularityWitness)> = None;
    for &center in mu.support().coords() {
        let dists = sorted_cell_distances(mu, center);
        let mut cursor = 0usize;
        let mut acc = BigInt::zero();
        for &r in &radii {
            let r_sq = radius_sq_units(r, mu.level());
            while cursor < dists.len() && dists[cursor].0 < r_sq {
                acc += &nums[dists[cursor].1];
                cursor += 1;
            }
            if acc.is_zero() {
                // cannot happen: the smallest radius is one cell side and the
                // ball always contains its own center
                continue;
            }
            let ratio = ScaledRational::new(
                BigRational::new(acc.clone(), denom.clone()),
                mu.exp2 - s * Exp::from_integer(r.log2 as i64),
            );
            let smaller = match &worst {
                None => true,
                Some((w, _)) => ratio.cmp_exact(w) == Ordering::Less,
            };
            if smaller {
                let witness = RegularityWitness {
                    center,
                    r,
                    big_r: None,
                    ratio: ratio.clone(),
                };
                worst = Some((ratio, witness));
            }
        }
    }
    let (lower_worst, lower_witness) = match worst {
        Some((w, wit)) => (Some(w), Some(wit)),
        None => (None, None),
    };
    let report = RegularityReport {
        kind: RegularityKind::Ahlfors,
        s,
        c_best: upper.c_best,
        witness: upper.witness,
        lower_worst,
        lower_witness,
        passes: false,
        dyadic_slack_log2: s * Exp::from_integer(2),
    };
    let passes = report.verdict_at(c);
    Ok(RegularityReport { passes, ..report })
}

/// A per-level partition family to test against the David-cube axioms.
/// Level `i` cubes should have diameter comparable to `2^-i`.
#[derive(Clone, Debug)]
pub struct CubeFamily {
    /// level index `i` paired with the partition: each cube is a set of
    /// support cells (must share the measure resolution).
    pub levels: Vec<(i32, Vec<GridSet>)>,
}

impl CubeFamily {
    /// The standard dyadic cells over the support, levels `0..=k`.
    pub fn canonical_dyadic(mu: &GridMeasure) -> CubeFamily {
        let k = mu.level();
        let mut levels = Vec::new();
        for j in 0..=k {
            let coarse = mu.support().coarsen(j as i32).expect("j <= k");
            let shift = k - j;
            let cubes = coarse
                .coords()
                .iter()
                .map(|&(cx, cy)| {
                    let cells: Vec<(i64, i64)> = mu
                        .support()
                        .coords()
                        .iter()
                        .copied()
                        .filter(|&(x, y)| (x >> shift, y >> shift) == (cx, cy))
                        .collect();
                    GridSet::new(k, cells)
                })
                .collect();
            levels.push((j as i32, cubes));
        }
        CubeFamily { levels }
    }
}

/// Per-axiom outcome of [`verify_david_cubes`].
#[derive(Clone, Debug)]
pub struct DavidCubeReport {
    pub q1_nesting: Result<(), String>,
    pub q2_diameter: Result<(), String>,
    pub q3_mass: Result<(), String>,
}

impl DavidCubeReport {
    pub fn all_pass(&self) -> bool {
        self.q1_nesting.is_ok() && self.q2_diameter.is_ok() && self.q3_mass.is_ok()
    }
}

/// Checks the David-cube axioms for a partition family over `mu`:
/// Q1 nesting across levels, Q2 diameter bounds `A^-1 2^-i <= diam Q <= A 2^-i`,
/// Q3 mass bounds `A^-1 2^-is <= mu(Q) <= A 2^-is` (for `2^-i <= diam spt`).
pub fn verify_david_cubes(
    mu: &GridMeasure,
    family: &CubeFamily,
    s: Exp,
    a: &BigRational,
) -> Result<DavidCubeReport, MeasureError> {
    let support = mu.support();
    // structural: each level must partition the support
    for (i, cubes) in &family.levels {
        let mut seen: Vec<(i64, i64)> = Vec::new();
        for q in cubes {
            if q.level() != support.level() {
                return Err(MeasureError::Parse(format!(
                    "cube at level index {i} has resolution {} != {}",
                    q.level(),
                    support.level()
                )));
            }
            for &c in q.coords() {
                seen.push(c);
            }
        }
        seen.sort_unstable();
        let dup = seen.windows(2).find(|w| w[0] == w[1]);
        if let Some(w) = dup {
            return Err(MeasureError::Parse(format!(
                "level index {i}: cell ({}, {}) appears in two cubes",
                w[0].0, w[0].1
            )));
        }
        if seen != support.coords() {
            return Err(MeasureError::Parse(format!(
                "level index {i} does not partition the support"
            )));
        }
    }

    // Q1: every cube at a finer level nests inside one cube of each coarser level
    let mut q1 = Ok(());
    'q1: for w in family.levels.windows(2) {
        let (_, coarse) = &w[0];
        let (i_fine, fine) = &w[1];
        for q in fine {
            let inside_one = coarse.iter().any(|p| q.is_subset_of(p));
            if !inside_one {
                q1 = Err(format!(
                    "level index {i_fine}: a cube straddles two parents (first cell {:?})",
                    q.coords().first()
                ));
                break 'q1;
            }
        }
    }

    let a_sq = a * a;
    let inv_a_sq = BigRational::one() / &a_sq;
    let mut q2 = Ok(());
    'q2: for (i, cubes) in &family.levels {
        let bound = pow2(-2 * *i as i64); // (2^-i)^2
        for q in cubes {
            let d_sq = q.diameter_sq();
            if d_sq > &a_sq * &bound || d_sq < &inv_a_sq * &bound {
                q2 = Err(format!(
                    "level index {i}: cube diameter^2 = {d_sq} outside [A^-2, A^2] * 4^-{i}"
                ));
                break 'q2;
            }
        }
    }

    let diam_sq = support.diameter_sq();
    let mut q3 = Ok(());
    'q3: for (i, cubes) in &family.levels {
        // only required while 2^-i <= diam(spt mu)
        let r = pow2(-(*i) as i64);
        if &r * &r > diam_sq {
            continue;
        }
        for q in cubes {
            let mass = ScaledRational::new(mu.set_mass(q), mu.exp2());
            // bounds A^{+-1} * 2^{-i s}
            let upper = ScaledRational::new(a.clone(), -s * Exp::from_integer(*i as i64));
            let lower =
                ScaledRational::new(BigRational::one() / a, -s * Exp::from_integer(*i as i64));
            if mass.mantissa.is_zero() {
                q3 = Err(format!("level index {i}: cube with zero mass"));
                break 'q3;
            }
            if mass.cmp_exact(&upper) == Ordering::Greater
                || mass.cmp_exact(&lower) == Ordering::Less
            {
                q3 = Err(format!(
                    "level index {i}: cube mass {} outside [A^-1, A] * 2^(-i*s)",
                    mass.to_f64()
                ));
                break 'q3;
            }
        }
    }

    Ok(DavidCubeReport {
        q1_nesting: q1,
        q2_diameter: q2,
        q3_mass: q3,
    })
}
