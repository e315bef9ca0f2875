//! Deterministic generators for the test corpora: planar digit-system
//! fractals with their natural measures, and direction measures on the
//! circle `S^1 ~ [0,1)`.

use crate::dyadic::{DyadicInterval, GridSet};
use crate::exact::{pow2, Exp, Scale};
use crate::measure::{GridMeasure, MeasureError};
use crate::projection::Direction;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("base must be a power of two >= 2, got {0}")]
    BadBase(u32),
    #[error("digit {0} out of range for base {1}")]
    DigitOutOfRange(u32, u32),
    #[error("empty digit set")]
    EmptyDigits,
    #[error("depth {depth} at base {base} exceeds the resolution cap")]
    ResolutionOverflow { base: u32, depth: u32 },
    #[error("bad digit-system spec `{0}`")]
    BadSpec(String),
    #[error("level {level} is not a multiple of the base exponent {m}")]
    LevelNotDivisible { level: u32, m: u32 },
}

/// A planar digit construction: base `b = 2^m`, digit set
/// `D subset {0..b-1}^2`, iterated to `depth` levels.
///
/// The generated set has exactly `|D|^depth` cells at grid level
/// `depth * m`; the natural measure is uniform over them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitSystem {
    pub base: u32,
    pub digits: Vec<(u32, u32)>,
    pub depth: u32,
}

impl DigitSystem {
    pub fn planar(base: u32, digits: Vec<(u32, u32)>, depth: u32) -> Result<Self, GenError> {
        if !base.is_power_of_two() || base < 2 {
            return Err(GenError::BadBase(base));
        }
        if digits.is_empty() {
            return Err(GenError::EmptyDigits);
        }
        let mut digits = digits;
        digits.sort_unstable();
        digits.dedup();
        for &(dx, dy) in &digits {
            if dx >= base || dy >= base {
                return Err(GenError::DigitOutOfRange(dx.max(dy), base));
            }
        }
        let m = base.trailing_zeros();
        if depth == 0 || (depth * m) > 30 {
            return Err(GenError::ResolutionOverflow { base, depth });
        }
        Ok(DigitSystem {
            base,
            digits,
            depth,
        })
    }

    /// log2 of the base.
    pub fn m(&self) -> u32 {
        self.base.trailing_zeros()
    }

    /// Grid level of the generated cells.
    pub fn level(&self) -> u32 {
        self.depth * self.m()
    }

    /// Exact similarity exponent `log |D| / log b` when `|D|` is a power of
    /// two, i.e. the `s` the natural measure is regular for.
    pub fn exponent(&self) -> Option<Exp> {
        let d = self.digits.len() as u64;
        if d.is_power_of_two() {
            Some(Exp::new(d.trailing_zeros() as i64, self.m() as i64))
        } else {
            None
        }
    }

    pub fn similarity_dimension(&self) -> f64 {
        (self.digits.len() as f64).log2() / self.m() as f64
    }

    /// Generates the cell set in `[0,1)^2` and the uniform natural measure.
    pub fn generate(&self) -> Result<(GridSet, GridMeasure), MeasureError> {
        let mut cells: Vec<(i64, i64)> = vec![(0, 0)];
        for _ in 0..self.depth {
            let mut next = Vec::with_capacity(cells.len() * self.digits.len());
            for &(x, y) in &cells {
                for &(dx, dy) in &self.digits {
                    next.push((
                        x * self.base as i64 + dx as i64,
                        y * self.base as i64 + dy as i64,
                    ));
                }
            }
            cells = next;
        }
        let set = GridSet::new(self.level(), cells);
        debug_assert_eq!(set.len() as u64, (self.digits.len() as u64).pow(self.depth));
        let mu = GridMeasure::uniform(set.clone())?;
        Ok((set, mu))
    }

    /// Same construction translated by `(-1/2, -1/2)`: the set then lies in
    /// `[-1/2, 1/2)^2`, inside the unit ball `B(0, 1)`.
    pub fn generate_centered(&self) -> Result<(GridSet, GridMeasure), MeasureError> {
        let (set, _) = self.generate()?;
        let half = 1i64 << (self.level() - 1);
        let set = set.translate(-half, -half);
        let mu = GridMeasure::uniform(set.clone())?;
        Ok((set, mu))
    }

    /// Parses the spec grammar `b=4;D=(0,0),(3,3),...;n=3`.
    pub fn parse_spec(s: &str) -> Result<Self, GenError> {
        let mut base: Option<u32> = None;
        let mut depth: Option<u32> = None;
        let mut digits: Option<Vec<(u32, u32)>> = None;
        for part in s.split(';') {
            let part = part.trim();
            if let Some(v) = part.strip_prefix("b=") {
                base = v.trim().parse().ok();
            } else if let Some(v) = part.strip_prefix("n=") {
                depth = v.trim().parse().ok();
            } else if let Some(v) = part.strip_prefix("D=") {
                let mut out = Vec::new();
                let mut rest = v.trim();
                while let Some(start) = rest.find('(') {
                    let end = rest[start..]
                        .find(')')
                        .ok_or_else(|| GenError::BadSpec(s.to_string()))?
                        + start;
                    let inner = &rest[start + 1..end];
                    let mut it = inner.split(',');
                    let dx: u32 = it
                        .next()
                        .and_then(|t| t.trim().parse().ok())
                        .ok_or_else(|| GenError::BadSpec(s.to_string()))?;
                    let dy: u32 = it
                        .next()
                        .and_then(|t| t.trim().parse().ok())
                        .ok_or_else(|| GenError::BadSpec(s.to_string()))?;
                    out.push((dx, dy));
                    rest = &rest[end + 1..];
                }
                digits = Some(out);
            }
        }
        match (base, digits, depth) {
            (Some(b), Some(d), Some(n)) => DigitSystem::planar(b, d, n),
            _ => Err(GenError::BadSpec(s.to_string())),
        }
    }
}

impl fmt::Display for DigitSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b={};D=", self.base)?;
        for (i, &(dx, dy)) in self.digits.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "({dx},{dy})")?;
        }
        write!(f, ";n={}", self.depth)
    }
}

/// Non-negative weights on dyadic intervals of the circle `[0,1)`.
/// Mass is attached to interval left endpoints for ball queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArcMeasure {
    level: u32,
    weights: BTreeMap<u64, BigRational>,
}

impl ArcMeasure {
    pub fn new(level: u32, weights: BTreeMap<u64, BigRational>) -> Self {
        let n = 1u64 << level;
        for (&i, w) in &weights {
            assert!(i < n, "interval index out of range");
            assert!(w.is_positive(), "weights must be positive");
        }
        ArcMeasure { level, weights }
    }

    pub fn uniform(level: u32) -> Self {
        let n = 1u64 << level;
        let w = BigRational::new(BigInt::one(), BigInt::from(n));
        ArcMeasure {
            level,
            weights: (0..n).map(|i| (i, w.clone())).collect(),
        }
    }

    /// Mass 1 on a single interval; fails Frostman bounds at small radii.
    pub fn single_arc(level: u32, index: u64) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(index, BigRational::one());
        ArcMeasure::new(level, weights)
    }

    /// Uniform measure on a linear digit construction: base `2^m`, kept
    /// digits `D subset {0..2^m - 1}`, iterated `level/m` steps.
    pub fn cantor(level: u32, m: u32, digits: &[u32]) -> Result<Self, GenError> {
        if m == 0 || !level.is_multiple_of(m) {
            return Err(GenError::LevelNotDivisible { level, m });
        }
        let base = 1u32 << m;
        let mut digits: Vec<u32> = digits.to_vec();
        digits.sort_unstable();
        digits.dedup();
        if digits.is_empty() {
            return Err(GenError::EmptyDigits);
        }
        for &d in &digits {
            if d >= base {
                return Err(GenError::DigitOutOfRange(d, base));
            }
        }
        let depth = level / m;
        let mut idx: Vec<u64> = vec![0];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(idx.len() * digits.len());
            for &i in &idx {
                for &d in &digits {
                    next.push(i * base as u64 + d as u64);
                }
            }
            idx = next;
        }
        let w = BigRational::new(BigInt::one(), BigInt::from(idx.len() as u64));
        Ok(ArcMeasure {
            level,
            weights: idx.into_iter().map(|i| (i, w.clone())).collect(),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn weights(&self) -> &BTreeMap<u64, BigRational> {
        &self.weights
    }

    pub fn mass(&self) -> BigRational {
        self.weights.values().sum()
    }

    pub fn intervals(&self) -> impl Iterator<Item = (DyadicInterval, &BigRational)> + '_ {
        let level = self.level;
        self.weights
            .iter()
            .map(move |(&i, w)| (DyadicInterval::new(level, i), w))
    }

    /// Mass of the ancestor interval at level `j <= level`.
    pub fn interval_mass(&self, j: u32, index: u64) -> BigRational {
        assert!(j <= self.level);
        let shift = self.level - j;
        let lo = index << shift;
        let hi = (index + 1) << shift;
        self.weights.range(lo..hi).map(|(_, w)| w).sum()
    }

    /// Mass of the open circle arc `(x - r, x + r)` (wraparound metric),
    /// atoms at interval left endpoints.
    pub fn ball_mass(&self, x: &BigRational, r: &BigRational) -> BigRational {
        let mut sum = BigRational::zero();
        let n = pow2(-(self.level as i64));
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        for (&i, w) in &self.weights {
            let p = BigRational::from_integer(BigInt::from(i)) * &n;
            let mut d = (&p - x).abs();
            d -= d.floor();
            let folded = if d > half { BigRational::one() - d } else { d };
            if &folded < r {
                sum += w;
            }
        }
        sum
    }

    /// Max of `nu(B(x, r)) / r^tau` over atom centers and dyadic radii:
    /// the measure is `(tau, C)`-Frostman on the scanned family iff
    /// `C >= c_best`.
    pub fn frostman_c_best(&self, tau: Exp) -> crate::exact::ScaledRational {
        use crate::exact::ScaledRational;
        use std::cmp::Ordering;
        let table = BallMassTable::new(self);
        let mut best: Option<ScaledRational> = None;
        for &atom in self.weights.keys() {
            for j in 0..=self.level as i64 {
                let mass = table.mass_around(atom, -j as i32);
                if mass.is_zero() {
                    continue;
                }
                let ratio = ScaledRational::new(mass, tau * Exp::from_integer(j));
                let better = match &best {
                    None => true,
                    Some(b) => ratio.cmp_exact(b) == Ordering::Greater,
                };
                if better {
                    best = Some(ratio);
                }
            }
        }
        best.expect("measure must be nonempty")
    }

    /// Arc measure file format: `arc-level k` then `i p q` lines.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "arc-level {}", self.level);
        for (&i, w) in &self.weights {
            let _ = writeln!(out, "{} {} {}", i, w.numer(), w.denom());
        }
        out
    }

    pub fn from_text(s: &str) -> Result<ArcMeasure, MeasureError> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MeasureError::Parse("empty arc measure".into()))?;
        let level = header
            .trim()
            .strip_prefix("arc-level")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| MeasureError::Parse(format!("bad header `{header}`")))?;
        let mut weights = BTreeMap::new();
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(MeasureError::Parse(format!("bad arc line `{line}`")));
            }
            let i: u64 = parts[0]
                .parse()
                .map_err(|_| MeasureError::Parse(line.into()))?;
            let p = BigInt::parse_bytes(parts[1].as_bytes(), 10)
                .ok_or_else(|| MeasureError::Parse(line.into()))?;
            let q = BigInt::parse_bytes(parts[2].as_bytes(), 10)
                .ok_or_else(|| MeasureError::Parse(line.into()))?;
            weights.insert(i, BigRational::new(p, q));
        }
        Ok(ArcMeasure::new(level, weights))
    }
}

/// Prefix-sum table answering circle ball-mass queries at atom positions
/// in `O(log n)`; the scans over (atom, dyadic radius) pairs are otherwise
/// quadratic in the support size.
pub struct BallMassTable {
    level: u32,
    keys: Vec<u64>,
    prefix: Vec<BigRational>, // prefix[i] = sum of the first i weights
}

impl BallMassTable {
    pub fn new(nu: &ArcMeasure) -> Self {
        let keys: Vec<u64> = nu.weights.keys().copied().collect();
        let mut prefix = Vec::with_capacity(keys.len() + 1);
        prefix.push(BigRational::zero());
        for w in nu.weights.values() {
            let last = prefix.last().unwrap().clone();
            prefix.push(last + w);
        }
        BallMassTable {
            level: nu.level,
            keys,
            prefix,
        }
    }

    fn range_sum(&self, lo: u64, hi: u64) -> BigRational {
        // inclusive index range [lo, hi]
        let a = self.keys.partition_point(|&k| k < lo);
        let b = self.keys.partition_point(|&k| k <= hi);
        &self.prefix[b] - &self.prefix[a]
    }

    /// Mass of the open circle ball `B(atom/2^level, 2^radius_log2)`.
    pub fn mass_around(&self, atom: u64, radius_log2: i32) -> BigRational {
        let n = 1u64 << self.level;
        // lattice offsets with |off| < 2^(level + radius_log2)
        let e = self.level as i32 + radius_log2;
        let d: u64 = if e <= 0 { 0 } else { (1u64 << e.min(63)) - 1 };
        if 2 * d + 1 >= n {
            return &self.prefix[self.prefix.len() - 1] - &self.prefix[0];
        }
        let lo = (atom + n - d) % n;
        let hi = (atom + d) % n;
        if lo <= hi {
            self.range_sum(lo, hi)
        } else {
            self.range_sum(lo, n - 1) + self.range_sum(0, hi)
        }
    }
}

/// One representative direction per `spacing`-interval meeting the support
/// of `nu`, carrying the full `nu`-mass of its interval. The circle `[0,1)`
/// is identified with the slope range of `pi(x,y) = x + theta*y`.
pub fn directions_from(nu: &ArcMeasure, spacing: Scale) -> Vec<(Direction, BigRational)> {
    let j = spacing.level();
    assert!(
        j >= 0 && (j as u32) <= nu.level(),
        "spacing must be between the interval length and 1"
    );
    let j = j as u32;
    let shift = nu.level() - j;
    let mut groups: BTreeMap<u64, BigRational> = BTreeMap::new();
    for (&i, w) in nu.weights() {
        let entry = groups.entry(i >> shift).or_insert_with(BigRational::zero);
        *entry += w;
    }
    groups
        .into_iter()
        .map(|(g, mass)| {
            let theta = BigRational::new(BigInt::from(g), BigInt::one() << j as usize);
            (Direction::Slope(theta), mass)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::parse_rational;
    use crate::measure::check_ahlfors;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn four_corner_counts() {
        let sys = DigitSystem::planar(4, vec![(0, 0), (0, 3), (3, 0), (3, 3)], 3).unwrap();
        let (set, mu) = sys.generate().unwrap();
        assert_eq!(set.level(), 6);
        assert_eq!(set.len(), 64);
        assert_eq!(sys.exponent(), Some(Exp::one()));
        assert!(mu.is_probability());
    }

    #[test]
    fn four_corner_is_ahlfors_one_regular() {
        let sys = DigitSystem::planar(4, vec![(0, 0), (0, 3), (3, 0), (3, 3)], 2).unwrap();
        let (_, mu) = sys.generate().unwrap();
        let rep = check_ahlfors(&mu, Exp::one(), &rat("16")).unwrap();
        assert!(rep.passes, "c_best = {}", rep.c_best.to_f64());
    }

    #[test]
    fn full_digit_set_is_square() {
        let sys = DigitSystem::planar(2, vec![(0, 0), (0, 1), (1, 0), (1, 1)], 1).unwrap();
        let (set, _) = sys.generate().unwrap();
        assert_eq!(set, GridSet::unit_square(1));
        assert_eq!(sys.exponent(), Some(Exp::from_integer(2)));
    }

    #[test]
    fn single_digit_is_degenerate() {
        let sys = DigitSystem::planar(4, vec![(0, 0)], 3).unwrap();
        let (set, mu) = sys.generate().unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(sys.exponent(), Some(Exp::zero()));
        // s = 0, C = 1 passes vacuously: every ball mass is 1 = r^0
        let rep = check_ahlfors(&mu, Exp::zero(), &rat("1")).unwrap();
        assert!(rep.passes);
    }

    #[test]
    fn self_similar_coarsening() {
        let digits = vec![(0, 0), (0, 3), (3, 0), (3, 3)];
        let deep = DigitSystem::planar(4, digits.clone(), 3).unwrap();
        let shallow = DigitSystem::planar(4, digits, 2).unwrap();
        let (set3, _) = deep.generate().unwrap();
        let (set2, _) = shallow.generate().unwrap();
        assert_eq!(set3.coarsen(set2.level() as i32).unwrap(), set2);
    }

    #[test]
    fn centered_lands_in_unit_ball() {
        let sys = DigitSystem::planar(4, vec![(0, 0), (0, 3), (3, 0), (3, 3)], 2).unwrap();
        let (_, mu) = sys.generate_centered().unwrap();
        let b = crate::measure::Ball::unit();
        assert_eq!(mu.ball_mass(&b), rat("1"));
    }

    #[test]
    fn spec_grammar_roundtrip() {
        let s = "b=4;D=(0,0),(0,3),(3,0),(3,3);n=3";
        let sys = DigitSystem::parse_spec(s).unwrap();
        assert_eq!(sys.to_string(), s);
    }

    #[test]
    fn uniform_arc_frostman() {
        let nu = ArcMeasure::uniform(3);
        assert_eq!(nu.mass(), rat("1"));
        let c = nu.frostman_c_best(Exp::one());
        assert!(c.to_f64() <= 4.0, "c_best = {}", c.to_f64());
    }

    #[test]
    fn point_like_cantor_fails_half_frostman() {
        // base 2 digits {0}: all mass at 0
        let nu = ArcMeasure::cantor(3, 1, &[0]).unwrap();
        let c = nu.frostman_c_best(Exp::new(1, 2));
        // mass 1 within radius 2^-3 of 0: ratio >= 2^(3/2)
        assert!(c.to_f64() >= 2.0_f64.powf(1.5) - 1e-12);
    }

    #[test]
    fn single_arc_fails_small_radii() {
        let nu = ArcMeasure::single_arc(4, 5);
        let c = nu.frostman_c_best(Exp::one());
        assert!(c.to_f64() >= 16.0 - 1e-12);
    }

    #[test]
    fn directions_cover_mass() {
        let nu = ArcMeasure::uniform(3);
        let dirs = directions_from(&nu, Scale::neg(3));
        assert_eq!(dirs.len(), 8);
        let total: BigRational = dirs.iter().map(|(_, m)| m.clone()).sum();
        assert_eq!(total, rat("1"));

        let single = ArcMeasure::single_arc(3, 2);
        let dirs = directions_from(&single, Scale::neg(2));
        assert_eq!(dirs.len(), 1);
        assert_eq!(dirs[0].1, rat("1"));

        let cantor = ArcMeasure::cantor(4, 2, &[0, 3]).unwrap();
        let dirs = directions_from(&cantor, Scale::neg(4));
        let total: BigRational = dirs.iter().map(|(_, m)| m.clone()).sum();
        assert_eq!(total, rat("1"));
    }

    #[test]
    fn arc_text_roundtrip() {
        let nu = ArcMeasure::cantor(4, 2, &[0, 3]).unwrap();
        let back = ArcMeasure::from_text(&nu.to_text()).unwrap();
        assert_eq!(nu, back);
    }
}
