//! Exact arithmetic helpers shared by every module: dyadic scales,
//! rational exponents, and comparisons of the form `x <=> 2^(p/q)`.
//!
//! All combinatorial decisions in this crate (cell membership, covering
//! counts, regularity verdicts) reduce to comparisons between rationals
//! and rational powers of two, which are decidable exactly.

use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::traits::{Signed, ToPrimitive};
use num::{One, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// A rational exponent `p/q` (for example the regularity exponent `s`).
pub type Exp = Ratio<i64>;

/// A dyadic scale `2^log2`, e.g. `Scale::neg(3)` is `1/8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scale {
    pub log2: i32,
}

impl Scale {
    pub fn new(log2: i32) -> Self {
        Scale { log2 }
    }

    /// `2^-k`
    pub fn neg(k: u32) -> Self {
        Scale { log2: -(k as i32) }
    }

    pub fn one() -> Self {
        Scale { log2: 0 }
    }

    pub fn value(&self) -> BigRational {
        pow2(self.log2 as i64)
    }

    pub fn to_f64(&self) -> f64 {
        (self.log2 as f64).exp2()
    }

    /// Level of the dyadic grid with this side length (`2^-k` -> `k`).
    /// Negative for scales coarser than 1.
    pub fn level(&self) -> i32 {
        -self.log2
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log2 >= 0 {
            write!(f, "{}", 1i128 << self.log2)
        } else {
            write!(f, "2^{}", self.log2)
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    /// Accepts `2^-k`, `2^k`, `1`, or `1/2^k`-style dyadic literals like `1/8`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(exp) = s.strip_prefix("2^") {
            let e: i32 = exp.parse().map_err(|_| format!("bad scale `{s}`"))?;
            return Ok(Scale::new(e));
        }
        if let Some(denom) = s.strip_prefix("1/") {
            let d: u128 = denom.parse().map_err(|_| format!("bad scale `{s}`"))?;
            if !d.is_power_of_two() {
                return Err(format!("scale `{s}` is not dyadic"));
            }
            return Ok(Scale::new(-(d.trailing_zeros() as i32)));
        }
        let v: u128 = s.parse().map_err(|_| format!("bad scale `{s}`"))?;
        if !v.is_power_of_two() {
            return Err(format!("scale `{s}` is not dyadic"));
        }
        Ok(Scale::new(v.trailing_zeros() as i32))
    }
}

/// `2^e` as an exact rational, `e` any integer.
pub fn pow2(e: i64) -> BigRational {
    let one = BigInt::one();
    if e >= 0 {
        BigRational::new(one << e as usize, BigInt::one())
    } else {
        BigRational::new(one.clone(), one << (-e) as usize)
    }
}

/// Exact comparison of a positive rational `x` against `2^e` with `e = p/q` rational.
///
/// Reduces to `x^q <=> 2^p`, evaluated in big integers.
pub fn cmp_pow2(x: &BigRational, e: Exp) -> Ordering {
    assert!(x.is_positive(), "cmp_pow2 needs x > 0");
    let (p, q) = (*e.numer(), *e.denom());
    debug_assert!(q > 0);
    let lhs = x.pow(q as i32);
    let rhs = pow2(p);
    lhs.cmp(&rhs)
}

/// `x >= 2^e`?
pub fn ge_pow2(x: &BigRational, e: Exp) -> bool {
    cmp_pow2(x, e) != Ordering::Less
}

/// `x <= 2^e`?
pub fn le_pow2(x: &BigRational, e: Exp) -> bool {
    cmp_pow2(x, e) != Ordering::Greater
}

/// An exact positive quantity `mantissa * 2^exp2` where `exp2` may be a
/// non-integer rational (so the quantity itself can be irrational, e.g.
/// `sqrt(2)`), yet comparisons and multiplication stay exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaledRational {
    pub mantissa: BigRational,
    pub exp2: Exp,
}

impl ScaledRational {
    pub fn new(mantissa: BigRational, exp2: Exp) -> Self {
        assert!(
            mantissa.is_positive(),
            "ScaledRational is for positive quantities"
        );
        ScaledRational { mantissa, exp2 }
    }

    pub fn from_rational(r: BigRational) -> Self {
        ScaledRational::new(r, Exp::zero())
    }

    pub fn one() -> Self {
        ScaledRational::new(BigRational::one(), Exp::zero())
    }

    pub fn mul(&self, other: &Self) -> Self {
        ScaledRational::new(&self.mantissa * &other.mantissa, self.exp2 + other.exp2)
    }

    pub fn mul_pow2(&self, e: Exp) -> Self {
        ScaledRational::new(self.mantissa.clone(), self.exp2 + e)
    }

    /// Exact total order: compares `m1 * 2^e1 <=> m2 * 2^e2` as
    /// `m1/m2 <=> 2^(e2 - e1)`.
    pub fn cmp_exact(&self, other: &Self) -> Ordering {
        let ratio = &self.mantissa / &other.mantissa;
        cmp_pow2(&ratio, other.exp2 - self.exp2)
    }

    /// Exact rational value when the power-of-two part is integral, else `None`.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.exp2.is_integer() {
            Some(&self.mantissa * pow2(*self.exp2.numer()))
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        let m = self.mantissa.to_f64().unwrap_or(f64::NAN);
        m * self.exp2.to_f64().map(f64::exp2).unwrap_or(f64::NAN)
    }
}

/// Parses `p`, `p/q`, or a decimal like `0.25` into an exact `Exp`.
pub fn parse_exp(s: &str) -> Result<Exp, String> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p
            .trim()
            .parse()
            .map_err(|_| format!("bad exponent `{s}`"))?;
        let q: i64 = q
            .trim()
            .parse()
            .map_err(|_| format!("bad exponent `{s}`"))?;
        if q == 0 {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(Exp::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int: i64 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().map_err(|_| format!("bad exponent `{s}`"))?
        };
        let digits = frac.len() as u32;
        if digits > 9 {
            return Err(format!("too many decimals in `{s}`"));
        }
        let frac_num: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| format!("bad exponent `{s}`"))?
        };
        let denom = 10i64.pow(digits);
        let magnitude = Exp::new(int.abs() * denom + frac_num, denom);
        return Ok(if neg { -magnitude } else { magnitude });
    }
    let p: i64 = s.parse().map_err(|_| format!("bad exponent `{s}`"))?;
    Ok(Exp::from_integer(p))
}

/// Parses `p/q` or `p` into an exact big rational.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| format!("bad rational `{s}`"))?;
        let q = BigInt::from_str(q.trim()).map_err(|_| format!("bad rational `{s}`"))?;
        if q.is_zero() {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(BigRational::new(p, q));
    }
    let e = parse_exp(s)?;
    Ok(BigRational::new(
        BigInt::from(*e.numer()),
        BigInt::from(*e.denom()),
    ))
}

/// Formats a rational as `p/q` (or `p` when integral) without precision loss.
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Neumaier compensated summation; keeps entropy identities reproducible
/// at the 1e-12 level regardless of term ordering decisions upstream.
#[derive(Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
