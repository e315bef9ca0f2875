//! Fiber multiplicity: how many fine-scale cells of a set a fiber line
//! meets inside a ball. High-multiplicity sets, per-scale bad-scale
//! profiles, the direction-averaged integrand, hereditary refinement of
//! high-multiplicity subsets, and two inequality checkers built on them.
//!
//! Two evaluation paths exist on purpose: [`multiplicity_at`] works on
//! arbitrary rational points in big-rational arithmetic, while
//! [`multiplicity_field`] scans all cell centers with i128 fixed-point
//! arithmetic. They agree exactly and cross-validate each other.

use crate::dyadic::{GridSet, Point, ScaleLadder};
use crate::exact::{Exp, Scale, ScaledRational};
use crate::gen::{directions_from, ArcMeasure};
use crate::measure::{Ball, GridMeasure};
use crate::projection::Direction;
use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::{One, Signed, Zero};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MultiplicityError {
    #[error("fine scale 2^{fine} is below the set resolution 2^-{resolution}")]
    ScaleBelowResolution { fine: i32, resolution: u32 },
    #[error("query scales are not ordered: fine {0} > coarse {1}")]
    UnorderedScales(String, String),
    #[error("direction has negative coefficients; multiplicity assumes slopes >= 0")]
    NegativeSlope,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("hypothesis fails at cell ({0}, {1}): {2}")]
    HypothesisWitness(i64, i64, String),
}

/// A pair of dyadic scales `fine <= coarse` within the window of interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScalePairQuery {
    pub fine: Scale,
    pub coarse: Scale,
}

impl ScalePairQuery {
    pub fn new(fine: Scale, coarse: Scale) -> Result<Self, MultiplicityError> {
        if fine.log2 > coarse.log2 {
            return Err(MultiplicityError::UnorderedScales(
                fine.to_string(),
                coarse.to_string(),
            ));
        }
        Ok(ScalePairQuery { fine, coarse })
    }

    /// `[delta, 1]`
    pub fn up_to_one(fine: Scale) -> Self {
        ScalePairQuery {
            fine,
            coarse: Scale::one(),
        }
    }

    /// The inflated ladder pair `[A*Delta^(j+1), A*Delta^j]` with
    /// `A = 2^a_log2`. The fine side is clamped to at most 1 so the
    /// counting scale stays representable on the grid; the ball radius is
    /// left as-is.
    pub fn ladder_pair(a_log2: i32, m: u32, j: u32) -> Self {
        let fine = Scale::new((a_log2 - (m * (j + 1)) as i32).min(0));
        let coarse = Scale::new(a_log2 - (m * j) as i32);
        debug_assert!(fine.log2 <= coarse.log2);
        ScalePairQuery { fine, coarse }
    }
}

fn direction_coeffs_i128(dir: &Direction) -> Result<(i128, i128, i128), MultiplicityError> {
    let (a, b) = dir.coefficients();
    if a.is_negative() || b.is_negative() {
        return Err(MultiplicityError::NegativeSlope);
    }
    // common denominator form (A x + B y) / D
    let da = a.denom().clone();
    let db = b.denom().clone();
    let d = num::integer::lcm(da.clone(), db.clone());
    let big_a = a.numer() * (&d / da);
    let big_b = b.numer() * (&d / db);
    // cap keeps every intermediate product inside i128 even for level-40
    // grids after renormalisation
    let cap = BigInt::from(1i64 << 20);
    if big_a.clone().max(big_b.clone()).max(d.clone()) > cap {
        return Err(MultiplicityError::Precondition(
            "slope coefficients too large for the fixed-point scan".into(),
        ));
    }
    let to_i128 = |v: BigInt, what: &str| -> Result<i128, MultiplicityError> {
        i128::try_from(v).map_err(|_| MultiplicityError::Precondition(format!("{what} too large")))
    };
    Ok((
        to_i128(big_a, "slope numerator")?,
        to_i128(big_b, "slope numerator")?,
        to_i128(d, "slope denominator")?,
    ))
}

/// The multiplicity of a point: the number of `fine`-cells of the coarsened
/// set that meet both the open ball `B(x, coarse)` and the fiber line
/// `{z : pi(z) = pi(x)}`. Exact rational arithmetic; accepts any point.
pub fn multiplicity_at(
    set: &GridSet,
    dir: &Direction,
    x: &Point,
    q: &ScalePairQuery,
) -> Result<u64, MultiplicityError> {
    let j = q.fine.level();
    if j > set.level() as i32 {
        return Err(MultiplicityError::ScaleBelowResolution {
            fine: q.fine.log2,
            resolution: set.level(),
        });
    }
    let (a, b) = dir.coefficients();
    if a.is_negative() || b.is_negative() {
        return Err(MultiplicityError::NegativeSlope);
    }
    let coarse_set = set
        .coarsen(j)
        .map_err(|_| MultiplicityError::ScaleBelowResolution {
            fine: q.fine.log2,
            resolution: set.level(),
        })?;
    let t = dir.project(&x.x, &x.y);
    let radius = q.coarse.value();
    let mut count = 0u64;
    for cell in coarse_set.cells() {
        if dir.cell_meets_fiber(&cell, &t) && cell.meets_open_ball(x, &radius) {
            count += 1;
        }
    }
    Ok(count)
}

/// Multiplicity values at every cell center of `set`, computed with the
/// i128 fixed-point fast path. Entries are sorted by cell coordinates.
#[derive(Clone, Debug)]
pub struct MultiplicityField {
    pub dir: Direction,
    pub query: ScalePairQuery,
    pub entries: Vec<((i64, i64), u64)>,
}

impl MultiplicityField {
    pub fn value_at(&self, ix: i64, iy: i64) -> Option<u64> {
        self.entries
            .binary_search_by_key(&(ix, iy), |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn max_value(&self) -> u64 {
        self.entries.iter().map(|e| e.1).max().unwrap_or(0)
    }

    /// Cells whose multiplicity meets the threshold.
    pub fn level_set(&self, level: u32, thr: &ScaledRational) -> GridSet {
        let cells = self
            .entries
            .iter()
            .filter(|(_, v)| count_meets(*v, thr))
            .map(|&(c, _)| c)
            .collect();
        GridSet::new(level, cells)
    }
}

/// `count >= thr` with the threshold an exact `mantissa * 2^e` quantity.
pub fn count_meets(count: u64, thr: &ScaledRational) -> bool {
    if count == 0 {
        return false;
    }
    let c = ScaledRational::from_rational(BigRational::from_integer(BigInt::from(count)));
    c.cmp_exact(thr) != Ordering::Less
}

/// `2^e` as an exact threshold, e.g. `delta^-sigma = 2^(k*sigma)`.
pub fn pow2_threshold(e: Exp) -> ScaledRational {
    ScaledRational::new(BigRational::one(), e)
}

/// `delta^-sigma` for `delta = 2^-k`.
pub fn power_threshold(delta: Scale, sigma: Exp) -> ScaledRational {
    pow2_threshold(-Exp::from_integer(delta.log2 as i64) * sigma)
}

/// Evaluates the multiplicity of every cell center of `set` against the
/// coarsened set, in integer arithmetic.
pub fn multiplicity_field(
    set: &GridSet,
    dir: &Direction,
    q: &ScalePairQuery,
) -> Result<MultiplicityField, MultiplicityError> {
    let k = set.level();
    let j = q.fine.level();
    if j > k as i32 || j < 0 {
        return Err(MultiplicityError::ScaleBelowResolution {
            fine: q.fine.log2,
            resolution: k,
        });
    }
    let j = j as u32;
    let (ca, cb, _cd) = direction_coeffs_i128(dir)?;
    let coarse_set = set.coarsen(j as i32).expect("checked above");
    let coarse: Vec<(i128, i128)> = coarse_set
        .coords()
        .iter()
        .map(|&(x, y)| (x as i128, y as i128))
        .collect();
    // working scale for fibers: 2^-(k+1) lattice, values scaled by D
    let fiber_shift = k + 1 - j;
    // ball radius in units of 2^-(k+1): R = 2^(k + 1 + log2 coarse)
    let r_exp = k as i32 + 1 + q.coarse.log2;
    if r_exp < 0 {
        return Err(MultiplicityError::UnorderedScales(
            q.fine.to_string(),
            q.coarse.to_string(),
        ));
    }
    let r = 1i128 << r_exp;
    let r_sq = r * r;
    let cell_shift = fiber_shift; // coarse cell bounds at the 2^-(k+1) lattice

    let mut entries = Vec::with_capacity(set.len());
    for &(nx, ny) in set.coords() {
        let px = 2 * nx as i128 + 1;
        let py = 2 * ny as i128 + 1;
        let t = ca * px + cb * py; // projection value, scaled by D * 2^(k+1)
        let mut count = 0u64;
        for &(cx, cy) in &coarse {
            // fiber: value range over the half-open cell is [lo, hi)
            let lo = (ca * cx + cb * cy) << fiber_shift;
            if lo > t {
                continue;
            }
            let hi = (ca * (cx + 1) + cb * (cy + 1)) << fiber_shift;
            if t >= hi {
                continue;
            }
            // open ball: squared distance from center to the closed cell
            let cx0 = cx << cell_shift;
            let cx1 = (cx + 1) << cell_shift;
            let cy0 = cy << cell_shift;
            let cy1 = (cy + 1) << cell_shift;
            let gx = if px < cx0 {
                cx0 - px
            } else if px > cx1 {
                px - cx1
            } else {
                0
            };
            let gy = if py < cy0 {
                cy0 - py
            } else if py > cy1 {
                py - cy1
            } else {
                0
            };
            if gx * gx + gy * gy < r_sq {
                count += 1;
            }
        }
        entries.push(((nx, ny), count));
    }
    Ok(MultiplicityField {
        dir: dir.clone(),
        query: *q,
        entries,
    })
}

/// Cells of `set` whose centers have multiplicity `>= thr` for the query.
pub fn high_mult_set(
    set: &GridSet,
    dir: &Direction,
    thr: &ScaledRational,
    q: &ScalePairQuery,
) -> Result<GridSet, MultiplicityError> {
    let field = multiplicity_field(set, dir, q)?;
    Ok(field.level_set(set.level(), thr))
}

/// The direction-averaged mass of the high-multiplicity set at threshold
/// `delta^-sigma` over scales `[delta, 1]`:
/// `sum_theta nu(theta) * mu(B(0,1) cap {m >= delta^-sigma})`, exact.
///
/// Directions are the representatives of `nu`'s own intervals; the support
/// of `mu` is expected to lie inside the unit ball (centered corpus).
pub fn iota_integrand(
    mu: &GridMeasure,
    nu: &ArcMeasure,
    sigma: Exp,
    delta: Scale,
) -> Result<BigRational, MultiplicityError> {
    let thr = power_threshold(delta, sigma);
    let q = ScalePairQuery::up_to_one(delta);
    let ball = Ball::unit();
    let mut total = BigRational::zero();
    for (dir, dir_mass) in directions_from(nu, Scale::neg(nu.level())) {
        let h = high_mult_set(mu.support(), &dir, &thr, &q)?;
        let mut inside = BigRational::zero();
        for (cell, w) in mu.iter() {
            if h.contains(cell.ix, cell.iy) && ball.contains(&cell.center()) {
                inside += w;
            }
        }
        total += dir_mass * inside;
    }
    Ok(total)
}

/// Per-point bad-scale statistics along a ladder; the low-multiplicity set
/// collects the points whose bad-scale density stays `<= lambda`.
#[derive(Clone, Debug)]
pub struct LowMultiplicityProfile {
    pub dir: Direction,
    pub ladder: ScaleLadder,
    pub sigma0: Exp,
    pub lambda: BigRational,
    /// ball inflation `A = 2^a_log2`
    pub a_log2: i32,
    /// per support cell: bad-scale index bitmask and density `|B(x)|/N`
    pub per_cell: Vec<((i64, i64), u64, Ratio<i64>)>,
    pub low_set: GridSet,
    /// `mu(B(1) \ L_theta)`
    pub excluded_mass: BigRational,
}

/// For each support cell center, the set of ladder indices `j` where the
/// point is in the high-multiplicity set at threshold `Delta^-sigma0` over
/// `[A*Delta^(j+1), A*Delta^j]`; then `L = {density <= lambda}`.
pub fn low_mult_profile(
    mu: &GridMeasure,
    dir: &Direction,
    ladder: &ScaleLadder,
    sigma0: Exp,
    lambda: &BigRational,
    a_log2: i32,
) -> Result<LowMultiplicityProfile, MultiplicityError> {
    let n = ladder.depth;
    assert!(n as usize <= 64, "ladder too deep for the bitmask profile");
    let set = mu.support();
    let thr = pow2_threshold(Exp::from_integer(ladder.m as i64) * sigma0);
    let mut masks = vec![0u64; set.len()];
    for j in 0..n {
        let q = ScalePairQuery::ladder_pair(a_log2, ladder.m, j);
        if q.fine.level() > set.level() as i32 {
            return Err(MultiplicityError::ScaleBelowResolution {
                fine: q.fine.log2,
                resolution: set.level(),
            });
        }
        let field = multiplicity_field(set, dir, &q)?;
        for (i, (_, v)) in field.entries.iter().enumerate() {
            if count_meets(*v, &thr) {
                masks[i] |= 1 << j;
            }
        }
    }
    let mut per_cell = Vec::with_capacity(set.len());
    let mut low_cells = Vec::new();
    for (i, &(x, y)) in set.coords().iter().enumerate() {
        let bad = masks[i].count_ones() as i64;
        let density = Ratio::new(bad, n as i64);
        let low = BigRational::new(BigInt::from(bad), BigInt::from(n)) <= *lambda;
        if low {
            low_cells.push((x, y));
        }
        per_cell.push(((x, y), masks[i], density));
    }
    let low_set = GridSet::new(set.level(), low_cells);
    let ball = Ball::unit();
    let mut excluded = BigRational::zero();
    for (cell, w) in mu.iter() {
        if ball.contains(&cell.center()) && !low_set.contains(cell.ix, cell.iy) {
            excluded += w;
        }
    }
    Ok(LowMultiplicityProfile {
        dir: dir.clone(),
        ladder: *ladder,
        sigma0,
        lambda: lambda.clone(),
        a_log2,
        per_cell,
        low_set,
        excluded_mass: excluded,
    })
}

/// Output of [`hereditary_refine`].
#[derive(Clone, Debug)]
pub struct HereditaryReport {
    pub refined: GridSet,
    /// the derived threshold `M' = c * C^-2 * kappa * M`
    pub m_prime: BigRational,
    pub mass_f: BigRational,
    pub mass_g: BigRational,
    /// `mu(G) >= mu(F)/2`
    pub mass_ok: bool,
    /// min over cell centers of `G` of the `[4*delta, 4]` multiplicity of `G`
    pub min_multiplicity: u64,
    /// min multiplicity `>= M'` pointwise
    pub mult_ok: bool,
}

/// Refines a positive-mass subset of a high-multiplicity set so that every
/// surviving point sees many cells of the *refined* set on its own fiber:
/// heavy tubes (those meeting `>= M'` fine cells of `F`) are kept, doubled,
/// and intersected with `F`.
#[allow(clippy::too_many_arguments)]
pub fn hereditary_refine(
    mu: &GridMeasure,
    f: &GridSet,
    dir: &Direction,
    m_thr: &BigRational,
    delta: Scale,
    kappa: &BigRational,
    big_c: &BigRational,
    c_abs: &BigRational,
) -> Result<HereditaryReport, MultiplicityError> {
    let set = mu.support();
    if f.level() != set.level() {
        return Err(MultiplicityError::Precondition(
            "subset must share the measure resolution".into(),
        ));
    }
    if !f.is_subset_of(set) {
        return Err(MultiplicityError::Precondition(
            "subset has cells outside the support".into(),
        ));
    }
    let mass_f = mu.set_mass(f);
    if f.is_empty() {
        if kappa.is_positive() {
            return Err(MultiplicityError::Precondition(
                "empty subset with positive kappa".into(),
            ));
        }
        return Ok(HereditaryReport {
            refined: GridSet::empty(f.level()),
            m_prime: BigRational::zero(),
            mass_f,
            mass_g: BigRational::zero(),
            mass_ok: true,
            min_multiplicity: 0,
            mult_ok: true,
        });
    }
    if &mass_f < kappa {
        return Err(MultiplicityError::Precondition(format!(
            "mu(F) = {} below kappa = {}",
            mass_f, kappa
        )));
    }
    // precondition: F inside B(1) and inside the high-multiplicity set of K
    let thr = ScaledRational::from_rational(m_thr.clone());
    let q = ScalePairQuery::up_to_one(delta);
    let h = high_mult_set(set, dir, &thr, &q)?;
    let ball = Ball::unit();
    for cell in f.cells() {
        if !ball.contains(&cell.center()) {
            return Err(MultiplicityError::HypothesisWitness(
                cell.ix,
                cell.iy,
                "cell center outside B(1)".into(),
            ));
        }
        if !h.contains(cell.ix, cell.iy) {
            return Err(MultiplicityError::HypothesisWitness(
                cell.ix,
                cell.iy,
                format!("multiplicity below M = {m_thr}"),
            ));
        }
    }

    let m_prime = c_abs * kappa * m_thr / (big_c * big_c);
    // fine cells of F at the delta scale, tube incidence by projection hull
    let f_coarse =
        f.coarsen(delta.level())
            .map_err(|_| MultiplicityError::ScaleBelowResolution {
                fine: delta.log2,
                resolution: f.level(),
            })?;
    let w = delta.value();
    let mut incidence: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
    for cell in f_coarse.cells() {
        let (lo, hi) = dir.cell_hull(&cell);
        // half-open image [lo, hi): the last tube is exclusive at hi
        let lo_idx = i64::try_from((&lo / &w).floor().to_integer()).expect("tube index");
        let hi_scaled = &hi / &w;
        let hi_idx = if hi_scaled.is_integer() {
            i64::try_from(hi_scaled.to_integer()).expect("tube index") - 1
        } else {
            i64::try_from(hi_scaled.floor().to_integer()).expect("tube index")
        };
        for idx in lo_idx..=hi_idx {
            *incidence.entry(idx).or_insert(0) += 1;
        }
    }
    let heavy: Vec<i64> = incidence
        .iter()
        .filter(|(_, &cnt)| BigRational::from_integer(BigInt::from(cnt)) >= m_prime)
        .map(|(&idx, _)| idx)
        .collect();
    // G = F cap union of doubled heavy tubes
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut g_cells = Vec::new();
    'cells: for cell in f.cells() {
        let (lo, hi) = dir.cell_hull(&cell);
        for &idx in &heavy {
            let t0 = (BigRational::from_integer(BigInt::from(idx)) - &half) * &w;
            let t1 = (BigRational::from_integer(BigInt::from(idx))
                + BigRational::from_integer(BigInt::from(2))
                - &half)
                * &w;
            // half-open image [lo, hi) meets the doubled tube [t0, t1)
            if lo < t1 && hi > t0 {
                g_cells.push((cell.ix, cell.iy));
                continue 'cells;
            }
        }
    }
    let g = GridSet::new(f.level(), g_cells);
    let mass_g = mu.set_mass(&g);
    let mass_ok = &mass_g * BigRational::from_integer(BigInt::from(2)) >= mass_f;
    // pointwise multiplicity of the refined set over [4*delta, 4]
    let q_out = ScalePairQuery::new(Scale::new(delta.log2 + 2), Scale::new(2))?;
    let mut min_mult = u64::MAX;
    if g.is_empty() {
        min_mult = 0;
    } else {
        let field = multiplicity_field(&g, dir, &q_out)?;
        for (_, v) in &field.entries {
            min_mult = min_mult.min(*v);
        }
    }
    let mult_ok = BigRational::from_integer(BigInt::from(min_mult)) >= m_prime;
    Ok(HereditaryReport {
        refined: g,
        m_prime,
        mass_f,
        mass_g,
        mass_ok,
        min_multiplicity: min_mult,
        mult_ok,
    })
}

/// Parameters of the multiplicity-decomposition inequality checker.
#[derive(Clone, Debug)]
pub struct MultDecompParams {
    /// outer ball inflation `A = 2^a_log2`
    pub a_log2: i32,
    pub kappa: BigRational,
    /// coarse threshold `M`
    pub m_thr: BigRational,
    /// fine threshold `N >= M`
    pub n_thr: BigRational,
    pub delta: Scale,
    pub big_delta: Scale,
    /// the absolute constant `c` in `c(kappa) = c * kappa^2 / (A^2 C^3)`
    pub c_abs: BigRational,
    pub big_c: BigRational,
    /// dyadic stand-in for the paper-style factor-3 inflations
    pub inflation_log2: u32,
}

/// Outcome of [`check_mult_decomposition`]; all quantities exact rationals.
#[derive(Clone, Debug)]
pub struct MultDecompReport {
    pub lhs: BigRational,
    pub coarse_term: BigRational,
    pub tail_term: BigRational,
    pub rhs: BigRational,
    pub slack: BigRational,
    pub holds: bool,
    /// largest admissible `c` for this instance (None when even `c -> 0`
    /// fails or the inequality never binds)
    pub max_admissible_c: Option<BigRational>,
}

/// Numerically evaluates the decomposition inequality
/// `mu(B1 cap H(N,[d,A])) <= (1+k) mu(B1 cap H(M,[fd,fD])) + k
///  + mu(B1 cap H(N,[d,A]) cap H(c(k) N/M, [D, f]))`
/// and reports the slack plus the largest admissible constant `c`.
pub fn check_mult_decomposition(
    mu: &GridMeasure,
    set: &GridSet,
    dir: &Direction,
    p: &MultDecompParams,
) -> Result<MultDecompReport, MultiplicityError> {
    if p.m_thr > p.n_thr || !p.m_thr.is_positive() {
        return Err(MultiplicityError::Precondition(
            "thresholds must satisfy 1 <= M <= N".into(),
        ));
    }
    if p.delta.log2 > p.big_delta.log2 {
        return Err(MultiplicityError::Precondition("delta > Delta".into()));
    }
    let ball = Ball::unit();
    let f = p.inflation_log2 as i32;

    let q_lhs = ScalePairQuery::new(p.delta, Scale::new(p.a_log2))?;
    let h_lhs = high_mult_set(
        set,
        dir,
        &ScaledRational::from_rational(p.n_thr.clone()),
        &q_lhs,
    )?;

    let q_coarse = ScalePairQuery::new(
        Scale::new(p.delta.log2 + f),
        Scale::new(p.big_delta.log2 + f),
    )?;
    let h_coarse = high_mult_set(
        set,
        dir,
        &ScaledRational::from_rational(p.m_thr.clone()),
        &q_coarse,
    )?;

    let mass_in_ball = |g: &GridSet| -> BigRational {
        let mut out = BigRational::zero();
        for (cell, w) in mu.iter() {
            if g.contains(cell.ix, cell.iy) && ball.contains(&cell.center()) {
                out += w;
            }
        }
        out
    };

    let lhs = mass_in_ball(&h_lhs);
    let coarse_term = mass_in_ball(&h_coarse);

    // tail: the [Delta, f]-scale multiplicity field, thresholded at c(k)N/M
    let q_tail = ScalePairQuery::new(p.big_delta, Scale::new(f))?;
    let tail_field = multiplicity_field(set, dir, &q_tail)?;
    let a_sq = BigRational::from_integer(BigInt::one() << (2 * p.a_log2.unsigned_abs() as usize));
    let a_sq = if p.a_log2 >= 0 {
        a_sq
    } else {
        BigRational::one() / a_sq
    };
    let c_kappa = |c: &BigRational| -> BigRational {
        c * &p.kappa * &p.kappa / (&a_sq * &p.big_c * &p.big_c * &p.big_c)
    };
    let tail_threshold = c_kappa(&p.c_abs) * &p.n_thr / &p.m_thr;
    let tail_set =
        tail_field.level_set(set.level(), &ScaledRational::from_rational(tail_threshold));
    let tail_term = mass_in_ball(&tail_set.intersection(&h_lhs));

    let one = BigRational::one();
    let rhs = (&one + &p.kappa) * &coarse_term + &p.kappa + &tail_term;
    let slack = &rhs - &lhs;
    let holds = !slack.is_negative();

    // Search mode: the tail term is a decreasing step function of the
    // threshold; the admissible region for c is an interval [0, c_max].
    // Walk the distinct multiplicity values on B(1) cap H_lhs downward.
    let base = (&one + &p.kappa) * &coarse_term + &p.kappa;
    let needed = &lhs - &base;
    let max_admissible_c = if !needed.is_positive() {
        None // inequality holds with an empty tail term; c unconstrained
    } else {
        // need mu{x in B1 cap H_lhs : m_tail(x) >= c(k) N/M} >= needed
        let mut vals: Vec<(u64, BigRational)> = Vec::new();
        for (cell, w) in mu.iter() {
            if h_lhs.contains(cell.ix, cell.iy) && ball.contains(&cell.center()) {
                if let Some(v) = tail_field.value_at(cell.ix, cell.iy) {
                    vals.push((v, w.clone()));
                }
            }
        }
        vals.sort_by_key(|v| std::cmp::Reverse(v.0));
        let mut acc = BigRational::zero();
        let mut best_thr: Option<u64> = None;
        for (v, w) in &vals {
            acc += w;
            if acc >= needed {
                best_thr = Some(*v);
                break;
            }
        }
        best_thr.filter(|&t| t > 0).map(|t| {
            // threshold t is admissible: c(k) N/M <= t
            BigRational::from_integer(BigInt::from(t)) * &p.m_thr / &p.n_thr
                * &a_sq
                * &p.big_c
                * &p.big_c
                * &p.big_c
                / (&p.kappa * &p.kappa)
        })
    };

    Ok(MultDecompReport {
        lhs,
        coarse_term,
        tail_term,
        rhs,
        slack,
        holds,
        max_admissible_c,
    })
}

/// Outcome of [`check_fiber_entropy_bound`].
#[derive(Clone, Debug)]
pub struct FiberBoundReport {
    /// max over fiber values of the coarse fiber count of the set
    pub max_fiber_count: u64,
    /// the bound `C^n * delta^-(sigma+eta)` at the supplied `C`
    pub bound: ScaledRational,
    pub holds: bool,
    /// minimal `C >= 1` making the bound hold (floating point view)
    pub min_c: f64,
}

/// Verifies the multi-scale hypothesis (bad scales carry at most an
/// `eta` fraction of the ladder, blockwise) and then bounds the global
/// fiber count `max_t |F_(g*delta) cap fiber(t)|` against
/// `C^n * delta^-(sigma+eta)`.
///
/// `inflation_log2` replaces the paper-style factor 50 with a dyadic
/// factor; `fine_inflation_log2` the factor 5.
#[allow(clippy::too_many_arguments)]
pub fn check_fiber_entropy_bound(
    f: &GridSet,
    dir: &Direction,
    ladder: &ScaleLadder,
    partition: &[u32],
    sigma: Exp,
    eta: &BigRational,
    big_c: &BigRational,
    inflation_log2: i32,
    fine_inflation_log2: i32,
) -> Result<FiberBoundReport, MultiplicityError> {
    let n_steps = partition.len().saturating_sub(1);
    if n_steps == 0 || partition[0] != 0 || *partition.last().unwrap() != ladder.depth {
        return Err(MultiplicityError::Precondition(
            "partition must run 0 = a_0 < ... < a_n = N".into(),
        ));
    }
    if partition.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MultiplicityError::Precondition(
            "partition must increase".into(),
        ));
    }
    // hypothesis: per point, sum of bad block lengths <= eta * N
    let mut block_bad = vec![vec![false; f.len()]; n_steps];
    for (bi, w) in partition.windows(2).enumerate() {
        let (a0, a1) = (w[0], w[1]);
        let fine = Scale::new((inflation_log2 - (ladder.m * a1) as i32).min(0));
        let coarse = Scale::new(inflation_log2 - (ladder.m * a0) as i32);
        if fine.level() > f.level() as i32 {
            return Err(MultiplicityError::ScaleBelowResolution {
                fine: fine.log2,
                resolution: f.level(),
            });
        }
        let q = ScalePairQuery::new(fine, coarse)?;
        let field = multiplicity_field(f, dir, &q)?;
        let thr = pow2_threshold(Exp::from_integer((ladder.m * (a1 - a0)) as i64) * sigma);
        for (i, (_, v)) in field.entries.iter().enumerate() {
            block_bad[bi][i] = count_meets(*v, &thr);
        }
    }
    let eta_n = eta * BigRational::from_integer(BigInt::from(ladder.depth));
    for (i, &(x, y)) in f.coords().iter().enumerate() {
        let mut bad_total = 0u32;
        for (bi, w) in partition.windows(2).enumerate() {
            if block_bad[bi][i] {
                bad_total += w[1] - w[0];
            }
        }
        if BigRational::from_integer(BigInt::from(bad_total)) > eta_n {
            return Err(MultiplicityError::HypothesisWitness(
                x,
                y,
                format!("bad block mass {bad_total} exceeds eta*N = {eta_n}"),
            ));
        }
    }

    // conclusion: max fiber count of the coarsened set at scale g*delta
    let g_scale = Scale::new(fine_inflation_log2 - (ladder.m * ladder.depth) as i32);
    let coarse =
        f.coarsen(g_scale.level())
            .map_err(|_| MultiplicityError::ScaleBelowResolution {
                fine: g_scale.log2,
                resolution: f.level(),
            })?;
    let max_fiber_count = max_fiber_count(&coarse, dir);

    // bound: C^n * delta^-(sigma + eta); eta enters through the f64 view
    let delta_log2 = -((ladder.m * ladder.depth) as i64);
    let exp = -Exp::from_integer(delta_log2) * sigma;
    let c_pow = num::traits::Pow::pow(big_c.clone(), n_steps as i32);
    let eta_f = crate::exact::rational_to_f64(eta);
    let bound = ScaledRational::new(c_pow, exp);
    let bound_f = bound.to_f64() * ((-delta_log2) as f64 * eta_f).exp2();
    let holds = (max_fiber_count as f64) <= bound_f;
    let min_c = if max_fiber_count == 0 {
        1.0
    } else {
        let sigma_f = *sigma.numer() as f64 / *sigma.denom() as f64;
        let target = (max_fiber_count as f64) / ((-delta_log2) as f64 * (sigma_f + eta_f)).exp2();
        target.powf(1.0 / n_steps as f64).max(1.0)
    };
    Ok(FiberBoundReport {
        max_fiber_count,
        bound,
        holds,
        min_c,
    })
}

/// Max over fiber values `t` of the number of cells meeting the fiber.
/// Proceeds through the critical values of the half-open projection ranges,
/// so the max is exact.
pub fn max_fiber_count(set: &GridSet, dir: &Direction) -> u64 {
    // events: range [lo, hi) contributes +1 at lo, -1 at hi
    let mut events: Vec<(BigRational, i32)> = Vec::new();
    for cell in set.cells() {
        let (lo, hi) = dir.cell_hull(&cell);
        // the half-open value range of the half-open cell is [lo, hi)
        events.push((lo, 1));
        events.push((hi, -1));
    }
    // half-open ranges: at equal values, closings run before openings
    events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = 0i64;
    let mut cur = 0i64;
    for (_, d) in events {
        cur += d as i64;
        best = best.max(cur);
    }
    best as u64
}
