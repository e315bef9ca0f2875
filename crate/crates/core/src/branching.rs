//! Branching structure of one-dimensional lattice sets: uniformity
//! verification, uniformisation, the dyadic interval decomposition around
//! a small exceptional set, branching-scale location for Frostman circle
//! measures, discrete measure convolution norms, and the per-level
//! projection lower-bound witness search.

use crate::dyadic::{DyadicInterval, GridSet, ScaleLadder};
use crate::exact::{cmp_pow2, ge_pow2, pow2, Exp, Scale, ScaledRational};
use crate::gen::ArcMeasure;
use crate::multiplicity::{multiplicity_field, ScalePairQuery};
use crate::projection::{project_cover, Direction};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BranchingError {
    #[error("points must lie on the ladder lattice in [0,1)")]
    OffLattice,
    #[error("empty point set")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error("Frostman hypothesis fails at x = {0}, r = 2^-{1}: mass {2}")]
    FrostmanWitness(String, u32, String),
    #[error("no ladder step reaches the required conditional entropy; table: {0:?}")]
    NoAdmissibleLevel(Vec<f64>),
    #[error("scale mismatch between delta-measures")]
    ScaleMismatch,
    #[error("hypothesis fails at cell ({0}, {1}): {2}")]
    HypothesisWitness(i64, i64, String),
}

/// A `{Delta^j}`-uniform lattice set: every occupied level-`m*j` interval
/// has exactly `branching[j]` children at level `m*(j+1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniformSet1D {
    pub ladder: ScaleLadder,
    /// sorted indices on the lattice `2^-(m*N) * Z cap [0,1)`
    pub points: Vec<u64>,
    pub branching: Vec<u64>,
}

/// Result of the uniformity verification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BranchingOutcome {
    Uniform(Vec<u64>),
    Violation {
        level: u32,
        interval: u64,
        expected: u64,
        got: u64,
    },
}

fn child_counts(points: &[u64], fine_shift: u32, coarse_shift: u32) -> BTreeMap<u64, u64> {
    // counts of distinct level-fine children per level-coarse interval
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_child: Option<u64> = None;
    for &p in points {
        let child = p >> fine_shift;
        if last_child == Some(child) {
            continue;
        }
        last_child = Some(child);
        *counts.entry(p >> coarse_shift).or_insert(0) += 1;
    }
    counts
}

/// Exact per-level child-count verification: the set is uniform iff every
/// occupied interval at level `m*j` has the same number of children.
pub fn branching_numbers(
    ladder: &ScaleLadder,
    points: &[u64],
) -> Result<BranchingOutcome, BranchingError> {
    let total_level = ladder.m * ladder.depth;
    let n_lattice = 1u64 << total_level;
    if points.is_empty() {
        return Err(BranchingError::Empty);
    }
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if *pts.last().unwrap() >= n_lattice {
        return Err(BranchingError::OffLattice);
    }
    let mut branching = Vec::with_capacity(ladder.depth as usize);
    for j in 0..ladder.depth {
        let fine_shift = total_level - ladder.m * (j + 1);
        let coarse_shift = total_level - ladder.m * j;
        let counts = child_counts(&pts, fine_shift, coarse_shift);
        let mut values = counts.iter();
        let (&first_iv, &expected) = values.next().expect("nonempty");
        let _ = first_iv;
        for (&iv, &got) in values {
            if got != expected {
                return Ok(BranchingOutcome::Violation {
                    level: j,
                    interval: iv,
                    expected,
                    got,
                });
            }
        }
        branching.push(expected);
    }
    // sanity: the product identity |P| = prod R_j holds for uniform sets
    let prod: u64 = branching.iter().product();
    debug_assert_eq!(prod, pts.len() as u64);
    Ok(BranchingOutcome::Uniform(branching))
}

/// Extracts a uniform subset: levels are processed fine-to-coarse; at each
/// level the occupied intervals are bucketed by the dyadic class of their
/// child count, the most popular class wins (ties toward larger
/// branching), under-branched intervals are dropped and over-branched ones
/// are trimmed to their point-richest children. Output is nonempty,
/// verified uniform, and reported with the size ratio.
pub fn uniformize(ladder: &ScaleLadder, points: &[u64]) -> Result<UniformSet1D, BranchingError> {
    let total_level = ladder.m * ladder.depth;
    if points.is_empty() {
        return Err(BranchingError::Empty);
    }
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if *pts.last().unwrap() >= (1u64 << total_level) {
        return Err(BranchingError::OffLattice);
    }

    let mut branching = vec![0u64; ladder.depth as usize];
    for j in (0..ladder.depth).rev() {
        let fine_shift = total_level - ladder.m * (j + 1);
        let coarse_shift = total_level - ladder.m * j;
        let counts = child_counts(&pts, fine_shift, coarse_shift);
        let all_equal = counts
            .values()
            .all(|&c| c == *counts.values().next().unwrap());
        let target = if all_equal {
            *counts.values().next().unwrap()
        } else {
            // dyadic classes [2^i, 2^(i+1)); most intervals win, ties to larger i
            let mut class_pop: BTreeMap<u32, u64> = BTreeMap::new();
            for &c in counts.values() {
                *class_pop.entry(63 - c.leading_zeros()).or_insert(0) += 1;
            }
            let best = class_pop
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
                .map(|(&i, _)| i)
                .unwrap();
            1u64 << best
        };
        branching[j as usize] = target;
        if all_equal {
            continue;
        }
        // drop under-branched intervals; trim over-branched ones to their
        // point-richest children (ties toward the lower child index)
        let mut point_count: BTreeMap<u64, u64> = BTreeMap::new();
        for &p in &pts {
            *point_count.entry(p >> fine_shift).or_insert(0) += 1;
        }
        let mut keep_children: std::collections::BTreeSet<u64> = std::collections::BTreeSet::new();
        let mut by_interval: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for &child in point_count.keys() {
            by_interval
                .entry(child >> (coarse_shift - fine_shift))
                .or_default()
                .push(child);
        }
        for (_, children) in by_interval {
            if (children.len() as u64) < target {
                continue; // drop the whole interval
            }
            let mut ranked = children;
            ranked.sort_by(|a, b| point_count[b].cmp(&point_count[a]).then(a.cmp(b)));
            for &c in ranked.iter().take(target as usize) {
                keep_children.insert(c);
            }
        }
        pts.retain(|&p| keep_children.contains(&(p >> fine_shift)));
        if pts.is_empty() {
            return Err(BranchingError::Invalid(
                "uniformisation emptied the set".into(),
            ));
        }
    }
    // the surviving set is uniform by construction; re-verify
    match branching_numbers(ladder, &pts)? {
        BranchingOutcome::Uniform(r) => {
            debug_assert_eq!(r, branching);
            Ok(UniformSet1D { ladder: *ladder, points: pts, branching: r })
        }
        BranchingOutcome::Violation { level, interval, expected, got } => {
            Err(BranchingError::Invalid(format!(
                "internal: uniformisation left a violation at level {level}, interval {interval}: {got} != {expected}"
            )))
        }
    }
}

/// A finite union of equal-level dyadic cells of `[0,1)`, the exceptional
/// set `E` of the interval decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicSubset1D {
    pub level: u32,
    pub cells: Vec<u64>,
}

impl DyadicSubset1D {
    pub fn new(level: u32, mut cells: Vec<u64>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        assert!(cells.last().is_none_or(|&c| c < (1u64 << level)));
        DyadicSubset1D { level, cells }
    }

    pub fn measure(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.cells.len()),
            BigInt::one() << self.level as usize,
        )
    }

    /// Exact `|E cap I|` for the dyadic interval at (`ilevel`, `index`).
    pub fn intersection_measure(&self, ilevel: u32, index: u64) -> BigRational {
        if ilevel <= self.level {
            let shift = self.level - ilevel;
            let lo = index << shift;
            let hi = (index + 1) << shift;
            let a = self.cells.partition_point(|&c| c < lo);
            let b = self.cells.partition_point(|&c| c < hi);
            BigRational::new(BigInt::from(b - a), BigInt::one() << self.level as usize)
        } else {
            let parent = index >> (ilevel - self.level);
            if self.cells.binary_search(&parent).is_ok() {
                BigRational::new(BigInt::one(), BigInt::one() << ilevel as usize)
            } else {
                BigRational::zero()
            }
        }
    }
}

/// Per-round trace of the decomposition: measures of the four families.
#[derive(Clone, Debug)]
pub struct RoundAudit {
    pub round: u32,
    pub transient_measure: BigRational,
    pub transient_count: usize,
    pub bad_measure: BigRational,
    pub good_measure: BigRational,
    pub short_count: usize,
}

/// Output of [`interval_decomposition`]: disjoint dyadic intervals `J`
/// covering measure `>= 1 - 1/C`, each of length `>= rho`, with no dyadic
/// sub-interval `I` (of length `>= gamma |J|`) of `E`-density `>= 2 C eps`.
#[derive(Clone, Debug)]
pub struct IntervalDecomposition {
    pub good: Vec<DyadicInterval>,
    pub good_measure: BigRational,
    pub rho_log2: i64,
    pub rounds: u32,
    pub audit: Vec<RoundAudit>,
}

/// The bad/good/short/transient refinement around a small set `E`:
/// repeatedly excise one densest-available bad dyadic sub-interval from
/// every transient interval and re-split the remainder, for `n(C, gamma)`
/// rounds. Both postconditions are re-verified exhaustively before
/// returning.
pub fn interval_decomposition(
    e: &DyadicSubset1D,
    c: &BigRational,
    gamma_log2: u32,
    eps: &BigRational,
) -> Result<IntervalDecomposition, BranchingError> {
    if gamma_log2 == 0 {
        return Err(BranchingError::Invalid("gamma must be <= 1/2".into()));
    }
    if c < &BigRational::one() {
        return Err(BranchingError::Invalid("C must be >= 1".into()));
    }
    if !eps.is_positive() || &e.measure() > eps {
        return Err(BranchingError::Invalid(
            "need |E| <= eps with eps > 0".into(),
        ));
    }
    let gamma = pow2(-(gamma_log2 as i64));
    let one = BigRational::one();
    let four_c_inv = &one / (BigRational::from_integer(BigInt::from(4)) * c);
    // n(C, gamma): smallest n with (1 - gamma)^n <= 1/(4C)
    let base = &one - &gamma;
    let mut rounds = 0u32;
    let mut pow = one.clone();
    while pow > four_c_inv {
        pow *= &base;
        rounds += 1;
        if rounds > 4096 {
            return Err(BranchingError::Invalid("round count overflow".into()));
        }
    }
    // rho: largest 2^-k with gamma^-(n+1) * rho <= 1/(4C)
    let gamma_pow = pow2((gamma_log2 as i64) * (rounds as i64 + 1));
    let rho_bound = &four_c_inv / &gamma_pow;
    let mut rho_log2: i64 = 0;
    while pow2(rho_log2) > rho_bound {
        rho_log2 -= 1;
    }

    let density = |ilevel: u32, index: u64| -> BigRational {
        e.intersection_measure(ilevel, index) * pow2(ilevel as i64)
    };
    let bad_threshold = BigRational::from_integer(BigInt::from(2)) * c * eps;

    let mut transient: Vec<(u32, u64)> = vec![(0, 0)];
    let mut good: Vec<(u32, u64)> = Vec::new();
    let mut bad: Vec<(u32, u64)> = Vec::new();
    let mut short: Vec<(u32, u64)> = Vec::new();
    let mut audit = Vec::new();
    for round in 0..rounds {
        let mut next: Vec<(u32, u64)> = Vec::new();
        for &(jl, ji) in &transient {
            // largest (then leftmost) bad dyadic sub-interval with
            // |I| >= gamma |J|
            let mut found: Option<(u32, u64)> = None;
            'levels: for l in jl..=jl + gamma_log2 {
                let width = 1u64 << (l - jl);
                for t in 0..width {
                    let idx = (ji << (l - jl)) + t;
                    if density(l, idx) >= bad_threshold {
                        found = Some((l, idx));
                        break 'levels;
                    }
                }
            }
            match found {
                None => good.push((jl, ji)),
                Some((bl, bi)) => {
                    bad.push((bl, bi));
                    // J minus I, split into intervals of length gamma |J|
                    let split_level = jl + gamma_log2;
                    let lo = ji << gamma_log2;
                    let hi = (ji + 1) << gamma_log2;
                    let excl_lo = bi << (split_level - bl);
                    let excl_hi = (bi + 1) << (split_level - bl);
                    for piece in lo..hi {
                        if piece >= excl_lo && piece < excl_hi {
                            continue;
                        }
                        if -(split_level as i64) < rho_log2 {
                            short.push((split_level, piece));
                        } else {
                            next.push((split_level, piece));
                        }
                    }
                }
            }
        }
        transient = next;
        let meas = |v: &Vec<(u32, u64)>| -> BigRational {
            v.iter().map(|&(l, _)| pow2(-(l as i64))).sum()
        };
        audit.push(RoundAudit {
            round,
            transient_measure: meas(&transient),
            transient_count: transient.len(),
            bad_measure: meas(&bad),
            good_measure: meas(&good),
            short_count: short.len(),
        });
        if transient.is_empty() {
            break;
        }
    }

    let good_measure: BigRational = good.iter().map(|&(l, _)| pow2(-(l as i64))).sum();
    // contract checks, exhaustive
    let floor = &one - &one / c;
    if good_measure < floor {
        return Err(BranchingError::Invalid(format!(
            "good measure {good_measure} below 1 - 1/C"
        )));
    }
    let verify_threshold = BigRational::from_integer(BigInt::from(8)) * c * eps;
    for &(jl, ji) in &good {
        if -(jl as i64) < rho_log2 {
            return Err(BranchingError::Invalid(
                "good interval shorter than rho".into(),
            ));
        }
        for l in jl..=jl + gamma_log2 {
            let width = 1u64 << (l - jl);
            for t in 0..width {
                let idx = (ji << (l - jl)) + t;
                if density(l, idx) >= verify_threshold {
                    return Err(BranchingError::Invalid(format!(
                        "density contract fails on level {l} index {idx}"
                    )));
                }
            }
        }
    }
    Ok(IntervalDecomposition {
        good: good
            .into_iter()
            .map(|(l, i)| DyadicInterval::new(l, i))
            .collect(),
        good_measure,
        rho_log2,
        rounds,
        audit,
    })
}

/// The exponent grid used to locate a branching scale: the smallest `n`
/// with `1/(2 d^(n-1)) <= tau/4`, and the grid `{d^-j / 2 : 0 <= j <= n}`.
pub fn tau_rationals(
    d: &BigRational,
    tau: &BigRational,
) -> Result<(u32, Vec<BigRational>), BranchingError> {
    if d <= &BigRational::one() || !tau.is_positive() {
        return Err(BranchingError::Invalid("need d > 1 and tau > 0".into()));
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let four = BigRational::from_integer(BigInt::from(4));
    let mut n = 0u32;
    loop {
        // 1/(2 d^(n-1)) <= tau/4  <=>  d^(n-1) >= 2/tau
        let d_pow = d.pow(n as i32 - 1);
        if &two / &d_pow <= &four.clone().recip() * tau * &four {
            // simplified: 1/(2 d^(n-1)) <= tau/4
            break;
        }
        n += 1;
        if n > 256 {
            return Err(BranchingError::Invalid("tau too small".into()));
        }
    }
    let grid = (0..=n).map(|j| d.pow(-(j as i32)) / &two).collect();
    Ok((n, grid))
}

/// Certificate returned by [`branching_scale_finder`].
#[derive(Clone, Debug)]
pub struct BranchingScaleCertificate {
    /// the selected exponent `p` from the grid (fine scale is `delta^(d p)`)
    pub p: BigRational,
    /// dyadic levels after rounding the exponents to the ladder
    pub coarse_level: u32,
    pub fine_level: u32,
    /// `K * e - level` rounding errors per grid scale
    pub rounding_errors: Vec<f64>,
    /// indices of the level-`fine_level` intervals forming `G`
    pub g_intervals: Vec<u64>,
    pub g_mass: BigRational,
    /// the required lower bound `tau^2 / (150 n^2)`
    pub g_mass_bound: BigRational,
    /// entropy table (bits) per grid step, for diagnostics
    pub step_entropy_bits: Vec<f64>,
    /// number of `(I, J)` pairs checked for the mass-drop inequality
    pub pairs_checked: usize,
}

/// Locates a scale from the `(tau, d)` grid where a Frostman circle measure
/// branches, and trims it to a subset `G` with a uniform per-child mass
/// drop. Both certificate inequalities are re-verified exactly on output.
pub fn branching_scale_finder(
    nu: &ArcMeasure,
    delta: Scale,
    d: &BigRational,
    tau: Exp,
    eta: Exp,
) -> Result<BranchingScaleCertificate, BranchingError> {
    if nu.mass() != BigRational::one() {
        return Err(BranchingError::Invalid(
            "nu must be a probability measure".into(),
        ));
    }
    let big_k = -(delta.log2 as i64);
    if big_k <= 0 {
        return Err(BranchingError::Invalid("delta must be < 1".into()));
    }
    let tau_rat = BigRational::new(BigInt::from(*tau.numer()), BigInt::from(*tau.denom()));
    let (n_frak, _grid) = tau_rationals(d, &tau_rat)?;

    // Frostman hypothesis nu(B(x,r)) <= delta^-eta * r^tau, exhaustive scan
    // over atom centers and dyadic radii via the prefix-sum table
    let table = crate::gen::BallMassTable::new(nu);
    for &atom in nu.weights().keys() {
        for i in 0..=nu.level() {
            let mass = table.mass_around(atom, -(i as i32));
            if mass.is_zero() {
                continue;
            }
            // mass <= 2^(K eta - i tau)
            let bound = Exp::from_integer(big_k) * eta - Exp::from_integer(i as i64) * tau;
            if cmp_pow2(&mass, bound) == Ordering::Greater {
                let x = BigRational::new(BigInt::from(atom), BigInt::one() << nu.level() as usize);
                return Err(BranchingError::FrostmanWitness(
                    crate::exact::format_rational(&x),
                    i,
                    crate::exact::format_rational(&mass),
                ));
            }
        }
    }

    // scale sequence delta_0 = delta^(d/2), delta_{j+1} = delta_j^(1/d),
    // exponents rounded to the dyadic ladder
    let two = BigRational::from_integer(BigInt::from(2));
    let mut exponents: Vec<BigRational> = Vec::new();
    for j in -1..=(n_frak as i32) {
        exponents.push(d.pow(-j) / &two);
    }
    let mut levels: Vec<u32> = Vec::new();
    let mut rounding_errors: Vec<f64> = Vec::new();
    for e in &exponents {
        let exact = crate::exact::rational_to_f64(e) * big_k as f64;
        let rounded = exact.round().max(0.0) as u32;
        let rounded = rounded.min(nu.level());
        rounding_errors.push(exact - rounded as f64);
        levels.push(rounded);
    }
    // levels decrease along the sequence (scales increase); drop degenerate steps
    let mut steps: Vec<(usize, u32, u32)> = Vec::new(); // (grid index j, fine, coarse)
    for j in 0..levels.len() - 1 {
        let (fine, coarse) = (levels[j], levels[j + 1]);
        if fine > coarse {
            steps.push((j, fine, coarse));
        }
    }
    if steps.is_empty() {
        return Err(BranchingError::NoAdmissibleLevel(vec![]));
    }

    let entropy_at = |lvl: u32| -> f64 { crate::entropy::entropy_arc(nu, lvl).unwrap_or(0.0) };
    let mut step_entropy = Vec::new();
    for &(_, fine, coarse) in &steps {
        step_entropy.push(entropy_at(fine) - entropy_at(coarse));
    }
    let tau_bar = tau / Exp::from_integer(4 * n_frak.max(1) as i64);
    let tau_bar_f = *tau_bar.numer() as f64 / *tau_bar.denom() as f64;
    let required_bits = tau_bar_f * big_k as f64;
    let best = step_entropy
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
        .map(|(i, _)| i);
    let best = match best {
        Some(i) if step_entropy[i] >= required_bits - 1e-9 => i,
        _ => return Err(BranchingError::NoAdmissibleLevel(step_entropy)),
    };
    let (grid_j, fine_level, coarse_level) = steps[best];

    // G_I per coarse interval with enough conditional entropy
    let coarse_masses: BTreeMap<u64, BigRational> = {
        let mut out = BTreeMap::new();
        for (&i, w) in nu.weights() {
            *out.entry(i >> (nu.level() - coarse_level))
                .or_insert_with(BigRational::zero) += w;
        }
        out
    };
    let fine_masses: BTreeMap<u64, BigRational> = {
        let mut out = BTreeMap::new();
        for (&i, w) in nu.weights() {
            *out.entry(i >> (nu.level() - fine_level))
                .or_insert_with(BigRational::zero) += w;
        }
        out
    };
    let half_entropy_bits = 0.5 * tau_bar_f * big_k as f64;
    // atom-trim threshold nu_I(J) < delta^(tau_bar/4)
    let trim_exp = -Exp::from_integer(big_k) * tau_bar / Exp::from_integer(4);
    let mut g_intervals: Vec<u64> = Vec::new();
    let mut g_mass = BigRational::zero();
    let child_shift = fine_level - coarse_level;
    for (&ci, cmass) in &coarse_masses {
        if !cmass.is_positive() {
            continue;
        }
        // H(nu_I, fine) in bits
        let mut h = crate::exact::CompensatedSum::default();
        let lo = ci << child_shift;
        let hi = (ci + 1) << child_shift;
        for (&fi, fmass) in fine_masses.range(lo..hi) {
            let _ = fi;
            let p = crate::exact::rational_to_f64(&(fmass / cmass));
            h.add(-p * p.log2());
        }
        if h.value() < half_entropy_bits - 1e-9 {
            continue;
        }
        for (&fi, fmass) in fine_masses.range(lo..hi) {
            let ratio = fmass / cmass;
            if cmp_pow2(&ratio, trim_exp) == Ordering::Less {
                g_intervals.push(fi);
                g_mass += fmass;
            }
        }
    }
    let n_sq = BigRational::from_integer(BigInt::from(150 * (n_frak as i64).max(1).pow(2)));
    let g_mass_bound = &tau_rat * &tau_rat / n_sq;
    if g_mass < g_mass_bound {
        return Err(BranchingError::Invalid(format!(
            "selected set has mass {g_mass}, below the bound {g_mass_bound}"
        )));
    }
    // mass-drop inequality per (I, J): nu(J cap G) <= delta^(tau/(20 n)) nu(I cap G)
    let drop_exp = -Exp::from_integer(big_k) * tau / Exp::from_integer(20 * n_frak.max(1) as i64);
    let g_set: std::collections::BTreeSet<u64> = g_intervals.iter().copied().collect();
    let mut pairs_checked = 0usize;
    let mut coarse_g: BTreeMap<u64, BigRational> = BTreeMap::new();
    for &fi in &g_intervals {
        let fmass = &fine_masses[&fi];
        *coarse_g
            .entry(fi >> child_shift)
            .or_insert_with(BigRational::zero) += fmass;
    }
    for (&ci, ig_mass) in &coarse_g {
        if !ig_mass.is_positive() {
            continue;
        }
        let lo = ci << child_shift;
        let hi = (ci + 1) << child_shift;
        for (&fi, fmass) in fine_masses.range(lo..hi) {
            let jg_mass = if g_set.contains(&fi) {
                fmass.clone()
            } else {
                BigRational::zero()
            };
            pairs_checked += 1;
            if jg_mass.is_zero() {
                continue;
            }
            let ratio = &jg_mass / ig_mass;
            if cmp_pow2(&ratio, drop_exp) == Ordering::Greater {
                return Err(BranchingError::Invalid(format!(
                    "mass-drop inequality fails for child {fi} of interval {ci}"
                )));
            }
        }
    }

    // p in the grid: the fine scale is delta^(d p); exponents[grid_j + 1] = p
    let p = exponents[grid_j + 1].clone();
    Ok(BranchingScaleCertificate {
        p,
        coarse_level,
        fine_level,
        rounding_errors,
        g_intervals,
        g_mass,
        g_mass_bound,
        step_entropy_bits: step_entropy,
        pairs_checked,
    })
}

/// A probability measure on the lattice `2^-k * Z cap [0, span)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaMeasure {
    pub k: u32,
    /// domain length in whole units (1 normally, 2 after convolution)
    pub span: u32,
    pub weights: BTreeMap<u64, BigRational>,
}

impl DeltaMeasure {
    pub fn new(k: u32, weights: BTreeMap<u64, BigRational>) -> Result<Self, BranchingError> {
        let n = 1u64 << k;
        for (&i, w) in &weights {
            if i >= n {
                return Err(BranchingError::OffLattice);
            }
            if !w.is_positive() {
                return Err(BranchingError::Invalid("weights must be positive".into()));
            }
        }
        let mass: BigRational = weights.values().sum();
        if mass != BigRational::one() {
            return Err(BranchingError::Invalid("mass must be exactly 1".into()));
        }
        Ok(DeltaMeasure {
            k,
            span: 1,
            weights,
        })
    }

    pub fn uniform_on(k: u32, atoms: &[u64]) -> Result<Self, BranchingError> {
        if atoms.is_empty() {
            return Err(BranchingError::Empty);
        }
        let mut atoms = atoms.to_vec();
        atoms.sort_unstable();
        atoms.dedup();
        let w = BigRational::new(BigInt::one(), BigInt::from(atoms.len()));
        DeltaMeasure::new(k, atoms.into_iter().map(|a| (a, w.clone())).collect())
    }

    pub fn point_mass(k: u32, atom: u64) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(atom, BigRational::one());
        DeltaMeasure {
            k,
            span: 1,
            weights,
        }
    }

    pub fn mass(&self) -> BigRational {
        self.weights.values().sum()
    }

    /// Exact squared L2 norm `sum w^2`.
    pub fn l2_norm_sq(&self) -> BigRational {
        self.weights.values().map(|w| w * w).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        crate::exact::rational_to_f64(&self.l2_norm_sq()).sqrt()
    }
}

/// Exact convolution of two lattice measures at the same scale; the result
/// lives on the doubled domain `[0, 2)`.
pub fn convolve(a: &DeltaMeasure, b: &DeltaMeasure) -> Result<DeltaMeasure, BranchingError> {
    if a.k != b.k {
        return Err(BranchingError::ScaleMismatch);
    }
    let mut weights: BTreeMap<u64, BigRational> = BTreeMap::new();
    for (&i, wa) in &a.weights {
        for (&j, wb) in &b.weights {
            *weights.entry(i + j).or_insert_with(BigRational::zero) += wa * wb;
        }
    }
    Ok(DeltaMeasure {
        k: a.k,
        span: a.span + b.span,
        weights,
    })
}

/// Outcome of [`inverse_hypothesis_gap`].
#[derive(Clone, Debug)]
pub struct GapReport {
    pub conv_norm_sq: BigRational,
    pub base_norm_sq: BigRational,
    /// does `|e1 * e2|_2 >= delta^kappa |e1|_2` hold (exact)?
    pub holds: bool,
    /// the critical exponent `log(|conv|/|e1|) / log(delta)`
    pub critical_kappa: f64,
}

/// Checks the convolution-norm hypothesis `|e1 * e2|_2 >= delta^kappa |e1|_2`
/// exactly and reports the critical exponent.
pub fn inverse_hypothesis_gap(
    e1: &DeltaMeasure,
    e2: &DeltaMeasure,
    kappa: Exp,
) -> Result<GapReport, BranchingError> {
    let conv = convolve(e1, e2)?;
    let conv_sq = conv.l2_norm_sq();
    let base_sq = e1.l2_norm_sq();
    // conv_sq >= 2^(-2 k kappa) * base_sq
    let ratio = &conv_sq / &base_sq;
    let bound = -Exp::from_integer(2 * e1.k as i64) * kappa;
    let holds = ge_pow2(&ratio, bound);
    let ratio_f = crate::exact::rational_to_f64(&ratio);
    let critical_kappa = 0.5 * ratio_f.log2() / (-(e1.k as f64));
    Ok(GapReport {
        conv_norm_sq: conv_sq,
        base_norm_sq: base_sq,
        holds,
        critical_kappa,
    })
}

/// Outcome of [`branching_lower_bound_witness`]: the levels where some cube
/// already projects richly at the child scale.
#[derive(Clone, Debug)]
pub struct WitnessReport {
    /// levels passing the projection bound, with the witness cube coords
    pub good_levels: Vec<(u32, (i64, i64), u64)>,
    /// `(1 - 10 eps) N`
    pub required_count: f64,
    pub cardinality_ok: bool,
    /// max over points of the bad-scale fraction actually measured
    pub measured_bad_density: f64,
    /// the smallness condition `log2(1/Delta) >= 2 C / eps^2` the
    /// cardinality guarantee relies on
    pub in_regime: bool,
    pub regime_note: String,
}

/// For each ladder level, scans the cubes of that level for one whose
/// child-scale projection count already meets `Delta^(sigma - s + 100 eps)`.
/// The multi-scale multiplicity hypothesis is verified first
/// (strict threshold, at most an `eps` fraction of bad levels per point).
#[allow(clippy::too_many_arguments)]
pub fn branching_lower_bound_witness(
    set: &GridSet,
    dir: &Direction,
    ladder: &ScaleLadder,
    sigma: Exp,
    eps: Exp,
    s: Exp,
    big_c: &BigRational,
    inflation_log2: i32,
) -> Result<WitnessReport, BranchingError> {
    let n = ladder.depth;
    let delta = ladder.finest();
    if set.level() < ladder.m * n {
        return Err(BranchingError::Invalid(
            "set resolution below the ladder".into(),
        ));
    }
    // |K|_delta >= delta^-(s - eps^2/2)
    let count = set
        .covering_count(delta)
        .map_err(|e| BranchingError::Invalid(e.to_string()))?;
    let needed = Exp::from_integer((ladder.m * n) as i64) * (s - eps * eps / Exp::from_integer(2));
    if !ge_pow2(&BigRational::from_integer(BigInt::from(count)), needed) {
        return Err(BranchingError::Invalid(format!(
            "covering count {count} below delta^-(s - eps^2/2)"
        )));
    }
    // hypothesis: per point, strict per-scale multiplicity exceedances on
    // at most an eps fraction of levels
    let thr = ScaledRational::new(
        BigRational::one(),
        Exp::from_integer(ladder.m as i64) * sigma,
    );
    let mut bad_counts = vec![0u32; set.len()];
    for j in 0..n {
        let q = ScalePairQuery::ladder_pair(inflation_log2, ladder.m, j);
        let field =
            multiplicity_field(set, dir, &q).map_err(|e| BranchingError::Invalid(e.to_string()))?;
        for (i, (_, v)) in field.entries.iter().enumerate() {
            // strictly above the threshold counts as bad
            let vr = BigRational::from_integer(BigInt::from(*v));
            let above = ScaledRational::from_rational(vr).cmp_exact(&thr) == Ordering::Greater;
            if above {
                bad_counts[i] += 1;
            }
        }
    }
    let eps_f = *eps.numer() as f64 / *eps.denom() as f64;
    let mut max_density = 0.0f64;
    for (i, &(x, y)) in set.coords().iter().enumerate() {
        let density = bad_counts[i] as f64 / n as f64;
        max_density = max_density.max(density);
        // exact comparison: bad_counts[i] <= eps * N
        let lhs = Exp::new(bad_counts[i] as i64, 1);
        if lhs > eps * Exp::from_integer(n as i64) {
            return Err(BranchingError::HypothesisWitness(
                x,
                y,
                format!("bad-scale count {} exceeds eps*N", bad_counts[i]),
            ));
        }
    }

    // projection bound per level: count >= 2^(m (s - sigma - 100 eps))
    let bound_exp = Exp::from_integer(ladder.m as i64) * (s - sigma - Exp::from_integer(100) * eps);
    let mut good_levels = Vec::new();
    for j in 0..n {
        let coarse_level = (ladder.m * j) as i32;
        let child_scale = Scale::neg(ladder.m * (j + 1));
        let cubes = set
            .coarsen(coarse_level)
            .map_err(|e| BranchingError::Invalid(e.to_string()))?;
        let shift = set.level() - coarse_level as u32;
        let mut best: Option<((i64, i64), u64)> = None;
        for &(qx, qy) in cubes.coords() {
            let sub: Vec<(i64, i64)> = set
                .coords()
                .iter()
                .copied()
                .filter(|&(x, y)| (x >> shift, y >> shift) == (qx, qy))
                .collect();
            let sub_set = GridSet::new(set.level(), sub);
            let cover = project_cover(&sub_set, dir, child_scale);
            if best.as_ref().is_none_or(|&(_, b)| cover > b) {
                best = Some(((qx, qy), cover));
            }
        }
        if let Some((cube, cover)) = best {
            if cover > 0 && ge_pow2(&BigRational::from_integer(BigInt::from(cover)), bound_exp) {
                good_levels.push((j, cube, cover));
            }
        }
    }
    let required_count = (1.0 - 10.0 * eps_f) * n as f64;
    let cardinality_ok = good_levels.len() as f64 >= required_count - 1e-9;
    let eps_sq_half = eps_f * eps_f / 2.0;
    let c_f = crate::exact::rational_to_f64(big_c);
    let in_regime = (ladder.m as f64) >= c_f / eps_sq_half;
    let regime_note = format!(
        "cardinality guarantee needs log2(1/Delta) = {} >= C/(eps^2/2) = {:.3}",
        ladder.m,
        c_f / eps_sq_half
    );
    Ok(WitnessReport {
        good_levels,
        required_count,
        cardinality_ok,
        measured_bad_density: max_density,
        in_regime,
        regime_note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::parse_rational;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn full_lattice_uniform() {
        let ladder = ScaleLadder::new(2, 3);
        let points: Vec<u64> = (0..64).collect();
        match branching_numbers(&ladder, &points).unwrap() {
            BranchingOutcome::Uniform(r) => assert_eq!(r, vec![4, 4, 4]),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn cantor_digits_uniform() {
        // base-4 digits {0, 3}, m = 2, depth 3
        let ladder = ScaleLadder::new(2, 3);
        let mut pts = vec![0u64];
        for _ in 0..3 {
            pts = pts.iter().flat_map(|&p| [4 * p, 4 * p + 3]).collect();
        }
        match branching_numbers(&ladder, &pts).unwrap() {
            BranchingOutcome::Uniform(r) => assert_eq!(r, vec![2, 2, 2]),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn deleted_point_violates() {
        let ladder = ScaleLadder::new(2, 2);
        let points: Vec<u64> = (1..16).collect(); // drop 0
        match branching_numbers(&ladder, &points).unwrap() {
            BranchingOutcome::Violation { level, .. } => assert_eq!(level, 1),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn uniformize_idempotent_on_uniform() {
        let ladder = ScaleLadder::new(2, 3);
        let mut pts = vec![0u64];
        for _ in 0..3 {
            pts = pts
                .iter()
                .flat_map(|&p| [4 * p, 4 * p + 2, 4 * p + 3])
                .collect();
        }
        // branching 3 everywhere: not a power of two, must survive unchanged
        let out = uniformize(&ladder, &pts).unwrap();
        assert_eq!(out.points, pts);
        assert_eq!(out.branching, vec![3, 3, 3]);
    }

    #[test]
    fn uniformize_dense_branch_survives() {
        let ladder = ScaleLadder::new(1, 3);
        // left half fully populated, right half sparse
        let mut pts: Vec<u64> = (0..4).collect();
        pts.push(7);
        let out = uniformize(&ladder, &pts).unwrap();
        assert!(out.points.iter().all(|&p| p < 4), "{:?}", out.points);
        match branching_numbers(&ladder, &out.points).unwrap() {
            BranchingOutcome::Uniform(_) => {}
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn uniformize_random_sets_verify() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let ladder = ScaleLadder::new(2, 4);
        for _ in 0..20 {
            let pts: Vec<u64> = (0..50).map(|_| rng.gen_range(0..256)).collect();
            let out = uniformize(&ladder, &pts).unwrap();
            assert!(!out.points.is_empty());
            match branching_numbers(&ladder, &out.points).unwrap() {
                BranchingOutcome::Uniform(r) => assert_eq!(r, out.branching),
                v => panic!("{v:?}"),
            }
        }
    }

    #[test]
    fn decomposition_empty_e() {
        let e = DyadicSubset1D::new(6, vec![]);
        let d = interval_decomposition(&e, &rat("2"), 2, &rat("1/16")).unwrap();
        assert_eq!(d.good.len(), 1);
        assert_eq!(d.good_measure, rat("1"));
    }

    #[test]
    fn decomposition_left_block() {
        // E = [0, 2^-6], C = 2, gamma = 1/4
        let e = DyadicSubset1D::new(6, vec![0]);
        let d = interval_decomposition(&e, &rat("2"), 2, &rat("1/64")).unwrap();
        assert!(d.good_measure >= rat("1/2"));
        // G avoids a left neighborhood: no good interval contains index 0 at level 6
        for j in &d.good {
            let lo = j.index << (6 - j.level.min(6));
            assert!(j.level > 6 || lo != 0 || j.level == 6 && j.index != 0);
        }
    }

    #[test]
    fn decomposition_alternating_trace() {
        // alternating cells of total measure 1/8 at level 6
        let cells: Vec<u64> = (0..8).map(|i| i * 8).collect();
        let e = DyadicSubset1D::new(6, cells);
        assert_eq!(e.measure(), rat("1/8"));
        let d = interval_decomposition(&e, &rat("2"), 1, &rat("1/8")).unwrap();
        // transient measure decays like (1 - gamma)^n
        let gamma = rat("1/2");
        let mut bound = rat("1");
        for a in &d.audit {
            bound *= rat("1") - gamma.clone();
            assert!(a.transient_measure <= bound, "round {}", a.round);
        }
    }

    #[test]
    fn tau_grid_examples() {
        let (n, q0) = tau_rationals(&rat("2"), &rat("1")).unwrap();
        assert_eq!(n, 2);
        assert_eq!(q0, vec![rat("1/2"), rat("1/4"), rat("1/8")]);
        let (n, _) = tau_rationals(&rat("2"), &rat("2")).unwrap();
        assert_eq!(n, 1);
        // n grows as tau halves
        let mut last = 0;
        for k in 1..6 {
            let tau = BigRational::new(BigInt::one(), BigInt::from(1i64 << k));
            let (n, _) = tau_rationals(&rat("2"), &tau).unwrap();
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn scale_finder_uniform() {
        let nu = ArcMeasure::uniform(8);
        let cert =
            branching_scale_finder(&nu, Scale::neg(8), &rat("2"), Exp::one(), Exp::new(1, 4))
                .unwrap();
        assert!(cert.g_mass >= cert.g_mass_bound);
        assert_eq!(cert.g_mass, rat("1"));
    }

    #[test]
    fn scale_finder_single_arc_fails_frostman() {
        let nu = ArcMeasure::single_arc(8, 3);
        let out = branching_scale_finder(&nu, Scale::neg(8), &rat("2"), Exp::one(), Exp::new(1, 4));
        assert!(matches!(out, Err(BranchingError::FrostmanWitness(_, _, _))));
    }

    #[test]
    fn scale_finder_cantor() {
        let nu = ArcMeasure::cantor(12, 2, &[0, 3]).unwrap();
        let cert = branching_scale_finder(
            &nu,
            Scale::neg(12),
            &rat("2"),
            Exp::new(1, 2),
            Exp::new(1, 4),
        )
        .unwrap();
        assert!(cert.g_mass >= cert.g_mass_bound);
        assert!(cert.pairs_checked > 0);
    }

    #[test]
    fn l2_uniform_atoms() {
        let eta = DeltaMeasure::uniform_on(4, &[0, 3, 7, 11]).unwrap();
        assert_eq!(eta.l2_norm_sq(), rat("1/4"));
        assert!((eta.l2_norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn convolve_point_mass_identity() {
        let eta = DeltaMeasure::uniform_on(4, &[1, 2, 9]).unwrap();
        let point = DeltaMeasure::point_mass(4, 0);
        let conv = convolve(&eta, &point).unwrap();
        assert_eq!(conv.weights, eta.weights);
        assert_eq!(conv.mass(), rat("1"));
        let rep = inverse_hypothesis_gap(&eta, &point, Exp::zero()).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn convolution_l2_contracts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let a: Vec<u64> = (0..rng.gen_range(1..20))
                .map(|_| rng.gen_range(0..64))
                .collect();
            let b: Vec<u64> = (0..rng.gen_range(1..20))
                .map(|_| rng.gen_range(0..64))
                .collect();
            let ea = DeltaMeasure::uniform_on(6, &a).unwrap();
            let eb = DeltaMeasure::uniform_on(6, &b).unwrap();
            let conv = convolve(&ea, &eb).unwrap();
            assert_eq!(conv.mass(), rat("1"));
            assert!(conv.l2_norm_sq() <= ea.l2_norm_sq());
            assert!(conv.l2_norm_sq() <= eb.l2_norm_sq());
        }
    }

    #[test]
    fn witness_search_full_row() {
        // full square slice [0,1) x {0}: s = 1 along the x-projection,
        // vertical fibers meet one cell per scale
        let cells: Vec<(i64, i64)> = (0..256).map(|i| (i, 0)).collect();
        let set = GridSet::new(8, cells);
        let ladder = ScaleLadder::new(2, 4);
        let rep = branching_lower_bound_witness(
            &set,
            &Direction::slope_int(0, 1),
            &ladder,
            Exp::zero(),
            Exp::new(1, 1000),
            Exp::one(),
            &rat("4"),
            0,
        )
        .unwrap();
        assert_eq!(rep.good_levels.len(), 4, "{rep:?}");
        assert!(rep.cardinality_ok);
        assert_eq!(rep.measured_bad_density, 0.0);
    }

    #[test]
    fn witness_search_sigma_too_small_errors() {
        // vertical fibers of the full square have high multiplicity at
        // every scale: sigma = 0 makes every level bad for CoSlope(0)
        let set = GridSet::unit_square(3);
        let ladder = ScaleLadder::new(1, 3);
        let out = branching_lower_bound_witness(
            &set,
            &Direction::CoSlope(BigRational::zero()),
            &ladder,
            Exp::zero(),
            Exp::new(1, 10),
            Exp::from_integer(2),
            &rat("4"),
            0,
        );
        assert!(matches!(
            out,
            Err(BranchingError::HypothesisWitness(_, _, _))
        ));
    }
}
