//! Shannon entropy and Kullback-Leibler divergence over dyadic (and
//! cube-family) partitions, plus the entropy-extraction constructions:
//! good scales, good cubes, and the partition pigeonhole.
//!
//! Entropy is base-2 floating point with compensated summation (identities
//! hold to 1e-12); all set/mass decisions stay exact rational.

use crate::dyadic::{GridSet, ScaleLadder};
use crate::exact::{ge_pow2, le_pow2, rational_to_f64, CompensatedSum, Exp, Scale, ScaledRational};
use crate::gen::ArcMeasure;
use crate::measure::GridMeasure;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("measure must be a probability measure")]
    NotProbability,
    #[error("absolute continuity fails on atom {0}")]
    NotAbsolutelyContinuous(String),
    #[error("partition levels must not exceed the resolution")]
    LevelTooFine,
    #[error("hypothesis fails: {0}")]
    Hypothesis(String),
    #[error("{0}")]
    Invalid(String),
}

/// A partition of a measure's support cells into blocks, stored as a block
/// id per support cell (parallel to the support's cell order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub block_of: Vec<u32>,
    pub block_count: u32,
}

impl Partition {
    /// The dyadic partition at level `j`: one block per ancestor cell.
    pub fn dyadic(mu: &GridMeasure, j: u32) -> Result<Partition, EntropyError> {
        if j > mu.level() {
            return Err(EntropyError::LevelTooFine);
        }
        let shift = mu.level() - j;
        let mut ids: BTreeMap<(i64, i64), u32> = BTreeMap::new();
        let mut block_of = Vec::with_capacity(mu.support().len());
        for &(x, y) in mu.support().coords() {
            let key = (x >> shift, y >> shift);
            let next = ids.len() as u32;
            let id = *ids.entry(key).or_insert(next);
            block_of.push(id);
        }
        Ok(Partition {
            block_of,
            block_count: ids.len() as u32,
        })
    }

    /// Builds a partition from disjoint cube sets covering the support.
    pub fn from_cubes(mu: &GridMeasure, cubes: &[GridSet]) -> Result<Partition, EntropyError> {
        let mut block_of = vec![u32::MAX; mu.support().len()];
        for (bid, q) in cubes.iter().enumerate() {
            for &(x, y) in q.coords() {
                let idx = mu.support().coords().binary_search(&(x, y)).map_err(|_| {
                    EntropyError::Invalid(format!("cube cell ({x},{y}) off support"))
                })?;
                if block_of[idx] != u32::MAX {
                    return Err(EntropyError::Invalid(format!(
                        "cell ({x},{y}) covered twice"
                    )));
                }
                block_of[idx] = bid as u32;
            }
        }
        if block_of.contains(&u32::MAX) {
            return Err(EntropyError::Invalid(
                "cubes do not cover the support".into(),
            ));
        }
        Ok(Partition {
            block_of,
            block_count: cubes.len() as u32,
        })
    }

    /// Every block of `self` lies inside a single block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.block_of.len() != coarser.block_of.len() {
            return false;
        }
        let mut parent: Vec<Option<u32>> = vec![None; self.block_count as usize];
        for (i, &b) in self.block_of.iter().enumerate() {
            match parent[b as usize] {
                None => parent[b as usize] = Some(coarser.block_of[i]),
                Some(p) => {
                    if p != coarser.block_of[i] {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn block_masses(&self, mu: &GridMeasure) -> Vec<BigRational> {
        assert_eq!(self.block_of.len(), mu.support().len());
        let mut out = vec![BigRational::zero(); self.block_count as usize];
        for ((_, w), &b) in mu.iter().zip(self.block_of.iter()) {
            out[b as usize] += w;
        }
        out
    }
}

/// A chain of partitions, each refined by the next.
#[derive(Clone, Debug)]
pub struct PartitionLadder {
    pub levels: Vec<Partition>,
}

impl PartitionLadder {
    /// Validates the refinement invariant: `levels[j+1]` refines `levels[j]`.
    pub fn new(levels: Vec<Partition>) -> Result<Self, EntropyError> {
        for (j, w) in levels.windows(2).enumerate() {
            if !w[1].refines(&w[0]) {
                return Err(EntropyError::Invalid(format!(
                    "level {} does not refine level {}",
                    j + 1,
                    j
                )));
            }
        }
        Ok(PartitionLadder { levels })
    }

    /// Dyadic partitions along a scale ladder, coarse to fine.
    pub fn dyadic(mu: &GridMeasure, ladder: &ScaleLadder) -> Result<Self, EntropyError> {
        let levels = (0..=ladder.depth)
            .map(|j| Partition::dyadic(mu, ladder.m * j))
            .collect::<Result<Vec<_>, _>>()?;
        PartitionLadder::new(levels)
    }
}

/// `H = sum p log2(1/p)` in bits over positive masses; zero masses are
/// skipped (`0 log 1/0 = 0`).
pub fn entropy_bits<'a>(masses: impl Iterator<Item = &'a BigRational>) -> f64 {
    let mut sum = CompensatedSum::default();
    for m in masses {
        if m.is_positive() {
            let p = rational_to_f64(m);
            sum.add(-p * p.log2());
        }
    }
    sum.value()
}

/// `H(mu, partition)` in bits; requires a probability measure.
pub fn entropy(mu: &GridMeasure, part: &Partition) -> Result<f64, EntropyError> {
    if !mu.is_probability() {
        return Err(EntropyError::NotProbability);
    }
    Ok(entropy_bits(part.block_masses(mu).iter()))
}

/// `H(mu, D_j)` over the dyadic partition at level `j`.
pub fn entropy_dyadic(mu: &GridMeasure, j: u32) -> Result<f64, EntropyError> {
    let part = Partition::dyadic(mu, j)?;
    entropy(mu, &part)
}

/// `H(nu, D_j)` for a circle measure.
pub fn entropy_arc(nu: &ArcMeasure, j: u32) -> Result<f64, EntropyError> {
    if j > nu.level() {
        return Err(EntropyError::LevelTooFine);
    }
    if nu.mass() != BigRational::one() {
        return Err(EntropyError::NotProbability);
    }
    let shift = nu.level() - j;
    let mut blocks: BTreeMap<u64, BigRational> = BTreeMap::new();
    for (&i, w) in nu.weights() {
        *blocks.entry(i >> shift).or_insert_with(BigRational::zero) += w;
    }
    Ok(entropy_bits(blocks.values()))
}

/// Conditional entropy `H(mu, fine | coarse) = sum_E mu(E) H(mu_E, fine)`,
/// computed directly from the definition (not via the difference identity,
/// which tests verify independently).
pub fn conditional_entropy(
    mu: &GridMeasure,
    fine: &Partition,
    coarse: &Partition,
) -> Result<f64, EntropyError> {
    if !mu.is_probability() {
        return Err(EntropyError::NotProbability);
    }
    if !fine.refines(coarse) {
        return Err(EntropyError::Invalid(
            "fine partition must refine the coarse one".into(),
        ));
    }
    // masses of fine blocks and which coarse block each sits in
    let fine_masses = fine.block_masses(mu);
    let coarse_masses = coarse.block_masses(mu);
    let mut parent = vec![0u32; fine.block_count as usize];
    for (i, &b) in fine.block_of.iter().enumerate() {
        parent[b as usize] = coarse.block_of[i];
    }
    let mut sum = CompensatedSum::default();
    for (fb, m) in fine_masses.iter().enumerate() {
        if !m.is_positive() {
            continue;
        }
        let cm = &coarse_masses[parent[fb] as usize];
        let p = rational_to_f64(m);
        let q = rational_to_f64(cm);
        // mu(E) * [mu_E(F) log 1/mu_E(F)] summed over F: regroup as
        // p * log(q/p) per fine block
        sum.add(p * (q / p).log2());
    }
    Ok(sum.value())
}

pub fn conditional_entropy_dyadic(
    mu: &GridMeasure,
    fine: u32,
    coarse: u32,
) -> Result<f64, EntropyError> {
    let f = Partition::dyadic(mu, fine)?;
    let c = Partition::dyadic(mu, coarse)?;
    conditional_entropy(mu, &f, &c)
}

/// Per-level entropies and per-step conditional entropies along a ladder.
#[derive(Clone, Debug)]
pub struct EntropyProfile {
    pub levels: Vec<u32>,
    pub level_bits: Vec<f64>,
    pub step_bits: Vec<f64>,
}

pub fn entropy_profile(
    mu: &GridMeasure,
    ladder: &ScaleLadder,
) -> Result<EntropyProfile, EntropyError> {
    let mut levels = Vec::new();
    let mut level_bits = Vec::new();
    for j in 0..=ladder.depth {
        let lvl = ladder.m * j;
        levels.push(lvl);
        level_bits.push(entropy_dyadic(mu, lvl)?);
    }
    let mut step_bits = Vec::new();
    for j in 0..ladder.depth as usize {
        step_bits.push(conditional_entropy_dyadic(mu, levels[j + 1], levels[j])?);
    }
    Ok(EntropyProfile {
        levels,
        level_bits,
        step_bits,
    })
}

fn kl_term(sum: &mut CompensatedSum, nu_e: &BigRational, mu_e: &BigRational) {
    let p = rational_to_f64(nu_e);
    let q = rational_to_f64(mu_e);
    sum.add(p * (p / q).log2());
}

/// `D_mu(nu, D_j) = sum nu(E) log2(nu(E)/mu(E))` over the dyadic partition,
/// aligned by ancestor cell. Requires `nu << mu` on the partition.
pub fn kl_divergence_dyadic(
    nu: &GridMeasure,
    mu: &GridMeasure,
    j: u32,
) -> Result<f64, EntropyError> {
    if !nu.is_probability() || !mu.is_probability() {
        return Err(EntropyError::NotProbability);
    }
    if j > nu.level() || j > mu.level() {
        return Err(EntropyError::LevelTooFine);
    }
    let nu_blocks = nu.coarse_masses(j);
    let mu_blocks = mu.coarse_masses(j);
    let mut sum = CompensatedSum::default();
    for (key, nv) in &nu_blocks {
        match mu_blocks.get(key) {
            Some(mv) if mv.is_positive() => kl_term(&mut sum, nv, mv),
            _ => {
                return Err(EntropyError::NotAbsolutelyContinuous(format!(
                    "dyadic cell {key:?} at level {j}"
                )))
            }
        }
    }
    Ok(sum.value())
}

/// Relative form `D_mu(nu, fine | coarse)`, computed directly from the
/// restricted normalised measures.
pub fn kl_conditional_dyadic(
    nu: &GridMeasure,
    mu: &GridMeasure,
    fine: u32,
    coarse: u32,
) -> Result<f64, EntropyError> {
    if fine < coarse {
        return Err(EntropyError::Invalid(
            "fine level must be >= coarse level".into(),
        ));
    }
    let nu_fine = nu.coarse_masses(fine);
    let mu_fine = mu.coarse_masses(fine);
    let nu_coarse = nu.coarse_masses(coarse);
    let mu_coarse = mu.coarse_masses(coarse);
    let shift = fine - coarse;
    let mut sum = CompensatedSum::default();
    for (key, nv) in &nu_fine {
        let parent = (key.0 >> shift, key.1 >> shift);
        let mv = mu_fine
            .get(key)
            .filter(|v| v.is_positive())
            .ok_or_else(|| EntropyError::NotAbsolutelyContinuous(format!("cell {key:?}")))?;
        let np = &nu_coarse[&parent];
        let mp = mu_coarse
            .get(&parent)
            .filter(|v| v.is_positive())
            .ok_or_else(|| EntropyError::NotAbsolutelyContinuous(format!("cell {parent:?}")))?;
        // nu(F) * D_{mu_F}(nu_F, E) term, regrouped per fine block:
        // nu(E) log [ (nu(E)/nu(F)) / (mu(E)/mu(F)) ]
        let p = rational_to_f64(nv);
        let r = rational_to_f64(&(nv / np)) / rational_to_f64(&(mv / mp));
        sum.add(p * r.log2());
    }
    Ok(sum.value())
}

/// Partial-sum lower bound data: `sum_{E in G} nu(E) log2(nu(E)/mu(E))`
/// together with `nu(G) log2(nu(G)/mu(G))`. Both are `>= -1` whenever the
/// blocks are disjoint with positive total `nu` mass (Gibbs).
pub fn partial_sum_bound(
    nu_masses: &[BigRational],
    mu_masses: &[BigRational],
    subset: &[usize],
) -> Result<(f64, f64), EntropyError> {
    let mut sum = CompensatedSum::default();
    let mut nu_g = BigRational::zero();
    let mut mu_g = BigRational::zero();
    for &i in subset {
        let (nv, mv) = (&nu_masses[i], &mu_masses[i]);
        if nv.is_positive() {
            if !mv.is_positive() {
                return Err(EntropyError::NotAbsolutelyContinuous(format!("block {i}")));
            }
            kl_term(&mut sum, nv, mv);
        }
        nu_g += nv;
        mu_g += mv;
    }
    if !nu_g.is_positive() {
        return Ok((0.0, 0.0));
    }
    let g_term = rational_to_f64(&nu_g) * (rational_to_f64(&nu_g) / rational_to_f64(&mu_g)).log2();
    Ok((sum.value(), g_term))
}

/// Outcome of [`good_scales`].
#[derive(Clone, Debug)]
pub struct GoodScalesReport {
    pub good: Vec<u32>,
    pub step_bits: Vec<f64>,
    pub required_bits: f64,
    /// `(1 - 2 sqrt(eps)) * N`
    pub required_count: f64,
    /// the smallness condition `log2(1/Delta) >= C/eps` behind the
    /// cardinality guarantee
    pub in_regime: bool,
    pub cardinality_ok: bool,
}

/// Finds the ladder steps where the uniform measure on the finest cells of
/// `set` gains nearly full entropy: `H(step) >= (s - sqrt(eps)) log2(1/Delta)`.
/// Requires `|K|_delta >= delta^{-(s - eps)}` (verified exactly).
pub fn good_scales(
    set: &GridSet,
    ladder: &ScaleLadder,
    s: Exp,
    eps: Exp,
    big_c: &BigRational,
) -> Result<GoodScalesReport, EntropyError> {
    let fine_level = ladder.m * ladder.depth;
    if set.level() < fine_level {
        return Err(EntropyError::LevelTooFine);
    }
    let cells = set
        .coarsen(fine_level as i32)
        .map_err(|_| EntropyError::LevelTooFine)?;
    let count = BigRational::from_integer(BigInt::from(cells.len()));
    // |K|_delta >= delta^-(s - eps) = 2^(m N (s - eps))
    let needed = Exp::from_integer((fine_level) as i64) * (s - eps);
    if !ge_pow2(&count, needed) {
        return Err(EntropyError::Hypothesis(format!(
            "covering count {} below the required delta^-(s-eps)",
            cells.len()
        )));
    }
    let mu_bar = GridMeasure::uniform(cells).map_err(|_| EntropyError::NotProbability)?;
    let mut step_bits = Vec::new();
    for j in 0..ladder.depth {
        let h = conditional_entropy_dyadic(&mu_bar, ladder.m * (j + 1), ladder.m * j)?;
        step_bits.push(h);
    }
    let s_f = *s.numer() as f64 / *s.denom() as f64;
    let eps_f = *eps.numer() as f64 / *eps.denom() as f64;
    let required_bits = (s_f - eps_f.sqrt()) * ladder.m as f64;
    let good: Vec<u32> = step_bits
        .iter()
        .enumerate()
        .filter(|(_, &h)| h >= required_bits - 1e-9)
        .map(|(j, _)| j as u32)
        .collect();
    let required_count = (1.0 - 2.0 * eps_f.sqrt()) * ladder.depth as f64;
    let in_regime = ladder.m as f64 >= rational_to_f64(big_c) / eps_f;
    let cardinality_ok = good.len() as f64 >= required_count - 1e-9;
    Ok(GoodScalesReport {
        good,
        step_bits,
        required_bits,
        required_count,
        in_regime,
        cardinality_ok,
    })
}

/// Outcome of [`good_cubes`].
#[derive(Clone, Debug)]
pub struct GoodCubesReport {
    /// ancestor coordinates of the good cubes at the requested level
    pub cubes: Vec<(i64, i64)>,
    pub mass: BigRational,
    /// `1 - 3/H`
    pub required_mass: BigRational,
    pub holds: bool,
    /// the constant actually used for the lower cutoff
    pub c_used: BigRational,
    /// largest lower-cutoff constant still meeting the mass bound, if the
    /// supplied one fails
    pub c_max: Option<ScaledRational>,
}

/// Splits the level-`Delta` cubes into light / good / heavy by
/// `c Delta^s <= mu(Q) <= Delta^(s - H eps)` and checks that the good part
/// keeps mass `>= 1 - 3/H`.
///
/// Preconditions (verified): `H(mu, D_Delta) >= (s - eps) log2(1/Delta)`
/// and `|spt mu|_Delta <= C Delta^-s`.
pub fn good_cubes(
    mu: &GridMeasure,
    big_delta: Scale,
    s: Exp,
    eps: Exp,
    h_const: &BigRational,
    c: Option<&BigRational>,
    big_c: &BigRational,
) -> Result<GoodCubesReport, EntropyError> {
    let j = big_delta.level();
    if j < 0 || j as u32 > mu.level() {
        return Err(EntropyError::LevelTooFine);
    }
    let j = j as u32;
    let count = mu
        .support()
        .covering_count(big_delta)
        .map_err(|_| EntropyError::LevelTooFine)?;
    // |spt mu|_Delta <= C * 2^(j s)
    let lhs = BigRational::from_integer(BigInt::from(count)) / big_c;
    if !le_pow2(&lhs, Exp::from_integer(j as i64) * s) {
        return Err(EntropyError::Hypothesis(format!(
            "covering count {count} exceeds C * Delta^-s"
        )));
    }
    let h_bits = entropy_dyadic(mu, j)?;
    let s_f = *s.numer() as f64 / *s.denom() as f64;
    let eps_f = *eps.numer() as f64 / *eps.denom() as f64;
    if h_bits < (s_f - eps_f) * j as f64 - 1e-9 {
        return Err(EntropyError::Hypothesis(format!(
            "entropy {h_bits:.6} bits below (s - eps) log2(1/Delta)"
        )));
    }
    let eps_rat = BigRational::new(BigInt::from(*eps.numer()), BigInt::from(*eps.denom()));
    let s_rat = BigRational::new(BigInt::from(*s.numer()), BigInt::from(*s.denom()));
    let c_used = match c {
        Some(v) => v.clone(),
        None => {
            if s_rat.is_zero() {
                BigRational::one()
            } else {
                &eps_rat / (BigRational::from_integer(BigInt::from(16)) * big_c * &s_rat)
            }
        }
    };
    // cutoffs: lower = c * 2^(-j s); upper = 2^(-j (s - H eps))
    let lower = ScaledRational::new(c_used.clone(), -Exp::from_integer(j as i64) * s);
    let h_eps = h_const * &eps_rat;
    let upper_exp_rat = (&s_rat - &h_eps) * BigRational::from_integer(BigInt::from(j));
    let upper_exp = Exp::new(
        i64::try_from(upper_exp_rat.numer().clone())
            .map_err(|_| EntropyError::Invalid("exponent overflow".into()))?,
        i64::try_from(upper_exp_rat.denom().clone())
            .map_err(|_| EntropyError::Invalid("exponent overflow".into()))?,
    );
    let upper = ScaledRational::new(BigRational::one(), -upper_exp);

    let masses = mu.coarse_masses(j);
    let mut cubes = Vec::new();
    let mut mass = BigRational::zero();
    let mut light: Vec<(&BigRational, (i64, i64))> = Vec::new();
    let mut heavy_mass = BigRational::zero();
    for (key, m) in &masses {
        let q = ScaledRational::from_rational(m.clone());
        if q.cmp_exact(&upper) == Ordering::Greater {
            heavy_mass += m;
        } else if q.cmp_exact(&lower) == Ordering::Less {
            light.push((m, *key));
        } else {
            cubes.push(*key);
            mass += m;
        }
    }
    let required_mass = BigRational::one() - BigRational::from_integer(BigInt::from(3)) / h_const;
    let holds = mass >= required_mass;
    let c_max = if holds {
        None
    } else {
        // budget for dropped light mass: 3/H - heavy_mass
        let budget = BigRational::from_integer(BigInt::from(3)) / h_const - &heavy_mass;
        if budget.is_negative() {
            None // even c -> 0 cannot rescue: the heavy cubes alone fail it
        } else {
            light.sort_by(|a, b| a.0.cmp(b.0));
            let mut cum = BigRational::zero();
            let mut cutoff: Option<BigRational> = None;
            for (m, _) in &light {
                cum += *m;
                if cum > budget {
                    cutoff = Some((*m).clone());
                    break;
                }
            }
            cutoff.map(|v| {
                // largest admissible c: all masses < c Delta^s are dropped,
                // so c must satisfy c Delta^s <= v
                ScaledRational::new(v, Exp::from_integer(j as i64) * s)
            })
        }
    };
    Ok(GoodCubesReport {
        cubes,
        mass,
        required_mass,
        holds,
        c_used,
        c_max,
    })
}

/// Outcome of [`partition_pigeonhole`].
#[derive(Clone, Debug)]
pub struct PigeonholeReport {
    pub f_set: GridSet,
    pub mass_f: BigRational,
    /// `d^2 / 16`
    pub required_mass: BigRational,
    pub holds: bool,
    /// levels where the selected sets carry total mass `>= d/2`
    pub good_levels: Vec<u32>,
    /// per level: total selected mass
    pub level_masses: Vec<BigRational>,
}

/// The pigeonhole construction: given per-level partitions and a selected
/// subset `H(Q)` inside each block (encoded as a per-cell membership flag),
/// if every point sits in its selected set on `>= d*N` levels, then the set
/// of points with `>= (d^2/16) N` *heavy* ancestors (blocks where the
/// selected part carries a `d/4` mass fraction) has mass `>= d^2/16`.
pub fn partition_pigeonhole(
    mu: &GridMeasure,
    partitions: &[Partition],
    h_member: &[Vec<bool>],
    d_frac: &BigRational,
) -> Result<PigeonholeReport, EntropyError> {
    if !mu.is_probability() {
        return Err(EntropyError::NotProbability);
    }
    let n = partitions.len();
    if n == 0 || h_member.len() != n {
        return Err(EntropyError::Invalid(
            "need one selection per partition level".into(),
        ));
    }
    let support_len = mu.support().len();
    for (j, (p, h)) in partitions.iter().zip(h_member).enumerate() {
        if p.block_of.len() != support_len || h.len() != support_len {
            return Err(EntropyError::Invalid(format!(
                "level {j}: wrong vector length"
            )));
        }
    }
    // hypothesis: every support cell is selected on >= d*N levels
    let dn = d_frac * BigRational::from_integer(BigInt::from(n));
    for (i, &(x, y)) in mu.support().coords().iter().enumerate() {
        let hits = (0..n).filter(|&j| h_member[j][i]).count();
        if BigRational::from_integer(BigInt::from(hits)) < dn {
            return Err(EntropyError::Hypothesis(format!(
                "cell ({x},{y}) selected on {hits}/{n} levels, below d*N"
            )));
        }
    }
    let weights: Vec<BigRational> = mu.iter().map(|(_, w)| w.clone()).collect();
    let quarter_d = d_frac / BigRational::from_integer(BigInt::from(4));
    let half_d = d_frac / BigRational::from_integer(BigInt::from(2));
    let mut heavy_count = vec![0usize; support_len];
    let mut good_levels = Vec::new();
    let mut level_masses = Vec::new();
    for j in 0..n {
        let part = &partitions[j];
        let block_mass = part.block_masses(mu);
        let mut selected = vec![BigRational::zero(); part.block_count as usize];
        for i in 0..support_len {
            if h_member[j][i] {
                selected[part.block_of[i] as usize] += &weights[i];
            }
        }
        let total_selected: BigRational = selected.iter().sum();
        if total_selected >= half_d {
            good_levels.push(j as u32);
        }
        level_masses.push(total_selected);
        let heavy: Vec<bool> = selected
            .iter()
            .zip(block_mass.iter())
            .map(|(sel, tot)| tot.is_positive() && sel >= &(&quarter_d * tot))
            .collect();
        for i in 0..support_len {
            if heavy[part.block_of[i] as usize] {
                heavy_count[i] += 1;
            }
        }
    }
    let d_sq_16 = d_frac * d_frac / BigRational::from_integer(BigInt::from(16));
    let needed_levels = &d_sq_16 * BigRational::from_integer(BigInt::from(n));
    let mut f_cells = Vec::new();
    let mut mass_f = BigRational::zero();
    for (i, &(x, y)) in mu.support().coords().iter().enumerate() {
        if BigRational::from_integer(BigInt::from(heavy_count[i])) >= needed_levels {
            f_cells.push((x, y));
            mass_f += &weights[i];
        }
    }
    let f_set = GridSet::new(mu.level(), f_cells);
    let holds = mass_f >= d_sq_16;
    Ok(PigeonholeReport {
        f_set,
        mass_f,
        required_mass: d_sq_16,
        holds,
        good_levels,
        level_masses,
    })
}
