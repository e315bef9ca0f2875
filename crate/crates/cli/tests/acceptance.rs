//! Acceptance suite: one test per contract, each printing a PASS line with
//! the measured quantities. Tolerances are pinned in the assertions.

use fraclab::config::ExperimentConfig;
use fraclab::probes::{iota_bruteforce, CELL_CAP};
use fraclab_core::branching::{
    branching_lower_bound_witness, branching_numbers, branching_scale_finder, convolve,
    interval_decomposition, uniformize, BranchingError, BranchingOutcome, DeltaMeasure,
    DyadicSubset1D,
};
use fraclab_core::dyadic::{GridSet, Point, ScaleLadder};
use fraclab_core::entropy::{
    conditional_entropy_dyadic, entropy_dyadic, kl_conditional_dyadic, kl_divergence_dyadic,
    partial_sum_bound, Partition,
};
use fraclab_core::exact::{parse_rational, Exp, Scale, ScaledRational};
use fraclab_core::gen::{ArcMeasure, DigitSystem};
use fraclab_core::measure::{check_ahlfors, renormalize_set, Ball, GridMeasure};
use fraclab_core::multiplicity::{
    iota_integrand, multiplicity_at, multiplicity_field, ScalePairQuery,
};
use fraclab_core::projection::{greedy_min_cover, tube_decompose, Direction};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

fn rat(s: &str) -> BigRational {
    parse_rational(s).unwrap()
}

/// The default corpus instances at desk depth, centered in the unit ball.
fn corpus() -> Vec<(String, Exp, GridSet, GridMeasure)> {
    let specs: [(&str, &str, Exp); 4] = [
        (
            "four-corner",
            "b=4;D=(0,0),(0,3),(3,0),(3,3);n=3",
            Exp::one(),
        ),
        ("cantor-line", "b=4;D=(0,0),(3,0);n=3", Exp::new(1, 2)),
        ("segment", "b=4;D=(0,0),(1,0),(2,0),(3,0);n=3", Exp::one()),
        (
            "square",
            "b=2;D=(0,0),(0,1),(1,0),(1,1);n=4",
            Exp::from_integer(2),
        ),
    ];
    specs
        .iter()
        .map(|(name, spec, s)| {
            let sys = DigitSystem::parse_spec(spec).unwrap();
            let (set, mu) = sys.generate_centered().unwrap();
            (name.to_string(), *s, set, mu)
        })
        .collect()
}

fn sixteen_directions() -> Vec<Direction> {
    (0..16).map(|k| Direction::slope_int(k, 16)).collect()
}

#[test]
fn criterion_01_exact_identity_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dirs = sixteen_directions();
    let mut rescale_samples = 0usize;
    let mut chain_samples = 0usize;
    for (name, s, set, mu) in corpus() {
        // rescaling identity: T(z) = (z - z0)/r0 with z0 on the fine-scale
        // lattice and r0 a dyadic power maps multiplicity queries exactly
        for _ in 0..180 {
            let fine = rng.gen_range(2..=set.level());
            let k = rng.gen_range(0..=fine.min(2));
            if fine > set.level() - k {
                continue;
            }
            let span = 1i64 << fine;
            let ball = Ball::new(
                Point::dyadic(
                    rng.gen_range(-span / 2..span / 2),
                    rng.gen_range(-span / 2..span / 2),
                    fine,
                ),
                Scale::neg(k),
            );
            let image = match renormalize_set(&set, &ball) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let dir = &dirs[rng.gen_range(0..dirs.len())];
            let coarse_log2 = rng.gen_range(-(fine as i32)..=0);
            let q = ScalePairQuery::new(Scale::neg(fine), Scale::new(coarse_log2)).unwrap();
            let q_img = ScalePairQuery::new(
                Scale::new(-(fine as i32) + k as i32),
                Scale::new(coarse_log2 + k as i32),
            )
            .unwrap();
            // sample points: support cell centers and free lattice points
            let x = if rng.gen_bool(0.7) {
                let idx = rng.gen_range(0..set.len());
                set.cells().nth(idx).unwrap().center()
            } else {
                let lvl = set.level() + 1;
                let span = 1i64 << lvl;
                Point::dyadic(
                    rng.gen_range(-span / 2..span / 2),
                    rng.gen_range(-span / 2..span / 2),
                    lvl,
                )
            };
            let tx = ball.apply(&x);
            let a = multiplicity_at(&set, dir, &x, &q).unwrap();
            let b = multiplicity_at(&image, dir, &tx, &q_img).unwrap();
            assert_eq!(a, b, "{name}: rescaling identity broke (a={a}, b={b})");
            rescale_samples += 1;
        }
        // chain rule: two renormalisations compose to one, bit-exactly
        for _ in 0..120 {
            let k1 = rng.gen_range(0..=1u32);
            let k2 = rng.gen_range(0..=1u32);
            let lvl = 3u32;
            let b1 = Ball::new(
                Point::dyadic(rng.gen_range(-8..8), rng.gen_range(-8..8), lvl),
                Scale::neg(k1),
            );
            let b2 = Ball::new(
                Point::dyadic(rng.gen_range(-8..8), rng.gen_range(-8..8), lvl),
                Scale::neg(k2),
            );
            let two = mu.renormalize(&b1, s).and_then(|m| m.renormalize(&b2, s));
            let one = mu.renormalize(&b1.compose(&b2), s);
            match (two, one) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a, b, "{name}: chain rule broke");
                    chain_samples += 1;
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!(
                    "{name}: chain rule sides disagree on feasibility: {} vs {}",
                    a.is_ok(),
                    b.is_ok()
                ),
            }
        }
    }
    let total = rescale_samples + chain_samples;
    assert!(total >= 1000, "only {total} samples ran");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    println!(
        "ACCEPTANCE PASS criterion 1: exact identities on {rescale_samples} rescaling + {chain_samples} chain-rule samples in {secs:.1}s"
    );
}

#[test]
fn criterion_02_multiplicity_inclusions() {
    let dirs = sixteen_directions();
    let mut combos = 0usize;
    for (name, _, set, _) in corpus() {
        let lvl = set.level() as i32;
        // three scale pairs (fine, coarse ball radius)
        let pairs = [(-lvl, 0), (-lvl, -2), (-lvl + 2, 0)];
        for dir in &dirs {
            for &(fine, coarse) in &pairs {
                let q = ScalePairQuery::new(Scale::new(fine), Scale::new(coarse)).unwrap();
                let field = multiplicity_field(&set, dir, &q).unwrap();
                let max = field.max_value().max(2);

                // (i) threshold monotonicity as exact set inclusions
                let mut raw = [2u64, max.div_ceil(2), max];
                raw.sort_unstable();
                let thresholds: Vec<BigRational> = raw
                    .iter()
                    .map(|&t| BigRational::from_integer(BigInt::from(t)))
                    .collect();
                for w in thresholds.windows(2) {
                    let hi =
                        field.level_set(set.level(), &ScaledRational::from_rational(w[1].clone()));
                    let lo =
                        field.level_set(set.level(), &ScaledRational::from_rational(w[0].clone()));
                    assert!(
                        hi.is_subset_of(&lo),
                        "{name} {dir:?} ({fine},{coarse}): threshold inclusion fails"
                    );
                }

                // (ii) enlarging the ball radius, all thresholds at once
                let q_big = ScalePairQuery::new(Scale::new(fine), Scale::new(coarse + 2)).unwrap();
                let field_big = multiplicity_field(&set, dir, &q_big).unwrap();
                for (a, b) in field.entries.iter().zip(field_big.entries.iter()) {
                    assert!(a.1 <= b.1, "{name} {dir:?}: ball monotonicity fails");
                }

                // (iii) the scale trade, coarsening by C = 4: a line meets
                // at most 2C-1 children of any cell it crosses, so
                // m(fine) <= (2C-1) * m(4*fine) pointwise, i.e.
                // H(M,[d,D]) inside H(M/(2C-1),[Cd,D]) for every threshold M
                let q_tr = ScalePairQuery::new(Scale::new(fine + 2), Scale::new(coarse)).unwrap();
                let field_tr = multiplicity_field(&set, dir, &q_tr).unwrap();
                for (a, b) in field.entries.iter().zip(field_tr.entries.iter()) {
                    assert!(
                        7 * b.1 >= a.1,
                        "{name} {dir:?} ({fine},{coarse}): scale trade fails at {:?} ({} vs {})",
                        a.0,
                        a.1,
                        b.1
                    );
                }
                combos += 1;
            }
        }
    }
    println!(
        "ACCEPTANCE PASS criterion 2: inclusions (i)-(iii) over {combos} (instance, direction, scale-pair) combos, zero failures"
    );
}

#[test]
fn criterion_03_entropy_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let sys = DigitSystem::parse_spec("b=2;D=(0,0),(0,1),(1,1);n=5").unwrap();
    let (set, mu) = sys.generate().unwrap();
    // tilted companion measure on the same support
    let n = set.len() as u64;
    let total: u64 = (1..=n).sum();
    let mut weights = BTreeMap::new();
    for (i, &c) in set.coords().iter().enumerate() {
        weights.insert(
            c,
            BigRational::new(BigInt::from(i as u64 + 1), BigInt::from(total)),
        );
    }
    let nu = GridMeasure::new(set.clone(), &weights).unwrap();

    // entropy chain rule across every level pair
    for coarse in 0..set.level() {
        for fine in coarse + 1..=set.level() {
            let direct = conditional_entropy_dyadic(&mu, fine, coarse).unwrap();
            let diff = entropy_dyadic(&mu, fine).unwrap() - entropy_dyadic(&mu, coarse).unwrap();
            assert!(
                (direct - diff).abs() < 1e-12,
                "chain rule off by {}",
                direct - diff
            );
        }
    }
    // KL telescoping across the full ladder
    let end = kl_divergence_dyadic(&nu, &mu, set.level()).unwrap()
        - kl_divergence_dyadic(&nu, &mu, 0).unwrap();
    let mut sum = 0.0;
    for j in 0..set.level() {
        sum += kl_conditional_dyadic(&nu, &mu, j + 1, j).unwrap();
    }
    assert!(
        (end - sum).abs() < 1e-12,
        "telescoping off by {}",
        end - sum
    );
    // Gibbs on the full partition
    assert!(kl_divergence_dyadic(&nu, &mu, set.level()).unwrap() >= -1e-12);
    // partial sums over 500 random sub-collections
    let part = Partition::dyadic(&mu, set.level()).unwrap();
    let nu_masses = part.block_masses(&nu);
    let mu_masses = part.block_masses(&mu);
    let mut checked = 0;
    while checked < 500 {
        let subset: Vec<usize> = (0..nu_masses.len()).filter(|_| rng.gen_bool(0.4)).collect();
        if subset.is_empty() {
            continue;
        }
        let (sum, g_term) = partial_sum_bound(&nu_masses, &mu_masses, &subset).unwrap();
        assert!(
            sum >= g_term - 1e-12,
            "partial sum {sum} below group term {g_term}"
        );
        assert!(g_term >= -1.0 - 1e-12, "group term {g_term} below -1");
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    println!(
        "ACCEPTANCE PASS criterion 3: entropy chain rule, KL telescoping (<=1e-12), Gibbs and {checked} partial-sum bounds in {secs:.1}s"
    );
}

#[test]
fn criterion_04_interval_decomposition_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let level = 10u32;
    let mut runs = 0usize;
    for eps_log in [4u32, 6] {
        for c_val in [2u32, 4] {
            for gamma_log2 in [2u32, 3] {
                for _ in 0..25 {
                    let eps = BigRational::new(BigInt::one(), BigInt::from(1u64 << eps_log));
                    let max_cells = 1u64 << (level - eps_log);
                    let count = rng.gen_range(0..=max_cells);
                    let cells: Vec<u64> = (0..count)
                        .map(|_| rng.gen_range(0..(1u64 << level)))
                        .collect();
                    let e = DyadicSubset1D::new(level, cells);
                    let c = BigRational::from_integer(BigInt::from(c_val));
                    // the construction re-verifies |G| >= 1 - 1/C and the
                    // 8*C*eps density bound exhaustively before returning
                    let d =
                        interval_decomposition(&e, &c, gamma_log2, &eps).unwrap_or_else(|err| {
                            panic!("eps=2^-{eps_log} C={c_val} gamma=2^-{gamma_log2}: {err}")
                        });
                    assert!(d.good_measure >= BigRational::one() - BigRational::one() / &c);
                    runs += 1;
                }
            }
        }
    }
    assert_eq!(runs, 200);
    println!(
        "ACCEPTANCE PASS criterion 4: interval decomposition contract verified exhaustively on {runs} fuzzed sets, zero violations"
    );
}

#[test]
fn criterion_05_branching_scale_certificates() {
    let mut certs = 0usize;
    for k in [8u32, 12] {
        let delta = Scale::neg(k);
        let d = rat("2");
        // uniform arcs satisfy both Frostman exponents
        let uniform = ArcMeasure::uniform(k);
        for tau in [Exp::new(1, 2), Exp::one()] {
            let cert = branching_scale_finder(&uniform, delta, &d, tau, Exp::new(1, 4))
                .unwrap_or_else(|e| panic!("uniform k={k} tau={tau}: {e}"));
            assert!(cert.g_mass >= cert.g_mass_bound);
            assert!(cert.pairs_checked > 0);
            certs += 1;
        }
        // the Cantor angle measure is tau = 1/2 Frostman
        let cantor = ArcMeasure::cantor(k, 2, &[0, 3]).unwrap();
        let cert = branching_scale_finder(&cantor, delta, &d, Exp::new(1, 2), Exp::new(1, 4))
            .unwrap_or_else(|e| panic!("cantor k={k}: {e}"));
        assert!(cert.g_mass >= cert.g_mass_bound);
        certs += 1;
        // tau = 1 genuinely violates its Frostman hypothesis
        let out = branching_scale_finder(&cantor, delta, &d, Exp::one(), Exp::new(1, 4));
        assert!(
            matches!(out, Err(BranchingError::FrostmanWitness(_, _, _))),
            "cantor tau=1 must fail the hypothesis"
        );
    }
    println!(
        "ACCEPTANCE PASS criterion 5: {certs} branching-scale certificates verified (mass bound and per-pair mass drop), hypothesis rejections confirmed"
    );
}

#[test]
fn criterion_06_greedy_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checks = 0usize;
    for trial in 0..20 {
        let n_cells = rng.gen_range(4..=14usize);
        let mut cells = Vec::new();
        while cells.len() < n_cells {
            let c = (rng.gen_range(0..16i64), rng.gen_range(0..16i64));
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let set = GridSet::new(4, cells);
        let mu = if trial % 2 == 0 {
            GridMeasure::uniform(set.clone()).unwrap()
        } else {
            let total: u64 = (1..=set.len() as u64).sum();
            let mut weights = BTreeMap::new();
            for (i, &c) in set.coords().iter().enumerate() {
                weights.insert(
                    c,
                    BigRational::new(BigInt::from(i as u64 + 1), BigInt::from(total)),
                );
            }
            GridMeasure::new(set.clone(), &weights).unwrap()
        };
        let masses: Vec<BigRational> = mu.iter().map(|(_, w)| w.clone()).collect();
        let total: BigRational = masses.iter().sum();
        // integer mass numerators over a common denominator, so the 2^n
        // subset sweep runs in machine arithmetic
        let mut denom = BigInt::one();
        for w in &masses {
            denom = num::integer::lcm(denom, w.denom().clone());
        }
        let nums: Vec<u128> = masses
            .iter()
            .map(|w| u128::try_from(w.numer() * (&denom / w.denom())).unwrap())
            .collect();
        for p in 0..=8i64 {
            let dir = Direction::slope_int(p, 8);
            let decomp = tube_decompose(&mu, &dir, Scale::neg(4));
            // tube bit per cell for the exhaustive oracle
            let tube_ids: Vec<usize> = set
                .coords()
                .iter()
                .map(|c| {
                    decomp
                        .tubes
                        .iter()
                        .position(|t| t.cells.contains(c))
                        .unwrap()
                })
                .collect();
            for frac in ["1/5", "1/2", "4/5"] {
                let m = rat(frac) * &total;
                let (cover, _) = greedy_min_cover(&mu, &dir, Scale::neg(4), &m).unwrap();
                // subset mass >= m  <=>  sum_num * m.denom >= m.numer * denom
                let lhs_scale = u128::try_from(m.denom().clone()).unwrap();
                let rhs = m.numer() * &denom;
                let rhs = u128::try_from(rhs).unwrap();
                let mut best = u32::MAX;
                for mask in 0u32..(1 << set.len()) {
                    let mut sum: u128 = 0;
                    let mut tubes = 0u64;
                    for i in 0..set.len() {
                        if mask & (1 << i) != 0 {
                            sum += nums[i];
                            tubes |= 1 << tube_ids[i];
                        }
                    }
                    if sum * lhs_scale >= rhs {
                        best = best.min(tubes.count_ones());
                    }
                }
                assert_eq!(
                    cover.count, best as u64,
                    "trial {trial} slope {p}/8 m={frac}: greedy {} vs exhaustive {}",
                    cover.count, best
                );
                checks += 1;
            }
        }
    }
    println!(
        "ACCEPTANCE PASS criterion 6: greedy minimal cover equals exhaustive subset minimisation on {checks} (measure, slope, mass) checks"
    );
}

#[test]
fn criterion_07_renormalization_preserves_regularity() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut checked = 0usize;
    for (name, s, set, mu) in corpus() {
        // certify the instance: the smallest power-of-two constant passing
        let base = check_ahlfors(&mu, s, &rat("1")).unwrap();
        let mut c_cert = BigRational::one();
        loop {
            if base.verdict_at(&c_cert) {
                break;
            }
            c_cert *= BigRational::from_integer(BigInt::from(2));
            assert!(c_cert < rat("1048576"), "{name}: no certifying constant");
        }
        let mut balls_done = 0usize;
        while balls_done < 50 {
            let k: i32 = rng.gen_range(-1..=2);
            if set.level() as i32 - k.max(0) < 1 {
                continue;
            }
            let lattice = set.level().min(4);
            let span = 1i64 << lattice;
            let ball = Ball::new(
                Point::dyadic(
                    rng.gen_range(-span..span),
                    rng.gen_range(-span..span),
                    lattice,
                ),
                Scale::new(-k),
            );
            let renorm = match mu.renormalize(&ball, s) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let rep = check_ahlfors(&renorm, s, &c_cert).unwrap();
            assert!(
                rep.passes,
                "{name}: ball {ball:?} breaks regularity (C = {c_cert})"
            );
            // the scan is exactly invariant: same extremal ratios
            assert_eq!(rep.c_best, base.c_best, "{name}: upper ratio drifted");
            assert_eq!(
                rep.lower_worst, base.lower_worst,
                "{name}: lower ratio drifted"
            );
            balls_done += 1;
            checked += 1;
        }
    }
    println!(
        "ACCEPTANCE PASS criterion 7: renormalisation preserved the certified regularity on {checked} random dyadic balls (extremal ratios bit-identical)"
    );
}

#[test]
fn criterion_08_projection_witness_search() {
    let cfg = ExperimentConfig::default_corpus(2, 2, 4);
    let planar = &cfg.planar[0]; // the product-set instance
    let sys = cfg.instantiate_planar(planar, 4).unwrap();
    let (set, _) = sys.generate_centered().unwrap();
    let ladder = ScaleLadder::new(2, 4);
    let s = Exp::one();
    let dir = Direction::slope_int(0, 1);
    let big_c = rat("4");

    // measure the bad-scale density per sigma, then rerun with the measured
    // density as the hypothesis budget
    let mut chosen: Option<(Exp, fraclab_core::branching::WitnessReport)> = None;
    for sigma in [Exp::new(1, 2), Exp::new(3, 4), Exp::one(), Exp::new(3, 2)] {
        let probe =
            branching_lower_bound_witness(&set, &dir, &ladder, sigma, Exp::one(), s, &big_c, 3)
                .unwrap();
        let measured = probe.measured_bad_density;
        let eps = Exp::new(
            (measured * ladder.depth as f64).round() as i64,
            ladder.depth as i64,
        );
        let rerun = branching_lower_bound_witness(&set, &dir, &ladder, sigma, eps, s, &big_c, 3);
        if let Ok(rep) = rerun {
            if measured <= 0.25 {
                chosen = Some((sigma, rep));
                break;
            }
            if chosen.is_none() {
                chosen = Some((sigma, rep));
            }
        }
    }
    let (sigma, rep) = chosen.expect("no sigma admitted the hypothesis");
    println!(
        "criterion 8 data: sigma={sigma}, measured bad density {:.3}, good levels {}/{}, required {:.2}",
        rep.measured_bad_density,
        rep.good_levels.len(),
        ladder.depth,
        rep.required_count
    );
    if rep.in_regime {
        assert!(
            rep.cardinality_ok,
            "inside the regime the cardinality bound must hold"
        );
        println!("ACCEPTANCE PASS criterion 8: witness cardinality bound holds inside the regime");
    } else {
        // report-only: the smallness condition on the base scale fails at
        // desk scale; print it as required
        println!("criterion 8 report-only: {}", rep.regime_note);
        assert!(
            !rep.good_levels.is_empty() || rep.required_count <= 0.0,
            "witness search found nothing and the requirement was nontrivial"
        );
        println!(
            "ACCEPTANCE PASS criterion 8: witness search ran; regime condition printed (report-only mode)"
        );
    }
}

#[test]
fn criterion_09_integrand_trend_and_dual_path() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default_corpus(2, 2, 6);
    let arcs: Vec<(String, ArcMeasure)> = cfg
        .arcs
        .iter()
        .map(|a| (a.name.clone(), cfg.build_arc(a).unwrap()))
        .collect();
    let mut groups_checked = 0usize;
    let mut dual_checked = 0usize;
    for planar in &cfg.planar {
        let template = DigitSystem::parse_spec(&planar.system).unwrap();
        let s = match template.exponent() {
            Some(s) => s,
            None => continue,
        };
        let sigma = s / Exp::from_integer(2);
        for (arc_name, nu) in &arcs {
            let mut values: Vec<(u32, BigRational)> = Vec::new();
            for n in cfg.ladder.n_min..=cfg.ladder.n_max {
                match cfg.planar_cell_count(planar, n) {
                    Ok(c) if c <= CELL_CAP => {}
                    _ => continue,
                }
                let sys = cfg.instantiate_planar(planar, n).unwrap();
                let (_, mu) = sys.generate_centered().unwrap();
                let delta = Scale::neg(cfg.ladder.m * n);
                let fast = iota_integrand(&mu, nu, sigma, delta).unwrap();
                let slow = iota_bruteforce(&mu, nu, sigma, delta).unwrap();
                assert_eq!(
                    fast, slow,
                    "{}/{arc_name}: dual paths disagree at N={n}",
                    planar.name
                );
                dual_checked += 1;
                values.push((n, fast));
            }
            assert!(values.len() >= 2, "{}: too few depths ran", planar.name);
            for w in values.windows(2) {
                assert!(
                    w[1].1 <= w[0].1,
                    "{}/{arc_name}: integrand increased from N={} to N={}",
                    planar.name,
                    w[0].0,
                    w[1].0
                );
            }
            groups_checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 600.0, "took {secs:.1}s");
    println!(
        "ACCEPTANCE PASS criterion 9: integrand non-increasing on {groups_checked} (instance, arc) groups at sigma = s/2; {dual_checked} dual-path evaluations agreed exactly; {secs:.1}s"
    );
}

#[test]
fn criterion_10_delta_measure_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let k = 10u32;
    for _ in 0..500 {
        let a: Vec<u64> = (0..rng.gen_range(1..64))
            .map(|_| rng.gen_range(0..1024))
            .collect();
        let b: Vec<u64> = (0..rng.gen_range(1..64))
            .map(|_| rng.gen_range(0..1024))
            .collect();
        let ea = DeltaMeasure::uniform_on(k, &a).unwrap();
        let eb = DeltaMeasure::uniform_on(k, &b).unwrap();
        let conv = convolve(&ea, &eb).unwrap();
        assert_eq!(
            conv.mass(),
            BigRational::one(),
            "convolution mass must be exactly 1"
        );
        assert!(
            conv.l2_norm_sq() <= ea.l2_norm_sq().min(eb.l2_norm_sq()),
            "L2 norm must contract"
        );
    }
    // uniformize always emits a verified-uniform set
    let ladder = ScaleLadder::new(2, 4);
    for _ in 0..200 {
        let pts: Vec<u64> = (0..rng.gen_range(1..100))
            .map(|_| rng.gen_range(0..256))
            .collect();
        let out = uniformize(&ladder, &pts).unwrap();
        match branching_numbers(&ladder, &out.points).unwrap() {
            BranchingOutcome::Uniform(r) => assert_eq!(r, out.branching),
            v => panic!("uniformize output not uniform: {v:?}"),
        }
    }
    println!(
        "ACCEPTANCE PASS criterion 10: 500 convolution pairs (exact mass, L2 contraction) and 200 uniformisations verified"
    );
}
