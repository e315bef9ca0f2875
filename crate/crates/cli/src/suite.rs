//! The lemma suite: runs every constructive checker over the corpus and
//! aggregates a pass / outside-regime / fail ledger.

use crate::config::ExperimentConfig;
use crate::rows::{certificate, ResultRow};
use anyhow::{Context, Result};
use fraclab_core::branching::{
    branching_lower_bound_witness, branching_numbers, branching_scale_finder, convolve,
    interval_decomposition, tau_rationals, uniformize, BranchingError, BranchingOutcome,
    DeltaMeasure, DyadicSubset1D,
};
use fraclab_core::dyadic::{Point, ScaleLadder};
use fraclab_core::entropy::{
    conditional_entropy_dyadic, entropy_dyadic, good_cubes, good_scales, kl_conditional_dyadic,
    kl_divergence_dyadic, partial_sum_bound, partition_pigeonhole, EntropyError, Partition,
};
use fraclab_core::exact::{format_rational, Exp, Scale, ScaledRational};
use fraclab_core::gen::DigitSystem;
use fraclab_core::measure::{check_ahlfors, Ball, GridMeasure};
use fraclab_core::multiplicity::{
    check_fiber_entropy_bound, check_mult_decomposition, hereditary_refine, high_mult_set,
    multiplicity_at, MultDecompParams, ScalePairQuery,
};
use fraclab_core::projection::Direction;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    OutsideRegime,
    Fail,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::OutsideRegime => "outside-regime",
            Status::Fail => "fail",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SuiteSummary {
    pub pass: usize,
    pub outside_regime: usize,
    pub fail: usize,
}

pub struct Ledger {
    pub rows: Vec<ResultRow>,
    pub summary: SuiteSummary,
}

impl Ledger {
    fn new() -> Self {
        Ledger {
            rows: Vec::new(),
            summary: SuiteSummary::default(),
        }
    }

    fn record(&mut self, lemma: &str, instance: &str, status: Status, note: String) {
        match status {
            Status::Pass => self.summary.pass += 1,
            Status::OutsideRegime => self.summary.outside_regime += 1,
            Status::Fail => self.summary.fail += 1,
        }
        self.rows.push(ResultRow {
            instance: instance.to_string(),
            operation: lemma.to_string(),
            params: String::new(),
            quantity: "status".into(),
            value: format!("{};{}", status.as_str(), note),
            certificate: certificate(lemma, instance, &[&note]),
            wall_ms: 0,
        });
    }
}

/// The sixteen slope-form directions used for set-inclusion sweeps.
pub fn direction_grid() -> Vec<Direction> {
    (0..16).map(|k| Direction::slope_int(k, 16)).collect()
}

fn tilted_companion(mu: &GridMeasure) -> GridMeasure {
    // a deterministic non-uniform probability on the same support
    let set = mu.support().clone();
    let n = set.len() as u64;
    let total: u64 = (1..=n).sum();
    let mut weights = std::collections::BTreeMap::new();
    for (i, &c) in set.coords().iter().enumerate() {
        weights.insert(
            c,
            BigRational::new(BigInt::from(i as u64 + 1), BigInt::from(total)),
        );
    }
    GridMeasure::new(set, &weights).expect("companion weights")
}

/// Executes the whole checker battery; `fast` trims the fuzz volumes for
/// interactive runs.
pub fn run_lemma_suite(cfg: &ExperimentConfig, fast: bool) -> Result<Ledger> {
    let mut ledger = Ledger::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_top = cfg.ladder.n_max.min(4).max(cfg.ladder.n_min);
    let dirs = direction_grid();

    for planar in &cfg.planar {
        let n_inst = match cfg.capped_depth(planar, n_top, crate::probes::CELL_CAP) {
            Some(n) => n,
            None => continue,
        };
        let sys = cfg
            .instantiate_planar(planar, n_inst)
            .with_context(|| format!("instantiating {}", planar.name))?;
        let (set, mu) = sys.generate_centered().context("generator")?;
        let name = planar.name.as_str();
        let ladder = ScaleLadder::new(cfg.ladder.m, n_inst);

        // regularity certification at the advertised exponent
        match sys.exponent() {
            Some(s) => {
                let c_guess = BigRational::from_integer(BigInt::from(64));
                match check_ahlfors(&mu, s, &c_guess) {
                    Ok(rep) => {
                        let status = if rep.passes {
                            Status::Pass
                        } else {
                            Status::Fail
                        };
                        ledger.record(
                            "regularity-certifier",
                            name,
                            status,
                            format!("s={s};c_best={:.4}", rep.c_best.to_f64()),
                        );
                    }
                    Err(e) => {
                        ledger.record("regularity-certifier", name, Status::Fail, e.to_string())
                    }
                }
            }
            None => ledger.record(
                "regularity-certifier",
                name,
                Status::OutsideRegime,
                "irrational similarity exponent".into(),
            ),
        }

        // rescaling identity at sampled points, bit-exact; the recentering
        // point must sit on the lattice of the fine counting scale (dyadic
        // counts are not invariant under sub-lattice translations)
        let samples = if fast { 10 } else { 40 };
        let mut rescale_ok = true;
        for _ in 0..samples {
            let fine = rng.gen_range(ladder.m..=set.level());
            let k = rng.gen_range(0..=fine.min(2));
            let span = 1i64 << fine;
            let ball = Ball::new(
                Point::dyadic(
                    rng.gen_range(-span / 2..span / 2),
                    rng.gen_range(-span / 2..span / 2),
                    fine,
                ),
                Scale::neg(k),
            );
            if fine > set.level() - k {
                continue;
            }
            let image = match fraclab_core::measure::renormalize_set(&set, &ball) {
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
            let idx = rng.gen_range(0..set.len());
            let x = set.cells().nth(idx).unwrap().center();
            let tx = ball.apply(&x);
            let a = multiplicity_at(&set, dir, &x, &q).unwrap();
            let b = multiplicity_at(&image, dir, &tx, &q_img).unwrap();
            if a != b {
                rescale_ok = false;
                break;
            }
        }
        ledger.record(
            "rescaling-identity",
            name,
            if rescale_ok {
                Status::Pass
            } else {
                Status::Fail
            },
            format!("{samples} samples"),
        );

        // monotonicity inclusions over directions and scale pairs
        let pair_list = [
            (Scale::neg(set.level()), Scale::one()),
            (Scale::neg(set.level()), Scale::neg(ladder.m)),
            (Scale::neg(set.level() - ladder.m), Scale::neg(ladder.m)),
        ];
        let mut incl_ok = true;
        let mut incl_note = String::from("ok");
        'outer: for dir in &dirs {
            for &(fine, coarse) in &pair_list {
                let q = ScalePairQuery::new(fine, coarse).unwrap();
                let field = fraclab_core::multiplicity::multiplicity_field(&set, dir, &q).unwrap();
                let max = field.max_value().max(1);
                let thr_hi = ScaledRational::from_rational(BigRational::from_integer(
                    BigInt::from(max.div_ceil(2).max(2)),
                ));
                let thr_lo =
                    ScaledRational::from_rational(BigRational::from_integer(BigInt::from(2)));
                // (i) threshold monotonicity
                let h_hi = field.level_set(set.level(), &thr_hi);
                let h_lo = field.level_set(set.level(), &thr_lo);
                if !h_hi.is_subset_of(&h_lo) {
                    incl_ok = false;
                    incl_note = format!("threshold inclusion fails for {dir:?}");
                    break 'outer;
                }
                // (ii) enlarging the ball
                let q_big = ScalePairQuery::new(fine, Scale::new(coarse.log2 + 2)).unwrap();
                let h_big = high_mult_set(&set, dir, &thr_lo, &q_big).unwrap();
                if !h_lo.is_subset_of(&h_big) {
                    incl_ok = false;
                    incl_note = format!("ball inclusion fails for {dir:?}");
                    break 'outer;
                }
            }
        }
        ledger.record(
            "multiplicity-inclusions",
            name,
            if incl_ok { Status::Pass } else { Status::Fail },
            incl_note,
        );

        // chain rule on measures
        let mut chain_ok = true;
        for _ in 0..samples {
            let s = sys.exponent().unwrap_or(Exp::new(1, 2));
            let k1 = rng.gen_range(0..=1u32);
            let k2 = rng.gen_range(0..=1u32);
            let lvl = set.level();
            let b1 = Ball::new(
                Point::dyadic(rng.gen_range(-4..4), rng.gen_range(-4..4), lvl.min(3)),
                Scale::neg(k1),
            );
            let b2 = Ball::new(
                Point::dyadic(
                    rng.gen_range(-4..4),
                    rng.gen_range(-4..4),
                    (lvl - k1).min(3),
                ),
                Scale::neg(k2),
            );
            let two = mu.renormalize(&b1, s).and_then(|m| m.renormalize(&b2, s));
            let one = mu.renormalize(&b1.compose(&b2), s);
            match (two, one) {
                (Ok(a), Ok(b)) if a == b => {}
                (Err(_), Err(_)) => {}
                _ => {
                    chain_ok = false;
                    break;
                }
            }
        }
        ledger.record(
            "renormalisation-chain-rule",
            name,
            if chain_ok { Status::Pass } else { Status::Fail },
            format!("{samples} samples"),
        );

        // entropy and divergence identities
        let nu = tilted_companion(&mu);
        let mut ident_ok = true;
        for j in (0..set.level()).step_by(ladder.m as usize) {
            let direct = conditional_entropy_dyadic(&mu, set.level(), j).unwrap();
            let diff = entropy_dyadic(&mu, set.level()).unwrap() - entropy_dyadic(&mu, j).unwrap();
            if (direct - diff).abs() > 1e-12 {
                ident_ok = false;
            }
        }
        let end = kl_divergence_dyadic(&nu, &mu, set.level()).unwrap()
            - kl_divergence_dyadic(&nu, &mu, 0).unwrap();
        let mut tele = 0.0;
        for j in 0..set.level() {
            tele += kl_conditional_dyadic(&nu, &mu, j + 1, j).unwrap();
        }
        if (end - tele).abs() > 1e-12 {
            ident_ok = false;
        }
        let part = Partition::dyadic(&mu, set.level()).unwrap();
        let nu_masses = part.block_masses(&nu);
        let mu_masses = part.block_masses(&mu);
        for _ in 0..(if fast { 20 } else { 100 }) {
            let subset: Vec<usize> = (0..nu_masses.len()).filter(|_| rng.gen_bool(0.5)).collect();
            if subset.is_empty() {
                continue;
            }
            let (sum, g_term) = partial_sum_bound(&nu_masses, &mu_masses, &subset).unwrap();
            if sum < g_term - 1e-12 || g_term < -1.0 - 1e-12 {
                ident_ok = false;
            }
        }
        ledger.record(
            "entropy-divergence-identities",
            name,
            if ident_ok { Status::Pass } else { Status::Fail },
            "chain rule, telescoping, partial sums".into(),
        );

        // good scales / good cubes
        let s = sys.exponent().unwrap_or(Exp::new(1, 2));
        let eps = cfg.eps();
        match good_scales(&set, &ladder, s, eps, &cfg.big_c()) {
            Ok(rep) => {
                let status = if rep.cardinality_ok {
                    Status::Pass
                } else if !rep.in_regime {
                    Status::OutsideRegime
                } else {
                    Status::Fail
                };
                ledger.record(
                    "entropy-good-scales",
                    name,
                    status,
                    format!("good={:?};needed={:.2}", rep.good, rep.required_count),
                );
            }
            Err(EntropyError::Hypothesis(h)) => {
                ledger.record("entropy-good-scales", name, Status::OutsideRegime, h)
            }
            Err(e) => ledger.record("entropy-good-scales", name, Status::Fail, e.to_string()),
        }
        match good_cubes(
            &mu,
            ladder.base(),
            s,
            eps,
            &BigRational::from_integer(BigInt::from(6)),
            None,
            &cfg.big_c(),
        ) {
            Ok(rep) => ledger.record(
                "entropy-good-cubes",
                name,
                if rep.holds {
                    Status::Pass
                } else {
                    Status::Fail
                },
                format!("mass={};needed={}", rep.mass, rep.required_mass),
            ),
            Err(EntropyError::Hypothesis(h)) => {
                ledger.record("entropy-good-cubes", name, Status::OutsideRegime, h)
            }
            Err(e) => ledger.record("entropy-good-cubes", name, Status::Fail, e.to_string()),
        }

        // per-scale low-multiplicity profile: unreachable threshold keeps
        // everything, and every reported density stays within [0, 1]
        {
            let sigma0 = cfg.sigma0();
            match fraclab_core::multiplicity::low_mult_profile(
                &mu,
                &dirs[5],
                &ladder,
                sigma0,
                &cfg.lambda(),
                2,
            ) {
                Ok(prof) => {
                    let densities_ok = prof
                        .per_cell
                        .iter()
                        .all(|(_, _, d)| *d.numer() >= 0 && d.numer() <= d.denom());
                    let split_ok = prof.low_set.len() <= prof.per_cell.len();
                    ledger.record(
                        "low-multiplicity-profile",
                        name,
                        if densities_ok && split_ok {
                            Status::Pass
                        } else {
                            Status::Fail
                        },
                        format!(
                            "low {} of {};excluded_mass={}",
                            prof.low_set.len(),
                            prof.per_cell.len(),
                            prof.excluded_mass
                        ),
                    );
                }
                Err(e) => ledger.record(
                    "low-multiplicity-profile",
                    name,
                    Status::Fail,
                    e.to_string(),
                ),
            }
        }

        // multiplicity decomposition inequality
        let p = MultDecompParams {
            a_log2: 1,
            kappa: BigRational::new(BigInt::one(), BigInt::from(4)),
            m_thr: BigRational::from_integer(BigInt::from(2)),
            n_thr: BigRational::from_integer(BigInt::from(4)),
            delta: Scale::neg(set.level()),
            big_delta: Scale::neg(ladder.m),
            c_abs: BigRational::new(BigInt::one(), BigInt::from(64)),
            big_c: cfg.big_c(),
            inflation_log2: 2,
        };
        match check_mult_decomposition(&mu, &set, &dirs[8], &p) {
            Ok(rep) => ledger.record(
                "multiplicity-decomposition",
                name,
                if rep.holds {
                    Status::Pass
                } else {
                    Status::Fail
                },
                format!(
                    "slack={:.6};max_c={}",
                    fraclab_core::exact::rational_to_f64(&rep.slack),
                    rep.max_admissible_c
                        .as_ref()
                        .map(format_rational)
                        .unwrap_or_else(|| "unconstrained".into())
                ),
            ),
            Err(e) => ledger.record(
                "multiplicity-decomposition",
                name,
                Status::Fail,
                e.to_string(),
            ),
        }

        // fiber bound with the blockwise hypothesis
        let partition: Vec<u32> = (0..=n_inst).collect();
        let mut fiber_note = String::new();
        let mut fiber_status = Status::Fail;
        for eta_num in [1i64, 2, 4] {
            let eta = BigRational::new(BigInt::from(eta_num), BigInt::from(4));
            match check_fiber_entropy_bound(
                &set,
                &dirs[4],
                &ladder,
                &partition,
                s,
                &eta,
                &BigRational::from_integer(BigInt::from(8)),
                2,
                2,
            ) {
                Ok(rep) => {
                    fiber_status = if rep.holds {
                        Status::Pass
                    } else {
                        Status::OutsideRegime
                    };
                    fiber_note = format!(
                        "eta={eta};max_count={};min_C={:.3}",
                        rep.max_fiber_count, rep.min_c
                    );
                    break;
                }
                Err(e) => {
                    fiber_note = e.to_string();
                }
            }
        }
        ledger.record("fiber-count-bound", name, fiber_status, fiber_note);

        // hereditary refinement of a high-multiplicity subset
        let q = ScalePairQuery::up_to_one(Scale::neg(set.level()));
        let thr = ScaledRational::from_rational(BigRational::from_integer(BigInt::from(2)));
        let h = high_mult_set(&set, &dirs[0], &thr, &q).unwrap();
        if h.is_empty() {
            ledger.record(
                "hereditary-refinement",
                name,
                Status::OutsideRegime,
                "no multiplicity-2 points at this depth".into(),
            );
        } else {
            let f = mu
                .restrict_normalized(&h)
                .map(|_| h.clone())
                .unwrap_or_else(|_| h.clone());
            let kappa = mu.set_mass(&f);
            match hereditary_refine(
                &mu,
                &f,
                &dirs[0],
                &BigRational::from_integer(BigInt::from(2)),
                Scale::neg(set.level()),
                &kappa,
                &cfg.big_c(),
                &BigRational::new(BigInt::one(), BigInt::from(64)),
            ) {
                Ok(rep) => ledger.record(
                    "hereditary-refinement",
                    name,
                    if rep.mass_ok && rep.mult_ok {
                        Status::Pass
                    } else {
                        Status::Fail
                    },
                    format!(
                        "mass {} of {};min_mult={};M'={}",
                        rep.mass_g,
                        rep.mass_f,
                        rep.min_multiplicity,
                        fraclab_core::exact::rational_to_f64(&rep.m_prime)
                    ),
                ),
                Err(e) => ledger.record("hereditary-refinement", name, Status::Fail, e.to_string()),
            }
        }
    }

    // interval decomposition fuzz
    let fuzz = if fast { 20 } else { 60 };
    let mut decomp_fail = 0usize;
    for i in 0..fuzz {
        let level = 8u32;
        let eps = if i % 2 == 0 {
            BigRational::new(BigInt::one(), BigInt::from(16))
        } else {
            BigRational::new(BigInt::one(), BigInt::from(64))
        };
        let max_cells =
            (eps.clone() * BigRational::from_integer(BigInt::from(1i64 << level))).to_integer();
        let max_cells = i64::try_from(max_cells).unwrap() as u64;
        let count = rng.gen_range(0..=max_cells);
        let cells: Vec<u64> = (0..count)
            .map(|_| rng.gen_range(0..(1u64 << level)))
            .collect();
        let e = DyadicSubset1D::new(level, cells);
        let c = BigRational::from_integer(BigInt::from(if i % 3 == 0 { 4 } else { 2 }));
        let gamma_log2 = if i % 2 == 0 { 2 } else { 3 };
        if interval_decomposition(&e, &c, gamma_log2, &eps).is_err() {
            decomp_fail += 1;
        }
    }
    ledger.record(
        "interval-decomposition",
        "fuzz",
        if decomp_fail == 0 {
            Status::Pass
        } else {
            Status::Fail
        },
        format!("{fuzz} runs, {decomp_fail} violations"),
    );

    // branching-scale certificates for arc measures
    for arc_cfg in &cfg.arcs {
        let nu = cfg.build_arc(arc_cfg)?;
        let tau = if arc_cfg.kind == "cantor" {
            Exp::new(1, 2)
        } else {
            Exp::one()
        };
        let delta = Scale::neg(nu.level());
        let out = branching_scale_finder(
            &nu,
            delta,
            &BigRational::from_integer(BigInt::from(2)),
            tau,
            Exp::new(1, 4),
        );
        match (arc_cfg.kind.as_str(), out) {
            ("single", Err(BranchingError::FrostmanWitness(_, _, _))) => ledger.record(
                "branching-scale",
                &arc_cfg.name,
                Status::Pass,
                "negative control rejected as expected".into(),
            ),
            (_, Ok(cert)) => ledger.record(
                "branching-scale",
                &arc_cfg.name,
                Status::Pass,
                format!("p={};mass={}", cert.p, cert.g_mass),
            ),
            (_, Err(BranchingError::NoAdmissibleLevel(t))) => ledger.record(
                "branching-scale",
                &arc_cfg.name,
                Status::OutsideRegime,
                format!("entropy table {t:?}"),
            ),
            // the lemma only promises anything for delta below a threshold;
            // a failed slack-Frostman scan at desk delta is a regime issue
            (_, Err(BranchingError::FrostmanWitness(x, r, m))) => ledger.record(
                "branching-scale",
                &arc_cfg.name,
                Status::OutsideRegime,
                format!("slack hypothesis fails at x={x}, r=2^-{r} (mass {m})"),
            ),
            (_, Err(e)) => ledger.record(
                "branching-scale",
                &arc_cfg.name,
                Status::Fail,
                e.to_string(),
            ),
        }
    }

    // tau grid sanity
    match tau_rationals(
        &BigRational::from_integer(BigInt::from(2)),
        &BigRational::one(),
    ) {
        Ok((n, grid)) if n == 2 && grid.len() == 3 => {
            ledger.record("tau-grid", "d=2,tau=1", Status::Pass, format!("n={n}"))
        }
        other => ledger.record("tau-grid", "d=2,tau=1", Status::Fail, format!("{other:?}")),
    }

    // uniformisation + branching verification fuzz
    let ladder1 = ScaleLadder::new(cfg.ladder.m, n_top);
    let mut unif_fail = 0;
    for _ in 0..fuzz {
        let span = 1u64 << (ladder1.m * ladder1.depth);
        let count = rng.gen_range(1..=span.min(64));
        let pts: Vec<u64> = (0..count).map(|_| rng.gen_range(0..span)).collect();
        match uniformize(&ladder1, &pts) {
            Ok(u) => match branching_numbers(&ladder1, &u.points) {
                Ok(BranchingOutcome::Uniform(_)) => {}
                _ => unif_fail += 1,
            },
            Err(_) => unif_fail += 1,
        }
    }
    ledger.record(
        "uniformisation",
        "fuzz",
        if unif_fail == 0 {
            Status::Pass
        } else {
            Status::Fail
        },
        format!("{fuzz} runs, {unif_fail} violations"),
    );

    // delta-measure algebra fuzz
    let mut algebra_fail = 0;
    for _ in 0..fuzz {
        let a: Vec<u64> = (0..rng.gen_range(1..24))
            .map(|_| rng.gen_range(0..1024))
            .collect();
        let b: Vec<u64> = (0..rng.gen_range(1..24))
            .map(|_| rng.gen_range(0..1024))
            .collect();
        let ea = DeltaMeasure::uniform_on(10, &a).unwrap();
        let eb = DeltaMeasure::uniform_on(10, &b).unwrap();
        let conv = convolve(&ea, &eb).unwrap();
        if conv.mass() != BigRational::one()
            || conv.l2_norm_sq() > ea.l2_norm_sq().min(eb.l2_norm_sq())
        {
            algebra_fail += 1;
        }
    }
    ledger.record(
        "delta-measure-algebra",
        "fuzz",
        if algebra_fail == 0 {
            Status::Pass
        } else {
            Status::Fail
        },
        format!("{fuzz} runs, {algebra_fail} violations"),
    );

    // partition pigeonhole with a randomized selection of density >= 1/2
    {
        let sys = DigitSystem::planar(2, vec![(0, 0), (1, 1), (0, 1)], 6).unwrap();
        let (_, mu) = sys.generate().unwrap();
        let n_levels = 6usize;
        let parts: Vec<Partition> = (0..n_levels)
            .map(|j| Partition::dyadic(&mu, j as u32).unwrap())
            .collect();
        let d = BigRational::new(BigInt::one(), BigInt::from(2));
        let len = mu.support().len();
        let mut h: Vec<Vec<bool>> = (0..n_levels)
            .map(|_| (0..len).map(|_| rng.gen_bool(0.7)).collect())
            .collect();
        // enforce the per-point hypothesis by topping up missing levels
        #[allow(clippy::needless_range_loop)]
        for i in 0..len {
            let mut hits: Vec<usize> = (0..n_levels).filter(|&j| h[j][i]).collect();
            let needed = n_levels.div_ceil(2);
            let mut j = 0;
            while hits.len() < needed && j < n_levels {
                if !h[j][i] {
                    h[j][i] = true;
                    hits.push(j);
                }
                j += 1;
            }
        }
        match partition_pigeonhole(&mu, &parts, &h, &d) {
            Ok(rep) => ledger.record(
                "partition-pigeonhole",
                "random-selection",
                if rep.holds {
                    Status::Pass
                } else {
                    Status::Fail
                },
                format!("mass={} needed={}", rep.mass_f, rep.required_mass),
            ),
            Err(e) => ledger.record(
                "partition-pigeonhole",
                "random-selection",
                Status::Fail,
                e.to_string(),
            ),
        }
    }

    // projection branching witness on the product instance
    {
        let planar = &cfg.planar[0];
        let n_inst = cfg
            .capped_depth(planar, n_top, crate::probes::CELL_CAP)
            .unwrap_or(cfg.ladder.n_min);
        let sys = cfg.instantiate_planar(planar, n_inst)?;
        let (set, _) = sys.generate_centered()?;
        let ladder = ScaleLadder::new(cfg.ladder.m, n_inst);
        let s = sys.exponent().unwrap_or(Exp::one());
        let mut note = String::new();
        let mut status = Status::OutsideRegime;
        for sigma in [Exp::new(3, 2), Exp::new(5, 4), Exp::one()] {
            match branching_lower_bound_witness(
                &set,
                &Direction::slope_int(0, 1),
                &ladder,
                sigma,
                Exp::new(1, 4),
                s,
                &cfg.big_c(),
                3,
            ) {
                Ok(rep) => {
                    status = if rep.cardinality_ok {
                        Status::Pass
                    } else if !rep.in_regime {
                        Status::OutsideRegime
                    } else {
                        Status::Fail
                    };
                    note = format!(
                        "sigma={sigma};good={};required={:.2};{}",
                        rep.good_levels.len(),
                        rep.required_count,
                        rep.regime_note
                    );
                    break;
                }
                Err(e) => note = e.to_string(),
            }
        }
        ledger.record("projection-branching-witness", &planar.name, status, note);
    }

    Ok(ledger)
}
