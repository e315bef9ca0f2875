//! End-to-end pipeline tests: probes and the checker suite over a small
//! configuration, plus an independent oracle for the worst-case
//! projection probe.

use fraclab::config::ExperimentConfig;
use fraclab::probes::{run_theorem_a_probe, run_theorem_b_probe};
use fraclab::rows::{write_csv, write_jsonl};
use fraclab::suite::run_lemma_suite;
use fraclab_core::exact::{ge_pow2, Exp, Scale};
use fraclab_core::gen::directions_from;
use fraclab_core::projection::tube_decompose;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_corpus(2, 2, 2);
    cfg.params.kappa = vec!["1/4".into()];
    cfg.params.s_lower = vec!["1/2".into()];
    cfg
}

#[test]
fn theorem_a_rows_are_deterministic() {
    let cfg = small_config();
    let (entries1, rows1) = run_theorem_a_probe(&cfg).unwrap();
    let (entries2, rows2) = run_theorem_a_probe(&cfg).unwrap();
    assert_eq!(rows1.len(), rows2.len());
    for (a, b) in entries1.iter().zip(entries2.iter()) {
        assert_eq!(a.value, b.value);
        assert!(a.dual_path_equal && b.dual_path_equal);
    }
    // every value stays within [0, total mass * nu mass] = [0, 1]
    for e in &entries1 {
        assert!(e.value >= BigRational::from_integer(BigInt::from(0)));
        assert!(e.value <= BigRational::from_integer(BigInt::from(1)));
    }
    let csv = write_csv(&rows1);
    assert!(csv.lines().count() > entries1.len());
    let jsonl = write_jsonl(&rows1);
    assert_eq!(jsonl.lines().count(), rows1.len());
}

#[test]
fn theorem_b_passing_direction_matches_exhaustive_oracle() {
    // delta = 2^-4: the product instance has 16 cells, small enough for a
    // full subset sweep
    let cfg = small_config();
    let (entries, _) = run_theorem_b_probe(&cfg).unwrap();
    let entry = entries
        .iter()
        .find(|e| e.instance == "four-corner" && e.arc == "uniform")
        .expect("probe entry");
    assert_eq!(entry.n, 2);

    let sys = cfg.instantiate_planar(&cfg.planar[0], 2).unwrap();
    let (set, mu) = sys.generate_centered().unwrap();
    let delta = Scale::neg(4);
    let k_total = 4i64;
    // threshold used by the probe: delta^kappa rounded down to a dyadic
    let exp = (Exp::new(1, 4) * Exp::from_integer(k_total))
        .ceil()
        .to_integer();
    let threshold = BigRational::new(BigInt::one(), BigInt::from(1i64 << exp));
    let nu = cfg.build_arc(&cfg.arcs[0]).unwrap();

    // oracle: a direction passes iff *every* subset of mass >= threshold
    // meets at least delta^-s_lower tubes
    let need = Exp::from_integer(k_total) * Exp::new(1, 2);
    let mut oracle_some = false;
    let mut oracle_flags = Vec::new();
    for (dir, _) in directions_from(&nu, Scale::neg(nu.level())) {
        let decomp = tube_decompose(&mu, &dir, delta);
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
        let masses: Vec<BigRational> = mu.iter().map(|(_, w)| w.clone()).collect();
        let mut worst = u64::MAX;
        for mask in 0u32..(1 << set.len()) {
            let mut mass = BigRational::from_integer(BigInt::from(0));
            let mut tubes = 0u64;
            for i in 0..set.len() {
                if mask & (1 << i) != 0 {
                    mass += &masses[i];
                    tubes |= 1 << tube_ids[i];
                }
            }
            if mass >= threshold {
                worst = worst.min(tubes.count_ones() as u64);
            }
        }
        let passes = worst != u64::MAX
            && worst > 0
            && ge_pow2(&BigRational::from_integer(BigInt::from(worst)), need);
        oracle_flags.push(passes);
        oracle_some |= passes;
    }
    assert_eq!(entry.some_direction_passes, oracle_some);
    for ((_, _, probe_pass), oracle_pass) in entry.per_direction.iter().zip(oracle_flags.iter()) {
        assert_eq!(probe_pass, oracle_pass, "per-direction verdicts must agree");
    }
}

#[test]
fn suite_has_no_failures_on_default_corpus() {
    let cfg = ExperimentConfig::default_corpus(2, 2, 3);
    let ledger = run_lemma_suite(&cfg, true).unwrap();
    assert_eq!(ledger.summary.fail, 0, "rows: {:#?}", ledger.rows);
    assert!(ledger.summary.pass > 10);
}

#[test]
fn config_rejects_malformed_input() {
    assert!(ExperimentConfig::parse("not toml at all [").is_err());
    let wrong_schema = "schema = 7\n[ladder]\nm = 2\nn_min = 2\nn_max = 3\n";
    assert!(ExperimentConfig::parse(wrong_schema).is_err());
    let bad_digits = "schema = 1\n[ladder]\nm = 2\nn_min = 2\nn_max = 3\n[[planar]]\nname = \"x\"\nsystem = \"b=4;D=(9,9);n=2\"\n";
    assert!(ExperimentConfig::parse(bad_digits).is_err());
}

#[test]
fn corrupted_measure_file_errors() {
    use fraclab_core::measure::GridMeasure;
    let garbled = "level 2\n0 0\nweights\n0 0 1 0\n"; // zero denominator
    assert!(GridMeasure::from_text(garbled).is_err());
    let missing_marker = "level 2\n0 0\n0 0 1 2\n";
    assert!(GridMeasure::from_text(missing_marker).is_err());
}
