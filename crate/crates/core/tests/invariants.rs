//! Property tests for the structural invariants: exactness, monotonicity,
//! nesting, serialization round trips, and dual-path agreement.

use fraclab_core::branching::{convolve, DeltaMeasure};
use fraclab_core::dyadic::{GridSet, Point};
use fraclab_core::entropy::{
    conditional_entropy_dyadic, entropy_dyadic, kl_conditional_dyadic, kl_divergence_dyadic,
};
use fraclab_core::exact::{pow2, Scale};
use fraclab_core::measure::{Ball, GridMeasure};
use fraclab_core::multiplicity::{multiplicity_at, multiplicity_field, ScalePairQuery};
use fraclab_core::projection::{greedy_min_cover, project_cover, tube_decompose, Direction};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn arb_cells(level: u32, max_cells: usize) -> impl Strategy<Value = Vec<(i64, i64)>> {
    let n = 1i64 << level;
    prop::collection::vec((0..n, 0..n), 1..max_cells)
}

fn arb_weights(cells: Vec<(i64, i64)>) -> (GridSet, GridMeasure) {
    // deterministic positive weights summing to 1
    let set = GridSet::new(4, cells);
    let n = set.len() as u64;
    let total: u64 = (1..=n).sum();
    let mut weights = BTreeMap::new();
    for (i, &c) in set.coords().iter().enumerate() {
        weights.insert(
            c,
            BigRational::new(BigInt::from(i as u64 + 1), BigInt::from(total)),
        );
    }
    let mu = GridMeasure::new(set.clone(), &weights).unwrap();
    (set, mu)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsen_nesting(cells in arb_cells(6, 40), i in 0u32..3, j in 3u32..6) {
        let set = GridSet::new(6, cells);
        let via = set.coarsen(j as i32).unwrap().coarsen(i as i32).unwrap();
        let direct = set.coarsen(i as i32).unwrap();
        prop_assert_eq!(via, direct);
    }

    #[test]
    fn covering_monotone_in_scale(cells in arb_cells(6, 40), j in 0i32..6) {
        let set = GridSet::new(6, cells);
        let coarse = set.covering_count(Scale::new(-j)).unwrap();
        let fine = set.covering_count(Scale::new(-6)).unwrap();
        prop_assert!(coarse <= fine);
    }

    #[test]
    fn covering_monotone_in_set(cells in arb_cells(5, 40), keep in 1usize..40) {
        let set = GridSet::new(5, cells);
        let sub: Vec<_> = set.coords().iter().copied().take(keep).collect();
        let sub = GridSet::new(5, sub);
        for j in 0..=5 {
            prop_assert!(
                sub.covering_count(Scale::new(-j)).unwrap()
                    <= set.covering_count(Scale::new(-j)).unwrap()
            );
        }
    }

    #[test]
    fn neighborhood_monotone(cells in arb_cells(4, 12), r1 in 1i64..4, r2 in 4i64..8) {
        let set = GridSet::new(4, cells);
        let small = set.neighborhood(&BigRational::new(BigInt::from(r1), BigInt::from(16)));
        let large = set.neighborhood(&BigRational::new(BigInt::from(r2), BigInt::from(16)));
        prop_assert!(small.is_subset_of(&large));
    }

    #[test]
    fn set_serialization_roundtrips(cells in arb_cells(6, 50)) {
        let set = GridSet::new(6, cells);
        prop_assert_eq!(&GridSet::from_text(&set.to_text()).unwrap(), &set);
        prop_assert_eq!(&GridSet::from_binary(&set.to_binary()).unwrap(), &set);
    }

    #[test]
    fn measure_serialization_roundtrips(cells in arb_cells(4, 20)) {
        let (_, mu) = arb_weights(cells);
        prop_assert_eq!(GridMeasure::from_text(&mu.to_text()).unwrap(), mu);
    }

    #[test]
    fn projection_cover_bounded_and_monotone(cells in arb_cells(4, 20), p in 0i64..=8) {
        let set = GridSet::new(4, cells);
        let dir = Direction::slope_int(p, 8);
        let cover = project_cover(&set, &dir, Scale::neg(4));
        // image length per cell is at most (1 + theta) * side <= 2 * side,
        // so a single cell spans at most 3 intervals at the cell scale
        prop_assert!(cover <= 3 * set.len() as u64);
        let sub: Vec<_> = set.coords().iter().copied().step_by(2).collect();
        let sub = GridSet::new(4, sub);
        prop_assert!(project_cover(&sub, &dir, Scale::neg(4)) <= cover);
    }

    #[test]
    fn tube_masses_sum_to_total(cells in arb_cells(4, 20), p in 0i64..=8) {
        let (_, mu) = arb_weights(cells);
        let d = tube_decompose(&mu, &Direction::slope_int(p, 8), Scale::neg(3));
        prop_assert_eq!(d.total_mass(), BigRational::one());
    }

    #[test]
    fn greedy_monotone_in_mass(cells in arb_cells(4, 16), p in 0i64..=8, num in 0u32..=8) {
        let (_, mu) = arb_weights(cells);
        let dir = Direction::slope_int(p, 8);
        let m1 = BigRational::new(BigInt::from(num), BigInt::from(8));
        let m2 = BigRational::new(BigInt::from(num.min(7) + 1), BigInt::from(8));
        let (c1, _) = greedy_min_cover(&mu, &dir, Scale::neg(3), &m1).unwrap();
        let (c2, _) = greedy_min_cover(&mu, &dir, Scale::neg(3), &m2).unwrap();
        prop_assert!(c1.count <= c2.count);
    }

    #[test]
    fn multiplicity_paths_agree(cells in arb_cells(4, 16), p in 0i64..=4, fine in 2u32..=4, coarse in 0u32..=2) {
        let set = GridSet::new(4, cells);
        let dir = Direction::slope_int(p, 4);
        let q = ScalePairQuery::new(Scale::neg(fine), Scale::neg(coarse)).unwrap();
        let field = multiplicity_field(&set, &dir, &q).unwrap();
        for &((x, y), v) in field.entries.iter().take(8) {
            let c = fraclab_core::dyadic::DyadicCell::new(4, x, y).center();
            prop_assert_eq!(v, multiplicity_at(&set, &dir, &c, &q).unwrap());
        }
    }

    #[test]
    fn renormalize_chain_rule(cells in arb_cells(5, 16), k1 in 0u32..2, k2 in 0u32..2, cx in 0i64..8, cy in 0i64..8) {
        let (_, mu) = arb_weights(cells.iter().map(|&(x, y)| (x % 16, y % 16)).collect());
        let s = fraclab_core::Exp::new(1, 2);
        let b1 = Ball::new(Point::dyadic(cx, cy, 4), Scale::neg(k1));
        let b2 = Ball::new(Point::dyadic(cx, cy, 3), Scale::neg(k2));
        let lhs = mu.renormalize(&b1, s).and_then(|m| m.renormalize(&b2, s));
        let rhs = mu.renormalize(&b1.compose(&b2), s);
        match (lhs, rhs) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {},
            (a, b) => prop_assert!(false, "only one side failed: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn convolution_properties(a in prop::collection::vec(0u64..64, 1..12),
                              b in prop::collection::vec(0u64..64, 1..12)) {
        let ea = DeltaMeasure::uniform_on(6, &a).unwrap();
        let eb = DeltaMeasure::uniform_on(6, &b).unwrap();
        let ab = convolve(&ea, &eb).unwrap();
        let ba = convolve(&eb, &ea).unwrap();
        prop_assert_eq!(&ab.weights, &ba.weights);
        prop_assert_eq!(ab.mass(), BigRational::one());
        prop_assert!(ab.l2_norm_sq() <= ea.l2_norm_sq().min(eb.l2_norm_sq()));
    }

    #[test]
    fn entropy_identities(cells in arb_cells(4, 24), fine in 2u32..=4, coarse in 0u32..=2) {
        let (_, mu) = arb_weights(cells);
        let direct = conditional_entropy_dyadic(&mu, fine, coarse).unwrap();
        let diff = entropy_dyadic(&mu, fine).unwrap() - entropy_dyadic(&mu, coarse).unwrap();
        prop_assert!((direct - diff).abs() < 1e-12);
    }

    #[test]
    fn kl_telescoping_and_gibbs(cells in arb_cells(4, 24)) {
        let (set, mu) = arb_weights(cells);
        let nu = GridMeasure::uniform(set).unwrap();
        let end = kl_divergence_dyadic(&nu, &mu, 4).unwrap()
            - kl_divergence_dyadic(&nu, &mu, 0).unwrap();
        let mut sum = 0.0;
        for j in 0..4 {
            sum += kl_conditional_dyadic(&nu, &mu, j + 1, j).unwrap();
        }
        prop_assert!((end - sum).abs() < 1e-12);
        prop_assert!(kl_divergence_dyadic(&nu, &mu, 4).unwrap() >= -1e-12);
    }
}

#[test]
fn exact_bit_identical_repeat() {
    // repeated runs of a pipeline produce bit-identical artifacts
    let cells: Vec<(i64, i64)> = (0..12).map(|i| (i % 5, (i * 7) % 9)).collect();
    let run = || {
        let set = GridSet::new(4, cells.clone());
        let mu = GridMeasure::uniform(set).unwrap();
        let b = Ball::new(Point::dyadic(1, 1, 2), Scale::neg(1));
        let out = mu.renormalize(&b, fraclab_core::Exp::new(1, 2)).unwrap();
        out.to_text()
    };
    assert_eq!(run(), run());
}

#[test]
fn neighborhood_radius_equals_side_includes_adjacent() {
    let set = GridSet::new(3, vec![(4, 4)]);
    let out = set.neighborhood(&pow2(-3));
    // touching neighbors are at distance zero, two steps away is >= side
    assert_eq!(out.len(), 9);
    assert!(!out.contains(6, 4));
}
