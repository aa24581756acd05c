mod common;

use common::{check_axioms, permutation_oracle, planted_game, random_game};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sverl::shapley::{multinomial_weights, sampled_attribution, shapley_from_table, FnGame, RunningStats, TableGame};
use sverl::{exact_shapley, marginal_gain, sampled_shapley, weighted_global, Attribution, Coalition, Error, Estimate};

fn squared_size() -> FnGame<impl Fn(Coalition) -> f64 + Sync> {
    FnGame::new(3, |c: Coalition| (c.len() * c.len()) as f64)
}

#[test]
fn single_player_takes_everything() {
    let g = TableGame::new(1, vec![0.0, 5.0]).unwrap();
    assert_eq!(exact_shapley(&g).unwrap().phi, vec![5.0]);
}

#[test]
fn symmetric_pair_splits_evenly() {
    let g = TableGame::new(2, vec![0.0, 1.0, 1.0, 4.0]).unwrap();
    assert_eq!(exact_shapley(&g).unwrap().phi, vec![2.0, 2.0]);
}

#[test]
fn squared_size_game_matches_orderings() {
    let phi = exact_shapley(&squared_size()).unwrap().phi;
    let oracle = permutation_oracle(3, &|bits| (bits.count_ones() * bits.count_ones()) as f64);
    for (a, b) in phi.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
        assert!((a - 3.0).abs() < 1e-12);
    }
}

#[test]
fn marginal_gain_examples() {
    let additive = FnGame::new(3, |c: Coalition| c.len() as f64);
    assert_eq!(marginal_gain(&additive, 0, Coalition::empty(3).unwrap()).unwrap(), 1.0);
    let null = FnGame::new(3, |_| 0.0);
    for bits in 0..8u32 {
        let c = Coalition::from_bits(bits, 3).unwrap();
        for i in (0..3).filter(|&i| !c.contains(i)) {
            assert_eq!(marginal_gain(&null, i, c).unwrap(), 0.0);
        }
    }
    let c0 = Coalition::from_members([0], 3).unwrap();
    assert_eq!(marginal_gain(&squared_size(), 2, c0).unwrap(), 3.0);
}

#[test]
fn marginal_gain_rejects_members() {
    let c = Coalition::from_members([1], 3).unwrap();
    assert!(matches!(marginal_gain(&squared_size(), 1, c), Err(Error::FeatureInCoalition { .. })));
}

#[test]
fn arity_guard() {
    let g = FnGame::new(21, |_| 0.0);
    assert!(matches!(exact_shapley(&g), Err(Error::ArityTooLarge { .. })));
}

#[test]
fn sampler_on_trivial_games() {
    let null = FnGame::new(4, |_| 0.0);
    let e = sampled_shapley(&null, 2, 50, 1).unwrap();
    assert_eq!((e.mean, e.standard_error), (0.0, 0.0));

    let w = [1.5, -2.0, 0.25];
    let additive = FnGame::new(3, move |c: Coalition| c.members().map(|j| w[j]).sum());
    for (i, wi) in w.iter().enumerate() {
        let e = sampled_shapley(&additive, i, 100, 9).unwrap();
        assert!((e.mean - wi).abs() < 1e-12);
        assert!(e.standard_error < 1e-12);
    }
}

#[test]
fn sampler_within_three_standard_errors() {
    let a = sampled_attribution(&squared_size(), 100_000, 42).unwrap();
    let se = a.standard_error.clone().unwrap();
    for (phi, se) in a.phi.iter().zip(&se) {
        assert!((phi - 3.0).abs() <= 3.0 * se, "{phi} +- {se}");
    }
    assert_eq!(a.estimate, Estimate::Sampled { budget: 100_000, seed: 42 });
}

#[test]
fn sampler_is_unbiased_over_seeds() {
    let mut stats = RunningStats::default();
    for seed in 0..50 {
        stats.push(sampled_shapley(&squared_size(), 0, 10_000, seed).unwrap().mean);
    }
    assert!((stats.mean() - 3.0).abs() <= 4.0 * stats.standard_error().max(1e-12));
}

#[test]
fn sampler_is_reproducible() {
    let g = random_game(5, &mut ChaCha8Rng::seed_from_u64(3));
    let a = sampled_attribution(&g, 500, 11).unwrap();
    let b = sampled_attribution(&g, 500, 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.phi, sampled_attribution(&g, 500, 12).unwrap().phi);
}

#[test]
fn weighted_global_examples() {
    let a = |phi: Vec<f64>| Attribution {
        phi,
        v_empty: 0.0,
        v_full: 1.0,
        estimate: Estimate::Exact,
        scope: Default::default(),
        standard_error: None,
    };
    let one = weighted_global(&[(a(vec![0.3, 0.7]), 1.0)]).unwrap();
    assert_eq!(one.phi, vec![0.3, 0.7]);
    let two = weighted_global(&[(a(vec![1.0, 0.0]), 0.5), (a(vec![0.0, 1.0]), 0.5)]).unwrap();
    assert_eq!(two.phi, vec![0.5, 0.5]);
    assert!(matches!(
        weighted_global(&[(a(vec![1.0]), 0.4)]),
        Err(Error::WeightSum { .. })
    ));
}

#[test]
fn weights_sum_to_one_per_feature() {
    for n in 1..=20usize {
        let w = multinomial_weights(n);
        // Σ_k C(n-1, k) w_k
        let mut binom = 1.0f64;
        let mut total = 0.0;
        for (k, wk) in w.iter().enumerate() {
            total += binom * wk;
            binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
        }
        assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
    }
}

fn game_strategy() -> impl Strategy<Value = TableGame> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, 1 << n).prop_map(move |v| TableGame::new(n, v).unwrap())
    })
}

proptest! {
    #[test]
    fn efficiency_and_oracle(g in game_strategy()) {
        let a = shapley_from_table(&g);
        prop_assert!(a.efficiency_gap().abs() < 1e-9);
        let oracle = permutation_oracle(a.arity(), &|bits| g.values()[bits as usize]);
        for (x, y) in a.phi.iter().zip(&oracle) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn planted_structure_is_respected(n in 3usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = planted_game(n, &mut rng);
        let other = random_game(n, &mut rng);
        let r = check_axioms("planted", &g, &other, 1e-9);
        prop_assert!(r.ok(), "{:?}", r.failures);
        prop_assert!(r.symmetric_pairs >= 1 && r.null_players >= 1);
        let phi = shapley_from_table(&g).phi;
        prop_assert!(phi[n - 1].abs() < 1e-12);
    }

    #[test]
    fn linearity(g in game_strategy(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in any::<u64>()) {
        let n = g.values().len().trailing_zeros() as usize;
        let h = random_game(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let mix: Vec<f64> = g.values().iter().zip(h.values()).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = shapley_from_table(&TableGame::new(n, mix).unwrap()).phi;
        let (pg, ph) = (shapley_from_table(&g).phi, shapley_from_table(&h).phi);
        for i in 0..n {
            prop_assert!((lhs[i] - (alpha * pg[i] + beta * ph[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn coalition_set_semantics(bits in any::<u32>(), n in 1usize..=32) {
        let mask = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        let c = Coalition::from_bits(bits & mask, n).unwrap();
        let rebuilt = Coalition::from_members(c.members().collect::<Vec<_>>().into_iter().rev(), n).unwrap();
        prop_assert_eq!(c, rebuilt);
        prop_assert_eq!(c.complement().complement(), c);
        prop_assert_eq!(c.len() + c.complement().len(), n);
        for i in 0..n {
            prop_assert_eq!(c.with(i).contains(i), true);
            prop_assert_eq!(c.without(i).contains(i), false);
        }
    }
}

#[test]
fn coalitions_reject_bad_input() {
    assert!(Coalition::from_bits(0b100, 2).is_err());
    assert!(Coalition::from_members([5], 3).is_err());
    assert!(Coalition::empty(33).is_err());
}
