use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sverl::environments::gridworld::{gridworld_a, gridworld_b};
use sverl::environments::taxi::taxi;
use sverl::occupancy::{occupancy_exact, occupancy_simulated, total_variation, MixtureTable};
use sverl::solvers::{default_episode_cap, value_iteration};
use sverl::{Coalition, Error, OccupancyMode, OccupancyModel, StochasticPolicy, TabularMdp};

fn optimal(mdp: &TabularMdp) -> StochasticPolicy {
    value_iteration(mdp, 1e-12).unwrap().1
}

#[test]
fn gridworld_a_is_uniform_over_four_states() {
    let mdp = gridworld_a();
    let occ = occupancy_exact(&mdp, &optimal(&mdp)).unwrap();
    assert_eq!(occ, vec![0.25, 0.25, 0.25, 0.25, 0.0, 0.0]);
}

#[test]
fn gridworld_b_matches_trajectory_counts() {
    // start 1: 1,2,3,4 ; start 2: 2,3,4 ; each start has probability 1/2
    let mdp = gridworld_b();
    let occ = occupancy_exact(&mdp, &optimal(&mdp)).unwrap();
    let expect = [1.0, 2.0, 2.0, 2.0, 0.0].map(|c| c / 7.0);
    for (s, e) in expect.iter().enumerate() {
        assert!((occ[s] - e).abs() < 1e-12);
    }
}

#[test]
fn simulation_of_deterministic_play_is_exact() {
    let mdp = gridworld_b();
    let pi = optimal(&mdp);
    let exact = occupancy_exact(&mdp, &pi).unwrap();
    // with one start state the single episode is the whole story
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (sim, truncated) = occupancy_simulated(&mdp, &pi, 20_000, default_episode_cap(&mdp), &mut rng).unwrap();
    assert_eq!(truncated, 0);
    assert!(total_variation(&sim, &exact) < 0.01);
}

#[test]
fn simulation_converges_on_taxi() {
    let mdp = taxi();
    let pi = optimal(&mdp);
    let exact = occupancy_exact(&mdp, &pi).unwrap();
    let tv = |episodes| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        total_variation(&occupancy_simulated(&mdp, &pi, episodes, 5000, &mut rng).unwrap().0, &exact)
    };
    let ladder: Vec<f64> = [100, 1_000, 10_000, 100_000].into_iter().map(tv).collect();
    assert!(ladder[3] < 0.02, "{ladder:?}");
    assert!(ladder.windows(2).all(|w| w[1] < w[0]), "{ladder:?}");
}

#[test]
fn conditionals() {
    let mdp = gridworld_a();
    let occ = OccupancyModel::exact(&mdp, &optimal(&mdp), OccupancyMode::Strict).unwrap();
    let y = Coalition::from_members([1], 2).unwrap();
    let x = Coalition::from_members([0], 2).unwrap();
    assert_eq!(occ.conditional(&mdp, &mdp.observe(0, y)).unwrap().weights, vec![(0, 0.5), (1, 0.5)]);
    assert_eq!(occ.conditional(&mdp, &mdp.observe(0, x)).unwrap().weights, vec![(0, 0.5), (2, 0.5)]);
    let full = occ.conditional(&mdp, &mdp.observe(3, Coalition::full(2).unwrap())).unwrap();
    assert_eq!(full.weights, vec![(3, 1.0)]);
    let empty = occ.conditional(&mdp, &mdp.observe(3, Coalition::empty(2).unwrap())).unwrap();
    let dense: Vec<f64> = (0..6).map(|s| empty.weights.iter().find(|w| w.0 == s).map_or(0.0, |w| w.1)).collect();
    assert_eq!(dense, occ.marginal());
}

#[test]
fn unsupported_observations() {
    // state 5 of gridworld-b is never visited, and nor is any other x=1,y=3 cell
    let mdp = gridworld_b();
    let strict = OccupancyModel::exact(&mdp, &optimal(&mdp), OccupancyMode::Strict).unwrap();
    let obs = mdp.observe(4, Coalition::full(2).unwrap());
    assert!(matches!(strict.conditional(&mdp, &obs), Err(Error::UnsupportedObservation(_))));
    let fallback = strict.with_mode(OccupancyMode::Fallback);
    let c = fallback.conditional(&mdp, &obs).unwrap();
    assert!(c.fallback);
    assert_eq!(c.weights, vec![(4, 1.0)]);
}

#[test]
fn chain_rule_on_gridworld_b() {
    let mdp = gridworld_b();
    let occ = OccupancyModel::exact(&mdp, &optimal(&mdp), OccupancyMode::Strict).unwrap();
    let x = Coalition::from_members([0], 2).unwrap();
    for s in occ.support() {
        let cx = occ.conditional(&mdp, &mdp.observe(s, x)).unwrap();
        let narrowed: Vec<_> = cx.weights.iter().filter(|(t, _)| mdp.state(*t).get(1) == mdp.state(s).get(1)).collect();
        let mass: f64 = narrowed.iter().map(|w| w.1).sum();
        let cxy = occ.conditional(&mdp, &mdp.observe(s, Coalition::full(2).unwrap())).unwrap();
        assert_eq!(narrowed.len(), 1);
        assert!((narrowed[0].1 / mass - cxy.weights[0].1).abs() < 1e-12);
    }
}

#[test]
fn mixture_table_matches_direct_scan() {
    let mdp = taxi();
    let pi = optimal(&mdp);
    let occ = OccupancyModel::exact(&mdp, &pi, OccupancyMode::Fallback).unwrap();
    let fill = |t: usize, out: &mut [f64]| out.copy_from_slice(pi.row(t));
    for s in [0usize, 37, 211, 498] {
        if mdp.is_terminal(s) {
            continue;
        }
        let table = MixtureTable::build(&mdp, &occ, s, 6, &fill).unwrap();
        for bits in 0..16 {
            let c = Coalition::from_bits(bits, 4).unwrap();
            let fast = table.get(c).unwrap();
            let slow = occ.mixture(&mdp, s, c, 6, &fill).unwrap();
            assert_eq!(fast.fallback, slow.fallback);
            for (a, b) in fast.value.iter().zip(&slow.value) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn csv_export() {
    let mdp = gridworld_a();
    let occ = OccupancyModel::exact(&mdp, &optimal(&mdp), OccupancyMode::Strict).unwrap();
    let csv = occ.to_csv(&mdp);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("state,x,y,probability"));
    // terminal cells are omitted
    assert_eq!(lines.count(), 4);
}
