//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, even when others fail.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use sverl::environments::gridworld::{gridworld_a, gridworld_b, gridworld_c};
use sverl::environments::minesweeper::{Minesweeper, MinesweeperConfig};
use sverl::environments::taxi;
use sverl::environments::tictactoe::{self, Board};
use sverl::occupancy::{occupancy_exact, occupancy_simulated};
use sverl::shapley::{marginal_gain, shapley_from_table, TableGame};
use sverl::solvers::{default_episode_cap, value_iteration};
use sverl::{
    exact_shapley, Coalition, Explainer, FeatureVector, GlobalWeighting, OccupancyMode, OccupancyModel,
    StochasticPolicy, TabularMdp, ValueTable,
};

type Outcome = Result<String, String>;

struct Solved {
    mdp: TabularMdp,
    values: ValueTable,
    policy: StochasticPolicy,
    occupancy: OccupancyModel,
}

impl Solved {
    fn new(mdp: TabularMdp, mode: OccupancyMode) -> Self {
        let (values, policy) = value_iteration(&mdp, 1e-12).expect("value iteration");
        let occupancy = OccupancyModel::exact(&mdp, &policy, mode).expect("occupancy");
        Self {
            mdp,
            values,
            policy,
            occupancy,
        }
    }

    fn explainer(&self) -> Explainer<'_> {
        Explainer::new(&self.mdp, &self.policy, &self.occupancy)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c01_value_shapley_golden() -> Outcome {
    let g = Solved::new(gridworld_a(), OccupancyMode::Strict);
    let n = g.mdp.action_index("N").unwrap();
    let table = g.explainer().q_value(&g.values, 0, n).map_err(|e| e.to_string())?;
    let phi = exact_shapley(&table).map_err(|e| e.to_string())?;
    let y = 1;
    let d_empty = marginal_gain(&table, y, Coalition::empty(2).unwrap()).unwrap();
    let d_x = marginal_gain(&table, y, Coalition::from_members([0], 2).unwrap()).unwrap();
    check(
        close(phi.phi[y], -0.5, 1e-9) && close(d_empty, -0.5, 1e-9) && close(d_x, -0.5, 1e-9),
        format!("phi_y={:.12} gain(y,{{}})={d_empty:.12} gain(y,{{x}})={d_x:.12}", phi.phi[y]),
    )
}

fn c02_gridworld_a_null_performance() -> Outcome {
    let g = Solved::new(gridworld_a(), OccupancyMode::Strict);
    let ex = g.explainer();
    let mut worst = 0.0f64;
    let mut seen = Vec::new();
    for s in (0..g.mdp.n_states()).filter(|&s| !g.mdp.is_terminal(s)) {
        let phi = exact_shapley(&ex.local_sverl(s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = phi.phi.iter().fold(worst, |m, v| m.max(v.abs()));
        seen.push(s + 1);
    }
    check(seen.len() == 4 && worst <= 1e-9, format!("states {seen:?}, max |phi| = {worst:e}"))
}

fn gridworld_b_global() -> Result<Vec<f64>, String> {
    let g = Solved::new(gridworld_b(), OccupancyMode::Strict);
    let ex = g.explainer();
    let global = ex.global_sverl().map_err(|e| e.to_string())?;
    let agg = ex.global_attribution(&global, GlobalWeighting::Occupancy).map_err(|e| e.to_string())?;
    Ok(agg.phi)
}

fn c03_gridworld_b_global() -> Outcome {
    let phi = gridworld_b_global()?;
    check(
        close(phi[0], 1.43, 0.02) && close(phi[1], 0.64, 0.02),
        format!("Phi = ({:.4}, {:.4}), expected (1.43, 0.64) +- 0.02", phi[0], phi[1]),
    )
}

fn local_phis(g: &Solved, states: &[usize]) -> Result<Vec<Vec<f64>>, String> {
    let ex = g.explainer();
    states
        .iter()
        .map(|&s| {
            let t = ex.local_sverl(s).map_err(|e| e.to_string())?;
            Ok(exact_shapley(&t).map_err(|e| e.to_string())?.phi)
        })
        .collect()
}

fn c04_gridworld_b_local() -> Outcome {
    let g = Solved::new(gridworld_b(), OccupancyMode::Strict);
    let p = local_phis(&g, &[0, 1, 2, 3])?;
    let ok = close(p[0][0], 2.0 * p[0][1], 1e-6)
        && p[0][1] > 0.0
        && p[1][0] > 0.0
        && p[1][1] < 0.0
        && close(p[2][0], p[2][1], 1e-6)
        && p[2][0] > 0.0
        && close(p[3][0], p[3][1], 1e-6)
        && p[3][0] > 0.0;
    check(ok, format!("states 1-4: {p:.4?}"))
}

fn c05_tictactoe_contrast() -> Outcome {
    let g = Solved::new(tictactoe::tictactoe(), OccupancyMode::Strict);
    let board: Board = "OO./.X./...".parse().map_err(|e: sverl::Error| e.to_string())?;
    let s = tictactoe::state_of(&g.mdp, &board).ok_or("blocking position is not a state")?;
    let ex = g.explainer();
    let value = exact_shapley(&ex.value(&g.values, s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let sverl = exact_shapley(&ex.local_sverl(s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let value_zero = value.phi.iter().all(|&v| v == 0.0);
    let max_sverl = sverl.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        value_zero && max_sverl > 0.01,
        format!("value phi {:?}; local sverl max |phi| = {max_sverl:.4}", value.phi),
    )
}

fn c06_gridworld_c_contrast() -> Outcome {
    let g = Solved::new(gridworld_c(), OccupancyMode::Strict);
    let ex = g.explainer();
    let p = local_phis(&g, &[1, 4])?;
    let policy_phi = |s: usize| -> Result<Vec<f64>, String> {
        let a = g.policy.mode(s).ok_or("no action")?;
        let t = ex.policy_prob(s, a).map_err(|e| e.to_string())?;
        Ok(exact_shapley(&t).map_err(|e| e.to_string())?.phi)
    };
    let pol2 = policy_phi(1)?;
    let pol5 = policy_phi(4)?;
    let ok = close(p[1][0], p[1][1], 1e-6) && pol5[0] > pol5[1] && close(pol2[0], pol2[1], 1e-6) && p[0][1] > p[0][0];
    check(
        ok,
        format!("state 2: sverl {:.4?} policy {:.4?}; state 5: sverl {:.4?} policy {:.4?}", p[0], pol2, p[1], pol5),
    )
}

/// Characteristic tables computed by the domain criteria.
fn domain_tables() -> Result<Vec<(String, TableGame)>, String> {
    let mut out = Vec::new();
    let err = |e: sverl::Error| e.to_string();
    for (name, mdp) in [("gridworld-a", gridworld_a()), ("gridworld-b", gridworld_b()), ("gridworld-c", gridworld_c())] {
        let g = Solved::new(mdp, OccupancyMode::Strict);
        let ex = g.explainer();
        for s in (0..g.mdp.n_states()).filter(|&s| !g.mdp.is_terminal(s)) {
            out.push((format!("{name} value s{}", s + 1), table_of(&ex.value(&g.values, s).map_err(err)?)));
            out.push((format!("{name} sverl s{}", s + 1), table_of(&ex.local_sverl(s).map_err(err)?)));
            for (a, t) in ex.policy_probs(s).map_err(err)? {
                out.push((format!("{name} policy s{} a{a}", s + 1), table_of(&t)));
            }
            if let Some(a) = g.policy.mode(s) {
                out.push((format!("{name} q s{} a{a}", s + 1), table_of(&ex.q_value(&g.values, s, a).map_err(err)?)));
            }
        }
        let global = ex.global_sverl().map_err(err)?;
        for s in (0..g.mdp.n_states()).filter(|&s| !g.mdp.is_terminal(s)) {
            out.push((format!("{name} global s{}", s + 1), table_of(&global.characteristic(s))));
        }
    }
    let g = Solved::new(tictactoe::tictactoe(), OccupancyMode::Strict);
    let ex = g.explainer();
    let s = tictactoe::state_of(&g.mdp, &"OO..X....".parse().unwrap()).unwrap();
    out.push(("tictactoe value".into(), table_of(&ex.value(&g.values, s).map_err(err)?)));
    out.push(("tictactoe sverl".into(), table_of(&ex.local_sverl(s).map_err(err)?)));
    let g = Solved::new(taxi::taxi(), OccupancyMode::Strict);
    let ex = g.explainer();
    let s = taxi_state(&g.mdp);
    out.push(("taxi value".into(), table_of(&ex.value(&g.values, s).map_err(err)?)));
    out.push(("taxi sverl".into(), table_of(&ex.local_sverl(s).map_err(err)?)));
    Ok(out)
}

fn c07_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let (mut sym, mut null) = (0, 0);
    for k in 0..100 {
        let n = rng.gen_range(1..=6);
        let game = planted_game(n, &mut rng);
        let other = random_game(n, &mut rng);
        let r = check_axioms(&format!("random #{k}"), &game, &other, 1e-9);
        sym += r.symmetric_pairs;
        null += r.null_players;
        failures.extend(r.failures);
    }
    let tables = domain_tables()?;
    for (name, t) in &tables {
        let other = random_game(t.values().len().trailing_zeros() as usize, &mut rng);
        let r = check_axioms(name, t, &other, 1e-9);
        sym += r.symmetric_pairs;
        null += r.null_players;
        failures.extend(r.failures);
    }
    check(
        failures.is_empty() && sym > 0 && null > 0,
        format!(
            "100 random games + {} domain games; {sym} symmetric pairs, {null} null players; {} violations {:?}",
            tables.len(),
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn c08_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(1..=6);
        let game = random_game(n, &mut rng);
        let exact = shapley_from_table(&game);
        let oracle = permutation_oracle(n, &|bits| game.values()[bits as usize]);
        for (a, b) in exact.phi.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-9, format!("50 games, max |exact - permutations| = {worst:e}"))
}

fn c09_occupancy() -> Outcome {
    let g = Solved::new(gridworld_a(), OccupancyMode::Strict);
    let exact = occupancy_exact(&g.mdp, &g.policy).map_err(|e| e.to_string())?;
    let exact_err = (0..4).map(|s| (exact[s] - 0.25).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (sim, truncated) =
        occupancy_simulated(&g.mdp, &g.policy, 100_000, default_episode_cap(&g.mdp), &mut rng).map_err(|e| e.to_string())?;
    let sim_err = (0..4).map(|s| (sim[s] - 0.25).abs()).fold(0.0, f64::max);
    check(
        exact_err <= 1e-10 && sim_err <= 0.01 && truncated == 0 && exact[4..].iter().all(|&p| p == 0.0),
        format!("exact max err {exact_err:e}; simulated max err {sim_err:.5}"),
    )
}

fn c10_sampler_convergence() -> Outcome {
    let g = Solved::new(gridworld_b(), OccupancyMode::Strict);
    let ex = g.explainer();
    let exact = exact_shapley(&ex.local_sverl(0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let budgets = [100u64, 1_000, 10_000, 100_000];
    let seeds = 0..6u64;
    let mut ladder = Vec::new();
    let mut top_seed_err = 0.0f64;
    for &budget in &budgets {
        let mut err = [0.0f64; 2];
        for seed in seeds.clone() {
            let est = ex.sampled_local_sverl(0, budget, seed).map_err(|e| e.to_string())?;
            for i in 0..2 {
                let e = (est.attribution.phi[i] - exact.phi[i]).abs();
                err[i] += e / seeds.clone().count() as f64;
                if budget == 100_000 {
                    top_seed_err = top_seed_err.max(e);
                }
            }
        }
        ladder.push(err);
    }
    let decreasing = (0..2).all(|i| ladder.windows(2).all(|w| w[1][i] < w[0][i]));
    check(
        top_seed_err < 0.05 && decreasing,
        format!("exact {:.4?}; mean |err| by budget {ladder:.4?}; worst at 1e5 {top_seed_err:.4}", exact.phi),
    )
}

fn taxi_state(mdp: &TabularMdp) -> usize {
    // taxi at x=4, y=1, passenger waiting at B, destination G
    mdp.state_id(&FeatureVector(vec![3, 0, 2, 1])).expect("taxi state")
}

fn c11_taxi_signs() -> Outcome {
    let g = Solved::new(taxi::taxi(), OccupancyMode::Strict);
    let s = taxi_state(&g.mdp);
    let phi = exact_shapley(&g.explainer().local_sverl(s).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.phi;
    let (x, y, p, d) = (phi[0], phi[1], phi[2], phi[3]);
    check(
        p > 0.0 && p > x && p > y && p > d && d < 0.0 && y > x,
        format!("(x, y, passenger, destination) = ({x:.4}, {y:.4}, {p:.4}, {d:.4})"),
    )
}

fn c12_minesweeper() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let ms = Minesweeper::new(MinesweeperConfig::STANDARD).map_err(|e| e.to_string())?;
    let g = Solved::new(ms.build().map_err(|e| e.to_string())?, OccupancyMode::Strict);
    let c = MinesweeperConfig::STANDARD;
    let before = ms.parse("0111/01##/012#/001#").map_err(|e| e.to_string())?;
    let s1 = g.mdp.state_id(&FeatureVector(before)).ok_or("first board missing")?;
    let after = ms.parse("0111/01#2/012#/001#").map_err(|e| e.to_string())?;
    let s2 = g.mdp.state_id(&FeatureVector(after)).ok_or("second board missing")?;
    let q42 = c.index(4, 2);
    let (m1, m2) = (c.index(3, 2), c.index(4, 3));
    ok &= g.policy.mode(s1) == Some(q42) && g.occupancy.prob(s2) > 0.0;
    let phi = exact_shapley(&g.explainer().local_sverl(s2).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.phi;
    let best = (0..phi.len()).max_by(|&i, &j| phi[i].total_cmp(&phi[j])).unwrap();
    ok &= best == q42 && phi[q42] > 0.0 && phi[m1] < 0.0 && phi[m2] < 0.0;
    notes.push(format!(
        "4x4: phi(4,2)={:.3} phi(M1)={:.3} phi(M2)={:.3}",
        phi[q42], phi[m1], phi[m2]
    ));

    let t = Instant::now();
    let small = Solved::new(
        Minesweeper::new(MinesweeperConfig::SMALL).and_then(|m| m.build()).map_err(|e| e.to_string())?,
        OccupancyMode::Strict,
    );
    let ex = small.explainer();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failures = Vec::new();
    let mut games = 0;
    let states: Vec<usize> = small.occupancy.support().collect();
    for &s in &states {
        let mut tables = vec![
            table_of(&ex.value(&small.values, s).map_err(|e| e.to_string())?),
            table_of(&ex.local_sverl(s).map_err(|e| e.to_string())?),
        ];
        for (_, t) in ex.policy_probs(s).map_err(|e| e.to_string())? {
            tables.push(table_of(&t));
        }
        for t in tables {
            let other = random_game(9, &mut rng);
            failures.extend(check_axioms(&format!("3x3 state {s}"), &t, &other, 1e-9).failures);
            games += 1;
        }
    }
    let small_time = t.elapsed();
    ok &= failures.is_empty() && small_time < Duration::from_secs(120);
    notes.push(format!(
        "3x3/1: {games} games over {} states, {} violations in {:.1?}",
        states.len(),
        failures.len(),
        small_time
    ));
    check(ok, notes.join("; "))
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 12] = [
        (1, "gridworld-a action-value golden numbers", 1, c01_value_shapley_golden),
        (2, "gridworld-a local performance is all zero", 1, c02_gridworld_a_null_performance),
        (3, "gridworld-b global aggregate", 10, c03_gridworld_b_global),
        (4, "gridworld-b local structure", 10, c04_gridworld_b_local),
        (5, "tic-tac-toe value vs performance contrast", 300, c05_tictactoe_contrast),
        (6, "gridworld-c policy vs performance contrast", 10, c06_gridworld_c_contrast),
        (7, "shapley axiom suite", 30, c07_axioms),
        (8, "exact vs all-orderings oracle", 10, c08_oracle_equivalence),
        (9, "gridworld-a occupancy", 30, c09_occupancy),
        (10, "sampler convergence", 300, c10_sampler_convergence),
        (11, "taxi sign pattern", 600, c11_taxi_signs),
        (12, "minesweeper substitute checks", 600, c12_minesweeper),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, limit, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(limit);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d} (took {elapsed:.1?}, limit {limit}s)")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        println!("criterion {id:>2} {status} [{elapsed:>9.2?}] {name}: {detail}");
        if status == "FAIL" {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
