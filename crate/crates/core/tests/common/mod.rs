#![allow(dead_code)]

use rand::Rng;
use sverl::shapley::{shapley_from_table, TableGame};
use sverl::{Attribution, CharacteristicFn, Coalition};

/// Shapley values by averaging marginal contributions over all `n!`
/// orderings. Independent of the library's subset enumeration.
pub fn permutation_oracle(n: usize, v: &dyn Fn(u32) -> f64) -> Vec<f64> {
    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0u64;
    heap_permutations(&mut order, n, &mut |perm| {
        count += 1;
        let mut bits = 0u32;
        for &i in perm {
            let before = v(bits);
            bits |= 1 << i;
            phi[i] += v(bits) - before;
        }
    });
    phi.iter().map(|p| p / count as f64).collect()
}

fn heap_permutations(items: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k <= 1 {
        visit(items);
        return;
    }
    for i in 0..k - 1 {
        heap_permutations(items, k - 1, visit);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
    heap_permutations(items, k - 1, visit);
}

/// A random game with a planted symmetric pair (players 0 and 1) and a
/// planted null player (the last one) once `n >= 3`.
pub fn planted_game<R: Rng>(n: usize, rng: &mut R) -> TableGame {
    let values: Vec<f64> = if n < 3 {
        (0..1u32 << n).map(|_| rng.gen_range(-5.0..5.0)).collect()
    } else {
        let rest = n - 3;
        // u(pair count, mask over players 2..n-1)
        let u: Vec<f64> = (0..3 << rest).map(|_| rng.gen_range(-5.0..5.0)).collect();
        (0..1u32 << n)
            .map(|bits| {
                let pair = (bits & 1) + (bits >> 1 & 1);
                let mid = (bits >> 2) & ((1 << rest) - 1);
                u[((mid as usize) * 3) + pair as usize]
            })
            .collect()
    };
    TableGame::new(n, values).unwrap()
}

pub fn random_game<R: Rng>(n: usize, rng: &mut R) -> TableGame {
    TableGame::new(n, (0..1u32 << n).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
}

/// Outcome of checking the four axioms on one game.
#[derive(Debug, Default)]
pub struct AxiomReport {
    pub failures: Vec<String>,
    pub symmetric_pairs: usize,
    pub null_players: usize,
}

impl AxiomReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn tol_for(values: &[f64], tol: f64) -> f64 {
    tol * values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Efficiency, symmetry, null player and linearity against `other`.
pub fn check_axioms(label: &str, game: &TableGame, other: &TableGame, tol: f64) -> AxiomReport {
    let n = game.arity();
    let vals = game.values();
    let t = tol_for(vals, tol);
    let eq = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    let phi = shapley_from_table(game);
    let mut report = AxiomReport::default();

    if phi.efficiency_gap().abs() > t {
        report.failures.push(format!("{label}: efficiency gap {:e}", phi.efficiency_gap()));
    }

    for i in 0..n {
        let null = (0..1u32 << n).filter(|b| b >> i & 1 == 0).all(|b| eq(vals[(b | 1 << i) as usize], vals[b as usize]));
        if null {
            report.null_players += 1;
            if phi.phi[i].abs() > t {
                report.failures.push(format!("{label}: null player {i} has φ={:e}", phi.phi[i]));
            }
        }
        for j in i + 1..n {
            let sym = (0..1u32 << n)
                .filter(|b| b >> i & 1 == 0 && b >> j & 1 == 0)
                .all(|b| eq(vals[(b | 1 << i) as usize], vals[(b | 1 << j) as usize]));
            if sym {
                report.symmetric_pairs += 1;
                if (phi.phi[i] - phi.phi[j]).abs() > t {
                    report.failures.push(format!("{label}: symmetric {i},{j} differ by {:e}", phi.phi[i] - phi.phi[j]));
                }
            }
        }
    }

    let (a, b) = (0.7, -1.3);
    let mixed: Vec<f64> = vals.iter().zip(other.values()).map(|(x, y)| a * x + b * y).collect();
    let mixed = shapley_from_table(&TableGame::new(n, mixed).unwrap());
    let psi = shapley_from_table(other);
    let t_lin = t.max(tol_for(other.values(), tol));
    for i in 0..n {
        let expect = a * phi.phi[i] + b * psi.phi[i];
        if (mixed.phi[i] - expect).abs() > t_lin {
            report.failures.push(format!("{label}: linearity off by {:e} at {i}", mixed.phi[i] - expect));
        }
    }
    report
}

pub fn table_of(v: &dyn CharacteristicFn) -> TableGame {
    TableGame::tabulate(v).unwrap()
}

pub fn value_at(table: &TableGame, members: &[usize]) -> f64 {
    table.get(Coalition::from_members(members.iter().copied(), table.arity()).unwrap())
}

pub fn rounded(a: &Attribution) -> Vec<f64> {
    a.phi.iter().map(|v| (v * 1e4).round() / 1e4).collect()
}
