//! Sparse fixed-point solves `x = b + M x` (or `x = b + Mᵀ x`) for
//! substochastic `M`, as they arise in policy evaluation and visit-count
//! computations on episodic chains.
//!
//! The chain is split into strongly connected components and solved one
//! component at a time in dependency order: singletons directly, small
//! components by dense LU, large ones by Gauss-Seidel. A component from which
//! no probability mass leaks is a closed class; with it the system is
//! singular, which is reported instead of returning garbage.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

/// Components up to this size are solved by dense LU.
const DENSE_LIMIT: usize = 3000;
const LEAK_TOL: f64 = 1e-12;
const GS_MAX_SWEEPS: usize = 1_000_000;

pub(crate) type SparseRows = Vec<Vec<(usize, f64)>>;

/// A closed class: the chain never leaves the component containing `state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Singular {
    pub state: usize,
}

fn transpose(rows: &SparseRows) -> SparseRows {
    let mut out: SparseRows = vec![Vec::new(); rows.len()];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            out[j].push((i, v));
        }
    }
    out
}

/// Solve `x = b + M x`, or `x = b + Mᵀ x` when `transposed`.
pub(crate) fn solve_fixed_point(
    m_rows: &SparseRows,
    b: &[f64],
    transposed: bool,
) -> Result<Vec<f64>, Singular> {
    let n = m_rows.len();
    assert_eq!(b.len(), n);
    let owned;
    let a_rows: &SparseRows = if transposed {
        owned = transpose(m_rows);
        &owned
    } else {
        m_rows
    };

    let mut graph = DiGraph::<(), ()>::with_capacity(n, 0);
    for _ in 0..n {
        graph.add_node(());
    }
    for (i, row) in a_rows.iter().enumerate() {
        for &(j, v) in row {
            if v > 0.0 && i != j {
                graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
            }
        }
    }
    // sinks of the dependency graph first
    let components = tarjan_scc(&graph);

    let mut x = vec![0.0; n];
    let mut solved = vec![false; n];
    let mut local = vec![usize::MAX; n];
    for comp in components {
        let members: Vec<usize> = comp.iter().map(|v| v.index()).collect();
        for (k, &i) in members.iter().enumerate() {
            local[i] = k;
        }
        let in_comp = |j: usize| local[j] != usize::MAX && !solved[j];

        let leaks = members.iter().any(|&i| {
            let inside: f64 = m_rows[i]
                .iter()
                .filter(|(j, _)| in_comp(*j))
                .map(|(_, v)| v)
                .sum();
            inside < 1.0 - LEAK_TOL
        });
        if !leaks {
            return Err(Singular { state: members[0] });
        }

        let rhs: Vec<f64> = members
            .iter()
            .map(|&i| {
                b[i] + a_rows[i]
                    .iter()
                    .filter(|(j, _)| solved[*j])
                    .map(|&(j, v)| v * x[j])
                    .sum::<f64>()
            })
            .collect();

        if members.len() == 1 {
            let i = members[0];
            let self_loop: f64 = a_rows[i].iter().filter(|(j, _)| *j == i).map(|(_, v)| v).sum();
            x[i] = rhs[0] / (1.0 - self_loop);
        } else if members.len() <= DENSE_LIMIT {
            let m = members.len();
            let mut mat = DMatrix::<f64>::identity(m, m);
            for (k, &i) in members.iter().enumerate() {
                for &(j, v) in &a_rows[i] {
                    if in_comp(j) {
                        mat[(k, local[j])] -= v;
                    }
                }
            }
            let sol = mat
                .lu()
                .solve(&DVector::from_vec(rhs))
                .ok_or(Singular { state: members[0] })?;
            for (k, &i) in members.iter().enumerate() {
                x[i] = sol[k];
            }
        } else {
            gauss_seidel(&members, a_rows, &rhs, &local, &solved, &mut x)
                .map_err(|_| Singular { state: members[0] })?;
        }

        for &i in &members {
            solved[i] = true;
            local[i] = usize::MAX;
        }
    }
    Ok(x)
}

fn gauss_seidel(
    members: &[usize],
    a_rows: &SparseRows,
    rhs: &[f64],
    local: &[usize],
    solved: &[bool],
    x: &mut [f64],
) -> Result<(), ()> {
    let in_comp = |j: usize| local[j] != usize::MAX && !solved[j];
    for _ in 0..GS_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for (k, &i) in members.iter().enumerate() {
            let mut diag = 0.0;
            let mut acc = rhs[k];
            for &(j, v) in &a_rows[i] {
                if j == i {
                    diag += v;
                } else if in_comp(j) {
                    acc += v * x[j];
                }
            }
            let new = acc / (1.0 - diag);
            delta = delta.max((new - x[i]).abs());
            scale = scale.max(new.abs());
            x[i] = new;
        }
        if delta <= 1e-15 * scale {
            return Ok(());
        }
    }
    Err(())
}

/// `max_i |x_i - b_i - (M x)_i|` (or with `Mᵀ`).
pub(crate) fn residual(m_rows: &SparseRows, b: &[f64], x: &[f64], transposed: bool) -> f64 {
    let mut r: Vec<f64> = x.iter().zip(b).map(|(xi, bi)| xi - bi).collect();
    for (i, row) in m_rows.iter().enumerate() {
        for &(j, v) in row {
            if transposed {
                r[j] -= v * x[i];
            } else {
                r[i] -= v * x[j];
            }
        }
    }
    r.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}
