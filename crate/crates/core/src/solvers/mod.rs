//! Value iteration, exact policy evaluation, Monte Carlo returns and Minimax.

pub mod minimax;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, SparseRows};
use crate::mdp::{ActionId, StateId, StochasticPolicy, TabularMdp};
use crate::shapley::RunningStats;
use crate::{Error, Result};

/// State values and, optionally, action values. Terminal states hold zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub v: Vec<f64>,
    /// Flat `state * n_actions + action`; `None` for illegal actions.
    pub q: Option<Vec<Option<f64>>>,
    n_actions: usize,
}

impl ValueTable {
    pub fn new(v: Vec<f64>, q: Option<Vec<Option<f64>>>, n_actions: usize) -> Self {
        Self { v, q, n_actions }
    }

    pub fn value(&self, s: StateId) -> f64 {
        self.v[s]
    }

    pub fn q(&self, s: StateId, a: ActionId) -> Option<f64> {
        self.q.as_ref().and_then(|q| q[s * self.n_actions + a])
    }

    pub fn to_json(&self, mdp: &TabularMdp) -> Result<String> {
        #[derive(Serialize)]
        struct Entry {
            v: f64,
            #[serde(skip_serializing_if = "BTreeMap::is_empty")]
            q: BTreeMap<String, f64>,
        }
        let map: BTreeMap<StateId, Entry> = (0..self.v.len())
            .map(|s| {
                let q = mdp
                    .legal_actions(s)
                    .filter_map(|a| self.q(s, a).map(|x| (mdp.actions()[a].clone(), x)))
                    .collect();
                (s, Entry { v: self.v[s], q })
            })
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }
}

/// `Q(s, a) = Σ p (r + γ V(s'))` for every legal pair.
pub fn q_from_v(mdp: &TabularMdp, v: &[f64]) -> Vec<Option<f64>> {
    let na = mdp.n_actions();
    let gamma = mdp.gamma();
    let mut q = vec![None; mdp.n_states() * na];
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in mdp.legal_actions(s) {
            let total = mdp
                .outcome_slice(s, a)
                .iter()
                .map(|o| o.prob() * (o.reward() + gamma * o.next().map_or(0.0, |n| v[n])))
                .sum();
            q[s * na + a] = Some(total);
        }
    }
    q
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueIterationConfig {
    /// Stop once the sup-norm Bellman residual drops below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Actions whose value is within this of the best count as tied; the
    /// lowest action index wins.
    pub tie_tol: f64,
}

impl Default for ValueIterationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
            tie_tol: 1e-9,
        }
    }
}

/// Optimal values by in-place (Gauss-Seidel) value iteration, and the greedy
/// deterministic policy with lowest-action-index tie-break.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<(ValueTable, StochasticPolicy)> {
    value_iteration_with(
        mdp,
        &ValueIterationConfig {
            tol,
            ..Default::default()
        },
    )
}

pub fn value_iteration_with(
    mdp: &TabularMdp,
    config: &ValueIterationConfig,
) -> Result<(ValueTable, StochasticPolicy)> {
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..config.max_sweeps {
        residual = 0.0;
        // reverse id order: environments enumerate states breadth-first from
        // the start, so successors tend to be updated first
        for s in (0..n).rev() {
            if mdp.is_terminal(s) {
                continue;
            }
            let best = mdp
                .legal_actions(s)
                .map(|a| {
                    mdp.outcome_slice(s, a)
                        .iter()
                        .map(|o| o.prob() * (o.reward() + gamma * o.next().map_or(0.0, |j| v[j])))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: config.max_sweeps,
            residual,
        });
    }
    let q = q_from_v(mdp, &v);
    let policy = greedy_policy(mdp, &q, config.tie_tol);
    Ok((ValueTable::new(v, Some(q), mdp.n_actions()), policy))
}

/// Deterministic greedy policy; the lowest action index wins among actions
/// within `tie_tol` of the best.
pub fn greedy_policy(mdp: &TabularMdp, q: &[Option<f64>], tie_tol: f64) -> StochasticPolicy {
    let na = mdp.n_actions();
    let choice: Vec<Option<ActionId>> = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                return None;
            }
            let row = &q[s * na..(s + 1) * na];
            let best = row.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter().position(|x| x.is_some_and(|x| x >= best - tie_tol))
        })
        .collect();
    StochasticPolicy::deterministic(mdp, &choice).expect("greedy choice is legal")
}

/// Optimal actions of `s` (all within `tie_tol` of the best value).
pub fn optimal_actions(mdp: &TabularMdp, values: &ValueTable, s: StateId, tie_tol: f64) -> Vec<ActionId> {
    let best = mdp
        .legal_actions(s)
        .filter_map(|a| values.q(s, a))
        .fold(f64::NEG_INFINITY, f64::max);
    mdp.legal_actions(s)
        .filter(|&a| values.q(s, a).is_some_and(|x| x >= best - tie_tol))
        .collect()
}

/// The chain of `policy` as sparse rows `discount · P_π` over non-terminal
/// successors, plus the expected one-step reward `r_π`.
pub(crate) fn policy_chain(mdp: &TabularMdp, policy: &StochasticPolicy, discount: f64) -> (SparseRows, Vec<f64>) {
    let n = mdp.n_states();
    let gamma = discount;
    let mut rows: SparseRows = vec![Vec::new(); n];
    let mut reward = vec![0.0; n];
    for s in 0..n {
        if mdp.is_terminal(s) {
            continue;
        }
        for (a, &p) in policy.row(s).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for o in mdp.outcome_slice(s, a) {
                reward[s] += p * o.prob() * o.reward();
                if let Some(j) = o.next() {
                    if !mdp.is_terminal(j) {
                        rows[s].push((j, gamma * p * o.prob()));
                    }
                }
            }
        }
    }
    (rows, reward)
}

/// `V^π` by solving `(I − γ P_π) v = r_π` directly. Fails with
/// [`Error::ImproperPolicy`] when some state never terminates under `γ = 1`.
pub fn policy_evaluation_exact(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<ValueTable> {
    let v = state_values(mdp, policy)?;
    let q = q_from_v(mdp, &v);
    Ok(ValueTable::new(v, Some(q), mdp.n_actions()))
}

/// Like [`policy_evaluation_exact`] but without the action values.
pub fn state_values(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Vec<f64>> {
    let (rows, reward) = policy_chain(mdp, policy, mdp.gamma());
    let v = linalg::solve_fixed_point(&rows, &reward, false)
        .map_err(|e| Error::ImproperPolicy { state: e.state })?;
    debug_assert!(linalg::residual(&rows, &reward, &v, false) < 1e-8);
    Ok(v)
}

/// Expected return over at most `horizon` steps.
pub fn finite_horizon_values(mdp: &TabularMdp, policy: &StochasticPolicy, horizon: usize) -> Vec<f64> {
    let (rows, reward) = policy_chain(mdp, policy, mdp.gamma());
    let mut v = vec![0.0; mdp.n_states()];
    let mut next = vec![0.0; mdp.n_states()];
    for _ in 0..horizon {
        for (s, row) in rows.iter().enumerate() {
            next[s] = reward[s] + row.iter().map(|&(j, w)| w * v[j]).sum::<f64>();
        }
        std::mem::swap(&mut v, &mut next);
    }
    v
}

/// Values of a policy that may fail to terminate.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValues {
    pub values: Vec<f64>,
    /// Set when the exact system was singular and the values are expected
    /// returns over the first `cap` steps instead.
    pub truncated: bool,
}

/// Exact values when the policy is proper, capped-horizon values otherwise.
pub fn evaluate_with_cap(mdp: &TabularMdp, policy: &StochasticPolicy, cap: usize) -> Result<PolicyValues> {
    match state_values(mdp, policy) {
        Ok(values) => Ok(PolicyValues {
            values,
            truncated: false,
        }),
        Err(Error::ImproperPolicy { .. }) => Ok(PolicyValues {
            values: finite_horizon_values(mdp, policy, cap),
            truncated: true,
        }),
        Err(e) => Err(e),
    }
}

/// Default episode length cap: ten steps per state.
pub fn default_episode_cap(mdp: &TabularMdp) -> usize {
    10 * mdp.n_states()
}

/// Result of one simulated episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Episode {
    pub ret: f64,
    pub steps: usize,
    pub truncated: bool,
}

/// Run one episode from `s0`, choosing actions with `choose`.
pub fn rollout<R, F>(mdp: &TabularMdp, s0: StateId, cap: usize, rng: &mut R, mut choose: F) -> Result<Episode>
where
    R: Rng,
    F: FnMut(StateId, &mut R) -> Result<ActionId>,
{
    let gamma = mdp.gamma();
    let mut s = s0;
    let mut ret = 0.0;
    let mut discount = 1.0;
    for t in 0..cap {
        if mdp.is_terminal(s) {
            return Ok(Episode {
                ret,
                steps: t,
                truncated: false,
            });
        }
        let a = choose(s, rng)?;
        let (next, r) = mdp.step(s, a, rng)?;
        ret += discount * r;
        discount *= gamma;
        match next {
            Some(n) => s = n,
            None => {
                return Ok(Episode {
                    ret,
                    steps: t + 1,
                    truncated: false,
                })
            }
        }
    }
    Ok(Episode {
        ret,
        steps: cap,
        truncated: !mdp.is_terminal(s),
    })
}

/// Sample mean of returns with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub episodes: u64,
    /// Episodes cut off at the length cap.
    pub truncated: u64,
}

pub fn monte_carlo_return<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    s0: StateId,
    episodes: u64,
    cap: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("at least one episode is required".into()));
    }
    let mut stats = RunningStats::default();
    let mut truncated = 0;
    for _ in 0..episodes {
        let ep = rollout(mdp, s0, cap, rng, |s, rng| {
            policy.sample(s, rng).ok_or_else(|| {
                Error::InvalidPolicy(format!("policy has no action in state {s}"))
            })
        })?;
        truncated += ep.truncated as u64;
        stats.push(ep.ret);
    }
    Ok(McEstimate {
        mean: stats.mean(),
        standard_error: stats.standard_error(),
        episodes,
        truncated,
    })
}
