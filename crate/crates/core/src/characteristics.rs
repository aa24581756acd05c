//! Characteristic functions that explain an agent: predicted value, action
//! probability, and expected return when features are hidden from the policy
//! at one state (local) or at every state (global).
//!
//! Hidden features are filled in on-manifold: the agent acting on `s_C`
//! behaves like the occupancy-weighted mixture `π_C(a|s) = Σ p(s'|s_C) π(a|s')`.
//! Mixture mass on actions that are illegal at `s` is dropped and the row
//! renormalized; a row with no legal mass becomes uniform over legal actions.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::mdp::{sample_index, ActionId, StateId, StochasticPolicy, TabularMdp};
use crate::occupancy::{Mixed, MixtureTable, OccupancyModel};
use crate::shapley::{
    exact_shapley, feature_rng, sample_gains, weighted_global, Attribution, CharacteristicFn,
    Coalition, Estimate, Scope, MAX_EXACT_ARITY,
};
use crate::solvers::{default_episode_cap, evaluate_with_cap, policy_chain, rollout, ValueTable};
use crate::{Error, Result};

/// Evaluations of a characteristic over every coalition.
#[derive(Clone, Debug)]
pub struct CoalitionTable {
    n: usize,
    values: Vec<std::result::Result<f64, String>>,
    fallback: Vec<bool>,
    truncated: Vec<bool>,
}

impl CoalitionTable {
    fn tabulate<F>(n: usize, f: F) -> Result<Self>
    where
        F: Fn(Coalition) -> std::result::Result<(f64, bool, bool), String> + Sync,
    {
        if n > MAX_EXACT_ARITY {
            return Err(Error::ArityTooLarge {
                n,
                limit: MAX_EXACT_ARITY,
            });
        }
        let rows: Vec<_> = (0..1u32 << n)
            .into_par_iter()
            .map(|bits| f(Coalition::from_bits(bits, n).expect("bits fit")))
            .collect();
        let mut values = Vec::with_capacity(rows.len());
        let mut fallback = Vec::with_capacity(rows.len());
        let mut truncated = Vec::with_capacity(rows.len());
        for r in rows {
            match r {
                Ok((v, fb, tr)) => {
                    values.push(Ok(v));
                    fallback.push(fb);
                    truncated.push(tr);
                }
                Err(e) => {
                    values.push(Err(e));
                    fallback.push(false);
                    truncated.push(false);
                }
            }
        }
        Ok(Self {
            n,
            values,
            fallback,
            truncated,
        })
    }

    pub fn get(&self, coalition: Coalition) -> Result<f64> {
        self.values[coalition.bits() as usize]
            .clone()
            .map_err(Error::UnsupportedObservation)
    }

    /// Coalitions whose value came from the uniform fallback conditional.
    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&b| b).count()
    }

    /// Coalitions whose return was cut off at the episode cap.
    pub fn truncated_count(&self) -> usize {
        self.truncated.iter().filter(|&&b| b).count()
    }

    pub fn unsupported_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_err()).count()
    }
}

impl CharacteristicFn for CoalitionTable {
    fn arity(&self) -> usize {
        self.n
    }

    fn eval(&self, coalition: Coalition) -> Result<f64> {
        self.get(coalition)
    }
}

/// `π_C` at every state.
#[derive(Clone, Debug)]
pub struct MaskedPolicy {
    pub coalition: Coalition,
    pub policy: StochasticPolicy,
    /// States whose observation had no occupancy mass; their rows use the
    /// uniform-over-consistent-states fallback.
    pub fallback_states: Vec<StateId>,
    /// States whose mixture put mass on actions illegal there.
    pub renormalized_states: Vec<StateId>,
}

/// Restrict `row` to actions legal at `s`; uniform over legal actions when
/// nothing legal is left. Returns whether anything changed.
fn restrict_to_legal(mdp: &TabularMdp, s: StateId, row: &mut [f64]) -> bool {
    let mut changed = false;
    for (a, p) in row.iter_mut().enumerate() {
        if *p != 0.0 && !mdp.is_legal(s, a) {
            *p = 0.0;
            changed = true;
        }
    }
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter_mut().for_each(|p| *p /= total);
    } else {
        let legal: Vec<ActionId> = mdp.legal_actions(s).collect();
        for &a in &legal {
            row[a] = 1.0 / legal.len() as f64;
        }
        changed = true;
    }
    changed
}

/// Which distribution weights per-state attributions in the global aggregate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalWeighting {
    #[default]
    Occupancy,
    Initial,
}

/// The policy being explained together with its occupancy model.
#[derive(Clone, Copy, Debug)]
pub struct Explainer<'a> {
    mdp: &'a TabularMdp,
    policy: &'a StochasticPolicy,
    occupancy: &'a OccupancyModel,
    episode_cap: usize,
}

impl<'a> Explainer<'a> {
    pub fn new(mdp: &'a TabularMdp, policy: &'a StochasticPolicy, occupancy: &'a OccupancyModel) -> Self {
        Self {
            mdp,
            policy,
            occupancy,
            episode_cap: default_episode_cap(mdp),
        }
    }

    pub fn with_episode_cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    pub fn policy(&self) -> &'a StochasticPolicy {
        self.policy
    }

    pub fn occupancy(&self) -> &'a OccupancyModel {
        self.occupancy
    }

    fn check_state(&self, s: StateId) -> Result<()> {
        if s >= self.mdp.n_states() {
            return Err(Error::InvalidArgument(format!("no state {s}")));
        }
        if self.mdp.is_terminal(s) {
            return Err(Error::TerminalState(s));
        }
        Ok(())
    }

    fn mixtures(&self, s: StateId, dim: usize, fill: &(dyn Fn(StateId, &mut [f64]) + Sync)) -> Result<MixtureTable> {
        self.check_state(s)?;
        MixtureTable::build(self.mdp, self.occupancy, s, dim, fill)
    }

    fn describe(&self, s: StateId, c: Coalition) -> String {
        self.mdp.observe(s, c).describe(self.mdp.features())
    }

    /// `C ↦ Σ p(s'|s_C) V(s')`.
    pub fn value(&self, values: &ValueTable, s: StateId) -> Result<CoalitionTable> {
        let fill = |t: StateId, out: &mut [f64]| out[0] = values.v[t];
        let table = self.mixtures(s, 1, &fill)?;
        CoalitionTable::tabulate(self.mdp.n_features(), |c| {
            let m = table.get(c).ok_or_else(|| self.describe(s, c))?;
            Ok((m.value[0], m.fallback, false))
        })
    }

    /// `C ↦ Σ p(s'|s_C) Q(s', a)`, over consistent states where `a` is legal.
    pub fn q_value(&self, values: &ValueTable, s: StateId, a: ActionId) -> Result<CoalitionTable> {
        if values.q.is_none() {
            return Err(Error::InvalidArgument("value table has no action values".into()));
        }
        if !self.mdp.is_legal(s, a) {
            return Err(Error::IllegalAction { state: s, action: a });
        }
        let fill = |t: StateId, out: &mut [f64]| {
            if let Some(q) = values.q(t, a) {
                out[0] = q;
                out[1] = 1.0;
            }
        };
        let table = self.mixtures(s, 2, &fill)?;
        CoalitionTable::tabulate(self.mdp.n_features(), |c| {
            let m = table.get(c).ok_or_else(|| self.describe(s, c))?;
            if m.value[1] <= 0.0 {
                return Err(self.describe(s, c));
            }
            Ok((m.value[0] / m.value[1], m.fallback, false))
        })
    }

    /// `π_C(·|s)` for every coalition, restricted to actions legal at `s`.
    pub fn masked_rows(&self, s: StateId) -> Result<Vec<std::result::Result<Mixed, String>>> {
        let fill = |t: StateId, out: &mut [f64]| out.copy_from_slice(self.policy.row(t));
        let table = self.mixtures(s, self.mdp.n_actions(), &fill)?;
        let n = self.mdp.n_features();
        Ok((0..1u32 << n)
            .into_par_iter()
            .map(|bits| {
                let c = Coalition::from_bits(bits, n).expect("bits fit");
                let mut m = table.get(c).ok_or_else(|| self.describe(s, c))?;
                if !c.is_full() {
                    restrict_to_legal(self.mdp, s, &mut m.value);
                }
                Ok(m)
            })
            .collect())
    }

    /// `C ↦ π_C(a|s)`.
    pub fn policy_prob(&self, s: StateId, a: ActionId) -> Result<CoalitionTable> {
        if !self.mdp.is_legal(s, a) {
            return Err(Error::IllegalAction { state: s, action: a });
        }
        let rows = self.masked_rows(s)?;
        CoalitionTable::tabulate(self.mdp.n_features(), |c| {
            let m = rows[c.bits() as usize].as_ref().map_err(Clone::clone)?;
            Ok((m.value[a], m.fallback, false))
        })
    }

    /// One characteristic per legal action at `s`, sharing the mixtures.
    pub fn policy_probs(&self, s: StateId) -> Result<Vec<(ActionId, CoalitionTable)>> {
        let rows = self.masked_rows(s)?;
        self.mdp
            .legal_actions(s)
            .map(|a| {
                let t = CoalitionTable::tabulate(self.mdp.n_features(), |c| {
                    let m = rows[c.bits() as usize].as_ref().map_err(Clone::clone)?;
                    Ok((m.value[a], m.fallback, false))
                })?;
                Ok((a, t))
            })
            .collect()
    }

    /// `π_C` at every non-terminal state. `C = F` gives `π` itself.
    ///
    /// Observations without occupancy mass always take the uniform fallback
    /// here, whatever the occupancy mode: the masked policy has to act
    /// everywhere it may wander. Such states are listed in the result.
    pub fn masked_policy(&self, coalition: Coalition) -> Result<MaskedPolicy> {
        let n = self.mdp.n_features();
        if coalition.n() != n {
            return Err(Error::ArityMismatch {
                expected: n,
                found: coalition.n(),
            });
        }
        let mut policy = self.policy.clone();
        let mut fallback_states = Vec::new();
        let mut renormalized_states = Vec::new();
        if coalition.is_full() {
            return Ok(MaskedPolicy {
                coalition,
                policy,
                fallback_states,
                renormalized_states,
            });
        }
        let na = self.mdp.n_actions();
        let members: Vec<usize> = coalition.members().collect();
        let key = |s: StateId| -> Vec<u8> { members.iter().map(|&i| self.mdp.state(s).get(i)).collect() };
        // (weighted sum, mass, uniform sum, count)
        let mut groups: HashMap<Vec<u8>, (Vec<f64>, f64, Vec<f64>, f64)> = HashMap::new();
        for t in 0..self.mdp.n_states() {
            if self.mdp.is_terminal(t) {
                continue;
            }
            let g = groups
                .entry(key(t))
                .or_insert_with(|| (vec![0.0; na], 0.0, vec![0.0; na], 0.0));
            let p = self.occupancy.prob(t);
            for (a, &q) in self.policy.row(t).iter().enumerate() {
                g.0[a] += p * q;
                g.2[a] += q;
            }
            g.1 += p;
            g.3 += 1.0;
        }
        for s in 0..self.mdp.n_states() {
            if self.mdp.is_terminal(s) {
                continue;
            }
            let g = &groups[&key(s)];
            let row = policy.row_mut(s);
            if g.1 > 0.0 {
                row.iter_mut().zip(&g.0).for_each(|(r, v)| *r = v / g.1);
            } else {
                row.iter_mut().zip(&g.2).for_each(|(r, v)| *r = v / g.3);
                fallback_states.push(s);
            }
            if restrict_to_legal(self.mdp, s, row) {
                renormalized_states.push(s);
            }
        }
        Ok(MaskedPolicy {
            coalition,
            policy,
            fallback_states,
            renormalized_states,
        })
    }

    /// `C ↦` expected return from `s` when the policy acts on `s_C` at `s`
    /// only and on the full state elsewhere.
    pub fn local_sverl(&self, s: StateId) -> Result<CoalitionTable> {
        let rows = self.masked_rows(s)?;
        let split = FirstReturn::new(self.mdp, self.policy, s).ok();
        CoalitionTable::tabulate(self.mdp.n_features(), |c| {
            let m = rows[c.bits() as usize].as_ref().map_err(Clone::clone)?;
            let (v, truncated) = match split.as_ref().and_then(|f| f.value(&m.value)) {
                Some(v) => (v, false),
                None => {
                    let patched = self.policy.patched(s, &m.value);
                    let pv = evaluate_with_cap(self.mdp, &patched, self.episode_cap)
                        .map_err(|e| e.to_string())?;
                    (pv.values[s], pv.truncated)
                }
            };
            Ok((v, m.fallback, truncated))
        })
    }

    /// [`Explainer::local_sverl`] with each coalition's return estimated from
    /// `episodes` rollouts. Every coalition draws from its own seeded stream.
    pub fn local_sverl_monte_carlo(&self, s: StateId, episodes: u64, seed: u64) -> Result<CoalitionTable> {
        if episodes == 0 {
            return Err(Error::InvalidArgument("at least one episode is required".into()));
        }
        let rows = self.masked_rows(s)?;
        CoalitionTable::tabulate(self.mdp.n_features(), |c| {
            let m = rows[c.bits() as usize].as_ref().map_err(Clone::clone)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c.bits() as u64);
            let mut total = 0.0;
            let mut truncated = false;
            for _ in 0..episodes {
                let ep = rollout(self.mdp, s, self.episode_cap, &mut rng, |t, rng| {
                    let row = if t == s { &m.value[..] } else { self.policy.row(t) };
                    sample_index(row, rng).ok_or(Error::InvalidPolicy(format!("no action in state {t}")))
                })
                .map_err(|e| e.to_string())?;
                total += ep.ret;
                truncated |= ep.truncated;
            }
            Ok((total / episodes as f64, m.fallback, truncated))
        })
    }

    /// Values of every masked policy `π_C` at every state.
    pub fn global_sverl(&self) -> Result<GlobalSverl> {
        let n = self.mdp.n_features();
        if n > MAX_EXACT_ARITY {
            return Err(Error::ArityTooLarge {
                n,
                limit: MAX_EXACT_ARITY,
            });
        }
        let work = (1usize << n).saturating_mul(self.mdp.n_states());
        if work > GLOBAL_WORK_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "global evaluation needs {work} state values, above the limit of {GLOBAL_WORK_LIMIT}"
            )));
        }
        let per: Vec<(Vec<f64>, bool, bool)> = (0..1u32 << n)
            .into_par_iter()
            .map(|bits| {
                let c = Coalition::from_bits(bits, n).expect("bits fit");
                let masked = self.masked_policy(c)?;
                let pv = evaluate_with_cap(self.mdp, &masked.policy, self.episode_cap)?;
                Ok((pv.values, !masked.fallback_states.is_empty(), pv.truncated))
            })
            .collect::<Result<_>>()?;
        Ok(GlobalSverl {
            n,
            values: per.iter().map(|p| p.0.clone()).collect(),
            fallback: per.iter().map(|p| p.1).collect(),
            truncated: per.iter().map(|p| p.2).collect(),
        })
    }

    /// Occupancy- (or start-) weighted mean of the per-state global
    /// attributions.
    pub fn global_attribution(&self, global: &GlobalSverl, weighting: GlobalWeighting) -> Result<Attribution> {
        let weights: Vec<(StateId, f64)> = match weighting {
            GlobalWeighting::Occupancy => self.occupancy.support().map(|s| (s, self.occupancy.prob(s))).collect(),
            GlobalWeighting::Initial => {
                let mut w: HashMap<StateId, f64> = HashMap::new();
                for &(s, p) in self.mdp.initial_distribution() {
                    *w.entry(s).or_default() += p;
                }
                let mut w: Vec<_> = w.into_iter().filter(|&(s, _)| !self.mdp.is_terminal(s)).collect();
                w.sort_by_key(|&(s, _)| s);
                w
            }
        };
        let parts = weights
            .into_iter()
            .map(|(s, w)| Ok((exact_shapley(&global.characteristic(s))?, w)))
            .collect::<Result<Vec<_>>>()?;
        weighted_global(&parts)
    }

    /// One sample of `δ(i, C)` for local SVERL at `s`: the return of a rollout
    /// that acts on `s_{C∪{i}}` at `s` minus one that acts on `s_C` there.
    /// The hidden state is redrawn at every visit to `s`.
    pub fn sample_local_gain<R: Rng>(&self, s: StateId, i: usize, coalition: Coalition, rng: &mut R) -> Result<f64> {
        LocalSampler::new(self, s)?.gain(i, coalition, rng)
    }

    /// Permutation-sampled local SVERL attribution at `s` from `budget`
    /// rollout pairs per feature.
    pub fn sampled_local_sverl(&self, s: StateId, budget: u64, seed: u64) -> Result<SampledLocal> {
        let sampler = LocalSampler::new(self, s)?;
        let n = self.mdp.n_features();
        let estimates = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = feature_rng(seed, i);
                sample_gains(n, i, budget, &mut rng, |c, rng| sampler.gain(i, c, rng))
            })
            .collect::<Result<Vec<_>>>()?;
        let ends = self.local_endpoints(s)?;
        Ok(SampledLocal {
            attribution: Attribution {
                phi: estimates.iter().map(|e| e.mean).collect(),
                v_empty: ends.0,
                v_full: ends.1,
                estimate: Estimate::Sampled { budget, seed },
                scope: Scope::Local,
                standard_error: Some(estimates.iter().map(|e| e.standard_error).collect()),
            },
            truncated_episodes: sampler.truncated.load(Ordering::Relaxed),
        })
    }

    fn local_endpoints(&self, s: StateId) -> Result<(f64, f64)> {
        let n = self.mdp.n_features();
        let split = FirstReturn::new(self.mdp, self.policy, s).ok();
        let mut out = [0.0; 2];
        for (k, c) in [Coalition::empty(n)?, Coalition::full(n)?].into_iter().enumerate() {
            let row = self.masked_row(s, c)?;
            out[k] = match split.as_ref().and_then(|f| f.value(&row)) {
                Some(v) => v,
                None => evaluate_with_cap(self.mdp, &self.policy.patched(s, &row), self.episode_cap)?.values[s],
            };
        }
        Ok((out[0], out[1]))
    }

    /// `π_C(·|s)` for a single coalition, by direct scan.
    pub fn masked_row(&self, s: StateId, coalition: Coalition) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let fill = |t: StateId, out: &mut [f64]| out.copy_from_slice(self.policy.row(t));
        let mut m = self
            .occupancy
            .mixture(self.mdp, s, coalition, self.mdp.n_actions(), &fill)
            .map_err(Error::UnsupportedObservation)?;
        if !coalition.is_full() {
            restrict_to_legal(self.mdp, s, &mut m.value);
        }
        Ok(m.value)
    }
}

/// Above this many `(coalition, state)` values the global characteristic is
/// refused.
pub const GLOBAL_WORK_LIMIT: usize = 50_000_000;

/// State values of `π_C` for every coalition.
#[derive(Clone, Debug)]
pub struct GlobalSverl {
    n: usize,
    values: Vec<Vec<f64>>,
    fallback: Vec<bool>,
    truncated: Vec<bool>,
}

impl GlobalSverl {
    pub fn characteristic(&self, s: StateId) -> CoalitionTable {
        CoalitionTable {
            n: self.n,
            values: self.values.iter().map(|v| Ok(v[s])).collect(),
            fallback: self.fallback.clone(),
            truncated: self.truncated.clone(),
        }
    }

    pub fn value(&self, coalition: Coalition, s: StateId) -> f64 {
        self.values[coalition.bits() as usize][s]
    }

    pub fn truncated_count(&self) -> usize {
        self.truncated.iter().filter(|&&b| b).count()
    }
}

/// A sampled local attribution with its truncation count.
#[derive(Clone, Debug)]
pub struct SampledLocal {
    pub attribution: Attribution,
    pub truncated_episodes: u64,
}

/// Return from `s` split at the first revisit of `s`: with
/// `R_a` the expected return up to the revisit (or the end) after taking
/// `a`, and `B_a` the discounted probability of a revisit,
/// `V(s) = Σ ρ_a R_a / (1 − Σ ρ_a B_a)` for any row `ρ` used at `s`.
struct FirstReturn {
    r: Vec<f64>,
    b: Vec<f64>,
}

impl FirstReturn {
    fn new(mdp: &TabularMdp, policy: &StochasticPolicy, s: StateId) -> Result<Self> {
        let gamma = mdp.gamma();
        let (mut rows, mut reward) = policy_chain(mdp, policy, gamma);
        let mut hit = vec![0.0; mdp.n_states()];
        for (t, row) in rows.iter_mut().enumerate() {
            row.retain(|&(j, w)| {
                if j == s {
                    hit[t] += w;
                    false
                } else {
                    true
                }
            });
        }
        rows[s].clear();
        reward[s] = 0.0;
        hit[s] = 0.0;
        let w = linalg::solve_fixed_point(&rows, &reward, false).map_err(|e| Error::ImproperPolicy { state: e.state })?;
        let h = linalg::solve_fixed_point(&rows, &hit, false).map_err(|e| Error::ImproperPolicy { state: e.state })?;
        let na = mdp.n_actions();
        let mut r = vec![0.0; na];
        let mut b = vec![0.0; na];
        for a in mdp.legal_actions(s) {
            for o in mdp.outcome_slice(s, a) {
                r[a] += o.prob() * o.reward();
                match o.next() {
                    Some(j) if j == s => b[a] += o.prob() * gamma,
                    Some(j) if !mdp.is_terminal(j) => {
                        r[a] += o.prob() * gamma * w[j];
                        b[a] += o.prob() * gamma * h[j];
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { r, b })
    }

    /// `None` when the row never leaves `s` for good.
    fn value(&self, row: &[f64]) -> Option<f64> {
        let num: f64 = row.iter().zip(&self.r).map(|(p, r)| p * r).sum();
        let back: f64 = row.iter().zip(&self.b).map(|(p, b)| p * b).sum();
        let leave = 1.0 - back;
        (leave > 1e-12).then(|| num / leave)
    }
}

/// Rollout sampler for local SVERL gains at one state.
struct LocalSampler<'e, 'a> {
    explainer: &'e Explainer<'a>,
    s: StateId,
    conditionals: Mutex<HashMap<u32, Arc<ConditionalDraw>>>,
    truncated: AtomicU64,
}

/// Hidden-state distribution for one coalition, plus the fallback row used
/// when no consistent state has a legal action at `s`.
struct ConditionalDraw {
    states: Vec<StateId>,
    weights: Vec<f64>,
    legal_mass: f64,
    row: Vec<f64>,
}

impl<'e, 'a> LocalSampler<'e, 'a> {
    fn new(explainer: &'e Explainer<'a>, s: StateId) -> Result<Self> {
        explainer.check_state(s)?;
        Ok(Self {
            explainer,
            s,
            conditionals: Mutex::new(HashMap::new()),
            truncated: AtomicU64::new(0),
        })
    }

    fn draw_for(&self, c: Coalition) -> Result<Arc<ConditionalDraw>> {
        if let Some(d) = self.conditionals.lock().expect("not poisoned").get(&c.bits()) {
            return Ok(d.clone());
        }
        let ex = self.explainer;
        let (mdp, policy) = (ex.mdp, ex.policy);
        let (states, weights) = if c.is_full() {
            (vec![self.s], vec![1.0])
        } else {
            let cond = ex.occupancy.conditional(mdp, &mdp.observe(self.s, c))?;
            cond.weights.into_iter().unzip()
        };
        let legal_mass: f64 = states
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * mdp.legal_actions(self.s).map(|a| policy.prob(t, a)).sum::<f64>())
            .sum();
        let row = ex.masked_row(self.s, c)?;
        let d = Arc::new(ConditionalDraw {
            states,
            weights,
            legal_mass,
            row,
        });
        self.conditionals
            .lock()
            .expect("not poisoned")
            .insert(c.bits(), d.clone());
        Ok(d)
    }

    fn act<R: Rng>(&self, draw: &ConditionalDraw, rng: &mut R) -> Result<ActionId> {
        let ex = self.explainer;
        if draw.legal_mass > 1e-12 {
            // rejection on legality: same law as the renormalized mixture
            loop {
                let t = draw.states[sample_index(&draw.weights, rng).expect("positive weights")];
                if let Some(a) = ex.policy.sample(t, rng) {
                    if ex.mdp.is_legal(self.s, a) {
                        return Ok(a);
                    }
                }
            }
        }
        sample_index(&draw.row, rng).ok_or(Error::InvalidPolicy(format!("no action in state {}", self.s)))
    }

    fn episode<R: Rng>(&self, draw: &ConditionalDraw, rng: &mut R) -> Result<f64> {
        let ex = self.explainer;
        let ep = rollout(ex.mdp, self.s, ex.episode_cap, rng, |t, rng| {
            if t == self.s {
                self.act(draw, rng)
            } else {
                ex.policy
                    .sample(t, rng)
                    .ok_or(Error::InvalidPolicy(format!("no action in state {t}")))
            }
        })?;
        if ep.truncated {
            self.truncated.fetch_add(1, Ordering::Relaxed);
        }
        Ok(ep.ret)
    }

    fn gain<R: Rng>(&self, i: usize, c: Coalition, rng: &mut R) -> Result<f64> {
        if c.contains(i) {
            return Err(Error::FeatureInCoalition { feature: i });
        }
        let with = self.draw_for(c.with(i))?;
        let without = self.draw_for(c)?;
        Ok(self.episode(&with, rng)? - self.episode(&without, rng)?)
    }
}
