//! State occupancy under a policy and the conditionals `p(s' | s_C)`.
//!
//! Occupancy is the expected number of visits per episode to each
//! non-terminal state, normalized to a distribution. Conditioning on a partial
//! observation keeps the consistent states and renormalizes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::mdp::{PartialObservation, StateId, StochasticPolicy, TabularMdp};
use crate::shapley::{Coalition, MAX_EXACT_ARITY};
use crate::solvers::{policy_chain, rollout};
use crate::{Error, Result};

/// What to do with observations the policy never produces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccupancyMode {
    /// Report [`Error::UnsupportedObservation`].
    #[default]
    Strict,
    /// Use the uniform distribution over consistent non-terminal states.
    Fallback,
}

impl fmt::Display for OccupancyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OccupancyMode::Strict => "strict",
            OccupancyMode::Fallback => "fallback",
        })
    }
}

impl FromStr for OccupancyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(OccupancyMode::Strict),
            "fallback" => Ok(OccupancyMode::Fallback),
            _ => Err(Error::InvalidArgument(format!("unknown occupancy mode {s:?}"))),
        }
    }
}

/// Normalized expected visit counts, from `(I − P_πᵀ) c = p₀`.
pub fn occupancy_exact(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Vec<f64>> {
    let (rows, _) = policy_chain(mdp, policy, 1.0);
    let mut p0 = vec![0.0; mdp.n_states()];
    for &(s, p) in mdp.initial_distribution() {
        if !mdp.is_terminal(s) {
            p0[s] += p;
        }
    }
    let counts = linalg::solve_fixed_point(&rows, &p0, true)
        .map_err(|e| Error::ImproperPolicy { state: e.state })?;
    normalize(counts)
}

fn normalize(mut counts: Vec<f64>) -> Result<Vec<f64>> {
    for c in counts.iter_mut() {
        if *c < 0.0 {
            *c = 0.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidMdp("no non-terminal state is ever visited".into()));
    }
    counts.iter_mut().for_each(|c| *c /= total);
    Ok(counts)
}

/// Empirical visit frequencies over `episodes` simulated episodes of at
/// most `cap` steps. Also returns the number of truncated episodes.
pub fn occupancy_simulated<R: Rng>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    episodes: u64,
    cap: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, u64)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("at least one episode is required".into()));
    }
    let mut counts = vec![0.0; mdp.n_states()];
    let mut truncated = 0;
    for _ in 0..episodes {
        let s0 = mdp.sample_initial(rng);
        let ep = rollout(mdp, s0, cap, rng, |s, rng| {
            counts[s] += 1.0;
            policy
                .sample(s, rng)
                .ok_or_else(|| Error::InvalidPolicy(format!("policy has no action in state {s}")))
        })?;
        truncated += ep.truncated as u64;
    }
    Ok((normalize(counts)?, truncated))
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// A distribution over states given a partial observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditional {
    pub weights: Vec<(StateId, f64)>,
    /// The observation had no occupancy mass and the uniform fallback was used.
    pub fallback: bool,
}

/// Marginal occupancy plus the conditioning rule.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyModel {
    marginal: Vec<f64>,
    mode: OccupancyMode,
}

impl OccupancyModel {
    pub fn exact(mdp: &TabularMdp, policy: &StochasticPolicy, mode: OccupancyMode) -> Result<Self> {
        Ok(Self {
            marginal: occupancy_exact(mdp, policy)?,
            mode,
        })
    }

    pub fn simulated<R: Rng>(
        mdp: &TabularMdp,
        policy: &StochasticPolicy,
        episodes: u64,
        cap: usize,
        rng: &mut R,
        mode: OccupancyMode,
    ) -> Result<Self> {
        let (marginal, _) = occupancy_simulated(mdp, policy, episodes, cap, rng)?;
        Ok(Self { marginal, mode })
    }

    /// Wrap a given distribution; terminal states must carry no mass.
    pub fn from_marginal(mdp: &TabularMdp, marginal: Vec<f64>, mode: OccupancyMode) -> Result<Self> {
        if marginal.len() != mdp.n_states() {
            return Err(Error::InvalidArgument("occupancy length differs from state count".into()));
        }
        let total: f64 = marginal.iter().sum();
        if (total - 1.0).abs() > 1e-10 || marginal.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument(format!("occupancy sums to {total}")));
        }
        if (0..mdp.n_states()).any(|s| mdp.is_terminal(s) && marginal[s] > 0.0) {
            return Err(Error::InvalidArgument("terminal states carry occupancy".into()));
        }
        Ok(Self { marginal, mode })
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.marginal[s]
    }

    pub fn mode(&self) -> OccupancyMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: OccupancyMode) -> Self {
        self.mode = mode;
        self
    }

    /// States with positive occupancy.
    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.marginal.len()).filter(|&s| self.marginal[s] > 0.0)
    }

    /// `p(s' | obs)` by direct scan over all states.
    pub fn conditional(&self, mdp: &TabularMdp, obs: &PartialObservation) -> Result<Conditional> {
        let consistent: Vec<StateId> = (0..mdp.n_states())
            .filter(|&s| !mdp.is_terminal(s) && crate::mdp::consistent(mdp.state(s), obs))
            .collect();
        let mass: f64 = consistent.iter().map(|&s| self.marginal[s]).sum();
        if mass > 0.0 {
            return Ok(Conditional {
                weights: consistent
                    .into_iter()
                    .filter(|&s| self.marginal[s] > 0.0)
                    .map(|s| (s, self.marginal[s] / mass))
                    .collect(),
                fallback: false,
            });
        }
        if self.mode == OccupancyMode::Strict || consistent.is_empty() {
            return Err(Error::UnsupportedObservation(obs.describe(mdp.features())));
        }
        let p = 1.0 / consistent.len() as f64;
        Ok(Conditional {
            weights: consistent.into_iter().map(|s| (s, p)).collect(),
            fallback: true,
        })
    }

    /// `Σ_{s'} p(s' | s_C) f(s')` for one coalition, by direct scan. `C = F`
    /// always gives `f(s)`.
    pub fn mixture(
        &self,
        mdp: &TabularMdp,
        s: StateId,
        coalition: Coalition,
        dim: usize,
        fill: &(dyn Fn(StateId, &mut [f64]) + Sync),
    ) -> std::result::Result<Mixed, String> {
        let mut out = vec![0.0; dim];
        if coalition.is_full() {
            fill(s, &mut out);
            return Ok(Mixed { value: out, fallback: false });
        }
        let obs = mdp.observe(s, coalition);
        let cond = self.conditional(mdp, &obs).map_err(|_| obs.describe(mdp.features()))?;
        let mut buf = vec![0.0; dim];
        for (t, w) in cond.weights {
            buf.iter_mut().for_each(|b| *b = 0.0);
            fill(t, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, b)| *o += w * b);
        }
        Ok(Mixed {
            value: out,
            fallback: cond.fallback,
        })
    }

    /// CSV rows `state,<features...>,probability`.
    pub fn to_csv(&self, mdp: &TabularMdp) -> String {
        let mut out = String::from("state");
        for f in mdp.features() {
            out.push(',');
            out.push_str(&csv_field(&f.name));
        }
        out.push_str(",probability\n");
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            out.push_str(&s.to_string());
            for (i, f) in mdp.features().iter().enumerate() {
                out.push(',');
                out.push_str(&csv_field(&f.values[mdp.state(s).get(i) as usize]));
            }
            out.push_str(&format!(",{}\n", self.marginal[s]));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A conditional expectation and whether the uniform fallback produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixed {
    pub value: Vec<f64>,
    pub fallback: bool,
}

/// `Σ_{s'} p(s' | s_C) f(s')` for one target state and every coalition at
/// once.
///
/// A state `s'` is consistent with `s_C` exactly when `C` is a subset of the
/// features on which `s'` and `s` agree. Bucketing states by that agreement
/// mask and taking superset sums over the coalition lattice gives all `2^n`
/// conditional sums in `O(|S| + n·2^n)` vector operations.
#[derive(Clone, Debug)]
pub struct MixtureTable {
    n: usize,
    dim: usize,
    full: Vec<f64>,
    weighted: Vec<f64>,
    mass: Vec<f64>,
    uniform: Option<(Vec<f64>, Vec<f64>)>,
}

impl MixtureTable {
    pub fn build(
        mdp: &TabularMdp,
        occ: &OccupancyModel,
        s: StateId,
        dim: usize,
        fill: &(dyn Fn(StateId, &mut [f64]) + Sync),
    ) -> Result<Self> {
        let n = mdp.n_features();
        if n > MAX_EXACT_ARITY {
            return Err(Error::ArityTooLarge {
                n,
                limit: MAX_EXACT_ARITY,
            });
        }
        let size = 1usize << n;
        let target = mdp.state(s);
        let fallback = occ.mode() == OccupancyMode::Fallback;
        let mut weighted = vec![0.0; size * dim];
        let mut mass = vec![0.0; size];
        let mut uniform = fallback.then(|| (vec![0.0; size * dim], vec![0.0; size]));
        let mut buf = vec![0.0; dim];
        for t in 0..mdp.n_states() {
            if mdp.is_terminal(t) {
                continue;
            }
            let p = occ.prob(t);
            if p == 0.0 && !fallback {
                continue;
            }
            let agree = mdp.state(t).agreement(target) as usize;
            buf.iter_mut().for_each(|b| *b = 0.0);
            fill(t, &mut buf);
            if p > 0.0 {
                mass[agree] += p;
                let row = &mut weighted[agree * dim..(agree + 1) * dim];
                row.iter_mut().zip(&buf).for_each(|(r, b)| *r += p * b);
            }
            if let Some((sums, counts)) = uniform.as_mut() {
                counts[agree] += 1.0;
                let row = &mut sums[agree * dim..(agree + 1) * dim];
                row.iter_mut().zip(&buf).for_each(|(r, b)| *r += b);
            }
        }
        superset_sums(&mut weighted, &mut mass, n, dim);
        if let Some((sums, counts)) = uniform.as_mut() {
            superset_sums(sums, counts, n, dim);
        }
        let mut full = vec![0.0; dim];
        fill(s, &mut full);
        Ok(Self {
            n,
            dim,
            full,
            weighted,
            mass,
            uniform,
        })
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    /// The conditional expectation at `coalition`, or `None` when the
    /// observation is unsupported (and the mode is strict).
    pub fn get(&self, coalition: Coalition) -> Option<Mixed> {
        if coalition.is_full() {
            return Some(Mixed {
                value: self.full.clone(),
                fallback: false,
            });
        }
        let c = coalition.bits() as usize;
        let dim = self.dim;
        if self.mass[c] > 0.0 {
            let m = self.mass[c];
            return Some(Mixed {
                value: self.weighted[c * dim..(c + 1) * dim].iter().map(|v| v / m).collect(),
                fallback: false,
            });
        }
        let (sums, counts) = self.uniform.as_ref()?;
        (counts[c] > 0.0).then(|| Mixed {
            value: sums[c * dim..(c + 1) * dim].iter().map(|v| v / counts[c]).collect(),
            fallback: true,
        })
    }
}

/// In place: `a[C] ← Σ_{A ⊇ C} a[A]` for both arrays.
fn superset_sums(values: &mut [f64], mass: &mut [f64], n: usize, dim: usize) {
    let size = 1usize << n;
    for bit in 0..n {
        let b = 1usize << bit;
        for c in 0..size {
            if c & b == 0 {
                mass[c] += mass[c | b];
                let (lo, hi) = values.split_at_mut((c | b) * dim);
                let dst = &mut lo[c * dim..c * dim + dim];
                dst.iter_mut().zip(&hi[..dim]).for_each(|(d, s)| *d += s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::gridworld::gridworld_a;
    use crate::solvers::value_iteration;

    #[test]
    fn gridworld_a_is_uniform_over_four_states() {
        let mdp = gridworld_a();
        let (_, pi) = value_iteration(&mdp, 1e-12).unwrap();
        let occ = occupancy_exact(&mdp, &pi).unwrap();
        for s in 0..4 {
            assert!((occ[s] - 0.25).abs() < 1e-12);
        }
        assert_eq!(occ[4] + occ[5], 0.0);
    }

    #[test]
    fn conditionals() {
        let mdp = gridworld_a();
        let (_, pi) = value_iteration(&mdp, 1e-12).unwrap();
        let occ = OccupancyModel::exact(&mdp, &pi, OccupancyMode::Strict).unwrap();
        let y = Coalition::from_members([1], 2).unwrap();
        let c = occ.conditional(&mdp, &mdp.observe(0, y)).unwrap();
        assert_eq!(c.weights, vec![(0, 0.5), (1, 0.5)]);
        let empty = occ.conditional(&mdp, &mdp.observe(0, Coalition::empty(2).unwrap())).unwrap();
        assert_eq!(empty.weights.len(), 4);
        // the goal row is never occupied
        let goal_row = mdp.observe(4, y);
        assert!(matches!(
            occ.conditional(&mdp, &goal_row),
            Err(Error::UnsupportedObservation(_))
        ));
    }

    #[test]
    fn table_matches_direct_scan() {
        let mdp = gridworld_a();
        let (vt, pi) = value_iteration(&mdp, 1e-12).unwrap();
        let occ = OccupancyModel::exact(&mdp, &pi, OccupancyMode::Strict).unwrap();
        let fill = |t: StateId, out: &mut [f64]| {
            out[0] = vt.v[t];
            out[1] = 1.0;
        };
        for s in 0..4 {
            let table = MixtureTable::build(&mdp, &occ, s, 2, &fill).unwrap();
            for c in Coalition::all(2).unwrap() {
                let direct = occ.mixture(&mdp, s, c, 2, &fill).unwrap();
                let fast = table.get(c).unwrap();
                for k in 0..2 {
                    assert!((direct.value[k] - fast.value[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_export() {
        let mdp = gridworld_a();
        let (_, pi) = value_iteration(&mdp, 1e-12).unwrap();
        let occ = OccupancyModel::exact(&mdp, &pi, OccupancyMode::Strict).unwrap();
        let csv = occ.to_csv(&mdp);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "state,x,y,probability");
        assert_eq!(lines[1], "0,1,1,0.25");
        assert_eq!(lines.len(), 5);
    }
}
