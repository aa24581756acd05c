//! Factored finite MDPs and tabular stochastic policies.
//!
//! States carry dense integer ids with a bijection to [`FeatureVector`]s.
//! Feature values are indices into per-feature alphabets. Transitions are
//! stored per `(state, action)` as a list of outcomes; an outcome either
//! moves to another state or ends the episode without a successor state
//! (used by Minesweeper, where a lost or won board needs no representation).

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::shapley::{Coalition, MAX_FEATURES};
use crate::{Error, Result};

pub type StateId = usize;
pub type ActionId = usize;

/// Row sums and normalization are checked to this tolerance.
pub const PROB_TOL: f64 = 1e-12;

/// Feature values of one state, each an index into that feature's alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<u8>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    /// Features on which `self` and `other` agree, as a coalition.
    pub fn agreement(&self, other: &FeatureVector) -> u32 {
        let mut bits = 0u32;
        for (i, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            if a == b {
                bits |= 1 << i;
            }
        }
        bits
    }
}

/// A named feature and its value alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

impl Feature {
    pub fn new<S: Into<String>>(name: S, values: Vec<String>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// The values of a state restricted to a coalition of features, in feature
/// index order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartialObservation {
    pub coalition: Coalition,
    pub values: Vec<u8>,
}

impl PartialObservation {
    pub fn describe(&self, features: &[Feature]) -> String {
        let mut out = String::from("{");
        for (k, (i, v)) in self.coalition.members().zip(&self.values).enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{}={}", features[i].name, features[i].values[*v as usize]);
        }
        out.push('}');
        out
    }
}

/// Project `s` onto the features in `coalition`.
pub fn observe(s: &FeatureVector, coalition: Coalition) -> PartialObservation {
    PartialObservation {
        coalition,
        values: coalition.members().map(|i| s.0[i]).collect(),
    }
}

/// Whether `s` agrees with `obs` on every observed feature.
pub fn consistent(s: &FeatureVector, obs: &PartialObservation) -> bool {
    obs.coalition
        .members()
        .zip(&obs.values)
        .all(|(i, v)| s.0.get(i) == Some(v))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Outcome {
    next: u32,
    prob: f64,
    reward: f64,
}

const EXIT: u32 = u32::MAX;

/// One possible result of taking an action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// `None` when the episode ends without a successor state.
    pub next: Option<StateId>,
    pub prob: f64,
    pub reward: f64,
}

impl From<&Outcome> for Transition {
    fn from(o: &Outcome) -> Self {
        Transition {
            next: (o.next != EXIT).then_some(o.next as usize),
            prob: o.prob,
            reward: o.reward,
        }
    }
}

/// A finite MDP whose states are feature vectors.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    name: String,
    features: Vec<Feature>,
    actions: Vec<String>,
    states: Vec<FeatureVector>,
    index: HashMap<FeatureVector, StateId>,
    terminal: Vec<bool>,
    // outcomes of (s, a) live in outcomes[offsets[s * A + a]..offsets[s * A + a + 1]]
    offsets: Vec<usize>,
    outcomes: Vec<Outcome>,
    gamma: f64,
    initial: Vec<(StateId, f64)>,
}

impl TabularMdp {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a.eq_ignore_ascii_case(name))
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// All states in canonical id order.
    pub fn enumerate_states(&self) -> &[FeatureVector] {
        &self.states
    }

    pub fn state(&self, s: StateId) -> &FeatureVector {
        &self.states[s]
    }

    pub fn state_id(&self, features: &FeatureVector) -> Option<StateId> {
        self.index.get(features).copied()
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal[s]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_distribution(&self) -> &[(StateId, f64)] {
        &self.initial
    }

    fn range(&self, s: StateId, a: ActionId) -> std::ops::Range<usize> {
        let k = s * self.actions.len() + a;
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn is_legal(&self, s: StateId, a: ActionId) -> bool {
        a < self.actions.len() && !self.range(s, a).is_empty()
    }

    pub fn legal_actions(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.actions.len()).filter(move |&a| self.is_legal(s, a))
    }

    pub fn transitions(&self, s: StateId, a: ActionId) -> impl Iterator<Item = Transition> + '_ {
        self.outcomes[self.range(s, a)].iter().map(Transition::from)
    }

    /// Raw successor ids (`None` for episode exit), probabilities and rewards.
    pub(crate) fn outcome_slice(&self, s: StateId, a: ActionId) -> &[Outcome] {
        &self.outcomes[self.range(s, a)]
    }

    /// `r(s, a)`: expected immediate reward.
    pub fn expected_reward(&self, s: StateId, a: ActionId) -> f64 {
        self.outcomes[self.range(s, a)]
            .iter()
            .map(|o| o.prob * o.reward)
            .sum()
    }

    pub fn observe(&self, s: StateId, coalition: Coalition) -> PartialObservation {
        observe(&self.states[s], coalition)
    }

    /// `name=value` pairs of every feature of `s`.
    pub fn describe_state(&self, s: StateId) -> String {
        let full = Coalition::full(self.n_features()).expect("feature count checked at build");
        self.observe(s, full).describe(&self.features)
    }

    /// Look a state up by feature value labels, e.g. `["1", "2"]`.
    pub fn state_by_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<StateId> {
        if labels.len() != self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "expected {} feature values, got {}",
                self.n_features(),
                labels.len()
            )));
        }
        let mut values = Vec::with_capacity(labels.len());
        for (f, label) in self.features.iter().zip(labels) {
            let label = label.as_ref();
            let v = f
                .values
                .iter()
                .position(|x| x.eq_ignore_ascii_case(label))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("{} has no value {label:?}", f.name))
                })?;
            values.push(v as u8);
        }
        self.state_id(&FeatureVector(values)).ok_or_else(|| {
            Error::InvalidArgument(format!("no state with features {labels:?}", labels = labels.iter().map(|l| l.as_ref()).collect::<Vec<_>>()))
        })
    }

    /// Sample a successor and reward. `None` as successor means the episode
    /// ended without entering a state.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: StateId,
        a: ActionId,
        rng: &mut R,
    ) -> Result<(Option<StateId>, f64)> {
        if self.terminal[s] {
            return Err(Error::TerminalState(s));
        }
        if !self.is_legal(s, a) {
            return Err(Error::IllegalAction {
                state: s,
                action: a,
            });
        }
        let outcomes = &self.outcomes[self.range(s, a)];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = outcomes[outcomes.len() - 1];
        for o in outcomes {
            acc += o.prob;
            if u < acc {
                chosen = *o;
                break;
            }
        }
        let t = Transition::from(&chosen);
        Ok((t.next, t.reward))
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> StateId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(s, p) in &self.initial {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.initial[self.initial.len() - 1].0
    }

    /// Whether every transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states()).all(|s| {
            (0..self.n_actions()).all(|a| self.range(s, a).len() <= 1)
        })
    }

    pub fn to_document(&self) -> MdpDocument {
        let mut transitions = Vec::new();
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                for o in &self.outcomes[self.range(s, a)] {
                    transitions.push(TransitionRecord {
                        state: s,
                        action: a,
                        next: (o.next != EXIT).then_some(o.next as usize),
                        prob: o.prob,
                        reward: o.reward,
                    });
                }
            }
        }
        MdpDocument {
            name: self.name.clone(),
            features: self.features.clone(),
            actions: self.actions.clone(),
            states: self.states.iter().map(|f| f.0.clone()).collect(),
            terminal: (0..self.n_states()).filter(|&s| self.terminal[s]).collect(),
            transitions,
            gamma: self.gamma,
            initial: self.initial.clone(),
        }
    }

    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        let mut b = MdpBuilder::new(
            doc.name.clone(),
            doc.features.clone(),
            doc.actions.clone(),
            doc.gamma,
        )?;
        let mut terminal = vec![false; doc.states.len()];
        for &t in &doc.terminal {
            *terminal.get_mut(t).ok_or_else(|| {
                Error::InvalidMdp(format!("terminal id {t} out of range"))
            })? = true;
        }
        for (s, values) in doc.states.iter().enumerate() {
            b.add_state(FeatureVector(values.clone()), terminal[s])?;
        }
        let mut rows: HashMap<(StateId, ActionId), Vec<Transition>> = HashMap::new();
        for t in &doc.transitions {
            rows.entry((t.state, t.action)).or_default().push(Transition {
                next: t.next,
                prob: t.prob,
                reward: t.reward,
            });
        }
        let mut keys: Vec<_> = rows.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let row = rows.remove(&key).unwrap_or_default();
            b.set_transitions(key.0, key.1, row)?;
        }
        b.set_initial(doc.initial.clone());
        b.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(json)?)
    }
}

impl Outcome {
    #[inline]
    pub(crate) fn next(&self) -> Option<StateId> {
        (self.next != EXIT).then_some(self.next as usize)
    }
    #[inline]
    pub(crate) fn prob(&self) -> f64 {
        self.prob
    }
    #[inline]
    pub(crate) fn reward(&self) -> f64 {
        self.reward
    }
}

/// JSON form of a [`TabularMdp`]; transitions are sparse triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub name: String,
    pub features: Vec<Feature>,
    pub actions: Vec<String>,
    pub states: Vec<Vec<u8>>,
    pub terminal: Vec<StateId>,
    pub transitions: Vec<TransitionRecord>,
    pub gamma: f64,
    pub initial: Vec<(StateId, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: StateId,
    pub action: ActionId,
    pub next: Option<StateId>,
    pub prob: f64,
    pub reward: f64,
}

/// Incremental constructor for [`TabularMdp`]; `build` validates everything.
pub struct MdpBuilder {
    name: String,
    features: Vec<Feature>,
    actions: Vec<String>,
    states: Vec<FeatureVector>,
    index: HashMap<FeatureVector, StateId>,
    terminal: Vec<bool>,
    rows: Vec<Vec<Vec<Outcome>>>,
    gamma: f64,
    initial: Vec<(StateId, f64)>,
}

impl MdpBuilder {
    pub fn new<S: Into<String>>(
        name: S,
        features: Vec<Feature>,
        actions: Vec<String>,
        gamma: f64,
    ) -> Result<Self> {
        if features.len() > MAX_FEATURES {
            return Err(Error::TooManyFeatures {
                n: features.len(),
                limit: MAX_FEATURES,
            });
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("discount {gamma} outside [0, 1]")));
        }
        if let Some(f) = features.iter().find(|f| f.values.is_empty() || f.values.len() > 256) {
            return Err(Error::InvalidMdp(format!(
                "feature {} needs between 1 and 256 values",
                f.name
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            actions,
            states: Vec::new(),
            index: HashMap::new(),
            terminal: Vec::new(),
            rows: Vec::new(),
            gamma,
            initial: Vec::new(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_id(&self, features: &FeatureVector) -> Option<StateId> {
        self.index.get(features).copied()
    }

    pub fn add_state(&mut self, features: FeatureVector, terminal: bool) -> Result<StateId> {
        if features.len() != self.features.len() {
            return Err(Error::InvalidMdp(format!(
                "state has {} features, expected {}",
                features.len(),
                self.features.len()
            )));
        }
        for (i, &v) in features.0.iter().enumerate() {
            if v as usize >= self.features[i].values.len() {
                return Err(Error::InvalidMdp(format!(
                    "value {v} outside the alphabet of feature {}",
                    self.features[i].name
                )));
            }
        }
        if self.index.contains_key(&features) {
            return Err(Error::InvalidMdp(format!("duplicate state {:?}", features.0)));
        }
        let id = self.states.len();
        self.index.insert(features.clone(), id);
        self.states.push(features);
        self.terminal.push(terminal);
        self.rows.push(vec![Vec::new(); self.actions.len()]);
        Ok(id)
    }

    /// Replace the outcome list of `(s, a)`. An empty list makes `a` illegal.
    pub fn set_transitions(
        &mut self,
        s: StateId,
        a: ActionId,
        outcomes: Vec<Transition>,
    ) -> Result<()> {
        if s >= self.states.len() || a >= self.actions.len() {
            return Err(Error::InvalidMdp(format!("no slot for state {s} action {a}")));
        }
        self.rows[s][a] = outcomes
            .into_iter()
            .map(|t| Outcome {
                next: t.next.map_or(EXIT, |n| n as u32),
                prob: t.prob,
                reward: t.reward,
            })
            .collect();
        Ok(())
    }

    pub fn set_initial(&mut self, initial: Vec<(StateId, f64)>) {
        self.initial = initial;
    }

    pub fn build(self) -> Result<TabularMdp> {
        let n = self.states.len();
        if n >= EXIT as usize {
            return Err(Error::InvalidMdp("too many states".into()));
        }
        let a_count = self.actions.len();
        let mut offsets = Vec::with_capacity(n * a_count + 1);
        let mut outcomes = Vec::new();
        offsets.push(0);
        for (s, row) in self.rows.into_iter().enumerate() {
            let mut any_legal = false;
            for (a, outs) in row.into_iter().enumerate() {
                if !outs.is_empty() {
                    if self.terminal[s] {
                        return Err(Error::InvalidMdp(format!(
                            "terminal state {s} has outgoing transitions"
                        )));
                    }
                    any_legal = true;
                    let total: f64 = outs.iter().map(|o| o.prob).sum();
                    if (total - 1.0).abs() > PROB_TOL || outs.iter().any(|o| o.prob < 0.0) {
                        return Err(Error::InvalidMdp(format!(
                            "transition row ({s}, {a}) sums to {total}"
                        )));
                    }
                    if let Some(o) = outs.iter().find(|o| o.next != EXIT && o.next as usize >= n) {
                        return Err(Error::InvalidMdp(format!(
                            "transition ({s}, {a}) targets unknown state {}",
                            o.next
                        )));
                    }
                }
                outcomes.extend(outs);
                offsets.push(outcomes.len());
            }
            if !self.terminal[s] && !any_legal {
                return Err(Error::InvalidMdp(format!(
                    "non-terminal state {s} has no legal action"
                )));
            }
        }
        let total: f64 = self.initial.iter().map(|(_, p)| p).sum();
        if self.initial.is_empty() || (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidMdp(format!(
                "initial distribution sums to {total}"
            )));
        }
        if let Some(&(s, _)) = self.initial.iter().find(|(s, p)| *s >= n || *p < 0.0) {
            return Err(Error::InvalidMdp(format!("bad initial entry for state {s}")));
        }
        Ok(TabularMdp {
            name: self.name,
            features: self.features,
            actions: self.actions,
            states: self.states,
            index: self.index,
            terminal: self.terminal,
            offsets,
            outcomes,
            gamma: self.gamma,
            initial: self.initial,
        })
    }
}

/// A tabular stochastic policy: one action distribution per state over the
/// MDP's global action list. Terminal states have all-zero rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    /// Build from rows; validates normalization and legality against `mdp`.
    pub fn from_rows(mdp: &TabularMdp, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = mdp.n_actions();
        if rows.len() != mdp.n_states() || rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::InvalidPolicy("row shape does not match the MDP".into()));
        }
        let policy = Self {
            n_actions,
            probs: rows.into_iter().flatten().collect(),
        };
        policy.validate(mdp)?;
        Ok(policy)
    }

    /// Point-mass policy from one chosen action per non-terminal state.
    pub fn deterministic(mdp: &TabularMdp, choice: &[Option<ActionId>]) -> Result<Self> {
        let n_actions = mdp.n_actions();
        let mut probs = vec![0.0; mdp.n_states() * n_actions];
        for s in 0..mdp.n_states() {
            match choice.get(s).copied().flatten() {
                Some(a) => probs[s * n_actions + a] = 1.0,
                None if mdp.is_terminal(s) => {}
                None => {
                    return Err(Error::InvalidPolicy(format!("no action for state {s}")));
                }
            }
        }
        let policy = Self { n_actions, probs };
        policy.validate(mdp)?;
        Ok(policy)
    }

    /// Uniform over legal actions in every non-terminal state.
    pub fn uniform(mdp: &TabularMdp) -> Self {
        let n_actions = mdp.n_actions();
        let mut probs = vec![0.0; mdp.n_states() * n_actions];
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let legal: Vec<_> = mdp.legal_actions(s).collect();
            for &a in &legal {
                probs[s * n_actions + a] = 1.0 / legal.len() as f64;
            }
        }
        Self { n_actions, probs }
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        for s in 0..mdp.n_states() {
            let row = self.row(s);
            if mdp.is_terminal(s) {
                continue;
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {total}")));
            }
            for (a, &p) in row.iter().enumerate() {
                if p < 0.0 || (p > 0.0 && !mdp.is_legal(s, a)) {
                    return Err(Error::InvalidPolicy(format!(
                        "state {s} puts mass {p} on action {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions.max(1)
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub(crate) fn row_mut(&mut self, s: StateId) -> &mut [f64] {
        &mut self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: StateId, a: ActionId) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// The most probable action, lowest index on ties.
    pub fn mode(&self, s: StateId) -> Option<ActionId> {
        let row = self.row(s);
        let mut best: Option<ActionId> = None;
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 && best.is_none_or(|b| p > row[b]) {
                best = Some(a);
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> Option<ActionId> {
        sample_index(self.row(s), rng)
    }

    /// A copy with row `s` replaced by `row`.
    pub fn patched(&self, s: StateId, row: &[f64]) -> Self {
        let mut p = self.clone();
        p.row_mut(s).copy_from_slice(row);
        p
    }

    pub fn to_json(&self, mdp: &TabularMdp) -> Result<String> {
        let map: std::collections::BTreeMap<StateId, std::collections::BTreeMap<String, f64>> = (0
            ..mdp.n_states())
            .filter(|&s| !mdp.is_terminal(s))
            .map(|s| {
                let row = self
                    .row(s)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| (mdp.actions()[a].clone(), p))
                    .collect();
                (s, row)
            })
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }
}

/// Sample an index from unnormalized non-negative weights.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TabularMdp {
        let features = vec![
            Feature::new("x", vec!["1".into(), "2".into()]),
            Feature::new("y", vec!["1".into(), "2".into()]),
        ];
        let mut b = MdpBuilder::new("tiny", features, vec!["go".into(), "stay".into()], 1.0).unwrap();
        let s0 = b.add_state(FeatureVector(vec![0, 0]), false).unwrap();
        let s1 = b.add_state(FeatureVector(vec![1, 1]), true).unwrap();
        b.set_transitions(
            s0,
            0,
            vec![Transition {
                next: Some(s1),
                prob: 1.0,
                reward: 3.0,
            }],
        )
        .unwrap();
        b.set_initial(vec![(s0, 1.0)]);
        b.build().unwrap()
    }

    #[test]
    fn observe_projects_onto_coalition() {
        let s = FeatureVector(vec![1, 2]);
        let full = Coalition::full(2).unwrap();
        assert_eq!(observe(&s, full).values, vec![1, 2]);
        assert!(observe(&s, Coalition::empty(2).unwrap()).values.is_empty());
        let y = Coalition::from_members([1], 2).unwrap();
        assert_eq!(observe(&s, y).values, vec![2]);
    }

    #[test]
    fn consistency_checks() {
        let s = FeatureVector(vec![0, 2]);
        let x = Coalition::from_members([0], 2).unwrap();
        let obs = PartialObservation {
            coalition: x,
            values: vec![0],
        };
        assert!(consistent(&s, &obs));
        let obs2 = PartialObservation {
            coalition: x,
            values: vec![1],
        };
        assert!(!consistent(&s, &obs2));
        let empty = observe(&s, Coalition::empty(2).unwrap());
        assert!(consistent(&FeatureVector(vec![5, 5]), &empty));
    }

    #[test]
    fn step_and_errors() {
        let mdp = tiny();
        let mut rng = rand::thread_rng();
        assert_eq!(mdp.step(0, 0, &mut rng).unwrap(), (Some(1), 3.0));
        assert!(matches!(
            mdp.step(0, 1, &mut rng),
            Err(Error::IllegalAction { state: 0, action: 1 })
        ));
        assert!(matches!(mdp.step(1, 0, &mut rng), Err(Error::TerminalState(1))));
    }

    #[test]
    fn builder_rejects_bad_rows() {
        let features = vec![Feature::new("x", vec!["a".into(), "b".into()])];
        let mut b = MdpBuilder::new("bad", features.clone(), vec!["go".into()], 1.0).unwrap();
        let s = b.add_state(FeatureVector(vec![0]), false).unwrap();
        assert!(b.add_state(FeatureVector(vec![0]), false).is_err());
        assert!(b.add_state(FeatureVector(vec![7]), false).is_err());
        b.set_transitions(
            s,
            0,
            vec![Transition {
                next: None,
                prob: 0.9,
                reward: 0.0,
            }],
        )
        .unwrap();
        b.set_initial(vec![(s, 1.0)]);
        assert!(matches!(b.build(), Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn json_round_trip() {
        let mdp = tiny();
        let json = mdp.to_json().unwrap();
        let back = TabularMdp::from_json(&json).unwrap();
        assert_eq!(back.to_document(), mdp.to_document());
    }

    #[test]
    fn policy_validation() {
        let mdp = tiny();
        assert!(StochasticPolicy::from_rows(&mdp, vec![vec![0.0, 1.0], vec![0.0, 0.0]]).is_err());
        assert!(StochasticPolicy::from_rows(&mdp, vec![vec![0.5, 0.0], vec![0.0, 0.0]]).is_err());
        let p = StochasticPolicy::from_rows(&mdp, vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(p.mode(0), Some(0));
        assert_eq!(p, StochasticPolicy::uniform(&mdp));
    }

    #[test]
    fn state_lookup_by_labels() {
        let mdp = tiny();
        assert_eq!(mdp.state_by_labels(&["2", "2"]).unwrap(), 1);
        assert!(mdp.state_by_labels(&["2", "1"]).is_err());
        assert_eq!(mdp.describe_state(0), "{x=1, y=1}");
    }
}
