//! Builds and solves a domain, then runs one subcommand against it.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use sverl::characteristics::GlobalSverl;
use sverl::environments::minesweeper::{Minesweeper, MinesweeperConfig};
use sverl::environments::tictactoe::{self, Board};
use sverl::environments::{Built, Domain};
use sverl::shapley::sampled_attribution;
use sverl::solvers::value_iteration;
use sverl::{
    exact_shapley, ActionId, Attribution, CoalitionTable, Explainer, FeatureVector,
    OccupancyMode, OccupancyModel, StateId, StochasticPolicy, ValueTable,
};

use crate::config::{Eval, ExperimentConfig, Format, Method, Mode, StateSelector};
use crate::error::{CliError, CliResult};
use crate::report::{normalize, spearman, write_csv, Evaluation, Record, Report};
use crate::svg;

/// A file to write once everything has been computed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Files plus a short summary for the terminal.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

pub struct Session {
    pub config: ExperimentConfig,
    pub built: Built,
    pub values: ValueTable,
    pub policy: StochasticPolicy,
    pub occupancy: OccupancyModel,
    global: Option<GlobalSverl>,
}

impl Session {
    pub fn new(config: ExperimentConfig) -> CliResult<Self> {
        let built = config.domain.build(config.seed).map_err(CliError::solver)?;
        let (values, policy) = value_iteration(&built.mdp, 1e-12).map_err(CliError::solver)?;
        let mode: OccupancyMode = config.occupancy.into();
        let occupancy = OccupancyModel::exact(&built.mdp, &policy, mode).map_err(CliError::solver)?;
        Ok(Self {
            config,
            built,
            values,
            policy,
            occupancy,
            global: None,
        })
    }

    pub fn explainer(&self) -> Explainer<'_> {
        Explainer::new(&self.built.mdp, &self.policy, &self.occupancy)
    }

    fn stem(&self, command: &str, method: Option<Method>) -> String {
        let mut stem = format!("{command}-{}", self.config.domain.name());
        if let Some(seed) = self.built.seed_used {
            stem.push_str(&format!("-seed{seed}"));
        }
        if let Some(m) = method {
            stem.push('-');
            stem.push_str(m.name());
            if m == Method::GlobalAggregate {
                return stem;
            }
        }
        if let Some(a) = &self.config.action {
            stem.push_str(&format!("-{a}"));
        }
        stem.push('-');
        stem.push_str(&self.config.state.tag());
        stem
    }

    /// States named by the selector. `all` means every state the policy
    /// visits.
    pub fn states(&self) -> CliResult<Vec<StateId>> {
        let mdp = &self.built.mdp;
        let s = match &self.config.state {
            StateSelector::All => return Ok(self.occupancy.support().collect()),
            StateSelector::Id(id) => *id,
            StateSelector::Spec(text) => self.parse_state(text)?,
        };
        if s >= mdp.n_states() {
            return Err(CliError::Config(format!("no state {s}; the domain has {}", mdp.n_states())));
        }
        if mdp.is_terminal(s) {
            return Err(CliError::Config(format!("state {s} is terminal")));
        }
        Ok(vec![s])
    }

    fn parse_state(&self, text: &str) -> CliResult<StateId> {
        let mdp = &self.built.mdp;
        if text.contains(',') {
            let labels: Vec<&str> = text.split(',').map(str::trim).collect();
            return mdp.state_by_labels(&labels).map_err(CliError::config);
        }
        let missing = || CliError::Config(format!("board {text:?} is not a reachable state"));
        match self.config.domain {
            Domain::TicTacToe => {
                let board: Board = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
                tictactoe::state_of(mdp, &board).ok_or_else(missing)
            }
            Domain::Minesweeper | Domain::MinesweeperSmall => {
                let config = if self.config.domain == Domain::Minesweeper {
                    MinesweeperConfig::STANDARD
                } else {
                    MinesweeperConfig::SMALL
                };
                let ms = Minesweeper::new(config).map_err(CliError::solver)?;
                let board = ms.parse(text).map_err(CliError::config)?;
                mdp.state_id(&FeatureVector(board)).ok_or_else(missing)
            }
            _ => Err(CliError::Config(format!(
                "cannot read state {text:?}; use `all`, an id, or comma-separated feature values"
            ))),
        }
    }

    pub fn action(&self, text: &str) -> CliResult<ActionId> {
        let actions = self.built.mdp.actions();
        if let Some(a) = actions.iter().position(|a| a.eq_ignore_ascii_case(text)) {
            return Ok(a);
        }
        match text.parse::<usize>() {
            Ok(a) if a < actions.len() => Ok(a),
            _ => Err(CliError::Config(format!("unknown action {text:?}; expected one of {actions:?}"))),
        }
    }

    fn check_method(&self, method: Method) -> CliResult<()> {
        let c = &self.config;
        if c.eval == Eval::Mc && method != Method::SverlLocal {
            return Err(CliError::Config(format!("--eval mc applies to sverl-local only, not {method}")));
        }
        if method == Method::GlobalAggregate {
            if c.mode == Mode::Sampled {
                return Err(CliError::Config("global-aggregate is exact only".into()));
            }
            if c.state_given && c.state != StateSelector::All {
                return Err(CliError::Config("global-aggregate covers every state; drop --state".into()));
            }
        }
        let long = matches!(method, Method::SverlGlobal | Method::GlobalAggregate) || c.state == StateSelector::All;
        if c.domain == Domain::Minesweeper && long && !c.allow_long {
            return Err(CliError::Config(format!(
                "{method} over {} on the full Minesweeper board is a long run; pass --allow-long",
                if c.state == StateSelector::All { "every state" } else { "the global policy" }
            )));
        }
        Ok(())
    }

    fn global(&mut self) -> CliResult<&GlobalSverl> {
        if self.global.is_none() {
            let g = self.explainer().global_sverl().map_err(CliError::solver)?;
            self.global = Some(g);
        }
        Ok(self.global.as_ref().expect("just computed"))
    }

    fn attribution_of(&self, table: &CoalitionTable, seed: u64) -> CliResult<Attribution> {
        match self.config.mode {
            Mode::Exact => exact_shapley(table),
            Mode::Sampled => sampled_attribution(table, self.config.budget, seed),
        }
        .map_err(CliError::solver)
    }

    /// Attribution of one characteristic at `s`, with fallback and
    /// truncation counts.
    pub fn attribute(
        &mut self,
        method: Method,
        s: StateId,
        action: Option<ActionId>,
        seed: u64,
    ) -> CliResult<(Attribution, usize, u64)> {
        let need = || CliError::Config(format!("{method} needs --action"));
        let table = match method {
            Method::Value => self.explainer().value(&self.values, s),
            Method::QValue => self.explainer().q_value(&self.values, s, action.ok_or_else(need)?),
            Method::Policy => self.explainer().policy_prob(s, action.ok_or_else(need)?),
            Method::SverlLocal => match (self.config.mode, self.config.eval) {
                (Mode::Sampled, Eval::Mc) => {
                    let r = self
                        .explainer()
                        .sampled_local_sverl(s, self.config.budget, seed)
                        .map_err(CliError::solver)?;
                    return Ok((r.attribution, 0, r.truncated_episodes));
                }
                (_, Eval::Mc) => self.explainer().local_sverl_monte_carlo(s, self.config.episodes, seed),
                (_, Eval::Linear) => self.explainer().local_sverl(s),
            },
            Method::SverlGlobal => Ok(self.global()?.characteristic(s)),
            Method::GlobalAggregate => return Err(CliError::Config("global-aggregate has no per-state form".into())),
        }
        .map_err(CliError::solver)?;
        let a = self.attribution_of(&table, seed)?;
        Ok((a, table.fallback_count(), table.truncated_count() as u64))
    }

    fn record(&self, method: Method, s: Option<StateId>, action: Option<ActionId>, r: (Attribution, usize, u64)) -> Record {
        let mdp = &self.built.mdp;
        let evaluation = match self.config.eval {
            Eval::Mc if method == Method::SverlLocal => Evaluation::MonteCarlo {
                episodes: if self.config.mode == Mode::Sampled { 1 } else { self.config.episodes },
                seed: self.config.seed,
            },
            _ => Evaluation::Linear,
        };
        Record {
            domain: self.config.domain.name().into(),
            domain_seed: self.built.seed_used,
            method: method.name().into(),
            action: action.map(|a| mdp.actions()[a].clone()),
            state: s,
            state_features: s.map(|s| {
                let f = mdp.state(s);
                mdp.features().iter().enumerate().map(|(i, feat)| feat.values[f.get(i) as usize].clone()).collect()
            }),
            features: mdp.features().iter().map(|f| f.name.clone()).collect(),
            occupancy: match self.config.occupancy {
                crate::config::Occupancy::Strict => "strict".into(),
                crate::config::Occupancy::Fallback => "fallback".into(),
            },
            weighting: (method == Method::GlobalAggregate).then(|| {
                match self.config.weighting {
                    crate::config::Weighting::Occupancy => "occupancy",
                    crate::config::Weighting::Initial => "initial",
                }
                .into()
            }),
            evaluation,
            attribution: r.0,
            fallback_coalitions: r.1,
            truncated: r.2,
        }
    }

    /// Records for `method` at every selected state (one record for the
    /// aggregate).
    pub fn records(&mut self, method: Method) -> CliResult<Vec<Record>> {
        self.check_method(method)?;
        let action = match (&self.config.action, method.needs_action()) {
            (Some(a), true) => Some(self.action(a)?),
            (None, true) => return Err(CliError::Config(format!("{method} needs --action"))),
            (Some(_), false) => return Err(CliError::Config(format!("{method} takes no --action"))),
            (None, false) => None,
        };
        if method == Method::GlobalAggregate {
            let weighting = self.config.weighting.into();
            let g = self.global()?.clone();
            let a = self.explainer().global_attribution(&g, weighting).map_err(CliError::solver)?;
            let truncated = g.truncated_count() as u64;
            return Ok(vec![self.record(method, None, None, (a, 0, truncated))]);
        }
        let states = self.states()?;
        let mut progress = Progress::new(states.len());
        let mut out = Vec::with_capacity(states.len());
        for s in states {
            if let Some(a) = action {
                if !self.built.mdp.is_legal(s, a) {
                    return Err(CliError::Config(format!("action {} is not legal in state {s}", self.built.mdp.actions()[a])));
                }
            }
            let r = self.attribute(method, s, action, self.config.seed)?;
            out.push(self.record(method, Some(s), action, r));
            progress.tick();
        }
        Ok(out)
    }

    fn emit(&self, stem: &str, report: &Report) -> CliResult<Vec<Artifact>> {
        let mut out = Vec::new();
        for f in &self.config.formats {
            let contents = match f {
                Format::Csv => report.to_csv(&self.built.mdp)?,
                Format::Json => report.to_json()?,
                Format::Svg => svg::heatmap(self.config.domain, &self.built.mdp, &report.records),
            };
            out.push(Artifact {
                name: format!("{stem}.{}", f.extension()),
                contents,
            });
        }
        Ok(out)
    }

    fn tabular_only(&self, command: &str) -> CliResult<()> {
        if self.config.formats.contains(&Format::Svg) {
            return Err(CliError::Config(format!("{command} writes csv and json only")));
        }
        Ok(())
    }

    pub fn explain(&mut self) -> CliResult<Outcome> {
        let method = self.config.method.ok_or_else(|| CliError::Config("explain needs --method".into()))?;
        let records = self.records(method)?;
        let mut summary = String::new();
        for r in &records {
            let at = r.state.map_or("aggregate".to_string(), |s| format!("state {s}"));
            summary.push_str(&format!("{at}: phi = {:.4?}\n", r.attribution.phi));
        }
        let report = Report { records };
        Ok(Outcome {
            artifacts: self.emit(&self.stem("explain", Some(method)), &report)?,
            summary,
        })
    }

    pub fn policy_actions(&mut self) -> CliResult<Outcome> {
        if self.config.method.is_some_and(|m| m != Method::Policy) {
            return Err(CliError::Config("policy-actions explains the policy; drop --method".into()));
        }
        if self.config.action.is_some() {
            return Err(CliError::Config("policy-actions covers every legal action; drop --action".into()));
        }
        self.check_method(Method::Policy)?;
        let states = self.states()?;
        let mut records = Vec::new();
        let mut summary = String::new();
        for s in states {
            let tables = self.explainer().policy_probs(s).map_err(CliError::solver)?;
            for (a, t) in tables {
                let attr = self.attribution_of(&t, self.config.seed)?;
                summary.push_str(&format!(
                    "state {s} {}: phi = {:.4?}\n",
                    self.built.mdp.actions()[a],
                    attr.phi
                ));
                records.push(self.record(Method::Policy, Some(s), Some(a), (attr, t.fallback_count(), t.truncated_count() as u64)));
            }
        }
        let report = Report { records };
        Ok(Outcome {
            artifacts: self.emit(&self.stem("policy-actions", None), &report)?,
            summary,
        })
    }

    pub fn compare(&mut self) -> CliResult<Outcome> {
        self.tabular_only("compare")?;
        let (a, b) = match (self.config.method, self.config.against) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(CliError::Config("compare needs --method and --against".into())),
        };
        if a == Method::GlobalAggregate || b == Method::GlobalAggregate {
            return Err(CliError::Config("compare works per state; global-aggregate has a single row".into()));
        }
        let ra = self.records(a)?;
        let rb = self.records(b)?;
        let flat = |rs: &[Record]| rs.iter().flat_map(|r| r.attribution.phi.clone()).collect::<Vec<f64>>();
        let (na, nb) = (normalize(&flat(&ra)), normalize(&flat(&rb)));
        let rho = spearman(&na, &nb);

        let mdp = &self.built.mdp;
        let mut header = vec!["state".to_string()];
        header.extend(mdp.features().iter().map(|f| f.name.clone()));
        header.extend(["feature".to_string(), a.name().to_string(), b.name().to_string()]);
        let mut rows = vec![header];
        let mut json_rows = Vec::new();
        let mut k = 0;
        for r in &ra {
            let s = r.state.expect("per-state record");
            for (i, f) in r.features.iter().enumerate() {
                let mut row = vec![s.to_string()];
                row.extend(r.state_features.clone().unwrap_or_default());
                row.extend([f.clone(), na[k].to_string(), nb[k].to_string()]);
                rows.push(row);
                json_rows.push(CompareRow {
                    state: s,
                    feature: f.clone(),
                    a: na[k],
                    b: nb[k],
                    raw_a: ra[k / r.features.len()].attribution.phi[i],
                    raw_b: rb[k / r.features.len()].attribution.phi[i],
                });
                k += 1;
            }
        }
        let stem = self.stem("compare", Some(a)) + "-vs-" + b.name();
        let mut artifacts = Vec::new();
        for f in &self.config.formats {
            let contents = match f {
                Format::Csv => write_csv(&rows)?,
                _ => {
                    let doc = CompareReport {
                        domain: self.config.domain.name().into(),
                        domain_seed: self.built.seed_used,
                        method: a.name().into(),
                        against: b.name().into(),
                        spearman: rho,
                        rows: json_rows.clone(),
                    };
                    serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))? + "\n"
                }
            };
            artifacts.push(Artifact {
                name: format!("{stem}.{}", f.extension()),
                contents,
            });
        }
        let summary = match rho {
            Some(r) => format!("{} points, rank correlation {r:.4}\n", na.len()),
            None => format!("{} points, rank correlation undefined (a constant column)\n", na.len()),
        };
        Ok(Outcome { artifacts, summary })
    }

    pub fn converge(&mut self) -> CliResult<Outcome> {
        self.tabular_only("converge")?;
        let method = self.config.method.unwrap_or(Method::SverlLocal);
        if method == Method::GlobalAggregate {
            return Err(CliError::Config("converge works per state".into()));
        }
        if self.config.state == StateSelector::All {
            return Err(CliError::Config("converge needs a single --state".into()));
        }
        self.check_method(method)?;
        let action = match (&self.config.action, method.needs_action()) {
            (Some(a), true) => Some(self.action(a)?),
            (None, true) => return Err(CliError::Config(format!("{method} needs --action"))),
            _ => None,
        };
        let s = self.states()?[0];
        let exact_mode = Mode::Exact;
        let sampled_mode = Mode::Sampled;
        let saved = (self.config.mode, self.config.eval, self.config.budget);
        self.config.mode = exact_mode;
        self.config.eval = Eval::Linear;
        let exact = self.attribute(method, s, action, 0)?.0;
        self.config.mode = sampled_mode;
        // local SVERL is sampled from rollout pairs; the rest from the exact table
        if method == Method::SverlLocal {
            self.config.eval = Eval::Mc;
        }
        let n = exact.phi.len();
        let mut rows = vec![vec!["budget", "feature", "abs_error", "se"].into_iter().map(String::from).collect()];
        let mut ladder = Vec::new();
        for &budget in &self.config.budgets.clone() {
            self.config.budget = budget;
            let mut err = vec![0.0; n];
            let mut se = vec![0.0; n];
            for k in 0..self.config.seeds {
                let a = self.attribute(method, s, action, self.config.seed + k)?.0;
                let a_se = a.standard_error.clone().unwrap_or_else(|| vec![0.0; n]);
                for i in 0..n {
                    err[i] += (a.phi[i] - exact.phi[i]).abs() / self.config.seeds as f64;
                    se[i] += a_se[i] / self.config.seeds as f64;
                }
            }
            for i in 0..n {
                rows.push(vec![
                    budget.to_string(),
                    self.built.mdp.features()[i].name.clone(),
                    err[i].to_string(),
                    se[i].to_string(),
                ]);
            }
            ladder.push(LadderRow { budget, abs_error: err, se });
        }
        (self.config.mode, self.config.eval, self.config.budget) = saved;
        let summary = ladder
            .iter()
            .map(|l| format!("budget {:>7}: |err| = {:.4?}\n", l.budget, l.abs_error))
            .collect();
        let stem = self.stem("converge", Some(method));
        let mut artifacts = Vec::new();
        for f in &self.config.formats {
            let contents = match f {
                Format::Csv => write_csv(&rows)?,
                _ => {
                    let doc = ConvergeReport {
                        domain: self.config.domain.name().into(),
                        domain_seed: self.built.seed_used,
                        method: method.name().into(),
                        state: s,
                        first_seed: self.config.seed,
                        seeds: self.config.seeds,
                        exact: exact.phi.clone(),
                        ladder: ladder.clone(),
                    };
                    serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))? + "\n"
                }
            };
            artifacts.push(Artifact {
                name: format!("{stem}.{}", f.extension()),
                contents,
            });
        }
        Ok(Outcome { artifacts, summary })
    }

    pub fn solve(&self) -> CliResult<Outcome> {
        self.tabular_only("solve")?;
        let mdp = &self.built.mdp;
        let mut header = vec!["state".to_string()];
        header.extend(mdp.features().iter().map(|f| f.name.clone()));
        header.extend(["terminal", "value", "action", "occupancy"].map(String::from));
        let mut rows = vec![header];
        let mut json = Vec::new();
        for s in 0..mdp.n_states() {
            let f = mdp.state(s);
            let labels: Vec<String> = mdp
                .features()
                .iter()
                .enumerate()
                .map(|(i, feat)| feat.values[f.get(i) as usize].clone())
                .collect();
            let action = if mdp.is_terminal(s) { None } else { self.policy.mode(s).map(|a| mdp.actions()[a].clone()) };
            let mut row = vec![s.to_string()];
            row.extend(labels.iter().cloned());
            row.extend([
                mdp.is_terminal(s).to_string(),
                self.values.v[s].to_string(),
                action.clone().unwrap_or_default(),
                self.occupancy.prob(s).to_string(),
            ]);
            rows.push(row);
            json.push(SolvedState {
                state: s,
                features: labels,
                terminal: mdp.is_terminal(s),
                value: self.values.v[s],
                action,
                occupancy: self.occupancy.prob(s),
            });
        }
        let stem = self.stem("solve", None).trim_end_matches(&format!("-{}", self.config.state.tag())).to_string();
        let mut artifacts = Vec::new();
        for f in &self.config.formats {
            let contents = match f {
                Format::Csv => write_csv(&rows)?,
                _ => serde_json::to_string_pretty(&json).map_err(|e| CliError::Io(e.to_string()))? + "\n",
            };
            artifacts.push(Artifact {
                name: format!("{stem}.{}", f.extension()),
                contents,
            });
        }
        let start: f64 = mdp.initial_distribution().iter().map(|&(s, p)| p * self.values.v[s]).sum();
        let summary = format!(
            "{} states, {} visited, expected return from the start {start:.4}\n",
            mdp.n_states(),
            self.occupancy.support().count()
        );
        Ok(Outcome { artifacts, summary })
    }
}

/// Writes the domain without solving it.
pub fn dump_mdp(config: &ExperimentConfig) -> CliResult<Outcome> {
    let built = config.domain.build(config.seed).map_err(CliError::solver)?;
    let mut name = config.domain.name().to_string();
    if let Some(seed) = built.seed_used {
        name.push_str(&format!("-seed{seed}"));
    }
    let json = built.mdp.to_json().map_err(CliError::solver)? + "\n";
    Ok(Outcome {
        artifacts: vec![Artifact {
            name: format!("{name}.mdp.json"),
            contents: json,
        }],
        summary: format!("{} states, {} actions\n", built.mdp.n_states(), built.mdp.n_actions()),
    })
}

#[derive(Clone, Debug, Serialize)]
struct CompareRow {
    state: StateId,
    feature: String,
    a: f64,
    b: f64,
    raw_a: f64,
    raw_b: f64,
}

#[derive(Serialize)]
struct CompareReport {
    domain: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain_seed: Option<u64>,
    method: String,
    against: String,
    spearman: Option<f64>,
    rows: Vec<CompareRow>,
}

#[derive(Clone, Debug, Serialize)]
struct LadderRow {
    budget: u64,
    abs_error: Vec<f64>,
    se: Vec<f64>,
}

#[derive(Serialize)]
struct ConvergeReport {
    domain: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain_seed: Option<u64>,
    method: String,
    state: StateId,
    first_seed: u64,
    seeds: u64,
    exact: Vec<f64>,
    ladder: Vec<LadderRow>,
}

#[derive(Serialize)]
struct SolvedState {
    state: StateId,
    features: Vec<String>,
    terminal: bool,
    value: f64,
    action: Option<String>,
    occupancy: f64,
}

/// Progress and ETA on stderr for runs over many states.
struct Progress {
    total: usize,
    done: usize,
    start: Instant,
    next_report: usize,
}

impl Progress {
    fn new(total: usize) -> Self {
        Self {
            total,
            done: 0,
            start: Instant::now(),
            next_report: (total / 10).max(1),
        }
    }

    fn tick(&mut self) {
        self.done += 1;
        if self.total < 50 || self.done < self.next_report {
            return;
        }
        self.next_report += (self.total / 10).max(1);
        let elapsed = self.start.elapsed().as_secs_f64();
        if elapsed < 2.0 {
            return;
        }
        let eta = elapsed / self.done as f64 * (self.total - self.done) as f64;
        eprintln!("[{}/{}] {elapsed:.1}s elapsed, about {eta:.0}s left", self.done, self.total);
    }
}

/// Write every artifact into `dir`, each through a temporary file.
pub fn write_artifacts(dir: &PathBuf, artifacts: &[Artifact]) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        std::fs::write(&tmp, &a.contents).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
