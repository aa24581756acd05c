//! Command-line flags, the optional TOML file and their merge into an
//! [`ExperimentConfig`]. Flags win over the file; the output directory falls
//! back to `SVERL_OUT_DIR` and then the working directory.

use std::fmt;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sverl::environments::Domain;
use sverl::{GlobalWeighting, OccupancyMode};

use crate::error::{CliError, CliResult};

pub const OUT_DIR_ENV: &str = "SVERL_OUT_DIR";
pub const DEFAULT_BUDGETS: [u64; 4] = [100, 1_000, 10_000, 100_000];

#[derive(Debug, Parser)]
#[command(name = "sverl", version, about = "Shapley explanations of agents on tabular MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a domain and write state values, greedy actions and occupancy.
    Solve(Options),
    /// Attribute one characteristic at the selected states.
    Explain(Options),
    /// Put two methods side by side, each scaled to [-1, 1].
    Compare(Options),
    /// Policy attributions for every legal action.
    PolicyActions(Options),
    /// Error of the sampler against exact values over a budget ladder.
    Converge(Options),
    /// Write the domain's MDP as JSON.
    DumpMdp(Options),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Explain(_) => "explain",
            Command::Compare(_) => "compare",
            Command::PolicyActions(_) => "policy-actions",
            Command::Converge(_) => "converge",
            Command::DumpMdp(_) => "dump-mdp",
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Command::Solve(o)
            | Command::Explain(o)
            | Command::Compare(o)
            | Command::PolicyActions(o)
            | Command::Converge(o)
            | Command::DumpMdp(o) => o,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Value,
    QValue,
    Policy,
    SverlLocal,
    SverlGlobal,
    GlobalAggregate,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Value => "value",
            Method::QValue => "q-value",
            Method::Policy => "policy",
            Method::SverlLocal => "sverl-local",
            Method::SverlGlobal => "sverl-global",
            Method::GlobalAggregate => "global-aggregate",
        }
    }

    pub fn needs_action(self) -> bool {
        matches!(self, Method::QValue | Method::Policy)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Occupancy {
    #[default]
    Strict,
    Fallback,
}

impl From<Occupancy> for OccupancyMode {
    fn from(o: Occupancy) -> Self {
        match o {
            Occupancy::Strict => OccupancyMode::Strict,
            Occupancy::Fallback => OccupancyMode::Fallback,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eval {
    #[default]
    Linear,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Occupancy,
    Initial,
}

impl From<Weighting> for GlobalWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Occupancy => GlobalWeighting::Occupancy,
            Weighting::Initial => GlobalWeighting::Initial,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args)]
pub struct Options {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub domain: Option<String>,
    /// Layout seed for gridworld-d and seed for every sampler.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Second method for `compare`.
    #[arg(long, value_enum)]
    pub against: Option<Method>,
    /// `all`, a state id, comma-separated feature values, or a board such as `OO./.X./...`.
    #[arg(long)]
    pub state: Option<String>,
    /// Action name or index.
    #[arg(long)]
    pub action: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Permutations per feature in sampled mode.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, value_enum)]
    pub occupancy: Option<Occupancy>,
    #[arg(long, value_enum)]
    pub eval: Option<Eval>,
    /// Rollouts per coalition with `--eval mc`.
    #[arg(long)]
    pub episodes: Option<u64>,
    /// How `global-aggregate` weights states.
    #[arg(long, value_enum)]
    pub weighting: Option<Weighting>,
    /// Budget ladder for `converge`.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<u64>>,
    /// Number of seeds per budget for `converge`, starting at `--seed`.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    /// Permit full-size Minesweeper runs over many states or global methods.
    #[arg(long, action = ArgAction::SetTrue)]
    pub allow_long: bool,
}

/// Keys accepted in a config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub domain: Option<String>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub against: Option<Method>,
    pub state: Option<String>,
    pub action: Option<String>,
    pub mode: Option<Mode>,
    pub budget: Option<u64>,
    pub occupancy: Option<Occupancy>,
    pub eval: Option<Eval>,
    pub episodes: Option<u64>,
    pub weighting: Option<Weighting>,
    pub budgets: Option<Vec<u64>>,
    pub seeds: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Vec<Format>>,
    pub allow_long: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateSelector {
    All,
    Id(usize),
    Spec(String),
}

impl StateSelector {
    fn parse(s: &str) -> Self {
        let t = s.trim();
        if t.eq_ignore_ascii_case("all") {
            StateSelector::All
        } else if let Ok(id) = t.parse() {
            StateSelector::Id(id)
        } else {
            StateSelector::Spec(t.to_string())
        }
    }

    pub fn tag(&self) -> String {
        match self {
            StateSelector::All => "all".into(),
            StateSelector::Id(id) => format!("s{id}"),
            StateSelector::Spec(s) => {
                let mut tag: String = s
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                    .collect();
                tag.truncate(40);
                tag
            }
        }
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub seed: u64,
    pub method: Option<Method>,
    pub against: Option<Method>,
    pub state: StateSelector,
    pub state_given: bool,
    pub action: Option<String>,
    pub mode: Mode,
    pub budget: u64,
    pub occupancy: Occupancy,
    pub eval: Eval,
    pub episodes: u64,
    pub weighting: Weighting,
    pub budgets: Vec<u64>,
    pub seeds: u64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub allow_long: bool,
}

impl ExperimentConfig {
    /// Merge flags over the file named by `--config`, if any.
    pub fn resolve(opts: &Options) -> CliResult<Self> {
        let file = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        Self::merge(opts, file, std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
    }

    pub fn merge(opts: &Options, file: FileConfig, env_out: Option<PathBuf>) -> CliResult<Self> {
        let domain_name = opts
            .domain
            .clone()
            .or(file.domain)
            .ok_or_else(|| CliError::Config("--domain is required".into()))?;
        let domain: Domain = domain_name.parse().map_err(CliError::config)?;
        let state_text = opts.state.clone().or(file.state);
        let mut formats = opts.format.clone().or(file.format).unwrap_or_else(|| vec![Format::Csv, Format::Json]);
        formats.sort();
        formats.dedup();
        let budget = opts.budget.or(file.budget).unwrap_or(1_000);
        let episodes = opts.episodes.or(file.episodes).unwrap_or(1_000);
        let seeds = opts.seeds.or(file.seeds).unwrap_or(5);
        let budgets = opts.budgets.clone().or(file.budgets).unwrap_or_else(|| DEFAULT_BUDGETS.to_vec());
        if budget == 0 || episodes == 0 || seeds == 0 || budgets.is_empty() || budgets.contains(&0) {
            return Err(CliError::Config("budgets, episodes and seed counts must be positive".into()));
        }
        Ok(Self {
            domain,
            seed: opts.seed.or(file.seed).unwrap_or(0),
            method: opts.method.or(file.method),
            against: opts.against.or(file.against),
            state: state_text.as_deref().map(StateSelector::parse).unwrap_or(StateSelector::All),
            state_given: state_text.is_some(),
            action: opts.action.clone().or(file.action),
            mode: opts.mode.or(file.mode).unwrap_or_default(),
            budget,
            occupancy: opts.occupancy.or(file.occupancy).unwrap_or_default(),
            eval: opts.eval.or(file.eval).unwrap_or_default(),
            episodes,
            weighting: opts.weighting.or(file.weighting).unwrap_or_default(),
            budgets,
            seeds,
            out: opts.out.clone().or(file.out).or(env_out).unwrap_or_else(|| PathBuf::from(".")),
            formats,
            allow_long: opts.allow_long || file.allow_long.unwrap_or(false),
        })
    }
}
