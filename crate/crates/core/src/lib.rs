//! Shapley-value explanations of agents acting in tabular Markov decision
//! processes.
//!
//! The crate is split along the lines of the computation:
//!
//! - [`shapley`]: cooperative-game machinery (coalitions, exact enumeration,
//!   permutation sampling, occupancy-weighted aggregation).
//! - [`mdp`]: factored finite MDPs whose states are feature vectors, and
//!   stochastic tabular policies.
//! - [`environments`]: the gridworlds, Tic-Tac-Toe, Taxi and Minesweeper.
//! - [`solvers`]: value iteration, exact policy evaluation, Monte Carlo
//!   returns and Minimax.
//! - [`occupancy`]: state occupancy of a policy and its Bayes conditionals
//!   given a partial observation.
//! - [`characteristics`]: the characteristic functions that turn value
//!   functions, policies and agent performance into cooperative games.

pub mod characteristics;
pub mod environments;
mod error;
mod linalg;
pub mod mdp;
pub mod occupancy;
pub mod shapley;
pub mod solvers;

pub use error::{Error, Result};

pub use characteristics::{CoalitionTable, Explainer, GlobalWeighting, MaskedPolicy};
pub use mdp::{
    consistent, observe, ActionId, Feature, FeatureVector, MdpBuilder, PartialObservation, StateId,
    StochasticPolicy, TabularMdp,
};
pub use occupancy::{OccupancyMode, OccupancyModel};
pub use shapley::{
    exact_shapley, marginal_gain, sampled_shapley, weighted_global, Attribution,
    CharacteristicFn, Coalition, Estimate,
};
pub use solvers::ValueTable;
