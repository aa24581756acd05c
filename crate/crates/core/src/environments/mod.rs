//! The benchmark domains.

pub mod gridworld;
pub mod minesweeper;
pub mod taxi;
pub mod tictactoe;

use std::fmt;
use std::str::FromStr;

use crate::mdp::{StateId, TabularMdp};
use crate::{Error, Result};

pub use gridworld::{gridworld_a, gridworld_b, gridworld_c, gridworld_d, GridworldSpec, RandomGridworld};
pub use minesweeper::{minesweeper, Minesweeper, MinesweeperConfig};
pub use taxi::taxi;
pub use tictactoe::tictactoe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    GridworldA,
    GridworldB,
    GridworldC,
    GridworldD,
    TicTacToe,
    Taxi,
    Minesweeper,
    /// 3×3 board with a single mine.
    MinesweeperSmall,
}

impl Domain {
    pub const ALL: [Domain; 8] = [
        Domain::GridworldA,
        Domain::GridworldB,
        Domain::GridworldC,
        Domain::GridworldD,
        Domain::TicTacToe,
        Domain::Taxi,
        Domain::Minesweeper,
        Domain::MinesweeperSmall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::GridworldA => "gridworld-a",
            Domain::GridworldB => "gridworld-b",
            Domain::GridworldC => "gridworld-c",
            Domain::GridworldD => "gridworld-d",
            Domain::TicTacToe => "tictactoe",
            Domain::Taxi => "taxi",
            Domain::Minesweeper => "minesweeper",
            Domain::MinesweeperSmall => "minesweeper-small",
        }
    }

    /// Board-shaped feature layout `(width, height)`, when features are the
    /// squares of a board in row-major order.
    pub fn board_shape(self) -> Option<(usize, usize)> {
        match self {
            Domain::TicTacToe => Some((3, 3)),
            Domain::Minesweeper => Some((4, 4)),
            Domain::MinesweeperSmall => Some((3, 3)),
            _ => None,
        }
    }

    /// Build the MDP. `seed` only matters for Gridworld-D.
    pub fn build(self, seed: u64) -> Result<Built> {
        let (mdp, seed_used) = match self {
            Domain::GridworldA => (gridworld_a(), None),
            Domain::GridworldB => (gridworld_b(), None),
            Domain::GridworldC => (gridworld_c(), None),
            Domain::GridworldD => {
                let g = gridworld_d(seed);
                (g.mdp, Some(g.seed))
            }
            Domain::TicTacToe => (tictactoe(), None),
            Domain::Taxi => (taxi(), None),
            Domain::Minesweeper => (minesweeper::minesweeper_with(MinesweeperConfig::STANDARD)?, None),
            Domain::MinesweeperSmall => (minesweeper::minesweeper_with(MinesweeperConfig::SMALL)?, None),
        };
        Ok(Built {
            domain: self,
            mdp,
            seed_used,
            gridworld_d_seed: seed,
        })
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', ' '], "-");
        let key = match key.as_str() {
            "tic-tac-toe" => "tictactoe",
            other => other,
        };
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown domain {s:?}")))
    }
}

/// A built domain plus what is needed to render its states.
#[derive(Clone, Debug)]
pub struct Built {
    pub domain: Domain,
    pub mdp: TabularMdp,
    /// The seed that produced a Gridworld-D layout.
    pub seed_used: Option<u64>,
    gridworld_d_seed: u64,
}

impl Built {
    /// ASCII picture of a state.
    pub fn render(&self, s: StateId) -> String {
        let mdp = &self.mdp;
        match self.domain {
            Domain::GridworldA | Domain::GridworldB | Domain::GridworldC | Domain::GridworldD => {
                let spec = match self.domain {
                    Domain::GridworldA => gridworld::gridworld_a_spec(),
                    Domain::GridworldB => gridworld::gridworld_b_spec(),
                    Domain::GridworldC => gridworld::gridworld_c_spec(),
                    _ => gridworld_d(self.gridworld_d_seed).spec,
                };
                let here = gridworld::cell_of(mdp, s);
                spec.render(|c| if c == here { "A".into() } else { ".".into() })
            }
            Domain::TicTacToe => tictactoe::board_of(mdp, s).render(),
            Domain::Taxi => taxi::render(mdp, s),
            Domain::Minesweeper | Domain::MinesweeperSmall => {
                let config = if self.domain == Domain::Minesweeper {
                    MinesweeperConfig::STANDARD
                } else {
                    MinesweeperConfig::SMALL
                };
                Minesweeper::new(config).expect("fixed configuration").render(&mdp.state(s).0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for d in Domain::ALL {
            assert_eq!(d.name().parse::<Domain>().unwrap(), d);
        }
        assert_eq!("Tic-Tac-Toe".parse::<Domain>().unwrap(), Domain::TicTacToe);
        assert!("chess".parse::<Domain>().is_err());
    }

    #[test]
    fn every_small_domain_builds() {
        for d in Domain::ALL {
            if d == Domain::Minesweeper {
                continue;
            }
            let built = d.build(0).unwrap();
            let s = built.mdp.initial_distribution()[0].0;
            assert!(!built.render(s).is_empty());
        }
    }
}
