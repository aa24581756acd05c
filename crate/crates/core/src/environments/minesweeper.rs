//! Minesweeper as a belief MDP over observable boards.
//!
//! Squares are features named `(x,y)`, 1-based, `x` growing east and `y`
//! growing south (row 1 is the top row); feature index is
//! `(y - 1) * width + (x - 1)`. A square shows its mine count once opened and
//! `unopened` before. Mines are placed uniformly at random; opening a square
//! averages over every placement consistent with the board. Zeros open their
//! neighbours recursively. Hitting a mine ends the episode with the loss
//! reward, opening the last safe square ends it with reward 0.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::str::FromStr;

use crate::mdp::{Feature, FeatureVector, MdpBuilder, StateId, TabularMdp, Transition};
use crate::{Error, Result};

pub const LOSS_REWARD: f64 = -20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinesweeperConfig {
    pub width: u8,
    pub height: u8,
    pub mines: u8,
}

impl MinesweeperConfig {
    pub const STANDARD: Self = Self {
        width: 4,
        height: 4,
        mines: 2,
    };
    pub const SMALL: Self = Self {
        width: 3,
        height: 3,
        mines: 1,
    };

    pub fn cells(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Feature value meaning "not opened yet".
    pub fn unopened(&self) -> u8 {
        self.mines.min(8) + 1
    }

    pub fn index(&self, x: u8, y: u8) -> usize {
        (y as usize - 1) * self.width as usize + (x as usize - 1)
    }

    pub fn coords(&self, i: usize) -> (u8, u8) {
        ((i % self.width as usize) as u8 + 1, (i / self.width as usize) as u8 + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.cells() > 32 {
            return Err(Error::InvalidArgument("board must have 1 to 32 squares".into()));
        }
        if self.mines == 0 || self.mines as usize >= self.cells() {
            return Err(Error::InvalidArgument("mine count must leave a safe square".into()));
        }
        Ok(())
    }
}

/// Board geometry plus the uniform prior over mine placements.
#[derive(Clone, Debug)]
pub struct Minesweeper {
    config: MinesweeperConfig,
    neighbours: Vec<Vec<usize>>,
    placements: Vec<u32>,
}

impl Minesweeper {
    pub fn new(config: MinesweeperConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = (config.width as i32, config.height as i32);
        let neighbours = (0..config.cells())
            .map(|i| {
                let (x, y) = ((i as i32) % w, (i as i32) / w);
                let mut out = Vec::new();
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if (dx, dy) != (0, 0) && (0..w).contains(&nx) && (0..h).contains(&ny) {
                            out.push((ny * w + nx) as usize);
                        }
                    }
                }
                out
            })
            .collect();
        let placements = combinations(config.cells(), config.mines as usize);
        Ok(Self {
            config,
            neighbours,
            placements,
        })
    }

    pub fn config(&self) -> MinesweeperConfig {
        self.config
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    /// Every placement as a bit mask over squares.
    pub fn placements(&self) -> &[u32] {
        &self.placements
    }

    fn count(&self, mines: u32, i: usize) -> u8 {
        self.neighbours[i].iter().filter(|&&j| mines >> j & 1 == 1).count() as u8
    }

    pub fn consistent(&self, board: &[u8], mines: u32) -> bool {
        let unopened = self.config.unopened();
        board.iter().enumerate().all(|(i, &v)| {
            v == unopened || (mines >> i & 1 == 0 && self.count(mines, i) == v)
        })
    }

    /// Placements consistent with `board`.
    pub fn posterior(&self, board: &[u8]) -> Vec<u32> {
        self.placements
            .iter()
            .copied()
            .filter(|&m| self.consistent(board, m))
            .collect()
    }

    /// Open safe square `q` under `mines`, flooding zeros.
    pub fn reveal(&self, board: &[u8], mines: u32, q: usize) -> Vec<u8> {
        let unopened = self.config.unopened();
        let mut out = board.to_vec();
        let mut stack = vec![q];
        while let Some(i) = stack.pop() {
            if out[i] != unopened {
                continue;
            }
            let n = self.count(mines, i);
            out[i] = n;
            if n == 0 {
                stack.extend(self.neighbours[i].iter().copied().filter(|&j| out[j] == unopened));
            }
        }
        out
    }

    pub fn is_won(&self, board: &[u8]) -> bool {
        let unopened = self.config.unopened();
        board.iter().filter(|&&v| v == unopened).count() == self.config.mines as usize
    }

    pub fn fresh_board(&self) -> Vec<u8> {
        vec![self.config.unopened(); self.config.cells()]
    }

    /// Outcomes of opening `q`: the next board (`None` once the game is
    /// over), its probability and the reward.
    pub fn open(&self, board: &[u8], q: usize) -> Vec<(Option<Vec<u8>>, f64, f64)> {
        self.outcomes(board, q, &self.posterior(board))
    }

    fn outcomes(&self, board: &[u8], q: usize, post: &[u32]) -> Vec<(Option<Vec<u8>>, f64, f64)> {
        let p = 1.0 / post.len() as f64;
        let mut outcomes: BTreeMap<(Option<Vec<u8>>, bool), usize> = BTreeMap::new();
        for &m in post {
            let mine = m >> q & 1 == 1;
            let key = if mine {
                None
            } else {
                let next = self.reveal(board, m, q);
                (!self.is_won(&next)).then_some(next)
            };
            *outcomes.entry((key, mine)).or_default() += 1;
        }
        outcomes
            .into_iter()
            .map(|((next, mine), n)| (next, n as f64 * p, if mine { LOSS_REWARD } else { 0.0 }))
            .collect()
    }

    /// Build the MDP over every board reachable from the fresh board.
    pub fn build(&self) -> Result<TabularMdp> {
        let c = self.config;
        let mut values: Vec<String> = (0..=c.mines.min(8)).map(|v| v.to_string()).collect();
        values.push("unopened".into());
        let features = (0..c.cells())
            .map(|i| {
                let (x, y) = c.coords(i);
                Feature::new(format!("({x},{y})"), values.clone())
            })
            .collect();
        let actions = (0..c.cells())
            .map(|i| {
                let (x, y) = c.coords(i);
                format!("a{x}{y}")
            })
            .collect();
        let name = if c == MinesweeperConfig::STANDARD {
            "minesweeper".to_string()
        } else {
            format!("minesweeper-{}x{}-{}", c.width, c.height, c.mines)
        };
        let mut b = MdpBuilder::new(name, features, actions, 1.0)?;
        let unopened = c.unopened();

        let start = self.fresh_board();
        let mut ids: HashMap<Vec<u8>, StateId> = HashMap::new();
        let s0 = b.add_state(FeatureVector(start.clone()), false)?;
        ids.insert(start.clone(), s0);
        let mut queue = VecDeque::from([start]);
        while let Some(board) = queue.pop_front() {
            let s = ids[&board];
            let post = self.posterior(&board);
            for q in (0..c.cells()).filter(|&q| board[q] == unopened) {
                let outcomes = self.outcomes(&board, q, &post);
                let mut transitions = Vec::with_capacity(outcomes.len());
                for (next, prob, reward) in outcomes {
                    let next = match next {
                        None => None,
                        Some(nb) => Some(match ids.get(&nb) {
                            Some(&id) => id,
                            None => {
                                let id = b.add_state(FeatureVector(nb.clone()), false)?;
                                ids.insert(nb.clone(), id);
                                queue.push_back(nb);
                                id
                            }
                        }),
                    };
                    transitions.push(Transition { next, prob, reward });
                }
                b.set_transitions(s, q, transitions)?;
            }
        }
        b.set_initial(vec![(s0, 1.0)]);
        b.build()
    }

    /// Board text, one row per line: digits for opened squares, `#` for
    /// unopened ones.
    pub fn render(&self, board: &[u8]) -> String {
        let unopened = self.config.unopened();
        board
            .chunks(self.config.width as usize)
            .map(|row| {
                row.iter()
                    .map(|&v| if v == unopened { '#' } else { (b'0' + v) as char })
                    .collect::<String>()
                    + "\n"
            })
            .collect()
    }

    /// Inverse of [`Minesweeper::render`]; whitespace other than newlines
    /// and `/` row separators are ignored.
    pub fn parse(&self, text: &str) -> Result<Vec<u8>> {
        let unopened = self.config.unopened();
        let board: Vec<u8> = text
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '/')
            .map(|c| match c {
                '#' | '?' => Ok(unopened),
                d if d.is_ascii_digit() && (d as u8 - b'0') < unopened => Ok(d as u8 - b'0'),
                other => Err(Error::InvalidArgument(format!("bad square {other:?}"))),
            })
            .collect::<Result<_>>()?;
        if board.len() != self.config.cells() {
            return Err(Error::InvalidArgument(format!(
                "board needs {} squares, got {}",
                self.config.cells(),
                board.len()
            )));
        }
        Ok(board)
    }
}

impl FromStr for MinesweeperConfig {
    type Err = Error;

    /// `WxH-M`, e.g. `4x4-2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected WxH-M, got {s:?}"));
        let (dims, mines) = s.split_once('-').ok_or_else(bad)?;
        let (w, h) = dims.split_once('x').ok_or_else(bad)?;
        let config = Self {
            width: w.parse().map_err(|_| bad())?,
            height: h.parse().map_err(|_| bad())?,
            mines: mines.parse().map_err(|_| bad())?,
        };
        config.validate()?;
        Ok(config)
    }
}

fn combinations(n: usize, k: usize) -> Vec<u32> {
    let mut out = Vec::new();
    fn rec(start: usize, n: usize, k: usize, acc: u32, out: &mut Vec<u32>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for i in start..=n - k {
            rec(i + 1, n, k - 1, acc | 1 << i, out);
        }
    }
    rec(0, n, k, 0, &mut out);
    out
}

pub fn minesweeper_with(config: MinesweeperConfig) -> Result<TabularMdp> {
    Minesweeper::new(config)?.build()
}

/// The 4×4, two-mine game.
pub fn minesweeper() -> TabularMdp {
    minesweeper_with(MinesweeperConfig::STANDARD).expect("standard configuration")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_prior() {
        let g = Minesweeper::new(MinesweeperConfig::STANDARD).unwrap();
        assert_eq!(g.placements().len(), 120);
        let small = Minesweeper::new(MinesweeperConfig::SMALL).unwrap();
        assert_eq!(small.placements().len(), 9);
    }

    #[test]
    fn flood_fill_opens_a_zero_region() {
        let g = Minesweeper::new(MinesweeperConfig::STANDARD).unwrap();
        let c = g.config();
        let mines = 1 << c.index(4, 4) | 1 << c.index(3, 4);
        let board = g.reveal(&g.fresh_board(), mines, c.index(1, 1));
        assert_eq!(g.render(&board), "0000\n0000\n0122\n01##\n");
        assert!(g.is_won(&board));
        // every zero has all of its neighbours opened
        for i in 0..c.cells() {
            if board[i] == 0 {
                assert!(g.neighbours(i).iter().all(|&j| board[j] != c.unopened()));
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        let g = Minesweeper::new(MinesweeperConfig::STANDARD).unwrap();
        let b = g.parse("01## / 12## / #### / ####").unwrap();
        assert_eq!(g.render(&b), "01##\n12##\n####\n####\n");
        assert!(g.parse("01#").is_err());
        assert!(g.parse("0129############").is_err());
    }

    #[test]
    fn config_parsing() {
        assert_eq!("3x3-1".parse::<MinesweeperConfig>().unwrap(), MinesweeperConfig::SMALL);
        assert!("3x3".parse::<MinesweeperConfig>().is_err());
        assert!("2x2-4".parse::<MinesweeperConfig>().is_err());
    }

    #[test]
    fn small_game_is_consistent() {
        let g = Minesweeper::new(MinesweeperConfig::SMALL).unwrap();
        let mdp = g.build().unwrap();
        for s in 0..mdp.n_states() {
            let board = &mdp.state(s).0;
            let post = g.posterior(board);
            assert!(!post.is_empty());
            for &m in &post {
                for (i, &v) in board.iter().enumerate() {
                    if v != g.config().unopened() {
                        assert_eq!(v, g.count(m, i));
                    }
                }
            }
        }
        // opening the centre first: lose with 1/9, otherwise a number 1
        let centre = g.config().index(2, 2);
        let t: Vec<_> = mdp.transitions(0, centre).collect();
        let lose: f64 = t.iter().filter(|t| t.reward == LOSS_REWARD).map(|t| t.prob).sum();
        assert!((lose - 1.0 / 9.0).abs() < 1e-12);
    }
}
