//! Tic-Tac-Toe against a Minimax opponent.
//!
//! The agent plays X. States are the boards on which X is to move; the
//! opponent's reply is part of the transition. Finished boards are terminal
//! states. Cells are numbered 0..9 row by row from the top left.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::mdp::{Feature, FeatureVector, MdpBuilder, StateId, TabularMdp, Transition};
use crate::solvers::minimax::{Minimax, TieBreak};
use crate::{Error, Result};

pub const LOSS_REWARD: f64 = -1.0;
pub const WIN_REWARD: f64 = 1.0;

const LINES: [[usize; 3]; 8] = [
    [0, 1, 2],
    [3, 4, 5],
    [6, 7, 8],
    [0, 3, 6],
    [1, 4, 7],
    [2, 5, 8],
    [0, 4, 8],
    [2, 4, 6],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mark {
    Empty,
    X,
    O,
}

impl Mark {
    pub fn opponent(self) -> Mark {
        match self {
            Mark::X => Mark::O,
            Mark::O => Mark::X,
            Mark::Empty => Mark::Empty,
        }
    }

    fn symbol(self) -> char {
        match self {
            Mark::Empty => '.',
            Mark::X => 'X',
            Mark::O => 'O',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Board(pub [Mark; 9]);

impl Board {
    pub fn empty() -> Self {
        Board([Mark::Empty; 9])
    }

    pub fn winner(&self) -> Option<Mark> {
        LINES.iter().find_map(|l| {
            let m = self.0[l[0]];
            (m != Mark::Empty && m == self.0[l[1]] && m == self.0[l[2]]).then_some(m)
        })
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&m| m != Mark::Empty)
    }

    pub fn is_over(&self) -> bool {
        self.winner().is_some() || self.is_full()
    }

    pub fn empty_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..9).filter(|&c| self.0[c] == Mark::Empty)
    }

    pub fn count(&self, mark: Mark) -> usize {
        self.0.iter().filter(|&&m| m == mark).count()
    }

    pub fn play(&self, cell: usize, mark: Mark) -> Board {
        debug_assert_eq!(self.0[cell], Mark::Empty);
        let mut b = *self;
        b.0[cell] = mark;
        b
    }

    /// Three rows of three symbols.
    pub fn render(&self) -> String {
        let s: Vec<char> = self.0.iter().map(|m| m.symbol()).collect();
        s.chunks(3)
            .map(|r| r.iter().map(|c| format!(" {c}")).collect::<String>().trim_start().to_string() + "\n")
            .collect()
    }

    fn features(&self) -> FeatureVector {
        FeatureVector(self.0.iter().map(|&m| m as u8).collect())
    }

    fn from_features(f: &FeatureVector) -> Board {
        let mut b = Board::empty();
        for (i, m) in b.0.iter_mut().enumerate() {
            *m = match f.get(i) {
                1 => Mark::X,
                2 => Mark::O,
                _ => Mark::Empty,
            };
        }
        b
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in self.0 {
            write!(f, "{}", m.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for Board {
    type Err = Error;

    /// Nine cells from `X`, `O` and `.` (or `-`/`_`); whitespace and `/` are
    /// ignored.
    fn from_str(s: &str) -> Result<Self> {
        let cells: Vec<Mark> = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '/')
            .map(|c| match c.to_ascii_uppercase() {
                'X' => Ok(Mark::X),
                'O' => Ok(Mark::O),
                '.' | '-' | '_' => Ok(Mark::Empty),
                other => Err(Error::InvalidArgument(format!("bad board symbol {other:?}"))),
            })
            .collect::<Result<_>>()?;
        let arr: [Mark; 9] = cells
            .try_into()
            .map_err(|v: Vec<Mark>| Error::InvalidArgument(format!("board needs 9 cells, got {}", v.len())))?;
        Ok(Board(arr))
    }
}

pub fn board_of(mdp: &TabularMdp, s: StateId) -> Board {
    Board::from_features(mdp.state(s))
}

pub fn state_of(mdp: &TabularMdp, board: &Board) -> Option<StateId> {
    mdp.state_id(&board.features())
}

/// Agent-turn boards reachable from either opening, with Minimax folded into
/// the dynamics.
pub fn tictactoe_with(tie_break: TieBreak) -> TabularMdp {
    let features = (0..9)
        .map(|i| Feature::new(format!("cell{i}"), vec!["empty".into(), "X".into(), "O".into()]))
        .collect();
    let actions = (0..9).map(|i| format!("cell{i}")).collect();
    let mut b = MdpBuilder::new("tictactoe", features, actions, 1.0).expect("valid header");
    let mut minimax = Minimax::new(tie_break);

    let empty = Board::empty();
    let o_first = empty.play(minimax.best_move(&empty, Mark::O).expect("empty board"), Mark::O);
    let mut ids: HashMap<Board, StateId> = HashMap::new();
    let mut queue = VecDeque::new();
    let start_x = intern(empty, &mut b, &mut ids, &mut queue);
    let start_o = intern(o_first, &mut b, &mut ids, &mut queue);

    while let Some(board) = queue.pop_front() {
        let s = ids[&board];
        for cell in board.empty_cells().collect::<Vec<_>>() {
            let after = board.play(cell, Mark::X);
            let (next, reward) = if after.winner() == Some(Mark::X) {
                (after, WIN_REWARD)
            } else if after.is_full() {
                (after, 0.0)
            } else {
                let reply = minimax.best_move(&after, Mark::O).expect("open board");
                let next = after.play(reply, Mark::O);
                let reward = if next.winner() == Some(Mark::O) { LOSS_REWARD } else { 0.0 };
                (next, reward)
            };
            let id = intern(next, &mut b, &mut ids, &mut queue);
            b.set_transitions(s, cell, vec![Transition { next: Some(id), prob: 1.0, reward }])
                .expect("legal move");
        }
    }
    b.set_initial(vec![(start_x, 0.5), (start_o, 0.5)]);
    b.build().expect("consistent construction")
}

fn intern(
    board: Board,
    b: &mut MdpBuilder,
    ids: &mut HashMap<Board, StateId>,
    queue: &mut VecDeque<Board>,
) -> StateId {
    *ids.entry(board).or_insert_with(|| {
        let over = board.is_over();
        if !over {
            queue.push_back(board);
        }
        b.add_state(board.features(), over).expect("unique board")
    })
}

pub fn tictactoe() -> TabularMdp {
    tictactoe_with(TieBreak::LowestCell)
}
