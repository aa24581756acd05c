//! Memoized negamax for Tic-Tac-Toe.
//!
//! Scores favour quick wins and slow losses: a loss with `e` empty cells left
//! scores `-(1 + e)` for the side that lost, a draw scores 0.

use std::collections::HashMap;

use crate::environments::tictactoe::{Board, Mark};
use crate::{Error, Result};

/// Which of several equally scored moves is played.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestCell,
    HighestCell,
}

#[derive(Debug, Default)]
pub struct Minimax {
    tie_break: TieBreak,
    memo: HashMap<(Board, Mark), i32>,
}

impl Minimax {
    pub fn new(tie_break: TieBreak) -> Self {
        Self {
            tie_break,
            memo: HashMap::new(),
        }
    }

    /// Score of `board` for the side to move.
    pub fn score(&mut self, board: &Board, to_move: Mark) -> i32 {
        if let Some(&v) = self.memo.get(&(*board, to_move)) {
            return v;
        }
        let v = if board.winner().is_some() {
            // the previous mover completed a line
            -(1 + board.empty_cells().count() as i32)
        } else if board.is_full() {
            0
        } else {
            board
                .empty_cells()
                .map(|c| -self.score(&board.play(c, to_move), to_move.opponent()))
                .max()
                .expect("non-full board has a move")
        };
        self.memo.insert((*board, to_move), v);
        v
    }

    /// Every legal move with its score for the mover.
    pub fn move_scores(&mut self, board: &Board, to_move: Mark) -> Vec<(usize, i32)> {
        board
            .empty_cells()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|c| (c, -self.score(&board.play(c, to_move), to_move.opponent())))
            .collect()
    }

    pub fn best_move(&mut self, board: &Board, to_move: Mark) -> Result<usize> {
        if board.winner().is_some() || board.is_full() {
            return Err(Error::InvalidArgument(format!(
                "no move available on finished board {board}"
            )));
        }
        let scores = self.move_scores(board, to_move);
        let best = scores.iter().map(|&(_, v)| v).max().expect("moves exist");
        let mut tied = scores.iter().filter(|&&(_, v)| v == best).map(|&(c, _)| c);
        Ok(match self.tie_break {
            TieBreak::LowestCell => tied.next(),
            TieBreak::HighestCell => tied.next_back(),
        }
        .expect("at least one best move"))
    }
}
