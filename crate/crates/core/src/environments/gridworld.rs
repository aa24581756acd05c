//! Deterministic gridworlds with `(x, y)` features.
//!
//! Cells are 1-based `(x, y)` with `x` growing east and `y` growing north.
//! Every action costs the step reward; entering a goal adds the goal bonus and
//! ends the episode. Moves off the grid or into a blocked cell leave the agent
//! where it is.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{Feature, FeatureVector, MdpBuilder, StateId, TabularMdp, Transition};
use crate::{Error, Result};

pub type Cell = (u8, u8);

/// Action names in index order.
pub const ACTIONS: [&str; 4] = ["N", "S", "E", "W"];
const MOVES: [(i16, i16); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub name: String,
    pub width: u8,
    pub height: u8,
    pub blocked: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub initial: Vec<Cell>,
    /// Cells listed here get state ids 0, 1, 2, ... in this order (the state
    /// labelled `k` in a figure is id `k - 1`). Remaining cells follow in
    /// row-major order from the south-west corner, goals last.
    #[serde(default)]
    pub numbering: Vec<Cell>,
    pub step_reward: f64,
    pub goal_bonus: f64,
    pub gamma: f64,
}

impl GridworldSpec {
    fn in_bounds(&self, c: Cell) -> bool {
        (1..=self.width).contains(&c.0) && (1..=self.height).contains(&c.1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMdp(format!("{}: {m}", self.name)));
        if self.width == 0 || self.height == 0 {
            return bad("empty grid".into());
        }
        for &c in self.blocked.iter().chain(&self.goals).chain(&self.initial).chain(&self.numbering) {
            if !self.in_bounds(c) {
                return bad(format!("cell {c:?} is outside the grid"));
            }
        }
        if self.initial.is_empty() {
            return bad("no initial cells".into());
        }
        if self.initial.iter().any(|c| self.goals.contains(c)) {
            return bad("an initial cell is a goal".into());
        }
        if self.blocked.iter().any(|c| self.initial.contains(c) || self.goals.contains(c)) {
            return bad("a blocked cell is an initial or goal cell".into());
        }
        if self.numbering.iter().any(|c| self.blocked.contains(c)) {
            return bad("a numbered cell is blocked".into());
        }
        Ok(())
    }

    /// Open cells in state-id order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        for &c in &self.numbering {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        let mut goals = Vec::new();
        for y in 1..=self.height {
            for x in 1..=self.width {
                let c = (x, y);
                if self.blocked.contains(&c) || out.contains(&c) {
                    continue;
                }
                if self.goals.contains(&c) {
                    goals.push(c);
                } else {
                    out.push(c);
                }
            }
        }
        out.extend(goals);
        out
    }

    pub fn next_cell(&self, c: Cell, action: usize) -> Cell {
        let (dx, dy) = MOVES[action];
        let n = (c.0 as i16 + dx, c.1 as i16 + dy);
        if n.0 < 1 || n.1 < 1 || n.0 > self.width as i16 || n.1 > self.height as i16 {
            return c;
        }
        let n = (n.0 as u8, n.1 as u8);
        if self.blocked.contains(&n) {
            c
        } else {
            n
        }
    }

    pub fn build(&self) -> Result<TabularMdp> {
        self.validate()?;
        let features = vec![
            Feature::new("x", (1..=self.width).map(|v| v.to_string()).collect()),
            Feature::new("y", (1..=self.height).map(|v| v.to_string()).collect()),
        ];
        let actions = ACTIONS.iter().map(|a| a.to_string()).collect();
        let mut b = MdpBuilder::new(self.name.clone(), features, actions, self.gamma)?;
        let cells = self.cells();
        for &c in &cells {
            b.add_state(fv(c), self.goals.contains(&c))?;
        }
        for (s, &c) in cells.iter().enumerate() {
            if self.goals.contains(&c) {
                continue;
            }
            for a in 0..ACTIONS.len() {
                let n = self.next_cell(c, a);
                let goal = self.goals.contains(&n);
                let reward = self.step_reward + if goal { self.goal_bonus } else { 0.0 };
                let next = b.state_id(&fv(n)).expect("open cell");
                b.set_transitions(s, a, vec![Transition { next: Some(next), prob: 1.0, reward }])?;
            }
        }
        let p = 1.0 / self.initial.len() as f64;
        let initial = self
            .initial
            .iter()
            .map(|&c| (b.state_id(&fv(c)).expect("open cell"), p))
            .collect();
        b.set_initial(initial);
        b.build()
    }

    /// Open cells from which some goal can be reached.
    pub fn cells_reaching_goal(&self) -> BTreeSet<Cell> {
        let mut seen: BTreeSet<Cell> = self.goals.iter().copied().collect();
        let mut queue: VecDeque<Cell> = self.goals.iter().copied().collect();
        while let Some(c) = queue.pop_front() {
            for y in 1..=self.height {
                for x in 1..=self.width {
                    let p = (x, y);
                    if self.blocked.contains(&p) || self.goals.contains(&p) || seen.contains(&p) {
                        continue;
                    }
                    if (0..ACTIONS.len()).any(|a| self.next_cell(p, a) == c) {
                        seen.insert(p);
                        queue.push_back(p);
                    }
                }
            }
        }
        seen
    }

    /// ASCII picture, north at the top. `label` fills each open cell.
    pub fn render(&self, label: impl Fn(Cell) -> String) -> String {
        let cells: Vec<Vec<String>> = (1..=self.height)
            .rev()
            .map(|y| {
                (1..=self.width)
                    .map(|x| {
                        let c = (x, y);
                        if self.blocked.contains(&c) {
                            "#".to_string()
                        } else if self.goals.contains(&c) {
                            "G".to_string()
                        } else {
                            label(c)
                        }
                    })
                    .collect()
            })
            .collect();
        let w = cells.iter().flatten().map(|s| s.len()).max().unwrap_or(1);
        let sep = format!("+{}\n", format!("{}+", "-".repeat(w + 2)).repeat(self.width as usize));
        let mut out = sep.clone();
        for row in cells {
            out.push('|');
            for c in row {
                out.push_str(&format!(" {c:^w$} |"));
            }
            out.push('\n');
            out.push_str(&sep);
        }
        out
    }
}

fn fv(c: Cell) -> FeatureVector {
    FeatureVector(vec![c.0 - 1, c.1 - 1])
}

/// The cell of a gridworld state.
pub fn cell_of(mdp: &TabularMdp, s: StateId) -> Cell {
    let f = mdp.state(s);
    (f.get(0) + 1, f.get(1) + 1)
}

fn small(name: &str, width: u8, height: u8, blocked: Vec<Cell>, goals: Vec<Cell>, numbering: Vec<Cell>) -> GridworldSpec {
    GridworldSpec {
        name: name.into(),
        width,
        height,
        blocked,
        goals,
        initial: numbering[..2].to_vec(),
        numbering,
        step_reward: -1.0,
        goal_bonus: 10.0,
        gamma: 1.0,
    }
}

/// 2×3 grid, goals along the top row; North is optimal everywhere.
pub fn gridworld_a_spec() -> GridworldSpec {
    small("gridworld-a", 2, 3, vec![], vec![(1, 3), (2, 3)], vec![(1, 1), (2, 1), (1, 2), (2, 2)])
}

/// 2×4 grid with goals along the top row and a block above the start corner.
pub fn gridworld_b_spec() -> GridworldSpec {
    small(
        "gridworld-b",
        2,
        4,
        vec![(1, 2)],
        vec![(1, 4), (2, 4)],
        vec![(1, 1), (2, 1), (2, 2), (2, 3), (1, 3)],
    )
}

/// 2×4 grid with a single goal in the north-west corner.
pub fn gridworld_c_spec() -> GridworldSpec {
    small(
        "gridworld-c",
        2,
        4,
        vec![(1, 2), (2, 4)],
        vec![(1, 4)],
        vec![(1, 1), (2, 1), (2, 2), (2, 3), (1, 3)],
    )
}

pub fn gridworld_a() -> TabularMdp {
    gridworld_a_spec().build().expect("static layout")
}

pub fn gridworld_b() -> TabularMdp {
    gridworld_b_spec().build().expect("static layout")
}

pub fn gridworld_c() -> TabularMdp {
    gridworld_c_spec().build().expect("static layout")
}

/// A seeded random layout and the seed that actually produced it.
#[derive(Clone, Debug)]
pub struct RandomGridworld {
    pub spec: GridworldSpec,
    pub requested_seed: u64,
    /// Differs from `requested_seed` when earlier seeds gave a layout with
    /// cells that cannot reach the goal.
    pub seed: u64,
    pub mdp: TabularMdp,
}

pub const D_SIZE: u8 = 10;
pub const D_BLOCKED: usize = 20;

fn random_layout(seed: u64) -> GridworldSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<Cell> = (1..=D_SIZE)
        .flat_map(|y| (1..=D_SIZE).map(move |x| (x, y)))
        .collect();
    all.shuffle(&mut rng);
    let blocked = all[..D_BLOCKED].to_vec();
    let goal = all[D_BLOCKED];
    let mut initial: Vec<Cell> = all[D_BLOCKED + 1..].to_vec();
    initial.sort_by_key(|&(x, y)| (y, x));
    GridworldSpec {
        name: "gridworld-d".into(),
        width: D_SIZE,
        height: D_SIZE,
        blocked,
        goals: vec![goal],
        initial,
        numbering: vec![],
        step_reward: -1.0,
        goal_bonus: 10.0,
        gamma: 1.0,
    }
}

/// 10×10 grid with 20 random blocks and one random goal.
pub fn gridworld_d(seed: u64) -> RandomGridworld {
    let mut current = seed;
    loop {
        let spec = random_layout(current);
        let reach = spec.cells_reaching_goal();
        if spec.initial.iter().all(|c| reach.contains(c)) {
            let mdp = spec.build().expect("generated layout is valid");
            return RandomGridworld {
                spec,
                requested_seed: seed,
                seed: current,
                mdp,
            };
        }
        current = current.wrapping_add(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gridworld_a_moves_and_rewards() {
        let mdp = gridworld_a();
        assert_eq!(mdp.n_states(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = mdp.action_index("N").unwrap();
        let (s, r) = mdp.step(0, n, &mut rng).unwrap();
        assert_eq!(s, Some(2));
        assert_eq!(r, -1.0);
        let (s, r) = mdp.step(2, n, &mut rng).unwrap();
        assert!(mdp.is_terminal(s.unwrap()));
        assert_eq!(r, 9.0);
        let w = mdp.action_index("W").unwrap();
        assert_eq!(mdp.step(0, w, &mut rng).unwrap(), (Some(0), -1.0));
        assert!(mdp.is_deterministic());
    }

    #[test]
    fn numbering_fixes_state_ids() {
        let mdp = gridworld_b();
        let cells: Vec<Cell> = (0..5).map(|s| cell_of(&mdp, s)).collect();
        assert_eq!(cells, vec![(1, 1), (2, 1), (2, 2), (2, 3), (1, 3)]);
        assert_eq!(mdp.n_states(), 7);
        assert_eq!(mdp.initial_distribution(), &[(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn blocked_cells_stop_movement() {
        let spec = gridworld_b_spec();
        assert_eq!(spec.next_cell((1, 1), 0), (1, 1));
        assert_eq!(spec.next_cell((1, 3), 1), (1, 3));
        assert_eq!(spec.next_cell((2, 1), 0), (2, 2));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = gridworld_a_spec();
        spec.initial.push((1, 3));
        assert!(spec.build().is_err());
        let mut spec = gridworld_a_spec();
        spec.blocked.push((5, 5));
        assert!(spec.build().is_err());
    }

    #[test]
    fn gridworld_d_is_reproducible() {
        let a = gridworld_d(7);
        let b = gridworld_d(7);
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.spec.blocked.len(), D_BLOCKED);
        assert_eq!(a.spec.goals.len(), 1);
        assert_eq!(a.mdp.n_states(), 80);
        assert!(a.seed >= 7);
        assert_ne!(gridworld_d(a.seed + 1).spec, a.spec);
    }

    #[test]
    fn render_marks_blocks_and_goals() {
        let spec = gridworld_b_spec();
        let pic = spec.render(|_| ".".into());
        let rows: Vec<&str> = pic.lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(rows[0], "| G | G |");
        assert_eq!(rows[2], "| # | . |");
    }
}
