//! The classic 5×5 Taxi domain.
//!
//! Coordinates are 1-based with `x` growing east and `y` growing north, so the
//! landmarks sit at R=(1,5), G=(5,5), Y=(1,1) and B=(4,1). Drop-off at a
//! landmark other than the destination leaves the passenger there, as in the
//! reference implementation.

use crate::mdp::{Feature, FeatureVector, MdpBuilder, StateId, TabularMdp, Transition};

pub const ACTIONS: [&str; 6] = ["north", "south", "east", "west", "pickup", "dropoff"];
pub const LANDMARKS: [&str; 4] = ["R", "G", "B", "Y"];
pub const IN_TAXI: u8 = 4;
const LANDMARK_CELLS: [(u8, u8); 4] = [(1, 5), (5, 5), (4, 1), (1, 1)];

pub const STEP_REWARD: f64 = -1.0;
pub const DELIVERY_BONUS: f64 = 20.0;
pub const MISUSE_PENALTY: f64 = -10.0;

const MAP: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];

/// Whether a move east from `(x, y)` stays clear of walls.
fn open_east(x: u8, y: u8) -> bool {
    let row = MAP[(6 - y) as usize].as_bytes();
    row[2 * x as usize] == b':'
}

fn moved(x: u8, y: u8, action: usize) -> (u8, u8) {
    match action {
        0 => (x, (y + 1).min(5)),
        1 => (x, (y - 1).max(1)),
        2 if x < 5 && open_east(x, y) => (x + 1, y),
        3 if x > 1 && open_east(x - 1, y) => (x - 1, y),
        _ => (x, y),
    }
}

fn fv(x: u8, y: u8, p: u8, d: u8) -> FeatureVector {
    FeatureVector(vec![x - 1, y - 1, p, d])
}

/// `(x, y, passenger, destination)` of a state, passenger 4 meaning in the taxi.
pub fn decode(mdp: &TabularMdp, s: StateId) -> (u8, u8, u8, u8) {
    let f = mdp.state(s);
    (f.get(0) + 1, f.get(1) + 1, f.get(2), f.get(3))
}

pub fn taxi() -> TabularMdp {
    let features = vec![
        Feature::new("x", (1..=5).map(|v| v.to_string()).collect()),
        Feature::new("y", (1..=5).map(|v| v.to_string()).collect()),
        Feature::new(
            "passenger",
            LANDMARKS.iter().map(|s| s.to_string()).chain(["in-taxi".to_string()]).collect(),
        ),
        Feature::new("destination", LANDMARKS.iter().map(|s| s.to_string()).collect()),
    ];
    let actions = ACTIONS.iter().map(|a| a.to_string()).collect();
    let mut b = MdpBuilder::new("taxi", features, actions, 1.0).expect("valid header");
    let mut all = Vec::new();
    for x in 1..=5u8 {
        for y in 1..=5u8 {
            for p in 0..5u8 {
                for d in 0..4u8 {
                    let id = b.add_state(fv(x, y, p, d), p == d).expect("unique state");
                    all.push((id, x, y, p, d));
                }
            }
        }
    }
    let mut initial = Vec::new();
    for &(s, x, y, p, d) in &all {
        if p == d {
            continue;
        }
        if p != IN_TAXI {
            initial.push(s);
        }
        for a in 0..ACTIONS.len() {
            let id = |x, y, p| b.state_id(&fv(x, y, p, d)).expect("enumerated");
            let (next, reward) = match a {
                0..=3 => {
                    let (nx, ny) = moved(x, y, a);
                    (id(nx, ny, p), STEP_REWARD)
                }
                4 => {
                    if p != IN_TAXI && LANDMARK_CELLS[p as usize] == (x, y) {
                        (id(x, y, IN_TAXI), STEP_REWARD)
                    } else {
                        (s, STEP_REWARD + MISUSE_PENALTY)
                    }
                }
                _ => {
                    let here = LANDMARK_CELLS.iter().position(|&c| c == (x, y));
                    match here {
                        Some(l) if p == IN_TAXI && l == d as usize => (id(x, y, d), STEP_REWARD + DELIVERY_BONUS),
                        Some(l) if p == IN_TAXI => (id(x, y, l as u8), STEP_REWARD),
                        _ => (s, STEP_REWARD + MISUSE_PENALTY),
                    }
                }
            };
            b.set_transitions(s, a, vec![Transition { next: Some(next), prob: 1.0, reward }])
                .expect("legal action");
        }
    }
    let p = 1.0 / initial.len() as f64;
    b.set_initial(initial.into_iter().map(|s| (s, p)).collect());
    b.build().expect("consistent construction")
}

/// Street map with the taxi marked `T` (or `@` when carrying the passenger).
pub fn render(mdp: &TabularMdp, s: StateId) -> String {
    let (x, y, p, d) = decode(mdp, s);
    let mut rows: Vec<Vec<char>> = MAP.iter().map(|r| r.chars().collect()).collect();
    let col = 2 * x as usize - 1;
    let row = (6 - y) as usize;
    rows[row][col] = if p == IN_TAXI { '@' } else { 'T' };
    let mut out: String = rows.into_iter().map(|r| r.into_iter().collect::<String>() + "\n").collect();
    let passenger = if p == IN_TAXI { "in taxi" } else { LANDMARKS[p as usize] };
    out.push_str(&format!("passenger: {passenger}, destination: {}\n", LANDMARKS[d as usize]));
    out
}
