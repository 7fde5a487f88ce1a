//! The experiment MDPs: FrozenLake and CliffWalk grids, the two-pathology
//! MDP, and seeded random MDPs with finite values under every policy.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{reduce_next_state_rewards, uniform_distribution, MdpSpec, StateActionTable};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Cell {
    Start,
    Frozen,
    /// Terminal, absorbing with zero reward.
    Hole,
    Goal,
}

impl Cell {
    pub fn is_terminal(self) -> bool {
        matches!(self, Cell::Hole | Cell::Goal)
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Cell::Start),
            'F' => Some(Cell::Frozen),
            'H' => Some(Cell::Hole),
            'G' => Some(Cell::Goal),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SlipModel {
    Deterministic,
    /// Intended move and both perpendicular moves, 1/3 each.
    Perpendicular,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridLayout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    pub slip: SlipModel,
}

impl GridLayout {
    /// Parses rows of `S`/`F`/`H`/`G` characters.
    pub fn parse<R: AsRef<str>>(rows: &[R], slippery: bool) -> Result<Self> {
        let n_rows = rows.len();
        let cols = rows.first().map_or(0, |r| r.as_ref().chars().count());
        if n_rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("empty grid layout".into()));
        }
        let mut cells = Vec::with_capacity(n_rows * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != cols {
                return Err(Error::InvalidArgument(format!("layout row {i} has the wrong width")));
            }
            for c in row.chars() {
                cells.push(
                    Cell::from_char(c)
                        .ok_or_else(|| Error::InvalidArgument(format!("unknown layout character {c:?}")))?,
                );
            }
        }
        let goals = cells.iter().filter(|&&c| c == Cell::Goal).count();
        if goals != 1 {
            return Err(Error::InvalidArgument(format!(
                "layout needs exactly one goal, found {goals}"
            )));
        }
        Ok(Self {
            rows: n_rows,
            cols,
            cells,
            slip: if slippery {
                SlipModel::Perpendicular
            } else {
                SlipModel::Deterministic
            },
        })
    }

    /// 4x4 lake with holes at (1,1), (1,3), (3,0).
    pub fn default_frozenlake() -> Self {
        Self::parse(&["SFFF", "FHFH", "FFFF", "HFFG"], true).expect("static layout")
    }

    /// 3x7 cliff: bottom row is start, five cliff cells, goal.
    pub fn cliffwalk() -> Self {
        Self::parse(&["FFFFFFF", "FFFFFFF", "SHHHHHG"], false).expect("static layout")
    }

    pub fn with_slip(mut self, slip: SlipModel) -> Self {
        self.slip = slip;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn state(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn goal(&self) -> usize {
        self.cells.iter().position(|&c| c == Cell::Goal).expect("validated")
    }

    /// Neighbour of `s` in direction `dir`; off-grid moves stay in place.
    pub fn step(&self, s: usize, dir: usize) -> usize {
        let (r, c) = (s / self.cols, s % self.cols);
        match dir {
            UP if r > 0 => s - self.cols,
            RIGHT if c + 1 < self.cols => s + 1,
            DOWN if r + 1 < self.rows => s + self.cols,
            LEFT if c > 0 => s - 1,
            _ => s,
        }
    }
}

/// Builds a grid MDP honouring `layout.slip`, with reward 1 on arrival at the goal.
pub fn frozenlake(layout: &GridLayout) -> Result<MdpSpec> {
    let n = layout.n_cells();
    let na = 4;
    let mut t = vec![0.0; n * na * n];
    for s in 0..n {
        for a in 0..na {
            let row = &mut t[(s * na + a) * n..(s * na + a + 1) * n];
            if layout.cells[s].is_terminal() {
                row[s] = 1.0;
                continue;
            }
            match layout.slip {
                SlipModel::Deterministic => row[layout.step(s, a)] = 1.0,
                SlipModel::Perpendicular => {
                    for dir in [(a + 3) % 4, a, (a + 1) % 4] {
                        row[layout.step(s, dir)] += 1.0 / 3.0;
                    }
                }
            }
        }
    }
    let zero = StateActionTable::zeros(n, na);
    let shell = MdpSpec::new(n, na, t, zero, uniform_distribution(n), 1.0)?;
    let goal = layout.goal();
    let rewards = reduce_next_state_rewards(&shell, |s, _, next| {
        if next == goal && !layout.cells[s].is_terminal() {
            1.0
        } else {
            0.0
        }
    });
    shell.with_rewards(rewards, 1.0)
}

/// Grid MDP with deterministic moves regardless of `layout.slip`.
pub fn deterministic_gridworld(layout: &GridLayout) -> Result<MdpSpec> {
    let (rows, cols) = (layout.rows as isize, layout.cols as isize);
    let n = layout.n_cells();
    let goal = layout.goal();
    let moves: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
    let mut t = vec![0.0; n * 4 * n];
    let mut r = StateActionTable::zeros(n, 4);
    for row in 0..rows {
        for col in 0..cols {
            let s = (row * cols + col) as usize;
            for (a, (dr, dc)) in moves.iter().enumerate() {
                let next = if layout.cells[s].is_terminal() {
                    s
                } else {
                    let (nr, nc) = (row + dr, col + dc);
                    if (0..rows).contains(&nr) && (0..cols).contains(&nc) {
                        (nr * cols + nc) as usize
                    } else {
                        s
                    }
                };
                t[(s * 4 + a) * n + next] = 1.0;
                if next == goal && s != goal {
                    r.set(s, a, 1.0);
                }
            }
        }
    }
    MdpSpec::new(n, 4, t, r, uniform_distribution(n), 1.0)
}

pub fn cliffwalk() -> MdpSpec {
    frozenlake(&GridLayout::cliffwalk()).expect("static layout")
}

/// Five states: s0 chooses s1 or s2; s1 may stay or pay -1 to reach s3;
/// s2 may stay or earn +1 to reach s4; s3 and s4 absorb.
pub fn pathological() -> MdpSpec {
    pathological_with_penalty(-1.0)
}

/// [`pathological`] with the s1 -> s3 reward set to zero, so every reward
/// is nonnegative.
pub fn pathological_nonnegative() -> MdpSpec {
    pathological_with_penalty(0.0)
}

fn pathological_with_penalty(penalty: f64) -> MdpSpec {
    let n = 5;
    let edges: [[usize; 2]; 5] = [[1, 2], [1, 3], [2, 4], [3, 3], [4, 4]];
    let mut t = vec![0.0; n * 2 * n];
    for (s, targets) in edges.iter().enumerate() {
        for (a, &next) in targets.iter().enumerate() {
            t[(s * 2 + a) * n + next] = 1.0;
        }
    }
    let r = StateActionTable::from_rows(&[[0.0, 0.0], [0.0, penalty], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        .expect("static table");
    MdpSpec::new(n, 2, t, r, uniform_distribution(n), 1.0).expect("static MDP")
}

/// Seeded random MDP whose last state absorbs and whose every other
/// `(s, a)` row puts mass on some higher-indexed state.
///
/// Every policy therefore reaches the last state almost surely, so the
/// last state is the only recurrent one and all values are finite.
/// Rewards are uniform on `[-1, 1]` away from it, zero on it.
pub fn random_absorbing_mdp(n_states: usize, n_actions: usize, seed: u64) -> MdpSpec {
    assert!(n_states >= 1 && n_actions >= 1);
    let n = n_states;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = vec![0.0; n * n_actions * n];
    let mut r = StateActionTable::zeros(n, n_actions);
    for s in 0..n {
        for a in 0..n_actions {
            let row = &mut t[(s * n_actions + a) * n..(s * n_actions + a + 1) * n];
            if s + 1 == n {
                row[s] = 1.0;
                continue;
            }
            let forward = rng.random_range(s + 1..n);
            row[forward] = rng.random_range(0.1..1.0);
            let extra = rng.random_range(0..=2.min(n - 1));
            for next in sample(&mut rng, n, extra) {
                row[next] += rng.random_range(0.05..1.0);
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            r.set(s, a, rng.random_range(-1.0..=1.0));
        }
    }
    MdpSpec::new(n, n_actions, t, r, uniform_distribution(n), 1.0).expect("constructed valid")
}
