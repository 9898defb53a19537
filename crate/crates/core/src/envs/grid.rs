//! 4x4 gridworld with slippery moves and a per-cell action mask.
//!
//! Cells are numbered row-major from the top-left; the goal is the
//! bottom-right cell and entering it pays 1 and ends the episode. Moves that
//! would leave the grid are masked, as are a few interior walls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::infeasible;
use crate::constraint::ConstraintSpec;
use crate::error::Result;
use crate::mdp::{ActionBox, ActionVec, EnvState, Environment, StepOutcome};
use crate::tabular::TabularMdp;

const SIDE: usize = 4;
const CELLS: usize = SIDE * SIDE;
const GOAL: usize = CELLS - 1;
const SLIP: f64 = 0.1;
const EPISODE_STEPS: usize = 50;
/// Up, right, down, left.
const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
/// (cell, action) pairs blocked by walls.
const WALLS: [(usize, usize); 4] = [(5, 1), (6, 3), (9, 2), (13, 0)];

fn target(cell: usize, action: usize) -> Option<usize> {
    let (r, c) = ((cell / SIDE) as isize, (cell % SIDE) as isize);
    let (dr, dc) = MOVES[action];
    let (nr, nc) = (r + dr, c + dc);
    let inside = (0..SIDE as isize).contains(&nr) && (0..SIDE as isize).contains(&nc);
    inside.then(|| nr as usize * SIDE + nc as usize)
}

pub(crate) fn allowed_moves() -> Vec<Vec<bool>> {
    (0..CELLS)
        .map(|cell| {
            (0..MOVES.len())
                .map(|a| target(cell, a).is_some() && !WALLS.contains(&(cell, a)))
                .collect()
        })
        .collect()
}

pub(crate) fn mask_constraint() -> ConstraintSpec {
    ConstraintSpec::action_mask(allowed_moves())
}

pub struct GridTab {
    abox: ActionBox,
    spec: ConstraintSpec,
    rng: ChaCha8Rng,
    cell: usize,
    t: usize,
}

impl GridTab {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            abox: ActionBox::uniform(1, 0.0, (MOVES.len() - 1) as f64),
            spec: mask_constraint(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            cell: 0,
            t: 0,
        };
        env.reset();
        env
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    /// The same dynamics as a finite MDP. The goal absorbs with zero reward;
    /// masked moves keep their in-grid meaning or stay put when off-grid.
    pub fn to_tabular(gamma: f64) -> TabularMdp {
        let na = MOVES.len();
        let mask = allowed_moves();
        let mut p = vec![0.0; CELLS * na * CELLS];
        let mut r = vec![0.0; CELLS * na];
        let mut feasible = vec![false; CELLS * na];
        for s in 0..CELLS {
            for a in 0..na {
                let row = &mut p[(s * na + a) * CELLS..(s * na + a + 1) * CELLS];
                feasible[s * na + a] = mask[s][a];
                if s == GOAL {
                    row[s] = 1.0;
                    continue;
                }
                let next = target(s, a).unwrap_or(s);
                row[next] += 1.0 - SLIP;
                row[s] += SLIP;
                if next == GOAL {
                    r[s * na + a] = 1.0 - SLIP;
                }
            }
        }
        TabularMdp::new(CELLS, na, p, r, feasible, gamma).expect("grid MDP is well formed")
    }

    fn observe(&self, done: bool) -> EnvState {
        EnvState { vector: vec![self.cell as f64], step_index: self.t, done }
    }
}

impl Environment for GridTab {
    fn id(&self) -> &str {
        "GridTab"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_box(&self) -> &ActionBox {
        &self.abox
    }

    fn constraint(&self) -> &ConstraintSpec {
        &self.spec
    }

    fn reward_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn max_episode_steps(&self) -> usize {
        EPISODE_STEPS
    }

    fn state_scale(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![(CELLS - 1) as f64 / 2.0], vec![(CELLS - 1) as f64 / 2.0])
    }

    fn reset(&mut self) -> EnvState {
        self.cell = self.rng.random_range(0..GOAL);
        self.t = 0;
        self.observe(false)
    }

    fn step(&mut self, a: &ActionVec) -> Result<StepOutcome> {
        let s = self.observe(false);
        if !self.spec.is_feasible(&s, a)? {
            return Err(infeasible("GridTab", a));
        }
        let action = a[0] as usize;
        if !self.rng.random_bool(SLIP) {
            self.cell = target(self.cell, action).expect("allowed moves stay on the grid");
        }
        self.t += 1;
        let terminated = self.cell == GOAL;
        let reward = if terminated { 1.0 } else { 0.0 };
        let done = terminated || self.t >= EPISODE_STEPS;
        Ok(StepOutcome { state: self.observe(done), reward, terminated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::vi_constrained;

    #[test]
    fn every_cell_keeps_a_move() {
        for (cell, row) in allowed_moves().iter().enumerate() {
            assert!(row.iter().any(|x| *x), "cell {cell}");
        }
        // Corner 0 may only go right or down.
        assert_eq!(allowed_moves()[0], vec![false, true, true, false]);
    }

    #[test]
    fn fractional_and_masked_actions_rejected() {
        let mut env = GridTab::new(0);
        env.cell = 0;
        assert!(env.step(&ActionVec::new(vec![0.0])).is_err());
        assert!(env.step(&ActionVec::new(vec![1.5])).is_err());
        assert!(env.step(&ActionVec::new(vec![1.0])).is_ok());
    }

    #[test]
    fn tabular_optimum_heads_for_goal() {
        let m = GridTab::to_tabular(0.95);
        let sol = vi_constrained(&m, 1e-12);
        // Next to the goal the greedy move enters it.
        assert_eq!(sol.policy[GOAL - 1], 1);
        assert_eq!(sol.policy[GOAL - SIDE], 2);
        for s in 0..GOAL {
            assert!(m.is_feasible(s, sol.policy[s]));
        }
    }
}
