//! Point mass steered toward a goal with per-step displacement limited to a
//! disk of radius sqrt(0.05), the Reacher action constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::infeasible;
use crate::constraint::ConstraintSpec;
use crate::error::Result;
use crate::mdp::{ActionBox, ActionVec, EnvState, Environment, StepOutcome};

pub const REACH_RADIUS_SQ: f64 = 0.05;
const EPISODE_STEPS: usize = 50;
const GOAL_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallReachState {
    pub position: [f64; 2],
    pub goal: [f64; 2],
}

impl BallReachState {
    pub fn distance(&self) -> f64 {
        ((self.position[0] - self.goal[0]).powi(2) + (self.position[1] - self.goal[1]).powi(2)).sqrt()
    }
}

pub struct BallReach {
    abox: ActionBox,
    spec: ConstraintSpec,
    rng: ChaCha8Rng,
    state: BallReachState,
    t: usize,
}

impl BallReach {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            abox: ActionBox::uniform(2, -1.0, 1.0),
            spec: ConstraintSpec::ball(2, REACH_RADIUS_SQ),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: BallReachState { position: [0.0; 2], goal: [0.0; 2] },
            t: 0,
        };
        env.reset();
        env
    }

    /// Overrides position and goal, restarting the step counter.
    pub fn set_state(&mut self, state: BallReachState) -> EnvState {
        self.state = state;
        self.t = 0;
        self.observe(false)
    }

    pub fn inner(&self) -> BallReachState {
        self.state
    }

    fn observe(&self, done: bool) -> EnvState {
        let BallReachState { position, goal } = self.state;
        EnvState { vector: vec![position[0], position[1], goal[0], goal[1]], step_index: self.t, done }
    }
}

impl Environment for BallReach {
    fn id(&self) -> &str {
        "BallReach"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_box(&self) -> &ActionBox {
        &self.abox
    }

    fn constraint(&self) -> &ConstraintSpec {
        &self.spec
    }

    fn reward_range(&self) -> (f64, f64) {
        (-2.0 * std::f64::consts::SQRT_2, 0.0)
    }

    fn max_episode_steps(&self) -> usize {
        EPISODE_STEPS
    }

    fn reset(&mut self) -> EnvState {
        loop {
            let mut draw = || [self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)];
            let position = draw();
            let goal = draw();
            self.state = BallReachState { position, goal };
            if self.state.distance() > GOAL_TOLERANCE {
                break;
            }
        }
        self.t = 0;
        self.observe(false)
    }

    fn step(&mut self, a: &ActionVec) -> Result<StepOutcome> {
        let s = self.observe(false);
        if !self.abox.contains(a) || !self.spec.is_feasible(&s, a)? {
            return Err(infeasible("BallReach", a));
        }
        for (p, d) in self.state.position.iter_mut().zip(a.iter()) {
            *p = (*p + d).clamp(-1.0, 1.0);
        }
        self.t += 1;
        let dist = self.state.distance();
        let terminated = dist < GOAL_TOLERANCE;
        let done = terminated || self.t >= EPISODE_STEPS;
        Ok(StepOutcome { state: self.observe(done), reward: -dist, terminated })
    }
}
