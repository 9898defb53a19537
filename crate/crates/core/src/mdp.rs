//! Action-constrained MDP abstraction and its augmented two-objective
//! counterpart.
//!
//! An infeasible action never reaches the wrapped environment. Instead the
//! augmented MDP answers with a self-loop: the successor state is the input
//! state and the reward vector is `[0, -K]`. Feasible actions are forwarded
//! unchanged and earn `[r, 0]` with `r` rescaled into `[0, 1]`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintSpec;
use crate::error::{AcrlError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub vector: Vec<f64>,
    pub step_index: usize,
    pub done: bool,
}

impl EnvState {
    pub fn new(vector: Vec<f64>) -> Self {
        Self { vector, step_index: 0, done: false }
    }

    /// Same Markov state, ignoring episode bookkeeping. Compares bit patterns
    /// so that self-loop exactness is checked without float tolerance.
    pub fn same_state(&self, other: &EnvState) -> bool {
        self.vector.len() == other.vector.len()
            && self.vector.iter().zip(&other.vector).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionVec(pub Vec<f64>);

impl ActionVec {
    pub fn new(components: Vec<f64>) -> Self {
        Self(components)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ActionVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ActionVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ActionVec {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Compact action box `[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h), "inverted action box");
        Self { lo, hi }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim()
            && a.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn clamp(&self, a: &mut [f64]) {
        for (x, (l, h)) in a.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *x = x.clamp(*l, *h);
        }
    }

    /// Maps `[lo, hi]` affinely onto `[-1, 1]`.
    pub fn to_unit(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| if h > l { 2.0 * (x - l) / (h - l) - 1.0 } else { 0.0 })
            .collect()
    }

    pub fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| l + (h - l) * (t + 1.0) * 0.5)
            .collect()
    }

    pub fn as_constraint(&self) -> ConstraintSpec {
        ConstraintSpec::boxed(self.lo.clone(), self.hi.clone())
    }
}

/// Two-objective reward `[r, c]`: rescaled task reward and violation penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedReward {
    pub r: f64,
    pub c: f64,
}

impl AugmentedReward {
    pub fn feasible(r: f64) -> Self {
        Self { r, c: 0.0 }
    }

    pub fn penalty(k: f64) -> Self {
        Self { r: 0.0, c: -k }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.r, self.c]
    }
}

/// Point on the 2-simplex weighting (task reward, violation penalty).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub lambda_r: f64,
    pub lambda_c: f64,
}

impl Preference {
    /// `[lambda_r, 1 - lambda_r]`.
    pub fn new(lambda_r: f64) -> Self {
        assert!((0.0..=1.0).contains(&lambda_r), "lambda_r outside [0,1]: {lambda_r}");
        Self { lambda_r, lambda_c: 1.0 - lambda_r }
    }

    pub fn try_from_pair(lambda_r: f64, lambda_c: f64) -> Result<Self> {
        if lambda_r < 0.0 || lambda_c < 0.0 || (lambda_r + lambda_c - 1.0).abs() > 1e-12 {
            return Err(AcrlError::Config(format!(
                "preference [{lambda_r}, {lambda_c}] is not on the simplex"
            )));
        }
        Ok(Self { lambda_r, lambda_c })
    }

    /// Default evaluation preference.
    pub fn eval_default() -> Self {
        Self { lambda_r: 0.9, lambda_c: 0.1 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.lambda_r, self.lambda_c]
    }
}

/// `<lambda, q>`
pub fn scalarize(q: [f64; 2], lam: Preference) -> f64 {
    lam.lambda_r * q[0] + lam.lambda_c * q[1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Penalty magnitude `K` paid per infeasible action.
    pub k: f64,
    pub gamma: f64,
}

impl PenaltyConfig {
    pub fn new(k: f64, gamma: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(AcrlError::Config(format!("penalty K must be positive, got {k}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(AcrlError::Config(format!("gamma must lie in (0,1), got {gamma}")));
        }
        Ok(Self { k, gamma })
    }

    /// Discounted value of paying the penalty forever.
    pub fn self_loop_value(&self, lam: Preference) -> f64 {
        lam.lambda_c * -self.k / (1.0 - self.gamma)
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { k: 0.1, gamma: 0.99 }
    }
}

/// Affine map of `[r_min, r_max]` onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    pub r_min: f64,
    pub r_max: f64,
}

impl RewardScaler {
    pub fn new(r_min: f64, r_max: f64) -> Self {
        assert!(r_max > r_min, "empty reward range");
        Self { r_min, r_max }
    }

    pub fn scale(&self, r: f64) -> f64 {
        ((r - self.r_min) / (self.r_max - self.r_min)).clamp(0.0, 1.0)
    }

    pub fn unscale(&self, r: f64) -> f64 {
        self.r_min + r * (self.r_max - self.r_min)
    }
}

/// Result of one base-environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    /// True terminal (no bootstrap). Time-limit truncation is reported only
    /// through `state.done`.
    pub terminated: bool,
}

/// A base environment of the action-constrained MDP. Implementations own
/// their random stream so that agent-side sampling never perturbs dynamics.
pub trait Environment: Send {
    fn id(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_box(&self) -> &ActionBox;
    fn constraint(&self) -> &ConstraintSpec;
    /// Bounds on the per-step reward, used to rescale into `[0, 1]`.
    fn reward_range(&self) -> (f64, f64);
    fn max_episode_steps(&self) -> usize;
    /// Center and half-width used to normalize states for function
    /// approximators.
    fn state_scale(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.state_dim()], vec![1.0; self.state_dim()])
    }
    fn reset(&mut self) -> EnvState;
    /// Advances the dynamics. Infeasible actions are an error.
    fn step(&mut self, a: &ActionVec) -> Result<StepOutcome>;

    fn scaler(&self) -> RewardScaler {
        let (lo, hi) = self.reward_range();
        RewardScaler::new(lo, hi)
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn action_box(&self) -> &ActionBox {
        (**self).action_box()
    }
    fn constraint(&self) -> &ConstraintSpec {
        (**self).constraint()
    }
    fn reward_range(&self) -> (f64, f64) {
        (**self).reward_range()
    }
    fn max_episode_steps(&self) -> usize {
        (**self).max_episode_steps()
    }
    fn state_scale(&self) -> (Vec<f64>, Vec<f64>) {
        (**self).state_scale()
    }
    fn reset(&mut self) -> EnvState {
        (**self).reset()
    }
    fn step(&mut self, a: &ActionVec) -> Result<StepOutcome> {
        (**self).step(a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedStep {
    pub state: EnvState,
    pub reward: AugmentedReward,
    /// Unscaled base reward; `None` for self-loops.
    pub raw_reward: Option<f64>,
    /// Episode over (terminal or out of step budget).
    pub done: bool,
    /// True terminal, used to stop bootstrapping.
    pub terminated: bool,
}

impl AugmentedStep {
    pub fn is_self_loop(&self) -> bool {
        self.raw_reward.is_none()
    }
}

/// One transition of the augmented MDP. `s` must be the environment's current
/// state. A self-loop returns `s` with the step counter advanced by one (it
/// consumes episode budget) and leaves the environment untouched.
pub fn augment_step<E: Environment + ?Sized>(
    env: &mut E,
    spec: &ConstraintSpec,
    cfg: &PenaltyConfig,
    s: &EnvState,
    a: &ActionVec,
) -> Result<AugmentedStep> {
    let step_index = s.step_index + 1;
    if !spec.is_feasible(s, a)? {
        let mut state = s.clone();
        state.step_index = step_index;
        state.done = false;
        return Ok(AugmentedStep {
            state,
            reward: AugmentedReward::penalty(cfg.k),
            raw_reward: None,
            done: false,
            terminated: false,
        });
    }
    let out = env.step(a)?;
    let mut state = out.state;
    state.step_index = step_index;
    state.done = out.terminated || step_index >= env.max_episode_steps();
    Ok(AugmentedStep {
        done: state.done,
        state,
        reward: AugmentedReward::feasible(env.scaler().scale(out.reward)),
        raw_reward: Some(out.reward),
        terminated: out.terminated,
    })
}

/// Convenience wrapper that owns the environment and audits feasibility.
pub struct AutoMdp<E: Environment> {
    env: E,
    spec: ConstraintSpec,
    penalty: PenaltyConfig,
    state: EnvState,
    self_loops: u64,
    env_steps: u64,
    violations: u64,
}

impl<E: Environment> AutoMdp<E> {
    pub fn new(mut env: E, penalty: PenaltyConfig) -> Self {
        let spec = env.constraint().clone();
        let state = env.reset();
        Self { env, spec, penalty, state, self_loops: 0, env_steps: 0, violations: 0 }
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn reset(&mut self) -> &EnvState {
        self.state = self.env.reset();
        &self.state
    }

    pub fn step(&mut self, a: &ActionVec) -> Result<AugmentedStep> {
        let feasible = self.spec.is_feasible(&self.state, a)?;
        let out = augment_step(&mut self.env, &self.spec, &self.penalty, &self.state, a)?;
        if out.is_self_loop() {
            self.self_loops += 1;
        } else {
            self.env_steps += 1;
            if !feasible {
                self.violations += 1;
            }
        }
        self.state = out.state.clone();
        Ok(out)
    }

    pub fn self_loops(&self) -> u64 {
        self.self_loops
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Infeasible actions that reached the base dynamics. Always zero.
    pub fn violations(&self) -> u64 {
        self.violations
    }
}
