use std::time::Instant;

use rand::RngCore;

use crate::approx::{GaussianPolicy, ProposalNoise};
use crate::arm::{arm_sample, ActionProposal, ArmConfig};
use crate::constraint::ConstraintSpec;
use crate::envs::sample_uniform_feasible;
use crate::error::Result;
use crate::mdp::{ActionBox, ActionVec, EnvState, Environment, Preference};
use crate::projection::{project_onto_feasible, QpCounter};

/// Fresh policy draws per state for the valid action rate.
pub const VALID_RATE_SAMPLES: usize = 100;

/// How the evaluated agent turns a policy into an executed action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionMode {
    Arm(ArmConfig),
    /// One draw, projected when infeasible.
    Project,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub mean_return: f64,
    pub valid_rate: f64,
    pub inference_us: f64,
    /// Projections used while acting.
    pub qp_calls: u64,
    pub steps: u64,
}

/// Fraction of `n` proposals inside the box and `C(s)`.
pub fn valid_fraction<P: ActionProposal + ?Sized>(
    proposal: &P,
    s: &EnvState,
    spec: &ConstraintSpec,
    abox: &ActionBox,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let mut ok = 0;
    for _ in 0..n {
        let a = proposal.propose(rng);
        if abox.contains(&a) && spec.is_feasible(s, &a)? {
            ok += 1;
        }
    }
    Ok(ok as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineStep {
    /// The raw policy draw.
    pub proposed: ActionVec,
    /// What reaches the environment.
    pub action: ActionVec,
    pub qp_used: bool,
}

/// Projection-based action correction: one unconstrained draw, projected
/// onto `C(s)` when infeasible.
pub fn projection_baseline_step<P: ActionProposal + ?Sized>(
    proposal: &P,
    s: &EnvState,
    spec: &ConstraintSpec,
    abox: &ActionBox,
    rng: &mut dyn RngCore,
    qp: &QpCounter,
) -> Result<BaselineStep> {
    let proposed = proposal.propose(rng);
    if abox.contains(&proposed) && spec.is_feasible(s, &proposed)? {
        return Ok(BaselineStep { action: proposed.clone(), proposed, qp_used: false });
    }
    let mut start = proposed.clone();
    abox.clamp(&mut start);
    let rep = project_onto_feasible(spec, s, &start, abox, qp)?;
    Ok(BaselineStep { proposed, action: rep.projected, qp_used: true })
}

/// Rolls out `episodes` episodes at preference `lam`. The valid action rate
/// is the per-step fraction of fresh policy draws that are feasible,
/// averaged over steps. Inference time covers emitting the executed action
/// (including any projection) and excludes the environment step.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    env: &mut dyn Environment,
    lam: Preference,
    episodes: usize,
    mode: ActionMode,
    noise: ProposalNoise,
    rng: &mut dyn RngCore,
) -> Result<EvalResult> {
    let qp = QpCounter::new();
    let spec = env.constraint().clone();
    let abox = env.action_box().clone();
    let (mut total_return, mut valid_sum, mut infer_ns, mut steps) = (0.0, 0.0, 0u128, 0u64);
    for _ in 0..episodes {
        let mut s = env.reset();
        loop {
            let prop = policy.proposal(&s, lam, noise);
            valid_sum += valid_fraction(&prop, &s, &spec, &abox, VALID_RATE_SAMPLES, rng)?;
            let t0 = Instant::now();
            let prop = policy.proposal(&s, lam, noise);
            let a = match mode {
                ActionMode::Arm(cfg) => arm_sample(&prop, &s, &spec, &abox, &cfg, rng, &qp)?.action,
                ActionMode::Project => projection_baseline_step(&prop, &s, &spec, &abox, rng, &qp)?.action,
            };
            infer_ns += t0.elapsed().as_nanos();
            let out = env.step(&a)?;
            total_return += out.reward;
            steps += 1;
            s = out.state;
            if s.done {
                break;
            }
        }
    }
    Ok(EvalResult {
        mean_return: total_return / episodes.max(1) as f64,
        valid_rate: if steps > 0 { valid_sum / steps as f64 } else { 0.0 },
        inference_us: if steps > 0 { infer_ns as f64 / 1e3 / steps as f64 } else { 0.0 },
        qp_calls: qp.get(),
        steps,
    })
}

/// Mean return of the policy that draws uniformly from the feasible set.
pub fn evaluate_uniform_feasible(env: &mut dyn Environment, episodes: usize, rng: &mut dyn RngCore) -> Result<f64> {
    let qp = QpCounter::new();
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset();
        loop {
            let (a, _) = sample_uniform_feasible(env, &s, 10_000, rng, &qp)?;
            let out = env.step(&a)?;
            total += out.reward;
            s = out.state;
            if s.done {
                break;
            }
        }
    }
    Ok(total / episodes.max(1) as f64)
}
