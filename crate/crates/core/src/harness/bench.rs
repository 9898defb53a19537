use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx::{Featurizer, GaussianPolicy, ProposalNoise};
use crate::arm::{arm_sample, ActionProposal, ArmConfig, Fallback};
use crate::envs::{make, EnvId};
use crate::error::Result;
use crate::mdp::Preference;
use crate::projection::QpCounter;
use crate::stats::ks_two_sample;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmBench {
    pub env: String,
    pub samples: usize,
    /// Accepted draws over all proposals.
    pub acceptance_rate: f64,
    /// Per-dimension two-sample KS against filtered draws.
    pub ks_statistic: Vec<f64>,
    pub ks_p_value: Vec<f64>,
    pub infeasible_outputs: usize,
    pub fallbacks: usize,
}

/// Draws `samples` actions with acceptance-rejection from an untrained
/// policy at the first state of `env` and compares them with an independent
/// filtered sample of the same proposal.
pub fn bench_arm(env_id: EnvId, seed: u64, samples: usize) -> Result<ArmBench> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = make(env_id, seed);
    let s = env.reset();
    let spec = env.constraint().clone();
    let abox = env.action_box().clone();
    let policy = GaussianPolicy::new(Featurizer::for_env(&*env), &[32, 32], &mut rng);
    let prop = policy.proposal(&s, Preference::eval_default(), ProposalNoise::Gaussian);
    let cfg = ArmConfig::new(10_000, Fallback::Project);
    let qp = QpCounter::new();

    let (mut arm, mut proposals, mut infeasible, mut fallbacks) = (Vec::with_capacity(samples), 0usize, 0, 0);
    for _ in 0..samples {
        let r = arm_sample(&prop, &s, &spec, &abox, &cfg, &mut rng, &qp)?;
        proposals += r.attempts;
        fallbacks += r.fallback_used as usize;
        if !spec.is_feasible(&s, &r.action)? {
            infeasible += 1;
        }
        arm.push(r.action);
    }
    let mut filtered = Vec::with_capacity(samples);
    let mut guard = 0usize;
    while filtered.len() < samples && guard < samples.saturating_mul(10_000) {
        guard += 1;
        let a = prop.propose(&mut rng);
        if abox.contains(&a) && spec.is_feasible(&s, &a)? {
            filtered.push(a);
        }
    }
    let (mut ks_statistic, mut ks_p_value) = (Vec::new(), Vec::new());
    for d in 0..abox.dim() {
        let x: Vec<f64> = arm.iter().map(|a| a[d]).collect();
        let y: Vec<f64> = filtered.iter().map(|a| a[d]).collect();
        let ks = ks_two_sample(&x, &y);
        ks_statistic.push(ks.statistic);
        ks_p_value.push(ks.p_value);
    }
    Ok(ArmBench {
        env: env_id.to_string(),
        samples,
        acceptance_rate: samples as f64 / proposals.max(1) as f64,
        ks_statistic,
        ks_p_value,
        infeasible_outputs: infeasible,
        fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_reach_bench_is_feasible() {
        let b = bench_arm(EnvId::BallReach, 0, 2000).unwrap();
        assert_eq!(b.infeasible_outputs, 0);
        assert!(b.acceptance_rate > 0.0 && b.acceptance_rate <= 1.0);
        assert_eq!(b.ks_statistic.len(), 2);
    }
}
