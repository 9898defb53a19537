//! Acceptance-rejection sampling of feasible actions.
//!
//! The unconstrained policy is the proposal and the target is the policy
//! restricted to `C(s)`, renormalized. With that target and
//! `M = 1 / P_pi(C(s))` the acceptance ratio is exactly one on `C(s)`, so the
//! acceptance test reduces to the membership oracle and `M` is never
//! evaluated.

use rand::RngCore;
use rand_distr::{Distribution, Normal};

use crate::constraint::ConstraintSpec;
use crate::error::{AcrlError, Result};
use crate::mdp::{ActionBox, ActionVec, EnvState};
use crate::projection::{project_onto_feasible, QpCounter};

/// A per-state action distribution that can be sampled.
pub trait ActionProposal {
    fn propose(&self, rng: &mut dyn RngCore) -> ActionVec;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fallback {
    /// Project the last rejected proposal onto `C(s)`.
    Project,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArmConfig {
    pub max_attempts: usize,
    pub fallback: Fallback,
}

impl ArmConfig {
    pub fn new(max_attempts: usize, fallback: Fallback) -> Self {
        assert!(max_attempts >= 1, "max_attempts must be at least 1");
        Self { max_attempts, fallback }
    }

    pub fn training() -> Self {
        Self::new(100, Fallback::Project)
    }

    pub fn evaluation() -> Self {
        Self::new(10, Fallback::Project)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub action: ActionVec,
    pub attempts: usize,
    /// Infeasible proposals in draw order.
    pub rejected: Vec<ActionVec>,
    pub fallback_used: bool,
}

/// `target / (M * proposal)`, the probability of accepting a feasible draw.
pub fn acceptance_probability(policy_density: f64, target_density: f64, m: f64) -> Result<f64> {
    assert!(m > 0.0, "M must be positive");
    let ratio = target_density / (m * policy_density);
    if ratio > 1.0 + 1e-9 || ratio.is_nan() {
        return Err(AcrlError::ProposalNotDominating { ratio });
    }
    Ok(ratio.clamp(0.0, 1.0))
}

/// Draws proposals until one is feasible. Every infeasible draw is recorded
/// in `rejected`. After `max_attempts` failures either projects the last
/// proposal (counted on `qp`) or fails.
pub fn arm_sample<P: ActionProposal + ?Sized>(
    proposal: &P,
    s: &EnvState,
    spec: &ConstraintSpec,
    abox: &ActionBox,
    cfg: &ArmConfig,
    rng: &mut dyn RngCore,
    qp: &QpCounter,
) -> Result<ArmResult> {
    let mut rejected = Vec::new();
    for attempt in 1..=cfg.max_attempts {
        let a = proposal.propose(rng);
        if abox.contains(&a) && spec.is_feasible(s, &a)? {
            return Ok(ArmResult { action: a, attempts: attempt, rejected, fallback_used: false });
        }
        rejected.push(a);
    }
    match cfg.fallback {
        Fallback::Fail => Err(AcrlError::SamplingExhausted { rejected }),
        Fallback::Project => {
            let last = rejected.last().expect("max_attempts >= 1");
            let mut start = last.clone();
            abox.clamp(&mut start);
            let rep = project_onto_feasible(spec, s, &start, abox, qp)?;
            Ok(ArmResult {
                action: rep.projected,
                attempts: cfg.max_attempts,
                rejected,
                fallback_used: true,
            })
        }
    }
}

/// Unsquashed isotropic Gaussian proposal.
#[derive(Clone, Debug)]
pub struct IsotropicGaussian {
    pub mean: Vec<f64>,
    pub sigma: f64,
}

impl ActionProposal for IsotropicGaussian {
    fn propose(&self, rng: &mut dyn RngCore) -> ActionVec {
        let n = Normal::new(0.0, self.sigma).expect("positive sigma");
        ActionVec::new(self.mean.iter().map(|m| m + n.sample(rng)).collect())
    }
}

/// Uniform proposal over an action box, used for warmup.
#[derive(Clone, Debug)]
pub struct UniformBox<'a>(pub &'a ActionBox);

impl ActionProposal for UniformBox<'_> {
    fn propose(&self, rng: &mut dyn RngCore) -> ActionVec {
        use rand::Rng;
        ActionVec::new(
            self.0
                .lo
                .iter()
                .zip(&self.0.hi)
                .map(|(l, h)| if h > l { rng.random_range(*l..=*h) } else { *l })
                .collect(),
        )
    }
}
