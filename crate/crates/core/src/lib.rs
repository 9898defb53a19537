//! Action-constrained reinforcement learning by acceptance-rejection sampling
//! on an augmented two-objective MDP.
//!
//! Infeasible actions are turned into penalized self-loops, a
//! preference-conditioned soft actor-critic learns over both objectives, and
//! actions are drawn from the policy restricted to the feasible set by
//! rejection, with projection only as a rare fallback.

pub mod approx;
pub mod arm;
pub mod constraint;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod mosac;
pub mod projection;
pub mod replay;
pub mod stats;
pub mod tabular;

pub use arm::{arm_sample, ActionProposal, ArmConfig, ArmResult, Fallback};
pub use constraint::{ConstraintKind, ConstraintSpec, WeightSource};
pub use envs::EnvId;
pub use error::{AcrlError, Result};
pub use mdp::{
    augment_step, scalarize, ActionBox, ActionVec, AugmentedReward, AugmentedStep, AutoMdp, EnvState,
    Environment, PenaltyConfig, Preference, RewardScaler, StepOutcome,
};
pub use projection::{project_onto_feasible, ProjectionReport, QpCounter};
