//! Desk-scale constrained environments.

mod ball_reach;
mod bss;
mod grid;
mod nsfnet;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

pub use ball_reach::{BallReach, BallReachState, REACH_RADIUS_SQ};
pub use bss::{Bss, BssConfig, BssState};
pub use grid::GridTab;
pub use nsfnet::{nsfnet_reward, NsfState, Nsfnet, NSF_LINK_CAPACITY, NSF_ROUTING};

use crate::arm::{ActionProposal, UniformBox};
use crate::constraint::ConstraintSpec;
use crate::error::{AcrlError, Result};
use crate::mdp::{ActionVec, EnvState, Environment};
use crate::projection::{project_onto_feasible, QpCounter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvId {
    Bss3z,
    Bss5z,
    NsfnetLite,
    BallReach,
    GridTab,
}

impl EnvId {
    pub const ALL: [EnvId; 5] =
        [EnvId::Bss3z, EnvId::Bss5z, EnvId::NsfnetLite, EnvId::BallReach, EnvId::GridTab];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Bss3z => "BSS3z",
            EnvId::Bss5z => "BSS5z",
            EnvId::NsfnetLite => "NSFnetLite",
            EnvId::BallReach => "BallReach",
            EnvId::GridTab => "GridTab",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = AcrlError;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| AcrlError::UnknownEnv(s.to_string()))
    }
}

/// Builds an environment whose random stream is seeded with `seed`.
pub fn make(id: EnvId, seed: u64) -> Box<dyn Environment> {
    match id {
        EnvId::Bss3z => Box::new(Bss::new(BssConfig::bss3z(), seed)),
        EnvId::Bss5z => Box::new(Bss::new(BssConfig::bss5z(), seed)),
        EnvId::NsfnetLite => Box::new(Nsfnet::new(seed)),
        EnvId::BallReach => Box::new(BallReach::new(seed)),
        EnvId::GridTab => Box::new(GridTab::new(seed)),
    }
}

pub fn make_by_name(name: &str, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(make(name.parse()?, seed))
}

/// The feasible-set description used by each environment.
pub fn constraint_spec_of(id: EnvId) -> ConstraintSpec {
    match id {
        EnvId::Bss3z => ConstraintSpec::signed_sum_band(3, 90.0, 5.0, 40.0),
        EnvId::Bss5z => ConstraintSpec::signed_sum_band(5, 150.0, 5.0, 40.0),
        EnvId::NsfnetLite => nsfnet::routing_constraint(),
        EnvId::BallReach => ConstraintSpec::ball(2, REACH_RADIUS_SQ),
        EnvId::GridTab => grid::mask_constraint(),
    }
}

/// Uniform draw over the action set of `env` (integer indices for discrete
/// environments).
pub fn uniform_action(env: &dyn Environment, rng: &mut dyn RngCore) -> ActionVec {
    let mut a = UniformBox(env.action_box()).propose(rng);
    if env.id() == EnvId::GridTab.as_str() {
        a[0] = a[0].round();
    }
    a
}

/// Rejection sampling of [`uniform_action`] restricted to `C(s)`. Returns the
/// accepted action and the rejected draws; after `max_attempts` failures the
/// last draw is projected (counted on `qp`).
pub fn sample_uniform_feasible(
    env: &dyn Environment,
    s: &EnvState,
    max_attempts: usize,
    rng: &mut dyn RngCore,
    qp: &QpCounter,
) -> Result<(ActionVec, Vec<ActionVec>)> {
    let spec = env.constraint();
    let mut rejected = Vec::new();
    for _ in 0..max_attempts.max(1) {
        let a = uniform_action(env, rng);
        if spec.is_feasible(s, &a)? {
            return Ok((a, rejected));
        }
        rejected.push(a);
    }
    let last = rejected.last().expect("at least one attempt");
    let rep = project_onto_feasible(spec, s, last, env.action_box(), qp)?;
    Ok((rep.projected, rejected))
}

pub(crate) fn infeasible(env: &str, a: &ActionVec) -> AcrlError {
    AcrlError::InfeasibleAction { env: env.to_string(), action: a.0.clone() }
}
