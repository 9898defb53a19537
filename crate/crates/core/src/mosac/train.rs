use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sample_preference, update, Agent, Minibatch, TrainerConfig, UpdateStats};
use crate::approx::save_nets;
use crate::arm::arm_sample;
use crate::envs::{make, sample_uniform_feasible, EnvId};
use crate::error::{AcrlError, Result};
use crate::harness::eval::{evaluate_policy, projection_baseline_step, ActionMode};
use crate::harness::metrics::MetricsRow;
use crate::mdp::{augment_step, ActionVec, EnvState, Environment, PenaltyConfig, Preference};
use crate::projection::QpCounter;
use crate::replay::{DualReplay, RingBuffer, Transition};

/// Uniform draws tried per warmup step before projecting.
const WARMUP_ATTEMPTS: usize = 10_000;
/// Offset separating the evaluation environment stream from training.
const EVAL_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    /// Acceptance-rejection acting on the augmented MDP with dual replay.
    Aram,
    /// One draw per step, projected onto the feasible set when infeasible.
    ProjectionBaseline,
}

impl Algo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::Aram => "aram",
            Algo::ProjectionBaseline => "projection",
        }
    }
}

impl FromStr for Algo {
    type Err = AcrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aram" | "arm" => Ok(Algo::Aram),
            "projection" | "baseline" | "proj" => Ok(Algo::ProjectionBaseline),
            _ => Err(AcrlError::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Evaluation of the untrained policy.
    pub initial: Option<MetricsRow>,
    pub rows: Vec<MetricsRow>,
    pub env_steps: u64,
    /// Proposals rejected while acting (warmup included).
    pub rejected_total: u64,
    /// Self-loop transitions written to replay.
    pub self_loops_stored: u64,
    /// Executed actions that failed the feasibility check. Stays zero.
    pub executed_infeasible: u64,
    /// Projections used while acting during training.
    pub qp_count: u64,
    pub wall_ms: f64,
}

impl TrainLog {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub log: TrainLog,
    pub agent: Agent,
}

/// Trains on a freshly built environment; evaluation runs on a second
/// instance with its own seed so that it never perturbs training dynamics.
pub fn train(env_id: EnvId, cfg: &TrainerConfig, algo: Algo, seed: u64, total_steps: u64) -> Result<TrainOutput> {
    let mut env = make(env_id, seed);
    let mut eval_env = make(env_id, seed.wrapping_add(EVAL_SEED_OFFSET));
    train_env(&mut *env, &mut *eval_env, cfg, algo, seed, total_steps)
}

enum Replay {
    Dual(DualReplay),
    Single(RingBuffer<Transition>),
}

impl Replay {
    fn real_len(&self) -> usize {
        match self {
            Replay::Dual(d) => d.d_r.len(),
            Replay::Single(b) => b.len(),
        }
    }

    fn eta(&self) -> f64 {
        match self {
            Replay::Dual(d) => d.eta(),
            Replay::Single(_) => 0.0,
        }
    }
}

struct Acted {
    action: ActionVec,
    rejected: Vec<ActionVec>,
    /// What the critic sees for the executed step, if not `action`.
    stored_action: Option<ActionVec>,
}

pub fn train_env(
    env: &mut dyn Environment,
    eval_env: &mut dyn Environment,
    cfg: &TrainerConfig,
    algo: Algo,
    seed: u64,
    total_steps: u64,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(EVAL_SEED_OFFSET));
    let mut agent = Agent::for_env(env, cfg, &mut rng);
    let spec = env.constraint().clone();
    let abox = env.action_box().clone();
    let penalty = PenaltyConfig::new(cfg.k, cfg.gamma)?;
    let qp = QpCounter::new();
    let mut replay = match algo {
        Algo::Aram => Replay::Dual(DualReplay::new(cfg.buffer_capacity, cfg.eta)),
        Algo::ProjectionBaseline => Replay::Single(RingBuffer::new(cfg.buffer_capacity)),
    };
    let eval_mode = match algo {
        Algo::Aram => ActionMode::Arm(cfg.eval_arm),
        Algo::ProjectionBaseline => ActionMode::Project,
    };
    let mut log = TrainLog::default();
    let mut losses = LossAccumulator::default();

    let evaluate = |agent: &Agent, eval_env: &mut dyn Environment, rng: &mut ChaCha8Rng, step: u64| {
        evaluate_policy(&agent.policy, eval_env, cfg.eval_preference, cfg.eval_episodes, eval_mode, cfg.noise, rng)
            .map(|r| (step, r))
    };

    if cfg.eval_interval > 0 && total_steps > 0 {
        let (_, r) = evaluate(&agent, eval_env, &mut eval_rng, 0)?;
        log.initial = Some(MetricsRow {
            step: 0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            eval_return: r.mean_return,
            valid_action_rate: r.valid_rate,
            qp_count_cum: 0,
            eta: replay.eta(),
            critic_loss: f64::NAN,
            policy_loss: f64::NAN,
            per_action_inference_us: r.inference_us,
        });
    }

    let mut s = env.reset();
    let mut lam = sample_preference(&mut rng);
    for step in 0..total_steps {
        let acted = act(env, &agent, cfg, algo, &s, lam, step, &mut rng, &qp, &spec, &abox)?;
        log.rejected_total += acted.rejected.len() as u64;

        if let Replay::Dual(d) = &mut replay {
            for a in acted.rejected.iter().take(cfg.max_rejected_stored) {
                let out = augment_step(env, &spec, &penalty, &s, a)?;
                debug_assert!(out.is_self_loop());
                d.push(transition(&s, a.clone(), &out, lam));
                log.self_loops_stored += 1;
            }
        }

        let out = augment_step(env, &spec, &penalty, &s, &acted.action)?;
        if out.is_self_loop() {
            log.executed_infeasible += 1;
        } else {
            log.env_steps += 1;
        }
        match &mut replay {
            Replay::Dual(d) => {
                d.push(transition(&s, acted.action.clone(), &out, lam));
                d.tick_decay();
            }
            Replay::Single(b) => {
                let mut t = transition(&s, acted.stored_action.clone().unwrap_or(acted.action.clone()), &out, lam);
                if acted.stored_action.is_some() {
                    t.c = -cfg.k;
                }
                b.push(t);
            }
        }
        if out.done {
            s = env.reset();
            lam = sample_preference(&mut rng);
        } else {
            s = out.state;
        }

        if step + 1 >= cfg.warmup_steps as u64 && replay.real_len() > 0 {
            for _ in 0..cfg.gradient_steps {
                let stats = gradient_step(&mut agent, cfg, &replay, &mut rng)?;
                losses.add(stats);
            }
        }

        let done_steps = step + 1;
        if cfg.eval_interval > 0 && done_steps % cfg.eval_interval as u64 == 0 {
            let (_, r) = evaluate(&agent, eval_env, &mut eval_rng, done_steps)?;
            let (cl, pl) = losses.take();
            log.rows.push(MetricsRow {
                step: done_steps,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                eval_return: r.mean_return,
                valid_action_rate: r.valid_rate,
                qp_count_cum: qp.get(),
                eta: replay.eta(),
                critic_loss: cl,
                policy_loss: pl,
                per_action_inference_us: r.inference_us,
            });
        }
    }
    log.qp_count = qp.get();
    log.wall_ms = started.elapsed().as_secs_f64() * 1e3;

    if let Some(path) = &cfg.checkpoint {
        let c = &agent.critic;
        save_nets(path, &[&agent.policy.trunk, &c.online[0], &c.online[1], &c.target[0], &c.target[1]])?;
    }
    Ok(TrainOutput { log, agent })
}

#[allow(clippy::too_many_arguments)]
fn act(
    env: &dyn Environment,
    agent: &Agent,
    cfg: &TrainerConfig,
    algo: Algo,
    s: &EnvState,
    lam: Preference,
    step: u64,
    rng: &mut ChaCha8Rng,
    qp: &QpCounter,
    spec: &crate::constraint::ConstraintSpec,
    abox: &crate::mdp::ActionBox,
) -> Result<Acted> {
    if step < cfg.warmup_steps as u64 {
        let (action, rejected) = sample_uniform_feasible(env, s, WARMUP_ATTEMPTS, rng, qp)?;
        return Ok(Acted { action, rejected, stored_action: None });
    }
    let prop = agent.policy.proposal(s, lam, cfg.noise);
    match algo {
        Algo::Aram => {
            let res = arm_sample(&prop, s, spec, abox, &cfg.arm, rng, qp)?;
            Ok(Acted { action: res.action, rejected: res.rejected, stored_action: None })
        }
        Algo::ProjectionBaseline => {
            let st = projection_baseline_step(&prop, s, spec, abox, rng, qp)?;
            let stored_action = st.qp_used.then(|| st.proposed.clone());
            Ok(Acted { action: st.action, rejected: Vec::new(), stored_action })
        }
    }
}

fn transition(s: &EnvState, a: ActionVec, out: &crate::mdp::AugmentedStep, lam: Preference) -> Transition {
    let [r, c] = out.reward.as_array();
    Transition { s: s.clone(), a, r, c, s_next: out.state.clone(), done: out.terminated, lam }
}

fn gradient_step(agent: &mut Agent, cfg: &TrainerConfig, replay: &Replay, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
    let mb = {
        let batch: Vec<&Transition> = match replay {
            Replay::Dual(d) => d.sample_mixed(cfg.batch, rng)?,
            Replay::Single(b) => (0..cfg.batch).map(|_| b.sample(rng)).collect(),
        };
        let lams: Vec<Preference> = (0..batch.len()).map(|_| sample_preference(rng)).collect();
        Minibatch::new(agent.feat(), &batch, &lams)
    };
    update(agent, cfg, &mb, rng)
}

#[derive(Default)]
struct LossAccumulator {
    critic: f64,
    policy: f64,
    n: usize,
}

impl LossAccumulator {
    fn add(&mut self, s: UpdateStats) {
        self.critic += s.critic_loss;
        self.policy += s.policy_loss;
        self.n += 1;
    }

    fn take(&mut self) -> (f64, f64) {
        let out = if self.n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (self.critic / self.n as f64, self.policy / self.n as f64)
        };
        *self = Self::default();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainerConfig {
        TrainerConfig {
            hidden: vec![16, 16],
            batch: 32,
            warmup_steps: 50,
            eval_interval: 100,
            eval_episodes: 1,
            buffer_capacity: 10_000,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn zero_steps_is_empty() {
        let out = train(EnvId::BallReach, &tiny(), Algo::Aram, 0, 0).unwrap();
        assert!(out.log.rows.is_empty());
        assert!(out.log.initial.is_none());
        assert_eq!(out.agent.updates(), 0);
    }

    #[test]
    fn short_run_is_deterministic_and_never_violates() {
        let a = train(EnvId::BallReach, &tiny(), Algo::Aram, 3, 200).unwrap();
        let b = train(EnvId::BallReach, &tiny(), Algo::Aram, 3, 200).unwrap();
        assert_eq!(a.log.rows.len(), 2);
        assert_eq!(a.log.executed_infeasible, 0);
        assert_eq!(a.log.env_steps, 200);
        assert_eq!(a.agent.updates(), 151);
        for (x, y) in a.log.rows.iter().zip(&b.log.rows) {
            assert_eq!(x.eval_return, y.eval_return);
            assert_eq!(x.critic_loss, y.critic_loss);
        }
        assert!(a.log.self_loops_stored > 0);
    }

    #[test]
    fn baseline_runs_on_every_environment() {
        for id in EnvId::ALL {
            let out = train(id, &tiny(), Algo::ProjectionBaseline, 1, 120).unwrap();
            assert_eq!(out.log.executed_infeasible, 0, "{id}");
            assert_eq!(out.log.self_loops_stored, 0);
        }
    }

    #[test]
    fn algo_names_parse() {
        assert_eq!("ARAM".parse::<Algo>().unwrap(), Algo::Aram);
        assert_eq!("projection".parse::<Algo>().unwrap(), Algo::ProjectionBaseline);
        assert!("dqn".parse::<Algo>().is_err());
    }
}
