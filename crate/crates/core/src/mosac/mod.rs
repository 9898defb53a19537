//! Preference-conditioned soft actor-critic on the augmented MDP.
//!
//! The critic regresses the scalarized soft target
//! `<lam, r~> + gamma (1 - done) (min_j <lam, Q'_j(s', a')> - alpha log pi(a'|s'))`
//! with both twins, and the actor minimizes
//! `alpha log pi(a|s) - min_j <lam, Q_j(s, a)>` through the reparameterized
//! sample.

mod train;

pub use train::{train, train_env, Algo, TrainLog, TrainOutput};

use std::path::PathBuf;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::{Dirichlet, Distribution, StandardNormal};

use crate::approx::{Adam, Featurizer, GaussianPolicy, Grads, PolicyBatch, ProposalNoise, VectorCritic};
use crate::arm::ArmConfig;
use crate::error::{AcrlError, Result};
use crate::mdp::{Environment, Preference};
use crate::replay::{EtaSchedule, Transition};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub target_update_interval: usize,
    pub gradient_steps: usize,
    pub alpha: f64,
    /// Penalty per infeasible action.
    pub k: f64,
    pub eta: EtaSchedule,
    pub buffer_capacity: usize,
    pub eval_preference: Preference,
    /// Uniformly drawn feasible actions before learning starts.
    pub warmup_steps: usize,
    /// Rejected proposals stored per environment step.
    pub max_rejected_stored: usize,
    pub arm: ArmConfig,
    pub eval_arm: ArmConfig,
    pub noise: ProposalNoise,
    /// Steps between evaluations; 0 disables evaluation.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            batch: 256,
            hidden: vec![256, 256],
            target_update_interval: 1,
            gradient_steps: 1,
            alpha: 0.2,
            k: 0.1,
            eta: EtaSchedule::default(),
            buffer_capacity: 1_000_000,
            eval_preference: Preference::eval_default(),
            warmup_steps: 1000,
            max_rejected_stored: 8,
            arm: ArmConfig::training(),
            eval_arm: ArmConfig::evaluation(),
            noise: ProposalNoise::Gaussian,
            eval_interval: 5000,
            eval_episodes: 10,
            checkpoint: None,
        }
    }
}

impl TrainerConfig {
    /// Laptop-scale settings used by the test suite. The lower temperature
    /// lets the soft-optimal policy concentrate on small feasible sets.
    pub fn desk() -> Self {
        Self { hidden: vec![64, 64], batch: 128, alpha: 0.05, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AcrlError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0,1)");
        }
        if !(self.tau >= 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in [0,1]");
        }
        if !(self.lr > 0.0) || self.batch == 0 || self.hidden.is_empty() {
            return bad("lr, batch and hidden widths must be positive");
        }
        if self.target_update_interval == 0 {
            return bad("target_update_interval must be positive");
        }
        if !(self.alpha >= 0.0) || !(self.k > 0.0) {
            return bad("alpha must be non-negative and K positive");
        }
        if !(0.0..=1.0).contains(&self.eta.eta0)
            || !(self.eta.decay_factor > 0.0 && self.eta.decay_factor <= 1.0)
            || self.eta.decay_interval == 0
        {
            return bad("invalid eta schedule");
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be positive when evaluating");
        }
        Ok(())
    }
}

/// `lambda ~ Dirichlet(1, 1)`, i.e. `lambda_r ~ U(0, 1)`.
pub fn sample_preference<R: Rng + ?Sized>(rng: &mut R) -> Preference {
    let d = Dirichlet::new([1.0, 1.0]).expect("valid concentration");
    let [lr, _] = d.sample(rng);
    Preference::new(lr)
}

/// Per-transition soft target. `q_next` holds both target heads at
/// `(s', a')`.
pub fn scalarized_target(
    reward: [f64; 2],
    lam: Preference,
    gamma: f64,
    done: bool,
    q_next: [[f64; 2]; 2],
    alpha: f64,
    logp_next: f64,
) -> f64 {
    let now = crate::mdp::scalarize(reward, lam);
    if done {
        return now;
    }
    let q = crate::mdp::scalarize(q_next[0], lam).min(crate::mdp::scalarize(q_next[1], lam));
    now + gamma * (q - alpha * logp_next)
}

/// Learner state: actor, twin critics with targets, optimizers.
#[derive(Clone, Debug)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub critic: VectorCritic,
    policy_opt: Adam,
    critic_opt: [Adam; 2],
    updates: usize,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(feat: Featurizer, cfg: &TrainerConfig, rng: &mut R) -> Self {
        let critic = VectorCritic::new(feat.critic_input_dim(), &cfg.hidden, rng);
        let policy = GaussianPolicy::new(feat, &cfg.hidden, rng);
        Self {
            policy_opt: Adam::new(&policy.trunk, cfg.lr),
            critic_opt: [Adam::new(&critic.online[0], cfg.lr), Adam::new(&critic.online[1], cfg.lr)],
            policy,
            critic,
            updates: 0,
        }
    }

    pub fn for_env<R: Rng + ?Sized>(env: &dyn Environment, cfg: &TrainerConfig, rng: &mut R) -> Self {
        Self::new(Featurizer::for_env(env), cfg, rng)
    }

    pub fn feat(&self) -> &Featurizer {
        &self.policy.feat
    }

    pub fn updates(&self) -> usize {
        self.updates
    }
}

/// A minibatch in network coordinates with one preference per row.
#[derive(Clone, Debug)]
pub struct Minibatch {
    pub s: Vec<Vec<f64>>,
    /// Actions mapped to `[-1, 1]`.
    pub t: Array2<f64>,
    pub reward: Vec<[f64; 2]>,
    pub s_next: Vec<Vec<f64>>,
    pub done: Vec<bool>,
    pub lam: Vec<Preference>,
}

impl Minibatch {
    pub fn new(feat: &Featurizer, batch: &[&Transition], lam: &[Preference]) -> Self {
        assert_eq!(batch.len(), lam.len());
        let da = feat.action_dim();
        let mut t = Array2::zeros((batch.len(), da));
        for (i, tr) in batch.iter().enumerate() {
            let u = feat.abox.to_unit(&tr.a);
            for (j, x) in u.iter().enumerate() {
                t[[i, j]] = x.clamp(-1.0, 1.0);
            }
        }
        Self {
            s: batch.iter().map(|tr| tr.s.vector.clone()).collect(),
            t,
            reward: batch.iter().map(|tr| [tr.r, tr.c]).collect(),
            s_next: batch.iter().map(|tr| tr.s_next.vector.clone()).collect(),
            done: batch.iter().map(|tr| tr.done).collect(),
            lam: lam.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn states(&self) -> Vec<&[f64]> {
        self.s.iter().map(Vec::as_slice).collect()
    }

    fn next_states(&self) -> Vec<&[f64]> {
        self.s_next.iter().map(Vec::as_slice).collect()
    }

    pub fn critic_input(&self, feat: &Featurizer) -> Array2<f64> {
        feat.critic_batch(&self.states(), self.t.view(), &self.lam)
    }

    pub fn policy_input(&self, feat: &Featurizer) -> Array2<f64> {
        feat.policy_batch(&self.states(), &self.lam)
    }
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn scalarize_rows(q: &Array2<f64>, lam: &[Preference]) -> Vec<f64> {
    lam.iter().enumerate().map(|(b, l)| l.lambda_r * q[[b, 0]] + l.lambda_c * q[[b, 1]]).collect()
}

/// Soft targets for a minibatch with next-action noise `eps_next`.
pub fn critic_targets(agent: &Agent, cfg: &TrainerConfig, mb: &Minibatch, eps_next: ArrayView2<f64>) -> Array1<f64> {
    let feat = agent.feat();
    let x_next = feat.policy_batch(&mb.next_states(), &mb.lam);
    let pb = agent.policy.forward_batch(x_next.view(), eps_next);
    let xc = feat.critic_batch(&mb.next_states(), pb.t.view(), &mb.lam);
    let q1 = agent.critic.target[0].predict(xc.view());
    let q2 = agent.critic.target[1].predict(xc.view());
    Array1::from_shape_fn(mb.len(), |b| {
        scalarized_target(
            mb.reward[b],
            mb.lam[b],
            cfg.gamma,
            mb.done[b],
            [[q1[[b, 0]], q1[[b, 1]]], [q2[[b, 0]], q2[[b, 1]]]],
            cfg.alpha,
            pb.logp[b],
        )
    })
}

/// `mean_b sum_j (<lam_b, Q_j(s_b, a_b)> - y_b)^2` and its gradient for
/// each online twin.
pub fn critic_loss_grad(critic: &VectorCritic, x: ArrayView2<f64>, lam: &[Preference], y: &Array1<f64>) -> (f64, [Grads; 2]) {
    let n = x.nrows() as f64;
    let mut loss = 0.0;
    let grads = [0, 1].map(|j| {
        let (q, cache) = critic.online[j].forward(x);
        let s = scalarize_rows(&q, lam);
        let mut up = Array2::zeros((x.nrows(), 2));
        for (b, l) in lam.iter().enumerate() {
            let e = s[b] - y[b];
            loss += e * e / n;
            up[[b, 0]] = 2.0 * e * l.lambda_r / n;
            up[[b, 1]] = 2.0 * e * l.lambda_c / n;
        }
        critic.online[j].backward(&cache, up.view()).0
    });
    (loss, grads)
}

/// `mean_b (alpha logp_b - min_j <lam_b, Q_j(s_b, a_b)>)` with `a_b` the
/// reparameterized sample for noise `eps`, and its policy gradient.
pub fn policy_loss_grad(
    policy: &GaussianPolicy,
    critic: &VectorCritic,
    alpha: f64,
    mb: &Minibatch,
    eps: ArrayView2<f64>,
) -> (f64, Grads, PolicyBatch) {
    let feat = &policy.feat;
    let n = mb.len();
    let x = mb.policy_input(feat);
    let pb = policy.forward_batch(x.view(), eps);
    let xc = feat.critic_batch(&mb.states(), pb.t.view(), &mb.lam);
    let (q1, c1) = critic.online[0].forward(xc.view());
    let (q2, c2) = critic.online[1].forward(xc.view());
    let s1 = scalarize_rows(&q1, &mb.lam);
    let s2 = scalarize_rows(&q2, &mb.lam);
    let mut loss = 0.0;
    let mut up = [Array2::zeros((n, 2)), Array2::zeros((n, 2))];
    for b in 0..n {
        let (j, q) = if s2[b] < s1[b] { (1, s2[b]) } else { (0, s1[b]) };
        loss += (alpha * pb.logp[b] - q) / n as f64;
        up[j][[b, 0]] = -mb.lam[b].lambda_r / n as f64;
        up[j][[b, 1]] = -mb.lam[b].lambda_c / n as f64;
    }
    let d1 = critic.online[0].input_grad(&c1, up[0].view());
    let d2 = critic.online[1].input_grad(&c2, up[1].view());
    let ds = feat.state_dim();
    let da = feat.action_dim();
    let d_t = Array2::from_shape_fn((n, da), |(b, i)| d1[[b, ds + i]] + d2[[b, ds + i]]);
    let d_logp = Array1::from_elem(n, alpha / n as f64);
    let g = policy.backward_batch(&pb, d_t.view(), d_logp.view());
    (loss, g, pb)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub policy_loss: f64,
}

/// One critic step followed by one actor step with the critic held fixed.
/// Returns pre-step losses.
pub fn critic_update(agent: &mut Agent, cfg: &TrainerConfig, mb: &Minibatch, rng: &mut dyn RngCore) -> Result<f64> {
    let eps_next = standard_normal(mb.len(), agent.feat().action_dim(), rng);
    let y = critic_targets(agent, cfg, mb, eps_next.view());
    let x = mb.critic_input(agent.feat());
    let (loss, grads) = critic_loss_grad(&agent.critic, x.view(), &mb.lam, &y);
    if !loss.is_finite() {
        return Err(AcrlError::NonFiniteLoss { what: "critic" });
    }
    let [g1, g2] = grads;
    let [o1, o2] = &mut agent.critic_opt;
    o1.step(&mut agent.critic.online[0], &g1);
    o2.step(&mut agent.critic.online[1], &g2);
    Ok(loss)
}

pub fn policy_update(agent: &mut Agent, cfg: &TrainerConfig, mb: &Minibatch, rng: &mut dyn RngCore) -> Result<f64> {
    let eps = standard_normal(mb.len(), agent.feat().action_dim(), rng);
    let (loss, g, _) = policy_loss_grad(&agent.policy, &agent.critic, cfg.alpha, mb, eps.view());
    if !loss.is_finite() {
        return Err(AcrlError::NonFiniteLoss { what: "policy" });
    }
    agent.policy_opt.step(&mut agent.policy.trunk, &g);
    Ok(loss)
}

/// `target <- (1 - tau) target + tau online`
pub fn soft_update(critic: &mut VectorCritic, tau: f64) {
    critic.soft_update(tau);
}

/// Critic step, actor step, and target smoothing on its interval.
pub fn update(agent: &mut Agent, cfg: &TrainerConfig, mb: &Minibatch, rng: &mut dyn RngCore) -> Result<UpdateStats> {
    let critic_loss = critic_update(agent, cfg, mb, rng)?;
    let policy_loss = policy_update(agent, cfg, mb, rng)?;
    agent.updates += 1;
    if agent.updates % cfg.target_update_interval == 0 {
        soft_update(&mut agent.critic, cfg.tau);
    }
    Ok(UpdateStats { critic_loss, policy_loss })
}
