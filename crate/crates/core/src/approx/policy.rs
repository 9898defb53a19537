use std::f64::consts::{LN_2, PI};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal, StudentT};

use super::mlp::{Cache, Grads, Mlp};
use super::Featurizer;
use crate::arm::ActionProposal;
use crate::mdp::{ActionBox, ActionVec, EnvState, Preference};

pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log1m_tanh_sq(u: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

pub fn squash(u: &[f64], abox: &ActionBox) -> ActionVec {
    let t: Vec<f64> = u.iter().map(|x| x.tanh()).collect();
    ActionVec::new(abox.from_unit(&t))
}

pub fn unsquash(a: &[f64], abox: &ActionBox) -> Vec<f64> {
    abox.to_unit(a).iter().map(|t| t.atanh()).collect()
}

/// Density of `a = squash(u)` with `u ~ N(mu, exp(log_sigma)^2)`.
pub fn squashed_log_prob(u: &[f64], mu: &[f64], log_sigma: &[f64], abox: &ActionBox) -> f64 {
    let mut lp = 0.0;
    for i in 0..u.len() {
        let sigma = log_sigma[i].exp();
        let eps = (u[i] - mu[i]) / sigma;
        let half = (abox.hi[i] - abox.lo[i]) / 2.0;
        lp += -0.5 * eps * eps - log_sigma[i] - 0.5 * (2.0 * PI).ln();
        lp -= log1m_tanh_sq(u[i]) + half.ln();
    }
    lp
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProposalNoise {
    Gaussian,
    /// Student-t with the given degrees of freedom, scaled by sigma.
    StudentT(f64),
}

/// The squashed policy at one state, usable as an acceptance-rejection
/// proposal.
#[derive(Clone, Debug)]
pub struct SquashedProposal<'a> {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub abox: &'a ActionBox,
    pub noise: ProposalNoise,
}

impl ActionProposal for SquashedProposal<'_> {
    fn propose(&self, rng: &mut dyn RngCore) -> ActionVec {
        let u: Vec<f64> = match self.noise {
            ProposalNoise::Gaussian => self
                .mu
                .iter()
                .zip(&self.sigma)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
            ProposalNoise::StudentT(nu) => {
                let dist = StudentT::new(nu).expect("positive degrees of freedom");
                self.mu.iter().zip(&self.sigma).map(|(m, s)| m + s * dist.sample(rng)).collect()
            }
        };
        squash(&u, self.abox)
    }
}

/// Preference-conditioned tanh-squashed Gaussian policy. The trunk emits
/// `[mu, log_sigma]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub trunk: Mlp,
    pub feat: Featurizer,
}

/// Reparameterized batch sample with everything needed for the backward
/// pass.
#[derive(Clone, Debug)]
pub struct PolicyBatch {
    /// Actions in `[-1, 1]` (critic input space).
    pub t: Array2<f64>,
    pub logp: Array1<f64>,
    eps: Array2<f64>,
    sigma: Array2<f64>,
    /// Whether `log_sigma` was inside the clamp (gradient passes).
    ls_free: Array2<bool>,
    cache: Cache,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(feat: Featurizer, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![feat.policy_input_dim()];
        widths.extend_from_slice(hidden);
        widths.push(2 * feat.action_dim());
        Self { trunk: Mlp::new(&widths, rng), feat }
    }

    pub fn action_dim(&self) -> usize {
        self.feat.action_dim()
    }

    pub fn abox(&self) -> &ActionBox {
        &self.feat.abox
    }

    /// `(mu, clamped log_sigma)` at one state.
    pub fn head(&self, s: &EnvState, lam: Preference) -> (Vec<f64>, Vec<f64>) {
        let out = self.trunk.apply(&self.feat.policy_row(&s.vector, lam)).expect("featurizer width");
        let da = self.action_dim();
        let mu = out[..da].to_vec();
        let ls = out[da..].iter().map(|x| x.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)).collect();
        (mu, ls)
    }

    pub fn proposal(&self, s: &EnvState, lam: Preference, noise: ProposalNoise) -> SquashedProposal<'_> {
        let (mu, ls) = self.head(s, lam);
        SquashedProposal { mu, sigma: ls.iter().map(|x| x.exp()).collect(), abox: self.abox(), noise }
    }

    /// One action and its log density.
    pub fn sample(&self, s: &EnvState, lam: Preference, rng: &mut dyn RngCore) -> (ActionVec, f64) {
        let (mu, ls) = self.head(s, lam);
        let u: Vec<f64> = mu
            .iter()
            .zip(&ls)
            .map(|(m, l)| {
                let z: f64 = StandardNormal.sample(rng);
                m + l.exp() * z
            })
            .collect();
        let lp = squashed_log_prob(&u, &mu, &ls, self.abox());
        (squash(&u, self.abox()), lp)
    }

    /// The squashed mean action.
    pub fn mean_action(&self, s: &EnvState, lam: Preference) -> ActionVec {
        let (mu, _) = self.head(s, lam);
        squash(&mu, self.abox())
    }

    /// Reparameterized sample for a batch of policy inputs with the given
    /// standard normal noise.
    pub fn forward_batch(&self, x: ArrayView2<f64>, eps: ArrayView2<f64>) -> PolicyBatch {
        let (out, cache) = self.trunk.forward(x);
        let (n, da) = (x.nrows(), self.action_dim());
        let mut t = Array2::zeros((n, da));
        let mut sigma = Array2::zeros((n, da));
        let mut ls_free = Array2::from_elem((n, da), true);
        let mut logp = Array1::zeros(n);
        let log_half: f64 = self.abox().lo.iter().zip(&self.abox().hi).map(|(l, h)| ((h - l) / 2.0).ln()).sum();
        let c = 0.5 * (2.0 * PI).ln();
        for b in 0..n {
            let mut lp = -log_half;
            for i in 0..da {
                let raw = out[[b, da + i]];
                let ls = raw.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
                ls_free[[b, i]] = raw == ls;
                let sg = ls.exp();
                let e = eps[[b, i]];
                let u = out[[b, i]] + sg * e;
                sigma[[b, i]] = sg;
                t[[b, i]] = u.tanh();
                lp += -0.5 * e * e - ls - c - log1m_tanh_sq(u);
            }
            logp[b] = lp;
        }
        PolicyBatch { t, logp, eps: eps.to_owned(), sigma, ls_free, cache }
    }

    /// Parameter gradient of `sum_b (d_logp[b] * logp[b] + d_t[b] . t[b])`.
    pub fn backward_batch(&self, pb: &PolicyBatch, d_t: ArrayView2<f64>, d_logp: ArrayView1<f64>) -> Grads {
        let (n, da) = pb.t.dim();
        let mut up = Array2::zeros((n, 2 * da));
        for b in 0..n {
            for i in 0..da {
                let t = pb.t[[b, i]];
                let se = pb.sigma[[b, i]] * pb.eps[[b, i]];
                // d logp / du at fixed eps via the tanh correction, and the
                // critic path through t.
                let du = d_logp[b] * 2.0 * t + d_t[[b, i]] * (1.0 - t * t);
                up[[b, i]] = du;
                if pb.ls_free[[b, i]] {
                    up[[b, da + i]] = du * se - d_logp[b];
                }
            }
        }
        self.trunk.backward(&pb.cache, up.view()).0
    }
}
