//! Small feed-forward approximators with hand-written reverse mode: a
//! preference-conditioned tanh-squashed Gaussian actor and twin vector
//! critics.

mod checkpoint;
mod mlp;
mod policy;

pub use checkpoint::{load_nets, save_nets};
pub use mlp::{Adam, Cache, Grads, Layer, Mlp};
pub use policy::{
    log1m_tanh_sq, squash, squashed_log_prob, unsquash, GaussianPolicy, PolicyBatch, ProposalNoise,
    SquashedProposal, LOG_SIGMA_MAX, LOG_SIGMA_MIN,
};

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::mdp::{ActionBox, EnvState, Environment, Preference};

/// Maps raw states and actions to network inputs: states are centered and
/// scaled, actions mapped to `[-1, 1]`, and the preference appended as two
/// raw numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurizer {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub abox: ActionBox,
}

impl Featurizer {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>, abox: ActionBox) -> Self {
        assert_eq!(center.len(), half_width.len());
        assert!(half_width.iter().all(|h| *h > 0.0));
        Self { center, half_width, abox }
    }

    pub fn for_env(env: &dyn Environment) -> Self {
        let (c, h) = env.state_scale();
        Self::new(c, h, env.action_box().clone())
    }

    pub fn state_dim(&self) -> usize {
        self.center.len()
    }

    pub fn action_dim(&self) -> usize {
        self.abox.dim()
    }

    pub fn policy_input_dim(&self) -> usize {
        self.state_dim() + 2
    }

    pub fn critic_input_dim(&self) -> usize {
        self.state_dim() + self.action_dim() + 2
    }

    fn push_state(&self, s: &[f64], out: &mut Vec<f64>) {
        assert_eq!(s.len(), self.state_dim(), "state width");
        out.extend(s.iter().zip(&self.center).zip(&self.half_width).map(|((x, c), h)| (x - c) / h));
    }

    pub fn policy_row(&self, s: &[f64], lam: Preference) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.policy_input_dim());
        self.push_state(s, &mut out);
        out.extend(lam.as_array());
        out
    }

    /// `t` is the action already mapped to `[-1, 1]`.
    pub fn critic_row(&self, s: &[f64], t: &[f64], lam: Preference) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.critic_input_dim());
        self.push_state(s, &mut out);
        out.extend_from_slice(t);
        out.extend(lam.as_array());
        out
    }

    pub fn policy_batch(&self, states: &[&[f64]], lams: &[Preference]) -> Array2<f64> {
        let d = self.policy_input_dim();
        let mut flat = Vec::with_capacity(states.len() * d);
        for (s, lam) in states.iter().zip(lams) {
            flat.extend(self.policy_row(s, *lam));
        }
        Array2::from_shape_vec((states.len(), d), flat).expect("sized")
    }

    pub fn critic_batch(&self, states: &[&[f64]], t: ArrayView2<f64>, lams: &[Preference]) -> Array2<f64> {
        let d = self.critic_input_dim();
        let mut flat = Vec::with_capacity(states.len() * d);
        for (i, (s, lam)) in states.iter().zip(lams).enumerate() {
            self.push_state(s, &mut flat);
            flat.extend(t.row(i).iter());
            flat.extend(lam.as_array());
        }
        Array2::from_shape_vec((states.len(), d), flat).expect("sized")
    }
}

/// Twin vector-valued critics `Q(s, a; lambda) in R^2` and their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorCritic {
    pub online: [Mlp; 2],
    pub target: [Mlp; 2],
}

impl VectorCritic {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let q1 = Mlp::new(&widths, rng);
        let q2 = Mlp::new(&widths, rng);
        Self { target: [q1.clone(), q2.clone()], online: [q1, q2] }
    }

    /// Both online heads at one input row.
    pub fn eval(&self, x: &[f64]) -> crate::error::Result<[[f64; 2]; 2]> {
        let a = self.online[0].apply(x)?;
        let b = self.online[1].apply(x)?;
        Ok([[a[0], a[1]], [b[0], b[1]]])
    }

    pub fn eval_at(
        &self,
        feat: &Featurizer,
        s: &EnvState,
        a: &[f64],
        lam: Preference,
    ) -> crate::error::Result<[[f64; 2]; 2]> {
        let t = feat.abox.to_unit(a);
        self.eval(&feat.critic_row(&s.vector, &t, lam))
    }

    pub fn soft_update(&mut self, tau: f64) {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.soft_update_from(o, tau);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feat() -> Featurizer {
        Featurizer::new(vec![0.0, 1.0], vec![1.0, 2.0], ActionBox::uniform(1, -2.0, 2.0))
    }

    #[test]
    fn zero_output_head_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = feat();
        let mut c = VectorCritic::new(f.critic_input_dim(), &[8, 8], &mut rng);
        c.online[0].zero_output_layer();
        c.online[1].zero_output_layer();
        let q = c.eval_at(&f, &EnvState::new(vec![0.3, 0.4]), &[1.0], Preference::new(0.5)).unwrap();
        assert_eq!(q, [[0.0; 2]; 2]);
    }

    #[test]
    fn eval_is_mlp_on_concatenated_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = feat();
        let c = VectorCritic::new(f.critic_input_dim(), &[8, 8], &mut rng);
        let s = EnvState::new(vec![0.3, 3.0]);
        let lam = Preference::new(0.7);
        let q = c.eval_at(&f, &s, &[1.0], lam).unwrap();
        // State (0.3, 3.0) normalizes to (0.3, 1.0); action 1 in [-2, 2] is 0.5.
        let direct = c.online[1].apply(&[0.3, 1.0, 0.5, 0.7, 0.30000000000000004]).unwrap();
        assert_eq!(q[1], [direct[0], direct[1]]);
        let swapped = c.eval_at(&f, &s, &[1.0], Preference::new(0.3)).unwrap();
        assert_ne!(q, swapped);
    }
}
