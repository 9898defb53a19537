//! Rate allocation for nine flows sharing eight capacity-limited links.
//!
//! The link/flow incidence is fixed below; every link carries two to four
//! flows and every flow crosses at least one link. Flow demands follow a
//! bounded random walk. The reward is throughput minus a penalty on rate
//! allocated beyond demand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::infeasible;
use crate::constraint::ConstraintSpec;
use crate::error::Result;
use crate::mdp::{ActionBox, ActionVec, EnvState, Environment, StepOutcome};

pub const NSF_FLOWS: usize = 9;
pub const NSF_LINKS: usize = 8;
pub const NSF_LINK_CAPACITY: f64 = 50.0;
const MAX_RATE: f64 = 30.0;
const DEMAND_MIN: f64 = 5.0;
const DEMAND_MAX: f64 = 25.0;
const DEMAND_DRIFT: f64 = 2.0;
const OVER_ALLOCATION_COST: f64 = 0.1;
const EPISODE_STEPS: usize = 50;

/// `NSF_ROUTING[link][flow] == 1` iff the flow is routed over the link.
pub const NSF_ROUTING: [[u8; NSF_FLOWS]; NSF_LINKS] = [
    [1, 1, 1, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 1, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 1, 1, 0, 0, 0],
    [0, 0, 0, 1, 0, 0, 1, 1, 0],
    [0, 0, 0, 0, 1, 0, 0, 1, 1],
    [0, 0, 0, 0, 0, 1, 1, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, 0, 1],
    [0, 1, 0, 0, 1, 0, 1, 0, 1],
];

pub(crate) fn routing_constraint() -> ConstraintSpec {
    let rows = NSF_ROUTING.iter().map(|row| row.iter().map(|&x| x as f64).collect()).collect();
    ConstraintSpec::linear(rows, vec![NSF_LINK_CAPACITY; NSF_LINKS])
}

/// Throughput minus `beta` times over-allocation.
pub fn nsfnet_reward(rates: &[f64], demand: &[f64], beta: f64) -> f64 {
    rates
        .iter()
        .zip(demand)
        .map(|(a, d)| a.min(*d) - beta * (a - d).max(0.0))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NsfState {
    pub link_load: [f64; NSF_LINKS],
    pub flow_demand: [f64; NSF_FLOWS],
}

pub struct Nsfnet {
    abox: ActionBox,
    spec: ConstraintSpec,
    rng: ChaCha8Rng,
    state: NsfState,
    t: usize,
}

impl Nsfnet {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            abox: ActionBox::uniform(NSF_FLOWS, 0.0, MAX_RATE),
            spec: routing_constraint(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: NsfState { link_load: [0.0; NSF_LINKS], flow_demand: [0.0; NSF_FLOWS] },
            t: 0,
        };
        env.reset();
        env
    }

    pub fn inner(&self) -> &NsfState {
        &self.state
    }

    pub fn set_demand(&mut self, demand: [f64; NSF_FLOWS]) -> EnvState {
        self.state.flow_demand = demand;
        self.observe(false)
    }

    fn observe(&self, done: bool) -> EnvState {
        let mut vector = self.state.link_load.to_vec();
        vector.extend_from_slice(&self.state.flow_demand);
        EnvState { vector, step_index: self.t, done }
    }
}

impl Environment for Nsfnet {
    fn id(&self) -> &str {
        "NSFnetLite"
    }

    fn state_dim(&self) -> usize {
        NSF_LINKS + NSF_FLOWS
    }

    fn action_dim(&self) -> usize {
        NSF_FLOWS
    }

    fn action_box(&self) -> &ActionBox {
        &self.abox
    }

    fn constraint(&self) -> &ConstraintSpec {
        &self.spec
    }

    fn reward_range(&self) -> (f64, f64) {
        (
            -OVER_ALLOCATION_COST * MAX_RATE * NSF_FLOWS as f64,
            DEMAND_MAX * NSF_FLOWS as f64,
        )
    }

    fn max_episode_steps(&self) -> usize {
        EPISODE_STEPS
    }

    fn state_scale(&self) -> (Vec<f64>, Vec<f64>) {
        let mut center = vec![NSF_LINK_CAPACITY / 2.0; NSF_LINKS];
        center.extend([(DEMAND_MIN + DEMAND_MAX) / 2.0; NSF_FLOWS]);
        let mut half = vec![NSF_LINK_CAPACITY / 2.0; NSF_LINKS];
        half.extend([(DEMAND_MAX - DEMAND_MIN) / 2.0; NSF_FLOWS]);
        (center, half)
    }

    fn reset(&mut self) -> EnvState {
        for d in self.state.flow_demand.iter_mut() {
            *d = self.rng.random_range(DEMAND_MIN..DEMAND_MAX);
        }
        self.state.link_load = [0.0; NSF_LINKS];
        self.t = 0;
        self.observe(false)
    }

    fn step(&mut self, a: &ActionVec) -> Result<StepOutcome> {
        let s = self.observe(false);
        if !self.abox.contains(a) || !self.spec.is_feasible(&s, a)? {
            return Err(infeasible("NSFnetLite", a));
        }
        let reward = nsfnet_reward(a, &self.state.flow_demand, OVER_ALLOCATION_COST);
        for (load, row) in self.state.link_load.iter_mut().zip(NSF_ROUTING.iter()) {
            *load = row.iter().zip(a.iter()).map(|(&r, x)| r as f64 * x).sum();
        }
        for d in self.state.flow_demand.iter_mut() {
            let drift = self.rng.random_range(-DEMAND_DRIFT..=DEMAND_DRIFT);
            *d = (*d + drift).clamp(DEMAND_MIN, DEMAND_MAX);
        }
        self.t += 1;
        Ok(StepOutcome { state: self.observe(self.t >= EPISODE_STEPS), reward, terminated: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_matrix_shape() {
        for row in NSF_ROUTING {
            let flows: u8 = row.iter().sum();
            assert!((2..=4).contains(&flows), "link carries {flows} flows");
        }
        for f in 0..NSF_FLOWS {
            assert!(NSF_ROUTING.iter().any(|row| row[f] == 1), "flow {f} unrouted");
        }
    }

    #[test]
    fn zero_allocation_earns_nothing() {
        let mut env = Nsfnet::new(0);
        let out = env.step(&ActionVec::zeros(NSF_FLOWS)).unwrap();
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn link_capacity_boundary() {
        // Link 0 carries flows 0, 1, 2.
        let mut a = vec![0.0; NSF_FLOWS];
        a[0] = 20.0;
        a[1] = 15.0;
        a[2] = 15.0;
        let mut env = Nsfnet::new(0);
        assert!(env.step(&ActionVec::new(a.clone())).is_ok());
        a[2] += 1e-9;
        assert!(env.step(&ActionVec::new(a)).is_err());
    }
}
