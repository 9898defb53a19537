//! Bike sharing rebalancing.
//!
//! The action is a target allocation of bikes to `n` stations. Allocations
//! are floored to whole bikes and trimmed (largest station first) so that no
//! more than `m` bikes are placed; the remainder waits in a depot. Each step
//! station `i` sees Poisson rentals with mean `demand_forecast[i]`, rented
//! bikes are returned to station `i + 1 (mod n)`, and bikes that do not fit
//! under the station capacity overflow back to the depot. The reward is
//! `-(unmet rentals + overflow)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::infeasible;
use crate::constraint::ConstraintSpec;
use crate::error::Result;
use crate::mdp::{ActionBox, ActionVec, EnvState, Environment, StepOutcome};

#[derive(Clone, Debug, PartialEq)]
pub struct BssConfig {
    pub stations: usize,
    pub bikes: u32,
    pub capacity: u32,
    pub band: f64,
    pub episode_steps: usize,
    /// Expected total rentals per step as a fraction of the fleet.
    pub demand_fraction: f64,
    /// Dirichlet concentration of the per-station demand split.
    pub concentration: f64,
    /// Rentals per station are capped here.
    pub demand_cap: u32,
    /// Rentals equal the rounded forecast instead of a Poisson draw.
    pub deterministic: bool,
}

impl BssConfig {
    pub fn bss3z() -> Self {
        Self {
            stations: 3,
            bikes: 90,
            capacity: 40,
            band: 5.0,
            episode_steps: 50,
            demand_fraction: 0.8,
            concentration: 2.0,
            demand_cap: 60,
            deterministic: false,
        }
    }

    pub fn bss5z() -> Self {
        Self { stations: 5, bikes: 150, ..Self::bss3z() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BssState {
    pub station_fill: Vec<u32>,
    pub demand_forecast: Vec<f64>,
}

pub struct Bss {
    cfg: BssConfig,
    id: String,
    abox: ActionBox,
    spec: ConstraintSpec,
    rng: ChaCha8Rng,
    state: BssState,
    t: usize,
}

/// Per-step accounting, exposed for conservation checks.
#[derive(Clone, Debug, PartialEq)]
pub struct BssStepDetail {
    pub allocation: Vec<u32>,
    pub rentals: Vec<u32>,
    pub unmet: u32,
    pub overflow: u32,
}

impl Bss {
    pub fn new(cfg: BssConfig, seed: u64) -> Self {
        let n = cfg.stations;
        let id = match n {
            3 => "BSS3z".to_string(),
            5 => "BSS5z".to_string(),
            _ => format!("BSS{n}z"),
        };
        let mut env = Self {
            abox: ActionBox::uniform(n, 0.0, cfg.capacity as f64),
            spec: ConstraintSpec::signed_sum_band(n, cfg.bikes as f64, cfg.band, cfg.capacity as f64),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: BssState { station_fill: vec![0; n], demand_forecast: vec![0.0; n] },
            t: 0,
            id,
            cfg,
        };
        env.reset();
        env
    }

    pub fn config(&self) -> &BssConfig {
        &self.cfg
    }

    pub fn inner(&self) -> &BssState {
        &self.state
    }

    pub fn set_state(&mut self, state: BssState) -> EnvState {
        assert_eq!(state.station_fill.len(), self.cfg.stations);
        assert_eq!(state.demand_forecast.len(), self.cfg.stations);
        self.state = state;
        self.t = 0;
        self.observe(false)
    }

    fn observe(&self, done: bool) -> EnvState {
        let mut vector: Vec<f64> = self.state.station_fill.iter().map(|&f| f as f64).collect();
        vector.extend_from_slice(&self.state.demand_forecast);
        EnvState { vector, step_index: self.t, done }
    }

    fn draw_forecast(&mut self) -> Vec<f64> {
        let gamma = Gamma::new(self.cfg.concentration, 1.0).expect("positive concentration");
        let w: Vec<f64> = (0..self.cfg.stations).map(|_| gamma.sample(&mut self.rng)).collect();
        let total: f64 = w.iter().sum();
        let mean_total = self.cfg.demand_fraction * self.cfg.bikes as f64;
        w.iter().map(|x| (mean_total * x / total).min(self.cfg.capacity as f64)).collect()
    }

    /// Whole-bike allocation of a feasible target.
    pub fn allocate(&self, a: &[f64]) -> Vec<u32> {
        let cap = self.cfg.capacity;
        let mut alloc: Vec<u32> = a.iter().map(|x| (x.max(0.0).floor() as u32).min(cap)).collect();
        let mut total: u32 = alloc.iter().sum();
        while total > self.cfg.bikes {
            let (i, _) = alloc
                .iter()
                .enumerate()
                .max_by(|(i, x), (j, y)| x.cmp(y).then(j.cmp(i)))
                .expect("non-empty");
            alloc[i] -= 1;
            total -= 1;
        }
        alloc
    }

    /// One step with full accounting.
    pub fn step_detailed(&mut self, a: &ActionVec) -> Result<(StepOutcome, BssStepDetail)> {
        let s = self.observe(false);
        if !self.abox.contains(a) || !self.spec.is_feasible(&s, a)? {
            return Err(infeasible(&self.id, a));
        }
        let n = self.cfg.stations;
        let allocation = self.allocate(a);
        let rentals: Vec<u32> = self
            .state
            .demand_forecast
            .clone()
            .iter()
            .map(|&mean| {
                let d = if self.cfg.deterministic {
                    mean.round() as u32
                } else if mean > 0.0 {
                    Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as u32
                } else {
                    0
                };
                d.min(self.cfg.demand_cap)
            })
            .collect();
        let served: Vec<u32> = allocation.iter().zip(&rentals).map(|(a, d)| *a.min(d)).collect();
        let unmet: u32 = rentals.iter().zip(&served).map(|(d, s)| d - s).sum();
        let mut overflow = 0;
        let mut fill = vec![0u32; n];
        for i in 0..n {
            let returned = served[(i + n - 1) % n];
            let here = allocation[i] - served[i] + returned;
            overflow += here.saturating_sub(self.cfg.capacity);
            fill[i] = here.min(self.cfg.capacity);
        }
        let forecast = self.draw_forecast();
        self.state = BssState { station_fill: fill, demand_forecast: forecast };
        self.t += 1;
        let done = self.t >= self.cfg.episode_steps;
        let reward = -((unmet + overflow) as f64);
        Ok((
            StepOutcome { state: self.observe(done), reward, terminated: false },
            BssStepDetail { allocation, rentals, unmet, overflow },
        ))
    }
}

impl Environment for Bss {
    fn id(&self) -> &str {
        &self.id
    }

    fn state_dim(&self) -> usize {
        2 * self.cfg.stations
    }

    fn action_dim(&self) -> usize {
        self.cfg.stations
    }

    fn action_box(&self) -> &ActionBox {
        &self.abox
    }

    fn constraint(&self) -> &ConstraintSpec {
        &self.spec
    }

    fn reward_range(&self) -> (f64, f64) {
        let worst = self.cfg.stations as u32 * self.cfg.demand_cap + self.cfg.bikes;
        (-(worst as f64), 0.0)
    }

    fn max_episode_steps(&self) -> usize {
        self.cfg.episode_steps
    }

    fn state_scale(&self) -> (Vec<f64>, Vec<f64>) {
        let half = self.cfg.capacity as f64 / 2.0;
        (vec![half; self.state_dim()], vec![half; self.state_dim()])
    }

    fn reset(&mut self) -> EnvState {
        let n = self.cfg.stations as u32;
        let base = (self.cfg.bikes / n).min(self.cfg.capacity);
        let mut fill = vec![base; self.cfg.stations];
        let mut left = self.cfg.bikes.saturating_sub(base * n);
        for f in fill.iter_mut() {
            let add = left.min(self.cfg.capacity - *f);
            *f += add;
            left -= add;
        }
        // Randomize which station starts fullest so episodes differ.
        let shift = self.rng.random_range(0..self.cfg.stations);
        fill.rotate_left(shift);
        let forecast = self.draw_forecast();
        self.state = BssState { station_fill: fill, demand_forecast: forecast };
        self.t = 0;
        self.observe(false)
    }

    fn step(&mut self, a: &ActionVec) -> Result<StepOutcome> {
        self.step_detailed(a).map(|(out, _)| out)
    }
}
