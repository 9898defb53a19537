use acrl::envs::{make, sample_uniform_feasible, uniform_action, Bss, BssConfig, BssState, EnvId};
use acrl::{ActionVec, Environment, QpCounter};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, Poisson};

fn rollout(id: EnvId, seed: u64, actions_seed: u64, steps: usize) -> Vec<(Vec<f64>, f64, bool)> {
    let mut env = make(id, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(actions_seed);
    let qp = QpCounter::new();
    let mut s = env.reset();
    let mut out = Vec::new();
    for _ in 0..steps {
        let (a, _) = sample_uniform_feasible(&*env, &s, 100_000, &mut rng, &qp).unwrap();
        let o = env.step(&a).unwrap();
        out.push((o.state.vector.clone(), o.reward, o.state.done));
        s = if o.state.done { env.reset() } else { o.state };
    }
    out
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    for id in EnvId::ALL {
        assert_eq!(rollout(id, 5, 9, 300), rollout(id, 5, 9, 300), "{id}");
        assert_ne!(rollout(id, 5, 9, 300), rollout(id, 6, 9, 300), "{id} ignores its seed");
    }
}

#[test]
fn uniform_actions_are_sometimes_feasible_sometimes_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for id in EnvId::ALL {
        let mut env = make(id, 1);
        let s = env.reset();
        let n = 200_000;
        let ok = (0..n)
            .filter(|_| {
                let a = uniform_action(&*env, &mut rng);
                env.constraint().is_feasible(&s, &a).unwrap()
            })
            .count();
        let frac = ok as f64 / n as f64;
        assert!(frac > 0.0 && frac < 1.0, "{id}: feasible fraction {frac}");
    }
}

#[test]
fn declared_reward_range_covers_observed_rewards() {
    for id in EnvId::ALL {
        let mut env = make(id, 17);
        let (lo, hi) = env.reward_range();
        assert!(lo < hi);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qp = QpCounter::new();
        let mut s = env.reset();
        let (mut seen_lo, mut seen_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..100_000 {
            let (a, _) = sample_uniform_feasible(&*env, &s, 100_000, &mut rng, &qp).unwrap();
            let o = env.step(&a).unwrap();
            assert!(o.reward >= lo && o.reward <= hi, "{id}: reward {} outside [{lo}, {hi}]", o.reward);
            seen_lo = seen_lo.min(o.reward);
            seen_hi = seen_hi.max(o.reward);
            s = if o.state.done { env.reset() } else { o.state };
        }
        let scaler = env.scaler();
        assert!(scaler.scale(seen_lo) >= 0.0 && scaler.scale(seen_hi) <= 1.0);
        assert_eq!(qp.get(), 0, "{id}: rejection sampling needed projection");
    }
}

#[test]
fn bss_never_creates_or_destroys_bikes() {
    for cfg in [BssConfig::bss3z(), BssConfig::bss5z()] {
        let mut env = Bss::new(cfg.clone(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let qp = QpCounter::new();
        let mut s = env.reset();
        for _ in 0..20_000 {
            let (a, _) = sample_uniform_feasible(&env, &s, 100_000, &mut rng, &qp).unwrap();
            let (o, d) = env.step_detailed(&a).unwrap();
            let placed: u32 = d.allocation.iter().sum();
            let after: u32 = env.inner().station_fill.iter().sum();
            assert!(placed <= cfg.bikes);
            assert!(placed as f64 >= cfg.bikes as f64 - cfg.band - cfg.stations as f64);
            assert_eq!(after, placed - d.overflow);
            assert!(env.inner().station_fill.iter().all(|&f| f <= cfg.capacity));
            assert_eq!(o.reward, -((d.unmet + d.overflow) as f64));
            s = if o.state.done { env.reset() } else { o.state };
        }
    }
}

/// Exact expected cost for demand means [30, 30, 30] and allocation
/// [30, 30, 30], by summing over the joint Poisson law.
fn exact_bss_cost(mean: f64, alloc: u32, cap: u32, demand_cap: u32) -> f64 {
    let p = Poisson::new(mean).unwrap();
    let pmf: Vec<f64> = (0..=demand_cap)
        .map(|k| if k == demand_cap { 1.0 - (0..demand_cap).map(|j| p.pmf(j as u64)).sum::<f64>() } else { p.pmf(k as u64) })
        .collect();
    let mut e = 0.0;
    for (d0, p0) in pmf.iter().enumerate() {
        for (d1, p1) in pmf.iter().enumerate() {
            for (d2, p2) in pmf.iter().enumerate() {
                let d = [d0 as u32, d1 as u32, d2 as u32];
                let served: Vec<u32> = d.iter().map(|&x| x.min(alloc)).collect();
                let unmet: u32 = d.iter().zip(&served).map(|(x, s)| x - s).sum();
                let overflow: u32 = (0..3).map(|i| (alloc - served[i] + served[(i + 2) % 3]).saturating_sub(cap)).sum();
                e += p0 * p1 * p2 * (unmet + overflow) as f64;
            }
        }
    }
    e
}

#[test]
fn bss_expected_cost_matches_exact_poisson_oracle() {
    let cfg = BssConfig::bss3z();
    let expected = -exact_bss_cost(30.0, 30, cfg.capacity, cfg.demand_cap);
    let mut env = Bss::new(cfg.clone(), 42);
    let a = ActionVec::new(vec![30.0; 3]);
    let n = 100_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        env.set_state(BssState { station_fill: vec![30; 3], demand_forecast: vec![30.0; 3] });
        let r = env.step(&a).unwrap().reward;
        sum += r;
        sq += r * r;
    }
    let mean = sum / n as f64;
    let sd = (sq / n as f64 - mean * mean).sqrt();
    let se = sd / (n as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "simulated {mean} vs exact {expected} (se {se})");
}
