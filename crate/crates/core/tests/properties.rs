use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use acrl::approx::{squash, unsquash, Featurizer, GaussianPolicy};
use acrl::arm::{arm_sample, ArmConfig, Fallback, IsotropicGaussian};
use acrl::envs::{make, sample_uniform_feasible, uniform_action, EnvId};
use acrl::harness::eval::valid_fraction;
use acrl::harness::{read_csv, write_csv, MetricsRow};
use acrl::mdp::{augment_step, scalarize, ActionBox, ActionVec, EnvState, PenaltyConfig, Preference};
use acrl::mosac::scalarized_target;
use acrl::projection::{project_ball, project_box, project_dykstra, project_onto_feasible};
use acrl::replay::{DualReplay, EtaSchedule, RingBuffer, Transition};
use acrl::tabular::{random_instance, vi_constrained};
use acrl::{ConstraintSpec, QpCounter};

fn env_id() -> impl Strategy<Value = EnvId> {
    prop::sample::select(EnvId::ALL.to_vec())
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// A uniform draw at `s` that violates the constraint, if one turns up.
/// Some grid cells allow every move.
fn infeasible_action(id: EnvId, s: &EnvState, rng: &mut ChaCha8Rng) -> Option<ActionVec> {
    let probe = make(id, 0);
    (0..10_000).map(|_| uniform_action(&*probe, rng)).find(|a| !probe.constraint().is_feasible(s, a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn infeasible_actions_self_loop_and_leave_env_untouched(id in env_id(), seed in any::<u64>(), k in 0.01f64..1.0) {
        let pen = PenaltyConfig::new(k, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut touched = make(id, seed);
        let mut fresh = make(id, seed);
        let s = touched.reset();
        fresh.reset();
        let spec = touched.constraint().clone();
        let bad = infeasible_action(id, &s, &mut rng);
        prop_assume!(bad.is_some());
        let bad = bad.unwrap();
        let o = augment_step(&mut *touched, &spec, &pen, &s, &bad).unwrap();
        prop_assert_eq!(&o.state.vector, &s.vector);
        prop_assert_eq!(o.reward.as_array(), [0.0, -k]);
        prop_assert!(!o.done && o.is_self_loop());
        prop_assert_eq!(o.state.step_index, s.step_index + 1);

        let qp = QpCounter::new();
        let (good, _) = sample_uniform_feasible(&*fresh, &s, 100_000, &mut rng, &qp).unwrap();
        prop_assert_eq!(touched.step(&good).unwrap(), fresh.step(&good).unwrap());
    }

    #[test]
    fn rewards_are_disjoint(id in env_id(), seed in any::<u64>(), k in 0.01f64..1.0) {
        let pen = PenaltyConfig::new(k, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = make(id, seed);
        let spec = env.constraint().clone();
        let mut s = env.reset();
        for _ in 0..40 {
            let a = uniform_action(&*env, &mut rng);
            let o = augment_step(&mut *env, &spec, &pen, &s, &a).unwrap();
            let [r, c] = o.reward.as_array();
            prop_assert_eq!(r * c, 0.0);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(c == 0.0 || c == -k);
            s = if o.done { env.reset() } else { o.state };
        }
    }

    #[test]
    fn feasible_trajectories_match_the_base_env(id in env_id(), seed in any::<u64>()) {
        let pen = PenaltyConfig::new(0.1, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut aug = make(id, seed);
        let mut raw = make(id, seed);
        let spec = aug.constraint().clone();
        let scaler = aug.scaler();
        let qp = QpCounter::new();
        let mut s = aug.reset();
        prop_assert_eq!(&s.vector, &raw.reset().vector);
        for _ in 0..60 {
            let (a, _) = sample_uniform_feasible(&*aug, &s, 100_000, &mut rng, &qp).unwrap();
            let o = augment_step(&mut *aug, &spec, &pen, &s, &a).unwrap();
            let b = raw.step(&a).unwrap();
            prop_assert_eq!(&o.state.vector, &b.state.vector);
            prop_assert_eq!(o.raw_reward, Some(b.reward));
            prop_assert_eq!(o.reward.r, scaler.scale(b.reward));
            prop_assert_eq!(o.done, b.state.done);
            prop_assert_eq!(o.terminated, b.terminated);
            s = if o.done {
                let s2 = aug.reset();
                prop_assert_eq!(&s2.vector, &raw.reset().vector);
                s2
            } else {
                o.state
            };
        }
    }

    #[test]
    fn membership_is_pure(id in env_id(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = make(id, seed);
        let s = env.reset();
        for _ in 0..50 {
            let a = uniform_action(&*env, &mut rng);
            let first = env.constraint().is_feasible(&s, &a).unwrap();
            prop_assert_eq!(first, env.constraint().is_feasible(&s, &a).unwrap());
        }
    }

    #[test]
    fn arm_output_is_feasible_and_bookkeeping_holds(
        mean in prop::collection::vec(-2.0f64..2.0, 1..4),
        sigma in 0.05f64..2.0,
        radius_sq in 0.01f64..2.0,
        max_attempts in 1usize..30,
        seed in any::<u64>(),
    ) {
        let d = mean.len();
        let spec = ConstraintSpec::ball(d, radius_sq);
        let abox = ActionBox::uniform(d, -1.5, 1.5);
        let prop = IsotropicGaussian { mean, sigma };
        let cfg = ArmConfig::new(max_attempts, Fallback::Project);
        let s = EnvState::new(vec![0.0]);
        let qp = QpCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let before = qp.get();
            let r = arm_sample(&prop, &s, &spec, &abox, &cfg, &mut rng, &qp).unwrap();
            prop_assert!(spec.is_feasible(&s, &r.action).unwrap() && abox.contains(&r.action));
            for rej in &r.rejected {
                prop_assert!(!(abox.contains(rej) && spec.is_feasible(&s, rej).unwrap()));
            }
            if r.fallback_used {
                prop_assert_eq!(r.rejected.len(), max_attempts);
                prop_assert_eq!(qp.get(), before + 1);
            } else {
                prop_assert_eq!(r.attempts, r.rejected.len() + 1);
                prop_assert_eq!(qp.get(), before);
            }
        }
    }

    #[test]
    fn ball_projection_properties(
        a in prop::collection::vec(-5.0f64..5.0, 1..9),
        shift in prop::collection::vec(-1.0f64..1.0, 8),
        radius_sq in 0.01f64..4.0,
    ) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, y)| x + y).collect();
        let pa = project_ball(&a, radius_sq);
        let pb = project_ball(&b, radius_sq);
        let n2: f64 = pa.iter().map(|x| x * x).sum();
        prop_assert!(n2 <= radius_sq + 1e-8);
        prop_assert!(norm(&project_ball(&pa, radius_sq), &pa) <= 1e-9);
        prop_assert!(norm(&pa, &pb) <= norm(&a, &b) + 1e-12);
    }

    #[test]
    fn box_projection_properties(
        a in prop::collection::vec(-5.0f64..5.0, 1..9),
        shift in prop::collection::vec(-1.0f64..1.0, 8),
        bounds in prop::collection::vec((-3.0f64..0.0, 0.0f64..3.0), 8),
    ) {
        let d = a.len();
        let lo: Vec<f64> = bounds[..d].iter().map(|p| p.0).collect();
        let hi: Vec<f64> = bounds[..d].iter().map(|p| p.1).collect();
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, y)| x + y).collect();
        let pa = project_box(&a, &lo, &hi).unwrap();
        let pb = project_box(&b, &lo, &hi).unwrap();
        prop_assert!(pa.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| l <= x && x <= h));
        prop_assert_eq!(&project_box(&pa, &lo, &hi).unwrap(), &pa);
        prop_assert!(norm(&pa, &pb) <= norm(&a, &b) + 1e-12);
    }

    #[test]
    fn dykstra_projection_is_feasible_and_idempotent(
        a in prop::collection::vec(-6.0f64..6.0, 3),
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..4),
        rhs in prop::collection::vec(0.1f64..2.0, 4),
    ) {
        let m = rows.len();
        let lin = ConstraintSpec::linear(rows, rhs[..m].to_vec());
        let bx = ConstraintSpec::boxed(vec![-2.0; 3], vec![2.0; 3]);
        let s = EnvState::new(vec![0.0]);
        let sets = [lin.clone(), bx.clone()];
        let rep = project_dykstra(&a, &sets, &s, 10_000, 1e-9).unwrap();
        prop_assert!(rep.residual <= 1e-8);
        prop_assert!(lin.violation(&s, &rep.projected).unwrap() <= 1e-8);
        prop_assert!(bx.violation(&s, &rep.projected).unwrap() <= 1e-8);
        let again = project_dykstra(&rep.projected, &sets, &s, 10_000, 1e-9).unwrap();
        prop_assert!(norm(&again.projected, &rep.projected) <= 1e-9);
    }

    #[test]
    fn env_projection_is_exactly_feasible_and_idempotent(id in env_id(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = make(id, seed);
        let s = env.reset();
        let qp = QpCounter::new();
        for _ in 0..10 {
            let a = uniform_action(&*env, &mut rng);
            let p = project_onto_feasible(env.constraint(), &s, &a, env.action_box(), &qp).unwrap().projected;
            prop_assert!(env.constraint().is_feasible(&s, &p).unwrap() && env.action_box().contains(&p));
            let q = project_onto_feasible(env.constraint(), &s, &p, env.action_box(), &qp).unwrap().projected;
            prop_assert!(norm(&p, &q) <= 1e-9);
        }
    }

    #[test]
    fn replay_routing_is_sound(seed in any::<u64>(), k in 0.01f64..1.0) {
        let pen = PenaltyConfig::new(k, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = make(EnvId::BallReach, seed);
        let spec = env.constraint().clone();
        let mut replay = DualReplay::new(10_000, EtaSchedule::default());
        let mut s = env.reset();
        for _ in 0..300 {
            let a = uniform_action(&*env, &mut rng);
            let o = augment_step(&mut *env, &spec, &pen, &s, &a).unwrap();
            let [r, c] = o.reward.as_array();
            replay.push(Transition { s: s.clone(), a, r, c, s_next: o.state.clone(), done: o.terminated, lam: Preference::new(0.5) });
            replay.tick_decay();
            s = if o.done { env.reset() } else { o.state };
        }
        prop_assert!(replay.d_a.iter().all(|t| t.c < 0.0 && t.s_next.vector == t.s.vector));
        prop_assert!(replay.d_r.iter().all(|t| t.c == 0.0));
    }

    #[test]
    fn eta_follows_the_step_schedule(eta0 in 0.0f64..=1.0, interval in 1u64..5000, factor in 0.01f64..=1.0, t in 0u64..1_000_000) {
        let sched = EtaSchedule { eta0, decay_interval: interval, decay_factor: factor };
        prop_assert_eq!(sched.at(t), eta0 * factor.powi((t / interval) as i32));
        prop_assert!(sched.at(t + interval) <= sched.at(t));
    }

    #[test]
    fn squash_is_a_bijection(u in prop::collection::vec(-4.999f64..4.999, 1..6), lo in -5.0f64..0.0, width in 0.1f64..10.0) {
        let abox = ActionBox::uniform(u.len(), lo, lo + width);
        let a = squash(&u, &abox);
        prop_assert!(abox.contains(&a));
        let back = unsquash(&a, &abox);
        for (x, y) in u.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + width), "{} vs {}", x, y);
        }
    }

    #[test]
    fn scalarization_is_linear(
        q1 in prop::array::uniform2(-10.0f64..10.0),
        q2 in prop::array::uniform2(-10.0f64..10.0),
        x in -3.0f64..3.0,
        y in -3.0f64..3.0,
        lr in 0.0f64..=1.0,
    ) {
        let lam = Preference::new(lr);
        let mix = [x * q1[0] + y * q2[0], x * q1[1] + y * q2[1]];
        let lhs = scalarize(mix, lam);
        let rhs = x * scalarize(q1, lam) + y * scalarize(q2, lam);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn soft_target_is_linear_in_preference(
        r in 0.0f64..1.0,
        c in prop::sample::select(vec![0.0, -0.1]),
        q in prop::array::uniform2(-20.0f64..20.0),
        alpha in 0.0f64..0.5,
        logp in -5.0f64..5.0,
        lr in 0.0f64..=1.0,
        done in any::<bool>(),
    ) {
        // Identical heads force the same twin choice for every preference.
        let t = |lam: Preference| scalarized_target([r, c], lam, 0.99, done, [q, q], alpha, logp);
        let lam = Preference::new(lr);
        let lin = lam.lambda_r * t(Preference::new(1.0)) + lam.lambda_c * t(Preference::new(0.0));
        prop_assert!((t(lam) - lin).abs() <= 1e-10);
    }

    #[test]
    fn value_iteration_contracts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, _) = random_instance(&mut rng);
        let sol = vi_constrained(&m, 1e-10);
        for w in sol.deltas.windows(2) {
            prop_assert!(w[1] <= m.gamma * w[0] + 1e-12, "{} > {} * {}", w[1], m.gamma, w[0]);
        }
    }

    #[test]
    fn metrics_csv_round_trips(rows in prop::collection::vec(
        (any::<u64>(), -1e9f64..1e9, -1e9f64..1e9, 0.0f64..=1.0, any::<u64>(), 0.0f64..=1.0, -1e6f64..1e6, -1e6f64..1e6, 0.0f64..1e6),
        0..20,
    )) {
        let rows: Vec<MetricsRow> = rows
            .into_iter()
            .map(|(step, wall_ms, eval_return, valid_action_rate, qp_count_cum, eta, critic_loss, policy_loss, per_action_inference_us)| MetricsRow {
                step, wall_ms, eval_return, valid_action_rate, qp_count_cum, eta, critic_loss, policy_loss, per_action_inference_us,
            })
            .collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}

#[test]
fn ring_buffer_draws_are_uniform() {
    let mut buf = RingBuffer::new(100);
    for i in 0..250 {
        buf.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut counts = [0u32; 100];
    for _ in 0..n {
        counts[buf.sample_index(&mut rng)] += 1;
    }
    let e = n as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
    assert!(buf.iter().all(|x| *x >= 150));
}

#[test]
fn valid_rate_estimator_is_unbiased() {
    let z = 0.7;
    let p = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(z) - 1.0;
    let spec = ConstraintSpec::boxed(vec![-z], vec![z]);
    let abox = ActionBox::uniform(1, -10.0, 10.0);
    let prop = IsotropicGaussian { mean: vec![0.0], sigma: 1.0 };
    let s = EnvState::new(vec![0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let reps = 5000;
    let mean = (0..reps).map(|_| valid_fraction(&prop, &s, &spec, &abox, 100, &mut rng).unwrap()).sum::<f64>() / reps as f64;
    let se = (p * (1.0 - p) / (100.0 * reps as f64)).sqrt();
    assert!((mean - p).abs() < 4.0 * se, "estimate {mean} vs {p}");
}

#[test]
fn policy_sampling_is_deterministic_under_seed() {
    let env = make(EnvId::Bss3z, 0);
    let draw = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pol = GaussianPolicy::new(Featurizer::for_env(&*env), &[16, 16], &mut rng);
        let s = EnvState::new(vec![rng.random_range(0.0..40.0); env.state_dim()]);
        (0..5).map(|_| pol.sample(&s, Preference::new(0.3), &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(4), draw(4));
    assert_ne!(draw(4), draw(5));
}
