//! Lives in its own test binary so that no other test touches the
//! process-wide projection tally while it runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use acrl::arm::{arm_sample, ArmConfig, Fallback, IsotropicGaussian};
use acrl::envs::{make, sample_uniform_feasible, EnvId};
use acrl::harness::projection_baseline_step;
use acrl::mdp::{ActionBox, ActionVec, EnvState};
use acrl::mosac::{train, Algo, TrainerConfig};
use acrl::projection::{project_ball, project_dykstra, projection_calls_total};
use acrl::{project_onto_feasible, ConstraintSpec, QpCounter};

#[test]
fn every_projection_is_counted_exactly_once() {
    let start = projection_calls_total();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = EnvState::new(vec![0.0]);
    let spec = ConstraintSpec::ball(2, 0.05);
    let abox = ActionBox::uniform(2, -1.0, 1.0);

    let direct = QpCounter::new();
    for a in [[0.9, 0.9], [0.01, 0.0], [-1.0, 0.2]] {
        project_onto_feasible(&spec, &s, &ActionVec::new(a.to_vec()), &abox, &direct).unwrap();
    }
    assert_eq!(direct.get(), 3, "feasible inputs are still a counted call");

    let arm = QpCounter::new();
    let far = IsotropicGaussian { mean: vec![0.9, 0.9], sigma: 1e-3 };
    let near = IsotropicGaussian { mean: vec![0.0, 0.0], sigma: 1e-3 };
    let cfg = ArmConfig::new(5, Fallback::Project);
    for _ in 0..7 {
        assert!(arm_sample(&far, &s, &spec, &abox, &cfg, &mut rng, &arm).unwrap().fallback_used);
        assert!(!arm_sample(&near, &s, &spec, &abox, &cfg, &mut rng, &arm).unwrap().fallback_used);
    }
    assert_eq!(arm.get(), 7);

    let baseline = QpCounter::new();
    let mut used = 0;
    for _ in 0..10 {
        used += projection_baseline_step(&far, &s, &spec, &abox, &mut rng, &baseline).unwrap().qp_used as u64;
        used += projection_baseline_step(&near, &s, &spec, &abox, &mut rng, &baseline).unwrap().qp_used as u64;
    }
    assert_eq!(baseline.get(), used);
    assert_eq!(used, 10);

    let uniform = QpCounter::new();
    let env = make(EnvId::BallReach, 0);
    let s_env = make(EnvId::BallReach, 0).reset();
    for _ in 0..4 {
        sample_uniform_feasible(&*env, &s_env, 1, &mut rng, &uniform).unwrap();
    }

    // Closed-form helpers are building blocks, not counted operations.
    let before_helpers = projection_calls_total();
    project_ball(&[3.0, 4.0], 1.0);
    project_dykstra(&[3.0, 4.0], &[spec.clone()], &s, 1000, 1e-9).unwrap();
    assert_eq!(projection_calls_total(), before_helpers);

    let cfg = TrainerConfig { hidden: vec![8], batch: 8, warmup_steps: 50, eval_interval: 0, ..TrainerConfig::desk() };
    let run = train(EnvId::BallReach, &cfg, Algo::ProjectionBaseline, 3, 300).unwrap();
    assert!(run.log.qp_count > 0);

    let counted = direct.get() + arm.get() + baseline.get() + uniform.get() + run.log.qp_count;
    assert_eq!(projection_calls_total() - start, counted);
}
