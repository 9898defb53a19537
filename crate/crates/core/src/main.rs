use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use acrl::approx::{load_nets, Featurizer, GaussianPolicy, ProposalNoise};
use acrl::envs::{make, EnvId};
use acrl::harness::{bench_arm, evaluate_policy, evaluate_uniform_feasible, write_csv, ActionMode, RunConfig};
use acrl::mosac::{train, Algo};
use acrl::tabular::{interior_lambda_grid, random_instance, verify_equivalence};
use acrl::{AcrlError, ArmConfig, Preference};

#[derive(Parser)]
#[command(name = "acrl", version, about = "Action-constrained RL with acceptance-rejection sampling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one agent and write metrics.csv and a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Brute-force check of the augmented/constrained equivalence on random tabular MDPs.
    #[command(name = "verify-prop1")]
    VerifyProp1 {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Acceptance rate and KS statistics of the rejection sampler.
    #[command(name = "bench-arm")]
    BenchArm {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run `train` for several seeds, one child process per seed.
    Sweep {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Args, Clone, Default)]
struct TrainArgs {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Output directory (default: runs/<env>_<algo>_<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Extra option overrides, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "aram")]
    algo: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0.9)]
    lambda_r: f64,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<AcrlError> for Failure {
    fn from(e: AcrlError) -> Self {
        match e {
            AcrlError::Config(_) | AcrlError::UnknownEnv(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("ACRL_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure::Config(format!("ACRL_SEED={v:?} is not a u64"))),
        Err(_) => Ok(None),
    }
}

fn seed_or_env(seed: Option<u64>) -> Result<u64, Failure> {
    Ok(seed.or(env_seed()?).unwrap_or(0))
}

fn build_run_config(a: &TrainArgs) -> Result<(RunConfig, PathBuf, PathBuf), Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if a.config.is_none() || a.seed.is_some() {
        cfg.seed = seed_or_env(a.seed)?;
    }
    for kv in &a.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| Failure::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(e) = &a.env {
        cfg.set("env", e)?;
    }
    if let Some(x) = &a.algo {
        cfg.set("algo", x)?;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}_{}_{}", cfg.env, cfg.algo.as_str(), cfg.seed)));
    let metrics = a.metrics.clone().unwrap_or_else(|| dir.join("metrics.csv"));
    let ckpt = a
        .checkpoint
        .clone()
        .or(cfg.trainer.checkpoint.clone())
        .unwrap_or_else(|| dir.join("checkpoint.bin"));
    cfg.trainer.checkpoint = Some(ckpt);
    cfg.validate()?;
    Ok((cfg, dir, metrics))
}

fn ensure_parent(p: &Path) -> std::io::Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d),
        _ => Ok(()),
    }
}

fn run_train(a: &TrainArgs) -> Result<(), Failure> {
    let (cfg, _dir, metrics) = build_run_config(a)?;
    ensure_parent(&metrics)?;
    if let Some(c) = &cfg.trainer.checkpoint {
        ensure_parent(c)?;
    }
    let out = train(cfg.env, &cfg.trainer, cfg.algo, cfg.seed, cfg.steps)?;
    write_csv(BufWriter::new(File::create(&metrics)?), &out.log.rows)?;
    let last = out.log.last();
    println!(
        "{}",
        json!({
            "env": cfg.env.to_string(),
            "algo": cfg.algo.as_str(),
            "seed": cfg.seed,
            "steps": cfg.steps,
            "rows": out.log.rows.len(),
            "final_return": last.map(|r| r.eval_return),
            "final_valid_rate": last.map(|r| r.valid_action_rate),
            "qp_count": out.log.qp_count,
            "wall_ms": out.log.wall_ms,
            "metrics": metrics.display().to_string(),
        })
    );
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<(), Failure> {
    let env_id: EnvId = a.env.parse()?;
    let algo: Algo = a.algo.parse()?;
    let lam = Preference::try_from_pair(a.lambda_r, 1.0 - a.lambda_r)?;
    let seed = seed_or_env(a.seed)?;
    let nets = load_nets(&a.checkpoint)?;
    let trunk = nets.into_iter().next().ok_or_else(|| Failure::Run("empty checkpoint".into()))?;
    let mut env = make(env_id, seed);
    let feat = Featurizer::for_env(&*env);
    if trunk.input_dim() != feat.policy_input_dim() || trunk.output_dim() != 2 * feat.action_dim() {
        return Err(Failure::Config(format!("checkpoint does not match environment {env_id}")));
    }
    let policy = GaussianPolicy { trunk, feat };
    let mode = match algo {
        Algo::Aram => ActionMode::Arm(ArmConfig::evaluation()),
        Algo::ProjectionBaseline => ActionMode::Project,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = evaluate_policy(&policy, &mut *env, lam, a.episodes, mode, ProposalNoise::Gaussian, &mut rng)?;
    let mut env = make(env_id, seed);
    let random = evaluate_uniform_feasible(&mut *env, a.episodes, &mut rng)?;
    println!(
        "{}",
        json!({
            "env": env_id.to_string(),
            "return": r.mean_return,
            "valid_action_rate": r.valid_rate,
            "per_action_inference_us": r.inference_us,
            "qp_calls": r.qp_calls,
            "random_feasible_return": random,
        })
    );
    Ok(())
}

fn run_verify(instances: usize, seed: Option<u64>, tol: f64) -> Result<bool, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_or_env(seed)?);
    let grid = interior_lambda_grid();
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let mut all = true;
    for i in 0..instances {
        let (m, k) = random_instance(&mut rng);
        let rep = verify_equivalence(&m, k, &grid, tol)?;
        all &= rep.passed();
        let mut v = serde_json::to_value(&rep).map_err(|e| Failure::Run(e.to_string()))?;
        v["instance"] = json!(i);
        v["passed"] = json!(rep.passed());
        writeln!(w, "{v}")?;
    }
    Ok(all)
}

fn run_sweep(seeds: u64, first: u64, a: &TrainArgs) -> Result<bool, Failure> {
    let exe = std::env::current_exe()?;
    let mut ok = true;
    for seed in first..first + seeds {
        let mut cmd = Command::new(&exe);
        cmd.arg("train").arg("--seed").arg(seed.to_string());
        if let Some(c) = &a.config {
            cmd.arg("--config").arg(c);
        }
        for (flag, v) in [("--env", &a.env), ("--algo", &a.algo)] {
            if let Some(v) = v {
                cmd.arg(flag).arg(v);
            }
        }
        if let Some(s) = a.steps {
            cmd.arg("--steps").arg(s.to_string());
        }
        if let Some(o) = &a.out {
            cmd.arg("--out").arg(o.join(format!("seed_{seed}")));
        }
        for s in &a.sets {
            cmd.arg("--set").arg(s);
        }
        let status = cmd.status()?;
        if !status.success() {
            eprintln!("seed {seed} failed with {status}");
            ok = false;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Train(a) => run_train(a).map(|_| true),
        Cmd::Eval(a) => run_eval(a).map(|_| true),
        Cmd::VerifyProp1 { instances, seed, tol } => run_verify(*instances, *seed, *tol),
        Cmd::BenchArm { env, samples, seed } => (|| {
            let id: EnvId = env.parse()?;
            let b = bench_arm(id, seed_or_env(*seed)?, *samples)?;
            println!("{}", serde_json::to_string(&b).map_err(|e| Failure::Run(e.to_string()))?);
            Ok(true)
        })(),
        Cmd::Sweep { seeds, first_seed, train } => run_sweep(*seeds, *first_seed, train),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
