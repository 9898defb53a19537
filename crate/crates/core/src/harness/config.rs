use std::path::{Path, PathBuf};

use crate::envs::EnvId;
use crate::error::{AcrlError, Result};
use crate::mdp::Preference;
use crate::mosac::{Algo, TrainerConfig};
use crate::approx::ProposalNoise;

/// Everything a `train` invocation needs. Loaded from `key = value` lines
/// (`#` starts a comment) and then overridden by command-line flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvId,
    pub algo: Algo,
    pub seed: u64,
    pub steps: u64,
    pub out: Option<PathBuf>,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvId::BallReach,
            algo: Algo::Aram,
            seed: 0,
            steps: 30_000,
            out: None,
            trainer: TrainerConfig::desk(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| AcrlError::Config(format!("bad value {v:?} for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split([',', 'x']).map(|p| parse(key, p.trim())).collect()
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AcrlError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Sets one option by name. Unknown keys are an error.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.trainer;
        match key {
            "env" => self.env = v.parse()?,
            "algo" => self.algo = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "gamma" => t.gamma = parse(key, v)?,
            "tau" => t.tau = parse(key, v)?,
            "lr" => t.lr = parse(key, v)?,
            "batch" => t.batch = parse(key, v)?,
            "hidden" => t.hidden = parse_list(key, v)?,
            "target_update_interval" => t.target_update_interval = parse(key, v)?,
            "gradient_steps" => t.gradient_steps = parse(key, v)?,
            "alpha" => t.alpha = parse(key, v)?,
            "k" | "K" => t.k = parse(key, v)?,
            "eta0" => t.eta.eta0 = parse(key, v)?,
            "eta_decay_interval" => t.eta.decay_interval = parse(key, v)?,
            "eta_decay_factor" => t.eta.decay_factor = parse(key, v)?,
            "buffer_capacity" => t.buffer_capacity = parse(key, v)?,
            "eval_lambda_r" => t.eval_preference = Preference::try_from_pair(parse(key, v)?, 1.0 - parse::<f64>(key, v)?)?,
            "warmup_steps" => t.warmup_steps = parse(key, v)?,
            "max_rejected_stored" => t.max_rejected_stored = parse(key, v)?,
            "max_attempts" => t.arm.max_attempts = parse(key, v)?,
            "eval_max_attempts" => t.eval_arm.max_attempts = parse(key, v)?,
            "student_t_nu" => {
                let nu: f64 = parse(key, v)?;
                t.noise = if nu > 0.0 { ProposalNoise::StudentT(nu) } else { ProposalNoise::Gaussian };
            }
            "eval_interval" => t.eval_interval = parse(key, v)?,
            "eval_episodes" => t.eval_episodes = parse(key, v)?,
            "checkpoint" => t.checkpoint = Some(PathBuf::from(v)),
            _ => return Err(AcrlError::Config(format!("unknown option {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trainer.arm.max_attempts == 0 || self.trainer.eval_arm.max_attempts == 0 {
            return Err(AcrlError::Config("max_attempts must be at least 1".into()));
        }
        if self.trainer.eval_interval as u64 > self.steps {
            return Err(AcrlError::Config("eval_interval exceeds total steps".into()));
        }
        self.trainer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_overrides() {
        let text = "# desk run\nenv = NSFnetLite\nalgo=projection\nseed = 7\nhidden = 32,32\nalpha=0.05 # lower\n";
        let mut cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.env, EnvId::NsfnetLite);
        assert_eq!(cfg.algo, Algo::ProjectionBaseline);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.trainer.hidden, vec![32, 32]);
        assert_eq!(cfg.trainer.alpha, 0.05);
        cfg.set("seed", "9").unwrap();
        assert_eq!(cfg.seed, 9);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_garbage() {
        assert!(RunConfig::from_text("nonsense").is_err());
        assert!(RunConfig::from_text("bogus = 1").is_err());
        assert!(RunConfig::from_text("batch = -3").is_err());
        let cfg = RunConfig::from_text("gamma = 1.5").unwrap();
        assert!(cfg.validate().is_err());
    }
}
