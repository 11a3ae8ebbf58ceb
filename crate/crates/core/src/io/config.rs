use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dagger::{DaggerConfig, Method};
use crate::diffusion::PolicyConfig;
use crate::env::{CircleNav, NavConfig, Task, TwoGoalConfig, TwoGoalReach};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Circle(NavConfig),
    TwoGoal(TwoGoalConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Circle(NavConfig::default())
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Task>> {
        Ok(match self {
            EnvConfig::Circle(c) => Box::new(CircleNav::new(c.clone())?),
            EnvConfig::TwoGoal(c) => Box::new(TwoGoalReach::new(c.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub probes_per_region: usize,
    /// Success band the behavior-cloning policy is tuned into before
    /// query evaluation.
    pub bc_success_band: [f64; 2],
    pub bc_max_epochs: usize,
    pub bc_tuning_trials: usize,
    pub timing_decisions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            probes_per_region: 100,
            bc_success_band: [0.35, 0.65],
            bc_max_epochs: 300,
            bc_tuning_trials: 6,
            timing_decisions: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub method: Method,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub dagger: DaggerConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl RunConfig {
    pub fn new(env: EnvConfig, method: Method) -> Self {
        Self {
            env,
            method,
            policy: PolicyConfig::default(),
            dagger: DaggerConfig::default(),
            eval: EvalConfig::default(),
            out_dir: default_out_dir(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.build()?;
        self.policy.validate()?;
        self.dagger.validate()?;
        if self.policy.obs_dim != 2 || self.policy.action_dim != 2 {
            return Err(Error::config("navigation tasks use obs_dim = action_dim = 2"));
        }
        let e = &self.eval;
        if e.episodes == 0 || e.probes_per_region == 0 || e.timing_decisions == 0 {
            return Err(Error::config("evaluation counts must be >= 1"));
        }
        let [lo, hi] = e.bc_success_band;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::config("bc_success_band must satisfy 0 <= lo <= hi <= 1"));
        }
        Ok(())
    }

    /// DAgger settings with the master seed applied.
    pub fn dagger_config(&self) -> DaggerConfig {
        DaggerConfig {
            seed: self.seed,
            ..self.dagger.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            let line = e.line();
            let context = text.lines().nth(line.saturating_sub(1)).unwrap_or("").trim();
            Error::Config(format!(
                "{}:{line}:{}: {e}\n  | {context}",
                origin.display(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }
}

/// Reads, validates and logs a run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::parse(&text, path)?;
    log::info!("effective configuration:\n{}", config.to_json()?);
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse(r#"{"env": {"kind": "circle"}, "method": "diff"}"#).unwrap();
        assert_eq!(c.dagger.alpha, 0.99);
        assert_eq!(c.dagger.patience, 2);
        assert_eq!(c.dagger.loss_batch, 512);
        assert_eq!(c.env, EnvConfig::Circle(NavConfig::default()));
    }

    #[test]
    fn out_of_range_alpha_is_rejected() {
        let e = parse(r#"{"env": {"kind": "circle"}, "method": "diff", "dagger": {"alpha": 1.5}}"#);
        assert!(matches!(e, Err(Error::Config(m)) if m.contains("alpha")));
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let text = "{\n  \"env\": {\"kind\": \"circle\"},\n  \"method\": \"diff\",\n  \"dagger\": {\"alpah\": 0.9}\n}";
        let Err(Error::Config(m)) = parse(text) else {
            panic!("expected a config error")
        };
        assert!(m.contains("test.json:4:"), "{m}");
        assert!(m.contains("alpah"), "{m}");
    }

    #[test]
    fn unknown_env_field_is_rejected() {
        assert!(parse(r#"{"env": {"kind": "circle", "radus": 2}, "method": "bc"}"#).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = RunConfig::new(EnvConfig::TwoGoal(TwoGoalConfig::default()), Method::Ensemble);
        c.seed = 17;
        c.dagger.alpha = 0.95;
        let again = parse(&c.to_json().unwrap()).unwrap();
        assert_eq!(again, c);
    }
}
