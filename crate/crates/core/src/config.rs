//! Experiment configuration: plain `key = value` files plus overrides.

use std::path::{Path, PathBuf};

use crate::dynamics::ModelConfig;
use crate::error::{Error, Result};
use crate::mean_field::MuMode;
use crate::timing::TimingParams;

/// Where the initial (or simulated) local policy comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySource {
    Lcr,
    Root,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig<f64>,
    pub initial_policy: PolicySource,
    pub rhos: Vec<f64>,
    /// δ grid of the sweep.
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub block_steps: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub mu_mode: MuMode,
    pub tie_tolerance: f64,
}

pub const KEYS: &[&str] = &[
    "n_agents",
    "max_blocks",
    "alpha",
    "delta",
    "gamma",
    "epsilon",
    "reward",
    "initial_policy",
    "rho",
    "deltas",
    "seed",
    "block_steps",
    "threads",
    "out",
    "mu_mode",
    "tie_tolerance",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::table1(),
            initial_policy: PolicySource::Lcr,
            rhos: vec![0.5, 0.9, 0.99],
            deltas: vec![0.003, 0.005, 0.0075, 0.01, 0.015, 0.02, 0.03, 0.05],
            seed: 1,
            block_steps: 100_000,
            threads: None,
            out: PathBuf::from("out"),
            mu_mode: MuMode::BestResponse,
            tie_tolerance: 1e-9,
        }
    }
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped;
/// dashes in keys are accepted as underscores.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got `{}`", i + 1, line)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}

/// Table 1 defaults, then the file (if any), then `overrides` in order.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut pairs = Vec::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        pairs = parse_pairs(&text)?;
    }
    pairs.extend(overrides.iter().cloned());
    ExperimentConfig::from_pairs(&pairs)
}

impl ExperimentConfig {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut alpha = cfg.model.timing.alpha();
        let mut delta = cfg.model.timing.delta();
        for (key, value) in pairs {
            let key = key.replace('-', "_");
            let bad = |reason: &str| Error::Config(format!("key `{key}`: {reason} (got `{value}`)"));
            let num = || value.parse::<f64>().map_err(|_| bad("expected a number"));
            let int = || value.parse::<u64>().map_err(|_| bad("expected a non-negative integer"));
            let list = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| bad("expected comma-separated numbers")))
                    .collect()
            };
            match key.as_str() {
                "n_agents" => cfg.model.n_agents = int()? as usize,
                "max_blocks" => cfg.model.max_blocks = int()? as usize,
                "alpha" => alpha = num()?,
                "delta" => delta = num()?,
                "gamma" => cfg.model.gamma = num()?,
                "epsilon" => cfg.model.epsilon = num()?,
                "reward" => cfg.model.reward = num()?,
                "initial_policy" => {
                    cfg.initial_policy = match value.as_str() {
                        "lcr" | "LCR" => PolicySource::Lcr,
                        "root" => PolicySource::Root,
                        path => PolicySource::File(PathBuf::from(path)),
                    }
                }
                "rho" => {
                    cfg.rhos = list()?;
                    if cfg.rhos.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
                        return Err(bad("every rho must lie in (0, 1)"));
                    }
                }
                "deltas" => cfg.deltas = list()?,
                "seed" => cfg.seed = int()?,
                "block_steps" => cfg.block_steps = int()?,
                "threads" => cfg.threads = Some(int()? as usize).filter(|&t| t > 0),
                "out" => cfg.out = PathBuf::from(value),
                "mu_mode" => {
                    cfg.mu_mode = match value.as_str() {
                        "best-response" | "best_response" => MuMode::BestResponse,
                        "symmetric" => MuMode::Symmetric,
                        _ => return Err(bad("expected best-response or symmetric")),
                    }
                }
                "tie_tolerance" => {
                    cfg.tie_tolerance = num()?;
                    if !(cfg.tie_tolerance >= 0.0) {
                        return Err(bad("must be non-negative"));
                    }
                }
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        cfg.model.timing = TimingParams::new(alpha, delta)?;
        cfg.model.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_input_is_table1() {
        let cfg = parse_config(None, &[]).unwrap();
        assert_eq!(cfg.model.n_agents, 1000);
        assert_eq!(cfg.model.max_blocks, 5);
        assert_eq!(cfg.model.timing.alpha(), 0.001);
        assert_eq!(cfg.model.timing.delta(), 0.01);
        assert_eq!(cfg.model.gamma, 0.99);
        assert_eq!(cfg.model.epsilon, 0.01);
        assert_eq!(cfg.model.reward, 1.0);
        assert_eq!(cfg.initial_policy, PolicySource::Lcr);
    }

    #[test]
    fn rejects_large_epsilon() {
        let err = ExperimentConfig::from_pairs(&pairs(&[("epsilon", "0.6")])).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_pairs(&pairs(&[("colour", "red")])).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# test\ndelta = 0.02\nmax-blocks = 4\nrho = 0.5, 0.9\n").unwrap();
        let cfg = parse_config(Some(&path), &pairs(&[("delta", "0.005")])).unwrap();
        assert_eq!(cfg.model.timing.delta(), 0.005);
        assert_eq!(cfg.model.max_blocks, 4);
        assert_eq!(cfg.rhos, vec![0.5, 0.9]);
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_pairs("delta 0.1").is_err());
        assert!(ExperimentConfig::from_pairs(&pairs(&[("seed", "-3")])).is_err());
        assert!(ExperimentConfig::from_pairs(&pairs(&[("rho", "0.5,1.0")])).is_err());
        assert!(parse_config(Some(Path::new("/nonexistent/x.cfg")), &[]).is_err());
    }
}
