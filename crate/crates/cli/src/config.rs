//! Flat `key=value` configuration files and their merge with command-line
//! flags. Precedence: built-in defaults, then the file, then flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mbfpca::data::PROTECTED_COLUMN;
use mbfpca::metrics::ClassifierOptions;
use mbfpca::pipeline::PipelineConfig;
use mbfpca::RepmsConfig;

/// Settings shared by `fit` and `compare`.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub protected: String,
    pub outcome: Option<String>,
    pub dim: Option<usize>,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub splits: usize,
    pub train_frac: f64,
    pub sigma: Option<f64>,
    pub repms: RepmsConfig,
    pub classifier: ClassifierOptions,
}

impl Default for Settings {
    fn default() -> Self {
        let repms = RepmsConfig::default();
        Settings {
            protected: PROTECTED_COLUMN.to_string(),
            outcome: None,
            dim: None,
            taus: vec![repms.tau],
            seed: 0,
            splits: 10,
            train_frac: 0.7,
            sigma: None,
            repms,
            classifier: ClassifierOptions::default(),
        }
    }
}

/// Splits `key=value` lines. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {line:?}", i + 1);
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .parse()
        .with_context(|| format!("invalid value {value:?} for {key}"))
}

pub fn parse_taus(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|t| num::<f64>("tau", t.trim()))
        .collect()
}

impl Settings {
    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "protected" => self.protected = value.to_string(),
            "outcome" => {
                self.outcome = match value {
                    "" | "none" => None,
                    v => Some(v.to_string()),
                }
            }
            "dim" => self.dim = Some(num(key, value)?),
            "tau" => self.taus = parse_taus(value)?,
            "seed" => self.seed = num(key, value)?,
            "splits" => self.splits = num(key, value)?,
            "train_frac" => self.train_frac = num(key, value)?,
            "sigma" => self.sigma = Some(num(key, value)?),
            "max_outer_iters" => self.repms.max_outer_iters = num(key, value)?,
            "eps0" => self.repms.eps0 = num(key, value)?,
            "eps_min" => self.repms.eps_min = num(key, value)?,
            "theta_eps" => self.repms.theta_eps = num(key, value)?,
            "rho0" => self.repms.rho0 = num(key, value)?,
            "theta_rho" => self.repms.theta_rho = num(key, value)?,
            "rho_max" => self.repms.rho_max = num(key, value)?,
            "d_min" => self.repms.d_min = num(key, value)?,
            "inner_max_iters" => self.repms.inner_max_iters = num(key, value)?,
            "classifier_lambda" => self.classifier.lambda = num(key, value)?,
            "classifier_tol" => self.classifier.tol = num(key, value)?,
            "classifier_max_iters" => self.classifier.max_iters = num(key, value)?,
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (k, v) in parse_pairs(&text).with_context(|| format!("in {}", path.display()))? {
            self.apply_pair(&k, &v)
                .with_context(|| format!("in {}", path.display()))?;
        }
        Ok(())
    }

    pub fn dim(&self) -> Result<usize> {
        self.dim.context("target dimension not set (use --dim or dim= in the config file)")
    }

    pub fn outcome_column(&self) -> Option<&str> {
        self.outcome.as_deref()
    }

    /// Pipeline settings for one τ and seed.
    pub fn pipeline(&self, tau: f64, seed: u64) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::new(self.dim()?);
        cfg.repms = RepmsConfig {
            tau,
            seed,
            ..self.repms.clone()
        };
        cfg.sigma = self.sigma;
        cfg.classifier = self.classifier;
        cfg.repms.validate()?;
        Ok(cfg)
    }

    /// Every effective setting, for manifests.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let r = &self.repms;
        let taus: Vec<String> = self.taus.iter().map(f64::to_string).collect();
        [
            ("protected", self.protected.clone()),
            ("outcome", self.outcome.clone().unwrap_or_else(|| "none".into())),
            ("dim", self.dim.map_or_else(|| "unset".into(), |d| d.to_string())),
            ("tau", taus.join(",")),
            ("seed", self.seed.to_string()),
            ("splits", self.splits.to_string()),
            ("train_frac", self.train_frac.to_string()),
            ("sigma", self.sigma.map_or_else(|| "median_heuristic".into(), |s| s.to_string())),
            ("max_outer_iters", r.max_outer_iters.to_string()),
            ("eps0", r.eps0.to_string()),
            ("eps_min", r.eps_min.to_string()),
            ("theta_eps", r.theta_eps.to_string()),
            ("rho0", r.rho0.to_string()),
            ("theta_rho", r.theta_rho.to_string()),
            ("rho_max", r.rho_max.to_string()),
            ("d_min", r.d_min.to_string()),
            ("inner_max_iters", r.inner_max_iters.to_string()),
            ("classifier_lambda", self.classifier.lambda.to_string()),
            ("classifier_tol", self.classifier.tol.to_string()),
            ("classifier_max_iters", self.classifier.max_iters.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
