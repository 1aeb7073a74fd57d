//! Flat `key = value` configuration.
//!
//! ```text
//! # comment
//! sampling.strategy = exp-weighted
//! model.steps = 3
//! train.lr = 0.0002
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::engine::Hyperparams;
use crate::error::{Error, Result};
use crate::sampler::SamplingConfig;
use crate::trainer::TrainingConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub hyper: Hyperparams,
    pub sampling: SamplingConfig,
    pub train: TrainingConfig,
}

pub const KEYS: &[&str] = &[
    "sampling.strategy",
    "sampling.budget",
    "sampling.seed",
    "model.steps",
    "model.prune_k",
    "model.gamma",
    "model.agg",
    "model.leaky_slope",
    "model.dim_static",
    "model.dim_time",
    "train.lr",
    "train.batch",
    "train.epochs",
    "train.seed",
    "train.skip_missing_answer",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.update_from_file(path)?;
        Ok(cfg)
    }

    /// Applies the keys in `path` on top of the current values.
    pub fn update_from_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.update_from_str(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.update_from_str(text)?;
        Ok(cfg)
    }

    pub fn update_from_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: "<config>".into(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(|e| parse_err(e.to_string()))?;
        }
        self.validate()
    }

    /// Sets one key; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sampling.strategy" => self.sampling.strategy = value.to_string(),
            "sampling.budget" => self.sampling.budget = parse(key, value)?,
            "sampling.seed" => self.sampling.seed = parse(key, value)?,
            "model.steps" => self.hyper.steps = parse(key, value)?,
            "model.prune_k" => self.hyper.prune_k = parse(key, value)?,
            "model.gamma" => self.hyper.gamma = parse(key, value)?,
            "model.agg" => self.hyper.agg = value.to_string(),
            "model.leaky_slope" => self.hyper.leaky_slope = parse(key, value)?,
            "model.dim_static" => self.hyper.dim_static = parse(key, value)?,
            "model.dim_time" => self.hyper.dim_time = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.batch" => self.train.batch = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "train.skip_missing_answer" => self.train.skip_missing_answer = parse(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key `{key}` (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Seeds both sampling and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.sampling.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.sampling.validate()?;
        self.train.validate()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = &self.hyper;
        let s = &self.sampling;
        let t = &self.train;
        writeln!(f, "sampling.strategy = {}", s.strategy)?;
        writeln!(f, "sampling.budget = {}", s.budget)?;
        writeln!(f, "sampling.seed = {}", s.seed)?;
        writeln!(f, "model.steps = {}", h.steps)?;
        writeln!(f, "model.prune_k = {}", h.prune_k)?;
        writeln!(f, "model.gamma = {}", h.gamma)?;
        writeln!(f, "model.agg = {}", h.agg)?;
        writeln!(f, "model.leaky_slope = {}", h.leaky_slope)?;
        writeln!(f, "model.dim_static = {}", h.dim_static)?;
        writeln!(f, "model.dim_time = {}", h.dim_time)?;
        writeln!(f, "train.lr = {}", t.lr)?;
        writeln!(f, "train.batch = {}", t.batch)?;
        writeln!(f, "train.epochs = {}", t.epochs)?;
        writeln!(f, "train.seed = {}", t.seed)?;
        writeln!(f, "train.skip_missing_answer = {}", t.skip_missing_answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let cfg = Config::parse_str(
            "# tuned\nsampling.strategy = uniform\nsampling.budget=8\nmodel.gamma = 0.25 # inline\n\ntrain.skip_missing_answer = true\n",
        )
        .unwrap();
        assert_eq!(cfg.sampling.strategy, "uniform");
        assert_eq!(cfg.sampling.budget, 8);
        assert_eq!(cfg.hyper.gamma, 0.25);
        assert!(cfg.train.skip_missing_answer);
        assert_eq!(cfg.hyper.steps, 3);
    }

    #[test]
    fn unknown_key_and_bad_values_fail_with_line() {
        match Config::parse_str("model.steps = 2\nmodel.colour = red\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(Config::parse_str("model.steps = two").is_err());
        assert!(Config::parse_str("no equals sign").is_err());
        assert!(Config::parse_str("model.gamma = 1.5").is_err());
        assert!(Config::parse_str("sampling.strategy = psychic").is_err());
    }

    #[test]
    fn display_roundtrips() {
        let mut cfg = Config::default();
        cfg.set("model.agg", "mean").unwrap();
        cfg.set_seed(42);
        let again = Config::parse_str(&cfg.to_string()).unwrap();
        assert_eq!(cfg, again);
    }
}
