//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Every setting a training run reads. `num_classes` and `input_dim` are
/// taken from the dataset when unset or `auto`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kernels: Vec<usize>,
    pub layers_per_stage: usize,
    pub feature_maps: usize,
    pub num_classes: Option<usize>,
    pub input_dim: Option<usize>,
    pub num_decoders: usize,
    pub causal: bool,
    pub dropout: f64,
    pub alpha_base: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub smooth_tau: f64,
    pub smooth_lambda: f64,
    pub seed: u64,
    pub data_root: Option<PathBuf>,
    pub split: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            kernels: m.kernels,
            layers_per_stage: m.layers_per_stage,
            feature_maps: m.feature_maps,
            num_classes: None,
            input_dim: None,
            num_decoders: m.num_decoders,
            causal: m.causal,
            dropout: m.dropout,
            alpha_base: m.alpha_base,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            smooth_tau: t.smooth_tau,
            smooth_lambda: t.smooth_lambda,
            seed: t.seed,
            data_root: None,
            split: "train".into(),
        }
    }
}

/// Recognized keys, in echo order.
pub const KEYS: [&str; 16] = [
    "kernels",
    "layers_per_stage",
    "feature_maps",
    "num_classes",
    "input_dim",
    "num_decoders",
    "causal",
    "dropout",
    "alpha_base",
    "epochs",
    "learning_rate",
    "smooth_tau",
    "smooth_lambda",
    "seed",
    "data_root",
    "split",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn prefixed(context: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
        other => other,
    }
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// Applies one setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "kernels" => {
                self.kernels = value
                    .split(',')
                    .map(|k| parse("kernels", k.trim()))
                    .collect::<Result<_>>()?
            }
            "layers_per_stage" => self.layers_per_stage = parse(key, value)?,
            "feature_maps" => self.feature_maps = parse(key, value)?,
            "num_classes" => self.num_classes = parse_auto(key, value)?,
            "input_dim" => self.input_dim = parse_auto(key, value)?,
            "num_decoders" => self.num_decoders = parse(key, value)?,
            "causal" => self.causal = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "alpha_base" => self.alpha_base = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "smooth_tau" => self.smooth_tau = parse(key, value)?,
            "smooth_lambda" => self.smooth_lambda = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "data_root" => self.data_root = (!value.is_empty()).then(|| PathBuf::from(value)),
            "split" => self.split = value.to_string(),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// `key=value` assignment as given on the command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    /// Parses a config file body over the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set_assignment(line)
                .map_err(|e| prefixed(&format!("line {}", i + 1), e))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| prefixed(&path.display().to_string(), e))
    }

    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            kernels: self.kernels.clone(),
            layers_per_stage: self.layers_per_stage,
            feature_maps: self.feature_maps,
            input_dim: self.input_dim.unwrap_or(input_dim),
            num_classes: self.num_classes.unwrap_or(num_classes),
            num_decoders: self.num_decoders,
            causal: self.causal,
            dropout: self.dropout,
            alpha_base: self.alpha_base,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            dropout: self.dropout,
            smooth_tau: self.smooth_tau,
            smooth_lambda: self.smooth_lambda,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

/// One `key=value` line per key, in [`KEYS`] order.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |v| v.to_string());
        let kernels: Vec<String> = self.kernels.iter().map(usize::to_string).collect();
        let values = [
            kernels.join(","),
            self.layers_per_stage.to_string(),
            self.feature_maps.to_string(),
            opt(self.num_classes),
            opt(self.input_dim),
            self.num_decoders.to_string(),
            self.causal.to_string(),
            self.dropout.to_string(),
            self.alpha_base.to_string(),
            self.epochs.to_string(),
            self.learning_rate.to_string(),
            self.smooth_tau.to_string(),
            self.smooth_lambda.to_string(),
            self.seed.to_string(),
            self.data_root
                .as_ref()
                .map_or(String::new(), |p| p.display().to_string()),
            self.split.clone(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_over_defaults() {
        let cfg = RunConfig::parse("# comment\nkernels = 3,5\n\nepochs=7\ncausal=true\n").unwrap();
        assert_eq!(cfg.kernels, vec![3, 5]);
        assert_eq!(cfg.epochs, 7);
        assert!(cfg.causal);
        assert_eq!(cfg.feature_maps, 64);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::parse("epochs=3\nbatch_size=4\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_value_rejected() {
        assert!(RunConfig::parse("epochs=many").is_err());
        assert!(RunConfig::parse("epochs").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("num_classes", "5").unwrap();
        cfg.set("data_root", "/tmp/d").unwrap();
        let echoed = cfg.to_string();
        assert_eq!(echoed.lines().count(), KEYS.len());
        assert_eq!(RunConfig::parse(&echoed).unwrap(), cfg);
    }
}
