use crate::attention::window_schedule;
use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Convolution kernel of each scale branch; the first must be 3.
    pub kernels: Vec<usize>,
    pub layers_per_stage: usize,
    /// Hidden channel count `C`.
    pub feature_maps: usize,
    /// Feature dimension `D` of the input frames.
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_decoders: usize,
    pub causal: bool,
    pub dropout: f64,
    /// Decoder `d` fuses attention with weight `alpha_base^-(d-1)`.
    pub alpha_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernels: vec![3, 5, 17],
            layers_per_stage: 10,
            feature_maps: 64,
            input_dim: 64,
            num_classes: 7,
            num_decoders: 3,
            causal: false,
            dropout: 0.5,
            alpha_base: 2.0,
        }
    }
}

impl ModelConfig {
    /// Offline model: one encoder, three refinement decoders.
    pub fn offline(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_dim,
            num_classes,
            ..Self::default()
        }
    }

    /// Online (causal) model: one encoder, one decoder, no normalization.
    pub fn online(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_dim,
            num_classes,
            num_decoders: 1,
            causal: true,
            ..Self::default()
        }
    }

    pub fn num_stages(&self) -> usize {
        1 + self.num_decoders
    }

    /// Checks every field, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.kernels.is_empty() {
            bad.push("kernels must not be empty".to_string());
        } else {
            if self.kernels[0] != 3 {
                bad.push(format!("first kernel must be 3, got {}", self.kernels[0]));
            }
            if self.kernels.windows(2).any(|w| w[0] >= w[1]) {
                bad.push(format!("kernels must be strictly increasing: {:?}", self.kernels));
            }
            for &k in &self.kernels {
                if k < 3 || k % 2 == 0 {
                    bad.push(format!("kernel {k} must be odd and >= 3"));
                } else if window_schedule(k, self.layers_per_stage.max(1)).is_err() {
                    bad.push(format!(
                        "kernel {k} has no window at layer {}",
                        self.layers_per_stage
                    ));
                }
            }
        }
        if self.layers_per_stage < 1 {
            bad.push("layers_per_stage must be >= 1".into());
        }
        if self.layers_per_stage > 30 {
            bad.push(format!("layers_per_stage {} is too deep", self.layers_per_stage));
        }
        if self.feature_maps < 1 {
            bad.push("feature_maps must be >= 1".into());
        }
        if self.input_dim < 1 {
            bad.push("input_dim must be >= 1".into());
        }
        if self.num_classes < 1 {
            bad.push("num_classes must be >= 1".into());
        }
        if self.num_decoders < 1 {
            bad.push("num_decoders must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.alpha_base.is_finite() && self.alpha_base > 0.0) {
            bad.push(format!("alpha_base must be positive, got {}", self.alpha_base));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Attention weight of decoder `decoder` (1-based): `base^-(decoder-1)`.
pub fn alpha_schedule(decoder: usize, alpha_base: f64) -> f64 {
    alpha_base.powi(-(decoder.max(1) as i32 - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_decays_from_one() {
        assert_eq!(alpha_schedule(1, 2.0), 1.0);
        assert_eq!(alpha_schedule(2, 2.0), 0.5);
        assert_eq!(alpha_schedule(3, 2.0), 0.25);
    }

    #[test]
    fn presets_match_architecture_counts() {
        let off = ModelConfig::offline(32, 7);
        assert_eq!(off.num_stages(), 4);
        assert_eq!(off.layers_per_stage, 10);
        assert_eq!(off.feature_maps, 64);
        assert!(!off.causal);
        let on = ModelConfig::online(32, 7);
        assert_eq!(on.num_stages(), 2);
        assert!(on.causal);
        off.validate().unwrap();
        on.validate().unwrap();
    }

    #[test]
    fn validate_lists_every_violation() {
        let cfg = ModelConfig {
            kernels: vec![5, 4],
            num_decoders: 0,
            dropout: 1.0,
            ..ModelConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        for needle in ["first kernel", "strictly increasing", "kernel 4", "num_decoders", "dropout"] {
            assert!(msg.contains(needle), "{needle} missing from {msg}");
        }
    }
}
