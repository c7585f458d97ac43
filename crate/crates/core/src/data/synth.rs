//! Synthetic surgical-phase datasets.
//!
//! Each video walks a left-to-right Markov chain over the classes: stay in
//! the current phase, advance by one, or occasionally skip a phase. Frame
//! features are the class mean plus isotropic Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::labels::ClassMapping;
use super::manifest::VideoSample;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Names used when generating seven classes.
pub const CHOLEC_PHASES: [&str; 7] = [
    "Preparation",
    "CalotTriangleDissection",
    "ClippingCutting",
    "GallbladderDissection",
    "GallbladderPackaging",
    "CleaningCoagulation",
    "GallbladderRetraction",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub num_videos: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub self_transition_prob: f64,
    pub skip_prob: f64,
    /// Leading fraction of videos assigned to the train split.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 7,
            num_videos: 50,
            min_len: 200,
            max_len: 400,
            feature_dim: 64,
            noise_sigma: 1.0,
            self_transition_prob: 0.975,
            skip_prob: 0.1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if self.num_classes < 1 {
            bad.push("num_classes must be >= 1".to_string());
        }
        if self.num_videos < 1 {
            bad.push("num_videos must be >= 1".to_string());
        }
        if self.min_len < 10 || self.max_len < self.min_len {
            bad.push(format!(
                "duration range [{}, {}] must satisfy 10 <= min <= max",
                self.min_len, self.max_len
            ));
        }
        if self.feature_dim < 2 {
            bad.push("feature_dim must be >= 2".to_string());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            bad.push("noise_sigma must be finite and >= 0".to_string());
        }
        for (name, v) in [
            ("self_transition_prob", self.self_transition_prob),
            ("skip_prob", self.skip_prob),
            ("train_fraction", self.train_fraction),
        ] {
            if !prob(v) {
                bad.push(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn num_train(&self) -> usize {
        (self.num_videos as f64 * self.train_fraction).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub train: Vec<VideoSample>,
    pub test: Vec<VideoSample>,
    pub mapping: ClassMapping,
    /// One row per class.
    pub class_means: Matrix<f32>,
}

pub fn default_mapping(num_classes: usize) -> ClassMapping {
    let names = if num_classes == CHOLEC_PHASES.len() {
        CHOLEC_PHASES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|c| format!("phase{c}")).collect()
    };
    ClassMapping::new(names)
}

/// Minimum pairwise distance between class means, in units of the noise σ.
pub const MIN_SEPARATION_SIGMAS: f64 = 4.0;

fn class_means(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Matrix<f32>> {
    let min_dist = MIN_SEPARATION_SIGMAS * cfg.noise_sigma;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_classes);
    for c in 0..cfg.num_classes {
        let mut accepted = None;
        for _ in 0..10_000 {
            let cand: Vec<f64> = (0..cfg.feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let ok = means.iter().all(|m| {
                let d2: f64 = m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() >= min_dist && d2 > 0.0
            });
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        means.push(accepted.ok_or_else(|| {
            Error::Config(format!(
                "could not place class {c} at distance >= {min_dist} from the others"
            ))
        })?);
    }
    Ok(Matrix::from_fn(cfg.num_classes, cfg.feature_dim, |r, c| {
        means[r][c] as f32
    }))
}

fn phase_sequence(cfg: &SynthConfig, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let last = cfg.num_classes - 1;
    let mut phase = 0;
    let mut labels = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 && phase < last && rng.random::<f64>() >= cfg.self_transition_prob {
            let step = if phase + 2 <= last && rng.random::<f64>() < cfg.skip_prob {
                2
            } else {
                1
            };
            phase += step;
        }
        labels.push(phase);
    }
    labels
}

/// Pure function of `cfg`: identical configs give identical datasets.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = class_means(cfg, &mut rng)?;
    let sigma = cfg.noise_sigma;
    let mut videos = Vec::with_capacity(cfg.num_videos);
    for v in 0..cfg.num_videos {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let labels = phase_sequence(cfg, len, &mut rng);
        let features = Matrix::from_fn(len, cfg.feature_dim, |t, c| {
            let noise: f64 = rng.sample(StandardNormal);
            (means.get(labels[t], c) as f64 + sigma * noise) as f32
        });
        videos.push(VideoSample {
            id: format!("video{:03}", v + 1),
            features,
            labels: Some(labels),
        });
    }
    let test = videos.split_off(cfg.num_train().min(cfg.num_videos));
    Ok(SyntheticDataset {
        train: videos,
        test,
        mapping: default_mapping(cfg.num_classes),
        class_means: means,
    })
}
