//! The offline (MS-AST) and causal (MS-ASCT) segmentation models.
//!
//! A model is an encoder stage followed by `num_decoders` refinement stages.
//! Every stage projects its input to `C` channels, runs
//! `layers_per_stage` blocks with doubling dilation and emits class logits.
//! Decoders read the softmax of the previous stage's logits and cross-attend
//! to the encoder's final hidden state.

mod block;
mod config;
pub mod single_scale;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use block::{
    decoder_block_forward, dilation_for_layer, encoder_block_forward, multiscale_fuse,
    BlockParams, ScaleParams,
};
pub use config::{alpha_schedule, ModelConfig};

use block::Initializer;
use crate::error::{Error, Result};
use crate::numerics::{ops, Matrix, ParamId, ParamStore, Real, Tape, Var};

/// Parameters of one stage (encoder or decoder).
#[derive(Clone, Debug)]
pub struct StageParams {
    pub in_w: ParamId,
    pub in_b: ParamId,
    pub blocks: Vec<BlockParams>,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Per-stage logits, encoder first.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutputs<F> {
    pub logits: Vec<Matrix<F>>,
}

impl<F: Real> StageOutputs<F> {
    pub fn last(&self) -> &Matrix<F> {
        self.logits.last().expect("at least one stage")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct Model<F> {
    config: ModelConfig,
    params: ParamStore<F>,
    stages: Vec<StageParams>,
}

/// Index of the first maximum; ties go to the smaller class id.
pub fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Class of one frame: argmax of the softmax of its logits.
pub fn frame_label<F: Real>(logits: &[F]) -> usize {
    let mut probs = logits.to_vec();
    ops::softmax_in_place(&mut probs);
    argmax(&probs)
}

impl<F: Real> Model<F> {
    /// Deterministic construction: identical `(cfg, seed)` give identical bits.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut stages = Vec::with_capacity(cfg.num_stages());
        for s in 0..cfg.num_stages() {
            let prefix = if s == 0 {
                "encoder".to_string()
            } else {
                format!("decoder{s}")
            };
            let in_dim = if s == 0 { cfg.input_dim } else { cfg.num_classes };
            let (in_w, in_b) = Initializer {
                store: &mut store,
                rng: &mut rng,
            }
            .linear(&format!("{prefix}.input"), in_dim, cfg.feature_maps)?;
            let mut blocks = Vec::with_capacity(cfg.layers_per_stage);
            for l in 0..cfg.layers_per_stage {
                blocks.push(BlockParams::init(
                    &mut store,
                    &format!("{prefix}.layer{l}"),
                    cfg,
                    s > 0,
                    &mut rng,
                )?);
            }
            let (head_w, head_b) = Initializer {
                store: &mut store,
                rng: &mut rng,
            }
            .linear(&format!("{prefix}.head"), cfg.feature_maps, cfg.num_classes)?;
            stages.push(StageParams {
                in_w,
                in_b,
                blocks,
                head_w,
                head_b,
            });
        }
        Ok(Model {
            config: cfg.clone(),
            params: store,
            stages,
        })
    }

    /// Rebuilds the structure for `cfg` and installs the given parameters,
    /// checking names and shapes.
    pub fn from_params(cfg: &ModelConfig, params: ParamStore<F>) -> Result<Self> {
        let mut model = Self::build(cfg, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "configuration expects {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (want, got) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.shape != got.shape {
                return Err(Error::Shape(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn stages(&self) -> &[StageParams] {
        &self.stages
    }

    /// Replaces the dropout rate used in training-mode passes.
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        let cfg = ModelConfig {
            dropout: rate,
            ..self.config.clone()
        };
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    pub fn is_causal(&self) -> bool {
        self.config.causal
    }

    /// Number of temporal-normalization parameters (zero for causal models).
    pub fn norm_param_count(&self) -> usize {
        self.params.iter().filter(|p| p.name.contains(".norm.")).count()
    }

    /// Same model in another precision.
    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            stages: self.stages.clone(),
        }
    }

    pub(crate) fn check_features(&self, features: &Matrix<F>) -> Result<()> {
        if features.cols() != self.config.input_dim {
            return Err(Error::Incompatible(format!(
                "features have dimension {}, model expects {}",
                features.cols(),
                self.config.input_dim
            )));
        }
        let min_len = if self.config.causal { 1 } else { 2 };
        if features.rows() < min_len {
            return Err(Error::Shape(format!(
                "sequence of length {} is too short (need >= {min_len})",
                features.rows()
            )));
        }
        Ok(())
    }

    /// Records the whole forward pass on a tape and returns the per-stage
    /// logit nodes, for training.
    pub fn forward_tape<'p, R: Rng + ?Sized>(
        &'p self,
        features: &Matrix<F>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tape<'p, F>, Vec<Var>)> {
        self.check_features(features)?;
        let cfg = &self.config;
        let training = mode == Mode::Train;
        let mut tape = Tape::new(&self.params);
        let mut logits = Vec::with_capacity(self.stages.len());
        let mut enc_out = None;
        let mut stage_in = tape.input(features.clone());
        for (s, stage) in self.stages.iter().enumerate() {
            if s > 0 {
                let prev = *logits.last().expect("encoder logits");
                stage_in = tape.softmax(prev);
            }
            let (w, b) = (tape.param(stage.in_w), tape.param(stage.in_b));
            let mut x = tape.linear(stage_in, w, b)?;
            let alpha = F::lit(alpha_schedule(s, cfg.alpha_base));
            for (l, block) in stage.blocks.iter().enumerate() {
                x = match enc_out {
                    None => encoder_block_forward(&mut tape, block, x, l + 1, cfg, training, rng)?,
                    Some(e) => decoder_block_forward(
                        &mut tape, block, x, e, l + 1, alpha, cfg, training, rng,
                    )?,
                };
            }
            if s == 0 {
                enc_out = Some(x);
            }
            let (w, b) = (tape.param(stage.head_w), tape.param(stage.head_b));
            logits.push(tape.linear(x, w, b)?);
        }
        Ok((tape, logits))
    }

    /// Full-sequence forward pass returning every stage's logits.
    pub fn forward_full<R: Rng + ?Sized>(
        &self,
        features: &Matrix<F>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<StageOutputs<F>> {
        let (tape, vars) = self.forward_tape(features, mode, rng)?;
        Ok(StageOutputs {
            logits: vars.iter().map(|&v| tape.value(v).clone()).collect(),
        })
    }

    /// Inference-mode forward pass (no dropout, no randomness).
    pub fn infer(&self, features: &Matrix<F>) -> Result<StageOutputs<F>> {
        self.forward_full(features, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Per-frame argmax of the final stage's softmax.
    pub fn predict(&self, features: &Matrix<F>) -> Result<Vec<usize>> {
        let out = self.infer(features)?;
        let last = out.last();
        Ok((0..last.rows()).map(|t| frame_label(last.row(t))).collect())
    }

    /// Appends one frame to `state` and returns the final-stage logits of
    /// the newest time step, recomputed over the stored prefix.
    pub fn forward_stream(&self, frame: &[F], state: &mut StreamState<F>) -> Result<Vec<F>> {
        if !self.config.causal {
            return Err(Error::Mode("streaming requires a causal model".into()));
        }
        if frame.len() != self.config.input_dim {
            return Err(Error::Incompatible(format!(
                "frame has dimension {}, model expects {}",
                frame.len(),
                self.config.input_dim
            )));
        }
        state.frames.push_rows(&Matrix::row_vector(frame))?;
        let out = self.infer(&state.frames)?;
        let last = out.last();
        Ok(last.row(last.rows() - 1).to_vec())
    }
}

/// Frames seen so far by a streaming consumer.
#[derive(Clone, Debug)]
pub struct StreamState<F> {
    frames: Matrix<F>,
}

impl<F: Real> Default for StreamState<F> {
    fn default() -> Self {
        StreamState {
            frames: Matrix::zeros(0, 0),
        }
    }
}

impl<F: Real> StreamState<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}
