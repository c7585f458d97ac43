//! Encoder and decoder blocks with multi-scale attention fusion.

use rand::Rng;

use super::config::ModelConfig;
use crate::attention::window_schedule;
use crate::error::{Error, Result};
use crate::numerics::{ConvMode, ConvSpec, Matrix, Param, ParamId, ParamStore, Real, Tape, Var};

/// `h_base + alpha * Σ_j w[j] * attn_outs[j]`, elementwise.
pub fn multiscale_fuse<F: Real>(
    h_base: &Matrix<F>,
    attn_outs: &[&Matrix<F>],
    w: &[F],
    alpha: F,
) -> Result<Matrix<F>> {
    if attn_outs.len() != w.len() {
        return Err(Error::Shape(format!(
            "{} attention branches but {} fusion weights",
            attn_outs.len(),
            w.len()
        )));
    }
    if let Some(a) = attn_outs.iter().find(|a| a.shape() != h_base.shape()) {
        return Err(Error::Shape(format!(
            "attention branch {:?} against base {:?}",
            a.shape(),
            h_base.shape()
        )));
    }
    let mut acc = Matrix::zeros(h_base.rows(), h_base.cols());
    for (j, (a, &wj)) in attn_outs.iter().zip(w).enumerate() {
        for (s, &v) in acc.as_mut_slice().iter_mut().zip(a.as_slice()) {
            *s = if j == 0 { wj * v } else { *s + wj * v };
        }
    }
    let mut out = h_base.clone();
    for (o, &s) in out.as_mut_slice().iter_mut().zip(acc.as_slice()) {
        *o += alpha * s;
    }
    Ok(out)
}

/// Parameters of one scale branch: dilated conv feed-forward, Q/K/V
/// projections and the learned fusion weight.
#[derive(Clone, Debug)]
pub struct ScaleParams {
    pub kernel: usize,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub q_w: ParamId,
    pub q_b: ParamId,
    pub k_w: ParamId,
    pub k_b: ParamId,
    pub v_w: ParamId,
    pub v_b: ParamId,
    pub fuse_w: ParamId,
}

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub scales: Vec<ScaleParams>,
    /// Temporal normalization gain and bias; absent in causal models.
    pub norm: Option<(ParamId, ParamId)>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Registers parameters with uniform `±sqrt(1/fan_in)` weights and zero biases.
pub(crate) struct Initializer<'a, F: Real, R: Rng> {
    pub store: &'a mut ParamStore<F>,
    pub rng: &'a mut R,
}

impl<F: Real, R: Rng> Initializer<'_, F, R> {
    pub fn weight(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> Result<ParamId> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let (r, c) = crate::numerics::param::matrix_dims(&shape)?;
        let rng = &mut *self.rng;
        let value = Matrix::from_fn(r, c, |_, _| F::lit(rng.random_range(-bound..bound)));
        self.store.push(Param::new(name, shape, value)?)
    }

    pub fn constant(&mut self, name: String, shape: Vec<usize>, v: f64) -> Result<ParamId> {
        let (r, c) = crate::numerics::param::matrix_dims(&shape)?;
        self.store
            .push(Param::new(name, shape, Matrix::filled(r, c, F::lit(v)))?)
    }

    /// `[inp, out]` weight plus `[out]` bias.
    pub fn linear(&mut self, prefix: &str, inp: usize, out: usize) -> Result<(ParamId, ParamId)> {
        let w = self.weight(format!("{prefix}.weight"), vec![inp, out], inp)?;
        let b = self.constant(format!("{prefix}.bias"), vec![out], 0.0)?;
        Ok((w, b))
    }
}

impl BlockParams {
    /// Creates the parameters of one block. `cross` widens the Q/K
    /// projections to take `[h ‖ encoder output]`.
    pub fn init<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        prefix: &str,
        cfg: &ModelConfig,
        cross: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut init = Initializer { store, rng };
        let c = cfg.feature_maps;
        let qk_in = if cross { 2 * c } else { c };
        let mut scales = Vec::with_capacity(cfg.kernels.len());
        for (j, &kernel) in cfg.kernels.iter().enumerate() {
            let p = format!("{prefix}.scale{j}");
            let conv_w = init.weight(format!("{p}.conv.weight"), vec![kernel, c, c], kernel * c)?;
            let conv_b = init.constant(format!("{p}.conv.bias"), vec![c], 0.0)?;
            let (q_w, q_b) = init.linear(&format!("{p}.query"), qk_in, c)?;
            let (k_w, k_b) = init.linear(&format!("{p}.key"), qk_in, c)?;
            let (v_w, v_b) = init.linear(&format!("{p}.value"), c, c)?;
            let fuse_w = init.constant(format!("{p}.fuse_weight"), vec![1], 1.0)?;
            scales.push(ScaleParams {
                kernel,
                conv_w,
                conv_b,
                q_w,
                q_b,
                k_w,
                k_b,
                v_w,
                v_b,
                fuse_w,
            });
        }
        let norm = if cfg.causal {
            None
        } else {
            Some((
                init.constant(format!("{prefix}.norm.gain"), vec![c], 1.0)?,
                init.constant(format!("{prefix}.norm.bias"), vec![c], 0.0)?,
            ))
        };
        let (out_w, out_b) = init.linear(&format!("{prefix}.out"), c, c)?;
        Ok(BlockParams {
            scales,
            norm,
            out_w,
            out_b,
        })
    }
}

/// Dilation of the feed-forward convolutions at 1-based `layer`.
pub fn dilation_for_layer(layer: usize) -> usize {
    1 << (layer - 1)
}

#[allow(clippy::too_many_arguments)]
fn block_forward<F: Real, R: Rng + ?Sized>(
    tape: &mut Tape<'_, F>,
    block: &BlockParams,
    x: Var,
    enc_out: Option<Var>,
    layer: usize,
    alpha: F,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if layer < 1 || layer > cfg.layers_per_stage {
        return Err(Error::Config(format!(
            "layer {layer} outside 1..={}",
            cfg.layers_per_stage
        )));
    }
    let mode = if cfg.causal {
        ConvMode::Causal
    } else {
        ConvMode::Symmetric
    };
    let dilation = dilation_for_layer(layer);
    let mut base = None;
    let mut branches = Vec::with_capacity(block.scales.len());
    let mut weights = Vec::with_capacity(block.scales.len());
    for s in &block.scales {
        let spec = ConvSpec {
            kernel_size: s.kernel,
            dilation,
            mode,
        };
        let (cw, cb) = (tape.param(s.conv_w), tape.param(s.conv_b));
        let pre = tape.conv(x, cw, cb, spec)?;
        let h = tape.relu(pre);
        base.get_or_insert(h);
        let n = match block.norm {
            Some((g, b)) => {
                let (g, b) = (tape.param(g), tape.param(b));
                tape.temporal_norm(h, g, b)?
            }
            None => h,
        };
        let qk_in = match enc_out {
            Some(e) => tape.concat(n, e)?,
            None => n,
        };
        let (qw, qb) = (tape.param(s.q_w), tape.param(s.q_b));
        let q = tape.linear(qk_in, qw, qb)?;
        let (kw, kb) = (tape.param(s.k_w), tape.param(s.k_b));
        let k = tape.linear(qk_in, kw, kb)?;
        let (vw, vb) = (tape.param(s.v_w), tape.param(s.v_b));
        let v = tape.linear(n, vw, vb)?;
        let window = window_schedule(s.kernel, layer)?;
        branches.push(tape.attention(q, k, v, window, cfg.causal)?);
        weights.push(tape.param(s.fuse_w));
    }
    let base = base.ok_or_else(|| Error::Config("block without scale branches".into()))?;
    let fused = tape.fuse(base, &branches, &weights, alpha)?;
    let (ow, ob) = (tape.param(block.out_w), tape.param(block.out_b));
    let proj = tape.linear(fused, ow, ob)?;
    let dropped = tape.dropout(proj, cfg.dropout, rng, training)?;
    Ok(tape.add(x, dropped))
}

/// Encoder block: per-scale self-attention fused with weight 1.
#[allow(clippy::too_many_arguments)]
pub fn encoder_block_forward<F: Real, R: Rng + ?Sized>(
    tape: &mut Tape<'_, F>,
    block: &BlockParams,
    x: Var,
    layer: usize,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    block_forward(tape, block, x, None, layer, F::one(), cfg, training, rng)
}

/// Decoder block: queries and keys see `[h ‖ enc_out]`, values see `h`.
#[allow(clippy::too_many_arguments)]
pub fn decoder_block_forward<F: Real, R: Rng + ?Sized>(
    tape: &mut Tape<'_, F>,
    block: &BlockParams,
    x: Var,
    enc_out: Var,
    layer: usize,
    alpha: F,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if tape.value(enc_out).shape() != tape.value(x).shape() {
        return Err(Error::Shape(format!(
            "encoder output {:?} does not match decoder input {:?}",
            tape.value(enc_out).shape(),
            tape.value(x).shape()
        )));
    }
    block_forward(tape, block, x, Some(enc_out), layer, alpha, cfg, training, rng)
}
