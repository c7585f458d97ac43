//! Straight-line single-scale forward pass over a model's parameters.
//!
//! This path calls the kernels directly, without the tape or the multi-scale
//! loop, and exists to check that a `kernels = [3]` model reduces exactly to
//! a plain one-scale encoder/decoder transformer.

use super::{alpha_schedule, dilation_for_layer, BlockParams, Model, StageOutputs};
use crate::attention::{attention_forward, window_schedule};
use crate::error::{Error, Result};
use crate::numerics::ops::{concat_cols, dilated_conv1d, linear, relu, softmax_rows, temporal_norm};
use crate::numerics::{ConvMode, ConvSpec, Matrix, ParamStore, Real};

fn block<F: Real>(
    p: &ParamStore<F>,
    b: &BlockParams,
    x: &Matrix<F>,
    enc: Option<&Matrix<F>>,
    layer: usize,
    alpha: F,
    causal: bool,
) -> Result<Matrix<F>> {
    let s = &b.scales[0];
    let spec = ConvSpec {
        kernel_size: 3,
        dilation: dilation_for_layer(layer),
        mode: if causal {
            ConvMode::Causal
        } else {
            ConvMode::Symmetric
        },
    };
    let h = relu(&dilated_conv1d(x, p.value(s.conv_w), p.value(s.conv_b), spec)?);
    let n = match b.norm {
        Some((g, bias)) => temporal_norm(&h, p.value(g), p.value(bias))?.0,
        None => h.clone(),
    };
    let qk_in = match enc {
        Some(e) => concat_cols(&n, e)?,
        None => n.clone(),
    };
    let q = linear(&qk_in, p.value(s.q_w), p.value(s.q_b))?;
    let k = linear(&qk_in, p.value(s.k_w), p.value(s.k_b))?;
    let v = linear(&n, p.value(s.v_w), p.value(s.v_b))?;
    let (a, _) = attention_forward(&q, &k, &v, window_schedule(3, layer)?, causal)?;
    let w = p.value(s.fuse_w).get(0, 0);
    let mut fused = h;
    for (o, &av) in fused.as_mut_slice().iter_mut().zip(a.as_slice()) {
        *o += alpha * (w * av);
    }
    let mut out = linear(&fused, p.value(b.out_w), p.value(b.out_b))?;
    for (o, &xv) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *o = xv + *o;
    }
    Ok(out)
}

/// Inference-mode logits of a `kernels = [3]` model.
pub fn forward<F: Real>(model: &Model<F>, features: &Matrix<F>) -> Result<StageOutputs<F>> {
    let cfg = model.config();
    if cfg.kernels != [3] {
        return Err(Error::Config(format!(
            "single-scale reference needs kernels [3], got {:?}",
            cfg.kernels
        )));
    }
    model.check_features(features)?;
    let p = model.params();
    let mut logits: Vec<Matrix<F>> = Vec::new();
    let mut enc_out: Option<Matrix<F>> = None;
    for (s, stage) in model.stages().iter().enumerate() {
        let input = match logits.last() {
            None => features.clone(),
            Some(prev) => softmax_rows(prev),
        };
        let mut x = linear(&input, p.value(stage.in_w), p.value(stage.in_b))?;
        let alpha = F::lit(alpha_schedule(s, cfg.alpha_base));
        for (l, b) in stage.blocks.iter().enumerate() {
            x = match &enc_out {
                None => block(p, b, &x, None, l + 1, F::one(), cfg.causal)?,
                Some(e) => block(p, b, &x, Some(e), l + 1, alpha, cfg.causal)?,
            };
        }
        logits.push(linear(&x, p.value(stage.head_w), p.value(stage.head_b))?);
        if s == 0 {
            enc_out = Some(x);
        }
    }
    Ok(StageOutputs { logits })
}
