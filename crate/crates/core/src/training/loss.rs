//! Per-stage classification and smoothing losses with their logit gradients.

use crate::error::{Error, Result};
use crate::numerics::ops::{log_softmax_rows, softmax_rows};
use crate::numerics::{Matrix, Real};

/// Log-probabilities are floored here inside the smoothing loss.
pub const LOG_PROB_FLOOR: f64 = -18.420680743952367; // ln(1e-8)

/// A scalar loss and its gradient with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad<F> {
    pub loss: F,
    pub grad: Matrix<F>,
}

/// Mean over frames of `−log softmax(logits)_t[label_t]`.
pub fn cross_entropy_loss<F: Real>(logits: &Matrix<F>, labels: &[usize]) -> Result<LossGrad<F>> {
    let (t_len, classes) = logits.shape();
    if labels.len() != t_len {
        return Err(Error::Shape(format!(
            "{} labels for {} frames of logits",
            labels.len(),
            t_len
        )));
    }
    if t_len == 0 {
        return Err(Error::Data("cross entropy over an empty sequence".into()));
    }
    if let Some((t, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Data(format!(
            "label {l} at frame {t} is outside [0, {classes})"
        )));
    }
    let logp = log_softmax_rows(logits);
    let mut grad = softmax_rows(logits);
    let inv_t = F::one() / F::lit(t_len as f64);
    let mut total = F::zero();
    for (t, &l) in labels.iter().enumerate() {
        total -= logp.get(t, l);
        let row = grad.row_mut(t);
        row[l] -= F::one();
        row.iter_mut().for_each(|g| *g *= inv_t);
    }
    Ok(LossGrad {
        loss: total * inv_t,
        grad,
    })
}

/// Truncated mean squared difference of log-probabilities between
/// consecutive frames:
/// `mean_{t≥1,c} min(|lp[t,c] − lp[t−1,c]|, τ)²`.
///
/// With `detach_previous` the gradient treats `lp[t−1]` as a constant,
/// which is how the loss is used in training. Without it the returned
/// gradient is the exact derivative of the returned value.
pub fn smoothing_loss<F: Real>(logits: &Matrix<F>, tau: F, detach_previous: bool) -> LossGrad<F> {
    let (t_len, classes) = logits.shape();
    if t_len < 2 {
        log::warn!("smoothing loss needs at least 2 frames, got {t_len}; using 0");
        return LossGrad {
            loss: F::zero(),
            grad: Matrix::zeros(t_len, classes),
        };
    }
    let floor = F::lit(LOG_PROB_FLOOR);
    let raw = log_softmax_rows(logits);
    let logp = raw.map(|v| if v < floor { floor } else { v });
    let scale = F::one() / F::lit(((t_len - 1) * classes) as f64);
    let two = F::lit(2.0);
    let mut total = F::zero();
    let mut dlogp = Matrix::zeros(t_len, classes);
    for t in 1..t_len {
        for c in 0..classes {
            let d = logp.get(t, c) - logp.get(t - 1, c);
            if d.abs() > tau {
                total += tau * tau;
                continue;
            }
            total += d * d;
            let g = two * d * scale;
            let cur = dlogp.get(t, c);
            dlogp.set(t, c, cur + g);
            if !detach_previous {
                let prev = dlogp.get(t - 1, c);
                dlogp.set(t - 1, c, prev - g);
            }
        }
    }
    for (g, &v) in dlogp.as_mut_slice().iter_mut().zip(raw.as_slice()) {
        if v < floor {
            *g = F::zero();
        }
    }
    LossGrad {
        loss: total * scale,
        grad: log_softmax_backward(&raw, &dlogp),
    }
}

/// Gradient through `y = log_softmax(x)` given `y` and `dy`.
fn log_softmax_backward<F: Real>(logp: &Matrix<F>, dy: &Matrix<F>) -> Matrix<F> {
    let mut dx = Matrix::zeros(logp.rows(), logp.cols());
    for t in 0..logp.rows() {
        let s = dy.row(t).iter().fold(F::zero(), |a, &b| a + b);
        for ((o, &g), &lp) in dx.row_mut(t).iter_mut().zip(dy.row(t)).zip(logp.row(t)) {
            *o = g - lp.exp() * s;
        }
    }
    dx
}

/// Weights of the combined multi-stage objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub smooth_tau: f64,
    pub smooth_lambda: f64,
    pub detach_previous: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            smooth_tau: 4.0,
            smooth_lambda: 0.15,
            detach_previous: true,
        }
    }
}

/// `Σ_stages [cross_entropy + λ·smoothing]`, with one gradient per stage.
pub fn total_loss<F: Real>(
    stages: &[Matrix<F>],
    labels: &[usize],
    weights: &LossWeights,
) -> Result<(F, Vec<Matrix<F>>)> {
    if stages.is_empty() {
        return Err(Error::Shape("total loss over zero stages".into()));
    }
    let lambda = F::lit(weights.smooth_lambda);
    let tau = F::lit(weights.smooth_tau);
    let mut total = F::zero();
    let mut grads = Vec::with_capacity(stages.len());
    for logits in stages {
        let ce = cross_entropy_loss(logits, labels)?;
        let mut grad = ce.grad;
        total += ce.loss;
        if weights.smooth_lambda != 0.0 {
            let sm = smoothing_loss(logits, tau, weights.detach_previous);
            total += lambda * sm.loss;
            for (g, &s) in grad.as_mut_slice().iter_mut().zip(sm.grad.as_slice()) {
                *g += lambda * s;
            }
        }
        grads.push(grad);
    }
    Ok((total, grads))
}
