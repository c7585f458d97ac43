use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Matrix<F>>,
    pub v: Vec<Matrix<F>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamStore<F>) -> Self {
        let zeros: Vec<Matrix<F>> = params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Checks that the moment shapes line up with `params`.
    pub fn check_matches(&self, params: &ParamStore<F>) -> Result<()> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer state has {}/{} moments for {} parameters",
                self.m.len(),
                self.v.len(),
                params.len()
            )));
        }
        for ((p, m), v) in params.iter().zip(&self.m).zip(&self.v) {
            m.ensure_shape(p.value.rows(), p.value.cols(), &format!("{} first moment", p.name))?;
            v.ensure_shape(p.value.rows(), p.value.cols(), &format!("{} second moment", p.name))?;
        }
        Ok(())
    }
}

/// One bias-corrected Adam update from the gradients stored in `params`,
/// which are zeroed afterwards. A non-finite gradient aborts before any
/// parameter changes.
pub fn adam_step<F: Real>(
    params: &mut ParamStore<F>,
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) -> Result<()> {
    state.check_matches(params)?;
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient in {}", p.name)));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let values = p.value.as_mut_slice().iter_mut();
        let grads = p.grad.as_slice();
        let moments = m.as_mut_slice().iter_mut().zip(v.as_mut_slice());
        for ((x, &g), (mi, vi)) in values.zip(grads).zip(moments) {
            let g = g.to_f64().unwrap_or(f64::NAN);
            let m_new = cfg.beta1 * mi.to_f64().unwrap_or(0.0) + (1.0 - cfg.beta1) * g;
            let v_new = cfg.beta2 * vi.to_f64().unwrap_or(0.0) + (1.0 - cfg.beta2) * g * g;
            *mi = F::lit(m_new);
            *vi = F::lit(v_new);
            let update = cfg.learning_rate * (m_new / c1) / ((v_new / c2).sqrt() + cfg.eps);
            *x = F::lit(x.to_f64().unwrap_or(0.0) - update);
        }
    }
    params.zero_grad();
    Ok(())
}
