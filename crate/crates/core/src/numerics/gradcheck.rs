//! Central finite-difference verification of analytic gradients.

use super::matrix::Matrix;
use super::param::ParamStore;
use crate::error::{Error, Result};

/// Step used by [`finite_diff_check`] unless a caller overrides it.
pub const DEFAULT_EPS: f64 = 1e-4;

/// Magnitude below which gradient entries are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Most halvings of the step when a stencil straddles a kink.
pub const MAX_REFINEMENTS: u32 = 10;

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Entries whose stencil was shrunk below `eps` to avoid a kink.
    pub refined: usize,
}

/// Compares each parameter's `grad` (filled by the caller at the current
/// values) against central differences, one scalar at a time.
///
/// With `D(h) = (f(θ+h) − f(θ−h)) / 2h` the numeric estimate is the
/// Richardson combination `(4·D(ε/2) − D(ε)) / 3`, which cancels the `ε²`
/// truncation term of the plain quotient.
pub fn finite_diff_check(
    params: &mut ParamStore<f64>,
    eps: f64,
    mut loss: impl FnMut(&ParamStore<f64>) -> Result<f64>,
) -> Result<GradCheckReport> {
    finite_diff_check_piecewise(params, eps, |p| Ok((loss(p)?, ())))
}

/// Like [`finite_diff_check`] for piecewise-smooth losses. `loss` also
/// returns which smooth piece the evaluation landed on (for example the
/// ReLU sign pattern). When `θ±ε` land on a different piece than `θ` the
/// step is halved until they agree, so the difference quotient measures the
/// derivative of the piece the analytic gradient was taken on.
pub fn finite_diff_check_piecewise<S: PartialEq>(
    params: &mut ParamStore<f64>,
    eps: f64,
    mut loss: impl FnMut(&ParamStore<f64>) -> Result<(f64, S)>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        refined: 0,
    };
    let (_, piece) = loss(params)?;
    let ids: Vec<_> = (0..params.len()).map(super::ParamId).collect();
    for id in ids {
        let n = params.get(id).value.len();
        for i in 0..n {
            let orig = params.get(id).value.as_slice()[i];
            let mut h = eps;
            let mut halvings = 0;
            let numeric = loop {
                let mut same_piece = true;
                let mut quotient = |h: f64| -> Result<f64> {
                    params.get_mut(id).value.as_mut_slice()[i] = orig + h;
                    let (plus, p_piece) = loss(params)?;
                    params.get_mut(id).value.as_mut_slice()[i] = orig - h;
                    let (minus, m_piece) = loss(params)?;
                    params.get_mut(id).value.as_mut_slice()[i] = orig;
                    same_piece &= p_piece == piece && m_piece == piece;
                    Ok((plus - minus) / (2.0 * h))
                };
                let (coarse, fine) = (quotient(h)?, quotient(h / 2.0)?);
                if same_piece || halvings == MAX_REFINEMENTS {
                    break (4.0 * fine - coarse) / 3.0;
                }
                h /= 2.0;
                halvings += 1;
            };
            let p = params.get(id);
            if !numeric.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {}[{i}]",
                    p.name
                )));
            }
            let analytic = p.grad.as_slice()[i];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            report.refined += (halvings > 0) as usize;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((p.name.clone(), i));
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Gradient check for a function of a single matrix input, used by the
/// primitive-level tests. `analytic` is the gradient at `x`.
pub fn check_input_gradient(
    x: &Matrix<f64>,
    analytic: &Matrix<f64>,
    eps: f64,
    mut f: impl FnMut(&Matrix<f64>) -> f64,
) -> f64 {
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - eps;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.as_slice()[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::param::Param;

    fn scalar_store(v: f64, grad: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        let mut p = Param::new("theta", vec![1], Matrix::filled(1, 1, v)).unwrap();
        p.grad = Matrix::filled(1, 1, grad);
        store.push(p).unwrap();
        store
    }

    fn theta(p: &ParamStore<f64>) -> f64 {
        p.by_name("theta").unwrap().value.get(0, 0)
    }

    #[test]
    fn square_at_three() {
        let mut store = scalar_store(3.0, 6.0);
        let r = finite_diff_check(&mut store, DEFAULT_EPS, |p| Ok(theta(p).powi(2))).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert!((r.worst_numeric - 6.0).abs() < 1e-7);
    }

    #[test]
    fn linear_is_exact() {
        let mut store = scalar_store(0.5, 4.0);
        let r = finite_diff_check(&mut store, DEFAULT_EPS, |p| Ok(4.0 * theta(p) + 1.0)).unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn non_finite_loss_names_parameter() {
        let mut store = scalar_store(0.0, 1.0);
        let err = finite_diff_check(&mut store, DEFAULT_EPS, |p| Ok(1.0 / theta(p).abs().min(0.0)))
            .unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
    }

    #[test]
    fn extrapolation_removes_curvature_error() {
        // The plain quotient at ε = 1e-4 is off by ε²·f⁽³⁾/6 ≈ 2e-4 here.
        let mut store = scalar_store(0.0, 50.0);
        let r = finite_diff_check(&mut store, DEFAULT_EPS, |p| Ok((50.0 * theta(p)).exp())).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn kink_inside_stencil_is_refined() {
        // |θ| at θ = 5e-5: the ε = 1e-4 stencil straddles the kink at 0.
        let mut store = scalar_store(5e-5, 1.0);
        let plain = finite_diff_check(&mut store, DEFAULT_EPS, |p| Ok(theta(p).abs())).unwrap();
        assert!(plain.max_rel_error > 0.1);
        let r = finite_diff_check_piecewise(&mut store, DEFAULT_EPS, |p| {
            Ok((theta(p).abs(), theta(p) > 0.0))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-12, "{r:?}");
        assert_eq!(r.refined, 1);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut store = scalar_store(3.0, 5.0);
        let r = finite_diff_check(&mut store, DEFAULT_EPS, |p| Ok(theta(p).powi(2))).unwrap();
        assert!(r.max_rel_error > 0.1);
        assert_eq!(r.worst, Some(("theta".to_string(), 0)));
    }
}
