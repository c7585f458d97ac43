//! Forward kernels and their analytic backward passes.
//!
//! Every backward function takes the forward inputs (or cached forward
//! results) plus the upstream gradient and returns gradients for each input.

use rand::Rng;

use super::matrix::{gemm, Matrix, Real, View};
use crate::error::{Error, Result};

/// Variance floor used by [`temporal_norm`].
pub const NORM_EPS: f64 = 1e-5;

pub fn matmul<F: Real>(a: &Matrix<F>, b: &Matrix<F>) -> Result<Matrix<F>> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "matmul of {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = Matrix::zeros(a.rows(), b.cols());
    gemm(F::one(), View::of(a), View::of(b), F::zero(), out.as_mut_slice());
    Ok(out)
}

/// Returns `(dA, dB) = (dOut·Bᵀ, Aᵀ·dOut)`.
pub fn matmul_backward<F: Real>(
    a: &Matrix<F>,
    b: &Matrix<F>,
    dout: &Matrix<F>,
) -> (Matrix<F>, Matrix<F>) {
    let mut da = Matrix::zeros(a.rows(), a.cols());
    gemm(F::one(), View::of(dout), View::of(b).t(), F::zero(), da.as_mut_slice());
    let mut db = Matrix::zeros(b.rows(), b.cols());
    gemm(F::one(), View::of(a).t(), View::of(dout), F::zero(), db.as_mut_slice());
    (da, db)
}

fn check_bias<F: Real>(b: &Matrix<F>, n: usize, what: &str) -> Result<()> {
    if b.shape() != (1, n) {
        return Err(Error::Shape(format!(
            "{what} bias: expected 1x{n}, found {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn broadcast_rows<F: Real>(rows: usize, b: &Matrix<F>) -> Matrix<F> {
    let mut out = Matrix::zeros(rows, b.cols());
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(b.as_slice());
    }
    out
}

/// Pointwise (1×1) projection `y = x·W + b`.
pub fn linear<F: Real>(x: &Matrix<F>, w: &Matrix<F>, b: &Matrix<F>) -> Result<Matrix<F>> {
    if x.cols() != w.rows() {
        return Err(Error::Shape(format!(
            "linear input {}x{} against weight {}x{}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        )));
    }
    check_bias(b, w.cols(), "linear")?;
    let mut out = broadcast_rows(x.rows(), b);
    gemm(F::one(), View::of(x), View::of(w), F::one(), out.as_mut_slice());
    Ok(out)
}

/// Returns `(dx, dW, db)`.
pub fn linear_backward<F: Real>(
    x: &Matrix<F>,
    w: &Matrix<F>,
    dy: &Matrix<F>,
) -> (Matrix<F>, Matrix<F>, Matrix<F>) {
    let (dx, dw) = matmul_backward(x, w, dy);
    (dx, dw, dy.sum_rows())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvMode {
    /// Output at `t` sees only inputs at `t' <= t`.
    Causal,
    /// Taps centered on `t`; requires an odd kernel.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_size: usize,
    pub dilation: usize,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size < 1 || self.dilation < 1 {
            return Err(Error::Config(format!(
                "convolution needs kernel >= 1 and dilation >= 1 (got kernel {}, dilation {})",
                self.kernel_size, self.dilation
            )));
        }
        if self.mode == ConvMode::Symmetric && self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "symmetric convolution needs an odd kernel, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// Source offset of tap `k` relative to the output time step.
    pub fn tap_offset(&self, k: usize) -> isize {
        let d = self.dilation as isize;
        let (k, kk) = (k as isize, self.kernel_size as isize);
        match self.mode {
            ConvMode::Symmetric => (k - kk / 2) * d,
            ConvMode::Causal => -(kk - 1 - k) * d,
        }
    }

    /// Output rows `[t0, t1)` whose tap-`k` source lies inside `[0, len)`.
    fn valid_rows(&self, k: usize, len: usize) -> (usize, usize) {
        let off = self.tap_offset(k);
        let t0 = (-off).max(0) as usize;
        let t1 = (len as isize - off).clamp(0, len as isize) as usize;
        (t0.min(t1), t1)
    }
}

/// Dilated 1-D convolution along time with zero padding.
///
/// `w` stores the kernel tap-major: rows `k*Cin..(k+1)*Cin` hold tap `k`
/// as a `Cin×Cout` block. `b` is `1×Cout`.
pub fn dilated_conv1d<F: Real>(
    x: &Matrix<F>,
    w: &Matrix<F>,
    b: &Matrix<F>,
    spec: ConvSpec,
) -> Result<Matrix<F>> {
    spec.validate()?;
    let (len, cin) = x.shape();
    if w.rows() != spec.kernel_size * cin {
        return Err(Error::Shape(format!(
            "conv weight {}x{} does not match kernel {} with {cin} input channels",
            w.rows(),
            w.cols(),
            spec.kernel_size
        )));
    }
    let cout = w.cols();
    check_bias(b, cout, "conv")?;
    let mut out = broadcast_rows(len, b);
    let cols_t = im2col_transposed(x, spec);
    let a = View {
        data: cols_t.as_slice(),
        rows: len,
        cols: spec.kernel_size * cin,
        rs: 1,
        cs: len,
    };
    gemm(F::one(), a, View::of(w), F::one(), out.as_mut_slice());
    Ok(out)
}

/// [`im2col`] stored transposed, `(K·Cin) × len`.
fn im2col_transposed<F: Real>(x: &Matrix<F>, spec: ConvSpec) -> Matrix<F> {
    let (len, cin) = x.shape();
    let mut cols = Matrix::zeros(spec.kernel_size * cin, len);
    for k in 0..spec.kernel_size {
        let (t0, t1) = spec.valid_rows(k, len);
        let off = spec.tap_offset(k);
        for ci in 0..cin {
            let row = cols.row_mut(k * cin + ci);
            for t in t0..t1 {
                row[t] = x.get((t as isize + off) as usize, ci);
            }
        }
    }
    cols
}

/// `len × (K·Cin)` matrix whose row `t` concatenates the tap sources of
/// output step `t`, zero where a tap falls outside the sequence.
fn im2col<F: Real>(x: &Matrix<F>, spec: ConvSpec) -> Matrix<F> {
    let (len, cin) = x.shape();
    let width = spec.kernel_size * cin;
    let mut cols = Matrix::zeros(len, width);
    for k in 0..spec.kernel_size {
        let (t0, t1) = spec.valid_rows(k, len);
        let off = spec.tap_offset(k);
        for t in t0..t1 {
            let s = (t as isize + off) as usize;
            cols.row_mut(t)[k * cin..(k + 1) * cin].copy_from_slice(x.row(s));
        }
    }
    cols
}

/// Returns `(dx, dW, db)` for [`dilated_conv1d`].
pub fn dilated_conv1d_backward<F: Real>(
    x: &Matrix<F>,
    w: &Matrix<F>,
    dy: &Matrix<F>,
    spec: ConvSpec,
) -> (Matrix<F>, Matrix<F>, Matrix<F>) {
    let (len, cin) = x.shape();
    let cout = w.cols();
    let cols = im2col(x, spec);
    let mut dw = Matrix::zeros(w.rows(), cout);
    gemm(F::one(), View::of(&cols).t(), View::of(dy), F::zero(), dw.as_mut_slice());
    let mut dcols = Matrix::zeros(len, w.rows());
    gemm(F::one(), View::of(dy), View::of(w).t(), F::zero(), dcols.as_mut_slice());
    let mut dx = Matrix::zeros(len, cin);
    for k in 0..spec.kernel_size {
        let (t0, t1) = spec.valid_rows(k, len);
        let off = spec.tap_offset(k);
        for t in t0..t1 {
            let s = (t as isize + off) as usize;
            let src = &dcols.row(t)[k * cin..(k + 1) * cin];
            for (d, &g) in dx.row_mut(s).iter_mut().zip(src) {
                *d += g;
            }
        }
    }
    (dx, dw, dy.sum_rows())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: Real>(x: &Matrix<F>) -> Matrix<F> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place<F: Real>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Gradient of softmax given its output `y`.
pub fn softmax_rows_backward<F: Real>(y: &Matrix<F>, dy: &Matrix<F>) -> Matrix<F> {
    let mut dx = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, dyr) = (y.row(r), dy.row(r));
        let inner: F = yr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
        for ((o, &yv), &dv) in dx.row_mut(r).iter_mut().zip(yr).zip(dyr) {
            *o = yv * (dv - inner);
        }
    }
    dx
}

pub fn log_softmax_rows<F: Real>(x: &Matrix<F>) -> Matrix<F> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

pub fn relu<F: Real>(x: &Matrix<F>) -> Matrix<F> {
    x.map(|v| if v > F::zero() { v } else { F::zero() })
}

pub fn relu_backward<F: Real>(x: &Matrix<F>, dy: &Matrix<F>) -> Matrix<F> {
    let mut dx = dy.clone();
    for (g, &v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if v <= F::zero() {
            *g = F::zero();
        }
    }
    dx
}

/// Inverted dropout. Returns the output and, in training mode with a
/// positive rate, the per-element scale mask (0 or `1/(1-rate)`).
pub fn dropout<F: Real, R: Rng + ?Sized>(
    x: &Matrix<F>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Matrix<F>, Option<Vec<F>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = F::lit(1.0 / (1.0 - rate));
    let mask: Vec<F> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
        .collect();
    let mut out = x.clone();
    for (o, &m) in out.as_mut_slice().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward<F: Real>(mask: &[F], dy: &Matrix<F>) -> Matrix<F> {
    let mut dx = dy.clone();
    for (g, &m) in dx.as_mut_slice().iter_mut().zip(mask) {
        *g *= m;
    }
    dx
}

/// Forward results of [`temporal_norm`] needed by its backward pass.
#[derive(Clone, Debug)]
pub struct NormCache<F> {
    pub normalized: Matrix<F>,
    pub inv_std: Vec<F>,
}

/// Per-channel normalization using statistics over the whole time axis.
///
/// Only acausal models use this: every output row depends on every input row.
pub fn temporal_norm<F: Real>(
    x: &Matrix<F>,
    gain: &Matrix<F>,
    bias: &Matrix<F>,
) -> Result<(Matrix<F>, NormCache<F>)> {
    let (len, ch) = x.shape();
    if len < 2 {
        return Err(Error::Shape(format!(
            "temporal normalization needs at least 2 time steps, got {len}"
        )));
    }
    check_bias(gain, ch, "norm gain")?;
    check_bias(bias, ch, "norm")?;
    let n = F::lit(len as f64);
    let eps = F::lit(NORM_EPS);
    let mean = x.sum_rows().map(|v| v / n);
    let mut var = Matrix::zeros(1, ch);
    for t in 0..len {
        for ((s, &v), &m) in var
            .as_mut_slice()
            .iter_mut()
            .zip(x.row(t))
            .zip(mean.as_slice())
        {
            *s += (v - m) * (v - m);
        }
    }
    let inv_std: Vec<F> = var
        .as_slice()
        .iter()
        .map(|&s: &F| F::one() / (s / n + eps).sqrt())
        .collect();
    let mut normalized = Matrix::zeros(len, ch);
    let mut out = Matrix::zeros(len, ch);
    for t in 0..len {
        for c in 0..ch {
            let xh = (x.get(t, c) - mean.get(0, c)) * inv_std[c];
            normalized.set(t, c, xh);
            out.set(t, c, gain.get(0, c) * xh + bias.get(0, c));
        }
    }
    Ok((
        out,
        NormCache {
            normalized,
            inv_std,
        },
    ))
}

/// Returns `(dx, dgain, dbias)` for [`temporal_norm`].
pub fn temporal_norm_backward<F: Real>(
    cache: &NormCache<F>,
    gain: &Matrix<F>,
    dy: &Matrix<F>,
) -> (Matrix<F>, Matrix<F>, Matrix<F>) {
    let (len, ch) = dy.shape();
    let n = F::lit(len as f64);
    let xh = &cache.normalized;
    let mut dgain = Matrix::zeros(1, ch);
    let dbias = dy.sum_rows();
    let mut sum_dxh = vec![F::zero(); ch];
    let mut sum_dxh_xh = vec![F::zero(); ch];
    for t in 0..len {
        for c in 0..ch {
            let g = dy.get(t, c);
            dgain.as_mut_slice()[c] += g * xh.get(t, c);
            let dxh = g * gain.get(0, c);
            sum_dxh[c] += dxh;
            sum_dxh_xh[c] += dxh * xh.get(t, c);
        }
    }
    let mut dx = Matrix::zeros(len, ch);
    for t in 0..len {
        for c in 0..ch {
            let dxh = dy.get(t, c) * gain.get(0, c);
            let v = cache.inv_std[c] / n * (n * dxh - sum_dxh[c] - xh.get(t, c) * sum_dxh_xh[c]);
            dx.set(t, c, v);
        }
    }
    (dx, dgain, dbias)
}

/// Column concatenation `[a ‖ b]`.
pub fn concat_cols<F: Real>(a: &Matrix<F>, b: &Matrix<F>) -> Result<Matrix<F>> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "concat of {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for t in 0..a.rows() {
        let row = out.row_mut(t);
        row[..a.cols()].copy_from_slice(a.row(t));
        row[a.cols()..].copy_from_slice(b.row(t));
    }
    Ok(out)
}

pub fn split_cols<F: Real>(d: &Matrix<F>, left: usize) -> (Matrix<F>, Matrix<F>) {
    let right = d.cols() - left;
    let mut a = Matrix::zeros(d.rows(), left);
    let mut b = Matrix::zeros(d.rows(), right);
    for t in 0..d.rows() {
        a.row_mut(t).copy_from_slice(&d.row(t)[..left]);
        b.row_mut(t).copy_from_slice(&d.row(t)[left..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(values: &[f64]) -> Matrix<f64> {
        Matrix::from_fn(values.len(), 1, |r, _| values[r])
    }

    fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn matmul_examples() {
        let b = Matrix::<f64>::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &b).unwrap(), b);
        let a = Matrix::<f64>::from_rows(&[&[1.0, 2.0]]);
        let c = Matrix::<f64>::from_rows(&[&[3.0], &[4.0]]);
        assert_eq!(matmul(&a, &c).unwrap().as_slice(), &[11.0]);
        let z = matmul(&Matrix::zeros(2, 3), &Matrix::filled(3, 4, 2.5)).unwrap();
        assert_eq!(z, Matrix::zeros(2, 4));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::<f32>::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3 by 2x3"), "{msg}");
    }

    #[test]
    fn matmul_agrees_with_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(m, k, n) in &[(1, 1, 1), (5, 7, 3), (17, 64, 9), (33, 2, 40)] {
            let a = Matrix::from_fn(m, k, |_, _| rng.random::<f64>() - 0.5);
            let b = Matrix::from_fn(k, n, |_, _| rng.random::<f64>() - 0.5);
            assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        }
    }

    #[test]
    fn conv_examples() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let w = col(&[1.0, 1.0, 1.0]);
        let b = Matrix::zeros(1, 1);
        let causal = ConvSpec {
            kernel_size: 3,
            dilation: 1,
            mode: ConvMode::Causal,
        };
        let y = dilated_conv1d(&x, &w, &b, causal).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 3.0, 6.0, 9.0]);
        let sym = ConvSpec {
            mode: ConvMode::Symmetric,
            ..causal
        };
        let y = dilated_conv1d(&x, &w, &b, sym).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 6.0, 9.0, 7.0]);
        let y = dilated_conv1d(&Matrix::zeros(4, 1), &w, &b, sym).unwrap();
        assert_eq!(y, Matrix::zeros(4, 1));
    }

    #[test]
    fn conv_rejects_bad_config() {
        let x = Matrix::<f32>::zeros(4, 1);
        let b = Matrix::zeros(1, 1);
        let bad = [
            (0, 1, ConvMode::Causal),
            (3, 0, ConvMode::Causal),
            (4, 1, ConvMode::Symmetric),
        ];
        for (kernel_size, dilation, mode) in bad {
            let w = Matrix::zeros(kernel_size.max(1), 1);
            let spec = ConvSpec {
                kernel_size,
                dilation,
                mode,
            };
            assert!(matches!(
                dilated_conv1d(&x, &w, &b, spec),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn conv_matches_direct_summation_with_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (len, cin, cout, k) = (13, 3, 2, 5);
        let x = Matrix::from_fn(len, cin, |_, _| rng.random::<f64>() - 0.5);
        let w = Matrix::from_fn(k * cin, cout, |_, _| rng.random::<f64>() - 0.5);
        let b = Matrix::from_fn(1, cout, |_, _| rng.random::<f64>());
        for mode in [ConvMode::Causal, ConvMode::Symmetric] {
            let spec = ConvSpec {
                kernel_size: k,
                dilation: 2,
                mode,
            };
            let y = dilated_conv1d(&x, &w, &b, spec).unwrap();
            for t in 0..len {
                for o in 0..cout {
                    let mut acc = b.get(0, o);
                    for tap in 0..k {
                        let src = match mode {
                            ConvMode::Symmetric => t as isize + (tap as isize - 2) * 2,
                            ConvMode::Causal => t as isize - (k - 1 - tap) as isize * 2,
                        };
                        if (0..len as isize).contains(&src) {
                            for i in 0..cin {
                                acc += w.get(tap * cin + i, o) * x.get(src as usize, i);
                            }
                        }
                    }
                    assert!((y.get(t, o) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let y = softmax_rows(&Matrix::<f64>::from_rows(&[&[0.0, 0.0]]));
        assert_eq!(y.as_slice(), &[0.5, 0.5]);
        let y = softmax_rows(&Matrix::<f32>::from_rows(&[&[1000.0, 0.0]]));
        assert!(y.all_finite());
        assert!((y.get(0, 0) - 1.0).abs() < 1e-6 && y.get(0, 1) < 1e-6);
        let y = softmax_rows(&Matrix::<f64>::from_rows(&[&[
            0.0,
            2f64.ln(),
            3f64.ln(),
        ]]));
        for (i, want) in [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0].iter().enumerate() {
            assert!((y.get(0, i) - want).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_and_dropout_examples() {
        let x = Matrix::<f32>::from_rows(&[&[-1.0, 0.0, 2.0]]);
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (y, mask) = dropout(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, _) = dropout(&x, 0.5, &mut rng, false).unwrap();
        assert_eq!(y, x);
        assert!(dropout(&x, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let x = Matrix::<f64>::filled(50, 20, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, mask) = dropout(&x, 0.5, &mut rng, true).unwrap();
        assert!(mask.is_some());
        let zeros = y.as_slice().iter().filter(|&&v| v == 0.0).count();
        assert!(y.as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!((400..600).contains(&zeros), "{zeros}");
    }

    #[test]
    fn temporal_norm_examples() {
        let gain = Matrix::<f64>::filled(1, 1, 1.0);
        let bias = Matrix::zeros(1, 1);
        let (y, _) = temporal_norm(&col(&[5.0, 5.0, 5.0]), &gain, &bias).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
        let (y, _) = temporal_norm(&col(&[-1.0, 1.0]), &gain, &bias).unwrap();
        assert!((y.get(0, 0) + 1.0).abs() < 1e-3 && (y.get(1, 0) - 1.0).abs() < 1e-3);
        let b = Matrix::filled(1, 1, 0.25);
        let (y, _) = temporal_norm(&col(&[3.0, -2.0, 7.0]), &Matrix::zeros(1, 1), &b).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.25));
        assert!(temporal_norm(&col(&[1.0]), &gain, &bias).is_err());
    }
}
