//! Single-head scaled dot-product attention over sliding temporal windows.
//!
//! Acausal windows are centered: frame `t` sees `|t - t'| <= w/2`. Causal
//! windows look back only: frame `t` sees `t - w + 1 <= t' <= t`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::matrix::{gemm, View};
use crate::numerics::ops::softmax_in_place;
use crate::numerics::{Matrix, Real};

/// Window size used by the scale with convolution kernel `kernel_size` at
/// 1-based `layer`.
///
/// The first layer always uses a window of 1. From the second layer the
/// window starts at `kernel_size - 1` and doubles each layer, so kernel 3
/// runs 1, 2, 4, .., 512 over ten layers, kernel 5 runs 1, 4, 8, .., 1024 and
/// kernel 17 runs 1, 16, 32, .., 4096.
pub fn window_schedule(kernel_size: usize, layer: usize) -> Result<usize> {
    if layer < 1 {
        return Err(Error::Config("layer index starts at 1".into()));
    }
    if kernel_size < 3 || kernel_size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "no window schedule for kernel size {kernel_size} (odd sizes >= 3 only)"
        )));
    }
    if layer == 1 {
        return Ok(1);
    }
    1usize
        .checked_shl((layer - 2) as u32)
        .and_then(|p| p.checked_mul(kernel_size - 1))
        .filter(|_| layer - 2 < usize::BITS as usize)
        .ok_or_else(|| Error::Config(format!("window overflows at layer {layer}")))
}

/// Attention window of one scale branch in one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub kernel_size: usize,
    pub layer_index: usize,
    pub window_size: usize,
    pub causal: bool,
}

impl WindowSpec {
    pub fn new(kernel_size: usize, layer_index: usize, causal: bool) -> Result<Self> {
        Ok(WindowSpec {
            kernel_size,
            layer_index,
            window_size: window_schedule(kernel_size, layer_index)?,
            causal,
        })
    }
}

/// Key positions that query `t` may attend to.
pub fn admissible_range(t: usize, len: usize, window: usize, causal: bool) -> Range<usize> {
    let window = window.max(1);
    if causal {
        (t + 1).saturating_sub(window)..t + 1
    } else {
        let half = window / 2;
        t.saturating_sub(half)..(t + half + 1).min(len)
    }
}

/// Boolean `len×len` attention mask, row = query, column = key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    len: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn from_fn(len: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(len * len);
        for t in 0..len {
            for s in 0..len {
                allowed.push(f(t, s));
            }
        }
        AttentionMask { len, allowed }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.len + key]
    }

    pub fn row(&self, query: usize) -> &[bool] {
        &self.allowed[query * self.len..(query + 1) * self.len]
    }
}

pub fn attention_mask(len: usize, window: usize, causal: bool) -> AttentionMask {
    AttentionMask::from_fn(len, |t, s| admissible_range(t, len, window, causal).contains(&s))
}

/// Query rows processed together; keys for a block are the union of its
/// rows' windows.
const MAX_BLOCK_ROWS: usize = 64;
const MIN_BLOCK_ROWS: usize = 16;

#[derive(Clone, Debug)]
struct Block {
    rows: Range<usize>,
    keys: Range<usize>,
    /// Offset of this block's dense `rows × keys` probabilities.
    offset: usize,
}

/// Forward state kept for the backward pass: for each block of query rows,
/// the dense probabilities over the block's key range, exactly zero
/// outside each row's window.
#[derive(Clone, Debug)]
pub struct AttentionCache<F> {
    probs: Vec<F>,
    blocks: Vec<Block>,
}

fn check_qkv<F: Real>(q: &Matrix<F>, k: &Matrix<F>, v: &Matrix<F>) -> Result<()> {
    if q.shape() != k.shape() || q.shape() != v.shape() || q.cols() == 0 {
        return Err(Error::Shape(format!(
            "attention needs equal non-empty Q/K/V shapes, got {:?} {:?} {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    Ok(())
}

/// Banded attention; equal (to rounding) to [`dense_masked_attention_reference`]
/// with [`attention_mask`].
pub fn sliding_window_attention<F: Real>(
    q: &Matrix<F>,
    k: &Matrix<F>,
    v: &Matrix<F>,
    spec: &WindowSpec,
) -> Result<Matrix<F>> {
    attention_forward(q, k, v, spec.window_size, spec.causal).map(|(out, _)| out)
}

fn plan_blocks(len: usize, window: usize, causal: bool) -> Vec<Block> {
    let window = window.max(1);
    let rows_per_block = if !causal && window / 2 + 1 >= len {
        len
    } else {
        window.clamp(MIN_BLOCK_ROWS, MAX_BLOCK_ROWS)
    };
    let mut blocks = Vec::with_capacity(len.div_ceil(rows_per_block));
    let mut offset = 0;
    for r0 in (0..len).step_by(rows_per_block) {
        let r1 = (r0 + rows_per_block).min(len);
        let keys = admissible_range(r0, len, window, causal).start
            ..admissible_range(r1 - 1, len, window, causal).end;
        let size = (r1 - r0) * keys.len();
        blocks.push(Block {
            rows: r0..r1,
            keys,
            offset,
        });
        offset += size;
    }
    blocks
}

fn view<F>(data: &[F], rows: usize, cols: usize) -> View<'_, F> {
    View {
        data,
        rows,
        cols,
        rs: cols,
        cs: 1,
    }
}

/// Banded attention returning the cache needed by [`attention_backward`].
///
/// Query rows are processed in blocks aligned to multiples of the block
/// size, so a causal row's arithmetic does not depend on the sequence
/// length or on later frames.
pub fn attention_forward<F: Real>(
    q: &Matrix<F>,
    k: &Matrix<F>,
    v: &Matrix<F>,
    window: usize,
    causal: bool,
) -> Result<(Matrix<F>, AttentionCache<F>)> {
    check_qkv(q, k, v)?;
    let (len, ch) = q.shape();
    let scale = F::one() / F::lit(ch as f64).sqrt();
    let blocks = plan_blocks(len, window, causal);
    let total = blocks.last().map_or(0, |b| b.offset + b.rows.len() * b.keys.len());
    let mut probs = vec![F::zero(); total];
    let mut out = Matrix::zeros(len, ch);
    for b in &blocks {
        let (nr, nk) = (b.rows.len(), b.keys.len());
        let p = &mut probs[b.offset..b.offset + nr * nk];
        let qb = View::rows_of(q, b.rows.start, b.rows.end);
        let kb = View::rows_of(k, b.keys.start, b.keys.end);
        gemm(scale, qb, kb.t(), F::zero(), p);
        for (i, row) in p.chunks_mut(nk).enumerate() {
            let r = admissible_range(b.rows.start + i, len, window, causal);
            let (lo, hi) = (r.start - b.keys.start, r.end - b.keys.start);
            softmax_in_place(&mut row[lo..hi]);
            row[..lo].fill(F::zero());
            row[hi..].fill(F::zero());
        }
        let vb = View::rows_of(v, b.keys.start, b.keys.end);
        let ob = &mut out.as_mut_slice()[b.rows.start * ch..b.rows.end * ch];
        gemm(F::one(), view(p, nr, nk), vb, F::zero(), ob);
    }
    Ok((out, AttentionCache { probs, blocks }))
}

/// Returns `(dQ, dK, dV)`.
pub fn attention_backward<F: Real>(
    q: &Matrix<F>,
    k: &Matrix<F>,
    v: &Matrix<F>,
    cache: &AttentionCache<F>,
    dout: &Matrix<F>,
) -> (Matrix<F>, Matrix<F>, Matrix<F>) {
    let (len, ch) = q.shape();
    let scale = F::one() / F::lit(ch as f64).sqrt();
    let mut dq = Matrix::zeros(len, ch);
    let mut dk = Matrix::zeros(len, ch);
    let mut dv = Matrix::zeros(len, ch);
    let mut ds = Vec::new();
    for b in &cache.blocks {
        let (nr, nk) = (b.rows.len(), b.keys.len());
        let p = &cache.probs[b.offset..b.offset + nr * nk];
        let pv = view(p, nr, nk);
        let dob = View::rows_of(dout, b.rows.start, b.rows.end);
        let keys = b.keys.start * ch..b.keys.end * ch;
        gemm(F::one(), pv.t(), dob, F::one(), &mut dv.as_mut_slice()[keys.clone()]);
        ds.clear();
        ds.resize(nr * nk, F::zero());
        gemm(F::one(), dob, View::rows_of(v, b.keys.start, b.keys.end).t(), F::zero(), &mut ds);
        for (g, prow) in ds.chunks_mut(nk).zip(p.chunks(nk)) {
            let inner: F = g.iter().zip(prow).map(|(&a, &b)| a * b).sum();
            for (gv, &pv) in g.iter_mut().zip(prow) {
                *gv = pv * (*gv - inner);
            }
        }
        let dsv = view(&ds, nr, nk);
        let kb = View::rows_of(k, b.keys.start, b.keys.end);
        let rows = b.rows.start * ch..b.rows.end * ch;
        gemm(scale, dsv, kb, F::zero(), &mut dq.as_mut_slice()[rows]);
        let qb = View::rows_of(q, b.rows.start, b.rows.end);
        gemm(scale, dsv.t(), qb, F::one(), &mut dk.as_mut_slice()[keys]);
    }
    (dq, dk, dv)
}

/// Literal O(T²) masked attention with `-inf` fill; the test oracle for the
/// banded kernel.
pub fn dense_masked_attention_reference<F: Real>(
    q: &Matrix<F>,
    k: &Matrix<F>,
    v: &Matrix<F>,
    mask: &AttentionMask,
) -> Result<Matrix<F>> {
    check_qkv(q, k, v)?;
    let (len, ch) = q.shape();
    if mask.len() != len {
        return Err(Error::Shape(format!(
            "mask of size {} for sequence of length {len}",
            mask.len()
        )));
    }
    let scale = F::one() / F::lit(ch as f64).sqrt();
    let mut out = Matrix::zeros(len, ch);
    for t in 0..len {
        if !mask.row(t).iter().any(|&a| a) {
            return Err(Error::Shape(format!("mask row {t} admits no keys")));
        }
        let mut logits: Vec<F> = (0..len)
            .map(|s| {
                if mask.allows(t, s) {
                    (0..ch).map(|c| q.get(t, c) * k.get(s, c)).sum::<F>() * scale
                } else {
                    F::neg_infinity()
                }
            })
            .collect();
        softmax_in_place(&mut logits);
        for (s, &p) in logits.iter().enumerate() {
            for c in 0..ch {
                let cur = out.get(t, c);
                out.set(t, c, cur + p * v.get(s, c));
            }
        }
    }
    Ok(out)
}
