//! Reverse-mode differentiation over a linear tape of coarse operations.
//!
//! Nodes are appended in evaluation order; [`Tape::backward`] walks them in
//! reverse and returns gradients for every parameter leaf. Parameter values
//! are borrowed from the [`ParamStore`], never copied.

use rand::Rng;

use super::matrix::{Matrix, Real};
use super::ops::{self, ConvSpec, NormCache};
use super::param::{ParamId, ParamStore};
use crate::attention::{self, AttentionCache};
use crate::error::Result;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    Conv { x: Var, w: Var, b: Var, spec: ConvSpec },
    Relu { x: Var },
    Add { a: Var, b: Var },
    Attention { q: Var, k: Var, v: Var, cache: AttentionCache<F> },
    Norm { x: Var, gain: Var, cache: NormCache<F>, bias: Var },
    Dropout { x: Var, mask: Vec<F> },
    Concat { a: Var, b: Var },
    Softmax { x: Var },
    Fuse { base: Var, branches: Vec<Var>, weights: Vec<Var>, alpha: F },
}

struct Node<F> {
    value: Option<Matrix<F>>,
    op: Op<F>,
}

pub struct Tape<'p, F: Real> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
}

impl<'p, F: Real> Tape<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Option<Matrix<F>>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    /// Which side of zero every recorded ReLU input lies on. Two evaluations
    /// with equal patterns lie on the same smooth piece of the computation.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            if let Op::Relu { x } = node.op {
                pattern.extend(self.value(x).as_slice().iter().map(|&v| v > F::zero()));
            }
        }
        pattern
    }

    pub fn input(&mut self, m: Matrix<F>) -> Var {
        self.push(Some(m), Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(None, Op::Param(id))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(Some(y), Op::Linear { x, w, b }))
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        let y = ops::dilated_conv1d(self.value(x), self.value(w), self.value(b), spec)?;
        Ok(self.push(Some(y), Op::Conv { x, w, b, spec }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(Some(y), Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        self.push(Some(y), Op::Add { a, b })
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, window: usize, causal: bool) -> Result<Var> {
        let (y, cache) = attention::attention_forward(
            self.value(q),
            self.value(k),
            self.value(v),
            window,
            causal,
        )?;
        Ok(self.push(Some(y), Op::Attention { q, k, v, cache }))
    }

    pub fn temporal_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (y, cache) = ops::temporal_norm(self.value(x), self.value(gain), self.value(bias))?;
        Ok(self.push(Some(y), Op::Norm { x, gain, cache, bias }))
    }

    /// Inverted dropout; identity (no new node) outside training.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        let (y, mask) = ops::dropout(self.value(x), rate, rng, training)?;
        Ok(match mask {
            Some(mask) => self.push(Some(y), Op::Dropout { x, mask }),
            None => x,
        })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_cols(self.value(a), self.value(b))?;
        Ok(self.push(Some(y), Op::Concat { a, b }))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let y = ops::softmax_rows(self.value(x));
        self.push(Some(y), Op::Softmax { x })
    }

    /// `base + alpha * Σ_j weights[j] * branches[j]`, each weight a 1×1 leaf.
    pub fn fuse(&mut self, base: Var, branches: &[Var], weights: &[Var], alpha: F) -> Result<Var> {
        let ws: Vec<F> = weights.iter().map(|&w| self.value(w).get(0, 0)).collect();
        let outs: Vec<&Matrix<F>> = branches.iter().map(|&b| self.value(b)).collect();
        let y = crate::model::multiscale_fuse(self.value(base), &outs, &ws, alpha)?;
        Ok(self.push(
            Some(y),
            Op::Fuse {
                base,
                branches: branches.to_vec(),
                weights: weights.to_vec(),
                alpha,
            },
        ))
    }

    /// Back-propagates the given output gradients. Returns one optional
    /// gradient per parameter in store order.
    pub fn backward(&self, seeds: Vec<(Var, Matrix<F>)>) -> Vec<Option<Matrix<F>>> {
        let mut grads: Vec<Option<Matrix<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            accumulate(&mut grads, v, g);
        }
        let mut param_grads: Vec<Option<Matrix<F>>> = (0..self.params.len()).map(|_| None).collect();
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(id) => match &mut param_grads[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                },
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = ops::linear_backward(self.value(*x), self.value(*w), &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Conv { x, w, b, spec } => {
                    let (dx, dw, db) =
                        ops::dilated_conv1d_backward(self.value(*x), self.value(*w), &g, *spec);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu { x } => {
                    let dx = ops::relu_backward(self.value(*x), &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Attention { q, k, v, cache } => {
                    let (dq, dk, dv) = attention::attention_backward(
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        cache,
                        &g,
                    );
                    accumulate(&mut grads, *q, dq);
                    accumulate(&mut grads, *k, dk);
                    accumulate(&mut grads, *v, dv);
                }
                Op::Norm { x, gain, cache, bias } => {
                    let (dx, dg, db) = ops::temporal_norm_backward(cache, self.value(*gain), &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dg);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Dropout { x, mask } => {
                    accumulate(&mut grads, *x, ops::dropout_backward(mask, &g));
                }
                Op::Concat { a, b } => {
                    let (da, db) = ops::split_cols(&g, self.value(*a).cols());
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Softmax { x } => {
                    let y = self.nodes[idx].value.as_ref().expect("softmax output");
                    accumulate(&mut grads, *x, ops::softmax_rows_backward(y, &g));
                }
                Op::Fuse {
                    base,
                    branches,
                    weights,
                    alpha,
                } => {
                    for (&br, &w) in branches.iter().zip(weights) {
                        let wv = self.value(w).get(0, 0);
                        let a = self.value(br);
                        let dw: F = a
                            .as_slice()
                            .iter()
                            .zip(g.as_slice())
                            .map(|(&x, &y)| x * y)
                            .sum::<F>()
                            * *alpha;
                        accumulate(&mut grads, w, Matrix::filled(1, 1, dw));
                        accumulate(&mut grads, br, g.map(|v| v * (*alpha * wv)));
                    }
                    accumulate(&mut grads, *base, g);
                }
            }
        }
        param_grads
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Matrix<F>>], v: Var, g: Matrix<F>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::param::Param;

    #[test]
    fn shared_leaf_accumulates_gradient() {
        // y = relu(x·W + b) + (x·W + b), loss = sum(y)
        let mut store = ParamStore::<f64>::new();
        let w = store
            .push(Param::new("w", vec![2, 1], Matrix::from_rows(&[&[2.0], &[-1.0]])).unwrap())
            .unwrap();
        let b = store
            .push(Param::new("b", vec![1], Matrix::zeros(1, 1)).unwrap())
            .unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.input(Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
        let (wv, bv) = (tape.param(w), tape.param(b));
        let z = tape.linear(x, wv, bv).unwrap();
        let r = tape.relu(z);
        let y = tape.add(r, z);
        assert_eq!(tape.value(y).as_slice(), &[2.0, -1.0]);
        let grads = tape.backward(vec![(y, Matrix::filled(2, 1, 1.0))]);
        // dz = [2, 1]; dW = xᵀ dz = [2, 3]; db = 3.
        assert_eq!(grads[0].as_ref().unwrap().as_slice(), &[2.0, 3.0]);
        assert_eq!(grads[1].as_ref().unwrap().as_slice(), &[3.0]);
    }
}
