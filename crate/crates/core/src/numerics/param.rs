use std::collections::HashMap;

use super::matrix::{Matrix, Real};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A learned tensor with its gradient accumulator.
///
/// `shape` is the logical shape written to checkpoints; `value` stores it as
/// a matrix (rank 1 as `1×n`, rank 3 `[K, Cin, Cout]` as `(K·Cin)×Cout`).
#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Matrix<F>,
    pub grad: Matrix<F>,
}

pub(crate) fn matrix_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [n] => Ok((1, *n)),
        [r, c] => Ok((*r, *c)),
        [k, cin, cout] => Ok((k * cin, *cout)),
        _ => Err(Error::Shape(format!("unsupported parameter rank {}", shape.len()))),
    }
}

impl<F: Real> Param<F> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Matrix<F>) -> Result<Self> {
        let name = name.into();
        let (r, c) = matrix_dims(&shape)?;
        value.ensure_shape(r, c, &name)?;
        Ok(Param {
            name,
            shape,
            grad: Matrix::zeros(r, c),
            value,
        })
    }
}

/// Ordered, name-indexed set of parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, param: Param<F>) -> Result<ParamId> {
        if self.index.contains_key(&param.name) {
            return Err(Error::Config(format!("duplicate parameter {}", param.name)));
        }
        let id = ParamId(self.params.len());
        self.index.insert(param.name.clone(), id);
        self.params.push(param);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<F> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<F>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn value(&self, id: ParamId) -> &Matrix<F> {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(F::zero());
        }
    }

    /// Adds per-parameter gradients (aligned with store order).
    pub fn accumulate(&mut self, grads: &[Option<Matrix<F>>]) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            if let Some(g) = g {
                p.grad.add_assign(g);
            }
        }
    }

    /// Same parameters converted to another scalar type.
    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}
