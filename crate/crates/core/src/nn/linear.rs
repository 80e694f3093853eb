use crate::autograd::Var;
use crate::error::TensorError;
use crate::nn::params::{Binding, ParamBuilder, ParamId};
use crate::scalar::Scalar;

/// Affine map `y = W·x + b` applied to each row of an N×in token matrix.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: pb.uniform("weight", &[out_dim, in_dim], in_dim),
            bias: pb.constant("bias", &[out_dim], 0.0),
            in_dim,
            out_dim,
        }
    }

    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        out_dim * (in_dim + 1)
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>, TensorError> {
        linear_forward(x, b.var(self.weight), b.var(self.bias))
    }
}

/// `x · Wᵀ + b` for `x: N×in`, `W: out×in`, `b: out`.
pub fn linear_forward<'g, T: Scalar>(
    x: Var<'g, T>,
    weight: Var<'g, T>,
    bias: Var<'g, T>,
) -> Result<Var<'g, T>, TensorError> {
    x.matmul_nt(weight)?.add_row_bias(bias)
}
