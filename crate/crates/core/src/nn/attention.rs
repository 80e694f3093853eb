//! Multi-head scaled dot-product attention over token matrices.

use crate::autograd::Var;
use crate::error::TensorError;
use crate::nn::params::{Binding, ParamBuilder, ParamId};
use crate::scalar::Scalar;

/// Projection matrices (all C×C, no biases) and head count.
#[derive(Clone, Debug)]
pub struct Mhsa {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub channels: usize,
    pub heads: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct MhsaWeights<'g, T> {
    pub w_q: Var<'g, T>,
    pub w_k: Var<'g, T>,
    pub w_v: Var<'g, T>,
    pub w_o: Var<'g, T>,
    pub heads: usize,
}

impl Mhsa {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, channels: usize, heads: usize) -> Self {
        let mut proj = |name: &str| pb.uniform(name, &[channels, channels], channels);
        Mhsa {
            w_q: proj("w_q"),
            w_k: proj("w_k"),
            w_v: proj("w_v"),
            w_o: proj("w_o"),
            channels,
            heads,
        }
    }

    pub fn param_count(channels: usize) -> usize {
        4 * channels * channels
    }

    pub fn bind<'g, T: Scalar>(&self, b: &Binding<'g, T>) -> MhsaWeights<'g, T> {
        MhsaWeights {
            w_q: b.var(self.w_q),
            w_k: b.var(self.w_k),
            w_v: b.var(self.w_v),
            w_o: b.var(self.w_o),
            heads: self.heads,
        }
    }
}

/// Attention of N query tokens over M key/value tokens (both C wide).
pub fn mhsa<'g, T: Scalar>(
    queries: Var<'g, T>,
    keys_values: Var<'g, T>,
    p: &MhsaWeights<'g, T>,
) -> Result<Var<'g, T>, TensorError> {
    mhsa_with_weights(queries, keys_values, p).map(|(out, _)| out)
}

/// Like [`mhsa`] but also returns each head's N×M attention matrix.
pub fn mhsa_with_weights<'g, T: Scalar>(
    queries: Var<'g, T>,
    keys_values: Var<'g, T>,
    p: &MhsaWeights<'g, T>,
) -> Result<(Var<'g, T>, Vec<Var<'g, T>>), TensorError> {
    let qs = queries.shape();
    let ks = keys_values.shape();
    let (&[_, c], &[_, kc]) = (&qs[..], &ks[..]) else {
        return Err(TensorError::dim("mhsa", format!("expected token matrices, got {qs:?} and {ks:?}")));
    };
    if c != kc {
        return Err(TensorError::shape("mhsa", &qs, &ks));
    }
    if p.heads == 0 || c % p.heads != 0 {
        return Err(TensorError::dim(
            "mhsa",
            format!("{} heads do not divide {c} channels", p.heads),
        ));
    }
    let d = c / p.heads;
    let scale = T::one() / T::of(d as f64).sqrt();
    let q = queries.matmul_nt(p.w_q)?.scale(scale);
    let k = keys_values.matmul_nt(p.w_k)?;
    let v = keys_values.matmul_nt(p.w_v)?;
    let mut heads = Vec::with_capacity(p.heads);
    let mut weights = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let qh = q.slice_cols(h * d, d)?;
        let kh = k.slice_cols(h * d, d)?;
        let vh = v.slice_cols(h * d, d)?;
        let a = qh.matmul_nt(kh)?.softmax_rows()?;
        heads.push(a.matmul(vh)?);
        weights.push(a);
    }
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        queries.graph().concat_cols(&heads)?
    };
    Ok((joined.matmul_nt(p.w_o)?, weights))
}
