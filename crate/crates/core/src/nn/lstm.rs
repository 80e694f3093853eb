//! LSTM cell and the "last output only" sequence driver.
//!
//! Gate order throughout is forget, input, candidate, output:
//!
//! ```text
//! f = σ(W_f x + U_f h + b_f)     i = σ(W_i x + U_i h + b_i)
//! C̃ = tanh(W_c x + U_c h + b_c)  o = σ(W_o x + U_o h + b_o)
//! c' = f ∘ c + i ∘ C̃             h' = o ∘ tanh(c')
//! ```
//!
//! Vectors are 1×n row matrices so every product is a plain `matmul_nt`.

use crate::autograd::Var;
use crate::error::TensorError;
use crate::nn::params::{Binding, ParamBuilder, ParamId};
use crate::scalar::Scalar;

pub const GATES: [&str; 4] = ["f", "i", "c", "o"];

#[derive(Clone, Debug)]
pub struct Lstm {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input: usize,
    pub hidden: usize,
}

/// Bound LSTM weights, `W_*: hidden×input`, `U_*: hidden×hidden`, `b_*: hidden`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'g, T> {
    pub w: [Var<'g, T>; 4],
    pub u: [Var<'g, T>; 4],
    pub b: [Var<'g, T>; 4],
}

impl Lstm {
    /// Forget bias starts at +1, all other biases at 0.
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, input: usize, hidden: usize) -> Self {
        let w = GATES.map(|g| pb.uniform(&format!("w_{g}"), &[hidden, input], input));
        let u = GATES.map(|g| pb.uniform(&format!("u_{g}"), &[hidden, hidden], hidden));
        let b = GATES.map(|g| pb.constant(&format!("b_{g}"), &[hidden], if g == "f" { 1.0 } else { 0.0 }));
        Lstm {
            w,
            u,
            b,
            input,
            hidden,
        }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden + 1)
    }

    pub fn bind<'g, T: Scalar>(&self, b: &Binding<'g, T>) -> LstmWeights<'g, T> {
        LstmWeights {
            w: self.w.map(|id| b.var(id)),
            u: self.u.map(|id| b.var(id)),
            b: self.b.map(|id| b.var(id)),
        }
    }
}

/// One step of the cell. Returns `(h_t, c_t)`.
pub fn lstm_step<'g, T: Scalar>(
    x_t: Var<'g, T>,
    h_prev: Var<'g, T>,
    c_prev: Var<'g, T>,
    p: &LstmWeights<'g, T>,
) -> Result<(Var<'g, T>, Var<'g, T>), TensorError> {
    let pre = |g: usize| -> Result<Var<'g, T>, TensorError> {
        x_t.matmul_nt(p.w[g])?
            .add(h_prev.matmul_nt(p.u[g])?)?
            .add_row_bias(p.b[g])
    };
    let f = pre(0)?.sigmoid();
    let i = pre(1)?.sigmoid();
    let cand = pre(2)?.tanh();
    let o = pre(3)?.sigmoid();
    let c = f.mul(c_prev)?.add(i.mul(cand)?)?;
    let h = o.mul(c.tanh())?;
    Ok((h, c))
}

/// Runs the cell over the rows of a T×input sequence from a zero state and
/// returns only the final hidden output (1×hidden). Intermediate states stay
/// on the tape, so backward unrolls through every step.
pub fn lstm_last_output<'g, T: Scalar>(xs: Var<'g, T>, p: &LstmWeights<'g, T>) -> Result<Var<'g, T>, TensorError> {
    let shape = xs.shape();
    let [steps, _] = shape[..] else {
        return Err(TensorError::dim("lstm_last_output", format!("expected T×input, got {shape:?}")));
    };
    if steps == 0 {
        return Err(TensorError::dim("lstm_last_output", "empty sequence"));
    }
    let hidden = p.u[0].shape()[0];
    let graph = xs.graph();
    let zero = graph.constant(crate::tensor::Tensor::zeros(&[1, hidden]));
    let (mut h, mut c) = (zero, zero);
    for t in 0..steps {
        (h, c) = lstm_step(xs.slice_rows(t, 1)?, h, c, p)?;
    }
    Ok(h)
}
