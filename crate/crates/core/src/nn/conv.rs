use crate::autograd::Var;
use crate::error::TensorError;
use crate::nn::params::{Binding, ParamBuilder, ParamId};
use crate::scalar::Scalar;

/// Square-kernel 2-D convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<'_, T>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            kernels: pb.uniform("weight", &[out_channels, in_channels, kernel, kernel], fan_in),
            bias: pb.constant("bias", &[out_channels], 0.0),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn param_count(in_channels: usize, out_channels: usize, kernel: usize) -> usize {
        out_channels * (in_channels * kernel * kernel + 1)
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>, TensorError> {
        x.conv2d(b.var(self.kernels), Some(b.var(self.bias)), self.stride, self.pad)
    }

    /// Output spatial extent for an input extent `n`.
    pub fn out_extent(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }
}
