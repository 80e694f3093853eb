//! The network's building blocks. Every block owns parameter ids only; the
//! forward passes read the bound values from a [`Binding`].

use crate::autograd::Var;
use crate::error::TensorError;
use crate::nn::{lstm_last_output, mhsa, Binding, Conv2d, Linear, Lstm, Mhsa, ParamBuilder};
use crate::scalar::Scalar;

type Result<T> = std::result::Result<T, TensorError>;

fn image_dims<T: Scalar>(x: &Var<'_, T>, op: &'static str) -> Result<(usize, usize, usize)> {
    match x.shape()[..] {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(TensorError::dim(op, format!("expected C×H×W, got {s:?}"))),
    }
}

/// C×H×W map → (H·W)×C token matrix.
pub fn to_tokens<'g, T: Scalar>(x: Var<'g, T>) -> Result<Var<'g, T>> {
    let (c, h, w) = image_dims(&x, "to_tokens")?;
    x.reshape(&[c, h * w])?.transpose()
}

/// (H·W)×C token matrix → C×H×W map.
pub fn from_tokens<'g, T: Scalar>(t: Var<'g, T>, h: usize, w: usize) -> Result<Var<'g, T>> {
    let c = t.shape()[1];
    t.transpose()?.reshape(&[c, h, w])
}

/// Flatten → LSTM → two fully connected layers, applied to one 1×H×W
/// sub-graph. Image rows are the LSTM time steps.
#[derive(Clone, Debug)]
pub struct CBlock {
    pub lstm: Lstm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub height: usize,
    pub width: usize,
}

impl CBlock {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, height: usize, width: usize, hidden: usize) -> Self {
        CBlock {
            lstm: Lstm::new(&mut pb.scope("lstm"), width, hidden),
            fc1: Linear::new(&mut pb.scope("fc1"), hidden, hidden),
            fc2: Linear::new(&mut pb.scope("fc2"), hidden, height * width),
            height,
            width,
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let (c, h, w) = image_dims(&x, "c_block")?;
        if c != 1 || h != self.height || w != self.width {
            return Err(TensorError::shape("c_block", &[1, self.height, self.width], &x.shape()));
        }
        let seq = x.reshape(&[h, w])?;
        let last = lstm_last_output(seq, &self.lstm.bind(b))?;
        let y = self.fc2.forward(b, self.fc1.forward(b, last)?)?;
        y.reshape(&[1, h, w])
    }
}

/// Three convolutions (7×7 s2, 5×5 s1, 3×3 s1), each followed by GELU.
#[derive(Clone, Debug)]
pub struct Stem {
    pub convs: [Conv2d; 3],
}

impl Stem {
    pub const KERNELS: [usize; 3] = [7, 5, 3];
    pub const STRIDES: [usize; 3] = [2, 1, 1];

    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, in_channels: usize, channels: [usize; 3]) -> Self {
        let ins = [in_channels, channels[0], channels[1]];
        let convs = [0, 1, 2].map(|i| {
            let k = Self::KERNELS[i];
            Conv2d::new(
                &mut pb.scope(&format!("conv{i}")),
                ins[i],
                channels[i],
                k,
                Self::STRIDES[i],
                k / 2,
            )
        });
        Stem { convs }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, mut x: Var<'g, T>) -> Result<Var<'g, T>> {
        for conv in &self.convs {
            x = conv.forward(b, x)?.gelu();
        }
        Ok(x)
    }
}

/// 1×1 convolution followed by 2×2 mean pooling with stride 2.
#[derive(Clone, Debug)]
pub struct Ucd {
    pub conv: Conv2d,
}

impl Ucd {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, in_channels: usize, out_channels: usize) -> Self {
        Ucd {
            conv: Conv2d::new(&mut pb.scope("conv"), in_channels, out_channels, 1, 1, 0),
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = self.conv.forward(b, x)?;
        let (_, h, w) = image_dims(&y, "ucd")?;
        if h == 1 || w == 1 {
            return Err(TensorError::dim("ucd", format!("cannot halve a {h}×{w} map")));
        }
        y.avgpool2d(2, 2, true)
    }
}

/// `Conv(GELU(Conv(x)))` with channel-preserving 3×3 convolutions.
#[derive(Clone, Debug)]
pub struct Rru {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl Rru {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, channels: usize) -> Self {
        Rru {
            conv1: Conv2d::new(&mut pb.scope("conv1"), channels, channels, 3, 1, 1),
            conv2: Conv2d::new(&mut pb.scope("conv2"), channels, channels, 3, 1, 1),
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        self.conv2.forward(b, self.conv1.forward(b, x)?.gelu())
    }
}

/// Self-attention whose keys/values come from a strided convolutional
/// reduction of the map. Queries and reduced tokens are layer-normalized
/// (no affine part) before the projections. No residual.
#[derive(Clone, Debug)]
pub struct Fmhsa {
    /// `None` when the reduction stride is 1: keys/values are the queries.
    pub reduce: Option<Conv2d>,
    pub attn: Mhsa,
    pub stride: usize,
}

impl Fmhsa {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, channels: usize, heads: usize, stride: usize) -> Self {
        let reduce = (stride > 1).then(|| Conv2d::new(&mut pb.scope("reduce"), channels, channels, stride, stride, 0));
        Fmhsa {
            reduce,
            attn: Mhsa::new(&mut pb.scope("attn"), channels, heads),
            stride,
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let (_, h, w) = image_dims(&x, "fmhsa")?;
        let queries = to_tokens(x)?.layer_norm_rows()?;
        let keys_values = match &self.reduce {
            Some(conv) => to_tokens(conv.forward(b, x)?)?.layer_norm_rows()?,
            None => queries,
        };
        let out = mhsa(queries, keys_values, &self.attn.bind(b))?;
        from_tokens(out, h, w)
    }
}

/// 5×5 conv → per-position `Linear(C→4C) → GELU → Linear(4C→C)` → 3×3 conv.
#[derive(Clone, Debug)]
pub struct Iru {
    pub conv_wide: Conv2d,
    pub expand: Linear,
    pub project: Linear,
    pub conv_narrow: Conv2d,
}

impl Iru {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, channels: usize, expansion: usize) -> Self {
        Iru {
            conv_wide: Conv2d::new(&mut pb.scope("conv5"), channels, channels, 5, 1, 2),
            expand: Linear::new(&mut pb.scope("fc1"), channels, expansion * channels),
            project: Linear::new(&mut pb.scope("fc2"), expansion * channels, channels),
            conv_narrow: Conv2d::new(&mut pb.scope("conv3"), channels, channels, 3, 1, 1),
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let (_, h, w) = image_dims(&x, "iru")?;
        let a = self.conv_wide.forward(b, x)?;
        let t = self.expand.forward(b, to_tokens(a)?)?.gelu();
        let t = self.project.forward(b, t)?;
        self.conv_narrow.forward(b, from_tokens(t, h, w)?)
    }
}

/// `A = RRU(X)`, `B = FMHSA(A)`, `out = IRU(B) + B`.
#[derive(Clone, Debug)]
pub struct SsnBlock {
    pub rru: Rru,
    pub fmhsa: Fmhsa,
    pub iru: Iru,
}

impl SsnBlock {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<'_, T>,
        channels: usize,
        heads: usize,
        kv_stride: usize,
        expansion: usize,
    ) -> Self {
        SsnBlock {
            rru: Rru::new(&mut pb.scope("rru"), channels),
            fmhsa: Fmhsa::new(&mut pb.scope("fmhsa"), channels, heads, kv_stride),
            iru: Iru::new(&mut pb.scope("iru"), channels, expansion),
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let a = self.rru.forward(b, x)?;
        let bb = self.fmhsa.forward(b, a)?;
        self.iru.forward(b, bb)?.add(bb)
    }
}

/// Global average pool → projection (GELU) → K×3 regression output.
#[derive(Clone, Debug)]
pub struct Head {
    pub proj: Linear,
    pub out: Linear,
    pub waypoints: usize,
}

impl Head {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, channels: usize, waypoints: usize) -> Self {
        Head {
            proj: Linear::new(&mut pb.scope("proj"), channels, channels),
            out: Linear::new(&mut pb.scope("out"), channels, 3 * waypoints),
            waypoints,
        }
    }

    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let (c, h, w) = image_dims(&x, "head")?;
        if h != w {
            return Err(TensorError::dim("head", format!("global pooling needs a square map, got {h}×{w}")));
        }
        let pooled = x.avgpool2d(h, h, false)?.reshape(&[1, c])?;
        let z = self.proj.forward(b, pooled)?.gelu();
        self.out.forward(b, z)?.reshape(&[self.waypoints, 3])
    }
}
