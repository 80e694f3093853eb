//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape. Every operation on a [`Var`] runs the
//! forward kernel immediately and records a node holding the result and the
//! handles of its inputs; node ids are therefore already a topological order
//! and [`Graph::backward`] simply walks them in reverse.
//!
//! Gradients accumulate across repeated `backward` calls until
//! [`Graph::zero_grad`] is called, which is what unrolled (BPTT-style) use
//! of the same tape expects.

use std::cell::{Cell, RefCell};
use std::sync::Arc;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::{gelu_grad, row_moments, wrap_angle, ConvGeometry, PoolGeometry, Tensor};

type Result<T> = std::result::Result<T, TensorError>;

/// Primitive kinds recorded on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddRowBias,
    Matmul,
    Transpose,
    Reshape,
    Sigmoid,
    Tanh,
    Gelu,
    SoftmaxRows,
    LayerNormRows,
    Sum,
    Mean,
    Conv2d,
    AvgPool2d,
    ConcatRows,
    SliceRows,
    ConcatCols,
    SliceCols,
    WrapAngle,
}

impl OpKind {
    pub const DIFFERENTIABLE: [OpKind; 22] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddRowBias,
        OpKind::Matmul,
        OpKind::Transpose,
        OpKind::Reshape,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::Gelu,
        OpKind::SoftmaxRows,
        OpKind::LayerNormRows,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Conv2d,
        OpKind::AvgPool2d,
        OpKind::ConcatRows,
        OpKind::SliceRows,
        OpKind::ConcatCols,
        OpKind::SliceCols,
        OpKind::WrapAngle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddRowBias => "add_row_bias",
            OpKind::Matmul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Reshape => "reshape",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Gelu => "gelu",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::LayerNormRows => "layer_norm_rows",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Conv2d => "conv2d",
            OpKind::AvgPool2d => "avgpool2d",
            OpKind::ConcatRows => "concat_rows",
            OpKind::SliceRows => "slice_rows",
            OpKind::ConcatCols => "concat_cols",
            OpKind::SliceCols => "slice_cols",
            OpKind::WrapAngle => "wrap_angle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::DIFFERENTIABLE.into_iter().find(|k| k.name() == name)
    }
}

thread_local! {
    static BACKWARD_FAULT: Cell<Option<OpKind>> = const { Cell::new(None) };
}

/// Test hook: scales every input gradient produced by `kind`'s backward rule
/// by 1.01 on the current thread. Pass `None` to restore correct behavior.
pub fn inject_backward_fault(kind: Option<OpKind>) {
    BACKWARD_FAULT.with(|f| f.set(kind));
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddRowBias(usize, usize),
    Matmul { a: usize, b: usize, transpose_b: bool },
    Transpose(usize),
    Reshape(usize),
    Sigmoid(usize),
    Tanh(usize),
    Gelu(usize),
    SoftmaxRows(usize),
    LayerNormRows(usize),
    Sum(usize),
    Mean(usize),
    Conv2d {
        input: usize,
        kernels: usize,
        bias: Option<usize>,
        stride: usize,
        pad: usize,
    },
    AvgPool2d {
        input: usize,
        window: usize,
        stride: usize,
        ceil: bool,
    },
    ConcatRows(Vec<usize>),
    SliceRows { input: usize, start: usize },
    ConcatCols(Vec<usize>),
    SliceCols { input: usize, start: usize },
    WrapAngle(usize),
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddRowBias(..) => OpKind::AddRowBias,
            Op::Matmul { .. } => OpKind::Matmul,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Gelu(_) => OpKind::Gelu,
            Op::SoftmaxRows(_) => OpKind::SoftmaxRows,
            Op::LayerNormRows(_) => OpKind::LayerNormRows,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::AvgPool2d { .. } => OpKind::AvgPool2d,
            Op::ConcatRows(_) => OpKind::ConcatRows,
            Op::SliceRows { .. } => OpKind::SliceRows,
            Op::ConcatCols(_) => OpKind::ConcatCols,
            Op::SliceCols { .. } => OpKind::SliceCols,
            Op::WrapAngle(_) => OpKind::WrapAngle,
        }
    }
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only tape of tensor operations.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Tensor<T>>>>,
}

/// Handle to a value recorded on a [`Graph`].
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        self.push_arc(Arc::new(value), op, requires_grad)
    }

    fn push_arc(&self, value: Arc<Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Trainable leaf sharing storage with a parameter store.
    pub fn leaf_shared(&self, value: Arc<Tensor<T>>) -> Var<'_, T> {
        self.push_arc(value, Op::Leaf, true)
    }

    /// Untracked input; backward never descends into it.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_shared(&self, value: Arc<Tensor<T>>) -> Var<'_, T> {
        self.push_arc(value, Op::Leaf, false)
    }

    fn value_of(&self, id: usize) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracked(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var<'_, T> {
        let rg = self.tracked(inputs);
        self.push(value, op, rg)
    }

    pub fn concat_rows<'g>(&'g self, parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat_rows(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(self.record(out, Op::ConcatRows(ids.clone()), &ids))
    }

    pub fn concat_cols<'g>(&'g self, parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat_cols(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(self.record(out, Op::ConcatCols(ids.clone()), &ids))
    }

    /// Accumulated gradient of `var`, if any backward pass reached it.
    pub fn grad(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.borrow().get(var.id).cloned().flatten()
    }

    pub fn zero_grad(&self) {
        self.grads.borrow_mut().clear();
    }

    /// Propagates ∂sink/∂· to every tracked ancestor of `sink`, adding into
    /// any gradients left by earlier calls.
    pub fn backward(&self, sink: Var<'_, T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let sink_node = &nodes[sink.id];
        if sink_node.value.numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar sink, got shape {:?}",
                sink_node.value.shape()
            )));
        }
        if !sink_node.requires_grad {
            return Ok(());
        }
        let fault = BACKWARD_FAULT.with(|f| f.get());
        let mut adjoint: Vec<Option<Tensor<T>>> = vec![None; sink.id + 1];
        adjoint[sink.id] = Some(Tensor::full(sink_node.value.shape(), T::one()));
        let mut grads = self.grads.borrow_mut();
        if grads.len() < nodes.len() {
            grads.resize(nodes.len(), None);
        }
        for id in (0..=sink.id).rev() {
            let Some(g) = adjoint[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let scale = (fault == Some(node.op.kind())).then(|| T::of(1.01));
            for (input, mut contrib) in vjp(&nodes, node, &g)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                if let Some(s) = scale {
                    contrib = contrib.scale(s);
                }
                match &mut adjoint[input] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            match &mut grads[id] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn vjp<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(usize, Tensor<T>)>> {
    let val = |i: usize| -> &Tensor<T> { &nodes[i].value };
    let out = &node.value;
    Ok(match &node.op {
        Op::Leaf => Vec::new(),
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-T::one()))],
        Op::Mul(a, b) => vec![(*a, g.mul(val(*b))?), (*b, g.mul(val(*a))?)],
        Op::Scale(a, c) => vec![(*a, g.scale(*c))],
        Op::AddRowBias(x, b) => {
            let c = val(*b).numel();
            let mut db = vec![T::zero(); c];
            for row in g.data().chunks(c) {
                for (acc, &v) in db.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            vec![(*x, g.clone()), (*b, Tensor::from_vec(&[c], db)?)]
        }
        Op::Matmul { a, b, transpose_b } => {
            let (av, bv) = (val(*a), val(*b));
            if *transpose_b {
                vec![(*a, g.matmul(bv)?), (*b, g.matmul_tn(av)?)]
            } else {
                vec![(*a, g.matmul_nt(bv)?), (*b, av.matmul_tn(g)?)]
            }
        }
        Op::Transpose(a) => vec![(*a, g.transpose()?)],
        Op::Reshape(a) => vec![(*a, g.reshape(val(*a).shape())?)],
        Op::Sigmoid(a) => vec![(*a, g.zip_map(out, "sigmoid", |g, y| g * y * (T::one() - y))?)],
        Op::Tanh(a) => vec![(*a, g.zip_map(out, "tanh", |g, y| g * (T::one() - y * y))?)],
        Op::Gelu(a) => vec![(*a, g.zip_map(val(*a), "gelu", |g, x| g * gelu_grad(x))?)],
        Op::SoftmaxRows(a) => {
            let c = out.shape()[1];
            let mut dx = g.clone();
            for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                let dot: T = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
                for (d, &y) in drow.iter_mut().zip(yrow) {
                    *d = y * (*d - dot);
                }
            }
            vec![(*a, dx)]
        }
        Op::LayerNormRows(a) => {
            let x = val(*a);
            let c = x.shape()[1];
            let n = T::of(c as f64);
            let mut dx = g.clone();
            for ((drow, yrow), xrow) in dx
                .data_mut()
                .chunks_mut(c)
                .zip(out.data().chunks(c))
                .zip(x.data().chunks(c))
            {
                let (_, inv_std) = row_moments(xrow);
                let g_mean = drow.iter().copied().sum::<T>() / n;
                let gy_mean = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum::<T>() / n;
                for (d, &y) in drow.iter_mut().zip(yrow) {
                    *d = inv_std * (*d - g_mean - y * gy_mean);
                }
            }
            vec![(*a, dx)]
        }
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.data()[0]))],
        Op::Mean(a) => {
            let x = val(*a);
            let v = g.data()[0] / T::of(x.numel() as f64);
            vec![(*a, Tensor::full(x.shape(), v))]
        }
        Op::Conv2d {
            input,
            kernels,
            bias,
            stride,
            pad,
        } => {
            let (x, k) = (val(*input), val(*kernels));
            let geom = ConvGeometry::new(x, k, *stride, *pad)?;
            let p = geom.out_h * geom.out_w;
            let ckk = geom.patch_len();
            let cols_owned;
            let cols: &[T] = if geom.is_pointwise() {
                x.data()
            } else {
                cols_owned = geom.im2col(x.data());
                &cols_owned
            };
            // dK = G · colsᵀ
            let mut dk = vec![T::zero(); geom.out_c * ckk];
            T::gemm(geom.out_c, p, ckk, g.data(), (p, 1), cols, (1, p), &mut dk, false);
            // dcols = Kᵀ · G
            let mut dcols = vec![T::zero(); ckk * p];
            T::gemm(ckk, geom.out_c, p, k.data(), (1, ckk), g.data(), (p, 1), &mut dcols, false);
            let dx = if geom.is_pointwise() {
                dcols
            } else {
                let mut dx = vec![T::zero(); x.numel()];
                geom.col2im(&dcols, &mut dx);
                dx
            };
            let mut grads = vec![
                (*input, Tensor::from_vec(x.shape(), dx)?),
                (*kernels, Tensor::from_vec(k.shape(), dk)?),
            ];
            if let Some(b) = bias {
                let db = g.data().chunks(p).map(|row| row.iter().copied().sum()).collect();
                grads.push((*b, Tensor::from_vec(&[geom.out_c], db)?));
            }
            grads
        }
        Op::AvgPool2d {
            input,
            window,
            stride,
            ceil,
        } => {
            let x = val(*input);
            let geom = PoolGeometry::new(x, *window, *stride, *ceil)?;
            let (h, w) = (geom.h, geom.w);
            let mut dx = vec![T::zero(); x.numel()];
            let gd = g.data();
            for ch in 0..geom.c {
                let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
                for oy in 0..geom.out_h {
                    for ox in 0..geom.out_w {
                        let (ys, xs) = geom.window(oy, ox);
                        let share = gd[(ch * geom.out_h + oy) * geom.out_w + ox]
                            / T::of((ys.len() * xs.len()) as f64);
                        for y in ys.clone() {
                            for xx in xs.clone() {
                                plane[y * w + xx] += share;
                            }
                        }
                    }
                }
            }
            vec![(*input, Tensor::from_vec(x.shape(), dx)?)]
        }
        Op::ConcatRows(ids) => {
            let mut start = 0;
            let mut parts = Vec::with_capacity(ids.len());
            for &i in ids {
                let len = val(i).shape()[0];
                parts.push((i, g.slice_rows(start, len)?));
                start += len;
            }
            parts
        }
        Op::SliceRows { input, start } => {
            let x = val(*input);
            let inner: usize = x.shape()[1..].iter().product();
            let mut dx = Tensor::zeros(x.shape());
            dx.data_mut()[start * inner..start * inner + g.numel()].copy_from_slice(g.data());
            vec![(*input, dx)]
        }
        Op::ConcatCols(ids) => {
            let mut start = 0;
            let mut parts = Vec::with_capacity(ids.len());
            for &i in ids {
                let len = val(i).shape()[1];
                parts.push((i, g.slice_cols(start, len)?));
                start += len;
            }
            parts
        }
        Op::SliceCols { input, start } => {
            let x = val(*input);
            let c = x.shape()[1];
            let len = g.shape()[1];
            let mut dx = Tensor::zeros(x.shape());
            for (drow, grow) in dx.data_mut().chunks_mut(c).zip(g.data().chunks(len)) {
                drow[*start..start + len].copy_from_slice(grow);
            }
            vec![(*input, dx)]
        }
        Op::WrapAngle(a) => vec![(*a, g.clone())],
    })
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.graph.grad(*self)
    }

    fn same_graph(&self, other: &Var<'g, T>) -> Result<()> {
        if std::ptr::eq(self.graph, other.graph) {
            Ok(())
        } else {
            Err(TensorError::Usage("operands recorded on different graphs".into()))
        }
    }

    fn unary(self, out: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        self.graph.record(out, op, &[self.id])
    }

    fn binary(self, other: Var<'g, T>, out: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        self.graph.record(out, op, &[self.id, other.id])
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other)?;
        let out = self.value().add(&other.value())?;
        Ok(self.binary(other, out, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other)?;
        let out = self.value().sub(&other.value())?;
        Ok(self.binary(other, out, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other)?;
        let out = self.value().mul(&other.value())?;
        Ok(self.binary(other, out, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: T) -> Var<'g, T> {
        let out = self.value().scale(c);
        self.unary(out, Op::Scale(self.id, c))
    }

    pub fn add_row_bias(self, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&bias)?;
        let out = self.value().add_row_bias(&bias.value())?;
        Ok(self.binary(bias, out, Op::AddRowBias(self.id, bias.id)))
    }

    pub fn matmul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other)?;
        let out = self.value().matmul(&other.value())?;
        Ok(self.binary(
            other,
            out,
            Op::Matmul {
                a: self.id,
                b: other.id,
                transpose_b: false,
            },
        ))
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other)?;
        let out = self.value().matmul_nt(&other.value())?;
        Ok(self.binary(
            other,
            out,
            Op::Matmul {
                a: self.id,
                b: other.id,
                transpose_b: true,
            },
        ))
    }

    pub fn transpose(self) -> Result<Var<'g, T>> {
        let out = self.value().transpose()?;
        Ok(self.unary(out, Op::Transpose(self.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g, T>> {
        let out = self.value().reshape(shape)?;
        Ok(self.unary(out, Op::Reshape(self.id)))
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        let out = self.value().sigmoid();
        self.unary(out, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'g, T> {
        let out = self.value().tanh();
        self.unary(out, Op::Tanh(self.id))
    }

    pub fn gelu(self) -> Var<'g, T> {
        let out = self.value().gelu();
        self.unary(out, Op::Gelu(self.id))
    }

    pub fn softmax_rows(self) -> Result<Var<'g, T>> {
        let out = self.value().softmax_rows()?;
        Ok(self.unary(out, Op::SoftmaxRows(self.id)))
    }

    pub fn layer_norm_rows(self) -> Result<Var<'g, T>> {
        let out = self.value().layer_norm_rows()?;
        Ok(self.unary(out, Op::LayerNormRows(self.id)))
    }

    pub fn sum(self) -> Var<'g, T> {
        let out = Tensor::scalar(self.value().sum());
        self.unary(out, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'g, T> {
        let out = Tensor::scalar(self.value().mean());
        self.unary(out, Op::Mean(self.id))
    }

    pub fn conv2d(
        self,
        kernels: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'g, T>> {
        self.same_graph(&kernels)?;
        if let Some(b) = &bias {
            self.same_graph(b)?;
        }
        let bias_value = bias.map(|b| b.value());
        let out = self
            .value()
            .conv2d(&kernels.value(), bias_value.as_deref(), stride, pad)?;
        let mut inputs = vec![self.id, kernels.id];
        inputs.extend(bias.map(|b| b.id));
        let op = Op::Conv2d {
            input: self.id,
            kernels: kernels.id,
            bias: bias.map(|b| b.id),
            stride,
            pad,
        };
        Ok(self.graph.record(out, op, &inputs))
    }

    pub fn avgpool2d(self, window: usize, stride: usize, ceil: bool) -> Result<Var<'g, T>> {
        let out = self.value().avgpool2d(window, stride, ceil)?;
        Ok(self.unary(
            out,
            Op::AvgPool2d {
                input: self.id,
                window,
                stride,
                ceil,
            },
        ))
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'g, T>> {
        let out = self.value().slice_rows(start, len)?;
        Ok(self.unary(out, Op::SliceRows { input: self.id, start }))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'g, T>> {
        let out = self.value().slice_cols(start, len)?;
        Ok(self.unary(out, Op::SliceCols { input: self.id, start }))
    }

    /// Elementwise wrap to (−π, π]; the gradient passes through unchanged.
    pub fn wrap_angle(self) -> Var<'g, T> {
        let out = self.value().map(wrap_angle);
        self.unary(out, Op::WrapAngle(self.id))
    }
}
