//! Finite-difference gradient checks.
//!
//! A [`GradCase`] is a scalar-valued function of the tensors in a
//! [`ParamStore`]. The harness compares the tape's gradients against
//! central differences, element by element, using the error metric
//! `|g_analytic − g_fd| / max(1, |g_fd|)`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autograd::{Graph, OpKind, Var};
use crate::error::TensorError;
use crate::geometry::Pose2;
use crate::net::{build_network, CBlock, Fmhsa, Head, Iru, NetworkConfig, Rru, SsnBlock, Stem, Ucd};
use crate::nn::{linear_forward, lstm_last_output, lstm_step, mhsa, Binding, Conv2d, Lstm, Mhsa, ParamBuilder, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::train::trajectory_loss;

pub const FD_EPS: f64 = 1e-5;
pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;
pub const END_TO_END_FRACTION: f64 = 0.05;
pub const SEEDS: u64 = 10;

type Forward = Box<dyn for<'g> Fn(&'g Graph<f64>, &Binding<'g, f64>) -> Result<Var<'g, f64>, TensorError>>;

/// A differentiable scalar function of every tensor in `params`.
pub struct GradCase {
    pub name: String,
    pub params: ParamStore<f64>,
    forward: Forward,
}

impl GradCase {
    pub fn new(
        name: impl Into<String>,
        params: ParamStore<f64>,
        forward: impl for<'g> Fn(&'g Graph<f64>, &Binding<'g, f64>) -> Result<Var<'g, f64>, TensorError> + 'static,
    ) -> Self {
        GradCase {
            name: name.into(),
            params,
            forward: Box::new(forward),
        }
    }

    fn value(&self) -> Result<f64, TensorError> {
        let g = Graph::new();
        let b = self.params.bind(&g);
        Ok((self.forward)(&g, &b)?.value().data()[0])
    }

    pub fn analytic(&self) -> Result<Vec<Tensor<f64>>, TensorError> {
        let g = Graph::new();
        let b = self.params.bind(&g);
        let out = (self.forward)(&g, &b)?;
        g.backward(out)?;
        Ok(b.grads())
    }

    /// Worst error over the chosen `(parameter, element)` coordinates, or
    /// over every coordinate when `coords` is `None`.
    pub fn max_error(&mut self, coords: Option<&[(ParamId, usize)]>) -> Result<f64, TensorError> {
        let analytic = self.analytic()?;
        let all: Vec<(ParamId, usize)>;
        let coords = match coords {
            Some(c) => c,
            None => {
                all = self
                    .params
                    .ids()
                    .flat_map(|id| (0..self.params.get(id).numel()).map(move |i| (id, i)))
                    .collect();
                &all
            }
        };
        let mut worst = 0.0f64;
        for &(id, i) in coords {
            let x = self.params.get(id).data()[i];
            self.params.get_mut(id).data_mut()[i] = x + FD_EPS;
            let up = self.value()?;
            self.params.get_mut(id).data_mut()[i] = x - FD_EPS;
            let down = self.value()?;
            self.params.get_mut(id).data_mut()[i] = x;
            let fd = (up - down) / (2.0 * FD_EPS);
            let err = (analytic[id.index()].data()[i] - fd).abs() / fd.abs().max(1.0);
            if !err.is_finite() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// Store holding N(0,1) tensors of the given shapes, named `x0, x1, …`.
fn inputs(rng: &mut ChaCha8Rng, shapes: &[&[usize]]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (i, sh) in shapes.iter().enumerate() {
        s.register(format!("x{i}"), normal(rng, sh)).expect("distinct names");
    }
    s
}

/// Reduces any output to a scalar through a fixed random weighting, so
/// every output element carries a distinct gradient.
fn project<'g>(g: &'g Graph<f64>, out: Var<'g, f64>, seed: u64) -> Result<Var<'g, f64>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    let w = g.constant(normal(&mut rng, &out.shape()));
    Ok(out.mul(w)?.sum())
}

/// Redraws every parameter from N(0,1) scaled by `scale`.
fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        let t = store.get_mut(id);
        for x in t.data_mut() {
            *x = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Builds a layer with freshly drawn N(0,1) parameters plus one N(0,1)
/// input registered last as `input`.
fn layer_case<L: 'static>(
    name: &str,
    seed: u64,
    input_shape: &[usize],
    weight_scale: f64,
    build: impl FnOnce(&mut ParamBuilder<'_, f64>) -> L,
    forward: impl for<'g> Fn(&L, &Binding<'g, f64>, Var<'g, f64>) -> Result<Var<'g, f64>, TensorError> + 'static,
) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layer = {
        let mut init = rng.clone();
        let mut pb = ParamBuilder::new(&mut store, &mut init);
        build(&mut pb)
    };
    randomize(&mut store, &mut rng, weight_scale);
    let x = store.register("input", normal(&mut rng, input_shape)).expect("fresh name");
    GradCase::new(name, store, move |g, b| {
        let out = forward(&layer, b, b.var(x))?;
        project(g, out, seed)
    })
}

type Builder = fn(u64) -> GradCase;

fn unary(name: &'static str, seed: u64, shape: &[usize], f: fn(Var<'_, f64>) -> Result<Var<'_, f64>, TensorError>) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GradCase::new(name, inputs(&mut rng, &[shape]), move |g, b| {
        let out = f(b.var(ParamId::from_index(0)))?;
        project(g, out, seed)
    })
}

fn binary(
    name: &'static str,
    seed: u64,
    shapes: [&[usize]; 2],
    f: for<'g> fn(Var<'g, f64>, Var<'g, f64>) -> Result<Var<'g, f64>, TensorError>,
) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GradCase::new(name, inputs(&mut rng, &shapes), move |g, b| {
        let [x, y] = [0, 1].map(|i| b.var(ParamId::from_index(i)));
        let out = f(x, y)?;
        project(g, out, seed)
    })
}

/// One case per differentiable primitive, in [`OpKind::DIFFERENTIABLE`] order.
pub fn primitive_cases() -> Vec<(OpKind, Builder)> {
    vec![
        (OpKind::Add, |s| binary("add", s, [&[3, 4], &[3, 4]], |a, b| a.add(b))),
        (OpKind::Sub, |s| binary("sub", s, [&[3, 4], &[3, 4]], |a, b| a.sub(b))),
        (OpKind::Mul, |s| binary("mul", s, [&[3, 4], &[3, 4]], |a, b| a.mul(b))),
        (OpKind::Scale, |s| unary("scale", s, &[2, 5], |a| Ok(a.scale(-1.7)))),
        (OpKind::AddRowBias, |s| binary("add_row_bias", s, [&[4, 3], &[3]], |a, b| a.add_row_bias(b))),
        (OpKind::Matmul, |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            GradCase::new("matmul", inputs(&mut rng, &[&[3, 4], &[4, 5], &[2, 3]]), move |g, b| {
                let [x, y, z] = [0, 1, 2].map(|i| b.var(ParamId::from_index(i)));
                // both the plain and the transposed-right products
                let out = x.matmul(y)?.transpose()?.matmul_nt(z)?;
                project(g, out, s)
            })
        }),
        (OpKind::Transpose, |s| unary("transpose", s, &[3, 5], |a| a.transpose())),
        (OpKind::Reshape, |s| unary("reshape", s, &[2, 6], |a| a.reshape(&[3, 2, 2]))),
        (OpKind::Sigmoid, |s| unary("sigmoid", s, &[3, 4], |a| Ok(a.sigmoid()))),
        (OpKind::Tanh, |s| unary("tanh", s, &[3, 4], |a| Ok(a.tanh()))),
        (OpKind::Gelu, |s| unary("gelu", s, &[3, 4], |a| Ok(a.gelu()))),
        (OpKind::SoftmaxRows, |s| unary("softmax_rows", s, &[3, 5], |a| a.softmax_rows())),
        (OpKind::LayerNormRows, |s| unary("layer_norm_rows", s, &[3, 6], |a| a.layer_norm_rows())),
        (OpKind::Sum, |s| unary("sum", s, &[3, 4], |a| Ok(a.mul(a)?.sum()))),
        (OpKind::Mean, |s| unary("mean", s, &[3, 4], |a| Ok(a.mul(a)?.mean()))),
        (OpKind::Conv2d, |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            GradCase::new("conv2d", inputs(&mut rng, &[&[2, 6, 6], &[3, 2, 3, 3], &[3]]), move |g, b| {
                let [x, k, bias] = [0, 1, 2].map(|i| b.var(ParamId::from_index(i)));
                let out = x.conv2d(k, Some(bias), 2, 1)?;
                project(g, out, s)
            })
        }),
        (OpKind::AvgPool2d, |s| {
            unary("avgpool2d", s, &[2, 5, 5], |a| {
                // ceil mode exercises the partial edge windows
                a.avgpool2d(2, 2, true)
            })
        }),
        (OpKind::ConcatRows, |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            GradCase::new("concat_rows", inputs(&mut rng, &[&[1, 3, 3], &[2, 3, 3]]), move |g, b| {
                let [x, y] = [0, 1].map(|i| b.var(ParamId::from_index(i)));
                let out = g.concat_rows(&[x, y, x])?;
                project(g, out, s)
            })
        }),
        (OpKind::SliceRows, |s| unary("slice_rows", s, &[4, 3], |a| a.slice_rows(1, 2))),
        (OpKind::ConcatCols, |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            GradCase::new("concat_cols", inputs(&mut rng, &[&[3, 2], &[3, 4]]), move |g, b| {
                let [x, y] = [0, 1].map(|i| b.var(ParamId::from_index(i)));
                let out = g.concat_cols(&[y, x])?;
                project(g, out, s)
            })
        }),
        (OpKind::SliceCols, |s| unary("slice_cols", s, &[3, 5], |a| a.slice_cols(1, 3))),
        (OpKind::WrapAngle, |s| unary("wrap_angle", s, &[3, 4], |a| Ok(a.scale(2.0).wrap_angle()))),
    ]
}

/// One case per layer and network unit.
pub fn layer_cases() -> Vec<(&'static str, Builder)> {
    vec![
        ("linear", |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            GradCase::new("linear", inputs(&mut rng, &[&[4, 3], &[5, 3], &[5]]), move |g, b| {
                let [x, w, bias] = [0, 1, 2].map(|i| b.var(ParamId::from_index(i)));
                project(g, linear_forward(x, w, bias)?, s)
            })
        }),
        ("conv_layer", |s| {
            layer_case("conv_layer", s, &[3, 5, 5], 1.0, |pb| Conv2d::new(pb, 3, 2, 3, 1, 1), |l, b, x| l.forward(b, x))
        }),
        ("lstm_step", |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut store = ParamStore::new();
            let lstm = Lstm::new(&mut ParamBuilder::new(&mut store, &mut rng.clone()), 3, 4);
            randomize(&mut store, &mut rng, 1.0);
            let x = store.register("x", normal(&mut rng, &[1, 3])).unwrap();
            let h = store.register("h", normal(&mut rng, &[1, 4])).unwrap();
            let c = store.register("c", normal(&mut rng, &[1, 4])).unwrap();
            GradCase::new("lstm_step", store, move |g, b| {
                let (h1, c1) = lstm_step(b.var(x), b.var(h), b.var(c), &lstm.bind(b))?;
                project(g, g.concat_cols(&[h1, c1])?, s)
            })
        }),
        ("lstm_last_output", |s| {
            layer_case("lstm_last_output", s, &[5, 3], 0.7, |pb| Lstm::new(pb, 3, 4), |l, b, x| {
                lstm_last_output(x, &l.bind(b))
            })
        }),
        ("mhsa", |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut store = ParamStore::new();
            let attn = Mhsa::new(&mut ParamBuilder::new(&mut store, &mut rng.clone()), 4, 2);
            randomize(&mut store, &mut rng, 0.7);
            let q = store.register("queries", normal(&mut rng, &[5, 4])).unwrap();
            let kv = store.register("keys_values", normal(&mut rng, &[3, 4])).unwrap();
            GradCase::new("mhsa", store, move |g, b| project(g, mhsa(b.var(q), b.var(kv), &attn.bind(b))?, s))
        }),
        ("c_block", |s| {
            layer_case("c_block", s, &[1, 4, 5], 0.6, |pb| CBlock::new(pb, 4, 5, 3), |l, b, x| l.forward(b, x))
        }),
        ("stem", |s| {
            layer_case("stem", s, &[3, 8, 8], 0.3, |pb| Stem::new(pb, 3, [2, 2, 2]), |l, b, x| l.forward(b, x))
        }),
        ("ucd", |s| layer_case("ucd", s, &[2, 5, 4], 1.0, |pb| Ucd::new(pb, 2, 3), |l, b, x| l.forward(b, x))),
        ("rru", |s| layer_case("rru", s, &[2, 4, 4], 0.4, |pb| Rru::new(pb, 2), |l, b, x| l.forward(b, x))),
        ("fmhsa", |s| {
            layer_case("fmhsa", s, &[4, 4, 4], 0.5, |pb| Fmhsa::new(pb, 4, 2, 2), |l, b, x| l.forward(b, x))
        }),
        ("fmhsa_stride1", |s| {
            layer_case("fmhsa_stride1", s, &[4, 3, 3], 0.5, |pb| Fmhsa::new(pb, 4, 2, 1), |l, b, x| l.forward(b, x))
        }),
        ("iru", |s| layer_case("iru", s, &[2, 4, 4], 0.3, |pb| Iru::new(pb, 2, 4), |l, b, x| l.forward(b, x))),
        ("ssn_block", |s| {
            layer_case("ssn_block", s, &[4, 4, 4], 0.3, |pb| SsnBlock::new(pb, 4, 2, 2, 4), |l, b, x| l.forward(b, x))
        }),
        ("head", |s| layer_case("head", s, &[4, 2, 2], 1.0, |pb| Head::new(pb, 4, 2), |l, b, x| l.forward(b, x))),
        ("trajectory_loss", |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let store = inputs(&mut rng, &[&[4, 3]]);
            let target: Vec<Pose2> = (0..4)
                .map(|_| Pose2::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            GradCase::new("trajectory_loss", store, move |_, b| trajectory_loss(b.var(ParamId::from_index(0)), &target, 0.8))
        }),
    ]
}

/// The end-to-end case: full network on the smallest config, a random
/// raster and random targets, through the training loss.
pub fn end_to_end_case(seed: u64) -> GradCase {
    let cfg = NetworkConfig::gradcheck_tiny();
    let (net, mut store) = build_network::<f64>(&cfg, seed).expect("gradcheck config is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00E2_E000);
    // give the zero-initialized biases nonzero values
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with("bias") || store.name(id).contains(".b_") {
            for x in store.get_mut(id).data_mut() {
                *x += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let s = cfg.raster_size;
    let raster = Tensor::from_fn(&[3, s, s], |_| rng.gen_range(0.0..1.0));
    let target: Vec<Pose2> = (0..cfg.waypoints)
        .map(|_| Pose2::new(rng.sample(StandardNormal), rng.sample(StandardNormal), 0.3 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    GradCase::new("end_to_end", store, move |g, b| {
        let out = net.forward(b, g.constant(raster.clone()))?;
        trajectory_loss(out, &target, 1.0)
    })
}

/// A random `fraction` of every coordinate of `store`, at least one.
pub fn sample_coords(store: &ParamStore<f64>, fraction: f64, seed: u64) -> Vec<(ParamId, usize)> {
    let all: Vec<(ParamId, usize)> = store
        .ids()
        .flat_map(|id| (0..store.get(id).numel()).map(move |i| (id, i)))
        .collect();
    let n = ((all.len() as f64 * fraction).ceil() as usize).clamp(1, all.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, all.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// Runs every primitive and layer case over `SEEDS` seeds starting at
/// `base_seed`, then the end-to-end case on a 5% coordinate sample.
pub fn run_suite(base_seed: u64) -> Result<Vec<CheckRow>, TensorError> {
    let mut rows = Vec::new();
    let named: Vec<(&str, Builder)> = primitive_cases()
        .into_iter()
        .map(|(k, b)| (k.name(), b))
        .chain(layer_cases())
        .collect();
    for (name, build) in named {
        let mut worst = 0.0f64;
        for s in 0..SEEDS {
            worst = worst.max(build(base_seed.wrapping_add(s)).max_error(None)?);
        }
        rows.push(CheckRow {
            name: name.to_string(),
            worst,
            tolerance: PRIMITIVE_TOL,
        });
    }
    let mut e2e = end_to_end_case(base_seed);
    let coords = sample_coords(&e2e.params, END_TO_END_FRACTION, base_seed);
    rows.push(CheckRow {
        name: "end_to_end".into(),
        worst: e2e.max_error(Some(&coords))?,
        tolerance: END_TO_END_TOL,
    });
    Ok(rows)
}
