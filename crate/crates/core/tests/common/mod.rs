//! Brute-force oracles shared by the oracle, evaluation and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

use ssn::autograd::Graph;
use ssn::geometry::{OrientedBox, Pose2};
use ssn::nn::{LstmWeights, MhsaWeights};
use ssn::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Neumaier-compensated sum; carries roughly twice the working precision.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}
pub fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, bias: &[f64], stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..c {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (oy * stride + dy) as isize - pad as isize;
                            let ix = (ox * stride + dx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += x.data()[(ic * h + iy as usize) * w + ix as usize]
                                * k.data()[((oc * c + ic) * kh + dy) * kw + dx];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (vec![o, oh, ow], out)
}

pub struct ScalarLstm {
    pub w: [Vec<Vec<f64>>; 4],
    pub u: [Vec<Vec<f64>>; 4],
    pub b: [Vec<f64>; 4],
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ScalarLstm {
    pub fn random(r: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        let mut mat = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
            (0..rows).map(|_| (0..cols).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()
        };
        let w = [0; 4].map(|_| mat(hidden, input));
        let u = [0; 4].map(|_| mat(hidden, hidden));
        let b = [0; 4].map(|_| mat(1, hidden).remove(0));
        ScalarLstm { w, u, b }
    }

    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let pre = |g: usize, j: usize| {
            let wx: f64 = (0..x.len()).map(|k| self.w[g][j][k] * x[k]).sum();
            let uh: f64 = (0..n).map(|k| self.u[g][j][k] * h[k]).sum();
            wx + uh + self.b[g][j]
        };
        let mut h2 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for j in 0..n {
            let f = sigmoid(pre(0, j));
            let i = sigmoid(pre(1, j));
            let cand = pre(2, j).tanh();
            let o = sigmoid(pre(3, j));
            c2[j] = f * c[j] + i * cand;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    pub fn bind<'g>(&self, g: &'g Graph<f64>) -> LstmWeights<'g, f64> {
        let flat = |m: &Vec<Vec<f64>>| {
            Tensor::from_vec(&[m.len(), m[0].len()], m.iter().flatten().copied().collect()).unwrap()
        };
        LstmWeights {
            w: [0, 1, 2, 3].map(|i| g.constant(flat(&self.w[i]))),
            u: [0, 1, 2, 3].map(|i| g.constant(flat(&self.u[i]))),
            b: [0, 1, 2, 3].map(|i| g.constant(Tensor::from_vec(&[self.b[i].len()], self.b[i].clone()).unwrap())),
        }
    }
}

pub fn row<'g>(g: &'g Graph<f64>, v: &[f64]) -> ssn::autograd::Var<'g, f64> {
    g.constant(Tensor::from_vec(&[1, v.len()], v.to_vec()).unwrap())
}
/// Per-head loops with compensated sums.
pub fn mhsa_oracle(q: &Tensor<f64>, kv: &Tensor<f64>, w: [&Tensor<f64>; 4], heads: usize) -> Vec<f64> {
    let (n, c) = (q.shape()[0], q.shape()[1]);
    let m = kv.shape()[0];
    let d = c / heads;
    let proj = |x: &Tensor<f64>, rows: usize, wm: &Tensor<f64>| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|i| (0..c).map(|o| compensated_sum((0..c).map(|k| x.data()[i * c + k] * wm.data()[o * c + k]))).collect())
            .collect()
    };
    let (qp, kp, vp) = (proj(q, n, w[0]), proj(kv, m, w[1]), proj(kv, m, w[2]));
    let mut concat = vec![vec![0.0; c]; n];
    for h in 0..heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..m)
                .map(|j| compensated_sum((0..d).map(|k| qp[i][h * d + k] * kp[j][h * d + k])) / (d as f64).sqrt())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z = compensated_sum(scores.iter().map(|s| (s - max).exp()));
            for k in 0..d {
                concat[i][h * d + k] = compensated_sum((0..m).map(|j| (scores[j] - max).exp() / z * vp[j][h * d + k]));
            }
        }
    }
    let mut out = Vec::with_capacity(n * c);
    for row in &concat {
        for o in 0..c {
            out.push(compensated_sum((0..c).map(|k| row[k] * w[3].data()[o * c + k])));
        }
    }
    out
}

pub fn mhsa_weights<'g>(g: &'g Graph<f64>, w: &[Tensor<f64>; 4], heads: usize) -> MhsaWeights<'g, f64> {
    MhsaWeights {
        w_q: g.constant(w[0].clone()),
        w_k: g.constant(w[1].clone()),
        w_v: g.constant(w[2].clone()),
        w_o: g.constant(w[3].clone()),
        heads,
    }
}


/// Row-major triple loop.
pub fn matmul_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = compensated_sum((0..k).map(|t| a.data()[i * k + t] * b.data()[t * m + j]));
        }
    }
    out
}

/// Max-shifted row softmax with compensated normalizers.
pub fn softmax_oracle(m: &Tensor<f64>) -> Vec<f64> {
    let cols = m.shape()[1];
    m.data()
        .chunks(cols)
        .flat_map(|xs| {
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z = compensated_sum(xs.iter().map(|x| (x - max).exp()));
            xs.iter().map(move |x| (x - max).exp() / z).collect::<Vec<_>>()
        })
        .collect()
}

/// Closed containment, written independently of the library.
pub fn inside(b: &OrientedBox, (px, py): (f64, f64)) -> bool {
    let (dx, dy) = (px - b.pose.x, py - b.pose.y);
    let (s, c) = (b.pose.yaw.sin(), b.pose.yaw.cos());
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    u.abs() <= b.length / 2.0 && v.abs() <= b.width / 2.0
}

/// 200×200 grid over `a` (edges included), any point inside `b`.
pub fn sampled_hit(a: &OrientedBox, b: &OrientedBox) -> bool {
    let (s, c) = (a.pose.yaw.sin(), a.pose.yaw.cos());
    (0..200).any(|i| {
        let u = (i as f64 / 199.0 - 0.5) * a.length;
        (0..200).any(|j| {
            let v = (j as f64 / 199.0 - 0.5) * a.width;
            inside(b, (a.pose.x + u * c - v * s, a.pose.y + u * s + v * c))
        })
    })
}

pub fn sampling_oracle(a: &OrientedBox, b: &OrientedBox) -> bool {
    sampled_hit(a, b) || sampled_hit(b, a)
}

/// Signed SAT gap: positive when separated, negative when penetrating.
pub fn sat_gap(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let axes = [a.pose.yaw, a.pose.yaw + FRAC_PI_2, b.pose.yaw, b.pose.yaw + FRAC_PI_2];
    axes.iter()
        .map(|&t| {
            let (s, c) = t.sin_cos();
            let span = |x: &OrientedBox| {
                let centre = x.pose.x * c + x.pose.y * s;
                let d = t - x.pose.yaw;
                let r = x.length / 2.0 * d.cos().abs() + x.width / 2.0 * d.sin().abs();
                (centre - r, centre + r)
            };
            let ((alo, ahi), (blo, bhi)) = (span(a), span(b));
            (blo - ahi).max(alo - bhi)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn random_box(r: &mut ChaCha8Rng) -> OrientedBox {
    OrientedBox::new(
        Pose2::new(r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0), r.gen_range(-PI..PI)),
        r.gen_range(0.5..5.0),
        r.gen_range(0.5..3.0),
    )
}

/// Maclaurin series of erf, summed to convergence; used below |x| = 2,
/// where its largest term stays small.
fn erf_series(x: f64) -> f64 {
    let mut terms = Vec::new();
    let mut power = x;
    for n in 0..200 {
        let term = power / (2 * n + 1) as f64;
        terms.push(term);
        if term.abs() < 1e-30 {
            break;
        }
        power *= -x * x / (n + 1) as f64;
    }
    2.0 / PI.sqrt() * compensated_sum(terms)
}

/// erfc(x) for x ≥ 2 by the Laplace continued fraction
/// exp(−x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
fn erfc_fraction(x: f64) -> f64 {
    let mut f = x;
    for k in (1..5000).rev() {
        f = x + (k as f64 / 2.0) / f;
    }
    (-x * x).exp() / PI.sqrt() / f
}

pub fn erf(x: f64) -> f64 {
    if x.abs() < 2.0 {
        erf_series(x)
    } else {
        x.signum() * (1.0 - erfc_fraction(x.abs()))
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 2.0 {
        erfc_fraction(x)
    } else if x <= -2.0 {
        2.0 - erfc_fraction(-x)
    } else {
        1.0 - erf_series(x)
    }
}

pub fn gelu(x: f64) -> f64 {
    x * 0.5 * erfc(-x / 2f64.sqrt())
}

/// Channel-major map `[C, H, W]` to token rows `[H·W][C]`.
pub fn token_rows(shape: &[usize], data: &[f64]) -> Vec<Vec<f64>> {
    let (c, hw) = (shape[0], shape[1] * shape[2]);
    (0..hw).map(|p| (0..c).map(|ch| data[ch * hw + p]).collect()).collect()
}

pub fn from_token_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let c = rows[0].len();
    (0..c).flat_map(|ch| rows.iter().map(move |r| r[ch])).collect()
}

/// Biased variance, eps 1e-5, no affine part.
pub fn layer_norm(row: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = compensated_sum(row.iter().copied()) / n;
    let var = compensated_sum(row.iter().map(|x| (x - mean) * (x - mean))) / n;
    row.iter().map(|x| (x - mean) / (var + 1e-5).sqrt()).collect()
}

/// `W x + b` with `W` stored `[out, in]`.
pub fn affine(w: &Tensor<f64>, b: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let inp = w.shape()[1];
    (0..w.shape()[0])
        .map(|o| compensated_sum((0..inp).map(|k| w.data()[o * inp + k] * x[k])) + b.data()[o])
        .collect()
}
