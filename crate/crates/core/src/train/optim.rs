use crate::error::TensorError;
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err("expected `sgd` or `adam`".into()),
        }
    }
}

/// Optimizer state; moments are created lazily on the first step.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads` are in store order.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<(), TensorError> {
        if grads.len() != params.len() {
            return Err(TensorError::Usage(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if params.get(id).shape() != g.shape() {
                return Err(TensorError::shape("optimizer_step", params.get(id).shape(), g.shape()));
            }
        }
        self.step += 1;
        let lr = T::of(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for (id, g) in params.ids().collect::<Vec<_>>().into_iter().zip(grads) {
                    for (p, &gi) in params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![T::zero(); g.numel()]).collect();
                    self.v = self.m.clone();
                }
                let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
                let t = self.step as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let eps = T::of(ADAM_EPS);
                let ids: Vec<_> = params.ids().collect();
                for (k, (id, g)) in ids.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    let p = params.get_mut(id).data_mut();
                    for i in 0..p.len() {
                        let gi = g.data()[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * gi;
                        v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| {
            let x = x.to_f64_lossy();
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
