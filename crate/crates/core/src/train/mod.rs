//! Supervised training of the network on (raster → future ego poses)
//! samples: loss, optimizers, the training loop and checkpoints.

mod checkpoint;
mod optim;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::config::{parse_value, ConfigSection};
use crate::data::raster::rasterize_with_road;
use crate::data::{ego_targets, Dataset, RasterConfig, RoadMap};
use crate::error::{ConfigError, Error, TensorError};
use crate::geometry::Pose2;
use crate::net::{build_network, NetworkConfig, TrajectoryPrediction};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{wrap_angle, Tensor};

pub use checkpoint::Checkpoint;
pub use optim::{clip_grad_norm, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Seeds parameter initialization and the per-epoch sample order.
    pub seed: u64,
    pub yaw_loss_weight: f64,
    /// Frame stride between samples taken from one scene.
    pub samples_per_scene: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            yaw_loss_weight: 1.0,
            samples_per_scene: 10,
            grad_clip: 10.0,
        }
    }
}

impl ConfigSection for TrainConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "epochs" => self.epochs = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "optimizer" => self.optimizer = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "yaw_loss_weight" => self.yaw_loss_weight = parse_value(key, value)?,
            "samples_per_scene" => self.samples_per_scene = parse_value(key, value)?,
            "grad_clip" => self.grad_clip = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn render(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("optimizer", self.optimizer.as_str().to_string()),
            ("seed", self.seed.to_string()),
            ("yaw_loss_weight", self.yaw_loss_weight.to_string()),
            ("samples_per_scene", self.samples_per_scene.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
        ]
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.epochs == 0 {
            return Err(ConfigError::invalid("epochs", "must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::invalid("learning_rate", "must be a finite non-negative number"));
        }
        if !(self.yaw_loss_weight >= 0.0 && self.yaw_loss_weight.is_finite()) {
            return Err(ConfigError::invalid("yaw_loss_weight", "must be a finite non-negative number"));
        }
        if self.samples_per_scene == 0 {
            return Err(ConfigError::invalid("samples_per_scene", "stride must be positive"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(ConfigError::invalid("grad_clip", "must be non-negative"));
        }
        Ok(())
    }
}

fn targets_tensor<T: Scalar>(target: &[Pose2]) -> Tensor<T> {
    let data = target.iter().flat_map(|p| [p.x, p.y, p.yaw]).map(T::of).collect();
    Tensor::from_vec(&[target.len(), 3], data).expect("non-empty target")
}

/// `mean_k(Δx² + Δy²) + w · mean_k(wrap(Δyaw)²)` for a K×3 prediction.
pub fn trajectory_loss<'g, T: Scalar>(pred: Var<'g, T>, target: &[Pose2], yaw_weight: f64) -> Result<Var<'g, T>, TensorError> {
    let k = target.len();
    if k == 0 || pred.shape() != [k, 3] {
        return Err(TensorError::shape("trajectory_loss", &pred.shape(), &[k, 3]));
    }
    let diff = pred.sub(pred.graph().constant(targets_tensor(target)))?;
    let xy = diff.slice_cols(0, 2)?;
    let yaw = diff.slice_cols(2, 1)?.wrap_angle();
    let position = xy.mul(xy)?.sum().scale(T::of(1.0 / k as f64));
    let heading = yaw.mul(yaw)?.mean().scale(T::of(yaw_weight));
    position.add(heading)
}

/// Untracked loss of a decoded prediction.
pub fn trajectory_loss_value(pred: &TrajectoryPrediction, target: &[Pose2], yaw_weight: f64) -> Result<f64, TensorError> {
    if pred.len() != target.len() || target.is_empty() {
        return Err(TensorError::shape("trajectory_loss", &[pred.len(), 3], &[target.len(), 3]));
    }
    let k = target.len() as f64;
    let (mut pos, mut yaw) = (0.0, 0.0);
    for (p, t) in pred.waypoints.iter().zip(target) {
        pos += (p.x - t.x).powi(2) + (p.y - t.y).powi(2);
        yaw += wrap_angle(p.yaw - t.yaw).powi(2);
    }
    Ok(pos / k + yaw_weight * yaw / k)
}

/// Training frames: every `stride`-th frame of each scene that still has
/// `k` future frames.
pub fn sample_frames(ds: &Dataset, stride: usize, k: usize) -> Vec<usize> {
    ds.scenes
        .iter()
        .flat_map(|s| s.frame_range().step_by(stride.max(1)).filter(move |&f| f + k < s.frame_end_index))
        .collect()
}

/// One training example.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub frame_index: usize,
    pub raster: Tensor<T>,
    pub target: Vec<Pose2>,
}

pub fn build_samples<T: Scalar>(ds: &Dataset, stride: usize, k: usize, rcfg: &RasterConfig) -> Vec<Sample<T>> {
    let mut out = Vec::new();
    for scene in &ds.scenes {
        let road = RoadMap::for_scene(ds, scene);
        for f in scene.frame_range().step_by(stride.max(1)) {
            if let Some(target) = ego_targets(ds, f, k) {
                out.push(Sample {
                    frame_index: f,
                    raster: rasterize_with_road(ds, f, scene.frame_start_index, &road, rcfg),
                    target,
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
}

/// Per-step loss trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    /// Mean loss of each epoch, in epoch order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.records {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.loss;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,step,loss")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.epoch, r.step, r.loss)?;
        }
        Ok(())
    }
}

/// One forward/backward pass and optimizer update; returns the loss before
/// the update.
pub fn train_step<T: Scalar>(
    network: &crate::net::Network,
    params: &mut ParamStore<T>,
    opt: &mut Optimizer<T>,
    sample: &Sample<T>,
    cfg: &TrainConfig,
) -> Result<f64, Error> {
    let graph = Graph::new();
    let (loss, mut grads) = {
        let b = params.bind(&graph);
        let pred = network.forward(&b, graph.constant(sample.raster.clone()))?;
        let loss = trajectory_loss(pred, &sample.target, cfg.yaw_loss_weight)?;
        graph.backward(loss)?;
        (loss.value().data()[0].to_f64_lossy(), b.grads())
    };
    if !loss.is_finite() {
        return Err(Error::Usage(format!("loss diverged to {loss} at step {}", opt.steps_taken() + 1)));
    }
    if cfg.grad_clip > 0.0 {
        clip_grad_norm(&mut grads, cfg.grad_clip);
    }
    opt.step(params, &grads)?;
    Ok(loss)
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub checkpoint: Checkpoint,
    pub trace: LossTrace,
}

/// Trains a freshly initialized network (seeded by `cfg.seed`) on every
/// strided frame of `ds`, visiting samples in a seeded shuffled order each
/// epoch.
pub fn fit(ds: &Dataset, net_cfg: &NetworkConfig, cfg: &TrainConfig, rcfg: &RasterConfig) -> Result<FitOutput, Error> {
    cfg.validate()?;
    let (network, mut params) = build_network::<f64>(net_cfg, cfg.seed)?;
    if rcfg.size != net_cfg.raster_size {
        return Err(Error::Usage(format!(
            "raster size {} does not match network input size {}",
            rcfg.size, net_cfg.raster_size
        )));
    }
    let samples = build_samples::<f64>(ds, cfg.samples_per_scene, net_cfg.waypoints, rcfg);
    if samples.is_empty() {
        return Err(Error::Usage(
            "no training samples: every scene is shorter than the prediction horizon".into(),
        ));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4531);
    let mut trace = LossTrace::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let loss = train_step(&network, &mut params, &mut opt, &samples[i], cfg)?;
            trace.records.push(LossRecord {
                epoch,
                step: opt.steps_taken(),
                loss,
            });
        }
    }
    Ok(FitOutput {
        checkpoint: Checkpoint {
            config: net_cfg.clone(),
            step: opt.steps_taken(),
            params,
        },
        trace,
    })
}
