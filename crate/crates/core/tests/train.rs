//! Loss, optimizers, the fit loop and checkpoints on the small gradient
//! check network (16×16 rasters).

use std::f64::consts::PI;

use ssn::autograd::Graph;
use ssn::data::{generate_synthetic_scenes, Dataset, GeneratorConfig, RasterConfig};
use ssn::error::{Error, FormatError};
use ssn::geometry::Pose2;
use ssn::net::{build_network, NetworkConfig, TrajectoryPrediction};
use ssn::nn::ParamStore;
use ssn::tensor::Tensor;
use ssn::train::{clip_grad_norm, Optimizer, OptimizerKind};
use ssn::train::{
    build_samples, fit, sample_frames, train_step, trajectory_loss, trajectory_loss_value, Checkpoint, TrainConfig,
};

fn net_cfg() -> NetworkConfig {
    NetworkConfig::gradcheck_tiny()
}

fn rcfg() -> RasterConfig {
    RasterConfig {
        size: 16,
        resolution: 2.0,
    }
}

fn dataset(scenes: usize, frames: usize) -> Dataset {
    let cfg = GeneratorConfig {
        frames_per_scene: frames,
        ..GeneratorConfig::default()
    };
    generate_synthetic_scenes(31, scenes, &cfg)
}

fn train_cfg(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: lr,
        samples_per_scene: 5,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("ssn-train-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn loss_examples() {
    let t = [Pose2::new(0.0, 0.0, 0.0)];
    let p = |x, y, yaw| TrajectoryPrediction {
        waypoints: vec![Pose2::new(x, y, yaw)],
    };
    assert_eq!(trajectory_loss_value(&p(0.0, 0.0, 0.0), &t, 1.0).unwrap(), 0.0);
    assert_eq!(trajectory_loss_value(&p(3.0, 4.0, 0.0), &t, 1.0).unwrap(), 25.0);
    assert!(trajectory_loss_value(&p(0.0, 0.0, 2.0 * PI), &t, 1.0).unwrap() < 1e-24);

    let g = Graph::new();
    let pred = g.leaf(Tensor::from_vec(&[1, 3], vec![3.0, 4.0, 0.0]).unwrap());
    assert_eq!(trajectory_loss(pred, &t, 1.0).unwrap().value().data(), &[25.0]);
    assert!(trajectory_loss(pred, &[t[0], t[0]], 1.0).is_err());
}

#[test]
fn loss_is_invariant_to_full_turns_of_target_yaw() {
    let pred = TrajectoryPrediction {
        waypoints: vec![Pose2::new(1.0, -0.5, 0.3), Pose2::new(2.0, -0.2, -2.9)],
    };
    let base = [Pose2::new(0.8, -0.4, 0.1), Pose2::new(2.2, 0.1, 3.0)];
    let l0 = trajectory_loss_value(&pred, &base, 1.0).unwrap();
    for k in [-3.0, -1.0, 1.0, 2.0, 5.0] {
        let shifted: Vec<Pose2> = base.iter().map(|p| Pose2::new(p.x, p.y, p.yaw + 2.0 * PI * k)).collect();
        assert!((trajectory_loss_value(&pred, &shifted, 1.0).unwrap() - l0).abs() < 1e-12);
        let g = Graph::new();
        let v = g.leaf(Tensor::from_vec(&[2, 3], vec![1.0, -0.5, 0.3, 2.0, -0.2, -2.9]).unwrap());
        assert!((trajectory_loss(v, &shifted, 1.0).unwrap().value().data()[0] - l0).abs() < 1e-12);
    }
}

fn single(value: f64) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    s.register("p", Tensor::from_vec(&[1], vec![value]).unwrap()).unwrap();
    s
}

#[test]
fn sgd_examples() {
    let mut p = single(1.0);
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1);
    opt.step(&mut p, &[Tensor::from_vec(&[1], vec![2.0]).unwrap()]).unwrap();
    assert!((p.by_name("p").unwrap().data()[0] - 0.8).abs() < 1e-15);
    opt.step(&mut p, &[Tensor::zeros(&[1])]).unwrap();
    assert!((p.by_name("p").unwrap().data()[0] - 0.8).abs() < 1e-15);
    assert!(opt.step(&mut p, &[Tensor::zeros(&[2])]).is_err());
    assert!(opt.step(&mut p, &[]).is_err());
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    for c in [1e-3f64, 0.5, 7.0, -2.0, -1e3] {
        for lr in [1e-3, 1e-2] {
            let mut p = single(0.25);
            let mut opt = Optimizer::new(OptimizerKind::Adam, lr);
            opt.step(&mut p, &[Tensor::from_vec(&[1], vec![c]).unwrap()]).unwrap();
            let delta = p.by_name("p").unwrap().data()[0] - 0.25;
            assert!((delta + lr * c.signum()).abs() < 1e-6, "c={c} lr={lr}: {delta}");
        }
    }
}

#[test]
fn clipping_bounds_the_global_norm() {
    let mut g = vec![Tensor::from_vec(&[2], vec![3.0, 0.0]).unwrap(), Tensor::from_vec(&[1], vec![4.0]).unwrap()];
    assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
    assert_eq!(g[0].data(), &[3.0, 0.0]);
    assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
    let n: f64 = g.iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
    assert!((n - 1.0).abs() < 1e-15);
    assert!((g[1].data()[0] - 0.8).abs() < 1e-15);
}

#[test]
fn zero_learning_rate_keeps_the_loss_constant() {
    // exactly one sample: 5 frames, stride 5, horizon 3
    let ds = dataset(1, 5);
    let cfg = train_cfg(4, 0.0);
    assert_eq!(sample_frames(&ds, 5, 3), vec![0]);
    let out = fit(&ds, &net_cfg(), &cfg, &rcfg()).unwrap();
    let losses: Vec<f64> = out.trace.records.iter().map(|r| r.loss).collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.iter().all(|&l| l == losses[0] && l > 0.0));
    assert_eq!(out.checkpoint.step, 4);
}

#[test]
fn fit_is_deterministic_and_traced() {
    let ds = dataset(2, 30);
    let cfg = train_cfg(2, 1e-3);
    let a = fit(&ds, &net_cfg(), &cfg, &rcfg()).unwrap();
    let b = fit(&ds, &net_cfg(), &cfg, &rcfg()).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());

    let per_epoch = sample_frames(&ds, 5, 3).len();
    assert_eq!(per_epoch, 2 * 6);
    assert_eq!(a.trace.records.len(), 2 * per_epoch);
    let steps: Vec<u64> = a.trace.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, (1..=24).collect::<Vec<_>>());
    assert_eq!(a.checkpoint.step, 24);

    let mut csv = Vec::new();
    a.trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("epoch,step,loss"));
    assert_eq!(text.lines().count(), 25);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[..2], ["0", "1"]);
    assert_eq!(first[2].parse::<f64>().unwrap(), a.trace.records[0].loss);

    let other = fit(&ds, &net_cfg(), &TrainConfig { seed: 4, ..cfg }, &rcfg()).unwrap();
    assert_ne!(other.trace, a.trace);
}

#[test]
fn fit_rejects_unusable_inputs() {
    let ds = dataset(1, 3);
    assert!(fit(&ds, &net_cfg(), &train_cfg(1, 1e-3), &rcfg()).is_err());
    let ds = dataset(1, 10);
    assert!(fit(&ds, &net_cfg(), &train_cfg(1, 1e-3), &RasterConfig::default()).is_err());
    let bad = TrainConfig {
        epochs: 0,
        ..train_cfg(1, 1e-3)
    };
    assert!(matches!(fit(&ds, &net_cfg(), &bad, &rcfg()), Err(Error::Config(_))));
}

#[test]
fn one_small_step_lowers_the_sample_loss() {
    let ds = dataset(1, 20);
    let sample = build_samples::<f64>(&ds, 5, 3, &rcfg()).remove(1);
    let cfg = net_cfg();
    let mut decreased = Vec::new();
    for lr in [1e-2, 1e-3, 1e-4] {
        let (net, mut params) = build_network::<f64>(&cfg, 8).unwrap();
        let tcfg = TrainConfig {
            learning_rate: lr,
            ..TrainConfig::default()
        };
        let mut opt = Optimizer::new(tcfg.optimizer, lr);
        let before = train_step(&net, &mut params, &mut opt, &sample, &tcfg).unwrap();
        let after = trajectory_loss_value(&net.predict(&params, &sample.raster).unwrap(), &sample.target, 1.0).unwrap();
        if after < before {
            decreased.push(lr);
        }
    }
    assert!(!decreased.is_empty());
}

#[test]
fn checkpoint_round_trip() {
    let ds = dataset(1, 20);
    let out = fit(&ds, &net_cfg(), &train_cfg(1, 1e-3), &rcfg()).unwrap();
    let ck = out.checkpoint;
    let (p1, p2) = (scratch("a.ssnck"), scratch("b.ssnck"));
    ck.save(&p1).unwrap();
    let back = Checkpoint::load(&p1).unwrap();
    back.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(back.step, ck.step);
    assert_eq!(back.config, ck.config);
    for ((n1, t1), (n2, t2)) in ck.params.iter().zip(back.params.iter()) {
        assert_eq!(n1, n2);
        assert!(t1.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    let raster = build_samples::<f64>(&ds, 7, 3, &rcfg()).remove(0).raster;
    let before = ck.network().unwrap().predict(&ck.params, &raster).unwrap();
    let after = back.network().unwrap().predict(&back.params, &raster).unwrap();
    assert_eq!(before, after);

    let bytes = ck.to_bytes();
    assert_eq!(&bytes[..5], b"SSNCK");
    assert_eq!(&bytes[5..9], &1u32.to_le_bytes());
    let text_len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let text = std::str::from_utf8(&bytes[13..13 + text_len]).unwrap();
    assert!(text.contains("raster_size = 16\n") && text.ends_with(&format!("step = {}\n", ck.step)));
}

#[test]
fn checkpoint_errors_are_distinct() {
    let (_, params) = build_network::<f64>(&net_cfg(), 0).unwrap();
    let ck = Checkpoint {
        config: net_cfg(),
        step: 0,
        params,
    };
    let bytes = ck.to_bytes();
    let mut magic = bytes.clone();
    magic[1] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(FormatError::Magic { .. }))));
    let mut version = bytes.clone();
    version[5] = 9;
    assert!(matches!(Checkpoint::from_bytes(&version), Err(Error::Format(FormatError::Version { .. }))));
    for cut in [7, 20, bytes.len() - 3] {
        assert!(
            matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(FormatError::Truncated { .. }))),
            "cut at {cut}"
        );
    }
    // parameters from one config cannot be loaded under another
    let (_, other) = build_network::<f64>(&NetworkConfig::desk_tiny(), 0).unwrap();
    let mismatched = Checkpoint {
        config: net_cfg(),
        step: 0,
        params: other,
    };
    assert!(Checkpoint::from_bytes(&mismatched.to_bytes()).is_err());
    assert!(Checkpoint::load(&scratch("missing.ssnck")).is_err());
}
