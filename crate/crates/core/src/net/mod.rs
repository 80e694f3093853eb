//! The full trajectory network: three C-block sub-graphs → conv stem →
//! three stages of SSN blocks joined by UCD downsampling → pooled
//! regression head emitting K (x, y, yaw) waypoints.

pub mod blocks;
pub mod config;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::config::ConfigSection;
use crate::error::{Error, TensorError};
use crate::geometry::Pose2;
use crate::nn::{seeded_rng, Binding, ParamBuilder, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{wrap_angle, Tensor};

pub use blocks::{CBlock, Fmhsa, Head, Iru, Rru, SsnBlock, Stem, Ucd};
pub use config::NetworkConfig;

/// K future ego poses in the ego frame at prediction time, nearest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPrediction {
    pub waypoints: Vec<Pose2>,
}

impl TrajectoryPrediction {
    /// Reads a K×3 output tensor, wrapping yaw to (−π, π].
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self, TensorError> {
        if t.ndim() != 2 || t.shape()[1] != 3 {
            return Err(TensorError::dim("prediction", format!("expected K×3, got {:?}", t.shape())));
        }
        let waypoints = t
            .data()
            .chunks(3)
            .map(|r| Pose2::new(r[0].to_f64_lossy(), r[1].to_f64_lossy(), wrap_angle(r[2].to_f64_lossy())))
            .collect();
        Ok(TrajectoryPrediction { waypoints })
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

/// Splits a 3×H×W raster into its three 1×H×W channel maps.
pub fn split_subgraphs<'g, T: Scalar>(raster: Var<'g, T>) -> Result<[Var<'g, T>; 3], TensorError> {
    let shape = raster.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(TensorError::dim(
            "split_subgraphs",
            format!("expected a 3-channel raster, got {shape:?}"),
        ));
    }
    Ok([
        raster.slice_rows(0, 1)?,
        raster.slice_rows(1, 1)?,
        raster.slice_rows(2, 1)?,
    ])
}

/// Wiring of the network; parameter values live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Network {
    pub config: NetworkConfig,
    pub cblocks: [CBlock; 3],
    pub stem: Stem,
    pub stages: [Vec<SsnBlock>; 3],
    pub ucds: [Ucd; 2],
    pub head: Head,
}

/// Validates `cfg` and initializes parameters deterministically from `seed`.
pub fn build_network<T: Scalar>(cfg: &NetworkConfig, seed: u64) -> Result<(Network, ParamStore<T>), Error> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut rng = seeded_rng(seed);
    let mut pb = ParamBuilder::new(&mut store, &mut rng);
    let s = cfg.raster_size;
    let cblocks = [0, 1, 2].map(|i| CBlock::new(&mut pb.scope(&format!("cblock{i}")), s, s, cfg.lstm_hidden));
    let stem = Stem::new(&mut pb.scope("stem"), cfg.in_channels, cfg.stem_channels);
    let mut stages: [Vec<SsnBlock>; 3] = Default::default();
    let mut ucds = Vec::with_capacity(2);
    for i in 0..3 {
        let c = cfg.stage_channels[i];
        for j in 0..cfg.stage_depths[i] {
            let mut scope = pb.scope(&format!("stage{i}.block{j}"));
            stages[i].push(SsnBlock::new(&mut scope, c, cfg.heads[i], cfg.kv_reduction_stride, cfg.ffn_expansion));
        }
        if i < 2 {
            ucds.push(Ucd::new(&mut pb.scope(&format!("ucd{i}")), c, cfg.stage_channels[i + 1]));
        }
    }
    let head = Head::new(&mut pb.scope("head"), cfg.stage_channels[2], cfg.waypoints);
    let ucds: [Ucd; 2] = ucds.try_into().expect("two ucd layers");
    Ok((
        Network {
            config: cfg.clone(),
            cblocks,
            stem,
            stages,
            ucds,
            head,
        },
        store,
    ))
}

impl Network {
    /// Rebuilds the wiring for `cfg` and checks that `params` matches it
    /// name-for-name and shape-for-shape.
    pub fn for_params<T: Scalar>(cfg: &NetworkConfig, params: &ParamStore<T>) -> Result<Network, Error> {
        let (net, fresh) = build_network::<T>(cfg, 0)?;
        if fresh.len() != params.len() {
            return Err(Error::Usage(format!(
                "parameter set has {} tensors, config expects {}",
                params.len(),
                fresh.len()
            )));
        }
        for ((a, ta), (b, tb)) in fresh.iter().zip(params.iter()) {
            if a != b || ta.shape() != tb.shape() {
                return Err(Error::Usage(format!(
                    "parameter mismatch: expected `{a}` {:?}, found `{b}` {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(net)
    }

    /// Records the forward pass; returns the raw K×3 output.
    pub fn forward<'g, T: Scalar>(&self, b: &Binding<'g, T>, raster: Var<'g, T>) -> Result<Var<'g, T>, TensorError> {
        let s = self.config.raster_size;
        if raster.shape() != [3, s, s] {
            return Err(TensorError::shape("network_forward", &[3, s, s], &raster.shape()));
        }
        let graph = raster.graph();
        let maps = split_subgraphs(raster)?;
        let mut outs = Vec::with_capacity(3);
        for (block, map) in self.cblocks.iter().zip(maps) {
            outs.push(block.forward(b, map)?);
        }
        let mut x = self.stem.forward(b, graph.concat_rows(&outs)?)?;
        for (i, stage) in self.stages.iter().enumerate() {
            for block in stage {
                x = block.forward(b, x)?;
            }
            if i < 2 {
                x = self.ucds[i].forward(b, x)?;
            }
        }
        self.head.forward(b, x)
    }

    /// Untracked single-raster inference.
    pub fn predict<T: Scalar>(&self, params: &ParamStore<T>, raster: &Tensor<T>) -> Result<TrajectoryPrediction, TensorError> {
        let graph = Graph::new();
        let b = params.bind(&graph);
        let out = self.forward(&b, graph.constant(raster.clone()))?;
        TrajectoryPrediction::from_tensor(&out.value())
    }
}
