//! Closed-loop evaluation: the ego is driven by a policy through the logged
//! world (agents replay their logs), ego–agent contacts are detected with
//! oriented boxes and classified by bearing, and the results are aggregated
//! into per-10k-frame and per-1000-mile rates.

mod collision;
pub mod report;

use std::collections::BTreeSet;

use crate::data::raster::{RoadMap, WorldView, HISTORY_LEN};
use crate::data::{ego_box, Dataset, RasterConfig, Scene};
use crate::error::Error;
use crate::geometry::Pose2;
use crate::net::Network;
use crate::nn::ParamStore;
use crate::scalar::Scalar;

pub use collision::{classify_collision, obb_overlap, CollisionCategory};
pub use report::{render_svg, CollisionReport, ReportRow};

/// Decides the ego's next motion from the simulated world.
pub trait Policy: Sync {
    /// Pose of the ego at the next frame, expressed in its current frame.
    /// `step` counts frames since the start of the scene.
    fn next_pose(&self, step: usize, view: &WorldView<'_>) -> Result<Pose2, Error>;
}

impl<F> Policy for F
where
    F: Fn(usize) -> Pose2 + Sync,
{
    fn next_pose(&self, step: usize, _view: &WorldView<'_>) -> Result<Pose2, Error> {
        Ok(self(step))
    }
}

/// A trained (or freshly initialized) network: rasterizes the view and
/// executes the first predicted waypoint.
pub struct ModelPolicy<T: Scalar> {
    pub network: Network,
    pub params: ParamStore<T>,
    pub raster: RasterConfig,
}

impl<T: Scalar> ModelPolicy<T> {
    pub fn new(network: Network, params: ParamStore<T>, raster: RasterConfig) -> Result<Self, Error> {
        if raster.size != network.config.raster_size {
            return Err(Error::Usage(format!(
                "raster size {} does not match the network input size {}",
                raster.size, network.config.raster_size
            )));
        }
        Ok(ModelPolicy { network, params, raster })
    }
}

impl<T: Scalar> Policy for ModelPolicy<T> {
    fn next_pose(&self, _step: usize, view: &WorldView<'_>) -> Result<Pose2, Error> {
        let raster = view.render::<T>(&self.raster);
        let pred = self.network.predict(&self.params, &raster)?;
        Ok(pred.waypoints[0])
    }
}

/// Drives the ego through `scene`; returns one simulated pose per frame,
/// starting from the logged initial pose.
pub fn unroll_closed_loop<P: Policy + ?Sized>(policy: &P, ds: &Dataset, scene: &Scene) -> Result<Vec<Pose2>, Error> {
    check_scene(ds, scene)?;
    let road = RoadMap::for_scene(ds, scene);
    let frames = ds.scene_frames(scene);
    let mut poses = Vec::with_capacity(frames.len());
    poses.push(frames[0].ego_pose);
    for (step, frame) in frames[..frames.len() - 1].iter().enumerate() {
        let history: Vec<Pose2> = poses[..step].iter().rev().take(HISTORY_LEN).copied().collect();
        let ego = poses[step];
        let view = WorldView {
            ego,
            history: &history,
            agents: ds.frame_agents(frame),
            road: &road,
        };
        let local = policy.next_pose(step, &view)?;
        poses.push(ego.compose(&local));
    }
    Ok(poses)
}

fn check_scene(ds: &Dataset, scene: &Scene) -> Result<(), Error> {
    if scene.frame_start_index >= scene.frame_end_index || scene.frame_end_index > ds.frames.len() {
        return Err(Error::Usage(format!("scene {} has an invalid frame range", scene.scene_id)));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionEvent {
    pub scene_id: u64,
    /// Absolute index into the dataset's frame array.
    pub frame_index: usize,
    pub track_id: u64,
    pub theta: f64,
    pub category: CollisionCategory,
}

/// Contacts along a simulated trajectory. Each continuous overlap with one
/// track yields a single event at its first frame.
pub fn detect_collisions(ds: &Dataset, scene: &Scene, trajectory: &[Pose2]) -> Result<Vec<CollisionEvent>, Error> {
    if trajectory.len() != scene.num_frames() {
        return Err(Error::Usage(format!(
            "trajectory has {} poses for a {}-frame scene",
            trajectory.len(),
            scene.num_frames()
        )));
    }
    let mut events = Vec::new();
    let mut touching = BTreeSet::new();
    for (frame_index, pose) in scene.frame_range().zip(trajectory) {
        let ego = ego_box(*pose);
        let mut now = BTreeSet::new();
        for agent in ds.frame_agents(&ds.frames[frame_index]) {
            let other = agent.bbox();
            if !obb_overlap(&ego, &other) {
                continue;
            }
            now.insert(agent.track_id);
            if !touching.contains(&agent.track_id) {
                let (theta, category) = classify_collision(&ego, &other)?;
                events.push(CollisionEvent {
                    scene_id: scene.scene_id,
                    frame_index,
                    track_id: agent.track_id,
                    theta,
                    category,
                });
            }
        }
        touching = now;
    }
    Ok(events)
}

#[derive(Clone, Debug)]
pub struct SceneOutcome {
    pub trajectory: Vec<Pose2>,
    pub events: Vec<CollisionEvent>,
}

fn run_scene<P: Policy + ?Sized>(policy: &P, ds: &Dataset, scene: &Scene) -> Result<SceneOutcome, Error> {
    let trajectory = unroll_closed_loop(policy, ds, scene)?;
    let events = detect_collisions(ds, scene, &trajectory)?;
    Ok(SceneOutcome { trajectory, events })
}

/// Worker count for scene fan-out: `SSN_THREADS` if set, else the
/// available parallelism.
pub fn default_threads() -> usize {
    std::env::var("SSN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Closed-loop evaluation over every scene. Scenes are distributed over up
/// to `threads` workers; results are merged in scene order, so the output
/// does not depend on the thread count.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    ds: &Dataset,
    model: &str,
    threads: usize,
) -> Result<(CollisionReport, Vec<CollisionEvent>), Error> {
    if ds.scenes.is_empty() {
        return Err(Error::Usage("evaluation needs at least one scene".into()));
    }
    let threads = threads.clamp(1, ds.scenes.len());
    let outcomes: Vec<Result<SceneOutcome, Error>> = if threads == 1 {
        ds.scenes.iter().map(|s| run_scene(policy, ds, s)).collect()
    } else {
        let mut slots: Vec<Option<Result<SceneOutcome, Error>>> = (0..ds.scenes.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    scope.spawn(move || {
                        (w..ds.scenes.len())
                            .step_by(threads)
                            .map(|i| (i, run_scene(policy, ds, &ds.scenes[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("evaluation worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every scene evaluated")).collect()
    };

    let mut report = CollisionReport::new(model);
    let mut events = Vec::new();
    for outcome in outcomes {
        let outcome = outcome?;
        report.frames += outcome.trajectory.len() as u64;
        report.meters += outcome.trajectory.windows(2).map(|w| w[0].distance(&w[1])).sum::<f64>();
        for e in &outcome.events {
            report.add(e.category);
        }
        events.extend(outcome.events);
    }
    Ok((report, events))
}
