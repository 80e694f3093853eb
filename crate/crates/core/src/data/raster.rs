//! Ego-centric bird's-eye-view rasterizer.
//!
//! Channel 0 is the drivable road, channel 1 current agent occupancy and
//! channel 2 the ego's previous five poses with decaying intensity. The ego
//! sits at pixel (row 3S/4, column S/2) facing up the image (decreasing
//! row); ego-frame +y (left) maps to decreasing column. Every pixel is
//! tested at its center against ego-frame geometry snapped to a 1 µm grid,
//! so rasters depend only on poses relative to the ego and are bit-identical
//! under global rigid motions (the snap absorbs round-off of the transform).

use crate::config::{parse_value, ConfigSection};
use crate::data::{ego_box, Agent, Dataset};
use crate::error::{ConfigError, FormatError};
use crate::geometry::{OrientedBox, Pose2};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Half width of the drivable corridor around the logged ego path; covers
/// the ego lane and the oncoming lane.
pub const ROAD_HALF_WIDTH: f64 = 5.5;
/// Past ego poses painted in the history channel.
pub const HISTORY_LEN: usize = 5;
/// Grid that ego-frame coordinates and yaws are snapped to before painting.
const SNAP: f64 = 1e-6;
/// Road corridor continues this far past the first and last logged poses.
const ROAD_EXTENSION: f64 = 60.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RasterConfig {
    pub size: usize,
    /// Meters per pixel.
    pub resolution: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            size: 64,
            resolution: 0.5,
        }
    }
}

impl RasterConfig {
    pub fn anchor(&self) -> (f64, f64) {
        ((3 * self.size / 4) as f64, (self.size / 2) as f64)
    }

    /// Ego-frame coordinates of the center of pixel `(row, col)`.
    pub fn pixel_to_ego(&self, row: usize, col: usize) -> (f64, f64) {
        let (r0, c0) = self.anchor();
        ((r0 - row as f64) * self.resolution, (c0 - col as f64) * self.resolution)
    }

    /// Largest distance from the ego to any pixel center.
    fn view_radius(&self) -> f64 {
        let s = self.size as f64;
        s * self.resolution * 1.25
    }
}

impl ConfigSection for RasterConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "resolution" => self.resolution = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn render(&self) -> Vec<(&'static str, String)> {
        vec![("resolution", self.resolution.to_string())]
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(ConfigError::invalid("resolution", "must be a positive number of meters per pixel"));
        }
        if self.size < 4 {
            return Err(ConfigError::invalid("raster_size", "raster too small"));
        }
        Ok(())
    }
}

/// Drivable corridor of one scene: the logged ego polyline, extended
/// straight ahead at both ends.
#[derive(Clone, Debug)]
pub struct RoadMap {
    points: Vec<(f64, f64)>,
}

impl RoadMap {
    pub fn from_poses(poses: &[Pose2]) -> Self {
        let mut points = Vec::with_capacity(poses.len() + 2);
        if let (Some(first), Some(last)) = (poses.first(), poses.last()) {
            points.push(first.apply((-ROAD_EXTENSION, 0.0)));
            points.extend(poses.iter().map(|p| (p.x, p.y)));
            points.push(last.apply((ROAD_EXTENSION, 0.0)));
        }
        RoadMap { points }
    }

    pub fn for_scene(ds: &Dataset, scene: &crate::data::Scene) -> Self {
        let poses: Vec<Pose2> = ds.scene_frames(scene).iter().map(|f| f.ego_pose).collect();
        Self::from_poses(&poses)
    }

    /// Segments (in `frame` coordinates) that may touch a disc of `radius`
    /// around the origin of `frame`.
    fn local_segments(&self, frame: &Pose2, radius: f64) -> Vec<((f64, f64), (f64, f64))> {
        let local: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|&p| {
                let (x, y) = frame.apply_inverse(p);
                (snap(x), snap(y))
            })
            .collect();
        local
            .windows(2)
            .filter(|w| segment_distance((0.0, 0.0), w[0], w[1]) <= radius + ROAD_HALF_WIDTH)
            .map(|w| (w[0], w[1]))
            .collect()
    }
}

fn snap(v: f64) -> f64 {
    (v / SNAP).round() * SNAP
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Everything the rasterizer needs for one image.
pub struct WorldView<'a> {
    pub ego: Pose2,
    /// Most recent first; at most [`HISTORY_LEN`] are drawn.
    pub history: &'a [Pose2],
    pub agents: &'a [Agent],
    pub road: &'a RoadMap,
}

impl WorldView<'_> {
    pub fn render<T: Scalar>(&self, rcfg: &RasterConfig) -> Tensor<T> {
        let s = rcfg.size;
        let plane = s * s;
        let mut data = vec![T::zero(); 3 * plane];
        let radius = rcfg.view_radius();

        let segments = self.road.local_segments(&self.ego, radius);
        let agent_boxes: Vec<OrientedBox> = self
            .agents
            .iter()
            .map(|a| local_box(&self.ego, &a.bbox()))
            .filter(|b| b.pose.x.hypot(b.pose.y) <= radius + b.length + b.width)
            .collect();
        let history: Vec<(OrientedBox, T)> = self
            .history
            .iter()
            .take(HISTORY_LEN)
            .enumerate()
            .map(|(k, p)| {
                let intensity = T::of((HISTORY_LEN - k) as f64 / HISTORY_LEN as f64);
                (local_box(&self.ego, &ego_box(*p)), intensity)
            })
            .collect();

        for row in 0..s {
            for col in 0..s {
                let p = rcfg.pixel_to_ego(row, col);
                let i = row * s + col;
                if segments
                    .iter()
                    .any(|&(a, b)| segment_distance(p, a, b) <= ROAD_HALF_WIDTH)
                {
                    data[i] = T::one();
                }
                if agent_boxes.iter().any(|b| b.contains(p)) {
                    data[plane + i] = T::one();
                }
                for (b, v) in &history {
                    if *v > data[2 * plane + i] && b.contains(p) {
                        data[2 * plane + i] = *v;
                    }
                }
            }
        }
        Tensor::from_vec(&[3, s, s], data).expect("raster buffer sized for 3×S×S")
    }
}

fn local_box(frame: &Pose2, b: &OrientedBox) -> OrientedBox {
    let p = frame.relative(&b.pose);
    OrientedBox::new(Pose2::new(snap(p.x), snap(p.y), snap(p.yaw)), b.length, b.width)
}

/// Rasterizes logged frame `frame_index` (absolute index into the frame
/// array) with the scene's logged ego history.
pub fn rasterize<T: Scalar>(ds: &Dataset, frame_index: usize, rcfg: &RasterConfig) -> Result<Tensor<T>, FormatError> {
    let scene = ds.scene_of_frame(frame_index).ok_or_else(|| FormatError::Range {
        what: "rasterize",
        detail: format!("frame {frame_index} outside the dataset"),
    })?;
    let road = RoadMap::for_scene(ds, scene);
    Ok(rasterize_with_road(ds, frame_index, scene.frame_start_index, &road, rcfg))
}

pub(crate) fn rasterize_with_road<T: Scalar>(
    ds: &Dataset,
    frame_index: usize,
    scene_start: usize,
    road: &RoadMap,
    rcfg: &RasterConfig,
) -> Tensor<T> {
    let frame = &ds.frames[frame_index];
    let history: Vec<Pose2> = (scene_start..frame_index)
        .rev()
        .take(HISTORY_LEN)
        .map(|i| ds.frames[i].ego_pose)
        .collect();
    WorldView {
        ego: frame.ego_pose,
        history: &history,
        agents: ds.frame_agents(frame),
        road,
    }
    .render(rcfg)
}
