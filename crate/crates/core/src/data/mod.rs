//! Scenes → frames → agents driving logs, the synthetic world that fills
//! them, the ego-centric BEV rasterizer, and their on-disk formats.
//!
//! Index ranges are half-open everywhere: a scene owns frames
//! `[frame_start_index, frame_end_index)` and a frame owns agents
//! `[agent_start_index, agent_end_index)`.

pub mod format;
pub mod generator;
pub mod raster;
pub mod targets;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::geometry::{OrientedBox, Pose2};

pub use generator::{generate_synthetic_scenes, GeneratorConfig};
pub use raster::{rasterize, RasterConfig, RoadMap, WorldView};
pub use targets::ego_targets;

/// Seconds between consecutive frames (10 Hz).
pub const FRAME_DT: f64 = 0.1;
pub const EGO_LENGTH: f64 = 4.5;
pub const EGO_WIDTH: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: u64,
    pub host: String,
    pub frame_start_index: usize,
    pub frame_end_index: usize,
}

impl Scene {
    pub fn frame_range(&self) -> std::ops::Range<usize> {
        self.frame_start_index..self.frame_end_index
    }

    pub fn num_frames(&self) -> usize {
        self.frame_end_index - self.frame_start_index
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub timestamp: f64,
    pub ego_pose: Pose2,
    pub agent_start_index: usize,
    pub agent_end_index: usize,
}

impl Frame {
    pub fn agent_range(&self) -> std::ops::Range<usize> {
        self.agent_start_index..self.agent_end_index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentLabel {
    Vehicle,
    Cyclist,
    Pedestrian,
}

impl AgentLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentLabel::Vehicle => "vehicle",
            AgentLabel::Cyclist => "cyclist",
            AgentLabel::Pedestrian => "pedestrian",
        }
    }
}

/// One observation of a tracked road user in one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    /// Stable across the frames of one scene only.
    pub track_id: u64,
    pub centroid: [f64; 2],
    pub yaw: f64,
    /// `[length, width]` in meters.
    pub extent: [f64; 2],
    pub velocity: [f64; 2],
    pub label: AgentLabel,
}

impl Agent {
    pub fn bbox(&self) -> OrientedBox {
        OrientedBox::new(
            Pose2::new(self.centroid[0], self.centroid[1], self.yaw),
            self.extent[0],
            self.extent[1],
        )
    }
}

pub fn ego_box(pose: Pose2) -> OrientedBox {
    OrientedBox::new(pose, EGO_LENGTH, EGO_WIDTH)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<Scene>,
    pub frames: Vec<Frame>,
    pub agents: Vec<Agent>,
}

impl Dataset {
    pub fn scene_frames(&self, scene: &Scene) -> &[Frame] {
        &self.frames[scene.frame_range()]
    }

    pub fn frame_agents(&self, frame: &Frame) -> &[Agent] {
        &self.agents[frame.agent_range()]
    }

    /// The scene owning absolute frame index `frame`.
    pub fn scene_of_frame(&self, frame: usize) -> Option<&Scene> {
        let i = self.scenes.partition_point(|s| s.frame_end_index <= frame);
        self.scenes.get(i).filter(|s| s.frame_range().contains(&frame))
    }

    /// Checks the half-open index discipline: scenes tile the frame array
    /// in order, frames tile the agent array in order, timestamps strictly
    /// increase within a scene and extents are positive.
    pub fn validate(&self) -> Result<(), FormatError> {
        let range = |detail: String| FormatError::Range {
            what: "dataset",
            detail,
        };
        let mut next_frame = 0;
        for s in &self.scenes {
            if s.frame_start_index != next_frame || s.frame_start_index >= s.frame_end_index {
                return Err(range(format!(
                    "scene {} frames [{}, {}) do not continue at {next_frame}",
                    s.scene_id, s.frame_start_index, s.frame_end_index
                )));
            }
            next_frame = s.frame_end_index;
            if next_frame > self.frames.len() {
                return Err(range(format!(
                    "scene {} ends at frame {next_frame} past {} frames",
                    s.scene_id,
                    self.frames.len()
                )));
            }
            for w in self.frames[s.frame_range()].windows(2) {
                if w[1].timestamp <= w[0].timestamp {
                    return Err(range(format!("scene {}: timestamps not increasing", s.scene_id)));
                }
            }
        }
        if next_frame != self.frames.len() {
            return Err(range(format!("{} frames not owned by any scene", self.frames.len() - next_frame)));
        }
        let mut next_agent = 0;
        for (i, f) in self.frames.iter().enumerate() {
            if f.agent_start_index != next_agent || f.agent_end_index < f.agent_start_index {
                return Err(range(format!(
                    "frame {i} agents [{}, {}) do not continue at {next_agent}",
                    f.agent_start_index, f.agent_end_index
                )));
            }
            next_agent = f.agent_end_index;
        }
        if next_agent != self.agents.len() {
            return Err(range(format!(
                "frames own {next_agent} agents but {} are stored",
                self.agents.len()
            )));
        }
        if let Some(a) = self.agents.iter().find(|a| !(a.extent[0] > 0.0 && a.extent[1] > 0.0)) {
            return Err(range(format!("agent {} has non-positive extent", a.track_id)));
        }
        Ok(())
    }

    /// Applies one rigid transform to every world-frame quantity.
    pub fn transformed(&self, t: &Pose2) -> Dataset {
        let mut out = self.clone();
        for f in &mut out.frames {
            f.ego_pose = t.compose(&f.ego_pose);
        }
        let (s, c) = t.yaw.sin_cos();
        for a in &mut out.agents {
            let p = t.compose(&Pose2::new(a.centroid[0], a.centroid[1], a.yaw));
            a.centroid = [p.x, p.y];
            a.yaw = p.yaw;
            let [vx, vy] = a.velocity;
            a.velocity = [c * vx - s * vy, s * vx + c * vy];
        }
        out
    }
}
