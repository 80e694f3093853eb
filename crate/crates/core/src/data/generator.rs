//! Deterministic synthetic driving world.
//!
//! Each scene has an ego vehicle driving at constant speed along a straight
//! or constant-curvature road, plus a handful of agents: lead vehicles
//! ahead in the ego lane, followers behind it, oncoming traffic in the left
//! lane, and pedestrians/cyclists crossing the road. Agents are rejected
//! and redrawn if they would ever touch the logged ego, so the logged ego
//! trajectory is always collision-free. Followers and crossers make any
//! deviation from it risky.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_bool, parse_value, ConfigSection};
use crate::data::{ego_box, Agent, AgentLabel, Dataset, Frame, Scene, FRAME_DT};
use crate::error::ConfigError;
use crate::eval::obb_overlap;
use crate::geometry::{OrientedBox, Pose2};
use crate::tensor::wrap_angle;

/// Offset of the oncoming lane from the ego lane centerline (left).
pub const LANE_OFFSET: f64 = 3.5;
/// Clearance kept between any agent and the logged ego.
const CLEARANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub frames_per_scene: usize,
    pub min_agents: usize,
    pub max_agents: usize,
    /// Followers and road crossers; without them a motionless ego is never hit.
    pub crossing_agents: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            frames_per_scene: 250,
            min_agents: 2,
            max_agents: 8,
            crossing_agents: true,
        }
    }
}

impl ConfigSection for GeneratorConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "frames_per_scene" => self.frames_per_scene = parse_value(key, value)?,
            "min_agents" => self.min_agents = parse_value(key, value)?,
            "max_agents" => self.max_agents = parse_value(key, value)?,
            "crossing_agents" => self.crossing_agents = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn render(&self) -> Vec<(&'static str, String)> {
        vec![
            ("frames_per_scene", self.frames_per_scene.to_string()),
            ("min_agents", self.min_agents.to_string()),
            ("max_agents", self.max_agents.to_string()),
            ("crossing_agents", self.crossing_agents.to_string()),
        ]
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.frames_per_scene < 2 {
            return Err(ConfigError::invalid("frames_per_scene", "need at least 2 frames"));
        }
        if self.min_agents > self.max_agents {
            return Err(ConfigError::invalid("min_agents", "exceeds max_agents"));
        }
        Ok(())
    }
}

/// Rounds to the 9 significant digits the text formats carry, so that
/// generated values survive a write/read cycle exactly.
pub fn canonical(x: f64) -> f64 {
    crate::data::format::format_number(x)
        .parse()
        .expect("formatted numbers parse")
}

/// Centerline of a straight (`curvature == 0`) or circular road.
#[derive(Clone, Copy, Debug)]
struct Road {
    origin: Pose2,
    curvature: f64,
}

impl Road {
    /// Pose at arc length `s`, shifted `offset` meters to the left.
    fn pose(&self, s: f64, offset: f64) -> Pose2 {
        let Pose2 { x, y, yaw } = self.origin;
        let k = self.curvature;
        let (cx, cy, heading) = if k == 0.0 {
            (x + s * yaw.cos(), y + s * yaw.sin(), yaw)
        } else {
            let h = yaw + k * s;
            (x + (h.sin() - yaw.sin()) / k, y - (h.cos() - yaw.cos()) / k, h)
        };
        let (sn, cs) = heading.sin_cos();
        Pose2::new(cx - offset * sn, cy + offset * cs, wrap_angle(heading))
    }
}

#[derive(Clone, Copy, Debug)]
enum Motion {
    /// Lane following at `speed` (negative: against the road direction).
    Lane { s0: f64, offset: f64, speed: f64 },
    /// Straight line crossing through `through` at time `t_cross`.
    Crossing {
        through: (f64, f64),
        heading: f64,
        speed: f64,
        t_cross: f64,
    },
}

#[derive(Clone, Copy, Debug)]
struct AgentPlan {
    motion: Motion,
    extent: [f64; 2],
    label: AgentLabel,
}

impl AgentPlan {
    fn state(&self, road: &Road, t: f64) -> (Pose2, [f64; 2]) {
        match self.motion {
            Motion::Lane { s0, offset, speed } => {
                let p = road.pose(s0 + speed * t, offset);
                let yaw = if speed < 0.0 { wrap_angle(p.yaw + PI) } else { p.yaw };
                let (sn, cs) = p.yaw.sin_cos();
                (Pose2::new(p.x, p.y, yaw), [speed * cs, speed * sn])
            }
            Motion::Crossing {
                through,
                heading,
                speed,
                t_cross,
            } => {
                let (sn, cs) = heading.sin_cos();
                let d = speed * (t - t_cross);
                (
                    Pose2::new(through.0 + d * cs, through.1 + d * sn, heading),
                    [speed * cs, speed * sn],
                )
            }
        }
    }
}

fn scene_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over (seed, index)
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds `n_scenes` scenes; the result is a pure function of the arguments
/// and scene `i` does not depend on `n_scenes`.
pub fn generate_synthetic_scenes(seed: u64, n_scenes: usize, cfg: &GeneratorConfig) -> Dataset {
    let mut ds = Dataset::default();
    for i in 0..n_scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(seed, i));
        append_scene(&mut ds, &mut rng, i, cfg);
    }
    ds
}

fn append_scene(ds: &mut Dataset, rng: &mut ChaCha8Rng, index: usize, cfg: &GeneratorConfig) {
    let frames = cfg.frames_per_scene;
    let road = Road {
        origin: Pose2::new(
            rng.gen_range(-500.0..500.0),
            rng.gen_range(-500.0..500.0),
            rng.gen_range(-PI..PI),
        ),
        curvature: if rng.gen_bool(0.4) {
            0.0
        } else {
            rng.gen_range(0.004..0.02) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
        },
    };
    let speed = rng.gen_range(5.0..10.0);
    let times: Vec<f64> = (0..frames).map(|f| f as f64 * FRAME_DT).collect();
    let ego: Vec<Pose2> = times.iter().map(|&t| road.pose(speed * t, 0.0)).collect();
    let ego_boxes: Vec<OrientedBox> = ego
        .iter()
        .map(|&p| {
            let b = ego_box(p);
            OrientedBox::new(p, b.length + 2.0 * CLEARANCE, b.width + 2.0 * CLEARANCE)
        })
        .collect();

    let n_agents = rng.gen_range(cfg.min_agents..=cfg.max_agents);
    let mut plans = Vec::with_capacity(n_agents);
    let mut rejected = 0;
    while plans.len() < n_agents {
        // lead vehicles can never reach the ego; fall back to them if a
        // short scene keeps rejecting other kinds
        let crossing = cfg.crossing_agents && rejected < 64;
        let plan = draw_agent(rng, &road, speed, frames, crossing);
        let clear = times.iter().zip(&ego_boxes).all(|(&t, eb)| {
            let (pose, _) = plan.state(&road, t);
            !obb_overlap(eb, &OrientedBox::new(pose, plan.extent[0], plan.extent[1]))
        });
        if clear {
            plans.push(plan);
        } else {
            rejected += 1;
        }
    }

    let frame_start = ds.frames.len();
    for (&t, pose) in times.iter().zip(&ego) {
        let agent_start = ds.agents.len();
        for (track, plan) in plans.iter().enumerate() {
            let (p, v) = plan.state(&road, t);
            ds.agents.push(Agent {
                track_id: track as u64,
                centroid: [canonical(p.x), canonical(p.y)],
                yaw: canonical(p.yaw),
                extent: plan.extent.map(canonical),
                velocity: v.map(canonical),
                label: plan.label,
            });
        }
        ds.frames.push(Frame {
            timestamp: canonical(t),
            ego_pose: Pose2::new(canonical(pose.x), canonical(pose.y), canonical(pose.yaw)),
            agent_start_index: agent_start,
            agent_end_index: ds.agents.len(),
        });
    }
    ds.scenes.push(Scene {
        scene_id: index as u64,
        host: format!("synth-host-{:02}", index % 16),
        frame_start_index: frame_start,
        frame_end_index: ds.frames.len(),
    });
}

fn vehicle_extent(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.gen_range(4.0..5.0), rng.gen_range(1.8..2.1)]
}

fn draw_agent(rng: &mut ChaCha8Rng, road: &Road, ego_speed: f64, frames: usize, crossing: bool) -> AgentPlan {
    let kinds = if crossing { 4 } else { 2 };
    let duration = frames as f64 * FRAME_DT;
    match rng.gen_range(0..kinds) {
        // lead: ahead in the ego lane, never slower than the ego
        0 => {
            let cyclist = rng.gen_bool(0.2);
            AgentPlan {
                motion: Motion::Lane {
                    s0: rng.gen_range(12.0..35.0),
                    offset: 0.0,
                    speed: ego_speed + rng.gen_range(0.0..3.0),
                },
                extent: if cyclist { [1.8, 0.6] } else { vehicle_extent(rng) },
                label: if cyclist { AgentLabel::Cyclist } else { AgentLabel::Vehicle },
            }
        }
        // oncoming traffic in the left lane
        1 => AgentPlan {
            motion: Motion::Lane {
                s0: rng.gen_range(20.0..(20.0 + ego_speed * duration)),
                offset: LANE_OFFSET,
                speed: -rng.gen_range(5.0..12.0),
            },
            extent: vehicle_extent(rng),
            label: AgentLabel::Vehicle,
        },
        // follower: behind the ego, matching its speed
        2 => AgentPlan {
            motion: Motion::Lane {
                s0: -rng.gen_range(10.0..30.0),
                offset: 0.0,
                speed: ego_speed * rng.gen_range(0.95..1.0),
            },
            extent: vehicle_extent(rng),
            label: AgentLabel::Vehicle,
        },
        // crosser: passes the ego path well before or after the ego does
        _ => {
            let pedestrian = rng.gen_bool(0.6);
            let travel = ego_speed * duration;
            let s_cross = rng.gen_range(15.0..(travel - 5.0).max(16.0));
            let ego_arrival = s_cross / ego_speed;
            let margin = rng.gen_range(3.0..8.0);
            let t_cross = if rng.gen_bool(0.5) {
                ego_arrival - margin
            } else {
                ego_arrival + margin
            };
            let at = road.pose(s_cross, 0.0);
            let side = if rng.gen_bool(0.5) { 0.5 * PI } else { -0.5 * PI };
            AgentPlan {
                motion: Motion::Crossing {
                    through: (at.x, at.y),
                    heading: wrap_angle(at.yaw + side),
                    speed: if pedestrian {
                        rng.gen_range(1.0..2.0)
                    } else {
                        rng.gen_range(3.0..5.0)
                    },
                    t_cross,
                },
                extent: if pedestrian { [0.6, 0.6] } else { [1.8, 0.6] },
                label: if pedestrian {
                    AgentLabel::Pedestrian
                } else {
                    AgentLabel::Cyclist
                },
            }
        }
    }
}
