//! Planar rigid transforms and oriented boxes in world/ego frames (meters,
//! radians, counter-clockwise yaw).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::tensor::wrap_angle;

/// Position and heading; also used for waypoints expressed in an ego frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2 { x, y, yaw }
    }

    /// Maps a point given in this pose's local frame into the parent frame.
    pub fn apply(&self, (px, py): (f64, f64)) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn apply_inverse(&self, (px, py): (f64, f64)) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// `self ∘ local`: the pose `local` (expressed in this frame) in the parent frame.
    pub fn compose(&self, local: &Pose2) -> Pose2 {
        let (x, y) = self.apply((local.x, local.y));
        Pose2::new(x, y, wrap_angle(self.yaw + local.yaw))
    }

    /// `other` expressed in this pose's frame.
    pub fn relative(&self, other: &Pose2) -> Pose2 {
        let (x, y) = self.apply_inverse((other.x, other.y));
        Pose2::new(x, y, wrap_angle(other.yaw - self.yaw))
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangle centered at `pose` with `length` along the heading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub pose: Pose2,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(pose: Pose2, length: f64, width: f64) -> Self {
        OrientedBox { pose, length, width }
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|p| self.pose.apply(p))
    }

    /// Unit heading and its left normal.
    pub fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.pose.yaw.sin_cos();
        [(c, s), (-s, c)]
    }

    /// Closed point-in-rectangle test.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let (lx, ly) = self.pose.apply_inverse(p);
        lx.abs() <= self.length / 2.0 && ly.abs() <= self.width / 2.0
    }
}

/// Bearing of `target` from `from` measured in `from`'s frame, in (−π, π].
pub fn bearing(from: &Pose2, target: (f64, f64)) -> f64 {
    let (lx, ly) = from.apply_inverse(target);
    if lx == 0.0 && ly == 0.0 {
        return 0.0;
    }
    let t = ly.atan2(lx);
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}
