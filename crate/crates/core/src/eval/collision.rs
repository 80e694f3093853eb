use std::f64::consts::FRAC_PI_4;
use std::fmt;

use crate::error::Error;
use crate::geometry::{bearing, OrientedBox};

/// Separating-axis test over the four edge normals. Boxes that merely touch
/// overlap.
pub fn obb_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    for axis in a.axes().into_iter().chain(b.axes()) {
        let project = |cs: &[(f64, f64); 4]| {
            cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
                let d = x * axis.0 + y * axis.1;
                (lo.min(d), hi.max(d))
            })
        };
        let (alo, ahi) = project(&ca);
        let (blo, bhi) = project(&cb);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionCategory {
    Front,
    Side,
    Rear,
}

impl CollisionCategory {
    pub const ALL: [CollisionCategory; 3] = [CollisionCategory::Front, CollisionCategory::Side, CollisionCategory::Rear];

    pub fn as_str(self) -> &'static str {
        match self {
            CollisionCategory::Front => "front",
            CollisionCategory::Side => "side",
            CollisionCategory::Rear => "rear",
        }
    }

    /// Category of a contact at bearing `theta` ∈ (−π, π] from the ego heading.
    pub fn from_bearing(theta: f64) -> Self {
        if theta.abs() <= FRAC_PI_4 {
            CollisionCategory::Front
        } else if theta.abs() >= 3.0 * FRAC_PI_4 {
            CollisionCategory::Rear
        } else {
            CollisionCategory::Side
        }
    }
}

impl fmt::Display for CollisionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bearing of the other box's centroid from the ego and its category.
pub fn classify_collision(ego: &OrientedBox, other: &OrientedBox) -> Result<(f64, CollisionCategory), Error> {
    if !obb_overlap(ego, other) {
        return Err(Error::Usage("classify_collision called on non-overlapping boxes".into()));
    }
    let theta = bearing(&ego.pose, (other.pose.x, other.pose.y));
    Ok((theta, CollisionCategory::from_bearing(theta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use std::f64::consts::PI;

    fn unit(x: f64, y: f64, yaw: f64) -> OrientedBox {
        OrientedBox::new(Pose2::new(x, y, yaw), 1.0, 1.0)
    }

    #[test]
    fn identical_and_distant() {
        assert!(obb_overlap(&unit(0.0, 0.0, 0.3), &unit(0.0, 0.0, 0.3)));
        assert!(!obb_overlap(&unit(0.0, 0.0, 0.0), &unit(10.0, 0.0, 0.0)));
    }

    #[test]
    fn touching_edges_overlap() {
        assert!(obb_overlap(&unit(0.0, 0.0, 0.0), &unit(1.0, 0.0, 0.0)));
        assert!(!obb_overlap(&unit(0.0, 0.0, 0.0), &unit(1.0 + 1e-9, 0.0, 0.0)));
    }

    #[test]
    fn rotated_diamond_clears_the_corner() {
        // a 45° unit box reaches √2/2 along x; the axis-aligned one reaches 0.5
        let gap = 0.5 + std::f64::consts::FRAC_1_SQRT_2 + 1e-3;
        assert!(!obb_overlap(&unit(0.0, 0.0, 0.0), &unit(gap, 0.0, PI / 4.0)));
        assert!(obb_overlap(&unit(0.0, 0.0, 0.0), &unit(gap - 2e-3, 0.0, PI / 4.0)));
    }

    #[test]
    fn canonical_bearings() {
        let ego = OrientedBox::new(Pose2::IDENTITY, 4.0, 2.0);
        let ahead = unit(2.0, 0.0, 0.0);
        let behind = unit(-2.0, 0.0, 0.0);
        let abeam = unit(0.0, 1.2, 0.0);
        assert_eq!(classify_collision(&ego, &ahead).unwrap().1, CollisionCategory::Front);
        assert_eq!(classify_collision(&ego, &behind).unwrap(), (PI, CollisionCategory::Rear));
        assert_eq!(classify_collision(&ego, &abeam).unwrap().1, CollisionCategory::Side);
        assert!(classify_collision(&ego, &unit(20.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn boundaries_lean_front_and_rear() {
        assert_eq!(CollisionCategory::from_bearing(PI / 4.0), CollisionCategory::Front);
        assert_eq!(CollisionCategory::from_bearing(-PI / 4.0), CollisionCategory::Front);
        assert_eq!(CollisionCategory::from_bearing(3.0 * PI / 4.0), CollisionCategory::Rear);
        assert_eq!(CollisionCategory::from_bearing(PI / 2.0), CollisionCategory::Side);
    }
}
