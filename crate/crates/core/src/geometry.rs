//! Planar geometry shared by the bridge, simulator and mapper.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Angular velocities below this magnitude are integrated as straight lines.
pub const STRAIGHT_LINE_EPSILON: f64 = 1e-12;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar robot pose in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Advances the pose under a constant twist for `dt` seconds using exact
    /// unicycle kinematics (straight line when the turn rate is ~0, arc otherwise).
    pub fn integrate(&self, twist: TwistCommand, dt: f64) -> Pose2D {
        let v = twist.linear;
        let w = twist.angular;
        if w.abs() < STRAIGHT_LINE_EPSILON {
            Pose2D {
                x: self.x + v * self.theta.cos() * dt,
                y: self.y + v * self.theta.sin() * dt,
                theta: self.theta,
            }
        } else {
            let theta_next = self.theta + w * dt;
            let r = v / w;
            Pose2D {
                x: self.x + r * (theta_next.sin() - self.theta.sin()),
                y: self.y - r * (theta_next.cos() - self.theta.cos()),
                theta: normalize_angle(theta_next),
            }
        }
    }
}

/// Velocity command: forward speed (m/s) and counterclockwise turn rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TwistCommand {
    pub linear: f64,
    pub angular: f64,
}

impl TwistCommand {
    pub const ZERO: TwistCommand = TwistCommand {
        linear: 0.0,
        angular: 0.0,
    };

    pub fn new(linear: f64, angular: f64) -> Self {
        Self { linear, angular }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.is_finite() && self.angular.is_finite()
    }

    /// Clamps both components into the symmetric limits.
    pub fn clamped(&self, max_linear: f64, max_angular: f64) -> Self {
        Self {
            linear: self.linear.clamp(-max_linear, max_linear),
            angular: self.angular.clamp(-max_angular, max_angular),
        }
    }
}

/// One planar range scan. Beams with no return hold a value above
/// `range_max` or a non-finite value (the simulator uses `f64::INFINITY`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub range_max: f64,
    pub ranges: Vec<f64>,
}

impl LaserScan {
    /// Beam count implied by the angular parameters.
    pub fn expected_len(angle_min: f64, angle_max: f64, angle_increment: f64) -> usize {
        // the small slack absorbs `(n·inc)/inc` landing just under an integer
        ((angle_max - angle_min) / angle_increment + 1e-9).floor() as usize + 1
    }

    pub fn is_consistent(&self) -> bool {
        self.angle_increment > 0.0
            && self.ranges.len()
                == Self::expected_len(self.angle_min, self.angle_max, self.angle_increment)
    }

    pub fn beam_angle(&self, index: usize) -> f64 {
        self.angle_min + index as f64 * self.angle_increment
    }

    pub fn is_return(&self, range: f64) -> bool {
        range.is_finite() && range <= self.range_max
    }
}
