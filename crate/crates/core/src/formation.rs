//! Leader-follower formation control.
//!
//! Each follower holds a desired distance `rho_d` and bearing `psi_d`
//! relative to the leader, measured in the leader frame. The follower
//! command combines a feed-forward of the leader velocity with feedback
//! on the tracking error expressed in the follower body frame.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};
use crate::kinematics::{wrap_angle, Pose2D, VelocityCommand, VelocityLimits};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationGains {
    /// Longitudinal error gain.
    pub k1: f64,
    /// Lateral error gain.
    pub k2: f64,
    /// Heading error gain.
    pub k3: f64,
    /// Offset length dividing the angular command.
    pub d: f64,
}

impl Default for FormationGains {
    fn default() -> Self {
        FormationGains {
            k1: 1.0,
            k2: 4.0,
            k3: 0.002,
            d: 0.1,
        }
    }
}

impl FormationGains {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("k1", self.k1)?;
        ensure_positive("k2", self.k2)?;
        ensure_positive("k3", self.k3)?;
        ensure_positive("d", self.d)
    }
}

/// Desired placement of a follower relative to the leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerSpec {
    pub rho_d: f64,
    pub psi_d: f64,
}

impl FollowerSpec {
    pub fn new(rho_d: f64, psi_d: f64) -> Result<Self> {
        let spec = FollowerSpec { rho_d, psi_d };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec placing the follower at `offset` (leader frame) from the leader.
    pub fn from_offset(offset: [f64; 2]) -> Result<Self> {
        Self::new(offset[0].hypot(offset[1]), offset[1].atan2(offset[0]))
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rho_d", self.rho_d)?;
        crate::error::ensure_finite("psi_d", self.psi_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingError {
    /// Longitudinal error (follower body x).
    pub alpha: f64,
    /// Lateral error (follower body y).
    pub beta: f64,
    pub x_je: f64,
    pub y_je: f64,
    /// Leader heading minus follower heading.
    pub theta_je: f64,
}

/// World-frame pose the follower should occupy.
pub fn desired_follower_pose(leader: Pose2D, spec: FollowerSpec) -> Pose2D {
    let bearing = leader.theta + spec.psi_d;
    Pose2D {
        x: leader.x + spec.rho_d * bearing.cos(),
        y: leader.y + spec.rho_d * bearing.sin(),
        theta: leader.theta,
    }
}

pub fn compute_tracking_errors(leader: Pose2D, follower: Pose2D, spec: FollowerSpec) -> TrackingError {
    let target = desired_follower_pose(leader, spec);
    let dx = target.x - follower.x;
    let dy = target.y - follower.y;
    let (sin, cos) = follower.theta.sin_cos();
    let x_je = cos * dx + sin * dy;
    let y_je = -sin * dx + cos * dy;
    TrackingError {
        alpha: x_je,
        beta: y_je,
        x_je,
        y_je,
        theta_je: wrap_angle(leader.theta - follower.theta),
    }
}

/// Raw control law output before saturation.
pub fn follower_law(
    err: &TrackingError,
    leader_cmd: VelocityCommand,
    spec: FollowerSpec,
    gains: &FormationGains,
) -> VelocityCommand {
    // The relative heading between leader and follower stands in for the
    // leader-follower angle.
    let theta_ij = err.theta_je;
    let (vi, wi) = (leader_cmd.v, leader_cmd.omega);
    let v = gains.k1 * err.alpha + vi * theta_ij.cos() - spec.rho_d * wi * (spec.psi_d - theta_ij).sin();
    let omega = (vi * theta_ij.sin()
        + spec.rho_d * wi * (spec.psi_d + theta_ij).cos()
        + gains.k2 * err.beta
        + gains.k3 * err.theta_je)
        / gains.d;
    VelocityCommand { v, omega }
}

/// Follower command with saturation. The flag reports whether the caps
/// were hit.
pub fn follower_control(
    leader: Pose2D,
    leader_cmd: VelocityCommand,
    follower: Pose2D,
    spec: FollowerSpec,
    gains: &FormationGains,
    limits: &VelocityLimits,
) -> (VelocityCommand, bool) {
    let err = compute_tracking_errors(leader, follower, spec);
    limits.clamp(follower_law(&err, leader_cmd, spec, gains))
}
