//! Discrete-time skid-steer robot kinematics.
//!
//! A skid-steer base with equal wheel speeds on each side behaves as a
//! unicycle: the state is `(x, y, theta)` and the input is `(v, omega)`.
//! States are advanced with explicit Euler at a fixed timestep.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Default control and integration period (50 Hz).
pub const DEFAULT_DT: f64 = 0.02;

/// Planar robot pose in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Yaw in radians, kept in `(-pi, pi]`.
    pub theta: f64,
}

impl Pose2D {
    /// Builds a pose, wrapping the heading. Rejects non-finite components.
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        let pose = Pose2D { x, y, theta };
        pose.validate()?;
        Ok(Pose2D {
            theta: wrap_angle(theta),
            ..pose
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!(
                "pose must be finite, got ({}, {}, {})",
                self.x, self.y, self.theta
            )))
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Linear and angular velocity command for one robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        VelocityCommand { v, omega }
    }
}

/// Symmetric caps applied to velocity commands before they reach the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        VelocityLimits {
            v_max: 1.0,
            omega_max: 2.0,
        }
    }
}

impl VelocityLimits {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("v_max", self.v_max)?;
        ensure_positive("omega_max", self.omega_max)
    }

    /// Clamps a command to the caps. The flag is set when either component
    /// was limited.
    pub fn clamp(&self, cmd: VelocityCommand) -> (VelocityCommand, bool) {
        let v = cmd.v.clamp(-self.v_max, self.v_max);
        let omega = cmd.omega.clamp(-self.omega_max, self.omega_max);
        let saturated = v != cmd.v || omega != cmd.omega;
        (VelocityCommand { v, omega }, saturated)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Advances a pose by one explicit Euler step of the unicycle model.
pub fn step_unicycle(q: Pose2D, u: VelocityCommand, dt: f64) -> Result<Pose2D> {
    ensure_positive("dt", dt)?;
    q.validate()?;
    if !(u.v.is_finite() && u.omega.is_finite()) {
        return Err(Error::InvalidState(format!(
            "velocity command must be finite, got ({}, {})",
            u.v, u.omega
        )));
    }
    let (sin, cos) = q.theta.sin_cos();
    let next = Pose2D {
        x: q.x + cos * u.v * dt,
        y: q.y + sin * u.v * dt,
        theta: wrap_angle(q.theta + u.omega * dt),
    };
    next.validate()?;
    Ok(next)
}
