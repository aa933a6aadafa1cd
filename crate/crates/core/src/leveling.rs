//! Payload leveling law.
//!
//! Under a small rotation `(theta_x, theta_y)` of the payload, the mount at
//! `(x_i, y_i)` moves vertically by `theta_x * y_i + theta_y * x_i`. Stacking
//! the rows `[y_i, x_i]` gives the geometry matrix `B`, and the correction
//! applied to the pistons is `B * (-theta)` for a measured tilt `theta`.
//!
//! Sign convention shared by every module: a payload with orientation
//! `(theta_x, theta_y)` has its surface on `z = z0 + theta_x * y + theta_y * x`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Axis, Error, Result};

/// Angles beyond this leave the small-angle model.
pub const SMALL_ANGLE_LIMIT: f64 = std::f64::consts::PI / 6.0;

/// Default per-tick cap on a single piston correction, in meters.
pub const DEFAULT_STEP_CLAMP: f64 = 0.02;

/// Piston mount points in the payload frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountLayout {
    positions: Vec<[f64; 2]>,
}

impl MountLayout {
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter {
                name: "mounts",
                reason: "layout needs at least one mount".into(),
            });
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mounts",
                reason: "mount coordinates must be finite".into(),
            });
        }
        Ok(MountLayout { positions })
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn spread(&self, axis: usize) -> f64 {
        let (lo, hi) = self
            .positions
            .iter()
            .map(|p| p[axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    }
}

/// Payload roll (`theta_x`) and pitch (`theta_y`) in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Orientation {
    pub theta_x: f64,
    pub theta_y: f64,
}

impl Orientation {
    pub fn new(theta_x: f64, theta_y: f64) -> Self {
        Orientation { theta_x, theta_y }
    }

    pub fn is_small_angle(&self) -> bool {
        self.theta_x.abs() < SMALL_ANGLE_LIMIT && self.theta_y.abs() < SMALL_ANGLE_LIMIT
    }

    /// Combined tilt magnitude.
    pub fn tilt(&self) -> f64 {
        self.theta_x.hypot(self.theta_y)
    }
}

impl std::ops::Add for Orientation {
    type Output = Orientation;
    fn add(self, o: Orientation) -> Orientation {
        Orientation::new(self.theta_x + o.theta_x, self.theta_y + o.theta_y)
    }
}

impl std::ops::Neg for Orientation {
    type Output = Orientation;
    fn neg(self) -> Orientation {
        Orientation::new(-self.theta_x, -self.theta_y)
    }
}

/// The `n x 2` matrix mapping `(theta_x, theta_y)` to height changes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMatrix {
    rows: Vec<[f64; 2]>,
}

impl GeometryMatrix {
    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn apply(&self, theta: Orientation) -> Vec<f64> {
        self.rows.iter().map(|r| row_delta(*r, theta)).collect()
    }
}

#[inline]
fn row_delta(row: [f64; 2], theta: Orientation) -> f64 {
    row[0] * theta.theta_x + row[1] * theta.theta_y
}

pub fn geometry_matrix(layout: &MountLayout) -> GeometryMatrix {
    GeometryMatrix {
        rows: layout.positions.iter().map(|&[x, y]| [y, x]).collect(),
    }
}

/// Height change at every mount for a small payload rotation.
pub fn delta_lengths(layout: &MountLayout, theta: Orientation) -> Vec<f64> {
    geometry_matrix(layout).apply(theta)
}

pub fn mean_height(l_total: f64) -> Result<f64> {
    ensure_positive("l_total", l_total)?;
    Ok(l_total / 2.0)
}

/// Piston extensions for the whole team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PistonHeights {
    pub lengths: Vec<f64>,
    pub l_total: f64,
}

impl PistonHeights {
    pub fn new(lengths: Vec<f64>, l_total: f64) -> Result<Self> {
        ensure_positive("l_total", l_total)?;
        if let Some(bad) = lengths.iter().find(|l| !(0.0..=l_total).contains(*l)) {
            return Err(Error::InvalidState(format!(
                "piston length {bad} outside stroke [0, {l_total}]"
            )));
        }
        Ok(PistonHeights { lengths, l_total })
    }

    /// All pistons at half stroke.
    pub fn at_mean(n: usize, l_total: f64) -> Result<Self> {
        let mean = mean_height(l_total)?;
        Self::new(vec![mean; n], l_total)
    }

    pub fn l_mean(&self) -> f64 {
        self.l_total / 2.0
    }
}

/// Configuration of the iterative height update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelingConfig {
    /// Largest correction applied to one piston per update. Infinity gives
    /// the unclamped update.
    pub step_clamp: f64,
}

impl Default for LevelingConfig {
    fn default() -> Self {
        LevelingConfig {
            step_clamp: DEFAULT_STEP_CLAMP,
        }
    }
}

impl LevelingConfig {
    pub fn unclamped() -> Self {
        LevelingConfig {
            step_clamp: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_clamp > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "step_clamp",
                reason: format!("must be positive, got {}", self.step_clamp),
            })
        }
    }
}

/// Result of one height update for a single piston.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PistonUpdate {
    pub length: f64,
    pub step_clamped: bool,
    pub stroke_clamped: bool,
}

/// Result of one height update for all pistons.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightUpdate {
    pub heights: PistonHeights,
    pub step_clamped: Vec<bool>,
    pub stroke_clamped: Vec<bool>,
}

/// Updates one piston from its own geometry row. Depends on nothing else,
/// so robots can run it independently.
pub fn update_height_single(
    row: [f64; 2],
    prev: f64,
    measured: Orientation,
    l_total: f64,
    config: &LevelingConfig,
) -> PistonUpdate {
    let raw = row_delta(row, -measured);
    let delta = raw.clamp(-config.step_clamp, config.step_clamp);
    let unclamped = prev + delta;
    let length = unclamped.clamp(0.0, l_total);
    PistonUpdate {
        length,
        step_clamped: delta != raw,
        stroke_clamped: length != unclamped,
    }
}

/// One iteration of the leveling update: `L = clamp(L_prev + B * (-theta))`.
pub fn update_heights(
    prev: &PistonHeights,
    measured: Orientation,
    layout: &MountLayout,
    config: &LevelingConfig,
) -> Result<HeightUpdate> {
    if prev.lengths.len() != layout.len() {
        return Err(Error::InvalidState(format!(
            "{} piston lengths for {} mounts",
            prev.lengths.len(),
            layout.len()
        )));
    }
    if !(measured.theta_x.is_finite() && measured.theta_y.is_finite()) {
        return Err(Error::InvalidState("measured orientation must be finite".into()));
    }
    let b = geometry_matrix(layout);
    let mut lengths = Vec::with_capacity(layout.len());
    let mut step_clamped = Vec::with_capacity(layout.len());
    let mut stroke_clamped = Vec::with_capacity(layout.len());
    for (row, &l) in b.rows().iter().zip(&prev.lengths) {
        let u = update_height_single(*row, l, measured, prev.l_total, config);
        lengths.push(u.length);
        step_clamped.push(u.step_clamped);
        stroke_clamped.push(u.stroke_clamped);
    }
    Ok(HeightUpdate {
        heights: PistonHeights {
            lengths,
            l_total: prev.l_total,
        },
        step_clamped,
        stroke_clamped,
    })
}

/// Symmetric roll and pitch limits reachable on flat ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBounds {
    pub theta_x_min: f64,
    pub theta_x_max: f64,
    pub theta_y_min: f64,
    pub theta_y_max: f64,
}

impl AngleBounds {
    pub fn contains(&self, theta: Orientation) -> bool {
        (self.theta_x_min..=self.theta_x_max).contains(&theta.theta_x)
            && (self.theta_y_min..=self.theta_y_max).contains(&theta.theta_y)
    }
}

pub fn achievable_angle_bounds(layout: &MountLayout, l_total: f64) -> Result<AngleBounds> {
    ensure_positive("l_total", l_total)?;
    let sx = layout.spread(0);
    let sy = layout.spread(1);
    if sx <= 0.0 {
        return Err(Error::DegenerateLayout {
            axis: Axis::Pitch,
            reason: "all mounts share the same x coordinate".into(),
        });
    }
    if sy <= 0.0 {
        return Err(Error::DegenerateLayout {
            axis: Axis::Roll,
            reason: "all mounts share the same y coordinate".into(),
        });
    }
    let ty = l_total / sx;
    let tx = l_total / sy;
    Ok(AngleBounds {
        theta_x_min: -tx,
        theta_x_max: tx,
        theta_y_min: -ty,
        theta_y_max: ty,
    })
}

/// Outcome of [`controllability_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct Controllability {
    /// Numerical rank of the geometry matrix (0, 1 or 2).
    pub rank: usize,
    pub roll_actuated: bool,
    pub pitch_actuated: bool,
    /// Mounts lie on one line (or there are fewer than three), so the
    /// payload plane is not pinned down.
    pub collinear: bool,
}

impl Controllability {
    pub fn is_controllable(&self) -> bool {
        self.rank == 2 && !self.collinear
    }

    /// Converts a failed diagnosis into an error naming the weak axis.
    pub fn into_result(self) -> Result<()> {
        if self.is_controllable() {
            return Ok(());
        }
        let axis = if !self.roll_actuated {
            Axis::Roll
        } else if !self.pitch_actuated {
            Axis::Pitch
        } else {
            // Rank one with both columns non-zero: a mixed roll/pitch
            // direction is lost. Report roll.
            Axis::Roll
        };
        let reason = if self.rank < 2 {
            format!("geometry matrix has rank {}", self.rank)
        } else {
            "mounts are collinear".into()
        };
        Err(Error::DegenerateLayout { axis, reason })
    }
}

const RANK_TOL: f64 = 1e-9;

pub fn controllability_check(layout: &MountLayout) -> Controllability {
    let b = geometry_matrix(layout);
    let (mut syy, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for r in b.rows() {
        syy += r[0] * r[0];
        sxx += r[1] * r[1];
        sxy += r[0] * r[1];
    }
    let scale = syy.max(sxx).max(1.0);
    let roll_actuated = syy > RANK_TOL * scale;
    let pitch_actuated = sxx > RANK_TOL * scale;
    let gram = syy * sxx - sxy * sxy;
    let rank = if gram > RANK_TOL * scale * scale {
        2
    } else if roll_actuated || pitch_actuated {
        1
    } else {
        0
    };

    // Collinearity: the centered mount coordinates must span two dimensions.
    let n = layout.len() as f64;
    let (mx, my) = layout
        .positions()
        .iter()
        .fold((0.0, 0.0), |(ax, ay), p| (ax + p[0] / n, ay + p[1] / n));
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in layout.positions() {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    let cscale = cxx.max(cyy).max(1e-300);
    let collinear = layout.len() < 3 || cxx * cyy - cxy * cxy <= RANK_TOL * cscale * cscale;

    Controllability {
        rank,
        roll_actuated,
        pitch_actuated,
        collinear,
    }
}
