//! Geometric environment: terrain elevation, piston tips, the payload plane
//! and a rate-limited IMU.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::kinematics::Pose2D;
use crate::leveling::{MountLayout, Orientation};

/// Width of the blend that brings the cross slope of a half-plane ramp in
/// from zero at its start edge.
const EDGE_BLEND: f64 = 0.1;

/// Axis-aligned rectangle in which terrain queries are valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Arena {
            x_min: -50.0,
            x_max: 50.0,
            y_min: -50.0,
            y_max: 50.0,
        }
    }
}

impl Arena {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

/// Where an inclined plane applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// The whole arena.
    All,
    /// The half-plane `x >= origin.x`; ground is flat behind it.
    Ahead,
}

/// A plane rising along `+x` by `pitch` and along `+y` by `roll`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclinedPlane {
    pub slope_pitch: f64,
    pub slope_roll: f64,
    pub origin: [f64; 2],
    pub region: Region,
    /// Length of the incline along `x` for [`Region::Ahead`]; the surface
    /// stays at the top height beyond it.
    pub length: Option<f64>,
}

impl InclinedPlane {
    /// Pitch-only plank starting at `x_start`.
    pub fn plank(pitch: f64, x_start: f64) -> Self {
        InclinedPlane {
            slope_pitch: pitch,
            slope_roll: 0.0,
            origin: [x_start, 0.0],
            region: Region::Ahead,
            length: None,
        }
    }

    fn elevation(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.origin[0];
        let dy = y - self.origin[1];
        match self.region {
            Region::All => self.slope_pitch.tan() * dx + self.slope_roll.tan() * dy,
            Region::Ahead => {
                if dx <= 0.0 {
                    return 0.0;
                }
                let along = self.length.map_or(dx, |l| dx.min(l));
                let blend = (dx / EDGE_BLEND).min(1.0);
                self.slope_pitch.tan() * along + blend * self.slope_roll.tan() * dy
            }
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("slope_pitch", self.slope_pitch), ("slope_roll", self.slope_roll)] {
            if !(v.is_finite() && v.abs() < std::f64::consts::FRAC_PI_2) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("slope must lie in (-pi/2, pi/2), got {v}"),
                });
            }
        }
        if let Some(l) = self.length {
            ensure_positive("length", l)?;
        }
        Ok(())
    }
}

/// A band `y_min <= y < y_max` carrying its own plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBand {
    pub y_min: f64,
    pub y_max: f64,
    pub plane: InclinedPlane,
}

/// Regular elevation grid with bilinear interpolation between nodes.
///
/// Node `(r, c)` sits at `origin + (c * cell_size, r * cell_size)`, and
/// elevations are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: [f64; 2],
    data: Vec<f64>,
}

impl Heightmap {
    pub fn new(rows: usize, cols: usize, cell_size: f64, origin: [f64; 2], data: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidParameter {
                name: "heightmap",
                reason: format!("grid needs at least 2x2 nodes, got {rows}x{cols}"),
            });
        }
        ensure_positive("cell_size", cell_size)?;
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter {
                name: "heightmap",
                reason: format!("expected {} elevations, got {}", rows * cols, data.len()),
            });
        }
        if data.iter().chain(&origin).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "heightmap",
                reason: "elevations and origin must be finite".into(),
            });
        }
        Ok(Heightmap {
            rows,
            cols,
            cell_size,
            origin,
            data,
        })
    }

    /// Smooth pseudo-random relief built from a few seeded sinusoids.
    ///
    /// `amplitude` bounds the elevation magnitude and `wavelength` is the
    /// shortest wavelength used, so slopes stay below
    /// `2 * pi * amplitude / wavelength`.
    pub fn procedural(
        seed: u64,
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: [f64; 2],
        amplitude: f64,
        wavelength: f64,
    ) -> Result<Self> {
        use rand::Rng;
        ensure_positive("wavelength", wavelength)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        const WAVES: usize = 4;
        let waves: Vec<(f64, f64, f64, f64)> = (0..WAVES)
            .map(|_| {
                let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let lambda = wavelength * rng.random_range(1.0..2.5);
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let weight: f64 = rng.random_range(0.5..1.0);
                (dir, lambda, phase, weight)
            })
            .collect();
        let total: f64 = waves.iter().map(|w| w.3).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = origin[0] + c as f64 * cell_size;
                let y = origin[1] + r as f64 * cell_size;
                let z: f64 = waves
                    .iter()
                    .map(|&(dir, lambda, phase, weight)| {
                        let s = x * dir.cos() + y * dir.sin();
                        weight * (std::f64::consts::TAU * s / lambda + phase).sin()
                    })
                    .sum();
                data.push(amplitude * z / total);
            }
        }
        Heightmap::new(rows, cols, cell_size, origin, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn extent(&self) -> Arena {
        Arena {
            x_min: self.origin[0],
            x_max: self.origin[0] + (self.cols - 1) as f64 * self.cell_size,
            y_min: self.origin[1],
            y_max: self.origin[1] + (self.rows - 1) as f64 * self.cell_size,
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn elevation(&self, x: f64, y: f64) -> Result<f64> {
        if !self.extent().contains(x, y) {
            return Err(Error::OutOfBounds { x, y });
        }
        let gx = (x - self.origin[0]) / self.cell_size;
        let gy = (y - self.origin[1]) / self.cell_size;
        let c0 = (gx.floor() as usize).min(self.cols - 2);
        let r0 = (gy.floor() as usize).min(self.rows - 2);
        let fx = gx - c0 as f64;
        let fy = gy - r0 as f64;
        let z00 = self.at(r0, c0);
        let z01 = self.at(r0, c0 + 1);
        let z10 = self.at(r0 + 1, c0);
        let z11 = self.at(r0 + 1, c0 + 1);
        let bottom = z00 + (z01 - z00) * fx;
        let top = z10 + (z11 - z10) * fx;
        Ok(bottom + (top - bottom) * fy)
    }

    /// Parses the plain-text grid format:
    ///
    /// ```text
    /// # comment
    /// rows 3
    /// cols 4
    /// cell_size 0.5
    /// origin -1.0 -2.0
    /// 0.0 0.1 0.2 0.3
    /// ...
    /// ```
    ///
    /// Header lines come first in any order, then `rows * cols` elevations
    /// in row-major order, whitespace separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = None;
        let mut cols = None;
        let mut cell = None;
        let mut origin = None;
        let mut data = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fmt_err = |reason: String| Error::HeightmapFormat { line: line_no, reason };
            let mut words = line.split_whitespace();
            let head = words.next().unwrap_or_default();
            let num = |w: &str| {
                w.parse::<f64>()
                    .map_err(|_| fmt_err(format!("`{w}` is not a number")))
            };
            match head {
                "rows" | "cols" => {
                    if !data.is_empty() {
                        return Err(fmt_err(format!("`{head}` after elevation data")));
                    }
                    let v: usize = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| fmt_err(format!("`{head}` needs a positive integer")))?;
                    if head == "rows" {
                        rows = Some(v);
                    } else {
                        cols = Some(v);
                    }
                }
                "cell_size" => {
                    let w = words.next().ok_or_else(|| fmt_err("`cell_size` needs a value".into()))?;
                    cell = Some(num(w)?);
                }
                "origin" => {
                    let x = words.next().ok_or_else(|| fmt_err("`origin` needs two values".into()))?;
                    let y = words.next().ok_or_else(|| fmt_err("`origin` needs two values".into()))?;
                    origin = Some([num(x)?, num(y)?]);
                }
                _ => {
                    if rows.is_none() || cols.is_none() || cell.is_none() || origin.is_none() {
                        return Err(fmt_err(
                            "elevation data before the header (rows, cols, cell_size, origin) is complete".into(),
                        ));
                    }
                    for w in line.split_whitespace() {
                        data.push(num(w)?);
                    }
                    if let (Some(r), Some(c)) = (rows, cols) {
                        if data.len() > r * c {
                            return Err(fmt_err(format!("more than {} elevations", r * c)));
                        }
                    }
                }
            }
            if words.next().is_some() && matches!(head, "rows" | "cols" | "cell_size" | "origin") {
                return Err(fmt_err(format!("trailing tokens after `{head}`")));
            }
        }
        let missing = |what: &str| Error::HeightmapFormat {
            line: last_line,
            reason: format!("missing `{what}` header"),
        };
        let rows = rows.ok_or_else(|| missing("rows"))?;
        let cols = cols.ok_or_else(|| missing("cols"))?;
        let cell = cell.ok_or_else(|| missing("cell_size"))?;
        let origin = origin.ok_or_else(|| missing("origin"))?;
        if data.len() != rows * cols {
            return Err(Error::HeightmapFormat {
                line: last_line,
                reason: format!("expected {} elevations, found {}", rows * cols, data.len()),
            });
        }
        Heightmap::new(rows, cols, cell, origin, data).map_err(|e| Error::HeightmapFormat {
            line: last_line,
            reason: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows {}", self.rows);
        let _ = writeln!(s, "cols {}", self.cols);
        let _ = writeln!(s, "cell_size {}", self.cell_size);
        let _ = writeln!(s, "origin {} {}", self.origin[0], self.origin[1]);
        for row in self.data.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TerrainKind {
    Flat,
    InclinedPlane(InclinedPlane),
    /// Bands are tried in order; ground outside every band is flat.
    MultiPlane(Vec<PlaneBand>),
    Heightmap(Heightmap),
}

/// Elevation field `z(x, y)` over a bounded arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub kind: TerrainKind,
    pub arena: Arena,
}

impl Terrain {
    pub fn flat() -> Self {
        Terrain {
            kind: TerrainKind::Flat,
            arena: Arena::default(),
        }
    }

    pub fn inclined(plane: InclinedPlane) -> Self {
        Terrain {
            kind: TerrainKind::InclinedPlane(plane),
            arena: Arena::default(),
        }
    }

    pub fn multi_plane(bands: Vec<PlaneBand>) -> Self {
        Terrain {
            kind: TerrainKind::MultiPlane(bands),
            arena: Arena::default(),
        }
    }

    /// The arena is the grid extent.
    pub fn heightmap(map: Heightmap) -> Self {
        let arena = map.extent();
        Terrain {
            kind: TerrainKind::Heightmap(map),
            arena,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.arena;
        if !(a.x_min < a.x_max && a.y_min < a.y_max) {
            return Err(Error::InvalidParameter {
                name: "arena",
                reason: "arena must have positive extent".into(),
            });
        }
        match &self.kind {
            TerrainKind::Flat | TerrainKind::Heightmap(_) => Ok(()),
            TerrainKind::InclinedPlane(p) => p.validate(),
            TerrainKind::MultiPlane(bands) => {
                for b in bands {
                    if !(b.y_min < b.y_max) {
                        return Err(Error::InvalidParameter {
                            name: "bands",
                            reason: format!("band needs y_min < y_max, got [{}, {})", b.y_min, b.y_max),
                        });
                    }
                    b.plane.validate()?;
                }
                Ok(())
            }
        }
    }
}

pub fn elevation(terrain: &Terrain, x: f64, y: f64) -> Result<f64> {
    if !(x.is_finite() && y.is_finite()) || !terrain.arena.contains(x, y) {
        return Err(Error::OutOfBounds { x, y });
    }
    match &terrain.kind {
        TerrainKind::Flat => Ok(0.0),
        TerrainKind::InclinedPlane(p) => Ok(p.elevation(x, y)),
        TerrainKind::MultiPlane(bands) => Ok(bands
            .iter()
            .find(|b| y >= b.y_min && y < b.y_max)
            .map_or(0.0, |b| b.plane.elevation(x, y))),
        TerrainKind::Heightmap(map) => map.elevation(x, y),
    }
}

/// World-frame position of a payload-frame point given the payload's
/// planar placement.
pub fn mount_world_position(payload: Pose2D, mount: [f64; 2]) -> [f64; 2] {
    let (s, c) = payload.theta.sin_cos();
    [
        payload.x + c * mount[0] - s * mount[1],
        payload.y + s * mount[0] + c * mount[1],
    ]
}

/// Top of a piston rod. The rod is treated as vertical and stands on the
/// ground under the robot.
pub fn piston_tip(
    robot: Pose2D,
    mount: [f64; 2],
    payload: Pose2D,
    terrain: &Terrain,
    piston_length: f64,
    chassis_height: f64,
) -> Result<[f64; 3]> {
    let ground = elevation(terrain, robot.x, robot.y)?;
    let [x, y] = mount_world_position(payload, mount);
    Ok([x, y, ground + chassis_height + piston_length])
}

/// Rod tips supporting the payload, one per robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadSupport {
    pub tips: Vec<[f64; 3]>,
}

/// Least-squares plane `z = z0 + g_y * y + g_x * x` through the tips,
/// indexed by mount coordinates. Returns `(z0, g_x, g_y)`.
pub fn fit_support_plane(support: &PayloadSupport, layout: &MountLayout) -> Result<(f64, f64, f64)> {
    let n = layout.len();
    if n < 3 {
        return Err(Error::UnderdeterminedPlane(format!("need at least 3 supports, got {n}")));
    }
    if support.tips.len() != n {
        return Err(Error::UnderdeterminedPlane(format!(
            "{} tips for {} mounts",
            support.tips.len(),
            n
        )));
    }
    if support.tips.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("piston tips must be finite".into()));
    }
    let inv_n = 1.0 / n as f64;
    let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
    for (p, t) in layout.positions().iter().zip(&support.tips) {
        mx += p[0] * inv_n;
        my += p[1] * inv_n;
        mz += t[2] * inv_n;
    }
    let (mut sxx, mut syy, mut sxy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, t) in layout.positions().iter().zip(&support.tips) {
        let (dx, dy, dz) = (p[0] - mx, p[1] - my, t[2] - mz);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx * syy).max(1e-300);
    if det <= 1e-12 * scale || sxx == 0.0 || syy == 0.0 {
        return Err(Error::UnderdeterminedPlane("mounts are collinear".into()));
    }
    let gx = (sxz * syy - syz * sxy) / det;
    let gy = (syz * sxx - sxz * sxy) / det;
    let z0 = mz - gx * mx - gy * my;
    Ok((z0, gx, gy))
}

/// Payload roll and pitch from the plane through the rod tips.
pub fn payload_orientation(support: &PayloadSupport, layout: &MountLayout) -> Result<Orientation> {
    let (_, gx, gy) = fit_support_plane(support, layout)?;
    Ok(Orientation::new(gy.atan(), gx.atan()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuModel {
    /// Sample rate, Hz.
    pub rate: f64,
    /// Standard deviation of additive Gaussian noise per axis, rad.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for ImuModel {
    fn default() -> Self {
        ImuModel {
            rate: 50.0,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl ImuModel {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("imu.rate", self.rate)?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "imu.noise_std",
                reason: format!("must be finite and non-negative, got {}", self.noise_std),
            });
        }
        Ok(())
    }
}

/// Time comparisons are made in sample periods with this slack, so ticks
/// that land on a sample boundary up to rounding still fire.
const SAMPLE_SLACK: f64 = 1e-6;

/// Stateful IMU sampler emitting at most one measurement per period.
#[derive(Debug, Clone)]
pub struct ImuSampler {
    model: ImuModel,
    next_index: u64,
    last_t: f64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl ImuSampler {
    pub fn new(model: ImuModel) -> Result<Self> {
        model.validate()?;
        let noise = if model.noise_std > 0.0 {
            Some(Normal::new(0.0, model.noise_std).map_err(|e| Error::InvalidParameter {
                name: "imu.noise_std",
                reason: e.to_string(),
            })?)
        } else {
            None
        };
        Ok(ImuSampler {
            model,
            next_index: 0,
            last_t: f64::NEG_INFINITY,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            noise,
        })
    }

    pub fn model(&self) -> &ImuModel {
        &self.model
    }

    /// Returns a measurement when `t` has reached the next sample instant.
    pub fn sample(&mut self, truth: Orientation, t: f64) -> Result<Option<Orientation>> {
        if !t.is_finite() || t < self.last_t {
            return Err(Error::InvalidState(format!(
                "IMU query times must be non-decreasing, got {t} after {}",
                self.last_t
            )));
        }
        self.last_t = t;
        let periods = t * self.model.rate;
        if periods + SAMPLE_SLACK < self.next_index as f64 {
            return Ok(None);
        }
        self.next_index = (periods + SAMPLE_SLACK).floor() as u64 + 1;
        let measured = match &self.noise {
            Some(n) => Orientation::new(
                truth.theta_x + n.sample(&mut self.rng),
                truth.theta_y + n.sample(&mut self.rng),
            ),
            None => truth,
        };
        Ok(Some(measured))
    }
}

/// Convenience wrapper with the signature used by the control loop.
pub fn imu_sample(truth: Orientation, t: f64, sampler: &mut ImuSampler) -> Result<Option<Orientation>> {
    sampler.sample(truth, t)
}
