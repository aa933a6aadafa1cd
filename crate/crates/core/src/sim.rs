//! Fixed-step closed-loop simulation.
//!
//! Every tick runs, in order: leader trajectory, follower formation
//! control, pose integration, piston tips and payload plane, IMU sampling
//! with the leveling update, piston PID and actuation, and logging.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::formation::{desired_follower_pose, follower_control, FollowerSpec, FormationGains};
use crate::kinematics::{step_unicycle, wrap_angle, Pose2D, VelocityCommand, VelocityLimits, DEFAULT_DT};
use crate::leveling::{
    controllability_check, geometry_matrix, update_height_single, LevelingConfig, MountLayout, Orientation,
};
use crate::piston::{actuate, pid_step, PidGains, PistonState, DEFAULT_SLEW_LIMIT};
use crate::world::{payload_orientation, piston_tip, ImuModel, ImuSampler, PayloadSupport, Terrain};

/// Startup ends once every piston is this close to half stroke.
pub const STARTUP_TOLERANCE: f64 = 1e-3;

/// Tilt threshold used for settling time, rad (0.5 deg).
pub const SETTLE_TILT: f64 = 0.5 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower(FollowerSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub initial: Pose2D,
    /// Piston mount in the payload frame.
    pub mount: [f64; 2],
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PistonConfig {
    pub l_total: f64,
    pub slew_limit: f64,
    pub chassis_height: f64,
}

impl Default for PistonConfig {
    fn default() -> Self {
        PistonConfig {
            l_total: 0.25,
            slew_limit: DEFAULT_SLEW_LIMIT,
            chassis_height: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 2]>,
    pub cruise_speed: f64,
    pub capture_radius: f64,
    /// Proportional steering gain towards the active waypoint, 1/s.
    pub heading_gain: f64,
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory {
            waypoints: Vec::new(),
            cruise_speed: 0.1,
            capture_radius: 0.05,
            heading_gain: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelingSettings {
    /// With leveling off the pistons hold half stroke after startup.
    pub enabled: bool,
    pub config: LevelingConfig,
}

impl Default for LevelingSettings {
    fn default() -> Self {
        LevelingSettings {
            enabled: true,
            config: LevelingConfig::default(),
        }
    }
}

/// Physical parameters carried for reference; the kinematic model does not
/// use them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub payload_mass: f64,
    pub robot_mass: f64,
    /// Length x width, meters.
    pub robot_dims: [f64; 2],
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            payload_mass: 5.0,
            robot_mass: 5.0,
            robot_dims: [0.30, 0.20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub terrain: Terrain,
    pub robots: Vec<RobotConfig>,
    pub formation_gains: FormationGains,
    pub velocity_limits: VelocityLimits,
    pub pid_gains: PidGains,
    pub piston: PistonConfig,
    pub leveling: LevelingSettings,
    pub imu: ImuModel,
    pub trajectory: Trajectory,
    pub duration: f64,
    pub dt: f64,
    pub metadata: Metadata,
}

impl Scenario {
    /// Places the robots under a payload at `payload` and derives follower
    /// specs from the mount offsets. Robot `leader` leads.
    pub fn formation(
        name: &str,
        terrain: Terrain,
        payload: Pose2D,
        mounts: &[[f64; 2]],
        leader: usize,
    ) -> Result<Self> {
        if leader >= mounts.len() {
            return Err(Error::Scenario(format!(
                "leader index {leader} out of range for {} robots",
                mounts.len()
            )));
        }
        let robots = formation_robots(payload, mounts, leader)?;
        Ok(Scenario {
            name: name.to_string(),
            terrain,
            robots,
            formation_gains: FormationGains::default(),
            velocity_limits: VelocityLimits::default(),
            pid_gains: PidGains::default(),
            piston: PistonConfig::default(),
            leveling: LevelingSettings::default(),
            imu: ImuModel::default(),
            trajectory: Trajectory::default(),
            duration: 10.0,
            dt: DEFAULT_DT,
            metadata: Metadata::default(),
        })
    }

    pub fn layout(&self) -> Result<MountLayout> {
        MountLayout::new(self.robots.iter().map(|r| r.mount).collect())
    }

    pub fn leader_index(&self) -> Result<usize> {
        let leaders: Vec<usize> = self
            .robots
            .iter()
            .enumerate()
            .filter(|(_, r)| r.role == Role::Leader)
            .map(|(i, _)| i)
            .collect();
        match leaders.as_slice() {
            [one] => Ok(*one),
            _ => Err(Error::Scenario(format!(
                "exactly one leader required, found {}",
                leaders.len()
            ))),
        }
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("dt", self.dt)?;
        ensure_positive("duration", self.duration)?;
        if self.duration < self.dt {
            return Err(Error::Scenario(format!(
                "duration {} shorter than one tick {}",
                self.duration, self.dt
            )));
        }
        self.leader_index()?;
        for r in &self.robots {
            r.initial.validate()?;
            if let Role::Follower(spec) = r.role {
                spec.validate()?;
            }
        }
        controllability_check(&self.layout()?).into_result()?;
        self.terrain.validate()?;
        self.formation_gains.validate()?;
        self.velocity_limits.validate()?;
        self.pid_gains.validate()?;
        ensure_positive("piston.l_total", self.piston.l_total)?;
        ensure_positive("piston.slew_limit", self.piston.slew_limit)?;
        if !(self.piston.chassis_height.is_finite() && self.piston.chassis_height >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "piston.chassis_height",
                reason: "must be finite and non-negative".into(),
            });
        }
        self.leveling.config.validate()?;
        self.imu.validate()?;
        let per_tick = 1.0 / (self.imu.rate * self.dt);
        if per_tick < 1.0 - 1e-9 || (per_tick - per_tick.round()).abs() > 1e-6 {
            return Err(Error::Scenario(format!(
                "IMU period {} s must be a whole number of ticks of {} s",
                1.0 / self.imu.rate,
                self.dt
            )));
        }
        let t = &self.trajectory;
        if t.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Scenario("waypoints must be finite".into()));
        }
        if !(t.cruise_speed.is_finite() && t.cruise_speed >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "trajectory.cruise_speed",
                reason: "must be finite and non-negative".into(),
            });
        }
        ensure_positive("trajectory.capture_radius", t.capture_radius)?;
        ensure_positive("trajectory.heading_gain", t.heading_gain)?;
        Ok(())
    }
}

/// Robots placed at their mounts under a payload, all facing the payload
/// heading.
pub fn formation_robots(payload: Pose2D, mounts: &[[f64; 2]], leader: usize) -> Result<Vec<RobotConfig>> {
    let lead = mounts[leader];
    mounts
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let [x, y] = crate::world::mount_world_position(payload, m);
            let role = if i == leader {
                Role::Leader
            } else {
                Role::Follower(FollowerSpec::from_offset([m[0] - lead[0], m[1] - lead[1]])?)
            };
            Ok(RobotConfig {
                initial: Pose2D::new(x, y, payload.theta)?,
                mount: m,
                role,
            })
        })
        .collect()
}

/// Waypoint follower for the leader.
#[derive(Debug, Clone, Default)]
pub struct WaypointTracker {
    active: usize,
}

impl WaypointTracker {
    pub fn active(&self) -> usize {
        self.active
    }

    pub fn command(&mut self, traj: &Trajectory, pose: Pose2D) -> VelocityCommand {
        while let Some(wp) = traj.waypoints.get(self.active) {
            let dist = (wp[0] - pose.x).hypot(wp[1] - pose.y);
            if dist <= traj.capture_radius {
                self.active += 1;
            } else {
                break;
            }
        }
        leader_trajectory(&traj.waypoints[self.active.min(traj.waypoints.len())..], traj, pose)
    }
}

/// Pursuit command towards the first of `remaining`; zero once nothing is
/// left or the last waypoint is within the capture radius.
pub fn leader_trajectory(remaining: &[[f64; 2]], traj: &Trajectory, pose: Pose2D) -> VelocityCommand {
    let Some(wp) = remaining.first() else {
        return VelocityCommand::ZERO;
    };
    let dx = wp[0] - pose.x;
    let dy = wp[1] - pose.y;
    let dist = dx.hypot(dy);
    if remaining.len() == 1 && dist <= traj.capture_radius {
        return VelocityCommand::ZERO;
    }
    let heading_err = wrap_angle(dy.atan2(dx) - pose.theta);
    VelocityCommand {
        v: traj.cruise_speed * heading_err.cos().max(0.0),
        omega: traj.heading_gain * heading_err,
    }
}

/// Bit flags recorded per robot per tick.
pub mod flags {
    pub const VELOCITY: u32 = 1;
    pub const SLEW: u32 = 1 << 1;
    pub const STROKE: u32 = 1 << 2;
    pub const LEVEL_STEP: u32 = 1 << 3;
    pub const LEVEL_STROKE: u32 = 1 << 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Pistons rising to half stroke.
    Startup,
    Leveling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub pose: Pose2D,
    pub length: f64,
    pub target: f64,
    pub command: VelocityCommand,
    /// Distance to the desired formation slot; zero for the leader.
    pub formation_error: f64,
    pub flags: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub phase: Phase,
    pub truth: Orientation,
    /// Latest IMU measurement (held between samples).
    pub measured: Orientation,
    pub robots: Vec<RobotRecord>,
}

/// Options that change how a run is executed without changing the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Evaluate per-robot control on the rayon pool.
    pub parallel: bool,
}

struct RobotState {
    pose: Pose2D,
    piston: PistonState,
}

/// Owns all mutable simulation state.
pub struct Engine<'a> {
    scenario: &'a Scenario,
    layout: MountLayout,
    rows: Vec<[f64; 2]>,
    leader: usize,
    robots: Vec<RobotState>,
    tracker: WaypointTracker,
    imu: ImuSampler,
    measured: Orientation,
    phase: Phase,
    tick: u64,
    options: RunOptions,
}

impl<'a> Engine<'a> {
    pub fn new(scenario: &'a Scenario, options: RunOptions) -> Result<Self> {
        scenario.validate()?;
        let layout = scenario.layout()?;
        let rows = geometry_matrix(&layout).rows().to_vec();
        let leader = scenario.leader_index()?;
        let cap = scenario.pid_gains.integral_cap(scenario.piston.l_total);
        let robots = scenario
            .robots
            .iter()
            .map(|r| {
                let mut piston = PistonState::new(0.0, scenario.piston.l_total, scenario.piston.slew_limit, cap)?;
                piston.target = scenario.piston.l_total / 2.0;
                Ok(RobotState {
                    pose: r.initial,
                    piston,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            scenario,
            layout,
            rows,
            leader,
            robots,
            tracker: WaypointTracker::default(),
            imu: ImuSampler::new(scenario.imu)?,
            measured: Orientation::default(),
            phase: Phase::Startup,
            tick: 0,
            options,
        })
    }

    fn fail(&self, robot: usize, e: Error) -> Error {
        Error::Simulation {
            tick: self.tick,
            t: self.tick as f64 * self.scenario.dt,
            robot,
            source: Box::new(e),
        }
    }

    /// Planar placement of the payload frame, carried by the leader.
    pub fn payload_pose(&self) -> Pose2D {
        let lead = self.robots[self.leader].pose;
        let m = self.layout.positions()[self.leader];
        let (s, c) = lead.theta.sin_cos();
        Pose2D {
            x: lead.x - (c * m[0] - s * m[1]),
            y: lead.y - (s * m[0] + c * m[1]),
            theta: lead.theta,
        }
    }

    fn support(&self) -> Result<PayloadSupport> {
        let payload = self.payload_pose();
        let sc = self.scenario;
        let tips = self
            .robots
            .iter()
            .enumerate()
            .map(|(i, r)| {
                piston_tip(
                    r.pose,
                    sc.robots[i].mount,
                    payload,
                    &sc.terrain,
                    r.piston.length,
                    sc.piston.chassis_height,
                )
                .map_err(|e| self.fail(i, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PayloadSupport { tips })
    }

    pub fn true_orientation(&self) -> Result<Orientation> {
        payload_orientation(&self.support()?, &self.layout).map_err(|e| self.fail(self.leader, e))
    }

    /// Advances one tick and returns its record.
    pub fn step(&mut self) -> Result<LogRecord> {
        let sc = self.scenario;
        let dt = sc.dt;
        let n = self.robots.len();
        let mut flag = vec![0u32; n];

        // 1. leader command
        let leader_pose = self.robots[self.leader].pose;
        let leader_cmd = if self.phase == Phase::Startup {
            VelocityCommand::ZERO
        } else {
            let raw = self.tracker.command(&sc.trajectory, leader_pose);
            let (cmd, sat) = sc.velocity_limits.clamp(raw);
            if sat {
                flag[self.leader] |= flags::VELOCITY;
            }
            cmd
        };

        // 2. follower commands
        let follower_cmd = |i: usize| -> (VelocityCommand, bool) {
            match sc.robots[i].role {
                Role::Leader => (leader_cmd, false),
                Role::Follower(spec) => follower_control(
                    leader_pose,
                    leader_cmd,
                    self.robots[i].pose,
                    spec,
                    &sc.formation_gains,
                    &sc.velocity_limits,
                ),
            }
        };
        let commands: Vec<(VelocityCommand, bool)> = if self.options.parallel {
            (0..n).into_par_iter().map(follower_cmd).collect()
        } else {
            (0..n).map(follower_cmd).collect()
        };
        for (i, (_, sat)) in commands.iter().enumerate() {
            if *sat {
                flag[i] |= flags::VELOCITY;
            }
        }

        // 3. poses
        for i in 0..n {
            let next = step_unicycle(self.robots[i].pose, commands[i].0, dt).map_err(|e| self.fail(i, e))?;
            self.robots[i].pose = next;
        }

        // 4. payload from the rod tips
        let truth = self.true_orientation()?;
        let t = (self.tick + 1) as f64 * dt;

        // 5. IMU and leveling targets
        let sample = self.imu.sample(truth, t).map_err(|e| self.fail(self.leader, e))?;
        if let Some(m) = sample {
            self.measured = m;
        }
        if self.phase == Phase::Startup {
            let mean = sc.piston.l_total / 2.0;
            if self
                .robots
                .iter()
                .all(|r| (r.piston.length - mean).abs() <= STARTUP_TOLERANCE)
            {
                self.phase = Phase::Leveling;
            }
        } else if let (Some(m), true) = (sample, sc.leveling.enabled) {
            // Corrections accumulate on the previous targets.
            for (i, r) in self.robots.iter_mut().enumerate() {
                let u = update_height_single(self.rows[i], r.piston.target, m, sc.piston.l_total, &sc.leveling.config);
                r.piston.target = u.length;
                if u.step_clamped {
                    flag[i] |= flags::LEVEL_STEP;
                }
                if u.stroke_clamped {
                    flag[i] |= flags::LEVEL_STROKE;
                }
            }
        }

        // 6. pistons
        let gains = sc.pid_gains;
        let drive = |r: &mut RobotState| -> Result<u32> {
            let out = pid_step(&mut r.piston, &gains, dt)?;
            let f = actuate(&mut r.piston, out.command, dt)?;
            Ok(if f.slew_clamped { flags::SLEW } else { 0 } | if f.stroke_clamped { flags::STROKE } else { 0 })
        };
        let piston_flags: Vec<Result<u32>> = if self.options.parallel {
            self.robots.par_iter_mut().map(drive).collect()
        } else {
            self.robots.iter_mut().map(drive).collect()
        };
        for (i, f) in piston_flags.into_iter().enumerate() {
            flag[i] |= f.map_err(|e| self.fail(i, e))?;
        }

        // 7. record
        let leader_now = self.robots[self.leader].pose;
        let robots = self
            .robots
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let formation_error = match sc.robots[i].role {
                    Role::Leader => 0.0,
                    Role::Follower(spec) => {
                        let d = desired_follower_pose(leader_now, spec);
                        (d.x - r.pose.x).hypot(d.y - r.pose.y)
                    }
                };
                RobotRecord {
                    pose: r.pose,
                    length: r.piston.length,
                    target: r.piston.target,
                    command: commands[i].0,
                    formation_error,
                    flags: flag[i],
                }
            })
            .collect();
        self.tick += 1;
        Ok(LogRecord {
            t,
            phase: self.phase,
            truth,
            measured: self.measured,
            robots,
        })
    }
}

pub fn run(scenario: &Scenario) -> Result<Vec<LogRecord>> {
    run_with(scenario, RunOptions::default())
}

pub fn run_with(scenario: &Scenario, options: RunOptions) -> Result<Vec<LogRecord>> {
    let mut engine = Engine::new(scenario, options)?;
    let ticks = scenario.ticks();
    let mut log = Vec::with_capacity(ticks as usize);
    for _ in 0..ticks {
        log.push(engine.step()?);
    }
    Ok(log)
}

/// CSV header for `n` robots.
pub fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = ["t", "phase", "roll", "pitch", "roll_imu", "pitch_imu"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..n {
        for c in ["x", "y", "theta", "length", "target", "v", "omega", "formation_error", "flags"] {
            cols.push(format!("{c}_{i}"));
        }
    }
    cols.join(",")
}

/// Writes the log as CSV with a header row.
pub fn write_csv(log: &[LogRecord]) -> String {
    let n = log.first().map_or(0, |r| r.robots.len());
    let mut out = csv_header(n);
    out.push('\n');
    for r in log {
        let phase = match r.phase {
            Phase::Startup => "startup",
            Phase::Leveling => "leveling",
        };
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.t, phase, r.truth.theta_x, r.truth.theta_y, r.measured.theta_x, r.measured.theta_y
        );
        for b in &r.robots {
            let _ = write!(
                out,
                ",{},{},{},{},{},{},{},{},{}",
                b.pose.x,
                b.pose.y,
                b.pose.theta,
                b.length,
                b.target,
                b.command.v,
                b.command.omega,
                b.formation_error,
                b.flags
            );
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Start of the evaluation window (first leveling tick), s.
    pub window_start: f64,
    pub samples: usize,
    pub max_abs_roll: f64,
    pub max_abs_pitch: f64,
    pub rms_tilt: f64,
    /// Time from window start after which tilt stays within 0.5 deg.
    /// Infinite if it never settles.
    pub settling_time: f64,
    pub mean_formation_error: f64,
    pub velocity_saturations: usize,
    pub slew_saturations: usize,
    pub stroke_saturations: usize,
    pub level_step_clamps: usize,
    pub level_stroke_clamps: usize,
}

impl Metrics {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "window_start={}", self.window_start);
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "max_abs_roll={}", self.max_abs_roll);
        let _ = writeln!(s, "max_abs_pitch={}", self.max_abs_pitch);
        let _ = writeln!(s, "rms_tilt={}", self.rms_tilt);
        let _ = writeln!(s, "settling_time={}", self.settling_time);
        let _ = writeln!(s, "mean_formation_error={}", self.mean_formation_error);
        let _ = writeln!(s, "velocity_saturations={}", self.velocity_saturations);
        let _ = writeln!(s, "slew_saturations={}", self.slew_saturations);
        let _ = writeln!(s, "stroke_saturations={}", self.stroke_saturations);
        let _ = writeln!(s, "level_step_clamps={}", self.level_step_clamps);
        let _ = writeln!(s, "level_stroke_clamps={}", self.level_stroke_clamps);
        s
    }
}

/// Metrics over the leveling window, i.e. from the first record past the
/// startup ramp. A log that never leaves startup is evaluated whole.
pub fn summarize(log: &[LogRecord]) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let start = log.iter().position(|r| r.phase == Phase::Leveling).unwrap_or(0);
    let window = &log[start..];
    let window_start = window[0].t;
    let mut m = Metrics {
        window_start,
        samples: window.len(),
        max_abs_roll: 0.0,
        max_abs_pitch: 0.0,
        rms_tilt: 0.0,
        settling_time: 0.0,
        mean_formation_error: 0.0,
        velocity_saturations: 0,
        slew_saturations: 0,
        stroke_saturations: 0,
        level_step_clamps: 0,
        level_stroke_clamps: 0,
    };
    let mut sq = 0.0;
    let mut form_sum = 0.0;
    let mut form_n = 0usize;
    for r in window {
        m.max_abs_roll = m.max_abs_roll.max(r.truth.theta_x.abs());
        m.max_abs_pitch = m.max_abs_pitch.max(r.truth.theta_y.abs());
        sq += r.truth.tilt().powi(2);
        for b in &r.robots {
            if b.formation_error > 0.0 {
                form_sum += b.formation_error;
            }
            let count = |bit: u32| usize::from(b.flags & bit != 0);
            m.velocity_saturations += count(flags::VELOCITY);
            m.slew_saturations += count(flags::SLEW);
            m.stroke_saturations += count(flags::STROKE);
            m.level_step_clamps += count(flags::LEVEL_STEP);
            m.level_stroke_clamps += count(flags::LEVEL_STROKE);
        }
        form_n += r.robots.len().saturating_sub(1);
    }
    m.rms_tilt = (sq / window.len() as f64).sqrt();
    m.mean_formation_error = if form_n > 0 { form_sum / form_n as f64 } else { 0.0 };
    m.settling_time = match window.iter().rposition(|r| r.truth.tilt() > SETTLE_TILT) {
        None => 0.0,
        Some(i) if i + 1 < window.len() => window[i + 1].t - window_start,
        Some(_) => f64::INFINITY,
    };
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Terrain;

    fn record(t: f64, tilt: f64) -> LogRecord {
        LogRecord {
            t,
            phase: Phase::Leveling,
            truth: Orientation::new(tilt, 0.0),
            measured: Orientation::new(tilt, 0.0),
            robots: vec![],
        }
    }

    #[test]
    fn trajectory_examples() {
        let traj = Trajectory {
            waypoints: vec![[2.0, 0.0]],
            ..Default::default()
        };
        let at_goal = Pose2D::new(2.0, 0.0, 0.0).unwrap();
        assert_eq!(leader_trajectory(&traj.waypoints, &traj, at_goal), VelocityCommand::ZERO);

        let c = leader_trajectory(&traj.waypoints, &traj, Pose2D::default());
        assert_eq!(c.omega, 0.0);
        assert_eq!(c.v, traj.cruise_speed);

        let left = Trajectory {
            waypoints: vec![[0.0, 2.0]],
            ..Default::default()
        };
        assert!(leader_trajectory(&left.waypoints, &left, Pose2D::default()).omega > 0.0);
        assert_eq!(leader_trajectory(&[], &traj, Pose2D::default()), VelocityCommand::ZERO);
    }

    #[test]
    fn tracker_switches_waypoints() {
        let traj = Trajectory {
            waypoints: vec![[0.01, 0.0], [1.0, 1.0]],
            ..Default::default()
        };
        let mut tr = WaypointTracker::default();
        let c = tr.command(&traj, Pose2D::default());
        assert_eq!(tr.active(), 1);
        assert!(c.omega > 0.0);
    }

    #[test]
    fn summarize_examples() {
        assert_eq!(summarize(&[]), Err(Error::EmptyLog));

        let flat: Vec<_> = (0..100).map(|k| record(k as f64 * 0.02, 0.0)).collect();
        let m = summarize(&flat).unwrap();
        assert_eq!(m.rms_tilt, 0.0);
        assert_eq!(m.settling_time, 0.0);

        let one_deg = 1f64.to_radians();
        let step: Vec<_> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.02;
                record(t, if t < 2.0 - 1e-9 { one_deg } else { 0.0 })
            })
            .collect();
        let m = summarize(&step).unwrap();
        assert!((m.settling_time - 2.0).abs() < 1e-9);
        assert!((m.max_abs_roll - one_deg).abs() < 1e-15);
    }

    #[test]
    fn summarize_skips_startup() {
        let mut log: Vec<_> = (0..10).map(|k| record(k as f64, 0.3)).collect();
        for r in &mut log[..4] {
            r.phase = Phase::Startup;
        }
        for r in &mut log[4..] {
            r.truth = Orientation::default();
        }
        let m = summarize(&log).unwrap();
        assert_eq!(m.window_start, 4.0);
        assert_eq!(m.samples, 6);
        assert_eq!(m.rms_tilt, 0.0);
    }

    #[test]
    fn flat_ground_stays_level() {
        let mut sc = Scenario::formation(
            "flat",
            Terrain::flat(),
            Pose2D::default(),
            &[[-0.5, 1.0], [-0.5, -1.0], [0.5, 0.5]],
            2,
        )
        .unwrap();
        sc.duration = 40.0;
        let log = run(&sc).unwrap();
        assert!(log.iter().all(|r| r.truth.tilt() < 1e-12));
        let leveled: Vec<_> = log.iter().filter(|r| r.phase == Phase::Leveling).collect();
        assert!(!leveled.is_empty());
        // Leveling never moves the targets; the rods only finish the last
        // millimetre of the startup ramp and then stop.
        assert!(leveled.iter().all(|r| r.robots.iter().all(|b| b.target == 0.125)));
        let travel = |recs: &[&LogRecord]| -> f64 {
            recs.windows(2)
                .flat_map(|w| w[0].robots.iter().zip(&w[1].robots).map(|(a, b)| (a.length - b.length).abs()))
                .sum()
        };
        assert!(travel(&leveled) < 3.0 * 2.0 * STARTUP_TOLERANCE);
        let settled: Vec<_> = leveled.iter().copied().filter(|r| r.t > leveled[0].t + 20.0).collect();
        assert!(travel(&settled) < 1e-5, "late travel {}", travel(&settled));
    }

    #[test]
    fn startup_ramps_from_zero() {
        let mut sc = Scenario::formation(
            "flat",
            Terrain::flat(),
            Pose2D::default(),
            &[[-0.5, 1.0], [-0.5, -1.0], [0.5, 0.5]],
            2,
        )
        .unwrap();
        sc.duration = 5.0;
        let log = run(&sc).unwrap();
        assert_eq!(log[0].phase, Phase::Startup);
        assert!(log[0].robots.iter().all(|b| b.length < 0.01));
        let switch = log.iter().position(|r| r.phase == Phase::Leveling).unwrap();
        assert!(log[switch].robots.iter().all(|b| (b.length - 0.125).abs() <= STARTUP_TOLERANCE));
        // Leader holds still during startup.
        assert!(log[..switch].iter().all(|r| r.robots[2].command == VelocityCommand::ZERO));
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let base = Scenario::formation(
            "x",
            Terrain::flat(),
            Pose2D::default(),
            &[[-0.5, 1.0], [-0.5, -1.0], [0.5, 0.5]],
            2,
        )
        .unwrap();
        let mut two_leaders = base.clone();
        two_leaders.robots[0].role = Role::Leader;
        assert!(matches!(two_leaders.validate(), Err(Error::Scenario(_))));

        let mut collinear = base.clone();
        for (r, m) in collinear.robots.iter_mut().zip([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]) {
            r.mount = m;
        }
        assert!(matches!(collinear.validate(), Err(Error::DegenerateLayout { .. })));

        let mut bad_imu = base.clone();
        bad_imu.imu.rate = 30.0;
        assert!(bad_imu.validate().is_err());

        let mut short = base;
        short.duration = 0.001;
        assert!(short.validate().is_err());
    }

    #[test]
    fn out_of_arena_names_tick_and_robot() {
        let mut sc = Scenario::formation(
            "edge",
            Terrain::flat(),
            Pose2D::default(),
            &[[-0.5, 1.0], [-0.5, -1.0], [0.5, 0.5]],
            2,
        )
        .unwrap();
        sc.terrain.arena.x_max = 1.0;
        sc.trajectory.waypoints = vec![[10.0, 0.5]];
        sc.trajectory.cruise_speed = 0.5;
        sc.duration = 20.0;
        match run(&sc) {
            Err(Error::Simulation { robot, source, .. }) => {
                assert_eq!(robot, 2);
                assert!(matches!(*source, Error::OutOfBounds { .. }));
            }
            other => panic!("expected simulation error, got {other:?}"),
        }
    }
}
