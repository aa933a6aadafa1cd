//! Python bindings for the levelbot simulator.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use levelbot::formation::{self, FollowerSpec, FormationGains};
use levelbot::kinematics::{self, VelocityLimits};
use levelbot::leveling::{self, LevelingConfig, MountLayout, PistonHeights};
use levelbot::scenario_file;
use levelbot::sim::{self, LogRecord, RunOptions};
use levelbot::world::{self, PayloadSupport};
use levelbot::scenarios;

create_exception!(pylevelbot, LevelbotError, PyException);

fn err(e: impl ToString) -> PyErr {
    LevelbotError::new_err(e.to_string())
}

fn layout(mounts: Vec<[f64; 2]>) -> PyResult<MountLayout> {
    MountLayout::new(mounts).map_err(err)
}

#[pyclass(name = "Pose2D", module = "pylevelbot", get_all, set_all, from_py_object)]
#[derive(Clone, Copy)]
struct PyPose {
    x: f64,
    y: f64,
    theta: f64,
}

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (x=0.0, y=0.0, theta=0.0))]
    fn new(x: f64, y: f64, theta: f64) -> PyResult<Self> {
        kinematics::Pose2D::new(x, y, theta).map(Self::from).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Pose2D(x={}, y={}, theta={})", self.x, self.y, self.theta)
    }
}

impl From<kinematics::Pose2D> for PyPose {
    fn from(p: kinematics::Pose2D) -> Self {
        PyPose { x: p.x, y: p.y, theta: p.theta }
    }
}

impl PyPose {
    fn core(&self) -> PyResult<kinematics::Pose2D> {
        kinematics::Pose2D::new(self.x, self.y, self.theta).map_err(err)
    }
}

#[pyfunction]
fn wrap_angle(a: f64) -> f64 {
    kinematics::wrap_angle(a)
}

/// One explicit Euler step of the unicycle model.
#[pyfunction]
#[pyo3(signature = (pose, v, omega, dt=kinematics::DEFAULT_DT))]
fn step_unicycle(pose: PyPose, v: f64, omega: f64, dt: f64) -> PyResult<PyPose> {
    kinematics::step_unicycle(pose.core()?, kinematics::VelocityCommand { v, omega }, dt)
        .map(PyPose::from)
        .map_err(err)
}

/// Follower command `(v, omega, saturated)` with the default gains unless
/// overridden.
#[pyfunction]
#[pyo3(signature = (leader, leader_v, leader_omega, follower, rho_d, psi_d, k1=None, k2=None, k3=None, d=None))]
#[allow(clippy::too_many_arguments)]
fn follower_control(
    leader: PyPose,
    leader_v: f64,
    leader_omega: f64,
    follower: PyPose,
    rho_d: f64,
    psi_d: f64,
    k1: Option<f64>,
    k2: Option<f64>,
    k3: Option<f64>,
    d: Option<f64>,
) -> PyResult<(f64, f64, bool)> {
    let def = FormationGains::default();
    let gains = FormationGains {
        k1: k1.unwrap_or(def.k1),
        k2: k2.unwrap_or(def.k2),
        k3: k3.unwrap_or(def.k3),
        d: d.unwrap_or(def.d),
    };
    gains.validate().map_err(err)?;
    let spec = FollowerSpec::new(rho_d, psi_d).map_err(err)?;
    let (c, sat) = formation::follower_control(
        leader.core()?,
        kinematics::VelocityCommand { v: leader_v, omega: leader_omega },
        follower.core()?,
        spec,
        &gains,
        &VelocityLimits::default(),
    );
    Ok((c.v, c.omega, sat))
}

/// Rows `[y_i, x_i]` of the geometry matrix for the given mounts.
#[pyfunction]
fn geometry_matrix(mounts: Vec<[f64; 2]>) -> PyResult<Vec<[f64; 2]>> {
    Ok(leveling::geometry_matrix(&layout(mounts)?).rows().to_vec())
}

#[pyfunction]
fn delta_lengths(mounts: Vec<[f64; 2]>, theta_x: f64, theta_y: f64) -> PyResult<Vec<f64>> {
    Ok(leveling::delta_lengths(&layout(mounts)?, leveling::Orientation::new(theta_x, theta_y)))
}

/// One leveling iteration. Returns `(lengths, step_clamped, stroke_clamped)`.
/// `step_clamp=None` disables the per-call step limit.
#[pyfunction]
#[pyo3(signature = (lengths, l_total, theta_x, theta_y, mounts, step_clamp=None))]
fn update_heights(
    lengths: Vec<f64>,
    l_total: f64,
    theta_x: f64,
    theta_y: f64,
    mounts: Vec<[f64; 2]>,
    step_clamp: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<bool>, Vec<bool>)> {
    let prev = PistonHeights::new(lengths, l_total).map_err(err)?;
    let cfg = step_clamp.map_or_else(LevelingConfig::unclamped, |step_clamp| LevelingConfig { step_clamp });
    let up = leveling::update_heights(&prev, leveling::Orientation::new(theta_x, theta_y), &layout(mounts)?, &cfg)
        .map_err(err)?;
    Ok((up.heights.lengths, up.step_clamped, up.stroke_clamped))
}

/// `((theta_x_min, theta_x_max), (theta_y_min, theta_y_max))`.
#[pyfunction]
fn achievable_angle_bounds(mounts: Vec<[f64; 2]>, l_total: f64) -> PyResult<((f64, f64), (f64, f64))> {
    let b = leveling::achievable_angle_bounds(&layout(mounts)?, l_total).map_err(err)?;
    Ok(((b.theta_x_min, b.theta_x_max), (b.theta_y_min, b.theta_y_max)))
}

/// `(theta_x, theta_y)` of the least-squares plane through the piston tips.
#[pyfunction]
fn payload_orientation(tips: Vec<[f64; 3]>, mounts: Vec<[f64; 2]>) -> PyResult<(f64, f64)> {
    let o = world::payload_orientation(&PayloadSupport { tips }, &layout(mounts)?).map_err(err)?;
    Ok((o.theta_x, o.theta_y))
}

#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    scenarios::NAMES.to_vec()
}

#[pyclass(name = "Scenario", module = "pylevelbot")]
struct PyScenario {
    inner: sim::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        scenarios::builtin(name).map(|inner| PyScenario { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        scenario_file::parse_scenario(Path::new(path)).map(|inner| PyScenario { inner }).map_err(err)
    }

    /// Parses scenario text; heightmap files resolve against the cwd.
    #[staticmethod]
    fn from_str(text: &str) -> PyResult<Self> {
        scenario_file::parse_scenario_str(text, Path::new("<string>"))
            .map(|inner| PyScenario { inner })
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn robots(&self) -> usize {
        self.inner.robots.len()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[setter]
    fn set_duration(&mut self, d: f64) {
        self.inner.duration = d;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.imu.seed
    }

    #[setter]
    fn set_seed(&mut self, s: u64) {
        self.inner.imu.seed = s;
    }

    #[getter]
    fn noise_std(&self) -> f64 {
        self.inner.imu.noise_std
    }

    #[setter]
    fn set_noise_std(&mut self, s: f64) {
        self.inner.imu.noise_std = s;
    }

    #[getter]
    fn leveling(&self) -> bool {
        self.inner.leveling.enabled
    }

    #[setter]
    fn set_leveling(&mut self, on: bool) {
        self.inner.leveling.enabled = on;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[pyo3(signature = (parallel=false))]
    fn run(&self, py: Python<'_>, parallel: bool) -> PyResult<SimResult> {
        let sc = self.inner.clone();
        let log = py
            .detach(move || sim::run_with(&sc, RunOptions { parallel }))
            .map_err(err)?;
        Ok(SimResult { log })
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, robots={}, duration={})", self.inner.name, self.inner.robots.len(), self.inner.duration)
    }
}

#[pyclass(name = "SimResult", module = "pylevelbot")]
struct SimResult {
    log: Vec<LogRecord>,
}

#[pymethods]
impl SimResult {
    fn __len__(&self) -> usize {
        self.log.len()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.t).collect()
    }

    #[getter]
    fn roll(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.truth.theta_x).collect()
    }

    #[getter]
    fn pitch(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.truth.theta_y).collect()
    }

    /// Piston lengths per tick, one list per robot.
    #[getter]
    fn lengths(&self) -> Vec<Vec<f64>> {
        let n = self.log.first().map_or(0, |r| r.robots.len());
        (0..n).map(|i| self.log.iter().map(|r| r.robots[i].length).collect()).collect()
    }

    fn csv(&self) -> String {
        sim::write_csv(&self.log)
    }

    /// Summary metrics as a `{key: float}` dict.
    fn metrics(&self) -> PyResult<BTreeMap<String, f64>> {
        let m = sim::summarize(&self.log).map_err(err)?;
        Ok(m.to_text()
            .lines()
            .filter_map(|l| l.split_once('='))
            .filter_map(|(k, v)| v.parse().ok().map(|v| (k.to_string(), v)))
            .collect())
    }
}

#[pymodule]
pub fn pylevelbot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LevelbotError", m.py().get_type::<LevelbotError>())?;
    m.add_class::<PyPose>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<SimResult>()?;
    m.add_function(wrap_pyfunction!(wrap_angle, m)?)?;
    m.add_function(wrap_pyfunction!(step_unicycle, m)?)?;
    m.add_function(wrap_pyfunction!(follower_control, m)?)?;
    m.add_function(wrap_pyfunction!(geometry_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(delta_lengths, m)?)?;
    m.add_function(wrap_pyfunction!(update_heights, m)?)?;
    m.add_function(wrap_pyfunction!(achievable_angle_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(payload_orientation, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    Ok(())
}
