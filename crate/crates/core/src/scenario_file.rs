//! TOML scenario files.
//!
//! Every field is optional. A file starts from the built-in named by `base`
//! (the flat-ground smoke case when absent) and overrides what it sets.
//! Unknown keys are rejected, and every diagnostic names the offending key
//! and the line it sits on.
//!
//! ```toml
//! base = "plank4"
//! duration = 40.0
//!
//! [piston]
//! l_total = 0.25
//!
//! [terrain]
//! kind = "inclined"
//! pitch_deg = 5.0
//! origin = [1.5, 0.0]
//! region = "ahead"
//!
//! [[robots]]
//! mount = [0.5, 0.5]
//! leader = true
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::error::Error;
use crate::formation::FollowerSpec;
use crate::kinematics::Pose2D;
use crate::scenarios;
use crate::sim::{formation_robots, Role, RobotConfig, Scenario};
use crate::world::{Arena, Heightmap, InclinedPlane, PlaneBand, Region, Terrain, TerrainKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioFileError {
    #[error("cannot read scenario file {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },

    #[error("{path}:{line}: invalid `{key}`: {message}")]
    Invalid {
        path: String,
        key: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    base: Option<String>,
    name: Option<String>,
    duration: Option<f64>,
    dt: Option<f64>,
    terrain: Option<TerrainDoc>,
    payload: Option<PayloadDoc>,
    robots: Option<Vec<RobotDoc>>,
    formation: Option<FormationDoc>,
    limits: Option<LimitsDoc>,
    pid: Option<PidDoc>,
    piston: Option<PistonDoc>,
    leveling: Option<LevelingDoc>,
    imu: Option<ImuDoc>,
    trajectory: Option<TrajectoryDoc>,
    metadata: Option<MetadataDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArenaDoc {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneDoc {
    #[serde(default)]
    pitch_deg: f64,
    #[serde(default)]
    roll_deg: f64,
    #[serde(default)]
    origin: [f64; 2],
    #[serde(default)]
    region: Option<String>,
    length: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BandDoc {
    y_min: f64,
    y_max: f64,
    #[serde(flatten)]
    plane: PlaneDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerrainDoc {
    kind: String,
    arena: Option<ArenaDoc>,
    // inclined
    pitch_deg: Option<f64>,
    roll_deg: Option<f64>,
    origin: Option<[f64; 2]>,
    region: Option<String>,
    length: Option<f64>,
    // multiplane
    bands: Option<Vec<BandDoc>>,
    // heightmap
    file: Option<String>,
    seed: Option<u64>,
    rows: Option<usize>,
    cols: Option<usize>,
    cell_size: Option<f64>,
    amplitude: Option<f64>,
    wavelength: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayloadDoc {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    theta_deg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotDoc {
    mount: [f64; 2],
    #[serde(default)]
    leader: bool,
    /// `[x, y, theta_deg]`; defaults to the mount under the payload.
    initial: Option<[f64; 3]>,
    rho_d: Option<f64>,
    psi_deg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormationDoc {
    k1: Option<f64>,
    k2: Option<f64>,
    k3: Option<f64>,
    d: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsDoc {
    v_max: Option<f64>,
    omega_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PidDoc {
    kp: Option<f64>,
    ki: Option<f64>,
    kd: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PistonDoc {
    l_total: Option<f64>,
    slew_limit: Option<f64>,
    chassis_height: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelingDoc {
    enabled: Option<bool>,
    step_clamp: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImuDoc {
    rate: Option<f64>,
    noise_std: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    waypoints: Option<Vec<[f64; 2]>>,
    cruise_speed: Option<f64>,
    capture_radius: Option<f64>,
    heading_gain: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataDoc {
    payload_mass: Option<f64>,
    robot_mass: Option<f64>,
    robot_dims: Option<[f64; 2]>,
}

/// Finds the line defining `key` (a dotted path such as `piston.l_total`),
/// falling back to its table header and then to line 1.
fn locate(text: &str, key: &str) -> usize {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = h.trim().to_string();
        } else if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
        } else if let Some((k, _)) = line.split_once('=') {
            let k = k.trim();
            let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
            if full == key || (current == table && k == leaf) {
                return i + 1;
            }
            continue;
        } else {
            continue;
        }
        if current == table && header_line.is_none() {
            header_line = Some(i + 1);
        }
    }
    header_line.unwrap_or(1)
}

struct Ctx<'a> {
    path: &'a str,
    text: &'a str,
    dir: PathBuf,
}

impl Ctx<'_> {
    fn invalid(&self, key: &str, message: impl Into<String>) -> ScenarioFileError {
        ScenarioFileError::Invalid {
            path: self.path.to_string(),
            key: key.to_string(),
            line: locate(self.text, key),
            message: message.into(),
        }
    }

    /// Runs a validation, attributing a failure to `section.<param>`.
    fn check(&self, section: &str, r: crate::Result<()>) -> Result<(), ScenarioFileError> {
        r.map_err(|e| {
            let key = match &e {
                Error::InvalidParameter { name, .. } => {
                    let leaf = name.rsplit('.').next().unwrap_or(name);
                    if section.is_empty() {
                        leaf.to_string()
                    } else {
                        format!("{section}.{leaf}")
                    }
                }
                _ => section.to_string(),
            };
            self.invalid(&key, e.to_string())
        })
    }
}

fn parse_region(ctx: &Ctx, key: &str, region: Option<&str>) -> Result<Region, ScenarioFileError> {
    match region {
        None | Some("all") => Ok(Region::All),
        Some("ahead") => Ok(Region::Ahead),
        Some(other) => Err(ctx.invalid(key, format!("unknown region `{other}` (expected `all` or `ahead`)"))),
    }
}

fn plane_from(ctx: &Ctx, key: &str, p: &PlaneDoc) -> Result<InclinedPlane, ScenarioFileError> {
    Ok(InclinedPlane {
        slope_pitch: p.pitch_deg.to_radians(),
        slope_roll: p.roll_deg.to_radians(),
        origin: p.origin,
        region: parse_region(ctx, key, p.region.as_deref())?,
        length: p.length,
    })
}

fn terrain_from(ctx: &Ctx, doc: &TerrainDoc) -> Result<Terrain, ScenarioFileError> {
    let unused = |names: &[(&str, bool)]| -> Result<(), ScenarioFileError> {
        for (n, present) in names {
            if *present {
                return Err(ctx.invalid(
                    &format!("terrain.{n}"),
                    format!("not used by terrain kind `{}`", doc.kind),
                ));
            }
        }
        Ok(())
    };
    let plane_keys = [
        ("pitch_deg", doc.pitch_deg.is_some()),
        ("roll_deg", doc.roll_deg.is_some()),
        ("region", doc.region.is_some()),
        ("length", doc.length.is_some()),
    ];
    let map_keys = [
        ("file", doc.file.is_some()),
        ("seed", doc.seed.is_some()),
        ("rows", doc.rows.is_some()),
        ("cols", doc.cols.is_some()),
        ("cell_size", doc.cell_size.is_some()),
        ("amplitude", doc.amplitude.is_some()),
        ("wavelength", doc.wavelength.is_some()),
    ];
    let mut terrain = match doc.kind.as_str() {
        "flat" => {
            unused(&plane_keys)?;
            unused(&map_keys)?;
            unused(&[("bands", doc.bands.is_some()), ("origin", doc.origin.is_some())])?;
            Terrain::flat()
        }
        "inclined" => {
            unused(&map_keys)?;
            unused(&[("bands", doc.bands.is_some())])?;
            let plane = plane_from(
                ctx,
                "terrain.region",
                &PlaneDoc {
                    pitch_deg: doc.pitch_deg.unwrap_or(0.0),
                    roll_deg: doc.roll_deg.unwrap_or(0.0),
                    origin: doc.origin.unwrap_or_default(),
                    region: doc.region.clone(),
                    length: doc.length,
                },
            )?;
            Terrain::inclined(plane)
        }
        "multiplane" => {
            unused(&plane_keys)?;
            unused(&map_keys)?;
            unused(&[("origin", doc.origin.is_some())])?;
            let bands = doc
                .bands
                .as_ref()
                .ok_or_else(|| ctx.invalid("terrain.bands", "multiplane terrain needs [[terrain.bands]]"))?;
            let bands = bands
                .iter()
                .map(|b| {
                    Ok(PlaneBand {
                        y_min: b.y_min,
                        y_max: b.y_max,
                        plane: plane_from(ctx, "terrain.bands.region", &b.plane)?,
                    })
                })
                .collect::<Result<Vec<_>, ScenarioFileError>>()?;
            Terrain::multi_plane(bands)
        }
        "heightmap" => {
            unused(&plane_keys)?;
            unused(&[("bands", doc.bands.is_some())])?;
            let map = if let Some(file) = &doc.file {
                unused(&map_keys[1..])?;
                unused(&[("origin", doc.origin.is_some())])?;
                let path = ctx.dir.join(file);
                Heightmap::load(&path).map_err(|e| ctx.invalid("terrain.file", e.to_string()))?
            } else {
                Heightmap::procedural(
                    doc.seed.unwrap_or(scenarios::HEIGHTMAP_SEED),
                    doc.rows.unwrap_or(41),
                    doc.cols.unwrap_or(57),
                    doc.cell_size.unwrap_or(0.25),
                    doc.origin.unwrap_or([-3.0, -5.0]),
                    doc.amplitude.unwrap_or(0.04),
                    doc.wavelength.unwrap_or(2.0),
                )
                .map_err(|e| ctx.invalid("terrain", e.to_string()))?
            };
            Terrain::heightmap(map)
        }
        other => {
            return Err(ctx.invalid(
                "terrain.kind",
                format!("unknown terrain kind `{other}` (expected flat, inclined, multiplane or heightmap)"),
            ))
        }
    };
    if let Some(a) = &doc.arena {
        if matches!(terrain.kind, TerrainKind::Heightmap(_)) {
            return Err(ctx.invalid("terrain.arena", "heightmap arena is the grid extent"));
        }
        terrain.arena = Arena {
            x_min: a.x_min,
            x_max: a.x_max,
            y_min: a.y_min,
            y_max: a.y_max,
        };
    }
    ctx.check("terrain", terrain.validate())?;
    Ok(terrain)
}

fn robots_from(ctx: &Ctx, payload: Pose2D, docs: &[RobotDoc]) -> Result<Vec<RobotConfig>, ScenarioFileError> {
    let leaders: Vec<usize> = docs.iter().enumerate().filter(|(_, r)| r.leader).map(|(i, _)| i).collect();
    let [leader] = leaders.as_slice() else {
        return Err(ctx.invalid(
            "robots.leader",
            format!("exactly one robot must set `leader = true`, found {}", leaders.len()),
        ));
    };
    let mounts: Vec<[f64; 2]> = docs.iter().map(|r| r.mount).collect();
    let mut robots = formation_robots(payload, &mounts, *leader).map_err(|e| ctx.invalid("robots.mount", e.to_string()))?;
    for (r, d) in robots.iter_mut().zip(docs) {
        if let Some([x, y, deg]) = d.initial {
            r.initial = Pose2D::new(x, y, deg.to_radians()).map_err(|e| ctx.invalid("robots.initial", e.to_string()))?;
        }
        match (d.rho_d, d.psi_deg, d.leader) {
            (None, None, _) => {}
            (Some(_), Some(_), true) | (Some(_), None, true) | (None, Some(_), true) => {
                return Err(ctx.invalid("robots.rho_d", "the leader takes no follower placement"));
            }
            (Some(rho), Some(psi), false) => {
                let spec = FollowerSpec::new(rho, psi.to_radians()).map_err(|e| ctx.invalid("robots.rho_d", e.to_string()))?;
                r.role = Role::Follower(spec);
            }
            _ => return Err(ctx.invalid("robots.rho_d", "`rho_d` and `psi_deg` must be given together")),
        }
    }
    Ok(robots)
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn scenario_from(ctx: &Ctx, doc: FileDoc) -> Result<Scenario, ScenarioFileError> {
    let base = doc.base.as_deref().unwrap_or("flat");
    let mut sc = scenarios::builtin(base).map_err(|e| ctx.invalid("base", e.to_string()))?;
    if let Some(name) = doc.name {
        sc.name = name;
    } else if doc.base.is_none() {
        sc.name = Path::new(ctx.path)
            .file_stem()
            .map_or_else(|| "scenario".to_string(), |s| s.to_string_lossy().into_owned());
    }
    set(&mut sc.duration, doc.duration);
    set(&mut sc.dt, doc.dt);
    if let Some(t) = &doc.terrain {
        sc.terrain = terrain_from(ctx, t)?;
    }
    if doc.payload.is_some() && doc.robots.is_none() {
        return Err(ctx.invalid("payload", "payload placement needs a [[robots]] list"));
    }
    if let Some(robots) = &doc.robots {
        let payload = doc.payload.as_ref().map_or(Ok(Pose2D::default()), |p| {
            Pose2D::new(p.x, p.y, p.theta_deg.to_radians()).map_err(|e| ctx.invalid("payload", e.to_string()))
        })?;
        sc.robots = robots_from(ctx, payload, robots)?;
    }
    if let Some(f) = doc.formation {
        set(&mut sc.formation_gains.k1, f.k1);
        set(&mut sc.formation_gains.k2, f.k2);
        set(&mut sc.formation_gains.k3, f.k3);
        set(&mut sc.formation_gains.d, f.d);
    }
    ctx.check("formation", sc.formation_gains.validate())?;
    if let Some(l) = doc.limits {
        set(&mut sc.velocity_limits.v_max, l.v_max);
        set(&mut sc.velocity_limits.omega_max, l.omega_max);
    }
    ctx.check("limits", sc.velocity_limits.validate())?;
    if let Some(p) = doc.pid {
        set(&mut sc.pid_gains.kp, p.kp);
        set(&mut sc.pid_gains.ki, p.ki);
        set(&mut sc.pid_gains.kd, p.kd);
    }
    ctx.check("pid", sc.pid_gains.validate())?;
    if let Some(p) = doc.piston {
        set(&mut sc.piston.l_total, p.l_total);
        set(&mut sc.piston.slew_limit, p.slew_limit);
        set(&mut sc.piston.chassis_height, p.chassis_height);
    }
    if let Some(l) = doc.leveling {
        set(&mut sc.leveling.enabled, l.enabled);
        set(&mut sc.leveling.config.step_clamp, l.step_clamp);
    }
    ctx.check("leveling", sc.leveling.config.validate())?;
    if let Some(i) = doc.imu {
        set(&mut sc.imu.rate, i.rate);
        set(&mut sc.imu.noise_std, i.noise_std);
        set(&mut sc.imu.seed, i.seed);
    }
    ctx.check("imu", sc.imu.validate())?;
    if let Some(t) = doc.trajectory {
        if let Some(w) = t.waypoints {
            sc.trajectory.waypoints = w;
        }
        set(&mut sc.trajectory.cruise_speed, t.cruise_speed);
        set(&mut sc.trajectory.capture_radius, t.capture_radius);
        set(&mut sc.trajectory.heading_gain, t.heading_gain);
    }
    if let Some(m) = doc.metadata {
        set(&mut sc.metadata.payload_mass, m.payload_mass);
        set(&mut sc.metadata.robot_mass, m.robot_mass);
        set(&mut sc.metadata.robot_dims, m.robot_dims);
        for (k, v) in [("payload_mass", sc.metadata.payload_mass), ("robot_mass", sc.metadata.robot_mass)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ctx.invalid(&format!("metadata.{k}"), "must be positive"));
            }
        }
    }
    sc.validate().map_err(|e| {
        let key = match &e {
            Error::InvalidParameter { name, .. } if name.contains('.') => name.to_string(),
            Error::InvalidParameter { name, .. } if *name == "dt" || *name == "duration" => name.to_string(),
            Error::InvalidParameter { name, .. } if *name == "rho_d" || *name == "psi_d" => "robots.rho_d".into(),
            Error::Scenario(m) if m.contains("IMU") => "imu.rate".into(),
            Error::Scenario(m) if m.contains("duration") => "duration".into(),
            Error::Scenario(m) if m.contains("waypoint") => "trajectory.waypoints".into(),
            Error::Scenario(_) | Error::DegenerateLayout { .. } | Error::InvalidState(_) => "robots".into(),
            _ => "scenario".into(),
        };
        ctx.invalid(&key, e.to_string())
    })?;
    Ok(sc)
}

/// Parses scenario text. `path` is used in diagnostics and to resolve
/// heightmap files relative to the scenario.
pub fn parse_scenario_str(text: &str, path: &Path) -> Result<Scenario, ScenarioFileError> {
    let display = path.display().to_string();
    let doc: FileDoc = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ScenarioFileError::Syntax {
            path: display.clone(),
            line,
            message: e.message().trim().to_string(),
        }
    })?;
    let ctx = Ctx {
        path: &display,
        text,
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    scenario_from(&ctx, doc)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioFileError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_scenario_str(&text, path)
}
