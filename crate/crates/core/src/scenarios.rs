//! Built-in scenarios.
//!
//! * `plank4`: four robots carry a rectangular payload up a 5 degree
//!   pitch-only plank.
//! * `triplank3`: three robots in a triangle, each driving up its own
//!   plank with a different slope.
//! * `heightmap3`: three robots in a triangle crossing uneven ground.

use crate::error::{Error, Result};
use crate::kinematics::Pose2D;
use crate::sim::{Scenario, Trajectory};
use crate::world::{Heightmap, InclinedPlane, PlaneBand, Region, Terrain};

pub const NAMES: [&str; 3] = ["plank4", "triplank3", "heightmap3"];

/// Triangle mounts shared by the three-robot scenarios.
pub const TRIANGLE_MOUNTS: [[f64; 2]; 3] = [[-0.5, 1.0], [-0.5, -1.0], [0.5, 0.5]];

/// Rectangular payload mounts for `plank4`, front pair first.
pub const RECTANGLE_MOUNTS: [[f64; 2]; 4] = [[0.5, 0.4], [0.5, -0.4], [-0.5, 0.4], [-0.5, -0.4]];

/// Default slopes of the `triplank3` planks, one per robot.
pub const TRIPLANK_SLOPES_DEG: [f64; 3] = [3.0, 5.0, 7.0];

pub const HEIGHTMAP_SEED: u64 = 2019;

pub fn builtin(name: &str) -> Result<Scenario> {
    match name {
        "plank4" => plank4(),
        "triplank3" => triplank3(TRIPLANK_SLOPES_DEG),
        "heightmap3" => heightmap3(HEIGHTMAP_SEED),
        "flat" => flat(),
        other => Err(Error::Scenario(format!(
            "unknown built-in scenario `{other}` (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}

/// Defaults-only smoke case: three robots parked on flat ground.
pub fn flat() -> Result<Scenario> {
    Scenario::formation("flat", Terrain::flat(), Pose2D::default(), &TRIANGLE_MOUNTS, 2)
}

pub fn plank4() -> Result<Scenario> {
    let terrain = Terrain::inclined(InclinedPlane::plank(5f64.to_radians(), 1.5));
    let mut sc = Scenario::formation("plank4", terrain, Pose2D::default(), &RECTANGLE_MOUNTS, 0)?;
    sc.trajectory = Trajectory {
        waypoints: vec![[6.5, 0.4]],
        ..Trajectory::default()
    };
    sc.duration = 65.0;
    Ok(sc)
}

/// Each robot drives in its own corridor along `+x`; plank `i` starts at
/// `x = 1` and rises for 1.5 m before levelling off.
pub fn triplank3(slopes_deg: [f64; 3]) -> Result<Scenario> {
    // Corridors split halfway between neighbouring robots' y offsets.
    let corridors = [(0.75, 2.5), (-2.5, -0.25), (-0.25, 0.75)];
    let bands = corridors
        .iter()
        .zip(slopes_deg)
        .map(|(&(y_min, y_max), deg)| PlaneBand {
            y_min,
            y_max,
            plane: InclinedPlane {
                slope_pitch: deg.to_radians(),
                slope_roll: 0.0,
                origin: [1.0, 0.0],
                region: Region::Ahead,
                length: Some(1.5),
            },
        })
        .collect();
    let mut sc = Scenario::formation(
        "triplank3",
        Terrain::multi_plane(bands),
        Pose2D::default(),
        &TRIANGLE_MOUNTS,
        2,
    )?;
    sc.trajectory = Trajectory {
        waypoints: vec![[4.5, 0.5]],
        ..Trajectory::default()
    };
    sc.duration = 50.0;
    Ok(sc)
}

/// Procedural relief for `heightmap3`: 14 m x 10 m at 0.25 m resolution.
pub fn heightmap3_terrain(seed: u64) -> Result<Heightmap> {
    Heightmap::procedural(seed, 41, 57, 0.25, [-3.0, -5.0], 0.04, 2.0)
}

pub fn heightmap3(seed: u64) -> Result<Scenario> {
    let mut sc = Scenario::formation(
        "heightmap3",
        Terrain::heightmap(heightmap3_terrain(seed)?),
        Pose2D::default(),
        &TRIANGLE_MOUNTS,
        2,
    )?;
    sc.trajectory = Trajectory {
        waypoints: vec![[3.0, 0.5], [6.0, 1.5], [9.0, 0.5]],
        ..Trajectory::default()
    };
    sc.duration = 100.0;
    Ok(sc)
}
