pub mod error;
pub mod formation;
pub mod kinematics;
pub mod leveling;
pub mod piston;
pub mod scenario_file;
pub mod scenarios;
pub mod sim;
pub mod world;

pub use error::{Axis, Error, Result};
