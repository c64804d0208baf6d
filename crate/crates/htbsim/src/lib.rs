//! File formats, CSV artifacts, reports and the command line for the HTB
//! simulator in `htbsim-core`.

pub mod artifacts;
pub mod cli;
mod error;
pub mod hierarchy;
pub mod report;
pub mod scenario_file;
pub mod units;

pub use artifacts::{read_artifacts, simulate, write_artifacts, ArtifactError, RunError, RunOutput, Stored};
pub use error::ConfigError;
pub use hierarchy::{parse_hierarchy, write_hierarchy};
pub use report::{EpochRow, Report};
pub use scenario_file::{load_hierarchy, load_scenario, parse_scenario};
