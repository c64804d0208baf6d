//! Command line: `validate`, `run` and `report`.
//!
//! Exit status is 0 on success, 1 when the input is well formed but invalid
//! (or a report flags ceiling violations), 2 when a file cannot be read or
//! parsed.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};
use htbsim_core::{check_hierarchy, validate, Scenario, DEFAULT_MTU};

use crate::artifacts::{read_artifacts, simulate, write_artifacts, REPORT};
use crate::error::ConfigError;
use crate::report::Report;
use crate::scenario_file::{load_hierarchy, load_scenario};
use crate::units::parse_duration;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_UNREADABLE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "htbsim", version, about = "Discrete-event HTB link-sharing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a hierarchy file, a scenario, or a scenario against another hierarchy.
    Validate {
        /// Hierarchy XML; replaces the one the scenario names.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        scenario: Option<PathBuf>,
    },
    /// Simulate a scenario and write CSV traces and a report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Throughput window, e.g. `1s` or `500ms`. Defaults to the scenario's.
        #[arg(long, value_parser = duration_arg)]
        window: Option<Duration>,
        /// Skip windows this close to a flow arrival or departure.
        #[arg(long, value_parser = duration_arg, default_value = "0")]
        exclusion: Duration,
        /// Accepted for compatibility. Runs draw no random numbers.
        #[arg(long)]
        seedless: bool,
    },
    /// Rebuild the report from a run directory.
    Report {
        dir: PathBuf,
        #[arg(long, value_parser = duration_arg, default_value = "0")]
        exclusion: Duration,
    },
}

fn duration_arg(s: &str) -> Result<Duration, String> {
    parse_duration(s)
}

fn config_status(e: &ConfigError) -> u8 {
    if e.is_unreadable() {
        EXIT_UNREADABLE
    } else {
        EXIT_INVALID
    }
}

/// Run one command, writing normal output to `out` and diagnostics to `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match cli.command {
        Command::Validate { hierarchy, scenario } => cmd_validate(hierarchy, scenario, out, err),
        Command::Run {
            scenario,
            out: dir,
            window,
            exclusion,
            seedless: _,
        } => cmd_run(scenario, dir, window, exclusion, out, err),
        Command::Report { dir, exclusion } => cmd_report(dir, exclusion, out, err),
    }
}

/// Print every problem with `s`; true when there were none.
fn check(s: &Scenario, err: &mut dyn Write) -> bool {
    let problems = validate(s);
    for p in &problems {
        let _ = writeln!(err, "error: {p}");
    }
    if problems.is_empty() {
        if let Ok(tree) = s.build_tree() {
            for w in tree.warnings() {
                let _ = writeln!(err, "warning: {w}");
            }
        }
        if s.horizon_truncates() {
            let _ = writeln!(err, "warning: horizon {} cuts some sources short", s.horizon);
        }
    }
    problems.is_empty()
}

fn cmd_validate(hierarchy: Option<PathBuf>, scenario: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match (hierarchy, scenario) {
        (None, None) => {
            let _ = writeln!(err, "error: give a scenario, --hierarchy, or both");
            EXIT_UNREADABLE
        }
        (Some(h), None) => match load_hierarchy(&h) {
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                config_status(&e)
            }
            Ok(classes) => {
                let problems = check_hierarchy(&classes, DEFAULT_MTU);
                for p in &problems {
                    let _ = writeln!(err, "error: {}: {p}", h.display());
                }
                if problems.is_empty() {
                    let _ = writeln!(out, "ok: {} classes", classes.len());
                    EXIT_OK
                } else {
                    EXIT_INVALID
                }
            }
        },
        (h, Some(path)) => match load_scenario(&path, h.as_deref()) {
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                config_status(&e)
            }
            Ok(s) => {
                if check(&s, err) {
                    let _ = writeln!(out, "ok: {} classes, {} sources", s.hierarchy.len(), s.sources.len());
                    EXIT_OK
                } else {
                    EXIT_INVALID
                }
            }
        },
    }
}

fn cmd_run(
    path: PathBuf,
    dir: PathBuf,
    window: Option<Duration>,
    exclusion: Duration,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let mut s = match load_scenario(&path, None) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return config_status(&e);
        }
    };
    if let Some(w) = window {
        s.report_window = w;
    }
    if !check(&s, err) {
        return EXIT_INVALID;
    }
    let output = match simulate(&s) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INVALID;
        }
    };
    let report = Report::build(&output.throughput, &output.schedule, &output.classes, exclusion);
    let written = write_artifacts(&dir, &output).and_then(|()| {
        let path = dir.join(REPORT);
        std::fs::write(&path, report.to_string()).map_err(|source| crate::artifacts::ArtifactError::Io { path, source })
    });
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_UNREADABLE;
    }
    let _ = write!(out, "{report}");
    EXIT_OK
}

fn cmd_report(dir: PathBuf, exclusion: Duration, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let stored = match read_artifacts(&dir) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_UNREADABLE;
        }
    };
    let report = Report::build(&stored.throughput, &stored.schedule, &stored.classes, exclusion);
    let _ = write!(out, "{report}");
    if report.has_violations() {
        EXIT_INVALID
    } else {
        EXIT_OK
    }
}
