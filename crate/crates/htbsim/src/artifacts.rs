//! Run output: CSV traces and the files `report` reads back.
//!
//! | file | columns |
//! |---|---|
//! | `throughput.csv` | `time_s, flow_id, bits_per_second` (window start) |
//! | `delay.csv` | `flow_id, created_s, delay_ms` (one row per delivered packet) |
//! | `drops.csv` | `flow_id, count` |
//! | `expected.csv` | `start_s, end_s, flow_id, bits_per_second` (oracle epochs) |
//! | `classes.csv` | `class, ceil_bps, cburst_bytes, flows` |
//! | `run.csv` | `key, value` (`window_s`, `horizon_s`) |
//!
//! Times are seconds with six decimals.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use htbsim_core::{
    ClassCeiling, Epoch, FlowId, OracleError, Rate, RunTrace, Scenario, Schedule, SimError, SimTime, ThroughputTrace,
};
use serde::Deserialize;
use thiserror::Error;

use crate::units::parse_duration;

pub const THROUGHPUT: &str = "throughput.csv";
pub const DELAY: &str = "delay.csv";
pub const DROPS: &str = "drops.csv";
pub const EXPECTED: &str = "expected.csv";
pub const CLASSES: &str = "classes.csv";
pub const RUN: &str = "run.csv";
pub const REPORT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub throughput: ThroughputTrace,
    pub schedule: Schedule,
    pub classes: Vec<ClassCeiling>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Simulate `s` and compute the oracle schedule for it.
pub fn simulate(s: &Scenario) -> Result<RunOutput, RunError> {
    let trace = htbsim_core::run(s)?;
    let tree = s.build_tree().map_err(|e| SimError::Invalid(vec![htbsim_core::Violation::Hierarchy(e)]))?;
    let specs = s.flow_specs(&tree);
    let schedule = Schedule::build(&tree, &specs, s.horizon)?;
    let classes = tree
        .ids()
        .map(|id| ClassCeiling {
            name: tree.name(id).to_string(),
            ceil: tree.params(id).ceil,
            cburst: tree.params(id).cburst,
            flows: specs
                .iter()
                .filter(|f| tree.is_descendant(f.leaf, id))
                .map(|f| f.flow)
                .collect(),
        })
        .collect();
    Ok(RunOutput {
        throughput: trace.throughput(s.report_window),
        trace,
        schedule,
        classes,
    })
}

pub fn secs(t: SimTime) -> String {
    let ns = t.as_nanos();
    format!("{}.{:06}", ns / 1_000_000_000, ns % 1_000_000_000 / 1_000)
}

fn millis(d: Duration) -> String {
    let ns = d.as_nanos();
    format!("{}.{:06}", ns / 1_000_000, ns % 1_000_000)
}

fn bps(v: f64) -> String {
    format!("{v:.3}")
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<BufWriter<File>>, PathBuf), ArtifactError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| ArtifactError::Io {
        path: path.clone(),
        source,
    })?;
    Ok((csv::Writer::from_writer(BufWriter::new(file)), path))
}

fn write_rows<I, R>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<(), ArtifactError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let (mut w, path) = writer(dir, name)?;
    let wrap = |source| ArtifactError::Csv {
        path: path.clone(),
        source,
    };
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|source| ArtifactError::Io {
        path: path.clone(),
        source,
    })
}

/// Write every CSV artifact of `out` into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, out: &RunOutput) -> Result<(), ArtifactError> {
    std::fs::create_dir_all(dir).map_err(|source| ArtifactError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let th = &out.throughput;
    write_rows(
        dir,
        THROUGHPUT,
        &["time_s", "flow_id", "bits_per_second"],
        (0..th.windows()).flat_map(|w| {
            th.flows
                .iter()
                .enumerate()
                .map(move |(f, flow)| [secs(th.window_start(w)), flow.0.to_string(), bps(th.rate(w, f))])
        }),
    )?;
    write_rows(
        dir,
        DELAY,
        &["flow_id", "created_s", "delay_ms"],
        out.trace
            .departures
            .iter()
            .map(|d| [d.flow.0.to_string(), secs(d.created_at), millis(d.delay())]),
    )?;
    write_rows(
        dir,
        DROPS,
        &["flow_id", "count"],
        out.trace.flows.iter().map(|f| {
            let n = out.trace.drops.get(f).map_or(0, |d| d.total());
            [f.0.to_string(), n.to_string()]
        }),
    )?;
    let sched = &out.schedule;
    write_rows(
        dir,
        EXPECTED,
        &["start_s", "end_s", "flow_id", "bits_per_second"],
        sched.epochs.iter().flat_map(|e| {
            sched
                .flows
                .iter()
                .zip(&e.rates)
                .map(move |(f, r)| [secs(e.start), secs(e.end), f.0.to_string(), bps(*r)])
        }),
    )?;
    write_rows(
        dir,
        CLASSES,
        &["class", "ceil_bps", "cburst_bytes", "flows"],
        out.classes.iter().map(|c| {
            let flows: Vec<String> = c.flows.iter().map(|f| f.0.to_string()).collect();
            [c.name.clone(), c.ceil.as_bps().to_string(), c.cburst.to_string(), flows.join(" ")]
        }),
    )?;
    write_rows(
        dir,
        RUN,
        &["key", "value"],
        [
            ["window_s".to_string(), secs(SimTime::from(th.window))],
            ["horizon_s".to_string(), secs(out.trace.horizon)],
        ],
    )
}

/// What `report` needs from a run directory.
#[derive(Debug, Clone)]
pub struct Stored {
    pub throughput: ThroughputTrace,
    pub schedule: Schedule,
    pub classes: Vec<ClassCeiling>,
    pub horizon: SimTime,
}

#[derive(Deserialize)]
struct RunRow {
    key: String,
    value: String,
}

#[derive(Deserialize)]
struct ThroughputRow {
    time_s: String,
    flow_id: u32,
    bits_per_second: f64,
}

#[derive(Deserialize)]
struct ExpectedRow {
    start_s: String,
    end_s: String,
    flow_id: u32,
    bits_per_second: f64,
}

#[derive(Deserialize)]
struct ClassRow {
    class: String,
    ceil_bps: u64,
    cburst_bytes: u32,
    flows: String,
}

fn read_rows<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Vec<T>, ArtifactError> {
    let path = dir.join(name);
    let mut r = csv::Reader::from_path(&path).map_err(|source| ArtifactError::Csv {
        path: path.clone(),
        source,
    })?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| ArtifactError::Csv { path, source })
}

/// Read back the artifacts `write_artifacts` produced.
pub fn read_artifacts(dir: &Path) -> Result<Stored, ArtifactError> {
    let format = |name: &str, msg: String| ArtifactError::Format {
        path: dir.join(name),
        msg,
    };
    let time = |name: &str, v: &str| -> Result<SimTime, ArtifactError> {
        parse_duration(v).map(SimTime::from).map_err(|m| format(name, m))
    };

    let run: Vec<RunRow> = read_rows(dir, RUN)?;
    let lookup = |key: &str| {
        run.iter()
            .find(|r| r.key == key)
            .map(|r| r.value.clone())
            .ok_or_else(|| format(RUN, format!("missing {key}")))
    };
    let window = time(RUN, &lookup("window_s")?)? - SimTime::ZERO;
    let horizon = time(RUN, &lookup("horizon_s")?)?;
    if window.is_zero() {
        return Err(format(RUN, "window is zero".into()));
    }

    let rows: Vec<ThroughputRow> = read_rows(dir, THROUGHPUT)?;
    let mut flows: Vec<FlowId> = rows.iter().map(|r| FlowId(r.flow_id)).collect();
    flows.sort();
    flows.dedup();
    let mut bits: Vec<Vec<u64>> = Vec::new();
    let wns = window.as_nanos();
    for r in &rows {
        let t = time(THROUGHPUT, &r.time_s)?.as_nanos();
        if u128::from(t) % wns != 0 {
            return Err(format(THROUGHPUT, format!("{} is not a window start", r.time_s)));
        }
        let w = (u128::from(t) / wns) as usize;
        if bits.len() <= w {
            bits.resize(w + 1, vec![0; flows.len()]);
        }
        let f = flows.binary_search(&FlowId(r.flow_id)).unwrap_or_default();
        bits[w][f] = (r.bits_per_second * window.as_secs_f64()).round() as u64;
    }
    let throughput = ThroughputTrace { window, flows, bits };

    let rows: Vec<ExpectedRow> = read_rows(dir, EXPECTED)?;
    let mut sflows: Vec<FlowId> = rows.iter().map(|r| FlowId(r.flow_id)).collect();
    sflows.sort();
    sflows.dedup();
    let mut epochs: Vec<Epoch> = Vec::new();
    for r in &rows {
        let (start, end) = (time(EXPECTED, &r.start_s)?, time(EXPECTED, &r.end_s)?);
        if epochs.last().is_none_or(|e| (e.start, e.end) != (start, end)) {
            epochs.push(Epoch {
                start,
                end,
                rates: vec![0.0; sflows.len()],
            });
        }
        let f = sflows.binary_search(&FlowId(r.flow_id)).unwrap_or_default();
        if let Some(e) = epochs.last_mut() {
            e.rates[f] = r.bits_per_second;
        }
    }
    let schedule = Schedule { flows: sflows, epochs };

    let rows: Vec<ClassRow> = read_rows(dir, CLASSES)?;
    let mut classes = Vec::new();
    for r in rows {
        let flows = r
            .flows
            .split_whitespace()
            .map(|f| f.parse().map(FlowId).map_err(|_| format(CLASSES, format!("bad flow id {f:?}"))))
            .collect::<Result<_, _>>()?;
        classes.push(ClassCeiling {
            name: r.class,
            ceil: Rate::bps(r.ceil_bps),
            cburst: r.cburst_bytes,
            flows,
        });
    }
    Ok(Stored {
        throughput,
        schedule,
        classes,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_decimals() {
        assert_eq!(secs(SimTime::from_nanos(12_345_678_901)), "12.345678");
        assert_eq!(secs(SimTime::ZERO), "0.000000");
        assert_eq!(millis(Duration::from_nanos(200_160_001)), "200.160001");
    }
}
