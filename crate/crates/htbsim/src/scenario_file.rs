//! Scenario files (TOML).
//!
//! ```toml
//! hierarchy = "scenario1.xml"   # relative to this file
//! link_rate = "50Mbit/s"
//! horizon = 140                 # seconds, or "140s"
//! queue_capacity = 500          # optional, packets per leaf
//! report_window = "1s"          # optional
//!
//! [[source]]
//! flow = 0
//! start = 0
//! stop = 100
//! packet_size = 1500
//! interval = "100us"
//! src = "h0"                    # optional label
//! dst = "sink"                  # optional label
//!
//! [[filter]]                    # first match wins
//! flow = 0                      # any of flow, src, dst; unset matches all
//! leaf = "leaf0"
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use htbsim_core::{
    CbrSource, FilterRule, FlowId, FlowMatch, HtbClassConfig, Label, Rate, Scenario, SimTime, DEFAULT_QUEUE_CAPACITY,
};
use serde::Deserialize;

use crate::error::ConfigError;
use crate::hierarchy::parse_hierarchy;
use crate::units::{parse_duration, parse_rate};

/// Label of a source that names no `src` or `dst`; no filter can name it.
const UNLABELLED: Label = Label(u32::MAX);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    hierarchy: String,
    link_rate: Value,
    horizon: Value,
    queue_capacity: Option<usize>,
    report_window: Option<Value>,
    #[serde(default)]
    source: Vec<SourceEntry>,
    #[serde(default)]
    filter: Vec<FilterEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceEntry {
    flow: u32,
    start: Value,
    stop: Value,
    packet_size: u32,
    interval: Value,
    src: Option<String>,
    dst: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterEntry {
    flow: Option<u32>,
    src: Option<String>,
    dst: Option<String>,
    leaf: String,
}

/// A number or a string with a unit.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Value {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(f) => f.to_string(),
            Value::Text(s) => s.clone(),
        }
    }

    fn duration(&self, field: &str) -> Result<Duration, ConfigError> {
        parse_duration(&self.text()).map_err(|msg| bad(field, msg))
    }

    fn rate(&self, field: &str) -> Result<Rate, ConfigError> {
        parse_rate(&self.text()).map_err(|msg| bad(field, msg))
    }
}

fn bad(field: &str, msg: String) -> ConfigError {
    ConfigError::ScenarioValue {
        field: field.to_string(),
        msg,
    }
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file(path: &Path) -> impl FnOnce(ConfigError) -> ConfigError + '_ {
    move |e| match e {
        e @ ConfigError::Io { .. } => e,
        e => ConfigError::InFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        },
    }
}

pub fn load_hierarchy(path: &Path) -> Result<Vec<HtbClassConfig>, ConfigError> {
    parse_hierarchy(&read_file(path)?).map_err(in_file(path))
}

/// Load a scenario and the hierarchy it names, or `hierarchy` instead when given.
pub fn load_scenario(path: &Path, hierarchy: Option<&Path>) -> Result<Scenario, ConfigError> {
    let text = read_file(path)?;
    let file = parse_file(&text).map_err(in_file(path))?;
    let classes = match hierarchy {
        Some(h) => load_hierarchy(h)?,
        None => {
            let base = path.parent().unwrap_or(Path::new("."));
            load_hierarchy(&base.join(&file.hierarchy))?
        }
    };
    build(file, classes).map_err(in_file(path))
}

/// Parse scenario text against an already loaded hierarchy; the file's
/// `hierarchy` entry is ignored.
pub fn parse_scenario(text: &str, classes: Vec<HtbClassConfig>) -> Result<Scenario, ConfigError> {
    build(parse_file(text)?, classes)
}

fn parse_file(text: &str) -> Result<File, ConfigError> {
    if let Err(e) = text.parse::<toml::Table>() {
        return Err(ConfigError::TomlSyntax(e.to_string().trim_end().to_string()));
    }
    toml::from_str(text).map_err(|e| ConfigError::TomlSchema(e.to_string().trim_end().to_string()))
}

fn build(file: File, classes: Vec<HtbClassConfig>) -> Result<Scenario, ConfigError> {
    let horizon = SimTime::from(file.horizon.duration("horizon")?);
    let mut s = Scenario::new(classes, file.link_rate.rate("link_rate")?, horizon);
    s.queue_capacity = file.queue_capacity.unwrap_or(DEFAULT_QUEUE_CAPACITY);
    if let Some(w) = &file.report_window {
        s.report_window = w.duration("report_window")?;
    }

    let mut labels: BTreeMap<String, Label> = BTreeMap::new();
    let mut intern = |name: &Option<String>| match name {
        None => UNLABELLED,
        Some(n) => {
            let next = Label(labels.len() as u32);
            *labels.entry(n.clone()).or_insert(next)
        }
    };
    for (i, src) in file.source.iter().enumerate() {
        let at = |f: &str| format!("source[{i}].{f}");
        s.sources.push(CbrSource {
            flow: FlowId(src.flow),
            start: SimTime::from(src.start.duration(&at("start"))?),
            stop: SimTime::from(src.stop.duration(&at("stop"))?),
            packet_size: src.packet_size,
            interval: src.interval.duration(&at("interval"))?,
            src: intern(&src.src),
            dst: intern(&src.dst),
        });
    }
    for f in &file.filter {
        s.filters.push(FilterRule {
            matcher: FlowMatch {
                flow: f.flow.map(FlowId),
                src: f.src.as_ref().map(|_| intern(&f.src)),
                dst: f.dst.as_ref().map(|_| intern(&f.dst)),
            },
            leaf: f.leaf.clone(),
        });
    }
    Ok(s)
}
