//! Class hierarchy files: one `<class id="...">` element per class, fields
//! as child elements.
//!
//! ```xml
//! <htb>
//!   <class id="root">
//!     <rate>50Mbit/s</rate>
//!     <ceil>50Mbit/s</ceil>
//!     <parentId>NULL</parentId>
//!     <level>1</level>
//!   </class>
//!   <class id="leaf0">
//!     <rate>3Mbit/s</rate>
//!     <ceil>20Mbit/s</ceil>
//!     <parentId>root</parentId>
//!     <level>0</level>
//!     <quantum>1500</quantum>
//!     <priority>0</priority>
//!     <queueNum>0</queueNum>
//!   </class>
//! </htb>
//! ```
//!
//! Rates take a `bps`, `kbps`, `Mbps`, `Gbps` (or `bit/s`, `kbit/s`,
//! `Mbit/s`, `Gbit/s`) suffix; a bare number is bit/s. `mbuffer` takes `s`,
//! `ms`, `us` or `ns`; a bare number is seconds. Byte fields may carry a `B`
//! suffix.

use std::collections::BTreeMap;
use std::fmt::Write as _;


use htbsim_core::{HtbClassConfig, Rate};

use crate::error::ConfigError;
use crate::units::{format_duration, parse_bytes, parse_duration, parse_rate};

const FIELDS: [&str; 10] = [
    "rate", "ceil", "burst", "cburst", "parentId", "level", "quantum", "mbuffer", "priority", "queueNum",
];

pub fn parse_hierarchy(text: &str) -> Result<Vec<HtbClassConfig>, ConfigError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ConfigError::Syntax {
        line: e.pos().row,
        msg: e.to_string(),
    })?;
    let line_of = |n: roxmltree::Node| doc.text_pos_at(n.range().start).row;
    let mut out = Vec::new();
    let mut seen: BTreeMap<String, u32> = BTreeMap::new();
    for node in doc.root_element().children().filter(|n| n.is_element()) {
        let line = line_of(node);
        if node.tag_name().name() != "class" {
            return Err(ConfigError::UnexpectedElement {
                line,
                element: node.tag_name().name().to_string(),
            });
        }
        let name = node
            .attribute("id")
            .ok_or(ConfigError::MissingId { line })?
            .to_string();
        if let Some(first) = seen.insert(name.clone(), line) {
            return Err(ConfigError::DuplicateClass { line, name, first });
        }
        let mut fields: BTreeMap<&str, (String, u32)> = BTreeMap::new();
        for f in node.children().filter(|n| n.is_element()) {
            let tag = f.tag_name().name();
            let fline = line_of(f);
            if !FIELDS.contains(&tag) {
                return Err(ConfigError::UnknownField {
                    line: fline,
                    class: name,
                    field: tag.to_string(),
                });
            }
            let value = f.text().unwrap_or("").trim().to_string();
            if fields.insert(tag, (value, fline)).is_some() {
                return Err(ConfigError::RepeatedField {
                    line: fline,
                    class: name,
                    field: tag.to_string(),
                });
            }
        }
        out.push(class_from_fields(&name, line, &fields)?);
    }
    Ok(out)
}

type Fields<'a> = BTreeMap<&'a str, (String, u32)>;

fn class_from_fields(name: &str, line: u32, fields: &Fields) -> Result<HtbClassConfig, ConfigError> {
    let required = |field: &'static str| {
        fields.get(field).ok_or_else(|| ConfigError::MissingField {
            line,
            class: name.to_string(),
            field,
        })
    };
    let bad = |field: &'static str, fline: u32, msg: String| ConfigError::BadValue {
        line: fline,
        class: name.to_string(),
        field,
        msg,
    };
    let rate = |field: &'static str| -> Result<Rate, ConfigError> {
        let (v, l) = required(field)?;
        parse_rate(v).map_err(|m| bad(field, *l, m))
    };
    let optional = |field: &'static str| fields.get(field);
    let int = |field: &'static str, v: &str, l: u32| -> Result<u32, ConfigError> {
        v.parse::<u32>().map_err(|_| bad(field, l, format!("expected a non-negative integer, found {v:?}")))
    };
    let bytes = |field: &'static str| -> Result<Option<u32>, ConfigError> {
        optional(field).map(|(v, l)| parse_bytes(v).map_err(|m| bad(field, *l, m))).transpose()
    };

    let (parent_raw, _) = required("parentId")?;
    let parent = (parent_raw != "NULL").then(|| parent_raw.clone());
    let (level_raw, level_line) = required("level")?;
    let level = int("level", level_raw, *level_line)?;
    let assured = rate("rate")?;
    let ceil = rate("ceil")?;

    let is_root = parent.is_none();
    let is_leaf = !is_root && level == 0;
    let naming = |msg: &str| ConfigError::Naming {
        line,
        name: name.to_string(),
        msg: msg.to_string(),
    };
    if is_root && name != "root" {
        return Err(naming("the class without a parent must be named 'root'"));
    }
    if !is_root && name == "root" {
        return Err(naming("'root' must have parentId NULL"));
    }
    if is_leaf && !name.contains("leaf") {
        return Err(naming("leaf class name must contain 'leaf'"));
    }
    if !is_root && !is_leaf && !name.contains("inner") {
        return Err(naming("inner class name must contain 'inner'"));
    }

    let priority = optional("priority")
        .map(|(v, l)| {
            let p = int("priority", v, *l)?;
            u8::try_from(p).map_err(|_| bad("priority", *l, format!("{p} is out of range")))
        })
        .transpose()?;
    let queue_index = optional("queueNum").map(|(v, l)| int("queueNum", v, *l)).transpose()?;
    if is_leaf && queue_index.is_none() {
        return Err(ConfigError::MissingField {
            line,
            class: name.to_string(),
            field: "queueNum",
        });
    }
    if !is_leaf {
        for field in ["priority", "queueNum"] {
            if let Some((_, l)) = fields.get(field) {
                return Err(ConfigError::LeafOnlyField {
                    line: *l,
                    class: name.to_string(),
                    field,
                });
            }
        }
    }
    let mbuffer = optional("mbuffer")
        .map(|(v, l)| parse_duration(v).map_err(|m| bad("mbuffer", *l, m)))
        .transpose()?;

    Ok(HtbClassConfig {
        name: name.to_string(),
        parent,
        level,
        assured,
        ceil,
        burst: bytes("burst")?,
        cburst: bytes("cburst")?,
        quantum: bytes("quantum")?,
        mbuffer,
        priority,
        queue_index,
    })
}

/// Render classes in the format `parse_hierarchy` reads.
pub fn write_hierarchy(classes: &[HtbClassConfig]) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<htb>\n");
    for c in classes {
        let _ = writeln!(s, "  <class id=\"{}\">", escape(&c.name));
        let mut field = |tag: &str, value: String| {
            let _ = writeln!(s, "    <{tag}>{}</{tag}>", escape(&value));
        };
        field("rate", c.assured.to_string());
        field("ceil", c.ceil.to_string());
        if let Some(b) = c.burst {
            field("burst", b.to_string());
        }
        if let Some(b) = c.cburst {
            field("cburst", b.to_string());
        }
        field("parentId", c.parent.clone().unwrap_or_else(|| "NULL".into()));
        field("level", c.level.to_string());
        if let Some(q) = c.quantum {
            field("quantum", q.to_string());
        }
        if let Some(m) = c.mbuffer {
            field("mbuffer", format_duration(m));
        }
        if let Some(p) = c.priority {
            field("priority", p.to_string());
        }
        if let Some(q) = c.queue_index {
            field("queueNum", q.to_string());
        }
        s.push_str("  </class>\n");
    }
    s.push_str("</htb>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
