//! Experiment description: hierarchy, link, traffic sources, filters.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use crate::class::{HtbClassConfig, DEFAULT_MTU};
use crate::classify::{classify, FlowFilter, FlowMatch};
use crate::error::BuildError;
use crate::queue::{FlowId, Label, Packet, DEFAULT_QUEUE_CAPACITY};
use crate::tree::{check_hierarchy, ClassId, HtbTree};
use crate::units::{Rate, SimTime};

/// Constant-bitrate source: one packet every `interval` in `[start, stop)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CbrSource {
    pub flow: FlowId,
    pub start: SimTime,
    pub stop: SimTime,
    pub packet_size: u32,
    pub interval: Duration,
    pub src: Label,
    pub dst: Label,
}

impl CbrSource {
    pub fn new(flow: u32, start: SimTime, stop: SimTime, packet_size: u32, interval: Duration) -> Self {
        CbrSource {
            flow: FlowId(flow),
            start,
            stop,
            packet_size,
            interval,
            src: Label(0),
            dst: Label(1),
        }
    }

    pub fn offered_rate(&self) -> Rate {
        Rate::of_packets(self.packet_size, self.interval).unwrap_or(Rate::ZERO)
    }

    /// Offered load in bit/s without truncation.
    pub fn offered_bps(&self) -> f64 {
        let ns = self.interval.as_nanos() as f64;
        if ns == 0.0 {
            return 0.0;
        }
        f64::from(self.packet_size) * 8.0 * 1e9 / ns
    }

    pub(crate) fn probe_packet(&self) -> Packet {
        Packet {
            flow: self.flow,
            size: self.packet_size,
            created_at: self.start,
            sequence: 0,
            src: self.src,
            dst: self.dst,
        }
    }
}

/// Filter as written in a scenario: the target leaf by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterRule {
    pub matcher: FlowMatch,
    pub leaf: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub hierarchy: Vec<HtbClassConfig>,
    pub link_rate: Rate,
    pub sources: Vec<CbrSource>,
    pub filters: Vec<FilterRule>,
    pub horizon: SimTime,
    /// Packets per leaf queue.
    pub queue_capacity: usize,
    pub report_window: Duration,
}

impl Scenario {
    pub fn new(hierarchy: Vec<HtbClassConfig>, link_rate: Rate, horizon: SimTime) -> Self {
        Scenario {
            hierarchy,
            link_rate,
            sources: Vec::new(),
            filters: Vec::new(),
            horizon,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            report_window: Duration::from_secs(1),
        }
    }

    /// Largest packet any source emits, floored at the default MTU.
    pub fn mtu(&self) -> u32 {
        self.sources
            .iter()
            .map(|s| s.packet_size)
            .max()
            .unwrap_or(0)
            .max(DEFAULT_MTU)
    }

    pub fn build_tree(&self) -> Result<HtbTree, BuildError> {
        HtbTree::build_with_mtu(&self.hierarchy, self.link_rate, self.mtu())
    }

    /// Filters with leaf names resolved against `tree`; unknown or non-leaf
    /// targets are skipped (validation reports them).
    pub fn resolve_filters(&self, tree: &HtbTree) -> Vec<FlowFilter> {
        self.filters
            .iter()
            .filter_map(|f| {
                let leaf = tree.class_id(&f.leaf).filter(|&c| tree.is_leaf(c))?;
                Some(FlowFilter {
                    matcher: f.matcher,
                    leaf,
                })
            })
            .collect()
    }

    /// Each source with the leaf its packets land in.
    pub fn flow_specs(&self, tree: &HtbTree) -> Vec<FlowSpec> {
        let filters = self.resolve_filters(tree);
        self.sources
            .iter()
            .filter_map(|s| {
                let leaf = classify(&filters, &s.probe_packet())?;
                Some(FlowSpec {
                    flow: s.flow,
                    leaf,
                    start: s.start,
                    stop: s.stop,
                    offered_bps: s.offered_bps(),
                })
            })
            .collect()
    }

    /// Distinct flow ids in ascending order.
    pub fn flows(&self) -> Vec<FlowId> {
        let mut v: Vec<FlowId> = self.sources.iter().map(|s| s.flow).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Sources run past the horizon and will be cut short.
    pub fn horizon_truncates(&self) -> bool {
        self.sources.iter().any(|s| s.stop > self.horizon)
    }
}

/// A source as the rate oracle sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub flow: FlowId,
    pub leaf: ClassId,
    pub start: SimTime,
    pub stop: SimTime,
    pub offered_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Hierarchy(BuildError),
    DuplicateQueueIndex(u32),
    QueueIndexOutOfRange { leaf: String, index: u32, leaves: usize },
    FilterTargetUnknown(String),
    UncoveredFlow(FlowId),
    BadSource { flow: FlowId, reason: &'static str },
    ZeroLinkRate,
    ZeroReportWindow,
    ZeroQueueCapacity,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Hierarchy(e) => e.fmt(f),
            Violation::DuplicateQueueIndex(q) => write!(f, "duplicate queue index {q}"),
            Violation::QueueIndexOutOfRange { leaf, index, leaves } => write!(
                f,
                "leaf {leaf:?} uses queue index {index}, outside 0..{leaves}"
            ),
            Violation::FilterTargetUnknown(l) => write!(f, "filter targets {l:?}, which is not a leaf"),
            Violation::UncoveredFlow(fl) => write!(f, "no filter matches flow {fl}"),
            Violation::BadSource { flow, reason } => write!(f, "source of flow {flow}: {reason}"),
            Violation::ZeroLinkRate => f.write_str("link rate is zero"),
            Violation::ZeroReportWindow => f.write_str("report window is zero"),
            Violation::ZeroQueueCapacity => f.write_str("queue capacity is zero"),
        }
    }
}

/// Every problem with a scenario. Empty means it can be run.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out: Vec<Violation> = check_hierarchy(&s.hierarchy, s.mtu())
        .into_iter()
        .map(Violation::Hierarchy)
        .collect();
    if s.link_rate.is_zero() {
        out.push(Violation::ZeroLinkRate);
    }
    if s.report_window.is_zero() {
        out.push(Violation::ZeroReportWindow);
    }
    if s.queue_capacity == 0 {
        out.push(Violation::ZeroQueueCapacity);
    }

    let leaves: Vec<&HtbClassConfig> = s
        .hierarchy
        .iter()
        .filter(|c| !c.is_root() && c.level == 0)
        .collect();
    let mut seen = Vec::new();
    for c in &leaves {
        let Some(q) = c.queue_index else { continue };
        if seen.contains(&q) {
            if !out.contains(&Violation::DuplicateQueueIndex(q)) {
                out.push(Violation::DuplicateQueueIndex(q));
            }
        } else {
            seen.push(q);
        }
        if q as usize >= leaves.len() {
            out.push(Violation::QueueIndexOutOfRange {
                leaf: c.name.clone(),
                index: q,
                leaves: leaves.len(),
            });
        }
    }

    for f in &s.filters {
        if !leaves.iter().any(|c| c.name == f.leaf) {
            out.push(Violation::FilterTargetUnknown(f.leaf.clone()));
        }
    }
    for src in &s.sources {
        let covered = s
            .filters
            .iter()
            .find(|f| f.matcher.matches(&src.probe_packet()))
            .is_some_and(|f| leaves.iter().any(|c| c.name == f.leaf));
        if !covered {
            out.push(Violation::UncoveredFlow(src.flow));
        }
        let bad = |reason| Violation::BadSource {
            flow: src.flow,
            reason,
        };
        if src.packet_size == 0 {
            out.push(bad("packet size is zero"));
        }
        if src.interval.is_zero() {
            out.push(bad("interval is zero"));
        }
        if src.stop < src.start {
            out.push(bad("stops before it starts"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::HtbClassConfig as C;

    fn two_leaves(q1: u32) -> Scenario {
        let h = alloc::vec![
            C::root(1, Rate::mbps(50)),
            C::leaf("leaf0", "root", Rate::mbps(5), Rate::mbps(30), 0).with_priority(0),
            C::leaf("leaf1", "root", Rate::mbps(5), Rate::mbps(30), q1).with_priority(1),
        ];
        let mut s = Scenario::new(h, Rate::mbps(50), SimTime::from_secs(140));
        for i in 0..2u32 {
            s.sources.push(CbrSource::new(
                i,
                SimTime::from_secs(10 * u64::from(i)),
                SimTime::from_secs(10 * u64::from(i) + 100),
                1500,
                Duration::from_micros(100),
            ));
            s.filters.push(FilterRule {
                matcher: FlowMatch::flow(FlowId(i)),
                leaf: alloc::format!("leaf{i}"),
            });
        }
        s
    }

    #[test]
    fn priority_scenario_is_valid() {
        assert_eq!(validate(&two_leaves(1)), []);
    }

    #[test]
    fn duplicate_queue_index() {
        assert!(validate(&two_leaves(0)).contains(&Violation::DuplicateQueueIndex(0)));
    }

    #[test]
    fn queue_index_gap() {
        assert!(matches!(
            validate(&two_leaves(5)).as_slice(),
            [Violation::QueueIndexOutOfRange { index: 5, .. }]
        ));
    }

    #[test]
    fn ceiling_below_assured() {
        let mut s = two_leaves(1);
        s.hierarchy[1].assured = Rate::mbps(25);
        s.hierarchy[1].ceil = Rate::mbps(20);
        assert!(matches!(
            validate(&s).as_slice(),
            [Violation::Hierarchy(BuildError::CeilingBelowAssured { .. })]
        ));
    }

    #[test]
    fn uncovered_flow_and_bad_target() {
        let mut s = two_leaves(1);
        s.filters[1].leaf = "root".into();
        let v = validate(&s);
        assert!(v.contains(&Violation::FilterTargetUnknown("root".into())));
        assert!(v.contains(&Violation::UncoveredFlow(FlowId(1))));
    }

    #[test]
    fn priority_out_of_range() {
        let mut s = two_leaves(1);
        s.hierarchy[2].priority = Some(9);
        assert!(matches!(
            validate(&s).as_slice(),
            [Violation::Hierarchy(BuildError::PriorityOutOfRange { priority: 9, .. })]
        ));
    }

    #[test]
    fn flow_specs_follow_filters() {
        let s = two_leaves(1);
        let t = s.build_tree().unwrap();
        let specs = s.flow_specs(&t);
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1].leaf, t.class_id("leaf1").unwrap());
        assert_eq!(specs[0].offered_bps, 120e6);
    }
}
