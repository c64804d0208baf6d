//! Packet classification onto leaf classes.

use crate::queue::{FlowId, Label, Packet, Push, QueueBank};
use crate::tree::{ClassId, HtbTree};
use crate::units::SimTime;

/// Predicate over packet metadata. Unset fields match anything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowMatch {
    pub flow: Option<FlowId>,
    pub src: Option<Label>,
    pub dst: Option<Label>,
}

impl FlowMatch {
    pub fn flow(flow: FlowId) -> Self {
        FlowMatch {
            flow: Some(flow),
            ..Self::default()
        }
    }

    pub fn any() -> Self {
        Self::default()
    }

    pub fn matches(&self, p: &Packet) -> bool {
        self.flow.is_none_or(|f| f == p.flow)
            && self.src.is_none_or(|s| s == p.src)
            && self.dst.is_none_or(|d| d == p.dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowFilter {
    pub matcher: FlowMatch,
    pub leaf: ClassId,
}

/// First filter matching `packet` decides its leaf.
pub fn classify(filters: &[FlowFilter], packet: &Packet) -> Option<ClassId> {
    filters.iter().find(|f| f.matcher.matches(packet)).map(|f| f.leaf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NoFilter,
    QueueFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Enqueued(ClassId),
    Dropped(DropReason),
}

/// Classify, queue and notify the scheduler. Exactly one notification per
/// enqueued packet; none for drops.
pub fn admit(
    tree: &mut HtbTree,
    queues: &mut QueueBank,
    filters: &[FlowFilter],
    packet: Packet,
    now: SimTime,
) -> Admission {
    let Some(leaf) = classify(filters, &packet) else {
        return Admission::Dropped(DropReason::NoFilter);
    };
    let Some(queue) = queues.of_leaf_mut(tree, leaf) else {
        return Admission::Dropped(DropReason::NoFilter);
    };
    match queue.push(packet) {
        Push::Full => Admission::Dropped(DropReason::QueueFull),
        Push::Ok => {
            tree.enqueue_notify(leaf, now)
                .expect("filters target leaves of this tree");
            Admission::Enqueued(leaf)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::HtbClassConfig as C;
    use crate::units::Rate;
    use alloc::format;
    use alloc::vec::Vec;

    fn tree() -> HtbTree {
        let mut cfg = alloc::vec![C::root(1, Rate::mbps(50))];
        for i in 0..4u32 {
            cfg.push(C::leaf(&format!("leaf{i}"), "root", Rate::mbps(1), Rate::mbps(10), i));
        }
        HtbTree::build(&cfg, Rate::mbps(50)).unwrap()
    }

    fn pkt(flow: u32) -> Packet {
        Packet {
            flow: FlowId(flow),
            size: 1500,
            created_at: SimTime::ZERO,
            sequence: 0,
            src: Label(0),
            dst: Label(1),
        }
    }

    fn direct(t: &HtbTree) -> Vec<FlowFilter> {
        t.leaves()
            .iter()
            .enumerate()
            .map(|(i, &leaf)| FlowFilter {
                matcher: FlowMatch::flow(FlowId(i as u32)),
                leaf,
            })
            .collect()
    }

    #[test]
    fn direct_map() {
        let t = tree();
        assert_eq!(classify(&direct(&t), &pkt(3)), Some(t.leaves()[3]));
    }

    #[test]
    fn empty_filters_match_nothing() {
        assert_eq!(classify(&[], &pkt(0)), None);
    }

    #[test]
    fn first_match_wins() {
        let t = tree();
        let (a, b) = (t.leaves()[0], t.leaves()[1]);
        let filters = [
            FlowFilter {
                matcher: FlowMatch::flow(FlowId(0)),
                leaf: a,
            },
            FlowFilter {
                matcher: FlowMatch::any(),
                leaf: b,
            },
        ];
        assert_eq!(classify(&filters, &pkt(0)), Some(a));
        assert_eq!(classify(&filters, &pkt(5)), Some(b));
    }

    #[test]
    fn endpoint_labels() {
        let t = tree();
        let m = FlowMatch {
            dst: Some(Label(9)),
            ..FlowMatch::any()
        };
        let f = [FlowFilter {
            matcher: m,
            leaf: t.leaves()[2],
        }];
        assert_eq!(classify(&f, &pkt(0)), None);
        let mut p = pkt(0);
        p.dst = Label(9);
        assert_eq!(classify(&f, &p), Some(t.leaves()[2]));
    }

    #[test]
    fn admit_outcomes() {
        let mut t = tree();
        let mut q = QueueBank::for_tree(&t, 1);
        let f = direct(&t);
        let l0 = t.leaves()[0];
        assert_eq!(admit(&mut t, &mut q, &f, pkt(0), SimTime::ZERO), Admission::Enqueued(l0));
        assert_eq!(t.snapshot(l0).backlog, 1);
        assert_ne!(t.snapshot(l0).active_priorities, 0);
        assert_eq!(
            admit(&mut t, &mut q, &f, pkt(0), SimTime::ZERO),
            Admission::Dropped(DropReason::QueueFull)
        );
        assert_eq!(q.queue(0).drops(), 1);
        assert_eq!(t.snapshot(l0).backlog, 1);
        assert_eq!(
            admit(&mut t, &mut q, &f, pkt(42), SimTime::ZERO),
            Admission::Dropped(DropReason::NoFilter)
        );
        assert_eq!(t.backlog(), 1);
    }
}
