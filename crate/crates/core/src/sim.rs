//! Discrete-event loop: constant-bitrate sources feed the classifier, a
//! single link serializes one packet at a time, and the scheduler picks what
//! goes next whenever the link frees up or an idle link sees new work.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use thiserror::Error;

use crate::classify::{admit, Admission, DropReason, FlowFilter};
use crate::queue::{Packet, QueueBank};
use crate::scenario::{validate, CbrSource, Scenario, Violation};
use crate::trace::{Departure, RunTrace};
use crate::tree::{ClassId, Decision, HtbTree};
use crate::units::{transmission_time, Rate, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario is invalid ({} violation(s))", .0.len())]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TxComplete,
    SchedulerWake,
    /// Index into the scenario's sources.
    SourcePacket(usize),
}

impl EventKind {
    /// Order among events at the same instant.
    fn rank(self) -> u8 {
        match self {
            EventKind::TxComplete => 0,
            EventKind::SchedulerWake => 1,
            EventKind::SourcePacket(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    /// Insertion order, breaks remaining ties.
    pub seq: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind.rank(), self.seq).cmp(&(other.time, other.kind.rank(), other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Idle,
    Busy,
}

#[derive(Debug, Clone)]
struct InFlight {
    packet: Packet,
    leaf: ClassId,
    lender_level: u8,
}

/// Point-to-point link: one packet in flight, serialization at `rate`.
#[derive(Debug, Clone)]
pub struct Link {
    pub rate: Rate,
    pub busy_until: SimTime,
    in_flight: Option<InFlight>,
}

impl Link {
    pub fn state(&self) -> LinkState {
        if self.in_flight.is_some() {
            LinkState::Busy
        } else {
            LinkState::Idle
        }
    }
}

#[derive(Debug, Clone)]
struct Source {
    cfg: CbrSource,
    next_sequence: u64,
}

/// A scenario being executed.
#[derive(Debug, Clone)]
pub struct Simulation {
    tree: HtbTree,
    queues: QueueBank,
    filters: Vec<FlowFilter>,
    sources: Vec<Source>,
    link: Link,
    events: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    pending_wake: Option<SimTime>,
    now: SimTime,
    horizon: SimTime,
    trace: RunTrace,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        let violations = validate(scenario);
        if !violations.is_empty() {
            return Err(SimError::Invalid(violations));
        }
        let tree = scenario
            .build_tree()
            .map_err(|e| SimError::Invalid(alloc::vec![Violation::Hierarchy(e)]))?;
        let queues = QueueBank::for_tree(&tree, scenario.queue_capacity);
        let filters = scenario.resolve_filters(&tree);
        let mut sim = Simulation {
            queues,
            filters,
            sources: scenario
                .sources
                .iter()
                .map(|s| Source {
                    cfg: s.clone(),
                    next_sequence: 0,
                })
                .collect(),
            link: Link {
                rate: scenario.link_rate,
                busy_until: SimTime::ZERO,
                in_flight: None,
            },
            events: BinaryHeap::new(),
            next_seq: 0,
            pending_wake: None,
            now: SimTime::ZERO,
            horizon: scenario.horizon,
            trace: RunTrace::new(scenario.horizon, scenario.flows()),
            tree,
        };
        for i in 0..sim.sources.len() {
            let s = &sim.sources[i].cfg;
            if s.start < s.stop {
                let t = s.start;
                sim.schedule(t, EventKind::SourcePacket(i));
            }
        }
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn tree(&self) -> &HtbTree {
        &self.tree
    }

    pub fn queues(&self) -> &QueueBank {
        &self.queues
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    /// Time of the next event before the horizon.
    pub fn peek(&self) -> Option<SimTime> {
        self.events
            .peek()
            .map(|Reverse(e)| e.time)
            .filter(|&t| t < self.horizon)
    }

    /// Execute one event. Returns its time, or `None` once the horizon is
    /// reached.
    pub fn step(&mut self) -> Option<SimTime> {
        self.peek()?;
        let Reverse(ev) = self.events.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        match ev.kind {
            EventKind::SourcePacket(i) => self.emit(i),
            EventKind::TxComplete => self.complete(),
            EventKind::SchedulerWake => {
                if self.pending_wake == Some(ev.time) {
                    self.pending_wake = None;
                }
                self.try_send();
            }
        }
        Some(ev.time)
    }

    pub fn run_to_end(mut self) -> RunTrace {
        while self.step().is_some() {}
        self.finish()
    }

    /// Stop here and hand over the trace, with final queue counters.
    pub fn finish(mut self) -> RunTrace {
        self.trace.queues = self.queues.iter().map(|q| q.counters()).collect();
        self.trace
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.push(Reverse(Event { time, kind, seq }));
    }

    fn emit(&mut self, i: usize) {
        let now = self.now;
        let src = &mut self.sources[i];
        let packet = Packet {
            flow: src.cfg.flow,
            size: src.cfg.packet_size,
            created_at: now,
            sequence: src.next_sequence,
            src: src.cfg.src,
            dst: src.cfg.dst,
        };
        src.next_sequence += 1;
        let next = now + src.cfg.interval;
        let more = next < src.cfg.stop;
        let flow = packet.flow;
        if more {
            self.schedule(next, EventKind::SourcePacket(i));
        }
        match admit(&mut self.tree, &mut self.queues, &self.filters, packet, now) {
            Admission::Enqueued(_) => self.try_send(),
            Admission::Dropped(reason) => {
                let d = self.trace.drops.entry(flow).or_default();
                match reason {
                    DropReason::NoFilter => d.no_filter += 1,
                    DropReason::QueueFull => d.queue_full += 1,
                }
            }
        }
    }

    fn complete(&mut self) {
        if let Some(f) = self.link.in_flight.take() {
            self.trace.record(Departure {
                flow: f.packet.flow,
                leaf: f.leaf,
                sequence: f.packet.sequence,
                bytes: f.packet.size,
                created_at: f.packet.created_at,
                departed_at: self.now,
                lender_level: f.lender_level,
            });
        }
        self.try_send();
    }

    fn try_send(&mut self) {
        if self.link.in_flight.is_some() || self.tree.backlog() == 0 {
            return;
        }
        let now = self.now;
        let decision = self
            .tree
            .dequeue_select(now)
            .expect("backlog checked above");
        match decision {
            Decision::Send(leaf) => {
                let packet = self
                    .queues
                    .of_leaf_mut(&self.tree, leaf)
                    .and_then(|q| q.pop())
                    .expect("scheduler only selects backlogged leaves");
                let level = self
                    .tree
                    .charge(leaf, packet.size, now)
                    .expect("charging the leaf just selected");
                let tx = transmission_time(packet.size, self.link.rate).expect("validated link rate");
                self.link.busy_until = now + tx;
                self.link.in_flight = Some(InFlight {
                    packet,
                    leaf,
                    lender_level: level as u8,
                });
                self.schedule(now + tx, EventKind::TxComplete);
            }
            Decision::WaitUntil(t) => {
                if self.pending_wake.is_none_or(|w| t < w) {
                    self.pending_wake = Some(t);
                    self.schedule(t, EventKind::SchedulerWake);
                }
            }
            Decision::Stalled => {}
        }
    }
}

/// Run `scenario` to its horizon.
pub fn run(scenario: &Scenario) -> Result<RunTrace, SimError> {
    Ok(Simulation::new(scenario)?.run_to_end())
}
