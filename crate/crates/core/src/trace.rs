//! What a run produced: departures, drops, queue counters, windowed
//! throughput.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;

use crate::queue::{FlowId, QueueCounters};
use crate::tree::ClassId;
use crate::units::{duration_nanos, SimTime};

/// One packet that finished serialization on the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure {
    pub flow: FlowId,
    pub leaf: ClassId,
    pub sequence: u64,
    pub bytes: u32,
    pub created_at: SimTime,
    pub departed_at: SimTime,
    /// Level of the class whose assured bucket paid; 0 = the leaf itself.
    pub lender_level: u8,
}

impl Departure {
    pub fn delay(&self) -> Duration {
        self.departed_at - self.created_at
    }

    pub fn borrowed(&self) -> bool {
        self.lender_level > 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub no_filter: u64,
    pub queue_full: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.no_filter + self.queue_full
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunTrace {
    pub horizon: SimTime,
    pub flows: Vec<FlowId>,
    pub departures: Vec<Departure>,
    pub drops: BTreeMap<FlowId, DropCounts>,
    /// Indexed by queue index.
    pub queues: Vec<QueueCounters>,
}

impl RunTrace {
    pub fn new(horizon: SimTime, flows: Vec<FlowId>) -> Self {
        RunTrace {
            horizon,
            drops: flows.iter().map(|&f| (f, DropCounts::default())).collect(),
            flows,
            ..Self::default()
        }
    }

    pub fn record(&mut self, d: Departure) {
        self.departures.push(d);
    }

    pub fn throughput(&self, window: Duration) -> ThroughputTrace {
        ThroughputTrace::from_departures(&self.departures, &self.flows, self.horizon, window)
    }

    pub fn departures_of(&self, flow: FlowId) -> impl Iterator<Item = &Departure> + '_ {
        self.departures.iter().filter(move |d| d.flow == flow)
    }
}

/// Delivered bits per flow per fixed window. Window `i` covers
/// `[i * window, (i + 1) * window)`; departures count in the window holding
/// their completion time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThroughputTrace {
    pub window: Duration,
    pub flows: Vec<FlowId>,
    /// `bits[w][f]`: bits of `flows[f]` delivered in window `w`.
    pub bits: Vec<Vec<u64>>,
}

impl ThroughputTrace {
    pub fn from_departures(departures: &[Departure], flows: &[FlowId], horizon: SimTime, window: Duration) -> Self {
        let w = duration_nanos(window).max(1);
        let count = horizon.as_nanos().div_ceil(w) as usize;
        let mut bits = vec![vec![0u64; flows.len()]; count];
        for d in departures {
            let Ok(f) = flows.binary_search(&d.flow) else { continue };
            let i = (d.departed_at.as_nanos() / w) as usize;
            if let Some(row) = bits.get_mut(i) {
                row[f] += u64::from(d.bytes) * 8;
            }
        }
        ThroughputTrace {
            window,
            flows: flows.to_vec(),
            bits,
        }
    }

    pub fn windows(&self) -> usize {
        self.bits.len()
    }

    pub fn window_start(&self, i: usize) -> SimTime {
        SimTime::from_nanos(duration_nanos(self.window) * i as u64)
    }

    pub fn flow_index(&self, flow: FlowId) -> Option<usize> {
        self.flows.iter().position(|&f| f == flow)
    }

    /// Measured bit/s of flow index `f` in window `w`.
    pub fn rate(&self, w: usize, f: usize) -> f64 {
        self.bits[w][f] as f64 / self.window.as_secs_f64()
    }

    /// Mean bit/s of `flow` over the windows fully inside `[from, to)`.
    pub fn mean_rate(&self, flow: FlowId, from: SimTime, to: SimTime) -> Option<f64> {
        let f = self.flow_index(flow)?;
        let w = duration_nanos(self.window);
        let first = from.as_nanos().div_ceil(w) as usize;
        let last = (to.as_nanos() / w) as usize;
        let (mut sum, mut n) = (0.0, 0usize);
        for i in first..last.min(self.windows()) {
            sum += self.rate(i, f);
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }
}
