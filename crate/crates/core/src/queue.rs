//! Per-leaf FIFO packet storage.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use crate::tree::{ClassId, HtbTree};
use crate::units::SimTime;

/// Default per-leaf queue capacity in packets.
pub const DEFAULT_QUEUE_CAPACITY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Interned endpoint name (host label) attached to packets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    /// Physical-layer size in bytes.
    pub size: u32,
    pub created_at: SimTime,
    /// Per-flow sequence number, starting at 0.
    pub sequence: u64,
    pub src: Label,
    pub dst: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Push {
    Ok,
    Full,
}

/// Lifetime counters of one queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueCounters {
    /// Every push attempt, including tail drops.
    pub pushes: u64,
    pub pops: u64,
    pub drops: u64,
    pub residual: u64,
}

/// Bounded tail-drop FIFO.
#[derive(Debug, Clone)]
pub struct LeafQueue {
    packets: VecDeque<Packet>,
    capacity: usize,
    pushes: u64,
    pops: u64,
    drops: u64,
}

impl LeafQueue {
    pub fn new(capacity: usize) -> Self {
        LeafQueue {
            packets: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            pushes: 0,
            pops: 0,
            drops: 0,
        }
    }

    pub fn push(&mut self, p: Packet) -> Push {
        self.pushes += 1;
        if self.packets.len() >= self.capacity {
            self.drops += 1;
            return Push::Full;
        }
        self.packets.push_back(p);
        Push::Ok
    }

    /// Remove the head. `None` on an empty queue means the caller's view of
    /// occupancy is wrong.
    pub fn pop(&mut self) -> Option<Packet> {
        let p = self.packets.pop_front()?;
        self.pops += 1;
        Some(p)
    }

    pub fn front(&self) -> Option<&Packet> {
        self.packets.front()
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn counters(&self) -> QueueCounters {
        QueueCounters {
            pushes: self.pushes,
            pops: self.pops,
            drops: self.drops,
            residual: self.packets.len() as u64,
        }
    }
}

/// The queues behind a tree's leaves, indexed by each leaf's queue index.
#[derive(Debug, Clone)]
pub struct QueueBank {
    queues: Vec<LeafQueue>,
}

impl QueueBank {
    pub fn for_tree(tree: &HtbTree, capacity: usize) -> Self {
        let n = tree
            .leaves()
            .iter()
            .filter_map(|&l| tree.queue_index(l))
            .map(|q| q as usize + 1)
            .max()
            .unwrap_or(0);
        QueueBank {
            queues: (0..n).map(|_| LeafQueue::new(capacity)).collect(),
        }
    }

    pub fn queue(&self, index: u32) -> &LeafQueue {
        &self.queues[index as usize]
    }

    pub fn queue_mut(&mut self, index: u32) -> &mut LeafQueue {
        &mut self.queues[index as usize]
    }

    /// Queue backing `leaf`.
    pub fn of_leaf_mut(&mut self, tree: &HtbTree, leaf: ClassId) -> Option<&mut LeafQueue> {
        let q = tree.queue_index(leaf)?;
        self.queues.get_mut(q as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LeafQueue> {
        self.queues.iter()
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }
}
