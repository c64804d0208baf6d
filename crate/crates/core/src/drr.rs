//! Deficit round robin over ordered class sets.

use alloc::collections::BTreeSet;

use crate::tree::MAX_DEPTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cursor<K> {
    Start,
    /// First member `>=` the key.
    At(K),
    End,
}

/// An ordered set with round-robin cursors.
///
/// A cursor remembers a key rather than a member, so removing the member
/// under it moves the turn to its successor without bookkeeping. Iteration
/// order is ascending key order. Each of the `LANES` cursors turns
/// independently over the same members; the plain methods use lane 0.
#[derive(Debug, Clone)]
pub struct DrrRing<K> {
    members: BTreeSet<K>,
    cursors: [Cursor<K>; LANES],
}

pub const LANES: usize = MAX_DEPTH;

impl<K: Ord + Copy> Default for DrrRing<K> {
    fn default() -> Self {
        DrrRing {
            members: BTreeSet::new(),
            cursors: [Cursor::Start; LANES],
        }
    }
}

impl<K: Ord + Copy> DrrRing<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, k: K) -> bool {
        self.members.insert(k)
    }

    pub fn remove(&mut self, k: K) -> bool {
        self.members.remove(&k)
    }

    pub fn contains(&self, k: K) -> bool {
        self.members.contains(&k)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = K> + '_ {
        self.members.iter().copied()
    }

    /// Member holding the turn, `None` once the cursor ran off the end.
    pub fn current(&self) -> Option<K> {
        self.current_in(0)
    }

    pub fn current_in(&self, lane: usize) -> Option<K> {
        match self.cursors[lane] {
            Cursor::Start => self.members.first().copied(),
            Cursor::At(k) => self.members.range(k..).next().copied(),
            Cursor::End => None,
        }
    }

    /// Pass the turn to the next member; may run off the end.
    pub fn advance(&mut self) {
        self.advance_in(0)
    }

    pub fn advance_in(&mut self, lane: usize) {
        let Some(cur) = self.current_in(lane) else {
            self.cursors[lane] = Cursor::End;
            return;
        };
        use core::ops::Bound::{Excluded, Unbounded};
        self.cursors[lane] = match self.members.range((Excluded(cur), Unbounded)).next() {
            Some(&next) => Cursor::At(next),
            None => Cursor::End,
        };
    }

    /// Move the cursor back to the first member.
    pub fn rewind(&mut self) {
        self.rewind_in(0)
    }

    pub fn rewind_in(&mut self, lane: usize) {
        self.cursors[lane] = Cursor::Start;
    }
}

/// Member whose turn it is, wrapping to the first member after the end.
pub fn drr_next<K: Ord + Copy>(ring: &mut DrrRing<K>) -> Option<K> {
    drr_next_in(ring, 0)
}

pub fn drr_next_in<K: Ord + Copy>(ring: &mut DrrRing<K>, lane: usize) -> Option<K> {
    if ring.current_in(lane).is_none() {
        ring.rewind_in(lane);
    }
    ring.current_in(lane)
}

/// Debit a dequeued packet from a DRR deficit. Returns `true` when the class
/// has used up its round: the deficit is topped up by one quantum and the
/// caller should advance the cursor.
pub fn charge_deficit(deficit: &mut i64, quantum: u32, bytes: u32) -> bool {
    *deficit -= i64::from(bytes);
    if *deficit < 0 {
        *deficit += i64::from(quantum);
        true
    } else {
        false
    }
}
