//! Steady-state rate oracle: assured rates first, then each lender's spare
//! capacity handed down to its borrowers by priority, quantum-weighted and
//! capped by ceilings and offered load.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::queue::FlowId;
use crate::scenario::FlowSpec;
use crate::tree::{ClassId, HtbTree};
use crate::units::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OracleError {
    #[error("class {0} is not a leaf")]
    NotALeaf(ClassId),
    #[error("class {0} has a negative or non-finite offered rate")]
    BadOffer(ClassId),
}

/// Backlogged leaves with their offered load in bit/s.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveSet {
    offered: BTreeMap<ClassId, f64>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `bps` to the load offered to `leaf`.
    pub fn offer(&mut self, leaf: ClassId, bps: f64) -> &mut Self {
        *self.offered.entry(leaf).or_insert(0.0) += bps;
        self
    }

    pub fn offered(&self, leaf: ClassId) -> f64 {
        self.offered.get(&leaf).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, f64)> + '_ {
        self.offered.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.offered.is_empty()
    }
}

impl FromIterator<(ClassId, f64)> for ActiveSet {
    fn from_iter<I: IntoIterator<Item = (ClassId, f64)>>(iter: I) -> Self {
        let mut s = ActiveSet::new();
        for (k, v) in iter {
            s.offer(k, v);
        }
        s
    }
}

/// Expected bit/s of every class, indexed by `ClassId::index`. Inner classes
/// carry the sum of their subtree.
pub fn expected_rates(tree: &HtbTree, active: &ActiveSet) -> Result<Vec<f64>, OracleError> {
    for (leaf, bps) in active.iter() {
        if leaf.index() >= tree.len() || !tree.is_leaf(leaf) {
            return Err(OracleError::NotALeaf(leaf));
        }
        if !(bps.is_finite() && bps >= 0.0) {
            return Err(OracleError::BadOffer(leaf));
        }
    }
    let mut f = Filler::new(tree, active);
    let mut lenders: Vec<ClassId> = tree.ids().filter(|&c| !tree.is_leaf(c)).collect();
    lenders.sort_by_key(|&c| (tree.level(c), c));
    for x in lenders {
        f.lend(x);
    }
    Ok(f.totals())
}

struct Filler<'a> {
    tree: &'a HtbTree,
    /// Per active leaf: id, demand cap, quantum weight, priority.
    leaves: Vec<(ClassId, f64, f64, u8)>,
    alloc: Vec<f64>,
    link: f64,
    eps: f64,
}

impl<'a> Filler<'a> {
    fn new(tree: &'a HtbTree, active: &ActiveSet) -> Self {
        let link = tree.link_rate().as_f64();
        let mut leaves = Vec::new();
        let mut alloc = Vec::new();
        let mut used = 0.0;
        for (leaf, offered) in active.iter() {
            let p = tree.params(leaf);
            let demand = offered.min(p.ceil.as_f64());
            // assured rates are guaranteed, but the link still has to carry them
            let a = demand.min(p.assured.as_f64()).min(link - used).max(0.0);
            used += a;
            leaves.push((leaf, demand, f64::from(p.quantum), p.priority));
            alloc.push(a);
        }
        Filler {
            tree,
            leaves,
            alloc,
            link,
            eps: link.max(1.0) * 1e-12,
        }
    }

    fn subtotal(&self, class: ClassId) -> f64 {
        self.leaves
            .iter()
            .zip(&self.alloc)
            .filter(|((l, ..), _)| self.tree.is_descendant(*l, class))
            .map(|(_, a)| a)
            .sum()
    }

    fn total(&self) -> f64 {
        self.alloc.iter().sum()
    }

    /// Classes strictly between `leaf` and `lender`, plus the leaf itself.
    fn path(&self, leaf: ClassId, lender: ClassId) -> Vec<ClassId> {
        self.tree.ancestry(leaf).take_while(|&c| c != lender).collect()
    }

    fn lend(&mut self, x: ClassId) {
        let mut pool = self.tree.params(x).assured.as_f64() - self.subtotal(x);
        for prio in 0..=crate::class::MAX_PRIORITY {
            if pool <= self.eps {
                return;
            }
            let mut members: Vec<usize> = (0..self.leaves.len())
                .filter(|&i| {
                    let (l, demand, _, p) = self.leaves[i];
                    p == prio && self.tree.is_descendant(l, x) && demand - self.alloc[i] > self.eps
                })
                .collect();
            let paths: Vec<Vec<ClassId>> = members.iter().map(|&i| self.path(self.leaves[i].0, x)).collect();
            let mut paths: BTreeMap<usize, Vec<ClassId>> = members.iter().copied().zip(paths).collect();
            while !members.is_empty() && pool > self.eps {
                let weight: f64 = members.iter().map(|&i| self.leaves[i].2).sum();
                // largest fill level every constraint admits
                let mut t = pool.min(self.link - self.total()) / weight;
                for &i in &members {
                    let (_, demand, w, _) = self.leaves[i];
                    t = t.min((demand - self.alloc[i]) / w);
                    for &y in &paths[&i][1..] {
                        let wy: f64 = members
                            .iter()
                            .filter(|&&j| self.tree.is_descendant(self.leaves[j].0, y))
                            .map(|&j| self.leaves[j].2)
                            .sum();
                        let room = self.tree.params(y).ceil.as_f64() - self.subtotal(y);
                        t = t.min(room / wy);
                    }
                }
                let t = t.max(0.0);
                for &i in &members {
                    self.alloc[i] += t * self.leaves[i].2;
                }
                pool -= t * weight;
                if self.link - self.total() <= self.eps {
                    pool = 0.0;
                }
                let before = members.len();
                members.retain(|&i| {
                    let (_, demand, _, _) = self.leaves[i];
                    demand - self.alloc[i] > self.eps
                        && paths[&i][1..]
                            .iter()
                            .all(|&y| self.tree.params(y).ceil.as_f64() - self.subtotal(y) > self.eps)
                });
                if members.len() == before && t == 0.0 {
                    break;
                }
                paths.retain(|k, _| members.contains(k));
            }
        }
    }

    fn totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.tree.len()];
        for ((l, ..), a) in self.leaves.iter().zip(&self.alloc) {
            for c in self.tree.ancestry(*l) {
                out[c.index()] += a;
            }
        }
        out
    }
}

/// Interval over which the set of active sources, and so the expected rates,
/// is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub start: SimTime,
    pub end: SimTime,
    /// Expected bit/s per flow, aligned with `Schedule::flows`.
    pub rates: Vec<f64>,
}

/// Piecewise-constant expected throughput of each flow over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub flows: Vec<FlowId>,
    pub epochs: Vec<Epoch>,
}

impl Schedule {
    /// Build the schedule for `specs` over `[0, horizon)`. Flows sharing a
    /// leaf split its rate in proportion to their offered load.
    pub fn build(tree: &HtbTree, specs: &[FlowSpec], horizon: SimTime) -> Result<Self, OracleError> {
        let mut flows: Vec<FlowId> = specs.iter().map(|s| s.flow).collect();
        flows.sort();
        flows.dedup();
        let mut cuts: Vec<SimTime> = vec![SimTime::ZERO, horizon];
        for s in specs {
            cuts.push(s.start.min(horizon));
            cuts.push(s.stop.min(horizon));
        }
        cuts.sort();
        cuts.dedup();
        let mut epochs = Vec::new();
        for w in cuts.windows(2) {
            let (start, end) = (w[0], w[1]);
            let live: Vec<&FlowSpec> = specs.iter().filter(|s| s.start <= start && start < s.stop).collect();
            let set: ActiveSet = live.iter().map(|s| (s.leaf, s.offered_bps)).collect();
            let rates = expected_rates(tree, &set)?;
            let mut per_flow = vec![0.0; flows.len()];
            for s in live {
                let offered = set.offered(s.leaf);
                if offered > 0.0 {
                    let i = flows.binary_search(&s.flow).unwrap_or_default();
                    per_flow[i] += rates[s.leaf.index()] * s.offered_bps / offered;
                }
            }
            epochs.push(Epoch {
                start,
                end,
                rates: per_flow,
            });
        }
        Ok(Schedule { flows, epochs })
    }

    pub fn flow_index(&self, flow: FlowId) -> Option<usize> {
        self.flows.binary_search(&flow).ok()
    }

    pub fn rate_at(&self, flow: FlowId, t: SimTime) -> f64 {
        let Some(f) = self.flow_index(flow) else { return 0.0 };
        self.epochs
            .iter()
            .find(|e| e.start <= t && t < e.end)
            .map_or(0.0, |e| e.rates[f])
    }

    /// Time-averaged expected bit/s of `flow` over `[from, to)`.
    pub fn mean_over(&self, flow: FlowId, from: SimTime, to: SimTime) -> f64 {
        let Some(f) = self.flow_index(flow) else { return 0.0 };
        if to <= from {
            return 0.0;
        }
        let mut acc = 0.0;
        for e in &self.epochs {
            let a = e.start.max(from);
            let b = e.end.min(to);
            if a < b {
                acc += e.rates[f] * (b - a).as_secs_f64();
            }
        }
        acc / (to - from).as_secs_f64()
    }

    /// Instants where some flow starts or stops.
    pub fn boundaries(&self) -> Vec<SimTime> {
        self.epochs.iter().skip(1).map(|e| e.start).collect()
    }
}
