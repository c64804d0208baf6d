//! The HTB class tree and its scheduling state.
//!
//! The structure follows the Linux qdisc closely:
//!
//! * every level keeps one *row* per priority: classes of that level in
//!   `CanSend` mode with backlogged descendants at that priority;
//! * every inner class keeps one *feed* per priority: children in
//!   `MayBorrow` mode that borrow through it at that priority;
//! * every class not in `CanSend` sits in the wait queue, keyed by the
//!   instant its mode next improves.
//!
//! A dequeue walks levels from the leaves upward and priorities from 0,
//! takes the first non-empty row and descends through feeds to a leaf,
//! round-robin at every step.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::class::{ClassMode, ClassParams, HtbClass, HtbClassConfig, DEFAULT_MTU, MAX_PRIORITY, PRIORITIES};
use crate::drr::{charge_deficit, drr_next, drr_next_in, DrrRing};
use crate::error::{BuildError, SchedError};
use crate::units::{Rate, SimTime};

/// Maximum number of levels, root included.
pub const MAX_DEPTH: usize = 8;

/// Index of a class within its tree, in configuration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(u32);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[cfg(test)]
    pub(crate) fn default_for_tests() -> Self {
        ClassId(0)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Outcome of [`HtbTree::dequeue_select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Dequeue the head of this leaf's queue, then call [`HtbTree::charge`].
    Send(ClassId),
    /// Nothing may be sent before this instant.
    WaitUntil(SimTime),
    /// Backlog exists but no class will ever become eligible (zero rates).
    Stalled,
}

/// Non-fatal oddities found while building.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildWarning {
    RootAssuredBelowCeiling { assured: Rate, ceil: Rate },
    RootCeilingNotLinkRate { ceil: Rate, link: Rate },
}

impl fmt::Display for BuildWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildWarning::RootAssuredBelowCeiling { assured, ceil } => {
                write!(f, "root assured rate {assured} differs from its ceiling {ceil}")
            }
            BuildWarning::RootCeilingNotLinkRate { ceil, link } => {
                write!(f, "root ceiling {ceil} differs from the link rate {link}")
            }
        }
    }
}

/// Read-only view of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSnapshot {
    pub id: ClassId,
    pub level: usize,
    pub mode: ClassMode,
    pub tokens: i64,
    pub ctokens: i64,
    /// DRR deficit per lender level, kept by every class on a borrow path.
    pub deficit: [i64; MAX_DEPTH],
    /// Bit `p` set when the class is active at priority `p`.
    pub active_priorities: u8,
    /// Packets the scheduler believes are queued (leaves only).
    pub backlog: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Selected {
    leaf: ClassId,
    /// Row member that covers the send; `None` when the leaf sends on its own tokens.
    lender: Option<ClassId>,
    level: usize,
    prio: usize,
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    class: HtbClass,
    parent: Option<ClassId>,
    children: Vec<ClassId>,
    level: usize,
    leaf: bool,
    queue_index: Option<u32>,
    prio_activity: u8,
    /// Empty for leaves.
    feeds: Vec<DrrRing<ClassId>>,
    deficit: [i64; MAX_DEPTH],
    backlog: u32,
    wait_key: Option<SimTime>,
}

/// A built HTB hierarchy with its scheduling state. Holds no packets; it
/// only counts how many each leaf has queued.
#[derive(Debug, Clone)]
pub struct HtbTree {
    nodes: Vec<Node>,
    root: ClassId,
    leaves: Vec<ClassId>,
    rows: Vec<Vec<DrrRing<ClassId>>>,
    row_mask: Vec<u8>,
    wait: BTreeSet<(SimTime, ClassId)>,
    now: SimTime,
    pending: Option<Selected>,
    backlog: u64,
    link_rate: Rate,
    mtu: u32,
    warnings: Vec<BuildWarning>,
}

/// Every problem with a hierarchy, in a stable order. An empty result means
/// [`HtbTree::build`] will succeed.
pub fn check_hierarchy(configs: &[HtbClassConfig], mtu: u32) -> Vec<BuildError> {
    match analyze(configs, mtu) {
        Ok(_) => Vec::new(),
        Err(errors) => errors,
    }
}

struct Shape {
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    levels: Vec<usize>,
    root: usize,
}

fn analyze(configs: &[HtbClassConfig], mtu: u32) -> Result<Shape, Vec<BuildError>> {
    if configs.is_empty() {
        return Err(vec![BuildError::Empty]);
    }
    let mut errors = Vec::new();
    let find = |name: &str| configs.iter().position(|c| c.name == name);

    for (i, c) in configs.iter().enumerate() {
        if configs[..i].iter().any(|o| o.name == c.name) {
            errors.push(BuildError::DuplicateName(c.name.clone()));
        }
    }

    let roots: Vec<usize> = (0..configs.len()).filter(|&i| configs[i].is_root()).collect();
    match roots.as_slice() {
        [] => errors.push(BuildError::NoRoot),
        [_] => {}
        [a, b, ..] => errors.push(BuildError::DuplicateRoot(
            configs[*a].name.clone(),
            configs[*b].name.clone(),
        )),
    }

    let mut parents = vec![None; configs.len()];
    for (i, c) in configs.iter().enumerate() {
        if let Some(p) = &c.parent {
            match find(p) {
                Some(j) => parents[i] = Some(j),
                None => errors.push(BuildError::Orphan {
                    class: c.name.clone(),
                    parent: p.clone(),
                }),
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let root = roots[0];

    for i in 0..configs.len() {
        let mut cur = i;
        let mut steps = 0;
        while let Some(p) = parents[cur] {
            cur = p;
            steps += 1;
            if steps > configs.len() {
                errors.push(BuildError::Cycle(configs[i].name.clone()));
                break;
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut children = vec![Vec::new(); configs.len()];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }

    let root_level = configs[root].level;
    for (i, c) in configs.iter().enumerate() {
        let leaf = i != root && c.level == 0;
        if leaf {
            if !children[i].is_empty() {
                errors.push(BuildError::LeafWithChildren(c.name.clone()));
            }
            if c.queue_index.is_none() {
                errors.push(BuildError::MissingQueueIndex(c.name.clone()));
            }
        } else {
            if c.queue_index.is_some() {
                errors.push(BuildError::LeafFieldOnInner {
                    class: c.name.clone(),
                    field: "queueNum",
                });
            }
            if c.priority.is_some() {
                errors.push(BuildError::LeafFieldOnInner {
                    class: c.name.clone(),
                    field: "priority",
                });
            }
        }
        if i != root && c.level >= root_level {
            errors.push(BuildError::LevelAboveRoot {
                class: c.name.clone(),
                level: c.level,
                root_level,
            });
        }
        if c.ceil < c.assured {
            errors.push(BuildError::CeilingBelowAssured {
                class: c.name.clone(),
                assured: c.assured,
                ceil: c.ceil,
            });
        }
        if let Some(p) = c.priority {
            if p > MAX_PRIORITY {
                errors.push(BuildError::PriorityOutOfRange {
                    class: c.name.clone(),
                    priority: p,
                });
            }
        }
        if c.quantum == Some(0) {
            errors.push(BuildError::ZeroQuantum(c.name.clone()));
        }
        for (bucket, bytes) in [("burst", c.burst), ("cburst", c.cburst)] {
            if let Some(bytes) = bytes {
                if bytes < mtu {
                    errors.push(BuildError::BucketTooSmall {
                        class: c.name.clone(),
                        bucket,
                        bytes,
                        mtu,
                    });
                }
            }
        }
    }

    for (i, kids) in children.iter().enumerate() {
        let sum: u64 = kids.iter().map(|&k| configs[k].assured.as_bps()).sum();
        if sum > configs[i].assured.as_bps() {
            errors.push(BuildError::ChildrenAssuredExceedsParent {
                parent: configs[i].name.clone(),
                sum: Rate::bps(sum),
                assured: configs[i].assured,
            });
        }
    }

    // Internal level = height above the deepest leaf below.
    let mut levels = vec![0usize; configs.len()];
    let mut order = Vec::with_capacity(configs.len());
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        order.push(n);
        stack.extend(children[n].iter().copied());
    }
    for &n in order.iter().rev() {
        let is_leaf = n != root && configs[n].level == 0;
        levels[n] = if is_leaf {
            0
        } else {
            1 + children[n].iter().map(|&k| levels[k]).max().unwrap_or(0)
        };
    }
    if levels[root] >= MAX_DEPTH {
        errors.push(BuildError::TooDeep);
    }

    if errors.is_empty() {
        Ok(Shape {
            parents,
            children,
            levels,
            root,
        })
    } else {
        Err(errors)
    }
}

impl HtbTree {
    /// Build a tree with full buckets and nothing active, assuming
    /// packets of at most [`DEFAULT_MTU`] bytes.
    pub fn build(configs: &[HtbClassConfig], link_rate: Rate) -> Result<Self, BuildError> {
        Self::build_with_mtu(configs, link_rate, DEFAULT_MTU)
    }

    pub fn build_with_mtu(configs: &[HtbClassConfig], link_rate: Rate, mtu: u32) -> Result<Self, BuildError> {
        let shape = analyze(configs, mtu).map_err(|mut e| e.swap_remove(0))?;
        let id = |i: usize| ClassId(i as u32);
        let nodes: Vec<Node> = configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let leaf = i != shape.root && c.level == 0;
                Node {
                    name: c.name.clone(),
                    class: HtbClass::new(c.params(mtu), SimTime::ZERO),
                    parent: shape.parents[i].map(id),
                    children: shape.children[i].iter().map(|&k| id(k)).collect(),
                    level: shape.levels[i],
                    leaf,
                    queue_index: c.queue_index,
                    prio_activity: 0,
                    feeds: if leaf {
                        Vec::new()
                    } else {
                        (0..PRIORITIES).map(|_| DrrRing::new()).collect()
                    },
                    deficit: [0; MAX_DEPTH],
                    backlog: 0,
                    wait_key: None,
                }
            })
            .collect();
        let depth = shape.levels[shape.root] + 1;
        let root_cfg = &configs[shape.root];
        let mut warnings = Vec::new();
        if root_cfg.assured != root_cfg.ceil {
            warnings.push(BuildWarning::RootAssuredBelowCeiling {
                assured: root_cfg.assured,
                ceil: root_cfg.ceil,
            });
        }
        if root_cfg.ceil != link_rate {
            warnings.push(BuildWarning::RootCeilingNotLinkRate {
                ceil: root_cfg.ceil,
                link: link_rate,
            });
        }
        Ok(HtbTree {
            leaves: (0..nodes.len()).filter(|&i| nodes[i].leaf).map(id).collect(),
            nodes,
            root: id(shape.root),
            rows: (0..depth)
                .map(|_| (0..PRIORITIES).map(|_| DrrRing::new()).collect())
                .collect(),
            row_mask: vec![0; depth],
            wait: BTreeSet::new(),
            now: SimTime::ZERO,
            pending: None,
            backlog: 0,
            link_rate,
            mtu,
            warnings,
        })
    }

    pub fn warnings(&self) -> &[BuildWarning] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> ClassId {
        self.root
    }

    pub fn link_rate(&self) -> Rate {
        self.link_rate
    }

    pub fn mtu(&self) -> u32 {
        self.mtu
    }

    /// Number of levels, leaves to root inclusive.
    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.nodes.len() as u32).map(ClassId)
    }

    pub fn leaves(&self) -> &[ClassId] {
        &self.leaves
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.nodes.iter().position(|n| n.name == name).map(|i| ClassId(i as u32))
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn parent(&self, id: ClassId) -> Option<ClassId> {
        self.nodes[id.index()].parent
    }

    pub fn children(&self, id: ClassId) -> &[ClassId] {
        &self.nodes[id.index()].children
    }

    pub fn level(&self, id: ClassId) -> usize {
        self.nodes[id.index()].level
    }

    pub fn is_leaf(&self, id: ClassId) -> bool {
        self.nodes[id.index()].leaf
    }

    pub fn params(&self, id: ClassId) -> &ClassParams {
        self.nodes[id.index()].class.params()
    }

    pub fn class(&self, id: ClassId) -> &HtbClass {
        &self.nodes[id.index()].class
    }

    pub fn queue_index(&self, id: ClassId) -> Option<u32> {
        self.nodes[id.index()].queue_index
    }

    /// Path from `id` up to the root, `id` first.
    pub fn ancestry(&self, id: ClassId) -> impl Iterator<Item = ClassId> + '_ {
        core::iter::successors(Some(id), move |&c| self.parent(c))
    }

    /// Whether `id` lies in the subtree of `ancestor` (inclusive).
    pub fn is_descendant(&self, id: ClassId, ancestor: ClassId) -> bool {
        self.ancestry(id).any(|c| c == ancestor)
    }

    /// Children of `class` currently borrowing through it at `prio`.
    pub fn borrowers(&self, class: ClassId, prio: u8) -> impl Iterator<Item = ClassId> + '_ {
        self.nodes[class.index()]
            .feeds
            .get(usize::from(prio))
            .into_iter()
            .flat_map(|r| r.iter())
    }

    /// Total packets the scheduler believes are queued.
    pub fn backlog(&self) -> u64 {
        self.backlog
    }

    pub fn snapshot(&self, id: ClassId) -> ClassSnapshot {
        let n = &self.nodes[id.index()];
        ClassSnapshot {
            id,
            level: n.level,
            mode: n.class.mode(),
            tokens: n.class.tokens(),
            ctokens: n.class.ctokens(),
            deficit: n.deficit,
            active_priorities: n.prio_activity,
            backlog: n.backlog,
        }
    }

    fn leaf_check(&self, leaf: ClassId) -> Result<(), SchedError> {
        match self.nodes.get(leaf.index()) {
            None => Err(SchedError::UnknownClass(leaf)),
            Some(n) if !n.leaf => Err(SchedError::NotALeaf(leaf)),
            Some(_) => Ok(()),
        }
    }

    /// Record that one packet was placed in `leaf`'s queue, activating the
    /// leaf if its queue was empty.
    pub fn enqueue_notify(&mut self, leaf: ClassId, now: SimTime) -> Result<(), SchedError> {
        self.leaf_check(leaf)?;
        self.now = self.now.max(now);
        let n = &mut self.nodes[leaf.index()];
        n.backlog += 1;
        self.backlog += 1;
        if n.prio_activity == 0 {
            n.prio_activity = 1 << n.class.params().priority;
            self.activate_prios(leaf);
        }
        Ok(())
    }

    /// Choose the leaf to dequeue from at `now`. Applies due mode changes but
    /// never touches bucket levels.
    pub fn dequeue_select(&mut self, now: SimTime) -> Result<Decision, SchedError> {
        self.pending = None;
        if self.backlog == 0 {
            return Err(SchedError::NothingQueued);
        }
        self.now = self.now.max(now);
        self.process_events(self.now);
        for level in 0..self.rows.len() {
            let mut mask = self.row_mask[level];
            while mask != 0 {
                let prio = mask.trailing_zeros() as usize;
                mask &= mask - 1;
                if let Some((leaf, lender)) = self.lookup_leaf(level, prio) {
                    self.pending = Some(Selected {
                        leaf,
                        lender,
                        level,
                        prio,
                    });
                    return Ok(Decision::Send(leaf));
                }
            }
        }
        Ok(match self.next_event_time() {
            Some(t) => Decision::WaitUntil(t),
            None => Decision::Stalled,
        })
    }

    /// Account a packet of `bytes` just dequeued from the selected leaf.
    /// Returns the level of the class whose assured bucket covered the send
    /// (0: the leaf's own tokens).
    pub fn charge(&mut self, leaf: ClassId, bytes: u32, now: SimTime) -> Result<usize, SchedError> {
        self.leaf_check(leaf)?;
        let sel = match self.pending.take() {
            Some(sel) if sel.leaf == leaf => sel,
            other => {
                self.pending = other;
                return Err(SchedError::NotSelected {
                    expected: other.map(|s| s.leaf),
                    got: leaf,
                });
            }
        };
        self.now = self.now.max(now);
        let now = self.now;

        let quantum = self.nodes[leaf.index()].class.params().quantum;
        let top = sel.lender.unwrap_or(leaf);
        let mut cur = leaf;
        loop {
            let q = if cur == leaf { quantum } else { self.borrowing_quantum(cur, sel.prio) };
            if charge_deficit(&mut self.nodes[cur.index()].deficit[sel.level], q, bytes) {
                match self.nodes[cur.index()].parent {
                    Some(p) if cur != top => self.nodes[p.index()].feeds[sel.prio].advance_in(sel.level),
                    _ => self.rows[sel.level][sel.prio].advance(),
                }
            }
            match self.nodes[cur.index()].parent {
                Some(p) if cur != top => cur = p,
                _ => break,
            }
        }

        let n = &mut self.nodes[leaf.index()];
        n.backlog -= 1;
        self.backlog -= 1;
        if n.backlog == 0 {
            self.deactivate(leaf);
        }

        let mut cur = Some(leaf);
        while let Some(c) = cur {
            let n = &mut self.nodes[c.index()];
            let old = n.class.mode();
            n.class.replenish(now);
            // Classes at or above the lender pay from their assured bucket;
            // borrowers below it only from the ceiling bucket.
            if n.level >= sel.level {
                n.class.spend_tokens(bytes);
            }
            n.class.spend_ctokens(bytes);
            let new = n.class.bucket_mode();
            n.class.set_mode(old);
            self.change_mode(c, new);
            self.reschedule(c, now);
            cur = self.nodes[c.index()].parent;
        }
        Ok(sel.level)
    }

    /// Some backlogged leaf has a send path as of the last processed event.
    pub fn has_eligible(&self) -> bool {
        self.row_mask.iter().any(|&m| m != 0)
    }

    /// Earliest instant a waiting class that gates backlog changes mode.
    /// `None` when some leaf is eligible right now or nothing is queued.
    pub fn next_event_time(&self) -> Option<SimTime> {
        if self.backlog == 0 || self.has_eligible() {
            return None;
        }
        self.wait
            .iter()
            .find(|(_, c)| self.nodes[c.index()].prio_activity != 0)
            .map(|&(t, _)| t)
    }

    fn process_events(&mut self, now: SimTime) {
        while let Some(&(t, c)) = self.wait.first() {
            if t > now {
                break;
            }
            self.wait.pop_first();
            self.nodes[c.index()].wait_key = None;
            let mode = self.nodes[c.index()].class.mode_at(now);
            self.change_mode(c, mode);
            self.reschedule(c, now);
        }
    }

    fn reschedule(&mut self, c: ClassId, now: SimTime) {
        let n = &mut self.nodes[c.index()];
        if let Some(t) = n.wait_key.take() {
            self.wait.remove(&(t, c));
        }
        if n.class.mode() != ClassMode::CanSend {
            if let Some(t) = n.class.wake_at(now) {
                n.wait_key = Some(t);
                self.wait.insert((t, c));
            }
        }
    }

    fn change_mode(&mut self, c: ClassId, new: ClassMode) {
        let n = &self.nodes[c.index()];
        let old = n.class.mode();
        if old == new {
            return;
        }
        if n.prio_activity != 0 {
            if old != ClassMode::CantSend {
                self.deactivate_prios(c);
            }
            self.nodes[c.index()].class.set_mode(new);
            if new != ClassMode::CantSend {
                self.activate_prios(c);
            }
        } else {
            self.nodes[c.index()].class.set_mode(new);
        }
    }

    fn deactivate(&mut self, leaf: ClassId) {
        self.deactivate_prios(leaf);
        self.nodes[leaf.index()].prio_activity = 0;
    }

    /// Hook `c`'s active priorities into its parent's feeds while it borrows,
    /// continuing upward for priorities the parent did not already carry.
    /// The first `CanSend` class reached joins its row.
    fn activate_prios(&mut self, c: ClassId) {
        let mut cl = c;
        let mut mask = self.nodes[cl.index()].prio_activity;
        while mask != 0 && self.nodes[cl.index()].class.mode() == ClassMode::MayBorrow {
            let Some(p) = self.nodes[cl.index()].parent else {
                break;
            };
            for prio in bits(mask) {
                let feed = &mut self.nodes[p.index()].feeds[prio];
                if !feed.is_empty() {
                    mask &= !(1 << prio);
                }
                feed.insert(cl);
            }
            self.nodes[p.index()].prio_activity |= mask;
            cl = p;
        }
        if mask != 0 && self.nodes[cl.index()].class.mode() == ClassMode::CanSend {
            let level = self.nodes[cl.index()].level;
            self.row_mask[level] |= mask;
            for prio in bits(mask) {
                self.rows[level][prio].insert(cl);
            }
        }
    }

    fn deactivate_prios(&mut self, c: ClassId) {
        let mut cl = c;
        let mut mask = self.nodes[cl.index()].prio_activity;
        while mask != 0 && self.nodes[cl.index()].class.mode() == ClassMode::MayBorrow {
            let Some(p) = self.nodes[cl.index()].parent else {
                break;
            };
            let m = mask;
            mask = 0;
            for prio in bits(m) {
                let feed = &mut self.nodes[p.index()].feeds[prio];
                feed.remove(cl);
                if feed.is_empty() {
                    mask |= 1 << prio;
                }
            }
            self.nodes[p.index()].prio_activity &= !mask;
            cl = p;
        }
        if mask != 0 && self.nodes[cl.index()].class.mode() == ClassMode::CanSend {
            let level = self.nodes[cl.index()].level;
            for prio in bits(mask) {
                let row = &mut self.rows[level][prio];
                row.remove(cl);
                if row.is_empty() {
                    self.row_mask[level] &= !(1 << prio);
                }
            }
        }
    }

    /// Descend from the row at (`level`, `prio`) through borrower feeds to a
    /// leaf, returning it with the row member that lends to it. Feeds keep
    /// one cursor per lender level.
    fn lookup_leaf(&mut self, level: usize, prio: usize) -> Option<(ClassId, Option<ClassId>)> {
        let top = drr_next(&mut self.rows[level][prio])?;
        let mut c = top;
        for _ in 0..=MAX_DEPTH {
            if self.nodes[c.index()].leaf {
                return Some((c, (c != top).then_some(top)));
            }
            c = drr_next_in(&mut self.nodes[c.index()].feeds[prio], level)?;
        }
        debug_assert!(false, "feed chain deeper than the tree");
        None
    }

    /// DRR weight of an inner class in its parent's feed: the summed quanta
    /// of the leaves borrowing through it at `prio`.
    fn borrowing_quantum(&self, c: ClassId, prio: usize) -> u32 {
        let n = &self.nodes[c.index()];
        if n.leaf {
            return n.class.params().quantum;
        }
        n.feeds[prio]
            .iter()
            .map(|k| self.borrowing_quantum(k, prio))
            .fold(0u32, u32::saturating_add)
            .max(1)
    }

    /// Check every structural invariant against the state at the last
    /// observed instant. Intended for tests.
    pub fn audit(&self) -> Result<(), String> {
        use alloc::format;
        let now = self.now;
        for id in self.ids() {
            let n = &self.nodes[id.index()];
            let p = n.class.params();
            if n.class.tokens() > i64::from(p.burst) || n.class.ctokens() > i64::from(p.cburst) {
                return Err(format!("{}: bucket above its depth", n.name));
            }
            // a wake that is due but not yet processed leaves the mode stale
            let due = n.wait_key.is_some_and(|k| k <= now);
            if !due && n.class.mode() != n.class.mode_at(now) {
                return Err(format!(
                    "{}: cached mode {} but buckets imply {} at {now}",
                    n.name,
                    n.class.mode(),
                    n.class.mode_at(now)
                ));
            }
            let waiting = n.wait_key.is_some();
            let should_wait =
                due || n.class.mode() != ClassMode::CanSend && n.class.wake_at(now).is_some();
            if waiting != should_wait || (waiting && !self.wait.contains(&(n.wait_key.unwrap(), id))) {
                return Err(format!("{}: wait queue membership wrong", n.name));
            }
            if n.leaf && (n.prio_activity != 0) != (n.backlog > 0) {
                return Err(format!("{}: active iff backlogged violated", n.name));
            }
            if !n.leaf {
                for prio in 0..PRIORITIES {
                    let has = n.prio_activity & (1 << prio) != 0;
                    if has == n.feeds[prio].is_empty() {
                        return Err(format!("{}: activity bit {prio} disagrees with feed", n.name));
                    }
                    for k in n.feeds[prio].iter() {
                        let kn = &self.nodes[k.index()];
                        if kn.parent != Some(id)
                            || kn.class.mode() != ClassMode::MayBorrow
                            || kn.prio_activity & (1 << prio) == 0
                        {
                            return Err(format!("{}: stray feed member {}", n.name, kn.name));
                        }
                    }
                }
            }
            for prio in 0..PRIORITIES {
                let active = n.prio_activity & (1 << prio) != 0;
                let in_feed = n
                    .parent
                    .is_some_and(|pa| self.nodes[pa.index()].feeds[prio].contains(id));
                let in_row = self.rows[n.level][prio].contains(id);
                let want_feed = active && n.class.mode() == ClassMode::MayBorrow && n.parent.is_some();
                let want_row = active && n.class.mode() == ClassMode::CanSend;
                if in_feed != want_feed || in_row != want_row {
                    return Err(format!("{}: prio {prio} feed/row membership wrong", n.name));
                }
            }
        }
        for (level, row) in self.rows.iter().enumerate() {
            for (prio, ring) in row.iter().enumerate() {
                if (self.row_mask[level] & (1 << prio) != 0) == ring.is_empty() {
                    return Err(format!("row mask wrong at level {level} prio {prio}"));
                }
            }
        }
        let queued: u64 = self.nodes.iter().map(|n| u64::from(n.backlog)).sum();
        if queued != self.backlog {
            return Err("backlog total mismatch".into());
        }
        Ok(())
    }
}

fn bits(mask: u8) -> impl Iterator<Item = usize> {
    (0..PRIORITIES).filter(move |p| mask & (1 << p) != 0)
}
