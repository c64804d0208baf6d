//! Per-class configuration and the dual token bucket.

use alloc::string::String;
use core::fmt;
use core::time::Duration;

use crate::units::{duration_nanos, Rate, SimTime, NANOBITS_PER_BYTE};

/// Lowest (numerically largest) priority a leaf may carry.
pub const MAX_PRIORITY: u8 = 7;
pub(crate) const PRIORITIES: usize = MAX_PRIORITY as usize + 1;

/// Default maximum packet size, used for bucket and quantum floors.
pub const DEFAULT_MTU: u32 = 1500;

const DEFAULT_BURST_SPAN: Duration = Duration::from_millis(10);
const DEFAULT_MBUFFER: Duration = Duration::from_secs(60);
/// Rate-to-quantum divisor used when a class has no explicit quantum.
const RATE_TO_QUANTUM: u64 = 10;

/// What a class may do with its next packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ClassMode {
    /// Within the assured rate: sends on its own tokens.
    CanSend = 0,
    /// Above assured but below ceiling: needs a lending ancestor.
    MayBorrow = 1,
    /// At or above the ceiling.
    CantSend = 2,
}

impl ClassMode {
    pub fn code(self) -> u8 {
        self as u8
    }

    fn from_buckets(tokens: i128, ctokens: i128) -> Self {
        if ctokens < 0 {
            ClassMode::CantSend
        } else if tokens >= 0 {
            ClassMode::CanSend
        } else {
            ClassMode::MayBorrow
        }
    }
}

impl fmt::Display for ClassMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassMode::CanSend => "can_send",
            ClassMode::MayBorrow => "may_borrow",
            ClassMode::CantSend => "cant_send",
        })
    }
}

/// One class element of a hierarchy description. Optional fields fall back to
/// defaults derived from the rates when the tree is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtbClassConfig {
    pub name: String,
    /// `None` only for the root.
    pub parent: Option<String>,
    /// Declared level: 0 for leaves, highest for the root.
    pub level: u32,
    pub assured: Rate,
    pub ceil: Rate,
    /// Assured-bucket depth in bytes.
    pub burst: Option<u32>,
    /// Ceiling-bucket depth in bytes.
    pub cburst: Option<u32>,
    /// Bytes per DRR round.
    pub quantum: Option<u32>,
    /// Cap on the idle time credited in one replenishment.
    pub mbuffer: Option<Duration>,
    /// Leaf only.
    pub priority: Option<u8>,
    /// Leaf only: index of the packet queue backing this class.
    pub queue_index: Option<u32>,
}

impl HtbClassConfig {
    fn bare(name: &str, parent: Option<&str>, level: u32, assured: Rate, ceil: Rate) -> Self {
        HtbClassConfig {
            name: name.into(),
            parent: parent.map(Into::into),
            level,
            assured,
            ceil,
            burst: None,
            cburst: None,
            quantum: None,
            mbuffer: None,
            priority: None,
            queue_index: None,
        }
    }

    /// A root class with assured = ceiling = `rate`.
    pub fn root(level: u32, rate: Rate) -> Self {
        Self::bare("root", None, level, rate, rate)
    }

    pub fn inner(name: &str, parent: &str, level: u32, assured: Rate, ceil: Rate) -> Self {
        Self::bare(name, Some(parent), level, assured, ceil)
    }

    pub fn leaf(name: &str, parent: &str, assured: Rate, ceil: Rate, queue_index: u32) -> Self {
        let mut c = Self::bare(name, Some(parent), 0, assured, ceil);
        c.queue_index = Some(queue_index);
        c
    }

    pub fn with_priority(mut self, priority: u8) -> Self {
        self.priority = Some(priority);
        self
    }

    pub fn with_quantum(mut self, quantum: u32) -> Self {
        self.quantum = Some(quantum);
        self
    }

    pub fn with_burst(mut self, burst: u32, cburst: u32) -> Self {
        self.burst = Some(burst);
        self.cburst = Some(cburst);
        self
    }

    pub fn with_mbuffer(mut self, mbuffer: Duration) -> Self {
        self.mbuffer = Some(mbuffer);
        self
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    /// Declared as a leaf: level 0 or carrying a queue index.
    pub fn is_leaf(&self) -> bool {
        self.level == 0 || self.queue_index.is_some()
    }

    /// Resolve optional fields against the defaults.
    pub fn params(&self, mtu: u32) -> ClassParams {
        let floor = |r: Rate| mtu.max(u32::try_from(r.bytes_over(DEFAULT_BURST_SPAN)).unwrap_or(u32::MAX));
        ClassParams {
            assured: self.assured,
            ceil: self.ceil,
            burst: self.burst.unwrap_or_else(|| floor(self.assured)),
            cburst: self.cburst.unwrap_or_else(|| floor(self.ceil)),
            quantum: self.quantum.unwrap_or_else(|| {
                let q = self.assured.as_bps() / 8 / RATE_TO_QUANTUM;
                mtu.max(u32::try_from(q).unwrap_or(u32::MAX))
            }),
            mbuffer: self.mbuffer.unwrap_or(DEFAULT_MBUFFER),
            priority: self.priority.unwrap_or(MAX_PRIORITY),
        }
    }
}

/// Fully resolved class parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassParams {
    pub assured: Rate,
    pub ceil: Rate,
    pub burst: u32,
    pub cburst: u32,
    pub quantum: u32,
    pub mbuffer: Duration,
    pub priority: u8,
}

/// Dual token bucket state of one class.
///
/// `tokens` fill at the assured rate up to `burst`, `ctokens` at the ceiling
/// rate up to `cburst`. Both may go arbitrarily negative: packets are never
/// split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtbClass {
    params: ClassParams,
    tokens: i128,
    ctokens: i128,
    last_update: SimTime,
    mode: ClassMode,
}

impl HtbClass {
    /// Buckets full at `now`.
    pub fn new(params: ClassParams, now: SimTime) -> Self {
        Self::with_buckets(params, i64::from(params.burst), i64::from(params.cburst), now)
    }

    /// Explicit bucket levels in bytes (clamped to the bucket depths).
    pub fn with_buckets(params: ClassParams, tokens: i64, ctokens: i64, at: SimTime) -> Self {
        let tokens = (i128::from(tokens) * NANOBITS_PER_BYTE).min(cap(params.burst));
        let ctokens = (i128::from(ctokens) * NANOBITS_PER_BYTE).min(cap(params.cburst));
        HtbClass {
            params,
            tokens,
            ctokens,
            last_update: at,
            mode: ClassMode::from_buckets(tokens, ctokens),
        }
    }

    pub fn params(&self) -> &ClassParams {
        &self.params
    }

    /// Assured bucket in whole bytes, truncated toward zero.
    pub fn tokens(&self) -> i64 {
        (self.tokens / NANOBITS_PER_BYTE) as i64
    }

    /// Ceiling bucket in whole bytes, truncated toward zero.
    pub fn ctokens(&self) -> i64 {
        (self.ctokens / NANOBITS_PER_BYTE) as i64
    }

    /// Both buckets in whole bytes as they would read at `now`, without
    /// updating the class.
    pub fn buckets_at_bytes(&self, now: SimTime) -> (i64, i64) {
        let (t, c) = self.buckets_at(now);
        ((t / NANOBITS_PER_BYTE) as i64, (c / NANOBITS_PER_BYTE) as i64)
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    pub fn mode(&self) -> ClassMode {
        self.mode
    }

    /// Credit the time since the last update (at most `mbuffer`) to both
    /// buckets, move the checkpoint to `now` and recompute the mode.
    pub fn replenish(&mut self, now: SimTime) {
        debug_assert!(now >= self.last_update, "time went backwards");
        let (tokens, ctokens) = self.buckets_at(now);
        self.tokens = tokens;
        self.ctokens = ctokens;
        self.last_update = now.max(self.last_update);
        self.mode = ClassMode::from_buckets(tokens, ctokens);
    }

    /// Mode the buckets would imply at `now`, without touching them.
    pub fn mode_at(&self, now: SimTime) -> ClassMode {
        let (tokens, ctokens) = self.buckets_at(now);
        ClassMode::from_buckets(tokens, ctokens)
    }

    /// Mode implied by the stored bucket levels.
    pub fn bucket_mode(&self) -> ClassMode {
        ClassMode::from_buckets(self.tokens, self.ctokens)
    }

    /// Earliest instant at which the mode evaluated at `now` improves, or
    /// `None` when the relevant rate is zero or the class can already send.
    pub fn wake_at(&self, now: SimTime) -> Option<SimTime> {
        let (tokens, ctokens) = self.buckets_at(now);
        let (deficit, rate) = match ClassMode::from_buckets(tokens, ctokens) {
            ClassMode::CanSend => return None,
            ClassMode::MayBorrow => (-tokens, self.params.assured),
            ClassMode::CantSend => (-ctokens, self.params.ceil),
        };
        if rate.is_zero() {
            return None;
        }
        let rate = i128::from(rate.as_bps());
        let wait = (deficit + rate - 1) / rate;
        Some(now.saturating_add(Duration::from_nanos(u64::try_from(wait).unwrap_or(u64::MAX))))
    }

    pub(crate) fn spend_tokens(&mut self, bytes: u32) {
        self.tokens -= i128::from(bytes) * NANOBITS_PER_BYTE;
    }

    pub(crate) fn spend_ctokens(&mut self, bytes: u32) {
        self.ctokens -= i128::from(bytes) * NANOBITS_PER_BYTE;
    }

    /// Overwrite the cached mode; the tree owns mode transitions.
    pub(crate) fn set_mode(&mut self, mode: ClassMode) {
        self.mode = mode;
    }

    fn buckets_at(&self, now: SimTime) -> (i128, i128) {
        let elapsed = now.as_nanos().saturating_sub(self.last_update.as_nanos());
        let dt = elapsed.min(duration_nanos(self.params.mbuffer));
        let tokens = (self.tokens + self.params.assured.nanobits_over(dt)).min(cap(self.params.burst));
        let ctokens = (self.ctokens + self.params.ceil.nanobits_over(dt)).min(cap(self.params.cburst));
        (tokens, ctokens)
    }
}

fn cap(bytes: u32) -> i128 {
    i128::from(bytes) * NANOBITS_PER_BYTE
}
