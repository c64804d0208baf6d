//! Rates, simulated time and the fixed-point unit token buckets are kept in.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};
use core::time::Duration;

use thiserror::Error;

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Bucket levels are stored in nanobits (1e-9 bit). A rate in bit/s times an
/// elapsed time in ns is then an exact integer, so replenishment never loses
/// fractional bytes between charges.
pub(crate) const NANOBITS_PER_BYTE: i128 = 8 * NANOS_PER_SEC as i128;

/// A bitrate in bits per second.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(u64);

impl Rate {
    pub const ZERO: Rate = Rate(0);

    pub const fn bps(bits_per_sec: u64) -> Self {
        Rate(bits_per_sec)
    }

    pub const fn kbps(kbits: u64) -> Self {
        Rate(kbits * 1_000)
    }

    pub const fn mbps(mbits: u64) -> Self {
        Rate(mbits * 1_000_000)
    }

    pub const fn as_bps(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Bitrate of one `size`-byte packet every `interval`, truncated to whole bit/s.
    pub fn of_packets(size: u32, interval: Duration) -> Option<Rate> {
        let ns = interval.as_nanos();
        if ns == 0 {
            return None;
        }
        let bits = u128::from(size) * 8 * u128::from(NANOS_PER_SEC);
        u64::try_from(bits / ns).ok().map(Rate)
    }

    /// Whole bytes this rate produces over `span`, truncated toward zero.
    pub fn bytes_over(self, span: Duration) -> u64 {
        let nanobits = u128::from(self.0) * span.as_nanos();
        (nanobits / NANOBITS_PER_BYTE as u128) as u64
    }

    pub(crate) fn nanobits_over(self, span_ns: u64) -> i128 {
        i128::from(self.0) * i128::from(span_ns)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v != 0 && v % 1_000_000 == 0 {
            write!(f, "{}Mbit/s", v / 1_000_000)
        } else if v != 0 && v % 1_000 == 0 {
            write!(f, "{}kbit/s", v / 1_000)
        } else {
            write!(f, "{}bit/s", v)
        }
    }
}

/// Simulated instant, in integer nanoseconds since the start of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * NANOS_PER_SEC)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    /// Time elapsed since `earlier`, zero if `earlier` is in the future.
    pub fn saturating_since(self, earlier: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }

    pub fn saturating_add(self, d: Duration) -> SimTime {
        SimTime(self.0.saturating_add(duration_nanos(d)))
    }
}

impl From<Duration> for SimTime {
    fn from(d: Duration) -> Self {
        SimTime(duration_nanos(d))
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0 + duration_nanos(rhs))
    }
}

impl AddAssign<Duration> for SimTime {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += duration_nanos(rhs);
    }
}

impl Sub for SimTime {
    type Output = Duration;

    fn sub(self, rhs: SimTime) -> Duration {
        Duration::from_nanos(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

pub(crate) fn duration_nanos(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("transmission rate is zero")]
pub struct ZeroRate;

/// Serialization time of `size` bytes on a link of `rate`, rounded up to 1 ns.
pub fn transmission_time(size: u32, rate: Rate) -> Result<Duration, ZeroRate> {
    if rate.is_zero() {
        return Err(ZeroRate);
    }
    let bits = u128::from(size) * 8 * u128::from(NANOS_PER_SEC);
    let rate = u128::from(rate.as_bps());
    Ok(Duration::from_nanos(bits.div_ceil(rate) as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_times() {
        // 12000 bits at 5e7 b/s
        assert_eq!(
            transmission_time(1500, Rate::mbps(50)).unwrap(),
            Duration::from_micros(240)
        );
        assert_eq!(transmission_time(0, Rate::mbps(50)).unwrap(), Duration::ZERO);
        assert_eq!(
            transmission_time(1500, Rate::mbps(120)).unwrap(),
            Duration::from_micros(100)
        );
        assert_eq!(transmission_time(1500, Rate::ZERO), Err(ZeroRate));
        // 8 bits at 3 bit/s rounds up
        assert_eq!(
            transmission_time(1, Rate::bps(3)).unwrap(),
            Duration::from_nanos(2_666_666_667)
        );
    }

    #[test]
    fn source_rate_from_interval() {
        assert_eq!(
            Rate::of_packets(1500, Duration::from_micros(100)),
            Some(Rate::mbps(120))
        );
        assert_eq!(Rate::of_packets(1500, Duration::ZERO), None);
    }

    #[test]
    fn bytes_over_span() {
        assert_eq!(Rate::mbps(3).bytes_over(Duration::from_millis(12)), 4500);
        assert_eq!(Rate::bps(7).bytes_over(Duration::from_secs(1)), 0);
    }

    #[test]
    fn display() {
        use alloc::string::ToString;
        assert_eq!(Rate::mbps(50).to_string(), "50Mbit/s");
        assert_eq!(Rate::kbps(1500).to_string(), "1500kbit/s");
        assert_eq!(Rate::bps(12).to_string(), "12bit/s");
        assert_eq!(SimTime::from_millis(10_220).to_string(), "10.220000s");
    }
}
