//! Text forms of rates, durations and byte counts used in hierarchy and
//! scenario files. Values are parsed exactly: `13.5Mbit/s` is 13 500 000
//! bit/s, and anything that would need a fractional bit/s or nanosecond is
//! rejected.

use std::time::Duration;

use htbsim_core::Rate;

const RATE_UNITS: [(&str, u64); 8] = [
    ("Gbit/s", 1_000_000_000),
    ("Mbit/s", 1_000_000),
    ("kbit/s", 1_000),
    ("bit/s", 1),
    ("Gbps", 1_000_000_000),
    ("Mbps", 1_000_000),
    ("kbps", 1_000),
    ("bps", 1),
];

const TIME_UNITS: [(&str, u64); 4] = [("ns", 1), ("us", 1_000), ("ms", 1_000_000), ("s", 1_000_000_000)];

pub fn parse_rate(text: &str) -> Result<Rate, String> {
    let (num, unit) = split(text)?;
    let mult = if unit.is_empty() {
        1
    } else {
        RATE_UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, m)| *m)
            .ok_or_else(|| format!("unknown rate unit {unit:?}"))?
    };
    scaled(num, mult).map(Rate::bps)
}

/// A duration; a bare number is seconds.
pub fn parse_duration(text: &str) -> Result<Duration, String> {
    let (num, unit) = split(text)?;
    let mult = if unit.is_empty() {
        1_000_000_000
    } else {
        TIME_UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, m)| *m)
            .ok_or_else(|| format!("unknown time unit {unit:?}"))?
    };
    scaled(num, mult).map(Duration::from_nanos)
}

pub fn parse_bytes(text: &str) -> Result<u32, String> {
    let t = text.trim();
    let t = t.strip_suffix('B').unwrap_or(t).trim_end();
    t.parse::<u32>()
        .map_err(|_| format!("expected a byte count, found {text:?}"))
}

/// Shortest exact form `parse_duration` reads back.
pub fn format_duration(d: Duration) -> String {
    let ns = d.as_nanos();
    for (unit, mult) in TIME_UNITS.iter().rev() {
        let m = u128::from(*mult);
        if ns % m == 0 {
            return format!("{}{unit}", ns / m);
        }
    }
    unreachable!("ns divides everything")
}

fn split(text: &str) -> Result<(&str, &str), String> {
    let t = text.trim();
    let end = t
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(end);
    if num.is_empty() || num == "." {
        return Err(format!("expected a number, found {text:?}"));
    }
    Ok((num, unit.trim()))
}

/// `num * mult` for a plain decimal `num`, if it is a whole number.
fn scaled(num: &str, mult: u64) -> Result<u64, String> {
    let (int, frac) = num.split_once('.').unwrap_or((num, ""));
    if frac.contains('.') {
        return Err(format!("malformed number {num:?}"));
    }
    let too_big = || format!("{num} is out of range");
    let int_v: u128 = if int.is_empty() { 0 } else { int.parse().map_err(|_| too_big())? };
    let frac = frac.trim_end_matches('0');
    let mut total = int_v.checked_mul(u128::from(mult)).ok_or_else(too_big)?;
    if !frac.is_empty() {
        let digits = u32::try_from(frac.len()).map_err(|_| too_big())?;
        let den = 10u128.checked_pow(digits).ok_or_else(too_big)?;
        let f: u128 = frac.parse().map_err(|_| too_big())?;
        let part = f * u128::from(mult);
        if part % den != 0 {
            return Err(format!("{num} is finer than the unit allows"));
        }
        total += part / den;
    }
    u64::try_from(total).map_err(|_| too_big())
}
