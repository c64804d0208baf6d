//! Rate-conformance statistics over windowed throughput.

use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use thiserror::Error;

use crate::oracle::Schedule;
use crate::queue::FlowId;
use crate::trace::ThroughputTrace;
use crate::units::{Rate, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("throughput trace has no windows")]
    EmptyTrace,
}

/// Distribution of a flow's per-window |measured - expected|, in bit/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationStats {
    pub flow: FlowId,
    pub samples: usize,
    pub mean_abs_dev: f64,
    pub median_abs_dev: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outlier_count: usize,
}

impl DeviationStats {
    /// Summary of `values`; `None` when there are none.
    pub fn from_samples(flow: FlowId, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || v.iter().copied().filter(|&x| lo <= x && x <= hi);
        Some(DeviationStats {
            flow,
            samples: v.len(),
            mean_abs_dev: v.iter().sum::<f64>() / v.len() as f64,
            median_abs_dev: quantile(&v, 0.5),
            q1,
            q3,
            whisker_low: inside().fold(f64::INFINITY, f64::min),
            whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
            outlier_count: v.len() - inside().count(),
        })
    }
}

/// Quantile of sorted data, interpolating linearly between ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-flow deviation of measured window rates from `expected`.
///
/// A flow contributes the windows overlapping its active span in the
/// schedule. With a positive `exclusion`, windows closer than that to any
/// flow arrival or departure are skipped. Flows left with no windows are
/// omitted.
pub fn deviation_stats(
    trace: &ThroughputTrace,
    expected: &Schedule,
    exclusion: Duration,
) -> Result<Vec<DeviationStats>, StatsError> {
    if trace.windows() == 0 {
        return Err(StatsError::EmptyTrace);
    }
    let cuts = expected.boundaries();
    let mut out = Vec::new();
    for (f, &flow) in trace.flows.iter().enumerate() {
        let Some(span) = active_span(expected, flow) else { continue };
        let mut devs = Vec::new();
        for w in 0..trace.windows() {
            let from = trace.window_start(w);
            let to = from + trace.window;
            if to <= span.0 || from >= span.1 {
                continue;
            }
            if !exclusion.is_zero() && cuts.iter().any(|&b| near(b, from, to, exclusion)) {
                continue;
            }
            let want = expected.mean_over(flow, from, to);
            devs.push((trace.rate(w, f) - want).abs());
        }
        out.extend(DeviationStats::from_samples(flow, &devs));
    }
    Ok(out)
}

fn active_span(expected: &Schedule, flow: FlowId) -> Option<(SimTime, SimTime)> {
    let f = expected.flow_index(flow)?;
    let mut live = expected.epochs.iter().filter(|e| e.rates[f] > 0.0);
    let first = live.next()?;
    let last = live.last().unwrap_or(first);
    Some((first.start, last.end))
}

/// `b` lies less than `margin` away from `[from, to)`.
fn near(b: SimTime, from: SimTime, to: SimTime, margin: Duration) -> bool {
    b.saturating_add(margin) > from && b < to.saturating_add(margin)
}

/// A class whose delivered traffic is checked against its ceiling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCeiling {
    pub name: String,
    pub ceil: Rate,
    pub cburst: u32,
    /// Flows classified into the class's subtree.
    pub flows: Vec<FlowId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeilingViolation {
    pub class: String,
    pub window: usize,
    pub bits: u64,
    pub limit: f64,
}

/// Windows in which a class delivered more than `ceil * window + cburst`.
pub fn ceiling_violations(trace: &ThroughputTrace, classes: &[ClassCeiling]) -> Vec<CeilingViolation> {
    let secs = trace.window.as_secs_f64();
    let mut out = Vec::new();
    for c in classes {
        let idx: Vec<usize> = c.flows.iter().filter_map(|&f| trace.flow_index(f)).collect();
        let limit = c.ceil.as_f64() * secs + f64::from(c.cburst) * 8.0;
        for (w, row) in trace.bits.iter().enumerate() {
            let bits: u64 = idx.iter().map(|&i| row[i]).sum();
            if bits as f64 > limit {
                out.push(CeilingViolation {
                    class: c.name.clone(),
                    window: w,
                    bits,
                    limit,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Epoch;
    use alloc::vec;

    fn schedule(rate: f64, secs: u64) -> Schedule {
        Schedule {
            flows: vec![FlowId(0)],
            epochs: vec![Epoch {
                start: SimTime::ZERO,
                end: SimTime::from_secs(secs),
                rates: vec![rate],
            }],
        }
    }

    fn trace(rates: &[u64]) -> ThroughputTrace {
        ThroughputTrace {
            window: Duration::from_secs(1),
            flows: vec![FlowId(0)],
            bits: rates.iter().map(|&r| vec![r]).collect(),
        }
    }

    #[test]
    fn exact_trace_has_zero_deviation() {
        let s = deviation_stats(&trace(&[5_000_000; 8]), &schedule(5e6, 8), Duration::ZERO).unwrap();
        let d = s[0];
        assert_eq!(d.samples, 8);
        for v in [d.mean_abs_dev, d.median_abs_dev, d.q1, d.q3, d.whisker_low, d.whisker_high] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(d.outlier_count, 0);
    }

    #[test]
    fn one_bad_window_in_ten() {
        let mut r = [10_000_000u64; 10];
        r[4] = 9_000_000;
        let d = deviation_stats(&trace(&r), &schedule(10e6, 10), Duration::ZERO).unwrap()[0];
        assert_eq!(d.mean_abs_dev, 100_000.0);
        assert_eq!(d.median_abs_dev, 0.0);
        assert_eq!(d.outlier_count, 1);
        assert_eq!(d.whisker_high, 0.0);
    }

    #[test]
    fn quartiles_interpolate() {
        let d = DeviationStats::from_samples(FlowId(0), &[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((d.q1, d.median_abs_dev, d.q3), (1.75, 2.5, 3.25));
        assert_eq!((d.whisker_low, d.whisker_high), (1.0, 4.0));
        assert!(DeviationStats::from_samples(FlowId(0), &[]).is_none());
    }

    #[test]
    fn exclusion_skips_windows_near_changes() {
        let mut s = schedule(1e6, 10);
        s.epochs[0].end = SimTime::from_secs(5);
        s.epochs.push(Epoch {
            start: SimTime::from_secs(5),
            end: SimTime::from_secs(10),
            rates: vec![2e6],
        });
        let t = trace(&[1_000_000; 10]);
        let all = deviation_stats(&t, &s, Duration::ZERO).unwrap()[0];
        assert_eq!(all.samples, 10);
        let some = deviation_stats(&t, &s, Duration::from_secs(1)).unwrap()[0];
        // windows 4 and 5 touch the change at 5 s
        assert_eq!(some.samples, 8);
        assert_eq!(some.mean_abs_dev, 4.0 * 1e6 / 8.0);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert_eq!(
            deviation_stats(&trace(&[]), &schedule(1.0, 1), Duration::ZERO),
            Err(StatsError::EmptyTrace)
        );
    }

    #[test]
    fn ceiling_audit() {
        let c = ClassCeiling {
            name: "leaf0".into(),
            ceil: Rate::mbps(20),
            cburst: 1500,
            flows: vec![FlowId(0)],
        };
        assert!(ceiling_violations(&trace(&[20_012_000, 0]), core::slice::from_ref(&c)).is_empty());
        let v = ceiling_violations(&trace(&[0, 20_012_001]), &[c]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].window, 1);
    }
}
