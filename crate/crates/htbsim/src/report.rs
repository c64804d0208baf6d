//! Conformance report: measured rates against the oracle, deviation
//! statistics and ceiling audit.

use std::fmt;
use std::time::Duration;

use htbsim_core::{
    ceiling_violations, deviation_stats, CeilingViolation, ClassCeiling, DeviationStats, FlowId, Schedule, SimTime,
    ThroughputTrace,
};

use crate::artifacts::secs;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub start: SimTime,
    pub end: SimTime,
    pub flow: FlowId,
    pub expected: f64,
    /// Mean over the windows lying wholly inside the epoch, if any do.
    pub measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub window: Duration,
    pub exclusion: Duration,
    pub epochs: Vec<EpochRow>,
    pub deviation: Vec<DeviationStats>,
    pub violations: Vec<CeilingViolation>,
}

impl Report {
    pub fn build(trace: &ThroughputTrace, expected: &Schedule, classes: &[ClassCeiling], exclusion: Duration) -> Self {
        let mut epochs = Vec::new();
        for e in &expected.epochs {
            for (&flow, &rate) in expected.flows.iter().zip(&e.rates) {
                if rate > 0.0 {
                    epochs.push(EpochRow {
                        start: e.start,
                        end: e.end,
                        flow,
                        expected: rate,
                        measured: trace.mean_rate(flow, e.start, e.end),
                    });
                }
            }
        }
        Report {
            window: trace.window,
            exclusion,
            epochs,
            deviation: deviation_stats(trace, expected, exclusion).unwrap_or_default(),
            violations: ceiling_violations(trace, classes),
        }
    }

    pub fn has_violations(&self) -> bool {
        !self.violations.is_empty()
    }
}

fn mbit(v: f64) -> f64 {
    v / 1e6
}

fn kbit(v: f64) -> f64 {
    v / 1e3
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "window {} s, exclusion {} s",
            secs(SimTime::from(self.window)),
            secs(SimTime::from(self.exclusion))
        )?;

        writeln!(f, "\nrates by epoch (Mbit/s)")?;
        writeln!(f, "{:>12} {:>12} {:>6} {:>10} {:>10} {:>8}", "start_s", "end_s", "flow", "expected", "measured", "error")?;
        for r in &self.epochs {
            let (m, err) = match r.measured {
                Some(m) => (format!("{:.3}", mbit(m)), format!("{:+.2}%", (m - r.expected) / r.expected * 100.0)),
                None => ("-".into(), "-".into()),
            };
            writeln!(
                f,
                "{:>12} {:>12} {:>6} {:>10.3} {:>10} {:>8}",
                secs(r.start),
                secs(r.end),
                r.flow,
                mbit(r.expected),
                m,
                err
            )?;
        }

        writeln!(f, "\nabsolute deviation per window (kbit/s)")?;
        writeln!(
            f,
            "{:>6} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
            "flow", "windows", "mean", "median", "q1", "q3", "wlow", "whigh", "outliers"
        )?;
        for d in &self.deviation {
            writeln!(
                f,
                "{:>6} {:>7} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                d.flow,
                d.samples,
                kbit(d.mean_abs_dev),
                kbit(d.median_abs_dev),
                kbit(d.q1),
                kbit(d.q3),
                kbit(d.whisker_low),
                kbit(d.whisker_high),
                d.outlier_count
            )?;
        }

        if self.violations.is_empty() {
            writeln!(f, "\nceiling violations: none")
        } else {
            writeln!(f, "\nceiling violations: {}", self.violations.len())?;
            for v in &self.violations {
                writeln!(
                    f,
                    "  class {} window {} ({} s): {} bits > limit {:.0}",
                    v.class,
                    v.window,
                    secs(SimTime::from(self.window * v.window as u32)),
                    v.bits,
                    v.limit
                )?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use htbsim_core::{Epoch, Rate};

    fn trace(bits: &[u64]) -> ThroughputTrace {
        ThroughputTrace {
            window: Duration::from_secs(1),
            flows: vec![FlowId(0)],
            bits: bits.iter().map(|&b| vec![b]).collect(),
        }
    }

    fn schedule() -> Schedule {
        Schedule {
            flows: vec![FlowId(0)],
            epochs: vec![Epoch {
                start: SimTime::ZERO,
                end: SimTime::from_secs(3),
                rates: vec![1e6],
            }],
        }
    }

    #[test]
    fn flags_over_ceiling_window() {
        let class = ClassCeiling {
            name: "leaf0".into(),
            ceil: Rate::mbps(1),
            cburst: 1500,
            flows: vec![FlowId(0)],
        };
        let r = Report::build(&trace(&[1_000_000, 1_020_000, 990_000]), &schedule(), &[class], Duration::ZERO);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].window, 1);
        assert!((r.epochs[0].measured.unwrap() - 3_010_000.0 / 3.0).abs() < 1e-6);
        assert_eq!(r.deviation[0].samples, 3);
        let text = r.to_string();
        assert!(text.contains("ceiling violations: 1"), "{text}");
        assert!(text.contains("class leaf0 window 1"), "{text}");
    }

    #[test]
    fn clean_run() {
        let r = Report::build(&trace(&[1_000_000; 3]), &schedule(), &[], Duration::ZERO);
        assert!(!r.has_violations());
        assert!(r.to_string().contains("ceiling violations: none"));
    }
}
