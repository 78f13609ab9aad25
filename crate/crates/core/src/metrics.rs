//! Pairwise classification of Bloom predictions against the vector-clock
//! oracle, confusion-matrix metrics, causality spread and probability
//! curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::probability::classify_probabilities;
use crate::sim::{EventRecord, ExecutionLog};

/// Sampled subset of a log: `start_gsn, start_gsn + stride, ...` up to
/// `end_gsn` (the last event when unset).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub start_gsn: u64,
    pub stride: u64,
    #[serde(default)]
    pub end_gsn: Option<u64>,
}

impl SliceSpec {
    pub const DEFAULT_STRIDE: u64 = 100;

    /// Starts at `10 n` to skip the warm-up, every 100th event to the end.
    pub fn for_processes(n: usize) -> Self {
        SliceSpec {
            start_gsn: 10 * n as u64,
            stride: Self::DEFAULT_STRIDE,
            end_gsn: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_gsn == 0 {
            return Err(Error::config("slice start gsn must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("slice stride must be at least 1"));
        }
        Ok(())
    }
}

pub fn sample_slice<'a>(log: &'a ExecutionLog, spec: &SliceSpec) -> Result<Vec<&'a EventRecord>> {
    spec.validate()?;
    let last = log.last_gsn();
    let end = spec.end_gsn.unwrap_or(last);
    if end > last {
        return Err(Error::domain(format!("slice end {end} beyond last gsn {last}")));
    }
    let events: Vec<&EventRecord> = (spec.start_gsn..=end)
        .step_by(spec.stride as usize)
        .filter_map(|gsn| log.event(gsn))
        .collect();
    if events.is_empty() {
        return Err(Error::domain(format!(
            "empty slice: start {} stride {} end {end}",
            spec.start_gsn, spec.stride
        )));
    }
    Ok(events)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FN")]
    FalseNegative,
}

impl Outcome {
    pub fn from_tests(oracle: bool, predicted: bool) -> Self {
        match (oracle, predicted) {
            (true, true) => Outcome::TruePositive,
            (false, true) => Outcome::FalsePositive,
            (false, false) => Outcome::TrueNegative,
            (true, false) => Outcome::FalseNegative,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::TruePositive => "TP",
            Outcome::FalsePositive => "FP",
            Outcome::TrueNegative => "TN",
            Outcome::FalseNegative => "FN",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TP" => Ok(Outcome::TruePositive),
            "FP" => Ok(Outcome::FalsePositive),
            "TN" => Ok(Outcome::TrueNegative),
            "FN" => Ok(Outcome::FalseNegative),
            other => Err(Error::domain(format!("unknown outcome '{other}'"))),
        }
    }
}

/// Classifies the claim `y -> z`: the oracle is vector happened-before,
/// the prediction is the Bloom test `By <= Bz`.
pub fn classify_pair(y: &EventRecord, z: &EventRecord) -> Result<Outcome> {
    let oracle = y.vector_ts.happened_before(&z.vector_ts)?;
    let predicted = y.bloom_ts.leq(&z.bloom_ts)?;
    Ok(Outcome::from_tests(oracle, predicted))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::TruePositive => self.tp += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::TrueNegative => self.tn += 1,
            Outcome::FalseNegative => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, rhs: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            tn: self.tn + rhs.tn,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

/// Tests every ordered pair of distinct events (both directions).
pub fn classify_events(events: &[&EventRecord]) -> Result<ConfusionCounts> {
    (0..events.len())
        .into_par_iter()
        .map(|i| {
            let mut counts = ConfusionCounts::default();
            for (j, z) in events.iter().enumerate() {
                if i != j {
                    counts.record(classify_pair(events[i], z)?);
                }
            }
            Ok(counts)
        })
        .try_reduce(ConfusionCounts::default, |a, b| Ok(a + b))
}

/// Metrics derived from a confusion matrix.
///
/// When a ratio's denominator is zero a sentinel is reported and the matching
/// flag set: precision 1 (nothing was predicted positive), recall 1 (no
/// positives to miss), fpr 0 (no negatives exist).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub fpr: f64,
    pub alpha: f64,
    pub precision_sentinel: bool,
    pub recall_sentinel: bool,
    pub fpr_sentinel: bool,
}

fn ratio(num: u64, den: u64, sentinel: f64) -> (f64, bool) {
    if den == 0 {
        (sentinel, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn compute_metrics(counts: ConfusionCounts) -> Result<MetricsReport> {
    let ConfusionCounts { tp, fp, tn, fn_ } = counts;
    let total = counts.total();
    if total == 0 {
        return Err(Error::domain("no pairs were classified"));
    }
    let (precision, precision_sentinel) = ratio(tp, tp + fp, 1.0);
    let (recall, recall_sentinel) = ratio(tp, tp + fn_, 1.0);
    let (fpr, fpr_sentinel) = ratio(fp, fp + tn, 0.0);
    Ok(MetricsReport {
        counts,
        precision,
        accuracy: (tp + tn) as f64 / total as f64,
        recall,
        fpr,
        alpha: causality_spread(counts)?,
        precision_sentinel,
        recall_sentinel,
        fpr_sentinel,
    })
}

/// Fraction of tested ordered pairs that are truly causally related.
pub fn causality_spread(counts: ConfusionCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::domain("causality spread needs at least one pair"));
    }
    Ok((counts.tp + counts.fn_) as f64 / total as f64)
}

/// Samples the slice, classifies all ordered pairs and computes metrics.
pub fn slice_metrics(log: &ExecutionLog, spec: &SliceSpec) -> Result<MetricsReport> {
    let events = sample_slice(log, spec)?;
    compute_metrics(classify_events(&events)?)
}

/// One point of a probability curve for a fixed event `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub z_gsn: u64,
    pub pr_p: f64,
    pub pr_fp_step: f64,
    pub pr_fp_smooth: f64,
    pub outcome: Outcome,
}

/// Compares `y` at `y_gsn` against every `z` in `z_from..=z_to`.
pub fn probability_curve(
    log: &ExecutionLog,
    y_gsn: u64,
    z_from: u64,
    z_to: u64,
) -> Result<Vec<CurveRow>> {
    let last = log.last_gsn();
    if !(y_gsn >= 1 && y_gsn < z_from && z_from <= z_to && z_to <= last) {
        return Err(Error::domain(format!(
            "curve range must satisfy 1 <= y < z_from <= z_to <= {last}, got y = {y_gsn}, z = {z_from}..={z_to}"
        )));
    }
    let y = log.event(y_gsn).expect("range checked");
    (z_from..=z_to)
        .into_par_iter()
        .map(|gsn| {
            let z = log.event(gsn).expect("range checked");
            let report = classify_probabilities(&y.bloom_ts, &z.bloom_ts)?;
            Ok(CurveRow {
                z_gsn: gsn,
                pr_p: report.pr_p.value(),
                pr_fp_step: report.pr_fp_step.value(),
                pr_fp_smooth: report.pr_fp_smooth.value(),
                outcome: classify_pair(y, z)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{BloomClock, EventIndex, ProcessId, VectorClock};
    use crate::sim::{run_complete, EventKind, ExperimentConfig};

    fn ev(gsn: u64, pid: u32, v: &[u64], b: &[u64]) -> EventRecord {
        EventRecord {
            gsn,
            pid: ProcessId(pid),
            kind: EventKind::Internal,
            event_index: EventIndex(v[pid as usize]),
            sender: None,
            receiver: None,
            send_gsn: None,
            vector_ts: VectorClock::from_counters(v.to_vec()),
            bloom_ts: BloomClock::from_counters(b.to_vec()),
        }
    }

    #[test]
    fn slice_examples() {
        let mut cfg = ExperimentConfig::complete(4, 2, 2, 0.0, 1);
        cfg.gsn_limit = Some(30);
        let log = run_complete(&cfg).unwrap();
        let spec = SliceSpec { start_gsn: 10, stride: 5, end_gsn: Some(25) };
        let gsns: Vec<u64> = sample_slice(&log, &spec).unwrap().iter().map(|e| e.gsn).collect();
        assert_eq!(gsns, vec![10, 15, 20, 25]);

        let empty = SliceSpec { start_gsn: 31, stride: 5, end_gsn: None };
        assert!(matches!(sample_slice(&log, &empty), Err(Error::Domain(_))));
        let beyond = SliceSpec { start_gsn: 1, stride: 5, end_gsn: Some(31) };
        assert!(matches!(sample_slice(&log, &beyond), Err(Error::Domain(_))));
        let zero = SliceSpec { start_gsn: 1, stride: 0, end_gsn: None };
        assert!(matches!(sample_slice(&log, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn default_slice_size_for_n100() {
        let spec = SliceSpec::for_processes(100);
        let count = (spec.start_gsn..=10_000).step_by(spec.stride as usize).count();
        assert_eq!(count, (10_000 - 1000) / 100 + 1);
        assert_eq!(count, 91);
    }

    #[test]
    fn pair_outcomes() {
        let y = ev(1, 0, &[1, 0], &[1, 1]);
        let z = ev(2, 1, &[1, 1], &[1, 1]);
        assert_eq!(classify_pair(&y, &z).unwrap(), Outcome::TruePositive);

        let a = ev(1, 0, &[1, 0], &[1, 0]);
        let b = ev(2, 1, &[0, 1], &[1, 1]);
        assert_eq!(classify_pair(&a, &b).unwrap(), Outcome::FalsePositive);
        assert_eq!(classify_pair(&b, &a).unwrap(), Outcome::TrueNegative);
    }

    #[test]
    fn both_directions_are_counted() {
        let events = [ev(1, 0, &[1, 0], &[1, 0]), ev(2, 1, &[0, 1], &[0, 1]), ev(3, 0, &[2, 0], &[2, 0])];
        let refs: Vec<&EventRecord> = events.iter().collect();
        let counts = classify_events(&refs).unwrap();
        assert_eq!(counts.total(), 3 * 2);
        assert_eq!(counts, ConfusionCounts { tp: 1, fp: 0, tn: 5, fn_: 0 });
    }

    #[test]
    fn metric_examples() {
        let r = compute_metrics(ConfusionCounts { tp: 1, fp: 0, tn: 0, fn_: 0 }).unwrap();
        assert_eq!((r.precision, r.accuracy, r.recall, r.fpr), (1.0, 1.0, 1.0, 0.0));
        assert!(r.fpr_sentinel && !r.precision_sentinel);

        let r = compute_metrics(ConfusionCounts { tp: 3, fp: 1, tn: 6, fn_: 0 }).unwrap();
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.accuracy, 0.9);
        assert_eq!(r.fpr, 1.0 / 7.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.alpha, 0.3);

        let r = compute_metrics(ConfusionCounts { tp: 0, fp: 0, tn: 4, fn_: 0 }).unwrap();
        assert!(r.precision_sentinel && r.recall_sentinel);
        assert_eq!(r.precision, 1.0);

        assert!(matches!(compute_metrics(ConfusionCounts::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn spread_of_a_chain_is_one_half() {
        let events: Vec<EventRecord> = (1..=10).map(|i| ev(i, 0, &[i, 0], &[i, 0])).collect();
        let refs: Vec<&EventRecord> = events.iter().collect();
        let counts = classify_events(&refs).unwrap();
        assert_eq!(causality_spread(counts).unwrap(), 0.5);
    }

    #[test]
    fn spread_of_isolated_events_is_zero() {
        let n = 6;
        let events: Vec<EventRecord> = (0..n)
            .map(|p| {
                let mut v = vec![0; n];
                v[p] = 1;
                ev(p as u64 + 1, p as u32, &v, &[1, 1])
            })
            .collect();
        let refs: Vec<&EventRecord> = events.iter().collect();
        assert_eq!(causality_spread(classify_events(&refs).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn curve_range_errors() {
        let mut cfg = ExperimentConfig::complete(5, 2, 2, 0.0, 1);
        cfg.gsn_limit = Some(20);
        let log = run_complete(&cfg).unwrap();
        assert!(probability_curve(&log, 5, 5, 10).is_err());
        assert!(probability_curve(&log, 5, 6, 21).is_err());
        assert!(probability_curve(&log, 0, 1, 2).is_err());
        let rows = probability_curve(&log, 5, 6, 20).unwrap();
        assert_eq!(rows.len(), 15);
        for r in rows {
            if r.outcome == Outcome::TrueNegative {
                assert_eq!(r.pr_fp_step, 0.0);
            }
            assert!(r.pr_fp_smooth <= 0.25);
        }
    }

    #[test]
    fn outcome_labels_round_trip() {
        for o in [Outcome::TruePositive, Outcome::FalsePositive, Outcome::TrueNegative, Outcome::FalseNegative] {
            assert_eq!(o.label().parse::<Outcome>().unwrap(), o);
        }
    }
}
