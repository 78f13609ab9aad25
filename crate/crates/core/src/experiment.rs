//! Seeded multi-run experiments and parameter sweeps.
//!
//! Each seed is an independent single-threaded simulation, so seeds and
//! sweep cells run in parallel; results are always reported in input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{probability_curve, slice_metrics, CurveRow, MetricsReport, SliceSpec};
use crate::sim::{simulate, ExperimentConfig, Topology};
use crate::trace::persist_curve;

/// Seeds used when none are given.
pub const DEFAULT_RUNS: u64 = 3;

pub fn default_seeds(runs: u64) -> Vec<u64> {
    (1..=runs).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// Arithmetic mean of per-run metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub runs: usize,
    pub precision: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub fpr: f64,
    pub alpha: f64,
}

impl MeanMetrics {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        Self::mean(reports.into_iter().map(|r| MeanMetrics {
            runs: 1,
            precision: r.precision,
            accuracy: r.accuracy,
            recall: r.recall,
            fpr: r.fpr,
            alpha: r.alpha,
        }))
    }

    /// Unweighted mean of several means (each counts once).
    pub fn mean(items: impl IntoIterator<Item = MeanMetrics>) -> Self {
        let mut acc = MeanMetrics::default();
        let mut count = 0usize;
        for m in items {
            count += 1;
            acc.runs += m.runs;
            acc.precision += m.precision;
            acc.accuracy += m.accuracy;
            acc.recall += m.recall;
            acc.fpr += m.fpr;
            acc.alpha += m.alpha;
        }
        if count > 0 {
            let c = count as f64;
            acc.precision /= c;
            acc.accuracy /= c;
            acc.recall /= c;
            acc.fpr /= c;
            acc.alpha /= c;
        }
        acc
    }
}

/// Result of running one configuration over a list of seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub slice: SliceSpec,
    pub runs: Vec<SeedRun>,
    pub aggregate: MeanMetrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve_path: Option<String>,
}

impl RunArtifact {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::config(format!("cannot encode artifact: {e}")))
    }
}

/// Simulates `config` once per seed and averages the slice metrics.
/// The seed inside `config` is ignored in favour of `seeds`.
pub fn run_experiment(
    config: &ExperimentConfig,
    seeds: &[u64],
    slice: Option<SliceSpec>,
) -> Result<RunArtifact> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let slice = slice.unwrap_or_else(|| SliceSpec::for_processes(config.n));
    slice.validate()?;
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| {
            let log = simulate(&config.with_seed(seed))?;
            Ok(SeedRun {
                seed,
                metrics: slice_metrics(&log, &slice)?,
            })
        })
        .collect::<Result<_>>()?;
    let aggregate = MeanMetrics::of(runs.iter().map(|r| &r.metrics));
    Ok(RunArtifact {
        config: config.with_seed(seeds[0]).normalized(),
        seeds: seeds.to_vec(),
        slice,
        runs,
        aggregate,
        trace_path: None,
        curve_path: None,
    })
}

/// Simulates `config` and computes the probability curve of the event at
/// `y_gsn` against every later event up to `z_to`.
pub fn curve_for(config: &ExperimentConfig, y_gsn: u64, z_to: u64) -> Result<Vec<CurveRow>> {
    config.validate()?;
    let log = simulate(config)?;
    probability_curve(&log, y_gsn, y_gsn + 1, z_to)
}

pub fn emit_curve(
    config: &ExperimentConfig,
    y_gsn: u64,
    z_to: u64,
    path: impl AsRef<Path>,
) -> Result<Vec<CurveRow>> {
    let rows = curve_for(config, y_gsn, z_to)?;
    persist_curve(&rows, path)?;
    Ok(rows)
}

/// Clock width given directly or as a fraction of `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockWidth {
    Absolute(usize),
    Ratio(f64),
}

impl ClockWidth {
    /// Ratios round to the nearest integer, never below 1.
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            ClockWidth::Absolute(0) => Err(Error::config("clock width m must be at least 1")),
            ClockWidth::Absolute(m) => Ok(m),
            ClockWidth::Ratio(r) if !(r.is_finite() && r > 0.0) => {
                Err(Error::config(format!("clock width ratio must be positive, got {r}")))
            }
            ClockWidth::Ratio(r) => Ok(((r * n as f64).round() as usize).max(1)),
        }
    }
}

impl fmt::Display for ClockWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockWidth::Absolute(m) => write!(f, "{m}"),
            ClockWidth::Ratio(r) => write!(f, "{r}n"),
        }
    }
}

impl FromStr for ClockWidth {
    type Err = Error;

    /// `"13"` is absolute, `"0.1n"` is a ratio of `n`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("invalid clock width '{s}'"));
        match s.strip_suffix('n') {
            Some(r) => r.parse().map(ClockWidth::Ratio).map_err(|_| bad()),
            None => s.parse().map(ClockWidth::Absolute).map_err(|_| bad()),
        }
    }
}

/// Cartesian product of parameter lists, each cell run over the same seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub topology: Topology,
    pub n: Vec<usize>,
    pub m: Vec<ClockWidth>,
    pub k: Vec<u32>,
    pub pr_i: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub gsn_limit: Option<u64>,
    #[serde(default)]
    pub messages_per_client: Option<u64>,
    #[serde(default)]
    pub slice_start: Option<u64>,
    #[serde(default)]
    pub slice_stride: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub n: usize,
    pub width: ClockWidth,
    pub m: usize,
    pub k: u32,
    pub pr_i: f64,
    pub result: std::result::Result<RunArtifact, String>,
}

impl SweepCell {
    pub fn artifact(&self) -> Option<&RunArtifact> {
        self.result.as_ref().ok()
    }
}

/// One cell of the expansion, before it is run.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPlan {
    pub index: usize,
    pub width: ClockWidth,
    pub config: ExperimentConfig,
    pub slice: SliceSpec,
}

impl SweepSpec {
    /// Expands in `n`, `m`, `k`, `pr_i` order (last varies fastest).
    pub fn expand(&self) -> Result<Vec<CellPlan>> {
        if self.seeds.is_empty() {
            return Err(Error::config("sweep needs at least one seed"));
        }
        let mut plans = Vec::new();
        for &n in &self.n {
            for &width in &self.m {
                for &k in &self.k {
                    for &pr_i in &self.pr_i {
                        let mut config = ExperimentConfig::new(self.topology, n, width.resolve(n)?, k, pr_i, self.seeds[0]);
                        config.gsn_limit = self.gsn_limit;
                        config.messages_per_client = self.messages_per_client;
                        config.validate()?;
                        let mut slice = SliceSpec::for_processes(n);
                        if let Some(start) = self.slice_start {
                            slice.start_gsn = start;
                        }
                        if let Some(stride) = self.slice_stride {
                            slice.stride = stride;
                        }
                        slice.validate()?;
                        plans.push(CellPlan { index: plans.len(), width, config, slice });
                    }
                }
            }
        }
        if plans.is_empty() {
            return Err(Error::config("sweep expands to no configurations"));
        }
        Ok(plans)
    }
}

/// Runs every cell; a failing cell records its error without affecting
/// the others.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    let plans = spec.expand()?;
    Ok(plans
        .into_par_iter()
        .map(|plan| SweepCell {
            index: plan.index,
            n: plan.config.n,
            width: plan.width,
            m: plan.config.m,
            k: plan.config.k,
            pr_i: plan.config.pr_i,
            result: run_experiment(&plan.config, &spec.seeds, Some(plan.slice)).map_err(|e| e.to_string()),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    N,
    M,
    K,
    PrI,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepParam::N),
            "m" => Ok(SweepParam::M),
            "k" => Ok(SweepParam::K),
            "pr_i" | "pri" => Ok(SweepParam::PrI),
            other => Err(Error::config(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

/// Mean over all successful cells sharing the kept parameters; parameters
/// not kept are `None` (averaged over).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub n: Option<usize>,
    pub width: Option<ClockWidth>,
    pub k: Option<u32>,
    pub pr_i: Option<f64>,
    pub cells: usize,
    pub metrics: MeanMetrics,
}

/// Post-aggregation used for tables that report averages over some
/// parameters. Groups appear in order of first occurrence.
pub fn group_mean(cells: &[SweepCell], keep: &[SweepParam]) -> Vec<GroupRow> {
    let key = |c: &SweepCell| {
        (
            keep.contains(&SweepParam::N).then_some(c.n),
            keep.contains(&SweepParam::M).then_some(c.width),
            keep.contains(&SweepParam::K).then_some(c.k),
            keep.contains(&SweepParam::PrI).then_some(c.pr_i),
        )
    };
    let mut groups: Vec<(_, Vec<MeanMetrics>)> = Vec::new();
    for cell in cells {
        let Some(artifact) = cell.artifact() else { continue };
        let k = key(cell);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, items)) => items.push(artifact.aggregate),
            None => groups.push((k, vec![artifact.aggregate])),
        }
    }
    groups
        .into_iter()
        .map(|((n, width, k, pr_i), items)| GroupRow {
            n,
            width,
            k,
            pr_i,
            cells: items.len(),
            metrics: MeanMetrics::mean(items),
        })
        .collect()
}

fn r3(x: f64) -> String {
    format!("{x:.3}")
}

/// CSV table of sweep cells, metrics rounded to 3 decimals.
pub fn write_sweep_table<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header = ["index", "n", "m", "k", "pr_i", "runs", "precision", "accuracy", "recall", "fpr", "alpha", "error"];
    w.write_record(header).map_err(csv_io)?;
    for c in cells {
        let mut row = vec![c.index.to_string(), c.n.to_string(), c.m.to_string(), c.k.to_string(), c.pr_i.to_string()];
        match &c.result {
            Ok(a) => {
                let g = a.aggregate;
                row.extend([g.runs.to_string(), r3(g.precision), r3(g.accuracy), r3(g.recall), r3(g.fpr), r3(g.alpha), String::new()]);
            }
            Err(e) => {
                row.extend(["0", "", "", "", "", ""].map(String::from));
                row.push(e.clone());
            }
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV table of grouped means, metrics rounded to 3 decimals.
pub fn write_group_table<W: Write>(groups: &[GroupRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "m", "k", "pr_i", "cells", "precision", "accuracy", "recall", "fpr", "alpha"])
        .map_err(csv_io)?;
    let all = || "*".to_string();
    for g in groups {
        let m = g.metrics;
        w.write_record([
            g.n.map_or_else(all, |v| v.to_string()),
            g.width.map_or_else(all, |v| v.to_string()),
            g.k.map_or_else(all, |v| v.to_string()),
            g.pr_i.map_or_else(all, |v| v.to_string()),
            g.cells.to_string(),
            r3(m.precision),
            r3(m.accuracy),
            r3(m.recall),
            r3(m.fpr),
            r3(m.alpha),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::config(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(topology: Topology) -> ExperimentConfig {
        ExperimentConfig::new(topology, 20, 3, 2, 0.0, 0)
    }

    #[test]
    fn aggregate_is_mean_of_runs() {
        let a = run_experiment(&small(Topology::Complete), &[1, 2, 3], None).unwrap();
        assert_eq!(a.runs.len(), 3);
        let p: f64 = a.runs.iter().map(|r| r.metrics.precision).sum::<f64>() / 3.0;
        assert!((a.aggregate.precision - p).abs() < 1e-15);
        assert_eq!(a.aggregate.runs, 3);
        assert_eq!(a.config.seed, 1);
    }

    #[test]
    fn experiments_are_reproducible() {
        let cfg = small(Topology::Star);
        let a = run_experiment(&cfg, &[4, 5], None).unwrap().to_json().unwrap();
        let b = run_experiment(&cfg, &[4, 5], None).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn experiment_errors() {
        assert!(matches!(run_experiment(&small(Topology::Complete), &[], None), Err(Error::Config(_))));
        let bad = ExperimentConfig::complete(20, 0, 2, 0.0, 1);
        assert!(matches!(run_experiment(&bad, &[1], None), Err(Error::Config(_))));
        let far = SliceSpec { start_gsn: 10_000, stride: 100, end_gsn: None };
        assert!(matches!(run_experiment(&small(Topology::Complete), &[1], Some(far)), Err(Error::Domain(_))));
    }

    #[test]
    fn clock_width_parsing_and_rounding() {
        assert_eq!("13".parse::<ClockWidth>().unwrap(), ClockWidth::Absolute(13));
        assert_eq!("0.1n".parse::<ClockWidth>().unwrap(), ClockWidth::Ratio(0.1));
        assert!("n".parse::<ClockWidth>().is_err());
        assert_eq!(ClockWidth::Ratio(0.1).resolve(125).unwrap(), 13);
        assert_eq!(ClockWidth::Ratio(0.05).resolve(150).unwrap(), 8);
        assert_eq!(ClockWidth::Ratio(0.001).resolve(50).unwrap(), 1);
        assert!(ClockWidth::Absolute(0).resolve(50).is_err());
        assert!(ClockWidth::Ratio(-1.0).resolve(50).is_err());
    }

    fn spec() -> SweepSpec {
        SweepSpec {
            topology: Topology::Complete,
            n: vec![20],
            m: vec![ClockWidth::Ratio(0.1), ClockWidth::Ratio(0.2)],
            k: vec![2, 3],
            pr_i: vec![0.0],
            seeds: vec![1, 2],
            gsn_limit: None,
            messages_per_client: None,
            slice_start: None,
            slice_stride: Some(20),
        }
    }

    #[test]
    fn sweep_cells_are_independent() {
        let full = run_sweep(&spec()).unwrap();
        assert_eq!(full.len(), 4);
        assert_eq!(full.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let mut reduced = spec();
        reduced.k = vec![3];
        let part = run_sweep(&reduced).unwrap();
        assert_eq!(part[0].result, full[1].result);
        assert_eq!(part[1].result, full[3].result);
    }

    #[test]
    fn grouping_averages_over_dropped_parameters() {
        let cells = run_sweep(&spec()).unwrap();
        let by_k = group_mean(&cells, &[SweepParam::K]);
        assert_eq!(by_k.len(), 2);
        assert_eq!(by_k[0].k, Some(2));
        assert_eq!(by_k[0].width, None);
        let expect = (cells[0].artifact().unwrap().aggregate.precision
            + cells[2].artifact().unwrap().aggregate.precision)
            / 2.0;
        assert!((by_k[0].metrics.precision - expect).abs() < 1e-15);
        assert_eq!(group_mean(&cells, &[]).len(), 1);
    }

    #[test]
    fn sweep_reports_cell_failures() {
        let mut s = spec();
        s.slice_start = Some(1_000_000);
        let cells = run_sweep(&s).unwrap();
        assert!(cells.iter().all(|c| c.result.is_err()));
        let mut out = Vec::new();
        write_sweep_table(&cells, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("empty slice"));
        s.seeds.clear();
        assert!(run_sweep(&s).is_err());
    }

    #[test]
    fn tables_round_to_three_decimals() {
        let cells = run_sweep(&spec()).unwrap();
        let mut out = Vec::new();
        write_group_table(&group_mean(&cells, &[SweepParam::M]), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let row = text.lines().nth(1).unwrap();
        let precision = row.split(',').nth(5).unwrap();
        assert_eq!(precision.split('.').nth(1).unwrap().len(), 3);
        assert!(row.starts_with("*,0.1n,*,*,2,"));
    }
}
