//! Bloom clocks: probabilistic causality timestamps built on counting Bloom
//! filters, measured against exact vector clocks in seeded simulations.

pub mod clock;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod probability;
pub mod sim;
pub mod trace;

pub use clock::{BloomClock, EventIndex, HashFamily, ProcessId, VectorClock};
pub use error::{Error, Result};
pub use metrics::{
    causality_spread, classify_events, classify_pair, compute_metrics, probability_curve,
    sample_slice, slice_metrics, ConfusionCounts, CurveRow, MetricsReport, Outcome, SliceSpec,
};
pub use probability::{
    binom_pmf, classify_probabilities, count_threshold_cdf, poisson_cdf_via_gamma, pr_delta,
    pr_positive, Probability, ProbabilityReport, ThresholdMethod,
};
pub use sim::{
    run_broadcast, run_complete, run_star, simulate, verify_replay, EventKind, EventRecord,
    ExecutionLog, ExperimentConfig, MessageItem, Topology,
};
pub use experiment::{
    default_seeds, emit_curve, group_mean, run_experiment, run_sweep, ClockWidth, GroupRow,
    MeanMetrics, RunArtifact, SeedRun, SweepCell, SweepParam, SweepSpec, DEFAULT_RUNS,
};
pub use trace::{load_curve, load_trace, persist_curve, persist_trace, read_curve, read_trace, write_curve, write_trace};
