use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bloomclock::experiment::write_sweep_table;
use bloomclock::trace::{persist_trace, write_curve};
use bloomclock::{
    default_seeds, emit_curve, group_mean, load_trace, run_experiment, run_sweep, simulate,
    slice_metrics, verify_replay, ClockWidth, Error, ExperimentConfig, MeanMetrics, Result,
    RunArtifact, SliceSpec, SweepParam, SweepSpec, Topology, DEFAULT_RUNS,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bloomclock", version, about = "Bloom clock causality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over several seeds and report mean metrics.
    Run(RunArgs),
    /// Run the cartesian product of comma-separated parameter lists.
    Sweep(SweepArgs),
    /// Emit the pr_p / pr_fp curve of one event against later events.
    Curve(CurveArgs),
    /// Write execution traces, or check and score an existing one.
    Trace(TraceArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    #[arg(long, default_value = "complete")]
    topology: Topology,
    /// Number of processes (clients for star).
    #[arg(long, value_delimiter = ',', default_value = "50")]
    n: Vec<usize>,
    /// Absolute clock width.
    #[arg(long, value_delimiter = ',', conflicts_with = "m_ratio")]
    m: Vec<usize>,
    /// Clock width as a fraction of n.
    #[arg(long, value_delimiter = ',')]
    m_ratio: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<u32>,
    /// Probability of an internal event (complete topology only).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pri: Vec<f64>,
    /// Seed to run; may be repeated.
    #[arg(long, conflicts_with = "runs")]
    seed: Vec<u64>,
    /// Run seeds 1..=N.
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    gsn_limit: Option<u64>,
    /// Star topology: request/reply rounds per client.
    #[arg(long)]
    messages_per_client: Option<u64>,
    #[arg(long)]
    slice_start: Option<u64>,
    #[arg(long)]
    slice_stride: Option<u64>,
    /// Directory for JSON and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also persist the trace of every seed.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Average cells over every parameter not listed (e.g. `pri`).
    #[arg(long, value_delimiter = ',')]
    group_by: Option<Vec<SweepParam>>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// GSN of the fixed event y (default 10n).
    #[arg(long)]
    y_gsn: Option<u64>,
    /// Last z GSN (default: last event).
    #[arg(long)]
    z_to: Option<u64>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Load this trace, replay it and print its slice metrics.
    #[arg(long)]
    input: Option<PathBuf>,
}

impl ConfigArgs {
    fn widths(&self) -> Vec<ClockWidth> {
        if !self.m.is_empty() {
            self.m.iter().map(|&m| ClockWidth::Absolute(m)).collect()
        } else if !self.m_ratio.is_empty() {
            self.m_ratio.iter().map(|&r| ClockWidth::Ratio(r)).collect()
        } else {
            vec![ClockWidth::Ratio(0.1)]
        }
    }

    fn seeds(&self) -> Result<Vec<u64>> {
        match self.runs {
            Some(0) => Err(Error::Config("--runs must be at least 1".into())),
            Some(n) => Ok(default_seeds(n)),
            None if self.seed.is_empty() => Ok(default_seeds(DEFAULT_RUNS)),
            None => Ok(self.seed.clone()),
        }
    }

    fn sweep(&self) -> Result<SweepSpec> {
        Ok(SweepSpec {
            topology: self.topology,
            n: self.n.clone(),
            m: self.widths(),
            k: self.k.clone(),
            pr_i: self.pri.clone(),
            seeds: self.seeds()?,
            gsn_limit: self.gsn_limit,
            messages_per_client: self.messages_per_client,
            slice_start: self.slice_start,
            slice_stride: self.slice_stride,
        })
    }

    /// The single configuration named by the flags; lists are rejected.
    fn single(&self) -> Result<(ExperimentConfig, SliceSpec)> {
        let mut plans = self.sweep()?.expand()?;
        if plans.len() != 1 {
            return Err(Error::Config(format!(
                "expected one configuration, flags expand to {} (use `sweep`)",
                plans.len()
            )));
        }
        let plan = plans.remove(0);
        Ok((plan.config, plan.slice))
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir)?;
        }
        Ok(self.out.as_deref())
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot encode json: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn print_mean(label: &str, m: &MeanMetrics) {
    println!(
        "{label}precision={:.3} accuracy={:.3} recall={:.3} fpr={:.3} alpha={:.4} runs={}",
        m.precision, m.accuracy, m.recall, m.fpr, m.alpha, m.runs
    );
}

fn trace_name(config: &ExperimentConfig) -> String {
    format!("trace_{}_n{}_m{}_k{}_seed{}.tsv", config.topology, config.n, config.m, config.k, config.seed)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (config, slice) = args.config.single()?;
    let seeds = args.config.seeds()?;
    let mut artifact: RunArtifact = run_experiment(&config, &seeds, Some(slice))?;
    for run in &artifact.runs {
        let r = &run.metrics;
        println!(
            "seed {}: precision={:.3} accuracy={:.3} fpr={:.3} alpha={:.4} tp={} fp={} tn={} fn={}",
            run.seed, r.precision, r.accuracy, r.fpr, r.alpha, r.counts.tp, r.counts.fp, r.counts.tn, r.counts.fn_
        );
    }
    print_mean("mean: ", &artifact.aggregate);
    if let Some(dir) = args.config.out_dir()? {
        if args.traces {
            let mut first = None;
            for &seed in &seeds {
                let cfg = config.with_seed(seed);
                let path = dir.join(trace_name(&cfg));
                persist_trace(&simulate(&cfg)?, &path)?;
                first.get_or_insert(path.display().to_string());
            }
            artifact.trace_path = first;
        }
        write_json(&dir.join("run.json"), &artifact)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let spec = args.config.sweep()?;
    let cells = run_sweep(&spec)?;
    for cell in &cells {
        match &cell.result {
            Ok(a) => print_mean(&format!("[{}] n={} m={} k={} pri={}: ", cell.index, cell.n, cell.m, cell.k, cell.pr_i), &a.aggregate),
            Err(e) => println!("[{}] n={} m={} k={} pri={}: error: {e}", cell.index, cell.n, cell.m, cell.k, cell.pr_i),
        }
    }
    let groups = args.group_by.as_ref().map(|keep| group_mean(&cells, keep));
    if let Some(groups) = &groups {
        for g in groups {
            let show = |v: Option<String>| v.unwrap_or_else(|| "*".into());
            print_mean(
                &format!(
                    "group n={} m={} k={} pri={} cells={}: ",
                    show(g.n.map(|v| v.to_string())),
                    show(g.width.map(|v| v.to_string())),
                    show(g.k.map(|v| v.to_string())),
                    show(g.pr_i.map(|v| v.to_string())),
                    g.cells
                ),
                &g.metrics,
            );
        }
    }
    if let Some(dir) = args.config.out_dir()? {
        write_json(&dir.join("sweep.json"), &cells)?;
        write_sweep_table(&cells, fs::File::create(dir.join("sweep.csv"))?)?;
        if let Some(groups) = &groups {
            write_json(&dir.join("groups.json"), groups)?;
            bloomclock::experiment::write_group_table(groups, fs::File::create(dir.join("groups.csv"))?)?;
        }
    }
    if cells.iter().any(|c| c.result.is_err()) {
        return Err(Error::Config("one or more sweep cells failed".into()));
    }
    Ok(())
}

fn cmd_curve(args: CurveArgs) -> Result<()> {
    let (config, _) = args.config.single()?;
    let seeds = args.config.seeds()?;
    let y = args.y_gsn.unwrap_or(10 * config.n as u64);
    let z_to = args.z_to.unwrap_or_else(|| config.effective_gsn_limit());
    let dir = args.config.out_dir()?;
    for &seed in &seeds {
        let cfg = config.with_seed(seed);
        let rows = match dir {
            Some(dir) => emit_curve(&cfg, y, z_to, dir.join(format!("curve_seed{seed}.csv")))?,
            None if seeds.len() == 1 => {
                let rows = bloomclock::experiment::curve_for(&cfg, y, z_to)?;
                write_curve(&rows, std::io::stdout().lock())?;
                continue;
            }
            None => bloomclock::experiment::curve_for(&cfg, y, z_to)?,
        };
        let fp = rows.iter().filter(|r| r.outcome == bloomclock::Outcome::FalsePositive).count();
        let min_tail = rows.iter().rev().take(rows.len() / 10).map(|r| r.pr_p).fold(f64::INFINITY, f64::min);
        println!("seed {seed}: rows={} fp_rows={fp} min_pr_p_last_tenth={min_tail:.4}", rows.len());
    }
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    if let Some(input) = &args.input {
        let log = load_trace(input)?;
        verify_replay(&log)?;
        let mut slice = SliceSpec::for_processes(log.config.n);
        if let Some(start) = args.config.slice_start {
            slice.start_gsn = start;
        }
        if let Some(stride) = args.config.slice_stride {
            slice.stride = stride;
        }
        let r = slice_metrics(&log, &slice)?;
        println!(
            "events={} replay=ok precision={:.3} accuracy={:.3} fpr={:.3} alpha={:.4}",
            log.len(), r.precision, r.accuracy, r.fpr, r.alpha
        );
        return Ok(());
    }
    let (config, _) = args.config.single()?;
    let dir = args
        .config
        .out_dir()?
        .ok_or_else(|| Error::Config("trace needs --out DIR or --input FILE".into()))?;
    for seed in args.config.seeds()? {
        let cfg = config.with_seed(seed);
        let log = simulate(&cfg)?;
        let path = dir.join(trace_name(&cfg));
        persist_trace(&log, &path)?;
        println!("seed {seed}: {} events -> {}", log.len(), path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Trace(a) => cmd_trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
