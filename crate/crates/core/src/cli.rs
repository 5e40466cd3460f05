//! Command-line frontend: `run`, `validate`, `bench` and `scale`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 tolerance failure,
//! 4 runtime or backend error. Failures print one JSON error record to
//! stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{
    measure_trace, scaling_report, scaling_table, BenchReport, Channel, EnergyTrace, ScalingRow,
};
use crate::config::{write_atomic, BackendKind, Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::hermite::{
    self, compare_energy_distribution, energy_report, energy_report_with_edges, force_deviation,
    generate_initial_conditions, golden_acc_jerk, Backend, DistributionComparison,
    ForceDeviation, RunReport,
};
use crate::particles::ParticleSystem;
use crate::topology::{ClusterConfig, ScalingMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gravtile", version, about = "Direct N-body gravity on a simulated tile accelerator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate and write snapshots and per-step diagnostics.
    Run,
    /// Compare device forces with the oracle, then energy distributions after the run.
    Validate,
    /// Repeat runs and report time, energy, EDP and peak power.
    Bench,
    /// Sweep rank counts and report strong scaling.
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Emit {
    Json,
    #[default]
    Table,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Particle count.
    #[arg(long = "n", global = true)]
    pub particles: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scaling mode: 1, 2, 3 or its name.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true)]
    pub cards: Option<usize>,
    #[arg(long, global = true)]
    pub chips_per_card: Option<usize>,
    /// Compute cores per chip.
    #[arg(long, global = true)]
    pub cores: Option<usize>,
    /// `device` or `oracle`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true, default_value_t = Emit::Table)]
    pub emit: Emit,
    /// Do not echo the effective configuration to stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

impl Flags {
    pub fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            particles: self.particles,
            steps: self.steps,
            dt: self.dt,
            seed: self.seed,
            mode: self.mode.as_deref().map(str::parse::<ScalingMode>).transpose()?,
            cards: self.cards,
            chips_per_card: self.chips_per_card,
            cores: self.cores,
            backend: self.backend.as_deref().map(str::parse::<BackendKind>).transpose()?,
            output_dir: self.out.clone(),
        })
    }
}

/// Result of a subcommand that completed; `passed` is false on a tolerance miss.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub json: serde_json::Value,
    pub table: String,
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config { .. } | Error::UnknownModel(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Machine-readable error record.
pub fn error_record(e: &Error) -> serde_json::Value {
    let code = exit_code(e);
    let mut record = serde_json::json!({
        "error": {
            "kind": if code == EXIT_CONFIG { "config" } else { "runtime" },
            "message": e.to_string(),
        },
        "exit_code": code,
    });
    if let Error::Config { key, .. } = e.root() {
        record["error"]["key"] = key.clone().into();
    }
    record
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let emit = cli.flags.emit;
    let result = load_config(&cli.flags).and_then(|config| {
        if !cli.flags.quiet {
            eprintln!("# effective configuration\n{}", config.to_toml());
        }
        execute(cli.command, &config)
    });
    match result {
        Ok(outcome) => {
            match emit {
                Emit::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&outcome.json).expect("report serializes")
                ),
                Emit::Table => print!("{}", outcome.table),
            }
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_TOLERANCE
            }
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            exit_code(&e)
        }
    }
}

pub fn load_config(flags: &Flags) -> Result<RunConfig> {
    RunConfig::load(flags.config.as_deref(), &flags.overrides()?)
}

/// Runs `command` and writes its output files under the configured directory.
pub fn execute(command: Command, config: &RunConfig) -> Result<Outcome> {
    let out = &config.output_dir;
    write_atomic(&out.join("effective_config.toml"), config.to_toml().as_bytes())?;
    match command {
        Command::Run => cmd_run(config),
        Command::Validate => cmd_validate(config),
        Command::Bench => cmd_bench(config),
        Command::Scale => cmd_scale(config),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Initial conditions from the input snapshot or the generator.
pub fn initial_system(config: &RunConfig) -> Result<ParticleSystem> {
    match &config.input {
        Some(p) => ParticleSystem::load(p),
        None => generate_initial_conditions(config.particles, config.seed, config.ic_model),
    }
}

fn integrate(config: &RunConfig, cluster: Option<&ClusterConfig>, system: &mut ParticleSystem) -> Result<RunReport> {
    let backend = match cluster {
        Some(c) => Backend::SimDevice(c),
        None => Backend::GoldenOracle,
    };
    hermite::run(system, &config.integrator(), &backend)
}

fn device_cluster(config: &RunConfig) -> Result<Option<ClusterConfig>> {
    match config.backend {
        BackendKind::Device => ClusterConfig::new(&config.cluster).map(Some),
        BackendKind::Oracle => Ok(None),
    }
}

fn cmd_run(config: &RunConfig) -> Result<Outcome> {
    let out = &config.output_dir;
    let mut system = initial_system(config)?;
    let initial = out.join("snapshot_initial.txt");
    write_atomic(&initial, system.write_snapshot().as_bytes())?;
    if config.steps == 0 {
        let json = serde_json::json!({ "particles": system.len(), "snapshots": [initial] });
        let table = format!("particles\t{}\nsnapshot\t{}\n", system.len(), initial.display());
        return Ok(Outcome { passed: true, json, table });
    }
    let cluster = device_cluster(config)?;
    let report = integrate(config, cluster.as_ref(), &mut system)?;
    let last = out.join("snapshot_final.txt");
    write_atomic(&last, system.write_snapshot().as_bytes())?;
    write_json(&out.join("diagnostics.json"), &report)?;
    let mut tsv = String::from("step\ttime\teval_seconds\tstep_seconds\tmomentum_drift\tenergy\n");
    for r in &report.records {
        let energy = r.energy.map_or_else(|| "nan".into(), |e| format!("{e:.17e}"));
        let _ = writeln!(
            tsv,
            "{}\t{:.17e}\t{:.6e}\t{:.6e}\t{:.6e}\t{energy}",
            r.step, r.time, r.eval_seconds, r.step_seconds, r.momentum_drift
        );
    }
    write_atomic(&out.join("diagnostics.tsv"), tsv.as_bytes())?;
    let table = format!(
        "backend\t{}\nparticles\t{}\nsteps\t{}\ntotal_seconds\t{:.3}\n{tsv}",
        report.backend,
        system.len(),
        report.records.len(),
        report.total_seconds,
    );
    let json = serde_json::json!({
        "particles": system.len(),
        "snapshots": [initial, last],
        "report": report,
    });
    Ok(Outcome { passed: true, json, table })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub particles: usize,
    pub steps: usize,
    pub acc_tolerance: f64,
    pub jerk_tolerance: f64,
    pub deviation: ForceDeviation,
    pub distribution: DistributionComparison,
    pub passed: bool,
}

/// Device forces against the oracle on the initial state, then per-particle
/// energy histograms after `steps` steps with each backend.
pub fn validate(config: &RunConfig) -> Result<ValidationReport> {
    let cluster = ClusterConfig::new(&config.cluster)?;
    let system = initial_system(config)?;
    let softening = config.cluster.softening;
    let device = Backend::SimDevice(&cluster).evaluate(&system, softening)?;
    let oracle = golden_acc_jerk(&system, softening)?;
    let deviation = force_deviation(&device, &oracle)?;

    let mut integrator = config.integrator();
    integrator.record_energy = false;
    let mut on_device = system.clone();
    hermite::run(&mut on_device, &integrator, &Backend::SimDevice(&cluster))?;
    let mut on_oracle = system;
    hermite::run(&mut on_oracle, &integrator, &Backend::GoldenOracle)?;
    let reference = energy_report(&on_oracle, softening, config.energy_bins)?;
    let tested = energy_report_with_edges(&on_device, softening, &reference.histogram.edges)?;
    let distribution =
        compare_energy_distribution(&tested, &reference, config.validate.distribution_tolerance)?;

    let passed = deviation.acc.relative <= config.validate.acc_tolerance
        && deviation.jerk.relative <= config.validate.jerk_tolerance
        && distribution.passed;
    Ok(ValidationReport {
        particles: on_device.len(),
        steps: config.steps,
        acc_tolerance: config.validate.acc_tolerance,
        jerk_tolerance: config.validate.jerk_tolerance,
        deviation,
        distribution,
        passed,
    })
}

fn cmd_validate(config: &RunConfig) -> Result<Outcome> {
    let report = validate(config)?;
    write_json(&config.output_dir.join("validation.json"), &report)?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let d = &report.deviation;
    let mut table = String::from("quantity\tvalue\ttolerance\tresult\n");
    let _ = writeln!(
        table,
        "acc_max_relative\t{:.3e}\t{:.1e}\t{}",
        d.acc.relative,
        report.acc_tolerance,
        verdict(d.acc.relative <= report.acc_tolerance)
    );
    let _ = writeln!(
        table,
        "jerk_max_relative\t{:.3e}\t{:.1e}\t{}",
        d.jerk.relative,
        report.jerk_tolerance,
        verdict(d.jerk.relative <= report.jerk_tolerance)
    );
    let _ = writeln!(table, "acc_max_componentwise\t{:.3e}\t-\tinfo", d.acc.componentwise);
    let _ = writeln!(table, "jerk_max_componentwise\t{:.3e}\t-\tinfo", d.jerk.componentwise);
    let c = &report.distribution;
    let _ = writeln!(
        table,
        "energy_bin_max_deviation\t{:.3e}\t{:.1e}\t{}",
        c.max_deviation,
        c.threshold,
        verdict(c.passed)
    );
    Ok(Outcome {
        passed: report.passed,
        json: serde_json::to_value(&report).expect("report serializes"),
        table,
    })
}

/// One labelled set of energy traces per repetition: ingested files, or
/// synthetic traces shaped by timed runs of the configured backend.
pub fn bench(config: &RunConfig) -> Result<BenchReport> {
    let mut runs = Vec::new();
    if !config.bench.traces.is_empty() {
        let channels = config
            .bench
            .traces
            .iter()
            .map(|p| Channel::load(p))
            .collect::<Result<Vec<_>>>()?;
        let window = config.bench.window.expect("validated");
        runs.push(measure_trace("ingested", 0, &EnergyTrace::new(channels, window)?)?);
        return BenchReport::from_runs(runs);
    }
    let spec = &config.cluster;
    let label = format!("mode{}-cards{}", spec.mode.number(), spec.cards);
    let cluster = device_cluster(config)?;
    let devices = spec.cards * 2;
    let busy = spec.cards * spec.mode.active_chips();
    let trace_dir = config.output_dir.join("traces");
    for rep in 0..config.bench.repetitions {
        let mut system = initial_system(config)?;
        let report = integrate(config, cluster.as_ref(), &mut system)?;
        let trace = config.bench.power.synthesize(devices, busy, report.total_seconds)?;
        for ch in &trace.channels {
            let path = trace_dir.join(format!("rep{rep}_{}.txt", ch.name));
            write_atomic(&path, ch.to_text().as_bytes())?;
        }
        runs.push(measure_trace(&label, rep, &trace)?);
    }
    BenchReport::from_runs(runs)
}

fn cmd_bench(config: &RunConfig) -> Result<Outcome> {
    let report = bench(config)?;
    write_json(&config.output_dir.join("bench_report.json"), &report)?;
    let table = report.to_table();
    write_atomic(&config.output_dir.join("bench_runs.tsv"), table.as_bytes())?;
    Ok(Outcome {
        passed: true,
        json: serde_json::to_value(&report).expect("report serializes"),
        table,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleReport {
    pub host_threads: usize,
    pub workers_per_chip: usize,
    pub rows: Vec<ScalingRow>,
}

/// Times a full run for each rank count. Each chip gets an equal share of
/// the host threads so the largest sweep point does not oversubscribe.
pub fn scale(config: &RunConfig) -> Result<ScaleReport> {
    let host_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let max_ranks = config.scale.ranks.iter().copied().max().unwrap_or(1);
    let chips = max_ranks * config.cluster.mode.active_chips();
    let workers_per_chip = match config.cluster.workers_per_chip {
        0 => (host_threads / chips).max(1),
        w => w,
    };
    let mut times = Vec::new();
    for &ranks in &config.scale.ranks {
        let mut spec = config.cluster.clone();
        spec.cards = ranks;
        spec.workers_per_chip = workers_per_chip;
        let cluster = ClusterConfig::new(&spec)?;
        let mut system = initial_system(config)?;
        let report = integrate(config, Some(&cluster), &mut system)?;
        times.push((ranks, report.total_seconds));
    }
    Ok(ScaleReport {
        host_threads,
        workers_per_chip,
        rows: scaling_report(&times)?,
    })
}

fn cmd_scale(config: &RunConfig) -> Result<Outcome> {
    let report = scale(config)?;
    let table = scaling_table(&report.rows);
    write_atomic(&config.output_dir.join("scaling.tsv"), table.as_bytes())?;
    write_json(&config.output_dir.join("scaling.json"), &report)?;
    Ok(Outcome {
        passed: true,
        json: serde_json::to_value(&report).expect("report serializes"),
        table,
    })
}
