//! Command-line front end for the case-based bandwidth manager.
//!
//! Five subcommands cover the workflow: `seed` writes the six-case
//! starter store, `query` ranks stored cases against a query case,
//! `simulate` drives a traffic scenario end to end (learning as it
//! goes), `replay` re-executes a recorded reasoning cycle to verify it
//! still makes the same decisions, and `report` renders a run report
//! as tables or CSV.
//!
//! Exit codes: 0 on success, 1 on domain failures (an unresolved
//! reasoning cycle, a replay divergence), 2 on usage or configuration
//! errors. Diagnostics and manager prompts go to stderr; stdout
//! carries only the requested output, which is valid JSON wherever a
//! JSON form is documented.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bamcbr::case::{Case, CaseOutcome, Solution};
use bamcbr::engine::{
    replay_cycle, CycleError, CycleMode, CycleTrace, EngineConfig, EnvError, ManagerDecision,
    ManagerIo, ProbeReport,
};
use bamcbr::sim::{run_scenario, seed_poc_store, RunReport, ScenarioConfig, SimError};
use bamcbr::store::CaseStore;

#[derive(Parser)]
#[command(
    name = "bamcbr",
    version,
    about = "Case-based reasoning over bandwidth allocation models on a DS-TE link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the six-case starter store to a directory.
    Seed {
        /// Target store directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing store.
        #[arg(long)]
        force: bool,
    },
    /// Rank stored cases against a query case and print the result as JSON.
    Query {
        /// Store directory.
        #[arg(long, env = "BAMCBR_STORE")]
        store: PathBuf,
        /// JSON file holding the query case.
        #[arg(long)]
        case: PathBuf,
        /// Maximum number of ranked matches.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Similarity threshold override.
        #[arg(long)]
        theta: Option<f64>,
        /// JSON file with a full similarity configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a traffic scenario, reasoning over every fired alert.
    Simulate {
        /// JSON scenario configuration.
        #[arg(long)]
        scenario: PathBuf,
        /// Store directory; loaded if present, created on completion.
        #[arg(long, env = "BAMCBR_STORE")]
        store: PathBuf,
        /// Override the scenario's cycle mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Write the full run report (JSON) to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Print the full report as JSON on stdout instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Re-execute a recorded cycle trace and verify identical decisions.
    Replay {
        /// JSON file holding one recorded cycle trace.
        #[arg(long)]
        trace: PathBuf,
        /// Store directory the trace was recorded against.
        #[arg(long, env = "BAMCBR_STORE")]
        store: PathBuf,
        /// JSON file with the engine configuration the run used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render a run report as human-readable tables or CSV.
    Report {
        /// JSON run report written by `simulate`.
        #[arg(long)]
        report: PathBuf,
        /// Emit per-window metrics as CSV instead of tables.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Manager,
}

impl From<ModeArg> for CycleMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Auto => CycleMode::Autonomous,
            ModeArg::Manager => CycleMode::Manager,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Seed { out, force } => cmd_seed(&out, force),
        Command::Query {
            store,
            case,
            k,
            theta,
            config,
        } => cmd_query(&store, &case, k, theta, config.as_deref()),
        Command::Simulate {
            scenario,
            store,
            mode,
            report,
            json,
        } => cmd_simulate(&scenario, &store, mode, report.as_deref(), json),
        Command::Replay {
            trace,
            store,
            config,
        } => cmd_replay(&trace, &store, config.as_deref()),
        Command::Report { report, csv } => cmd_report(&report, csv),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {what} file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a valid {what}", path.display()))
}

fn load_store(dir: &Path) -> Result<CaseStore> {
    CaseStore::load(dir).with_context(|| format!("cannot load store at {}", dir.display()))
}

fn outcome_counts(store: &CaseStore) -> (usize, usize) {
    let negative = store
        .iter()
        .filter(|c| c.outcome == CaseOutcome::Negative)
        .count();
    (store.len() - negative, negative)
}

/// Render to stdout, treating a closed pipe (`bamcbr report | head`)
/// as a normal early end of output rather than an error.
fn to_stdout(render: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let mut out = io::stdout().lock();
    match render(&mut out).and_then(|()| out.flush()) {
        Err(err) if err.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.context("cannot write to stdout"),
    }
}

// ---------------------------------------------------------------------------
// seed
// ---------------------------------------------------------------------------

fn cmd_seed(out: &Path, force: bool) -> Result<ExitCode> {
    if out.join("meta.json").exists() && !force {
        bail!(
            "store already exists at {}; pass --force to overwrite",
            out.display()
        );
    }
    let store = seed_poc_store();
    store
        .save(out)
        .with_context(|| format!("cannot write store to {}", out.display()))?;
    let (positive, negative) = outcome_counts(&store);
    to_stdout(|w| {
        writeln!(
            w,
            "seeded store at {}: {positive} positive, {negative} negative",
            out.display()
        )
    })?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// query
// ---------------------------------------------------------------------------

fn cmd_query(
    store_dir: &Path,
    case_path: &Path,
    k: usize,
    theta: Option<f64>,
    config_path: Option<&Path>,
) -> Result<ExitCode> {
    let store = load_store(store_dir)?;
    let query: Case = read_json(case_path, "case")?;
    let violations = query.validate();
    if !violations.is_empty() {
        bail!(
            "query case {} is malformed: {}",
            query.id,
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        );
    }
    let mut config = match config_path {
        Some(path) => read_json(path, "similarity configuration")?,
        None => bamcbr::SimilarityConfig::default(),
    };
    if let Some(theta) = theta {
        config.theta = theta;
    }
    let result = store
        .retrieve(&query, &config, k)
        .context("retrieval failed")?;
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    let rendered = serde_json::to_string_pretty(&result)?;
    to_stdout(|w| writeln!(w, "{rendered}"))?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Manager intervention over stdin/stderr: prompts on stderr, one
/// answer per line on stdin, so a prepared answer file reproduces an
/// interactive session exactly.
struct LineManager<R> {
    input: R,
}

impl<R: BufRead> LineManager<R> {
    fn next_line(&mut self) -> Result<String, EnvError> {
        let mut line = String::new();
        let n = self
            .input
            .read_line(&mut line)
            .map_err(|e| EnvError(format!("manager channel read failed: {e}")))?;
        if n == 0 {
            return Err(EnvError("manager channel closed".into()));
        }
        Ok(line.trim().to_string())
    }
}

impl<R: BufRead> ManagerIo for LineManager<R> {
    fn propose_solution(&mut self, current: &Case) -> Result<Option<Solution>, EnvError> {
        eprintln!(
            "manager: no stored case matches {} ({} on {} classes); propose a solution?",
            current.id,
            current.problem.kind,
            current.problem.affected_tcs.len()
        );
        eprintln!("  reply: none | <solution JSON on one line>");
        let line = self.next_line()?;
        if line.is_empty() || line == "none" {
            return Ok(None);
        }
        let solution: Solution = serde_json::from_str(&line)
            .map_err(|e| EnvError(format!("manager proposal is not a solution: {e}")))?;
        Ok(Some(solution))
    }

    fn decide(&mut self, candidate: &Case, report: &ProbeReport) -> Result<ManagerDecision, EnvError> {
        let solution = candidate
            .solution
            .as_ref()
            .map(describe_solution)
            .unwrap_or_else(|| "no change".into());
        eprintln!(
            "manager: candidate for {} proposes {solution}; probe says alert_cleared={} new_violation={}",
            candidate.id, report.alert_cleared, report.new_violation
        );
        eprintln!("  reply: approve | reject | adapt <solution JSON>");
        let line = self.next_line()?;
        if line == "approve" {
            return Ok(ManagerDecision::Approve);
        }
        if line == "reject" {
            return Ok(ManagerDecision::Reject);
        }
        if let Some(rest) = line.strip_prefix("adapt ") {
            let solution: Solution = serde_json::from_str(rest.trim())
                .map_err(|e| EnvError(format!("adapted proposal is not a solution: {e}")))?;
            return Ok(ManagerDecision::Adapt { solution });
        }
        Err(EnvError(format!(
            "manager reply {line:?} is not approve | reject | adapt <JSON>"
        )))
    }
}

fn describe_solution(solution: &Solution) -> String {
    let mut parts = Vec::new();
    if let Some(bam) = solution.switch_to {
        parts.push(format!("switch to {bam}"));
    }
    if let Some(bcs) = &solution.new_bcs {
        parts.push(format!("set BCs to {:?}", bcs.0));
    }
    if parts.is_empty() {
        "keep the current configuration".into()
    } else {
        parts.join(", ")
    }
}

fn cmd_simulate(
    scenario_path: &Path,
    store_dir: &Path,
    mode: Option<ModeArg>,
    report_path: Option<&Path>,
    json: bool,
) -> Result<ExitCode> {
    let mut config: ScenarioConfig = read_json(scenario_path, "scenario")?;
    if let Some(mode) = mode {
        config.mode = mode.into();
    }
    let mut store = if store_dir.join("meta.json").exists() {
        load_store(store_dir)?
    } else {
        CaseStore::new()
    };
    let (positive_before, negative_before) = outcome_counts(&store);

    let stdin = io::stdin();
    let mut manager = LineManager {
        input: stdin.lock(),
    };
    let manager_ref: Option<&mut dyn ManagerIo> = if config.mode == CycleMode::Manager {
        Some(&mut manager)
    } else {
        None
    };

    match run_scenario(&config, &mut store, manager_ref) {
        Ok(report) => {
            store
                .save(store_dir)
                .with_context(|| format!("cannot write store to {}", store_dir.display()))?;
            if let Some(path) = report_path {
                write_report(path, &report)?;
            }
            if json {
                let rendered = serde_json::to_string_pretty(&report)?;
                to_stdout(|w| writeln!(w, "{rendered}"))?;
            } else {
                to_stdout(|w| {
                    print_run_summary(w, &report, &store, positive_before, negative_before)
                })?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(SimError::Cycle {
            window,
            source,
            report,
        }) => {
            // Retentions from the failed cycle (negatives, typically)
            // are real history; persist them with the partial report.
            store
                .save(store_dir)
                .with_context(|| format!("cannot write store to {}", store_dir.display()))?;
            if let Some(path) = report_path {
                write_report(path, &report)?;
            }
            eprintln!("reasoning cycle failed at window {window}: {source}");
            if let CycleError::Unresolved { trace, .. } = &source {
                eprintln!("cycle trace:");
                eprintln!("{}", serde_json::to_string_pretty(trace.as_ref())?);
            }
            Ok(ExitCode::from(1))
        }
        Err(err @ SimError::Config(_)) => Err(anyhow!(err)),
        Err(err) => {
            eprintln!("simulation failed: {err}");
            Ok(ExitCode::from(1))
        }
    }
}

fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write report to {}", path.display()))
}

fn print_run_summary(
    w: &mut dyn Write,
    report: &RunReport,
    store: &CaseStore,
    positive_before: usize,
    negative_before: usize,
) -> io::Result<()> {
    writeln!(w, "windows run: {}", report.windows.len())?;
    writeln!(w, "alerts fired: {}", report.alerts.len())?;
    for alert in &report.alerts {
        let tcs: Vec<String> = alert
            .problem
            .affected_tcs
            .iter()
            .map(|tc| tc.to_string())
            .collect();
        writeln!(
            w,
            "  window {}: {} on {}",
            alert.window_id,
            alert.problem.kind,
            tcs.join(", ")
        )?;
    }
    writeln!(w, "cycles resolved: {}", report.cycles.len())?;
    for cycle in &report.cycles {
        writeln!(
            w,
            "  window {}: {} after {} probe{} -> retained {} ({} LSPs torn down)",
            cycle.window_id,
            describe_solution(&cycle.solution),
            cycle.iterations,
            if cycle.iterations == 1 { "" } else { "s" },
            cycle.case_id,
            cycle.migration_losses,
        )?;
    }
    let (positive, negative) = outcome_counts(store);
    writeln!(
        w,
        "store: {} cases ({:+} positive, {:+} negative)",
        store.len(),
        positive as i64 - positive_before as i64,
        negative as i64 - negative_before as i64,
    )?;
    writeln!(
        w,
        "final BAM: {} with BCs {:?}",
        report.final_bam, report.final_bcs.0
    )
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

fn cmd_replay(trace_path: &Path, store_dir: &Path, config_path: Option<&Path>) -> Result<ExitCode> {
    let trace: CycleTrace = read_json(trace_path, "cycle trace")?;
    let store = load_store(store_dir)?;
    let config: EngineConfig = match config_path {
        Some(path) => read_json(path, "engine configuration")?,
        None => EngineConfig::default(),
    };
    match replay_cycle(&trace, &store, &config) {
        Ok(outcome) if outcome.matches => {
            to_stdout(|w| {
                writeln!(
                    w,
                    "replay identical: {} events re-derived from the store",
                    trace.events.len()
                )
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Ok(outcome) => {
            let index = outcome
                .first_divergence
                .expect("a mismatched replay names its first divergence");
            eprintln!("replay diverged at event {index}");
            let recorded = trace
                .events
                .get(index)
                .map(|e| serde_json::to_string(e).unwrap_or_default());
            let replayed = outcome
                .replayed
                .events
                .get(index)
                .map(|e| serde_json::to_string(e).unwrap_or_default());
            eprintln!("  recorded: {}", recorded.as_deref().unwrap_or("<absent>"));
            eprintln!("  replayed: {}", replayed.as_deref().unwrap_or("<absent>"));
            Ok(ExitCode::from(1))
        }
        Err(err) => {
            eprintln!("replay could not execute: {err}");
            Ok(ExitCode::from(1))
        }
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(report_path: &Path, csv: bool) -> Result<ExitCode> {
    let report: RunReport = read_json(report_path, "run report")?;
    if csv {
        to_stdout(|w| print_csv(w, &report))?;
    } else {
        to_stdout(|w| print_tables(w, &report))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_csv(w: &mut dyn Write, report: &RunReport) -> io::Result<()> {
    writeln!(w, "window,tc,utilization,blocking,preemption,devolution,bam")?;
    for record in &report.windows {
        let snap = &record.snapshot;
        for tc in 0..snap.utilization.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                record.window_id,
                tc,
                snap.utilization[tc],
                snap.blocking[tc],
                snap.preemption[tc],
                snap.devolution[tc],
                record.bam,
            )?;
        }
    }
    Ok(())
}

fn print_tables(w: &mut dyn Write, report: &RunReport) -> io::Result<()> {
    writeln!(
        w,
        "run (seed {}): {} windows, {} alerts, {} cycles, final BAM {}",
        report.seed,
        report.windows.len(),
        report.alerts.len(),
        report.cycles.len(),
        report.final_bam,
    )?;
    writeln!(w)?;
    writeln!(
        w,
        "{:>6}  {:<5} {:>3} {:>8} {:>8} {:>9} {:>8}",
        "window", "bam", "tc", "util%", "block%", "preempt%", "devol%"
    )?;
    for record in &report.windows {
        let snap = &record.snapshot;
        for tc in 0..snap.utilization.len() {
            writeln!(
                w,
                "{:>6}  {:<5} {:>3} {:>8.2} {:>8.2} {:>9.2} {:>8.2}",
                record.window_id,
                record.bam.to_string(),
                tc,
                snap.utilization[tc],
                snap.blocking[tc],
                snap.preemption[tc],
                snap.devolution[tc],
            )?;
        }
    }
    if !report.alerts.is_empty() {
        writeln!(w)?;
        writeln!(w, "alerts:")?;
        for alert in &report.alerts {
            for violation in &alert.violations {
                writeln!(
                    w,
                    "  window {}: {} {} measured {:.2} vs limit {:.2}",
                    alert.window_id,
                    alert.problem.kind,
                    violation.tc,
                    violation.measured,
                    violation.limit,
                )?;
            }
        }
    }
    if !report.cycles.is_empty() {
        writeln!(w)?;
        writeln!(w, "cycles:")?;
        for cycle in &report.cycles {
            writeln!(
                w,
                "  window {}: {} ({} probes) retained {}",
                cycle.window_id,
                describe_solution(&cycle.solution),
                cycle.iterations,
                cycle.case_id,
            )?;
        }
    }
    Ok(())
}
