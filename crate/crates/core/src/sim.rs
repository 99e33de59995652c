//! Discrete-event traffic simulation over one managed link.
//!
//! The simulator drives a [`BamState`] with seeded stochastic traffic:
//! Poisson arrivals per traffic class, fixed or uniform bandwidth
//! demands, and exponentially distributed holding times. Time advances
//! in ticks (event slots); a fixed number of ticks forms a measurement
//! window. At each window boundary the harness snapshots metrics,
//! checks them against a tolerance profile, and — after a configurable
//! debounce — hands a persistent violation to the reasoning cycle. The
//! retained solution is applied to the live link and the run continues.
//!
//! Everything observable is a pure function of [`ScenarioConfig`],
//! including the seed: probes run on clones and never consume live
//! entropy, so two runs of the same config produce byte-identical
//! reports.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bam::{BamError, BamState, MigrationReport};
use crate::case::{
    BamId, BandwidthConstraints, Case, CaseOutcome, ContextInfo, MeasurementSnapshot,
    ProblemDescriptor, ProblemKind, Solution, TcIndex, ToleranceProfile,
};
use crate::engine::{
    run_cycle, CycleError, CycleMode, CycleTrace, EngineConfig, EnvError, ManagerIo, ProbeReport,
    RevisionProbe,
};
use crate::similarity::SimilarityConfig;
use crate::store::CaseStore;

/// Alert kinds in detection (and debounce-firing) order.
const ALERT_ORDER: [ProblemKind; 4] = [
    ProblemKind::HighBlocking,
    ProblemKind::HighPreemption,
    ProblemKind::HighDevolution,
    ProblemKind::LowUtilization,
];

// ---------------------------------------------------------------------------
// Traffic description
// ---------------------------------------------------------------------------

/// How much bandwidth one LSP request asks for, in Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandDistribution {
    /// Every request asks for the same amount.
    Fixed { mbps: f64 },
    /// Uniformly distributed in `[min, max]` (inclusive).
    Uniform { min: f64, max: f64 },
}

impl DemandDistribution {
    fn validate(&self) -> Result<(), String> {
        match *self {
            DemandDistribution::Fixed { mbps } => {
                if !(mbps > 0.0) || !mbps.is_finite() {
                    return Err(format!("fixed demand must be positive, got {mbps}"));
                }
            }
            DemandDistribution::Uniform { min, max } => {
                if !(min > 0.0) || !min.is_finite() || !max.is_finite() {
                    return Err(format!("uniform demand bounds must be positive, got [{min}, {max}]"));
                }
                if min > max {
                    return Err(format!("uniform demand has min {min} > max {max}"));
                }
            }
        }
        Ok(())
    }

    /// Draw one demand. `Fixed` consumes no randomness.
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            DemandDistribution::Fixed { mbps } => mbps,
            DemandDistribution::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }
}

/// Offered load for one traffic class during one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTraffic {
    /// Mean LSP requests per window (Poisson). Zero silences the class.
    pub arrival_rate: f64,
    pub demand: DemandDistribution,
    /// Mean holding time in windows (exponential).
    pub mean_holding: f64,
}

/// One stretch of the traffic timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficPhase {
    /// How many windows this phase covers.
    pub duration_windows: u64,
    /// Per-class load, indexed by traffic class.
    pub classes: Vec<ClassTraffic>,
}

/// Piecewise traffic timeline. The last phase extends indefinitely, so
/// a run may be longer than the sum of phase durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficProfile {
    pub phases: Vec<TrafficPhase>,
}

impl TrafficProfile {
    pub fn validate(&self, n_tc: usize) -> Result<(), String> {
        if self.phases.is_empty() {
            return Err("traffic profile needs at least one phase".into());
        }
        for (p, phase) in self.phases.iter().enumerate() {
            if phase.duration_windows == 0 {
                return Err(format!("phase {p} has zero duration"));
            }
            if phase.classes.len() != n_tc {
                return Err(format!(
                    "phase {p} describes {} classes, link has {n_tc}",
                    phase.classes.len()
                ));
            }
            for (c, class) in phase.classes.iter().enumerate() {
                if !(class.arrival_rate >= 0.0) || !class.arrival_rate.is_finite() {
                    return Err(format!(
                        "phase {p} class {c}: arrival rate must be finite and >= 0, got {}",
                        class.arrival_rate
                    ));
                }
                class
                    .demand
                    .validate()
                    .map_err(|e| format!("phase {p} class {c}: {e}"))?;
                if !(class.mean_holding > 0.0) || !class.mean_holding.is_finite() {
                    return Err(format!(
                        "phase {p} class {c}: mean holding must be positive, got {}",
                        class.mean_holding
                    ));
                }
            }
        }
        Ok(())
    }

    /// The phase covering `window`; past the end of the timeline the
    /// last phase stays in force.
    pub fn phase_for(&self, window: u64) -> &TrafficPhase {
        let mut start = 0u64;
        for phase in &self.phases {
            let end = start.saturating_add(phase.duration_windows);
            if window < end {
                return phase;
            }
            start = end;
        }
        self.phases.last().expect("validated profile is non-empty")
    }
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

fn default_window_events() -> u32 {
    200
}
fn default_run_windows() -> u64 {
    20
}
fn default_probe_windows() -> u32 {
    3
}
fn default_debounce_windows() -> u32 {
    2
}
fn default_iteration_cap() -> usize {
    10
}

/// Everything a run depends on. Two runs with equal configs produce
/// byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Link capacity in Mbps.
    pub capacity: f64,
    /// Model installed at window 0.
    pub bam: BamId,
    /// Constraints installed at window 0.
    pub bcs: BandwidthConstraints,
    /// Tolerances the manager wants enforced. An omitted
    /// `min_utilization` disables the low-utilization check rather
    /// than defaulting to 20%.
    pub tolerance: ToleranceProfile,
    pub traffic: TrafficProfile,
    /// Ticks (event slots) per measurement window.
    #[serde(default = "default_window_events")]
    pub window_events: u32,
    #[serde(default = "default_run_windows")]
    pub run_windows: u64,
    /// Windows a candidate solution is observed for during revision.
    #[serde(default = "default_probe_windows")]
    pub probe_windows: u32,
    /// Consecutive violating windows required before an alert fires.
    #[serde(default = "default_debounce_windows")]
    pub debounce_windows: u32,
    #[serde(default)]
    pub mode: CycleMode,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    /// Upper bound on probed candidates per cycle.
    #[serde(default = "default_iteration_cap")]
    pub iteration_cap: usize,
    /// Where the CLI persists the case base; the run itself never
    /// touches the filesystem.
    #[serde(default)]
    pub store_path: Option<String>,
}

impl ScenarioConfig {
    pub fn n_tc(&self) -> usize {
        self.bcs.n_tc()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.n_tc();
        // Model/constraint/capacity coherence is the admission
        // module's rule set; a throwaway state checks it.
        BamState::new(self.bam, self.bcs.clone(), self.capacity)?;
        let t = &self.tolerance;
        for (label, values) in [
            ("blocking", &t.blocking),
            ("preemption", &t.preemption),
            ("devolution", &t.devolution),
        ] {
            if values.len() != n {
                return Err(SimError::Config(format!(
                    "tolerance {label} has {} entries, link has {n} classes",
                    values.len()
                )));
            }
        }
        if !t.min_utilization.is_empty() && t.min_utilization.len() != n {
            return Err(SimError::Config(format!(
                "tolerance min_utilization has {} entries, link has {n} classes",
                t.min_utilization.len()
            )));
        }
        for v in t
            .blocking
            .iter()
            .chain(&t.preemption)
            .chain(&t.devolution)
            .chain(&t.min_utilization)
        {
            if !v.is_finite() || *v < 0.0 || *v > 100.0 {
                return Err(SimError::Config(format!(
                    "tolerance entries must be percentages in [0, 100], got {v}"
                )));
            }
        }
        self.traffic.validate(n).map_err(SimError::Config)?;
        if self.window_events == 0 {
            return Err(SimError::Config("window_events must be >= 1".into()));
        }
        if self.run_windows == 0 {
            return Err(SimError::Config("run_windows must be >= 1".into()));
        }
        if self.probe_windows == 0 {
            return Err(SimError::Config("probe_windows must be >= 1".into()));
        }
        if self.debounce_windows == 0 {
            return Err(SimError::Config("debounce_windows must be >= 1".into()));
        }
        if self.iteration_cap == 0 {
            return Err(SimError::Config("iteration_cap must be >= 1".into()));
        }
        self.similarity
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// Tolerance profile with `min_utilization` brought to full length;
    /// an empty vector becomes all-zero floors (check disabled).
    fn normalized_tolerance(&self) -> ToleranceProfile {
        let mut t = self.tolerance.clone();
        if t.min_utilization.is_empty() {
            t.min_utilization = vec![0.0; self.n_tc()];
        }
        t
    }

    fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            similarity: self.similarity.clone(),
            iteration_cap: self.iteration_cap,
        }
    }
}

// ---------------------------------------------------------------------------
// Alerts
// ---------------------------------------------------------------------------

/// One tolerance entry broken by one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertViolation {
    pub tc: TcIndex,
    pub measured: f64,
    pub limit: f64,
}

/// A tolerance breach at a window boundary, aggregated per kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub problem: ProblemDescriptor,
    pub violations: Vec<AlertViolation>,
    pub window_id: u64,
}

impl Alert {
    /// The (kind, class) pairs this alert stands for.
    fn pairs(&self) -> BTreeSet<(ProblemKind, TcIndex)> {
        self.problem
            .affected_tcs
            .iter()
            .map(|tc| (self.problem.kind, *tc))
            .collect()
    }
}

/// Compare a snapshot against tolerances. All comparisons are strict:
/// a value exactly at its limit does not alert. Returns at most one
/// alert per kind, in a fixed kind order, each aggregating the
/// violating classes.
pub fn detect_alerts(snapshot: &MeasurementSnapshot, limits: &ToleranceProfile) -> Vec<Alert> {
    let mut alerts = Vec::new();
    for kind in ALERT_ORDER {
        let mut violations = Vec::new();
        let measured = match kind {
            ProblemKind::HighBlocking => &snapshot.blocking,
            ProblemKind::HighPreemption => &snapshot.preemption,
            ProblemKind::HighDevolution => &snapshot.devolution,
            ProblemKind::LowUtilization => &snapshot.utilization,
        };
        for (c, &value) in measured.iter().enumerate() {
            let (limit, violated) = match kind {
                ProblemKind::HighBlocking => {
                    let l = limits.blocking.get(c).copied().unwrap_or(100.0);
                    (l, value > l)
                }
                ProblemKind::HighPreemption => {
                    let l = limits.preemption.get(c).copied().unwrap_or(100.0);
                    (l, value > l)
                }
                ProblemKind::HighDevolution => {
                    let l = limits.devolution.get(c).copied().unwrap_or(100.0);
                    (l, value > l)
                }
                // A missing floor means the check is disabled for c.
                ProblemKind::LowUtilization => {
                    let l = limits.min_utilization.get(c).copied().unwrap_or(0.0);
                    (l, value < l)
                }
            };
            if violated {
                violations.push(AlertViolation {
                    tc: TcIndex(c),
                    measured: value,
                    limit,
                });
            }
        }
        if !violations.is_empty() {
            alerts.push(Alert {
                problem: ProblemDescriptor {
                    kind,
                    affected_tcs: violations.iter().map(|v| v.tc).collect(),
                },
                violations,
                window_id: snapshot.window_id,
            });
        }
    }
    alerts
}

/// Every (kind, class) pair currently out of tolerance — the revision
/// baseline a probe's outcome is compared against.
fn violating_pairs(
    snapshot: &MeasurementSnapshot,
    limits: &ToleranceProfile,
) -> BTreeSet<(ProblemKind, TcIndex)> {
    detect_alerts(snapshot, limits)
        .iter()
        .flat_map(|a| a.pairs())
        .collect()
}

// ---------------------------------------------------------------------------
// The live link
// ---------------------------------------------------------------------------

/// A pending arrival, produced per window before its ticks execute.
#[derive(Debug, Clone, Copy)]
struct Arrival {
    tick: u64,
    tc: TcIndex,
    bandwidth: f64,
    hold_ticks: u64,
}

/// One simulated link: admission state, departure calendar, and the
/// seeded RNG driving arrivals. Cloning it forks the whole world —
/// probes run on clones so the live RNG stream is never consumed.
#[derive(Debug, Clone)]
pub struct LinkSim {
    bam: BamState,
    /// Departure tick → LSP ids. Victims of preemption, devolution, or
    /// migration stay scheduled; their release is a silent no-op.
    schedule: BTreeMap<u64, Vec<String>>,
    rng: ChaCha8Rng,
    traffic: TrafficProfile,
    tolerance: ToleranceProfile,
    window_events: u32,
    /// Index of the window that will run next.
    next_window: u64,
}

impl LinkSim {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(LinkSim {
            bam: BamState::new(config.bam, config.bcs.clone(), config.capacity)?,
            schedule: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            traffic: config.traffic.clone(),
            tolerance: config.normalized_tolerance(),
            window_events: config.window_events,
            next_window: 0,
        })
    }

    pub fn bam(&self) -> &BamState {
        &self.bam
    }

    /// Tolerances with the utilization floor normalized to full length.
    pub fn tolerance(&self) -> &ToleranceProfile {
        &self.tolerance
    }

    /// Index of the next window to run; windows `0..next_window` have
    /// already executed.
    pub fn next_window(&self) -> u64 {
        self.next_window
    }

    /// Draw this window's arrivals class by class, then order them by
    /// tick. The sort is stable, so same-tick arrivals keep ascending
    /// class order.
    fn draw_arrivals(&mut self, window: u64) -> Vec<Arrival> {
        let phase = self.traffic.phase_for(window).clone();
        let start = window * u64::from(self.window_events);
        let events = u64::from(self.window_events);
        let mut arrivals = Vec::new();
        for (c, class) in phase.classes.iter().enumerate() {
            if class.arrival_rate <= 0.0 {
                continue;
            }
            let poisson =
                Poisson::new(class.arrival_rate).expect("validated rate is positive and finite");
            let count = poisson.sample(&mut self.rng) as u64;
            let holding = Exp::new(1.0 / class.mean_holding).expect("validated holding is positive");
            for _ in 0..count {
                let tick = start + self.rng.gen_range(0..events);
                let bandwidth = class.demand.sample(&mut self.rng);
                let hold_windows: f64 = holding.sample(&mut self.rng);
                let hold_ticks =
                    ((hold_windows * self.window_events as f64).ceil() as u64).max(1);
                arrivals.push(Arrival {
                    tick,
                    tc: TcIndex(c),
                    bandwidth,
                    hold_ticks,
                });
            }
        }
        arrivals.sort_by_key(|a| a.tick);
        arrivals
    }

    /// Execute the next window tick by tick: departures first, then
    /// arrivals. Counters accumulate; the caller decides when to
    /// snapshot and reset them.
    pub fn run_window(&mut self) -> Result<(), SimError> {
        let window = self.next_window;
        let arrivals = self.draw_arrivals(window);
        let start = window * u64::from(self.window_events);
        let mut pending = arrivals.into_iter().peekable();
        for tick in start..start + u64::from(self.window_events) {
            if let Some(ids) = self.schedule.remove(&tick) {
                for id in ids {
                    // Already-torn-down LSPs (victims, migration
                    // losses) are simply gone; skip them.
                    let _ = self.bam.release(&id);
                }
            }
            while pending.peek().is_some_and(|a| a.tick == tick) {
                let arrival = pending.next().expect("peeked");
                let outcome = self.bam.admit(arrival.tc, arrival.bandwidth, tick)?;
                if let Some(id) = outcome.admitted_id() {
                    self.schedule
                        .entry(tick + arrival.hold_ticks)
                        .or_default()
                        .push(id.to_string());
                }
            }
        }
        self.next_window += 1;
        Ok(())
    }

    /// Install a candidate solution on the live link. A solution with
    /// neither a model switch nor new constraints re-installs the
    /// current configuration (a deliberate no-op).
    pub fn apply_solution(&mut self, solution: &Solution) -> Result<MigrationReport, BamError> {
        let model = solution.switch_to.unwrap_or(self.bam.model());
        self.bam.switch_bam(model, solution.new_bcs.clone())
    }

    /// Trial a solution in a fork of the live link: apply it, run
    /// `probe_windows` windows of the same traffic process, and judge
    /// the final window. `alert_cleared` means none of the triggering
    /// alert's (kind, class) pairs still violate; `new_violation` means
    /// some pair violates that was within tolerance when the alert
    /// fired. The live state is untouched.
    pub fn probe_solution(
        &self,
        solution: &Solution,
        alert: &Alert,
        probe_windows: u32,
    ) -> Result<ProbeReport, EnvError> {
        if probe_windows == 0 {
            return Err(EnvError("probe_windows must be >= 1".into()));
        }
        let baseline = violating_pairs(&self.bam.metrics(self.next_window), &self.tolerance);
        let mut fork = self.clone();
        fork.apply_solution(solution)
            .map_err(|e| EnvError(format!("solution rejected by the link: {e}")))?;
        for _ in 0..probe_windows {
            fork.bam.reset_window_counters();
            fork.run_window().map_err(|e| EnvError(e.to_string()))?;
        }
        let evidence = fork.bam.metrics(fork.next_window - 1);
        let after = violating_pairs(&evidence, &self.tolerance);
        let alert_cleared = alert.pairs().is_disjoint(&after);
        let new_violation = after.difference(&baseline).next().is_some();
        Ok(ProbeReport {
            alert_cleared,
            new_violation,
            evidence,
        })
    }
}

/// Adapter that lets the reasoning cycle drive [`LinkSim::probe_solution`].
struct ScenarioProbe<'a> {
    sim: &'a LinkSim,
    alert: &'a Alert,
    probe_windows: u32,
}

impl RevisionProbe for ScenarioProbe<'_> {
    fn probe(&mut self, candidate: &Case) -> Result<ProbeReport, EnvError> {
        let solution = candidate
            .solution
            .as_ref()
            .ok_or_else(|| EnvError("candidate case carries no solution".into()))?;
        self.sim.probe_solution(solution, self.alert, self.probe_windows)
    }
}

// ---------------------------------------------------------------------------
// Run reports
// ---------------------------------------------------------------------------

/// Metrics and configuration at one window boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window_id: u64,
    pub bam: BamId,
    pub bcs: BandwidthConstraints,
    pub snapshot: MeasurementSnapshot,
}

/// One fired alert and the reasoning cycle it triggered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub window_id: u64,
    pub alert: Alert,
    /// Id of the positive case retained for this incident.
    pub case_id: String,
    pub solution: Solution,
    /// Candidates probed before convergence.
    pub iterations: usize,
    /// LSPs torn down when the solution was installed live.
    pub migration_losses: usize,
    pub trace: CycleTrace,
}

/// Everything a run produced. Serializes to the JSON report the CLI
/// writes; byte-identical across runs of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub windows: Vec<WindowRecord>,
    /// Alerts that actually fired (survived debouncing).
    pub alerts: Vec<Alert>,
    pub cycles: Vec<CycleRecord>,
    pub final_bam: BamId,
    pub final_bcs: BandwidthConstraints,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("link rejected an operation: {0}")]
    Bam(#[from] BamError),
    /// The reasoning cycle could not resolve an alert; the report
    /// covers everything up to the failure.
    #[error("reasoning cycle failed at window {window}: {source}")]
    Cycle {
        window: u64,
        source: CycleError,
        report: Box<RunReport>,
    },
}

// ---------------------------------------------------------------------------
// The scenario loop
// ---------------------------------------------------------------------------

/// Build the unresolved case describing the link at alert time.
fn build_current_case(sim: &LinkSim, alert: &Alert, snapshot: &MeasurementSnapshot) -> Case {
    Case {
        id: format!("window-{:06}-{}", alert.window_id, alert.problem.kind),
        context: ContextInfo {
            bam: sim.bam.model(),
            limits: sim.tolerance.clone(),
            bcs: sim.bam.bcs().clone(),
        },
        problem: alert.problem.clone(),
        measurements: snapshot.clone(),
        solution: None,
        outcome: CaseOutcome::Unresolved,
        retained_at: 0,
    }
}

/// Drive a whole scenario: windowed traffic, debounced alert
/// detection, one reasoning cycle per fired alert, live application of
/// retained solutions. The store accumulates every retained case;
/// pre-populating it (for example with [`seed_poc_store`]) gives the
/// cycle history to retrieve from. `manager` is only consulted in
/// [`CycleMode::Manager`].
pub fn run_scenario(
    config: &ScenarioConfig,
    store: &mut CaseStore,
    mut manager: Option<&mut (dyn ManagerIo + '_)>,
) -> Result<RunReport, SimError> {
    if config.mode == CycleMode::Manager && manager.is_none() {
        return Err(SimError::Config(
            "manager mode requires a manager channel".into(),
        ));
    }
    let mut sim = LinkSim::new(config)?;
    let engine_config = config.engine_config();
    let mut report = RunReport {
        seed: config.seed,
        windows: Vec::new(),
        alerts: Vec::new(),
        cycles: Vec::new(),
        final_bam: sim.bam.model(),
        final_bcs: sim.bam.bcs().clone(),
    };
    let mut streaks: BTreeMap<ProblemKind, u32> = BTreeMap::new();

    for window in 0..config.run_windows {
        sim.run_window()?;
        let snapshot = sim.bam.metrics(window);
        report.windows.push(WindowRecord {
            window_id: window,
            bam: sim.bam.model(),
            bcs: sim.bam.bcs().clone(),
            snapshot: snapshot.clone(),
        });

        let detected = detect_alerts(&snapshot, &sim.tolerance);
        for kind in ALERT_ORDER {
            if detected.iter().any(|a| a.problem.kind == kind) {
                *streaks.entry(kind).or_insert(0) += 1;
            } else {
                streaks.remove(&kind);
            }
        }
        // At most one cycle per boundary: the first kind (in detection
        // order) whose streak survived the debounce.
        let firing = ALERT_ORDER
            .iter()
            .find(|kind| streaks.get(kind).copied().unwrap_or(0) >= config.debounce_windows)
            .and_then(|kind| detected.iter().find(|a| a.problem.kind == *kind))
            .cloned();

        if let Some(alert) = firing {
            report.alerts.push(alert.clone());
            let current = build_current_case(&sim, &alert, &snapshot);
            let mut probe = ScenarioProbe {
                sim: &sim,
                alert: &alert,
                probe_windows: config.probe_windows,
            };
            match run_cycle(
                &current,
                store,
                &mut probe,
                manager.as_deref_mut(),
                config.mode,
                &engine_config,
            ) {
                Ok(outcome) => {
                    let solution = outcome
                        .case
                        .solution
                        .clone()
                        .expect("a converged cycle retains a solution");
                    let migration = sim.apply_solution(&solution)?;
                    report.cycles.push(CycleRecord {
                        window_id: window,
                        alert,
                        case_id: outcome.case.id.clone(),
                        solution,
                        iterations: outcome.iterations,
                        migration_losses: migration.torn_down.len(),
                        trace: outcome.trace,
                    });
                    // The link changed; stale streaks would fire on
                    // the old configuration's behaviour.
                    streaks.clear();
                }
                Err(source) => {
                    report.final_bam = sim.bam.model();
                    report.final_bcs = sim.bam.bcs().clone();
                    return Err(SimError::Cycle {
                        window,
                        source,
                        report: Box::new(report),
                    });
                }
            }
        }
        sim.bam.reset_window_counters();
    }

    report.final_bam = sim.bam.model();
    report.final_bcs = sim.bam.bcs().clone();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Proof-of-concept case base
// ---------------------------------------------------------------------------

/// The wider of the two seed bandwidth ladders, in Mbps.
pub const BW_LADDER_A: [f64; 3] = [256.0, 512.0, 1024.0];
/// The narrower seed ladder.
pub const BW_LADDER_B: [f64; 3] = [128.0, 256.0, 512.0];

/// The three operator tolerance profiles the seed cases are built
/// from. Entries are percent limits per class (blocking, preemption,
/// devolution); the 20% utilization floor comes from the constructor.
pub fn poc_profiles() -> [ToleranceProfile; 3] {
    [
        ToleranceProfile::new(
            "Carlos",
            vec![70.0, 65.0, 60.0],
            vec![80.0, 70.0, 0.0],
            vec![0.0, 70.0, 80.0],
        ),
        ToleranceProfile::new(
            "Marcos",
            vec![60.0, 50.0, 40.0],
            vec![90.0, 80.0, 0.0],
            vec![0.0, 80.0, 90.0],
        ),
        ToleranceProfile::new(
            "Lucas",
            vec![65.0, 60.0, 70.0],
            vec![70.0, 60.0, 0.0],
            vec![0.0, 60.0, 70.0],
        ),
    ]
}

/// One incident fixture per profile: the model it ran under, the
/// problem observed, measurements that violate exactly that problem's
/// tolerance family, and the remedy that worked.
struct SeedIncident {
    bam: BamId,
    kind: ProblemKind,
    affected: &'static [usize],
    utilization: [f64; 3],
    blocking: [f64; 3],
    preemption: [f64; 3],
    switch_to: BamId,
    rationale: &'static str,
}

fn seed_incident(profile_name: &str) -> SeedIncident {
    match profile_name {
        // Per-class caps left Carlos's busy classes blocking while
        // bandwidth sat idle elsewhere; sharing soaks it up.
        "Carlos" => SeedIncident {
            bam: BamId::Mam,
            kind: ProblemKind::HighBlocking,
            affected: &[0, 1, 2],
            utilization: [60.0, 60.0, 60.0],
            blocking: [80.0, 75.0, 70.0],
            preemption: [0.0, 0.0, 0.0],
            switch_to: BamId::Atcs,
            rationale: "blocked classes can borrow bandwidth left idle elsewhere",
        },
        // Marcos's link idled far below the agreed floor under rigid
        // nesting; sharing lets any class soak up the slack.
        "Marcos" => SeedIncident {
            bam: BamId::Rdm,
            kind: ProblemKind::LowUtilization,
            affected: &[0, 1, 2],
            utilization: [5.0, 5.0, 5.0],
            blocking: [0.0, 0.0, 0.0],
            preemption: [0.0, 0.0, 0.0],
            switch_to: BamId::Atcs,
            rationale: "loan-based sharing raises utilization on an idle link",
        },
        // Nested pools kept preempting Lucas's low-priority traffic;
        // hard per-class isolation stops the churn.
        "Lucas" => SeedIncident {
            bam: BamId::Rdm,
            kind: ProblemKind::HighPreemption,
            affected: &[0, 1],
            utilization: [50.0, 50.0, 50.0],
            blocking: [0.0, 0.0, 0.0],
            preemption: [80.0, 70.0, 0.0],
            switch_to: BamId::Mam,
            rationale: "per-class isolation stops preemption churn",
        },
        other => unreachable!("no seed incident for profile {other}"),
    }
}

/// Build the six-case starter base: three operator profiles crossed
/// with two bandwidth ladders, every case positive and self-consistent
/// (its measurements violate exactly the tolerance family its problem
/// names, and nothing else).
pub fn seed_poc_store() -> CaseStore {
    let mut store = CaseStore::new();
    for profile in poc_profiles() {
        let incident = seed_incident(&profile.name);
        for ladder in [BW_LADDER_A, BW_LADDER_B] {
            let case = Case {
                id: String::new(), // assigned at retention
                context: ContextInfo {
                    bam: incident.bam,
                    limits: profile.clone(),
                    bcs: BandwidthConstraints(ladder.to_vec()),
                },
                problem: ProblemDescriptor {
                    kind: incident.kind,
                    affected_tcs: incident.affected.iter().map(|c| TcIndex(*c)).collect(),
                },
                measurements: MeasurementSnapshot {
                    utilization: incident.utilization.to_vec(),
                    blocking: incident.blocking.to_vec(),
                    preemption: incident.preemption.to_vec(),
                    devolution: vec![0.0; 3],
                    window_id: 0,
                },
                solution: Some(Solution {
                    switch_to: Some(incident.switch_to),
                    new_bcs: None,
                    rationale: incident.rationale.to_string(),
                }),
                outcome: CaseOutcome::Positive,
                retained_at: 0,
            };
            store.retain(case).expect("seed fixture is a valid case");
        }
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carlos() -> ToleranceProfile {
        poc_profiles()[0].clone()
    }

    fn snapshot(
        utilization: [f64; 3],
        blocking: [f64; 3],
        preemption: [f64; 3],
        devolution: [f64; 3],
        window_id: u64,
    ) -> MeasurementSnapshot {
        MeasurementSnapshot {
            utilization: utilization.to_vec(),
            blocking: blocking.to_vec(),
            preemption: preemption.to_vec(),
            devolution: devolution.to_vec(),
            window_id,
        }
    }

    /// A scenario that floods TC0 far past its 256 Mbps share under
    /// MAM while the other classes idle. The utilization floor is
    /// disabled so high blocking is the only live alert.
    fn overload_config() -> ScenarioConfig {
        let mut tolerance = carlos();
        tolerance.min_utilization = vec![0.0; 3];
        ScenarioConfig {
            seed: 7,
            capacity: 1024.0,
            bam: BamId::Mam,
            bcs: BandwidthConstraints(vec![256.0, 512.0, 1024.0]),
            tolerance,
            traffic: TrafficProfile {
                phases: vec![TrafficPhase {
                    duration_windows: 1,
                    classes: vec![
                        ClassTraffic {
                            arrival_rate: 40.0,
                            demand: DemandDistribution::Fixed { mbps: 40.0 },
                            mean_holding: 1.0,
                        },
                        ClassTraffic {
                            arrival_rate: 0.0,
                            demand: DemandDistribution::Fixed { mbps: 1.0 },
                            mean_holding: 1.0,
                        },
                        ClassTraffic {
                            arrival_rate: 0.0,
                            demand: DemandDistribution::Fixed { mbps: 1.0 },
                            mean_holding: 1.0,
                        },
                    ],
                }],
            },
            window_events: 200,
            run_windows: 8,
            probe_windows: 3,
            debounce_windows: 2,
            mode: CycleMode::Autonomous,
            similarity: SimilarityConfig::default(),
            iteration_cap: 10,
            store_path: None,
        }
    }

    #[test]
    fn detect_flags_blocking_above_carlos_limits() {
        let snap = snapshot([60.0; 3], [85.0, 80.0, 75.0], [0.0; 3], [0.0; 3], 4);
        let alerts = detect_alerts(&snap, &carlos());
        assert_eq!(alerts.len(), 1);
        let alert = &alerts[0];
        assert_eq!(alert.problem.kind, ProblemKind::HighBlocking);
        let affected: Vec<usize> = alert.problem.affected_tcs.iter().map(|t| t.0).collect();
        assert_eq!(affected, vec![0, 1, 2]);
        assert_eq!(alert.window_id, 4);
        assert_eq!(alert.violations[0].measured, 85.0);
        assert_eq!(alert.violations[0].limit, 70.0);
    }

    #[test]
    fn detect_is_strict_at_the_boundary() {
        // Exactly at every limit (including the utilization floor).
        let snap = snapshot(
            [20.0; 3],
            [70.0, 65.0, 60.0],
            [80.0, 70.0, 0.0],
            [0.0, 70.0, 80.0],
            0,
        );
        assert!(detect_alerts(&snap, &carlos()).is_empty());
    }

    #[test]
    fn detect_flags_idle_link_when_floor_is_set() {
        let snap = snapshot([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3], 0);
        let alerts = detect_alerts(&snap, &carlos());
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].problem.kind, ProblemKind::LowUtilization);
        assert_eq!(alerts[0].problem.affected_tcs.len(), 3);
        assert_eq!(alerts[0].violations[0].limit, 20.0);

        // Zero floors disable the check entirely.
        let mut limits = carlos();
        limits.min_utilization = vec![0.0; 3];
        assert!(detect_alerts(&snap, &limits).is_empty());
    }

    #[test]
    fn detect_orders_kinds_and_aggregates_classes() {
        // Blocking on TC0, preemption on TC1, low utilization on TC2.
        let mut limits = carlos();
        limits.min_utilization = vec![0.0, 0.0, 30.0];
        let snap = snapshot(
            [50.0, 50.0, 10.0],
            [75.0, 0.0, 0.0],
            [0.0, 72.0, 0.0],
            [0.0; 3],
            9,
        );
        let kinds: Vec<ProblemKind> = detect_alerts(&snap, &limits)
            .iter()
            .map(|a| a.problem.kind)
            .collect();
        assert_eq!(
            kinds,
            vec![
                ProblemKind::HighBlocking,
                ProblemKind::HighPreemption,
                ProblemKind::LowUtilization,
            ]
        );
    }

    #[test]
    fn traffic_profile_validation_rejects_bad_shapes() {
        let good = ClassTraffic {
            arrival_rate: 1.0,
            demand: DemandDistribution::Fixed { mbps: 10.0 },
            mean_holding: 1.0,
        };
        let profile = |classes: Vec<ClassTraffic>| TrafficProfile {
            phases: vec![TrafficPhase {
                duration_windows: 1,
                classes,
            }],
        };

        assert!(TrafficProfile { phases: vec![] }.validate(3).is_err());
        assert!(profile(vec![good.clone(); 2]).validate(3).is_err());
        let mut negative = good.clone();
        negative.arrival_rate = -1.0;
        assert!(profile(vec![negative, good.clone(), good.clone()])
            .validate(3)
            .is_err());
        let mut inverted = good.clone();
        inverted.demand = DemandDistribution::Uniform {
            min: 20.0,
            max: 10.0,
        };
        assert!(profile(vec![inverted, good.clone(), good.clone()])
            .validate(3)
            .is_err());
        let mut still = good.clone();
        still.mean_holding = 0.0;
        assert!(profile(vec![still, good.clone(), good.clone()])
            .validate(3)
            .is_err());
        assert!(profile(vec![good.clone(); 3]).validate(3).is_ok());
    }

    #[test]
    fn last_phase_extends_past_the_timeline() {
        let phase = |rate: f64, duration: u64| TrafficPhase {
            duration_windows: duration,
            classes: vec![ClassTraffic {
                arrival_rate: rate,
                demand: DemandDistribution::Fixed { mbps: 1.0 },
                mean_holding: 1.0,
            }],
        };
        let profile = TrafficProfile {
            phases: vec![phase(1.0, 2), phase(9.0, 1)],
        };
        assert_eq!(profile.phase_for(0).classes[0].arrival_rate, 1.0);
        assert_eq!(profile.phase_for(1).classes[0].arrival_rate, 1.0);
        assert_eq!(profile.phase_for(2).classes[0].arrival_rate, 9.0);
        assert_eq!(profile.phase_for(100).classes[0].arrival_rate, 9.0);
    }

    #[test]
    fn scenario_config_fills_defaults_from_minimal_json() {
        let json = r#"{
            "seed": 1,
            "capacity": 300.0,
            "bam": "MAM",
            "bcs": [100.0, 100.0, 100.0],
            "tolerance": {
                "name": "t",
                "blocking": [50.0, 50.0, 50.0],
                "preemption": [50.0, 50.0, 50.0],
                "devolution": [50.0, 50.0, 50.0]
            },
            "traffic": {
                "phases": [{
                    "duration_windows": 1,
                    "classes": [
                        {"arrival_rate": 0.0, "demand": {"kind": "fixed", "mbps": 1.0}, "mean_holding": 1.0},
                        {"arrival_rate": 0.0, "demand": {"kind": "fixed", "mbps": 1.0}, "mean_holding": 1.0},
                        {"arrival_rate": 0.0, "demand": {"kind": "fixed", "mbps": 1.0}, "mean_holding": 1.0}
                    ]
                }]
            }
        }"#;
        let config: ScenarioConfig = serde_json::from_str(json).expect("parses");
        assert_eq!(config.window_events, 200);
        assert_eq!(config.run_windows, 20);
        assert_eq!(config.probe_windows, 3);
        assert_eq!(config.debounce_windows, 2);
        assert_eq!(config.mode, CycleMode::Autonomous);
        assert_eq!(config.iteration_cap, 10);
        config.validate().expect("valid");
        // The omitted utilization floor disables the check.
        assert!(config.tolerance.min_utilization.is_empty());
        assert_eq!(config.normalized_tolerance().min_utilization, vec![0.0; 3]);
    }

    #[test]
    fn scenario_config_validation_catches_mismatches() {
        let mut config = overload_config();
        config.tolerance.blocking.pop();
        assert!(matches!(config.validate(), Err(SimError::Config(_))));

        let mut config = overload_config();
        config.bam = BamId::Rdm; // outer BC 1024 == capacity, fine
        config.validate().expect("nested model accepts the ladder");
        config.capacity = 2048.0; // now the outer BC mismatches
        assert!(config.validate().is_err());

        let mut config = overload_config();
        config.window_events = 0;
        assert!(matches!(config.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn zero_rate_traffic_runs_quietly() {
        let mut config = overload_config();
        for class in &mut config.traffic.phases[0].classes {
            class.arrival_rate = 0.0;
        }
        config.run_windows = 4;
        let mut store = CaseStore::new();
        let report = run_scenario(&config, &mut store, None).expect("runs");
        assert!(report.alerts.is_empty());
        assert!(report.cycles.is_empty());
        assert_eq!(report.final_bam, BamId::Mam);
        assert_eq!(report.windows.len(), 4);
        for record in &report.windows {
            assert_eq!(record.bam, BamId::Mam);
            assert_eq!(record.snapshot.blocking, vec![0.0; 3]);
            assert_eq!(record.snapshot.utilization, vec![0.0; 3]);
        }
        assert_eq!(store.len(), 0);
    }

    #[test]
    fn overload_fires_high_blocking_and_learns_the_switch() {
        let config = overload_config();
        let mut store = CaseStore::new();
        let report = run_scenario(&config, &mut store, None).expect("resolves");

        // Debounce is 2: violating windows 0 and 1 fire at window 1.
        assert_eq!(report.cycles.len(), 1, "exactly one incident");
        let cycle = &report.cycles[0];
        assert!(cycle.window_id < 3, "alert fires within the first windows");
        assert_eq!(cycle.alert.problem.kind, ProblemKind::HighBlocking);
        assert_eq!(cycle.solution.switch_to, Some(BamId::Atcs));
        assert_eq!(report.final_bam, BamId::Atcs);

        // Blocking before the switch sits far above the 70% limit;
        // after it, borrowing brings it back inside tolerance.
        let before = &report.windows[cycle.window_id as usize].snapshot;
        assert!(before.blocking[0] > 70.0);
        for record in report.windows.iter().skip(cycle.window_id as usize + 1) {
            assert_eq!(record.bam, BamId::Atcs);
            assert!(
                record.snapshot.blocking[0] < 70.0,
                "window {} blocking {} should be inside tolerance",
                record.window_id,
                record.snapshot.blocking[0]
            );
        }

        // The incident was retained as a fresh positive case.
        assert_eq!(store.len(), 1);
        let learned = store.iter().next().expect("one case");
        assert_eq!(learned.outcome, CaseOutcome::Positive);
        assert_eq!(
            learned.solution.as_ref().and_then(|s| s.switch_to),
            Some(BamId::Atcs)
        );
    }

    #[test]
    fn identical_configs_produce_byte_identical_reports() {
        let config = overload_config();
        let mut store_a = CaseStore::new();
        let mut store_b = CaseStore::new();
        let a = run_scenario(&config, &mut store_a, None).expect("runs");
        let b = run_scenario(&config, &mut store_b, None).expect("runs");
        let json_a = serde_json::to_string(&a).expect("serializes");
        let json_b = serde_json::to_string(&b).expect("serializes");
        assert_eq!(json_a, json_b);
        assert_eq!(
            serde_json::to_string(&store_a.iter().collect::<Vec<_>>()).unwrap(),
            serde_json::to_string(&store_b.iter().collect::<Vec<_>>()).unwrap()
        );
    }

    #[test]
    fn probe_leaves_the_live_link_untouched() {
        let config = overload_config();
        let mut probed = LinkSim::new(&config).expect("valid");
        let mut twin = LinkSim::new(&config).expect("valid");
        for _ in 0..2 {
            probed.run_window().expect("runs");
            twin.run_window().expect("runs");
        }
        let alert = detect_alerts(&probed.bam().metrics(1), probed.tolerance())
            .into_iter()
            .next()
            .expect("overload alerts");
        let solution = Solution {
            switch_to: Some(BamId::Atcs),
            new_bcs: None,
            rationale: "trial".into(),
        };
        let report = probed
            .probe_solution(&solution, &alert, 3)
            .expect("probe runs");
        assert!(report.alert_cleared);
        assert!(!report.new_violation);

        // The probed link and its never-probed twin stay in lockstep:
        // same admission state now, same randomness later.
        let state = |sim: &LinkSim| serde_json::to_string(sim.bam()).unwrap();
        assert_eq!(state(&probed), state(&twin));
        probed.run_window().expect("runs");
        twin.run_window().expect("runs");
        assert_eq!(probed.bam().metrics(2), twin.bam().metrics(2));
    }

    #[test]
    fn noop_solution_reproduces_the_violation() {
        let config = overload_config();
        let mut sim = LinkSim::new(&config).expect("valid");
        for _ in 0..2 {
            sim.run_window().expect("runs");
        }
        let alert = detect_alerts(&sim.bam().metrics(1), sim.tolerance())
            .into_iter()
            .next()
            .expect("overload alerts");
        let unchanged = Solution {
            switch_to: None,
            new_bcs: None,
            rationale: "keep the current configuration".into(),
        };
        let report = sim.probe_solution(&unchanged, &alert, 3).expect("runs");
        assert!(!report.alert_cleared, "the overload persists under MAM");
        assert!(report.evidence.blocking[0] > 70.0);
    }

    #[test]
    fn retrieval_reuses_a_seeded_remedy() {
        let config = overload_config();
        let mut store = seed_poc_store();
        let report = run_scenario(&config, &mut store, None).expect("resolves");
        assert_eq!(report.cycles.len(), 1);
        let trace = &report.cycles[0].trace;
        let reused_from_retrieval = trace.events.iter().any(|e| {
            matches!(
                e,
                crate::engine::CycleEvent::CandidateSelected {
                    source: crate::engine::SolutionSource::Retrieval,
                    ..
                }
            )
        });
        assert!(
            reused_from_retrieval,
            "the Carlos seed case should be similar enough to reuse"
        );
        assert_eq!(report.cycles[0].solution.switch_to, Some(BamId::Atcs));
        assert_eq!(store.len(), 7, "six seeds plus the new incident");
    }

    #[test]
    fn unresolvable_alert_aborts_with_partial_report() {
        // An idle link with the default 20% utilization floor: nothing
        // any candidate does can raise utilization, so the cycle
        // exhausts its candidates and the run aborts.
        let mut config = overload_config();
        config.tolerance = ToleranceProfile::new(
            "floor",
            vec![70.0, 65.0, 60.0],
            vec![80.0, 70.0, 100.0],
            vec![100.0, 70.0, 80.0],
        );
        for class in &mut config.traffic.phases[0].classes {
            class.arrival_rate = 0.0;
        }
        let mut store = CaseStore::new();
        let err = run_scenario(&config, &mut store, None).expect_err("cannot resolve");
        match err {
            SimError::Cycle {
                window,
                source,
                report,
            } => {
                assert_eq!(window, 1, "debounce of 2 fires at window 1");
                assert!(matches!(source, CycleError::Unresolved { .. }));
                assert_eq!(report.windows.len(), 2);
                assert_eq!(report.alerts.len(), 1);
                assert_eq!(
                    report.alerts[0].problem.kind,
                    ProblemKind::LowUtilization
                );
                assert!(report.cycles.is_empty());
            }
            other => panic!("expected a cycle failure, got {other}"),
        }
        // Every failed candidate was remembered as a negative case.
        assert!(store.len() >= 2);
        assert!(store
            .iter()
            .all(|case| case.outcome == CaseOutcome::Negative));
    }

    #[test]
    fn seed_store_matches_its_contract() {
        let store = seed_poc_store();
        assert_eq!(store.len(), 6);
        assert!(store
            .iter()
            .all(|case| case.outcome == CaseOutcome::Positive));

        // Carlos × ladder A comes first and carries the agreed limits.
        let first = store.get("case-000000").expect("first seed");
        assert_eq!(first.context.limits.name, "Carlos");
        assert_eq!(first.context.limits.blocking, vec![70.0, 65.0, 60.0]);
        assert_eq!(first.context.limits.preemption, vec![80.0, 70.0, 0.0]);
        assert_eq!(first.context.limits.devolution, vec![0.0, 70.0, 80.0]);
        assert_eq!(first.context.bcs.0, BW_LADDER_A.to_vec());

        let config = SimilarityConfig::default();
        for case in store.iter() {
            assert!(case.validate().is_empty(), "{} is schema-valid", case.id);

            // Self-retrieval: the case is its own best match at 1.0.
            let result = store.retrieve(case, &config, 3).expect("retrieves");
            let best = result.best().expect("a match");
            assert_eq!(best.case.id, case.id);
            assert!((best.breakdown.global - 1.0).abs() < 1e-12);

            // The measurements violate exactly the named family.
            let alerts = detect_alerts(&case.measurements, &case.context.limits);
            assert_eq!(alerts.len(), 1, "{} violates one family", case.id);
            assert_eq!(alerts[0].problem.kind, case.problem.kind);
            assert_eq!(alerts[0].problem.affected_tcs, case.problem.affected_tcs);

            // Values honour what each model can produce: no
            // preemption or devolution under MAM, no devolution and
            // no top-class preemption under the nested model.
            let m = &case.measurements;
            match case.context.bam {
                BamId::Mam => {
                    assert_eq!(m.preemption, vec![0.0; 3]);
                    assert_eq!(m.devolution, vec![0.0; 3]);
                }
                BamId::Rdm => {
                    assert_eq!(m.devolution, vec![0.0; 3]);
                    assert_eq!(m.preemption[2], 0.0);
                }
                BamId::Atcs => {}
            }
        }
    }
}
