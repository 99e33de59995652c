//! Shared fixtures and reference implementations for the acceptance
//! suite. The oracle here is deliberately written in a different style
//! from the library (indexed loops, no early validation) so the two
//! can only agree by computing the same thing.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};

use bamcbr::case::{
    BamId, BandwidthConstraints, Case, CaseOutcome, ContextInfo, MeasurementSnapshot,
    ProblemDescriptor, ProblemKind, Solution, TcIndex, ToleranceProfile,
};
use bamcbr::engine::{EnvError, ProbeReport, RevisionProbe};

/// Run one acceptance check and print its verdict as a single line.
pub fn criterion(name: &str, check: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(()) => println!("acceptance: {name}: pass"),
        Err(payload) => {
            println!("acceptance: {name}: FAIL");
            resume_unwind(payload);
        }
    }
}

/// Independent weighted-mean reference: a plain indexed Σ-loop.
pub fn oracle_global(locals: &[f64], weights: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..locals.len() {
        num += locals[i] * weights[i];
        den += weights[i];
    }
    num / den
}

/// Assemble a full case from raw vectors; every vector must share one
/// class count.
#[allow(clippy::too_many_arguments)]
pub fn build_case(
    id: &str,
    bam: BamId,
    bcs: Vec<f64>,
    blocking_limits: Vec<f64>,
    preemption_limits: Vec<f64>,
    devolution_limits: Vec<f64>,
    min_utilization: Vec<f64>,
    measurements: [Vec<f64>; 4],
) -> Case {
    let mut limits = ToleranceProfile::new(
        "acceptance",
        blocking_limits,
        preemption_limits,
        devolution_limits,
    );
    limits.min_utilization = min_utilization;
    let [utilization, blocking, preemption, devolution] = measurements;
    Case {
        id: id.to_string(),
        context: ContextInfo {
            bam,
            limits,
            bcs: BandwidthConstraints(bcs),
        },
        problem: ProblemDescriptor {
            kind: ProblemKind::HighBlocking,
            affected_tcs: [TcIndex(0)].into(),
        },
        measurements: MeasurementSnapshot {
            utilization,
            blocking,
            preemption,
            devolution,
            window_id: 0,
        },
        solution: None,
        outcome: CaseOutcome::Unresolved,
        retained_at: 0,
    }
}

/// A three-class alert case under MAM that the negative-experience
/// checks perturb.
pub fn overloaded_mam_case(id: &str) -> Case {
    build_case(
        id,
        BamId::Mam,
        vec![256.0, 512.0, 1024.0],
        vec![70.0, 65.0, 60.0],
        vec![80.0, 70.0, 0.0],
        vec![0.0, 70.0, 80.0],
        vec![0.0, 0.0, 0.0],
        [
            vec![60.0, 60.0, 60.0],
            vec![85.0, 40.0, 20.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ],
    )
}

/// The same case resolved by a model switch, as a retainable outcome.
pub fn resolved(case: &Case, switch_to: BamId, outcome: CaseOutcome) -> Case {
    let mut resolved = case.clone();
    resolved.solution = Some(Solution::switch(switch_to, "acceptance fixture"));
    resolved.outcome = outcome;
    resolved
}

/// A revision probe that finds every candidate satisfactory; used
/// where the checks target the decision logic, not the simulator.
pub struct AlwaysSatisfied {
    pub n_tc: usize,
}

impl RevisionProbe for AlwaysSatisfied {
    fn probe(&mut self, _candidate: &Case) -> Result<ProbeReport, EnvError> {
        Ok(ProbeReport {
            alert_cleared: true,
            new_violation: false,
            evidence: MeasurementSnapshot {
                utilization: vec![50.0; self.n_tc],
                blocking: vec![0.0; self.n_tc],
                preemption: vec![0.0; self.n_tc],
                devolution: vec![0.0; self.n_tc],
                window_id: 0,
            },
        })
    }
}
