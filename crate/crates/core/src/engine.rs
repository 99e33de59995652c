//! The reasoning cycle: retrieve, reuse, revise, retain.
//!
//! An unresolved *current case* enters [`run_cycle`]. Retrieval ranks
//! the store's positive cases against it; the best match's solution is
//! reused (new case = current case + similar solution) and revised by
//! probing it in a cloned simulation. A satisfactory probe retains the
//! case as positive and ends the cycle; an unsatisfactory one retains
//! it as negative and moves on to the next-most-similar candidate.
//! When retrieval runs dry the engine falls back to a deterministic
//! enumeration of arbitrary solutions (model switches, then BC
//! rescalings), or — in manager mode — asks the operator first.
//!
//! Solutions that previously failed under similar conditions are
//! vetoed by the negative store before they are ever probed again.
//!
//! Every step is recorded in a [`CycleTrace`]; [`replay_cycle`] re-runs
//! a trace against the store as it stood at cycle start (every retained
//! case carries its retention sequence, so the past store is
//! reconstructible) and reports the first divergence, if any.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::case::{BamId, BandwidthConstraints, Case, CaseOutcome, MeasurementSnapshot, Solution};
use crate::similarity::SimilarityConfig;
use crate::store::{CaseStore, StoreError};

/// Who vets candidate solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMode {
    /// Probes alone decide; no human in the loop.
    #[default]
    Autonomous,
    /// The manager rules on every probed candidate and may supply a
    /// solution when retrieval comes up empty.
    Manager,
}

/// Knobs for one reasoning cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub similarity: SimilarityConfig,
    /// Upper bound on probed candidates before the cycle gives up.
    pub iteration_cap: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            similarity: SimilarityConfig::default(),
            iteration_cap: 10,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), CycleError> {
        if self.iteration_cap == 0 {
            return Err(CycleError::Contract(
                "iteration cap must be at least 1".into(),
            ));
        }
        self.similarity
            .validate()
            .map_err(|e| CycleError::Contract(e.to_string()))
    }
}

/// What one probe run observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// The triggering alert no longer fires at the end of the probe.
    pub alert_cleared: bool,
    /// A violation that was not part of the trigger appeared.
    pub new_violation: bool,
    /// Final measurement window of the probe.
    pub evidence: MeasurementSnapshot,
}

impl ProbeReport {
    /// Satisfactory = the alert cleared and nothing new broke.
    pub fn satisfactory(&self) -> bool {
        self.alert_cleared && !self.new_violation
    }
}

/// Environment failure during revision (simulation error, lost manager
/// connection) — distinct from an unsatisfactory verdict.
#[derive(Debug, thiserror::Error)]
#[error("revision environment failed: {0}")]
pub struct EnvError(pub String);

/// Capability to test a candidate solution in a cloned simulation.
pub trait RevisionProbe {
    fn probe(&mut self, candidate: &Case) -> Result<ProbeReport, EnvError>;
}

/// The manager's ruling on a probed candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ManagerDecision {
    Approve,
    Adapt { solution: Solution },
    Reject,
}

/// Manager-intervention hooks; line-oriented in the CLI, scripted in
/// tests.
pub trait ManagerIo {
    /// Asked once per cycle, and only when retrieval found no
    /// candidate at all. `None` defers to the fallback enumeration.
    fn propose_solution(&mut self, current: &Case) -> Result<Option<Solution>, EnvError>;
    /// Rule on a candidate given its probe evidence.
    fn decide(&mut self, candidate: &Case, report: &ProbeReport) -> Result<ManagerDecision, EnvError>;
}

/// How the revision judged a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionAssessment {
    SatisfactoryAsIs,
    AdaptedThenSatisfactory,
    Unsatisfactory,
}

/// Revision result: the judgement plus the probe window backing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionVerdict {
    pub assessment: RevisionAssessment,
    pub evidence: MeasurementSnapshot,
}

impl RevisionVerdict {
    pub fn is_satisfactory(&self) -> bool {
        self.assessment != RevisionAssessment::Unsatisfactory
    }
}

/// Where an executed solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    Retrieval,
    Fallback,
    Manager,
}

/// A store hit as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCase {
    pub id: String,
    pub global: f64,
}

/// One step of a reasoning cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CycleEvent {
    Retrieved {
        considered: usize,
        matches: Vec<RankedCase>,
        negatives: Vec<RankedCase>,
    },
    CandidateSelected {
        source: SolutionSource,
        /// Store id of the similar case, for retrieval candidates.
        from_case: Option<String>,
        solution: Solution,
    },
    NegativeVeto {
        solution: Solution,
        vetoed_by: String,
    },
    ManagerProposed {
        solution: Option<Solution>,
    },
    ManagerRuled {
        decision: ManagerDecision,
    },
    Probed {
        solution: Solution,
        report: ProbeReport,
    },
    Retained {
        id: String,
        outcome: CaseOutcome,
    },
}

/// Complete, replayable record of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub mode: CycleMode,
    /// Store sequence at cycle start; replay reconstructs the store as
    /// of this point.
    pub store_watermark: u64,
    pub current: Case,
    pub events: Vec<CycleEvent>,
}

/// A converged cycle: the retained positive case and its full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome {
    pub case: Case,
    /// Number of candidates actually probed.
    pub iterations: usize,
    pub trace: CycleTrace,
}

/// Outcome of replaying a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub matches: bool,
    /// Index of the first differing event, when any.
    pub first_divergence: Option<usize>,
    pub replayed: CycleTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum CycleError {
    #[error("cycle contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error("fallback enumeration exhausted")]
    NoCandidates,
    #[error("problem unresolved after {iterations} probed candidates")]
    Unresolved {
        iterations: usize,
        trace: Box<CycleTrace>,
    },
}

/// New case = current case + similar solution. Context, problem and
/// measurements come from `current`; the solution is copied verbatim
/// from `similar`.
pub fn reuse(current: &Case, similar: &Case) -> Result<Case, CycleError> {
    if current.solution.is_some() {
        return Err(CycleError::Contract(
            "the current case must not already carry a solution".into(),
        ));
    }
    let solution = similar
        .solution
        .clone()
        .ok_or_else(|| CycleError::Contract(format!("case {} has no solution to reuse", similar.id)))?;
    Ok(attach_solution(current, solution))
}

fn attach_solution(current: &Case, solution: Solution) -> Case {
    let mut candidate = current.clone();
    candidate.solution = Some(solution);
    candidate.outcome = CaseOutcome::Unresolved;
    candidate
}

/// Next arbitrary solution to try: model switches in the fixed order
/// ATCS, RDM, MAM (skipping the current model), then ±25% rescalings of
/// each affected TC's BC, clamped to keep the constraints nondecreasing.
/// The outermost BC is pinned to the link capacity and never rescaled.
pub fn fallback_solution(current: &Case, already_tried: &[Solution]) -> Result<Solution, CycleError> {
    let tried = |candidate: &Solution| already_tried.iter().any(|s| s.same_action(candidate));

    for target in [BamId::Atcs, BamId::Rdm, BamId::Mam] {
        if target == current.context.bam {
            continue;
        }
        let candidate = Solution::switch(target, format!("fallback: try {target}"));
        if !tried(&candidate) {
            return Ok(candidate);
        }
    }

    let bcs = &current.context.bcs.0;
    for tc in current.problem.affected_tcs.iter() {
        for factor in [1.25, 0.75] {
            let Some(new_bcs) = rescaled_bcs(bcs, tc.0, factor) else {
                continue;
            };
            let candidate = Solution {
                switch_to: None,
                new_bcs: Some(new_bcs),
                rationale: format!(
                    "fallback: rescale bc[{}] by {:.0}%",
                    tc.0,
                    factor * 100.0
                ),
            };
            if !tried(&candidate) {
                return Ok(candidate);
            }
        }
    }
    Err(CycleError::NoCandidates)
}

/// Scale one BC and clamp it between its neighbors; `None` when the
/// index is the pinned outermost BC or clamping makes the change a
/// no-op.
fn rescaled_bcs(bcs: &[f64], tc: usize, factor: f64) -> Option<BandwidthConstraints> {
    if tc + 1 >= bcs.len() {
        return None;
    }
    let lower = if tc == 0 { f64::MIN_POSITIVE } else { bcs[tc - 1] };
    let scaled = (bcs[tc] * factor).clamp(lower, bcs[tc + 1]);
    if !(scaled > 0.0) || (scaled - bcs[tc]).abs() < 1e-9 {
        return None;
    }
    let mut new_bcs = bcs.to_vec();
    new_bcs[tc] = scaled;
    Some(BandwidthConstraints(new_bcs))
}

/// Revise a candidate: probe it, and in manager mode let the operator
/// approve, adapt (one re-probed amendment), or reject. Returns the
/// verdict and the (possibly adapted) candidate.
pub fn revise<M: ManagerIo + ?Sized>(
    candidate: &Case,
    probe: &mut dyn RevisionProbe,
    manager: Option<&mut M>,
    mode: CycleMode,
) -> Result<(RevisionVerdict, Case), CycleError> {
    let mut events = Vec::new();
    revise_traced(candidate, probe, manager, mode, &mut events)
}

fn revise_traced<M: ManagerIo + ?Sized>(
    candidate: &Case,
    probe: &mut dyn RevisionProbe,
    manager: Option<&mut M>,
    mode: CycleMode,
    events: &mut Vec<CycleEvent>,
) -> Result<(RevisionVerdict, Case), CycleError> {
    let solution = candidate
        .solution
        .clone()
        .ok_or_else(|| CycleError::Contract("cannot revise a case without a solution".into()))?;
    let report = probe.probe(candidate)?;
    events.push(CycleEvent::Probed {
        solution,
        report: report.clone(),
    });

    match mode {
        CycleMode::Autonomous => {
            let assessment = if report.satisfactory() {
                RevisionAssessment::SatisfactoryAsIs
            } else {
                RevisionAssessment::Unsatisfactory
            };
            Ok((
                RevisionVerdict {
                    assessment,
                    evidence: report.evidence,
                },
                candidate.clone(),
            ))
        }
        CycleMode::Manager => {
            let manager = manager.ok_or_else(|| {
                CycleError::Contract("manager mode requires a manager channel".into())
            })?;
            let decision = manager.decide(candidate, &report)?;
            events.push(CycleEvent::ManagerRuled {
                decision: decision.clone(),
            });
            match decision {
                ManagerDecision::Approve => Ok((
                    RevisionVerdict {
                        assessment: RevisionAssessment::SatisfactoryAsIs,
                        evidence: report.evidence,
                    },
                    candidate.clone(),
                )),
                ManagerDecision::Reject => Ok((
                    RevisionVerdict {
                        assessment: RevisionAssessment::Unsatisfactory,
                        evidence: report.evidence,
                    },
                    candidate.clone(),
                )),
                ManagerDecision::Adapt { solution } => {
                    let adapted = attach_solution(candidate, solution.clone());
                    let adapted_report = probe.probe(&adapted)?;
                    events.push(CycleEvent::Probed {
                        solution,
                        report: adapted_report.clone(),
                    });
                    let assessment = if adapted_report.satisfactory() {
                        RevisionAssessment::AdaptedThenSatisfactory
                    } else {
                        RevisionAssessment::Unsatisfactory
                    };
                    Ok((
                        RevisionVerdict {
                            assessment,
                            evidence: adapted_report.evidence,
                        },
                        adapted,
                    ))
                }
            }
        }
    }
}

/// Retain a revised case with the outcome the verdict dictates; returns
/// the assigned store id.
pub fn retain_outcome(
    mut case: Case,
    verdict: &RevisionVerdict,
    store: &mut CaseStore,
) -> Result<String, CycleError> {
    case.outcome = if verdict.is_satisfactory() {
        CaseOutcome::Positive
    } else {
        CaseOutcome::Negative
    };
    Ok(store.retain(case)?)
}

/// Run one full reasoning cycle for `current` (an unresolved case built
/// from an alert). On success the retained positive case comes back
/// with its trace; an exhausted or capped cycle fails with
/// [`CycleError::Unresolved`], still carrying the trace (every failed
/// candidate has been retained as negative along the way).
pub fn run_cycle(
    current: &Case,
    store: &mut CaseStore,
    probe: &mut dyn RevisionProbe,
    mut manager: Option<&mut (dyn ManagerIo + '_)>,
    mode: CycleMode,
    config: &EngineConfig,
) -> Result<CycleOutcome, CycleError> {
    config.validate()?;
    if current.outcome != CaseOutcome::Unresolved || current.solution.is_some() {
        return Err(CycleError::Contract(
            "the current case must be unresolved and solution-free".into(),
        ));
    }
    if mode == CycleMode::Manager && manager.is_none() {
        return Err(CycleError::Contract(
            "manager mode requires a manager channel".into(),
        ));
    }
    let violations = current.validate();
    if !violations.is_empty() {
        return Err(CycleError::Contract(format!(
            "current case is malformed: {violations:?}"
        )));
    }

    let mut trace = CycleTrace {
        mode,
        store_watermark: store.next_sequence(),
        current: current.clone(),
        events: Vec::new(),
    };
    // The probe budget bounds how many retrieved candidates could ever
    // be tried, so it doubles as the retrieval count limit.
    let retrieval = store.retrieve(current, &config.similarity, config.iteration_cap)?;
    trace.events.push(CycleEvent::Retrieved {
        considered: retrieval.considered,
        matches: retrieval
            .matches
            .iter()
            .map(|s| RankedCase {
                id: s.case.id.clone(),
                global: s.breakdown.global,
            })
            .collect(),
        negatives: retrieval
            .negative
            .iter()
            .map(|s| RankedCase {
                id: s.case.id.clone(),
                global: s.breakdown.global,
            })
            .collect(),
    });

    let retrieval_empty = retrieval.matches.is_empty();
    let mut matches = retrieval.matches.into_iter();
    let mut manager_consulted = false;
    let mut tried: Vec<Solution> = Vec::new();
    let mut iterations = 0usize;

    loop {
        // Pick the next candidate: retrieval hits first, then the
        // fallback enumeration. When retrieval found nothing at all, a
        // manager (if any) gets one chance to propose before fallback.
        let picked = if let Some(scored) = matches.next() {
            let candidate = reuse(current, &scored.case)?;
            Some((candidate, SolutionSource::Retrieval, Some(scored.case.id)))
        } else if mode == CycleMode::Manager && retrieval_empty && !manager_consulted {
            manager_consulted = true;
            let mgr = manager
                .as_deref_mut()
                .expect("manager presence checked above");
            let proposal = mgr.propose_solution(current)?;
            trace.events.push(CycleEvent::ManagerProposed {
                solution: proposal.clone(),
            });
            match proposal {
                Some(solution) => {
                    Some((attach_solution(current, solution), SolutionSource::Manager, None))
                }
                None => continue,
            }
        } else {
            match fallback_solution(current, &tried) {
                Ok(solution) => {
                    Some((attach_solution(current, solution), SolutionSource::Fallback, None))
                }
                Err(CycleError::NoCandidates) => None,
                Err(other) => return Err(other),
            }
        };
        let Some((candidate, source, from_case)) = picked else {
            return Err(CycleError::Unresolved {
                iterations,
                trace: Box::new(trace),
            });
        };
        let solution = candidate.solution.clone().expect("candidate carries a solution");

        // Negative store veto: skip solutions that already failed under
        // similar conditions, whatever their source.
        if let Some(veto) = store.is_negative_match(current, &solution, &config.similarity)? {
            trace.events.push(CycleEvent::NegativeVeto {
                solution: solution.clone(),
                vetoed_by: veto,
            });
            tried.push(solution);
            continue;
        }

        trace.events.push(CycleEvent::CandidateSelected {
            source,
            from_case,
            solution: solution.clone(),
        });
        if iterations == config.iteration_cap {
            return Err(CycleError::Unresolved {
                iterations,
                trace: Box::new(trace),
            });
        }
        iterations += 1;

        let (verdict, revised) = revise_traced(
            &candidate,
            probe,
            manager.as_deref_mut(),
            mode,
            &mut trace.events,
        )?;
        let final_solution = revised.solution.clone().expect("revised keeps a solution");
        let satisfactory = verdict.is_satisfactory();
        let id = retain_outcome(revised, &verdict, store)?;
        trace.events.push(CycleEvent::Retained {
            id: id.clone(),
            outcome: if satisfactory {
                CaseOutcome::Positive
            } else {
                CaseOutcome::Negative
            },
        });
        if satisfactory {
            let case = store.get(&id).expect("just retained").clone();
            return Ok(CycleOutcome {
                case,
                iterations,
                trace,
            });
        }
        tried.push(solution);
        if final_solution != *tried.last().expect("just pushed") {
            tried.push(final_solution);
        }
    }
}

/// Feeds recorded probe reports back to a replayed cycle.
struct TraceProbe {
    reports: VecDeque<ProbeReport>,
}

impl RevisionProbe for TraceProbe {
    fn probe(&mut self, _candidate: &Case) -> Result<ProbeReport, EnvError> {
        self.reports
            .pop_front()
            .ok_or_else(|| EnvError("trace has no further probe reports".into()))
    }
}

/// Feeds recorded manager answers back to a replayed cycle.
struct TraceManager {
    proposals: VecDeque<Option<Solution>>,
    decisions: VecDeque<ManagerDecision>,
}

impl ManagerIo for TraceManager {
    fn propose_solution(&mut self, _current: &Case) -> Result<Option<Solution>, EnvError> {
        self.proposals
            .pop_front()
            .ok_or_else(|| EnvError("trace has no further manager proposals".into()))
    }

    fn decide(&mut self, _candidate: &Case, _report: &ProbeReport) -> Result<ManagerDecision, EnvError> {
        self.decisions
            .pop_front()
            .ok_or_else(|| EnvError("trace has no further manager decisions".into()))
    }
}

/// Re-run a recorded cycle against the store as it stood when the cycle
/// started, feeding probe results and manager answers from the trace,
/// and compare the regenerated event list with the recorded one.
pub fn replay_cycle(
    trace: &CycleTrace,
    store: &CaseStore,
    config: &EngineConfig,
) -> Result<ReplayReport, CycleError> {
    let mut past = store.snapshot_before(trace.store_watermark);
    let mut probe = TraceProbe {
        reports: trace
            .events
            .iter()
            .filter_map(|e| match e {
                CycleEvent::Probed { report, .. } => Some(report.clone()),
                _ => None,
            })
            .collect(),
    };
    let mut manager = TraceManager {
        proposals: trace
            .events
            .iter()
            .filter_map(|e| match e {
                CycleEvent::ManagerProposed { solution } => Some(solution.clone()),
                _ => None,
            })
            .collect(),
        decisions: trace
            .events
            .iter()
            .filter_map(|e| match e {
                CycleEvent::ManagerRuled { decision } => Some(decision.clone()),
                _ => None,
            })
            .collect(),
    };
    let manager_ref: Option<&mut dyn ManagerIo> = match trace.mode {
        CycleMode::Manager => Some(&mut manager),
        CycleMode::Autonomous => None,
    };
    let replayed = match run_cycle(
        &trace.current,
        &mut past,
        &mut probe,
        manager_ref,
        trace.mode,
        config,
    ) {
        Ok(outcome) => outcome.trace,
        Err(CycleError::Unresolved { trace, .. }) => *trace,
        Err(other) => return Err(other),
    };
    let first_divergence = trace
        .events
        .iter()
        .zip(&replayed.events)
        .position(|(a, b)| a != b)
        .or_else(|| {
            (trace.events.len() != replayed.events.len())
                .then(|| trace.events.len().min(replayed.events.len()))
        });
    Ok(ReplayReport {
        matches: first_divergence.is_none(),
        first_divergence,
        replayed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::sample_case;
    use crate::case::TcIndex;

    /// Probe stub: pops scripted reports, then repeats a default.
    struct StubProbe {
        scripted: VecDeque<ProbeReport>,
        default: ProbeReport,
        calls: usize,
    }

    fn report(satisfactory: bool) -> ProbeReport {
        ProbeReport {
            alert_cleared: satisfactory,
            new_violation: false,
            evidence: MeasurementSnapshot {
                utilization: vec![50.0, 50.0, 50.0],
                blocking: vec![10.0, 10.0, 10.0],
                preemption: vec![0.0, 0.0, 0.0],
                devolution: vec![0.0, 0.0, 0.0],
                window_id: 99,
            },
        }
    }

    impl StubProbe {
        fn always(satisfactory: bool) -> Self {
            StubProbe {
                scripted: VecDeque::new(),
                default: report(satisfactory),
                calls: 0,
            }
        }

        fn scripted(reports: Vec<ProbeReport>, default: ProbeReport) -> Self {
            StubProbe {
                scripted: reports.into(),
                default,
                calls: 0,
            }
        }
    }

    impl RevisionProbe for StubProbe {
        fn probe(&mut self, _candidate: &Case) -> Result<ProbeReport, EnvError> {
            self.calls += 1;
            Ok(self.scripted.pop_front().unwrap_or_else(|| self.default.clone()))
        }
    }

    struct StubManager {
        proposals: VecDeque<Option<Solution>>,
        decisions: VecDeque<ManagerDecision>,
    }

    impl ManagerIo for StubManager {
        fn propose_solution(&mut self, _current: &Case) -> Result<Option<Solution>, EnvError> {
            Ok(self.proposals.pop_front().unwrap_or(None))
        }

        fn decide(&mut self, _c: &Case, _r: &ProbeReport) -> Result<ManagerDecision, EnvError> {
            Ok(self
                .decisions
                .pop_front()
                .unwrap_or(ManagerDecision::Approve))
        }
    }

    fn current_case() -> Case {
        let mut case = sample_case();
        case.id = "current".into();
        case.solution = None;
        case.outcome = CaseOutcome::Unresolved;
        case
    }

    #[test]
    fn reuse_composes_current_with_similar_solution() {
        let current = current_case();
        let similar = sample_case();
        let candidate = reuse(&current, &similar).unwrap();
        assert_eq!(candidate.solution, similar.solution);
        assert_eq!(candidate.measurements, current.measurements);
        assert_eq!(candidate.context, current.context);
        assert_eq!(candidate.outcome, CaseOutcome::Unresolved);

        let mut no_solution = sample_case();
        no_solution.solution = None;
        assert!(matches!(
            reuse(&current, &no_solution),
            Err(CycleError::Contract(_))
        ));
        assert!(matches!(
            reuse(&sample_case(), &similar),
            Err(CycleError::Contract(_))
        ));
    }

    #[test]
    fn fallback_enumerates_switches_then_bc_rescalings() {
        let current = current_case(); // MAM, problem on all three TCs
        let mut tried = Vec::new();
        let first = fallback_solution(&current, &tried).unwrap();
        assert_eq!(first.switch_to, Some(BamId::Atcs));
        tried.push(first);
        let second = fallback_solution(&current, &tried).unwrap();
        assert_eq!(second.switch_to, Some(BamId::Rdm));
        tried.push(second);
        // Current model MAM is skipped; next come BC rescalings of the
        // affected TCs: +25% then -25%, innermost first.
        let third = fallback_solution(&current, &tried).unwrap();
        assert_eq!(third.switch_to, None);
        assert_eq!(
            third.new_bcs.as_ref().unwrap().0,
            vec![320.0, 512.0, 1024.0]
        );
        tried.push(third);
        let fourth = fallback_solution(&current, &tried).unwrap();
        assert_eq!(
            fourth.new_bcs.as_ref().unwrap().0,
            vec![192.0, 512.0, 1024.0]
        );
        tried.push(fourth);
        // TC1 variants, then exhaustion (TC2's BC is pinned).
        let fifth = fallback_solution(&current, &tried).unwrap();
        assert_eq!(fifth.new_bcs.as_ref().unwrap().0, vec![256.0, 640.0, 1024.0]);
        tried.push(fifth);
        let sixth = fallback_solution(&current, &tried).unwrap();
        assert_eq!(sixth.new_bcs.as_ref().unwrap().0, vec![256.0, 384.0, 1024.0]);
        tried.push(sixth);
        assert!(matches!(
            fallback_solution(&current, &tried),
            Err(CycleError::NoCandidates)
        ));
    }

    #[test]
    fn fallback_rescaling_respects_monotonicity() {
        // +25% of 500 would overshoot bc[1]=512; it clamps there.
        let mut current = current_case();
        current.context.bcs = BandwidthConstraints(vec![500.0, 512.0, 1024.0]);
        current.problem.affected_tcs = [TcIndex(0)].into();
        let tried = vec![
            Solution::switch(BamId::Atcs, ""),
            Solution::switch(BamId::Rdm, ""),
        ];
        let next = fallback_solution(&current, &tried).unwrap();
        assert_eq!(next.new_bcs.as_ref().unwrap().0, vec![512.0, 512.0, 1024.0]);

        // The outermost BC is pinned: a problem confined to the last TC
        // offers no rescaling candidates at all.
        current.problem.affected_tcs = [TcIndex(2)].into();
        assert!(matches!(
            fallback_solution(&current, &tried),
            Err(CycleError::NoCandidates)
        ));
    }

    #[test]
    fn cycle_reuses_a_matching_positive_case_in_one_iteration() {
        let mut store = CaseStore::new();
        store.retain(sample_case()).unwrap();
        let mut probe = StubProbe::always(true);
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(outcome.iterations, 1);
        assert_eq!(outcome.case.outcome, CaseOutcome::Positive);
        assert_eq!(
            outcome.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Atcs)
        );
        assert_eq!(store.len(), 2);
        let kinds: Vec<&str> = outcome
            .trace
            .events
            .iter()
            .map(|e| match e {
                CycleEvent::Retrieved { .. } => "retrieved",
                CycleEvent::CandidateSelected { source, .. } => match source {
                    SolutionSource::Retrieval => "candidate:retrieval",
                    SolutionSource::Fallback => "candidate:fallback",
                    SolutionSource::Manager => "candidate:manager",
                },
                CycleEvent::NegativeVeto { .. } => "veto",
                CycleEvent::ManagerProposed { .. } => "proposed",
                CycleEvent::ManagerRuled { .. } => "ruled",
                CycleEvent::Probed { .. } => "probed",
                CycleEvent::Retained { .. } => "retained",
            })
            .collect();
        assert_eq!(
            kinds,
            vec!["retrieved", "candidate:retrieval", "probed", "retained"]
        );
    }

    #[test]
    fn empty_store_falls_back_to_arbitrary_solution() {
        let mut store = CaseStore::new();
        let mut probe = StubProbe::always(true);
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(outcome.iterations, 1);
        assert_eq!(store.len(), 1);
        assert_eq!(
            outcome.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Atcs)
        );
        assert!(outcome.trace.events.iter().any(|e| matches!(
            e,
            CycleEvent::CandidateSelected {
                source: SolutionSource::Fallback,
                ..
            }
        )));
    }

    #[test]
    fn negative_store_vetoes_matching_candidates() {
        let mut store = CaseStore::new();
        // A failed ATCS switch under the same conditions...
        let mut failed = sample_case();
        failed.outcome = CaseOutcome::Negative;
        let veto_id = store.retain(failed).unwrap();
        // ...and a positive case proposing RDM instead.
        let mut alternative = sample_case();
        alternative.solution = Some(Solution::switch(BamId::Rdm, "worked before"));
        store.retain(alternative).unwrap();

        let mut probe = StubProbe::always(true);
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &EngineConfig::default(),
        )
        .unwrap();
        // The fallback enumeration would lead with ATCS, but the veto
        // skips it; the retrieved RDM solution wins first.
        assert_eq!(
            outcome.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Rdm)
        );
        assert!(outcome
            .trace
            .events
            .iter()
            .all(|e| !matches!(e, CycleEvent::NegativeVeto { .. })));

        // With only the negative case in store, the fallback's ATCS
        // proposal is vetoed explicitly and RDM is probed instead.
        let mut store2 = CaseStore::new();
        let mut failed2 = sample_case();
        failed2.outcome = CaseOutcome::Negative;
        store2.retain(failed2).unwrap();
        let mut probe2 = StubProbe::always(true);
        let outcome2 = run_cycle(
            &current_case(),
            &mut store2,
            &mut probe2,
            None,
            CycleMode::Autonomous,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(
            outcome2.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Rdm)
        );
        assert!(outcome2.trace.events.iter().any(|e| matches!(
            e,
            CycleEvent::NegativeVeto { vetoed_by, .. } if *vetoed_by == veto_id
        )));
        assert_eq!(probe2.calls, 1);
    }

    #[test]
    fn unsatisfactory_candidates_are_retained_negative_and_skipped() {
        let mut store = CaseStore::new();
        store.retain(sample_case()).unwrap();
        // First probe (the retrieved ATCS solution) fails, the second
        // (fallback RDM) succeeds.
        let mut probe = StubProbe::scripted(vec![report(false)], report(true));
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(outcome.iterations, 2);
        let negatives = store
            .iter()
            .filter(|c| c.outcome == CaseOutcome::Negative)
            .count();
        assert_eq!(negatives, 1);
        assert_eq!(
            outcome.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Rdm)
        );
        // The failed ATCS attempt was recorded before the success.
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn exhausted_or_capped_cycles_fail_with_the_trace() {
        let mut store = CaseStore::new();
        let mut probe = StubProbe::always(false);
        let err = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &EngineConfig::default(),
        )
        .unwrap_err();
        match err {
            CycleError::Unresolved { iterations, trace } => {
                // MAM current: ATCS, RDM, then 2 rescalings per affected
                // TC with the outermost pinned -> 6 candidates total.
                assert_eq!(iterations, 6);
                assert!(!trace.events.is_empty());
            }
            other => panic!("expected Unresolved, got {other:?}"),
        }
        // Every failed attempt became a negative case.
        assert_eq!(store.len(), 6);
        assert!(store.iter().all(|c| c.outcome == CaseOutcome::Negative));

        // A tight cap cuts the cycle off earlier.
        let mut store = CaseStore::new();
        let mut probe = StubProbe::always(false);
        let config = EngineConfig {
            iteration_cap: 2,
            ..EngineConfig::default()
        };
        let err = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &config,
        )
        .unwrap_err();
        match err {
            CycleError::Unresolved { iterations, .. } => assert_eq!(iterations, 2),
            other => panic!("expected Unresolved, got {other:?}"),
        }
    }

    #[test]
    fn manager_mode_proposal_and_approval() {
        let mut store = CaseStore::new();
        let mut probe = StubProbe::always(true);
        let mut manager = StubManager {
            proposals: VecDeque::from([Some(Solution::switch(BamId::Rdm, "operator choice"))]),
            decisions: VecDeque::from([ManagerDecision::Approve]),
        };
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            Some(&mut manager),
            CycleMode::Manager,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(
            outcome.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Rdm)
        );
        assert!(outcome.trace.events.iter().any(|e| matches!(
            e,
            CycleEvent::CandidateSelected {
                source: SolutionSource::Manager,
                ..
            }
        )));
    }

    #[test]
    fn manager_adaptation_is_reprobed() {
        let mut store = CaseStore::new();
        store.retain(sample_case()).unwrap();
        let mut probe = StubProbe::always(true);
        let adapted_solution = Solution::switch(BamId::Rdm, "manager prefers RDM");
        let mut manager = StubManager {
            proposals: VecDeque::new(),
            decisions: VecDeque::from([ManagerDecision::Adapt {
                solution: adapted_solution.clone(),
            }]),
        };
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            Some(&mut manager),
            CycleMode::Manager,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(probe.calls, 2);
        assert_eq!(outcome.case.solution.as_ref().unwrap().switch_to, Some(BamId::Rdm));
        let probed: Vec<_> = outcome
            .trace
            .events
            .iter()
            .filter(|e| matches!(e, CycleEvent::Probed { .. }))
            .collect();
        assert_eq!(probed.len(), 2);
    }

    #[test]
    fn manager_rejection_retains_negative_and_continues() {
        let mut store = CaseStore::new();
        store.retain(sample_case()).unwrap();
        let mut probe = StubProbe::always(true);
        let mut manager = StubManager {
            proposals: VecDeque::new(),
            decisions: VecDeque::from([ManagerDecision::Reject, ManagerDecision::Approve]),
        };
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            Some(&mut manager),
            CycleMode::Manager,
            &EngineConfig::default(),
        )
        .unwrap();
        // The rejected retrieval candidate went negative. Retrieval was
        // not empty, so no proposal is solicited; the fallback skips
        // the already-tried ATCS and RDM wins approval.
        assert_eq!(
            outcome.case.solution.as_ref().unwrap().switch_to,
            Some(BamId::Rdm)
        );
        assert_eq!(
            store
                .iter()
                .filter(|c| c.outcome == CaseOutcome::Negative)
                .count(),
            1
        );
        assert!(!outcome
            .trace
            .events
            .iter()
            .any(|e| matches!(e, CycleEvent::ManagerProposed { .. })));
    }

    #[test]
    fn contract_violations_are_rejected() {
        let mut store = CaseStore::new();
        let mut probe = StubProbe::always(true);
        assert!(matches!(
            run_cycle(
                &sample_case(), // already solved
                &mut store,
                &mut probe,
                None,
                CycleMode::Autonomous,
                &EngineConfig::default(),
            ),
            Err(CycleError::Contract(_))
        ));
        assert!(matches!(
            run_cycle(
                &current_case(),
                &mut store,
                &mut probe,
                None,
                CycleMode::Manager,
                &EngineConfig::default(),
            ),
            Err(CycleError::Contract(_))
        ));
        let bad_config = EngineConfig {
            iteration_cap: 0,
            ..EngineConfig::default()
        };
        assert!(matches!(
            run_cycle(
                &current_case(),
                &mut store,
                &mut probe,
                None,
                CycleMode::Autonomous,
                &bad_config,
            ),
            Err(CycleError::Contract(_))
        ));
    }

    #[test]
    fn learning_identical_alert_resolves_in_one_retrieval_iteration() {
        let mut store = CaseStore::new();
        let mut probe = StubProbe::always(true);
        let config = EngineConfig::default();
        let first = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &config,
        )
        .unwrap();
        // First resolution needed the fallback; the second time the
        // same alert arrives, retrieval serves the learned case.
        let second = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &config,
        )
        .unwrap();
        assert_eq!(second.iterations, 1);
        assert_eq!(
            second.case.solution.as_ref().unwrap().switch_to,
            first.case.solution.as_ref().unwrap().switch_to
        );
        assert!(second.trace.events.iter().any(|e| matches!(
            e,
            CycleEvent::CandidateSelected {
                source: SolutionSource::Retrieval,
                ..
            }
        )));
        assert!(second.trace.events.iter().all(|e| !matches!(
            e,
            CycleEvent::CandidateSelected {
                source: SolutionSource::Fallback,
                ..
            }
        )));
    }

    #[test]
    fn traces_replay_byte_for_byte_even_after_the_store_grows() {
        let mut store = CaseStore::new();
        store.retain(sample_case()).unwrap();
        let config = EngineConfig::default();
        // A cycle whose first candidate fails, to exercise veto-free
        // multi-candidate replay.
        let mut probe = StubProbe::scripted(vec![report(false)], report(true));
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            None,
            CycleMode::Autonomous,
            &config,
        )
        .unwrap();

        let replayed = replay_cycle(&outcome.trace, &store, &config).unwrap();
        assert!(replayed.matches, "divergence at {:?}", replayed.first_divergence);
        assert_eq!(
            serde_json::to_string(&replayed.replayed).unwrap(),
            serde_json::to_string(&outcome.trace).unwrap()
        );

        // Later retentions do not disturb replay: the watermark scopes
        // the store back to cycle start.
        let mut probe2 = StubProbe::always(true);
        run_cycle(
            &current_case(),
            &mut store,
            &mut probe2,
            None,
            CycleMode::Autonomous,
            &config,
        )
        .unwrap();
        let replayed = replay_cycle(&outcome.trace, &store, &config).unwrap();
        assert!(replayed.matches);

        // A tampered trace is flagged with the divergence point.
        let mut tampered = outcome.trace.clone();
        if let CycleEvent::Retained { id, .. } = tampered.events.last_mut().unwrap() {
            *id = "case-999999".into();
        }
        let replayed = replay_cycle(&tampered, &store, &config).unwrap();
        assert!(!replayed.matches);
        assert_eq!(replayed.first_divergence, Some(tampered.events.len() - 1));
    }

    #[test]
    fn manager_traces_replay_from_recorded_answers() {
        let mut store = CaseStore::new();
        let config = EngineConfig::default();
        let mut probe = StubProbe::always(true);
        let mut manager = StubManager {
            proposals: VecDeque::from([Some(Solution::switch(BamId::Rdm, "operator choice"))]),
            decisions: VecDeque::from([ManagerDecision::Approve]),
        };
        let outcome = run_cycle(
            &current_case(),
            &mut store,
            &mut probe,
            Some(&mut manager),
            CycleMode::Manager,
            &config,
        )
        .unwrap();
        let replayed = replay_cycle(&outcome.trace, &store, &config).unwrap();
        assert!(replayed.matches, "divergence at {:?}", replayed.first_divergence);
    }
}
