//! Case schema: context, problem, measurements, solution, outcome.
//!
//! A [`Case`] is the unit stored, retrieved and compared by the CBR
//! machinery. Similarity never looks at the nested structure directly;
//! it works on the flat [`AttributeVector`] view produced by
//! [`Case::to_attribute_vector`], which lays the indexed attributes out
//! in a fixed order: one BAM leaf, then bandwidth, tolerance and
//! measurement leaves, each expanded per traffic class.
//!
//! All vectors are sized by the run-level class count `n_tc` (3 in the
//! default profile); nothing is hard-coded to three classes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Bandwidth allocation model identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BamId {
    #[serde(rename = "MAM")]
    Mam,
    #[serde(rename = "RDM")]
    Rdm,
    #[serde(rename = "ATCS")]
    Atcs,
}

impl BamId {
    pub const ALL: [BamId; 3] = [BamId::Mam, BamId::Rdm, BamId::Atcs];

    pub fn as_str(&self) -> &'static str {
        match self {
            BamId::Mam => "MAM",
            BamId::Rdm => "RDM",
            BamId::Atcs => "ATCS",
        }
    }
}

impl fmt::Display for BamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BamId {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MAM" => Ok(BamId::Mam),
            "RDM" => Ok(BamId::Rdm),
            // ATC-S is the spelled-out form used in reports.
            "ATCS" | "ATC-S" => Ok(BamId::Atcs),
            other => Err(SchemaError::UnknownBam(other.to_string())),
        }
    }
}

/// Zero-based traffic class index; TC0 is the highest priority class.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TcIndex(pub usize);

impl fmt::Display for TcIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TC{}", self.0)
    }
}

/// Per-class bandwidth constraint vector in Mbps.
///
/// Serialized as a bare array. Under RDM and ATC-S the entries must be
/// nondecreasing with the last entry equal to the link capacity; that
/// model-specific rule is enforced where a model is configured, not
/// here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandwidthConstraints(pub Vec<f64>);

impl BandwidthConstraints {
    pub fn n_tc(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, tc: TcIndex) -> f64 {
        self.0[tc.0]
    }

    /// True when bc[0] <= bc[1] <= ... (the RDM/ATC-S doll layout).
    pub fn is_nondecreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Manager-defined per-class limits. A measurement beyond (or, for
/// utilization, below) its limit raises an alert.
///
/// `min_utilization` has no counterpart in the tolerance tables; it is
/// an extension so that low utilization is detectable like the other
/// three problem kinds. Default 20% per class; set 0 to disable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceProfile {
    pub name: String,
    pub blocking: Vec<f64>,
    pub preemption: Vec<f64>,
    pub devolution: Vec<f64>,
    #[serde(default)]
    pub min_utilization: Vec<f64>,
}

impl ToleranceProfile {
    /// Build a profile with the default 20% minimum-utilization floor.
    pub fn new(
        name: impl Into<String>,
        blocking: Vec<f64>,
        preemption: Vec<f64>,
        devolution: Vec<f64>,
    ) -> Self {
        let n = blocking.len();
        Self {
            name: name.into(),
            blocking,
            preemption,
            devolution,
            min_utilization: vec![20.0; n],
        }
    }

    pub fn n_tc(&self) -> usize {
        self.blocking.len()
    }

    /// The three tolerance metrics in attribute-vector order.
    pub fn metric(&self, metric: ToleranceMetric) -> &[f64] {
        match metric {
            ToleranceMetric::Blocking => &self.blocking,
            ToleranceMetric::Preemption => &self.preemption,
            ToleranceMetric::Devolution => &self.devolution,
        }
    }

    /// Numeric equality across all four limit vectors; the display name
    /// is a label and does not participate.
    pub fn same_limits(&self, other: &ToleranceProfile) -> bool {
        self.blocking == other.blocking
            && self.preemption == other.preemption
            && self.devolution == other.devolution
            && self.min_utilization == other.min_utilization
    }
}

/// Windowed per-class metrics, all in percent of [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSnapshot {
    pub utilization: Vec<f64>,
    pub blocking: Vec<f64>,
    pub preemption: Vec<f64>,
    pub devolution: Vec<f64>,
    pub window_id: u64,
}

impl MeasurementSnapshot {
    pub fn n_tc(&self) -> usize {
        self.utilization.len()
    }

    pub fn metric(&self, metric: MeasurementMetric) -> &[f64] {
        match metric {
            MeasurementMetric::Utilization => &self.utilization,
            MeasurementMetric::Blocking => &self.blocking,
            MeasurementMetric::Preemption => &self.preemption,
            MeasurementMetric::Devolution => &self.devolution,
        }
    }
}

/// The operational problem kinds an alert can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    HighBlocking,
    HighPreemption,
    HighDevolution,
    LowUtilization,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemKind::HighBlocking => "high-blocking",
            ProblemKind::HighPreemption => "high-preemption",
            ProblemKind::HighDevolution => "high-devolution",
            ProblemKind::LowUtilization => "low-utilization",
        };
        f.write_str(s)
    }
}

/// What went wrong and on which classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDescriptor {
    pub kind: ProblemKind,
    pub affected_tcs: BTreeSet<TcIndex>,
}

/// The (BAM, limits, BCs) triple scoping which stored cases are
/// comparable to a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextInfo {
    pub bam: BamId,
    pub limits: ToleranceProfile,
    pub bcs: BandwidthConstraints,
}

/// A proposed remedy: switch model, reconfigure BCs, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_to: Option<BamId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_bcs: Option<BandwidthConstraints>,
    pub rationale: String,
}

impl Solution {
    pub fn switch(bam: BamId, rationale: impl Into<String>) -> Self {
        Solution {
            switch_to: Some(bam),
            new_bcs: None,
            rationale: rationale.into(),
        }
    }

    /// Action equality: same switch target and same BC vector. The
    /// rationale is commentary and never participates in matching.
    pub fn same_action(&self, other: &Solution) -> bool {
        self.switch_to == other.switch_to && self.new_bcs == other.new_bcs
    }
}

/// Whether the case's solution was verified to work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseOutcome {
    Unresolved,
    Positive,
    Negative,
}

/// The unit of storage and retrieval: one observed problem with its
/// context, the measurements that exposed it, and (once revised) the
/// solution and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub id: String,
    pub context: ContextInfo,
    pub problem: ProblemDescriptor,
    pub measurements: MeasurementSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Solution>,
    pub outcome: CaseOutcome,
    pub retained_at: u64,
}

impl Case {
    pub fn n_tc(&self) -> usize {
        self.context.bcs.n_tc()
    }

    /// Flatten into the fixed-order leaf vector used by similarity.
    ///
    /// Layout: `bam`, then `bandwidth.bc[0..n]`, then the tolerance
    /// metrics (blocking, preemption, devolution) each expanded per
    /// class, then the measurement metrics (utilization, blocking,
    /// preemption, devolution) likewise. 25 leaves for n_tc = 3.
    pub fn to_attribute_vector(&self) -> Result<AttributeVector, SchemaError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(SchemaError::InvalidCase {
                id: self.id.clone(),
                violations,
            });
        }
        let n = self.n_tc();
        let mut leaves = Vec::with_capacity(1 + n + 3 * n + 4 * n);
        leaves.push((AttributeId::Bam, LeafValue::Bam(self.context.bam)));
        for tc in 0..n {
            leaves.push((
                AttributeId::Bandwidth { tc: TcIndex(tc) },
                LeafValue::Number(self.context.bcs.0[tc]),
            ));
        }
        for metric in ToleranceMetric::ALL {
            let values = self.context.limits.metric(metric);
            for tc in 0..n {
                leaves.push((
                    AttributeId::Tolerance {
                        metric,
                        tc: TcIndex(tc),
                    },
                    LeafValue::Number(values[tc]),
                ));
            }
        }
        for metric in MeasurementMetric::ALL {
            let values = self.measurements.metric(metric);
            for tc in 0..n {
                leaves.push((
                    AttributeId::Measurement {
                        metric,
                        tc: TcIndex(tc),
                    },
                    LeafValue::Number(values[tc]),
                ));
            }
        }
        Ok(AttributeVector { leaves })
    }

    /// Check every schema invariant and report all violations; an empty
    /// list means the case is well formed. Total: never errors.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n_tc();
        if n == 0 {
            out.push(Violation::new("context.bcs", "must have at least one class"));
        }
        for (i, bc) in self.context.bcs.0.iter().enumerate() {
            if !bc.is_finite() || *bc <= 0.0 {
                out.push(Violation::new(
                    format!("context.bcs[{i}]"),
                    format!("bandwidth must be finite and > 0, got {bc}"),
                ));
            }
        }
        let limits = &self.context.limits;
        check_percent_vec(&mut out, "context.limits.blocking", &limits.blocking, n);
        check_percent_vec(&mut out, "context.limits.preemption", &limits.preemption, n);
        check_percent_vec(&mut out, "context.limits.devolution", &limits.devolution, n);
        check_percent_vec(
            &mut out,
            "context.limits.min_utilization",
            &limits.min_utilization,
            n,
        );
        let m = &self.measurements;
        check_percent_vec(&mut out, "measurements.utilization", &m.utilization, n);
        check_percent_vec(&mut out, "measurements.blocking", &m.blocking, n);
        check_percent_vec(&mut out, "measurements.preemption", &m.preemption, n);
        check_percent_vec(&mut out, "measurements.devolution", &m.devolution, n);
        if self.problem.affected_tcs.is_empty() {
            out.push(Violation::new("problem.affected_tcs", "must not be empty"));
        }
        for tc in &self.problem.affected_tcs {
            if tc.0 >= n {
                out.push(Violation::new(
                    "problem.affected_tcs",
                    format!("{tc} out of range for {n} classes"),
                ));
            }
        }
        if let Some(solution) = &self.solution {
            if solution.switch_to.is_none() && solution.new_bcs.is_none() {
                out.push(Violation::new(
                    "solution",
                    "must carry a BAM switch, new BCs, or both",
                ));
            }
            if let Some(bcs) = &solution.new_bcs {
                if bcs.n_tc() != n {
                    out.push(Violation::new(
                        "solution.new_bcs",
                        format!("expected {n} entries, got {}", bcs.n_tc()),
                    ));
                }
                for (i, bc) in bcs.0.iter().enumerate() {
                    if !bc.is_finite() || *bc <= 0.0 {
                        out.push(Violation::new(
                            format!("solution.new_bcs[{i}]"),
                            format!("bandwidth must be finite and > 0, got {bc}"),
                        ));
                    }
                }
            }
        }
        if matches!(self.outcome, CaseOutcome::Positive | CaseOutcome::Negative)
            && self.solution.is_none()
        {
            out.push(Violation::new(
                "solution",
                format!("{:?} outcome requires a solution", self.outcome),
            ));
        }
        if self.id.is_empty() {
            out.push(Violation::new("id", "must not be empty"));
        }
        out
    }
}

fn check_percent_vec(out: &mut Vec<Violation>, path: &str, values: &[f64], n: usize) {
    if values.len() != n {
        out.push(Violation::new(
            path,
            format!("expected {n} entries, got {}", values.len()),
        ));
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 || *v > 100.0 {
            out.push(Violation::new(
                format!("{path}[{i}]"),
                format!("percentage out of [0,100]: {v}"),
            ));
        }
    }
}

/// The tolerance metrics, in attribute-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMetric {
    Blocking,
    Preemption,
    Devolution,
}

impl ToleranceMetric {
    pub const ALL: [ToleranceMetric; 3] = [
        ToleranceMetric::Blocking,
        ToleranceMetric::Preemption,
        ToleranceMetric::Devolution,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToleranceMetric::Blocking => "blocking",
            ToleranceMetric::Preemption => "preemption",
            ToleranceMetric::Devolution => "devolution",
        }
    }
}

/// The measurement metrics, in attribute-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMetric {
    Utilization,
    Blocking,
    Preemption,
    Devolution,
}

impl MeasurementMetric {
    pub const ALL: [MeasurementMetric; 4] = [
        MeasurementMetric::Utilization,
        MeasurementMetric::Blocking,
        MeasurementMetric::Preemption,
        MeasurementMetric::Devolution,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementMetric::Utilization => "utilization",
            MeasurementMetric::Blocking => "blocking",
            MeasurementMetric::Preemption => "preemption",
            MeasurementMetric::Devolution => "devolution",
        }
    }
}

/// Identity of one leaf in the attribute vector: group, metric, class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributeId {
    Bam,
    Bandwidth { tc: TcIndex },
    Tolerance { metric: ToleranceMetric, tc: TcIndex },
    Measurement { metric: MeasurementMetric, tc: TcIndex },
}

impl AttributeId {
    pub fn group(&self) -> AttributeGroup {
        match self {
            AttributeId::Bam => AttributeGroup::Bam,
            AttributeId::Bandwidth { .. } => AttributeGroup::Bandwidth,
            AttributeId::Tolerance { .. } => AttributeGroup::Tolerance,
            AttributeId::Measurement { .. } => AttributeGroup::Measurement,
        }
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeId::Bam => write!(f, "bam"),
            AttributeId::Bandwidth { tc } => write!(f, "bandwidth.bc[{}]", tc.0),
            AttributeId::Tolerance { metric, tc } => {
                write!(f, "tolerance.{}[{}]", metric.as_str(), tc.0)
            }
            AttributeId::Measurement { metric, tc } => {
                write!(f, "measurement.{}[{}]", metric.as_str(), tc.0)
            }
        }
    }
}

/// The four level-1 attribute groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeGroup {
    Bam,
    Bandwidth,
    Tolerance,
    Measurement,
}

/// One leaf value: the categorical BAM identity or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafValue {
    Bam(BamId),
    Number(f64),
}

/// Flat, deterministically ordered view of a case's indexed attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector {
    leaves: Vec<(AttributeId, LeafValue)>,
}

impl AttributeVector {
    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[(AttributeId, LeafValue)] {
        &self.leaves
    }

    pub fn iter(&self) -> impl Iterator<Item = &(AttributeId, LeafValue)> {
        self.leaves.iter()
    }
}

/// A single schema violation found by [`Case::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Errors raised by schema-level operations.
#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("unknown BAM identifier {0:?}")]
    UnknownBam(String),
    #[error("case {id:?} is not schema-valid: {}", format_violations(violations))]
    InvalidCase { id: String, violations: Vec<Violation> },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
