//! Local and global similarity functions.
//!
//! Four local functions compare individual attributes:
//!
//! - exact match for categorical attributes (the BAM identity),
//! - absolute distance `|a − b|` as the shared numeric primitive,
//! - linear similarity `1 − |a − b| / (max − min)` for percentage
//!   metrics,
//! - the ladder step `1 if |a − b| <= k else 0` for bandwidth values.
//!
//! The weighted nearest-neighbor mean `Σ f_i·W_i / Σ W_i` combines
//! local scores into a global one. Case comparison runs it
//! hierarchically: leaf similarities per group, one score per group,
//! then the BAM term joins the three group scores at the top level.
//!
//! Cases from different contexts are not comparable; the configurable
//! context gate rejects such pairs before any score is produced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::case::{AttributeGroup, AttributeId, Case, ContextInfo, LeafValue};

/// Inclusive value range used by the linear function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub const PERCENT: ValueRange = ValueRange {
        min: 0.0,
        max: 100.0,
    };

    pub fn new(min: f64, max: f64) -> Result<Self, SimilarityError> {
        let range = ValueRange { min, max };
        range.check()?;
        Ok(range)
    }

    fn check(&self) -> Result<(), SimilarityError> {
        if !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(SimilarityError::DegenerateRange {
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

/// Maximum tolerated difference for the ladder function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LadderParam {
    pub k: f64,
}

impl LadderParam {
    pub fn new(k: f64) -> Result<Self, SimilarityError> {
        if !k.is_finite() || k < 0.0 {
            return Err(SimilarityError::InvalidConfig(format!(
                "ladder k must be finite and >= 0, got {k}"
            )));
        }
        Ok(LadderParam { k })
    }
}

impl Default for LadderParam {
    fn default() -> Self {
        LadderParam { k: 128.0 }
    }
}

/// Exact-match similarity: 1 iff the values are equal, else 0.
pub fn exact_sim<T: PartialEq>(a: &T, b: &T) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Absolute distance `|a − b|`.
///
/// This is a distance, not a similarity: it is unbounded and never
/// feeds the global function directly. The linear and ladder functions
/// build on it.
pub fn abs_distance(a: f64, b: f64) -> Result<f64, SimilarityError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(SimilarityError::NonFinite {
            value: if a.is_finite() { b } else { a },
        });
    }
    Ok((a - b).abs())
}

/// Linear similarity `1 − |a − b| / (max − min)`.
///
/// Inputs are clamped into the range first, so the result is always in
/// [0, 1]; 80 vs 70 over [0, 100] gives 0.90.
pub fn linear_sim(a: f64, b: f64, range: ValueRange) -> Result<f64, SimilarityError> {
    range.check()?;
    let a = range.clamp(a);
    let b = range.clamp(b);
    let d = abs_distance(a, b)?;
    Ok(1.0 - d / (range.max - range.min))
}

/// Ladder similarity: 1 iff `|a − b| <= k`, else 0.
pub fn ladder_sim(a: f64, b: f64, ladder: LadderParam) -> f64 {
    if (a - b).abs() <= ladder.k {
        1.0
    } else {
        0.0
    }
}

/// Weighted nearest-neighbor mean `Σ f_i·W_i / Σ W_i`.
///
/// With all weights equal this collapses to the arithmetic mean. The
/// result always lies within the span of its inputs.
pub fn nn_global(locals: &[f64], weights: &[f64]) -> Result<f64, SimilarityError> {
    if locals.is_empty() || locals.len() != weights.len() {
        return Err(SimilarityError::LengthMismatch {
            locals: locals.len(),
            weights: weights.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, w) in locals.iter().zip(weights) {
        if *w < 0.0 || !w.is_finite() {
            return Err(SimilarityError::InvalidConfig(format!(
                "weights must be finite and >= 0, got {w}"
            )));
        }
        num += f * w;
        den += w;
    }
    if den <= 0.0 {
        return Err(SimilarityError::ZeroWeight);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Which local function scores a numeric attribute group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalFunction {
    Exact,
    Linear,
    Ladder,
}

/// Local-function assignment per attribute group.
///
/// The BAM group is categorical and must stay on exact match; the
/// numeric groups may be reassigned for experimentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionAssignment {
    pub bam: LocalFunction,
    pub bandwidth: LocalFunction,
    pub tolerance: LocalFunction,
    pub measurement: LocalFunction,
}

impl Default for FunctionAssignment {
    fn default() -> Self {
        FunctionAssignment {
            bam: LocalFunction::Exact,
            bandwidth: LocalFunction::Ladder,
            tolerance: LocalFunction::Linear,
            measurement: LocalFunction::Linear,
        }
    }
}

impl FunctionAssignment {
    fn for_group(&self, group: AttributeGroup) -> LocalFunction {
        match group {
            AttributeGroup::Bam => self.bam,
            AttributeGroup::Bandwidth => self.bandwidth,
            AttributeGroup::Tolerance => self.tolerance,
            AttributeGroup::Measurement => self.measurement,
        }
    }
}

/// Aggregation weights: one weight per level-1 term, plus optional
/// per-leaf overrides keyed by the leaf's canonical id (e.g.
/// `"measurement.blocking[0]"`). Unlisted leaves weigh 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub bam: f64,
    pub bandwidth: f64,
    pub tolerance: f64,
    pub measurement: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub leaves: BTreeMap<String, f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            bam: 1.0,
            bandwidth: 1.0,
            tolerance: 1.0,
            measurement: 1.0,
            leaves: BTreeMap::new(),
        }
    }
}

impl WeightConfig {
    fn leaf_weight(&self, id: &AttributeId) -> f64 {
        self.leaves.get(&id.to_string()).copied().unwrap_or(1.0)
    }
}

/// How strictly the context gate filters candidate cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextGateMode {
    /// Reject candidates under a different BAM (default).
    #[default]
    BamOnly,
    /// Additionally require identical limits and BCs within ladder k.
    FullContext,
    /// No gating; the BAM leaf still scores 0 on mismatch.
    Off,
}

/// Everything the similarity computation is parameterized by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub functions: FunctionAssignment,
    pub ladder_k: LadderParam,
    /// Value range per metric name; the percentage metrics default to
    /// [0, 100]. A `"bandwidth"` entry is only needed when the
    /// bandwidth group is reassigned to the linear function.
    pub ranges: BTreeMap<String, ValueRange>,
    pub weights: WeightConfig,
    /// Retrieval threshold on the global score.
    pub theta: f64,
    pub context_gate: ContextGateMode,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        let mut ranges = BTreeMap::new();
        for name in ["utilization", "blocking", "preemption", "devolution"] {
            ranges.insert(name.to_string(), ValueRange::PERCENT);
        }
        SimilarityConfig {
            functions: FunctionAssignment::default(),
            ladder_k: LadderParam::default(),
            ranges,
            weights: WeightConfig::default(),
            theta: 0.8,
            context_gate: ContextGateMode::BamOnly,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(SimilarityError::InvalidConfig(format!(
                "theta must lie in [0,1], got {}",
                self.theta
            )));
        }
        LadderParam::new(self.ladder_k.k)?;
        if self.functions.bam != LocalFunction::Exact {
            return Err(SimilarityError::InvalidConfig(
                "the BAM group is categorical and must use the exact function".into(),
            ));
        }
        for (name, range) in &self.ranges {
            range.check().map_err(|_| {
                SimilarityError::InvalidConfig(format!(
                    "range for {name:?} is degenerate: [{}, {}]",
                    range.min, range.max
                ))
            })?;
        }
        let w = &self.weights;
        for (label, value) in [
            ("bam", w.bam),
            ("bandwidth", w.bandwidth),
            ("tolerance", w.tolerance),
            ("measurement", w.measurement),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(SimilarityError::InvalidConfig(format!(
                    "group weight {label} must be finite and >= 0, got {value}"
                )));
            }
        }
        if w.bam + w.bandwidth + w.tolerance + w.measurement <= 0.0 {
            return Err(SimilarityError::ZeroWeight);
        }
        for (leaf, value) in &w.leaves {
            if !value.is_finite() || *value < 0.0 {
                return Err(SimilarityError::InvalidConfig(format!(
                    "leaf weight {leaf:?} must be finite and >= 0, got {value}"
                )));
            }
        }
        Ok(())
    }

    fn range_for(&self, metric: &str) -> Result<ValueRange, SimilarityError> {
        self.ranges.get(metric).copied().ok_or_else(|| {
            SimilarityError::InvalidConfig(format!("no value range configured for {metric:?}"))
        })
    }
}

/// One scored leaf in a breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafScore {
    pub id: String,
    pub local: f64,
}

/// Per-group (level-2) scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub bam: f64,
    pub bandwidth: f64,
    pub tolerance: f64,
    pub measurement: f64,
}

/// Full audit record of one case comparison: the global score, the
/// level-1/level-2 terms it was recombined from, and every leaf score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub global: f64,
    /// True when the context gate rejected the pair; the global score
    /// is forced to 0 in that case.
    pub gated: bool,
    pub groups: GroupScores,
    pub leaves: Vec<LeafScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Should a stored context be comparable to the query context at all?
pub fn context_gate(
    query: &ContextInfo,
    stored: &ContextInfo,
    mode: ContextGateMode,
    ladder: LadderParam,
) -> bool {
    match mode {
        ContextGateMode::Off => true,
        ContextGateMode::BamOnly => query.bam == stored.bam,
        ContextGateMode::FullContext => {
            query.bam == stored.bam
                && query.limits.same_limits(&stored.limits)
                && query.bcs.n_tc() == stored.bcs.n_tc()
                && query
                    .bcs
                    .0
                    .iter()
                    .zip(&stored.bcs.0)
                    .all(|(a, b)| (a - b).abs() <= ladder.k)
        }
    }
}

/// Compare two cases hierarchically and return the full breakdown.
///
/// Level 3 scores every leaf with its group's local function; level 2
/// folds each numeric group with the nearest-neighbor mean; level 1
/// joins the BAM term and the three group scores into the global score.
/// Symmetric in its case arguments.
pub fn case_similarity(
    query: &Case,
    stored: &Case,
    config: &SimilarityConfig,
) -> Result<SimilarityBreakdown, SimilarityError> {
    config.validate()?;
    if query.n_tc() != stored.n_tc() {
        return Err(SimilarityError::Incomparable {
            query_n_tc: query.n_tc(),
            stored_n_tc: stored.n_tc(),
        });
    }
    let query_vec = query.to_attribute_vector()?;
    let stored_vec = stored.to_attribute_vector()?;
    debug_assert_eq!(query_vec.len(), stored_vec.len());

    let mut warnings = Vec::new();
    let mut leaves = Vec::with_capacity(query_vec.len());
    let mut group_locals: BTreeMap<AttributeGroup, (Vec<f64>, Vec<f64>)> = BTreeMap::new();

    for ((id, qv), (sid, sv)) in query_vec.iter().zip(stored_vec.iter()) {
        debug_assert_eq!(id, sid);
        let local = match (qv, sv) {
            (LeafValue::Bam(a), LeafValue::Bam(b)) => exact_sim(a, b),
            (LeafValue::Number(a), LeafValue::Number(b)) => {
                score_numeric_leaf(*id, *a, *b, config, &mut warnings)?
            }
            _ => unreachable!("leaf kinds are fixed by the layout"),
        };
        leaves.push(LeafScore {
            id: id.to_string(),
            local,
        });
        let slot = group_locals.entry(id.group()).or_default();
        slot.0.push(local);
        slot.1.push(config.weights.leaf_weight(id));
    }

    let group_score = |group: AttributeGroup| -> Result<f64, SimilarityError> {
        let (locals, weights) = group_locals
            .get(&group)
            .ok_or_else(|| SimilarityError::InvalidConfig(format!("missing group {group:?}")))?;
        nn_global(locals, weights)
    };
    let groups = GroupScores {
        bam: group_score(AttributeGroup::Bam)?,
        bandwidth: group_score(AttributeGroup::Bandwidth)?,
        tolerance: group_score(AttributeGroup::Tolerance)?,
        measurement: group_score(AttributeGroup::Measurement)?,
    };

    let gated = !context_gate(
        &query.context,
        &stored.context,
        config.context_gate,
        config.ladder_k,
    );
    let global = if gated {
        0.0
    } else {
        nn_global(
            &[
                groups.bam,
                groups.bandwidth,
                groups.tolerance,
                groups.measurement,
            ],
            &[
                config.weights.bam,
                config.weights.bandwidth,
                config.weights.tolerance,
                config.weights.measurement,
            ],
        )?
    };

    Ok(SimilarityBreakdown {
        global,
        gated,
        groups,
        leaves,
        warnings,
    })
}

fn score_numeric_leaf(
    id: AttributeId,
    a: f64,
    b: f64,
    config: &SimilarityConfig,
    warnings: &mut Vec<String>,
) -> Result<f64, SimilarityError> {
    let function = config.functions.for_group(id.group());
    match function {
        LocalFunction::Exact => Ok(exact_sim(&a, &b)),
        LocalFunction::Ladder => Ok(ladder_sim(a, b, config.ladder_k)),
        LocalFunction::Linear => {
            let metric = match id {
                AttributeId::Bandwidth { .. } => "bandwidth",
                AttributeId::Tolerance { metric, .. } => metric.as_str(),
                AttributeId::Measurement { metric, .. } => metric.as_str(),
                AttributeId::Bam => unreachable!("bam leaves are categorical"),
            };
            let range = config.range_for(metric)?;
            for (side, v) in [("query", a), ("stored", b)] {
                if !range.contains(v) {
                    warnings.push(format!(
                        "{id}: {side} value {v} clamped into [{}, {}]",
                        range.min, range.max
                    ));
                }
            }
            linear_sim(a, b, range)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("degenerate value range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },
    #[error("locals/weights length mismatch: {locals} vs {weights}")]
    LengthMismatch { locals: usize, weights: usize },
    #[error("total weight must be positive")]
    ZeroWeight,
    #[error("non-finite input {value}")]
    NonFinite { value: f64 },
    #[error("cases are incomparable: {query_n_tc} vs {stored_n_tc} traffic classes")]
    Incomparable {
        query_n_tc: usize,
        stored_n_tc: usize,
    },
    #[error("invalid similarity configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Schema(#[from] crate::case::SchemaError),
}
