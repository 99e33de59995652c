//! Case retention, retrieval, and persistence.
//!
//! The store keeps every retained case — successes and failures — in
//! retention order. Retrieval scores the whole store against a query
//! case, splits the hits by outcome, and orders them best-first, so a
//! caller can walk candidates in preference order while the negative
//! hits veto solutions that already failed under similar conditions.
//!
//! On disk a store is a directory: `positive.jsonl` and
//! `negative.jsonl` with one case per line, plus a small `meta.json`
//! carrying the schema version and the retention sequence counter.
//! Load errors point at the offending file and line.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case::{Case, CaseOutcome, SchemaError, Solution};
use crate::similarity::{case_similarity, SimilarityBreakdown, SimilarityConfig, SimilarityError};

/// On-disk schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

const POSITIVE_FILE: &str = "positive.jsonl";
const NEGATIVE_FILE: &str = "negative.jsonl";
const META_FILE: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreMeta {
    schema_version: u32,
    next_sequence: u64,
}

/// In-memory case base.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseStore {
    cases: Vec<Case>,
    next_sequence: u64,
}

/// One retrieved case together with the score that ranked it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub case: Case,
    pub breakdown: SimilarityBreakdown,
}

/// Outcome of scoring the store against a query case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// Positive-outcome cases at or above the threshold, best first,
    /// at most `k` of them.
    pub matches: Vec<ScoredCase>,
    /// Negative-outcome cases at or above the threshold, best first.
    /// These never rank as remedies; they exist to veto solutions.
    pub negative: Vec<ScoredCase>,
    /// How many stored cases were scored at all.
    pub considered: usize,
    /// Id of the query case this result answers.
    pub query_id: String,
    /// Threshold that was applied.
    pub theta: f64,
    /// Requested cap on ranked matches.
    pub k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RetrievalResult {
    /// Best positive match, if any cleared the threshold.
    pub fn best(&self) -> Option<&ScoredCase> {
        self.matches.first()
    }
}

impl CaseStore {
    pub fn new() -> Self {
        CaseStore::default()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Cases in retention order.
    pub fn iter(&self) -> impl Iterator<Item = &Case> {
        self.cases.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.id == id)
    }

    /// Sequence number the next retained case will receive. Doubles as
    /// a watermark: every stored case has `retained_at` strictly below
    /// it.
    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    /// The store as it stood when the watermark was the next sequence:
    /// only cases retained before it, and retention numbering picking
    /// up exactly from the watermark. This is what makes recorded
    /// reasoning cycles replayable after the store has grown.
    pub fn snapshot_before(&self, watermark: u64) -> CaseStore {
        CaseStore {
            cases: self
                .cases
                .iter()
                .filter(|c| c.retained_at < watermark)
                .cloned()
                .collect(),
            next_sequence: watermark,
        }
    }

    /// Retain a resolved case, assigning its final id and sequence.
    ///
    /// The case must carry a solution and a positive or negative
    /// outcome; whatever provisional id the caller used is replaced by
    /// `case-NNNNNN` so ids stay unique and deterministic across runs.
    pub fn retain(&mut self, mut case: Case) -> Result<String, StoreError> {
        if case.outcome == CaseOutcome::Unresolved {
            return Err(StoreError::UnresolvedCase { id: case.id });
        }
        case.retained_at = self.next_sequence;
        case.id = format!("case-{:06}", self.next_sequence);
        let violations = case.validate();
        if !violations.is_empty() {
            return Err(SchemaError::InvalidCase {
                id: case.id,
                violations,
            }
            .into());
        }
        let id = case.id.clone();
        self.next_sequence += 1;
        self.cases.push(case);
        Ok(id)
    }

    /// Score every stored case against the query and split the hits by
    /// outcome. At most `k` positive matches are returned, best first;
    /// ties prefer the most recently retained case, then the smaller
    /// id. Stored cases that cannot be compared (e.g. a different
    /// traffic-class count) are skipped with a warning rather than
    /// failing the whole retrieval.
    pub fn retrieve(
        &self,
        query: &Case,
        config: &SimilarityConfig,
        k: usize,
    ) -> Result<RetrievalResult, StoreError> {
        config.validate()?;
        if k == 0 {
            return Err(StoreError::ZeroLimit);
        }
        let mut result = RetrievalResult {
            matches: Vec::new(),
            negative: Vec::new(),
            considered: 0,
            query_id: query.id.clone(),
            theta: config.theta,
            k,
            warnings: Vec::new(),
        };
        for stored in &self.cases {
            let breakdown = match case_similarity(query, stored, config) {
                Ok(b) => b,
                Err(SimilarityError::Incomparable { .. }) => {
                    result
                        .warnings
                        .push(format!("skipped {}: different traffic-class count", stored.id));
                    continue;
                }
                Err(other) => return Err(other.into()),
            };
            result.considered += 1;
            result.warnings.extend(
                breakdown
                    .warnings
                    .iter()
                    .map(|w| format!("{}: {w}", stored.id)),
            );
            if breakdown.global < config.theta {
                continue;
            }
            let scored = ScoredCase {
                case: stored.clone(),
                breakdown,
            };
            match stored.outcome {
                CaseOutcome::Positive => result.matches.push(scored),
                CaseOutcome::Negative => result.negative.push(scored),
                CaseOutcome::Unresolved => unreachable!("retain admits only resolved cases"),
            }
        }
        let best_first = |a: &ScoredCase, b: &ScoredCase| {
            b.breakdown
                .global
                .total_cmp(&a.breakdown.global)
                .then(b.case.retained_at.cmp(&a.case.retained_at))
                .then(a.case.id.cmp(&b.case.id))
        };
        result.matches.sort_by(best_first);
        result.matches.truncate(k);
        result.negative.sort_by(best_first);
        Ok(result)
    }

    /// Has a solution already failed under conditions similar to the
    /// query? Returns the id of the first vetoing negative case: one
    /// whose similarity clears the threshold *and* whose solution takes
    /// the same action.
    pub fn is_negative_match(
        &self,
        query: &Case,
        proposal: &Solution,
        config: &SimilarityConfig,
    ) -> Result<Option<String>, StoreError> {
        // The veto must see every negative hit, so no match limit here.
        let result = self.retrieve(query, config, usize::MAX)?;
        Ok(result
            .negative
            .iter()
            .find(|scored| {
                scored
                    .case
                    .solution
                    .as_ref()
                    .is_some_and(|s| s.same_action(proposal))
            })
            .map(|scored| scored.case.id.clone()))
    }

    /// Write the store to `dir` (created if missing) as
    /// `positive.jsonl` + `negative.jsonl` + `meta.json`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for case in &self.cases {
            let mut line = serde_json::to_vec(case).map_err(|source| StoreError::Encode {
                id: case.id.clone(),
                source,
            })?;
            line.push(b'\n');
            match case.outcome {
                CaseOutcome::Negative => negative.extend_from_slice(&line),
                _ => positive.extend_from_slice(&line),
            }
        }
        fs::write(dir.join(POSITIVE_FILE), positive)?;
        fs::write(dir.join(NEGATIVE_FILE), negative)?;
        let meta = StoreMeta {
            schema_version: SCHEMA_VERSION,
            next_sequence: self.next_sequence,
        };
        let mut meta_file = fs::File::create(dir.join(META_FILE))?;
        serde_json::to_writer_pretty(&mut meta_file, &meta).map_err(|source| StoreError::Encode {
            id: META_FILE.into(),
            source,
        })?;
        meta_file.write_all(b"\n")?;
        Ok(())
    }

    /// Load a store previously written by [`CaseStore::save`]. A
    /// missing case file is an empty collection; a missing `meta.json`
    /// is an error (it is what marks a directory as a store).
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let meta_path = dir.join(META_FILE);
        let meta_bytes = fs::read(&meta_path).map_err(|source| StoreError::MissingFile {
            path: meta_path.display().to_string(),
            source,
        })?;
        let meta: StoreMeta =
            serde_json::from_slice(&meta_bytes).map_err(|source| StoreError::Meta { source })?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(StoreError::UnsupportedSchema {
                found: meta.schema_version,
            });
        }

        let mut cases = Vec::new();
        let mut seen_ids = BTreeSet::new();
        for (file, expected) in [
            (POSITIVE_FILE, CaseOutcome::Positive),
            (NEGATIVE_FILE, CaseOutcome::Negative),
        ] {
            read_case_file(dir, file, expected, &meta, &mut seen_ids, &mut cases)?;
        }
        // The two files interleave in retention order.
        cases.sort_by_key(|c| c.retained_at);
        Ok(CaseStore {
            cases,
            next_sequence: meta.next_sequence,
        })
    }
}

/// Read one JSONL case file into `cases`, enforcing the per-file
/// outcome, schema validity, watermark, and id uniqueness. A missing
/// file contributes nothing.
fn read_case_file(
    dir: &Path,
    file: &'static str,
    expected: CaseOutcome,
    meta: &StoreMeta,
    seen_ids: &mut BTreeSet<String>,
    cases: &mut Vec<Case>,
) -> Result<(), StoreError> {
    let path = dir.join(file);
    let handle = match fs::File::open(&path) {
        Ok(handle) => handle,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(source) => {
            return Err(StoreError::MissingFile {
                path: path.display().to_string(),
                source,
            })
        }
    };
    for (index, line) in BufReader::new(handle).lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: Case = serde_json::from_str(&line).map_err(|source| StoreError::Parse {
            file,
            line: line_no,
            source,
        })?;
        let invalid = |id: String, violations: Vec<String>| StoreError::InvalidStoredCase {
            file,
            line: line_no,
            id,
            violations,
        };
        let violations = case.validate();
        if !violations.is_empty() {
            return Err(invalid(
                case.id,
                violations.iter().map(|v| v.to_string()).collect(),
            ));
        }
        if case.outcome != expected {
            return Err(invalid(
                case.id,
                vec![format!(
                    "outcome: {:?} case stored in {file}",
                    case.outcome
                )],
            ));
        }
        if case.retained_at >= meta.next_sequence {
            return Err(invalid(
                case.id.clone(),
                vec![format!(
                    "retained_at: sequence {} is not below next_sequence {}",
                    case.retained_at, meta.next_sequence
                )],
            ));
        }
        if !seen_ids.insert(case.id.clone()) {
            return Err(invalid(case.id, vec!["id: duplicate case id".into()]));
        }
        cases.push(case);
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot retain an unresolved case {id:?}")]
    UnresolvedCase { id: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("store file {path} is unreadable")]
    MissingFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("meta.json is malformed")]
    Meta {
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported store schema version {found} (this build reads {SCHEMA_VERSION})")]
    UnsupportedSchema { found: u32 },
    #[error("retrieval limit k must be >= 1")]
    ZeroLimit,
    #[error("{file} line {line} is malformed")]
    Parse {
        file: &'static str,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file} line {line}: case {id:?} is invalid: {violations:?}")]
    InvalidStoredCase {
        file: &'static str,
        line: usize,
        id: String,
        violations: Vec<String>,
    },
    #[error("cannot encode {id}")]
    Encode {
        id: String,
        #[source]
        source: serde_json::Error,
    },
}
