//! Bandwidth allocation models for a single DS-TE link.
//!
//! One [`BamState`] tracks the active LSPs on a link and admits new
//! ones under the configured model:
//!
//! - **MAM** gives every traffic class a private cap; nothing is ever
//!   preempted or devolved.
//! - **RDM** nests the classes like Russian dolls — the allocation of
//!   classes 0..=c must fit inside `bcs[c]` — and lets a high-priority
//!   class preempt lower-priority LSPs that crowd its doll.
//! - **AllocTC-Sharing** keeps the RDM dolls as *rights* but lets a
//!   class opportunistically borrow idle bandwidth beyond them.
//!   Borrowed bandwidth is precarious: when a class later claims
//!   bandwidth it is entitled to, borrower LSPs of higher-priority
//!   classes are devolved (torn down, bandwidth returned) and
//!   lower-priority holders are preempted.
//!
//! TC0 is the highest priority throughout; `bcs` grows outward, so
//! `bcs[n-1]` plays the role of the link capacity for the nested
//! models. Preemption and devolution counters are attributed to the
//! class that *initiates* the reclamation, which is what keeps MAM's
//! counters at zero, RDM free of devolution, the lowest class free of
//! preemption, and the highest class free of devolution.

use serde::{Deserialize, Serialize};

use crate::case::{BamId, BandwidthConstraints, MeasurementSnapshot, TcIndex};

/// Slack for floating-point bandwidth comparisons.
pub(crate) const EPS: f64 = 1e-9;

/// One admitted label-switched path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lsp {
    pub id: String,
    pub tc: TcIndex,
    /// Reserved bandwidth in Mbps.
    pub bandwidth: f64,
    /// Simulation tick at which the LSP was admitted.
    pub admitted_at: u64,
    /// Portion of `bandwidth` drawn from other classes' pools
    /// (AllocTC-Sharing bookkeeping; 0 under MAM and RDM).
    pub borrowed: f64,
}

impl Lsp {
    /// Bandwidth the LSP holds by right of its own class.
    pub fn own(&self) -> f64 {
        self.bandwidth - self.borrowed
    }
}

/// Why a request was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    /// Larger than the whole link.
    Oversize,
    /// Would exceed the class's private cap (MAM).
    ClassCap,
    /// Cannot fit inside the nested constraints even after preempting
    /// every lower-priority LSP.
    DollBound,
    /// Not enough idle bandwidth to borrow peacefully.
    InsufficientIdle,
}

impl std::fmt::Display for BlockReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            BlockReason::Oversize => "request exceeds link capacity",
            BlockReason::ClassCap => "class cap exceeded",
            BlockReason::DollBound => "nested constraint cannot be satisfied",
            BlockReason::InsufficientIdle => "not enough idle bandwidth",
        };
        f.write_str(text)
    }
}

/// Result of one admission attempt. Victim lists are nonempty whenever
/// a variant carries them; `Reclamation` covers the (rare but real)
/// admissions that both preempt and devolve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AdmissionOutcome {
    Admitted {
        id: String,
    },
    AdmittedWithPreemption {
        id: String,
        preempted: Vec<String>,
    },
    AdmittedWithDevolution {
        id: String,
        devolved: Vec<String>,
    },
    AdmittedWithReclamation {
        id: String,
        preempted: Vec<String>,
        devolved: Vec<String>,
    },
    Blocked {
        reason: BlockReason,
    },
}

impl AdmissionOutcome {
    pub fn is_admitted(&self) -> bool {
        !matches!(self, AdmissionOutcome::Blocked { .. })
    }

    /// Id of the newly admitted LSP, if any.
    pub fn admitted_id(&self) -> Option<&str> {
        match self {
            AdmissionOutcome::Admitted { id }
            | AdmissionOutcome::AdmittedWithPreemption { id, .. }
            | AdmissionOutcome::AdmittedWithDevolution { id, .. }
            | AdmissionOutcome::AdmittedWithReclamation { id, .. } => Some(id),
            AdmissionOutcome::Blocked { .. } => None,
        }
    }

    /// Ids of LSPs torn down by this admission, preempted then devolved.
    pub fn victims(&self) -> Vec<&str> {
        match self {
            AdmissionOutcome::AdmittedWithPreemption { preempted, .. } => {
                preempted.iter().map(String::as_str).collect()
            }
            AdmissionOutcome::AdmittedWithDevolution { devolved, .. } => {
                devolved.iter().map(String::as_str).collect()
            }
            AdmissionOutcome::AdmittedWithReclamation {
                preempted,
                devolved,
                ..
            } => preempted.iter().chain(devolved).map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }
}

/// What a BAM switch did to the standing LSPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationReport {
    pub from: BamId,
    pub to: BamId,
    /// LSPs that no longer fit under the new model, in teardown order.
    /// Counted as neither preemptions nor devolutions.
    pub torn_down: Vec<Lsp>,
}

/// Per-class admission-control counters for the current measurement
/// window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCounters {
    pub requests: Vec<u64>,
    pub admitted: Vec<u64>,
    pub blocked: Vec<u64>,
    pub preemptions_initiated: Vec<u64>,
    pub devolutions_initiated: Vec<u64>,
}

impl WindowCounters {
    fn new(n_tc: usize) -> Self {
        WindowCounters {
            requests: vec![0; n_tc],
            admitted: vec![0; n_tc],
            blocked: vec![0; n_tc],
            preemptions_initiated: vec![0; n_tc],
            devolutions_initiated: vec![0; n_tc],
        }
    }

    fn reset(&mut self) {
        for vec in [
            &mut self.requests,
            &mut self.admitted,
            &mut self.blocked,
            &mut self.preemptions_initiated,
            &mut self.devolutions_initiated,
        ] {
            vec.iter_mut().for_each(|v| *v = 0);
        }
    }
}

/// The admission-control state of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BamState {
    model: BamId,
    bcs: BandwidthConstraints,
    capacity: f64,
    lsps: Vec<Lsp>,
    counters: WindowCounters,
    next_lsp_seq: u64,
}

impl BamState {
    pub fn new(
        model: BamId,
        bcs: BandwidthConstraints,
        capacity: f64,
    ) -> Result<Self, BamError> {
        validate_config(model, &bcs, capacity)?;
        let n_tc = bcs.n_tc();
        Ok(BamState {
            model,
            bcs,
            capacity,
            lsps: Vec::new(),
            counters: WindowCounters::new(n_tc),
            next_lsp_seq: 0,
        })
    }

    pub fn model(&self) -> BamId {
        self.model
    }

    pub fn bcs(&self) -> &BandwidthConstraints {
        &self.bcs
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn n_tc(&self) -> usize {
        self.bcs.n_tc()
    }

    pub fn active_lsps(&self) -> &[Lsp] {
        &self.lsps
    }

    pub fn counters(&self) -> &WindowCounters {
        &self.counters
    }

    /// Total reserved bandwidth of one class.
    pub fn alloc(&self, tc: TcIndex) -> f64 {
        self.lsps
            .iter()
            .filter(|l| l.tc == tc)
            .map(|l| l.bandwidth)
            .sum()
    }

    pub fn total_alloc(&self) -> f64 {
        self.lsps.iter().map(|l| l.bandwidth).sum()
    }

    fn own_by_class(&self) -> Vec<f64> {
        let mut own = vec![0.0; self.n_tc()];
        for lsp in &self.lsps {
            own[lsp.tc.0] += lsp.own();
        }
        own
    }

    /// Bandwidth class `c` could still claim by right: the room left in
    /// its doll after everyone's rightful usage.
    fn doll_headroom(&self, c: usize) -> f64 {
        let own = self.own_by_class();
        let used: f64 = own[..=c].iter().sum();
        self.bcs.0[c] - used
    }

    /// Try to admit an LSP of `bandwidth` Mbps for class `tc` at tick
    /// `now`. Counters update according to the outcome; victims of
    /// preemption or devolution are removed from the state.
    pub fn admit(
        &mut self,
        tc: TcIndex,
        bandwidth: f64,
        now: u64,
    ) -> Result<AdmissionOutcome, BamError> {
        if tc.0 >= self.n_tc() {
            return Err(BamError::InvalidRequest(format!(
                "{tc} out of range for {} classes",
                self.n_tc()
            )));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(BamError::InvalidRequest(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        let c = tc.0;
        self.counters.requests[c] += 1;
        if bandwidth > self.capacity + EPS {
            self.counters.blocked[c] += 1;
            return Ok(AdmissionOutcome::Blocked {
                reason: BlockReason::Oversize,
            });
        }

        let outcome = match self.model {
            BamId::Mam => self.admit_mam(tc, bandwidth, now),
            BamId::Rdm | BamId::Atcs => self.admit_nested(tc, bandwidth, now),
        };
        match &outcome {
            AdmissionOutcome::Blocked { .. } => self.counters.blocked[c] += 1,
            other => {
                self.counters.admitted[c] += 1;
                if let AdmissionOutcome::AdmittedWithPreemption { preempted, .. }
                | AdmissionOutcome::AdmittedWithReclamation { preempted, .. } = other
                {
                    self.counters.preemptions_initiated[c] += preempted.len() as u64;
                }
                if let AdmissionOutcome::AdmittedWithDevolution { devolved, .. }
                | AdmissionOutcome::AdmittedWithReclamation { devolved, .. } = other
                {
                    self.counters.devolutions_initiated[c] += devolved.len() as u64;
                }
            }
        }
        debug_assert!(self.check_invariants().is_empty());
        Ok(outcome)
    }

    fn admit_mam(&mut self, tc: TcIndex, bandwidth: f64, now: u64) -> AdmissionOutcome {
        if self.alloc(tc) + bandwidth > self.bcs.0[tc.0] + EPS {
            return AdmissionOutcome::Blocked {
                reason: BlockReason::ClassCap,
            };
        }
        if self.total_alloc() + bandwidth > self.capacity + EPS {
            return AdmissionOutcome::Blocked {
                reason: BlockReason::InsufficientIdle,
            };
        }
        let id = self.place(tc, bandwidth, now);
        AdmissionOutcome::Admitted { id }
    }

    /// Shared RDM/ATC-S admission. A request that fits inside its
    /// class's rightful doll room may reclaim (preempt lower classes
    /// crowding the dolls, devolve higher-class borrowers holding the
    /// capacity); a larger request may, under ATC-S only, borrow idle
    /// bandwidth peacefully.
    fn admit_nested(&mut self, tc: TcIndex, bandwidth: f64, now: u64) -> AdmissionOutcome {
        let c = tc.0;
        if bandwidth <= self.doll_headroom(c) + EPS {
            return self.admit_by_rights(tc, bandwidth, now);
        }
        if self.model == BamId::Atcs {
            // Borrowing is opportunistic: idle bandwidth only, no
            // reclamation on behalf of a request beyond its rights.
            if bandwidth <= self.capacity - self.total_alloc() + EPS {
                let id = self.place(tc, bandwidth, now);
                return AdmissionOutcome::Admitted { id };
            }
            return AdmissionOutcome::Blocked {
                reason: BlockReason::InsufficientIdle,
            };
        }
        AdmissionOutcome::Blocked {
            reason: BlockReason::DollBound,
        }
    }

    fn admit_by_rights(&mut self, tc: TcIndex, bandwidth: f64, now: u64) -> AdmissionOutcome {
        let c = tc.0;
        let mut work = self.lsps.clone();
        let mut preempted = Vec::new();
        let mut devolved = Vec::new();

        // Doll repair: while some doll containing the request is
        // overfull counting rightful usage, preempt the lowest-priority,
        // most recently admitted LSP inside that doll.
        loop {
            reconform(&mut work, self.model, &self.bcs.0);
            let Some(doll) = first_violated_doll(&work, &self.bcs.0, c, bandwidth) else {
                break;
            };
            let victim = work
                .iter()
                .enumerate()
                .filter(|(_, l)| l.tc.0 > c && l.tc.0 <= doll)
                .max_by_key(|(i, l)| (l.tc.0, l.admitted_at, *i))
                .map(|(i, _)| i);
            match victim {
                Some(i) => preempted.push(work.remove(i).id),
                // Unreachable when the headroom test admitted us, but
                // never panic on float edge cases.
                None => {
                    return AdmissionOutcome::Blocked {
                        reason: BlockReason::DollBound,
                    }
                }
            }
        }

        // Capacity repair: dolls hold, so any remaining shortfall is
        // held by borrowers. Lower-priority borrowers are preempted,
        // higher-priority ones devolved, lowest priority first.
        loop {
            let total: f64 = work.iter().map(|l| l.bandwidth).sum();
            if bandwidth <= self.capacity - total + EPS {
                break;
            }
            reconform(&mut work, self.model, &self.bcs.0);
            let victim = work
                .iter()
                .enumerate()
                .filter(|(_, l)| l.tc.0 != c && l.borrowed > EPS)
                .max_by_key(|(i, l)| (l.tc.0, l.admitted_at, *i))
                .map(|(i, _)| i);
            match victim {
                Some(i) => {
                    let lsp = work.remove(i);
                    if lsp.tc.0 > c {
                        preempted.push(lsp.id);
                    } else {
                        devolved.push(lsp.id);
                    }
                }
                None => {
                    return AdmissionOutcome::Blocked {
                        reason: BlockReason::InsufficientIdle,
                    }
                }
            }
        }

        self.lsps = work;
        let id = self.place(tc, bandwidth, now);
        match (preempted.is_empty(), devolved.is_empty()) {
            (true, true) => AdmissionOutcome::Admitted { id },
            (false, true) => AdmissionOutcome::AdmittedWithPreemption { id, preempted },
            (true, false) => AdmissionOutcome::AdmittedWithDevolution { id, devolved },
            (false, false) => AdmissionOutcome::AdmittedWithReclamation {
                id,
                preempted,
                devolved,
            },
        }
    }

    /// Append the new LSP and refresh the borrow labels.
    fn place(&mut self, tc: TcIndex, bandwidth: f64, now: u64) -> String {
        let id = format!("lsp-{:06}", self.next_lsp_seq);
        self.next_lsp_seq += 1;
        self.lsps.push(Lsp {
            id: id.clone(),
            tc,
            bandwidth,
            admitted_at: now,
            borrowed: 0.0,
        });
        reconform(&mut self.lsps, self.model, &self.bcs.0);
        id
    }

    /// Tear down an LSP at the end of its holding time. Bandwidth
    /// (including any borrowed share) returns to the pools; no counters
    /// move.
    pub fn release(&mut self, lsp_id: &str) -> Result<Lsp, BamError> {
        let index = self
            .lsps
            .iter()
            .position(|l| l.id == lsp_id)
            .ok_or_else(|| BamError::UnknownLsp {
                id: lsp_id.to_string(),
            })?;
        let lsp = self.lsps.remove(index);
        reconform(&mut self.lsps, self.model, &self.bcs.0);
        debug_assert!(self.check_invariants().is_empty());
        Ok(lsp)
    }

    /// Adopt a new model and/or BC vector, re-validating the standing
    /// LSPs in priority order (TC0 first, oldest first). LSPs that no
    /// longer fit are torn down and reported as migration losses; they
    /// count as neither preemptions nor devolutions. On error the state
    /// is unchanged.
    pub fn switch_bam(
        &mut self,
        new_model: BamId,
        new_bcs: Option<BandwidthConstraints>,
    ) -> Result<MigrationReport, BamError> {
        let bcs = new_bcs.unwrap_or_else(|| self.bcs.clone());
        if bcs.n_tc() != self.n_tc() {
            return Err(BamError::InvalidConfig(format!(
                "cannot change the class count from {} to {}",
                self.n_tc(),
                bcs.n_tc()
            )));
        }
        validate_config(new_model, &bcs, self.capacity)?;

        let mut ordered: Vec<(usize, Lsp)> = self.lsps.drain(..).enumerate().collect();
        ordered.sort_by_key(|(i, l)| (l.tc.0, l.admitted_at, *i));
        let mut kept: Vec<Lsp> = Vec::with_capacity(ordered.len());
        let mut torn_down = Vec::new();
        for (_, lsp) in ordered {
            if fits_in_order(&kept, new_model, &bcs.0, self.capacity, lsp.tc.0, lsp.bandwidth) {
                kept.push(lsp);
            } else {
                torn_down.push(lsp);
            }
        }
        let report = MigrationReport {
            from: self.model,
            to: new_model,
            torn_down,
        };
        self.model = new_model;
        self.bcs = bcs;
        self.lsps = kept;
        reconform(&mut self.lsps, self.model, &self.bcs.0);
        debug_assert!(self.check_invariants().is_empty());
        Ok(report)
    }

    /// End-of-window measurement snapshot, all values in percent and
    /// clamped to [0, 100]. Preemption and devolution rates are
    /// normalized by the window's total admissions.
    pub fn metrics(&self, window_id: u64) -> MeasurementSnapshot {
        let n = self.n_tc();
        let admitted_total: u64 = self.counters.admitted.iter().sum();
        let norm = admitted_total.max(1) as f64;
        // Adding zero collapses IEEE negative zero (an empty f64 sum is
        // -0.0) so idle classes report exactly 0 instead of "-0.00".
        let pct = |v: f64| v.clamp(0.0, 100.0) + 0.0;
        let mut snapshot = MeasurementSnapshot {
            utilization: Vec::with_capacity(n),
            blocking: Vec::with_capacity(n),
            preemption: Vec::with_capacity(n),
            devolution: Vec::with_capacity(n),
            window_id,
        };
        for c in 0..n {
            let requests = self.counters.requests[c];
            let blocking = if requests == 0 {
                0.0
            } else {
                100.0 * self.counters.blocked[c] as f64 / requests as f64
            };
            snapshot.blocking.push(pct(blocking));
            snapshot
                .utilization
                .push(pct(100.0 * self.alloc(TcIndex(c)) / self.bcs.0[c]));
            snapshot
                .preemption
                .push(pct(100.0 * self.counters.preemptions_initiated[c] as f64 / norm));
            snapshot
                .devolution
                .push(pct(100.0 * self.counters.devolutions_initiated[c] as f64 / norm));
        }
        snapshot
    }

    /// Zero the per-window counters at a window boundary.
    pub fn reset_window_counters(&mut self) {
        self.counters.reset();
    }

    /// Check every structural invariant; returns human-readable
    /// violations (empty when healthy).
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let n = self.n_tc();
        let total = self.total_alloc();
        if total > self.capacity + 1e-6 {
            problems.push(format!(
                "conservation: total allocation {total} exceeds capacity {}",
                self.capacity
            ));
        }
        let alloc: Vec<f64> = (0..n).map(|c| self.alloc(TcIndex(c))).collect();
        match self.model {
            BamId::Mam => {
                for c in 0..n {
                    if alloc[c] > self.bcs.0[c] + 1e-6 {
                        problems.push(format!("mam: class {c} over its cap"));
                    }
                }
            }
            BamId::Rdm => {
                let mut cum = 0.0;
                for c in 0..n {
                    cum += alloc[c];
                    if cum > self.bcs.0[c] + 1e-6 {
                        problems.push(format!("rdm: doll {c} overfull"));
                    }
                }
            }
            BamId::Atcs => {
                let own = self.own_by_class();
                let mut cum = 0.0;
                for c in 0..n {
                    cum += own[c];
                    if cum > self.bcs.0[c] + 1e-6 {
                        problems.push(format!("atcs: rightful doll {c} overfull"));
                    }
                }
                if self
                    .lsps
                    .iter()
                    .any(|l| l.tc.0 == n - 1 && l.borrowed > 1e-6)
                {
                    problems.push("atcs: the lowest class has no pool to borrow from".into());
                }
            }
        }
        for lsp in &self.lsps {
            if lsp.borrowed < -EPS || lsp.borrowed > lsp.bandwidth + EPS {
                problems.push(format!("{}: borrowed outside [0, bandwidth]", lsp.id));
            }
            if self.model != BamId::Atcs && lsp.borrowed > EPS {
                problems.push(format!("{}: borrowing under {}", lsp.id, self.model));
            }
        }
        // Labels must be canonical: recomputing them changes nothing.
        let mut relabeled = self.lsps.clone();
        reconform(&mut relabeled, self.model, &self.bcs.0);
        for (a, b) in self.lsps.iter().zip(&relabeled) {
            if (a.borrowed - b.borrowed).abs() > 1e-6 {
                problems.push(format!("{}: stale borrow label", a.id));
            }
        }
        if self.model == BamId::Mam
            && (self.counters.preemptions_initiated.iter().any(|&v| v != 0)
                || self.counters.devolutions_initiated.iter().any(|&v| v != 0))
        {
            problems.push("mam: reclamation counters must stay zero".into());
        }
        if self.model == BamId::Rdm && self.counters.devolutions_initiated.iter().any(|&v| v != 0)
        {
            problems.push("rdm: devolution counters must stay zero".into());
        }
        if self.counters.preemptions_initiated[n - 1] != 0 {
            problems.push("the lowest class cannot preempt".into());
        }
        if self.model != BamId::Mam && self.counters.devolutions_initiated[0] != 0 {
            problems.push("the highest class cannot devolve".into());
        }
        problems
    }
}

/// Recompute every LSP's own/borrowed split. Rightful doll room is
/// granted greedily by priority (TC0 first) and admission order within
/// a class, so borrowing concentrates on the lowest-priority, most
/// recent LSPs; under MAM and RDM every LSP is fully its own.
fn reconform(lsps: &mut [Lsp], model: BamId, bcs: &[f64]) {
    if model != BamId::Atcs {
        for lsp in lsps {
            lsp.borrowed = 0.0;
        }
        return;
    }
    let mut cum = 0.0;
    for c in 0..bcs.len() {
        let mut room = (bcs[c] - cum).max(0.0);
        let mut indices: Vec<usize> = (0..lsps.len()).filter(|&i| lsps[i].tc.0 == c).collect();
        indices.sort_by_key(|&i| (lsps[i].admitted_at, i));
        for i in indices {
            let own = if room + EPS >= lsps[i].bandwidth {
                lsps[i].bandwidth
            } else {
                room
            };
            lsps[i].borrowed = lsps[i].bandwidth - own;
            room -= own;
            cum += own;
        }
    }
}

/// Index of the innermost doll that would overflow rightful usage if a
/// class-`c` request of `bandwidth` were granted by rights.
fn first_violated_doll(lsps: &[Lsp], bcs: &[f64], c: usize, bandwidth: f64) -> Option<usize> {
    let mut own = vec![0.0; bcs.len()];
    for lsp in lsps {
        own[lsp.tc.0] += lsp.own();
    }
    let mut cum = 0.0;
    for d in 0..bcs.len() {
        cum += own[d];
        if d >= c && cum + bandwidth > bcs[d] + EPS {
            return Some(d);
        }
    }
    None
}

/// Would an LSP fit without any reclamation? Only valid while placing
/// LSPs in priority order (all placed classes <= `c`), which is how
/// BAM-switch migration proceeds.
fn fits_in_order(
    placed: &[Lsp],
    model: BamId,
    bcs: &[f64],
    capacity: f64,
    c: usize,
    bandwidth: f64,
) -> bool {
    let total: f64 = placed.iter().map(|l| l.bandwidth).sum();
    match model {
        BamId::Mam => {
            let class: f64 = placed
                .iter()
                .filter(|l| l.tc.0 == c)
                .map(|l| l.bandwidth)
                .sum();
            class + bandwidth <= bcs[c] + EPS && total + bandwidth <= capacity + EPS
        }
        BamId::Rdm => total + bandwidth <= bcs[c] + EPS,
        BamId::Atcs => total + bandwidth <= capacity + EPS,
    }
}

fn validate_config(
    model: BamId,
    bcs: &BandwidthConstraints,
    capacity: f64,
) -> Result<(), BamError> {
    if !(capacity > 0.0) || !capacity.is_finite() {
        return Err(BamError::InvalidConfig(format!(
            "capacity must be positive and finite, got {capacity}"
        )));
    }
    if bcs.n_tc() == 0 {
        return Err(BamError::InvalidConfig(
            "at least one bandwidth constraint is required".into(),
        ));
    }
    for (i, bc) in bcs.0.iter().enumerate() {
        if !(*bc > 0.0) || !bc.is_finite() {
            return Err(BamError::InvalidConfig(format!(
                "bc[{i}] must be positive and finite, got {bc}"
            )));
        }
    }
    if model != BamId::Mam {
        if !bcs.is_nondecreasing() {
            return Err(BamError::InvalidConfig(format!(
                "{model} needs nondecreasing constraints (dolls nest outward)"
            )));
        }
        let outer = *bcs.0.last().expect("nonempty");
        if (outer - capacity).abs() > EPS {
            return Err(BamError::InvalidConfig(format!(
                "{model} needs the outermost constraint ({outer}) to equal the link capacity ({capacity})"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum BamError {
    #[error("invalid BAM configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid admission request: {0}")]
    InvalidRequest(String),
    #[error("no active LSP {id:?}")]
    UnknownLsp { id: String },
}
