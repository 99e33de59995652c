//! Case-based reasoning over bandwidth allocation models (BAMs) for a
//! single DS-TE link.
//!
//! The crate couples two halves:
//!
//! - A CBR engine: case schema ([`case`]), local/global similarity
//!   functions ([`similarity`]), positive/negative case stores
//!   ([`store`]) and the Retrieve/Reuse/Revise/Retain cycle ([`engine`]).
//! - A link simulator: LSP admission under MAM, RDM and
//!   AllocTC-Sharing ([`bam`]) plus a seeded scenario runner with
//!   windowed measurement and alert detection ([`sim`]).
//!
//! An alert (a tolerance limit violated by windowed measurements)
//! produces a *current case*; the engine retrieves similar past cases,
//! probes candidate solutions against a cloned simulation, and retains
//! the outcome. Solutions that worked go to the positive store,
//! failures to the negative store where they veto re-proposal.

pub mod bam;
pub mod case;
pub mod engine;
pub mod sim;
pub mod similarity;
pub mod store;

pub use case::{
    AttributeId, AttributeVector, BamId, BandwidthConstraints, Case, CaseOutcome, ContextInfo,
    MeasurementSnapshot, ProblemDescriptor, ProblemKind, Solution, TcIndex, ToleranceProfile,
};
pub use similarity::{ContextGateMode, SimilarityBreakdown, SimilarityConfig};
pub use store::{CaseStore, RetrievalResult};
