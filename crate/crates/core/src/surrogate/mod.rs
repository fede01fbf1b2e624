//! Sequence-space surrogate modelling and the local-enumeration BO loop.

pub mod acquisition;
pub mod fingerprint;
pub mod gp;
pub mod lebo;
pub mod levenshtein;

pub use acquisition::{log_ei, log_ei_gaussian};
pub use fingerprint::{fingerprint, tanimoto, Fingerprint};
pub use gp::{EvalRecord, GpModel};
pub use lebo::{lebo, LeboOutcome, LeboParams};
pub use levenshtein::{levenshtein, within};
