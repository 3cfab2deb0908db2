//! Flat-file dataset storage: JSON-lines manifests, JSON label files and an
//! append-only correction log.

mod labels;
mod manifest;
mod store;

pub use labels::{LabelUnit, Labels, UnitKind, UnitRef};
pub use manifest::{load_manifest, save_manifest, SongRecord, SongStatus};
pub use store::{replay, AuditEntry, AuditEvent, CorrectionOutcome, Store, AUDIT_FILE};
