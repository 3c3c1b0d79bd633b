//! Issue-tag triage for crisis-support conversations.
//!
//! The crate covers the decision and evaluation layer around a multi-label
//! scorer: corpus handling, lexicon triage, a trainable baseline scorer,
//! threshold policies, evaluation metrics, expert-consensus scoring and
//! token attributions.

pub mod attribution;
pub mod consensus;
pub mod corpus;
pub mod decision;
pub mod hash;
pub mod metrics;
pub mod scorer;
pub mod tags;
pub mod triage;

pub use tags::{IssueTag, TagSet, TAG_COUNT};
