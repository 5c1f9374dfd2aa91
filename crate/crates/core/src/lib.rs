//! Core of a self-hosted platform for building a parallel corpus with a
//! community of translators and reviewers.

pub mod clock;
pub mod domain;
pub mod ledger;
pub mod store;
pub mod analytics;
pub mod credentials;
pub mod workflow;
pub mod spectrum;
pub mod invariants;
