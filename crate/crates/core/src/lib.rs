//! Evaluation engine for EEG-based biometric verification.
//!
//! The crate covers the full verification pipeline for multichannel
//! EEG-like recordings: channel mapping and epoching ([`corpus`]), the
//! filtering and normalization chain ([`preprocess`]), handcrafted and
//! imported features ([`features`]), templates and scorers ([`matching`]),
//! trial enumeration under multi-session protocols ([`protocol`]) and
//! error-rate reporting ([`metrics`]). The [`cli`] module wires these into
//! the `eegauth` batch tool.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod protocol;

pub use error::{Error, Result};
