//! Partial variational auto-encoders for predicting student responses to
//! assessment items.
//!
//! Two model variants share one architecture and differ only in how items are
//! represented to the network:
//!
//! * **LENS** identifies items by a one-hot code over the item vocabulary.
//! * **Text-LENS** represents items by a vector derived from the item text
//!   (a built-in hashed bag-of-tokens featurizer, or precomputed vectors).
//!
//! The crate also contains a deterministic 3-PL IRT simulator for synthetic
//! item banks and student populations, seen/unseen item splits, the eight
//! seen/unseen × on/off-target evaluation conditions, and AUC reporting.

pub mod data;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{LensError, Result};
