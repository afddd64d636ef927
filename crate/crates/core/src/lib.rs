//! Numerical toolkit for measuring and injecting semantics into frozen
//! vision-encoder features.
//!
//! - [`probe`]: linear probing of global features (softmax cross-entropy, AdamW).
//! - [`matcher`]: training-free in-context instance segmentation by matching
//!   proposal features against reference prototypes.
//! - [`eval`]: COCO-protocol AP/AR for boxes and masks, with base/novel splits.
//! - [`viz`]: exact t-SNE and silhouette separability scores.
//! - [`store`]: the binary and JSON file formats shared by every stage.
//! - [`synthetic`]: seeded fixture generators and brute-force reference oracles.

pub mod error;
pub mod eval;
pub mod matcher;
pub mod probe;
pub mod rle;
pub mod store;
pub mod synthetic;
pub mod viz;

pub use error::{Error, Result};
pub use rle::{Bitmask, RleMask};
