//! Driving tasks as plain text.
//!
//! Codecs that turn trajectories, 3D boxes, and lane polylines into text
//! targets and back; open-loop planning and perception metrics; candidate
//! trajectory aggregation; a dataset-size-proportional task mixture
//! sampler; and a heuristic chain-of-thought labeler. A seeded synthetic
//! scenario generator with baseline planners drives everything end to end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod cli;
pub mod codec;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod mixture;
pub mod perception;
pub mod planning;
pub mod rationale;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
