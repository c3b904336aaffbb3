//! Spatio-temporal action tube engine.
//!
//! Turns per-frame action detections into scored, pruned and temporally
//! trimmed action tubes, and evaluates them against ground truth. Every
//! module is pure computation over in-memory values; file formats, the
//! command line and thread pools live in the `actube` companion crate.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `serde` feature to
//! derive serialization for the domain types.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
pub mod eval;
pub mod footprint;
pub mod fusion;
pub mod geometry;
pub mod linalg;
pub mod localize;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{iou, nms, temporal_iou, BoundingBox, FrameInterval, Point};
pub use model::{
    st_iou, ClassId, Detection, GroundTruthTube, Located, Proposal, Source, SpatioTemporal,
    Tube,
};
