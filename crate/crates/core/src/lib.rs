//! weakcanopy — training and evaluating a tree-cover segmenter from
//! incomplete point labels and crowd-sourced background polygons.
//!
//! The pipeline runs ingest → label generation → objectness → training →
//! evaluation → reporting, with five ablation scenarios controlling which
//! learning masks select pixels for the supervised and objectness losses.
//! A synthetic-scene generator provides desk-scale data with complete
//! ground truth, so the whole pipeline is testable without external data.

pub mod eval;
pub mod grid;
pub mod io;
pub mod labelgen;
pub mod losses;
pub mod maskgen;
pub mod model;
pub mod objectness;
pub mod util;
pub mod vector;
