//! Segmentation of epicardial and mediastinal fat in cardiac CT.
//!
//! The pipeline windows HU slices to the fat range, registers each patient
//! to a probabilistic atlas of the retrosternal area with weighted mutual
//! information, extracts per-pixel texture features, classifies each pixel
//! with three one-vs-rest models and fuses their decisions into one label.

pub mod atlas;
pub mod classify;
pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod io;
pub mod labels;
pub mod phantom;
pub mod pipeline;
pub mod registration;

pub use error::{Error, Result};
