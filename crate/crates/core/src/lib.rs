//! Unsupervised hierarchical image-quality triage.
//!
//! A conditional coupling-flow density model is fitted to multi-scale
//! features of high-quality images only. Its per-position log-likelihood maps
//! give each image a low-quality score, thresholded into outstanding versus
//! non-outstanding. Non-outstanding images are then split into gradable and
//! ungradable by clustering the flattened multi-scale likelihood maps after
//! PCA or NMF reduction.

mod binio;
pub mod checkpoint;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod fdr;
pub mod flow;
pub mod pipeline;
pub mod representation;
pub mod scoring;

pub use error::{Error, Result};
