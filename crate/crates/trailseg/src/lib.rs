//! Off-road terrain segmentation post-processing toolkit.
//!
//! Downstream of a semantic segmentation network, this crate pools
//! fine-grained dataset classes into four categories (sky, traversable,
//! non-traversable, obstacle), clusters the colors of the traversable
//! region into pools, labels each pool with a surface sub-class (grass,
//! mud, puddle, ...), composites the result into an annotated render, and
//! evaluates predictions with per-class IoU / mIoU plus a throughput
//! harness.
//!
//! Modules map onto the pipeline:
//!
//! - [`schema`]: class taxonomies, palettes, fine-to-pooled mapping
//! - [`mask`] / [`imgio`] / [`manifest`]: raster ingest and dataset tooling
//! - [`kmeans`]: seeded, deterministic color clustering of the RoI
//! - [`classify`]: sub-class labeling of color pools
//! - [`compose`]: final annotated output
//! - [`metrics`]: confusion matrix, IoU/mIoU, throughput records
//! - [`pipeline`]: batch drivers tying the stages together
//!
//! Built with a rayon-backed data-parallel core (`parallel` feature,
//! enabled by default); disabling it falls back to sequential loops with
//! bit-identical results.

pub mod classify;
pub mod color;
pub mod compose;
pub mod error;
pub mod imgio;
pub mod kmeans;
pub mod manifest;
pub mod mask;
pub mod metrics;
mod parallel;
pub mod pipeline;
pub mod schema;
pub mod synth;

pub use error::{Error, Result};
pub use parallel::effective_jobs;
