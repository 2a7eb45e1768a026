//! The book chapters from `book/src`, mounted as module documentation so
//! `cargo test --doc` compiles and runs every code snippet in the guide.
//! mdbook renders the same files, so the book cannot drift from the crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/float-formats.md")]
pub mod float_formats {}

#[doc = include_str!("../../../book/src/distance-kernels.md")]
pub mod distance_kernels {}

#[doc = include_str!("../../../book/src/mixed-precision.md")]
pub mod mixed_precision {}

#[doc = include_str!("../../../book/src/kmeans.md")]
pub mod kmeans_modes {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod quality_metrics {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
