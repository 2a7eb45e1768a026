//! Mixed-precision k-means clustering with software-emulated low-precision
//! arithmetic.
//!
//! The crate provides:
//!
//! - [`simfloat`]: rounding of working-precision (`f64`) values into reduced
//!   floating-point formats (fp16, a 3-digit quarter format, fp32) and scalar
//!   and vector arithmetic where every operation result is rounded into the
//!   target format.
//! - [`distance`]: squared-Euclidean-distance kernels in uniform and mixed
//!   precision, the magnitude-ratio trigger that decides when an inner product
//!   may be demoted to the low format, and evaluators for the corresponding
//!   forward-error bounds.
//! - [`kmeans`]: D²-weighted seeding and Lloyd iterations in three variants:
//!   fully working-precision, uniformly low-precision distances, or the
//!   trigger-gated mixed-precision kernel.
//! - [`metrics`]: SSE, adjusted Rand index, adjusted mutual information,
//!   homogeneity, completeness and V-measure on a shared contingency table.
//! - [`data`]: column-oriented datasets, z-score normalization, a Gaussian
//!   blob generator and CSV ingestion.
//! - [`experiment`]: a reproduction harness that sweeps
//!   (mode × δ × seed) cells deterministically and emits CSV/JSON tables and
//!   long-format curves.
//!
//! The accompanying guide under `book/` walks through the concepts; its code
//! snippets are compiled and run as doc-tests via the [`guide`] module.

pub mod data;
pub mod distance;
mod error;
pub mod experiment;
pub mod guide;
pub mod kmeans;
pub mod metrics;
pub mod simfloat;

pub use error::{Error, Result};

pub use data::Dataset;
pub use distance::{DistanceOutcome, PrecisionContext};
pub use kmeans::{Clustering, KMeansConfig, Mode};
pub use metrics::MetricsReport;
pub use simfloat::{FloatFormat, FormatName, RoundFlags, RoundedValue};
