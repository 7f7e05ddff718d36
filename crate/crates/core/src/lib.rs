//! Zero-knowledge zero-shot learning.
//!
//! Given labeled source features with class attributes for the seen classes,
//! and unlabeled target features drawn from seen and unseen classes, the
//! model learns an embedding in which target data clusters (with seen
//! clusters anchored to the source labels), a semantic head that predicts
//! attribute vectors, and a structural alignment between the two spaces.
//! At inference, target points are split into seen and unseen by a
//! prototypical-probability threshold, unseen points are grouped by K-means,
//! and attribute predictions are scored against the class attribute table.

pub mod clustering;
pub mod datasets;
pub mod error;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numkernel;
pub mod training;

pub use error::{Error, Result};
pub use numkernel::Matrix;
