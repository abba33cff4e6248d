//! InfoFD: a text-guided conditional information bottleneck for detecting
//! AI-generated images from precomputed CLIP features.
//!
//! The crate covers the feature file format, the numerical kernels (Gram-Schmidt,
//! PCA, 2-D DFT, diffusion spectral entropy), dynamic text orthogonalization,
//! the bottleneck model with its trainer, detection metrics, and the analysis
//! procedures used to study the detector.

pub mod affine;
pub mod analysis;
pub mod dto;
pub mod error;
pub mod feature_store;
pub mod mathcore;
pub mod metrics;
pub mod synthetic;
pub mod tgcib;

pub use dto::{DtoState, TextGuidance, TextProjection};
pub use error::{Error, Result};
pub use feature_store::{read_feature_file, write_feature_file, Batch, Dataset, FeatureRecord, Label};
pub use metrics::{MetricReport, ScoredSet};
pub use tgcib::{ConditionSet, Hyperparams, TgcibModel};
