//! Numeric kernels shared by the trainer and the analysis procedures.
//!
//! Everything here is a pure function of its inputs (plus an explicit seed for
//! the samplers), computed in 64-bit.

pub mod dft;
pub mod dse;
pub mod gram_schmidt;
pub mod pca;
pub mod sampling;
pub mod vector;

pub use dft::{dft2, dft2_shifted, fftshift, idft2, Spectrum};
pub use dse::{
    diffusion_spectral_entropy, diffusion_spectrum, dse_mutual_information, median_pairwise_distance,
    spectral_entropy, Conditioning,
};
pub use gram_schmidt::{gram_schmidt, DEGENERACY_TOL};
pub use pca::{pca_project, Pca};
pub use sampling::{sample_gaussian, sample_uniform01};
pub use vector::{cosine_similarity, dot, mmd_squared, norm, normalize};
