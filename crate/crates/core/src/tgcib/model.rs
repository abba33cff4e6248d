use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affine::Affine;
use crate::dto::TextProjection;
use crate::error::{Error, Result};
use crate::mathcore::sampling::standard_normal;

/// Smallest per-vector std used when standardizing.
pub const MIN_STD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TgcibModel {
    /// D→H, produces μ_e.
    pub enc_mu: Affine,
    /// D→H, produces log of the diagonal Σ_e.
    pub enc_logsigma: Affine,
    /// D→H, shared with the text pooling.
    pub text_proj: TextProjection,
    /// H→1, followed by a sigmoid.
    pub classifier: Affine,
}

impl TgcibModel {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        TgcibModel {
            enc_mu: Affine::zeros(hidden, dim),
            enc_logsigma: Affine::zeros(hidden, dim),
            text_proj: Affine::zeros(hidden, dim),
            classifier: Affine::zeros(1, hidden),
        }
    }

    /// Encoder heads start at zero (μ_e = 0, Σ_e = 1); the text projection and
    /// the classifier are uniform in ±1/sqrt(fan-in).
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        TgcibModel {
            enc_mu: Affine::zeros(hidden, dim),
            enc_logsigma: Affine::zeros(hidden, dim),
            text_proj: Affine::init_uniform(hidden, dim, 1.0 / (dim as f64).sqrt(), rng),
            classifier: Affine::init_uniform(1, hidden, 1.0 / (hidden as f64).sqrt(), rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.enc_mu.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.enc_mu.out_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.enc_mu.is_finite()
            && self.enc_logsigma.is_finite()
            && self.text_proj.is_finite()
            && self.classifier.is_finite()
    }

    /// `self += scale * other`, parameter by parameter.
    pub fn axpy(&mut self, scale: f64, other: &TgcibModel) {
        self.enc_mu.axpy(scale, &other.enc_mu);
        self.enc_logsigma.axpy(scale, &other.enc_logsigma);
        self.text_proj.axpy(scale, &other.text_proj);
        self.classifier.axpy(scale, &other.classifier);
    }

    /// Named parameter tensors, in checkpoint order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 8] {
        [
            ("enc_mu.weight", self.enc_mu.weight.as_slice()),
            ("enc_mu.bias", self.enc_mu.bias.as_slice()),
            ("enc_logsigma.weight", self.enc_logsigma.weight.as_slice()),
            ("enc_logsigma.bias", self.enc_logsigma.bias.as_slice()),
            ("text_proj.weight", self.text_proj.weight.as_slice()),
            ("text_proj.bias", self.text_proj.bias.as_slice()),
            ("classifier.weight", self.classifier.weight.as_slice()),
            ("classifier.bias", self.classifier.bias.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        [
            ("enc_mu.weight", self.enc_mu.weight.as_mut_slice()),
            ("enc_mu.bias", self.enc_mu.bias.as_mut_slice()),
            ("enc_logsigma.weight", self.enc_logsigma.weight.as_mut_slice()),
            ("enc_logsigma.bias", self.enc_logsigma.bias.as_mut_slice()),
            ("text_proj.weight", self.text_proj.weight.as_mut_slice()),
            ("text_proj.bias", self.text_proj.bias.as_mut_slice()),
            ("classifier.weight", self.classifier.weight.as_mut_slice()),
            ("classifier.bias", self.classifier.bias.as_mut_slice()),
        ]
    }

    /// `(μ_e, Σ_e)` for each row of the (already augmented) inputs.
    pub fn encode(&self, inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if inputs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: inputs.ncols(),
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("encoder input".into()));
        }
        let mu = self.enc_mu.apply_rows(inputs);
        let sigma = self.enc_logsigma.apply_rows(inputs).map(f64::exp);
        Ok((mu, sigma))
    }

    /// Classifier logit per row of `z`.
    pub fn logits(&self, z: &DMatrix<f64>) -> Vec<f64> {
        self.classifier.apply_rows(z).iter().copied().collect()
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `ŷ = sigmoid(w·z + b)` for a single representation.
pub fn classify(model: &TgcibModel, z: &[f64]) -> f64 {
    sigmoid(model.classifier.apply(z)[0])
}

/// Per-vector standardization `(x − mean(x)) / std(x)` using the population std
/// over the vector's own entries, floored at [`MIN_STD`].
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut std = var.sqrt();
    if std < MIN_STD {
        log::warn!("near-constant feature vector (std {std:e}); using std {MIN_STD:e}");
        std = MIN_STD;
    }
    x.iter().map(|v| (v - mean) / std).collect()
}

pub fn standardize_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        for (j, v) in standardize(&row).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// One draw of composite noise per entry: `cgp_mu + cgp_sigma·g + u`,
/// `g ~ N(0,1)`, `u ~ U(0,1)`. Entries are drawn row-major, Gaussian before uniform.
pub fn cgp_noise<R: Rng + ?Sized>(rows: usize, cols: usize, cgp_mu: f64, cgp_sigma: f64, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let g = standard_normal(rng);
            let u: f64 = rng.random();
            out[(i, j)] = cgp_mu + cgp_sigma * g + u;
        }
    }
    out
}

/// Expected value of the composite noise; added in place of a draw at evaluation.
pub fn cgp_noise_mean(cgp_mu: f64) -> f64 {
    cgp_mu + 0.5
}

/// Standardize each row and add a fresh composite-noise draw.
pub fn cgp_augment(images: &DMatrix<f64>, cgp_mu: f64, cgp_sigma: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(cgp_sigma >= 0.0) {
        return Err(Error::InvalidParam(format!("cgp_sigma must be >= 0, got {cgp_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = cgp_noise(images.nrows(), images.ncols(), cgp_mu, cgp_sigma, &mut rng);
    Ok(standardize_rows(images) + noise)
}

/// `z = μ + σ ⊙ ε` in training, `z = μ` otherwise.
pub fn reparameterize(mu: &[f64], sigma: &[f64], seed: u64, train_mode: bool) -> Vec<f64> {
    if !train_mode {
        return mu.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| m + s * standard_normal(&mut rng))
        .collect()
}
