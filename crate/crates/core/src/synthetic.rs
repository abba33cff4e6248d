//! Seeded synthetic feature sets standing in for extracted CLIP features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feature_store::{Dataset, FeatureRecord, Label};
use crate::mathcore::sampling::standard_normal;

/// Two Gaussian clusters at `±separation/2` along a random unit direction,
/// each record paired with a noisy copy of its class text center.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoGaussians {
    pub dim: usize,
    pub n: usize,
    pub separation: f64,
    /// Per-dimension noise std drawn log-uniformly from `[1/a, a]` when `Some(a)`;
    /// unit covariance otherwise.
    pub anisotropy: Option<f64>,
    /// Std of the noise added to each record's text vector.
    pub text_noise: f64,
    pub with_text: bool,
    pub layer_id: u8,
    /// Seeds the geometry: direction, noise scales and text centers.
    pub task_seed: u64,
}

impl TwoGaussians {
    pub fn new(dim: usize, n: usize, separation: f64) -> Self {
        TwoGaussians {
            dim,
            n,
            separation,
            anisotropy: None,
            text_noise: 0.1,
            with_text: true,
            layer_id: 11,
            task_seed: 0,
        }
    }

    fn geometry(&self) -> (Vec<f64>, Vec<f64>, [Vec<f64>; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.task_seed);
        let mut dir: Vec<f64> = (0..self.dim).map(|_| standard_normal(&mut rng)).collect();
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= n);
        let scales: Vec<f64> = match self.anisotropy {
            Some(a) => (0..self.dim).map(|_| a.powf(rng.random_range(-1.0..=1.0))).collect(),
            None => vec![1.0; self.dim],
        };
        let centers = [0, 1].map(|_| (0..self.dim).map(|_| standard_normal(&mut rng)).collect::<Vec<f64>>());
        (dir, scales, centers)
    }

    /// Raw per-class text centers `[real, fake]`.
    pub fn text_centers(&self) -> [Vec<f64>; 2] {
        self.geometry().2
    }

    /// Balanced records in shuffled order; `seed` drives the sampling only.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.dim == 0 || self.n < 2 {
            return Err(Error::InvalidParam("synthetic set needs dim >= 1 and n >= 2".into()));
        }
        let (dir, scales, centers) = self.geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<Label> = (0..self.n).map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake }).collect();
        labels.shuffle(&mut rng);
        let records = labels
            .into_iter()
            .map(|label| {
                let sign = if label.is_fake() { 0.5 } else { -0.5 };
                let image: Vec<f32> = (0..self.dim)
                    .map(|j| (sign * self.separation * dir[j] + scales[j] * standard_normal(&mut rng)) as f32)
                    .collect();
                let tag = if label.is_fake() { "synthetic-fake" } else { "synthetic-real" };
                let rec = FeatureRecord::new(image, label, tag, self.layer_id);
                if self.with_text {
                    let c = &centers[label.index()];
                    let text = (0..self.dim)
                        .map(|j| (c[j] + self.text_noise * standard_normal(&mut rng)) as f32)
                        .collect();
                    rec.with_text(text)
                } else {
                    rec
                }
            })
            .collect();
        Dataset::new(self.dim, records)
    }
}
