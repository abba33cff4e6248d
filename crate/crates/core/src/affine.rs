use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `y = W x + b` with `W` of shape out×in.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine {
            weight: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
        }
    }

    /// Weights and bias uniform in ±bound; a zero bound gives zeros without drawing.
    pub fn init_uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, bound: f64, rng: &mut R) -> Self {
        if bound == 0.0 {
            return Affine::zeros(out_dim, in_dim);
        }
        let mut draw = || rng.random_range(-bound..bound);
        let weight = DMatrix::from_fn(out_dim, in_dim, |_, _| draw());
        let bias = DVector::from_fn(out_dim, |_, _| draw());
        Affine { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.weight * x + &self.bias).iter().copied().collect()
    }

    /// Applies the map to every row of `rows` (N×in), returning N×out.
    pub fn apply_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = rows * self.weight.transpose();
        for mut r in out.row_iter_mut() {
            r += self.bias.transpose();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &Affine) {
        self.weight.zip_apply(&other.weight, |a, b| *a += scale * b);
        self.bias.zip_apply(&other.bias, |a, b| *a += scale * b);
    }
}
