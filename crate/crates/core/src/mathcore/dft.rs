//! Direct 2-D discrete Fourier transform for small grids (16×16 patch maps).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major H×W complex grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect()
}

fn transform(input: &[Complex64], h: usize, w: usize, sign: f64) -> Vec<Complex64> {
    let th = twiddles(h, sign);
    let tw = twiddles(w, sign);
    // rows first, then columns
    let mut rows = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..w {
                acc += input[r * w + c] * tw[(v * c) % w];
            }
            rows[r * w + v] = acc;
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                acc += rows[r * w + v] * th[(u * r) % h];
            }
            out[u * w + v] = acc;
        }
    }
    out
}

fn check_shape(len: usize, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || len != h * w {
        return Err(Error::Shape(format!("grid of {len} values is not {h}×{w}")));
    }
    Ok(())
}

/// Unshifted forward transform X[u,v] = Σ x[r,c]·exp(−2πi(ur/H + vc/W)).
pub fn dft2(grid: &[f64], h: usize, w: usize) -> Result<Spectrum> {
    check_shape(grid.len(), h, w)?;
    let input: Vec<Complex64> = grid.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(Spectrum {
        height: h,
        width: w,
        data: transform(&input, h, w, -1.0),
    })
}

/// Inverse of [`dft2`] (unshifted input), with the 1/(H·W) normalization.
pub fn idft2(spec: &Spectrum) -> Vec<Complex64> {
    let (h, w) = (spec.height, spec.width);
    let scale = 1.0 / (h * w) as f64;
    transform(&spec.data, h, w, 1.0).into_iter().map(|c| c * scale).collect()
}

/// Quadrant swap moving the zero-frequency bin to (⌊H/2⌋, ⌊W/2⌋).
pub fn fftshift(spec: &Spectrum) -> Spectrum {
    let (h, w) = (spec.height, spec.width);
    let mut data = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            data[((u + h / 2) % h) * w + (v + w / 2) % w] = spec.data[u * w + v];
        }
    }
    Spectrum { height: h, width: w, data }
}

pub fn dft2_shifted(grid: &[f64], h: usize, w: usize) -> Result<Spectrum> {
    Ok(fftshift(&dft2(grid, h, w)?))
}
