use super::vector::{dot, norm};
use crate::error::{Error, Result};

/// Relative residual norm below which a vector counts as dependent on its predecessors.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Modified Gram-Schmidt without normalization.
///
/// `out[0] == vectors[0]`; every later output is its input with the components
/// along all earlier outputs removed, one projection at a time.
pub fn gram_schmidt(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        let input_norm = norm(v);
        let mut r = v.clone();
        for q in &out {
            let coef = dot(&r, q) / dot(q, q);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= coef * qi);
        }
        let residual = norm(&r);
        if input_norm == 0.0 || residual < DEGENERACY_TOL * input_norm {
            return Err(Error::DegenerateInput(format!(
                "vector {j} is (nearly) in the span of its predecessors"
            )));
        }
        out.push(r);
    }
    Ok(out)
}
