use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(a.iter().map(|v| v / n).collect())
}

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Squared Euclidean distance between two means: the identity-feature-map MMD.
pub fn mmd_squared(mu_a: &[f64], mu_b: &[f64]) -> Result<f64> {
    if mu_a.len() != mu_b.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_a.len(),
            got: mu_b.len(),
        });
    }
    Ok(mu_a.iter().zip(mu_b).map(|(a, b)| (a - b) * (a - b)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[2.0, 2.0], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // 32 / sqrt(14 * 77)
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.974_631_846_197_076_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_zero_norm() {
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn mmd_examples() {
        assert_eq!(mmd_squared(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        let mut e = vec![0.0; 64];
        e[0] = 1.0;
        assert_eq!(mmd_squared(&e, &[0.0; 64]).unwrap(), 1.0);
        assert!(matches!(mmd_squared(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }
}
