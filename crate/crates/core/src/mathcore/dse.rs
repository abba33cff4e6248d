//! Diffusion spectral entropy and the mutual-information estimates built on it.
//!
//! For a point cloud with Gaussian affinities `K_ij = exp(-|x_i - x_j|^2 / sigma^2)`
//! the symmetric normalization `D^-1/2 K D^-1/2` shares its spectrum with the
//! diffusion operator `D^-1 K`. The entropy is the Shannon entropy (nats) of
//! `lambda_i^t / sum_j lambda_j^t` over the nonnegative eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::feature_store::Label;

fn squared_distances(cloud: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cloud.nrows();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..cloud.ncols() {
                let diff = cloud[(i, k)] - cloud[(j, k)];
                s += diff * diff;
            }
            d2[(i, j)] = s;
            d2[(j, i)] = s;
        }
    }
    d2
}

/// Median of the pairwise Euclidean distances over all unordered pairs.
pub fn median_pairwise_distance(cloud: &DMatrix<f64>) -> f64 {
    let n = cloud.nrows();
    if n < 2 {
        return 0.0;
    }
    let d2 = squared_distances(cloud);
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(d2[(i, j)].sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    }
}

/// Eigenvalues of the symmetrically normalized diffusion operator, descending.
pub fn diffusion_spectrum(cloud: &DMatrix<f64>, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!("kernel bandwidth must be > 0, got {sigma}")));
    }
    let n = cloud.nrows();
    let d2 = squared_distances(cloud);
    let s2 = sigma * sigma;
    let kernel = d2.map(|v| (-v / s2).exp());
    let degree: Vec<f64> = (0..n).map(|i| kernel.row(i).sum()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| kernel[(i, j)] / (degree[i] * degree[j]).sqrt());
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Shannon entropy of the diffusion-powered spectrum, negative eigenvalues dropped.
pub fn spectral_entropy(eigenvalues: &[f64], t: u32) -> f64 {
    let powered: Vec<f64> = eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l.powi(t as i32))
        .collect();
    let total: f64 = powered.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    powered
        .iter()
        .map(|&p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Resolve the kernel bandwidth: explicit, or the median heuristic. `None` means
/// every point coincides.
fn resolve_sigma(cloud: &DMatrix<f64>, sigma: Option<f64>) -> Result<Option<f64>> {
    match sigma {
        Some(s) if s > 0.0 && s.is_finite() => Ok(Some(s)),
        Some(s) => Err(Error::InvalidParam(format!("kernel bandwidth must be > 0, got {s}"))),
        None => {
            let med = median_pairwise_distance(cloud);
            if med > 0.0 {
                return Ok(Some(med));
            }
            // More than half the pairs coincide; fall back to the largest distance.
            let max = squared_distances(cloud).max().sqrt();
            Ok((max > 0.0).then_some(max))
        }
    }
}

fn check_cloud(cloud: &DMatrix<f64>, t: u32) -> Result<()> {
    if cloud.nrows() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "entropy needs at least 2 points, got {}",
            cloud.nrows()
        )));
    }
    if t == 0 {
        return Err(Error::InvalidParam("diffusion time must be >= 1".into()));
    }
    if cloud.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("point cloud".into()));
    }
    Ok(())
}

/// Diffusion spectral entropy of an N×d point cloud. `sigma = None` uses the
/// median pairwise distance. A cloud of identical points has entropy 0.
pub fn diffusion_spectral_entropy(cloud: &DMatrix<f64>, t: u32, sigma: Option<f64>) -> Result<f64> {
    check_cloud(cloud, t)?;
    match resolve_sigma(cloud, sigma)? {
        Some(s) => Ok(spectral_entropy(&diffusion_spectrum(cloud, s)?, t)),
        None => Ok(0.0),
    }
}

fn rows(cloud: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), cloud.ncols(), |i, j| cloud[(idx[i], j)])
}

fn subset_entropy(cloud: &DMatrix<f64>, idx: &[usize], t: u32, sigma: Option<f64>) -> Result<f64> {
    match sigma {
        _ if idx.len() < 2 => Ok(0.0),
        Some(s) => Ok(spectral_entropy(&diffusion_spectrum(&rows(cloud, idx), s)?, t)),
        None => Ok(0.0),
    }
}

/// What the representation is conditioned on.
#[derive(Clone, Copy, Debug)]
pub enum Conditioning<'a> {
    /// Class labels, one per row of Z.
    Labels(&'a [Label]),
    /// A paired cloud X (same N as Z), conditioned through `buckets`
    /// nearest-anchor cells in X.
    Paired { x: &'a DMatrix<f64>, buckets: usize },
}

/// Greedy farthest-point anchors in X, starting from row 0; each row is then
/// assigned to its nearest anchor (lowest index on ties).
pub fn nearest_anchor_buckets(x: &DMatrix<f64>, buckets: usize) -> Vec<usize> {
    let n = x.nrows();
    let k = buckets.clamp(1, n.max(1));
    let dist2 = |a: usize, b: usize| -> f64 {
        (0..x.ncols()).map(|j| (x[(a, j)] - x[(b, j)]).powi(2)).sum()
    };
    let mut anchors = vec![0usize];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(i, 0)).collect();
    while anchors.len() < k {
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        if d == 0.0 {
            break;
        }
        anchors.push(far);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist2(i, far));
        }
    }
    (0..n)
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (b, &a) in anchors.iter().enumerate() {
                let d = dist2(i, a);
                if d < best_d {
                    best_d = d;
                    best = b;
                }
            }
            best
        })
        .collect()
}

/// `I_D(Z; C) = H_D(Z) − Σ_c p(c)·H_D(Z | c)` with one shared kernel bandwidth
/// (explicit, or the median heuristic on the full Z cloud).
pub fn dse_mutual_information(
    cloud_z: &DMatrix<f64>,
    cond: Conditioning<'_>,
    t: u32,
    sigma: Option<f64>,
) -> Result<f64> {
    check_cloud(cloud_z, t)?;
    let n = cloud_z.nrows();
    let groups: Vec<Vec<usize>> = match cond {
        Conditioning::Labels(labels) => {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: labels.len(),
                });
            }
            let mut g = vec![Vec::new(), Vec::new()];
            for (i, l) in labels.iter().enumerate() {
                g[l.index()].push(i);
            }
            for (c, idx) in g.iter().enumerate() {
                if idx.len() < 2 {
                    return Err(Error::InsufficientSamples(format!(
                        "class {c} has {} points, need at least 2",
                        idx.len()
                    )));
                }
            }
            g
        }
        Conditioning::Paired { x, buckets } => {
            if x.nrows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x.nrows(),
                });
            }
            if buckets == 0 {
                return Err(Error::InvalidParam("bucket count must be >= 1".into()));
            }
            let assign = nearest_anchor_buckets(x, buckets);
            let k = assign.iter().max().map_or(0, |m| m + 1);
            let mut g = vec![Vec::new(); k];
            for (i, &b) in assign.iter().enumerate() {
                g[b].push(i);
            }
            g
        }
    };

    let sigma = resolve_sigma(cloud_z, sigma)?;
    let all: Vec<usize> = (0..n).collect();
    let marginal = subset_entropy(cloud_z, &all, t, sigma)?;
    let mut conditional = 0.0;
    for idx in &groups {
        conditional += idx.len() as f64 / n as f64 * subset_entropy(cloud_z, idx, t, sigma)?;
    }
    Ok(marginal - conditional)
}
