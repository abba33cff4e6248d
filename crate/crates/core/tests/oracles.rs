mod common;

use common::*;
use infofd::affine::Affine;
use infofd::dto::{orthogonalized_pair, DtoState, GroupSum};
use infofd::feature_store::Label;
use infofd::mathcore::{dft2, diffusion_spectral_entropy, idft2, pca_project};
use infofd::metrics::{auroc, average_precision, f1_score, fpr95};
use infofd::mathcore::dse::diffusion_spectrum;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..120 {
        let inst = grad_instance(i, &mut rng);
        let analytic = inst.analytic();
        let mut numeric = inst.numeric(1e-4);
        if inst.hp.detach_mu_r {
            numeric.text_proj = Affine::zeros(numeric.hidden(), numeric.dim());
        }
        let (err, tensor) = worst_relative_error(&analytic, &numeric, 1e-9);
        assert!(err < 1e-4, "{}: {tensor} relative error {err:e}", inst.label);
    }
}

/// Pooled value after every step of the stream, recomputed from scratch by
/// unrolling the running mean.
fn unrolled_pooled(stream: &[(Vec<f64>, usize)], lp: f64, upto: usize) -> Option<Vec<f64>> {
    let first = stream[..=upto].iter().position(|(_, b)| *b > 0)?;
    let h = stream[first].0.len();
    let carry = |from: usize| -> f64 { ((from + 1)..=upto).map(|i| lp / (lp + stream[i].1 as f64)).product() };
    let mut out: Vec<f64> = stream[first].0.iter().map(|s| s / stream[first].1 as f64 * carry(first)).collect();
    for k in (first + 1)..=upto {
        let (sum, b) = &stream[k];
        let w = carry(k) / (lp + *b as f64);
        for j in 0..h {
            out[j] += w * sum[j];
        }
    }
    Some(out)
}

#[test]
fn running_fusion_matches_unrolled_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for lp in [1u32, 7, 512] {
        let h = 6;
        let streams: [Vec<(Vec<f64>, usize)>; 2] = std::array::from_fn(|_| {
            (0..1000)
                .map(|_| {
                    let b = if rng.random_bool(0.2) { 0 } else { rng.random_range(1..40) };
                    let sum = (0..h).map(|_| normal(&mut rng) * b as f64 + b as f64 * 0.3).collect();
                    (sum, b)
                })
                .collect()
        });
        let mut state = DtoState::new(lp);
        for step in 0..1000 {
            let sums = std::array::from_fn(|c| GroupSum {
                sum: if streams[c][step].1 == 0 { vec![0.0; h] } else { streams[c][step].0.clone() },
                count: streams[c][step].1,
            });
            state.batch_fusion(&sums);
            for c in 0..2 {
                let want = unrolled_pooled(&streams[c], lp as f64, step);
                match (&state.pooled[c], want) {
                    (None, None) => {}
                    (Some(got), Some(want)) => {
                        for (g, w) in got.iter().zip(&want) {
                            assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "lp={lp} step={step}: {g} vs {w}");
                        }
                    }
                    (got, want) => panic!("lp={lp} step={step}: {got:?} vs {want:?}"),
                }
            }
        }
    }
}

#[test]
fn zero_pooling_scale_tracks_batch_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut state = DtoState::new(0);
    for _ in 0..200 {
        let b = rng.random_range(1..10);
        let rows: Vec<Vec<f64>> = (0..b).map(|_| normals(&mut rng, 4)).collect();
        let g = GroupSum::from_rows(&rows, 4);
        state.batch_fusion(&[g.clone(), g.clone()]);
        let mean: Vec<f64> = g.sum.iter().map(|s| s / b as f64).collect();
        for (p, m) in state.pooled[0].as_ref().unwrap().iter().zip(&mean) {
            assert!((p - m).abs() < 1e-12);
        }
    }
}

#[test]
fn orthogonalized_means_are_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (a, b) = (normals(&mut rng, 64), normals(&mut rng, 64));
        let (r1, r2) = orthogonalized_pair(&a, &b).unwrap();
        let dot: f64 = r1.iter().zip(&r2).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 1e-9);
        for v in [&r1, &r2] {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let set = random_scored_set(&mut rng, 64);
        let (s, l) = (&set.scores, &set.labels);
        match (average_precision(&set).ok(), brute_ap(s, l)) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "AP {a} vs {b}"),
            (a, b) => assert_eq!(a, b),
        }
        match (auroc(&set).ok(), brute_auroc(s, l)) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "AUROC {a} vs {b}"),
            (a, b) => assert_eq!(a, b),
        }
        assert_eq!(f1_score(&set, 0.5).ok(), brute_f1(s, l, 0.5));
        assert_eq!(fpr95(&set).ok(), brute_fpr95(s, l));
    }
}

#[test]
fn worked_ranking_example() {
    let labels = [Label::Fake, Label::Real, Label::Fake, Label::Real];
    let scores = [0.9, 0.8, 0.4, 0.3];
    assert!((brute_ap(&scores, &labels).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(brute_auroc(&scores, &labels).unwrap(), 0.75);
    let set = infofd::ScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap();
    assert!((average_precision(&set).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert!((auroc(&set).unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn dft_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (h, w) in [(16, 16), (5, 7), (1, 4), (8, 3)] {
        let grid = normals(&mut rng, h * w);
        let fast = dft2(&grid, h, w).unwrap();
        let slow = naive_dft2(&grid, h, w);
        for (a, b) in fast.data.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9, "{h}x{w}");
        }
        let back = idft2(&fast);
        for (x, y) in back.iter().zip(&grid) {
            assert!((x.re - y).abs() < 1e-9 && x.im.abs() < 1e-9);
        }
    }
}

#[test]
fn pca_variances_match_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let n = rng.random_range(3..=32);
        let d = rng.random_range(1..=32);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| normal(&mut rng) * (1.0 + j as f64 * 0.2)).collect())
            .collect();
        let k = n.min(d);
        let data = DMatrix::from_fn(n, d, |i, j| points[i][j]);
        let pca = pca_project(&data, k).unwrap();
        let oracle = jacobi_eigenvalues(&naive_covariance(&points));
        for (got, want) in pca.explained_variance.iter().zip(&oracle) {
            assert!((got - want.max(0.0)).abs() < 1e-8, "n={n} d={d}: {got} vs {want}");
        }
    }
}

#[test]
fn dse_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for trial in 0..20 {
        let points: Vec<Vec<f64>> = (0..20).map(|_| normals(&mut rng, 3)).collect();
        let cloud = DMatrix::from_fn(20, 3, |i, j| points[i][j]);
        let sigma = 0.5 + trial as f64 * 0.1;
        for t in [1, 2, 5] {
            let got = diffusion_spectral_entropy(&cloud, t, Some(sigma)).unwrap();
            let want = dense_dse(&points, sigma, t as i32);
            assert!((got - want).abs() < 1e-8, "sigma={sigma} t={t}: {got} vs {want}");
        }
        let spectrum = diffusion_spectrum(&cloud, sigma).unwrap();
        assert!((spectrum[0] - 1.0).abs() < 1e-10);
    }
}
