//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use infofd::dto::DtoState;
use infofd::feature_store::{Batch, Dataset, FeatureRecord, Label};
use infofd::metrics::ScoredSet;
use infofd::tgcib::{forward_backward, ConditionSet, Hyperparams, Noise, TgcibModel};
use infofd::TextGuidance;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

/// Cyclic Jacobi rotations on a dense symmetric matrix; eigenvalues descending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

/// Textbook 2-D DFT, every coefficient summed straight from its definition.
pub fn naive_dft2(grid: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let angle = -2.0 * PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    acc += grid[r * w + c] * Complex64::new(angle.cos(), angle.sin());
                }
            }
            out[u * w + v] = acc;
        }
    }
    out
}

/// Sample covariance of row-major points, built entry by entry.
pub fn naive_covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            cov[a][b] = points.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (n as f64 - 1.0);
        }
    }
    cov
}

/// Diffusion spectral entropy straight from the definition, via Jacobi.
pub fn dense_dse(points: &[Vec<f64>], sigma: f64, t: i32) -> f64 {
    let n = points.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (sigma * sigma)).exp()
                })
                .collect()
        })
        .collect();
    let deg: Vec<f64> = k.iter().map(|r| r.iter().sum()).collect();
    let sym: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| k[i][j] / (deg[i] * deg[j]).sqrt()).collect()).collect();
    let lam: Vec<f64> = jacobi_eigenvalues(&sym).into_iter().filter(|&l| l > 0.0).map(|l| l.powi(t)).collect();
    let total: f64 = lam.iter().sum();
    -lam.iter().map(|l| l / total).filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

pub fn brute_ap(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let p = labels.iter().filter(|l| l.is_fake()).count();
    if p == 0 {
        return None;
    }
    let mut sum = 0.0;
    for i in 0..scores.len() {
        if !labels[i].is_fake() {
            continue;
        }
        // items ranked at or above i: higher score, or equal score earlier in input order
        let above = |j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
        let rank = (0..scores.len()).filter(|&j| above(j)).count();
        let hits = (0..scores.len()).filter(|&j| above(j) && labels[j].is_fake()).count();
        sum += hits as f64 / rank as f64;
    }
    Some(sum / p as f64)
}

pub fn brute_auroc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let (mut pairs, mut wins) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i].is_fake() && !labels[j].is_fake() {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Harmonic mean of precision and recall, carried as exact fractions and
/// rounded once at the end.
pub fn brute_f1(scores: &[f64], labels: &[Label], thr: f64) -> Option<f64> {
    let count = |pred: bool, fake: bool| {
        (0..scores.len()).filter(|&i| (scores[i] >= thr) == pred && labels[i].is_fake() == fake).count() as u64
    };
    let (tp, fp, fneg) = (count(true, true), count(true, false), count(false, true));
    if tp + fp + fneg == 0 {
        return None;
    }
    if tp == 0 {
        return Some(0.0);
    }
    // P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R)
    let (pn, pd, rn, rd) = (tp, tp + fp, tp, tp + fneg);
    let num = 2 * pn * rn * pd * rd;
    let den = pd * rd * (pn * rd + rn * pd);
    let g = gcd(num, den);
    Some((num / g) as f64 / (den / g) as f64)
}

pub fn brute_fpr95(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let p = labels.iter().filter(|l| l.is_fake()).count() as f64;
    let n = labels.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut best: Option<f64> = None;
    for &thr in scores {
        let tp = (0..scores.len()).filter(|&i| scores[i] >= thr && labels[i].is_fake()).count() as f64;
        if tp / p >= 0.95 && best.is_none_or(|b| thr > b) {
            best = Some(thr);
        }
    }
    let thr = best?;
    let fp = (0..scores.len()).filter(|&i| scores[i] >= thr && !labels[i].is_fake()).count() as f64;
    Some(fp / n)
}

pub fn random_scored_set(rng: &mut ChaCha8Rng, max_n: usize) -> ScoredSet {
    let n = rng.random_range(1..=max_n);
    let coarse = rng.random_bool(0.5);
    let fake_rate = rng.random_range(0.0..1.0);
    let scores: Vec<f64> = (0..n)
        .map(|_| {
            if coarse {
                rng.random_range(0..6) as f64 / 5.0
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect();
    let labels: Vec<Label> = (0..n)
        .map(|_| if rng.random_bool(fake_rate) { Label::Fake } else { Label::Real })
        .collect();
    ScoredSet::new(scores, labels).unwrap()
}

/// Loss and model for one randomly drawn small gradient-check instance.
pub struct GradInstance {
    pub model: TgcibModel,
    pub batch: Batch,
    pub prior: DtoState,
    pub hp: Hyperparams,
    pub noise: Noise,
    pub label: String,
}

impl GradInstance {
    pub fn loss(&self, model: &TgcibModel) -> f64 {
        forward_backward(model, &self.batch, &self.prior, &self.hp, &self.noise, false)
            .unwrap()
            .loss
            .total
    }

    pub fn analytic(&self) -> TgcibModel {
        forward_backward(&self.model, &self.batch, &self.prior, &self.hp, &self.noise, true)
            .unwrap()
            .grad
            .unwrap()
    }

    /// Central differences for every parameter.
    pub fn numeric(&self, h: f64) -> TgcibModel {
        let mut grad = TgcibModel::zeros(self.model.dim(), self.model.hidden());
        let mut probe = self.model.clone();
        for t in 0..8 {
            let len = self.model.tensors()[t].1.len();
            for k in 0..len {
                let orig = probe.tensors_mut()[t].1[k];
                probe.tensors_mut()[t].1[k] = orig + h;
                let up = self.loss(&probe);
                probe.tensors_mut()[t].1[k] = orig - h;
                let down = self.loss(&probe);
                probe.tensors_mut()[t].1[k] = orig;
                grad.tensors_mut()[t].1[k] = (up - down) / (2.0 * h);
            }
        }
        grad
    }
}

fn uniform_affine(rng: &mut ChaCha8Rng, out: usize, inp: usize, bound: f64) -> infofd::affine::Affine {
    infofd::affine::Affine::init_uniform(out, inp, bound, rng)
}

/// Instance `i` cycles through condition sets, guidance modes, pooled history,
/// CGP, MMD and detachment switches.
pub fn grad_instance(i: usize, rng: &mut ChaCha8Rng) -> GradInstance {
    const D: usize = 8;
    const H: usize = 4;
    const B: usize = 6;
    let conditions = ["y,t", "t", "y", "n", "none"][i % 5];
    let guidance = [TextGuidance::Dto, TextGuidance::Paired, TextGuidance::ClassPrompt, TextGuidance::Random][(i / 5) % 4];
    let warm = (i / 20) % 2 == 1;
    let cgp = i % 3 != 0;
    let mmd = i % 7 != 6;
    let detach = i % 11 == 10;
    let single_class = i % 13 == 12;
    let lp = [0u32, 1, 3, 512][(i / 3) % 4];

    let model = TgcibModel {
        enc_mu: uniform_affine(rng, H, D, 0.5),
        enc_logsigma: uniform_affine(rng, H, D, 0.3),
        text_proj: uniform_affine(rng, H, D, 0.5),
        classifier: uniform_affine(rng, 1, H, 1.0),
    };
    let mut labels: Vec<Label> = (0..B).map(|k| if k % 2 == 0 { Label::Real } else { Label::Fake }).collect();
    if single_class {
        labels = vec![Label::Fake; B];
    } else {
        for k in 0..B {
            if rng.random_bool(0.3) {
                labels[k] = if rng.random_bool(0.5) { Label::Real } else { Label::Fake };
            }
        }
        labels[0] = Label::Real;
        labels[1] = Label::Fake;
    }
    let records: Vec<FeatureRecord> = labels
        .iter()
        .map(|&l| {
            let img: Vec<f32> = normals(rng, D).into_iter().map(|v| v as f32).collect();
            let txt: Vec<f32> = normals(rng, D).into_iter().map(|v| v as f32).collect();
            FeatureRecord::new(img, l, "x", 11).with_text(txt)
        })
        .collect();
    let data = Dataset::new(D, records).unwrap();
    let batch = Batch::from_indices(&data, &(0..B).collect::<Vec<_>>());

    let mut prior = if guidance.is_fixed() {
        DtoState::with_anchors(guidance, normals(rng, D), normals(rng, D))
    } else {
        DtoState::new(lp)
    };
    prior.lp = lp;
    prior.guidance = guidance;
    if warm || single_class {
        prior.pooled = [Some(normals(rng, H)), Some(normals(rng, H))];
        prior.batch_index = 5;
    }
    let hp = Hyperparams {
        beta: rng.random_range(0.05..1.0),
        lp,
        hidden: H,
        conditions: ConditionSet::parse(conditions).unwrap(),
        cgp_enabled: cgp,
        mmd_enabled: mmd,
        detach_mu_r: detach,
        guidance,
        ..Hyperparams::default()
    };
    let noise = Noise::draw(rng, B, D, H, &hp);
    let label = format!(
        "#{i} cond={conditions} guidance={} warm={warm} cgp={cgp} mmd={mmd} detach={detach} single={single_class} lp={lp}",
        guidance.name()
    );
    GradInstance {
        model,
        batch,
        prior,
        hp,
        noise,
        label,
    }
}

/// Largest per-tensor relative error `|a − n| / max(|a|, |n|)`; tensors whose
/// gradients are both below `floor` count as agreeing.
pub fn worst_relative_error(analytic: &TgcibModel, numeric: &TgcibModel, floor: f64) -> (f64, &'static str) {
    let mut worst = (0.0, "");
    for ((name, a), (_, n)) in analytic.tensors().iter().zip(numeric.tensors().iter()) {
        let diff: f64 = a.iter().zip(n.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
        let rel = if scale < floor { 0.0 } else { diff / scale };
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    worst
}

pub fn dataset_from_points(points: &[Vec<f64>], labels: &[Label]) -> Dataset {
    let d = points[0].len();
    let records = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| FeatureRecord::new(p.iter().map(|&v| v as f32).collect(), l, "x", 11))
        .collect();
    Dataset::new(d, records).unwrap()
}
