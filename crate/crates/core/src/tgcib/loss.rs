//! Forward pass, loss, and exact gradients for one batch.
//!
//! total = mmd + β·cls, where cls is the mean binary cross-entropy and mmd sums
//! `(n_g/n)·|mean(μ_e over group) − target|²/H` over the groups present in the batch.
//! Gradients flow through the reparameterized sample (pathwise) and, unless
//! `detach_mu_r` is set, through the text targets into the text projection:
//! normalization, Gram-Schmidt, and the current batch's share of the pooled
//! text. The pooled history from earlier batches is treated as a constant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::model::{cgp_noise, cgp_noise_mean, sigmoid, standardize_rows, TgcibModel};
use super::Hyperparams;
use crate::dto::{DtoState, GroupSum, TextProjection};
use crate::error::{Error, Result};
use crate::feature_store::{Batch, Label};
use crate::mathcore::sampling::standard_normal;
use crate::mathcore::vector::{dot, norm, normalize};

/// What the class-conditional means of μ_e are pulled toward.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MmdTarget {
    /// Orthogonalized pooled text per class (conditions Y and T).
    TextPerClass,
    /// One normalized pooled text for the whole batch (T without Y).
    TextJoint,
    /// −e₁ for real, +e₁ for fake (Y without T).
    ClassAxes,
    /// The origin, i.e. r = N(0, I).
    Origin,
}

/// Random draws for one batch. `cgp = None` substitutes the noise mean;
/// `eps = None` means z = μ_e.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub cgp: Option<DMatrix<f64>>,
    pub eps: Option<DMatrix<f64>>,
}

impl Noise {
    /// Training draws: composite noise (if enabled) first, then the reparameterization ε.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize, hidden: usize, hp: &Hyperparams) -> Noise {
        let cgp = hp
            .cgp_enabled
            .then(|| cgp_noise(rows, dim, hp.cgp_mu, hp.cgp_sigma, rng));
        let mut eps = DMatrix::zeros(rows, hidden);
        for i in 0..rows {
            for j in 0..hidden {
                eps[(i, j)] = standard_normal(rng);
            }
        }
        Noise { cgp, eps: Some(eps) }
    }

    pub fn eval() -> Noise {
        Noise { cgp: None, eps: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mmd_term: f64,
    pub cls_term: f64,
    /// Mean μ_e per class present in the batch.
    pub class_means: [Option<Vec<f64>>; 2],
    /// Set when the text targets were not yet available (a class never pooled).
    pub mmd_skipped: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: LossBreakdown,
    /// The text pooling state after this batch's fusion.
    pub dto: DtoState,
    /// Gradient of `loss.total`, shaped like the model.
    pub grad: Option<TgcibModel>,
    /// ŷ per sample.
    pub scores: Vec<f64>,
    /// μ_e per sample (rows).
    pub mu: DMatrix<f64>,
}

/// Encoder inputs: standardized rows plus the composite-noise draw less its
/// expectation `cgp_mu + 1/2`. The constant part of the noise is carried by
/// the encoder biases instead, so evaluation (no draw) sees plain standardized
/// rows.
pub fn encoder_inputs(images: &DMatrix<f64>, hp: &Hyperparams, cgp: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let mut x = standardize_rows(images);
    if let (true, Some(noise)) = (hp.cgp_enabled, cgp) {
        x += noise;
        x.add_scalar_mut(-cgp_noise_mean(hp.cgp_mu));
    }
    x
}

/// How one pooled slot depends on the text projection, for the backward pass.
#[derive(Clone, Debug)]
enum PoolSource {
    /// Not differentiable w.r.t. the projection in this step.
    Constant,
    /// pooled = (L·prev + W·raw_sum + count·b) / (L + count)
    Batch { raw_sum: Vec<f64>, count: usize, lp: f64 },
    /// pooled = W·anchor + b
    Fixed { anchor: Vec<f64> },
}

struct TextTargets {
    /// One target per pooled slot in use.
    targets: Option<Vec<Vec<f64>>>,
    sources: [PoolSource; 2],
    dto: DtoState,
}

fn raw_group_sums(batch: &Batch, joint: bool) -> [GroupSum; 2] {
    let d = batch.dim();
    let mut sums = [GroupSum::empty(d), GroupSum::empty(d)];
    for (i, label) in batch.labels.iter().enumerate() {
        let slot = if joint { 0 } else { label.index() };
        let g = &mut sums[slot];
        for j in 0..d {
            g.sum[j] += batch.texts[(i, j)];
        }
        g.count += 1;
    }
    sums
}

/// Projected per-group sums. The projection is affine, so the projected sum
/// is W·raw_sum + count·b.
fn projected_group_sums(proj: &TextProjection, raw: &[GroupSum; 2]) -> [GroupSum; 2] {
    std::array::from_fn(|c| {
        let mut g = GroupSum::empty(proj.out_dim());
        if raw[c].count > 0 {
            g.sum = proj.apply(&raw[c].sum);
            let extra = raw[c].count as f64 - 1.0;
            g.sum.iter_mut().zip(proj.bias.iter()).for_each(|(s, b)| *s += extra * b);
            g.count = raw[c].count;
        }
        g
    })
}

/// Pools this batch's text and produces the text-derived targets; `targets`
/// is `None` while a needed class has never been pooled.
fn text_targets(model: &TgcibModel, batch: &Batch, prior: &DtoState, joint: bool) -> Result<TextTargets> {
    let proj = &model.text_proj;
    let mut dto = prior.clone();
    let mut sources = [PoolSource::Constant, PoolSource::Constant];

    if prior.guidance.is_fixed() {
        let anchors = prior
            .anchors
            .as_ref()
            .ok_or_else(|| Error::InvalidParam(format!("{} guidance needs anchor texts", prior.guidance.name())))?;
        if anchors[0].len() != proj.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: proj.in_dim(),
                got: anchors[0].len(),
            });
        }
        if joint {
            let mean: Vec<f64> = anchors[0].iter().zip(&anchors[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            dto.pooled = [Some(proj.apply(&mean)), None];
            sources[0] = PoolSource::Fixed { anchor: mean };
        } else {
            dto.pooled = [Some(proj.apply(&anchors[0])), Some(proj.apply(&anchors[1]))];
            sources = [
                PoolSource::Fixed {
                    anchor: anchors[0].clone(),
                },
                PoolSource::Fixed {
                    anchor: anchors[1].clone(),
                },
            ];
        }
        dto.batch_index += 1;
    } else {
        if let Some(i) = batch.text_present.iter().position(|&p| !p) {
            return Err(Error::MissingText(batch.indices[i]));
        }
        if batch.dim() != proj.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: proj.in_dim(),
                got: batch.dim(),
            });
        }
        let raw = raw_group_sums(batch, joint);
        let projected = projected_group_sums(proj, &raw);
        for c in 0..2 {
            if raw[c].count > 0 {
                let lp = if prior.pooled[c].is_some() {
                    prior.effective_lp() as f64
                } else {
                    0.0
                };
                sources[c] = PoolSource::Batch {
                    raw_sum: raw[c].sum.clone(),
                    count: raw[c].count,
                    lp,
                };
            }
        }
        dto.batch_fusion(&projected);
    }

    let targets = if joint {
        match &dto.pooled[0] {
            Some(p) => Some(vec![normalize(p)?]),
            None => None,
        }
    } else if dto.pooled.iter().all(Option::is_some) {
        let (r1, r2) = dto.orthogonalized_means()?;
        Some(vec![r1, r2])
    } else {
        None
    };
    Ok(TextTargets { targets, sources, dto })
}

/// Gradient of `u/|u|` pulled back from `g`.
fn normalize_backward(u: &[f64], g: &[f64]) -> Vec<f64> {
    let n = norm(u);
    let unit: Vec<f64> = u.iter().map(|v| v / n).collect();
    let proj = dot(&unit, g);
    g.iter().zip(&unit).map(|(gi, ui)| (gi - ui * proj) / n).collect()
}

/// Pulls gradients on `(normalize(a), normalize(b − k·a))`, `k = a·b / a·a`,
/// back onto `(a, b)`.
fn orthogonalized_pair_backward(a: &[f64], b: &[f64], g1: &[f64], g2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let aa = dot(a, a);
    let k = dot(a, b) / aa;
    let u2: Vec<f64> = b.iter().zip(a).map(|(bi, ai)| bi - k * ai).collect();
    let gu1 = normalize_backward(a, g1);
    let gu2 = normalize_backward(&u2, g2);
    let gk = -dot(&gu2, a);
    let gb: Vec<f64> = gu2.iter().zip(a).map(|(g, ai)| g + gk * ai / aa).collect();
    let ga: Vec<f64> = (0..a.len())
        .map(|j| gu1[j] - k * gu2[j] + gk * (b[j] - 2.0 * k * a[j]) / aa)
        .collect();
    (ga, gb)
}

fn pool_backward(source: &PoolSource, g_pooled: &[f64], grad: &mut TgcibModel) {
    let (scale, vec, bias_scale): (f64, &[f64], f64) = match source {
        PoolSource::Constant => return,
        PoolSource::Batch { raw_sum, count, lp } => {
            let denom = lp + *count as f64;
            (1.0 / denom, raw_sum, *count as f64 / denom)
        }
        PoolSource::Fixed { anchor } => (1.0, anchor, 1.0),
    };
    let w = &mut grad.text_proj.weight;
    for (r, gr) in g_pooled.iter().enumerate() {
        for (c, v) in vec.iter().enumerate() {
            w[(r, c)] += scale * gr * v;
        }
        grad.text_proj.bias[r] += bias_scale * gr;
    }
}

/// Softplus-form binary cross-entropy from a logit.
fn bce_from_logit(a: f64, y: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p() - y * a
}

/// One forward pass over `batch`, fusing its text into a copy of `prior`, and
/// (optionally) the exact gradient of the total loss.
pub fn forward_backward(
    model: &TgcibModel,
    batch: &Batch,
    prior: &DtoState,
    hp: &Hyperparams,
    noise: &Noise,
    want_grad: bool,
) -> Result<StepOutput> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let h = model.hidden();
    let x = encoder_inputs(&batch.images, hp, noise.cgp.as_ref());
    let (mu, sigma) = model.encode(&x)?;
    let z = match &noise.eps {
        Some(eps) => &mu + sigma.component_mul(eps),
        None => mu.clone(),
    };
    let logits = model.logits(&z);
    let ys: Vec<f64> = batch.labels.iter().map(|l| l.as_f64()).collect();
    let cls_term = logits.iter().zip(&ys).map(|(&a, &y)| bce_from_logit(a, y)).sum::<f64>() / n as f64;
    let scores: Vec<f64> = logits.iter().map(|&a| sigmoid(a)).collect();

    // class means of μ_e
    let mut class_rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in batch.labels.iter().enumerate() {
        class_rows[l.index()].push(i);
    }
    let mean_of = |rows: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; h];
        for &i in rows {
            for j in 0..h {
                m[j] += mu[(i, j)];
            }
        }
        m.iter_mut().for_each(|v| *v /= rows.len() as f64);
        m
    };
    let class_means: [Option<Vec<f64>>; 2] =
        std::array::from_fn(|c| (!class_rows[c].is_empty()).then(|| mean_of(&class_rows[c])));

    // groups: (rows, mean, target)
    let target = hp.conditions.target();
    let mut dto = prior.clone();
    let mut mmd_skipped = false;
    let mut groups: Vec<(Vec<usize>, Vec<f64>, Vec<f64>, Option<usize>)> = Vec::new();
    let mut text: Option<TextTargets> = None;
    if hp.mmd_enabled {
        match target {
            MmdTarget::TextPerClass | MmdTarget::TextJoint => {
                let joint = target == MmdTarget::TextJoint;
                let t = text_targets(model, batch, prior, joint)?;
                dto = t.dto.clone();
                match &t.targets {
                    Some(targets) if joint => {
                        let all: Vec<usize> = (0..n).collect();
                        groups.push((all.clone(), mean_of(&all), targets[0].clone(), Some(0)));
                    }
                    Some(targets) => {
                        for c in 0..2 {
                            if let Some(m) = &class_means[c] {
                                groups.push((class_rows[c].clone(), m.clone(), targets[c].clone(), Some(c)));
                            }
                        }
                    }
                    None => {
                        mmd_skipped = true;
                        log::debug!("skipping MMD: text targets not yet available");
                    }
                }
                text = Some(t);
            }
            MmdTarget::ClassAxes | MmdTarget::Origin => {
                for c in 0..2 {
                    if let Some(m) = &class_means[c] {
                        let mut t = vec![0.0; h];
                        if target == MmdTarget::ClassAxes {
                            t[0] = if c == Label::Fake.index() { 1.0 } else { -1.0 };
                        }
                        groups.push((class_rows[c].clone(), m.clone(), t, None));
                    }
                }
            }
        }
    }
    // each group weighs in by its share of the batch; squared error averaged over H
    let group_weight = |rows: &[usize]| rows.len() as f64 / (n * h) as f64;
    let mmd_term: f64 = groups
        .iter()
        .map(|(rows, m, t, _)| {
            let w = group_weight(rows);
            w * m.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    let total = mmd_term + hp.beta * cls_term;

    let loss = LossBreakdown {
        total,
        mmd_term,
        cls_term,
        class_means,
        mmd_skipped,
    };
    if !want_grad {
        return Ok(StepOutput {
            loss,
            dto,
            grad: None,
            scores,
            mu,
        });
    }

    let mut grad = TgcibModel::zeros(model.dim(), h);

    // classifier
    let g_logit: Vec<f64> = scores
        .iter()
        .zip(&ys)
        .map(|(p, y)| hp.beta * (p - y) / n as f64)
        .collect();
    let g_logit_v = DVector::from_column_slice(&g_logit);
    let gw = z.transpose() * &g_logit_v;
    for j in 0..h {
        grad.classifier.weight[(0, j)] = gw[j];
    }
    grad.classifier.bias[0] = g_logit.iter().sum();
    let w_row = model.classifier.weight.row(0).into_owned();
    let g_z = &g_logit_v * &w_row;

    // encoder mean
    let mut g_mu = g_z.clone();
    let mut g_targets: Vec<Vec<f64>> = Vec::with_capacity(groups.len());
    for (rows, m, t, _) in &groups {
        let w = group_weight(rows);
        let diff: Vec<f64> = m.iter().zip(t).map(|(a, b)| 2.0 * w * (a - b)).collect();
        let share = 1.0 / rows.len() as f64;
        for &i in rows {
            for j in 0..h {
                g_mu[(i, j)] += diff[j] * share;
            }
        }
        g_targets.push(diff.iter().map(|v| -v).collect());
    }
    grad.enc_mu.weight = g_mu.transpose() * &x;
    grad.enc_mu.bias = g_mu.row_sum().transpose();

    // encoder log-sigma through z = μ + exp(l)·ε
    if let Some(eps) = &noise.eps {
        let g_l = g_z.component_mul(eps).component_mul(&sigma);
        grad.enc_logsigma.weight = g_l.transpose() * &x;
        grad.enc_logsigma.bias = g_l.row_sum().transpose();
    }

    // text projection through the targets
    if let (Some(t), false) = (text.as_ref().filter(|t| t.targets.is_some()), hp.detach_mu_r) {
        if target == MmdTarget::TextJoint {
            let pooled = t.dto.pooled[0].as_ref().unwrap();
            let g_pooled = normalize_backward(pooled, &g_targets[0]);
            pool_backward(&t.sources[0], &g_pooled, &mut grad);
        } else {
            let zero = vec![0.0; h];
            let mut g_by_class = [zero.clone(), zero];
            for ((_, _, _, slot), g) in groups.iter().zip(&g_targets) {
                g_by_class[slot.unwrap()] = g.clone();
            }
            let real = t.dto.pooled[0].as_ref().unwrap();
            let fake = t.dto.pooled[1].as_ref().unwrap();
            let (ga, gb) = orthogonalized_pair_backward(real, fake, &g_by_class[0], &g_by_class[1]);
            pool_backward(&t.sources[0], &ga, &mut grad);
            pool_backward(&t.sources[1], &gb, &mut grad);
        }
    }

    Ok(StepOutput {
        loss,
        dto,
        grad: Some(grad),
        scores,
        mu,
    })
}
