//! Dynamic text orthogonalization.
//!
//! Projected text features are pooled per class across batches with a running
//! weighted mean, then the two pooled vectors are orthogonalized (real first)
//! and normalized. The results are the means of the variational targets.

use crate::affine::Affine;
use crate::error::{Error, Result};
use crate::feature_store::{Batch, Label};
use crate::mathcore::{gram_schmidt, normalize};

/// Affine map from D-dim text features to the H-dim hidden space.
pub type TextProjection = Affine;

/// Projects every text row and routes it by its record's label.
pub fn project_texts(batch: &Batch, proj: &TextProjection) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if let Some(i) = batch.text_present.iter().position(|&p| !p) {
        return Err(Error::MissingText(batch.indices[i]));
    }
    if batch.texts.ncols() != proj.weight.ncols() {
        return Err(Error::DimensionMismatch {
            expected: proj.weight.ncols(),
            got: batch.texts.ncols(),
        });
    }
    let projected = proj.apply_rows(&batch.texts);
    let (mut reals, mut fakes) = (Vec::new(), Vec::new());
    for (i, label) in batch.labels.iter().enumerate() {
        let row: Vec<f64> = projected.row(i).iter().copied().collect();
        match label {
            Label::Real => reals.push(row),
            Label::Fake => fakes.push(row),
        }
    }
    Ok((reals, fakes))
}

/// Per-class pooled sum of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSum {
    pub sum: Vec<f64>,
    pub count: usize,
}

impl GroupSum {
    pub fn empty(hidden: usize) -> Self {
        GroupSum {
            sum: vec![0.0; hidden],
            count: 0,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], hidden: usize) -> Self {
        let mut g = GroupSum::empty(hidden);
        for r in rows {
            g.sum.iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        g.count = rows.len();
        g
    }
}

/// Where the pooled text features come from.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TextGuidance {
    /// Running batch fusion over per-image texts.
    Dto,
    /// Each batch's own per-image prompts, no history (pooling scale 0).
    Paired,
    /// Fixed class prompts ("An image of real." / "An image of fake.").
    ClassPrompt,
    /// Fixed pooled features of random strings, one set per class.
    Random,
}

impl TextGuidance {
    pub fn name(self) -> &'static str {
        match self {
            TextGuidance::Dto => "dto",
            TextGuidance::Paired => "paired",
            TextGuidance::ClassPrompt => "class-prompt",
            TextGuidance::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dto" => Some(TextGuidance::Dto),
            "paired" => Some(TextGuidance::Paired),
            "class-prompt" | "class_prompt" | "class" => Some(TextGuidance::ClassPrompt),
            "random" => Some(TextGuidance::Random),
            _ => None,
        }
    }

    pub fn is_fixed(self) -> bool {
        matches!(self, TextGuidance::ClassPrompt | TextGuidance::Random)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DtoState {
    /// Global pooling scale.
    pub lp: u32,
    /// Number of fusions applied so far.
    pub batch_index: u64,
    /// Pooled projected text per class, indexed by `Label::index()`.
    pub pooled: [Option<Vec<f64>>; 2],
    pub guidance: TextGuidance,
    /// Raw D-dim per-class text means for the fixed guidance modes.
    pub anchors: Option<[Vec<f64>; 2]>,
}

impl DtoState {
    pub fn new(lp: u32) -> Self {
        DtoState {
            lp,
            batch_index: 0,
            pooled: [None, None],
            guidance: TextGuidance::Dto,
            anchors: None,
        }
    }

    /// Fixed guidance: per-class raw text means held constant for the whole run.
    pub fn with_anchors(guidance: TextGuidance, real: Vec<f64>, fake: Vec<f64>) -> Self {
        DtoState {
            lp: 0,
            batch_index: 0,
            pooled: [None, None],
            guidance,
            anchors: Some([real, fake]),
        }
    }

    pub fn initialized(&self, label: Label) -> bool {
        self.pooled[label.index()].is_some()
    }

    /// Pooling scale applied against the history. Paired guidance never keeps history.
    pub fn effective_lp(&self) -> u32 {
        match self.guidance {
            TextGuidance::Paired => 0,
            _ => self.lp,
        }
    }

    /// Fuse one batch's per-class sums into the pooled history.
    pub fn batch_fusion(&mut self, sums: &[GroupSum; 2]) {
        let lp = self.effective_lp() as f64;
        for (slot, g) in self.pooled.iter_mut().zip(sums) {
            match slot {
                None => first_batch_init(slot, g),
                Some(prev) => {
                    if g.count == 0 {
                        continue;
                    }
                    let denom = lp + g.count as f64;
                    for (p, s) in prev.iter_mut().zip(&g.sum) {
                        *p = (*p * lp + s) / denom;
                    }
                }
            }
        }
        self.batch_index += 1;
    }

    /// Orthogonalized, normalized target means `(mu_r1, mu_r2)`.
    pub fn orthogonalized_means(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match (&self.pooled[0], &self.pooled[1]) {
            (Some(real), Some(fake)) => orthogonalized_pair(real, fake),
            _ => Err(Error::DegenerateInput("both classes must be pooled first".into())),
        }
    }
}

/// Sets the pooled vector to the batch mean; a class absent from the batch stays uninitialized.
pub fn first_batch_init(slot: &mut Option<Vec<f64>>, group: &GroupSum) {
    if group.count == 0 {
        return;
    }
    let n = group.count as f64;
    *slot = Some(group.sum.iter().map(|s| s / n).collect());
}

/// Gram-Schmidt on (real, fake) in that order, then unit-normalize both.
pub fn orthogonalized_pair(real: &[f64], fake: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ortho = gram_schmidt(&[real.to_vec(), fake.to_vec()])?;
    Ok((normalize(&ortho[0])?, normalize(&ortho[1])?))
}
