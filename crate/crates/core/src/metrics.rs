//! Detection metrics over (score, label) sets. Label `Fake` is the positive class.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::feature_store::Label;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub tag: String,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        Self::with_tag(scores, labels, "all")
    }

    pub fn with_tag(scores: Vec<f64>, labels: Vec<Label>, tag: impl Into<String>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput(format!("score {s}")));
        }
        Ok(ScoredSet {
            scores,
            labels,
            tag: tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_fake()).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Splits into one set per tag, ordered by first appearance.
    pub fn split_by_tag(scores: &[f64], labels: &[Label], tags: &[String]) -> Result<Vec<ScoredSet>> {
        let mut order: Vec<&str> = Vec::new();
        for t in tags {
            if !order.contains(&t.as_str()) {
                order.push(t);
            }
        }
        order
            .into_iter()
            .map(|tag| {
                let idx: Vec<usize> = (0..tags.len()).filter(|&i| tags[i] == tag).collect();
                ScoredSet::with_tag(
                    idx.iter().map(|&i| scores[i]).collect(),
                    idx.iter().map(|&i| labels[i]).collect(),
                    tag,
                )
            })
            .collect()
    }
}

/// Decision rule: a score at or above the threshold is called fake.
pub fn predict_fake(score: f64, threshold: f64) -> bool {
    score >= threshold
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub acc: f64,
    /// Absent when the set has no real samples.
    pub real_acc: Option<f64>,
    /// Absent when the set has no fake samples.
    pub fake_acc: Option<f64>,
}

pub fn accuracy_at(set: &ScoredSet, threshold: f64) -> Accuracy {
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        total[l.index()] += 1;
        if predict_fake(s, threshold) == l.is_fake() {
            correct[l.index()] += 1;
        }
    }
    let frac = |c: usize| (total[c] > 0).then(|| correct[c] as f64 / total[c] as f64);
    Accuracy {
        acc: (correct[0] + correct[1]) as f64 / set.len() as f64,
        real_acc: frac(0),
        fake_acc: frac(1),
    }
}

/// Indices by descending score; ties keep input order.
fn descending(set: &ScoredSet) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    idx
}

/// Non-interpolated AP: mean of precision@k over the ranks k holding positives.
pub fn average_precision(set: &ScoredSet) -> Result<f64> {
    let p = set.positives();
    if p == 0 {
        return Err(Error::Undefined("average precision needs at least one positive"));
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in descending(set).iter().enumerate() {
        if set.labels[i].is_fake() {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Mann-Whitney AUROC with ties counted one half.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let (p, n) = (set.positives(), set.negatives());
    if p == 0 || n == 0 {
        return Err(Error::Undefined("AUROC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // twice the number of (positive, negative) wins, ties adding one
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && set.scores[idx[j]].total_cmp(&set.scores[idx[i]]) == Ordering::Equal {
            j += 1;
        }
        let group = &idx[i..j];
        let pos = group.iter().filter(|&&k| set.labels[k].is_fake()).count() as u128;
        let neg = group.len() as u128 - pos;
        twice_wins += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * p as f64 * n as f64))
}

/// `2PR/(P+R)` at the threshold, written as `2TP/(2TP+FP+FN)`.
pub fn f1_score(set: &ScoredSet, threshold: f64) -> Result<f64> {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        match (predict_fake(s, threshold), l.is_fake()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fneg == 0 {
        return Err(Error::Undefined("F1 needs a predicted or actual positive"));
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

/// False-positive rate at the highest observed-score threshold whose true-positive
/// rate reaches 0.95.
pub fn fpr95(set: &ScoredSet) -> Result<f64> {
    let (p, n) = (set.positives(), set.negatives());
    if p == 0 || n == 0 {
        return Err(Error::Undefined("FPR95 needs both classes"));
    }
    let order = descending(set);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = set.scores[order[i]];
        while i < order.len() && set.scores[order[i]] == s {
            if set.labels[order[i]].is_fake() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if 100 * tp >= 95 * p {
            return Ok(fp as f64 / n as f64);
        }
    }
    unreachable!("the lowest threshold admits every positive")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub tag: String,
    pub n: usize,
    pub acc: f64,
    pub real_acc: Option<f64>,
    pub fake_acc: Option<f64>,
    pub ap: Option<f64>,
    pub auroc: Option<f64>,
    pub f1: Option<f64>,
    pub fpr95: Option<f64>,
}

impl MetricRow {
    pub fn evaluate(set: &ScoredSet) -> MetricRow {
        let a = accuracy_at(set, 0.5);
        MetricRow {
            tag: set.tag.clone(),
            n: set.len(),
            acc: a.acc,
            real_acc: a.real_acc,
            fake_acc: a.fake_acc,
            ap: average_precision(set).ok(),
            auroc: auroc(set).ok(),
            f1: f1_score(set, 0.5).ok(),
            fpr95: fpr95(set).ok(),
        }
    }

    /// Values in [`MetricReport::COLUMNS`] order after `tag` and `n`.
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.acc),
            self.real_acc,
            self.fake_acc,
            self.ap,
            self.auroc,
            self.f1,
            self.fpr95,
        ]
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

/// One row per subset tag followed by an `average` row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub average: MetricRow,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 9] = ["tag", "n", "acc", "real_acc", "fake_acc", "ap", "auroc", "f1", "fpr95"];

    pub fn from_sets(sets: &[ScoredSet]) -> Result<MetricReport> {
        if sets.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let rows: Vec<MetricRow> = sets.iter().map(MetricRow::evaluate).collect();
        // each column averages over the subsets where it is defined
        let mean = |k: usize| -> Option<f64> {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.values()[k]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let average = MetricRow {
            tag: "average".into(),
            n: rows.iter().map(|r| r.n).sum(),
            acc: mean(0).unwrap_or(f64::NAN),
            real_acc: mean(1),
            fake_acc: mean(2),
            ap: mean(3),
            auroc: mean(4),
            f1: mean(5),
            fpr95: mean(6),
        };
        Ok(MetricReport { rows, average })
    }

    pub fn all_rows(&self) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().chain(std::iter::once(&self.average))
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::COLUMNS.join(",");
        s.push('\n');
        for r in self.all_rows() {
            let vals: Vec<String> = r.values().into_iter().map(cell).collect();
            let _ = writeln!(s, "{},{},{}", r.tag, r.n, vals.join(","));
        }
        s
    }

    /// `{tag: {metric: value, ...}, ...}` with `null` for absent values.
    pub fn to_structured(&self) -> String {
        let mut s = String::from("{\n");
        let rows: Vec<&MetricRow> = self.all_rows().collect();
        for (i, r) in rows.iter().enumerate() {
            let fields: Vec<String> = Self::COLUMNS[2..]
                .iter()
                .zip(r.values())
                .map(|(k, v)| format!("\"{k}\": {}", v.map_or_else(|| "null".into(), |x| format!("{x:.6}"))))
                .collect();
            let sep = if i + 1 < rows.len() { "," } else { "" };
            let _ = writeln!(s, "  \"{}\": {{\"n\": {}, {}}}{sep}", r.tag, r.n, fields.join(", "));
        }
        s.push('}');
        s.push('\n');
        s
    }
}
