//! Diagnostics over stored features: cosine bias statistics, DFT maps of patch
//! grids, PCA projections and mutual-information trajectories.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feature_store::{Dataset, Label};
use crate::mathcore::{cosine_similarity, dft2_shifted, dse_mutual_information, norm, pca_project, Conditioning};
use crate::tgcib::{train, Hyperparams, TrainOptions};

pub const PATCH_SIDE: usize = 16;
pub const PATCHES: usize = PATCH_SIDE * PATCH_SIDE;

/// Column names plus string cells, rendered as CSV or as JSON-like records.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// One `{"col": value}` object per row; numbers bare, `NA` as `null`.
    pub fn to_structured(&self) -> String {
        let mut s = String::from("[\n");
        for (i, r) in self.rows.iter().enumerate() {
            let fields: Vec<String> = self
                .columns
                .iter()
                .zip(r)
                .map(|(c, v)| {
                    let v = if v == "NA" {
                        "null".to_string()
                    } else if v.parse::<f64>().is_ok() {
                        v.clone()
                    } else {
                        format!("\"{v}\"")
                    };
                    format!("\"{c}\": {v}")
                })
                .collect();
            let sep = if i + 1 < self.rows.len() { "," } else { "" };
            let _ = writeln!(s, "  {{{}}}{sep}", fields.join(", "));
        }
        s.push_str("]\n");
        s
    }
}

fn num(v: f64) -> String {
    format!("{v:.9}")
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// How bias statistics are grouped within a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grouping {
    Label,
    SourceTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasGroup {
    pub layer: u8,
    pub group: String,
    pub n: usize,
    pub mean: f64,
    /// Sample std (N−1); 0 for a single record.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGap {
    pub layer: u8,
    pub real_mean: f64,
    pub fake_mean: f64,
    /// `fake_mean − real_mean`.
    pub gap: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BiasReport {
    pub groups: Vec<BiasGroup>,
    pub gaps: Vec<LayerGap>,
    pub notes: Vec<String>,
}

impl BiasReport {
    pub fn groups_table(&self) -> Table {
        Table {
            columns: vec!["layer", "group", "n", "mean_cos", "std_cos"],
            rows: self
                .groups
                .iter()
                .map(|g| vec![g.layer.to_string(), g.group.clone(), g.n.to_string(), num(g.mean), num(g.std)])
                .collect(),
        }
    }

    pub fn gaps_table(&self) -> Table {
        Table {
            columns: vec!["layer", "real_mean", "fake_mean", "gap", "n_real", "n_fake"],
            rows: self
                .gaps
                .iter()
                .map(|g| {
                    vec![
                        g.layer.to_string(),
                        num(g.real_mean),
                        num(g.fake_mean),
                        num(g.gap),
                        g.n_real.to_string(),
                        g.n_fake.to_string(),
                    ]
                })
                .collect(),
        }
    }
}

/// Arithmetic mean of the text feature vectors.
pub fn pooled_random_text(texts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = texts.first().ok_or(Error::EmptyDataset)?;
    let mut out = vec![0.0; first.len()];
    for t in texts {
        if t.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                got: t.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(t) {
            *o += v;
        }
    }
    let k = texts.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Cosine similarity of every image feature against `pooled_text`, summarized
/// per layer and group, with the per-layer fake − real gap.
pub fn bias_analysis(features: &Dataset, pooled_text: &[f64], grouping: Grouping) -> Result<BiasReport> {
    if pooled_text.len() != features.dim {
        return Err(Error::DimensionMismatch {
            expected: features.dim,
            got: pooled_text.len(),
        });
    }
    if norm(pooled_text) == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut report = BiasReport::default();
    for layer in features.layers() {
        let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut by_label: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for rec in features.records.iter().filter(|r| r.layer_id == layer) {
            let img: Vec<f64> = rec.image.iter().map(|&v| v as f64).collect();
            let c = match cosine_similarity(&img, pooled_text) {
                Ok(c) => c,
                Err(Error::ZeroNorm) => {
                    report.notes.push(format!("layer {layer}: skipped a zero-norm feature ({})", rec.source_tag));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let key = match grouping {
                Grouping::Label => if rec.label.is_fake() { "fake" } else { "real" }.to_string(),
                Grouping::SourceTag => rec.source_tag.clone(),
            };
            by_group.entry(key).or_default().push(c);
            by_label[rec.label.index()].push(c);
        }
        for (group, vals) in by_group {
            let (mean, std) = mean_std(&vals);
            report.groups.push(BiasGroup {
                layer,
                group,
                n: vals.len(),
                mean,
                std,
            });
        }
        if by_label.iter().any(Vec::is_empty) {
            report.notes.push(format!("layer {layer}: one class is empty, no gap reported"));
            continue;
        }
        let (real_mean, _) = mean_std(&by_label[0]);
        let (fake_mean, _) = mean_std(&by_label[1]);
        report.gaps.push(LayerGap {
            layer,
            real_mean,
            fake_mean,
            gap: fake_mean - real_mean,
            n_real: by_label[0].len(),
            n_fake: by_label[1].len(),
        });
    }
    Ok(report)
}

/// One image's 256×C patch tokens at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub layer: u8,
    pub label: Label,
    pub patches: DMatrix<f64>,
}

impl PatchGrid {
    /// Reads a flat patch-major record of length 256·C (C = 1 for channel-summed dumps).
    pub fn from_flat(layer: u8, label: Label, flat: &[f32]) -> Result<PatchGrid> {
        if flat.is_empty() || flat.len() % PATCHES != 0 {
            return Err(Error::Shape(format!(
                "patch record of length {} is not a multiple of {PATCHES}",
                flat.len()
            )));
        }
        let c = flat.len() / PATCHES;
        Ok(PatchGrid {
            layer,
            label,
            patches: DMatrix::from_fn(PATCHES, c, |p, ch| flat[p * c + ch] as f64),
        })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Vec<PatchGrid>> {
        data.records
            .iter()
            .map(|r| PatchGrid::from_flat(r.layer_id, r.label, &r.image))
            .collect()
    }

    /// Channel sums laid out row-major on the 16×16 grid.
    pub fn channel_sums(&self) -> Vec<f64> {
        self.patches.row_iter().map(|r| r.sum()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    pub layer: u8,
    pub label: Label,
    pub n: usize,
    /// Mean shifted magnitude spectrum, row-major 16×16, DC at (8, 8).
    pub magnitude: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectralReport {
    pub grids: Vec<SpectralGrid>,
}

impl SpectralReport {
    pub fn table(&self) -> Table {
        let mut rows = Vec::new();
        for g in &self.grids {
            for (k, m) in g.magnitude.iter().enumerate() {
                rows.push(vec![
                    g.layer.to_string(),
                    if g.label.is_fake() { "fake" } else { "real" }.to_string(),
                    g.n.to_string(),
                    (k / PATCH_SIDE).to_string(),
                    (k % PATCH_SIDE).to_string(),
                    num(*m),
                ]);
            }
        }
        Table {
            columns: vec!["layer", "class", "n", "row", "col", "magnitude"],
            rows,
        }
    }
}

/// Per image: sum channels, 16×16 DFT with shift, magnitude. Reports class means per layer.
pub fn dft_layer_maps(grids: &[PatchGrid]) -> Result<SpectralReport> {
    let mut acc: BTreeMap<(u8, usize), (usize, Vec<f64>)> = BTreeMap::new();
    for g in grids {
        if g.patches.nrows() != PATCHES {
            return Err(Error::Shape(format!("expected {PATCHES} patches, got {}", g.patches.nrows())));
        }
        let mag = dft2_shifted(&g.channel_sums(), PATCH_SIDE, PATCH_SIDE)?.magnitude();
        let entry = acc.entry((g.layer, g.label.index())).or_insert_with(|| (0, vec![0.0; PATCHES]));
        entry.0 += 1;
        for (a, m) in entry.1.iter_mut().zip(mag) {
            *a += m;
        }
    }
    let grids = acc
        .into_iter()
        .map(|((layer, label), (n, sum))| SpectralGrid {
            layer,
            label: if label == 1 { Label::Fake } else { Label::Real },
            n,
            magnitude: sum.into_iter().map(|s| s / n as f64).collect(),
        })
        .collect();
    Ok(SpectralReport { grids })
}

#[derive(Clone, Debug)]
pub struct PcaProjection {
    /// N×2 coordinates.
    pub coords: DMatrix<f64>,
    /// 2×D orthonormal axes.
    pub axes: DMatrix<f64>,
    pub variances: [f64; 2],
    pub labels: Vec<Label>,
    /// The data has rank < 2 after centering.
    pub second_axis_degenerate: bool,
}

impl PcaProjection {
    pub fn table(&self) -> Table {
        Table {
            columns: vec!["index", "label", "pc1", "pc2"],
            rows: (0..self.coords.nrows())
                .map(|i| {
                    vec![
                        i.to_string(),
                        self.labels[i].index().to_string(),
                        num(self.coords[(i, 0)]),
                        num(self.coords[(i, 1)]),
                    ]
                })
                .collect(),
        }
    }
}

pub fn pca_2d_projection(features: &DMatrix<f64>, labels: &[Label]) -> Result<PcaProjection> {
    if features.nrows() < 3 {
        return Err(Error::InsufficientSamples(format!("PCA projection needs N >= 3, got {}", features.nrows())));
    }
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    let p = pca_project(features, 2)?;
    let v = [p.explained_variance[0], p.explained_variance[1]];
    let degenerate = v[1] <= 1e-12 * v[0].max(f64::MIN_POSITIVE);
    if degenerate {
        log::warn!("PCA second axis is degenerate (variance {:e})", v[1]);
    }
    Ok(PcaProjection {
        coords: p.projected,
        axes: p.components,
        variances: v,
        labels: labels.to_vec(),
        second_axis_degenerate: degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiOptions {
    pub repeats: usize,
    pub subsample: usize,
    /// Diffusion time.
    pub t: u32,
    /// Kernel bandwidth; `None` uses the median heuristic per estimate.
    pub sigma: Option<f64>,
    /// Nearest-anchor cells used to condition on X.
    pub x_buckets: usize,
    pub seed: u64,
}

impl Default for MiOptions {
    fn default() -> Self {
        MiOptions {
            repeats: 7,
            subsample: 1000,
            t: 1,
            sigma: None,
            x_buckets: 16,
            seed: 0,
        }
    }
}

impl MiOptions {
    /// Header line recording the estimator settings.
    pub fn describe(&self) -> String {
        let sigma = self.sigma.map_or_else(|| "median".to_string(), |s| s.to_string());
        format!(
            "repeats={} subsample={} t={} sigma={sigma} x_buckets={} seed={}",
            self.repeats, self.subsample, self.t, self.x_buckets, self.seed
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiPoint {
    pub epoch: usize,
    pub izx_mean: f64,
    pub izx_std: f64,
    pub izy_mean: f64,
    pub izy_std: f64,
}

pub fn mi_table(points: &[MiPoint]) -> Table {
    Table {
        columns: vec!["epoch", "izx_mean", "izx_std", "izy_mean", "izy_std"],
        rows: points
            .iter()
            .map(|p| vec![p.epoch.to_string(), num(p.izx_mean), num(p.izx_std), num(p.izy_mean), num(p.izy_std)])
            .collect(),
    }
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// `(I_D(Z;X), I_D(Z;Y))` per epoch, mean and sample std over `repeats` random
/// subsamples. Repeat `r` uses the same subsample at every epoch.
pub fn mi_trajectory(clouds: &[DMatrix<f64>], x: &DMatrix<f64>, labels: &[Label], opts: &MiOptions) -> Result<Vec<MiPoint>> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if opts.repeats == 0 {
        return Err(Error::InvalidParam("repeats must be >= 1".into()));
    }
    for z in clouds {
        if z.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: z.nrows(),
            });
        }
    }
    let m = opts.subsample.min(n);
    if m < 4 {
        return Err(Error::InsufficientSamples(format!("need at least 4 points, got {m}")));
    }
    if m < opts.subsample {
        log::warn!("only {n} points available; subsampling {m} instead of {}", opts.subsample);
    }
    let picks: Vec<Vec<usize>> = (0..opts.repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
            let mut idx = sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();

    let mut out = Vec::with_capacity(clouds.len());
    for (epoch, z) in clouds.iter().enumerate() {
        let mut izx = Vec::with_capacity(opts.repeats);
        let mut izy = Vec::with_capacity(opts.repeats);
        for idx in &picks {
            let zs = rows_of(z, idx);
            let xs = rows_of(x, idx);
            let ys: Vec<Label> = idx.iter().map(|&i| labels[i]).collect();
            izx.push(dse_mutual_information(
                &zs,
                Conditioning::Paired {
                    x: &xs,
                    buckets: opts.x_buckets,
                },
                opts.t,
                opts.sigma,
            )?);
            izy.push(dse_mutual_information(&zs, Conditioning::Labels(&ys), opts.t, opts.sigma)?);
        }
        let (izx_mean, izx_std) = mean_std(&izx);
        let (izy_mean, izy_std) = mean_std(&izy);
        out.push(MiPoint {
            epoch,
            izx_mean,
            izx_std,
            izy_mean,
            izy_std,
        });
    }
    Ok(out)
}

pub const COMPRESSION_HIDDEN: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionPoint {
    pub hidden: usize,
    pub trajectory: Vec<MiPoint>,
}

pub fn compression_table(points: &[CompressionPoint]) -> Table {
    let mut rows = Vec::new();
    for c in points {
        for p in &c.trajectory {
            rows.push(vec![
                c.hidden.to_string(),
                p.epoch.to_string(),
                num(p.izx_mean),
                num(p.izx_std),
                num(p.izy_mean),
                num(p.izy_std),
            ]);
        }
    }
    Table {
        columns: vec!["hidden", "epoch", "izx_mean", "izx_std", "izy_mean", "izy_std"],
        rows,
    }
}

/// Trains one model per hidden size and traces the MI trajectory of its probe
/// representations.
pub fn compression_sweep(
    train_data: &Dataset,
    probe: &Dataset,
    hp: &Hyperparams,
    anchors: Option<[Vec<f64>; 2]>,
    hidden_sizes: &[usize],
    opts: &MiOptions,
) -> Result<Vec<CompressionPoint>> {
    let x = probe.image_matrix();
    let labels = probe.labels();
    hidden_sizes
        .iter()
        .map(|&h| {
            let hp_h = Hyperparams { hidden: h, ..hp.clone() };
            let trainer = train(
                train_data,
                &hp_h,
                anchors.clone(),
                TrainOptions {
                    val: None,
                    probe: Some(probe),
                },
            )?;
            Ok(CompressionPoint {
                hidden: h,
                trajectory: mi_trajectory(&trainer.log.z_clouds, &x, &labels, opts)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::FeatureRecord;

    #[test]
    fn pooled_text_cases() {
        let v = vec![1.0, -2.0, 3.0];
        assert_eq!(pooled_random_text(std::slice::from_ref(&v)).unwrap(), v);
        assert_eq!(pooled_random_text(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        assert!(pooled_random_text(&[]).is_err());
    }

    #[test]
    fn extreme_gap_is_one() {
        let recs = vec![
            FeatureRecord::new(vec![1.0, 0.0], Label::Fake, "gen", 11),
            FeatureRecord::new(vec![2.0, 0.0], Label::Fake, "gen", 11),
            FeatureRecord::new(vec![0.0, 1.0], Label::Real, "real", 11),
        ];
        let data = Dataset::new(2, recs).unwrap();
        let rep = bias_analysis(&data, &[3.0, 0.0], Grouping::SourceTag).unwrap();
        assert_eq!(rep.gaps.len(), 1);
        assert!((rep.gaps[0].gap - 1.0).abs() < 1e-12);
        assert_eq!(rep.groups.len(), 2);
        assert!(bias_analysis(&data, &[0.0, 0.0], Grouping::Label).is_err());
    }

    #[test]
    fn constant_patches_peak_at_center() {
        let flat = vec![0.5f32; PATCHES * 3];
        let g = PatchGrid::from_flat(11, Label::Real, &flat).unwrap();
        let rep = dft_layer_maps(&[g]).unwrap();
        let mag = &rep.grids[0].magnitude;
        let center = 8 * PATCH_SIDE + 8;
        assert!((mag[center] - 1.5 * 256.0).abs() < 1e-9);
        assert!(mag.iter().enumerate().all(|(k, &m)| k == center || m < 1e-9));
        assert!(PatchGrid::from_flat(0, Label::Real, &[0.0; 255]).is_err());
    }

    #[test]
    fn collinear_points_have_flat_second_axis() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let p = pca_2d_projection(&x, &[Label::Real; 3]).unwrap();
        assert!(p.second_axis_degenerate);
        assert!(p.coords.column(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn table_renderings() {
        let t = Table {
            columns: vec!["a", "b"],
            rows: vec![vec!["x".into(), "1.5".into()], vec!["y".into(), "NA".into()]],
        };
        assert_eq!(t.to_csv(), "a,b\nx,1.5\ny,NA\n");
        assert_eq!(t.to_structured(), "[\n  {\"a\": \"x\", \"b\": 1.5},\n  {\"a\": \"y\", \"b\": null}\n]\n");
    }
}
