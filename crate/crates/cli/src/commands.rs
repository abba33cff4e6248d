use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use infofd::analysis::{
    bias_analysis, compression_sweep, compression_table, dft_layer_maps, mi_table, mi_trajectory, pca_2d_projection,
    pooled_random_text, Grouping, MiOptions, PatchGrid, Table,
};
use infofd::feature_store::{read_feature_file, write_feature_file, Dataset, FeatureRecord, Label};
use infofd::metrics::{MetricReport, ScoredSet};
use infofd::synthetic::TwoGaussians;
use infofd::tgcib::trainer::represent;
use infofd::tgcib::{checkpoint_load, checkpoint_save, infer, ConditionSet, Hyperparams, TrainOptions, Trainer};
use infofd::{Error, TextGuidance};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::report::{header, mean_std_cell, write_bytes, write_table, write_text};
use crate::CliError;

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

/// Reads a feature file, keeping one layer when `layer` is set.
fn load(path: &Path, layer: Option<u8>) -> Result<Dataset, CliError> {
    let data = read_feature_file(path)?;
    match layer {
        None => Ok(data),
        Some(l) => {
            let d = data.layer(l);
            if d.is_empty() {
                let have: Vec<String> = data.layers().iter().map(u8::to_string).collect();
                return Err(CliError::Usage(format!(
                    "{} has no records for layer {l} (layers present: {})",
                    path.display(),
                    have.join(",")
                )));
            }
            Ok(d)
        }
    }
}

fn vectors(data: &Dataset) -> Vec<Vec<f64>> {
    data.records
        .iter()
        .map(|r| r.text.as_ref().unwrap_or(&r.image).iter().map(|&v| v as f64).collect())
        .collect()
}

/// Per-class mean vectors of an anchor file (text when present, image otherwise).
fn class_means(data: &Dataset) -> Result<[Vec<f64>; 2], CliError> {
    let all = vectors(data);
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for label in [Label::Real, Label::Fake] {
        let rows: Vec<Vec<f64>> = data
            .records
            .iter()
            .zip(&all)
            .filter(|(r, _)| r.label == label)
            .map(|(_, v)| v.clone())
            .collect();
        if rows.is_empty() {
            return Err(CliError::Usage(format!("anchor file has no {label:?} records")));
        }
        out[label.index()] = pooled_random_text(&rows)?;
    }
    Ok(out)
}

/// Fixed anchors for class-prompt and random guidance; `None` for batch guidance.
fn anchors_for(cfg: &RunConfig, hp: &Hyperparams, dim: usize) -> Result<Option<[Vec<f64>; 2]>, CliError> {
    if !hp.guidance.is_fixed() {
        return Ok(None);
    }
    let Some(path) = cfg.path("anchors") else {
        if hp.mmd_enabled && hp.conditions.t {
            return Err(CliError::Usage(format!(
                "{} guidance needs anchors=<feature file with per-class text features>",
                hp.guidance.name()
            )));
        }
        return Ok(None);
    };
    let data = read_feature_file(&path)?;
    if data.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: data.dim }.into());
    }
    Ok(Some(class_means(&data)?))
}

pub fn ingest(cfg: &RunConfig, synthetic: bool) -> Result<(), CliError> {
    let data = if synthetic {
        let mut task = TwoGaussians::new(
            cfg.parsed_or("dim", 768)?,
            cfg.parsed_or("n", 4096)?,
            cfg.parsed_or("separation", 6.0)?,
        );
        task.anisotropy = cfg.parsed("anisotropy")?;
        task.text_noise = cfg.parsed_or("text_noise", task.text_noise)?;
        task.task_seed = cfg.parsed_or("task_seed", 0)?;
        task.with_text = cfg.parsed_or("with_text", true)?;
        task.layer_id = cfg.layer()?.unwrap_or(task.layer_id);
        if let Some(path) = cfg.path("emit_anchors") {
            let [real, fake] = task.text_centers();
            let rec = |v: Vec<f64>, label, tag: &str| {
                let v: Vec<f32> = v.into_iter().map(|x| x as f32).collect();
                FeatureRecord::new(v.clone(), label, tag, task.layer_id).with_text(v)
            };
            let recs = [rec(real, Label::Real, "anchor-real"), rec(fake, Label::Fake, "anchor-fake")];
            write_feature_file(&path, task.dim, &recs)?;
            wrote(&path);
        }
        task.generate(cfg.hp.seed)?
    } else {
        let inputs = cfg.require_paths("input")?;
        let mut merged: Option<Dataset> = None;
        for p in &inputs {
            let d = read_feature_file(p)?;
            merged = Some(match merged {
                None => d,
                Some(mut m) => {
                    if m.dim != d.dim {
                        return Err(Error::DimensionMismatch { expected: m.dim, got: d.dim }.into());
                    }
                    m.records.extend(d.records);
                    Dataset::new(m.dim, m.records)?
                }
            });
        }
        let data = merged.ok_or_else(|| CliError::Usage("no input files".into()))?;
        match cfg.layer()? {
            Some(l) => {
                let d = data.layer(l);
                if d.is_empty() {
                    return Err(CliError::Usage(format!("inputs have no records for layer {l}")));
                }
                d
            }
            None => data,
        }
    };

    let mut counts: BTreeMap<(u8, String, &str), usize> = BTreeMap::new();
    for r in &data.records {
        let class = if r.label.is_fake() { "fake" } else { "real" };
        *counts.entry((r.layer_id, r.source_tag.clone(), class)).or_default() += 1;
    }
    println!("dim={} records={} text={}", data.dim, data.len(), data.has_text());
    println!("layer,tag,class,count");
    for ((layer, tag, class), n) in &counts {
        println!("{layer},{tag},{class},{n}");
    }
    if let Some(out) = cfg.path("out") {
        write_feature_file(&out, data.dim, &data.records)?;
        wrote(&out);
    }
    Ok(())
}

fn final_val(trainer: &Trainer) -> (Option<f64>, Option<f64>) {
    trainer.log.epochs.last().map_or((None, None), |e| (e.val_acc, e.val_ap))
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

/// Trains one model; a divergence leaves the last good checkpoint next to `out`.
fn train_one(
    cfg: &RunConfig,
    hp: &Hyperparams,
    data: &Dataset,
    val: Option<&Dataset>,
    diverged_path: Option<&Path>,
) -> Result<Trainer, CliError> {
    let anchors = anchors_for(cfg, hp, data.dim)?;
    let mut trainer = Trainer::new(data.dim, data.len(), hp, anchors)?;
    match trainer.run(data, TrainOptions { val, probe: None }, None) {
        Ok(()) => Ok(trainer),
        Err(Error::Diverged { step, loss, last_good }) => {
            if let Some(p) = diverged_path {
                write_bytes(p, &last_good.0)?;
                eprintln!("last good checkpoint saved to {}", p.display());
            }
            Err(Error::Diverged { step, loss, last_good }.into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let layer = cfg.layer()?;
    let data = load(&cfg.require_path("train")?, layer)?;
    let val = match cfg.get("val") {
        Some(_) => Some(load(&cfg.require_path("val")?, layer)?),
        None => None,
    };
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    let mut rows = Vec::new();
    let (mut accs, mut aps, mut losses) = (Vec::new(), Vec::new(), Vec::new());
    for seed in cfg.seeds()? {
        let hp = Hyperparams { seed, ..cfg.hp.clone() };
        let diverged = out.join(format!("diverged_seed{seed}.ifdc"));
        let trainer = train_one(cfg, &hp, &data, val.as_ref(), Some(&diverged))?;
        let ckpt = out.join(format!("checkpoint_seed{seed}.ifdc"));
        checkpoint_save(&trainer.checkpoint(), &ckpt)?;
        wrote(&ckpt);
        let log = out.join(format!("train_log_seed{seed}.csv"));
        write_text(&log, &format!("{}{}", header("train", cfg, &[]), trainer.log.render()))?;
        wrote(&log);
        let (acc, ap) = final_val(&trainer);
        let loss = trainer.log.epochs.last().map(|e| e.mean_total);
        accs.extend(acc);
        aps.extend(ap);
        losses.extend(loss);
        rows.push(vec![
            seed.to_string(),
            trainer.log.epochs.len().to_string(),
            opt_cell(loss),
            opt_cell(acc),
            opt_cell(ap),
        ]);
    }
    rows.push(vec![
        "mean(STD)".into(),
        String::new(),
        mean_std_cell(&losses),
        mean_std_cell(&accs),
        mean_std_cell(&aps),
    ]);
    let table = Table {
        columns: vec!["seed", "epochs", "final_loss", "val_acc", "val_ap"],
        rows,
    };
    wrote(&write_table(&out, "train_summary", "train", cfg, &[], &table)?);
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let test = load(&cfg.require_path("test")?, cfg.layer()?)?;
    let ckpts = cfg.require_paths("checkpoint")?;
    let mut detail = Vec::new();
    // tag -> metric column -> values across checkpoints
    let mut pooled: BTreeMap<(usize, String), [Vec<f64>; 7]> = BTreeMap::new();
    for path in &ckpts {
        let ckpt = checkpoint_load(path)?;
        if ckpt.model.dim() != test.dim {
            return Err(Error::DimensionMismatch {
                expected: ckpt.model.dim(),
                got: test.dim,
            }
            .into());
        }
        let scores = infer(&test, &ckpt.model, &ckpt.hp)?;
        let tags: Vec<String> = test.records.iter().map(|r| r.source_tag.clone()).collect();
        let mut sets = ScoredSet::split_by_tag(&scores, &test.labels(), &tags)?;
        if sets.len() > 1 {
            sets.push(ScoredSet::with_tag(scores.clone(), test.labels(), "all")?);
        }
        let report = MetricReport::from_sets(&sets)?;
        for (order, row) in report.all_rows().enumerate() {
            let vals = row.values();
            let mut cells = vec![path.display().to_string(), row.tag.clone(), row.n.to_string()];
            cells.extend(vals.iter().map(|v| opt_cell(*v)));
            detail.push(cells);
            let slot = pooled.entry((order, row.tag.clone())).or_default();
            for (k, v) in vals.iter().enumerate() {
                slot[k].extend(*v);
            }
        }
    }
    let mut columns = vec!["checkpoint"];
    columns.extend(MetricReport::COLUMNS);
    let out = cfg.out_dir();
    wrote(&write_table(&out, "eval", "eval", cfg, &[], &Table { columns, rows: detail })?);

    let mut summary_cols = vec!["tag", "checkpoints"];
    summary_cols.extend(&MetricReport::COLUMNS[2..]);
    let rows = pooled
        .into_iter()
        .map(|((_, tag), vals)| {
            let mut r = vec![tag, ckpts.len().to_string()];
            r.extend(vals.iter().map(|v| mean_std_cell(v)));
            r
        })
        .collect();
    let summary = Table {
        columns: summary_cols,
        rows,
    };
    wrote(&write_table(&out, "eval_summary", "eval", cfg, &[], &summary)?);
    print!("{}", summary.to_csv());
    Ok(())
}

pub fn bias(cfg: &RunConfig) -> Result<(), CliError> {
    let features = load(&cfg.require_path("features")?, cfg.layer()?)?;
    let texts = read_feature_file(cfg.require_path("texts")?)?;
    let pooled = pooled_random_text(&vectors(&texts))?;
    let grouping = match cfg.get("grouping").unwrap_or("tag") {
        "tag" | "source" => Grouping::SourceTag,
        "label" => Grouping::Label,
        other => return Err(CliError::Usage(format!("grouping must be 'tag' or 'label', got '{other}'"))),
    };
    let report = bias_analysis(&features, &pooled, grouping)?;
    for n in &report.notes {
        log::warn!("{n}");
    }
    let out = cfg.out_dir();
    let notes = vec![format!("random_texts={}", texts.len())];
    wrote(&write_table(&out, "bias_groups", "bias", cfg, &notes, &report.groups_table())?);
    wrote(&write_table(&out, "bias_gaps", "bias", cfg, &notes, &report.gaps_table())?);
    print!("{}", report.gaps_table().to_csv());
    Ok(())
}

pub fn dft(cfg: &RunConfig) -> Result<(), CliError> {
    let features = load(&cfg.require_path("features")?, cfg.layer()?)?;
    let grids = PatchGrid::from_dataset(&features)?;
    let report = dft_layer_maps(&grids)?;
    wrote(&write_table(&cfg.out_dir(), "dft", "dft", cfg, &[], &report.table())?);
    Ok(())
}

pub fn pca(cfg: &RunConfig) -> Result<(), CliError> {
    let features = load(&cfg.require_path("features")?, cfg.layer()?)?;
    let (matrix, source) = match cfg.get("checkpoint") {
        Some(_) => {
            let ckpt = checkpoint_load(cfg.require_path("checkpoint")?)?;
            (represent(&features, &ckpt.model, &ckpt.hp)?, "representation")
        }
        None => (features.image_matrix(), "features"),
    };
    let proj = pca_2d_projection(&matrix, &features.labels())?;
    let notes = vec![
        format!("source={source}"),
        format!("variance_pc1={} variance_pc2={}", proj.variances[0], proj.variances[1]),
        format!("second_axis_degenerate={}", proj.second_axis_degenerate),
    ];
    wrote(&write_table(&cfg.out_dir(), "pca", "pca", cfg, &notes, &proj.table())?);
    Ok(())
}

fn mi_options(cfg: &RunConfig) -> Result<MiOptions, CliError> {
    let d = MiOptions::default();
    Ok(MiOptions {
        repeats: cfg.parsed_or("repeats", d.repeats)?,
        subsample: cfg.parsed_or("subsample", d.subsample)?,
        t: cfg.parsed_or("mi_t", d.t)?,
        sigma: cfg.parsed("sigma")?,
        x_buckets: cfg.parsed_or("x_buckets", d.x_buckets)?,
        seed: cfg.hp.seed,
    })
}

pub fn mi(cfg: &RunConfig) -> Result<(), CliError> {
    let layer = cfg.layer()?;
    let data = load(&cfg.require_path("train")?, layer)?;
    let probe_key = ["probe", "val"].into_iter().find(|k| cfg.get(k).is_some());
    let probe = match probe_key {
        Some(k) => load(&cfg.require_path(k)?, layer)?,
        None => data.clone(),
    };
    let opts = mi_options(cfg)?;
    let x = probe.image_matrix();
    let mut labels = probe.labels();
    if cfg.parsed_or("shuffle_labels", false)? {
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.hp.seed ^ 0x5EED));
    }
    let anchors = anchors_for(cfg, &cfg.hp, data.dim)?;
    let notes = vec![opts.describe(), format!("shuffle_labels={}", cfg.parsed_or("shuffle_labels", false)?)];
    let out = cfg.out_dir();

    let mut trainer = Trainer::new(data.dim, data.len(), &cfg.hp, anchors.clone())?;
    trainer.run(&data, TrainOptions { val: None, probe: Some(&probe) }, None)?;
    let points = mi_trajectory(&trainer.log.z_clouds, &x, &labels, &opts)?;
    wrote(&write_table(&out, "mi", "mi", cfg, &notes, &mi_table(&points))?);

    if let Some(sizes) = cfg.list::<usize>("hidden_sizes")? {
        if cfg.parsed_or("shuffle_labels", false)? {
            return Err(CliError::Usage("shuffle_labels applies to the single trajectory only".into()));
        }
        let sweep = compression_sweep(&data, &probe, &cfg.hp, anchors, &sizes, &opts)?;
        wrote(&write_table(&out, "compression", "mi", cfg, &notes, &compression_table(&sweep))?);
    }
    Ok(())
}

/// One configuration of the ablation grid.
struct AblationRow {
    name: &'static str,
    cgp: bool,
    mmd: bool,
    conditions: &'static str,
    guidance: TextGuidance,
}

const ABLATION_ROWS: [AblationRow; 10] = [
    AblationRow { name: "base", cgp: false, mmd: false, conditions: "y,t", guidance: TextGuidance::Dto },
    AblationRow { name: "cgp", cgp: true, mmd: false, conditions: "y,t", guidance: TextGuidance::Dto },
    AblationRow { name: "cgp+mmd:n", cgp: true, mmd: true, conditions: "n", guidance: TextGuidance::Dto },
    AblationRow { name: "cgp+mmd:n+y", cgp: true, mmd: true, conditions: "n,y", guidance: TextGuidance::Dto },
    AblationRow { name: "cgp+mmd:t", cgp: true, mmd: true, conditions: "t", guidance: TextGuidance::Dto },
    AblationRow { name: "mmd:y+t/dto", cgp: false, mmd: true, conditions: "y,t", guidance: TextGuidance::Dto },
    AblationRow { name: "cgp+mmd:y+t/paired", cgp: true, mmd: true, conditions: "y,t", guidance: TextGuidance::Paired },
    AblationRow { name: "cgp+mmd:y+t/class-prompt", cgp: true, mmd: true, conditions: "y,t", guidance: TextGuidance::ClassPrompt },
    AblationRow { name: "cgp+mmd:y+t/random", cgp: true, mmd: true, conditions: "y,t", guidance: TextGuidance::Random },
    AblationRow { name: "cgp+mmd:y+t/dto", cgp: true, mmd: true, conditions: "y,t", guidance: TextGuidance::Dto },
];

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let layer = cfg.layer()?;
    let data = load(&cfg.require_path("train")?, layer)?;
    let val = load(&cfg.require_path("val")?, layer)?;
    let seeds = cfg.seeds()?;
    let selected: Vec<&AblationRow> = match cfg.list::<String>("rows")? {
        Some(names) => names
            .iter()
            .map(|n| {
                ABLATION_ROWS
                    .iter()
                    .find(|r| r.name == n)
                    .ok_or_else(|| CliError::Usage(format!("unknown ablation row '{n}'")))
            })
            .collect::<Result<_, _>>()?,
        None => ABLATION_ROWS
            .iter()
            .filter(|r| {
                let keep = !r.guidance.is_fixed() || cfg.get("anchors").is_some();
                if !keep {
                    log::warn!("skipping row {}: no anchors configured", r.name);
                }
                keep
            })
            .collect(),
    };
    let mut rows = Vec::new();
    for row in selected {
        let hp = Hyperparams {
            cgp_enabled: row.cgp,
            mmd_enabled: row.mmd,
            conditions: ConditionSet::parse(row.conditions)?,
            guidance: row.guidance,
            ..cfg.hp.clone()
        };
        if hp.needs_record_text() && !data.has_text() {
            return Err(CliError::Usage(format!("row {} conditions on T but the training set has no text", row.name)));
        }
        let (mut accs, mut aps) = (Vec::new(), Vec::new());
        for &seed in &seeds {
            let hp = Hyperparams { seed, ..hp.clone() };
            let trainer = train_one(cfg, &hp, &data, Some(&val), None)?;
            let (acc, ap) = final_val(&trainer);
            accs.extend(acc);
            aps.extend(ap);
        }
        log::info!("ablation row {} done", row.name);
        rows.push(vec![
            row.name.to_string(),
            row.cgp.to_string(),
            row.mmd.to_string(),
            if row.mmd { row.conditions.replace(',', "+") } else { "-".into() },
            row.guidance.name().to_string(),
            seeds.len().to_string(),
            mean_std_cell(&accs),
            mean_std_cell(&aps),
        ]);
    }
    let table = Table {
        columns: vec!["row", "cgp", "mmd", "conditions", "guidance", "seeds", "val_acc", "val_ap"],
        rows,
    };
    wrote(&write_table(&cfg.out_dir(), "ablation", "ablate", cfg, &[], &table)?);
    print!("{}", table.to_csv());
    Ok(())
}
