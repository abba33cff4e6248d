use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, Progress};
use super::loss::{encoder_inputs, forward_backward, Noise};
use super::model::{sigmoid, TgcibModel};
use super::Hyperparams;
use crate::dto::DtoState;
use crate::error::{CheckpointBytes, Error, Result};
use crate::feature_store::{batch_order, Batch, Dataset, Label};
use crate::metrics::{accuracy_at, average_precision, ScoredSet};

/// RNG stream reserved for per-batch noise; stream 0 initializes parameters.
const NOISE_STREAM: u64 = 1;
const INFER_CHUNK: usize = 1024;

/// `lr0 · (1 − step/total)^power`.
pub fn learning_rate(lr0: f64, power: f64, step: u64, total: u64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = (1.0 - step as f64 / total as f64).max(0.0);
    lr0 * frac.powf(power)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub mmd: f64,
    pub cls: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_total: f64,
    pub mean_mmd: f64,
    pub mean_cls: f64,
    pub val_acc: Option<f64>,
    pub val_ap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Eval-mode μ_e of the probe set after each epoch.
    pub z_clouds: Vec<DMatrix<f64>>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl TrainLog {
    /// Plain-text rendering; identical runs render identical bytes.
    pub fn render(&self) -> String {
        let mut s = String::from("kind,index,epoch,lr,total,mmd,cls,val_acc,val_ap\n");
        for r in &self.steps {
            let _ = writeln!(s, "step,{},{},{},{},{},{},,", r.step, r.epoch, r.lr, r.total, r.mmd, r.cls);
        }
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "epoch,{},{},,{},{},{},{},{}",
                e.epoch,
                e.epoch,
                e.mean_total,
                e.mean_mmd,
                e.mean_cls,
                opt(e.val_acc),
                opt(e.val_ap)
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions<'a> {
    pub val: Option<&'a Dataset>,
    /// Records whose eval-mode representations are captured after every epoch.
    pub probe: Option<&'a Dataset>,
}

/// Resumable SGD training loop.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: TgcibModel,
    pub dto: DtoState,
    pub hp: Hyperparams,
    pub progress: Progress,
    pub log: TrainLog,
    noise_rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh parameters for `n_train` records of dimension `dim`. `anchors`
    /// supplies the per-class raw text means for fixed guidance modes.
    pub fn new(dim: usize, n_train: usize, hp: &Hyperparams, anchors: Option<[Vec<f64>; 2]>) -> Result<Self> {
        hp.validate()?;
        if n_train == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let model = TgcibModel::init(dim, hp.hidden, &mut init_rng);
        let mut dto = match (hp.guidance.is_fixed(), anchors) {
            (true, Some([real, fake])) => {
                for a in [&real, &fake] {
                    if a.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: a.len(),
                        });
                    }
                }
                DtoState::with_anchors(hp.guidance, real, fake)
            }
            (true, None) if hp.mmd_enabled && hp.conditions.t => {
                return Err(Error::InvalidParam(format!(
                    "{} guidance needs per-class anchor texts",
                    hp.guidance.name()
                )))
            }
            _ => DtoState::new(hp.lp),
        };
        dto.lp = hp.lp;
        dto.guidance = hp.guidance;
        let batches_per_epoch = n_train.div_ceil(hp.batch) as u64;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(hp.seed);
        noise_rng.set_stream(NOISE_STREAM);
        Ok(Trainer {
            model,
            dto,
            hp: hp.clone(),
            progress: Progress {
                step: 0,
                total_steps: batches_per_epoch * hp.epochs as u64,
                epoch: 0,
                batch_in_epoch: 0,
                noise_word_pos: noise_rng.get_word_pos(),
                epoch_sums: [0.0; 3],
                epoch_batches: 0,
            },
            log: TrainLog::default(),
            noise_rng,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(ckpt.hp.seed);
        noise_rng.set_stream(NOISE_STREAM);
        noise_rng.set_word_pos(ckpt.progress.noise_word_pos);
        Trainer {
            model: ckpt.model,
            dto: ckpt.dto,
            hp: ckpt.hp,
            progress: ckpt.progress,
            log: TrainLog::default(),
            noise_rng,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut progress = self.progress.clone();
        progress.noise_word_pos = self.noise_rng.get_word_pos();
        Checkpoint {
            model: self.model.clone(),
            dto: self.dto.clone(),
            hp: self.hp.clone(),
            progress,
        }
    }

    pub fn is_done(&self) -> bool {
        self.progress.epoch >= self.hp.epochs
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                got: data.dim,
            });
        }
        if data.count(Label::Real) == 0 || data.count(Label::Fake) == 0 {
            return Err(Error::InvalidParam("training data must contain both classes".into()));
        }
        if self.hp.needs_record_text() && !data.has_text() {
            return Err(Error::InvalidParam(
                "text conditioning needs text features on every training record".into(),
            ));
        }
        let expected = data.len().div_ceil(self.hp.batch) as u64 * self.hp.epochs as u64;
        if expected != self.progress.total_steps {
            return Err(Error::InvalidParam(format!(
                "schedule was built for {} steps but this dataset gives {expected}",
                self.progress.total_steps
            )));
        }
        Ok(())
    }

    /// Trains until finished, or until `max_steps` more steps have run.
    pub fn run(&mut self, data: &Dataset, opts: TrainOptions<'_>, max_steps: Option<u64>) -> Result<()> {
        self.check_data(data)?;
        let mut budget = max_steps.unwrap_or(u64::MAX);
        while !self.is_done() && budget > 0 {
            let order = batch_order(data.len(), self.hp.batch, epoch_seed(self.hp.seed, self.progress.epoch), true)?;
            while self.progress.batch_in_epoch < order.len() && budget > 0 {
                let batch = Batch::from_indices(data, &order[self.progress.batch_in_epoch]);
                self.step(&batch)?;
                self.progress.batch_in_epoch += 1;
                budget -= 1;
            }
            if self.progress.batch_in_epoch == order.len() {
                self.finish_epoch(opts)?;
            }
        }
        Ok(())
    }

    fn step(&mut self, batch: &Batch) -> Result<()> {
        let p = &self.progress;
        let lr = learning_rate(self.hp.lr0, self.hp.decay_power, p.step, p.total_steps);
        let before = self.checkpoint();
        let noise = Noise::draw(&mut self.noise_rng, batch.len(), batch.dim(), self.hp.hidden, &self.hp);
        let out = forward_backward(&self.model, batch, &self.dto, &self.hp, &noise, true)?;
        let loss = &out.loss;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                step: p.step,
                loss: loss.total,
                last_good: CheckpointBytes(before.to_bytes()),
            });
        }
        self.log.steps.push(StepRecord {
            step: p.step,
            epoch: p.epoch,
            lr,
            total: loss.total,
            mmd: loss.mmd_term,
            cls: loss.cls_term,
        });
        let p = &mut self.progress;
        p.epoch_sums[0] += loss.total;
        p.epoch_sums[1] += loss.mmd_term;
        p.epoch_sums[2] += loss.cls_term;
        p.epoch_batches += 1;
        p.step += 1;
        self.model.axpy(-lr, out.grad.as_ref().expect("gradient requested"));
        self.dto = out.dto;
        Ok(())
    }

    fn finish_epoch(&mut self, opts: TrainOptions<'_>) -> Result<()> {
        let (val_acc, val_ap) = match opts.val {
            Some(val) => {
                let scores = infer(val, &self.model, &self.hp)?;
                let set = ScoredSet::new(scores, val.labels())?;
                (Some(accuracy_at(&set, 0.5).acc), average_precision(&set).ok())
            }
            None => (None, None),
        };
        if let Some(probe) = opts.probe {
            self.log.z_clouds.push(represent(probe, &self.model, &self.hp)?);
        }
        let p = &mut self.progress;
        let n = p.epoch_batches.max(1) as f64;
        self.log.epochs.push(EpochRecord {
            epoch: p.epoch,
            mean_total: p.epoch_sums[0] / n,
            mean_mmd: p.epoch_sums[1] / n,
            mean_cls: p.epoch_sums[2] / n,
            val_acc,
            val_ap,
        });
        log::info!(
            "epoch {} loss {:.6} val_acc {} val_ap {}",
            p.epoch,
            p.epoch_sums[0] / n,
            opt(val_acc),
            opt(val_ap)
        );
        p.epoch += 1;
        p.batch_in_epoch = 0;
        p.epoch_sums = [0.0; 3];
        p.epoch_batches = 0;
        Ok(())
    }
}

/// Trains a fresh model on `data`.
pub fn train(data: &Dataset, hp: &Hyperparams, anchors: Option<[Vec<f64>; 2]>, opts: TrainOptions<'_>) -> Result<Trainer> {
    let mut trainer = Trainer::new(data.dim, data.len(), hp, anchors)?;
    trainer.run(data, opts, None)?;
    Ok(trainer)
}

/// Eval-mode μ_e for every record (no sampling, no composite noise).
pub fn represent(data: &Dataset, model: &TgcibModel, hp: &Hyperparams) -> Result<DMatrix<f64>> {
    if data.dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.dim,
        });
    }
    let mut out = DMatrix::zeros(data.len(), model.hidden());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(INFER_CHUNK) {
        let images = DMatrix::from_fn(chunk.len(), data.dim, |i, j| data.records[chunk[i]].image[j] as f64);
        let (mu, _) = model.encode(&encoder_inputs(&images, hp, None))?;
        for (r, &i) in chunk.iter().enumerate() {
            out.row_mut(i).copy_from(&mu.row(r));
        }
    }
    Ok(out)
}

/// Deterministic fake-probability per record. Needs no text features.
pub fn infer(data: &Dataset, model: &TgcibModel, hp: &Hyperparams) -> Result<Vec<f64>> {
    let mu = represent(data, model, hp)?;
    Ok(model.logits(&mu).into_iter().map(sigmoid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(learning_rate(0.25, 0.8, 0, 100), 0.25);
        assert_eq!(learning_rate(0.25, 0.8, 100, 100), 0.0);
        let mid = learning_rate(0.25, 0.8, 50, 100);
        assert!((mid - 0.25 * 0.5f64.powf(0.8)).abs() < 1e-15);
    }

    #[test]
    fn epoch_seeds_differ() {
        assert_ne!(epoch_seed(3, 0), epoch_seed(3, 1));
    }
}
