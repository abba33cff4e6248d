//! Versioned checkpoint container.
//!
//! ```text
//! magic "IFDC" | version u16 | section count u16
//! table: count × ( name_len u8 | name | offset u64 | length u64 )
//! blobs (offsets are relative to the first blob byte)
//! ```
//!
//! Sections: `model`, `dto`, `hp`, `rng`. Reals are little-endian f64, matrices row-major.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::model::TgcibModel;
use super::Hyperparams;
use crate::affine::Affine;
use crate::dto::{DtoState, TextGuidance};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IFDC";
pub const VERSION: u16 = 1;
const SECTIONS: [&str; 4] = ["model", "dto", "hp", "rng"];

/// Position in the training schedule plus the noise stream position.
#[derive(Clone, Debug, PartialEq)]
pub struct Progress {
    pub step: u64,
    pub total_steps: u64,
    pub epoch: usize,
    pub batch_in_epoch: usize,
    pub noise_word_pos: u128,
    /// Running (total, mmd, cls) sums of the current epoch.
    pub epoch_sums: [f64; 3],
    pub epoch_batches: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TgcibModel,
    pub dto: DtoState,
    pub hp: Hyperparams,
    pub progress: Progress,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            self.f64s(m.row(r).iter().copied());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Reader { buf, pos: 0, section }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CorruptFile(format!("section '{}' truncated", self.section))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(rows, cols, &self.f64s(rows * cols)?))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptFile(format!("trailing bytes in section '{}'", self.section)));
        }
        Ok(())
    }
}

fn write_affine(w: &mut Writer, a: &Affine) {
    w.matrix(&a.weight);
    w.f64s(a.bias.iter().copied());
}

fn read_affine(r: &mut Reader<'_>, out_dim: usize, in_dim: usize) -> Result<Affine> {
    let weight = r.matrix(out_dim, in_dim)?;
    let bias = DVector::from_vec(r.f64s(out_dim)?);
    Ok(Affine { weight, bias })
}

fn guidance_code(g: TextGuidance) -> u8 {
    match g {
        TextGuidance::Dto => 0,
        TextGuidance::Paired => 1,
        TextGuidance::ClassPrompt => 2,
        TextGuidance::Random => 3,
    }
}

fn guidance_from(code: u8) -> Result<TextGuidance> {
    Ok(match code {
        0 => TextGuidance::Dto,
        1 => TextGuidance::Paired,
        2 => TextGuidance::ClassPrompt,
        3 => TextGuidance::Random,
        c => return Err(Error::Format(format!("unknown guidance code {c}"))),
    })
}

impl Checkpoint {
    fn model_blob(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.model.dim() as u32);
        w.u32(self.model.hidden() as u32);
        write_affine(&mut w, &self.model.enc_mu);
        write_affine(&mut w, &self.model.enc_logsigma);
        write_affine(&mut w, &self.model.text_proj);
        write_affine(&mut w, &self.model.classifier);
        w.0
    }

    fn dto_blob(&self) -> Vec<u8> {
        let d = &self.dto;
        let mut w = Writer::default();
        w.u32(d.lp);
        w.u64(d.batch_index);
        w.u8(guidance_code(d.guidance));
        w.u32(self.model.hidden() as u32);
        for slot in &d.pooled {
            match slot {
                Some(v) => {
                    w.u8(1);
                    w.f64s(v.iter().copied());
                }
                None => w.u8(0),
            }
        }
        match &d.anchors {
            Some([a, b]) => {
                w.u8(1);
                w.u32(a.len() as u32);
                w.f64s(a.iter().chain(b).copied());
            }
            None => w.u8(0),
        }
        w.0
    }

    fn rng_blob(&self) -> Vec<u8> {
        let p = &self.progress;
        let mut w = Writer::default();
        w.u128(p.noise_word_pos);
        w.u64(p.step);
        w.u64(p.total_steps);
        w.u64(p.epoch as u64);
        w.u64(p.batch_in_epoch as u64);
        w.f64s(p.epoch_sums);
        w.u64(p.epoch_batches);
        w.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let blobs = [self.model_blob(), self.dto_blob(), self.hp.to_kv().into_bytes(), self.rng_blob()];
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(SECTIONS.len() as u16).to_le_bytes());
        let mut offset = 0u64;
        for (name, blob) in SECTIONS.iter().zip(&blobs) {
            out.push(name.len() as u8);
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            offset += blob.len() as u64;
        }
        for blob in &blobs {
            out.extend_from_slice(blob);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let mut head = Reader::new(&bytes[8..], "table");
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let len = head.u8()? as usize;
            let name = String::from_utf8(head.take(len)?.to_vec())
                .map_err(|_| Error::CorruptFile("section name is not UTF-8".into()))?;
            let offset = head.u64()? as usize;
            let length = head.u64()? as usize;
            table.push((name, offset, length));
        }
        let blobs = &bytes[8 + head.pos..];
        let section = |name: &'static str| -> Result<Reader<'_>> {
            let (_, off, len) = table
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| Error::Format(format!("missing section '{name}'")))?;
            let end = off.checked_add(*len).filter(|&e| e <= blobs.len());
            let end = end.ok_or_else(|| Error::CorruptFile(format!("section '{name}' out of bounds")))?;
            Ok(Reader::new(&blobs[*off..end], name))
        };

        let hp_reader = section("hp")?;
        let hp_text = std::str::from_utf8(hp_reader.buf)
            .map_err(|_| Error::CorruptFile("hp section is not UTF-8".into()))?;
        let hp = Hyperparams::from_kv(hp_text)?;

        let mut r = section("model")?;
        let dim = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        if hidden != hp.hidden {
            return Err(Error::DimensionMismatch {
                expected: hp.hidden,
                got: hidden,
            });
        }
        let model = TgcibModel {
            enc_mu: read_affine(&mut r, hidden, dim)?,
            enc_logsigma: read_affine(&mut r, hidden, dim)?,
            text_proj: read_affine(&mut r, hidden, dim)?,
            classifier: read_affine(&mut r, 1, hidden)?,
        };
        r.finish()?;

        let mut r = section("dto")?;
        let lp = r.u32()?;
        let batch_index = r.u64()?;
        let guidance = guidance_from(r.u8()?)?;
        let dto_hidden = r.u32()? as usize;
        if dto_hidden != hidden {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                got: dto_hidden,
            });
        }
        let mut pooled: [Option<Vec<f64>>; 2] = [None, None];
        for slot in pooled.iter_mut() {
            if r.u8()? == 1 {
                *slot = Some(r.f64s(hidden)?);
            }
        }
        let anchors = if r.u8()? == 1 {
            let d = r.u32()? as usize;
            Some([r.f64s(d)?, r.f64s(d)?])
        } else {
            None
        };
        r.finish()?;
        let dto = DtoState {
            lp,
            batch_index,
            pooled,
            guidance,
            anchors,
        };

        let mut r = section("rng")?;
        let progress = Progress {
            noise_word_pos: r.u128()?,
            step: r.u64()?,
            total_steps: r.u64()?,
            epoch: r.u64()? as usize,
            batch_in_epoch: r.u64()? as usize,
            epoch_sums: [r.f64()?, r.f64()?, r.f64()?],
            epoch_batches: r.u64()?,
        };
        r.finish()?;

        Ok(Checkpoint {
            model,
            dto,
            hp,
            progress,
        })
    }

    /// Errors unless the stored model has the given input and hidden sizes.
    pub fn check_dims(&self, dim: usize, hidden: usize) -> Result<()> {
        if self.model.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.model.dim(),
            });
        }
        if self.model.hidden() != hidden {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                got: self.model.hidden(),
            });
        }
        Ok(())
    }
}

pub fn checkpoint_save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
