//! On-disk feature format and the in-memory dataset model.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "IFD1" | version u16 | D u32 | N u64 | has_text u8
//! N × ( label u8 | tag_len u8 | tag bytes | layer_id u8 | D × f32 image | [D × f32 text] )
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IFD1";
pub const VERSION: u16 = 1;
pub const MAX_TAG_BYTES: usize = 64;
pub const MAX_LAYER_ID: u8 = 23;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub image: Vec<f32>,
    pub label: Label,
    pub source_tag: String,
    pub text: Option<Vec<f32>>,
    pub layer_id: u8,
}

impl FeatureRecord {
    pub fn new(image: Vec<f32>, label: Label, source_tag: impl Into<String>, layer_id: u8) -> Self {
        FeatureRecord {
            image,
            label,
            source_tag: source_tag.into(),
            text: None,
            layer_id,
        }
    }

    pub fn with_text(mut self, text: Vec<f32>) -> Self {
        self.text = Some(text);
        self
    }
}

/// An immutable, loaded feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
}

impl Dataset {
    pub fn new(dim: usize, records: Vec<FeatureRecord>) -> Result<Self> {
        validate(dim, &records)?;
        Ok(Dataset { dim, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_text(&self) -> bool {
        self.records.first().is_some_and(|r| r.text.is_some())
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Records produced by a given encoder block.
    pub fn layer(&self, layer_id: u8) -> Dataset {
        Dataset {
            dim: self.dim,
            records: self
                .records
                .iter()
                .filter(|r| r.layer_id == layer_id)
                .cloned()
                .collect(),
        }
    }

    pub fn layers(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.records.iter().map(|r| r.layer_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Distinct source tags in first-seen order.
    pub fn tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for r in &self.records {
            if !tags.contains(&r.source_tag) {
                tags.push(r.source_tag.clone());
            }
        }
        tags
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Images as an N×D matrix in 64-bit.
    pub fn image_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |i, j| self.records[i].image[j] as f64)
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }
}

fn validate(dim: usize, records: &[FeatureRecord]) -> Result<()> {
    let has_text = records.first().is_some_and(|r| r.text.is_some());
    for (i, r) in records.iter().enumerate() {
        if r.image.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.image.len(),
            });
        }
        match &r.text {
            Some(t) if t.len() != dim => {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.len(),
                })
            }
            Some(_) if !has_text => {
                return Err(Error::Format(format!("record {i} has text but record 0 does not")))
            }
            None if has_text => return Err(Error::MissingText(i)),
            _ => {}
        }
        if r.source_tag.len() > MAX_TAG_BYTES {
            return Err(Error::InvalidParam(format!(
                "source tag of record {i} exceeds {MAX_TAG_BYTES} bytes"
            )));
        }
        if r.layer_id > MAX_LAYER_ID {
            return Err(Error::InvalidParam(format!(
                "layer id {} of record {i} out of range",
                r.layer_id
            )));
        }
        let finite = r.image.iter().chain(r.text.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteInput(format!("record {i}")));
        }
    }
    Ok(())
}

pub fn encode<W: Write>(mut w: W, dim: usize, records: &[FeatureRecord]) -> Result<()> {
    validate(dim, records)?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::InvalidParam("dimension too large".into()))?;
    let has_text = records.first().is_some_and(|r| r.text.is_some());
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim32.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    w.write_all(&[has_text as u8])?;
    for r in records {
        w.write_all(&[r.label as u8, r.source_tag.len() as u8])?;
        w.write_all(r.source_tag.as_bytes())?;
        w.write_all(&[r.layer_id])?;
        for v in &r.image {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(text) = &r.text {
            for v in text {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_exact_or_corrupt<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::CorruptFile(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_f32s<R: Read>(r: &mut R, dim: usize, what: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; dim * 4];
    read_exact_or_corrupt(r, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn decode<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let mut header = [0u8; 2 + 4 + 8 + 1];
    read_exact_or_corrupt(&mut r, &mut header, "header")?;
    let version = u16::from_le_bytes([header[0], header[1]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(header[2..6].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(header[6..14].try_into().unwrap());
    let has_text = match header[14] {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad has_text flag {v}"))),
    };

    let mut records = Vec::with_capacity(n.min(1 << 20) as usize);
    for i in 0..n {
        let mut head = [0u8; 2];
        read_exact_or_corrupt(&mut r, &mut head, "record header")?;
        let label = Label::from_u8(head[0])
            .ok_or_else(|| Error::CorruptFile(format!("record {i}: bad label {}", head[0])))?;
        let mut tag = vec![0u8; head[1] as usize];
        read_exact_or_corrupt(&mut r, &mut tag, "source tag")?;
        let source_tag = String::from_utf8(tag)
            .map_err(|_| Error::CorruptFile(format!("record {i}: tag is not UTF-8")))?;
        let mut layer = [0u8; 1];
        read_exact_or_corrupt(&mut r, &mut layer, "layer id")?;
        let image = read_f32s(&mut r, dim, "image feature")?;
        let text = if has_text {
            Some(read_f32s(&mut r, dim, "text feature")?)
        } else {
            None
        };
        records.push(FeatureRecord {
            image,
            label,
            source_tag,
            text,
            layer_id: layer[0],
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::CorruptFile("trailing bytes after declared records".into()));
    }
    Ok(Dataset { dim, records })
}

pub fn write_feature_file(path: impl AsRef<Path>, dim: usize, records: &[FeatureRecord]) -> Result<()> {
    // Validate before touching the filesystem.
    validate(dim, records)?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    encode(&mut w, dim, records)?;
    let file = w.into_inner().map_err(|e| e.into_error())?;
    file.sync_all()?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path)?;
    decode(BufReader::new(file))
}

/// One mini-batch, materialized in 64-bit.
#[derive(Clone, Debug)]
pub struct Batch {
    /// Row i is the image feature of sample i.
    pub images: DMatrix<f64>,
    pub labels: Vec<Label>,
    /// Row i is the text feature of sample i when `text_present[i]`.
    pub texts: DMatrix<f64>,
    pub text_present: Vec<bool>,
    pub tags: Vec<String>,
    /// Positions of the samples in the source dataset.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_indices(data: &Dataset, indices: &[usize]) -> Batch {
        let n = indices.len();
        let d = data.dim;
        let images = DMatrix::from_fn(n, d, |i, j| data.records[indices[i]].image[j] as f64);
        let texts = DMatrix::from_fn(n, d, |i, j| {
            data.records[indices[i]]
                .text
                .as_ref()
                .map_or(0.0, |t| t[j] as f64)
        });
        Batch {
            images,
            labels: indices.iter().map(|&i| data.records[i].label).collect(),
            texts,
            text_present: indices.iter().map(|&i| data.records[i].text.is_some()).collect(),
            tags: indices.iter().map(|&i| data.records[i].source_tag.clone()).collect(),
            indices: indices.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Partition `0..n` into consecutive batches, optionally after a seeded shuffle.
pub fn batch_order(n: usize, batch_size: usize, seed: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidParam("batch size must be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

pub fn make_batches(data: &Dataset, batch_size: usize, seed: u64, shuffle: bool) -> Result<Vec<Batch>> {
    let order = batch_order(data.len(), batch_size, seed, shuffle)?;
    Ok(order.iter().map(|idx| Batch::from_indices(data, idx)).collect())
}
