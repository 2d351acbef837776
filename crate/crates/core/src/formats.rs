//! Binary artifact layouts. All integers and reals are little-endian.
//!
//! Feature dump (`NCFB`):
//!
//! ```text
//! "NCFB" | version: u8 = 1 | N: u32 | d: u32 | C: u32
//!        | N·d × f64 row-major | N × u32 labels
//! ```
//!
//! Unlabeled dumps (out-of-distribution probes) store `C = 0` and every
//! label as `u32::MAX`.
//!
//! Model checkpoint (`NCCK`):
//!
//! ```text
//! "NCCK" | version: u32 = 1 | L: u32 | dims: (L+1) × u32 | C: u32
//!        | flags: u8 (bit0 l2-normalize, bit1 spectral-normalize, bit2 leaky)
//!        | leaky slope: f64 | l2 epsilon: f64 | spectral iterations: u32
//!        | per hidden layer k: W_k (dims[k+1] × dims[k]) f64, b_k (dims[k+1]) f64
//!        | classifier (C × dims[L]) f64
//!        | per hidden layer k: spectral vector (dims[k+1]) f64
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::model::{Activation, DenseLayer, MlpClassifier};
use crate::stats::FeatureBank;

pub const FEATURE_DUMP_MAGIC: &[u8; 4] = b"NCFB";
pub const FEATURE_DUMP_VERSION: u8 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NCCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const UNLABELED: u32 = u32::MAX;

/// Contents of a feature dump: a labeled bank or bare rows.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureDump {
    Labeled(FeatureBank),
    Unlabeled(RealMatrix),
}

impl FeatureDump {
    pub fn features(&self) -> &RealMatrix {
        match self {
            FeatureDump::Labeled(b) => b.features(),
            FeatureDump::Unlabeled(m) => m,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<RealMatrix> {
        RealMatrix::new(rows, cols, self.f64s(rows * cols)?)
            .map_err(|e| Error::Format(e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_feature_dump(dump: &FeatureDump) -> Result<Vec<u8>> {
    let z = dump.features();
    let mut out = Vec::with_capacity(17 + z.as_slice().len() * 8 + z.rows() * 4);
    out.extend_from_slice(FEATURE_DUMP_MAGIC);
    out.push(FEATURE_DUMP_VERSION);
    put_u32(&mut out, z.rows())?;
    put_u32(&mut out, z.cols())?;
    match dump {
        FeatureDump::Labeled(b) => put_u32(&mut out, b.num_classes())?,
        FeatureDump::Unlabeled(_) => put_u32(&mut out, 0)?,
    }
    put_f64s(&mut out, z.as_slice());
    match dump {
        FeatureDump::Labeled(b) => {
            for &l in b.labels() {
                put_u32(&mut out, l)?;
            }
        }
        FeatureDump::Unlabeled(m) => {
            for _ in 0..m.rows() {
                out.extend_from_slice(&UNLABELED.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_feature_dump(bytes: &[u8]) -> Result<FeatureDump> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != FEATURE_DUMP_MAGIC {
        return Err(Error::Format("not a feature dump (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != FEATURE_DUMP_VERSION {
        return Err(Error::Format(format!("unsupported feature dump version {version}")));
    }
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let c = r.u32()? as usize;
    let z = r.matrix(n, d)?;
    let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if c == 0 {
        if labels.iter().any(|&l| l != UNLABELED) {
            return Err(Error::Format("unlabeled dump carries labels".into()));
        }
        return Ok(FeatureDump::Unlabeled(z));
    }
    let labels = labels.into_iter().map(|l| l as usize).collect();
    FeatureBank::new(z, labels, c)
        .map(FeatureDump::Labeled)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_checkpoint(model: &MlpClassifier) -> Result<Vec<u8>> {
    let dims = model.layer_dims();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut out, model.layers.len())?;
    for &d in &dims {
        put_u32(&mut out, d)?;
    }
    put_u32(&mut out, model.num_classes())?;
    let (leaky, slope) = match model.activation {
        Activation::Relu => (false, 0.0),
        Activation::LeakyRelu { slope } => (true, slope),
    };
    let flags = u8::from(model.l2_normalize_features)
        | (u8::from(model.spectral_normalize) << 1)
        | (u8::from(leaky) << 2);
    out.push(flags);
    put_f64s(&mut out, &[slope, model.l2_epsilon]);
    put_u32(&mut out, model.spectral_iterations)?;
    for layer in &model.layers {
        put_f64s(&mut out, layer.weights.as_slice());
        put_f64s(&mut out, &layer.bias);
    }
    put_f64s(&mut out, model.classifier.as_slice());
    for u in &model.spectral_u {
        put_f64s(&mut out, u);
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MlpClassifier> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let depth = r.u32()? as usize;
    if depth == 0 {
        return Err(Error::Format("checkpoint has no hidden layers".into()));
    }
    let dims = (0..=depth).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let c = r.u32()? as usize;
    let flags = r.u8()?;
    if flags & !0b111 != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#010b}")));
    }
    let slope = r.f64()?;
    let l2_epsilon = r.f64()?;
    let spectral_iterations = r.u32()? as usize;
    let mut layers = Vec::with_capacity(depth);
    for k in 0..depth {
        let weights = r.matrix(dims[k + 1], dims[k])?;
        let bias = r.f64s(dims[k + 1])?;
        layers.push(DenseLayer { weights, bias });
    }
    let classifier = r.matrix(c, dims[depth])?;
    let spectral_u = (0..depth).map(|k| r.f64s(dims[k + 1])).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let activation = if flags & 0b100 != 0 {
        Activation::LeakyRelu { slope }
    } else {
        Activation::Relu
    };
    let mut model = MlpClassifier::from_parts(
        layers,
        classifier,
        activation,
        flags & 0b001 != 0,
        flags & 0b010 != 0,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    model.l2_epsilon = l2_epsilon;
    model.spectral_iterations = spectral_iterations;
    model.spectral_u = spectral_u;
    Ok(model)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
