//! Binary checkpoint files for encoders and CRF transition matrices.
//!
//! Model layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "TNCK"
//! version    u32      FORMAT_VERSION
//! kind       u8       0 = normalizer, 1 = tagger
//! header     u32 length + UTF-8 JSON {"config", "mode", "value_count"}
//! vocab      u32 count, then per token: u32 length + UTF-8 bytes
//! tensors    u32 count, then per tensor:
//!              u32 name length + UTF-8 name, u32 rank, rank x u32 dims,
//!              product(dims) x f64
//! ```
//!
//! CRF layout: `"TNCR"`, u32 version, u32 label count `L`, `L*L` f64
//! transitions in row-major (from, to) order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoding::CrfModel;
use crate::error::{Error, Result};
use crate::extraction::Tagger;
use crate::mlm::{ModelVocab, Normalizer, ValueMode};
use crate::nn::{Encoder, ModelConfig};

pub const FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 4] = b"TNCK";
const CRF_MAGIC: &[u8; 4] = b"TNCR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Normalizer = 0,
    Tagger = 1,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    mode: ValueMode,
    value_count: usize,
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    put_u32(w, b.len())?;
    w.write_all(b)?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn get_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(b)
}

fn get_string(r: &mut impl Read) -> Result<String> {
    String::from_utf8(get_bytes(r)?).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    if &m != magic {
        return Err(Error::Checkpoint(format!("bad magic {m:?}")));
    }
    let v = get_u32(r)?;
    if v != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn write_model(w: &mut impl Write, kind: ModelKind, enc: &Encoder, vocab: &ModelVocab) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    let header = Header { config: enc.config.clone(), mode: vocab.mode, value_count: vocab.value_count() };
    put_bytes(w, &serde_json::to_vec(&header)?)?;
    put_u32(w, vocab.len())?;
    for t in vocab.tokens() {
        put_bytes(w, t.as_bytes())?;
    }
    put_u32(w, enc.tensors().len())?;
    for t in enc.tensors() {
        put_bytes(w, t.name.as_bytes())?;
        put_u32(w, t.shape.len())?;
        for &d in &t.shape {
            put_u32(w, d)?;
        }
        let len: usize = t.shape.iter().product();
        let mut buf = Vec::with_capacity(len * 8);
        for v in &enc.params[t.off..t.off + len] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_model(r: &mut impl Read, expected: ModelKind) -> Result<(Encoder, ModelVocab)> {
    check_magic(r, MODEL_MAGIC)?;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    if kind[0] != expected as u8 {
        return Err(Error::Checkpoint(format!("checkpoint holds model kind {} not {:?}", kind[0], expected)));
    }
    let header: Header = serde_json::from_slice(&get_bytes(r)?)?;
    let n = get_u32(r)? as usize;
    let tokens = (0..n).map(|_| get_string(r)).collect::<Result<Vec<_>>>()?;
    let vocab = ModelVocab::from_tokens(header.mode, header.value_count, &tokens)?;
    let mut enc = Encoder::new(header.config)?;
    let count = get_u32(r)? as usize;
    if count != enc.tensors().len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", enc.tensors().len())));
    }
    let infos = enc.tensors().to_vec();
    for info in infos {
        let name = get_string(r)?;
        let rank = get_u32(r)? as usize;
        let shape = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != info.name || shape != info.shape {
            return Err(Error::Checkpoint(format!("tensor {name:?} {shape:?} does not match {:?} {:?}", info.name, info.shape)));
        }
        let len: usize = shape.iter().product();
        let vals = get_f64s(r, len)?;
        enc.params[info.off..info.off + len].copy_from_slice(&vals);
    }
    Ok((enc, vocab))
}

pub fn write_normalizer(w: &mut impl Write, model: &Normalizer) -> Result<()> {
    write_model(w, ModelKind::Normalizer, &model.encoder, &model.vocab)
}

pub fn read_normalizer(r: &mut impl Read) -> Result<Normalizer> {
    let (enc, vocab) = read_model(r, ModelKind::Normalizer)?;
    Normalizer::new(enc, vocab)
}

pub fn write_tagger(w: &mut impl Write, model: &Tagger) -> Result<()> {
    write_model(w, ModelKind::Tagger, &model.encoder, &model.vocab)
}

pub fn read_tagger(r: &mut impl Read) -> Result<Tagger> {
    let (enc, vocab) = read_model(r, ModelKind::Tagger)?;
    Tagger::new(enc, vocab)
}

pub fn write_crf(w: &mut impl Write, crf: &CrfModel) -> Result<()> {
    w.write_all(CRF_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    put_u32(w, crf.labels)?;
    let mut buf = Vec::with_capacity(crf.transitions.len() * 8);
    for v in &crf.transitions {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_crf(r: &mut impl Read) -> Result<CrfModel> {
    check_magic(r, CRF_MAGIC)?;
    let labels = get_u32(r)? as usize;
    let transitions = get_f64s(r, labels * labels)?;
    if transitions.iter().any(|t| !t.is_finite()) {
        return Err(Error::Checkpoint("non-finite transition score".into()));
    }
    Ok(CrfModel { labels, transitions })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    Ok(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_normalizer(path: impl AsRef<Path>, model: &Normalizer) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_normalizer(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_normalizer(path: impl AsRef<Path>) -> Result<Normalizer> {
    read_normalizer(&mut open(path.as_ref())?)
}

pub fn save_tagger(path: impl AsRef<Path>, model: &Tagger) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_tagger(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_tagger(path: impl AsRef<Path>) -> Result<Tagger> {
    read_tagger(&mut open(path.as_ref())?)
}

pub fn save_crf(path: impl AsRef<Path>, crf: &CrfModel) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_crf(&mut w, crf)?;
    w.flush()?;
    Ok(())
}

pub fn load_crf(path: impl AsRef<Path>) -> Result<CrfModel> {
    read_crf(&mut open(path.as_ref())?)
}
