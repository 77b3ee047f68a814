//! Binary parameter and feature files, plus the sidecars that make a
//! checkpoint directory self-describing.
//!
//! Both binary formats start with an 8-byte magic and a little-endian `u32`
//! version. Tensors are stored as a rank byte, `u64` dimensions and
//! little-endian `f64` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use clas_core::model::{ClasModel, ModelConfig, Vocab};
use clas_core::tensor::{ParamSet, Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PARAMS_MAGIC: &[u8; 8] = b"CLASPRM\0";
const FEATURES_MAGIC: &[u8; 8] = b"CLASFEA\0";
const VERSION: u32 = 1;

pub const PARAMS_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const MODEL_FILE: &str = "model.toml";

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    let dims = t.shape().dims();
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.path, "truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(Error::format(self.path, "bad magic"));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::format(self.path, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.take(1)?[0] as usize;
        let dims: Vec<usize> = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let shape = Shape::from_dims(&dims).ok_or_else(|| Error::format(self.path, format!("bad shape {dims:?}")))?;
        let n = shape.numel();
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.path, "shape too large"))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor::new(shape, data)?)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    f.write_all(bytes).map_err(Error::io(path))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(Error::io(path))?;
    Ok(buf)
}

/// Parameter file: header, count, then `(name, tensor)` records in
/// registration order.
pub fn encode_params(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_tensor(&mut out, t);
    }
    out
}

pub fn decode_params(bytes: &[u8], path: &Path) -> Result<ParamSet> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    r.header(PARAMS_MAGIC)?;
    let n = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(path, "parameter name is not UTF-8"))?;
        let name = name.to_string();
        if params.find(&name).is_some() {
            return Err(Error::format(path, format!("duplicate parameter {name}")));
        }
        let t = r.tensor()?;
        params.add(&name, t);
    }
    r.finish()?;
    Ok(params)
}

pub fn write_features(path: &Path, t: &Tensor) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_tensor(&mut out, t);
    write_file(path, &out)
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = read_file(path)?;
    let mut r = Reader { buf: &bytes, pos: 0, path };
    r.header(FEATURES_MAGIC)?;
    let t = r.tensor()?;
    r.finish()?;
    Ok(t)
}

/// Architecture sidecar; the vocabulary lives in its own file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub feature_dim: usize,
    pub encoder_layers: usize,
    pub encoder_units: usize,
    pub decoder_layers: usize,
    pub decoder_units: usize,
    pub attention_dim: usize,
    pub attention_heads: usize,
    pub bias_encoder_units: usize,
    pub embedding_dim: usize,
}

impl ModelFile {
    pub fn from_config(c: &ModelConfig) -> Self {
        ModelFile {
            feature_dim: c.feature_dim,
            encoder_layers: c.encoder_layers,
            encoder_units: c.encoder_units,
            decoder_layers: c.decoder_layers,
            decoder_units: c.decoder_units,
            attention_dim: c.attention_dim,
            attention_heads: c.attention_heads,
            bias_encoder_units: c.bias_encoder_units,
            embedding_dim: c.embedding_dim,
        }
    }

    pub fn into_config(self, vocab: Vocab) -> ModelConfig {
        ModelConfig {
            feature_dim: self.feature_dim,
            encoder_layers: self.encoder_layers,
            encoder_units: self.encoder_units,
            decoder_layers: self.decoder_layers,
            decoder_units: self.decoder_units,
            attention_dim: self.attention_dim,
            attention_heads: self.attention_heads,
            bias_encoder_units: self.bias_encoder_units,
            embedding_dim: self.embedding_dim,
            vocab,
        }
    }
}

const SPACE_SYMBOL: &str = "<space>";

/// One symbol per line, the space grapheme written as `<space>`.
pub fn encode_vocab(v: &Vocab) -> String {
    v.symbols()
        .iter()
        .map(|s| if s == " " { format!("{SPACE_SYMBOL}\n") } else { format!("{s}\n") })
        .collect()
}

pub fn decode_vocab(text: &str) -> Result<Vocab> {
    let symbols = text
        .lines()
        .map(|l| if l == SPACE_SYMBOL { " ".to_string() } else { l.to_string() })
        .collect();
    Ok(Vocab::new(symbols)?)
}

pub fn save_model(dir: &Path, model: &ClasModel) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_file(&dir.join(PARAMS_FILE), &encode_params(model.params()))?;
    write_file(&dir.join(VOCAB_FILE), encode_vocab(model.vocab()).as_bytes())?;
    let toml = toml::to_string(&ModelFile::from_config(model.config())).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&dir.join(MODEL_FILE), toml.as_bytes())
}

pub fn load_model(dir: &Path) -> Result<ClasModel> {
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab_text = String::from_utf8(read_file(&vocab_path)?).map_err(|_| Error::format(&vocab_path, "not UTF-8"))?;
    let vocab = decode_vocab(&vocab_text).map_err(|e| Error::format(&vocab_path, e.to_string()))?;
    let model_path = dir.join(MODEL_FILE);
    let model_text = String::from_utf8(read_file(&model_path)?).map_err(|_| Error::format(&model_path, "not UTF-8"))?;
    let file: ModelFile = toml::from_str(&model_text).map_err(|e| Error::format(&model_path, e.to_string()))?;
    let params_path = dir.join(PARAMS_FILE);
    let params = decode_params(&read_file(&params_path)?, &params_path)?;
    ClasModel::from_params(file.into_config(vocab), params).map_err(|e| Error::format(&params_path, e.to_string()))
}
