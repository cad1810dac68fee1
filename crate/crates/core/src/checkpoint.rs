//! Versioned binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      b"TORN"
//! version    u16            (currently 1)
//! meta_len   u32            (UTF-8 "key = value" lines)
//! meta       meta_len bytes
//! n_tensors  u32
//! tensor*    name_len u16, name bytes,
//!            dtype u8 (0 = f32, 1 = f64), rank u8,
//!            dims  rank x u32,
//!            data  product(dims) raw values
//! ```
//!
//! Tensors are the model parameters in registration order followed by each
//! norm layer's `<prefix>.running_mean` / `<prefix>.running_var`. Every
//! declared length is validated against the remaining bytes before any read.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{build_model, config_from_kv, config_to_kv, Model};
use crate::tensor::{Dtype, Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"TORN";
pub const VERSION: u16 = 1;

/// Order-preserving `key = value` metadata document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    pairs: Vec<(String, String)>,
}

impl CheckpointMeta {
    pub fn new() -> CheckpointMeta {
        CheckpointMeta::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        match self.pairs.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => *v = value.to_string(),
            None => self.pairs.push((key.to_string(), value.to_string())),
        }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<CheckpointMeta> {
        let mut meta = CheckpointMeta::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            meta.pairs
                .push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(meta)
    }
}

pub(crate) fn encode_tensor<T: Scalar>(name: &str, t: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match T::DTYPE {
        Dtype::F32 => {
            for &v in t.data() {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in t.data() {
                out.extend_from_slice(&v.to_f64().to_le_bytes());
            }
        }
    }
}

/// Bounds-checked reader naming the section of any failure.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { bytes, at: 0 }
    }

    pub fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Checkpoint {
                section,
                msg: format!(
                    "need {n} bytes at offset {}, only {} remain",
                    self.at,
                    self.bytes.len() - self.at
                ),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub fn u16(&mut self, section: &'static str) -> Result<u16> {
        let s = self.take(2, section)?;
        Ok(u16::from_le_bytes([s[0], s[1]]))
    }

    pub fn u32(&mut self, section: &'static str) -> Result<u32> {
        let s = self.take(4, section)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }
}

pub(crate) fn decode_tensor<T: Scalar>(r: &mut Reader<'_>) -> Result<(String, Tensor<T>)> {
    let name_len = r.u16("tensor header")? as usize;
    let name = std::str::from_utf8(r.take(name_len, "tensor header")?)
        .map_err(|_| Error::Checkpoint {
            section: "tensor header",
            msg: "tensor name is not UTF-8".to_string(),
        })?
        .to_string();
    let dtype_code = r.take(1, "tensor header")?[0];
    let dtype = Dtype::from_code(dtype_code).ok_or(Error::Checkpoint {
        section: "tensor header",
        msg: format!("unknown dtype code {dtype_code} for '{name}'"),
    })?;
    if dtype != T::DTYPE {
        return Err(Error::Checkpoint {
            section: "tensor header",
            msg: format!("tensor '{name}' stored as {dtype:?}, expected {:?}", T::DTYPE),
        });
    }
    let rank = r.take(1, "tensor header")?[0] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32("tensor header")? as usize);
    }
    let count: usize = shape.iter().product();
    let raw = r.take(count * dtype.size_bytes(), "tensor data")?;
    let data: Vec<T> = match dtype {
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect(),
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|c| {
                T::from_f64(f64::from_le_bytes([
                    c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7],
                ]))
            })
            .collect(),
    };
    Ok((name, Tensor::from_vec(&shape, data)?))
}

/// Serialize a model with its metadata. The config and seed are embedded so
/// the checkpoint is self-describing.
pub fn save_model<T: Scalar>(model: &Model<T>, extra_meta: &CheckpointMeta) -> Vec<u8> {
    let mut meta = CheckpointMeta::new();
    for (k, v) in config_to_kv(&model.config) {
        meta.set(&k, v);
    }
    meta.set("seed", model.seed);
    for (k, v) in extra_meta.pairs() {
        meta.set(k, v);
    }
    let meta_text = meta.render();

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
    out.extend_from_slice(meta_text.as_bytes());

    let n_tensors = model.store.len() + 2 * model.store.buffers().len();
    out.extend_from_slice(&(n_tensors as u32).to_le_bytes());
    for p in model.store.params() {
        encode_tensor(&p.name, &p.value, &mut out);
    }
    for (prefix, stats) in model.store.buffers() {
        let mean = Tensor::from_vec(&[stats.mean.len()], stats.mean.clone()).expect("stats");
        let var = Tensor::from_vec(&[stats.var.len()], stats.var.clone()).expect("stats");
        encode_tensor(&format!("{prefix}.running_mean"), &mean, &mut out);
        encode_tensor(&format!("{prefix}.running_var"), &var, &mut out);
    }
    out
}

/// Parse, validate, and rebuild the model a checkpoint describes.
pub fn load_model<T: Scalar>(bytes: &[u8]) -> Result<(Model<T>, CheckpointMeta)> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint {
            section: "magic",
            msg: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint {
            section: "version",
            msg: format!("unsupported checkpoint version {version} (supported: {VERSION})"),
        });
    }
    let meta_len = r.u32("metadata")? as usize;
    let meta_text = std::str::from_utf8(r.take(meta_len, "metadata")?).map_err(|_| {
        Error::Checkpoint {
            section: "metadata",
            msg: "metadata is not UTF-8".to_string(),
        }
    })?;
    let meta = CheckpointMeta::parse(meta_text)?;

    let config = config_from_kv(&|key| meta.get(key))?;
    let seed: u64 = meta
        .get("seed")
        .and_then(|s| s.parse().ok())
        .ok_or(Error::Checkpoint {
            section: "metadata",
            msg: "missing or malformed 'seed'".to_string(),
        })?;
    let mut model: Model<T> = build_model(&config, seed)?;

    let n_tensors = r.u32("tensor table")? as usize;
    let expect = model.store.len() + 2 * model.store.buffers().len();
    if n_tensors != expect {
        return Err(Error::Checkpoint {
            section: "tensor table",
            msg: format!("{n_tensors} tensors for a model with {expect}"),
        });
    }
    for _ in 0..n_tensors {
        let (name, tensor): (String, Tensor<T>) = decode_tensor(&mut r)?;
        if let Some(prefix) = name.strip_suffix(".running_mean") {
            let idx = buffer_index(&model, prefix, &name)?;
            check_len(model.store.buffer(idx).1.mean.len(), tensor.len(), &name)?;
            model.store.buffer_mut(idx).mean = tensor.into_data();
        } else if let Some(prefix) = name.strip_suffix(".running_var") {
            let idx = buffer_index(&model, prefix, &name)?;
            check_len(model.store.buffer(idx).1.var.len(), tensor.len(), &name)?;
            model.store.buffer_mut(idx).var = tensor.into_data();
        } else {
            let idx = model.store.index_of(&name).map_err(|_| Error::Checkpoint {
                section: "tensor table",
                msg: format!("tensor '{name}' does not exist in this architecture"),
            })?;
            let p = model.store.get_mut(idx);
            if p.value.shape() != tensor.shape() {
                return Err(Error::Checkpoint {
                    section: "tensor table",
                    msg: format!(
                        "tensor '{name}' has shape {:?}, model expects {:?}",
                        tensor.shape(),
                        p.value.shape()
                    ),
                });
            }
            p.value = tensor;
        }
    }
    if r.remaining() != 0 {
        return Err(Error::Checkpoint {
            section: "tensor table",
            msg: format!("{} trailing bytes after the declared tensors", r.remaining()),
        });
    }
    Ok((model, meta))
}

fn buffer_index<T: Scalar>(model: &Model<T>, prefix: &str, name: &str) -> Result<usize> {
    model
        .store
        .buffer_index_of(prefix)
        .map_err(|_| Error::Checkpoint {
            section: "tensor table",
            msg: format!("running stats '{name}' do not exist in this architecture"),
        })
}

fn check_len(expect: usize, got: usize, name: &str) -> Result<()> {
    if expect != got {
        return Err(Error::Checkpoint {
            section: "tensor table",
            msg: format!("tensor '{name}' has {got} entries, model expects {expect}"),
        });
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))
}

/// Single-tensor blob in the same record format, used by the feature cache.
pub fn encode_feature_blob(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    encode_tensor("features", t, &mut out);
    out
}

pub fn decode_feature_blob(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint {
            section: "magic",
            msg: "bad feature cache magic".to_string(),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint {
            section: "version",
            msg: format!("unsupported feature cache version {version}"),
        });
    }
    let (name, tensor) = decode_tensor::<f32>(&mut r)?;
    if name != "features" {
        return Err(Error::Checkpoint {
            section: "tensor header",
            msg: format!("unexpected record '{name}' in feature cache"),
        });
    }
    Ok(tensor)
}
