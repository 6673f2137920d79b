//! Binary tensor container shared by model files and optimizer state files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSRM"            4 bytes
//! version   u32     currently 1
//! scale     u32
//! repeated until end of file:
//!   name_len u16, name bytes (UTF-8)
//!   dims     4 x u32
//!   data     prod(dims) x f32
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{ModelParams, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TSRM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub tensor: Tensor,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_records(scale: usize, records: &[(&str, &Tensor)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(scale as u32).to_le_bytes());
    for (name, t) in records {
        let len = u16::try_from(name.len())
            .map_err(|_| format_err(format!("record name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        for d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| format_err(format!("dimension too large in {name}")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                format_err(format!(
                    "truncated file: needed {n} bytes for {what} at offset {}, {} left",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Parse a container. Returns `(version, scale, records)`.
pub fn read_records(bytes: &[u8]) -> Result<(u32, u32, Vec<Record>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(format!(
            "bad magic bytes {:?}, expected \"TSRM\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let scale = cur.u32("scale")?;
    let mut records = Vec::new();
    while !cur.done() {
        let len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| format_err("record name is not UTF-8"))?
            .to_owned();
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = cur.u32("dims")? as usize;
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| format_err(format!("record {name}: dimensions overflow")))?;
        let raw = cur.take(n, &format!("data of {name}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(Record {
            tensor: Tensor::from_vec(shape, data)?,
            name,
        });
    }
    Ok((version, scale, records))
}

/// Records keyed by name; duplicates are a format error.
pub(crate) fn index_records(records: Vec<Record>) -> Result<HashMap<String, Tensor>> {
    let mut map = HashMap::with_capacity(records.len());
    for r in records {
        if map.insert(r.name.clone(), r.tensor).is_some() {
            return Err(format_err(format!("duplicate record {}", r.name)));
        }
    }
    Ok(map)
}

pub(crate) fn params_from_records(scale: u32, records: Vec<Record>) -> Result<ModelParams> {
    let config = NetworkConfig::new(scale as usize)
        .map_err(|_| format_err(format!("unsupported scale {scale}")))?;
    let mut params = ModelParams::zeros(config)?;
    let mut map = index_records(records)?;
    let expected: Vec<(String, [usize; 4])> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    for (slot, (name, shape)) in expected.into_iter().enumerate() {
        let t = map
            .remove(&name)
            .ok_or_else(|| format_err(format!("missing tensor {name}")))?;
        if t.shape() != shape {
            return Err(format_err(format!(
                "tensor {name} has shape {:?}, expected {shape:?} for scale {scale}",
                t.shape()
            )));
        }
        if !t.is_finite() {
            return Err(format_err(format!(
                "tensor {name} contains non-finite values"
            )));
        }
        let kernel = &mut params.kernels[slot / 2];
        if slot % 2 == 0 {
            kernel.weights = t;
        } else {
            kernel.bias = t;
        }
    }
    if let Some(extra) = map.keys().next() {
        return Err(format_err(format!("unexpected tensor {extra}")));
    }
    Ok(params)
}

pub(crate) fn params_to_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let named = params.named_tensors();
    let records: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    write_records(params.config.scale, &records)
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, params_to_bytes(params)?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    let (_, scale, records) = read_records(&bytes)?;
    params_from_records(scale, records)
}
