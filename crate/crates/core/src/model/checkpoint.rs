use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::Params;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DPXCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params<f32>,
    pub vocab_hash: String,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
}

/// Layout: magic, version, JSON header length and bytes, tensor count, then
/// per tensor its name, shape and row-major little-endian f32 data.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header {
        version: VERSION,
        config: ck.params.config.clone(),
        vocab_hash: ck.vocab_hash.clone(),
        step: ck.step,
    })?;
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(ck.params.tensors.len() as u32).to_le_bytes());
    for t in &ck.params.tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &s in &t.shape {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Data("checkpoint truncated".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { buf: &bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Data(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)?;
    let mut params = Params::<f32>::zeros(&header.config)?;
    let n = r.u32()? as usize;
    if n != params.tensors.len() {
        return Err(Error::Data(format!("checkpoint has {n} tensors, config implies {}", params.tensors.len())));
    }
    for t in params.tensors.iter_mut() {
        let nl = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(nl)?).map_err(|e| Error::Data(e.to_string()))?;
        let nd = r.take(1)?[0] as usize;
        let shape: Vec<usize> = (0..nd).map(|_| r.u32().map(|x| x as usize)).collect::<Result<_>>()?;
        if name != t.name || shape != t.shape {
            return Err(Error::Data(format!("tensor {name} {shape:?} does not match {} {:?}", t.name, t.shape)));
        }
        let raw = r.take(t.len() * 4)?;
        for (x, c) in t.data.iter_mut().zip(raw.chunks_exact(4)) {
            *x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    if !params.all_finite() {
        return Err(Error::Numeric("checkpoint contains non-finite values".into()));
    }
    Ok(Checkpoint { params, vocab_hash: header.vocab_hash, step: header.step })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub task: String,
    pub loss: f64,
}

/// Line-delimited loss curve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossLog {
    pub records: Vec<LossRecord>,
}

impl LossLog {
    pub fn push(&mut self, step: usize, task: &str, loss: f64) {
        self.records.push(LossRecord { step, task: task.into(), loss });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for line in BufReader::new(fs::File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { records })
    }

    /// Mean loss of the last `n` records of `task`.
    pub fn tail_mean(&self, task: &str, n: usize) -> Option<f64> {
        let xs: Vec<f64> = self.records.iter().filter(|r| r.task == task).map(|r| r.loss).collect();
        if xs.is_empty() {
            return None;
        }
        let tail = &xs[xs.len().saturating_sub(n)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let params = Params::<f32>::init(&ModelConfig::small(36, 16, 1, 2), 3).unwrap();
        let ck = Checkpoint { params, vocab_hash: "abcd".into(), step: 7 };
        save_checkpoint(&p, &ck).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), ck);
        fs::write(&p, b"garbage").unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
