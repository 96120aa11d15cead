use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::augment::MixSpec;
use super::Waveform;
use crate::error::{Error, Result};

/// Writes headerless little-endian f32 samples.
pub fn write_pcm_f32(path: &Path, w: &Waveform) -> Result<()> {
    let mut bytes = Vec::with_capacity(w.len() * 4);
    for &x in &w.samples {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_pcm_f32(path: &Path, sample_rate: u32) -> Result<Waveform> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Data(format!("{}: length {} is not a multiple of 4", path.display(), bytes.len())));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Waveform::new(sample_rate, samples)
}

/// Metadata stored next to each PCM file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSidecar {
    pub id: String,
    pub sample_rate: u32,
    pub n_samples: usize,
    pub mixspec: MixSpec,
}

impl AudioSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// One corpus manifest line. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub side_audio: [String; 2],
    pub mixed_audio: String,
    pub mixspec: MixSpec,
}

impl ManifestRecord {
    pub fn write_all(path: &Path, records: &[ManifestRecord]) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for r in records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn read_all(path: &Path) -> Result<Vec<ManifestRecord>> {
        let f = BufReader::new(fs::File::open(path)?);
        let mut out = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?,
            );
        }
        Ok(out)
    }
}
