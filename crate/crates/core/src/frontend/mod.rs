//! Toy stand-ins for the acoustic codec and the lip-feature encoder.

mod acoustic;
mod grids;
mod visual;

pub use acoustic::{filterbank, AcousticEncoder, N_BANDS};
pub use grids::{null_grid, read_grid, write_grid, AcousticTokenGrid, NullGrid, VisualFeatureGrid, GridKind, AUDIO_NULL};
pub use visual::visual_encode;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenizerMode {
    /// Random projections of the filterbank; keeps voice detail.
    Acoustic,
    /// Activity plus word-segment class; voice-invariant.
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub mode: TokenizerMode,
    pub codebooks: usize,
    pub codebook_size: usize,
    pub visual_dims: usize,
    pub lookahead: usize,
    pub projection_seed: u64,
    /// Standard deviation of the visual jitter.
    pub jitter: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mode: TokenizerMode::Acoustic,
            codebooks: 16,
            codebook_size: 64,
            visual_dims: 16,
            lookahead: 2,
            projection_seed: 0x5EED,
            jitter: 0.05,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.codebooks == 0 || !(2..=u16::MAX as usize).contains(&self.codebook_size) {
            return Err(crate::Error::Config("codebooks must be ≥ 1 and codebook_size in 2..65535".into()));
        }
        if self.visual_dims < visual::MIN_DIMS {
            return Err(crate::Error::Config(format!("visual_dims must be ≥ {}", visual::MIN_DIMS)));
        }
        Ok(())
    }

    /// Short digest used in grid headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }
}
