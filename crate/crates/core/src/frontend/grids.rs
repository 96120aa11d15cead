use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token id marking a missing audio frame; embeds to zero.
pub const AUDIO_NULL: u16 = u16::MAX;

/// Frames × codebooks matrix of codebook ids, frame-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcousticTokenGrid {
    tokens: Vec<u16>,
    codebooks: usize,
    codebook_size: usize,
}

impl AcousticTokenGrid {
    pub fn from_tokens(tokens: Vec<u16>, codebooks: usize, codebook_size: usize) -> Result<Self> {
        if codebooks == 0 || tokens.len() % codebooks != 0 {
            return Err(Error::Validation(format!(
                "{} tokens do not fill {codebooks} codebooks",
                tokens.len()
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t != AUDIO_NULL && t as usize >= codebook_size) {
            return Err(Error::OutOfVocabulary { token: bad as u32, size: codebook_size });
        }
        Ok(Self { tokens, codebooks, codebook_size })
    }

    pub fn null(frames: usize, codebooks: usize, codebook_size: usize) -> Self {
        Self {
            tokens: vec![AUDIO_NULL; frames * codebooks],
            codebooks,
            codebook_size,
        }
    }

    pub fn frames(&self) -> usize {
        self.tokens.len() / self.codebooks.max(1)
    }

    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn frame(&self, n: usize) -> &[u16] {
        &self.tokens[n * self.codebooks..(n + 1) * self.codebooks]
    }

    pub fn frame_mut(&mut self, n: usize) -> &mut [u16] {
        &mut self.tokens[n * self.codebooks..(n + 1) * self.codebooks]
    }

    pub fn is_null(&self, n: usize) -> bool {
        self.frame(n).iter().all(|&t| t == AUDIO_NULL)
    }

    pub fn tokens(&self) -> &[u16] {
        &self.tokens
    }

    /// Frames `[0, n)`.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.frames());
        Self {
            tokens: self.tokens[..n * self.codebooks].to_vec(),
            ..*self
        }
    }

    /// Replaces every frame with NULL, keeping the length.
    pub fn nulled(&self) -> Self {
        Self::null(self.frames(), self.codebooks, self.codebook_size)
    }
}

/// Frames × dims continuous features with a per-frame presence flag.
/// Absent frames hold zeros and embed to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureGrid {
    features: Vec<f32>,
    present: Vec<bool>,
    dims: usize,
}

impl VisualFeatureGrid {
    pub fn from_features(features: Vec<f32>, dims: usize) -> Result<Self> {
        if dims == 0 || features.len() % dims != 0 {
            return Err(Error::Validation(format!("{} values do not fill {dims} dims", features.len())));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("visual features must be finite".into()));
        }
        let frames = features.len() / dims;
        Ok(Self { features, present: vec![true; frames], dims })
    }

    pub fn null(frames: usize, dims: usize) -> Self {
        Self {
            features: vec![0.0; frames * dims],
            present: vec![false; frames],
            dims,
        }
    }

    pub fn frames(&self) -> usize {
        self.present.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn frame(&self, n: usize) -> &[f32] {
        &self.features[n * self.dims..(n + 1) * self.dims]
    }

    pub fn is_present(&self, n: usize) -> bool {
        self.present[n]
    }

    pub fn set_frame(&mut self, n: usize, values: &[f32], present: bool) {
        let dst = &mut self.features[n * self.dims..(n + 1) * self.dims];
        if present {
            dst.copy_from_slice(values);
        } else {
            dst.fill(0.0);
        }
        self.present[n] = present;
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn nulled(&self) -> Self {
        Self::null(self.frames(), self.dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridKind {
    Audio,
    Visual,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NullGrid {
    Audio(AcousticTokenGrid),
    Visual(VisualFeatureGrid),
}

/// A grid of NULL markers. `width` is codebooks for audio, dims for visual.
pub fn null_grid(kind: GridKind, frames: usize, width: usize, codebook_size: usize) -> NullGrid {
    match kind {
        GridKind::Audio => NullGrid::Audio(AcousticTokenGrid::null(frames, width, codebook_size)),
        GridKind::Visual => NullGrid::Visual(VisualFeatureGrid::null(frames, width)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridHeader {
    kind: GridKind,
    frames: usize,
    width: usize,
    #[serde(default)]
    codebook_size: usize,
    config_hash: String,
}

/// Writes a JSON header line followed by frame-major little-endian values
/// (u16 ids for audio; f32 values then one presence byte per frame for visual).
pub fn write_grid(path: &Path, grid: &NullGrid, config_hash: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let (header, body) = match grid {
        NullGrid::Audio(a) => {
            let mut body = Vec::with_capacity(a.tokens.len() * 2);
            a.tokens.iter().for_each(|t| body.extend_from_slice(&t.to_le_bytes()));
            (
                GridHeader {
                    kind: GridKind::Audio,
                    frames: a.frames(),
                    width: a.codebooks,
                    codebook_size: a.codebook_size,
                    config_hash: config_hash.into(),
                },
                body,
            )
        }
        NullGrid::Visual(v) => {
            let mut body = Vec::with_capacity(v.features.len() * 4 + v.present.len());
            v.features.iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes()));
            body.extend(v.present.iter().map(|&p| p as u8));
            (
                GridHeader {
                    kind: GridKind::Visual,
                    frames: v.frames(),
                    width: v.dims,
                    codebook_size: 0,
                    config_hash: config_hash.into(),
                },
                body,
            )
        }
    };
    writeln!(f, "{}", serde_json::to_string(&header)?)?;
    f.write_all(&body)?;
    Ok(())
}

/// Reads a grid written by [`write_grid`], returning it with its config hash.
pub fn read_grid(path: &Path) -> Result<(NullGrid, String)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: GridHeader = serde_json::from_str(line.trim_end())?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let short = |want: usize| Error::Data(format!("{}: body {} bytes, header implies {want}", path.display(), body.len()));
    let grid = match h.kind {
        GridKind::Audio => {
            let want = h.frames * h.width * 2;
            if body.len() != want {
                return Err(short(want));
            }
            let tokens = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            NullGrid::Audio(AcousticTokenGrid::from_tokens(tokens, h.width, h.codebook_size)?)
        }
        GridKind::Visual => {
            let nf = h.frames * h.width;
            let want = nf * 4 + h.frames;
            if body.len() != want || h.width == 0 {
                return Err(short(want));
            }
            let features = body[..nf * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let present = body[nf * 4..].iter().map(|&b| b != 0).collect();
            NullGrid::Visual(VisualFeatureGrid { features, present, dims: h.width })
        }
    };
    Ok((grid, h.config_hash))
}

impl NullGrid {
    pub fn into_audio(self) -> Result<AcousticTokenGrid> {
        match self {
            NullGrid::Audio(a) => Ok(a),
            NullGrid::Visual(_) => Err(Error::Data("expected an audio grid".into())),
        }
    }

    pub fn into_visual(self) -> Result<VisualFeatureGrid> {
        match self {
            NullGrid::Visual(v) => Ok(v),
            NullGrid::Audio(_) => Err(Error::Data("expected a visual grid".into())),
        }
    }
}
