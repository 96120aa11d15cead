use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::grids::AcousticTokenGrid;
use super::{EncoderConfig, TokenizerMode};
use crate::corpus::{
    gen_conversation, mix_at_snr, synth_speech, ConversationParams, Lexicon, NoiseBank, Voice, Waveform, WordSignature,
};
use crate::error::{Error, Result};

/// Filterbank bands per frame.
pub const N_BANDS: usize = 32;

const LOG_FLOOR: f64 = 1e-7;
/// Frames below this RMS count as silence in semantic mode.
const ACTIVITY_RMS: f64 = 0.01;

/// Triangular mel bands over the magnitude spectrum of one frame.
#[derive(Debug, Clone)]
struct Bands {
    /// Per band: (first bin, weights).
    weights: Vec<(usize, Vec<f64>)>,
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl Bands {
    fn new(frame_len: usize, sample_rate: u32) -> Self {
        let n_bins = frame_len / 2 + 1;
        let hz_per_bin = sample_rate as f64 / frame_len as f64;
        let (lo, hi) = (mel(60.0), mel(7600.0f64.min(0.475 * sample_rate as f64)));
        let edges: Vec<f64> = (0..N_BANDS + 2)
            .map(|i| inv_mel(lo + (hi - lo) * i as f64 / (N_BANDS + 1) as f64) / hz_per_bin)
            .collect();
        let weights = (0..N_BANDS)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                let first = l.floor().max(0.0) as usize;
                let last = (r.ceil() as usize).min(n_bins - 1);
                let mut w: Vec<f64> = (first..=last)
                    .map(|k| {
                        let k = k as f64;
                        if k <= c {
                            ((k - l) / (c - l)).max(0.0)
                        } else {
                            ((r - k) / (r - c)).max(0.0)
                        }
                    })
                    .collect();
                if w.iter().all(|&x| x == 0.0) {
                    // narrower than a bin: take the nearest one
                    let near = (c.round() as usize).clamp(first, last);
                    w[near - first] = 1.0;
                }
                (first, w)
            })
            .collect();
        Self { weights }
    }
}

/// Reusable FFT plan plus band layout for one frame size.
#[derive(Clone)]
struct Analyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bands: Bands,
}

impl std::fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Analyzer").field("frame_len", &self.window.len()).finish()
    }
}

impl Analyzer {
    fn new(frame_len: usize, sample_rate: u32) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        let window = (0..frame_len)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / frame_len as f64).cos())
            .collect();
        Self { fft, window, bands: Bands::new(frame_len, sample_rate) }
    }

    fn log_bands(&self, frame: &[f32], buf: &mut Vec<Complex<f64>>) -> [f64; N_BANDS] {
        buf.clear();
        buf.extend(frame.iter().zip(&self.window).map(|(&x, &w)| Complex::new(x as f64 * w, 0.0)));
        buf.resize(self.window.len(), Complex::new(0.0, 0.0));
        self.fft.process(buf);
        let norm = 1.0 / self.window.len() as f64;
        let mut out = [0f64; N_BANDS];
        for (o, (first, w)) in out.iter_mut().zip(&self.bands.weights) {
            let e: f64 = w.iter().enumerate().map(|(j, &wj)| wj * buf[first + j].norm_sqr()).sum();
            *o = (e * norm + LOG_FLOOR).ln();
        }
        out
    }
}

/// Log-magnitude filterbank of one frame of samples.
pub fn filterbank(frame: &[f32], sample_rate: u32) -> [f64; N_BANDS] {
    Analyzer::new(frame.len(), sample_rate).log_bands(frame, &mut Vec::new())
}

/// Gain-, tilt- and pitch-insensitive shape of a filterbank frame.
fn envelope_shape(fb: &[f64; N_BANDS]) -> [f64; N_BANDS] {
    let mut s = [0f64; N_BANDS];
    for (i, v) in s.iter_mut().enumerate() {
        let lo = i.saturating_sub(2);
        let hi = (i + 2).min(N_BANDS - 1);
        *v = fb[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    }
    // remove the least-squares line across band index
    let n = N_BANDS as f64;
    let mx = (n - 1.0) / 2.0;
    let my = s.iter().sum::<f64>() / n;
    let sxy: f64 = s.iter().enumerate().map(|(i, &y)| (i as f64 - mx) * (y - my)).sum();
    let sxx: f64 = (0..N_BANDS).map(|i| (i as f64 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    for (i, v) in s.iter_mut().enumerate() {
        *v -= my + slope * (i as f64 - mx);
    }
    let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    s.iter_mut().for_each(|x| *x /= norm);
    s
}

fn frame_rms(frame: &[f32]) -> f64 {
    (frame.iter().map(|&x| x as f64 * x as f64).sum::<f64>() / frame.len().max(1) as f64).sqrt()
}

fn mix_hash(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded frame-level tokenizer. Configure once, then share.
#[derive(Debug, Clone)]
pub struct AcousticEncoder {
    cfg: EncoderConfig,
    sample_rate: u32,
    analyzer: Analyzer,
    projections: Vec<[f64; N_BANDS]>,
    ranges: Vec<(f64, f64)>,
    templates: Vec<[f64; N_BANDS]>,
}

impl AcousticEncoder {
    /// Draws projections from `cfg.projection_seed` and calibrates bin ranges
    /// (1st–99th percentile) on a small corpus derived from the same seed.
    pub fn new(cfg: &EncoderConfig, lexicon: &Lexicon, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        if lexicon.is_empty() {
            return Err(Error::Validation("encoder calibration needs a non-empty lexicon".into()));
        }
        let frame_len = (sample_rate / crate::grid::FPS) as usize;
        let analyzer = Analyzer::new(frame_len, sample_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.projection_seed);
        let projections: Vec<[f64; N_BANDS]> = (0..cfg.codebooks)
            .map(|_| {
                let mut p = [0f64; N_BANDS];
                p.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                p.iter_mut().for_each(|x| *x /= norm);
                p
            })
            .collect();
        let mut enc = Self {
            cfg: cfg.clone(),
            sample_rate,
            analyzer,
            projections,
            ranges: vec![(0.0, 1.0); cfg.codebooks],
            templates: Vec::new(),
        };
        enc.calibrate(lexicon, rng.gen())?;
        enc.templates = enc.build_templates(lexicon);
        Ok(enc)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn calibrate(&mut self, lexicon: &Lexicon, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ConversationParams { n_turns: 3, ..Default::default() };
        let noise = NoiseBank::new(rng.gen(), 1, 2.0, self.sample_rate)?;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.cfg.codebooks];
        let mut buf = Vec::new();
        for _ in 0..4 {
            let conv = gen_conversation(rng.gen(), &params, lexicon)?;
            let n = conv.n_samples(self.sample_rate);
            for side in &conv.sides {
                let clean = synth_speech(side, lexicon, rng.gen(), n, self.sample_rate);
                let id = rng.gen_range(0..noise.len());
                let noisy = mix_at_snr(&clean, noise.clip(id)?, rng.gen_range(-8.0..12.0))
                    .map(|m| m.0)
                    .unwrap_or_else(|_| clean.clone());
                for w in [&clean, &noisy] {
                    for frame in w.samples.chunks(self.analyzer.window.len()) {
                        let fb = self.analyzer.log_bands(frame, &mut buf);
                        for (v, p) in values.iter_mut().zip(&self.projections) {
                            v.push(dot(p, &fb));
                        }
                    }
                }
            }
        }
        for (r, v) in self.ranges.iter_mut().zip(values.iter_mut()) {
            v.sort_by(|a, b| a.total_cmp(b));
            let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
            let (lo, hi) = (q(0.01), q(0.99));
            *r = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
        }
        Ok(())
    }

    /// Voice-averaged envelope shape of every (word, segment).
    fn build_templates(&self, lexicon: &Lexicon) -> Vec<[f64; N_BANDS]> {
        let frame_len = self.analyzer.window.len();
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(lexicon.len() * 2);
        let voices: Vec<Voice> = (0..6u64).map(|s| Voice::from_seed(0xC0FFEE + s)).collect();
        for idx in 0..lexicon.len() {
            let sig = WordSignature::for_word(crate::corpus::signature_id_of(lexicon, idx));
            for seg in 0..2 {
                let mut acc = [0f64; N_BANDS];
                for v in &voices {
                    let mut s = vec![0f32; frame_len * 8];
                    crate::corpus::render_signature(&mut s, self.sample_rate, &sig, v);
                    for f in seg * 4 + 1..seg * 4 + 3 {
                        let fb = self.analyzer.log_bands(&s[f * frame_len..(f + 1) * frame_len], &mut buf);
                        let e = envelope_shape(&fb);
                        acc.iter_mut().zip(e).for_each(|(a, x)| *a += x);
                    }
                }
                let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                acc.iter_mut().for_each(|x| *x /= norm);
                out.push(acc);
            }
        }
        out
    }

    fn quantize(&self, i: usize, x: f64) -> u16 {
        let (lo, hi) = self.ranges[i];
        let k = self.cfg.codebook_size;
        (((x - lo) / (hi - lo) * k as f64).floor().clamp(0.0, (k - 1) as f64)) as u16
    }

    /// Template class of a frame, `None` when silent.
    pub fn semantic_class(&self, frame: &[f32]) -> Option<usize> {
        if frame_rms(frame) < ACTIVITY_RMS {
            return None;
        }
        let e = envelope_shape(&self.analyzer.log_bands(frame, &mut Vec::new()));
        self.templates
            .iter()
            .enumerate()
            .map(|(c, t)| (c, dot(t, &e)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
    }

    fn semantic_code(&self, i: usize, class: Option<usize>) -> u16 {
        match class {
            None => 0,
            Some(c) => {
                let k = self.cfg.codebook_size as u64 - 1;
                1 + (mix_hash(self.cfg.projection_seed ^ c as u64, i as u64) % k) as u16
            }
        }
    }

    /// Tokenizes `w` frame by frame; a ragged tail is zero-padded.
    pub fn tokenize(&self, w: &Waveform) -> Result<AcousticTokenGrid> {
        if w.sample_rate != self.sample_rate {
            return Err(Error::Validation(format!(
                "encoder runs at {} Hz, waveform is {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        let frame_len = self.analyzer.window.len();
        let cb = self.cfg.codebooks;
        let frames = w.samples.len().div_ceil(frame_len);
        let mut tokens = Vec::with_capacity(frames * cb);
        let mut buf = Vec::with_capacity(frame_len);
        let mut padded = vec![0f32; frame_len];
        for n in 0..frames {
            let end = ((n + 1) * frame_len).min(w.samples.len());
            let frame: &[f32] = if end - n * frame_len == frame_len {
                &w.samples[n * frame_len..end]
            } else {
                padded.fill(0.0);
                padded[..end - n * frame_len].copy_from_slice(&w.samples[n * frame_len..end]);
                &padded
            };
            match self.cfg.mode {
                TokenizerMode::Acoustic => {
                    let fb = self.analyzer.log_bands(frame, &mut buf);
                    for (i, p) in self.projections.iter().enumerate() {
                        tokens.push(self.quantize(i, dot(p, &fb)));
                    }
                }
                TokenizerMode::Semantic => {
                    let c = self.semantic_class(frame);
                    tokens.extend((0..cb).map(|i| self.semantic_code(i, c)));
                }
            }
        }
        AcousticTokenGrid::from_tokens(tokens, cb, self.cfg.codebook_size)
    }
}

fn dot(a: &[f64; N_BANDS], b: &[f64; N_BANDS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
