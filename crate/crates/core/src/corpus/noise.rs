use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::generate::gen_utterance;
use super::lexicon::Lexicon;
use super::synth::{normalize_active, render_word, synth_speech, Voice, WordSignature, SPEECH_RMS};
use super::Waveform;
use crate::error::{Error, Result};

/// Signature ids at or above this value never belong to the lexicon.
pub const OFF_VOCAB_BASE: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Brown, NoiseKind::Babble];
}

/// Procedural background clips. Immutable once built.
#[derive(Debug, Clone)]
pub struct NoiseBank {
    clips: Vec<(NoiseKind, Waveform)>,
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

// Paul Kellet's refined pink filter.
fn pink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut b = [0f64; 7];
    white(rng, n)
        .into_iter()
        .map(|w| {
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

fn brown(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut acc = 0f64;
    white(rng, n)
        .into_iter()
        .map(|w| {
            // leaky integrator keeps the walk bounded
            acc = 0.995 * acc + 0.1 * w;
            acc
        })
        .collect()
}

fn babble(rng: &mut ChaCha8Rng, n: usize, sample_rate: u32) -> Vec<f64> {
    let mut mix = vec![0f64; n];
    let n_voices = rng.gen_range(8..=12);
    let sr = sample_rate as f64;
    for _ in 0..n_voices {
        let voice = Voice::from_seed(rng.gen());
        let mut track = vec![0f32; n];
        let mut spans = Vec::new();
        let mut t = rng.gen_range(0.0..0.3) * sr;
        loop {
            let len = rng.gen_range(0.12..0.4) * sr;
            let (a, b) = (t as usize, (t + len) as usize);
            if b > n {
                break;
            }
            let sig = WordSignature::for_word(OFF_VOCAB_BASE + rng.gen_range(0..10_000u64));
            render_word(&mut track[a..b], sample_rate, &sig, &voice);
            spans.push((a, b));
            t += len + rng.gen_range(0.02..0.25) * sr;
        }
        normalize_active(&mut track, &spans, SPEECH_RMS);
        for (m, x) in mix.iter_mut().zip(&track) {
            *m += *x as f64;
        }
    }
    mix
}

fn finish(raw: Vec<f64>, sample_rate: u32) -> Waveform {
    let p = raw.iter().map(|x| x * x).sum::<f64>() / raw.len().max(1) as f64;
    let g = if p > 0.0 { SPEECH_RMS / p.sqrt() } else { 0.0 };
    Waveform {
        sample_rate,
        samples: raw.into_iter().map(|x| (x * g) as f32).collect(),
    }
}

impl NoiseBank {
    /// Builds `per_kind` clips of each [`NoiseKind`], each `seconds` long.
    pub fn new(seed: u64, per_kind: usize, seconds: f64, sample_rate: u32) -> Result<Self> {
        if per_kind == 0 || seconds <= 0.0 {
            return Err(Error::Validation("noise bank needs at least one non-empty clip".into()));
        }
        let n = (seconds * sample_rate as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut clips = Vec::with_capacity(per_kind * 4);
        for kind in NoiseKind::ALL {
            for _ in 0..per_kind {
                let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
                let raw = match kind {
                    NoiseKind::White => white(&mut r, n),
                    NoiseKind::Pink => pink(&mut r, n),
                    NoiseKind::Brown => brown(&mut r, n),
                    NoiseKind::Babble => babble(&mut r, n, sample_rate),
                };
                clips.push((kind, finish(raw, sample_rate)));
            }
        }
        Ok(Self { clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clip(&self, id: usize) -> Result<&Waveform> {
        self.clips
            .get(id)
            .map(|c| &c.1)
            .ok_or_else(|| Error::Data(format!("noise id {id} out of range ({})", self.clips.len())))
    }

    pub fn kind(&self, id: usize) -> Option<NoiseKind> {
        self.clips.get(id).map(|c| c.0)
    }
}

/// Competing talkers: dense single-speaker monologues of `words` words,
/// each with its own voice.
#[derive(Debug, Clone)]
pub struct InterfererBank {
    clips: Vec<Waveform>,
}

impl InterfererBank {
    pub fn new(seed: u64, size: usize, words: (usize, usize), lexicon: &Lexicon, sample_rate: u32) -> Result<Self> {
        if size == 0 {
            return Err(Error::Validation("interferer bank needs at least one clip".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1A7E_5F00_D00D);
        let mut clips = Vec::with_capacity(size);
        while clips.len() < size {
            let utt = gen_utterance(rng.gen(), words, lexicon)?;
            let n = utt.n_samples(sample_rate);
            clips.push(synth_speech(&utt.sides[0], lexicon, rng.gen(), n, sample_rate));
        }
        Ok(Self { clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clip(&self, id: usize) -> Result<&Waveform> {
        self.clips
            .get(id)
            .ok_or_else(|| Error::Data(format!("interferer id {id} out of range ({})", self.clips.len())))
    }
}
