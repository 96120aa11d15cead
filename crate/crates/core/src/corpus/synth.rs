use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lexicon::Lexicon;
use super::{SideScript, Waveform};
use crate::grid::TokenId;

/// Target RMS of speech-active samples.
pub const SPEECH_RMS: f64 = 0.1;

/// Speaker identity: pitch and spectral tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voice {
    pub f0: f64,
    /// Harmonic roll-off in dB per octave (negative).
    pub tilt_db_per_octave: f64,
    /// Multiplier applied to formant frequencies (vocal-tract length).
    pub formant_scale: f64,
}

impl Voice {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F0F0_1234_ABCD);
        Self {
            f0: (rng.gen_range(90f64.ln()..260f64.ln())).exp(),
            tilt_db_per_octave: rng.gen_range(-9.0..-3.0),
            formant_scale: rng.gen_range(0.94..1.06),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq: f64,
    pub bandwidth: f64,
    pub gain: f64,
}

/// Voice-independent spectral recipe of one word: two segments, each with
/// three formants and a pitch factor.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSignature {
    pub segments: [([Formant; 3], f64); 2],
}

impl WordSignature {
    pub fn for_word(word_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(word_id.wrapping_mul(0xA24B_AED4_963E_E407) ^ 0x77);
        let mut seg = || {
            let f1 = rng.gen_range(300.0..900.0);
            let f2 = rng.gen_range(1000.0..2400.0);
            let f3 = rng.gen_range(2500.0..3800.0);
            let formants = [
                Formant { freq: f1, bandwidth: rng.gen_range(90.0..160.0), gain: 1.0 },
                Formant { freq: f2, bandwidth: rng.gen_range(120.0..220.0), gain: rng.gen_range(0.4..1.0) },
                Formant { freq: f3, bandwidth: rng.gen_range(180.0..300.0), gain: rng.gen_range(0.2..0.6) },
            ];
            (formants, rng.gen_range(0.9..1.15))
        };
        let a = seg();
        let b = seg();
        Self { segments: [a, b] }
    }

    fn amplitude(formants: &[Formant; 3], freq: f64, voice: &Voice) -> f64 {
        let env: f64 = formants
            .iter()
            .map(|f| {
                let c = f.freq * voice.formant_scale;
                let z = (freq - c) / f.bandwidth;
                f.gain * (-0.5 * z * z).exp()
            })
            .sum();
        let octaves = (freq / 100.0).max(1e-3).log2();
        let tilt = 10f64.powf(voice.tilt_db_per_octave * octaves / 20.0);
        (env + 0.01) * tilt
    }
}

/// Stable signature id of a piece sequence: the lexicon index when known.
pub(crate) fn signature_id(lexicon: &Lexicon, pieces: &[TokenId]) -> u64 {
    match lexicon.lookup(pieces) {
        Some(i) => i as u64,
        None => pieces
            .iter()
            .fold(0xCBF2_9CE4_8422_2325u64, |h, p| (h ^ p.0 as u64).wrapping_mul(0x1000_0000_01B3)),
    }
}

/// Adds one rendered word to `out[start..end)`.
pub(crate) fn render_word(out: &mut [f32], sample_rate: u32, sig: &WordSignature, voice: &Voice) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let sr = sample_rate as f64;
    let ramp = ((0.005 * sr) as usize).min(n / 2).max(1);
    let nyquist_guard = 0.45 * sr;
    let half = n / 2;
    // phase accumulators per harmonic, carried across segments
    let mut phases = [0f64; 64];
    for (s, (formants, pitch)) in sig.segments.iter().enumerate() {
        let (lo, hi) = if s == 0 { (0, half) } else { (half, n) };
        let f0 = voice.f0 * pitch;
        let n_harm = ((nyquist_guard.min(7000.0) / f0) as usize).min(phases.len());
        for h in 1..=n_harm {
            let freq = f0 * h as f64;
            let amp = WordSignature::amplitude(formants, freq, voice);
            let w = std::f64::consts::TAU * freq / sr;
            let (mut re, mut im) = (phases[h - 1].cos(), phases[h - 1].sin());
            let (cr, ci) = (w.cos(), w.sin());
            for (k, o) in out[lo..hi].iter_mut().enumerate() {
                let i = lo + k;
                let env = if i < ramp {
                    0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos()
                } else if i >= n - ramp {
                    0.5 - 0.5 * (std::f64::consts::PI * (n - 1 - i) as f64 / ramp as f64).cos()
                } else {
                    1.0
                };
                *o += (amp * env * im) as f32;
                let nr = re * cr - im * ci;
                im = re * ci + im * cr;
                re = nr;
            }
            phases[h - 1] += w * (hi - lo) as f64;
        }
    }
}

fn sample_span(t_start: f64, t_end: f64, sample_rate: u32, len: usize) -> (usize, usize) {
    let sr = sample_rate as f64;
    let a = ((t_start * sr).round() as usize).min(len);
    let b = ((t_end * sr).round() as usize).min(len);
    (a, b)
}

/// Scales `samples` so the RMS over the given spans equals `target`.
pub(crate) fn normalize_active(samples: &mut [f32], spans: &[(usize, usize)], target: f64) {
    let (mut energy, mut count) = (0f64, 0usize);
    for &(a, b) in spans {
        for &x in &samples[a..b] {
            energy += x as f64 * x as f64;
        }
        count += b - a;
    }
    if count == 0 || energy == 0.0 {
        return;
    }
    let g = (target / (energy / count as f64).sqrt()) as f32;
    for x in samples.iter_mut() {
        *x *= g;
    }
}

/// Renders a side script: each word becomes a harmonic burst shaped by its
/// signature and the voice; silence elsewhere.
pub fn synth_speech(
    side: &SideScript,
    lexicon: &Lexicon,
    voice_seed: u64,
    n_samples: usize,
    sample_rate: u32,
) -> Waveform {
    let voice = Voice::from_seed(voice_seed);
    let mut samples = vec![0f32; n_samples];
    let mut spans = Vec::with_capacity(side.words.len());
    for w in &side.words {
        let (a, b) = sample_span(w.t_start, w.t_end, sample_rate, n_samples);
        if b <= a {
            continue;
        }
        let sig = WordSignature::for_word(signature_id(lexicon, &w.pieces));
        render_word(&mut samples[a..b], sample_rate, &sig, &voice);
        spans.push((a, b));
    }
    normalize_active(&mut samples, &spans, SPEECH_RMS);
    Waveform { sample_rate, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::WordTiming;

    fn one_word(lx: &Lexicon, idx: usize, t: f64, dur: f64) -> SideScript {
        SideScript {
            words: vec![WordTiming {
                pieces: lx.pieces(idx).to_vec(),
                t_start: t,
                t_end: t + dur,
            }],
            turns: vec![],
            voice_seed: 0,
        }
    }

    #[test]
    fn empty_script_is_silent() {
        let lx = Lexicon::default();
        let w = synth_speech(&SideScript::default(), &lx, 3, 16000, 16000);
        assert_eq!(w.len(), 16000);
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn energy_is_confined_to_the_word_span() {
        let lx = Lexicon::default();
        let w = synth_speech(&one_word(&lx, 2, 1.0, 0.2), &lx, 9, 48000, 16000);
        for (i, &x) in w.samples.iter().enumerate() {
            if !(16000..19200).contains(&i) {
                assert_eq!(x, 0.0, "sample {i}");
            }
        }
        let active: f64 = w.samples[16000..19200].iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / 3200.0;
        assert!((active.sqrt() - SPEECH_RMS).abs() < 1e-4);
    }

    #[test]
    fn voices_decorrelate() {
        let lx = Lexicon::default();
        let s = one_word(&lx, 5, 0.0, 0.32);
        let a = synth_speech(&s, &lx, 1, 5120, 16000);
        let b = synth_speech(&s, &lx, 2, 5120, 16000);
        let dot: f64 = a.samples.iter().zip(&b.samples).map(|(&x, &y)| x as f64 * y as f64).sum();
        let na: f64 = a.samples.iter().map(|&x| (x as f64).powi(2)).sum();
        let nb: f64 = b.samples.iter().map(|&x| (x as f64).powi(2)).sum();
        let corr = dot / (na * nb).sqrt();
        assert!(corr.abs() < 0.5, "correlation {corr}");
    }
}
