use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::grids::VisualFeatureGrid;
use super::EncoderConfig;
use crate::corpus::{Lexicon, SideScript, Waveform, SPEECH_RMS};
use crate::error::{Error, Result};
use crate::grid::FRAME_SECONDS;

/// Channels with structured content; any further dims carry jitter only.
pub(crate) const MIN_DIMS: usize = 12;
const VISEME_DIMS: usize = 8;

fn script_hash(side: &SideScript) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    let mut eat = |x: u64| h = (h ^ x).wrapping_mul(0x1000_0000_01B3);
    for w in &side.words {
        w.pieces.iter().for_each(|p| eat(p.0 as u64));
        eat(w.t_start.to_bits());
        eat(w.t_end.to_bits());
    }
    h
}

fn viseme_table(seed: u64, n_visemes: usize) -> Vec<[f32; VISEME_DIMS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x715E_3E00);
    (0..n_visemes)
        .map(|_| {
            let mut v = [0f32; VISEME_DIMS];
            v.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect()
}

/// Lip-feature stand-in computed from the clean target side only.
///
/// Frame `n` sees the target's energy and articulation at `n + lookahead`:
/// channel 0 envelope, 1 speaking flag, 2..10 viseme embedding of the
/// current word, 10 envelope at `n + lookahead - 1`, 11 envelope at `n`.
/// Every channel gets seeded Gaussian jitter.
pub fn visual_encode(
    target: &SideScript,
    clean: &Waveform,
    lexicon: &Lexicon,
    cfg: &EncoderConfig,
) -> Result<VisualFeatureGrid> {
    cfg.validate()?;
    let spf = clean.samples_per_frame();
    let frames = clean.frames();
    let rms: Vec<f32> = (0..frames)
        .map(|n| {
            let s = &clean.samples[n * spf..((n + 1) * spf).min(clean.len())];
            let p = s.iter().map(|&x| x as f64 * x as f64).sum::<f64>() / spf as f64;
            (p.sqrt() / SPEECH_RMS) as f32
        })
        .collect();
    let env = |n: usize| rms.get(n).copied().unwrap_or(0.0);
    let n_vis = lexicon.n_visemes().max(1) as usize;
    let table = viseme_table(cfg.projection_seed, n_vis);
    let word_at = |n: usize| {
        let t = (n as f64 + 0.5) * FRAME_SECONDS;
        target.words.iter().find(|w| w.t_start <= t && t < w.t_end)
    };
    let jitter = Normal::new(0.0, cfg.jitter as f64).map_err(|e| Error::Config(format!("jitter: {e}")))?;
    let h = script_hash(target);
    let dims = cfg.visual_dims;
    let la = cfg.lookahead;
    let mut features = vec![0f32; frames * dims];
    for n in 0..frames {
        let row = &mut features[n * dims..(n + 1) * dims];
        let ahead = n + la;
        row[0] = env(ahead);
        row[10] = if la > 0 { env(ahead - 1) } else { env(ahead) };
        row[11] = env(n);
        if let Some(w) = word_at(ahead) {
            row[1] = 1.0;
            let v = match lexicon.lookup(&w.pieces) {
                Some(i) => lexicon.word(i).viseme as usize % n_vis,
                None => w.pieces.iter().map(|p| p.0 as usize).sum::<usize>() % n_vis,
            };
            row[2..2 + VISEME_DIMS].copy_from_slice(&table[v]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        row.iter_mut().for_each(|x| *x += jitter.sample(&mut rng) as f32);
    }
    VisualFeatureGrid::from_features(features, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_conversation, synth_speech, ConversationParams};

    fn setup() -> (Lexicon, SideScript, Waveform) {
        let lx = Lexicon::default();
        let conv = gen_conversation(3, &ConversationParams::default(), &lx).unwrap();
        let side = conv.sides[0].clone();
        let w = synth_speech(&side, &lx, side.voice_seed, conv.n_samples(16000), 16000);
        (lx, side, w)
    }

    #[test]
    fn silent_side_has_zero_envelope() {
        let lx = Lexicon::default();
        let cfg = EncoderConfig { jitter: 0.0, ..Default::default() };
        let g = visual_encode(&SideScript::default(), &Waveform::silent(16000, 6400), &lx, &cfg).unwrap();
        assert_eq!(g.frames(), 10);
        assert!((0..10).all(|n| g.frame(n)[0] == 0.0));
    }

    #[test]
    fn envelope_tracks_clean_energy() {
        let (lx, side, w) = setup();
        let cfg = EncoderConfig::default();
        let g = visual_encode(&side, &w, &lx, &cfg).unwrap();
        let spf = 640;
        let n = g.frames() - cfg.lookahead;
        let energy: Vec<f64> = (cfg.lookahead..g.frames())
            .map(|k| w.samples[k * spf..(k + 1) * spf].iter().map(|&x| (x as f64).powi(2)).sum::<f64>())
            .collect();
        let env: Vec<f64> = (0..n).map(|k| g.frame(k)[0] as f64).collect();
        let c = pearson(&env, &energy);
        assert!(c > 0.9, "correlation {c}");
    }

    #[test]
    fn causal_up_to_lookahead() {
        let (lx, side, w) = setup();
        let cfg = EncoderConfig::default();
        let full = visual_encode(&side, &w, &lx, &cfg).unwrap();
        let cut_at = 60;
        let cut = Waveform { sample_rate: 16000, samples: w.samples[..640 * (cut_at + 1)].to_vec() };
        let part = visual_encode(&side, &cut, &lx, &cfg).unwrap();
        for n in 0..=cut_at - cfg.lookahead {
            assert_eq!(part.frame(n), full.frame(n), "frame {n}");
        }
    }

    pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
