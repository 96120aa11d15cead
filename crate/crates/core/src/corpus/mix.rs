use log::debug;

use super::Waveform;
use crate::error::{Error, Result};

/// Mean square amplitude.
pub fn power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&x| x as f64 * x as f64).sum::<f64>() / samples.len() as f64
}

/// `10·log10(P_target / P_residual)` over the overlapping samples. A silent
/// residual yields `+inf`, a silent target `-inf`.
pub fn measure_snr(target: &Waveform, residual: &Waveform) -> f64 {
    let n = target.len().min(residual.len());
    let pt = power(&target.samples[..n]);
    let pr = power(&residual.samples[..n]);
    if pt == 0.0 {
        return f64::NEG_INFINITY;
    }
    if pr == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (pt / pr).log10()
}

/// Loops or crops `w` to exactly `n` samples.
pub(crate) fn fit_length(w: &[f32], n: usize, offset: usize) -> Vec<f32> {
    if w.is_empty() {
        return vec![0.0; n];
    }
    (0..n).map(|i| w[(offset + i) % w.len()]).collect()
}

/// Returns `target + g·interference` together with the scaled interference,
/// where `g` is chosen so that the target-to-interference ratio equals
/// `snr_db` over the target's length.
pub fn mix_at_snr(target: &Waveform, interference: &Waveform, snr_db: f64) -> Result<(Waveform, Waveform, f64)> {
    if target.sample_rate != interference.sample_rate {
        return Err(Error::Validation(format!(
            "sample rates differ: {} vs {}",
            target.sample_rate, interference.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Domain(format!("snr must be finite, got {snr_db}")));
    }
    let fitted = fit_length(&interference.samples, target.len(), 0);
    let pi = power(&fitted);
    if pi == 0.0 {
        return Err(Error::Validation("interference has zero power".into()));
    }
    let pt = power(&target.samples);
    let g = (pt / (pi * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f32> = fitted.iter().map(|&x| (x as f64 * g) as f32).collect();
    let mut clipped = 0usize;
    let mixed: Vec<f32> = target
        .samples
        .iter()
        .zip(&scaled)
        .map(|(&a, &b)| {
            let s = a + b;
            if s.abs() > 1.0 {
                clipped += 1;
                s.clamp(-1.0, 1.0)
            } else {
                s
            }
        })
        .collect();
    if clipped > 0 {
        debug!("mix_at_snr: clipped {clipped} samples at {snr_db:.2} dB");
    }
    Ok((
        Waveform { sample_rate: target.sample_rate, samples: mixed },
        Waveform { sample_rate: target.sample_rate, samples: scaled },
        g,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, amp: f64, n: usize) -> Waveform {
        Waveform {
            sample_rate: 16000,
            samples: (0..n)
                .map(|i| (amp * (std::f64::consts::TAU * freq * i as f64 / 16000.0).sin()) as f32)
                .collect(),
        }
    }

    #[test]
    fn snr_examples() {
        let a = tone(200.0, 0.3, 16000);
        let b = tone(300.0, 0.3, 16000);
        assert!(measure_snr(&a, &b).abs() < 1e-3);
        let half = tone(300.0, 0.15, 16000);
        assert!((measure_snr(&a, &half) - 20.0 * 2f64.log10()).abs() < 1e-3);
        let silent = Waveform::silent(16000, 16000);
        assert_eq!(measure_snr(&silent, &a), f64::NEG_INFINITY);
        assert_eq!(measure_snr(&a, &silent), f64::INFINITY);
    }

    #[test]
    fn gain_examples() {
        let a = tone(200.0, 0.2, 16000);
        let b = tone(200.0, 0.2, 16000);
        let (_, _, g) = mix_at_snr(&a, &b, 0.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let (_, _, g) = mix_at_snr(&a, &b, 20.0 * 2f64.log10()).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_power_interference_rejected() {
        let a = tone(200.0, 0.2, 100);
        assert!(mix_at_snr(&a, &Waveform::silent(16000, 100), 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn remeasured_snr_matches(snr in -8.0f64..12.0, fa in 80.0f64..900.0, fb in 80.0f64..900.0, len in 400usize..4000) {
            let a = tone(fa, 0.2, len);
            let b = tone(fb, 0.05, len / 2 + 1);
            let (_, scaled, _) = mix_at_snr(&a, &b, snr).unwrap();
            proptest::prop_assert!((measure_snr(&a, &scaled) - snr).abs() < 1e-6);
        }
    }
}
