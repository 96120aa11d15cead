use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::real::Real;

/// Probabilities of a logit vector.
pub fn softmax<R: Real>(logits: &[R]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x.f64()));
    let mut p: Vec<f64> = logits.iter().map(|&x| (x.f64() - m).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Index of the largest logit; ties go to the lowest index.
pub fn decode_greedy<R: Real>(logits: &[R]) -> usize {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate().skip(1) {
        if x > logits[best] {
            best = i;
        }
    }
    best
}

/// Temperature-scaled categorical draw. A non-positive temperature falls
/// back to [`decode_greedy`].
pub fn decode_sample<R: Real>(logits: &[R], temperature: f64, seed: u64) -> usize {
    decode_sample_with(logits, temperature, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn decode_sample_with<R: Real, G: Rng>(logits: &[R], temperature: f64, rng: &mut G) -> usize {
    if temperature <= 0.0 || !temperature.is_finite() {
        return decode_greedy(logits);
    }
    let scaled: Vec<f64> = logits.iter().map(|&x| x.f64() / temperature).collect();
    let p = softmax(&scaled);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left mass past the end: take the most probable class
    decode_greedy(&scaled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_under_both() {
        let mut l = vec![-1e9f64; 6];
        l[4] = 0.0;
        assert_eq!(decode_greedy(&l), 4);
        assert_eq!(decode_sample(&l, 1.0, 3), 4);
    }

    #[test]
    fn tie_breaks_low() {
        let mut l = vec![0.0f32; 9];
        l[3] = 2.0;
        l[7] = 2.0;
        assert_eq!(decode_greedy(&l), 3);
    }

    #[test]
    fn cold_sampling_is_greedy() {
        let l = vec![0.1f64, 0.5, 0.4, 0.45];
        for s in 0..50 {
            assert_eq!(decode_sample(&l, 1e-4, s), 1);
        }
        assert_eq!(decode_sample(&l, 0.0, 0), 1);
    }
}
