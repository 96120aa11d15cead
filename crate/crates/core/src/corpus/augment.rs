use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mix::{fit_length, mix_at_snr};
use super::noise::{InterfererBank, NoiseBank};
use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    Clean,
    Bg,
    Interf,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Clean, Condition::Bg, Condition::Interf];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Clean => "clean",
            Condition::Bg => "bg",
            Condition::Interf => "interf",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clean" => Ok(Condition::Clean),
            "bg" => Ok(Condition::Bg),
            "interf" => Ok(Condition::Interf),
            _ => Err(Error::Validation(format!("unknown condition '{s}'"))),
        }
    }
}

/// How a target waveform is corrupted. Offsets select where looped bank
/// clips start so a spec replays exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub n_interferers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interferer_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<usize>,
}

impl MixSpec {
    pub fn clean() -> Self {
        Self {
            condition: Condition::Clean,
            snr_db: None,
            n_interferers: 0,
            noise_id: None,
            interferer_ids: vec![],
            offsets: vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("mix spec: {m}")));
        match self.condition {
            Condition::Clean if self.snr_db.is_some() => bad("CLEAN carries no snr"),
            Condition::Clean => Ok(()),
            _ if !self.snr_db.is_some_and(f64::is_finite) => bad("missing or non-finite snr"),
            Condition::Bg if self.noise_id.is_none() => bad("BG needs a noise id"),
            Condition::Bg => Ok(()),
            Condition::Interf if !(1..=4).contains(&self.n_interferers) => bad("INTERF needs 1..=4 interferers"),
            Condition::Interf if self.interferer_ids.len() != self.n_interferers => bad("interferer id count"),
            Condition::Interf => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub p_clean: f64,
    pub p_bg: f64,
    pub p_interf: f64,
    pub train_snr: (f64, f64),
    pub eval_snr: (f64, f64),
    pub max_interferers: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_clean: 0.2,
            p_bg: 0.4,
            p_interf: 0.4,
            train_snr: (-8.0, 8.0),
            eval_snr: (-8.0, 12.0),
            max_interferers: 4,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_clean, self.p_bg, self.p_interf];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("condition probabilities must sum to 1, got {ps:?}")));
        }
        for (lo, hi) in [self.train_snr, self.eval_snr] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("bad snr range [{lo}, {hi}]")));
            }
        }
        if !(1..=4).contains(&self.max_interferers) {
            return Err(Error::Config("max_interferers must be in 1..=4".into()));
        }
        Ok(())
    }
}

/// Immutable corruption sources shared by every sample.
#[derive(Debug, Clone)]
pub struct Banks {
    pub noise: NoiseBank,
    pub interferers: InterfererBank,
}

fn draw_snr<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn draw_spec<R: Rng>(
    condition: Condition,
    snr_range: (f64, f64),
    max_interferers: usize,
    banks: &Banks,
    rng: &mut R,
) -> MixSpec {
    match condition {
        Condition::Clean => MixSpec::clean(),
        Condition::Bg => {
            let snr = draw_snr(rng, snr_range);
            let id = rng.gen_range(0..banks.noise.len());
            MixSpec {
                condition,
                snr_db: Some(snr),
                noise_id: Some(id),
                offsets: vec![rng.gen_range(0..banks.noise.clip(id).map(|c| c.len()).unwrap_or(1).max(1))],
                ..MixSpec::clean()
            }
        }
        Condition::Interf => {
            let snr = draw_snr(rng, snr_range);
            let k = rng.gen_range(1..=max_interferers);
            let ids: Vec<usize> = (0..k).map(|_| rng.gen_range(0..banks.interferers.len())).collect();
            // interferers start inside their clip, not necessarily at zero
            let offsets = ids
                .iter()
                .map(|&i| rng.gen_range(0..banks.interferers.clip(i).map(|c| c.len()).unwrap_or(1).max(1)))
                .collect();
            MixSpec {
                condition,
                snr_db: Some(snr),
                n_interferers: k,
                interferer_ids: ids,
                offsets,
                ..MixSpec::clean()
            }
        }
    }
}

/// The summed interference a spec describes, at unit gain, fitted to `n` samples.
fn interference(spec: &MixSpec, banks: &Banks, n: usize, sample_rate: u32) -> Result<Waveform> {
    let mut acc = vec![0f32; n];
    let mut add = |clip: &Waveform, offset: usize| -> Result<()> {
        if clip.sample_rate != sample_rate {
            return Err(Error::Validation("bank sample rate differs from target".into()));
        }
        for (a, x) in acc.iter_mut().zip(fit_length(&clip.samples, n, offset)) {
            *a += x;
        }
        Ok(())
    };
    let offset = |i: usize| spec.offsets.get(i).copied().unwrap_or(0);
    match spec.condition {
        Condition::Clean => {}
        Condition::Bg => add(banks.noise.clip(spec.noise_id.unwrap_or(0))?, offset(0))?,
        Condition::Interf => {
            for (i, &id) in spec.interferer_ids.iter().enumerate() {
                add(banks.interferers.clip(id)?, offset(i))?;
            }
        }
    }
    Ok(Waveform { sample_rate, samples: acc })
}

/// Applies a spec to a target. The requested SNR is measured against the
/// summed interference over the full clip.
pub fn apply_mix(target: &Waveform, spec: &MixSpec, banks: &Banks) -> Result<Waveform> {
    spec.validate()?;
    let Some(snr) = spec.snr_db else {
        return Ok(target.clone());
    };
    let mut residual = interference(spec, banks, target.len(), target.sample_rate)?;
    if residual.samples.iter().all(|&x| x == 0.0) {
        // a window of pure silence from a speech interferer; move each clip
        // to its first active sample
        let mut s = spec.clone();
        for (i, o) in s.offsets.iter_mut().enumerate() {
            let clip = match s.condition {
                Condition::Interf => banks.interferers.clip(s.interferer_ids[i])?,
                _ => banks.noise.clip(s.noise_id.unwrap_or(0))?,
            };
            *o = clip.samples.iter().position(|&x| x != 0.0).unwrap_or(0);
        }
        residual = interference(&s, banks, target.len(), target.sample_rate)?;
    }
    Ok(mix_at_snr(target, &residual, snr)?.0)
}

/// Draws a training condition (20/40/40 by default) and corrupts `target`.
pub fn augment<R: Rng>(target: &Waveform, banks: &Banks, cfg: &AugmentConfig, rng: &mut R) -> Result<(Waveform, MixSpec)> {
    let spec = draw_training_spec(banks, cfg, rng);
    Ok((apply_mix(target, &spec, banks)?, spec))
}

/// The spec half of [`augment`].
pub fn draw_training_spec<R: Rng>(banks: &Banks, cfg: &AugmentConfig, rng: &mut R) -> MixSpec {
    let u: f64 = rng.gen();
    let condition = if u < cfg.p_clean {
        Condition::Clean
    } else if u < cfg.p_clean + cfg.p_bg {
        Condition::Bg
    } else {
        Condition::Interf
    };
    draw_spec(condition, cfg.train_snr, cfg.max_interferers, banks, rng)
}

/// A forced-condition spec with SNR drawn from `snr_range`. A degenerate
/// range pins the SNR.
pub fn gen_eval_condition<R: Rng>(
    condition: Condition,
    snr_range: (f64, f64),
    banks: &Banks,
    rng: &mut R,
) -> Result<MixSpec> {
    if !(snr_range.0.is_finite() && snr_range.1.is_finite() && snr_range.0 <= snr_range.1) {
        return Err(Error::Validation(format!("bad snr range {snr_range:?}")));
    }
    let spec = draw_spec(condition, snr_range, 4, banks, rng);
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{measure_snr, synth_speech, Lexicon, SideScript};
    use crate::grid::WordTiming;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_banks() -> Banks {
        let lx = Lexicon::default();
        Banks {
            noise: NoiseBank::new(11, 1, 1.0, 16000).unwrap(),
            interferers: InterfererBank::new(12, 6, (4, 8), &lx, 16000).unwrap(),
        }
    }

    fn target() -> Waveform {
        let lx = Lexicon::default();
        let side = SideScript {
            words: vec![WordTiming { pieces: lx.pieces(1).to_vec(), t_start: 0.1, t_end: 0.4 }],
            turns: vec![],
            voice_seed: 0,
        };
        synth_speech(&side, &lx, 77, 8000, 16000)
    }

    #[test]
    fn condition_frequencies() {
        let banks = small_banks();
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 3];
        let mut seen_k = [false; 5];
        for _ in 0..10_000 {
            let s = draw_training_spec(&banks, &cfg, &mut rng);
            s.validate().unwrap();
            counts[s.condition as usize] += 1;
            if let Some(snr) = s.snr_db {
                assert!((-8.0..=8.0).contains(&snr));
            }
            if s.condition == Condition::Interf {
                seen_k[s.n_interferers] = true;
            }
        }
        let clean = counts[0] as f64 / 1e4;
        assert!((0.18..=0.22).contains(&clean), "{clean}");
        assert!(seen_k[1..].iter().all(|&b| b));
    }

    #[test]
    fn eval_bg_at_zero_db() {
        let banks = small_banks();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = target();
        let spec = gen_eval_condition(Condition::Bg, (0.0, 0.0), &banks, &mut rng).unwrap();
        let mixed = apply_mix(&t, &spec, &banks).unwrap();
        let residual: Vec<f32> = mixed.samples.iter().zip(&t.samples).map(|(m, x)| m - x).collect();
        let snr = measure_snr(&t, &Waveform { sample_rate: 16000, samples: residual });
        assert!(snr.abs() < 1e-4, "{snr}");
    }

    #[test]
    fn eval_clean_and_interf() {
        let banks = small_banks();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = target();
        let clean = gen_eval_condition(Condition::Clean, (-8.0, 12.0), &banks, &mut rng).unwrap();
        assert_eq!(apply_mix(&t, &clean, &banks).unwrap(), t);
        let spec = gen_eval_condition(Condition::Interf, (-7.0, -7.0), &banks, &mut rng).unwrap();
        assert_eq!(spec.snr_db, Some(-7.0));
        assert!((1..=4).contains(&spec.n_interferers));
    }

    #[test]
    fn spec_validation() {
        let mut s = MixSpec::clean();
        s.snr_db = Some(0.0);
        assert!(s.validate().is_err());
        let s = MixSpec { condition: Condition::Interf, snr_db: Some(0.0), n_interferers: 5, interferer_ids: vec![0; 5], ..MixSpec::clean() };
        assert!(s.validate().is_err());
    }
}
