//! Mixes a rendered side at a few SNRs and tallies the training augmentation draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use duplex_av::corpus::{apply_mix, draw_training_spec, gen_eval_condition, measure_snr, Condition, Waveform};
use duplex_av::pipeline::{World, WorldConfig, USER_SIDE};

fn main() -> duplex_av::Result<()> {
    let world = World::new(WorldConfig::default())?;
    let conv = world.conversation(3)?;
    let clean = world.render_clean(&conv, USER_SIDE);
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    for condition in [Condition::Bg, Condition::Interf] {
        for snr in [-8.0, 0.0, 12.0] {
            let spec = gen_eval_condition(condition, (snr, snr), &world.banks, &mut rng)?;
            let mixed = apply_mix(&clean, &spec, &world.banks)?;
            let residual = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
            let residual = Waveform::new(clean.sample_rate, residual)?;
            println!(
                "{:6} x{} requested {snr:+5.1} dB, measured {:+8.4} dB",
                condition.name(),
                spec.n_interferers.max(1),
                measure_snr(&clean, &residual)
            );
        }
    }

    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let s = draw_training_spec(&world.banks, &world.config.augment, &mut rng);
        counts[s.condition as usize] += 1;
    }
    for (c, k) in Condition::ALL.iter().zip(counts) {
        println!("{:6} {:5.1}%", c.name(), 100.0 * k as f64 / n as f64);
    }
    Ok(())
}
