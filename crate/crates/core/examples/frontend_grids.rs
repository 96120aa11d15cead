//! Renders one script in two voices and compares acoustic and semantic
//! tokens; then checks that the visual grid ignores the audio mixture.

use duplex_av::corpus::{gen_eval_condition, synth_speech, Condition, MixSpec};
use duplex_av::frontend::{AcousticEncoder, AcousticTokenGrid, EncoderConfig, TokenizerMode};
use duplex_av::pipeline::{World, WorldConfig, USER_SIDE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn agreement(a: &AcousticTokenGrid, b: &AcousticTokenGrid) -> f64 {
    let same = a.tokens().iter().zip(b.tokens()).filter(|(x, y)| x == y).count();
    same as f64 / a.tokens().len().max(1) as f64
}

fn main() -> duplex_av::Result<()> {
    let world = World::new(WorldConfig::default())?;
    let conv = world.conversation(21)?;
    let script = &conv.sides[USER_SIDE];
    let sr = world.config.sample_rate;
    let n = conv.n_samples(sr);
    let voice_a = synth_speech(script, &world.lexicon, 1, n, sr);
    let voice_b = synth_speech(script, &world.lexicon, 2, n, sr);

    for mode in [TokenizerMode::Acoustic, TokenizerMode::Semantic] {
        let cfg = EncoderConfig { mode, ..world.config.encoder.clone() };
        let enc = AcousticEncoder::new(&cfg, &world.lexicon, sr)?;
        let (ga, gb) = (enc.tokenize(&voice_a)?, enc.tokenize(&voice_b)?);
        println!(
            "{mode:?}: {} frames x {} codebooks, token agreement across voices {:.1}%",
            ga.frames(),
            ga.codebooks(),
            100.0 * agreement(&ga, &gb)
        );
    }

    let clean = world.render(&conv, USER_SIDE, &MixSpec::clean())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = gen_eval_condition(Condition::Interf, (-8.0, -8.0), &world.banks, &mut rng)?;
    let noisy = world.render(&conv, USER_SIDE, &spec)?;
    println!(
        "interf at -8 dB: audio token agreement {:.1}%, visual grid identical: {}",
        100.0 * agreement(&clean.audio, &noisy.audio),
        clean.visual == noisy.visual
    );
    Ok(())
}
