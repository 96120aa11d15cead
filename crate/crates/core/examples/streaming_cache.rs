//! Compares cached frame-by-frame decoding against a full forward pass.

use std::time::Instant;

use duplex_av::corpus::MixSpec;
use duplex_av::grid::build_stage2_dual_targets;
use duplex_av::model::{forward_sequence, step_with_cache, DecodeCache, Params, Sequence, Variant};
use duplex_av::pipeline::{World, WorldConfig, USER_SIDE};

fn main() -> duplex_av::Result<()> {
    let world = World::new(WorldConfig::default())?;
    let mut cfg = world.model_config(32, 2, 4, Variant::Dual);
    cfg.init_std = 0.1;
    let p = Params::<f32>::init(&cfg, 1)?;

    let conv = world.conversation(5)?;
    let side = world.render(&conv, USER_SIDE, &MixSpec::clean())?;
    let tg = build_stage2_dual_targets(&conv, USER_SIDE, &world.grid)?;
    let seq = Sequence::teacher_forced(side.audio, side.visual, &tg.u, Some(&tg.t));

    let t0 = Instant::now();
    let full = forward_sequence(&p, &seq)?;
    let t_full = t0.elapsed();

    let t0 = Instant::now();
    let mut cache = DecodeCache::new(&p);
    let mut worst = 0.0f32;
    for n in 0..seq.frames() {
        let step = step_with_cache(&mut cache, &seq.frame(n), &p)?;
        for (h, logits) in step.logits.iter().enumerate() {
            for (a, b) in logits.iter().zip(full.logits[h].row(n)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    println!(
        "{} frames, context window {}: full pass {:.1?}, cached {:.1?}, max logit deviation {worst:.2e}",
        seq.frames(),
        cfg.max_context,
        t_full,
        t0.elapsed()
    );
    Ok(())
}
