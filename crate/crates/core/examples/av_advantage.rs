//! Trains audio-only and audio-visual dual models on the same data and
//! compares them under interfering speakers.

use std::time::Instant;

use duplex_av::corpus::Condition;
use duplex_av::eval::{evaluate_set, ModelUnderTest};
use duplex_av::model::{Modality, Stage2Mixture, Variant};
use duplex_av::orchestrator::SessionConfig;
use duplex_av::pipeline::World;
use duplex_av::recipes::{pools, toy_world_config, train_two_stage, Recipe};

fn main() -> duplex_av::Result<()> {
    env_logger::init();
    let recipe = Recipe::default();
    let t0 = Instant::now();
    let world = World::new(toy_world_config())?;
    let data = pools(&world, &recipe)?;
    println!("data ready in {:.1}s", t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let (av, rep) = train_two_stage(&world, &recipe, &data, Variant::Dual, &Stage2Mixture::default(), true)?;
    println!(
        "A+V trained in {:.1}s, stage-1 loss {:?}, stage-2 loss {:?}",
        t1.elapsed().as_secs_f64(),
        rep.stage1.as_ref().and_then(|r| r.final_loss(20)),
        rep.stage2.final_loss(20)
    );
    let (a, rep) = train_two_stage(&world, &recipe, &data, Variant::Dual, &Stage2Mixture::audio_only(), true)?;
    println!("A-only stage-2 loss {:?}", rep.stage2.final_loss(20));

    let clean = world.eval_set(Condition::Clean, (0.0, 0.0), 20, 99)?;
    let interf = world.remix(&clean, Condition::Interf, (-8.0, 0.0), 98)?;
    for (name, p, modality) in [("A+V", &av, Modality::AudioVisual), ("A", &a, Modality::Audio)] {
        let m = ModelUnderTest { name: name.into(), params: p, modality, session: SessionConfig::default() };
        for (cond, set) in [("clean", &clean), ("interf -8..0", &interf)] {
            let r = evaluate_set(&world, &m, set, 1)?;
            println!(
                "{name:4} {cond:13} token WER {:.3}  WER {:.3}  response ratio {:.3}  median FTO {:.2}",
                r.token_wer(),
                r.wer(),
                r.turns.response_ratio,
                r.turns.median_fto
            );
        }
    }
    Ok(())
}
