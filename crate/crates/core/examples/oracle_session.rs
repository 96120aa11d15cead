//! Drives the dialogue runtime with a model that emits the ground-truth
//! streams, then scores the turns it took.

use duplex_av::eval::{extract_ftos, turn_metrics, GtTurn};
use duplex_av::grid::build_stage2_dual_targets;
use duplex_av::orchestrator::{
    algorithmic_latency, check_trace, render_transcript, run_session, Mode, ScriptedBackbone, ScriptedModel,
    SessionConfig,
};
use duplex_av::pipeline::{World, WorldConfig, USER_SIDE};
use duplex_av::corpus::MixSpec;

fn main() -> duplex_av::Result<()> {
    let world = World::new(WorldConfig::default())?;
    let conv = world.conversation(11)?;
    let side = world.render(&conv, USER_SIDE, &MixSpec::clean())?;
    let targets = build_stage2_dual_targets(&conv, USER_SIDE, &world.grid)?;

    let mut model = ScriptedModel::dual(targets.u, targets.t);
    let mut backbone = ScriptedBackbone::new(world.lexicon.clone());
    let trace = run_session(&side.audio, &side.visual, &mut model, &mut backbone, Mode::Dual, &SessionConfig::default(), 0)?;
    check_trace(&trace).map_err(duplex_av::Error::Validation)?;

    print!("{}", render_transcript(&trace, world.lexicon.vocab(), &world.grid));

    let (ends, ftos) = side.turn_ends()?;
    let gt: Vec<GtTurn> = ends.iter().zip(&ftos).map(|(&end, &fto)| GtTurn { end, fto }).collect();
    let m = turn_metrics(&extract_ftos(&trace, &gt, &world.grid));
    println!(
        "response ratio {:.2}, median offset {:.2} s, mae {:.2} s over {} turns",
        m.response_ratio, m.median_fto, m.fto_mae, m.n
    );
    println!("algorithmic latency {} ms", algorithmic_latency(&world.config.encoder));
    Ok(())
}
