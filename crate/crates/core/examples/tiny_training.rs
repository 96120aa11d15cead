//! Two-stage training of a very small dual model, a checkpoint round trip and
//! an SNR sweep under background noise. Runs in under a minute.

use duplex_av::corpus::Condition;
use duplex_av::eval::{snr_bins, sweep_snr, ModelUnderTest};
use duplex_av::model::{load_checkpoint, save_checkpoint, Checkpoint, Modality, Stage2Mixture, Variant};
use duplex_av::orchestrator::SessionConfig;
use duplex_av::pipeline::World;
use duplex_av::recipes::{pools, toy_world_config, train_two_stage, Recipe};

fn main() -> duplex_av::Result<()> {
    env_logger::init();
    let recipe = Recipe {
        d_model: 32,
        n_layers: 1,
        n_heads: 2,
        stage1_steps: 300,
        stage2_steps: 800,
        stage1_pool: 100,
        stage2_pool: 1500,
        ..Recipe::default()
    };
    let world = World::new(toy_world_config())?;
    let data = pools(&world, &recipe)?;
    let (params, report) = train_two_stage(&world, &recipe, &data, Variant::Dual, &Stage2Mixture::default(), true)?;
    for r in report.log.records.iter().step_by(100) {
        println!("{:8} step {:4} loss {:.4}", r.task, r.step, r.loss);
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("tiny.ckpt");
    let ck = Checkpoint { params, vocab_hash: world.lexicon.vocab().hash(), step: report.log.records.len() as u64 };
    save_checkpoint(&path, &ck)?;
    let back = load_checkpoint(&path)?;
    println!("checkpoint {} bytes, round trip exact: {}", std::fs::metadata(&path)?.len(), back.params == ck.params);

    let m = ModelUnderTest {
        name: "tiny".into(),
        params: &back.params,
        modality: Modality::AudioVisual,
        session: SessionConfig::default(),
    };
    let rep = sweep_snr(&world, &[m], Condition::Bg, &snr_bins(-8.0, 12.0, 10.0), 4, 1, "example")?;
    print!("{}", rep.to_csv());
    Ok(())
}
