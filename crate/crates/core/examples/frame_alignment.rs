//! Generates one conversation and prints its frame-aligned target streams.

use duplex_av::grid::{build_stage2_dual_targets, build_unified_targets, Vocabulary, EMP};
use duplex_av::pipeline::{World, WorldConfig, USER_SIDE};

fn show(vocab: &Vocabulary, name: &str, stream: &[duplex_av::grid::TokenId]) {
    let cells: Vec<String> = stream
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != EMP)
        .map(|(n, &t)| format!("{n}:{}", vocab.piece(t).unwrap_or("?")))
        .collect();
    println!("{name} ({} frames, {} non-empty)\n  {}", stream.len(), cells.len(), cells.join(" "));
}

fn main() -> duplex_av::Result<()> {
    let world = World::new(WorldConfig::default())?;
    let conv = world.conversation(42)?;
    let vocab = world.lexicon.vocab();

    for (side, script) in conv.sides.iter().enumerate() {
        println!("side {side}:");
        for w in &script.words {
            println!("  {:6.3}-{:6.3} s  {}", w.t_start, w.t_end, vocab.decode(&w.pieces));
        }
        for t in &script.turns {
            println!("  turn {:?} at {:.3} s", t.kind, t.t_turn);
        }
    }

    let dual = build_stage2_dual_targets(&conv, USER_SIDE, &world.grid)?;
    show(vocab, "U", &dual.u);
    show(vocab, "T", &dual.t);
    let unified = build_unified_targets(&conv, USER_SIDE, &world.grid)?;
    show(vocab, "R", &unified.r);
    println!("recognition delay {} frames, offsets {:?}", world.grid.recognition_delay, conv.fto_list);
    Ok(())
}
