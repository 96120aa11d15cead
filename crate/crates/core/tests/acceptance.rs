//! Acceptance suite. Every criterion runs at its stated size and tolerance,
//! prints one PASS/FAIL line, and the test fails if any criterion does.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use duplex_av::corpus::{
    draw_training_spec, gen_conversation, measure_snr, mix_at_snr, AugmentConfig, Condition, ConversationParams,
    FtoDistribution, Lexicon, Waveform,
};
use duplex_av::eval::{
    edit_counts, evaluate_set, extract_ftos, fto_histogram, pair_ftos, turn_metrics, wer, GtTurn, ModelUnderTest,
    SetResult,
};
use duplex_av::frontend::{AcousticTokenGrid, EncoderConfig, VisualFeatureGrid, AUDIO_NULL};
use duplex_av::grid::{build_stage2_dual_targets, FrameGrid, LossWeights, TokenId, BACKCHANNEL, BOS, EMP, EOS, NULL, SOT};
use duplex_av::model::{
    backward, forward_sequence, shift_history, step_with_cache, weighted_ce_loss, DecodeCache, Modality, ModelConfig,
    Params, Sequence, Stage2Mixture, Targets, Variant,
};
use duplex_av::orchestrator::{
    algorithmic_latency, check_trace, run_session, Backbone, DialogueState, EchoBackbone, EventKind, Mode,
    ScriptedBackbone, ScriptedModel, SessionConfig, SessionTrace, TraceEvent,
};
use duplex_av::pipeline::{RenderedSide, World, USER_SIDE};
use duplex_av::recipes::{pools, toy_world_config, train_two_stage, Pools, Recipe};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// 1. alignment exactness

fn ms(t: f64) -> i64 {
    let m = (t * 1000.0).round();
    assert!((m / 1000.0 - t).abs() < 1e-9, "time {t} is not on the millisecond grid");
    m as i64
}

/// Frames are 40 ms, so on an integer-millisecond clock ceil and floor are
/// integer divisions.
fn oracle_ceil(t: f64) -> usize {
    ((ms(t) + 39) / 40) as usize
}

fn oracle_floor(t: f64) -> usize {
    (ms(t) / 40) as usize
}

fn oracle_streams(conv: &duplex_av::corpus::SyntheticConversation, d: usize) -> (Vec<TokenId>, Vec<TokenId>, bool) {
    let horizon = oracle_ceil(conv.duration);
    let mut u = vec![EMP; horizon];
    let mut next = 0;
    let mut shifted = false;
    for w in &conv.sides[USER_SIDE].words {
        let nominal = oracle_ceil(w.t_start) + d;
        let start = nominal.max(next);
        shifted |= start != nominal;
        for (k, &p) in w.pieces.iter().enumerate() {
            if start + k < horizon {
                u[start + k] = p;
            }
        }
        next = start + w.pieces.len();
    }
    let mut t = vec![EMP; horizon];
    let mut next = 0;
    for e in &conv.sides[1 - USER_SIDE].turns {
        let f = oracle_floor(e.t_turn).max(next);
        shifted |= f != oracle_floor(e.t_turn);
        if f < horizon {
            t[f] = if e.kind == duplex_av::grid::TurnKind::Backchannel { BACKCHANNEL } else { SOT };
        }
        next = f + 1;
    }
    (u, t, shifted)
}

/// Scales every time in the conversation by `s`, kept on the millisecond grid.
fn compress(conv: &mut duplex_av::corpus::SyntheticConversation, s: f64) {
    let q = |t: f64| (t * s * 1000.0).round() / 1000.0;
    for side in conv.sides.iter_mut() {
        for w in side.words.iter_mut() {
            w.t_start = q(w.t_start);
            w.t_end = q(w.t_end);
        }
        for e in side.turns.iter_mut() {
            e.t_turn = q(e.t_turn);
        }
    }
    conv.duration = q(conv.duration);
}

fn c1_alignment() -> Verdict {
    let t0 = Instant::now();
    let lexicon = Lexicon::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut exact, mut with_shift) = (0, 0);
    for i in 0..1000u64 {
        let params = ConversationParams {
            n_turns: rng.gen_range(1..=6),
            min_words: 1,
            max_words: rng.gen_range(1..=7),
            backchannel_rate: rng.gen_range(0.0..0.5),
            overlap_rate: rng.gen_range(0.0..0.4),
            fto: FtoDistribution::Uniform { median: rng.gen_range(0.9..1.6), width: rng.gen_range(0.1..1.8) },
            word_gap: (0.0, rng.gen_range(0.01..0.3)),
            ..Default::default()
        };
        let mut conv = gen_conversation(i, &params, &lexicon).unwrap();
        if i % 3 == 0 {
            // squeeze the timeline so word pieces collide on the grid
            compress(&mut conv, rng.gen_range(0.05..0.5));
        }
        let d = if i % 4 == 0 { rng.gen_range(0..40) } else { 25 };
        let grid = FrameGrid::new(d);
        let got = build_stage2_dual_targets(&conv, USER_SIDE, &grid).unwrap();
        let (u, t, shifted) = oracle_streams(&conv, d);
        exact += (got.u == u && got.t == t) as usize;
        with_shift += shifted as usize;
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        exact == 1000 && secs < 10.0,
        format!("{exact}/1000 exact ({with_shift} with spill-over), {secs:.2} s"),
    )
}

// 2. mixing accuracy

fn random_wave(rng: &mut ChaCha8Rng, n: usize) -> Waveform {
    let amp = rng.gen_range(0.01..0.3);
    let noise = Normal::new(0.0, amp).unwrap();
    let f = rng.gen_range(80.0..900.0);
    let samples = (0..n)
        .map(|i| {
            let env = if rng.gen_bool(0.2) { 0.0 } else { 1.0 };
            (env * (0.5 * amp * (std::f64::consts::TAU * f * i as f64 / 16000.0).sin() + noise.sample(rng))) as f32
        })
        .collect();
    Waveform::new(16000, samples).unwrap()
}

fn c2_mixing() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(400..8000);
        let target = random_wave(&mut rng, n);
        let m = rng.gen_range(200..8000);
        let interferer = random_wave(&mut rng, m);
        let snr = rng.gen_range(-8.0..12.0);
        let (_, scaled, _) = mix_at_snr(&target, &interferer, snr).unwrap();
        worst = worst.max((measure_snr(&target, &scaled) - snr).abs());
    }
    let world = World::new(duplex_av::pipeline::WorldConfig {
        noise_per_kind: 1,
        noise_seconds: 2.0,
        n_interferers: 4,
        ..Default::default()
    })
    .unwrap();
    let cfg = AugmentConfig::default();
    let mut counts: HashMap<Condition, usize> = HashMap::new();
    for _ in 0..10_000 {
        *counts.entry(draw_training_spec(&world.banks, &cfg, &mut rng).condition).or_default() += 1;
    }
    let freq = |c| counts.get(&c).copied().unwrap_or(0) as f64 / 10_000.0;
    let (fc, fb, fi) = (freq(Condition::Clean), freq(Condition::Bg), freq(Condition::Interf));
    let freq_ok = (fc - 0.2).abs() <= 0.02 && (fb - 0.4).abs() <= 0.02 && (fi - 0.4).abs() <= 0.02;
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst < 1e-6 && freq_ok && secs < 60.0,
        format!("max |snr error| {worst:.2e} dB; clean/bg/interf {fc:.4}/{fb:.4}/{fi:.4}; {secs:.1} s"),
    )
}

// 3. gradient correctness

fn tiny_config(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::small(36, 16, 2, 2);
    c.n_codebooks = 4;
    c.codebook_size = 16;
    c.visual_dims = 8;
    c.max_context = 6;
    c.init_std = 0.3;
    c.variant = variant;
    c
}

fn random_pair(cfg: &ModelConfig, n: usize, rng: &mut ChaCha8Rng) -> (Sequence, Targets) {
    let audio: Vec<u16> = (0..n * cfg.n_codebooks)
        .map(|_| if rng.gen_bool(0.1) { AUDIO_NULL } else { rng.gen_range(0..cfg.codebook_size as u16) })
        .collect();
    let audio = AcousticTokenGrid::from_tokens(audio, cfg.n_codebooks, cfg.codebook_size).unwrap();
    let feats: Vec<f32> = (0..n * cfg.visual_dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut visual = VisualFeatureGrid::from_features(feats, cfg.visual_dims).unwrap();
    for i in 0..n {
        if rng.gen_bool(0.2) {
            let row = visual.frame(i).to_vec();
            visual.set_frame(i, &row, false);
        }
    }
    let streams: Vec<Vec<TokenId>> = cfg
        .heads()
        .iter()
        .map(|h| {
            (0..n)
                .map(|_| if rng.gen_bool(0.1) { NULL } else { h.classes[rng.gen_range(0..h.classes.len())] })
                .collect()
        })
        .collect();
    let seq = if streams.len() == 2 {
        Sequence::teacher_forced(audio, visual, &streams[0], Some(&streams[1]))
    } else {
        Sequence { audio, visual, u_prev: shift_history(&streams[0]), t_prev: vec![NULL; n] }
    };
    (seq, Targets { streams })
}

fn loss64(p: &Params<f64>, seq: &Sequence, tg: &Targets) -> f64 {
    let f = forward_sequence(p, seq).unwrap();
    weighted_ce_loss(&p.heads, &f.logits, tg, &LossWeights::default()).unwrap().loss
}

fn c3_gradients() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut checked, mut groups, mut groups_hit) = (0.0f64, 0usize, 0usize, 0usize);
    for variant in [Variant::Dual, Variant::Unified] {
        let cfg = tiny_config(variant);
        let p: Params<f64> = Params::<f32>::init(&cfg, 5).unwrap().cast();
        let (seq, tg) = random_pair(&cfg, 10, &mut rng);
        let f = forward_sequence(&p, &seq).unwrap();
        let out = weighted_ce_loss(&p.heads, &f.logits, &tg, &LossWeights::default()).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &seq, &f, &out.dlogits, &mut g);
        for (ti, t) in p.tensors.iter().enumerate() {
            groups += 1;
            // entries that receive gradient; embedding rows of unseen ids do not
            let live: Vec<usize> = (0..t.len()).filter(|&i| g.tensors[ti].data[i] != 0.0).collect();
            let pool: &[usize] = if live.is_empty() { &[] } else { &live };
            let mut hit = false;
            for _ in 0..8.min(pool.len()) {
                let i = pool[rng.gen_range(0..pool.len())];
                let h = 1e-5;
                let mut plus = p.clone();
                plus.tensors[ti].data[i] += h;
                let mut minus = p.clone();
                minus.tensors[ti].data[i] -= h;
                let num = (loss64(&plus, &seq, &tg) - loss64(&minus, &seq, &tg)) / (2.0 * h);
                let ana = g.tensors[ti].data[i];
                if num.abs() + ana.abs() < 1e-8 {
                    continue;
                }
                worst = worst.max((num - ana).abs() / (num.abs() + ana.abs()).max(1e-6));
                checked += 1;
                hit = true;
            }
            groups_hit += hit as usize;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst < 1e-3 && groups_hit == groups && secs < 300.0,
        format!("worst relative error {worst:.2e} over {checked} entries, {groups_hit}/{groups} tensors, {secs:.1} s"),
    )
}

// 4. streaming equivalence

fn c4_streaming() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f32;
    for k in 0..100 {
        let variant = if k % 2 == 0 { Variant::Dual } else { Variant::Unified };
        let mut cfg = ModelConfig::small(36, 32, 2, 4);
        cfg.max_context = 64;
        cfg.init_std = 0.1;
        cfg.variant = variant;
        let p = Params::<f32>::init(&cfg, k).unwrap();
        let (seq, _) = random_pair(&cfg, 200, &mut rng);
        let full = forward_sequence(&p, &seq).unwrap();
        let mut cache = DecodeCache::new(&p);
        for n in 0..seq.frames() {
            let step = step_with_cache(&mut cache, &seq.frame(n), &p).unwrap();
            for (h, l) in step.logits.iter().enumerate() {
                for (a, b) in l.iter().zip(full.logits[h].row(n)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    verdict(worst < 1e-5, format!("max logit deviation {worst:.2e} over 100 x 200 frames, {:.1} s", t0.elapsed().as_secs_f64()))
}

// 5. state-machine safety

/// With a debounce of one, a user token heard while speaking must be
/// followed at once by YIELD and LISTENING, and every YIELD has that cause.
fn check_yields(trace: &SessionTrace) -> Result<(), String> {
    let mut state = DialogueState::Listening;
    let ev = &trace.events;
    for (i, e) in ev.iter().enumerate() {
        match e.kind {
            EventKind::UserToken if state == DialogueState::Speaking => {
                let next = ev.get(i + 1);
                if !next.is_some_and(|y| y.kind == EventKind::Yield && y.frame == e.frame) {
                    return Err(format!("user token at frame {} while speaking without YIELD", e.frame));
                }
            }
            EventKind::Yield => {
                let prev = i.checked_sub(1).map(|j| &ev[j]);
                if !prev.is_some_and(|u| u.kind == EventKind::UserToken && u.frame == e.frame) {
                    return Err(format!("YIELD at frame {} without a user token", e.frame));
                }
            }
            EventKind::StateChange => state = e.state.unwrap(),
            _ => {}
        }
    }
    Ok(())
}

fn random_stream(rng: &mut ChaCha8Rng, n: usize, p_text: f64, specials: &[(TokenId, f64)]) -> Vec<TokenId> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for &(t, p) in specials {
                acc += p;
                if u < acc {
                    return t;
                }
            }
            if u < acc + p_text {
                TokenId(rng.gen_range(9..36))
            } else {
                EMP
            }
        })
        .collect()
}

fn c5_state_machine() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lexicon = Lexicon::default();
    let (mut violations, mut first, mut yields, mut speaking) = (0usize, None, 0usize, 0usize);
    for k in 0..10_000 {
        let n = rng.gen_range(0..160);
        let audio = AcousticTokenGrid::null(n, 16, 64);
        let visual = VisualFeatureGrid::null(n, 16);
        let dual = k % 2 == 0;
        let p_text = rng.gen_range(0.0..0.6);
        let (mut model, mode) = if dual {
            let u = random_stream(&mut rng, n, p_text, &[(NULL, 0.02), (BOS, 0.01), (EOS, 0.01), (SOT, 0.01)]);
            let p_sot = rng.gen_range(0.0..0.15);
            let t = random_stream(&mut rng, n, 0.0, &[(SOT, p_sot), (BACKCHANNEL, 0.03), (NULL, 0.01)]);
            (ScriptedModel::dual(u, t), Mode::Dual)
        } else {
            let p_sot = rng.gen_range(0.0..0.1);
            let r = random_stream(&mut rng, n, p_text, &[(SOT, p_sot), (BACKCHANNEL, 0.03), (EOS, 0.01)]);
            (ScriptedModel::unified(r), Mode::Unified)
        };
        let mut backbone: Box<dyn Backbone> =
            if rng.gen_bool(0.5) { Box::new(EchoBackbone::default()) } else { Box::new(ScriptedBackbone::new(lexicon.clone())) };
        let trace = run_session(&audio, &visual, &mut model, backbone.as_mut(), mode, &SessionConfig::default(), k).unwrap();
        yields += trace.count(EventKind::Yield);
        speaking += trace.events.iter().filter(|e| e.state == Some(DialogueState::Speaking)).count();
        if let Err(e) = check_trace(&trace).and_then(|_| check_yields(&trace)) {
            violations += 1;
            first.get_or_insert(format!("trace {k}: {e}"));
        }
    }
    let extra = first.map(|f| format!("; first: {f}")).unwrap_or_default();
    verdict(
        violations == 0 && yields > 0 && speaking > 0,
        format!("{violations} violations in 10000 traces ({speaking} SPEAKING entries, {yields} yields){extra}"),
    )
}

// 9. metric oracles

/// Edit distance by breadth-first search over single-symbol edits. Strings
/// never need to exceed the longer operand, so the search space is closed.
fn bfs_distances(src: &[u8], max_len: usize) -> HashMap<Vec<u8>, usize> {
    let mut dist = HashMap::new();
    dist.insert(src.to_vec(), 0);
    let mut queue = VecDeque::from([src.to_vec()]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        let mut next = Vec::new();
        for i in 0..s.len() {
            let mut del = s.clone();
            del.remove(i);
            next.push(del);
            for c in 0..3u8 {
                if c != s[i] {
                    let mut sub = s.clone();
                    sub[i] = c;
                    next.push(sub);
                }
            }
        }
        if s.len() < max_len {
            for i in 0..=s.len() {
                for c in 0..3u8 {
                    let mut ins = s.clone();
                    ins.insert(i, c);
                    next.push(ins);
                }
            }
        }
        for t in next {
            if !dist.contains_key(&t) {
                dist.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

fn all_strings(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s: &Vec<u8>| (0..3u8).map(move |c| [s.as_slice(), &[c]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

#[derive(Deserialize)]
struct Fixture {
    name: String,
    gt: Vec<GtTurn>,
    events: Vec<TraceEvent>,
    expected: Expected,
}

#[derive(Deserialize)]
struct Expected {
    response_ratio: f64,
    fto_mae: Option<f64>,
    median_fto: Option<f64>,
    n_no_response: usize,
    n: usize,
    overflow_or_none: usize,
    underflow: usize,
}

fn close(got: f64, want: Option<f64>) -> bool {
    match want {
        None => got.is_nan(),
        Some(w) => (got - w).abs() < 1e-9,
    }
}

fn c9_metrics() -> Verdict {
    let strings = all_strings(6);
    let mut wer_bad = 0usize;
    let mut pairs = 0usize;
    for r in &strings {
        let dist = bfs_distances(r, 6);
        for h in &strings {
            pairs += 1;
            let c = edit_counts(r, h);
            let d = dist[h];
            let rate = wer(r, h);
            let want = d as f64 / r.len().max(1) as f64;
            if c.errors() != d || c.reference_len != r.len() || (rate - want).abs() > 1e-12 {
                wer_bad += 1;
            }
        }
    }

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/turns");
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let grid = FrameGrid::default();
    let mut fixture_bad = Vec::new();
    for f in &files {
        let fx: Fixture = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
        let trace = SessionTrace { events: fx.events };
        let records = extract_ftos(&trace, &fx.gt, &grid);
        let m = turn_metrics(&records);
        let h = fto_histogram(&records);
        let e = &fx.expected;
        let ok = (m.response_ratio - e.response_ratio).abs() < 1e-12
            && close(m.fto_mae, e.fto_mae)
            && close(m.median_fto, e.median_fto)
            && m.n_no_response == e.n_no_response
            && m.n == e.n
            && h.overflow_or_none == e.overflow_or_none
            && h.underflow == e.underflow;
        if !ok {
            fixture_bad.push(fx.name);
        }
    }

    let lexicon = Lexicon::default();
    let mut gt_mae = 0.0f64;
    let mut gt_turns = 0;
    for seed in 0..200 {
        let conv = gen_conversation(seed, &ConversationParams::default(), &lexicon).unwrap();
        let opp = conv.turn_opportunities(USER_SIDE).unwrap();
        let gt: Vec<GtTurn> = opp.iter().map(|o| GtTurn { end: o.user_end, fto: o.fto }).collect();
        let starts: Vec<f64> = opp.iter().map(|o| o.agent_start).collect();
        let m = turn_metrics(&pair_ftos(&starts, &gt));
        gt_turns += m.n;
        if m.n > 0 {
            gt_mae = gt_mae.max(m.fto_mae.abs());
        }
    }
    verdict(
        wer_bad == 0 && files.len() == 20 && fixture_bad.is_empty() && gt_mae == 0.0 && gt_turns > 0,
        format!(
            "wer: {wer_bad} mismatches in {pairs} pairs; fixtures: {}/{} match{}; gt-vs-gt mae {gt_mae} over {gt_turns} turns",
            files.len() - fixture_bad.len(),
            files.len(),
            if fixture_bad.is_empty() { String::new() } else { format!(" (failed: {})", fixture_bad.join(", ")) }
        ),
    )
}

// 10. latency

fn c10_latency() -> Verdict {
    let lat = |k| algorithmic_latency(&EncoderConfig { lookahead: k, ..Default::default() });
    let (d, l0, l1) = (algorithmic_latency(&EncoderConfig::default()), lat(0), lat(1));
    verdict(d == 120 && l0 == 40 && l1 == 80, format!("default {d} ms, lookahead 0/1/2: {l0}/{l1}/{} ms", lat(2)))
}

// 6, 7, 8, 11: trained toy models

const N_EVAL: usize = 40;

struct Toy {
    world: World,
    recipe: Recipe,
    data: Pools,
    clean: Vec<RenderedSide>,
}

impl Toy {
    fn new() -> Self {
        let world = World::new(toy_world_config()).unwrap();
        let recipe = Recipe::default();
        let data = pools(&world, &recipe).unwrap();
        let clean = world.eval_set(Condition::Clean, (0.0, 0.0), N_EVAL, 0xE7A1).unwrap();
        Toy { world, recipe, data, clean }
    }

    fn train(&self, variant: Variant, mixture: Stage2Mixture, stage1: bool) -> Params<f32> {
        let t0 = Instant::now();
        let (p, rep) = train_two_stage(&self.world, &self.recipe, &self.data, variant, &mixture, stage1).unwrap();
        println!(
            "    trained {variant:?} stage1={stage1} in {:.0} s, final loss {:.4}",
            t0.elapsed().as_secs_f64(),
            rep.stage2.final_loss(50).unwrap_or(f64::NAN)
        );
        p
    }

    fn remix(&self, condition: Condition, snr: (f64, f64)) -> Vec<RenderedSide> {
        self.world.remix(&self.clean, condition, snr, 0xE7A2 ^ condition as u64).unwrap()
    }

    fn eval(&self, p: &Params<f32>, modality: Modality, sides: &[RenderedSide]) -> SetResult {
        let session = SessionConfig { implicit_onset: p.config.variant == Variant::UnifiedNoSot, ..Default::default() };
        let m = ModelUnderTest { name: String::new(), params: p, modality, session };
        evaluate_set(&self.world, &m, sides, 11).unwrap()
    }
}

fn c6_av_advantage(toy: &Toy, av: &Params<f32>, a: &Params<f32>) -> Verdict {
    let interf = toy.remix(Condition::Interf, (-8.0, 0.0));
    let rav = toy.eval(av, Modality::AudioVisual, &interf);
    let ra = toy.eval(a, Modality::Audio, &interf);
    let dw = ra.token_wer() - rav.token_wer();
    let dr = rav.turns.response_ratio - ra.turns.response_ratio;
    verdict(
        dw >= 0.10 && dr >= 0.05,
        format!(
            "INTERF -8..0 dB: token WER A {:.3} vs A+V {:.3} (gap {:.1} pts); response ratio A {:.3} vs A+V {:.3} (gap {:.1} pts)",
            ra.token_wer(),
            rav.token_wer(),
            100.0 * dw,
            ra.turns.response_ratio,
            rav.turns.response_ratio,
            100.0 * dr
        ),
    )
}

fn c7_turn_supervision(toy: &Toy, unified: &Params<f32>, no_sot: &Params<f32>) -> Verdict {
    let snr = toy.world.config.augment.eval_snr;
    let sets = [
        (Condition::Clean, toy.clean.clone()),
        (Condition::Bg, toy.remix(Condition::Bg, snr)),
        (Condition::Interf, toy.remix(Condition::Interf, snr)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, sides) in &sets {
        let with = toy.eval(unified, Modality::AudioVisual, sides).turns.response_ratio;
        let without = toy.eval(no_sot, Modality::AudioVisual, sides).turns.response_ratio;
        pass &= with > without;
        parts.push(format!("{} {with:.3} vs {without:.3}", c.name()));
    }
    verdict(pass, format!("response ratio with vs without <SOT>: {}", parts.join(", ")))
}

fn c8_stage1_ablation(toy: &Toy, two_stage: &Params<f32>, stage2_only: &Params<f32>) -> Verdict {
    let with = toy.eval(two_stage, Modality::AudioVisual, &toy.clean);
    let without = toy.eval(stage2_only, Modality::AudioVisual, &toy.clean);
    verdict(
        without.wer() > with.wer(),
        format!(
            "clean WER two-stage {:.3} vs stage-2 only {:.3} (token WER {:.3} vs {:.3}) at {} total steps",
            with.wer(),
            without.wer(),
            with.token_wer(),
            without.token_wer(),
            toy.recipe.stage1_steps + toy.recipe.stage2_steps
        ),
    )
}

fn c11_visual_invariance(toy: &Toy, av: &Params<f32>) -> Verdict {
    let snr = toy.world.config.augment.eval_snr;
    let sets = [toy.clean.clone(), toy.remix(Condition::Bg, snr), toy.remix(Condition::Interf, snr)];
    let wers: Vec<f64> = sets.iter().map(|s| toy.eval(av, Modality::Visual, s).token_wer()).collect();
    let words: Vec<f64> = sets.iter().map(|s| toy.eval(av, Modality::Visual, s).wer()).collect();
    let same = wers.iter().all(|w| w.to_bits() == wers[0].to_bits()) && words.iter().all(|w| w.to_bits() == words[0].to_bits());
    verdict(same, format!("V-only token WER clean/bg/interf {:.4}/{:.4}/{:.4}, WER {:.4}/{:.4}/{:.4}", wers[0], wers[1], wers[2], words[0], words[1], words[2]))
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let mut lines: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t0 = Instant::now();
        let v = f();
        let secs = t0.elapsed().as_secs_f64();
        println!("criterion {id:>2} {}: {name}: {} ({secs:.1} s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        lines.push((id, name, v, secs));
    };
    run(1, "alignment exactness", &mut c1_alignment);
    run(2, "mixing accuracy", &mut c2_mixing);
    run(3, "gradient correctness", &mut c3_gradients);
    run(4, "streaming equivalence", &mut c4_streaming);
    run(5, "state-machine safety", &mut c5_state_machine);
    run(9, "metric oracles", &mut c9_metrics);
    run(10, "latency formula", &mut c10_latency);

    let toy = Toy::new();
    let av = toy.train(Variant::Dual, Stage2Mixture::default(), true);
    run(11, "visual invariance", &mut || c11_visual_invariance(&toy, &av));
    let a = toy.train(Variant::Dual, Stage2Mixture::audio_only(), true);
    run(6, "audio-visual advantage", &mut || c6_av_advantage(&toy, &av, &a));
    drop(a);
    let s2only = toy.train(Variant::Dual, Stage2Mixture::default(), false);
    run(8, "stage-1 ablation", &mut || c8_stage1_ablation(&toy, &av, &s2only));
    drop(s2only);
    let unified = toy.train(Variant::Unified, Stage2Mixture::default(), true);
    let no_sot = toy.train(Variant::UnifiedNoSot, Stage2Mixture::default(), true);
    run(7, "turn-supervision ablation", &mut || c7_turn_supervision(&toy, &unified, &no_sot));

    lines.sort_by_key(|l| l.0);
    println!("\nacceptance summary ({:.0} s)", started.elapsed().as_secs_f64());
    for (id, name, v, _) in &lines {
        println!("  {id:>2} {:4} {name}", if v.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<String> = lines.iter().filter(|l| !l.2.pass).map(|l| format!("{} ({})", l.0, l.1)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
