use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::frontend::{AcousticTokenGrid, VisualFeatureGrid, AUDIO_NULL};
use crate::grid::{LossWeights, TokenId, EMP, NULL, SOT};

fn tiny(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::small(20, 16, 2, 2);
    c.n_codebooks = 3;
    c.codebook_size = 8;
    c.visual_dims = 4;
    c.variant = variant;
    c.init_std = 0.3;
    c
}

fn random_sequence(cfg: &ModelConfig, n: usize, seed: u64) -> (Sequence, Targets) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let audio: Vec<u16> = (0..n * cfg.n_codebooks)
        .map(|_| if rng.gen_bool(0.1) { AUDIO_NULL } else { rng.gen_range(0..cfg.codebook_size as u16) })
        .collect();
    let audio = AcousticTokenGrid::from_tokens(audio, cfg.n_codebooks, cfg.codebook_size).unwrap();
    let feats: Vec<f32> = (0..n * cfg.visual_dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut visual = VisualFeatureGrid::from_features(feats, cfg.visual_dims).unwrap();
    for i in (0..n).step_by(4) {
        let row = visual.frame(i).to_vec();
        visual.set_frame(i, &row, false);
    }
    let heads = cfg.heads();
    let streams: Vec<Vec<TokenId>> = heads
        .iter()
        .map(|h| {
            (0..n)
                .map(|_| if rng.gen_bool(0.15) { NULL } else { h.classes[rng.gen_range(0..h.classes.len())] })
                .collect()
        })
        .collect();
    let seq = if heads.len() == 2 {
        Sequence::teacher_forced(audio, visual, &streams[0], Some(&streams[1]))
    } else {
        Sequence { audio, visual, u_prev: shift_history(&streams[0]), t_prev: vec![NULL; n] }
    };
    (seq, Targets { streams })
}

fn loss_of(p: &Params<f64>, seq: &Sequence, tg: &Targets, w: &LossWeights) -> f64 {
    let f = forward_sequence(p, seq).unwrap();
    weighted_ce_loss(&p.heads, &f.logits, tg, w).unwrap().loss
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for variant in [Variant::Dual, Variant::Unified] {
        let mut cfg = tiny(variant);
        cfg.max_context = 5;
        let p: Params<f64> = Params::<f32>::init(&cfg, 3).unwrap().cast();
        let (seq, tg) = random_sequence(&cfg, 9, 11);
        let w = LossWeights::default();
        let f = forward_sequence(&p, &seq).unwrap();
        let out = weighted_ce_loss(&p.heads, &f.logits, &tg, &w).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &seq, &f, &out.dlogits, &mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut worst, mut checked) = (0.0f64, 0);
        for (ti, t) in p.tensors.iter().enumerate() {
            for _ in 0..6 {
                let i = rng.gen_range(0..t.len());
                let h = 1e-5;
                let mut plus = p.clone();
                plus.tensors[ti].data[i] += h;
                let mut minus = p.clone();
                minus.tensors[ti].data[i] -= h;
                let num = (loss_of(&plus, &seq, &tg, &w) - loss_of(&minus, &seq, &tg, &w)) / (2.0 * h);
                let ana = g.tensors[ti].data[i];
                if num.abs() + ana.abs() < 1e-7 {
                    continue;
                }
                let rel = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-6);
                assert!(rel < 1e-3, "{} [{i}]: analytic {ana} vs numeric {num}", t.name);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        assert!(checked > 50, "too few entries checked: {checked}");
        assert!(worst < 1e-3);
    }
}

#[test]
fn streaming_matches_full_sequence() {
    for variant in [Variant::Dual, Variant::Unified] {
        let mut cfg = tiny(variant);
        cfg.max_context = 7;
        let p = Params::<f32>::init(&cfg, 9).unwrap();
        let (seq, _) = random_sequence(&cfg, 40, 2);
        let full = forward_sequence(&p, &seq).unwrap();
        let mut cache = DecodeCache::new(&p);
        for n in 0..seq.frames() {
            let step = step_with_cache(&mut cache, &seq.frame(n), &p).unwrap();
            for (h, l) in step.logits.iter().enumerate() {
                let row = full.logits[h].row(n);
                for (a, b) in l.iter().zip(row) {
                    assert!((a - b).abs() < 1e-5, "frame {n} head {h}: {a} vs {b}");
                }
            }
        }
        assert_eq!(cache.cached_rows(), 7);
    }
}

#[test]
fn outputs_are_causal() {
    let cfg = tiny(Variant::Dual);
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let (seq, _) = random_sequence(&cfg, 20, 4);
    let base = forward_sequence(&p, &seq).unwrap();
    let k = 12;
    let mut changed = seq.clone();
    changed.audio.frame_mut(k).iter_mut().for_each(|a| *a = (*a).wrapping_add(1) % 8);
    changed.u_prev[k] = SOT;
    let vals = vec![0.9; cfg.visual_dims];
    changed.visual.set_frame(k, &vals, true);
    let after = forward_sequence(&p, &changed).unwrap();
    for h in 0..2 {
        for n in 0..k {
            assert_eq!(base.logits[h].row(n), after.logits[h].row(n), "frame {n} saw the future");
        }
        assert_ne!(base.logits[h].row(k), after.logits[h].row(k));
    }
}

#[test]
fn all_null_frame_embeds_to_zero() {
    let cfg = tiny(Variant::Dual);
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let audio = vec![AUDIO_NULL; cfg.n_codebooks];
    let inp = FrameInput { audio: &audio, visual: None, u_prev: NULL, t_prev: NULL };
    assert!(embed_step(&p, &inp).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn absent_visual_equals_zero_contribution() {
    // A NULL visual frame adds nothing; an all-zero present frame also adds
    // nothing, since L_V has no bias.
    let cfg = tiny(Variant::Dual);
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let audio = vec![2u16, 5, 1];
    let zeros = vec![0.0f32; cfg.visual_dims];
    let a = embed_step(&p, &FrameInput { audio: &audio, visual: None, u_prev: EMP, t_prev: NULL }).unwrap();
    let b = embed_step(&p, &FrameInput { audio: &audio, visual: Some(&zeros), u_prev: EMP, t_prev: NULL }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loss_scales_exactly_with_weights() {
    let cfg = tiny(Variant::Dual);
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let (seq, tg) = random_sequence(&cfg, 15, 8);
    let f = forward_sequence(&p, &seq).unwrap();
    let w = LossWeights::default();
    let l1 = weighted_ce_loss(&p.heads, &f.logits, &tg, &w).unwrap().loss;
    for c in [0.5, 2.0, 4.0] {
        let lc = weighted_ce_loss(&p.heads, &f.logits, &tg, &w.scaled(c)).unwrap().loss;
        assert_eq!(lc, c * l1);
    }
}

#[test]
fn zero_steps_return_the_initialisation() {
    let cfg = tiny(Variant::Dual);
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let data = Stage2Data::default();
    let optim = OptimConfig { steps: 0, ..OptimConfig::default() };
    let mut log = LossLog::default();
    let (q, rep) =
        train_stage2(p.clone(), &data, &Stage2Mixture::default(), &optim, &LossWeights::default(), 0, &mut log).unwrap();
    assert_eq!(q.tensors, p.tensors);
    assert_eq!(rep.steps, 0);
}

#[test]
fn unified_head_starts_from_the_text_head() {
    let cfg = tiny(Variant::Dual);
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let q = adapt_to_variant(&p, Variant::Unified, 2).unwrap();
    let (u, r) = (p.find("head.u.w").unwrap(), q.find("head.r.w").unwrap());
    assert_eq!(p.tensors[u].data, q.tensors[r].data);
    assert_eq!(p.t(p.layout.l_a), q.t(q.layout.l_a));
    assert!(q.find("head.t.w").is_none());
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let cfg = tiny(Variant::Dual);
    let (seq, tg) = random_sequence(&cfg, 12, 3);
    let w = LossWeights::default();
    let run = || {
        let mut p = Params::<f32>::init(&cfg, 1).unwrap();
        let optim = OptimConfig { steps: 60, batch_size: 1, lr: 1e-2, warmup_steps: 5, ..OptimConfig::default() };
        let mut opt = AdamW::new(optim, &p);
        let mut losses = Vec::new();
        for _ in 0..60 {
            let f = forward_sequence(&p, &seq).unwrap();
            let out = weighted_ce_loss(&p.heads, &f.logits, &tg, &w).unwrap();
            let mut g = p.zeros_like();
            backward(&p, &seq, &f, &out.dlogits, &mut g);
            opt.step(&mut p, &g);
            losses.push(out.loss);
        }
        (p, losses)
    };
    let (p1, l1) = run();
    let (p2, l2) = run();
    assert_eq!(l1, l2);
    assert_eq!(p1.tensors, p2.tensors);
    assert!(l1.last().unwrap() < &(0.5 * l1[0]), "{} -> {}", l1[0], l1.last().unwrap());
}

#[test]
fn late_frames_cost_no_more_than_early_ones_once_the_window_is_full() {
    let mut cfg = ModelConfig::small(36, 32, 2, 2);
    cfg.max_context = 64;
    let p = Params::<f32>::init(&cfg, 1).unwrap();
    let audio = vec![1u16; cfg.n_codebooks];
    let inp = FrameInput { audio: &audio, visual: None, u_prev: EMP, t_prev: EMP };
    let mut cache = DecodeCache::new(&p);
    let time = |cache: &mut DecodeCache<f32>, reps: usize| {
        let t0 = std::time::Instant::now();
        for _ in 0..reps {
            step_with_cache(cache, &inp, &p).unwrap();
        }
        t0.elapsed().as_secs_f64() / reps as f64
    };
    for _ in 0..64 {
        step_with_cache(&mut cache, &inp, &p).unwrap();
    }
    let early = time(&mut cache, 200);
    for _ in 0..2000 {
        step_with_cache(&mut cache, &inp, &p).unwrap();
    }
    let late = time(&mut cache, 200);
    assert!(late <= 2.0 * early + 1e-5, "early {early:e}s late {late:e}s");
    assert!(cache.cached_rows() <= 64);
}

#[test]
fn mixture_sampling_matches_proportions() {
    let mix = Stage1Mixture::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 20_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let task = mix.sample(&mut rng);
        counts[crate::grid::Stage1Task::ALL.iter().position(|&t| t == task).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip([mix.text, mix.asr, mix.avsr, mix.caption]) {
        let f = *c as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 4.0 * sd, "{f} vs {p}");
    }
    assert!(Stage1Mixture { text: 0.5, ..mix }.validate().is_err());
    let a = Stage2Mixture::audio_only();
    assert!((0..100).all(|_| a.sample(&mut rng) == Modality::Audio));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn null_history_has_no_effect(seed in 0u64..1000) {
        // replacing a NULL history token by NULL again is trivially neutral;
        // the real check is that NULL rows never receive gradient
        let cfg = tiny(Variant::Dual);
        let p = Params::<f32>::init(&cfg, seed).unwrap();
        let (seq, tg) = random_sequence(&cfg, 10, seed);
        let f = forward_sequence(&p, &seq).unwrap();
        let out = weighted_ce_loss(&p.heads, &f.logits, &tg, &LossWeights::default()).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &seq, &f, &out.dlogits, &mut g);
        let d = cfg.d_model;
        let row = &g.t(g.layout.tok_emb)[NULL.index() * d..(NULL.index() + 1) * d];
        prop_assert!(row.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn checkpoint_round_trips(seed in 0u64..1000) {
        let cfg = tiny(Variant::Unified);
        let p = Params::<f32>::init(&cfg, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &Checkpoint { params: p.clone(), vocab_hash: "abc".into(), step: seed }).unwrap();
        let back = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back.params.tensors, p.tensors);
        prop_assert_eq!(back.step, seed);
    }
}
