use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::corpus::{apply_mix, draw_training_spec, write_pcm_f32, AudioSidecar, Condition, ManifestRecord};
use crate::error::{Error, Result};
use crate::eval::{evaluate_set, fto_histogram, perplexity, snr_bins, sweep_snr, FtoHistogram, ModelUnderTest, SweepReport, SweepRow};
use crate::frontend::{read_grid, write_grid, NullGrid, VisualFeatureGrid};
use crate::grid::{write_conversations, TurnKind, VocabManifest};
use crate::model::{
    adapt_to_variant, evaluate_loss, load_checkpoint, save_checkpoint, train_stage1, train_stage2, Checkpoint, LossLog,
    Modality, Params, Stage2Data, Variant,
};
use crate::orchestrator::{
    algorithmic_latency, render_transcript, run_session, Backbone, EchoBackbone, Mode, ScriptedBackbone, SessionTrace,
    TinyLmBackbone, TransformerModel,
};
use crate::pipeline::{World, USER_SIDE};

/// A resolved configuration with its digest and output root.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    pub out: PathBuf,
}

impl Context {
    /// Applies command-line overrides, validates, and fixes the hash.
    pub fn new(mut config: RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(o) = out {
            config.out_dir = o;
        }
        config.validate()?;
        Ok(Self { config_hash: config.hash(), out: config.out_dir.clone(), config })
    }

    pub fn world(&self) -> Result<World> {
        World::new(self.config.world.clone())
    }

    pub fn provenance(&self, command: &str) -> Provenance {
        Provenance {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            config: self.config.clone(),
        }
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out.join(sub);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn params_init(&self, world: &World) -> Result<Params<f32>> {
        let m = &self.config.model;
        Params::init(&world.model_config(m.d_model, m.n_layers, m.n_heads, Variant::Dual), m.init_seed)
    }
}

/// Embedded in every report written by a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn sha_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dir: PathBuf,
    pub n_conversations: usize,
    pub manifest_sha256: String,
    pub median_fto: f64,
    pub normal_turns: usize,
    pub overlapping_turns: usize,
    pub backchannels: usize,
}

/// Writes `n` conversations: records, both clean sides and the corrupted
/// user side as PCM, the user-side model grids, and a manifest.
pub fn gen_corpus(ctx: &Context, n: usize) -> Result<CorpusStats> {
    let world = ctx.world()?;
    let dir = ctx.dir("corpus")?;
    fs::create_dir_all(dir.join("audio"))?;
    fs::create_dir_all(dir.join("grids"))?;
    let vocab = world.lexicon.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let (mut convs, mut manifest, mut ftos) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::new());
    let mut kinds = [0usize; 3];
    let enc_hash = ctx.config.world.encoder.hash();
    for _ in 0..n {
        let conv = world.conversation(rng.gen())?;
        let mix = draw_training_spec(&world.banks, &ctx.config.world.augment, &mut rng);
        let mut sides = Vec::with_capacity(2);
        for s in 0..2 {
            let name = format!("audio/{}_side{s}.f32", conv.id);
            let w = world.render_clean(&conv, s);
            write_pcm_f32(&dir.join(&name), &w)?;
            sides.push(name);
        }
        let clean = world.render_clean(&conv, USER_SIDE);
        let mixed = apply_mix(&clean, &mix, &world.banks)?;
        let mixed_name = format!("audio/{}_mix.f32", conv.id);
        write_pcm_f32(&dir.join(&mixed_name), &mixed)?;
        AudioSidecar { id: conv.id.clone(), sample_rate: mixed.sample_rate, n_samples: mixed.len(), mixspec: mix.clone() }
            .write(&dir.join(format!("audio/{}_mix.json", conv.id)))?;
        let r = world.render(&conv, USER_SIDE, &mix)?;
        write_grid(&dir.join(format!("grids/{}.audio.grid", conv.id)), &NullGrid::Audio(r.audio), &enc_hash)?;
        write_grid(&dir.join(format!("grids/{}.visual.grid", conv.id)), &NullGrid::Visual(r.visual), &enc_hash)?;
        for t in conv.sides.iter().flat_map(|s| &s.turns) {
            kinds[match t.kind {
                TurnKind::Normal => 0,
                TurnKind::Overlapping => 1,
                TurnKind::Backchannel => 2,
            }] += 1;
        }
        ftos.extend_from_slice(&conv.fto_list);
        manifest.push(ManifestRecord {
            id: conv.id.clone(),
            side_audio: [sides[0].clone(), sides[1].clone()],
            mixed_audio: mixed_name,
            mixspec: mix,
        });
        convs.push(conv);
    }
    let manifest_path = dir.join("manifest.jsonl");
    ManifestRecord::write_all(&manifest_path, &manifest)?;
    write_conversations(fs::File::create(dir.join("conversations.jsonl"))?, &convs, vocab)?;
    write_json(&dir.join("vocab.json"), &VocabManifest::of(vocab))?;
    ftos.sort_by(f64::total_cmp);
    let median_fto = match ftos.len() {
        0 => f64::NAN,
        k if k % 2 == 1 => ftos[k / 2],
        k => 0.5 * (ftos[k / 2 - 1] + ftos[k / 2]),
    };
    let stats = CorpusStats {
        dir: dir.clone(),
        n_conversations: n,
        manifest_sha256: sha_file(&manifest_path)?,
        median_fto,
        normal_turns: kinds[0],
        overlapping_turns: kinds[1],
        backchannels: kinds[2],
    };
    write_json(&dir.join("stats.json"), &(&ctx.provenance("gen-corpus"), &stats))?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArgs {
    pub stage: u8,
    pub variant: Variant,
    pub init: Option<PathBuf>,
    pub no_stage1: bool,
    /// Overrides the stage's configured step count.
    pub steps: Option<usize>,
    /// Checkpoint file stem; defaults to `stage<k>-<variant>`.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub steps: usize,
    pub final_loss: Option<f64>,
    /// Teacher-forced turn-stream loss on held-out conversations (stage 2).
    pub heldout_turn_loss: Option<f64>,
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Dual => "dual",
        Variant::Unified => "unified",
        Variant::UnifiedNoSot => "unified-no-sot",
    }
}

fn load_params(path: &Path, world: &World) -> Result<Params<f32>> {
    let ck = load_checkpoint(path)?;
    if ck.vocab_hash != world.lexicon.vocab().hash() {
        return Err(Error::Data(format!("{}: vocabulary does not match this world", path.display())));
    }
    Ok(ck.params)
}

pub fn train(ctx: &Context, args: &TrainArgs) -> Result<TrainSummary> {
    let world = ctx.world()?;
    let cfg = &ctx.config;
    let seed = cfg.seed;
    let mut log = LossLog::default();
    let (params, report, heldout) = match args.stage {
        1 => {
            if args.variant != Variant::Dual {
                return Err(Error::Config("stage 1 trains the shared text head; use --variant dual".into()));
            }
            let init = match &args.init {
                Some(p) => load_params(p, &world)?,
                None => ctx.params_init(&world)?,
            };
            let mut optim = cfg.stage1.optim.clone();
            optim.steps = args.steps.unwrap_or(optim.steps);
            let data = world.stage1_data(cfg.stage1.pool, seed ^ 0x51)?;
            let (p, r) = train_stage1(init, &data, &cfg.stage1.mixture, &optim, &cfg.loss_weights, seed, &mut log)?;
            (p, r, None)
        }
        2 => {
            let base = match (&args.init, args.no_stage1) {
                (Some(_), true) => return Err(Error::Config("--init and --no-stage1 are mutually exclusive".into())),
                (None, false) => {
                    return Err(Error::Config("stage 2 needs --init <stage-1 checkpoint> or --no-stage1".into()))
                }
                (Some(p), false) => load_params(p, &world)?,
                (None, true) => ctx.params_init(&world)?,
            };
            let init = adapt_to_variant(&base, args.variant, cfg.model.init_seed ^ 0xAD)?;
            let data = world.stage2_data(cfg.stage2.pool, seed ^ 0x52)?;
            if args.variant == Variant::UnifiedNoSot {
                log::info!("unified-no-sot: {} training targets verified free of <SOT>", data.samples.len());
            }
            let mut optim = cfg.stage2.optim.clone();
            optim.steps = args.steps.unwrap_or(optim.steps);
            let (p, r) = train_stage2(init, &data, &cfg.stage2.mixture, &optim, &cfg.loss_weights, seed ^ 2, &mut log)?;
            let held = world.stage2_data(cfg.stage2.heldout, seed ^ 0x53)?;
            (p.clone(), r, heldout_turn_loss(&p, &held, cfg)?)
        }
        s => return Err(Error::Config(format!("--stage must be 1 or 2, got {s}"))),
    };
    if let Some(l) = report.losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!("training loss became {l}")));
    }
    let dir = ctx.dir("ckpt")?;
    let stem = args.name.clone().unwrap_or_else(|| format!("stage{}-{}", args.stage, variant_name(args.variant)));
    let checkpoint = dir.join(format!("{stem}.ckpt"));
    let loss_log = dir.join(format!("{stem}.loss.jsonl"));
    save_checkpoint(
        &checkpoint,
        &Checkpoint { params, vocab_hash: world.lexicon.vocab().hash(), step: report.steps as u64 },
    )?;
    log.write(&loss_log)?;
    let summary = TrainSummary {
        checkpoint,
        loss_log,
        steps: report.steps,
        final_loss: report.final_loss(20),
        heldout_turn_loss: heldout,
    };
    write_json(&dir.join(format!("{stem}.json")), &(&ctx.provenance("train"), &summary))?;
    Ok(summary)
}

fn heldout_turn_loss(p: &Params<f32>, held: &Stage2Data, cfg: &RunConfig) -> Result<Option<f64>> {
    let variant = p.config.variant;
    let pairs: Vec<_> = held.samples.iter().map(|s| s.training_pair(variant, Modality::AudioVisual)).collect();
    let per = evaluate_loss(p, &pairs, &cfg.loss_weights)?;
    let turn_stream = if variant == Variant::Dual { 1 } else { 0 };
    Ok(per.get(turn_stream).copied().flatten())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Avsr,
    Turns,
    Ppl,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avsr" => Ok(Task::Avsr),
            "turns" => Ok(Task::Turns),
            "ppl" => Ok(Task::Ppl),
            _ => Err(Error::Config(format!("unknown task '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalArgs {
    pub task: Task,
    pub condition: Condition,
    pub modality: Modality,
    pub ckpt: PathBuf,
    /// SNR range for BG/INTERF; defaults to the configured eval range.
    pub snr: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub task: Task,
    pub modality: String,
    pub snr_range: Option<(f64, f64)>,
    pub row: SweepRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<FtoHistogram>,
}

impl EvalReport {
    pub fn csv_row(&self) -> String {
        let r = &self.row;
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{},{}",
            r.model,
            r.condition.name(),
            r.snr,
            r.wer,
            r.response_ratio,
            r.fto_mae,
            r.median_fto,
            r.n,
            r.token_wer,
            self.provenance.config_hash,
            self.provenance.seed
        )
    }
}

/// Rejects task/model combinations whose metric would be meaningless.
pub fn check_task(task: Task, variant: Variant, implicit_onset: bool) -> Result<()> {
    match (task, variant) {
        (Task::Avsr, v) if v.is_unified() => {
            Err(Error::Config("--task avsr needs a dual checkpoint; unified models emit no transcript".into()))
        }
        (Task::Turns, Variant::UnifiedNoSot) if !implicit_onset => Err(Error::Config(
            "a unified-no-sot model never emits <SOT>; set eval.session.implicit_onset = true for --task turns".into(),
        )),
        (Task::Ppl, Variant::Dual) => Err(Error::Config("--task ppl scores agent turns of a unified checkpoint".into())),
        _ => Ok(()),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> Result<EvalReport> {
    let world = ctx.world()?;
    let cfg = &ctx.config;
    let params = load_params(&args.ckpt, &world)?;
    check_task(args.task, params.config.variant, cfg.eval.session.implicit_onset)?;
    let snr = match args.condition {
        Condition::Clean => None,
        _ => Some(args.snr.unwrap_or(cfg.world.augment.eval_snr)),
    };
    // the same conversations under every condition
    let base = world.eval_set(Condition::Clean, (0.0, 0.0), cfg.eval.n_conversations, cfg.seed)?;
    let sides = match snr {
        None => base,
        Some(r) => world.remix(&base, args.condition, r, cfg.seed ^ 0xE7)?,
    };
    let name = stem(&args.ckpt);
    let m = ModelUnderTest { name: name.clone(), params: &params, modality: args.modality, session: cfg.eval.session.clone() };
    let res = evaluate_set(&world, &m, &sides, cfg.seed)?;
    let perplexity = if args.task == Task::Ppl {
        let mut nll_ppl = 0.0;
        for s in &sides {
            let (seq, tg) = world.stage2_sample(s)?.training_pair(params.config.variant, args.modality);
            nll_ppl += perplexity(&params, &seq, &tg.streams[0], 0)?.ln();
        }
        Some((nll_ppl / sides.len().max(1) as f64).exp())
    } else {
        None
    };
    let report = EvalReport {
        provenance: ctx.provenance("eval"),
        task: args.task,
        modality: args.modality.name().into(),
        snr_range: snr,
        row: SweepRow {
            model: name.clone(),
            condition: args.condition,
            snr: snr.map_or(f64::INFINITY, |(lo, hi)| 0.5 * (lo + hi)),
            wer: res.wer(),
            token_wer: res.token_wer(),
            response_ratio: res.turns.response_ratio,
            fto_mae: res.turns.fto_mae,
            median_fto: res.turns.median_fto,
            n: res.n,
        },
        perplexity,
        histogram: (args.task == Task::Turns).then(|| fto_histogram(&res.records)),
    };
    let dir = ctx.dir("eval")?;
    let file = format!("{name}-{:?}-{}-{}", args.task, args.condition.name(), args.modality.name()).to_lowercase();
    write_json(&dir.join(format!("{file}.json")), &report)?;
    fs::write(dir.join(format!("{file}.csv")), format!("{}\n", report.csv_row()))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepArgs {
    pub task: Task,
    pub condition: Condition,
    pub modality: Modality,
    pub ckpts: Vec<PathBuf>,
}

pub fn sweep(ctx: &Context, args: &SweepArgs) -> Result<SweepReport> {
    if args.task == Task::Ppl {
        return Err(Error::Config("sweep supports --task avsr or turns".into()));
    }
    if args.ckpts.is_empty() {
        return Err(Error::Config("sweep needs at least one --ckpt".into()));
    }
    let world = ctx.world()?;
    let cfg = &ctx.config;
    let params: Vec<Params<f32>> = args.ckpts.iter().map(|p| load_params(p, &world)).collect::<Result<_>>()?;
    for p in &params {
        check_task(args.task, p.config.variant, cfg.eval.session.implicit_onset)?;
    }
    let models: Vec<ModelUnderTest<'_>> = params
        .iter()
        .zip(&args.ckpts)
        .map(|(p, path)| ModelUnderTest {
            name: stem(path),
            params: p,
            modality: args.modality,
            session: cfg.eval.session.clone(),
        })
        .collect();
    let (lo, hi) = cfg.world.augment.eval_snr;
    let bins = snr_bins(lo, hi, cfg.eval.snr_step);
    let report = sweep_snr(&world, &models, args.condition, &bins, cfg.eval.n_conversations, cfg.seed, &ctx.config_hash)?;
    let dir = ctx.dir("sweep")?;
    let file = format!("{:?}-{}-{}", args.task, args.condition.name(), args.modality.name()).to_lowercase();
    fs::write(dir.join(format!("{file}.csv")), report.to_csv())?;
    write_json(&dir.join(format!("{file}.json")), &(&ctx.provenance("sweep"), &report))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Echo,
    Scripted,
    Tinylm,
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "echo" => Ok(BackboneKind::Echo),
            "scripted" => Ok(BackboneKind::Scripted),
            "tinylm" => Ok(BackboneKind::Tinylm),
            _ => Err(Error::Config(format!("unknown backbone '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionArgs {
    pub ckpt: PathBuf,
    pub audio: PathBuf,
    /// Absent visual input is a NULL grid.
    pub visual: Option<PathBuf>,
    pub backbone: BackboneKind,
    /// Text model for `tinylm`; defaults to `ckpt`.
    pub lm: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

pub fn run_session_cmd(ctx: &Context, args: &SessionArgs) -> Result<(SessionTrace, PathBuf)> {
    let world = ctx.world()?;
    let cfg = &ctx.config;
    let params = load_params(&args.ckpt, &world)?;
    let (audio, _) = read_grid(&args.audio)?;
    let audio = audio.into_audio()?;
    let visual = match &args.visual {
        Some(p) => read_grid(p)?.0.into_visual()?,
        None => VisualFeatureGrid::null(audio.frames(), params.config.visual_dims),
    };
    let mut backbone: Box<dyn Backbone> = match args.backbone {
        BackboneKind::Echo => Box::new(EchoBackbone::default()),
        BackboneKind::Scripted => Box::new(ScriptedBackbone::new(world.lexicon.clone())),
        BackboneKind::Tinylm => {
            let lm = match &args.lm {
                Some(p) => load_params(p, &world)?,
                None => params.clone(),
            };
            Box::new(TinyLmBackbone::new(lm, cfg.eval.tinylm_max_tokens))
        }
    };
    let mode = if params.config.variant.is_unified() { Mode::Unified } else { Mode::Dual };
    let mut model = TransformerModel::new(&params, cfg.eval.session.decoding);
    let trace = run_session(&audio, &visual, &mut model, backbone.as_mut(), mode, &cfg.eval.session, cfg.seed)?;
    let path = match &args.trace {
        Some(p) => p.clone(),
        None => ctx.dir("sessions")?.join(format!("{}.trace.jsonl", stem(&args.audio))),
    };
    trace.write_jsonl(&path)?;
    Ok((trace, path))
}

pub fn latency(ctx: &Context) -> u32 {
    algorithmic_latency(&ctx.config.world.encoder)
}

pub fn replay(ctx: &Context, trace: &Path) -> Result<String> {
    let world = ctx.world()?;
    let t = SessionTrace::read_jsonl(trace)?;
    Ok(render_transcript(&t, world.lexicon.vocab(), &world.grid))
}
