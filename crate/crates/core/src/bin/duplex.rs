use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duplex_av::app::{self, Context, RunConfig, OUT_ENV};
use duplex_av::corpus::Condition;
use duplex_av::model::{Modality, Variant};

#[derive(Parser)]
#[command(name = "duplex", version, about = "Audio-visual full-duplex dialogue toolkit")]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic conversation corpus.
    GenCorpus {
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Train stage 1 or stage 2 and write a checkpoint.
    Train {
        #[arg(long)]
        stage: u8,
        #[arg(long, default_value = "dual")]
        variant: Variant,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        no_stage1: bool,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate one checkpoint under one condition.
    Eval {
        #[arg(long)]
        task: app::Task,
        #[arg(long, default_value = "clean")]
        condition: Condition,
        #[arg(long, default_value = "av")]
        modality: Modality,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, requires = "snr_hi", allow_hyphen_values = true)]
        snr_lo: Option<f64>,
        #[arg(long, requires = "snr_lo", allow_hyphen_values = true)]
        snr_hi: Option<f64>,
    },
    /// Sweep checkpoints over the evaluation SNR bins.
    Sweep {
        #[arg(long)]
        task: app::Task,
        #[arg(long, default_value = "interf")]
        condition: Condition,
        #[arg(long, default_value = "av")]
        modality: Modality,
        #[arg(long = "ckpt", required = true)]
        ckpts: Vec<PathBuf>,
    },
    /// Run the streaming state machine over model-ready grids.
    RunSession {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        visual: Option<PathBuf>,
        #[arg(long, default_value = "scripted")]
        backbone: app::BackboneKind,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the algorithmic latency in milliseconds.
    Latency,
    /// Render a session trace as a timed transcript.
    Replay { trace: PathBuf },
}

fn run(cli: Cli) -> duplex_av::Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context::new(config, cli.seed, cli.out)?;
    match cli.cmd {
        Cmd::GenCorpus { n } => {
            let s = app::gen_corpus(&ctx, n)?;
            println!(
                "{} conversations in {}: median fto {:.3} s, turns {} normal / {} overlapping / {} backchannel, manifest {}",
                s.n_conversations,
                s.dir.display(),
                s.median_fto,
                s.normal_turns,
                s.overlapping_turns,
                s.backchannels,
                &s.manifest_sha256[..16]
            );
        }
        Cmd::Train { stage, variant, init, no_stage1, steps, name } => {
            let s = app::train(&ctx, &app::TrainArgs { stage, variant, init, no_stage1, steps, name })?;
            println!("{} ({} steps, final loss {:?})", s.checkpoint.display(), s.steps, s.final_loss);
            if let Some(l) = s.heldout_turn_loss {
                println!("held-out turn-stream loss {l:.4}");
            }
        }
        Cmd::Eval { task, condition, modality, ckpt, snr_lo, snr_hi } => {
            let snr = snr_lo.zip(snr_hi);
            let r = app::eval(&ctx, &app::EvalArgs { task, condition, modality, ckpt, snr })?;
            println!("model,condition,snr,wer,response_ratio,fto_mae,median_fto,n,token_wer,config_hash,seed");
            println!("{}", r.csv_row());
            if let Some(p) = r.perplexity {
                println!("perplexity {p:.3}");
            }
        }
        Cmd::Sweep { task, condition, modality, ckpts } => {
            print!("{}", app::sweep(&ctx, &app::SweepArgs { task, condition, modality, ckpts })?.to_csv());
        }
        Cmd::RunSession { ckpt, audio, visual, backbone, lm, trace } => {
            let (t, path) = app::run_session_cmd(&ctx, &app::SessionArgs { ckpt, audio, visual, backbone, lm, trace })?;
            println!("{} events -> {}", t.events.len(), path.display());
        }
        Cmd::Latency => println!("{}", app::latency(&ctx)),
        Cmd::Replay { trace } => print!("{}", app::replay(&ctx, &trace)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
