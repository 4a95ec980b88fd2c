use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hoi::commands::{self, Ctx, EvalOptions, MetricFamily, MotionKind, SampleInputs};
use hoi::{HoiError, Result};
use hoi_core::lm::DecodeParams;
use hoi_core::tasks::Task;

#[derive(Parser, Debug)]
#[command(name = "hoi", version, about = "Unified human-object interaction generation at desk scale")]
struct Cli {
    /// JSON run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent of the run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Runs models in 64-bit precision.
    #[arg(long, global = true)]
    f64: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Writes the synthetic dataset and its manifest.
    GenData {
        /// Writes disjoint train.json / test.json instead of manifest.json.
        #[arg(long)]
        split: bool,
    },
    /// Trains the human or object motion tokenizer.
    TrainTokenizer {
        modality: MotionKind,
        #[arg(long)]
        resume: bool,
    },
    /// Stage 1 (all tasks) or stage 2 (one task) language-model training.
    TrainLm {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
    },
    /// Generates the task's target modalities from condition files.
    Sample {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        caption: Option<String>,
        /// Human motion (.hoim).
        #[arg(long)]
        human: Option<PathBuf>,
        /// Object motion (.hoim).
        #[arg(long)]
        object: Option<PathBuf>,
        /// Object point cloud (.hoip).
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory; defaults to samples/<task> in the run.
        #[arg(long = "sample-out")]
        sample_out: Option<PathBuf>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        max_new: Option<usize>,
        /// Clips malformed output to its first well-formed span.
        #[arg(long)]
        repair: bool,
    },
    /// Generates for every test sample and writes metric reports.
    Eval {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated metric families; all compatible ones by default.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<MetricFamily>>,
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        per_frame: bool,
    },
    /// Reports code usage of a trained tokenizer over the training set.
    InspectCodebook { modality: MotionKind },
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    Task::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
        format!("unknown task {s:?}; expected one of {}", names.join(", "))
    })
}

macro_rules! precision {
    ($f64:expr, $f:ident ( $($arg:expr),* )) => {
        if $f64 { commands::$f::<f64>($($arg),*) } else { commands::$f::<f32>($($arg),*) }
    };
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.config.as_deref(), cli.seed, &cli.out)?;
    match cli.cmd {
        Cmd::GenData { split } => {
            let s = commands::gen_data(&ctx, split)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Cmd::TrainTokenizer { modality, resume } => {
            let logs = precision!(cli.f64, train_tokenizer(&ctx, modality, resume))?;
            if let Some(l) = logs.last() {
                println!("{} epoch {} loss {:.5} utilization {:.3}", modality.name(), l.epoch, l.total, l.utilization);
            }
        }
        Cmd::TrainLm { stage, task } => {
            let o = precision!(cli.f64, train_lm(&ctx, stage, task))?;
            println!("{} steps -> {}", o.steps, o.checkpoint.display());
            if let Some(r) = o.stage2 {
                println!("held-out {} loss {:.4} -> {:.4}", r.task, r.before, r.after);
            }
        }
        Cmd::Sample {
            task,
            caption,
            human,
            object,
            points,
            checkpoint,
            sample_out,
            temperature,
            top_k,
            max_new,
            repair,
        } => {
            let mut decode: DecodeParams = ctx.cfg.decode.clone();
            if let Some(t) = temperature {
                decode.temperature = t;
            }
            if let Some(k) = top_k {
                decode.top_k = k;
            }
            if let Some(m) = max_new {
                decode.max_new = m;
            }
            let inputs = SampleInputs {
                caption,
                human,
                object,
                points,
                checkpoint,
                out: sample_out,
                repair,
            };
            let (dir, g) = precision!(cli.f64, sample(&ctx, task, &inputs, &decode))?;
            if let Some(c) = g.caption {
                println!("caption: {c}");
            }
            println!("wrote {}", dir.display());
        }
        Cmd::Eval {
            task,
            manifest,
            checkpoint,
            metrics,
            plot,
            per_frame,
        } => {
            let opts = EvalOptions {
                manifest,
                checkpoint,
                metrics,
                plot,
                per_frame,
            };
            let o = precision!(cli.f64, eval(&ctx, task, &opts))?;
            print!("{}", o.report.table());
        }
        Cmd::InspectCodebook { modality } => {
            let r = precision!(cli.f64, inspect_codebook(&ctx, modality))?;
            println!("{} codes, utilization {:.3}, {} dead", r.size, r.utilization, r.dead.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOI_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", HoiError::Usage(if detail.is_empty() { msg } else { detail }).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
