//! `tornet` command-line interface.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data/IO error,
//! 3 internal assertion.

mod run_config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use tornet_core::checkpoint::{load_model, read_file, write_file};
use tornet_core::data::{generate_synth, load_split, Manifest, Split, SynthSpec, LABEL_NAMES};
use tornet_core::error::{Error, Result};
use tornet_core::features::{assemble, AudioClip, MelFilterbank, SAMPLE_RATE};
use tornet_core::gradcheck::harness_sanity_report;
use tornet_core::network::{build_model, Model, ModelConfig};
use tornet_core::train::{evaluate_split, predict_probs, render_history, train};
use tornet_core::verify::{gradcheck_suite, render_suite};
use tornet_core::{parallel, Tensor};

use run_config::RunSettings;

#[derive(Parser)]
#[command(
    name = "tornet",
    version,
    about = "Temporal-oriented broadcast-residual network for binary audio classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the deterministic synthetic two-class corpus
    SynthData(SynthDataArgs),
    /// Train a model on a manifest
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a manifest
    Eval(EvalArgs),
    /// Print the layer trace and parameter breakdown of a variant
    Params(ParamsArgs),
    /// Run the finite-difference gradient-check suite
    Gradcheck(GradcheckArgs),
    /// Classify a single WAV file
    Predict(PredictArgs),
}

#[derive(Args)]
struct SynthDataArgs {
    /// Output directory for WAV files and manifest.csv
    #[arg(long)]
    out: PathBuf,
    /// Clips per class per split
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest CSV (filename,label,split)
    #[arg(long)]
    manifest: PathBuf,
    /// Optional `key = value` config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints and the history log
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Architecture variant: default, no-instancenorm, no-last-conv,
    /// only-transition
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Early-stop patience in epochs without validation improvement
    #[arg(long)]
    patience: Option<usize>,
    /// off | balanced
    #[arg(long)]
    class_weighting: Option<String>,
    /// Global L2 gradient clip
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Stop once validation UAR reaches this value
    #[arg(long)]
    target_uar: Option<f64>,
    /// Bitwise-reproducible mode: sequential execution, zeroed wall-clock
    /// metadata
    #[arg(long)]
    single_thread: bool,
    /// Worker threads for feature extraction and batched math
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for content-addressed feature blobs
    #[arg(long)]
    feature_cache: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// train | devel | test
    #[arg(long)]
    split: String,
    #[arg(long, default_value_t = 42)]
    bootstrap_seed: u64,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    single_thread: bool,
    #[arg(long)]
    feature_cache: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, default_value = "default")]
    variant: String,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random seeds per op
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Harness sanity fixture: also check a deliberately wrong backward,
    /// which must fail and make the command exit nonzero
    #[arg(long, hide = true)]
    inject_wrong_backward: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    wav: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let outcome = match cli.command {
        Command::SynthData(args) => cmd_synth_data(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Params(args) => cmd_params(&args),
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::Predict(args) => cmd_predict(&args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn configure_workers(threads: Option<usize>, single_thread: bool) -> Result<()> {
    parallel::set_single_thread(single_thread);
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::config("--threads must be >= 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

fn cmd_synth_data(args: &SynthDataArgs) -> Result<()> {
    let manifest = generate_synth(
        &SynthSpec {
            n_per_class_per_split: args.n,
            seed: args.seed,
        },
        &args.out,
    )?;
    println!("{}", manifest.display());
    Ok(())
}

fn parse_split(name: &str) -> Result<Split> {
    Split::parse(name)
        .ok_or_else(|| Error::config(format!("unknown split '{name}' (train/devel/test)")))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let settings = RunSettings::resolve(args)?;
    for line in settings.describe() {
        println!("config: {line}");
    }
    configure_workers(args.threads, settings.train.deterministic)?;

    let manifest = Manifest::load(&args.manifest)?;
    let bank = MelFilterbank::new(SAMPLE_RATE);
    let cache = args.feature_cache.as_deref();
    let train_split = load_split(&manifest, Split::Train, &bank, cache)?;
    let val_split = load_split(&manifest, Split::Devel, &bank, cache)?;
    println!(
        "loaded {} train / {} devel clips",
        train_split.len(),
        val_split.len()
    );

    let config = ModelConfig::variant(&settings.variant)?;
    let mut model = build_model(&config, settings.train.seed)?;
    println!(
        "model '{}': {} parameters",
        settings.variant,
        model.param_count()
    );

    let outcome = train(&mut model, &train_split, &val_split, &settings.train)?;
    for record in &outcome.history {
        println!("{}", record.render());
    }

    std::fs::create_dir_all(&args.out)?;
    let best_path = args.out.join("best.ckpt");
    write_file(&best_path, &outcome.best_checkpoint)?;
    write_file(&args.out.join("final.ckpt"), &outcome.final_checkpoint)?;
    std::fs::write(
        args.out.join("history.log"),
        render_history(&outcome.history),
    )?;
    println!(
        "best epoch {} (val UAR {:.4}) -> {}",
        outcome.best_epoch,
        outcome.best_val_uar,
        best_path.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    configure_workers(args.threads, args.single_thread)?;
    let bytes = read_file(&args.checkpoint)?;
    let (mut model, meta) = load_model::<f32>(&bytes)?;
    if let Some(epoch) = meta.get("epoch") {
        println!(
            "checkpoint: variant {} epoch {} (val UAR {})",
            meta.get("model.variant").unwrap_or_default(),
            epoch,
            meta.get("val_uar").unwrap_or_else(|| "?".to_string()),
        );
    }
    let manifest = Manifest::load(&args.manifest)?;
    let split = parse_split(&args.split)?;
    let bank = MelFilterbank::new(SAMPLE_RATE);
    let data = load_split(&manifest, split, &bank, args.feature_cache.as_deref())?;
    let report = evaluate_split(&mut model, &data, 16, args.bootstrap, args.bootstrap_seed)?;
    print!("{}", report.render());
    println!("---");
    print!("{}", report.render_structured());
    Ok(())
}

fn cmd_params(args: &ParamsArgs) -> Result<()> {
    let config = ModelConfig::variant(&args.variant)?;
    let model: Model<f32> = build_model(&config, 0)?;
    let trace = model.shape_trace()?;
    print!("{}", trace.render());
    println!();
    for (prefix, count) in model.param_breakdown() {
        println!("{prefix:<8} {count:>10}");
    }
    let total = model.param_count();
    println!(
        "total    {total:>10}  ({:.2} M)",
        total as f64 / 1_000_000.0
    );
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::config("--seeds must be >= 1".to_string()));
    }
    let mut results = gradcheck_suite(args.seeds);
    if args.inject_wrong_backward {
        let sabotage = harness_sanity_report();
        results.push(tornet_core::verify::SuiteResult {
            name: "injected_wrong_backward",
            tolerance: sabotage.tolerance,
            max_rel_err: sabotage.max_rel_err,
            passed: sabotage.passed,
            seeds: 1,
        });
    }
    print!("{}", render_suite(&results));
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Error::Internal(
            "gradient check failed for at least one op".to_string(),
        ))
    }
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let bytes = read_file(&args.checkpoint)?;
    let (mut model, _) = load_model::<f32>(&bytes)?;
    let clip = AudioClip::load(Path::new(&args.wav))?;
    let bank = MelFilterbank::new(SAMPLE_RATE);
    let features = assemble(&clip, &bank)?;
    let features: Tensor<f32> = features.data;
    let probs = predict_probs(&mut model, &features)?;
    let label = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    println!("label: {}", LABEL_NAMES[label]);
    for (i, p) in probs.iter().enumerate() {
        println!("p({}) = {:.6}", LABEL_NAMES[i], p);
    }
    Ok(())
}
