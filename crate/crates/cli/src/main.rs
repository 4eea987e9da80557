//! `tsgen` — train a population-aware diffusion model for multivariate
//! time series, generate synthetic samples, and evaluate how well they
//! preserve both individual realism and population-level structure.
//!
//! Subcommands: `prepare`, `train`, `generate`, `evaluate`, `plot`.
//! Every run is deterministic given its flags and seeds, and every output
//! directory receives a `config.txt` echo of the fully resolved settings.
//!
//! Exit codes: 0 success, 2 input error, 3 training divergence,
//! 4 checkpoint error, 5 evaluation incompatibility.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsgen_core::checkpoint::{load_checkpoint, save_checkpoint};
use tsgen_core::data::{
    denormalize, load_dataset, load_table, make_sines, save_dataset, window, write_f64_file,
    Dataset,
};
use tsgen_core::error::Error as CoreError;
use tsgen_core::eval::evaluate;
use tsgen_core::plots::export_plots;
use tsgen_core::schedule::{generate, StepSampling};
use tsgen_core::train::{train_with, TrainConfig};
use tsgen_core::EvalSettings;

use config::{ConfigFile, Section};

#[derive(Parser)]
#[command(
    name = "tsgen",
    version,
    about = "Population-aware diffusion generation for multivariate time series"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a dataset directory from the builtin sine benchmark or a
    /// delimited numeric table.
    Prepare(PrepareArgs),
    /// Train a diffusion model on a prepared dataset.
    Train(TrainArgs),
    /// Sample synthetic series from a trained checkpoint.
    Generate(GenerateArgs),
    /// Score a synthetic dataset against a real one and export plot data.
    Evaluate(PairArgs),
    /// Export plot data only (histograms, densities, 2-D embeddings).
    Plot(PairArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Key-value config file; flags override its [prepare] section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `sines` or a path to a delimited numeric table.
    #[arg(long)]
    source: Option<String>,
    /// Window length L of each sample.
    #[arg(long)]
    length: Option<usize>,
    /// Step between consecutive windows when slicing a table.
    #[arg(long)]
    stride: Option<usize>,
    /// Sample count for the builtin source.
    #[arg(long)]
    n: Option<usize>,
    /// Feature count for the builtin source.
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Key-value config file; flags override its [train] section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by `prepare`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Weight of the population loss (0 disables it).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Diffusion step count T.
    #[arg(long)]
    steps: Option<usize>,
    /// Training iterations (one optimizer step each).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Backbone hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long = "dit-blocks")]
    dit_blocks: Option<usize>,
    /// Step sampling: `uniform` or `sss` (same-step / shared).
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Progress line to stderr every this many iterations (0 = quiet).
    #[arg(long = "log-every")]
    log_every: Option<usize>,
    /// Output directory (checkpoint, training log, config echo).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Key-value config file; flags override its [generate] section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of samples to draw.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    /// Key-value config file; flags override this subcommand's section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Real dataset directory.
    #[arg(long)]
    real: Option<PathBuf>,
    /// Synthetic dataset directory.
    #[arg(long)]
    syn: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// A terminal failure: exit code plus a message for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Prepare(args) => cmd_prepare(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Generate(args) => cmd_generate(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
        Cmd::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

// ---- config resolution helpers ----

fn load_config_opt(path: &Option<PathBuf>) -> Result<ConfigFile, Failure> {
    match path {
        Some(p) => config::load(p).map_err(|e| fail(2, e)),
        None => Ok(ConfigFile::default()),
    }
}

fn sec_parse<T: std::str::FromStr>(
    sec: Option<&Section>,
    key: &str,
    into: &mut T,
) -> Result<(), Failure>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = sec.and_then(|s| s.get(key)) {
        *into = v
            .parse()
            .map_err(|e| fail(2, format!("config key {key:?}: cannot parse {v:?}: {e}")))?;
    }
    Ok(())
}

fn sec_path(sec: Option<&Section>, key: &str) -> Option<PathBuf> {
    sec.and_then(|s| s.get(key)).map(PathBuf::from)
}

fn write_echo(out: &Path, section: &str, pairs: &[(&str, String)]) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .map_err(|e| fail(2, format!("cannot create output directory {}: {e}", out.display())))?;
    let text = config::render(section, pairs);
    std::fs::write(out.join("config.txt"), text)
        .map_err(|e| fail(2, format!("cannot write config echo: {e}")))
}

fn parse_strategy(v: &str) -> Result<StepSampling, Failure> {
    v.parse::<StepSampling>().map_err(|e| fail(2, e))
}

// ---- prepare ----

fn cmd_prepare(args: PrepareArgs) -> Result<(), Failure> {
    let file = load_config_opt(&args.config)?;
    let sec = file.section("prepare");

    let mut source = "sines".to_string();
    let mut length = 24usize;
    let mut stride = 1usize;
    let mut n = 10_000usize;
    let mut features = 5usize;
    let mut seed = 0u64;
    sec_parse(sec, "source", &mut source)?;
    sec_parse(sec, "length", &mut length)?;
    sec_parse(sec, "stride", &mut stride)?;
    sec_parse(sec, "n", &mut n)?;
    sec_parse(sec, "features", &mut features)?;
    sec_parse(sec, "seed", &mut seed)?;
    if let Some(v) = args.source {
        source = v;
    }
    if let Some(v) = args.length {
        length = v;
    }
    if let Some(v) = args.stride {
        stride = v;
    }
    if let Some(v) = args.n {
        n = v;
    }
    if let Some(v) = args.features {
        features = v;
    }
    if let Some(v) = args.seed {
        seed = v;
    }
    if length < 1 || stride < 1 || n < 1 || features < 1 {
        return Err(fail(2, "length, stride, n, and features must all be >= 1"));
    }

    let ds = if source == "sines" {
        make_sines(n, length, features, seed)
    } else {
        let path = PathBuf::from(&source);
        if !path.exists() {
            return Err(fail(2, format!("input table not found: {}", path.display())));
        }
        let table = load_table(&path, ',')
            .map_err(|e| fail(2, format!("{}: {e}", path.display())))?;
        window(&table, length, stride).map_err(|e| fail(2, e.to_string()))?
    };

    save_dataset(&args.out, &ds, Some(seed), Some(source.clone()))
        .map_err(|e| fail(2, format!("cannot write dataset: {e}")))?;
    write_echo(
        &args.out,
        "prepare",
        &[
            ("source", source),
            ("length", length.to_string()),
            ("stride", stride.to_string()),
            ("n", n.to_string()),
            ("features", features.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    eprintln!(
        "prepared {} samples of shape [{}, {}] in {}",
        ds.n(),
        ds.length(),
        ds.features(),
        args.out.display()
    );
    Ok(())
}

// ---- train ----

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let file = load_config_opt(&args.config)?;
    let sec = file.section("train");

    let data = args
        .data
        .or_else(|| sec_path(sec, "data"))
        .ok_or_else(|| fail(2, "train needs a dataset: pass --data or set `data` in [train]"))?;
    let dataset = load_dataset(&data)
        .map_err(|e| fail(2, format!("cannot load dataset {}: {e}", data.display())))?;

    let mut tc = TrainConfig::defaults_for(dataset.length(), dataset.features());
    let mut log_every = 100usize;
    sec_parse(sec, "epochs", &mut tc.epochs)?;
    sec_parse(sec, "batch", &mut tc.batch)?;
    sec_parse(sec, "learning_rate", &mut tc.learning_rate)?;
    sec_parse(sec, "weight_decay", &mut tc.weight_decay)?;
    sec_parse(sec, "alpha", &mut tc.alpha)?;
    sec_parse(sec, "steps", &mut tc.t_count)?;
    sec_parse(sec, "hidden", &mut tc.backbone.hidden)?;
    sec_parse(sec, "heads", &mut tc.backbone.heads)?;
    sec_parse(sec, "encoder_blocks", &mut tc.backbone.encoder_blocks)?;
    sec_parse(sec, "dit_blocks", &mut tc.backbone.dit_blocks)?;
    sec_parse(sec, "seed", &mut tc.seed)?;
    sec_parse(sec, "checkpoint_every", &mut tc.checkpoint_every)?;
    sec_parse(sec, "log_every", &mut log_every)?;
    if let Some(v) = sec.and_then(|s| s.get("strategy")) {
        tc.strategy = parse_strategy(v)?;
    }
    if let Some(v) = args.epochs {
        tc.epochs = v;
    }
    if let Some(v) = args.batch {
        tc.batch = v;
    }
    if let Some(v) = args.alpha {
        tc.alpha = v;
    }
    if let Some(v) = args.steps {
        tc.t_count = v;
    }
    if let Some(v) = args.hidden {
        tc.backbone.hidden = v;
    }
    if let Some(v) = args.dit_blocks {
        tc.backbone.dit_blocks = v;
    }
    if let Some(v) = &args.strategy {
        tc.strategy = parse_strategy(v)?;
    }
    if let Some(v) = args.seed {
        tc.seed = v;
    }
    if let Some(v) = args.log_every {
        log_every = v;
    }

    tc.validate(&dataset).map_err(|e| fail(2, e.to_string()))?;
    write_echo(
        &args.out,
        "train",
        &[
            ("data", data.display().to_string()),
            ("epochs", tc.epochs.to_string()),
            ("batch", tc.batch.to_string()),
            ("learning_rate", tc.learning_rate.to_string()),
            ("weight_decay", tc.weight_decay.to_string()),
            ("alpha", tc.alpha.to_string()),
            ("steps", tc.t_count.to_string()),
            ("hidden", tc.backbone.hidden.to_string()),
            ("heads", tc.backbone.heads.to_string()),
            ("encoder_blocks", tc.backbone.encoder_blocks.to_string()),
            ("dit_blocks", tc.backbone.dit_blocks.to_string()),
            ("strategy", tc.strategy.to_string()),
            ("seed", tc.seed.to_string()),
            ("checkpoint_every", tc.checkpoint_every.to_string()),
            ("log_every", log_every.to_string()),
        ],
    )?;

    let ckpt_dir = args.out.join("checkpoint");
    let total = tc.epochs;
    let every = tc.checkpoint_every;
    let outcome = train_with(&dataset, &tc, |epoch, state, log| {
        if log_every > 0 && (epoch % log_every == 0 || epoch == total) {
            let r = log.records.last().expect("record exists after an epoch");
            eprintln!(
                "epoch {epoch}/{total}: l0 {:.6e} l_pop {:.6e} total {:.6e}",
                r.l0, r.l_pop, r.l_total
            );
        }
        if every > 0 && epoch % every == 0 {
            save_checkpoint(&ckpt_dir, state, &dataset.scaler, &tc)?;
        }
        Ok(())
    });
    let (state, log) = outcome.map_err(|e| match e {
        CoreError::Diverged { .. } => fail(3, e.to_string()),
        other => fail(2, other.to_string()),
    })?;

    save_checkpoint(&ckpt_dir, &state, &dataset.scaler, &tc)
        .map_err(|e| fail(2, format!("cannot write checkpoint: {e}")))?;
    log.save(&args.out.join("train_log.csv"))
        .map_err(|e| fail(2, format!("cannot write training log: {e}")))?;
    eprintln!("saved checkpoint to {}", ckpt_dir.display());
    Ok(())
}

// ---- generate ----

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let file = load_config_opt(&args.config)?;
    let sec = file.section("generate");

    let checkpoint = args
        .checkpoint
        .or_else(|| sec_path(sec, "checkpoint"))
        .ok_or_else(|| {
            fail(2, "generate needs a checkpoint: pass --checkpoint or set it in [generate]")
        })?;
    let mut n = 1000usize;
    let mut seed = 0u64;
    sec_parse(sec, "n", &mut n)?;
    sec_parse(sec, "seed", &mut seed)?;
    if let Some(v) = args.n {
        n = v;
    }
    if let Some(v) = args.seed {
        seed = v;
    }
    if n < 1 {
        return Err(fail(2, "n must be >= 1"));
    }

    let ck = load_checkpoint(&checkpoint).map_err(|e| fail(4, e.to_string()))?;
    let sched = ck.schedule.build(ck.state.t_count);
    // generation draws from its own stream so it never replays training
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let samples =
        generate(&ck.state, n, &sched, &mut rng).map_err(|e| fail(2, e.to_string()))?;
    let ds = Dataset { samples, scaler: ck.scaler.clone() };

    save_dataset(&args.out, &ds, Some(seed), Some("generate".into()))
        .map_err(|e| fail(2, format!("cannot write dataset: {e}")))?;
    let denorm = denormalize(&ds.samples, &ck.scaler).map_err(|e| fail(2, e.to_string()))?;
    write_f64_file(
        &args.out.join("samples_denorm.bin"),
        denorm.as_slice().expect("standard layout"),
    )
    .map_err(|e| fail(2, format!("cannot write denormalized samples: {e}")))?;
    write_echo(
        &args.out,
        "generate",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("n", n.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    eprintln!("generated {n} samples in {}", args.out.display());
    Ok(())
}

// ---- evaluate & plot ----

struct ResolvedPair {
    real: Dataset,
    syn: Dataset,
    seed: u64,
    echo: Vec<(&'static str, String)>,
}

fn resolve_pair(args: PairArgs, section: &str) -> Result<(ResolvedPair, PathBuf), Failure> {
    let file = load_config_opt(&args.config)?;
    let sec = file.section(section);
    let real_dir = args
        .real
        .or_else(|| sec_path(sec, "real"))
        .ok_or_else(|| fail(2, format!("{section} needs --real (or `real` in [{section}])")))?;
    let syn_dir = args
        .syn
        .or_else(|| sec_path(sec, "syn"))
        .ok_or_else(|| fail(2, format!("{section} needs --syn (or `syn` in [{section}])")))?;
    let mut seed = 0u64;
    sec_parse(sec, "seed", &mut seed)?;
    if let Some(v) = args.seed {
        seed = v;
    }
    let real = load_dataset(&real_dir)
        .map_err(|e| fail(5, format!("cannot load real dataset {}: {e}", real_dir.display())))?;
    let syn = load_dataset(&syn_dir)
        .map_err(|e| fail(5, format!("cannot load synthetic dataset {}: {e}", syn_dir.display())))?;
    let echo = vec![
        ("real", real_dir.display().to_string()),
        ("syn", syn_dir.display().to_string()),
        ("seed", seed.to_string()),
    ];
    Ok((ResolvedPair { real, syn, seed, echo }, args.out))
}

fn cmd_evaluate(args: PairArgs) -> Result<(), Failure> {
    let (pair, out) = resolve_pair(args, "evaluate")?;
    let settings = EvalSettings { seed: pair.seed, ..EvalSettings::default() };
    let report =
        evaluate(&pair.real, &pair.syn, &settings).map_err(|e| fail(5, e.to_string()))?;
    write_echo(&out, "evaluate", &pair.echo)?;
    report
        .save_text(&out.join("report.txt"))
        .map_err(|e| fail(2, format!("cannot write report: {e}")))?;
    report
        .save_json(&out.join("report.json"))
        .map_err(|e| fail(2, format!("cannot write report: {e}")))?;
    export_plots(&pair.real, &pair.syn, &out.join("plots"), pair.seed)
        .map_err(|e| fail(5, e.to_string()))?;
    for (key, value) in report.key_values() {
        println!("{key} = {value}");
    }
    Ok(())
}

fn cmd_plot(args: PairArgs) -> Result<(), Failure> {
    let (pair, out) = resolve_pair(args, "plot")?;
    write_echo(&out, "plot", &pair.echo)?;
    let files = export_plots(&pair.real, &pair.syn, &out, pair.seed)
        .map_err(|e| fail(5, e.to_string()))?;
    eprintln!("wrote {} plot files to {}", files.len(), out.display());
    Ok(())
}
