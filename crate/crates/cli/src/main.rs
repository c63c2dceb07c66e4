use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fxclass::effects::{EffectKind, Variant};
use fxclass::pipeline::Split;
use fxclass_cli::commands::{self, ExperimentSource};
use fxclass_cli::config::{parse_effects, Settings};
use fxclass_cli::runlog::RunLog;
use fxclass_cli::{CliError, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "fxclass", version, about = "Audio-effect augmentation and instrument-family CNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: number of processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides any config key, e.g. `--set max_epochs=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Applies one effect to one split of a manifest.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        effect: EffectKind,
        #[arg(long)]
        split: Split,
        /// Defaults to A for train and B for valid/test.
        #[arg(long)]
        variant: Option<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Writes log-mel feature files for every row of a manifest.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Trains a model with early stopping on the validation set.
    Train {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        valid_manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluates a checkpoint on a manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Baseline plus one model per effect, evaluated on every test set.
    Experiment {
        /// Generate and use the synthetic toy dataset.
        #[arg(long, conflicts_with = "manifests", required_unless_present = "manifests")]
        toy: bool,
        /// Directory holding manifest.csv or train/valid/test CSVs.
        #[arg(long)]
        manifests: Option<PathBuf>,
        /// Comma-separated effect ids (default: all seven).
        #[arg(long)]
        effects: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Generates the synthetic 11-class dataset.
    Toygen {
        #[arg(long)]
        per_class_train: Option<usize>,
        #[arg(long)]
        per_class_valid: Option<usize>,
        #[arg(long)]
        per_class_test: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of every layer and a scaled-down model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Augment { .. } => "augment",
            Command::Featurize { .. } => "featurize",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Experiment { .. } => "experiment",
            Command::Toygen { .. } => "toygen",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Augment { common, .. }
            | Command::Featurize { common, .. }
            | Command::Train { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Experiment { common, .. }
            | Command::Toygen { common, .. }
            | Command::Gradcheck { common } => common,
        }
    }
}

fn settings_for(cmd: &Command) -> Result<Settings, CliError> {
    let common = cmd.common();
    let mut s = Settings::load(common.config.as_deref())?;
    for pair in &common.overrides {
        s.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        s.set("seed", &seed.to_string())?;
    }
    match cmd {
        Command::Toygen {
            per_class_train,
            per_class_valid,
            per_class_test,
            ..
        } => {
            for (key, v) in [
                ("per_class_train", per_class_train),
                ("per_class_valid", per_class_valid),
                ("per_class_test", per_class_test),
            ] {
                if let Some(v) = v {
                    s.set(key, &v.to_string())?;
                }
            }
        }
        Command::Experiment { effects: Some(list), .. } => s.set("effects", list)?,
        _ => {}
    }
    Ok(s)
}

fn require_out(common: &Common) -> Result<&Path, CliError> {
    common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out DIR is required".into()))
}

fn dispatch(cmd: &Command, settings: &Settings) -> Result<Value, CliError> {
    let seed: u64 = settings.get("seed")?;
    let common = cmd.common();
    match cmd {
        Command::Gradcheck { .. } => commands::gradcheck_command(seed, common.out.as_deref()),
        Command::Toygen { .. } => commands::toygen_command(&settings.toy_spec()?, require_out(common)?),
        Command::Augment {
            manifest,
            effect,
            split,
            variant,
            ..
        } => commands::augment_command(manifest, *effect, *split, *variant, seed, require_out(common)?),
        Command::Featurize { manifest, .. } => commands::featurize_command(manifest, require_out(common)?),
        Command::Train {
            train_manifest,
            valid_manifest,
            ..
        } => commands::train_command(train_manifest, valid_manifest, settings, require_out(common)?),
        Command::Evaluate {
            checkpoint, manifest, ..
        } => commands::evaluate_command(checkpoint, manifest, require_out(common)?),
        Command::Experiment { toy, manifests, .. } => {
            let source = match (toy, manifests) {
                (true, _) => ExperimentSource::Toy,
                (false, Some(dir)) => ExperimentSource::Manifests(dir.clone()),
                (false, None) => return Err(CliError::Usage("pass --toy or --manifests DIR".into())),
            };
            let effects = parse_effects(&settings.values()["effects"])?;
            commands::experiment_command(&source, &effects, settings, require_out(common)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let cmd = &cli.command;
    let settings = match settings_for(cmd) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(jobs) = cmd.common().jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("warning: cannot size thread pool: {e}");
        }
    }

    let start = Instant::now();
    let result = dispatch(cmd, &settings);
    let mut log = RunLog::new(cmd.name(), std::env::args().skip(1).collect(), &settings);
    log.finish(start.elapsed(), &result);
    if let Some(out) = &cmd.common().out {
        if let Err(e) = log.write(out) {
            eprintln!("warning: cannot write run log: {e}");
        }
    }
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
