use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reframer::config::{PipelineConfig, RawConfig};
use reframer::{pipeline, Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "reframer",
    version,
    about = "Reframe arguments toward a target connotation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set top_n=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the corpus, rewrite premises and write train/val pairs.
    BuildData {
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune the generator on the pairs written by build-data.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.tsv and val.tsv (defaults to the output directory).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample a task's test set from the corpus.
    BuildTestSet {
        #[command(flatten)]
        common: Common,
        /// partisan or fear.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        sample_size: Option<usize>,
    },
    /// Reframe every test-set argument with the trained generator.
    Reframe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        test_set: Option<PathBuf>,
        /// full, no-entailment or no-demarcator.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Lexical-replacement baseline over the test set.
    Lexrep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        test_set: Option<PathBuf>,
    },
    /// Score system outputs against their inputs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Output JSONL files, one or more per system.
        #[arg(required = true)]
        outputs: Vec<PathBuf>,
    },
}

fn absolute(p: &Path) -> Result<String, Error> {
    let abs = std::path::absolute(p)
        .map_err(|e| Error::Config(format!("bad path {}: {e}", p.display())))?;
    Ok(abs.to_string_lossy().into_owned())
}

fn load_config(common: &Common, extra: &[(&str, Option<String>)]) -> Result<PipelineConfig, Error> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::parse("", ".")?,
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        raw.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        raw.set("seed", &seed.to_string())?;
    }
    if let Some(w) = common.workers {
        raw.set("workers", &w.to_string())?;
    }
    if let Some(out) = &common.out {
        raw.set("out_dir", &absolute(out)?)?;
    }
    for (k, v) in extra {
        if let Some(v) = v {
            raw.set(k, v)?;
        }
    }
    PipelineConfig::from_raw(&raw)
}

fn path_arg(p: &Option<PathBuf>) -> Result<Option<String>, Error> {
    p.as_deref().map(absolute).transpose()
}

fn print_json<T: serde::Serialize>(value: &T) {
    if let Ok(s) = serde_json::to_string(value) {
        println!("{s}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BuildData { common } => {
            let cfg = load_config(&common, &[])?;
            let summary = pipeline::build_data(&cfg)?;
            print_json(&summary);
        }
        Command::Train { common, data } => {
            let cfg = load_config(&common, &[])?;
            let data = data
                .as_deref()
                .map(std::path::absolute)
                .transpose()
                .map_err(|e| Error::Config(e.to_string()))?;
            let ckpt = pipeline::train(&cfg, data.as_deref())?;
            print_json(&ckpt);
        }
        Command::BuildTestSet {
            common,
            task,
            sample_size,
        } => {
            let cfg = load_config(
                &common,
                &[
                    ("task", task),
                    ("sample_size", sample_size.map(|n| n.to_string())),
                ],
            )?;
            let summary = pipeline::build_test_set(&cfg)?;
            print_json(&summary);
        }
        Command::Reframe {
            common,
            test_set,
            variant,
        } => {
            let cfg = load_config(
                &common,
                &[("test_set", path_arg(&test_set)?), ("variant", variant)],
            )?;
            let (path, lines) = pipeline::reframe(&cfg)?;
            println!("wrote {} outputs to {}", lines.len(), path.display());
        }
        Command::Lexrep { common, test_set } => {
            let cfg = load_config(&common, &[("test_set", path_arg(&test_set)?)])?;
            let (path, lines) = pipeline::lexrep(&cfg)?;
            println!("wrote {} outputs to {}", lines.len(), path.display());
        }
        Command::Evaluate { common, outputs } => {
            let cfg = load_config(&common, &[])?;
            let report = pipeline::evaluate(&cfg, &outputs)?;
            print!("{}", reframer::evaluate::render_table(&report.reports));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Backend => 4,
            })
        }
    }
}
