//! `lesionkit` command-line front end.

mod commands;
mod config;
mod provenance;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use commands::{Command, Ctx, Outcome};
use lesionkit::experiment::ExperimentConfig;
use provenance::{InputRecord, RunRecord};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lesion(#[from] lesionkit::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Lesion(lesionkit::Error::Config(_)) => "config",
            CliError::Partial(_) => "partial",
            _ => "runtime",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category() {
            "config" => 2,
            "partial" => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "lesionkit", version, about = "Synthetic lesion augmentation for liver CT segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct Common {
    /// JSON config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key after parsing (`a.b=value` or `/a/b=value`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed override for seeded subcommands.
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound on parallel workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Validate and print the resolved plan without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replay the resolved config of an earlier run.json.
    #[arg(long, conflicts_with = "config")]
    from_run: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a phantom slice corpus.
    Phantom(Common),
    /// Extract conditional-map/lesion pairs from a corpus.
    Pairs(Common),
    /// Train the neural lesion synthesizer.
    SynthTrain(Common),
    /// Synthesize lesion patches from stored pairs.
    SynthSample(Common),
    /// Implant synthetic lesions into a corpus.
    Implant(Common),
    /// Train a segmenter.
    SegTrain(Common),
    /// Score a segmenter by per-slice Dice.
    SegEval(Common),
    /// Run the five-arm comparison.
    Experiment(Common),
    /// Re-render a report or the published reference table.
    Report(Common),
}

fn execute<C: Command>(common: &Common) -> Result<(), CliError> {
    let base = match (&common.from_run, &common.config) {
        (Some(run), _) => {
            let record = provenance::read(run)?;
            if record.subcommand != C::NAME {
                return Err(CliError::Config(format!(
                    "{} records a {:?} run, not {:?}",
                    run.display(),
                    record.subcommand,
                    C::NAME
                )));
            }
            Some(record.config)
        }
        (None, Some(path)) => Some(config::read_json(path)?),
        (None, None) => None,
    };
    let mut overrides = Vec::new();
    if let Some(s) = common.seed {
        let key = C::SEED_KEY.ok_or_else(|| CliError::Config(format!("--seed does not apply to {}", C::NAME)))?;
        overrides.push(config::parse_override(&format!("{key}={}", C::seed_value(s)))?);
    }
    for o in &common.set {
        overrides.push(config::parse_override(o)?);
    }
    let (cfg, echo) = config::resolve::<C>(base, &overrides)?;
    cfg.validate()?;
    if common.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let inputs: Vec<_> = cfg.inputs().into_iter().filter_map(|(k, p)| p.map(|p| (k, p.to_path_buf()))).collect();
    for (key, path) in &inputs {
        if !path.exists() {
            return Err(CliError::Config(format!("{key}: {} does not exist", path.display())));
        }
    }
    if common.dry_run {
        let plan = json!({
            "subcommand": C::NAME,
            "config": echo,
            "out": common.out,
            "jobs": common.jobs,
            "inputs": inputs.iter().map(|(k, p)| json!({ "key": k, "path": p })).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
        return Ok(());
    }
    fs::create_dir_all(&common.out).map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    let mut record = RunRecord {
        tool: "lesionkit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: C::NAME.into(),
        config: echo,
        seed: cfg.seed(),
        overrides: common.set.clone(),
        jobs: common.jobs,
        inputs: inputs
            .iter()
            .map(|(_, p)| {
                let sha256 = provenance::hash_path(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Ok(InputRecord { path: p.display().to_string(), sha256 })
            })
            .collect::<Result<_, CliError>>()?,
        status: "started".into(),
        error: None,
    };
    provenance::write(&record, &common.out)?;
    let ctx = Ctx { out: common.out.clone(), jobs: common.jobs };
    let result = cfg.run(&ctx);
    let (status, err) = match &result {
        Ok(Outcome::Ok) => ("ok", None),
        Ok(Outcome::Partial(m)) => ("partial", Some(m.clone())),
        Err(e) => ("failed", Some(e.to_string())),
    };
    record.status = status.into();
    record.error = err;
    provenance::write(&record, &common.out)?;
    match result? {
        Outcome::Ok => Ok(()),
        Outcome::Partial(m) => Err(CliError::Partial(m)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let result = match &cli.command {
        Cmd::Phantom(c) => execute::<commands::PhantomRun>(c),
        Cmd::Pairs(c) => execute::<commands::PairsRun>(c),
        Cmd::SynthTrain(c) => execute::<commands::SynthTrainRun>(c),
        Cmd::SynthSample(c) => execute::<commands::SynthSampleRun>(c),
        Cmd::Implant(c) => execute::<commands::ImplantRun>(c),
        Cmd::SegTrain(c) => execute::<commands::SegTrainRun>(c),
        Cmd::SegEval(c) => execute::<commands::SegEvalRun>(c),
        Cmd::Experiment(c) => execute::<ExperimentConfig>(c),
        Cmd::Report(c) => execute::<commands::ReportRun>(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lesionkit: error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
