use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigver::par::Execution;
use sigver_cli::stages::{self, Context};
use sigver_cli::{CliError, CliResult, RunConfig};

/// Offline signature verification: learned CNN features with per-user SVMs.
#[derive(Parser, Debug)]
#[command(name = "sigver", version)]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Allow writing into a non-empty corpus directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus and its manifest.
    Datagen(DatagenArgs),
    /// Binarize, center, resize and normalize every image.
    Preprocess,
    /// Train the writer-independent feature network.
    TrainWi,
    /// Write feature vectors for every sample.
    Extract,
    /// Choose SVM C and gamma on development users.
    Gridsearch,
    /// Train one SVM per enrolled user.
    TrainWd,
    /// Score test sets and write the report.
    Evaluate,
    /// Run every stage after datagen.
    Pipeline,
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Args, Debug)]
struct DatagenArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    genuine: Option<usize>,
    #[arg(long)]
    simple: Option<usize>,
    #[arg(long)]
    skilled: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Corpus directory; overrides `corpus` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execution(jobs: Option<usize>) -> CliResult<Execution> {
    match jobs {
        Some(0) => Err(CliError::Validation("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without the parallel feature; running sequentially");
            Ok(Execution::Sequential)
        }
        None => Ok(Execution::default()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Gradcheck { seeds } = cli.command {
        let results = stages::gradcheck(seeds)?;
        for r in &results {
            println!("{:<12} seed {:>3}  max rel error {:.3e}", r.layer.name(), r.seed, r.max_rel_error);
        }
        println!("all {} checks passed", results.len());
        return Ok(());
    }

    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Command::Datagen(a) = &cli.command {
        let s = &mut cfg.synth;
        s.users = a.users.unwrap_or(s.users);
        s.genuine = a.genuine.unwrap_or(s.genuine);
        s.simple = a.simple.unwrap_or(s.simple);
        s.skilled = a.skilled.unwrap_or(s.skilled);
        s.height = a.height.unwrap_or(s.height);
        s.width = a.width.unwrap_or(s.width);
        if a.out.is_some() {
            cfg.corpus = a.out.clone();
        }
    }
    let ctx = Context::new(cfg, execution(cli.jobs)?, cli.force)?;

    match cli.command {
        Command::Datagen(_) => {
            stages::datagen(&ctx)?;
        }
        Command::Preprocess => {
            stages::preprocess(&ctx)?;
        }
        Command::TrainWi => {
            stages::train_wi(&ctx)?;
        }
        Command::Extract => {
            stages::extract(&ctx)?;
        }
        Command::Gridsearch => {
            stages::gridsearch(&ctx)?;
        }
        Command::TrainWd => {
            stages::train_wd(&ctx)?;
        }
        Command::Evaluate => print!("{}", stages::evaluate(&ctx)?.summary_table()),
        Command::Pipeline => print!("{}", stages::run_pipeline(&ctx)?.summary_table()),
        Command::Gradcheck { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
