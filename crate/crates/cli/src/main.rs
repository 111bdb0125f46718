//! Command-line front end for the labeling and reconstruction pipeline.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use geoseg::pipeline::{render_sweep_table, Pipeline, PipelineConfig, Stage};
use geoseg::PipelineError;

#[derive(Parser)]
#[command(
    name = "geoseg",
    version,
    about = "Pixelwise labeling of aerial RGBD rasters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file in `key = value` format.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the inference stride.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scene set.
    Synth(RunArgs),
    /// Build composites and sample training patches.
    Preprocess(RunArgs),
    /// Train the network.
    TrainCnn(RunArgs),
    /// Compute fused likelihood maps.
    Infer(RunArgs),
    /// Train the label SVM.
    TrainSvm(RunArgs),
    /// Label and refine the test scenes.
    Refine(RunArgs),
    /// Score the labels against the reference.
    Evaluate(RunArgs),
    /// Export meshes of the refined test scenes.
    Reconstruct(RunArgs),
    /// Run every stage in order.
    RunAll(RunArgs),
    /// Train and score a patch size × kernel size grid.
    Sweep(RunArgs),
    /// Print the default config.
    DefaultConfig,
}

fn pipeline(args: &RunArgs) -> Result<Pipeline, PipelineError> {
    let config = PipelineConfig::from_file(&args.config)?.with_overrides(args.seed, args.stride)?;
    let start = Instant::now();
    Ok(Pipeline::new(config)
        .with_logger(move |msg| eprintln!("{:>8.1}s {msg}", start.elapsed().as_secs_f64())))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (stage, args) = match &cli.command {
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_kv().to_text());
            return Ok(());
        }
        Command::RunAll(args) => {
            let summary = pipeline(args)?.run_all()?;
            print!("{}", summary.to_text());
            return Ok(());
        }
        Command::Sweep(args) => {
            let p = pipeline(args)?;
            let cells = p.sweep()?;
            let s = &p.config().sweep;
            print!(
                "{}",
                render_sweep_table(&cells, &s.patch_sizes, &s.kernel_sizes)
            );
            return Ok(());
        }
        Command::Synth(a) => (Stage::Synth, a),
        Command::Preprocess(a) => (Stage::Preprocess, a),
        Command::TrainCnn(a) => (Stage::TrainCnn, a),
        Command::Infer(a) => (Stage::Infer, a),
        Command::TrainSvm(a) => (Stage::TrainSvm, a),
        Command::Refine(a) => (Stage::Refine, a),
        Command::Evaluate(a) => (Stage::Evaluate, a),
        Command::Reconstruct(a) => (Stage::Reconstruct, a),
    };
    pipeline(args)?.run(stage)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
