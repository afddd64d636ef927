//! `semgap` command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on I/O or
//! file-format errors.

mod commands;
mod manifest;
mod table;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    EvalCocoArgs, GridArgs, MatchRunArgs, ProbeEvalArgs, ProbeTrainArgs, ProtoBuildArgs, SynthBlobsArgs,
    SynthSceneArgs, TsneArgs,
};

#[derive(Debug, Parser)]
#[command(
    name = "semgap",
    version,
    about = "Linear probing, prototype matching and COCO evaluation over frozen features"
)]
struct Cli {
    /// Worker threads for parallel stages (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train or evaluate a linear probe on global features.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Build category prototypes from reference images.
    #[command(subcommand)]
    Proto(ProtoCommand),
    /// Match proposals in a target image against prototypes.
    #[command(subcommand, name = "match")]
    Match(MatchCommand),
    /// Write the prompt-point grid for proposal generation.
    Grid(GridArgs),
    /// Score detections against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Embed features in 2-D with exact t-SNE and score class separation.
    Tsne(TsneArgs),
    /// Generate synthetic fixtures.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand)]
enum ProbeCommand {
    Train(ProbeTrainArgs),
    Eval(ProbeEvalArgs),
}

#[derive(Debug, Subcommand)]
enum ProtoCommand {
    Build(ProtoBuildArgs),
}

#[derive(Debug, Subcommand)]
enum MatchCommand {
    Run(MatchRunArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    Coco(EvalCocoArgs),
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    Blobs(SynthBlobsArgs),
    Scene(SynthSceneArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<semgap::Error>() {
            return if e.is_io_or_format() { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let t = cli.threads;
    match cli.command {
        Command::Probe(ProbeCommand::Train(a)) => commands::probe_train(&a, t),
        Command::Probe(ProbeCommand::Eval(a)) => commands::probe_eval(&a, t),
        Command::Proto(ProtoCommand::Build(a)) => commands::proto_build(&a, t),
        Command::Match(MatchCommand::Run(a)) => commands::match_run(&a, t),
        Command::Grid(a) => commands::grid(&a, t),
        Command::Eval(EvalCommand::Coco(a)) => commands::eval_coco(&a, t),
        Command::Tsne(a) => commands::tsne(&a, t),
        Command::Synth(SynthCommand::Blobs(a)) => commands::synth_blobs(&a, t),
        Command::Synth(SynthCommand::Scene(a)) => commands::synth_scene(&a, t),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let benign = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their cause in the message
            if e.downcast_ref::<semgap::Error>().is_some() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
