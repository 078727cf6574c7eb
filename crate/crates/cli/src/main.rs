use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;
use thermoreg::config::RunConfig;
use thermoreg::controller::ControllerKind;
use thermoreg::pipeline::{Pipeline, Stage};

#[derive(Parser)]
#[command(name = "thermoreg", version, about = "Room temperature model, regulator synthesis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// INI run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `run.out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Restrict synth/simulate to one controller.
    #[arg(long, global = true, value_enum)]
    controller: Option<ControllerArg>,

    /// Replace a configuration entry, e.g. `controller.epsilon=0.05`.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the simulation and design meshes.
    Mesh,
    /// Solve the steady flow and export velocity fields.
    Flow,
    /// Synthesize controllers from the exported flow.
    Synth,
    /// Simulate the closed loop for synthesized controllers.
    Simulate,
    /// Summarize all simulations.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    DualFull,
    DualReduced,
    LowGain,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::DualFull => ControllerKind::DualFull,
            ControllerArg::DualReduced => ControllerKind::DualReduced,
            ControllerArg::LowGain => ControllerKind::LowGain,
        }
    }
}

fn run(cli: Cli) -> thermoreg::Result<String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path, &cli.overrides)?,
        None => RunConfig::from_str_with("", &cli.overrides)?,
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let stage = match cli.command {
        Command::Mesh => Stage::Mesh,
        Command::Flow => Stage::Flow,
        Command::Synth => Stage::Synth,
        Command::Simulate => Stage::Simulate,
        Command::Report => Stage::Report,
    };
    Pipeline::new(cfg).run(stage, cli.controller.map(Into::into))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
