use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sensorspace_cli::commands::{self, Common, ControlTask, DataKind, EvalMode, Which};
use sensorspace_cli::CliError;
use sensorspace_core::control::PathShape;

#[derive(Parser)]
#[command(name = "sensorspace", version, about = "Sensor-space proprioception and control of a soft manipulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            config: a.config,
            out: a.out,
            seed: a.seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Sim,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    Smap,
    S2r,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    Ablation,
    Loads,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the spring calibration quartic.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV with header `inductance,length_mm`; synthetic samples when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Curve file (default: <out>/calibration.json).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a dataset.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Train the sensor-to-pose network or the pose correction.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        which: WhichArg,
    },
    /// Evaluate trained models; exit 2 when a property fails.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "standard")]
        mode: ModeArg,
    },
    /// Drive the manipulator to a pose or along a path.
    Control {
        #[command(flatten)]
        common: CommonArgs,
        /// "x,y,z,yaw,pitch,roll" in mm and degrees.
        #[arg(long, conflicts_with_all = ["path", "shape"])]
        target: Option<String>,
        /// Waypoint CSV with header `x,y,z,yaw,pitch,roll`.
        #[arg(long, conflicts_with = "shape")]
        path: Option<PathBuf>,
        /// Generated path: circle or figure-eight.
        #[arg(long)]
        shape: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate { common, input, output } => {
            let cfg = Common::from(common).resolve()?;
            commands::calibrate(&cfg, input.as_deref(), output.as_deref())?;
        }
        Command::GenData { common, kind } => {
            let cfg = Common::from(common).resolve()?;
            let kind = match kind {
                KindArg::Sim => DataKind::Sim,
                KindArg::Real => DataKind::Real,
            };
            commands::gen_data(&cfg, kind)?;
        }
        Command::Train { common, which } => {
            let cfg = Common::from(common).resolve()?;
            let which = match which {
                WhichArg::Smap => Which::Smap,
                WhichArg::S2r => Which::S2r,
            };
            commands::train(&cfg, which)?;
        }
        Command::Eval { common, mode } => {
            let cfg = Common::from(common).resolve()?;
            let mode = match mode {
                ModeArg::Standard => EvalMode::Standard,
                ModeArg::Ablation => EvalMode::Ablation,
                ModeArg::Loads => EvalMode::Loads,
            };
            commands::eval(&cfg, mode)?;
        }
        Command::Control {
            common,
            target,
            path,
            shape,
        } => {
            let cfg = Common::from(common).resolve()?;
            let task = match (target, path, shape) {
                (Some(t), _, _) => ControlTask::Target(commands::parse_pose(&t)?),
                (_, Some(p), _) => ControlTask::PathFile(p),
                (_, _, Some(s)) => ControlTask::Shape(s.parse::<PathShape>()?),
                _ => return Err(CliError::Config("control needs --target, --path or --shape".into())),
            };
            commands::control(&cfg, &task)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
