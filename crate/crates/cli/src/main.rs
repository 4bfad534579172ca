use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use finray::{CliError, RunConfig, CONFIG_ENV};
use finray_core::design::benchmark_design;

#[derive(Parser)]
#[command(name = "finray", version, about = "Fin-ray gripper design search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run config (TOML).
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    /// Design record (JSON).
    #[arg(long, conflicts_with = "benchmark", required_unless_present = "benchmark")]
    design: Option<PathBuf>,
    /// Use the reference design.
    #[arg(long)]
    benchmark: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the archive search.
    Optimize {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one design on the object set.
    Evaluate {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        config: ConfigArg,
        /// Object set (TOML), overriding the config.
        #[arg(long)]
        objects: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Same as `evaluate --benchmark`.
    Benchmark {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        objects: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write finger meshes as OBJ with a quality report.
    Mesh {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-evaluate an archived elite and check its objective.
    Replay {
        archive: PathBuf,
        i: usize,
        j: usize,
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn load_design(a: &DesignArgs) -> Result<(finray_core::design::GripperDesign, String), CliError> {
    match &a.design {
        Some(p) => Ok((finray::load_design(p)?, p.display().to_string())),
        None => Ok((benchmark_design(), "benchmark".into())),
    }
}

fn evaluate(
    design: &DesignArgs,
    config: &ConfigArg,
    objects: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(config.config.as_deref())?;
    if objects.is_some() {
        cfg.objects = objects;
    }
    let (d, label) = load_design(design)?;
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    finray::evaluate(&d, &label, &cfg, &out).map(|_| ())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize { config, out } => {
            let cfg = RunConfig::resolve(config.config.as_deref())?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let r = finray::optimize(&cfg, &out)?;
            println!(
                "{} evaluations, {} cells filled, benchmark cell ({}, {}), {:.1} s; results in {}",
                r.evaluations,
                r.filled,
                r.benchmark_cell.0,
                r.benchmark_cell.1,
                r.wall_time,
                out.display()
            );
            Ok(())
        }
        Command::Evaluate {
            design,
            config,
            objects,
            out,
        } => evaluate(&design, &config, objects, out),
        Command::Benchmark { config, objects, out } => {
            let design = DesignArgs {
                design: None,
                benchmark: true,
            };
            evaluate(&design, &config, objects, out)
        }
        Command::Mesh { design, config, out } => {
            let cfg = RunConfig::resolve(config.config.as_deref())?;
            let (d, _) = load_design(&design)?;
            finray::mesh(&d, &cfg, &out).map(|_| ())
        }
        Command::Replay { archive, i, j, config } => {
            let cfg = finray::replay_config(&archive, config.config.as_deref())?;
            finray::replay(&archive, i, j, &cfg).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
