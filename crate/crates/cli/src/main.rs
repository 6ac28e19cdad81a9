use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jetamp::dynamics::RobotModel;
use jetamp_cli::ablate::{self, AblateArgs};
use jetamp_cli::commands::{self, EvalArgs, FitJetArgs, GenPriorsArgs, TrainArgs};
use jetamp_cli::{plot, CliError};

/// Walk-and-fly locomotion with adversarial motion priors.
///
/// Relative output paths resolve against $JETAMP_OUTPUT_ROOT (default: the
/// working directory). Exit codes: 0 success, 2 configuration error,
/// 3 runtime failure.
#[derive(Parser)]
#[command(name = "jetamp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate walk and flight motion-prior datasets.
    GenPriors {
        #[command(flatten)]
        args: GenPriorsArgs,
        /// Robot description (TOML); the built-in robot when omitted.
        #[arg(long)]
        robot_model: Option<PathBuf>,
    },
    /// Identify jet actuator parameters from throttle logs.
    FitJet(FitJetArgs),
    /// Train a policy from a run configuration.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Train and compare prior-dataset variants.
    Ablate(AblateArgs),
    /// Render metrics and trajectory files as SVG line plots.
    Plot {
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenPriors { args, robot_model } => {
            let model = match robot_model {
                Some(p) => RobotModel::load(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
                None => RobotModel::default(),
            };
            let m = commands::gen_priors(&args, &model)?;
            for (name, d) in [("walk", &m.walk), ("fly", &m.fly)] {
                match &d.file {
                    Some(f) => println!("{name}: {} clips, {} frames, {} pairs -> {f}", d.clips, d.frames, d.pairs),
                    None => println!("{name}: absent"),
                }
                if d.frames > 0 {
                    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
                    println!("  feature mean: {}", fmt(&d.feature_mean));
                    println!("  feature std:  {}", fmt(&d.feature_std));
                }
            }
        }
        Command::FitJet(args) => {
            let (_, r) = commands::fit_jet(&args)?;
            println!(
                "mae_n = {:.4}  rmse_n = {:.4}  ({} validation samples; fit mae {:.4}, rmse {:.4})",
                r.mae_n, r.rmse_n, r.samples, r.fit_mae_n, r.fit_rmse_n
            );
        }
        Command::Train(args) => {
            let out = commands::train(&args)?;
            if let Some(last) = out.rows.last() {
                println!(
                    "{} iterations, {} env steps, last task reward {:.4}, episode length {:.1}",
                    out.rows.len(),
                    last.env_steps,
                    last.mean_task_reward,
                    last.episode_length
                );
            }
            println!("outputs in {}", out.output_dir.display());
        }
        Command::Eval(args) => {
            let r = commands::eval(&args)?;
            println!(
                "episodes {}  task reward {:.3}  duration fraction {:.3}  thrust usage {:.3}  waypoints {:.2} (max {})  base height {:.3}",
                r.episodes.len(),
                r.mean_task_reward,
                r.duration_fraction,
                r.thrust_usage,
                r.waypoints_hit,
                r.max_waypoints_hit,
                r.mean_base_height
            );
        }
        Command::Ablate(args) => {
            let report = ablate::ablate(&args)?;
            print!("{}", report.to_table());
            let failed = report.failed();
            if !failed.is_empty() {
                for r in report.rows.iter().filter(|r| r.error.is_some()) {
                    eprintln!("variant {} failed: {}", r.variant.name(), r.error.as_deref().unwrap_or(""));
                }
                return Err(CliError::Runtime(format!("{} of {} variants failed", failed.len(), report.rows.len())));
            }
        }
        Command::Plot { metrics, trajectory, out } => {
            let out = jetamp_cli::config::under_root(&out);
            for p in plot::plot_files(metrics.as_deref(), trajectory.as_deref(), &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
