//! One function per subcommand. Relative output paths resolve against the
//! output root (see `config::output_root`).

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use jetamp::envtask::{trajectory_row, TRAJECTORY_COLUMNS};
use jetamp::jetdyn::{self, calibrate_default, FitLimits, JetError, JetParams, ThrottleLog};
use jetamp::ppo::{self, Checkpoint, EvalReport, MetricsRow, Trainer};
use jetamp::priors::{default_flight_clips, default_walk_clips, encode_dataset, MotionDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{under_root, RunConfig};
use crate::{runtime, CliError};

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- gen-priors

#[derive(Args, Clone, Debug)]
pub struct GenPriorsArgs {
    /// Number of walk clips (0 omits the walk dataset).
    #[arg(long, default_value_t = 20)]
    pub walk: usize,
    /// Number of flight clips (0 omits the fly dataset).
    #[arg(long, default_value_t = 20)]
    pub fly: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for walk.ampd, fly.ampd and manifest.toml.
    #[arg(long, default_value = "priors")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub file: Option<String>,
    pub clips: usize,
    pub frames: usize,
    pub pairs: usize,
    /// Per-feature mean over all frames.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorManifest {
    pub seed: u64,
    pub walk: DatasetEntry,
    pub fly: DatasetEntry,
    /// Datasets requested with zero clips and therefore not written.
    pub absent: Vec<String>,
}

fn dataset_entry(file: Option<String>, d: &MotionDataset) -> DatasetEntry {
    let frames: Vec<_> = d.frames().collect();
    let n = frames.len().max(1) as f64;
    let dim = jetamp::priors::FEATURE_DIM;
    let mut mean = vec![0.0; dim];
    for f in &frames {
        for (m, v) in mean.iter_mut().zip(f.as_slice()) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; dim];
    for f in &frames {
        for ((s, v), m) in std.iter_mut().zip(f.as_slice()).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    std.iter_mut().for_each(|s| *s = s.sqrt());
    DatasetEntry { file, clips: d.clips.len(), frames: frames.len(), pairs: d.num_pairs(), feature_mean: mean, feature_std: std }
}

pub fn gen_priors(args: &GenPriorsArgs, model: &jetamp::dynamics::RobotModel) -> Result<PriorManifest, CliError> {
    let out = under_root(&args.out);
    // independent streams: the walk set does not depend on the fly count
    let mut walk_rng = ChaCha8Rng::seed_from_u64(args.seed);
    walk_rng.set_stream(1);
    let mut fly_rng = ChaCha8Rng::seed_from_u64(args.seed);
    fly_rng.set_stream(2);
    let walk = MotionDataset::new(default_walk_clips(model, args.walk, &mut walk_rng).map_err(runtime)?);
    let fly = MotionDataset::new(default_flight_clips(model, args.fly, &mut fly_rng).map_err(runtime)?);
    let mut absent = Vec::new();
    let mut entry = |name: &str, d: &MotionDataset| -> Result<DatasetEntry, CliError> {
        if d.clips.is_empty() {
            absent.push(name.to_string());
            return Ok(dataset_entry(None, d));
        }
        let file = format!("{name}.ampd");
        write_file(&out.join(&file), encode_dataset(d))?;
        Ok(dataset_entry(Some(file), d))
    };
    let walk = entry("walk", &walk)?;
    let fly = entry("fly", &fly)?;
    // a stale file from an earlier run must not masquerade as current
    for name in &absent {
        let stale = out.join(format!("{name}.ampd"));
        if stale.exists() {
            std::fs::remove_file(&stale)?;
        }
    }
    let manifest = PriorManifest { seed: args.seed, walk, fly, absent };
    write_file(&out.join("manifest.toml"), toml::to_string(&manifest).expect("manifest serialises"))?;
    Ok(manifest)
}

// ------------------------------------------------------------------- fit-jet

#[derive(Args, Clone, Debug)]
pub struct FitJetArgs {
    /// Glob of three-column (time throttle thrust) log files.
    #[arg(long, conflicts_with = "synthetic")]
    pub logs: Option<String>,
    /// Generate this many synthetic logs from the default engine instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Measurement noise std for synthetic logs (N).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per synthetic log.
    #[arg(long, default_value_t = 3000)]
    pub samples: usize,
    /// Sample period of synthetic logs (s).
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Degree of the steady-state thrust polynomial.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Fraction of logs held out for validation (at least one log is kept for fitting).
    #[arg(long, default_value_t = 0.25)]
    pub holdout: f64,
    #[arg(long, default_value = "jet_params.toml")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetReport {
    /// Validation errors in newtons (fit logs when nothing is held out).
    pub mae_n: f64,
    pub rmse_n: f64,
    pub samples: usize,
    pub fit_mae_n: f64,
    pub fit_rmse_n: f64,
    pub steady_state: Vec<f64>,
    pub time_constant: [f64; 2],
    pub fit_logs: usize,
    pub validation_logs: usize,
}

fn read_logs(pattern: &str) -> Result<Vec<ThrottleLog>, CliError> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Config(format!("--logs: {e}")))?;
    let mut paths: Vec<PathBuf> = paths.collect::<Result<_, _>>().map_err(runtime)?;
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("--logs: no files match `{pattern}`")));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            ThrottleLog::from_text(&text).map_err(|e| runtime(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn fit_jet(args: &FitJetArgs) -> Result<(JetParams, JetReport), CliError> {
    let logs = match (&args.logs, args.synthetic) {
        (Some(pattern), None) => read_logs(pattern)?,
        (None, Some(n)) if n > 0 => {
            if !(args.noise >= 0.0) || !(args.dt > 0.0) {
                return Err(CliError::Config("--noise must be >= 0 and --dt > 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            jetdyn::synthetic_logs(&calibrate_default(), n, args.samples, args.dt, args.noise, &mut rng)
        }
        _ => return Err(CliError::Config("fit-jet needs exactly one of --logs <glob> or --synthetic <N > 0>".into())),
    };
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(CliError::Config("--holdout must lie in [0, 1)".into()));
    }
    let held = ((logs.len() as f64 * args.holdout).floor() as usize).min(logs.len() - 1);
    let (fit_logs, val_logs) = logs.split_at(logs.len() - held);
    let (params, fit_report) = jetdyn::fit(fit_logs, args.order, FitLimits::default()).map_err(|e| match e {
        JetError::RankDeficient => runtime(format!(
            "{e}. Record logs whose throttle sweeps the full range (minimum to full) with steps held long enough to settle"
        )),
        e => runtime(e),
    })?;
    let val = if val_logs.is_empty() { jetdyn::evaluate_fit(&params, fit_logs) } else { jetdyn::evaluate_fit(&params, val_logs) };
    let report = JetReport {
        mae_n: val.mae_n,
        rmse_n: val.rmse_n,
        samples: val.samples,
        fit_mae_n: fit_report.mae_n,
        fit_rmse_n: fit_report.rmse_n,
        steady_state: params.steady_state.clone(),
        time_constant: params.time_constant,
        fit_logs: fit_logs.len(),
        validation_logs: val_logs.len(),
    };
    let out = under_root(&args.out);
    write_file(&out, toml::to_string(&params).expect("params serialise"))?;
    write_file(&report_path(&out), toml::to_string(&report).expect("report serialises"))?;
    Ok((params, report))
}

/// `params.toml` -> `params.report.toml`.
pub fn report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "jet".into());
    out.with_file_name(format!("{stem}.report.toml"))
}

// --------------------------------------------------------------------- train

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-path override, e.g. `ppo.actors=8`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const RESOLVED_FILE: &str = "config.resolved.toml";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub checkpoint: Checkpoint,
}

pub fn train(args: &TrainArgs) -> Result<TrainOutcome, CliError> {
    let cfg = RunConfig::load(&args.config, &args.overrides)?.resolve()?;
    train_resolved(&cfg)
}

/// Train from an already resolved configuration, writing the snapshot,
/// metrics log and checkpoints under its output directory.
pub fn train_resolved(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let dir = under_root(&cfg.output_dir);
    write_file(&dir.join(RESOLVED_FILE), cfg.to_toml())?;
    let priors = cfg.load_priors()?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    let mut trainer = Trainer::new(cfg.train_config(), priors).map_err(runtime)?;
    let mut rows = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let row = trainer.iterate().map_err(|e| runtime(format!("iteration {i}: {e}")))?;
        serde_json::to_writer(&mut metrics, &row).map_err(runtime)?;
        metrics.write_all(b"\n")?;
        metrics.flush()?;
        if (i + 1) % cfg.checkpoint_every == 0 {
            let path = dir.join(format!("checkpoints/iter_{:06}.ckpt", i + 1));
            write_file(&path, trainer.checkpoint().to_bytes())?;
        }
        rows.push(row);
    }
    let checkpoint = trainer.checkpoint();
    checkpoint.save(dir.join(FINAL_CHECKPOINT)).map_err(runtime)?;
    Ok(TrainOutcome { output_dir: dir, rows, checkpoint })
}

// ---------------------------------------------------------------------- eval

#[derive(Args, Clone, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run configuration (typically the run's config.resolved.toml).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    /// First episode seed; episode e uses seed + e.
    #[arg(long, default_value_t = 1_000_000)]
    pub seed: u64,
    /// Sample actions instead of using the policy mean.
    #[arg(long)]
    pub stochastic: bool,
    /// Directory for per-episode trajectory files.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, default_value = "eval.json")]
    pub out: PathBuf,
}

/// Evaluate a checkpoint under a resolved configuration; optionally write
/// one trajectory file per episode into `trajectory_dir`.
pub fn evaluate(
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    episodes: usize,
    deterministic: bool,
    seed: u64,
    trajectory_dir: Option<&Path>,
) -> Result<EvalReport, CliError> {
    if episodes == 0 {
        return Err(CliError::Config("--episodes must be positive".into()));
    }
    let mut traces: Vec<String> = Vec::new();
    let report = ppo::evaluate_with(checkpoint, &cfg.env, episodes, deterministic, seed, |e, t, r, task| {
        if trajectory_dir.is_some() {
            if traces.len() <= e {
                traces.push(format!("# {TRAJECTORY_COLUMNS}\n"));
            }
            traces[e].push_str(&trajectory_row(t, r, task));
            traces[e].push('\n');
        }
    })
    .map_err(|e| match e {
        ppo::PpoError::CheckpointMismatch(m) => CliError::Config(format!("checkpoint does not match config: {m}")),
        e => runtime(e),
    })?;
    if let Some(dir) = trajectory_dir {
        for (e, text) in traces.iter().enumerate() {
            write_file(&dir.join(format!("episode_{e:04}.txt")), text)?;
        }
    }
    Ok(report)
}

pub fn eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let cfg = RunConfig::load(&args.config, &args.overrides)?.resolve_with(false)?;
    let checkpoint = Checkpoint::load(&args.checkpoint).map_err(|e| runtime(format!("{}: {e}", args.checkpoint.display())))?;
    let traj = args.trajectory.as_deref().map(under_root);
    let report = evaluate(&checkpoint, &cfg, args.episodes, !args.stochastic, args.seed, traj.as_deref())?;
    write_file(&under_root(&args.out), serde_json::to_string_pretty(&report).map_err(runtime)?)?;
    Ok(report)
}
