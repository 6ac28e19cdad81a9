//! Prior-dataset ablations: the same run trained with no priors, walk
//! priors only, flight priors only, or both, and evaluated on shared seeds.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::commands::{evaluate, train_resolved};
use crate::config::{under_root, PriorPaths, RunConfig};
use crate::{runtime, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Variant {
    None,
    WalkOnly,
    FlyOnly,
    Both,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::None, Variant::WalkOnly, Variant::FlyOnly, Variant::Both];

    pub fn name(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::WalkOnly => "walk_only",
            Variant::FlyOnly => "fly_only",
            Variant::Both => "both",
        }
    }

    /// The prior paths this variant keeps from the full set.
    pub fn priors(self, full: &PriorPaths) -> PriorPaths {
        let (walk, fly) = match self {
            Variant::None => (false, false),
            Variant::WalkOnly => (true, false),
            Variant::FlyOnly => (false, true),
            Variant::Both => (true, true),
        };
        PriorPaths { walk: full.walk.clone().filter(|_| walk), fly: full.fly.clone().filter(|_| fly) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub variants: Vec<Variant>,
    /// Training seeds; every variant trains once per seed.
    pub seeds: Vec<u64>,
    pub episodes: usize,
    /// First evaluation episode seed, shared by all variants.
    pub eval_seed: u64,
}

impl AblationPlan {
    pub fn validate(&self, base: &RunConfig) -> Result<(), CliError> {
        if self.variants.is_empty() || self.seeds.is_empty() || self.episodes == 0 {
            return Err(CliError::Config("ablation needs at least one variant, one seed and one episode".into()));
        }
        for v in &self.variants {
            let p = v.priors(&base.priors);
            let missing = match v {
                Variant::None => None,
                Variant::WalkOnly => p.walk.is_none().then_some("priors.walk"),
                Variant::FlyOnly => p.fly.is_none().then_some("priors.fly"),
                Variant::Both => (p.walk.is_none() || p.fly.is_none()).then_some("priors.walk and priors.fly"),
            };
            if let Some(field) = missing {
                return Err(CliError::Config(format!("variant {} requires {field}", v.name())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub mean_task_reward: f64,
    pub duration_fraction: f64,
    pub thrust_usage: f64,
    pub waypoints_hit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    /// Mean undiscounted task reward per evaluation episode, over seeds.
    pub mean_task_reward: f64,
    /// `mean_task_reward / r_bar` with `r_bar` the best variant's value.
    pub reward_fraction: f64,
    pub duration_fraction: f64,
    /// `1 - T / T_max` averaged over evaluation steps.
    pub thrust_usage: f64,
    pub seeds: Vec<SeedResult>,
    /// Set when training or evaluation failed; metric fields are then NaN.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub plan: AblationPlan,
    /// Best mean task reward across successful variants.
    pub r_bar: f64,
    pub rows: Vec<VariantRow>,
}

impl AblationReport {
    pub fn failed(&self) -> Vec<Variant> {
        self.rows.iter().filter(|r| r.error.is_some()).map(|r| r.variant).collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("variant\tduration_fraction\treward_fraction\tthrust_usage\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\n",
                r.variant.name(),
                r.duration_fraction,
                r.reward_fraction,
                r.thrust_usage
            ));
        }
        out
    }
}

/// The configuration one variant trains with: the base configuration with
/// only the prior datasets, seed and output directory changed.
pub fn variant_config(base: &RunConfig, variant: Variant, seed: u64, out: &Path) -> RunConfig {
    RunConfig {
        priors: variant.priors(&base.priors),
        seed,
        output_dir: out.join(variant.name()).join(format!("seed_{seed}")),
        ..base.clone()
    }
}

fn run_variant(base: &RunConfig, plan: &AblationPlan, variant: Variant, out: &Path) -> Result<Vec<SeedResult>, CliError> {
    let mut results = Vec::new();
    for &seed in &plan.seeds {
        let cfg = variant_config(base, variant, seed, out).resolve_with(false)?;
        let trained = train_resolved(&cfg)?;
        let report = evaluate(&trained.checkpoint, &cfg, plan.episodes, true, plan.eval_seed, None)?;
        std::fs::write(trained.output_dir.join("eval.json"), serde_json::to_string_pretty(&report).map_err(runtime)?)?;
        results.push(SeedResult {
            seed,
            mean_task_reward: report.mean_task_reward,
            duration_fraction: report.duration_fraction,
            thrust_usage: report.thrust_usage,
            waypoints_hit: report.waypoints_hit,
        });
    }
    Ok(results)
}

/// Train and evaluate every variant. A failing variant is recorded in its
/// row and does not stop the others.
pub fn run(base: &RunConfig, plan: &AblationPlan, out: &Path) -> Result<AblationReport, CliError> {
    plan.validate(base)?;
    let mut rows = Vec::new();
    for &variant in &plan.variants {
        let row = match run_variant(base, plan, variant, out) {
            Ok(seeds) => {
                let n = seeds.len() as f64;
                let mean = |f: fn(&SeedResult) -> f64| seeds.iter().map(f).sum::<f64>() / n;
                VariantRow {
                    variant,
                    mean_task_reward: mean(|s| s.mean_task_reward),
                    reward_fraction: f64::NAN,
                    duration_fraction: mean(|s| s.duration_fraction),
                    thrust_usage: mean(|s| s.thrust_usage),
                    seeds,
                    error: None,
                }
            }
            Err(e) => VariantRow {
                variant,
                mean_task_reward: f64::NAN,
                reward_fraction: f64::NAN,
                duration_fraction: f64::NAN,
                thrust_usage: f64::NAN,
                seeds: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let r_bar = rows.iter().filter(|r| r.error.is_none()).map(|r| r.mean_task_reward).fold(f64::NEG_INFINITY, f64::max);
    for r in rows.iter_mut().filter(|r| r.error.is_none()) {
        r.reward_fraction = reward_fraction(r.mean_task_reward, r_bar);
    }
    let report = AblationReport { plan: plan.clone(), r_bar, rows };
    std::fs::create_dir_all(out)?;
    // serde_json writes NaN as null
    std::fs::write(out.join("ablation.json"), serde_json::to_string_pretty(&report).map_err(runtime)?)?;
    std::fs::write(out.join("ablation.tsv"), report.to_table())?;
    Ok(report)
}

/// `r / r_bar`; 1 for the best variant. A non-positive best reward gives no
/// meaningful ratio, so every variant then reports the difference from the
/// best shifted to 1 (best = 1, others below).
pub fn reward_fraction(r: f64, r_bar: f64) -> f64 {
    if r_bar > 0.0 {
        r / r_bar
    } else {
        1.0 + (r - r_bar)
    }
}

#[derive(Args, Clone, Debug)]
pub struct AblateArgs {
    /// Base run configuration naming both prior datasets.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = Variant::ALL.to_vec())]
    pub variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub eval_seed: u64,
    #[arg(long, default_value = "ablation")]
    pub out: PathBuf,
}

pub fn ablate(args: &AblateArgs) -> Result<AblationReport, CliError> {
    let base = RunConfig::load(&args.config, &args.overrides)?;
    let plan = AblationPlan { variants: args.variants.clone(), seeds: args.seeds.clone(), episodes: args.episodes, eval_seed: args.eval_seed };
    run(&base, &plan, &under_root(&args.out))
}
