//! Run configuration: a TOML tree with dotted-path overrides, resolved into
//! the library's training configuration.

use std::path::{Path, PathBuf};

use jetamp::amp::AmpConfig;
use jetamp::dynamics::RobotModel;
use jetamp::envtask::EnvConfig;
use jetamp::jetdyn::JetParams;
use jetamp::ppo::{PpoConfig, TrainConfig};
use jetamp::priors::{load_dataset, MotionDataset};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the directory relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "JETAMP_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// `path` if absolute, else joined onto the output root.
pub fn under_root(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        output_root().join(path)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorPaths {
    pub walk: Option<PathBuf>,
    pub fly: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: usize,
    pub parallel: bool,
    pub output_dir: PathBuf,
    pub checkpoint_every: usize,
    /// Optional robot description; replaces `env.model` when set.
    pub robot_model: Option<PathBuf>,
    /// Optional identified jet parameters; replaces `env.jet` when set.
    pub jet_params: Option<PathBuf>,
    pub priors: PriorPaths,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub amp: AmpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 100,
            parallel: false,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: 10,
            robot_model: None,
            jet_params: None,
            priors: PriorPaths::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            amp: AmpConfig::default(),
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Parse `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Apply `a.b.c=value` onto a TOML tree, creating intermediate tables.
pub fn apply_override(tree: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{assignment}` is not of the form key.path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(format!("override `{assignment}` has an empty key")));
    }
    let mut table = tree;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override `{path}`: `{k}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        // parse the file alone first so errors point at its lines
        let base: Self = toml::from_str(text).map_err(|e| config_error(format!("config: {e}")))?;
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut tree: toml::Table = text.parse().map_err(|e| config_error(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        toml::Value::Table(tree)
            .try_into()
            .map_err(|e| config_error(format!("after overrides {overrides:?}: {e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Make input file paths relative to the config file's directory.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.robot_model);
        fix(&mut self.jet_params);
        fix(&mut self.priors.walk);
        fix(&mut self.priors.fly);
    }

    /// Load referenced files into the embedded configuration and check every
    /// field; the result is self-contained.
    pub fn resolve(self) -> Result<Self, CliError> {
        self.resolve_with(true)
    }

    /// As `resolve`; with `require_priors` false a positive style weight
    /// without datasets is accepted and the style term is zero.
    pub fn resolve_with(mut self, require_priors: bool) -> Result<Self, CliError> {
        if let Some(p) = &self.robot_model {
            if !p.exists() {
                return Err(config_error(format!("robot_model: file {} does not exist", p.display())));
            }
            self.env.model = RobotModel::load(p).map_err(|e| config_error(format!("robot_model: {e}")))?;
            self.robot_model = None;
        }
        if let Some(p) = &self.jet_params {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_error(format!("jet_params: cannot read {}: {e}", p.display())))?;
            self.env.jet = toml::from_str::<JetParams>(&text).map_err(|e| config_error(format!("jet_params: {e}")))?;
            self.jet_params = None;
        }
        for (name, slot) in [("priors.walk", &mut self.priors.walk), ("priors.fly", &mut self.priors.fly)] {
            if let Some(p) = slot {
                // absolute, so the resolved snapshot loads from anywhere
                *p = p
                    .canonicalize()
                    .map_err(|_| config_error(format!("{name}: file {} does not exist", p.display())))?;
            }
        }
        if require_priors && self.env.weights.w_s > 0.0 && self.priors.walk.is_none() && self.priors.fly.is_none() {
            return Err(config_error(
                "priors.walk / priors.fly: at least one prior dataset is required when env.weights.w_s > 0",
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(config_error("checkpoint_every must be positive"));
        }
        self.train_config().validate().map_err(config_error)?;
        Ok(self)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            ppo: self.ppo.clone(),
            amp: self.amp.clone(),
            env: self.env.clone(),
            seed: self.seed,
            iterations: self.iterations,
            parallel: self.parallel,
        }
    }

    /// Merge the configured prior datasets (walk first).
    pub fn load_priors(&self) -> Result<Option<MotionDataset>, CliError> {
        let mut out: Option<MotionDataset> = None;
        for p in [&self.priors.walk, &self.priors.fly].into_iter().flatten() {
            let d = load_dataset(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            out = Some(match out {
                Some(acc) => acc.merge(d),
                None => d,
            });
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.ppo.gamma, 0.99);
        assert_eq!(c.ppo.lambda, 0.95);
        assert_eq!(c.ppo.learning_rate, 5e-5);
        assert_eq!(c.ppo.clip, 0.2);
        assert_eq!(c.ppo.entropy_coef, 0.0);
        assert_eq!(c.ppo.value_coef, 5.0);
        assert_eq!(c.ppo.kl_threshold, 0.008);
        let w = &c.env.weights;
        assert_eq!((w.w_c, w.w_v, w.w_f, w.w_t, w.c1, w.c2), (0.1, 0.7, 0.2, 0.11, 0.5, 0.5));
    }

    #[test]
    fn dotted_override() {
        let c = RunConfig::from_toml_str("seed = 3\n", &["ppo.actors=8".into(), "env.schedule=\"air-only\"".into()]).unwrap();
        assert_eq!(c.ppo.actors, 8);
        assert_eq!(c.seed, 3);
        assert_eq!(c.env.schedule, jetamp::envtask::TaskSchedule::AirOnly);
        let c = RunConfig::from_toml_str("", &["env.schedule=alternating".into()]).unwrap();
        assert_eq!(c.env.schedule, jetamp::envtask::TaskSchedule::Alternating);
    }

    #[test]
    fn unknown_field_is_rejected_with_location() {
        let err = RunConfig::from_toml_str("seed = 1\n[ppo]\nactorz = 3\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("actorz"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn missing_priors_named() {
        let err = RunConfig::default().resolve().unwrap_err();
        assert!(err.to_string().contains("priors.walk"));
        let c = RunConfig { priors: PriorPaths { walk: Some("/nonexistent/walk.ampd".into()), fly: None }, ..RunConfig::default() };
        assert!(c.resolve().unwrap_err().to_string().contains("priors.walk"));
    }

    #[test]
    fn round_trip_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }
}
