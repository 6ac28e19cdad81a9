//! The control-level environment: observation assembly, action mapping,
//! task rewards, the waypoint protocol, termination, and a vectorised
//! stepper with per-environment random streams.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{forward_kinematics, step_dynamics, RobotModel, RobotState, NUM_JETS, NUM_JOINTS};
use crate::jetdyn::{calibrate_default, ideal_update, lag_update, JetParams};
use crate::priors::{stance_pose, FeatureFrame, MotionDataset, TransitionPair, CONTROL_RATE_HZ, FEATURE_DIM};
use crate::terrain::{generate, sample_heightmap, HeightField, TerrainError, TerrainSpec};

pub const ACTION_DIM: usize = NUM_JOINTS + NUM_JETS;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode; reset first")]
    SteppedDoneEnv,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JetMode {
    /// The action is a thrust rate (N/s) per jet.
    Ideal,
    /// The action is an absolute throttle in `[u_min, 1]` fed to the lag model.
    Lag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacingForm {
    /// `min(0, f_x cos φ)`, in `[-1, 0]`.
    Min,
    /// `max(0, f_x cos φ)`, in `[0, 1]`.
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskSchedule {
    GroundOnly,
    AirOnly,
    Alternating,
    /// Air waypoints over pits, ground waypoints elsewhere.
    TerrainDriven,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointKind {
    Ground,
    Air,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w_c: f64,
    pub w_v: f64,
    pub w_f: f64,
    pub w_t: f64,
    pub c1: f64,
    pub c2: f64,
    pub w_g: f64,
    pub w_s: f64,
    pub facing: FacingForm,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w_c: 0.1, w_v: 0.7, w_f: 0.2, w_t: 0.11, c1: 0.5, c2: 0.5, w_g: 0.5, w_s: 0.5, facing: FacingForm::Min }
    }
}

impl RewardWeights {
    /// Weights for the lag-model jets: thrust penalty reduced to 1e-8.
    pub fn jet_mode() -> Self {
        Self { w_t: 1e-8, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let all = [self.w_c, self.w_v, self.w_f, self.w_t, self.w_g, self.w_s];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(EnvError::InvalidConfig("reward weights must be finite and >= 0".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(EnvError::InvalidConfig("c1 and c2 must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskTerms {
    pub r_c: f64,
    pub r_v: f64,
    pub r_f: f64,
    pub r_t: f64,
}

/// `w_c r_c + w_v r_v + w_f r_f + w_T r_T`
pub fn total_task_reward(terms: &TaskTerms, w: &RewardWeights) -> f64 {
    w.w_c * terms.r_c + w.w_v * terms.r_v + w.w_f * terms.r_f + w.w_t * terms.r_t
}

pub fn checkpoint_reward(distance: f64, c1: f64) -> f64 {
    (-c1 * distance * distance).exp()
}

/// `approach_speed` is positive when the distance shrinks.
pub fn velocity_reward(approach_speed: f64, desired: f64, c2: f64) -> f64 {
    let e = desired - approach_speed;
    (-c2 * e * e).exp()
}

pub fn facing_reward(base: [f64; 2], pitch: f64, target: [f64; 2], form: FacingForm) -> f64 {
    let d = [target[0] - base[0], target[1] - base[1]];
    let n = d[0].hypot(d[1]);
    let fx = if n > 0.0 { d[0] / n } else { 0.0 };
    let dot = fx * pitch.cos();
    match form {
        FacingForm::Min => dot.min(0.0),
        FacingForm::Max => dot.max(0.0),
    }
}

pub fn thrust_penalty(thrust: &[f64; NUM_JETS], max_thrust: f64) -> f64 {
    -thrust.iter().map(|t| (t / max_thrust).powi(2)).sum::<f64>()
}

/// Falls are strictly below the threshold; exactly at it is still standing.
pub fn is_fall(clearance: f64, fall_clearance: f64) -> bool {
    clearance < fall_clearance
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// All four task terms for the state reached after one control period `dt`.
pub fn task_rewards(
    state: &RobotState,
    prev_distance: f64,
    task: &WaypointTask,
    weights: &RewardWeights,
    max_thrust: f64,
    dt: f64,
) -> TaskTerms {
    let d = distance(state.position, task.target);
    TaskTerms {
        r_c: checkpoint_reward(d, weights.c1),
        r_v: velocity_reward((prev_distance - d) / dt, task.desired_speed, weights.c2),
        r_f: facing_reward(state.position, state.pitch, task.target, weights.facing),
        r_t: thrust_penalty(&state.thrust, max_thrust),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaypointConfig {
    pub desired_speed: f64,
    pub spawn_min: f64,
    pub spawn_max: f64,
    pub hit_radius: f64,
    /// Base height above terrain for ground waypoints.
    pub ground_height: f64,
    pub air_altitude: [f64; 2],
    /// Terrain this far below the spawn platform counts as a pit.
    pub pit_threshold: f64,
}

impl Default for WaypointConfig {
    fn default() -> Self {
        Self {
            desired_speed: 0.8,
            spawn_min: 0.7,
            spawn_max: 2.0,
            hit_radius: 0.3,
            ground_height: 0.6,
            air_altitude: [2.0, 4.0],
            pit_threshold: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointTask {
    pub target: [f64; 2],
    pub kind: WaypointKind,
    pub desired_speed: f64,
    pub hit_radius: f64,
}

/// Kind of the `index`-th waypoint (0-based) placed at horizontal `x`.
pub fn waypoint_kind(schedule: TaskSchedule, index: usize, terrain: &HeightField, x: f64, pit_threshold: f64) -> WaypointKind {
    match schedule {
        TaskSchedule::GroundOnly => WaypointKind::Ground,
        TaskSchedule::AirOnly => WaypointKind::Air,
        TaskSchedule::Alternating => {
            if index % 2 == 0 {
                WaypointKind::Ground
            } else {
                WaypointKind::Air
            }
        }
        TaskSchedule::TerrainDriven => {
            if terrain.height_at(x) < terrain.height_at(0.0) - pit_threshold {
                WaypointKind::Air
            } else {
                WaypointKind::Ground
            }
        }
    }
}

/// Next waypoint: `U(spawn_min, spawn_max)` forward of `from_x`, height set
/// by its kind.
pub fn spawn_waypoint(
    cfg: &WaypointConfig,
    schedule: TaskSchedule,
    index: usize,
    from_x: f64,
    terrain: &HeightField,
    rng: &mut impl Rng,
) -> WaypointTask {
    let x = from_x + rng.random_range(cfg.spawn_min..cfg.spawn_max);
    let kind = waypoint_kind(schedule, index, terrain, x, cfg.pit_threshold);
    let z = match kind {
        WaypointKind::Ground => terrain.height_at(x) + cfg.ground_height,
        WaypointKind::Air => terrain.height_at(x) + rng.random_range(cfg.air_altitude[0]..cfg.air_altitude[1]),
    };
    WaypointTask { target: [x, z], kind, desired_speed: cfg.desired_speed, hit_radius: cfg.hit_radius }
}

/// `[χ (19) | height map (L) | base-frame target offset (2)]`
pub fn assemble_observation(
    model: &RobotModel,
    state: &RobotState,
    terrain: &HeightField,
    task: &WaypointTask,
    cells: usize,
    cell_width: f64,
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(FEATURE_DIM + cells + 2);
    obs.extend_from_slice(FeatureFrame::from_state(model, state).as_slice());
    obs.extend(sample_heightmap(terrain, state.position[0], state.position[1], cells, cell_width));
    let offset = [task.target[0] - state.position[0], task.target[1] - state.position[1]];
    obs.extend_from_slice(&state.to_body(offset));
    obs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub model: RobotModel,
    pub terrain: TerrainSpec,
    pub schedule: TaskSchedule,
    pub weights: RewardWeights,
    pub waypoints: WaypointConfig,
    pub jet_mode: JetMode,
    pub jet: JetParams,
    /// Thrust rate bound in ideal mode (N/s).
    pub thrust_rate_limit: f64,
    pub heightmap_cells: usize,
    pub cell_width: f64,
    pub max_steps: usize,
    pub substeps: usize,
    pub fall_clearance: f64,
    /// Probability of starting from a random prior frame.
    pub p_rsi: f64,
    /// Joint target offset (rad) per unit of normalised action.
    pub joint_action_scale: f64,
    pub stance_height: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            model: RobotModel::default(),
            terrain: TerrainSpec::flat(),
            schedule: TaskSchedule::GroundOnly,
            weights: RewardWeights::default(),
            waypoints: WaypointConfig::default(),
            jet_mode: JetMode::Ideal,
            jet: calibrate_default(),
            thrust_rate_limit: 250.0,
            heightmap_cells: 9,
            cell_width: 0.3,
            max_steps: 600,
            substeps: 4,
            fall_clearance: 0.4,
            p_rsi: 0.5,
            joint_action_scale: 1.0,
            stance_height: 0.6,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        self.model.validate().map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        self.terrain.validate()?;
        self.weights.validate()?;
        self.jet.validate().map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        let w = &self.waypoints;
        if !(w.spawn_min > 0.0 && w.spawn_min < w.spawn_max) {
            return bad("waypoints.spawn_min must satisfy 0 < spawn_min < spawn_max");
        }
        if !(w.hit_radius > 0.0) {
            return bad("waypoints.hit_radius must be > 0");
        }
        if !(w.air_altitude[0] > 0.0 && w.air_altitude[0] < w.air_altitude[1]) {
            return bad("waypoints.air_altitude must be an ordered positive range");
        }
        if self.heightmap_cells == 0 || !(self.cell_width > 0.0) {
            return bad("heightmap_cells and cell_width must be positive");
        }
        if self.max_steps == 0 || self.substeps == 0 {
            return bad("max_steps and substeps must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_rsi) {
            return bad("p_rsi must lie in [0, 1]");
        }
        if !(self.thrust_rate_limit > 0.0) || !(self.joint_action_scale > 0.0) {
            return bad("thrust_rate_limit and joint_action_scale must be > 0");
        }
        stance_pose(&self.model, self.stance_height).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        FEATURE_DIM + self.heightmap_cells + 2
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / CONTROL_RATE_HZ
    }

    /// Map a normalised action in `[-1, 1]^6` to joint targets and thrust
    /// commands (rate in N/s for ideal jets, throttle for lag jets).
    pub fn physical_action(&self, stance: &[f64; NUM_JOINTS], a: &[f64]) -> [f64; ACTION_DIM] {
        let mut out = [0.0; ACTION_DIM];
        let mut q = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            q[j] = stance[j] + self.joint_action_scale * a[j].clamp(-1.0, 1.0);
        }
        self.model.clamp_joints(&mut q);
        out[..NUM_JOINTS].copy_from_slice(&q);
        for k in 0..NUM_JETS {
            let v = a[NUM_JOINTS + k].clamp(-1.0, 1.0);
            out[NUM_JOINTS + k] = match self.jet_mode {
                JetMode::Ideal => self.thrust_rate_limit * v,
                JetMode::Lag => {
                    let lo = self.jet.min_throttle;
                    0.5 * (1.0 + lo) + 0.5 * (1.0 - lo) * v
                }
            };
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    None,
    Fell,
    Timeout,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: TaskTerms,
    pub task: f64,
    pub style: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub waypoints_hit: usize,
    pub hit_this_step: bool,
    /// `1 - mean(T / T_max)` at this step.
    pub thrust_usage: f64,
    pub base_height: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Observation to act on next (a reset observation after auto-reset).
    pub observation: Vec<f64>,
    /// Post-step observation of the finished episode, for bootstrapping.
    pub terminal_observation: Option<Vec<f64>>,
    pub rewards: RewardBreakdown,
    pub done: bool,
    pub reason: Termination,
    pub info: StepInfo,
    /// Pre- and post-step discriminator features.
    pub transition: TransitionPair,
    pub state: RobotState,
}

impl StepResult {
    /// Attach the style reward and recompute the mixed total.
    pub fn set_style(&mut self, style: f64, weights: &RewardWeights) {
        self.rewards.style = style;
        self.rewards.total = weights.w_g * self.rewards.task + weights.w_s * style;
    }
}

#[derive(Clone, Debug)]
pub struct Env {
    config: Arc<EnvConfig>,
    priors: Option<Arc<MotionDataset>>,
    stance: [f64; NUM_JOINTS],
    terrain: HeightField,
    state: RobotState,
    task: WaypointTask,
    prev_distance: f64,
    hits: usize,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl Env {
    pub fn new(config: Arc<EnvConfig>, priors: Option<Arc<MotionDataset>>, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let stance = stance_pose(&config.model, config.stance_height).expect("validated");
        let terrain = generate(&config.terrain)?;
        let task = WaypointTask { target: [0.0; 2], kind: WaypointKind::Ground, desired_speed: 0.0, hit_radius: 1.0 };
        let mut env = Self {
            config,
            priors,
            stance,
            terrain,
            state: RobotState::default(),
            task,
            prev_distance: 0.0,
            hits: 0,
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn task(&self) -> &WaypointTask {
        &self.task
    }

    pub fn terrain(&self) -> &HeightField {
        &self.terrain
    }

    pub fn waypoints_hit(&self) -> usize {
        self.hits
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn stance(&self) -> &[f64; NUM_JOINTS] {
        &self.stance
    }

    pub fn observation(&self) -> Vec<f64> {
        let c = &self.config;
        assemble_observation(&c.model, &self.state, &self.terrain, &self.task, c.heightmap_cells, c.cell_width)
    }

    pub fn features(&self) -> FeatureFrame {
        FeatureFrame::from_state(&self.config.model, &self.state)
    }

    /// Clearance of the base above the terrain directly below it.
    pub fn clearance(&self) -> f64 {
        self.state.position[1] - self.terrain.height_at(self.state.position[0])
    }

    /// Start a new episode; deterministic in `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.config.clone();
        if !matches!(c.terrain.kind, crate::terrain::TerrainKind::Flat) {
            self.terrain = generate(&c.terrain.reseeded(c.terrain.seed ^ seed))?;
        }
        let ground = self.terrain.height_at(0.0);
        let use_prior = c.p_rsi > 0.0 && self.rng.random::<f64>() < c.p_rsi;
        self.state = match (&self.priors, use_prior) {
            (Some(p), true) if p.clips.iter().any(|cl| !cl.frames.is_empty()) => {
                let frames: Vec<&FeatureFrame> = p.frames().collect();
                let frame = frames[self.rng.random_range(0..frames.len())];
                state_from_frame(&c.model, frame, &self.terrain, 0.0)
            }
            _ => RobotState {
                position: [0.0, ground + c.stance_height],
                joints: self.stance,
                ..RobotState::default()
            },
        };
        self.hits = 0;
        self.steps = 0;
        self.done = false;
        self.task = spawn_waypoint(&c.waypoints, c.schedule, 0, self.state.position[0], &self.terrain, &mut self.rng);
        self.prev_distance = distance(self.state.position, self.task.target);
        Ok(self.observation())
    }

    /// Advance one control period with a physical action
    /// `[joint targets (4) | thrust command (2)]`. The style reward is left
    /// at zero; attach it with `StepResult::set_style`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::SteppedDoneEnv);
        }
        if action.len() != ACTION_DIM {
            return Err(EnvError::ShapeMismatch { expected: ACTION_DIM, got: action.len() });
        }
        let c = self.config.clone();
        let dt = c.control_dt();
        let before = self.features();

        let mut target = [0.0; NUM_JOINTS];
        target.copy_from_slice(&action[..NUM_JOINTS]);
        c.model.clamp_joints(&mut target);
        let mut state = self.state;
        for k in 0..NUM_JETS {
            let cmd = action[NUM_JOINTS + k];
            state.thrust[k] = match c.jet_mode {
                JetMode::Ideal => ideal_update(state.thrust[k], cmd, dt, c.model.max_thrust, c.thrust_rate_limit),
                JetMode::Lag => lag_update(&c.jet, state.thrust[k], cmd, dt).min(c.model.max_thrust),
            };
        }
        let h = dt / c.substeps as f64;
        let mut diverged = false;
        for _ in 0..c.substeps {
            match step_dynamics(&c.model, &state, &target, h, &self.terrain) {
                Ok(s) => state = s,
                Err(_) => {
                    diverged = true;
                    break;
                }
            }
        }
        self.state = state;
        self.steps += 1;

        let (terms, after) = if diverged {
            (TaskTerms::default(), before)
        } else {
            (task_rewards(&state, self.prev_distance, &self.task, &c.weights, c.model.max_thrust, dt), self.features())
        };
        let task = total_task_reward(&terms, &c.weights);

        let mut hit = false;
        if !diverged {
            self.prev_distance = distance(state.position, self.task.target);
            if self.prev_distance < self.task.hit_radius {
                hit = true;
                self.hits += 1;
                let from = self.task.target[0];
                self.task = spawn_waypoint(&c.waypoints, c.schedule, self.hits, from, &self.terrain, &mut self.rng);
                self.prev_distance = distance(state.position, self.task.target);
            }
        }

        let reason = if diverged || is_fall(self.clearance(), c.fall_clearance) {
            Termination::Fell
        } else if self.steps >= c.max_steps {
            Termination::Timeout
        } else {
            Termination::None
        };
        self.done = reason != Termination::None;
        let observation = if diverged { Vec::new() } else { self.observation() };
        let thrust_usage = 1.0 - state.thrust.iter().map(|t| t / c.model.max_thrust).sum::<f64>() / NUM_JETS as f64;
        let mut result = StepResult {
            observation,
            terminal_observation: None,
            rewards: RewardBreakdown { terms, task, style: 0.0, total: 0.0 },
            done: self.done,
            reason,
            info: StepInfo {
                waypoints_hit: self.hits,
                hit_this_step: hit,
                thrust_usage,
                base_height: self.clearance(),
                steps: self.steps,
            },
            transition: TransitionPair { current: before, next: after },
            state,
        };
        result.set_style(0.0, &c.weights);
        if diverged {
            // keep something finite for bootstrapping
            result.observation = vec![0.0; c.observation_dim()];
        }
        Ok(result)
    }

    /// Step; on termination start a new episode with a seed drawn from this
    /// environment's own stream.
    pub fn step_auto_reset(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let mut r = self.step(action)?;
        if r.done {
            let seed = self.rng.random::<u64>();
            let obs = self.reset(seed)?;
            r.terminal_observation = Some(std::mem::replace(&mut r.observation, obs));
        }
        Ok(r)
    }
}

/// Robot state matching a prior frame, placed at `x` with the lowest foot
/// resting on the terrain.
pub fn state_from_frame(model: &RobotModel, frame: &FeatureFrame, terrain: &HeightField, x: f64) -> RobotState {
    let f = &frame.0;
    let pitch = f[1].atan2(f[0]);
    let mut state = RobotState {
        position: [x, 0.0],
        pitch,
        angular_velocity: f[FeatureFrame::OMEGA],
        joints: frame.joints(),
        joint_velocities: frame.joint_velocities(),
        thrust: frame.thrust().map(|t| t.clamp(0.0, model.max_thrust)),
        ..RobotState::default()
    };
    state.velocity = state.to_world(frame.body_velocity());
    model.clamp_joints(&mut state.joints);
    let fk = forward_kinematics(model, &state);
    let z = fk
        .world
        .iter()
        .map(|p| terrain.height_at(p[0]) - p[1])
        .fold(f64::NEG_INFINITY, f64::max);
    state.position[1] = z;
    state
}

/// Step every environment with its physical action row, auto-resetting
/// finished ones. Results do not depend on `parallel`.
pub fn vector_step(envs: &mut [Env], actions: &[[f64; ACTION_DIM]], parallel: bool) -> Result<Vec<StepResult>, EnvError> {
    if envs.len() != actions.len() {
        return Err(EnvError::ShapeMismatch { expected: envs.len(), got: actions.len() });
    }
    if parallel {
        envs.par_iter_mut().zip(actions.par_iter()).map(|(e, a)| e.step_auto_reset(a)).collect()
    } else {
        envs.iter_mut().zip(actions).map(|(e, a)| e.step_auto_reset(a)).collect()
    }
}

pub const TRAJECTORY_COLUMNS: &str = "time x z pitch vx vz omega hip0 knee0 hip1 knee1 thrust0 thrust1 \
target_x target_z r_c r_v r_f r_t task style total waypoints_hit";

/// One trajectory text row matching `TRAJECTORY_COLUMNS`.
pub fn trajectory_row(time: f64, result: &StepResult, task: &WaypointTask) -> String {
    let s = &result.state;
    let r = &result.rewards;
    let vals = [
        time,
        s.position[0],
        s.position[1],
        s.pitch,
        s.velocity[0],
        s.velocity[1],
        s.angular_velocity,
        s.joints[0],
        s.joints[1],
        s.joints[2],
        s.joints[3],
        s.thrust[0],
        s.thrust[1],
        task.target[0],
        task.target[1],
        r.terms.r_c,
        r.terms.r_v,
        r.terms.r_f,
        r.terms.r_t,
        r.task,
        r.style,
        r.total,
        result.info.waypoints_hit as f64,
    ];
    vals.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}
