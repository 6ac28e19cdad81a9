//! Gaussian-policy PPO with GAE and KL early stopping, and the combined
//! adversarial-prior training loop.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amp::{AmpConfig, AmpError, DiscLoss, Discriminator, PolicyTransitionBuffer};
use crate::approx::{clip_grad_norm, Activation, AdamState, ApproxError, Mlp, RunningNormalizer};
use crate::codec::{DecodeError, Reader, Writer};
use crate::envtask::{vector_step, Env, EnvConfig, EnvError, Termination, ACTION_DIM};
use crate::priors::{sample_transitions, MotionDataset, PriorError, TransitionPair};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value during training: {0}")]
    NonFinite(String),
    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Amp(#[from] AmpError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<DecodeError> for PpoError {
    fn from(e: DecodeError) -> Self {
        PpoError::CorruptCheckpoint(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub kl_threshold: f64,
    pub minibatch: usize,
    pub actors: usize,
    pub epochs: usize,
    pub horizon: usize,
    pub max_grad_norm: f64,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub log_std_init: f64,
    pub log_std_min: f64,
    pub obs_clip: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 5e-5,
            clip: 0.2,
            entropy_coef: 0.0,
            value_coef: 5.0,
            kl_threshold: 0.008,
            minibatch: 1024,
            actors: 64,
            epochs: 4,
            horizon: 64,
            max_grad_norm: 1.0,
            policy_hidden: vec![256, 128],
            value_hidden: vec![256, 128],
            log_std_init: -1.0,
            log_std_min: -4.0,
            obs_clip: 10.0,
        }
    }
}

impl PpoConfig {
    /// The full-scale preset: 4096 actors, minibatch 32768.
    pub fn full_scale() -> Self {
        Self { actors: 4096, minibatch: 32768, ..Self::default() }
    }

    pub fn batch_size(&self) -> usize {
        self.actors * self.horizon
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.lambda) {
            return bad("ppo.gamma and ppo.lambda must lie in [0, 1)");
        }
        if !(self.clip > 0.0) || !(self.learning_rate > 0.0) {
            return bad("ppo.clip and ppo.learning_rate must be > 0");
        }
        if self.actors == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatch == 0 {
            return bad("ppo.actors, ppo.horizon, ppo.epochs and ppo.minibatch must be positive");
        }
        if self.minibatch > self.batch_size() {
            return bad("ppo.minibatch must not exceed actors * horizon");
        }
        if !(self.max_grad_norm > 0.0) || !(self.kl_threshold > 0.0) {
            return bad("ppo.max_grad_norm and ppo.kl_threshold must be > 0");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("ppo.entropy_coef and ppo.value_coef must be >= 0");
        }
        if !(self.log_std_init.is_finite() && self.log_std_min.is_finite()) {
            return bad("ppo.log_std_init and ppo.log_std_min must be finite");
        }
        if self.policy_hidden.iter().chain(&self.value_hidden).any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// Diagonal Gaussian over normalised actions in `[-1, 1]^6`, with a
/// state-independent log-std and a running observation normalizer.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
    pub obs_norm: RunningNormalizer,
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut lp = 0.0;
    for k in 0..action.len() {
        let z = (action[k] - mean[k]) * (-log_std[k]).exp();
        lp += -0.5 * z * z - log_std[k] - 0.5 * LN_2PI;
    }
    lp
}

impl GaussianPolicy {
    pub fn new(obs_dim: usize, hidden: &[usize], log_std_init: f64, obs_clip: f64, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend(hidden);
        sizes.push(ACTION_DIM);
        Self {
            mean: Mlp::orthogonal(&sizes, Activation::Tanh, 1.0, 0.01, rng),
            log_std: vec![log_std_init; ACTION_DIM],
            obs_norm: RunningNormalizer::new(obs_dim, obs_clip),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn normalize(&self, obs: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.obs_norm.normalize(obs)
    }

    /// Action sample (clamped to `[-1, 1]`), the pre-clamp sample, and the
    /// log-probability of the pre-clamp sample.
    pub fn sample_action(&self, obs: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, Vec<f64>, f64), ApproxError> {
        let x = self.normalize(obs)?;
        let mu = self.mean.forward(&x)?;
        let raw: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&raw, &mu, &self.log_std);
        Ok((raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect(), raw, lp))
    }

    /// Mean action, clamped.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let x = self.normalize(obs)?;
        Ok(self.mean.forward(&x)?.into_iter().map(|a| a.clamp(-1.0, 1.0)).collect())
    }

    /// Log-probability of a stored pre-clamp action given a normalised observation.
    pub fn log_prob_normalized(&self, obs_normalized: &[f64], action: &[f64]) -> Result<f64, ApproxError> {
        let mu = self.mean.forward(obs_normalized)?;
        Ok(gaussian_log_prob(action, &mu, &self.log_std))
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
    }

    pub fn encode(&self, w: &mut Writer) {
        self.mean.encode(w);
        w.f64_vec(&self.log_std);
        self.obs_norm.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, PpoError> {
        let mean = Mlp::decode(r)?;
        let log_std = r.f64_vec()?;
        if log_std.len() != ACTION_DIM || mean.output_dim() != ACTION_DIM {
            return Err(PpoError::CorruptCheckpoint("policy action dimension".into()));
        }
        let obs_norm = RunningNormalizer::decode(r)?;
        if obs_norm.dim() != mean.input_dim() {
            return Err(PpoError::CorruptCheckpoint("normalizer dimension".into()));
        }
        Ok(Self { mean, log_std, obs_norm })
    }
}

/// Backward GAE over one sequence. `next_values[t]` is the value used for
/// the successor of step `t` (zero after a terminal state); `episode_end[t]`
/// stops the recursion from leaking across episodes.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if episode_end[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// In-place zero-mean, unit-variance rescaling.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// Step-major rollout storage: row `t * actors + i` is actor `i` at step `t`.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub actors: usize,
    pub horizon: usize,
    /// Observations normalised with the snapshot statistics.
    pub observations: Array2<f64>,
    /// Pre-clamp sampled actions.
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Value of the final observation for truncated steps.
    pub bootstrap: Vec<f64>,
    /// Value of each actor's observation after the last step.
    pub last_values: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(actors: usize, horizon: usize, obs_dim: usize) -> Self {
        let n = actors * horizon;
        Self {
            actors,
            horizon,
            observations: Array2::zeros((n, obs_dim)),
            actions: Array2::zeros((n, ACTION_DIM)),
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            terminated: vec![false; n],
            truncated: vec![false; n],
            bootstrap: vec![0.0; n],
            last_values: vec![0.0; actors],
        }
    }

    pub fn len(&self) -> usize {
        self.actors * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Advantages and returns in buffer order. Falls are terminal; timeouts
    /// bootstrap from the value of their final observation.
    pub fn compute_gae(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let (n, h) = (self.actors, self.horizon);
        let mut adv = vec![0.0; n * h];
        let mut ret = vec![0.0; n * h];
        for i in 0..n {
            let idx: Vec<usize> = (0..h).map(|t| t * n + i).collect();
            let rewards: Vec<f64> = idx.iter().map(|&k| self.rewards[k]).collect();
            let values: Vec<f64> = idx.iter().map(|&k| self.values[k]).collect();
            let mut next = vec![0.0; h];
            let mut end = vec![false; h];
            for t in 0..h {
                let k = idx[t];
                next[t] = if self.terminated[k] {
                    0.0
                } else if self.truncated[k] {
                    self.bootstrap[k]
                } else if t + 1 < h {
                    self.values[idx[t + 1]]
                } else {
                    self.last_values[i]
                };
                end[t] = self.terminated[k] || self.truncated[k];
            }
            let (a, r) = gae(&rewards, &values, &next, &end, gamma, lambda);
            for t in 0..h {
                adv[idx[t]] = a[t];
                ret[idx[t]] = r[t];
            }
        }
        (adv, ret)
    }
}

/// Clipped-surrogate objective `min(r A, clip(r, 1±ε) A)` for one sample
/// and its derivative with respect to the new log-probability.
pub fn clipped_surrogate(log_ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let ratio = log_ratio.exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, ratio * advantage)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_kl: f64,
    /// Epochs completed before any early stop.
    pub epochs_ran: usize,
    pub minibatch_steps: usize,
    pub early_stopped: bool,
}

pub struct Optimizers {
    pub policy: AdamState,
    pub value: AdamState,
}

impl Optimizers {
    pub fn new(policy: &GaussianPolicy, value: &Mlp, lr: f64) -> Self {
        Self {
            policy: AdamState::new(policy.mean.num_params() + policy.log_std.len(), lr),
            value: AdamState::new(value.num_params(), lr),
        }
    }
}

/// Epochs of minibatch PPO on a filled buffer. Advantages are normalised
/// here. Stops all remaining work when a minibatch's approximate KL
/// `mean(old_logp - new_logp)` exceeds the threshold.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value: &mut Mlp,
    opt: &mut Optimizers,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<PpoReport, PpoError> {
    let n = buffer.len();
    let mut adv = advantages.to_vec();
    normalize_advantages(&mut adv);
    let mb = config.minibatch.min(n);
    let mut report = PpoReport::default();
    let (mut pl_sum, mut vl_sum, mut kl_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
    let n_mean = policy.mean.num_params();

    'epochs: for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for chunk in order.chunks(mb) {
            let b = chunk.len();
            let obs = buffer.observations.select(Axis(0), chunk);
            let act = buffer.actions.select(Axis(0), chunk);

            let cache = policy.mean.forward_batch(obs.view())?;
            let mu = cache.output();
            let inv_var: Vec<f64> = policy.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
            let mut up_mu = Array2::zeros((b, ACTION_DIM));
            let mut g_log_std = vec![0.0; ACTION_DIM];
            let (mut kl, mut pl) = (0.0, 0.0);
            for (r, &k) in chunk.iter().enumerate() {
                let a = act.row(r);
                let m = mu.row(r);
                let lp_new = gaussian_log_prob(a.as_slice().unwrap(), m.as_slice().unwrap(), &policy.log_std);
                let log_ratio = lp_new - buffer.log_probs[k];
                kl += -log_ratio;
                let (surr, d_lp) = clipped_surrogate(log_ratio, adv[k], config.clip);
                pl -= surr;
                // loss = -mean(surr): dL/dlogp = -d_lp / b
                let g = -d_lp / b as f64;
                for j in 0..ACTION_DIM {
                    let diff = a[j] - m[j];
                    up_mu[[r, j]] = g * diff * inv_var[j];
                    g_log_std[j] += g * (diff * diff * inv_var[j] - 1.0);
                }
            }
            kl /= b as f64;
            pl /= b as f64;
            if !kl.is_finite() || !pl.is_finite() {
                return Err(PpoError::NonFinite(format!("policy loss {pl}, kl {kl}")));
            }
            if kl > config.kl_threshold {
                report.early_stopped = true;
                kl_sum += kl;
                count += 1;
                break 'epochs;
            }
            for g in g_log_std.iter_mut() {
                *g -= config.entropy_coef;
            }
            let (g_mean, _) = policy.mean.backward_batch(&cache, up_mu.view())?;
            let mut grads = g_mean;
            grads.extend_from_slice(&g_log_std);
            clip_grad_norm(&mut grads, config.max_grad_norm);
            let mut params: Vec<f64> = policy.mean.params().to_vec();
            params.extend_from_slice(&policy.log_std);
            opt.policy.step(&mut params, &grads);
            policy.mean.params_mut().copy_from_slice(&params[..n_mean]);
            for (ls, p) in policy.log_std.iter_mut().zip(&params[n_mean..]) {
                *ls = p.max(config.log_std_min);
            }

            let vcache = value.forward_batch(obs.view())?;
            let v = vcache.output();
            let mut up_v = Array2::zeros((b, 1));
            let mut vl = 0.0;
            for (r, &k) in chunk.iter().enumerate() {
                let e = v[[r, 0]] - returns[k];
                vl += e * e / b as f64;
                up_v[[r, 0]] = config.value_coef * 2.0 * e / b as f64;
            }
            if !vl.is_finite() {
                return Err(PpoError::NonFinite(format!("value loss {vl}")));
            }
            let (mut gv, _) = value.backward_batch(&vcache, up_v.view())?;
            clip_grad_norm(&mut gv, config.max_grad_norm);
            opt.value.step(value.params_mut(), &gv);

            pl_sum += pl;
            vl_sum += config.value_coef * vl;
            kl_sum += kl;
            count += 1;
            report.minibatch_steps += 1;
        }
        report.epochs_ran += 1;
    }
    let c = count.max(1) as f64;
    report.policy_loss = pl_sum / report.minibatch_steps.max(1) as f64;
    report.value_loss = vl_sum / report.minibatch_steps.max(1) as f64;
    report.mean_kl = kl_sum / c;
    report.entropy = policy.entropy();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub amp: AmpConfig,
    pub env: EnvConfig,
    pub seed: u64,
    pub iterations: usize,
    /// Fan environment stepping out over the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            amp: AmpConfig::default(),
            env: EnvConfig::default(),
            seed: 0,
            iterations: 100,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        self.ppo.validate()?;
        self.amp.validate()?;
        self.env.validate()?;
        Ok(())
    }

    pub fn uses_style(&self) -> bool {
        self.env.weights.w_s > 0.0
    }
}

/// One record per training iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps: u64,
    pub mean_task_reward: f64,
    pub mean_style_reward: f64,
    pub mean_total_reward: f64,
    pub mean_r_c: f64,
    pub mean_r_v: f64,
    pub mean_r_f: f64,
    pub mean_r_t: f64,
    pub disc_dataset: f64,
    pub disc_policy: f64,
    pub disc_penalty: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_kl: f64,
    pub epochs_ran: usize,
    pub episodes: usize,
    /// Mean undiscounted task return of episodes that ended this iteration
    /// (NaN-free: falls back to the previous value when none ended).
    pub episode_task_return: f64,
    pub episode_length: f64,
    pub episode_waypoints: f64,
    pub mean_base_height: f64,
    pub mean_thrust: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub policy_adam: AdamState,
    pub value_adam: AdamState,
    pub discriminator: Option<Discriminator>,
    pub iteration: u64,
    pub env_steps: u64,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"JAMPCKPT";
const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u64(self.iteration);
        w.u64(self.env_steps);
        self.policy.encode(&mut w);
        self.value.encode(&mut w);
        self.policy_adam.encode(&mut w);
        self.value_adam.encode(&mut w);
        match &self.discriminator {
            Some(d) => {
                w.u8(1);
                d.encode(&mut w);
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PpoError> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(PpoError::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(PpoError::CorruptCheckpoint(format!("unsupported version {version}")));
        }
        let iteration = r.u64()?;
        let env_steps = r.u64()?;
        let policy = GaussianPolicy::decode(&mut r)?;
        let value = Mlp::decode(&mut r)?;
        let policy_adam = AdamState::decode(&mut r)?;
        let value_adam = AdamState::decode(&mut r)?;
        let discriminator = match r.u8()? {
            0 => None,
            1 => Some(Discriminator::decode(&mut r)?),
            c => return Err(PpoError::CorruptCheckpoint(format!("discriminator flag {c}"))),
        };
        if r.remaining() != 0 {
            return Err(PpoError::CorruptCheckpoint("trailing bytes".into()));
        }
        if value.input_dim() != policy.obs_dim() || value.output_dim() != 1 {
            return Err(PpoError::CorruptCheckpoint("value network shape".into()));
        }
        Ok(Self { policy, value, policy_adam, value_adam, discriminator, iteration, env_steps })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), PpoError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PpoError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Default)]
struct EpisodeTracker {
    task_return: f64,
    length: usize,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub optimizers: Optimizers,
    pub discriminator: Option<Discriminator>,
    priors: Option<Arc<MotionDataset>>,
    amp_buffer: PolicyTransitionBuffer,
    envs: Vec<Env>,
    observations: Vec<Vec<f64>>,
    trackers: Vec<EpisodeTracker>,
    rng: ChaCha8Rng,
    pub iteration: u64,
    pub env_steps: u64,
    last_episode: (f64, f64, f64),
}

impl Trainer {
    pub fn new(config: TrainConfig, priors: Option<MotionDataset>) -> Result<Self, PpoError> {
        config.validate()?;
        // without priors there is no discriminator and the style term is zero
        let priors = priors.filter(|p| p.num_pairs() > 0).map(Arc::new);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let env_config = Arc::new(config.env.clone());
        let obs_dim = env_config.observation_dim();
        let policy = GaussianPolicy::new(obs_dim, &config.ppo.policy_hidden, config.ppo.log_std_init, config.ppo.obs_clip, &mut rng);
        let mut vsizes = vec![obs_dim];
        vsizes.extend(&config.ppo.value_hidden);
        vsizes.push(1);
        let value = Mlp::orthogonal(&vsizes, Activation::Tanh, 1.0, 1.0, &mut rng);
        let optimizers = Optimizers::new(&policy, &value, config.ppo.learning_rate);
        let discriminator = match (&priors, config.uses_style()) {
            (Some(p), true) => {
                let mut d = Discriminator::new(&config.amp, &mut rng)?;
                d.fit_normalizer(p)?;
                Some(d)
            }
            _ => None,
        };
        let mut envs = Vec::with_capacity(config.ppo.actors);
        for _ in 0..config.ppo.actors {
            envs.push(Env::new(env_config.clone(), priors.clone(), rng.random::<u64>())?);
        }
        let observations = envs.iter().map(Env::observation).collect();
        let trackers = (0..envs.len()).map(|_| EpisodeTracker::default()).collect();
        Ok(Self {
            amp_buffer: PolicyTransitionBuffer::new(config.amp.buffer_capacity),
            config,
            policy,
            value,
            optimizers,
            discriminator,
            priors,
            envs,
            observations,
            trackers,
            rng,
            iteration: 0,
            env_steps: 0,
            last_episode: (0.0, 0.0, 0.0),
        })
    }

    /// Rebuild a trainer around saved networks (fresh environments).
    pub fn from_checkpoint(config: TrainConfig, priors: Option<MotionDataset>, ck: Checkpoint) -> Result<Self, PpoError> {
        let mut t = Self::new(config, priors)?;
        if ck.policy.obs_dim() != t.policy.obs_dim() || ck.policy.mean.sizes() != t.policy.mean.sizes() {
            return Err(PpoError::CheckpointMismatch("policy network shape".into()));
        }
        t.policy = ck.policy;
        t.value = ck.value;
        t.optimizers = Optimizers { policy: ck.policy_adam, value: ck.value_adam };
        if ck.discriminator.is_some() {
            t.discriminator = ck.discriminator;
        }
        t.iteration = ck.iteration;
        t.env_steps = ck.env_steps;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            policy: self.policy.clone(),
            value: self.value.clone(),
            policy_adam: self.optimizers.policy.clone(),
            value_adam: self.optimizers.value.clone(),
            discriminator: self.discriminator.clone(),
            iteration: self.iteration,
            env_steps: self.env_steps,
        }
    }

    fn normalize_rows(&self, rows: &[Vec<f64>]) -> Result<Array2<f64>, PpoError> {
        let dim = self.policy.obs_dim();
        let mut raw = Array2::zeros((rows.len(), dim));
        for (mut r, o) in raw.rows_mut().into_iter().zip(rows) {
            if o.len() != dim {
                return Err(ApproxError::DimensionMismatch { expected: dim, got: o.len() }.into());
            }
            r.as_slice_mut().unwrap().copy_from_slice(o);
        }
        Ok(self.policy.obs_norm.normalize_batch(raw.view())?)
    }

    /// Rollout, discriminator updates and a PPO update.
    pub fn iterate(&mut self) -> Result<MetricsRow, PpoError> {
        let cfg = self.config.clone();
        let (n, h) = (cfg.ppo.actors, cfg.ppo.horizon);
        let mut buf = RolloutBuffer::new(n, h, self.policy.obs_dim());
        let mut raw_obs: Vec<Vec<f64>> = Vec::with_capacity(n * h);
        let mut transitions: Vec<TransitionPair> = Vec::with_capacity(n * h);
        let mut row = MetricsRow { iteration: self.iteration as usize, ..MetricsRow::default() };
        let (mut ep_ret, mut ep_len, mut ep_hits, mut episodes) = (0.0, 0.0, 0.0, 0usize);
        let w = cfg.env.weights.clone();

        for t in 0..h {
            let obs = self.normalize_rows(&self.observations)?;
            let mu = self.policy.mean.predict_batch(obs.view())?;
            let values = self.value.predict_batch(obs.view())?;
            let mut physical = Vec::with_capacity(n);
            for i in 0..n {
                let k = t * n + i;
                let mut raw = [0.0; ACTION_DIM];
                for j in 0..ACTION_DIM {
                    let eps: f64 = self.rng.sample(StandardNormal);
                    raw[j] = mu[[i, j]] + self.policy.log_std[j].exp() * eps;
                }
                buf.log_probs[k] = gaussian_log_prob(&raw, mu.row(i).as_slice().unwrap(), &self.policy.log_std);
                buf.values[k] = values[[i, 0]];
                buf.actions.row_mut(k).as_slice_mut().unwrap().copy_from_slice(&raw);
                buf.observations.row_mut(k).assign(&obs.row(i));
                let clamped: Vec<f64> = raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
                physical.push(cfg.env.physical_action(self.envs[i].stance(), &clamped));
            }
            raw_obs.extend(self.observations.iter().cloned());
            let mut results = vector_step(&mut self.envs, &physical, cfg.parallel)?;

            if let Some(d) = &self.discriminator {
                let pairs: Vec<TransitionPair> = results.iter().map(|r| r.transition).collect();
                let style = d.style_rewards_batch(&pairs);
                for (r, s) in results.iter_mut().zip(style) {
                    r.set_style(s, &w);
                }
            }
            let mut truncated_rows = Vec::new();
            for (i, r) in results.iter().enumerate() {
                let k = t * n + i;
                buf.rewards[k] = r.rewards.total;
                buf.terminated[k] = r.reason == Termination::Fell;
                buf.truncated[k] = r.reason == Termination::Timeout;
                if buf.truncated[k] {
                    truncated_rows.push((k, r.terminal_observation.clone().expect("auto-reset keeps it")));
                }
                transitions.push(r.transition);
                row.mean_task_reward += r.rewards.task;
                row.mean_style_reward += r.rewards.style;
                row.mean_total_reward += r.rewards.total;
                row.mean_r_c += r.rewards.terms.r_c;
                row.mean_r_v += r.rewards.terms.r_v;
                row.mean_r_f += r.rewards.terms.r_f;
                row.mean_r_t += r.rewards.terms.r_t;
                row.mean_base_height += r.info.base_height;
                row.mean_thrust += r.state.thrust.iter().sum::<f64>() / r.state.thrust.len() as f64;
                let tr = &mut self.trackers[i];
                tr.task_return += r.rewards.task;
                tr.length += 1;
                if r.done {
                    episodes += 1;
                    ep_ret += tr.task_return;
                    ep_len += tr.length as f64;
                    ep_hits += r.info.waypoints_hit as f64;
                    *tr = EpisodeTracker::default();
                }
                self.observations[i] = r.observation.clone();
            }
            if !truncated_rows.is_empty() {
                let rows: Vec<Vec<f64>> = truncated_rows.iter().map(|(_, o)| o.clone()).collect();
                let x = self.normalize_rows(&rows)?;
                let v = self.value.predict_batch(x.view())?;
                for (j, (k, _)) in truncated_rows.iter().enumerate() {
                    buf.bootstrap[*k] = v[[j, 0]];
                }
            }
        }
        let last = self.normalize_rows(&self.observations)?;
        buf.last_values = self.value.predict_batch(last.view())?.column(0).to_vec();

        let total = (n * h) as f64;
        for v in [
            &mut row.mean_task_reward,
            &mut row.mean_style_reward,
            &mut row.mean_total_reward,
            &mut row.mean_r_c,
            &mut row.mean_r_v,
            &mut row.mean_r_f,
            &mut row.mean_r_t,
            &mut row.mean_base_height,
            &mut row.mean_thrust,
        ] {
            *v /= total;
        }
        if episodes > 0 {
            self.last_episode = (ep_ret / episodes as f64, ep_len / episodes as f64, ep_hits / episodes as f64);
        }
        row.episodes = episodes;
        (row.episode_task_return, row.episode_length, row.episode_waypoints) = self.last_episode;

        // discriminator on the snapshot's transitions
        if let (Some(d), Some(p)) = (&mut self.discriminator, &self.priors) {
            self.amp_buffer.push(transitions);
            let batch = cfg.amp.batch_size.min(self.amp_buffer.len());
            let mut acc = DiscLoss::default();
            let updates = cfg.amp.updates_per_iteration;
            for _ in 0..updates {
                let expert = sample_transitions(p, batch, &mut self.rng)?;
                let agent = self.amp_buffer.sample(batch, &mut self.rng)?;
                let l = d.update(&expert, &agent)?;
                if !(l.dataset.is_finite() && l.policy.is_finite() && l.penalty.is_finite()) {
                    return Err(PpoError::NonFinite(format!("discriminator loss {l:?}")));
                }
                acc.dataset += l.dataset / updates as f64;
                acc.policy += l.policy / updates as f64;
                acc.penalty += l.penalty / updates as f64;
            }
            row.disc_dataset = acc.dataset;
            row.disc_policy = acc.policy;
            row.disc_penalty = acc.penalty;
        }

        let (adv, ret) = buf.compute_gae(cfg.ppo.gamma, cfg.ppo.lambda);
        let report = ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.optimizers,
            &buf,
            &adv,
            &ret,
            &cfg.ppo,
            &mut self.rng,
        )?;
        self.policy.obs_norm.update(raw_obs.iter().map(Vec::as_slice))?;

        row.policy_loss = report.policy_loss;
        row.value_loss = report.value_loss;
        row.entropy = report.entropy;
        row.mean_kl = report.mean_kl;
        row.epochs_ran = report.epochs_ran;
        self.iteration += 1;
        self.env_steps += (n * h) as u64;
        row.iteration = self.iteration as usize;
        row.env_steps = self.env_steps;
        Ok(row)
    }
}

/// Run `config.iterations` iterations, calling `on_iteration` after each.
pub fn train(
    config: TrainConfig,
    priors: Option<MotionDataset>,
    mut on_iteration: impl FnMut(&MetricsRow, &Trainer) -> Result<(), PpoError>,
) -> Result<(Trainer, Vec<MetricsRow>), PpoError> {
    let iterations = config.iterations;
    let mut trainer = Trainer::new(config, priors)?;
    let mut rows = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let row = trainer.iterate()?;
        on_iteration(&row, &trainer)?;
        rows.push(row);
    }
    Ok((trainer, rows))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub seed: u64,
    pub length: usize,
    pub duration_fraction: f64,
    pub total_reward: f64,
    pub task_reward: f64,
    pub waypoints_hit: usize,
    /// Mean over steps of `1 - mean(T / T_max)`.
    pub thrust_usage: f64,
    pub mean_base_height: f64,
    pub fell: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_reward: f64,
    pub mean_task_reward: f64,
    pub mean_length: f64,
    pub duration_fraction: f64,
    pub waypoints_hit: f64,
    pub max_waypoints_hit: usize,
    pub thrust_usage: f64,
    pub mean_base_height: f64,
    pub episodes: Vec<EpisodeStats>,
}

/// Roll out `episodes` episodes (seeds `seed, seed + 1, ...`) from the
/// stance pose. `on_step` sees every step for trajectory export.
pub fn evaluate_with(
    checkpoint: &Checkpoint,
    env_config: &EnvConfig,
    episodes: usize,
    deterministic: bool,
    seed: u64,
    mut on_step: impl FnMut(usize, f64, &crate::envtask::StepResult, &crate::envtask::WaypointTask),
) -> Result<EvalReport, PpoError> {
    let cfg = Arc::new(EnvConfig { p_rsi: 0.0, ..env_config.clone() });
    if cfg.observation_dim() != checkpoint.policy.obs_dim() {
        return Err(PpoError::CheckpointMismatch(format!(
            "checkpoint expects {} observations, environment produces {}",
            checkpoint.policy.obs_dim(),
            cfg.observation_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut report = EvalReport::default();
    for e in 0..episodes {
        let ep_seed = seed.wrapping_add(e as u64);
        let mut env = Env::new(cfg.clone(), None, ep_seed)?;
        let mut obs = env.observation();
        let mut stats = EpisodeStats { seed: ep_seed, ..EpisodeStats::default() };
        let (mut usage, mut height) = (0.0, 0.0);
        loop {
            let a = if deterministic {
                checkpoint.policy.deterministic_action(&obs)?
            } else {
                checkpoint.policy.sample_action(&obs, &mut rng)?.0
            };
            let task_before = *env.task();
            let phys = cfg.physical_action(env.stance(), &a);
            let mut r = env.step(&phys)?;
            if let Some(d) = &checkpoint.discriminator {
                r.set_style(d.style_reward(&r.transition.current, &r.transition.next)?, &cfg.weights);
            }
            on_step(e, stats.length as f64 * cfg.control_dt(), &r, &task_before);
            stats.length += 1;
            stats.total_reward += r.rewards.total;
            stats.task_reward += r.rewards.task;
            usage += r.info.thrust_usage;
            height += r.info.base_height;
            stats.waypoints_hit = r.info.waypoints_hit;
            obs = r.observation.clone();
            if r.done {
                stats.fell = r.reason == Termination::Fell;
                break;
            }
        }
        stats.duration_fraction = stats.length as f64 / cfg.max_steps as f64;
        stats.thrust_usage = usage / stats.length as f64;
        stats.mean_base_height = height / stats.length as f64;
        report.episodes.push(stats);
    }
    let m = episodes.max(1) as f64;
    for s in &report.episodes {
        report.mean_reward += s.total_reward / m;
        report.mean_task_reward += s.task_reward / m;
        report.mean_length += s.length as f64 / m;
        report.duration_fraction += s.duration_fraction / m;
        report.waypoints_hit += s.waypoints_hit as f64 / m;
        report.thrust_usage += s.thrust_usage / m;
        report.mean_base_height += s.mean_base_height / m;
        report.max_waypoints_hit = report.max_waypoints_hit.max(s.waypoints_hit);
    }
    Ok(report)
}

pub fn evaluate(
    checkpoint: &Checkpoint,
    env_config: &EnvConfig,
    episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Result<EvalReport, PpoError> {
    evaluate_with(checkpoint, env_config, episodes, deterministic, seed, |_, _, _, _| {})
}

/// Frame-by-frame recomputation of stored log-probabilities; the largest
/// absolute discrepancy.
pub fn audit_log_probs(policy: &GaussianPolicy, buffer: &RolloutBuffer) -> Result<f64, PpoError> {
    let mu = policy.mean.predict_batch(buffer.observations.view())?;
    let mut worst: f64 = 0.0;
    for k in 0..buffer.len() {
        let lp = gaussian_log_prob(buffer.actions.row(k).as_slice().unwrap(), mu.row(k).as_slice().unwrap(), &policy.log_std);
        worst = worst.max((lp - buffer.log_probs[k]).abs());
    }
    Ok(worst)
}

/// Value predictions for normalised observation rows.
pub fn predict_values(value: &Mlp, obs: ArrayView2<'_, f64>) -> Result<Vec<f64>, PpoError> {
    Ok(value.predict_batch(obs)?.column(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_examples() {
        let (a, r) = gae(&[1.0], &[0.5], &[0.5], &[false], 0.99, 0.95);
        assert!((a[0] - 0.995).abs() < 1e-12);
        assert!((r[0] - 1.495).abs() < 1e-12);
        let (a, _) = gae(&[1.0, 1.0], &[0.5, 0.5], &[0.5, 0.5], &[false, false], 0.99, 0.95);
        assert!((a[0] - 0.995 * (1.0 + 0.99 * 0.95)).abs() < 1e-12);
        let (a, _) = gae(&[2.0, 1.0], &[0.5, 0.7], &[0.0, 0.3], &[true, false], 0.99, 0.95);
        assert!((a[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn surrogate_branches() {
        let (s, g) = clipped_surrogate(1.5f64.ln(), 2.0, 0.2);
        assert!((s - 2.4).abs() < 1e-12);
        assert_eq!(g, 0.0);
        let (s, g) = clipped_surrogate(0.0, -3.0, 0.2);
        assert_eq!(s, -3.0);
        assert_eq!(g, -3.0);
        let (_, g) = clipped_surrogate(0.5f64.ln(), -1.0, 0.2);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn degenerate_std_gives_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = GaussianPolicy::new(5, &[8], -20.0, 10.0, &mut rng);
        p.mean.params_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 * 0.37).sin());
        let obs = [0.1, -0.2, 0.3, 0.0, 1.0];
        let (a, _, _) = p.sample_action(&obs, &mut rng).unwrap();
        let m = p.deterministic_action(&obs).unwrap();
        for (x, y) in a.iter().zip(&m) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn stored_log_prob_recomputes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = GaussianPolicy::new(3, &[4], -1.0, 10.0, &mut rng);
        let obs = [0.5, 0.25, -1.0];
        let (_, raw, lp) = p.sample_action(&obs, &mut rng).unwrap();
        let x = p.normalize(&obs).unwrap();
        assert!((p.log_prob_normalized(&x, &raw).unwrap() - lp).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { minibatch: 1 << 20, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { gamma: 1.0, ..PpoConfig::default() }.validate().is_err());
        let full = PpoConfig::full_scale();
        assert_eq!((full.actors, full.minibatch), (4096, 32768));
    }
}
