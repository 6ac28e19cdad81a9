//! Adversarial motion prior: a discriminator over consecutive feature
//! frames, its three-term objective and the softplus style reward.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{Activation, AdamState, ApproxError, Mlp, RunningNormalizer};
use crate::codec::{Reader, Writer};
use crate::priors::{FeatureFrame, MotionDataset, TransitionPair, FEATURE_DIM};

#[derive(Debug, Error, PartialEq)]
pub enum AmpError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("requested {requested} samples but only {available} stored")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Approx(#[from] ApproxError),
}

pub const DISC_INPUT_DIM: usize = 2 * FEATURE_DIM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmpConfig {
    pub hidden: Vec<usize>,
    pub grad_penalty: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub updates_per_iteration: usize,
    pub buffer_capacity: usize,
    pub normalizer_clip: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            grad_penalty: 10.0,
            learning_rate: 1e-4,
            batch_size: 256,
            updates_per_iteration: 2,
            buffer_capacity: 100_000,
            normalizer_clip: 10.0,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<(), AmpError> {
        let bad = |m: &str| Err(AmpError::InvalidConfig(m.to_string()));
        if !(self.grad_penalty >= 0.0 && self.grad_penalty.is_finite()) {
            return bad("grad_penalty must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        if !(self.normalizer_clip > 0.0) {
            return bad("normalizer_clip must be positive");
        }
        Ok(())
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Style reward from a logit: `-log(1 - sigmoid(d)) = softplus(d)`.
pub fn style_reward_from_logit(d: f64) -> f64 {
    softplus(d)
}

/// Terms of the discriminator objective, evaluated before the update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscLoss {
    pub dataset: f64,
    pub policy: f64,
    pub penalty: f64,
}

impl DiscLoss {
    /// `dataset + policy + w_gp * penalty`
    pub fn total(&self, grad_penalty: f64) -> f64 {
        self.dataset + self.policy + grad_penalty * self.penalty
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
    pub normalizer: RunningNormalizer,
    pub grad_penalty: f64,
    pub adam: AdamState,
}

impl Discriminator {
    pub fn new(config: &AmpConfig, rng: &mut impl Rng) -> Result<Self, AmpError> {
        config.validate()?;
        let mut sizes = vec![DISC_INPUT_DIM];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let net = Mlp::orthogonal(&sizes, Activation::Tanh, 1.0, 1.0, rng);
        let adam = AdamState::new(net.num_params(), config.learning_rate);
        Ok(Self {
            net,
            normalizer: RunningNormalizer::new(FEATURE_DIM, config.normalizer_clip),
            grad_penalty: config.grad_penalty,
            adam,
        })
    }

    /// Fit the shared feature normalizer to the dataset frames. Called once;
    /// the statistics stay frozen afterwards.
    pub fn fit_normalizer(&mut self, dataset: &MotionDataset) -> Result<(), AmpError> {
        self.normalizer.update(dataset.frames().map(|f| f.as_slice()))?;
        Ok(())
    }

    /// Normalised, concatenated discriminator input.
    pub fn input(&self, current: &FeatureFrame, next: &FeatureFrame) -> Result<Vec<f64>, AmpError> {
        let mut x = self.normalizer.normalize(current.as_slice())?;
        x.extend(self.normalizer.normalize(next.as_slice())?);
        Ok(x)
    }

    pub fn input_batch(&self, pairs: &[TransitionPair]) -> Array2<f64> {
        let mut raw = Array2::zeros((pairs.len(), DISC_INPUT_DIM));
        for (mut row, p) in raw.rows_mut().into_iter().zip(pairs) {
            for k in 0..FEATURE_DIM {
                row[k] = p.current.0[k];
                row[FEATURE_DIM + k] = p.next.0[k];
            }
        }
        self.normalize_raw(raw)
    }

    fn normalize_raw(&self, mut raw: Array2<f64>) -> Array2<f64> {
        for mut row in raw.rows_mut() {
            let s = row.as_slice_mut().expect("row-major");
            let a = self.normalizer.normalize(&s[..FEATURE_DIM]).expect("dim");
            let b = self.normalizer.normalize(&s[FEATURE_DIM..]).expect("dim");
            s[..FEATURE_DIM].copy_from_slice(&a);
            s[FEATURE_DIM..].copy_from_slice(&b);
        }
        raw
    }

    pub fn logit(&self, current: &FeatureFrame, next: &FeatureFrame) -> Result<f64, AmpError> {
        Ok(self.net.forward(&self.input(current, next)?)?[0])
    }

    pub fn style_reward(&self, current: &FeatureFrame, next: &FeatureFrame) -> Result<f64, AmpError> {
        Ok(style_reward_from_logit(self.logit(current, next)?))
    }

    pub fn logits_batch(&self, pairs: &[TransitionPair]) -> Vec<f64> {
        if pairs.is_empty() {
            return Vec::new();
        }
        let x = self.input_batch(pairs);
        self.net.predict_batch(x.view()).expect("dim").column(0).to_vec()
    }

    pub fn style_rewards_batch(&self, pairs: &[TransitionPair]) -> Vec<f64> {
        self.logits_batch(pairs).into_iter().map(style_reward_from_logit).collect()
    }

    /// Objective terms and the parameter gradient of the total, on already
    /// normalised inputs (rows of `dataset` and `policy`).
    pub fn loss_and_grad_inputs(
        &self,
        params: &Mlp,
        dataset: ArrayView2<'_, f64>,
        policy: ArrayView2<'_, f64>,
    ) -> Result<(DiscLoss, Vec<f64>), AmpError> {
        let (nd, np) = (dataset.nrows(), policy.nrows());
        if nd == 0 || np == 0 {
            return Err(AmpError::EmptyBatch);
        }
        let net = params;
        let cd = net.forward_batch(dataset)?;
        let cp = net.forward_batch(policy)?;
        let ld = cd.output().column(0).to_owned();
        let lp = cp.output().column(0).to_owned();

        let mut loss = DiscLoss::default();
        let mut up_d = Array2::zeros((nd, 1));
        let mut up_p = Array2::zeros((np, 1));
        for (i, &d) in ld.iter().enumerate() {
            loss.dataset += softplus(-d) / nd as f64;
            up_d[[i, 0]] = -sigmoid(-d) / nd as f64;
        }
        for (i, &d) in lp.iter().enumerate() {
            loss.policy += softplus(d) / np as f64;
            up_p[[i, 0]] = sigmoid(d) / np as f64;
        }
        let (gd, _) = net.backward_batch(&cd, up_d.view())?;
        let (gp, _) = net.backward_batch(&cp, up_p.view())?;
        let mut grads: Vec<f64> = gd.iter().zip(&gp).map(|(a, b)| a + b).collect();

        let weights = vec![self.grad_penalty / nd as f64; nd];
        let (norms, gpen) = net.input_gradient_penalty(dataset, &weights)?;
        loss.penalty = norms.iter().sum::<f64>() / nd as f64;
        if self.grad_penalty != 0.0 {
            for (g, p) in grads.iter_mut().zip(&gpen) {
                *g += p;
            }
        }
        Ok((loss, grads))
    }

    pub fn loss_and_grad(
        &self,
        dataset: &[TransitionPair],
        policy: &[TransitionPair],
    ) -> Result<(DiscLoss, Vec<f64>), AmpError> {
        if dataset.is_empty() || policy.is_empty() {
            return Err(AmpError::EmptyBatch);
        }
        let xd = self.input_batch(dataset);
        let xp = self.input_batch(policy);
        self.loss_and_grad_inputs(&self.net, xd.view(), xp.view())
    }

    /// One Adam step on the full objective; returns the terms before the step.
    pub fn update(&mut self, dataset: &[TransitionPair], policy: &[TransitionPair]) -> Result<DiscLoss, AmpError> {
        let (loss, grads) = self.loss_and_grad(dataset, policy)?;
        self.adam.step(self.net.params_mut(), &grads);
        Ok(loss)
    }

    /// Same as `update` but on pre-normalised input rows.
    pub fn update_inputs(&mut self, dataset: ArrayView2<'_, f64>, policy: ArrayView2<'_, f64>) -> Result<DiscLoss, AmpError> {
        let (loss, grads) = self.loss_and_grad_inputs(&self.net, dataset, policy)?;
        self.adam.step(self.net.params_mut(), &grads);
        Ok(loss)
    }

    pub fn encode(&self, w: &mut Writer) {
        self.net.encode(w);
        self.normalizer.encode(w);
        w.f64(self.grad_penalty);
        self.adam.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, AmpError> {
        let net = Mlp::decode(r)?;
        if net.input_dim() != DISC_INPUT_DIM || net.output_dim() != 1 {
            return Err(ApproxError::Corrupt("discriminator shape".into()).into());
        }
        let normalizer = RunningNormalizer::decode(r)?;
        let grad_penalty = r.f64().map_err(ApproxError::from)?;
        let adam = AdamState::decode(r)?;
        Ok(Self { net, normalizer, grad_penalty, adam })
    }
}

/// FIFO store of agent transitions for the policy side of the objective.
#[derive(Clone, Debug)]
pub struct PolicyTransitionBuffer {
    capacity: usize,
    pairs: VecDeque<TransitionPair>,
}

impl PolicyTransitionBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self { capacity, pairs: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, pairs: impl IntoIterator<Item = TransitionPair>) {
        for p in pairs {
            if self.pairs.len() == self.capacity {
                self.pairs.pop_front();
            }
            self.pairs.push_back(p);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionPair> {
        self.pairs.iter()
    }

    /// Uniform sample without replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<TransitionPair>, AmpError> {
        if n > self.pairs.len() {
            return Err(AmpError::InsufficientSamples { requested: n, available: self.pairs.len() });
        }
        Ok(rand::seq::index::sample(rng, self.pairs.len(), n).into_iter().map(|i| self.pairs[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(v: f64) -> FeatureFrame {
        FeatureFrame([v; FEATURE_DIM])
    }

    fn pair(a: f64, b: f64) -> TransitionPair {
        TransitionPair { current: frame(a), next: frame(b) }
    }

    fn zero_disc() -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(&AmpConfig::default(), &mut rng).unwrap();
        d.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        d
    }

    #[test]
    fn style_reward_values() {
        assert_eq!(style_reward_from_logit(0.0), std::f64::consts::LN_2);
        assert!((style_reward_from_logit(-10.0) - 4.5399e-5).abs() < 1e-9);
        assert_eq!(style_reward_from_logit(1e3), 1000.0);
        assert!(style_reward_from_logit(-1e3) >= 0.0);
    }

    #[test]
    fn zero_network_terms() {
        let d = zero_disc();
        assert_eq!(d.logit(&frame(1.0), &frame(2.0)).unwrap(), 0.0);
        let (loss, _) = d.loss_and_grad(&[pair(0.0, 1.0), pair(1.0, 2.0)], &[pair(3.0, 3.0)]).unwrap();
        assert_eq!(loss.dataset, std::f64::consts::LN_2);
        assert_eq!(loss.policy, std::f64::consts::LN_2);
        assert_eq!(loss.penalty, 0.0);
    }

    #[test]
    fn empty_batch_rejected() {
        let d = zero_disc();
        assert_eq!(d.loss_and_grad(&[], &[pair(0.0, 0.0)]).unwrap_err(), AmpError::EmptyBatch);
    }

    #[test]
    fn logit_composes_normalizer_and_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = Discriminator::new(&AmpConfig::default(), &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..20).map(|i| (0..FEATURE_DIM).map(|k| (i * k) as f64 * 0.1).collect()).collect();
        d.normalizer.update(rows.iter().map(Vec::as_slice)).unwrap();
        let (a, b) = (frame(0.3), frame(-0.7));
        let mut x = d.normalizer.normalize(a.as_slice()).unwrap();
        x.extend(d.normalizer.normalize(b.as_slice()).unwrap());
        assert_eq!(d.logit(&a, &b).unwrap(), d.net.forward(&x).unwrap()[0]);
        let batch = d.logits_batch(&[TransitionPair { current: a, next: b }]);
        assert!((batch[0] - d.logit(&a, &b).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn buffer_fifo_and_sampling() {
        let mut buf = PolicyTransitionBuffer::new(5);
        buf.push((0..10).map(|i| pair(i as f64, 0.0)));
        let kept: Vec<f64> = buf.iter().map(|p| p.current.0[0]).collect();
        assert_eq!(kept, vec![5.0, 6.0, 7.0, 8.0, 9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut all: Vec<f64> = buf.sample(5, &mut rng).unwrap().iter().map(|p| p.current.0[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, kept);
        assert!(matches!(buf.sample(6, &mut rng), Err(AmpError::InsufficientSamples { .. })));
        let a = buf.sample(3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = buf.sample(3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn codec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Discriminator::new(&AmpConfig { hidden: vec![8], ..AmpConfig::default() }, &mut rng).unwrap();
        let mut w = Writer::new();
        d.encode(&mut w);
        let bytes = w.finish();
        assert_eq!(Discriminator::decode(&mut Reader::new(&bytes)).unwrap(), d);
    }
}
