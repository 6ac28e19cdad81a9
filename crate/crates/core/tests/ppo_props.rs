use jetamp::amp::{AmpConfig, Discriminator};
use jetamp::dynamics::RobotModel;
use jetamp::envtask::EnvConfig;
use jetamp::ppo::*;
use jetamp::priors::{default_flight_clips, default_walk_clips, sample_transitions, MotionDataset};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Advantage at `t` as an explicit truncated sum of discounted TD errors.
fn brute_force_gae(r: &[f64], v: &[f64], nv: &[f64], end: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    (0..r.len())
        .map(|t| {
            let mut sum = 0.0;
            for k in t..r.len() {
                let delta = r[k] + gamma * nv[k] - v[k];
                sum += (gamma * lambda).powi((k - t) as i32) * delta;
                if end[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

#[test]
fn gae_matches_brute_force_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 50;
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let end: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        // terminal steps carry no bootstrap; others bootstrap from the next value
        let nv: Vec<f64> = (0..n)
            .map(|t| if end[t] && rng.random_bool(0.5) { 0.0 } else { rng.random_range(-2.0..2.0) })
            .collect();
        let (adv, ret) = gae(&r, &v, &nv, &end, 0.99, 0.95);
        let oracle = brute_force_gae(&r, &v, &nv, &end, 0.99, 0.95);
        for t in 0..n {
            worst = worst.max((adv[t] - oracle[t]).abs());
            assert!((ret[t] - (adv[t] + v[t])).abs() < 1e-12);
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

proptest! {
    #[test]
    fn surrogate_gradient_vanishes_past_the_clip(log_ratio in -1.0..1.0f64, adv in -3.0..3.0f64) {
        let clip = 0.2;
        let ratio: f64 = log_ratio.exp();
        let (value, grad) = clipped_surrogate(log_ratio, adv, clip);
        let beyond = (adv > 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip);
        if beyond {
            prop_assert_eq!(grad, 0.0);
            prop_assert!((value - ratio.clamp(1.0 - clip, 1.0 + clip) * adv).abs() < 1e-12);
        } else {
            let h = 1e-6;
            let fd = (clipped_surrogate(log_ratio + h, adv, clip).0 - clipped_surrogate(log_ratio - h, adv, clip).0) / (2.0 * h);
            prop_assert!((grad - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn advantage_normalisation_preserves_the_best_action(adv in prop::collection::vec(-10.0..10.0f64, 2..40)) {
        let argmax = |a: &[f64]| a.iter().enumerate().fold(0, |b, (i, &x)| if x > a[b] { i } else { b });
        let mut n = adv.clone();
        normalize_advantages(&mut n);
        prop_assert_eq!(argmax(&adv), argmax(&n));
        for i in 0..adv.len() {
            for j in 0..adv.len() {
                if adv[i] < adv[j] {
                    prop_assert!(n[i] < n[j]);
                }
            }
        }
    }
}

fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        ppo: PpoConfig {
            actors: 4,
            horizon: 16,
            minibatch: 32,
            policy_hidden: vec![16, 16],
            value_hidden: vec![16, 16],
            ..PpoConfig::default()
        },
        amp: AmpConfig { hidden: vec![16, 16], batch_size: 32, ..AmpConfig::default() },
        env: EnvConfig::default(),
        seed,
        iterations: 3,
        parallel: false,
    }
}

fn priors() -> MotionDataset {
    let m = RobotModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut clips = default_walk_clips(&m, 2, &mut rng).unwrap();
    clips.extend(default_flight_clips(&m, 2, &mut rng).unwrap());
    MotionDataset::new(clips)
}

#[test]
fn single_worker_training_is_deterministic() {
    let run = || train(tiny_config(5), Some(priors()), |_, _| Ok(())).unwrap();
    let (ta, ra) = run();
    let (tb, rb) = run();
    let bits = |rows: &[MetricsRow]| serde_json::to_string(rows).unwrap();
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(ta.checkpoint().to_bytes(), tb.checkpoint().to_bytes());
}

#[test]
fn parallel_stepping_matches_serial() {
    let serial = train(tiny_config(6), Some(priors()), |_, _| Ok(())).unwrap().1;
    let parallel = train(TrainConfig { parallel: true, ..tiny_config(6) }, Some(priors()), |_, _| Ok(())).unwrap().1;
    assert_eq!(serde_json::to_string(&serial).unwrap(), serde_json::to_string(&parallel).unwrap());
}

#[test]
fn checkpoint_round_trip_reproduces_evaluation() {
    let (trainer, _) = train(tiny_config(7), Some(priors()), |_, _| Ok(())).unwrap();
    let ck = trainer.checkpoint();
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    assert_eq!(back.to_bytes(), ck.to_bytes());
    let env = EnvConfig { max_steps: 120, ..EnvConfig::default() };
    let a = evaluate(&ck, &env, 2, true, 40).unwrap();
    let b = evaluate(&back, &env, 2, true, 40).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let mut bytes = ck.to_bytes();
    bytes.push(0);
    assert!(Checkpoint::from_bytes(&bytes).is_err());
}

#[test]
fn discriminator_updates_leave_stored_log_probs_intact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let obs_dim = EnvConfig::default().observation_dim();
    let policy = GaussianPolicy::new(obs_dim, &[16, 16], -1.0, 10.0, &mut rng);
    let mut buf = RolloutBuffer::new(2, 8, obs_dim);
    for k in 0..buf.len() {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = policy.normalize(&obs).unwrap();
        let (_, raw, lp) = policy.sample_action(&obs, &mut rng).unwrap();
        buf.observations.row_mut(k).assign(&ndarray::ArrayView1::from(&x));
        buf.actions.row_mut(k).assign(&ndarray::ArrayView1::from(&raw));
        buf.log_probs[k] = lp;
    }
    let before = policy.clone();
    let data = priors();
    let mut disc = Discriminator::new(&AmpConfig { hidden: vec![16, 16], ..AmpConfig::default() }, &mut rng).unwrap();
    disc.fit_normalizer(&data).unwrap();
    for _ in 0..5 {
        let d = sample_transitions(&data, 32, &mut rng).unwrap();
        let p = sample_transitions(&data, 32, &mut rng).unwrap();
        disc.update(&d, &p).unwrap();
    }
    assert_eq!(policy, before);
    assert!(audit_log_probs(&policy, &buf).unwrap() < 1e-12);
}
