use std::sync::Arc;

use jetamp::envtask::*;
use jetamp::terrain::HeightField;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn reward_constants() {
    let w = RewardWeights::default();
    assert!((checkpoint_reward(2.0, w.c1) - (-2.0f64).exp()).abs() < 1e-12);
    assert_eq!(velocity_reward(0.8, 0.8, w.c2), 1.0);
    assert_eq!(thrust_penalty(&[125.0, 125.0], 250.0), -0.5);
    let ones = TaskTerms { r_c: 1.0, r_v: 1.0, r_f: 1.0, r_t: 0.0 };
    assert!((total_task_reward(&ones, &w) - 1.0).abs() < 1e-15);
}

#[test]
fn peak_at_target_approached_at_desired_speed() {
    let w = RewardWeights::default();
    assert_eq!(checkpoint_reward(0.0, w.c1), 1.0);
    assert_eq!(velocity_reward(0.8, 0.8, w.c2), 1.0);
}

#[test]
fn fall_threshold_is_exclusive() {
    assert!(!is_fall(0.4, 0.4));
    assert!(is_fall(0.4 - 1e-12, 0.4));
    assert!(!is_fall(0.4 + 1e-12, 0.4));
}

#[test]
fn spawn_offsets_are_uniform() {
    let cfg = WaypointConfig::default();
    let terrain = HeightField::flat(-10.0, 50.0, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let mut d: Vec<f64> = (0..n)
        .map(|i| spawn_waypoint(&cfg, TaskSchedule::GroundOnly, i, 1.0, &terrain, &mut rng).target[0] - 1.0)
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (cfg.spawn_min, cfg.spawn_max);
    let cdf = |x: f64| ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    let ks = d
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic critical value at alpha = 0.01
    assert!(ks < 1.628 / (n as f64).sqrt(), "KS statistic {ks}");
    assert!(d.iter().all(|&x| (lo..hi).contains(&x)));
}

proptest! {
    #[test]
    fn reward_terms_stay_in_range(
        bx in -5.0..5.0f64, bz in 0.0..5.0f64, tx in -5.0..5.0f64, tz in 0.0..5.0f64,
        pitch in -7.0..7.0f64, speed in -5.0..5.0f64, t0 in 0.0..250.0f64, t1 in 0.0..250.0f64,
    ) {
        let w = RewardWeights::default();
        let d = distance([bx, bz], [tx, tz]);
        let rc = checkpoint_reward(d, w.c1);
        let rv = velocity_reward(speed, 0.8, w.c2);
        prop_assert!(rc > 0.0 && rc <= 1.0);
        prop_assert!(rv > 0.0 && rv <= 1.0);
        let lit = facing_reward([bx, bz], pitch, [tx, tz], FacingForm::Min);
        let alt = facing_reward([bx, bz], pitch, [tx, tz], FacingForm::Max);
        prop_assert!((-1.0..=0.0).contains(&lit));
        prop_assert!((0.0..=1.0).contains(&alt));
        let rt = thrust_penalty(&[t0, t1], 250.0);
        prop_assert!((-2.0..=0.0).contains(&rt));
    }

    #[test]
    fn total_reward_reconstructs(seed in any::<u64>(), style in 0.0..5.0f64, steps in 1usize..30) {
        let cfg = Arc::new(EnvConfig::default());
        let mut env = Env::new(cfg.clone(), None, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = &cfg.weights;
        for _ in 0..steps {
            let a: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phys = cfg.physical_action(env.stance(), &a);
            let mut r = env.step(&phys).unwrap();
            r.set_style(style, w);
            let b = &r.rewards;
            let task = w.w_c * b.terms.r_c + w.w_v * b.terms.r_v + w.w_f * b.terms.r_f + w.w_t * b.terms.r_t;
            prop_assert!((b.task - task).abs() < 1e-12);
            prop_assert!((b.total - (w.w_g * task + w.w_s * style)).abs() < 1e-12);
            if r.done {
                break;
            }
        }
    }
}
