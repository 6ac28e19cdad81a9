use jetamp::amp::{softplus, style_reward_from_logit, AmpConfig, Discriminator, DISC_INPUT_DIM};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_disc(grad_penalty: f64, lr: f64, seed: u64) -> Discriminator {
    let cfg = AmpConfig { hidden: vec![16, 8], grad_penalty, learning_rate: lr, ..AmpConfig::default() };
    Discriminator::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn blobs(n: usize, centre: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, DISC_INPUT_DIM), |_| centre + rng.random_range(-0.5..0.5))
}

#[test]
fn full_objective_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let disc = small_disc(10.0, 1e-4, 1);
    let mut net = disc.net.clone();
    for p in net.params_mut() {
        *p = rng.random_range(-0.4..0.4);
    }
    let xd = blobs(6, 0.5, &mut rng);
    let xp = blobs(5, -0.5, &mut rng);
    let (_, grad) = disc.loss_and_grad_inputs(&net, xd.view(), xp.view()).unwrap();
    let total = |n: &jetamp::approx::Mlp| disc.loss_and_grad_inputs(n, xd.view(), xp.view()).unwrap().0.total(10.0);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = total(&net);
        net.params_mut()[i] = orig - h;
        let down = total(&net);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-4));
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn separable_terms_fall_monotonically_without_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut disc = small_disc(0.0, 1e-4, 2);
    let xd = blobs(64, 1.0, &mut rng);
    let xp = blobs(64, -1.0, &mut rng);
    let mut prev = f64::INFINITY;
    for k in 0..50 {
        let l = disc.update_inputs(xd.view(), xp.view()).unwrap();
        let sum = l.dataset + l.policy;
        assert!(sum < prev, "update {k}: {sum} >= {prev}");
        prev = sum;
    }
}

proptest! {
    #[test]
    fn style_reward_is_increasing_and_non_negative(a in -50.0..50.0f64, gap in 1e-6..10.0f64) {
        let (ra, rb) = (style_reward_from_logit(a), style_reward_from_logit(a + gap));
        prop_assert!(ra >= 0.0);
        prop_assert!(rb > ra);
        prop_assert!((ra - softplus(a)).abs() < 1e-12);
    }
}
