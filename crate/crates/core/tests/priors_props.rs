use jetamp::dynamics::{forward_kinematics, leg_foot_from_hip, RobotModel, NUM_JOINTS, NUM_LEGS};
use jetamp::priors::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const JOINTS: usize = 5;
const JOINT_VELOCITIES: usize = 9;
const THRUST: usize = 17;

#[test]
fn fk_of_ik_round_trips_over_1000_targets() {
    let m = RobotModel::default();
    let (l1, l2) = (m.thigh_length, m.shank_length);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r = rng.random_range((l1 - l2).abs() + 1e-3..l1 + l2 - 1e-6);
        let a = rng.random_range(-2.5..2.5f64);
        let target = [r * a.sin(), -r * a.cos()];
        let (hip, knee) = leg_ik(target, l1, l2).unwrap();
        let p = leg_foot_from_hip(l1, l2, hip, knee);
        worst = worst.max((p[0] - target[0]).hypot(p[1] - target[1]));
    }
    assert!(worst < 1e-9, "worst {worst}");
}

#[test]
fn walk_stance_feet_do_not_slide() {
    let m = RobotModel::default();
    for gait in [GaitParams::default(), GaitParams { stride: 0.3, cycle: 0.8, ..GaitParams::default() }] {
        let traj = walk_trajectory(&m, &gait).unwrap();
        let mut anchor: [Option<[f64; 2]>; NUM_LEGS] = [None; NUM_LEGS];
        for (k, s) in traj.states.iter().enumerate() {
            let fk = forward_kinematics(&m, s);
            for leg in 0..NUM_LEGS {
                if traj.stance[k][leg] {
                    let a = *anchor[leg].get_or_insert(fk.world[leg]);
                    let drift = (fk.world[leg][0] - a[0]).hypot(fk.world[leg][1] - a[1]);
                    assert!(drift < 1e-3, "leg {leg} frame {k} drift {drift}");
                } else {
                    anchor[leg] = None;
                }
            }
        }
        let clip = generate_walk_clip(&m, &gait).unwrap();
        assert!(clip.frames.iter().all(|f| f.thrust() == [0.0, 0.0]));
    }
}

#[test]
fn hover_clip_thrust_is_half_weight() {
    let m = RobotModel::default();
    let p = FlightEndpoint::at_rest([0.0, 2.0]);
    let clip = generate_flight_clip(&m, &p, &p, 2.0).unwrap();
    for f in &clip.frames {
        for t in f.thrust() {
            assert!((t - 215.82).abs() < 1e-9, "{t}");
        }
    }
}

#[test]
fn pair_sampling_is_uniform_across_clips() {
    // clips of 10 and 30 frames have 9 and 29 pairs
    let mk = |n: usize, tag: f64| MotionClip {
        rate_hz: CONTROL_RATE_HZ,
        label: ClipLabel::Walk,
        frames: (0..n)
            .map(|i| {
                let mut f = [0.0; FEATURE_DIM];
                f[0] = tag;
                f[1] = i as f64;
                FeatureFrame(f)
            })
            .collect(),
    };
    let d = MotionDataset::new(vec![mk(10, 0.0), mk(30, 1.0)]);
    let draws = 100_000;
    let pairs = sample_transitions(&d, draws, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let mut counts = vec![0usize; 38];
    for p in &pairs {
        assert_eq!(p.next.0[1], p.current.0[1] + 1.0);
        assert_eq!(p.next.0[0], p.current.0[0]);
        let idx = if p.current.0[0] == 0.0 { p.current.0[1] as usize } else { 9 + p.current.0[1] as usize };
        counts[idx] += 1;
    }
    let expected = draws as f64 / 38.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 37 degrees of freedom, 0.999 quantile
    assert!(chi2 < 69.35, "chi2 {chi2}");
    let first: usize = counts[..9].iter().sum();
    let ratio = first as f64 / (draws - first) as f64;
    assert!((ratio - 9.0 / 29.0).abs() < 0.02, "ratio {ratio}");
}

fn check_fd_velocities(clip: &MotionClip) {
    let dt = 1.0 / clip.rate_hz;
    for w in clip.frames.windows(2) {
        for j in 0..NUM_JOINTS {
            let fd = (w[1].0[JOINTS + j] - w[0].0[JOINTS + j]) / dt;
            assert!((fd - w[0].0[JOINT_VELOCITIES + j]).abs() < 1e-6);
        }
    }
}

fn knee_signs_constant(clip: &MotionClip) -> bool {
    [1usize, 3].iter().all(|&k| {
        let s: Vec<bool> = clip.frames.iter().map(|f| f.joints()[k] >= 0.0).collect();
        s.windows(2).all(|w| w[0] == w[1])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn walk_clip_construction_invariants(stride in 0.1..0.5f64, cycle in 0.7..1.3f64, height in 0.5..0.65f64) {
        let m = RobotModel::default();
        let gait = GaitParams { stride, cycle, base_height: height, ..GaitParams::default() };
        let clip = generate_walk_clip(&m, &gait).unwrap();
        prop_assert!(clip.frames.len() >= 2);
        prop_assert_eq!(clip.rate_hz, CONTROL_RATE_HZ);
        prop_assert!(clip.frames.iter().all(|f| f.0[THRUST] == 0.0 && f.0[THRUST + 1] == 0.0));
        prop_assert!(knee_signs_constant(&clip));
        check_fd_velocities(&clip);
    }

    #[test]
    fn flight_clip_invariants(
        z0 in 0.6..4.0f64, x1 in 0.0..4.0f64, z1 in 0.6..4.0f64, duration in 2.0..5.0f64,
    ) {
        let m = RobotModel::default();
        let (a, b) = (FlightEndpoint::at_rest([0.0, z0]), FlightEndpoint::at_rest([x1, z1]));
        let traj = QuinticTrajectory::new(&a, &b, duration).unwrap();
        for (t, e) in [(0.0, &a), (duration, &b)] {
            let (p, v, acc) = (traj.position(t), traj.velocity(t), traj.acceleration(t));
            for k in 0..2 {
                prop_assert!((p[k] - e.position[k]).abs() < 1e-9);
                prop_assert!((v[k] - e.velocity[k]).abs() < 1e-9);
                prop_assert!((acc[k] - e.acceleration[k]).abs() < 1e-9);
            }
        }
        match generate_flight_clip(&m, &a, &b, duration) {
            Ok(clip) => {
                prop_assert_eq!(clip.rate_hz, CONTROL_RATE_HZ);
                for f in &clip.frames {
                    for t in f.thrust() {
                        prop_assert!((0.0..=m.max_thrust).contains(&t));
                    }
                }
                prop_assert!(knee_signs_constant(&clip));
                check_fd_velocities(&clip);
            }
            Err(PriorError::InfeasibleThrust { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn dataset_codec_round_trips(seed in any::<u64>()) {
        let m = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut clips = default_walk_clips(&m, 2, &mut rng).unwrap();
        clips.extend(default_flight_clips(&m, 2, &mut rng).unwrap());
        let d = MotionDataset::new(clips);
        let back = decode_dataset(&encode_dataset(&d)).unwrap();
        prop_assert_eq!(back, d);
    }
}
