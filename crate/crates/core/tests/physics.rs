use jetamp::dynamics::*;
use jetamp::terrain::{generate, sample_heightmap, HeightField, OutOfRange, TerrainKind, TerrainSpec};
use proptest::prelude::*;

fn flat() -> HeightField {
    HeightField::flat(-100.0, 200.0, 0.1)
}

fn energy(m: &RobotModel, s: &RobotState) -> f64 {
    let v2 = s.velocity[0].powi(2) + s.velocity[1].powi(2);
    0.5 * m.mass * v2 + 0.5 * m.base_inertia * s.angular_velocity.powi(2) + m.mass * m.gravity * s.position[1]
}

fn airborne_state(vx: f64, vz: f64, w: f64, pitch: f64) -> RobotState {
    RobotState {
        position: [0.0, 50.0],
        pitch,
        velocity: [vx, vz],
        angular_velocity: w,
        joints: [0.2, 0.8, -0.2, 0.8],
        ..Default::default()
    }
}

#[test]
fn ballistic_energy_drift_per_step() {
    let m = RobotModel::default();
    let t = flat();
    let mut s = airborne_state(1.3, 4.0, 0.7, 0.1);
    let target = s.joints;
    for _ in 0..600 {
        let next = step_dynamics(&m, &s, &target, 1.0 / 240.0, &t).unwrap();
        let (e0, e1) = (energy(&m, &s), energy(&m, &next));
        assert!((e1 - e0).abs() / e0.abs() < 1e-6, "drift {} -> {}", e0, e1);
        s = next;
    }
}

#[test]
fn hover_thrust_cancels_gravity() {
    let m = RobotModel::default();
    let w = m.weight() / 2.0;
    let s = RobotState { thrust: [w, w], ..airborne_state(0.0, 0.0, 0.0, 0.0) };
    let (force, torque) = base_wrench(&m, &s, &flat());
    assert!(force[0].abs() / m.mass < 1e-6 && force[1].abs() / m.mass < 1e-6);
    assert!(torque.abs() < 1e-9);
}

#[test]
fn settled_robot_carries_its_weight() {
    let m = RobotModel::default();
    let t = flat();
    let q = jetamp::priors::stance_pose(&m, 0.6).unwrap();
    let mut s = RobotState { position: [0.0, 0.6], joints: q, ..Default::default() };
    for _ in 0..(240 * 5) {
        s = step_dynamics(&m, &s, &q, 1.0 / 240.0, &t).unwrap();
    }
    let total: f64 = contact_forces(&m, &s, &t).iter().map(|c| c.normal_force).sum();
    let mg = m.mass * m.gravity;
    assert!((mg - 431.64).abs() < 1e-9);
    assert!((total - mg).abs() / mg < 0.01, "contact {total} vs {mg}");
}

prop_compose! {
    fn any_state()(
        x in -5.0..5.0f64, z in 0.2..1.5f64, pitch in -1.0..1.0f64,
        vx in -3.0..3.0f64, vz in -3.0..3.0f64, w in -3.0..3.0f64,
        hip0 in -1.5..1.5f64, knee0 in 0.0..2.6f64, hip1 in -1.5..1.5f64, knee1 in 0.0..2.6f64,
        qd in prop::array::uniform4(-5.0..5.0f64),
        t0 in 0.0..250.0f64, t1 in 0.0..250.0f64,
    ) -> RobotState {
        RobotState {
            position: [x, z], pitch, velocity: [vx, vz], angular_velocity: w,
            joints: [hip0, knee0, hip1, knee1], joint_velocities: qd, thrust: [t0, t1],
        }
    }
}

proptest! {
    #[test]
    fn contact_forces_respect_sign_and_cone(s in any_state()) {
        let m = RobotModel::default();
        for c in contact_forces(&m, &s, &flat()) {
            prop_assert!(c.normal_force >= 0.0);
            prop_assert!(c.tangential_force.abs() <= m.friction * c.normal_force + 1e-12);
        }
    }

    #[test]
    fn integration_is_bit_deterministic(s in any_state(), target in prop::array::uniform4(-1.5..1.5f64)) {
        let m = RobotModel::default();
        let t = flat();
        let a = step_dynamics(&m, &s, &target, 1.0 / 240.0, &t).unwrap();
        let b = step_dynamics(&m, &s, &target, 1.0 / 240.0, &t).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn thrust_magnitude_is_intensity(s in any_state(), pitch in -10.0..10.0f64) {
        let m = RobotModel::default();
        let s = RobotState { pitch, ..s };
        for (jet, &t) in jet_world_forces(&m, &s).iter().zip(&s.thrust) {
            prop_assert!((jet.force[0].hypot(jet.force[1]) - t).abs() <= 1e-12 * t.max(1.0));
        }
    }

    #[test]
    fn joints_stay_within_limits(s in any_state(), target in prop::array::uniform4(-4.0..4.0f64), steps in 1usize..40) {
        let m = RobotModel::default();
        let t = flat();
        let mut s = s;
        for _ in 0..steps {
            s = match step_dynamics(&m, &s, &target, 1.0 / 240.0, &t) {
                Ok(n) => n,
                Err(_) => break,
            };
            for j in 0..NUM_JOINTS {
                prop_assert!(s.joints[j] >= m.joint_lower[j] && s.joints[j] <= m.joint_upper[j]);
            }
        }
    }

    #[test]
    fn heightmap_is_translation_equivariant(
        samples in prop::collection::vec(-0.5..0.5f64, 20..60),
        base_x in 0.0..1.0f64, base_z in 0.0..2.0f64, shift in -3.0..3.0f64,
    ) {
        let a = HeightField::new(0.0, 0.1, samples.clone(), OutOfRange::Clamp).unwrap();
        let b = HeightField::new(shift, 0.1, samples, OutOfRange::Clamp).unwrap();
        let ha = sample_heightmap(&a, base_x, base_z, 9, 0.1);
        let hb = sample_heightmap(&b, base_x + shift, base_z, 9, 0.1);
        for (u, v) in ha.iter().zip(&hb) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_base_lowers_heightmap(seed in 0u64..1000, base_x in 0.0..20.0f64, dz in 0.0..3.0f64) {
        let spec = TerrainSpec::with_kind(TerrainKind::Rough { amplitude: 0.1, correlation_length: 0.5 }).reseeded(seed);
        let field = generate(&spec).unwrap();
        let lo = sample_heightmap(&field, base_x, 0.6, 9, 0.3);
        let hi = sample_heightmap(&field, base_x, 0.6 + dz, 9, 0.3);
        for (l, h) in lo.iter().zip(&hi) {
            prop_assert!(((l - h) - dz).abs() < 1e-12);
        }
    }

    #[test]
    fn terrain_generation_is_pure(seed in any::<u64>()) {
        for kind in [
            TerrainKind::Rough { amplitude: 0.1, correlation_length: 0.5 },
            TerrainKind::Gaps { gap_width: 0.4, platform_width: 1.0, pit_depth: 1.0 },
            TerrainKind::SteppingStones { stone_width: 0.3, pitch: 0.6, pit_depth: 1.0 },
        ] {
            let spec = TerrainSpec::with_kind(kind).reseeded(seed);
            prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }
}
