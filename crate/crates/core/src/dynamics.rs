//! Planar floating-base robot: a rigid base carrying two 2-link legs
//! (massless limbs) and two body-mounted jets, PD joint actuation and
//! spring-damper ground contact.
//!
//! Frames: world x forward, z up. Body rotation `R(pitch)` is the standard
//! 2-D rotation, so positive pitch turns the body x axis toward world z.
//! Joint order is `[hip0, knee0, hip1, knee1]`. Hip angle is measured from
//! straight down, positive toward +x; knee flexion is positive and swings
//! the shank backward.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terrain::HeightField;

pub const NUM_JOINTS: usize = 4;
pub const NUM_JETS: usize = 2;
pub const NUM_LEGS: usize = 2;

pub type Vec2 = [f64; 2];

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("non-finite state after integration step")]
    NonFiniteState,
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("cannot read robot model: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse robot model: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub mass: f64,
    pub base_inertia: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    /// Hip joint positions in the body frame, one per leg.
    pub hip_mounts: [Vec2; NUM_LEGS],
    /// Jet attachment points in the body frame.
    pub jet_mounts: [Vec2; NUM_JETS],
    pub max_thrust: f64,
    pub joint_lower: [f64; NUM_JOINTS],
    pub joint_upper: [f64; NUM_JOINTS],
    pub kp: [f64; NUM_JOINTS],
    pub kd: [f64; NUM_JOINTS],
    pub torque_limit: f64,
    /// Reflected inertia of each joint under the massless-limb approximation.
    pub joint_inertia: f64,
    pub joint_damping: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub tangential_damping: f64,
    pub friction: f64,
    pub gravity: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            mass: 44.0,
            base_inertia: 3.0,
            thigh_length: 0.35,
            shank_length: 0.35,
            hip_mounts: [[0.1, -0.05], [-0.1, -0.05]],
            jet_mounts: [[0.2, 0.15], [-0.2, 0.15]],
            max_thrust: 250.0,
            joint_lower: [-1.5, 0.0, -1.5, 0.0],
            joint_upper: [1.5, 2.6, 1.5, 2.6],
            kp: [150.0; NUM_JOINTS],
            kd: [5.0; NUM_JOINTS],
            torque_limit: 100.0,
            joint_inertia: 0.05,
            joint_damping: 0.1,
            contact_stiffness: 1e4,
            contact_damping: 200.0,
            tangential_damping: 300.0,
            friction: 0.8,
            gravity: 9.81,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidModel(msg));
        let positive = [
            ("mass", self.mass),
            ("base_inertia", self.base_inertia),
            ("thigh_length", self.thigh_length),
            ("shank_length", self.shank_length),
            ("max_thrust", self.max_thrust),
            ("joint_inertia", self.joint_inertia),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        let non_negative = [
            ("torque_limit", self.torque_limit),
            ("joint_damping", self.joint_damping),
            ("contact_stiffness", self.contact_stiffness),
            ("contact_damping", self.contact_damping),
            ("tangential_damping", self.tangential_damping),
            ("friction", self.friction),
            ("gravity", self.gravity),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        for j in 0..NUM_JOINTS {
            if !(self.kp[j] >= 0.0) || !(self.kd[j] >= 0.0) {
                return bad(format!("joint {j}: gains must be >= 0"));
            }
            if !(self.joint_lower[j] < self.joint_upper[j]) {
                return bad(format!("joint {j}: lower limit must be below upper limit"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DynamicsError> {
        let model: Self = toml::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DynamicsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn clamp_joints(&self, q: &mut [f64; NUM_JOINTS]) {
        for j in 0..NUM_JOINTS {
            q[j] = q[j].clamp(self.joint_lower[j], self.joint_upper[j]);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    pub pitch: f64,
    pub velocity: Vec2,
    pub angular_velocity: f64,
    pub joints: [f64; NUM_JOINTS],
    pub joint_velocities: [f64; NUM_JOINTS],
    pub thrust: [f64; NUM_JETS],
}

impl RobotState {
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.pitch.is_finite()
            && self.velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.is_finite()
            && self.joints.iter().all(|v| v.is_finite())
            && self.joint_velocities.iter().all(|v| v.is_finite())
            && self.thrust.iter().all(|v| v.is_finite())
    }

    /// Body-to-world rotation applied to a body-frame vector.
    pub fn to_world(&self, v: Vec2) -> Vec2 {
        rotate(self.pitch, v)
    }

    /// World-to-body rotation.
    pub fn to_body(&self, v: Vec2) -> Vec2 {
        rotate(-self.pitch, v)
    }
}

pub fn rotate(angle: f64, v: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Planar cross product `a × b` (the out-of-plane component).
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Foot position relative to its hip for the given hip/knee angles.
pub fn leg_foot_from_hip(thigh: f64, shank: f64, hip: f64, knee: f64) -> Vec2 {
    let shank_angle = hip - knee;
    [
        thigh * hip.sin() + shank * shank_angle.sin(),
        -thigh * hip.cos() - shank * shank_angle.cos(),
    ]
}

/// Jacobian of `leg_foot_from_hip` with respect to (hip, knee), column-major.
fn leg_jacobian(thigh: f64, shank: f64, hip: f64, knee: f64) -> [Vec2; 2] {
    let shank_angle = hip - knee;
    let d_hip = [
        thigh * hip.cos() + shank * shank_angle.cos(),
        thigh * hip.sin() + shank * shank_angle.sin(),
    ];
    let d_knee = [-shank * shank_angle.cos(), -shank * shank_angle.sin()];
    [d_hip, d_knee]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootPositions {
    /// Body-frame positions (depend only on joint angles).
    pub base: [Vec2; NUM_LEGS],
    pub world: [Vec2; NUM_LEGS],
}

pub fn forward_kinematics(model: &RobotModel, state: &RobotState) -> FootPositions {
    let mut base = [[0.0; 2]; NUM_LEGS];
    let mut world = [[0.0; 2]; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let rel = leg_foot_from_hip(
            model.thigh_length,
            model.shank_length,
            state.joints[2 * leg],
            state.joints[2 * leg + 1],
        );
        let mount = model.hip_mounts[leg];
        base[leg] = [mount[0] + rel[0], mount[1] + rel[1]];
        let r = state.to_world(base[leg]);
        world[leg] = [state.position[0] + r[0], state.position[1] + r[1]];
    }
    FootPositions { base, world }
}

/// World-frame foot velocities (base motion plus leg motion).
pub fn foot_velocities(model: &RobotModel, state: &RobotState, feet: &FootPositions) -> [Vec2; NUM_LEGS] {
    let mut out = [[0.0; 2]; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let (hip, knee) = (state.joints[2 * leg], state.joints[2 * leg + 1]);
        let jac = leg_jacobian(model.thigh_length, model.shank_length, hip, knee);
        let (dh, dk) = (state.joint_velocities[2 * leg], state.joint_velocities[2 * leg + 1]);
        let rel_body = [jac[0][0] * dh + jac[1][0] * dk, jac[0][1] * dh + jac[1][1] * dk];
        let rel_world = state.to_world(rel_body);
        let r = [feet.world[leg][0] - state.position[0], feet.world[leg][1] - state.position[1]];
        let w = state.angular_velocity;
        out[leg] = [
            state.velocity[0] - w * r[1] + rel_world[0],
            state.velocity[1] + w * r[0] + rel_world[1],
        ];
    }
    out
}

/// PD joint torques, each clamped to ±`torque_limit`.
pub fn pd_torques(model: &RobotModel, state: &RobotState, target: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
    let mut tau = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let raw = model.kp[j] * (target[j] - state.joints[j]) - model.kd[j] * state.joint_velocities[j];
        tau[j] = raw.clamp(-model.torque_limit, model.torque_limit);
    }
    tau
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JetForce {
    pub force: Vec2,
    /// Pitch torque about the base centre.
    pub torque: f64,
}

pub fn jet_world_forces(model: &RobotModel, state: &RobotState) -> [JetForce; NUM_JETS] {
    let mut out = [JetForce { force: [0.0; 2], torque: 0.0 }; NUM_JETS];
    for (i, jet) in out.iter_mut().enumerate() {
        let force = state.to_world([0.0, state.thrust[i]]);
        let offset = state.to_world(model.jet_mounts[i]);
        *jet = JetForce { force, torque: cross(offset, force) };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPoint {
    pub foot: usize,
    pub position: Vec2,
    pub penetration: f64,
    pub normal_force: f64,
    pub tangential_force: f64,
    pub in_contact: bool,
}

pub fn contact_forces(model: &RobotModel, state: &RobotState, terrain: &HeightField) -> [ContactPoint; NUM_LEGS] {
    let feet = forward_kinematics(model, state);
    let vel = foot_velocities(model, state, &feet);
    let mut out = [ContactPoint {
        foot: 0,
        position: [0.0; 2],
        penetration: 0.0,
        normal_force: 0.0,
        tangential_force: 0.0,
        in_contact: false,
    }; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let p = feet.world[leg];
        let depth = (terrain.height_at(p[0]) - p[1]).max(0.0);
        let mut c = ContactPoint {
            foot: leg,
            position: p,
            penetration: depth,
            normal_force: 0.0,
            tangential_force: 0.0,
            in_contact: depth > 0.0,
        };
        if c.in_contact {
            c.normal_force = (model.contact_stiffness * depth - model.contact_damping * vel[leg][1]).max(0.0);
            let cone = model.friction * c.normal_force;
            c.tangential_force = (-model.tangential_damping * vel[leg][0]).clamp(-cone, cone);
        }
        out[leg] = c;
    }
    out
}

/// Net force and pitch torque on the base from gravity, jets and contacts.
pub fn base_wrench(model: &RobotModel, state: &RobotState, terrain: &HeightField) -> (Vec2, f64) {
    let mut force = [0.0, -model.mass * model.gravity];
    let mut torque = 0.0;
    for jet in jet_world_forces(model, state) {
        force[0] += jet.force[0];
        force[1] += jet.force[1];
        torque += jet.torque;
    }
    for c in contact_forces(model, state, terrain) {
        if !c.in_contact {
            continue;
        }
        let f = [c.tangential_force, c.normal_force];
        let r = [c.position[0] - state.position[0], c.position[1] - state.position[1]];
        force[0] += f[0];
        force[1] += f[1];
        torque += cross(r, f);
    }
    (force, torque)
}

/// One integration step of length `dt`.
///
/// Velocities are advanced first; positions then move with the mean of old
/// and new velocity, which is exact for constant acceleration (ballistic
/// flight conserves energy to round-off). Thrusts are carried unchanged.
pub fn step_dynamics(
    model: &RobotModel,
    state: &RobotState,
    target: &[f64; NUM_JOINTS],
    dt: f64,
    terrain: &HeightField,
) -> Result<RobotState, DynamicsError> {
    let (force, torque) = base_wrench(model, state, terrain);
    let tau = pd_torques(model, state, target);
    let mut next = *state;

    for k in 0..2 {
        let acc = force[k] / model.mass;
        next.velocity[k] = state.velocity[k] + acc * dt;
        next.position[k] = state.position[k] + 0.5 * (state.velocity[k] + next.velocity[k]) * dt;
    }
    let alpha = torque / model.base_inertia;
    next.angular_velocity = state.angular_velocity + alpha * dt;
    next.pitch = state.pitch + 0.5 * (state.angular_velocity + next.angular_velocity) * dt;

    for j in 0..NUM_JOINTS {
        let qdd = (tau[j] - model.joint_damping * state.joint_velocities[j]) / model.joint_inertia;
        let qd = state.joint_velocities[j] + qdd * dt;
        let mut q = state.joints[j] + 0.5 * (state.joint_velocities[j] + qd) * dt;
        let mut qd_out = qd;
        if q <= model.joint_lower[j] {
            q = model.joint_lower[j];
            qd_out = qd_out.max(0.0);
        } else if q >= model.joint_upper[j] {
            q = model.joint_upper[j];
            qd_out = qd_out.min(0.0);
        }
        next.joints[j] = q;
        next.joint_velocities[j] = qd_out;
    }

    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFiniteState)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn equal_legs(l: f64) -> RobotModel {
        RobotModel { thigh_length: l, shank_length: l, ..RobotModel::default() }
    }

    fn flat() -> HeightField {
        HeightField::flat(-50.0, 100.0, 0.1)
    }

    #[test]
    fn zero_angles_hang_straight_down() {
        let m = equal_legs(0.3);
        let s = RobotState::default();
        let fk = forward_kinematics(&m, &s);
        for leg in 0..NUM_LEGS {
            let h = m.hip_mounts[leg];
            assert!((fk.base[leg][0] - h[0]).abs() < 1e-15);
            assert!((fk.base[leg][1] - (h[1] - 0.6)).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_hip_points_forward() {
        let m = equal_legs(0.3);
        let s = RobotState { joints: [FRAC_PI_2, 0.0, FRAC_PI_2, 0.0], ..Default::default() };
        let fk = forward_kinematics(&m, &s);
        let h = m.hip_mounts[0];
        assert!((fk.base[0][0] - (h[0] + 0.6)).abs() < 1e-12);
        assert!((fk.base[0][1] - h[1]).abs() < 1e-12);
    }

    #[test]
    fn world_feet_are_rotated_and_translated_base_feet() {
        let m = RobotModel::default();
        let s = RobotState {
            position: [1.3, 0.9],
            pitch: 0.7,
            joints: [0.3, 1.1, -0.4, 0.5],
            ..Default::default()
        };
        let fk = forward_kinematics(&m, &s);
        let (c, sn) = (0.7f64.cos(), 0.7f64.sin());
        for leg in 0..NUM_LEGS {
            let b = fk.base[leg];
            let expect = [1.3 + c * b[0] - sn * b[1], 0.9 + sn * b[0] + c * b[1]];
            assert!((fk.world[leg][0] - expect[0]).abs() < 1e-12);
            assert!((fk.world[leg][1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn foot_velocity_matches_finite_difference() {
        let m = RobotModel::default();
        let s = RobotState {
            position: [0.2, 0.8],
            pitch: 0.3,
            velocity: [0.4, -0.2],
            angular_velocity: 0.9,
            joints: [0.3, 1.1, -0.4, 0.5],
            joint_velocities: [1.0, -2.0, 0.5, 0.7],
            ..Default::default()
        };
        let h = 1e-7;
        let mut ahead = s;
        ahead.position = [s.position[0] + h * s.velocity[0], s.position[1] + h * s.velocity[1]];
        ahead.pitch += h * s.angular_velocity;
        for j in 0..NUM_JOINTS {
            ahead.joints[j] += h * s.joint_velocities[j];
        }
        let f0 = forward_kinematics(&m, &s);
        let f1 = forward_kinematics(&m, &ahead);
        let v = foot_velocities(&m, &s, &f0);
        for leg in 0..NUM_LEGS {
            for k in 0..2 {
                let fd = (f1.world[leg][k] - f0.world[leg][k]) / h;
                assert!((fd - v[leg][k]).abs() < 1e-5, "leg {leg} axis {k}");
            }
        }
    }

    #[test]
    fn pd_examples() {
        let m = RobotModel { kp: [100.0; 4], kd: [5.0; 4], ..RobotModel::default() };
        let s = RobotState { joints: [0.2; 4], ..Default::default() };
        assert_eq!(pd_torques(&m, &s, &[0.2; 4]), [0.0; 4]);
        let s = RobotState { joints: [0.0; 4], joint_velocities: [1.0; 4], ..Default::default() };
        let tau = pd_torques(&m, &s, &[0.1; 4]);
        for t in tau {
            assert!((t - 5.0).abs() < 1e-12);
        }
        let tau = pd_torques(&m, &RobotState::default(), &[10.0, -10.0, 10.0, 10.0]);
        assert_eq!(tau, [100.0, -100.0, 100.0, 100.0]);
    }

    #[test]
    fn jets_upright_and_sideways() {
        let m = RobotModel::default();
        let s = RobotState { thrust: [100.0, 100.0], ..Default::default() };
        let jets = jet_world_forces(&m, &s);
        let total = [jets[0].force[0] + jets[1].force[0], jets[0].force[1] + jets[1].force[1]];
        assert_eq!(total, [0.0, 200.0]);
        assert!((jets[0].torque + jets[1].torque).abs() < 1e-12);

        let s = RobotState { pitch: FRAC_PI_2, thrust: [100.0, 0.0], ..Default::default() };
        let jets = jet_world_forces(&m, &s);
        // R(pi/2) (0, 1) = (-1, 0)
        assert!((jets[0].force[0] + 100.0).abs() < 1e-12);
        assert!(jets[0].force[1].abs() < 1e-12);
    }

    #[test]
    fn contact_examples() {
        let m = RobotModel { contact_stiffness: 1e5, ..RobotModel::default() };
        let terrain = flat();
        let mut s = RobotState::default();
        let fk = forward_kinematics(&m, &s);
        let lowest = fk.base[0][1];
        s.position[1] = -lowest + 0.01;
        let c = contact_forces(&m, &s, &terrain);
        assert!(c.iter().all(|c| !c.in_contact && c.normal_force == 0.0 && c.tangential_force == 0.0));

        s.position[1] = -lowest - 0.001;
        let c = contact_forces(&m, &s, &terrain);
        for c in c {
            assert!((c.penetration - 0.001).abs() < 1e-12);
            assert!((c.normal_force - 100.0).abs() < 1e-6);
        }

        s.velocity = [5.0, 0.0];
        for c in contact_forces(&m, &s, &terrain) {
            assert!((c.tangential_force.abs() - m.friction * c.normal_force).abs() < 1e-9);
            assert!(c.tangential_force < 0.0);
        }
    }

    #[test]
    fn hover_force_balance() {
        let m = RobotModel::default();
        let hover = m.weight() / 2.0;
        let s = RobotState { position: [0.0, 5.0], thrust: [hover, hover], ..Default::default() };
        let (f, t) = base_wrench(&m, &s, &flat());
        assert!((f[0] / m.mass).abs() < 1e-6 && (f[1] / m.mass).abs() < 1e-6);
        assert!(t.abs() < 1e-9);
    }

    #[test]
    fn free_fall_loses_g_dt_per_step() {
        let m = RobotModel::default();
        let dt = 1.0 / 240.0;
        let mut s = RobotState { position: [0.0, 10.0], ..Default::default() };
        for _ in 0..10 {
            let n = step_dynamics(&m, &s, &[0.0; 4], dt, &flat()).unwrap();
            assert!((n.velocity[1] - (s.velocity[1] - m.gravity * dt)).abs() < 1e-12);
            s = n;
        }
    }

    #[test]
    fn joints_stay_within_limits() {
        let m = RobotModel::default();
        let mut s = RobotState { position: [0.0, 5.0], ..Default::default() };
        for _ in 0..500 {
            s = step_dynamics(&m, &s, &[5.0, 5.0, -5.0, -5.0], 1.0 / 240.0, &flat()).unwrap();
            for j in 0..NUM_JOINTS {
                assert!(s.joints[j] >= m.joint_lower[j] && s.joints[j] <= m.joint_upper[j]);
            }
        }
        assert_eq!(s.joints[0], m.joint_upper[0]);
        assert_eq!(s.joints[2], m.joint_lower[2]);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let m = RobotModel::default();
        let s = RobotState { velocity: [f64::NAN, 0.0], position: [0.0, 5.0], ..Default::default() };
        assert!(matches!(
            step_dynamics(&m, &s, &[0.0; 4], 0.01, &flat()),
            Err(DynamicsError::NonFiniteState)
        ));
    }

    #[test]
    fn model_config_round_trip_and_validation() {
        let text = "mass = 30.0\nfriction = 0.5\n";
        let m = RobotModel::from_toml_str(text).unwrap();
        assert_eq!(m.mass, 30.0);
        assert_eq!(m.friction, 0.5);
        assert_eq!(m.max_thrust, 250.0);
        assert!(RobotModel::from_toml_str("mass = -1.0").is_err());
        assert!(RobotModel::from_toml_str("masss = 1.0").is_err());
        let text = toml::to_string(&RobotModel::default()).unwrap();
        assert_eq!(RobotModel::from_toml_str(&text).unwrap(), RobotModel::default());
    }
}
