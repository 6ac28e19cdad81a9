//! Motion-prior datasets: feature frames, procedural walk clips, flight
//! clips from quintic base trajectories, transition sampling and the
//! on-disk dataset format.

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::dynamics::{forward_kinematics, RobotModel, RobotState, NUM_JETS, NUM_JOINTS, NUM_LEGS};

pub const FEATURE_DIM: usize = 19;
pub const CONTROL_RATE_HZ: f64 = 60.0;
pub const FEATURE_LAYOUT: &str =
    "cos_pitch,sin_pitch,vx_body,vz_body,omega,q0,q1,q2,q3,dq0,dq1,dq2,dq3,foot0_x,foot0_z,foot1_x,foot1_z,thrust0,thrust1";
const DATASET_MAGIC: &[u8; 4] = b"AMPD";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("target at distance {distance:.6} m is outside the reachable annulus [{min:.6}, {max:.6}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("required thrust {required:.2} N at t = {time:.3} s exceeds the available {available:.2} N")]
    InfeasibleThrust { time: f64, required: f64, available: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("corrupt dataset file: {0}")]
    CorruptFile(String),
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<DecodeError> for PriorError {
    fn from(e: DecodeError) -> Self {
        PriorError::CorruptFile(e.to_string())
    }
}

/// Discriminator feature vector; identical to the robot part of the policy
/// observation. Thrusts are raw Newtons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureFrame(pub [f64; FEATURE_DIM]);

impl FeatureFrame {
    pub const PITCH: usize = 0;
    pub const BODY_VELOCITY: usize = 2;
    pub const OMEGA: usize = 4;
    pub const JOINTS: usize = 5;
    pub const JOINT_VELOCITIES: usize = 9;
    pub const FEET: usize = 13;
    pub const THRUST: usize = 17;

    pub fn from_state(model: &RobotModel, state: &RobotState) -> Self {
        let fk = forward_kinematics(model, state);
        let v = state.to_body(state.velocity);
        let mut f = [0.0; FEATURE_DIM];
        f[0] = state.pitch.cos();
        f[1] = state.pitch.sin();
        f[2] = v[0];
        f[3] = v[1];
        f[4] = state.angular_velocity;
        f[5..9].copy_from_slice(&state.joints);
        f[9..13].copy_from_slice(&state.joint_velocities);
        for leg in 0..NUM_LEGS {
            f[13 + 2 * leg] = fk.base[leg][0];
            f[14 + 2 * leg] = fk.base[leg][1];
        }
        f[17..19].copy_from_slice(&state.thrust);
        Self(f)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn pitch(&self) -> f64 {
        self.0[1].atan2(self.0[0])
    }

    pub fn thrust(&self) -> [f64; NUM_JETS] {
        [self.0[17], self.0[18]]
    }

    pub fn joints(&self) -> [f64; NUM_JOINTS] {
        self.0[5..9].try_into().unwrap()
    }

    pub fn joint_velocities(&self) -> [f64; NUM_JOINTS] {
        self.0[9..13].try_into().unwrap()
    }

    pub fn body_velocity(&self) -> [f64; 2] {
        [self.0[2], self.0[3]]
    }

    pub fn feet_base(&self) -> [[f64; 2]; NUM_LEGS] {
        [[self.0[13], self.0[14]], [self.0[15], self.0[16]]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipLabel {
    Walk,
    Fly,
}

impl ClipLabel {
    fn code(self) -> u8 {
        match self {
            ClipLabel::Walk => 0,
            ClipLabel::Fly => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub rate_hz: f64,
    pub label: ClipLabel,
    pub frames: Vec<FeatureFrame>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionPair {
    pub current: FeatureFrame,
    pub next: FeatureFrame,
}

/// Closed-form two-link IK. `target` is the foot position relative to the
/// hip joint; returns `(hip, knee)` on the branch with knee flexion in
/// `[0, π]`.
pub fn leg_ik(target: [f64; 2], thigh: f64, shank: f64) -> Result<(f64, f64), PriorError> {
    let d = target[0].hypot(target[1]);
    let (min, max) = ((thigh - shank).abs(), thigh + shank);
    let tol = 1e-12 * max;
    if d > max + tol || d < min - tol {
        return Err(PriorError::Unreachable { distance: d, min, max });
    }
    let cos_inner = ((thigh * thigh + shank * shank - d * d) / (2.0 * thigh * shank)).clamp(-1.0, 1.0);
    let knee = std::f64::consts::PI - cos_inner.acos();
    // angle of the hip→foot line from straight down, positive toward +x
    let direction = target[0].atan2(-target[1]);
    let offset = if d > 0.0 {
        ((thigh * thigh + d * d - shank * shank) / (2.0 * thigh * d)).clamp(-1.0, 1.0).acos()
    } else {
        0.0
    };
    Ok((direction + offset, knee))
}

/// Joint angles placing both feet straight below their hips with the base
/// `height` above flat ground at zero pitch.
pub fn stance_pose(model: &RobotModel, height: f64) -> Result<[f64; NUM_JOINTS], PriorError> {
    let mut q = [0.0; NUM_JOINTS];
    for leg in 0..NUM_LEGS {
        let hip = model.hip_mounts[leg];
        let (a, b) = leg_ik([0.0, -height - hip[1]], model.thigh_length, model.shank_length)?;
        q[2 * leg] = a;
        q[2 * leg + 1] = b;
    }
    Ok(q)
}

fn poses_to_frames(model: &RobotModel, poses: &[RobotState], rate: f64) -> Vec<FeatureFrame> {
    let n = poses.len();
    let states = finite_difference_velocities(poses, rate);
    debug_assert_eq!(states.len(), n);
    states.iter().map(|s| FeatureFrame::from_state(model, s)).collect()
}

/// Fill velocities from pose differences at the frame rate: forward
/// differences, backward on the last frame.
fn finite_difference_velocities(poses: &[RobotState], rate: f64) -> Vec<RobotState> {
    let n = poses.len();
    (0..n)
        .map(|k| {
            let (a, b) = if k + 1 < n { (&poses[k], &poses[k + 1]) } else { (&poses[k - 1], &poses[k]) };
            let mut s = poses[k];
            s.velocity = [(b.position[0] - a.position[0]) * rate, (b.position[1] - a.position[1]) * rate];
            s.angular_velocity = (b.pitch - a.pitch) * rate;
            for j in 0..NUM_JOINTS {
                s.joint_velocities[j] = (b.joints[j] - a.joints[j]) * rate;
            }
            s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaitParams {
    pub stride: f64,
    pub cycle: f64,
    pub duty: f64,
    pub base_height: f64,
    pub cycles: usize,
    /// Swing apex height as a fraction of stride length.
    pub clearance_ratio: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self { stride: 0.4, cycle: 1.0, duty: 0.6, base_height: 0.6, cycles: 2, clearance_ratio: 0.2 }
    }
}

/// World-frame walking trajectory: base poses (velocities filled by finite
/// differences) together with the planned world foot positions.
pub struct WalkTrajectory {
    pub states: Vec<RobotState>,
    pub feet: Vec<[[f64; 2]; NUM_LEGS]>,
    /// `stance[k][leg]` is true while that foot is planted.
    pub stance: Vec<[bool; NUM_LEGS]>,
}

pub fn walk_trajectory(model: &RobotModel, gait: &GaitParams) -> Result<WalkTrajectory, PriorError> {
    if !(gait.duty > 0.5 && gait.duty < 1.0) {
        return Err(PriorError::InvalidParams(format!("duty factor must lie in (0.5, 1), got {}", gait.duty)));
    }
    if !(gait.cycle > 0.0) || !(gait.stride >= 0.0) || gait.cycles == 0 || !(gait.base_height > 0.0) {
        return Err(PriorError::InvalidParams("stride >= 0, cycle > 0, base height > 0 and cycles >= 1 required".into()));
    }
    let rate = CONTROL_RATE_HZ;
    let speed = gait.stride / gait.cycle;
    let clearance = gait.clearance_ratio * gait.stride;
    let count = (gait.cycles as f64 * gait.cycle * rate).round() as usize + 1;
    let offsets = [0.0, 0.5];

    let mut poses = Vec::with_capacity(count);
    let mut feet = Vec::with_capacity(count);
    let mut stance = Vec::with_capacity(count);
    for k in 0..count {
        let t = k as f64 / rate;
        let base = [speed * t, gait.base_height];
        let mut pose = RobotState { position: base, ..Default::default() };
        let mut foot_k = [[0.0; 2]; NUM_LEGS];
        let mut planted = [false; NUM_LEGS];
        for leg in 0..NUM_LEGS {
            let hip_x = model.hip_mounts[leg][0];
            let u = t / gait.cycle + offsets[leg];
            let n = u.floor();
            let phase = u - n;
            let stance_start = (n - offsets[leg]) * gait.cycle;
            let anchor = speed * stance_start + hip_x + gait.duty * gait.stride / 2.0;
            let foot = if phase < gait.duty {
                planted[leg] = true;
                [anchor, 0.0]
            } else {
                let s = (phase - gait.duty) / (1.0 - gait.duty);
                let tau = std::f64::consts::TAU;
                [
                    anchor + gait.stride * (s - (tau * s).sin() / tau),
                    clearance * (1.0 - (tau * s).cos()) / 2.0,
                ]
            };
            foot_k[leg] = foot;
            let hip = model.hip_mounts[leg];
            let rel = [foot[0] - base[0] - hip[0], foot[1] - base[1] - hip[1]];
            let (a, b) = leg_ik(rel, model.thigh_length, model.shank_length)?;
            pose.joints[2 * leg] = a;
            pose.joints[2 * leg + 1] = b;
        }
        poses.push(pose);
        feet.push(foot_k);
        stance.push(planted);
    }
    Ok(WalkTrajectory { states: finite_difference_velocities(&poses, rate), feet, stance })
}

/// Walking clip with zero thrust, sampled at the control rate.
pub fn generate_walk_clip(model: &RobotModel, gait: &GaitParams) -> Result<MotionClip, PriorError> {
    let traj = walk_trajectory(model, gait)?;
    let frames = traj.states.iter().map(|s| FeatureFrame::from_state(model, s)).collect();
    Ok(MotionClip { rate_hz: CONTROL_RATE_HZ, label: ClipLabel::Walk, frames })
}

/// Position/velocity/acceleration of the base at one end of a flight.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlightEndpoint {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
}

impl FlightEndpoint {
    pub fn at_rest(position: [f64; 2]) -> Self {
        Self { position, ..Default::default() }
    }
}

/// Quintic polynomial per axis meeting position, velocity and acceleration
/// at both ends (the minimum-jerk interpolant).
#[derive(Clone, Debug, PartialEq)]
pub struct QuinticTrajectory {
    pub duration: f64,
    coeffs: [[f64; 6]; 2],
}

impl QuinticTrajectory {
    pub fn new(start: &FlightEndpoint, goal: &FlightEndpoint, duration: f64) -> Result<Self, PriorError> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(PriorError::InvalidParams(format!("duration must be > 0, got {duration}")));
        }
        let t = duration;
        let mut coeffs = [[0.0; 6]; 2];
        for axis in 0..2 {
            let (p0, v0, a0) = (start.position[axis], start.velocity[axis], start.acceleration[axis]);
            let (p1, v1, a1) = (goal.position[axis], goal.velocity[axis], goal.acceleration[axis]);
            let t2 = t * t;
            let t3 = t2 * t;
            let t4 = t3 * t;
            let t5 = t4 * t;
            let c3 = (20.0 * (p1 - p0) - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3);
            let c4 = (30.0 * (p0 - p1) + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t4);
            let c5 = (12.0 * (p1 - p0) - 6.0 * (v1 + v0) * t - (a0 - a1) * t2) / (2.0 * t5);
            coeffs[axis] = [p0, v0, a0 / 2.0, c3, c4, c5];
        }
        Ok(Self { duration, coeffs })
    }

    pub fn position(&self, t: f64) -> [f64; 2] {
        self.coeffs.map(|c| c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5])))))
    }

    pub fn velocity(&self, t: f64) -> [f64; 2] {
        self.coeffs
            .map(|c| c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5]))))
    }

    pub fn acceleration(&self, t: f64) -> [f64; 2] {
        self.coeffs.map(|c| 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5])))
    }

    pub fn coefficients(&self) -> &[[f64; 6]; 2] {
        &self.coeffs
    }
}

/// Leg pose held during flight.
pub const TUCKED_POSE: [f64; NUM_JOINTS] = [0.9, 1.8, 0.9, 1.8];
const TUCK_BLEND_SECONDS: f64 = 0.5;

/// Flight clip: quintic base path, pitch aligned with the required force,
/// inverse-dynamics thrust split evenly across jets, legs blending from
/// stance into the tucked pose.
pub fn generate_flight_clip(
    model: &RobotModel,
    start: &FlightEndpoint,
    goal: &FlightEndpoint,
    duration: f64,
) -> Result<MotionClip, PriorError> {
    let traj = QuinticTrajectory::new(start, goal, duration)?;
    let rate = CONTROL_RATE_HZ;
    let count = ((duration * rate).round() as usize).max(1) + 1;
    let stance = stance_pose(model, 0.6)?;
    let blend = TUCK_BLEND_SECONDS.min(duration / 2.0);
    let available = NUM_JETS as f64 * model.max_thrust;

    let mut poses = Vec::with_capacity(count);
    for k in 0..count {
        let t = (k as f64 / rate).min(duration);
        let acc = traj.acceleration(t);
        let force = [model.mass * acc[0], model.mass * (acc[1] + model.gravity)];
        let required = force[0].hypot(force[1]);
        if required > available * (1.0 + 1e-12) || force[1] <= 0.0 {
            return Err(PriorError::InfeasibleThrust { time: t, required, available });
        }
        let pitch = (-force[0]).atan2(force[1]);
        // thrust along the body-up axis; aligned pitch makes this |force|
        let up = [-pitch.sin(), pitch.cos()];
        let total = force[0] * up[0] + force[1] * up[1];
        let per_jet = (total / NUM_JETS as f64).clamp(0.0, model.max_thrust);
        let s = smoothstep((t / blend).min(1.0));
        let mut joints = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            joints[j] = stance[j] + s * (TUCKED_POSE[j] - stance[j]);
        }
        poses.push(RobotState {
            position: traj.position(t),
            pitch,
            joints,
            thrust: [per_jet; NUM_JETS],
            ..Default::default()
        });
    }
    Ok(MotionClip { rate_hz: rate, label: ClipLabel::Fly, frames: poses_to_frames(model, &poses, rate) })
}

/// Quintic smoothstep with zero first and second derivative at both ends.
fn smoothstep(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Walk clips with stride and cycle jittered ±25 % around the defaults.
pub fn default_walk_clips(model: &RobotModel, count: usize, rng: &mut impl Rng) -> Result<Vec<MotionClip>, PriorError> {
    let base = GaitParams::default();
    (0..count)
        .map(|_| {
            let gait = GaitParams {
                stride: base.stride * rng.random_range(0.75..1.25),
                cycle: base.cycle * rng.random_range(0.75..1.25),
                ..base
            };
            generate_walk_clip(model, &gait)
        })
        .collect()
}

/// Rest-to-rest flights between random base positions at 0.6 to 4 m
/// altitude, 2 to 5 s long; infeasible draws are redrawn.
pub fn default_flight_clips(model: &RobotModel, count: usize, rng: &mut impl Rng) -> Result<Vec<MotionClip>, PriorError> {
    let mut clips = Vec::with_capacity(count);
    for _ in 0..count {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let start = FlightEndpoint::at_rest([0.0, rng.random_range(0.6..4.0)]);
            let goal = FlightEndpoint::at_rest([rng.random_range(0.0..4.0), rng.random_range(0.6..4.0)]);
            let duration = rng.random_range(2.0..5.0);
            match generate_flight_clip(model, &start, &goal, duration) {
                Ok(clip) => {
                    clips.push(clip);
                    break;
                }
                Err(PriorError::InfeasibleThrust { .. }) if attempts < 10_000 => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(clips)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MotionDataset {
    pub clips: Vec<MotionClip>,
}

impl MotionDataset {
    pub fn new(clips: Vec<MotionClip>) -> Self {
        Self { clips }
    }

    pub fn merge(mut self, other: MotionDataset) -> Self {
        self.clips.extend(other.clips);
        self
    }

    pub fn num_pairs(&self) -> usize {
        self.clips.iter().map(|c| c.frames.len().saturating_sub(1)).sum()
    }

    pub fn frames(&self) -> impl Iterator<Item = &FeatureFrame> {
        self.clips.iter().flat_map(|c| c.frames.iter())
    }

    /// Pair `index` in clip-major order.
    pub fn pair(&self, mut index: usize) -> Option<TransitionPair> {
        for clip in &self.clips {
            let n = clip.frames.len().saturating_sub(1);
            if index < n {
                return Some(TransitionPair { current: clip.frames[index], next: clip.frames[index + 1] });
            }
            index -= n;
        }
        None
    }

    pub fn all_pairs(&self) -> Vec<TransitionPair> {
        self.clips
            .iter()
            .flat_map(|c| c.frames.windows(2).map(|w| TransitionPair { current: w[0], next: w[1] }))
            .collect()
    }
}

/// Uniform draw over every consecutive pair of every clip.
pub fn sample_transitions(
    dataset: &MotionDataset,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<TransitionPair>, PriorError> {
    let total = dataset.num_pairs();
    if total == 0 {
        return Err(PriorError::EmptyDataset);
    }
    let mut starts = Vec::with_capacity(dataset.clips.len());
    let mut acc = 0;
    for clip in &dataset.clips {
        starts.push(acc);
        acc += clip.frames.len().saturating_sub(1);
    }
    Ok((0..batch)
        .map(|_| {
            let i = rng.random_range(0..total);
            let c = starts.partition_point(|&s| s <= i) - 1;
            let local = i - starts[c];
            let frames = &dataset.clips[c].frames;
            TransitionPair { current: frames[local], next: frames[local + 1] }
        })
        .collect())
}

pub fn encode_dataset(dataset: &MotionDataset) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(FEATURE_DIM as u32);
    w.f64(CONTROL_RATE_HZ);
    w.str(FEATURE_LAYOUT);
    w.u32(dataset.clips.len() as u32);
    for clip in &dataset.clips {
        w.u8(clip.label.code());
        w.u32(clip.frames.len() as u32);
        for f in &clip.frames {
            w.f64s(&f.0);
        }
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<MotionDataset, PriorError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != DATASET_MAGIC {
        return Err(PriorError::CorruptFile("bad magic".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(PriorError::SchemaMismatch(format!("version {version}, expected {DATASET_VERSION}")));
    }
    let dim = r.u32()? as usize;
    if dim != FEATURE_DIM {
        return Err(PriorError::SchemaMismatch(format!("feature_dim {dim}, expected {FEATURE_DIM}")));
    }
    let rate = r.f64()?;
    if rate != CONTROL_RATE_HZ {
        return Err(PriorError::SchemaMismatch(format!("rate {rate} Hz, expected {CONTROL_RATE_HZ}")));
    }
    let layout = r.str()?;
    if layout != FEATURE_LAYOUT {
        return Err(PriorError::SchemaMismatch(format!("feature layout '{layout}'")));
    }
    let n_clips = r.u32()? as usize;
    let mut clips = Vec::with_capacity(n_clips.min(1 << 16));
    for _ in 0..n_clips {
        let label = match r.u8()? {
            0 => ClipLabel::Walk,
            1 => ClipLabel::Fly,
            other => return Err(PriorError::CorruptFile(format!("unknown clip label {other}"))),
        };
        let n_frames = r.u32()? as usize;
        let raw = r.f64s(n_frames * dim)?;
        let frames = raw.chunks_exact(dim).map(|c| FeatureFrame(c.try_into().unwrap())).collect();
        clips.push(MotionClip { rate_hz: rate, label, frames });
    }
    if r.remaining() != 0 {
        return Err(PriorError::CorruptFile(format!("{} trailing bytes", r.remaining())));
    }
    if clips.is_empty() {
        return Err(PriorError::EmptyDataset);
    }
    Ok(MotionDataset { clips })
}

pub fn save_dataset(dataset: &MotionDataset, path: impl AsRef<Path>) -> Result<(), PriorError> {
    std::fs::write(path, encode_dataset(dataset))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MotionDataset, PriorError> {
    decode_dataset(&std::fs::read(path)?)
}
