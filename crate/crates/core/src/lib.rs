//! Planar legged robot with thrust jets: simulation, motion priors,
//! jet-actuator identification, adversarial style rewards and PPO.

pub mod amp;
pub mod approx;
pub mod codec;
pub mod dynamics;
pub mod envtask;
pub mod jetdyn;
pub mod ppo;
pub mod priors;
pub mod terrain;
