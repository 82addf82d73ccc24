//! Seedable simulator and training/evaluation toolkit for UAV trajectory
//! design in unknown 3-D environments.
//!
//! A single UAV relays data from a base station to ground users while
//! geometrically sensing the buildings around it. A digital-twin layer
//! accumulates the sensed occupancy grid, vetoes unsafe actions, and backs
//! both the observation tensors and the planning queries of a TD3 (or DDPG)
//! trajectory agent; user visiting order comes from greedy-seeded simulated
//! annealing. Everything is deterministic under a master seed.
//!
//! Module map:
//! - [`world`]: ground-truth scene, geometry queries, cone sensing
//! - [`channel`]: path loss, shadowing, fading, relay rates
//! - [`scheduler`]: simulated-annealing visiting order
//! - [`twin`]: reconstructed occupancy grid, safety gate, LoS prediction
//! - [`mdp`]: state tensors, rewards, and the slot-level simulator
//! - [`neural`]: self-contained tensor/gradient core sized for CPU training
//! - [`agent`]: TD3/DDPG training loop and replay buffer
//! - [`config`] / [`harness`]: TOML configuration, runners, CSV/SVG outputs

pub mod agent;
pub mod channel;
pub mod config;
pub mod harness;
pub mod mdp;
pub mod neural;
pub mod scheduler;
pub mod seeding;
pub mod twin;
pub mod world;
