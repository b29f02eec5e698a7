//! Proprioceptive crawl-space locomotion training on a quasi-static planar crawler.
//!
//! The pipeline: procedural terrains with a difficulty curriculum, polar
//! point-cloud scans raycast from the robot base, a collision-aware reward
//! suite, a proprioceptive state estimator supervised by scan features, and
//! PPO with an asymmetric actor-critic.

pub mod sensing;
pub mod terrain;
pub mod rewards;
pub mod simenv;
pub mod neural;
pub mod trainer;
pub mod cli;
