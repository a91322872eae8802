//! Language-grounded reinforcement learning on small grid problems.

pub mod adapters;
pub mod agents;
pub mod encoders;
pub mod env;
pub mod gateway;
pub mod instructions;
pub mod observations;
pub mod runner;
