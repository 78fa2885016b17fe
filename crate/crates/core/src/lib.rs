//! Hierarchical goal-selection agents and the grammars that describe what
//! they can express.
//!
//! - [`grammar`]: constrained and k-recurrent trajectory grammars, a
//!   deterministic derivation engine and policy-to-grammar extraction.
//! - [`env`]: the Corridor, Stochastic Corridor and Grid tasks.
//! - [`controller`]: goal predicates, the shortest-path controller and a
//!   learned actor-critic controller.
//! - [`neural`]: dense layers, a GRU cell, optimizers and checkpoints.
//! - [`meta`]: recurrent REINFORCE, feedforward REINFORCE and DQN meta
//!   controllers.
//! - [`harness`]: the training loop, multi-seed experiments and the bridge
//!   from trained policies back to grammars.

pub mod controller;
pub mod env;
pub mod grammar;
pub mod harness;
pub mod meta;
pub mod neural;
