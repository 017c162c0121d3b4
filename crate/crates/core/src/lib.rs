//! Assisted-navigation benchmark on synthetic graph worlds.
//!
//! The crate bundles everything needed to study help-seeking navigation
//! agents end to end:
//!
//! * [`env`] — graph environments, poses, the 37-slot panoramic action
//!   space, deterministic synthetic view rendering, and metric distances.
//! * [`anna`] — the simulated assistant: a route system built over a
//!   spanning tree with power-of-two ancestor jumps, route/departure/goal
//!   selection, and a synthetic instruction grammar.
//! * [`teachers`] — navigation and retrospective help-request supervision,
//!   including the mistake set used by the curiosity loss.
//! * [`policy`] — the hierarchical memory-augmented networks with a
//!   hand-rolled reverse-mode tape so every gradient is exact.
//! * [`training`] — episode rollouts, loss assembly, Adam, and the
//!   training loop.
//! * [`eval`] — metrics (SR, SPL, navigation error, repeat rates,
//!   condition-prediction scores), baseline policies, and task datasets.

pub mod anna;
pub mod env;
pub mod error;
pub mod eval;
pub mod policy;
pub mod teachers;
pub mod training;

pub use error::{Error, Result};
