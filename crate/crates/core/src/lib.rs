//! Evolutionary search over the input noise space of a frozen black-box
//! generator.
//!
//! A population of latent points is evolved with mutation, crossover and
//! immigration from a prior. Every generation decodes the offspring into
//! candidate families, filters the pooled candidates through a
//! feasibility-first multi-fidelity funnel, and builds a fixed-size diverse
//! panel from the survivors. The best panel seen so far is kept as the
//! incumbent.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod document;
pub mod engine;
pub mod error;
pub mod evaluators;
pub mod funnel;
pub mod generator;
pub mod order;
pub mod panel;
pub mod par;
pub mod rng;
pub mod scoring;
pub mod task;
pub mod trace;
pub mod types;
pub mod verify;

pub use config::{default_config, EvaluatorStage, SearchConfig, SearchMode};
pub use engine::{run_search, RunResult};
pub use error::{Result, ReuseError};
pub use panel::Panel;
pub use task::TaskContext;
pub use types::{Candidate, Fingerprint, Id, LatentPoint, Target};
