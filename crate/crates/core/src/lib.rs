//! Occupant resource-usage modeling as a sequential discrete choice game.
//!
//! The crate covers the whole pipeline: per-minute occupant data and pooled
//! features ([`data`]), the points incentive ([`points`]), feature selection
//! and class balancing ([`prep`]), benchmark random-utility classifiers
//! ([`bench_models`]), feed-forward and bidirectional LSTM classifiers
//! ([`deep_models`]), generative trace models with DTW validation
//! ([`generative`]), AUC-based evaluation ([`evaluation`]), game simulation
//! ([`game_sim`]) and the savings/survey statistics ([`stats`]).

pub mod bench_models;
pub mod cli;
pub mod data;
pub mod deep_models;
pub mod evaluation;
pub mod game_sim;
pub mod generative;
pub mod linalg;
pub mod model;
pub mod points;
pub mod prep;
pub mod seed;
pub mod stats;

pub use data::{Dataset, FeatureMatrix, OccupantRecord, ResourceKind, Scenario};
pub use model::{ModelDocument, TrainedModel};
