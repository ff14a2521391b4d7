//! Progressive entity integration between a local data source and
//! external keyword-searchable sources.
//!
//! The local source turns each user query into intents (query, matched
//! local entity), phrases keyword queries for every external source from
//! a learned strategy, and reinforces that strategy with the reciprocal
//! rank of the first relevant answer. External sources may learn how to
//! answer in the same way, or rank with BM25.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod protocol;
pub mod retrieval;
pub mod strategy;
pub mod synth;

pub use corpus::{DataTable, EntityRecord, Feature, GroundTruth};
pub use evaluation::{run_experiment, CurvePoint, Datasets, ExperimentOptions, MethodVariant, SimulatedUser};
pub use protocol::{Feedback, InteractionRecord, Session, SessionConfig};
pub use retrieval::{Bm25Params, InvertedIndex, RankedList};
pub use strategy::{Intent, LearnerConfig, Policy, QueryKey, StrategyMatrix};
