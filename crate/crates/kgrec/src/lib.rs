//! Knowledge-graph-aware recommendation training: a tape-based autodiff
//! core, dataset and KG ingestion, a collaborative graph with attentive
//! propagation, two-level debiased contrastive objectives, alternating
//! optimization and a ranking evaluation harness.

pub mod ckg;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod sampler;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod trainer;
