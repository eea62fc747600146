//! Bi-objective evolutionary architecture search over phase-wise binary
//! DAG encodings.
//!
//! Genomes encode each phase as the lower triangle of a node adjacency
//! matrix plus a skip bit. Search alternates NSGA-II style exploration
//! (crossover and mutation) with exploitation by sampling a chain Bayesian
//! network fitted to the archive of evaluated phases.

pub mod archive;
pub mod boa;
pub mod complexity;
pub mod config;
pub mod dedup;
pub mod encoding;
pub mod engine;
pub mod evaluators;
pub mod metrics;
pub mod moea;
pub mod operators;

pub use archive::{ArchiveRecord, SearchArchive, Stage};
pub use config::{Ablation, ConfigError, EvaluatorSpec, ExploitationSampler, SearchConfig};
pub use dedup::{canonical_network, canonical_phase, CanonicalPhaseKey, NetworkKey};
pub use encoding::{
    decode_network, decode_phase, format_genome, parse_genome, parse_genome_inferred,
    EncodingConfig, NetworkArchitecture, NetworkGenome, PhaseGenome,
};
pub use engine::{
    run_random_search, run_search, Checkpoint, EngineError, SearchResult, SearchRunner,
};
pub use evaluators::{ErrorEvaluator, EvalError, ObjectiveVector};
