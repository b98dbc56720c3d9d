//! Problem ingestion, synthetic generators and experiment persistence.

pub mod bands;
pub mod config;
pub mod generate;
pub mod libsvm;
pub mod mtx;
pub mod problem;

pub use bands::{quantile_bands, quantile_sorted, BandedTrace};
pub use config::{BandMetric, DatasetFormulation, ExperimentConfig, MethodSpec, ProbChoice, ProblemSource};
pub use generate::{generate, hilbert, synthetic_dataset, GeneratorSpec, DEFAULT_RIDGE_LAMBDA};
pub use libsvm::{format_libsvm, parse_libsvm, read_libsvm, write_libsvm};
pub use mtx::{
    format_matrix_market, parse_matrix_market, read_matrix_market, read_vector, write_matrix_market, write_vector,
    MtxLayout, MtxSymmetry,
};
pub use problem::{condition_estimate, ridge_system, ProblemInstance, ProblemMetadata};
