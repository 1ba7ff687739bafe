//! Experiment drivers: data generation, the nested density optimisation,
//! hyperparameter sweeps, density-family comparison and timing.

pub mod bench;
pub mod compare;
pub mod config;
pub mod dataset;
pub mod outer;
pub mod report;
pub mod sweep;

pub use bench::{bench_overhead, BenchConfig, BenchRow};
pub use compare::{compare_densities, train_heldout_split, CompareRow, DensityChoice};
pub use config::{DirectSection, ExperimentConfig, ModelSection};
pub use dataset::{gen_dataset, noise_field, DatasetSpec};
pub use outer::{
    check_symmetry_relaxation, density_search_config, optimize_density, training_objective, Evaluation, OuterResult,
    SymmetryReport, CENTER_VALUE,
};
pub use sweep::{sweep_hyperparams, SweepAxis, SweepRow};
