//! Ensemble orchestration and convergence diagnostics.

pub mod dynkin;
pub mod ensemble;
pub mod ladder;
pub mod stats;

pub use dynkin::{
    catalog, dynkin_residual, CylinderTestFn, DiscreteShape, GeneratorKind, ResidualStat,
    ScalarShape, TestFunction,
};
pub use ensemble::{
    run_ensemble, run_trajectories, Engine, EnsembleSpec, EnsembleStats, InitialCondition,
    Observable,
};
pub use ladder::{convergence_ladder, compare_ensembles, LadderReport, LadderSpec};
pub use stats::{empirical_pmf, ks_pvalue, ks_statistic, tv_distance, wasserstein1, SampleSummary};
