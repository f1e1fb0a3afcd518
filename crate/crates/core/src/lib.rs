//! Kernel tests for distributional treatment effects.
//!
//! The central test, AIPW-xKTE, studentizes a cross U-statistic built from
//! doubly-robust embeddings of each unit's outcome, so its null distribution
//! is standard normal and no permutations are needed. IPW-xKTE drops the
//! outcome model; KTE and Baseline-AIPW are permutation comparators.
//!
//! ```no_run
//! use xkte::{generate, run_test, Design, Link, Method, Scenario, ScenarioConfig, TestConfig};
//!
//! let data = generate(&ScenarioConfig::new(
//!     Scenario::III, Link::Linear, Design::Observational, 350, 7,
//! )).unwrap();
//! let r = run_test(Method::AipwXkte, &data, &TestConfig::default()).unwrap();
//! println!("T = {:.3}, p = {:.4}", r.statistic, r.p_value);
//! ```

pub mod cli;
pub mod dataset;
pub mod dtetests;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod nuisance;
pub mod numerics;
pub mod scenarios;

pub use dataset::Dataset;
pub use dtetests::{
    aipw_ate, aipw_xkte, baseline_aipw_test, cross_u_statistic, ipw_xkte, kte_permutation,
    run_test, AteEstimate, Diagnostics, Method, PropensityMode, TestConfig, TestResult,
};
pub use embedding::{build_phi, phi_inner, phi_inner_matrix, FoldAssignment, Observation, PhiRepr};
pub use error::{Error, Result};
pub use harness::{
    bench_timing, null_statistic_sample, run_plan, DataSource, ExperimentPlan, RateRow, RateTable,
    TimingRow,
};
pub use nuisance::{fit_cme, fit_propensity, predict_propensity, CmeModel, PropensityModel};
pub use numerics::{
    gram, kernel_eval, median_heuristic, reg_solve, std_normal_cdf, GramMatrix, KernelFamily,
    KernelSpec,
};
pub use scenarios::{
    bootstrap_subset, generate, generate_with_potential, subtract_ate, Design, Link, Scenario,
    ScenarioConfig,
};

/// Crate version, echoed in result files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
