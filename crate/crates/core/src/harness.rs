//! Monte Carlo driver: rejection rates over replicates, null-statistic
//! samples, and single-test timings.
//!
//! Every replicate draws its data and permutation stream from seeds derived
//! from `(master_seed, n, replicate)`, so results do not depend on execution
//! order or thread count.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dtetests::{run_test, Method, PropensityMode, TestConfig};
use crate::error::{Error, Result};
use crate::scenarios::{bootstrap_subset, generate, Design, Link, Scenario, ScenarioConfig};

/// Where replicate datasets come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Scenario {
        scenario: Scenario,
        link: Link,
        design: Design,
        d_x: usize,
    },
    /// Resample `n` rows with replacement from a fixed dataset per replicate.
    Bootstrap { data: Arc<Dataset>, label: String },
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::Scenario {
                scenario,
                link,
                design,
                ..
            } => format!("{scenario}-{link}-{design}"),
            DataSource::Bootstrap { label, .. } => label.clone(),
        }
    }

    fn default_propensity(&self) -> PropensityMode {
        match self {
            DataSource::Scenario {
                design: Design::Experimental,
                ..
            } => PropensityMode::Known(0.5),
            _ => PropensityMode::Logistic,
        }
    }

    fn draw(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Scenario {
                scenario,
                link,
                design,
                d_x,
            } => generate(&ScenarioConfig {
                scenario: *scenario,
                link: *link,
                design: *design,
                n,
                seed,
                d_x: *d_x,
            }),
            DataSource::Bootstrap { data, .. } => bootstrap_subset(data, n, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub source: DataSource,
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    /// Base test configuration; `alpha` and the permutation seed are set per replicate.
    pub config: TestConfig,
    /// `None` picks known `π = ½` for experimental designs and logistic otherwise.
    pub propensity: Option<PropensityMode>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentPlan {
    pub fn new(source: DataSource, methods: Vec<Method>, n_grid: Vec<usize>, reps: usize) -> Self {
        Self {
            source,
            methods,
            n_grid,
            reps,
            alpha: crate::dtetests::DEFAULT_ALPHA,
            master_seed: 0,
            config: TestConfig::default(),
            propensity: None,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::config("reps must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(Error::config("no methods requested"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::config("n grid is empty"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n grid must be strictly ascending"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        match &self.source {
            DataSource::Scenario { design, .. } => {
                for &n in &self.n_grid {
                    ScenarioConfig::new(Scenario::I, Link::Linear, *design, n, 0)
                        .validate()
                        .map_err(|e| Error::config(e.to_string()))?;
                }
            }
            DataSource::Bootstrap { data, .. } => {
                if let Some(&m) = self.n_grid.iter().find(|&&m| m < 2 || m > data.n()) {
                    return Err(Error::config(format!(
                        "bootstrap size {m} outside [2, {}]",
                        data.n()
                    )));
                }
            }
        }
        self.config.validate()
    }

    fn replicate_config(&self, n: usize, rep: usize) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            permutation_seed: derive_seed(self.master_seed, &[n as u64, rep as u64, 2]),
            propensity: self
                .propensity
                .unwrap_or_else(|| self.source.default_propensity()),
            ..self.config.clone()
        }
    }

    fn data_seed(&self, n: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, rep as u64, 1])
    }

    fn in_pool<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(job()),
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::config(format!("thread pool: {e}")))?;
                Ok(pool.install(job))
            }
        }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replicate component, independent of execution order.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub method: Method,
    pub scenario: String,
    pub n: usize,
    pub rate: f64,
    pub std_error: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn get(&self, method: Method, n: usize) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Decision(bool),
    Failure,
}

fn tally(method: Method, scenario: &str, n: usize, reps: usize, outcomes: &[Outcome]) -> RateRow {
    let failures = outcomes.iter().filter(|o| **o == Outcome::Failure).count();
    let rejections = outcomes
        .iter()
        .filter(|o| **o == Outcome::Decision(true))
        .count();
    let completed = reps - failures;
    let (rate, std_error) = if completed == 0 {
        (0.0, 0.0)
    } else {
        let r = rejections as f64 / completed as f64;
        (r, (r * (1.0 - r) / completed as f64).sqrt())
    };
    RateRow {
        method,
        scenario: scenario.to_string(),
        n,
        rate,
        std_error,
        reps,
        failures,
    }
}

/// Rejection rate of every method at every sample size.
///
/// Failed replicates (degenerate statistic, single-arm folds, fit errors)
/// are counted in `failures` and left out of the rate denominator.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RateTable> {
    plan.validate()?;
    let label = plan.source.label();
    let mut rows = Vec::with_capacity(plan.methods.len() * plan.n_grid.len());
    for &n in &plan.n_grid {
        let per_rep: Vec<Vec<Outcome>> = plan.in_pool(|| {
            (0..plan.reps)
                .into_par_iter()
                .map(|rep| {
                    let Ok(data) = plan.source.draw(n, plan.data_seed(n, rep)) else {
                        return vec![Outcome::Failure; plan.methods.len()];
                    };
                    let config = plan.replicate_config(n, rep);
                    plan.methods
                        .iter()
                        .map(|&m| match run_test(m, &data, &config) {
                            Ok(r) => Outcome::Decision(r.reject),
                            Err(_) => Outcome::Failure,
                        })
                        .collect()
                })
                .collect()
        })?;
        for (k, &method) in plan.methods.iter().enumerate() {
            let outcomes: Vec<Outcome> = per_rep.iter().map(|o| o[k]).collect();
            rows.push(tally(method, &label, n, plan.reps, &outcomes));
        }
    }
    // method-major order, n ascending within a method
    rows.sort_by_key(|r| (plan.methods.iter().position(|&m| m == r.method), r.n));
    Ok(RateTable { rows })
}

/// Statistics of the first cross test in `plan.methods` (AIPW-xKTE if none)
/// at the first grid size, one per successful replicate in replicate order.
pub fn null_statistic_sample(plan: &ExperimentPlan) -> Result<Vec<f64>> {
    plan.validate()?;
    if let DataSource::Scenario { scenario, .. } = &plan.source {
        if !scenario.is_null() {
            return Err(Error::config(format!(
                "null statistics need a null scenario, got {scenario}"
            )));
        }
    }
    let method = plan
        .methods
        .iter()
        .copied()
        .find(|m| matches!(m, Method::AipwXkte | Method::IpwXkte))
        .unwrap_or(Method::AipwXkte);
    let n = plan.n_grid[0];
    let stats: Vec<Option<f64>> = plan.in_pool(|| {
        (0..plan.reps)
            .into_par_iter()
            .map(|rep| {
                let data = plan.source.draw(n, plan.data_seed(n, rep)).ok()?;
                run_test(method, &data, &plan.replicate_config(n, rep))
                    .ok()
                    .map(|r| r.statistic)
            })
            .collect()
    })?;
    Ok(stats.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub n: usize,
    pub mean_ms: f64,
}

/// Mean wall-clock milliseconds of one test call (nuisance fitting included,
/// data generation excluded) on Scenario II experimental data.
///
/// Runs on the calling thread. One untimed warm-up call precedes the `reps`
/// timed calls for every `(method, n)`.
pub fn bench_timing(
    methods: &[Method],
    n_grid: &[usize],
    reps: usize,
    b: usize,
    seed: u64,
) -> Result<Vec<TimingRow>> {
    if reps < 3 {
        return Err(Error::config("timing needs at least 3 repetitions"));
    }
    if methods.is_empty() || n_grid.is_empty() {
        return Err(Error::config("timing needs at least one method and one n"));
    }
    let mut rows = Vec::with_capacity(methods.len() * n_grid.len());
    for &method in methods {
        for &n in n_grid {
            let datasets: Vec<Dataset> = (0..=reps)
                .map(|rep| {
                    generate(&ScenarioConfig::new(
                        Scenario::II,
                        Link::Linear,
                        Design::Experimental,
                        n,
                        derive_seed(seed, &[n as u64, rep as u64, 1]),
                    ))
                })
                .collect::<Result<_>>()?;
            let config = TestConfig {
                propensity: PropensityMode::Known(0.5),
                permutations: b,
                permutation_seed: derive_seed(seed, &[n as u64, 2]),
                ..TestConfig::default()
            };
            run_test(method, &datasets[0], &config)?;
            let mut total = 0.0;
            for data in &datasets[1..] {
                let start = Instant::now();
                let r = run_test(method, data, &config)?;
                total += start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(r);
            }
            rows.push(TimingRow {
                method,
                n,
                mean_ms: total / reps as f64,
            });
        }
    }
    Ok(rows)
}
