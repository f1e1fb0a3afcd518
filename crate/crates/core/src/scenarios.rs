//! Synthetic potential-outcome generators and dataset transforms.
//!
//! Outcomes follow `Y₀* = g(βᵀX) + ε₀`, `Y₁* = g(βᵀX) + b + ε₁` with `g` the
//! identity or cosine, `ε ~ N(0, 0.5)` (variance) and a per-unit shift `b`
//! whose law sets the scenario:
//!
//! | scenario | `b`                         |
//! |----------|-----------------------------|
//! | I        | 0                           |
//! | II       | 2                           |
//! | III      | `2Z − 1`, `Z ~ Bernoulli(½)` |
//! | IV       | `Uniform(−2, 2)`            |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

pub use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::sigmoid;

pub const LINEAR_BETA: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const PROPENSITY_ALPHA: [f64; 5] = [0.05, 0.04, 0.03, 0.02, 0.01];
pub const PROPENSITY_INTERCEPT: f64 = 0.05;
pub const NOISE_VARIANCE: f64 = 0.5;
pub const DEFAULT_DX: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Experimental,
    Observational,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
        }
    }

    pub fn is_null(self) -> bool {
        self == Scenario::I
    }
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Linear => "linear",
            Link::Cosine => "cosine",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Link::Linear => v,
            Link::Cosine => v.cos(),
        }
    }
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::Experimental => "experimental",
            Design::Observational => "observational",
        }
    }
}

macro_rules! named_enum_parse {
    ($ty:ty, $what:literal, [$($v:expr),+]) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::input(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum_parse!(Scenario, "scenario", [Scenario::I, Scenario::II, Scenario::III, Scenario::IV]);
named_enum_parse!(Link, "link", [Link::Linear, Link::Cosine]);
named_enum_parse!(Design, "design", [Design::Experimental, Design::Observational]);

/// Law of the per-unit treatment shift `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShiftLaw {
    Constant(f64),
    /// `b = h·(2Z − 1)` with `Z ~ Bernoulli(½)`.
    SignFlip(f64),
    /// `b ~ Uniform(−h, h)`.
    Uniform(f64),
}

impl ShiftLaw {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ShiftLaw::Constant(b) => b,
            ShiftLaw::SignFlip(h) => {
                if rng.random_bool(0.5) {
                    h
                } else {
                    -h
                }
            }
            ShiftLaw::Uniform(h) => {
                Uniform::new(-h, h).expect("shift half-width is positive").sample(rng)
            }
        }
    }
}

/// Outcome model: coefficients, link and shift law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub beta: Vec<f64>,
    pub link: Link,
    pub shift: ShiftLaw,
    pub noise_variance: f64,
}

impl OutcomeParams {
    /// Synthetic-study parameters; coefficients beyond the fifth covariate are zero.
    pub fn synthetic(scenario: Scenario, link: Link, d_x: usize) -> Self {
        let beta = (0..d_x).map(|j| LINEAR_BETA.get(j).copied().unwrap_or(0.0)).collect();
        let shift = match scenario {
            Scenario::I => ShiftLaw::Constant(0.0),
            Scenario::II => ShiftLaw::Constant(2.0),
            Scenario::III => ShiftLaw::SignFlip(1.0),
            Scenario::IV => ShiftLaw::Uniform(2.0),
        };
        Self {
            beta,
            link,
            shift,
            noise_variance: NOISE_VARIANCE,
        }
    }

    /// Semi-synthetic preset for real covariate files: all-ones coefficients
    /// and shifts `0`, `1`, `2(2Z − 1)`, `Uniform(−4, 4)`.
    pub fn ihdp(scenario: Scenario, d_x: usize) -> Self {
        let shift = match scenario {
            Scenario::I => ShiftLaw::Constant(0.0),
            Scenario::II => ShiftLaw::Constant(1.0),
            Scenario::III => ShiftLaw::SignFlip(2.0),
            Scenario::IV => ShiftLaw::Uniform(4.0),
        };
        Self {
            beta: vec![1.0; d_x],
            link: Link::Linear,
            shift,
            noise_variance: NOISE_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub link: Link,
    pub design: Design,
    pub n: usize,
    pub seed: u64,
    pub d_x: usize,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, link: Link, design: Design, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            link,
            design,
            n,
            seed,
            d_x: DEFAULT_DX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::input(format!("n must be at least 2, got {}", self.n)));
        }
        if self.d_x == 0 {
            return Err(Error::input("d_x must be at least 1"));
        }
        if self.design == Design::Experimental && self.n % 2 == 1 {
            return Err(Error::input(format!(
                "experimental design treats exactly n/2 units; n = {} is odd",
                self.n
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.scenario, self.link, self.design)
    }
}

/// Both potential outcomes and the drawn shift, for checks that need the
/// unobserved counterfactual.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub shift: Vec<f64>,
}

/// True observational propensity `s(αᵀx + α₀)`, zero-padding `α`.
pub fn true_propensity(x: &[f64]) -> f64 {
    let eta: f64 = PROPENSITY_INTERCEPT
        + x.iter()
            .zip(PROPENSITY_ALPHA.iter().chain(std::iter::repeat(&0.0)))
            .map(|(u, a)| u * a)
            .sum::<f64>();
    sigmoid(eta)
}

fn draw_potential(x: &DMatrix<f64>, params: &OutcomeParams, rng: &mut ChaCha8Rng) -> PotentialOutcomes {
    let n = x.nrows();
    let noise = Normal::new(0.0, params.noise_variance.sqrt()).expect("variance is positive");
    let base: Vec<f64> = (0..n)
        .map(|i| {
            let lin: f64 = x.row(i).iter().zip(&params.beta).map(|(u, b)| u * b).sum();
            params.link.apply(lin)
        })
        .collect();
    let eps0: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
    let eps1: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
    let shift: Vec<f64> = (0..n).map(|_| params.shift.sample(rng)).collect();
    PotentialOutcomes {
        y0: (0..n).map(|i| base[i] + eps0[i]).collect(),
        y1: (0..n).map(|i| base[i] + shift[i] + eps1[i]).collect(),
        shift,
    }
}

fn observe(po: &PotentialOutcomes, a: &[u8]) -> Vec<f64> {
    a.iter()
        .enumerate()
        .map(|(i, &ai)| if ai == 1 { po.y1[i] } else { po.y0[i] })
        .collect()
}

pub fn generate_with_potential(config: &ScenarioConfig) -> Result<(Dataset, PotentialOutcomes)> {
    config.validate()?;
    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // filled row by row so the draw order does not depend on storage layout
    let mut x = DMatrix::zeros(n, config.d_x);
    for i in 0..n {
        for j in 0..config.d_x {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let params = OutcomeParams::synthetic(config.scenario, config.link, config.d_x);
    let po = draw_potential(&x, &params, &mut rng);
    let a: Vec<u8> = match config.design {
        Design::Experimental => {
            let mut a: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
            a.shuffle(&mut rng);
            a
        }
        Design::Observational => (0..n)
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                u8::from(rng.random_bool(true_propensity(&row)))
            })
            .collect(),
    };
    let y = observe(&po, &a);
    Ok((Dataset::new(x, a, y)?, po))
}

pub fn generate(config: &ScenarioConfig) -> Result<Dataset> {
    generate_with_potential(config).map(|(d, _)| d)
}

/// Replaces the outcomes of `data` by draws from `params`, keeping its
/// covariates and treatment (semi-synthetic studies on real covariates).
pub fn synthesize_outcomes(data: &Dataset, params: &OutcomeParams, seed: u64) -> Result<(Dataset, PotentialOutcomes)> {
    if params.beta.len() != data.d() {
        return Err(Error::input(format!(
            "outcome coefficients have length {}, covariates have {} columns",
            params.beta.len(),
            data.d()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let po = draw_potential(data.x(), params, &mut rng);
    let y = observe(&po, data.treatment());
    Ok((data.with_outcomes(y)?, po))
}

/// `m` rows drawn uniformly with replacement.
pub fn bootstrap_subset(data: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m < 2 || m > data.n() {
        return Err(Error::input(format!(
            "bootstrap size must lie in [2, {}], got {m}",
            data.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..data.n())).collect();
    Ok(data.select(&idx))
}

/// Subtracts `ate` from the outcome of every treated unit.
pub fn subtract_ate(data: &Dataset, ate: f64) -> Dataset {
    let y = data
        .outcomes()
        .iter()
        .zip(data.treatment())
        .map(|(&y, &a)| if a == 1 { y - ate } else { y })
        .collect();
    data.with_outcomes(y).expect("shifting finite outcomes keeps them finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experimental_design_treats_half() {
        let c = ScenarioConfig::new(Scenario::II, Link::Linear, Design::Experimental, 350, 7);
        let d = generate(&c).unwrap();
        assert_eq!(d.n(), 350);
        assert_eq!(d.d(), 5);
        assert_eq!(d.n_treated(), 175);
    }

    #[test]
    fn odd_experimental_n_is_rejected() {
        let c = ScenarioConfig::new(Scenario::I, Link::Linear, Design::Experimental, 7, 1);
        assert!(generate(&c).is_err());
        let c = ScenarioConfig::new(Scenario::I, Link::Linear, Design::Observational, 7, 1);
        assert_eq!(generate(&c).unwrap().n(), 7);
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let c = ScenarioConfig::new(Scenario::IV, Link::Cosine, Design::Observational, 64, 99);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let other = ScenarioConfig { seed: 100, ..c };
        assert_ne!(generate(&c).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn consistency_picks_the_assigned_potential_outcome() {
        let c = ScenarioConfig::new(Scenario::III, Link::Linear, Design::Observational, 50, 3);
        let (d, po) = generate_with_potential(&c).unwrap();
        for i in 0..d.n() {
            let expect = if d.treatment()[i] == 1 { po.y1[i] } else { po.y0[i] };
            assert_eq!(d.outcomes()[i], expect);
            assert!(po.shift[i] == 1.0 || po.shift[i] == -1.0);
        }
    }

    #[test]
    fn subtract_ate_identity_and_inverse() {
        let c = ScenarioConfig::new(Scenario::II, Link::Linear, Design::Experimental, 20, 5);
        let d = generate(&c).unwrap();
        assert_eq!(subtract_ate(&d, 0.0), d);
        let shifted = subtract_ate(&d, 1.25);
        assert_eq!(subtract_ate(&shifted, -1.25), d);
        for i in 0..d.n() {
            if d.treatment()[i] == 0 {
                assert_eq!(shifted.outcomes()[i], d.outcomes()[i]);
            }
        }
    }

    #[test]
    fn bootstrap_bounds() {
        let c = ScenarioConfig::new(Scenario::I, Link::Linear, Design::Experimental, 10, 5);
        let d = generate(&c).unwrap();
        assert!(bootstrap_subset(&d, 11, 0).is_err());
        assert!(bootstrap_subset(&d, 1, 0).is_err());
        let b = bootstrap_subset(&d, 10, 0).unwrap();
        assert_eq!(b, bootstrap_subset(&d, 10, 0).unwrap());
        for i in 0..b.n() {
            let row = b.covariates_of(i);
            assert!((0..d.n()).any(|j| d.covariates_of(j) == row
                && d.outcomes()[j] == b.outcomes()[i]
                && d.treatment()[j] == b.treatment()[i]));
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("iii".parse::<Scenario>().unwrap(), Scenario::III);
        assert_eq!("Cosine".parse::<Link>().unwrap(), Link::Cosine);
        assert!("V".parse::<Scenario>().is_err());
    }

    #[test]
    fn ihdp_preset_coefficients() {
        let p = OutcomeParams::ihdp(Scenario::III, 18);
        assert_eq!(p.beta, vec![1.0; 18]);
        assert_eq!(p.shift, ShiftLaw::SignFlip(2.0));
        assert_eq!(OutcomeParams::ihdp(Scenario::IV, 3).shift, ShiftLaw::Uniform(4.0));
    }
}
