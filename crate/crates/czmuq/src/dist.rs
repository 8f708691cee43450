//! Prior distributions: zero-truncated Gaussians and uniforms.
//!
//! All supports are constrained to the non-negative axis because every
//! cohesive parameter is physically positive. Truncated-Gaussian densities
//! are renormalized by the surviving mass Φ(μ/σ); sampling uses rejection,
//! which is efficient for the default priors (their mass below zero is at
//! most a fraction of a percent).

use crate::error::ConfigError;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// One-dimensional prior specification in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    /// Gaussian(mean, std) truncated to [0, ∞).
    TruncatedGaussian { mean: f64, std: f64 },
    /// Uniform on [low, high].
    Uniform { low: f64, high: f64 },
}

fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn standard_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            DistributionSpec::TruncatedGaussian { mean, std } => {
                if !mean.is_finite() || !(std.is_finite() && std > 0.0) {
                    return Err(ConfigError::new(format!(
                        "truncated Gaussian needs finite mean and std > 0, got ({mean}, {std})"
                    )));
                }
                if standard_normal_cdf(mean / std) <= 0.0 {
                    return Err(ConfigError::new(format!(
                        "truncated Gaussian ({mean}, {std}) has no mass on [0, inf)"
                    )));
                }
            }
            DistributionSpec::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && high > low) {
                    return Err(ConfigError::new(format!(
                        "uniform needs finite low < high, got ({low}, {high})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Log-density at `x`; −∞ outside the support.
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::TruncatedGaussian { mean, std } => {
                if x < 0.0 || !x.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mean) / std;
                let log_norm = standard_normal_cdf(mean / std).ln();
                -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - log_norm
            }
            DistributionSpec::Uniform { low, high } => {
                if x < low || x > high || !x.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    -(high - low).ln()
                }
            }
        }
    }

    /// Draws one sample; truncated Gaussians sample by rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::TruncatedGaussian { mean, std } => loop {
                let draw = mean + std * rng.sample::<f64, _>(rand_distr::StandardNormal);
                if draw >= 0.0 {
                    return draw;
                }
            },
            DistributionSpec::Uniform { low, high } => rng.gen_range(low..high),
        }
    }

    /// True mean and standard deviation of the (truncated) distribution.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            DistributionSpec::TruncatedGaussian { mean, std } => {
                // One-sided truncation at zero: a = (0 − μ)/σ,
                // λ = φ(a)/(1 − Φ(a)), E = μ + σλ, Var = σ²(1 − λ(λ − a)).
                let a = -mean / std;
                let lambda = standard_normal_pdf(a) / (1.0 - standard_normal_cdf(a));
                let m = mean + std * lambda;
                let v = std * std * (1.0 - lambda * (lambda - a));
                (m, v.max(0.0).sqrt())
            }
            DistributionSpec::Uniform { low, high } => {
                ((low + high) / 2.0, (high - low) / 12f64.sqrt())
            }
        }
    }

    /// Support bounds (inclusive where finite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DistributionSpec::TruncatedGaussian { .. } => (0.0, f64::INFINITY),
            DistributionSpec::Uniform { low, high } => (low, high),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x.is_finite() && x >= lo && x <= hi
    }
}

/// Named product of independent priors; the order defines the parameter
/// vector layout used everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    pub names: Vec<String>,
    pub dists: Vec<DistributionSpec>,
}

/// Parameter order of the calibrated cohesive parameter vector θ.
pub const CZM_PARAM_NAMES: [&str; 8] = [
    "k_normal",
    "delta_onset",
    "delta_fail",
    "hardening",
    "yield_initial",
    "flow_rate",
    "activation_energy",
    "rate_sensitivity",
];

impl PriorSet {
    pub fn new(names: Vec<String>, dists: Vec<DistributionSpec>) -> Result<Self, ConfigError> {
        if names.len() != dists.len() || names.is_empty() {
            return Err(ConfigError::new(format!(
                "prior set needs matching non-empty names and distributions, got {} and {}",
                names.len(),
                dists.len()
            )));
        }
        for (name, dist) in names.iter().zip(&dists) {
            dist.validate()
                .map_err(|e| ConfigError::new(format!("prior {name}: {e}")))?;
        }
        Ok(PriorSet { names, dists })
    }

    /// Default priors of the eight cohesive parameters.
    pub fn czm_default() -> Self {
        use DistributionSpec::{TruncatedGaussian as G, Uniform as U};
        let dists = vec![
            G { mean: 240.0, std: 40.0 },        // k_normal, MPa/mm
            U { low: 0.0, high: 10.0 },          // delta_onset, mm
            U { low: 10.0, high: 20.0 },         // delta_fail, mm
            G { mean: 58.0, std: 9.67 },         // hardening, MPa/mm
            G { mean: 60.7, std: 10.12 },        // yield_initial, MPa
            G { mean: 1e-6, std: 0.33e-6 },      // flow_rate, mm/s
            G { mean: 1.5e-19, std: 0.5e-19 },   // activation_energy, N·mm
            G { mean: 25.0, std: 4.17 },         // rate_sensitivity
        ];
        PriorSet {
            names: CZM_PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            dists,
        }
    }

    pub fn dim(&self) -> usize {
        self.dists.len()
    }

    /// Joint log-density; −∞ as soon as any coordinate leaves its support.
    pub fn log_pdf(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let mut total = 0.0;
        for (dist, &x) in self.dists.iter().zip(theta) {
            let lp = dist.log_pdf(x);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += lp;
        }
        total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.dists.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && self.dists.iter().zip(theta).all(|(d, &x)| d.contains(x))
    }
}
