//! Synthetic observation generator with a known ground truth.
//!
//! Simulates the forward model at a chosen θ*, samples uniformly spaced
//! openings per rate, and adds optional structured discrepancy plus i.i.d.
//! Gaussian noise. Each rate draws from its own counter-mode RNG stream,
//! so the output is seed-deterministic and independent of rate order.

use crate::calibrate::params_from_theta;
use crate::czm::InterfaceParams;
use crate::dcb::{peak_load, simulate_curve, DcbGeometry, LoadingProgram};
use crate::dist::PriorSet;
use crate::error::{ConfigError, Error};
use crate::tables::{ObservationSet, RateSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Noise level applied to sampled loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// One standard deviation in load units for every rate.
    Absolute { sigma: f64 },
    /// Standard deviation as a fraction of each rate's peak load.
    RelativePeak { fraction: f64 },
}

/// Known model-data mismatch added on top of the forward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscrepancySpec {
    None,
    /// amplitude · sin(2π·Δ/wavelength + phase).
    Sine {
        amplitude: f64,
        wavelength: f64,
        phase: f64,
    },
}

impl DiscrepancySpec {
    pub fn value(&self, delta: f64) -> f64 {
        match *self {
            DiscrepancySpec::None => 0.0,
            DiscrepancySpec::Sine {
                amplitude,
                wavelength,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * delta / wavelength + phase).sin(),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let DiscrepancySpec::Sine {
            amplitude,
            wavelength,
            phase,
        } = *self
        {
            if !(amplitude.is_finite() && wavelength.is_finite() && phase.is_finite()) {
                return Err(ConfigError::new("sine discrepancy fields must be finite"));
            }
            if wavelength <= 0.0 {
                return Err(ConfigError::new(format!(
                    "sine wavelength must be positive, got {wavelength}"
                )));
            }
        }
        Ok(())
    }
}

/// Generation settings; defaults follow the reference experiment layout.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub rates: Vec<f64>,
    pub n_points: usize,
    pub delta_max: f64,
    pub n_steps: usize,
    pub geometry: DcbGeometry,
    pub base: InterfaceParams,
    pub noise: NoiseSpec,
    pub discrepancy: DiscrepancySpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rates: crate::tables::DEFAULT_RATES.to_vec(),
            n_points: 20,
            delta_max: 20.0,
            n_steps: 400,
            geometry: DcbGeometry::default(),
            base: InterfaceParams::reference_polyethylene(),
            noise: NoiseSpec::Absolute { sigma: 0.0 },
            discrepancy: DiscrepancySpec::None,
            seed: 0,
        }
    }
}

/// Everything needed to audit a synthetic data set after the fact.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub theta: Vec<f64>,
    /// Realized noise standard deviation per rate, in rate order.
    pub sigmas: Vec<(f64, f64)>,
    pub noise: NoiseSpec,
    pub discrepancy: DiscrepancySpec,
    pub seed: u64,
}

/// Simulates observations at θ* (which must lie in the prior support):
/// per rate, `n_points` loads at openings j·Δmax/n_points for j = 1..n,
/// plus discrepancy and noise.
pub fn generate(
    theta: &[f64],
    priors: &PriorSet,
    config: &SynthConfig,
) -> Result<(ObservationSet, SyntheticTruth), Error> {
    if !priors.contains(theta) {
        return Err(ConfigError::new(format!(
            "generating parameters lie outside the prior support: {theta:?}"
        ))
        .into());
    }
    if config.rates.is_empty() {
        return Err(ConfigError::new("need at least one rate").into());
    }
    if config.n_points < 2 {
        return Err(ConfigError::new(format!(
            "need at least 2 points per rate, got {}",
            config.n_points
        ))
        .into());
    }
    config.discrepancy.validate()?;
    match config.noise {
        NoiseSpec::Absolute { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
            return Err(ConfigError::new(format!("noise sigma must be >= 0, got {sigma}")).into());
        }
        NoiseSpec::RelativePeak { fraction } if !(fraction.is_finite() && fraction >= 0.0) => {
            return Err(
                ConfigError::new(format!("noise fraction must be >= 0, got {fraction}")).into(),
            );
        }
        _ => {}
    }
    let params = params_from_theta(theta, &config.base);
    params.validate()?;

    let mut series = Vec::with_capacity(config.rates.len());
    let mut sigmas = Vec::with_capacity(config.rates.len());
    for (rate_idx, &rate) in config.rates.iter().enumerate() {
        let program = LoadingProgram {
            rate,
            delta_max: config.delta_max,
            n_steps: config.n_steps,
        };
        let curve = simulate_curve(&params, &config.geometry, &program)?;
        let sigma = match config.noise {
            NoiseSpec::Absolute { sigma } => sigma,
            NoiseSpec::RelativePeak { fraction } => fraction * peak_load(&curve)?.1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rate_idx as u64 + 1);
        let gauss = Normal::new(0.0, 1.0).expect("unit normal");
        let points: Vec<(f64, f64)> = (1..=config.n_points)
            .map(|j| {
                let delta = config.delta_max * j as f64 / config.n_points as f64;
                let clean = curve.interpolate(delta) + config.discrepancy.value(delta);
                let noisy = clean + sigma * gauss.sample(&mut rng);
                (delta, noisy)
            })
            .collect();
        sigmas.push((rate, sigma));
        series.push(RateSeries { rate, points });
    }
    Ok((
        ObservationSet { series },
        SyntheticTruth {
            theta: theta.to_vec(),
            sigmas,
            noise: config.noise,
            discrepancy: config.discrepancy,
            seed: config.seed,
        },
    ))
}
