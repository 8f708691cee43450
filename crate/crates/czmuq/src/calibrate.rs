//! Bayesian calibration target for the cohesive interface parameters.
//!
//! The posterior combines the truncated-Gaussian/uniform priors with an
//! independent Gaussian likelihood over all observed load-displacement
//! points, pooled across loading rates:
//!
//! ```text
//! log p(θ|d) = log p(θ) + Σ_r Σ_j log N(F_obs | F_model(Δ_j; θ, rate_r), σ_r²)
//! ```
//!
//! Model loads are simulated once per rate and linearly interpolated at the
//! observed openings. The measurement noise is either fixed per rate or a
//! single calibrated variance appended to θ as a ninth dimension with a
//! uniform prior on [0, cap].

use crate::czm::InterfaceParams;
use crate::dcb::{simulate_curve, DcbGeometry, LoadDisplacementCurve, LoadingProgram};
use crate::dist::{DistributionSpec, PriorSet};
use crate::error::{ConfigError, Error};
use crate::tables::ObservationSet;
use rand::Rng;

/// Forward-model settings shared by every likelihood evaluation. Fields of
/// `base` that are not calibrated (friction, Boltzmann constant,
/// temperature) pass through to the simulated interface.
#[derive(Debug, Clone, Copy)]
pub struct ForwardSettings {
    pub geometry: DcbGeometry,
    pub n_steps: usize,
    /// Simulated opening range per rate; `None` uses each rate's largest
    /// observed opening.
    pub delta_max: Option<f64>,
    pub base: InterfaceParams,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        ForwardSettings {
            geometry: DcbGeometry::default(),
            n_steps: 400,
            delta_max: None,
            base: InterfaceParams::reference_polyethylene(),
        }
    }
}

/// Measurement-noise treatment in the likelihood.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Known standard deviation per observed rate series (N), matching the
    /// series order of the observation set.
    Fixed { sigmas: Vec<f64> },
    /// Scalar noise variance sampled jointly with θ, uniform on
    /// [0, var_cap] (N²).
    Calibrated { var_cap: f64 },
}

/// Joint calibration problem over all observed rates. In calibrated-noise
/// mode the parameter vector is [θ₁..θ₈, σ²], otherwise just θ.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub priors: PriorSet,
    pub data: ObservationSet,
    pub noise: NoiseModel,
    pub forward: ForwardSettings,
    programs: Vec<LoadingProgram>,
}

/// Maps the 8 calibrated entries onto interface parameters, tying the
/// tangential stiffness to the normal one (the opening here is pure mode I,
/// so the tangential value never enters the response).
pub fn params_from_theta(theta: &[f64], base: &InterfaceParams) -> InterfaceParams {
    InterfaceParams {
        k_normal: theta[0],
        k_tangential: theta[0],
        delta_onset: theta[1],
        delta_fail: theta[2],
        hardening: theta[3],
        yield_initial: theta[4],
        flow_rate: theta[5],
        activation_energy: theta[6],
        rate_sensitivity: theta[7],
        ..*base
    }
}

/// Default cap for the calibrated noise variance: (10% of the largest
/// observed load magnitude)².
pub fn noise_cap_from(data: &ObservationSet) -> f64 {
    let peak = data
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(_, f)| f.abs()))
        .fold(0.0_f64, f64::max);
    (0.1 * peak).powi(2)
}

impl CalibrationProblem {
    /// Builds the problem; `priors` covers the 8 interface entries and is
    /// extended internally with the noise dimension when calibrated.
    pub fn new(
        priors: PriorSet,
        data: ObservationSet,
        noise: NoiseModel,
        forward: ForwardSettings,
    ) -> Result<Self, Error> {
        if priors.dim() != 8 {
            return Err(ConfigError::new(format!(
                "interface priors must have 8 entries, got {}",
                priors.dim()
            ))
            .into());
        }
        if data.series.is_empty() {
            return Err(ConfigError::new("observation set is empty").into());
        }
        if forward.n_steps < 2 {
            return Err(ConfigError::new("forward n_steps must be >= 2").into());
        }
        forward.geometry.validate()?;
        let mut programs = Vec::with_capacity(data.series.len());
        for series in &data.series {
            let observed_max = series.points.last().map_or(0.0, |&(d, _)| d);
            let delta_max = forward.delta_max.unwrap_or(observed_max);
            if delta_max <= 0.0 {
                return Err(ConfigError::new(format!(
                    "rate {} mm/min has no positive opening to simulate",
                    series.rate
                ))
                .into());
            }
            let program = LoadingProgram {
                rate: series.rate,
                delta_max,
                n_steps: forward.n_steps,
            };
            program.validate()?;
            programs.push(program);
        }
        let priors = match &noise {
            NoiseModel::Fixed { sigmas } => {
                if sigmas.len() != data.series.len() {
                    return Err(ConfigError::new(format!(
                        "fixed noise needs {} sigmas (one per rate), got {}",
                        data.series.len(),
                        sigmas.len()
                    ))
                    .into());
                }
                if sigmas.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
                    return Err(ConfigError::new("noise sigmas must be positive").into());
                }
                priors
            }
            NoiseModel::Calibrated { var_cap } => {
                if !(var_cap.is_finite() && *var_cap > 0.0) {
                    return Err(ConfigError::new(format!(
                        "noise variance cap must be positive, got {var_cap}"
                    ))
                    .into());
                }
                let mut names: Vec<String> = priors.names.clone();
                names.push("noise_var".into());
                let mut dists = priors.dists.clone();
                dists.push(DistributionSpec::Uniform {
                    low: 0.0,
                    high: *var_cap,
                });
                PriorSet::new(names, dists)?
            }
        };
        Ok(CalibrationProblem {
            priors,
            data,
            noise,
            forward,
            programs,
        })
    }

    /// Sampling dimension: 8, plus 1 in calibrated-noise mode.
    pub fn dim(&self) -> usize {
        self.priors.dim()
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.priors.log_pdf(theta)
    }

    /// Noise standard deviation applying to a rate series under `theta`.
    fn sigma_for(&self, series_idx: usize, theta: &[f64]) -> f64 {
        match &self.noise {
            NoiseModel::Fixed { sigmas } => sigmas[series_idx],
            NoiseModel::Calibrated { .. } => theta[8].max(0.0).sqrt(),
        }
    }

    /// Simulates the forward model at `theta` for every observed rate.
    pub fn simulate_at(&self, theta: &[f64]) -> Result<Vec<LoadDisplacementCurve>, Error> {
        let params = params_from_theta(theta, &self.forward.base);
        params.validate()?;
        self.programs
            .iter()
            .map(|program| simulate_curve(&params, &self.forward.geometry, program))
            .collect()
    }

    /// Pooled Gaussian log-likelihood; −∞ when the forward model rejects
    /// the parameters or produces non-finite output.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let curves = match self.simulate_at(theta) {
            Ok(curves) => curves,
            Err(err) => {
                log::debug!("forward model failed, likelihood -inf: {err}");
                return f64::NEG_INFINITY;
            }
        };
        let mut total = 0.0;
        for (idx, (series, curve)) in self.data.series.iter().zip(&curves).enumerate() {
            let sigma = self.sigma_for(idx, theta);
            if !(sigma.is_finite() && sigma > 0.0) {
                return f64::NEG_INFINITY;
            }
            let var = sigma * sigma;
            let norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
            for &(delta, force) in &series.points {
                let model = curve.interpolate(delta);
                let residual = force - model;
                total += norm - 0.5 * residual * residual / var;
            }
        }
        if total.is_nan() {
            log::debug!("non-finite likelihood at theta {theta:?}");
            return f64::NEG_INFINITY;
        }
        total
    }

    /// log_prior + log_likelihood; skips the forward model outside prior
    /// support.
    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        let lp = self.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lp + self.log_likelihood(theta)
    }

    /// Draws initial walkers from the prior, redrawing any walker whose
    /// posterior is non-finite (for example a draw the forward model
    /// rejects).
    pub fn initial_walkers<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>, Error> {
        let mut walkers = Vec::with_capacity(n);
        for k in 0..n {
            let mut found = false;
            for _ in 0..1000 {
                let theta = self.priors.sample(rng);
                if self.log_posterior(&theta).is_finite() {
                    walkers.push(theta);
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(ConfigError::new(format!(
                    "could not draw a finite-posterior initial walker ({k} succeeded)"
                ))
                .into());
            }
        }
        Ok(walkers)
    }

    /// Model prediction at the observed openings of one rate series.
    pub fn predict_at_observations(
        &self,
        theta: &[f64],
        series_idx: usize,
    ) -> Result<Vec<f64>, Error> {
        let params = params_from_theta(theta, &self.forward.base);
        params.validate()?;
        let curve = simulate_curve(&params, &self.forward.geometry, &self.programs[series_idx])?;
        Ok(self.data.series[series_idx]
            .points
            .iter()
            .map(|&(delta, _)| curve.interpolate(delta))
            .collect())
    }
}
