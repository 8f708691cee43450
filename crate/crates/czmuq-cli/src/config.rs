//! TOML run configuration: every block is optional and falls back to the
//! reference defaults, so an empty file is a valid config. Stage seeds
//! left unset derive from the global seed at fixed offsets; the resolved
//! config written next to the outputs pins them, making reruns
//! reproducible from that file alone.

use czmuq::calibrate::{ForwardSettings, NoiseModel};
use czmuq::czm::InterfaceParams;
use czmuq::dcb::DcbGeometry;
use czmuq::dist::{DistributionSpec, PriorSet, CZM_PARAM_NAMES};
use czmuq::gp::GpSearchConfig;
use czmuq::mcmc::EnsembleConfig;
use czmuq::synth::{DiscrepancySpec, NoiseSpec, SynthConfig};
use czmuq::{ConfigError, Error};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub parameters: ParameterBlock,
    #[serde(default)]
    pub loading: LoadingBlock,
    #[serde(default)]
    pub priors: PriorBlock,
    #[serde(default)]
    pub sampler: SamplerBlock,
    #[serde(default)]
    pub noise: NoiseBlock,
    #[serde(default)]
    pub gp: GpBlock,
    #[serde(default)]
    pub uq: UqBlock,
    #[serde(default)]
    pub sobol: SobolBlock,
    #[serde(default)]
    pub synth: SynthBlock,
    #[serde(default)]
    pub paths: PathsBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryBlock {
    pub length: f64,
    pub width: f64,
    pub precrack: f64,
    pub n_elements: usize,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        let g = DcbGeometry::default();
        GeometryBlock {
            length: g.length,
            width: g.width,
            precrack: g.precrack,
            n_elements: g.n_elements,
        }
    }
}

impl GeometryBlock {
    pub fn build(&self) -> DcbGeometry {
        DcbGeometry {
            length: self.length,
            width: self.width,
            precrack: self.precrack,
            n_elements: self.n_elements,
        }
    }
}

/// Interface parameter values used wherever a concrete θ is needed
/// (simulate, synth truth, sensitivity base). Defaults are the calibrated
/// reference set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterBlock {
    pub k_normal: f64,
    pub k_tangential: f64,
    pub friction: f64,
    pub delta_onset: f64,
    pub delta_fail: f64,
    pub hardening: f64,
    pub yield_initial: f64,
    pub flow_rate: f64,
    pub activation_energy: f64,
    pub rate_sensitivity: f64,
    pub boltzmann: f64,
    pub temperature: f64,
}

impl Default for ParameterBlock {
    fn default() -> Self {
        let p = InterfaceParams::reference_polyethylene();
        ParameterBlock {
            k_normal: p.k_normal,
            k_tangential: p.k_tangential,
            friction: p.friction,
            delta_onset: p.delta_onset,
            delta_fail: p.delta_fail,
            hardening: p.hardening,
            yield_initial: p.yield_initial,
            flow_rate: p.flow_rate,
            activation_energy: p.activation_energy,
            rate_sensitivity: p.rate_sensitivity,
            boltzmann: p.boltzmann,
            temperature: p.temperature,
        }
    }
}

impl ParameterBlock {
    pub fn build(&self) -> InterfaceParams {
        InterfaceParams {
            k_normal: self.k_normal,
            k_tangential: self.k_tangential,
            friction: self.friction,
            delta_onset: self.delta_onset,
            delta_fail: self.delta_fail,
            hardening: self.hardening,
            yield_initial: self.yield_initial,
            flow_rate: self.flow_rate,
            activation_energy: self.activation_energy,
            rate_sensitivity: self.rate_sensitivity,
            boltzmann: self.boltzmann,
            temperature: self.temperature,
        }
    }

    /// The 8 calibrated entries in sampling order.
    pub fn theta(&self) -> Vec<f64> {
        vec![
            self.k_normal,
            self.delta_onset,
            self.delta_fail,
            self.hardening,
            self.yield_initial,
            self.flow_rate,
            self.activation_energy,
            self.rate_sensitivity,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadingBlock {
    /// Opening rates in mm/min, ascending.
    pub rates: Vec<f64>,
    pub delta_max: f64,
    pub n_steps: usize,
}

impl Default for LoadingBlock {
    fn default() -> Self {
        LoadingBlock {
            rates: czmuq::tables::DEFAULT_RATES.to_vec(),
            delta_max: 20.0,
            n_steps: 400,
        }
    }
}

/// One prior; `gaussian` means truncated at zero.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl PriorSpec {
    fn build(&self) -> DistributionSpec {
        match *self {
            PriorSpec::Gaussian { mean, std } => DistributionSpec::TruncatedGaussian { mean, std },
            PriorSpec::Uniform { low, high } => DistributionSpec::Uniform { low, high },
        }
    }
}

/// Per-parameter prior overrides; unset entries keep the reference table.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PriorBlock {
    pub k_normal: Option<PriorSpec>,
    pub delta_onset: Option<PriorSpec>,
    pub delta_fail: Option<PriorSpec>,
    pub hardening: Option<PriorSpec>,
    pub yield_initial: Option<PriorSpec>,
    pub flow_rate: Option<PriorSpec>,
    pub activation_energy: Option<PriorSpec>,
    pub rate_sensitivity: Option<PriorSpec>,
}

impl PriorBlock {
    pub fn build(&self) -> Result<PriorSet, Error> {
        let defaults = PriorSet::czm_default();
        let overrides = [
            &self.k_normal,
            &self.delta_onset,
            &self.delta_fail,
            &self.hardening,
            &self.yield_initial,
            &self.flow_rate,
            &self.activation_energy,
            &self.rate_sensitivity,
        ];
        let dists = defaults
            .dists
            .iter()
            .zip(overrides)
            .map(|(d, o)| o.as_ref().map_or_else(|| d.clone(), PriorSpec::build))
            .collect();
        Ok(PriorSet::new(
            CZM_PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            dists,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerBlock {
    pub n_walkers: usize,
    pub n_steps: usize,
    pub burn_in: f64,
    pub stretch: f64,
    pub seed: Option<u64>,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        SamplerBlock {
            n_walkers: 100,
            n_steps: 2000,
            burn_in: 0.5,
            stretch: 2.0,
            seed: None,
        }
    }
}

impl SamplerBlock {
    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_steps: self.n_steps,
            stretch: self.stretch,
            seed: self.seed.expect("seed resolved"),
            record_audit: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBlock {
    /// "calibrated" samples a scalar noise variance jointly with θ;
    /// "fixed" uses `sigmas`, aligned with ascending rates.
    pub mode: String,
    pub sigmas: Vec<f64>,
    /// Calibrated mode: variance cap = (fraction · peak observed load)².
    pub cap_fraction: f64,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock {
            mode: "calibrated".into(),
            sigmas: Vec::new(),
            cap_fraction: 0.1,
        }
    }
}

impl NoiseBlock {
    pub fn build(&self, data: &czmuq::tables::ObservationSet) -> Result<NoiseModel, Error> {
        match self.mode.as_str() {
            "fixed" => Ok(NoiseModel::Fixed {
                sigmas: self.sigmas.clone(),
            }),
            "calibrated" => {
                if !(self.cap_fraction.is_finite() && self.cap_fraction > 0.0) {
                    return Err(ConfigError::new(format!(
                        "noise cap fraction must be positive, got {}",
                        self.cap_fraction
                    ))
                    .into());
                }
                let peak = data
                    .series
                    .iter()
                    .flat_map(|s| s.points.iter().map(|&(_, f)| f.abs()))
                    .fold(0.0_f64, f64::max);
                Ok(NoiseModel::Calibrated {
                    var_cap: (self.cap_fraction * peak).powi(2),
                })
            }
            other => {
                Err(ConfigError::new(format!("unknown noise mode {other:?} (fixed | calibrated)"))
                    .into())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpBlock {
    pub n_train: usize,
    pub nugget: f64,
    pub population: usize,
    pub generations: usize,
    pub polish_iters: usize,
    /// Dense prediction table resolution per rate.
    pub pred_points: usize,
    pub seed: Option<u64>,
}

impl Default for GpBlock {
    fn default() -> Self {
        GpBlock {
            n_train: 20,
            nugget: czmuq::gp::DEFAULT_NUGGET,
            population: 16,
            generations: 40,
            polish_iters: 120,
            pred_points: 200,
            seed: None,
        }
    }
}

impl GpBlock {
    pub fn search(&self) -> GpSearchConfig {
        GpSearchConfig {
            population: self.population,
            generations: self.generations,
            polish_iters: self.polish_iters,
            seed: self.seed.expect("seed resolved"),
            nugget: self.nugget,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UqBlock {
    pub n_samples: usize,
    pub alphas: Vec<f64>,
    pub burn_in: f64,
    /// "observed" evaluates bands at the observation openings; a positive
    /// number switches to that many uniform grid points per rate.
    pub grid_points: usize,
    pub quantiles: Vec<f64>,
    pub density_bins: usize,
    pub seed: Option<u64>,
}

impl Default for UqBlock {
    fn default() -> Self {
        UqBlock {
            n_samples: 1000,
            alphas: vec![0.05, 0.003],
            burn_in: 0.5,
            grid_points: 0,
            quantiles: vec![0.025, 0.25, 0.5, 0.75, 0.975],
            density_bins: 50,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolBlock {
    pub n_base: usize,
    pub n_bootstrap: usize,
    pub rate: f64,
    pub seed: Option<u64>,
}

impl Default for SobolBlock {
    fn default() -> Self {
        SobolBlock {
            n_base: 1024,
            n_bootstrap: 100,
            rate: 5.08,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthBlock {
    pub n_points: usize,
    /// "absolute" | "relative_peak".
    pub noise_mode: String,
    pub noise_sigma: f64,
    pub noise_fraction: f64,
    /// "none" | "sine".
    pub discrepancy: String,
    pub sine_amplitude: f64,
    pub sine_wavelength: f64,
    pub sine_phase: f64,
    pub seed: Option<u64>,
}

impl Default for SynthBlock {
    fn default() -> Self {
        SynthBlock {
            n_points: 20,
            noise_mode: "absolute".into(),
            noise_sigma: 0.0,
            noise_fraction: 0.0,
            discrepancy: "none".into(),
            sine_amplitude: 0.0,
            sine_wavelength: 10.0,
            sine_phase: 0.0,
            seed: None,
        }
    }
}

impl SynthBlock {
    pub fn noise(&self) -> Result<NoiseSpec, Error> {
        match self.noise_mode.as_str() {
            "absolute" => Ok(NoiseSpec::Absolute {
                sigma: self.noise_sigma,
            }),
            "relative_peak" => Ok(NoiseSpec::RelativePeak {
                fraction: self.noise_fraction,
            }),
            other => Err(ConfigError::new(format!(
                "unknown noise mode {other:?} (absolute | relative_peak)"
            ))
            .into()),
        }
    }

    pub fn discrepancy_spec(&self) -> Result<DiscrepancySpec, Error> {
        match self.discrepancy.as_str() {
            "none" => Ok(DiscrepancySpec::None),
            "sine" => Ok(DiscrepancySpec::Sine {
                amplitude: self.sine_amplitude,
                wavelength: self.sine_wavelength,
                phase: self.sine_phase,
            }),
            other => {
                Err(ConfigError::new(format!("unknown discrepancy {other:?} (none | sine)")).into())
            }
        }
    }
}

/// Input file names; relative paths resolve against the working directory
/// first and fall back to the output directory, so chained stages pick up
/// each other's artifacts by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsBlock {
    pub observations: PathBuf,
    pub samples: PathBuf,
    pub summary: PathBuf,
    pub gp_dir: PathBuf,
}

impl Default for PathsBlock {
    fn default() -> Self {
        PathsBlock {
            observations: "observations.csv".into(),
            samples: "samples.csv".into(),
            summary: "summary.csv".into(),
            gp_dir: ".".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| czmuq::DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| {
            ConfigError::new(format!("{}: {e}", path.display())).into()
        })
    }

    /// Fills every unset stage seed from the global seed at fixed offsets.
    /// A `--seed` flag overrides all of them at once.
    pub fn resolve_seeds(&mut self, global: Option<u64>) {
        let base = global.unwrap_or(0);
        let slot = |explicit: &mut Option<u64>, offset: u64| {
            if global.is_some() || explicit.is_none() {
                *explicit = Some(base.wrapping_add(offset));
            }
        };
        slot(&mut self.sampler.seed, 0);
        slot(&mut self.gp.seed, 1);
        slot(&mut self.uq.seed, 2);
        slot(&mut self.sobol.seed, 3);
        slot(&mut self.synth.seed, 4);
    }

    pub fn forward_settings(&self) -> ForwardSettings {
        ForwardSettings {
            geometry: self.geometry.build(),
            n_steps: self.loading.n_steps,
            delta_max: None,
            base: self.parameters.build(),
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig, Error> {
        Ok(SynthConfig {
            rates: self.loading.rates.clone(),
            n_points: self.synth.n_points,
            delta_max: self.loading.delta_max,
            n_steps: self.loading.n_steps,
            geometry: self.geometry.build(),
            base: self.parameters.build(),
            noise: self.synth.noise()?,
            discrepancy: self.synth.discrepancy_spec()?,
            seed: self.synth.seed.expect("seed resolved"),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
