//! Affine-invariant ensemble sampler (stretch move).
//!
//! An ensemble of walkers explores the target; each walker proposes
//!
//! ```text
//! y = x_c + z (x − x_c),    z ~ g(z) ∝ 1/√z on [1/a, a]
//! ```
//!
//! against a complementary walker x_c, accepted with probability
//! min(1, z^(d−1) · p(y)/p(x)). The ensemble is updated in two half-sweeps
//! so that every proposal draws its partner from the half that is held
//! fixed, which keeps the update valid and lets all likelihood evaluations
//! of a half-sweep run in parallel.
//!
//! Reproducibility contract: every walker owns a counter-mode RNG stream
//! derived from the master seed, all draws happen in a serial pass, and
//! parallel evaluation results are collected in walker order, so chains
//! are bit-identical regardless of thread count.

use crate::error::{ConfigError, Error, NumericalError};
use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Sampler settings; `stretch` is the move's scale parameter a.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub n_steps: usize,
    pub stretch: f64,
    pub seed: u64,
    /// Keep a per-proposal audit record (z, log-posteriors, decision).
    pub record_audit: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_steps: 1000,
            stretch: 2.0,
            seed: 0,
            record_audit: false,
        }
    }
}

/// One audited stretch-move proposal.
#[derive(Debug, Clone, Copy)]
pub struct ProposalRecord {
    pub sweep: usize,
    pub walker: usize,
    pub z: f64,
    pub log_post_current: f64,
    pub log_post_proposed: f64,
    /// (d−1)·ln z + log p(y) − log p(x), the accept threshold for ln u.
    pub log_acceptance_ratio: f64,
    pub accepted: bool,
}

/// Recorded chain: one state per walker per sweep.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub param_names: Vec<String>,
    /// Shape (n_steps, n_walkers, dim); states after each full sweep.
    pub chain: Array3<f64>,
    /// Shape (n_steps, n_walkers).
    pub log_posts: Array2<f64>,
    pub accepted: u64,
    pub proposed: u64,
    pub audit: Option<Vec<ProposalRecord>>,
}

/// Per-parameter posterior location and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl PosteriorSamples {
    pub fn n_steps(&self) -> usize {
        self.chain.shape()[0]
    }

    pub fn n_walkers(&self) -> usize {
        self.chain.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.chain.shape()[2]
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }

    fn burn_split(&self, burn_in: f64) -> usize {
        let frac = burn_in.clamp(0.0, 0.95);
        (self.n_steps() as f64 * frac).floor() as usize
    }

    /// Post-burn-in samples flattened to rows (step-major, then walker).
    pub fn kept(&self, burn_in: f64) -> Array2<f64> {
        let start = self.burn_split(burn_in);
        let steps = self.n_steps() - start;
        let rows = steps * self.n_walkers();
        let mut out = Array2::zeros((rows, self.dim()));
        for (r, (step, walker)) in (start..self.n_steps())
            .flat_map(|s| (0..self.n_walkers()).map(move |w| (s, w)))
            .enumerate()
        {
            out.row_mut(r).assign(&self.chain.slice(s![step, walker, ..]));
        }
        out
    }

    /// Column means and standard deviations (ddof = 1) after burn-in.
    pub fn summary(&self, burn_in: f64) -> Result<Vec<ParamSummary>, Error> {
        let kept = self.kept(burn_in);
        let n = kept.nrows();
        if n < 2 {
            return Err(ConfigError::new(format!(
                "posterior summary needs at least 2 kept samples, got {n}"
            ))
            .into());
        }
        let mut out = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let col = kept.column(d);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            out.push(ParamSummary {
                name: self.param_names[d].clone(),
                mean,
                std: var.sqrt(),
            });
        }
        Ok(out)
    }
}

/// Integrated autocorrelation time of the per-sweep ensemble mean of one
/// parameter, by the initial-positive-sequence rule. Used to convert the
/// post-burn-in sample count into an effective sample size when forming
/// standard errors of posterior means.
pub fn integrated_autocorr_time(samples: &PosteriorSamples, param: usize, burn_in: f64) -> f64 {
    let start = samples.burn_split(burn_in);
    let steps = samples.n_steps() - start;
    let series: Vec<f64> = (start..samples.n_steps())
        .map(|step| {
            samples.chain.slice(s![step, .., param]).sum() / samples.n_walkers() as f64
        })
        .collect();
    let mean = series.iter().sum::<f64>() / steps as f64;
    let c0 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / steps as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for k in 1..steps / 2 {
        let ck = (0..steps - k)
            .map(|i| (series[i] - mean) * (series[i + k] - mean))
            .sum::<f64>()
            / steps as f64;
        let rho = ck / c0;
        if rho <= 0.0 {
            break;
        }
        tau += 2.0 * rho;
    }
    tau
}

/// Per-parameter histogram with `edges.len() == density.len() + 1` and
/// densities normalized to unit mass.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

/// Plot-ready convergence diagnostics.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Shape (n_steps, dim): cumulative mean over all walkers and sweeps
    /// up to each sweep.
    pub running_mean: Array2<f64>,
    /// Post-burn-in binned density per parameter.
    pub densities: Vec<Histogram>,
}

/// Running means over the whole chain plus post-burn-in densities. The
/// trace itself is the recorded chain; callers export it directly.
pub fn diagnostics(samples: &PosteriorSamples, burn_in: f64, bins: usize) -> Diagnostics {
    let (steps, walkers, dim) = (samples.n_steps(), samples.n_walkers(), samples.dim());
    let mut running_mean = Array2::zeros((steps, dim));
    let mut cumulative = vec![0.0; dim];
    for step in 0..steps {
        for d in 0..dim {
            cumulative[d] += samples.chain.slice(s![step, .., d]).sum();
            running_mean[[step, d]] = cumulative[d] / ((step + 1) * walkers) as f64;
        }
    }
    let kept = samples.kept(burn_in);
    let bins = bins.max(1);
    let densities = (0..dim)
        .map(|d| {
            let col: Vec<f64> = kept.column(d).to_vec();
            histogram(&col, bins)
        })
        .collect();
    Diagnostics {
        running_mean,
        densities,
    }
}

/// Equal-width histogram normalized to unit mass; a degenerate value
/// range collapses to a single bin.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) || lo == hi {
        // Degenerate spread: a single bin of unit mass around the value.
        let center = if lo.is_finite() { lo } else { 0.0 };
        return Histogram {
            edges: vec![center - 0.5, center + 0.5],
            density: vec![1.0],
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let raw = ((v - lo) / width) as usize;
        counts[raw.min(bins - 1)] += 1;
    }
    let total = values.len() as f64;
    Histogram {
        edges: (0..=bins).map(|k| lo + k as f64 * width).collect(),
        density: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
    }
}

fn validate_ensemble(
    initial: &[Vec<f64>],
    config: &EnsembleConfig,
) -> Result<usize, ConfigError> {
    if initial.len() < 4 || initial.len() % 2 != 0 {
        return Err(ConfigError::new(format!(
            "walker count must be even and >= 4, got {}",
            initial.len()
        )));
    }
    let dim = initial[0].len();
    if dim == 0 || initial.iter().any(|w| w.len() != dim) {
        return Err(ConfigError::new(
            "initial walkers must share one nonzero dimension",
        ));
    }
    if initial.len() < 2 * dim {
        return Err(ConfigError::new(format!(
            "need at least 2x dim = {} walkers, got {}",
            2 * dim,
            initial.len()
        )));
    }
    if !(config.stretch.is_finite() && config.stretch > 1.0) {
        return Err(ConfigError::new(format!(
            "stretch parameter must be > 1, got {}",
            config.stretch
        )));
    }
    if config.n_steps == 0 {
        return Err(ConfigError::new("n_steps must be >= 1"));
    }
    Ok(dim)
}

/// Runs the stretch-move ensemble on `log_post` from the given initial
/// walkers. Every initial walker must have a finite log-posterior.
/// Signals a stalled run when over 99% of proposals are rejected across a
/// 100-sweep window.
pub fn sample_ensemble<F>(
    log_post: F,
    initial: &[Vec<f64>],
    config: &EnsembleConfig,
) -> Result<PosteriorSamples, Error>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = validate_ensemble(initial, config)?;
    let n_walkers = initial.len();
    let mut positions: Vec<Vec<f64>> = initial.to_vec();
    let mut log_probs: Vec<f64> = positions.par_iter().map(|w| log_post(w)).collect();
    if let Some(k) = log_probs.iter().position(|lp| !lp.is_finite()) {
        return Err(ConfigError::new(format!(
            "initial walker {k} has non-finite log-posterior {}",
            log_probs[k]
        ))
        .into());
    }

    let mut rngs: Vec<ChaCha8Rng> = (0..n_walkers)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64 + 1);
            rng
        })
        .collect();

    let mut chain = Array3::zeros((config.n_steps, n_walkers, dim));
    let mut log_posts = Array2::zeros((config.n_steps, n_walkers));
    let mut audit = config.record_audit.then(Vec::new);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let window = 100usize;
    let mut accepted_per_sweep: Vec<u64> = Vec::with_capacity(config.n_steps);

    let half = n_walkers / 2;
    let a = config.stretch;
    for sweep in 0..config.n_steps {
        let mut sweep_accepts = 0u64;
        for phase in 0..2 {
            let (active_start, active_len, other_start, other_len) = if phase == 0 {
                (0, half, half, n_walkers - half)
            } else {
                (half, n_walkers - half, 0, half)
            };
            // Serial draw pass: fixed RNG consumption per walker per sweep.
            let mut moves = Vec::with_capacity(active_len);
            for j in 0..active_len {
                let k = active_start + j;
                let rng = &mut rngs[k];
                let u: f64 = rng.gen();
                let z = ((a - 1.0) * u + 1.0).powi(2) / a;
                let partner = other_start + rng.gen_range(0..other_len);
                let ln_u: f64 = rng.gen::<f64>().ln();
                let proposal: Vec<f64> = (0..dim)
                    .map(|d| positions[partner][d] + z * (positions[k][d] - positions[partner][d]))
                    .collect();
                moves.push((k, z, ln_u, proposal));
            }
            // Parallel evaluation, order-stable collection.
            let evals: Vec<f64> = moves
                .par_iter()
                .map(|(_, _, _, proposal)| log_post(proposal))
                .collect();
            // Serial accept/update pass.
            for ((k, z, ln_u, proposal), lp_new) in moves.into_iter().zip(evals) {
                let lp_old = log_probs[k];
                let log_ratio = (dim as f64 - 1.0) * z.ln() + lp_new - lp_old;
                let accept = ln_u < log_ratio;
                if let Some(log) = audit.as_mut() {
                    log.push(ProposalRecord {
                        sweep,
                        walker: k,
                        z,
                        log_post_current: lp_old,
                        log_post_proposed: lp_new,
                        log_acceptance_ratio: log_ratio,
                        accepted: accept,
                    });
                }
                proposed += 1;
                if accept {
                    positions[k] = proposal;
                    log_probs[k] = lp_new;
                    accepted += 1;
                    sweep_accepts += 1;
                }
            }
        }
        for (k, pos) in positions.iter().enumerate() {
            for (d, &v) in pos.iter().enumerate() {
                chain[[sweep, k, d]] = v;
            }
            log_posts[[sweep, k]] = log_probs[k];
        }
        accepted_per_sweep.push(sweep_accepts);
        if accepted_per_sweep.len() >= window {
            let recent: u64 = accepted_per_sweep[accepted_per_sweep.len() - window..]
                .iter()
                .sum();
            let possible = (window * n_walkers) as u64;
            if (recent as f64) < 0.01 * possible as f64 {
                return Err(NumericalError::StalledSampler {
                    rate: recent as f64 / possible as f64,
                    window,
                }
                .into());
            }
        }
    }

    Ok(PosteriorSamples {
        param_names: (0..dim).map(|d| format!("p{d}")).collect(),
        chain,
        log_posts,
        accepted,
        proposed,
        audit,
    })
}
