//! Posterior uncertainty propagation and predictive bands.
//!
//! Parameter uncertainty is propagated by resampling posterior draws
//! through the forward model on a fixed opening grid; its pointwise
//! variance adds to the discrepancy GP's predictive variance:
//!
//! ```text
//! y_pred(Δ) = y_model(Δ; θ*) + μ_δ(Δ)
//! σ²_pred(Δ) = σ²_c(Δ) + σ²_δ(Δ)
//! CI(α) = y_pred ± Φ⁻¹(1 − α/2)·σ_pred
//! ```
//!
//! Only the diagonal of the predictive covariance is carried.

use crate::error::{ConfigError, DataError, Error, NumericalError};
use crate::gp::TrainedGp;
use crate::mcmc::{histogram, Histogram, PosteriorSamples};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Forward-model ensemble on a fixed grid: pointwise moments plus the
/// raw member predictions for quantile and density export.
#[derive(Debug, Clone)]
pub struct PropagatedEnsemble {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    /// Pointwise sample variance (ddof = 1): the parameter-uncertainty
    /// diagonal.
    pub variance: Vec<f64>,
    /// Shape (kept members, grid points).
    pub members: Array2<f64>,
    pub n_skipped: usize,
}

impl PropagatedEnsemble {
    /// Pointwise sample quantiles (linear interpolation between order
    /// statistics), one row per grid point.
    pub fn quantiles(&self, probs: &[f64]) -> Result<Array2<f64>, Error> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::new(format!("quantile levels must lie in [0, 1], got {probs:?}")).into());
        }
        let n = self.members.nrows();
        let mut out = Array2::zeros((self.grid.len(), probs.len()));
        for g in 0..self.grid.len() {
            let mut col: Vec<f64> = self.members.column(g).to_vec();
            col.sort_by(f64::total_cmp);
            for (k, &p) in probs.iter().enumerate() {
                let rank = p * (n - 1) as f64;
                let lo = rank.floor() as usize;
                let hi = rank.ceil() as usize;
                let w = rank - lo as f64;
                out[[g, k]] = col[lo] * (1.0 - w) + col[hi] * w;
            }
        }
        Ok(out)
    }

    /// Per-grid-point binned density of member predictions.
    pub fn densities(&self, bins: usize) -> Vec<Histogram> {
        (0..self.grid.len())
            .map(|g| histogram(&self.members.column(g).to_vec(), bins))
            .collect()
    }
}

/// Draws `n_samples` posterior rows with replacement and pushes them
/// through `forward` (θ row → loads on the grid). Members with failed or
/// non-finite forward runs are skipped; more than 5% skipped is an error.
/// Reduction order is fixed, so results are seed-deterministic.
pub fn propagate<F>(
    samples: &PosteriorSamples,
    burn_in: f64,
    forward: F,
    grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<PropagatedEnsemble, Error>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Error> + Sync,
{
    if grid.is_empty() {
        return Err(ConfigError::new("empty prediction grid").into());
    }
    if n_samples < 2 {
        return Err(ConfigError::new(format!("n_samples must be >= 2, got {n_samples}")).into());
    }
    let kept = samples.kept(burn_in);
    if kept.nrows() == 0 {
        return Err(ConfigError::new("no posterior samples after burn-in").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| kept.row(rng.gen_range(0..kept.nrows())).to_vec())
        .collect();

    let runs: Vec<Result<Vec<f64>, Error>> = thetas.par_iter().map(|t| forward(t)).collect();
    let mut members = Vec::with_capacity(n_samples);
    let mut n_skipped = 0usize;
    for (idx, run) in runs.into_iter().enumerate() {
        match run {
            Ok(loads) if loads.len() == grid.len() && loads.iter().all(|v| v.is_finite()) => {
                members.push(loads);
            }
            Ok(loads) if loads.len() != grid.len() => {
                return Err(ConfigError::new(format!(
                    "forward model returned {} values for a {}-point grid",
                    loads.len(),
                    grid.len()
                ))
                .into());
            }
            Ok(_) => {
                log::debug!("skipping member {idx}: non-finite forward output");
                n_skipped += 1;
            }
            Err(err) => {
                log::debug!("skipping member {idx}: {err}");
                n_skipped += 1;
            }
        }
    }
    if n_skipped * 20 > n_samples {
        return Err(NumericalError::Degenerate(format!(
            "{n_skipped} of {n_samples} forward runs failed (over 5%)"
        ))
        .into());
    }
    let n = members.len();
    if n < 2 {
        return Err(NumericalError::Degenerate(format!("only {n} usable forward runs")).into());
    }
    if n_skipped > 0 {
        log::warn!("propagation skipped {n_skipped} of {n_samples} forward runs");
    }

    let mut matrix = Array2::zeros((n, grid.len()));
    for (r, loads) in members.iter().enumerate() {
        for (c, &v) in loads.iter().enumerate() {
            matrix[[r, c]] = v;
        }
    }
    let mut mean = vec![0.0; grid.len()];
    let mut variance = vec![0.0; grid.len()];
    for c in 0..grid.len() {
        let col = matrix.column(c);
        let m = col.sum() / n as f64;
        mean[c] = m;
        variance[c] = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    Ok(PropagatedEnsemble {
        grid: grid.to_vec(),
        mean,
        variance,
        members: matrix,
        n_skipped,
    })
}

/// Point prediction split into its model and discrepancy parts.
#[derive(Debug, Clone)]
pub struct ComposedPrediction {
    pub grid: Vec<f64>,
    pub model: Vec<f64>,
    pub gp_mean: Vec<f64>,
    pub gp_variance: Vec<f64>,
    /// model + gp_mean, per grid point.
    pub composed: Vec<f64>,
}

/// Forward output at the posterior means plus the GP discrepancy mean on
/// the grid (the GP input is the scalar opening).
pub fn compose_prediction<F>(
    forward: F,
    theta_star: &[f64],
    gp: &TrainedGp,
    grid: &[f64],
) -> Result<ComposedPrediction, Error>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Error>,
{
    let model = forward(theta_star)?;
    if model.len() != grid.len() {
        return Err(ConfigError::new(format!(
            "forward model returned {} values for a {}-point grid",
            model.len(),
            grid.len()
        ))
        .into());
    }
    let mut gp_mean = Vec::with_capacity(grid.len());
    let mut gp_variance = Vec::with_capacity(grid.len());
    for &delta in grid {
        let (m, v) = gp.predict(&[delta]);
        gp_mean.push(m);
        gp_variance.push(v);
    }
    let composed = model.iter().zip(&gp_mean).map(|(a, b)| a + b).collect();
    Ok(ComposedPrediction {
        grid: grid.to_vec(),
        model,
        gp_mean,
        gp_variance,
        composed,
    })
}

/// Central Gaussian interval: mean ± Φ⁻¹(1 − α/2)·σ.
pub fn confidence_interval(mean: f64, total_variance: f64, alpha: f64) -> Result<(f64, f64), Error> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConfigError::new(format!("alpha must lie in (0, 1), got {alpha}")).into());
    }
    if !(total_variance >= 0.0) {
        return Err(ConfigError::new(format!("variance must be >= 0, got {total_variance}")).into());
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * total_variance.sqrt();
    Ok((mean - half, mean + half))
}

/// One confidence band at a fixed significance level.
#[derive(Debug, Clone)]
pub struct BandInterval {
    pub alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Predictive band over the grid: composed mean, the two variance parts,
/// their exact sum, and intervals per requested α.
#[derive(Debug, Clone)]
pub struct PredictiveBand {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub var_params: Vec<f64>,
    pub var_discrepancy: Vec<f64>,
    pub var_total: Vec<f64>,
    pub intervals: Vec<BandInterval>,
}

pub fn predictive_band(
    grid: &[f64],
    mean: &[f64],
    var_params: &[f64],
    var_discrepancy: &[f64],
    alphas: &[f64],
) -> Result<PredictiveBand, Error> {
    let n = grid.len();
    if mean.len() != n || var_params.len() != n || var_discrepancy.len() != n {
        return Err(ConfigError::new(format!(
            "band inputs must share the grid length {n}, got mean {}, var_c {}, var_d {}",
            mean.len(),
            var_params.len(),
            var_discrepancy.len()
        ))
        .into());
    }
    if var_params
        .iter()
        .chain(var_discrepancy)
        .any(|&v| !(v.is_finite() && v >= 0.0))
    {
        return Err(ConfigError::new("variances must be finite and >= 0").into());
    }
    let var_total: Vec<f64> = var_params
        .iter()
        .zip(var_discrepancy)
        .map(|(a, b)| a + b)
        .collect();
    let mut intervals = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = confidence_interval(mean[i], var_total[i], alpha)?;
            lower.push(lo);
            upper.push(hi);
        }
        intervals.push(BandInterval { alpha, lower, upper });
    }
    Ok(PredictiveBand {
        grid: grid.to_vec(),
        mean: mean.to_vec(),
        var_params: var_params.to_vec(),
        var_discrepancy: var_discrepancy.to_vec(),
        var_total,
        intervals,
    })
}

/// Relative L2 error in percent: 100·‖y_exp − y_pred‖₂ / ‖y_exp‖₂.
pub fn percentage_error(y_exp: &[f64], y_pred: &[f64]) -> Result<f64, Error> {
    if y_exp.len() != y_pred.len() {
        return Err(DataError::Invalid(format!(
            "length mismatch: {} experimental vs {} predicted",
            y_exp.len(),
            y_pred.len()
        ))
        .into());
    }
    let norm: f64 = y_exp.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(DataError::Invalid("experimental vector has zero norm".into()).into());
    }
    let diff: f64 = y_exp
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * diff / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::czm::InterfaceParams;
    use crate::dcb::{simulate_curve, DcbGeometry, LoadingProgram};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::{Array2 as NdArray2, Array3};

    /// Chain whose first parameter takes the given values (repeated across
    /// 2 walkers), other entries constant.
    fn chain_from_values(values: &[f64], dim: usize) -> PosteriorSamples {
        let n_steps = values.len();
        let mut chain = Array3::zeros((n_steps, 2, dim));
        for (s, &v) in values.iter().enumerate() {
            for w in 0..2 {
                chain[[s, w, 0]] = v;
                for d in 1..dim {
                    chain[[s, w, d]] = 1.0;
                }
            }
        }
        PosteriorSamples {
            param_names: (0..dim).map(|d| format!("p{d}")).collect(),
            chain,
            log_posts: NdArray2::zeros((n_steps, 2)),
            accepted: 0,
            proposed: 0,
            audit: None,
        }
    }

    #[test]
    fn percentage_error_hand_values() {
        assert_eq!(percentage_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(percentage_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 100.0);
        assert_relative_eq!(
            percentage_error(&[3.0, 4.0], &[3.0, 0.0]).unwrap(),
            80.0,
            max_relative = 1e-12
        );
        assert!(percentage_error(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(percentage_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn confidence_interval_quantile_oracle() {
        let (lo, hi) = confidence_interval(2.0, 0.0, 0.05).unwrap();
        assert_eq!((lo, hi), (2.0, 2.0));
        let (lo, hi) = confidence_interval(0.0, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(hi, 1.959964, epsilon = 1e-5);
        assert_abs_diff_eq!(lo, -1.959964, epsilon = 1e-5);
        // Smaller alpha gives a wider interval.
        let (lo3, hi3) = confidence_interval(0.0, 1.0, 0.003).unwrap();
        assert!(lo3 < lo && hi3 > hi);
        assert!(confidence_interval(0.0, -1.0, 0.05).is_err());
        assert!(confidence_interval(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn band_variance_is_exactly_additive_and_nested() {
        let grid = [1.0, 2.0, 3.0];
        let mean = [10.0, 20.0, 30.0];
        let var_c = [0.4, 0.1, 0.25];
        let var_d = [0.6, 0.02, 1.75];
        let band = predictive_band(&grid, &mean, &var_c, &var_d, &[0.05, 0.003]).unwrap();
        for i in 0..3 {
            assert_eq!(band.var_total[i], var_c[i] + var_d[i]);
            let b95 = &band.intervals[0];
            let b997 = &band.intervals[1];
            assert!(b95.lower[i] <= mean[i] && mean[i] <= b95.upper[i]);
            assert!(b997.lower[i] <= b95.lower[i] && b95.upper[i] <= b997.upper[i]);
        }
        assert!(predictive_band(&grid, &mean, &var_c[..2], &var_d, &[0.05]).is_err());
        assert!(predictive_band(&grid, &mean, &[-0.1, 0.0, 0.0], &var_d, &[0.05]).is_err());
    }

    #[test]
    fn degenerate_posterior_propagates_zero_variance() {
        let samples = chain_from_values(&[3.0; 40], 2);
        let grid = [1.0, 2.0];
        let ens = propagate(
            &samples,
            0.5,
            |t| Ok(vec![t[0] * 1.0, t[0] * 2.0]),
            &grid,
            100,
            9,
        )
        .unwrap();
        assert_eq!(ens.variance, vec![0.0, 0.0]);
        assert_eq!(ens.mean, vec![3.0, 6.0]);
        assert_eq!(ens.n_skipped, 0);
    }

    #[test]
    fn elastic_stiffness_uncertainty_matches_closed_form() {
        // Rigid-arm elastic response is exactly linear in the stiffness, so
        // the propagated variance must be (B·L·Δ/3)²·Var(K) up to the
        // midpoint-quadrature factor.
        let geom = DcbGeometry {
            n_elements: 200,
            ..Default::default()
        };
        let k_values: Vec<f64> = (0..60).map(|i| 180.0 + 2.0 * i as f64).collect();
        let samples = chain_from_values(&k_values, 1);
        let program = LoadingProgram {
            rate: 5.08,
            delta_max: 0.6,
            n_steps: 12,
        };
        let grid = [0.2, 0.4, 0.6];
        let forward = |theta: &[f64]| -> Result<Vec<f64>, Error> {
            let params = InterfaceParams {
                k_normal: theta[0],
                k_tangential: theta[0],
                delta_onset: 1e9,
                delta_fail: 2e9,
                flow_rate: 1e-300,
                ..InterfaceParams::reference_polyethylene()
            };
            let curve = simulate_curve(&params, &geom, &program)?;
            Ok(grid.iter().map(|&d| curve.interpolate(d)).collect())
        };
        let n_samples = 400;
        let ens = propagate(&samples, 0.0, forward, &grid, n_samples, 4).unwrap();

        // Exact linearity: variance scales with Δ² between grid points.
        assert_relative_eq!(
            ens.variance[1] / ens.variance[0],
            4.0,
            max_relative = 1e-9
        );
        // Against the closed form with the chain's own spread, allowing
        // Monte Carlo error from resampling.
        let m = k_values.iter().sum::<f64>() / k_values.len() as f64;
        let var_k = k_values.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            / (k_values.len() - 1) as f64;
        let factor = geom.width * geom.length / 3.0;
        for (i, &d) in grid.iter().enumerate() {
            let expect = (factor * d).powi(2) * var_k;
            assert_relative_eq!(ens.variance[i], expect, max_relative = 0.35);
            assert_relative_eq!(ens.mean[i], factor * d * m, max_relative = 0.05);
        }

        // Same seed reruns bit-identically.
        let again = propagate(&samples, 0.0, forward, &grid, n_samples, 4).unwrap();
        assert_eq!(again.members, ens.members);
    }

    #[test]
    fn skip_budget_is_enforced() {
        // One poisoned row out of 50 stays under the 5% budget; half the
        // rows poisoned exceeds it.
        let mut values = vec![1.0; 50];
        values[17] = f64::MAX;
        let samples = chain_from_values(&values, 1);
        let forward = |t: &[f64]| -> Result<Vec<f64>, Error> {
            if t[0] > 2.0 {
                Err(NumericalError::non_finite("load", "test").into())
            } else {
                Ok(vec![t[0]])
            }
        };
        let ens = propagate(&samples, 0.0, forward, &[1.0], 200, 3).unwrap();
        assert!(ens.n_skipped > 0 && ens.n_skipped * 20 <= 200);

        let half_bad: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { 5.0 }).collect();
        let samples = chain_from_values(&half_bad, 1);
        let err = propagate(&samples, 0.0, forward, &[1.0], 200, 3).unwrap_err();
        assert!(matches!(
            err,
            Error::Numerical(NumericalError::Degenerate(_))
        ));
    }

    #[test]
    fn doubling_samples_is_consistent() {
        let values: Vec<f64> = (0..80).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let samples = chain_from_values(&values, 1);
        let forward = |t: &[f64]| -> Result<Vec<f64>, Error> { Ok(vec![3.0 * t[0]]) };
        let a = propagate(&samples, 0.0, forward, &[1.0], 500, 1).unwrap();
        let b = propagate(&samples, 0.0, forward, &[1.0], 1000, 2).unwrap();
        // Variance of a variance estimate: SE ≈ var·√(2/(n−1)).
        let se = a.variance[0] * (2.0 / 499.0_f64).sqrt();
        assert!(
            (a.variance[0] - b.variance[0]).abs() < 3.0 * se,
            "{} vs {}",
            a.variance[0],
            b.variance[0]
        );
    }

    #[test]
    fn composition_reduces_to_model_for_zero_gp() {
        use crate::gp::{fit, GpHyperparams};
        use ndarray::{Array1, Array2};
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let y = Array1::zeros(5);
        let gp = fit(x, y, GpHyperparams::new(vec![1.0])).unwrap();
        let grid = [0.5, 1.5, 2.5];
        let forward = |_: &[f64]| -> Result<Vec<f64>, Error> { Ok(vec![7.0, 8.0, 9.0]) };
        let pred = compose_prediction(forward, &[1.0], &gp, &grid).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(pred.composed[i], pred.model[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn composition_interpolates_observations_at_training_points() {
        use crate::gp::{fit, GpHyperparams};
        use ndarray::{Array1, Array2};
        // Observations = model + structured discrepancy; the GP is trained
        // on the residual, so the composition must hit the observations.
        let grid: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let model: Vec<f64> = grid.iter().map(|d| 2.0 * d).collect();
        let observed: Vec<f64> = grid.iter().map(|d| 2.0 * d + (0.5 * d).sin()).collect();
        let x = Array2::from_shape_fn((8, 1), |(i, _)| grid[i]);
        let y = Array1::from_shape_fn(8, |i| observed[i] - model[i]);
        let mut hyper = GpHyperparams::new(vec![1.5]);
        hyper.nugget = 1e-12;
        let gp = fit(x, y, hyper).unwrap();
        let model_for = model.clone();
        let forward = move |_: &[f64]| -> Result<Vec<f64>, Error> { Ok(model_for.clone()) };
        let pred = compose_prediction(forward, &[1.0], &gp, &grid).unwrap();
        for i in 0..8 {
            assert_relative_eq!(pred.composed[i], observed[i], max_relative = 1e-7, epsilon = 1e-7);
        }
    }

    #[test]
    fn quantiles_and_densities_have_expected_shape() {
        let values: Vec<f64> = (0..99).map(|i| i as f64).collect();
        let samples = chain_from_values(&values, 1);
        let forward = |t: &[f64]| -> Result<Vec<f64>, Error> { Ok(vec![t[0], -t[0]]) };
        let ens = propagate(&samples, 0.0, forward, &[1.0, 2.0], 300, 5).unwrap();
        let q = ens.quantiles(&[0.05, 0.5, 0.95]).unwrap();
        assert_eq!(q.shape(), &[2, 3]);
        assert!(q[[0, 0]] <= q[[0, 1]] && q[[0, 1]] <= q[[0, 2]]);
        let d = ens.densities(20);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].density.len(), 20);
        assert!(ens.quantiles(&[1.5]).is_err());
    }
}
