//! Ordinary-kriging Gaussian process for additive model discrepancy.
//!
//! Constant mean, anisotropic squared-exponential correlation
//!
//! ```text
//! R(x, x') = exp(-1/2 Σ_k ((x_k - x'_k)/ℓ_k)²)
//! ```
//!
//! with generalized-least-squares mean and plug-in process variance:
//!
//! ```text
//! β̂  = (1ᵀR⁻¹Ȳ)/(1ᵀR⁻¹1)
//! σ̂² = (Ȳ-1β̂)ᵀR⁻¹(Ȳ-1β̂)/N
//! μ(x)  = β̂ + r(x)ᵀR⁻¹(Ȳ-1β̂)
//! σ²(x) = σ̂²(1 - rᵀR⁻¹r + u²/(1ᵀR⁻¹1)),   u = 1ᵀR⁻¹r - 1
//! ```
//!
//! Lengthscales are chosen by minimizing the leave-one-out mean squared
//! error, computed through a bordered-matrix identity instead of N refits.

use crate::calibrate::CalibrationProblem;
use crate::error::{ConfigError, Error, NumericalError};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Correlation hyperparameters; the nugget is added to the unit diagonal
/// of R, so it is a relative jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
}

pub const DEFAULT_NUGGET: f64 = 1e-10;

impl GpHyperparams {
    pub fn new(lengthscales: Vec<f64>) -> Self {
        GpHyperparams {
            lengthscales,
            nugget: DEFAULT_NUGGET,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lengthscales.is_empty()
            || self
                .lengthscales
                .iter()
                .any(|&l| !(l.is_finite() && l > 0.0))
        {
            return Err(ConfigError::new(format!(
                "lengthscales must be positive, got {:?}",
                self.lengthscales
            )));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(ConfigError::new(format!(
                "nugget must be non-negative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }
}

/// Ellipsoidal (per-dimension scaled) squared-exponential correlation.
pub fn correlation(x: &[f64], x_prime: &[f64], hyper: &GpHyperparams) -> f64 {
    debug_assert_eq!(x.len(), x_prime.len());
    debug_assert_eq!(x.len(), hyper.lengthscales.len());
    let q: f64 = x
        .iter()
        .zip(x_prime)
        .zip(&hyper.lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    (-0.5 * q).exp()
}

/// Immutable fitted GP; safe to share across threads for prediction.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    pub hyper: GpHyperparams,
    pub beta_hat: f64,
    /// Plug-in process variance sigma-hat squared.
    pub process_variance: f64,
    x: Array2<f64>,
    y: Array1<f64>,
    chol: Cholesky<f64, Dyn>,
    /// R⁻¹(Ȳ - 1β̂).
    alpha: DVector<f64>,
    /// 1ᵀR⁻¹1.
    ones_r_ones: f64,
}

fn correlation_matrix(x: &Array2<f64>, hyper: &GpHyperparams) -> DMatrix<f64> {
    let n = x.nrows();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + hyper.nugget;
        for j in 0..i {
            let v = correlation(
                x.row(i).as_slice().unwrap(),
                x.row(j).as_slice().unwrap(),
                hyper,
            );
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

fn check_training_set(x: &Array2<f64>, y: &Array1<f64>, hyper: &GpHyperparams) -> Result<(), Error> {
    hyper.validate()?;
    if x.nrows() < 2 {
        return Err(ConfigError::new(format!("need at least 2 training points, got {}", x.nrows())).into());
    }
    if x.nrows() != y.len() {
        return Err(ConfigError::new(format!(
            "{} inputs vs {} outputs",
            x.nrows(),
            y.len()
        ))
        .into());
    }
    if hyper.lengthscales.len() != x.ncols() {
        return Err(ConfigError::new(format!(
            "{} lengthscales for {} input dimensions",
            hyper.lengthscales.len(),
            x.ncols()
        ))
        .into());
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(ConfigError::new("training data must be finite").into());
    }
    Ok(())
}

/// Fits the constant-mean GP; fails with a nugget hint when the
/// correlation matrix is not positive definite.
pub fn fit(x: Array2<f64>, y: Array1<f64>, hyper: GpHyperparams) -> Result<TrainedGp, Error> {
    check_training_set(&x, &y, &hyper)?;
    let n = x.nrows();
    let r = correlation_matrix(&x, &hyper);
    let chol = Cholesky::new(r).ok_or_else(|| {
        NumericalError::Factorization(format!(
            "correlation matrix not positive definite at lengthscales {:?}; \
             increase the nugget (currently {}) or drop duplicate inputs",
            hyper.lengthscales, hyper.nugget
        ))
    })?;
    let ones = DVector::from_element(n, 1.0);
    let yv = DVector::from_iterator(n, y.iter().cloned());
    let r_inv_ones = chol.solve(&ones);
    let ones_r_ones = ones.dot(&r_inv_ones);
    if !(ones_r_ones.is_finite() && ones_r_ones > 0.0) {
        return Err(NumericalError::Factorization(format!(
            "degenerate generalized-least-squares normalization {ones_r_ones}"
        ))
        .into());
    }
    let beta_hat = r_inv_ones.dot(&yv) / ones_r_ones;
    let centered = &yv - ones * beta_hat;
    let alpha = chol.solve(&centered);
    let process_variance = (centered.dot(&alpha) / n as f64).max(0.0);
    Ok(TrainedGp {
        hyper,
        beta_hat,
        process_variance,
        x,
        y,
        chol,
        alpha,
        ones_r_ones,
    })
}

impl TrainedGp {
    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn training_inputs(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn training_outputs(&self) -> &Array1<f64> {
        &self.y
    }

    /// Predictive mean and variance at one point. The variance includes
    /// the mean-estimation correction u²/(1ᵀR⁻¹1) and is clamped at zero
    /// against round-off.
    pub fn predict(&self, point: &[f64]) -> (f64, f64) {
        let n = self.n_train();
        let r = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                correlation(self.x.row(i).as_slice().unwrap(), point, &self.hyper)
            }),
        );
        let mean = self.beta_hat + r.dot(&self.alpha);
        let r_inv_r = self.chol.solve(&r);
        let u = r_inv_r.sum() - 1.0;
        let var = self.process_variance * (1.0 - r.dot(&r_inv_r) + u * u / self.ones_r_ones);
        if var < -1e-6 * self.process_variance.max(f64::MIN_POSITIVE) {
            log::warn!("predictive variance {var} clamped to 0 at {point:?}");
        }
        (mean, var.max(0.0))
    }

    /// Predictive mean over many points.
    pub fn predict_many(&self, points: &Array2<f64>) -> Vec<(f64, f64)> {
        (0..points.nrows())
            .map(|i| self.predict(points.row(i).as_slice().unwrap()))
            .collect()
    }
}

/// Leave-one-out mean squared error through the bordered-matrix identity:
/// with B = [[R, 1], [1ᵀ, 0]] and w = B⁻¹[Ȳ; 0], the LOO residual at
/// point i is w_i / (B⁻¹)_ii. Equivalent to N refits, verified against
/// them on small sets.
pub fn loo_mse(x: &Array2<f64>, y: &Array1<f64>, hyper: &GpHyperparams) -> Result<f64, Error> {
    check_training_set(x, y, hyper)?;
    let n = x.nrows();
    let r = correlation_matrix(x, hyper);
    let mut b = DMatrix::zeros(n + 1, n + 1);
    b.view_mut((0, 0), (n, n)).copy_from(&r);
    for i in 0..n {
        b[(i, n)] = 1.0;
        b[(n, i)] = 1.0;
    }
    let b_inv = b.try_inverse().ok_or_else(|| {
        NumericalError::Factorization("bordered LOO matrix is singular".into())
    })?;
    let mut mse = 0.0;
    for i in 0..n {
        let w_i: f64 = (0..n).map(|j| b_inv[(i, j)] * y[j]).sum();
        let d_i = b_inv[(i, i)];
        if !(d_i.is_finite() && d_i.abs() > 0.0) {
            return Err(NumericalError::Factorization(format!(
                "LOO identity degenerate at point {i}"
            ))
            .into());
        }
        mse += (w_i / d_i).powi(2);
    }
    Ok(mse / n as f64)
}

/// Search budget for hyperparameter selection. The global stage is
/// differential evolution over log-lengthscales; the local stage is a
/// Nelder-Mead polish from the best member.
#[derive(Debug, Clone, Copy)]
pub struct GpSearchConfig {
    pub population: usize,
    pub generations: usize,
    pub polish_iters: usize,
    pub seed: u64,
    pub nugget: f64,
}

impl Default for GpSearchConfig {
    fn default() -> Self {
        GpSearchConfig {
            population: 16,
            generations: 40,
            polish_iters: 120,
            seed: 0,
            nugget: DEFAULT_NUGGET,
        }
    }
}

/// Log-lengthscale box derived from the data extent per input dimension.
fn search_bounds(x: &Array2<f64>) -> Vec<(f64, f64)> {
    (0..x.ncols())
        .map(|d| {
            let col = x.column(d);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            ((span * 1e-2).ln(), (span * 10.0).ln())
        })
        .collect()
}

fn loo_objective(x: &Array2<f64>, y: &Array1<f64>, log_ls: &[f64], nugget: f64) -> f64 {
    let hyper = GpHyperparams {
        lengthscales: log_ls.iter().map(|v| v.exp()).collect(),
        nugget,
    };
    match loo_mse(x, y, &hyper) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Minimizes the LOO error over log-lengthscales; deterministic for a
/// fixed seed and never fails (returns the best point seen).
pub fn optimize_hyperparams(
    x: &Array2<f64>,
    y: &Array1<f64>,
    config: &GpSearchConfig,
) -> Result<GpHyperparams, Error> {
    if x.nrows() < 3 {
        return Err(ConfigError::new(format!(
            "hyperparameter search needs at least 3 points, got {}",
            x.nrows()
        ))
        .into());
    }
    let bounds = search_bounds(x);
    let d = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pop_size = config.population.max(4);
    let f_weight = 0.8;
    let crossover = 0.9;

    let mut population: Vec<Vec<f64>> = (0..pop_size)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect()
        })
        .collect();
    let mut scores: Vec<f64> = population
        .iter()
        .map(|p| loo_objective(x, y, p, config.nugget))
        .collect();

    for _ in 0..config.generations {
        for i in 0..pop_size {
            let mut pick = || loop {
                let k = rng.gen_range(0..pop_size);
                if k != i {
                    return k;
                }
            };
            let (a, b, c) = (pick(), pick(), pick());
            let force_dim = rng.gen_range(0..d);
            let mut trial = population[i].clone();
            for k in 0..d {
                let mutate = rng.gen::<f64>() < crossover || k == force_dim;
                if mutate {
                    let v = population[a][k] + f_weight * (population[b][k] - population[c][k]);
                    trial[k] = v.clamp(bounds[k].0, bounds[k].1);
                }
            }
            let score = loo_objective(x, y, &trial, config.nugget);
            if score <= scores[i] {
                population[i] = trial;
                scores[i] = score;
            }
        }
    }

    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let polished = nelder_mead(
        |p| loo_objective(x, y, p, config.nugget),
        &population[best],
        &bounds,
        config.polish_iters,
    );
    Ok(GpHyperparams {
        lengthscales: polished.iter().map(|v| v.exp()).collect(),
        nugget: config.nugget,
    })
}

/// Derivative-free simplex descent with box clamping; returns the best
/// vertex found.
fn nelder_mead<F>(objective: F, start: &[f64], bounds: &[(f64, f64)], iters: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = start.len();
    let clamp = |p: &mut Vec<f64>| {
        for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let mut simplex: Vec<Vec<f64>> = (0..=d)
        .map(|k| {
            let mut p = start.to_vec();
            if k > 0 {
                p[k - 1] += 0.1;
            }
            clamp(&mut p);
            p
        })
        .collect();
    let mut values: Vec<f64> = simplex.iter().map(|p| objective(p)).collect();

    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second_worst) = (order[0], order[d], order[d.saturating_sub(1)]);
        let centroid: Vec<f64> = (0..d)
            .map(|k| {
                order[..d]
                    .iter()
                    .map(|&idx| simplex[idx][k])
                    .sum::<f64>()
                    / d as f64
            })
            .collect();

        let moved = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp(&mut p);
            p
        };
        let reflected = moved(1.0);
        let fr = objective(&reflected);
        if fr < values[best] {
            let expanded = moved(2.0);
            let fe = objective(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = moved(-0.5);
            let fc = objective(&contracted);
            if fc < values[worst] {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                for &idx in &order[1..] {
                    let shrunk: Vec<f64> = simplex[idx]
                        .iter()
                        .zip(&simplex[best])
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    simplex[idx] = shrunk;
                    values[idx] = objective(&simplex[idx]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best].clone()
}

/// Discrepancy GP for one loading rate plus the observation indices its
/// training residuals came from.
#[derive(Debug, Clone)]
pub struct RateDiscrepancy {
    pub rate: f64,
    pub gp: TrainedGp,
    pub train_indices: Vec<usize>,
}

/// Evenly strided selection of `n` indices out of `len`.
pub fn strided_indices(len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .map(|j| (j as f64 * (len - 1) as f64 / (n - 1) as f64).round() as usize)
        .collect()
}

/// Fits one discrepancy GP per observed rate: residuals between the
/// observations and the forward model at `theta` on `n_train` evenly
/// spaced observed openings, lengthscales by LOO search.
pub fn discrepancy_pipeline(
    problem: &CalibrationProblem,
    theta: &[f64],
    n_train: usize,
    search: &GpSearchConfig,
) -> Result<Vec<RateDiscrepancy>, Error> {
    if n_train < 3 {
        return Err(ConfigError::new(format!("n_train must be >= 3, got {n_train}")).into());
    }
    let mut out = Vec::with_capacity(problem.data.series.len());
    for (idx, series) in problem.data.series.iter().enumerate() {
        let predictions = problem.predict_at_observations(theta, idx)?;
        let train_indices = strided_indices(series.points.len(), n_train);
        let n = train_indices.len();
        let mut x = Array2::zeros((n, 1));
        let mut y = Array1::zeros(n);
        for (row, &i) in train_indices.iter().enumerate() {
            x[[row, 0]] = series.points[i].0;
            y[row] = series.points[i].1 - predictions[i];
        }
        let hyper = optimize_hyperparams(&x, &y, search)?;
        let gp = fit(x, y, hyper)?;
        out.push(RateDiscrepancy {
            rate: series.rate,
            gp,
            train_indices,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::array;

    fn hyper1(l: f64) -> GpHyperparams {
        GpHyperparams::new(vec![l])
    }

    fn grid_1d(n: usize, lo: f64, hi: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, 1), |(i, _)| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn correlation_hand_values() {
        let h = hyper1(2.0);
        assert_eq!(correlation(&[1.5], &[1.5], &h), 1.0);
        assert_relative_eq!(
            correlation(&[0.0], &[2.0], &h),
            (-0.5_f64).exp(),
            max_relative = 1e-15
        );
        let h2 = GpHyperparams::new(vec![1.0, 3.0]);
        let expect = (-0.5_f64 * (4.0 + 1.0)).exp();
        assert_relative_eq!(
            correlation(&[0.0, 0.0], &[2.0, 3.0], &h2),
            expect,
            max_relative = 1e-15
        );
        assert!(correlation(&[0.0], &[1e6], &h) < 1e-300);
    }

    #[test]
    fn constant_data_gives_flat_posterior() {
        let x = grid_1d(6, 0.0, 5.0);
        let y = Array1::from_elem(6, 4.25);
        let gp = fit(x, y, hyper1(1.0)).unwrap();
        assert_abs_diff_eq!(gp.beta_hat, 4.25, epsilon = 1e-12);
        assert!(gp.process_variance < 1e-20);
        let (mean, var) = gp.predict(&[2.7]);
        assert_abs_diff_eq!(mean, 4.25, epsilon = 1e-9);
        assert!(var < 1e-20);
    }

    #[test]
    fn two_symmetric_points_average_exactly() {
        let x = array![[0.0], [2.0]];
        let y = array![1.0, 5.0];
        let gp = fit(x, y, hyper1(1.3)).unwrap();
        assert_abs_diff_eq!(gp.beta_hat, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_gls_oracle() {
        // Independent dense-inverse evaluation of every fit and predict
        // formula on a small set.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 8;
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>() * 4.0);
        let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let hyper = GpHyperparams::new(vec![1.1, 0.7]);

        let r = correlation_matrix(&x, &hyper);
        let r_inv = r.clone().try_inverse().unwrap();
        let ones = DVector::from_element(n, 1.0);
        let yv = DVector::from_iterator(n, y.iter().cloned());
        let s = (ones.transpose() * &r_inv * &ones)[(0, 0)];
        let beta = (ones.transpose() * &r_inv * &yv)[(0, 0)] / s;
        let resid = &yv - &ones * beta;
        let sigma2 = (resid.transpose() * &r_inv * &resid)[(0, 0)] / n as f64;

        let gp = fit(x.clone(), y, hyper.clone()).unwrap();
        assert_relative_eq!(gp.beta_hat, beta, max_relative = 1e-10);
        assert_relative_eq!(gp.process_variance, sigma2, max_relative = 1e-10);

        let point = [1.9, 2.3];
        let rv = DVector::from_iterator(
            n,
            (0..n).map(|i| correlation(x.row(i).as_slice().unwrap(), &point, &hyper)),
        );
        let mean = beta + (rv.transpose() * &r_inv * &resid)[(0, 0)];
        let u = (ones.transpose() * &r_inv * &rv)[(0, 0)] - 1.0;
        let var = sigma2 * (1.0 - (rv.transpose() * &r_inv * &rv)[(0, 0)] + u * u / s);
        let (m, v) = gp.predict(&point);
        assert_relative_eq!(m, mean, max_relative = 1e-10);
        assert_relative_eq!(v, var, max_relative = 1e-8);
    }

    #[test]
    fn interpolates_training_points() {
        let x = grid_1d(10, 0.0, std::f64::consts::PI);
        let y = x.column(0).mapv(f64::sin);
        let mut hyper = hyper1(0.8);
        hyper.nugget = 1e-12;
        let gp = fit(x.clone(), y.clone(), hyper).unwrap();
        for i in 0..x.nrows() {
            let (mean, var) = gp.predict(&[x[[i, 0]]]);
            assert_relative_eq!(mean, y[i], max_relative = 1e-8, epsilon = 1e-8);
            assert!(var <= 1e-8 * gp.process_variance);
        }
    }

    #[test]
    fn far_field_reverts_to_mean_with_inflated_variance() {
        let x = grid_1d(7, 0.0, 3.0);
        let y = x.column(0).mapv(|v| 1.0 + v * v);
        let gp = fit(x, y, hyper1(0.9)).unwrap();
        let (mean, var) = gp.predict(&[1e6]);
        assert_relative_eq!(mean, gp.beta_hat, max_relative = 1e-10);
        let expect = gp.process_variance * (1.0 + 1.0 / gp.ones_r_ones);
        assert_relative_eq!(var, expect, max_relative = 1e-10);
    }

    #[test]
    fn sine_midpoints_within_1e3() {
        let x = grid_1d(10, 0.0, std::f64::consts::PI);
        let y = x.column(0).mapv(f64::sin);
        let config = GpSearchConfig {
            seed: 7,
            ..Default::default()
        };
        let hyper = optimize_hyperparams(&x, &y, &config).unwrap();
        let gp = fit(x.clone(), y, hyper).unwrap();
        for i in 0..x.nrows() - 1 {
            let mid = 0.5 * (x[[i, 0]] + x[[i + 1, 0]]);
            let (mean, _) = gp.predict(&[mid]);
            assert_abs_diff_eq!(mean, mid.sin(), epsilon = 1e-3);
        }
    }

    #[test]
    fn loo_identity_matches_direct_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let x = grid_1d(n, 0.0, 4.0);
        let y = Array1::from_shape_fn(n, |i| (x[[i, 0]]).cos() + 0.1 * rng.gen::<f64>());
        let hyper = hyper1(1.2);
        let fast = loo_mse(&x, &y, &hyper).unwrap();

        let mut direct = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let xi = Array2::from_shape_fn((n - 1, 1), |(r, _)| x[[keep[r], 0]]);
            let yi = Array1::from_shape_fn(n - 1, |r| y[keep[r]]);
            let gp = fit(xi, yi, hyper.clone()).unwrap();
            let (mean, _) = gp.predict(&[x[[i, 0]]]);
            direct += (mean - y[i]).powi(2);
        }
        direct /= n as f64;
        assert_relative_eq!(fast, direct, max_relative = 1e-9);
    }

    #[test]
    fn optimizer_beats_half_of_grid_best() {
        let x = grid_1d(12, 0.0, 5.0);
        let y = x.column(0).mapv(|v| (2.0 * v).sin() + 0.3 * v);
        let config = GpSearchConfig {
            seed: 3,
            ..Default::default()
        };
        let found = optimize_hyperparams(&x, &y, &config).unwrap();
        let attained = loo_mse(&x, &y, &found).unwrap();

        let (lo, hi) = search_bounds(&x)[0];
        let grid_best = (0..50)
            .map(|k| {
                let l = (lo + (hi - lo) * k as f64 / 49.0).exp();
                loo_mse(&x, &y, &hyper1(l))
                    .map(|v| if v.is_finite() { v } else { f64::INFINITY })
                    .unwrap_or(f64::INFINITY)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            attained <= 2.0 * grid_best,
            "attained {attained} vs grid best {grid_best}"
        );

        let again = optimize_hyperparams(&x, &y, &config).unwrap();
        assert_eq!(found, again);
    }

    #[test]
    fn recovers_known_lengthscale_within_factor_two() {
        // Sample a path from a GP with a known lengthscale, then check the
        // LOO search lands within a factor 2.
        let true_l = 0.6;
        let n = 30;
        let x = grid_1d(n, 0.0, 6.0);
        let hyper = hyper1(true_l);
        let r = correlation_matrix(&x, &hyper);
        let chol = Cholesky::new(r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z = DVector::from_iterator(n, (0..n).map(|_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        }));
        let path = chol.l() * z;
        let y = Array1::from_iter(path.iter().cloned());
        let config = GpSearchConfig {
            seed: 11,
            ..Default::default()
        };
        let found = optimize_hyperparams(&x, &y, &config).unwrap();
        let ratio = found.lengthscales[0] / true_l;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "recovered {} vs true {true_l}",
            found.lengthscales[0]
        );
    }

    #[test]
    fn white_noise_loo_stays_near_sample_variance() {
        let n = 20;
        let x = grid_1d(n, 0.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let mean = y.sum() / n as f64;
        let sample_var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Short lengthscales cannot invent structure in noise.
        for l in [0.05, 0.2] {
            let loo = loo_mse(&x, &y, &hyper1(l)).unwrap();
            let ratio = loo / sample_var;
            assert!(
                (0.5..=2.0).contains(&ratio),
                "l = {l}: loo {loo} vs sample var {sample_var}"
            );
        }
    }

    #[test]
    fn permuting_training_points_changes_nothing() {
        let x = grid_1d(9, 0.0, 4.0);
        let y = x.column(0).mapv(|v| v.sin() + 0.5 * v);
        let gp = fit(x.clone(), y.clone(), hyper1(0.9)).unwrap();

        let perm = [4usize, 0, 7, 2, 8, 1, 5, 3, 6];
        let xp = Array2::from_shape_fn((9, 1), |(i, _)| x[[perm[i], 0]]);
        let yp = Array1::from_shape_fn(9, |i| y[perm[i]]);
        let gp2 = fit(xp, yp, hyper1(0.9)).unwrap();

        for &p in &[0.3, 1.7, 2.9, 3.999] {
            let (m1, v1) = gp.predict(&[p]);
            let (m2, v2) = gp2.predict(&[p]);
            assert_relative_eq!(m1, m2, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(v1, v2, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn prediction_mean_is_linear_in_outputs() {
        let x = grid_1d(7, 0.0, 3.0);
        let y1 = x.column(0).mapv(f64::sin);
        let y2 = x.column(0).mapv(|v| v * v);
        let (a, b) = (2.5, -1.25);
        let combo = &y1 * a + &y2 * b;
        let h = hyper1(0.8);
        let g1 = fit(x.clone(), y1, h.clone()).unwrap();
        let g2 = fit(x.clone(), y2, h.clone()).unwrap();
        let gc = fit(x, combo, h).unwrap();
        for &p in &[0.1, 1.4, 2.2, 5.0] {
            let expect = a * g1.predict(&[p]).0 + b * g2.predict(&[p]).0;
            assert_relative_eq!(gc.predict(&[p]).0, expect, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicate_inputs_without_nugget_fail_with_hint() {
        let x = array![[1.0], [1.0], [2.0]];
        let y = array![0.0, 0.0, 1.0];
        let mut h = hyper1(1.0);
        h.nugget = 0.0;
        let err = fit(x, y, h).unwrap_err().to_string();
        assert!(err.contains("nugget"), "got: {err}");
    }

    #[test]
    fn strided_selection_covers_ends() {
        assert_eq!(strided_indices(20, 5), vec![0, 5, 10, 14, 19]);
        assert_eq!(strided_indices(3, 7), vec![0, 1, 2]);
        assert_eq!(strided_indices(5, 1), vec![0]);
    }

    #[test]
    fn pipeline_on_exact_model_returns_zero_discrepancy() {
        use crate::calibrate::{CalibrationProblem, ForwardSettings, NoiseModel};
        use crate::czm::InterfaceParams;
        use crate::dcb::{simulate_curve, DcbGeometry, LoadingProgram};
        use crate::dist::PriorSet;
        use crate::tables::{ObservationSet, RateSeries};

        let forward = ForwardSettings {
            geometry: DcbGeometry {
                n_elements: 15,
                ..Default::default()
            },
            n_steps: 40,
            delta_max: None,
            base: InterfaceParams::reference_polyethylene(),
        };
        let p = forward.base;
        let theta = vec![
            p.k_normal,
            p.delta_onset,
            p.delta_fail,
            p.hardening,
            p.yield_initial,
            p.flow_rate,
            p.activation_energy,
            p.rate_sensitivity,
        ];
        let program = LoadingProgram {
            rate: 5.08,
            delta_max: 16.0,
            n_steps: 40,
        };
        let curve = simulate_curve(&p, &forward.geometry, &program).unwrap();
        let points: Vec<(f64, f64)> = (1..=12)
            .map(|j| {
                let d = 16.0 * j as f64 / 12.0;
                (d, curve.interpolate(d))
            })
            .collect();
        let data = ObservationSet {
            series: vec![RateSeries { rate: 5.08, points }],
        };
        let problem = CalibrationProblem::new(
            PriorSet::czm_default(),
            data,
            NoiseModel::Fixed { sigmas: vec![0.5] },
            forward,
        )
        .unwrap();
        let search = GpSearchConfig {
            generations: 10,
            seed: 1,
            ..Default::default()
        };
        let fitted = discrepancy_pipeline(&problem, &theta, 8, &search).unwrap();
        assert_eq!(fitted.len(), 1);
        assert_eq!(fitted[0].train_indices.len(), 8);
        for &d in &[2.0, 7.0, 13.0] {
            let (mean, _) = fitted[0].gp.predict(&[d]);
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
        }
    }
}
