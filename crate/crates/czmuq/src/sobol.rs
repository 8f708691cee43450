//! Variance-based global sensitivity: first-order and total Sobol indices
//! by Jansen estimators on a Saltelli design.
//!
//! Two independent input matrices A, B (n_base × d) are drawn from the
//! priors; AB_i replaces column i of A with B's. With V the pooled output
//! variance,
//!
//! ```text
//! S_i  = (V − (1/2n)·Σ_j (f(B)_j − f(AB_i)_j)²) / V
//! S_Ti = (1/2n)·Σ_j (f(A)_j − f(AB_i)_j)² / V
//! ```
//!
//! Standard errors come from paired bootstrap resampling of the design
//! rows. Everything is seed-deterministic: draws and reductions are
//! serial, model evaluations run in parallel but are collected in order.

use crate::calibrate::params_from_theta;
use crate::czm::InterfaceParams;
use crate::dcb::{peak_load, simulate_curve, DcbGeometry, LoadingProgram};
use crate::dist::PriorSet;
use crate::error::{ConfigError, Error, NumericalError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Indices and bootstrap errors for one input parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndex {
    pub name: String,
    pub first_order: f64,
    pub first_order_err: f64,
    pub total: f64,
    pub total_err: f64,
}

/// Full sensitivity result for one scalar quantity of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolResult {
    pub indices: Vec<SobolIndex>,
    /// Pooled output variance over the A and B designs.
    pub variance: f64,
    pub n_base: usize,
}

struct Design {
    f_a: Vec<f64>,
    f_b: Vec<f64>,
    /// One column per input parameter.
    f_ab: Vec<Vec<f64>>,
}

/// Pooled mean and ddof-1 variance over both independent designs.
fn pooled_variance(f_a: &[f64], f_b: &[f64]) -> (f64, f64) {
    let n2 = (f_a.len() + f_b.len()) as f64;
    let mean = (f_a.iter().sum::<f64>() + f_b.iter().sum::<f64>()) / n2;
    let ss: f64 = f_a
        .iter()
        .chain(f_b)
        .map(|v| (v - mean).powi(2))
        .sum();
    (mean, ss / (n2 - 1.0))
}

fn estimate(design: &Design, rows: Option<&[usize]>) -> Option<Vec<(f64, f64)>> {
    let collect = |src: &[f64]| -> Vec<f64> {
        match rows {
            Some(idx) => idx.iter().map(|&j| src[j]).collect(),
            None => src.to_vec(),
        }
    };
    let f_a = collect(&design.f_a);
    let f_b = collect(&design.f_b);
    let n = f_a.len() as f64;
    let (_, variance) = pooled_variance(&f_a, &f_b);
    if !(variance.is_finite() && variance > 0.0) {
        return None;
    }
    let mut out = Vec::with_capacity(design.f_ab.len());
    for f_ab_i in &design.f_ab {
        let f_ab_i = collect(f_ab_i);
        let mut first_ss = 0.0;
        let mut total_ss = 0.0;
        for j in 0..f_a.len() {
            first_ss += (f_b[j] - f_ab_i[j]).powi(2);
            total_ss += (f_a[j] - f_ab_i[j]).powi(2);
        }
        let s_i = (variance - first_ss / (2.0 * n)) / variance;
        let s_ti = total_ss / (2.0 * n) / variance;
        out.push((s_i, s_ti));
    }
    Some(out)
}

/// Jansen first-order and total indices with bootstrap standard errors.
/// `model` maps a d-vector sampled from `priors` to the scalar quantity of
/// interest; any model failure aborts the run.
pub fn sobol_indices<F>(
    model: F,
    priors: &PriorSet,
    n_base: usize,
    n_bootstrap: usize,
    seed: u64,
) -> Result<SobolResult, Error>
where
    F: Fn(&[f64]) -> Result<f64, Error> + Sync,
{
    if n_base < 128 {
        return Err(ConfigError::new(format!("n_base must be >= 128, got {n_base}")).into());
    }
    if n_bootstrap < 2 {
        return Err(ConfigError::new(format!(
            "need at least 2 bootstrap resamples, got {n_bootstrap}"
        ))
        .into());
    }
    let d = priors.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Vec<f64>> = (0..n_base).map(|_| priors.sample(&mut rng)).collect();
    let b: Vec<Vec<f64>> = (0..n_base).map(|_| priors.sample(&mut rng)).collect();

    let evaluate = |rows: &[Vec<f64>]| -> Result<Vec<f64>, Error> {
        let outs: Vec<Result<f64, Error>> = rows.par_iter().map(|x| model(x)).collect();
        let mut values = Vec::with_capacity(rows.len());
        for (j, out) in outs.into_iter().enumerate() {
            let v = out?;
            if !v.is_finite() {
                return Err(NumericalError::non_finite(
                    "quantity of interest",
                    format!("design row {j}"),
                )
                .into());
            }
            values.push(v);
        }
        Ok(values)
    };

    let f_a = evaluate(&a)?;
    let f_b = evaluate(&b)?;
    let mut f_ab = Vec::with_capacity(d);
    for i in 0..d {
        let hybrid: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(ra, rb)| {
                let mut row = ra.clone();
                row[i] = rb[i];
                row
            })
            .collect();
        f_ab.push(evaluate(&hybrid)?);
    }
    let design = Design { f_a, f_b, f_ab };

    let (_, variance) = pooled_variance(&design.f_a, &design.f_b);
    let point = estimate(&design, None).ok_or_else(|| {
        NumericalError::Degenerate(format!(
            "output variance {variance} is not positive; the quantity of interest is constant"
        ))
    })?;

    // Paired bootstrap over design rows; degenerate resamples are skipped.
    let mut boots: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n_bootstrap);
    for _ in 0..n_bootstrap {
        let rows: Vec<usize> = (0..n_base).map(|_| rng.gen_range(0..n_base)).collect();
        if let Some(est) = estimate(&design, Some(&rows)) {
            boots.push(est);
        }
    }
    if boots.len() < 2 {
        return Err(NumericalError::Degenerate(
            "all bootstrap resamples were degenerate".into(),
        )
        .into());
    }
    let err = |pick: &dyn Fn(&(f64, f64)) -> f64, i: usize| -> f64 {
        let vals: Vec<f64> = boots.iter().map(|b| pick(&b[i])).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
    };

    let indices = (0..d)
        .map(|i| SobolIndex {
            name: priors.names[i].clone(),
            first_order: point[i].0,
            first_order_err: err(&|p| p.0, i),
            total: point[i].1,
            total_err: err(&|p| p.1, i),
        })
        .collect();
    Ok(SobolResult {
        indices,
        variance,
        n_base,
    })
}

/// Positions into `result.indices` sorted by descending total index, ties
/// by descending first-order index; fully tied entries keep input order.
pub fn rank_parameters(result: &SobolResult) -> Vec<usize> {
    let mut order: Vec<usize> = (0..result.indices.len()).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&result.indices[a], &result.indices[b]);
        ib.total
            .total_cmp(&ia.total)
            .then(ib.first_order.total_cmp(&ia.first_order))
    });
    order
}

/// Peak reaction load of the bonded-interface opening test as the scalar
/// quantity of interest, over the 8 calibrated parameters.
pub fn peak_load_model(
    geometry: DcbGeometry,
    loading: LoadingProgram,
    base: InterfaceParams,
) -> impl Fn(&[f64]) -> Result<f64, Error> + Sync {
    move |theta: &[f64]| {
        let params = params_from_theta(theta, &base);
        params.validate()?;
        let curve = simulate_curve(&params, &geometry, &loading)?;
        let (_, peak) = peak_load(&curve)?;
        Ok(peak)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec;
    use approx::assert_abs_diff_eq;

    fn uniform_priors(ranges: &[(f64, f64)]) -> PriorSet {
        let names = (0..ranges.len()).map(|i| format!("x{i}")).collect();
        let dists = ranges
            .iter()
            .map(|&(low, high)| DistributionSpec::Uniform { low, high })
            .collect();
        PriorSet::new(names, dists).unwrap()
    }

    #[test]
    fn single_active_variable_takes_all_variance() {
        let priors = uniform_priors(&[(-1.0, 1.0), (-1.0, 1.0), (0.0, 2.0), (-3.0, 3.0)]);
        let result = sobol_indices(|x| Ok(x[0]), &priors, 512, 100, 5).unwrap();
        let s = &result.indices;
        assert!((s[0].first_order - 1.0).abs() <= 3.0 * s[0].first_order_err.max(1e-3));
        assert!((s[0].total - 1.0).abs() <= 3.0 * s[0].total_err.max(1e-3));
        for i in 1..4 {
            assert!(s[i].first_order.abs() <= 3.0 * s[i].first_order_err.max(1e-3));
            assert!(s[i].total.abs() <= 3.0 * s[i].total_err.max(1e-3));
        }
        assert_eq!(rank_parameters(&result)[0], 0);
    }

    #[test]
    fn additive_model_has_no_interactions() {
        let priors = uniform_priors(&[(-2.0, 2.0), (-1.0, 3.0), (0.0, 6.0)]);
        let f = |x: &[f64]| Ok(x[0] + 0.5 * x[1] * x[1] + (0.7 * x[2]).sin());
        let result = sobol_indices(f, &priors, 4096, 100, 9).unwrap();
        let sum_first: f64 = result.indices.iter().map(|s| s.first_order).sum();
        let sum_err: f64 = result.indices.iter().map(|s| s.first_order_err).sum();
        assert!(
            (sum_first - 1.0).abs() <= 3.0 * sum_err.max(1e-3),
            "sum S_i = {sum_first}"
        );
        for s in &result.indices {
            let err = (s.first_order_err + s.total_err).max(1e-3);
            assert!(
                (s.total - s.first_order).abs() <= 3.0 * err,
                "{}: S {} vs ST {}",
                s.name,
                s.first_order,
                s.total
            );
        }
    }

    #[test]
    fn ishigami_matches_closed_form() {
        let pi = std::f64::consts::PI;
        let (a, b) = (7.0, 0.1);
        let priors = uniform_priors(&[(-pi, pi), (-pi, pi), (-pi, pi)]);
        let f = move |x: &[f64]| {
            Ok(x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin())
        };
        let result = sobol_indices(f, &priors, 1 << 14, 100, 2).unwrap();

        let v1 = 0.5 * (1.0 + b * pi.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * pi.powi(8) * 8.0 / 225.0;
        let var = v1 + v2 + v13;
        let expect_first = [v1 / var, v2 / var, 0.0];
        let expect_total = [(v1 + v13) / var, v2 / var, v13 / var];
        for i in 0..3 {
            assert_abs_diff_eq!(result.indices[i].first_order, expect_first[i], epsilon = 0.02);
            assert_abs_diff_eq!(result.indices[i].total, expect_total[i], epsilon = 0.02);
        }
        assert_abs_diff_eq!(result.variance, var, epsilon = 0.02 * var);
    }

    #[test]
    fn product_inputs_rank_above_inert_one() {
        let priors = uniform_priors(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]);
        let result = sobol_indices(|x| Ok(x[0] * x[1]), &priors, 2048, 100, 13).unwrap();
        let rank = rank_parameters(&result);
        assert_eq!(rank[2], 2, "inert input must rank last: {rank:?}");
        // Centered factors put everything into the interaction term.
        assert!(result.indices[0].total > 0.9);
        assert!(result.indices[1].total > 0.9);
        assert!(result.indices[2].total < 0.05);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let priors = uniform_priors(&[(0.0, 1.0), (0.0, 1.0)]);
        let err = sobol_indices(|_| Ok(42.0), &priors, 256, 50, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::Numerical(NumericalError::Degenerate(_))
        ));
    }

    #[test]
    fn seeded_runs_are_identical_and_model_errors_propagate() {
        let priors = uniform_priors(&[(0.0, 1.0), (0.0, 1.0)]);
        let f = |x: &[f64]| Ok(x[0] + x[1] * x[1]);
        let r1 = sobol_indices(f, &priors, 256, 50, 7).unwrap();
        let r2 = sobol_indices(f, &priors, 256, 50, 7).unwrap();
        assert_eq!(r1, r2);

        let failing = |x: &[f64]| {
            if x[0] > 0.5 {
                Err(NumericalError::non_finite("qoi", "test").into())
            } else {
                Ok(x[0])
            }
        };
        assert!(sobol_indices(failing, &priors, 256, 50, 7).is_err());
        assert!(sobol_indices(f, &priors, 64, 50, 7).is_err());
    }

    #[test]
    fn ranking_is_stable_under_ties() {
        let mk = |name: &str, s: f64, st: f64| SobolIndex {
            name: name.into(),
            first_order: s,
            first_order_err: 0.0,
            total: st,
            total_err: 0.0,
        };
        let result = SobolResult {
            indices: vec![
                mk("a", 0.2, 0.5),
                mk("b", 0.2, 0.5),
                mk("c", 0.2, 0.5),
            ],
            variance: 1.0,
            n_base: 256,
        };
        assert_eq!(rank_parameters(&result), vec![0, 1, 2]);

        let result = SobolResult {
            indices: vec![
                mk("a", 0.1, 0.5),
                mk("b", 0.4, 0.5),
                mk("c", 0.2, 0.6),
            ],
            variance: 1.0,
            n_base: 256,
        };
        // c wins on total; the a/b tie breaks on first-order.
        assert_eq!(rank_parameters(&result), vec![2, 1, 0]);
    }

    #[test]
    fn quadrupling_n_base_shrinks_bootstrap_errors() {
        let priors = uniform_priors(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]);
        let f = |x: &[f64]| Ok(x[0] + 0.5 * x[1].powi(2) + 0.25 * x[0] * x[2]);
        let small = sobol_indices(f, &priors, 256, 100, 3).unwrap();
        let large = sobol_indices(f, &priors, 1024, 100, 4).unwrap();
        let ratio = small.indices[0].total_err / large.indices[0].total_err;
        assert!(
            (1.5..=3.0).contains(&ratio),
            "error ratio {ratio} outside [1.5, 3]"
        );
    }
}
