//! One runner per subcommand. Each returns the artifact paths it wrote;
//! input files are registered on the manifest as they are read.

use crate::config::RunConfig;
use crate::manifest::Manifest;
use czmuq::calibrate::{params_from_theta, CalibrationProblem};
use czmuq::dcb::{peak_load, simulate_curve, LoadingProgram};
use czmuq::dist::CZM_PARAM_NAMES;
use czmuq::gp::{discrepancy_pipeline, RateDiscrepancy};
use czmuq::mcmc::{diagnostics, sample_ensemble};
use czmuq::sobol::{peak_load_model, rank_parameters, sobol_indices};
use czmuq::synth::generate;
use czmuq::tables::{
    fmt_float, read_observations, read_samples, write_numeric_csv, write_observations,
    write_samples, ObservationSet, RateSeries,
};
use czmuq::uq::{compose_prediction, percentage_error, predictive_band, propagate};
use czmuq::{ConfigError, DataError, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Bins of the posterior-density diagnostic tables.
const DENSITY_BINS: usize = 50;

/// File-name fragment for one loading rate: "5.08" becomes "5p08".
fn rate_tag(rate: f64) -> String {
    fmt_float(rate).replace('.', "p")
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Relative input paths that do not exist in the working directory fall
/// back to the output directory, so chained stages find each other's
/// artifacts without extra configuration.
fn resolve_input(path: &Path, out_dir: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        let fallback = out_dir.join(path);
        if fallback.exists() {
            return fallback;
        }
    }
    path.to_path_buf()
}

/// Forward curves at the configured parameter values, one series per rate.
pub fn simulate(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let params = config.parameters.build();
    let geometry = config.geometry.build();

    let mut series = Vec::with_capacity(config.loading.rates.len());
    for &rate in &config.loading.rates {
        let program = LoadingProgram {
            rate,
            delta_max: config.loading.delta_max,
            n_steps: config.loading.n_steps,
        };
        let curve = simulate_curve(&params, &geometry, &program)?;
        let (peak_delta, peak) = peak_load(&curve)?;
        println!(
            "simulate: rate {} mm/min peaks at {} N (opening {} mm)",
            fmt_float(rate),
            fmt_float(peak),
            fmt_float(peak_delta)
        );
        series.push(RateSeries {
            rate,
            points: curve.points,
        });
    }

    let path = out_dir.join("curves.csv");
    write_observations(&path, &ObservationSet { series })?;
    Ok(vec![path])
}

/// Synthetic-truth sidecar written next to generated observations.
#[derive(Serialize)]
struct TruthSidecar {
    seed: u64,
    param_names: Vec<String>,
    theta: Vec<f64>,
    rates: Vec<f64>,
    /// Realized noise standard deviation per rate, aligned with `rates`.
    sigmas: Vec<f64>,
    noise_mode: String,
    noise_sigma: f64,
    noise_fraction: f64,
    discrepancy: String,
    sine_amplitude: f64,
    sine_wavelength: f64,
    sine_phase: f64,
}

/// Observations generated at the configured parameters, plus the sidecar
/// recording exactly what was injected.
pub fn synth(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let priors = config.priors.build()?;
    let theta = config.parameters.theta();
    let synth_config = config.synth_config()?;
    let (observations, truth) = generate(&theta, &priors, &synth_config)?;

    let obs_path = out_dir.join("observations.csv");
    write_observations(&obs_path, &observations)?;

    let sidecar = TruthSidecar {
        seed: truth.seed,
        param_names: CZM_PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        theta: truth.theta.clone(),
        rates: truth.sigmas.iter().map(|&(r, _)| r).collect(),
        sigmas: truth.sigmas.iter().map(|&(_, s)| s).collect(),
        noise_mode: config.synth.noise_mode.clone(),
        noise_sigma: config.synth.noise_sigma,
        noise_fraction: config.synth.noise_fraction,
        discrepancy: config.synth.discrepancy.clone(),
        sine_amplitude: config.synth.sine_amplitude,
        sine_wavelength: config.synth.sine_wavelength,
        sine_phase: config.synth.sine_phase,
    };
    let truth_path = out_dir.join("truth.toml");
    let text = toml::to_string_pretty(&sidecar)
        .map_err(|e| DataError::Invalid(format!("truth sidecar serialization: {e}")))?;
    write_text(&truth_path, &text)?;

    println!(
        "synth: {} points over {} rates written to {}",
        observations.n_points(),
        observations.series.len(),
        obs_path.display()
    );
    Ok(vec![obs_path, truth_path])
}

fn build_problem(
    config: &RunConfig,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<CalibrationProblem, Error> {
    let obs_path = resolve_input(&config.paths.observations, out_dir);
    let data = read_observations(&obs_path)?;
    manifest.add_input(&obs_path)?;
    data.require_rates(&config.loading.rates)?;
    let priors = config.priors.build()?;
    let noise = config.noise.build(&data)?;
    CalibrationProblem::new(priors, data, noise, config.forward_settings())
}

/// Posterior sampling from the observation file; writes the chain, the
/// moment summary, and convergence diagnostics.
pub fn calibrate(
    config: &RunConfig,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<Vec<PathBuf>, Error> {
    let problem = build_problem(config, out_dir, manifest)?;

    // Stream 0 of the sampler seed draws the initial walkers; the sampler
    // itself consumes streams 1..=n_walkers.
    let sampler_seed = config.sampler.seed.expect("seed resolved");
    let mut rng = ChaCha8Rng::seed_from_u64(sampler_seed);
    rng.set_stream(0);
    let walkers = problem.initial_walkers(config.sampler.n_walkers, &mut rng)?;

    let mut samples = sample_ensemble(
        |theta| problem.log_posterior(theta),
        &walkers,
        &config.sampler.ensemble(),
    )?;
    samples.param_names = problem.priors.names.clone();
    println!(
        "calibrate: {} walkers x {} sweeps, acceptance rate {:.3}",
        samples.n_walkers(),
        samples.n_steps(),
        samples.acceptance_rate()
    );

    let samples_path = out_dir.join("samples.csv");
    write_samples(&samples_path, &samples)?;

    let summary = samples.summary(config.sampler.burn_in)?;
    let mut text = String::from("name,mean,std\n");
    for s in &summary {
        text.push_str(&format!("{},{},{}\n", s.name, fmt_float(s.mean), fmt_float(s.std)));
        println!("calibrate: {} = {} +/- {}", s.name, fmt_float(s.mean), fmt_float(s.std));
    }
    let summary_path = out_dir.join("summary.csv");
    write_text(&summary_path, &text)?;

    let diag = diagnostics(&samples, config.sampler.burn_in, DENSITY_BINS);
    let names = &samples.param_names;

    let running_path = out_dir.join("running_mean.csv");
    let mut header = vec!["step"];
    header.extend(names.iter().map(String::as_str));
    let rows = diag.running_mean.outer_iter().enumerate().map(|(step, row)| {
        let mut out = Vec::with_capacity(1 + row.len());
        out.push(step as f64);
        out.extend(row.iter().copied());
        out
    });
    write_numeric_csv(&running_path, &header, rows)?;

    let mut text = String::from("param,bin_lo,bin_hi,density\n");
    for (name, hist) in names.iter().zip(&diag.densities) {
        for (k, &d) in hist.density.iter().enumerate() {
            text.push_str(&format!(
                "{},{},{},{}\n",
                name,
                fmt_float(hist.edges[k]),
                fmt_float(hist.edges[k + 1]),
                fmt_float(d)
            ));
        }
    }
    let density_path = out_dir.join("densities.csv");
    write_text(&density_path, &text)?;

    Ok(vec![samples_path, summary_path, running_path, density_path])
}

/// Reads a `summary.csv` written by the calibrate stage.
fn read_summary(path: &Path) -> Result<Vec<(String, f64, f64)>, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let invalid = |msg: String| -> Error {
        DataError::Parse {
            path: path.display().to_string(),
            msg,
        }
        .into()
    };
    let mut lines = text.lines();
    if lines.next() != Some("name,mean,std") {
        return Err(invalid("expected header name,mean,std".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(invalid(format!("expected 3 fields, got {}", fields.len())));
        }
        let mean: f64 = fields[1]
            .parse()
            .map_err(|e| invalid(format!("mean of {}: {e}", fields[0])))?;
        let std: f64 = fields[2]
            .parse()
            .map_err(|e| invalid(format!("std of {}: {e}", fields[0])))?;
        out.push((fields[0].to_string(), mean, std));
    }
    Ok(out)
}

/// Point estimate for the discrepancy fit: the 8 interface means from the
/// calibration summary, in the canonical order.
fn theta_from_summary(path: &Path) -> Result<Vec<f64>, Error> {
    let rows = read_summary(path)?;
    if rows.len() < CZM_PARAM_NAMES.len() {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            msg: format!("expected at least 8 parameter rows, got {}", rows.len()),
        }
        .into());
    }
    for (row, expected) in rows.iter().zip(CZM_PARAM_NAMES) {
        if row.0 != expected {
            return Err(DataError::Parse {
                path: path.display().to_string(),
                msg: format!("expected parameter {expected}, found {}", row.0),
            }
            .into());
        }
    }
    Ok(rows[..CZM_PARAM_NAMES.len()].iter().map(|r| r.1).collect())
}

/// Serialized form of one trained discrepancy surrogate; refitting on the
/// stored points with the stored hyperparameters reproduces it exactly.
#[derive(Serialize)]
struct GpSidecar {
    rate: f64,
    beta_hat: f64,
    process_variance: f64,
    lengthscales: Vec<f64>,
    nugget: f64,
    train_indices: Vec<usize>,
    train_openings: Vec<f64>,
    train_residuals: Vec<f64>,
}

fn write_gp_sidecar(path: &Path, disc: &RateDiscrepancy) -> Result<(), Error> {
    let sidecar = GpSidecar {
        rate: disc.rate,
        beta_hat: disc.gp.beta_hat,
        process_variance: disc.gp.process_variance,
        lengthscales: disc.gp.hyper.lengthscales.clone(),
        nugget: disc.gp.hyper.nugget,
        train_indices: disc.train_indices.clone(),
        train_openings: disc.gp.training_inputs().column(0).to_vec(),
        train_residuals: disc.gp.training_outputs().to_vec(),
    };
    let text = toml::to_string_pretty(&sidecar)
        .map_err(|e| DataError::Invalid(format!("surrogate sidecar serialization: {e}")))?;
    write_text(path, &text)
}

/// Fits the per-rate discrepancy surrogates at the calibrated means and
/// writes each fit plus a dense residual prediction table.
pub fn discrepancy(
    config: &RunConfig,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<Vec<PathBuf>, Error> {
    let problem = build_problem(config, out_dir, manifest)?;
    let summary_path = resolve_input(&config.paths.summary, out_dir);
    let theta_star = theta_from_summary(&summary_path)?;
    manifest.add_input(&summary_path)?;

    let fits = discrepancy_pipeline(&problem, &theta_star, config.gp.n_train, &config.gp.search())?;

    let mut artifacts = Vec::new();
    for disc in &fits {
        let tag = rate_tag(disc.rate);
        println!(
            "discrepancy: rate {} mm/min lengthscale {} mm, process variance {} N^2",
            fmt_float(disc.rate),
            fmt_float(disc.gp.hyper.lengthscales[0]),
            fmt_float(disc.gp.process_variance)
        );

        let sidecar_path = out_dir.join(format!("gp_{tag}.toml"));
        write_gp_sidecar(&sidecar_path, disc)?;
        artifacts.push(sidecar_path);

        let dmax = disc
            .gp
            .training_inputs()
            .column(0)
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        let n = config.gp.pred_points.max(2);
        let rows = (0..n).map(|j| {
            let delta = dmax * j as f64 / (n - 1) as f64;
            let (mean, var) = disc.gp.predict(&[delta]);
            vec![delta, mean, var]
        });
        let table_path = out_dir.join(format!("discrepancy_{tag}.csv"));
        write_numeric_csv(&table_path, &["Delta_mm", "residual_mean_N", "residual_var_N2"], rows)?;
        artifacts.push(table_path);
    }
    Ok(artifacts)
}

/// Percent coverage label for a band column: alpha 0.05 becomes "95".
fn coverage_label(alpha: f64) -> String {
    fmt_float(100.0 * (1.0 - alpha)).replace('.', "p")
}

/// Full predictive pipeline: posterior resampling through the forward
/// model, discrepancy surrogates at the posterior means, and composed
/// uncertainty bands per rate.
pub fn uq(config: &RunConfig, out_dir: &Path, manifest: &mut Manifest) -> Result<Vec<PathBuf>, Error> {
    let problem = build_problem(config, out_dir, manifest)?;
    let samples_path = resolve_input(&config.paths.samples, out_dir);
    let samples = read_samples(&samples_path)?;
    manifest.add_input(&samples_path)?;
    if samples.dim() != problem.dim() {
        return Err(ConfigError::new(format!(
            "sample file has {} parameters but the problem has {}",
            samples.dim(),
            problem.dim()
        ))
        .into());
    }

    let summaries = samples.summary(config.uq.burn_in)?;
    let theta_star: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let fits = discrepancy_pipeline(&problem, &theta_star, config.gp.n_train, &config.gp.search())?;

    let geometry = config.geometry.build();
    let base = config.parameters.build();
    let uq_seed = config.uq.seed.expect("seed resolved");

    let mut artifacts = Vec::new();
    let mut summary_rows = Vec::new();
    for (idx, disc) in fits.iter().enumerate() {
        let series = &problem.data.series[idx];
        let observed: Vec<f64> = series.points.iter().map(|&(d, _)| d).collect();
        let dmax = *observed.last().expect("non-empty series");
        let grid: Vec<f64> = if config.uq.grid_points == 0 {
            observed.clone()
        } else {
            let n = config.uq.grid_points;
            (1..=n).map(|j| dmax * j as f64 / n as f64).collect()
        };
        let program = LoadingProgram {
            rate: series.rate,
            delta_max: dmax,
            n_steps: config.loading.n_steps,
        };
        let forward_on = |deltas: &[f64], theta: &[f64]| -> Result<Vec<f64>, Error> {
            let params = params_from_theta(theta, &base);
            params.validate()?;
            let curve = simulate_curve(&params, &geometry, &program)?;
            Ok(deltas.iter().map(|&d| curve.interpolate(d)).collect())
        };

        let ensemble = propagate(
            &samples,
            config.uq.burn_in,
            |theta: &[f64]| forward_on(&grid, theta),
            &grid,
            config.uq.n_samples,
            uq_seed,
        )?;
        let composed = compose_prediction(
            |theta: &[f64]| forward_on(&grid, theta),
            &theta_star,
            &disc.gp,
            &grid,
        )?;
        let band = predictive_band(
            &grid,
            &composed.composed,
            &ensemble.variance,
            &composed.gp_variance,
            &config.uq.alphas,
        )?;

        let tag = rate_tag(series.rate);
        let mut header = vec![
            "Delta_mm".to_string(),
            "model_mean_N".to_string(),
            "gp_mean_N".to_string(),
            "mean_N".to_string(),
            "var_params_N2".to_string(),
            "var_discrepancy_N2".to_string(),
            "var_total_N2".to_string(),
        ];
        for interval in &band.intervals {
            let label = coverage_label(interval.alpha);
            header.push(format!("lo_{label}_N"));
            header.push(format!("hi_{label}_N"));
        }
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..grid.len()).map(|g| {
            let mut row = vec![
                grid[g],
                composed.model[g],
                composed.gp_mean[g],
                band.mean[g],
                band.var_params[g],
                band.var_discrepancy[g],
                band.var_total[g],
            ];
            for interval in &band.intervals {
                row.push(interval.lower[g]);
                row.push(interval.upper[g]);
            }
            row
        });
        let band_path = out_dir.join(format!("band_{tag}.csv"));
        write_numeric_csv(&band_path, &header_refs, rows)?;
        artifacts.push(band_path);

        let quantiles = ensemble.quantiles(&config.uq.quantiles)?;
        let mut header = vec!["Delta_mm".to_string()];
        header.extend(config.uq.quantiles.iter().map(|q| format!("q{}", fmt_float(*q).replace('.', "p"))));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..grid.len()).map(|g| {
            let mut row = vec![grid[g]];
            row.extend(quantiles.row(g).iter().copied());
            row
        });
        let quantile_path = out_dir.join(format!("quantiles_{tag}.csv"));
        write_numeric_csv(&quantile_path, &header_refs, rows)?;
        artifacts.push(quantile_path);

        // Fit quality against the observed loads, composed mean at the
        // observed openings.
        let model_at_obs = forward_on(&observed, &theta_star)?;
        let composed_at_obs: Vec<f64> = observed
            .iter()
            .zip(&model_at_obs)
            .map(|(&d, &m)| m + disc.gp.predict(&[d]).0)
            .collect();
        let observed_loads: Vec<f64> = series.points.iter().map(|&(_, f)| f).collect();
        let pct = percentage_error(&observed_loads, &composed_at_obs)?;
        println!(
            "uq: rate {} mm/min, {} members kept ({} skipped), composed error {:.3}%",
            fmt_float(series.rate),
            ensemble.members.nrows(),
            ensemble.n_skipped,
            pct
        );
        summary_rows.push(vec![
            series.rate,
            ensemble.members.nrows() as f64,
            ensemble.n_skipped as f64,
            pct,
        ]);
    }

    let summary_path = out_dir.join("uq_summary.csv");
    write_numeric_csv(
        &summary_path,
        &["rate_mm_per_min", "n_members", "n_skipped", "pct_error"],
        summary_rows,
    )?;
    artifacts.push(summary_path);
    Ok(artifacts)
}

#[derive(Serialize)]
struct SobolSidecar {
    rate: f64,
    n_base: usize,
    n_bootstrap: usize,
    /// Pooled output variance of the peak load over both sample designs.
    variance: f64,
}

/// Variance-based sensitivity of the peak load to the prior inputs.
pub fn sobol(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let priors = config.priors.build()?;
    let program = LoadingProgram {
        rate: config.sobol.rate,
        delta_max: config.loading.delta_max,
        n_steps: config.loading.n_steps,
    };
    program.validate()?;
    let model = peak_load_model(config.geometry.build(), program, config.parameters.build());
    let result = sobol_indices(
        model,
        &priors,
        config.sobol.n_base,
        config.sobol.n_bootstrap,
        config.sobol.seed.expect("seed resolved"),
    )?;

    let order = rank_parameters(&result);
    let ranked: Vec<&str> = order.iter().map(|&i| result.indices[i].name.as_str()).collect();
    println!(
        "sobol: peak-load variance {} N^2 at rate {} mm/min",
        fmt_float(result.variance),
        fmt_float(config.sobol.rate)
    );
    println!("sobol: by total effect: {}", ranked.join(" > "));

    let mut text = String::from("name,first_order,first_order_err,total,total_err,rank\n");
    for (i, index) in result.indices.iter().enumerate() {
        let rank = order.iter().position(|&j| j == i).expect("complete ranking") + 1;
        text.push_str(&format!(
            "{},{},{},{},{},{rank}\n",
            index.name,
            fmt_float(index.first_order),
            fmt_float(index.first_order_err),
            fmt_float(index.total),
            fmt_float(index.total_err)
        ));
    }
    let table_path = out_dir.join("sobol.csv");
    write_text(&table_path, &text)?;

    let sidecar = SobolSidecar {
        rate: config.sobol.rate,
        n_base: result.n_base,
        n_bootstrap: config.sobol.n_bootstrap,
        variance: result.variance,
    };
    let sidecar_text = toml::to_string_pretty(&sidecar)
        .map_err(|e| DataError::Invalid(format!("sensitivity sidecar serialization: {e}")))?;
    let sidecar_path = out_dir.join("sobol_meta.toml");
    write_text(&sidecar_path, &sidecar_text)?;

    Ok(vec![table_path, sidecar_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_tags_are_filename_safe() {
        assert_eq!(rate_tag(5.08), "5p08");
        assert_eq!(rate_tag(508.0), "508");
        assert_eq!(coverage_label(0.05), "95");
        assert_eq!(coverage_label(0.003), "99p7");
    }

    #[test]
    fn summary_round_trip_recovers_theta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let mut text = String::from("name,mean,std\n");
        for (i, name) in CZM_PARAM_NAMES.iter().enumerate() {
            text.push_str(&format!("{name},{},0.5\n", fmt_float(1.5 + i as f64)));
        }
        text.push_str("noise_var,4.25,0.1\n");
        std::fs::write(&path, text).unwrap();

        let theta = theta_from_summary(&path).unwrap();
        assert_eq!(theta.len(), 8);
        assert_eq!(theta[0], 1.5);
        assert_eq!(theta[7], 8.5);
    }

    #[test]
    fn summary_with_wrong_names_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        std::fs::write(&path, "name,mean,std\nwrong,1.0,0.5\n").unwrap();
        assert!(theta_from_summary(&path).is_err());

        std::fs::write(&path, "bad,header\n").unwrap();
        assert!(theta_from_summary(&path).is_err());
    }
}
