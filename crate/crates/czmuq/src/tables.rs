//! Delimited text I/O for observation sets, posterior samples, and generic
//! numeric tables.
//!
//! All tables are comma separated with a mandatory header row. Floats are
//! written in shortest round-trip form, so write-then-read reproduces every
//! value bit for bit.

use crate::error::{DataError, Error};
use crate::mcmc::PosteriorSamples;
use ndarray::{Array2, Array3};
use std::path::Path;

/// Loading rates of the reference experiment, mm/min.
pub const DEFAULT_RATES: [f64; 3] = [5.08, 50.8, 508.0];

/// Header of observation and curve tables. Units: mm/min, mm, N.
pub const CURVE_HEADER: [&str; 3] = ["rate_mm_per_min", "Delta_mm", "F_N"];

/// Measured or simulated load-displacement points at one loading rate,
/// sorted by opening displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    pub rate: f64,
    /// (Delta, F) pairs, strictly increasing in Delta.
    pub points: Vec<(f64, f64)>,
}

/// Observations grouped per loading rate, rates ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub series: Vec<RateSeries>,
}

impl ObservationSet {
    pub fn n_points(&self) -> usize {
        self.series.iter().map(|s| s.points.len()).sum()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.series.iter().map(|s| s.rate).collect()
    }

    pub fn series_at(&self, rate: f64) -> Option<&RateSeries> {
        self.series.iter().find(|s| s.rate == rate)
    }

    /// Checks that every expected rate is present with at least two points.
    pub fn require_rates(&self, expected: &[f64]) -> Result<(), Error> {
        for &rate in expected {
            let series = self.series_at(rate).ok_or_else(|| {
                DataError::Invalid(format!("no observations at rate {rate} mm/min"))
            })?;
            if series.points.len() < 2 {
                return Err(DataError::Invalid(format!(
                    "need at least 2 points at rate {rate} mm/min, got {}",
                    series.points.len()
                ))
                .into());
            }
        }
        Ok(())
    }
}

/// Shortest decimal form that parses back to the same f64; plain notation
/// for moderate magnitudes, scientific for the extremes.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && (a < 1e-4 || a >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
    .into()
}

fn csv_err(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line());
    match (line, err.into_kind()) {
        (_, csv::ErrorKind::Io(source)) => io_err(path, source),
        (Some(line), kind) => DataError::Record {
            path: path.display().to_string(),
            line,
            msg: format!("{kind:?}"),
        }
        .into(),
        (None, kind) => DataError::Parse {
            path: path.display().to_string(),
            msg: format!("{kind:?}"),
        }
        .into(),
    }
}

fn parse_field(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64, Error> {
    let value: f64 = raw.trim().parse().map_err(|_| DataError::Record {
        path: path.display().to_string(),
        line,
        msg: format!("cannot parse {name} from {raw:?}"),
    })?;
    if !value.is_finite() {
        return Err(DataError::Record {
            path: path.display().to_string(),
            line,
            msg: format!("{name} must be finite, got {raw:?}"),
        }
        .into());
    }
    Ok(value)
}

/// Reads an observation table, groups rows by exact rate, and sorts each
/// group by opening. Duplicate (rate, Delta) pairs are rejected with the
/// offending line; negative loads are kept with a warning since additive
/// noise can push small loads below zero.
pub fn read_observations(path: &Path) -> Result<ObservationSet, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            msg: format!(
                "expected header {}, got {}",
                CURVE_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        }
        .into());
    }

    let mut series: Vec<RateSeries> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(DataError::Record {
                path: path.display().to_string(),
                line,
                msg: format!("expected 3 fields, got {}", record.len()),
            }
            .into());
        }
        let rate = parse_field(path, line, "rate_mm_per_min", &record[0])?;
        let delta = parse_field(path, line, "Delta_mm", &record[1])?;
        let force = parse_field(path, line, "F_N", &record[2])?;
        if rate <= 0.0 || delta < 0.0 {
            return Err(DataError::Record {
                path: path.display().to_string(),
                line,
                msg: format!("rate must be > 0 and Delta >= 0, got ({rate}, {delta})"),
            }
            .into());
        }
        if force < 0.0 {
            log::warn!(
                "{} line {line}: negative load {force} N kept (noise below zero)",
                path.display()
            );
        }
        let group = match series.iter_mut().find(|s| s.rate == rate) {
            Some(g) => g,
            None => {
                series.push(RateSeries {
                    rate,
                    points: Vec::new(),
                });
                series.last_mut().unwrap()
            }
        };
        if group.points.iter().any(|&(d, _)| d == delta) {
            return Err(DataError::Record {
                path: path.display().to_string(),
                line,
                msg: format!("duplicate observation at rate {rate}, Delta {delta}"),
            }
            .into());
        }
        group.points.push((delta, force));
    }
    if series.is_empty() {
        return Err(DataError::Invalid(format!(
            "no observations in {}",
            path.display()
        ))
        .into());
    }
    series.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    for group in &mut series {
        group.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(ObservationSet { series })
}

/// Writes an observation set in the curve-table format, one block per rate.
pub fn write_observations(path: &Path, set: &ObservationSet) -> Result<(), Error> {
    let rows = set.series.iter().flat_map(|s| {
        s.points
            .iter()
            .map(move |&(delta, force)| vec![s.rate, delta, force])
    });
    write_numeric_csv(path, &CURVE_HEADER, rows)
}

/// Writes a numeric table with shortest round-trip formatting. Rejects
/// non-finite values and rows that do not match the header width.
pub fn write_numeric_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), Error>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(DataError::Invalid(format!(
                "row width {} does not match header width {} in {}",
                row.len(),
                header.len(),
                path.display()
            ))
            .into());
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!(
                "refusing to write non-finite value {bad} to {}",
                path.display()
            ))
            .into());
        }
        let fields: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        writer.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a numeric table written by [`write_numeric_csv`]; returns the
/// header names and the rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(DataError::Record {
                path: path.display().to_string(),
                line,
                msg: format!("expected {} fields, got {}", header.len(), record.len()),
            }
            .into());
        }
        let mut row = Vec::with_capacity(record.len());
        for (name, raw) in header.iter().zip(record.iter()) {
            row.push(parse_field(path, line, name, raw)?);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Writes a posterior chain as one row per (sweep, walker) state with
/// columns `step,walker,log_post,<parameter names>`.
pub fn write_samples(path: &Path, samples: &PosteriorSamples) -> Result<(), Error> {
    let mut header = vec!["step".to_string(), "walker".to_string(), "log_post".to_string()];
    header.extend(samples.param_names.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let (steps, walkers, dim) = (samples.n_steps(), samples.n_walkers(), samples.dim());
    let rows = (0..steps).flat_map(|step| {
        (0..walkers).map(move |walker| {
            let mut row = Vec::with_capacity(3 + dim);
            row.push(step as f64);
            row.push(walker as f64);
            row.push(samples.log_posts[[step, walker]]);
            for d in 0..dim {
                row.push(samples.chain[[step, walker, d]]);
            }
            row
        })
    });
    write_numeric_csv(path, &header_refs, rows)
}

/// Reads a chain written by [`write_samples`]. Rows must form the complete
/// step-major grid. Acceptance counters and the audit log are not stored in
/// the table, so they come back empty.
pub fn read_samples(path: &Path) -> Result<PosteriorSamples, Error> {
    let (header, rows) = read_numeric_csv(path)?;
    let invalid = |msg: String| -> Error {
        DataError::Parse {
            path: path.display().to_string(),
            msg,
        }
        .into()
    };
    if header.len() < 4 || header[0] != "step" || header[1] != "walker" || header[2] != "log_post"
    {
        return Err(invalid(format!(
            "expected header step,walker,log_post,<params>, got {}",
            header.join(",")
        )));
    }
    if rows.is_empty() {
        return Err(invalid("no samples".into()));
    }
    let dim = header.len() - 3;
    let n_walkers = rows.iter().filter(|r| r[0] == 0.0).count();
    if n_walkers == 0 || rows.len() % n_walkers != 0 {
        return Err(invalid(format!(
            "{} rows do not form a complete grid over {n_walkers} walkers",
            rows.len()
        )));
    }
    let n_steps = rows.len() / n_walkers;
    let mut chain = Array3::zeros((n_steps, n_walkers, dim));
    let mut log_posts = Array2::zeros((n_steps, n_walkers));
    for (r, row) in rows.iter().enumerate() {
        let (step, walker) = (r / n_walkers, r % n_walkers);
        if row[0] != step as f64 || row[1] != walker as f64 {
            return Err(invalid(format!(
                "row {r} is ({}, {}), expected step-major order ({step}, {walker})",
                row[0], row[1]
            )));
        }
        log_posts[[step, walker]] = row[2];
        for d in 0..dim {
            chain[[step, walker, d]] = row[3 + d];
        }
    }
    Ok(PosteriorSamples {
        param_names: header[3..].to_vec(),
        chain,
        log_posts,
        accepted: 0,
        proposed: 0,
        audit: None,
    })
}
