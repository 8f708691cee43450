//! Rigid double cantilever beam surrogate.
//!
//! The adherends are treated as rigid levers pivoting about the bonded end,
//! so the normal opening along the interface is linear in position,
//! δ_N(x) = (x/L)·Δ, with Δ the crack-opening displacement at the load
//! line. Balancing the moment of the cohesive tractions against the
//! applied force about the pivot,
//!
//! ```text
//! B ∫₀ᴸ x t_N(x) dx = L F
//! ```
//!
//! and discretizing the interface into equal elements with midpoint
//! quadrature gives F = (B/n) Σᵢ xᵢ t_N,ᵢ. Loading marches Δ uniformly
//! from zero at a fixed rate; each element carries its own cohesive state.

use crate::czm::{Integrator, InterfaceParams, InterfaceState, Opening};
use crate::error::{ConfigError, DataError, Error, NumericalError};

/// Specimen geometry. The pre-crack length is recorded for provenance but
/// does not enter the moment balance, whose arm is the bonded length L.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcbGeometry {
    /// Bonded interface length L, mm.
    pub length: f64,
    /// Specimen width B, mm.
    pub width: f64,
    /// Initial crack length a0, mm (metadata only).
    pub precrack: f64,
    /// Number of equal-length interface elements.
    pub n_elements: usize,
}

impl Default for DcbGeometry {
    fn default() -> Self {
        DcbGeometry {
            length: 114.4,
            width: 25.0,
            precrack: 101.6,
            n_elements: 1000,
        }
    }
}

impl DcbGeometry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.length.is_finite() && self.length > 0.0)
            || !(self.width.is_finite() && self.width > 0.0)
        {
            return Err(ConfigError::new(format!(
                "geometry length and width must be finite and > 0, got {} and {}",
                self.length, self.width
            )));
        }
        if !(self.precrack.is_finite() && self.precrack >= 0.0) {
            return Err(ConfigError::new(format!(
                "precrack must be finite and >= 0, got {}",
                self.precrack
            )));
        }
        if self.n_elements < 10 {
            return Err(ConfigError::new(format!(
                "n_elements must be >= 10, got {}",
                self.n_elements
            )));
        }
        Ok(())
    }
}

/// Displacement-controlled loading program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingProgram {
    /// Crack-opening displacement rate, mm/min.
    pub rate: f64,
    /// Final applied COD Δ, mm.
    pub delta_max: f64,
    /// Number of uniform Δ increments (output has n_steps + 1 points).
    pub n_steps: usize,
}

impl Default for LoadingProgram {
    fn default() -> Self {
        LoadingProgram {
            rate: 5.08,
            delta_max: 20.0,
            n_steps: 400,
        }
    }
}

impl LoadingProgram {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(ConfigError::new(format!(
                "loading rate must be finite and > 0, got {}",
                self.rate
            )));
        }
        if !(self.delta_max.is_finite() && self.delta_max > 0.0) {
            return Err(ConfigError::new(format!(
                "delta_max must be finite and > 0, got {}",
                self.delta_max
            )));
        }
        if self.n_steps < 2 {
            return Err(ConfigError::new(format!(
                "n_steps must be >= 2, got {}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

/// Simulated load-displacement response at one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDisplacementCurve {
    /// COD rate, mm/min.
    pub rate: f64,
    /// (Δ mm, F N) pairs with strictly increasing Δ, starting at (0, 0).
    pub points: Vec<(f64, f64)>,
    pub geometry: DcbGeometry,
    /// FNV-1a digest of the generating parameters, for provenance checks.
    pub params_fingerprint: u64,
}

impl LoadDisplacementCurve {
    /// Load at `delta` by linear interpolation, clamped to the curve ends.
    pub fn interpolate(&self, delta: f64) -> f64 {
        let xs: Vec<f64> = self.points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        interp_linear(&xs, &ys, delta)
    }
}

/// Piecewise-linear interpolation on sorted abscissae, clamped at the ends.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let hi = xs.partition_point(|&v| v < x);
    let lo = hi - 1;
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

/// Element midpoint positions xᵢ = (i + ½)·L/n, mm.
fn midpoint(i: usize, geom: &DcbGeometry) -> f64 {
    (i as f64 + 0.5) * geom.length / geom.n_elements as f64
}

/// Per-element normal openings δ_N(xᵢ) = (xᵢ/L)·Δ for an applied COD.
pub fn opening_profile(delta_applied: f64, geom: &DcbGeometry) -> Vec<f64> {
    (0..geom.n_elements)
        .map(|i| midpoint(i, geom) / geom.length * delta_applied)
        .collect()
}

fn fingerprint(values: &[f64]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Simulates the load-displacement curve for one loading program.
///
/// Marches Δ in uniform increments (dt = ΔΔ/rate with the rate converted
/// to mm/s), advances every element's cohesive state, and assembles the
/// reaction force by midpoint quadrature of the moment balance. The
/// surrogate's no-slip construction assumes friction = 1.
pub fn simulate_curve(
    params: &InterfaceParams,
    geom: &DcbGeometry,
    loading: &LoadingProgram,
) -> Result<LoadDisplacementCurve, Error> {
    params.validate()?;
    geom.validate()?;
    loading.validate()?;
    if params.friction != 1.0 {
        return Err(ConfigError::new(format!(
            "the rigid-beam surrogate assumes friction = 1 (no slip), got {}",
            params.friction
        ))
        .into());
    }
    let integrator = Integrator::default();
    let rate_mm_s = loading.rate / 60.0;
    let dt = loading.delta_max / loading.n_steps as f64 / rate_mm_s;
    let n = geom.n_elements;
    let mut states = vec![InterfaceState::default(); n];
    let mut points = Vec::with_capacity(loading.n_steps + 1);
    points.push((0.0, 0.0));
    for step in 1..=loading.n_steps {
        let delta_applied = loading.delta_max * step as f64 / loading.n_steps as f64;
        let mut moment = 0.0;
        for (i, state) in states.iter_mut().enumerate() {
            let x = midpoint(i, geom);
            let opening = Opening::mode_i(x / geom.length * delta_applied);
            let (advanced, traction) =
                integrator
                    .step(state, opening, dt, params)
                    .map_err(|e| match e {
                        NumericalError::NonFinite { quantity, context } => {
                            NumericalError::NonFinite {
                                quantity,
                                context: format!("step {step}, element {i}: {context}"),
                            }
                        }
                        other => other,
                    })?;
            *state = advanced;
            moment += x * traction.normal;
        }
        let force = geom.width / n as f64 * moment;
        points.push((delta_applied, force));
    }
    let fp = fingerprint(&[
        params.k_normal,
        params.k_tangential,
        params.friction,
        params.delta_onset,
        params.delta_fail,
        params.hardening,
        params.yield_initial,
        params.flow_rate,
        params.activation_energy,
        params.rate_sensitivity,
        params.boltzmann,
        params.temperature,
    ]);
    Ok(LoadDisplacementCurve {
        rate: loading.rate,
        points,
        geometry: *geom,
        params_fingerprint: fp,
    })
}

/// Maximal load and its COD; ties broken toward the smallest Δ.
pub fn peak_load(curve: &LoadDisplacementCurve) -> Result<(f64, f64), Error> {
    let mut best: Option<(f64, f64)> = None;
    for &(delta, force) in &curve.points {
        match best {
            Some((_, f_best)) if force <= f_best => {}
            _ => best = Some((delta, force)),
        }
    }
    best.ok_or_else(|| DataError::Invalid("peak_load on an empty curve".into()).into())
}
