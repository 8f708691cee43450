//! Elastic-viscoplastic cohesive law with scalar damage.
//!
//! The interface separation δ = (δ_N, δ_T) decomposes additively into an
//! elastic and a plastic part, δ = δᵉ + δᵖ. A quadratic free energy
//!
//! ```text
//! φ = ½ (1 − D) δᵉ·K·δᵉ + H κ²,    K = diag(K_N, K_T)
//! ```
//!
//! yields the traction t = (1 − D) K (δ − δᵖ). Yielding is governed by the
//! frictional surface
//!
//! ```text
//! φ_Y = τ + μ⟨t_N⟩ − S_yp,    S_yp = S₀ + H κ
//! ```
//!
//! with τ the tangential traction magnitude and ⟨·⟩ the Macaulay bracket.
//! The plastic opening evolves by a thermally activated flow rule
//!
//! ```text
//! δ̇ᵖ = γ̇ m_flow,    γ̇ = γ₀ exp(−Q/(k_B θ) ⟨1 − (τ + μ⟨t_N⟩)/S_yp⟩^(1/m))
//! ```
//!
//! whose rate saturates at γ₀ once the stress reaches the yield surface
//! (the overstress bracket is clamped at zero). The hardening variable
//! accumulates as κ̇ = γ̇. Damage is a pure function of the largest
//! effective opening reached so far, so it never heals on unloading:
//!
//! ```text
//! D = δᶠ (δ_max − δ⁰) / (δ_max (δᶠ − δ⁰))   for δ⁰ < δ_max ≤ δᶠ
//! ```
//!
//! Time integration uses sub-stepped explicit Euler with the opening held
//! at its end-of-step value; the substep count adapts to the plastic
//! increment.

use crate::error::{ConfigError, NumericalError};

/// Boltzmann constant in N·mm/K, matching the activation-energy units.
pub const BOLTZMANN: f64 = 1.380649e-20;

/// Interface separation or separation-like vector in the local (normal,
/// tangential) frame, mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Opening {
    pub normal: f64,
    pub tangential: f64,
}

impl Opening {
    pub const ZERO: Opening = Opening {
        normal: 0.0,
        tangential: 0.0,
    };

    /// Pure normal opening (mode I).
    pub fn mode_i(normal: f64) -> Self {
        Opening {
            normal,
            tangential: 0.0,
        }
    }

    /// Effective opening |δ| = √(δ_N² + δ_T²).
    pub fn magnitude(&self) -> f64 {
        self.normal.hypot(self.tangential)
    }
}

/// Interface traction in the local frame: signed normal component and
/// tangential magnitude τ ≥ 0, MPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traction {
    pub normal: f64,
    pub tangential: f64,
}

/// Material parameters of the cohesive law.
///
/// All fields must be strictly positive, with `delta_fail > delta_onset`
/// and `rate_sensitivity >= 1`; see [`InterfaceParams::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceParams {
    /// Normal elastic stiffness K_N, MPa/mm.
    pub k_normal: f64,
    /// Tangential elastic stiffness K_T, MPa/mm.
    pub k_tangential: f64,
    /// Friction coefficient μ coupling normal traction into yield and flow.
    pub friction: f64,
    /// Effective opening at damage onset δ⁰, mm.
    pub delta_onset: f64,
    /// Effective opening at final failure δᶠ, mm.
    pub delta_fail: f64,
    /// Hardening modulus H, MPa/mm.
    pub hardening: f64,
    /// Initial yield strength S₀, MPa.
    pub yield_initial: f64,
    /// Reference plastic rate γ₀, mm/s.
    pub flow_rate: f64,
    /// Activation energy Q, N·mm.
    pub activation_energy: f64,
    /// Rate sensitivity exponent m; the flow rule uses 1/m.
    pub rate_sensitivity: f64,
    /// Boltzmann constant k_B, N·mm/K.
    pub boltzmann: f64,
    /// Reference absolute temperature θ, K.
    pub temperature: f64,
}

impl InterfaceParams {
    /// Calibrated posterior-mean parameter set for a high-density
    /// polyethylene adhesive interface. Default material for configs and
    /// reference runs.
    pub fn reference_polyethylene() -> Self {
        InterfaceParams {
            k_normal: 326.81,
            k_tangential: 326.81,
            friction: 1.0,
            delta_onset: 5.83,
            delta_fail: 17.91,
            hardening: 0.3376,
            yield_initial: 78.87,
            flow_rate: 3.7e-7,
            activation_energy: 1.58e-19,
            rate_sensitivity: 47.06,
            boltzmann: BOLTZMANN,
            temperature: 298.0,
        }
    }

    /// Dimensionless thermal activation factor Q/(k_B θ).
    pub fn thermal_exponent(&self) -> f64 {
        self.activation_energy / (self.boltzmann * self.temperature)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("k_normal", self.k_normal),
            ("k_tangential", self.k_tangential),
            ("friction", self.friction),
            ("delta_onset", self.delta_onset),
            ("delta_fail", self.delta_fail),
            ("hardening", self.hardening),
            ("yield_initial", self.yield_initial),
            ("flow_rate", self.flow_rate),
            ("activation_energy", self.activation_energy),
            ("rate_sensitivity", self.rate_sensitivity),
            ("boltzmann", self.boltzmann),
            ("temperature", self.temperature),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::new(format!(
                    "interface parameter {name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.delta_fail <= self.delta_onset {
            return Err(ConfigError::new(format!(
                "delta_fail ({}) must exceed delta_onset ({})",
                self.delta_fail, self.delta_onset
            )));
        }
        if self.rate_sensitivity < 1.0 {
            return Err(ConfigError::new(format!(
                "rate_sensitivity must be >= 1, got {}",
                self.rate_sensitivity
            )));
        }
        Ok(())
    }
}

/// Internal variables of one interface point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterfaceState {
    /// Plastic opening δᵖ, mm.
    pub plastic: Opening,
    /// Hardening variable κ, mm.
    pub kappa: f64,
    /// Scalar damage D in [0, 1].
    pub damage: f64,
    /// Largest effective opening seen so far, mm; drives damage.
    pub delta_max: f64,
}

impl InterfaceState {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = self.plastic.normal.is_finite()
            && self.plastic.tangential.is_finite()
            && self.kappa.is_finite()
            && self.damage.is_finite()
            && self.delta_max.is_finite();
        if !finite {
            return Err(ConfigError::new("interface state has non-finite fields"));
        }
        if !(0.0..=1.0).contains(&self.damage) || self.kappa < 0.0 || self.delta_max < 0.0 {
            return Err(ConfigError::new(format!(
                "interface state out of range: damage = {}, kappa = {}, delta_max = {}",
                self.damage, self.kappa, self.delta_max
            )));
        }
        Ok(())
    }
}

/// Macaulay bracket ⟨x⟩ = max(x, 0).
#[inline]
fn macaulay(x: f64) -> f64 {
    x.max(0.0)
}

/// Traction t = (1 − D) K (δ − δᵖ); the tangential component is returned
/// as the magnitude τ.
pub fn elastic_traction(delta: Opening, state: &InterfaceState, params: &InterfaceParams) -> Traction {
    let sound = 1.0 - state.damage;
    Traction {
        normal: sound * params.k_normal * (delta.normal - state.plastic.normal),
        tangential: (sound * params.k_tangential * (delta.tangential - state.plastic.tangential))
            .abs(),
    }
}

/// Current yield strength S_yp = S₀ + H κ.
pub fn yield_strength(kappa: f64, params: &InterfaceParams) -> f64 {
    params.yield_initial + params.hardening * kappa
}

/// Frictional yield function φ_Y = τ + μ⟨t_N⟩ − S_yp; compression carries
/// no normal contribution.
pub fn yield_function(t: &Traction, s_yp: f64, friction: f64) -> f64 {
    t.tangential + friction * macaulay(t.normal) - s_yp
}

/// Thermally activated flow rate; saturates at γ₀ when the stress measure
/// τ + μ⟨t_N⟩ reaches or exceeds S_yp (the overstress bracket is clamped
/// at zero before exponentiation).
pub fn viscoplastic_rate(t: &Traction, s_yp: f64, params: &InterfaceParams) -> f64 {
    let stress = t.tangential + params.friction * macaulay(t.normal);
    let gap = 1.0 - stress / s_yp;
    if gap <= 0.0 {
        return params.flow_rate;
    }
    let exponent = params.thermal_exponent() * gap.powf(params.rate_sensitivity.recip());
    params.flow_rate * (-exponent).exp()
}

/// Plastic flow direction m_flow = (t_T/τ + μ n)/√(1+μ²). For τ = 0 the
/// tangential part vanishes and flow is purely normal (pure mode I).
pub fn flow_direction(t: &Traction, friction: f64) -> Opening {
    signed_flow_direction(t.tangential, friction)
}

fn signed_flow_direction(t_tangential: f64, friction: f64) -> Opening {
    let scale = (1.0 + friction * friction).sqrt().recip();
    let tangential = if t_tangential == 0.0 {
        0.0
    } else {
        t_tangential.signum() * scale
    };
    Opening {
        normal: friction * scale,
        tangential,
    }
}

/// Damage as a function of the historical maximum effective opening:
/// 0 up to δ⁰, 1 beyond δᶠ, hyperbolic ramp in between.
pub fn damage_value(delta_max: f64, params: &InterfaceParams) -> f64 {
    if delta_max <= params.delta_onset {
        0.0
    } else if delta_max <= params.delta_fail {
        params.delta_fail * (delta_max - params.delta_onset)
            / (delta_max * (params.delta_fail - params.delta_onset))
    } else {
        1.0
    }
}

/// Free energy φ = ½ (1 − D) δᵉ·K·δᵉ + H κ², N·mm per unit area. Basis of
/// the dissipation audit t·Δδ − Δφ ≥ 0.
pub fn free_energy(delta: Opening, state: &InterfaceState, params: &InterfaceParams) -> f64 {
    let e_n = delta.normal - state.plastic.normal;
    let e_t = delta.tangential - state.plastic.tangential;
    0.5 * (1.0 - state.damage) * (params.k_normal * e_n * e_n + params.k_tangential * e_t * e_t)
        + params.hardening * state.kappa * state.kappa
}

/// Sub-stepped explicit Euler integrator for the cohesive state.
///
/// The substep count is chosen so the plastic increment per substep stays
/// below `substep_fraction` of the effective opening scale, clamped to
/// [`min_substeps`, `max_substeps`]. Setting `min_substeps == max_substeps`
/// pins the count, which the convergence tests rely on.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub substep_fraction: f64,
    pub min_substeps: usize,
    pub max_substeps: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            substep_fraction: 1e-3,
            min_substeps: 1,
            max_substeps: 1000,
        }
    }
}

impl Integrator {
    /// Integrator with a pinned substep count.
    pub fn fixed(n: usize) -> Self {
        Integrator {
            substep_fraction: 1e-3,
            min_substeps: n.max(1),
            max_substeps: n.max(1),
        }
    }

    fn substeps(&self, delta: Opening, dt: f64, params: &InterfaceParams) -> usize {
        let floor = self.min_substeps.max(1);
        if floor == self.max_substeps {
            return floor;
        }
        let scale = delta.magnitude().max(params.delta_onset);
        let wanted = params.flow_rate * dt / (self.substep_fraction * scale);
        if !wanted.is_finite() {
            return self.max_substeps;
        }
        (wanted.ceil() as usize).clamp(floor, self.max_substeps)
    }

    /// Advances the state over one step of length `dt` with the opening
    /// held at `delta`. Within each substep: traction at the current
    /// state, flow rate, flow direction, then forward-Euler updates of δᵖ
    /// and κ (magnitude convention κ̇ = γ̇). After the substeps, δ_max and
    /// damage are refreshed and the end-of-step traction is returned.
    ///
    /// Flow is gated on a nonzero driving stress τ + μ⟨t_N⟩: the thermally
    /// activated rate is a creep law for loaded interfaces, and an
    /// unloaded or purely compressed point has no flow direction, so its
    /// state stays untouched.
    pub fn step(
        &self,
        state: &InterfaceState,
        delta: Opening,
        dt: f64,
        params: &InterfaceParams,
    ) -> Result<(InterfaceState, Traction), NumericalError> {
        let n_sub = self.substeps(delta, dt, params);
        let dt_sub = dt / n_sub as f64;
        let mut st = *state;
        for _ in 0..n_sub {
            let sound = 1.0 - st.damage;
            let t_normal = sound * params.k_normal * (delta.normal - st.plastic.normal);
            let t_tangential =
                sound * params.k_tangential * (delta.tangential - st.plastic.tangential);
            let traction = Traction {
                normal: t_normal,
                tangential: t_tangential.abs(),
            };
            if traction.tangential + params.friction * macaulay(traction.normal) <= 0.0 {
                continue;
            }
            let s_yp = yield_strength(st.kappa, params);
            let rate = viscoplastic_rate(&traction, s_yp, params);
            let dir = signed_flow_direction(t_tangential, params.friction);
            st.plastic.normal += rate * dir.normal * dt_sub;
            st.plastic.tangential += rate * dir.tangential * dt_sub;
            st.kappa += rate * dt_sub;
        }
        st.delta_max = st.delta_max.max(delta.magnitude());
        st.damage = damage_value(st.delta_max, params);
        let traction = elastic_traction(delta, &st, params);
        let finite = st.plastic.normal.is_finite()
            && st.plastic.tangential.is_finite()
            && st.kappa.is_finite()
            && traction.normal.is_finite()
            && traction.tangential.is_finite();
        if !finite {
            return Err(NumericalError::non_finite(
                "interface state",
                format!(
                    "dt = {dt}, opening = ({}, {})",
                    delta.normal, delta.tangential
                ),
            ));
        }
        Ok((st, traction))
    }
}
