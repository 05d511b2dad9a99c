//! Weak-probe response of the optical cavity.
//!
//! Fluctuations around the steady state are expanded as
//! `δa = a₊ e^{-iδt} + a₋ e^{iδt}` (likewise for `δb` and `δQ`), where
//! `δ = Ω_p − Ω_o` is the probe-pump detuning. The probe sideband `a₊` has a
//! closed form in terms of the effective mechanical denominator `f(δ)`; the
//! full six-amplitude linear system is solved separately and serves as a
//! check on the closed form and as the only source of `a₋`.

use nalgebra::{Matrix6, Vector6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{probe_axis_map, DriveAmplitudes, DriveConfig, SystemParams};
use crate::steady::SteadyState;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Response at one probe detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub delta: f64,
    pub delta_p: f64,
    pub f_val: Complex64,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub b_plus: Complex64,
    pub b_minus: Complex64,
    pub q_plus: Complex64,
    pub t: Complex64,
    pub t_sq: f64,
    /// `arg t`; unwrapped when the point belongs to a spectrum.
    pub phase: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationAmplitudes {
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub b_plus: Complex64,
    pub b_minus: Complex64,
    pub q_plus: Complex64,
    pub q_minus: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputComponents {
    /// Output amplitude at the probe frequency, `E_p − √κ_o,ext a₊`.
    pub probe: Complex64,
    /// Output amplitude at `2Ω_o − Ω_p`, `−√κ_o,ext a₋`.
    pub four_wave_mixing: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMethod {
    Analytic,
    FiniteDifference,
}

impl DelayMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DelayMethod::Analytic => "analytic",
            DelayMethod::FiniteDifference => "finite-difference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayResult {
    /// Group delay in seconds.
    pub tau_g: f64,
    pub method: DelayMethod,
    /// Finite-difference step in rad/s (zero for the analytic method).
    pub step: f64,
}

/// Mechanical response function renormalised by both driven cavities.
///
/// ```text
/// f(δ) = Σ_c 2Δ_c′ g_c² n_c / ((κ_c − iδ)² + Δ_c′²) − (ω_m² − δ² − iδγ_m)/(2ω_m)
/// ```
///
/// The `2ω_m` in the bare mechanical term is what the linearised equations
/// of motion produce; with it, [`probe_sideband_amplitude`] is the exact
/// solution of [`fluctuation_linear_solve`].
pub fn effective_mechanical_denominator(
    delta: f64,
    p: &SystemParams,
    ss: &SteadyState,
) -> Complex64 {
    cavity_terms(delta, p, ss) - mechanical_term(delta, p) / (2.0 * p.omega_m)
}

/// Variant with `ω_m` instead of `2ω_m` in the bare mechanical term. It
/// halves every cavity-induced rate relative to the equations of motion and
/// is kept only for comparison.
pub fn effective_mechanical_denominator_as_printed(
    delta: f64,
    p: &SystemParams,
    ss: &SteadyState,
) -> Complex64 {
    cavity_terms(delta, p, ss) - mechanical_term(delta, p) / p.omega_m
}

fn cavity_terms(delta: f64, p: &SystemParams, ss: &SteadyState) -> Complex64 {
    let term = |kappa: f64, det: f64, g: f64, n: f64| {
        let k = Complex64::new(kappa, -delta);
        2.0 * det * g * g * n / (k * k + det * det)
    };
    term(p.kappa_o, ss.delta_o_eff, p.g_o, ss.n_o) + term(p.kappa_e, ss.delta_e_eff, p.g_e, ss.n_e)
}

/// `ω_m² − δ² − iδγ_m`
fn mechanical_term(delta: f64, p: &SystemParams) -> Complex64 {
    Complex64::new(p.omega_m * p.omega_m - delta * delta, -delta * p.gamma_m)
}

/// `κ_o + iΔ_o′ − iδ`
fn optical_denominator(delta: f64, p: &SystemParams, ss: &SteadyState) -> Complex64 {
    Complex64::new(p.kappa_o, ss.delta_o_eff - delta)
}

fn checked_denominator(delta: f64, p: &SystemParams, ss: &SteadyState) -> Result<Complex64> {
    let f = effective_mechanical_denominator(delta, p, ss);
    if f == Complex64::new(0.0, 0.0) || !f.is_finite() {
        return Err(Error::Singular {
            delta,
            what: format!("pole of the mechanical response (f = {f})"),
        });
    }
    Ok(f)
}

/// Closed-form probe sideband amplitude `a₊`.
pub fn probe_sideband_amplitude(
    delta: f64,
    p: &SystemParams,
    d: &DriveConfig,
    ss: &SteadyState,
) -> Result<Complex64> {
    let e_p = DriveAmplitudes::new(p, d)?.e_p;
    let f = checked_denominator(delta, p, ss)?;
    let x = optical_denominator(delta, p, ss);
    let drive = p.kappa_o_ext.sqrt() * e_p;
    Ok(drive / x - I * p.g_o * p.g_o * ss.n_o / f * drive / (x * x))
}

/// Complex probe transmission `t = 1 − √κ_o,ext a₊ / E_p`, which does not
/// depend on the probe power.
pub fn probe_transmission(delta: f64, p: &SystemParams, ss: &SteadyState) -> Result<Complex64> {
    let f = checked_denominator(delta, p, ss)?;
    Ok(transmission_from(delta, p, ss, f))
}

fn transmission_from(delta: f64, p: &SystemParams, ss: &SteadyState, f: Complex64) -> Complex64 {
    let x = optical_denominator(delta, p, ss);
    let k_ext = p.kappa_o_ext;
    1.0 - (k_ext / x - I * p.g_o * p.g_o * ss.n_o * k_ext / (f * x * x))
}

/// `dt/dδ` of the closed-form transmission.
fn transmission_derivative(delta: f64, p: &SystemParams, ss: &SteadyState) -> Result<Complex64> {
    let f = checked_denominator(delta, p, ss)?;
    let x = optical_denominator(delta, p, ss);
    // dx/dδ = −i
    let df = {
        let term = |kappa: f64, det: f64, g: f64, n: f64| {
            let k = Complex64::new(kappa, -delta);
            let den = k * k + det * det;
            4.0 * I * det * g * g * n * k / (den * den)
        };
        term(p.kappa_o, ss.delta_o_eff, p.g_o, ss.n_o)
            + term(p.kappa_e, ss.delta_e_eff, p.g_e, ss.n_e)
            + Complex64::new(2.0 * delta, p.gamma_m) / (2.0 * p.omega_m)
    };
    let c = I * p.g_o * p.g_o * ss.n_o * p.kappa_o_ext;
    let x2 = x * x;
    Ok(-p.kappa_o_ext * I / x2 + c * (-df / (f * f * x2) + 2.0 * I / (f * x2 * x)))
}

/// Solves the six coupled sideband equations obtained by inserting the
/// two-frequency ansatz into the linearised equations of motion.
///
/// Unknowns are `(a₊, a₋*, b₊, b₋*, Q₊, Q₋*)`, which keeps the system
/// complex-linear. `Q₋ = Q₊*` is not imposed; it comes out of the solve.
pub fn fluctuation_linear_solve(
    delta: f64,
    p: &SystemParams,
    d: &DriveConfig,
    ss: &SteadyState,
) -> Result<FluctuationAmplitudes> {
    let e_p = DriveAmplitudes::new(p, d)?.e_p;
    let m = mechanical_term(delta, p);
    let (a, b) = (ss.a_s, ss.b_s);
    let (go, ge, wm) = (p.g_o, p.g_e, p.omega_m);
    let z = Complex64::new(0.0, 0.0);

    // Mechanical rows are divided by 2ω_m to keep the matrix well scaled.
    let mech = m / (2.0 * wm);
    let row_q = [-go * a.conj(), -go * a, -ge * b.conj(), -ge * b];
    #[rustfmt::skip]
    let mat = Matrix6::new(
        Complex64::new(p.kappa_o, ss.delta_o_eff - delta), z, z, z, -I * go * a, z,
        z, Complex64::new(p.kappa_o, -ss.delta_o_eff - delta), z, z, z, I * go * a.conj(),
        z, z, Complex64::new(p.kappa_e, ss.delta_e_eff - delta), z, -I * ge * b, z,
        z, z, z, Complex64::new(p.kappa_e, -ss.delta_e_eff - delta), z, I * ge * b.conj(),
        row_q[0], row_q[1], row_q[2], row_q[3], mech, z,
        row_q[0], row_q[1], row_q[2], row_q[3], z, mech,
    );
    let rhs = Vector6::new(
        Complex64::new(p.kappa_o_ext.sqrt() * e_p, 0.0),
        z,
        z,
        z,
        z,
        z,
    );

    let sol = mat
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|c| c.is_finite()));
    let Some(x) = sol else {
        return Err(Error::Singular {
            delta,
            what: "sideband linear system is singular".to_string(),
        });
    };
    Ok(FluctuationAmplitudes {
        a_plus: x[0],
        a_minus: x[1].conj(),
        b_plus: x[2],
        b_minus: x[3].conj(),
        q_plus: x[4],
        q_minus: x[5].conj(),
    })
}

/// Output amplitudes at the probe frequency and at the four-wave-mixing
/// frequency `2Ω_o − Ω_p`.
pub fn output_field_components(
    delta: f64,
    p: &SystemParams,
    d: &DriveConfig,
    ss: &SteadyState,
) -> Result<OutputComponents> {
    let e_p = DriveAmplitudes::new(p, d)?.e_p;
    let amps = fluctuation_linear_solve(delta, p, d, ss)?;
    let root = p.kappa_o_ext.sqrt();
    Ok(OutputComponents {
        probe: e_p - root * amps.a_plus,
        four_wave_mixing: -root * amps.a_minus,
    })
}

/// Full response at one probe-pump detuning. `phase` is wrapped to (−π, π].
pub fn response_point(
    delta: f64,
    p: &SystemParams,
    d: &DriveConfig,
    ss: &SteadyState,
    stable: bool,
) -> Result<ResponsePoint> {
    let f = checked_denominator(delta, p, ss)?;
    let t = transmission_from(delta, p, ss, f);
    let a_plus = probe_sideband_amplitude(delta, p, d, ss)?;
    let full = fluctuation_linear_solve(delta, p, d, ss)?;
    Ok(ResponsePoint {
        delta,
        delta_p: probe_axis_map(delta, d.delta_o),
        f_val: f,
        a_plus,
        a_minus: full.a_minus,
        b_plus: full.b_plus,
        b_minus: full.b_minus,
        q_plus: full.q_plus,
        t,
        t_sq: t.norm_sqr(),
        phase: t.arg(),
        stable,
    })
}

/// Default finite-difference step: a hundredth of the mechanical damping,
/// the narrowest scale in the response.
pub fn default_delay_step(p: &SystemParams) -> f64 {
    p.gamma_m / 100.0
}

/// Group delay `dφ/dΩ_p` at the optical cavity resonance (`Δ_p = 0`).
pub fn group_delay(
    p: &SystemParams,
    d: &DriveConfig,
    ss: &SteadyState,
    method: DelayMethod,
) -> Result<DelayResult> {
    group_delay_with_step(p, d, ss, method, default_delay_step(p))
}

/// Smallest |t| at which the phase is considered well defined.
const MIN_DELAY_MAGNITUDE: f64 = 1e-9;

pub fn group_delay_with_step(
    p: &SystemParams,
    d: &DriveConfig,
    ss: &SteadyState,
    method: DelayMethod,
    step: f64,
) -> Result<DelayResult> {
    // Ω_p = ω_o  ⇔  δ = Δ_o
    let center = d.delta_o;
    match method {
        DelayMethod::Analytic => {
            let t = probe_transmission(center, p, ss)?;
            if t.norm() < MIN_DELAY_MAGNITUDE {
                return Err(Error::IllConditionedDelay(format!(
                    "|t| = {:e} at the cavity resonance",
                    t.norm()
                )));
            }
            let dt = transmission_derivative(center, p, ss)?;
            Ok(DelayResult {
                tau_g: (dt / t).im,
                method,
                step: 0.0,
            })
        }
        DelayMethod::FiniteDifference => {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::Domain(format!(
                    "delay step must be positive, got {step}"
                )));
            }
            let slope = |h: f64| -> Result<f64> {
                let lo = probe_transmission(center - h, p, ss)?;
                let hi = probe_transmission(center + h, p, ss)?;
                for t in [lo, hi] {
                    if t.norm() < MIN_DELAY_MAGNITUDE {
                        return Err(Error::IllConditionedDelay(format!(
                            "|t| = {:e} inside the difference stencil",
                            t.norm()
                        )));
                    }
                }
                Ok(wrap_phase(hi.arg() - lo.arg()) / (2.0 * h))
            };
            let coarse = slope(step)?;
            let fine = slope(step / 2.0)?;
            // A phase slip between the two stencils shows up as a large gap.
            let scale = coarse.abs().max(fine.abs());
            if scale > 0.0 && (coarse - fine).abs() > 0.1 * scale {
                return Err(Error::IllConditionedDelay(format!(
                    "difference quotients disagree ({coarse:e} vs {fine:e} s)"
                )));
            }
            Ok(DelayResult {
                tau_g: (4.0 * fine - coarse) / 3.0,
                method,
                step,
            })
        }
    }
}

/// Maps a phase difference into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
