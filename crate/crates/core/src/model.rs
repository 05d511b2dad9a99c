//! Device constants, drive settings and the conversions between applied
//! power and the drive terms of the mean-field equations.
//!
//! Every frequency-like quantity is an angular frequency in rad/s and every
//! power is in watts. Conversion from "2π × Hz" happens in the config layer.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s (CODATA 2018, exact by SI definition of h).
pub const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
}

impl PhysicalConstants {
    pub const CODATA: Self = Self { hbar: HBAR };
}

/// Fixed constants of the optical cavity, microwave cavity and the shared
/// mechanical resonator.
///
/// `kappa_o` and `kappa_e` are the decay rates that multiply the field
/// amplitudes in the equations of motion, so the power linewidth (FWHM) of
/// each cavity is `2 * kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_o: f64,
    pub omega_e: f64,
    pub omega_m: f64,
    pub kappa_o: f64,
    pub kappa_e: f64,
    pub kappa_o_ext: f64,
    pub kappa_e_ext: f64,
    pub g_o: f64,
    pub g_e: f64,
    pub gamma_m: f64,
}

impl SystemParams {
    /// A 282 THz optical cavity and a 7.1 GHz microwave cavity sharing a
    /// 5.6 MHz nanomechanical resonator.
    pub fn reference() -> Self {
        let tp = 2.0 * PI;
        let kappa_o = tp * 1.65e6;
        let kappa_e = tp * 1.6e6;
        Self {
            omega_o: tp * 282e12,
            omega_e: tp * 7.1e9,
            omega_m: tp * 5.6e6,
            kappa_o,
            kappa_e,
            kappa_o_ext: 0.76 * kappa_o,
            kappa_e_ext: 0.11 * kappa_e,
            g_o: tp * 27.0,
            g_e: tp * 2.7,
            gamma_m: tp * 4.0,
        }
    }

    /// |t|² of the undriven cavity on resonance, `(1 - kappa_o_ext/kappa_o)²`.
    pub fn bare_resonance_transmission(&self) -> f64 {
        let r = 1.0 - self.kappa_o_ext / self.kappa_o;
        r * r
    }

    pub fn named_fields(&self) -> [(&'static str, f64); 10] {
        [
            ("omega_o", self.omega_o),
            ("omega_e", self.omega_e),
            ("omega_m", self.omega_m),
            ("kappa_o", self.kappa_o),
            ("kappa_e", self.kappa_e),
            ("kappa_o_ext", self.kappa_o_ext),
            ("kappa_e_ext", self.kappa_e_ext),
            ("g_o", self.g_o),
            ("g_e", self.g_e),
            ("gamma_m", self.gamma_m),
        ]
    }
}

/// Mapping from applied power to the drive amplitude `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Photon-flux amplitude, `|E| = sqrt(P / ħΩ)`.
    #[default]
    Standard,
    /// `|E| = sqrt(2 P κ / ħΩ)`, taken literally alongside the `sqrt(κ_ext)`
    /// input coupling. Over-counts the coupling by `sqrt(2κ)`.
    PaperLiteral,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Standard => "standard",
            Convention::PaperLiteral => "paper-literal",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Convention::Standard),
            "paper-literal" => Ok(Convention::PaperLiteral),
            other => Err(Error::Domain(format!(
                "unknown convention `{other}` (expected `standard` or `paper-literal`)"
            ))),
        }
    }
}

/// Pump and probe settings. Detunings are `omega_cavity - Omega_pump`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub p_o: f64,
    pub p_e: f64,
    pub p_p: f64,
    pub delta_o: f64,
    pub delta_e: f64,
    pub convention: Convention,
}

impl DriveConfig {
    pub fn with_optical_power(mut self, p_o: f64) -> Self {
        self.p_o = p_o;
        self
    }
}

/// Drive amplitudes entering the mean-field equations. Pump phases are
/// gauged to zero so all three are real and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveAmplitudes {
    pub e_o: f64,
    pub e_e: f64,
    pub e_p: f64,
}

impl DriveAmplitudes {
    /// Carrier frequencies are approximated by the cavity frequencies; the
    /// MHz-scale detunings are below 1e-5 relative of the carriers.
    pub fn new(p: &SystemParams, d: &DriveConfig) -> Result<Self> {
        Ok(Self {
            e_o: pump_amplitude(d.p_o, p.kappa_o, p.omega_o, d.convention)?,
            e_e: pump_amplitude(d.p_e, p.kappa_e, p.omega_e, d.convention)?,
            e_p: pump_amplitude(d.p_p, p.kappa_o, p.omega_o, d.convention)?,
        })
    }
}

/// Drive amplitude for power `power` into a cavity of decay rate `kappa`
/// at carrier `omega`.
pub fn pump_amplitude(power: f64, kappa: f64, omega: f64, convention: Convention) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!(
            "carrier frequency must be positive, got {omega}"
        )));
    }
    if !(power >= 0.0) || !power.is_finite() {
        return Err(Error::Domain(format!(
            "power must be nonnegative, got {power}"
        )));
    }
    let flux = power / (HBAR * omega);
    Ok(match convention {
        Convention::Standard => flux.sqrt(),
        Convention::PaperLiteral => (2.0 * kappa * flux).sqrt(),
    })
}

/// Probe-cavity detuning `Omega_p - omega_o` from the probe-pump detuning
/// `delta = Omega_p - Omega_o`.
pub fn probe_axis_map(delta: f64, delta_o: f64) -> f64 {
    delta - delta_o
}

/// Inverse of [`probe_axis_map`].
pub fn probe_axis_unmap(delta_p: f64, delta_o: f64) -> f64 {
    delta_p + delta_o
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.passed() {
            Ok(self.warnings)
        } else {
            Err(Error::Validation(self.errors))
        }
    }
}

/// Checks hard invariants of the parameter set and collects soft warnings.
pub fn validate_params(p: &SystemParams, d: &DriveConfig) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (name, value) in p.named_fields() {
        if !value.is_finite() {
            report
                .errors
                .push(format!("{name} must be finite, got {value}"));
        } else if value <= 0.0 {
            report
                .errors
                .push(format!("{name} must be positive, got {value}"));
        }
    }
    if p.kappa_o_ext > p.kappa_o {
        report.errors.push(format!(
            "external rate exceeds total: kappa_o_ext = {} > kappa_o = {}",
            p.kappa_o_ext, p.kappa_o
        ));
    }
    if p.kappa_e_ext > p.kappa_e {
        report.errors.push(format!(
            "external rate exceeds total: kappa_e_ext = {} > kappa_e = {}",
            p.kappa_e_ext, p.kappa_e
        ));
    }

    for (name, value) in [("P_o", d.p_o), ("P_e", d.p_e), ("P_p", d.p_p)] {
        if !value.is_finite() || value < 0.0 {
            report
                .errors
                .push(format!("{name} must be nonnegative, got {value}"));
        }
    }
    for (name, value) in [("Delta_o", d.delta_o), ("Delta_e", d.delta_e)] {
        if !value.is_finite() {
            report
                .errors
                .push(format!("{name} must be finite, got {value}"));
        }
    }

    if d.p_o > 0.0 && d.p_p > 0.01 * d.p_o {
        report.warnings.push(format!(
            "probe not weak: P_p = {} W exceeds 1% of P_o = {} W",
            d.p_p, d.p_o
        ));
    }
    for (cavity, kappa) in [("optical", p.kappa_o), ("microwave", p.kappa_e)] {
        if kappa > 0.0 && p.omega_m / kappa < 1.0 {
            report.warnings.push(format!(
                "{cavity} cavity is not sideband resolved: omega_m/kappa = {:.3}",
                p.omega_m / kappa
            ));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive() -> DriveConfig {
        let p = SystemParams::reference();
        DriveConfig {
            p_o: 2e-3,
            p_e: 1e-6,
            p_p: 1e-9,
            delta_o: p.omega_m,
            delta_e: p.omega_m,
            convention: Convention::Standard,
        }
    }

    #[test]
    fn reference_set_passes_cleanly() {
        let r = validate_params(&SystemParams::reference(), &drive());
        assert!(r.passed());
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    }

    #[test]
    fn external_rate_above_total_fails() {
        let mut p = SystemParams::reference();
        p.kappa_o_ext = 2.0 * p.kappa_o;
        let r = validate_params(&p, &drive());
        assert!(!r.passed());
        assert!(r.errors[0].contains("external rate exceeds total"));
    }

    #[test]
    fn strong_probe_warns() {
        let mut d = drive();
        d.p_p = d.p_o;
        let r = validate_params(&SystemParams::reference(), &d);
        assert!(r.passed());
        assert!(r.warnings.iter().any(|w| w.contains("probe not weak")));
    }

    #[test]
    fn unresolved_sideband_warns() {
        let mut p = SystemParams::reference();
        p.kappa_o = 2.0 * p.omega_m;
        p.kappa_o_ext = p.kappa_o / 2.0;
        let r = validate_params(&p, &drive());
        assert!(r.passed());
        assert!(r.warnings.iter().any(|w| w.contains("sideband")));
    }

    #[test]
    fn negative_kappa_fails() {
        let mut p = SystemParams::reference();
        p.kappa_o = -1.0;
        assert!(!validate_params(&p, &drive()).passed());
    }

    #[test]
    fn zero_power_gives_zero_amplitude() {
        for c in [Convention::Standard, Convention::PaperLiteral] {
            assert_eq!(pump_amplitude(0.0, 1.0, 1.0, c).unwrap(), 0.0);
        }
    }

    #[test]
    fn amplitude_domain_errors() {
        assert!(pump_amplitude(1.0, 0.0, 1.0, Convention::Standard).is_err());
        assert!(pump_amplitude(1.0, 1.0, -1.0, Convention::Standard).is_err());
    }

    #[test]
    fn amplitude_reference_values() {
        let p = SystemParams::reference();
        // sqrt(2 * 2e-3 * kappa_o / (hbar * omega_o)), evaluated by hand.
        let e = pump_amplitude(2e-3, p.kappa_o, p.omega_o, Convention::PaperLiteral).unwrap();
        assert!((e / 4.709_9e11 - 1.0).abs() < 1e-3, "{e:e}");
        let e = pump_amplitude(1e-6, p.kappa_e, p.omega_e, Convention::Standard).unwrap();
        assert!((e / 4.610e8 - 1.0).abs() < 1e-3, "{e:e}");
    }

    #[test]
    fn sideband_resonances_map_to_zero() {
        let wm = SystemParams::reference().omega_m;
        assert_eq!(probe_axis_map(wm, wm), 0.0);
        assert_eq!(probe_axis_map(-wm, -wm), 0.0);
        assert_eq!(probe_axis_map(0.0, wm), -wm);
    }

    #[test]
    fn convention_round_trips_through_str() {
        for c in [Convention::Standard, Convention::PaperLiteral] {
            assert_eq!(c.as_str().parse::<Convention>().unwrap(), c);
        }
        assert!("other".parse::<Convention>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quadrupled_power_doubles_amplitude(
                power in 1e-12f64..1.0,
                kappa in 1.0f64..1e9,
                omega in 1e6f64..1e16,
            ) {
                for c in [Convention::Standard, Convention::PaperLiteral] {
                    let a = pump_amplitude(power, kappa, omega, c).unwrap();
                    let b = pump_amplitude(4.0 * power, kappa, omega, c).unwrap();
                    let c2 = pump_amplitude(1.5 * power, kappa, omega, c).unwrap();
                    prop_assert!((b - 2.0 * a).abs() <= 4.0 * f64::EPSILON * b);
                    prop_assert!(c2 > a);
                }
            }

            #[test]
            fn conventions_differ_by_sqrt_two_kappa(
                power in 1e-12f64..1.0,
                kappa in 1.0f64..1e9,
                omega in 1e6f64..1e16,
            ) {
                let s = pump_amplitude(power, kappa, omega, Convention::Standard).unwrap();
                let l = pump_amplitude(power, kappa, omega, Convention::PaperLiteral).unwrap();
                let ratio = l / s / (2.0 * kappa).sqrt();
                prop_assert!((ratio - 1.0).abs() < 1e-14);
            }

            #[test]
            fn axis_map_inverts(delta in -1e9f64..1e9, delta_o in -1e9f64..1e9) {
                let back = probe_axis_unmap(probe_axis_map(delta, delta_o), delta_o);
                prop_assert!((back - delta).abs() <= 2.0 * f64::EPSILON * delta.abs().max(delta_o.abs()));
            }
        }
    }
}
