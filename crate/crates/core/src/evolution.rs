//! Time-domain integration of the noiseless mean-field equations
//!
//! ```text
//! ȧ = −i(Δ_o − g_o Q) a − κ_o a + √κ_o,ext E_o
//! ḃ = −i(Δ_e − g_e Q) b − κ_e b + √κ_e,ext E_e
//! Q̈ + γ_m Q̇ + ω_m² Q = 2 g_o ω_m |a|² + 2 g_e ω_m |b|²
//! ```
//!
//! started from the empty cavities and the mechanics at rest. Used as an
//! independent check of the fixed-point steady state and of the stability
//! verdict, so it deliberately shares no code with either.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::model::{DriveAmplitudes, DriveConfig, SystemParams};
use crate::steady::SteadyState;

/// State layout: `[Re a, Im a, Re b, Im b, Q, Q̇]`.
type State = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionOptions {
    /// Change over one mechanical period, relative to the drive scales,
    /// below which the state counts as settled.
    pub settle_tolerance: f64,
    /// Local error tolerance of the integrator.
    pub rtol: f64,
    /// Growth of the per-period change, relative to its running minimum,
    /// that is taken as divergence.
    pub growth_factor: f64,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            settle_tolerance: 1e-12,
            rtol: 1e-9,
            growth_factor: 10.0,
        }
    }
}

struct MeanField {
    kappa_o: f64,
    kappa_e: f64,
    delta_o: f64,
    delta_e: f64,
    g_o: f64,
    g_e: f64,
    omega_m: f64,
    gamma_m: f64,
    drive_o: f64,
    drive_e: f64,
}

impl MeanField {
    fn rhs(&self, y: &State) -> State {
        let q = y[4];
        let a = Complex64::new(y[0], y[1]);
        let b = Complex64::new(y[2], y[3]);
        let da = -Complex64::new(self.kappa_o, self.delta_o - self.g_o * q) * a + self.drive_o;
        let db = -Complex64::new(self.kappa_e, self.delta_e - self.g_e * q) * b + self.drive_e;
        let force = 2.0 * self.omega_m * (self.g_o * a.norm_sqr() + self.g_e * b.norm_sqr());
        let acc = -self.gamma_m * y[5] - self.omega_m * self.omega_m * q + force;
        [da.re, da.im, db.re, db.im, y[5], acc]
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..6 {
            out[i] += h * c * k[i];
        }
    }
    out
}

struct Stepper<'a> {
    sys: &'a MeanField,
    scale: State,
    rtol: f64,
    /// FSAL derivative at the current state.
    k1: State,
    h: f64,
    /// Largest step; keeps the mechanical oscillation resolved so the
    /// scheme's own amplification cannot mask the physical damping.
    h_cap: f64,
}

impl Stepper<'_> {
    /// Advances `y` by at most `h_max`, retrying with smaller steps until the
    /// local error estimate is accepted. Returns the step taken.
    fn step(&mut self, y: &mut State, h_max: f64) -> f64 {
        loop {
            let h = self.h.min(self.h_cap).min(h_max);
            let k1 = self.k1;
            let k2 = self.sys.rhs(&axpy(y, h, &[(A21, &k1)]));
            let k3 = self.sys.rhs(&axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = self
                .sys
                .rhs(&axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = self.sys.rhs(&axpy(
                y,
                h,
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            ));
            let k6 = self.sys.rhs(&axpy(
                y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ));
            let next = axpy(
                y,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = self.sys.rhs(&next);

            let mut err = 0.0f64;
            for i in 0..6 {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.rtol * (self.scale[i] + y[i].abs().max(next[i].abs()));
                err = err.max((e / sc).abs());
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 && next.iter().all(|v| v.is_finite()) {
                *y = next;
                self.k1 = k7;
                if h == self.h || factor < 1.0 {
                    self.h = h * factor;
                }
                return h;
            }
            self.h = h * factor.min(0.5);
            if !(self.h > 0.0) || !self.h.is_finite() {
                // Step size collapsed; report the last state as-is.
                return 0.0;
            }
        }
    }
}

/// Integrates from the vacuum until the state stops changing over a
/// mechanical period. `duration` bounds the simulated time in seconds and
/// `dt` is the initial step.
pub fn mean_field_evolution_oracle(
    p: &SystemParams,
    d: &DriveConfig,
    duration: f64,
    dt: f64,
) -> Result<SteadyState> {
    mean_field_evolution_with(p, d, duration, dt, &EvolutionOptions::default())
}

pub fn mean_field_evolution_with(
    p: &SystemParams,
    d: &DriveConfig,
    duration: f64,
    dt: f64,
    opts: &EvolutionOptions,
) -> Result<SteadyState> {
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "duration and step must be positive, got {duration} and {dt}"
        )));
    }
    let amps = DriveAmplitudes::new(p, d)?;
    let sys = MeanField {
        kappa_o: p.kappa_o,
        kappa_e: p.kappa_e,
        delta_o: d.delta_o,
        delta_e: d.delta_e,
        g_o: p.g_o,
        g_e: p.g_e,
        omega_m: p.omega_m,
        gamma_m: p.gamma_m,
        drive_o: p.kappa_o_ext.sqrt() * amps.e_o,
        drive_e: p.kappa_e_ext.sqrt() * amps.e_e,
    };

    // Natural magnitudes from the undetuned drive, used as absolute error
    // floors and to normalise the per-period change.
    let a_scale = (sys.drive_o / p.kappa_o).max(1.0);
    let b_scale = (sys.drive_e / p.kappa_e).max(1.0);
    let q_scale =
        (2.0 * (p.g_o * a_scale * a_scale + p.g_e * b_scale * b_scale) / p.omega_m).max(1e-6);
    let scale = [
        a_scale,
        a_scale,
        b_scale,
        b_scale,
        q_scale,
        p.omega_m * q_scale,
    ];

    let mut y: State = [0.0; 6];
    let period = TAU / p.omega_m;
    let mut stepper = Stepper {
        sys: &sys,
        scale,
        rtol: opts.rtol,
        k1: sys.rhs(&y),
        h: dt,
        h_cap: period / 25.0,
    };
    let mut t = 0.0;
    let mut last = y;
    let mut min_change = f64::INFINITY;
    let mut change = f64::INFINITY;
    // The first periods carry the cavity ring-up; growth is judged after it.
    let warmup = 3.0 / p.kappa_o.min(p.kappa_e).min(p.omega_m) + 2.0 * period;

    while t < duration {
        let full_period = t + period <= duration;
        let target = (t + period).min(duration);
        while t < target {
            let h = stepper.step(&mut y, target - t);
            if h == 0.0 {
                return Err(Error::Diverged { time: t });
            }
            t = if target - t - h <= 1e-12 * period {
                target
            } else {
                t + h
            };
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { time: t });
        }
        if !full_period {
            break;
        }

        change = relative_change(&y, &last, &scale);
        last = y;
        if change <= opts.settle_tolerance {
            return Ok(to_steady_state(p, d, &y, change));
        }
        if t > warmup {
            if change > opts.growth_factor * min_change {
                return Err(Error::Diverged { time: t });
            }
            min_change = min_change.min(change);
        }
    }
    Err(Error::NotSettled {
        duration,
        last_change: change,
    })
}

/// Change over one period, measured against the fixed drive scales. The
/// mechanical part is the phase-plane distance in `(Q, Q̇/ω_m)`, which
/// follows the envelope of a ringing mode without dropping to zero at its
/// turning points.
fn relative_change(y: &State, prev: &State, scale: &State) -> f64 {
    let d = |i: usize| y[i] - prev[i];
    let da = d(0).hypot(d(1)) / scale[0];
    let db = d(2).hypot(d(3)) / scale[2];
    let dm = (d(4) / scale[4]).hypot(d(5) / scale[5]);
    da.max(db).max(dm)
}

fn to_steady_state(p: &SystemParams, d: &DriveConfig, y: &State, change: f64) -> SteadyState {
    let a_s = Complex64::new(y[0], y[1]);
    let b_s = Complex64::new(y[2], y[3]);
    SteadyState {
        n_o: a_s.norm_sqr(),
        n_e: b_s.norm_sqr(),
        q_s: y[4],
        a_s,
        b_s,
        delta_o_eff: d.delta_o - p.g_o * y[4],
        delta_e_eff: d.delta_e - p.g_e * y[4],
        residual: change,
        multistable: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Convention;
    use crate::steady::{solve_steady_state, SolverOptions};

    fn drive(p: &SystemParams, p_o: f64, p_e: f64, blue: bool) -> DriveConfig {
        DriveConfig {
            p_o,
            p_e,
            p_p: 0.0,
            delta_o: if blue { -p.omega_m } else { p.omega_m },
            delta_e: p.omega_m,
            convention: Convention::Standard,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    #[test]
    fn zero_drive_settles_to_zero() {
        let p = SystemParams::reference();
        let ss = mean_field_evolution_oracle(&p, &drive(&p, 0.0, 0.0, false), 1e-3, 1e-10).unwrap();
        assert_eq!(ss.n_o, 0.0);
        assert_eq!(ss.n_e, 0.0);
        assert_eq!(ss.q_s, 0.0);
    }

    #[test]
    fn matches_fixed_point_red_red() {
        let p = SystemParams::reference();
        let d = drive(&p, 2e-3, 1e-6, false);
        let ode = mean_field_evolution_oracle(&p, &d, 0.05, 1e-10).unwrap();
        let fp = solve_steady_state(&p, &d, &SolverOptions::default(), None).unwrap();
        assert!(rel(ode.n_o, fp.n_o) < 1e-6, "{} vs {}", ode.n_o, fp.n_o);
        assert!(rel(ode.n_e, fp.n_e) < 1e-6);
        assert!(rel(ode.q_s, fp.q_s) < 1e-6);
    }

    #[test]
    fn blue_pump_alone_diverges() {
        let p = SystemParams::reference();
        let d = drive(&p, 40e-6, 0.0, true);
        match mean_field_evolution_oracle(&p, &d, 0.5, 1e-10) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn short_horizon_times_out() {
        let p = SystemParams::reference();
        let d = drive(&p, 2e-3, 1e-6, false);
        assert!(matches!(
            mean_field_evolution_oracle(&p, &d, 1e-6, 1e-10),
            Err(Error::NotSettled { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        let p = SystemParams::reference();
        let d = drive(&p, 2e-3, 1e-6, false);
        assert!(mean_field_evolution_oracle(&p, &d, 0.0, 1e-10).is_err());
    }
}
