//! Classical steady state of the pumped system.
//!
//! The intracavity photon numbers solve the coupled fixed-point problem
//!
//! ```text
//! n_o = κ_o,ext E_o² / (κ_o² + (Δ_o − g_o Q_s)²)
//! n_e = κ_e,ext E_e² / (κ_e² + (Δ_e − g_e Q_s)²)
//! Q_s = (2/ω_m)(g_o n_o + g_e n_e)
//! ```
//!
//! which is solved by damped fixed-point iteration with a Newton fallback.
//! Several seeds are tried so that bistable operating points are flagged
//! instead of silently collapsed onto one branch.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveAmplitudes, DriveConfig, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Relaxation factor in (0, 1].
    pub damping: f64,
    /// Relative residual at which the iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of seeds tried (1 to 3): primary, zero, undetuned estimate.
    pub multistart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-12,
            max_iterations: 100_000,
            multistart: 3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            errs.push(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            errs.push(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            ));
        }
        if self.max_iterations < 1 {
            errs.push("max_iterations must be at least 1".to_string());
        }
        if !(1..=3).contains(&self.multistart) {
            errs.push(format!(
                "multistart must be 1, 2 or 3, got {}",
                self.multistart
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumbers {
    pub n_o: f64,
    pub n_e: f64,
    pub residual: f64,
    pub iterations: usize,
    pub multistable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub n_o: f64,
    pub n_e: f64,
    pub q_s: f64,
    pub a_s: Complex64,
    pub b_s: Complex64,
    pub delta_o_eff: f64,
    pub delta_e_eff: f64,
    /// Largest relative residual of the two photon-number equations.
    pub residual: f64,
    pub multistable: bool,
}

/// Right-hand side of the photon-number equations.
struct PhotonMap {
    drive_o: f64,
    drive_e: f64,
    kappa_o: f64,
    kappa_e: f64,
    delta_o: f64,
    delta_e: f64,
    g_o: f64,
    g_e: f64,
    omega_m: f64,
}

impl PhotonMap {
    fn new(p: &SystemParams, d: &DriveConfig, amps: &DriveAmplitudes) -> Self {
        Self {
            drive_o: p.kappa_o_ext * amps.e_o * amps.e_o,
            drive_e: p.kappa_e_ext * amps.e_e * amps.e_e,
            kappa_o: p.kappa_o,
            kappa_e: p.kappa_e,
            delta_o: d.delta_o,
            delta_e: d.delta_e,
            g_o: p.g_o,
            g_e: p.g_e,
            omega_m: p.omega_m,
        }
    }

    fn displacement(&self, n: [f64; 2]) -> f64 {
        2.0 / self.omega_m * (self.g_o * n[0] + self.g_e * n[1])
    }

    fn eval(&self, n: [f64; 2]) -> [f64; 2] {
        let q = self.displacement(n);
        let xo = self.delta_o - self.g_o * q;
        let xe = self.delta_e - self.g_e * q;
        [
            self.drive_o / (self.kappa_o * self.kappa_o + xo * xo),
            self.drive_e / (self.kappa_e * self.kappa_e + xe * xe),
        ]
    }

    fn jacobian(&self, n: [f64; 2]) -> [[f64; 2]; 2] {
        let q = self.displacement(n);
        let dq = [2.0 * self.g_o / self.omega_m, 2.0 * self.g_e / self.omega_m];
        let xo = self.delta_o - self.g_o * q;
        let xe = self.delta_e - self.g_e * q;
        let den_o = self.kappa_o * self.kappa_o + xo * xo;
        let den_e = self.kappa_e * self.kappa_e + xe * xe;
        let fo = self.drive_o / den_o;
        let fe = self.drive_e / den_e;
        // dF/dn_j = F * 2 x g dQ/dn_j / den
        let so = 2.0 * fo * xo * self.g_o / den_o;
        let se = 2.0 * fe * xe * self.g_e / den_e;
        [[so * dq[0], so * dq[1]], [se * dq[0], se * dq[1]]]
    }

    fn residual(&self, n: [f64; 2]) -> f64 {
        let f = self.eval(n);
        relative_gap(n[0], f[0]).max(relative_gap(n[1], f[1]))
    }

    /// Photon numbers at zero radiation-pressure shift and zero detuning,
    /// an upper bound on either photon number.
    fn undetuned_estimate(&self) -> [f64; 2] {
        [
            self.drive_o / (self.kappa_o * self.kappa_o),
            self.drive_e / (self.kappa_e * self.kappa_e),
        ]
    }
}

fn relative_gap(n: f64, f: f64) -> f64 {
    (n - f).abs() / n.abs().max(1.0)
}

struct Converged {
    n: [f64; 2],
    residual: f64,
    iterations: usize,
}

fn iterate(map: &PhotonMap, seed: [f64; 2], opts: &SolverOptions) -> Result<Converged> {
    const NEWTON_AFTER: usize = 200;
    let alpha = opts.damping;
    let mut n = seed;
    let mut residual = map.residual(n);
    let mut newton_tried = false;

    for k in 0..opts.max_iterations {
        if residual <= opts.tolerance {
            return Ok(Converged {
                n,
                residual,
                iterations: k,
            });
        }
        if k >= NEWTON_AFTER && !newton_tried {
            newton_tried = true;
            if let Some((root, res, used)) = newton(map, n, opts.tolerance) {
                return Ok(Converged {
                    n: root,
                    residual: res,
                    iterations: k + used,
                });
            }
        }
        let f = map.eval(n);
        n = [
            (1.0 - alpha) * n[0] + alpha * f[0],
            (1.0 - alpha) * n[1] + alpha * f[1],
        ];
        residual = map.residual(n);
        if !residual.is_finite() {
            break;
        }
    }
    if residual <= opts.tolerance {
        return Ok(Converged {
            n,
            residual,
            iterations: opts.max_iterations,
        });
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        n_o: n[0],
        n_e: n[1],
        residual,
    })
}

/// Newton iteration on `n - F(n) = 0`. Returns `None` when it fails to
/// reach the tolerance or leaves the physical (nonnegative) region.
fn newton(map: &PhotonMap, start: [f64; 2], tol: f64) -> Option<([f64; 2], f64, usize)> {
    let mut n = start;
    for k in 0..100 {
        let f = map.eval(n);
        let j = map.jacobian(n);
        let r = [n[0] - f[0], n[1] - f[1]];
        let a = [[1.0 - j[0][0], -j[0][1]], [-j[1][0], 1.0 - j[1][1]]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step = [
            (a[1][1] * r[0] - a[0][1] * r[1]) / det,
            (a[0][0] * r[1] - a[1][0] * r[0]) / det,
        ];
        n = [n[0] - step[0], n[1] - step[1]];
        if n[0] < 0.0 || n[1] < 0.0 || !n[0].is_finite() || !n[1].is_finite() {
            return None;
        }
        let res = map.residual(n);
        if res <= tol {
            return Some((n, res, k + 1));
        }
    }
    None
}

/// Solves the coupled photon-number equations.
///
/// `continuation` is the root of a neighbouring operating point. When given
/// it seeds the primary branch; otherwise the zero seed does.
pub fn photon_number_fixed_point(
    p: &SystemParams,
    d: &DriveConfig,
    opts: &SolverOptions,
    continuation: Option<(f64, f64)>,
) -> Result<PhotonNumbers> {
    opts.validate()?;
    let amps = DriveAmplitudes::new(p, d)?;
    let map = PhotonMap::new(p, d, &amps);

    let mut seeds: Vec<[f64; 2]> = Vec::with_capacity(3);
    if let Some((a, b)) = continuation {
        seeds.push([a, b]);
    }
    seeds.push([0.0, 0.0]);
    seeds.push(map.undetuned_estimate());
    seeds.truncate(opts.multistart);

    let primary = iterate(&map, seeds[0], opts)?;
    let mut multistable = false;
    for seed in &seeds[1..] {
        // Secondary seeds only probe for other branches.
        if let Ok(other) = iterate(&map, *seed, opts) {
            let gap =
                relative_gap(primary.n[0], other.n[0]).max(relative_gap(primary.n[1], other.n[1]));
            if gap > 1e3 * opts.tolerance {
                multistable = true;
            }
        }
    }

    Ok(PhotonNumbers {
        n_o: primary.n[0],
        n_e: primary.n[1],
        residual: primary.residual,
        iterations: primary.iterations,
        multistable,
    })
}

/// Builds the steady field amplitudes from converged photon numbers.
pub fn steady_state_fields(
    p: &SystemParams,
    d: &DriveConfig,
    n_o: f64,
    n_e: f64,
) -> Result<SteadyState> {
    let amps = DriveAmplitudes::new(p, d)?;
    let q_s = 2.0 / p.omega_m * (p.g_o * n_o + p.g_e * n_e);
    let delta_o_eff = d.delta_o - p.g_o * q_s;
    let delta_e_eff = d.delta_e - p.g_e * q_s;
    let a_s = p.kappa_o_ext.sqrt() * amps.e_o / Complex64::new(p.kappa_o, delta_o_eff);
    let b_s = p.kappa_e_ext.sqrt() * amps.e_e / Complex64::new(p.kappa_e, delta_e_eff);

    for (name, n, field) in [("n_o", n_o, a_s), ("n_e", n_e, b_s)] {
        if relative_gap(n, field.norm_sqr()) > 1e-6 {
            return Err(Error::Inconsistent(format!(
                "{name} = {n:e} but |field|^2 = {:e}",
                field.norm_sqr()
            )));
        }
    }

    let map = PhotonMap::new(p, d, &amps);
    Ok(SteadyState {
        n_o,
        n_e,
        q_s,
        a_s,
        b_s,
        delta_o_eff,
        delta_e_eff,
        residual: map.residual([n_o, n_e]),
        multistable: false,
    })
}

/// Fixed point followed by field reconstruction.
pub fn solve_steady_state(
    p: &SystemParams,
    d: &DriveConfig,
    opts: &SolverOptions,
    continuation: Option<(f64, f64)>,
) -> Result<SteadyState> {
    let n = photon_number_fixed_point(p, d, opts, continuation)?;
    let mut ss = steady_state_fields(p, d, n.n_o, n.n_e)?;
    ss.multistable = n.multistable;
    Ok(ss)
}
