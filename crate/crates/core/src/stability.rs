//! Linear stability of the steady state.

use nalgebra::{Matrix6, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveConfig, SystemParams};
use crate::steady::{solve_steady_state, SolverOptions, SteadyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Largest real part of the drift-matrix spectrum, rad/s.
    pub margin: f64,
    pub stable: bool,
    pub eigenvalues: Vec<Complex64>,
}

/// Drift matrix of the linearised dynamics over
/// `(δa, δa*, δb, δb*, δQ, δQ̇)`.
pub fn linear_dynamics_matrix(p: &SystemParams, ss: &SteadyState) -> Matrix6<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let c = |x: f64| Complex64::new(x, 0.0);
    let (a, b) = (ss.a_s, ss.b_s);
    let wm = p.omega_m;
    #[rustfmt::skip]
    let m = Matrix6::new(
        -Complex64::new(p.kappa_o, ss.delta_o_eff), z, z, z, i * p.g_o * a, z,
        z, -Complex64::new(p.kappa_o, -ss.delta_o_eff), z, z, -i * p.g_o * a.conj(), z,
        z, z, -Complex64::new(p.kappa_e, ss.delta_e_eff), z, i * p.g_e * b, z,
        z, z, z, -Complex64::new(p.kappa_e, -ss.delta_e_eff), -i * p.g_e * b.conj(), z,
        z, z, z, z, z, one,
        2.0 * wm * p.g_o * a.conj(), 2.0 * wm * p.g_o * a,
        2.0 * wm * p.g_e * b.conj(), 2.0 * wm * p.g_e * b,
        c(-wm * wm), c(-p.gamma_m),
    );
    m
}

/// Eigenvalues of the drift matrix and the resulting stability verdict.
pub fn assess_stability(p: &SystemParams, ss: &SteadyState) -> Result<StabilityReport> {
    let m = linear_dynamics_matrix(p, ss);
    // Similarity transform with diag(1, 1, 1, 1, 1, ω_m) so the mechanical
    // block has entries of order ω_m instead of ω_m² and 1.
    let mut scaled = m;
    let wm = p.omega_m;
    for r in 0..6 {
        scaled[(r, 5)] *= wm;
        scaled[(5, r)] /= wm;
    }
    let schur = Schur::try_new(scaled, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen(format!("{m:e}")))?;
    let (_, t) = schur.unpack();
    let mut eigenvalues: Vec<Complex64> = (0..6).map(|k| t[(k, k)]).collect();
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigen(format!("{m:e}")));
    }
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let margin = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        margin,
        stable: margin < 0.0,
        eigenvalues,
    })
}

/// Bisects the optical pump power between `lo` and `hi` for the sign
/// change of the stability margin, to relative width `rel_width`.
///
/// Returns `None` when both ends have the same verdict.
pub fn instability_threshold(
    p: &SystemParams,
    d: &DriveConfig,
    opts: &SolverOptions,
    lo: f64,
    hi: f64,
    rel_width: f64,
) -> Result<Option<f64>> {
    let margin = |p_o: f64| -> Result<f64> {
        let dd = d.with_optical_power(p_o);
        let ss = solve_steady_state(p, &dd, opts, None)?;
        Ok(assess_stability(p, &ss)?.margin)
    };
    let (mut lo, mut hi) = (lo, hi);
    let lo_stable = margin(lo)? < 0.0;
    if lo_stable == (margin(hi)? < 0.0) {
        return Ok(None);
    }
    while hi - lo > rel_width * hi {
        let mid = 0.5 * (lo + hi);
        if (margin(mid)? < 0.0) == lo_stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
