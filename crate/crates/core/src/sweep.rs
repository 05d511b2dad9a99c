//! Probe spectra, pump-power scans and regime classification.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{probe_axis_unmap, DriveConfig, SystemParams};
use crate::response::{probe_transmission, response_point, wrap_phase, ResponsePoint};
use crate::stability::{assess_stability, StabilityReport};
use crate::steady::{solve_steady_state, SolverOptions, SteadyState};

/// Uniform grid of probe-cavity detunings `Δ_p`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    /// 2001 points over `[−3κ_o, 3κ_o]`.
    pub fn default_for(p: &SystemParams) -> Self {
        Self {
            min: -3.0 * p.kappa_o,
            max: 3.0 * p.kappa_o,
            count: 2001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::Domain(format!(
                "axis needs at least 2 points, got {}",
                self.count
            )));
        }
        if !self.min.is_finite() || !self.max.is_finite() || !(self.max > self.min) {
            return Err(Error::Domain(format!(
                "axis bounds must be finite with min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Grid values. The endpoints are exact, and so is `0` whenever the grid
    /// is symmetric with an odd count.
    pub fn values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = (self.count - 1) as f64;
        let v: Vec<f64> = (0..self.count)
            .map(|i| {
                let i = i as f64;
                (self.min * (n - i) + self.max * i) / n
            })
            .collect();
        if v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "axis is too fine to be strictly increasing".into(),
            ));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    /// Worker threads for point evaluation; 0 picks the machine default.
    pub threads: usize,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub params: SystemParams,
    pub drive: DriveConfig,
    /// Probe-cavity detunings `Δ_p`, strictly increasing.
    pub axis: Vec<f64>,
    /// One point per axis value; `phase` is unwrapped along the axis.
    pub points: Vec<ResponsePoint>,
    /// Response exactly at `Δ_p = 0`, phase wrapped.
    pub center: ResponsePoint,
    pub steady: SteadyState,
    pub stability: StabilityReport,
    /// Indices `i` where the wrapped phase step from `i − 1` exceeds π/2, so
    /// the unwrapping there is ambiguous at this resolution.
    pub phase_jumps: Vec<usize>,
}

/// Steady state, stability and response over an axis of `Δ_p` values.
pub fn spectrum_sweep(
    p: &SystemParams,
    d: &DriveConfig,
    axis: &AxisSpec,
    opts: &SweepOptions,
) -> Result<Spectrum> {
    let values = axis.values()?;
    let steady = solve_steady_state(p, d, &opts.solver, None)?;
    let stability = assess_stability(p, &steady)?;
    let stable = stability.stable;

    let eval = |dp: f64| response_point(probe_axis_unmap(dp, d.delta_o), p, d, &steady, stable);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let mut points = pool.install(|| {
        values
            .par_iter()
            .map(|&dp| eval(dp))
            .collect::<Result<Vec<_>>>()
    })?;
    let center = eval(0.0)?;

    let mut phase_jumps = Vec::new();
    for i in 1..points.len() {
        let step = wrap_phase(points[i].phase - points[i - 1].phase);
        if step.abs() > PI / 2.0 {
            phase_jumps.push(i);
        }
        points[i].phase = points[i - 1].phase + step;
    }

    Ok(Spectrum {
        params: *p,
        drive: *d,
        axis: values,
        points,
        center,
        steady,
        stability,
        phase_jumps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerScanPoint {
    pub p_o: f64,
    /// `|t|²` at `Δ_p = 0`.
    pub t_sq_peak: f64,
    pub margin: f64,
    pub stable: bool,
    pub multistable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub p_o: f64,
    pub message: String,
    /// Fixed-point residual when the failure is a non-converged solve.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerScan {
    pub points: Vec<PowerScanPoint>,
    pub failures: Vec<PointFailure>,
    /// First upward crossing of `|t(0)|² = 1`, linear interpolation between
    /// the bracketing scan points.
    pub threshold_interpolated: Option<f64>,
    /// Same crossing refined by bisection.
    pub threshold_bisected: Option<f64>,
}

/// Relative bracket width at which threshold bisection stops.
pub const THRESHOLD_REL_WIDTH: f64 = 1e-4;

fn center_t_sq(p: &SystemParams, d: &DriveConfig, ss: &SteadyState) -> Result<f64> {
    Ok(probe_transmission(d.delta_o, p, ss)?.norm_sqr())
}

/// Scans the optical pump power in ascending order, seeding each solve with
/// the previous root. Failed points are recorded and skipped.
pub fn power_sweep(
    p: &SystemParams,
    template: &DriveConfig,
    powers: &[f64],
    solver: &SolverOptions,
) -> Result<PowerScan> {
    if powers.is_empty() {
        return Err(Error::Domain("power list is empty".into()));
    }
    if powers.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(
            "powers must be finite and nonnegative".into(),
        ));
    }
    if powers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("powers must be strictly increasing".into()));
    }
    solver.validate()?;

    let mut points = Vec::with_capacity(powers.len());
    let mut roots = Vec::with_capacity(powers.len());
    let mut failures = Vec::new();
    let mut seed = None;
    for &p_o in powers {
        let d = template.with_optical_power(p_o);
        let attempt = solve_steady_state(p, &d, solver, seed).and_then(|ss| {
            let rep = assess_stability(p, &ss)?;
            Ok((ss, center_t_sq(p, &d, &ss)?, rep))
        });
        match attempt {
            Ok((ss, t_sq, rep)) => {
                seed = Some((ss.n_o, ss.n_e));
                roots.push((ss.n_o, ss.n_e));
                points.push(PowerScanPoint {
                    p_o,
                    t_sq_peak: t_sq,
                    margin: rep.margin,
                    stable: rep.stable,
                    multistable: ss.multistable,
                });
            }
            Err(e) => failures.push(PointFailure {
                p_o,
                residual: match &e {
                    Error::NoConvergence { residual, .. } => Some(*residual),
                    _ => None,
                },
                message: e.to_string(),
            }),
        }
    }

    let crossing = points
        .windows(2)
        .position(|w| w[0].t_sq_peak < 1.0 && w[1].t_sq_peak >= 1.0);
    let (mut interp, mut bisected) = (None, None);
    if let Some(k) = crossing {
        let (a, b) = (points[k], points[k + 1]);
        interp = Some(a.p_o + (1.0 - a.t_sq_peak) * (b.p_o - a.p_o) / (b.t_sq_peak - a.t_sq_peak));
        bisected = Some(bisect_unit_crossing(
            p, template, solver, a.p_o, b.p_o, roots[k],
        )?);
    }

    Ok(PowerScan {
        points,
        failures,
        threshold_interpolated: interp,
        threshold_bisected: bisected,
    })
}

fn bisect_unit_crossing(
    p: &SystemParams,
    template: &DriveConfig,
    solver: &SolverOptions,
    mut lo: f64,
    mut hi: f64,
    mut seed: (f64, f64),
) -> Result<f64> {
    while hi - lo > THRESHOLD_REL_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        let d = template.with_optical_power(mid);
        let ss = solve_steady_state(p, &d, solver, Some(seed))?;
        if center_t_sq(p, &d, &ss)? < 1.0 {
            lo = mid;
            seed = (ss.n_o, ss.n_e);
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Bare,
    Eit,
    Eia,
    Amplification,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Bare => "BARE",
            Regime::Eit => "EIT",
            Regime::Eia => "EIA",
            Regime::Amplification => "AMPLIFICATION",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub label: Regime,
    pub center_t_sq: f64,
    pub bare_reference: f64,
    pub max_t_sq: f64,
    /// Full width at half maximum of the peak around `Δ_p = 0`, rad/s.
    pub window_width: Option<f64>,
    /// Distance between the minima flanking that peak, rad/s.
    pub dip_separation: Option<f64>,
}

/// Relative band around the bare reference used by the classifier.
pub const REGIME_MARGIN: f64 = 0.05;

/// Peak nearest `Δ_p = 0`, its flanking minima and half-maximum interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CenterFeature {
    peak: usize,
    left_min: usize,
    right_min: usize,
    half_lo: f64,
    half_hi: f64,
}

fn center_feature(axis: &[f64], y: &[f64]) -> Option<CenterFeature> {
    let n = y.len();
    let start = axis
        .iter()
        .map(|x| x.abs())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?
        .0;
    // Climb from the grid point nearest zero to the adjacent local maximum.
    let mut peak = start;
    loop {
        let l = (peak > 0 && y[peak - 1] > y[peak]).then(|| peak - 1);
        let r = (peak + 1 < n && y[peak + 1] > y[peak]).then(|| peak + 1);
        peak = match (l, r) {
            (Some(a), Some(b)) => {
                if y[a] >= y[b] {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => break,
        };
    }
    if peak == 0 || peak == n - 1 {
        return None;
    }
    let mut left_min = peak;
    while left_min > 0 && y[left_min - 1] <= y[left_min] {
        left_min -= 1;
    }
    let mut right_min = peak;
    while right_min + 1 < n && y[right_min + 1] <= y[right_min] {
        right_min += 1;
    }
    if left_min == 0 || right_min == n - 1 {
        return None;
    }
    let half = 0.5 * (y[peak] + 0.5 * (y[left_min] + y[right_min]));
    let crossing =
        |i: usize, j: usize| axis[i] + (half - y[i]) * (axis[j] - axis[i]) / (y[j] - y[i]);
    let mut i = peak;
    while y[i - 1] >= half {
        i -= 1;
    }
    let half_lo = crossing(i - 1, i);
    let mut j = peak;
    while y[j + 1] >= half {
        j += 1;
    }
    let half_hi = crossing(j, j + 1);
    Some(CenterFeature {
        peak,
        left_min,
        right_min,
        half_lo,
        half_hi,
    })
}

/// Labels a spectrum as BARE, EIT, EIA or AMPLIFICATION, in that order of
/// increasing precedence.
pub fn classify_regime(s: &Spectrum) -> Result<RegimeLabel> {
    let k = s.params.kappa_o;
    let (first, last) = match (s.axis.first(), s.axis.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::Coverage("empty spectrum".into())),
    };
    let need = 3.0 * k * (1.0 - 1e-12);
    if first > -need || last < need {
        return Err(Error::Coverage(format!(
            "axis [{first:e}, {last:e}] rad/s does not span ±3κ_o = ±{:e} rad/s",
            3.0 * k
        )));
    }

    let bare = s.params.bare_resonance_transmission();
    let center = s.center.t_sq;
    let y: Vec<f64> = s.points.iter().map(|pt| pt.t_sq).collect();
    let max_t_sq = y.iter().copied().fold(center, f64::max);

    let feature = center_feature(&s.axis, &y).filter(|f| f.half_lo <= 0.0 && 0.0 <= f.half_hi);
    let window_width = feature.map(|f| f.half_hi - f.half_lo);
    let dip_separation = feature.map(|f| s.axis[f.right_min] - s.axis[f.left_min]);

    let eit = center >= (1.0 + REGIME_MARGIN) * bare
        && feature.is_some_and(|f| {
            let ceiling = (1.0 + REGIME_MARGIN) * bare;
            y[f.left_min] <= ceiling && y[f.right_min] <= ceiling && y[f.peak] >= center
        });

    let label = if max_t_sq > 1.0 {
        Regime::Amplification
    } else if center < (1.0 - REGIME_MARGIN) * bare {
        Regime::Eia
    } else if eit {
        Regime::Eit
    } else {
        Regime::Bare
    };

    Ok(RegimeLabel {
        label,
        center_t_sq: center,
        bare_reference: bare,
        max_t_sq,
        window_width,
        dip_separation,
    })
}

/// Location and value of the largest sample, refined by a parabola through
/// the maximum and its two neighbours when it is interior.
pub fn find_peak(axis: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    if axis.is_empty() || axis.len() != values.len() {
        return None;
    }
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[k] {
            k = i;
        }
    }
    if k == 0 || k == values.len() - 1 {
        return Some((axis[k], values[k]));
    }
    let (x0, x1, x2) = (axis[k - 1], axis[k], axis[k + 1]);
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    // Newton divided differences of the interpolating parabola.
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let c = (d12 - d01) / (x2 - x0);
    if !(c < 0.0) {
        return Some((x1, y1));
    }
    let b = d01 - c * (x0 + x1);
    let xv = (-b / (2.0 * c)).clamp(x0, x2);
    let yv = y0 + d01 * (xv - x0) + c * (xv - x0) * (xv - x1);
    Some((xv, yv))
}

/// `(Δ_p, |t|²)` at the transmission maximum of a spectrum.
pub fn find_peak_transmission(s: &Spectrum) -> Result<(f64, f64)> {
    let y: Vec<f64> = s.points.iter().map(|pt| pt.t_sq).collect();
    find_peak(&s.axis, &y).ok_or_else(|| Error::Domain("empty spectrum".into()))
}
