//! Result envelopes and their CSV / JSON encodings.
//!
//! CSV files start with `#` comment lines carrying the version, convention,
//! warnings and the canonical config echo, followed by a mandatory header row
//! and the data rows. Floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::error::{Error, Result};
use crate::model::Convention;
use crate::response::DelayResult;
use crate::stability::StabilityReport;
use crate::steady::SteadyState;
use crate::sweep::{PointFailure, PowerScan, RegimeLabel, Spectrum};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub delta_p_rad_s: f64,
    pub delta_rad_s: f64,
    pub t_re: f64,
    pub t_im: f64,
    pub t_sq: f64,
    pub phase_rad: f64,
    pub stable: bool,
}

impl SpectrumRow {
    pub fn rows(s: &Spectrum) -> Vec<Self> {
        s.points
            .iter()
            .map(|pt| SpectrumRow {
                delta_p_rad_s: pt.delta_p,
                delta_rad_s: pt.delta,
                t_re: pt.t.re,
                t_im: pt.t.im,
                t_sq: pt.t_sq,
                phase_rad: pt.phase,
                stable: pt.stable,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PowerRow {
    pub P_o_W: f64,
    pub t_sq_peak: f64,
    pub margin_rad_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub method: String,
    pub tau_g_s: f64,
    pub step_rad_s: f64,
}

impl From<&DelayResult> for DelayRow {
    fn from(r: &DelayResult) -> Self {
        DelayRow {
            method: r.method.as_str().into(),
            tau_g_s: r.tau_g,
            step_rad_s: r.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum Payload {
    Steady {
        steady: SteadyState,
        stability: StabilityReport,
    },
    Spectrum {
        rows: Vec<SpectrumRow>,
        steady: SteadyState,
        stability: StabilityReport,
        phase_jumps: Vec<usize>,
    },
    PowerSweep {
        rows: Vec<PowerRow>,
        failures: Vec<PointFailure>,
        threshold_interpolated_w: Option<f64>,
        threshold_bisected_w: Option<f64>,
    },
    Delay {
        rows: Vec<DelayRow>,
    },
    Classify {
        classification: RegimeLabel,
        peak_delta_p_rad_s: f64,
        peak_t_sq: f64,
        stable: bool,
    },
}

impl Payload {
    pub fn spectrum(s: &Spectrum) -> Self {
        Payload::Spectrum {
            rows: SpectrumRow::rows(s),
            steady: s.steady,
            stability: s.stability.clone(),
            phase_jumps: s.phase_jumps.clone(),
        }
    }

    pub fn power_sweep(scan: &PowerScan) -> Self {
        Payload::PowerSweep {
            rows: scan
                .points
                .iter()
                .map(|pt| PowerRow {
                    P_o_W: pt.p_o,
                    t_sq_peak: pt.t_sq_peak,
                    margin_rad_s: pt.margin,
                })
                .collect(),
            failures: scan.failures.clone(),
            threshold_interpolated_w: scan.threshold_interpolated,
            threshold_bisected_w: scan.threshold_bisected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub version: String,
    pub convention: Convention,
    /// Canonical TOML of the run; parsing it reproduces the results.
    pub config: String,
    pub warnings: Vec<String>,
    pub results: Payload,
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn emit_csv(env: &ResultEnvelope) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# hybridoem {}", env.version);
    let _ = writeln!(out, "# convention: {}", env.convention.as_str());
    for w in &env.warnings {
        let _ = writeln!(out, "# warning: {}", w.replace('\n', " "));
    }
    match &env.results {
        Payload::PowerSweep {
            failures,
            threshold_interpolated_w,
            threshold_bisected_w,
            ..
        } => {
            let _ = writeln!(
                out,
                "# threshold_interpolated_W: {}",
                opt(*threshold_interpolated_w)
            );
            let _ = writeln!(
                out,
                "# threshold_bisected_W: {}",
                opt(*threshold_bisected_w)
            );
            for f in failures {
                let _ = writeln!(out, "# failed: P_o_W = {}: {}", num(f.p_o), f.message);
            }
        }
        Payload::Spectrum {
            steady, stability, ..
        } => {
            let _ = writeln!(out, "# n_o: {}", num(steady.n_o));
            let _ = writeln!(out, "# n_e: {}", num(steady.n_e));
            let _ = writeln!(out, "# margin_rad_s: {}", num(stability.margin));
        }
        _ => {}
    }
    let _ = writeln!(out, "# config:");
    for line in env.config.lines() {
        let _ = writeln!(out, "#   {line}");
    }

    match &env.results {
        Payload::Steady {
            steady: s,
            stability,
        } => {
            let _ = writeln!(
                out,
                "n_o,n_e,q_s,a_s_re,a_s_im,b_s_re,b_s_im,delta_o_eff_rad_s,delta_e_eff_rad_s,residual,multistable,margin_rad_s,stable"
            );
            let cols = [
                s.n_o,
                s.n_e,
                s.q_s,
                s.a_s.re,
                s.a_s.im,
                s.b_s.re,
                s.b_s.im,
                s.delta_o_eff,
                s.delta_e_eff,
                s.residual,
            ];
            let cols: Vec<String> = cols.iter().map(|x| num(*x)).collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                cols.join(","),
                s.multistable,
                num(stability.margin),
                stability.stable
            );
        }
        Payload::Spectrum { rows, .. } => {
            let _ = writeln!(
                out,
                "delta_p_rad_s,delta_rad_s,t_re,t_im,t_sq,phase_rad,stable"
            );
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    num(r.delta_p_rad_s),
                    num(r.delta_rad_s),
                    num(r.t_re),
                    num(r.t_im),
                    num(r.t_sq),
                    num(r.phase_rad),
                    r.stable
                );
            }
        }
        Payload::PowerSweep { rows, .. } => {
            let _ = writeln!(out, "P_o_W,t_sq_peak,margin_rad_s");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    num(r.P_o_W),
                    num(r.t_sq_peak),
                    num(r.margin_rad_s)
                );
            }
        }
        Payload::Delay { rows } => {
            let _ = writeln!(out, "method,tau_g_s,step_rad_s");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    csv_text(&r.method),
                    num(r.tau_g_s),
                    num(r.step_rad_s)
                );
            }
        }
        Payload::Classify {
            classification: c,
            peak_delta_p_rad_s,
            peak_t_sq,
            stable,
        } => {
            let _ = writeln!(
                out,
                "label,center_t_sq,bare_reference,max_t_sq,window_width_rad_s,dip_separation_rad_s,peak_delta_p_rad_s,peak_t_sq,stable"
            );
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.label,
                num(c.center_t_sq),
                num(c.bare_reference),
                num(c.max_t_sq),
                opt(c.window_width),
                opt(c.dip_separation),
                num(*peak_delta_p_rad_s),
                num(*peak_t_sq),
                stable
            );
        }
    }
    out
}

/// Encodes an envelope.
pub fn emit_results(env: &ResultEnvelope, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => Ok(emit_csv(env).into_bytes()),
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(env)
                .map_err(|e| Error::Domain(format!("cannot encode results: {e}")))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Decodes a JSON envelope.
pub fn parse_json_envelope(bytes: &[u8]) -> Result<ResultEnvelope> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
