//! TOML run configuration.
//!
//! Quantities are either plain TOML numbers in SI base units (rad/s, W) or
//! strings of the form `[sign][2pi*]number[ unit]`, e.g. `"2pi*5.6 MHz"` or
//! `"40 uW"`. Units only rescale; the `2pi*` factor is always explicit. Drive
//! detunings and axis bounds may also be written as multiples of a system
//! rate, e.g. `"-omega_m"` or `"3 kappa_o"`.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::PathBuf;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::model::{validate_params, Convention, DriveConfig, SystemParams};
use crate::response::DelayMethod;
use crate::steady::SolverOptions;
use crate::sweep::AxisSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Domain(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Steady,
    Spectrum,
    PowerSweep,
    Delay,
    Classify,
}

impl TaskKind {
    /// Subcommand name.
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Steady => "steady",
            TaskKind::Spectrum => "spectrum",
            TaskKind::PowerSweep => "power-sweep",
            TaskKind::Delay => "delay",
            TaskKind::Classify => "classify",
        }
    }

    /// Config table name.
    pub fn table(self) -> &'static str {
        match self {
            TaskKind::PowerSweep => "power_sweep",
            other => other.as_str(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelaySelection {
    Analytic,
    FiniteDifference,
    Both,
}

impl DelaySelection {
    pub fn methods(self) -> &'static [DelayMethod] {
        match self {
            DelaySelection::Analytic => &[DelayMethod::Analytic],
            DelaySelection::FiniteDifference => &[DelayMethod::FiniteDifference],
            DelaySelection::Both => &[DelayMethod::Analytic, DelayMethod::FiniteDifference],
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            DelaySelection::Analytic => "analytic",
            DelaySelection::FiniteDifference => "finite-difference",
            DelaySelection::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Steady,
    Spectrum(AxisSpec),
    PowerSweep(Vec<f64>),
    Delay {
        method: DelaySelection,
        step: Option<f64>,
    },
    Classify(AxisSpec),
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Steady => TaskKind::Steady,
            Task::Spectrum(_) => TaskKind::Spectrum,
            Task::PowerSweep(_) => TaskKind::PowerSweep,
            Task::Delay { .. } => TaskKind::Delay,
            Task::Classify(_) => TaskKind::Classify,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemParams,
    pub drive: DriveConfig,
    pub solver: SolverOptions,
    pub task: Task,
    pub output: OutputSpec,
    /// Soft problems found while parsing and validating.
    pub warnings: Vec<String>,
}

type Value = Spanned<toml::Value>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<Spanned<RawSystem>>,
    drive: Option<Spanned<RawDrive>>,
    solver: Option<SolverOptions>,
    output: Option<RawOutput>,
    steady: Option<Spanned<RawEmpty>>,
    spectrum: Option<Spanned<RawAxis>>,
    power_sweep: Option<Spanned<RawPowers>>,
    delay: Option<Spanned<RawDelay>>,
    classify: Option<Spanned<RawAxis>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    omega_o: Option<Value>,
    omega_e: Option<Value>,
    omega_m: Option<Value>,
    kappa_o: Option<Value>,
    kappa_e: Option<Value>,
    kappa_o_ext: Option<Value>,
    kappa_e_ext: Option<Value>,
    kappa_o_ext_ratio: Option<Value>,
    kappa_e_ext_ratio: Option<Value>,
    g_o: Option<Value>,
    g_e: Option<Value>,
    gamma_m: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawDrive {
    P_o: Option<Value>,
    P_e: Option<Value>,
    P_p: Option<Value>,
    Delta_o: Option<Value>,
    Delta_e: Option<Value>,
    convention: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<String>,
    format: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmpty {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    min: Option<Value>,
    max: Option<Value>,
    count: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPowers {
    powers: Option<Spanned<Vec<Value>>>,
    start: Option<Value>,
    stop: Option<Value>,
    count: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDelay {
    method: Option<Spanned<String>>,
    step: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Frequency,
    Power,
}

/// Units as decimal exponents so that "60 uW" parses exactly like `60e-6`.
const FREQUENCY_UNITS: [(&str, i32); 6] = [
    ("rad/s", 0),
    ("THz", 12),
    ("GHz", 9),
    ("MHz", 6),
    ("kHz", 3),
    ("Hz", 0),
];
const POWER_UNITS: [(&str, i32); 5] = [("mW", -3), ("uW", -6), ("μW", -6), ("nW", -9), ("W", 0)];

/// Parser state: the source for span lookups and collected warnings.
struct Ctx<'a> {
    text: &'a str,
    warnings: Vec<String>,
    symbols: Vec<(&'static str, f64)>,
}

impl Ctx<'_> {
    fn error(&self, span: Range<usize>, message: impl Into<String>) -> Error {
        let (line, column) = line_column(self.text, span.start);
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn missing(&self, span: Range<usize>, table: &str, key: &str) -> Error {
        self.error(span, format!("missing required key `{key}` in [{table}]"))
    }

    fn quantity(&mut self, key: &str, v: &Value, kind: Kind) -> Result<f64> {
        let span = v.span();
        match v.get_ref() {
            toml::Value::Float(x) => Ok(*x),
            toml::Value::Integer(i) => Ok(*i as f64),
            toml::Value::String(s) => match self.parse_quantity(s, kind) {
                Ok((x, hz_without_factor)) => {
                    if hz_without_factor {
                        self.warnings.push(format!(
                            "`{key} = \"{s}\"` has a Hz unit without 2pi*; taken as {x:e} rad/s"
                        ));
                    }
                    Ok(x)
                }
                Err(msg) => Err(self.error(span, format!("`{key}`: {msg}"))),
            },
            other => Err(self.error(
                span,
                format!(
                    "`{key}`: expected a number or string, got {}",
                    other.type_str()
                ),
            )),
        }
    }

    fn parse_quantity(&self, s: &str, kind: Kind) -> std::result::Result<(f64, bool), String> {
        let mut rest = s.trim();
        let mut sign = 1.0;
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1.0;
            rest = r.trim_start();
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r.trim_start();
        }
        let mut factor = 1.0;
        let two_pi = rest.starts_with("2pi*");
        if two_pi {
            if kind == Kind::Power {
                return Err(format!("2pi* is not allowed on a power: \"{s}\""));
            }
            factor = TAU;
            rest = rest["2pi*".len()..].trim_start();
        }

        let units: &[(&str, i32)] = match kind {
            Kind::Frequency => &FREQUENCY_UNITS,
            Kind::Power => &POWER_UNITS,
        };
        let mut number = rest;
        let mut unit = None;
        let mut exponent = 0;
        let mut symbol = None;
        if let Some((name, e)) = units.iter().find(|(n, _)| rest.ends_with(n)) {
            number = rest[..rest.len() - name.len()].trim_end();
            unit = Some(*name);
            exponent = *e;
        } else if let Some((name, v)) = self.symbols.iter().find(|(n, _)| rest.ends_with(n)) {
            number = rest[..rest.len() - name.len()].trim_end();
            number = number.strip_suffix('*').unwrap_or(number).trim_end();
            symbol = Some(*v);
        }
        let coefficient = if number.is_empty() && symbol.is_some() {
            1.0
        } else {
            let malformed = || format!("malformed number in \"{s}\"");
            let (mantissa, own) = match number.split_once(['e', 'E']) {
                Some((m, e)) => (m, e.parse::<i32>().map_err(|_| malformed())?),
                None => (number, 0),
            };
            if mantissa.is_empty() || !mantissa.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
                return Err(malformed());
            }
            format!("{mantissa}e{}", own + exponent)
                .parse::<f64>()
                .map_err(|_| malformed())?
        };
        let value = sign * factor * coefficient * symbol.unwrap_or(1.0);
        if !value.is_finite() {
            return Err(format!("value is not finite: \"{s}\""));
        }
        let hz = unit.is_some_and(|u| u.ends_with("Hz"));
        Ok((value, hz && !two_pi))
    }

    fn positive_count(&self, key: &str, v: &Spanned<i64>, min: i64) -> Result<usize> {
        if *v.get_ref() < min {
            return Err(self.error(
                v.span(),
                format!("`{key}` must be at least {min}, got {}", v.get_ref()),
            ));
        }
        Ok(*v.get_ref() as usize)
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[line_start..].chars().count() + 1)
}

fn from_toml_error(text: &str, e: toml::de::Error) -> Error {
    let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
    Error::Parse {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| from_toml_error(text, e))?;
    let mut cx = Ctx {
        text,
        warnings: Vec::new(),
        symbols: Vec::new(),
    };

    let Some(sys) = raw.system else {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "missing system block".into(),
        });
    };
    let system = parse_system(&mut cx, sys)?;
    cx.symbols = vec![
        ("omega_m", system.omega_m),
        ("kappa_o", system.kappa_o),
        ("kappa_e", system.kappa_e),
        ("gamma_m", system.gamma_m),
    ];

    let Some(drv) = raw.drive else {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "missing drive block".into(),
        });
    };
    let drive = parse_drive(&mut cx, drv)?;
    let report = validate_params(&system, &drive);
    let validation_warnings = report.into_result()?;

    let solver = raw.solver.unwrap_or_default();
    solver.validate()?;

    let mut tasks = Vec::new();
    if let Some(t) = raw.steady {
        tasks.push((t.span(), Task::Steady));
    }
    if let Some(t) = raw.spectrum {
        let span = t.span();
        tasks.push((
            span,
            Task::Spectrum(parse_axis(&mut cx, "spectrum", t, &system)?),
        ));
    }
    if let Some(t) = raw.power_sweep {
        let span = t.span();
        tasks.push((span, Task::PowerSweep(parse_powers(&mut cx, t)?)));
    }
    if let Some(t) = raw.delay {
        let span = t.span();
        tasks.push((span, parse_delay(&mut cx, t.into_inner())?));
    }
    if let Some(t) = raw.classify {
        let span = t.span();
        tasks.push((
            span,
            Task::Classify(parse_axis(&mut cx, "classify", t, &system)?),
        ));
    }
    let task = match tasks.len() {
        0 => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "missing task block (one of [steady], [spectrum], [power_sweep], [delay], [classify])"
                    .into(),
            })
        }
        1 => tasks.pop().unwrap().1,
        _ => {
            tasks.sort_by_key(|(span, _)| span.start);
            let names: Vec<&str> = tasks.iter().map(|(_, t)| t.kind().table()).collect();
            return Err(cx.error(
                tasks[1].0.clone(),
                format!("exactly one task block is allowed, found [{}]", names.join("], [")),
            ));
        }
    };

    let output = match raw.output {
        None => OutputSpec::default(),
        Some(o) => OutputSpec {
            path: o.path.map(PathBuf::from),
            format: match o.format {
                None => None,
                Some(f) => Some(
                    f.get_ref()
                        .parse()
                        .map_err(|e: Error| cx.error(f.span(), e.to_string()))?,
                ),
            },
        },
    };

    let mut warnings = cx.warnings;
    warnings.extend(validation_warnings);
    Ok(RunConfig {
        system,
        drive,
        solver,
        task,
        output,
        warnings,
    })
}

fn parse_system(cx: &mut Ctx, sys: Spanned<RawSystem>) -> Result<SystemParams> {
    let span = sys.span();
    let s = sys.into_inner();
    let req = |cx: &mut Ctx, key: &str, v: &Option<Value>| -> Result<f64> {
        match v {
            Some(v) => cx.quantity(key, v, Kind::Frequency),
            None => Err(cx.missing(span.clone(), "system", key)),
        }
    };
    let omega_o = req(cx, "omega_o", &s.omega_o)?;
    let omega_e = req(cx, "omega_e", &s.omega_e)?;
    let omega_m = req(cx, "omega_m", &s.omega_m)?;
    let kappa_o = req(cx, "kappa_o", &s.kappa_o)?;
    let kappa_e = req(cx, "kappa_e", &s.kappa_e)?;
    let g_o = req(cx, "g_o", &s.g_o)?;
    let g_e = req(cx, "g_e", &s.g_e)?;
    let gamma_m = req(cx, "gamma_m", &s.gamma_m)?;

    let external =
        |cx: &mut Ctx, key: &str, abs: &Option<Value>, ratio: &Option<Value>, total: f64| {
            let ratio_key = format!("{key}_ratio");
            match (abs, ratio) {
                (Some(v), None) => cx.quantity(key, v, Kind::Frequency),
                (None, Some(r)) => match r.get_ref() {
                    toml::Value::Float(x) => Ok(x * total),
                    toml::Value::Integer(i) => Ok(*i as f64 * total),
                    _ => Err(cx.error(r.span(), format!("`{ratio_key}` must be a plain number"))),
                },
                (Some(v), Some(_)) => Err(cx.error(
                    v.span(),
                    format!("give either `{key}` or `{ratio_key}`, not both"),
                )),
                (None, None) => Err(cx.missing(span.clone(), "system", key)),
            }
        };
    let kappa_o_ext = external(
        cx,
        "kappa_o_ext",
        &s.kappa_o_ext,
        &s.kappa_o_ext_ratio,
        kappa_o,
    )?;
    let kappa_e_ext = external(
        cx,
        "kappa_e_ext",
        &s.kappa_e_ext,
        &s.kappa_e_ext_ratio,
        kappa_e,
    )?;

    Ok(SystemParams {
        omega_o,
        omega_e,
        omega_m,
        kappa_o,
        kappa_e,
        kappa_o_ext,
        kappa_e_ext,
        g_o,
        g_e,
        gamma_m,
    })
}

fn parse_drive(cx: &mut Ctx, drv: Spanned<RawDrive>) -> Result<DriveConfig> {
    let span = drv.span();
    let d = drv.into_inner();
    let req = |cx: &mut Ctx, key: &str, v: &Option<Value>, kind: Kind| -> Result<f64> {
        match v {
            Some(v) => cx.quantity(key, v, kind),
            None => Err(cx.missing(span.clone(), "drive", key)),
        }
    };
    let p_o = req(cx, "P_o", &d.P_o, Kind::Power)?;
    let p_e = req(cx, "P_e", &d.P_e, Kind::Power)?;
    let delta_o = req(cx, "Delta_o", &d.Delta_o, Kind::Frequency)?;
    let delta_e = req(cx, "Delta_e", &d.Delta_e, Kind::Frequency)?;
    let p_p = match &d.P_p {
        Some(v) => cx.quantity("P_p", v, Kind::Power)?,
        None => 0.0,
    };
    let convention = match d.convention {
        None => Convention::default(),
        Some(c) => c
            .get_ref()
            .parse()
            .map_err(|e: Error| cx.error(c.span(), e.to_string()))?,
    };
    Ok(DriveConfig {
        p_o,
        p_e,
        p_p,
        delta_o,
        delta_e,
        convention,
    })
}

fn parse_axis(
    cx: &mut Ctx,
    table: &str,
    raw: Spanned<RawAxis>,
    p: &SystemParams,
) -> Result<AxisSpec> {
    let span = raw.span();
    let a = raw.into_inner();
    let default = AxisSpec::default_for(p);
    let min = match &a.min {
        Some(v) => cx.quantity("min", v, Kind::Frequency)?,
        None => default.min,
    };
    let max = match &a.max {
        Some(v) => cx.quantity("max", v, Kind::Frequency)?,
        None => default.max,
    };
    let count = match &a.count {
        Some(c) => cx.positive_count("count", c, 2)?,
        None => default.count,
    };
    let axis = AxisSpec { min, max, count };
    axis.validate()
        .map_err(|e| cx.error(span, format!("[{table}]: {e}")))?;
    Ok(axis)
}

fn parse_powers(cx: &mut Ctx, raw: Spanned<RawPowers>) -> Result<Vec<f64>> {
    let span = raw.span();
    let r = raw.into_inner();
    let powers = match (&r.powers, &r.start, &r.stop, &r.count) {
        (Some(list), None, None, None) => list
            .get_ref()
            .iter()
            .map(|v| cx.quantity("powers", v, Kind::Power))
            .collect::<Result<Vec<_>>>()?,
        (None, Some(start), Some(stop), Some(count)) => {
            let a = cx.quantity("start", start, Kind::Power)?;
            let b = cx.quantity("stop", stop, Kind::Power)?;
            let n = cx.positive_count("count", count, 1)?;
            if n == 1 {
                vec![a]
            } else {
                let m = (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        if i == n - 1 {
                            b
                        } else {
                            a + (b - a) * i as f64 / m
                        }
                    })
                    .collect()
            }
        }
        _ => {
            return Err(cx.error(
                span,
                "[power_sweep] needs either `powers` or all of `start`, `stop`, `count`",
            ))
        }
    };
    if powers.is_empty() {
        return Err(cx.error(span, "[power_sweep]: power list is empty"));
    }
    if powers.iter().any(|x| *x < 0.0) || powers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(cx.error(
            span,
            "[power_sweep]: powers must be nonnegative and strictly increasing",
        ));
    }
    Ok(powers)
}

fn parse_delay(cx: &mut Ctx, raw: RawDelay) -> Result<Task> {
    let method = match &raw.method {
        None => DelaySelection::Both,
        Some(m) => match m.get_ref().as_str() {
            "analytic" => DelaySelection::Analytic,
            "finite-difference" => DelaySelection::FiniteDifference,
            "both" => DelaySelection::Both,
            other => {
                return Err(cx.error(
                    m.span(),
                    format!(
                    "unknown delay method `{other}` (expected analytic, finite-difference or both)"
                ),
                ))
            }
        },
    };
    let step = match &raw.step {
        None => None,
        Some(v) => {
            let h = cx.quantity("step", v, Kind::Frequency)?;
            if !(h > 0.0) {
                return Err(cx.error(v.span(), format!("`step` must be positive, got {h}")));
            }
            Some(h)
        }
    };
    Ok(Task::Delay { method, step })
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Canonical TOML form in base units. Parsing it gives back this
    /// configuration exactly, apart from the warnings.
    pub fn to_toml(&self) -> String {
        let s = &self.system;
        let d = &self.drive;
        let o = &self.solver;
        let mut out = String::new();
        let _ = writeln!(out, "[system]");
        for (k, v) in s.named_fields() {
            let _ = writeln!(out, "{k} = {}", num(v));
        }
        let _ = writeln!(out, "\n[drive]");
        let _ = writeln!(out, "P_o = {}", num(d.p_o));
        let _ = writeln!(out, "P_e = {}", num(d.p_e));
        let _ = writeln!(out, "P_p = {}", num(d.p_p));
        let _ = writeln!(out, "Delta_o = {}", num(d.delta_o));
        let _ = writeln!(out, "Delta_e = {}", num(d.delta_e));
        let _ = writeln!(out, "convention = \"{}\"", d.convention.as_str());
        let _ = writeln!(out, "\n[solver]");
        let _ = writeln!(out, "damping = {}", num(o.damping));
        let _ = writeln!(out, "tolerance = {}", num(o.tolerance));
        let _ = writeln!(out, "max_iterations = {}", o.max_iterations);
        let _ = writeln!(out, "multistart = {}", o.multistart);
        let _ = writeln!(out, "\n[{}]", self.task.kind().table());
        match &self.task {
            Task::Steady => {}
            Task::Spectrum(a) | Task::Classify(a) => {
                let _ = writeln!(out, "min = {}", num(a.min));
                let _ = writeln!(out, "max = {}", num(a.max));
                let _ = writeln!(out, "count = {}", a.count);
            }
            Task::PowerSweep(powers) => {
                let list: Vec<String> = powers.iter().map(|x| num(*x)).collect();
                let _ = writeln!(out, "powers = [{}]", list.join(", "));
            }
            Task::Delay { method, step } => {
                let _ = writeln!(out, "method = \"{}\"", method.as_str());
                if let Some(h) = step {
                    let _ = writeln!(out, "step = {}", num(*h));
                }
            }
        }
        out
    }
}
