//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybridoem::config::Format;
use hybridoem::evolution::mean_field_evolution_oracle;
use hybridoem::output::{emit_results, write_output, Payload, ResultEnvelope, VERSION};
use hybridoem::response::{
    fluctuation_linear_solve, group_delay, probe_sideband_amplitude, DelayMethod,
};
use hybridoem::stability::assess_stability;
use hybridoem::steady::solve_steady_state;
use hybridoem::sweep::{
    classify_regime, power_sweep, spectrum_sweep, AxisSpec, Regime, Spectrum, SweepOptions,
};
use hybridoem::{Convention, DriveConfig, Error, SolverOptions, SystemParams};

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

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

fn spectrum(p: &SystemParams, d: &DriveConfig, threads: usize) -> Result<Spectrum, String> {
    let opts = SweepOptions {
        threads,
        ..SweepOptions::default()
    };
    spectrum_sweep(p, d, &AxisSpec::default_for(p), &opts).map_err(|e| e.to_string())
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bare_resonance() -> Outcome {
    let p = SystemParams::reference();
    let d = drive(&p, 0.0, 0.0, false);
    let s = spectrum(&p, &d, 0)?;
    let want = (1.0 - p.kappa_o_ext / p.kappa_o).powi(2);
    let got = s.center.t_sq;
    let grid = s.points[s
        .axis
        .iter()
        .position(|x| *x == 0.0)
        .ok_or("no grid point at 0")?]
    .t_sq;
    let err = rel(got, want).max(rel(grid, want));
    check(err <= 1e-12 && rel(want, 0.0576) < 1e-12, || {
        format!("|t(0)|^2 = {got}, want {want}")
    })?;
    Ok(format!("|t(0)|^2 = {got} (rel err {err:.1e})"))
}

fn closed_form_vs_linear_solve() -> Outcome {
    let base = SystemParams::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    let opts = SolverOptions::default();
    let (mut tested, mut draws, mut worst) = (0usize, 0usize, 0.0f64);
    let mut signs = [0usize; 4];
    while tested < 1000 {
        draws += 1;
        if draws > 50_000 {
            return Err(format!("only {tested} stable points in {draws} draws"));
        }
        let mut u = || rng.gen_range(0.5..1.5);
        let mut p = SystemParams {
            omega_o: base.omega_o * u(),
            omega_e: base.omega_e * u(),
            omega_m: base.omega_m * u(),
            kappa_o: base.kappa_o * u(),
            kappa_e: base.kappa_e * u(),
            kappa_o_ext: 0.0,
            kappa_e_ext: 0.0,
            g_o: base.g_o * u(),
            g_e: base.g_e * u(),
            gamma_m: base.gamma_m * u(),
        };
        p.kappa_o_ext = p.kappa_o * (0.76 * u()).min(1.0);
        p.kappa_e_ext = p.kappa_e * (0.11 * u()).min(1.0);
        let blue_o = rng.gen_bool(0.5);
        let blue_e = rng.gen_bool(0.5);
        let mut u = || rng.gen_range(0.5..1.5);
        let d = DriveConfig {
            p_o: if blue_o { 40e-6 } else { 2e-3 } * u(),
            p_e: 1e-6 * u(),
            p_p: 1e-9 * u(),
            delta_o: if blue_o { -1.0 } else { 1.0 } * p.omega_m * u(),
            delta_e: if blue_e { -1.0 } else { 1.0 } * p.omega_m * u(),
            convention: Convention::Standard,
        };
        let Ok(ss) = solve_steady_state(&p, &d, &opts, None) else {
            continue;
        };
        if !assess_stability(&p, &ss).map_err(|e| e.to_string())?.stable {
            continue;
        }
        // Half the probes sit on the mechanical feature, half across the cavity.
        let delta = if rng.gen_bool(0.5) {
            ss.delta_o_eff + rng.gen_range(-50.0..50.0) * p.gamma_m
        } else {
            d.delta_o + rng.gen_range(-3.0..3.0) * p.kappa_o
        };
        let closed = probe_sideband_amplitude(delta, &p, &d, &ss).map_err(|e| e.to_string())?;
        let full = fluctuation_linear_solve(delta, &p, &d, &ss).map_err(|e| e.to_string())?;
        let err = (closed - full.a_plus).norm() / full.a_plus.norm();
        worst = worst.max(err);
        if err.is_nan() || err > 1e-10 {
            return Err(format!(
                "rel err {err:e} at draw {draws} (delta = {delta:e}, {p:?}, {d:?})"
            ));
        }
        signs[2 * blue_o as usize + blue_e as usize] += 1;
        tested += 1;
    }
    Ok(format!(
        "{tested} stable points from {draws} draws, worst rel err {worst:.1e}, sign mix rr/rb/br/bb = {signs:?}"
    ))
}

fn steady_state_oracle() -> Outcome {
    let p = SystemParams::reference();
    let mut worst = 0.0f64;
    let points = [
        (0.0, false),
        (2e-3, false),
        (3e-3, false),
        (0.0, true),
        (10e-6, true),
        (40e-6, true),
    ];
    for (p_o, blue) in points {
        let d = drive(&p, p_o, 1e-6, blue);
        let fp = solve_steady_state(&p, &d, &SolverOptions::default(), None)
            .map_err(|e| e.to_string())?;
        let ode = mean_field_evolution_oracle(&p, &d, 1.0, 1e-10)
            .map_err(|e| format!("P_o = {p_o:e}, blue = {blue}: {e}"))?;
        for (name, a, b) in [
            ("n_o", ode.n_o, fp.n_o),
            ("n_e", ode.n_e, fp.n_e),
            ("Q_s", ode.q_s, fp.q_s),
        ] {
            let err = rel(a, b);
            worst = worst.max(err);
            check(err <= 1e-6, || {
                format!("P_o = {p_o:e}, blue = {blue}: {name} ODE {a:e} vs fixed point {b:e}")
            })?;
        }
    }
    Ok(format!(
        "{} operating points, worst rel err {worst:.1e}",
        points.len()
    ))
}

/// Structural transparency check: the local maximum nearest `Δ_p = 0` lies
/// in the half-maximum interval containing 0, with an interior minimum on
/// either side.
fn transparency_window(s: &Spectrum) -> Result<(f64, f64, f64), String> {
    let y: Vec<f64> = s.points.iter().map(|pt| pt.t_sq).collect();
    let x = &s.axis;
    let n = y.len();
    let maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| y[i] >= y[i - 1] && y[i] >= y[i + 1])
        .collect();
    let &pk = maxima
        .iter()
        .min_by(|a, b| x[**a].abs().total_cmp(&x[**b].abs()))
        .ok_or("no interior maximum")?;
    let minima: Vec<usize> = (1..n - 1)
        .filter(|&i| y[i] <= y[i - 1] && y[i] <= y[i + 1])
        .collect();
    let left = minima
        .iter()
        .rev()
        .find(|&&i| i < pk)
        .copied()
        .ok_or("no minimum left of the peak")?;
    let right = minima
        .iter()
        .find(|&&i| i > pk)
        .copied()
        .ok_or("no minimum right of the peak")?;
    let half = 0.5 * (y[pk] + 0.5 * (y[left] + y[right]));
    let zero = x
        .iter()
        .position(|v| *v == 0.0)
        .ok_or("no grid point at 0")?;
    if y[zero] < half {
        return Err(format!(
            "|t(0)|^2 = {} is below the half maximum {half}",
            y[zero]
        ));
    }
    let (mut lo, mut hi) = (zero, zero);
    while lo > 0 && y[lo - 1] >= half {
        lo -= 1;
    }
    while hi + 1 < n && y[hi + 1] >= half {
        hi += 1;
    }
    if !(lo <= pk && pk <= hi) {
        return Err(format!(
            "peak at {:e} rad/s lies outside the window [{:e}, {:e}]",
            x[pk], x[lo], x[hi]
        ));
    }
    if !(y[left] < y[zero] && y[right] < y[zero]) {
        return Err("flanking minima are not below the center".into());
    }
    Ok((x[pk], y[left].max(y[right]), x[hi] - x[lo]))
}

fn red_transparency() -> Outcome {
    let p = SystemParams::reference();
    let mut centers = Vec::new();
    let mut notes = Vec::new();
    for p_o in [2e-3, 3e-3] {
        let d = drive(&p, p_o, 1e-6, false);
        let s = spectrum(&p, &d, 0)?;
        let c = s.center.t_sq;
        check(c > 0.9, || format!("P_o = {p_o:e}: |t(0)|^2 = {c}"))?;
        let (peak, flank, width) =
            transparency_window(&s).map_err(|e| format!("P_o = {p_o:e}: {e}"))?;
        let tau = group_delay(&p, &d, &s.steady, DelayMethod::Analytic)
            .map_err(|e| e.to_string())?
            .tau_g;
        check(tau > 0.0, || format!("P_o = {p_o:e}: tau_g = {tau:e}"))?;
        centers.push(c);
        notes.push(format!(
            "{} mW: |t(0)|^2 = {c:.5}, peak at {peak:.3e} rad/s, flank max {flank:.4}, width {width:.3e} rad/s, tau_g = {tau:.3e} s",
            p_o * 1e3
        ));
    }
    check(centers[1] > centers[0], || {
        format!("|t(0)|^2 not increasing: {centers:?}")
    })?;
    Ok(notes.join("; "))
}

fn blue_regimes() -> Outcome {
    let p = SystemParams::reference();
    let s10 = spectrum(&p, &drive(&p, 10e-6, 1e-6, true), 0)?;
    let s40 = spectrum(&p, &drive(&p, 40e-6, 1e-6, true), 0)?;
    let l10 = classify_regime(&s10).map_err(|e| e.to_string())?;
    let l40 = classify_regime(&s40).map_err(|e| e.to_string())?;
    check(s10.center.t_sq < 0.0576, || {
        format!("10 uW: |t(0)|^2 = {}", s10.center.t_sq)
    })?;
    check(l10.label == Regime::Eia, || {
        format!("10 uW labelled {}", l10.label)
    })?;
    check(l40.max_t_sq > 1.0, || {
        format!("40 uW: max |t|^2 = {}", l40.max_t_sq)
    })?;
    check(l40.label == Regime::Amplification, || {
        format!("40 uW labelled {}", l40.label)
    })?;
    Ok(format!(
        "10 uW: |t(0)|^2 = {:.5} -> {}; 40 uW: max |t|^2 = {:.4} -> {}",
        s10.center.t_sq, l10.label, l40.max_t_sq, l40.label
    ))
}

fn threshold_scan() -> Outcome {
    let p = SystemParams::reference();
    let powers: Vec<f64> = (0..=60).map(|k| k as f64 * 1e-6).collect();
    let opts = SolverOptions::default();
    let std_scan =
        power_sweep(&p, &drive(&p, 0.0, 1e-6, true), &powers, &opts).map_err(|e| e.to_string())?;
    check(std_scan.failures.is_empty(), || {
        format!("failures: {:?}", std_scan.failures)
    })?;
    let bis = std_scan
        .threshold_bisected
        .ok_or("standard scan never crosses |t|^2 = 1")?;
    let interp = std_scan
        .threshold_interpolated
        .ok_or("no interpolated crossing")?;
    check((31e-6..=43e-6).contains(&bis), || {
        format!("standard threshold {bis:e} W outside [31, 43] uW")
    })?;
    check(rel(bis, interp) < 0.01, || {
        format!("bisection {bis:e} vs interpolation {interp:e}")
    })?;

    // Paper-literal drive: same scan, then a fine logarithmic scan to locate
    // its own crossing.
    let lit = DriveConfig {
        convention: Convention::PaperLiteral,
        ..drive(&p, 0.0, 1e-6, true)
    };
    let lit_scan = power_sweep(&p, &lit, &powers, &opts).map_err(|e| e.to_string())?;
    let in_band = lit_scan
        .threshold_bisected
        .is_some_and(|t| (31e-6..=43e-6).contains(&t));
    check(!in_band, || {
        "paper-literal convention also crosses inside [31, 43] uW".into()
    })?;
    let log_powers: Vec<f64> = (0..=160)
        .map(|k| 1e-16 * 10f64.powf(k as f64 / 10.0))
        .collect();
    let lit_log = power_sweep(&p, &lit, &log_powers, &opts).map_err(|e| e.to_string())?;
    let lit_thr = lit_log.threshold_bisected;
    if let Some(t) = lit_thr {
        check(!(t > bis / 10.0 && t < bis * 10.0), || {
            format!("paper-literal threshold {t:e} W is not grossly different")
        })?;
    }
    let at_37 = |scan: &hybridoem::sweep::PowerScan| {
        scan.points
            .iter()
            .find(|pt| pt.p_o == powers[37])
            .map(|pt| pt.t_sq_peak)
    };
    Ok(format!(
        "standard: {:.3} uW (bisection), {:.3} uW (interpolation); paper-literal: threshold {}, |t(0)|^2 at 37 uW = {} vs standard {:.4}",
        bis * 1e6,
        interp * 1e6,
        lit_thr.map_or("none".to_string(), |t| format!("{t:.3e} W")),
        at_37(&lit_scan).map_or("solver failure".into(), |v| format!("{v:.4e}")),
        at_37(&std_scan).unwrap_or(f64::NAN)
    ))
}

fn group_delay_consistency() -> Outcome {
    let p = SystemParams::reference();
    let mut notes = Vec::new();
    for p_o in [0.0, 2e-3, 3e-3] {
        let d = drive(&p, p_o, 1e-6, false);
        let ss = solve_steady_state(&p, &d, &SolverOptions::default(), None)
            .map_err(|e| e.to_string())?;
        let a = group_delay(&p, &d, &ss, DelayMethod::Analytic)
            .map_err(|e| e.to_string())?
            .tau_g;
        let f = group_delay(&p, &d, &ss, DelayMethod::FiniteDifference)
            .map_err(|e| e.to_string())?
            .tau_g;
        let err = rel(a, f);
        check(err <= 1e-4, || {
            format!("P_o = {p_o:e}: analytic {a:e} vs finite difference {f:e}")
        })?;
        notes.push(format!("{} mW: {a:.4e} s (rel diff {err:.1e})", p_o * 1e3));
    }
    Ok(notes.join("; "))
}

fn stability_vs_ode() -> Outcome {
    let p = SystemParams::reference();
    let mut grid: Vec<(f64, f64)> = (1..=10).map(|k| (k as f64 * 4.5e-6, 1e-6)).collect();
    grid.extend((0..6).map(|k| (75e-6 + k as f64 * 10e-6, 1e-6)));
    grid.extend([(10e-6, 0.0), (40e-6, 0.0), (0.2e-3, 0.0), (1e-3, 0.0)]);
    let (mut stable, mut unstable) = (0, 0);
    for &(p_o, p_e) in &grid {
        let d = drive(&p, p_o, p_e, true);
        let ss = solve_steady_state(&p, &d, &SolverOptions::default(), None)
            .map_err(|e| e.to_string())?;
        let rep = assess_stability(&p, &ss).map_err(|e| e.to_string())?;
        let ode = mean_field_evolution_oracle(&p, &d, 1.0, 1e-10);
        let ode_stable = match ode {
            Ok(_) => true,
            Err(Error::Diverged { .. }) => false,
            Err(e) => {
                return Err(format!(
                    "P_o = {p_o:e}, P_e = {p_e:e}: ODE inconclusive: {e}"
                ))
            }
        };
        check(ode_stable == rep.stable, || {
            format!(
                "P_o = {p_o:e}, P_e = {p_e:e}: eigenvalues say stable = {}, ODE says {ode_stable}",
                rep.stable
            )
        })?;
        if rep.stable {
            stable += 1;
        } else {
            unstable += 1;
        }
    }
    Ok(format!(
        "{} points agree ({stable} stable, {unstable} unstable)",
        grid.len()
    ))
}

fn envelope(results: Payload) -> ResultEnvelope {
    ResultEnvelope {
        version: VERSION.into(),
        convention: Convention::Standard,
        config: String::new(),
        warnings: Vec::new(),
        results,
    }
}

fn determinism() -> Outcome {
    let p = SystemParams::reference();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (p_o, blue) in [(2e-3, false), (40e-6, true)] {
        let d = drive(&p, p_o, 1e-6, blue);
        let mut reference: Option<Vec<Vec<u8>>> = None;
        for threads in [1, 2, 4, 0] {
            let s = spectrum(&p, &d, threads)?;
            let env = envelope(Payload::spectrum(&s));
            let mut outputs = Vec::new();
            for format in [Format::Csv, Format::Json] {
                let bytes = emit_results(&env, format).map_err(|e| e.to_string())?;
                let path = dir
                    .path()
                    .join(format!("{p_o}-{threads}.{}", format.as_str()));
                write_output(&path, &bytes).map_err(|e| e.to_string())?;
                outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
                files += 1;
            }
            match &reference {
                None => reference = Some(outputs),
                Some(r) => check(*r == outputs, || {
                    format!("P_o = {p_o:e}: output differs with {threads} threads")
                })?,
            }
        }
    }
    Ok(format!(
        "{files} files byte-identical across 1, 2, 4 and automatic thread counts"
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("bare-cavity resonance", bare_resonance),
        (
            "closed form vs 6x6 linear solve",
            closed_form_vs_linear_solve,
        ),
        ("steady state vs time-domain oracle", steady_state_oracle),
        ("red/red transparency window", red_transparency),
        ("blue/red absorption and amplification", blue_regimes),
        ("amplification threshold", threshold_scan),
        ("group delay consistency", group_delay_consistency),
        ("stability vs time-domain oracle", stability_vs_ode),
        ("determinism across thread counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{secs:.2} s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.2} s]: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
