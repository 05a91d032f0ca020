//! Acceptance criteria, one PASS/FAIL line each. Runs the full 298 K,
//! J_max = 90 ensemble several times; expect several minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use rotorient::checks::{matrix_element_deviation, step_halving};
use rotorient::experiments::fit_through_origin;
use rotorient::fid::propagation_order_check;
use rotorient::{
    channel_peaks, detect_revivals, echo_spacing, partition_function, scan_tau,
    spectral_derivative_check, OrientationTrace64, SimulationConfig64,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn csv_bytes(trace: &OrientationTrace64) -> Vec<u8> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, Some("manifest.json")).unwrap();
    buf
}

/// The relaxed and relaxation-free traces of the default run on the long
/// uniform grid the spectral check needs.
struct LongRun {
    cfg: SimulationConfig64,
    bare: OrientationTrace64,
    relaxed: OrientationTrace64,
}

fn long_run() -> LongRun {
    let mut cfg = SimulationConfig64::default();
    cfg.grid = cfg.spectral_grid().unwrap();
    let bare = cfg.orientation_without_relaxation().unwrap();
    let (relaxed, _) = cfg.finish(&bare).unwrap();
    LongRun { cfg, bare, relaxed }
}

fn revival_timing(run: &LongRun) -> Outcome {
    let period = echo_spacing(&run.cfg.molecule).unwrap();
    let r = &run.relaxed;
    let found = detect_revivals(&r.grid_ps, &r.cos_theta, period, 2, run.cfg.pulse.t0_ps, 1e-6).unwrap();
    let times: Vec<Option<f64>> = found.iter().map(|v| v.peak.map(|p| p.time_ps)).collect();
    let ok = matches!(times[..], [Some(a), Some(b)] if (a - 66.4).abs() <= 1.5 && (b - 132.9).abs() <= 1.5);
    outcome(ok, format!("revival peaks at {times:?} ps, expected 66.4 and 132.9 ± 1.5 ps"))
}

fn orientation_magnitude(run: &LongRun) -> Outcome {
    let t0 = run.cfg.pulse.t0_ps;
    let relaxed = channel_peaks(&run.relaxed, &run.cfg.molecule, t0).unwrap();
    let bare = channel_peaks(&run.bare, &run.cfg.molecule, t0).unwrap();
    let first = (3.5e-4..=6.5e-4).contains(&relaxed[1]);
    let second = (1.3e-4..=2.7e-4).contains(&relaxed[2]);
    let lossless = bare[1] > 1e-3;
    outcome(
        first && second && lossless,
        format!(
            "P = 0.35 bar: first revival {:.3e} (want [3.5e-4, 6.5e-4]) {}, second {:.3e} (want [1.3e-4, 2.7e-4]) {}; \
             P = 0: first revival {:.3e} (want > 1e-3) {}",
            relaxed[1],
            tag(first),
            relaxed[2],
            tag(second),
            bare[1],
            tag(lossless)
        ),
    )
}

fn tag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "out of range"
    }
}

/// Default-grid runs at each amplitude, in a single-thread pool.
fn amplitude_runs(amplitudes: &[f64]) -> Vec<OrientationTrace64> {
    let single = pool(1);
    amplitudes
        .iter()
        .map(|&e1| {
            let mut cfg = SimulationConfig64::default();
            cfg.pulse.amplitude_kv_cm = e1;
            single.install(|| cfg.simulate()).unwrap().0
        })
        .collect()
}

fn amplitude_linearity(amplitudes: &[f64], traces: &[OrientationTrace64]) -> Outcome {
    let cfg = SimulationConfig64::default();
    let peaks: Vec<[f64; 3]> = traces
        .iter()
        .map(|t| channel_peaks(t, &cfg.molecule, cfg.pulse.t0_ps).unwrap())
        .collect();
    let r2: Vec<f64> = (0..3)
        .map(|c| {
            let y: Vec<f64> = peaks.iter().map(|p| p[c]).collect();
            fit_through_origin(amplitudes, &y).1.unwrap_or(f64::NAN)
        })
        .collect();
    let ok = r2.iter().all(|&r| r > 0.999);
    outcome(ok, format!("R² through origin (delay zero, first, second revival) = {r2:.6?}, want > 0.999"))
}

fn tau_optimum() -> Outcome {
    let mut cfg = SimulationConfig64::default();
    cfg.propagation.max_step_ps = 0.02;
    cfg.grid.dt_ps = 0.02;
    let taus = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
    let scan = scan_tau(&cfg, &taus, &|i, tau| eprintln!("  tau scan {}/{}: {tau} ps", i + 1, taus.len())).unwrap();
    let argmax: Vec<f64> = scan.channels.iter().map(|c| c.argmax.unwrap_or(f64::NAN)).collect();
    let revivals_ok = argmax[1..].iter().all(|&a| (a - 2.0).abs() <= 0.5);
    let distinct = argmax[1..].iter().all(|&a| a != argmax[0]);
    let peaks: Vec<String> = scan.channels.iter().map(|c| {
            let v: Vec<String> = c.peaks.iter().map(|p| format!("{p:.3e}")).collect();
            format!("{} [{}]", c.name, v.join(", "))
        }).collect();
    outcome(
        revivals_ok && distinct,
        format!(
            "argmax τ (delay zero, first, second) = {argmax:?} ps over τ = {taus:?}; want revivals at 2.0 ± 0.5 and a different delay-zero optimum; peaks {}",
            peaks.join("; ")
        ),
    )
}

fn first_revival_shape(weak: &OrientationTrace64, strong: &OrientationTrace64) -> Outcome {
    let period = echo_spacing(&SimulationConfig64::default().molecule).unwrap();
    let (lo, hi) = (0.75 * period, 1.25 * period);
    let window = |t: &OrientationTrace64| -> Vec<f64> {
        let v: Vec<f64> = t
            .grid_ps
            .iter()
            .zip(&t.d_cos_theta_dt)
            .filter(|(&x, _)| x >= lo && x <= hi)
            .map(|(_, &y)| y)
            .collect();
        let peak = v.iter().fold(0.0f64, |a, &y| a.max(y.abs()));
        v.iter().map(|y| y / peak).collect()
    };
    let (a, b) = (window(weak), window(strong));
    let worst = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    outcome(
        a.len() == b.len() && !a.is_empty() && worst < 1e-3,
        format!("max pointwise difference of normalized dcos/dt over [{lo:.1}, {hi:.1}] ps: {worst:.3e}, want < 1e-3"),
    )
}

fn matrix_elements() -> Outcome {
    let dev = matrix_element_deviation(8).unwrap();
    outcome(dev < 1e-12, format!("max deviation from 3j and quadrature oracles for J <= 8: {dev:.3e}, want < 1e-12"))
}

fn conservation() -> Outcome {
    let cfg = SimulationConfig64::default();
    let (_, drift) = step_halving(&cfg).unwrap();

    let mut dark = cfg.clone();
    dark.pulse.amplitude_kv_cm = 0.0;
    let (trace, _) = dark.simulate().unwrap();
    let zero_field = trace
        .cos_theta
        .iter()
        .chain(&trace.d_cos_theta_dt)
        .fold(0.0f64, |a, &v| a.max(v.abs()));

    let mut small = cfg.ensemble;
    small.j_max = 90;
    let mut large = cfg.ensemble;
    large.j_max = 120;
    let z90 = partition_function(&cfg.molecule, &small).unwrap();
    let z120 = partition_function(&cfg.molecule, &large).unwrap();
    let rel = (z90 - z120).abs() / z120;

    let parts = [drift <= 1e-10, zero_field <= 1e-14, rel <= 1e-10];
    outcome(
        parts.iter().all(|&p| p),
        format!(
            "norm drift {drift:.3e} (want <= 1e-10) {}; zero-field max |<cos>|, |d<cos>/dt| {zero_field:.3e} (want <= 1e-14) {}; \
             |Z(90) - Z(120)|/Z(120) = {rel:.3e} (want <= 1e-10) {}",
            tag(parts[0]),
            tag(parts[1]),
            tag(parts[2])
        ),
    )
}

fn spectral_identity(run: &LongRun) -> Outcome {
    let r = spectral_derivative_check(&run.relaxed).unwrap();
    outcome(
        r.max_deviation < 1e-6,
        format!(
            "max deviation {:.3e} over {} samples ({} to {} ps, dt {} ps), want < 1e-6",
            r.max_deviation, r.samples, r.t_start_ps, r.t_end_ps, r.dt_ps
        ),
    )
}

fn propagation_order(run: &LongRun) -> Outcome {
    let r = propagation_order_check(&run.relaxed, &run.cfg.pulse, 0.2).unwrap();
    outcome(
        (r.ratio - 4.0).abs() <= 0.5,
        format!(
            "deviation {:.3e} at max exponent {} (alpha {:.3e}), {:.3e} at half depth, ratio {:.3}, want 4 ± 0.5",
            r.deviation, r.max_exponent, r.alpha, r.deviation_half, r.ratio
        ),
    )
}

fn determinism(single: &OrientationTrace64) -> Outcome {
    let cfg = SimulationConfig64::default();
    let wide = pool(4).install(|| cfg.simulate()).unwrap().0;
    let reference = csv_bytes(single);
    let same = reference == csv_bytes(&wide);
    outcome(
        same,
        format!("default run CSV ({} bytes) on 1 vs 4 threads: byte-identical = {same}", reference.len()),
    )
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    eprintln!("  {label}: {:.1} s", start.elapsed().as_secs_f64());
    out
}

fn main() -> ExitCode {
    let names = [
        "revival timing",
        "orientation magnitude",
        "amplitude linearity",
        "tau-scan optimum",
        "shape invariance",
        "matrix-element oracle",
        "conservation suite",
        "spectral identity",
        "propagation-order oracle",
        "determinism",
    ];
    let mut results: Vec<Outcome> = Vec::new();
    let mut report = |o: Outcome| {
        let n = results.len();
        println!("{} {:>2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, n + 1, names[n], o.detail);
        results.push(o);
    };

    let run = timed("long default run", long_run);
    report(revival_timing(&run));
    report(orientation_magnitude(&run));

    let amplitudes = [20.0, 40.0, 60.0, 80.0, 100.0];
    let traces = timed("amplitude runs", || amplitude_runs(&amplitudes));
    report(amplitude_linearity(&amplitudes, &traces));
    report(timed("tau scan", tau_optimum));
    report(first_revival_shape(&traces[0], &traces[4]));
    report(matrix_elements());
    report(timed("conservation", conservation));
    report(spectral_identity(&run));
    report(propagation_order(&run));
    report(timed("determinism", || determinism(&traces[4])));

    let failed = results.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
