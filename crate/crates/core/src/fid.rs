//! Free-induction decay: the THz field re-radiated by the oriented gas.
//!
//! To first order in optical depth the transmitted field is
//! E(t) = E₀(t) − α·d⟨cos θ⟩/dt, where α collects the path length, number
//! density, dipole moment and vacuum constants.

use std::io::Write;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::OrientationTrace;
use crate::error::{domain, Result};
use crate::io::write_columns;
use crate::numeric::check_increasing;
use crate::pulse::PulseSpec;
use crate::rotor::MoleculeSpec;
use crate::scalar::Real;
use crate::units::CODATA_2018;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidSpec<T> {
    /// Strength factor α in kV·cm⁻¹·ps.
    pub alpha: T,
    /// Add the incident pulse E₀(t) to the emitted field.
    pub include_incident: bool,
}

impl<T: Real> Default for FidSpec<T> {
    fn default() -> Self {
        Self {
            alpha: T::one(),
            include_incident: false,
        }
    }
}

impl<T: Real> FidSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= T::zero()) || !self.alpha.is_finite() {
            return domain(format!("fid.alpha must be >= 0, got {}", self.alpha));
        }
        Ok(())
    }
}

/// A field (kV/cm) or detector trace (arbitrary units) on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal<T> {
    pub grid_ps: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> Signal<T> {
    pub fn new(grid_ps: Vec<T>, values: Vec<T>) -> Result<Self> {
        if grid_ps.len() != values.len() {
            return domain("signal grid and values differ in length");
        }
        check_increasing(&grid_ps, "signal grid")?;
        Ok(Self { grid_ps, values })
    }

    pub fn write_csv<W: Write>(&self, out: W, value_header: &str, manifest: Option<&str>) -> Result<()> {
        write_columns(out, &["time_ps", value_header], &[&self.grid_ps, &self.values], manifest)
    }
}

/// [E₀(t)] − α·d⟨cos θ⟩/dt on the trace grid.
pub fn fid_signal<T: Real>(
    trace: &OrientationTrace<T>,
    spec: &FidSpec<T>,
    pulse: Option<&PulseSpec<T>>,
) -> Result<Signal<T>> {
    spec.validate()?;
    if trace.d_cos_theta_dt.len() != trace.grid_ps.len() || trace.cos_theta.len() != trace.grid_ps.len() {
        return domain("orientation trace has no derivative channel matching its grid");
    }
    let incident = match (spec.include_incident, pulse) {
        (true, Some(p)) => Some(p),
        (true, None) => return domain("include_incident requires a pulse"),
        (false, _) => None,
    };
    let values = trace
        .grid_ps
        .iter()
        .zip(&trace.d_cos_theta_dt)
        .map(|(&t, &d)| incident.map_or(T::zero(), |p| p.field_at(t)) - spec.alpha * d)
        .collect();
    Signal::new(trace.grid_ps.clone(), values)
}

/// Predicted echo period 1/(2cB_e) in ps, centrifugal distortion neglected.
pub fn echo_spacing<T: Real>(molecule: &MoleculeSpec<T>) -> Result<T> {
    let b = molecule.constants.b_e;
    if !(b > T::zero()) {
        return domain(format!("B_e must be > 0, got {b}"));
    }
    Ok(T::one() / (T::lit(2.0 * CODATA_2018.speed_of_light * 1e-12) * b))
}

/// α = xNμ₀/(2cε₀V) for an ideal gas, in kV·cm⁻¹·ps.
pub fn alpha_from_cell<T: Real>(molecule: &MoleculeSpec<T>, length_cm: T, pressure_bar: T, temperature_k: T) -> Result<T> {
    const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;
    const EPSILON_0: f64 = 8.854_187_812_8e-12;
    const COULOMB_METRE_PER_DEBYE: f64 = 3.335_640_951_981_52e-30;
    if !(length_cm >= T::zero()) || !(pressure_bar >= T::zero()) || !(temperature_k > T::zero()) {
        return domain("cell length and pressure must be >= 0 and temperature > 0");
    }
    let density = pressure_bar * T::lit(1e5) / (T::lit(BOLTZMANN_J_PER_K) * temperature_k);
    let mu = molecule.dipole_debye * T::lit(COULOMB_METRE_PER_DEBYE);
    let c = T::lit(CODATA_2018.speed_of_light * 1e-2);
    let si = length_cm * T::lit(1e-2) * density * mu / (T::lit(2.0 * EPSILON_0) * c);
    // V/m·s → kV/cm·ps
    Ok(si * T::lit(1e7))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralReport {
    pub max_deviation: f64,
    pub samples: usize,
    pub dt_ps: f64,
    pub t_start_ps: f64,
    pub t_end_ps: f64,
}

fn uniform_step<T: Real>(grid: &[T]) -> Result<T> {
    if grid.len() < 4 {
        return domain("spectral check needs at least 4 samples");
    }
    check_increasing(grid, "trace grid")?;
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / T::from_count(n - 1);
    let tol = h * T::lit(1e-6);
    if grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > tol) {
        return domain("spectral check requires a uniform grid");
    }
    Ok(h)
}

fn forward<T: Real>(values: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Signed angular frequency of DFT bin k, rad/ps.
fn bin_frequency<T: Real>(k: usize, n: usize, h: T) -> T {
    let kk = if 2 * k <= n { k as f64 } else { k as f64 - n as f64 };
    T::lit(std::f64::consts::TAU * kk / n as f64) / h
}

/// Compares the transform of the derivative channel with iω times the
/// transform of ⟨cos θ⟩.
///
/// The forward transform here is Σ f e^{−iωt}, under which d/dt ↔ +iω; with
/// the e^{+iωt} convention the same identity reads −iω. The Nyquist bin, whose
/// frequency sign is ambiguous, is excluded.
pub fn spectral_derivative_check<T: Real>(trace: &OrientationTrace<T>) -> Result<SpectralReport> {
    let h = uniform_step(&trace.grid_ps)?;
    let f = &trace.cos_theta;
    let d = &trace.d_cos_theta_dt;
    let n = f.len();
    let peak_f = f.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let peak_d = d.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let tiny = T::lit(1e-6);
    for (name, v, peak) in [("orientation", f, peak_f), ("derivative", d, peak_d)] {
        if v[0].abs() > tiny * peak || v[n - 1].abs() > tiny * peak {
            return domain(format!(
                "{name} channel has not decayed below 1e-6 of its peak at the grid ends; extend the grid"
            ));
        }
    }
    let report = |max_deviation: f64| SpectralReport {
        max_deviation,
        samples: n,
        dt_ps: h.as_f64(),
        t_start_ps: trace.grid_ps[0].as_f64(),
        t_end_ps: trace.grid_ps[n - 1].as_f64(),
    };
    if peak_f == T::zero() && peak_d == T::zero() {
        return Ok(report(0.0));
    }
    let ff = forward(f);
    let fd = forward(d);
    let mut worst = T::zero();
    let mut scale = T::zero();
    for k in 0..n {
        if n % 2 == 0 && k == n / 2 {
            continue;
        }
        let w = bin_frequency(k, n, h);
        let expected = ff[k] * Complex::new(T::zero(), w);
        worst = worst.max((fd[k] - expected).norm());
        scale = scale.max(expected.norm());
    }
    if scale == T::zero() {
        return Ok(report(worst.as_f64()));
    }
    Ok(report((worst / scale).as_f64()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationOrderReport {
    /// α at which the largest exponent |z(ω)| reaches `max_exponent`.
    pub alpha: f64,
    pub max_exponent: f64,
    pub deviation: f64,
    pub deviation_half: f64,
    /// deviation / deviation_half; 4 for a second-order discrepancy.
    pub ratio: f64,
}

/// Relative gap ‖E_exp − E_first‖/‖E₀‖ between full exponential propagation
/// E₀(ω)e^{z(ω)} and its first-order form E₀(ω)(1 + z(ω)).
///
/// z(ω) = −iωα C(ω)/E₀(ω) is built from the simulated orientation spectrum, so
/// that z·E₀ is exactly the first-order FID term. Bins where |E₀| falls below
/// 1e-3 of its maximum carry no incident field and are left out.
fn exponential_gap<T: Real>(e0: &[Complex<T>], c: &[Complex<T>], omega: &[T], alpha: T, keep: &[bool]) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for k in 0..e0.len() {
        den += e0[k].norm_sqr();
        if !keep[k] {
            continue;
        }
        let z = Complex::new(T::zero(), -omega[k] * alpha) * c[k] / e0[k];
        let exact = e0[k] * z.exp();
        let first = e0[k] * (Complex::new(T::one(), T::zero()) + z);
        num += (exact - first).norm_sqr();
    }
    (num / den).sqrt()
}

/// Validation-only comparison of first-order and exponential propagation at
/// two optical depths differing by a factor of two.
pub fn propagation_order_check<T: Real>(
    trace: &OrientationTrace<T>,
    pulse: &PulseSpec<T>,
    max_exponent: T,
) -> Result<PropagationOrderReport> {
    let h = uniform_step(&trace.grid_ps)?;
    if !(max_exponent > T::zero()) {
        return domain("max_exponent must be > 0");
    }
    let n = trace.len();
    let field: Vec<T> = trace.grid_ps.iter().map(|&t| pulse.field_at(t)).collect();
    let e0 = forward(&field);
    let c = forward(&trace.cos_theta);
    let omega: Vec<T> = (0..n).map(|k| bin_frequency(k, n, h)).collect();
    let e_max = e0.iter().fold(T::zero(), |a, z| a.max(z.norm()));
    if e_max == T::zero() {
        return domain("incident pulse vanishes on the trace grid");
    }
    let keep: Vec<bool> = e0.iter().map(|z| z.norm() >= T::lit(1e-3) * e_max).collect();
    let response = (0..n)
        .filter(|&k| keep[k])
        .fold(T::zero(), |a, k| a.max((c[k] / e0[k]).norm() * omega[k].abs()));
    if response == T::zero() {
        return domain("orientation response vanishes; nothing to propagate");
    }
    let alpha = max_exponent / response;
    let full = exponential_gap(&e0, &c, &omega, alpha, &keep);
    let half = exponential_gap(&e0, &c, &omega, alpha / T::lit(2.0), &keep);
    Ok(PropagationOrderReport {
        alpha: alpha.as_f64(),
        max_exponent: max_exponent.as_f64(),
        deviation: full.as_f64(),
        deviation_half: half.as_f64(),
        ratio: (full / half).as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::uniform_grid;
    use approx::assert_relative_eq;

    fn synthetic(grid: &[f64], f: impl Fn(f64) -> (f64, f64)) -> OrientationTrace<f64> {
        let (c, d) = grid.iter().map(|&t| f(t)).unzip();
        OrientationTrace {
            grid_ps: grid.to_vec(),
            cos_theta: c,
            d_cos_theta_dt: d,
        }
    }

    #[test]
    fn fid_is_minus_alpha_derivative() {
        let grid = uniform_grid(0.0, 10.0, 0.5).unwrap();
        let tr = synthetic(&grid, |t| (t.sin(), t.cos()));
        let s = fid_signal(&tr, &FidSpec { alpha: 2.5, include_incident: false }, None).unwrap();
        for (v, t) in s.values.iter().zip(&grid) {
            assert_eq!(*v, -2.5 * t.cos());
        }
    }

    #[test]
    fn constant_orientation_emits_nothing() {
        let grid = uniform_grid(0.0, 10.0, 0.5).unwrap();
        let tr = synthetic(&grid, |_| (0.3, 0.0));
        let s = fid_signal(&tr, &FidSpec::default(), None).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_in_alpha() {
        let grid = uniform_grid(0.0, 10.0, 0.25).unwrap();
        let tr = synthetic(&grid, |t| ((0.7 * t).sin(), 0.7 * (0.7 * t).cos()));
        let a = fid_signal(&tr, &FidSpec { alpha: 1.0, include_incident: false }, None).unwrap();
        let b = fid_signal(&tr, &FidSpec { alpha: 4.0, include_incident: false }, None).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(4.0 * x, *y);
        }
    }

    #[test]
    fn incident_field_is_added() {
        let pulse = PulseSpec::new(10.0, 1.0).unwrap();
        let grid = uniform_grid(-2.0, 2.0, 0.1).unwrap();
        let tr = OrientationTrace::zeros(grid.clone());
        let spec = FidSpec { alpha: 1.0, include_incident: true };
        let s = fid_signal(&tr, &spec, Some(&pulse)).unwrap();
        for (v, t) in s.values.iter().zip(&grid) {
            assert_eq!(*v, pulse.field_at(*t));
        }
        assert!(fid_signal(&tr, &spec, None).is_err());
    }

    #[test]
    fn missing_derivative_channel() {
        let mut tr = OrientationTrace::zeros(vec![0.0, 1.0, 2.0]);
        tr.d_cos_theta_dt.clear();
        assert!(fid_signal(&tr, &FidSpec::default(), None).is_err());
        assert!(FidSpec { alpha: -1.0, include_incident: false }.validate().is_err());
    }

    #[test]
    fn fid_integrates_to_orientation_change() {
        // one full period, so ⟨cos θ⟩ returns to its starting value
        let n = 400;
        let p = 7.0;
        let w = std::f64::consts::TAU / p;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * p / n as f64).collect();
        let tr = synthetic(&grid, |t| (1e-3 * (w * t).sin() + 2e-4 * (3.0 * w * t).cos(), 1e-3 * w * (w * t).cos() - 6e-4 * w * (3.0 * w * t).sin()));
        let s = fid_signal(&tr, &FidSpec { alpha: 5.75, include_incident: false }, None).unwrap();
        let h = p / n as f64;
        let integral: f64 = s.values.windows(2).map(|v| 0.5 * h * (v[0] + v[1])).sum();
        assert!(integral.abs() < 1e-12 * 1.2e-3 * p);
    }

    #[test]
    fn echo_spacing_of_ch3i() {
        let mol = MoleculeSpec::<f64>::methyl_iodide();
        let dt = echo_spacing(&mol).unwrap();
        assert_relative_eq!(dt, 1.0 / (2.0 * 2.99792458e10 * 0.25098) * 1e12, max_relative = 1e-14);
        assert_relative_eq!(dt, 66.45, max_relative = 1e-3);
        let mut fast = mol;
        fast.constants.b_e *= 2.0;
        assert_relative_eq!(echo_spacing(&fast).unwrap(), dt / 2.0, max_relative = 1e-14);
        fast.constants.b_e = 0.0;
        assert!(echo_spacing(&fast).is_err());
    }

    #[test]
    fn alpha_for_a_few_centimetres_of_gas() {
        let mol = MoleculeSpec::<f64>::methyl_iodide();
        let a = alpha_from_cell(&mol, 4.0, 0.35, 298.0).unwrap();
        // 4 cm × 8.51e24 m⁻³ × 5.472e-30 C·m / (2 c ε₀), in kV/cm·ps
        assert_relative_eq!(a, 3.51e3, max_relative = 1e-2);
        assert_relative_eq!(alpha_from_cell(&mol, 8.0, 0.35, 298.0).unwrap(), 2.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn damped_cosine_passes_spectral_check() {
        let grid = uniform_grid(0.0, 400.0, 0.01).unwrap();
        let (w, t0) = (3.0, 150.0);
        let tr = synthetic(&grid, |t| {
            let e = (-((t - t0) / 25.0).powi(2)).exp();
            let de = -2.0 * (t - t0) / 625.0 * e;
            ((w * t).cos() * e, -w * (w * t).sin() * e + (w * t).cos() * de)
        });
        let r = spectral_derivative_check(&tr).unwrap();
        assert!(r.max_deviation < 1e-8, "{}", r.max_deviation);
    }

    #[test]
    fn zero_trace_has_zero_deviation() {
        let grid = uniform_grid(0.0, 10.0, 0.01).unwrap();
        let r = spectral_derivative_check(&OrientationTrace::zeros(grid)).unwrap();
        assert_eq!(r.max_deviation, 0.0);
    }

    #[test]
    fn spectral_check_preconditions() {
        let tr = synthetic(&[0.0, 1.0, 3.0, 4.0, 5.0], |_| (0.0, 0.0));
        assert!(spectral_derivative_check(&tr).is_err());
        let grid = uniform_grid(0.0, 10.0, 0.01).unwrap();
        let tr = synthetic(&grid, |t| (t.cos(), -t.sin()));
        assert!(spectral_derivative_check(&tr).is_err());
    }

    #[test]
    fn wrong_derivative_is_detected() {
        let grid = uniform_grid(0.0, 400.0, 0.01).unwrap();
        let tr = synthetic(&grid, |t| {
            let e = (-((t - 200.0) / 25.0).powi(2)).exp();
            ((3.0 * t).cos() * e, -3.3 * (3.0 * t).sin() * e)
        });
        assert!(spectral_derivative_check(&tr).unwrap().max_deviation > 1e-2);
    }

    #[test]
    fn propagation_gap_is_second_order() {
        let pulse = PulseSpec::new(100.0, 1.0).unwrap();
        let grid = uniform_grid(-5.0, 300.0, 0.01).unwrap();
        // a damped response driven by the pulse: sample a smooth causal kernel
        let tr = synthetic(&grid, |t| {
            if t < -2.0 {
                (0.0, 0.0)
            } else {
                let x = t + 2.0;
                let e = (-x / 40.0).exp() * (1.0 - (-x * x).exp());
                (1e-3 * (2.0 * x).sin() * e, 0.0)
            }
        });
        let r = propagation_order_check(&tr, &pulse, 0.2).unwrap();
        assert!((r.ratio - 4.0).abs() < 0.5, "{r:?}");
    }
}
