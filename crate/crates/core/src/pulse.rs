//! Single-cycle THz pulse built from the two lowest even Hermite functions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::io::write_columns;
use crate::numeric::{check_increasing, parabolic_peak};
use crate::scalar::Real;

/// Analytic THz field E₀(t), amplitude in kV/cm and times in ps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec<T> {
    /// Amplitude parameter E₁.
    pub amplitude_kv_cm: T,
    /// Duration parameter τ; σ follows from 16 ln2 σ² = τ².
    pub tau_ps: T,
    /// Pulse center t₀.
    pub t0_ps: T,
    /// Field is exactly zero beyond this many σ from the center.
    pub support_half_width: T,
}

/// σ = τ / √(16 ln 2).
pub fn sigma_from_tau<T: Real>(tau_ps: T) -> Result<T> {
    if !(tau_ps > T::zero()) || !tau_ps.is_finite() {
        return domain(format!("pulse.tau must be > 0, got {tau_ps}"));
    }
    Ok(tau_ps / (T::lit(16.0) * T::LN_2()).sqrt())
}

/// D_n = (2ⁿ n! √π)^(-1/2)
fn hermite_norm<T: Real>(n: u32) -> T {
    let fact: f64 = (1..=n).map(f64::from).product();
    T::lit((2f64.powi(n as i32) * fact * std::f64::consts::PI.sqrt()).powf(-0.5))
}

impl<T: Real> PulseSpec<T> {
    pub fn new(amplitude_kv_cm: T, tau_ps: T) -> Result<Self> {
        let spec = Self {
            amplitude_kv_cm,
            tau_ps,
            t0_ps: T::zero(),
            support_half_width: T::lit(6.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        sigma_from_tau(self.tau_ps)?;
        if !self.amplitude_kv_cm.is_finite() || !self.t0_ps.is_finite() {
            return domain("pulse amplitude and center must be finite");
        }
        if !(self.support_half_width >= T::lit(5.0)) {
            return domain(format!(
                "pulse.support_half_width must be >= 5, got {}",
                self.support_half_width
            ));
        }
        Ok(())
    }

    pub fn sigma_ps(&self) -> T {
        self.tau_ps / (T::lit(16.0) * T::LN_2()).sqrt()
    }

    /// Interval outside which the field vanishes identically.
    pub fn window(&self) -> (T, T) {
        let half = self.support_half_width * self.sigma_ps();
        (self.t0_ps - half, self.t0_ps + half)
    }

    /// Field value per unit E₁ at reduced time u = (t − t₀)/σ.
    fn shape(u: T) -> T {
        let h2 = T::lit(4.0) * u * u - T::lit(2.0);
        let h0 = T::one();
        let d3: T = hermite_norm(3);
        let d1: T = hermite_norm(1);
        T::lit(0.5) * (-u * u / T::lit(2.0)).exp() * (-T::lit(3.0) * d3 * h2 + d1 * h0)
    }

    /// E₀(t) in kV/cm.
    pub fn field_at(&self, t_ps: T) -> T {
        let u = (t_ps - self.t0_ps) / self.sigma_ps();
        if u.abs() > self.support_half_width {
            return T::zero();
        }
        self.amplitude_kv_cm * Self::shape(u)
    }

    pub fn sample(&self, grid_ps: &[T]) -> Result<PulseSamples<T>> {
        if grid_ps.is_empty() {
            return domain("pulse sampling grid is empty");
        }
        check_increasing(grid_ps, "pulse sampling grid")?;
        let field: Vec<T> = grid_ps.iter().map(|&t| self.field_at(t)).collect();
        let max = refined_extremum(&field, false);
        let min = refined_extremum(&field, true);
        Ok(PulseSamples {
            times_ps: grid_ps.to_vec(),
            field_kv_cm: field,
            peak_to_peak_kv_cm: max - min,
        })
    }

    /// Analytic peak-to-peak excursion for E₁ = 1.
    ///
    /// The shape is e^(−u²/2)(a u² + b); besides u = 0 it has extrema at
    /// u² = 2 − b/a.
    pub fn unit_peak_to_peak() -> T {
        let d3: T = hermite_norm(3);
        let d1: T = hermite_norm(1);
        let a = -T::lit(12.0) * d3;
        let b = T::lit(6.0) * d3 + d1;
        let u2 = T::lit(2.0) - b / a;
        let side = Self::shape(u2.sqrt());
        (Self::shape(T::zero()) - side).abs()
    }

    /// E₁ that produces the requested peak-to-peak field.
    pub fn amplitude_for_peak_to_peak(peak_to_peak_kv_cm: T) -> T {
        peak_to_peak_kv_cm / Self::unit_peak_to_peak()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSamples<T> {
    pub times_ps: Vec<T>,
    pub field_kv_cm: Vec<T>,
    /// Sampled max − min, both refined by a three-point parabola.
    pub peak_to_peak_kv_cm: T,
}

impl<T: Real> PulseSamples<T> {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_columns(out, &["t_ps", "field_kV_cm"], &[&self.times_ps, &self.field_kv_cm], None)
    }
}

fn refined_extremum<T: Real>(values: &[T], minimum: bool) -> T {
    let sign = if minimum { -T::one() } else { T::one() };
    let (idx, _) = values
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| {
            if sign * v > bv {
                (i, sign * v)
            } else {
                (bi, bv)
            }
        });
    if idx == 0 || idx + 1 >= values.len() {
        return values[idx];
    }
    let (_, peak) = parabolic_peak(sign * values[idx - 1], sign * values[idx], sign * values[idx + 1]);
    sign * peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(e1: f64, tau: f64) -> PulseSpec<f64> {
        PulseSpec::new(e1, tau).unwrap()
    }

    #[test]
    fn sigma_relation() {
        assert_relative_eq!(sigma_from_tau(1.0).unwrap(), 0.300_281, max_relative = 2e-6);
        assert_eq!(sigma_from_tau(2.0).unwrap(), 2.0 * sigma_from_tau(1.0).unwrap());
        assert!(sigma_from_tau(0.0f64).is_err());
        assert!(sigma_from_tau(-1.0f64).is_err());
    }

    #[test]
    fn hermite_normalisations() {
        assert_relative_eq!(hermite_norm::<f64>(3), 0.108_415, max_relative = 1e-5);
        assert_relative_eq!(hermite_norm::<f64>(1), 0.531_126, max_relative = 1e-5);
    }

    #[test]
    fn value_at_center() {
        let d3 = (48.0 * std::f64::consts::PI.sqrt()).powf(-0.5);
        let d1 = (2.0 * std::f64::consts::PI.sqrt()).powf(-0.5);
        let p = spec(1.0, 1.0);
        assert_relative_eq!(p.field_at(0.0), 0.5 * (6.0 * d3 + d1), max_relative = 1e-14);
        assert_relative_eq!(p.field_at(0.0), 0.59081, max_relative = 1e-5);
    }

    #[test]
    fn zero_outside_support() {
        let p = spec(3.0, 1.0);
        assert_eq!(p.field_at(10.0 * p.sigma_ps()), 0.0);
        assert_eq!(p.field_at(-6.01 * p.sigma_ps()), 0.0);
        assert!(p.field_at(5.9 * p.sigma_ps()) != 0.0);
    }

    #[test]
    fn linear_in_amplitude() {
        let a = spec(1.0, 1.3);
        let b = spec(2.0, 1.3);
        for i in -400..=400 {
            let t = i as f64 * 0.005;
            assert_eq!(b.field_at(t), 2.0 * a.field_at(t));
        }
    }

    #[test]
    fn single_point_grid() {
        let p = spec(1.0, 1.0);
        let s = p.sample(&[0.0]).unwrap();
        assert_eq!(s.field_kv_cm, vec![p.field_at(0.0)]);
    }

    #[test]
    fn rejects_bad_grids() {
        let p = spec(1.0, 1.0);
        assert!(p.sample(&[]).is_err());
        assert!(p.sample(&[1.0, 0.5, 0.0]).is_err());
    }

    #[test]
    fn peak_to_peak_calibration() {
        let e1 = PulseSpec::<f64>::amplitude_for_peak_to_peak(9.4);
        let p = spec(e1, 1.0);
        let grid: Vec<f64> = (-3000..=3000).map(|i| i as f64 * 1e-3).collect();
        let s = p.sample(&grid).unwrap();
        assert!((s.peak_to_peak_kv_cm - 9.4).abs() < 1e-6, "{}", s.peak_to_peak_kv_cm);
    }

    #[test]
    fn shape_is_not_zero_area() {
        // The printed Hermite mix keeps a net DC component.
        let p = spec(1.0, 1.0);
        let h = 1e-4;
        let area: f64 = (-40_000..=40_000).map(|i| p.field_at(i as f64 * h) * h).sum();
        assert!(area.abs() > 1e-2);
    }

    #[test]
    fn window_matches_support() {
        let mut p = spec(1.0, 1.0);
        p.t0_ps = 2.0;
        let (a, b) = p.window();
        assert_relative_eq!(b - a, 12.0 * p.sigma_ps(), max_relative = 1e-14);
        assert_relative_eq!(0.5 * (a + b), 2.0, max_relative = 1e-14);
        p.support_half_width = 4.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn even_about_center(s in 0.0f64..3.0, t0 in -5.0f64..5.0) {
            let mut p = spec(1.0, 1.0);
            p.t0_ps = t0;
            let a = p.field_at(t0 + s);
            let b = p.field_at(t0 - s);
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }

        #[test]
        fn tau_only_stretches_time(t in -4.0f64..4.0) {
            let p1 = spec(1.0, 1.0);
            let p2 = spec(1.0, 2.0);
            prop_assert!((p2.field_at(t) - p1.field_at(t / 2.0)).abs() < 1e-14);
        }
    }
}
