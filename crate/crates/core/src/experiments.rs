//! Numerical studies built on the simulator: revival detection, amplitude and
//! duration scans, and least-squares comparison with measured traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    nondissipative_orientation, OrientationTrace, PropagationSpec, RelaxationSpec,
};
use crate::error::{domain, Error, Result};
use crate::fid::{echo_spacing, fid_signal, FidSpec, Signal};
use crate::numeric::{check_increasing, interpolate, parabolic_peak, uniform_grid};
use crate::pulse::PulseSpec;
use crate::rotor::MoleculeSpec;
use crate::scalar::Real;
use crate::thermal::{enumerate_members, EnsembleSpec};

/// Output sampling, ps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub t_start_ps: T,
    pub t_end_ps: T,
    pub dt_ps: T,
}

impl<T: Real> Default for GridSpec<T> {
    fn default() -> Self {
        Self {
            t_start_ps: T::zero(),
            t_end_ps: T::lit(160.0),
            dt_ps: T::lit(0.01),
        }
    }
}

impl<T: Real> GridSpec<T> {
    pub fn points(&self) -> Result<Vec<T>> {
        if !(self.t_end_ps > self.t_start_ps) {
            return domain(format!(
                "grid.t_end ({}) must exceed grid.t_start ({})",
                self.t_end_ps, self.t_start_ps
            ));
        }
        if !(self.dt_ps > T::zero()) {
            return domain(format!("grid.dt_out must be > 0, got {}", self.dt_ps));
        }
        uniform_grid(self.t_start_ps, self.t_end_ps, self.dt_ps)
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig<T> {
    pub molecule: MoleculeSpec<T>,
    pub ensemble: EnsembleSpec<T>,
    pub pulse: PulseSpec<T>,
    pub relaxation: RelaxationSpec<T>,
    pub propagation: PropagationSpec<T>,
    pub grid: GridSpec<T>,
    pub fid: FidSpec<T>,
}

impl<T: Real> Default for SimulationConfig<T> {
    fn default() -> Self {
        Self {
            molecule: MoleculeSpec::methyl_iodide(),
            ensemble: EnsembleSpec::default(),
            pulse: PulseSpec {
                amplitude_kv_cm: T::lit(100.0),
                tau_ps: T::one(),
                t0_ps: T::zero(),
                support_half_width: T::lit(6.0),
            },
            relaxation: RelaxationSpec::default(),
            propagation: PropagationSpec::default(),
            grid: GridSpec::default(),
            fid: FidSpec::default(),
        }
    }
}

impl<T: Real> SimulationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.molecule.validate()?;
        self.ensemble.validate()?;
        self.pulse.validate()?;
        self.relaxation.validate()?;
        self.propagation.validate()?;
        self.fid.validate()?;
        self.grid.points()?;
        Ok(())
    }

    /// ⟨cos θ⟩ without relaxation on the configured grid.
    pub fn orientation_without_relaxation(&self) -> Result<OrientationTrace<T>> {
        self.validate()?;
        let members = enumerate_members(&self.molecule, &self.ensemble)?;
        nondissipative_orientation(
            &self.molecule,
            &members,
            self.ensemble.j_max,
            &self.pulse,
            &self.grid.points()?,
            &self.propagation,
        )
    }

    /// Relaxed orientation trace and the FID signal built from it.
    pub fn simulate(&self) -> Result<(OrientationTrace<T>, Signal<T>)> {
        let bare = self.orientation_without_relaxation()?;
        self.finish(&bare)
    }

    /// Applies relaxation and builds the FID from a relaxation-free trace.
    pub fn finish(&self, bare: &OrientationTrace<T>) -> Result<(OrientationTrace<T>, Signal<T>)> {
        let trace = bare.with_relaxation(&self.relaxation, self.pulse.t0_ps);
        let signal = fid_signal(&trace, &self.fid, Some(&self.pulse))?;
        Ok((trace, signal))
    }

    /// Uniform 2 fs grid from before the pulse until relaxation has damped the
    /// response by 1e-7, as the spectral check requires.
    pub fn spectral_grid(&self) -> Result<GridSpec<T>> {
        let rate = self.relaxation.rate_per_ps();
        if !(rate > T::zero()) {
            return domain("the spectral check needs relaxation (pressure > 0) to bring the trace to zero");
        }
        let start = (self.pulse.window().0 - T::one()).floor();
        let span = (T::lit(1e7).ln() / rate / T::lit(10.0)).ceil() * T::lit(10.0);
        Ok(GridSpec {
            t_start_ps: start,
            t_end_ps: self.pulse.t0_ps + span,
            dt_ps: T::lit(0.01),
        })
    }
}

/// A refined extremum of |values|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak<T> {
    pub time_ps: T,
    pub magnitude: T,
}

/// Largest |value| with t in [lo, hi], refined by a parabola through the
/// discrete maximum and its neighbours.
pub fn peak_in_window<T: Real>(grid: &[T], values: &[T], lo: T, hi: T) -> Option<Peak<T>> {
    let first = grid.partition_point(|&t| t < lo);
    let last = grid.partition_point(|&t| t <= hi);
    if first >= last {
        return None;
    }
    let mut best = first;
    for i in first..last {
        if values[i].abs() > values[best].abs() {
            best = i;
        }
    }
    let (t, v) = (grid[best], values[best].abs());
    if best == 0 || best + 1 >= grid.len() {
        return Some(Peak { time_ps: t, magnitude: v });
    }
    let (hl, hr) = (t - grid[best - 1], grid[best + 1] - t);
    if ((hl - hr).abs()) > T::lit(1e-6) * hl {
        return Some(Peak { time_ps: t, magnitude: v });
    }
    let (offset, value) = parabolic_peak(values[best - 1].abs(), v, values[best + 1].abs());
    Some(Peak {
        time_ps: t + offset * hl,
        magnitude: value.max(v),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Revival<T> {
    /// k = 1 for the first revival.
    pub order: usize,
    /// `None` when the window is off-grid or the peak is below the noise floor.
    pub peak: Option<Peak<T>>,
}

/// Looks for the k-th revival in [origin + k·period ± period/4], k = 1..=n.
pub fn detect_revivals<T: Real>(
    grid: &[T],
    values: &[T],
    expected_period: T,
    n: usize,
    origin: T,
    noise_floor: T,
) -> Result<Vec<Revival<T>>> {
    if grid.len() != values.len() {
        return domain("grid and values differ in length");
    }
    check_increasing(grid, "revival grid")?;
    if !(expected_period > T::zero()) {
        return domain(format!("expected period must be > 0, got {expected_period}"));
    }
    let quarter = expected_period / T::lit(4.0);
    Ok((1..=n)
        .map(|order| {
            let centre = origin + T::from_count(order) * expected_period;
            let peak = peak_in_window(grid, values, centre - quarter, centre + quarter)
                .filter(|p| p.magnitude > noise_floor);
            Revival { order, peak }
        })
        .collect())
}

/// Peak |⟨cos θ⟩| at delay zero and at the first two revivals.
pub fn channel_peaks<T: Real>(trace: &OrientationTrace<T>, molecule: &MoleculeSpec<T>, origin: T) -> Result<[T; 3]> {
    let period = echo_spacing(molecule)?;
    let quarter = period / T::lit(4.0);
    let mut out = [T::zero(); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let centre = origin + T::from_count(k) * period;
        *slot = peak_in_window(&trace.grid_ps, &trace.cos_theta, centre - quarter, centre + quarter)
            .map(|p| p.magnitude)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "output grid does not cover the window around {} ps",
                    centre
                ))
            })?;
    }
    Ok(out)
}

pub const CHANNEL_NAMES: [&str; 3] = ["delay_zero", "first_revival", "second_revival"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel<T> {
    pub name: String,
    pub peaks: Vec<T>,
    /// Least-squares slope of a line through the origin (amplitude scans).
    pub slope: Option<T>,
    /// Undefined for fewer than two values or a constant channel.
    pub r_squared: Option<T>,
    /// Parameter value of the largest peak (duration scans).
    pub argmax: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult<T> {
    pub parameter: String,
    pub unit: String,
    pub values: Vec<T>,
    pub channels: Vec<Channel<T>>,
}

/// Slope and R² of y = a·x.
pub fn fit_through_origin<T: Real>(x: &[T], y: &[T]) -> (Option<T>, Option<T>) {
    let sxx = x.iter().fold(T::zero(), |a, &v| a + v * v);
    if x.is_empty() || sxx == T::zero() {
        return (None, None);
    }
    let sxy = x.iter().zip(y).fold(T::zero(), |a, (&u, &v)| a + u * v);
    let slope = sxy / sxx;
    if x.len() < 2 {
        return (Some(slope), None);
    }
    let mean = y.iter().fold(T::zero(), |a, &v| a + v) / T::from_count(y.len());
    let ss_tot = y.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    let ss_res = x
        .iter()
        .zip(y)
        .fold(T::zero(), |a, (&u, &v)| a + (v - slope * u) * (v - slope * u));
    let r2 = (ss_tot > T::zero()).then(|| T::one() - ss_res / ss_tot);
    (Some(slope), r2)
}

fn check_scan_values<T: Real>(values: &[T], what: &str) -> Result<()> {
    if values.is_empty() {
        return domain(format!("{what} scan needs at least one value"));
    }
    if values.iter().any(|v| !(*v > T::zero())) {
        return domain(format!("{what} values must be positive"));
    }
    check_increasing(values, &format!("{what} values"))
}

/// Runs one simulation per value, in parallel, gathering results in order.
fn scan<T: Real>(
    base: &SimulationConfig<T>,
    values: &[T],
    apply: impl Fn(&mut SimulationConfig<T>, T) + Sync,
    progress: &(dyn Fn(usize, T) + Sync),
) -> Result<Vec<[T; 3]>> {
    values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = base.clone();
            apply(&mut cfg, v);
            let (trace, _) = cfg.simulate()?;
            let peaks = channel_peaks(&trace, &cfg.molecule, cfg.pulse.t0_ps)?;
            progress(i, v);
            Ok(peaks)
        })
        .collect()
}

fn transpose<T: Real>(peaks: &[[T; 3]]) -> Vec<Vec<T>> {
    (0..3).map(|c| peaks.iter().map(|p| p[c]).collect()).collect()
}

/// Channel peaks versus E₁, with a through-origin linear fit per channel.
pub fn scan_amplitude<T: Real>(
    base: &SimulationConfig<T>,
    amplitudes: &[T],
    progress: &(dyn Fn(usize, T) + Sync),
) -> Result<ScanResult<T>> {
    check_scan_values(amplitudes, "amplitude")?;
    let peaks = scan(base, amplitudes, |c, v| c.pulse.amplitude_kv_cm = v, progress)?;
    let channels = transpose(&peaks)
        .into_iter()
        .zip(CHANNEL_NAMES)
        .map(|(p, name)| {
            let (slope, r_squared) = fit_through_origin(amplitudes, &p);
            Channel {
                name: name.into(),
                peaks: p,
                slope,
                r_squared,
                argmax: None,
            }
        })
        .collect();
    Ok(ScanResult {
        parameter: "pulse.e1".into(),
        unit: "kV/cm".into(),
        values: amplitudes.to_vec(),
        channels,
    })
}

/// Channel peaks versus τ, with the maximizing τ per channel.
pub fn scan_tau<T: Real>(
    base: &SimulationConfig<T>,
    taus: &[T],
    progress: &(dyn Fn(usize, T) + Sync),
) -> Result<ScanResult<T>> {
    check_scan_values(taus, "tau")?;
    let peaks = scan(base, taus, |c, v| c.pulse.tau_ps = v, progress)?;
    let channels = transpose(&peaks)
        .into_iter()
        .zip(CHANNEL_NAMES)
        .map(|(p, name)| {
            let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            Channel {
                name: name.into(),
                argmax: Some(taus[best]),
                peaks: p,
                slope: None,
                r_squared: None,
            }
        })
        .collect();
    Ok(ScanResult {
        parameter: "pulse.tau".into(),
        unit: "ps".into(),
        values: taus.to_vec(),
        channels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions<T> {
    /// Search a delay offset in [−s, s] ps before the linear fit. Off by default.
    pub max_time_shift_ps: Option<T>,
}

impl<T> Default for FitOptions<T> {
    fn default() -> Self {
        Self { max_time_shift_ps: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub scale: T,
    pub offset: T,
    pub residual_rms: T,
    /// Data were read at t + time_shift_ps.
    pub time_shift_ps: T,
    pub samples: usize,
}

/// Model samples paired with data interpolated at t + shift.
fn paired<T: Real>(model: &Signal<T>, data: &Signal<T>, shift: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut t = Vec::new();
    let mut m = Vec::new();
    let mut d = Vec::new();
    for (&ti, &mi) in model.grid_ps.iter().zip(&model.values) {
        if let Some(di) = interpolate(&data.grid_ps, &data.values, ti + shift) {
            t.push(ti);
            m.push(mi);
            d.push(di);
        }
    }
    (t, m, d)
}

fn linear_fit<T: Real>(m: &[T], d: &[T]) -> Result<(T, T, T)> {
    if m.len() < 8 {
        return domain(format!("only {} overlapping samples; at least 8 are needed", m.len()));
    }
    let n = T::from_count(m.len());
    let mm = m.iter().fold(T::zero(), |a, &v| a + v) / n;
    let dm = d.iter().fold(T::zero(), |a, &v| a + v) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in m.iter().zip(d) {
        sxx += (x - mm) * (x - mm);
        sxy += (x - mm) * (y - dm);
    }
    if sxx == T::zero() {
        return Err(Error::DegenerateFit("model has zero variance over the overlap".into()));
    }
    let scale = sxy / sxx;
    let offset = dm - scale * mm;
    let ss = m
        .iter()
        .zip(d)
        .fold(T::zero(), |a, (&x, &y)| a + (scale * x + offset - y) * (scale * x + offset - y));
    Ok((scale, offset, (ss / n).sqrt()))
}

/// Least-squares scale and vertical offset mapping `model` onto `data`.
pub fn fit_trace<T: Real>(model: &Signal<T>, data: &Signal<T>, options: &FitOptions<T>) -> Result<FitResult<T>> {
    check_increasing(&model.grid_ps, "model grid")?;
    check_increasing(&data.grid_ps, "data grid")?;
    let at = |shift: T| -> Result<FitResult<T>> {
        let (_, m, d) = paired(model, data, shift);
        let (scale, offset, residual_rms) = linear_fit(&m, &d)?;
        Ok(FitResult {
            scale,
            offset,
            residual_rms,
            time_shift_ps: shift,
            samples: m.len(),
        })
    };
    let Some(limit) = options.max_time_shift_ps else {
        return at(T::zero());
    };
    if !(limit > T::zero()) {
        return domain("max_time_shift_ps must be > 0");
    }
    // golden-section search; shifts where the fit fails count as infinitely bad
    let cost = |s: T| at(s).map_or(T::infinity(), |r| r.residual_rms);
    let g = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (-limit, limit);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while (b - a) > T::lit(1e-6) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
    }
    let best = (a + b) / T::lit(2.0);
    let zero = at(T::zero()).ok();
    let shifted = at(best)?;
    Ok(match zero {
        Some(z) if z.residual_rms <= shifted.residual_rms => z,
        _ => shifted,
    })
}

/// Columns (time, scale·model + offset, data) over the fitted overlap.
pub fn overlay<T: Real>(model: &Signal<T>, data: &Signal<T>, fit: &FitResult<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (t, m, d) = paired(model, data, fit.time_shift_ps);
    let scaled = m.iter().map(|&x| fit.scale * x + fit.offset).collect();
    (t, scaled, d)
}
