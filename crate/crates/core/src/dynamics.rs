//! Ensemble orientation dynamics.
//!
//! The thermal density operator is diagonal in |J,K,M⟩, so its evolution is the
//! weighted sum of pure-state evolutions, one per ensemble member. Each member
//! lives in a single (K, M) block and is integrated with classical RK4 while
//! the field is on. Amplitudes are kept in the interaction picture
//! c_J = e^{iE_J t} ψ_J, which removes the fast field-free phases from the
//! right-hand side; once the pulse is over they are constant and ⟨cos θ⟩(t)
//! is a finite sum of cosines evaluated in closed form.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::io::write_columns;
use crate::numeric::{check_increasing, pairwise_sum};
use crate::pulse::PulseSpec;
use crate::rotor::{build_block, energy, BlockOperators, MoleculeSpec};
use crate::scalar::Real;
use crate::thermal::{enumerate_members, EnsembleMember, EnsembleSpec};
use crate::units::{bar_to_atm, to_atomic, Quantity};

type C<T> = Complex<T>;

/// Effective collisional dephasing: everything is multiplied by e^{−(t−t₀)P/T₂}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSpec<T> {
    /// Pressure-normalized coherence time T₂ in ps·atm.
    pub t2_ps_atm: T,
    /// Cell pressure in bar; zero disables relaxation.
    pub pressure_bar: T,
}

impl<T: Real> Default for RelaxationSpec<T> {
    fn default() -> Self {
        Self {
            t2_ps_atm: T::lit(23.0),
            pressure_bar: T::lit(0.35),
        }
    }
}

impl<T: Real> RelaxationSpec<T> {
    pub fn none() -> Self {
        Self {
            pressure_bar: T::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t2_ps_atm > T::zero()) {
            return domain(format!("relaxation.t2 must be > 0, got {}", self.t2_ps_atm));
        }
        if !(self.pressure_bar >= T::zero()) {
            return domain(format!("relaxation.pressure must be >= 0, got {}", self.pressure_bar));
        }
        Ok(())
    }

    /// Decay rate P/T₂ in 1/ps, with P converted to atm.
    pub fn rate_per_ps(&self) -> T {
        bar_to_atm(self.pressure_bar) / self.t2_ps_atm
    }
}

/// Step control for the during-pulse integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec<T> {
    /// Largest RK4 step in ps.
    pub max_step_ps: T,
    /// Lower bound on the number of steps across the pulse window.
    pub min_steps: usize,
    /// Members start on a few levels around their initial J and the active
    /// window grows whenever an edge amplitude exceeds this value. `None`
    /// integrates on the whole block from the start.
    pub band_tolerance: Option<T>,
}

impl<T: Real> Default for PropagationSpec<T> {
    fn default() -> Self {
        Self {
            max_step_ps: T::lit(0.01),
            min_steps: 200,
            band_tolerance: Some(T::lit(1e-12)),
        }
    }
}

impl<T: Real> PropagationSpec<T> {
    /// Whole-block integration with the given step.
    pub fn full_block(max_step_ps: T) -> Self {
        Self {
            max_step_ps,
            band_tolerance: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_step_ps > T::zero()) || !self.max_step_ps.is_finite() {
            return domain(format!("propagation.dt must be > 0, got {}", self.max_step_ps));
        }
        if self.min_steps == 0 {
            return domain("propagation.min_steps must be positive");
        }
        Ok(())
    }
}

/// A member's interaction-picture amplitudes inside its block.
#[derive(Clone, Debug)]
pub struct BlockState<'a, T> {
    pub block: &'a BlockOperators<T>,
    /// c_J with ψ_J(t) = e^{−iE_J t} c_J, indexed like the block.
    pub amplitudes: Vec<C<T>>,
    /// Time of the state, ps.
    pub time_ps: T,
}

impl<T: Real> BlockState<'_, T> {
    pub fn norm_sqr(&self) -> T {
        self.amplitudes.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b)
    }

    /// Schrödinger-picture amplitudes at `time_ps`.
    pub fn schrodinger_amplitudes(&self) -> Result<Vec<C<T>>> {
        let t = to_atomic(self.time_ps, Quantity::TimePs)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&self.block.energies)
            .map(|(c, &e)| c * C::from_polar(T::one(), -e * t))
            .collect())
    }
}

/// ⟨cos θ⟩(t) samples and their time derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationTrace<T> {
    pub grid_ps: Vec<T>,
    pub cos_theta: Vec<T>,
    /// d⟨cos θ⟩/dt in 1/ps.
    pub d_cos_theta_dt: Vec<T>,
}

impl<T: Real> OrientationTrace<T> {
    pub fn zeros(grid_ps: Vec<T>) -> Self {
        let n = grid_ps.len();
        Self {
            grid_ps,
            cos_theta: vec![T::zero(); n],
            d_cos_theta_dt: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.grid_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_ps.is_empty()
    }

    /// Multiplies by e^{−(t−origin)·rate}, applying the product rule to the
    /// derivative channel.
    pub fn with_relaxation(&self, relaxation: &RelaxationSpec<T>, origin_ps: T) -> Self {
        let rate = relaxation.rate_per_ps();
        if rate == T::zero() {
            return self.clone();
        }
        let mut out = self.clone();
        for i in 0..self.len() {
            let f = (-(self.grid_ps[i] - origin_ps) * rate).exp();
            out.cos_theta[i] = self.cos_theta[i] * f;
            out.d_cos_theta_dt[i] = (self.d_cos_theta_dt[i] - rate * self.cos_theta[i]) * f;
        }
        out
    }

    pub fn peak_abs(&self) -> T {
        self.cos_theta.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn write_csv<W: Write>(&self, out: W, manifest: Option<&str>) -> Result<()> {
        write_columns(
            out,
            &["time_ps", "cos_theta", "dcos_dt_per_ps"],
            &[&self.grid_ps, &self.cos_theta, &self.d_cos_theta_dt],
            manifest,
        )
    }
}

// ---------------------------------------------------------------------------
// Step schedule and tables shared by every member of one run.

struct Schedule<T> {
    /// RK4 stage times in atomic units: 2i is node i, 2i+1 the midpoint to i+1.
    stage_au: Vec<T>,
    /// Output slot attached to each node, if any.
    node_output: Vec<Option<usize>>,
    max_step_ps: T,
}

impl<T: Real> Schedule<T> {
    fn steps(&self) -> usize {
        self.node_output.len() - 1
    }

    /// `outputs` are (slot, time) pairs inside the window, sorted by time.
    fn build(window: (T, T), outputs: &[(usize, T)], spec: &PropagationSpec<T>) -> Result<Self> {
        let (start, end) = window;
        let span = end - start;
        let h_max = spec.max_step_ps.min(span / T::from_count(spec.min_steps));

        let mut anchors: Vec<(T, Option<usize>)> = Vec::with_capacity(outputs.len() + 2);
        anchors.push((start, None));
        for &(slot, t) in outputs {
            let last = anchors.last_mut().unwrap();
            if t == last.0 {
                last.1 = Some(slot);
            } else {
                anchors.push((t, Some(slot)));
            }
        }
        if anchors.last().unwrap().0 < end {
            anchors.push((end, None));
        }

        let ps = T::lit(Quantity::TimePs.factor());
        let mut stage_au = vec![start * ps];
        let mut node_output = vec![anchors[0].1];
        for pair in anchors.windows(2) {
            let (a, b) = (pair[0].0, pair[1].0);
            let n = ((b - a) / h_max).ceil().to_usize().unwrap_or(1).max(1);
            let h = (b - a) / T::from_count(n);
            for i in 0..n {
                let t0 = a + T::from_count(i) * h;
                let t1 = if i + 1 == n { b } else { t0 + h };
                stage_au.push((t0 + t1) * T::lit(0.5) * ps);
                stage_au.push(t1 * ps);
                node_output.push(if i + 1 == n { pair[1].1 } else { None });
            }
        }
        Ok(Self {
            stage_au,
            node_output,
            max_step_ps: h_max,
        })
    }
}

/// μ₀·E(t) in atomic units at every stage time.
fn drive_table<T: Real>(schedule: &Schedule<T>, pulse: &PulseSpec<T>, dipole_au: T) -> Result<Vec<T>> {
    let ps = T::lit(Quantity::TimePs.factor());
    schedule
        .stage_au
        .iter()
        .map(|&t| {
            let field = pulse.field_at(t / ps);
            Ok(dipole_au * to_atomic(field, Quantity::FieldKvPerCm)?)
        })
        .collect()
}

/// Bohr frequencies ω_{J+1,J} of one K, indexed by absolute J (0 below |K|).
fn k_frequencies<T: Real>(molecule: &MoleculeSpec<T>, k: i32, j_max: u32) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); j_max as usize];
    for j in k.unsigned_abs()..j_max {
        let de = energy(&molecule.constants, j + 1, k)? - energy(&molecule.constants, j, k)?;
        out[j as usize] = to_atomic(de, Quantity::EnergyWavenumber)?;
    }
    Ok(out)
}

/// e^{−iω_J t_s} for every stage, row-major in stage, J absolute.
fn phase_table<T: Real>(omega_by_j: &[T], schedule: &Schedule<T>) -> Vec<C<T>> {
    let mut table = Vec::with_capacity(schedule.stage_au.len() * omega_by_j.len());
    for &t in &schedule.stage_au {
        table.extend(omega_by_j.iter().map(|&w| C::from_polar(T::one(), -w * t)));
    }
    table
}

/// Block operators with one zero cell at each end, so that the RK4 kernels
/// need no edge branches. Padded index p corresponds to block index p − 1.
struct Padded<T> {
    n: usize,
    diagonal: Vec<T>,
    /// ω between padded p and p + 1; zero at both ends.
    omega: Vec<T>,
    /// q_J·e^{−iω_J t_s} between padded p and p + 1, n + 1 entries per stage.
    coupling: Vec<C<T>>,
}

impl<T: Real> Padded<T> {
    fn new(block: &BlockOperators<T>, phases: &[C<T>], stride: usize) -> Self {
        let n = block.len();
        let nq = block.coupling.len();
        let zero = C::new(T::zero(), T::zero());
        let mut diagonal = vec![T::zero(); n + 2];
        diagonal[1..=n].copy_from_slice(&block.diagonal);
        let mut omega = vec![T::zero(); n + 1];
        omega[1..=nq].copy_from_slice(&block.transition_frequencies());
        let base = block.j_min as usize;
        let stages = if stride == 0 { 0 } else { phases.len() / stride };
        let mut coupling = Vec::with_capacity(stages * (n + 1));
        for s in 0..stages {
            let row = &phases[s * stride + base..s * stride + base + nq];
            coupling.push(zero);
            coupling.extend(row.iter().zip(&block.coupling).map(|(p, &q)| p * q));
            coupling.push(zero);
        }
        Self {
            n,
            diagonal,
            omega,
            coupling,
        }
    }

    fn row(&self, stage: usize) -> &[C<T>] {
        &self.coupling[stage * (self.n + 1)..(stage + 1) * (self.n + 1)]
    }
}

// ---------------------------------------------------------------------------
// RK4 on one member.

struct Workspace<T> {
    k1: Vec<C<T>>,
    k2: Vec<C<T>>,
    k3: Vec<C<T>>,
    k4: Vec<C<T>>,
    tmp: Vec<C<T>>,
}

impl<T: Real> Workspace<T> {
    fn new(n: usize) -> Self {
        let z = vec![C::new(T::zero(), T::zero()); n + 2];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn clear(&mut self) {
        let z = C::new(T::zero(), T::zero());
        for v in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            v.iter_mut().for_each(|x| *x = z);
        }
    }
}

/// out = i·g·(cos θ)_I·c on the padded window [lo, hi], 1 ≤ lo ≤ hi ≤ n.
///
/// Cells just outside the window are always zero: the window only grows and
/// nothing writes beyond it.
#[inline]
fn rhs<T: Real>(out: &mut [C<T>], c: &[C<T>], lo: usize, hi: usize, diag: &[T], cq: &[C<T>], g: T) {
    let cells = c[lo - 1..=hi + 1].windows(3);
    let links = cq[lo - 1..=hi].windows(2);
    for (((o, cw), qw), &d) in out[lo..=hi].iter_mut().zip(cells).zip(links).zip(&diag[lo..=hi]) {
        let acc = cw[1] * d + cw[0] * qw[0].conj() + cw[2] * qw[1];
        *o = C::new(-g * acc.im, g * acc.re);
    }
}

/// out = base + k·a
#[inline]
fn axpy<T: Real>(out: &mut [C<T>], base: &[C<T>], k: &[C<T>], a: T) {
    for ((o, b), x) in out.iter_mut().zip(base).zip(k) {
        *o = *b + *x * a;
    }
}

/// ⟨cos θ⟩ and its derivative (per atomic time unit) on the padded window.
#[inline]
fn observe<T: Real>(c: &[C<T>], lo: usize, hi: usize, diag: &[T], cq: &[C<T>], omega: &[T]) -> (T, T) {
    let mut value = T::zero();
    let mut rate = T::zero();
    for p in lo..=hi {
        let x = c[p].conj() * c[p + 1] * cq[p];
        value += c[p].norm_sqr() * diag[p] + T::lit(2.0) * x.re;
        rate += T::lit(2.0) * omega[p] * x.im;
    }
    (value, rate)
}

struct MemberRun<T> {
    /// Unpadded amplitudes.
    amplitudes: Vec<C<T>>,
    /// Unpadded active window.
    lo: usize,
    hi: usize,
}

fn integrate_member<T: Real>(
    ops: &Padded<T>,
    start_index: usize,
    schedule: &Schedule<T>,
    drive: &[T],
    spec: &PropagationSpec<T>,
    ws: &mut Workspace<T>,
    mut on_output: impl FnMut(usize, &[C<T>], usize, usize, &[C<T>]),
) -> Result<MemberRun<T>> {
    let n = ops.n;
    let mut c = vec![C::new(T::zero(), T::zero()); n + 2];
    let start = start_index + 1;
    c[start] = C::new(T::one(), T::zero());
    ws.clear();

    let (mut lo, mut hi) = match spec.band_tolerance {
        Some(_) => (start.saturating_sub(2).max(1), (start + 2).min(n)),
        None => (1, n),
    };
    let tol2 = spec.band_tolerance.map(|t| t * t);
    let diag = &ops.diagonal;

    if let Some(slot) = schedule.node_output[0] {
        on_output(slot, &c, lo, hi, ops.row(0));
    }
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let two = T::lit(2.0);
    for step in 0..schedule.steps() {
        let (s0, s1, s2) = (2 * step, 2 * step + 1, 2 * step + 2);
        let h = schedule.stage_au[s2] - schedule.stage_au[s0];
        let (g0, g1, g2) = (drive[s0], drive[s1], drive[s2]);
        if g0 != T::zero() || g1 != T::zero() || g2 != T::zero() {
            let Workspace { k1, k2, k3, k4, tmp } = ws;
            let w = lo..=hi;
            rhs(k1, &c, lo, hi, diag, ops.row(s0), g0);
            axpy(&mut tmp[w.clone()], &c[w.clone()], &k1[w.clone()], h * half);
            rhs(k2, tmp, lo, hi, diag, ops.row(s1), g1);
            axpy(&mut tmp[w.clone()], &c[w.clone()], &k2[w.clone()], h * half);
            rhs(k3, tmp, lo, hi, diag, ops.row(s1), g1);
            axpy(&mut tmp[w.clone()], &c[w.clone()], &k3[w.clone()], h);
            rhs(k4, tmp, lo, hi, diag, ops.row(s2), g2);
            let hs = h * sixth;
            for ((((x, a), b), e), f) in c[w.clone()].iter_mut().zip(&k1[w.clone()]).zip(&k2[w.clone()]).zip(&k3[w.clone()]).zip(&k4[w])
            {
                *x += (*a + (*b + *e) * two + *f) * hs;
            }
            if let Some(tol2) = tol2 {
                if lo > 1 && c[lo].norm_sqr() > tol2 {
                    lo -= 1;
                }
                if hi < n && c[hi].norm_sqr() > tol2 {
                    hi += 1;
                }
            }
        }
        if let Some(slot) = schedule.node_output[step + 1] {
            on_output(slot, &c, lo, hi, ops.row(s2));
        }
    }

    let norm: T = c[lo..=hi].iter().map(|x| x.norm_sqr()).fold(T::zero(), |a, b| a + b);
    let drift = (norm - T::one()).abs();
    if drift > T::norm_tolerance() {
        return Err(Error::StepSize {
            drift: drift.as_f64(),
            tolerance: T::norm_tolerance().as_f64(),
            suggested_dt_ps: (schedule.max_step_ps * half).as_f64(),
        });
    }
    Ok(MemberRun {
        amplitudes: c[1..=n].to_vec(),
        lo: lo - 1,
        hi: hi - 1,
    })
}

/// Integrates one member through the pulse on its full (K, M) block.
///
/// The returned state is taken at the end of the pulse window.
pub fn propagate_member<'a, T: Real>(
    member: &EnsembleMember<T>,
    block: &'a BlockOperators<T>,
    pulse: &PulseSpec<T>,
    molecule: &MoleculeSpec<T>,
    dt_ps: T,
) -> Result<BlockState<'a, T>> {
    propagate_member_with(member, block, pulse, molecule, &PropagationSpec::full_block(dt_ps))
}

pub fn propagate_member_with<'a, T: Real>(
    member: &EnsembleMember<T>,
    block: &'a BlockOperators<T>,
    pulse: &PulseSpec<T>,
    molecule: &MoleculeSpec<T>,
    spec: &PropagationSpec<T>,
) -> Result<BlockState<'a, T>> {
    spec.validate()?;
    pulse.validate()?;
    let s = member.state;
    if s.k != block.k || s.m != block.m {
        return domain(format!("member {s} does not belong to block (K={}, M={})", block.k, block.m));
    }
    let start = block
        .index_of(s.j)
        .ok_or_else(|| Error::Domain(format!("member {s} outside block J range")))?;
    let window = pulse.window();
    let schedule = Schedule::build(window, &[], spec)?;
    let drive = drive_table(&schedule, pulse, molecule.dipole_au()?)?;
    let stride = block.j_max as usize;
    let phases = phase_table(&k_frequencies(molecule, block.k, block.j_max)?, &schedule);
    let ops = Padded::new(block, &phases, stride);
    let mut ws = Workspace::new(block.len());
    let run = integrate_member(&ops, start, &schedule, &drive, spec, &mut ws, |_, _, _, _, _| {})
        .map_err(|e| Error::Member {
            state: s,
            source: Box::new(e),
        })?;
    Ok(BlockState {
        block,
        amplitudes: run.amplitudes,
        time_ps: window.1,
    })
}

/// Field-free ⟨cos θ⟩ contribution of one state and its exact derivative (1/ps).
pub fn free_evolution_trace<T: Real>(state: &BlockState<'_, T>, grid_ps: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    check_increasing(grid_ps, "free-evolution grid")?;
    if let Some(&first) = grid_ps.first() {
        if first < state.time_ps {
            return domain(format!(
                "free evolution grid starts at {first} ps, before the state time {} ps",
                state.time_ps
            ));
        }
    }
    let block = state.block;
    let omega = block.transition_frequencies();
    let ps = T::lit(Quantity::TimePs.factor());
    let c = &state.amplitudes;
    let mut values = Vec::with_capacity(grid_ps.len());
    let mut rates = Vec::with_capacity(grid_ps.len());
    let diagonal: T = c
        .iter()
        .zip(&block.diagonal)
        .fold(T::zero(), |a, (x, &d)| a + x.norm_sqr() * d);
    for &t in grid_ps {
        let t_au = t * ps;
        let mut v = diagonal;
        let mut r = T::zero();
        for i in 0..block.coupling.len() {
            let x = c[i].conj() * c[i + 1] * C::from_polar(block.coupling[i], -omega[i] * t_au);
            v += T::lit(2.0) * x.re;
            r += T::lit(2.0) * omega[i] * x.im;
        }
        values.push(v);
        rates.push(r * ps);
    }
    Ok((values, rates))
}

// ---------------------------------------------------------------------------
// Ensemble.

/// Summed contribution of a group of members.
struct Partial<T> {
    /// In-window samples.
    cos_theta: Vec<T>,
    rate_au: Vec<T>,
    /// Σ w |c_J|² d_J after the pulse.
    diagonal: T,
    /// Σ w q_J c_J* c_{J+1} after the pulse, indexed by absolute J.
    coherence: Vec<C<T>>,
}

impl<T: Real> Partial<T> {
    fn zeros(n_in: usize, j_max: u32) -> Self {
        Self {
            cos_theta: vec![T::zero(); n_in],
            rate_au: vec![T::zero(); n_in],
            diagonal: T::zero(),
            coherence: vec![C::new(T::zero(), T::zero()); j_max as usize],
        }
    }

    fn add(mut self, other: &Self) -> Self {
        for (a, b) in self.cos_theta.iter_mut().zip(&other.cos_theta) {
            *a += *b;
        }
        for (a, b) in self.rate_au.iter_mut().zip(&other.rate_au) {
            *a += *b;
        }
        self.diagonal += other.diagonal;
        for (a, b) in self.coherence.iter_mut().zip(&other.coherence) {
            *a += *b;
        }
        self
    }
}

/// Fixed-shape pairwise reduction; the result does not depend on how the
/// parts were computed.
fn tree_sum<T: Real>(parts: &[Partial<T>], n_in: usize, j_max: u32) -> Partial<T> {
    match parts.len() {
        0 => Partial::zeros(n_in, j_max),
        1 => Partial::zeros(n_in, j_max).add(&parts[0]),
        n => {
            let (a, b) = parts.split_at(n / 2);
            tree_sum(a, n_in, j_max).add(&tree_sum(b, n_in, j_max))
        }
    }
}

struct BlockJob<'m, T> {
    k: i32,
    m: i32,
    members: Vec<&'m EnsembleMember<T>>,
}

#[allow(clippy::too_many_arguments)]
fn run_block<T: Real>(
    job: &BlockJob<'_, T>,
    molecule: &MoleculeSpec<T>,
    j_max: u32,
    schedule: &Schedule<T>,
    drive: &[T],
    phases: &[C<T>],
    n_in: usize,
    spec: &PropagationSpec<T>,
) -> Result<Partial<T>> {
    let block = build_block(molecule, job.k, job.m, j_max)?;
    let ops = Padded::new(&block, phases, j_max as usize);
    let nq = block.coupling.len();
    let mut ws = Workspace::new(block.len());
    let mut acc = Partial::zeros(n_in, j_max);
    for member in &job.members {
        let w = member.total_weight();
        let start = block.index_of(member.state.j).ok_or_else(|| {
            Error::Domain(format!("member {} outside J_max = {j_max}", member.state))
        })?;
        let (cos_acc, rate_acc) = (&mut acc.cos_theta, &mut acc.rate_au);
        let run = integrate_member(&ops, start, schedule, drive, spec, &mut ws, |slot, c, lo, hi, row| {
            let (v, r) = observe(c, lo, hi, &ops.diagonal, row, &ops.omega);
            cos_acc[slot] += w * v;
            rate_acc[slot] += w * r;
        })
        .map_err(|e| Error::Member {
            state: member.state,
            source: Box::new(e),
        })?;
        let c = &run.amplitudes;
        for i in run.lo..=run.hi {
            acc.diagonal += w * c[i].norm_sqr() * block.diagonal[i];
            if i < run.hi && i < nq {
                let j = block.j_at(i) as usize;
                acc.coherence[j] += c[i].conj() * c[i + 1] * (w * block.coupling[i]);
            }
        }
    }
    Ok(acc)
}

/// Ensemble-averaged ⟨cos θ⟩(t) with relaxation applied.
///
/// The relaxation clock starts at the pulse center.
pub fn ensemble_orientation<T: Real>(
    molecule: &MoleculeSpec<T>,
    ensemble: &EnsembleSpec<T>,
    pulse: &PulseSpec<T>,
    relaxation: &RelaxationSpec<T>,
    grid_ps: &[T],
    propagation: &PropagationSpec<T>,
) -> Result<OrientationTrace<T>> {
    relaxation.validate()?;
    let members = enumerate_members(molecule, ensemble)?;
    let trace = nondissipative_orientation(molecule, &members, ensemble.j_max, pulse, grid_ps, propagation)?;
    Ok(trace.with_relaxation(relaxation, pulse.t0_ps))
}

/// ⟨cos θ⟩(t) without relaxation for an explicit member list.
pub fn nondissipative_orientation<T: Real>(
    molecule: &MoleculeSpec<T>,
    members: &[EnsembleMember<T>],
    j_max: u32,
    pulse: &PulseSpec<T>,
    grid_ps: &[T],
    propagation: &PropagationSpec<T>,
) -> Result<OrientationTrace<T>> {
    molecule.validate()?;
    pulse.validate()?;
    propagation.validate()?;
    check_increasing(grid_ps, "output grid")?;
    if grid_ps.is_empty() {
        return domain("output grid is empty");
    }

    let window = pulse.window();
    let inside: Vec<(usize, T)> = grid_ps
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= window.0 && t <= window.1)
        .map(|(i, &t)| (i, t))
        .collect();
    let slots: Vec<(usize, T)> = inside.iter().enumerate().map(|(s, &(_, t))| (s, t)).collect();
    let n_in = inside.len();

    let schedule = Schedule::build(window, &slots, propagation)?;
    let drive = drive_table(&schedule, pulse, molecule.dipole_au()?)?;

    let mut sorted: Vec<&EnsembleMember<T>> = members.iter().collect();
    sorted.sort_by_key(|m| (m.state.k, m.state.m, m.state.j));
    let mut jobs: Vec<BlockJob<'_, T>> = Vec::new();
    for m in sorted {
        match jobs.last_mut() {
            Some(job) if job.k == m.state.k && job.m == m.state.m => job.members.push(m),
            _ => jobs.push(BlockJob {
                k: m.state.k,
                m: m.state.m,
                members: vec![m],
            }),
        }
    }

    let mut per_k: Vec<(i32, Partial<T>)> = Vec::new();
    let mut start = 0;
    while start < jobs.len() {
        let k = jobs[start].k;
        let end = start + jobs[start..].iter().take_while(|j| j.k == k).count();
        let phases = phase_table(&k_frequencies(molecule, k, j_max)?, &schedule);
        let parts: Vec<Partial<T>> = jobs[start..end]
            .par_iter()
            .map(|job| run_block(job, molecule, j_max, &schedule, &drive, &phases, n_in, propagation))
            .collect::<Result<Vec<_>>>()?;
        per_k.push((k, tree_sum(&parts, n_in, j_max)));
        start = end;
    }

    let ps = T::lit(Quantity::TimePs.factor());
    let mut trace = OrientationTrace::zeros(grid_ps.to_vec());
    let in_window: Vec<Partial<T>> = per_k.iter().map(|(_, p)| Partial::zeros(n_in, 0).add(p)).collect();
    let total = tree_sum(&in_window, n_in, 0);
    for (s, &(i, _)) in inside.iter().enumerate() {
        trace.cos_theta[i] = total.cos_theta[s];
        trace.d_cos_theta_dt[i] = total.rate_au[s] * ps;
    }

    let post: Vec<usize> = (0..grid_ps.len()).filter(|&i| grid_ps[i] > window.1).collect();
    if !post.is_empty() {
        let diagonals: Vec<T> = per_k.iter().map(|(_, p)| p.diagonal).collect();
        let offset = pairwise_sum(&diagonals);
        let times: Vec<T> = post.iter().map(|&i| grid_ps[i] * ps).collect();
        let mut values = vec![offset; times.len()];
        let mut rates = vec![T::zero(); times.len()];
        for (k, part) in &per_k {
            let omega = k_frequencies(molecule, *k, j_max)?;
            for (j, s) in part.coherence.iter().enumerate() {
                if s.re == T::zero() && s.im == T::zero() {
                    continue;
                }
                accumulate_line(*s, omega[j], &times, &mut values, &mut rates);
            }
        }
        for (n, &i) in post.iter().enumerate() {
            trace.cos_theta[i] = values[n];
            trace.d_cos_theta_dt[i] = rates[n] * ps;
        }
    }
    Ok(trace)
}

/// Adds 2Re[s e^{−iωt}] and its derivative 2ω Im[s e^{−iωt}] at every time.
///
/// Uniformly spaced times use a phase recurrence that is re-anchored to the
/// exact exponential every 256 samples.
fn accumulate_line<T: Real>(s: C<T>, omega: T, times_au: &[T], values: &mut [T], rates: &mut [T]) {
    let two = T::lit(2.0);
    let uniform = times_au.len() > 2 && {
        let h = times_au[1] - times_au[0];
        times_au
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= h * T::lit(1e-9))
    };
    if !uniform {
        for (n, &t) in times_au.iter().enumerate() {
            let x = s * C::from_polar(T::one(), -omega * t);
            values[n] += two * x.re;
            rates[n] += two * omega * x.im;
        }
        return;
    }
    let h = (times_au[times_au.len() - 1] - times_au[0]) / T::from_count(times_au.len() - 1);
    let rot = C::from_polar(T::one(), -omega * h);
    let mut z = C::new(T::zero(), T::zero());
    for (n, &t) in times_au.iter().enumerate() {
        if n % 256 == 0 {
            z = s * C::from_polar(T::one(), -omega * t);
        }
        values[n] += two * z.re;
        rates[n] += two * omega * z.im;
        z *= rot;
    }
}
