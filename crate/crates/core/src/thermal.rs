//! Room-temperature initial ensemble.
//!
//! The canonical density operator is diagonal in |J,K,M⟩, so the ensemble is a
//! list of basis states with Boltzmann weights. States related by
//! (K, M) → (−K, −M) evolve identically and are folded onto K ≥ 0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rotor::{energy, BasisState, MoleculeSpec};
use crate::scalar::Real;
use crate::units::thermal_energy_wavenumber;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec<T> {
    pub temperature_k: T,
    pub j_max: u32,
    /// Members lighter than this fraction of the heaviest state are dropped.
    pub weight_cutoff: T,
    /// Largest share of Z the top shell J = J_max may carry.
    pub truncation_tolerance: T,
}

impl<T: Real> Default for EnsembleSpec<T> {
    fn default() -> Self {
        Self {
            temperature_k: T::lit(298.0),
            j_max: 90,
            weight_cutoff: T::lit(1e-8),
            truncation_tolerance: T::lit(1e-4),
        }
    }
}

impl<T: Real> EnsembleSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k > T::zero()) || !self.temperature_k.is_finite() {
            return domain(format!("ensemble.temperature_k must be > 0, got {}", self.temperature_k));
        }
        if !(self.weight_cutoff >= T::zero() && self.weight_cutoff < T::one()) {
            return domain(format!("ensemble.weight_cutoff must lie in [0, 1), got {}", self.weight_cutoff));
        }
        if !(self.truncation_tolerance > T::zero()) {
            return domain("ensemble.truncation_tolerance must be > 0");
        }
        Ok(())
    }
}

/// One folded thermal member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember<T> {
    pub state: BasisState,
    /// Normalized probability of a single basis state.
    pub weight: T,
    /// Number of basis states this member stands for (2 when K > 0).
    pub multiplicity: u32,
}

impl<T: Real> EnsembleMember<T> {
    /// Weight times multiplicity.
    pub fn total_weight(&self) -> T {
        self.weight * T::from_u32(self.multiplicity).unwrap()
    }
}

/// Boltzmann factors e^(−E_JK/k_BT) for K = −J..J of one J shell, summed.
fn shell_sum<T: Real>(molecule: &MoleculeSpec<T>, kt: T, j: u32) -> Result<T> {
    let mut sum = T::zero();
    for k in -(j as i32)..=j as i32 {
        sum += (-energy(&molecule.constants, j, k)? / kt).exp();
    }
    Ok(sum * T::from_u32(2 * j + 1).unwrap())
}

/// Z = Σ_J Σ_K Σ_M e^(−E_JK/k_BT) over J ≤ J_max.
///
/// Fails with [`Error::Truncation`] when the top shell still carries more than
/// `truncation_tolerance` of Z; the error names the smallest sufficient J_max.
pub fn partition_function<T: Real>(molecule: &MoleculeSpec<T>, spec: &EnsembleSpec<T>) -> Result<T> {
    molecule.validate()?;
    spec.validate()?;
    let kt = thermal_energy_wavenumber(spec.temperature_k);
    let mut z = T::zero();
    let mut top = T::zero();
    for j in 0..=spec.j_max {
        top = shell_sum(molecule, kt, j)?;
        z += top;
    }
    let relative = top / z;
    if relative > spec.truncation_tolerance {
        let mut extended = z;
        let mut required = spec.j_max;
        loop {
            required += 1;
            let shell = shell_sum(molecule, kt, required)?;
            extended += shell;
            if shell / extended <= spec.truncation_tolerance || required > spec.j_max + 2000 {
                break;
            }
        }
        return Err(Error::Truncation {
            j_max: spec.j_max,
            relative: relative.as_f64(),
            required,
        });
    }
    Ok(z)
}

/// Folded thermal members in canonical order (K ascending, then M, then J).
pub fn enumerate_members<T: Real>(
    molecule: &MoleculeSpec<T>,
    spec: &EnsembleSpec<T>,
) -> Result<Vec<EnsembleMember<T>>> {
    let z = partition_function(molecule, spec)?;
    let kt = thermal_energy_wavenumber(spec.temperature_k);
    let j_max = spec.j_max as i32;

    let mut max_weight = T::zero();
    for j in 0..=spec.j_max {
        for k in 0..=j as i32 {
            max_weight = max_weight.max((-energy(&molecule.constants, j, k)? / kt).exp() / z);
        }
    }
    let threshold = spec.weight_cutoff * max_weight;

    let mut members = Vec::new();
    for k in 0..=j_max {
        for m in -j_max..=j_max {
            let j_min = k.unsigned_abs().max(m.unsigned_abs());
            for j in j_min..=spec.j_max {
                let weight = (-energy(&molecule.constants, j, k)? / kt).exp() / z;
                if weight > threshold {
                    members.push(EnsembleMember {
                        state: BasisState { j, k, m },
                        weight,
                        multiplicity: if k > 0 { 2 } else { 1 },
                    });
                }
            }
        }
    }

    let kept: Vec<T> = members.iter().map(EnsembleMember::total_weight).collect();
    let total = crate::numeric::pairwise_sum(&kept);
    for member in &mut members {
        member.weight /= total;
    }
    Ok(members)
}

pub fn write_members_csv<T: Real, W: Write>(mut out: W, members: &[EnsembleMember<T>]) -> Result<()> {
    writeln!(out, "J,K,M,weight,multiplicity")?;
    for m in members {
        writeln!(
            out,
            "{},{},{},{:e},{}",
            m.state.j,
            m.state.k,
            m.state.m,
            m.weight.as_f64(),
            m.multiplicity
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotor::cos_theta_diagonal;
    use approx::assert_relative_eq;

    fn ch3i() -> MoleculeSpec<f64> {
        MoleculeSpec::methyl_iodide()
    }

    #[test]
    fn cold_limit() {
        let spec = EnsembleSpec {
            temperature_k: 1e-6,
            ..EnsembleSpec::default()
        };
        assert_relative_eq!(partition_function(&ch3i(), &spec).unwrap(), 1.0);
        let members = enumerate_members(&ch3i(), &spec).unwrap();
        assert_eq!(members.len(), 1);
        assert_eq!(members[0].state, BasisState { j: 0, k: 0, m: 0 });
        assert_eq!(members[0].weight, 1.0);
    }

    #[test]
    fn boltzmann_ratio_at_room_temperature() {
        let kt = thermal_energy_wavenumber(298.0);
        assert_relative_eq!(kt, 207.12, max_relative = 1e-4);
        let members = enumerate_members(&ch3i(), &EnsembleSpec::default()).unwrap();
        let w = |j, k, m| {
            members
                .iter()
                .find(|x| x.state == BasisState { j, k, m })
                .unwrap()
                .weight
        };
        assert_relative_eq!(w(1, 0, 0) / w(0, 0, 0), (-0.50195916f64 / kt).exp(), max_relative = 1e-8);
        assert_relative_eq!(w(1, 0, 0) / w(0, 0, 0), 0.99758, max_relative = 1e-5);
    }

    #[test]
    fn members_are_valid_and_normalized() {
        let members = enumerate_members(&ch3i(), &EnsembleSpec::default()).unwrap();
        let mut total = 0.0;
        for m in &members {
            let s = m.state;
            assert!(s.k >= 0 && s.k.unsigned_abs() <= s.j && s.m.unsigned_abs() <= s.j);
            assert_eq!(m.multiplicity, if s.k > 0 { 2 } else { 1 });
            assert!(m.weight > 0.0);
            total += m.total_weight();
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unfolded_weights_even_in_k() {
        let mol = ch3i();
        let kt = thermal_energy_wavenumber(298.0);
        for j in 0..40 {
            for k in 0..=j as i32 {
                let a = (-energy(&mol.constants, j, k).unwrap() / kt).exp();
                let b = (-energy(&mol.constants, j, -k).unwrap() / kt).exp();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn isotropic_initial_state() {
        let members = enumerate_members(&ch3i(), &EnsembleSpec::default()).unwrap();
        let avg: f64 = members
            .iter()
            .map(|m| m.total_weight() * cos_theta_diagonal::<f64>(m.state.j, m.state.k, m.state.m).unwrap())
            .sum();
        assert!(avg.abs() < 1e-14, "{avg}");
    }

    #[test]
    fn truncation_check() {
        let spec = EnsembleSpec {
            j_max: 3,
            ..EnsembleSpec::default()
        };
        match partition_function(&ch3i(), &spec) {
            Err(Error::Truncation { required, .. }) => assert!(required > 3 && required <= 90),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn cutoff_is_relative() {
        let loose = EnsembleSpec {
            weight_cutoff: 1e-2,
            ..EnsembleSpec::default()
        };
        let tight = EnsembleSpec::<f64>::default();
        let a = enumerate_members(&ch3i(), &loose).unwrap();
        let b = enumerate_members(&ch3i(), &tight).unwrap();
        assert!(a.len() < b.len());
        let total: f64 = a.iter().map(|m| m.total_weight()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_dump() {
        let spec = EnsembleSpec {
            temperature_k: 1.0,
            j_max: 10,
            ..EnsembleSpec::default()
        };
        let members = enumerate_members(&ch3i(), &spec).unwrap();
        let mut buf = Vec::new();
        write_members_csv(&mut buf, &members).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("J,K,M,weight,multiplicity\n"));
        assert!(text.contains("\n0,0,0,"));
        assert_eq!(text.lines().count(), members.len() + 1);
    }
}
