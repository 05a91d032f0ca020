//! Symmetric-top spectroscopy in the Wigner basis |J,K,M⟩.
//!
//! A linearly polarized field conserves both K and M, so the Hamiltonian and
//! the cos θ operator split into independent real symmetric tridiagonal blocks
//! labelled by (K, M) and indexed by J.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Real;
use crate::units::{to_atomic, Quantity};

/// Rotational and centrifugal constants, all in cm⁻¹.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotorConstants<T> {
    pub b_e: T,
    pub a_e: T,
    pub d_j: T,
    pub d_jk: T,
    pub d_k: T,
}

impl<T: Real> RotorConstants<T> {
    /// CH₃I ground vibronic state.
    pub fn methyl_iodide() -> Self {
        Self {
            b_e: T::lit(0.25098),
            a_e: T::lit(5.173949),
            d_j: T::lit(2.1040012e-7),
            d_jk: T::lit(3.2944780e-6),
            d_k: T::lit(8.7632195e-5),
        }
    }

    /// Same rotor with every centrifugal distortion constant set to zero.
    pub fn rigid(self) -> Self {
        Self {
            d_j: T::zero(),
            d_jk: T::zero(),
            d_k: T::zero(),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_e > T::zero()) || !(self.a_e > T::zero()) {
            return domain(format!(
                "rotational constants must be positive (B_e = {}, A_e = {})",
                self.b_e, self.a_e
            ));
        }
        if !(self.a_e > self.b_e) {
            return domain(format!(
                "prolate top requires A_e > B_e (A_e = {}, B_e = {})",
                self.a_e, self.b_e
            ));
        }
        Ok(())
    }
}

impl<T: Real> Default for RotorConstants<T> {
    fn default() -> Self {
        Self::methyl_iodide()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec<T> {
    pub constants: RotorConstants<T>,
    /// Permanent dipole moment μ₀ in Debye.
    pub dipole_debye: T,
}

impl<T: Real> MoleculeSpec<T> {
    pub fn methyl_iodide() -> Self {
        Self {
            constants: RotorConstants::methyl_iodide(),
            dipole_debye: T::lit(1.6406),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if !(self.dipole_debye > T::zero()) {
            return domain(format!("dipole moment must be positive, got {} D", self.dipole_debye));
        }
        Ok(())
    }

    pub fn dipole_au(&self) -> Result<T> {
        to_atomic(self.dipole_debye, Quantity::DipoleDebye)
    }
}

impl<T: Real> Default for MoleculeSpec<T> {
    fn default() -> Self {
        Self::methyl_iodide()
    }
}

/// One Wigner basis label |J,K,M⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub j: u32,
    pub k: i32,
    pub m: i32,
}

impl BasisState {
    pub fn new(j: u32, k: i32, m: i32) -> Result<Self> {
        check_labels(j, k, m)?;
        Ok(Self { j, k, m })
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|J={}, K={}, M={}>", self.j, self.k, self.m)
    }
}

fn check_labels(j: u32, k: i32, m: i32) -> Result<()> {
    if k.unsigned_abs() > j || m.unsigned_abs() > j {
        return domain(format!("|K| and |M| must not exceed J (J={j}, K={k}, M={m})"));
    }
    Ok(())
}

/// Field-free level energy E_JK in cm⁻¹, including centrifugal distortion.
pub fn energy<T: Real>(constants: &RotorConstants<T>, j: u32, k: i32) -> Result<T> {
    if k.unsigned_abs() > j {
        return domain(format!("|K| must not exceed J (J={j}, K={k})"));
    }
    let jj = T::from_u32(j).unwrap() * T::from_u32(j + 1).unwrap();
    let k2 = T::from_i32(k).unwrap().powi(2);
    let c = constants;
    Ok(c.b_e * jj + (c.a_e - c.b_e) * k2 - c.d_j * jj * jj - c.d_jk * jj * k2 - c.d_k * k2 * k2)
}

/// ⟨J+1,K,M| cos θ |J,K,M⟩.
pub fn cos_theta_coupling<T: Real>(j: u32, k: i32, m: i32) -> Result<T> {
    check_labels(j, k, m)?;
    let j1 = T::from_u32(j + 1).unwrap();
    let k2 = T::from_i32(k).unwrap().powi(2);
    let m2 = T::from_i32(m).unwrap().powi(2);
    let two_j = T::from_u32(2 * j).unwrap();
    let num = ((j1 * j1 - k2) * (j1 * j1 - m2)).sqrt();
    let den = j1 * ((two_j + T::one()) * (two_j + T::lit(3.0))).sqrt();
    Ok(num / den)
}

/// ⟨J,K,M| cos θ |J,K,M⟩ = KM / J(J+1).
pub fn cos_theta_diagonal<T: Real>(j: u32, k: i32, m: i32) -> Result<T> {
    check_labels(j, k, m)?;
    if j == 0 {
        return Ok(T::zero());
    }
    let km = T::from_i64(i64::from(k) * i64::from(m)).unwrap();
    let jj = T::from_u32(j).unwrap() * T::from_u32(j + 1).unwrap();
    Ok(km / jj)
}

/// H₀ and cos θ restricted to one (K, M) block.
///
/// Index `i` of every vector refers to J = `j_min + i`. `coupling[i]` links
/// J and J+1, so it is one element shorter than the diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperators<T> {
    pub k: i32,
    pub m: i32,
    pub j_min: u32,
    pub j_max: u32,
    /// Level energies in Hartree.
    pub energies: Vec<T>,
    pub coupling: Vec<T>,
    pub diagonal: Vec<T>,
}

impl<T: Real> BlockOperators<T> {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn j_at(&self, index: usize) -> u32 {
        self.j_min + index as u32
    }

    pub fn index_of(&self, j: u32) -> Option<usize> {
        (self.j_min..=self.j_max)
            .contains(&j)
            .then(|| (j - self.j_min) as usize)
    }

    /// Bohr frequencies ω_{J+1,J} = E_{J+1} − E_J in Hartree.
    pub fn transition_frequencies(&self) -> Vec<T> {
        self.energies.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

pub fn build_block<T: Real>(
    molecule: &MoleculeSpec<T>,
    k: i32,
    m: i32,
    j_max: u32,
) -> Result<BlockOperators<T>> {
    let j_min = k.unsigned_abs().max(m.unsigned_abs());
    if j_max < j_min {
        return domain(format!("J_max = {j_max} below max(|K|, |M|) = {j_min}"));
    }
    let mut energies = Vec::with_capacity((j_max - j_min + 1) as usize);
    let mut diagonal = Vec::with_capacity(energies.capacity());
    for j in j_min..=j_max {
        let e = energy(&molecule.constants, j, k)?;
        energies.push(to_atomic(e, Quantity::EnergyWavenumber)?);
        diagonal.push(cos_theta_diagonal(j, k, m)?);
    }
    let coupling = (j_min..j_max)
        .map(|j| cos_theta_coupling(j, k, m))
        .collect::<Result<Vec<T>>>()?;
    Ok(BlockOperators {
        k,
        m,
        j_min,
        j_max,
        energies,
        coupling,
        diagonal,
    })
}
