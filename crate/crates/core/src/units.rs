//! Physical constants and conversions between laboratory and atomic units.
//!
//! Everything inside the propagator runs in Hartree atomic units. Values enter
//! and leave through [`to_atomic`] and [`from_atomic`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Conversion constants (CODATA 2018).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhysicalConstants {
    /// cm/s
    pub speed_of_light: f64,
    /// Boltzmann constant expressed as a wavenumber, cm⁻¹/K.
    pub boltzmann_wavenumber: f64,
    /// Seconds per atomic unit of time.
    pub au_time: f64,
    /// V/cm per atomic unit of electric field.
    pub au_field: f64,
    /// Debye per atomic unit of dipole moment (e·a₀).
    pub debye_per_au: f64,
    /// cm⁻¹ per Hartree.
    pub wavenumber_per_hartree: f64,
    pub atm_per_bar: f64,
}

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    speed_of_light: 2.997_924_58e10,
    boltzmann_wavenumber: 0.695_034_800_4,
    au_time: 2.418_884_326_585_7e-17,
    au_field: 5.142_206_747_63e9,
    debye_per_au: 2.541_746_473_181_856_6,
    wavenumber_per_hartree: 2.194_746_313_632e5,
    atm_per_bar: 0.986_923_266_716_012_8,
};

/// Label recorded in run manifests.
pub const CONSTANTS_VERSION: &str = "CODATA-2018";

/// Quantity kinds the converters understand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// cm⁻¹ ↔ Hartree
    EnergyWavenumber,
    /// ps ↔ ħ/E_h
    TimePs,
    /// kV/cm ↔ E_h/(e a₀)
    FieldKvPerCm,
    /// Debye ↔ e a₀
    DipoleDebye,
    /// K ↔ k_B·T in Hartree
    TemperatureK,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::EnergyWavenumber,
        Quantity::TimePs,
        Quantity::FieldKvPerCm,
        Quantity::DipoleDebye,
        Quantity::TemperatureK,
    ];

    /// Atomic units per laboratory unit.
    pub fn factor(self) -> f64 {
        let c = &CODATA_2018;
        match self {
            Quantity::EnergyWavenumber => 1.0 / c.wavenumber_per_hartree,
            Quantity::TimePs => 1e-12 / c.au_time,
            Quantity::FieldKvPerCm => 1e3 / c.au_field,
            Quantity::DipoleDebye => 1.0 / c.debye_per_au,
            Quantity::TemperatureK => c.boltzmann_wavenumber / c.wavenumber_per_hartree,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::EnergyWavenumber => "energy_wavenumber",
            Quantity::TimePs => "time_ps",
            Quantity::FieldKvPerCm => "field_kV_per_cm",
            Quantity::DipoleDebye => "dipole_debye",
            Quantity::TemperatureK => "temperature_K",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unsupported quantity kind `{s}`")))
    }
}

pub fn to_atomic<T: Real>(value: T, kind: Quantity) -> Result<T> {
    if !value.is_finite() {
        return Err(Error::Domain(format!("non-finite {kind} value {value}")));
    }
    Ok(value * T::lit(kind.factor()))
}

pub fn from_atomic<T: Real>(value: T, kind: Quantity) -> Result<T> {
    if !value.is_finite() {
        return Err(Error::Domain(format!("non-finite atomic {kind} value {value}")));
    }
    Ok(value / T::lit(kind.factor()))
}

/// k_B·T in cm⁻¹.
pub fn thermal_energy_wavenumber<T: Real>(temperature_k: T) -> T {
    temperature_k * T::lit(CODATA_2018.boltzmann_wavenumber)
}

pub fn bar_to_atm<T: Real>(pressure_bar: T) -> T {
    pressure_bar * T::lit(CODATA_2018.atm_per_bar)
}

/// Angular frequency in rad/ps of a wavenumber in cm⁻¹ (ω = 2πc·ν̃).
pub fn wavenumber_to_angular_per_ps<T: Real>(wavenumber: T) -> T {
    T::TAU() * wavenumber * T::lit(CODATA_2018.speed_of_light * 1e-12)
}
