//! Field-free orientation of symmetric-top molecules by single-cycle THz
//! pulses, and the free-induction decay it radiates.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the bottom of this file fix the scalar type for everyday use; all
//! quoted tolerances assume `f64`.
//!
//! ```
//! use rotorient::{PulseSpec64, echo_spacing, MoleculeSpec64};
//! let pulse = PulseSpec64::new(100.0, 1.0).unwrap();
//! assert!(pulse.field_at(0.0) > 0.0);
//! let dt = echo_spacing(&MoleculeSpec64::methyl_iodide()).unwrap();
//! assert!((dt - 66.45).abs() < 0.05);
//! ```

pub mod checks;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fid;
pub mod io;
pub mod numeric;
pub mod pulse;
pub mod rotor;
pub mod scalar;
pub mod thermal;
pub mod units;

pub use dynamics::{
    ensemble_orientation, free_evolution_trace, nondissipative_orientation, propagate_member,
    propagate_member_with, BlockState, OrientationTrace, PropagationSpec, RelaxationSpec,
};
pub use error::{Error, Result};
pub use experiments::{
    channel_peaks, detect_revivals, fit_trace, peak_in_window, scan_amplitude, scan_tau, FitOptions, FitResult,
    GridSpec, Peak, Revival, ScanResult, SimulationConfig,
};
pub use fid::{echo_spacing, fid_signal, spectral_derivative_check, FidSpec, Signal};
pub use pulse::{sigma_from_tau, PulseSpec};
pub use rotor::{build_block, energy, BasisState, BlockOperators, MoleculeSpec, RotorConstants};
pub use scalar::Real;
pub use thermal::{enumerate_members, partition_function, EnsembleMember, EnsembleSpec};
pub use units::{from_atomic, to_atomic, Quantity, CONSTANTS_VERSION};

pub type MoleculeSpec64 = MoleculeSpec<f64>;
pub type MoleculeSpec32 = MoleculeSpec<f32>;
pub type PulseSpec64 = PulseSpec<f64>;
pub type PulseSpec32 = PulseSpec<f32>;
pub type EnsembleSpec64 = EnsembleSpec<f64>;
pub type EnsembleSpec32 = EnsembleSpec<f32>;
pub type RelaxationSpec64 = RelaxationSpec<f64>;
pub type RelaxationSpec32 = RelaxationSpec<f32>;
pub type OrientationTrace64 = OrientationTrace<f64>;
pub type OrientationTrace32 = OrientationTrace<f32>;
pub type Signal64 = Signal<f64>;
pub type Signal32 = Signal<f32>;
pub type SimulationConfig64 = SimulationConfig<f64>;
pub type SimulationConfig32 = SimulationConfig<f32>;
