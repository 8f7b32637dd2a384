//! Full counting statistics and optimal control for a three-qubit Floquet
//! quantum thermal transistor.
//!
//! The crate is `no_std` (it needs `alloc`). It builds the counting-field
//! tilted 4×4 generator of the degenerate population dynamics, extracts
//! steady-state current cumulants from its characteristic polynomial, checks
//! them against the closed-form low-temperature limits, and optimizes the
//! base-frequency modulation with a chopped-random-basis ansatz.
//!
//! Units are natural throughout: ħ = k_B = 1, and energies, frequencies and
//! temperatures are all measured in the same unit (usually Δ = 1).

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod cumulants;
pub mod error;
mod fft;
pub mod linalg;
pub mod liouvillian;
pub mod model;
pub mod modulation;
pub mod optimizer;

pub use error::{Error, Result};
pub use model::{Bath, SystemParams};
pub use modulation::{CrabWaveform, HarmonicSpectrum};
