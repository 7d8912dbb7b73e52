//! Relaxation of zero- and double-quantum coherences in a two-spin NMR
//! system under correlated dephasing and generalized amplitude damping.
//!
//! The crate covers spin operators and pulses, coherence preparation,
//! Kraus and generator forms of the noise, Liouville-space propagation,
//! reduced state tomography and rate estimation from decay curves.

pub mod channels;
pub mod error;
pub mod estimation;
pub mod evolution;
pub mod presets;
pub mod spinops;
pub mod states;
pub mod tomography;

pub use channels::{NoiseParams, Superoperator};
pub use error::{Error, Result};
pub use presets::Molecule;
pub use spinops::{SpinSystem, Unitary, C64};
pub use states::{CoherenceKind, DensityMatrix, MultipleQuantum};
