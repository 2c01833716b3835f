//! Stroboscopic tomography for finite-dimensional open quantum systems.
//!
//! Given a Markovian generator `L` (built from Kraus families, GKSL data or
//! supplied directly), the crate answers how many observables are needed to
//! reconstruct a state trajectory, whether a particular observable set and
//! time grid suffice, and recovers the initial density matrix from the
//! measured expectation values.

pub mod algebra;
pub mod channels;
pub mod cli;
pub mod error;
pub mod generators;
pub mod io;
pub mod observability;
pub mod reconstruction;

pub use algebra::{CMatrix, HermitianOperator, Tolerances, C64};
pub use channels::{DecoherenceModel, KrausCollection, KrausFamilySpec};
pub use error::{Error, Result};
pub use generators::{GkslComponents, JumpOperator, SpectrumReport, Superoperator};
pub use observability::{ObservableSet, Reconstructibility, TimeGridCertificate};
pub use reconstruction::{DensityMatrix, MeasurementRecord, Method, ReconstructionResult};
