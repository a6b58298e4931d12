//! Phase dynamics unwinding: Blaschke factorization of analytic signals, iterative
//! unwinding into AM-FM components, the windowed and cumulative-sum variants, an AHM
//! signal simulator, and scoring against ground truth.

pub mod benchmark;
pub mod blaschke;
pub mod error;
pub mod metrics;
pub mod pdu;
pub mod simulator;
pub mod spectral;
pub mod windowed;

pub use blaschke::{factorize, BlaschkeFactorization, DiskField, RootSet};
pub use error::{PduError, Result};
pub use pdu::{cumsum_decompose, decompose, decompose_signal, PduConfig, PduDecomposition, Strategy};
pub use simulator::{preset, synthesize, AhmParams, AhmRealization, Preset};
pub use spectral::{CircleSignal, RealSignal, Spectrum};
pub use windowed::{build_partition, windowed_decompose, SegmentPlan, Tapering, WindowSpec};
