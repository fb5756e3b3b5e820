//! Velocity-selective ladder EIT in thermal caesium vapour.
//!
//! Forward synthesis of coupling-scan transmission spectra from the
//! Doppler-averaged three-level susceptibility, and the inverse pipeline
//! (peak detection, sideband calibration, line fitting, interval
//! extraction) that recovers hyperfine and fine-structure splittings.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atomdata;
pub mod doppler;
pub mod error;
pub mod kv;
pub mod ladder;
pub mod spectrum;
pub mod units;
pub mod velocitymap;

pub use analysis::{AnalysisOptions, LineModel, PeakFit, SplittingReport, TraceAnalysis};
pub use atomdata::{AtomData, FPrime, HyperfineLadder, RitzSeries, Series};
pub use doppler::{QuadratureMethod, QuadratureSpec, ThermalEnsemble, VelocityWidthConvention};
pub use error::{Error, Result};
pub use ladder::{Geometry, LadderSystem, Susceptibility};
pub use spectrum::{AxisKind, ScanDistortion, SidebandSpec, SpectrumTrace};
pub use velocitymap::{ExcitationPathway, PathwaySet, RelativeStrengths};
