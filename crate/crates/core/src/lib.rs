//! Spectral analysis of rank-one detailed-balance master equations.

pub mod basis;
pub mod compensated;
pub mod error;
pub mod evolution;
pub mod finite;
pub mod generator;
pub mod model;
pub mod probability;
pub mod secular;

pub use basis::{BiorthogonalSystem, GramReport, GramShift, LeftEigenvector, RightEigenvector};
pub use error::{Error, Result};
pub use evolution::{DecayOutcome, DecayReport, Method, Trajectory};
pub use finite::{FiniteModel, PerronResult};
pub use generator::Generator;
pub use model::{BasisHypotheses, GapReport, LevelSpec, Levels, TailBound, TruncatedModel};
pub use probability::{Normalization, ProbabilityVector};
pub use secular::{EigenvalueRecord, SecularContext, Shift, SolverOptions, Spectrum};
