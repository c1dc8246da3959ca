//! Numerical and combinatorial laboratory for equilateral-triangle
//! configurations in fractal subsets of `R^d` and in `F_q^d`.
//!
//! Modules:
//!
//! * [`ff_triangles`]: exact enumeration of equilateral triples in `F_q^d`.
//! * [`config_surface`]: the Fourier transform `σ̂(ξ, η)` of the normalized
//!   surface measure on `{(x, y) : |x| = |y| = |x - y| = 1}` and its decay.
//! * [`fractal_lab`]: grid Frostman measures, their spectra, and the
//!   triple-correlation configuration integral on both sides of Plancherel.
//! * [`stationary_phase`]: the local chart, critical-point algebra and Hessian
//!   of the configuration phase, plus the annulus singular-integral bound.
//! * [`reports`]: run configuration, report envelopes and the acceptance battery.

pub mod config_surface;
pub mod error;
pub mod ff_triangles;
pub mod fit;
pub mod fractal_lab;
pub mod reports;
pub mod special;
pub mod stationary_phase;
pub mod vecmath;

pub use config_surface::{DecayFitSpec, FreqPair, QuadratureSpec, SigmaEstimate, SurfaceSpec};
pub use error::{Error, Result};
pub use ff_triangles::{FFSubset, FFVector, PrimeField, TriangleCensus};
pub use fit::DecayFitReport;
pub use fractal_lab::{CantorSpec, GridMeasure, NuEstimate, SpectrumGrid};
pub use stationary_phase::{ChartPointPair, CriticalData, LocalCoords};

/// Version string embedded in every run record.
pub const ARTIFACT_VERSION: &str = concat!("eqtri ", env!("CARGO_PKG_VERSION"));
