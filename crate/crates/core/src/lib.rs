//! Admissible regions of uncertain wind power injections under small-signal
//! stability constraints.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure function
//! of its inputs; file formats, the command line and parallel drivers live in
//! the `ssar` companion crate.
//!
//! Pipeline, bottom to top:
//!
//! - [`netcase`]: static network description and study configuration.
//! - [`powerflow`]: AGC redistribution and Newton-Raphson AC power flow.
//! - [`dynamics`]: device steady states, DAE Jacobian blocks, Schur reduction.
//! - [`spectra`]: eigen-analysis, stability verdicts, critical-mode sensitivity.
//! - [`region`]: membership tests, ray boundary search, quadratic boundaries.
//! - [`uncertainty`]: copula scenario generation and ellipsoidal sets.
//! - [`assess`]: Monte Carlo instability probability, tangency, curtailment.
#![no_std]

extern crate alloc;

pub mod assess;
pub mod dynamics;
pub mod fixtures;
pub mod linalg;
pub mod netcase;
pub mod powerflow;
pub mod region;
pub mod spectra;
pub mod special;
pub mod uncertainty;

pub use nalgebra::{Complex, DMatrix, DVector};

/// Complex scalar used for eigenvalues and eigenvectors.
pub type C64 = Complex<f64>;
