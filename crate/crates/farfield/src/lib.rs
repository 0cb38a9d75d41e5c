//! Multiscale reduction of nonlinear partial difference equations.
//!
//! Nonlinear lattice equations with a real dispersion relation carry slowly
//! modulated wave packets whose envelopes obey much simpler *far-field*
//! equations on coarse sub-lattices. This crate implements the full pipeline
//! for four lattice models — the lattice modified KdV, the Hietarinta
//! equation, the lattice Volterra–Kac–van Moerbeke equation, and a
//! non-integrable lattice KdV:
//!
//! * [`diffcalc`] — exact multi-lattice difference calculus: Stirling-number
//!   conversion tables and the shift-expansion stencils for slow functions;
//! * [`models`] — the lattice equations themselves: residuals, exact
//!   stepping, dispersion relations and group velocities;
//! * [`reduction`] — admissibility of carrier wavenumbers (integer scale
//!   pairs `M1`, `M2` and the complex constant `S`) and the closed-form
//!   coefficients of the reduced discrete NLS-type equations;
//! * [`engine`] — a mechanical small-amplitude expansion that re-derives
//!   every reduced equation from scratch and serves as the independent
//!   oracle for the closed forms;
//! * [`simulate`] — direct numerical validation: modulated-packet initial
//!   data, exact lattice evolution, envelope demodulation, reduced-equation
//!   evolution, and convergence measurement in `ε = 1/N`.
//!
//! The `farfield-cli` crate wraps all of this in a config-driven command
//! line; the book under `book/` walks through the mathematics with runnable
//! snippets.
//!
//! ```
//! use farfield::models::{CosK, LatticeModel, MkdvParams};
//! use farfield::numeric::rat;
//! use farfield::reduction::{reduce_mkdv, solve_scales};
//!
//! // the benchmark carrier: p = 2, q = 1, cos k = 0; choosing M2 = 4 forces M1 = -5
//! let model = LatticeModel::mkdv("2", "1").unwrap();
//! let cos_k = CosK::new(rat(0, 1), 1).unwrap();
//! let scales = solve_scales(&model, &cos_k, 4, 0).unwrap();
//! assert_eq!((scales.m1, scales.m2), (-5, 4));
//!
//! let red = reduce_mkdv(&MkdvParams { p: rat(2, 1), q: rat(1, 1) }, &cos_k, 4).unwrap();
//! assert!((red.continuum_coeff.re + 6.0).abs() < 1e-12);
//! ```

pub mod numeric;
pub mod diffcalc;
pub mod models;
pub mod engine;
pub mod reduction;
pub mod simulate;

use thiserror::Error as ThisError;

/// Library error type.
#[derive(Debug, ThisError)]
pub enum Error {
    /// preconditions violated, indices out of range, bad parameters
    #[error("domain error: {0}")]
    Domain(String),
    /// the requested carrier/scale combination is not admissible
    #[error("inadmissible: {0}")]
    Inadmissible(String),
    /// degenerate configuration (poles, vanishing pivots, k = 0 carriers)
    #[error("degenerate: {0}")]
    Degenerate(String),
    /// a quad solve hit a vanishing denominator
    #[error("singular configuration: {what}")]
    Singular { what: String },
    /// numerical failure (instability, tolerance violation)
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// a probed property could not be determined from the data
    #[error("undetermined: {0}")]
    Undetermined(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
