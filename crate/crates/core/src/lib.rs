//! Numerics for phase-asymmetry resource interconversion by estimation.
//!
//! - [`distributions`]: integer-support PMFs, FFT convolution powers, Gaussian
//!   references and characteristic functions.
//! - [`u1`]: the U(1) covariant-measurement posterior, fidelities and the
//!   figure of merit (exact Fourier route, quadrature, Monte Carlo, closed form).
//! - [`mixed`]: typical-set decomposition of mixed targets, the resulting
//!   fidelity lower bound and a dense-matrix Uhlmann fidelity oracle.
//! - [`zd`]: the cyclic-group protocol and its geometric convergence.

pub mod distributions;
pub mod error;
mod fft;
pub mod mixed;
pub mod u1;
pub mod zd;

pub use distributions::{GaussianModel, IntDistribution};
pub use error::{Error, Result};
