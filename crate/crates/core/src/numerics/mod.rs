//! Dense linear algebra, seeded randomness and finite-difference gradient
//! checking.

mod eigen;
mod gradcheck;
mod matrix;
mod rng;
mod stats;

pub use eigen::{psd_sqrt, sym_eig, SymEigen, MAX_SWEEPS, OFF_DIAGONAL_TOL, PSD_TOL, SYMMETRY_TOL};
pub use gradcheck::{gradient_check, FD_STEP};
pub use matrix::{axpy, dot, mat_mul, Matrix, Vector};
pub use rng::{derive_seed, gauss_sample, Rng};
pub use stats::{estimate_gaussian_stats, GaussianStats};
