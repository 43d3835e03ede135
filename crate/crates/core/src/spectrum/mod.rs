//! Discrete Laplace–Beltrami operators and their low eigenpairs.

mod basis;
mod cholesky;
mod eigen;
mod laplacian;
mod sparse;

pub use basis::{align_signs, degenerate_groups, BasisReport, EigenBasis, SolverInfo, DEGENERACY_TOL};
pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use eigen::{dense_eigenpairs, relative_residuals, smallest_eigenpairs, smallest_eigenpairs_with, SolverOptions};
pub use laplacian::{cotan_laplacian, laplacian, polyline_laplacian, COT_CLAMP};
pub use sparse::CsrMatrix;
