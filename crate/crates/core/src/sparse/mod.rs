//! Compressed sparse column matrices and a simplicial Cholesky factorization.

mod cholesky;
mod csc;
mod ordering;

pub use cholesky::{CholFactor, SolveMode, PIVOT_TOL};
pub use csc::{block_diag, vstack, SparseCsc};
pub use ordering::{minimum_degree, Ordering};
