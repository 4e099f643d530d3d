//! Sparse matrices and the direct solvers used for every linear system.

mod csr;
mod direct;

pub use csr::CsrMatrix;
pub use direct::{LbltAnalysis, LuAnalysis, SparseCholesky, SparseLblt, SparseLu};
