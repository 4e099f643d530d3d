//! Sparse direct solves backed by faer's supernodal factorizations.
//!
//! The symbolic analysis (fill-reducing ordering and elimination structure)
//! depends only on the sparsity pattern, so it is computed once per pattern and
//! shared by every numeric factorization on that pattern.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, IntranodeLbltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, MatMut, Par, Side};

use super::csr::CsrMatrix;
use crate::error::{Error, Result};

/// Column-compressed structure of a CSR pattern plus the map from CSR value
/// positions to CSC value positions.
#[derive(Clone, Debug)]
struct Structure {
    symbolic: SymbolicSparseColMat<usize>,
    to_csc: Vec<usize>,
}

impl Structure {
    fn new(pattern: &CsrMatrix) -> Structure {
        let n = pattern.n;
        let mut col_ptr = vec![0usize; n + 1];
        for &j in &pattern.col_idx {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; pattern.nnz()];
        let mut to_csc = vec![0usize; pattern.nnz()];
        for i in 0..n {
            for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                let j = pattern.col_idx[p];
                row_idx[next[j]] = i;
                to_csc[p] = next[j];
                next[j] += 1;
            }
        }
        Structure {
            symbolic: SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx),
            to_csc,
        }
    }

    fn numeric(&self, a: &CsrMatrix) -> Result<SparseColMat<usize, f64>> {
        if a.values.len() != self.to_csc.len() {
            return Err(Error::Dimension {
                expected: self.to_csc.len(),
                got: a.values.len(),
            });
        }
        let mut values = vec![0.0; a.values.len()];
        for (p, &q) in self.to_csc.iter().enumerate() {
            values[q] = a.values[p];
        }
        Ok(SparseColMat::new(self.symbolic.clone(), values))
    }
}

fn solve_with(solver: &impl Solve<f64>, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    let n = x.len();
    solver.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    x
}

/// Symbolic `LU` analysis of a general sparse pattern.
#[derive(Clone, Debug)]
pub struct LuAnalysis {
    structure: Structure,
    symbolic: SymbolicLu<usize>,
}

impl LuAnalysis {
    pub fn new(pattern: &CsrMatrix) -> Result<LuAnalysis> {
        let structure = Structure::new(pattern);
        let symbolic = SymbolicLu::try_new(structure.symbolic.as_ref())
            .map_err(|e| Error::Precondition(format!("symbolic LU analysis failed: {e:?}")))?;
        Ok(LuAnalysis { structure, symbolic })
    }

    /// Numeric factorization of `a`, which must have the analysed pattern.
    pub fn factor(&self, a: &CsrMatrix) -> Result<SparseLu> {
        let mat = self.structure.numeric(a)?;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat.as_ref())
            .map_err(|_| Error::Singular { column: 0 })?;
        Ok(SparseLu { lu, n: a.n })
    }
}

/// Numeric `LU` factors with partial pivoting.
#[derive(Clone, Debug)]
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    /// Analyse and factor in one go.
    pub fn factor(a: &CsrMatrix) -> Result<SparseLu> {
        LuAnalysis::new(a)?.factor(a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        solve_with(&self.lu, b)
    }
}

/// Symbolic analysis for symmetric indefinite matrices, factored as `L B Lᵀ`
/// with Bunch–Kaufman pivoting inside each supernode. Only the lower triangle
/// of the matrices handed to [`LbltAnalysis::factor`] is read.
#[derive(Clone, Debug)]
pub struct LbltAnalysis {
    structure: Structure,
    symbolic: Arc<SymbolicCholesky<usize>>,
}

impl LbltAnalysis {
    pub fn new(pattern: &CsrMatrix) -> Result<LbltAnalysis> {
        let structure = Structure::new(pattern);
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic =
            factorize_symbolic_cholesky(structure.symbolic.as_ref(), Side::Lower, SymmetricOrdering::Amd, params)
                .map_err(|e| Error::Precondition(format!("symbolic LBLᵀ analysis failed: {e:?}")))?;
        Ok(LbltAnalysis {
            structure,
            symbolic: Arc::new(symbolic),
        })
    }

    pub fn factor(&self, a: &CsrMatrix) -> Result<SparseLblt> {
        let mat = self.structure.numeric(a)?;
        let n = a.n;
        let sym = &*self.symbolic;
        let mut values = vec![0.0; sym.len_val()];
        let mut subdiag = vec![0.0; n];
        let mut fwd = vec![0usize; n];
        let mut inv = vec![0usize; n];
        let mut mem = MemBuffer::new(sym.factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default()));
        sym.factorize_numeric_intranode_lblt(
            &mut values,
            &mut subdiag,
            &mut fwd,
            &mut inv,
            mat.as_ref(),
            Side::Lower,
            Par::Seq,
            MemStack::new(&mut mem),
            Default::default(),
        );
        if values.iter().chain(&subdiag).any(|v| !v.is_finite()) {
            return Err(Error::Singular { column: 0 });
        }
        Ok(SparseLblt {
            symbolic: self.symbolic.clone(),
            values,
            subdiag,
            fwd,
            inv,
        })
    }
}

/// Numeric `L B Lᵀ` factors.
#[derive(Clone, Debug)]
pub struct SparseLblt {
    symbolic: Arc<SymbolicCholesky<usize>>,
    values: Vec<f64>,
    subdiag: Vec<f64>,
    fwd: Vec<usize>,
    inv: Vec<usize>,
}

impl SparseLblt {
    pub fn factor(a: &CsrMatrix) -> Result<SparseLblt> {
        LbltAnalysis::new(a)?.factor(a)
    }

    pub fn dim(&self) -> usize {
        self.fwd.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let perm = PermRef::new_checked(&self.fwd, &self.inv, n);
        let lblt = IntranodeLbltRef::new(&self.symbolic, &self.values, &self.subdiag, perm);
        let mut x = b.to_vec();
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        lblt.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, n, 1),
            Par::Seq,
            MemStack::new(&mut mem),
        );
        x
    }
}

/// Sparse Cholesky factors of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<SparseCholesky> {
        let structure = Structure::new(a);
        let symbolic = SymbolicLlt::try_new(structure.symbolic.as_ref(), Side::Lower)
            .map_err(|e| Error::Precondition(format!("symbolic Cholesky analysis failed: {e:?}")))?;
        let mat = structure.numeric(a)?;
        let llt = Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower).map_err(|_| {
            Error::Precondition("matrix is not positive definite".into())
        })?;
        Ok(SparseCholesky { llt, n: a.n })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        solve_with(&self.llt, b)
    }
}
