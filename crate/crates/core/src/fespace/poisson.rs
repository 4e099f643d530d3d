//! Mass solves and the zero-mean Neumann Poisson problem behind `‖∇Δ⁻¹w‖`.

use super::function::FEFunction;
use super::space::FunctionSpace;
use crate::error::{Error, Result};
use crate::linalg::SparseCholesky;

impl FunctionSpace {
    /// Solve `M x = b`, factoring the mass matrix on first use.
    pub fn mass_solve(&self, b: &[f64]) -> Vec<f64> {
        self.mass_factor
            .get_or_init(|| SparseCholesky::factor(self.mass()).expect("mass matrix is positive definite"))
            .solve(b)
    }

    /// Cholesky factor of `K` with the first degree of freedom pinned to zero.
    /// Solutions of the Neumann problem are unique up to constants, which the
    /// gradient norm does not see.
    fn poisson_factor(&self) -> &SparseCholesky {
        self.poisson_factor.get_or_init(|| {
            let k = self.stiffness();
            let mut pinned = k.clone();
            for i in 0..k.n {
                for p in k.row_ptr[i]..k.row_ptr[i + 1] {
                    let j = k.col_idx[p];
                    if i == 0 || j == 0 {
                        pinned.values[p] = if i == j { 1.0 } else { 0.0 };
                    }
                }
            }
            SparseCholesky::factor(&pinned).expect("pinned stiffness matrix is positive definite")
        })
    }

    /// `‖∇z‖` for the zero-mean solution of `(∇z, ∇η) = −ℓ(η)` where `ℓ(ψ_i) = load[i]`.
    /// The load must annihilate constants.
    pub fn inv_laplacian_norm_of_load(&self, load: &[f64]) -> Result<f64> {
        if load.len() != self.ndofs() {
            return Err(Error::Dimension {
                expected: self.ndofs(),
                got: load.len(),
            });
        }
        let total: f64 = load.iter().sum();
        let scale: f64 = load.iter().map(|v| v.abs()).sum();
        if total.abs() > 1e-10 * scale + 1e-14 {
            return Err(Error::Precondition(format!(
                "Neumann load has nonzero mean {total:e}"
            )));
        }
        let mut rhs: Vec<f64> = load.iter().map(|v| -v).collect();
        rhs[0] = 0.0;
        let z = self.poisson_factor().solve(&rhs);
        Ok(self.stiffness().inner(&z, &z).max(0.0).sqrt())
    }
}

/// `‖∇Δ⁻¹w‖` for a zero-mean finite element function.
pub fn inv_laplacian_norm(w: &FEFunction) -> Result<f64> {
    let space = w.space();
    let mean = w.integral();
    let l2 = space.mass().inner(w.coeffs(), w.coeffs()).max(0.0).sqrt();
    if mean.abs() > 1e-10 * l2 {
        return Err(Error::Precondition(format!(
            "inv_laplacian_norm needs a zero-mean field, got ∫w = {mean:e}"
        )));
    }
    space.inv_laplacian_norm_of_load(&space.mass().matvec(w.coeffs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{AnalyticField, CosineMode};
    use crate::mesh::Triangulation;
    use std::sync::Arc;

    fn eigen(n: usize) -> FEFunction {
        let s = FunctionSpace::new(Arc::new(Triangulation::uniform(n)), 2);
        FEFunction::interpolate(s, |x, y| CosineMode.value(x, y))
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let s = FunctionSpace::new(Arc::new(Triangulation::uniform(3)), 2);
        assert_eq!(inv_laplacian_norm(&FEFunction::zeros(s)).unwrap(), 0.0);
    }

    #[test]
    fn eigenfunction_converges_to_analytic_value() {
        let exact = 8f64.sqrt() / std::f64::consts::PI;
        let errs: Vec<f64> = [4, 8, 16].iter().map(|&n| (inv_laplacian_norm(&eigen(n)).unwrap() - exact).abs()).collect();
        assert!(errs[2] < 1e-4, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn norm_is_absolutely_homogeneous() {
        let w = eigen(6);
        let a = inv_laplacian_norm(&w).unwrap();
        let b = inv_laplacian_norm(&w.scaled(-3.5)).unwrap();
        assert!((b - 3.5 * a).abs() < 1e-12);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let s = FunctionSpace::new(Arc::new(Triangulation::uniform(3)), 2);
        let w = FEFunction::constant(s, 1.0);
        assert!(matches!(inv_laplacian_norm(&w), Err(Error::Precondition(_))));
    }

    #[test]
    fn mass_solve_inverts_mass() {
        let s = FunctionSpace::new(Arc::new(Triangulation::uniform(5)), 2);
        let x: Vec<f64> = (0..s.ndofs()).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let y = s.mass_solve(&s.mass().matvec(&x));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}
