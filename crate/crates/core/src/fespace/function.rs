use std::sync::Arc;

use rayon::prelude::*;

use super::space::{barycentric, basis_dlambda, basis_values, to_physical, FunctionSpace};
use crate::error::{Error, Result};

/// A coefficient vector bound to a function space.
#[derive(Clone, Debug)]
pub struct FEFunction {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
}

/// `L²`, `H¹`-seminorm, broken `H²`-seminorm and `L⁴` norm of one function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h2_broken: f64,
    pub l4: f64,
}

impl FEFunction {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Result<FEFunction> {
        if coeffs.len() != space.ndofs() {
            return Err(Error::Dimension {
                expected: space.ndofs(),
                got: coeffs.len(),
            });
        }
        Ok(FEFunction { space, coeffs })
    }

    pub fn zeros(space: Arc<FunctionSpace>) -> FEFunction {
        let n = space.ndofs();
        FEFunction {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn constant(space: Arc<FunctionSpace>, c: f64) -> FEFunction {
        let n = space.ndofs();
        FEFunction {
            space,
            coeffs: vec![c; n],
        }
    }

    /// Nodal interpolant of `field`.
    pub fn interpolate(space: Arc<FunctionSpace>, field: impl Fn(f64, f64) -> f64 + Sync) -> FEFunction {
        let coeffs = space.dof_coords().par_iter().map(|p| field(p[0], p[1])).collect();
        FEFunction { space, coeffs }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Local coefficients on element `k`.
    pub fn local(&self, k: usize, out: &mut [f64]) {
        for (o, &d) in out.iter_mut().zip(self.space.element_dofs(k)) {
            *o = self.coeffs[d];
        }
    }

    /// Value at barycentric point `lam` of element `k`.
    pub fn eval_local(&self, k: usize, lam: [f64; 3]) -> f64 {
        let nb = self.space.local_dofs();
        let mut phi = [0.0; 6];
        basis_values(self.space.degree(), lam, &mut phi[..nb]);
        self.space
            .element_dofs(k)
            .iter()
            .zip(&phi[..nb])
            .map(|(&d, p)| self.coeffs[d] * p)
            .sum()
    }

    /// Gradient at barycentric point `lam` of element `k`.
    pub fn grad_local(&self, k: usize, lam: [f64; 3]) -> [f64; 2] {
        let nb = self.space.local_dofs();
        let mut d = [[0.0; 3]; 6];
        basis_dlambda(self.space.degree(), lam, &mut d[..nb]);
        let geo = self.space.geometry(k);
        let mut g = [0.0; 2];
        for (&dof, dl) in self.space.element_dofs(k).iter().zip(&d[..nb]) {
            let gb = geo.gradient(*dl);
            g[0] += self.coeffs[dof] * gb[0];
            g[1] += self.coeffs[dof] * gb[1];
        }
        g
    }

    /// Element containing `x` (brute-force search) and the barycentric coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let mesh = self.space.mesh();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for k in 0..mesh.num_elements() {
            let lam = barycentric(mesh.coords(k), x);
            let worst = lam.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            if worst >= -1e-12 {
                return Some((k, lam));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((k, lam, worst));
            }
        }
        best.filter(|b| b.2 > -1e-9).map(|b| (b.0, b.1))
    }

    /// Point evaluation anywhere in the domain.
    pub fn eval(&self, x: [f64; 2]) -> Option<f64> {
        self.locate(x).map(|(k, lam)| self.eval_local(k, lam))
    }

    /// `∫_Ω f`.
    pub fn integral(&self) -> f64 {
        let space = &self.space;
        let t = space.table();
        let nb = space.local_dofs();
        (0..space.mesh().num_elements())
            .into_par_iter()
            .map(|k| {
                let mut c = [0.0; 6];
                self.local(k, &mut c[..nb]);
                let area = space.mesh().area(k);
                let mut s = 0.0;
                for q in 0..t.rule.len() {
                    let v: f64 = t.phi(q).iter().zip(&c[..nb]).map(|(p, c)| p * c).sum();
                    s += t.rule.weights[q] * v;
                }
                s * area
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    pub fn norms(&self) -> Norms {
        let space = &self.space;
        let t = space.high_table();
        let nb = space.local_dofs();
        let (l2, h1, h2, l4) = (0..space.mesh().num_elements())
            .into_par_iter()
            .map(|k| {
                let mut c = [0.0; 6];
                self.local(k, &mut c[..nb]);
                let geo = space.geometry(k);
                let (mut l2, mut h1, mut l4) = (0.0, 0.0, 0.0);
                for q in 0..t.rule.len() {
                    let w = t.rule.weights[q] * geo.area;
                    let mut v = 0.0;
                    let mut g = [0.0; 2];
                    for (b, &cb) in c[..nb].iter().enumerate() {
                        v += cb * t.phi(q)[b];
                        let gb = geo.gradient(t.dphi(q)[b]);
                        g[0] += cb * gb[0];
                        g[1] += cb * gb[1];
                    }
                    l2 += w * v * v;
                    l4 += w * v * v * v * v;
                    h1 += w * (g[0] * g[0] + g[1] * g[1]);
                }
                let mut hess = [0.0; 3];
                for (hb, &cb) in space.basis_hessians(&geo).iter().zip(&c[..nb]) {
                    for i in 0..3 {
                        hess[i] += cb * hb[i];
                    }
                }
                let h2 = geo.area * (hess[0] * hess[0] + 2.0 * hess[1] * hess[1] + hess[2] * hess[2]);
                (l2, h1, h2, l4)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
        Norms {
            l2: l2.sqrt(),
            h1_semi: h1.sqrt(),
            h2_broken: h2.sqrt(),
            l4: l4.sqrt().sqrt(),
        }
    }

    /// Broken `H²` seminorm `(Σ_K ‖D²f‖²_{L²(K)})^{1/2}`.
    pub fn h2_broken_seminorm(&self) -> f64 {
        let space = &self.space;
        let nb = space.local_dofs();
        (0..space.mesh().num_elements())
            .into_par_iter()
            .map(|k| {
                let mut c = [0.0; 6];
                self.local(k, &mut c[..nb]);
                let geo = space.geometry(k);
                let mut hess = [0.0; 3];
                for (hb, &cb) in space.basis_hessians(&geo).iter().zip(&c[..nb]) {
                    for i in 0..3 {
                        hess[i] += cb * hb[i];
                    }
                }
                geo.area * (hess[0] * hess[0] + 2.0 * hess[1] * hess[1] + hess[2] * hess[2])
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum::<f64>()
            .sqrt()
    }

    /// `self + a·other` on the same space.
    pub fn axpy(&self, a: f64, other: &FEFunction) -> Result<FEFunction> {
        self.space.ensure_same(&other.space)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x + a * y).collect();
        Ok(FEFunction {
            space: self.space.clone(),
            coeffs,
        })
    }

    pub fn scaled(&self, a: f64) -> FEFunction {
        FEFunction {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|x| a * x).collect(),
        }
    }

    /// Physical coordinates of a barycentric point of element `k`.
    pub fn point(&self, k: usize, lam: [f64; 3]) -> [f64; 2] {
        to_physical(self.space.mesh().coords(k), lam)
    }
}
