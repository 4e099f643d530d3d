//! Element-parallel assembly of matrices and load vectors.

use rayon::prelude::*;

use super::function::FEFunction;
use super::space::FunctionSpace;
use crate::error::Result;
use crate::linalg::CsrMatrix;

/// Assemble a symmetric operator from per-element dense blocks computed in parallel.
pub(crate) fn assemble_matrix<F>(space: &FunctionSpace, local: F) -> CsrMatrix
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let nb = space.local_dofs();
    let ne = space.mesh().num_elements();
    let mut blocks = vec![0.0; ne * nb * nb];
    blocks
        .par_chunks_mut(nb * nb)
        .enumerate()
        .for_each(|(k, out)| local(k, out));
    let mut m = space.pattern().zeros_like();
    for k in 0..ne {
        for (&pos, &v) in space.scatter(k).iter().zip(&blocks[k * nb * nb..(k + 1) * nb * nb]) {
            m.values[pos] += v;
        }
    }
    m.symmetric = true;
    m
}

/// Assemble a load vector from per-element contributions computed in parallel.
pub(crate) fn assemble_vector<F>(space: &FunctionSpace, local: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let nb = space.local_dofs();
    let ne = space.mesh().num_elements();
    let mut blocks = vec![0.0; ne * nb];
    blocks.par_chunks_mut(nb).enumerate().for_each(|(k, out)| local(k, out));
    let mut b = vec![0.0; space.ndofs()];
    for k in 0..ne {
        for (&d, &v) in space.element_dofs(k).iter().zip(&blocks[k * nb..(k + 1) * nb]) {
            b[d] += v;
        }
    }
    b
}

fn weighted_mass_local(space: &FunctionSpace, k: usize, weight: Option<&[f64]>, out: &mut [f64]) {
    let t = space.table();
    let nb = space.local_dofs();
    let area = space.mesh().area(k);
    out.fill(0.0);
    let mut wl = [0.0; 6];
    if let Some(w) = weight {
        for (o, &d) in wl.iter_mut().zip(space.element_dofs(k)) {
            *o = w[d];
        }
    }
    for q in 0..t.rule.len() {
        let phi = t.phi(q);
        let mut s = t.rule.weights[q] * area;
        if weight.is_some() {
            let wq: f64 = phi.iter().zip(&wl[..nb]).map(|(p, w)| p * w).sum();
            s *= wq;
        }
        for a in 0..nb {
            let sa = s * phi[a];
            for b in 0..nb {
                out[a * nb + b] += sa * phi[b];
            }
        }
    }
}

/// Mass matrix `M_ij = (ψ_j, ψ_i)`.
pub fn assemble_mass(space: &FunctionSpace) -> CsrMatrix {
    assemble_matrix(space, |k, out| weighted_mass_local(space, k, None, out))
}

/// Stiffness matrix `K_ij = (∇ψ_j, ∇ψ_i)`.
pub fn assemble_stiffness(space: &FunctionSpace) -> CsrMatrix {
    let t = space.table();
    let nb = space.local_dofs();
    assemble_matrix(space, |k, out| {
        let geo = space.geometry(k);
        out.fill(0.0);
        let mut g = [[0.0; 2]; 6];
        for q in 0..t.rule.len() {
            let w = t.rule.weights[q] * geo.area;
            for (gb, dl) in g.iter_mut().zip(t.dphi(q)) {
                *gb = geo.gradient(*dl);
            }
            for a in 0..nb {
                for b in 0..nb {
                    out[a * nb + b] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
    })
}

/// Weighted mass matrix `(s(w_h) ψ_j, ψ_i)` where the weight is the pointwise
/// map `s` applied to the finite element function `w_h` at quadrature points.
pub fn assemble_weighted_mass(
    space: &FunctionSpace,
    weight: &FEFunction,
    map: impl Fn(f64) -> f64 + Sync,
) -> Result<CsrMatrix> {
    space.ensure_same(weight.space())?;
    let t = space.table();
    let nb = space.local_dofs();
    Ok(assemble_matrix(space, |k, out| {
        let area = space.mesh().area(k);
        let mut c = [0.0; 6];
        weight.local(k, &mut c[..nb]);
        out.fill(0.0);
        for q in 0..t.rule.len() {
            let phi = t.phi(q);
            let wq: f64 = phi.iter().zip(&c[..nb]).map(|(p, c)| p * c).sum();
            let s = t.rule.weights[q] * area * map(wq);
            for a in 0..nb {
                let sa = s * phi[a];
                for b in 0..nb {
                    out[a * nb + b] += sa * phi[b];
                }
            }
        }
    }))
}

/// `(s(w_h), ψ_i)` for a pointwise map `s` of a finite element function.
pub fn assemble_composed_load(
    space: &FunctionSpace,
    w: &FEFunction,
    map: impl Fn(f64) -> f64 + Sync,
) -> Result<Vec<f64>> {
    space.ensure_same(w.space())?;
    let t = space.table();
    let nb = space.local_dofs();
    Ok(assemble_vector(space, |k, out| {
        let area = space.mesh().area(k);
        let mut c = [0.0; 6];
        w.local(k, &mut c[..nb]);
        out.fill(0.0);
        for q in 0..t.rule.len() {
            let phi = t.phi(q);
            let wq: f64 = phi.iter().zip(&c[..nb]).map(|(p, c)| p * c).sum();
            let s = t.rule.weights[q] * area * map(wq);
            for a in 0..nb {
                out[a] += s * phi[a];
            }
        }
    }))
}

/// `(g, ψ_i)` for a field given in physical coordinates, using the high-order rule.
pub fn assemble_load(space: &FunctionSpace, g: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
    let t = space.high_table();
    let nb = space.local_dofs();
    assemble_vector(space, |k, out| {
        let p = space.mesh().coords(k);
        let area = space.mesh().area(k) ;
        out.fill(0.0);
        for q in 0..t.rule.len() {
            let x = super::space::to_physical(p, t.rule.points[q]);
            let s = t.rule.weights[q] * area * g(x[0], x[1]);
            for a in 0..nb {
                out[a] += s * t.phi(q)[a];
            }
        }
    })
}

impl FunctionSpace {
    /// Cached mass matrix.
    pub fn mass(&self) -> &CsrMatrix {
        self.mass.get_or_init(|| assemble_mass(self))
    }

    /// Cached stiffness matrix.
    pub fn stiffness(&self) -> &CsrMatrix {
        self.stiffness.get_or_init(|| assemble_stiffness(self))
    }

    /// `∫ψ_i`, the mass matrix applied to the constant one.
    pub fn basis_integrals(&self) -> &[f64] {
        self.lumped.get_or_init(|| self.mass().matvec(&vec![1.0; self.ndofs()]))
    }
}
