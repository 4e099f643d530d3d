use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseCholesky};
use crate::mesh::{Triangulation, NONE};

/// Affine geometry of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let inv = 1.0 / det;
        ElementGeometry {
            area: 0.5 * det,
            grad_lambda: [
                [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
                [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
                [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
            ],
        }
    }

    /// Physical gradient from derivatives with respect to `λ₀, λ₁, λ₂`.
    #[inline]
    pub fn gradient(&self, dlam: [f64; 3]) -> [f64; 2] {
        let g = &self.grad_lambda;
        [
            dlam[0] * g[0][0] + dlam[1] * g[1][0] + dlam[2] * g[2][0],
            dlam[0] * g[0][1] + dlam[1] * g[1][1] + dlam[2] * g[2][1],
        ]
    }
}

/// Barycentric coordinates of `x` with respect to triangle `p`.
pub fn barycentric(p: [[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
    let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

pub fn to_physical(p: [[f64; 2]; 3], lam: [f64; 3]) -> [f64; 2] {
    [
        lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0],
        lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1],
    ]
}

/// Number of local basis functions of `P_m`.
pub fn local_dofs(degree: usize) -> usize {
    match degree {
        1 => 3,
        2 => 6,
        _ => panic!("unsupported polynomial degree {degree}"),
    }
}

/// Values of the local basis at barycentric point `lam`.
/// Local order: the three vertices, then the midpoints of the edges opposite
/// vertices 0, 1, 2.
#[inline]
pub fn basis_values(degree: usize, lam: [f64; 3], out: &mut [f64]) {
    match degree {
        1 => out[..3].copy_from_slice(&lam),
        _ => {
            for i in 0..3 {
                out[i] = lam[i] * (2.0 * lam[i] - 1.0);
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                out[3 + i] = 4.0 * lam[j] * lam[k];
            }
        }
    }
}

/// Derivatives of each local basis function with respect to the barycentric
/// coordinates at `lam`.
#[inline]
pub fn basis_dlambda(degree: usize, lam: [f64; 3], out: &mut [[f64; 3]]) {
    match degree {
        1 => {
            for (i, o) in out.iter_mut().enumerate().take(3) {
                *o = [0.0; 3];
                o[i] = 1.0;
            }
        }
        _ => {
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                let mut v = [0.0; 3];
                v[i] = 4.0 * lam[i] - 1.0;
                out[i] = v;
                let mut e = [0.0; 3];
                e[j] = 4.0 * lam[k];
                e[k] = 4.0 * lam[j];
                out[3 + i] = e;
            }
        }
    }
}

/// Constant second derivatives `∂²φ/∂λ_a∂λ_b` of the local basis, as a
/// symmetric 3×3 array per basis function. Zero for `P1`.
pub fn basis_d2lambda(degree: usize) -> Vec<[[f64; 3]; 3]> {
    let nb = local_dofs(degree);
    let mut out = vec![[[0.0; 3]; 3]; nb];
    if degree == 2 {
        for i in 0..3 {
            out[i][i][i] = 4.0;
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            out[3 + i][j][k] = 4.0;
            out[3 + i][k][j] = 4.0;
        }
    }
    out
}

/// Basis values and barycentric derivatives tabulated at the points of a rule.
#[derive(Clone, Debug)]
pub struct BasisTable {
    pub rule: QuadratureRule,
    pub nb: usize,
    pub values: Vec<f64>,
    pub dlam: Vec<[f64; 3]>,
}

impl BasisTable {
    pub fn new(degree: usize, rule: QuadratureRule) -> Self {
        let nb = local_dofs(degree);
        let nq = rule.len();
        let mut values = vec![0.0; nq * nb];
        let mut dlam = vec![[0.0; 3]; nq * nb];
        for (q, lam) in rule.points.iter().enumerate() {
            basis_values(degree, *lam, &mut values[q * nb..(q + 1) * nb]);
            basis_dlambda(degree, *lam, &mut dlam[q * nb..(q + 1) * nb]);
        }
        BasisTable {
            rule,
            nb,
            values,
            dlam,
        }
    }

    #[inline]
    pub fn phi(&self, q: usize) -> &[f64] {
        &self.values[q * self.nb..(q + 1) * self.nb]
    }

    #[inline]
    pub fn dphi(&self, q: usize) -> &[[f64; 3]] {
        &self.dlam[q * self.nb..(q + 1) * self.nb]
    }
}

/// Continuous `P_m` Lagrange space on one mesh snapshot.
pub struct FunctionSpace {
    mesh: Arc<Triangulation>,
    degree: usize,
    ndofs: usize,
    elem_dofs: Vec<usize>,
    dof_coords: Vec<[f64; 2]>,
    vertex_dofs: HashMap<usize, usize>,
    pattern: CsrMatrix,
    scatter: Vec<usize>,
    standard: BasisTable,
    high: BasisTable,
    d2: Vec<[[f64; 3]; 3]>,
    pub(crate) mass: OnceLock<CsrMatrix>,
    pub(crate) stiffness: OnceLock<CsrMatrix>,
    pub(crate) mass_factor: OnceLock<SparseCholesky>,
    pub(crate) poisson_factor: OnceLock<SparseCholesky>,
    pub(crate) lumped: OnceLock<Vec<f64>>,
}

impl std::fmt::Debug for FunctionSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionSpace")
            .field("mesh", &self.mesh.id())
            .field("degree", &self.degree)
            .field("ndofs", &self.ndofs)
            .finish()
    }
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Triangulation>, degree: usize) -> Arc<FunctionSpace> {
        let nb = local_dofs(degree);
        let ne = mesh.num_elements();
        let mut vertex_dofs: HashMap<usize, usize> = HashMap::new();
        let mut dof_coords = Vec::new();
        let mut elem_dofs = vec![NONE; ne * nb];
        for k in 0..ne {
            let verts = mesh.element(k).vertices;
            for (i, &v) in verts.iter().enumerate() {
                let d = *vertex_dofs.entry(v).or_insert_with(|| {
                    dof_coords.push(mesh.vertex(v));
                    dof_coords.len() - 1
                });
                elem_dofs[k * nb + i] = d;
            }
        }
        if degree == 2 {
            let mut edge_dofs = vec![NONE; mesh.edges().len()];
            for (e, edge) in mesh.edges().iter().enumerate() {
                let (a, b) = (mesh.vertex(edge.vertices[0]), mesh.vertex(edge.vertices[1]));
                dof_coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                edge_dofs[e] = dof_coords.len() - 1;
            }
            for k in 0..ne {
                let ee = mesh.element_edges(k);
                for i in 0..3 {
                    elem_dofs[k * nb + 3 + i] = edge_dofs[ee[i]];
                }
            }
        }
        let ndofs = dof_coords.len();

        let mut triplets = Vec::with_capacity(ne * nb * nb);
        for k in 0..ne {
            let d = &elem_dofs[k * nb..(k + 1) * nb];
            for &a in d {
                for &b in d {
                    triplets.push((a, b, 0.0));
                }
            }
        }
        let mut pattern = CsrMatrix::from_triplets(ndofs, &triplets);
        pattern.symmetric = true;
        let mut scatter = Vec::with_capacity(ne * nb * nb);
        for k in 0..ne {
            let d = &elem_dofs[k * nb..(k + 1) * nb];
            for &a in d {
                for &b in d {
                    scatter.push(pattern.position(a, b).expect("pattern covers element couplings"));
                }
            }
        }
        let standard = BasisTable::new(degree, QuadratureRule::triangle((2 * degree + 2).max(4)));
        let high = BasisTable::new(degree, QuadratureRule::triangle(4 * degree + 2));
        Arc::new(FunctionSpace {
            mesh,
            degree,
            ndofs,
            elem_dofs,
            dof_coords,
            vertex_dofs,
            pattern,
            scatter,
            standard,
            high,
            d2: basis_d2lambda(degree),
            mass: OnceLock::new(),
            stiffness: OnceLock::new(),
            mass_factor: OnceLock::new(),
            poisson_factor: OnceLock::new(),
            lumped: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    /// Generation stamp: the id of the mesh snapshot this space lives on.
    pub fn stamp(&self) -> u64 {
        self.mesh.id()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    pub fn local_dofs(&self) -> usize {
        local_dofs(self.degree)
    }

    pub fn element_dofs(&self, k: usize) -> &[usize] {
        let nb = self.local_dofs();
        &self.elem_dofs[k * nb..(k + 1) * nb]
    }

    pub fn dof_coords(&self) -> &[[f64; 2]] {
        &self.dof_coords
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.vertex_dofs.get(&v).copied()
    }

    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    pub(crate) fn scatter(&self, k: usize) -> &[usize] {
        let nb2 = self.local_dofs() * self.local_dofs();
        &self.scatter[k * nb2..(k + 1) * nb2]
    }

    /// Rule exact to degree `max(2m+2, 4)`, used for matrices and nonlinear terms.
    pub fn table(&self) -> &BasisTable {
        &self.standard
    }

    /// Rule exact to degree `4m+2`, used for norms and error functionals.
    pub fn high_table(&self) -> &BasisTable {
        &self.high
    }

    pub fn geometry(&self, k: usize) -> ElementGeometry {
        ElementGeometry::new(self.mesh.coords(k))
    }

    /// Constant Hessian `[xx, xy, yy]` of each local basis function on element `k`.
    pub fn basis_hessians(&self, geo: &ElementGeometry) -> Vec<[f64; 3]> {
        let g = &geo.grad_lambda;
        self.d2
            .iter()
            .map(|d| {
                let mut h = [0.0; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        let c = d[a][b];
                        if c != 0.0 {
                            h[0] += c * g[a][0] * g[b][0];
                            h[1] += c * g[a][0] * g[b][1];
                            h[2] += c * g[a][1] * g[b][1];
                        }
                    }
                }
                h
            })
            .collect()
    }

    /// Fail unless `other` is this very space (same mesh snapshot and degree).
    pub fn ensure_same(&self, other: &FunctionSpace) -> Result<()> {
        if self.stamp() != other.stamp() || self.degree != other.degree {
            return Err(Error::InvalidSpace(format!(
                "function lives on mesh {} (P{}), expected mesh {} (P{})",
                other.stamp(),
                other.degree,
                self.stamp(),
                self.degree
            )));
        }
        Ok(())
    }
}
