//! Residual a posteriori estimators for the mixed method and the computable
//! functionals of the conditional error bound.
//!
//! Per element `K` with residuals `R⁽¹⁾ = u̇ − Δφ_h (− g)` and
//! `R⁽²⁾ = −Δu_h + ε⁻²f(u_h) − ε⁻¹φ_h`, and normal-gradient jumps `J⁽ʲ⁾` on its
//! edges:
//!
//! ```text
//! η⁽ʲ⁾_K = h_K ‖R⁽ʲ⁾‖_K + Σ_τ (½ h_τ ‖J⁽ʲ⁾_τ‖²_τ)^{1/2}
//! η_K    = (η⁽¹⁾² + ε⁻² η⁽²⁾²)^{1/2}
//! ```

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::chsolver::{DoubleWell, Forcing, MixedState};
use crate::error::{Error, Result};
use crate::fespace::{assemble_load, barycentric, transfer, FEFunction, FunctionSpace, LineRule};

/// Space dimension entering the ε-powers of the bound.
const DIM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementEstimate {
    /// Active element index in the mesh snapshot.
    pub element: usize,
    pub h: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta: f64,
    pub eta_tilde: f64,
}

#[derive(Clone, Debug)]
pub struct EstimateSet {
    pub t: f64,
    pub elements: Vec<ElementEstimate>,
    /// `max(|u_h|_{H²,broken}, 1)`.
    pub normalizer: f64,
    /// `E = (Σ η̃_K²)^{1/2}`.
    pub global: f64,
}

pub const ESTIMATE_CSV_HEADER: &str = "t,element_id,h_K,eta1,eta2,eta,eta_tilde";

impl EstimateSet {
    /// `Σ η_K²`, the unnormalized quantity entering the bound.
    pub fn sum_eta_squared(&self) -> f64 {
        self.elements.iter().map(|e| e.eta * e.eta).sum()
    }

    /// Unnormalized global estimator `(Σ η_K²)^{1/2}`.
    pub fn unnormalized(&self) -> f64 {
        self.sum_eta_squared().sqrt()
    }

    /// Normalized estimates sorted ascending, ties by element index.
    pub fn sorted(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.elements.iter().map(|e| (e.element, e.eta_tilde)).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v
    }

    /// CSV rows without header.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        for e in &self.elements {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.t, e.element, e.h, e.eta1, e.eta2, e.eta, e.eta_tilde
            )?;
        }
        Ok(())
    }
}

fn check_udot(state: &MixedState, u_dot: &[f64]) -> Result<()> {
    let n = state.space().ndofs();
    if u_dot.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: u_dot.len(),
        });
    }
    Ok(())
}

/// `(‖R⁽¹⁾‖_{L²(K)}, ‖R⁽²⁾‖_{L²(K)})` for every element.
pub fn element_residuals(state: &MixedState, u_dot: &[f64], epsilon: f64) -> Result<Vec<(f64, f64)>> {
    element_residuals_with(state, u_dot, epsilon, None)
}

/// As [`element_residuals`], with the source subtracted from `R⁽¹⁾`.
pub fn element_residuals_with(
    state: &MixedState,
    u_dot: &[f64],
    epsilon: f64,
    forcing: Option<&Forcing>,
) -> Result<Vec<(f64, f64)>> {
    check_udot(state, u_dot)?;
    let space = state.space();
    let mesh = space.mesh();
    let table = space.high_table();
    let nb = space.local_dofs();
    let udot = FEFunction::new(space.clone(), u_dot.to_vec())?;
    let t = state.t;
    Ok((0..mesh.num_elements())
        .into_par_iter()
        .map(|k| {
            let (mut cu, mut cp, mut cd) = ([0.0; 6], [0.0; 6], [0.0; 6]);
            state.u.local(k, &mut cu[..nb]);
            state.phi.local(k, &mut cp[..nb]);
            udot.local(k, &mut cd[..nb]);
            let geo = space.geometry(k);
            let (mut lap_u, mut lap_phi) = (0.0, 0.0);
            for (b, h) in space.basis_hessians(&geo).iter().enumerate() {
                lap_u += cu[b] * (h[0] + h[2]);
                lap_phi += cp[b] * (h[0] + h[2]);
            }
            let coords = mesh.coords(k);
            let (mut r1, mut r2) = (0.0, 0.0);
            for q in 0..table.rule.len() {
                let phi = table.phi(q);
                let dot = |c: &[f64]| -> f64 { phi.iter().zip(c).map(|(a, b)| a * b).sum() };
                let (u, p, d) = (dot(&cu[..nb]), dot(&cp[..nb]), dot(&cd[..nb]));
                let g = forcing.map_or(0.0, |g| {
                    let x = crate::fespace::to_physical(coords, table.rule.points[q]);
                    g(t, x[0], x[1])
                });
                let a = d - lap_phi - g;
                let b = -lap_u + DoubleWell::f(u) / (epsilon * epsilon) - p / epsilon;
                r1 += table.rule.weights[q] * a * a;
                r2 += table.rule.weights[q] * b * b;
            }
            ((r1 * geo.area).sqrt(), (r2 * geo.area).sqrt())
        })
        .collect())
}

/// `(‖J⁽¹⁾‖_{L²(τ)}, ‖J⁽²⁾‖_{L²(τ)})` for every edge, indexed like `mesh.edges()`.
/// Interior: jump of the normal derivative of `φ_h` resp. `u_h`; boundary:
/// twice the outward normal derivative.
pub fn edge_jumps(state: &MixedState) -> Vec<(f64, f64)> {
    let space = state.space();
    let mesh = space.mesh();
    let rule = LineRule::with_degree(2 * space.degree());
    mesh.edges()
        .par_iter()
        .enumerate()
        .map(|(e, edge)| {
            let a = mesh.vertex(edge.vertices[0]);
            let b = mesh.vertex(edge.vertices[1]);
            let len = mesh.edge_length(e);
            let k1 = edge.elements[0].expect("every edge has an element");
            let n = mesh.outward_normal(e, k1);
            let normal_derivs = |k: usize, x: [f64; 2]| -> (f64, f64) {
                let lam = barycentric(mesh.coords(k), x);
                let gp = state.phi.grad_local(k, lam);
                let gu = state.u.grad_local(k, lam);
                (gp[0] * n[0] + gp[1] * n[1], gu[0] * n[0] + gu[1] * n[1])
            };
            let (mut j1, mut j2) = (0.0, 0.0);
            for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let (p1, u1) = normal_derivs(k1, x);
                let (jp, ju) = match edge.elements[1] {
                    Some(k2) => {
                        let (p2, u2) = normal_derivs(k2, x);
                        (p1 - p2, u1 - u2)
                    }
                    None => (2.0 * p1, 2.0 * u1),
                };
                j1 += w * jp * jp;
                j2 += w * ju * ju;
            }
            ((j1 * len).sqrt(), (j2 * len).sqrt())
        })
        .collect()
}

/// All local estimators at the state's time.
pub fn local_estimators(state: &MixedState, u_dot: &[f64], epsilon: f64) -> Result<EstimateSet> {
    local_estimators_with(state, u_dot, epsilon, None)
}

pub fn local_estimators_with(
    state: &MixedState,
    u_dot: &[f64],
    epsilon: f64,
    forcing: Option<&Forcing>,
) -> Result<EstimateSet> {
    let residuals = element_residuals_with(state, u_dot, epsilon, forcing)?;
    let jumps = edge_jumps(state);
    let mesh = state.space().mesh();
    let normalizer = state.u.h2_broken_seminorm().max(1.0);
    let elements: Vec<ElementEstimate> = (0..mesh.num_elements())
        .map(|k| {
            let h = mesh.diameter(k);
            let (mut s1, mut s2) = (0.0, 0.0);
            for e in mesh.element_edges(k) {
                let ht = mesh.edge_length(e);
                s1 += (0.5 * ht * jumps[e].0 * jumps[e].0).sqrt();
                s2 += (0.5 * ht * jumps[e].1 * jumps[e].1).sqrt();
            }
            let eta1 = h * residuals[k].0 + s1;
            let eta2 = h * residuals[k].1 + s2;
            let eta = (eta1 * eta1 + eta2 * eta2 / (epsilon * epsilon)).sqrt();
            ElementEstimate {
                element: k,
                h,
                eta1,
                eta2,
                eta,
                eta_tilde: eta / normalizer,
            }
        })
        .collect();
    let global = elements.iter().map(|e| e.eta_tilde * e.eta_tilde).sum::<f64>().sqrt();
    Ok(EstimateSet {
        t: state.t,
        elements,
        normalizer,
        global,
    })
}

/// The unknown constants of the stability estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub c: f64,
    pub c0: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { c: 1.0, c0: 1.0 }
    }
}

impl BoundConstants {
    /// `a = 2C₀ + 8`.
    pub fn rate(&self) -> f64 {
        2.0 * self.c0 + 8.0
    }
}

/// Running `I(t) = ∫₀ᵗ e^{−as} Σ_K η_K(s)² ds` by the trapezoidal rule over
/// the sampled times, plus the initial error `e₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundAccumulator {
    pub constants: BoundConstants,
    pub e0: f64,
    pub integral: f64,
    /// Last sample: time, `e^{−at}Ση²` and the normalized `E`.
    last: Option<(f64, f64, f64)>,
}

impl BoundAccumulator {
    pub fn new(e0: f64, constants: BoundConstants) -> BoundAccumulator {
        BoundAccumulator {
            constants,
            e0,
            integral: 0.0,
            last: None,
        }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.last.map(|l| l.0)
    }

    /// Add the sample `Σ_K η_K(t)² = sum_eta_sq`.
    pub fn accumulate(&mut self, t: f64, sum_eta_sq: f64) -> Result<()> {
        self.accumulate_sample(t, sum_eta_sq, f64::NAN)
    }

    pub fn accumulate_set(&mut self, set: &EstimateSet) -> Result<()> {
        self.accumulate_sample(set.t, set.sum_eta_squared(), set.global)
    }

    fn accumulate_sample(&mut self, t: f64, sum_eta_sq: f64, global: f64) -> Result<()> {
        let weighted = (-self.constants.rate() * t).exp() * sum_eta_sq;
        if let Some((t0, w0, _)) = self.last {
            if t < t0 {
                return Err(Error::TimeOrdering { previous: t0, next: t });
            }
            self.integral += 0.5 * (t - t0) * (w0 + weighted);
        }
        self.last = Some((t, weighted, global));
        Ok(())
    }

    /// Evaluate the bound functionals at `t` for interface width `epsilon`.
    pub fn report(&self, epsilon: f64, t: f64) -> BoundReport {
        let BoundConstants { c, c0 } = self.constants;
        let growth = (self.constants.rate() * t).exp();
        let e0sq = self.e0 * self.e0;
        let xi_hat = 1.0 - c * epsilon.powf(-5.0 * (2.0 + DIM) / 2.0) * growth * (e0sq + self.integral);
        let valid = xi_hat > 0.0;
        // ∫₀ᵗ e^{a(t−s)} Ση² ds = e^{at} I(t).
        let weighted = growth * self.integral;
        let (bound_u, bound_phi) = if valid {
            let inv = 1.0 / xi_hat;
            (
                inv * e0sq * growth + c * (1.0 + inv) * weighted,
                c / (epsilon * epsilon) * ((1.0 + inv) * weighted + inv * e0sq * growth),
            )
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        BoundReport {
            t,
            estimate: self.last.map_or(f64::NAN, |l| l.2),
            e0: self.e0,
            integral: self.integral,
            xi_hat,
            valid,
            bound_u,
            bound_phi,
            smallness_lhs: (e0sq + c * self.integral).sqrt(),
            smallness_rhs: (-(c0 + 4.0) * t).exp() * epsilon.powf(5.0 * (2.0 + DIM) / 4.0) / c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub t: f64,
    /// Normalized global estimator `E` of the last sample.
    pub estimate: f64,
    pub e0: f64,
    pub integral: f64,
    pub xi_hat: f64,
    pub valid: bool,
    pub bound_u: f64,
    pub bound_phi: f64,
    pub smallness_lhs: f64,
    pub smallness_rhs: f64,
}

pub const BOUND_CSV_HEADER: &str = "t,E,e0,I,xi_hat,valid,bound_u,bound_phi,smallness_lhs,smallness_rhs";

impl BoundReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.estimate,
            self.e0,
            self.integral,
            self.xi_hat,
            u8::from(self.valid),
            self.bound_u,
            self.bound_phi,
            self.smallness_lhs,
            self.smallness_rhs
        )
    }
}

/// Space on the once uniformly refined mesh, where analytic data is integrated.
fn reference_space(space: &Arc<FunctionSpace>) -> Arc<FunctionSpace> {
    FunctionSpace::new(Arc::new(space.mesh().refine_uniform()), space.degree())
}

/// `∫_Ω u₀` with the quadrature used by [`initial_dual_error`].
pub fn reference_integral(u0: &(dyn Fn(f64, f64) -> f64 + Sync), space: &Arc<FunctionSpace>) -> f64 {
    assemble_load(&reference_space(space), u0).iter().sum()
}

/// `e₀ = ‖∇Δ⁻¹(u_{0h} − u₀)‖`, integrating `u₀` on the once refined mesh.
pub fn initial_dual_error(u0: &(dyn Fn(f64, f64) -> f64 + Sync), u0h: &FEFunction) -> Result<f64> {
    let fine = reference_space(u0h.space());
    let lifted = transfer(u0h, &fine)?;
    let exact = assemble_load(&fine, u0);
    let load: Vec<f64> = fine
        .mass()
        .matvec(lifted.coeffs())
        .iter()
        .zip(&exact)
        .map(|(a, b)| a - b)
        .collect();
    let mean: f64 = load.iter().sum();
    let scale: f64 = exact.iter().map(|v| v.abs()).sum::<f64>() + load.iter().map(|v| v.abs()).sum::<f64>();
    if mean.abs() > 1e-10 * scale + 1e-14 {
        return Err(Error::Precondition(format!(
            "initial data and its approximation differ in mean by {mean:e}"
        )));
    }
    // Remove the admissible quadrature-level mean so the Neumann solve is well posed.
    let total: f64 = fine.basis_integrals().iter().sum();
    let corrected: Vec<f64> = load
        .iter()
        .zip(fine.basis_integrals())
        .map(|(l, m)| l - mean * m / total)
        .collect();
    fine.inv_laplacian_norm_of_load(&corrected)
}
