//! Time integration of the mixed Cahn–Hilliard system
//!
//! ```text
//! M u̇ + K φ = 0
//! ε K u + ε⁻¹ (f(u), ψ) − M φ = 0
//! ```
//!
//! with implicit backward Euler or variable-step BDF2, Newton's method on the
//! coupled block system, and a step-size controller driven by a BE-vs-BDF2
//! local error estimate and the energy monitor.

mod potential;
mod stepper;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use potential::DoubleWell;
pub use stepper::{StepReport, Stepper};

use crate::error::{Error, Result};
use crate::fespace::{assemble_composed_load, assemble_load, transfer, FEFunction, FunctionSpace};

/// Source term `g(t, x, y)` on the right of the first equation.
pub type Forcing = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    Bdf2,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::BackwardEuler => "backward-euler",
            Scheme::Bdf2 => "bdf2",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "backward-euler" | "be" => Ok(Scheme::BackwardEuler),
            "bdf2" => Ok(Scheme::Bdf2),
            _ => Err(format!("unknown scheme `{s}` (expected backward-euler or bdf2)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperConfig {
    pub epsilon: f64,
    pub scheme: Scheme,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub temporal_rtol: f64,
    /// Drop the nonlinearity: `f ≡ 0`.
    pub linearized: bool,
    /// Eyre splitting: `u³` implicit, `−u` explicit.
    pub convex_splitting: bool,
    /// Keep a factored Jacobian across Newton iterations and steps while it
    /// still contracts the residual fast enough. `false` gives full Newton.
    pub reuse_jacobian: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            epsilon: 0.05,
            scheme: Scheme::Bdf2,
            dt_init: 1e-6,
            dt_min: 1e-12,
            dt_max: 1e-2,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            temporal_rtol: 1e-5,
            linearized: false,
            convex_splitting: false,
            reuse_jacobian: true,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [
            ("epsilon", self.epsilon),
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("newton_tol", self.newton_tol),
            ("temporal_rtol", self.temporal_rtol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(format!(
                "need dt_min <= dt_init <= dt_max, got {} <= {} <= {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if self.newton_max_iter == 0 {
            return Err("newton_max_iter must be at least 1".into());
        }
        if self.linearized && self.convex_splitting {
            return Err("linearized and convex_splitting are mutually exclusive".into());
        }
        Ok(())
    }

    fn semidiscrete_f(&self) -> fn(f64) -> f64 {
        if self.linearized {
            |_| 0.0
        } else {
            DoubleWell::f
        }
    }
}

/// The pair `(u_h, φ_h)` at time `t` on one space.
#[derive(Clone, Debug)]
pub struct MixedState {
    pub u: FEFunction,
    pub phi: FEFunction,
    pub t: f64,
    mass: f64,
}

impl MixedState {
    pub fn new(u: FEFunction, phi: FEFunction, t: f64) -> Result<MixedState> {
        u.space().ensure_same(phi.space())?;
        let mass = u.integral();
        Ok(MixedState { u, phi, t, mass })
    }

    /// State whose potential solves `M φ = ε K u + ε⁻¹ (f(u), ψ)`.
    pub fn with_consistent_potential(u: FEFunction, t: f64, config: &StepperConfig) -> Result<MixedState> {
        let space = u.space().clone();
        let eps = config.epsilon;
        let mut rhs = space.stiffness().matvec(u.coeffs());
        let nl = assemble_composed_load(&space, &u, config.semidiscrete_f())?;
        for (r, n) in rhs.iter_mut().zip(&nl) {
            *r = eps * *r + n / eps;
        }
        let phi = FEFunction::new(space.clone(), space.mass_solve(&rhs))?;
        MixedState::new(u, phi, t)
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        self.u.space()
    }

    /// Cached `∫u_h`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Move both fields onto `target`.
    pub fn transfer_to(&self, target: &Arc<FunctionSpace>) -> Result<MixedState> {
        MixedState::new(transfer(&self.u, target)?, transfer(&self.phi, target)?, self.t)
    }
}

/// Block residual `[M u̇ + K φ ; ε K u + ε⁻¹ (f(u), ψ) − M φ]`.
pub fn semidiscrete_residual(state: &MixedState, u_dot: &[f64], config: &StepperConfig) -> Result<Vec<f64>> {
    let space = state.space();
    let n = space.ndofs();
    if u_dot.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: u_dot.len(),
        });
    }
    let (m, k) = (space.mass(), space.stiffness());
    let eps = config.epsilon;
    let mut out = m.matvec(u_dot);
    for (o, v) in out.iter_mut().zip(k.matvec(state.phi.coeffs())) {
        *o += v;
    }
    let ku = k.matvec(state.u.coeffs());
    let mphi = m.matvec(state.phi.coeffs());
    let nl = assemble_composed_load(space, &state.u, config.semidiscrete_f())?;
    out.extend((0..n).map(|i| eps * ku[i] + nl[i] / eps - mphi[i]));
    Ok(out)
}

/// `J(u) = ∫ ½|∇u|² + ε⁻² F(u)`.
pub fn energy(state: &MixedState, epsilon: f64) -> f64 {
    let u = &state.u;
    let space = u.space();
    let gradient = 0.5 * space.stiffness().inner(u.coeffs(), u.coeffs());
    gradient + potential_integral(u) / (epsilon * epsilon)
}

/// `∫F(u_h)` with the high-order rule.
pub(crate) fn potential_integral(u: &FEFunction) -> f64 {
    use rayon::prelude::*;
    let space = u.space();
    let t = space.high_table();
    let nb = space.local_dofs();
    (0..space.mesh().num_elements())
        .into_par_iter()
        .map(|k| {
            let mut c = [0.0; 6];
            u.local(k, &mut c[..nb]);
            let mut s = 0.0;
            for q in 0..t.rule.len() {
                let v: f64 = t.phi(q).iter().zip(&c[..nb]).map(|(p, c)| p * c).sum();
                s += t.rule.weights[q] * DoubleWell::energy_density(v);
            }
            s * space.mesh().area(k)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// `u̇ = −M⁻¹ K φ`, the time derivative implied by the first equation.
pub fn dudt(state: &MixedState) -> Vec<f64> {
    dudt_with(state, None)
}

/// `u̇ = M⁻¹((g(t), ψ) − K φ)`.
pub fn dudt_with(state: &MixedState, forcing: Option<&Forcing>) -> Vec<f64> {
    let space = state.space();
    let kphi = space.stiffness().matvec(state.phi.coeffs());
    let mut rhs: Vec<f64> = kphi.iter().map(|v| -v).collect();
    if let Some(g) = forcing {
        let t = state.t;
        for (r, s) in rhs.iter_mut().zip(assemble_load(space, |x, y| g(t, x, y))) {
            *r += s;
        }
    }
    space.mass_solve(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{AnalyticField, CosineMode};
    use crate::mesh::Triangulation;

    fn space(n: usize, degree: usize) -> Arc<FunctionSpace> {
        FunctionSpace::new(Arc::new(Triangulation::uniform(n)), degree)
    }

    fn constant_state(s: &Arc<FunctionSpace>, u: f64) -> MixedState {
        MixedState::new(FEFunction::constant(s.clone(), u), FEFunction::zeros(s.clone()), 0.0).unwrap()
    }

    #[test]
    fn equilibria_have_zero_residual() {
        let s = space(3, 2);
        let cfg = StepperConfig::default();
        for u in [1.0, 0.0, -1.0] {
            let r = semidiscrete_residual(&constant_state(&s, u), &vec![0.0; s.ndofs()], &cfg).unwrap();
            assert!(r.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn half_state_residual_is_scaled_basis_integral() {
        let s = space(3, 2);
        let cfg = StepperConfig {
            epsilon: 0.3,
            ..Default::default()
        };
        let r = semidiscrete_residual(&constant_state(&s, 0.5), &vec![0.0; s.ndofs()], &cfg).unwrap();
        let n = s.ndofs();
        let ones = s.basis_integrals();
        for i in 0..n {
            assert!(r[i].abs() < 1e-15);
            assert!((r[n + i] - (-0.375 / 0.3) * ones[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn residual_rejects_wrong_length() {
        let s = space(2, 2);
        let st = constant_state(&s, 1.0);
        assert!(matches!(
            semidiscrete_residual(&st, &[0.0; 3], &StepperConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let s = space(4, 2);
        assert!(energy(&constant_state(&s, 1.0), 0.1).abs() < 1e-12);
        assert!((energy(&constant_state(&s, 0.0), 0.1) - 100.0).abs() < 1e-10);
        let p1 = space(4, 1);
        let u = FEFunction::interpolate(p1.clone(), |x, _| x);
        let st = MixedState::new(u, FEFunction::zeros(p1), 0.0).unwrap();
        assert!((energy(&st, 1.0) - (2.0 + 8.0 / 15.0)).abs() < 1e-12);
    }

    #[test]
    fn dudt_examples() {
        let s = space(6, 2);
        assert!(dudt(&constant_state(&s, 0.3)).iter().all(|v| *v == 0.0));
        let phi = FEFunction::constant(s.clone(), 2.5);
        let st = MixedState::new(FEFunction::zeros(s.clone()), phi, 0.0).unwrap();
        assert!(dudt(&st).iter().all(|v| v.abs() < 1e-12));
        let phi = FEFunction::interpolate(s.clone(), |x, y| CosineMode.value(x, y));
        let st = MixedState::new(FEFunction::zeros(s.clone()), phi, 0.0).unwrap();
        let ud = dudt(&st);
        let mut r = s.mass().matvec(&ud);
        for (a, b) in r.iter_mut().zip(s.stiffness().matvec(st.phi.coeffs())) {
            *a += b;
        }
        assert!(r.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::BackwardEuler, Scheme::Bdf2] {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert!("ndf".parse::<Scheme>().is_err());
    }
}
