use std::sync::Arc;

use super::{potential_integral, DoubleWell, Forcing, MixedState, Scheme, StepperConfig};
use crate::error::{Error, Result};
use crate::fespace::{assemble_composed_load, assemble_load, assemble_weighted_mass, FEFunction, FunctionSpace};
use crate::linalg::{CsrMatrix, LbltAnalysis, SparseLblt};

/// Outcome of one call to [`Stepper::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub accepted: bool,
    pub newton_iterations: usize,
    /// Scaled residual norm after each Newton evaluation.
    pub residuals: Vec<f64>,
    pub error_estimate: f64,
    pub dt: f64,
    /// `‖J δ + G‖_∞` of the last Newton correction.
    pub linear_residual: f64,
    /// Attempts discarded before the accepted one.
    pub rejections: usize,
    pub scheme: Scheme,
}

/// Two-level time discretization `(α u − β)/dt` of `u̇`.
#[derive(Clone, Debug)]
struct Discretization {
    alpha: f64,
    beta: Vec<f64>,
    scheme: Scheme,
    /// `dt·(g(tⁿ⁺¹), ψ_i)`, empty without forcing.
    source: Vec<f64>,
}

impl Discretization {
    fn backward_euler(u_n: &[f64]) -> Self {
        Discretization {
            alpha: 1.0,
            beta: u_n.to_vec(),
            scheme: Scheme::BackwardEuler,
            source: Vec::new(),
        }
    }

    /// Variable-step BDF2 with step ratio `ω = dt / dt_prev`.
    fn bdf2(u_n: &[f64], u_prev: &[f64], omega: f64) -> Self {
        let c = omega * omega / (1.0 + omega);
        Discretization {
            alpha: (1.0 + 2.0 * omega) / (1.0 + omega),
            beta: u_n.iter().zip(u_prev).map(|(a, b)| (1.0 + omega) * a - c * b).collect(),
            scheme: Scheme::Bdf2,
            source: Vec::new(),
        }
    }
}

struct History {
    stamp: u64,
    u_prev: Vec<f64>,
    dt_prev: f64,
}

/// Interleaved `(u_i, φ_i)` pattern of the block system on one space.
struct BlockPattern {
    stamp: u64,
    matrix: CsrMatrix,
    analysis: LbltAnalysis,
}

impl BlockPattern {
    fn new(space: &FunctionSpace) -> Result<Self> {
        let p = space.pattern();
        let n = p.n;
        let mut row_ptr = Vec::with_capacity(2 * n + 1);
        let mut col_idx = Vec::with_capacity(4 * p.nnz());
        row_ptr.push(0);
        for i in 0..n {
            let cols = &p.col_idx[p.row_ptr[i]..p.row_ptr[i + 1]];
            for _ in 0..2 {
                for &j in cols {
                    col_idx.push(2 * j);
                    col_idx.push(2 * j + 1);
                }
                row_ptr.push(col_idx.len());
            }
        }
        let nnz = col_idx.len();
        let matrix = CsrMatrix {
            n: 2 * n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
            symmetric: true,
        };
        Ok(BlockPattern {
            stamp: space.stamp(),
            analysis: LbltAnalysis::new(&matrix)?,
            matrix,
        })
    }
}

/// Adaptive implicit integrator owning the step size and the two-level history.
pub struct Stepper {
    config: StepperConfig,
    dt: f64,
    history: Option<History>,
    pattern: Option<BlockPattern>,
    frozen: Option<Frozen>,
    forcing: Option<Forcing>,
}

/// A factored Jacobian kept for reuse, with the matrix it came from.
struct Frozen {
    stamp: u64,
    jac: CsrMatrix,
    lu: Arc<Factored>,
}

/// Factors of the Jacobian with its odd rows scaled by `−1/α`, which makes it
/// symmetric: `[εK + W/ε, −M; −M, −(dt/α)K]`.
struct Factored {
    lblt: SparseLblt,
    alpha: f64,
}

impl Factored {
    fn factor(analysis: &LbltAnalysis, jac: &CsrMatrix, alpha: f64) -> Result<Factored> {
        Ok(Factored {
            lblt: analysis.factor(jac)?,
            alpha,
        })
    }

    /// Solve `J x = b` for the unscaled Jacobian.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(i, v)| if i % 2 == 1 { -v / self.alpha } else { *v })
            .collect();
        self.lblt.solve(&scaled)
    }

    /// `J x` for the unscaled Jacobian, given the scaled matrix that was factored.
    fn apply(&self, jac: &CsrMatrix, x: &[f64]) -> Vec<f64> {
        let mut y = jac.matvec(x);
        for v in y.iter_mut().skip(1).step_by(2) {
            *v *= -self.alpha;
        }
        y
    }
}

/// Refactor once a stale Jacobian reduces the residual by less than this.
const REUSE_CONTRACTION: f64 = 0.2;

enum Attempt {
    Accepted(MixedState, StepReport),
    NewtonFailed(f64),
    Rejected,
}

struct Newton {
    y: Vec<f64>,
    iterations: usize,
    residuals: Vec<f64>,
    linear_residual: f64,
    lu: Option<Arc<Factored>>,
}

impl Stepper {
    pub fn new(config: StepperConfig) -> Result<Stepper> {
        config
            .validate()
            .map_err(|m| Error::Precondition(format!("stepper config: {m}")))?;
        Ok(Stepper {
            dt: config.dt_init,
            config,
            history: None,
            pattern: None,
            frozen: None,
            forcing: None,
        })
    }

    /// Add the source `g` to the first equation: `M u̇ + K φ = (g, ψ)`.
    pub fn with_forcing(mut self, forcing: Forcing) -> Stepper {
        self.forcing = Some(forcing);
        self
    }

    pub fn forcing(&self) -> Option<&Forcing> {
        self.forcing.as_ref()
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    /// Step size proposed for the next attempt.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt.clamp(self.config.dt_min, self.config.dt_max);
    }

    /// Forget the previous step, so the next one starts with backward Euler.
    pub fn reset_history(&mut self) {
        self.history = None;
    }

    /// Energy monitored by the controller: `J` for the nonlinear models,
    /// `½|u|²_{H¹}` when the nonlinearity is switched off.
    pub fn monitored_energy(&self, state: &MixedState) -> f64 {
        let u = &state.u;
        let grad = 0.5 * u.space().stiffness().inner(u.coeffs(), u.coeffs());
        if self.config.linearized {
            grad
        } else {
            grad + potential_integral(u) / (self.config.epsilon * self.config.epsilon)
        }
    }

    /// Advance by one accepted step, never past `t_limit`.
    pub fn step(&mut self, state: &MixedState, t_limit: Option<f64>) -> Result<(MixedState, StepReport)> {
        if self.history.as_ref().is_some_and(|h| h.stamp != state.space().stamp()) {
            self.history = None;
        }
        if self.pattern.as_ref().is_none_or(|p| p.stamp != state.space().stamp()) {
            self.pattern = Some(BlockPattern::new(state.space())?);
        }
        if self.frozen.as_ref().is_some_and(|f| f.stamp != state.space().stamp()) {
            self.frozen = None;
        }
        let energy_before = self.monitored_energy(state);
        let mut rejections = 0;
        loop {
            let mut dt = self.dt;
            let mut clipped = false;
            if let Some(tl) = t_limit {
                if state.t + dt >= tl {
                    dt = tl - state.t;
                    clipped = true;
                }
            }
            match self.attempt(state, dt, energy_before)? {
                Attempt::Accepted(next, mut report) => {
                    report.rejections = rejections;
                    self.history = Some(History {
                        stamp: state.space().stamp(),
                        u_prev: state.u.coeffs().to_vec(),
                        dt_prev: dt,
                    });
                    let err = report.error_estimate;
                    let grow = if err > 0.0 {
                        (0.9 * (self.config.temporal_rtol / err).sqrt()).clamp(0.2, 1.5)
                    } else {
                        1.5
                    };
                    if !clipped || grow < 1.0 {
                        self.dt = (dt * grow).clamp(self.config.dt_min, self.config.dt_max);
                    }
                    return Ok((next, report));
                }
                Attempt::NewtonFailed(residual) => {
                    rejections += 1;
                    self.dt = 0.5 * dt;
                    if self.dt < self.config.dt_min {
                        return Err(Error::NonConvergence { t: state.t, residual });
                    }
                }
                Attempt::Rejected => {
                    rejections += 1;
                    self.dt = 0.5 * dt;
                    if self.dt < self.config.dt_min {
                        return Err(Error::StiffFailure {
                            t: state.t,
                            dt: self.dt,
                            dt_min: self.config.dt_min,
                        });
                    }
                }
            }
        }
    }

    fn discretization(&self, state: &MixedState, dt: f64) -> Discretization {
        let u_n = state.u.coeffs();
        match &self.history {
            Some(h) if self.config.scheme == Scheme::Bdf2 => Discretization::bdf2(u_n, &h.u_prev, dt / h.dt_prev),
            _ => Discretization::backward_euler(u_n),
        }
    }

    fn attempt(&mut self, state: &MixedState, dt: f64, energy_before: f64) -> Result<Attempt> {
        let space = state.space().clone();
        let mut disc = self.discretization(state, dt);
        if let Some(g) = &self.forcing {
            let t = state.t + dt;
            disc.source = assemble_load(&space, |x, y| dt * g(t, x, y));
        }
        let newton = match self.newton(state, &space, &disc, dt)? {
            Ok(n) => n,
            Err(r) => return Ok(Attempt::NewtonFailed(r)),
        };
        let n = space.ndofs();
        let (u, phi): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (newton.y[2 * i], newton.y[2 * i + 1])).unzip();
        let next = MixedState::new(
            FEFunction::new(space.clone(), u)?,
            FEFunction::new(space.clone(), phi)?,
            state.t + dt,
        )?;
        let error_estimate = self.local_error(state, &next, &space, &disc, dt, newton.lu)?;
        if !(error_estimate <= self.config.temporal_rtol) {
            return Ok(Attempt::Rejected);
        }
        let energy_after = self.monitored_energy(&next);
        if energy_after > energy_before + 1e-6 * (1.0 + energy_before.abs()) {
            return Ok(Attempt::Rejected);
        }
        Ok(Attempt::Accepted(
            next,
            StepReport {
                accepted: true,
                newton_iterations: newton.iterations,
                residuals: newton.residuals,
                error_estimate,
                dt,
                linear_residual: newton.linear_residual,
                rejections: 0,
                scheme: disc.scheme,
            },
        ))
    }

    /// Interleaved residual `[G2_i ; dt·G1_i]`.
    fn residual(&self, space: &Arc<FunctionSpace>, state: &MixedState, disc: &Discretization, dt: f64, y: &[f64]) -> Result<Vec<f64>> {
        let n = space.ndofs();
        let eps = self.config.epsilon;
        let (u, phi): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (y[2 * i], y[2 * i + 1])).unzip();
        let (m, k) = (space.mass(), space.stiffness());
        let uf = FEFunction::new(space.clone(), u)?;
        let nl = self.nonlinear_load(space, state, &uf)?;
        let shifted: Vec<f64> = uf.coeffs().iter().zip(&disc.beta).map(|(a, b)| disc.alpha * a - b).collect();
        let m_shift = m.matvec(&shifted);
        let k_phi = k.matvec(&phi);
        let k_u = k.matvec(uf.coeffs());
        let m_phi = m.matvec(&phi);
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            g[2 * i] = eps * k_u[i] + nl[i] / eps - m_phi[i];
            g[2 * i + 1] = m_shift[i] + dt * k_phi[i];
        }
        for (i, s) in disc.source.iter().enumerate() {
            g[2 * i + 1] -= s;
        }
        Ok(g)
    }

    /// `(f_impl(u), ψ) − (f_expl(uⁿ), ψ)` for the configured treatment of `f`.
    fn nonlinear_load(&self, space: &Arc<FunctionSpace>, state: &MixedState, u: &FEFunction) -> Result<Vec<f64>> {
        if self.config.linearized {
            Ok(vec![0.0; space.ndofs()])
        } else if self.config.convex_splitting {
            let mut v = assemble_composed_load(space, u, |s| s * s * s)?;
            for (a, b) in v.iter_mut().zip(space.mass().matvec(state.u.coeffs())) {
                *a -= b;
            }
            Ok(v)
        } else {
            assemble_composed_load(space, u, DoubleWell::f)
        }
    }

    fn jacobian(&mut self, space: &Arc<FunctionSpace>, disc: &Discretization, dt: f64, u: &FEFunction) -> Result<CsrMatrix> {
        let eps = self.config.epsilon;
        let w = if self.config.linearized {
            None
        } else if self.config.convex_splitting {
            Some(assemble_weighted_mass(space, u, |s| 3.0 * s * s)?)
        } else {
            Some(assemble_weighted_mass(space, u, DoubleWell::df)?)
        };
        let (m, k) = (space.mass(), space.stiffness());
        let p = space.pattern();
        let pattern = self.pattern.as_mut().expect("pattern built in step");
        let a = &mut pattern.matrix;
        for i in 0..p.n {
            let (start, end) = (p.row_ptr[i], p.row_ptr[i + 1]);
            let len = end - start;
            let base = 4 * start;
            for (r, q) in (start..end).enumerate() {
                let wq = w.as_ref().map_or(0.0, |w| w.values[q]);
                a.values[base + 2 * r] = eps * k.values[q] + wq / eps;
                a.values[base + 2 * r + 1] = -m.values[q];
                a.values[base + 2 * len + 2 * r] = -m.values[q];
                a.values[base + 2 * len + 2 * r + 1] = -dt / disc.alpha * k.values[q];
            }
        }
        Ok(a.clone())
    }

    /// Newton on the coupled system. The inner `Err` carries the last residual on failure.
    fn newton(
        &mut self,
        state: &MixedState,
        space: &Arc<FunctionSpace>,
        disc: &Discretization,
        dt: f64,
    ) -> Result<std::result::Result<Newton, f64>> {
        let n = space.ndofs();
        let mut y = vec![0.0; 2 * n];
        for i in 0..n {
            y[2 * i] = state.u.coeffs()[i];
            y[2 * i + 1] = state.phi.coeffs()[i];
        }
        let mut residuals = Vec::new();
        let mut linear_residual = 0.0;
        let mut lu = None;
        let reuse = self.config.reuse_jacobian;
        let stamp = space.stamp();
        // Iterate and residual before the last stale update, to fall back to.
        let mut previous: Option<(Vec<f64>, Vec<f64>, f64, bool)> = None;
        let mut g = self.residual(space, state, disc, dt, &y)?;
        for it in 1..=self.config.newton_max_iter {
            let r = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            residuals.push(r);
            if !r.is_finite() && previous.is_none() {
                return Ok(Err(r));
            }
            if r <= self.config.newton_tol {
                return Ok(Ok(Newton {
                    y,
                    iterations: it,
                    residuals,
                    linear_residual,
                    lu,
                }));
            }
            if it == self.config.newton_max_iter {
                return Ok(Err(r));
            }
            let mut fresh = !reuse || self.frozen.is_none();
            if let Some((y0, g0, r0, was_fresh)) = previous.take() {
                if !(r <= REUSE_CONTRACTION * r0) {
                    fresh = true;
                    if !was_fresh {
                        // The stale Jacobian was not good enough: redo that update.
                        y = y0;
                        g = g0;
                    }
                }
            }
            if fresh {
                let u = FEFunction::new(space.clone(), (0..n).map(|i| y[2 * i]).collect())?;
                let jac = self.jacobian(space, disc, dt, &u)?;
                let analysis = &self.pattern.as_ref().expect("pattern built in step").analysis;
                let factor = match Factored::factor(analysis, &jac, disc.alpha) {
                    Ok(f) => Arc::new(f),
                    Err(_) => return Ok(Err(r)),
                };
                self.frozen = Some(Frozen { stamp, jac, lu: factor });
            }
            let frozen = self.frozen.as_ref().expect("factor available");
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let delta = frozen.lu.solve(&rhs);
            if delta.iter().any(|d| !d.is_finite()) {
                return Ok(Err(r));
            }
            let jd = frozen.lu.apply(&frozen.jac, &delta);
            linear_residual = jd.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
            lu = Some(frozen.lu.clone());
            if reuse {
                previous = Some((y.clone(), std::mem::take(&mut g), r, fresh));
            }
            for (a, d) in y.iter_mut().zip(&delta) {
                *a += d;
            }
            g = self.residual(space, state, disc, dt, &y)?;
        }
        unreachable!("loop returns on the last iteration")
    }

    /// RMS `L²` size of the difference to the companion scheme.
    fn local_error(
        &mut self,
        state: &MixedState,
        next: &MixedState,
        space: &Arc<FunctionSpace>,
        disc: &Discretization,
        dt: f64,
        lu: Option<Arc<Factored>>,
    ) -> Result<f64> {
        let m = space.mass();
        let area = space.mesh().total_area();
        let rms = |d: &[f64]| (m.inner(d, d).max(0.0) / area).sqrt();
        let u_star = next.u.coeffs();
        let companion = match (&self.history, disc.scheme) {
            (None, _) => {
                // No history yet: compare with forward Euler.
                let udot = super::dudt_with(state, self.forcing.as_ref());
                let d: Vec<f64> = (0..u_star.len())
                    .map(|i| u_star[i] - state.u.coeffs()[i] - dt * udot[i])
                    .collect();
                return Ok(0.5 * rms(&d));
            }
            (Some(h), Scheme::BackwardEuler) => Discretization::bdf2(state.u.coeffs(), &h.u_prev, dt / h.dt_prev),
            (Some(_), Scheme::Bdf2) => Discretization::backward_euler(state.u.coeffs()),
        };
        // Only the first block differs: dt·G1_C(y*) − dt·G1_S(y*) = M[(α_C−α_S)u* − (β_C−β_S)].
        let diff: Vec<f64> = (0..u_star.len())
            .map(|i| (companion.alpha - disc.alpha) * u_star[i] - (companion.beta[i] - disc.beta[i]))
            .collect();
        let r1 = m.matvec(&diff);
        if r1.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        let lu = match lu {
            Some(lu) => lu,
            None => {
                let jac = self.jacobian(space, disc, dt, &next.u)?;
                let analysis = &self.pattern.as_ref().expect("pattern built in step").analysis;
                Arc::new(Factored::factor(analysis, &jac, disc.alpha)?)
            }
        };
        let n = u_star.len();
        let mut rhs = vec![0.0; 2 * n];
        for i in 0..n {
            rhs[2 * i + 1] = -r1[i];
        }
        let delta = lu.solve(&rhs);
        let du: Vec<f64> = (0..n).map(|i| delta[2 * i]).collect();
        Ok(rms(&du))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{AnalyticField, CosineMode};
    use crate::mesh::Triangulation;

    fn space(n: usize) -> Arc<FunctionSpace> {
        FunctionSpace::new(Arc::new(Triangulation::uniform(n)), 2)
    }

    #[test]
    fn bdf2_coefficients_conserve_constants() {
        for omega in [0.5, 1.0, 1.5] {
            let d = Discretization::bdf2(&[1.0], &[1.0], omega);
            assert!((d.alpha - d.beta[0]).abs() < 1e-15);
        }
        let d = Discretization::bdf2(&[0.0], &[0.0], 1.0);
        assert!((d.alpha - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pure_phase_is_a_fixed_point_in_one_iteration() {
        let s = space(4);
        for u0 in [1.0, -1.0, 0.0] {
            let st = MixedState::new(FEFunction::constant(s.clone(), u0), FEFunction::zeros(s.clone()), 0.0).unwrap();
            let mut stepper = Stepper::new(StepperConfig::default()).unwrap();
            let mut cur = st.clone();
            for _ in 0..3 {
                let (next, rep) = stepper.step(&cur, None).unwrap();
                assert_eq!(rep.newton_iterations, 1);
                assert!(next.u.coeffs().iter().all(|v| (v - u0).abs() < 1e-14));
                cur = next;
            }
        }
    }

    #[test]
    fn newton_converges_quadratically_on_smooth_data() {
        let s = space(8);
        let cfg = StepperConfig {
            epsilon: 0.2,
            dt_init: 1e-3,
            temporal_rtol: 1.0,
            reuse_jacobian: false,
            ..Default::default()
        };
        let u = FEFunction::interpolate(s.clone(), |x, y| 0.6 * (2.0 * x).cos() * y);
        let st = MixedState::with_consistent_potential(u, 0.0, &cfg).unwrap();
        let mut stepper = Stepper::new(cfg).unwrap();
        let (_, rep) = stepper.step(&st, None).unwrap();
        let r = &rep.residuals;
        assert!(r.len() >= 3, "{r:?}");
        for w in r.windows(2) {
            if w[1] > 1e-13 {
                assert!(w[1] <= 10.0 * w[0] * w[0] / r[0], "{r:?}");
            }
        }
    }

    #[test]
    fn mass_is_conserved_and_energy_decreases() {
        let s = space(8);
        let cfg = StepperConfig {
            epsilon: 0.2,
            ..Default::default()
        };
        let u = FEFunction::interpolate(s.clone(), |x, y| 0.3 * (3.0 * x).sin() * (2.0 * y).cos() + 0.1);
        let mut st = MixedState::with_consistent_potential(u, 0.0, &cfg).unwrap();
        let m0 = st.mass();
        let mut stepper = Stepper::new(cfg).unwrap();
        let mut e = stepper.monitored_energy(&st);
        for _ in 0..30 {
            let (next, rep) = stepper.step(&st, None).unwrap();
            assert!(rep.error_estimate <= 1e-5);
            let en = stepper.monitored_energy(&next);
            assert!(en <= e + 1e-6 * (1.0 + e.abs()));
            assert!((next.mass() - m0).abs() < 1e-12);
            e = en;
            st = next;
        }
        assert!(st.t > 0.0);
    }

    #[test]
    fn linearized_mode_decays_like_the_biharmonic() {
        let s = space(16);
        let eps = 0.1;
        let cfg = StepperConfig {
            epsilon: eps,
            linearized: true,
            dt_init: 1e-4,
            ..Default::default()
        };
        let u = FEFunction::interpolate(s.clone(), |x, y| CosineMode.value(x, y));
        let amp0 = u.norms().l2;
        let mut st = MixedState::with_consistent_potential(u, 0.0, &cfg).unwrap();
        let mut stepper = Stepper::new(cfg).unwrap();
        while st.t < 0.1 {
            st = stepper.step(&st, Some(0.1)).unwrap().0;
        }
        let lam = CosineMode::eigenvalue();
        let exact = (-eps * lam * lam * 0.1).exp();
        let ratio = st.u.norms().l2 / amp0;
        assert!(((ratio - exact) / exact).abs() < 1e-3, "{ratio} vs {exact}");
    }

    #[test]
    fn step_stops_at_limit() {
        let s = space(4);
        let st = MixedState::new(FEFunction::constant(s.clone(), 1.0), FEFunction::zeros(s.clone()), 0.0).unwrap();
        let mut stepper = Stepper::new(StepperConfig {
            dt_init: 0.01,
            ..Default::default()
        })
        .unwrap();
        let (next, _) = stepper.step(&st, Some(0.004)).unwrap();
        assert_eq!(next.t, 0.004);
    }
}
