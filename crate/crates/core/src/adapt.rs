//! The adaptive driver: blocks of time steps, estimation at block ends,
//! refinement with rollback to the block start, and coarsening.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::analytic::AnalyticField;
use crate::chsolver::{dudt_with, energy, Forcing, MixedState, Stepper, StepperConfig};
use crate::error::{Error, Result};
use crate::estimator::{
    initial_dual_error, local_estimators_with, reference_integral, BoundAccumulator, BoundConstants, BoundReport,
    EstimateSet,
};
use crate::fespace::{FEFunction, FunctionSpace};
use crate::mesh::{Triangulation, DEFAULT_MAX_GENERATION};

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptConfig {
    pub tol: f64,
    /// Time steps per block.
    pub block_steps: usize,
    pub t_end: f64,
    /// Refinement rounds allowed for one block.
    pub max_redo: usize,
    pub refine_budget_factor: f64,
    pub coarsen_budget_divisor: f64,
    pub max_generation: u32,
    /// Squares per side of the coarsest mesh.
    pub initial_subdivisions: usize,
    pub degree: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            tol: 0.1,
            block_steps: 15,
            t_end: 0.01,
            max_redo: 8,
            refine_budget_factor: 4.0 / 3.0,
            coarsen_budget_divisor: 255.0,
            max_generation: DEFAULT_MAX_GENERATION,
            initial_subdivisions: 4,
            degree: 2,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("tol", self.tol),
            ("t_end", self.t_end),
            ("refine_budget_factor", self.refine_budget_factor),
            ("coarsen_budget_divisor", self.coarsen_budget_divisor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.block_steps == 0 {
            return Err("block_steps must be at least 1".into());
        }
        if self.initial_subdivisions == 0 {
            return Err("initial_subdivisions must be at least 1".into());
        }
        if !(1..=2).contains(&self.degree) {
            return Err(format!("degree must be 1 or 2, got {}", self.degree));
        }
        Ok(())
    }
}

/// Elementwise `‖D²(u₀ − I_h u₀)‖²_{L²(K)}`.
fn interpolation_errors(u0: &dyn AnalyticField, u0h: &FEFunction) -> Vec<f64> {
    let space = u0h.space();
    let t = space.high_table();
    let nb = space.local_dofs();
    (0..space.mesh().num_elements())
        .into_par_iter()
        .map(|k| {
            let mut c = [0.0; 6];
            u0h.local(k, &mut c[..nb]);
            let geo = space.geometry(k);
            let mut hh = [0.0; 3];
            for (h, cb) in space.basis_hessians(&geo).iter().zip(&c[..nb]) {
                for i in 0..3 {
                    hh[i] += cb * h[i];
                }
            }
            let coords = space.mesh().coords(k);
            let mut s = 0.0;
            for (l, w) in t.rule.points.iter().zip(&t.rule.weights) {
                let x = crate::fespace::to_physical(coords, *l);
                let d = u0.jet(x[0], x[1]).hess;
                let e = [d[0] - hh[0], d[1] - hh[1], d[2] - hh[2]];
                s += w * (e[0] * e[0] + 2.0 * e[1] * e[1] + e[2] * e[2]);
            }
            s * geo.area
        })
        .collect()
}

/// Refine a coarse uniform mesh until `|u₀ − u_{0h}|_{H²} < TOL·max(|u_{0h}|_{H²}, 1)`
/// and return the nodal interpolant on the accepted mesh.
pub fn build_adapted_initial_mesh(u0: &dyn AnalyticField, config: &AdaptConfig) -> Result<(Arc<Triangulation>, FEFunction)> {
    let mut mesh = Arc::new(Triangulation::uniform(config.initial_subdivisions));
    loop {
        let space = FunctionSpace::new(mesh.clone(), config.degree);
        let u0h = FEFunction::interpolate(space, |x, y| u0.value(x, y));
        let errs = interpolation_errors(u0, &u0h);
        let total = errs.iter().sum::<f64>().sqrt();
        let target = config.tol * u0h.h2_broken_seminorm().max(1.0);
        if total < target {
            return Ok((mesh, u0h));
        }
        // Equidistribution: some element always exceeds the average share.
        let share = target * target / errs.len() as f64;
        let marked: Vec<usize> = (0..errs.len()).filter(|&k| errs[k] > share).collect();
        let refined = mesh.refine_capped(&marked, config.max_generation);
        if refined.num_elements() == mesh.num_elements() {
            return Err(Error::RefinementBudget {
                max_generation: config.max_generation,
                error: total / target * config.tol,
            });
        }
        mesh = Arc::new(refined);
    }
}

/// Smallest 1-based `j` with `η̃_j ≥ ½ η̃_max` and `Σ_{l≥j} η̃_l² ≤ factor·(E² − TOL²)`.
/// When no `j` meets both, the largest estimate alone is refined (`j = n`).
pub fn mark_refine(sorted: &[f64], e: f64, tol: f64, factor: f64) -> usize {
    let n = sorted.len();
    if n == 0 {
        return 0;
    }
    let half_max = 0.5 * sorted[n - 1];
    let budget = factor * (e * e - tol * tol);
    // Both conditions are monotone in j, so scan from the top while the tail fits.
    let mut tail = 0.0;
    let mut best = None;
    for j in (0..n).rev() {
        tail += sorted[j] * sorted[j];
        if tail > budget || sorted[j] < half_max {
            break;
        }
        best = Some(j + 1);
    }
    best.unwrap_or(n)
}

/// Largest `j` with `Σ_{l≤j} η̃_l² ≤ (TOL² − E²)/divisor`, 0 if none.
pub fn mark_coarsen(sorted: &[f64], e: f64, tol: f64, divisor: f64) -> usize {
    let budget = (tol * tol - e * e) / divisor;
    let mut sum = 0.0;
    let mut nc = 0;
    for (j, v) in sorted.iter().enumerate() {
        sum += v * v;
        if sum > budget {
            break;
        }
        nc = j + 1;
    }
    nc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockAction {
    /// The state at `t = 0` on the initial mesh.
    Initial,
    Accept,
    Refine,
}

impl fmt::Display for BlockAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockAction::Initial => "initial",
            BlockAction::Accept => "accept+coarsen",
            BlockAction::Refine => "refine+redo",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockRecord {
    pub block: usize,
    pub t: f64,
    pub estimate: f64,
    pub action: BlockAction,
    /// `nr` for refinement, `nc` for coarsening.
    pub marked: usize,
    pub elements: usize,
    pub dofs: usize,
    pub mass: f64,
    pub energy: f64,
    pub dt_mean: f64,
    pub newton_iters_mean: f64,
}

pub const BLOCK_CSV_HEADER: &str = "block,t,E,action,nr_or_nc,elements,dofs,mass,energy,dt_mean,newton_iters_mean";

impl BlockRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.block,
            self.t,
            self.estimate,
            self.action,
            self.marked,
            self.elements,
            self.dofs,
            self.mass,
            self.energy,
            self.dt_mean,
            self.newton_iters_mean
        )
    }
}

/// Everything handed to the observer after a block is evaluated.
pub struct BlockEvent<'a> {
    pub record: &'a BlockRecord,
    /// The state the estimate was computed on (before any mesh change).
    pub state: &'a MixedState,
    pub estimates: &'a EstimateSet,
    /// Present for the initial and accepted blocks.
    pub bound: Option<&'a BoundReport>,
    /// Running count of accepted blocks, the initial state being 0.
    pub accepted: usize,
}

/// A complete adaptive problem.
#[derive(Clone)]
pub struct Problem {
    pub adapt: AdaptConfig,
    pub stepper: StepperConfig,
    pub initial: Arc<dyn AnalyticField>,
    pub forcing: Option<Forcing>,
    pub bound: BoundConstants,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<BlockRecord>,
    pub bounds: Vec<BoundReport>,
    pub final_state: MixedState,
    pub initial_mass: f64,
}

/// Initial state: interpolant on the adapted mesh, mean-corrected so that
/// `∫u_{0h} = ∫u₀`, with the consistent chemical potential.
pub fn initial_state(problem: &Problem) -> Result<MixedState> {
    let (_, u0h) = build_adapted_initial_mesh(problem.initial.as_ref(), &problem.adapt)?;
    let space = u0h.space().clone();
    let u0 = problem.initial.clone();
    let exact = reference_integral(&|x, y| u0.value(x, y), &space);
    let shift = (exact - u0h.integral()) / space.mesh().total_area();
    let corrected: Vec<f64> = u0h.coeffs().iter().map(|c| c + shift).collect();
    let u0h = FEFunction::new(space, corrected)?;
    MixedState::with_consistent_potential(u0h, 0.0, &problem.stepper)
}

fn estimate(state: &MixedState, problem: &Problem) -> Result<EstimateSet> {
    let u_dot = dudt_with(state, problem.forcing.as_ref());
    local_estimators_with(state, &u_dot, problem.stepper.epsilon, problem.forcing.as_ref())
}

fn record(block: usize, state: &MixedState, set: &EstimateSet, action: BlockAction, marked: usize, eps: f64, stats: (f64, f64)) -> BlockRecord {
    let space = state.space();
    BlockRecord {
        block,
        t: state.t,
        estimate: set.global,
        action,
        marked,
        elements: space.mesh().num_elements(),
        dofs: space.ndofs(),
        mass: state.mass(),
        energy: energy(state, eps),
        dt_mean: stats.0,
        newton_iters_mean: stats.1,
    }
}

/// Integrate up to `block_steps` steps, stopping at `t_end`.
/// Returns the end state with the mean step size and Newton iteration count.
fn integrate_block(stepper: &mut Stepper, start: &MixedState, steps: usize, t_end: f64) -> Result<(MixedState, (f64, f64))> {
    let mut state = start.clone();
    let (mut taken, mut dt_sum, mut it_sum) = (0usize, 0.0, 0usize);
    while taken < steps && state.t < t_end * (1.0 - 1e-14) {
        let (next, report) = stepper.step(&state, Some(t_end))?;
        taken += 1;
        dt_sum += report.dt;
        it_sum += report.newton_iterations;
        state = next;
    }
    let n = taken.max(1) as f64;
    Ok((state, (dt_sum / n, it_sum as f64 / n)))
}

/// Run the adaptive algorithm from `t = 0` to `t_end`, calling `observer`
/// after every block evaluation.
pub fn run(problem: &Problem, observer: &mut dyn FnMut(&BlockEvent) -> Result<()>) -> Result<RunSummary> {
    problem
        .adapt
        .validate()
        .map_err(|m| Error::Precondition(format!("adapt config: {m}")))?;
    let cfg = &problem.adapt;
    let eps = problem.stepper.epsilon;
    let mut stepper = Stepper::new(problem.stepper.clone())?;
    if let Some(g) = &problem.forcing {
        stepper = stepper.with_forcing(g.clone());
    }

    let mut state = initial_state(problem)?;
    let initial_mass = state.mass();
    let u0 = problem.initial.clone();
    let e0 = initial_dual_error(&|x, y| u0.value(x, y), &state.u)?;
    let mut acc = BoundAccumulator::new(e0, problem.bound);
    let set = estimate(&state, problem)?;
    acc.accumulate_set(&set)?;
    let report = acc.report(eps, 0.0);
    let mut records = vec![record(0, &state, &set, BlockAction::Initial, 0, eps, (0.0, 0.0))];
    let mut bounds = vec![report];
    observer(&BlockEvent {
        record: &records[0],
        state: &state,
        estimates: &set,
        bound: Some(&report),
        accepted: 0,
    })?;

    let mut block = 0;
    let mut accepted = 0;
    while state.t < cfg.t_end * (1.0 - 1e-14) {
        block += 1;
        let checkpoint = state.clone();
        let dt_checkpoint = stepper.dt();
        let mut redo = 0;
        loop {
            let (end, stats) = integrate_block(&mut stepper, &state, cfg.block_steps, cfg.t_end)?;
            let set = estimate(&end, problem)?;
            let e = set.global;
            let sorted = set.sorted();
            let values: Vec<f64> = sorted.iter().map(|s| s.1).collect();
            if e > cfg.tol {
                redo += 1;
                let nr = mark_refine(&values, e, cfg.tol, cfg.refine_budget_factor);
                let rec = record(block, &end, &set, BlockAction::Refine, nr, eps, stats);
                observer(&BlockEvent {
                    record: &rec,
                    state: &end,
                    estimates: &set,
                    bound: None,
                    accepted,
                })?;
                records.push(rec);
                if redo > cfg.max_redo {
                    return Err(Error::ToleranceUnreachable {
                        t: end.t,
                        estimate: e,
                        redo: redo - 1,
                    });
                }
                let marked: Vec<usize> = sorted[nr.saturating_sub(1)..].iter().map(|s| s.0).collect();
                let mesh = end.space().mesh();
                let refined = mesh.refine_capped(&marked, cfg.max_generation);
                if refined.num_elements() == mesh.num_elements() {
                    return Err(Error::RefinementBudget {
                        max_generation: cfg.max_generation,
                        error: e,
                    });
                }
                let space = FunctionSpace::new(Arc::new(refined), cfg.degree);
                state = checkpoint.transfer_to(&space)?;
                stepper.reset_history();
                stepper.set_dt(dt_checkpoint);
                continue;
            }

            accepted += 1;
            acc.accumulate_set(&set)?;
            let report = acc.report(eps, end.t);
            let nc = mark_coarsen(&values, e, cfg.tol, cfg.coarsen_budget_divisor);
            let rec = record(block, &end, &set, BlockAction::Accept, nc, eps, stats);
            observer(&BlockEvent {
                record: &rec,
                state: &end,
                estimates: &set,
                bound: Some(&report),
                accepted,
            })?;
            records.push(rec);
            bounds.push(report);
            state = coarsen_state(&end, &sorted[..nc], cfg.degree, eps)?;
            break;
        }
    }
    Ok(RunSummary {
        records,
        bounds,
        final_state: state,
        initial_mass,
    })
}

/// Coarsen the marked elements and project the state. A coarsening that
/// would raise the energy beyond the monitor's tolerance is skipped.
fn coarsen_state(state: &MixedState, marked: &[(usize, f64)], degree: usize, eps: f64) -> Result<MixedState> {
    if marked.is_empty() {
        return Ok(state.clone());
    }
    let ids: Vec<usize> = marked.iter().map(|m| m.0).collect();
    let (coarse, _) = state.space().mesh().coarsen(&ids);
    if coarse.num_elements() == state.space().mesh().num_elements() {
        return Ok(state.clone());
    }
    let space = FunctionSpace::new(Arc::new(coarse), degree);
    let projected = state.transfer_to(&space)?;
    let (before, after) = (energy(state, eps), energy(&projected, eps));
    if after > before + 1e-6 * (1.0 + before.abs()) {
        return Ok(state.clone());
    }
    Ok(projected)
}
