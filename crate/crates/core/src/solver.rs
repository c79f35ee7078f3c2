//! Explicit Euler time stepping for the regularized problem and
//! pseudo-time marching for its stationary counterpart.

use alloc::vec::Vec;

use crate::calculus::{
    derivatives, discrete_diffusion, dot, NodeDerivatives, ProblemError, ProblemSpec,
};
use crate::mesh::{Face, Grid, ScalarField, SpaceTimeField};

pub use crate::registry::manufacture;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Fraction of the stability bound used as the step, in `(0, 1]`.
    pub cfl_fraction: f64,
    pub grid: Grid,
    /// Keep every `snapshot_stride`-th step; the final time is always kept.
    /// Zero keeps only the initial and final states.
    pub snapshot_stride: usize,
    pub max_steps: usize,
    /// Stationary residual target of the elliptic solve (max norm).
    pub steady_tol: f64,
    /// Allowed one-sided normal difference of the initial datum, as a
    /// multiple of `h² max(1, |u₀|∞)`.
    pub neumann_tol: f64,
}

impl SolveConfig {
    pub fn new(grid: Grid) -> Self {
        Self { cfl_fraction: 0.9, grid, snapshot_stride: 1, max_steps: 2_000_000, steady_tol: 1e-8, neumann_tol: 10.0 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_cfl(mut self, cfl_fraction: f64) -> Self {
        self.cfl_fraction = cfl_fraction;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_steady_tol(mut self, steady_tol: f64) -> Self {
        self.steady_tol = steady_tol;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(SolveError::Config("cfl_fraction must lie in (0, 1]"));
        }
        if self.max_steps == 0 {
            return Err(SolveError::Config("max_steps must be at least 1"));
        }
        if !(self.steady_tol > 0.0) {
            return Err(SolveError::Config("steady_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub field: SpaceTimeField,
    pub dt_history: Vec<f64>,
    pub cfl_bound_history: Vec<f64>,
    /// Stationary residual per pseudo-time step (elliptic solves only).
    pub residual_history: Vec<f64>,
    /// Filled in by callers that have a clock.
    pub wall_time: Option<f64>,
}

impl SolveResult {
    pub fn steps(&self) -> usize {
        self.dt_history.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("initial datum is sampled on a different grid")]
    InitialGridMismatch,
    #[error("initial datum violates the Neumann condition on face (axis {}, {}) by {defect:e}", face.axis, if face.upper { "upper" } else { "lower" })]
    NotNeumann { face: Face, defect: f64 },
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Stability { dt: f64, bound: f64 },
    #[error("non-finite value at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
    #[error("step budget of {steps} exhausted at t = {time} before T = {horizon}")]
    Budget { steps: usize, time: f64, horizon: f64 },
    #[error("no convergence after {steps} steps, last residual {residual:e}")]
    Convergence { steps: usize, residual: f64 },
    #[error("the parabolic solver needs lambda = 0 and the elliptic one lambda > 0")]
    WrongProblemKind,
}

/// State handed to an observer before every step and once at the end.
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub u: &'a ScalarField,
    pub derivatives: &'a [NodeDerivatives],
    /// Length of the step about to be taken; zero for the final state. This
    /// is the left-rectangle time weight of the state.
    pub weight: f64,
}

/// `max αε(w)(1 + |2wαε′/αε|)` over the nodes.
pub fn spectral_max(derivs: &[NodeDerivatives], spec: &ProblemSpec) -> f64 {
    derivs
        .iter()
        .map(|d| spec.diffusion.spectral_bound_split(d.w_coeff, dot(&d.grad, &d.grad), spec.epsilon))
        .fold(0.0, f64::max)
}

fn bound_from(grid: &Grid, m: f64, lambda: f64) -> f64 {
    let h = grid.h_min();
    let dim = grid.dim() as f64;
    1.0 / (2.0 * dim * m / (h * h) + lambda)
}

/// `h²_min / (2N M)` with `M` the largest local spectral bound of the
/// diffusion tensor.
pub fn cfl_bound(u: &ScalarField, spec: &ProblemSpec) -> f64 {
    bound_from(u.grid(), spectral_max(&derivatives(u), spec), 0.0)
}

/// Stability bound of the pseudo-time iteration, `1/(2NM/h² + λ)`.
pub fn pseudo_time_bound(u: &ScalarField, spec: &ProblemSpec) -> f64 {
    bound_from(u.grid(), spectral_max(&derivatives(u), spec), spec.lambda)
}

fn rhs_from(u: &ScalarField, derivs: &[NodeDerivatives], t: f64, spec: &ProblemSpec) -> Vec<f64> {
    let grid = u.grid();
    let eps = spec.epsilon;
    let values = u.values();
    derivs
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let x = grid.coord_flat(k);
            let mut r = discrete_diffusion(d, &spec.diffusion, eps) + spec.hamiltonian.eval(&x, t, &d.grad, eps);
            if spec.lambda > 0.0 {
                r -= spec.lambda * values[k];
            }
            r
        })
        .collect()
}

fn advance(u: &ScalarField, rhs: &[f64], dt: f64) -> ScalarField {
    let values = u.values().iter().zip(rhs).map(|(v, r)| v + dt * r).collect();
    ScalarField::new(*u.grid(), values).expect("same grid")
}

/// One explicit step `u + dt(αε(w)A(D²u) + H)`. The stencils use the
/// reflection closure, so the result keeps a zero normal difference.
pub fn step_parabolic(u: &ScalarField, t: f64, dt: f64, spec: &ProblemSpec) -> Result<ScalarField, SolveError> {
    let derivs = derivatives(u);
    let bound = bound_from(u.grid(), spectral_max(&derivs, spec), spec.lambda);
    if dt > bound {
        return Err(SolveError::Stability { dt, bound });
    }
    let next = advance(u, &rhs_from(u, &derivs, t, spec), dt);
    if !next.is_finite() {
        return Err(SolveError::NonFinite { step: 0, time: t });
    }
    Ok(next)
}

/// Largest one-sided (second-order) normal difference on each face.
pub fn neumann_defect(u: &ScalarField) -> Vec<(Face, f64)> {
    let grid = u.grid();
    grid.faces()
        .into_iter()
        .map(|face| {
            let n = grid.nodes_per_axis()[face.axis];
            let h = grid.h(face.axis);
            let worst = grid
                .face_nodes(face)
                .into_iter()
                .map(|(k, _)| {
                    let mut idx = grid.multi_index(k);
                    let step = |idx: &mut [usize; 3], j: usize| {
                        idx[face.axis] = if face.upper { n - 1 - j } else { j };
                        u.at(*idx)
                    };
                    let (a, b, c) = (step(&mut idx, 0), step(&mut idx, 1), step(&mut idx, 2));
                    ((3.0 * a - 4.0 * b + c) / (2.0 * h)).abs()
                })
                .fold(0.0, f64::max);
            (face, worst)
        })
        .collect()
}

fn initial_state(spec: &ProblemSpec, cfg: &SolveConfig) -> Result<ScalarField, SolveError> {
    let u0 = spec.initial.sample(&cfg.grid).ok_or(SolveError::InitialGridMismatch)?;
    let h = cfg.grid.h_max();
    let tol = cfg.neumann_tol * h * h * f64::max(1.0, u0.max_abs());
    for (face, defect) in neumann_defect(&u0) {
        if defect > tol {
            return Err(SolveError::NotNeumann { face, defect });
        }
    }
    Ok(u0)
}

/// [`solve_parabolic_with`] without an observer.
pub fn solve_parabolic(spec: &ProblemSpec, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    solve_parabolic_with(spec, cfg, |_| {})
}

/// Marches from `u₀` to `T` with `dt = cfl_fraction · cfl_bound`, the bound
/// recomputed every step and the last step clipped to land on `T`. The
/// observer sees every state, including those not stored.
pub fn solve_parabolic_with(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    mut observer: impl FnMut(&StepView<'_>),
) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    spec.validate()?;
    if spec.is_elliptic() {
        return Err(SolveError::WrongProblemKind);
    }
    let horizon = spec.horizon;
    let mut u = initial_state(spec, cfg)?;
    let mut t = 0.0;
    let mut times = alloc::vec![0.0];
    let mut snapshots = alloc::vec![u.clone()];
    let mut dt_history = Vec::new();
    let mut cfl_bound_history = Vec::new();
    let mut step = 0usize;
    loop {
        let derivs = derivatives(&u);
        if t >= horizon {
            observer(&StepView { step, time: t, u: &u, derivatives: &derivs, weight: 0.0 });
            break;
        }
        if step >= cfg.max_steps {
            return Err(SolveError::Budget { steps: step, time: t, horizon });
        }
        let bound = bound_from(&cfg.grid, spectral_max(&derivs, spec), 0.0);
        let mut dt = cfg.cfl_fraction * bound;
        let last = t + dt * (1.0 + 1e-9) >= horizon;
        if last {
            dt = horizon - t;
        }
        observer(&StepView { step, time: t, u: &u, derivatives: &derivs, weight: dt });
        let rhs = rhs_from(&u, &derivs, t, spec);
        u = advance(&u, &rhs, dt);
        step += 1;
        t = if last { horizon } else { t + dt };
        if !u.is_finite() {
            return Err(SolveError::NonFinite { step, time: t });
        }
        dt_history.push(dt);
        cfl_bound_history.push(bound);
        let keep = last || (cfg.snapshot_stride > 0 && step.is_multiple_of(cfg.snapshot_stride));
        if keep {
            times.push(t);
            snapshots.push(u.clone());
        }
    }
    let field = SpaceTimeField::new(times, snapshots).expect("increasing times").with_stride(cfg.snapshot_stride);
    Ok(SolveResult { field, dt_history, cfl_bound_history, residual_history: Vec::new(), wall_time: None })
}

/// Pseudo-time marching of `∂τ v = −λv + αε A + H` until the stationary
/// residual drops below `steady_tol`. The forcing is evaluated at `t = 0`.
/// The returned field holds the initial guess and the converged state.
pub fn solve_elliptic(spec: &ProblemSpec, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    spec.validate()?;
    if !spec.is_elliptic() {
        return Err(SolveError::WrongProblemKind);
    }
    let mut v = initial_state(spec, cfg)?;
    let v0 = v.clone();
    let mut tau = 0.0;
    let mut dt_history = Vec::new();
    let mut cfl_bound_history = Vec::new();
    let mut residual_history = Vec::new();
    loop {
        let derivs = derivatives(&v);
        let rhs = rhs_from(&v, &derivs, 0.0, spec);
        let residual = crate::math::max_abs(&rhs);
        residual_history.push(residual);
        if !residual.is_finite() {
            return Err(SolveError::NonFinite { step: dt_history.len(), time: tau });
        }
        if residual < cfg.steady_tol {
            break;
        }
        if dt_history.len() >= cfg.max_steps {
            return Err(SolveError::Convergence { steps: dt_history.len(), residual });
        }
        let bound = bound_from(&cfg.grid, spectral_max(&derivs, spec), spec.lambda);
        let dt = cfg.cfl_fraction * bound;
        v = advance(&v, &rhs, dt);
        tau += dt;
        dt_history.push(dt);
        cfl_bound_history.push(bound);
    }
    let (times, snapshots) = if tau > 0.0 {
        (alloc::vec![0.0, tau], alloc::vec![v0, v])
    } else {
        (alloc::vec![0.0], alloc::vec![v])
    };
    let field = SpaceTimeField::new(times, snapshots).expect("increasing times");
    Ok(SolveResult { field, dt_history, cfl_bound_history, residual_history, wall_time: None })
}
