//! Forcing-amplitude ladders with fitted growth exponents and implied
//! constants, gradient conservation ratios, level-set decay under singular
//! forcing, and the stationary ladder.
//!
//! Every study returns a report whose [`Check`]s carry the pass/fail
//! outcome; nothing here panics on a failed check.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::{derivatives, dot, InitialDatum, NodeDerivatives, ProblemSpec, SharedFn, SpaceTimeFn};
use crate::exponents::{coverage, elliptic_table, parabolic_table, AdmissibilityError, Coverage, EllipticRegime, ParamPoint};
use crate::math::{ln, pairwise_sum, pow, sqrt};
use crate::mesh::{integrate_with, BoxDomain, Grid, ScalarField};
use crate::norms::{spatial_power_integral, weighted_jacobian_sq, NormError, NormPlan, StreamingNorms};
use crate::registry::{manufacture, scaled, ConstantFn, Profile, SharedSolution, SolutionFn};
use crate::solver::{solve_elliptic, solve_parabolic_with, SolveConfig, SolveError};
use crate::Point;

/// Runs independent rungs; the std crate provides a parallel one.
pub trait RungMap: Sync {
    fn map<T: Send, R: Send>(&self, items: Vec<T>, f: &(dyn Fn(T) -> R + Sync)) -> Vec<R>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl RungMap for Sequential {
    fn map<T: Send, R: Send>(&self, items: Vec<T>, f: &(dyn Fn(T) -> R + Sync)) -> Vec<R> {
        items.into_iter().map(f).collect()
    }
}

/// Tolerances of the checks. The defaults are artifact policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slack {
    /// Allowed excess of a fitted slope over its target.
    pub slope: f64,
    /// Allowed ratio of the last implied constant to the median one.
    pub constant_factor: f64,
    /// Tolerance of the exact slope in linear ladders, and of the spread of
    /// `Y/x^slope` there.
    pub linear: f64,
    /// Relative change of `max w` over the last grid doubling.
    pub stabilization: f64,
    /// Relative change of the conservation ratio from `m = 16` to `m = 32`.
    pub conservation: f64,
}

impl Default for Slack {
    fn default() -> Self {
        Self { slope: 0.1, constant_factor: 2.0, linear: 0.02, stabilization: 0.1, conservation: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("at least 3 points are needed for a slope fit (got {0})")]
    TooFewPoints(usize),
    #[error("non-positive point ({x}, {y}) at index {index} in log-log fit")]
    NonPositive { index: usize, x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Admissibility(#[from] AdmissibilityError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid study: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Ordinary least squares of `ln y` against `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<Fit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for (index, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0 && y > 0.0) {
            return Err(FitError::NonPositive { index, x, y });
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| ln(p.0)).collect();
    let ly: Vec<f64> = points.iter().map(|p| ln(p.1)).collect();
    let mx = pairwise_sum(&lx) / n;
    let my = pairwise_sum(&ly) / n;
    let sxx = pairwise_sum(&lx.iter().map(|x| (x - mx) * (x - mx)).collect::<Vec<_>>());
    let sxy = pairwise_sum(&lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).collect::<Vec<_>>());
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = pairwise_sum(
        &lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x) * (y - intercept - slope * x)).collect::<Vec<_>>(),
    );
    let stderr = sqrt(f64::max(ssr, 0.0) / (n - 2.0) / sxx);
    Ok(Fit { slope, intercept, stderr })
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A named pass/fail outcome. Checks that are not `asserted` are reported
/// only and never fail a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub asserted: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, asserted: true, detail }
    }

    fn reported(mut self) -> Self {
        self.asserted = false;
        self
    }
}

fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed || !c.asserted)
}

/// A report cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

/// Rows with a fixed column order, the common shape of every report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn with_columns(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }
}

/// Which gradient norm a ladder measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `‖Du‖_{L^q(Q_T)}`, or `‖Du‖_{L^q(Ω)}` for the stationary ladder.
    Lebesgue { q: f64 },
    /// `sup_t ‖Du(t)‖_{L^ρ(Ω)}`.
    Mixed { rho: f64 },
    /// `‖|Du|^ω Du‖` in `L²(0,T;H¹)`, or `H¹` for the stationary ladder.
    SecondOrder { omega: f64 },
}

impl NormKind {
    pub fn name(&self) -> &'static str {
        match self {
            NormKind::Lebesgue { .. } => "lebesgue",
            NormKind::Mixed { .. } => "mixed",
            NormKind::SecondOrder { .. } => "second-order",
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            NormKind::Lebesgue { q } => q,
            NormKind::Mixed { rho } => rho,
            NormKind::SecondOrder { omega } => omega,
        }
    }

    /// Slope of `Y` in the amplitude when `u` is linear in it.
    pub fn linear_slope(&self) -> f64 {
        match *self {
            NormKind::SecondOrder { omega } => omega + 1.0,
            _ => 1.0,
        }
    }
}

/// One measured norm with the forcing power its bound predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub label: String,
    pub norm: NormKind,
    pub theta: f64,
}

impl Gate {
    pub fn new(label: &str, norm: NormKind, theta: f64) -> Self {
        Self { label: label.to_string(), norm, theta }
    }
}

/// Gates of the space-time, mixed and second-order bounds at `(p, N, m, γ)`.
pub fn parabolic_gates(p: f64, dim: u32, m: f64, gamma: f64) -> Result<Vec<Gate>, AdmissibilityError> {
    let t = parabolic_table(&ParamPoint::new(p, dim, m, gamma))?;
    Ok(vec![
        Gate::new("space-time", NormKind::Lebesgue { q: t.q }, t.theta),
        Gate::new("mixed", NormKind::Mixed { rho: t.rho }, t.theta_mixed),
        Gate::new("second-order", NormKind::SecondOrder { omega: t.omega }, t.theta_second_order),
    ])
}

/// Gates of the stationary bounds. For `m > N` only `max |Du|` is gated.
pub fn elliptic_gates(p: f64, dim: u32, m: f64, gamma: f64) -> Result<Vec<Gate>, AdmissibilityError> {
    let t = elliptic_table(&ParamPoint::new(p, dim, m, gamma))?;
    Ok(match t.regime {
        EllipticRegime::Subcritical { q, omega, theta_second_order } => vec![
            Gate::new("lebesgue", NormKind::Lebesgue { q }, t.theta),
            Gate::new("second-order", NormKind::SecondOrder { omega }, theta_second_order),
        ],
        EllipticRegime::Critical { omega0 } => vec![
            Gate::new("lebesgue", NormKind::Lebesgue { q: 2.0 * f64::from(dim) }, t.theta),
            Gate::new("second-order", NormKind::SecondOrder { omega: omega0 + 1.0 }, (omega0 + 2.0) * t.theta),
        ],
        EllipticRegime::Supercritical { .. } => {
            vec![Gate::new("sup", NormKind::Lebesgue { q: f64::INFINITY }, t.theta)]
        }
    })
}

/// Forcing ladder: `f_k = s_k · f` on a fixed problem.
#[derive(Debug, Clone)]
pub struct LadderSpec {
    pub base_problem: ProblemSpec,
    pub scalings: Vec<f64>,
    /// Integrability exponent of the forcing norm.
    pub m: f64,
    pub gates: Vec<Gate>,
    pub slack: Slack,
}

impl LadderSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.scalings.len() < 4 {
            return Err(ExperimentError::Invalid(format!("a ladder needs at least 4 rungs (got {})", self.scalings.len())));
        }
        if self.scalings.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ExperimentError::Invalid("scalings must be positive".into()));
        }
        if self.scalings.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ExperimentError::Invalid("scalings must be strictly increasing".into()));
        }
        if !(self.m >= 1.0) {
            return Err(ExperimentError::Invalid(format!("m must be at least 1 (got {})", self.m)));
        }
        if self.gates.is_empty() {
            return Err(ExperimentError::Invalid("a ladder needs at least one gate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RungStatus {
    Ok,
    Failed(String),
}

impl RungStatus {
    pub fn as_str(&self) -> &str {
        match self {
            RungStatus::Ok => "ok",
            RungStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RungRecord {
    pub scaling: f64,
    /// `‖f‖_{L^m}` of the rung.
    pub forcing_norm: f64,
    /// One measured norm per gate; NaN for failed rungs.
    pub values: Vec<f64>,
    pub steps: usize,
    pub max_w: f64,
    pub status: RungStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateFit {
    pub gate: Gate,
    pub slope: f64,
    pub stderr: f64,
    /// `Y / (1 + x^θ)` per successful rung.
    pub implied_constants: Vec<f64>,
    pub c_hat_max: f64,
    pub c_hat_median: f64,
    pub c_hat_last: f64,
    /// Log-log slope of the implied constants against `x`.
    pub c_hat_trend: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub study: String,
    pub m: f64,
    pub coverage: String,
    pub rungs: Vec<RungRecord>,
    pub fits: Vec<GateFit>,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
    /// Relative change of `max |Du|` under one refinement of the top rung,
    /// when requested.
    pub refinement_change: Option<f64>,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }

    /// One row per rung and gate.
    pub fn table(&self) -> Table {
        let mut t = Table::with_columns(&[
            "rung", "scaling", "forcing_norm", "gate", "exponent", "theta", "value", "c_hat", "steps", "max_w", "status",
        ]);
        for (i, r) in self.rungs.iter().enumerate() {
            let mut ok_index = None;
            if r.status == RungStatus::Ok {
                ok_index = Some(self.rungs[..i].iter().filter(|x| x.status == RungStatus::Ok).count());
            }
            for (g, fit) in self.fits.iter().enumerate() {
                let c_hat = ok_index.and_then(|k| fit.implied_constants.get(k).copied()).unwrap_or(f64::NAN);
                t.rows.push(vec![
                    Cell::Int(i as i64),
                    Cell::Num(r.scaling),
                    Cell::Num(r.forcing_norm),
                    Cell::Text(fit.gate.label.clone()),
                    Cell::Num(fit.gate.norm.exponent()),
                    Cell::Num(fit.gate.theta),
                    Cell::Num(r.values[g]),
                    Cell::Num(c_hat),
                    Cell::Int(r.steps as i64),
                    Cell::Num(r.max_w),
                    Cell::Text(r.status.as_str().to_string()),
                ]);
            }
        }
        t
    }
}

/// `(∫∫ |g|^m)^{1/m}` with the trapezoid rule in space and the midpoint
/// rule on `samples` uniform time cells.
pub fn space_time_norm(grid: &Grid, horizon: f64, m: f64, samples: usize, g: impl Fn(&Point, f64) -> f64) -> f64 {
    let dt = horizon / samples as f64;
    let terms: Vec<f64> = (0..samples)
        .map(|j| {
            let t = (j as f64 + 0.5) * dt;
            let values: Vec<f64> = (0..grid.len()).map(|k| g(&grid.coord_flat(k), t)).collect();
            dt * spatial_power_integral(grid, &values, m)
        })
        .collect();
    root(pairwise_sum(&terms), m)
}

fn root(integral: f64, m: f64) -> f64 {
    if m.is_infinite() {
        integral
    } else {
        pow(integral, 1.0 / m)
    }
}

const TIME_SAMPLES: usize = 64;

fn gradient_free(datum: &InitialDatum, grid: &Grid) -> bool {
    datum.sample(grid).map(|u| derivatives(&u).iter().all(|d| d.grad == [0.0; 3])).unwrap_or(false)
}

fn is_linear(problem: &ProblemSpec) -> bool {
    problem.diffusion.is_power() && problem.diffusion.p == 2.0 && problem.hamiltonian.gamma == 0.0
}

fn plan_for(gates: &[Gate], epsilon: f64) -> (NormPlan, Vec<(usize, usize)>) {
    let mut plan = NormPlan { epsilon, ..NormPlan::default() };
    let slots = gates
        .iter()
        .map(|g| match g.norm {
            NormKind::Lebesgue { q } => {
                plan.lebesgue.push(q);
                (0, plan.lebesgue.len() - 1)
            }
            NormKind::Mixed { rho } => {
                plan.mixed.push(rho);
                (1, plan.mixed.len() - 1)
            }
            NormKind::SecondOrder { omega } => {
                plan.second_order.push(omega);
                (2, plan.second_order.len() - 1)
            }
        })
        .collect();
    (plan, slots)
}

fn solve_rung(problem: &ProblemSpec, cfg: &SolveConfig, gates: &[Gate]) -> Result<(Vec<f64>, usize, f64), SolveError> {
    let (plan, slots) = plan_for(gates, problem.epsilon);
    let mut acc = StreamingNorms::new(plan).expect("gate exponents are validated by the tables");
    let cfg = (*cfg).with_stride(0);
    let result = solve_parabolic_with(problem, &cfg, |v| acc.observe(v.u.grid(), v.time, v.derivatives, v.weight))?;
    let s = acc.finish();
    let values = slots
        .iter()
        .map(|&(kind, i)| match kind {
            0 => s.lebesgue[i],
            1 => s.mixed[i].value,
            _ => s.second_order[i].full,
        })
        .collect();
    Ok((values, result.steps(), s.max_w))
}

fn coverage_of(problem: &ProblemSpec, m: f64) -> Result<Coverage, AdmissibilityError> {
    coverage(&ParamPoint::new(problem.diffusion.p, problem.dim() as u32, m, problem.hamiltonian.gamma))
}

struct Solved {
    values: Vec<f64>,
    steps: usize,
    max_w: f64,
}

fn assemble(
    study: &str,
    spec: &LadderSpec,
    norms: &[f64],
    outcomes: Vec<Result<Solved, String>>,
    covered: bool,
    coverage_name: &str,
    linear: bool,
) -> EstimateReport {
    let mut flags = Vec::new();
    if !covered {
        flags.push("no theorem coverage".to_string());
    }
    let rungs: Vec<RungRecord> = spec
        .scalings
        .iter()
        .zip(norms)
        .zip(outcomes)
        .map(|((&scaling, &forcing_norm), out)| match out {
            Ok(s) => RungRecord { scaling, forcing_norm, values: s.values, steps: s.steps, max_w: s.max_w, status: RungStatus::Ok },
            Err(e) => RungRecord {
                scaling,
                forcing_norm,
                values: vec![f64::NAN; spec.gates.len()],
                steps: 0,
                max_w: f64::NAN,
                status: RungStatus::Failed(e),
            },
        })
        .collect();
    let ok: Vec<&RungRecord> = rungs.iter().filter(|r| r.status == RungStatus::Ok).collect();
    let failed = rungs.len() - ok.len();
    if failed > 0 {
        flags.push(format!("{failed} failed rung(s)"));
    }
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    for (g, gate) in spec.gates.iter().enumerate() {
        let pts: Vec<(f64, f64)> = ok.iter().map(|r| (r.forcing_norm, r.values[g])).collect();
        let c_hat: Vec<f64> = pts.iter().map(|(x, y)| y / (1.0 + pow(*x, gate.theta))).collect();
        let fit = fit_loglog_slope(&pts);
        let trend = fit_loglog_slope(&pts.iter().zip(&c_hat).map(|((x, _), c)| (*x, *c)).collect::<Vec<_>>())
            .map(|f| f.slope)
            .unwrap_or(f64::NAN);
        let (slope, stderr) = match &fit {
            Ok(f) => (f.slope, f.stderr),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let c_med = median(&c_hat);
        let c_last = c_hat.last().copied().unwrap_or(f64::NAN);
        let c_max = c_hat.iter().copied().fold(f64::NAN, f64::max);
        let name = |what: &str| format!("{}:{what}", gate.label);
        let wrap = |c: Check| if covered { c } else { c.reported() };

        let monotone = pts.windows(2).all(|w| w[1].1 >= w[0].1);
        checks.push(wrap(Check::new(&name("monotone"), monotone && !pts.is_empty(), format!("{} successful rungs", pts.len()))));
        match &fit {
            Ok(_) => {
                let target = gate.theta + spec.slack.slope;
                checks.push(wrap(Check::new(
                    &name("slope"),
                    slope <= target,
                    format!("slope {slope:.4} (stderr {stderr:.2e}) vs bound {target:.4}"),
                )));
            }
            Err(e) => checks.push(wrap(Check::new(&name("slope"), false, e.to_string()))),
        }
        let bounded = c_last <= spec.slack.constant_factor * c_med;
        checks.push(wrap(Check::new(
            &name("constant"),
            bounded,
            format!("c_hat last {c_last:.4e}, median {c_med:.4e}, max {c_max:.4e}"),
        )));
        if linear {
            let exact = gate.norm.linear_slope();
            let ratios: Vec<f64> = pts.iter().map(|(x, y)| y / pow(*x, exact)).collect();
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spread = hi / lo - 1.0;
            checks.push(Check::new(
                &name("linear-slope"),
                (slope - exact).abs() <= spec.slack.linear,
                format!("slope {slope:.6} vs exact {exact:.6}"),
            ));
            checks.push(Check::new(
                &name("linear-constant"),
                spread <= spec.slack.linear,
                format!("spread of Y/x^{exact:.4} is {spread:.2e}"),
            ));
        }
        fits.push(GateFit {
            gate: gate.clone(),
            slope,
            stderr,
            implied_constants: c_hat,
            c_hat_max: c_max,
            c_hat_median: c_med,
            c_hat_last: c_last,
            c_hat_trend: trend,
        });
    }
    EstimateReport {
        study: study.to_string(),
        m: spec.m,
        coverage: coverage_name.to_string(),
        rungs,
        fits,
        checks,
        flags,
        refinement_change: None,
    }
}

fn rung_problems(spec: &LadderSpec) -> Vec<ProblemSpec> {
    let f = spec.base_problem.hamiltonian.forcing.clone();
    spec.scalings.iter().map(|&s| spec.base_problem.with_forcing(scaled(f.clone(), s))).collect()
}

/// Solves every rung of a parabolic ladder and fits each gate.
///
/// The forcing norm of rung `k` is `s_k ‖f‖`, so `x` scales exactly. Rung
/// failures are recorded and the fit uses the remaining rungs.
pub fn run_scaling_study(
    spec: &LadderSpec,
    cfg: &SolveConfig,
    exec: &impl RungMap,
) -> Result<EstimateReport, ExperimentError> {
    spec.validate()?;
    cfg.validate()?;
    let problem = &spec.base_problem;
    problem.validate().map_err(SolveError::from)?;
    if problem.is_elliptic() {
        return Err(SolveError::WrongProblemKind.into());
    }
    let cov = coverage_of(problem, spec.m)?;
    let covered = matches!(cov, Coverage::MaximalRegularity | Coverage::Borderline);
    let base = space_time_norm(&cfg.grid, problem.horizon, spec.m, TIME_SAMPLES, |x, t| {
        problem.hamiltonian.forcing.value(x, t).abs()
    });
    let norms: Vec<f64> = spec.scalings.iter().map(|s| s * base).collect();
    fit_precheck(&norms)?;
    let linear = is_linear(problem) && gradient_free(&problem.initial, &cfg.grid);
    let problems = rung_problems(spec);
    let outcomes = exec.map(problems, &|p: ProblemSpec| {
        solve_rung(&p, cfg, &spec.gates)
            .map(|(values, steps, max_w)| Solved { values, steps, max_w })
            .map_err(|e| e.to_string())
    });
    Ok(assemble("scaling", spec, &norms, outcomes, covered, cov.as_str(), linear))
}

fn fit_precheck(norms: &[f64]) -> Result<(), FitError> {
    for (index, &x) in norms.iter().enumerate() {
        if !(x > 0.0) {
            return Err(FitError::NonPositive { index, x, y: f64::NAN });
        }
    }
    Ok(())
}

fn spatial_gate_value(grid: &Grid, derivs: &[NodeDerivatives], norm: NormKind) -> f64 {
    let grads: Vec<Point> = derivs.iter().map(|d| d.grad).collect();
    match norm {
        NormKind::Lebesgue { q } | NormKind::Mixed { rho: q } => {
            let mags: Vec<f64> = grads.iter().map(|g| sqrt(dot(g, g))).collect();
            root(spatial_power_integral(grid, &mags, q), q)
        }
        NormKind::SecondOrder { omega } => {
            let (vs, js) = weighted_jacobian_sq(grid, &grads, omega);
            sqrt(integrate_with(grid, |k| vs[k] + js[k]))
        }
    }
}

/// Stationary ladder. Each rung is solved by pseudo-time marching; norms are
/// spatial. With `refine`, the top rung is re-solved once on the refined
/// grid and the relative change of `max |Du|` is reported.
#[derive(Debug, Clone)]
pub struct EllipticLadder {
    pub ladder: LadderSpec,
    pub refine: bool,
}

pub fn run_elliptic_study(
    spec: &EllipticLadder,
    cfg: &SolveConfig,
    exec: &impl RungMap,
) -> Result<EstimateReport, ExperimentError> {
    let ladder = &spec.ladder;
    ladder.validate()?;
    cfg.validate()?;
    let problem = &ladder.base_problem;
    problem.validate().map_err(SolveError::from)?;
    if !problem.is_elliptic() {
        return Err(SolveError::WrongProblemKind.into());
    }
    let dim = problem.dim() as u32;
    let table = elliptic_table(&ParamPoint::new(problem.diffusion.p, dim, ladder.m, problem.hamiltonian.gamma))?;
    let forcing = problem.hamiltonian.forcing.clone();
    let grid = cfg.grid;
    let values: Vec<f64> = (0..grid.len()).map(|k| forcing.value(&grid.coord_flat(k), 0.0).abs()).collect();
    let base = root(spatial_power_integral(&grid, &values, ladder.m), ladder.m);
    let norms: Vec<f64> = ladder.scalings.iter().map(|s| s * base).collect();
    fit_precheck(&norms)?;
    let linear = is_linear(problem) && gradient_free(&problem.initial, &grid);
    let solve = |p: &ProblemSpec, cfg: &SolveConfig| -> Result<(Vec<f64>, usize, f64), SolveError> {
        let r = solve_elliptic(p, cfg)?;
        let v = r.field.last();
        let derivs = derivatives(v);
        let vals = ladder.gates.iter().map(|g| spatial_gate_value(v.grid(), &derivs, g.norm)).collect();
        let max_w = derivs.iter().map(|d| dot(&d.grad, &d.grad)).fold(0.0, f64::max);
        Ok((vals, r.steps(), max_w))
    };
    let outcomes = exec.map(rung_problems(ladder), &|p: ProblemSpec| {
        solve(&p, cfg).map(|(values, steps, max_w)| Solved { values, steps, max_w }).map_err(|e| e.to_string())
    });
    let mut report = assemble("elliptic", ladder, &norms, outcomes, true, table.regime.flag(), linear);
    if spec.refine {
        let top = rung_problems(ladder).pop().expect("at least 4 rungs");
        let fine = SolveConfig { grid: grid.refined(), ..*cfg };
        let coarse_w = report.rungs.last().map(|r| r.max_w).unwrap_or(f64::NAN);
        match solve(&top, &fine) {
            Ok((_, _, fine_w)) => {
                let change = (sqrt(fine_w) - sqrt(coarse_w)).abs() / sqrt(fine_w);
                report.refinement_change = Some(change);
                let mut c = Check::new(
                    "sup:refinement",
                    change < ladder.slack.stabilization,
                    format!("relative change of max |Du| {change:.3e}"),
                );
                if !matches!(table.regime, EllipticRegime::Supercritical { bounded: true }) {
                    c = c.reported();
                }
                report.checks.push(c);
            }
            Err(e) => report.flags.push(format!("refinement failed: {e}")),
        }
    }
    Ok(report)
}

/// One `(f, u₀)` pair of the conservation corpus.
#[derive(Debug, Clone)]
pub struct ConservationCase {
    pub name: String,
    pub forcing: SharedFn,
    pub initial: SharedFn,
}

/// The default corpus: pure relaxation, time-ramped forcing from rest, and
/// a mixed case.
pub fn default_conservation_corpus(domain: &BoxDomain) -> Vec<ConservationCase> {
    let cos = |amplitude: f64, k: [u32; 3], time_power: f64| Profile::Cosine { amplitude, k, time_power }.build(domain);
    vec![
        ConservationCase { name: "relaxation".into(), forcing: Arc::new(ConstantFn(0.0)), initial: cos(0.3, [1, 1, 0], 0.0) },
        ConservationCase { name: "ramp".into(), forcing: cos(1.0, [1, 0, 0], 1.0), initial: Arc::new(ConstantFn(0.0)) },
        ConservationCase { name: "mixed".into(), forcing: cos(1.0, [2, 1, 0], 0.0), initial: cos(0.05, [1, 0, 0], 0.0) },
    ]
}

#[derive(Debug, Clone)]
pub struct ConservationSpec {
    /// Diffusion, growth `γ = 0`, ε, domain and horizon; forcing and initial
    /// datum are replaced per case.
    pub base_problem: ProblemSpec,
    pub p_values: Vec<f64>,
    pub m_values: Vec<f64>,
    pub cases: Vec<ConservationCase>,
    pub slack: Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationRecord {
    pub case: String,
    pub p: f64,
    pub m: f64,
    /// `sup_t ‖Du(t)‖_{L^m}`.
    pub sup_gradient: f64,
    /// `‖Df‖_{L^m(Q_T)}`.
    pub forcing_gradient: f64,
    /// `‖Du₀‖_{L^m}`.
    pub initial_gradient: f64,
    pub ratio: f64,
    pub steps: usize,
    pub status: RungStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub records: Vec<ConservationRecord>,
    /// `(m, max ratio over the corpus)`.
    pub trend: Vec<(f64, f64)>,
    /// Largest ratio anywhere in the corpus.
    pub corpus_constant: f64,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::with_columns(&[
            "case", "p", "m", "sup_gradient", "forcing_gradient", "initial_gradient", "ratio", "steps", "status",
        ]);
        for r in &self.records {
            t.rows.push(vec![
                Cell::Text(r.case.clone()),
                Cell::Num(r.p),
                Cell::Num(r.m),
                Cell::Num(r.sup_gradient),
                Cell::Num(r.forcing_gradient),
                Cell::Num(r.initial_gradient),
                Cell::Num(r.ratio),
                Cell::Int(r.steps as i64),
                Cell::Text(r.status.as_str().to_string()),
            ]);
        }
        t
    }
}

fn gradient_magnitude(f: &SharedFn, grid: &Grid) -> impl Fn(&Point, f64) -> f64 {
    let f = f.clone();
    let grid = *grid;
    move |x: &Point, t: f64| match f.gradient(x, t) {
        Some(g) => sqrt(dot(&g, &g)),
        None => {
            // centred difference in each direction at the point itself
            let mut s = 0.0;
            for a in 0..grid.dim() {
                let h = grid.h(a);
                let (mut xp, mut xm) = (*x, *x);
                xp[a] += h;
                xm[a] -= h;
                let d = (f.value(&xp, t) - f.value(&xm, t)) / (2.0 * h);
                s += d * d;
            }
            sqrt(s)
        }
    }
}

/// Ratios `sup_t‖Du(t)‖_m / (‖Df‖_{L^m(Q_T)} + ‖Du₀‖_m)` over cases × p,
/// one solve serving every m.
pub fn run_conservation_study(
    spec: &ConservationSpec,
    cfg: &SolveConfig,
    exec: &impl RungMap,
) -> Result<ConservationReport, ExperimentError> {
    cfg.validate()?;
    let base = &spec.base_problem;
    if base.hamiltonian.gamma != 0.0 {
        return Err(ExperimentError::Invalid("the conservation study needs gamma = 0".into()));
    }
    if let Some(m) = spec.m_values.iter().find(|m| !(**m > 2.0)) {
        return Err(ExperimentError::Invalid(format!("every m must exceed 2 (got {m})")));
    }
    if spec.cases.is_empty() || spec.p_values.is_empty() || spec.m_values.is_empty() {
        return Err(ExperimentError::Invalid("empty corpus".into()));
    }
    let grid = cfg.grid;
    let mut jobs = Vec::new();
    for case in &spec.cases {
        for &p in &spec.p_values {
            let diffusion = crate::calculus::DiffusionSpec::power(p)
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            let problem = ProblemSpec {
                diffusion,
                hamiltonian: crate::calculus::HamiltonianSpec::new(0.0, case.forcing.clone()),
                initial: InitialDatum::Function(case.initial.clone()),
                ..base.clone()
            };
            problem.validate().map_err(SolveError::from)?;
            jobs.push((case.clone(), p, problem));
        }
    }
    let ms = spec.m_values.clone();
    let results = exec.map(jobs, &|(case, p, problem): (ConservationCase, f64, ProblemSpec)| {
        let plan = NormPlan { mixed: ms.clone(), epsilon: problem.epsilon, ..NormPlan::default() };
        let mut acc = StreamingNorms::new(plan).expect("m > 2");
        let out = solve_parabolic_with(&problem, &(*cfg).with_stride(0), |v| {
            acc.observe(v.u.grid(), v.time, v.derivatives, v.weight)
        });
        let u0 = ScalarField::from_fn(grid, |x| case.initial.value(x, 0.0));
        let d0 = derivatives(&u0);
        let mags0: Vec<f64> = d0.iter().map(|d| sqrt(dot(&d.grad, &d.grad))).collect();
        let df = gradient_magnitude(&case.forcing, &grid);
        ms.iter()
            .enumerate()
            .map(|(i, &m)| {
                let forcing_gradient = space_time_norm(&grid, problem.horizon, m, TIME_SAMPLES, &df);
                let initial_gradient = root(spatial_power_integral(&grid, &mags0, m), m);
                let (sup, steps, status) = match &out {
                    Ok(r) => (acc.finish().mixed[i].value, r.steps(), RungStatus::Ok),
                    Err(e) => (f64::NAN, 0, RungStatus::Failed(e.to_string())),
                };
                ConservationRecord {
                    case: case.name.clone(),
                    p,
                    m,
                    sup_gradient: sup,
                    forcing_gradient,
                    initial_gradient,
                    ratio: sup / (forcing_gradient + initial_gradient),
                    steps,
                    status,
                }
            })
            .collect::<Vec<_>>()
    });
    let records: Vec<ConservationRecord> = results.into_iter().flatten().collect();
    let ok: Vec<&ConservationRecord> = records.iter().filter(|r| r.status == RungStatus::Ok).collect();
    let mut flags = Vec::new();
    let skipped: Vec<String> = records
        .iter()
        .filter(|r| r.status != RungStatus::Ok && r.m == spec.m_values[0])
        .map(|r| format!("skipped {} at p = {}", r.case, r.p))
        .collect();
    flags.extend(skipped);

    let trend: Vec<(f64, f64)> = spec
        .m_values
        .iter()
        .map(|&m| (m, ok.iter().filter(|r| r.m == m).map(|r| r.ratio).fold(f64::NAN, f64::max)))
        .collect();
    let corpus_constant = ok.iter().map(|r| r.ratio).fold(f64::NAN, f64::max);
    let mut checks = Vec::new();
    let finite = !ok.is_empty() && ok.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0);
    checks.push(Check::new("finite", finite, format!("{} of {} records solved", ok.len(), records.len())));
    let maxima: Vec<f64> = trend.iter().map(|t| t.1).collect();
    let med = median(&maxima);
    let uniform = maxima.iter().all(|c| *c <= spec.slack.constant_factor * med);
    checks.push(Check::new("uniform", uniform, format!("corpus constant {corpus_constant:.4e}, median over m {med:.4e}")));
    for r in ok.iter().filter(|r| r.p == 2.0 && r.forcing_gradient == 0.0) {
        checks.push(Check::new(
            &format!("contraction:{}:m={}", r.case, r.m),
            r.ratio <= 1.0 + 1e-9,
            format!("ratio {:.12}", r.ratio),
        ));
    }
    if spec.m_values.contains(&16.0) && spec.m_values.contains(&32.0) {
        let mut worst: f64 = 0.0;
        for r32 in ok.iter().filter(|r| r.m == 32.0) {
            if let Some(r16) = ok.iter().find(|r| r.m == 16.0 && r.case == r32.case && r.p == r32.p) {
                worst = f64::max(worst, (r32.ratio / r16.ratio - 1.0).abs());
            }
        }
        checks.push(Check::new(
            "stabilization",
            worst < spec.slack.conservation,
            format!("largest relative change from m = 16 to m = 32 is {worst:.4}"),
        ));
    }
    Ok(ConservationReport { records, trend, corpus_constant, checks, flags })
}

/// Singular-forcing study of the bounded-gradient regime `m > N+2`.
#[derive(Debug, Clone)]
pub struct LinfSpec {
    /// Diffusion (`p ≥ 2`), ε, domain and horizon; the forcing is replaced.
    pub base_problem: ProblemSpec,
    pub m: f64,
    pub amplitude: f64,
    pub center: Point,
    /// `f = A(|x−c|² + h²)^{−σ/2}`, mollified at the grid scale.
    pub sigma: f64,
    /// Exponent of the control run with weaker integrability.
    pub control_sigma: Option<f64>,
    /// Nodes per axis of the refinement ladder.
    pub grids: Vec<usize>,
    /// Number of stored snapshots used for level measures.
    pub snapshots: usize,
    pub slack: Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinfRung {
    pub nodes: usize,
    pub h: f64,
    pub sigma: f64,
    pub max_w: f64,
    /// Time-weighted median of `ε + w` over `Q_T`.
    pub median: f64,
    /// `(k, |{ε + w ≥ k}|)` on the geometric ladder.
    pub levels: Vec<(f64, f64)>,
    pub steps: usize,
    pub status: RungStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinfReport {
    pub rungs: Vec<LinfRung>,
    pub control: Vec<LinfRung>,
    /// Relative change of `max w` over the last doubling.
    pub relative_change: f64,
    pub control_growth: Option<f64>,
    pub inconclusive: bool,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
}

impl LinfReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::with_columns(&["run", "nodes", "h", "sigma", "max_w", "median", "level", "measure", "status"]);
        for (run, rungs) in [("singular", &self.rungs), ("control", &self.control)] {
            for r in rungs.iter() {
                for &(k, a) in &r.levels {
                    t.rows.push(vec![
                        Cell::Text(run.to_string()),
                        Cell::Int(r.nodes as i64),
                        Cell::Num(r.h),
                        Cell::Num(r.sigma),
                        Cell::Num(r.max_w),
                        Cell::Num(r.median),
                        Cell::Num(k),
                        Cell::Num(a),
                        Cell::Text(r.status.as_str().to_string()),
                    ]);
                }
            }
        }
        t
    }
}

fn weighted_median(mut samples: Vec<(f64, f64)>) -> f64 {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairwise_sum(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
    let mut acc = 0.0;
    for (v, w) in &samples {
        acc += w;
        if acc >= 0.5 * total {
            return *v;
        }
    }
    samples.last().map(|s| s.0).unwrap_or(f64::NAN)
}

fn linf_rung(spec: &LinfSpec, nodes: usize, sigma: f64, cfg: &SolveConfig, levels: Option<&[f64]>) -> LinfRung {
    let domain = spec.base_problem.domain;
    let blank = |status| LinfRung {
        nodes,
        h: f64::NAN,
        sigma,
        max_w: f64::NAN,
        median: f64::NAN,
        levels: Vec::new(),
        steps: 0,
        status,
    };
    let grid = match Grid::uniform(domain, nodes) {
        Ok(g) => g,
        Err(e) => return blank(RungStatus::Failed(e.to_string())),
    };
    let h = grid.h_max();
    let forcing = Profile::SingularPower { amplitude: spec.amplitude, center: spec.center, sigma, eps_f: h * h }.build(&domain);
    let problem = spec.base_problem.with_forcing(forcing);
    let eps = problem.epsilon;
    let mut max_w: f64 = 0.0;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut snaps: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut pending: Option<Vec<f64>> = None;
    let mut pending_weight = 0.0;
    let every = f64::max(problem.horizon / spec.snapshots.max(1) as f64, 0.0);
    let mut next_keep = 0.0;
    let cfg = SolveConfig { grid, ..*cfg }.with_stride(0);
    let weights = grid.node_weights();
    let out = solve_parabolic_with(&problem, &cfg, |v| {
        let w: Vec<f64> = v.derivatives.iter().map(|d| dot(&d.grad, &d.grad)).collect();
        max_w = w.iter().copied().fold(max_w, f64::max);
        // snapshots are held over intervals of length ~T/snapshots; each
        // carries the time it represents
        if v.time >= next_keep && v.weight > 0.0 {
            if let Some(prev) = pending.take() {
                snaps.push((prev, pending_weight));
            }
            pending = Some(w);
            pending_weight = 0.0;
            next_keep += every;
        }
        pending_weight += v.weight;
    });
    if let Some(prev) = pending.take() {
        snaps.push((prev, pending_weight));
    }
    let steps = match out {
        Ok(r) => r.steps(),
        Err(e) => return blank(RungStatus::Failed(e.to_string())),
    };
    for (w, tw) in &snaps {
        for (k, v) in w.iter().enumerate() {
            samples.push((eps + v, tw * weights[k]));
        }
    }
    let median = weighted_median(samples);
    let ladder: Vec<f64> = match levels {
        Some(l) => l.to_vec(),
        None => {
            let mut l = vec![median];
            while *l.last().expect("non-empty") <= 2.0 * (eps + max_w) {
                let next = 2.0 * l.last().expect("non-empty");
                l.push(next);
            }
            l
        }
    };
    let measure = |k: f64| {
        pairwise_sum(
            &snaps.iter().map(|(w, tw)| tw * integrate_with(&grid, |n| if eps + w[n] >= k { 1.0 } else { 0.0 })).collect::<Vec<_>>(),
        )
    };
    LinfRung {
        nodes,
        h,
        sigma,
        max_w,
        median,
        levels: ladder.iter().map(|&k| (k, measure(k))).collect(),
        steps,
        status: RungStatus::Ok,
    }
}

/// Refinement ladder with forcing `A(|x−c|² + h²)^{−σ/2}`: the level
/// measures of `ε + w` must halve per level doubling above the median, and
/// `max w` must settle over the last doubling of the grid.
pub fn run_linf_study(spec: &LinfSpec, cfg: &SolveConfig, exec: &impl RungMap) -> Result<LinfReport, ExperimentError> {
    let problem = &spec.base_problem;
    let dim = problem.dim() as f64;
    if !(problem.diffusion.p >= 2.0) {
        return Err(ExperimentError::Invalid(format!("the bounded-gradient study needs p >= 2 (got {})", problem.diffusion.p)));
    }
    if !(spec.m > dim + 2.0) {
        return Err(ExperimentError::Invalid(format!("m = {} must exceed N+2 = {}", spec.m, dim + 2.0)));
    }
    if !(spec.sigma > 0.0 && spec.sigma * spec.m < dim) {
        return Err(ExperimentError::Invalid(format!(
            "sigma = {} must satisfy 0 < sigma·m < N so that f is in L^m but unbounded",
            spec.sigma
        )));
    }
    if spec.grids.len() < 2 || spec.grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::Invalid("the grid ladder needs at least two increasing sizes".into()));
    }
    let coarse = linf_rung(spec, spec.grids[0], spec.sigma, cfg, None);
    let levels: Vec<f64> = coarse.levels.iter().map(|l| l.0).collect();
    let rest = exec.map(spec.grids[1..].to_vec(), &|n: usize| linf_rung(spec, n, spec.sigma, cfg, Some(&levels)));
    let mut rungs = vec![coarse];
    rungs.extend(rest);
    let control = match spec.control_sigma {
        Some(s) => exec.map(spec.grids.clone(), &|n: usize| linf_rung(spec, n, s, cfg, Some(&levels))),
        None => Vec::new(),
    };

    let mut flags = Vec::new();
    let inconclusive = rungs.iter().any(|r| r.status != RungStatus::Ok);
    if inconclusive {
        flags.push("inconclusive: refinement budget exhausted".to_string());
    }
    let mut checks = Vec::new();
    let n = rungs.len();
    let relative_change = (rungs[n - 1].max_w - rungs[n - 2].max_w).abs() / rungs[n - 1].max_w;
    checks.push(Check::new(
        "stabilization",
        !inconclusive && relative_change < spec.slack.stabilization,
        format!("max w {:.6e} -> {:.6e}, change {relative_change:.3e}", rungs[n - 2].max_w, rungs[n - 1].max_w),
    ));
    let mut decay_ok = !inconclusive;
    let mut detail = String::new();
    for r in rungs.iter().filter(|r| r.status == RungStatus::Ok) {
        for pair in r.levels.windows(2) {
            let ((k, a), (_, b)) = (pair[0], pair[1]);
            if k > r.median && a > 0.0 && b > 0.5 * a {
                decay_ok = false;
                detail = format!("n = {}: |A(2k)| = {b:.3e} > |A(k)|/2 = {:.3e} at k = {k:.3e}", r.nodes, 0.5 * a);
            }
        }
    }
    if detail.is_empty() {
        detail = format!("{} levels per grid", levels.len());
    }
    checks.push(Check::new("level-decay", decay_ok, detail));
    let top_zero = rungs.iter().all(|r| r.levels.last().map(|l| l.1 == 0.0).unwrap_or(false));
    checks.push(Check::new("eventual-zero", top_zero && !inconclusive, "measure at the top level on every grid".to_string()));
    let control_growth = if control.len() >= 2 && control.iter().all(|r| r.status == RungStatus::Ok) {
        let c = control.len();
        let g = control[c - 1].max_w / control[c - 2].max_w - 1.0;
        checks.push(Check::new("control-growth", g > 0.0, format!("control max w grows by {g:.3e}")).reported());
        Some(g)
    } else {
        None
    };
    Ok(LinfReport { rungs, control, relative_change, control_growth, inconclusive, checks, flags })
}

/// Spatial and temporal error orders of the parabolic solver on one
/// manufactured solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub case: String,
    /// `(h, max error at T)` per grid.
    pub space: Vec<(f64, f64)>,
    pub space_order: f64,
    /// `(cfl fraction, max difference to the next halved fraction)` on the
    /// coarsest grid.
    pub time: Vec<(f64, f64)>,
    pub time_order: f64,
    pub checks: Vec<Check>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceSpec {
    /// Diffusion, growth, ε, domain and horizon; forcing and initial datum
    /// come from the solution.
    pub skeleton: ProblemSpec,
    pub case: String,
    pub solution: SharedSolution,
    /// Nodes per axis, each a doubling of the previous.
    pub grids: Vec<usize>,
    /// Step fraction of the spatial ladder.
    pub cfl_fraction: f64,
    /// Successively halved step fractions of the temporal ladder.
    pub time_fractions: Vec<f64>,
    pub min_space_order: f64,
    pub min_time_order: f64,
}

/// Order in `h` against the exact solution on a grid ladder, and order in
/// `dt` by self-convergence over halved step fractions on the coarsest
/// grid, where a fixed grid's spatial error cancels.
pub fn run_convergence_study(spec: &ConvergenceSpec, exec: &impl RungMap) -> Result<ConvergenceReport, ExperimentError> {
    if spec.grids.len() < 2 || spec.time_fractions.len() < 3 {
        return Err(ExperimentError::Invalid("need at least two grids and three step fractions".into()));
    }
    let problem = manufacture(spec.solution.clone(), &spec.skeleton).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    problem.validate().map_err(SolveError::from)?;
    let horizon = problem.horizon;
    let exact = SolutionFn(spec.solution.clone());
    let final_state = |n: usize, cfl: f64| -> Result<ScalarField, ExperimentError> {
        let grid = Grid::uniform(problem.domain, n).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        let cfg = SolveConfig::new(grid).with_cfl(cfl).with_stride(0);
        Ok(solve_parabolic_with(&problem, &cfg, |_| {})?.field.last().clone())
    };
    let max_diff = |a: &ScalarField, b: &dyn Fn(usize) -> f64| {
        a.values().iter().enumerate().map(|(k, v)| (v - b(k)).abs()).fold(0.0, f64::max)
    };

    let spatial = exec.map(spec.grids.clone(), &|n| final_state(n, spec.cfl_fraction));
    let mut space = Vec::new();
    for u in spatial {
        let u = u?;
        let grid = *u.grid();
        let err = max_diff(&u, &|k| exact.value(&grid.coord_flat(k), horizon));
        space.push((grid.h_max(), err));
    }
    let space_order = last_pair_order(&space);

    let coarse = spec.grids[0];
    let temporal = exec.map(spec.time_fractions.clone(), &|c| final_state(coarse, c));
    let states: Vec<ScalarField> = temporal.into_iter().collect::<Result<_, _>>()?;
    let time: Vec<(f64, f64)> = states
        .windows(2)
        .zip(&spec.time_fractions)
        .map(|(pair, c)| (*c, max_diff(&pair[0], &|k| pair[1].values()[k])))
        .collect();
    let time_order = last_pair_order(&time);

    let checks = vec![
        Check::new(
            "space-order",
            space_order >= spec.min_space_order,
            format!("order {space_order:.3} in h (needs {})", spec.min_space_order),
        ),
        Check::new(
            "time-order",
            time_order >= spec.min_time_order,
            format!("order {time_order:.3} in dt (needs {})", spec.min_time_order),
        ),
    ];
    Ok(ConvergenceReport { case: spec.case.clone(), space, space_order, time, time_order, checks })
}

/// `log(e₀/e₁)/log(x₀/x₁)` over the last two entries.
fn last_pair_order(points: &[(f64, f64)]) -> f64 {
    match points {
        [.., (x0, e0), (x1, e1)] if *e0 > 0.0 && *e1 > 0.0 => ln(e0 / e1) / ln(x0 / x1),
        _ => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{DiffusionSpec, HamiltonianSpec};
    use rand::{Rng, SeedableRng};

    #[test]
    fn fit_examples() {
        let exact: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, x * x)).collect();
        let f = fit_loglog_slope(&exact).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && f.stderr < 1e-12);
        let flat: Vec<(f64, f64)> = [1.0, 2.0, 4.0].iter().map(|&x| (x, 3.0)).collect();
        assert!(fit_loglog_slope(&flat).unwrap().slope.abs() < 1e-14);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let noisy: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let x = pow(2.0, i as f64);
                (x, pow(x, 1.5) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            })
            .collect();
        let s = fit_loglog_slope(&noisy).unwrap().slope;
        assert!((1.45..=1.55).contains(&s));
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (0.0, 2.0), (3.0, 1.0)]), Err(FitError::NonPositive { index: 1, .. })));
        assert!(matches!(fit_loglog_slope(&exact[..2]), Err(FitError::TooFewPoints(2))));
    }

    fn ladder(p: f64, amplitude: f64, scalings: Vec<f64>) -> LadderSpec {
        let domain = BoxDomain::unit(2).unwrap();
        let forcing = Profile::Cosine { amplitude, k: [1, 1, 0], time_power: 0.0 }.build(&domain);
        LadderSpec {
            base_problem: ProblemSpec {
                diffusion: DiffusionSpec::power(p).unwrap(),
                hamiltonian: HamiltonianSpec::new(0.0, forcing),
                epsilon: 0.01,
                domain,
                horizon: 0.05,
                initial: InitialDatum::Function(Arc::new(ConstantFn(0.0))),
                lambda: 0.0,
            },
            scalings,
            m: 3.0,
            gates: parabolic_gates(p, 2, 3.0, 0.0).unwrap(),
            slack: Slack::default(),
        }
    }

    #[test]
    fn linear_ladder_is_exact() {
        let spec = ladder(2.0, 1.0, vec![1.0, 2.0, 4.0, 8.0]);
        let cfg = SolveConfig::new(Grid::uniform(spec.base_problem.domain, 17).unwrap());
        let r = run_scaling_study(&spec, &cfg, &Sequential).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert!((r.fits[0].slope - 1.0).abs() < 1e-10);
        assert!((r.fits[2].slope - 3.0).abs() < 1e-10);
        assert_eq!(r.table().rows.len(), 12);
    }

    #[test]
    fn ladder_errors() {
        let spec = ladder(2.0, 0.0, vec![1.0, 2.0, 4.0, 8.0]);
        let cfg = SolveConfig::new(Grid::uniform(spec.base_problem.domain, 9).unwrap());
        assert!(matches!(run_scaling_study(&spec, &cfg, &Sequential), Err(ExperimentError::Fit(FitError::NonPositive { .. }))));
        let short = ladder(2.0, 1.0, vec![1.0, 2.0, 4.0]);
        assert!(matches!(run_scaling_study(&short, &cfg, &Sequential), Err(ExperimentError::Invalid(_))));
        let unordered = ladder(2.0, 1.0, vec![1.0, 4.0, 2.0, 8.0]);
        assert!(run_scaling_study(&unordered, &cfg, &Sequential).is_err());
    }

    #[test]
    fn failed_rungs_are_recorded() {
        let spec = ladder(2.0, 1.0, vec![1.0, 2.0, 4.0, 8.0]);
        let cfg = SolveConfig::new(Grid::uniform(spec.base_problem.domain, 17).unwrap()).with_max_steps(3);
        let r = run_scaling_study(&spec, &cfg, &Sequential).unwrap();
        assert!(r.rungs.iter().all(|x| x.status.as_str() == "failed"));
        assert!(!r.passed());
        assert_eq!(r.table().rows.len(), 12);
    }

    #[test]
    fn elliptic_admissibility() {
        assert!(matches!(elliptic_gates(3.0, 2, 1.9, 0.0), Err(AdmissibilityError::MNotAboveThreshold { .. })));
        assert!(matches!(elliptic_gates(3.0, 3, 2.5, 2.0), Err(AdmissibilityError::GammaNotBelowThreshold { .. })));
        let g = elliptic_gates(3.0, 3, 2.5, 0.0).unwrap();
        assert_eq!(g[0].theta, 0.5);
    }

    #[test]
    fn weighted_median_examples() {
        assert_eq!(weighted_median(vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]), 2.0);
        assert_eq!(weighted_median(vec![(1.0, 0.1), (5.0, 10.0)]), 5.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
