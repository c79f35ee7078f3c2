//! Pointwise and integral identities satisfied by `w = |Du|²`, checked on
//! closed-form and discrete data.
//!
//! `DH` throughout is the spatial gradient of the composed map
//! `x ↦ H(x, t, Du(x, t))`, so it carries `D(|Du|² + ε)^{γ/2}` as well as
//! `Df`.

use alloc::vec::Vec;

use crate::calculus::{
    derivatives, dot, frobenius_sq, mat_vec, quadratic_form, trace, DiffusionSpec, Mat3, NodeDerivatives,
    ProblemSpec,
};
use crate::math::{ln, max_abs, pairwise_sum, pow};
use crate::mesh::{integrate_boundary_with, integrate_with, Face, Grid, ScalarField, SpaceTimeField};
use crate::registry::Manufactured;
use crate::solver::neumann_defect;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub grid_spacing: f64,
    pub convergence_order: Option<f64>,
}

impl IdentityReport {
    pub fn new(lhs: f64, rhs: f64, grid_spacing: f64) -> Self {
        let abs_gap = (lhs - rhs).abs();
        let rel_gap = abs_gap / f64::max(f64::max(lhs.abs(), rhs.abs()), 1.0);
        Self { lhs, rhs, abs_gap, rel_gap, grid_spacing, convergence_order: None }
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.convergence_order = Some(order);
        self
    }

    /// `lhs / rhs`, the empirical constant of an inequality.
    pub fn ratio(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdentityError {
    #[error("at least {needed} snapshots are required (got {got})")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("snapshot index {0} out of range")]
    BadIndex(usize),
    #[error("t = {0} is not a stored time")]
    NotAStoredTime(f64),
    #[error("beta must be positive (got {0})")]
    BetaNotPositive(f64),
    #[error("r must be at least 1 (got {0})")]
    RBelowOne(f64),
    #[error("the forcing has no closed-form gradient")]
    ForcingWithoutGradient,
    #[error("the solution supplies derivatives up to order {0}; three are needed")]
    MissingDerivatives(usize),
    #[error("Neumann precondition fails on face (axis {}, {}) by {defect:e}", face.axis, if face.upper { "upper" } else { "lower" })]
    NeumannViolated { face: Face, defect: f64 },
}

/// Observed order of a quantity that scales like `h^order`.
pub fn observed_order(coarse: f64, fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    ln(coarse / fine) / ln(h_coarse / h_fine)
}

/// The eight groups of the identity for `w`, each evaluated on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BochnerTerms {
    /// `∂t w`.
    pub w_t: f64,
    /// `αε(w) Δw`.
    pub alpha_lap_w: f64,
    /// `2αε(w)|D²u|²`.
    pub alpha_hess_sq: f64,
    /// `2[(αε′)²/αε − αε″](Du·Dw)²`.
    pub curvature: f64,
    /// `2αε′ A(D²u) Du·Dw`.
    pub drift: f64,
    /// `2Du·DH`.
    pub hamiltonian: f64,
    /// `αε′|Dw|²`.
    pub alpha1_dw_sq: f64,
    /// `2αε′ D²w Du·Du`.
    pub alpha1_d2w: f64,
}

impl BochnerTerms {
    pub fn lhs(&self) -> f64 {
        self.w_t - self.alpha_lap_w + self.alpha_hess_sq + self.curvature
    }

    pub fn rhs(&self) -> f64 {
        self.drift + self.hamiltonian + self.alpha1_dw_sq + self.alpha1_d2w
    }

    pub fn residual(&self) -> f64 {
        self.lhs() - self.rhs()
    }
}

/// Pointwise inputs of the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BochnerInputs {
    pub du: Point,
    pub d2u: Mat3,
    pub dw: Point,
    pub d2w: Mat3,
    pub w_t: f64,
    pub dh: Point,
}

pub fn bochner_terms(inp: &BochnerInputs, spec: &DiffusionSpec, epsilon: f64) -> BochnerTerms {
    let w = dot(&inp.du, &inp.du);
    let a = spec.eval_eps(w, epsilon);
    let du_dw = dot(&inp.du, &inp.dw);
    let op_a = trace(&inp.d2u) + a.drift_ratio() * quadratic_form(&inp.d2u, &inp.du);
    BochnerTerms {
        w_t: inp.w_t,
        alpha_lap_w: a.value * trace(&inp.d2w),
        alpha_hess_sq: 2.0 * a.value * frobenius_sq(&inp.d2u),
        curvature: 2.0 * (a.d1 * a.d1 / a.value - a.d2) * du_dw * du_dw,
        drift: 2.0 * a.d1 * op_a * du_dw,
        hamiltonian: 2.0 * dot(&inp.du, &inp.dh),
        alpha1_dw_sq: a.d1 * dot(&inp.dw, &inp.dw),
        alpha1_d2w: 2.0 * a.d1 * quadratic_form(&inp.d2w, &inp.du),
    }
}

fn growth_gradient(gamma: f64, w: f64, epsilon: f64, dw: &Point) -> Point {
    if gamma == 0.0 {
        return [0.0; 3];
    }
    let s = 0.5 * gamma * pow(w + epsilon, 0.5 * gamma - 1.0);
    [s * dw[0], s * dw[1], s * dw[2]]
}

/// The identity's terms at `(x, t)` for a closed-form solution, every
/// derivative taken from the solution's jet and `Df` from the forcing.
pub fn bochner_closed_form(
    solution: &dyn Manufactured,
    spec: &ProblemSpec,
    x: &Point,
    t: f64,
) -> Result<BochnerTerms, IdentityError> {
    if solution.derivative_order() < 3 {
        return Err(IdentityError::MissingDerivatives(solution.derivative_order()));
    }
    let jet = solution.jet(x, t);
    let df = spec.hamiltonian.forcing.gradient(x, t).ok_or(IdentityError::ForcingWithoutGradient)?;
    let dw = jet.dw();
    let dg = growth_gradient(spec.hamiltonian.gamma, jet.w(), spec.epsilon, &dw);
    let inputs = BochnerInputs {
        du: jet.du,
        d2u: jet.d2u,
        dw,
        d2w: jet.d2w(),
        w_t: jet.w_t(),
        dh: [df[0] + dg[0], df[1] + dg[1], df[2] + dg[2]],
    };
    Ok(bochner_terms(&inputs, &spec.diffusion, spec.epsilon))
}

/// Worst relative gap of the closed-form identity over `points`.
pub fn bochner_closed_report(
    solution: &dyn Manufactured,
    spec: &ProblemSpec,
    points: &[Point],
    t: f64,
) -> Result<IdentityReport, IdentityError> {
    let mut worst = IdentityReport::new(0.0, 0.0, 0.0);
    for x in points {
        let terms = bochner_closed_form(solution, spec, x, t)?;
        let r = IdentityReport::new(terms.lhs(), terms.rhs(), 0.0);
        if r.rel_gap >= worst.rel_gap {
            worst = r;
        }
    }
    Ok(worst)
}

/// Closed-form residual at every node of `grid`.
pub fn bochner_residual_closed(
    solution: &dyn Manufactured,
    spec: &ProblemSpec,
    grid: &Grid,
    t: f64,
) -> Result<ScalarField, IdentityError> {
    let values = (0..grid.len())
        .map(|k| bochner_closed_form(solution, spec, &grid.coord_flat(k), t).map(|b| b.residual()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScalarField::new(*grid, values).expect("same grid"))
}

/// Discrete fields shared by the stencil paths: `w = |D_h u|²` and the
/// sampled composite Hamiltonian.
struct Sampled {
    derivs: Vec<NodeDerivatives>,
    w: ScalarField,
    h: ScalarField,
}

fn sample(u: &ScalarField, t: f64, spec: &ProblemSpec) -> Sampled {
    let grid = *u.grid();
    let derivs = derivatives(u);
    let w: Vec<f64> = derivs.iter().map(|d| dot(&d.grad, &d.grad)).collect();
    let h: Vec<f64> = derivs
        .iter()
        .enumerate()
        .map(|(k, d)| spec.hamiltonian.eval(&grid.coord_flat(k), t, &d.grad, spec.epsilon))
        .collect();
    Sampled {
        derivs,
        w: ScalarField::new(grid, w).expect("same grid"),
        h: ScalarField::new(grid, h).expect("same grid"),
    }
}

/// Stencil residual of the identity at stored time `index`, at every node.
/// `∂t w` is the three-point difference through the neighbouring snapshots,
/// one-sided at the ends of the record.
pub fn bochner_residual(u: &SpaceTimeField, spec: &ProblemSpec, index: usize) -> Result<ScalarField, IdentityError> {
    if u.len() < 2 {
        return Err(IdentityError::TooFewSnapshots { needed: 2, got: u.len() });
    }
    if index >= u.len() {
        return Err(IdentityError::BadIndex(index));
    }
    let times = u.times();
    let grid = *u.grid();
    let now = sample(&u.snapshots()[index], times[index], spec);
    let w_of = |j: usize| -> Vec<f64> {
        derivatives(&u.snapshots()[j]).iter().map(|d| dot(&d.grad, &d.grad)).collect()
    };
    let w_t: Vec<f64> = if u.len() == 2 {
        let (a, b) = (w_of(0), w_of(1));
        let dt = times[1] - times[0];
        a.iter().zip(&b).map(|(x, y)| (y - x) / dt).collect()
    } else {
        let c = index.clamp(1, u.len() - 2);
        let (t0, t1, t2) = (times[c - 1], times[c], times[c + 1]);
        let (w0, w1, w2) = (w_of(c - 1), w_of(c), w_of(c + 1));
        let t = times[index];
        // derivative of the quadratic interpolant through the three states
        let l0 = ((t - t1) + (t - t2)) / ((t0 - t1) * (t0 - t2));
        let l1 = ((t - t0) + (t - t2)) / ((t1 - t0) * (t1 - t2));
        let l2 = ((t - t0) + (t - t1)) / ((t2 - t0) * (t2 - t1));
        (0..grid.len()).map(|k| l0 * w0[k] + l1 * w1[k] + l2 * w2[k]).collect()
    };
    let w_derivs = derivatives(&now.w);
    let h_derivs = derivatives(&now.h);
    let values = (0..grid.len())
        .map(|k| {
            let inputs = BochnerInputs {
                du: now.derivs[k].grad,
                d2u: now.derivs[k].hess,
                dw: w_derivs[k].grad,
                d2w: w_derivs[k].hess,
                w_t: w_t[k],
                dh: h_derivs[k].grad,
            };
            bochner_terms(&inputs, &spec.diffusion, spec.epsilon).residual()
        })
        .collect();
    Ok(ScalarField::new(grid, values).expect("same grid"))
}

fn normal_difference(field: &ScalarField, k: usize, face: Face) -> f64 {
    let grid = field.grid();
    let n = grid.nodes_per_axis()[face.axis];
    let h = grid.h(face.axis);
    let mut idx = grid.multi_index(k);
    let mut at = |j: usize| {
        idx[face.axis] = if face.upper { n - 1 - j } else { j };
        field.at(idx)
    };
    (3.0 * at(0) - 4.0 * at(1) + at(2)) / (2.0 * h)
}

fn check_neumann(u: &ScalarField, factor: f64) -> Result<(), IdentityError> {
    let h = u.grid().h_max();
    let tol = factor * h * f64::max(1.0, u.max_abs());
    for (face, defect) in neumann_defect(u) {
        if defect > tol {
            return Err(IdentityError::NeumannViolated { face, defect });
        }
    }
    Ok(())
}

/// Neumann precondition tolerance, as a multiple of `h max(1, |u|∞)`. A
/// field that satisfies the condition shows an O(h²) one-sided defect, one
/// that violates it an O(1) defect, so an O(h) threshold separates the two
/// without rejecting under-resolved but compatible states.
pub const NEUMANN_TOL_FACTOR: f64 = 1.0;

/// Largest outward normal difference of `w = |Du|²` over the boundary,
/// with second-order one-sided differences.
pub fn boundary_sign_check(u: &ScalarField) -> Result<f64, IdentityError> {
    check_neumann(u, NEUMANN_TOL_FACTOR)?;
    let grid = u.grid();
    let w = ScalarField::new(*grid, derivatives(u).iter().map(|d| dot(&d.grad, &d.grad)).collect()).expect("same grid");
    let mut worst = f64::NEG_INFINITY;
    for face in grid.faces() {
        for (k, _) in grid.face_nodes(face) {
            worst = f64::max(worst, normal_difference(&w, k, face));
        }
    }
    Ok(worst)
}

fn stored_index(u: &SpaceTimeField, t: f64) -> Result<usize, IdentityError> {
    let tol = 1e-9 * f64::max(u.horizon(), 1.0);
    u.times().iter().position(|&s| (s - t).abs() <= tol).ok_or(IdentityError::NotAStoredTime(t))
}

/// The integrals of the integral identity at one time slice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct SliceIntegrals {
    energy: f64,
    hessian: f64,
    gradient_w: f64,
    drift: f64,
    hamiltonian: f64,
    boundary: f64,
}

fn slice_integrals(u: &ScalarField, t: f64, spec: &ProblemSpec, beta: f64) -> SliceIntegrals {
    let s = sample(u, t, spec);
    let grid = u.grid();
    let eps = spec.epsilon;
    let wd = derivatives(&s.w);
    let hd = derivatives(&s.h);
    let w = s.w.values();
    let alpha = |k: usize| spec.diffusion.eval_eps(w[k], eps);
    SliceIntegrals {
        energy: integrate_with(grid, |k| pow(eps + w[k], beta + 1.0)) / (beta + 1.0),
        hessian: 2.0 * integrate_with(grid, |k| frobenius_sq(&s.derivs[k].hess) * alpha(k).value * pow(eps + w[k], beta)),
        gradient_w: integrate_with(grid, |k| {
            let a = alpha(k);
            (a.d1 + beta * a.value / (w[k] + eps)) * pow(eps + w[k], beta) * dot(&wd[k].grad, &wd[k].grad)
        }),
        drift: 2.0 * beta * integrate_with(grid, |k| {
            let q = dot(&s.derivs[k].grad, &wd[k].grad);
            q * q * alpha(k).d1 * pow(eps + w[k], beta - 1.0)
        }),
        hamiltonian: 2.0 * integrate_with(grid, |k| dot(&s.derivs[k].grad, &hd[k].grad) * pow(eps + w[k], beta)),
        boundary: integrate_boundary_with(grid, |k, face| {
            alpha(k).value * pow(eps + w[k], beta) * normal_difference(&s.w, k, face)
        }),
    }
}

/// Both sides of the integral identity on `[0, t]`, `t` being a stored time:
///
/// ```text
/// lhs = ∫(ε+w(t))^{β+1}/(β+1) + 2∫∫|D²u|²α(ε+w)^β
///     + ∫∫[α′ + βα/(ε+w)](ε+w)^β|Dw|² + 2β∫∫(Du·Dw)²α′(ε+w)^{β−1}
/// rhs = ∫(ε+w(0))^{β+1}/(β+1) + 2∫∫Du·DH(ε+w)^β + ∫∫_{∂Ω} α(ε+w)^β ∂ν w
/// ```
///
/// The boundary term carrying `∂ν u` is dropped once every slice passes
/// the Neumann precondition.
pub fn integral_identity_gap(
    u: &SpaceTimeField,
    spec: &ProblemSpec,
    beta: f64,
    t: f64,
) -> Result<IdentityReport, IdentityError> {
    if !(beta > 0.0) {
        return Err(IdentityError::BetaNotPositive(beta));
    }
    let end = stored_index(u, t)?;
    let times = u.times();
    let mut lhs_terms = Vec::with_capacity(3 * end + 1);
    let mut rhs_terms = Vec::with_capacity(2 * end + 1);
    let mut first = None;
    let mut last = None;
    for j in 0..=end {
        check_neumann(&u.snapshots()[j], NEUMANN_TOL_FACTOR)?;
        let s = slice_integrals(&u.snapshots()[j], times[j], spec, beta);
        if j == 0 {
            first = Some(s.energy);
        }
        if j == end {
            last = Some(s.energy);
            break;
        }
        let dt = times[j + 1] - times[j];
        lhs_terms.extend([dt * s.hessian, dt * s.gradient_w, dt * s.drift]);
        rhs_terms.extend([dt * s.hamiltonian, dt * s.boundary]);
    }
    lhs_terms.push(last.expect("end slice"));
    rhs_terms.push(first.expect("first slice"));
    Ok(IdentityReport::new(pairwise_sum(&lhs_terms), pairwise_sum(&rhs_terms), u.grid().h_max()))
}

/// Result of the coercivity reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    /// `lhs = 𝓘`, `rhs` its lower bound.
    pub report: IdentityReport,
    /// `∫∫` of the pointwise difference of the two integrands.
    pub margin: f64,
}

impl CoercivityReport {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

/// `𝓘 ≥ βc₀∫∫(ε+w)^{β−1}α|Dw|² + 2c₀∫∫(ε+w)^βα|D²u|²` over the whole record,
/// with `Dw = 2D²u Du` taken from the same stencils as `D²u`.
pub fn coercivity_check(u: &SpaceTimeField, spec: &ProblemSpec, beta: f64) -> Result<CoercivityReport, IdentityError> {
    if !(beta > 0.0) {
        return Err(IdentityError::BetaNotPositive(beta));
    }
    let c0 = spec.diffusion.c0();
    let eps = spec.epsilon;
    let weights = u.time_weights();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut margin = Vec::new();
    for (snap, dt) in u.snapshots().iter().zip(weights) {
        if dt == 0.0 {
            continue;
        }
        let grid = snap.grid();
        let derivs = derivatives(snap);
        let pieces: Vec<[f64; 3]> = derivs
            .iter()
            .map(|d| {
                let w = dot(&d.grad, &d.grad);
                let a = spec.diffusion.eval_eps(w, eps);
                let dw = mat_vec(&d.hess, &d.grad).map(|v| 2.0 * v);
                let dw_sq = dot(&dw, &dw);
                let q = dot(&d.grad, &dw);
                let hess_sq = frobenius_sq(&d.hess);
                let low = pow(eps + w, beta - 1.0);
                let high = pow(eps + w, beta);
                let i = low * ((beta * a.value + a.d1 * (eps + w)) * dw_sq + 2.0 * beta * a.d1 * q * q)
                    + 2.0 * high * a.value * hess_sq;
                let bound = beta * c0 * low * a.value * dw_sq + 2.0 * c0 * high * a.value * hess_sq;
                let diff = low * ((beta * (1.0 - c0) * a.value + a.d1 * (eps + w)) * dw_sq + 2.0 * beta * a.d1 * q * q)
                    + 2.0 * (1.0 - c0) * high * a.value * hess_sq;
                [i, bound, diff]
            })
            .collect();
        lhs.push(dt * integrate_with(grid, |k| pieces[k][0]));
        rhs.push(dt * integrate_with(grid, |k| pieces[k][1]));
        margin.push(dt * integrate_with(grid, |k| pieces[k][2]));
    }
    Ok(CoercivityReport {
        report: IdentityReport::new(pairwise_sum(&lhs), pairwise_sum(&rhs), u.grid().h_max()),
        margin: pairwise_sum(&margin),
    })
}

/// Both sides of the energy inequality obtained from the integral identity
/// by the coercivity bound and the boundary sign, on `[0, t]`:
///
/// ```text
/// ∫(ε+w(t))^{β+1} + 2c₀(β+1)∫∫(ε+w)^βα|D²u|² + c₀β(β+1)∫∫(ε+w)^{β−1}α|Dw|²
///   ≤ ∫(ε+w(0))^{β+1} + 2(β+1)∫∫Du·DH(ε+w)^β
/// ```
pub fn energy_inequality(
    u: &SpaceTimeField,
    spec: &ProblemSpec,
    beta: f64,
    t: f64,
) -> Result<IdentityReport, IdentityError> {
    if !(beta > 0.0) {
        return Err(IdentityError::BetaNotPositive(beta));
    }
    let end = stored_index(u, t)?;
    let c0 = spec.diffusion.c0();
    let eps = spec.epsilon;
    let times = u.times();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..=end {
        let snap = &u.snapshots()[j];
        let grid = snap.grid();
        let s = sample(snap, times[j], spec);
        let w = s.w.values();
        if j == 0 {
            rhs.push(integrate_with(grid, |k| pow(eps + w[k], beta + 1.0)));
        }
        if j == end {
            lhs.push(integrate_with(grid, |k| pow(eps + w[k], beta + 1.0)));
            break;
        }
        let dt = times[j + 1] - times[j];
        let wd = derivatives(&s.w);
        let hd = derivatives(&s.h);
        let alpha = |k: usize| spec.diffusion.eval_eps(w[k], eps).value;
        lhs.push(
            dt * 2.0
                * c0
                * (beta + 1.0)
                * integrate_with(grid, |k| pow(eps + w[k], beta) * alpha(k) * frobenius_sq(&s.derivs[k].hess)),
        );
        lhs.push(
            dt * c0
                * beta
                * (beta + 1.0)
                * integrate_with(grid, |k| pow(eps + w[k], beta - 1.0) * alpha(k) * dot(&wd[k].grad, &wd[k].grad)),
        );
        rhs.push(
            dt * 2.0
                * (beta + 1.0)
                * integrate_with(grid, |k| dot(&s.derivs[k].grad, &hd[k].grad) * pow(eps + w[k], beta)),
        );
    }
    Ok(IdentityReport::new(pairwise_sum(&lhs), pairwise_sum(&rhs), u.grid().h_max()))
}

/// Result of the embedding check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnReport {
    /// `lhs = ‖v‖^s_{L^s}`, `rhs = 1 + ‖v‖^{2r/N}_{L^∞(L^r)} ‖v‖²_{L²(0,T;H¹)}`.
    pub report: IdentityReport,
    /// `lhs / rhs`, an estimate of the embedding constant.
    pub ratio: f64,
    /// The same ratio with only `‖Dv‖²_{L²}` in the product.
    pub ratio_gradient_only: f64,
    pub s: f64,
}

/// Parabolic embedding with `s = 2(N + r)/N`.
pub fn gn_check(v: &SpaceTimeField, r: f64) -> Result<GnReport, IdentityError> {
    if !(r >= 1.0) {
        return Err(IdentityError::RBelowOne(r));
    }
    let dim = v.grid().dim() as f64;
    let s = 2.0 * (dim + r) / dim;
    let lhs = pow(crate::norms::lebesgue_qt(v, s).expect("s > 1"), s);
    let sup = crate::norms::mixed_inf_rho(v, r).expect("r >= 1").value;
    let l2 = pow(crate::norms::lebesgue_qt(v, 2.0).expect("2 > 1"), 2.0);
    let grads = crate::norms::VectorSeries::gradients(v).magnitude();
    let dv2 = pow(crate::norms::lebesgue_qt(&grads, 2.0).expect("2 > 1"), 2.0);
    let weight = pow(sup, 2.0 * r / dim);
    let rhs = 1.0 + weight * (l2 + dv2);
    let report = IdentityReport::new(lhs, rhs, v.grid().h_max());
    Ok(GnReport { ratio: lhs / rhs, ratio_gradient_only: lhs / (1.0 + weight * dv2), report, s })
}

/// `max |r|` of a residual field, optionally over interior nodes only.
pub fn residual_max(field: &ScalarField, interior_only: bool) -> f64 {
    let grid = field.grid();
    if !interior_only {
        return max_abs(field.values());
    }
    field
        .values()
        .iter()
        .enumerate()
        .filter(|(k, _)| !grid.is_boundary(grid.multi_index(*k)))
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}
