//! The regularized diffusion and Hamiltonian, and the finite-difference
//! operators they are evaluated with.
//!
//! Derivatives are central differences on the reflection-closed field, so
//! the normal component of every discrete gradient vanishes on the boundary
//! exactly and the Hessian is symmetric by construction.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::exponents::{growth_threshold, AdmissibilityError};
use crate::math::{pow, sqrt};
use crate::mesh::{BoxDomain, Grid, ScalarField, SpaceTimeField};
use crate::Point;

pub type Mat3 = [[f64; 3]; 3];

/// Value and first two derivatives of the diffusion coefficient at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl AlphaJet {
    /// `2α′/α`, the weight of the drift term in the operator.
    pub fn drift_ratio(&self) -> f64 {
        2.0 * self.d1 / self.value
    }
}

/// A diffusion coefficient given by plain function pointers for its value
/// and first two derivatives.
#[derive(Clone, Copy)]
pub struct CustomDiffusion {
    pub value: fn(f64) -> f64,
    pub d1: fn(f64) -> f64,
    pub d2: fn(f64) -> f64,
}

impl fmt::Debug for CustomDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomDiffusion")
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DiffusionModel {
    /// `α(s) = s^{(p−2)/2}`.
    Power,
    Custom(CustomDiffusion),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("p must exceed 1 (got {0})")]
    PNotAboveOne(f64),
    #[error("structural bounds must satisfy -1 < i_alpha <= s_alpha < inf (got {i_alpha}, {s_alpha})")]
    BadIndices { i_alpha: f64, s_alpha: f64 },
    #[error("growth bounds must satisfy 0 < lower <= upper < inf (got {lower}, {upper})")]
    BadGrowthBounds { lower: f64, upper: f64 },
    #[error("2s α'(s) + α(s) >= (1 + i_alpha) α(s) fails at s = {0}")]
    CoercivityFails(f64),
}

/// The nonlinearity `α` with its structural constants.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionSpec {
    pub p: f64,
    pub model: DiffusionModel,
    /// `inf 2sα′(s)/α(s)`.
    pub i_alpha: f64,
    /// `sup 2sα′(s)/α(s)`.
    pub s_alpha: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
}

/// Sample points used to check the structural inequalities of a custom
/// diffusion: `10^-6 .. 10^6`.
pub fn structural_samples() -> impl Iterator<Item = f64> {
    (-12..=12).map(|k| pow(10.0, f64::from(k) / 2.0))
}

impl DiffusionSpec {
    pub fn power(p: f64) -> Result<Self, DiffusionError> {
        if !(p > 1.0) {
            return Err(DiffusionError::PNotAboveOne(p));
        }
        Ok(Self { p, model: DiffusionModel::Power, i_alpha: p - 2.0, s_alpha: p - 2.0, alpha_lower: 1.0, alpha_upper: 1.0 })
    }

    /// A general coefficient. The structural inequalities are checked on
    /// [`structural_samples`].
    pub fn custom(
        p: f64,
        alpha: CustomDiffusion,
        i_alpha: f64,
        s_alpha: f64,
        alpha_lower: f64,
        alpha_upper: f64,
    ) -> Result<Self, DiffusionError> {
        if !(p > 1.0) {
            return Err(DiffusionError::PNotAboveOne(p));
        }
        if !(i_alpha > -1.0 && i_alpha <= s_alpha && s_alpha.is_finite()) {
            return Err(DiffusionError::BadIndices { i_alpha, s_alpha });
        }
        if !(alpha_lower > 0.0 && alpha_lower <= alpha_upper && alpha_upper.is_finite()) {
            return Err(DiffusionError::BadGrowthBounds { lower: alpha_lower, upper: alpha_upper });
        }
        let spec = Self { p, model: DiffusionModel::Custom(alpha), i_alpha, s_alpha, alpha_lower, alpha_upper };
        for s in structural_samples() {
            let a = spec.eval(s);
            if 2.0 * s * a.d1 + a.value < (1.0 + i_alpha) * a.value * (1.0 - 1e-12) {
                return Err(DiffusionError::CoercivityFails(s));
            }
        }
        Ok(spec)
    }

    pub fn is_power(&self) -> bool {
        matches!(self.model, DiffusionModel::Power)
    }

    /// `α(s)` and its derivatives.
    pub fn eval(&self, s: f64) -> AlphaJet {
        match self.model {
            DiffusionModel::Power => {
                let a = 0.5 * (self.p - 2.0);
                let value = pow(s, a);
                // derivatives written as multiples of the value keep s → 0
                // finite whenever the value is
                let d1 = if a == 0.0 { 0.0 } else { a * value / s };
                let d2 = if a == 0.0 || a == 1.0 { 0.0 } else { a * (a - 1.0) * value / (s * s) };
                AlphaJet { value, d1, d2 }
            }
            DiffusionModel::Custom(c) => AlphaJet { value: (c.value)(s), d1: (c.d1)(s), d2: (c.d2)(s) },
        }
    }

    /// `αε(s) = α(s + ε)` and its derivatives in `s`.
    pub fn eval_eps(&self, s: f64, epsilon: f64) -> AlphaJet {
        self.eval(s + epsilon)
    }

    /// `c₀ = min{1, 1 + i_α}`.
    pub fn c0(&self) -> f64 {
        f64::min(1.0, 1.0 + self.i_alpha)
    }

    /// Largest eigenvalue bound of the diffusion tensor
    /// `αε(w)(I + (2αε′/αε) Du⊗Du)`: `αε(w)(1 + |2wαε′(w)/αε(w)|)`.
    pub fn spectral_bound(&self, w: f64, epsilon: f64) -> f64 {
        self.spectral_bound_split(w, w, epsilon)
    }

    /// [`Self::spectral_bound`] with the coefficients taken at `w_coeff`
    /// and the rank-one direction of squared length `g2`.
    pub fn spectral_bound_split(&self, w_coeff: f64, g2: f64, epsilon: f64) -> f64 {
        let a = self.eval_eps(w_coeff, epsilon);
        a.value * (1.0 + (g2 * a.drift_ratio()).abs())
    }
}

/// `(αε(s), αε′(s))`.
pub fn alpha_eps(s: f64, spec: &DiffusionSpec, epsilon: f64) -> (f64, f64) {
    let a = spec.eval_eps(s, epsilon);
    (a.value, a.d1)
}

/// A function of space and time, optionally with its spatial gradient.
pub trait SpaceTimeFn: Send + Sync + fmt::Debug {
    fn value(&self, x: &Point, t: f64) -> f64;

    fn gradient(&self, _x: &Point, _t: f64) -> Option<Point> {
        None
    }
}

pub type SharedFn = Arc<dyn SpaceTimeFn>;

/// `H(x, t, ξ) = (|ξ|² + ε)^{γ/2} + f(x, t)`.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub gamma: f64,
    pub forcing: SharedFn,
}

impl HamiltonianSpec {
    pub fn new(gamma: f64, forcing: SharedFn) -> Self {
        Self { gamma, forcing }
    }

    pub fn eval(&self, x: &Point, t: f64, grad: &Point, epsilon: f64) -> f64 {
        hamiltonian_eval(grad, self.forcing.value(x, t), self.gamma, epsilon)
    }
}

/// Initial datum: a closed form or a sampled field.
#[derive(Debug, Clone)]
pub enum InitialDatum {
    Function(SharedFn),
    Field(ScalarField),
}

impl InitialDatum {
    pub fn sample(&self, grid: &Grid) -> Option<ScalarField> {
        match self {
            InitialDatum::Function(f) => Some(ScalarField::from_fn(*grid, |x| f.value(x, 0.0))),
            InitialDatum::Field(field) => (field.grid() == grid).then(|| field.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("epsilon must be positive (got {0})")]
    EpsilonNotPositive(f64),
    #[error("time horizon must be positive (got {0})")]
    HorizonNotPositive(f64),
    #[error("lambda must be non-negative (got {0})")]
    NegativeLambda(f64),
    #[error("gamma must be non-negative (got {0})")]
    NegativeGamma(f64),
    #[error(transparent)]
    Admissibility(#[from] AdmissibilityError),
}

/// A regularized parabolic problem (`lambda == 0`) or its stationary
/// counterpart `λu − αε A(D²u) = H` (`lambda > 0`).
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub diffusion: DiffusionSpec,
    pub hamiltonian: HamiltonianSpec,
    pub epsilon: f64,
    pub domain: BoxDomain,
    pub horizon: f64,
    pub initial: InitialDatum,
    pub lambda: f64,
}

impl ProblemSpec {
    /// Checks the structural constraints. The gradient growth must stay
    /// below `ℓ(p, N)` for the evolution problem and below `p − 1` for the
    /// stationary one.
    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.epsilon > 0.0) {
            return Err(ProblemError::EpsilonNotPositive(self.epsilon));
        }
        if !(self.horizon > 0.0) {
            return Err(ProblemError::HorizonNotPositive(self.horizon));
        }
        if !(self.lambda >= 0.0) {
            return Err(ProblemError::NegativeLambda(self.lambda));
        }
        let gamma = self.hamiltonian.gamma;
        if !(gamma >= 0.0) {
            return Err(ProblemError::NegativeGamma(gamma));
        }
        let threshold = if self.is_elliptic() {
            self.diffusion.p - 1.0
        } else {
            growth_threshold(&self.diffusion.p, self.domain.dim() as u32)?
        };
        if gamma >= threshold {
            return Err(AdmissibilityError::GammaNotBelowThreshold { gamma, threshold }.into());
        }
        Ok(())
    }

    pub fn is_elliptic(&self) -> bool {
        self.lambda > 0.0
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Same problem with the forcing replaced.
    pub fn with_forcing(&self, forcing: SharedFn) -> Self {
        let mut out = self.clone();
        out.hamiltonian.forcing = forcing;
        out
    }
}

/// `Tr(M) + (2αε′(|g|²)/αε(|g|²)) (Mg)·g`.
pub fn operator_a(hess: &Mat3, grad: &Point, spec: &DiffusionSpec, epsilon: f64) -> f64 {
    let w = dot(grad, grad);
    let a = spec.eval_eps(w, epsilon);
    trace(hess) + a.drift_ratio() * quadratic_form(hess, grad)
}

/// `αε(|g|²) A(M)`, written as `α Tr M + 2α′ (Mg)·g` so it stays finite
/// where `α′/α` alone would not.
pub fn diffusion_term(hess: &Mat3, grad: &Point, spec: &DiffusionSpec, epsilon: f64) -> f64 {
    let w = dot(grad, grad);
    let a = spec.eval_eps(w, epsilon);
    a.value * trace(hess) + 2.0 * a.d1 * quadratic_form(hess, grad)
}

/// The scheme's diffusion term at a node: [`diffusion_term`] with the
/// coefficients taken at `w_coeff` instead of the central `|Du|²`.
pub fn discrete_diffusion(d: &NodeDerivatives, spec: &DiffusionSpec, epsilon: f64) -> f64 {
    let a = spec.eval_eps(d.w_coeff, epsilon);
    a.value * trace(&d.hess) + 2.0 * a.d1 * quadratic_form(&d.hess, &d.grad)
}

/// `(|ξ|² + ε)^{γ/2} + f`, with `(·)^0 = 1`.
pub fn hamiltonian_eval(grad: &Point, f_val: f64, gamma: f64, epsilon: f64) -> f64 {
    let base = dot(grad, grad) + epsilon;
    let growth = if gamma == 0.0 { 1.0 } else { pow(base, 0.5 * gamma) };
    growth + f_val
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    sqrt(dot(a, a))
}

pub fn trace(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

pub fn mat_vec(m: &Mat3, v: &Point) -> Point {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

/// `(Mv)·v`.
pub fn quadratic_form(m: &Mat3, v: &Point) -> f64 {
    dot(&mat_vec(m, v), v)
}

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &Mat3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum()
}

/// Discrete gradient and Hessian at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDerivatives {
    pub grad: Point,
    pub hess: Mat3,
    /// `½ Σ_a [(D⁺_a u)² + (D⁻_a u)²]`, the squared gradient the diffusion
    /// coefficients are evaluated at. It agrees with `|grad|²` to O(h²) on
    /// smooth data but does not vanish where only the central difference
    /// does, as on reflected faces.
    pub w_coeff: f64,
}

/// Central first and second differences at `idx` on the reflection-closed
/// field.
pub fn node_derivatives(field: &ScalarField, idx: [usize; 3]) -> NodeDerivatives {
    let grid = field.grid();
    let dim = grid.dim();
    let centre = field.at(idx);
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    let mut w_coeff = 0.0;
    for a in 0..dim {
        let h = grid.h(a);
        let mut e = [0isize; 3];
        e[a] = 1;
        let plus = field.reflected(idx, e);
        e[a] = -1;
        let minus = field.reflected(idx, e);
        grad[a] = (plus - minus) / (2.0 * h);
        let (fwd, bwd) = ((plus - centre) / h, (centre - minus) / h);
        w_coeff += 0.5 * (fwd * fwd + bwd * bwd);
        hess[a][a] = (plus - 2.0 * centre + minus) / (h * h);
        for b in (a + 1)..dim {
            let hb = grid.h(b);
            let mut o = [0isize; 3];
            let mut corner = |sa: isize, sb: isize| {
                o[a] = sa;
                o[b] = sb;
                field.reflected(idx, o)
            };
            let mixed = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h * hb);
            hess[a][b] = mixed;
            hess[b][a] = mixed;
        }
    }
    NodeDerivatives { grad, hess, w_coeff }
}

/// Vector samples on every node.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<Point>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<Point>) -> Self {
        assert_eq!(grid.len(), values.len(), "vector field length");
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: Point) -> Self {
        Self { grid, values: alloc::vec![value; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn component(&self, axis: usize) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(|v| v[axis]).collect()).expect("same grid")
    }

    /// `|v|` at every node.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(norm).collect()).expect("same grid")
    }

    /// `|v|²` at every node.
    pub fn magnitude_sq(&self) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(|v| dot(v, v)).collect()).expect("same grid")
    }
}

/// Symmetric matrix samples on every node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    values: Vec<Mat3>,
}

impl MatrixField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Mat3] {
        &self.values
    }
}

pub fn gradient(field: &ScalarField) -> VectorField {
    let grid = *field.grid();
    let values = (0..grid.len()).map(|k| node_derivatives(field, grid.multi_index(k)).grad).collect();
    VectorField { grid, values }
}

pub fn hessian(field: &ScalarField) -> MatrixField {
    let grid = *field.grid();
    let values = (0..grid.len()).map(|k| node_derivatives(field, grid.multi_index(k)).hess).collect();
    MatrixField { grid, values }
}

/// Gradient and Hessian together, sharing one stencil sweep.
pub fn derivatives(field: &ScalarField) -> Vec<NodeDerivatives> {
    let grid = field.grid();
    (0..grid.len()).map(|k| node_derivatives(field, grid.multi_index(k))).collect()
}

/// `αε(w)A(D²u) + H(x, t, Du) − λu` at every node: the right-hand side the
/// explicit scheme advances with.
pub fn scheme_rhs(u: &ScalarField, t: f64, spec: &ProblemSpec) -> ScalarField {
    let grid = *u.grid();
    let eps = spec.epsilon;
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let idx = grid.multi_index(k);
        let d = node_derivatives(u, idx);
        let x = grid.coord(idx);
        let mut r = discrete_diffusion(&d, &spec.diffusion, eps) + spec.hamiltonian.eval(&x, t, &d.grad, eps);
        if spec.lambda > 0.0 {
            r -= spec.lambda * u.values()[k];
        }
        out.push(r);
    }
    ScalarField::new(grid, out).expect("same grid")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalculusError {
    #[error("at least {needed} snapshots are required (got {got})")]
    TooFewSnapshots { needed: usize, got: usize },
}

/// Pointwise `∂t u − αε(w)A(D²u) − H + λu` with a forward difference in
/// time, at every stored time but the last. Boundary nodes are set to zero;
/// use [`pde_residual_all`] to include them with the reflected stencil.
pub fn pde_residual(u: &SpaceTimeField, spec: &ProblemSpec) -> Result<SpaceTimeField, CalculusError> {
    let full = pde_residual_all(u, spec)?;
    let grid = *u.grid();
    Ok(full.map_nodes(|k, v| if grid.is_boundary(grid.multi_index(k)) { 0.0 } else { v }))
}

/// [`pde_residual`] including boundary nodes.
pub fn pde_residual_all(u: &SpaceTimeField, spec: &ProblemSpec) -> Result<SpaceTimeField, CalculusError> {
    if u.len() < 2 {
        return Err(CalculusError::TooFewSnapshots { needed: 2, got: u.len() });
    }
    let times = u.times();
    let mut out = Vec::with_capacity(u.len() - 1);
    for k in 0..u.len() - 1 {
        let dt = times[k + 1] - times[k];
        let now = &u.snapshots()[k];
        let next = &u.snapshots()[k + 1];
        let rhs = scheme_rhs(now, times[k], spec);
        let values = now
            .values()
            .iter()
            .zip(next.values())
            .zip(rhs.values())
            .map(|((a, b), r)| (b - a) / dt - r)
            .collect();
        out.push(ScalarField::new(*u.grid(), values).expect("same grid"));
    }
    Ok(SpaceTimeField::new(times[..u.len() - 1].to_vec(), out).expect("validated times"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, sin, PI};
    use crate::mesh::BoxDomain;

    fn unit_grid(dim: usize, n: usize) -> Grid {
        Grid::uniform(BoxDomain::unit(dim).unwrap(), n).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let p2 = DiffusionSpec::power(2.0).unwrap();
        assert_eq!(alpha_eps(0.0, &p2, 0.1), (1.0, 0.0));
        let p4 = DiffusionSpec::power(4.0).unwrap();
        assert_eq!(alpha_eps(3.0, &p4, 1.0), (4.0, 1.0));
        let p15 = DiffusionSpec::power(1.5).unwrap();
        let (v, d) = alpha_eps(0.0, &p15, 0.01);
        assert!((v - pow(0.01, -0.25)).abs() < 1e-12);
        assert!(v.is_finite() && d.is_finite());
        assert!(DiffusionSpec::power(1.0).is_err());
    }

    #[test]
    fn drift_ratio_bounds_for_power_model() {
        for p in [1.2, 1.5, 2.5, 4.0] {
            let spec = DiffusionSpec::power(p).unwrap();
            let eps = 0.3;
            let lo = f64::min(0.0, p - 2.0);
            let hi = f64::max(0.0, p - 2.0);
            for s in structural_samples() {
                let a = spec.eval_eps(s, eps);
                let r = s * a.drift_ratio();
                assert!((r - (p - 2.0) * s / (s + eps)).abs() < 1e-9 * (1.0 + r.abs()));
                assert!(r > lo - 1e-15 && r < hi + 1e-15);
                // 2sα′(s) + α(s) = (p − 1)α(s) for the unregularized power law
                let b = spec.eval(s);
                let lhs = 2.0 * s * b.d1 + b.value;
                assert!((lhs - (p - 1.0) * b.value).abs() <= 1e-12 * b.value.abs().max(1.0));
                assert!(lhs >= (1.0 + spec.i_alpha) * b.value * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn custom_diffusion_checks_coercivity() {
        let ok = CustomDiffusion { value: |s| 1.0 + 0.0 * s, d1: |_| 0.0, d2: |_| 0.0 };
        assert!(DiffusionSpec::custom(2.0, ok, 0.0, 0.0, 1.0, 1.0).is_ok());
        assert!(DiffusionSpec::custom(2.0, ok, -1.5, 0.0, 1.0, 1.0).is_err());
        // claims i_alpha = 0.5 but the constant coefficient only has 0
        assert!(matches!(
            DiffusionSpec::custom(2.0, ok, 0.5, 0.5, 1.0, 1.0),
            Err(DiffusionError::CoercivityFails(_))
        ));
    }

    #[test]
    fn operator_examples() {
        let m: Mat3 = [[1.0, 2.0, 0.0], [2.0, -3.0, 0.5], [0.0, 0.5, 4.0]];
        let g = [0.3, -0.7, 1.1];
        let p2 = DiffusionSpec::power(2.0).unwrap();
        assert_eq!(operator_a(&m, &g, &p2, 0.1), trace(&m));
        let p4 = DiffusionSpec::power(4.0).unwrap();
        let id: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(operator_a(&id, &[1.0, 0.0, 0.0], &p4, 0.0), 3.0 + 2.0);
        let p15 = DiffusionSpec::power(1.5).unwrap();
        assert_eq!(operator_a(&m, &[0.0; 3], &p15, 0.2), trace(&m));
    }

    #[test]
    fn operator_is_linear_in_matrix() {
        let spec = DiffusionSpec::power(3.3).unwrap();
        let g = [0.4, 0.9, -0.2];
        let m1: Mat3 = [[1.0, 0.2, 0.3], [0.2, -1.0, 0.0], [0.3, 0.0, 2.0]];
        let m2: Mat3 = [[-0.5, 1.0, 0.0], [1.0, 0.7, 0.1], [0.0, 0.1, 0.0]];
        let mut comb = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                comb[i][j] = 2.0 * m1[i][j] - 3.0 * m2[i][j];
            }
        }
        let lhs = operator_a(&comb, &g, &spec, 0.1);
        let rhs = 2.0 * operator_a(&m1, &g, &spec, 0.1) - 3.0 * operator_a(&m2, &g, &spec, 0.1);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(hamiltonian_eval(&[0.3, 0.4, 0.0], 2.5, 0.0, 0.0), 3.5);
        assert_eq!(hamiltonian_eval(&[3.0, 4.0, 0.0], 2.0, 1.0, 0.0), 7.0);
        assert!((hamiltonian_eval(&[0.0; 3], 0.0, 2.0, 0.04) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_affine_and_constant() {
        let grid = unit_grid(2, 9);
        let u = ScalarField::from_fn(grid, |x| 2.0 * x[0] - 0.5 * x[1] + 1.0);
        let g = gradient(&u);
        for k in 0..grid.len() {
            let idx = grid.multi_index(k);
            let v = g.values()[k];
            if !grid.is_boundary(idx) {
                assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] + 0.5).abs() < 1e-12);
            }
        }
        let c = gradient(&ScalarField::constant(grid, 3.0));
        assert!(c.values().iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn gradient_normal_trace_vanishes() {
        let grid = unit_grid(2, 11);
        let u = ScalarField::from_fn(grid, |x| x[0] * x[0] * x[1] + sin(x[1]));
        let g = gradient(&u);
        for face in grid.faces() {
            for (k, _) in grid.face_nodes(face) {
                assert_eq!(g.values()[k][face.axis], 0.0);
            }
        }
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let err = |n: usize| {
            let grid = unit_grid(2, n);
            let u = ScalarField::from_fn(grid, |x| cos(PI * x[0]));
            let g = gradient(&u);
            (0..grid.len())
                .map(|k| (g.values()[k][0] + PI * sin(PI * grid.coord_flat(k)[0])).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(33) / err(65)).log2();
        assert!(order > 1.9, "order {order}");
        // leading error term is π³h²/6
        assert!(err(65) < 6.0 * (1.0 / 64.0_f64).powi(2));
    }

    #[test]
    fn hessian_of_quadratic_is_exact_in_the_interior() {
        let grid = unit_grid(3, 7);
        let m = [[2.0, 0.5, -1.0], [0.5, 1.0, 0.25], [-1.0, 0.25, -3.0]];
        let u = ScalarField::from_fn(grid, |x| 0.5 * quadratic_form(&m, x) + x[0] - 2.0);
        let h = hessian(&u);
        for k in 0..grid.len() {
            let idx = grid.multi_index(k);
            let hk = h.values()[k];
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(hk[i][j].to_bits(), hk[j][i].to_bits());
                    if !grid.is_boundary(idx) {
                        assert!((hk[i][j] - m[i][j]).abs() < 1e-9, "{i}{j}: {}", hk[i][j]);
                    }
                }
            }
        }
        let affine = hessian(&ScalarField::from_fn(grid, |x| x[0] - x[2]));
        for k in 0..grid.len() {
            if !grid.is_boundary(grid.multi_index(k)) {
                assert!(frobenius_sq(&affine.values()[k]) < 1e-20);
            }
        }
    }

    #[test]
    fn hessian_converges_at_second_order() {
        let err = |n: usize| {
            let grid = unit_grid(2, n);
            let u = ScalarField::from_fn(grid, |x| cos(PI * x[0]) * cos(PI * x[1]));
            let h = hessian(&u);
            (0..grid.len())
                .map(|k| {
                    let x = grid.coord_flat(k);
                    let exact: [[f64; 2]; 2] = [
                        [-PI * PI * cos(PI * x[0]) * cos(PI * x[1]), PI * PI * sin(PI * x[0]) * sin(PI * x[1])],
                        [PI * PI * sin(PI * x[0]) * sin(PI * x[1]), -PI * PI * cos(PI * x[0]) * cos(PI * x[1])],
                    ];
                    let hk = h.values()[k];
                    let mut e: f64 = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            e = e.max((hk[i][j] - exact[i][j]).abs());
                        }
                    }
                    e
                })
                .fold(0.0, f64::max)
        };
        let order = (err(17) / err(33)).log2();
        assert!(order > 1.9, "order {order}");
    }
}
