//! Named closed-form data: forcing and initial profiles, and manufactured
//! solutions with hand-coded derivatives up to third order in space.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::calculus::{
    dot, DiffusionSpec, InitialDatum, Mat3, ProblemSpec, SharedFn, SpaceTimeFn,
};
use crate::math::{cos, exp, pow, sin, PI};
use crate::mesh::{BoxDomain, SpaceTimeField};
use crate::Point;

pub type Tensor3 = [[[f64; 3]; 3]; 3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown registry entry `{0}`")]
    UnknownName(alloc::string::String),
    #[error("entry supplies derivatives up to order {available}, {needed} are required")]
    MissingDerivatives { available: usize, needed: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
}

/// Names accepted by [`Profile::from_name`].
pub const PROFILE_NAMES: &[&str] = &["zero", "constant", "cosine", "gaussian-bump", "singular-power"];

/// Closed-form forcing or initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `A t^q Π cos(k_i π (x_i − a_i)/L_i)`; `q = 0` means time-independent.
    Cosine { amplitude: f64, k: [u32; 3], time_power: f64 },
    /// `A exp(−|x − c|²/(2w²))`.
    GaussianBump { amplitude: f64, center: Point, width: f64 },
    /// `A (|x − c|² + ε_f)^{−σ/2}`, the ε_f shift being the mollification.
    SingularPower { amplitude: f64, center: Point, sigma: f64, eps_f: f64 },
}

impl Profile {
    /// Default parameters for a registry name.
    pub fn from_name(name: &str) -> Result<Self, RegistryError> {
        Ok(match name {
            "zero" => Profile::Zero,
            "constant" => Profile::Constant { value: 1.0 },
            "cosine" => Profile::Cosine { amplitude: 1.0, k: [1, 0, 0], time_power: 0.0 },
            "gaussian-bump" => Profile::GaussianBump { amplitude: 1.0, center: [0.5; 3], width: 0.15 },
            "singular-power" => {
                Profile::SingularPower { amplitude: 1.0, center: [0.0; 3], sigma: 0.5, eps_f: 1e-4 }
            }
            other => return Err(RegistryError::UnknownName(other.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Zero => "zero",
            Profile::Constant { .. } => "constant",
            Profile::Cosine { .. } => "cosine",
            Profile::GaussianBump { .. } => "gaussian-bump",
            Profile::SingularPower { .. } => "singular-power",
        }
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |name, reason| Err(RegistryError::InvalidParameter { name, reason });
        match *self {
            Profile::Cosine { time_power, .. } if !(time_power >= 0.0) => bad("time_power", "must be non-negative"),
            Profile::GaussianBump { width, .. } if !(width > 0.0) => bad("width", "must be positive"),
            Profile::SingularPower { sigma, .. } if !(sigma >= 0.0) => bad("sigma", "must be non-negative"),
            Profile::SingularPower { eps_f, .. } if !(eps_f > 0.0) => bad("eps_f", "must be positive"),
            _ => Ok(()),
        }
    }

    /// `true` when the profile has zero normal derivative on every face of
    /// `domain`, which initial data need for a clean Neumann start.
    pub fn is_neumann_compatible(&self) -> bool {
        matches!(self, Profile::Zero | Profile::Constant { .. } | Profile::Cosine { .. })
    }

    pub fn build(&self, domain: &BoxDomain) -> SharedFn {
        match *self {
            Profile::Zero => Arc::new(ConstantFn(0.0)),
            Profile::Constant { value } => Arc::new(ConstantFn(value)),
            Profile::Cosine { amplitude, k, time_power } => {
                Arc::new(CosineFn { amplitude, axes: CosineAxes::new(domain, k), time_power })
            }
            Profile::GaussianBump { amplitude, center, width } => Arc::new(GaussianFn { amplitude, center, width }),
            Profile::SingularPower { amplitude, center, sigma, eps_f } => {
                Arc::new(SingularFn { amplitude, center, sigma, eps_f })
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantFn(pub f64);

impl SpaceTimeFn for ConstantFn {
    fn value(&self, _x: &Point, _t: f64) -> f64 {
        self.0
    }

    fn gradient(&self, _x: &Point, _t: f64) -> Option<Point> {
        Some([0.0; 3])
    }
}

/// Wavenumbers `κ_i = k_i π / L_i` and offsets `a_i` for a cosine product
/// on a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineAxes {
    kappa: [f64; 3],
    origin: [f64; 3],
}

impl CosineAxes {
    pub fn new(domain: &BoxDomain, k: [u32; 3]) -> Self {
        let mut kappa = [0.0; 3];
        let mut origin = [0.0; 3];
        for a in 0..domain.dim() {
            let len = domain.upper()[a] - domain.lower()[a];
            kappa[a] = f64::from(k[a]) * PI / len;
            origin[a] = domain.lower()[a];
        }
        Self { kappa, origin }
    }

    /// `d[a][j]` is the `j`-th derivative of `cos(κ_a(x_a − a_a))`.
    fn table(&self, x: &Point) -> [[f64; 4]; 3] {
        let mut d = [[0.0; 4]; 3];
        for a in 0..3 {
            let k = self.kappa[a];
            let (s, c) = if k == 0.0 { (0.0, 1.0) } else { (sin(k * (x[a] - self.origin[a])), cos(k * (x[a] - self.origin[a]))) };
            d[a] = [c, -k * s, -k * k * c, k * k * k * s];
        }
        d
    }

    /// Value and all partial derivatives of the product up to third order.
    pub fn jet(&self, x: &Point) -> SpatialJet {
        let d = self.table(x);
        let part = |counts: [usize; 3]| d[0][counts[0]] * d[1][counts[1]] * d[2][counts[2]];
        let mut out = SpatialJet { value: part([0, 0, 0]), ..SpatialJet::default() };
        for i in 0..3 {
            let mut ci = [0usize; 3];
            ci[i] += 1;
            out.d1[i] = part(ci);
            for j in 0..3 {
                let mut cj = ci;
                cj[j] += 1;
                out.d2[i][j] = part(cj);
                for k in 0..3 {
                    let mut ck = cj;
                    ck[k] += 1;
                    out.d3[i][j][k] = part(ck);
                }
            }
        }
        out
    }
}

/// A function of space with derivatives up to third order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpatialJet {
    pub value: f64,
    pub d1: Point,
    pub d2: Mat3,
    pub d3: Tensor3,
}

impl SpatialJet {
    fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        out.value *= s;
        for i in 0..3 {
            out.d1[i] *= s;
            for j in 0..3 {
                out.d2[i][j] *= s;
                for k in 0..3 {
                    out.d3[i][j][k] *= s;
                }
            }
        }
        out
    }

    fn add(&mut self, other: &Self) {
        self.value += other.value;
        for i in 0..3 {
            self.d1[i] += other.d1[i];
            for j in 0..3 {
                self.d2[i][j] += other.d2[i][j];
                for k in 0..3 {
                    self.d3[i][j][k] += other.d3[i][j][k];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct CosineFn {
    amplitude: f64,
    axes: CosineAxes,
    time_power: f64,
}

impl CosineFn {
    fn time_factor(&self, t: f64) -> f64 {
        if self.time_power == 0.0 {
            1.0
        } else {
            pow(t, self.time_power)
        }
    }
}

impl SpaceTimeFn for CosineFn {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let d = self.axes.table(x);
        self.amplitude * self.time_factor(t) * d[0][0] * d[1][0] * d[2][0]
    }

    fn gradient(&self, x: &Point, t: f64) -> Option<Point> {
        let d = self.axes.table(x);
        let s = self.amplitude * self.time_factor(t);
        Some([s * d[0][1] * d[1][0] * d[2][0], s * d[0][0] * d[1][1] * d[2][0], s * d[0][0] * d[1][0] * d[2][1]])
    }
}

#[derive(Debug, Clone, Copy)]
struct GaussianFn {
    amplitude: f64,
    center: Point,
    width: f64,
}

impl SpaceTimeFn for GaussianFn {
    fn value(&self, x: &Point, _t: f64) -> f64 {
        let r = sub(x, &self.center);
        self.amplitude * exp(-dot(&r, &r) / (2.0 * self.width * self.width))
    }

    fn gradient(&self, x: &Point, t: f64) -> Option<Point> {
        let v = self.value(x, t);
        let r = sub(x, &self.center);
        let s = -v / (self.width * self.width);
        Some([s * r[0], s * r[1], s * r[2]])
    }
}

#[derive(Debug, Clone, Copy)]
struct SingularFn {
    amplitude: f64,
    center: Point,
    sigma: f64,
    eps_f: f64,
}

impl SpaceTimeFn for SingularFn {
    fn value(&self, x: &Point, _t: f64) -> f64 {
        let r = sub(x, &self.center);
        self.amplitude * pow(dot(&r, &r) + self.eps_f, -0.5 * self.sigma)
    }

    fn gradient(&self, x: &Point, _t: f64) -> Option<Point> {
        let r = sub(x, &self.center);
        let s = -self.amplitude * self.sigma * pow(dot(&r, &r) + self.eps_f, -0.5 * self.sigma - 1.0);
        Some([s * r[0], s * r[1], s * r[2]])
    }
}

/// `factor · inner`.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub inner: SharedFn,
    pub factor: f64,
}

impl SpaceTimeFn for Scaled {
    fn value(&self, x: &Point, t: f64) -> f64 {
        self.factor * self.inner.value(x, t)
    }

    fn gradient(&self, x: &Point, t: f64) -> Option<Point> {
        self.inner.gradient(x, t).map(|g| [self.factor * g[0], self.factor * g[1], self.factor * g[2]])
    }
}

pub fn scaled(inner: SharedFn, factor: f64) -> SharedFn {
    Arc::new(Scaled { inner, factor })
}

/// Sum of two functions.
#[derive(Debug, Clone)]
pub struct Sum(pub SharedFn, pub SharedFn);

impl SpaceTimeFn for Sum {
    fn value(&self, x: &Point, t: f64) -> f64 {
        self.0.value(x, t) + self.1.value(x, t)
    }

    fn gradient(&self, x: &Point, t: f64) -> Option<Point> {
        let a = self.0.gradient(x, t)?;
        let b = self.1.gradient(x, t)?;
        Some([a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    }
}

/// A sampled forcing: multilinear in space, linear in time, clamped to the
/// stored time range.
#[derive(Debug, Clone)]
pub struct SampledFn {
    field: SpaceTimeField,
}

impl SampledFn {
    pub fn new(field: SpaceTimeField) -> Self {
        Self { field }
    }

    fn spatial(&self, snapshot: usize, x: &Point) -> f64 {
        let grid = self.field.grid();
        let values = self.field.snapshots()[snapshot].values();
        let dim = grid.dim();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..dim {
            let n = grid.nodes_per_axis()[a];
            let s = ((x[a] - grid.domain().lower()[a]) / grid.h(a)).clamp(0.0, (n - 1) as f64);
            let i = (s as usize).min(n - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << dim) {
            let mut idx = base;
            let mut weight = 1.0;
            for a in 0..dim {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    weight *= frac[a];
                } else {
                    weight *= 1.0 - frac[a];
                }
            }
            if weight != 0.0 {
                total += weight * values[grid.index(idx)];
            }
        }
        total
    }
}

impl SpaceTimeFn for SampledFn {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let times = self.field.times();
        let k = times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.spatial(0, x);
        }
        if k == times.len() {
            return self.spatial(times.len() - 1, x);
        }
        let theta = (t - times[k - 1]) / (times[k] - times[k - 1]);
        (1.0 - theta) * self.spatial(k - 1, x) + theta * self.spatial(k, x)
    }
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Value, time derivative and spatial derivatives of a solution at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub u: f64,
    pub u_t: f64,
    pub du: Point,
    pub du_t: Point,
    pub d2u: Mat3,
    pub d3u: Tensor3,
}

impl Jet {
    /// `w = |Du|²`.
    pub fn w(&self) -> f64 {
        dot(&self.du, &self.du)
    }

    /// `Dw = 2 D²u Du`.
    pub fn dw(&self) -> Point {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * (0..3).map(|i| self.du[i] * self.d2u[i][k]).sum::<f64>();
        }
        out
    }

    /// `D²w = 2(D²u D²u + Σ_i u_i D²u_i)`.
    pub fn d2w(&self) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    s += self.d2u[i][k] * self.d2u[i][l] + self.du[i] * self.d3u[i][k][l];
                }
                out[k][l] = 2.0 * s;
            }
        }
        out
    }

    /// `∂t w = 2 Du·∂tDu`.
    pub fn w_t(&self) -> f64 {
        2.0 * dot(&self.du, &self.du_t)
    }
}

/// A closed-form solution with the derivatives the identities consume.
pub trait Manufactured: Send + Sync + core::fmt::Debug {
    fn jet(&self, x: &Point, t: f64) -> Jet;

    /// Highest order of spatial derivatives the jet carries exactly.
    fn derivative_order(&self) -> usize {
        3
    }

    /// Whether `∂ν u = 0` holds on the box the solution was built for.
    fn is_neumann_compatible(&self) -> bool;
}

pub type SharedSolution = Arc<dyn Manufactured>;

/// One separable mode `a e^{−rt} Π cos(κ_i(x_i − a_i))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineMode {
    pub amplitude: f64,
    pub rate: f64,
    pub k: [u32; 3],
}

/// `c + Σ modes`; every mode is even about every face, so the sum satisfies
/// the Neumann condition.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineModes {
    pub constant: f64,
    modes: Vec<(CosineMode, CosineAxes)>,
}

impl CosineModes {
    pub fn new(domain: &BoxDomain, constant: f64, modes: &[CosineMode]) -> Self {
        let modes = modes.iter().map(|m| (*m, CosineAxes::new(domain, m.k))).collect();
        Self { constant, modes }
    }
}

impl Manufactured for CosineModes {
    fn jet(&self, x: &Point, t: f64) -> Jet {
        let mut space = SpatialJet::default();
        let mut rate_weighted = SpatialJet::default();
        for (mode, axes) in &self.modes {
            let j = axes.jet(x).scaled(mode.amplitude * exp(-mode.rate * t));
            rate_weighted.add(&j.scaled(-mode.rate));
            space.add(&j);
        }
        Jet {
            u: self.constant + space.value,
            u_t: rate_weighted.value,
            du: space.d1,
            du_t: rate_weighted.d1,
            d2u: space.d2,
            d3u: space.d3,
        }
    }

    fn is_neumann_compatible(&self) -> bool {
        true
    }
}

/// `c + a·x`, stationary. Not Neumann-compatible unless `a = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub slope: Point,
}

impl Manufactured for Affine {
    fn jet(&self, x: &Point, _t: f64) -> Jet {
        Jet { u: self.constant + dot(&self.slope, x), du: self.slope, ..Jet::default() }
    }

    fn is_neumann_compatible(&self) -> bool {
        self.slope == [0.0; 3]
    }
}

/// `½ (x − c)ᵀ M (x − c)`, stationary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub matrix: Mat3,
    pub center: Point,
}

impl Manufactured for Quadratic {
    fn jet(&self, x: &Point, _t: f64) -> Jet {
        let r = sub(x, &self.center);
        let mr = crate::calculus::mat_vec(&self.matrix, &r);
        Jet { u: 0.5 * dot(&mr, &r), du: mr, d2u: self.matrix, ..Jet::default() }
    }

    fn is_neumann_compatible(&self) -> bool {
        false
    }
}

/// The solution's value as a [`SpaceTimeFn`], e.g. for the initial datum.
#[derive(Debug, Clone)]
pub struct SolutionFn(pub SharedSolution);

impl SpaceTimeFn for SolutionFn {
    fn value(&self, x: &Point, t: f64) -> f64 {
        self.0.jet(x, t).u
    }

    fn gradient(&self, x: &Point, t: f64) -> Option<Point> {
        Some(self.0.jet(x, t).du)
    }
}

/// Closed forms of the diffusion term and its gradient at a jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionJet {
    /// `αε(w) A(D²u)`.
    pub value: f64,
    /// `D(αε(w) A(D²u))`.
    pub gradient: Point,
}

pub fn diffusion_jet(jet: &Jet, spec: &DiffusionSpec, epsilon: f64) -> DiffusionJet {
    let a = spec.eval_eps(jet.w(), epsilon);
    let du = &jet.du;
    let hess = &jet.d2u;
    let dw = jet.dw();
    let lap = hess[0][0] + hess[1][1] + hess[2][2];
    // Q = (D²u Du)·Du = ½ Dw·Du
    let q = 0.5 * dot(&dw, du);
    let value = a.value * lap + 2.0 * a.d1 * q;
    let mut gradient = [0.0; 3];
    for (k, g) in gradient.iter_mut().enumerate() {
        let dlap: f64 = (0..3).map(|i| jet.d3u[i][i][k]).sum();
        let mut dq = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                dq += jet.d3u[i][j][k] * du[i] * du[j] + 2.0 * hess[i][j] * hess[i][k] * du[j];
            }
        }
        *g = a.d1 * dw[k] * lap + a.value * dlap + 2.0 * a.d2 * dw[k] * q + 2.0 * a.d1 * dq;
    }
    DiffusionJet { value, gradient }
}

/// Forcing that makes a manufactured solution exact:
/// `f = ∂t u + λu − αε(w)A(D²u) − (w + ε)^{γ/2}`.
#[derive(Debug, Clone)]
pub struct ManufacturedForcing {
    pub solution: SharedSolution,
    pub diffusion: DiffusionSpec,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

impl ManufacturedForcing {
    fn growth(&self, w: f64) -> (f64, f64) {
        if self.gamma == 0.0 {
            (1.0, 0.0)
        } else {
            let g = 0.5 * self.gamma;
            let base = w + self.epsilon;
            (pow(base, g), g * pow(base, g - 1.0))
        }
    }
}

impl SpaceTimeFn for ManufacturedForcing {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let jet = self.solution.jet(x, t);
        let d = diffusion_jet(&jet, &self.diffusion, self.epsilon);
        jet.u_t + self.lambda * jet.u - d.value - self.growth(jet.w()).0
    }

    fn gradient(&self, x: &Point, t: f64) -> Option<Point> {
        let jet = self.solution.jet(x, t);
        let d = diffusion_jet(&jet, &self.diffusion, self.epsilon);
        let dg = self.growth(jet.w()).1;
        let dw = jet.dw();
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = jet.du_t[k] + self.lambda * jet.du[k] - d.gradient[k] - dg * dw[k];
        }
        Some(out)
    }
}

/// Replaces the skeleton's forcing and initial datum so that `solution`
/// solves the problem exactly.
pub fn manufacture(solution: SharedSolution, skeleton: &ProblemSpec) -> Result<ProblemSpec, RegistryError> {
    let available = solution.derivative_order();
    if available < 2 {
        return Err(RegistryError::MissingDerivatives { available, needed: 2 });
    }
    let forcing = ManufacturedForcing {
        solution: solution.clone(),
        diffusion: skeleton.diffusion,
        gamma: skeleton.hamiltonian.gamma,
        epsilon: skeleton.epsilon,
        lambda: skeleton.lambda,
    };
    let mut spec = skeleton.with_forcing(Arc::new(forcing));
    spec.initial = InitialDatum::Function(Arc::new(SolutionFn(solution)));
    Ok(spec)
}

/// The smooth manufactured corpus used by identity and convergence checks.
pub fn smooth_corpus(domain: &BoxDomain) -> Vec<(&'static str, SharedSolution)> {
    let dim = domain.dim();
    let k2 = if dim > 1 { [1, 1, 0] } else { [2, 0, 0] };
    alloc::vec![
        (
            "decaying-cosine",
            Arc::new(CosineModes::new(domain, 0.0, &[CosineMode { amplitude: 1.0, rate: 1.0, k: [1, 0, 0] }]))
                as SharedSolution,
        ),
        (
            "two-mode",
            Arc::new(CosineModes::new(
                domain,
                0.3,
                &[
                    CosineMode { amplitude: 0.6, rate: 0.5, k: [1, 0, 0] },
                    CosineMode { amplitude: 0.4, rate: 2.0, k: k2 },
                ],
            )),
        ),
        (
            "stationary-product",
            Arc::new(CosineModes::new(domain, 0.0, &[CosineMode { amplitude: 0.5, rate: 0.0, k: [1, 1, 1] }])),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{diffusion_term, HamiltonianSpec};
    use crate::mesh::Grid;

    fn skeleton(dim: usize, p: f64, gamma: f64, epsilon: f64, lambda: f64) -> ProblemSpec {
        ProblemSpec {
            diffusion: DiffusionSpec::power(p).unwrap(),
            hamiltonian: HamiltonianSpec::new(gamma, Arc::new(ConstantFn(0.0))),
            epsilon,
            domain: BoxDomain::unit(dim).unwrap(),
            horizon: 1.0,
            initial: InitialDatum::Function(Arc::new(ConstantFn(0.0))),
            lambda,
        }
    }

    fn fd_check(f: &dyn SpaceTimeFn, x: Point, t: f64) {
        let g = f.gradient(&x, t).unwrap();
        let h = 1e-6;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (f.value(&xp, t) - f.value(&xm, t)) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-6 * (1.0 + g[a].abs()), "axis {a}: {fd} vs {}", g[a]);
        }
    }

    #[test]
    fn profile_gradients_match_finite_differences() {
        let domain = BoxDomain::unit(3).unwrap();
        let x = [0.31, 0.62, 0.17];
        for name in PROFILE_NAMES {
            let mut p = Profile::from_name(name).unwrap();
            if let Profile::Cosine { k, .. } = &mut p {
                *k = [1, 2, 1];
            }
            assert_eq!(p.name(), *name);
            p.validate().unwrap();
            fd_check(p.build(&domain).as_ref(), x, 0.7);
        }
        assert!(Profile::from_name("nope").is_err());
    }

    #[test]
    fn cosine_time_power() {
        let domain = BoxDomain::unit(1).unwrap();
        let f = Profile::Cosine { amplitude: 2.0, k: [1, 0, 0], time_power: 1.0 }.build(&domain);
        assert!((f.value(&[0.0; 3], 0.5) - 1.0).abs() < 1e-15);
        assert_eq!(f.value(&[0.3, 0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn cosine_jet_matches_finite_differences() {
        let domain = BoxDomain::new(&[0.0, -1.0, 0.5], &[1.0, 1.0, 2.0]).unwrap();
        let sol = CosineModes::new(
            &domain,
            0.2,
            &[CosineMode { amplitude: 0.7, rate: 1.5, k: [1, 2, 1] }, CosineMode { amplitude: -0.3, rate: 0.0, k: [2, 0, 1] }],
        );
        let x = [0.23, 0.41, 1.1];
        let t = 0.3;
        let j = sol.jet(&x, t);
        let h = 1e-5;
        let jt = (sol.jet(&x, t + h).u - sol.jet(&x, t - h).u) / (2.0 * h);
        assert!((jt - j.u_t).abs() < 1e-8);
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let (p, m) = (sol.jet(&xp, t), sol.jet(&xm, t));
            assert!(((p.u - m.u) / (2.0 * h) - j.du[a]).abs() < 1e-8);
            for i in 0..3 {
                assert!(((p.du[i] - m.du[i]) / (2.0 * h) - j.d2u[i][a]).abs() < 1e-7);
                for l in 0..3 {
                    assert!(((p.d2u[i][l] - m.d2u[i][l]) / (2.0 * h) - j.d3u[i][l][a]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn cosine_modes_are_even_at_faces() {
        let domain = BoxDomain::unit(2).unwrap();
        let sol = CosineModes::new(&domain, 0.0, &[CosineMode { amplitude: 1.0, rate: 1.0, k: [1, 2, 0] }]);
        for x in [[0.0, 0.3, 0.0], [1.0, 0.7, 0.0]] {
            assert!(sol.jet(&x, 0.2).du[0].abs() < 1e-14);
        }
        for x in [[0.4, 0.0, 0.0], [0.6, 1.0, 0.0]] {
            assert!(sol.jet(&x, 0.2).du[1].abs() < 1e-14);
        }
    }

    #[test]
    fn manufactured_constant_forcing() {
        let sk = skeleton(2, 3.0, 1.5, 0.04, 2.0);
        let sol: SharedSolution = Arc::new(CosineModes::new(&sk.domain, 0.7, &[]));
        let spec = manufacture(sol, &sk).unwrap();
        let f = spec.hamiltonian.forcing.value(&[0.3, 0.2, 0.0], 0.1);
        assert!((f - (2.0 * 0.7 - pow(0.04, 0.75))).abs() < 1e-14);
    }

    #[test]
    fn manufactured_heat_forcing() {
        let sk = skeleton(1, 2.0, 0.0, 0.1, 0.0);
        let sol: SharedSolution =
            Arc::new(CosineModes::new(&sk.domain, 0.0, &[CosineMode { amplitude: 1.0, rate: 1.0, k: [1, 0, 0] }]));
        let spec = manufacture(sol, &sk).unwrap();
        for (x, t) in [(0.1, 0.0), (0.45, 0.3), (0.9, 1.2)] {
            let f = spec.hamiltonian.forcing.value(&[x, 0.0, 0.0], t);
            let expected = exp(-t) * cos(PI * x) * (PI * PI - 1.0) - 1.0;
            assert!((f - expected).abs() < 1e-13, "{f} vs {expected}");
        }
    }

    #[test]
    fn manufactured_forcing_gradient_matches_finite_differences() {
        for (p, gamma) in [(4.0, 1.0), (1.5, 0.5), (2.0, 0.0), (3.0, 1.3)] {
            let sk = skeleton(3, p, gamma, 0.2, 0.5);
            let sol: SharedSolution = Arc::new(CosineModes::new(
                &sk.domain,
                0.0,
                &[CosineMode { amplitude: 0.8, rate: 0.5, k: [1, 1, 0] }, CosineMode { amplitude: 0.3, rate: 0.0, k: [0, 1, 2] }],
            ));
            let spec = manufacture(sol, &sk).unwrap();
            fd_check(spec.hamiltonian.forcing.as_ref(), [0.33, 0.21, 0.71], 0.4);
        }
    }

    #[test]
    fn diffusion_jet_agrees_with_operator() {
        let spec = DiffusionSpec::power(4.0).unwrap();
        let sol = Quadratic { matrix: [[1.0, 0.2, 0.0], [0.2, 2.0, 0.1], [0.0, 0.1, -1.0]], center: [0.1, 0.2, 0.3] };
        let j = sol.jet(&[0.5, 0.4, 0.9], 0.0);
        let d = diffusion_jet(&j, &spec, 1.0);
        assert!((d.value - diffusion_term(&j.d2u, &j.du, &spec, 1.0)).abs() < 1e-13);
    }

    #[test]
    fn quartic_stationary_residual_at_random_nodes() {
        use rand::{Rng, SeedableRng};
        let sk = skeleton(2, 4.0, 0.0, 1.0, 0.0);
        let sol: SharedSolution =
            Arc::new(CosineModes::new(&sk.domain, 0.0, &[CosineMode { amplitude: 1.0, rate: 0.0, k: [1, 1, 0] }]));
        let spec = manufacture(sol.clone(), &sk).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>(), 0.0];
            let j = sol.jet(&x, 0.0);
            let r = j.u_t
                - diffusion_term(&j.d2u, &j.du, &spec.diffusion, spec.epsilon)
                - spec.hamiltonian.eval(&x, 0.0, &j.du, spec.epsilon);
            assert!(r.abs() < 1e-10, "{r}");
        }
    }

    #[test]
    fn sampled_forcing_interpolates() {
        let grid = Grid::uniform(BoxDomain::unit(2).unwrap(), 5).unwrap();
        let field = SpaceTimeField::from_fn(grid, alloc::vec![0.0, 1.0], |x, t| x[0] + 2.0 * x[1] + t).unwrap();
        let f = SampledFn::new(field);
        assert!((f.value(&[0.3, 0.55, 0.0], 0.25) - (0.3 + 1.1 + 0.25)).abs() < 1e-14);
        assert!((f.value(&[1.0, 1.0, 0.0], 5.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn affine_manufacture_needs_no_neumann() {
        let a = Affine { constant: 1.0, slope: [0.5, -0.2, 0.0] };
        assert!(!a.is_neumann_compatible());
        assert!(Affine { constant: 1.0, slope: [0.0; 3] }.is_neumann_compatible());
        assert_eq!(a.jet(&[1.0, 1.0, 0.0], 3.0).d2w(), [[0.0; 3]; 3]);
    }
}
