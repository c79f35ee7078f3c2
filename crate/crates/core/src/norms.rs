//! Norm functionals over the space-time cylinder.
//!
//! Space integrals use the trapezoid rule and time integrals the left
//! rectangle rule on the stored times. All reductions go through
//! [`pairwise_sum`] so results do not depend on how work was split.

use alloc::vec::Vec;

use crate::calculus::{dot, gradient, NodeDerivatives, VectorField};
use crate::math::{pairwise_sum, pow, sqrt};
use crate::mesh::{integrate_with, left_rectangle_weights, Grid, ScalarField, SpaceTimeField};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum NormError {
    #[error("Lebesgue exponent must be at least 1 (got {0})")]
    ExponentBelowOne(f64),
    #[error("weight exponent must exceed -1 (got {0})")]
    OmegaNotAboveMinusOne(f64),
    #[error("level must be non-negative (got {0})")]
    NegativeLevel(f64),
    #[error("a field with no snapshots has no norm")]
    Empty,
}

fn check_exponent(m: f64) -> Result<(), NormError> {
    if m >= 1.0 {
        Ok(())
    } else {
        Err(NormError::ExponentBelowOne(m))
    }
}

/// `∫_Ω |v|^m`, or `max |v|` for `m = ∞`.
pub fn spatial_power_integral(grid: &Grid, values: &[f64], m: f64) -> f64 {
    if m.is_infinite() {
        return crate::math::max_abs(values);
    }
    integrate_with(grid, |k| pow(values[k].abs(), m))
}

/// `‖v‖_{L^m(Ω)}`.
pub fn spatial_lp(field: &ScalarField, m: f64) -> Result<f64, NormError> {
    check_exponent(m)?;
    Ok(lp_root(spatial_power_integral(field.grid(), field.values(), m), m))
}

fn lp_root(integral: f64, m: f64) -> f64 {
    if m.is_infinite() {
        integral
    } else {
        pow(integral, 1.0 / m)
    }
}

/// `(∫₀^T∫_Ω |v|^m)^{1/m}`; `m = ∞` gives the maximum over stored nodes.
pub fn lebesgue_qt(field: &SpaceTimeField, m: f64) -> Result<f64, NormError> {
    check_exponent(m)?;
    if m.is_infinite() {
        return Ok(field.snapshots().iter().map(|s| s.max_abs()).fold(0.0, f64::max));
    }
    let weights = field.time_weights();
    let terms: Vec<f64> = field
        .snapshots()
        .iter()
        .zip(&weights)
        .map(|(s, w)| w * spatial_power_integral(s.grid(), s.values(), m))
        .collect();
    Ok(pow(pairwise_sum(&terms), 1.0 / m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedNorm {
    pub value: f64,
    /// Time at which the maximum is attained.
    pub argmax_time: f64,
    /// Set when snapshots were thinned, so the maximum is over stored times
    /// only.
    pub subsampled: bool,
}

/// `sup_t ‖v(t)‖_{L^ρ(Ω)}` over the stored times.
pub fn mixed_inf_rho(field: &SpaceTimeField, rho: f64) -> Result<MixedNorm, NormError> {
    check_exponent(rho)?;
    let mut best = MixedNorm { value: f64::NEG_INFINITY, argmax_time: 0.0, subsampled: field.stride() != 1 };
    for (s, &t) in field.snapshots().iter().zip(field.times()) {
        let v = lp_root(spatial_power_integral(s.grid(), s.values(), rho), rho);
        if v > best.value {
            best.value = v;
            best.argmax_time = t;
        }
    }
    Ok(best)
}

/// Vector samples at increasing times, typically `Du` of a computed
/// solution.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSeries {
    times: Vec<f64>,
    snapshots: Vec<VectorField>,
    stride: usize,
}

impl VectorSeries {
    pub fn new(times: Vec<f64>, snapshots: Vec<VectorField>) -> Result<Self, NormError> {
        if snapshots.is_empty() || times.len() != snapshots.len() {
            return Err(NormError::Empty);
        }
        Ok(Self { times, snapshots, stride: 1 })
    }

    /// Central-difference gradients of every snapshot.
    pub fn gradients(u: &SpaceTimeField) -> Self {
        Self { times: u.times().to_vec(), snapshots: u.snapshots().iter().map(gradient).collect(), stride: u.stride() }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[VectorField] {
        &self.snapshots
    }

    /// `|v|` as a scalar space-time field.
    pub fn magnitude(&self) -> SpaceTimeField {
        let snaps = self.snapshots.iter().map(|v| v.magnitude()).collect();
        SpaceTimeField::new(self.times.clone(), snaps).expect("validated times").with_stride(self.stride)
    }
}

/// `|g|^ω g`, with the value at `g = 0` taken as zero.
pub fn weighted(g: &Point, omega: f64) -> Point {
    let n2 = dot(g, g);
    if n2 == 0.0 {
        return [0.0; 3];
    }
    let s = if omega == 0.0 { 1.0 } else { pow(n2, 0.5 * omega) };
    [s * g[0], s * g[1], s * g[2]]
}

/// Per-node `|v|²` and `|Dv|²` for `v = |g|^ω g`. The Jacobian uses central
/// differences inside and second-order one-sided differences on boundary
/// nodes, since `v` is not even about the faces.
pub fn weighted_jacobian_sq(grid: &Grid, grads: &[Point], omega: f64) -> (Vec<f64>, Vec<f64>) {
    let v: Vec<Point> = grads.iter().map(|g| weighted(g, omega)).collect();
    let dim = grid.dim();
    let strides = grid.strides();
    let mut value_sq = Vec::with_capacity(v.len());
    let mut jac_sq = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        value_sq.push(dot(&v[k], &v[k]));
        let idx = grid.multi_index(k);
        let mut total = 0.0;
        for a in 0..dim {
            let n = grid.nodes_per_axis()[a];
            let h = grid.h(a);
            let s = strides[a];
            let i = idx[a];
            for b in 0..dim {
                let d = if i == 0 {
                    (-3.0 * v[k][b] + 4.0 * v[k + s][b] - v[k + 2 * s][b]) / (2.0 * h)
                } else if i == n - 1 {
                    (3.0 * v[k][b] - 4.0 * v[k - s][b] + v[k - 2 * s][b]) / (2.0 * h)
                } else {
                    (v[k + s][b] - v[k - s][b]) / (2.0 * h)
                };
                total += d * d;
            }
        }
        jac_sq.push(total);
    }
    (value_sq, jac_sq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderNorm {
    /// `(‖v‖² + ‖Dv‖²)^{1/2}` in `L²(Q_T)`.
    pub full: f64,
    /// `‖Dv‖_{L²(Q_T)}`.
    pub seminorm: f64,
    /// `‖v‖_{L²(Q_T)}`.
    pub l2: f64,
}

impl SecondOrderNorm {
    fn from_integrals(value: f64, jac: f64) -> Self {
        Self { full: sqrt(value + jac), seminorm: sqrt(jac), l2: sqrt(value) }
    }
}

/// `‖|g|^ω g‖_{L²(0,T;H¹(Ω))}`, full norm and seminorm.
pub fn second_order_weighted(grad: &VectorSeries, omega: f64) -> Result<SecondOrderNorm, NormError> {
    if !(omega > -1.0) {
        return Err(NormError::OmegaNotAboveMinusOne(omega));
    }
    let weights = left_rectangle_weights(&grad.times);
    let mut value_terms = Vec::with_capacity(weights.len());
    let mut jac_terms = Vec::with_capacity(weights.len());
    for (field, w) in grad.snapshots.iter().zip(&weights) {
        let (vs, js) = weighted_jacobian_sq(field.grid(), field.values(), omega);
        value_terms.push(w * integrate_with(field.grid(), |k| vs[k]));
        jac_terms.push(w * integrate_with(field.grid(), |k| js[k]));
    }
    Ok(SecondOrderNorm::from_integrals(pairwise_sum(&value_terms), pairwise_sum(&jac_terms)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VabNorm {
    /// `‖v‖_{L^∞(0,T;L^a)}`.
    pub sup_part: f64,
    /// `‖v‖_{L^b(0,T;W^{1,b})}`.
    pub sobolev_part: f64,
    pub total: f64,
}

/// The norm of `L^∞(0,T;L^a(Ω)) ∩ L^b(0,T;W^{1,b}(Ω))`, taken as the sum of
/// the two parts.
pub fn v_ab(field: &SpaceTimeField, a: f64, b: f64) -> Result<VabNorm, NormError> {
    check_exponent(b)?;
    let sup_part = mixed_inf_rho(field, a)?.value;
    let weights = field.time_weights();
    let terms: Vec<f64> = field
        .snapshots()
        .iter()
        .zip(&weights)
        .map(|(s, w)| {
            let g = gradient(s);
            let grid = s.grid();
            let value = spatial_power_integral(grid, s.values(), b);
            let grad = integrate_with(grid, |k| pow(dot(&g.values()[k], &g.values()[k]), 0.5 * b));
            w * (value + grad)
        })
        .collect();
    let sobolev_part = pow(pairwise_sum(&terms), 1.0 / b);
    Ok(VabNorm { sup_part, sobolev_part, total: sup_part + sobolev_part })
}

/// Quadrature measure of `{(x, t) : ε + w ≥ k}`, counting node cells.
pub fn superlevel_measure(w: &SpaceTimeField, k: f64, epsilon: f64) -> Result<f64, NormError> {
    if !(k >= 0.0) {
        return Err(NormError::NegativeLevel(k));
    }
    let weights = w.time_weights();
    let terms: Vec<f64> = w
        .snapshots()
        .iter()
        .zip(&weights)
        .map(|(s, tw)| tw * integrate_with(s.grid(), |n| if epsilon + s.values()[n] >= k { 1.0 } else { 0.0 }))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// What a [`StreamingNorms`] accumulates from solver states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormPlan {
    /// Exponents `q` of `‖Du‖_{L^q(Q_T)}`.
    pub lebesgue: Vec<f64>,
    /// Exponents `ρ` of `sup_t ‖Du(t)‖_{L^ρ}`.
    pub mixed: Vec<f64>,
    /// Weights `ω` of the second-order norm.
    pub second_order: Vec<f64>,
    /// Levels `k` of `|{ε + |Du|² ≥ k}|`.
    pub levels: Vec<f64>,
    pub epsilon: f64,
}

/// Final values of a [`StreamingNorms`] run, in the order of the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSummary {
    pub lebesgue: Vec<f64>,
    pub mixed: Vec<MixedNorm>,
    pub second_order: Vec<SecondOrderNorm>,
    pub level_measures: Vec<f64>,
    /// `max |Du|²` over all observed states.
    pub max_w: f64,
}

/// Accumulates gradient norms from a stream of states with left-rectangle
/// time weights, so long solves need not keep their snapshots.
#[derive(Debug, Clone)]
pub struct StreamingNorms {
    plan: NormPlan,
    lebesgue: Vec<Vec<f64>>,
    mixed: Vec<MixedNorm>,
    so_value: Vec<Vec<f64>>,
    so_jac: Vec<Vec<f64>>,
    levels: Vec<Vec<f64>>,
    max_w: f64,
}

impl StreamingNorms {
    pub fn new(plan: NormPlan) -> Result<Self, NormError> {
        for &m in plan.lebesgue.iter().chain(&plan.mixed) {
            check_exponent(m)?;
        }
        for &w in &plan.second_order {
            if !(w > -1.0) {
                return Err(NormError::OmegaNotAboveMinusOne(w));
            }
        }
        for &k in &plan.levels {
            if !(k >= 0.0) {
                return Err(NormError::NegativeLevel(k));
            }
        }
        let blank = MixedNorm { value: f64::NEG_INFINITY, argmax_time: 0.0, subsampled: false };
        Ok(Self {
            lebesgue: alloc::vec![Vec::new(); plan.lebesgue.len()],
            mixed: alloc::vec![blank; plan.mixed.len()],
            so_value: alloc::vec![Vec::new(); plan.second_order.len()],
            so_jac: alloc::vec![Vec::new(); plan.second_order.len()],
            levels: alloc::vec![Vec::new(); plan.levels.len()],
            max_w: 0.0,
            plan,
        })
    }

    /// Adds one state with time weight `weight`.
    pub fn observe(&mut self, grid: &Grid, time: f64, derivs: &[NodeDerivatives], weight: f64) {
        let grads: Vec<Point> = derivs.iter().map(|d| d.grad).collect();
        let mags: Vec<f64> = grads.iter().map(|g| sqrt(dot(g, g))).collect();
        for (m, acc) in self.plan.lebesgue.iter().zip(&mut self.lebesgue) {
            let integral = spatial_power_integral(grid, &mags, *m);
            acc.push(if m.is_infinite() { integral } else { weight * integral });
        }
        for (rho, best) in self.plan.mixed.iter().zip(&mut self.mixed) {
            let v = lp_root(spatial_power_integral(grid, &mags, *rho), *rho);
            if v > best.value {
                best.value = v;
                best.argmax_time = time;
            }
        }
        if weight > 0.0 {
            for (i, &omega) in self.plan.second_order.iter().enumerate() {
                let (vs, js) = weighted_jacobian_sq(grid, &grads, omega);
                self.so_value[i].push(weight * integrate_with(grid, |k| vs[k]));
                self.so_jac[i].push(weight * integrate_with(grid, |k| js[k]));
            }
            let eps = self.plan.epsilon;
            for (k, acc) in self.plan.levels.iter().zip(&mut self.levels) {
                acc.push(weight * integrate_with(grid, |n| if eps + mags[n] * mags[n] >= *k { 1.0 } else { 0.0 }));
            }
        }
        self.max_w = mags.iter().fold(self.max_w, |a, m| f64::max(a, m * m));
    }

    pub fn finish(&self) -> NormSummary {
        NormSummary {
            lebesgue: self
                .plan
                .lebesgue
                .iter()
                .zip(&self.lebesgue)
                .map(|(m, acc)| lp_root(if m.is_infinite() { acc_max(acc) } else { pairwise_sum(acc) }, *m))
                .collect(),
            mixed: self.mixed.clone(),
            second_order: self
                .so_value
                .iter()
                .zip(&self.so_jac)
                .map(|(v, j)| SecondOrderNorm::from_integrals(pairwise_sum(v), pairwise_sum(j)))
                .collect(),
            level_measures: self.levels.iter().map(|acc| pairwise_sum(acc)).collect(),
            max_w: self.max_w,
        }
    }
}

fn acc_max(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}
