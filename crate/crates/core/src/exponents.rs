//! Closed-form exponents, admissibility thresholds and structural constants
//! of the gradient estimates.
//!
//! Every formula is generic over [`Scalar`], implemented for `f64` and for
//! [`BigRational`]. With rational inputs the algebraic relations between the
//! exponents (for instance `q = 2μs`) hold exactly, which is what the tests
//! check.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
pub use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::calculus::DiffusionSpec;

/// Arithmetic needed by the exponent formulas.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_int(n: i64) -> Self;
    fn to_f64(&self) -> f64;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Parses `"1.5"`, `"-2"`, `"3/7"`, `"2.5e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_rational(num)?;
        let den = parse_rational(den)?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut all = String::from(int_part);
    all.push_str(frac_part);
    let numer: BigInt = all.parse().ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(numer);
    let factor = BigRational::from_integer(num_traits::pow(ten, scale.unsigned_abs() as usize));
    if scale >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    Some(if negative { -value } else { value })
}

/// Parameters of an estimate: diffusion exponent, dimension, forcing
/// integrability and Hamiltonian growth.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint<T> {
    pub p: T,
    pub dim: u32,
    pub m: T,
    pub gamma: T,
}

impl<T: Scalar> ParamPoint<T> {
    pub fn new(p: T, dim: u32, m: T, gamma: T) -> Self {
        Self { p, dim, m, gamma }
    }

    fn check_basic(&self) -> Result<(), AdmissibilityError> {
        if self.p <= T::from_int(1) {
            return Err(AdmissibilityError::PNotAboveOne(self.p.to_f64()));
        }
        if self.dim == 0 {
            return Err(AdmissibilityError::ZeroDimension);
        }
        if self.gamma < T::from_int(0) {
            return Err(AdmissibilityError::NegativeGamma(self.gamma.to_f64()));
        }
        Ok(())
    }

    fn n(&self) -> T {
        T::from_int(i64::from(self.dim))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdmissibilityError {
    #[error("p must exceed 1 (got {0})")]
    PNotAboveOne(f64),
    #[error("the dimension N must be at least 1")]
    ZeroDimension,
    #[error("gamma must be non-negative (got {0})")]
    NegativeGamma(f64),
    #[error("m = {m} must exceed the admissibility threshold {threshold}")]
    MNotAboveThreshold { m: f64, threshold: f64 },
    #[error("m = {m} must be strictly below N+2 = {critical}")]
    MNotBelowCritical { m: f64, critical: f64 },
    #[error("m = {m} must equal N+2 = {critical} for the borderline estimate")]
    NotBorderline { m: f64, critical: f64 },
    #[error("gamma = {gamma} must be strictly below the growth threshold {threshold}")]
    GammaNotBelowThreshold { gamma: f64, threshold: f64 },
    #[error("omega = {omega} must exceed omega0 = {omega0}")]
    OmegaNotAboveFloor { omega: f64, omega0: f64 },
    #[error("r must exceed 1 (got {0})")]
    RNotAboveOne(f64),
    #[error("beta must be positive (got {0})")]
    BetaNotPositive(f64),
}

/// `ℓ = max{p/2, p − 1 − (p−2)/(N+2)}`: the largest admissible growth of the
/// gradient term in the parabolic problem.
pub fn growth_threshold<T: Scalar>(p: &T, dim: u32) -> Result<T, AdmissibilityError> {
    if *p <= T::from_int(1) {
        return Err(AdmissibilityError::PNotAboveOne(p.to_f64()));
    }
    if dim == 0 {
        return Err(AdmissibilityError::ZeroDimension);
    }
    let (half, shifted) = growth_branches(p, dim);
    Ok(T::max_of(half, shifted))
}

/// Both branches of [`growth_threshold`], `(p/2, p − 1 − (p−2)/(N+2))`.
pub fn growth_branches<T: Scalar>(p: &T, dim: u32) -> (T, T) {
    let n2 = T::from_int(i64::from(dim) + 2);
    let half = p.clone() / T::from_int(2);
    let shifted = p.clone() - T::from_int(1) - (p.clone() - T::from_int(2)) / n2;
    (half, shifted)
}

/// `m_p = max{2, (Np+4)/(N(p−1)+2)}`.
pub fn parabolic_threshold<T: Scalar>(p: &T, dim: u32) -> Result<T, AdmissibilityError> {
    if *p <= T::from_int(1) {
        return Err(AdmissibilityError::PNotAboveOne(p.to_f64()));
    }
    if dim == 0 {
        return Err(AdmissibilityError::ZeroDimension);
    }
    let n = T::from_int(i64::from(dim));
    let branch = (n.clone() * p.clone() + T::from_int(4))
        / (n * (p.clone() - T::from_int(1)) + T::from_int(2));
    Ok(T::max_of(T::from_int(2), branch))
}

/// `m_{p,ell} = max{2, Np/(N(p−1)−(p−2))}`.
pub fn elliptic_threshold<T: Scalar>(p: &T, dim: u32) -> Result<T, AdmissibilityError> {
    if *p <= T::from_int(1) {
        return Err(AdmissibilityError::PNotAboveOne(p.to_f64()));
    }
    if dim == 0 {
        return Err(AdmissibilityError::ZeroDimension);
    }
    let n = T::from_int(i64::from(dim));
    let branch = n.clone() * p.clone()
        / (n * (p.clone() - T::from_int(1)) - (p.clone() - T::from_int(2)));
    Ok(T::max_of(T::from_int(2), branch))
}

/// Power of `‖f‖_{L^m}` in the space-time gradient bound,
/// `1/(p − 1 − (p−2)/(N+2))`.
pub fn forcing_power<T: Scalar>(p: &T, dim: u32) -> T {
    let (_, shifted) = growth_branches(p, dim);
    T::from_int(1) / shifted
}

/// Which statement, if any, covers a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// `m_p < m < N+2`: space-time maximal regularity.
    MaximalRegularity,
    /// `m = N+2`: every finite `r`.
    Borderline,
    /// `m > N+2`: bounded gradient (stated for `p ≥ 2`).
    Bounded,
    /// `(N+2)p/((N+2)p−N) < m ≤ m_p` with `p > 2N/(N+2)`: no theorem covers it.
    Uncovered,
    /// Below the duality range; results there come from other methods.
    External,
}

impl Coverage {
    pub fn as_str(self) -> &'static str {
        match self {
            Coverage::MaximalRegularity => "maximal-regularity",
            Coverage::Borderline => "borderline",
            Coverage::Bounded => "bounded",
            Coverage::Uncovered => "uncovered",
            Coverage::External => "external",
        }
    }
}

pub fn coverage<T: Scalar>(pt: &ParamPoint<T>) -> Result<Coverage, AdmissibilityError> {
    pt.check_basic()?;
    let n = pt.n();
    let n2 = n.clone() + T::from_int(2);
    let p = pt.p.clone();
    let m = pt.m.clone();
    let m_p = parabolic_threshold(&p, pt.dim)?;
    Ok(match m.partial_cmp(&n2) {
        Some(Ordering::Greater) => Coverage::Bounded,
        Some(Ordering::Equal) => Coverage::Borderline,
        _ if m > m_p => Coverage::MaximalRegularity,
        _ => {
            let p_floor = T::from_int(2) * n.clone() / n2.clone();
            let lower = n2.clone() * p.clone() / (n2 * p.clone() - n);
            if p > p_floor && m > lower {
                Coverage::Uncovered
            } else {
                Coverage::External
            }
        }
    })
}

/// All exponents attached to a parameter point in the maximal-regularity
/// range.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTable<T> {
    pub ell: T,
    pub m_p: T,
    /// Space-time integrability of the gradient.
    pub q: T,
    /// Spatial integrability of the gradient, uniformly in time.
    pub rho: T,
    /// Weight of the second-order estimate.
    pub omega: T,
    /// Bernstein power: the test function is `(ε+w)^μ`.
    pub mu: T,
    /// Embedding exponent for `v = (ε+w)^μ`.
    pub s: T,
    /// Test power `β = 2μ − p/2`.
    pub beta: T,
    /// Power of the forcing norm in the space-time bound.
    pub theta: T,
    /// Power of the forcing norm in the `L^∞_t L^ρ_x` bound.
    pub theta_mixed: T,
    /// Power of the forcing norm in the second-order bound.
    pub theta_second_order: T,
    /// Young duality pair used to absorb the forcing term.
    pub nu: T,
    pub nu_prime: T,
}

pub fn parabolic_table<T: Scalar>(pt: &ParamPoint<T>) -> Result<ExponentTable<T>, AdmissibilityError> {
    pt.check_basic()?;
    let one = T::from_int(1);
    let two = T::from_int(2);
    let four = T::from_int(4);
    let n = pt.n();
    let n2 = n.clone() + two.clone();
    let p = pt.p.clone();
    let m = pt.m.clone();

    let ell = growth_threshold(&p, pt.dim)?;
    let m_p = parabolic_threshold(&p, pt.dim)?;
    if m <= m_p {
        return Err(AdmissibilityError::MNotAboveThreshold { m: m.to_f64(), threshold: m_p.to_f64() });
    }
    if m >= n2 {
        return Err(AdmissibilityError::MNotBelowCritical { m: m.to_f64(), critical: n2.to_f64() });
    }
    if pt.gamma >= ell {
        return Err(AdmissibilityError::GammaNotBelowThreshold {
            gamma: pt.gamma.to_f64(),
            threshold: ell.to_f64(),
        });
    }

    let pm1 = p.clone() - one.clone();
    let pm2 = p.clone() - two.clone();
    let gap = n2.clone() - m.clone();

    let q = (n2.clone() * pm1.clone() * m.clone() - pm2.clone() * m.clone()) / gap.clone();
    let rho = n.clone() * (pm1.clone() * m.clone() - pm2.clone()) / gap.clone();
    let second = n.clone() * m.clone() * pm1.clone() - pm2.clone() * (m.clone() - two.clone());
    let omega = second.clone() / (two.clone() * gap.clone()) - one.clone();
    let mu = second / (four * gap.clone());
    let beta = two.clone() * mu.clone() - p.clone() / two.clone();
    let s = two.clone() * n2.clone() / n.clone() - pm2.clone() / (mu.clone() * n.clone());
    let theta = forcing_power(&p, pt.dim);
    let theta_mixed = m.clone() / (m.clone() * pm1 - pm2);
    let theta_second_order = n.clone() * m.clone() / gap.clone();
    let nu = n.clone() * m.clone() / (n2 * (m.clone() - two.clone()));
    let nu_prime = n * m / (two * gap);

    Ok(ExponentTable {
        ell,
        m_p,
        q,
        rho,
        omega,
        mu,
        s,
        beta,
        theta,
        theta_mixed,
        theta_second_order,
        nu,
        nu_prime,
    })
}

/// Exponents of the limiting case `m = N+2`, where every `r < ∞` and every
/// `ω > ω₀` is admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderlineTable<T> {
    pub ell: T,
    pub r: T,
    pub omega: T,
    pub omega0: T,
    /// Power of `‖f‖_{L^{N+2}}` in the `L^r` and `L^∞_t L^r_x` bounds.
    pub theta: T,
    /// Power of `‖f‖_{L^{N+2}}` in the second-order bound,
    /// `2(ω+1)/(N(N(p−1)+p))`.
    pub theta_second_order: T,
}

pub fn omega_floor<T: Scalar>(p: &T) -> T {
    let pm2 = p.clone() - T::from_int(2);
    T::max_of(pm2.clone(), pm2 / T::from_int(2))
}

pub fn borderline_table<T: Scalar>(
    pt: &ParamPoint<T>,
    r: T,
    omega: T,
) -> Result<BorderlineTable<T>, AdmissibilityError> {
    pt.check_basic()?;
    let n = pt.n();
    let n2 = n.clone() + T::from_int(2);
    if pt.m != n2 {
        return Err(AdmissibilityError::NotBorderline { m: pt.m.to_f64(), critical: n2.to_f64() });
    }
    let ell = growth_threshold(&pt.p, pt.dim)?;
    if pt.gamma >= ell {
        return Err(AdmissibilityError::GammaNotBelowThreshold {
            gamma: pt.gamma.to_f64(),
            threshold: ell.to_f64(),
        });
    }
    if r <= T::from_int(1) {
        return Err(AdmissibilityError::RNotAboveOne(r.to_f64()));
    }
    let omega0 = omega_floor(&pt.p);
    if omega <= omega0 {
        return Err(AdmissibilityError::OmegaNotAboveFloor { omega: omega.to_f64(), omega0: omega0.to_f64() });
    }
    let p = pt.p.clone();
    let theta = forcing_power(&p, pt.dim);
    let theta_second_order = T::from_int(2) * (omega.clone() + T::from_int(1))
        / (n.clone() * (n * (p.clone() - T::from_int(1)) + p));
    Ok(BorderlineTable { ell, r, omega, omega0, theta, theta_second_order })
}

/// The three regimes of the stationary estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum EllipticRegime<T> {
    /// `m < N`: `‖Du‖_{L^q}` with the stated `q` and second-order weight.
    Subcritical { q: T, omega: T, theta_second_order: T },
    /// `m = N`: every finite `q` and every `ω > ω₀`.
    Critical { omega0: T },
    /// `m > N`: bounded gradient, stated for `p ≥ 2`.
    Supercritical { bounded: bool },
}

impl<T> EllipticRegime<T> {
    pub fn flag(&self) -> &'static str {
        match self {
            EllipticRegime::Subcritical { .. } => "m<N",
            EllipticRegime::Critical { .. } => "m=N",
            EllipticRegime::Supercritical { .. } => "m>N",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticTable<T> {
    pub m_p_ell: T,
    /// Power of `‖f‖_{L^m}` in the gradient bound, `1/(p−1)`.
    pub theta: T,
    pub regime: EllipticRegime<T>,
}

impl<T: Clone> EllipticTable<T> {
    pub fn q(&self) -> Option<T> {
        match &self.regime {
            EllipticRegime::Subcritical { q, .. } => Some(q.clone()),
            _ => None,
        }
    }
}

pub fn elliptic_table<T: Scalar>(pt: &ParamPoint<T>) -> Result<EllipticTable<T>, AdmissibilityError> {
    pt.check_basic()?;
    let one = T::from_int(1);
    let two = T::from_int(2);
    let n = pt.n();
    let p = pt.p.clone();
    let m = pt.m.clone();
    let pm1 = p.clone() - one.clone();
    if pt.gamma >= pm1 {
        return Err(AdmissibilityError::GammaNotBelowThreshold {
            gamma: pt.gamma.to_f64(),
            threshold: pm1.to_f64(),
        });
    }
    let m_p_ell = elliptic_threshold(&p, pt.dim)?;
    if m <= m_p_ell {
        return Err(AdmissibilityError::MNotAboveThreshold { m: m.to_f64(), threshold: m_p_ell.to_f64() });
    }
    let theta = one.clone() / pm1.clone();
    let regime = match m.partial_cmp(&n) {
        Some(Ordering::Less) => {
            let gap = n.clone() - m.clone();
            let q = n.clone() * pm1.clone() * m.clone() / gap.clone();
            let nm2 = n - two.clone();
            let omega = nm2.clone() * m.clone() * pm1 / (two.clone() * gap.clone()) - one;
            let theta_second_order = nm2 * m / (two * gap);
            EllipticRegime::Subcritical { q, omega, theta_second_order }
        }
        Some(Ordering::Equal) => EllipticRegime::Critical { omega0: omega_floor(&p) },
        _ => EllipticRegime::Supercritical { bounded: p >= two },
    };
    Ok(EllipticTable { m_p_ell, theta, regime })
}

/// Constants of the master inequality obtained by testing the equation for
/// `w` with `(ε+w)^β`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralConstants<T> {
    /// Coercivity `c₀ = min{1, 1+i_α}`.
    pub c0: T,
    pub c1_beta: T,
    pub c2_beta: T,
    /// `c_{1,β}` written in terms of `μ = (β + p/2)/2`.
    pub c1_mu_hat: T,
    pub c2_mu_hat: T,
    /// `1 + i_α`.
    pub c_tilde_alpha: T,
}

pub fn structural_constants<T: Scalar>(
    i_alpha: T,
    p: T,
    beta: T,
    gamma: T,
    dim: u32,
) -> Result<StructuralConstants<T>, AdmissibilityError> {
    let zero = T::from_int(0);
    let one = T::from_int(1);
    let two = T::from_int(2);
    if beta <= zero {
        return Err(AdmissibilityError::BetaNotPositive(beta.to_f64()));
    }
    let n = T::from_int(i64::from(dim));
    let c_tilde_alpha = one.clone() + i_alpha;
    let c0 = T::min_of(one.clone(), c_tilde_alpha.clone());
    let c1_beta = two.clone() * (beta.clone() + one.clone()) * (n.clone() + beta.clone()) / c0.clone();
    let g2 = gamma.clone() * gamma.clone();
    let denom = gamma.clone() + two.clone() * beta.clone();
    let c2_beta = if gamma == zero {
        zero.clone()
    } else {
        n.clone() / c0.clone() * g2.clone() * (beta.clone() + one.clone()) / (denom.clone() * denom)
    };

    let mu = (beta + p.clone() / two.clone()) / two.clone();
    let four = T::from_int(4);
    let c1_mu_hat = two.clone() / c0.clone()
        * (two.clone() * mu.clone() - (p.clone() - two.clone()) / two.clone())
        * (two.clone() * mu.clone() + (two.clone() * n.clone() - p.clone()) / two.clone());
    let c2_mu_hat = if gamma == zero {
        zero
    } else {
        // c_{2,β} at β = 2μ − p/2, so γ + 2β = γ + 4μ − p
        let d = gamma + four * mu.clone() - p.clone();
        n / c0.clone() * g2 * (two * mu - p / T::from_int(2) + one) / (d.clone() * d)
    };
    Ok(StructuralConstants { c0, c1_beta, c2_beta, c1_mu_hat, c2_mu_hat, c_tilde_alpha })
}

/// [`structural_constants`] for a concrete diffusion, in floating point.
pub fn structural_constants_for(
    spec: &DiffusionSpec,
    beta: f64,
    gamma: f64,
    dim: u32,
) -> Result<StructuralConstants<f64>, AdmissibilityError> {
    structural_constants(spec.i_alpha, spec.p, beta, gamma, dim)
}

/// Rational convenience constructor.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
