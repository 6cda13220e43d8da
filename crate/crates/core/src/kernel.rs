//! Model trilinear kernel on the circle and its one-variable reduction.
//!
//! With exponents `γ = (-1+λ)/2`, `a = (-1+2τ-λ)/2`, `b = (-1-2τ-λ)/2`,
//!
//! ```text
//! L(θ, θ', θ'') = |sin(θ-θ')|^γ |sin(θ-θ'')|^a |sin(θ'-θ'')|^b
//! K(θ, θ')      = L(θ, θ', 0)
//! k(c)          = κ |sin 2c|^γ ∫_0^π |sin(s+c)|^a |sin(s-c)|^b ds
//! ```
//!
//! where `c = (θ-θ')/2`, `s = (θ+θ')/2`. The constant `κ` absorbs the
//! Jacobian and the phase of the inner stationary-phase integral, so that for
//! large `t = |Im λ|`
//!
//! ```text
//! k(c) ≈ t^{-1/2} (m(c) + m(π/2 - c)),   m(c) = α |sin c|^{-1/2-λ/2} |cos c|^{-1/2+λ/2}.
//! ```
//!
//! The two terms come from the two stationary points `s = 0` and `s = π/2`
//! of the inner phase; they have equal size, so neither alone approximates
//! `k` (for `τ = 0`, `k(π/2 - c) = k(c)` exactly while `m` is not symmetric).
//!
//! Shifting `s` by `π/2` shows that `k` has period `π/2` for every `τ`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_periodic_local, Near, QuadSettings, QuadratureResult, SingularityHint};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spectral parameter `λ`; the Laplace eigenvalue is `μ = (1 - λ²)/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParameter {
    pub lambda: Complex64,
}

impl SpectralParameter {
    pub fn new(lambda: Complex64) -> Self {
        Self { lambda }
    }

    /// Principal series `λ = i·t`.
    pub fn principal(t: f64) -> Self {
        Self { lambda: Complex64::new(0.0, t) }
    }

    pub fn is_principal(&self) -> bool {
        self.lambda.re == 0.0
    }

    /// `t = |Im λ|`.
    pub fn t(&self) -> f64 {
        self.lambda.im.abs()
    }

    pub fn mu(&self) -> Complex64 {
        (1.0 - self.lambda * self.lambda) / 4.0
    }
}

/// The pair `(λ, τ)` fixing the kernel exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub lambda: SpectralParameter,
    pub tau: Complex64,
}

impl KernelParams {
    /// Rejects `τ` off the imaginary axis.
    pub fn new(lambda: SpectralParameter, tau: Complex64) -> Result<Self> {
        if tau.re != 0.0 || !tau.im.is_finite() {
            return Err(invalid(format!("tau must be purely imaginary, got {tau}")));
        }
        if !lambda.lambda.re.is_finite() || !lambda.lambda.im.is_finite() {
            return Err(invalid("lambda must be finite"));
        }
        Ok(Self { lambda, tau })
    }

    /// `λ = i·t`, `τ = i·tau_im`.
    pub fn principal(t: f64, tau_im: f64) -> Self {
        Self { lambda: SpectralParameter::principal(t), tau: Complex64::new(0.0, tau_im) }
    }

    pub fn t(&self) -> f64 {
        self.lambda.t()
    }

    /// `[γ, a, b]`: the exponents of `|sin(θ-θ')|`, `|sin(θ-θ'')|`, `|sin(θ'-θ'')|`.
    pub fn exponents(&self) -> [Complex64; 3] {
        let l = self.lambda.lambda;
        let tau = self.tau;
        [(l - 1.0) / 2.0, (-1.0 + 2.0 * tau - l) / 2.0, (-1.0 - 2.0 * tau - l) / 2.0]
    }

    fn swapped_tau(&self) -> Self {
        Self { lambda: self.lambda, tau: -self.tau }
    }
}

/// Tolerances for kernel evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSettings {
    pub quad: QuadSettings,
    /// `c` closer than this to `0`, `π/2` or `π` is rejected.
    pub exclusion_radius: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self { quad: QuadSettings::default(), exclusion_radius: 1e-4 }
    }
}

impl KernelSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { quad: QuadSettings::with_tol(tol), ..Self::default() }
    }
}

/// `|sin x|^e` for complex `e`, via the real logarithm of the base.
fn sin_power(x: f64, e: Complex64) -> Complex64 {
    (e * x.sin().abs().ln()).exp()
}

fn check_distinct(x: f64, what: &str) -> Result<()> {
    if x.sin().abs() < 1e-14 {
        return Err(invalid(format!("{what} coincide modulo π")));
    }
    Ok(())
}

pub fn kernel_l(theta: f64, theta1: f64, theta2: f64, p: &KernelParams) -> Result<Complex64> {
    check_distinct(theta - theta1, "θ and θ'")?;
    check_distinct(theta - theta2, "θ and θ''")?;
    check_distinct(theta1 - theta2, "θ' and θ''")?;
    let [g, a, b] = p.exponents();
    let log = g * (theta - theta1).sin().abs().ln()
        + a * (theta - theta2).sin().abs().ln()
        + b * (theta1 - theta2).sin().abs().ln();
    Ok(log.exp())
}

pub fn kernel_k(theta: f64, theta1: f64, p: &KernelParams) -> Result<Complex64> {
    kernel_l(theta, theta1, 0.0, p)
}

/// Distance from `c` to the nearest of `0, π/2, π` (mod π).
fn singular_distance(c: f64) -> f64 {
    let r = c.rem_euclid(FRAC_PI_2);
    r.min(FRAC_PI_2 - r)
}

/// `κ = e^{-i(π/4)(1 + sgn Im λ)} / (π √(2π))`.
pub fn normalization(p: &KernelParams) -> Complex64 {
    let sgn = if p.lambda.lambda.im > 0.0 {
        1.0
    } else if p.lambda.lambda.im < 0.0 {
        -1.0
    } else {
        0.0
    };
    (-I * (PI / 4.0) * (1.0 + sgn)).exp() / (PI * (2.0 * PI).sqrt())
}

/// Inner integral `∫_0^π |sin(s+c)|^a |sin(s-c)|^b ds`.
fn inner_integral(c: f64, p: &KernelParams, quad: &QuadSettings) -> Result<QuadratureResult> {
    let [_, a, b] = p.exponents();
    let hints = [SingularityHint::new(-c, a), SingularityHint::new(c, b)];
    let osc = p.t() / 2.0 + p.tau.im.abs();
    integrate_periodic_local(
        |s, near| {
            // (s + c, s - c), exact at whichever singular end is closer.
            let (plus, minus) = match near {
                Some(Near { hint: 0, offset }) => (offset, offset - 2.0 * c),
                Some(Near { offset, .. }) => (offset + 2.0 * c, offset),
                None => (s + c, s - c),
            };
            (a * plus.sin().abs().ln() + b * minus.sin().abs().ln()).exp()
        },
        &hints,
        osc,
        quad,
    )
}

/// Reduced kernel `k_λ(c)`; the result carries the inner quadrature's error
/// estimate (scaled) and convergence flag.
pub fn reduced_kernel_k(c: f64, p: &KernelParams, settings: &KernelSettings) -> Result<QuadratureResult> {
    if !c.is_finite() {
        return Err(invalid("c must be finite"));
    }
    let d = singular_distance(c);
    if d < settings.exclusion_radius {
        return Err(Error::OutOfRange { what: "distance of c from {0, π/2, π}", value: d });
    }
    // Shifting s by π/2 shows k(c + π/2) = k(c); work with |c| ≤ π/4 so the
    // singular factors near c = π/2 are formed without cancellation.
    let c = c - (c / FRAC_PI_2).round() * FRAC_PI_2;
    let [g, _, _] = p.exponents();
    let scale = normalization(p) * sin_power(2.0 * c, g);
    // Keep the inner tolerance relative to the size of the prefactor.
    let mut quad = settings.quad;
    quad.tol /= scale.norm().max(1e-300);
    let inner = inner_integral(c, p, &quad)?;
    Ok(QuadratureResult {
        value: scale * inner.value,
        error_estimate: scale.norm() * inner.error_estimate,
        evaluations: inner.evaluations,
        converged: inner.converged,
    })
}

/// `α(λ) = π^{-1} e^{-iπ/4} 2^{-1/2+λ/2}`.
pub fn alpha(lambda: &SpectralParameter) -> Complex64 {
    let two_pow = ((-0.5 + lambda.lambda / 2.0) * std::f64::consts::LN_2).exp();
    (-I * PI / 4.0).exp() * two_pow / PI
}

fn check_main_domain(c: f64) -> Result<()> {
    if !c.is_finite() || c.sin().abs() < 1e-300 || c.cos().abs() < 1e-15 {
        return Err(invalid(format!("main term is singular at c = {c}")));
    }
    Ok(())
}

/// `m_λ(c) = α(λ) |sin c|^{-1/2-λ/2} |cos c|^{-1/2+λ/2}`.
pub fn main_term_m(c: f64, p: &KernelParams) -> Result<Complex64> {
    check_main_domain(c)?;
    let l = p.lambda.lambda;
    let log = (-0.5 - l / 2.0) * c.sin().abs().ln() + (-0.5 + l / 2.0) * c.cos().abs().ln();
    Ok(alpha(&p.lambda) * log.exp())
}

/// Leading large-`t` term of `k`: `t^{-1/2} (m(c) + m(π/2 - c))`.
pub fn leading_term(c: f64, p: &KernelParams) -> Result<Complex64> {
    check_t(p)?;
    let m = main_term_m(c, p)? + main_term_m(FRAC_PI_2 - c, p)?;
    Ok(m / p.t().sqrt())
}

fn check_t(p: &KernelParams) -> Result<()> {
    if !(p.t() >= 1.0) {
        return Err(Error::OutOfRange { what: "t", value: p.t() });
    }
    Ok(())
}

/// `r_λ(c) = k_λ(c) - leading_term(c)`.
pub fn remainder_r(c: f64, p: &KernelParams, settings: &KernelSettings) -> Result<QuadratureResult> {
    check_t(p)?;
    let k = reduced_kernel_k(c, p, settings)?;
    Ok(QuadratureResult { value: k.value - leading_term(c, p)?, ..k })
}

/// Relative deviation of `k` from the single term `t^{-1/2} m(c)`.
pub fn single_term_deviation(c: f64, p: &KernelParams, settings: &KernelSettings) -> Result<f64> {
    check_t(p)?;
    let k = reduced_kernel_k(c, p, settings)?;
    let single = main_term_m(c, p)? / p.t().sqrt();
    Ok((k.value - single).norm() / single.norm())
}

/// Deviation of `k` from the leading term, relative to `|t^{-1/2} m(c)|`.
pub fn main_term_deviation(c: f64, p: &KernelParams, settings: &KernelSettings) -> Result<f64> {
    let r = remainder_r(c, p, settings)?;
    let single = main_term_m(c, p)? / p.t().sqrt();
    Ok(r.value.norm() / single.norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderL1 {
    /// Trapezoid integral of `|r|` over the sampled part of `[0, π)`.
    pub value: f64,
    /// Estimated `∫ |r|` over the excluded neighbourhoods, from the local
    /// `|c - c0|^{-1/2}` behaviour.
    pub excluded_mass: f64,
    pub samples: usize,
    pub converged: bool,
}

impl RemainderL1 {
    pub fn total(&self) -> f64 {
        self.value + self.excluded_mass
    }
}

/// Sample offsets `y ∈ [ε, π/4]` from a singular point: geometric with ratio
/// `1 + min(0.05, 0.8/t)`, which resolves the `t/y` local frequency of `|r|`.
pub fn remainder_grid(t: f64, exclusion: f64) -> Vec<f64> {
    let q = 1.0 + (0.8 / t.max(1.0)).min(0.05);
    let end = PI / 4.0;
    // Nudge inward so `π/2 ± y` stays outside the exclusion radius after rounding.
    let start = exclusion * (1.0 + 1e-9);
    let mut ys = vec![start];
    let mut y = start;
    while y * q < end {
        y *= q;
        ys.push(y);
    }
    if end - y > 1e-12 * end {
        ys.push(end);
    }
    ys
}

/// `∫_0^π |r_λ(c)| dc`.
pub fn remainder_l1(p: &KernelParams, settings: &KernelSettings) -> Result<RemainderL1> {
    check_t(p)?;
    let eps = settings.exclusion_radius;
    let ys = remainder_grid(p.t(), eps);
    let mut value = 0.0;
    let mut excluded = 0.0;
    let mut samples = 0;
    let mut converged = true;
    // Four quarter arcs, each sampled outward from its singular end.
    for (origin, dir) in [(0.0, 1.0), (FRAC_PI_2, -1.0), (FRAC_PI_2, 1.0), (PI, -1.0)] {
        let mut vals = Vec::with_capacity(ys.len());
        for &y in &ys {
            let r = remainder_r(origin + dir * y, p, settings)?;
            converged &= r.converged;
            vals.push(r.value.norm());
        }
        samples += vals.len();
        for i in 1..ys.len() {
            value += 0.5 * (vals[i] + vals[i - 1]) * (ys[i] - ys[i - 1]);
        }
        excluded += 2.0 * eps * vals[0];
    }
    Ok(RemainderL1 { value, excluded_mass: excluded, samples, converged })
}

/// `k_λ(-c)` with `τ → -τ`; equal to `k_λ(c)` by `s → -s`.
pub fn reflected_kernel_k(c: f64, p: &KernelParams, settings: &KernelSettings) -> Result<QuadratureResult> {
    reduced_kernel_k(-c, &p.swapped_tau(), settings)
}
