//! Test vectors in reduced form, their pairings with `k_λ`, and sweeps of
//! the Hermitian form `H = |⟨u, k_λ⟩|²` over `t`.
//!
//! `e_n ⊗ e'_{-n}` reduces to `u(c) = e^{2inc}`; the two-mode vector
//! `e_n ⊗ e'_{-n} + e_{n+2} ⊗ e'_{-n-2}` reduces to `e^{2inc}(1 + e^{4ic})`,
//! whose amplitude vanishes at the degenerate point `c = π/4`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::kernel::{reduced_kernel_k, KernelParams, KernelSettings};
use crate::quadrature::{integrate_periodic_local, Near, QuadSettings, SingularityHint};
use crate::spectral::{pairing_series, SeriesSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Plain,
    Tilde,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Tilde => "tilde",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "tilde" => Ok(Variant::Tilde),
            other => Err(invalid(format!("unknown variant {other:?}"))),
        }
    }
}

/// Nearest even integer to `T/2` (at least 2); ties go down.
pub fn choose_n(t_big: f64) -> Result<u64> {
    if !(t_big >= 1.0) || !t_big.is_finite() {
        return Err(invalid(format!("T must be at least 1, got {t_big}")));
    }
    let half = t_big / 2.0;
    let lower = 2.0 * (half / 2.0).floor();
    let upper = lower + 2.0;
    let n = if half - lower <= upper - half { lower } else { upper };
    Ok((n as u64).max(2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestVectorSpec {
    pub t_big: f64,
    pub n: u64,
    pub variant: Variant,
}

impl TestVectorSpec {
    pub fn new(t_big: f64, variant: Variant) -> Result<Self> {
        Ok(Self { t_big, n: choose_n(t_big)?, variant })
    }

    /// Explicit `n`; must be even with `|T - 2n| ≤ 10`.
    pub fn with_n(t_big: f64, n: u64, variant: Variant) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(invalid(format!("n must be even and positive, got {n}")));
        }
        if (t_big - 2.0 * n as f64).abs() > 10.0 {
            return Err(invalid(format!("|T - 2n| > 10 for T = {t_big}, n = {n}")));
        }
        Ok(Self { t_big, n, variant })
    }

    pub fn with_variant(self, variant: Variant) -> Self {
        Self { variant, ..self }
    }
}

/// `u(c)` for a test vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub n: u64,
    pub variant: Variant,
}

impl TestFunction {
    pub fn eval(&self, c: f64) -> Complex64 {
        let base = Complex64::from_polar(1.0, 2.0 * self.n as f64 * c);
        match self.variant {
            Variant::Plain => base,
            Variant::Tilde => base * (1.0 + Complex64::from_polar(1.0, 4.0 * c)),
        }
    }
}

pub fn reduced_test_function(spec: &TestVectorSpec) -> TestFunction {
    TestFunction { n: spec.n, variant: spec.variant }
}

/// How `⟨u, k_λ⟩` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingRoute {
    /// Outer quadrature over `c` with `k_λ(c)` from the inner quadrature.
    Quadrature,
    /// The Fourier–Gamma series of the `spectral` module.
    Series,
}

impl FromStr for PairingRoute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(Self::Quadrature),
            "series" => Ok(Self::Series),
            other => Err(invalid(format!("unknown pairing route {other:?}"))),
        }
    }
}

impl fmt::Display for PairingRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quadrature => "quadrature",
            Self::Series => "series",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingSettings {
    pub route: PairingRoute,
    /// Outer tolerance; the inner kernel evaluations run ten times tighter.
    pub quad: QuadSettings,
    pub series: SeriesSettings,
}

impl Default for PairingSettings {
    fn default() -> Self {
        Self { route: PairingRoute::Quadrature, quad: QuadSettings::default(), series: SeriesSettings::default() }
    }
}

impl PairingSettings {
    pub fn quadrature(tol: f64) -> Self {
        Self { route: PairingRoute::Quadrature, quad: QuadSettings::with_tol(tol), ..Self::default() }
    }

    pub fn series() -> Self {
        Self { route: PairingRoute::Series, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingValue {
    pub value: Complex64,
    pub error_estimate: f64,
    pub converged: bool,
}

fn check_t(p: &KernelParams) -> Result<()> {
    if !(p.t() >= 1.0) {
        return Err(Error::OutOfRange { what: "t", value: p.t() });
    }
    Ok(())
}

/// `∫_0^π u(c) k_λ(c) dc` by quadrature.
///
/// `k` has period `π/2` and `u` is `π/2`-periodic for even `n`, so the
/// integral is `∫_0^π u(x/2) k(x/2) dx` over one period with a single
/// singular point `x = 0`, where `k` carries the pair of exponents
/// `(-1 ± λ)/2`.
fn pairing_quadrature(f: TestFunction, p: &KernelParams, quad: &QuadSettings) -> Result<PairingValue> {
    let l = p.lambda.lambda;
    let hints = [SingularityHint::with_exponents(0.0, &[(l - 1.0) / 2.0, (-l - 1.0) / 2.0])];
    let inner = KernelSettings {
        quad: QuadSettings { tol: quad.tol / (10.0 * PI), max_evals: quad.max_evals },
        // The outer rule never samples inside its innermost product panel
        // closer than this; keep the kernel usable there.
        exclusion_radius: 1e-300,
    };
    let unconverged = std::cell::Cell::new(false);
    let failure = std::cell::RefCell::new(None);
    let osc = f.n as f64 + 2.0 + p.t() / 2.0;
    let r = integrate_periodic_local(
        |x, near| {
            let c = match near {
                Some(Near { offset, .. }) => offset / 2.0,
                None => x / 2.0,
            };
            match reduced_kernel_k(c, p, &inner) {
                Ok(k) => {
                    if !k.converged {
                        unconverged.set(true);
                    }
                    f.eval(c) * k.value
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        },
        &hints,
        osc,
        quad,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(PairingValue { value: r.value, error_estimate: r.error_estimate, converged: r.converged && !unconverged.get() })
}

/// Both `⟨e^{2inc}, k⟩` and `⟨e^{2i(n+2)c}, k⟩`.
fn mode_pair(n: u64, p: &KernelParams, settings: &PairingSettings) -> Result<(PairingValue, PairingValue)> {
    match settings.route {
        PairingRoute::Series => {
            let s = pairing_series(n, p, &settings.series)?;
            let mk = |value| PairingValue { value, error_estimate: s.error_estimate, converged: true };
            Ok((mk(s.plain), mk(s.shifted)))
        }
        PairingRoute::Quadrature => {
            let a = pairing_quadrature(TestFunction { n, variant: Variant::Plain }, p, &settings.quad)?;
            let b = pairing_quadrature(TestFunction { n: n + 2, variant: Variant::Plain }, p, &settings.quad)?;
            Ok((a, b))
        }
    }
}

/// `⟨u, k_λ⟩ = ∫_0^π u(c) k_λ(c) dc`.
pub fn pairing(spec: &TestVectorSpec, p: &KernelParams, settings: &PairingSettings) -> Result<PairingValue> {
    check_t(p)?;
    let f = reduced_test_function(spec);
    match settings.route {
        PairingRoute::Quadrature => pairing_quadrature(f, p, &settings.quad),
        PairingRoute::Series => {
            let s = pairing_series(spec.n, p, &settings.series)?;
            let value = match spec.variant {
                Variant::Plain => s.plain,
                Variant::Tilde => s.plain + s.shifted,
            };
            Ok(PairingValue { value, error_estimate: s.error_estimate, converged: true })
        }
    }
}

/// `H_λ(w) = |⟨u, k_λ⟩|²`.
pub fn hermitian_form_h(spec: &TestVectorSpec, p: &KernelParams, settings: &PairingSettings) -> Result<f64> {
    Ok(pairing(spec, p, settings)?.value.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    pub t_big: f64,
    pub n: u64,
    pub variant: Variant,
    pub pairing: Complex64,
    pub h: f64,
    pub converged: bool,
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.iter().any(|t| !(*t >= 1.0) || !t.is_finite()) {
        return Err(invalid("sweep grid values must be finite and at least 1"));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("sweep grid must be sorted ascending"));
    }
    Ok(())
}

/// One sweep row per `t` for `spec`, with `λ = i·t` and the given `τ = i·tau_im`.
/// Rows are independent; a failing row is recorded as unconverged.
pub fn sweep_h(
    spec: &TestVectorSpec,
    t_grid: &[f64],
    tau_im: f64,
    settings: &PairingSettings,
) -> Result<Vec<SweepRow>> {
    check_grid(t_grid)?;
    Ok(t_grid.iter().map(|&t| sweep_row(spec, t, tau_im, settings)).collect())
}

pub fn sweep_row(spec: &TestVectorSpec, t: f64, tau_im: f64, settings: &PairingSettings) -> SweepRow {
    let p = KernelParams::principal(t, tau_im);
    let (value, converged) = match pairing(spec, &p, settings) {
        Ok(v) => (v.value, v.converged),
        Err(_) => (Complex64::new(f64::NAN, f64::NAN), false),
    };
    SweepRow { t, t_big: spec.t_big, n: spec.n, variant: spec.variant, pairing: value, h: value.norm_sqr(), converged }
}

/// Plain and tilde rows at one `t`, sharing the mode computations.
pub fn sweep_rows_both(t_big: f64, n: u64, t: f64, tau_im: f64, settings: &PairingSettings) -> [SweepRow; 2] {
    let p = KernelParams::principal(t, tau_im);
    let (plain, tilde, converged) = match check_t(&p).and_then(|_| mode_pair(n, &p, settings)) {
        Ok((a, b)) => (a.value, a.value + b.value, a.converged && b.converged),
        Err(_) => {
            let nan = Complex64::new(f64::NAN, f64::NAN);
            (nan, nan, false)
        }
    };
    let row = |variant, pairing: Complex64| SweepRow {
        t,
        t_big,
        n,
        variant,
        pairing,
        h: pairing.norm_sqr(),
        converged: converged && pairing.re.is_finite(),
    };
    [row(Variant::Plain, plain), row(Variant::Tilde, tilde)]
}

/// t-grid layout: uniform `peak_spacing·T^{1/3}` steps within
/// `peak_halfwidth·T^{1/3}` of `T`, geometric steps elsewhere in
/// `[lower·T, upper·T]` (clamped below at 1), plus the extra points `extra·T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    pub peak_spacing: f64,
    pub peak_halfwidth: f64,
    pub ratio: f64,
    /// Lower end as a multiple of `T`; `0` starts the grid at `t = 1`.
    pub lower: f64,
    pub upper: f64,
    pub extra: Vec<f64>,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { peak_spacing: 0.2, peak_halfwidth: 3.0, ratio: 1.05, lower: 0.0, upper: 4.0, extra: vec![1.0, 3.0] }
    }
}

impl GridPolicy {
    pub fn grid(&self, t_big: f64) -> Result<Vec<f64>> {
        if !(self.ratio > 1.0) || !(self.peak_spacing > 0.0) || !(self.upper > self.lower) {
            return Err(Error::Config("grid policy needs ratio > 1, peak_spacing > 0, upper > lower".into()));
        }
        let w = t_big.cbrt();
        let (lo_peak, hi_peak) = (t_big - self.peak_halfwidth * w, t_big + self.peak_halfwidth * w);
        let start = (self.lower * t_big).max(1.0);
        let end = self.upper * t_big;
        let mut ts = Vec::new();
        let steps = ((hi_peak - lo_peak) / (self.peak_spacing * w) + 1e-9).floor() as usize;
        for i in 0..=steps {
            let t = lo_peak + i as f64 * self.peak_spacing * w;
            if t >= 1.0 {
                ts.push(t);
            }
        }
        let mut t = start;
        while t <= end * (1.0 + 1e-12) {
            if !(lo_peak..=hi_peak).contains(&t) {
                ts.push(t);
            }
            t *= self.ratio;
        }
        ts.push(end);
        for &e in &self.extra {
            ts.push(e * t_big);
        }
        ts.retain(|t| *t >= 1.0);
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
        Ok(ts)
    }
}
