//! Stationary phase for the outer integral `⟨u, m_λ⟩ = ∫_0^{π/2} A(c) e^{iΦ(c)} dc`
//! with `u = e^{2inc}` and `λ = i·t`:
//!
//! ```text
//! A(c) = α(λ) |sin c cos c|^{-1/2}
//! Φ(c) = 2nc - (t/2) ln|tan c|
//! Φ'(c) = 2n - t / sin 2c
//! ```
//!
//! For `t < 2n` there are two critical points `½ arcsin(t/2n)` and its mirror;
//! they merge at `π/4` when `t = 2n`, where `Φ'' = 0` and `Φ''' = -4t`, and the
//! integral is governed by the Airy function with width `t^{-1/3}`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::kernel::{alpha, KernelParams};
use crate::quadrature::{integrate_interval_local, Near, QuadSettings, QuadratureResult, SingularityHint};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// An oscillatory integrand `A(c) e^{iΦ(c)}` with large parameter `t`.
pub trait PhaseFunction {
    fn amplitude(&self, c: f64) -> Complex64;
    fn phase(&self, c: f64) -> f64;
    fn phase_d1(&self, c: f64) -> f64;
    fn phase_d2(&self, c: f64) -> f64;
    fn phase_d3(&self, c: f64) -> f64;
    fn large_param(&self) -> f64;
}

/// Amplitude and phase of `e^{2inc} m_λ(c)` on `(0, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDecomposition {
    pub params: KernelParams,
    pub n: u64,
    alpha: Complex64,
}

impl PhaseDecomposition {
    /// Signed `Im λ`; equal to `t` on the upper half of the principal series.
    fn s(&self) -> f64 {
        self.params.lambda.lambda.im
    }
}

pub fn decompose_outer(p: &KernelParams, n: u64) -> Result<PhaseDecomposition> {
    if !p.lambda.is_principal() {
        return Err(invalid("λ must be purely imaginary"));
    }
    if !(p.t() >= 1.0) {
        return Err(Error::OutOfRange { what: "t", value: p.t() });
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(invalid(format!("n must be even and at least 2, got {n}")));
    }
    Ok(PhaseDecomposition { params: *p, n, alpha: alpha(&p.lambda) })
}

impl PhaseFunction for PhaseDecomposition {
    fn amplitude(&self, c: f64) -> Complex64 {
        self.alpha / (c.sin() * c.cos()).abs().sqrt()
    }

    fn phase(&self, c: f64) -> f64 {
        2.0 * self.n as f64 * c - 0.5 * self.s() * c.tan().abs().ln()
    }

    fn phase_d1(&self, c: f64) -> f64 {
        2.0 * self.n as f64 - self.s() / (2.0 * c).sin()
    }

    fn phase_d2(&self, c: f64) -> f64 {
        let s2 = (2.0 * c).sin();
        2.0 * self.s() * (2.0 * c).cos() / (s2 * s2)
    }

    fn phase_d3(&self, c: f64) -> f64 {
        let s2 = (2.0 * c).sin();
        let c2 = (2.0 * c).cos();
        -4.0 * self.s() * (1.0 + c2 * c2) / (s2 * s2 * s2)
    }

    fn large_param(&self) -> f64 {
        self.params.t()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Nondegenerate,
    Degenerate,
    NearDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub location: f64,
    pub phase_d2_value: f64,
    pub phase_d3_value: f64,
    pub kind: CriticalKind,
}

/// Distance from an inflection point of `Φ` within which a critical point
/// counts as near-degenerate: the Airy width `t^{-1/3}`.
pub fn degeneracy_radius(t: f64) -> f64 {
    t.cbrt().recip()
}

/// Points scanned for sign changes: `max(4t, 1000)`.
pub fn scan_points(t: f64) -> usize {
    (4.0 * t).ceil().max(1000.0) as usize
}

fn check_interval(interval: (f64, f64)) -> Result<()> {
    let (lo, hi) = interval;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("bad interval ({lo}, {hi})")));
    }
    Ok(())
}

/// Root of `g` in `[a, b]` given `g(a)`, `g(b)` of opposite sign (or zero).
fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Roots of `g` located by sign changes on a uniform scan.
fn scan_roots(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let pos: Vec<bool> = xs.iter().map(|&x| g(x) >= 0.0).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        if pos[i] != pos[i + 1] {
            roots.push(bisect(&g, xs[i], xs[i + 1]));
        }
    }
    roots
}

/// Inflection points of `Φ` (roots of `Φ''`) in the interval, classified as
/// degenerate; `Φ'` there is the detuning of the Airy model.
pub fn inflection_points<P: PhaseFunction>(d: &P, interval: (f64, f64)) -> Result<Vec<CriticalPoint>> {
    check_interval(interval)?;
    let t = d.large_param();
    let roots = scan_roots(|c| d.phase_d2(c), interval.0, interval.1, scan_points(t));
    Ok(roots
        .into_iter()
        .map(|c| CriticalPoint {
            location: c,
            phase_d2_value: d.phase_d2(c),
            phase_d3_value: d.phase_d3(c),
            kind: CriticalKind::Degenerate,
        })
        .collect())
}

/// All roots of `Φ'` in the open interval.
///
/// The interval is cut at the inflection points of `Φ`, so `Φ'` is monotone
/// on each piece and has at most one simple root there, found by bisection.
/// An inflection point with `|Φ'| ≤ tol·t` is a double root and reported as
/// degenerate; simple roots within [`degeneracy_radius`] of an inflection
/// point are near-degenerate.
pub fn find_critical_points<P: PhaseFunction>(d: &P, interval: (f64, f64), tol: f64) -> Result<Vec<CriticalPoint>> {
    check_interval(interval)?;
    if !(tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    let t = d.large_param();
    let inflections: Vec<f64> = inflection_points(d, interval)?.iter().map(|p| p.location).collect();
    let mut cuts = vec![interval.0];
    cuts.extend(inflections.iter().cloned());
    cuts.push(interval.1);

    let mut roots = Vec::new();
    for &c0 in &inflections {
        if d.phase_d1(c0).abs() <= tol * t {
            roots.push((c0, true));
        }
    }
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ga, gb) = (d.phase_d1(a), d.phase_d1(b));
        let double_at = |x: f64| roots.iter().any(|&(r, dbl)| dbl && r == x);
        if double_at(a) || double_at(b) {
            continue;
        }
        if (ga < 0.0 && gb > 0.0) || (ga > 0.0 && gb < 0.0) {
            roots.push((bisect(|c| d.phase_d1(c), a, b), false));
        }
    }
    roots.sort_by(|x, y| x.0.total_cmp(&y.0));

    let radius = degeneracy_radius(t);
    Ok(roots
        .into_iter()
        .map(|(c, double)| {
            let kind = if double {
                CriticalKind::Degenerate
            } else if inflections.iter().any(|&c0| (c - c0).abs() <= radius) {
                CriticalKind::NearDegenerate
            } else {
                CriticalKind::Nondegenerate
            };
            CriticalPoint { location: c, phase_d2_value: d.phase_d2(c), phase_d3_value: d.phase_d3(c), kind }
        })
        .collect())
}

/// `A(c*) √(2π/|Φ''|) e^{i(Φ(c*) + sgn Φ''·π/4)}`.
pub fn nondegenerate_contribution<P: PhaseFunction>(d: &P, cp: &CriticalPoint) -> Result<Complex64> {
    if cp.kind != CriticalKind::Nondegenerate || cp.phase_d2_value == 0.0 {
        return Err(invalid("nondegenerate contribution needs a nondegenerate critical point"));
    }
    let d2 = cp.phase_d2_value;
    let phase = d.phase(cp.location) + d2.signum() * FRAC_PI_4;
    Ok(d.amplitude(cp.location) * (2.0 * PI / d2.abs()).sqrt() * (I * phase).exp())
}

/// Cubic model `2π A(c*) (2/|Φ'''|)^{1/3} Ai(ξ) e^{iΦ(c*)}` about `c*`, with
/// `ξ = sgn(Φ''')·detuning·(2/|Φ'''|)^{1/3}`; `ξ > 0` means `Φ'` has no real
/// zeros near `c*`. Expand about an inflection point with `detuning = Φ'(c*)`.
pub fn airy_contribution<P: PhaseFunction>(d: &P, cp: &CriticalPoint, detuning: f64) -> Result<Complex64> {
    if cp.kind == CriticalKind::Nondegenerate {
        return Err(invalid("Airy contribution needs a degenerate or near-degenerate point"));
    }
    let d3 = cp.phase_d3_value;
    if !(d3.abs() > 1e-12 * d.large_param().max(1.0)) {
        return Err(invalid(format!("|Φ'''| = {} is too small for the cubic model", d3.abs())));
    }
    let scale = (2.0 / d3.abs()).cbrt();
    let xi = d3.signum() * detuning * scale;
    let ai = airy_ai(xi)?;
    Ok(2.0 * PI * d.amplitude(cp.location) * scale * ai * (I * d.phase(cp.location)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    /// Sum over well-separated nondegenerate points.
    Nondegenerate(Vec<CriticalPoint>),
    /// Cubic model about an inflection point, with its Airy argument.
    Airy { point: CriticalPoint, xi: f64 },
    /// No critical point and no inflection point within the Airy window:
    /// zero at leading order.
    NoCriticalPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: Complex64,
    pub regime: Regime,
}

/// Leading-order prediction of `∫ A e^{iΦ}` over `interval`.
///
/// The Airy model is used when a critical point is (near-)degenerate, or when
/// there is none but an inflection point has its complex pair of roots within
/// [`degeneracy_radius`], i.e. `|ξ| ≤ 2^{2/3}` for the outer phase.
pub fn predict_pairing<P: PhaseFunction>(d: &P, interval: (f64, f64), tol: f64) -> Result<Prediction> {
    let cps = find_critical_points(d, interval, tol)?;
    let inflections = inflection_points(d, interval)?;
    let radius = degeneracy_radius(d.large_param());
    let airy_at = |c0: &CriticalPoint| -> Result<Prediction> {
        let detuning = d.phase_d1(c0.location);
        let xi = c0.phase_d3_value.signum() * detuning * (2.0 / c0.phase_d3_value.abs()).cbrt();
        Ok(Prediction { value: airy_contribution(d, c0, detuning)?, regime: Regime::Airy { point: *c0, xi } })
    };
    let nearest =
        |c: f64| inflections.iter().min_by(|a, b| (a.location - c).abs().total_cmp(&(b.location - c).abs())).copied();
    if let Some(cp) = cps.iter().find(|cp| cp.kind != CriticalKind::Nondegenerate) {
        if let Some(c0) = nearest(cp.location) {
            return airy_at(&c0);
        }
    }
    if !cps.is_empty() {
        let mut value = Complex64::new(0.0, 0.0);
        for cp in &cps {
            value += nondegenerate_contribution(d, cp)?;
        }
        return Ok(Prediction { value, regime: Regime::Nondegenerate(cps) });
    }
    for c0 in &inflections {
        // Half-gap of the complex root pair of the local quadratic for Φ'.
        let gap = (2.0 * d.phase_d1(c0.location).abs() / c0.phase_d3_value.abs()).sqrt();
        if gap <= radius {
            return airy_at(c0);
        }
    }
    Ok(Prediction { value: Complex64::new(0.0, 0.0), regime: Regime::NoCriticalPoint })
}

/// `⟨u, m_λ⟩ = ∫_0^{π/2} e^{2inc} m_λ(c) dc` by quadrature, with the endpoint
/// exponents `(-1 ∓ λ)/2` handled by product rules.
pub fn outer_pairing_quadrature(d: &PhaseDecomposition, settings: &QuadSettings) -> Result<QuadratureResult> {
    let l = d.params.lambda.lambda;
    let (e_sin, e_cos) = ((-1.0 - l) / 2.0, (-1.0 + l) / 2.0);
    let left = SingularityHint::new(0.0, e_sin);
    let right = SingularityHint::new(FRAC_PI_2, e_cos);
    let n = d.n as f64;
    let osc = 2.0 * n + d.large_param();
    integrate_interval_local(
        |c, near| {
            let (sin_c, cos_c) = match near {
                Some(Near { hint: 1, offset }) => ((-offset).cos(), (-offset).sin()),
                Some(Near { offset, .. }) => (offset.sin(), offset.cos()),
                None => (c.sin(), c.cos()),
            };
            let log = e_sin * sin_c.abs().ln() + e_cos * cos_c.abs().ln() + I * 2.0 * n * c;
            d.alpha * log.exp()
        },
        0.0,
        FRAC_PI_2,
        Some(&left),
        Some(&right),
        osc,
        settings,
    )
}

const AI0: f64 = 0.355_028_053_887_817_24;
const AIP0: f64 = -0.258_819_403_792_806_8;

/// Largest `|x|` accepted by [`airy_ai`].
pub const AIRY_RANGE: f64 = 20.0;

/// Airy function `Ai(x)` for `|x| ≤ 20`: Maclaurin series on `[-7, 6]`,
/// asymptotic expansions outside (optimally truncated).
pub fn airy_ai(x: f64) -> Result<f64> {
    if !(x.abs() <= AIRY_RANGE) {
        return Err(Error::OutOfRange { what: "Airy argument", value: x });
    }
    if x > 6.0 {
        Ok(airy_decaying(x))
    } else if x < -7.0 {
        Ok(airy_oscillating(-x))
    } else {
        Ok(airy_maclaurin(x))
    }
}

fn airy_maclaurin(x: f64) -> f64 {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut a, mut b) = (1.0, x);
    for k in 1..200 {
        let k3 = 3.0 * k as f64;
        a *= x3 / (k3 * (k3 - 1.0));
        b *= x3 / (k3 * (k3 + 1.0));
        f += a;
        g += b;
        if a.abs() < 1e-18 * f.abs().max(1.0) && b.abs() < 1e-18 * g.abs().max(1.0) {
            break;
        }
    }
    AI0 * f + AIP0 * g
}

/// Coefficients `u_k` of the Airy asymptotic expansions.
fn airy_u(k: usize, prev: f64) -> f64 {
    let k = k as f64;
    prev * (6.0 * k - 5.0) * (6.0 * k - 3.0) * (6.0 * k - 1.0) / ((2.0 * k - 1.0) * 216.0 * k)
}

fn airy_decaying(x: f64) -> f64 {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (mut sum, mut u, mut last) = (1.0, 1.0, f64::INFINITY);
    for k in 1..60 {
        u = airy_u(k, u);
        let term = u / zeta.powi(k as i32);
        if term >= last {
            break;
        }
        sum += if k % 2 == 1 { -term } else { term };
        last = term;
    }
    (-zeta).exp() / (2.0 * PI.sqrt() * x.powf(0.25)) * sum
}

fn airy_oscillating(z: f64) -> f64 {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let (mut even, mut odd, mut u, mut last) = (1.0, 0.0, 1.0, f64::INFINITY);
    for k in 1..60 {
        u = airy_u(k, u);
        let term = u / zeta.powi(k as i32);
        if term >= last {
            break;
        }
        // (-1)^j u_{2j} / ζ^{2j} and (-1)^j u_{2j+1} / ζ^{2j+1}
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            even += sign * term;
        } else {
            odd += sign * term;
        }
        last = term;
    }
    let arg = zeta - FRAC_PI_4;
    (arg.cos() * even + arg.sin() * odd) / (PI.sqrt() * z.powf(0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_interval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INTERVAL: (f64, f64) = (1e-4, FRAC_PI_2 - 1e-4);

    fn outer(t: f64, n: u64) -> PhaseDecomposition {
        decompose_outer(&KernelParams::principal(t, 0.0), n).unwrap()
    }

    #[test]
    fn airy_golden_values() {
        // 30-digit reference values.
        let golden = [
            (0.0, 0.355_028_053_887_817_24),
            (1.0, 0.135_292_416_312_881_42),
            (3.0, 0.006_591_139_357_460_719),
            (5.0, 1.083_444_281_360_744_2e-4),
            (7.5, 1.917_256_067_513_430_8e-7),
            (10.0, 1.104_753_255_289_868_6e-10),
            (20.0, 1.691_672_868_670_540_3e-27),
            (-0.5, 0.475_728_091_610_539_59),
            (-2.5, -0.112_325_067_692_966_09),
            (-5.0, 0.350_761_009_024_114_32),
            (-7.0, 0.184_280_835_250_505_64),
            (-10.0, 0.040_241_238_486_443_19),
            (-20.0, -0.176_406_127_077_984_69),
        ];
        for (x, want) in golden {
            let got = airy_ai(x).unwrap();
            assert!((got - want).abs() <= 1e-10, "Ai({x}) = {got}, want {want}");
        }
        assert!(airy_ai(-2.338_107_410_459_767).unwrap().abs() < 1e-8);
        assert!(airy_ai(20.5).is_err());
        assert!(airy_ai(f64::NAN).is_err());
    }

    #[test]
    fn airy_is_continuous_across_switch_points() {
        for x in [5.0, 6.0, 7.0] {
            let (a, b) = (airy_maclaurin(x), airy_decaying(x));
            assert!((a - b).abs() < 1e-10, "Ai({x}): {a} vs {b}");
        }
        for x in [-6.0, -7.0, -8.0] {
            let (a, b) = (airy_maclaurin(x), airy_oscillating(-x));
            assert!((a - b).abs() < 1e-10, "Ai({x}): {a} vs {b}");
        }
    }

    #[test]
    fn phase_derivatives_at_quarter_period() {
        let d = outer(200.0, 100);
        assert_eq!(d.phase_d1(FRAC_PI_4), 0.0);
        assert!(d.phase_d2(FRAC_PI_4).abs() < 1e-12);
        assert!((d.phase_d3(FRAC_PI_4) + 800.0).abs() < 1e-9);
        assert!(decompose_outer(&KernelParams::principal(200.0, 0.0), 3).is_err());
        assert!(decompose_outer(&KernelParams::principal(0.5, 0.0), 2).is_err());
    }

    #[test]
    fn phase_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = outer(137.0, 60);
        let h = 1e-5;
        let rel = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1.0);
        for _ in 0..50 {
            let c = rng.gen_range(0.05..FRAC_PI_2 - 0.05);
            let fd1 = (d.phase(c + h) - d.phase(c - h)) / (2.0 * h);
            let fd2 = (d.phase_d1(c + h) - d.phase_d1(c - h)) / (2.0 * h);
            let fd3 = (d.phase_d2(c + h) - d.phase_d2(c - h)) / (2.0 * h);
            assert!(rel(fd1, d.phase_d1(c)) < 1e-6, "c = {c}");
            assert!(rel(fd2, d.phase_d2(c)) < 1e-6, "c = {c}");
            assert!(rel(fd3, d.phase_d3(c)) < 1e-6, "c = {c}");
        }
    }

    #[test]
    fn critical_points_examples() {
        let cps = find_critical_points(&outer(100.0, 100), INTERVAL, 1e-12).unwrap();
        assert_eq!(cps.len(), 2);
        assert!((cps[0].location - PI / 12.0).abs() < 1e-12);
        assert!((cps[1].location - 5.0 * PI / 12.0).abs() < 1e-12);
        assert!(cps.iter().all(|c| c.kind == CriticalKind::Nondegenerate));

        let cps = find_critical_points(&outer(200.0, 100), INTERVAL, 1e-12).unwrap();
        assert_eq!(cps.len(), 1);
        assert!((cps[0].location - FRAC_PI_4).abs() < 1e-12);
        assert_eq!(cps[0].kind, CriticalKind::Degenerate);

        assert!(find_critical_points(&outer(201.0, 100), INTERVAL, 1e-12).unwrap().is_empty());
    }

    #[test]
    fn near_degenerate_window() {
        for n in [50u64, 200, 500] {
            let two_n = 2.0 * n as f64;
            let t = two_n - two_n.cbrt() / 10.0;
            let cps = find_critical_points(&outer(t, n), INTERVAL, 1e-12).unwrap();
            assert_eq!(cps.len(), 2);
            assert!(cps.iter().all(|c| c.kind == CriticalKind::NearDegenerate), "n = {n}");
        }
    }

    struct Gaussian {
        t: f64,
    }

    impl PhaseFunction for Gaussian {
        fn amplitude(&self, _: f64) -> Complex64 {
            Complex64::new(1.0, 0.0)
        }
        fn phase(&self, c: f64) -> f64 {
            0.5 * self.t * c * c
        }
        fn phase_d1(&self, c: f64) -> f64 {
            self.t * c
        }
        fn phase_d2(&self, _: f64) -> f64 {
            self.t
        }
        fn phase_d3(&self, _: f64) -> f64 {
            0.0
        }
        fn large_param(&self) -> f64 {
            self.t
        }
    }

    #[test]
    fn gaussian_phase_matches_quadrature() {
        let g = Gaussian { t: 200.0 };
        let cps = find_critical_points(&g, (-2.0, 2.0), 1e-12).unwrap();
        assert_eq!(cps.len(), 1);
        let pred = nondegenerate_contribution(&g, &cps[0]).unwrap();
        let want = (2.0 * PI / 200.0).sqrt() * (I * FRAC_PI_4).exp();
        assert!((pred - want).norm() < 1e-12);
        let q = integrate_interval(|c| (I * g.phase(c)).exp(), -2.0, 2.0, None, None, 400.0, &QuadSettings::default())
            .unwrap();
        assert!((q.value - pred).norm() < 0.05 * pred.norm(), "{} vs {pred}", q.value);

        let g4 = Gaussian { t: 800.0 };
        let cp4 = find_critical_points(&g4, (-2.0, 2.0), 1e-12).unwrap()[0];
        let ratio = nondegenerate_contribution(&g4, &cp4).unwrap().norm() / pred.norm();
        assert!((ratio - 0.5).abs() < 1e-12);
        let degenerate = CriticalPoint { kind: CriticalKind::Degenerate, ..cps[0] };
        assert!(nondegenerate_contribution(&g, &degenerate).is_err());
        assert!(airy_contribution(&g, &degenerate, 0.0).is_err());
    }

    #[test]
    fn airy_contribution_examples() {
        let d = outer(200.0, 100);
        let c0 = inflection_points(&d, INTERVAL).unwrap()[0];
        let v = airy_contribution(&d, &c0, 0.0).unwrap();
        let want = 2.0 * PI * d.amplitude(FRAC_PI_4).norm() * (1.0 / 400.0_f64).cbrt() * AI0;
        assert!((v.norm() - want).abs() < 1e-12 * want);

        let d8 = outer(1600.0, 800);
        let c8 = inflection_points(&d8, INTERVAL).unwrap()[0];
        let ratio = airy_contribution(&d8, &c8, 0.0).unwrap().norm() / v.norm();
        assert!((ratio - 0.5).abs() < 1e-9, "{ratio}");

        // ξ = 5: detuning such that sgn(Φ''')·Φ'·(2/|Φ'''|)^{1/3} = 5.
        let scale = (2.0 / c0.phase_d3_value.abs()).cbrt();
        let far = airy_contribution(&d, &c0, -5.0 / scale).unwrap();
        assert!(far.norm() <= 1e-2 * v.norm());
    }

    #[test]
    fn prediction_regimes_match_quadrature() {
        let q = QuadSettings::with_tol(1e-10);
        // Well-separated points: t = n.
        let d = outer(200.0, 200);
        let p = predict_pairing(&d, INTERVAL, 1e-12).unwrap();
        assert!(matches!(p.regime, Regime::Nondegenerate(ref v) if v.len() == 2));
        let direct = outer_pairing_quadrature(&d, &q).unwrap();
        assert!(direct.converged);
        assert!((p.value - direct.value).norm() < 0.1 * direct.value.norm(), "{} vs {}", p.value, direct.value);

        // Merged point: t = 2n.
        let d = outer(200.0, 100);
        let p = predict_pairing(&d, INTERVAL, 1e-12).unwrap();
        assert!(matches!(p.regime, Regime::Airy { .. }));
        let at_merge = outer_pairing_quadrature(&d, &q).unwrap().value;
        assert!((p.value.norm() - at_merge.norm()).abs() < 0.25 * at_merge.norm(), "{} vs {at_merge}", p.value);

        // Beyond the merge.
        let d = outer(260.0, 100);
        let p = predict_pairing(&d, INTERVAL, 1e-12).unwrap();
        assert_eq!(p.regime, Regime::NoCriticalPoint);
        assert_eq!(p.value, Complex64::new(0.0, 0.0));
        let beyond = outer_pairing_quadrature(&d, &q).unwrap().value;
        assert!(beyond.norm() <= 0.1 * at_merge.norm(), "{beyond} vs {at_merge}");
    }

    #[test]
    fn scaling_of_predictions() {
        // Fixed shape: t/n constant; each nondegenerate term scales as t^{-1/2}.
        let terms = |t: f64, n: u64| {
            let d = outer(t, n);
            let cps = find_critical_points(&d, INTERVAL, 1e-12).unwrap();
            cps.iter().map(|cp| nondegenerate_contribution(&d, cp).unwrap().norm()).collect::<Vec<_>>()
        };
        for (a, b) in terms(100.0, 100).into_iter().zip(terms(400.0, 400)) {
            assert!(((b / a) - 0.5).abs() < 1e-9, "{}", b / a);
        }
        let a = predict_pairing(&outer(100.0, 50), INTERVAL, 1e-12).unwrap().value.norm();
        let b = predict_pairing(&outer(800.0, 400), INTERVAL, 1e-12).unwrap().value.norm();
        assert!(((b / a) - 0.5).abs() < 1e-9, "{}", b / a);
    }
}
