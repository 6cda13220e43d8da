//! Maximization of `Σ dᵢ h(tᵢ)` over nonnegative weights with cumulative
//! caps `Σ_{tᵢ ≤ S} dᵢ ≤ A·S²`, and the per-`T` bound-chain report.
//!
//! The weights are adversarial stand-ins chosen by the optimizer, not
//! arithmetic data: the report checks that the cap family together with the
//! tilde ceiling keeps the maximum bounded, and that dividing by the plain
//! floor on `I_T` yields the `T^{5/3}` growth. The step from the plain to the
//! two-mode vector on the geometric side is taken as an assumption.

use crate::error::{invalid, Result};
use crate::harness::{fit_power_law, FitResult};
use crate::testvectors::SweepRow;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightProfile {
    pub fn new(grid: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if weights.len() != grid.len() {
            return Err(invalid("grid and weights differ in length"));
        }
        if weights.iter().any(|d| !(*d >= 0.0)) {
            return Err(invalid("weights must be nonnegative"));
        }
        Ok(Self { grid, weights })
    }

    /// Smallest slack `A·tⱼ² - Σ_{i≤j} dᵢ` over all prefixes.
    pub fn min_slack(&self, c: &MeanValueConstraint) -> f64 {
        let mut prefix = 0.0;
        let mut slack = f64::INFINITY;
        for (t, d) in self.grid.iter().zip(&self.weights) {
            prefix += d;
            slack = slack.min(c.cap(*t) - prefix);
        }
        slack
    }

    pub fn weighted_sum(&self, h: &[f64]) -> f64 {
        self.weights.iter().zip(h).map(|(d, h)| d * h).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValueConstraint {
    pub a: f64,
}

impl MeanValueConstraint {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid(format!("A must be positive, got {a}")));
        }
        Ok(Self { a })
    }

    pub fn cap(&self, s: f64) -> f64 {
        self.a * s * s
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(invalid("grid values must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid must be strictly increasing"));
    }
    Ok(())
}

fn check_values(grid: &[f64], h: &[f64]) -> Result<()> {
    check_grid(grid)?;
    if h.len() != grid.len() {
        return Err(invalid("grid and values differ in length"));
    }
    if h.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("values must be finite and nonnegative"));
    }
    Ok(())
}

/// Exact maximum of `Σ dᵢ hᵢ` under the prefix caps, by the polymatroid
/// greedy rule: visit indices by decreasing `h` and give each the largest
/// mass every later prefix cap still allows.
pub fn max_weighted_sum(grid: &[f64], h: &[f64], c: &MeanValueConstraint) -> Result<(f64, WeightProfile)> {
    check_values(grid, h)?;
    let n = grid.len();
    let caps: Vec<f64> = grid.iter().map(|&t| c.cap(t)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| h[j].total_cmp(&h[i]).then(i.cmp(&j)));
    let mut d = vec![0.0; n];
    // Remaining room of each prefix constraint j: caps[j] - Σ_{i≤j} d_i.
    let mut room = caps.clone();
    for &i in &order {
        let allowed = room[i..].iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        d[i] = allowed;
        for r in &mut room[i..] {
            *r -= allowed;
        }
    }
    let profile = WeightProfile { grid: grid.to_vec(), weights: d };
    Ok((profile.weighted_sum(h), profile))
}

/// Dyadic majorant `Σ_k A (2^{k+1})² max_{t ∈ [2^k, 2^{k+1}]} h(t)` over blocks
/// covering `[1, upper]`; an upper bound for [`max_weighted_sum`].
pub fn dyadic_bound_check(grid: &[f64], h: &[f64], upper: f64, c: &MeanValueConstraint) -> Result<f64> {
    check_values(grid, h)?;
    let (Some(&first), Some(&last)) = (grid.first(), grid.last()) else {
        return Err(invalid("empty sweep"));
    };
    if first > 1.0 + 1e-9 || last < upper * (1.0 - 1e-9) || first < 1.0 - 1e-9 {
        return Err(invalid(format!("sweep covers [{first}, {last}], need exactly [1, {upper}]")));
    }
    let mut total = 0.0;
    let mut lo = 1.0_f64;
    while lo < last {
        let hi = 2.0 * lo;
        let block: Vec<f64> = grid.iter().zip(h).filter(|(t, _)| **t >= lo && **t <= hi).map(|(_, v)| *v).collect();
        if block.is_empty() {
            return Err(invalid(format!("no sweep point in dyadic block [{lo}, {hi}]")));
        }
        total += c.cap(hi) * block.iter().cloned().fold(0.0, f64::max);
        lo = hi;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub t_big: f64,
    /// Maximum of the weighted tilde sum.
    pub d_value: f64,
    /// Minimum of the plain form over `I_T`.
    pub floor: f64,
    pub cap: f64,
    pub dyadic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub records: Vec<ChainRecord>,
    /// Values of `T` left out, with the reason.
    pub excluded: Vec<(f64, String)>,
    /// Fit of `cap(T)` against `T`; needs three retained values.
    pub cap_fit: Option<FitResult>,
    pub b: f64,
    pub a: f64,
    pub assumptions: Vec<String>,
}

impl ChainReport {
    /// `max D(T) / min D(T)` over the retained records.
    pub fn d_uniformity(&self) -> Option<f64> {
        let ds: Vec<f64> = self.records.iter().map(|r| r.d_value).collect();
        let max = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        (!ds.is_empty() && min > 0.0).then(|| max / min)
    }
}

/// `I_T = [T - (b/2) T^{1/3}, T + (b/2) T^{1/3}]`.
pub fn peak_interval(t_big: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * b * t_big.cbrt();
    (t_big - half, t_big + half)
}

pub const GEOMETRIC_ASSUMPTION: &str =
    "H_Delta(w_T) <= H_Delta(w~_T) is taken from the geometric side and not computed";

/// Per-`T` bound chain from plain and tilde sweeps (`sweeps[i] = (T, plain, tilde)`).
pub fn assemble_report(
    sweeps: &[(f64, Vec<SweepRow>, Vec<SweepRow>)],
    c: &MeanValueConstraint,
    b: f64,
) -> Result<ChainReport> {
    if !(b > 0.0) {
        return Err(invalid(format!("b must be positive, got {b}")));
    }
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    for (t_big, plain, tilde) in sweeps {
        let t_big = *t_big;
        if tilde.iter().any(|r| !r.converged || !r.h.is_finite()) {
            excluded.push((t_big, "tilde sweep has unconverged rows".to_string()));
            continue;
        }
        let grid: Vec<f64> = tilde.iter().map(|r| r.t).collect();
        let h: Vec<f64> = tilde.iter().map(|r| r.h).collect();
        let (d_value, _) = max_weighted_sum(&grid, &h, c)?;
        let dyadic = dyadic_bound_check(&grid, &h, grid.last().copied().unwrap_or(1.0), c)?;
        let (lo, hi) = peak_interval(t_big, b);
        let inside: Vec<&SweepRow> = plain.iter().filter(|r| r.t >= lo && r.t <= hi).collect();
        if inside.is_empty() {
            excluded.push((t_big, "no plain sweep point in I_T".to_string()));
            continue;
        }
        if inside.iter().any(|r| !r.converged) {
            excluded.push((t_big, "unconverged plain row in I_T".to_string()));
            continue;
        }
        let floor = inside.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
        if !(floor > 0.0) {
            excluded.push((t_big, "plain floor on I_T vanishes".to_string()));
            continue;
        }
        records.push(ChainRecord { t_big, d_value, floor, cap: d_value / floor, dyadic });
    }
    let cap_fit = if records.len() >= 3 {
        let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.t_big, r.cap)).collect();
        Some(fit_power_law(&pairs)?)
    } else {
        None
    };
    Ok(ChainReport { records, excluded, cap_fit, b, a: c.a, assumptions: vec![GEOMETRIC_ASSUMPTION.to_string()] })
}
