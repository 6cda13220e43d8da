#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// Values from `tests/data/golden.txt`.
pub fn golden() -> BTreeMap<String, f64> {
    let text = include_str!("../data/golden.txt");
    text.lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key = value");
            (k.trim().to_string(), v.trim().parse().expect("number"))
        })
        .collect()
}

/// Optimum of the prefix-capped linear program by dynamic programming over
/// its vertex candidates: at every vertex each prefix sum is 0 or a cap.
pub fn lp_oracle(grid: &[f64], h: &[f64], a: f64) -> f64 {
    let caps: Vec<f64> = grid.iter().map(|t| a * t * t).collect();
    let mut values = vec![0.0];
    values.extend(caps.iter().cloned());
    values.sort_by(f64::total_cmp);
    values.dedup();
    let neg = f64::NEG_INFINITY;
    let mut best = vec![neg; values.len()];
    best[0] = 0.0;
    for (j, &hj) in h.iter().enumerate() {
        let mut next = vec![neg; values.len()];
        for v in 0..values.len() {
            if values[v] > caps[j] * (1.0 + 1e-15) {
                continue;
            }
            for u in 0..=v {
                if best[u] > neg {
                    next[v] = next[v].max(best[u] + hj * (values[v] - values[u]));
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(neg, f64::max)
}

/// Random instance with at most `max_points` distinct grid points.
pub fn random_instance(rng: &mut impl Rng, max_points: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let n = rng.gen_range(1..=max_points);
    let mut grid: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..30.0)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let h = grid.iter().map(|_| rng.gen_range(0.0..10.0)).collect();
    (grid, h, rng.gen_range(0.05..5.0))
}
