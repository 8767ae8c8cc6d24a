//! How concentrated the risk-seeking weights are across epochs.

use crate::rewards::baseline_weights;

#[derive(Debug, Clone, PartialEq)]
pub struct TailStats {
    /// `(k, fraction of epochs where the top-k weights hold > 80% of the mass)`.
    pub domination: Vec<(usize, f64)>,
    /// Fraction of epochs in which every baseline weight is zero.
    pub barrier_fraction: f64,
    pub epochs: usize,
}

pub const DOMINATION_SHARE: f64 = 0.8;

/// Whether the `k` largest weights of one epoch exceed 80% of its total
/// (an epoch with zero total mass is never dominated).
pub fn dominated(weights: &[f64], k: usize) -> bool {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return false;
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = sorted.iter().take(k).sum();
    top > DOMINATION_SHARE * total
}

/// Domination and full-barrier fractions over per-epoch reward lists,
/// weighting each epoch by the baseline `(R - R_alpha)` scheme.
pub fn tail_barrier_stats(epochs: &[Vec<f64>], alpha: f64, ks: &[usize]) -> TailStats {
    let weights: Vec<Vec<f64>> = epochs
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| baseline_weights(r, alpha).1)
        .collect();
    let n = weights.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let domination = ks
        .iter()
        .map(|&k| (k, frac(weights.iter().filter(|w| dominated(w, k)).count())))
        .collect();
    let barrier = weights.iter().filter(|w| w.iter().all(|&v| v == 0.0)).count();
    TailStats { domination, barrier_fraction: frac(barrier), epochs: n }
}

/// Table as CSV: `k,dominated_fraction` rows followed by a barrier row.
pub fn to_csv(stats: &TailStats) -> String {
    let mut out = String::from("k,dominated_fraction\n");
    for (k, f) in &stats.domination {
        out.push_str(&format!("{k},{f:?}\n"));
    }
    out.push_str(&format!("barrier,{:?}\n", stats.barrier_fraction));
    out
}
