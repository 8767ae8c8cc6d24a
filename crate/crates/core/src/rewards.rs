//! Reward functions and the rank-based weight mapping.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expr::{Expression, Op};

/// Population mean and variance.
pub fn mean_var(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len());
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    (sse / y.len() as f64).sqrt()
}

/// `1 / (1 + RMSE / sigma_y)`.
pub fn nrmse_reward(y: &[f64], yhat: &[f64], sigma_y: f64) -> Result<f64> {
    if !(sigma_y > 0.0) {
        return Err(Error::DegenerateTarget);
    }
    Ok(1.0 / (1.0 + rmse(y, yhat) / sigma_y))
}

/// Observation model for the information-criterion reward. Only the
/// Gaussian form is used by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    Gaussian,
    /// Student-t with the given degrees of freedom and scale `sqrt(sigma2)`.
    StudentT { dof: f64 },
}

impl Likelihood {
    pub fn log_density(self, residual: f64, sigma2: f64) -> f64 {
        match self {
            Likelihood::Gaussian => -0.5 * (2.0 * PI * sigma2).ln() - residual * residual / (2.0 * sigma2),
            Likelihood::StudentT { dof } => {
                let z2 = residual * residual / sigma2;
                ln_gamma((dof + 1.0) / 2.0)
                    - ln_gamma(dof / 2.0)
                    - 0.5 * (dof * PI * sigma2).ln()
                    - (dof + 1.0) / 2.0 * (1.0 + z2 / dof).ln()
            }
        }
    }
}

// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `2 * sum log p(y_i | yhat_i) - k log S`, i.e. the negated information
/// criterion so that larger is better.
pub fn bic_from_predictions(y: &[f64], yhat: &[f64], sigma2: f64, k: usize, likelihood: Likelihood) -> f64 {
    assert_eq!(y.len(), yhat.len());
    let loglik: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| likelihood.log_density(a - b, sigma2))
        .sum();
    2.0 * loglik - k as f64 * (y.len() as f64).ln()
}

/// Inputs shared by every reward: column-major features, targets and the
/// target's population statistics.
#[derive(Debug, Clone, Copy)]
pub struct RewardData<'a> {
    pub columns: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub sigma2: f64,
}

impl<'a> RewardData<'a> {
    pub fn new(columns: &'a [Vec<f64>], y: &'a [f64]) -> Result<Self> {
        let (_, sigma2) = mean_var(y);
        if y.len() < 2 || !(sigma2 > 0.0) {
            return Err(Error::DegenerateTarget);
        }
        Ok(Self { columns, y, sigma2 })
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

pub fn bic_reward(expr: &Expression, data: &RewardData, likelihood: Likelihood) -> f64 {
    match expr.evaluate(data.columns) {
        Ok(yhat) => bic_from_predictions(data.y, &yhat, data.sigma2, expr.complexity(), likelihood),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// `eta^n / (1 + RMSE)` with `n` the number of multiplications.
pub fn spl_reward(expr: &Expression, data: &RewardData, eta: f64) -> f64 {
    let n = expr.tree.nodes().iter().filter(|n| n.op == Op::Mul).count();
    match expr.evaluate(data.columns) {
        Ok(yhat) => eta.powi(n as i32) / (1.0 + rmse(data.y, &yhat)),
        Err(_) => 0.0,
    }
}

/// `1 / (1 + NMSE) + lambda * exp(-len / max_len)`.
pub fn tpsr_reward(expr: &Expression, data: &RewardData, lambda: f64, max_len: usize) -> f64 {
    match expr.evaluate(data.columns) {
        Ok(yhat) => {
            let nmse = rmse(data.y, &yhat).powi(2) / data.sigma2;
            1.0 / (1.0 + nmse) + lambda * (-(expr.tree.len() as f64) / max_len as f64).exp()
        }
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardKind {
    Bic(Likelihood),
    Nrmse,
    Spl { eta: f64 },
    Tpsr { lambda: f64, max_len: usize },
}

impl RewardKind {
    pub fn score(&self, expr: &Expression, data: &RewardData) -> f64 {
        match *self {
            RewardKind::Bic(l) => bic_reward(expr, data, l),
            RewardKind::Nrmse => match expr.evaluate(data.columns) {
                Ok(yhat) => 1.0 / (1.0 + rmse(data.y, &yhat) / data.sigma_y()),
                Err(_) => 0.0,
            },
            RewardKind::Spl { eta } => spl_reward(expr, data, eta),
            RewardKind::Tpsr { lambda, max_len } => tpsr_reward(expr, data, lambda, max_len),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RewardKind::Bic(_) => "bic",
            RewardKind::Nrmse => "nrmse",
            RewardKind::Spl { .. } => "spl",
            RewardKind::Tpsr { .. } => "tpsr",
        }
    }
}

/// Number of trajectories the top-`alpha`% of a batch of `b` corresponds to.
pub fn quota(alpha: f64, b: usize) -> f64 {
    alpha * b as f64 / 100.0
}

fn ordered(r: f64) -> f64 {
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

/// For each reward, how many rewards are strictly greater. NaN counts as
/// `-inf`.
pub fn strictly_better_counts(rewards: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = rewards.iter().map(|&r| ordered(r)).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    rewards
        .iter()
        .map(|&r| {
            let r = ordered(r);
            sorted.partition_point(|&s| s > r)
        })
        .collect()
}

/// `lambda * max(0, 1 - c_i / quota)` with `c_i` the strictly-better count.
pub fn rank_map_with_quota(rewards: &[f64], quota: f64, lambda: f64) -> Vec<f64> {
    strictly_better_counts(rewards)
        .into_iter()
        .map(|c| lambda * (1.0 - c as f64 / quota).max(0.0))
        .collect()
}

pub fn rank_map(rewards: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
    rank_map_with_quota(rewards, quota(alpha, rewards.len()), lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord {
    pub index: usize,
    pub raw_reward: f64,
    /// Number of strictly better rewards (0 = best).
    pub rank: usize,
    pub weight: f64,
    pub valid: bool,
}

pub fn reward_records(rewards: &[f64], alpha: f64, lambda: f64) -> Vec<RewardRecord> {
    let counts = strictly_better_counts(rewards);
    let weights = rank_map(rewards, alpha, lambda);
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| RewardRecord {
            index: i,
            raw_reward: ordered(r),
            rank: counts[i],
            weight: weights[i],
            valid: r.is_finite(),
        })
        .collect()
}

/// Linearly interpolated quantile (`q` in `[0, 1]`), NaN treated as `-inf`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v: Vec<f64> = values.iter().map(|&r| ordered(r)).collect();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    // interpolating towards an infinite endpoint stays infinite rather than NaN
    if v[lo] == f64::NEG_INFINITY {
        return v[lo];
    }
    if v[hi] == f64::INFINITY {
        return v[hi];
    }
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Risk-seeking baseline weights `(R_i - R_alpha) * 1[R_i >= R_alpha]`,
/// with `R_alpha` the `(1 - alpha/100)` quantile. Non-finite differences
/// contribute nothing.
pub fn baseline_weights(rewards: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let r_alpha = quantile(rewards, 1.0 - alpha / 100.0);
    let w = rewards
        .iter()
        .map(|&r| {
            let d = r - r_alpha;
            if r >= r_alpha && d.is_finite() {
                d
            } else {
                0.0
            }
        })
        .collect();
    (r_alpha, w)
}

/// Rewards `1e9 + i * 1e-4`, distinct in double precision but too close to
/// survive a single-precision `1 / (1 + z)` mapping.
pub fn tail_barrier_rewards(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1e9 + i as f64 * 1e-4).collect()
}

/// `1 / (1 + z)` evaluated in single precision.
pub fn inverse_map_f32(z: &[f64]) -> Vec<f32> {
    z.iter().map(|&v| 1.0f32 / (1.0f32 + v as f32)).collect()
}
