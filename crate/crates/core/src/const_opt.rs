//! Levenberg–Marquardt fitting of constant-token values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{ExprTree, Expression};

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    /// Maximum number of trial steps (accepted or rejected).
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop when an accepted step lowers the SSE by less than this fraction.
    pub residual_tolerance: f64,
    /// Stop when a step is smaller than this relative to the constants.
    pub parameter_tolerance: f64,
    pub initial_constant: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            initial_damping: 1.0,
            damping_up: 2.0,
            damping_down: 3.0,
            residual_tolerance: 1e-15,
            parameter_tolerance: 1e-12,
            initial_constant: 1.0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_damping,
            self.damping_up,
            self.damping_down,
            self.residual_tolerance,
            self.parameter_tolerance,
        ];
        if self.max_iterations == 0 || positive.iter().any(|v| !(*v > 0.0)) || !self.initial_constant.is_finite() {
            return Err(Error::Config("LM settings must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub constants: Vec<f64>,
    /// Sum of squared residuals at `constants`; infinite when poisoned.
    pub sse: f64,
    pub iterations: usize,
    pub poisoned: bool,
}

fn residuals(expr: &Expression, columns: &[Vec<f64>], y: &[f64], c: &[f64]) -> Option<Vec<f64>> {
    let yhat = expr.evaluate_with(columns, c).ok()?;
    Some(yhat.iter().zip(y).map(|(p, t)| p - t).collect())
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian(expr: &Expression, columns: &[Vec<f64>], y: &[f64], c: &[f64]) -> Option<DMatrix<f64>> {
    let mut j = DMatrix::zeros(y.len(), c.len());
    let mut probe = c.to_vec();
    for k in 0..c.len() {
        let h = 1e-6 * (1.0 + c[k].abs());
        probe[k] = c[k] + h;
        let plus = residuals(expr, columns, y, &probe)?;
        probe[k] = c[k] - h;
        let minus = residuals(expr, columns, y, &probe)?;
        probe[k] = c[k];
        for s in 0..y.len() {
            j[(s, k)] = (plus[s] - minus[s]) / (2.0 * h);
        }
    }
    Some(j)
}

/// Minimises `sum (y - expr(x; c))^2` over the constants, starting from the
/// expression's current values.
pub fn fit_constants(expr: &Expression, columns: &[Vec<f64>], y: &[f64], config: &LmConfig) -> LmFit {
    let mut c = expr.constants.clone();
    let Some(mut r) = residuals(expr, columns, y, &c) else {
        return LmFit { constants: c, sse: f64::INFINITY, iterations: 0, poisoned: true };
    };
    let mut current = sse(&r);
    if c.is_empty() {
        return LmFit { constants: c, sse: current, iterations: 0, poisoned: false };
    }

    let mut mu = config.initial_damping;
    let mut iterations = 0;
    let mut jac: Option<(DMatrix<f64>, DVector<f64>)> = None;
    while iterations < config.max_iterations && current > 0.0 {
        if jac.is_none() {
            let Some(j) = jacobian(expr, columns, y, &c) else { break };
            let a = j.transpose() * &j;
            let g = j.transpose() * DVector::from_column_slice(&r);
            jac = Some((a, g));
        }
        let (a, g) = jac.as_ref().unwrap();
        iterations += 1;

        let mut damped = a.clone();
        for k in 0..c.len() {
            damped[(k, k)] += mu * a[(k, k)].max(1e-12);
        }
        let step = damped.lu().solve(&(-g));
        let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
            mu *= config.damping_up;
            continue;
        };
        let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(ci, si)| ci + si).collect();
        let trial_r = residuals(expr, columns, y, &trial);
        match trial_r.map(|tr| (sse(&tr), tr)) {
            Some((s, tr)) if s < current => {
                let improvement = current - s;
                let step_norm = step.norm();
                let scale = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                c = trial;
                r = tr;
                current = s;
                mu /= config.damping_down;
                jac = None;
                if improvement <= config.residual_tolerance * (s + improvement)
                    || step_norm <= config.parameter_tolerance * (scale + config.parameter_tolerance)
                {
                    break;
                }
            }
            _ => mu *= config.damping_up,
        }
    }
    LmFit { constants: c, sse: current, iterations, poisoned: false }
}

/// Fits a bare tree from the configured initial constant value.
pub fn fit_tree(tree: &ExprTree, columns: &[Vec<f64>], y: &[f64], config: &LmConfig) -> (Expression, LmFit) {
    let mut expr = Expression::with_constant_init(tree.clone(), config.initial_constant);
    let fit = fit_constants(&expr, columns, y, config);
    expr.constants.clone_from(&fit.constants);
    (expr, fit)
}
