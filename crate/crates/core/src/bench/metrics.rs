//! Fit metrics and the symbolic-solution oracle.

use crate::const_opt::{fit_constants, LmConfig};
use crate::error::{Error, Result};
use crate::expr::{numeric_equiv, Domain, Expression};
use crate::rewards::mean_var;

/// `1 - SSE / SST`.
pub fn r2_score(y: &[f64], yhat: &[f64]) -> Result<f64> {
    assert_eq!(y.len(), yhat.len());
    if y.len() < 2 {
        return Err(Error::DegenerateTarget);
    }
    let (mean, _) = mean_var(y);
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// R² of an expression on column-major data; poisoned evaluations give
/// `None`.
pub fn expression_r2(expr: &Expression, columns: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let yhat = expr.evaluate(columns).ok()?;
    r2_score(y, &yhat).ok().filter(|v| v.is_finite())
}

pub const SOLUTION_POINTS: usize = 256;

/// True when `candidate`, with its constants refitted against noise-free
/// values of `truth` on `domain`, is numerically equivalent to `truth`.
pub fn solution_check(candidate: &Expression, truth: &Expression, domain: &Domain) -> bool {
    let columns = domain.halton_columns(SOLUTION_POINTS);
    let Ok(target) = truth.evaluate(&columns) else { return false };
    let mut refit = candidate.clone();
    if !refit.constants.is_empty() {
        let lm = LmConfig { max_iterations: 200, ..LmConfig::default() };
        let fit = fit_constants(candidate, &columns, &target, &lm);
        if fit.poisoned {
            return false;
        }
        refit.constants = fit.constants;
    }
    numeric_equiv(&refit, truth, domain, SOLUTION_POINTS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_infix, TokenLibrary};

    fn e(s: &str) -> Expression {
        parse_infix(s, &TokenLibrary::full(1)).unwrap()
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(r2_score(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(r2_score(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert!(r2_score(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn solution_check_cases() {
        let d = Domain::uniform(1, -1.0, 1.0);
        assert!(solution_check(&e("x1 * (1 + x1)"), &e("x1*x1 + x1"), &d));
        // literal constants are refitted, so an offset only counts when it is structural
        assert!(!numeric_equiv(&e("x1*x1 + x1 + 0.01"), &e("x1*x1 + x1"), &d, 64));
        assert!(!solution_check(&e("x1*x1 + x1 + 1"), &e("x1*x1 + x1"), &d));
        assert!(solution_check(&e("x1*x1 + x1 + 0.01"), &e("x1*x1 + x1 + 2"), &d));
        // planted constants recovered by the refit
        assert!(solution_check(&e("c * x1 + c"), &e("2.5*x1 + 1"), &d));
        assert!(!solution_check(&e("x1 + cos(x1)"), &e("sin(x1) + cos(x1)"), &d));
    }
}
