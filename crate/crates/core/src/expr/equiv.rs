//! Numeric equivalence of two expressions over a box domain.

use super::expression::{EvalError, Expression};

/// Axis-aligned sampling box, one `(low, high)` per input variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self { bounds }
    }

    pub fn uniform(variables: usize, low: f64, high: f64) -> Self {
        Self {
            bounds: vec![(low, high); variables],
        }
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    /// Halton points mapped into the box, returned column-major.
    pub fn halton_columns(&self, n_points: usize) -> Vec<Vec<f64>> {
        const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
        self.bounds
            .iter()
            .enumerate()
            .map(|(d, &(lo, hi))| {
                let base = PRIMES[d % PRIMES.len()];
                (1..=n_points as u64)
                    .map(|i| lo + (hi - lo) * radical_inverse(i, base))
                    .collect()
            })
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Relative tolerance on the max absolute deviation.
pub const EQUIV_TOLERANCE: f64 = 1e-9;
/// Fraction of points allowed to be poisoned before giving up.
pub const MAX_POISONED_FRACTION: f64 = 0.10;

/// True when the two expressions agree on `n_points` quasi-random points of
/// `domain`: the max absolute deviation must not exceed
/// `1e-9 * (1 + max |target|)`. Points where either side is poisoned are
/// skipped; more than 10% skipped points means not equivalent.
pub fn numeric_equiv(candidate: &Expression, target: &Expression, domain: &Domain, n_points: usize) -> bool {
    if n_points == 0 {
        return false;
    }
    let columns = domain.halton_columns(n_points);
    let (cand, targ) = match (candidate.evaluate_rows(&columns), target.evaluate_rows(&columns)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(EvalError::Poisoned), _) | (_, Err(EvalError::Poisoned)) => return false,
        _ => return false,
    };
    let mut poisoned = 0usize;
    let mut max_dev = 0f64;
    let mut max_target = 0f64;
    for (a, b) in cand.iter().zip(&targ) {
        if !a.is_finite() || !b.is_finite() {
            poisoned += 1;
            continue;
        }
        max_dev = max_dev.max((a - b).abs());
        max_target = max_target.max(b.abs());
    }
    if poisoned as f64 > MAX_POISONED_FRACTION * n_points as f64 || poisoned == n_points {
        return false;
    }
    max_dev <= EQUIV_TOLERANCE * (1.0 + max_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::infix::parse_infix;
    use crate::expr::token::TokenLibrary;

    fn e(s: &str) -> Expression {
        parse_infix(s, &TokenLibrary::full(1)).unwrap()
    }

    #[test]
    fn algebraic_identity() {
        let d = Domain::uniform(1, -2.0, 2.0);
        assert!(numeric_equiv(&e("x1 + x1"), &e("2*x1"), &d, 200));
    }

    #[test]
    fn small_offset_detected() {
        let d = Domain::uniform(1, -2.0, 2.0);
        assert!(!numeric_equiv(&e("x1^2"), &e("x1^2 + 0.001"), &d, 200));
    }

    #[test]
    fn double_angle() {
        let d = Domain::uniform(1, -3.0, 3.0);
        assert!(numeric_equiv(&e("sin(x1)*cos(x1)"), &e("sin(2*x1)/2"), &d, 500));
    }

    #[test]
    fn heavy_poisoning_is_not_equivalent() {
        let d = Domain::uniform(1, -1.0, 1.0);
        assert!(!numeric_equiv(&e("sqrt(x1)^2"), &e("x1"), &d, 100));
        let positive = Domain::uniform(1, 0.5, 2.0);
        assert!(numeric_equiv(&e("sqrt(x1)^2"), &e("x1"), &positive, 100));
    }

    #[test]
    fn halton_points_in_box() {
        let d = Domain::new(vec![(0.0, 1.0), (-5.0, -4.0)]);
        let cols = d.halton_columns(64);
        assert!(cols[0].iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!(cols[1].iter().all(|&v| (-5.0..-4.0).contains(&v)));
        assert_eq!(cols[0][0], 0.5);
    }
}
