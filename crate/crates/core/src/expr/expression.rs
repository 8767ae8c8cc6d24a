//! Expressions (trees plus fitted constants), evaluation and complexity.

use std::fmt;

use super::token::Op;
use super::tree::ExprTree;
use crate::error::Error;

/// A complete or partial tree together with one value per constant token,
/// in BFS order.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub tree: ExprTree,
    pub constants: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    /// Tree still has open slots.
    Incomplete,
    /// A variable index exceeds the number of input columns.
    MissingVariable(usize),
    /// A domain violation or overflow produced a non-finite value.
    Poisoned,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Incomplete => f.write_str("expression is incomplete"),
            EvalError::MissingVariable(i) => write!(f, "variable x{} has no input column", i + 1),
            EvalError::Poisoned => f.write_str("evaluation produced a non-finite value"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        Error::Usage(e.to_string())
    }
}

impl Expression {
    /// Wraps a tree, initialising every constant to `init`.
    pub fn with_constant_init(tree: ExprTree, init: f64) -> Self {
        let constants = vec![init; tree.constant_count()];
        Self { tree, constants }
    }

    pub fn new(tree: ExprTree, constants: Vec<f64>) -> Result<Self, Error> {
        if constants.len() != tree.constant_count() {
            return Err(Error::Usage(format!(
                "{} constants supplied for {} constant tokens",
                constants.len(),
                tree.constant_count()
            )));
        }
        if constants.iter().any(|c| !c.is_finite()) {
            return Err(Error::Usage("constants must be finite".into()));
        }
        Ok(Self { tree, constants })
    }

    /// Node count plus constant-token count.
    pub fn complexity(&self) -> usize {
        self.tree.len() + self.tree.constant_count()
    }

    /// Evaluates on column-major inputs (`columns[v][s]`). Any non-finite
    /// intermediate poisons the whole expression.
    pub fn evaluate(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
        let out = self.evaluate_raw(columns, &self.constants)?;
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(EvalError::Poisoned)
        }
    }

    /// Same as [`evaluate`](Self::evaluate) with substitute constant values.
    pub fn evaluate_with(&self, columns: &[Vec<f64>], constants: &[f64]) -> Result<Vec<f64>, EvalError> {
        let out = self.evaluate_raw(columns, constants)?;
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(EvalError::Poisoned)
        }
    }

    /// Row-wise evaluation where poisoned rows come back as NaN instead of
    /// failing the whole call.
    pub fn evaluate_rows(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
        let mut out = self.evaluate_raw(columns, &self.constants)?;
        for v in &mut out {
            if !v.is_finite() {
                *v = f64::NAN;
            }
        }
        Ok(out)
    }

    fn evaluate_raw(&self, columns: &[Vec<f64>], constants: &[f64]) -> Result<Vec<f64>, EvalError> {
        let tree = &self.tree;
        if !tree.is_complete() {
            return Err(EvalError::Incomplete);
        }
        assert_eq!(constants.len(), tree.constant_count(), "constant count mismatch");
        let rows = columns.first().map_or(0, Vec::len);
        let nodes = tree.nodes();

        let mut const_index = vec![0usize; nodes.len()];
        let mut next = 0;
        for (i, n) in nodes.iter().enumerate() {
            if n.op == Op::Const {
                const_index[i] = next;
                next += 1;
            }
        }

        let mut values: Vec<Vec<f64>> = vec![Vec::new(); nodes.len()];
        for i in (0..nodes.len()).rev() {
            let op = nodes[i].op;
            let v = match op {
                Op::Var(k) => columns
                    .get(k)
                    .ok_or(EvalError::MissingVariable(k))?
                    .clone(),
                Op::Const => vec![constants[const_index[i]]; rows],
                Op::One => vec![1.0; rows],
                _ if op.arity() == 1 => {
                    let c = tree.child(i, 0).expect("complete tree");
                    let mut a = std::mem::take(&mut values[c]);
                    for x in &mut a {
                        *x = op.apply_unary(*x);
                    }
                    a
                }
                _ => {
                    let l = tree.child(i, 0).expect("complete tree");
                    let r = tree.child(i, 1).expect("complete tree");
                    let b = std::mem::take(&mut values[r]);
                    let mut a = std::mem::take(&mut values[l]);
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x = op.apply_binary(*x, *y);
                    }
                    a
                }
            };
            values[i] = v;
        }
        Ok(std::mem::take(&mut values[0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::infix::parse_infix;
    use crate::expr::token::TokenLibrary;

    fn expr(s: &str) -> Expression {
        parse_infix(s, &TokenLibrary::full(2)).unwrap()
    }

    #[test]
    fn sum_with_sine() {
        let e = expr("x1 + sin(x2)");
        assert_eq!(e.evaluate(&[vec![1.0], vec![0.0]]).unwrap(), vec![1.0]);
    }

    #[test]
    fn constant_times_variable() {
        let mut e = expr("c*x1");
        e.constants = vec![2.5];
        assert_eq!(e.evaluate(&[vec![2.0]]).unwrap(), vec![5.0]);
    }

    #[test]
    fn poisoned_results() {
        assert_eq!(expr("1/x1").evaluate(&[vec![0.0]]), Err(EvalError::Poisoned));
        assert_eq!(expr("log(x1)").evaluate(&[vec![-1.0]]), Err(EvalError::Poisoned));
        assert_eq!(expr("sqrt(x1)").evaluate(&[vec![-1.0]]), Err(EvalError::Poisoned));
        assert_eq!(expr("x1^x2").evaluate(&[vec![0.0], vec![-1.0]]), Err(EvalError::Poisoned));
        assert_eq!(expr("x1^x2").evaluate(&[vec![-8.0], vec![0.5]]), Err(EvalError::Poisoned));
        assert_eq!(expr("exp(exp(x1))").evaluate(&[vec![10.0]]), Err(EvalError::Poisoned));
        // negative base with integral exponent stays real
        assert_eq!(expr("x1^x2").evaluate(&[vec![-2.0], vec![3.0]]).unwrap(), vec![-8.0]);
        let rows = expr("1/x1").evaluate_rows(&[vec![0.0, 2.0]]).unwrap();
        assert!(rows[0].is_nan() && rows[1] == 0.5);
    }

    #[test]
    fn incomplete_and_missing_variable() {
        let lib = TokenLibrary::full(2);
        let tree = ExprTree::from_tokens(&[lib.lookup("+").unwrap()], &lib).unwrap();
        let e = Expression::with_constant_init(tree, 1.0);
        assert_eq!(e.evaluate(&[vec![1.0]]), Err(EvalError::Incomplete));
        assert_eq!(expr("x2").evaluate(&[vec![1.0]]), Err(EvalError::MissingVariable(1)));
    }

    #[test]
    fn complexity_counts_constants() {
        assert_eq!(expr("x1").complexity(), 1);
        assert_eq!(expr("c*x1").complexity(), 4);
        // six nodes plus one constant
        assert_eq!(expr("x1^c + sin(x2)").complexity(), 7);
        assert_eq!(expr("x1*x1 + x1").complexity(), 5);
    }

    #[test]
    fn evaluation_is_bitwise_pure() {
        let mut e = expr("sin(c*x1)/(x2 + exp(x1)) - x1^c");
        e.constants = vec![1.7, 0.3];
        let cols = vec![
            (0..50).map(|i| i as f64 * 0.13).collect::<Vec<_>>(),
            (0..50).map(|i| 1.0 + i as f64 * 0.07).collect::<Vec<_>>(),
        ];
        let a = e.evaluate(&cols).unwrap();
        let b = e.evaluate(&cols).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
