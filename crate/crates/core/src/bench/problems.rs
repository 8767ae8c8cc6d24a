//! Named benchmark targets and synthetic data generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::expr::{parse_infix, Domain, Expression, TokenLibrary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub name: &'static str,
    pub expression: &'static str,
    pub variables: usize,
    pub low: f64,
    pub high: f64,
}

const fn p(name: &'static str, expression: &'static str, variables: usize, low: f64, high: f64) -> Problem {
    Problem { name, expression, variables, low, high }
}

pub const REGISTRY: &[Problem] = &[
    p("quad", "x1*x1 + x1", 1, -1.0, 1.0),
    p("sincos", "sin(x1) + cos(x1)", 1, -1.0, 1.0),
    p("linear", "2.5*x1 + 1", 1, -1.0, 1.0),
    p("nguyen1", "x1*x1*x1 + x1*x1 + x1", 1, -1.0, 1.0),
    p("nguyen2", "x1^4 + x1^3 + x1^2 + x1", 1, -1.0, 1.0),
    p("nguyen3", "x1^5 + x1^4 + x1^3 + x1^2 + x1", 1, -1.0, 1.0),
    p("nguyen4", "x1^6 + x1^5 + x1^4 + x1^3 + x1^2 + x1", 1, -1.0, 1.0),
    p("nguyen5", "sin(x1*x1)*cos(x1) - 1", 1, -1.0, 1.0),
    p("nguyen6", "sin(x1) + sin(x1 + x1*x1)", 1, -1.0, 1.0),
    p("nguyen7", "log(x1 + 1) + log(x1*x1 + 1)", 1, 0.0, 2.0),
    p("nguyen8", "sqrt(x1)", 1, 0.0, 4.0),
    p("nguyen9", "sin(x1) + sin(x2*x2)", 2, -1.0, 1.0),
    p("nguyen10", "2*sin(x1)*cos(x2)", 2, -1.0, 1.0),
    p("nguyen11", "x1^x2", 2, 0.0, 1.0),
    p("nguyen12", "x1^4 - x1^3 + 0.5*x2*x2 - x2", 2, -1.0, 1.0),
];

pub fn problem(name: &str) -> Option<Problem> {
    REGISTRY.iter().copied().find(|p| p.name == name)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl Problem {
    pub fn truth(&self) -> Expression {
        parse_infix(self.expression, &TokenLibrary::full(self.variables)).expect("registry expressions parse")
    }

    pub fn domain(&self) -> Domain {
        Domain::uniform(self.variables, self.low, self.high)
    }

    /// `train + test` uniform points; the first `train` rows are the
    /// training split. Depends only on the problem name and `seed`.
    pub fn generate(&self, train: usize, test: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(self.name));
        let n = train + test;
        let x: Vec<Vec<f64>> = (0..self.variables)
            .map(|_| (0..n).map(|_| rng.gen_range(self.low..self.high)).collect())
            .collect();
        let y = self
            .truth()
            .evaluate(&x)
            .map_err(|e| Error::Data { line: 0, message: format!("problem `{}`: {e}", self.name) })?;
        Ok(Dataset::new(self.name, x, y)?.split_at(train))
    }
}
