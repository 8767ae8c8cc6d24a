//! Token vocabulary: operators, variables, the constant placeholder and the literal one.

use std::fmt;

use crate::error::{Error, Result};

/// Operator semantics carried by a token. Stored directly in tree nodes so an
/// expression can be evaluated without its originating library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sin,
    Cos,
    Tan,
    Log,
    Exp,
    Sqrt,
    Square,
    Var(usize),
    Const,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Binary,
    Unary,
    Variable,
    Constant,
    LiteralOne,
}

impl Op {
    pub fn kind(self) -> TokenKind {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => TokenKind::Binary,
            Op::Sin | Op::Cos | Op::Tan | Op::Log | Op::Exp | Op::Sqrt | Op::Square => {
                TokenKind::Unary
            }
            Op::Var(_) => TokenKind::Variable,
            Op::Const => TokenKind::Constant,
            Op::One => TokenKind::LiteralOne,
        }
    }

    pub fn arity(self) -> usize {
        match self.kind() {
            TokenKind::Binary => 2,
            TokenKind::Unary => 1,
            _ => 0,
        }
    }

    /// True for leaves that carry no input dependence (`c` and `1`).
    pub fn is_constant_kind(self) -> bool {
        matches!(self, Op::Const | Op::One)
    }

    pub fn symbol(self) -> String {
        match self {
            Op::Add => "+".into(),
            Op::Sub => "-".into(),
            Op::Mul => "*".into(),
            Op::Div => "/".into(),
            Op::Pow => "^".into(),
            Op::Sin => "sin".into(),
            Op::Cos => "cos".into(),
            Op::Tan => "tan".into(),
            Op::Log => "log".into(),
            Op::Exp => "exp".into(),
            Op::Sqrt => "sqrt".into(),
            Op::Square => "square".into(),
            Op::Var(i) => format!("x{}", i + 1),
            Op::Const => "c".into(),
            Op::One => "1".into(),
        }
    }

    /// Parses a symbol as written in config files and infix strings.
    /// Accepts a few aliases (`mul`, `pow`, `**`, ...).
    pub fn from_symbol(s: &str) -> Option<Op> {
        let op = match s.trim() {
            "+" | "add" => Op::Add,
            "-" | "sub" => Op::Sub,
            "*" | "mul" => Op::Mul,
            "/" | "div" => Op::Div,
            "^" | "**" | "pow" => Op::Pow,
            "sin" => Op::Sin,
            "cos" => Op::Cos,
            "tan" => Op::Tan,
            "log" | "ln" => Op::Log,
            "exp" => Op::Exp,
            "sqrt" => Op::Sqrt,
            "square" | "sq" => Op::Square,
            "c" | "const" => Op::Const,
            "1" | "one" => Op::One,
            other => {
                let idx = other.strip_prefix('x')?.parse::<usize>().ok()?;
                if idx == 0 {
                    return None;
                }
                Op::Var(idx - 1)
            }
        };
        Some(op)
    }

    /// Inverse of `self` when applied directly to its own output (`log(exp(.))`).
    pub fn inverse(self) -> Option<Op> {
        match self {
            Op::Log => Some(Op::Exp),
            Op::Exp => Some(Op::Log),
            Op::Sqrt => Some(Op::Square),
            Op::Square => Some(Op::Sqrt),
            _ => None,
        }
    }

    #[inline]
    pub fn apply_unary(self, a: f64) -> f64 {
        match self {
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Tan => a.tan(),
            Op::Log => a.ln(),
            Op::Exp => a.exp(),
            Op::Sqrt => a.sqrt(),
            Op::Square => a * a,
            _ => unreachable!("{self:?} is not unary"),
        }
    }

    /// Binary application. Domain violations come back non-finite and the
    /// caller treats them as poison.
    #[inline]
    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
            Op::Pow => a.powf(b),
            _ => unreachable!("{self:?} is not binary"),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub id: usize,
    pub kind: TokenKind,
    pub arity: usize,
    pub symbol: String,
    pub op: Op,
}

/// Ordered vocabulary used by the generator. Ids are dense indices into `tokens`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLibrary {
    tokens: Vec<Token>,
    variable_count: usize,
}

impl TokenLibrary {
    /// Builds a library from an ordered operator list.
    ///
    /// Operator-free libraries are accepted; every tree they can produce is a
    /// single leaf.
    pub fn new(ops: &[Op], variable_count: usize) -> Result<Self> {
        let mut tokens = Vec::with_capacity(ops.len());
        for (id, &op) in ops.iter().enumerate() {
            if tokens.iter().any(|t: &Token| t.op == op) {
                return Err(Error::Library(format!("duplicate token `{op}`")));
            }
            if let Op::Var(i) = op {
                if i >= variable_count {
                    return Err(Error::Library(format!(
                        "variable x{} exceeds variable count {variable_count}",
                        i + 1
                    )));
                }
            }
            tokens.push(Token {
                id,
                kind: op.kind(),
                arity: op.arity(),
                symbol: op.symbol(),
                op,
            });
        }
        if !tokens.iter().any(|t| t.kind == TokenKind::Variable) {
            return Err(Error::Library("library has no variable token".into()));
        }
        if tokens.len() > 64 {
            return Err(Error::Library("at most 64 tokens are supported".into()));
        }
        Ok(Self {
            tokens,
            variable_count,
        })
    }

    /// Library from symbol names, e.g. `["+", "*", "sin", "x1", "c"]`.
    pub fn from_symbols<S: AsRef<str>>(symbols: &[S], variable_count: usize) -> Result<Self> {
        let ops = symbols
            .iter()
            .map(|s| {
                Op::from_symbol(s.as_ref())
                    .ok_or_else(|| Error::Library(format!("unknown token `{}`", s.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&ops, variable_count)
    }

    /// Binary operators, then unary, then `x1..xV`, then optional `c` and `1`.
    pub fn standard(
        binary: &[Op],
        unary: &[Op],
        variable_count: usize,
        constant: bool,
        one: bool,
    ) -> Result<Self> {
        let mut ops: Vec<Op> = binary.iter().chain(unary).copied().collect();
        ops.extend((0..variable_count).map(Op::Var));
        if constant {
            ops.push(Op::Const);
        }
        if one {
            ops.push(Op::One);
        }
        Self::new(&ops, variable_count)
    }

    /// Every supported token; used for parsing reference expressions.
    pub fn full(variable_count: usize) -> Self {
        use Op::*;
        Self::standard(
            &[Add, Sub, Mul, Div, Pow],
            &[Sin, Cos, Tan, Log, Exp, Sqrt, Square],
            variable_count,
            true,
            true,
        )
        .expect("full library is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn variable_count(&self) -> usize {
        self.variable_count
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &Token {
        &self.tokens[id]
    }

    pub fn op(&self, id: usize) -> Op {
        self.tokens[id].op
    }

    pub fn id_of(&self, op: Op) -> Option<usize> {
        self.tokens.iter().position(|t| t.op == op)
    }

    pub fn lookup(&self, symbol: &str) -> Option<usize> {
        Op::from_symbol(symbol).and_then(|op| self.id_of(op))
    }

    pub fn has_operators(&self) -> bool {
        self.tokens.iter().any(|t| t.arity > 0)
    }
}
