//! Infix text format.
//!
//! Binary operators use the usual precedence (`+ -` < `* /` < `^`, with `^`
//! right-associative). Parentheses are emitted whenever the tree structure
//! would otherwise be lost, so parsing the printed form yields the same tree.
//! Fitted constants print with 17 significant digits; an unfitted constant
//! prints as `c`, and the integer literal `1` denotes the literal-one token.

use super::expression::Expression;
use super::token::{Op, TokenLibrary};
use super::tree::ExprTree;
use crate::error::{Error, Result};

/// Default value given to `c` placeholders by the parser.
pub const PLACEHOLDER_INIT: f64 = 1.0;

fn precedence(op: Op) -> u8 {
    match op {
        Op::Add | Op::Sub => 1,
        Op::Mul | Op::Div => 2,
        Op::Pow => 3,
        _ => 4,
    }
}

/// Formats a constant with 17 significant digits. The output always contains
/// a decimal point so it never collides with the literal `1`.
pub fn format_constant(v: f64) -> String {
    let sci = format!("{:.16e}", v);
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let body = if (-4..16).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, v)
    } else {
        sci
    };
    if v < 0.0 {
        format!("({body})")
    } else {
        body
    }
}

impl ExprTree {
    /// Structure-only rendering; constants print as `c`.
    pub fn to_infix(&self) -> String {
        render(self, None)
    }
}

impl Expression {
    pub fn to_infix(&self) -> String {
        render(&self.tree, Some(&self.constants))
    }
}

pub fn to_infix(expr: &Expression) -> String {
    expr.to_infix()
}

fn render(tree: &ExprTree, constants: Option<&[f64]>) -> String {
    if tree.is_empty() {
        return String::new();
    }
    let mut const_slot = vec![usize::MAX; tree.len()];
    let mut k = 0;
    for (i, n) in tree.nodes().iter().enumerate() {
        if n.op == Op::Const {
            const_slot[i] = k;
            k += 1;
        }
    }
    let mut out = String::new();
    write_node(tree, 0, constants, &const_slot, &mut out);
    out
}

fn write_node(tree: &ExprTree, i: usize, constants: Option<&[f64]>, slots: &[usize], out: &mut String) {
    let op = tree.nodes()[i].op;
    let child = |k| tree.child(i, k);
    match op.arity() {
        0 => match op {
            Op::Const => match constants {
                Some(c) => out.push_str(&format_constant(c[slots[i]])),
                None => out.push('c'),
            },
            _ => out.push_str(&op.symbol()),
        },
        1 => {
            out.push_str(&op.symbol());
            out.push('(');
            match child(0) {
                Some(c) => write_node(tree, c, constants, slots, out),
                None => out.push('?'),
            }
            out.push(')');
        }
        _ => {
            let p = precedence(op);
            let right_assoc = op == Op::Pow;
            for k in 0..2 {
                if k == 1 {
                    match op {
                        Op::Add | Op::Sub => {
                            out.push(' ');
                            out.push_str(&op.symbol());
                            out.push(' ');
                        }
                        _ => out.push_str(&op.symbol()),
                    }
                }
                let Some(c) = child(k) else {
                    out.push('?');
                    continue;
                };
                let cp = precedence(tree.nodes()[c].op);
                let needs_parens = if right_assoc {
                    if k == 0 { cp <= p } else { cp < p }
                } else if k == 0 {
                    cp < p
                } else {
                    cp <= p
                };
                if needs_parens {
                    out.push('(');
                    write_node(tree, c, constants, slots, out);
                    out.push(')');
                } else {
                    write_node(tree, c, constants, slots, out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Number(f64, bool),
    Ident(String),
    Sym(char),
}

fn lex(input: &str) -> Result<Vec<(usize, Lexeme)>> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &input[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                position: start,
                message: format!("bad number `{text}`"),
            })?;
            let integer_one = text == "1";
            out.push((start, Lexeme::Number(value, integer_one)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Lexeme::Ident(input[start..i].to_string())));
        } else if c == '*' && bytes.get(i + 1) == Some(&b'*') {
            out.push((i, Lexeme::Sym('^')));
            i += 2;
        } else if "+-*/^()".contains(c) {
            out.push((i, Lexeme::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Parse {
                position: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

/// Parsed syntax before conversion to BFS order.
#[derive(Debug)]
enum Ast {
    Leaf(Op, Option<f64>),
    Unary(Op, Box<Ast>),
    Binary(Op, Box<Ast>, Box<Ast>),
}

struct Parser<'a> {
    lexemes: Vec<(usize, Lexeme)>,
    pos: usize,
    end: usize,
    library: &'a TokenLibrary,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Lexeme> {
        self.lexemes.get(self.pos).map(|(_, l)| l)
    }

    fn offset(&self) -> usize {
        self.lexemes.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn require(&self, op: Op) -> Result<()> {
        if self.library.id_of(op).is_none() {
            return self.error(format!("token `{op}` is not in the library"));
        }
        Ok(())
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Lexeme::Sym(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        while let Some(Lexeme::Sym(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { Op::Add } else { Op::Sub };
            self.require(op)?;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.power()?;
        while let Some(Lexeme::Sym(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { Op::Mul } else { Op::Div };
            self.require(op)?;
            self.pos += 1;
            let rhs = self.power()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.primary()?;
        if self.peek() == Some(&Lexeme::Sym('^')) {
            self.require(Op::Pow)?;
            self.pos += 1;
            let exponent = self.power()?;
            return Ok(Ast::Binary(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn number(&mut self, value: f64, integer_one: bool) -> Result<Ast> {
        if integer_one && self.library.id_of(Op::One).is_some() {
            return Ok(Ast::Leaf(Op::One, None));
        }
        self.require(Op::Const)?;
        Ok(Ast::Leaf(Op::Const, Some(value)))
    }

    fn primary(&mut self) -> Result<Ast> {
        let Some(lexeme) = self.peek().cloned() else {
            return self.error("unexpected end of input");
        };
        match lexeme {
            Lexeme::Number(v, one) => {
                let ast = self.number(v, one)?;
                self.pos += 1;
                Ok(ast)
            }
            Lexeme::Sym('-') => {
                self.pos += 1;
                match self.peek().cloned() {
                    Some(Lexeme::Number(v, _)) => {
                        let ast = self.number(-v, false)?;
                        self.pos += 1;
                        Ok(ast)
                    }
                    _ => self.error("negation is only supported on numeric literals"),
                }
            }
            Lexeme::Sym('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Lexeme::Ident(name) => {
                let Some(op) = Op::from_symbol(&name) else {
                    return self.error(format!("unknown identifier `{name}`"));
                };
                self.require(op)?;
                match op.arity() {
                    0 => {
                        self.pos += 1;
                        if op == Op::Const {
                            Ok(Ast::Leaf(op, Some(PLACEHOLDER_INIT)))
                        } else {
                            Ok(Ast::Leaf(op, None))
                        }
                    }
                    1 => {
                        self.pos += 1;
                        self.expect('(')?;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        Ok(Ast::Unary(op, Box::new(arg)))
                    }
                    _ => self.error(format!("`{name}` is a binary operator")),
                }
            }
            Lexeme::Sym(c) => self.error(format!("unexpected `{c}`")),
        }
    }
}

/// Parses an infix string into an expression over `library`.
pub fn parse_infix(input: &str, library: &TokenLibrary) -> Result<Expression> {
    let lexemes = lex(input)?;
    let mut parser = Parser {
        lexemes,
        pos: 0,
        end: input.len(),
        library,
    };
    let ast = parser.expr()?;
    if parser.pos != parser.lexemes.len() {
        return parser.error("trailing input");
    }

    // Flatten to BFS order.
    let mut items = Vec::new();
    let mut constants = Vec::new();
    let mut queue = std::collections::VecDeque::from([&ast]);
    while let Some(node) = queue.pop_front() {
        let op = match node {
            Ast::Leaf(op, value) => {
                if let Some(v) = value {
                    constants.push(*v);
                }
                *op
            }
            Ast::Unary(op, a) => {
                queue.push_back(a);
                *op
            }
            Ast::Binary(op, a, b) => {
                queue.push_back(a);
                queue.push_back(b);
                *op
            }
        };
        let id = library.id_of(op).expect("checked during parsing");
        items.push((id, op));
    }
    let tree = ExprTree::from_ops(&items)?;
    Expression::new(tree, constants)
}
