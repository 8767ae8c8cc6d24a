//! Expression trees: tokens, BFS layout, positions, evaluation, text format.

pub mod equiv;
pub mod expression;
pub mod infix;
pub mod position;
pub mod token;
pub mod tree;

pub use equiv::{numeric_equiv, Domain};
pub use expression::{EvalError, Expression};
pub use infix::{parse_infix, to_infix};
pub use position::dpe_encode;
pub use token::{Op, Token, TokenKind, TokenLibrary};
pub use tree::{assign_positions, ChildSlot, ExprTree, Node, Position, TreeBuilder};
