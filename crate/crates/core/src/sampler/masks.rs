//! Constraint masks applied to the next-token distribution.

use crate::error::{Error, Result};
use crate::expr::token::{Op, TokenLibrary};
use crate::expr::tree::{ExprTree, TreeBuilder};

/// Bitset over token ids (libraries hold at most 64 tokens).
pub type TokenMask = u64;

/// Individually switchable constraint rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskRules {
    /// The root must be an operator, so every tree has at least two nodes.
    pub min_size: bool,
    /// A unary operator may not be the direct child of the same operator.
    pub no_self_nesting: bool,
    /// `log`/`exp` and `square`/`sqrt` may not be stacked directly.
    pub no_inverse_pairs: bool,
    /// An operator may not have only constant-kind (`c`, `1`) children.
    pub no_constant_only_children: bool,
    /// Close the tree with leaves once the remaining node budget equals the
    /// number of open slots.
    pub node_budget: bool,
}

impl Default for MaskRules {
    fn default() -> Self {
        Self {
            min_size: true,
            no_self_nesting: true,
            no_inverse_pairs: true,
            no_constant_only_children: true,
            node_budget: true,
        }
    }
}

impl MaskRules {
    pub fn none() -> Self {
        Self {
            min_size: false,
            no_self_nesting: false,
            no_inverse_pairs: false,
            no_constant_only_children: false,
            node_budget: false,
        }
    }
}

/// Everything the rules look at for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeContext {
    pub node: usize,
    pub parent: Option<Op>,
    /// Left sibling when the slot is a right child.
    pub sibling: Option<Op>,
    pub depth: u32,
    /// Nodes already generated.
    pub generated: usize,
    /// Open slots, including this one.
    pub open_slots: usize,
    pub budget: usize,
}

impl NodeContext {
    pub fn from_builder(builder: &TreeBuilder, library: &TokenLibrary, budget: usize) -> Self {
        let parent = builder.next_slot().map(|(p, _)| builder.nodes()[p].op);
        Self {
            node: builder.len(),
            parent,
            sibling: builder.next_sibling().map(|t| library.op(t)),
            depth: builder.next_position().depth,
            generated: builder.len(),
            open_slots: builder.open_slots(),
            budget,
        }
    }

    /// Largest arity that still lets the tree close within the budget.
    pub fn max_arity(&self) -> usize {
        self.budget.saturating_sub(self.generated + self.open_slots)
    }
}

pub fn is_allowed(op: Op, ctx: &NodeContext, rules: &MaskRules) -> bool {
    if rules.node_budget && op.arity() > ctx.max_arity() {
        return false;
    }
    if rules.min_size && ctx.parent.is_none() && op.arity() == 0 {
        return false;
    }
    if let Some(parent) = ctx.parent {
        if rules.no_self_nesting && parent.arity() == 1 && parent == op {
            return false;
        }
        if rules.no_inverse_pairs && parent.inverse() == Some(op) {
            return false;
        }
        if rules.no_constant_only_children && op.is_constant_kind() {
            let siblings_constant = match parent.arity() {
                1 => true,
                _ => ctx.sibling.is_some_and(Op::is_constant_kind),
            };
            if siblings_constant {
                return false;
            }
        }
    }
    true
}

/// Bitset of tokens allowed in this slot.
pub fn legal_mask(library: &TokenLibrary, ctx: &NodeContext, rules: &MaskRules) -> Result<TokenMask> {
    let mut mask: TokenMask = 0;
    for t in library.tokens() {
        if is_allowed(t.op, ctx, rules) {
            mask |= 1 << t.id;
        }
    }
    if mask == 0 {
        return Err(Error::MaskedToEmpty {
            node: ctx.node,
            depth: ctx.depth,
        });
    }
    Ok(mask)
}

/// Sets masked-out logits to `-inf`.
pub fn apply_masks(logits: &mut [f64], mask: TokenMask) {
    for (i, l) in logits.iter_mut().enumerate() {
        if mask & (1 << i) == 0 {
            *l = f64::NEG_INFINITY;
        }
    }
}

/// Rules violated anywhere in a finished tree, checked structurally rather
/// than through the masking path.
pub fn violations(tree: &ExprTree, rules: &MaskRules, budget: usize) -> Vec<String> {
    let mut out = Vec::new();
    let nodes = tree.nodes();
    if rules.node_budget && nodes.len() > budget {
        out.push(format!("{} nodes exceed budget {budget}", nodes.len()));
    }
    if rules.min_size && nodes.len() < 2 {
        out.push("single-node tree".into());
    }
    for (i, n) in nodes.iter().enumerate() {
        let kids: Vec<Op> = (0..n.op.arity()).filter_map(|k| tree.child(i, k)).map(|c| nodes[c].op).collect();
        if rules.no_self_nesting && n.op.arity() == 1 && kids.contains(&n.op) {
            out.push(format!("node {i}: `{}` nested in itself", n.op));
        }
        if rules.no_inverse_pairs {
            if let Some(inv) = n.op.inverse() {
                if kids.contains(&inv) {
                    out.push(format!("node {i}: `{}` applied to `{inv}`", n.op));
                }
            }
        }
        if rules.no_constant_only_children && !kids.is_empty() && kids.iter().all(|k| k.is_constant_kind()) {
            out.push(format!("node {i}: `{}` has only constant children", n.op));
        }
    }
    out
}
