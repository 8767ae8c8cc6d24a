//! Expression trees stored as BFS-ordered node arrays.

use std::collections::VecDeque;

use super::token::{Op, TokenLibrary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChildSlot {
    Root,
    Left,
    Right,
}

impl ChildSlot {
    fn from_index(i: usize) -> Self {
        if i == 0 {
            ChildSlot::Left
        } else {
            ChildSlot::Right
        }
    }

    fn index(self) -> Option<usize> {
        match self {
            ChildSlot::Root => None,
            ChildSlot::Left => Some(0),
            ChildSlot::Right => Some(1),
        }
    }
}

/// Depth and horizontal coordinate of a node. The root sits at `(1, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub depth: u32,
    pub horizontal: f64,
}

impl Position {
    pub const ROOT: Position = Position {
        depth: 1,
        horizontal: 0.5,
    };

    /// Position of a child: left children move `1/2^d` to the left of the
    /// parent, right children the same distance to the right, where `d` is
    /// the child's depth. A unary operand occupies the left slot.
    pub fn child(self, slot: ChildSlot) -> Position {
        let depth = self.depth + 1;
        let offset = 0.5f64.powi(depth as i32);
        let horizontal = match slot {
            ChildSlot::Left => self.horizontal - offset,
            ChildSlot::Right => self.horizontal + offset,
            ChildSlot::Root => panic!("root slot has no parent"),
        };
        Position { depth, horizontal }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub token: usize,
    pub op: Op,
    pub parent: Option<usize>,
    pub slot: ChildSlot,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Node>,
    first_child: Vec<Option<usize>>,
    complete: bool,
}

impl ExprTree {
    /// Builds a tree from token ids in BFS order. Returns an incomplete tree
    /// when open slots remain; errors if tokens are left over once the tree
    /// closes.
    pub fn from_tokens(tokens: &[usize], library: &TokenLibrary) -> Result<Self> {
        let mut builder = TreeBuilder::new();
        for (i, &id) in tokens.iter().enumerate() {
            if id >= library.len() {
                return Err(Error::Structure(format!("token id {id} outside vocabulary")));
            }
            if builder.is_complete() {
                return Err(Error::Structure(format!(
                    "tree closed before token {i} of {}",
                    tokens.len()
                )));
            }
            builder.push(id, library.op(id));
        }
        Ok(builder.finish())
    }

    /// Builds from explicit `(token, op)` pairs in BFS order.
    pub fn from_ops(items: &[(usize, Op)]) -> Result<Self> {
        let mut builder = TreeBuilder::new();
        for (i, &(id, op)) in items.iter().enumerate() {
            if builder.is_complete() {
                return Err(Error::Structure(format!("tree closed before item {i}")));
            }
            builder.push(id, op);
        }
        Ok(builder.finish())
    }

    /// Validates parent links and rebuilds child indices. Positions are left
    /// as given; call [`assign_positions`] to recompute them.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Ok(Self {
                nodes,
                first_child: Vec::new(),
                complete: false,
            });
        }
        if nodes[0].parent.is_some() || nodes[0].slot != ChildSlot::Root {
            return Err(Error::Structure("node 0 must be the root".into()));
        }
        let mut filled: Vec<[bool; 2]> = vec![[false; 2]; nodes.len()];
        let mut first_child = vec![None; nodes.len()];
        let mut last_parent = 0usize;
        for (i, node) in nodes.iter().enumerate().skip(1) {
            let parent = node.parent.ok_or_else(|| {
                Error::Structure(format!("node {i} has no parent but is not the root"))
            })?;
            if parent >= i {
                return Err(Error::Structure(format!(
                    "node {i} has parent {parent}, which does not precede it"
                )));
            }
            if parent < last_parent {
                return Err(Error::Structure(format!("node {i} breaks BFS order")));
            }
            last_parent = parent;
            let slot = node.slot.index().ok_or_else(|| {
                Error::Structure(format!("non-root node {i} carries the root slot"))
            })?;
            let arity = nodes[parent].op.arity();
            if slot >= arity {
                return Err(Error::Structure(format!(
                    "node {i} fills slot {slot} of `{}` with arity {arity}",
                    nodes[parent].op
                )));
            }
            if filled[parent][slot] || (slot == 1 && !filled[parent][0]) {
                return Err(Error::Structure(format!(
                    "node {i} fills slot {slot} of node {parent} out of order"
                )));
            }
            filled[parent][slot] = true;
            if slot == 0 {
                first_child[parent] = Some(i);
            }
        }
        let complete = nodes
            .iter()
            .zip(&filled)
            .all(|(n, f)| f.iter().filter(|&&x| x).count() == n.op.arity());
        Ok(Self {
            nodes,
            first_child,
            complete,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn tokens(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.token).collect()
    }

    pub fn constant_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.op == Op::Const).count()
    }

    /// Index of the `k`-th child of `node`. Children of a node are contiguous in
    /// BFS order.
    pub fn child(&self, node: usize, k: usize) -> Option<usize> {
        let first = self.first_child[node]?;
        let idx = first + k;
        (k < self.nodes[node].op.arity()
            && idx < self.nodes.len()
            && self.nodes[idx].parent == Some(node))
        .then_some(idx)
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.position.depth).max().unwrap_or(0)
    }
}

/// Recomputes depth and horizontal position of every node from its parent link.
pub fn assign_positions(tree: &ExprTree) -> Result<ExprTree> {
    let mut nodes = tree.nodes.clone();
    for i in 0..nodes.len() {
        let position = match nodes[i].parent {
            None if i == 0 => Position::ROOT,
            None => return Err(Error::Structure(format!("node {i} has no parent"))),
            Some(p) if p >= i => {
                return Err(Error::Structure(format!(
                    "node {i} has parent {p}, which does not precede it"
                )))
            }
            Some(p) => nodes[p].position.child(nodes[i].slot),
        };
        nodes[i].position = position;
    }
    ExprTree::from_nodes(nodes)
}

/// Grows a tree one node at a time in BFS order.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
    open: VecDeque<(usize, ChildSlot)>,
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            open: VecDeque::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        !self.nodes.is_empty() && self.open.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Number of slots still waiting for a token, counting the next one.
    pub fn open_slots(&self) -> usize {
        if self.nodes.is_empty() {
            1
        } else {
            self.open.len()
        }
    }

    /// Parent index and slot of the next node, `None` for the root.
    pub fn next_slot(&self) -> Option<(usize, ChildSlot)> {
        self.open.front().copied()
    }

    /// Position the next node will occupy.
    pub fn next_position(&self) -> Position {
        match self.next_slot() {
            None => Position::ROOT,
            Some((p, slot)) => self.nodes[p].position.child(slot),
        }
    }

    /// Token already placed in the left slot of the next node's parent, if the
    /// next node is a right child.
    pub fn next_sibling(&self) -> Option<usize> {
        match self.next_slot() {
            Some((p, ChildSlot::Right)) => self.nodes.last().and_then(|n| {
                (n.parent == Some(p) && n.slot == ChildSlot::Left).then_some(n.token)
            }),
            _ => None,
        }
    }

    pub fn push(&mut self, token: usize, op: Op) {
        assert!(!self.is_complete(), "push onto a complete tree");
        let (parent, slot, position) = if self.nodes.is_empty() {
            (None, ChildSlot::Root, Position::ROOT)
        } else {
            let (p, slot) = self.open.pop_front().expect("open slot");
            (Some(p), slot, self.nodes[p].position.child(slot))
        };
        let idx = self.nodes.len();
        self.nodes.push(Node {
            token,
            op,
            parent,
            slot,
            position,
        });
        for k in 0..op.arity() {
            self.open.push_back((idx, ChildSlot::from_index(k)));
        }
    }

    pub fn finish(self) -> ExprTree {
        ExprTree::from_nodes(self.nodes).expect("builder maintains BFS invariants")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::token::TokenLibrary;

    fn lib() -> TokenLibrary {
        TokenLibrary::full(2)
    }

    fn tree(symbols: &[&str]) -> ExprTree {
        let lib = lib();
        let ids: Vec<_> = symbols.iter().map(|s| lib.lookup(s).unwrap()).collect();
        ExprTree::from_tokens(&ids, &lib).unwrap()
    }

    #[test]
    fn root_only_position() {
        let t = tree(&["x1"]);
        assert_eq!(t.nodes()[0].position, Position { depth: 1, horizontal: 0.5 });
        assert!(t.is_complete());
    }

    #[test]
    fn two_children_positions() {
        let t = tree(&["+", "x1", "x2"]);
        let p: Vec<_> = t.nodes().iter().map(|n| (n.position.depth, n.position.horizontal)).collect();
        assert_eq!(p, vec![(1, 0.5), (2, 0.25), (2, 0.75)]);
    }

    #[test]
    fn left_left_grandchild() {
        let t = tree(&["+", "+", "x1", "x1", "x2"]);
        assert_eq!(t.nodes()[3].position, Position { depth: 3, horizontal: 0.125 });
        assert_eq!(t.nodes()[4].position, Position { depth: 3, horizontal: 0.375 });
    }

    #[test]
    fn figure_tree_layout() {
        // x1^c + sin(x2)
        let t = tree(&["+", "^", "sin", "x1", "c", "x2"]);
        let h: Vec<_> = t.nodes().iter().map(|n| n.position.horizontal).collect();
        assert_eq!(h, vec![0.5, 0.25, 0.75, 0.125, 0.375, 0.625]);
        assert_eq!(t.child(0, 1), Some(2));
        assert_eq!(t.child(2, 0), Some(5));
        assert_eq!(t.child(2, 1), None);
    }

    #[test]
    fn assign_positions_matches_builder() {
        let t = tree(&["*", "sin", "+", "x1", "x2", "c"]);
        let mut scrambled = t.nodes().to_vec();
        for n in &mut scrambled {
            n.position = Position { depth: 99, horizontal: 0.0 };
        }
        let rebuilt = assign_positions(&ExprTree::from_nodes(scrambled).unwrap()).unwrap();
        assert_eq!(rebuilt, t);
    }

    #[test]
    fn malformed_parent_links_rejected() {
        let mut nodes = tree(&["+", "x1", "x2"]).nodes().to_vec();
        nodes[1].parent = Some(2);
        assert!(matches!(ExprTree::from_nodes(nodes.clone()), Err(Error::Structure(_))));
        nodes[1].parent = Some(0);
        nodes[2].slot = ChildSlot::Left;
        assert!(ExprTree::from_nodes(nodes).is_err());
        let mut unary = tree(&["sin", "x1"]).nodes().to_vec();
        unary[1].slot = ChildSlot::Right;
        assert!(ExprTree::from_nodes(unary).is_err());
    }

    #[test]
    fn incomplete_and_overflow() {
        let lib = lib();
        let plus = lib.lookup("+").unwrap();
        let x = lib.lookup("x1").unwrap();
        let t = ExprTree::from_tokens(&[plus, x], &lib).unwrap();
        assert!(!t.is_complete());
        assert!(ExprTree::from_tokens(&[x, x], &lib).is_err());
    }

    /// Enumerates every tree shape (binary/unary/leaf) with up to `max` nodes
    /// in BFS order, keeping those no deeper than `depth`.
    fn shapes(max: usize, depth: u32) -> Vec<ExprTree> {
        let lib = lib();
        let choices = [lib.lookup("+").unwrap(), lib.lookup("sin").unwrap(), lib.lookup("x1").unwrap()];
        let mut out = Vec::new();
        let mut stack = vec![TreeBuilder::new()];
        while let Some(b) = stack.pop() {
            if b.is_complete() {
                out.push(b.finish());
                continue;
            }
            if b.len() + b.open_slots() > max || b.next_position().depth > depth {
                continue;
            }
            for &c in &choices {
                let mut nb = b.clone();
                nb.push(c, lib.op(c));
                stack.push(nb);
            }
        }
        out
    }

    #[test]
    fn horizontal_positions_ordered_within_levels() {
        let all = shapes(13, 5);
        assert!(all.len() > 1000, "{}", all.len());
        for t in &all {
            for level in 1..=t.max_depth() {
                let hs: Vec<f64> = t
                    .nodes()
                    .iter()
                    .filter(|n| n.position.depth == level)
                    .map(|n| n.position.horizontal)
                    .collect();
                assert!(hs.windows(2).all(|w| w[0] < w[1]), "{hs:?}");
                assert!(hs.iter().all(|&h| h > 0.0 && h < 1.0));
            }
            for (i, n) in t.nodes().iter().enumerate() {
                if let Some(p) = n.parent {
                    assert_eq!(n.position.depth, t.nodes()[p].position.depth + 1);
                    assert!(p < i);
                }
                if let (Some(l), Some(r)) = (t.child(i, 0), t.child(i, 1)) {
                    let (hl, hr) = (t.nodes()[l].position.horizontal, t.nodes()[r].position.horizontal);
                    assert!(hl < n.position.horizontal && n.position.horizontal < hr);
                }
            }
        }
    }
}
