//! Canonical rooted trees with integer-labeled leaves, the elementary move,
//! and contraction.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MutreeError, Result};

pub type NodeId = usize;

/// What a node carries. Contraction labels are negative integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Leaf(u32),
    /// Internal node, optionally tagged as the root of a contracted almost v-tree.
    Internal(Option<i32>),
    /// A whole contracted subtree collapsed into one atomic node.
    Contracted(i32),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub label: Label,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Rooted tree stored as an arena in canonical preorder.
///
/// Two trees are equal as values iff they are the same unordered tree, since
/// construction always canonicalizes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
}

/// Recursive tree description used to build trees by hand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Nested {
    Leaf(u32),
    Group(Vec<Nested>),
}

/// Member of a bracket set: a leaf, a contracted atom, or a nested bracket
/// (index into the collection returned by [`Tree::bracket_sets`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Member {
    Leaf(u32),
    Atom(i32),
    Bracket(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BracketSet {
    pub owner: NodeId,
    pub members: Vec<Member>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Re-attach the subject to its grandparent.
    Up,
    /// Move the subject into a sibling internal node.
    Down(NodeId),
    /// Wrap the subject and a sibling into a new bracket, inside their parent.
    Pair(NodeId),
}

/// One elementary relocation. Node ids refer to the tree the move is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub subject: NodeId,
    pub direction: Direction,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MoveSequence {
    pub steps: Vec<Move>,
}

#[derive(Clone, Debug)]
pub(crate) struct RawNode {
    pub label: Label,
    pub children: Vec<usize>,
}

enum Canon {
    Atom(Label),
    Group(Option<i32>, Vec<Canon>, i64),
}

impl Canon {
    fn key(&self) -> i64 {
        match self {
            Canon::Atom(Label::Leaf(l)) => *l as i64,
            Canon::Atom(Label::Contracted(c)) => *c as i64,
            Canon::Atom(Label::Internal(_)) => i64::MAX,
            Canon::Group(_, _, k) => *k,
        }
    }
}

fn canon_rec(raw: &[RawNode], id: usize) -> Option<Canon> {
    let node = &raw[id];
    match node.label {
        Label::Leaf(_) | Label::Contracted(_) => Some(Canon::Atom(node.label)),
        Label::Internal(tag) => {
            let mut kids: Vec<Canon> = node
                .children
                .iter()
                .filter_map(|&c| canon_rec(raw, c))
                .collect();
            match (kids.len(), tag) {
                (0, None) => None,
                (0, Some(t)) => Some(Canon::Atom(Label::Contracted(t))),
                (1, None) => kids.pop(),
                _ => {
                    kids.sort_by_key(Canon::key);
                    let key = kids[0].key();
                    Some(Canon::Group(tag, kids, key))
                }
            }
        }
    }
}

fn flatten(c: Canon, parent: Option<NodeId>, nodes: &mut Vec<Node>) -> NodeId {
    let id = nodes.len();
    match c {
        Canon::Atom(label) => nodes.push(Node {
            label,
            parent,
            children: Vec::new(),
        }),
        Canon::Group(tag, kids, _) => {
            nodes.push(Node {
                label: Label::Internal(tag),
                parent,
                children: Vec::new(),
            });
            for k in kids {
                let cid = flatten(k, Some(id), nodes);
                nodes[id].children.push(cid);
            }
        }
    }
    id
}

impl Tree {
    /// Builds the canonical form of an arbitrary raw arena: empty internal
    /// nodes vanish, untagged unary nodes are spliced out, children sorted.
    pub(crate) fn from_raw(raw: &[RawNode], root: usize) -> Result<Tree> {
        let canon = canon_rec(raw, root)
            .ok_or_else(|| MutreeError::MalformedTree("tree has no leaves".into()))?;
        let mut nodes = Vec::with_capacity(raw.len());
        flatten(canon, None, &mut nodes);
        Ok(Tree { nodes, root: 0 })
    }

    pub(crate) fn to_raw(&self) -> Vec<RawNode> {
        self.nodes
            .iter()
            .map(|n| RawNode {
                label: n.label,
                children: n.children.clone(),
            })
            .collect()
    }

    /// Builds a canonical tree whose leaves must be exactly `{1..n}`.
    pub fn from_nested(n: &Nested) -> Result<Tree> {
        let mut raw = Vec::new();
        fn push(n: &Nested, raw: &mut Vec<RawNode>) -> usize {
            let id = raw.len();
            match n {
                Nested::Leaf(l) => raw.push(RawNode {
                    label: Label::Leaf(*l),
                    children: vec![],
                }),
                Nested::Group(kids) => {
                    raw.push(RawNode {
                        label: Label::Internal(None),
                        children: vec![],
                    });
                    for k in kids {
                        let c = push(k, raw);
                        raw[id].children.push(c);
                    }
                }
            }
            id
        }
        push(n, &mut raw);
        let t = Tree::from_raw(&raw, 0)?;
        t.check_labels()?;
        Ok(t)
    }

    /// Verifies that leaf labels are distinct and form `{1..n}`.
    pub fn check_labels(&self) -> Result<()> {
        let labels = self.leaf_labels();
        let mut seen = HashSet::new();
        for &l in &labels {
            if !seen.insert(l) {
                return Err(MutreeError::MalformedTree(format!(
                    "duplicate leaf label {l}"
                )));
            }
        }
        let n = labels.len() as u32;
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > n) {
            return Err(MutreeError::MalformedTree(format!(
                "leaf labels must be 1..{n}, found {bad}"
            )));
        }
        Ok(())
    }

    pub fn to_nested(&self) -> Nested {
        fn rec(t: &Tree, id: NodeId) -> Nested {
            match t.nodes[id].label {
                Label::Leaf(l) => Nested::Leaf(l),
                _ => Nested::Group(t.nodes[id].children.iter().map(|&c| rec(t, c)).collect()),
            }
        }
        rec(self, self.root)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
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

    pub fn contains(&self, id: NodeId) -> bool {
        id < self.nodes.len()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn is_internal(&self, id: NodeId) -> bool {
        matches!(self.nodes[id].label, Label::Internal(_))
    }

    /// Sorted labels of all real leaves.
    pub fn leaf_labels(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .nodes
            .iter()
            .filter_map(|n| match n.label {
                Label::Leaf(l) => Some(l),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.label, Label::Leaf(_)))
            .count()
    }

    pub fn leaf_node(&self, label: u32) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.label == Label::Leaf(label))
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.children.is_empty()).count()
    }

    pub fn has_contraction_labels(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n.label, Label::Contracted(_) | Label::Internal(Some(_))))
    }

    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut h = 0;
        // preorder: parents precede children
        for id in 0..self.nodes.len() {
            if let Some(p) = self.nodes[id].parent {
                depth[id] = depth[p] + 1;
                h = h.max(depth[id]);
            }
        }
        h
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[id].parent {
            d += 1;
            id = p;
        }
        d
    }

    /// Sorted real-leaf labels below every node, indexed by node id.
    pub fn leafsets(&self) -> Vec<Vec<u32>> {
        let mut sets: Vec<Vec<u32>> = vec![Vec::new(); self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            let n = &self.nodes[id];
            if let Label::Leaf(l) = n.label {
                sets[id].push(l);
            } else {
                let mut s: Vec<u32> = n
                    .children
                    .iter()
                    .flat_map(|&c| sets[c].iter().copied())
                    .collect();
                s.sort_unstable();
                sets[id] = s;
            }
        }
        sets
    }

    /// Leaf sets of all internal nodes except the root, i.e. the nontrivial clusters.
    pub fn clusters(&self) -> Vec<Vec<u32>> {
        let sets = self.leafsets();
        (0..self.nodes.len())
            .filter(|&i| i != self.root && self.is_internal(i))
            .map(|i| sets[i].clone())
            .collect()
    }

    /// One bracket set per internal node, listed top to bottom (breadth first).
    pub fn bracket_sets(&self) -> Vec<BracketSet> {
        let mut order = vec![self.root];
        let mut i = 0;
        while i < order.len() {
            let id = order[i];
            i += 1;
            for &c in &self.nodes[id].children {
                if !self.nodes[c].children.is_empty() {
                    order.push(c);
                }
            }
        }
        let index_of = |id: NodeId| order.iter().position(|&x| x == id).unwrap();
        order
            .iter()
            .map(|&id| BracketSet {
                owner: id,
                members: self.nodes[id]
                    .children
                    .iter()
                    .map(|&c| match self.nodes[c].label {
                        Label::Leaf(l) => Member::Leaf(l),
                        Label::Contracted(x) => Member::Atom(x),
                        Label::Internal(_) => Member::Bracket(index_of(c)),
                    })
                    .collect(),
            })
            .collect()
    }

    /// Canonical text code of a subtree; contraction labels are written `#k`.
    pub fn code(&self, id: NodeId) -> String {
        let mut s = String::new();
        self.write_code(id, &mut s);
        s
    }

    fn write_code(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        match n.label {
            Label::Leaf(l) => out.push_str(&l.to_string()),
            Label::Contracted(c) => out.push_str(&format!("#{c}")),
            Label::Internal(tag) => {
                out.push('(');
                for (i, &c) in n.children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    self.write_code(c, out);
                }
                out.push(')');
                if let Some(t) = tag {
                    out.push_str(&format!("#{t}"));
                }
            }
        }
    }

    fn check_node(&self, id: NodeId) -> Result<()> {
        if id < self.nodes.len() {
            Ok(())
        } else {
            Err(MutreeError::NodeNotFound(id))
        }
    }

    /// Checks a move against this tree without applying it.
    pub fn validate_move(&self, m: &Move) -> Result<()> {
        self.check_node(m.subject)?;
        let p = self.nodes[m.subject]
            .parent
            .ok_or_else(|| MutreeError::IllegalMove("the root cannot move".into()))?;
        let siblings = &self.nodes[p].children;
        match m.direction {
            Direction::Up => {
                if self.nodes[p].parent.is_none() {
                    return Err(MutreeError::IllegalMove(format!(
                        "node {} is a child of the root",
                        m.subject
                    )));
                }
            }
            Direction::Down(t) | Direction::Pair(t) => {
                self.check_node(t)?;
                if t == m.subject || self.nodes[t].parent != Some(p) {
                    return Err(MutreeError::IllegalMove(format!(
                        "node {t} is not a sibling of {}",
                        m.subject
                    )));
                }
                if siblings.len() < 3 {
                    return Err(MutreeError::IllegalMove(format!(
                        "parent of {} would be left with a single child",
                        m.subject
                    )));
                }
                if matches!(m.direction, Direction::Down(_))
                    && !matches!(self.nodes[t].label, Label::Internal(_))
                {
                    return Err(MutreeError::IllegalMove(format!(
                        "node {t} is not internal"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies one move and renormalizes.
    pub fn apply_move(&self, m: &Move) -> Result<Tree> {
        self.validate_move(m)?;
        let mut raw = self.to_raw();
        let s = m.subject;
        let p = self.nodes[s].parent.unwrap();
        raw[p].children.retain(|&c| c != s);
        match m.direction {
            Direction::Up => {
                let g = self.nodes[p].parent.unwrap();
                raw[g].children.push(s);
            }
            Direction::Down(t) => raw[t].children.push(s),
            Direction::Pair(t) => {
                raw[p].children.retain(|&c| c != t);
                raw.push(RawNode {
                    label: Label::Internal(None),
                    children: vec![s, t],
                });
                let new = raw.len() - 1;
                raw[p].children.push(new);
            }
        }
        Tree::from_raw(&raw, self.root)
    }

    /// Every legal move exactly once, in node order.
    pub fn enumerate_moves(&self) -> Vec<Move> {
        let mut out = Vec::new();
        for s in 0..self.nodes.len() {
            let Some(p) = self.nodes[s].parent else {
                continue;
            };
            if self.nodes[p].parent.is_some() {
                out.push(Move {
                    subject: s,
                    direction: Direction::Up,
                });
            }
            let sib = &self.nodes[p].children;
            if sib.len() < 3 {
                continue;
            }
            for &t in sib {
                if t != s && matches!(self.nodes[t].label, Label::Internal(_)) {
                    out.push(Move {
                        subject: s,
                        direction: Direction::Down(t),
                    });
                }
            }
            for &t in sib {
                if t > s {
                    out.push(Move {
                        subject: s,
                        direction: Direction::Pair(t),
                    });
                }
            }
        }
        out
    }

    /// All trees one move away, deduplicated, in move order.
    pub fn neighbors(&self) -> Vec<Tree> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for m in self.enumerate_moves() {
            let t = self.apply_move(&m).expect("enumerated moves are legal");
            if t != *self && seen.insert(t.clone()) {
                out.push(t);
            }
        }
        out
    }

    /// Replaces the almost v-tree rooted at `v` (v's subtree minus the
    /// `removed` child subtrees) by an atom carrying `label`. With nothing
    /// removed, v itself becomes the atom; otherwise v keeps the removed
    /// children plus the atom and is tagged with the label.
    pub fn contract(&self, v: NodeId, removed: &[NodeId], label: i32) -> Result<Tree> {
        self.check_node(v)?;
        if label >= 0 {
            return Err(MutreeError::MalformedTree(
                "contraction labels must be negative".into(),
            ));
        }
        for &r in removed {
            self.check_node(r)?;
            if self.nodes[r].parent != Some(v) {
                return Err(MutreeError::MalformedTree(format!(
                    "node {r} is not a child of {v}"
                )));
            }
        }
        let mut raw = self.to_raw();
        if removed.is_empty() {
            raw[v].children.clear();
            raw[v].label = Label::Contracted(label);
        } else {
            raw[v].children.retain(|c| removed.contains(c));
            raw.push(RawNode {
                label: Label::Contracted(label),
                children: vec![],
            });
            let atom = raw.len() - 1;
            raw[v].children.push(atom);
            raw[v].label = Label::Internal(Some(label));
        }
        Tree::from_raw(&raw, self.root)
    }

    /// Number of nodes in the subtree of `id`.
    pub fn subtree_size(&self, id: NodeId) -> usize {
        1 + self.nodes[id]
            .children
            .iter()
            .map(|&c| self.subtree_size(c))
            .sum::<usize>()
    }
}

/// True iff the trees are the same unordered tree.
pub fn is_equal(a: &Tree, b: &Tree) -> Result<bool> {
    if a.leaf_labels() != b.leaf_labels() {
        return Err(MutreeError::Incomparable);
    }
    Ok(a == b)
}

impl MoveSequence {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }

    /// Applies every step in order, returning all states including the start.
    pub fn replay_states(&self, start: &Tree) -> Result<Vec<Tree>> {
        let mut states = vec![start.clone()];
        for m in &self.steps {
            let next = states.last().unwrap().apply_move(m)?;
            states.push(next);
        }
        Ok(states)
    }

    pub fn replay(&self, start: &Tree) -> Result<Tree> {
        Ok(self.replay_states(start)?.pop().unwrap())
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code(self.root))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::parse_newick;

    fn t(s: &str) -> Tree {
        parse_newick(s).unwrap()
    }

    #[test]
    fn sibling_order_is_irrelevant() {
        assert_eq!(t("((1,2)((4,3)5))"), t("((1,2)((3,4)5))"));
        assert_eq!(t("((1,2)((4,3)5))").to_string(), "((1,2),((3,4),5))");
    }

    #[test]
    fn unary_brackets_collapse() {
        let raw = vec![
            RawNode {
                label: Label::Internal(None),
                children: vec![1, 2],
            },
            RawNode {
                label: Label::Internal(None),
                children: vec![3],
            },
            RawNode {
                label: Label::Leaf(1),
                children: vec![],
            },
            RawNode {
                label: Label::Internal(None),
                children: vec![4, 5],
            },
            RawNode {
                label: Label::Leaf(2),
                children: vec![],
            },
            RawNode {
                label: Label::Leaf(3),
                children: vec![],
            },
        ];
        assert_eq!(Tree::from_raw(&raw, 0).unwrap().to_string(), "(1,(2,3))");
    }

    #[test]
    fn heights() {
        assert_eq!(t("(1,2,3)").height(), 1);
        assert_eq!(t("((1,2)((4,3)5))").height(), 3);
        assert_eq!(t("(1,2,3,4,5,6,7,8)").height(), 1);
    }

    #[test]
    fn bracket_sets_of_worked_tree() {
        let p = t("((1,2)((4,3)5))");
        let b = p.bracket_sets();
        assert_eq!(b.len(), 4);
        assert_eq!(b[0].members, vec![Member::Bracket(1), Member::Bracket(2)]);
        assert_eq!(b[1].members, vec![Member::Leaf(1), Member::Leaf(2)]);
        assert_eq!(b[2].members, vec![Member::Bracket(3), Member::Leaf(5)]);
        assert_eq!(b[3].members, vec![Member::Leaf(3), Member::Leaf(4)]);
        assert_eq!(t("(1,2,3)").bracket_sets().len(), 1);
    }

    #[test]
    fn first_step_of_worked_example() {
        let p = t("((1(2(3,4)))(5,6))");
        let three = p.leaf_node(3).unwrap();
        let q = p
            .apply_move(&Move {
                subject: three,
                direction: Direction::Up,
            })
            .unwrap();
        assert_eq!(q, t("((1(2,3,4))(5,6))"));
    }

    #[test]
    fn illegal_moves_are_rejected() {
        let p = t("((1,2),3)");
        let three = p.leaf_node(3).unwrap();
        let one = p.leaf_node(1).unwrap();
        assert!(p
            .apply_move(&Move {
                subject: 0,
                direction: Direction::Up
            })
            .is_err());
        assert!(p
            .apply_move(&Move {
                subject: three,
                direction: Direction::Up
            })
            .is_err());
        assert!(p
            .apply_move(&Move {
                subject: three,
                direction: Direction::Down(1)
            })
            .is_err());
        assert!(p
            .apply_move(&Move {
                subject: three,
                direction: Direction::Down(one)
            })
            .is_err());
        assert!(p
            .apply_move(&Move {
                subject: 99,
                direction: Direction::Up
            })
            .is_err());
    }

    #[test]
    fn two_leaf_star_has_no_moves() {
        assert!(t("(1,2)").enumerate_moves().is_empty());
    }

    #[test]
    fn equality_matches_figure_two() {
        assert!(is_equal(&t("((1,2)((4,3)5))"), &t("((1,2)((3,4)5))")).unwrap());
        assert!(!is_equal(&t("((1,2)((4,3)5))"), &t("((1,5)((3,4)2))")).unwrap());
        assert!(is_equal(&t("(1,2)"), &t("(1,2,3)")).is_err());
    }

    #[test]
    fn contraction_keeps_removed_children() {
        let p = t("((1,2,(3,4)),5)");
        let v = 1;
        let two = p.leaf_node(2).unwrap();
        let c = p.contract(v, &[two], -1).unwrap();
        assert_eq!(c.to_string(), "((#-1,2)#-1,5)");
        // H below v is {1, (3,4), 3, 4}; those four nodes become one atom
        let below_v = p.subtree_size(v) - 1 - 1;
        assert_eq!(c.len(), p.len() - below_v + 1);
        let whole = p.contract(p.root(), &[], -2).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole.to_string(), "#-2");
        assert!(p.contract(v, &[p.leaf_node(5).unwrap()], -3).is_err());
        assert!(p.contract(99, &[], -3).is_err());
    }
}
