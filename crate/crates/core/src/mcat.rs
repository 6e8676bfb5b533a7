//! Maximum common almost v-tree (MCAT): the largest pair of shape-isomorphic
//! almost v-trees with identical token sets, plus contraction bookkeeping.
//!
//! Tokens are real leaf labels (positive) and contraction labels (negative).
//! An almost v-tree is the subtree of an internal node v with some whole
//! child subtrees removed.

use std::cmp::Ordering;
use std::collections::HashMap;

use pathfinding::prelude::{kuhn_munkres_min, Matrix};

use crate::error::{MutreeError, Result};
use crate::tree::{Label, NodeId, Tree};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlmostVTree {
    pub v: NodeId,
    pub removed_children: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McatSolution {
    pub in_p: AlmostVTree,
    pub in_q: AlmostVTree,
    /// Real leaves covered, counting each contracted atom by the leaves it replaced.
    pub leaf_count: usize,
    /// Retained children of `in_p.v` paired with retained children of `in_q.v`.
    pub child_matching: Vec<(NodeId, NodeId)>,
    /// Every internal node below the two roots paired by the isomorphism.
    pub interior: Vec<(NodeId, NodeId)>,
    /// Sorted tokens of the common structure.
    pub tokens: Vec<i64>,
    /// Sum over paired internal nodes of the symmetric difference of their tokens.
    pub iso_cost: usize,
}

/// Real-leaf weight of contraction atoms; atoms without an entry weigh 1.
pub type Weights = HashMap<i32, usize>;

const FORBIDDEN: i64 = 1 << 40;

/// Minimum-cost assignment on a rectangular matrix. `None` entries may not be
/// used; the returned pairs never include them.
pub fn min_assignment(cost: &[Vec<Option<i64>>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return Vec::new();
    }
    let get = |i: usize, j: usize| cost[i][j].unwrap_or(FORBIDDEN);
    let pairs: Vec<(usize, usize)> = if rows <= cols {
        let m = Matrix::from_fn(rows, cols, |(i, j)| get(i, j));
        let (_, assign) = kuhn_munkres_min(&m);
        assign.into_iter().enumerate().collect()
    } else {
        let m = Matrix::from_fn(cols, rows, |(j, i)| get(i, j));
        let (_, assign) = kuhn_munkres_min(&m);
        assign
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect()
    };
    pairs
        .into_iter()
        .filter(|&(i, j)| cost[i][j].is_some())
        .collect()
}

/// Per-node tokens and shape classes of one tree.
pub(crate) struct TreeInfo {
    pub toks: Vec<Vec<i64>>,
    pub shape: Vec<u32>,
    pub internals: Vec<NodeId>,
}

/// Interns shapes so that equal ids mean isomorphic unlabeled subtrees.
#[derive(Default)]
pub(crate) struct ShapeTable {
    ids: HashMap<Vec<u32>, u32>,
}

impl ShapeTable {
    fn intern(&mut self, mut kids: Vec<u32>) -> u32 {
        kids.sort_unstable();
        let next = self.ids.len() as u32 + 1;
        *self.ids.entry(kids).or_insert(next)
    }
}

pub(crate) fn tree_info(t: &Tree, shapes: &mut ShapeTable) -> TreeInfo {
    let n = t.len();
    let mut toks = vec![Vec::new(); n];
    let mut shape = vec![0u32; n];
    let mut internals = Vec::new();
    for id in (0..n).rev() {
        match t.node(id).label {
            Label::Leaf(l) => toks[id] = vec![l as i64],
            Label::Contracted(c) => toks[id] = vec![c as i64],
            Label::Internal(_) => {
                let mut s: Vec<i64> = t
                    .children(id)
                    .iter()
                    .flat_map(|&c| toks[c].iter().copied())
                    .collect();
                s.sort_unstable();
                toks[id] = s;
                shape[id] = shapes.intern(t.children(id).iter().map(|&c| shape[c]).collect());
            }
        }
    }
    for id in 0..n {
        if t.is_internal(id) {
            internals.push(id);
        }
    }
    TreeInfo {
        toks,
        shape,
        internals,
    }
}

pub(crate) fn intersect(a: &[i64], b: &[i64]) -> Vec<i64> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn is_subset(a: &[i64], b: &[i64]) -> bool {
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < *x {
            j += 1;
        }
        if j == b.len() || b[j] != *x {
            return false;
        }
    }
    true
}

fn overlaps(a: &[i64], b: &[i64]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return true,
        }
    }
    false
}

pub(crate) fn sym_diff_len(a: &[i64], b: &[i64]) -> usize {
    a.len() + b.len() - 2 * intersect(a, b).len()
}

fn weight_of(toks: &[i64], w: &Weights) -> usize {
    toks.iter()
        .map(|&t| {
            if t < 0 {
                *w.get(&(t as i32)).unwrap_or(&1)
            } else {
                1
            }
        })
        .sum()
}

/// Cost and internal-node pairs of the cheapest shape isomorphism between
/// two same-shape subtrees, where each pair costs the symmetric difference of
/// its token sets.
pub(crate) struct IsoSolver<'a> {
    pub a: &'a Tree,
    pub b: &'a Tree,
    pub ia: &'a TreeInfo,
    pub ib: &'a TreeInfo,
    memo: HashMap<(NodeId, NodeId), (usize, Vec<(NodeId, NodeId)>)>,
}

impl<'a> IsoSolver<'a> {
    pub fn new(a: &'a Tree, b: &'a Tree, ia: &'a TreeInfo, ib: &'a TreeInfo) -> Self {
        IsoSolver {
            a,
            b,
            ia,
            ib,
            memo: HashMap::new(),
        }
    }

    pub fn node_cost(&mut self, x: NodeId, y: NodeId) -> (usize, Vec<(NodeId, NodeId)>) {
        if let Some(r) = self.memo.get(&(x, y)) {
            return r.clone();
        }
        let mut cost = sym_diff_len(&self.ia.toks[x], &self.ib.toks[y]);
        let mut pairs = vec![(x, y)];
        let (c, p) = self.forest_cost(&self.a.children(x).to_vec(), &self.b.children(y).to_vec());
        cost += c;
        pairs.extend(p);
        self.memo.insert((x, y), (cost, pairs.clone()));
        (cost, pairs)
    }

    pub fn forest_cost(&mut self, xs: &[NodeId], ys: &[NodeId]) -> (usize, Vec<(NodeId, NodeId)>) {
        let ix: Vec<NodeId> = xs
            .iter()
            .copied()
            .filter(|&x| self.a.is_internal(x))
            .collect();
        let iy: Vec<NodeId> = ys
            .iter()
            .copied()
            .filter(|&y| self.b.is_internal(y))
            .collect();
        if ix.is_empty() || iy.is_empty() {
            return (0, Vec::new());
        }
        let mut sub = HashMap::new();
        let mut matrix = vec![vec![None; iy.len()]; ix.len()];
        for (i, &x) in ix.iter().enumerate() {
            for (j, &y) in iy.iter().enumerate() {
                if self.ia.shape[x] == self.ib.shape[y] {
                    let (c, p) = self.node_cost(x, y);
                    matrix[i][j] = Some(c as i64);
                    sub.insert((i, j), p);
                }
            }
        }
        let mut cost = 0;
        let mut pairs = Vec::new();
        for (i, j) in min_assignment(&matrix) {
            cost += matrix[i][j].unwrap() as usize;
            pairs.extend(sub.remove(&(i, j)).unwrap());
        }
        (cost, pairs)
    }
}

struct Component {
    a: Vec<NodeId>,
    b: Vec<NodeId>,
    shapes_a: Vec<u32>,
    shapes_b: Vec<u32>,
}

struct Candidate {
    weight: usize,
    removed: usize,
    v: NodeId,
    w: NodeId,
    sa: Vec<NodeId>,
    sb: Vec<NodeId>,
    tokens: Vec<i64>,
}

const MAX_UNBALANCED: usize = 10;

fn components(
    a: &Tree,
    b: &Tree,
    ia: &TreeInfo,
    ib: &TreeInfo,
    v: NodeId,
    w: NodeId,
    inter: &[i64],
) -> Vec<Component> {
    let ca: Vec<NodeId> = a
        .children(v)
        .iter()
        .copied()
        .filter(|&c| is_subset(&ia.toks[c], inter))
        .collect();
    let cb: Vec<NodeId> = b
        .children(w)
        .iter()
        .copied()
        .filter(|&c| is_subset(&ib.toks[c], inter))
        .collect();
    let na = ca.len();
    let mut parent: Vec<usize> = (0..na + cb.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, &x) in ca.iter().enumerate() {
        for (j, &y) in cb.iter().enumerate() {
            if overlaps(&ia.toks[x], &ib.toks[y]) {
                let (r1, r2) = (find(&mut parent, i), find(&mut parent, na + j));
                parent[r1] = r2;
            }
        }
    }
    let mut groups: Vec<(usize, Component)> = Vec::new();
    for k in 0..na + cb.len() {
        let r = find(&mut parent, k);
        let pos = match groups.iter().position(|(root, _)| *root == r) {
            Some(p) => p,
            None => {
                groups.push((
                    r,
                    Component {
                        a: vec![],
                        b: vec![],
                        shapes_a: vec![],
                        shapes_b: vec![],
                    },
                ));
                groups.len() - 1
            }
        };
        let comp = &mut groups[pos].1;
        if k < na {
            comp.a.push(ca[k]);
            comp.shapes_a.push(ia.shape[ca[k]]);
        } else {
            comp.b.push(cb[k - na]);
            comp.shapes_b.push(ib.shape[cb[k - na]]);
        }
    }
    groups
        .into_iter()
        .map(|(_, mut c)| {
            c.shapes_a.sort_unstable();
            c.shapes_b.sort_unstable();
            c
        })
        .filter(|c| {
            if c.a.is_empty() || c.b.is_empty() {
                return false;
            }
            let mut ta: Vec<i64> =
                c.a.iter()
                    .flat_map(|&x| ia.toks[x].iter().copied())
                    .collect();
            let mut tb: Vec<i64> =
                c.b.iter()
                    .flat_map(|&y| ib.toks[y].iter().copied())
                    .collect();
            ta.sort_unstable();
            tb.sort_unstable();
            ta == tb
        })
        .collect()
}

fn forest_code(t: &Tree, s: &[NodeId]) -> String {
    let mut codes: Vec<String> = s.iter().map(|&x| t.code(x)).collect();
    codes.sort();
    codes.join(",")
}

fn better(x: &Candidate, y: &Candidate, a: &Tree) -> bool {
    match (y.weight, x.removed).cmp(&(x.weight, y.removed)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => forest_code(a, &x.sa) < forest_code(a, &y.sa),
    }
}

fn best_candidate(
    a: &Tree,
    b: &Tree,
    ia: &TreeInfo,
    ib: &TreeInfo,
    weights: &Weights,
) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for &v in &ia.internals {
        for &w in &ib.internals {
            let inter = intersect(&ia.toks[v], &ib.toks[w]);
            if inter.len() < 2 {
                continue;
            }
            if let Some(bst) = &best {
                if weight_of(&inter, weights) < bst.weight {
                    continue;
                }
            }
            let comps = components(a, b, ia, ib, v, w, &inter);
            if comps.is_empty() {
                continue;
            }
            let (bal, unb): (Vec<&Component>, Vec<&Component>) =
                comps.iter().partition(|c| c.shapes_a == c.shapes_b);
            let subsets: Vec<Vec<&Component>> = if unb.len() <= MAX_UNBALANCED {
                (0u32..1 << unb.len())
                    .filter_map(|mask| {
                        let chosen: Vec<&Component> = (0..unb.len())
                            .filter(|i| mask & (1 << i) != 0)
                            .map(|i| unb[i])
                            .collect();
                        let mut sa: Vec<u32> =
                            chosen.iter().flat_map(|c| c.shapes_a.clone()).collect();
                        let mut sb: Vec<u32> =
                            chosen.iter().flat_map(|c| c.shapes_b.clone()).collect();
                        sa.sort_unstable();
                        sb.sort_unstable();
                        (sa == sb).then_some(chosen)
                    })
                    .collect()
            } else {
                vec![Vec::new()]
            };
            for extra in subsets {
                let chosen: Vec<&Component> = bal.iter().copied().chain(extra).collect();
                if chosen.is_empty() {
                    continue;
                }
                let sa: Vec<NodeId> = chosen.iter().flat_map(|c| c.a.clone()).collect();
                let sb: Vec<NodeId> = chosen.iter().flat_map(|c| c.b.clone()).collect();
                let mut tokens: Vec<i64> = sa.iter().flat_map(|&x| ia.toks[x].clone()).collect();
                tokens.sort_unstable();
                if tokens.len() < 2 {
                    continue;
                }
                let cand = Candidate {
                    weight: weight_of(&tokens, weights),
                    removed: a.children(v).len() - sa.len() + b.children(w).len() - sb.len(),
                    v,
                    w,
                    sa,
                    sb,
                    tokens,
                };
                if best.as_ref().is_none_or(|bst| better(&cand, bst, a)) {
                    best = Some(cand);
                }
            }
        }
    }
    best
}

fn assemble(
    a: &Tree,
    b: &Tree,
    ia: &TreeInfo,
    ib: &TreeInfo,
    c: Candidate,
    weights: &Weights,
) -> McatSolution {
    let mut iso = IsoSolver::new(a, b, ia, ib);
    let (cost, interior) = iso.forest_cost(&c.sa, &c.sb);
    let mut child_matching: Vec<(NodeId, NodeId)> = interior
        .iter()
        .copied()
        .filter(|(x, _)| c.sa.contains(x))
        .collect();
    let mut la: Vec<NodeId> =
        c.sa.iter()
            .copied()
            .filter(|&x| !a.is_internal(x))
            .collect();
    let mut lb: Vec<NodeId> =
        c.sb.iter()
            .copied()
            .filter(|&y| !b.is_internal(y))
            .collect();
    la.sort_by_key(|&x| ia.toks[x][0]);
    lb.sort_by_key(|&y| ib.toks[y][0]);
    child_matching.extend(la.into_iter().zip(lb));
    child_matching.sort_unstable();
    let removed = |t: &Tree, v: NodeId, s: &[NodeId]| -> Vec<NodeId> {
        t.children(v)
            .iter()
            .copied()
            .filter(|x| !s.contains(x))
            .collect()
    };
    McatSolution {
        in_p: AlmostVTree {
            v: c.v,
            removed_children: removed(a, c.v, &c.sa),
        },
        in_q: AlmostVTree {
            v: c.w,
            removed_children: removed(b, c.w, &c.sb),
        },
        leaf_count: weight_of(&c.tokens, weights),
        child_matching,
        interior,
        tokens: c.tokens,
        iso_cost: cost,
    }
}

/// MCAT with atoms weighted by the number of real leaves they replaced.
/// Returns `None` when no common structure with two or more tokens exists.
pub fn solve_mcat_weighted(a: &Tree, b: &Tree, weights: &Weights) -> Option<McatSolution> {
    let mut shapes = ShapeTable::default();
    let ia = tree_info(a, &mut shapes);
    let ib = tree_info(b, &mut shapes);
    let c = best_candidate(a, b, &ia, &ib, weights)?;
    Some(assemble(a, b, &ia, &ib, c, weights))
}

fn token_set(t: &Tree) -> Vec<i64> {
    let mut v: Vec<i64> = t
        .nodes()
        .iter()
        .filter_map(|n| match n.label {
            Label::Leaf(l) => Some(l as i64),
            Label::Contracted(c) => Some(c as i64),
            Label::Internal(_) => None,
        })
        .collect();
    v.sort_unstable();
    v
}

/// Maximum common almost v-tree of two trees over the same tokens, with atoms
/// counted as single leaves. When nothing with two or more tokens is shared,
/// the solution is the smallest common token on its own.
pub fn solve_mcat(a: &Tree, b: &Tree) -> Result<McatSolution> {
    let ta = token_set(a);
    if ta != token_set(b) {
        return Err(MutreeError::Incomparable);
    }
    if let Some(s) = solve_mcat_weighted(a, b, &Weights::new()) {
        return Ok(s);
    }
    let tok = ta[0];
    let find = |t: &Tree| {
        (0..t.len())
            .find(|&i| match t.node(i).label {
                Label::Leaf(l) => l as i64 == tok,
                Label::Contracted(c) => c as i64 == tok,
                _ => false,
            })
            .unwrap()
    };
    Ok(McatSolution {
        in_p: AlmostVTree {
            v: find(a),
            removed_children: vec![],
        },
        in_q: AlmostVTree {
            v: find(b),
            removed_children: vec![],
        },
        leaf_count: 1,
        child_matching: vec![],
        interior: vec![],
        tokens: vec![tok],
        iso_cost: 0,
    })
}

fn tag(t: &Tree, v: NodeId) -> Option<i32> {
    match t.node(v).label {
        Label::Internal(tag) => tag,
        _ => None,
    }
}

fn atom_parent(t: &Tree, label: i32) -> Option<NodeId> {
    (0..t.len())
        .find(|&i| t.node(i).label == Label::Contracted(label))
        .and_then(|i| t.parent(i))
}

fn path_len(t: &Tree, x: NodeId, y: NodeId) -> Option<usize> {
    let anc = |mut n: NodeId| {
        let mut v = vec![n];
        while let Some(p) = t.parent(n) {
            v.push(p);
            n = p;
        }
        v
    };
    let (ax, ay) = (anc(x), anc(y));
    let (i, j) = ax
        .iter()
        .enumerate()
        .find_map(|(i, n)| ay.iter().position(|m| m == n).map(|j| (i, j)))?;
    Some(i + j)
}

fn is_ancestor(t: &Tree, anc: NodeId, mut x: NodeId) -> bool {
    loop {
        if x == anc {
            return true;
        }
        match t.parent(x) {
            Some(p) => x = p,
            None => return false,
        }
    }
}

/// Relocates the retained children of `h.v` under `target`, one level per
/// move for each child. `None` when the target lies inside the moved forest.
fn relocate(t: &Tree, h: &AlmostVTree, target: NodeId) -> Option<(Tree, usize)> {
    if target == h.v {
        return Some((t.clone(), 0));
    }
    let retained: Vec<NodeId> = t
        .children(h.v)
        .iter()
        .copied()
        .filter(|c| !h.removed_children.contains(c))
        .collect();
    if retained.iter().any(|&c| is_ancestor(t, c, target)) {
        return None;
    }
    let steps = path_len(t, h.v, target)? + 1;
    let mut raw = t.to_raw();
    raw[h.v].children.retain(|c| !retained.contains(c));
    raw[target].children.extend(&retained);
    let moved = Tree::from_raw(&raw, t.root()).ok()?;
    Some((moved, steps * retained.len()))
}

/// Aligns the roots of a matched pair when earlier contractions tagged them.
/// If only one root is tagged, the other side's almost v-tree moves under
/// the node holding the same atom; if both are tagged differently, the
/// cheaper of the two relocations is used, preferring to move `a` on ties.
pub fn align_contraction_roots(a: &Tree, b: &Tree, sol: &McatSolution) -> (Tree, Tree, usize) {
    let (ta, tb) = (tag(a, sol.in_p.v), tag(b, sol.in_q.v));
    let move_b = |l: i32| atom_parent(b, l).and_then(|target| relocate(b, &sol.in_q, target));
    let move_a = |l: i32| atom_parent(a, l).and_then(|target| relocate(a, &sol.in_p, target));
    match (ta, tb) {
        (None, None) => (a.clone(), b.clone(), 0),
        (Some(x), Some(y)) if x == y => (a.clone(), b.clone(), 0),
        (Some(x), None) => match move_b(x) {
            Some((nb, c)) => (a.clone(), nb, c),
            None => (a.clone(), b.clone(), 0),
        },
        (None, Some(y)) => match move_a(y) {
            Some((na, c)) => (na, b.clone(), c),
            None => (a.clone(), b.clone(), 0),
        },
        (Some(x), Some(y)) => match (move_a(y), move_b(x)) {
            (Some((na, ca)), Some((nb, cb))) => {
                if ca <= cb {
                    (na, b.clone(), ca)
                } else {
                    (a.clone(), nb, cb)
                }
            }
            (Some((na, ca)), None) => (na, b.clone(), ca),
            (None, Some((nb, cb))) => (a.clone(), nb, cb),
            (None, None) => (a.clone(), b.clone(), 0),
        },
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
    fn identical_trees_match_entirely() {
        let p = t("((1,2),((3,4),5))");
        let s = solve_mcat(&p, &p).unwrap();
        assert_eq!(s.leaf_count, 5);
        assert_eq!(s.in_p.v, p.root());
        assert!(s.in_p.removed_children.is_empty());
        assert_eq!(s.iso_cost, 0);
    }

    #[test]
    fn same_shape_same_leaves_matches_whole_trees() {
        // 3 and 5 sit in different branches, but the shapes agree and both
        // sides hold all six leaves, so the roots qualify
        let p = t("((1(2(3,4)))(5,6))");
        let q = t("((1(2(5,4)))(3,6))");
        let s = solve_mcat(&p, &q).unwrap();
        assert_eq!(s.leaf_count, 6);
        assert_eq!(s.in_p.v, p.root());
        assert!(s.in_q.removed_children.is_empty());
    }

    #[test]
    fn shape_mismatch_forces_partial_match() {
        let p = t("((1,2),(3,4),5)");
        let q = t("((1,2,3),(4,5))");
        let s = solve_mcat(&p, &q).unwrap();
        assert!(s.leaf_count < 5);
        assert!(s.leaf_count >= 2);
    }

    #[test]
    fn floor_case_is_a_single_leaf() {
        let p = t("(1,2)");
        let q = t("(1,2)");
        assert_eq!(solve_mcat(&p, &q).unwrap().leaf_count, 2);
        let a = p.contract(p.root(), &[], -1).unwrap();
        let b = q.contract(q.root(), &[], -1).unwrap();
        let s = solve_mcat(&a, &b).unwrap();
        assert_eq!(s.leaf_count, 1);
        assert!(solve_mcat(&p, &t("(1,2,3)")).is_err());
    }

    #[test]
    fn assignment_respects_forbidden_cells() {
        let m = vec![vec![Some(4), None, Some(1)], vec![Some(2), Some(0), None]];
        let mut p = min_assignment(&m);
        p.sort();
        assert_eq!(p, vec![(0, 2), (1, 1)]);
        let tall = vec![vec![Some(3)], vec![Some(1)], vec![None]];
        assert_eq!(min_assignment(&tall), vec![(1, 0)]);
    }

    #[test]
    fn alignment_without_tags_is_free() {
        let p = t("((1,2),3)");
        let s = solve_mcat(&p, &p).unwrap();
        let (_, _, c) = align_contraction_roots(&p, &p, &s);
        assert_eq!(c, 0);
    }
}
