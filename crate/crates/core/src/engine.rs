//! The general distance: bracket-set mappings, move scripts realizing them,
//! and the recursion driven by MCAT contraction.
//!
//! A mapping pairs internal nodes of `a` with internal nodes of `b`. An
//! executor turns a mapping into a sequence of one-level relocations on a
//! working copy of `a` where node identities are stable; the visited states
//! are then re-expressed as legal moves and shortened wherever two states of
//! the sequence turn out to be a single move apart. Several mappings and
//! executors are tried and the shortest script wins, so the reported value
//! is always the length of a replayable script.

use std::collections::{HashMap, HashSet};

use crate::error::{MutreeError, Result};
use crate::mcat::{
    align_contraction_roots, min_assignment, solve_mcat_weighted, tree_info, IsoSolver,
    McatSolution, ShapeTable, Weights,
};
use crate::tree::{Direction, Label, Move, MoveSequence, NodeId, Tree};

/// `mapping[x] = Some(y)` pairs internal node `x` of `a` with internal node `y` of `b`.
pub type Mapping = Vec<Option<NodeId>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub solution: McatSolution,
    pub cost: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceResult {
    pub value: usize,
    pub script: MoveSequence,
    pub trace: Vec<TraceStep>,
}

/// Partial mappings are enumerated exhaustively while their count stays
/// within this limit, scaled down by the squared leaf count past six leaves.
const EXHAUSTIVE_MAPPINGS: usize = 400;
const EXHAUSTIVE_BASE_LEAVES: usize = 6;

// ---------------------------------------------------------------------------
// working tree with stable node ids

struct Work {
    parent: Vec<Option<usize>>,
    kids: Vec<Vec<usize>>,
    leaf: Vec<Option<u32>>,
    states: Vec<Tree>,
}

impl Work {
    fn new(t: &Tree) -> Work {
        let n = t.len();
        let mut w = Work {
            parent: (0..n).map(|i| t.parent(i)).collect(),
            kids: (0..n).map(|i| t.children(i).to_vec()).collect(),
            leaf: (0..n)
                .map(|i| match t.node(i).label {
                    Label::Leaf(l) => Some(l),
                    _ => None,
                })
                .collect(),
            states: Vec::new(),
        };
        w.states.push(t.clone());
        w
    }

    fn add_node(&mut self, p: usize) -> usize {
        let id = self.parent.len();
        self.parent.push(Some(p));
        self.kids.push(Vec::new());
        self.leaf.push(None);
        self.kids[p].push(id);
        id
    }

    fn normalized(&self) -> Tree {
        let raw: Vec<crate::tree::RawNode> = (0..self.parent.len())
            .map(|i| crate::tree::RawNode {
                label: match self.leaf[i] {
                    Some(l) => Label::Leaf(l),
                    None => Label::Internal(None),
                },
                children: self.kids[i].clone(),
            })
            .collect();
        Tree::from_raw(&raw, 0).expect("working tree keeps its leaves")
    }

    fn relocate(&mut self, x: usize, p: usize) {
        let old = self.parent[x].expect("root never moves");
        self.kids[old].retain(|&c| c != x);
        self.parent[x] = Some(p);
        self.kids[p].push(x);
        let s = self.normalized();
        if *self.states.last().unwrap() != s {
            self.states.push(s);
        }
    }

    fn ancestors(&self, mut x: usize) -> Vec<usize> {
        let mut v = vec![x];
        while let Some(p) = self.parent[x] {
            v.push(p);
            x = p;
        }
        v
    }

    fn is_ancestor(&self, anc: usize, x: usize) -> bool {
        self.ancestors(x).contains(&anc)
    }

    /// Parents `x` passes through on its way into `target`: up to the
    /// lowest common ancestor, then down.
    fn path(&self, x: usize, target: usize) -> Vec<usize> {
        let ta = self.ancestors(target);
        let mut cur = self.parent[x].unwrap();
        let mut steps = Vec::new();
        while !ta.contains(&cur) {
            cur = self.parent[cur].unwrap();
            steps.push(cur);
        }
        let i = ta.iter().position(|&n| n == cur).unwrap();
        steps.extend(ta[..i].iter().rev());
        steps
    }

    fn walk(&mut self, x: usize, target: usize) {
        for p in self.path(x, target) {
            self.relocate(x, p);
        }
    }

    fn leaf_count(&self, x: usize) -> usize {
        if self.leaf[x].is_some() {
            1
        } else {
            self.kids[x].iter().map(|&c| self.leaf_count(c)).sum()
        }
    }
}

struct Target<'a> {
    a: &'a Tree,
    b: &'a Tree,
    f: Mapping,
    finv: Vec<Option<NodeId>>,
    /// working-tree id of each leaf label's node in `a`
    leaf_at: HashMap<u32, usize>,
}

impl<'a> Target<'a> {
    fn new(a: &'a Tree, b: &'a Tree, f: &Mapping) -> Target<'a> {
        let mut finv = vec![None; b.len()];
        for (x, y) in f.iter().enumerate() {
            if let Some(y) = *y {
                finv[y] = Some(x);
            }
        }
        finv[b.root()] = Some(a.root());
        let leaf_at = (0..a.len())
            .filter_map(|i| match a.node(i).label {
                Label::Leaf(l) => Some((l, i)),
                _ => None,
            })
            .collect();
        Target {
            a,
            b,
            f: f.clone(),
            finv,
            leaf_at,
        }
    }

    fn leaf_of(&self, bnode: NodeId) -> Option<usize> {
        match self.b.node(bnode).label {
            Label::Leaf(l) => Some(self.leaf_at[&l]),
            _ => None,
        }
    }
}

/// Top-down executor: walks `b` from the root, pulling each node's matched
/// children into place (creating unmatched ones empty), then its leaves.
/// With `bundle`, an unmatched node of `a` whose items all share the
/// destination travels as a block and is dissolved on arrival.
fn execute_top_down(tg: &Target, bundle: bool, deep_first: bool) -> Option<Vec<Tree>> {
    let (a, b) = (tg.a, tg.b);
    let mut w = Work::new(a);
    let mut fixed = vec![false; a.len()];
    for y in 0..b.len() {
        if let Some(x) = tg.finv[y] {
            fixed[x] = true;
        }
    }
    let mut image: Vec<Option<usize>> = vec![None; b.len()];
    image[b.root()] = Some(w_root());
    let mut target: HashMap<usize, usize> = HashMap::new();
    let mut order = vec![b.root()];
    let mut i = 0;
    while i < order.len() {
        let y = order[i];
        i += 1;
        let iy = image[y].unwrap();
        for &c in b.children(y) {
            if let Some(l) = tg.leaf_of(c) {
                target.insert(l, iy);
            } else if let Some(x) = tg.finv[c] {
                image[c] = Some(x);
                target.insert(x, iy);
            }
        }
        for &c in b.children(y) {
            if tg.leaf_of(c).is_some() {
                continue;
            }
            match image[c] {
                Some(x) => {
                    if w.parent[x] != Some(iy) {
                        if w.is_ancestor(x, iy) {
                            return None;
                        }
                        w.walk(x, iy);
                    }
                }
                None => {
                    let n = w.add_node(iy);
                    fixed.push(true);
                    image[c] = Some(n);
                }
            }
            order.push(c);
        }
        let mut leaves: Vec<usize> = b
            .children(y)
            .iter()
            .filter_map(|&c| tg.leaf_of(c))
            .collect();
        leaves.sort_by_key(|&x| {
            let d = w.ancestors(x).len() as isize;
            if deep_first {
                -d
            } else {
                d
            }
        });
        for x in leaves {
            if w.parent[x] == Some(iy) {
                continue;
            }
            if bundle {
                let mut block = None;
                let mut c = w.parent[x];
                while let Some(u) = c {
                    if fixed[u] || w.is_ancestor(u, iy) {
                        break;
                    }
                    if all_items_target(&w, &fixed, &target, u, iy) {
                        block = Some(u);
                    }
                    c = w.parent[u];
                }
                if let Some(u) = block {
                    if w.parent[u] != Some(iy) {
                        w.walk(u, iy);
                    }
                    dissolve(&mut w, &fixed, u);
                    continue;
                }
            }
            w.walk(x, iy);
        }
    }
    (*w.states.last().unwrap() == *b).then_some(w.states)
}

fn w_root() -> usize {
    0
}

fn all_items_target(
    w: &Work,
    fixed: &[bool],
    target: &HashMap<usize, usize>,
    u: usize,
    dest: usize,
) -> bool {
    w.kids[u].iter().all(|&c| {
        if w.leaf[c].is_some() || fixed[c] {
            target.get(&c) == Some(&dest)
        } else {
            all_items_target(w, fixed, target, c, dest)
        }
    })
}

fn dissolve(w: &mut Work, fixed: &[bool], u: usize) {
    let p = w.parent[u].unwrap();
    for c in w.kids[u].clone() {
        w.relocate(c, p);
        if w.leaf[c].is_none() && !fixed[c] {
            dissolve(w, fixed, c);
        }
    }
}

#[derive(Clone, Copy)]
struct BottomUp {
    /// gather the closest children first
    near_first: bool,
    /// build a new node from its largest co-located group of children and
    /// carry it to the others, instead of bringing them to one anchor
    travel: bool,
    /// flatten every unmatched node of `a` and push out of each matched node
    /// the children sharing no leaf with its image, before anything else
    prepare: bool,
}

/// Bottom-up executor: completes `b`'s clusters from the leaves upward.
/// A matched node gathers its children and evicts everything else; an
/// unmatched node is created around children brought next to each other.
fn execute_bottom_up(tg: &Target, policy: BottomUp) -> Option<Vec<Tree>> {
    let (a, b) = (tg.a, tg.b);
    let near_first = policy.near_first;
    let mut w = Work::new(a);
    if policy.prepare {
        let mut fixed = vec![false; a.len()];
        for x in tg.finv.iter().flatten() {
            fixed[*x] = true;
        }
        for x in 0..a.len() {
            if x != a.root() && a.is_internal(x) && !fixed[x] && !w.kids[x].is_empty() {
                dissolve(&mut w, &fixed, x);
            }
        }
        let bsets = b.leafsets();
        let asets = a.leafsets();
        for x in 0..a.len() {
            let (Some(y), Some(p)) = (tg.f[x], w.parent[x]) else {
                continue;
            };
            for c in w.kids[x].clone() {
                if !asets[c].iter().any(|l| bsets[y].binary_search(l).is_ok()) {
                    w.relocate(c, p);
                }
            }
        }
    }
    let mut image: Vec<Option<usize>> = vec![None; b.len()];
    for y in 0..b.len() {
        if let Some(x) = tg.leaf_of(y) {
            image[y] = Some(x);
        }
    }
    // preorder arena: reversed, children come before parents
    for y in (0..b.len()).rev() {
        if !b.is_internal(y) {
            continue;
        }
        let kids: Vec<usize> = b.children(y).iter().map(|&c| image[c].unwrap()).collect();
        match tg.finv[y] {
            Some(iy) => {
                for &c in &kids {
                    if c != iy && w.is_ancestor(c, iy) {
                        let p = w.parent[c]?;
                        w.walk(iy, p);
                    }
                }
                let mut ks: Vec<usize> = kids.clone();
                ks.sort_by_key(|&c| {
                    if w.parent[c] == Some(iy) {
                        0
                    } else {
                        w.path(c, iy).len()
                    }
                });
                if !near_first {
                    ks.reverse();
                }
                for c in ks {
                    if w.parent[c] != Some(iy) {
                        if w.is_ancestor(c, iy) {
                            return None;
                        }
                        w.walk(c, iy);
                    }
                }
                if let Some(p) = w.parent[iy] {
                    for c in w.kids[iy].clone() {
                        if !kids.contains(&c) {
                            w.relocate(c, p);
                        }
                    }
                }
                image[y] = Some(iy);
            }
            None if policy.travel => {
                let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
                for &c in &kids {
                    let p = w.parent[c]?;
                    match groups.iter_mut().find(|g| g.0 == p) {
                        Some(g) => g.1.push(c),
                        None => groups.push((p, vec![c])),
                    }
                }
                let seed = (0..groups.len())
                    .rev()
                    .max_by_key(|&i| groups[i].1.len())
                    .unwrap();
                let (m, first) = groups.remove(seed);
                let n = w.add_node(m);
                for c in first {
                    w.relocate(c, n);
                }
                while !groups.is_empty() {
                    let i = (0..groups.len())
                        .min_by_key(|&i| w.path(n, groups[i].0).len())
                        .unwrap();
                    let (g, members) = groups.remove(i);
                    if w.parent[n] != Some(g) {
                        w.walk(n, g);
                    }
                    for c in members {
                        w.relocate(c, n);
                    }
                }
                image[y] = Some(n);
            }
            None => {
                let anchor = *kids.iter().rev().max_by_key(|&&c| w.leaf_count(c)).unwrap();
                let p = w.parent[anchor]?;
                for &c in &kids {
                    if c != anchor && w.parent[c] != Some(p) {
                        if w.is_ancestor(c, p) {
                            return None;
                        }
                        w.walk(c, p);
                    }
                }
                let n = w.add_node(p);
                w.relocate(anchor, n);
                for &c in &kids {
                    if c != anchor {
                        w.relocate(c, n);
                    }
                }
                image[y] = Some(n);
            }
        }
    }
    (*w.states.last().unwrap() == *b).then_some(w.states)
}

// ---------------------------------------------------------------------------
// turning state sequences into legal move scripts

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Additive hash of each node's leaf set.
fn node_hashes(t: &Tree) -> Vec<u64> {
    let mut h = vec![0u64; t.len()];
    for id in (0..t.len()).rev() {
        h[id] = match t.node(id).label {
            Label::Leaf(l) => mix(l as u64),
            _ => t
                .children(id)
                .iter()
                .fold(0u64, |acc, &c| acc.wrapping_add(h[c])),
        };
    }
    h
}

fn cluster_hashes(t: &Tree, h: &[u64]) -> Vec<u64> {
    let mut v: Vec<u64> = (0..t.len())
        .filter(|&i| i != t.root() && t.is_internal(i))
        .map(|i| h[i])
        .collect();
    v.sort_unstable();
    v
}

fn fingerprint(t: &Tree) -> Vec<u64> {
    cluster_hashes(t, &node_hashes(t))
}

/// Entries of `a` missing from `b` and of `b` missing from `a`; both sorted.
fn sorted_difference(a: &[u64], b: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let (mut i, mut j) = (0, 0);
    let (mut only_a, mut only_b) = (Vec::new(), Vec::new());
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            only_a.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            only_b.push(b[j]);
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    (only_a, only_b)
}

fn sorted_diff_count(a: &[u64], b: &[u64], limit: usize) -> usize {
    let (mut i, mut j, mut d) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            i += 1;
            j += 1;
        } else {
            d += 1;
            if d > limit {
                return d;
            }
            if a[i] < b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    d + (a.len() - i) + (b.len() - j)
}

fn node_by_set(t: &Tree, sets: &[Vec<u32>], s: &[u32]) -> Option<NodeId> {
    (0..t.len()).find(|&i| sets[i] == s)
}

fn is_sub(a: &[u32], b: &[u32]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// The single move turning `s` into `t`, if there is one.
pub fn single_move(s: &Tree, t: &Tree) -> Option<Move> {
    let hs = node_hashes(s);
    let (removed, added) = sorted_difference(&cluster_hashes(s, &hs), &fingerprint(t));
    let internal = |h: u64| (0..s.len()).find(|&i| i != s.root() && s.is_internal(i) && hs[i] == h);
    let child_with = |p: NodeId, h: u64| s.children(p).iter().copied().find(|&c| hs[c] == h);
    let cand = match (removed.as_slice(), added.as_slice()) {
        ([x], []) => {
            let xn = internal(*x)?;
            (s.children(xn).len() == 2).then(|| Move {
                subject: s.children(xn)[0],
                direction: Direction::Up,
            })
        }
        ([], [y]) => (0..s.len())
            .filter(|&p| s.children(p).len() >= 3)
            .find_map(|p| {
                let kids = s.children(p);
                kids.iter().enumerate().find_map(|(i, &c)| {
                    kids[i + 1..]
                        .iter()
                        .find(|&&d| hs[c].wrapping_add(hs[d]) == *y)
                        .map(|&d| Move {
                            subject: c,
                            direction: Direction::Pair(d),
                        })
                })
            }),
        ([x], [y]) => {
            let xn = internal(*x)?;
            let out = child_with(xn, x.wrapping_sub(*y)).map(|c| Move {
                subject: c,
                direction: Direction::Up,
            });
            out.or_else(|| {
                let p = s.parent(xn)?;
                child_with(p, y.wrapping_sub(*x)).map(|c| Move {
                    subject: c,
                    direction: Direction::Down(xn),
                })
            })
        }
        _ => None,
    }?;
    match s.apply_move(&cand) {
        Ok(r) if r == *t => Some(cand),
        _ => None,
    }
}

/// Legal moves from `s` to `t` that delete every cluster missing from `t`
/// and then build every missing cluster from the smallest up. A bracket
/// with k children costs k - 1 moves either way.
pub fn rebuild_path(s: &Tree, t: &Tree) -> Vec<(Move, Tree)> {
    if let Some(m) = single_move(s, t) {
        return vec![(m, t.clone())];
    }
    let mut out = Vec::new();
    let tclusters: HashSet<Vec<u32>> = t.clusters().into_iter().collect();
    let mut cur = s.clone();
    loop {
        let sets = cur.leafsets();
        let Some(x) = (0..cur.len())
            .find(|&i| i != cur.root() && cur.is_internal(i) && !tclusters.contains(&sets[i]))
        else {
            break;
        };
        let m = Move {
            subject: cur.children(x)[0],
            direction: Direction::Up,
        };
        cur = cur
            .apply_move(&m)
            .expect("up-move out of a non-root bracket");
        out.push((m, cur.clone()));
    }
    let mut missing: Vec<Vec<u32>> = {
        let have: HashSet<Vec<u32>> = cur.clusters().into_iter().collect();
        tclusters
            .into_iter()
            .filter(|c| !have.contains(c))
            .collect()
    };
    missing.sort_by(|x, y| x.len().cmp(&y.len()).then(x.cmp(y)));
    for y in missing {
        let sets = cur.leafsets();
        let p = (0..cur.len())
            .filter(|&i| cur.is_internal(i) && is_sub(&y, &sets[i]))
            .min_by_key(|&i| sets[i].len())
            .expect("the root contains every cluster");
        let items: Vec<Vec<u32>> = cur
            .children(p)
            .iter()
            .filter(|&&c| is_sub(&sets[c], &y))
            .map(|&c| sets[c].clone())
            .collect();
        let m = Move {
            subject: node_by_set(&cur, &sets, &items[0]).unwrap(),
            direction: Direction::Pair(node_by_set(&cur, &sets, &items[1]).unwrap()),
        };
        cur = cur
            .apply_move(&m)
            .expect("pairing inside a parent with three children");
        out.push((m, cur.clone()));
        let mut built: Vec<u32> = items[0].iter().chain(&items[1]).copied().collect();
        built.sort_unstable();
        for item in &items[2..] {
            let sets = cur.leafsets();
            let m = Move {
                subject: node_by_set(&cur, &sets, item).unwrap(),
                direction: Direction::Down(node_by_set(&cur, &sets, &built).unwrap()),
            };
            cur = cur.apply_move(&m).expect("moving into the new bracket");
            out.push((m, cur.clone()));
            built.extend(item);
            built.sort_unstable();
        }
    }
    debug_assert_eq!(&cur, t);
    out
}

/// Expands arbitrary consecutive states into single moves.
fn legalize(states: &[Tree]) -> Vec<Tree> {
    let mut out = vec![states[0].clone()];
    for pair in states.windows(2) {
        for (_, t) in rebuild_path(&pair[0], &pair[1]) {
            out.push(t);
        }
    }
    out
}

/// Drops detours: from each state, jump to the furthest later state that is
/// identical or a single move away.
///
/// `states` must be single moves apart. A move changes at most two entries
/// of the cluster multiset, so a state differing from `states[i]` in `d`
/// entries rules out its `(d - 1) / 2 - 1` predecessors as well.
fn shortcut(states: &[Tree]) -> Vec<Tree> {
    let prints: Vec<Vec<u64>> = states.iter().map(fingerprint).collect();
    let last = states.len() - 1;
    let mut out = vec![states[0].clone()];
    let mut i = 0;
    while i < last {
        let mut next = i + 1;
        let mut j = last;
        while j > i + 1 {
            let d = sorted_diff_count(&prints[i], &prints[j], usize::MAX);
            if d == 0 && states[i] == states[j] {
                next = j;
                break;
            }
            if d <= 2 && single_move(&states[i], &states[j]).is_some() {
                next = j;
                break;
            }
            j -= 1.max(d.saturating_sub(1) / 2);
        }
        if states[next] == states[i] {
            i = next;
            continue;
        }
        out.push(states[next].clone());
        i = next;
    }
    out
}

/// Index pair `i < j - 2` whose states are two moves apart, with a state
/// between them.
fn two_move_jump(states: &[Tree]) -> Option<(usize, Tree, usize)> {
    let prints: Vec<Vec<u64>> = states.iter().map(fingerprint).collect();
    let mut near: Vec<Option<HashSet<Tree>>> = vec![None; states.len()];
    for i in 0..states.len() {
        for j in (i + 3..states.len()).rev() {
            if sorted_diff_count(&prints[i], &prints[j], 4) > 4 {
                continue;
            }
            for k in [i, j] {
                if near[k].is_none() {
                    near[k] = Some(states[k].neighbors().into_iter().collect());
                }
            }
            let (ni, nj) = (near[i].as_ref().unwrap(), near[j].as_ref().unwrap());
            let (small, large) = if ni.len() <= nj.len() {
                (ni, nj)
            } else {
                (nj, ni)
            };
            if let Some(m) = small
                .iter()
                .filter(|m| large.contains(*m))
                .min_by_key(|m| m.to_string())
            {
                return Some((i, m.clone(), j));
            }
        }
    }
    None
}

/// Largest leaf count on which paths are searched for two-move shortcuts.
const TIGHTEN_MAX_LEAVES: usize = 12;

/// Largest leaf count on which paths are re-solved in halves.
const REFINE_MAX_LEAVES: usize = 12;

fn serialize_key(t: &Tree) -> String {
    t.code(t.root())
}

/// Replaces stretches of three or more moves whose ends are two moves apart.
fn tighten(mut states: Vec<Tree>) -> Vec<Tree> {
    while let Some((i, mid, j)) = two_move_jump(&states) {
        let mut next = states[..=i].to_vec();
        next.push(mid);
        next.extend_from_slice(&states[j..]);
        states = shortcut(&next);
    }
    states
}

fn script_of(states: &[Tree]) -> MoveSequence {
    MoveSequence {
        steps: states
            .windows(2)
            .map(|p| single_move(&p[0], &p[1]).expect("consecutive states differ by one move"))
            .collect(),
    }
}

fn polish(states: &[Tree]) -> Vec<Tree> {
    let mut cur = shortcut(&legalize(states));
    loop {
        let next = shortcut(&cur);
        if next.len() >= cur.len() {
            return cur;
        }
        cur = next;
    }
}

/// Raw state sequences of every executor on one mapping.
fn runs(a: &Tree, b: &Tree, f: &Mapping) -> Vec<Vec<Tree>> {
    let tg = Target::new(a, b, f);
    let bu = |near_first, travel, prepare| BottomUp {
        near_first,
        travel,
        prepare,
    };
    [
        execute_top_down(&tg, true, true),
        execute_top_down(&tg, true, false),
        execute_top_down(&tg, false, true),
        execute_top_down(&tg, false, false),
        execute_bottom_up(&tg, bu(true, false, false)),
        execute_bottom_up(&tg, bu(false, false, false)),
        execute_bottom_up(&tg, bu(true, true, false)),
        execute_bottom_up(&tg, bu(true, true, true)),
        execute_bottom_up(&tg, bu(true, false, true)),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// Every move creates, deletes or changes exactly one cluster.
fn cluster_lower_bound(a: &Tree, b: &Tree) -> usize {
    let ca: HashSet<Vec<u32>> = a.clusters().into_iter().collect();
    let cb: HashSet<Vec<u32>> = b.clusters().into_iter().collect();
    ca.difference(&cb).count().max(cb.difference(&ca).count())
}

/// Shortest polished path over all executors and mappings; stops early once
/// the cluster lower bound is met.
fn realize(a: &Tree, b: &Tree, maps: &[Mapping]) -> Vec<Tree> {
    let floor = cluster_lower_bound(a, b) + 1;
    let mut best = polish(&[a.clone(), b.clone()]);
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for f in maps {
        for run in runs(a, b, f) {
            if best.len() <= floor {
                return best;
            }
            let key: Vec<u64> = run
                .iter()
                .map(|t| {
                    fingerprint(t)
                        .iter()
                        .fold(0u64, |acc, &h| acc.wrapping_add(mix(h)))
                })
                .collect();
            if !seen.insert(key) {
                continue;
            }
            let p = polish(&run);
            if p.len() < best.len() {
                best = p;
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// mappings

fn cluster_index(t: &Tree) -> HashMap<Vec<u32>, NodeId> {
    let sets = t.leafsets();
    (0..t.len())
        .filter(|&i| t.is_internal(i))
        .map(|i| (sets[i].clone(), i))
        .collect()
}

fn expanded_leafsets(t: &Tree, expansion: &HashMap<i32, Vec<u32>>) -> Vec<Vec<u32>> {
    let mut sets: Vec<Vec<u32>> = vec![Vec::new(); t.len()];
    for id in (0..t.len()).rev() {
        sets[id] = match t.node(id).label {
            Label::Leaf(l) => vec![l],
            Label::Contracted(c) => expansion[&c].clone(),
            Label::Internal(_) => {
                let mut s: Vec<u32> = t
                    .children(id)
                    .iter()
                    .flat_map(|&c| sets[c].iter().copied())
                    .collect();
                s.sort_unstable();
                s
            }
        };
    }
    sets
}

fn pair_up(f: &mut Mapping, used: &mut [bool], x: Option<NodeId>, y: Option<NodeId>) {
    if let (Some(x), Some(y)) = (x, y) {
        if f[x].is_none() && !used[y] {
            f[x] = Some(y);
            used[y] = true;
        }
    }
}

/// Pairs remaining unmatched clusters by minimum total of
/// `|X Δ Y| - |X| - |Y|`, keeping only pairs that overlap.
fn complete_by_overlap(a: &Tree, b: &Tree, f: &mut Mapping, used: &mut [bool]) {
    let (sa, sb) = (a.leafsets(), b.leafsets());
    let xs: Vec<NodeId> = (0..a.len())
        .filter(|&i| a.is_internal(i) && f[i].is_none())
        .collect();
    let ys: Vec<NodeId> = (0..b.len())
        .filter(|&j| b.is_internal(j) && !used[j])
        .collect();
    let m: Vec<Vec<Option<i64>>> = xs
        .iter()
        .map(|&x| {
            ys.iter()
                .map(|&y| {
                    let inter = sa[x]
                        .iter()
                        .filter(|l| sb[y].binary_search(l).is_ok())
                        .count();
                    Some(-2 * inter as i64)
                })
                .collect()
        })
        .collect();
    for (i, j) in min_assignment(&m) {
        if m[i][j].unwrap() < 0 {
            f[xs[i]] = Some(ys[j]);
            used[ys[j]] = true;
        }
    }
}

fn empty_mapping(a: &Tree, b: &Tree) -> (Mapping, Vec<bool>) {
    let mut f = vec![None; a.len()];
    let mut used = vec![false; b.len()];
    f[a.root()] = Some(b.root());
    used[b.root()] = true;
    (f, used)
}

/// Mapping grown from successive MCAT solutions; with `align`, tagged roots
/// are aligned before each contraction.
fn mcat_mapping(a: &Tree, b: &Tree, align: bool) -> (Mapping, Vec<TraceStep>) {
    let (mut f, mut used) = empty_mapping(a, b);
    let (ia, ib) = (cluster_index(a), cluster_index(b));
    let mut ca = a.clone();
    let mut cb = b.clone();
    let mut weights = Weights::new();
    let mut expansion: HashMap<i32, Vec<u32>> = HashMap::new();
    let mut trace = Vec::new();
    let mut next = -1i32;
    while let Some(sol) = solve_mcat_weighted(&ca, &cb, &weights) {
        let (ea, eb) = (
            expanded_leafsets(&ca, &expansion),
            expanded_leafsets(&cb, &expansion),
        );
        for &(x, y) in &sol.interior {
            pair_up(
                &mut f,
                &mut used,
                ia.get(&ea[x]).copied(),
                ib.get(&eb[y]).copied(),
            );
        }
        pair_up(
            &mut f,
            &mut used,
            ia.get(&ea[sol.in_p.v]).copied(),
            ib.get(&eb[sol.in_q.v]).copied(),
        );
        let (aa, ab, align_cost) = align_contraction_roots(&ca, &cb, &sol);
        let mut leaves: Vec<u32> = sol
            .tokens
            .iter()
            .flat_map(|&t| {
                if t > 0 {
                    vec![t as u32]
                } else {
                    expansion[&(t as i32)].clone()
                }
            })
            .collect();
        leaves.sort_unstable();
        weights.insert(next, leaves.len());
        expansion.insert(next, leaves);
        let moved_a = align && aa != ca;
        let moved_b = align && ab != cb;
        let tag_a = tag_of(&ca, sol.in_p.v);
        let tag_b = tag_of(&cb, sol.in_q.v);
        ca = ca
            .contract(sol.in_p.v, &sol.in_p.removed_children, next)
            .expect("solution nodes belong to the tree");
        cb = cb
            .contract(sol.in_q.v, &sol.in_q.removed_children, next)
            .expect("solution nodes belong to the tree");
        if moved_a {
            if let Some(l) = tag_b {
                ca = move_atom_next_to(&ca, next, l);
            }
        }
        if moved_b {
            if let Some(l) = tag_a {
                cb = move_atom_next_to(&cb, next, l);
            }
        }
        trace.push(TraceStep {
            cost: sol.iso_cost + if align { align_cost } else { 0 },
            solution: sol,
        });
        next -= 1;
        if ca.len() == 1 && cb.len() == 1 {
            break;
        }
    }
    complete_by_overlap(a, b, &mut f, &mut used);
    (f, trace)
}

fn tag_of(t: &Tree, v: NodeId) -> Option<i32> {
    match t.node(v).label {
        Label::Internal(tag) => tag,
        _ => None,
    }
}

fn move_atom_next_to(t: &Tree, atom: i32, anchor: i32) -> Tree {
    let find = |l: i32| (0..t.len()).find(|&i| t.node(i).label == Label::Contracted(l));
    let (Some(x), Some(y)) = (find(atom), find(anchor)) else {
        return t.clone();
    };
    let (Some(px), Some(py)) = (t.parent(x), t.parent(y)) else {
        return t.clone();
    };
    if px == py {
        return t.clone();
    }
    let mut raw = t.to_raw();
    raw[px].children.retain(|&c| c != x);
    raw[py].children.push(x);
    Tree::from_raw(&raw, t.root()).unwrap_or_else(|_| t.clone())
}

/// Pairs identical clusters first (when `prematch`), the rest by overlap.
fn overlap_mapping(a: &Tree, b: &Tree, prematch: bool) -> Mapping {
    let (mut f, mut used) = empty_mapping(a, b);
    if prematch {
        let ib = cluster_index(b);
        let sa = a.leafsets();
        for x in 0..a.len() {
            if a.is_internal(x) && f[x].is_none() {
                pair_up(&mut f, &mut used, Some(x), ib.get(&sa[x]).copied());
            }
        }
    }
    complete_by_overlap(a, b, &mut f, &mut used);
    f
}

fn count_injections(p: usize, q: usize, limit: usize) -> usize {
    // sum over k of C(p,k) * q!/(q-k)!
    let mut total = 0usize;
    let mut choose = 1usize;
    let mut perm = 1usize;
    for k in 0..=p.min(q) {
        total = total.saturating_add(choose.saturating_mul(perm));
        if total > limit {
            return total;
        }
        choose = choose * (p - k) / (k + 1);
        perm = perm.saturating_mul(q - k);
    }
    total
}

/// Every partial injection between non-root internal nodes, if there are
/// few enough of them.
fn all_mappings(a: &Tree, b: &Tree) -> Vec<Mapping> {
    let xs: Vec<NodeId> = (0..a.len())
        .filter(|&i| i != a.root() && a.is_internal(i))
        .collect();
    let ys: Vec<NodeId> = (0..b.len())
        .filter(|&j| j != b.root() && b.is_internal(j))
        .collect();
    let n = a.n_leaves().max(EXHAUSTIVE_BASE_LEAVES);
    let limit = EXHAUSTIVE_MAPPINGS * EXHAUSTIVE_BASE_LEAVES.pow(2) / (n * n);
    if count_injections(xs.len(), ys.len(), limit) > limit {
        return Vec::new();
    }
    let (base, _) = empty_mapping(a, b);
    let mut out = Vec::new();
    fn rec(
        i: usize,
        xs: &[NodeId],
        ys: &[NodeId],
        used: &mut Vec<bool>,
        f: &mut Mapping,
        out: &mut Vec<Mapping>,
    ) {
        if i == xs.len() {
            out.push(f.clone());
            return;
        }
        rec(i + 1, xs, ys, used, f, out);
        for (j, &y) in ys.iter().enumerate() {
            if !used[j] {
                used[j] = true;
                f[xs[i]] = Some(y);
                rec(i + 1, xs, ys, used, f, out);
                f[xs[i]] = None;
                used[j] = false;
            }
        }
    }
    let mut f = base;
    rec(0, &xs, &ys, &mut vec![false; ys.len()], &mut f, &mut out);
    out
}

/// Candidate mappings in a fixed order, deduplicated.
fn mappings(a: &Tree, b: &Tree) -> (Vec<Mapping>, Vec<TraceStep>) {
    let (m1, trace) = mcat_mapping(a, b, false);
    let (m2, _) = mcat_mapping(a, b, true);
    let mut list = vec![
        m1,
        m2,
        overlap_mapping(a, b, true),
        overlap_mapping(a, b, false),
    ];
    list.extend(all_mappings(a, b));
    let mut seen = HashSet::new();
    list.retain(|m| seen.insert(m.clone()));
    (list, trace)
}

fn best_path(a: &Tree, b: &Tree) -> (Vec<Tree>, Vec<TraceStep>) {
    let (maps, trace) = mappings(a, b);
    (realize(a, b, &maps), trace)
}

/// Distance between two trees over the same leaves, with a replayable script.
///
/// The value is the length of the shortest script found in either direction
/// (a script from `b` to `a` is reversed), which makes the value symmetric.
pub fn tree_distance(a: &Tree, b: &Tree) -> Result<DistanceResult> {
    if a.leaf_labels() != b.leaf_labels() {
        return Err(MutreeError::Incomparable);
    }
    if a == b {
        return Ok(DistanceResult {
            value: 0,
            script: MoveSequence::default(),
            trace: Vec::new(),
        });
    }
    if serialize_key(b) < serialize_key(a) {
        let mut d = tree_distance(b, a)?;
        d.script = script_of(&{
            let mut states = d.script.replay_states(b)?;
            states.reverse();
            states
        });
        return Ok(d);
    }
    let (mut states, trace) = base_path(a, b);
    if a.n_leaves() <= REFINE_MAX_LEAVES {
        while let Some(shorter) = split_at_middle(a, b, &states) {
            states = shorter;
        }
    }
    let script = script_of(&states);
    Ok(DistanceResult {
        value: script.cost(),
        script,
        trace,
    })
}

/// Re-solves both halves around each middle state of a path, returning the
/// first concatenation that is shorter than the path.
fn split_at_middle(a: &Tree, b: &Tree, states: &[Tree]) -> Option<Vec<Tree>> {
    let moves = states.len() - 1;
    if moves < 3 {
        return None;
    }
    let mut mids = vec![moves / 2, moves.div_ceil(2)];
    mids.dedup();
    mids.into_iter().find_map(|mid| {
        let (mut left, _) = base_path(a, &states[mid]);
        let (right, _) = base_path(&states[mid], b);
        (left.len() + right.len() - 1 < states.len()).then(|| {
            left.extend_from_slice(&right[1..]);
            left
        })
    })
}

/// Shorter of the forward and reversed backward runs, tightened on small trees.
fn base_path(a: &Tree, b: &Tree) -> (Vec<Tree>, Vec<TraceStep>) {
    if a == b {
        return (vec![a.clone()], Vec::new());
    }
    let (fwd, trace) = best_path(a, b);
    let (mut back, _) = best_path(b, a);
    back.reverse();
    let states = if back.len() < fwd.len() { back } else { fwd };
    if a.n_leaves() <= TIGHTEN_MAX_LEAVES {
        (tighten(states), trace)
    } else {
        (states, trace)
    }
}

/// Distance between shape-isomorphic trees through the isomorphism that
/// minimizes the summed symmetric differences of paired brackets.
pub fn isomorphic_mapping_distance(a: &Tree, b: &Tree) -> Result<DistanceResult> {
    if a.leaf_labels() != b.leaf_labels() {
        return Err(MutreeError::Incomparable);
    }
    let mut shapes = ShapeTable::default();
    let ia = tree_info(a, &mut shapes);
    let ib = tree_info(b, &mut shapes);
    if ia.shape[a.root()] != ib.shape[b.root()] {
        return Err(MutreeError::NotIsomorphic);
    }
    if a == b {
        return Ok(DistanceResult {
            value: 0,
            script: MoveSequence::default(),
            trace: Vec::new(),
        });
    }
    let mut iso = IsoSolver::new(a, b, &ia, &ib);
    let (_, pairs) = iso.node_cost(a.root(), b.root());
    let (mut f, mut used) = empty_mapping(a, b);
    for (x, y) in pairs {
        pair_up(&mut f, &mut used, Some(x), Some(y));
    }
    let states = realize(a, b, &[f]);
    let script = script_of(&states);
    Ok(DistanceResult {
        value: script.cost(),
        script,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::parse_newick;

    fn t(s: &str) -> Tree {
        parse_newick(s).unwrap()
    }

    #[test]
    fn worked_pair() {
        let p = t("((1(2(3,4)))(5,6))");
        let q = t("((1(2(5,4)))(3,6))");
        let d = tree_distance(&p, &q).unwrap();
        assert_eq!(d.value, 8);
        assert_eq!(d.script.replay(&p).unwrap(), q);
        let iso = isomorphic_mapping_distance(&p, &q).unwrap();
        assert_eq!(iso.value, 8);
        assert_eq!(iso.script.replay(&p).unwrap(), q);
    }

    #[test]
    fn identical_is_zero() {
        let p = t("((1,2),(3,4),5)");
        let d = tree_distance(&p, &p).unwrap();
        assert_eq!(d.value, 0);
        assert!(d.script.steps.is_empty());
    }

    #[test]
    fn rebuild_path_is_legal() {
        let p = t("(((1,2),3),(4,5,6))");
        let q = t("((1,(4,5)),(2,3,6))");
        let path = rebuild_path(&p, &q);
        let mut cur = p.clone();
        for (m, next) in &path {
            cur = cur.apply_move(m).unwrap();
            assert_eq!(&cur, next);
        }
        assert_eq!(cur, q);
    }

    #[test]
    fn single_moves_detected_both_ways() {
        let p = t("((1,2,3),4)");
        for m in p.enumerate_moves() {
            let q = p.apply_move(&m).unwrap();
            if q == p {
                continue;
            }
            assert!(single_move(&p, &q).is_some(), "{p} -> {q}");
            assert!(single_move(&q, &p).is_some(), "{q} -> {p}");
        }
    }

    #[test]
    fn non_isomorphic_rejected() {
        assert_eq!(
            isomorphic_mapping_distance(&t("((1,2),3)"), &t("(1,2,3)")),
            Err(MutreeError::NotIsomorphic)
        );
        assert_eq!(
            tree_distance(&t("(1,2)"), &t("(1,2,3)")),
            Err(MutreeError::Incomparable)
        );
    }

    #[test]
    fn injection_counts() {
        assert_eq!(count_injections(3, 3, 1000), 34);
        assert_eq!(count_injections(0, 5, 1000), 1);
        assert!(count_injections(9, 9, 400) > 400);
    }
}
