//! Consensus trees for the median (min-sum) and closest (min-max)
//! objectives: a k-way MCAT construction and a closest-pair midpoint merge,
//! with the matching lower bounds.

use std::collections::HashMap;

use num_rational::Ratio;
use rayon::prelude::*;

use crate::engine::tree_distance;
use crate::error::{MutreeError, Result};
use crate::mcat::{solve_mcat_weighted, Weights};
use crate::tree::{Label, MoveSequence, NodeId, RawNode, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Mcat,
    Midpoint,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mcat => "mcat-consensus",
            Method::Midpoint => "midpoint-merge",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusReport {
    pub candidate: Tree,
    pub method: Method,
    pub median_score: usize,
    pub closest_score: usize,
    pub median_lb: Ratio<u64>,
    pub closest_lb: Ratio<u64>,
    pub pairwise: Vec<Vec<usize>>,
    /// distance from the candidate to each input
    pub per_input_scores: Vec<usize>,
    /// candidate's median score is no worse than that of any input tree
    pub beats_inputs_median: bool,
    /// candidate's closest score is no worse than that of any input tree
    pub beats_inputs_closest: bool,
}

fn check_inputs(trees: &[Tree]) -> Result<()> {
    let first = trees.first().ok_or(MutreeError::EmptyInput)?;
    let leaves = first.leaf_labels();
    if trees[1..].iter().any(|t| t.leaf_labels() != leaves) {
        return Err(MutreeError::Incomparable);
    }
    Ok(())
}

/// All pairwise distances, computed in parallel.
pub fn pairwise_distances(trees: &[Tree]) -> Result<Vec<Vec<usize>>> {
    let k = trees.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let values: Vec<usize> = pairs
        .par_iter()
        .map(|&(i, j)| tree_distance(&trees[i], &trees[j]).map(|d| d.value))
        .collect::<Result<_>>()?;
    let mut m = vec![vec![0; k]; k];
    for (&(i, j), d) in pairs.iter().zip(values) {
        m[i][j] = d;
        m[j][i] = d;
    }
    shorten_through(&mut m);
    Ok(m)
}

/// Lowers each entry to the shortest path through the other trees.
///
/// Every entry is the length of a script, and scripts concatenate, so the
/// result still consists of realizable upper bounds and obeys the triangle
/// inequality.
pub fn shorten_through(m: &mut [Vec<usize>]) {
    let k = m.len();
    for via in 0..k {
        for i in 0..k {
            for j in 0..k {
                let hop = m[i][via] + m[via][j];
                if hop < m[i][j] {
                    m[i][j] = hop;
                }
            }
        }
    }
}

/// Closes the input matrix and the candidate's distances under paths through
/// any of the k + 1 trees.
fn with_candidate(pairwise: Vec<Vec<usize>>, scores: Vec<usize>) -> (Vec<Vec<usize>>, Vec<usize>) {
    let k = pairwise.len();
    let mut m: Vec<Vec<usize>> = pairwise
        .into_iter()
        .zip(&scores)
        .map(|(mut row, &d)| {
            row.push(d);
            row
        })
        .collect();
    m.push(scores.iter().copied().chain([0]).collect());
    shorten_through(&mut m);
    let scores = m.pop().unwrap()[..k].to_vec();
    m.iter_mut().for_each(|row| row.truncate(k));
    (m, scores)
}

/// Distances from `candidate` to each tree.
pub fn distances_to(candidate: &Tree, trees: &[Tree]) -> Result<Vec<usize>> {
    trees
        .par_iter()
        .map(|t| tree_distance(candidate, t).map(|d| d.value))
        .collect()
}

pub fn median_score(candidate: &Tree, trees: &[Tree]) -> Result<usize> {
    Ok(distances_to(candidate, trees)?.iter().sum())
}

pub fn closest_score(candidate: &Tree, trees: &[Tree]) -> Result<usize> {
    Ok(distances_to(candidate, trees)?
        .into_iter()
        .max()
        .unwrap_or(0))
}

/// Sum of pairwise distances over `k - 1`; zero for fewer than two trees.
pub fn median_lower_bound_from(pairwise: &[Vec<usize>]) -> Ratio<u64> {
    let k = pairwise.len();
    if k < 2 {
        return Ratio::from_integer(0);
    }
    let total: usize = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| pairwise[i][j])
        .sum();
    Ratio::new(total as u64, (k - 1) as u64)
}

/// Largest pairwise distance over two; zero for fewer than two trees.
pub fn closest_lower_bound_from(pairwise: &[Vec<usize>]) -> Ratio<u64> {
    let m = pairwise.iter().flatten().copied().max().unwrap_or(0);
    Ratio::new(m as u64, 2)
}

pub fn median_lower_bound(trees: &[Tree]) -> Result<Ratio<u64>> {
    Ok(median_lower_bound_from(&pairwise_distances(trees)?))
}

pub fn closest_lower_bound(trees: &[Tree]) -> Result<Ratio<u64>> {
    Ok(closest_lower_bound_from(&pairwise_distances(trees)?))
}

// ---------------------------------------------------------------------------
// k-way MCAT construction

fn token(t: &Tree, id: NodeId) -> Option<i64> {
    match t.node(id).label {
        Label::Leaf(l) => Some(l as i64),
        Label::Contracted(c) => Some(c as i64),
        Label::Internal(_) => None,
    }
}

fn tokens_below(t: &Tree) -> Vec<Vec<i64>> {
    let mut sets: Vec<Vec<i64>> = vec![Vec::new(); t.len()];
    for id in (0..t.len()).rev() {
        sets[id] = match token(t, id) {
            Some(x) => vec![x],
            None => {
                let mut s: Vec<i64> = t
                    .children(id)
                    .iter()
                    .flat_map(|&c| sets[c].clone())
                    .collect();
                s.sort_unstable();
                s
            }
        };
    }
    sets
}

/// Deepest node whose token set covers `s`.
fn lca(t: &Tree, sets: &[Vec<i64>], s: &[i64]) -> NodeId {
    (0..t.len())
        .filter(|&i| s.iter().all(|x| sets[i].binary_search(x).is_ok()))
        .max_by_key(|&i| t.depth(i))
        .expect("the root covers every token")
}

/// The subtree of `t` spanned by the tokens in `s`.
fn induced(t: &Tree, s: &[i64]) -> Tree {
    let sets = tokens_below(t);
    let top = lca(t, &sets, s);
    let mut raw = t.to_raw();
    for id in 0..t.len() {
        if let (Some(x), Some(p)) = (token(t, id), t.parent(id)) {
            if s.binary_search(&x).is_err() {
                raw[p].children.retain(|&c| c != id);
            }
        }
    }
    Tree::from_raw(&raw, top).expect("induced subtree keeps tokens")
}

/// Replaces the tokens `s` by one atom placed at their lowest common
/// ancestor; the ancestor itself becomes the atom when it holds nothing else.
fn contract_tokens(t: &Tree, s: &[i64], label: i32) -> Tree {
    let sets = tokens_below(t);
    let top = lca(t, &sets, s);
    let mut raw = t.to_raw();
    if sets[top] == s {
        raw[top].children.clear();
        raw[top].label = Label::Contracted(label);
    } else {
        for id in 0..t.len() {
            if let (Some(x), Some(p)) = (token(t, id), t.parent(id)) {
                if s.binary_search(&x).is_ok() {
                    raw[p].children.retain(|&c| c != id);
                }
            }
        }
        raw.push(RawNode {
            label: Label::Contracted(label),
            children: Vec::new(),
        });
        let atom = raw.len() - 1;
        raw[top].children.push(atom);
    }
    Tree::from_raw(&raw, t.root()).expect("contraction keeps tokens")
}

/// Token set shared by all trees, folding pairwise MCAT over the inputs.
/// Falls back to the most frequent cluster when no common structure exists.
fn common_tokens(trees: &[Tree], weights: &Weights) -> Vec<i64> {
    let mut h = trees[0].clone();
    let mut found: Option<Vec<i64>> = None;
    for t in &trees[1..] {
        match solve_mcat_weighted(&h, t, weights) {
            Some(sol) => {
                h = induced(&h, &sol.tokens);
                found = Some(sol.tokens);
            }
            None => {
                found = None;
                break;
            }
        }
    }
    if trees.len() == 1 {
        found = Some(tokens_below(&h)[h.root()].clone());
    }
    found.unwrap_or_else(|| most_frequent_cluster(trees))
}

fn most_frequent_cluster(trees: &[Tree]) -> Vec<i64> {
    let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
    for t in trees {
        let sets = tokens_below(t);
        for id in 0..t.len() {
            if id != t.root() && t.is_internal(id) {
                *counts.entry(sets[id].clone()).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .min_by(|(sa, ca), (sb, cb)| cb.cmp(ca).then(sa.len().cmp(&sb.len())).then(sa.cmp(sb)))
        .map(|(s, _)| s)
        .unwrap_or_else(|| tokens_below(&trees[0])[trees[0].root()].clone())
}

struct Piece {
    tree: Tree,
    /// the piece forms its own bracket rather than joining its parent's
    bracket: bool,
}

fn emit(t: &Tree, id: NodeId, pieces: &HashMap<i32, Piece>, raw: &mut Vec<RawNode>) -> Vec<usize> {
    let push = |raw: &mut Vec<RawNode>, label, children| {
        raw.push(RawNode { label, children });
        raw.len() - 1
    };
    match t.node(id).label {
        Label::Leaf(l) => vec![push(raw, Label::Leaf(l), Vec::new())],
        Label::Internal(_) => {
            let kids = t
                .children(id)
                .iter()
                .flat_map(|&c| emit(t, c, pieces, raw))
                .collect();
            vec![push(raw, Label::Internal(None), kids)]
        }
        Label::Contracted(c) => {
            let p = &pieces[&c];
            let root = p.tree.root();
            let kids: Vec<usize> = if p.tree.is_internal(root) {
                p.tree
                    .children(root)
                    .iter()
                    .flat_map(|&x| emit(&p.tree, x, pieces, raw))
                    .collect()
            } else {
                emit(&p.tree, root, pieces, raw)
            };
            if p.bracket {
                vec![push(raw, Label::Internal(None), kids)]
            } else {
                kids
            }
        }
    }
}

/// Consensus built from repeated k-way MCAT solutions.
///
/// Each round finds the token set common to all trees, contracts it in every
/// tree, and records the most frequent arrangement of those tokens among the
/// inputs. A piece keeps its own bracket when, in at least half the trees,
/// its tokens make up a whole subtree. Pieces whose ancestor is formed later
/// wait as atoms until that ancestor's round places them.
pub fn mcat_consensus(trees: &[Tree]) -> Result<Tree> {
    check_inputs(trees)?;
    if trees.len() == 1 {
        return Ok(trees[0].clone());
    }
    let k = trees.len();
    let mut cur: Vec<Tree> = trees.to_vec();
    let mut pieces: HashMap<i32, Piece> = HashMap::new();
    let mut weights = Weights::new();
    let mut label = -1i32;
    while cur[0].len() > 1 {
        let s = common_tokens(&cur, &weights);
        let shapes: Vec<Tree> = cur.iter().map(|t| induced(t, &s)).collect();
        let mut best = 0;
        let mut best_count = 0;
        for i in 0..k {
            let c = shapes.iter().filter(|x| **x == shapes[i]).count();
            if c > best_count {
                best = i;
                best_count = c;
            }
        }
        let whole = cur
            .iter()
            .filter(|t| {
                let sets = tokens_below(t);
                sets[lca(t, &sets, &s)] == s
            })
            .count();
        let real: usize = s
            .iter()
            .map(|&x| if x > 0 { 1 } else { weights[&(x as i32)] })
            .sum();
        weights.insert(label, real);
        pieces.insert(
            label,
            Piece {
                tree: shapes[best].clone(),
                bracket: 2 * whole >= k,
            },
        );
        cur = cur.iter().map(|t| contract_tokens(t, &s, label)).collect();
        label -= 1;
    }
    let mut raw = Vec::new();
    let top = emit(&cur[0], cur[0].root(), &pieces, &mut raw);
    let root = if top.len() == 1 {
        top[0]
    } else {
        raw.push(RawNode {
            label: Label::Internal(None),
            children: top,
        });
        raw.len() - 1
    };
    Tree::from_raw(&raw, root)
}

// ---------------------------------------------------------------------------
// midpoint merge

/// The tree reached after the first `ceil(d / 2)` moves of the script from
/// `a` to `b`.
pub fn midpoint(a: &Tree, b: &Tree) -> Result<Tree> {
    let d = tree_distance(a, b)?;
    let half = d.value.div_ceil(2);
    MoveSequence {
        steps: d.script.steps[..half].to_vec(),
    }
    .replay(a)
}

/// Repeatedly replaces the closest pair (lowest indices on ties) by a
/// midpoint of a shortest script between them, until one tree remains.
pub fn midpoint_consensus(trees: &[Tree]) -> Result<Tree> {
    check_inputs(trees)?;
    midpoint_with(trees.to_vec(), pairwise_distances(trees)?)
}

fn midpoint_with(list: Vec<Tree>, dist: Vec<Vec<usize>>) -> Result<Tree> {
    Ok(midpoint_trace_with(list, dist)?.0)
}

/// One pairwise merge of the midpoint method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeStep {
    pub left: Tree,
    pub right: Tree,
    pub merged: Tree,
}

/// [`midpoint_consensus`] together with every merge it performed, in order.
pub fn midpoint_trace(trees: &[Tree]) -> Result<(Tree, Vec<MergeStep>)> {
    check_inputs(trees)?;
    midpoint_trace_with(trees.to_vec(), pairwise_distances(trees)?)
}

fn midpoint_trace_with(
    mut list: Vec<Tree>,
    mut dist: Vec<Vec<usize>>,
) -> Result<(Tree, Vec<MergeStep>)> {
    let mut steps = Vec::new();
    while list.len() > 1 {
        let k = list.len();
        let (mut bi, mut bj) = (0, 1);
        for i in 0..k {
            for j in i + 1..k {
                if dist[i][j] < dist[bi][bj] {
                    (bi, bj) = (i, j);
                }
            }
        }
        let mid = midpoint(&list[bi], &list[bj])?;
        let right = list.remove(bj);
        dist.remove(bj);
        for row in dist.iter_mut() {
            row.remove(bj);
        }
        let left = std::mem::replace(&mut list[bi], mid.clone());
        steps.push(MergeStep {
            left,
            right,
            merged: mid,
        });
        let row = distances_to(&list[bi], &list)?;
        for (j, d) in row.into_iter().enumerate() {
            dist[bi][j] = d;
            dist[j][bi] = d;
        }
        dist[bi][bi] = 0;
    }
    Ok((list.pop().expect("nonempty"), steps))
}

/// Runs one method and scores its candidate against the inputs.
pub fn consensus_report(trees: &[Tree], method: Method) -> Result<ConsensusReport> {
    check_inputs(trees)?;
    consensus_report_with(trees, method, pairwise_distances(trees)?)
}

/// As [`consensus_report`], reusing an already computed distance matrix.
pub fn consensus_report_with(
    trees: &[Tree],
    method: Method,
    pairwise: Vec<Vec<usize>>,
) -> Result<ConsensusReport> {
    check_inputs(trees)?;
    if pairwise.len() != trees.len() {
        return Err(MutreeError::LengthMismatch(pairwise.len(), trees.len()));
    }
    let candidate = match method {
        Method::Mcat => mcat_consensus(trees)?,
        Method::Midpoint => midpoint_with(trees.to_vec(), pairwise.clone())?,
    };
    let (pairwise, per_input_scores) = with_candidate(pairwise, distances_to(&candidate, trees)?);
    let median_score = per_input_scores.iter().sum();
    let closest_score = per_input_scores.iter().copied().max().unwrap_or(0);
    let best_input_median = pairwise
        .iter()
        .map(|r| r.iter().sum::<usize>())
        .min()
        .unwrap_or(0);
    let best_input_closest = pairwise
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .min()
        .unwrap_or(0);
    Ok(ConsensusReport {
        median_lb: median_lower_bound_from(&pairwise),
        closest_lb: closest_lower_bound_from(&pairwise),
        beats_inputs_median: median_score <= best_input_median,
        beats_inputs_closest: closest_score <= best_input_closest,
        candidate,
        method,
        median_score,
        closest_score,
        pairwise,
        per_input_scores,
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
    fn shortening_uses_intermediate_trees() {
        let mut m = vec![vec![0, 2, 7], vec![2, 0, 3], vec![7, 3, 0]];
        shorten_through(&mut m);
        assert_eq!(m, vec![vec![0, 2, 5], vec![2, 0, 3], vec![5, 3, 0]]);
    }

    #[test]
    fn single_and_identical_inputs() {
        let a = t("((1,2),(3,4),5)");
        for m in [Method::Mcat, Method::Midpoint] {
            let r = consensus_report(&[a.clone()], m).unwrap();
            assert_eq!(r.candidate, a);
            let r = consensus_report(&[a.clone(), a.clone(), a.clone()], m).unwrap();
            assert_eq!(r.candidate, a);
            assert_eq!((r.median_score, r.closest_score), (0, 0));
            assert_eq!(r.median_lb, Ratio::from_integer(0));
        }
        assert_eq!(mcat_consensus(&[]), Err(MutreeError::EmptyInput));
        assert_eq!(
            midpoint_consensus(&[a, t("(1,2)")]),
            Err(MutreeError::Incomparable)
        );
    }

    #[test]
    fn midpoint_splits_the_distance() {
        let a = t("((1(2(3,4)))(5,6))");
        let b = t("((1(2(5,4)))(3,6))");
        let m = midpoint_consensus(&[a.clone(), b.clone()]).unwrap();
        let da = tree_distance(&m, &a).unwrap().value;
        let db = tree_distance(&m, &b).unwrap().value;
        assert_eq!(da + db, 8);
        assert!(da.abs_diff(db) <= 1);
    }

    #[test]
    fn bounds_for_two_trees() {
        let a = t("((1,2),3,4)");
        let b = t("((1,3),2,4)");
        let d = tree_distance(&a, &b).unwrap().value;
        assert_eq!(
            median_lower_bound(&[a.clone(), b.clone()]).unwrap(),
            Ratio::from_integer(d as u64)
        );
        assert_eq!(
            closest_lower_bound(&[a.clone(), b.clone()]).unwrap(),
            Ratio::new(d as u64, 2)
        );
        assert_eq!(median_score(&a, &[a.clone(), b.clone()]).unwrap(), d);
        assert_eq!(closest_score(&a, &[a.clone(), b]).unwrap(), d);
    }

    #[test]
    fn mcat_consensus_keeps_shared_structure() {
        let a = t("((1,2),(3,4),5)");
        let b = t("((1,2),(3,5),4)");
        let c = t("((1,2),(3,4,5))");
        let r = mcat_consensus(&[a, b, c]).unwrap();
        assert_eq!(r.leaf_labels(), vec![1, 2, 3, 4, 5]);
        assert!(r.clusters().contains(&vec![1, 2]));
    }

    #[test]
    fn token_contraction() {
        let p = t("((1,2,3),(4,5))");
        let c = contract_tokens(&p, &[1, 2], -1);
        assert_eq!(c.to_string(), "((#-1,3),(4,5))");
        let c = contract_tokens(&p, &[4, 5], -2);
        assert_eq!(c.to_string(), "(#-2,(1,2,3))");
        assert_eq!(induced(&p, &[1, 4, 5]).to_string(), "(1,(4,5))");
    }
}
