//! Ground truth for small inputs: breadth-first move distance, exhaustive
//! tree enumeration, exact consensus over a universe, and the seeded
//! instance generator.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MutreeError, Result};
use crate::newick::serialize_newick;
use crate::perm::Permutation;
use crate::tree::{Nested, Tree};

/// Largest leaf count [`enumerate_trees`] accepts.
pub const MAX_ENUMERATION_LEAVES: usize = 6;

/// Exact move distance by breadth-first search, giving up beyond `cap` moves.
pub fn bfs_distance(a: &Tree, b: &Tree, cap: usize) -> Result<usize> {
    if a.leaf_labels() != b.leaf_labels() {
        return Err(MutreeError::Incomparable);
    }
    if a == b {
        return Ok(0);
    }
    let mut seen: HashSet<Tree> = HashSet::from([a.clone()]);
    let mut frontier = vec![a.clone()];
    for d in 1..=cap {
        let mut next = Vec::new();
        for t in &frontier {
            for s in t.neighbors() {
                if s == *b {
                    return Ok(d);
                }
                if seen.insert(s.clone()) {
                    next.push(s);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Err(MutreeError::RadiusExceeded(cap))
}

/// Distances from `a` to every tree reachable within `cap` moves.
pub fn bfs_ball(a: &Tree, cap: usize) -> HashMap<Tree, usize> {
    let mut dist = HashMap::from([(a.clone(), 0)]);
    let mut queue = VecDeque::from([a.clone()]);
    while let Some(t) = queue.pop_front() {
        let d = dist[&t];
        if d == cap {
            continue;
        }
        for s in t.neighbors() {
            if !dist.contains_key(&s) {
                dist.insert(s.clone(), d + 1);
                queue.push_back(s);
            }
        }
    }
    dist
}

/// Minimum number of transpositions turning `pi` into `sigma`, by search.
pub fn swap_bfs_distance(pi: &Permutation, sigma: &Permutation) -> Result<usize> {
    if pi.len() != sigma.len() {
        return Err(MutreeError::LengthMismatch(pi.len(), sigma.len()));
    }
    let n = pi.len();
    let mut dist: HashMap<Permutation, usize> = HashMap::from([(pi.clone(), 0)]);
    let mut queue = VecDeque::from([pi.clone()]);
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        if p == *sigma {
            return Ok(d);
        }
        for i in 0..n {
            for j in i + 1..n {
                let q = p.swapped(i, j);
                if !dist.contains_key(&q) {
                    dist.insert(q.clone(), d + 1);
                    queue.push_back(q);
                }
            }
        }
    }
    unreachable!("transpositions generate the symmetric group")
}

/// All set partitions of `items` into at least two blocks.
fn partitions(items: &[u32]) -> Vec<Vec<Vec<u32>>> {
    fn rec(items: &[u32], i: usize, blocks: &mut Vec<Vec<u32>>, out: &mut Vec<Vec<Vec<u32>>>) {
        if i == items.len() {
            if blocks.len() >= 2 {
                out.push(blocks.clone());
            }
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(items[i]);
            rec(items, i + 1, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![items[i]]);
        rec(items, i + 1, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(items, 0, &mut Vec::new(), &mut out);
    out
}

fn shapes_on(items: &[u32], height: usize) -> Vec<Nested> {
    if items.len() == 1 {
        return vec![Nested::Leaf(items[0])];
    }
    if height == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for blocks in partitions(items) {
        let options: Vec<Vec<Nested>> = blocks.iter().map(|b| shapes_on(b, height - 1)).collect();
        if options.iter().any(Vec::is_empty) {
            continue;
        }
        let mut idx = vec![0usize; options.len()];
        loop {
            out.push(Nested::Group(
                idx.iter()
                    .zip(&options)
                    .map(|(&i, o)| o[i].clone())
                    .collect(),
            ));
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    out
}

/// Every tree on leaves `1..=n` with height at most `height_cap`, in
/// serialization order.
pub fn enumerate_trees(n: usize, height_cap: usize) -> Result<Vec<Tree>> {
    if n > MAX_ENUMERATION_LEAVES {
        return Err(MutreeError::TooManyLeaves(n));
    }
    if n < 2 {
        return Err(MutreeError::Infeasible(format!("{n} leaves")));
    }
    let labels: Vec<u32> = (1..=n as u32).collect();
    let mut trees: Vec<(String, Tree)> = shapes_on(&labels, height_cap)
        .iter()
        .map(|s| {
            let t = Tree::from_nested(s).expect("labels are 1..=n");
            (serialize_newick(&t).expect("plain tree"), t)
        })
        .collect();
    trees.sort_by(|x, y| x.0.cmp(&y.0));
    trees.dedup_by(|x, y| x.0 == y.0);
    Ok(trees.into_iter().map(|(_, t)| t).collect())
}

fn exact_by<F>(trees: &[Tree], universe: &[Tree], score: F) -> Result<(Tree, usize)>
where
    F: Fn(&[usize]) -> usize,
{
    if trees.is_empty() {
        return Err(MutreeError::EmptyInput);
    }
    let balls: Vec<HashMap<Tree, usize>> = trees.iter().map(|t| bfs_ball(t, usize::MAX)).collect();
    let mut best: Option<(usize, String, Tree)> = None;
    for u in universe {
        let ds: Vec<usize> = balls
            .iter()
            .map(|b| b.get(u).copied().ok_or(MutreeError::Incomparable))
            .collect::<Result<_>>()?;
        let s = score(&ds);
        let key = serialize_newick(u)?;
        let better = match &best {
            None => true,
            Some((bs, bk, _)) => s < *bs || (s == *bs && key < *bk),
        };
        if better {
            best = Some((s, key, u.clone()));
        }
    }
    best.map(|(s, _, t)| (t, s))
        .ok_or_else(|| MutreeError::Infeasible("empty universe".into()))
}

/// Tree of the universe minimizing the summed distance to the inputs.
pub fn exact_median(trees: &[Tree], universe: &[Tree]) -> Result<(Tree, usize)> {
    exact_by(trees, universe, |ds| ds.iter().sum())
}

/// Tree of the universe minimizing the largest distance to the inputs.
pub fn exact_closest(trees: &[Tree], universe: &[Tree]) -> Result<(Tree, usize)> {
    exact_by(trees, universe, |ds| ds.iter().copied().max().unwrap_or(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub k: usize,
    pub n: usize,
    pub height_cap: usize,
    pub seed: u64,
}

impl InstanceSpec {
    /// Spec with the default height cap, `ceil(log2 n)`.
    pub fn new(k: usize, n: usize, seed: u64) -> InstanceSpec {
        InstanceSpec {
            k,
            n,
            height_cap: default_height_cap(n),
            seed,
        }
    }
}

pub fn default_height_cap(n: usize) -> usize {
    (n.max(2) as f64).log2().ceil() as usize
}

/// Random partition of `items` into at least two nonempty blocks.
fn random_split(items: &[u32], rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    loop {
        let m = rng.gen_range(2..=items.len());
        let mut blocks = vec![Vec::new(); m];
        for &x in items {
            blocks[rng.gen_range(0..m)].push(x);
        }
        blocks.retain(|b| !b.is_empty());
        if blocks.len() >= 2 {
            return blocks;
        }
    }
}

fn random_shape(items: &[u32], height: usize, rng: &mut ChaCha8Rng) -> Nested {
    if items.len() == 1 {
        return Nested::Leaf(items[0]);
    }
    // one level left: only a star fits
    if height == 1 {
        return Nested::Group(items.iter().map(|&x| Nested::Leaf(x)).collect());
    }
    Nested::Group(
        random_split(items, rng)
            .iter()
            .map(|b| random_shape(b, height - 1, rng))
            .collect(),
    )
}

/// `k` random trees on `n` leaves, each of height at most the cap.
///
/// Each bracket splits its leaves by throwing them into a uniformly chosen
/// number of bins (rethrowing when fewer than two bins are hit); at the last
/// level allowed by the cap the remaining leaves form a star.
pub fn random_instance(spec: &InstanceSpec) -> Result<Vec<Tree>> {
    if spec.k == 0 {
        return Err(MutreeError::Infeasible("no trees requested".into()));
    }
    if spec.n < 2 {
        return Err(MutreeError::Infeasible(format!("{} leaves", spec.n)));
    }
    if spec.height_cap == 0 {
        return Err(MutreeError::Infeasible("height cap 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<u32> = (1..=spec.n as u32).collect();
    (0..spec.k)
        .map(|_| {
            labels.shuffle(&mut rng);
            Tree::from_nested(&random_shape(&labels, spec.height_cap, &mut rng))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::parse_newick;

    fn t(s: &str) -> Tree {
        parse_newick(s).unwrap()
    }

    #[test]
    fn universe_sizes() {
        assert_eq!(enumerate_trees(2, 5).unwrap().len(), 1);
        assert_eq!(enumerate_trees(3, 2).unwrap().len(), 4);
        assert_eq!(enumerate_trees(4, 9).unwrap().len(), 26);
        assert_eq!(enumerate_trees(5, 9).unwrap().len(), 236);
        assert_eq!(enumerate_trees(3, 1).unwrap().len(), 1);
        assert!(matches!(
            enumerate_trees(7, 3),
            Err(MutreeError::TooManyLeaves(7))
        ));
    }

    #[test]
    fn bfs_basics() {
        let p = t("((1,2),3)");
        assert_eq!(bfs_distance(&p, &p, 0).unwrap(), 0);
        assert_eq!(bfs_distance(&p, &t("(1,2,3)"), 3).unwrap(), 1);
        assert_eq!(bfs_distance(&p, &t("((1,3),2)"), 3).unwrap(), 2);
        assert_eq!(
            bfs_distance(&p, &t("((1,3),2)"), 1),
            Err(MutreeError::RadiusExceeded(1))
        );
    }

    #[test]
    fn worked_pair_exact() {
        let p = t("((1(2(3,4)))(5,6))");
        let q = t("((1(2(5,4)))(3,6))");
        assert_eq!(bfs_distance(&p, &q, 8).unwrap(), 8);
    }

    #[test]
    fn swap_search() {
        let pi = Permutation::new(vec![2, 1, 4, 3]).unwrap();
        assert_eq!(
            swap_bfs_distance(&pi, &Permutation::identity(4)).unwrap(),
            2
        );
    }

    #[test]
    fn exact_consensus_small_cases() {
        let u = enumerate_trees(4, 9).unwrap();
        let a = t("((1,2),(3,4))");
        assert_eq!(
            exact_median(&[a.clone(), a.clone()], &u).unwrap(),
            (a.clone(), 0)
        );
        let b = t("((1,3),2,4)");
        let d = bfs_distance(&a, &b, 20).unwrap();
        assert_eq!(exact_median(&[a.clone(), b.clone()], &u).unwrap().1, d);
        assert_eq!(exact_closest(&[a, b], &u).unwrap().1, d.div_ceil(2));
    }

    #[test]
    fn generator_is_seeded_and_capped() {
        let spec = InstanceSpec::new(4, 10, 7);
        assert_eq!(spec.height_cap, 4);
        let x = random_instance(&spec).unwrap();
        assert_eq!(x, random_instance(&spec).unwrap());
        assert_eq!(x.len(), 4);
        for tree in &x {
            assert!(tree.height() <= 4);
            assert_eq!(tree.n_leaves(), 10);
        }
        let bad = InstanceSpec {
            height_cap: 0,
            ..InstanceSpec::new(1, 2, 0)
        };
        assert!(random_instance(&bad).is_err());
    }
}
