//! Permutations, algebraic cycles and the swap distance; the height-2 tree
//! correspondence.

use crate::error::{MutreeError, Result};
use crate::tree::{Label, Nested, Tree};

/// A bijection on `{1..n}`; position `i` (0-based) holds the image of `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<u32>,
}

/// Cycles in canonical form: each cycle starts at its smallest element and
/// cycles are sorted by that element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CycleSet {
    pub cycles: Vec<Vec<u32>>,
}

impl Permutation {
    pub fn new(images: Vec<u32>) -> Result<Permutation> {
        let n = images.len();
        let mut seen = vec![false; n + 1];
        for &x in &images {
            if x == 0 || x as usize > n || seen[x as usize] {
                return Err(MutreeError::InvalidPermutation(format!("{images:?}")));
            }
            seen[x as usize] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Permutation {
        Permutation {
            images: (1..=n as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[u32] {
        &self.images
    }

    /// Image of `x` (1-based).
    pub fn apply(&self, x: u32) -> u32 {
        self.images[x as usize - 1]
    }

    /// Exchanges the entries at 0-based positions `i` and `j`.
    pub fn swapped(&self, i: usize, j: usize) -> Permutation {
        let mut images = self.images.clone();
        images.swap(i, j);
        Permutation { images }
    }

    /// The permutation whose cycles are exactly `c` (each cycle maps an
    /// element to its successor).
    pub fn from_cycles(c: &CycleSet) -> Result<Permutation> {
        let n: usize = c.cycles.iter().map(Vec::len).sum();
        let mut images = vec![0u32; n];
        for cyc in &c.cycles {
            for (i, &x) in cyc.iter().enumerate() {
                if x == 0 || x as usize > n {
                    return Err(MutreeError::InvalidPermutation(format!("{c:?}")));
                }
                images[x as usize - 1] = cyc[(i + 1) % cyc.len()];
            }
        }
        Permutation::new(images)
    }
}

impl CycleSet {
    fn canonical(mut cycles: Vec<Vec<u32>>) -> CycleSet {
        for c in cycles.iter_mut() {
            if let Some(pos) = c.iter().enumerate().min_by_key(|(_, &x)| x).map(|(i, _)| i) {
                c.rotate_left(pos);
            }
        }
        cycles.sort_by_key(|c| c[0]);
        CycleSet { cycles }
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

/// Cycles of the relative mapping `sigma(i) -> pi(i)`.
pub fn cycle_decomposition(pi: &Permutation, sigma: &Permutation) -> Result<CycleSet> {
    let n = pi.len();
    if sigma.len() != n {
        return Err(MutreeError::LengthMismatch(n, sigma.len()));
    }
    let mut next = vec![0u32; n + 1];
    for i in 0..n {
        next[sigma.images[i] as usize] = pi.images[i];
    }
    let mut seen = vec![false; n + 1];
    let mut cycles = Vec::new();
    for start in 1..=n {
        if seen[start] {
            continue;
        }
        let mut cyc = Vec::new();
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            cyc.push(x as u32);
            x = next[x] as usize;
        }
        cycles.push(cyc);
    }
    Ok(CycleSet::canonical(cycles))
}

/// Minimum number of transpositions turning `sigma` into `pi`: `n - c(pi, sigma)`.
pub fn swap_distance(pi: &Permutation, sigma: &Permutation) -> Result<usize> {
    Ok(pi.len() - cycle_decomposition(pi, sigma)?.len())
}

/// Reads a tree of height at most 2 as a cycle set: each depth-2 bracket is a
/// cycle in ascending order, each leaf under the root is a fixed point, and a
/// star is a single cycle over all leaves.
pub fn tree_to_cycles(t: &Tree) -> Result<CycleSet> {
    let h = t.height();
    if h > 2 {
        return Err(MutreeError::NotHeight2(h));
    }
    if h == 1 {
        return Ok(CycleSet::canonical(vec![t.leaf_labels()]));
    }
    let mut cycles = Vec::new();
    for &c in t.children(t.root()) {
        match t.node(c).label {
            Label::Leaf(l) => cycles.push(vec![l]),
            _ => cycles.push(
                t.children(c)
                    .iter()
                    .filter_map(|&x| match t.node(x).label {
                        Label::Leaf(l) => Some(l),
                        _ => None,
                    })
                    .collect(),
            ),
        }
    }
    Ok(CycleSet::canonical(cycles))
}

/// Inverse of [`tree_to_cycles`]: one bracket per non-singleton cycle, fixed
/// points hang from the root. A single cycle, or only fixed points, gives a star.
pub fn cycles_to_tree(c: &CycleSet) -> Result<Tree> {
    let members: Vec<Nested> = c
        .cycles
        .iter()
        .flat_map(|cyc| {
            if cyc.len() == 1 || c.cycles.len() == 1 {
                cyc.iter().map(|&x| Nested::Leaf(x)).collect::<Vec<_>>()
            } else {
                vec![Nested::Group(
                    cyc.iter().map(|&x| Nested::Leaf(x)).collect(),
                )]
            }
        })
        .collect();
    Tree::from_nested(&Nested::Group(members))
}

/// Swap distance between the permutations encoded by two height-2 trees.
pub fn height2_distance(a: &Tree, b: &Tree) -> Result<usize> {
    if a.leaf_labels() != b.leaf_labels() {
        return Err(MutreeError::Incomparable);
    }
    let pa = Permutation::from_cycles(&tree_to_cycles(a)?)?;
    let pb = Permutation::from_cycles(&tree_to_cycles(b)?)?;
    swap_distance(&pa, &pb)
}
