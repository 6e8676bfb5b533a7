use std::collections::HashSet;

use num_rational::Ratio;
use proptest::prelude::*;

use mutree::consensus::{consensus_report, midpoint, Method};
use mutree::oracle::{random_instance, InstanceSpec};
use mutree::{
    cycles_to_tree, is_equal, parse_newick, serialize_newick, solve_mcat, swap_distance,
    tree_distance, tree_to_cycles, Nested, Permutation, Tree,
};

fn instance(k: usize, n: usize, seed: u64) -> Vec<Tree> {
    random_instance(&InstanceSpec::new(k, n, seed)).unwrap()
}

fn pair() -> impl Strategy<Value = (Tree, Tree)> {
    (3usize..=10, any::<u64>()).prop_map(|(n, seed)| {
        let mut ts = instance(2, n, seed);
        (ts.remove(0), ts.remove(0))
    })
}

fn tree() -> impl Strategy<Value = Tree> {
    (2usize..=14, any::<u64>(), 1usize..=5).prop_map(|(n, seed, cap)| {
        let mut spec = InstanceSpec::new(1, n, seed);
        spec.height_cap = cap;
        random_instance(&spec).unwrap().remove(0)
    })
}

fn reversed(n: &Nested) -> Nested {
    match n {
        Nested::Leaf(l) => Nested::Leaf(*l),
        Nested::Group(g) => Nested::Group(g.iter().rev().map(reversed).collect()),
    }
}

fn cluster_set(t: &Tree) -> HashSet<Vec<u32>> {
    t.clusters().into_iter().collect()
}

fn cluster_bound(a: &Tree, b: &Tree) -> usize {
    let (ca, cb) = (cluster_set(a), cluster_set(b));
    ca.difference(&cb).count().max(cb.difference(&ca).count())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn newick_round_trip(t in tree()) {
        let s = serialize_newick(&t).unwrap();
        let back = parse_newick(&s).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(serialize_newick(&back).unwrap(), s);
    }

    #[test]
    fn sibling_order_is_irrelevant(t in tree()) {
        let r = Tree::from_nested(&reversed(&t.to_nested())).unwrap();
        prop_assert!(is_equal(&t, &r).unwrap());
        prop_assert_eq!(serialize_newick(&t).unwrap(), serialize_newick(&r).unwrap());
    }

    #[test]
    fn structure_is_well_formed(t in tree()) {
        let n = t.n_leaves();
        prop_assert_eq!(t.leaf_labels(), (1..=n as u32).collect::<Vec<_>>());
        for id in 0..t.len() {
            if t.is_internal(id) {
                prop_assert!(t.children(id).len() >= 2);
            }
            for &c in t.children(id) {
                prop_assert_eq!(t.parent(c), Some(id));
            }
        }
        prop_assert!(t.internal_count() < n.max(2));
    }

    #[test]
    fn every_move_changes_one_cluster(t in tree()) {
        let before = cluster_set(&t);
        for m in t.enumerate_moves() {
            let u = t.apply_move(&m).unwrap();
            prop_assert_eq!(u.leaf_labels(), t.leaf_labels());
            let after = cluster_set(&u);
            prop_assert!(before.difference(&after).count() <= 1);
            prop_assert!(after.difference(&before).count() <= 1);
            prop_assert!(before != after);
        }
    }

    #[test]
    fn distance_script_replays((a, b) in pair()) {
        let d = tree_distance(&a, &b).unwrap();
        prop_assert_eq!(d.script.replay(&a).unwrap(), b.clone());
        prop_assert_eq!(d.value, d.script.cost());
        prop_assert!(d.value >= cluster_bound(&a, &b));
        prop_assert!(d.value <= 2 * a.n_leaves() * a.height().max(b.height()));
        prop_assert_eq!(d.value == 0, a == b);
    }

    #[test]
    fn distance_is_symmetric((a, b) in pair()) {
        prop_assert_eq!(tree_distance(&a, &b).unwrap().value, tree_distance(&b, &a).unwrap().value);
    }

    #[test]
    fn one_move_is_distance_one(t in tree(), pick in any::<prop::sample::Index>()) {
        let moves = t.enumerate_moves();
        prop_assume!(!moves.is_empty());
        let u = t.apply_move(&moves[pick.index(moves.len())]).unwrap();
        prop_assert_eq!(tree_distance(&t, &u).unwrap().value, 1);
    }

    #[test]
    fn midpoint_lies_on_the_script((a, b) in pair()) {
        let d = tree_distance(&a, &b).unwrap();
        let states = d.script.replay_states(&a).unwrap();
        let m = midpoint(&a, &b).unwrap();
        prop_assert_eq!(&m, &states[d.value.div_ceil(2)]);
        prop_assert!(cluster_bound(&a, &m) <= d.value.div_ceil(2));
        prop_assert!(cluster_bound(&m, &b) <= d.value / 2);
    }

    #[test]
    fn mcat_is_within_both_trees((a, b) in pair()) {
        let s = solve_mcat(&a, &b).unwrap();
        prop_assert!(s.leaf_count >= 1 && s.leaf_count <= a.n_leaves());
        let t = solve_mcat(&b, &a).unwrap();
        prop_assert_eq!(s.leaf_count, t.leaf_count);
    }

    #[test]
    fn swap_distance_is_a_metric(seed in any::<u64>(), n in 1usize..=8) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm = || {
            let mut v: Vec<u32> = (1..=n as u32).collect();
            v.shuffle(&mut r);
            Permutation::new(v).unwrap()
        };
        let (p, q, s) = (perm(), perm(), perm());
        let d = |x: &Permutation, y: &Permutation| swap_distance(x, y).unwrap();
        prop_assert_eq!(d(&p, &q), d(&q, &p));
        prop_assert_eq!(d(&p, &q) == 0, p == q);
        prop_assert!(d(&p, &s) <= d(&p, &q) + d(&q, &s));
        prop_assert!(d(&p, &q) < n.max(1));
    }

    #[test]
    fn height_two_trees_are_cycle_sets(seed in any::<u64>(), n in 2usize..=10) {
        let mut spec = InstanceSpec::new(1, n, seed);
        spec.height_cap = 2;
        let t = random_instance(&spec).unwrap().remove(0);
        prop_assert_eq!(cycles_to_tree(&tree_to_cycles(&t).unwrap()).unwrap(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn consensus_reports_are_consistent(seed in any::<u64>(), n in 3usize..=9, k in 1usize..=4) {
        let trees = instance(k, n, seed);
        for method in [Method::Mcat, Method::Midpoint] {
            let r = consensus_report(&trees, method).unwrap();
            prop_assert_eq!(r.candidate.leaf_labels(), trees[0].leaf_labels());
            prop_assert_eq!(r.median_score, r.per_input_scores.iter().sum::<usize>());
            prop_assert_eq!(r.closest_score, *r.per_input_scores.iter().max().unwrap());
            prop_assert!(r.median_lb <= Ratio::from_integer(r.median_score as u64));
            prop_assert!(r.closest_lb <= Ratio::from_integer(r.closest_score as u64));
            for i in 0..k {
                prop_assert_eq!(r.pairwise[i][i], 0);
                for j in 0..k {
                    prop_assert_eq!(r.pairwise[i][j], r.pairwise[j][i]);
                }
            }
        }
    }
}
