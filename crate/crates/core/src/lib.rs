//! Distances and consensus for leaf-labeled rooted mutation trees.
//!
//! Trees are unordered, carry integer leaf labels `1..=n`, and may have
//! internal nodes of any degree. The central quantity is the minimum number
//! of one-level subtree relocations turning one tree into another.

pub mod consensus;
pub mod engine;
pub mod error;
pub mod mcat;
pub mod newick;
pub mod oracle;
pub mod perm;
pub mod tree;

pub use consensus::{
    closest_lower_bound, closest_score, consensus_report, consensus_report_with, mcat_consensus,
    median_lower_bound, median_score, midpoint, midpoint_consensus, midpoint_trace,
    pairwise_distances, shorten_through, ConsensusReport, MergeStep, Method,
};
pub use engine::{isomorphic_mapping_distance, tree_distance, DistanceResult, TraceStep};
pub use error::{MutreeError, Result};
pub use mcat::{align_contraction_roots, solve_mcat, AlmostVTree, McatSolution};
pub use newick::{
    format_tree_set, load_tree_set, matrix_to_tree, parse_matrix_csv, parse_newick, parse_tree_set,
    serialize_newick, MutationMatrix, Phylogeny,
};
pub use oracle::{
    bfs_distance, enumerate_trees, exact_closest, exact_median, random_instance, InstanceSpec,
};
pub use perm::{
    cycle_decomposition, cycles_to_tree, height2_distance, swap_distance, tree_to_cycles, CycleSet,
    Permutation,
};
pub use tree::{is_equal, Direction, Label, Move, MoveSequence, Nested, Node, NodeId, Tree};
