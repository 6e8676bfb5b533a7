use thiserror::Error;

use crate::tree::NodeId;

/// Errors raised by tree construction, parsing and the distance engine.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MutreeError {
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<MutreeError>,
    },
    #[error("line {line}: leaf set differs from the first tree in the collection")]
    MixedLeafSets { line: usize },
    #[error("illegal move: {0}")]
    IllegalMove(String),
    #[error("node {0} is not in the tree")]
    NodeNotFound(NodeId),
    #[error("trees have different leaf sets")]
    Incomparable,
    #[error("tree has height {0}, expected at most 2")]
    NotHeight2(usize),
    #[error("permutations have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("trees are not shape-isomorphic")]
    NotIsomorphic,
    #[error("contraction-labeled nodes cannot be serialized")]
    ContractedNode,
    #[error("matrix is not a perfect phylogeny: rows {0} and {1} overlap without nesting")]
    NotPerfectPhylogeny(usize, usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("search radius {0} exceeded")]
    RadiusExceeded(usize),
    #[error("enumeration is limited to n <= 6, got {0}")]
    TooManyLeaves(usize),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("empty input")]
    EmptyInput,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MutreeError {
    fn from(e: std::io::Error) -> Self {
        MutreeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MutreeError>;
