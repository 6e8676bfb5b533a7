//! Newick dialect with integer leaves, tree collections, and ideal mutation
//! matrices.
//!
//! Accepted grammar:
//!
//! ```text
//! tree   := '(' member (','? member)+ ')' ';'?
//! member := integer | tree
//! ```
//!
//! Whitespace is ignored between tokens. Output is always fully comma-separated
//! and canonical.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{MutreeError, Result};
use crate::tree::{Label, Nested, Tree};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    labels: HashMap<u32, usize>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T> {
        Err(MutreeError::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn tree(&mut self) -> Result<Nested> {
        let open = self.pos;
        match self.peek() {
            Some(b'(') => self.pos += 1,
            Some(c) => return self.err(self.pos, format!("expected '(', found '{}'", c as char)),
            None => return self.err(self.pos, "expected '(', found end of input"),
        }
        let mut members = Vec::new();
        loop {
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b',') => {
                    if members.is_empty() {
                        return self.err(self.pos, "bracket starts with ','");
                    }
                    self.pos += 1;
                    match self.peek() {
                        Some(b'(') | Some(b'0'..=b'9') => {}
                        _ => return self.err(self.pos, "expected a member after ','"),
                    }
                }
                Some(b'(') => members.push(self.tree()?),
                Some(b'0'..=b'9') => members.push(self.leaf()?),
                Some(c) => {
                    return self.err(self.pos, format!("unexpected character '{}'", c as char))
                }
                None => return self.err(self.pos, "unbalanced brackets: missing ')'"),
            }
        }
        match members.len() {
            0 => self.err(open, "empty bracket"),
            1 => self.err(open, "bracket with a single member"),
            _ => Ok(Nested::Group(members)),
        }
    }

    fn leaf(&mut self) -> Result<Nested> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let label: u32 = match text.parse() {
            Ok(l) if l > 0 => l,
            _ => return self.err(start, format!("invalid leaf label '{text}'")),
        };
        if self.labels.insert(label, start).is_some() {
            return self.err(start, format!("duplicate leaf label {label}"));
        }
        Ok(Nested::Leaf(label))
    }
}

/// Parses one tree. Leaf labels must be exactly `{1..n}`.
pub fn parse_newick(s: &str) -> Result<Tree> {
    let mut p = Parser {
        src: s.as_bytes(),
        pos: 0,
        labels: HashMap::new(),
    };
    let nested = p.tree()?;
    if p.peek() == Some(b';') {
        p.pos += 1;
    }
    if let Some(c) = p.peek() {
        return p.err(
            p.pos,
            format!("trailing input starting with '{}'", c as char),
        );
    }
    let n = p.labels.len() as u32;
    if let Some((&l, &pos)) = p
        .labels
        .iter()
        .filter(|(&l, _)| l > n)
        .min_by_key(|(_, &pos)| pos)
    {
        return p.err(pos, format!("leaf label {l} outside 1..{n}"));
    }
    Tree::from_nested(&nested)
}

/// Canonical comma-separated form. Refuses trees with contraction labels.
pub fn serialize_newick(t: &Tree) -> Result<String> {
    if t.has_contraction_labels() {
        return Err(MutreeError::ContractedNode);
    }
    Ok(t.code(t.root()))
}

/// Parses a collection: one tree per line, blank lines and `#` comments skipped.
/// All trees must share the leaf set of the first one.
pub fn parse_tree_set(text: &str) -> Result<Vec<Tree>> {
    let mut trees: Vec<Tree> = Vec::new();
    let mut first_leaves: Option<Vec<u32>> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let t = parse_newick(body).map_err(|e| MutreeError::Line {
            line: line_no,
            source: Box::new(e),
        })?;
        let leaves = t.leaf_labels();
        match &first_leaves {
            None => first_leaves = Some(leaves),
            Some(f) if *f != leaves => return Err(MutreeError::MixedLeafSets { line: line_no }),
            _ => {}
        }
        trees.push(t);
    }
    Ok(trees)
}

pub fn load_tree_set(path: impl AsRef<Path>) -> Result<Vec<Tree>> {
    let text = std::fs::read_to_string(path)?;
    parse_tree_set(&text)
}

/// Writes trees one per line, preceded by optional `#` comment lines.
pub fn format_tree_set(trees: &[Tree], comments: &[String]) -> Result<String> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for t in trees {
        out.push_str(&serialize_newick(t)?);
        out.push_str(";\n");
    }
    Ok(out)
}

/// Binary mutation matrix: rows are mutations, columns are cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutationMatrix {
    pub mutations: Vec<String>,
    pub cells: Vec<String>,
    pub rows: Vec<Vec<bool>>,
}

/// Perfect phylogeny built from a matrix. Cells are leaves `1..m` in column
/// order; each mutation keeps the set of cells that carry it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phylogeny {
    pub tree: Tree,
    pub mutations: Vec<(String, Vec<u32>)>,
}

/// Reads a CSV matrix: a header row of cell ids, then one 0/1 row per
/// mutation. A leading column of mutation names is optional; it is detected
/// by a header with one more field than the data has 0/1 entries.
pub fn parse_matrix_csv(text: &str) -> Result<MutationMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for r in reader.records() {
        let r = r.map_err(|e| MutreeError::InvalidMatrix(e.to_string()))?;
        if r.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push(r.iter().map(str::to_owned).collect::<Vec<String>>());
    }
    let Some((header, body)) = records.split_first() else {
        return Err(MutreeError::InvalidMatrix("missing header row".into()));
    };
    let named = body
        .first()
        .map(|r| r.first().is_some_and(|f| f != "0" && f != "1"))
        .unwrap_or(false);
    let cells: Vec<String> = if named && header.len() > 1 {
        header[1..].to_vec()
    } else {
        header.clone()
    };
    if cells.len() < 2 {
        return Err(MutreeError::InvalidMatrix("need at least two cells".into()));
    }
    let mut mutations = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in body.iter().enumerate() {
        let (name, entries) = if named {
            (rec[0].clone(), &rec[1..])
        } else {
            (format!("m{}", i + 1), &rec[..])
        };
        if entries.len() != cells.len() {
            return Err(MutreeError::InvalidMatrix(format!(
                "row {} has {} entries, expected {}",
                i + 2,
                entries.len(),
                cells.len()
            )));
        }
        let row = entries
            .iter()
            .map(|e| match e.as_str() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(MutreeError::InvalidMatrix(format!(
                    "row {}: entry '{other}' is not 0 or 1",
                    i + 2
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        mutations.push(name);
        rows.push(row);
    }
    Ok(MutationMatrix {
        mutations,
        cells,
        rows,
    })
}

/// Builds the perfect phylogeny of a conflict-free matrix.
pub fn matrix_to_tree(m: &MutationMatrix) -> Result<Phylogeny> {
    let ncells = m.cells.len();
    if ncells < 2 {
        return Err(MutreeError::InvalidMatrix("need at least two cells".into()));
    }
    let supports: Vec<Vec<u32>> = m
        .rows
        .iter()
        .map(|r| {
            if r.len() != ncells {
                return Err(MutreeError::InvalidMatrix("ragged matrix".into()));
            }
            Ok((0..ncells)
                .filter(|&c| r[c])
                .map(|c| c as u32 + 1)
                .collect())
        })
        .collect::<Result<_>>()?;
    for i in 0..supports.len() {
        for j in i + 1..supports.len() {
            let (a, b) = (&supports[i], &supports[j]);
            let inter = a.iter().filter(|x| b.binary_search(x).is_ok()).count();
            if inter != 0 && inter != a.len() && inter != b.len() {
                return Err(MutreeError::NotPerfectPhylogeny(i + 1, j + 1));
            }
        }
    }
    let mut clusters: Vec<Vec<u32>> = supports
        .iter()
        .filter(|s| s.len() >= 2 && s.len() < ncells)
        .cloned()
        .collect();
    clusters.sort();
    clusters.dedup();
    // largest first so every cluster is visited after all its supersets
    clusters.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let all: Vec<u32> = (1..=ncells as u32).collect();
    let nested = laminar_to_nested(&all, &clusters);
    Ok(Phylogeny {
        tree: Tree::from_nested(&nested)?,
        mutations: m.mutations.iter().cloned().zip(supports).collect(),
    })
}

fn laminar_to_nested(set: &[u32], clusters: &[Vec<u32>]) -> Nested {
    let mut covered = vec![false; set.len()];
    let mut members = Vec::new();
    let inside =
        |c: &Vec<u32>| c.len() < set.len() && c.iter().all(|x| set.binary_search(x).is_ok());
    for c in clusters.iter().filter(|c| inside(c)) {
        let first = set.binary_search(&c[0]).unwrap();
        if covered[first] {
            continue;
        }
        for x in c {
            covered[set.binary_search(x).unwrap()] = true;
        }
        members.push(laminar_to_nested(c, clusters));
    }
    for (i, &x) in set.iter().enumerate() {
        if !covered[i] {
            members.push(Nested::Leaf(x));
        }
    }
    Nested::Group(members)
}

/// Labels of the leaves in the order they appear in the canonical form.
pub fn leaf_order(t: &Tree) -> Vec<u32> {
    let mut out = Vec::new();
    let mut stack = vec![t.root()];
    while let Some(id) = stack.pop() {
        if let Label::Leaf(l) = t.node(id).label {
            out.push(l);
        }
        stack.extend(t.children(id).iter().rev());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_style_juxtaposition() {
        let t = parse_newick("((1,2)((4,3)5))").unwrap();
        assert_eq!(t.bracket_sets().len(), 4);
        let u = parse_newick("((1(2(3, 4)))(5, 6))").unwrap();
        assert_eq!(serialize_newick(&u).unwrap(), "((1,(2,(3,4))),(5,6))");
    }

    #[test]
    fn star_is_ascending() {
        let t = parse_newick("(3,1,2)").unwrap();
        assert_eq!(serialize_newick(&t).unwrap(), "(1,2,3)");
        assert_eq!(t.height(), 1);
        let big = parse_newick("(12,3,10,1,2,4,5,6,7,8,9,11)").unwrap();
        assert_eq!(
            serialize_newick(&big).unwrap(),
            "(1,2,3,4,5,6,7,8,9,10,11,12)"
        );
    }

    #[test]
    fn malformed_inputs_report_positions() {
        for (s, pos) in [
            ("((1))", 1),
            ("(1,2", 4),
            ("()", 0),
            ("(1,1)", 3),
            ("(1,3)", 3),
            ("(1,2))", 5),
            ("(1,,2)", 3),
            ("(0,1)", 1),
            ("", 0),
            ("(1,a)", 3),
        ] {
            match parse_newick(s) {
                Err(MutreeError::Parse { pos: p, .. }) => assert_eq!(p, pos, "{s}"),
                other => panic!("{s}: {other:?}"),
            }
        }
    }

    #[test]
    fn semicolon_and_whitespace() {
        assert_eq!(
            parse_newick(" ( 2 , 1 ) ;\n").unwrap(),
            parse_newick("(1,2)").unwrap()
        );
    }

    #[test]
    fn figure_one_matrix() {
        let csv = "mutation,c1,c2,c3,c4\n\
                   green,1,1,1,1\n\
                   blue,0,0,1,1\n\
                   red,1,0,0,0\n\
                   cyan,0,0,1,0\n\
                   navy,0,0,0,1\n";
        let m = parse_matrix_csv(csv).unwrap();
        assert_eq!(m.cells.len(), 4);
        let p = matrix_to_tree(&m).unwrap();
        assert_eq!(serialize_newick(&p.tree).unwrap(), "(1,2,(3,4))");
        assert_eq!(p.mutations[1], ("blue".to_string(), vec![3, 4]));
    }

    #[test]
    fn matrix_edge_cases() {
        let star = parse_matrix_csv("a,b,c\n1,1,1\n").unwrap();
        assert_eq!(
            serialize_newick(&matrix_to_tree(&star).unwrap().tree).unwrap(),
            "(1,2,3)"
        );
        let bad = parse_matrix_csv("a,b,c\n1,1,0\n0,1,1\n").unwrap();
        assert_eq!(
            matrix_to_tree(&bad),
            Err(MutreeError::NotPerfectPhylogeny(1, 2))
        );
        assert!(parse_matrix_csv("a,b\n1,2\n").is_err());
        assert!(parse_matrix_csv("").is_err());
    }

    #[test]
    fn tree_sets() {
        let text = "# four trees\n(1,2,3)\n((1,2),3)\n\n((1,3),2)\n(1,(2,3))\n";
        assert_eq!(parse_tree_set(text).unwrap().len(), 4);
        assert!(parse_tree_set("").unwrap().is_empty());
        match parse_tree_set("(1,2)\n((1))\n") {
            Err(MutreeError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_tree_set("(1,2)\n(1,2,3)\n"),
            Err(MutreeError::MixedLeafSets { line: 2 })
        );
    }
}
