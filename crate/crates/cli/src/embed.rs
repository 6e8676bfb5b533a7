//! Classical multidimensional scaling of a tree collection.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use mutree::consensus::pairwise_distances;
use mutree::Tree;

use crate::CliResult;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub id: String,
    pub kind: &'static str,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridEmbedding {
    pub points: Vec<Point>,
    pub distances: Vec<Vec<usize>>,
}

#[derive(Serialize)]
pub struct EmbedSummary<'a> {
    pub points: &'a [Point],
    pub stress: f64,
}

impl GridEmbedding {
    /// Kruskal stress-1 of the layout against the tree distances.
    pub fn stress(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                let (p, q) = (&self.points[i], &self.points[j]);
                let e = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                let d = self.distances[i][j] as f64;
                num += (e - d).powi(2);
                den += d * d;
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    pub fn summary(&self) -> EmbedSummary<'_> {
        EmbedSummary {
            points: &self.points,
            stress: self.stress(),
        }
    }
}

/// Top-two principal coordinates of a distance matrix.
///
/// Each axis is flipped so its largest-magnitude coordinate is positive,
/// keeping the layout stable across runs.
pub fn classical_mds(d: &[Vec<usize>]) -> Vec<(f64, f64)> {
    let n = d.len();
    if n == 0 {
        return Vec::new();
    }
    let sq = DMatrix::from_fn(n, n, |i, j| (d[i][j] as f64).powi(2));
    let j = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let b = -0.5 * &j * sq * &j;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&c))
    });
    let axis = |k: usize| -> Vec<f64> {
        let Some(&col) = order.get(k) else {
            return vec![0.0; n];
        };
        let lambda = eig.eigenvalues[col];
        if lambda <= 1e-9 {
            return vec![0.0; n];
        }
        let scale = lambda.sqrt();
        let mut v: Vec<f64> = eig
            .eigenvectors
            .column(col)
            .iter()
            .map(|x| x * scale)
            .collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let (xs, ys) = (axis(0), axis(1));
    xs.into_iter().zip(ys).collect()
}

/// Lays out `inputs` followed by `candidates`.
pub fn embed_trees(inputs: &[Tree], candidates: &[Tree]) -> CliResult<GridEmbedding> {
    let all: Vec<Tree> = inputs.iter().chain(candidates).cloned().collect();
    let distances = pairwise_distances(&all)?;
    let coords = classical_mds(&distances);
    let points = coords
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let (id, kind) = if i < inputs.len() {
                (format!("t{}", i + 1), "input")
            } else {
                (format!("c{}", i - inputs.len() + 1), "candidate")
            };
            Point { id, kind, x, y }
        })
        .collect();
    Ok(GridEmbedding { points, distances })
}

pub fn write_csv(e: &GridEmbedding, out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &e.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
