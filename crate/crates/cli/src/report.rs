//! Serializable shapes of the command outputs.

use num_rational::Ratio;
use serde::Serialize;

use mutree::consensus::ConsensusReport;
use mutree::{serialize_newick, Direction, Move, Result, Tree};

use crate::Objective;

/// A rational printed both as a float and as an exact `num/den` string.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exact {
    pub value: f64,
    pub exact: String,
}

impl Exact {
    pub fn of(r: Ratio<u64>) -> Exact {
        Exact {
            value: *r.numer() as f64 / *r.denom() as f64,
            exact: format!("{}/{}", r.numer(), r.denom()),
        }
    }

    /// `score - lb`, clamped below at zero in the float and kept signed in the string.
    pub fn gap(score: usize, lb: Ratio<u64>) -> Exact {
        let s = Ratio::from_integer(score as u64);
        if s >= lb {
            Exact::of(s - lb)
        } else {
            let d = lb - s;
            Exact {
                value: -(*d.numer() as f64 / *d.denom() as f64),
                exact: format!("-{}/{}", d.numer(), d.denom()),
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepJson {
    pub step: usize,
    #[serde(rename = "move")]
    pub kind: &'static str,
    pub subject: String,
    pub target: Option<String>,
    pub result: String,
}

impl StepJson {
    /// Describes `m` applied to `before`, yielding `after`.
    pub fn describe(step: usize, m: &Move, before: &Tree, after: &Tree) -> Result<StepJson> {
        let (kind, target) = match m.direction {
            Direction::Up => ("up", None),
            Direction::Down(y) => ("down", Some(before.code(y))),
            Direction::Pair(y) => ("pair", Some(before.code(y))),
        };
        Ok(StepJson {
            step,
            kind,
            subject: before.code(m.subject),
            target,
            result: serialize_newick(after)?,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceJson {
    pub source: String,
    pub target: String,
    pub value: usize,
    pub script: Vec<StepJson>,
    pub time_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub parse_ms: f64,
    pub distance_ms: f64,
    pub consensus_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsensusJson {
    pub method: &'static str,
    pub objective: &'static str,
    pub candidate: String,
    pub objective_score: usize,
    pub objective_gap: Exact,
    pub median_score: usize,
    pub closest_score: usize,
    pub median_lb: Exact,
    pub closest_lb: Exact,
    pub median_gap: Exact,
    pub closest_gap: Exact,
    pub beats_inputs_median: bool,
    pub beats_inputs_closest: bool,
    pub per_input_scores: Vec<usize>,
    pub pairwise: Vec<Vec<usize>>,
    pub timing: Timing,
}

impl ConsensusJson {
    pub fn new(r: &ConsensusReport, objective: Objective, timing: Timing) -> Result<ConsensusJson> {
        let median_gap = Exact::gap(r.median_score, r.median_lb);
        let closest_gap = Exact::gap(r.closest_score, r.closest_lb);
        let (name, score, gap) = match objective {
            Objective::Median => ("median", r.median_score, median_gap.clone()),
            Objective::Closest => ("closest", r.closest_score, closest_gap.clone()),
        };
        Ok(ConsensusJson {
            method: r.method.name(),
            objective: name,
            candidate: serialize_newick(&r.candidate)?,
            objective_score: score,
            objective_gap: gap,
            median_score: r.median_score,
            closest_score: r.closest_score,
            median_lb: Exact::of(r.median_lb),
            closest_lb: Exact::of(r.closest_lb),
            median_gap,
            closest_gap,
            beats_inputs_median: r.beats_inputs_median,
            beats_inputs_closest: r.beats_inputs_closest,
            per_input_scores: r.per_input_scores.clone(),
            pairwise: r.pairwise.clone(),
            timing,
        })
    }
}

/// One method on one evaluation instance.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRow {
    pub instance: usize,
    pub leaves: usize,
    pub method: &'static str,
    pub median_score: usize,
    pub closest_score: usize,
    pub median_gap: f64,
    pub closest_gap: f64,
    pub wall_time_s: f64,
    pub better_than_inputs_median: bool,
    pub better_than_inputs_closest: bool,
}

impl EvalRow {
    pub fn new(instance: usize, leaves: usize, r: &ConsensusReport, wall_time_s: f64) -> EvalRow {
        EvalRow {
            instance,
            leaves,
            method: r.method.name(),
            median_score: r.median_score,
            closest_score: r.closest_score,
            median_gap: Exact::gap(r.median_score, r.median_lb).value,
            closest_gap: Exact::gap(r.closest_score, r.closest_lb).value,
            wall_time_s,
            better_than_inputs_median: r.beats_inputs_median,
            better_than_inputs_closest: r.beats_inputs_closest,
        }
    }
}

/// Per-method, per-size averages: the rows of a results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub method: &'static str,
    pub leaves: usize,
    /// mean median gap
    pub median: f64,
    /// mean closest gap
    pub closest: f64,
    pub time_s: f64,
    /// fraction of instances where the candidate scores no worse than every input
    pub better_than_inputs_median: f64,
    pub better_than_inputs_closest: f64,
    pub instances: usize,
}

impl EvalSummary {
    pub fn average(method: &'static str, leaves: usize, rows: &[&EvalRow]) -> EvalSummary {
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        EvalSummary {
            method,
            leaves,
            median: mean(&|r| r.median_gap),
            closest: mean(&|r| r.closest_gap),
            time_s: mean(&|r| r.wall_time_s),
            better_than_inputs_median: mean(&|r| r.better_than_inputs_median as u8 as f64),
            better_than_inputs_closest: mean(&|r| r.better_than_inputs_closest as u8 as f64),
            instances: rows.len(),
        }
    }
}
