//! The `mutree` command line: distances, consensus, instance generation,
//! batch evaluation and 2D embeddings.

pub mod embed;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use mutree::consensus::{consensus_report_with, pairwise_distances, Method};
use mutree::oracle::{random_instance, InstanceSpec};
use mutree::{
    format_tree_set, load_tree_set, matrix_to_tree, parse_matrix_csv, serialize_newick,
    tree_distance, MutreeError, Tree,
};

use report::{ConsensusJson, DistanceJson, EvalRow, EvalSummary, StepJson, Timing};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(MutreeError),
    #[error("{0}")]
    Incomparable(MutreeError),
    #[error("{0}")]
    Failed(MutreeError),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    /// 1 for bad flags and failures, 2 for unreadable or malformed input,
    /// 3 for trees over different leaf sets.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Incomparable(_) => 3,
            _ => 1,
        }
    }
}

impl From<MutreeError> for CliError {
    fn from(e: MutreeError) -> Self {
        match e {
            MutreeError::Incomparable | MutreeError::MixedLeafSets { .. } => {
                CliError::Incomparable(e)
            }
            MutreeError::MalformedTree(_)
            | MutreeError::Parse { .. }
            | MutreeError::Line { .. }
            | MutreeError::InvalidMatrix(_)
            | MutreeError::NotPerfectPhylogeny(..)
            | MutreeError::EmptyInput
            | MutreeError::Io(_) => CliError::Input(e),
            _ => CliError::Failed(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "mutree",
    version,
    about = "Distances and consensus for mutation trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mcat,
    Midpoint,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Mcat => Method::Mcat,
            MethodArg::Midpoint => Method::Midpoint,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Median,
    Closest,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two trees, or all pairwise distances of a collection.
    Dist {
        /// Tree file (Newick collection, or a .csv mutation matrix).
        a: PathBuf,
        /// Second tree file; without it, `a` is treated as a collection.
        b: Option<PathBuf>,
        /// Print the distance as JSON together with the move script.
        #[arg(long)]
        emit_script: bool,
        /// Print the full pairwise matrix as CSV.
        #[arg(long)]
        matrix: bool,
    },
    /// Build a consensus tree for a collection and report its scores.
    Consensus {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "median")]
        objective: Objective,
        /// Also write the candidate tree here, in Newick.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a seeded random collection.
    Gen {
        #[arg(long)]
        leaves: usize,
        #[arg(long)]
        trees: usize,
        #[arg(long)]
        seed: u64,
        /// Maximum height; defaults to ceil(log2 leaves).
        #[arg(long)]
        height_cap: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run both consensus methods over many generated instances.
    Eval {
        #[arg(long)]
        instances: usize,
        /// Leaf counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        leaves: Vec<usize>,
        #[arg(long)]
        trees: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', value_enum, default_values = ["mcat", "midpoint"])]
        methods: Vec<MethodArg>,
        #[arg(long)]
        height_cap: Option<usize>,
        /// Per-instance rows as CSV.
        #[arg(long)]
        rows: Option<PathBuf>,
        /// Averages table as CSV; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// 2D coordinates of trees from classical multidimensional scaling.
    Embed {
        #[arg(short, long)]
        input: PathBuf,
        /// Extra trees (e.g. consensus candidates) placed alongside the inputs.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Reads a tree collection; `.csv` files are mutation matrices.
pub fn read_trees(path: &Path) -> CliResult<Vec<Tree>> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        let text = fs::read_to_string(path).map_err(MutreeError::from)?;
        let m = parse_matrix_csv(&text)?;
        return Ok(vec![matrix_to_tree(&m)?.tree]);
    }
    let trees = load_tree_set(path)?;
    if trees.is_empty() {
        return Err(CliError::Input(MutreeError::EmptyInput));
    }
    Ok(trees)
}

fn single(path: &Path) -> CliResult<Tree> {
    let mut t = read_trees(path)?;
    if t.len() != 1 {
        return Err(CliError::Usage(format!(
            "{} holds {} trees; pass one collection without a second file to compare them all",
            path.display(),
            t.len()
        )));
    }
    Ok(t.pop().unwrap())
}

fn write_matrix(m: &[Vec<usize>], out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tree".to_string()];
    header.extend((1..=m.len()).map(|i| format!("t{i}")));
    w.write_record(&header)?;
    for (i, row) in m.iter().enumerate() {
        let mut rec = vec![format!("t{}", i + 1)];
        rec.extend(row.iter().map(|d| d.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn ms(t: Instant) -> f64 {
    (t.elapsed().as_secs_f64() * 1000.0 * 1000.0).round() / 1000.0
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Dist {
            a,
            b,
            emit_script,
            matrix,
        } => cmd_dist(&a, b.as_deref(), emit_script, matrix, out),
        Command::Consensus {
            input,
            method,
            objective,
            output,
        } => cmd_consensus(&input, method.into(), objective, output.as_deref(), out),
        Command::Gen {
            leaves,
            trees,
            seed,
            height_cap,
            output,
        } => cmd_gen(leaves, trees, seed, height_cap, &output),
        Command::Eval {
            instances,
            leaves,
            trees,
            seed,
            methods,
            height_cap,
            rows,
            output,
        } => {
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
            let (rows_out, summary) =
                cmd_eval(instances, &leaves, trees, seed, &methods, height_cap)?;
            if let Some(p) = rows {
                let mut w = csv::Writer::from_path(p)?;
                for r in &rows_out {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            match output {
                Some(p) => write_summary(&summary, &mut fs::File::create(p)?),
                None => write_summary(&summary, out),
            }
        }
        Command::Embed {
            input,
            candidates,
            output,
        } => {
            let trees = read_trees(&input)?;
            let extra = match candidates {
                Some(p) => read_trees(&p)?,
                None => Vec::new(),
            };
            let e = embed::embed_trees(&trees, &extra)?;
            embed::write_csv(&e, &mut fs::File::create(output)?)?;
            writeln!(out, "{}", serde_json::to_string(&e.summary())?)?;
            Ok(())
        }
    }
}

pub fn cmd_dist(
    a: &Path,
    b: Option<&Path>,
    emit_script: bool,
    matrix: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    if matrix || b.is_none() {
        let mut trees = read_trees(a)?;
        if let Some(b) = b {
            trees.extend(read_trees(b)?);
        }
        let m = pairwise_distances(&trees)?;
        return write_matrix(&m, out);
    }
    let (ta, tb) = (single(a)?, single(b.unwrap())?);
    let start = Instant::now();
    let d = tree_distance(&ta, &tb)?;
    if !emit_script {
        writeln!(out, "{}", d.value)?;
        return Ok(());
    }
    let states = d.script.replay_states(&ta)?;
    let steps = d
        .script
        .steps
        .iter()
        .zip(states.windows(2))
        .enumerate()
        .map(|(i, (m, w))| StepJson::describe(i + 1, m, &w[0], &w[1]))
        .collect::<mutree::Result<Vec<_>>>()?;
    let report = DistanceJson {
        source: serialize_newick(&ta)?,
        target: serialize_newick(&tb)?,
        value: d.value,
        script: steps,
        time_ms: ms(start),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

pub fn cmd_consensus(
    input: &Path,
    method: Method,
    objective: Objective,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let t0 = Instant::now();
    let trees = read_trees(input)?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let pairwise = pairwise_distances(&trees)?;
    let distance_ms = ms(t1);
    let t2 = Instant::now();
    let r = consensus_report_with(&trees, method, pairwise)?;
    let consensus_ms = ms(t2);
    let json = ConsensusJson::new(
        &r,
        objective,
        Timing {
            parse_ms,
            distance_ms,
            consensus_ms,
        },
    )?;
    if let Some(p) = output {
        fs::write(p, format!("{}\n", json.candidate))?;
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

pub fn instance_header(spec: &InstanceSpec) -> String {
    format!(
        "mutree instance k={} n={} height_cap={} seed={}",
        spec.k, spec.n, spec.height_cap, spec.seed
    )
}

pub fn cmd_gen(
    leaves: usize,
    trees: usize,
    seed: u64,
    height_cap: Option<usize>,
    output: &Path,
) -> CliResult<()> {
    let mut spec = InstanceSpec::new(trees, leaves, seed);
    if let Some(h) = height_cap {
        spec.height_cap = h;
    }
    let set = random_instance(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(output, format_tree_set(&set, &[instance_header(&spec)])?)?;
    Ok(())
}

/// Seed of instance `i` with `n` leaves in an evaluation run.
pub fn instance_seed(seed: u64, n: usize, i: usize) -> u64 {
    seed.wrapping_add((n as u64) << 32).wrapping_add(i as u64)
}

pub fn cmd_eval(
    instances: usize,
    leaves: &[usize],
    k: usize,
    seed: u64,
    methods: &[Method],
    height_cap: Option<usize>,
) -> CliResult<(Vec<EvalRow>, Vec<EvalSummary>)> {
    if instances == 0 || methods.is_empty() {
        return Err(CliError::Usage(
            "need at least one instance and one method".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = leaves
        .iter()
        .flat_map(|&n| (0..instances).map(move |i| (n, i)))
        .collect();
    let per_job: Vec<Vec<EvalRow>> = jobs
        .par_iter()
        .map(|&(n, i)| -> CliResult<Vec<EvalRow>> {
            let mut spec = InstanceSpec::new(k, n, instance_seed(seed, n, i));
            if let Some(h) = height_cap {
                spec.height_cap = h;
            }
            let trees = random_instance(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
            let pairwise = pairwise_distances(&trees)?;
            methods
                .iter()
                .map(|&m| {
                    let t = Instant::now();
                    let r = consensus_report_with(&trees, m, pairwise.clone())?;
                    Ok(EvalRow::new(i, n, &r, t.elapsed().as_secs_f64()))
                })
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let rows: Vec<EvalRow> = per_job.into_iter().flatten().collect();
    let mut summary = Vec::new();
    for &m in methods {
        for &n in leaves {
            let sel: Vec<&EvalRow> = rows
                .iter()
                .filter(|r| r.method == m.name() && r.leaves == n)
                .collect();
            summary.push(EvalSummary::average(m.name(), n, &sel));
        }
    }
    Ok((rows, summary))
}

pub fn write_summary(summary: &[EvalSummary], out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Caps the worker pool from `MUTREE_THREADS`, if set.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MUTREE_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!(
                "MUTREE_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}
