use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const WORKED_A: &str = "((1,(2,(3,4))),(5,6));\n";
const WORKED_B: &str = "((1,(2,(5,4))),(3,6));\n";

fn mutree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mutree"))
        .args(args)
        .env("MUTREE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schema")
        .join(name);
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&v).unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}\n{doc:#}");
}

#[test]
fn sibling_order_does_not_matter() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.nwk", "((1,2),((4,3),5));");
    let b = write(&dir, "b.nwk", "((1,2),((3,4),5));");
    let o = mutree(&["dist", &a, &b]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn worked_pair_distance_and_script() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.nwk", WORKED_A);
    let b = write(&dir, "b.nwk", WORKED_B);
    assert_eq!(stdout(&mutree(&["dist", &a, &b])).trim(), "8");

    let o = mutree(&["dist", &a, &b, "--emit-script"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&schema("distance.schema.json"), &doc);
    let script = doc["script"].as_array().unwrap();
    assert_eq!(script.len(), 8);
    assert_eq!(doc["value"], 8);
    assert_eq!(script.last().unwrap()["result"], doc["target"]);
}

#[test]
fn matrix_is_symmetric_with_zero_diagonal() {
    let dir = TempDir::new().unwrap();
    let set = write(
        &dir,
        "set.nwk",
        "((1,2),(3,4),5);\n((1,3),(2,4),5);\n(1,2,3,4,5);\n((1,(2,3)),(4,5));\n",
    );
    let o = mutree(&["dist", &set, "--matrix"]);
    assert!(o.status.success());
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap().len(), 5);
    let rows: Vec<Vec<usize>> = rdr
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .skip(1)
                .map(|x| x.parse().unwrap())
                .collect()
        })
        .collect();
    assert_eq!(rows.len(), 4);
    for i in 0..4 {
        assert_eq!(rows[i][i], 0);
        for j in 0..4 {
            assert_eq!(rows[i][j], rows[j][i]);
        }
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.nwk", WORKED_A);
    let bad = write(&dir, "bad.nwk", "((1,2),3;\n");
    let other = write(&dir, "other.nwk", "((1,2),3);\n");
    assert_eq!(mutree(&["dist", &bad, &a]).status.code(), Some(2));
    assert_eq!(mutree(&["dist", &a, &other]).status.code(), Some(3));
    assert_eq!(
        mutree(&["dist", &a, "/nonexistent/x.nwk"]).status.code(),
        Some(2)
    );
    assert_eq!(mutree(&["gen", "--leaves", "5"]).status.code(), Some(1));
    assert_eq!(
        mutree(&["consensus", "-i", &a, "--method", "nope"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mutree(&["gen", "--leaves", "1", "--trees", "2", "--seed", "1", "-o", &other])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(mutree(&["--help"]).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_mutree"))
        .args(["dist", &a, &a])
        .env("MUTREE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mixed_collection_is_incomparable() {
    let dir = TempDir::new().unwrap();
    let set = write(&dir, "set.nwk", "((1,2),3);\n((1,2),(3,4));\n");
    let o = mutree(&["consensus", "-i", &set, "--method", "mcat"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let p1 = dir.path().join("1.nwk");
    let p2 = dir.path().join("2.nwk");
    for p in [&p1, &p2] {
        let o = mutree(&[
            "gen",
            "--leaves",
            "12",
            "--trees",
            "5",
            "--seed",
            "7",
            "-o",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (a, b) = (fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.trim_end().ends_with(';')).count(),
        5
    );
}

#[test]
fn consensus_of_identical_trees() {
    let dir = TempDir::new().unwrap();
    let set = write(&dir, "set.nwk", &WORKED_A.repeat(3));
    let out = dir.path().join("c.nwk");
    for method in ["mcat", "midpoint"] {
        let o = mutree(&[
            "consensus",
            "-i",
            &set,
            "--method",
            method,
            "--objective",
            "closest",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_valid(&schema("consensus.schema.json"), &doc);
        assert_eq!(doc["candidate"], "((1,(2,(3,4))),(5,6))");
        assert_eq!(doc["median_gap"]["exact"], "0/1");
        assert_eq!(doc["closest_gap"]["exact"], "0/1");
        assert_eq!(doc["objective"], "closest");
        assert_eq!(
            fs::read_to_string(&out).unwrap().trim(),
            "((1,(2,(3,4))),(5,6))"
        );
    }
}

#[test]
fn midpoint_of_two_splits_the_distance() {
    let dir = TempDir::new().unwrap();
    let set = write(&dir, "set.nwk", &format!("{WORKED_A}{WORKED_B}"));
    let o = mutree(&["consensus", "-i", &set, "--method", "midpoint"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let scores: Vec<u64> = doc["per_input_scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(scores[0] + scores[1], 8);
    assert!(scores[0].abs_diff(scores[1]) <= 1);
}

#[test]
fn consensus_report_on_generated_instance() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("g.nwk");
    let p = p.to_str().unwrap();
    assert!(
        mutree(&["gen", "--leaves", "10", "--trees", "4", "--seed", "3", "-o", p])
            .status
            .success()
    );
    let v = schema("consensus.schema.json");
    for method in ["mcat", "midpoint"] {
        let o = mutree(&["consensus", "-i", p, "--method", method]);
        assert!(o.status.success());
        let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_valid(&v, &doc);
        assert!(doc["median_gap"]["value"].as_f64().unwrap() >= 0.0);
        assert!(doc["closest_gap"]["value"].as_f64().unwrap() >= 0.0);
        assert_eq!(doc["pairwise"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn matrix_input_is_accepted() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "m.csv", "1,1,1,1\n1,1,0,0\n0,0,1,1\n");
    let t = write(&dir, "t.nwk", "((1,2),(3,4));\n");
    let o = mutree(&["dist", &m, &t]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn eval_averages_match_rows() {
    let dir = TempDir::new().unwrap();
    let rows = dir.path().join("rows.csv");
    let o = mutree(&[
        "eval",
        "--instances",
        "4",
        "--leaves",
        "6,8",
        "--trees",
        "3",
        "--seed",
        "11",
        "--rows",
        rows.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut summary = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = summary
        .headers()
        .unwrap()
        .iter()
        .map(String::from)
        .collect();
    assert_eq!(
        header,
        [
            "method",
            "leaves",
            "median",
            "closest",
            "time_s",
            "better_than_inputs_median",
            "better_than_inputs_closest",
            "instances"
        ]
    );
    let summary: Vec<csv::StringRecord> = summary.records().map(|r| r.unwrap()).collect();
    assert_eq!(summary.len(), 4);

    let mut rdr = csv::Reader::from_path(&rows).unwrap();
    let h = rdr.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|x| x == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 16);
    for s in &summary {
        let sel: Vec<&csv::StringRecord> = rows
            .iter()
            .filter(|r| r[col("method")] == s[0] && r[col("leaves")] == s[1])
            .collect();
        assert_eq!(sel.len(), 4);
        let mean = sel
            .iter()
            .map(|r| r[col("median_gap")].parse::<f64>().unwrap())
            .sum::<f64>()
            / 4.0;
        assert!((mean - s[2].parse::<f64>().unwrap()).abs() < 1e-9);
        for r in &sel {
            assert!(r[col("median_gap")].parse::<f64>().unwrap() >= 0.0);
            assert!(r[col("closest_gap")].parse::<f64>().unwrap() >= 0.0);
        }
    }
}

#[test]
fn eval_is_deterministic_apart_from_timing() {
    let run = || {
        let o = mutree(&[
            "eval",
            "--instances",
            "3",
            "--leaves",
            "7",
            "--trees",
            "3",
            "--seed",
            "5",
        ]);
        assert!(o.status.success());
        let mut r = csv::Reader::from_reader(o.stdout.as_slice());
        r.records()
            .map(|rec| {
                let rec = rec.unwrap();
                (
                    rec[0].to_string(),
                    rec[2].to_string(),
                    rec[3].to_string(),
                    rec[5].to_string(),
                )
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn embed_two_trees_recovers_their_distance() {
    let dir = TempDir::new().unwrap();
    let set = write(&dir, "set.nwk", &format!("{WORKED_A}{WORKED_B}"));
    let out = dir.path().join("e.csv");
    let o = mutree(&["embed", "-i", &set, "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_valid(&schema("embed.schema.json"), &doc);
    let pts = doc["points"].as_array().unwrap();
    let xy = |p: &Value| (p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap());
    let ((x0, y0), (x1, y1)) = (xy(&pts[0]), xy(&pts[1]));
    assert!((((x0 - x1).powi(2) + (y0 - y1).powi(2)).sqrt() - 8.0).abs() < 1e-9);
    assert!(doc["stress"].as_f64().unwrap() < 1e-9);
    let csv_text = fs::read_to_string(&out).unwrap();
    assert!(csv_text.starts_with("id,kind,x,y"));
}

#[test]
fn embed_counts_candidates() {
    let dir = TempDir::new().unwrap();
    let set = write(
        &dir,
        "set.nwk",
        "((1,2),(3,4),5);\n((1,3),(2,4),5);\n(1,2,3,4,5);\n",
    );
    let cand = write(&dir, "c.nwk", "((1,2),3,4,5);\n");
    let out = dir.path().join("e.csv");
    let o = mutree(&[
        "embed",
        "-i",
        &set,
        "--candidates",
        &cand,
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let pts = doc["points"].as_array().unwrap();
    assert_eq!(pts.len(), 4);
    assert_eq!(pts[3]["kind"], "candidate");
}
