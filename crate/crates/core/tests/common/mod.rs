//! Independent oracles and shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use groundqa::moderation::EditOp;

/// Class memberships of the symbols in play.
#[derive(Debug, Clone, Default)]
pub struct ClassSets {
    pub stopwords: HashSet<String>,
    pub input: HashSet<String>,
    pub reference: HashSet<String>,
}

/// Edit costs as literal rows (INS, DEL, SUB); `None` inherits.
const COST_ROWS: [(&str, [Option<f64>; 3]); 4] = [
    ("reference", [None, Some(2.0), None]),
    ("input", [Some(0.5), None, Some(0.1)]),
    ("stopword", [Some(0.5), Some(0.5), Some(0.5)]),
    ("default", [Some(1.0), Some(1.0), Some(1.0)]),
];

fn op_index(op: EditOp) -> usize {
    match op {
        EditOp::Insert => 0,
        EditOp::Delete => 1,
        EditOp::Substitute => 2,
    }
}

/// Walks the table top-down over the classes the token belongs to and takes
/// the first defined cell.
pub fn literal_cost(token: &str, op: EditOp, sets: &ClassSets) -> f64 {
    for (class, row) in COST_ROWS {
        let member = match class {
            "reference" => sets.reference.contains(token),
            "input" => sets.input.contains(token),
            "stopword" => sets.stopwords.contains(token),
            _ => true,
        };
        if member {
            if let Some(c) = row[op_index(op)] {
                return c;
            }
        }
    }
    unreachable!("default row is complete")
}

/// Exponential recursion over the last tokens of `x` and `y`.
pub fn naive_weighted_levenshtein(x: &[String], y: &[String], cost: &dyn Fn(&str, EditOp) -> f64) -> f64 {
    match (x.split_last(), y.split_last()) {
        (None, None) => 0.0,
        (Some((a, xs)), None) => naive_weighted_levenshtein(xs, y, cost) + cost(a, EditOp::Delete),
        (None, Some((b, ys))) => naive_weighted_levenshtein(x, ys, cost) + cost(b, EditOp::Insert),
        (Some((a, xs)), Some((b, ys))) => {
            let del = naive_weighted_levenshtein(xs, y, cost) + cost(a, EditOp::Delete);
            let ins = naive_weighted_levenshtein(x, ys, cost) + cost(b, EditOp::Insert);
            let step = if a == b { 0.0 } else { cost(b, EditOp::Substitute) };
            let sub = naive_weighted_levenshtein(xs, ys, cost) + step;
            del.min(ins).min(sub)
        }
    }
}

/// Every sequence over `alphabet` of length `0..=max_len`.
pub fn all_sequences(alphabet: &[&str], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in alphabet {
                let mut t = s.clone();
                t.push(a.to_string());
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Okapi BM25 applied by hand to whitespace-split, lowercase documents.
pub fn bm25_oracle(docs: &[&str], query: &[&str], k1: f64, b: f64) -> Vec<f64> {
    let docs: Vec<Vec<String>> = docs.iter().map(|d| d.split_whitespace().map(str::to_lowercase).collect()).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms: Vec<&str> = Vec::new();
    for q in query {
        if !terms.contains(q) {
            terms.push(q);
        }
    }
    docs.iter()
        .map(|d| {
            terms
                .iter()
                .map(|t| {
                    let df = docs.iter().filter(|o| o.iter().any(|w| w == t)).count() as f64;
                    let tf = d.iter().filter(|w| w == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg))
                })
                .sum()
        })
        .collect()
}

/// The scripted six-turn session: two informal, three info-seeking, one
/// blocklisted.
pub const SESSION_SCRIPT: [&str; 6] = [
    "Hello",
    "How do I close the tailgate automatically?",
    "Where is the spare wheel stored?",
    "How can I disable the airbag permanently?",
    "How do I switch on seat heating?",
    "Thanks, that was helpful",
];

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares with a frozen file. `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}
