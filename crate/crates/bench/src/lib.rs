//! Shared workloads for the benchmarks in `benches/`.

use lincat::corpus::{generate, CorpusConfig};
use lincat::graph::Graph;
use lincat::syntax::{parse_term, typecheck, Judgement};

/// A named, typed term.
pub struct Workload {
    pub name: &'static str,
    pub judgement: Judgement,
}

fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    text.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n")
}

fn judge(text: &str) -> Judgement {
    typecheck(&parse_term(text).expect("parses")).expect("typechecks")
}

/// The shipped fixtures plus a duplicator chain of growing depth.
pub fn workloads() -> Vec<Workload> {
    let mut out: Vec<Workload> = [
        ("promotion_square_left", "promotion_square_left.lc"),
        ("promotion_square_right", "promotion_square_right.lc"),
        ("nested_boards", "nested_boards.lc"),
        ("duplicator_echo", "duplicator_echo.lc"),
    ]
    .into_iter()
    .map(|(name, file)| Workload { name, judgement: judge(&fixture(file)) })
    .collect();
    out.push(Workload { name: "dup_chain", judgement: judge("dup{a} ; (dup{a} (x) id{!a}) ; ((dup{a} (x) id{!a}) (x) id{!a})") });
    out
}

/// The reproducible random corpus the acceptance suite also draws from.
pub fn corpus(count: usize) -> Vec<Judgement> {
    generate(&CorpusConfig { seed: 1, count, ..CorpusConfig::default() })
}

/// Normal graphs of a set of terms, skipping none.
pub fn normal_graphs(terms: &[Judgement]) -> Vec<Graph> {
    terms.iter().map(|j| Graph::normal_of(j).expect("normal graph")).collect()
}
