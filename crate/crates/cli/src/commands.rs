//! The subcommands. Each returns its full output so that `main` decides
//! where it goes.

use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use lincat::decide::{decide_equal, decide_semantic, prime_bound, Verdict, Witness};
use lincat::enumerate::{pi_exact_with, pi_mod_p, DEFAULT_CAP};
use lincat::generic::{check_stars, echo_instance, generic_form, EchoParams};
use lincat::graph::{Graph, GraphError};
use lincat::padic::{is_prime, next_prime_above};
use lincat::rewrite::{normalize, RewriteConfig, RewriteError};
use lincat::semantics::{coeff, parse_element, Interp};
use lincat::syntax::{parse_term_with, typecheck, Judgement, Signature, Term};

use crate::{selftest, Command, Config, Failure, Format, Via};

/// A finished command: what to print and the exit code.
pub struct Output {
    pub text: String,
    pub code: u8,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, code: 0 }
    }
}

fn json_text(v: &Value) -> String {
    format!("{}\n", serde_json::to_string_pretty(v).expect("json"))
}

impl Config {
    pub fn rewrite(&self) -> RewriteConfig {
        RewriteConfig { fuel: self.fuel, cong_budget: self.cong_budget }
    }

    fn signature(&self) -> Signature {
        match &self.atoms {
            Some(a) => Signature::declared(&a.iter().map(String::as_str).collect::<Vec<_>>()),
            None => Signature::open(),
        }
    }

    /// The matrix-model interpretation covering the declared atoms, or the
    /// atoms of the given terms.
    pub fn interp(&self, terms: &[&Term]) -> Interp {
        let atoms = match &self.atoms {
            Some(a) => a.clone(),
            None => {
                let mut a: Vec<String> = terms.iter().flat_map(|t| t.atoms()).collect();
                a.sort();
                a.dedup();
                a
            }
        };
        Interp::for_atoms(&atoms, self.interp_size, self.degree)
    }
}

/// Locate an input file: the path itself, else a fixture of that name
/// under `$LINCAT_FIXTURES` or the shipped fixtures directory.
fn locate(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    let dir = std::env::var_os("LINCAT_FIXTURES")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    let candidate = dir.join(path);
    if candidate.exists() {
        candidate
    } else {
        path.to_path_buf()
    }
}

/// Read a term file; lines starting with `//` are comments.
fn read_source(path: &Path) -> Result<String, Failure> {
    let found = locate(path);
    let text = std::fs::read_to_string(&found)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n"))
}

fn parse_file(cfg: &Config, path: &Path) -> Result<Term, Failure> {
    let src = read_source(path)?;
    parse_term_with(&src, &cfg.signature()).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn judge_file(cfg: &Config, path: &Path) -> Result<Judgement, Failure> {
    let t = parse_file(cfg, path)?;
    typecheck(&t).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn graph_failure(e: GraphError) -> Failure {
    match e {
        GraphError::Fuel(_) => Failure::inconclusive(e.to_string()),
        _ => Failure::input(e.to_string()),
    }
}

fn normal_graph(j: &Judgement) -> Result<Graph, Failure> {
    Graph::normal_of(j).map_err(graph_failure)
}

pub fn run(cfg: &Config, cmd: &Command) -> Result<Output, Failure> {
    match cmd {
        Command::Parse { file } => {
            let t = parse_file(cfg, file)?;
            Ok(Output::ok(match cfg.format {
                Format::Json => json_text(&json!({ "term": t.to_string() })),
                _ => format!("{t}\n"),
            }))
        }
        Command::Typecheck { file } => {
            let j = judge_file(cfg, file)?;
            Ok(Output::ok(match cfg.format {
                Format::Json => json_text(&json!({
                    "term": j.term.to_string(),
                    "source": j.source.to_string(),
                    "target": j.target.to_string(),
                })),
                _ => format!("{} : {} -> {}\n", j.term, j.source, j.target),
            }))
        }
        Command::Normalize { file, trace } => {
            let j = judge_file(cfg, file)?;
            let (nf, tr) = normalize(&j.term, &cfg.rewrite()).map_err(|e| match e {
                RewriteError::FuelExhausted { .. } => Failure::inconclusive(e.to_string()),
                _ => Failure::input(e.to_string()),
            })?;
            Ok(Output::ok(match cfg.format {
                Format::Json => {
                    let mut v = json!({ "input": j.term.to_string(), "normal": nf.to_string() });
                    if *trace {
                        v["trace"] = serde_json::to_value(&tr).expect("trace serializes");
                    }
                    json_text(&v)
                }
                _ if *trace => format!("{tr}{nf}\n"),
                _ => format!("{nf}\n"),
            }))
        }
        Command::Graph { file, dot, json } => {
            let j = judge_file(cfg, file)?;
            let g = normal_graph(&j)?;
            let format = if *dot {
                Format::Dot
            } else if *json {
                Format::Json
            } else {
                cfg.format
            };
            Ok(Output::ok(match format {
                Format::Dot => g.to_dot(),
                Format::Json => json_text(&g.to_json()),
                Format::Text => {
                    let s = g.stats();
                    let wf = g.check_wellformed();
                    let mut out = format!(
                        "{} wires, {} parts, {} boards, d = {}\n",
                        s.size,
                        g.live_parts().count(),
                        s.board_count,
                        s.dup_scale
                    );
                    out.push_str(&match wf.ok() {
                        true => format!("well formed ({} switchings checked)\n", wf.switchings_checked),
                        false => format!("NOT well formed: {}\n", wf.violations.join("; ")),
                    });
                    if let Ok(f) = generic_form(&g) {
                        out.push_str(&format!("generic form: {f}\n"));
                    }
                    out
                }
            }))
        }
        Command::Coeff { file, alpha, beta, via } => coeff_cmd(cfg, file, alpha, beta, *via),
        Command::Pecho { file } => pecho_cmd(cfg, file),
        Command::Decide { left, right, semantic } => decide_cmd(cfg, left, right, *semantic),
        Command::Selftest { count, inject_failure } => selftest::run(cfg, *count, *inject_failure),
    }
}

fn coeff_cmd(cfg: &Config, file: &Path, alpha: &str, beta: &str, via: Via) -> Result<Output, Failure> {
    let j = judge_file(cfg, file)?;
    let a = parse_element(alpha).map_err(|e| Failure::input(format!("α: {e}")))?;
    let b = parse_element(beta).map_err(|e| Failure::input(format!("β: {e}")))?;
    let interp = cfg.interp(&[&j.term]);
    let pi = match via {
        Via::Pi | Via::Both => {
            let g = normal_graph(&j)?;
            let r = pi_exact_with(&g, std::slice::from_ref(&a), std::slice::from_ref(&b), Some(&interp), DEFAULT_CAP)
                .map_err(|e| Failure::input(e.to_string()))?;
            Some((r.value, r.branches))
        }
        Via::Matrix => None,
    };
    let matrix = match via {
        Via::Matrix | Via::Both => Some(coeff(&j, &a, &b, &interp).map_err(|e| Failure::input(e.to_string()))?),
        Via::Pi => None,
    };
    let agree = match (&pi, &matrix) {
        (Some((x, _)), Some(y)) => x == y,
        _ => true,
    };
    let text = match cfg.format {
        Format::Json => {
            let mut v = json!({ "alpha": a.to_string(), "beta": b.to_string(), "agree": agree });
            if let Some((x, n)) = &pi {
                v["pi"] = json!(x.to_string());
                v["branches"] = json!(n);
            }
            if let Some(y) = &matrix {
                v["matrix"] = json!(y.to_string());
            }
            json_text(&v)
        }
        _ => {
            let mut out = String::new();
            if let Some((x, n)) = &pi {
                out.push_str(&format!("pi = {x} ({n} branches)\n"));
            }
            if let Some(y) = &matrix {
                out.push_str(&format!("matrix = {y}\n"));
            }
            if !agree {
                out.push_str("the enumeration process and the matrix model DISAGREE\n");
            }
            out
        }
    };
    Ok(Output { text, code: if agree { 0 } else { 1 } })
}

fn pecho_cmd(cfg: &Config, file: &Path) -> Result<Output, Failure> {
    let j = judge_file(cfg, file)?;
    let g = normal_graph(&j)?;
    let bound = prime_bound(&g, &g);
    let p = match cfg.p {
        Some(p) if p <= bound || !is_prime(p) => {
            return Err(Failure::input(format!("--p {p} must be a prime above {bound}")));
        }
        Some(p) => p,
        None => next_prime_above(bound),
    };
    let forms = generic_form(&g).map_err(|e| Failure::input(e.to_string()))?;
    let params = EchoParams::canonical(&forms, &g, p);
    let (alpha, beta) = echo_instance(&g, &params).map_err(|e| Failure::input(e.to_string()))?;
    let stars = check_stars(&g, &alpha, &beta, p);
    let value = pi_mod_p(&g, &alpha, &beta, p, None);
    let show = |xs: &[lincat::padic::PElem]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let text = match cfg.format {
        Format::Json => json_text(&json!({
            "p": p,
            "form": forms.to_string(),
            "k": params.k,
            "labels": params.labels,
            "alpha": show(&alpha),
            "beta": show(&beta),
            "coefficient_mod_p": value.as_ref().ok(),
            "stars": stars.holds.iter().enumerate().map(|(i, h)| json!({
                "condition": i + 1,
                "holds": h,
                "witness": stars.witness[i],
            })).collect::<Vec<_>>(),
        })),
        _ => {
            let mut out = format!("p = {p}\ngeneric form: {forms}\n");
            for (b, k) in &params.k {
                out.push_str(&format!("board {b}: p^(p^{k}) copies\n"));
            }
            for (v, l) in &params.labels {
                out.push_str(&format!("variable {v} ↦ {l}\n"));
            }
            out.push_str(&format!("α = ({})\nβ = ({})\n", show(&alpha).join(", "), show(&beta).join(", ")));
            match &value {
                Ok(v) => out.push_str(&format!("coefficient mod p = {v}\n")),
                Err(e) => out.push_str(&format!("coefficient mod p: {e}\n")),
            }
            out.push_str(&stars.to_string());
            out
        }
    };
    Ok(Output { text, code: if stars.all() { 0 } else { 1 } })
}

fn decide_cmd(cfg: &Config, left: &Path, right: &Path, semantic: bool) -> Result<Output, Failure> {
    let f = parse_file(cfg, left)?;
    let g = parse_file(cfg, right)?;
    let input = |e: lincat::decide::DecideError| Failure::input(e.to_string());
    let (decision, p) = if semantic {
        let (d, report) = decide_semantic(&f, &g, cfg.p, &cfg.rewrite()).map_err(input)?;
        (d, report.map(|r| r.p))
    } else {
        (decide_equal(&f, &g, &cfg.rewrite()).map_err(input)?, None)
    };
    let v = &decision.verdict;
    let text = match cfg.format {
        Format::Json => {
            let mut out = json!({
                "verdict": match v {
                    Verdict::EquivalentUpToSim => "equivalent",
                    Verdict::Distinct(_) => "distinct",
                    Verdict::Inconclusive(_) => "inconclusive",
                },
                "normal_left": decision.normal_left.as_ref().map(|t| t.to_string()),
                "normal_right": decision.normal_right.as_ref().map(|t| t.to_string()),
            });
            if let Some(p) = p {
                out["p"] = json!(p);
            }
            match v {
                Verdict::Distinct(w) => out["witness"] = witness_json(w),
                Verdict::Inconclusive(r) => out["reason"] = json!(r),
                Verdict::EquivalentUpToSim => {}
            }
            json_text(&out)
        }
        _ => {
            let mut out = format!("{v}\n");
            if let (Some(l), Some(r)) = (&decision.normal_left, &decision.normal_right) {
                out.push_str(&format!("left normal form:  {l}\nright normal form: {r}\n"));
            }
            out
        }
    };
    Ok(Output { text, code: v.exit_code() as u8 })
}

fn witness_json(w: &Witness) -> Value {
    match w {
        Witness::Forms { left, right, offset } => json!({ "kind": "forms", "left": left, "right": right, "offset": offset }),
        Witness::Shape { left, right } => json!({ "kind": "shape", "left": left, "right": right }),
        Witness::Echo { p, alpha, beta, condition, detail } => json!({
            "kind": "echo", "p": p, "alpha": alpha, "beta": beta, "condition": condition, "detail": detail,
        }),
    }
}
