//! Deciding equality of morphisms up to unit routing.
//!
//! [`decide_equal`] normalizes both terms, builds and normalizes their
//! graphs and compares them with [`almost_equal`]. [`decide_semantic`]
//! follows the confluence argument instead: it takes a p-echo instance of
//! the first graph, checks the five echo conditions against the second
//! graph and, when they hold, rebuilds the generic form from the instance
//! and compares it with the second graph's form.

use std::fmt;
use thiserror::Error;

use crate::generic::{
    check_stars, echo_instance, equivalent, generic_form, reconstruct_generic, EchoParams, FormPair, GenericError,
};
use crate::graph::{almost_equal, term_to_graph, Graph, GraphError, DEFAULT_GRAPH_FUEL};
use crate::padic::{is_prime, next_prime_above, PElem};
use crate::rewrite::{normalize, RewriteConfig, RewriteError};
use crate::syntax::{typecheck, Judgement, Term, TypeExpr, TypeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecideError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("boundaries differ: {left_src} -> {left_tgt} versus {right_src} -> {right_tgt}")]
    Boundary { left_src: TypeExpr, left_tgt: TypeExpr, right_src: TypeExpr, right_tgt: TypeExpr },
    #[error("prime {given} is too small: it must exceed {bound}")]
    PrimeTooSmall { given: u64, bound: u64 },
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Generic(#[from] GenericError),
}

/// Evidence that two morphisms differ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    /// The canonical generic forms of the two normal graphs and the first
    /// position where their texts diverge.
    Forms { left: String, right: String, offset: usize },
    /// The normal graphs have different shapes (given as statistics).
    Shape { left: String, right: String },
    /// An echo instance of the left graph on which one of the five echo
    /// conditions fails for the right graph.
    Echo { p: u64, alpha: Vec<String>, beta: Vec<String>, condition: usize, detail: String },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Forms { left, right, offset } => {
                writeln!(f, "generic forms differ at offset {offset}")?;
                writeln!(f, "  left:  {left}")?;
                write!(f, "  right: {right}")
            }
            Witness::Shape { left, right } => {
                writeln!(f, "normal graphs differ")?;
                writeln!(f, "  left:  {left}")?;
                write!(f, "  right: {right}")
            }
            Witness::Echo { p, alpha, beta, condition, detail } => {
                writeln!(f, "echo instance at p = {p}: ({}) ; ({})", alpha.join(", "), beta.join(", "))?;
                write!(f, "  condition ★{condition} fails on the right graph: {detail}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    EquivalentUpToSim,
    Distinct(Witness),
    Inconclusive(String),
}

impl Verdict {
    /// Process exit code: 0 equivalent, 1 distinct, 2 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::EquivalentUpToSim => 0,
            Verdict::Distinct(_) => 1,
            Verdict::Inconclusive(_) => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::EquivalentUpToSim => write!(f, "equivalent up to unit routing"),
            Verdict::Distinct(w) => write!(f, "distinct\n{w}"),
            Verdict::Inconclusive(r) => write!(f, "inconclusive: {r}"),
        }
    }
}

/// A verdict together with the normal forms that justify it.
#[derive(Clone, Debug)]
pub struct Decision {
    pub verdict: Verdict,
    pub normal_left: Option<Term>,
    pub normal_right: Option<Term>,
}

fn same_boundary(f: &Judgement, g: &Judgement) -> Result<(), DecideError> {
    if f.source != g.source || f.target != g.target {
        return Err(DecideError::Boundary {
            left_src: f.source.clone(),
            left_tgt: f.target.clone(),
            right_src: g.source.clone(),
            right_tgt: g.target.clone(),
        });
    }
    Ok(())
}

/// Normal graph of a term and its normal term, or the reason it could not
/// be reached within the budgets.
fn normal_graph(t: &Term, cfg: &RewriteConfig) -> Result<Result<(Term, Graph), String>, DecideError> {
    let nf = match normalize(t, cfg) {
        Ok((nf, _)) => nf,
        Err(RewriteError::FuelExhausted { trace, .. }) => {
            return Ok(Err(format!("rewriting fuel exhausted after {} steps", trace.steps.len())))
        }
        Err(e) => return Err(e.into()),
    };
    let j = typecheck(&nf)?;
    let mut g = term_to_graph(&j)?;
    match g.beta_normalize_with(crate::graph::RedexOrder::Leftmost, DEFAULT_GRAPH_FUEL) {
        Ok(_) => {}
        Err(GraphError::Fuel(n)) => return Ok(Err(format!("graph fuel exhausted after {n} steps"))),
        Err(e) => return Err(e.into()),
    }
    g.eta_expand();
    match g.beta_normalize_with(crate::graph::RedexOrder::Leftmost, DEFAULT_GRAPH_FUEL) {
        Ok(_) => {}
        Err(GraphError::Fuel(n)) => return Ok(Err(format!("graph fuel exhausted after {n} steps"))),
        Err(e) => return Err(e.into()),
    }
    Ok(Ok((nf, g)))
}

fn shape(g: &Graph) -> String {
    let s = g.stats();
    let mut kinds: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for p in g.live_parts() {
        *kinds.entry(g.part(p).kind.name()).or_insert(0) += 1;
    }
    let parts: Vec<String> = kinds.iter().map(|(k, n)| format!("{k}×{n}")).collect();
    format!("{} wires, {} boards, parts [{}]", s.size, s.board_count, parts.join(", "))
}

/// The explanation of why two non-almost-equal graphs differ.
fn structural_witness(a: &Graph, b: &Graph) -> Witness {
    if let (Ok(fa), Ok(fb)) = (generic_form(a), generic_form(b)) {
        let (l, r) = (fa.canonical().to_string(), fb.canonical().to_string());
        if l != r || !equivalent(&fa, &fb) {
            let offset = l.chars().zip(r.chars()).take_while(|(x, y)| x == y).count();
            return Witness::Forms { left: l, right: r, offset };
        }
    }
    Witness::Shape { left: shape(a), right: shape(b) }
}

/// Normalize both morphisms and compare their normal graphs.
pub fn decide_equal(f: &Term, g: &Term, cfg: &RewriteConfig) -> Result<Decision, DecideError> {
    let (jf, jg) = (typecheck(f)?, typecheck(g)?);
    same_boundary(&jf, &jg)?;
    let left = normal_graph(f, cfg)?;
    let right = normal_graph(g, cfg)?;
    let ((nf, gf), (ng, gg)) = match (left, right) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(r), _) | (_, Err(r)) => {
            return Ok(Decision { verdict: Verdict::Inconclusive(r), normal_left: None, normal_right: None })
        }
    };
    let verdict = if almost_equal(&gf, &gg) {
        Verdict::EquivalentUpToSim
    } else {
        Verdict::Distinct(structural_witness(&gf, &gg))
    };
    Ok(Decision { verdict, normal_left: Some(nf), normal_right: Some(ng) })
}

/// The smallest admissible prime for the semantic route:
/// `max(size(G), size(G′), d(G)) < p`.
pub fn prime_bound(left: &Graph, right: &Graph) -> u64 {
    let (a, b) = (left.stats(), right.stats());
    let d = num_traits::ToPrimitive::to_u64(&a.dup_scale).unwrap_or(u64::MAX / 4);
    (a.size as u64).max(b.size as u64).max(d)
}

/// Details of a semantic decision.
#[derive(Clone, Debug)]
pub struct SemanticReport {
    pub p: u64,
    pub alpha: Vec<PElem>,
    pub beta: Vec<PElem>,
    pub left_forms: FormPair,
    pub reconstructed: Option<FormPair>,
}

/// Decide through a p-echo instance of the left graph. `p` defaults to the
/// smallest prime above [`prime_bound`]; a smaller prime is refused.
pub fn decide_semantic(
    f: &Term,
    g: &Term,
    p: Option<u64>,
    cfg: &RewriteConfig,
) -> Result<(Decision, Option<SemanticReport>), DecideError> {
    let (jf, jg) = (typecheck(f)?, typecheck(g)?);
    same_boundary(&jf, &jg)?;
    let left = normal_graph(f, cfg)?;
    let right = normal_graph(g, cfg)?;
    let ((nf, gf), (ng, gg)) = match (left, right) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(r), _) | (_, Err(r)) => {
            let d = Decision { verdict: Verdict::Inconclusive(r), normal_left: None, normal_right: None };
            return Ok((d, None));
        }
    };
    let (verdict, report) = semantic_verdict(&gf, &gg, p)?;
    Ok((Decision { verdict, normal_left: Some(nf), normal_right: Some(ng) }, Some(report)))
}

/// The semantic comparison of two normal graphs.
pub fn semantic_verdict(gf: &Graph, gg: &Graph, p: Option<u64>) -> Result<(Verdict, SemanticReport), DecideError> {
    let bound = prime_bound(gf, gg);
    let p = match p {
        Some(p) if p <= bound || !is_prime(p) => return Err(DecideError::PrimeTooSmall { given: p, bound }),
        Some(p) => p,
        None => next_prime_above(bound),
    };
    let forms = generic_form(gf)?;
    let params = EchoParams::canonical(&forms, gf, p);
    let (alpha, beta) = echo_instance(gf, &params)?;
    let mut report = SemanticReport { p, alpha: alpha.clone(), beta: beta.clone(), left_forms: forms.clone(), reconstructed: None };
    let stars = check_stars(gg, &alpha, &beta, p);
    let show = |xs: &[PElem]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    if let Some(i) = stars.holds.iter().position(|h| !h) {
        let w = Witness::Echo {
            p,
            alpha: show(&alpha),
            beta: show(&beta),
            condition: i + 1,
            detail: stars.witness[i].clone().unwrap_or_default(),
        };
        return Ok((Verdict::Distinct(w), report));
    }
    let rebuilt = reconstruct_generic(&alpha, &beta, p)?;
    report.reconstructed = Some(rebuilt.clone());
    let right_forms = generic_form(gg)?;
    let verdict = if equivalent(&rebuilt, &right_forms) {
        Verdict::EquivalentUpToSim
    } else {
        let (l, r) = (rebuilt.canonical().to_string(), right_forms.canonical().to_string());
        let offset = l.chars().zip(r.chars()).take_while(|(x, y)| x == y).count();
        Verdict::Distinct(Witness::Forms { left: l, right: r, offset })
    };
    Ok((verdict, report))
}
