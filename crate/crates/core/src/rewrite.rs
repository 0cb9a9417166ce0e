//! Rewriting modulo congruence on morphism terms.
//!
//! Terms are kept in a canonical *spine* form: composition is flattened
//! into a list of factors, identities disappear, and adjacent tensor (resp.
//! par, `!`) factors are merged by the interchange and functoriality laws,
//! so that `(f ⊗ g) ; (h ⊗ k)` is the single factor `(f;h) ⊗ (g;k)`. These
//! structural congruences therefore never need to be searched.
//!
//! A rule's left-hand side is a window of factors. The first factor of the
//! window may match the *tail* of a concrete factor, the last one its
//! *head*, and the ones in between must match completely; a pattern `id{A}`
//! inside a tensor matches anything at the open ends of a window. This
//! realises the interchange law during matching: `(τ ⊗ g) ; ∂′` contains
//! the redex `(τ ⊗ id) ; ∂′` because `τ ⊗ g = (id ⊗ g) ; (τ ⊗ id)`.
//!
//! The remaining congruences (naturality of φ̃, comonoid coherence,
//! symmetric monoidal coherence, …) are searched breadth-first, in both
//! directions, up to a state budget, whenever no rule applies directly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

use crate::syntax::{
    parse_pattern, typecheck, typecheck_open, Generator, Step, Term, TypeError, TypeExpr,
};

// ---------------------------------------------------------------------------
// Canonical spines
// ---------------------------------------------------------------------------

/// A composite `f₁ ; f₂ ; … ; fₙ` with its boundary types; `n = 0` is the
/// identity on `src`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Spine {
    pub src: TypeExpr,
    pub tgt: TypeExpr,
    pub factors: Vec<Factor>,
}

/// A non-identity factor of a spine.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Factor {
    Gen(Generator, Vec<TypeExpr>),
    Tensor(Box<Spine>, Box<Spine>),
    Par(Box<Spine>, Box<Spine>),
    Bang(Box<Spine>),
}

impl Factor {
    pub fn src(&self) -> TypeExpr {
        match self {
            Factor::Gen(g, args) => g.typing(args).0,
            Factor::Tensor(a, b) => TypeExpr::tensor(a.src.clone(), b.src.clone()),
            Factor::Par(a, b) => TypeExpr::par(a.src.clone(), b.src.clone()),
            Factor::Bang(a) => TypeExpr::bang(a.src.clone()),
        }
    }
    pub fn tgt(&self) -> TypeExpr {
        match self {
            Factor::Gen(g, args) => g.typing(args).1,
            Factor::Tensor(a, b) => TypeExpr::tensor(a.tgt.clone(), b.tgt.clone()),
            Factor::Par(a, b) => TypeExpr::par(a.tgt.clone(), b.tgt.clone()),
            Factor::Bang(a) => TypeExpr::bang(a.tgt.clone()),
        }
    }

    pub fn to_term(&self) -> Term {
        match self {
            Factor::Gen(g, args) => Term::Gen(*g, args.clone()),
            Factor::Tensor(a, b) => Term::tensor(a.to_term(), b.to_term()),
            Factor::Par(a, b) => Term::par(a.to_term(), b.to_term()),
            Factor::Bang(a) => Term::bang(a.to_term()),
        }
    }

    fn gen_count(&self) -> usize {
        match self {
            Factor::Gen(..) => 1,
            Factor::Tensor(a, b) | Factor::Par(a, b) => a.gen_count() + b.gen_count(),
            Factor::Bang(a) => a.gen_count(),
        }
    }
}

impl Spine {
    pub fn identity(t: TypeExpr) -> Self {
        Spine { src: t.clone(), tgt: t, factors: Vec::new() }
    }

    /// The canonical spine of a factor: empty when the factor is a
    /// structural identity such as `id ⊗ id` or `!id`.
    pub fn of_factor(f: Factor) -> Self {
        let (src, tgt) = (f.src(), f.tgt());
        let empty = match &f {
            Factor::Gen(..) => false,
            Factor::Tensor(a, b) | Factor::Par(a, b) => a.is_identity() && b.is_identity(),
            Factor::Bang(a) => a.is_identity(),
        };
        Spine { src, tgt, factors: if empty { Vec::new() } else { vec![f] } }
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    /// Append a factor, merging it into the last one when both are tensors
    /// (resp. pars, `!`s).
    fn push(&mut self, f: Factor) {
        debug_assert_eq!(self.tgt, f.src());
        self.tgt = f.tgt();
        match (self.factors.last_mut(), f) {
            (Some(Factor::Tensor(a, b)), Factor::Tensor(c, d)) => {
                a.append(*c);
                b.append(*d);
            }
            (Some(Factor::Par(a, b)), Factor::Par(c, d)) => {
                a.append(*c);
                b.append(*d);
            }
            (Some(Factor::Bang(a)), Factor::Bang(c)) => a.append(*c),
            (_, f) => self.factors.push(f),
        }
    }

    /// Sequential composite `self ; other`.
    pub fn append(&mut self, other: Spine) {
        debug_assert_eq!(self.tgt, other.src);
        for f in other.factors {
            self.push(f);
        }
    }

    pub fn then(mut self, other: Spine) -> Spine {
        self.append(other);
        self
    }

    /// Canonical spine of a closed, typed term.
    pub fn from_term(term: &Term) -> Result<Spine, TypeError> {
        typecheck(term)?;
        Ok(Spine::build(term))
    }

    fn build(term: &Term) -> Spine {
        match term {
            Term::Id(t) => Spine::identity(t.clone()),
            Term::Gen(g, args) => Spine::of_factor(Factor::Gen(*g, args.clone())),
            Term::Comp(f, g) => Spine::build(f).then(Spine::build(g)),
            Term::Tensor(f, g) => {
                Spine::of_factor(Factor::Tensor(Box::new(Spine::build(f)), Box::new(Spine::build(g))))
            }
            Term::Par(f, g) => {
                Spine::of_factor(Factor::Par(Box::new(Spine::build(f)), Box::new(Spine::build(g))))
            }
            Term::Bang(f) => Spine::of_factor(Factor::Bang(Box::new(Spine::build(f)))),
            Term::Var(..) => panic!("metavariable in a closed spine"),
        }
    }

    pub fn to_term(&self) -> Term {
        if self.factors.is_empty() {
            return Term::Id(self.src.clone());
        }
        Term::seq(self.factors.iter().map(Factor::to_term).collect())
    }

    /// Sub-spine `factors[lo..hi]` with its boundary types.
    fn slice(&self, lo: usize, hi: usize) -> Spine {
        let src = if lo < self.factors.len() { self.factors[lo].src() } else { self.tgt.clone() };
        let tgt = if hi > 0 && hi > lo { self.factors[hi - 1].tgt() } else { src.clone() };
        let mut s = Spine::identity(src);
        for f in &self.factors[lo..hi] {
            s.push(f.clone());
        }
        debug_assert_eq!(s.tgt, tgt);
        s
    }

    /// Number of generator occurrences.
    pub fn gen_count(&self) -> usize {
        self.factors.iter().map(Factor::gen_count).sum()
    }

    fn sub_spine(&self, path: &[(usize, Step)]) -> Option<&Spine> {
        let Some(((i, s), rest)) = path.split_first() else { return Some(self) };
        let child = match (self.factors.get(*i)?, s) {
            (Factor::Tensor(a, _) | Factor::Par(a, _), Step::L) => a,
            (Factor::Tensor(_, b) | Factor::Par(_, b), Step::R) => b,
            (Factor::Bang(a), Step::B) => a,
            _ => return None,
        };
        child.sub_spine(rest)
    }

    /// Replace the sub-spine at `path` by `f(sub)`, re-canonicalising the
    /// ancestors on the way up.
    fn modify(&self, path: &[(usize, Step)], f: &mut dyn FnMut(&Spine) -> Option<Spine>) -> Option<Spine> {
        let Some(((i, s), rest)) = path.split_first() else { return f(self) };
        let new_factor = match (self.factors.get(*i)?, s) {
            (Factor::Tensor(a, b), Step::L) => Factor::Tensor(Box::new(a.modify(rest, f)?), b.clone()),
            (Factor::Tensor(a, b), Step::R) => Factor::Tensor(a.clone(), Box::new(b.modify(rest, f)?)),
            (Factor::Par(a, b), Step::L) => Factor::Par(Box::new(a.modify(rest, f)?), b.clone()),
            (Factor::Par(a, b), Step::R) => Factor::Par(a.clone(), Box::new(b.modify(rest, f)?)),
            (Factor::Bang(a), Step::B) => Factor::Bang(Box::new(a.modify(rest, f)?)),
            _ => return None,
        };
        let mut out = self.slice(0, *i);
        out.append(Spine::of_factor(new_factor));
        out.append(self.slice(i + 1, self.factors.len()));
        Some(out)
    }
}

impl fmt::Display for Spine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

/// Canonical form of a closed term (flattened, identities removed,
/// interchange applied).
pub fn canonicalize(term: &Term) -> Result<Term, TypeError> {
    Ok(Spine::from_term(term)?.to_term())
}

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum PFactor {
    Gen(Generator, Vec<TypeExpr>),
    Tensor(PSpine, PSpine),
    Par(PSpine, PSpine),
    Bang(PSpine),
}

#[derive(Clone, Debug)]
enum PSpine {
    Seq(Vec<PFactor>),
    Id(TypeExpr),
    Meta(String, TypeExpr, TypeExpr),
}

fn pspine_of(term: &Term) -> Result<PSpine, String> {
    match term {
        Term::Id(t) => Ok(PSpine::Id(t.clone())),
        Term::Var(n, s, t) => Ok(PSpine::Meta(n.clone(), s.clone(), t.clone())),
        _ => {
            let mut out = Vec::new();
            pfactors_of(term, &mut out)?;
            Ok(PSpine::Seq(out))
        }
    }
}

fn pfactors_of(term: &Term, out: &mut Vec<PFactor>) -> Result<(), String> {
    match term {
        Term::Comp(f, g) => {
            pfactors_of(f, out)?;
            pfactors_of(g, out)
        }
        Term::Id(_) => Ok(()),
        Term::Var(n, ..) => Err(format!("metavariable ?{n} must sit under a tensor, par or !")),
        Term::Gen(g, a) => {
            out.push(PFactor::Gen(*g, a.clone()));
            Ok(())
        }
        Term::Tensor(f, g) => {
            out.push(PFactor::Tensor(pspine_of(f)?, pspine_of(g)?));
            Ok(())
        }
        Term::Par(f, g) => {
            out.push(PFactor::Par(pspine_of(f)?, pspine_of(g)?));
            Ok(())
        }
        Term::Bang(f) => {
            out.push(PFactor::Bang(pspine_of(f)?));
            Ok(())
        }
    }
}

/// Type variables are the uppercase atom names of pattern types.
fn is_type_var(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

/// Substitution produced by a match.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Binding {
    pub types: BTreeMap<String, TypeExpr>,
    pub metas: BTreeMap<String, Spine>,
}

fn unify(p: &TypeExpr, c: &TypeExpr, b: &mut Binding) -> bool {
    match (p, c) {
        (TypeExpr::Atom(v), _) if is_type_var(v) => match b.types.get(v) {
            Some(t) => t == c,
            None => {
                b.types.insert(v.clone(), c.clone());
                true
            }
        },
        (TypeExpr::Atom(x), TypeExpr::Atom(y)) => x == y,
        (TypeExpr::One, TypeExpr::One) | (TypeExpr::Bot, TypeExpr::Bot) => true,
        (TypeExpr::Tensor(a, b1), TypeExpr::Tensor(c1, d)) | (TypeExpr::Par(a, b1), TypeExpr::Par(c1, d)) => {
            unify(a, c1, b) && unify(b1, d, b)
        }
        (TypeExpr::Dual(a), TypeExpr::Dual(c1)) | (TypeExpr::Bang(a), TypeExpr::Bang(c1)) => unify(a, c1, b),
        _ => false,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Mode {
    Full,
    /// The pattern covers the head of the factor; the tail is left over.
    Prefix,
    /// The pattern covers the tail of the factor; the head is left over.
    Suffix,
}

fn leftover_empty(c: &Spine, mode: Mode) -> Spine {
    match mode {
        Mode::Suffix => Spine::identity(c.src.clone()),
        _ => Spine::identity(c.tgt.clone()),
    }
}

fn match_factor(p: &PFactor, c: &Factor, mode: Mode, b: &mut Binding) -> Option<Spine> {
    match (p, c) {
        (PFactor::Gen(g, pa), Factor::Gen(h, ca)) => {
            if g != h || pa.len() != ca.len() {
                return None;
            }
            for (x, y) in pa.iter().zip(ca) {
                if !unify(x, y, b) {
                    return None;
                }
            }
            Some(match mode {
                Mode::Suffix => Spine::identity(c.src()),
                _ => Spine::identity(c.tgt()),
            })
        }
        (PFactor::Tensor(pl, pr), Factor::Tensor(cl, cr)) => {
            let l = match_spine(pl, cl, mode, b)?;
            let r = match_spine(pr, cr, mode, b)?;
            Some(Spine::of_factor(Factor::Tensor(Box::new(l), Box::new(r))))
        }
        (PFactor::Par(pl, pr), Factor::Par(cl, cr)) => {
            let l = match_spine(pl, cl, mode, b)?;
            let r = match_spine(pr, cr, mode, b)?;
            Some(Spine::of_factor(Factor::Par(Box::new(l), Box::new(r))))
        }
        (PFactor::Bang(pi), Factor::Bang(ci)) => {
            let i = match_spine(pi, ci, mode, b)?;
            Some(Spine::of_factor(Factor::Bang(Box::new(i))))
        }
        _ => None,
    }
}

fn match_spine(p: &PSpine, c: &Spine, mode: Mode, b: &mut Binding) -> Option<Spine> {
    match p {
        PSpine::Id(t) => match mode {
            Mode::Full => (c.is_identity() && unify(t, &c.src, b)).then(|| c.clone()),
            Mode::Prefix => unify(t, &c.src, b).then(|| c.clone()),
            Mode::Suffix => unify(t, &c.tgt, b).then(|| c.clone()),
        },
        PSpine::Meta(name, s, t) => {
            if !unify(s, &c.src, b) || !unify(t, &c.tgt, b) {
                return None;
            }
            match b.metas.get(name) {
                Some(prev) if prev != c => return None,
                Some(_) => {}
                None => {
                    b.metas.insert(name.clone(), c.clone());
                }
            }
            Some(leftover_empty(c, mode))
        }
        PSpine::Seq(ps) => {
            let (k, n) = (ps.len(), c.factors.len());
            match mode {
                Mode::Full => {
                    if k != n {
                        return None;
                    }
                    for (pf, cf) in ps.iter().zip(&c.factors) {
                        match_factor(pf, cf, Mode::Full, b)?;
                    }
                    Some(Spine::identity(c.tgt.clone()))
                }
                Mode::Prefix => {
                    if k == 0 || n < k {
                        return None;
                    }
                    for (pj, fj) in ps[..k - 1].iter().zip(&c.factors) {
                        match_factor(pj, fj, Mode::Full, b)?;
                    }
                    let rest = match_factor(&ps[k - 1], &c.factors[k - 1], Mode::Prefix, b)?;
                    Some(rest.then(c.slice(k, n)))
                }
                Mode::Suffix => {
                    if k == 0 || n < k {
                        return None;
                    }
                    let o = n - k;
                    let rest = match_factor(&ps[0], &c.factors[o], Mode::Suffix, b)?;
                    for (pj, fj) in ps[1..].iter().zip(&c.factors[o + 1..]) {
                        match_factor(pj, fj, Mode::Full, b)?;
                    }
                    Some(c.slice(0, o).then(rest))
                }
            }
        }
    }
}

/// Match a window pattern at factors `i..i+k` of a spine; returns the
/// binding and the head/tail leftovers of the boundary factors.
fn match_window(ps: &[PFactor], c: &Spine, i: usize) -> Option<(Binding, Spine, Spine)> {
    let k = ps.len();
    if k == 0 || i + k > c.factors.len() {
        return None;
    }
    let mut b = Binding::default();
    if k == 1 {
        match_factor(&ps[0], &c.factors[i], Mode::Full, &mut b)?;
        let f = &c.factors[i];
        return Some((b, Spine::identity(f.src()), Spine::identity(f.tgt())));
    }
    let pre = match_factor(&ps[0], &c.factors[i], Mode::Suffix, &mut b)?;
    for (pj, fj) in ps[1..k - 1].iter().zip(&c.factors[i + 1..]) {
        match_factor(pj, fj, Mode::Full, &mut b)?;
    }
    let post = match_factor(&ps[k - 1], &c.factors[i + k - 1], Mode::Prefix, &mut b)?;
    Some((b, pre, post))
}

/// Instantiate a pattern term under a binding.
pub fn instantiate(t: &Term, b: &Binding) -> Term {
    fn ty(t: &TypeExpr, b: &Binding) -> TypeExpr {
        match t {
            TypeExpr::Atom(v) if is_type_var(v) => b.types.get(v).cloned().unwrap_or_else(|| t.clone()),
            TypeExpr::Atom(_) | TypeExpr::One | TypeExpr::Bot => t.clone(),
            TypeExpr::Tensor(x, y) => TypeExpr::tensor(ty(x, b), ty(y, b)),
            TypeExpr::Par(x, y) => TypeExpr::par(ty(x, b), ty(y, b)),
            TypeExpr::Dual(x) => TypeExpr::dual(ty(x, b)),
            TypeExpr::Bang(x) => TypeExpr::bang(ty(x, b)),
        }
    }
    match t {
        Term::Id(x) => Term::Id(ty(x, b)),
        Term::Gen(g, args) => Term::Gen(*g, args.iter().map(|x| ty(x, b)).collect()),
        Term::Var(n, s, tt) => match b.metas.get(n) {
            Some(sp) => sp.to_term(),
            None => Term::Var(n.clone(), ty(s, b), ty(tt, b)),
        },
        Term::Comp(f, g) => Term::comp(instantiate(f, b), instantiate(g, b)),
        Term::Tensor(f, g) => Term::tensor(instantiate(f, b), instantiate(g, b)),
        Term::Par(f, g) => Term::par(instantiate(f, b), instantiate(g, b)),
        Term::Bang(f) => Term::bang(instantiate(f, b)),
    }
}

fn type_vars_of_term(t: &Term, out: &mut Vec<String>) {
    fn ty(t: &TypeExpr, out: &mut Vec<String>) {
        for a in t.atoms() {
            if is_type_var(&a) {
                out.push(a);
            }
        }
    }
    match t {
        Term::Id(x) => ty(x, out),
        Term::Gen(_, args) => args.iter().for_each(|x| ty(x, out)),
        Term::Var(n, s, tt) => {
            out.push(format!("?{n}"));
            ty(s, out);
            ty(tt, out);
        }
        Term::Comp(f, g) | Term::Tensor(f, g) | Term::Par(f, g) => {
            type_vars_of_term(f, out);
            type_vars_of_term(g, out);
        }
        Term::Bang(f) => type_vars_of_term(f, out),
    }
}

fn vars_of(t: &Term) -> HashSet<String> {
    let mut v = Vec::new();
    type_vars_of_term(t, &mut v);
    v.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Rule and congruence tables
// ---------------------------------------------------------------------------

/// An oriented rewrite rule `lhs ⇒ rhs`.
#[derive(Clone, Debug)]
pub struct RewriteRule {
    pub id: u8,
    pub lhs: Term,
    pub rhs: Term,
    lhs_pat: Vec<PFactor>,
}

/// An unoriented congruence `left ≈ right`.
#[derive(Clone, Debug)]
pub struct CongruenceRule {
    pub name: &'static str,
    pub left: Term,
    pub right: Term,
    /// Structural congruences hold by construction of the spine form and
    /// are never searched.
    pub structural: bool,
    /// Derived from the others; included to shorten searches.
    pub derived: bool,
    left_pat: Option<Vec<PFactor>>,
    right_pat: Option<Vec<PFactor>>,
}

/// The oriented rules, transcribed from the rule figures: `(id, lhs, rhs)`.
pub const RULE_TEXT: &[(u8, &str, &str)] = &[
    (1, "delta{A} ; delta{!A}", "delta{A} ; !(delta{A})"),
    (2, "delta{A} ; eps{!A}", "id{!A}"),
    (3, "delta{A} ; !(eps{A})", "id{!A}"),
    (4, "delta{A} ; dup{!A}", "dup{A} ; (delta{A} (x) delta{A})"),
    (5, "delta{A} ; !(dup{A})", "dup{A} ; (delta{A} (x) delta{A}) ; phi{!A,!A}"),
    (6, "delta{A} ; weak{!A}", "weak{A}"),
    (7, "delta{A} ; !(weak{A})", "weak{A} ; phi0"),
    (8, "dup{A} ; (weak{A} (x) id{!A}) ; lunitT{!A}", "id{!A}"),
    (9, "phi{A,B} ; delta{A (x) B}", "(delta{A} (x) delta{B}) ; phi{!A,!B} ; !(phi{A,B})"),
    (10, "phi{A,B} ; eps{A (x) B}", "eps{A} (x) eps{B}"),
    (
        11,
        "phi{A,B} ; dup{A (x) B}",
        "(dup{A} (x) dup{B}) ; shufT{!A,!A,!B,!B} ; (phi{A,B} (x) phi{A,B})",
    ),
    (12, "phi{A,B} ; weak{A (x) B}", "(weak{A} (x) weak{B}) ; lunitT{1}"),
    (13, "phi0 ; delta{1}", "phi0 ; !(phi0)"),
    (14, "phi0 ; eps{1}", "id{1}"),
    (15, "phi0 ; dup{1}", "lunitT'{1} ; (phi0 (x) phi0)"),
    (16, "phi0 ; weak{1}", "id{1}"),
    (17, "(phi0 (x) id{!B}) ; phi{1,B}", "lunitT{!B} ; !(lunitT'{B})"),
    (18, "!(?f:A->B) ; delta{B}", "delta{A} ; !(!(?f:A->B))"),
    (19, "!(?f:A->B) ; eps{B}", "eps{A} ; ?f:A->B"),
    (20, "!(?f:A->B) ; dup{B}", "dup{A} ; (!(?f:A->B) (x) !(?f:A->B))"),
    (21, "!(?f:A->B) ; weak{B}", "weak{A}"),
    (
        22,
        "(tau{A} (x) id{A}) ; dist'{A,A^,A} ; (id{A} (%) gamma{A}) ; runitP{A}",
        "lunitT{A}",
    ),
    (
        23,
        "(id{A^} (x) tau{A}) ; dist{A^,A,A^} ; (gamma{A} (%) id{A^}) ; lunitP{A^}",
        "runitT{A^}",
    ),
];

/// The congruences: `(name, left, right, structural, derived)`.
pub const CONGRUENCE_TEXT: &[(&str, &str, &str, bool, bool)] = &[
    // exponential structure
    (
        "nat_phi",
        "(!(?f:A->C) (x) !(?g:B->D)) ; phi{C,D}",
        "phi{A,B} ; !(?f:A->C (x) ?g:B->D)",
        false,
        false,
    ),
    (
        "phi_assoc",
        "(phi{A,B} (x) id{!C}) ; phi{A (x) B,C} ; !(assocT{A,B,C})",
        "assocT{!A,!B,!C} ; (id{!A} (x) phi{B,C}) ; phi{A,B (x) C}",
        false,
        false,
    ),
    ("phi_sym", "symT{!A,!B} ; phi{B,A}", "phi{A,B} ; !(symT{A,B})", false, false),
    (
        "dup_coassoc",
        "dup{A} ; (dup{A} (x) id{!A}) ; assocT{!A,!A,!A}",
        "dup{A} ; (id{!A} (x) dup{A})",
        false,
        false,
    ),
    ("dup_cocomm", "dup{A} ; symT{!A,!A}", "dup{A}", false, false),
    ("dup_counit_right", "dup{A} ; (id{!A} (x) weak{A}) ; runitT{!A}", "id{!A}", false, true),
    // symmetric monoidal coherence
    ("symT_inv", "symT{A,B} ; symT{B,A}", "id{A (x) B}", false, false),
    ("symP_inv", "symP{A,B} ; symP{B,A}", "id{A (%) B}", false, false),
    ("assocT_inv", "assocT{A,B,C} ; assocT'{A,B,C}", "id{(A (x) B) (x) C}", false, false),
    ("assocT_inv'", "assocT'{A,B,C} ; assocT{A,B,C}", "id{A (x) (B (x) C)}", false, false),
    ("assocP_inv", "assocP{A,B,C} ; assocP'{A,B,C}", "id{(A (%) B) (%) C}", false, false),
    ("assocP_inv'", "assocP'{A,B,C} ; assocP{A,B,C}", "id{A (%) (B (%) C)}", false, false),
    ("lunitT_inv", "lunitT{A} ; lunitT'{A}", "id{1 (x) A}", false, false),
    ("lunitT_inv'", "lunitT'{A} ; lunitT{A}", "id{A}", false, false),
    ("runitT_inv", "runitT{A} ; runitT'{A}", "id{A (x) 1}", false, false),
    ("runitT_inv'", "runitT'{A} ; runitT{A}", "id{A}", false, false),
    ("lunitP_inv", "lunitP{A} ; lunitP'{A}", "id{# (%) A}", false, false),
    ("lunitP_inv'", "lunitP'{A} ; lunitP{A}", "id{A}", false, false),
    ("runitP_inv", "runitP{A} ; runitP'{A}", "id{A (%) #}", false, false),
    ("runitP_inv'", "runitP'{A} ; runitP{A}", "id{A}", false, false),
    ("symT_unit", "symT{A,1} ; lunitT{A}", "runitT{A}", false, false),
    ("symP_unit", "symP{A,#} ; lunitP{A}", "runitP{A}", false, false),
    (
        "symT_nat",
        "(?f:A->C (x) ?g:B->D) ; symT{C,D}",
        "symT{A,B} ; (?g:B->D (x) ?f:A->C)",
        false,
        false,
    ),
    (
        "symP_nat",
        "(?f:A->C (%) ?g:B->D) ; symP{C,D}",
        "symP{A,B} ; (?g:B->D (%) ?f:A->C)",
        false,
        false,
    ),
    (
        "lunitT_nat",
        "(id{1} (x) ?f:A->B) ; lunitT{B}",
        "lunitT{A} ; ?f:A->B",
        false,
        false,
    ),
    (
        "runitT_nat",
        "(?f:A->B (x) id{1}) ; runitT{B}",
        "runitT{A} ; ?f:A->B",
        false,
        false,
    ),
    (
        "assocT_nat",
        "((?f:A->D (x) ?g:B->E) (x) ?h:C->F) ; assocT{D,E,F}",
        "assocT{A,B,C} ; (?f:A->D (x) (?g:B->E (x) ?h:C->F))",
        false,
        false,
    ),
    (
        "shufT_def",
        "shufT{A,B,C,D}",
        "assocT{A,B,C (x) D} ; (id{A} (x) assocT'{B,C,D}) ; (id{A} (x) (symT{B,C} (x) id{D})) ; (id{A} (x) assocT{C,B,D}) ; assocT'{A,C,B (x) D}",
        false,
        true,
    ),
    ("symT_hexagon", "assocT{A,B,C} ; symT{A,B (x) C} ; assocT{B,C,A}", "(symT{A,B} (x) id{C}) ; assocT{B,A,C} ; (id{B} (x) symT{A,C})", false, false),
    // linear distributivity
    (
        "dist_nat",
        "(?f:A->D (x) (?g:B->E (%) ?h:C->F)) ; dist{D,E,F}",
        "dist{A,B,C} ; ((?f:A->D (x) ?g:B->E) (%) ?h:C->F)",
        false,
        false,
    ),
    (
        "distP_nat",
        "((?f:A->D (%) ?g:B->E) (x) ?h:C->F) ; dist'{D,E,F}",
        "dist'{A,B,C} ; (?f:A->D (%) (?g:B->E (x) ?h:C->F))",
        false,
        false,
    ),
    (
        "dist_unit",
        "dist{1,B,C} ; (lunitT{B} (%) id{C})",
        "lunitT{B (%) C}",
        false,
        false,
    ),
    (
        "distP_unit",
        "dist'{A,B,1} ; (id{A} (%) runitT{B})",
        "runitT{A (%) B}",
        false,
        false,
    ),
    // structural: interchange and functoriality
    (
        "interchange",
        "(?f:A->B (x) ?g:C->D) ; (?h:B->E (x) ?k:D->F)",
        "(?f:A->B ; ?h:B->E) (x) (?g:C->D ; ?k:D->F)",
        true,
        false,
    ),
    (
        "interchange_par",
        "(?f:A->B (%) ?g:C->D) ; (?h:B->E (%) ?k:D->F)",
        "(?f:A->B ; ?h:B->E) (%) (?g:C->D ; ?k:D->F)",
        true,
        false,
    ),
    ("bang_functor", "!(?f:A->B) ; !(?g:B->C)", "!(?f:A->B ; ?g:B->C)", true, false),
    ("tensor_id", "id{A} (x) id{B}", "id{A (x) B}", true, false),
    ("par_id", "id{A} (%) id{B}", "id{A (%) B}", true, false),
    ("bang_id", "!(id{A})", "id{!A}", true, false),
    ("id_left", "id{A} ; ?f:A->B", "?f:A->B", true, false),
    ("id_right", "?f:A->B ; id{B}", "?f:A->B", true, false),
];

fn load_rules() -> Vec<RewriteRule> {
    RULE_TEXT
        .iter()
        .map(|(id, l, r)| {
            let lhs = parse_pattern(l).unwrap_or_else(|e| panic!("rule {id} lhs: {e}"));
            let rhs = parse_pattern(r).unwrap_or_else(|e| panic!("rule {id} rhs: {e}"));
            let lhs_pat = match pspine_of(&lhs).unwrap_or_else(|e| panic!("rule {id}: {e}")) {
                PSpine::Seq(ps) => ps,
                _ => panic!("rule {id}: lhs must be a composite"),
            };
            RewriteRule { id: *id, lhs, rhs, lhs_pat }
        })
        .collect()
}

fn window_pattern(t: &Term, other: &Term) -> Option<Vec<PFactor>> {
    // A direction is searchable when its source side is a composite of
    // factors and binds every variable of the other side.
    let ps = match pspine_of(t).ok()? {
        PSpine::Seq(ps) if !ps.is_empty() => ps,
        _ => return None,
    };
    let mine = vars_of(t);
    if vars_of(other).iter().all(|v| mine.contains(v)) {
        Some(ps)
    } else {
        None
    }
}

fn load_congruences() -> Vec<CongruenceRule> {
    CONGRUENCE_TEXT
        .iter()
        .map(|(name, l, r, structural, derived)| {
            let left = parse_pattern(l).unwrap_or_else(|e| panic!("{name}: {e}"));
            let right = parse_pattern(r).unwrap_or_else(|e| panic!("{name}: {e}"));
            let (left_pat, right_pat) = if *structural {
                (None, None)
            } else {
                (window_pattern(&left, &right), window_pattern(&right, &left))
            };
            CongruenceRule { name, left, right, structural: *structural, derived: *derived, left_pat, right_pat }
        })
        .collect()
}

/// The 23 oriented rules in ascending id order.
pub fn rules_table() -> &'static [RewriteRule] {
    static T: OnceLock<Vec<RewriteRule>> = OnceLock::new();
    T.get_or_init(load_rules)
}

/// All congruences, structural ones included.
pub fn congruences_table() -> &'static [CongruenceRule] {
    static T: OnceLock<Vec<CongruenceRule>> = OnceLock::new();
    T.get_or_init(load_congruences)
}

pub fn rule(id: u8) -> Option<&'static RewriteRule> {
    rules_table().iter().find(|r| r.id == id)
}

pub fn congruence(name: &str) -> Option<&'static CongruenceRule> {
    congruences_table().iter().find(|c| c.name == name)
}

/// Check that both legs of a pattern pair typecheck to the same boundary.
pub fn legs_agree(lhs: &Term, rhs: &Term) -> bool {
    match (typecheck_open(lhs), typecheck_open(rhs)) {
        (Ok(a), Ok(b)) => a.source == b.source && a.target == b.target,
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Redexes, steps and traces
// ---------------------------------------------------------------------------

/// Position of a window: the chain of (factor index, side) leading to a
/// sub-spine, then the index of the window's first factor in it.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct RedexPath {
    pub spine: Vec<(usize, Step)>,
    pub index: usize,
}

impl RedexPath {
    pub fn root(index: usize) -> Self {
        RedexPath { spine: Vec::new(), index }
    }
    pub fn depth(&self) -> usize {
        self.spine.len()
    }
}

impl fmt::Display for RedexPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in &self.spine {
            let s = match s {
                Step::L => "L",
                Step::R => "R",
                Step::B => "B",
            };
            write!(f, "{i}.{s}.")?;
        }
        write!(f, "{}", self.index)
    }
}

/// What a trace step applied.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum StepKind {
    Rule(u8),
    /// A congruence used left-to-right (`forward`) or right-to-left.
    Congruence { name: String, forward: bool },
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepKind::Rule(n) => write!(f, "{n}"),
            StepKind::Congruence { name, forward } => {
                write!(f, "C({name},{})", if *forward { "->" } else { "<-" })
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TraceStep {
    pub kind: StepKind,
    pub path: RedexPath,
    pub before: String,
    pub after: String,
}

/// The steps of a normalization, in order.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn rule_ids(&self) -> Vec<u8> {
        self.steps
            .iter()
            .filter_map(|s| match s.kind {
                StepKind::Rule(n) => Some(n),
                _ => None,
            })
            .collect()
    }
    pub fn congruence_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s.kind, StepKind::Congruence { .. })).count()
    }
}

impl fmt::Display for Trace {
    /// One line per step: `<id> @ <path> : <before> => <after>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{} @ {} : {} => {}", s.kind, s.path, s.before, s.after)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("no rule {0}")]
    UnknownRule(String),
    #[error("{rule} does not match at {path}")]
    NoMatch { rule: String, path: String },
    #[error("path {0} is out of range")]
    BadPath(String),
    #[error("fuel exhausted after {} steps", trace.steps.len())]
    FuelExhausted { term: Term, trace: Trace },
}

/// Budgets of the normalizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteConfig {
    /// Maximum number of trace steps.
    pub fuel: usize,
    /// Maximum number of congruence variants explored per search.
    pub cong_budget: usize,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig { fuel: 10_000, cong_budget: 64 }
    }
}

/// A located match of a window pattern.
struct Hit {
    path: RedexPath,
    binding: Binding,
    pre: Spine,
    post: Spine,
    len: usize,
}

/// Every match of `pat` in `s`, leftmost-innermost: at each index the
/// factor's interior is searched before windows starting there.
fn find_all(s: &Spine, pat: &[PFactor], prefix: &mut Vec<(usize, Step)>, out: &mut Vec<Hit>, first_only: bool) {
    for i in 0..s.factors.len() {
        if first_only && !out.is_empty() {
            return;
        }
        let children: Vec<(Step, &Spine)> = match &s.factors[i] {
            Factor::Gen(..) => vec![],
            Factor::Tensor(a, b) | Factor::Par(a, b) => vec![(Step::L, a), (Step::R, b)],
            Factor::Bang(a) => vec![(Step::B, a)],
        };
        for (st, child) in children {
            prefix.push((i, st));
            find_all(child, pat, prefix, out, first_only);
            prefix.pop();
            if first_only && !out.is_empty() {
                return;
            }
        }
        if let Some((binding, pre, post)) = match_window(pat, s, i) {
            out.push(Hit { path: RedexPath { spine: prefix.clone(), index: i }, binding, pre, post, len: pat.len() });
        }
    }
}

fn hits(s: &Spine, pat: &[PFactor], first_only: bool) -> Vec<Hit> {
    let mut out = Vec::new();
    find_all(s, pat, &mut Vec::new(), &mut out, first_only);
    out
}

/// Rewrite the window of `hit` to the instantiated `rhs`.
fn rewrite_at(s: &Spine, hit: &Hit, rhs: &Term) -> Option<(Spine, String)> {
    let inst = instantiate(rhs, &hit.binding);
    let rhs_spine = Spine::from_term(&inst).ok()?;
    let after = inst.to_string();
    let out = s.modify(&hit.path.spine, &mut |sub: &Spine| {
        let i = hit.path.index;
        if i + hit.len > sub.factors.len() {
            return None;
        }
        let mut out = sub.slice(0, i);
        out.append(hit.pre.clone());
        if out.tgt != rhs_spine.src {
            return None;
        }
        out.append(rhs_spine.clone());
        out.append(hit.post.clone());
        out.append(sub.slice(i + hit.len, sub.factors.len()));
        Some(out)
    })?;
    Some((out, after))
}

/// One applicable rule instance.
pub struct Redex {
    pub rule: u8,
    pub path: RedexPath,
}

/// All direct rule redexes, in strategy order (leftmost-innermost,
/// ascending rule id at equal position).
pub fn redexes(s: &Spine) -> Vec<Redex> {
    let mut all: Vec<Redex> = Vec::new();
    for r in rules_table() {
        for h in hits(s, &r.lhs_pat, false) {
            all.push(Redex { rule: r.id, path: h.path });
        }
    }
    all.sort_by(|a, b| position_order(&a.path, &b.path).then(a.rule.cmp(&b.rule)));
    all
}

/// Leftmost-innermost order of window positions: a window starting at
/// factor `i` comes after every redex inside factor `i` and before every
/// redex inside factor `i + 1`.
fn position_order(a: &RedexPath, b: &RedexPath) -> std::cmp::Ordering {
    let key = |p: &RedexPath| -> Vec<(usize, u8)> {
        let mut v: Vec<(usize, u8)> = p
            .spine
            .iter()
            .map(|(i, s)| (*i, if *s == Step::R { 1 } else { 0 }))
            .collect();
        v.push((p.index, 2));
        v
    };
    key(a).cmp(&key(b))
}

fn first_redex(s: &Spine) -> Option<(u8, Hit)> {
    // Scan positions leftmost-innermost; the first position where some
    // rule matches wins, with the smallest rule id at that position.
    let mut best: Option<(u8, Hit)> = None;
    for r in rules_table() {
        if let Some(h) = hits(s, &r.lhs_pat, true).into_iter().next() {
            let better = match &best {
                None => true,
                Some((_, bh)) => position_order(&h.path, &bh.path) == std::cmp::Ordering::Less,
            };
            if better {
                best = Some((r.id, h));
            }
        }
    }
    best
}

fn apply_hit_rule(s: &Spine, id: u8, hit: &Hit) -> Option<(Spine, TraceStep)> {
    let r = rule(id)?;
    let (out, after) = rewrite_at(s, hit, &r.rhs)?;
    let before = instantiate(&r.lhs, &hit.binding).to_string();
    Some((out, TraceStep { kind: StepKind::Rule(id), path: hit.path.clone(), before, after }))
}

/// All one-step congruence variants of a spine.
fn congruence_variants(s: &Spine) -> Vec<(Spine, TraceStep)> {
    let mut out = Vec::new();
    for c in congruences_table() {
        for (forward, pat, src, dst) in [
            (true, &c.left_pat, &c.left, &c.right),
            (false, &c.right_pat, &c.right, &c.left),
        ] {
            let Some(pat) = pat else { continue };
            for h in hits(s, pat, false) {
                if let Some((v, after)) = rewrite_at(s, &h, dst) {
                    let before = instantiate(src, &h.binding).to_string();
                    out.push((
                        v,
                        TraceStep {
                            kind: StepKind::Congruence { name: c.name.to_string(), forward },
                            path: h.path,
                            before,
                            after,
                        },
                    ));
                }
            }
        }
    }
    out
}

/// Breadth-first search through congruence variants for one that has a
/// direct redex. Returns the congruence steps leading to it.
fn congruence_search(s: &Spine, budget: usize) -> Option<(Spine, Vec<TraceStep>)> {
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(s.to_string());
    let mut queue: VecDeque<(Spine, Vec<TraceStep>)> = VecDeque::new();
    queue.push_back((s.clone(), Vec::new()));
    while let Some((cur, steps)) = queue.pop_front() {
        for (v, step) in congruence_variants(&cur) {
            if seen.len() >= budget {
                return None;
            }
            if !seen.insert(v.to_string()) {
                continue;
            }
            let mut path = steps.clone();
            path.push(step);
            if first_redex(&v).is_some() {
                return Some((v, path));
            }
            queue.push_back((v, path));
        }
    }
    None
}

/// Apply rule `id` at `path` (on the canonical form of `term`).
pub fn apply_rule(term: &Term, id: u8, path: &RedexPath) -> Result<Term, RewriteError> {
    let s = Spine::from_term(term)?;
    let r = rule(id).ok_or_else(|| RewriteError::UnknownRule(id.to_string()))?;
    let no_match = || RewriteError::NoMatch { rule: format!("rule {id}"), path: path.to_string() };
    let sub = s.sub_spine(&path.spine).ok_or_else(|| RewriteError::BadPath(path.to_string()))?;
    if path.index >= sub.factors.len() {
        return Err(RewriteError::BadPath(path.to_string()));
    }
    let (binding, pre, post) = match_window(&r.lhs_pat, sub, path.index).ok_or_else(no_match)?;
    let hit = Hit { path: path.clone(), binding, pre, post, len: r.lhs_pat.len() };
    let (out, _) = apply_hit_rule(&s, id, &hit).ok_or_else(no_match)?;
    Ok(out.to_term())
}

/// Apply a congruence in the given direction at `path`.
pub fn apply_congruence(term: &Term, name: &str, forward: bool, path: &RedexPath) -> Result<Term, RewriteError> {
    let s = Spine::from_term(term)?;
    let c = congruence(name).ok_or_else(|| RewriteError::UnknownRule(name.to_string()))?;
    let (pat, dst) = if forward { (&c.left_pat, &c.right) } else { (&c.right_pat, &c.left) };
    let no_match = || RewriteError::NoMatch { rule: name.to_string(), path: path.to_string() };
    let pat = pat.as_ref().ok_or_else(no_match)?;
    let sub = s.sub_spine(&path.spine).ok_or_else(|| RewriteError::BadPath(path.to_string()))?;
    let (binding, pre, post) = match_window(pat, sub, path.index).ok_or_else(no_match)?;
    let hit = Hit { path: path.clone(), binding, pre, post, len: pat.len() };
    let (out, _) = rewrite_at(&s, &hit, dst).ok_or_else(no_match)?;
    Ok(out.to_term())
}

/// Replay a trace from `term`.
pub fn replay(term: &Term, trace: &Trace) -> Result<Term, RewriteError> {
    let mut t = canonicalize(term)?;
    for s in &trace.steps {
        t = match &s.kind {
            StepKind::Rule(id) => apply_rule(&t, *id, &s.path)?,
            StepKind::Congruence { name, forward } => apply_congruence(&t, name, *forward, &s.path)?,
        };
    }
    Ok(t)
}

/// Normalize with the deterministic leftmost-innermost strategy.
pub fn normalize(term: &Term, cfg: &RewriteConfig) -> Result<(Term, Trace), RewriteError> {
    normalize_with(term, cfg, &mut |s: &Spine| first_redex(s))
}

/// Normalize choosing a uniformly random direct redex at every step.
pub fn normalize_random<R: Rng>(term: &Term, cfg: &RewriteConfig, rng: &mut R) -> Result<(Term, Trace), RewriteError> {
    normalize_with(term, cfg, &mut |s: &Spine| {
        let mut all: Vec<(u8, Hit)> = Vec::new();
        for r in rules_table() {
            for h in hits(s, &r.lhs_pat, false) {
                all.push((r.id, h));
            }
        }
        if all.is_empty() {
            None
        } else {
            let k = rng.gen_range(0..all.len());
            Some(all.swap_remove(k))
        }
    })
}

fn normalize_with(
    term: &Term,
    cfg: &RewriteConfig,
    pick: &mut dyn FnMut(&Spine) -> Option<(u8, Hit)>,
) -> Result<(Term, Trace), RewriteError> {
    let mut s = Spine::from_term(term)?;
    let mut trace = Trace::default();
    loop {
        if trace.steps.len() >= cfg.fuel {
            return Err(RewriteError::FuelExhausted { term: s.to_term(), trace });
        }
        if let Some((id, hit)) = pick(&s) {
            let (next, step) = apply_hit_rule(&s, id, &hit).expect("matched redex rewrites");
            trace.steps.push(step);
            s = next;
            continue;
        }
        match congruence_search(&s, cfg.cong_budget) {
            Some((v, steps)) => {
                trace.steps.extend(steps);
                s = v;
            }
            None => return Ok((s.to_term(), trace)),
        }
    }
}

/// True iff no rule applies, directly or after a bounded congruence search.
pub fn is_normal(term: &Term, cfg: &RewriteConfig) -> Result<bool, RewriteError> {
    let s = Spine::from_term(term)?;
    Ok(first_redex(&s).is_none() && congruence_search(&s, cfg.cong_budget).is_none())
}
