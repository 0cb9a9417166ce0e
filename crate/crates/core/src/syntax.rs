//! Objects and morphism terms of the free classical linear category.
//!
//! This module owns the textual DSL (parser and printer) and the
//! typechecker. Types are a free syntax: duality is a constructor and is
//! never simplified by De Morgan laws or double-dual elimination.
//!
//! # Grammar
//!
//! Types: lowercase identifiers are atoms, `1` is the tensor unit, `#` is
//! the par unit (⊥), `A (x) B` is tensor, `A (%) B` is par, `A^` is the
//! dual (postfix, tightest) and `!A` the exponential (prefix, tighter than
//! the infix operators). Infix operators are left-associative; tensor and
//! par share one precedence level and mixing them without parentheses is a
//! syntax error.
//!
//! Terms: `id{A}`, `f ; g` (diagrammatic order), `f (x) g`, `f (%) g`,
//! `!(f)`, and the generators listed in [`Generator`].

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// An object of the free linear category.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum TypeExpr {
    Atom(String),
    One,
    Bot,
    Tensor(Box<TypeExpr>, Box<TypeExpr>),
    Par(Box<TypeExpr>, Box<TypeExpr>),
    Dual(Box<TypeExpr>),
    Bang(Box<TypeExpr>),
}

impl TypeExpr {
    pub fn atom(name: &str) -> Self {
        TypeExpr::Atom(name.to_string())
    }
    pub fn tensor(a: TypeExpr, b: TypeExpr) -> Self {
        TypeExpr::Tensor(Box::new(a), Box::new(b))
    }
    pub fn par(a: TypeExpr, b: TypeExpr) -> Self {
        TypeExpr::Par(Box::new(a), Box::new(b))
    }
    pub fn dual(a: TypeExpr) -> Self {
        TypeExpr::Dual(Box::new(a))
    }
    pub fn bang(a: TypeExpr) -> Self {
        TypeExpr::Bang(Box::new(a))
    }

    /// Is this an atomic type (the only types whose identity wires are
    /// left unexpanded in graphs)?
    pub fn is_atomic(&self) -> bool {
        matches!(self, TypeExpr::Atom(_))
    }

    /// Is this `1` or `⊥`?
    pub fn is_unit(&self) -> bool {
        matches!(self, TypeExpr::One | TypeExpr::Bot)
    }

    /// The atom names occurring in the type, sorted and deduplicated.
    pub fn atoms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_atoms(&self, out: &mut Vec<String>) {
        match self {
            TypeExpr::Atom(a) => out.push(a.clone()),
            TypeExpr::One | TypeExpr::Bot => {}
            TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            TypeExpr::Dual(a) | TypeExpr::Bang(a) => a.collect_atoms(out),
        }
    }

    /// Number of constructors in the type.
    pub fn size(&self) -> usize {
        match self {
            TypeExpr::Atom(_) | TypeExpr::One | TypeExpr::Bot => 1,
            TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => 1 + a.size() + b.size(),
            TypeExpr::Dual(a) | TypeExpr::Bang(a) => 1 + a.size(),
        }
    }

    /// Number of nested `!` along the deepest path.
    pub fn bang_depth(&self) -> usize {
        match self {
            TypeExpr::Atom(_) | TypeExpr::One | TypeExpr::Bot => 0,
            TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => a.bang_depth().max(b.bang_depth()),
            TypeExpr::Dual(a) => a.bang_depth(),
            TypeExpr::Bang(a) => 1 + a.bang_depth(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, ctx: Ctx) -> fmt::Result {
        match self {
            TypeExpr::Atom(a) => write!(f, "{a}"),
            TypeExpr::One => write!(f, "1"),
            TypeExpr::Bot => write!(f, "#"),
            TypeExpr::Dual(a) => {
                a.fmt_prec(f, Ctx::Postfix)?;
                write!(f, "^")
            }
            TypeExpr::Bang(a) => {
                let paren = ctx == Ctx::Postfix;
                if paren {
                    write!(f, "(")?;
                }
                write!(f, "!")?;
                a.fmt_prec(f, Ctx::Prefix)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
            TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => {
                let is_tensor = matches!(self, TypeExpr::Tensor(..));
                let me = if is_tensor { Ctx::InfixLeftOf(true) } else { Ctx::InfixLeftOf(false) };
                let paren = match ctx {
                    Ctx::Top => false,
                    Ctx::InfixLeftOf(t) => t != is_tensor,
                    Ctx::InfixRight | Ctx::Prefix | Ctx::Postfix => true,
                };
                if paren {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, me)?;
                write!(f, "{}", if is_tensor { " (x) " } else { " (%) " })?;
                b.fmt_prec(f, Ctx::InfixRight)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Top,
    /// Left operand of an infix operator; the flag says whether the parent
    /// operator is tensor.
    InfixLeftOf(bool),
    InfixRight,
    Prefix,
    Postfix,
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, Ctx::Top)
    }
}

/// The named generators and structural isomorphisms of the calculus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Generator {
    /// δ_A : !A → !!A
    Delta,
    /// ε_A : !A → A
    Eps,
    /// d_A : !A → !A ⊗ !A
    Dup,
    /// e_A : !A → 1
    Weak,
    /// φ̃_{A,B} : !A ⊗ !B → !(A ⊗ B)
    PhiT,
    /// φ₀ : 1 → !1
    Phi0,
    /// ∂_{A,B,C} : A ⊗ (B ⅋ C) → (A ⊗ B) ⅋ C
    Dist,
    /// ∂′_{A,B,C} : (A ⅋ B) ⊗ C → A ⅋ (B ⊗ C)
    DistP,
    /// τ_A : 1 → A ⅋ A*
    Tau,
    /// γ_A : A* ⊗ A → ⊥
    Gamma,
    /// (A ⊗ B) ⊗ C → A ⊗ (B ⊗ C)
    AssocT,
    /// A ⊗ (B ⊗ C) → (A ⊗ B) ⊗ C
    AssocTInv,
    /// (A ⅋ B) ⅋ C → A ⅋ (B ⅋ C)
    AssocP,
    /// A ⅋ (B ⅋ C) → (A ⅋ B) ⅋ C
    AssocPInv,
    /// A ⊗ B → B ⊗ A
    SymT,
    /// A ⅋ B → B ⅋ A
    SymP,
    /// 1 ⊗ A → A
    LUnitT,
    /// A → 1 ⊗ A
    LUnitTInv,
    /// A ⊗ 1 → A
    RUnitT,
    /// A → A ⊗ 1
    RUnitTInv,
    /// ⊥ ⅋ A → A
    LUnitP,
    /// A → ⊥ ⅋ A
    LUnitPInv,
    /// A ⅋ ⊥ → A
    RUnitP,
    /// A → A ⅋ ⊥
    RUnitPInv,
    /// The middle-four interchange (A ⊗ B) ⊗ (C ⊗ D) → (A ⊗ C) ⊗ (B ⊗ D).
    ShufT,
}

/// Every generator, in declaration order.
pub const ALL_GENERATORS: &[Generator] = &[
    Generator::Delta,
    Generator::Eps,
    Generator::Dup,
    Generator::Weak,
    Generator::PhiT,
    Generator::Phi0,
    Generator::Dist,
    Generator::DistP,
    Generator::Tau,
    Generator::Gamma,
    Generator::AssocT,
    Generator::AssocTInv,
    Generator::AssocP,
    Generator::AssocPInv,
    Generator::SymT,
    Generator::SymP,
    Generator::LUnitT,
    Generator::LUnitTInv,
    Generator::RUnitT,
    Generator::RUnitTInv,
    Generator::LUnitP,
    Generator::LUnitPInv,
    Generator::RUnitP,
    Generator::RUnitPInv,
    Generator::ShufT,
];

impl Generator {
    /// The DSL keyword.
    pub fn name(self) -> &'static str {
        use Generator::*;
        match self {
            Delta => "delta",
            Eps => "eps",
            Dup => "dup",
            Weak => "weak",
            PhiT => "phi",
            Phi0 => "phi0",
            Dist => "dist",
            DistP => "dist'",
            Tau => "tau",
            Gamma => "gamma",
            AssocT => "assocT",
            AssocTInv => "assocT'",
            AssocP => "assocP",
            AssocPInv => "assocP'",
            SymT => "symT",
            SymP => "symP",
            LUnitT => "lunitT",
            LUnitTInv => "lunitT'",
            RUnitT => "runitT",
            RUnitTInv => "runitT'",
            LUnitP => "lunitP",
            LUnitPInv => "lunitP'",
            RUnitP => "runitP",
            RUnitPInv => "runitP'",
            ShufT => "shufT",
        }
    }

    pub fn from_name(s: &str) -> Option<Generator> {
        ALL_GENERATORS.iter().copied().find(|g| g.name() == s)
    }

    /// Number of type arguments.
    pub fn arity(self) -> usize {
        use Generator::*;
        match self {
            Phi0 => 0,
            Delta | Eps | Dup | Weak | Tau | Gamma | LUnitT | LUnitTInv | RUnitT | RUnitTInv
            | LUnitP | LUnitPInv | RUnitP | RUnitPInv => 1,
            PhiT | SymT | SymP => 2,
            Dist | DistP | AssocT | AssocTInv | AssocP | AssocPInv => 3,
            ShufT => 4,
        }
    }

    /// Is this one of the exponential structure maps (δ, ε, d, e, φ̃, φ₀)?
    pub fn is_exponential(self) -> bool {
        use Generator::*;
        matches!(self, Delta | Eps | Dup | Weak | PhiT | Phi0)
    }

    /// Source and target of the generator at the given type arguments.
    /// The caller guarantees `args.len() == self.arity()`.
    pub fn typing(self, args: &[TypeExpr]) -> (TypeExpr, TypeExpr) {
        use Generator::*;
        use TypeExpr as T;
        let a = |i: usize| args[i].clone();
        match self {
            Delta => (T::bang(a(0)), T::bang(T::bang(a(0)))),
            Eps => (T::bang(a(0)), a(0)),
            Dup => (T::bang(a(0)), T::tensor(T::bang(a(0)), T::bang(a(0)))),
            Weak => (T::bang(a(0)), T::One),
            PhiT => (T::tensor(T::bang(a(0)), T::bang(a(1))), T::bang(T::tensor(a(0), a(1)))),
            Phi0 => (T::One, T::bang(T::One)),
            Dist => (
                T::tensor(a(0), T::par(a(1), a(2))),
                T::par(T::tensor(a(0), a(1)), a(2)),
            ),
            DistP => (
                T::tensor(T::par(a(0), a(1)), a(2)),
                T::par(a(0), T::tensor(a(1), a(2))),
            ),
            Tau => (T::One, T::par(a(0), T::dual(a(0)))),
            Gamma => (T::tensor(T::dual(a(0)), a(0)), T::Bot),
            AssocT => (
                T::tensor(T::tensor(a(0), a(1)), a(2)),
                T::tensor(a(0), T::tensor(a(1), a(2))),
            ),
            AssocTInv => (
                T::tensor(a(0), T::tensor(a(1), a(2))),
                T::tensor(T::tensor(a(0), a(1)), a(2)),
            ),
            AssocP => (
                T::par(T::par(a(0), a(1)), a(2)),
                T::par(a(0), T::par(a(1), a(2))),
            ),
            AssocPInv => (
                T::par(a(0), T::par(a(1), a(2))),
                T::par(T::par(a(0), a(1)), a(2)),
            ),
            SymT => (T::tensor(a(0), a(1)), T::tensor(a(1), a(0))),
            SymP => (T::par(a(0), a(1)), T::par(a(1), a(0))),
            LUnitT => (T::tensor(T::One, a(0)), a(0)),
            LUnitTInv => (a(0), T::tensor(T::One, a(0))),
            RUnitT => (T::tensor(a(0), T::One), a(0)),
            RUnitTInv => (a(0), T::tensor(a(0), T::One)),
            LUnitP => (T::par(T::Bot, a(0)), a(0)),
            LUnitPInv => (a(0), T::par(T::Bot, a(0))),
            RUnitP => (T::par(a(0), T::Bot), a(0)),
            RUnitPInv => (a(0), T::par(a(0), T::Bot)),
            ShufT => (
                T::tensor(T::tensor(a(0), a(1)), T::tensor(a(2), a(3))),
                T::tensor(T::tensor(a(0), a(2)), T::tensor(a(1), a(3))),
            ),
        }
    }
}

/// A morphism term.
///
/// `Var` is a term metavariable with a declared boundary; it only occurs in
/// rewrite-rule patterns and is rejected by [`typecheck`] unless the
/// caller opts in through [`typecheck_open`].
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Term {
    Id(TypeExpr),
    Comp(Box<Term>, Box<Term>),
    Tensor(Box<Term>, Box<Term>),
    Par(Box<Term>, Box<Term>),
    Bang(Box<Term>),
    Gen(Generator, Vec<TypeExpr>),
    Var(String, TypeExpr, TypeExpr),
}

impl Term {
    pub fn id(t: TypeExpr) -> Self {
        Term::Id(t)
    }
    pub fn comp(f: Term, g: Term) -> Self {
        Term::Comp(Box::new(f), Box::new(g))
    }
    pub fn tensor(f: Term, g: Term) -> Self {
        Term::Tensor(Box::new(f), Box::new(g))
    }
    pub fn par(f: Term, g: Term) -> Self {
        Term::Par(Box::new(f), Box::new(g))
    }
    pub fn bang(f: Term) -> Self {
        Term::Bang(Box::new(f))
    }
    pub fn gen(g: Generator, args: Vec<TypeExpr>) -> Self {
        assert_eq!(g.arity(), args.len(), "wrong arity for {}", g.name());
        Term::Gen(g, args)
    }
    pub fn delta(a: TypeExpr) -> Self {
        Term::gen(Generator::Delta, vec![a])
    }
    pub fn eps(a: TypeExpr) -> Self {
        Term::gen(Generator::Eps, vec![a])
    }
    pub fn dup(a: TypeExpr) -> Self {
        Term::gen(Generator::Dup, vec![a])
    }
    pub fn weak(a: TypeExpr) -> Self {
        Term::gen(Generator::Weak, vec![a])
    }
    pub fn phi(a: TypeExpr, b: TypeExpr) -> Self {
        Term::gen(Generator::PhiT, vec![a, b])
    }
    pub fn phi0() -> Self {
        Term::gen(Generator::Phi0, vec![])
    }

    /// Composite of a non-empty list of terms, associated to the left.
    pub fn seq(terms: Vec<Term>) -> Self {
        let mut it = terms.into_iter();
        let first = it.next().expect("seq of an empty list");
        it.fold(first, Term::comp)
    }

    /// Number of nodes in the term tree.
    pub fn size(&self) -> usize {
        match self {
            Term::Id(_) | Term::Gen(..) | Term::Var(..) => 1,
            Term::Comp(f, g) | Term::Tensor(f, g) | Term::Par(f, g) => 1 + f.size() + g.size(),
            Term::Bang(f) => 1 + f.size(),
        }
    }

    /// Height of the term tree.
    pub fn depth(&self) -> usize {
        match self {
            Term::Id(_) | Term::Gen(..) | Term::Var(..) => 1,
            Term::Comp(f, g) | Term::Tensor(f, g) | Term::Par(f, g) => 1 + f.depth().max(g.depth()),
            Term::Bang(f) => 1 + f.depth(),
        }
    }

    /// Every atom name occurring in the type annotations of the term.
    pub fn atoms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_atoms(&self, out: &mut Vec<String>) {
        match self {
            Term::Id(t) => out.extend(t.atoms()),
            Term::Gen(_, args) => args.iter().for_each(|t| out.extend(t.atoms())),
            Term::Var(_, s, t) => {
                out.extend(s.atoms());
                out.extend(t.atoms());
            }
            Term::Comp(f, g) | Term::Tensor(f, g) | Term::Par(f, g) => {
                f.collect_atoms(out);
                g.collect_atoms(out);
            }
            Term::Bang(f) => f.collect_atoms(out),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, ctx: TCtx) -> fmt::Result {
        match self {
            Term::Id(t) => write!(f, "id{{{t}}}"),
            Term::Gen(g, args) => {
                write!(f, "{}", g.name())?;
                if !args.is_empty() {
                    write!(f, "{{")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, "}}")?;
                }
                Ok(())
            }
            Term::Var(name, s, t) => write!(f, "?{name}:{s}->{t}"),
            Term::Bang(inner) => {
                write!(f, "!(")?;
                inner.fmt_prec(f, TCtx::Top)?;
                write!(f, ")")
            }
            Term::Comp(a, b) => {
                let paren = !matches!(ctx, TCtx::Top | TCtx::CompLeft);
                if paren {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, TCtx::CompLeft)?;
                write!(f, " ; ")?;
                b.fmt_prec(f, TCtx::CompRight)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Term::Tensor(a, b) | Term::Par(a, b) => {
                let is_tensor = matches!(self, Term::Tensor(..));
                let paren = match ctx {
                    TCtx::Top | TCtx::CompLeft | TCtx::CompRight => false,
                    TCtx::InfixLeftOf(t) => t != is_tensor,
                    TCtx::InfixRight => true,
                };
                if paren {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, TCtx::InfixLeftOf(is_tensor))?;
                write!(f, "{}", if is_tensor { " (x) " } else { " (%) " })?;
                b.fmt_prec(f, TCtx::InfixRight)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TCtx {
    Top,
    CompLeft,
    CompRight,
    InfixLeftOf(bool),
    InfixRight,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, TCtx::Top)
    }
}

/// Deterministic rendering that round-trips through [`parse_term`].
pub fn pretty_print(term: &Term) -> String {
    term.to_string()
}

/// A position inside a term tree: `L`/`R` select the operands of a
/// binary node, `B` enters a `!`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Step {
    L,
    R,
    B,
}

pub fn fmt_steps(steps: &[Step]) -> String {
    if steps.is_empty() {
        return "root".into();
    }
    steps
        .iter()
        .map(|s| match s {
            Step::L => "L",
            Step::R => "R",
            Step::B => "B",
        })
        .collect::<Vec<_>>()
        .join(".")
}

/// A typed term.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Judgement {
    pub term: Term,
    pub source: TypeExpr,
    pub target: TypeExpr,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown atom `{0}` (not in the declared signature)")]
    UnknownAtom(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error(
        "composition mismatch at {}: left target `{left}` differs from right source `{right}`",
        fmt_steps(path)
    )]
    Mismatch { path: Vec<Step>, left: TypeExpr, right: TypeExpr },
    #[error("generator `{name}` expects {expected} type arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("metavariable `?{0}` in a closed term")]
    OpenTerm(String),
}

/// Typecheck a closed term.
pub fn typecheck(term: &Term) -> Result<Judgement, TypeError> {
    let (s, t) = synth(term, &mut Vec::new(), false)?;
    Ok(Judgement { term: term.clone(), source: s, target: t })
}

/// Typecheck a term that may contain metavariables (rule patterns).
pub fn typecheck_open(term: &Term) -> Result<Judgement, TypeError> {
    let (s, t) = synth(term, &mut Vec::new(), true)?;
    Ok(Judgement { term: term.clone(), source: s, target: t })
}

fn synth(term: &Term, path: &mut Vec<Step>, open: bool) -> Result<(TypeExpr, TypeExpr), TypeError> {
    match term {
        Term::Id(t) => Ok((t.clone(), t.clone())),
        Term::Gen(g, args) => {
            if args.len() != g.arity() {
                return Err(TypeError::Arity {
                    name: g.name().into(),
                    expected: g.arity(),
                    got: args.len(),
                });
            }
            Ok(g.typing(args))
        }
        Term::Var(name, s, t) => {
            if open {
                Ok((s.clone(), t.clone()))
            } else {
                Err(TypeError::OpenTerm(name.clone()))
            }
        }
        Term::Comp(f, g) => {
            path.push(Step::L);
            let (a, b) = synth(f, path, open)?;
            path.pop();
            path.push(Step::R);
            let (b2, c) = synth(g, path, open)?;
            path.pop();
            if b != b2 {
                return Err(TypeError::Mismatch { path: path.clone(), left: b, right: b2 });
            }
            Ok((a, c))
        }
        Term::Tensor(f, g) | Term::Par(f, g) => {
            path.push(Step::L);
            let (a, b) = synth(f, path, open)?;
            path.pop();
            path.push(Step::R);
            let (c, d) = synth(g, path, open)?;
            path.pop();
            if matches!(term, Term::Tensor(..)) {
                Ok((TypeExpr::tensor(a, c), TypeExpr::tensor(b, d)))
            } else {
                Ok((TypeExpr::par(a, c), TypeExpr::par(b, d)))
            }
        }
        Term::Bang(f) => {
            path.push(Step::B);
            let (a, b) = synth(f, path, open)?;
            path.pop();
            Ok((TypeExpr::bang(a), TypeExpr::bang(b)))
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    One,
    Hash,
    TensorOp,
    ParOp,
    Caret,
    Bang,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Question,
    Colon,
    Arrow,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        // Line comments: `//` to end of line.
        if c == '/' && i + 1 < bytes.len() && bytes[i + 1] == b'/' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if text[i..].starts_with("(x)") {
            i += 3;
            Tok::TensorOp
        } else if text[i..].starts_with("(%)") {
            i += 3;
            Tok::ParOp
        } else if text[i..].starts_with("->") {
            i += 2;
            Tok::Arrow
        } else {
            match c {
                '1' => {
                    i += 1;
                    Tok::One
                }
                '#' => {
                    i += 1;
                    Tok::Hash
                }
                '^' => {
                    i += 1;
                    Tok::Caret
                }
                '!' => {
                    i += 1;
                    Tok::Bang
                }
                '(' => {
                    i += 1;
                    Tok::LParen
                }
                ')' => {
                    i += 1;
                    Tok::RParen
                }
                '{' => {
                    i += 1;
                    Tok::LBrace
                }
                '}' => {
                    i += 1;
                    Tok::RBrace
                }
                ',' => {
                    i += 1;
                    Tok::Comma
                }
                ';' => {
                    i += 1;
                    Tok::Semi
                }
                '?' => {
                    i += 1;
                    Tok::Question
                }
                ':' => {
                    i += 1;
                    Tok::Colon
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    while i < bytes.len()
                        && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    // A trailing prime belongs to generator names such as `dist'`.
                    if i < bytes.len() && bytes[i] == b'\'' {
                        i += 1;
                    }
                    Tok::Ident(text[start..i].to_string())
                }
                other => {
                    return Err(SyntaxError::Parse {
                        pos: i,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            }
        };
        out.push((start, tok));
    }
    Ok(out)
}

/// Atom-name policy used by the parser.
#[derive(Clone, Debug, Default)]
pub struct Signature {
    /// If set, only these atom names are accepted.
    pub atoms: Option<Vec<String>>,
    /// Accept uppercase identifiers as type variables (rule patterns).
    pub type_vars: bool,
}

impl Signature {
    pub fn open() -> Self {
        Signature::default()
    }
    pub fn declared(atoms: &[&str]) -> Self {
        Signature { atoms: Some(atoms.iter().map(|s| s.to_string()).collect()), type_vars: false }
    }
    pub fn patterns() -> Self {
        Signature { atoms: None, type_vars: true }
    }
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    sig: &'a Signature,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }
    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::Parse { pos: self.here(), msg: msg.into() })
    }
    fn expect(&mut self, t: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ty(&mut self) -> Result<TypeExpr, SyntaxError> {
        let mut lhs = self.ty_prefix()?;
        let mut op: Option<Tok> = None;
        while let Some(t @ (Tok::TensorOp | Tok::ParOp)) = self.peek().cloned() {
            if let Some(prev) = &op {
                if *prev != t {
                    return self.err("tensor and par mixed without parentheses");
                }
            }
            self.pos += 1;
            let rhs = self.ty_prefix()?;
            lhs = if t == Tok::TensorOp { TypeExpr::tensor(lhs, rhs) } else { TypeExpr::par(lhs, rhs) };
            op = Some(t);
        }
        Ok(lhs)
    }

    fn ty_prefix(&mut self) -> Result<TypeExpr, SyntaxError> {
        if self.peek() == Some(&Tok::Bang) {
            self.pos += 1;
            let inner = self.ty_prefix()?;
            return Ok(TypeExpr::bang(inner));
        }
        let mut t = self.ty_atom()?;
        while self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            t = TypeExpr::dual(t);
        }
        Ok(t)
    }

    fn ty_atom(&mut self) -> Result<TypeExpr, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::One) => {
                self.pos += 1;
                Ok(TypeExpr::One)
            }
            Some(Tok::Hash) => {
                self.pos += 1;
                Ok(TypeExpr::Bot)
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let t = self.ty()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Some(Tok::Ident(name)) => {
                let first = name.chars().next().unwrap();
                if first.is_ascii_uppercase() {
                    if !self.sig.type_vars {
                        return self.err(format!("type variable `{name}` outside a pattern"));
                    }
                } else if !first.is_ascii_lowercase() || name.ends_with('\'') {
                    return self.err(format!("invalid atom name `{name}`"));
                } else if Generator::from_name(&name).is_some() || name == "id" {
                    return self.err(format!("keyword `{name}` used as an atom"));
                } else if let Some(atoms) = &self.sig.atoms {
                    if !atoms.contains(&name) {
                        return Err(SyntaxError::UnknownAtom(name));
                    }
                }
                self.pos += 1;
                Ok(TypeExpr::Atom(name))
            }
            _ => self.err("expected a type"),
        }
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        let mut lhs = self.term_infix()?;
        while self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
            let rhs = self.term_infix()?;
            lhs = Term::comp(lhs, rhs);
        }
        Ok(lhs)
    }

    fn term_infix(&mut self) -> Result<Term, SyntaxError> {
        let mut lhs = self.term_atom()?;
        let mut op: Option<Tok> = None;
        while let Some(t @ (Tok::TensorOp | Tok::ParOp)) = self.peek().cloned() {
            if let Some(prev) = &op {
                if *prev != t {
                    return self.err("tensor and par mixed without parentheses");
                }
            }
            self.pos += 1;
            let rhs = self.term_atom()?;
            lhs = if t == Tok::TensorOp { Term::tensor(lhs, rhs) } else { Term::par(lhs, rhs) };
            op = Some(t);
        }
        Ok(lhs)
    }

    fn type_args(&mut self) -> Result<Vec<TypeExpr>, SyntaxError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut args = vec![self.ty()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            args.push(self.ty()?);
        }
        self.expect(Tok::RBrace, "`}`")?;
        Ok(args)
    }

    fn term_atom(&mut self) -> Result<Term, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Some(Tok::Bang) => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return self.err("expected `(` after `!` in a term");
                }
                self.pos += 1;
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Term::bang(t))
            }
            Some(Tok::Question) => {
                if !self.sig.type_vars {
                    return self.err("metavariable outside a pattern");
                }
                self.pos += 1;
                let name = match self.peek().cloned() {
                    Some(Tok::Ident(n)) => n,
                    _ => return self.err("expected a metavariable name"),
                };
                self.pos += 1;
                self.expect(Tok::Colon, "`:`")?;
                let s = self.ty()?;
                self.expect(Tok::Arrow, "`->`")?;
                let t = self.ty_prefix_or_infix_stop()?;
                Ok(Term::Var(name, s, t))
            }
            Some(Tok::Ident(name)) => {
                let start = self.here();
                self.pos += 1;
                if name == "id" {
                    let args = self.type_args()?;
                    if args.len() != 1 {
                        return Err(SyntaxError::Parse { pos: start, msg: "id takes one type".into() });
                    }
                    return Ok(Term::Id(args.into_iter().next().unwrap()));
                }
                let g = match Generator::from_name(&name) {
                    Some(g) => g,
                    None => {
                        return Err(SyntaxError::Parse {
                            pos: start,
                            msg: format!("unknown generator `{name}`"),
                        })
                    }
                };
                let args = if g.arity() == 0 {
                    if self.peek() == Some(&Tok::LBrace) {
                        return self.err(format!("`{name}` takes no type arguments"));
                    }
                    vec![]
                } else {
                    self.type_args()?
                };
                if args.len() != g.arity() {
                    return Err(SyntaxError::Parse {
                        pos: start,
                        msg: format!("`{name}` takes {} type arguments, got {}", g.arity(), args.len()),
                    });
                }
                Ok(Term::Gen(g, args))
            }
            _ => self.err("expected a term"),
        }
    }

    /// The target type of a metavariable annotation stops before infix
    /// operators so that `?f:A->B (x) ?g:C->D` parses as a tensor of two
    /// metavariables. Use parentheses for compound targets.
    fn ty_prefix_or_infix_stop(&mut self) -> Result<TypeExpr, SyntaxError> {
        self.ty_prefix()
    }
}

fn run_parser<T>(
    text: &str,
    sig: &Signature,
    f: impl FnOnce(&mut Parser) -> Result<T, SyntaxError>,
) -> Result<T, SyntaxError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), sig };
    if p.peek().is_none() {
        return p.err("empty input");
    }
    let out = f(&mut p)?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(out)
}

/// Parse a type with any lowercase atom names.
pub fn parse_type(text: &str) -> Result<TypeExpr, SyntaxError> {
    parse_type_with(text, &Signature::open())
}

pub fn parse_type_with(text: &str, sig: &Signature) -> Result<TypeExpr, SyntaxError> {
    run_parser(text, sig, |p| p.ty())
}

/// Parse a closed term with any lowercase atom names.
pub fn parse_term(text: &str) -> Result<Term, SyntaxError> {
    parse_term_with(text, &Signature::open())
}

pub fn parse_term_with(text: &str, sig: &Signature) -> Result<Term, SyntaxError> {
    run_parser(text, sig, |p| p.term())
}

/// Parse a rule pattern (uppercase type variables, `?f:A->B` metavariables).
pub fn parse_pattern(text: &str) -> Result<Term, SyntaxError> {
    parse_term_with(text, &Signature::patterns())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> TypeExpr {
        TypeExpr::atom("a")
    }

    #[test]
    fn parses_types() {
        assert_eq!(
            parse_type("!(a (%) (!a)^)").unwrap(),
            TypeExpr::bang(TypeExpr::par(a(), TypeExpr::dual(TypeExpr::bang(a()))))
        );
        assert_eq!(parse_type("1").unwrap(), TypeExpr::One);
        assert_eq!(parse_type("a (x) 1").unwrap(), TypeExpr::tensor(a(), TypeExpr::One));
        assert_eq!(parse_type("#").unwrap(), TypeExpr::Bot);
        // ^ binds tighter than !
        assert_eq!(parse_type("!a^").unwrap(), TypeExpr::bang(TypeExpr::dual(a())));
        // left associativity
        let b = TypeExpr::atom("b");
        let c = TypeExpr::atom("c");
        assert_eq!(
            parse_type("a (x) b (x) c").unwrap(),
            TypeExpr::tensor(TypeExpr::tensor(a(), b.clone()), c.clone())
        );
        assert!(parse_type("a (x) b (%) c").is_err());
    }

    #[test]
    fn atoms_must_be_declared_when_a_signature_is_given() {
        let sig = Signature::declared(&["a"]);
        assert!(parse_type_with("a (x) a", &sig).is_ok());
        assert_eq!(parse_type_with("b", &sig), Err(SyntaxError::UnknownAtom("b".into())));
    }

    #[test]
    fn generator_typing_table() {
        let t = |s: &str| parse_type(s).unwrap();
        let j = typecheck(&parse_term("dup{a}").unwrap()).unwrap();
        assert_eq!((j.source, j.target), (t("!a"), t("!a (x) !a")));
        let j = typecheck(&parse_term("delta{a} ; eps{!a}").unwrap()).unwrap();
        assert_eq!((j.source, j.target), (t("!a"), t("!a")));
        let cases = [
            ("delta{a}", "!a", "!!a"),
            ("eps{a}", "!a", "a"),
            ("weak{a}", "!a", "1"),
            ("phi{a,b}", "!a (x) !b", "!(a (x) b)"),
            ("phi0", "1", "!1"),
            ("dist{a,b,c}", "a (x) (b (%) c)", "(a (x) b) (%) c"),
            ("dist'{a,b,c}", "(a (%) b) (x) c", "a (%) (b (x) c)"),
            ("tau{a}", "1", "a (%) a^"),
            ("gamma{a}", "a^ (x) a", "#"),
            ("lunitT{a}", "1 (x) a", "a"),
            ("runitP'{a}", "a", "a (%) #"),
            ("shufT{a,b,c,d}", "(a (x) b) (x) (c (x) d)", "(a (x) c) (x) (b (x) d)"),
        ];
        for (term, s, tt) in cases {
            let j = typecheck(&parse_term(term).unwrap()).unwrap();
            assert_eq!((j.source, j.target), (t(s), t(tt)), "{term}");
        }
    }

    #[test]
    fn composition_mismatch_is_located() {
        let err = typecheck(&parse_term("eps{a} ; delta{a}").unwrap()).unwrap_err();
        match err {
            TypeError::Mismatch { path, left, right } => {
                assert!(path.is_empty());
                assert_eq!(left, a());
                assert_eq!(right, TypeExpr::bang(a()));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = typecheck(&parse_term("!(eps{a} ; delta{a})").unwrap()).unwrap_err();
        assert!(matches!(err, TypeError::Mismatch { ref path, .. } if path == &vec![Step::B]));
    }

    #[test]
    fn printing_examples() {
        assert_eq!(pretty_print(&Term::id(TypeExpr::One)), "id{1}");
        assert_eq!(
            pretty_print(&Term::comp(Term::delta(a()), Term::bang(Term::eps(a())))),
            "delta{a} ; !(eps{a})"
        );
        assert_eq!(pretty_print(&Term::phi(a(), TypeExpr::atom("b"))), "phi{a,b}");
    }

    #[test]
    fn round_trip_of_tricky_terms() {
        for s in [
            "(dup{a} (x) id{!b}) ; (id{!a} (x) phi{a,b})",
            "(id{a} (%) id{b}) (x) id{c}",
            "id{a} (x) (id{b} (x) id{c})",
            "id{(!a)^}",
            "id{!(a^)}",
            "id{(a (x) b)^ (%) !(c (%) d)}",
            "(delta{a} ; eps{!a}) (x) weak{b}",
        ] {
            let t = parse_term(s).unwrap();
            assert_eq!(parse_term(&pretty_print(&t)).unwrap(), t, "{s}");
        }
    }

    #[test]
    fn patterns_parse_metavariables() {
        let p = parse_pattern("!(?f:A->B) ; eps{B}").unwrap();
        let j = typecheck_open(&p).unwrap();
        assert_eq!(j.source, parse_type_with("!A", &Signature::patterns()).unwrap());
        assert!(typecheck(&p).is_err());
        assert!(parse_term("?f:a->a").is_err());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_term(""), Err(SyntaxError::Parse { .. })));
        assert!(matches!(parse_term("   // only a comment"), Err(SyntaxError::Parse { .. })));
    }
}
