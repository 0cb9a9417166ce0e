//! The relational model of linear normal functors, as exact sparse
//! coefficient matrices over finite (truncated) index sets.
//!
//! Objects are interpreted as sets: atoms by declared label sets, both
//! units by `{∗}`, tensor and par by the cartesian product, the dual by the
//! same set, and `!A` by the finite multisets over `[[A]]` (truncated to
//! cardinality at most `D`). A morphism `f: A → B` is the matrix
//! `M[a;b]` with `y[b] = Σ_a M[a;b] x[a]`.
//!
//! Matrices are evaluated column by column: for a target index `b`, the
//! column is the finite vector `a ↦ M[a;b]`. Every generator has a finite
//! column except the contradiction `γ`, whose single column ranges over all
//! of `[[A]]`; there the truncation cap is what keeps it finite, and
//! [`interpret_term`] re-evaluates at `D + 1` to detect instability.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use crate::syntax::{Generator, Judgement, Term, TypeExpr};

/// A finite multiset with big-integer multiplicities.
pub type MSet = BTreeMap<Element, BigUint>;

/// A member of an interpreted object.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Element {
    Atom(String),
    Star,
    Pair(Box<Element>, Box<Element>),
    MSet(MSet),
    /// Sign bookkeeping: `bar(e)` denotes the same member as `e`.
    Bar(Box<Element>),
}

impl Element {
    pub fn atom(s: &str) -> Self {
        Element::Atom(s.to_string())
    }
    pub fn pair(a: Element, b: Element) -> Self {
        Element::Pair(Box::new(a), Box::new(b))
    }
    pub fn bar(a: Element) -> Self {
        Element::Bar(Box::new(a))
    }
    pub fn empty() -> Self {
        Element::MSet(MSet::new())
    }
    /// Multiset containing each listed element once per occurrence.
    pub fn mset(items: Vec<Element>) -> Self {
        let mut m = MSet::new();
        for e in items {
            *m.entry(e).or_insert_with(BigUint::zero) += 1u32;
        }
        Element::MSet(m)
    }
    pub fn singleton(e: Element) -> Self {
        Element::mset(vec![e])
    }

    /// The same member with every bar removed.
    pub fn unbarred(&self) -> Element {
        match self {
            Element::Atom(_) | Element::Star => self.clone(),
            Element::Pair(a, b) => Element::pair(a.unbarred(), b.unbarred()),
            Element::MSet(m) => {
                let mut out = MSet::new();
                for (e, n) in m {
                    *out.entry(e.unbarred()).or_insert_with(BigUint::zero) += n;
                }
                Element::MSet(out)
            }
            Element::Bar(a) => a.unbarred(),
        }
    }

    /// Semantic equality (bars ignored).
    pub fn same_member(&self, other: &Element) -> bool {
        self.unbarred() == other.unbarred()
    }

    pub fn as_mset(&self) -> Option<&MSet> {
        match self {
            Element::MSet(m) => Some(m),
            Element::Bar(a) => a.as_mset(),
            _ => None,
        }
    }

    /// Cardinality of a multiset element.
    pub fn cardinality(&self) -> Option<BigUint> {
        self.as_mset().map(|m| m.values().fold(BigUint::zero(), |acc, n| acc + n))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Atom(a) => write!(f, "{a}"),
            Element::Star => write!(f, "*"),
            Element::Pair(a, b) => write!(f, "({a},{b})"),
            Element::Bar(a) => write!(f, "bar({a})"),
            Element::MSet(m) => {
                write!(f, "{{")?;
                for (i, (e, n)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    if n.is_one() {
                        write!(f, "{e}")?;
                    } else {
                        write!(f, "{e}:{n}")?;
                    }
                }
                write!(f, "}}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("atom `{0}` has no declared interpretation")]
    UndeclaredAtom(String),
    #[error("element `{element}` is not a member of `{ty}`")]
    NotAMember { element: String, ty: String },
    #[error("element `{element}` lies outside the truncation cap {cap}")]
    OutsideTruncation { element: String, cap: usize },
    #[error("coefficients changed when the truncation cap was raised from {cap} to {}", cap + 1)]
    TruncationInstability { cap: usize },
    #[error("metavariable in a closed evaluation")]
    OpenTerm,
    #[error("element syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("the index set of `{ty}` has {size} elements, more than the limit {limit}")]
    IndexSetTooLarge { ty: String, size: BigUint, limit: usize },
}

/// Interpretation of the atoms plus the multiset truncation cap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interp {
    pub atom_sets: BTreeMap<String, Vec<String>>,
    pub degree_cap: usize,
}

impl Interp {
    pub fn new(atom_sets: BTreeMap<String, Vec<String>>, degree_cap: usize) -> Self {
        Interp { atom_sets, degree_cap }
    }

    /// Every listed atom gets `size` labels `<atom>0, <atom>1, …`.
    pub fn uniform(atoms: &[&str], size: usize, degree_cap: usize) -> Self {
        let atom_sets = atoms
            .iter()
            .map(|a| (a.to_string(), (0..size).map(|i| format!("{a}{i}")).collect()))
            .collect();
        Interp { atom_sets, degree_cap }
    }

    /// Interpretation covering every atom of the given names.
    pub fn for_atoms(atoms: &[String], size: usize, degree_cap: usize) -> Self {
        let refs: Vec<&str> = atoms.iter().map(|s| s.as_str()).collect();
        Interp::uniform(&refs, size, degree_cap)
    }

    pub fn with_cap(&self, degree_cap: usize) -> Self {
        Interp { atom_sets: self.atom_sets.clone(), degree_cap }
    }
}

/// All multisets of cardinality at most `cap` over `base`.
pub fn multisets_upto(base: &[Element], cap: usize) -> Vec<Element> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    fn rec(base: &[Element], cap: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Element>) {
        out.push(Element::mset(cur.iter().map(|&i| base[i].clone()).collect()));
        if cur.len() == cap {
            return;
        }
        for i in start..base.len() {
            cur.push(i);
            rec(base, cap, i, cur, out);
            cur.pop();
        }
    }
    rec(base, cap, 0, &mut current, &mut out);
    out.sort();
    out
}

/// Largest index set [`interpret_type`] will enumerate.
pub const MAX_INDEX_SET: usize = 1 << 20;

/// The number of elements of the (truncated) index set of a type, without
/// enumerating it: multisets of at most `c` elements over `n` number
/// `C(n + c, c)`.
pub fn type_cardinality(t: &TypeExpr, interp: &Interp) -> Result<BigUint, SemanticsError> {
    Ok(match t {
        TypeExpr::Atom(a) => {
            BigUint::from(interp.atom_sets.get(a).ok_or_else(|| SemanticsError::UndeclaredAtom(a.clone()))?.len())
        }
        TypeExpr::One | TypeExpr::Bot => BigUint::one(),
        TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => type_cardinality(a, interp)? * type_cardinality(b, interp)?,
        TypeExpr::Dual(a) => type_cardinality(a, interp)?,
        TypeExpr::Bang(a) => {
            let cap = BigUint::from(interp.degree_cap);
            num_integer::binomial(type_cardinality(a, interp)? + &cap, cap)
        }
    })
}

/// The (truncated) index set of a type. Refuses sets larger than
/// [`MAX_INDEX_SET`].
pub fn interpret_type(t: &TypeExpr, interp: &Interp) -> Result<Vec<Element>, SemanticsError> {
    let size = type_cardinality(t, interp)?;
    if size > BigUint::from(MAX_INDEX_SET) {
        return Err(SemanticsError::IndexSetTooLarge { ty: t.to_string(), size, limit: MAX_INDEX_SET });
    }
    enumerate_type(t, interp)
}

fn enumerate_type(t: &TypeExpr, interp: &Interp) -> Result<Vec<Element>, SemanticsError> {
    Ok(match t {
        TypeExpr::Atom(a) => interp
            .atom_sets
            .get(a)
            .ok_or_else(|| SemanticsError::UndeclaredAtom(a.clone()))?
            .iter()
            .map(|l| Element::Atom(l.clone()))
            .collect(),
        TypeExpr::One | TypeExpr::Bot => vec![Element::Star],
        TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => {
            let xs = enumerate_type(a, interp)?;
            let ys = enumerate_type(b, interp)?;
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for x in &xs {
                for y in &ys {
                    out.push(Element::pair(x.clone(), y.clone()));
                }
            }
            out
        }
        TypeExpr::Dual(a) => enumerate_type(a, interp)?,
        TypeExpr::Bang(a) => multisets_upto(&enumerate_type(a, interp)?, interp.degree_cap),
    })
}

/// Check that `e` (bars ignored) is a member of `[[t]]` within the cap.
pub fn check_member(e: &Element, t: &TypeExpr, interp: &Interp) -> Result<(), SemanticsError> {
    let fail = || SemanticsError::NotAMember { element: e.to_string(), ty: t.to_string() };
    match (e, t) {
        (Element::Bar(x), _) => check_member(x, t, interp),
        (_, TypeExpr::Dual(a)) => check_member(e, a, interp),
        (Element::Atom(l), TypeExpr::Atom(a)) => {
            let set = interp.atom_sets.get(a).ok_or_else(|| SemanticsError::UndeclaredAtom(a.clone()))?;
            if set.contains(l) {
                Ok(())
            } else {
                Err(fail())
            }
        }
        (Element::Star, TypeExpr::One | TypeExpr::Bot) => Ok(()),
        (Element::Pair(x, y), TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b)) => {
            check_member(x, a, interp)?;
            check_member(y, b, interp)
        }
        (Element::MSet(m), TypeExpr::Bang(a)) => {
            let card = m.values().fold(BigUint::zero(), |acc, n| acc + n);
            if card > BigUint::from(interp.degree_cap) {
                return Err(SemanticsError::OutsideTruncation { element: e.to_string(), cap: interp.degree_cap });
            }
            m.keys().try_for_each(|x| check_member(x, a, interp))
        }
        _ => Err(fail()),
    }
}

// ---------------------------------------------------------------------------
// Semirings and generic exp construction
// ---------------------------------------------------------------------------

/// Commutative semiring of matrix entries.
pub trait Semiring: Clone + PartialEq + fmt::Debug {
    fn nil() -> Self;
    fn unit() -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn is_nil(&self) -> bool;
    fn from_count(n: &BigUint) -> Self;
}

impl Semiring for BigUint {
    fn nil() -> Self {
        Zero::zero()
    }
    fn unit() -> Self {
        One::one()
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_count(n: &BigUint) -> Self {
        n.clone()
    }
}

/// A polynomial with natural coefficients in named commuting variables;
/// used to reproduce the exp construction on a symbolic matrix.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Poly(pub BTreeMap<BTreeMap<String, u32>, BigUint>);

impl Poly {
    pub fn var(name: &str) -> Self {
        let mut mono = BTreeMap::new();
        mono.insert(name.to_string(), 1);
        let mut m = BTreeMap::new();
        m.insert(mono, BigUint::one());
        Poly(m)
    }
}

impl fmt::Display for Poly {
    /// Monomials in lexicographic order of their variables, e.g. `ad+bc`,
    /// `2ab`, `a^2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let mut terms: Vec<String> = Vec::new();
        for (mono, c) in &self.0 {
            let mut s = String::new();
            if !c.is_one() || mono.is_empty() {
                s.push_str(&c.to_string());
            }
            for (v, e) in mono {
                s.push_str(v);
                if *e > 1 {
                    s.push_str(&format!("^{e}"));
                }
            }
            terms.push(s);
        }
        write!(f, "{}", terms.join("+"))
    }
}

impl Semiring for Poly {
    fn nil() -> Self {
        Poly::default()
    }
    fn unit() -> Self {
        let mut m = BTreeMap::new();
        m.insert(BTreeMap::new(), BigUint::one());
        Poly(m)
    }
    fn plus(&self, other: &Self) -> Self {
        let mut out = self.0.clone();
        for (k, v) in &other.0 {
            *out.entry(k.clone()).or_insert_with(BigUint::zero) += v;
        }
        Poly(out)
    }
    fn times(&self, other: &Self) -> Self {
        let mut out: BTreeMap<BTreeMap<String, u32>, BigUint> = BTreeMap::new();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                let mut m = m1.clone();
                for (v, e) in m2 {
                    *m.entry(v.clone()).or_insert(0) += e;
                }
                *out.entry(m).or_insert_with(BigUint::zero) += c1 * c2;
            }
        }
        Poly(out)
    }
    fn is_nil(&self) -> bool {
        self.0.values().all(Zero::is_zero)
    }
    fn from_count(n: &BigUint) -> Self {
        if Zero::is_zero(n) {
            return Poly::nil();
        }
        let mut m = BTreeMap::new();
        m.insert(BTreeMap::new(), n.clone());
        Poly(m)
    }
}

/// A vector over source indices: one column of a coefficient matrix.
pub type Column<S> = BTreeMap<Element, S>;

/// Product of two columns viewed as polynomials whose monomials are
/// multisets (the source indices of a `!` object).
fn mono_mul<S: Semiring>(p: &Column<S>, q: &Column<S>) -> Column<S> {
    let mut out: Column<S> = BTreeMap::new();
    for (m1, c1) in p {
        for (m2, c2) in q {
            let (a, b) = (m1.as_mset().expect("monomial"), m2.as_mset().expect("monomial"));
            let mut m = a.clone();
            for (e, n) in b {
                *m.entry(e.clone()).or_insert_with(BigUint::zero) += n;
            }
            let key = Element::MSet(m);
            let v = c1.times(c2);
            match out.get_mut(&key) {
                Some(x) => *x = x.plus(&v),
                None => {
                    out.insert(key, v);
                }
            }
        }
    }
    out.retain(|_, v| !v.is_nil());
    out
}

/// Column of `!f` at the multiset `beta`, given a column oracle for `f`:
/// the coefficients of `Π_{b ∈ β} (Σ_a M[a,b] x_a)` as a polynomial in
/// the variables `x_a`, i.e. a vector indexed by multisets `α`.
pub fn exp_column<S: Semiring, E>(
    beta: &MSet,
    mut col: impl FnMut(&Element) -> Result<Column<S>, E>,
) -> Result<Column<S>, E> {
    let mut acc: Column<S> = BTreeMap::new();
    acc.insert(Element::empty(), S::unit());
    for (b, n) in beta {
        let c = col(b)?;
        let lin: Column<S> =
            c.into_iter().map(|(a, v)| (Element::singleton(a), v)).collect();
        let mut k = n.clone();
        while !Zero::is_zero(&k) {
            acc = mono_mul(&acc, &lin);
            k -= 1u32;
            if acc.is_empty() {
                return Ok(acc);
            }
        }
    }
    Ok(acc)
}

/// A coefficient matrix with explicit row (source) and column (target)
/// index sets. Absent entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    pub sources: Vec<Element>,
    pub targets: Vec<Element>,
    pub entries: BTreeMap<(Element, Element), S>,
}

/// The coefficient matrix of a morphism.
pub type CoeffMatrix = Matrix<BigUint>;

impl<S: Semiring> Matrix<S> {
    pub fn get(&self, a: &Element, b: &Element) -> S {
        self.entries.get(&(a.clone(), b.clone())).cloned().unwrap_or_else(S::nil)
    }
    fn column(&self, b: &Element) -> Column<S> {
        self.entries
            .iter()
            .filter(|((_, bb), v)| bb == b && !v.is_nil())
            .map(|((a, _), v)| (a.clone(), v.clone()))
            .collect()
    }
}

impl<S: Semiring + fmt::Display> Matrix<S> {
    /// Text dump, one nonzero entry per line: `<α> ; <β> ; <count>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for ((a, b), v) in &self.entries {
            if !v.is_nil() {
                out.push_str(&format!("{a} ; {b} ; {v}\n"));
            }
        }
        out
    }
}

/// The exp construction: the matrix of `!f` on multisets of cardinality at
/// most `cap`, entry `(α, β)` being the coefficient of `x^α` in
/// `Π_{b ∈ β} (Σ_a M[a,b] x_a)`.
pub fn exp_matrix<S: Semiring>(m: &Matrix<S>, cap: usize) -> Matrix<S> {
    let sources = multisets_upto(&m.sources, cap);
    let targets = multisets_upto(&m.targets, cap);
    let mut entries = BTreeMap::new();
    for beta in &targets {
        let col: Column<S> =
            exp_column::<S, ()>(beta.as_mset().unwrap(), |b| Ok(m.column(b))).unwrap();
        for (alpha, v) in col {
            if !v.is_nil() {
                entries.insert((alpha, beta.clone()), v);
            }
        }
    }
    Matrix { sources, targets, entries }
}

// ---------------------------------------------------------------------------
// Term evaluation
// ---------------------------------------------------------------------------

fn unit_col(a: Element) -> Column<BigUint> {
    let mut c = BTreeMap::new();
    c.insert(a, BigUint::one());
    c
}

fn split_pair(e: &Element) -> Option<(&Element, &Element)> {
    match e {
        Element::Pair(a, b) => Some((a, b)),
        Element::Bar(a) => split_pair(a),
        _ => None,
    }
}

fn add_into(out: &mut Column<BigUint>, key: Element, v: BigUint) {
    if v.is_zero() {
        return;
    }
    *out.entry(key).or_insert_with(BigUint::zero) += v;
}

/// Column of a generator at target index `b` (bars already stripped).
/// `None` means `b` is not shaped like a member of the generator's target;
/// callers only pass well-shaped indices.
fn gen_column(
    g: Generator,
    args: &[TypeExpr],
    b: &Element,
    interp: &Interp,
) -> Result<Column<BigUint>, SemanticsError> {
    use Generator::*;
    let shape = || SemanticsError::NotAMember {
        element: b.to_string(),
        ty: g.typing(args).1.to_string(),
    };
    let pair = |e: &Element| split_pair(e).map(|(x, y)| (x.clone(), y.clone())).ok_or_else(shape);
    let mset = |e: &Element| e.as_mset().cloned().ok_or_else(shape);
    Ok(match g {
        Delta => {
            // source = multiset union of the members of b
            let outer = mset(b)?;
            let mut union = MSet::new();
            for (inner, n) in &outer {
                let inner = inner.as_mset().ok_or_else(shape)?;
                for (e, k) in inner {
                    *union.entry(e.clone()).or_insert_with(BigUint::zero) += n * k;
                }
            }
            unit_col(Element::MSet(union))
        }
        Eps => unit_col(Element::singleton(b.clone())),
        Dup => {
            let (x, y) = pair(b)?;
            let (mut m, n) = (mset(&x)?, mset(&y)?);
            for (e, k) in n {
                *m.entry(e).or_insert_with(BigUint::zero) += k;
            }
            unit_col(Element::MSet(m))
        }
        Weak => unit_col(Element::empty()),
        PhiT => {
            // unzip a multiset of pairs
            let m = mset(b)?;
            let (mut l, mut r) = (MSet::new(), MSet::new());
            for (e, k) in m {
                let (x, y) = pair(&e)?;
                *l.entry(x).or_insert_with(BigUint::zero) += &k;
                *r.entry(y).or_insert_with(BigUint::zero) += &k;
            }
            unit_col(Element::pair(Element::MSet(l), Element::MSet(r)))
        }
        Phi0 => unit_col(Element::Star),
        Tau => {
            let (x, y) = pair(b)?;
            if x == y {
                unit_col(Element::Star)
            } else {
                BTreeMap::new()
            }
        }
        Gamma => {
            let mut c = BTreeMap::new();
            for a in interpret_type(&args[0], interp)? {
                c.insert(Element::pair(a.clone(), a), BigUint::one());
            }
            c
        }
        Dist => {
            // A ⊗ (B ⅋ C) → (A ⊗ B) ⅋ C, column at ((a,b),c) is (a,(b,c))
            let (ab, c) = pair(b)?;
            let (a, bb) = pair(&ab)?;
            unit_col(Element::pair(a, Element::pair(bb, c)))
        }
        DistP => {
            // (A ⅋ B) ⊗ C → A ⅋ (B ⊗ C), column at (a,(b,c)) is ((a,b),c)
            let (a, bc) = pair(b)?;
            let (bb, c) = pair(&bc)?;
            unit_col(Element::pair(Element::pair(a, bb), c))
        }
        AssocT | AssocP => {
            let (a, bc) = pair(b)?;
            let (bb, c) = pair(&bc)?;
            unit_col(Element::pair(Element::pair(a, bb), c))
        }
        AssocTInv | AssocPInv => {
            let (ab, c) = pair(b)?;
            let (a, bb) = pair(&ab)?;
            unit_col(Element::pair(a, Element::pair(bb, c)))
        }
        SymT | SymP => {
            let (x, y) = pair(b)?;
            unit_col(Element::pair(y, x))
        }
        LUnitT | LUnitP => unit_col(Element::pair(Element::Star, b.clone())),
        RUnitT | RUnitP => unit_col(Element::pair(b.clone(), Element::Star)),
        LUnitTInv | LUnitPInv => {
            let (_, y) = pair(b)?;
            unit_col(y)
        }
        RUnitTInv | RUnitPInv => {
            let (x, _) = pair(b)?;
            unit_col(x)
        }
        ShufT => {
            let (ac, bd) = pair(b)?;
            let (a, c) = pair(&ac)?;
            let (bb, d) = pair(&bd)?;
            unit_col(Element::pair(Element::pair(a, bb), Element::pair(c, d)))
        }
    })
}

/// Column `a ↦ M_f[a; b]` of a closed term at target index `b`.
pub fn term_column(term: &Term, b: &Element, interp: &Interp) -> Result<Column<BigUint>, SemanticsError> {
    let b = b.unbarred();
    column_rec(term, &b, interp)
}

fn column_rec(term: &Term, b: &Element, interp: &Interp) -> Result<Column<BigUint>, SemanticsError> {
    match term {
        Term::Id(_) => Ok(unit_col(b.clone())),
        Term::Gen(g, args) => gen_column(*g, args, b, interp),
        Term::Var(..) => Err(SemanticsError::OpenTerm),
        Term::Comp(f, g) => {
            let cg = column_rec(g, b, interp)?;
            let mut out = BTreeMap::new();
            for (mid, v) in cg {
                for (a, w) in column_rec(f, &mid, interp)? {
                    add_into(&mut out, a, &v * w);
                }
            }
            Ok(out)
        }
        Term::Tensor(f, g) | Term::Par(f, g) => {
            let (x, y) = split_pair(b).ok_or_else(|| SemanticsError::NotAMember {
                element: b.to_string(),
                ty: "a tensor or par".into(),
            })?;
            let cf = column_rec(f, x, interp)?;
            if cf.is_empty() {
                return Ok(cf);
            }
            let cg = column_rec(g, y, interp)?;
            let mut out = BTreeMap::new();
            for (a1, v1) in &cf {
                for (a2, v2) in &cg {
                    add_into(&mut out, Element::pair(a1.clone(), a2.clone()), v1 * v2);
                }
            }
            Ok(out)
        }
        Term::Bang(f) => {
            let beta = b.as_mset().ok_or_else(|| SemanticsError::NotAMember {
                element: b.to_string(),
                ty: "a ! type".into(),
            })?;
            exp_column(beta, |bb| column_rec(f, bb, interp))
        }
    }
}

fn matrix_at(j: &Judgement, interp: &Interp) -> Result<CoeffMatrix, SemanticsError> {
    let sources = interpret_type(&j.source, interp)?;
    let targets = interpret_type(&j.target, interp)?;
    let mut entries = BTreeMap::new();
    for b in &targets {
        for (a, v) in term_column(&j.term, b, interp)? {
            if !v.is_zero() {
                entries.insert((a, b.clone()), v);
            }
        }
    }
    Ok(Matrix { sources, targets, entries })
}

/// The coefficient matrix of a typed closed term on the truncated index
/// sets. Entries in rows beyond truncation (larger source multisets) are
/// kept, since whole columns are exact. The result is re-evaluated at cap
/// `D + 1`; any change on the cap-`D` columns is reported as instability.
pub fn interpret_term(j: &Judgement, interp: &Interp) -> Result<CoeffMatrix, SemanticsError> {
    let m = matrix_at(j, interp)?;
    let up = interp.with_cap(interp.degree_cap + 1);
    for b in &m.targets {
        let hi = term_column(&j.term, b, &up)?;
        let lo: Column<BigUint> = m.column(b);
        if hi != lo {
            return Err(SemanticsError::TruncationInstability { cap: interp.degree_cap });
        }
    }
    Ok(m)
}

/// A single coefficient `M_f[α; β]`, with membership and truncation checks
/// on both indices and the stability check on the column of `β`.
pub fn coeff(j: &Judgement, alpha: &Element, beta: &Element, interp: &Interp) -> Result<BigUint, SemanticsError> {
    check_member(alpha, &j.source, interp)?;
    check_member(beta, &j.target, interp)?;
    let col = term_column(&j.term, beta, interp)?;
    let hi = term_column(&j.term, beta, &interp.with_cap(interp.degree_cap + 1))?;
    if col != hi {
        return Err(SemanticsError::TruncationInstability { cap: interp.degree_cap });
    }
    Ok(col.get(&alpha.unbarred()).cloned().unwrap_or_else(BigUint::zero))
}

// ---------------------------------------------------------------------------
// Element syntax
// ---------------------------------------------------------------------------

struct ElemParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> ElemParser<'a> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }
    fn err<T>(&self, msg: &str) -> Result<T, SemanticsError> {
        Err(SemanticsError::Parse { pos: self.pos, msg: msg.into() })
    }
    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.pos < self.s.len() && self.s[self.pos] == c {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn ident(&mut self) -> Option<String> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len()
            && ((self.s[self.pos] as char).is_ascii_alphanumeric() || self.s[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos > start {
            Some(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
        } else {
            None
        }
    }
    fn elem(&mut self) -> Result<Element, SemanticsError> {
        self.ws();
        if self.eat(b'*') {
            return Ok(Element::Star);
        }
        if self.eat(b'(') {
            let a = self.elem()?;
            if !self.eat(b',') {
                return self.err("expected `,`");
            }
            let b = self.elem()?;
            if !self.eat(b')') {
                return self.err("expected `)`");
            }
            return Ok(Element::pair(a, b));
        }
        if self.eat(b'{') {
            let mut m = MSet::new();
            if self.eat(b'}') {
                return Ok(Element::MSet(m));
            }
            loop {
                let e = self.elem()?;
                let n = if self.eat(b':') {
                    match self.ident().and_then(|d| d.parse::<BigUint>().ok()) {
                        Some(n) if !Zero::is_zero(&n) => n,
                        _ => return self.err("expected a positive multiplicity"),
                    }
                } else {
                    BigUint::one()
                };
                *m.entry(e).or_insert_with(BigUint::zero) += n;
                if self.eat(b'}') {
                    return Ok(Element::MSet(m));
                }
                if !self.eat(b',') {
                    return self.err("expected `,` or `}`");
                }
            }
        }
        match self.ident() {
            Some(id) if id == "bar" => {
                if !self.eat(b'(') {
                    return self.err("expected `(` after bar");
                }
                let e = self.elem()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(Element::bar(e))
            }
            Some(id) => Ok(Element::Atom(id)),
            None => self.err("expected an element"),
        }
    }
}

/// Parse the element syntax `a | * | (e,e) | {e:n, ...} | bar(e)`.
pub fn parse_element(text: &str) -> Result<Element, SemanticsError> {
    let mut p = ElemParser { s: text.as_bytes(), pos: 0 };
    let e = p.elem()?;
    p.ws();
    if p.pos != p.s.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_term, parse_type, typecheck};

    fn xy() -> Interp {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec!["x".to_string(), "y".to_string()]);
        Interp::new(m, 2)
    }

    fn judge(s: &str) -> Judgement {
        typecheck(&parse_term(s).unwrap()).unwrap()
    }

    fn el(s: &str) -> Element {
        parse_element(s).unwrap()
    }

    #[test]
    fn index_sets() {
        let i = xy();
        assert_eq!(interpret_type(&TypeExpr::One, &i).unwrap(), vec![Element::Star]);
        assert_eq!(
            interpret_type(&parse_type("a^").unwrap(), &i).unwrap(),
            interpret_type(&parse_type("a").unwrap(), &i).unwrap()
        );
        assert_eq!(interpret_type(&parse_type("!a").unwrap(), &i).unwrap().len(), 6);
    }

    #[test]
    fn index_set_sizes_are_counted_without_enumeration() {
        let i = xy();
        for t in ["a", "1", "a (x) a^", "!a", "!(a (x) a)", "!!a", "!(a (%) !a)"] {
            let ty = parse_type(t).unwrap();
            let n = interpret_type(&ty, &i).unwrap().len();
            assert_eq!(type_cardinality(&ty, &i).unwrap(), BigUint::from(n), "{t}");
        }
        let huge = parse_type("!!!(a (x) a (x) (a (x) a))").unwrap();
        assert!(matches!(interpret_type(&huge, &i), Err(SemanticsError::IndexSetTooLarge { .. })));
    }

    #[test]
    fn element_syntax_round_trips() {
        for s in ["x", "*", "(x,{})", "{x:3, y}", "bar({(x,*)})", "{{x}, {}:2}"] {
            let e = el(s);
            assert_eq!(parse_element(&e.to_string()).unwrap(), e, "{s}");
        }
        assert!(parse_element("{x:0}").is_err());
    }

    #[test]
    fn small_coefficients() {
        let i = xy();
        let weak = judge("weak{a}");
        assert_eq!(coeff(&weak, &el("{}"), &el("*"), &i).unwrap(), BigUint::one());
        let dup = judge("dup{a}");
        assert_eq!(coeff(&dup, &el("{x,y}"), &el("({x},{y})"), &i).unwrap(), BigUint::one());
        assert_eq!(coeff(&dup, &el("{x:2}"), &el("({x},{x})"), &i).unwrap(), BigUint::one());
        assert!(coeff(&dup, &el("{x:3}"), &el("({x},{x})"), &i).is_err());
    }

    #[test]
    fn tau_has_one_entry_per_label() {
        let m = interpret_term(&judge("tau{a}"), &xy()).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert!(m.entries.values().all(|v| v.is_one()));
    }

    #[test]
    fn comonad_counit_law_holds() {
        let i = xy();
        let lhs = interpret_term(&judge("delta{a} ; eps{!a}"), &i).unwrap();
        let rhs = interpret_term(&judge("id{!a}"), &i).unwrap();
        assert_eq!(lhs.entries, rhs.entries);
    }

    #[test]
    fn exp_of_identity_is_identity() {
        let base = vec![el("x"), el("y")];
        let mut entries = BTreeMap::new();
        for e in &base {
            entries.insert((e.clone(), e.clone()), BigUint::one());
        }
        let id = Matrix { sources: base.clone(), targets: base, entries };
        let e = exp_matrix(&id, 3);
        for ((a, b), v) in &e.entries {
            assert_eq!(a, b);
            assert!(v.is_one());
        }
        assert_eq!(e.entries.len(), e.targets.len());
    }

    #[test]
    fn bars_are_ignored_by_evaluation() {
        let i = xy();
        let dup = judge("dup{a}");
        assert_eq!(
            coeff(&dup, &el("bar({x,y})"), &el("({bar(x)},bar({y}))"), &i).unwrap(),
            BigUint::one()
        );
    }

    #[test]
    fn gamma_over_a_bang_type_is_truncation_stable_when_capped_by_context() {
        // `(id ⊗ τ) ; ∂ ; (γ ⅋ id) ; lunitP` on A = !a: each column only
        // needs the γ summand equal to the queried index.
        let j = judge("(id{(!a)^} (x) tau{!a}) ; dist{(!a)^,!a,(!a)^} ; (gamma{!a} (%) id{(!a)^}) ; lunitP{(!a)^}");
        let m = interpret_term(&j, &xy()).unwrap();
        let id = interpret_term(&judge("runitT{(!a)^}"), &xy()).unwrap();
        assert_eq!(m.entries, id.entries);
    }
}
