//! Flows, generic forms, instances and echo instances.
//!
//! Orienting every wire of a normal graph along its flow and reading the
//! parts as constructors attaches a *generic form* to each wire: atomic
//! wires carry variables, unit terminals `*`, pairs `φ · ψ`, the upper end
//! of a duplicator `φ + ψ`, of an eliminator `{}0`, of ε `{φ}1`, and a
//! board premise or conclusion `{φ}[i]`. The forms on the outer wires
//! determine the graph up to the routing of dotted links, and a p-echo
//! instance (the forms evaluated at `m_i = p^(p^k_i)` and distinct atoms)
//! determines the forms.

use num_bigint::BigUint;
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

use crate::enumerate::{pi_mod_p, EnumError};
use crate::graph::{BoardId, End, Flow, Graph, PartKind, WireId};
use crate::padic::{PElem, SymCount};
use crate::semantics::{Element, MSet};
use crate::syntax::TypeExpr;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenericError {
    #[error("flows collide on wire {0}")]
    Collision(WireId),
    #[error("flows loop through wire {0}")]
    Loop(WireId),
    #[error("wire {0} of compound type is not oriented (graph not η-expanded)")]
    Unoriented(WireId),
    #[error("unexpected part arrangement at wire {0}")]
    Malformed(WireId),
    #[error("invalid echo parameters: {0}")]
    Params(String),
    #[error("inconsistent assignment pair: {0}")]
    Assignment(String),
    #[error("not a p-echo instance: {0}")]
    NotEcho(String),
    #[error("form does not fit type: {0}")]
    Mismatch(String),
    #[error("form syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error(transparent)]
    Enumerate(#[from] EnumError),
}

/// A generic form. Board lists are innermost first; `Single(φ)` is the
/// form `{φ}1` and `Empty` is `{}0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GenericForm {
    Var(String, Vec<String>),
    Star,
    Dot(Box<GenericForm>, Box<GenericForm>),
    /// At least two summands, kept sorted.
    Plus(Vec<GenericForm>),
    Empty,
    Single(Box<GenericForm>),
    Boxed(Box<GenericForm>, Vec<String>),
}

/// The forms on the top wires and on the bottom wires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormPair {
    pub top: Vec<GenericForm>,
    pub bottom: Vec<GenericForm>,
}

impl GenericForm {
    pub fn dot(a: GenericForm, b: GenericForm) -> Self {
        GenericForm::Dot(Box::new(a), Box::new(b))
    }

    /// Canonical sum: nested sums are flattened and summands sorted; a sum
    /// of one form is that form and a sum of none is `{}0`.
    pub fn plus(items: Vec<GenericForm>) -> Self {
        let mut flat = Vec::new();
        for f in items {
            match f {
                GenericForm::Plus(xs) => flat.extend(xs),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => GenericForm::Empty,
            1 => flat.pop().expect("one summand"),
            _ => {
                flat.sort();
                GenericForm::Plus(flat)
            }
        }
    }

    pub fn boxed(f: GenericForm, boards: Vec<String>) -> Self {
        if boards.is_empty() {
            GenericForm::Single(Box::new(f))
        } else {
            GenericForm::Boxed(Box::new(f), boards)
        }
    }

    /// The form of `!A` obtained from a form of `!!A` at a δ part: a box
    /// of boxes becomes one box over the concatenated board list.
    fn flatten(self, w: WireId) -> Result<GenericForm, GenericError> {
        match self {
            GenericForm::Boxed(inner, outer) => inner.push_boards(&outer, w),
            GenericForm::Single(inner) => Ok(*inner),
            GenericForm::Plus(xs) => {
                Ok(GenericForm::plus(xs.into_iter().map(|x| x.flatten(w)).collect::<Result<_, _>>()?))
            }
            GenericForm::Empty => Ok(GenericForm::Empty),
            _ => Err(GenericError::Malformed(w)),
        }
    }

    fn push_boards(self, outer: &[String], w: WireId) -> Result<GenericForm, GenericError> {
        match self {
            GenericForm::Boxed(f, mut l) => {
                l.extend(outer.iter().cloned());
                Ok(GenericForm::Boxed(f, l))
            }
            GenericForm::Single(f) => Ok(GenericForm::Boxed(f, outer.to_vec())),
            GenericForm::Plus(xs) => Ok(GenericForm::plus(
                xs.into_iter().map(|x| x.push_boards(outer, w)).collect::<Result<_, _>>()?,
            )),
            GenericForm::Empty => Ok(GenericForm::Empty),
            _ => Err(GenericError::Malformed(w)),
        }
    }

    fn collect_names(&self, vars: &mut Vec<String>, boards: &mut Vec<String>) {
        let push = |v: &mut Vec<String>, x: &String| {
            if !v.contains(x) {
                v.push(x.clone());
            }
        };
        match self {
            GenericForm::Var(x, l) => {
                push(vars, x);
                for b in l.iter().rev() {
                    push(boards, b);
                }
            }
            GenericForm::Star | GenericForm::Empty => {}
            GenericForm::Dot(a, b) => {
                a.collect_names(vars, boards);
                b.collect_names(vars, boards);
            }
            GenericForm::Plus(xs) => xs.iter().for_each(|x| x.collect_names(vars, boards)),
            GenericForm::Single(f) => f.collect_names(vars, boards),
            GenericForm::Boxed(f, l) => {
                for b in l.iter().rev() {
                    push(boards, b);
                }
                f.collect_names(vars, boards);
            }
        }
    }

    fn rename(&self, vars: &HashMap<String, String>, boards: &HashMap<String, String>) -> GenericForm {
        let rb = |l: &Vec<String>| l.iter().map(|b| boards.get(b).cloned().unwrap_or_else(|| b.clone())).collect();
        match self {
            GenericForm::Var(x, l) => GenericForm::Var(vars.get(x).cloned().unwrap_or_else(|| x.clone()), rb(l)),
            GenericForm::Star => GenericForm::Star,
            GenericForm::Empty => GenericForm::Empty,
            GenericForm::Dot(a, b) => GenericForm::dot(a.rename(vars, boards), b.rename(vars, boards)),
            GenericForm::Plus(xs) => GenericForm::plus(xs.iter().map(|x| x.rename(vars, boards)).collect()),
            GenericForm::Single(f) => GenericForm::Single(Box::new(f.rename(vars, boards))),
            GenericForm::Boxed(f, l) => GenericForm::Boxed(Box::new(f.rename(vars, boards)), rb(l)),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        // prec 0: anything; 1: left of a dot; 2: right of a dot
        match self {
            GenericForm::Var(x, l) if l.is_empty() => write!(f, "{x}"),
            GenericForm::Var(x, l) => write!(f, "{x}[{}]", l.join(",")),
            GenericForm::Star => write!(f, "*"),
            GenericForm::Empty => write!(f, "{{}}0"),
            GenericForm::Single(x) => {
                write!(f, "{{")?;
                x.fmt_prec(f, 0)?;
                write!(f, "}}1")
            }
            GenericForm::Boxed(x, l) => {
                write!(f, "{{")?;
                x.fmt_prec(f, 0)?;
                write!(f, "}}[{}]", l.join(","))
            }
            GenericForm::Dot(a, b) => {
                if prec == 2 {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 1)?;
                write!(f, " . ")?;
                b.fmt_prec(f, 2)?;
                if prec == 2 {
                    write!(f, ")")?;
                }
                Ok(())
            }
            GenericForm::Plus(xs) => {
                if prec > 0 {
                    write!(f, "(")?;
                }
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    x.fmt_prec(f, 0)?;
                }
                if prec > 0 {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for GenericForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl fmt::Display for FormPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |xs: &[GenericForm]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        write!(f, "{} ; {}", list(&self.top), list(&self.bottom))
    }
}

impl FormPair {
    /// Rename boards to `i0, i1, …` and variables to `x0, x1, …` in order
    /// of first occurrence.
    pub fn canonical(&self) -> FormPair {
        let (mut vars, mut boards) = (Vec::new(), Vec::new());
        for f in self.top.iter().chain(&self.bottom) {
            f.collect_names(&mut vars, &mut boards);
        }
        let vm: HashMap<String, String> = vars.iter().enumerate().map(|(i, v)| (v.clone(), format!("x{i}"))).collect();
        let bm: HashMap<String, String> =
            boards.iter().enumerate().map(|(i, b)| (b.clone(), format!("i{i}"))).collect();
        FormPair {
            top: self.top.iter().map(|f| f.rename(&vm, &bm)).collect(),
            bottom: self.bottom.iter().map(|f| f.rename(&vm, &bm)).collect(),
        }
    }

    /// Board names in order of first occurrence.
    pub fn boards(&self) -> Vec<String> {
        let (mut vars, mut boards) = (Vec::new(), Vec::new());
        for f in self.top.iter().chain(&self.bottom) {
            f.collect_names(&mut vars, &mut boards);
        }
        boards
    }

    /// Variable names in order of first occurrence.
    pub fn vars(&self) -> Vec<String> {
        let (mut vars, mut boards) = (Vec::new(), Vec::new());
        for f in self.top.iter().chain(&self.bottom) {
            f.collect_names(&mut vars, &mut boards);
        }
        vars
    }
}

// ---------------------------------------------------------------------------
// Equality up to renaming
// ---------------------------------------------------------------------------

#[derive(Clone, Default)]
struct Renaming {
    vars: HashMap<String, String>,
    vars_back: HashMap<String, String>,
    boards: HashMap<String, String>,
    boards_back: HashMap<String, String>,
}

impl Renaming {
    fn bind(fw: &mut HashMap<String, String>, bw: &mut HashMap<String, String>, a: &str, b: &str) -> bool {
        match (fw.get(a), bw.get(b)) {
            (None, None) => {
                fw.insert(a.to_string(), b.to_string());
                bw.insert(b.to_string(), a.to_string());
                true
            }
            (Some(x), Some(y)) => x == b && y == a,
            _ => false,
        }
    }
    fn var(&mut self, a: &str, b: &str) -> bool {
        Renaming::bind(&mut self.vars, &mut self.vars_back, a, b)
    }
    fn boards(&mut self, a: &[String], b: &[String]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| Renaming::bind(&mut self.boards, &mut self.boards_back, x, y))
    }
}

enum Goal<'a> {
    One(&'a GenericForm, &'a GenericForm),
    Bag(Vec<&'a GenericForm>, Vec<&'a GenericForm>),
}

fn unify(mut goals: Vec<Goal<'_>>, mut st: Renaming) -> bool {
    use GenericForm as F;
    while let Some(g) = goals.pop() {
        match g {
            Goal::One(a, b) => match (a, b) {
                (F::Var(x, l), F::Var(y, m)) => {
                    if !st.var(x, y) || !st.boards(l, m) {
                        return false;
                    }
                }
                (F::Star, F::Star) | (F::Empty, F::Empty) => {}
                (F::Dot(a1, a2), F::Dot(b1, b2)) => {
                    goals.push(Goal::One(a2, b2));
                    goals.push(Goal::One(a1, b1));
                }
                (F::Single(x), F::Single(y)) => goals.push(Goal::One(x, y)),
                (F::Boxed(x, l), F::Boxed(y, m)) => {
                    if !st.boards(l, m) {
                        return false;
                    }
                    goals.push(Goal::One(x, y));
                }
                (F::Plus(xs), F::Plus(ys)) if xs.len() == ys.len() => {
                    goals.push(Goal::Bag(xs.iter().collect(), ys.iter().collect()));
                }
                _ => return false,
            },
            Goal::Bag(xs, ys) => {
                if xs.is_empty() {
                    continue;
                }
                let (first, rest) = (xs[0], xs[1..].to_vec());
                for j in 0..ys.len() {
                    let mut others = ys.clone();
                    let y = others.remove(j);
                    let mut next: Vec<Goal<'_>> = goals
                        .iter()
                        .map(|g| match g {
                            Goal::One(a, b) => Goal::One(a, b),
                            Goal::Bag(a, b) => Goal::Bag(a.clone(), b.clone()),
                        })
                        .collect();
                    next.push(Goal::Bag(rest.clone(), others));
                    next.push(Goal::One(first, y));
                    if unify(next, st.clone()) {
                        return true;
                    }
                }
                return false;
            }
        }
    }
    true
}

/// Are two form pairs equal up to a bijective renaming of variables and
/// of boards?
pub fn equivalent(a: &FormPair, b: &FormPair) -> bool {
    if a.top.len() != b.top.len() || a.bottom.len() != b.bottom.len() {
        return false;
    }
    let goals: Vec<Goal<'_>> = a
        .top
        .iter()
        .chain(&a.bottom)
        .zip(b.top.iter().chain(&b.bottom))
        .map(|(x, y)| Goal::One(x, y))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    unify(goals, Renaming::default())
}

// ---------------------------------------------------------------------------
// Text syntax
// ---------------------------------------------------------------------------

struct FormParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> FormParser<'a> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }
    fn err<T>(&self, msg: &str) -> Result<T, GenericError> {
        Err(GenericError::Parse { pos: self.pos, msg: msg.to_string() })
    }
    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }
    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect(&mut self, c: u8) -> Result<(), GenericError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(&format!("expected `{}`", c as char))
        }
    }
    fn ident(&mut self) -> Result<String, GenericError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' || c == '\'' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return self.err("expected a name");
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }
    fn names(&mut self) -> Result<Vec<String>, GenericError> {
        self.expect(b'[')?;
        let mut out = vec![self.ident()?];
        while self.eat(b',') {
            out.push(self.ident()?);
        }
        self.expect(b']')?;
        Ok(out)
    }
    fn atom(&mut self) -> Result<GenericForm, GenericError> {
        match self.peek() {
            Some(b'*') => {
                self.pos += 1;
                Ok(GenericForm::Star)
            }
            Some(b'(') => {
                self.pos += 1;
                let f = self.sum()?;
                self.expect(b')')?;
                Ok(f)
            }
            Some(b'{') => {
                self.pos += 1;
                if self.eat(b'}') {
                    if self.s.get(self.pos) == Some(&b'0') {
                        self.pos += 1;
                        return Ok(GenericForm::Empty);
                    }
                    return self.err("expected `0` after `{}`");
                }
                let f = self.sum()?;
                self.expect(b'}')?;
                match self.s.get(self.pos) {
                    Some(b'1') => {
                        self.pos += 1;
                        Ok(GenericForm::Single(Box::new(f)))
                    }
                    Some(b'[') => Ok(GenericForm::Boxed(Box::new(f), self.names()?)),
                    _ => self.err("expected `1` or a board list after `}`"),
                }
            }
            Some(_) => {
                let x = self.ident()?;
                if self.s.get(self.pos) == Some(&b'[') {
                    Ok(GenericForm::Var(x, self.names()?))
                } else {
                    Ok(GenericForm::Var(x, vec![]))
                }
            }
            None => self.err("unexpected end of input"),
        }
    }
    fn product(&mut self) -> Result<GenericForm, GenericError> {
        let mut f = self.atom()?;
        while self.eat(b'.') {
            f = GenericForm::dot(f, self.atom()?);
        }
        Ok(f)
    }
    fn sum(&mut self) -> Result<GenericForm, GenericError> {
        let mut items = vec![self.product()?];
        while self.eat(b'+') {
            items.push(self.product()?);
        }
        Ok(GenericForm::plus(items))
    }
    fn list(&mut self) -> Result<Vec<GenericForm>, GenericError> {
        let mut out = Vec::new();
        if matches!(self.peek(), Some(b';') | None) {
            return Ok(out);
        }
        out.push(self.sum()?);
        while self.eat(b',') {
            out.push(self.sum()?);
        }
        Ok(out)
    }
}

pub fn parse_form(text: &str) -> Result<GenericForm, GenericError> {
    let mut p = FormParser { s: text.as_bytes(), pos: 0 };
    let f = p.sum()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(f)
}

/// Parse `φ1, φ2, … ; ψ1, …`.
pub fn parse_form_pair(text: &str) -> Result<FormPair, GenericError> {
    let mut p = FormParser { s: text.as_bytes(), pos: 0 };
    let top = p.list()?;
    p.expect(b';')?;
    let bottom = p.list()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(FormPair { top, bottom })
}

// ---------------------------------------------------------------------------
// Orientation and generic forms of graphs
// ---------------------------------------------------------------------------

/// Flow direction of every live wire, verified collision-free and
/// loop-free.
pub fn orient_flows(g: &Graph) -> Result<BTreeMap<WireId, Flow>, GenericError> {
    let mut out = BTreeMap::new();
    for w in g.live_wires() {
        let f = g.flow(w);
        match f {
            Flow::Clash => return Err(GenericError::Collision(w)),
            Flow::Source if !g.wire(w).ty.is_atomic() => return Err(GenericError::Unoriented(w)),
            _ => {}
        }
        out.insert(w, f);
    }
    // loop detection happens while forms are computed
    generic_form(g)?;
    Ok(out)
}

/// Name of a board in generic forms of graphs.
pub fn board_name(b: BoardId) -> String {
    format!("b{b}")
}

/// Name of the variable of an atomic wire in generic forms of graphs.
pub fn var_name(w: WireId) -> String {
    format!("x{w}")
}

struct FormBuilder<'g> {
    g: &'g Graph,
    memo: HashMap<WireId, GenericForm>,
    active: BTreeSet<WireId>,
}

impl<'g> FormBuilder<'g> {
    fn boards_of(&self, region: Option<BoardId>) -> Vec<String> {
        self.g.enclosing(region).into_iter().map(board_name).collect()
    }

    fn form(&mut self, w: WireId) -> Result<GenericForm, GenericError> {
        if let Some(f) = self.memo.get(&w) {
            return Ok(f.clone());
        }
        if !self.active.insert(w) {
            return Err(GenericError::Loop(w));
        }
        let f = self.compute(w)?;
        self.active.remove(&w);
        self.memo.insert(w, f.clone());
        Ok(f)
    }

    fn compute(&mut self, w: WireId) -> Result<GenericForm, GenericError> {
        use PartKind::*;
        let g = self.g;
        let wire = g.wire(w);
        if wire.ty.is_atomic() {
            if g.flow(w) != Flow::Source {
                return Err(GenericError::Malformed(w));
            }
            return Ok(GenericForm::Var(var_name(w), self.boards_of(wire.region)));
        }
        match g.flow(w) {
            Flow::Clash => Err(GenericError::Collision(w)),
            Flow::Source => Err(GenericError::Unoriented(w)),
            Flow::Down => match wire.upper {
                End::PartBottom(p, i) => {
                    let part = g.part(p);
                    match part.kind {
                        TensorIntro | ParIntro => {
                            Ok(GenericForm::dot(self.form(part.top[0])?, self.form(part.top[1])?))
                        }
                        UnitIntro | CounitIntro => Ok(GenericForm::Star),
                        DiodeRight if i == 1 => self.form(part.bottom[0]),
                        _ => Err(GenericError::Malformed(w)),
                    }
                }
                End::PosOut(b) => {
                    let inner = self.form(g.board(b).pos_in)?;
                    Ok(GenericForm::boxed(inner, vec![board_name(b)]))
                }
                _ => Err(GenericError::Malformed(w)),
            },
            Flow::Up => match wire.lower {
                End::PartTop(p, i) => {
                    let part = g.part(p);
                    match part.kind {
                        TensorElim | ParElim => {
                            Ok(GenericForm::dot(self.form(part.bottom[0])?, self.form(part.bottom[1])?))
                        }
                        UnitElim | CounitElim => Ok(GenericForm::Star),
                        DiodeLeft if i == 0 => self.form(part.top[1]),
                        DeltaLens => self.form(part.bottom[0])?.flatten(w),
                        EpsLens => Ok(GenericForm::Single(Box::new(self.form(part.bottom[0])?))),
                        Duplicator => {
                            let legs = part.bottom.clone();
                            let forms = legs.into_iter().map(|l| self.form(l)).collect::<Result<Vec<_>, _>>()?;
                            Ok(GenericForm::plus(forms))
                        }
                        Eliminator => Ok(GenericForm::Empty),
                        _ => Err(GenericError::Malformed(w)),
                    }
                }
                End::NegOut(b, gate) => {
                    let inner = self.form(g.gate(b, gate).inn)?;
                    Ok(GenericForm::boxed(inner, vec![board_name(b)]))
                }
                _ => Err(GenericError::Malformed(w)),
            },
        }
    }
}

/// The generic form of a β-normal, η-expanded graph.
pub fn generic_form(g: &Graph) -> Result<FormPair, GenericError> {
    let mut fb = FormBuilder { g, memo: HashMap::new(), active: BTreeSet::new() };
    let top = g.top.iter().map(|w| fb.form(*w)).collect::<Result<Vec<_>, _>>()?;
    let bottom = g.bottom.iter().map(|w| fb.form(*w)).collect::<Result<Vec<_>, _>>()?;
    Ok(FormPair { top, bottom })
}

// ---------------------------------------------------------------------------
// Assignment pairs and instances
// ---------------------------------------------------------------------------

/// A function of sequences, constant or tabulated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SeqFn<T> {
    Const(T),
    Table(BTreeMap<Vec<u64>, T>),
}

impl<T: Clone> SeqFn<T> {
    pub fn at(&self, s: &[u64]) -> Option<T> {
        match self {
            SeqFn::Const(x) => Some(x.clone()),
            SeqFn::Table(t) => t.get(s).cloned(),
        }
    }
}

/// `m_i(s)` for every board and `η(x, s)` for every variable. Sequences
/// `s = (r1, …, rn)` list positions from the outermost board inwards,
/// starting at 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AssignmentPair {
    pub m: BTreeMap<String, SeqFn<u64>>,
    pub eta: BTreeMap<String, SeqFn<Element>>,
}

impl AssignmentPair {
    /// Length `q_i` of the sequence `m_i` for a board list (innermost
    /// first) leading down to board `i`: the number of copies of the
    /// region directly outside board `i`.
    pub fn level_sequences(&self, outer_first: &[String]) -> Result<Vec<Vec<u64>>, GenericError> {
        let mut level: Vec<Vec<u64>> = vec![vec![]];
        for b in outer_first {
            let mut next = Vec::new();
            for s in &level {
                let n = self.m_at(b, s)?;
                for r in 1..=n {
                    let mut t = s.clone();
                    t.push(r);
                    next.push(t);
                }
            }
            level = next;
        }
        Ok(level)
    }

    fn m_at(&self, b: &str, s: &[u64]) -> Result<u64, GenericError> {
        self.m
            .get(b)
            .ok_or_else(|| GenericError::Assignment(format!("no m for board {b}")))?
            .at(s)
            .ok_or_else(|| GenericError::Assignment(format!("m_{b} undefined at {s:?}")))
    }
}

/// `|φ|_{P(s)}`. The sequence `s` describes the context of `φ`, outermost
/// board first.
pub fn instantiate(form: &GenericForm, p: &AssignmentPair, s: &[u64]) -> Result<Element, GenericError> {
    Ok(match form {
        GenericForm::Var(x, _) => p
            .eta
            .get(x)
            .ok_or_else(|| GenericError::Assignment(format!("no η for {x}")))?
            .at(s)
            .ok_or_else(|| GenericError::Assignment(format!("η({x}) undefined at {s:?}")))?,
        GenericForm::Star => Element::Star,
        GenericForm::Dot(a, b) => Element::pair(instantiate(a, p, s)?, instantiate(b, p, s)?),
        GenericForm::Plus(xs) => {
            let mut out = MSet::new();
            for x in xs {
                let e = instantiate(x, p, s)?;
                let m = e.as_mset().ok_or_else(|| GenericError::Assignment("sum of non-multisets".into()))?;
                for (k, n) in m {
                    *out.entry(k.clone()).or_insert_with(BigUint::zero) += n;
                }
            }
            Element::MSet(out)
        }
        GenericForm::Empty => Element::empty(),
        GenericForm::Single(f) => Element::singleton(instantiate(f, p, s)?),
        GenericForm::Boxed(f, boards) => {
            // the outermost board of the list sits directly in the context
            let outer_first: Vec<String> = boards.iter().rev().cloned().collect();
            let mut level: Vec<Vec<u64>> = vec![s.to_vec()];
            for b in &outer_first {
                let mut next = Vec::new();
                for t in &level {
                    for r in 1..=p.m_at(b, t)? {
                        let mut u = t.clone();
                        u.push(r);
                        next.push(u);
                    }
                }
                level = next;
            }
            let mut items = Vec::with_capacity(level.len());
            for t in &level {
                items.push(instantiate(f, p, t)?);
            }
            Element::mset(items)
        }
    })
}

/// Parameters of a p-echo instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EchoParams {
    pub p: u64,
    /// Board name ↦ `k`, so that `m = p^(p^k)`.
    pub k: BTreeMap<String, u64>,
    /// Variable name ↦ atom label.
    pub labels: BTreeMap<String, String>,
}

impl EchoParams {
    /// Boards numbered `k = 0, 1, …` and variables labelled
    /// `<atom>0, <atom>1, …` in order of first occurrence in the forms.
    pub fn canonical(forms: &FormPair, g: &Graph, p: u64) -> EchoParams {
        let k = forms.boards().into_iter().enumerate().map(|(i, b)| (b, i as u64)).collect();
        let mut labels = BTreeMap::new();
        let atom_of: HashMap<String, String> = g
            .live_wires()
            .filter_map(|w| match &g.wire(w).ty {
                TypeExpr::Atom(a) => Some((var_name(w), a.clone())),
                _ => None,
            })
            .collect();
        let mut counters: BTreeMap<String, usize> = BTreeMap::new();
        for v in forms.vars() {
            let atom = atom_of.get(&v).cloned().unwrap_or_else(|| "a".into());
            let c = counters.entry(atom.clone()).or_insert(0);
            labels.insert(v, format!("{atom}{c}"));
            *c += 1;
        }
        EchoParams { p, k, labels }
    }

    fn validate(&self) -> Result<(), GenericError> {
        let ks: BTreeSet<u64> = self.k.values().copied().collect();
        if ks.len() != self.k.len() {
            return Err(GenericError::Params("two boards share the same k".into()));
        }
        let ls: BTreeSet<&String> = self.labels.values().collect();
        if ls.len() != self.labels.len() {
            return Err(GenericError::Params("two variables share the same label".into()));
        }
        if !crate::padic::is_prime(self.p) {
            return Err(GenericError::Params(format!("{} is not prime", self.p)));
        }
        Ok(())
    }
}

/// The uniform instance of a form at a type, with bars at dual positions.
fn echo_elem(form: &GenericForm, ty: &TypeExpr, params: &EchoParams) -> Result<PElem, GenericError> {
    let p = params.p;
    let mismatch = || GenericError::Mismatch(format!("`{form}` at type `{ty}`"));
    if let TypeExpr::Dual(a) = ty {
        return Ok(PElem::bar(echo_elem(form, a, params)?));
    }
    Ok(match (form, ty) {
        (GenericForm::Var(x, _), TypeExpr::Atom(_)) => PElem::Atom(
            params.labels.get(x).cloned().ok_or_else(|| GenericError::Params(format!("no label for {x}")))?,
        ),
        (GenericForm::Star, TypeExpr::One | TypeExpr::Bot) => PElem::Star,
        (GenericForm::Dot(a, b), TypeExpr::Tensor(x, y) | TypeExpr::Par(x, y)) => {
            PElem::pair(echo_elem(a, x, params)?, echo_elem(b, y, params)?)
        }
        (GenericForm::Plus(xs), TypeExpr::Bang(_)) => {
            let mut acc = BTreeMap::new();
            for x in xs {
                let e = echo_elem(x, ty, params)?;
                acc = PElem::bag_sum(&acc, e.as_bag().ok_or_else(mismatch)?);
            }
            PElem::Bag(acc)
        }
        (GenericForm::Empty, TypeExpr::Bang(_)) => PElem::empty(),
        (GenericForm::Single(f), TypeExpr::Bang(a)) => PElem::block(echo_elem(f, a, params)?, SymCount::one(p)),
        (GenericForm::Boxed(f, boards), TypeExpr::Bang(a)) => {
            let mut e = BigUint::zero();
            for b in boards {
                let k = *params.k.get(b).ok_or_else(|| GenericError::Params(format!("no k for board {b}")))?;
                e += BigUint::from(p).pow(k as u32);
            }
            PElem::block(echo_elem(f, a, params)?, SymCount::p_pow(p, e))
        }
        _ => return Err(mismatch()),
    })
}

/// The p-echo instance `(α; β)` of the generic form of `g`.
pub fn echo_instance(g: &Graph, params: &EchoParams) -> Result<(Vec<PElem>, Vec<PElem>), GenericError> {
    params.validate()?;
    let forms = generic_form(g)?;
    echo_of_forms(&forms, &g.boundary_types(), params)
}

/// The p-echo instance of a form pair at the given boundary types.
pub fn echo_of_forms(
    forms: &FormPair,
    types: &(Vec<TypeExpr>, Vec<TypeExpr>),
    params: &EchoParams,
) -> Result<(Vec<PElem>, Vec<PElem>), GenericError> {
    params.validate()?;
    let a = forms.top.iter().zip(&types.0).map(|(f, t)| echo_elem(f, t, params)).collect::<Result<_, _>>()?;
    let b = forms.bottom.iter().zip(&types.1).map(|(f, t)| echo_elem(f, t, params)).collect::<Result<_, _>>()?;
    Ok((a, b))
}

// ---------------------------------------------------------------------------
// The echo conditions
// ---------------------------------------------------------------------------

/// Outcome of the five echo conditions; `witness[i]` explains a failure
/// of condition `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarReport {
    pub holds: [bool; 5],
    pub witness: [Option<String>; 5],
}

impl StarReport {
    pub fn all(&self) -> bool {
        self.holds.iter().all(|x| *x)
    }
}

impl fmt::Display for StarReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..5 {
            let mark = if self.holds[i] { "holds" } else { "fails" };
            write!(f, "(★{}) {mark}", i + 1)?;
            if let Some(w) = &self.witness[i] {
                write!(f, ": {w}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Occurrence data of an annotation: positive multisets and signed atoms
/// with their occurrence counts.
#[derive(Default)]
struct Occurrences {
    positive: BTreeMap<PElem, SymCount>,
    atoms: BTreeMap<(String, bool), SymCount>,
}

impl Occurrences {
    fn add<K: Ord + Clone>(map: &mut BTreeMap<K, SymCount>, key: K, n: &SymCount) {
        let v = match map.remove(&key) {
            Some(c) => c.add(n),
            None => n.clone(),
        };
        map.insert(key, v);
    }

    fn walk(&mut self, e: &PElem, positive: bool, mult: &SymCount) {
        match e {
            PElem::Bar(x) => self.walk(x, !positive, mult),
            PElem::Pair(a, b) => {
                self.walk(a, positive, mult);
                self.walk(b, positive, mult);
            }
            PElem::Star => {}
            PElem::Atom(l) => Occurrences::add(&mut self.atoms, (l.clone(), positive), mult),
            PElem::Bag(m) => {
                if positive {
                    Occurrences::add(&mut self.positive, e.clone(), mult);
                }
                for (x, n) in m {
                    self.walk(x, positive, &mult.mul(n));
                }
            }
        }
    }

    /// Source components are negative positions, target components
    /// positive; each bar flips the sign.
    fn of(alpha: &[PElem], beta: &[PElem], p: u64) -> Occurrences {
        let mut o = Occurrences::default();
        let one = SymCount::one(p);
        for a in alpha {
            o.walk(a, false, &one);
        }
        for b in beta {
            o.walk(b, true, &one);
        }
        o
    }
}

/// Check the five echo conditions of `(α; β)` against the graph `g`.
pub fn check_stars(g: &Graph, alpha: &[PElem], beta: &[PElem], p: u64) -> StarReport {
    let mut holds = [true; 5];
    let mut witness: [Option<String>; 5] = Default::default();
    let mut fail = |i: usize, w: String| {
        if holds[i] {
            holds[i] = false;
            witness[i] = Some(w);
        }
    };
    match pi_mod_p(g, alpha, beta, p, None) {
        Ok(0) => fail(0, "the coefficient vanishes modulo p".into()),
        Ok(_) => {}
        Err(e) => fail(0, format!("coefficient not computable: {e}")),
    }
    let occ = Occurrences::of(alpha, beta, p);
    let mut by_card: BTreeMap<SymCount, Vec<&PElem>> = BTreeMap::new();
    for (m, n) in &occ.positive {
        let bag = m.as_bag().expect("bag");
        let card = m.cardinality(p).expect("bag");
        if bag.len() != 1 {
            fail(1, format!("positive multiset {m} is not homogeneous"));
        } else if card.double_power_exponent().is_none() {
            fail(1, format!("positive multiset {m} has {card} elements, not p^(p^k)"));
        }
        by_card.entry(card).or_default().push(m);
        if n.p_power_exponent().is_none() {
            fail(3, format!("positive multiset {m} occurs {n} times"));
        }
    }
    for (card, ms) in &by_card {
        if ms.len() > 1 {
            fail(2, format!("{} different positive multisets have {card} elements", ms.len()));
        }
    }
    for ((l, positive), n) in &occ.atoms {
        if n.p_power_exponent().is_none() {
            let sign = if *positive { "positively" } else { "negatively" };
            fail(4, format!("atom {l} occurs {sign} {n} times"));
        }
    }
    StarReport { holds, witness }
}

// ---------------------------------------------------------------------------
// Reconstruction of forms from an echo instance
// ---------------------------------------------------------------------------

/// Recover the generic form from a p-echo instance. Board `k` (the one
/// with `p^(p^k)`-element positive multisets) is named `i<k>`; variables
/// are named by their atom labels.
pub fn reconstruct_generic(alpha: &[PElem], beta: &[PElem], p: u64) -> Result<FormPair, GenericError> {
    let occ = Occurrences::of(alpha, beta, p);
    let not_echo = |m: String| GenericError::NotEcho(m);
    // board k ↦ exponent of its occurrence count
    let mut occurrence: BTreeMap<u64, BigUint> = BTreeMap::new();
    for (m, n) in &occ.positive {
        let card = m.cardinality(p).expect("bag");
        let k = card
            .double_power_exponent()
            .ok_or_else(|| not_echo(format!("positive multiset {m} does not have p^(p^k) elements")))?;
        if m.as_bag().expect("bag").len() != 1 {
            return Err(not_echo(format!("positive multiset {m} is not homogeneous")));
        }
        let l = n.p_power_exponent().ok_or_else(|| not_echo(format!("{m} occurs {n} times")))?.clone();
        if let Some(prev) = occurrence.insert(k, l.clone()) {
            if prev != l {
                return Err(not_echo(format!("two positive multisets share k = {k}")));
            }
        }
    }
    // ancestors of each board, read off the base-p digits of its exponent
    let boards_of_exponent = |e: &BigUint| -> Result<Vec<u64>, GenericError> {
        let digits = SymCount::from_biguint(e, p);
        let mut ks = Vec::new();
        for (t, d) in digits.digits() {
            let t = num_traits::ToPrimitive::to_u64(t).ok_or_else(|| not_echo("exponent too large".into()))?;
            if d != 1 || !occurrence.contains_key(&t) {
                return Err(not_echo(format!("exponent {e} does not name a chain of boards")));
            }
            ks.push(t);
        }
        Ok(ks)
    };
    let mut depth: BTreeMap<u64, usize> = BTreeMap::new();
    for (k, l) in &occurrence {
        depth.insert(*k, boards_of_exponent(l)?.len());
    }
    let innermost_first = |mut ks: Vec<u64>| -> Vec<String> {
        ks.sort_by_key(|k| std::cmp::Reverse(depth[k]));
        ks.into_iter().map(|k| format!("i{k}")).collect()
    };
    fn rec(
        e: &PElem,
        positive: bool,
        occ: &Occurrences,
        boards_of_exponent: &dyn Fn(&BigUint) -> Result<Vec<u64>, GenericError>,
        names: &dyn Fn(Vec<u64>) -> Vec<String>,
    ) -> Result<GenericForm, GenericError> {
        Ok(match e {
            PElem::Bar(x) => rec(x, !positive, occ, boards_of_exponent, names)?,
            PElem::Pair(a, b) => GenericForm::dot(
                rec(a, positive, occ, boards_of_exponent, names)?,
                rec(b, positive, occ, boards_of_exponent, names)?,
            ),
            PElem::Star => GenericForm::Star,
            PElem::Atom(l) => {
                let n = &occ.atoms[&(l.clone(), positive)];
                let e = n.p_power_exponent().ok_or_else(|| GenericError::NotEcho(format!("atom {l} occurs {n} times")))?;
                GenericForm::Var(l.clone(), names(boards_of_exponent(e)?))
            }
            PElem::Bag(m) if positive => {
                let (x, n) = m.iter().next().ok_or_else(|| GenericError::NotEcho("empty positive multiset".into()))?;
                let k = n.double_power_exponent().ok_or_else(|| GenericError::NotEcho(format!("{e} is not p^(p^k)")))?;
                GenericForm::Boxed(Box::new(rec(x, positive, occ, boards_of_exponent, names)?), vec![format!("i{k}")])
            }
            PElem::Bag(m) => {
                let mut blocks = Vec::new();
                for (x, n) in m {
                    let inner = rec(x, positive, occ, boards_of_exponent, names)?;
                    for (t, d) in n.digits() {
                        let ks = boards_of_exponent(t)?;
                        for _ in 0..d {
                            blocks.push(GenericForm::boxed(inner.clone(), names(ks.clone())));
                        }
                    }
                }
                GenericForm::plus(blocks)
            }
        })
    }
    let top = alpha
        .iter()
        .map(|a| rec(a, false, &occ, &boards_of_exponent, &innermost_first))
        .collect::<Result<Vec<_>, _>>()?;
    let bottom = beta
        .iter()
        .map(|b| rec(b, true, &occ, &boards_of_exponent, &innermost_first))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FormPair { top, bottom })
}

// ---------------------------------------------------------------------------
// Reconstruction of graphs from forms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Down,
    Up,
}

struct GraphBuilder {
    g: Graph,
    boards: HashMap<String, BoardId>,
    /// Variable ↦ (wire, ends already attached by a caller: upper, lower).
    vars: HashMap<String, (WireId, bool, bool)>,
}

impl GraphBuilder {
    fn board(&mut self, name: &str, parent: Option<BoardId>) -> Result<BoardId, GenericError> {
        if let Some(b) = self.boards.get(name) {
            if self.g.board(*b).parent != parent {
                return Err(GenericError::Mismatch(format!("board {name} occurs in two different regions")));
            }
            return Ok(*b);
        }
        let b = self.g.new_board_shell(parent);
        self.boards.insert(name.to_string(), b);
        Ok(b)
    }

    /// Attach the absorbing end of `w` (the caller's end).
    fn attach(&mut self, w: WireId, dir: Dir, end: End) -> Result<(), GenericError> {
        match dir {
            // flow runs down into the caller: the caller holds the lower end
            Dir::Down => self.g.attach_lower(w, end),
            Dir::Up => self.g.attach_upper(w, end),
        }
        Ok(())
    }

    fn build(&mut self, f: &GenericForm, ty: &TypeExpr, dir: Dir, region: Option<BoardId>) -> Result<WireId, GenericError> {
        use PartKind::*;
        let mismatch = || GenericError::Mismatch(format!("`{f}` at type `{ty}`"));
        match (f, ty) {
            (GenericForm::Var(x, boards), TypeExpr::Atom(_)) => {
                let expected: Vec<String> = self
                    .g
                    .enclosing(region)
                    .into_iter()
                    .map(|b| self.boards.iter().find(|(_, v)| **v == b).map(|(k, _)| k.clone()).unwrap_or_default())
                    .collect();
                if &expected != boards {
                    return Err(GenericError::Mismatch(format!("variable {x} is placed inside the wrong boards")));
                }
                let entry = match self.vars.get(x) {
                    Some(e) => *e,
                    None => {
                        let w = self.g.new_wire(ty.clone(), region);
                        (w, false, false)
                    }
                };
                let (w, mut up, mut low) = entry;
                if self.g.wire(w).ty != *ty || self.g.wire(w).region != region {
                    return Err(GenericError::Mismatch(format!("variable {x} used at two types or regions")));
                }
                let slot = if dir == Dir::Up { &mut up } else { &mut low };
                if *slot {
                    return Err(GenericError::Mismatch(format!("variable {x} occurs twice on the same side")));
                }
                *slot = true;
                self.vars.insert(x.clone(), (w, up, low));
                Ok(w)
            }
            (_, TypeExpr::Dual(a)) => {
                let w = self.g.new_wire(ty.clone(), region);
                match dir {
                    Dir::Down => {
                        let cap = self.g.new_part_shell(DiodeRight, region, 0, 2);
                        self.g.attach_upper(w, End::PartBottom(cap, 1));
                        let plain = self.build(f, a, Dir::Up, region)?;
                        self.attach(plain, Dir::Up, End::PartBottom(cap, 0))?;
                    }
                    Dir::Up => {
                        let cup = self.g.new_part_shell(DiodeLeft, region, 2, 0);
                        self.g.attach_lower(w, End::PartTop(cup, 0));
                        let plain = self.build(f, a, Dir::Down, region)?;
                        self.attach(plain, Dir::Down, End::PartTop(cup, 1))?;
                    }
                }
                Ok(w)
            }
            (GenericForm::Dot(x, y), TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b)) => {
                let tensor = matches!(ty, TypeExpr::Tensor(..));
                let w = self.g.new_wire(ty.clone(), region);
                match dir {
                    Dir::Down => {
                        let kind = if tensor { TensorIntro } else { ParIntro };
                        let part = self.g.new_part_shell(kind, region, 2, 1);
                        self.g.attach_upper(w, End::PartBottom(part, 0));
                        for (i, (form, t)) in [(x, a), (y, b)].into_iter().enumerate() {
                            let c = self.build(form, t, Dir::Down, region)?;
                            self.attach(c, Dir::Down, End::PartTop(part, i))?;
                        }
                    }
                    Dir::Up => {
                        let kind = if tensor { TensorElim } else { ParElim };
                        let part = self.g.new_part_shell(kind, region, 1, 2);
                        self.g.attach_lower(w, End::PartTop(part, 0));
                        for (i, (form, t)) in [(x, a), (y, b)].into_iter().enumerate() {
                            let c = self.build(form, t, Dir::Up, region)?;
                            self.attach(c, Dir::Up, End::PartBottom(part, i))?;
                        }
                    }
                }
                Ok(w)
            }
            (GenericForm::Star, TypeExpr::One | TypeExpr::Bot) => {
                let w = self.g.new_wire(ty.clone(), region);
                let one = *ty == TypeExpr::One;
                match dir {
                    Dir::Down => {
                        let part = self.g.new_part_shell(if one { UnitIntro } else { CounitIntro }, region, 0, 1);
                        self.g.attach_upper(w, End::PartBottom(part, 0));
                    }
                    Dir::Up => {
                        let part = self.g.new_part_shell(if one { UnitElim } else { CounitElim }, region, 1, 0);
                        self.g.attach_lower(w, End::PartTop(part, 0));
                    }
                }
                Ok(w)
            }
            (_, TypeExpr::Bang(a)) => {
                let w = self.g.new_wire(ty.clone(), region);
                match (dir, f) {
                    (Dir::Down, GenericForm::Boxed(x, l)) if l.len() == 1 => {
                        let b = self.board(&l[0], region)?;
                        if self.g.board(b).pos_out != crate::graph::UNSET {
                            return Err(GenericError::Mismatch(format!("board {} has two conclusions", l[0])));
                        }
                        self.g.attach_upper(w, End::PosOut(b));
                        let c = self.build(x, a, Dir::Down, Some(b))?;
                        self.attach(c, Dir::Down, End::PosIn(b))?;
                    }
                    (Dir::Up, GenericForm::Boxed(x, l)) if l.len() == 1 => {
                        let b = self.board(&l[0], region)?;
                        let gate = self.g.new_gate(b);
                        self.g.attach_lower(w, End::NegOut(b, gate));
                        let c = self.build(x, a, Dir::Up, Some(b))?;
                        self.attach(c, Dir::Up, End::NegIn(b, gate))?;
                    }
                    (Dir::Up, GenericForm::Boxed(x, l)) => {
                        let part = self.g.new_part_shell(DeltaLens, region, 1, 1);
                        self.g.attach_lower(w, End::PartTop(part, 0));
                        let (inner, outer) = l.split_at(l.len() - 1);
                        let nested = GenericForm::Boxed(
                            Box::new(GenericForm::boxed((**x).clone(), inner.to_vec())),
                            outer.to_vec(),
                        );
                        let c = self.build(&nested, &TypeExpr::bang(ty.clone()), Dir::Up, region)?;
                        self.attach(c, Dir::Up, End::PartBottom(part, 0))?;
                    }
                    (Dir::Up, GenericForm::Single(x)) => {
                        let part = self.g.new_part_shell(EpsLens, region, 1, 1);
                        self.g.attach_lower(w, End::PartTop(part, 0));
                        let c = self.build(x, a, Dir::Up, region)?;
                        self.attach(c, Dir::Up, End::PartBottom(part, 0))?;
                    }
                    (Dir::Up, GenericForm::Plus(xs)) => {
                        let part = self.g.new_part_shell(Duplicator, region, 1, xs.len());
                        self.g.attach_lower(w, End::PartTop(part, 0));
                        for (i, x) in xs.iter().enumerate() {
                            let c = self.build(x, ty, Dir::Up, region)?;
                            self.attach(c, Dir::Up, End::PartBottom(part, i))?;
                        }
                    }
                    (Dir::Up, GenericForm::Empty) => {
                        let part = self.g.new_part_shell(Eliminator, region, 1, 1);
                        self.g.attach_lower(w, End::PartTop(part, 0));
                        let c = self.build(&GenericForm::Star, &TypeExpr::One, Dir::Up, region)?;
                        self.attach(c, Dir::Up, End::PartBottom(part, 0))?;
                    }
                    _ => return Err(mismatch()),
                }
                Ok(w)
            }
            _ => Err(mismatch()),
        }
    }
}

/// Rebuild a normal graph from its generic form and boundary types. Each
/// unit terminal gets a dotted link to the lowest-numbered other wire of
/// its region, which fixes the graph up to the routing of dotted links.
pub fn reconstruct_graph(forms: &FormPair, types: &(Vec<TypeExpr>, Vec<TypeExpr>)) -> Result<Graph, GenericError> {
    if forms.top.len() != types.0.len() || forms.bottom.len() != types.1.len() {
        return Err(GenericError::Mismatch("boundary arity differs from the forms".into()));
    }
    let mut gb = GraphBuilder { g: Graph::new(), boards: HashMap::new(), vars: HashMap::new() };
    gb.g.top = vec![crate::graph::UNSET; types.0.len()];
    gb.g.bottom = vec![crate::graph::UNSET; types.1.len()];
    for (i, (f, t)) in forms.top.iter().zip(&types.0).enumerate() {
        let w = gb.build(f, t, Dir::Up, None)?;
        gb.attach(w, Dir::Up, End::Top(i))?;
    }
    for (i, (f, t)) in forms.bottom.iter().zip(&types.1).enumerate() {
        let w = gb.build(f, t, Dir::Down, None)?;
        gb.attach(w, Dir::Down, End::Bottom(i))?;
    }
    let mut g = gb.g;
    if !g.fully_attached() {
        return Err(GenericError::Mismatch("some variable occurs only once, or a board lacks a conclusion".into()));
    }
    let terminals: Vec<_> = g.live_parts().filter(|p| g.part(*p).kind.is_terminal()).collect();
    for p in terminals {
        let own: Vec<WireId> = g.part(p).top.iter().chain(&g.part(p).bottom).copied().collect();
        let region = g.part(p).region;
        let host = g.live_wires().find(|w| g.wire(*w).region == region && !own.contains(w));
        g.set_dotted(p, host);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn form_syntax_round_trips() {
        for text in ["x", "x[i,j] . {y[j]}[j]", "({}0 + {x}1) . *", "{x . (y + z)}[i,j]"] {
            let f = parse_form(text).unwrap();
            assert_eq!(parse_form(&f.to_string()).unwrap(), f, "{text}");
        }
    }

    #[test]
    fn instantiate_follows_the_clauses() {
        let mut p = AssignmentPair::default();
        p.m.insert("i".into(), SeqFn::Const(3));
        p.eta.insert("x".into(), SeqFn::Const(Element::atom("a")));
        let f = parse_form("{x[i]}[i]").unwrap();
        assert_eq!(instantiate(&f, &p, &[]).unwrap(), Element::mset(vec![Element::atom("a"); 3]));
        assert_eq!(instantiate(&GenericForm::Star, &p, &[]).unwrap(), Element::Star);
        assert_eq!(instantiate(&GenericForm::Empty, &p, &[]).unwrap(), Element::empty());
    }

    #[test]
    fn nested_boxes_use_sequence_dependent_counts() {
        // m_i(1) = 2 and m_j = 2, 3 at s = 1, 2 give five leaves
        let mut p = AssignmentPair::default();
        p.m.insert("i".into(), SeqFn::Const(2));
        p.m.insert("j".into(), SeqFn::Table([(vec![1], 2), (vec![2], 3)].into_iter().collect()));
        let labels: BTreeMap<Vec<u64>, Element> = [
            (vec![1, 1], "a"),
            (vec![1, 2], "b"),
            (vec![2, 1], "c"),
            (vec![2, 2], "d"),
            (vec![2, 3], "e"),
        ]
        .into_iter()
        .map(|(s, l)| (s, Element::atom(l)))
        .collect();
        p.eta.insert("x".into(), SeqFn::Table(labels));
        let f = parse_form("{x[j,i]}[j,i]").unwrap();
        let got = instantiate(&f, &p, &[]).unwrap();
        let want = Element::mset(["a", "b", "c", "d", "e"].iter().map(|l| Element::atom(l)).collect());
        assert_eq!(got, want);
        assert_eq!(p.level_sequences(&["i".into(), "j".into()]).unwrap().len(), 5);
    }

    #[test]
    fn renaming_equivalence_handles_sums() {
        let a = parse_form_pair("{x[i]}[i] + {y}1 ; x[i] . y").unwrap();
        let b = parse_form_pair("{v}1 + {u[k]}[k] ; u[k] . v").unwrap();
        let c = parse_form_pair("{v}1 + {u[k]}[k] ; v . u[k]").unwrap();
        assert!(equivalent(&a, &b));
        assert!(!equivalent(&a, &c));
    }
}
