//! The process π(G): matrix entries of a normal graph by decomposition.
//!
//! The outer wires are annotated and the graph is taken apart from the
//! boundary inwards. Every part (and every board, seen from outside) is a
//! unit that fires once the wires it emits carry values; it then assigns
//! the wires it absorbs, possibly in several ways (duplicators, δ-parts and
//! boards choose decompositions). Bioriented wires are assigned from both
//! ends and must agree. The value of a branch is the product of the board
//! values met on the way; the process returns the sum over all branches.
//!
//! [`pi_exact`] enumerates every branch. [`pi_mod_p`] works on run-length
//! multisets whose multiplicities are base-`p` numbers and applies the
//! homogeneity shortcuts: a board whose positive gate carries `p^l ≥ p`
//! copies of one element contributes its single inner column (or nothing,
//! when some negative gate is not homogeneous), a δ-part above such a
//! board splits uniquely by division, and a multi-duplicator over a large
//! multiset hands one base-`p` block to each leg.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

use crate::graph::{BoardId, End, Graph, PartId, PartKind, WireId};
use crate::padic::{is_prime, PElem, SymCount};
use crate::semantics::{check_member, Element, Interp};

/// Largest total cardinality [`pi_exact`] accepts by default, and the
/// largest multiset the mod-p engine still decomposes element by element.
pub const DEFAULT_CAP: u64 = 64;

/// Base used for multiplicities in exact mode; counts stay far below it.
const EXACT_BASE: u64 = 1_000_003;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnumError {
    #[error("annotation of total cardinality {total} exceeds the cap {cap}")]
    TooLarge { total: u64, cap: u64 },
    #[error("annotation mismatch: {0}")]
    Annotation(String),
    #[error("graph cannot be decomposed: {0}")]
    Malformed(String),
    #[error("no modular shortcut applies: {0}")]
    Unsupported(String),
    #[error("{0} is not prime")]
    NotPrime(u64),
}

/// A coefficient together with the number of branches the process explored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumResult {
    pub value: BigUint,
    pub branches: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Exact,
    ModP(u64),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Unit {
    Part(PartId),
    Board(BoardId),
}

type Assign = Vec<(WireId, PElem)>;

struct Engine<'g> {
    g: &'g Graph,
    mode: Mode,
    base: u64,
    cap: u64,
    /// Units of every region, computed once.
    units: HashMap<Option<BoardId>, Vec<Unit>>,
    /// (board, gate values, positive value) ↦ inner value.
    column_memo: HashMap<(BoardId, Vec<PElem>, PElem), BigUint>,
    branches: u64,
}

impl<'g> Engine<'g> {
    fn new(g: &'g Graph, mode: Mode, base: u64, cap: u64) -> Self {
        let mut units: HashMap<Option<BoardId>, Vec<Unit>> = HashMap::new();
        for p in g.live_parts() {
            units.entry(g.part(p).region).or_default().push(Unit::Part(p));
        }
        for b in g.live_boards() {
            units.entry(g.board(b).parent).or_default().push(Unit::Board(b));
        }
        Engine { g, mode, base, cap, units, column_memo: HashMap::new(), branches: 0 }
    }

    fn reduce(&self, v: BigUint) -> BigUint {
        match self.mode {
            Mode::Exact => v,
            Mode::ModP(p) => v % p,
        }
    }

    fn small(&self, n: &SymCount) -> Option<u64> {
        n.to_u64().filter(|n| *n <= self.cap)
    }

    fn modp(&self) -> Option<u64> {
        match self.mode {
            Mode::ModP(p) => Some(p),
            Mode::Exact => None,
        }
    }

    // -- regions ------------------------------------------------------------

    /// Sum over all branches of a region whose boundary wires carry `init`.
    fn eval_region(&mut self, region: Option<BoardId>, init: Assign) -> Result<BigUint, EnumError> {
        let mut values: HashMap<WireId, PElem> = HashMap::new();
        for (w, v) in init {
            if !self.store(&mut values, w, v) {
                return Ok(BigUint::zero());
            }
        }
        let units = self.units.get(&region).cloned().unwrap_or_default();
        let done = vec![false; units.len()];
        self.solve(&units, done, values)
    }

    /// Record a value; a second value on a wire must agree with the first.
    fn store(&self, values: &mut HashMap<WireId, PElem>, w: WireId, v: PElem) -> bool {
        match values.get(&w) {
            Some(old) => *old == v,
            None => {
                values.insert(w, v);
                true
            }
        }
    }

    fn solve(
        &mut self,
        units: &[Unit],
        done: Vec<bool>,
        values: HashMap<WireId, PElem>,
    ) -> Result<BigUint, EnumError> {
        if done.iter().all(|d| *d) {
            return Ok(BigUint::one());
        }
        // fire the ready unit with the fewest branches
        let mut best: Option<(usize, Vec<(BigUint, Assign)>)> = None;
        let mut waiting = Vec::new();
        for (i, u) in units.iter().enumerate() {
            if done[i] {
                continue;
            }
            match self.fire(*u, &values)? {
                None => waiting.push(*u),
                Some(branches) => {
                    let better = best.as_ref().is_none_or(|(_, b)| branches.len() < b.len());
                    if better {
                        let stop = branches.len() <= 1;
                        best = Some((i, branches));
                        if stop {
                            break;
                        }
                    }
                }
            }
        }
        let (i, branches) = best.ok_or_else(|| {
            EnumError::Malformed(format!("no unit can fire; waiting: {waiting:?}"))
        })?;
        let mut total = BigUint::zero();
        for (weight, assign) in branches {
            if weight.is_zero() {
                continue;
            }
            self.branches += 1;
            let mut vals = values.clone();
            if !assign.into_iter().all(|(w, v)| self.store(&mut vals, w, v)) {
                continue;
            }
            let mut d = done.clone();
            d[i] = true;
            let rest = self.solve(units, d, vals)?;
            total = self.reduce(total + weight * rest);
        }
        Ok(total)
    }

    /// The branches of a unit, or `None` when it is not ready yet.
    fn fire(&mut self, u: Unit, values: &HashMap<WireId, PElem>) -> Result<Option<Vec<(BigUint, Assign)>>, EnumError> {
        match u {
            Unit::Part(p) => self.fire_part(p, values),
            Unit::Board(b) => {
                let board = self.g.board(b);
                let mut alphas = Vec::new();
                for gate in &board.neg {
                    match values.get(&gate.out) {
                        Some(v) => alphas.push(v.clone()),
                        None => return Ok(None),
                    }
                }
                let Some(beta) = values.get(&board.pos_out).cloned() else { return Ok(None) };
                let v = self.eval_board(b, &alphas, &beta)?;
                Ok(Some(vec![(v, vec![])]))
            }
        }
    }

    fn fire_part(&mut self, p: PartId, values: &HashMap<WireId, PElem>) -> Result<Option<Vec<(BigUint, Assign)>>, EnumError> {
        use PartKind::*;
        let part = self.g.part(p);
        let get = |w: WireId| values.get(&w).cloned();
        let one = |a: Assign| Ok(Some(vec![(BigUint::one(), a)]));
        let fail = || Ok(Some(vec![]));
        let bad = |what: &str, v: &PElem| EnumError::Annotation(format!("{} expects {what}, got {v}", part.kind.name()));
        match part.kind {
            TensorIntro | ParIntro => {
                let Some(v) = get(part.bottom[0]) else { return Ok(None) };
                match v {
                    PElem::Pair(a, b) => one(vec![(part.top[0], *a), (part.top[1], *b)]),
                    other => Err(bad("a pair", &other)),
                }
            }
            TensorElim | ParElim => {
                let Some(v) = get(part.top[0]) else { return Ok(None) };
                match v {
                    PElem::Pair(a, b) => one(vec![(part.bottom[0], *a), (part.bottom[1], *b)]),
                    other => Err(bad("a pair", &other)),
                }
            }
            UnitIntro | CounitIntro | UnitElim | CounitElim => {
                let w = if part.top.is_empty() { part.bottom[0] } else { part.top[0] };
                let Some(v) = get(w) else { return Ok(None) };
                match v {
                    PElem::Star => one(vec![]),
                    other => Err(bad("*", &other)),
                }
            }
            DiodeRight => {
                let Some(v) = get(part.bottom[1]) else { return Ok(None) };
                one(vec![(part.bottom[0], v)])
            }
            DiodeLeft => {
                let Some(v) = get(part.top[0]) else { return Ok(None) };
                one(vec![(part.top[1], v)])
            }
            EpsLens => {
                let Some(v) = get(part.top[0]) else { return Ok(None) };
                let m = v.as_bag().ok_or_else(|| bad("a multiset", &v))?;
                let mut it = m.iter();
                match (it.next(), it.next()) {
                    (Some((x, n)), None) if n.to_u64() == Some(1) => one(vec![(part.bottom[0], x.clone())]),
                    _ => fail(),
                }
            }
            Eliminator => {
                let Some(v) = get(part.top[0]) else { return Ok(None) };
                let m = v.as_bag().ok_or_else(|| bad("a multiset", &v))?;
                if m.is_empty() {
                    one(vec![(part.bottom[0], PElem::Star)])
                } else {
                    fail()
                }
            }
            Duplicator => {
                let Some(v) = get(part.top[0]) else { return Ok(None) };
                let m = v.as_bag().ok_or_else(|| bad("a multiset", &v))?.clone();
                let legs = part.bottom.clone();
                Ok(Some(self.split_duplicator(&m, &legs)?))
            }
            DeltaLens => {
                let Some(v) = get(part.top[0]) else { return Ok(None) };
                let m = v.as_bag().ok_or_else(|| bad("a multiset", &v))?.clone();
                let below = part.bottom[0];
                let Some(target) = self.delta_target(below, values)? else { return Ok(None) };
                let card = m.values().fold(SymCount::zero(self.base), |a, n| a.add(n));
                if self.small(&card).is_none() && !target.positive_known {
                    // the division shortcut needs the positive gate below
                    return Ok(None);
                }
                Ok(Some(self.split_delta(&m, below, target)?))
            }
        }
    }

    // -- duplicators ----------------------------------------------------------

    fn split_duplicator(&mut self, m: &BTreeMap<PElem, SymCount>, legs: &[WireId]) -> Result<Vec<(BigUint, Assign)>, EnumError> {
        let card = m.values().fold(SymCount::zero(self.base), |a, n| a.add(n));
        let mut out = Vec::new();
        if self.small(&card).is_some() {
            // every ordered decomposition γ = γ1 + … + γk
            let items: Vec<(PElem, u64)> = m.iter().map(|(x, n)| (x.clone(), n.to_u64().expect("small"))).collect();
            let mut parts = vec![BTreeMap::new(); legs.len()];
            compositions(&items, 0, &mut parts, self.base, &mut |parts| {
                let assign = legs.iter().zip(parts).map(|(w, b)| (*w, PElem::Bag(b.clone()))).collect();
                out.push((BigUint::one(), assign));
            });
            return Ok(out);
        }
        if self.modp().is_none() {
            return Err(EnumError::TooLarge { total: card.to_u64().unwrap_or(u64::MAX), cap: self.cap });
        }
        // one homogeneous p-power block per leg, in every distinct order
        let mut blocks: BTreeMap<PElem, u64> = BTreeMap::new();
        for (x, n) in m {
            for (e, d) in n.digits() {
                *blocks.entry(PElem::block(x.clone(), SymCount::p_pow(self.base, e.clone()))).or_insert(0) += d;
            }
        }
        let count: u64 = blocks.values().sum();
        if count != legs.len() as u64 {
            return Err(EnumError::Unsupported(format!(
                "a duplicator with {} legs over a multiset made of {count} base-p blocks",
                legs.len()
            )));
        }
        let kinds: Vec<(PElem, u64)> = blocks.into_iter().collect();
        distinct_permutations(&kinds, &mut |perm| {
            let assign = legs.iter().zip(perm).map(|(w, b)| (*w, b.clone())).collect();
            out.push((BigUint::one(), assign));
        });
        Ok(out)
    }

    // -- δ-parts --------------------------------------------------------------

    /// How many summands the multiset above a δ-part splits into: the
    /// cardinality shared by the board below, once it is known.
    fn delta_target(&self, below: WireId, values: &HashMap<WireId, PElem>) -> Result<Option<DeltaTarget>, EnumError> {
        match self.g.wire(below).lower {
            End::NegOut(b, _) => {
                let board = self.g.board(b);
                if let Some(beta) = values.get(&board.pos_out) {
                    let card = beta.cardinality(self.base).ok_or_else(|| EnumError::Annotation(format!("{beta} is not a multiset")))?;
                    let m = beta.as_bag().expect("bag");
                    return Ok(Some(DeltaTarget { n: card, homogeneous: m.len() == 1, positive_known: true }));
                }
                for gate in &board.neg {
                    if let Some(v) = values.get(&gate.out) {
                        if gate.out != below {
                            let card = v.cardinality(self.base).ok_or_else(|| EnumError::Annotation(format!("{v} is not a multiset")))?;
                            return Ok(Some(DeltaTarget { n: card, homogeneous: false, positive_known: false }));
                        }
                    }
                }
                Ok(None)
            }
            End::PartTop(q, _) => match self.g.part(q).kind {
                PartKind::EpsLens => Ok(Some(DeltaTarget { n: SymCount::one(self.base), homogeneous: true, positive_known: true })),
                PartKind::Eliminator => Ok(Some(DeltaTarget { n: SymCount::zero(self.base), homogeneous: true, positive_known: true })),
                k => Err(EnumError::Malformed(format!("δ-part above a {} (graph not normal)", k.name()))),
            },
            other => Err(EnumError::Malformed(format!("δ-part above {other:?}"))),
        }
    }

    fn split_delta(&mut self, m: &BTreeMap<PElem, SymCount>, below: WireId, t: DeltaTarget) -> Result<Vec<(BigUint, Assign)>, EnumError> {
        let card = m.values().fold(SymCount::zero(self.base), |a, n| a.add(n));
        let mut out = Vec::new();
        if self.small(&card).is_some() {
            let items: Vec<(PElem, u64)> = m.iter().map(|(x, n)| (x.clone(), n.to_u64().expect("small"))).collect();
            let base = self.base;
            partitions(&items, base, &mut |blocks| {
                let used = blocks.len() as u64;
                let Some(empties) = t.n.checked_sub(&SymCount::from_u64(used, base)) else { return };
                let mut bag: BTreeMap<PElem, SymCount> = BTreeMap::new();
                for b in blocks {
                    let key = PElem::Bag(b.clone());
                    let v = bag.remove(&key).map_or(SymCount::one(base), |c| c.add(&SymCount::one(base)));
                    bag.insert(key, v);
                }
                if !empties.is_zero() {
                    bag.insert(PElem::empty(), empties);
                }
                out.push((BigUint::one(), vec![(below, PElem::Bag(bag))]));
            });
            return Ok(out);
        }
        if self.modp().is_none() {
            return Err(EnumError::TooLarge { total: card.to_u64().unwrap_or(u64::MAX), cap: self.cap });
        }
        if t.n.is_zero() {
            return Ok(out);
        }
        if t.n.to_u64() == Some(1) {
            out.push((BigUint::one(), vec![(below, PElem::block(PElem::Bag(m.clone()), t.n))]));
            return Ok(out);
        }
        let l = match t.n.p_power_exponent() {
            Some(l) if t.homogeneous => l.clone(),
            _ => {
                return Err(EnumError::Unsupported(format!(
                    "δ-part over a large multiset with {} summands at a non-homogeneous board",
                    t.n
                )))
            }
        };
        let mut share: BTreeMap<PElem, SymCount> = BTreeMap::new();
        for (x, n) in m {
            match n.div_p_power(&l) {
                Some(q) => {
                    share.insert(x.clone(), q);
                }
                None => return Ok(out),
            }
        }
        out.push((BigUint::one(), vec![(below, PElem::block(PElem::Bag(share), t.n))]));
        Ok(out)
    }

    // -- boards ---------------------------------------------------------------

    fn eval_board(&mut self, b: BoardId, alphas: &[PElem], beta: &PElem) -> Result<BigUint, EnumError> {
        let bad = |v: &PElem| EnumError::Annotation(format!("board gate carries {v}, not a multiset"));
        let n = beta.cardinality(self.base).ok_or_else(|| bad(beta))?;
        for a in alphas {
            if a.cardinality(self.base).ok_or_else(|| bad(a))? != n {
                return Ok(BigUint::zero());
            }
        }
        let beta_bag = beta.as_bag().expect("bag");
        if let Some(p) = self.modp() {
            if let (Some(l), true) = (n.p_power_exponent(), beta_bag.len() == 1) {
                if !l.is_zero() {
                    // homogeneous positive gate with p^l ≥ p copies
                    let b_elem = beta_bag.keys().next().expect("one element").clone();
                    let mut column = Vec::with_capacity(alphas.len());
                    for a in alphas {
                        let m = a.as_bag().expect("bag");
                        if m.len() != 1 {
                            return Ok(BigUint::zero());
                        }
                        column.push(m.keys().next().expect("one element").clone());
                    }
                    let v = self.column(b, column, b_elem)?;
                    return Ok(v % p);
                }
            }
        }
        let Some(n) = self.small(&n) else {
            return match self.mode {
                Mode::Exact => Err(EnumError::TooLarge { total: n.to_u64().unwrap_or(u64::MAX), cap: self.cap }),
                Mode::ModP(_) => Err(EnumError::Unsupported(format!("board with {n} copies at a non-homogeneous positive gate"))),
            };
        };
        // explicit sum over matrices whose rows are linear dispositions
        let mut targets = Vec::with_capacity(n as usize);
        for (x, c) in beta_bag {
            for _ in 0..c.to_u64().expect("small") {
                targets.push(x.clone());
            }
        }
        let rows: Vec<Vec<(PElem, u64)>> = alphas
            .iter()
            .map(|a| a.as_bag().expect("bag").iter().map(|(x, c)| (x.clone(), c.to_u64().expect("small"))).collect())
            .collect();
        let mut memo = HashMap::new();
        self.dispositions(b, &targets, 0, rows, &mut memo)
    }

    fn dispositions(
        &mut self,
        b: BoardId,
        targets: &[PElem],
        j: usize,
        rows: Vec<Vec<(PElem, u64)>>,
        memo: &mut HashMap<(usize, Vec<Vec<u64>>), BigUint>,
    ) -> Result<BigUint, EnumError> {
        if j == targets.len() {
            return Ok(BigUint::one());
        }
        let key = (j, rows.iter().map(|r| r.iter().map(|(_, c)| *c).collect()).collect::<Vec<Vec<u64>>>());
        if let Some(v) = memo.get(&key) {
            return Ok(v.clone());
        }
        // choose, in every row, one of the distinct remaining elements
        let mut total = BigUint::zero();
        let mut choice = vec![0usize; rows.len()];
        loop {
            let valid = choice.iter().enumerate().all(|(i, c)| rows[i][*c].1 > 0);
            if valid {
                let column: Vec<PElem> = choice.iter().enumerate().map(|(i, c)| rows[i][*c].0.clone()).collect();
                let inner = self.column(b, column, targets[j].clone())?;
                if !inner.is_zero() {
                    let mut next = rows.clone();
                    for (i, c) in choice.iter().enumerate() {
                        next[i][*c].1 -= 1;
                    }
                    let rest = self.dispositions(b, targets, j + 1, next, memo)?;
                    total = self.reduce(total + inner * rest);
                }
            }
            // advance the mixed-radix counter
            let mut i = 0;
            loop {
                if i == rows.len() {
                    memo.insert(key, total.clone());
                    return Ok(total);
                }
                choice[i] += 1;
                if choice[i] < rows[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    /// π of the inside of a board for one column.
    fn column(&mut self, b: BoardId, column: Vec<PElem>, target: PElem) -> Result<BigUint, EnumError> {
        let key = (b, column, target);
        if let Some(v) = self.column_memo.get(&key) {
            return Ok(v.clone());
        }
        let board = self.g.board(b);
        let mut init: Assign = board.neg.iter().zip(&key.1).map(|(g, v)| (g.inn, v.clone())).collect();
        init.push((board.pos_in, key.2.clone()));
        let v = self.eval_region(Some(b), init)?;
        self.column_memo.insert(key, v.clone());
        Ok(v)
    }
}

#[derive(Clone)]
struct DeltaTarget {
    n: SymCount,
    /// Whether `n` is read off a homogeneous positive gate.
    homogeneous: bool,
    /// Whether the positive gate below is already annotated.
    positive_known: bool,
}

/// A multiset in run-length form.
type Bag = BTreeMap<PElem, SymCount>;

/// Every ordered distribution of `items` (element, count) over the parts.
fn compositions(
    items: &[(PElem, u64)],
    i: usize,
    parts: &mut Vec<BTreeMap<PElem, SymCount>>,
    base: u64,
    emit: &mut dyn FnMut(&[Bag]),
) {
    if i == items.len() {
        emit(parts);
        return;
    }
    let (x, n) = &items[i];
    let k = parts.len();
    if k == 0 {
        return;
    }
    // distribute n copies of x over k parts
    #[allow(clippy::too_many_arguments)]
    fn spread(
        x: &PElem,
        left: u64,
        leg: usize,
        items: &[(PElem, u64)],
        i: usize,
        parts: &mut Vec<BTreeMap<PElem, SymCount>>,
        base: u64,
        emit: &mut dyn FnMut(&[Bag]),
    ) {
        if leg + 1 == parts.len() {
            if left > 0 {
                parts[leg].insert(x.clone(), SymCount::from_u64(left, base));
            }
            compositions(items, i + 1, parts, base, emit);
            parts[leg].remove(x);
            return;
        }
        for c in 0..=left {
            if c > 0 {
                parts[leg].insert(x.clone(), SymCount::from_u64(c, base));
            }
            spread(x, left - c, leg + 1, items, i, parts, base, emit);
            parts[leg].remove(x);
        }
    }
    spread(x, *n, 0, items, i, parts, base, emit);
}

/// Every partition of a multiset into non-empty blocks, each once.
fn partitions(items: &[(PElem, u64)], base: u64, emit: &mut dyn FnMut(&[Bag])) {
    let counts: Vec<u64> = items.iter().map(|(_, n)| *n).collect();
    let mut blocks: Vec<Vec<u64>> = Vec::new();
    fn rec(
        items: &[(PElem, u64)],
        rest: &mut Vec<u64>,
        blocks: &mut Vec<Vec<u64>>,
        base: u64,
        emit: &mut dyn FnMut(&[Bag]),
    ) {
        if rest.iter().all(|c| *c == 0) {
            let bags: Vec<BTreeMap<PElem, SymCount>> = blocks
                .iter()
                .map(|b| {
                    b.iter()
                        .enumerate()
                        .filter(|(_, c)| **c > 0)
                        .map(|(i, c)| (items[i].0.clone(), SymCount::from_u64(*c, base)))
                        .collect()
                })
                .collect();
            emit(&bags);
            return;
        }
        // blocks are listed in non-increasing lexicographic order of their
        // count vectors, which makes every partition appear exactly once
        let bound = blocks.last().cloned();
        let mut cand = vec![0u64; rest.len()];
        loop {
            // advance cand as a mixed-radix counter bounded by rest
            let mut i = cand.len();
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                if cand[i] < rest[i] {
                    cand[i] += 1;
                    for c in cand.iter_mut().skip(i + 1) {
                        *c = 0;
                    }
                    break;
                }
            }
            if let Some(b) = &bound {
                if cand > *b {
                    continue;
                }
            }
            for (r, c) in rest.iter_mut().zip(&cand) {
                *r -= c;
            }
            blocks.push(cand.clone());
            rec(items, rest, blocks, base, emit);
            blocks.pop();
            for (r, c) in rest.iter_mut().zip(&cand) {
                *r += c;
            }
        }
    }
    let mut rest = counts;
    rec(items, &mut rest, &mut blocks, base, emit);
}

/// Every distinct ordering of a multiset given as (element, count).
fn distinct_permutations(kinds: &[(PElem, u64)], emit: &mut dyn FnMut(&[PElem])) {
    let mut left: Vec<u64> = kinds.iter().map(|(_, n)| *n).collect();
    let total: u64 = left.iter().sum();
    let mut current = Vec::with_capacity(total as usize);
    fn rec(kinds: &[(PElem, u64)], left: &mut Vec<u64>, current: &mut Vec<PElem>, total: u64, emit: &mut dyn FnMut(&[PElem])) {
        if current.len() as u64 == total {
            emit(current);
            return;
        }
        for i in 0..kinds.len() {
            if left[i] > 0 {
                left[i] -= 1;
                current.push(kinds[i].0.clone());
                rec(kinds, left, current, total, emit);
                current.pop();
                left[i] += 1;
            }
        }
    }
    rec(kinds, &mut left, &mut current, total, emit);
}

/// Total number of multiset members, nested multisets included.
fn total_cardinality(e: &Element) -> BigUint {
    match e {
        Element::Atom(_) | Element::Star => BigUint::zero(),
        Element::Pair(a, b) => total_cardinality(a) + total_cardinality(b),
        Element::Bar(a) => total_cardinality(a),
        Element::MSet(m) => m.iter().map(|(x, n)| n * (BigUint::one() + total_cardinality(x))).sum(),
    }
}

fn check_annotation(g: &Graph, top: &[Element], bottom: &[Element], interp: Option<&Interp>) -> Result<(), EnumError> {
    let (tt, bt) = g.boundary_types();
    if tt.len() != top.len() || bt.len() != bottom.len() {
        return Err(EnumError::Annotation(format!(
            "graph has {} top and {} bottom wires, annotation {} and {}",
            tt.len(),
            bt.len(),
            top.len(),
            bottom.len()
        )));
    }
    if let Some(interp) = interp {
        for (e, t) in top.iter().zip(&tt).chain(bottom.iter().zip(&bt)) {
            check_member(e, t, interp).map_err(|err| EnumError::Annotation(err.to_string()))?;
        }
    }
    Ok(())
}

fn boundary_assign(g: &Graph, top: Vec<PElem>, bottom: Vec<PElem>) -> Assign {
    g.top.iter().copied().zip(top).chain(g.bottom.iter().copied().zip(bottom)).collect()
}

/// `M[top; bottom]` of a normal graph, by full enumeration.
pub fn pi_exact(g: &Graph, top: &[Element], bottom: &[Element], interp: Option<&Interp>) -> Result<BigUint, EnumError> {
    pi_exact_with(g, top, bottom, interp, DEFAULT_CAP).map(|r| r.value)
}

/// [`pi_exact`] with an explicit cardinality cap and branch statistics.
pub fn pi_exact_with(
    g: &Graph,
    top: &[Element],
    bottom: &[Element],
    interp: Option<&Interp>,
    cap: u64,
) -> Result<EnumResult, EnumError> {
    check_annotation(g, top, bottom, interp)?;
    let total: BigUint = top.iter().chain(bottom).map(total_cardinality).sum();
    if total > BigUint::from(cap) {
        return Err(EnumError::TooLarge { total: total.to_u64().unwrap_or(u64::MAX), cap });
    }
    let conv = |xs: &[Element]| xs.iter().map(|e| PElem::from_element(e, EXACT_BASE).unbarred()).collect::<Vec<_>>();
    let mut engine = Engine::new(g, Mode::Exact, EXACT_BASE, cap);
    let value = engine.eval_region(None, boundary_assign(g, conv(top), conv(bottom)))?;
    Ok(EnumResult { value, branches: engine.branches })
}

/// `M[top; bottom] mod p` of a normal graph, on run-length annotations
/// whose multiplicities are written in base `p`.
pub fn pi_mod_p(g: &Graph, top: &[PElem], bottom: &[PElem], p: u64, interp: Option<&Interp>) -> Result<u64, EnumError> {
    pi_mod_p_with(g, top, bottom, p, interp).map(|r| r.value.to_u64().expect("residue"))
}

/// [`pi_mod_p`] with branch statistics.
pub fn pi_mod_p_with(g: &Graph, top: &[PElem], bottom: &[PElem], p: u64, interp: Option<&Interp>) -> Result<EnumResult, EnumError> {
    if !is_prime(p) {
        return Err(EnumError::NotPrime(p));
    }
    let (tt, bt) = g.boundary_types();
    if tt.len() != top.len() || bt.len() != bottom.len() {
        return Err(EnumError::Annotation("annotation arity differs from the boundary".into()));
    }
    if let Some(interp) = interp {
        for (e, t) in top.iter().zip(&tt).chain(bottom.iter().zip(&bt)) {
            if let Some(el) = e.to_element(16) {
                check_member(&el, t, interp).map_err(|err| EnumError::Annotation(err.to_string()))?;
            }
        }
    }
    for e in top.iter().chain(bottom) {
        if !uses_base(e, p) {
            return Err(EnumError::Annotation(format!("multiplicities of {e} are not written in base {p}")));
        }
    }
    let un = |xs: &[PElem]| xs.iter().map(|e| e.unbarred()).collect::<Vec<_>>();
    let mut engine = Engine::new(g, Mode::ModP(p), p, DEFAULT_CAP);
    let value = engine.eval_region(None, boundary_assign(g, un(top), un(bottom)))?;
    Ok(EnumResult { value, branches: engine.branches })
}

fn uses_base(e: &PElem, p: u64) -> bool {
    match e {
        PElem::Atom(_) | PElem::Star => true,
        PElem::Pair(a, b) => uses_base(a, p) && uses_base(b, p),
        PElem::Bar(a) => uses_base(a, p),
        PElem::Bag(m) => m.iter().all(|(x, n)| n.base() == p && uses_base(x, p)),
    }
}

/// `a^(p^l) mod p`, which Fermat's little theorem makes `a mod p`.
pub fn pow_reduce(a: &BigUint, l: u32, p: u64) -> Result<u64, EnumError> {
    if !is_prime(p) {
        return Err(EnumError::NotPrime(p));
    }
    let pb = BigUint::from(p);
    // reduce the exponent modulo p - 1 (for a coprime to p) without
    // materializing p^l; a ≡ 0 stays 0
    let a = a % &pb;
    if a.is_zero() {
        return Ok(0);
    }
    let e = BigUint::from(p).modpow(&BigUint::from(l), &BigUint::from(p - 1));
    let e = if e.is_zero() { BigUint::from(p - 1) } else { e };
    Ok(a.modpow(&e, &pb).to_u64().expect("residue"))
}

/// `C(n, j) mod p` by Lucas' theorem.
pub fn binom_mod(n: u64, j: u64, p: u64) -> Result<u64, EnumError> {
    if !is_prime(p) {
        return Err(EnumError::NotPrime(p));
    }
    if j > n {
        return Ok(0);
    }
    let (mut n, mut j) = (n, j);
    let mut acc: u64 = 1;
    while n > 0 || j > 0 {
        let (nd, jd) = (n % p, j % p);
        if jd > nd {
            return Ok(0);
        }
        // small binomial modulo p by multiplicative formula
        let mut c: u128 = 1;
        for i in 0..jd {
            c = c * ((nd - i) as u128) % p as u128;
            c = c * inverse(i + 1, p) as u128 % p as u128;
        }
        acc = (acc as u128 * c % p as u128) as u64;
        n /= p;
        j /= p;
    }
    Ok(acc)
}

fn inverse(a: u64, p: u64) -> u64 {
    BigUint::from(a).modpow(&BigUint::from(p - 2), &BigUint::from(p)).to_u64().expect("residue")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fermat_and_lucas() {
        assert_eq!(pow_reduce(&BigUint::from(2u32), 1, 3).unwrap(), 2);
        assert_eq!(pow_reduce(&BigUint::from(10u32), 5, 7).unwrap(), 3);
        assert_eq!(binom_mod(9, 3, 3).unwrap(), 0);
        assert_eq!(binom_mod(9, 0, 3).unwrap(), 1);
        assert_eq!(binom_mod(10, 3, 7).unwrap(), 120 % 7);
        assert!(binom_mod(9, 3, 4).is_err());
    }

    #[test]
    fn partitions_are_listed_once() {
        let x = PElem::atom("x");
        let y = PElem::atom("y");
        let mut seen = Vec::new();
        partitions(&[(x, 2), (y, 1)], EXACT_BASE, &mut |b| seen.push(b.len()));
        // {xxy}, {xx}{y}, {xy}{x}, {x}{x}{y}
        seen.sort();
        assert_eq!(seen, vec![1, 2, 2, 3]);
    }

    #[test]
    fn compositions_are_ordered() {
        let mut n = 0;
        let mut parts = vec![BTreeMap::new(); 2];
        compositions(&[(PElem::atom("x"), 2), (PElem::atom("y"), 1)], 0, &mut parts, EXACT_BASE, &mut |_| n += 1);
        assert_eq!(n, 6);
    }

    #[test]
    fn distinct_orders() {
        let mut n = 0;
        distinct_permutations(&[(PElem::atom("x"), 2), (PElem::atom("y"), 1)], &mut |_| n += 1);
        assert_eq!(n, 3);
    }
}
