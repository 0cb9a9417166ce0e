//! Two-sided proof-net graphs with boards.
//!
//! A graph is an arena of *wires*, *parts* and *boards*. Every wire has an
//! upper and a lower end; each end is attached to a part port, a board
//! gate, or the outer boundary. A board is a box with any number of
//! negative gates (premises `!A` outside, `A` inside) and one positive gate
//! (conclusion `!B` outside, `B` inside); its interior is the set of wires,
//! parts and boards whose `region` is the board.
//!
//! Each wire end either *emits* or *absorbs* flow. In a normal graph every
//! wire of compound type has exactly one emitting end, and atomic wires
//! absorb at both ends. A wire emitting at both ends is a β-redex; a
//! compound wire absorbing at both ends still needs η-expansion. Both
//! normal-form procedures below are driven by this one classification.

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

use crate::syntax::{parse_type_with, Generator, Judgement, Signature, Term, TypeExpr};

pub type WireId = usize;
pub type PartId = usize;
pub type BoardId = usize;
pub type GateId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("term contains a metavariable")]
    OpenTerm,
    #[error("malformed graph: {0}")]
    Malformed(String),
    #[error("graph JSON: {0}")]
    Json(String),
    #[error("normalization exceeded {0} steps")]
    Fuel(usize),
}

/// The kinds of parts.
///
/// `DiodeRight` is the duality introduction (a cap, bottom ports
/// `[A, A*]`); `DiodeLeft` is the duality elimination (a cup, top ports
/// `[A*, A]`). A `Duplicator` has one top port and two or more legs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartKind {
    TensorIntro,
    TensorElim,
    ParIntro,
    ParElim,
    UnitIntro,
    UnitElim,
    CounitIntro,
    CounitElim,
    DiodeRight,
    DiodeLeft,
    DeltaLens,
    EpsLens,
    Duplicator,
    Eliminator,
}

impl PartKind {
    pub fn name(self) -> &'static str {
        use PartKind::*;
        match self {
            TensorIntro => "tensor-intro",
            TensorElim => "tensor-elim",
            ParIntro => "par-intro",
            ParElim => "par-elim",
            UnitIntro => "unit-intro",
            UnitElim => "unit-elim",
            CounitIntro => "counit-intro",
            CounitElim => "counit-elim",
            DiodeRight => "cap",
            DiodeLeft => "cup",
            DeltaLens => "delta",
            EpsLens => "eps",
            Duplicator => "dup",
            Eliminator => "weak",
        }
    }

    /// Is this one of the four unit terminals?
    pub fn is_terminal(self) -> bool {
        use PartKind::*;
        matches!(self, UnitIntro | UnitElim | CounitIntro | CounitElim)
    }

    /// The exponential parts δ, ε, d, e: they sit on top of a `!` wire.
    pub fn is_lens(self) -> bool {
        use PartKind::*;
        matches!(self, DeltaLens | EpsLens | Duplicator | Eliminator)
    }
}

/// Where one end of a wire is attached.
///
/// `PartTop(p, i)` means the wire enters top port `i` of part `p` (so it
/// is the wire's lower end); `PartBottom(p, i)` is the wire's upper end at
/// bottom port `i`. Gate ends carry the board and the stable gate id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum End {
    Open,
    Top(usize),
    Bottom(usize),
    PartTop(PartId, usize),
    PartBottom(PartId, usize),
    NegOut(BoardId, GateId),
    NegIn(BoardId, GateId),
    PosOut(BoardId),
    PosIn(BoardId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wire {
    pub ty: TypeExpr,
    pub region: Option<BoardId>,
    pub upper: End,
    pub lower: End,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Part {
    pub kind: PartKind,
    pub region: Option<BoardId>,
    pub top: Vec<WireId>,
    pub bottom: Vec<WireId>,
    /// A unit terminal may be linked to one wire of its region; the link
    /// only matters for the switching check and is ignored by comparison.
    pub dotted: Option<WireId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub id: GateId,
    pub out: WireId,
    pub inn: WireId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Board {
    pub parent: Option<BoardId>,
    pub neg: Vec<Gate>,
    pub pos_in: WireId,
    pub pos_out: WireId,
}

/// How flow runs through a wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    /// Emitted at the upper end, absorbed at the lower end.
    Down,
    /// Emitted at the lower end, absorbed at the upper end.
    Up,
    /// Absorbed at both ends (a bioriented atomic wire, or an η-redex).
    Source,
    /// Emitted at both ends (a β-redex).
    Clash,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Graph {
    pub wires: Vec<Option<Wire>>,
    pub parts: Vec<Option<Part>>,
    pub boards: Vec<Option<Board>>,
    pub top: Vec<WireId>,
    pub bottom: Vec<WireId>,
    next_gate: GateId,
}

/// Summary statistics of a graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    /// Number of wires.
    pub size: usize,
    /// `Π n!` over the multi-duplicators (`n` legs each).
    pub dup_scale: BigUint,
    pub board_count: usize,
    /// Number of atomic wires.
    pub bioriented_count: usize,
}

/// Result of [`Graph::check_wellformed`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellformedReport {
    pub violations: Vec<String>,
    /// Number of switchings examined per region, summed.
    pub switchings_checked: usize,
}

impl WellformedReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Order in which β-redexes are contracted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RedexOrder {
    /// Always the redex on the lowest-numbered wire.
    Leftmost,
    /// A uniformly random redex, from the given seed.
    Random(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Redex {
    /// ⊗ or ⅋ introduction directly above the matching elimination.
    Cut(WireId),
    /// A unit (or counit) introduction directly above its elimination.
    UnitCut(WireId),
    /// A cap's dual leg entering a cup's dual leg.
    Yank(WireId),
    /// A board's conclusion entering another board's premise.
    Fusion(WireId),
    /// A board's conclusion entering δ, ε, d or e.
    BoxLens(WireId),
    /// δ directly above δ, ε, d or e, or above a gate whose inner wire
    /// enters ε, d or e.
    DeltaLens(WireId),
    /// A duplicator leg entering e.
    LegWeak(WireId),
    /// A duplicator leg entering another duplicator.
    LegDup(WireId),
}

// ---------------------------------------------------------------------------
// Arena primitives
// ---------------------------------------------------------------------------

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn wire(&self, w: WireId) -> &Wire {
        self.wires[w].as_ref().expect("live wire")
    }
    fn wire_mut(&mut self, w: WireId) -> &mut Wire {
        self.wires[w].as_mut().expect("live wire")
    }
    pub fn part(&self, p: PartId) -> &Part {
        self.parts[p].as_ref().expect("live part")
    }
    fn part_mut(&mut self, p: PartId) -> &mut Part {
        self.parts[p].as_mut().expect("live part")
    }
    pub fn board(&self, b: BoardId) -> &Board {
        self.boards[b].as_ref().expect("live board")
    }
    fn board_mut(&mut self, b: BoardId) -> &mut Board {
        self.boards[b].as_mut().expect("live board")
    }

    pub fn live_wires(&self) -> impl Iterator<Item = WireId> + '_ {
        self.wires.iter().enumerate().filter(|(_, w)| w.is_some()).map(|(i, _)| i)
    }
    pub fn live_parts(&self) -> impl Iterator<Item = PartId> + '_ {
        self.parts.iter().enumerate().filter(|(_, p)| p.is_some()).map(|(i, _)| i)
    }
    pub fn live_boards(&self) -> impl Iterator<Item = BoardId> + '_ {
        self.boards.iter().enumerate().filter(|(_, b)| b.is_some()).map(|(i, _)| i)
    }

    pub fn gate(&self, b: BoardId, g: GateId) -> &Gate {
        self.board(b).neg.iter().find(|x| x.id == g).expect("live gate")
    }
    fn gate_mut(&mut self, b: BoardId, g: GateId) -> &mut Gate {
        self.board_mut(b).neg.iter_mut().find(|x| x.id == g).expect("live gate")
    }

    /// Boards enclosing a region, innermost first.
    pub fn enclosing(&self, region: Option<BoardId>) -> Vec<BoardId> {
        let mut out = Vec::new();
        let mut r = region;
        while let Some(b) = r {
            out.push(b);
            r = self.board(b).parent;
        }
        out
    }

    fn add_wire(&mut self, ty: TypeExpr, region: Option<BoardId>) -> WireId {
        self.wires.push(Some(Wire { ty, region, upper: End::Open, lower: End::Open }));
        self.wires.len() - 1
    }

    fn add_part(&mut self, kind: PartKind, region: Option<BoardId>, top: Vec<WireId>, bottom: Vec<WireId>) -> PartId {
        let p = self.parts.len();
        self.parts.push(Some(Part { kind, region, top: top.clone(), bottom: bottom.clone(), dotted: None }));
        for (i, w) in top.into_iter().enumerate() {
            self.wire_mut(w).lower = End::PartTop(p, i);
        }
        for (i, w) in bottom.into_iter().enumerate() {
            self.wire_mut(w).upper = End::PartBottom(p, i);
        }
        p
    }

    fn add_terminal(&mut self, kind: PartKind, region: Option<BoardId>, w: WireId, dotted: Option<WireId>) -> PartId {
        let p = match kind {
            PartKind::UnitIntro | PartKind::CounitIntro => self.add_part(kind, region, vec![], vec![w]),
            _ => self.add_part(kind, region, vec![w], vec![]),
        };
        self.part_mut(p).dotted = dotted;
        p
    }

    fn fresh_gate(&mut self) -> GateId {
        self.next_gate += 1;
        self.next_gate - 1
    }

    /// Push a board; `gates` are `(out, inner)` wire pairs.
    fn add_board(&mut self, parent: Option<BoardId>, gates: Vec<(WireId, WireId)>, pos_in: WireId, pos_out: WireId) -> BoardId {
        let b = self.boards.len();
        let mut neg = Vec::new();
        for (out, inn) in gates {
            let id = self.fresh_gate();
            neg.push(Gate { id, out, inn });
        }
        self.boards.push(Some(Board { parent, neg: neg.clone(), pos_in, pos_out }));
        for g in neg {
            self.wire_mut(g.out).lower = End::NegOut(b, g.id);
            self.wire_mut(g.inn).upper = End::NegIn(b, g.id);
        }
        self.wire_mut(pos_in).lower = End::PosIn(b);
        self.wire_mut(pos_out).upper = End::PosOut(b);
        b
    }

    /// Make the owner of `end` refer to wire `w`.
    fn point(&mut self, end: End, w: WireId) {
        match end {
            End::Open => {}
            End::Top(i) => self.top[i] = w,
            End::Bottom(i) => self.bottom[i] = w,
            End::PartTop(p, i) => self.part_mut(p).top[i] = w,
            End::PartBottom(p, i) => self.part_mut(p).bottom[i] = w,
            End::NegOut(b, g) => self.gate_mut(b, g).out = w,
            End::NegIn(b, g) => self.gate_mut(b, g).inn = w,
            End::PosOut(b) => self.board_mut(b).pos_out = w,
            End::PosIn(b) => self.board_mut(b).pos_in = w,
        }
    }

    fn set_lower(&mut self, w: WireId, end: End) {
        self.wire_mut(w).lower = end;
        self.point(end, w);
    }

    fn set_upper(&mut self, w: WireId, end: End) {
        self.wire_mut(w).upper = end;
        self.point(end, w);
    }

    /// Delete a wire, moving dotted links that land on it to `replacement`.
    fn kill_wire(&mut self, w: WireId, replacement: Option<WireId>) {
        for p in self.parts.iter_mut().flatten() {
            if p.dotted == Some(w) {
                p.dotted = replacement;
            }
        }
        self.wires[w] = None;
    }

    fn kill_part(&mut self, p: PartId) {
        self.parts[p] = None;
    }

    /// Join `up` (whose lower end is being discarded) with `down` (whose
    /// upper end is being discarded). The result keeps the id of `up`, the
    /// upper end of `up` and the lower end of `down`.
    fn fuse(&mut self, up: WireId, down: WireId) -> WireId {
        assert_ne!(up, down, "fusing a wire with itself");
        let lower = self.wire(down).lower;
        self.kill_wire(down, Some(up));
        self.set_lower(up, lower);
        up
    }

    /// Re-point every port of a duplicator after its leg list changed.
    fn relink_bottoms(&mut self, p: PartId) {
        let legs = self.part(p).bottom.clone();
        for (i, w) in legs.into_iter().enumerate() {
            self.wire_mut(w).upper = End::PartBottom(p, i);
        }
    }

    // -----------------------------------------------------------------------
    // Flow
    // -----------------------------------------------------------------------

    /// Does flow leave through this upper wire end?
    pub fn upper_emits(&self, end: End) -> bool {
        use PartKind::*;
        match end {
            End::PartBottom(p, i) => match self.part(p).kind {
                TensorIntro | ParIntro | UnitIntro | CounitIntro => true,
                DiodeRight => i == 1,
                _ => false,
            },
            End::PosOut(_) => true,
            _ => false,
        }
    }

    /// Does flow leave through this lower wire end?
    pub fn lower_emits(&self, end: End) -> bool {
        use PartKind::*;
        match end {
            End::PartTop(p, i) => match self.part(p).kind {
                TensorElim | ParElim | UnitElim | CounitElim | DeltaLens | EpsLens | Duplicator | Eliminator => true,
                DiodeLeft => i == 0,
                _ => false,
            },
            End::NegOut(..) => true,
            _ => false,
        }
    }

    pub fn flow(&self, w: WireId) -> Flow {
        let wr = self.wire(w);
        match (self.upper_emits(wr.upper), self.lower_emits(wr.lower)) {
            (true, false) => Flow::Down,
            (false, true) => Flow::Up,
            (false, false) => Flow::Source,
            (true, true) => Flow::Clash,
        }
    }

    // -----------------------------------------------------------------------
    // Statistics
    // -----------------------------------------------------------------------

    pub fn stats(&self) -> GraphStats {
        let mut dup_scale = BigUint::from(1u32);
        for p in self.parts.iter().flatten() {
            if p.kind == PartKind::Duplicator {
                for k in 2..=p.bottom.len() {
                    dup_scale *= k as u32;
                }
            }
        }
        GraphStats {
            size: self.live_wires().count(),
            dup_scale,
            board_count: self.live_boards().count(),
            bioriented_count: self.wires.iter().flatten().filter(|w| w.ty.is_atomic()).count(),
        }
    }

    /// The boundary types `(top, bottom)`.
    pub fn boundary_types(&self) -> (Vec<TypeExpr>, Vec<TypeExpr>) {
        (
            self.top.iter().map(|w| self.wire(*w).ty.clone()).collect(),
            self.bottom.iter().map(|w| self.wire(*w).ty.clone()).collect(),
        )
    }
}

// ---------------------------------------------------------------------------
// Incremental construction (used when a graph is rebuilt from forms)
// ---------------------------------------------------------------------------

/// Placeholder for a port whose wire is not attached yet.
pub(crate) const UNSET: usize = usize::MAX;

impl Graph {
    pub(crate) fn new_wire(&mut self, ty: TypeExpr, region: Option<BoardId>) -> WireId {
        self.add_wire(ty, region)
    }

    /// A part whose ports are attached later with [`Graph::attach_upper`] and
    /// [`Graph::attach_lower`].
    pub(crate) fn new_part_shell(&mut self, kind: PartKind, region: Option<BoardId>, ntop: usize, nbottom: usize) -> PartId {
        self.parts.push(Some(Part { kind, region, top: vec![UNSET; ntop], bottom: vec![UNSET; nbottom], dotted: None }));
        self.parts.len() - 1
    }

    pub(crate) fn new_board_shell(&mut self, parent: Option<BoardId>) -> BoardId {
        self.boards.push(Some(Board { parent, neg: vec![], pos_in: UNSET, pos_out: UNSET }));
        self.boards.len() - 1
    }

    pub(crate) fn new_gate(&mut self, b: BoardId) -> GateId {
        let id = self.fresh_gate();
        self.board_mut(b).neg.push(Gate { id, out: UNSET, inn: UNSET });
        id
    }

    pub(crate) fn attach_upper(&mut self, w: WireId, end: End) {
        self.set_upper(w, end);
    }

    pub(crate) fn attach_lower(&mut self, w: WireId, end: End) {
        self.set_lower(w, end);
    }

    pub(crate) fn set_dotted(&mut self, p: PartId, host: Option<WireId>) {
        self.part_mut(p).dotted = host;
    }

    /// Does every port refer to a live wire whose end points back?
    pub(crate) fn fully_attached(&self) -> bool {
        self.live_wires().all(|w| {
            let x = self.wire(w);
            x.upper != End::Open && x.lower != End::Open
        }) && self.parts.iter().flatten().all(|p| !p.top.contains(&UNSET) && !p.bottom.contains(&UNSET))
            && self.boards.iter().flatten().all(|b| {
                b.pos_in != UNSET && b.pos_out != UNSET && b.neg.iter().all(|g| g.out != UNSET && g.inn != UNSET)
            })
            && !self.top.contains(&UNSET)
            && !self.bottom.contains(&UNSET)
    }
}

// ---------------------------------------------------------------------------
// Terms to graphs
// ---------------------------------------------------------------------------

/// Translate a closed, typed term into a (not yet normal) graph with one
/// top wire (the source) and one bottom wire (the target).
pub fn term_to_graph(j: &Judgement) -> Result<Graph, GraphError> {
    let mut g = Graph::new();
    let (t, b) = g.build(&j.term)?;
    g.top = vec![t];
    g.bottom = vec![b];
    g.wire_mut(t).upper = End::Top(0);
    g.wire_mut(b).lower = End::Bottom(0);
    Ok(g)
}

impl Graph {
    fn ty(&self, w: WireId) -> TypeExpr {
        self.wire(w).ty.clone()
    }

    fn build(&mut self, t: &Term) -> Result<(WireId, WireId), GraphError> {
        match t {
            Term::Id(a) => {
                let w = self.add_wire(a.clone(), None);
                Ok((w, w))
            }
            Term::Var(..) => Err(GraphError::OpenTerm),
            Term::Comp(f, g) => {
                let (ft, fb) = self.build(f)?;
                let (gt, gb) = self.build(g)?;
                let bottom = if gt == gb { fb } else { gb };
                self.fuse(fb, gt);
                Ok((ft, bottom))
            }
            Term::Tensor(f, g) | Term::Par(f, g) => {
                let tensor = matches!(t, Term::Tensor(..));
                let (ft, fb) = self.build(f)?;
                let (gt, gb) = self.build(g)?;
                let (mk, elim, intro) = if tensor {
                    (TypeExpr::tensor as fn(TypeExpr, TypeExpr) -> TypeExpr, PartKind::TensorElim, PartKind::TensorIntro)
                } else {
                    (TypeExpr::par as fn(TypeExpr, TypeExpr) -> TypeExpr, PartKind::ParElim, PartKind::ParIntro)
                };
                let top = self.add_wire(mk(self.ty(ft), self.ty(gt)), None);
                let bot = self.add_wire(mk(self.ty(fb), self.ty(gb)), None);
                self.add_part(elim, None, vec![top], vec![ft, gt]);
                self.add_part(intro, None, vec![fb, gb], vec![bot]);
                Ok((top, bot))
            }
            Term::Bang(f) => {
                let (nw, np, nb) = (self.wires.len(), self.parts.len(), self.boards.len());
                let (ft, fb) = self.build(f)?;
                let b = self.boards.len();
                for w in self.wires[nw..].iter_mut().flatten() {
                    if w.region.is_none() {
                        w.region = Some(b);
                    }
                }
                for p in self.parts[np..].iter_mut().flatten() {
                    if p.region.is_none() {
                        p.region = Some(b);
                    }
                }
                for x in self.boards[nb..].iter_mut().flatten() {
                    if x.parent.is_none() {
                        x.parent = Some(b);
                    }
                }
                let top = self.add_wire(TypeExpr::bang(self.ty(ft)), None);
                let bot = self.add_wire(TypeExpr::bang(self.ty(fb)), None);
                let id = self.add_board(None, vec![(top, ft)], fb, bot);
                debug_assert_eq!(id, b);
                Ok((top, bot))
            }
            Term::Gen(g, args) => Ok(self.generator(*g, args)),
        }
    }

    fn generator(&mut self, g: Generator, args: &[TypeExpr]) -> (WireId, WireId) {
        use Generator::*;
        use PartKind as K;
        use TypeExpr as T;
        let (src, tgt) = g.typing(args);
        let a = |i: usize| args[i].clone();
        let top = self.add_wire(src.clone(), None);
        match g {
            Delta | Eps | Weak => {
                let bot = self.add_wire(tgt, None);
                let kind = match g {
                    Delta => K::DeltaLens,
                    Eps => K::EpsLens,
                    _ => K::Eliminator,
                };
                self.add_part(kind, None, vec![top], vec![bot]);
                (top, bot)
            }
            Dup => {
                let l1 = self.add_wire(src.clone(), None);
                let l2 = self.add_wire(src, None);
                let bot = self.add_wire(tgt, None);
                self.add_part(K::Duplicator, None, vec![top], vec![l1, l2]);
                self.add_part(K::TensorIntro, None, vec![l1, l2], vec![bot]);
                (top, bot)
            }
            PhiT => {
                let x = self.add_wire(T::bang(a(0)), None);
                let y = self.add_wire(T::bang(a(1)), None);
                self.add_part(K::TensorElim, None, vec![top], vec![x, y]);
                let b = self.boards.len();
                let xi = self.add_wire(a(0), Some(b));
                let yi = self.add_wire(a(1), Some(b));
                let xy = self.add_wire(T::tensor(a(0), a(1)), Some(b));
                self.add_part(K::TensorIntro, Some(b), vec![xi, yi], vec![xy]);
                let bot = self.add_wire(tgt, None);
                self.add_board(None, vec![(x, xi), (y, yi)], xy, bot);
                (top, bot)
            }
            Phi0 => {
                let b = self.boards.len();
                let u = self.add_wire(T::One, Some(b));
                self.add_terminal(K::UnitIntro, Some(b), u, None);
                let bot = self.add_wire(tgt, None);
                self.add_board(None, vec![], u, bot);
                self.add_terminal(K::UnitElim, None, top, Some(bot));
                (top, bot)
            }
            Dist | DistP => {
                // dist:  A ⊗ (B ⅋ C) → (A ⊗ B) ⅋ C
                // dist': (A ⅋ B) ⊗ C → A ⅋ (B ⊗ C)
                let (x, y, z) = (self.add_wire(a(0), None), self.add_wire(a(1), None), self.add_wire(a(2), None));
                let bot = self.add_wire(tgt, None);
                if g == Dist {
                    let yz = self.add_wire(T::par(a(1), a(2)), None);
                    self.add_part(K::TensorElim, None, vec![top], vec![x, yz]);
                    self.add_part(K::ParElim, None, vec![yz], vec![y, z]);
                    let xy = self.add_wire(T::tensor(a(0), a(1)), None);
                    self.add_part(K::TensorIntro, None, vec![x, y], vec![xy]);
                    self.add_part(K::ParIntro, None, vec![xy, z], vec![bot]);
                } else {
                    let xy = self.add_wire(T::par(a(0), a(1)), None);
                    self.add_part(K::TensorElim, None, vec![top], vec![xy, z]);
                    self.add_part(K::ParElim, None, vec![xy], vec![x, y]);
                    let yz = self.add_wire(T::tensor(a(1), a(2)), None);
                    self.add_part(K::TensorIntro, None, vec![y, z], vec![yz]);
                    self.add_part(K::ParIntro, None, vec![x, yz], vec![bot]);
                }
                (top, bot)
            }
            Tau => {
                let plain = self.add_wire(a(0), None);
                let dual = self.add_wire(T::dual(a(0)), None);
                self.add_terminal(K::UnitElim, None, top, Some(plain));
                self.add_part(K::DiodeRight, None, vec![], vec![plain, dual]);
                let bot = self.add_wire(tgt, None);
                self.add_part(K::ParIntro, None, vec![plain, dual], vec![bot]);
                (top, bot)
            }
            Gamma => {
                let dual = self.add_wire(T::dual(a(0)), None);
                let plain = self.add_wire(a(0), None);
                self.add_part(K::TensorElim, None, vec![top], vec![dual, plain]);
                self.add_part(K::DiodeLeft, None, vec![dual, plain], vec![]);
                let bot = self.add_wire(tgt, None);
                self.add_terminal(K::CounitIntro, None, bot, Some(plain));
                (top, bot)
            }
            AssocT | AssocTInv | AssocP | AssocPInv => {
                let tensor = matches!(g, AssocT | AssocTInv);
                let (elim, intro, mk): (_, _, fn(TypeExpr, TypeExpr) -> TypeExpr) = if tensor {
                    (K::TensorElim, K::TensorIntro, T::tensor)
                } else {
                    (K::ParElim, K::ParIntro, T::par)
                };
                let (x, y, z) = (self.add_wire(a(0), None), self.add_wire(a(1), None), self.add_wire(a(2), None));
                let bot = self.add_wire(tgt, None);
                if matches!(g, AssocT | AssocP) {
                    // ((x y) z) → (x (y z))
                    let xy = self.add_wire(mk(a(0), a(1)), None);
                    self.add_part(elim, None, vec![top], vec![xy, z]);
                    self.add_part(elim, None, vec![xy], vec![x, y]);
                    let yz = self.add_wire(mk(a(1), a(2)), None);
                    self.add_part(intro, None, vec![y, z], vec![yz]);
                    self.add_part(intro, None, vec![x, yz], vec![bot]);
                } else {
                    let yz = self.add_wire(mk(a(1), a(2)), None);
                    self.add_part(elim, None, vec![top], vec![x, yz]);
                    self.add_part(elim, None, vec![yz], vec![y, z]);
                    let xy = self.add_wire(mk(a(0), a(1)), None);
                    self.add_part(intro, None, vec![x, y], vec![xy]);
                    self.add_part(intro, None, vec![xy, z], vec![bot]);
                }
                (top, bot)
            }
            SymT | SymP => {
                let (elim, intro) =
                    if g == SymT { (K::TensorElim, K::TensorIntro) } else { (K::ParElim, K::ParIntro) };
                let (x, y) = (self.add_wire(a(0), None), self.add_wire(a(1), None));
                let bot = self.add_wire(tgt, None);
                self.add_part(elim, None, vec![top], vec![x, y]);
                self.add_part(intro, None, vec![y, x], vec![bot]);
                (top, bot)
            }
            ShufT => {
                let w: Vec<WireId> = (0..4).map(|i| self.add_wire(a(i), None)).collect();
                let ab = self.add_wire(T::tensor(a(0), a(1)), None);
                let cd = self.add_wire(T::tensor(a(2), a(3)), None);
                let ac = self.add_wire(T::tensor(a(0), a(2)), None);
                let bd = self.add_wire(T::tensor(a(1), a(3)), None);
                let bot = self.add_wire(tgt, None);
                self.add_part(K::TensorElim, None, vec![top], vec![ab, cd]);
                self.add_part(K::TensorElim, None, vec![ab], vec![w[0], w[1]]);
                self.add_part(K::TensorElim, None, vec![cd], vec![w[2], w[3]]);
                self.add_part(K::TensorIntro, None, vec![w[0], w[2]], vec![ac]);
                self.add_part(K::TensorIntro, None, vec![w[1], w[3]], vec![bd]);
                self.add_part(K::TensorIntro, None, vec![ac, bd], vec![bot]);
                (top, bot)
            }
            LUnitT | RUnitT | LUnitP | RUnitP => {
                let (elim, term, unit) = match g {
                    LUnitT | RUnitT => (K::TensorElim, K::UnitElim, T::One),
                    _ => (K::ParElim, K::CounitElim, T::Bot),
                };
                let u = self.add_wire(unit, None);
                let x = self.add_wire(a(0), None);
                let legs = if matches!(g, LUnitT | LUnitP) { vec![u, x] } else { vec![x, u] };
                self.add_part(elim, None, vec![top], legs);
                self.add_terminal(term, None, u, Some(x));
                (top, x)
            }
            LUnitTInv | RUnitTInv | LUnitPInv | RUnitPInv => {
                let (intro, term, unit) = match g {
                    LUnitTInv | RUnitTInv => (K::TensorIntro, K::UnitIntro, T::One),
                    _ => (K::ParIntro, K::CounitIntro, T::Bot),
                };
                let u = self.add_wire(unit, None);
                let bot = self.add_wire(tgt, None);
                let legs = if matches!(g, LUnitTInv | LUnitPInv) { vec![u, top] } else { vec![top, u] };
                self.add_part(intro, None, legs, vec![bot]);
                self.add_terminal(term, None, u, Some(top));
                (top, bot)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// β-normalization
// ---------------------------------------------------------------------------

/// Default bound on contraction steps.
pub const DEFAULT_GRAPH_FUEL: usize = 200_000;

impl Graph {
    fn lower_part(&self, w: WireId) -> Option<(PartId, usize)> {
        match self.wire(w).lower {
            End::PartTop(p, i) => Some((p, i)),
            _ => None,
        }
    }
    fn upper_part(&self, w: WireId) -> Option<(PartId, usize)> {
        match self.wire(w).upper {
            End::PartBottom(p, i) => Some((p, i)),
            _ => None,
        }
    }

    fn classify(&self, w: WireId) -> Option<Redex> {
        use PartKind::*;
        let wr = self.wire(w);
        match (wr.upper, wr.lower) {
            (End::PartBottom(p, i), End::PartTop(q, j)) => {
                let (kp, kq) = (self.part(p).kind, self.part(q).kind);
                match (kp, kq) {
                    (TensorIntro, TensorElim) | (ParIntro, ParElim) => {
                        let (xs, ys) = (&self.part(p).top, &self.part(q).bottom);
                        if xs.iter().any(|x| ys.contains(x)) {
                            None
                        } else {
                            Some(Redex::Cut(w))
                        }
                    }
                    (UnitIntro, UnitElim) | (CounitIntro, CounitElim) => Some(Redex::UnitCut(w)),
                    (DiodeRight, DiodeLeft) if i == 1 && j == 0 => {
                        if self.part(p).bottom[0] == self.part(q).top[1] {
                            None
                        } else {
                            Some(Redex::Yank(w))
                        }
                    }
                    (DeltaLens, k) if k.is_lens() => Some(Redex::DeltaLens(w)),
                    (Duplicator, Eliminator) => Some(Redex::LegWeak(w)),
                    (Duplicator, Duplicator) => Some(Redex::LegDup(w)),
                    _ => None,
                }
            }
            (End::PartBottom(p, _), End::NegOut(b, g)) if self.part(p).kind == DeltaLens => {
                let inn = self.gate(b, g).inn;
                match self.lower_part(inn) {
                    Some((q, _)) if matches!(self.part(q).kind, EpsLens | Duplicator | Eliminator) => {
                        Some(Redex::DeltaLens(w))
                    }
                    _ => None,
                }
            }
            (End::PosOut(_), End::NegOut(..)) => Some(Redex::Fusion(w)),
            (End::PosOut(_), End::PartTop(q, _)) if self.part(q).kind.is_lens() => Some(Redex::BoxLens(w)),
            _ => None,
        }
    }

    fn redexes(&self) -> Vec<Redex> {
        self.live_wires().filter_map(|w| self.classify(w)).collect()
    }

    /// Is the graph free of β-redexes?
    pub fn is_beta_normal(&self) -> bool {
        self.live_wires().all(|w| self.classify(w).is_none())
    }

    /// Contract β-redexes until none is left.
    pub fn beta_normalize(&mut self) -> Result<usize, GraphError> {
        self.beta_normalize_with(RedexOrder::Leftmost, DEFAULT_GRAPH_FUEL)
    }

    /// Contract β-redexes in the given order; returns the number of steps.
    pub fn beta_normalize_with(&mut self, order: RedexOrder, fuel: usize) -> Result<usize, GraphError> {
        let mut rng = match order {
            RedexOrder::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            RedexOrder::Leftmost => None,
        };
        let mut steps = 0;
        loop {
            let r = match rng.as_mut() {
                None => self.live_wires().find_map(|w| self.classify(w)),
                Some(rng) => self.redexes().choose(rng).copied(),
            };
            let Some(r) = r else { return Ok(steps) };
            if steps >= fuel {
                return Err(GraphError::Fuel(fuel));
            }
            self.contract(r);
            steps += 1;
        }
    }

    fn contract(&mut self, r: Redex) {
        match r {
            Redex::Cut(w) => self.contract_cut(w),
            Redex::UnitCut(w) => self.contract_unit(w),
            Redex::Yank(w) => self.contract_yank(w),
            Redex::Fusion(w) => self.contract_fusion(w),
            Redex::BoxLens(w) => self.contract_box_lens(w),
            Redex::DeltaLens(w) => self.contract_delta(w),
            Redex::LegWeak(w) => self.contract_leg_weak(w),
            Redex::LegDup(w) => self.contract_leg_dup(w),
        }
        self.rehost_dotted();
    }

    /// Give every unit terminal whose dotted link was lost a host wire in
    /// its own region. A step may delete or move the wire a link landed
    /// on, or leave a unit hanging off a component that no longer touches
    /// the rest of its region; since links may be rerouted freely, the new
    /// host is the first wire of the region outside the unit's component.
    fn rehost_dotted(&mut self) {
        let terminals: Vec<PartId> = self.live_parts().filter(|p| self.part(*p).kind.is_terminal()).collect();
        if terminals.is_empty() {
            return;
        }
        let nw = self.wires.len();
        let mut uf = UnionFind::new(nw + self.boards.len());
        for w in self.live_wires() {
            for end in [self.wire(w).upper, self.wire(w).lower] {
                match end {
                    End::PartTop(p, _) | End::PartBottom(p, _) => {
                        let part = self.part(p);
                        let first = part.top.first().or(part.bottom.first()).copied().expect("part wire");
                        uf.union(w, first);
                    }
                    End::NegOut(b, _) | End::PosOut(b) => {
                        uf.union(w, nw + b);
                    }
                    _ => {}
                }
            }
        }
        let own_wire = |g: &Graph, t: PartId| {
            let part = g.part(t);
            part.top.first().or(part.bottom.first()).copied().expect("terminal wire")
        };
        let hosted = |g: &Graph, t: PartId| {
            let (region, dotted, own) = (g.part(t).region, g.part(t).dotted, own_wire(g, t));
            dotted.is_some_and(|h| {
                h != own && g.wires.get(h).is_some_and(|w| w.as_ref().is_some_and(|w| w.region == region))
            })
        };
        // A unit whose wire enters a switched port is cut off by some
        // switching unless a dotted link holds it.
        let hangs = |g: &Graph, t: PartId| {
            let w = g.wire(own_wire(g, t));
            [w.upper, w.lower].into_iter().any(|end| match end {
                End::PartTop(q, _) => g.part(q).kind == PartKind::ParIntro,
                End::PartBottom(q, _) => matches!(g.part(q).kind, PartKind::TensorElim | PartKind::Duplicator),
                _ => false,
            })
        };
        for &t in &terminals {
            if hosted(self, t) {
                uf.union(own_wire(self, t), self.part(t).dotted.expect("host"));
            }
        }
        for t in terminals {
            if hosted(self, t) {
                continue;
            }
            let own = own_wire(self, t);
            let region = self.part(t).region;
            let root = uf.find(own);
            let in_region: Vec<WireId> =
                self.live_wires().filter(|w| *w != own && self.wire(*w).region == region).collect();
            let mut host = in_region.iter().copied().find(|w| uf.find(*w) != root);
            if host.is_none() && hangs(self, t) {
                let bare = |w: &WireId| {
                    let wire = self.wire(*w);
                    [wire.upper, wire.lower].into_iter().all(|end| match end {
                        End::PartTop(q, _) | End::PartBottom(q, _) => !self.part(q).kind.is_terminal(),
                        _ => true,
                    })
                };
                host = in_region.iter().copied().find(bare).or(in_region.first().copied());
            }
            if let Some(h) = host {
                uf.union(own, h);
            }
            self.part_mut(t).dotted = host;
        }
    }

    fn contract_cut(&mut self, w: WireId) {
        let (i, _) = self.upper_part(w).expect("intro");
        let (e, _) = self.lower_part(w).expect("elim");
        let xs = self.part(i).top.clone();
        let ys = self.part(e).bottom.clone();
        self.kill_part(i);
        self.kill_part(e);
        self.kill_wire(w, None);
        for (x, y) in xs.into_iter().zip(ys) {
            self.fuse(x, y);
        }
    }

    fn contract_unit(&mut self, w: WireId) {
        let (i, _) = self.upper_part(w).expect("intro");
        let (e, _) = self.lower_part(w).expect("elim");
        let host = self.part(e).dotted.or(self.part(i).dotted);
        self.kill_part(i);
        self.kill_part(e);
        self.kill_wire(w, host.filter(|h| *h != w));
    }

    fn contract_yank(&mut self, w: WireId) {
        let (cap, _) = self.upper_part(w).expect("cap");
        let (cup, _) = self.lower_part(w).expect("cup");
        let below = self.part(cap).bottom[0];
        let above = self.part(cup).top[1];
        self.kill_part(cap);
        self.kill_part(cup);
        self.kill_wire(w, Some(above));
        self.fuse(above, below);
    }

    /// Move every element of board `from` into region `to`.
    fn move_contents(&mut self, from: BoardId, to: Option<BoardId>) {
        for w in self.wires.iter_mut().flatten() {
            if w.region == Some(from) {
                w.region = to;
            }
        }
        for p in self.parts.iter_mut().flatten() {
            if p.region == Some(from) {
                p.region = to;
            }
        }
        for b in self.boards.iter_mut().flatten() {
            if b.parent == Some(from) {
                b.parent = to;
            }
        }
    }

    fn contract_fusion(&mut self, w: WireId) {
        let End::PosOut(b1) = self.wire(w).upper else { unreachable!() };
        let End::NegOut(b2, g) = self.wire(w).lower else { unreachable!() };
        let inner = self.gate(b2, g).inn;
        let old = self.board(b1).clone();
        self.move_contents(b1, Some(b2));
        let pos = self.board(b2).neg.iter().position(|x| x.id == g).expect("gate");
        self.board_mut(b2).neg.splice(pos..=pos, old.neg.iter().cloned());
        self.boards[b1] = None;
        for gate in &old.neg {
            self.wire_mut(gate.out).lower = End::NegOut(b2, gate.id);
            self.wire_mut(gate.inn).upper = End::NegIn(b2, gate.id);
        }
        self.kill_wire(w, None);
        self.fuse(old.pos_in, inner);
    }

    fn contract_box_lens(&mut self, w: WireId) {
        let End::PosOut(b) = self.wire(w).upper else { unreachable!() };
        let (q, _) = self.lower_part(w).expect("lens");
        let region = self.board(b).parent;
        match self.part(q).kind {
            PartKind::EpsLens => {
                let below = self.part(q).bottom[0];
                let board = self.board(b).clone();
                for gate in &board.neg {
                    self.add_part(PartKind::EpsLens, region, vec![gate.out], vec![gate.inn]);
                }
                self.move_contents(b, region);
                self.boards[b] = None;
                self.kill_part(q);
                self.kill_wire(w, Some(below));
                self.fuse(board.pos_in, below);
            }
            PartKind::Eliminator => {
                let unit = self.part(q).bottom[0];
                let board = self.board(b).clone();
                self.kill_part(q);
                self.kill_wire(w, Some(unit));
                self.delete_board(b, Some(unit));
                if board.neg.is_empty() {
                    self.add_terminal(PartKind::UnitIntro, region, unit, None);
                }
                for (k, gate) in board.neg.iter().enumerate() {
                    if k == 0 {
                        self.add_part(PartKind::Eliminator, region, vec![gate.out], vec![unit]);
                    } else {
                        let z = self.add_wire(TypeExpr::One, region);
                        self.add_part(PartKind::Eliminator, region, vec![gate.out], vec![z]);
                        self.add_terminal(PartKind::UnitElim, region, z, Some(unit));
                    }
                }
            }
            PartKind::Duplicator => {
                let legs = self.part(q).bottom.clone();
                self.kill_part(q);
                self.kill_wire(w, legs.first().copied());
                let mut copies = vec![(b, self.board(b).neg.iter().map(|g| g.id).collect::<Vec<_>>())];
                for _ in 1..legs.len() {
                    copies.push(self.copy_board(b));
                }
                let gates = self.board(b).neg.clone();
                for (k, gate) in gates.iter().enumerate() {
                    let ty = self.ty(gate.out);
                    let mut new_legs = Vec::new();
                    for (c, gids) in &copies {
                        let l = self.add_wire(ty.clone(), region);
                        self.set_lower(l, End::NegOut(*c, gids[k]));
                        new_legs.push(l);
                    }
                    self.add_part(PartKind::Duplicator, region, vec![gate.out], new_legs);
                }
                for ((c, _), leg) in copies.iter().zip(legs) {
                    self.set_upper(leg, End::PosOut(*c));
                }
            }
            PartKind::DeltaLens => {
                let below = self.part(q).bottom[0];
                self.kill_part(q);
                let outer = self.boards.len();
                let gates = self.board(b).neg.clone();
                let mut outer_gates = Vec::new();
                for gate in &gates {
                    let ty = self.ty(gate.out);
                    let x = self.add_wire(TypeExpr::bang(ty.clone()), region);
                    self.add_part(PartKind::DeltaLens, region, vec![gate.out], vec![x]);
                    let y = self.add_wire(ty, Some(outer));
                    self.set_lower(y, End::NegOut(b, gate.id));
                    outer_gates.push((x, y));
                }
                self.wire_mut(w).region = Some(outer);
                self.board_mut(b).parent = Some(outer);
                let id = self.add_board(region, outer_gates, w, below);
                debug_assert_eq!(id, outer);
            }
            _ => unreachable!(),
        }
    }

    /// Delete a board together with everything inside it. The wires on its
    /// outer gates are left in place; dotted links from outside that land
    /// inside move to `host`.
    fn delete_board(&mut self, b: BoardId, host: Option<WireId>) {
        let inside: BTreeSet<BoardId> = self
            .live_boards()
            .filter(|x| self.enclosing(Some(*x)).contains(&b))
            .collect();
        for w in 0..self.wires.len() {
            if let Some(wr) = &self.wires[w] {
                if wr.region.is_some_and(|r| inside.contains(&r)) {
                    self.kill_wire(w, host);
                }
            }
        }
        for p in self.parts.iter_mut() {
            if p.as_ref().is_some_and(|x| x.region.is_some_and(|r| inside.contains(&r))) {
                *p = None;
            }
        }
        for x in inside {
            self.boards[x] = None;
        }
    }

    /// Deep copy of a board (in the same region). The copy's gate outer
    /// wires and conclusion are left `Open` for the caller to attach;
    /// returns the new board with its gate ids in the original gate order.
    fn copy_board(&mut self, b: BoardId) -> (BoardId, Vec<GateId>) {
        let inside: Vec<BoardId> = self
            .live_boards()
            .filter(|x| self.enclosing(Some(*x)).contains(&b))
            .collect();
        let mut bmap: HashMap<BoardId, BoardId> = HashMap::new();
        for (k, x) in inside.iter().enumerate() {
            bmap.insert(*x, self.boards.len() + k);
        }
        let mut wmap: HashMap<WireId, WireId> = HashMap::new();
        let old_wires: Vec<WireId> = self
            .live_wires()
            .filter(|w| self.wire(*w).region.is_some_and(|r| bmap.contains_key(&r)))
            .collect();
        for (k, w) in old_wires.iter().enumerate() {
            wmap.insert(*w, self.wires.len() + k);
        }
        let mut pmap: HashMap<PartId, PartId> = HashMap::new();
        let old_parts: Vec<PartId> = self
            .live_parts()
            .filter(|p| self.part(*p).region.is_some_and(|r| bmap.contains_key(&r)))
            .collect();
        for (k, p) in old_parts.iter().enumerate() {
            pmap.insert(*p, self.parts.len() + k);
        }
        let mut gmap: HashMap<GateId, GateId> = HashMap::new();
        for x in &inside {
            for g in self.board(*x).neg.clone() {
                let n = self.fresh_gate();
                gmap.insert(g.id, n);
            }
        }
        let map_end = |e: End| -> End {
            match e {
                End::PartTop(p, i) => End::PartTop(pmap[&p], i),
                End::PartBottom(p, i) => End::PartBottom(pmap[&p], i),
                End::NegOut(x, g) if bmap.contains_key(&x) && x != b => End::NegOut(bmap[&x], gmap[&g]),
                End::NegIn(x, g) => End::NegIn(bmap[&x], gmap[&g]),
                End::PosOut(x) if x != b => End::PosOut(bmap[&x]),
                End::PosIn(x) => End::PosIn(bmap[&x]),
                _ => End::Open,
            }
        };
        let map_w = |w: &WireId| wmap.get(w).copied().unwrap_or(*w);
        let new_wires: Vec<Wire> = old_wires
            .iter()
            .map(|w| {
                let wr = self.wire(*w);
                Wire {
                    ty: wr.ty.clone(),
                    region: wr.region.map(|r| bmap[&r]),
                    upper: map_end(wr.upper),
                    lower: map_end(wr.lower),
                }
            })
            .collect();
        let new_parts: Vec<Part> = old_parts
            .iter()
            .map(|p| {
                let pr = self.part(*p);
                Part {
                    kind: pr.kind,
                    region: pr.region.map(|r| bmap[&r]),
                    top: pr.top.iter().map(map_w).collect(),
                    bottom: pr.bottom.iter().map(map_w).collect(),
                    dotted: pr.dotted.map(|w| map_w(&w)),
                }
            })
            .collect();
        let new_boards: Vec<Board> = inside
            .iter()
            .map(|x| {
                let br = self.board(*x);
                Board {
                    parent: if *x == b { br.parent } else { br.parent.map(|r| bmap[&r]) },
                    neg: br
                        .neg
                        .iter()
                        .map(|g| Gate { id: gmap[&g.id], out: map_w(&g.out), inn: map_w(&g.inn) })
                        .collect(),
                    pos_in: map_w(&br.pos_in),
                    pos_out: map_w(&br.pos_out),
                }
            })
            .collect();
        let gids = self.board(b).neg.iter().map(|g| gmap[&g.id]).collect();
        self.wires.extend(new_wires.into_iter().map(Some));
        self.parts.extend(new_parts.into_iter().map(Some));
        self.boards.extend(new_boards.into_iter().map(Some));
        (bmap[&b], gids)
    }

    fn contract_delta(&mut self, w: WireId) {
        use PartKind::*;
        let (d, _) = self.upper_part(w).expect("delta");
        let above = self.part(d).top[0];
        let region = self.part(d).region;
        match self.wire(w).lower {
            End::PartTop(q, _) => match self.part(q).kind {
                EpsLens => {
                    let below = self.part(q).bottom[0];
                    self.kill_part(d);
                    self.kill_part(q);
                    self.kill_wire(w, Some(above));
                    self.fuse(above, below);
                }
                DeltaLens => {
                    // δ ; δ  ⇒  δ ; !δ
                    let below = self.part(q).bottom[0];
                    let inner_ty = self.ty(above);
                    let b = self.boards.len();
                    let v = self.add_wire(inner_ty.clone(), Some(b));
                    let u = self.add_wire(TypeExpr::bang(inner_ty), Some(b));
                    self.add_board(region, vec![(w, v)], u, below);
                    self.part_mut(q).region = Some(b);
                    self.set_lower(v, End::PartTop(q, 0));
                    self.set_upper(u, End::PartBottom(q, 0));
                }
                Duplicator => {
                    // δ ; d  ⇒  d ; (δ ⊗ … ⊗ δ)
                    let legs = self.part(q).bottom.clone();
                    self.kill_part(d);
                    self.kill_part(q);
                    self.kill_wire(w, None);
                    let ty = self.ty(above);
                    let mut new_legs = Vec::new();
                    for leg in legs {
                        let m = self.add_wire(ty.clone(), region);
                        self.add_part(DeltaLens, region, vec![m], vec![leg]);
                        new_legs.push(m);
                    }
                    self.add_part(Duplicator, region, vec![above], new_legs);
                }
                Eliminator => {
                    self.kill_part(d);
                    self.kill_wire(w, Some(above));
                    self.set_lower(above, End::PartTop(q, 0));
                }
                _ => unreachable!(),
            },
            End::NegOut(b, g) => {
                let inn = self.gate(b, g).inn;
                let (q, _) = self.lower_part(inn).expect("lens inside");
                match self.part(q).kind {
                    EpsLens => {
                        // δ ; !ε  ⇒  id
                        let below = self.part(q).bottom[0];
                        self.kill_part(d);
                        self.kill_part(q);
                        self.kill_wire(w, None);
                        self.kill_wire(inn, Some(below));
                        self.set_lower(above, End::NegOut(b, g));
                        self.set_upper(below, End::NegIn(b, g));
                    }
                    Duplicator => {
                        // δ ; !d  ⇒  d ; (δ ⊗ δ) ; φ̃
                        let legs = self.part(q).bottom.clone();
                        self.kill_part(d);
                        self.kill_part(q);
                        self.kill_wire(w, None);
                        self.kill_wire(inn, None);
                        let ty = self.ty(above);
                        let pos = self.board(b).neg.iter().position(|x| x.id == g).expect("gate");
                        self.board_mut(b).neg.remove(pos);
                        let mut new_legs = Vec::new();
                        let mut new_gates = Vec::new();
                        for leg in legs {
                            let m = self.add_wire(ty.clone(), region);
                            let x = self.add_wire(TypeExpr::bang(ty.clone()), region);
                            self.add_part(DeltaLens, region, vec![m], vec![x]);
                            new_legs.push(m);
                            let id = self.fresh_gate();
                            new_gates.push(Gate { id, out: x, inn: leg });
                        }
                        self.board_mut(b).neg.splice(pos..pos, new_gates.iter().cloned());
                        for gate in new_gates {
                            self.wire_mut(gate.out).lower = End::NegOut(b, gate.id);
                            self.wire_mut(gate.inn).upper = End::NegIn(b, gate.id);
                        }
                        self.add_part(Duplicator, region, vec![above], new_legs);
                    }
                    Eliminator => {
                        // δ ; !e  ⇒  e ; φ₀
                        let unit = self.part(q).bottom[0];
                        self.kill_part(d);
                        self.kill_part(q);
                        self.kill_wire(w, None);
                        self.kill_wire(inn, None);
                        self.board_mut(b).neg.retain(|x| x.id != g);
                        let z = self.add_wire(TypeExpr::One, region);
                        self.add_part(Eliminator, region, vec![above], vec![z]);
                        let pos_out = self.board(b).pos_out;
                        self.add_terminal(UnitElim, region, z, Some(pos_out));
                        let pos_in = self.board(b).pos_in;
                        self.add_terminal(UnitIntro, Some(b), unit, Some(pos_in));
                    }
                    _ => unreachable!(),
                }
            }
            _ => unreachable!(),
        }
    }

    fn contract_leg_weak(&mut self, w: WireId) {
        let (d, j) = self.upper_part(w).expect("dup");
        let (e, _) = self.lower_part(w).expect("weak");
        let unit = self.part(e).bottom[0];
        let region = self.part(d).region;
        let above = self.part(d).top[0];
        self.kill_part(e);
        self.kill_wire(w, None);
        self.add_terminal(PartKind::UnitIntro, region, unit, Some(above));
        self.part_mut(d).bottom.remove(j);
        self.relink_bottoms(d);
        if self.part(d).bottom.len() == 1 {
            let leg = self.part(d).bottom[0];
            self.kill_part(d);
            self.fuse(above, leg);
        }
    }

    fn contract_leg_dup(&mut self, w: WireId) {
        let (d1, j) = self.upper_part(w).expect("dup");
        let (d2, _) = self.lower_part(w).expect("dup");
        let legs = self.part(d2).bottom.clone();
        self.kill_part(d2);
        self.kill_wire(w, None);
        self.part_mut(d1).bottom.splice(j..=j, legs);
        self.relink_bottoms(d1);
    }
}

// ---------------------------------------------------------------------------
// η-expansion
// ---------------------------------------------------------------------------

impl Graph {
    /// Expand every compound wire that absorbs at both ends, until only
    /// atomic wires do. Each expansion yields wires that each carry one
    /// emitting end, so no β-redex is created and no `!` wire above an
    /// exponential part is ever expanded. The result does not depend on
    /// the order of expansion.
    pub fn eta_expand(&mut self) -> usize {
        let mut count = 0;
        let mut w = 0;
        while w < self.wires.len() {
            if self.wires[w].is_some() && !self.wire(w).ty.is_atomic() && self.flow(w) == Flow::Source {
                self.expand(w);
                count += 1;
            }
            w += 1;
        }
        count
    }

    fn expand(&mut self, w: WireId) {
        use PartKind::*;
        let ty = self.ty(w);
        let region = self.wire(w).region;
        let lower = self.wire(w).lower;
        let w2 = self.add_wire(ty.clone(), region);
        self.set_lower(w2, lower);
        let is_tensor = matches!(ty, TypeExpr::Tensor(..));
        match ty {
            TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => {
                let (elim, intro) = if is_tensor {
                    (TensorElim, TensorIntro)
                } else {
                    (ParElim, ParIntro)
                };
                let x = self.add_wire(*a, region);
                let y = self.add_wire(*b, region);
                self.add_part(elim, region, vec![w], vec![x, y]);
                self.add_part(intro, region, vec![x, y], vec![w2]);
            }
            TypeExpr::One => {
                self.add_terminal(UnitElim, region, w, Some(w2));
                self.add_terminal(UnitIntro, region, w2, None);
            }
            TypeExpr::Bot => {
                self.add_terminal(CounitElim, region, w, Some(w2));
                self.add_terminal(CounitIntro, region, w2, None);
            }
            TypeExpr::Dual(a) => {
                let m = self.add_wire(*a, region);
                self.add_part(DiodeLeft, region, vec![w, m], vec![]);
                self.add_part(DiodeRight, region, vec![], vec![m, w2]);
            }
            TypeExpr::Bang(a) => {
                let b = self.boards.len();
                let i = self.add_wire(*a, Some(b));
                self.add_board(region, vec![(w, i)], i, w2);
            }
            TypeExpr::Atom(_) => unreachable!("atomic wires are never expanded"),
        }
    }

    /// Is every compound wire oriented (no η-redex left)?
    pub fn is_eta_expanded(&self) -> bool {
        self.live_wires().all(|w| self.wire(w).ty.is_atomic() || self.flow(w) != Flow::Source)
    }

    /// β-normalize, then η-expand.
    pub fn normalize(&mut self) -> Result<(), GraphError> {
        self.beta_normalize()?;
        self.eta_expand();
        self.beta_normalize()?;
        Ok(())
    }

    /// The normal graph of a typed term.
    pub fn normal_of(j: &Judgement) -> Result<Graph, GraphError> {
        let mut g = term_to_graph(j)?;
        g.normalize()?;
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Well-formedness
// ---------------------------------------------------------------------------

/// Exhaustive switching enumeration up to this many switchings per region;
/// beyond it a fixed-seed sample is drawn.
const EXHAUSTIVE_SWITCH_LIMIT: usize = 1 << 14;
const SAMPLED_SWITCHINGS: usize = 4096;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }
    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

impl Graph {
    fn end_refers(&self, end: End, w: WireId) -> bool {
        let ok = |x: Option<WireId>| x == Some(w);
        match end {
            End::Open => false,
            End::Top(i) => ok(self.top.get(i).copied()),
            End::Bottom(i) => ok(self.bottom.get(i).copied()),
            End::PartTop(p, i) => ok(self.parts.get(p).and_then(|x| x.as_ref()).and_then(|x| x.top.get(i).copied())),
            End::PartBottom(p, i) => {
                ok(self.parts.get(p).and_then(|x| x.as_ref()).and_then(|x| x.bottom.get(i).copied()))
            }
            End::NegOut(b, g) | End::NegIn(b, g) => {
                let gate = self.boards.get(b).and_then(|x| x.as_ref()).and_then(|x| x.neg.iter().find(|y| y.id == g));
                match (end, gate) {
                    (End::NegOut(..), Some(gate)) => gate.out == w,
                    (_, Some(gate)) => gate.inn == w,
                    _ => false,
                }
            }
            End::PosOut(b) => ok(self.boards.get(b).and_then(|x| x.as_ref()).map(|x| x.pos_out)),
            End::PosIn(b) => ok(self.boards.get(b).and_then(|x| x.as_ref()).map(|x| x.pos_in)),
        }
    }

    fn type_violations(&self, out: &mut Vec<String>) {
        use PartKind::*;
        use TypeExpr as T;
        for p in self.live_parts() {
            let part = self.part(p);
            let t: Vec<TypeExpr> = part.top.iter().map(|w| self.ty(*w)).collect();
            let b: Vec<TypeExpr> = part.bottom.iter().map(|w| self.ty(*w)).collect();
            let ok = match part.kind {
                TensorIntro => t.len() == 2 && b.len() == 1 && b[0] == T::tensor(t[0].clone(), t[1].clone()),
                ParIntro => t.len() == 2 && b.len() == 1 && b[0] == T::par(t[0].clone(), t[1].clone()),
                TensorElim => b.len() == 2 && t.len() == 1 && t[0] == T::tensor(b[0].clone(), b[1].clone()),
                ParElim => b.len() == 2 && t.len() == 1 && t[0] == T::par(b[0].clone(), b[1].clone()),
                UnitIntro => t.is_empty() && b == [T::One],
                UnitElim => b.is_empty() && t == [T::One],
                CounitIntro => t.is_empty() && b == [T::Bot],
                CounitElim => b.is_empty() && t == [T::Bot],
                DiodeRight => t.is_empty() && b.len() == 2 && b[1] == T::dual(b[0].clone()),
                DiodeLeft => b.is_empty() && t.len() == 2 && t[0] == T::dual(t[1].clone()),
                DeltaLens => {
                    t.len() == 1 && b.len() == 1 && matches!(&t[0], T::Bang(_)) && b[0] == T::bang(t[0].clone())
                }
                EpsLens => t.len() == 1 && b.len() == 1 && t[0] == T::bang(b[0].clone()),
                Duplicator => {
                    t.len() == 1 && matches!(&t[0], T::Bang(_)) && b.len() >= 2 && b.iter().all(|x| *x == t[0])
                }
                Eliminator => t.len() == 1 && matches!(&t[0], T::Bang(_)) && b == [T::One],
            };
            if !ok {
                out.push(format!("part {p} ({}) has ill-typed ports", part.kind.name()));
            }
            for w in part.top.iter().chain(&part.bottom) {
                if self.wire(*w).region != part.region {
                    out.push(format!("part {p} and wire {w} lie in different regions"));
                }
            }
            if let Some(h) = part.dotted {
                if self.wires.get(h).is_none_or(|x| x.is_none()) {
                    out.push(format!("part {p} has a dotted link to a dead wire"));
                } else if !part.kind.is_terminal() {
                    out.push(format!("part {p} carries a dotted link but is not a unit terminal"));
                }
            }
        }
        for b in self.live_boards() {
            let board = self.board(b);
            for g in &board.neg {
                if self.ty(g.out) != T::bang(self.ty(g.inn)) {
                    out.push(format!("board {b} gate {} is ill-typed", g.id));
                }
                if self.wire(g.out).region != board.parent || self.wire(g.inn).region != Some(b) {
                    out.push(format!("board {b} gate {} crosses the wrong regions", g.id));
                }
            }
            if self.ty(board.pos_out) != T::bang(self.ty(board.pos_in)) {
                out.push(format!("board {b} conclusion is ill-typed"));
            }
            if self.wire(board.pos_out).region != board.parent || self.wire(board.pos_in).region != Some(b) {
                out.push(format!("board {b} conclusion crosses the wrong regions"));
            }
        }
    }

    /// Check structural invariants, typing of ports, region discipline and
    /// the switching condition in every region.
    pub fn check_wellformed(&self) -> WellformedReport {
        let mut report = WellformedReport::default();
        let v = &mut report.violations;
        for w in self.live_wires() {
            let wr = self.wire(w);
            if !self.end_refers(wr.upper, w) {
                v.push(format!("wire {w}: upper end {:?} does not refer back", wr.upper));
            }
            if !self.end_refers(wr.lower, w) {
                v.push(format!("wire {w}: lower end {:?} does not refer back", wr.lower));
            }
            if matches!(wr.upper, End::PartTop(..) | End::NegOut(..) | End::PosIn(..) | End::Bottom(_)) {
                v.push(format!("wire {w}: upper end attached to a lower port"));
            }
            if matches!(wr.lower, End::PartBottom(..) | End::NegIn(..) | End::PosOut(..) | End::Top(_)) {
                v.push(format!("wire {w}: lower end attached to an upper port"));
            }
        }
        if !v.is_empty() {
            return report;
        }
        for b in self.live_boards() {
            let chain = self.enclosing(self.board(b).parent);
            if chain.contains(&b) {
                v.push(format!("board {b} encloses itself"));
                return report;
            }
        }
        for p in self.live_parts() {
            if self.part(p).kind == PartKind::Duplicator && self.part(p).bottom.len() < 2 {
                v.push(format!("duplicator {p} has fewer than two legs"));
            }
        }
        self.type_violations(v);
        let mut regions: Vec<Option<BoardId>> = vec![None];
        regions.extend(self.live_boards().map(Some));
        for r in regions {
            let (n, bad) = self.switching_region(r);
            report.switchings_checked += n;
            report.violations.extend(bad);
        }
        report.violations.dedup();
        report
    }

    /// Check the exponential shape of a normal graph: every δ sits on a
    /// premise of a board whose inner wire leads into another premise or
    /// another δ.
    pub fn check_normal_shape(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in self.live_parts() {
            if self.part(p).kind != PartKind::DeltaLens {
                continue;
            }
            let below = self.part(p).bottom[0];
            match self.wire(below).lower {
                End::NegOut(b, g) => {
                    let inn = self.gate(b, g).inn;
                    let ok = match self.wire(inn).lower {
                        End::NegOut(..) => true,
                        End::PartTop(q, _) => self.part(q).kind == PartKind::DeltaLens,
                        _ => false,
                    };
                    if !ok {
                        out.push(format!("δ part {p}: the gate below it does not continue into a gate"));
                    }
                }
                _ => out.push(format!("δ part {p} is not directly above a board premise")),
            }
        }
        out
    }

    /// Switching check of one region. Boards inside the region are single
    /// nodes; the region's own gates are boundary leaves. Dotted links may
    /// be used for connectivity but never close a cycle.
    fn switching_region(&self, r: Option<BoardId>) -> (usize, Vec<String>) {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        enum Node {
            Wire(WireId),
            Part(PartId),
            Board(BoardId),
            Leaf(End),
        }
        let mut index: BTreeMap<Node, usize> = BTreeMap::new();
        let add = |n: Node, index: &mut BTreeMap<Node, usize>| -> usize {
            let k = index.len();
            *index.entry(n).or_insert(k)
        };
        // (a, b, switch group) — group = Some((part, slot)) for switched edges
        type Edge = (usize, usize, Option<(PartId, usize)>);
        let mut edges: Vec<Edge> = Vec::new();
        let mut dotted: Vec<(usize, usize)> = Vec::new();
        let wires: Vec<WireId> = self.live_wires().filter(|w| self.wire(*w).region == r).collect();
        let parts: Vec<PartId> = self.live_parts().filter(|p| self.part(*p).region == r).collect();
        for &p in &parts {
            add(Node::Part(p), &mut index);
        }
        for b in self.live_boards().filter(|b| self.board(*b).parent == r) {
            add(Node::Board(b), &mut index);
        }
        for &w in &wires {
            let wn = add(Node::Wire(w), &mut index);
            for end in [self.wire(w).upper, self.wire(w).lower] {
                let (node, switch) = match end {
                    End::PartTop(p, i) => {
                        let sw = (self.part(p).kind == PartKind::ParIntro).then_some((p, i));
                        (Node::Part(p), sw)
                    }
                    End::PartBottom(p, i) => {
                        let sw = matches!(self.part(p).kind, PartKind::TensorElim | PartKind::Duplicator)
                            .then_some((p, i));
                        (Node::Part(p), sw)
                    }
                    End::NegOut(b, _) | End::PosOut(b) if Some(b) != r => (Node::Board(b), None),
                    other => (Node::Leaf(other), None),
                };
                let nn = add(node, &mut index);
                edges.push((wn, nn, switch));
            }
        }
        for &p in &parts {
            if let Some(h) = self.part(p).dotted {
                if let Some(&hn) = index.get(&Node::Wire(h)) {
                    dotted.push((index[&Node::Part(p)], hn));
                }
            }
        }
        let switched: Vec<PartId> = parts
            .iter()
            .copied()
            .filter(|p| matches!(self.part(*p).kind, PartKind::ParIntro | PartKind::TensorElim | PartKind::Duplicator))
            .collect();
        let n = index.len();
        if n == 0 {
            return (0, vec![]);
        }
        let arity = |p: PartId| if self.part(p).kind == PartKind::Duplicator { self.part(p).bottom.len() } else { 2 };
        let radix: Vec<usize> = switched.iter().map(|p| arity(*p)).collect();
        let total: Option<usize> = radix.iter().try_fold(1usize, |acc, r| acc.checked_mul(*r));
        let assignments: Vec<Vec<usize>> = match total {
            Some(t) if t <= EXHAUSTIVE_SWITCH_LIMIT => (0..t)
                .map(|mut x| {
                    radix
                        .iter()
                        .map(|r| {
                            let d = x % r;
                            x /= r;
                            d
                        })
                        .collect()
                })
                .collect(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                (0..SAMPLED_SWITCHINGS).map(|_| radix.iter().map(|r| rng.gen_range(0..*r)).collect()).collect()
            }
        };
        let pos: HashMap<PartId, usize> = switched.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let label = match r {
            None => "outer region".to_string(),
            Some(b) => format!("board {b}"),
        };
        for (count, choice) in assignments.iter().enumerate() {
            let mut uf = UnionFind::new(n);
            for &(a, b, sw) in &edges {
                if let Some((p, slot)) = sw {
                    if slot != choice[pos[&p]] {
                        continue;
                    }
                }
                if !uf.union(a, b) {
                    return (count + 1, vec![format!("switching {choice:?} of the {label} has a cycle")]);
                }
            }
            for &(a, b) in &dotted {
                uf.union(a, b);
            }
            let root = uf.find(0);
            if (1..n).any(|x| uf.find(x) != root) {
                return (count + 1, vec![format!("switching {choice:?} of the {label} is disconnected")]);
            }
        }
        (assignments.len(), vec![])
    }
}

// ---------------------------------------------------------------------------
// Comparison up to unit routing
// ---------------------------------------------------------------------------

/// A vertex- and edge-labelled graph used for isomorphism testing.
struct Labelled {
    labels: Vec<String>,
    adj: Vec<Vec<(String, usize)>>,
}

impl Labelled {
    fn edge(&mut self, a: usize, b: usize, label: &str) {
        self.adj[a].push((format!("{label}>"), b));
        self.adj[b].push((format!("{label}<"), a));
    }
}

impl Graph {
    /// The comparison encoding: dotted links are dropped, duplicator legs
    /// are unordered, negative gates of a board are unordered.
    fn labelled(&self) -> Labelled {
        let mut ids: HashMap<(u8, usize), usize> = HashMap::new();
        let mut lg = Labelled { labels: vec![], adj: vec![] };
        let mut node = |lg: &mut Labelled, key: (u8, usize), label: String| -> usize {
            *ids.entry(key).or_insert_with(|| {
                lg.labels.push(label);
                lg.adj.push(vec![]);
                lg.labels.len() - 1
            })
        };
        let wires: Vec<WireId> = self.live_wires().collect();
        for &w in &wires {
            node(&mut lg, (0, w), format!("w:{}", self.wire(w).ty));
        }
        for p in self.live_parts() {
            node(&mut lg, (1, p), format!("p:{}", self.part(p).kind.name()));
        }
        for b in self.live_boards() {
            node(&mut lg, (2, b), "board".into());
            for g in &self.board(b).neg {
                node(&mut lg, (3, g.id), "gate".into());
            }
        }
        for i in 0..self.top.len() {
            node(&mut lg, (4, i), format!("top:{i}"));
        }
        for i in 0..self.bottom.len() {
            node(&mut lg, (5, i), format!("bottom:{i}"));
        }
        let id = |key: (u8, usize)| ids[&key];
        let mut edges: Vec<(usize, usize, String)> = Vec::new();
        for p in self.live_parts() {
            let part = self.part(p);
            for (i, w) in part.top.iter().enumerate() {
                edges.push((id((1, p)), id((0, *w)), format!("t{i}")));
            }
            for (i, w) in part.bottom.iter().enumerate() {
                let l = if part.kind == PartKind::Duplicator { "leg".to_string() } else { format!("b{i}") };
                edges.push((id((1, p)), id((0, *w)), l));
            }
            if let Some(b) = part.region {
                edges.push((id((1, p)), id((2, b)), "reg".into()));
            }
        }
        for &w in &wires {
            if let Some(b) = self.wire(w).region {
                edges.push((id((0, w)), id((2, b)), "reg".into()));
            }
        }
        for b in self.live_boards() {
            let board = self.board(b);
            for g in &board.neg {
                edges.push((id((2, b)), id((3, g.id)), "gate".into()));
                edges.push((id((3, g.id)), id((0, g.out)), "gout".into()));
                edges.push((id((3, g.id)), id((0, g.inn)), "gin".into()));
            }
            edges.push((id((2, b)), id((0, board.pos_out)), "pout".into()));
            edges.push((id((2, b)), id((0, board.pos_in)), "pin".into()));
            if let Some(par) = board.parent {
                edges.push((id((2, b)), id((2, par)), "reg".into()));
            }
        }
        for (i, w) in self.top.iter().enumerate() {
            edges.push((id((4, i)), id((0, *w)), "bd".into()));
        }
        for (i, w) in self.bottom.iter().enumerate() {
            edges.push((id((5, i)), id((0, *w)), "bd".into()));
        }
        for (a, b, l) in edges {
            lg.edge(a, b, &l);
        }
        lg
    }
}

/// Colour refinement on the disjoint union of two labelled graphs, with
/// individualization and backtracking to decide isomorphism exactly.
struct IsoSearch {
    adj: Vec<Vec<(usize, usize)>>,
    n: usize,
}

impl IsoSearch {
    fn refine(&self, mut colors: Vec<usize>) -> Vec<usize> {
        let mut classes = colors.iter().collect::<BTreeSet<_>>().len();
        loop {
            let sigs: Vec<(usize, Vec<(usize, usize)>)> = (0..colors.len())
                .map(|v| {
                    let mut s: Vec<(usize, usize)> = self.adj[v].iter().map(|(l, u)| (*l, colors[*u])).collect();
                    s.sort_unstable();
                    (colors[v], s)
                })
                .collect();
            type Sig = (usize, Vec<(usize, usize)>);
            let mut table: BTreeMap<&Sig, usize> = BTreeMap::new();
            for s in &sigs {
                let k = table.len();
                table.entry(s).or_insert(k);
            }
            // stable, order-independent renumbering
            let order: BTreeMap<usize, usize> = {
                let mut keys: Vec<_> = table.iter().collect();
                keys.sort();
                keys.iter().enumerate().map(|(i, (_, v))| (**v, i)).collect()
            };
            let next: Vec<usize> = sigs.iter().map(|s| order[&table[s]]).collect();
            let new_classes = table.len();
            colors = next;
            if new_classes == classes {
                return colors;
            }
            classes = new_classes;
        }
    }

    fn balanced(&self, colors: &[usize]) -> bool {
        let mut h: BTreeMap<usize, isize> = BTreeMap::new();
        for (v, c) in colors.iter().enumerate() {
            *h.entry(*c).or_insert(0) += if v < self.n { 1 } else { -1 };
        }
        h.values().all(|x| *x == 0)
    }

    fn verify(&self, colors: &[usize]) -> bool {
        let mut image = vec![usize::MAX; self.n];
        let by_color: HashMap<usize, usize> = (self.n..2 * self.n).map(|v| (colors[v], v)).collect();
        for u in 0..self.n {
            image[u] = by_color[&colors[u]];
        }
        (0..self.n).all(|u| {
            let mut a: Vec<(usize, usize)> = self.adj[u].iter().map(|(l, x)| (*l, image[*x])).collect();
            let mut b: Vec<(usize, usize)> = self.adj[image[u]].clone();
            a.sort_unstable();
            b.sort_unstable();
            a == b
        })
    }

    fn search(&self, colors: Vec<usize>) -> bool {
        let colors = self.refine(colors);
        if !self.balanced(&colors) {
            return false;
        }
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &colors[..self.n] {
            *sizes.entry(*c).or_insert(0) += 1;
        }
        let Some((&target, _)) = sizes.iter().filter(|(_, s)| **s > 1).min_by_key(|(c, s)| (**s, **c)) else {
            return self.verify(&colors);
        };
        let fresh = colors.iter().max().copied().unwrap_or(0) + 1;
        let u = (0..self.n).find(|v| colors[*v] == target).expect("class member");
        for v in (self.n..2 * self.n).filter(|v| colors[*v] == target) {
            let mut c = colors.clone();
            c[u] = fresh;
            c[v] = fresh;
            if self.search(c) {
                return true;
            }
        }
        false
    }
}

/// Equality of graphs up to the routing of dotted links: an isomorphism of
/// wires, parts and boards preserving types, kinds, port positions (legs
/// of a duplicator and premises of a board are unordered), regions and the
/// boundary.
pub fn almost_equal(g1: &Graph, g2: &Graph) -> bool {
    let (a, b) = (g1.labelled(), g2.labelled());
    if a.labels.len() != b.labels.len() {
        return false;
    }
    let n = a.labels.len();
    let mut intern: BTreeMap<String, usize> = BTreeMap::new();
    let lid = |s: &String, intern: &mut BTreeMap<String, usize>| -> usize {
        let k = intern.len();
        *intern.entry(s.clone()).or_insert(k)
    };
    let mut labels: BTreeSet<String> = BTreeSet::new();
    labels.extend(a.labels.iter().cloned());
    labels.extend(b.labels.iter().cloned());
    let mut node_intern: BTreeMap<String, usize> = BTreeMap::new();
    for (i, l) in labels.into_iter().enumerate() {
        node_intern.insert(l, i);
    }
    let mut adj = Vec::with_capacity(2 * n);
    let mut colors = Vec::with_capacity(2 * n);
    for g in [&a, &b] {
        for v in 0..n {
            colors.push(node_intern[&g.labels[v]]);
            let offset = if std::ptr::eq(g, &a) { 0 } else { n };
            adj.push(g.adj[v].iter().map(|(l, u)| (lid(l, &mut intern), u + offset)).collect());
        }
    }
    IsoSearch { adj, n }.search(colors)
}

// ---------------------------------------------------------------------------
// DOT and JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireJson {
    id: WireId,
    #[serde(rename = "type")]
    ty: String,
    region: Option<BoardId>,
    upper: End,
    lower: End,
}

#[derive(Serialize, Deserialize)]
struct PartJson {
    id: PartId,
    kind: PartKind,
    region: Option<BoardId>,
    top: Vec<WireId>,
    bottom: Vec<WireId>,
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    id: GateId,
    out: WireId,
    #[serde(rename = "in")]
    inn: WireId,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BoardJson {
    id: BoardId,
    parent: Option<BoardId>,
    neg: Vec<GateJson>,
    pos_in: WireId,
    pos_out: WireId,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct GraphJson {
    wires: Vec<WireJson>,
    parts: Vec<PartJson>,
    boards: Vec<BoardJson>,
    /// `(part, wire)` pairs.
    dotted: Vec<(PartId, WireId)>,
    outer_top: Vec<WireId>,
    outer_bottom: Vec<WireId>,
}

impl Graph {
    pub fn to_json(&self) -> serde_json::Value {
        let j = GraphJson {
            wires: self
                .live_wires()
                .map(|w| {
                    let x = self.wire(w);
                    WireJson { id: w, ty: x.ty.to_string(), region: x.region, upper: x.upper, lower: x.lower }
                })
                .collect(),
            parts: self
                .live_parts()
                .map(|p| {
                    let x = self.part(p);
                    PartJson { id: p, kind: x.kind, region: x.region, top: x.top.clone(), bottom: x.bottom.clone() }
                })
                .collect(),
            boards: self
                .live_boards()
                .map(|b| {
                    let x = self.board(b);
                    BoardJson {
                        id: b,
                        parent: x.parent,
                        neg: x.neg.iter().map(|g| GateJson { id: g.id, out: g.out, inn: g.inn }).collect(),
                        pos_in: x.pos_in,
                        pos_out: x.pos_out,
                    }
                })
                .collect(),
            dotted: self.live_parts().filter_map(|p| self.part(p).dotted.map(|w| (p, w))).collect(),
            outer_top: self.top.clone(),
            outer_bottom: self.bottom.clone(),
        };
        serde_json::to_value(j).expect("graph serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Graph, GraphError> {
        let j: GraphJson = serde_json::from_value(v.clone()).map_err(|e| GraphError::Json(e.to_string()))?;
        let mut g = Graph::new();
        let sig = Signature::open();
        for w in j.wires {
            let ty = parse_type_with(&w.ty, &sig).map_err(|e| GraphError::Json(e.to_string()))?;
            if g.wires.len() <= w.id {
                g.wires.resize(w.id + 1, None);
            }
            g.wires[w.id] = Some(Wire { ty, region: w.region, upper: w.upper, lower: w.lower });
        }
        for p in j.parts {
            if g.parts.len() <= p.id {
                g.parts.resize(p.id + 1, None);
            }
            g.parts[p.id] = Some(Part { kind: p.kind, region: p.region, top: p.top, bottom: p.bottom, dotted: None });
        }
        for b in j.boards {
            if g.boards.len() <= b.id {
                g.boards.resize(b.id + 1, None);
            }
            for gate in &b.neg {
                g.next_gate = g.next_gate.max(gate.id + 1);
            }
            g.boards[b.id] = Some(Board {
                parent: b.parent,
                neg: b.neg.into_iter().map(|x| Gate { id: x.id, out: x.out, inn: x.inn }).collect(),
                pos_in: b.pos_in,
                pos_out: b.pos_out,
            });
        }
        for (p, w) in j.dotted {
            match g.parts.get_mut(p).and_then(|x| x.as_mut()) {
                Some(part) => part.dotted = Some(w),
                None => return Err(GraphError::Json(format!("dotted link from missing part {p}"))),
            }
        }
        g.top = j.outer_top;
        g.bottom = j.outer_bottom;
        let report = g.check_references();
        if let Some(v) = report {
            return Err(GraphError::Json(v));
        }
        Ok(g)
    }

    fn check_references(&self) -> Option<String> {
        for w in self.live_wires() {
            let wr = self.wire(w);
            if !self.end_refers(wr.upper, w) || !self.end_refers(wr.lower, w) {
                return Some(format!("wire {w} has inconsistent ends"));
            }
        }
        None
    }

    /// Graphviz rendering; boards are nested clusters.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph G {\n  rankdir=TB;\n  node [fontname=\"monospace\"];\n");
        let node_of = |end: End| -> String {
            match end {
                End::Open => "open".into(),
                End::Top(i) => format!("top{i}"),
                End::Bottom(i) => format!("bottom{i}"),
                End::PartTop(p, _) | End::PartBottom(p, _) => format!("p{p}"),
                End::NegOut(_, g) | End::NegIn(_, g) => format!("g{g}"),
                End::PosOut(b) | End::PosIn(b) => format!("pos{b}"),
            }
        };
        fn region_body(g: &Graph, r: Option<BoardId>, indent: usize, s: &mut String) {
            let pad = " ".repeat(indent);
            for p in g.live_parts().filter(|p| g.part(*p).region == r) {
                let _ = writeln!(s, "{pad}p{p} [label=\"{}\", shape=box];", g.part(p).kind.name());
            }
            if let Some(b) = r {
                for gate in &g.board(b).neg {
                    let _ = writeln!(s, "{pad}g{} [label=\"!\", shape=invtriangle];", gate.id);
                }
                let _ = writeln!(s, "{pad}pos{b} [label=\"!\", shape=triangle];");
            }
            for b in g.live_boards().filter(|b| g.board(*b).parent == r) {
                let _ = writeln!(s, "{pad}subgraph cluster_b{b} {{\n{pad}  label=\"board {b}\";");
                region_body(g, Some(b), indent + 2, s);
                let _ = writeln!(s, "{pad}}}");
            }
        }
        for i in 0..self.top.len() {
            let _ = writeln!(s, "  top{i} [label=\"top {i}\", shape=plaintext];");
        }
        for i in 0..self.bottom.len() {
            let _ = writeln!(s, "  bottom{i} [label=\"bottom {i}\", shape=plaintext];");
        }
        region_body(self, None, 2, &mut s);
        for w in self.live_wires() {
            let wr = self.wire(w);
            let _ = writeln!(
                s,
                "  {} -> {} [label=\"{}\"];",
                node_of(wr.upper),
                node_of(wr.lower),
                wr.ty.to_string().replace('"', "\\\"")
            );
        }
        for p in self.live_parts() {
            if let Some(h) = self.part(p).dotted {
                let _ = writeln!(s, "  p{p} -> {} [style=dashed, arrowhead=none];", node_of(self.wire(h).upper));
            }
        }
        s.push_str("}\n");
        s
    }
}
