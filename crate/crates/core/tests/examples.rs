//! Worked examples of the graph, enumeration, echo and decision layers.

use lincat::decide::{decide_equal, decide_semantic, Verdict, Witness};
use lincat::enumerate::{pi_exact, pi_mod_p};
use lincat::generic::{
    check_stars, echo_instance, echo_of_forms, equivalent, generic_form, orient_flows, parse_form_pair,
    reconstruct_generic, reconstruct_graph, EchoParams,
};
use lincat::graph::{almost_equal, term_to_graph, End, Flow, Graph, PartKind, WireId};
use lincat::padic::{PElem, SymCount};
use lincat::rewrite::{normalize, RewriteConfig};
use lincat::semantics::{coeff, parse_element, Interp};
use lincat::syntax::{parse_term, typecheck, Judgement, TypeExpr};
use num_bigint::BigUint;

fn fixture_text(name: &str) -> String {
    let text = std::fs::read_to_string(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR")))
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"));
    text.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n")
}

fn judge(s: &str) -> Judgement {
    typecheck(&parse_term(s).unwrap()).unwrap()
}

fn fixture(name: &str) -> Judgement {
    judge(&fixture_text(name))
}

fn normal(s: &str) -> Graph {
    Graph::normal_of(&judge(s)).unwrap()
}

fn el(s: &str) -> lincat::semantics::Element {
    parse_element(s).unwrap()
}

fn kinds(g: &Graph) -> Vec<PartKind> {
    let mut k: Vec<PartKind> = g.live_parts().map(|p| g.part(p).kind).collect();
    k.sort();
    k
}

/// Reattach the lower ends of two wires to each other's ports.
fn swap_lower(g: &mut Graph, a: WireId, b: WireId) {
    let (la, lb) = (g.wire(a).lower, g.wire(b).lower);
    for (w, end) in [(a, lb), (b, la)] {
        g.wires[w].as_mut().unwrap().lower = end;
        match end {
            End::PartTop(p, i) => g.parts[p].as_mut().unwrap().top[i] = w,
            End::Bottom(i) => g.bottom[i] = w,
            End::NegOut(bd, gid) => {
                let board = g.boards[bd].as_mut().unwrap();
                board.neg.iter_mut().find(|x| x.id == gid).unwrap().out = w;
            }
            End::PosIn(bd) => g.boards[bd].as_mut().unwrap().pos_in = w,
            other => panic!("not a lower end: {other:?}"),
        }
    }
}

// --- graphs ----------------------------------------------------------------

#[test]
fn identity_and_duplicator_graphs() {
    let g = term_to_graph(&judge("id{a}")).unwrap();
    assert_eq!(g.stats().size, 1);
    assert_eq!(g.stats().dup_scale, BigUint::from(1u32));
    let d = normal("dup{a}");
    assert_eq!(kinds(&d).iter().filter(|k| **k == PartKind::Duplicator).count(), 1);
    let (top, bottom) = d.boundary_types();
    let bang_a = TypeExpr::bang(TypeExpr::atom("a"));
    assert_eq!(top, vec![bang_a.clone()]);
    assert_eq!(bottom, vec![TypeExpr::tensor(bang_a.clone(), bang_a.clone())]);
    let dup = d.live_parts().find(|p| d.part(*p).kind == PartKind::Duplicator).unwrap();
    let legs: Vec<TypeExpr> = d.part(dup).bottom.iter().map(|w| d.wire(*w).ty.clone()).collect();
    assert_eq!(legs, vec![bang_a.clone(), bang_a]);
}

#[test]
fn nested_boards_normalize_to_four_boards() {
    let g = Graph::normal_of(&fixture("nested_boards_g.lc")).unwrap();
    assert_eq!(g.stats().board_count, 4);
    assert!(g.check_wellformed().ok());
    assert_eq!(g.to_dot().matches("subgraph cluster").count(), 4);
}

#[test]
fn beta_steps() {
    // a unit introduced and eliminated at once leaves a bare wire
    let g = normal("lunitT'{a} ; lunitT{a}");
    assert_eq!((g.stats().size, g.live_parts().count()), (1, 0));
    // a tensor pair split at once is two parallel wires (η-expanded again
    // around the boundary a ⊗ b)
    let g = normal("symT{a,b} ; symT{b,a}");
    assert!(almost_equal(&g, &normal("id{a (x) b}")));
    assert_eq!(kinds(&g), vec![PartKind::TensorIntro, PartKind::TensorElim]);
    // normalization is a fixpoint
    let mut again = g.clone();
    again.normalize().unwrap();
    assert_eq!(again, g);
}

#[test]
fn eta_expansion() {
    assert_eq!(kinds(&normal("id{a (x) b}")), vec![PartKind::TensorIntro, PartKind::TensorElim]);
    assert!(normal("id{a}").live_parts().next().is_none());
    // a ! wire entering ε is not expanded into a board
    let g = normal("eps{a}");
    assert_eq!(g.stats().board_count, 0);
    assert_eq!(kinds(&g), vec![PartKind::EpsLens]);
}

#[test]
fn switching_check() {
    assert!(Graph::new().check_wellformed().ok());
    let g = Graph::normal_of(&fixture("nested_boards.lc")).unwrap();
    assert!(g.check_wellformed().ok());
    // reattaching one premise among same-typed wires of a region closes a
    // cycle in some switching
    let wires: Vec<WireId> = g.live_wires().collect();
    let mut cycles = 0;
    for (i, &a) in wires.iter().enumerate() {
        for &b in &wires[i + 1..] {
            let (wa, wb) = (g.wire(a), g.wire(b));
            if wa.ty != wb.ty || wa.region != wb.region || a == b {
                continue;
            }
            let mut m = g.clone();
            swap_lower(&mut m, a, b);
            let r = m.check_wellformed();
            if r.violations.iter().any(|v| v.contains("has a cycle")) {
                cycles += 1;
            }
        }
    }
    assert!(cycles > 0);
}

#[test]
fn almost_equality() {
    // a unit's dotted link may sit on any wire of its region
    let g = normal("lunitT'{a}");
    let unit = g.live_parts().find(|p| g.part(*p).kind.is_terminal()).unwrap();
    let host = g.part(unit).dotted;
    let other = g.live_wires().find(|w| Some(*w) != host && g.wire(*w).region == g.part(unit).region).unwrap();
    let mut moved = g.clone();
    moved.parts[unit].as_mut().unwrap().dotted = Some(other);
    assert_ne!(moved, g);
    assert!(almost_equal(&moved, &g));
    // the legs of a duplicator commute
    let g = normal("dup{a}");
    let dup = g.live_parts().find(|p| g.part(*p).kind == PartKind::Duplicator).unwrap();
    let (l0, l1) = (g.part(dup).bottom[0], g.part(dup).bottom[1]);
    let mut swapped = g.clone();
    swap_lower(&mut swapped, l0, l1);
    assert!(almost_equal(&swapped, &g));
    assert!(!almost_equal(&normal("dup{a}"), &normal("weak{a}")));
}

#[test]
fn duplicator_scale() {
    assert_eq!(normal("id{a}").stats().dup_scale, BigUint::from(1u32));
    let g = Graph::normal_of(&fixture("duplicator_echo.lc")).unwrap();
    assert_eq!(g.stats().dup_scale, BigUint::from(2u32));
    let g = normal("dup{a} ; (dup{a} (x) id{!a})");
    assert_eq!(g.stats().dup_scale, BigUint::from(6u32));
}

#[test]
fn renderings() {
    assert_eq!(normal("id{a}").to_dot().matches("->").count(), 1);
    let g = Graph::normal_of(&fixture("nested_boards.lc")).unwrap();
    assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g);
}

// --- enumeration -----------------------------------------------------------

#[test]
fn wire_and_eliminator_annotations() {
    let g = normal("id{a}");
    assert_eq!(pi_exact(&g, &[el("a0")], &[el("a0")], None).unwrap(), BigUint::from(1u32));
    assert_eq!(pi_exact(&g, &[el("a0")], &[el("a1")], None).unwrap(), BigUint::from(0u32));
    let g = normal("weak{a}");
    assert_eq!(pi_exact(&g, &[el("{}")], &[el("*")], None).unwrap(), BigUint::from(1u32));
    assert_eq!(pi_exact(&g, &[el("{a0}")], &[el("*")], None).unwrap(), BigUint::from(0u32));
}

#[test]
fn duplicator_splits_count_distinct_leg_orders() {
    // {x,x,y} splits as ({x},{x,y}) in exactly one way once the legs are
    // ordered; the matrix model agrees
    let j = judge("dup{a}");
    let g = Graph::normal_of(&j).unwrap();
    let interp = Interp::new([("a".to_string(), vec!["x".to_string(), "y".to_string()])].into_iter().collect(), 3);
    let (top, bottom) = (el("{x,x,y}"), el("({x},{x,y})"));
    let model = coeff(&j, &top, &bottom, &interp).unwrap();
    assert_eq!(model, BigUint::from(1u32));
    assert_eq!(pi_exact(&g, &[top], &[bottom], None).unwrap(), model);
}

#[test]
fn board_shortcuts_modulo_p() {
    // one board around γ: its column at ∗ is every diagonal pair
    let p = 5;
    let g = normal("!(gamma{a})");
    let star = PElem::block(PElem::Star, SymCount::double_pow(p, 0));
    let diag = |l: &str| PElem::pair(PElem::atom(l), PElem::atom(l));
    let homogeneous = PElem::block(diag("a0"), SymCount::double_pow(p, 0));
    assert_eq!(pi_mod_p(&g, &[homogeneous], std::slice::from_ref(&star), p, None).unwrap(), 1);
    let mixed = PElem::Bag([(diag("a0"), SymCount::from_u64(1, p)), (diag("a1"), SymCount::from_u64(4, p))].into());
    assert_eq!(pi_mod_p(&g, &[mixed], &[star], p, None).unwrap(), 0);
    let exact = pi_exact(&g, &[el("{(a0,a0),(a1,a1),(a1,a1),(a1,a1),(a1,a1)}")], &[el("{*,*,*,*,*}")], None).unwrap();
    assert_eq!(exact, BigUint::from(5u32));
}

// --- echo instances ----------------------------------------------------------

#[test]
fn orientation() {
    let g = normal("id{a}");
    assert_eq!(orient_flows(&g).unwrap().values().copied().collect::<Vec<_>>(), vec![Flow::Source]);
}

#[test]
fn nested_boards_echo_matches_the_transcription() {
    let g = Graph::normal_of(&fixture("nested_boards.lc")).unwrap();
    let forms = parse_form_pair(&fixture_text("nested_boards.form")).unwrap();
    assert!(equivalent(&generic_form(&g).unwrap(), &forms));
    let params = EchoParams {
        p: 41,
        k: [("l", 1), ("k", 2), ("j", 3), ("i", 4)].iter().map(|(b, k)| (b.to_string(), *k)).collect(),
        labels: [("x", "a"), ("y", "b"), ("z", "c"), ("w", "d"), ("v", "e")]
            .iter()
            .map(|(v, l)| (v.to_string(), l.to_string()))
            .collect(),
    };
    let (alpha, beta) = echo_of_forms(&forms, &g.boundary_types(), &params).unwrap();
    let want: Vec<String> = fixture_text("nested_boards.echo").lines().map(str::to_string).collect();
    assert_eq!(vec![alpha[0].to_string(), beta[0].to_string()], want);
    assert!(check_stars(&g, &alpha, &beta, 41).all());
    let rebuilt = reconstruct_generic(&alpha, &beta, 41).unwrap();
    assert!(equivalent(&rebuilt, &forms));
    assert!(almost_equal(&reconstruct_graph(&forms, &g.boundary_types()).unwrap(), &g));
}

#[test]
fn small_echo_instances() {
    let show = |s: &str| {
        let g = normal(s);
        let f = generic_form(&g).unwrap();
        let (a, b) = echo_instance(&g, &EchoParams::canonical(&f, &g, 3)).unwrap();
        (a[0].to_string(), b[0].to_string())
    };
    assert_eq!(show("id{a}"), ("a0".to_string(), "a0".to_string()));
    assert_eq!(show("weak{a}"), ("{}".to_string(), "*".to_string()));
    let rebuilt = reconstruct_generic(&[PElem::atom("a")], &[PElem::atom("a")], 3).unwrap();
    assert!(equivalent(&rebuilt, &parse_form_pair("x ; x").unwrap()));
}

#[test]
fn a_doubled_atom_fails_the_atom_condition() {
    let g = normal("id{a (x) a}");
    let pair = PElem::pair(PElem::atom("a0"), PElem::atom("a0"));
    let r = check_stars(&g, std::slice::from_ref(&pair), std::slice::from_ref(&pair), 5);
    assert!(!r.holds[4]);
}

#[test]
fn graph_reconstruction() {
    let g = normal("dup{a}");
    let f = generic_form(&g).unwrap();
    assert!(almost_equal(&reconstruct_graph(&f, &g.boundary_types()).unwrap(), &g));
    let g = Graph::normal_of(&fixture("nested_boards_g.lc")).unwrap();
    let f = generic_form(&g).unwrap();
    assert!(almost_equal(&reconstruct_graph(&f, &g.boundary_types()).unwrap(), &g));
    // a lone ∗ at a bottom wire of type 1 becomes a linked unit introduction
    let g = normal("lunitT'{a}");
    let f = generic_form(&g).unwrap();
    let r = reconstruct_graph(&f, &g.boundary_types()).unwrap();
    let unit = r.live_parts().find(|p| r.part(*p).kind == PartKind::UnitIntro).unwrap();
    assert!(r.part(unit).dotted.is_some());
    assert!(almost_equal(&r, &g));
}

// --- decisions ---------------------------------------------------------------

#[test]
fn decisions() {
    let cfg = RewriteConfig::default();
    let f = judge("dup{a} ; (eps{a} (x) id{!a})");
    let padded = parse_term(&format!("{} ; id{{a (x) !a}}", f.term)).unwrap();
    assert_eq!(decide_equal(&f.term, &padded, &cfg).unwrap().verdict, Verdict::EquivalentUpToSim);
    let (l, r) = (fixture("promotion_square_left.lc"), fixture("promotion_square_right.lc"));
    assert_eq!(decide_equal(&l.term, &r.term, &cfg).unwrap().verdict, Verdict::EquivalentUpToSim);
    let counit = parse_term("dup{a} ; (weak{a} (x) id{!a}) ; lunitT{!a}").unwrap();
    let (_, trace) = normalize(&counit, &cfg).unwrap();
    assert!(trace.rule_ids().contains(&8));
    let id = parse_term("id{!a}").unwrap();
    assert_eq!(decide_equal(&counit, &id, &cfg).unwrap().verdict, Verdict::EquivalentUpToSim);
    let swap = parse_term("symT{!a,!a}").unwrap();
    let id2 = parse_term("id{!a (x) !a}").unwrap();
    assert!(matches!(decide_equal(&swap, &id2, &cfg).unwrap().verdict, Verdict::Distinct(_)));
}

#[test]
fn semantic_decisions() {
    let cfg = RewriteConfig::default();
    let f = parse_term("dup{a} ; symT{!a,!a}").unwrap();
    let g = parse_term("dup{a}").unwrap();
    let (d, report) = decide_semantic(&f, &g, None, &cfg).unwrap();
    assert_eq!(d.verdict, Verdict::EquivalentUpToSim);
    assert!(report.unwrap().reconstructed.is_some());
    let swap = parse_term("symT{!a,!a}").unwrap();
    let id2 = parse_term("id{!a (x) !a}").unwrap();
    let (d, _) = decide_semantic(&swap, &id2, None, &cfg).unwrap();
    match d.verdict {
        Verdict::Distinct(Witness::Echo { condition, .. }) => assert_eq!(condition, 1),
        other => panic!("expected an echo witness, got {other:?}"),
    }
    assert!(decide_semantic(&swap, &id2, Some(2), &cfg).is_err());
}

#[test]
fn copied_and_erased_unit_boards_stay_connected() {
    // The unit eliminated by `phi0` hangs on a dotted link to the board's
    // conclusion; copying or erasing that board must re-host the link.
    for s in ["phi0 ; dup{1}", "phi0 ; dup{1} ; symT{!1,!1}", "phi0 ; weak{1}", "phi0 ; dup{1} ; (weak{1} (x) id{!1})"] {
        let g = normal(s);
        let wf = g.check_wellformed();
        assert!(wf.ok(), "{s}: {:?}", wf.violations);
    }
}
