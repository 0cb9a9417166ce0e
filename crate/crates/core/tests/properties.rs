//! Property tests over randomly generated terms and numbers.

use lincat::corpus::{random_term, CorpusConfig};
use lincat::decide::{decide_equal, Verdict};
use lincat::generic::{equivalent, generic_form, parse_form_pair};
use lincat::graph::{almost_equal, Graph};
use lincat::padic::SymCount;
use lincat::rewrite::{is_normal, normalize, replay, RewriteConfig};
use lincat::syntax::{parse_term, parse_type, typecheck, Judgement, Term};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SOURCES: &[&str] = &["!a", "!a (x) !b", "a (x) b", "!(a (x) b)", "!!a", "1", "a (%) b", "!1", "a (x) #"];

fn term_from(seed: u64, src: usize) -> Judgement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ty = parse_type(SOURCES[src % SOURCES.len()]).unwrap();
    typecheck(&random_term(&mut rng, &CorpusConfig::default(), &ty)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn printed_terms_parse_back(seed in any::<u64>(), src in 0usize..9) {
        let j = term_from(seed, src);
        let back = parse_term(&j.term.to_string()).unwrap();
        prop_assert_eq!(back, j.term);
    }

    #[test]
    fn normalization_is_sound_idempotent_and_replayable(seed in any::<u64>(), src in 0usize..9) {
        let cfg = RewriteConfig::default();
        let j = term_from(seed, src);
        let (nf, trace) = normalize(&j.term, &cfg).unwrap();
        let k = typecheck(&nf).unwrap();
        prop_assert_eq!((&k.source, &k.target), (&j.source, &j.target));
        prop_assert!(is_normal(&nf, &cfg).unwrap());
        prop_assert_eq!(normalize(&nf, &cfg).unwrap().0, nf.clone());
        prop_assert_eq!(replay(&j.term, &trace).unwrap(), nf);
    }

    #[test]
    fn a_term_decides_equal_to_its_padded_self(seed in any::<u64>(), src in 0usize..9) {
        let j = term_from(seed, src);
        let padded = Term::comp(j.term.clone(), Term::id(j.target.clone()));
        let d = decide_equal(&j.term, &padded, &RewriteConfig::default()).unwrap();
        prop_assert_eq!(d.verdict, Verdict::EquivalentUpToSim);
    }

    #[test]
    fn normal_graphs_are_well_formed(seed in any::<u64>(), src in 0usize..9) {
        let g = Graph::normal_of(&term_from(seed, src)).unwrap();
        let wf = g.check_wellformed();
        prop_assert!(wf.ok(), "{:?}", wf.violations);
    }

    #[test]
    fn graph_json_round_trips(seed in any::<u64>(), src in 0usize..9) {
        let g = Graph::normal_of(&term_from(seed, src)).unwrap();
        let back = Graph::from_json(&g.to_json()).unwrap();
        prop_assert!(almost_equal(&g, &back));
    }

    #[test]
    fn generic_forms_print_and_parse_up_to_renaming(seed in any::<u64>(), src in 0usize..9) {
        let g = Graph::normal_of(&term_from(seed, src)).unwrap();
        let f = generic_form(&g).unwrap();
        let back = parse_form_pair(&f.to_string()).unwrap();
        prop_assert!(equivalent(&f, &back));
        prop_assert!(equivalent(&f.canonical(), &f));
    }

    #[test]
    fn symbolic_counts_agree_with_integers(a in 0u64..5000, b in 0u64..5000, p in prop::sample::select(vec![2u64, 3, 5, 7, 11])) {
        let (x, y) = (SymCount::from_u64(a, p), SymCount::from_u64(b, p));
        prop_assert_eq!(x.add(&y).to_u64(), Some(a + b));
        prop_assert_eq!(x.mul(&y).to_u64(), Some(a * b));
        prop_assert_eq!(x.residue(), a % p);
        prop_assert_eq!(SymCount::from_biguint(&BigUint::from(a), p), x.clone());
        match x.checked_sub(&y) {
            Some(d) => prop_assert_eq!(d.to_u64(), Some(a - b)),
            None => prop_assert!(a < b),
        }
    }
}
