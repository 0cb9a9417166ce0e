//! A seeded generator of well-typed closed terms.
//!
//! Terms are grown forwards from a source type: at each step a generator
//! or structural map applicable to the current type is chosen by the
//! type's shape, possibly under a functor (`f ⊗ id`, `id ⅋ f`, `!f`).
//! Tautologies and contradictions are only introduced at `!`-free types,
//! where the truncated model has finite columns. Type growth is bounded so
//! that the semantic oracle stays cheap.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::rewrite::{normalize_random, RewriteConfig};
use crate::syntax::{typecheck, Generator, Judgement, Term, TypeExpr};

/// Parameters of a corpus.
#[derive(Clone, Debug)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
    /// Maximum depth of the term tree.
    pub max_depth: usize,
    /// Maximum number of nodes of any intermediate type.
    pub max_type_size: usize,
    /// Maximum nesting of `!` in any intermediate type.
    pub max_bang_depth: usize,
    pub atoms: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { seed: 1, count: 100, max_depth: 6, max_type_size: 9, max_bang_depth: 2, atoms: vec!["a".into(), "b".into()] }
    }
}

/// Depth of a term tree; generators and identities have depth 1.
pub fn term_depth(t: &Term) -> usize {
    match t {
        Term::Id(_) | Term::Gen(..) | Term::Var(..) => 1,
        Term::Comp(f, g) | Term::Tensor(f, g) | Term::Par(f, g) => 1 + term_depth(f).max(term_depth(g)),
        Term::Bang(f) => 1 + term_depth(f),
    }
}

fn type_size(t: &TypeExpr) -> usize {
    match t {
        TypeExpr::Atom(_) | TypeExpr::One | TypeExpr::Bot => 1,
        TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => 1 + type_size(a) + type_size(b),
        TypeExpr::Dual(a) | TypeExpr::Bang(a) => 1 + type_size(a),
    }
}

fn bang_free(t: &TypeExpr) -> bool {
    match t {
        TypeExpr::Atom(_) | TypeExpr::One | TypeExpr::Bot => true,
        TypeExpr::Tensor(a, b) | TypeExpr::Par(a, b) => bang_free(a) && bang_free(b),
        TypeExpr::Dual(a) => bang_free(a),
        TypeExpr::Bang(_) => false,
    }
}

struct Gen<'c, R: Rng> {
    cfg: &'c CorpusConfig,
    rng: &'c mut R,
}

impl<'c, R: Rng> Gen<'c, R> {
    fn atom(&mut self) -> TypeExpr {
        TypeExpr::atom(self.cfg.atoms.choose(self.rng).expect("atoms"))
    }

    fn small_type(&mut self) -> TypeExpr {
        let a = self.atom();
        let b = self.atom();
        match self.rng.gen_range(0..12) {
            0 => a,
            1..=3 => TypeExpr::bang(a),
            4 => TypeExpr::tensor(a, b),
            5 | 6 => TypeExpr::tensor(TypeExpr::bang(a), TypeExpr::bang(b)),
            7 => TypeExpr::par(a, b),
            8 => TypeExpr::bang(TypeExpr::tensor(a, b)),
            9 => TypeExpr::One,
            _ => TypeExpr::bang(TypeExpr::bang(a)),
        }
    }

    fn fits(&self, t: &TypeExpr) -> bool {
        type_size(t) <= self.cfg.max_type_size && t.bang_depth() <= self.cfg.max_bang_depth
    }

    /// One map out of `ty`, of depth at most `depth`.
    fn step(&mut self, ty: &TypeExpr, depth: usize) -> Option<Term> {
        if depth == 0 {
            return None;
        }
        use Generator as G;
        let mut options: Vec<Term> = Vec::new();
        let g = |gen: Generator, args: Vec<TypeExpr>| Term::gen(gen, args);
        match ty {
            TypeExpr::Bang(a) => {
                options.push(g(G::Eps, vec![(**a).clone()]));
                options.push(g(G::Dup, vec![(**a).clone()]));
                options.push(g(G::Weak, vec![(**a).clone()]));
                options.push(g(G::Delta, vec![(**a).clone()]));
                if depth >= 2 {
                    if let Some(f) = self.step(a, depth - 1) {
                        options.push(Term::bang(f));
                    }
                }
            }
            TypeExpr::Tensor(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                options.push(g(G::SymT, vec![a.clone(), b.clone()]));
                if let (TypeExpr::Bang(x), TypeExpr::Bang(y)) = (&a, &b) {
                    options.push(g(G::PhiT, vec![(**x).clone(), (**y).clone()]));
                    options.push(g(G::PhiT, vec![(**x).clone(), (**y).clone()]));
                }
                if let TypeExpr::Tensor(x, y) = &a {
                    options.push(g(G::AssocT, vec![(**x).clone(), (**y).clone(), b.clone()]));
                }
                if let TypeExpr::Tensor(x, y) = &b {
                    options.push(g(G::AssocTInv, vec![a.clone(), (**x).clone(), (**y).clone()]));
                }
                if let TypeExpr::Par(x, y) = &b {
                    options.push(g(G::Dist, vec![a.clone(), (**x).clone(), (**y).clone()]));
                }
                if let TypeExpr::Par(x, y) = &a {
                    options.push(g(G::DistP, vec![(**x).clone(), (**y).clone(), b.clone()]));
                }
                if a == TypeExpr::One {
                    options.push(g(G::LUnitT, vec![b.clone()]));
                }
                if b == TypeExpr::One {
                    options.push(g(G::RUnitT, vec![a.clone()]));
                }
                if let TypeExpr::Dual(x) = &a {
                    if **x == b && bang_free(&b) {
                        options.push(g(G::Gamma, vec![b.clone()]));
                    }
                }
                if let (TypeExpr::Tensor(p, q), TypeExpr::Tensor(r, s)) = (&a, &b) {
                    options.push(g(G::ShufT, vec![(**p).clone(), (**q).clone(), (**r).clone(), (**s).clone()]));
                }
                if depth >= 2 {
                    if let Some(f) = self.step(&a, depth - 1) {
                        options.push(Term::tensor(f, Term::id(b.clone())));
                    }
                    if let Some(f) = self.step(&b, depth - 1) {
                        options.push(Term::tensor(Term::id(a.clone()), f));
                    }
                }
            }
            TypeExpr::Par(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                options.push(g(G::SymP, vec![a.clone(), b.clone()]));
                if let TypeExpr::Par(x, y) = &a {
                    options.push(g(G::AssocP, vec![(**x).clone(), (**y).clone(), b.clone()]));
                }
                if let TypeExpr::Par(x, y) = &b {
                    options.push(g(G::AssocPInv, vec![a.clone(), (**x).clone(), (**y).clone()]));
                }
                if a == TypeExpr::Bot {
                    options.push(g(G::LUnitP, vec![b.clone()]));
                }
                if b == TypeExpr::Bot {
                    options.push(g(G::RUnitP, vec![a.clone()]));
                }
                if depth >= 2 {
                    if let Some(f) = self.step(&a, depth - 1) {
                        options.push(Term::par(f, Term::id(b.clone())));
                    }
                    if let Some(f) = self.step(&b, depth - 1) {
                        options.push(Term::par(Term::id(a.clone()), f));
                    }
                }
            }
            TypeExpr::One => {
                options.push(g(G::Phi0, vec![]));
                let x = self.atom();
                options.push(g(G::Tau, vec![x]));
            }
            _ => {}
        }
        // unit introductions apply everywhere, but are kept rare so that
        // they do not crowd out the exponential structure
        if options.is_empty() || self.rng.gen_bool(0.15) {
            let unit = [G::RUnitTInv, G::LUnitTInv, G::RUnitPInv].choose(self.rng).copied().expect("three");
            options.push(g(unit, vec![ty.clone()]));
        }
        options.shuffle(self.rng);
        options.into_iter().find(|t| typecheck(t).map(|j| self.fits(&j.target)).unwrap_or(false))
    }

    /// A chain of steps from `src`.
    fn chain(&mut self, src: &TypeExpr) -> Term {
        let max = self.cfg.max_depth;
        let len = self.rng.gen_range(1..=4usize);
        let mut ty = src.clone();
        let mut steps: Vec<Term> = Vec::new();
        // a composite of n factors adds at most n - 1 levels
        let room = max.saturating_sub(len - 1).max(1);
        for _ in 0..len {
            match self.step(&ty, room) {
                Some(t) => {
                    ty = typecheck(&t).expect("well typed").target;
                    steps.push(t);
                }
                None => break,
            }
        }
        let term = match steps.len() {
            0 => Term::id(src.clone()),
            _ => Term::seq(steps),
        };
        if term_depth(&term) > max {
            Term::id(src.clone())
        } else {
            term
        }
    }
}

/// A term out of `src` of depth at most `cfg.max_depth`.
pub fn random_term<R: Rng>(rng: &mut R, cfg: &CorpusConfig, src: &TypeExpr) -> Term {
    Gen { cfg, rng }.chain(src)
}

/// `cfg.count` typed terms; deterministic in `cfg.seed`.
pub fn generate(cfg: &CorpusConfig) -> Vec<Judgement> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    let mut attempts = 0;
    while out.len() < cfg.count && attempts < cfg.count * 20 {
        attempts += 1;
        let mut gen = Gen { cfg, rng: &mut rng };
        let src = gen.small_type();
        let t = gen.chain(&src);
        if matches!(t, Term::Id(_)) && gen.rng.gen_bool(0.8) {
            continue;
        }
        if let Ok(j) = typecheck(&t) {
            out.push(j);
        }
    }
    out
}

/// A term equal to `j` in the free category that differs syntactically:
/// a randomly normalized form, or the original padded with a unit round
/// trip on either side.
pub fn equal_variant<R: Rng>(rng: &mut R, j: &Judgement, cfg: &RewriteConfig) -> Term {
    let pad = |t: &TypeExpr| {
        Term::seq(vec![
            Term::gen(Generator::RUnitTInv, vec![t.clone()]),
            Term::gen(Generator::RUnitT, vec![t.clone()]),
        ])
    };
    match rng.gen_range(0..3) {
        0 => {
            if let Ok((nf, _)) = normalize_random(&j.term, cfg, rng) {
                return nf;
            }
            Term::comp(j.term.clone(), Term::id(j.target.clone()))
        }
        1 => Term::comp(pad(&j.source), j.term.clone()),
        _ => Term::comp(j.term.clone(), pad(&j.target)),
    }
}

/// Corpus terms grouped by boundary `(source, target)`.
pub fn by_boundary(corpus: &[Judgement]) -> BTreeMap<(TypeExpr, TypeExpr), Vec<Judgement>> {
    let mut out: BTreeMap<(TypeExpr, TypeExpr), Vec<Judgement>> = BTreeMap::new();
    for j in corpus {
        out.entry((j.source.clone(), j.target.clone())).or_default().push(j.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_typed_bounded_and_reproducible() {
        let cfg = CorpusConfig { count: 60, ..CorpusConfig::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.len(), 60);
        assert_eq!(a, b);
        for j in &a {
            assert!(term_depth(&j.term) <= 6, "{}", j.term);
        }
        let other = generate(&CorpusConfig { seed: 2, ..cfg });
        assert_ne!(a, other);
    }
}
