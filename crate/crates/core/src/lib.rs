//! Normalization and equality decision for morphisms of the free
//! classical linear category.
//!
//! The crate is organised bottom-up:
//!
//! * [`syntax`] — objects, morphism terms, the text DSL and typechecking;
//! * [`rewrite`] — the oriented rules and congruences, with a
//!   leftmost-innermost normalization strategy and replayable traces;
//! * [`semantics`] — the relational model of linear normal functors as
//!   exact coefficient matrices, used as an independent oracle;
//! * [`graph`] — the two-sided proof-net representation with boards,
//!   β-contraction, constrained η-expansion, the switching check and
//!   comparison up to unit routing;
//! * [`padic`] — base-`p` symbolic cardinalities for echo instances;
//! * [`enumerate`] — the enumeration process computing coefficients from a
//!   normal graph, exactly and modulo a prime;
//! * [`generic`] — flows, generic forms, echo instances, the five echo
//!   conditions and both reconstruction procedures;
//! * [`decide`] — the end-to-end decision procedures;
//! * [`corpus`] — a seeded, type-directed generator of well-typed terms.

pub mod corpus;
pub mod decide;
pub mod enumerate;
pub mod generic;
pub mod graph;
pub mod padic;
pub mod rewrite;
pub mod semantics;
pub mod syntax;
