//! Throughput of the main pipelines: term rewriting, graph normalization,
//! exact and modular coefficient enumeration, and the decision procedure.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lincat::decide::{decide_equal, prime_bound};
use lincat::enumerate::{pi_exact, pi_mod_p};
use lincat::generic::{echo_instance, generic_form, EchoParams};
use lincat::graph::Graph;
use lincat::padic::next_prime_above;
use lincat::rewrite::{normalize, RewriteConfig};
use lincat::semantics::{interpret_type, term_column, Interp};
use lincat_bench::{corpus, normal_graphs, workloads};

fn rewriting(c: &mut Criterion) {
    let cfg = RewriteConfig::default();
    let mut group = c.benchmark_group("normalize");
    for w in workloads() {
        group.bench_with_input(BenchmarkId::from_parameter(w.name), &w.judgement.term, |b, t| {
            b.iter(|| normalize(black_box(t), &cfg).unwrap())
        });
    }
    let terms = corpus(50);
    group.bench_function("corpus_50", |b| {
        b.iter(|| terms.iter().map(|j| normalize(&j.term, &cfg).unwrap().1.steps.len()).sum::<usize>())
    });
    group.finish();
}

fn graphs(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph_normal_of");
    for w in workloads() {
        group.bench_with_input(BenchmarkId::from_parameter(w.name), &w.judgement, |b, j| {
            b.iter(|| Graph::normal_of(black_box(j)).unwrap())
        });
    }
    group.finish();
}

fn exact_coefficients(c: &mut Criterion) {
    let interp = Interp::uniform(&["a", "b"], 2, 3);
    let terms = corpus(40);
    let graphs = normal_graphs(&terms);
    // One nonzero model entry per term whose annotations stay small.
    let samples: Vec<_> = terms
        .iter()
        .zip(&graphs)
        .filter_map(|(j, g)| {
            let beta = interpret_type(&j.target, &interp).ok()?.into_iter().next()?;
            let (alpha, _) = term_column(&j.term, &beta, &interp).ok()?.into_iter().next()?;
            Some((g, alpha, beta))
        })
        .collect();
    c.bench_function("pi_exact/corpus_40", |b| {
        b.iter(|| {
            samples
                .iter()
                .filter_map(|(g, a, x)| pi_exact(g, std::slice::from_ref(a), std::slice::from_ref(x), None).ok())
                .count()
        })
    });
}

fn echo_coefficients(c: &mut Criterion) {
    let mut group = c.benchmark_group("pi_mod_p_echo");
    for w in workloads() {
        let g = Graph::normal_of(&w.judgement).unwrap();
        let p = next_prime_above(prime_bound(&g, &g));
        let params = EchoParams::canonical(&generic_form(&g).unwrap(), &g, p);
        let (alpha, beta) = echo_instance(&g, &params).unwrap();
        if pi_mod_p(&g, &alpha, &beta, p, None).is_err() {
            continue;
        }
        group.bench_function(w.name, |b| b.iter(|| pi_mod_p(&g, black_box(&alpha), &beta, p, None).unwrap()));
    }
    group.finish();
}

fn deciding(c: &mut Criterion) {
    let cfg = RewriteConfig::default();
    let w = workloads();
    let (l, r) = (&w[0].judgement.term, &w[1].judgement.term);
    c.bench_function("decide/promotion_square", |b| b.iter(|| decide_equal(black_box(l), r, &cfg).unwrap()));
}

criterion_group!(benches, rewriting, graphs, exact_coefficients, echo_coefficients, deciding);
criterion_main!(benches);
