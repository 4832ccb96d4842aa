//! Parallel against sequential batch normalization of a generated corpus.

use criterion::{criterion_group, criterion_main, Criterion};
use pullback::batch;
use pullback::corpus::{first_order_corpus, random_point, rng};
use pullback::engine::{Engine, DEFAULT_FUEL};
use pullback::syntax::{basis_dual, encode_vector};
use pullback::{Registry, Term};

fn corpus(count: usize) -> Vec<Term> {
    let mut r = rng(7);
    first_order_corpus(7, count)
        .into_iter()
        .map(|prog| {
            let x = random_point(&mut r, prog.n_in);
            let Term::Lam(b, body) = prog.f else { unreachable!() };
            let omega = basis_dual(1, prog.n_out).unwrap();
            Term::app(Term::Pullback(b, body, Box::new(omega)), encode_vector(&x))
        })
        .collect()
}

fn normalize(c: &mut Criterion) {
    let terms = corpus(64);
    let engine = Engine::new(Registry::builtin()).with_fuel(DEFAULT_FUEL).recording(false);
    let mut group = c.benchmark_group("normalize 64 pullbacks");
    group.bench_function("parallel", |b| b.iter(|| batch::map(&terms, |t| engine.normalize(t).is_ok())));
    group.bench_function("sequential", |b| b.iter(|| batch::map_sequential(&terms, |t| engine.normalize(t).is_ok())));
    group.finish();
}

fn jacobian(c: &mut Criterion) {
    let engine = Engine::new(Registry::builtin()).with_fuel(DEFAULT_FUEL).recording(false);
    let prog = first_order_corpus(11, 64).into_iter().max_by_key(|p| p.n_in * p.n_out).unwrap();
    let x = vec![0.3; prog.n_in];
    c.bench_function("jacobian rows", |b| b.iter(|| batch::jacobian(&engine, &prog.f, &x).unwrap()));
}

criterion_group!(benches, normalize, jacobian);
criterion_main!(benches);
