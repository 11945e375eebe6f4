use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use foml_bench::*;
use foml_core::encodings::phi2;
use foml_core::sampler::Sampler;
use foml_core::*;

fn tableau(c: &mut Criterion) {
    let lbf = lbf_corpus(100, 14);
    let abbabe = abbabe_corpus(50, 10);
    let mut g = c.benchmark_group("tableau");
    for strategy in [Strategy::Fast, Strategy::Reference] {
        let solver = Solver::new(Config { strategy, ..Config::default() });
        g.bench_function(BenchmarkId::new("lbf_corpus", format!("{strategy:?}")), |b| {
            b.iter(|| lbf.iter().filter(|f| solver.solve(black_box(f), Mode::Lbf).unwrap().result.is_sat()).count())
        });
        g.bench_function(BenchmarkId::new("abbabe_corpus", format!("{strategy:?}")), |b| {
            b.iter(|| abbabe.iter().filter(|f| solver.solve(black_box(f), Mode::Abbabe).unwrap().result.is_sat()).count())
        });
    }
    for n in 1..=2 {
        let f = alpha(n);
        g.bench_with_input(BenchmarkId::new("alpha", n), &f, |b, f| b.iter(|| solve_lbf(black_box(f)).unwrap()));
    }
    for (name, inst) in tilings() {
        let f = beta(&inst, 1);
        g.bench_with_input(BenchmarkId::new("beta1", name), &f, |b, f| b.iter(|| solve_lbf(black_box(f)).unwrap()));
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    let f = to_nnf(&phi2());
    g.bench_function("phi2_3_2_3_1", |b| b.iter(|| sat_bounded(black_box(&f), &SearchBounds::new(3, 2, 3, 1)).unwrap()));
    let corpus = lbf_corpus(50, 10);
    g.bench_function("lbf_corpus_growth_0", |b| {
        b.iter(|| {
            corpus
                .iter()
                .filter(|f| {
                    let dia = f.count(&|g| matches!(g, Formula::Dia(_)));
                    let bounds = SearchBounds::new(f.modal_depth(), dia, f.free_vars().len() + 2, 0);
                    sat_bounded(f, &bounds).map(|r| r.is_found()).unwrap_or(false)
                })
                .count()
        })
    });
    g.finish();
}

fn syntax_and_semantics(c: &mut Criterion) {
    let mut s = Sampler::new(SEED);
    let raws: Vec<RawFormula> = (0..200).map(|_| s.raw(16)).collect();
    let texts: Vec<String> = raws.iter().map(print).collect();
    let cases: Vec<_> = raws
        .iter()
        .map(|r| {
            let m = s.model(5, 3);
            let (w, sigma) = s.placement(&m, r.free_vars());
            (to_nnf(r), m, w, sigma)
        })
        .collect();
    c.bench_function("parse_200", |b| b.iter(|| texts.iter().filter(|t| parse(black_box(t)).is_ok()).count()));
    c.bench_function("print_200", |b| b.iter(|| raws.iter().map(|r| print(black_box(r)).len()).sum::<usize>()));
    c.bench_function("nnf_200", |b| b.iter(|| raws.iter().map(|r| to_nnf(black_box(r)).size()).sum::<usize>()));
    c.bench_function("check_200", |b| {
        b.iter(|| cases.iter().filter(|(f, m, w, sigma)| m.check(w, sigma, black_box(f)).unwrap()).count())
    });
}

criterion_group!(benches, tableau, oracle, syntax_and_semantics);
criterion_main!(benches);
