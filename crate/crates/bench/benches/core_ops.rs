use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lieforge::commutator::group_commutator_factor;
use lieforge::relation::affine_relation_sequence;
use lieforge::words::{evaluate, word_jacobian};
use lieforge::{GroupKind, Tuple, Word};
use lieforge_bench::{algebra_points, factorizer, group_points, net};

fn exp_log(c: &mut Criterion) {
    for kind in [GroupKind::Su2, GroupKind::Sl3r] {
        let xs = algebra_points(kind, 64, 0.8, 1);
        let gs: Vec<_> = xs.iter().map(|x| x.exp()).collect();
        c.bench_function(&format!("exp/{kind}"), |b| b.iter(|| xs.iter().for_each(|x| drop(black_box(x.exp())))));
        c.bench_function(&format!("log/{kind}"), |b| b.iter(|| gs.iter().for_each(|g| drop(black_box(g.log())))));
    }
}

fn words(c: &mut Criterion) {
    let pair = Tuple::from_seed(GroupKind::So3, 7);
    let w = Word::parse_text(&"a b A B a a b ".repeat(16), 2).expect("valid text");
    c.bench_function("evaluate/so3/112", |b| b.iter(|| evaluate(black_box(&w), &pair)));
    c.bench_function("jacobian/so3/112", |b| b.iter(|| word_jacobian(black_box(&w), &pair)));
}

fn nearest(c: &mut Criterion) {
    let n = net(GroupKind::So3, 8);
    let qs = group_points(GroupKind::So3, 256, 1.0, 2);
    let mut g = c.benchmark_group("nearest/so3");
    g.bench_function("kd", |b| b.iter(|| qs.iter().filter_map(|q| n.nearest(q).ok()).count()));
    g.bench_function("linear", |b| b.iter(|| qs.iter().filter_map(|q| n.nearest_linear(q).ok()).count()));
    g.finish();
}

fn commutators(c: &mut Criterion) {
    for kind in [GroupKind::Su2, GroupKind::Sl3r] {
        let f = factorizer(kind);
        let zs = algebra_points(kind, 64, 1.0, 3);
        c.bench_function(&format!("weak_solve/{kind}"), |b| b.iter(|| zs.iter().filter_map(|z| f.solve(z).ok()).count()));
        let targets: Vec<_> = zs.iter().map(|z| z.scale(0.01).exp()).collect();
        c.bench_function(&format!("group_factor/{kind}"), |b| {
            b.iter(|| targets.iter().filter_map(|t| group_commutator_factor(&f, t).ok()).count())
        });
    }
}

fn build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build");
    g.sample_size(10);
    g.bench_function("net/so3/6", |b| b.iter(|| net(GroupKind::So3, 6)));
    g.bench_function("affine/40", |b| b.iter(|| affine_relation_sequence(0.3, 40)));
    g.finish();
}

criterion_group!(benches, exp_log, words, nearest, commutators, build);
criterion_main!(benches);
