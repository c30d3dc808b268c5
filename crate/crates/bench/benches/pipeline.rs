use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lesion_bench::{feature_rows, photo, tied_scores};
use lesion_core::mlp::batch_gradients;
use lesion_core::preprocess::INPUT_SIDE;
use lesion_core::{
    apply_transform, embed, forward, init_params, resize_bilinear, roc_auc, stub_backend, AdamHyper, AdamState,
    TransformKind,
};

fn mlp(c: &mut Criterion) {
    let params = init_params(1);
    let (xs, ys) = feature_rows(32);
    c.bench_function("forward_1000x1000x2", |b| b.iter(|| forward(&params, black_box(&xs[0])).unwrap()));

    let traces: Vec<_> = xs.iter().map(|x| forward(&params, x).unwrap()).collect();
    c.bench_function("batch_gradients_32", |b| {
        b.iter(|| batch_gradients(black_box(&traces), &params, &ys).unwrap())
    });

    let grads = batch_gradients(&traces, &params, &ys).unwrap();
    let hyper = AdamHyper::default();
    c.bench_function("adam_step_1m_params", |b| {
        b.iter_batched_ref(
            || (params.clone(), AdamState::new(&params)),
            |(p, s)| s.step(p, &grads, &hyper).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn evaluation(c: &mut Criterion) {
    let (scores, labels) = tied_scores(10_000);
    c.bench_function("roc_auc_10k", |b| b.iter(|| roc_auc(black_box(&scores), &labels).unwrap()));
}

fn images(c: &mut Criterion) {
    let raw = photo(1024, 768);
    c.bench_function("resize_1024x768_to_299", |b| {
        b.iter(|| resize_bilinear(black_box(&raw), INPUT_SIDE, INPUT_SIDE).unwrap())
    });

    let input = resize_bilinear(&raw, INPUT_SIDE, INPUT_SIDE).unwrap();
    let mut group = c.benchmark_group("augment");
    for kind in TransformKind::ALL {
        group.bench_function(kind.name(), |b| b.iter(|| apply_transform(black_box(&input), kind, 7)));
    }
    group.finish();

    let backend = stub_backend(42);
    c.bench_function("stub_embed", |b| b.iter(|| embed(&backend, black_box(&input)).unwrap()));
}

criterion_group!(benches, mlp, evaluation, images);
criterion_main!(benches);
