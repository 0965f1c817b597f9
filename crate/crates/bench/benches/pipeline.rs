use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use hyperbench::config::{PsfFamily, PsfSpec};
use hyperbench::degrade::{add_awgn, downsample_area};
use hyperbench::metrics::evaluate_all;
use hyperbench::psf::{blur, make_kernel};
use hyperbench_bench::scene;

fn bench_blur(c: &mut Criterion) {
    let cube = scene(128, 31);
    let mut group = c.benchmark_group("blur_128x128x31");
    for size in [5usize, 13, 31] {
        let kernel = make_kernel(&PsfSpec::new(PsfFamily::Gaussian).with_size(size)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(size), &kernel, |b, k| {
            b.iter(|| blur(black_box(&cube), k).unwrap())
        });
    }
    group.finish();
}

fn bench_downsample(c: &mut Criterion) {
    let cube = scene(128, 31);
    c.bench_function("downsample_area_x4_128x128x31", |b| {
        b.iter(|| downsample_area(black_box(&cube), 4).unwrap())
    });
}

fn bench_noise(c: &mut Criterion) {
    let cube = scene(128, 31);
    c.bench_function("awgn_128x128x31", |b| b.iter(|| add_awgn(black_box(&cube), 30.0, 7, "lr").unwrap()));
}

fn bench_metrics(c: &mut Criterion) {
    let x = scene(128, 31);
    let (y, _) = add_awgn(&x, 30.0, 1, "lr").unwrap();
    c.bench_function("evaluate_all_128x128x31", |b| {
        b.iter(|| evaluate_all(black_box(&x), black_box(&y), 4, 1.0).unwrap())
    });
}

criterion_group!(benches, bench_blur, bench_downsample, bench_noise, bench_metrics);
criterion_main!(benches);
