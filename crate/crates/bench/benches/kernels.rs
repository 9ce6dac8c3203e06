use criterion::{black_box, criterion_group, criterion_main, Criterion};

use lce_core::convexity::{is_log_concave_extensible, is_zd_convex, ArithmeticMode, DEFAULT_ENVELOPE_TOL};
use lce_core::smoothing::{differential_entropy_report, EntropyOptions};
use lce_core::{convolve, ConvolveMethod, ConvolveOptions, DensitySpec, IndexVector, QuantizeOptions};

fn gaussian(d: usize, sigma: f64) -> lce_core::LatticePmf {
    let f = DensitySpec::Gaussian { sigma, dim: d }.build().unwrap();
    lce_core::quantize_density(&f, &IndexVector::zeros(d), QuantizeOptions { radius_multiplier: 10.0, ..Default::default() })
        .unwrap()
}

fn bench_convolution(c: &mut Criterion) {
    let p = gaussian(2, 8.0);
    let mut g = c.benchmark_group("convolve_d2_sigma8");
    for method in [ConvolveMethod::Fft, ConvolveMethod::Direct] {
        let opts = ConvolveOptions { method, direct_threshold: usize::MAX, ..Default::default() };
        g.bench_function(format!("{method:?}"), |b| b.iter(|| convolve(black_box(&p), black_box(&p), &opts).unwrap()));
    }
    g.finish();
}

fn bench_entropy(c: &mut Criterion) {
    let p = gaussian(2, 4.0);
    let opts = EntropyOptions::default();
    c.bench_function("smoothed_entropy_d2_sigma4_n2", |b| {
        b.iter(|| differential_entropy_report(black_box(&p), 2, &opts).unwrap())
    });
}

fn bench_convexity(c: &mut Criterion) {
    let p = gaussian(2, 1.0);
    c.bench_function("extensible_d2_sigma1", |b| {
        b.iter(|| is_log_concave_extensible(black_box(&p), DEFAULT_ENVELOPE_TOL, ArithmeticMode::Float).unwrap())
    });
    let s = p.support();
    c.bench_function("zd_convex_support", |b| b.iter(|| is_zd_convex(black_box(&s)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_convolution, bench_entropy, bench_convexity
}
criterion_main!(benches);
