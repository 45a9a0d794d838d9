use carnot::wavelets::{make_phi_hat, make_psi_hat};
use carnot::{Backend, BumpSpec};
use carnot_bench::{e1_laplacian, h1_laplacian};
use criterion::{criterion_group, criterion_main, Criterion};

fn kernels(c: &mut Criterion) {
    let psi = make_psi_hat(&make_phi_hat(&BumpSpec::default()).unwrap()).unwrap();
    let e1 = e1_laplacian(16.0, 257);
    let h1 = h1_laplacian(3.0, 13);
    let mut g = c.benchmark_group("kernel_of");
    g.sample_size(10);
    // The eigenbasis is computed once per operator; this times the spectral sum.
    g.bench_function("e1_257_eig", |b| {
        b.iter(|| e1.kernel_of(&psi, Backend::Eig).unwrap())
    });
    g.bench_function("e1_257_chebyshev", |b| {
        b.iter(|| e1.kernel_of(&psi, Backend::Chebyshev(None)).unwrap())
    });
    g.bench_function("h1_13_chebyshev", |b| {
        b.iter(|| h1.kernel_of(&psi, Backend::Chebyshev(None)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
