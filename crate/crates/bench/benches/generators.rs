use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gibbs_bench::{mean_field, qou, superfluid, Fixture};
use gibbs_core::linalg::CMatrix;
use gibbs_core::lindblad::{build_generator, Picture, SigmaE};
use gibbs_core::{spectral, thermal, C64};

fn fixtures() -> Vec<Fixture> {
    vec![
        qou(10).unwrap(),
        qou(20).unwrap(),
        mean_field(12, 0.1).unwrap(),
        superfluid(4, 2).unwrap(),
        superfluid(6, 2).unwrap(),
    ]
}

fn generator(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_generator");
    g.sample_size(10);
    for f in fixtures() {
        for sigma in [SigmaE::Zero, SigmaE::Infinite] {
            g.bench_with_input(BenchmarkId::new(&f.name, sigma), &f, |b, f| {
                b.iter(|| build_generator(&f.h, &f.jumps, &f.filter, sigma).unwrap())
            });
        }
    }
    g.finish();
}

fn gap(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral_gap");
    g.sample_size(10);
    for f in fixtures() {
        let l = build_generator(&f.h, &f.jumps, &f.filter, SigmaE::Infinite)
            .unwrap()
            .in_picture(Picture::SelfadjointHs)
            .unwrap();
        g.bench_function(&f.name, |b| b.iter(|| spectral::spectral_gap(&l).unwrap()));
    }
    g.finish();
}

fn gibbs(c: &mut Criterion) {
    let mut g = c.benchmark_group("gibbs_state");
    for f in fixtures() {
        g.bench_function(&f.name, |b| b.iter(|| thermal::gibbs_state(&f.h, 1.0).unwrap()));
    }
    g.finish();
}

fn evolve(c: &mut Criterion) {
    let mut g = c.benchmark_group("propagator_evolve");
    g.sample_size(20);
    for f in fixtures() {
        let l = build_generator(&f.h, &f.jumps, &f.filter, SigmaE::Infinite).unwrap();
        let prop = thermal::Propagator::new(&l).unwrap();
        let d = f.basis.dim();
        let mut rho = CMatrix::zeros(d, d);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        g.bench_function(&f.name, |b| b.iter(|| prop.evolve(&rho, 1.0).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, generator, gap, gibbs, evolve);
criterion_main!(benches);
