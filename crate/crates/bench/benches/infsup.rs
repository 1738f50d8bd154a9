use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hdg_core::analysis::{case_by_name, estimate_inf_sup, InfSupMethod, Stabilization};

fn infsup(c: &mut Criterion) {
    let mut g = c.benchmark_group("inf_sup");
    g.sample_size(10);
    let stab = Stabilization::default();
    for name in ["poisson-smooth", "stokes-smooth"] {
        let case = case_by_name(name).unwrap();
        let mesh = case.mesh(4).unwrap();
        let sys = case.assemble(&mesh, 1, stab).unwrap();
        let norm = case.norm(&mesh, sys.layout.clone(), stab);
        for (label, method) in [("dense", InfSupMethod::Dense), ("lanczos", InfSupMethod::Lanczos)] {
            g.bench_function(BenchmarkId::new(name, label), |b| b.iter(|| estimate_inf_sup(&sys, &norm, method, 0).unwrap()));
        }
    }
    g.finish();
}

criterion_group!(benches, infsup);
criterion_main!(benches);
