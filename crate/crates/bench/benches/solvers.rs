use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pfnn_bench::load_case;
use pfnn_core::dcpf::DcModel;
use pfnn_core::netmodel::net_injections;
use pfnn_core::{build_ybus, solve_dc, solve_nr, SolverOptions};

fn newton(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_nr");
    for name in ["case9", "case24", "case118"] {
        let net = load_case(name);
        group.bench_with_input(BenchmarkId::from_parameter(name), &net, |b, net| {
            b.iter(|| solve_nr(net, &SolverOptions::newton()).unwrap())
        });
    }
    group.finish();
}

fn dc(c: &mut Criterion) {
    let mut group = c.benchmark_group("dcpf");
    for name in ["case24", "case118"] {
        let net = load_case(name);
        group.bench_with_input(
            BenchmarkId::new("factor_and_solve", name),
            &net,
            |b, net| b.iter(|| solve_dc(net).unwrap()),
        );
        let model = DcModel::new(&net).unwrap();
        let (p, _) = net_injections(&net);
        group.bench_with_input(BenchmarkId::new("solve_prefactored", name), &p, |b, p| {
            b.iter(|| model.solve(p).unwrap())
        });
    }
    group.finish();
}

fn ybus(c: &mut Criterion) {
    let net = load_case("case118");
    c.bench_function("build_ybus/case118", |b| b.iter(|| build_ybus(&net)));
}

criterion_group!(benches, newton, dc, ybus);
criterion_main!(benches);
