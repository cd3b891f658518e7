use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sqfn_bench::{sawtooth, structures};
use sqfn_core::dyadic::{build_lattice, whitney_cover};
use sqfn_core::estimates::{family_cell_sums, FamilySpec, TestFamily};
use sqfn_core::operators::EnergyEvaluator;
use sqfn_core::qm::{default_centers, default_radii};
use sqfn_core::{check_adr, gradient_kernel, riesz_kernel};

const SIZES: [usize; 2] = [1024, 4096];

fn geometry(c: &mut Criterion) {
    let mut g = c.benchmark_group("geometry");
    g.sample_size(10);
    for n in SIZES {
        let e = sawtooth(n);
        g.bench_with_input(BenchmarkId::new("check_adr", n), &e, |b, e| {
            let (radii, centers) = (default_radii(e, 10), default_centers(e, 64));
            b.iter(|| check_adr(e, &radii, &centers).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("build_lattice", n), &e, |b, e| {
            b.iter(|| build_lattice(e, 5).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("whitney_cover", n), &e, |b, e| {
            b.iter(|| whitney_cover(e, 4.0 * e.diam(), 4.0 * e.resolution()).unwrap())
        });
    }
    g.finish();
}

fn energies(c: &mut Criterion) {
    let mut g = c.benchmark_group("energies");
    g.sample_size(10);
    let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
    for n in SIZES {
        let e = sawtooth(n);
        let (lattice, cover) = structures(&e, 5);
        let ev = EnergyEvaluator::new(&e, &theta, &cover).unwrap();
        let family = TestFamily::generate(&e, &lattice, &FamilySpec::default(), 1);
        g.bench_function(BenchmarkId::new("family_cell_sums", n), |b| {
            b.iter(|| family_cell_sums(&ev, &lattice, &family, 2.0, ev.weight_exponent()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, geometry, energies);
criterion_main!(benches);
