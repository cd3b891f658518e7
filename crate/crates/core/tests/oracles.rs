//! Closed-form and frequency-side oracles for the quadrature operators.

mod common;

use common::{frequency_side_energy, line};
use sqfn_core::dyadic::whitney_cover;
use sqfn_core::kernels::{gradient_kernel, riesz_kernel};
use sqfn_core::operators::{EnergyEvaluator, SurfaceFunction};

#[test]
fn gradient_riesz_energy_matches_frequency_side() {
    let half = 4.0;
    let e = line(4096, half);
    let bump = |x: f64| (-x * x / (2.0 * 0.25)).exp();
    let cover = whitney_cover(&e, 4.0 * e.diam(), 0.01).unwrap();
    let theta = gradient_kernel(&riesz_kernel(2, 1).unwrap());
    let ev = EnergyEvaluator::new(&e, &theta, &cover).unwrap();
    let f = SurfaceFunction::from_fn(&e, |p| bump(p[0])).unwrap();
    let energy = ev.square_energy(&f).unwrap();
    let oracle = frequency_side_energy(bump, half);
    let rel = (energy.total - oracle).abs() / oracle;
    eprintln!("energy {} oracle {} rel {rel} nodes {}", energy.total, oracle, energy.node_count);
    assert!(rel < 0.05);
}
