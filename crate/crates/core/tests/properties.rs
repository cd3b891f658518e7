//! Property tests for the structural invariants.

use proptest::prelude::*;
use sqfn_core::dyadic::{build_lattice, validate_cover, validate_lattice, whitney_cover, ConeIndex};
use sqfn_core::estimates::{
    atomic_hp_test, hp_range, lp_sweep, weak_lp_indicator_test, FamilySpec, LambdaGrid, SurfaceBall, TestFamily,
};
use sqfn_core::geom::{check_lipschitz, generate, GeometryKind, GeometrySpec, GraphProfile};
use sqfn_core::kernels::{gradient_kernel, riesz_kernel};
use sqfn_core::operators::{apply_theta, EnergyEvaluator, SurfaceFunction};
use sqfn_core::qm::{check_adr, default_centers, verify_quasi_axioms};
use sqfn_core::{regularized_metric, AdrSet, Error, QuasiMetricSpace};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

fn geometry() -> impl Strategy<Value = GeometrySpec> {
    let n = 64usize..256;
    prop_oneof![
        (0.5f64..3.0, n.clone()).prop_map(|(h, n)| GeometrySpec::new(GeometryKind::Line { half_length: h }, n)),
        (0.2f64..2.0, n.clone()).prop_map(|(r, n)| GeometrySpec::new(GeometryKind::Circle { radius: r }, 2 * (n / 2))),
        (0.2f64..2.0, 0.1f64..0.5, n.clone()).prop_map(|(lip, period, n)| GeometrySpec::new(
            GeometryKind::LipschitzGraph {
                lip,
                length: 1.0,
                profile: GraphProfile::Sawtooth { period },
                split_slopes: false
            },
            n
        )),
        (0.2f64..2.0, 2usize..12, n.clone(), any::<u64>()).prop_map(|(lip, pieces, n, seed)| GeometrySpec::new(
            GeometryKind::LipschitzGraph {
                lip,
                length: 2.0,
                profile: GraphProfile::Random { pieces },
                split_slopes: false
            },
            n
        )
        .with_seed(seed)),
        (2u32..5).prop_map(|g| GeometrySpec::new(GeometryKind::Cantor4 { generation: g }, 16)),
    ]
}

/// A random cloud in the unit square with positive weights.
fn cloud() -> impl Strategy<Value = AdrSet> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..1.0), 8..80).prop_map(|pts| {
        let coords = pts.iter().flat_map(|p| [p.0, p.1]).collect();
        let weights = pts.iter().map(|p| p.2 / pts.len() as f64).collect();
        AdrSet::new(QuasiMetricSpace::euclidean(2), coords, weights, 1.0).unwrap()
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn generated_sets_satisfy_quasi_axioms(spec in geometry(), seed in any::<u64>()) {
        let e = generate(&spec).unwrap();
        let v = verify_quasi_axioms(e.space(), e.coords(), 10_000, seed);
        prop_assert_eq!(v.total(), 0);
    }

    #[test]
    fn generation_is_bit_identical(spec in geometry()) {
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        prop_assert_eq!(a.coords(), b.coords());
        prop_assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn generated_sets_meet_their_published_bound(spec in geometry()) {
        let e = generate(&spec).unwrap();
        let radii = sqfn_core::qm::default_radii(&e, 8);
        let r = check_adr(&e, &radii, &default_centers(&e, 32)).unwrap();
        prop_assert!(r.passes(e.adr_const()), "{} > {}", r.best_const, e.adr_const());
    }

    #[test]
    fn random_graph_profiles_are_lipschitz(lip in 0.1f64..3.0, pieces in 1usize..20, seed in any::<u64>()) {
        let spec = GeometrySpec::new(
            GeometryKind::LipschitzGraph { lip, length: 1.5, profile: GraphProfile::Random { pieces }, split_slopes: false },
            200,
        ).with_seed(seed);
        let e = generate(&spec).unwrap();
        let heights: Vec<f64> = (0..e.len()).map(|i| e.point(i)[1]).collect();
        // samples sit at cell midpoints; the grid check runs on the sampled heights
        let span = e.point(e.len() - 1)[0] - e.point(0)[0];
        prop_assert!(check_lipschitz(&heights, span, lip * (1.0 + 1e-9), seed).is_ok());
    }

    #[test]
    fn delta_obeys_the_quasi_triangle_bound(e in cloud(), x in prop::array::uniform2(-1.0f64..2.0), y in prop::array::uniform2(-1.0f64..2.0)) {
        let s = e.space();
        let bound = s.tri_const() * s.rho_sharp(&x, &y).max(e.delta(&y));
        prop_assert!(e.delta(&x) <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn enlarging_the_radius_grid_never_lowers_the_constant(e in cloud(), extra in 0.05f64..1.0) {
        let diam = e.diam();
        let centers: Vec<usize> = (0..e.len()).collect();
        let base = [diam / 2.0, diam];
        let a = check_adr(&e, &base, &centers).unwrap().best_const;
        let b = check_adr(&e, &[diam / 2.0, diam, extra * diam], &centers).unwrap().best_const;
        prop_assert!(b >= a);
    }

    #[test]
    fn regularized_metric_is_symmetric(a in 1.0f64..3.0, pts in prop::collection::vec(prop::array::uniform2(-2.0f64..2.0), 2..30)) {
        // an asymmetric quasi-distance: forward steps in x cost a, backward steps 1
        let space = QuasiMetricSpace::custom(2, move |x, y| {
            let dx = y[0] - x[0];
            (if dx >= 0.0 { a * dx } else { -dx }) + (y[1] - x[1]).abs()
        }, a, 2.0 * a).unwrap();
        let sharp = regularized_metric(&space);
        for x in &pts {
            for y in &pts {
                prop_assert_eq!(sharp.rho(x, y), sharp.rho(y, x));
            }
        }
    }

    #[test]
    fn lattice_invariants_on_random_clouds(e in cloud(), depth in 0u32..6) {
        let lat = build_lattice(&e, depth).unwrap();
        let check = validate_lattice(&e, &lat);
        prop_assert!(check.ok(), "{:?}", check.violations);
        for k in lat.kappa_e()..=lat.finest_generation() {
            let mass: f64 = lat.generation(k).iter().map(|&q| lat.cube(q).mass).sum();
            prop_assert!((mass - e.total_mass()).abs() <= 1e-12 * e.total_mass());
        }
    }

    #[test]
    fn cover_invariants_on_random_clouds(e in cloud(), eps_frac in 0.01f64..0.1, seed in any::<u64>()) {
        let lat = build_lattice(&e, 4).unwrap();
        let mut cover = whitney_cover(&e, 2.0 * e.diam(), eps_frac * e.diam()).unwrap();
        cover.assign(&lat, 8.0).unwrap();
        let check = validate_cover(&e, &cover, Some(&lat), 300, seed).unwrap();
        prop_assert!(check.ok(), "{:?}", check.violations);
    }
}

fn small_line() -> AdrSet {
    generate(&GeometrySpec::new(GeometryKind::Line { half_length: 1.0 }, 128)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn theta_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -1.5f64..1.5, h in 0.05f64..1.0, seed in any::<u64>()) {
        let e = small_line();
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let mut rng = seed;
        let mut next = || { rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
        let f = SurfaceFunction::new((0..e.len()).map(|_| next()).collect(), &e).unwrap();
        let g = SurfaceFunction::new((0..e.len()).map(|_| next()).collect(), &e).unwrap();
        let p = [x, h];
        let lhs = apply_theta(&e, &theta, &f.combine(a, &g, b).unwrap(), &p).unwrap();
        let tf = apply_theta(&e, &theta, &f, &p).unwrap();
        let tg = apply_theta(&e, &theta, &g, &p).unwrap();
        for k in 0..lhs.len() {
            let rhs = a * tf[k] + b * tg[k];
            let scale = (a.abs() * tf[k].abs() + b.abs() * tg[k].abs()).max(1e-300);
            prop_assert!((lhs[k] - rhs).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn energy_is_quadratic_and_cones_homogeneous(c in -4.0f64..4.0, q in 1.0f64..4.0) {
        let e = small_line();
        let cover = whitney_cover(&e, 4.0 * e.diam(), 4.0 * e.resolution()).unwrap();
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let ev = EnergyEvaluator::new(&e, &theta, &cover).unwrap();
        let f = SurfaceFunction::from_fn(&e, |p| (3.0 * p[0]).sin() + 0.5).unwrap();
        let cf = f.scaled(c);
        let e1 = ev.square_energy(&f).unwrap().total;
        let e2 = ev.square_energy(&cf).unwrap().total;
        prop_assert!((e2 - c * c * e1).abs() <= 1e-10 * (c * c * e1).max(1e-300));
        let cones = ConeIndex::build(&e, &cover, 1.0).unwrap();
        let v1 = ev.cone_values(&f, &cones, q).unwrap();
        let v2 = ev.cone_values(&cf, &cones, q).unwrap();
        for (a, b) in v1.iter().zip(&v2) {
            prop_assert!((b.value - c.abs() * a.value).abs() <= 1e-10 * (c.abs() * a.value).max(1e-300));
        }
    }

    #[test]
    fn distribution_curves_are_nonincreasing(r in 0.05f64..0.6, center in 0usize..128, count in 4usize..30) {
        let e = small_line();
        let cover = whitney_cover(&e, 4.0 * e.diam(), 4.0 * e.resolution()).unwrap();
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let ev = EnergyEvaluator::new(&e, &theta, &cover).unwrap();
        let cones = ConeIndex::build(&e, &cover, 1.0).unwrap();
        let balls = [SurfaceBall { center, radius: r }];
        let a = weak_lp_indicator_test(&ev, &cones, 2.0, &balls, &LambdaGrid::Auto { count }).unwrap();
        let b = weak_lp_indicator_test(&ev, &cones, 2.0, &balls, &LambdaGrid::Auto { count }).unwrap();
        let curve = &a[0];
        prop_assert!(curve.measures.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(curve.fitted_exponent.to_bits(), b[0].fitted_exponent.to_bits());
        // beyond the largest value nothing is left
        let top = curve.lambdas.last().unwrap() * 1.01;
        let beyond = weak_lp_indicator_test(&ev, &cones, 2.0, &balls, &LambdaGrid::Explicit(vec![top])).unwrap();
        prop_assert_eq!(beyond[0].measures[0], 0.0);
    }

    #[test]
    fn hp_gate_is_exact(p in 0.0f64..1.5) {
        let e = small_line();
        let cover = whitney_cover(&e, 4.0 * e.diam(), 4.0 * e.resolution()).unwrap();
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let ev = EnergyEvaluator::new(&e, &theta, &cover).unwrap();
        let cones = ConeIndex::build(&e, &cover, 1.0).unwrap();
        let (gamma, lo) = hp_range(&ev).unwrap();
        prop_assert_eq!((gamma, lo), (1.0, 0.5));
        let r = atomic_hp_test(&ev, &cones, p, 1, 7);
        if p > lo && p <= 1.0 {
            prop_assert!(r.is_ok());
        } else {
            let is_range_error = matches!(r, Err(Error::ExponentOutOfRange { .. }));
            prop_assert!(is_range_error);
        }
    }

    #[test]
    fn lp_ratios_ignore_family_scaling(c in 0.1f64..10.0, p in 1.1f64..5.0) {
        let e = small_line();
        let lat = build_lattice(&e, 3).unwrap();
        let cover = whitney_cover(&e, 4.0 * e.diam(), 4.0 * e.resolution()).unwrap();
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let ev = EnergyEvaluator::new(&e, &theta, &cover).unwrap();
        let cones = ConeIndex::build(&e, &cover, 1.0).unwrap();
        let spec = FamilySpec { indicators: false, generations: vec![], rademacher: 0, bumps: 3 };
        let fam = TestFamily::generate(&e, &lat, &spec, 1);
        let scaled = TestFamily::from_functions((0..fam.len()).map(|i| fam.materialize(i, &e, &lat).scaled(c)).collect());
        let a = lp_sweep(&ev, &lat, &cones, &[p], &fam).unwrap();
        let b = lp_sweep(&ev, &lat, &cones, &[p], &scaled).unwrap();
        prop_assert!((a[0].ratio - b[0].ratio).abs() <= 1e-10 * a[0].ratio);
    }
}
