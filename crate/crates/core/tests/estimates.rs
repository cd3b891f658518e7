//! End-to-end checks of the experiment harnesses on small clouds.

use sqfn_core::dyadic::{build_lattice, whitney_cover, ConeIndex, DyadicLattice, WhitneyCover};
use sqfn_core::estimates::{
    atomic_hp_test, bpsfe_pipeline, bq_from_bigpiece, check_local_tb, comparability_split, estimate_sfe_constant,
    estimate_sfe_with_family, lp_sweep, random_atoms, AlignedSubset, FamilySpec, PipelineParams, TbFamily,
    TestFamily,
};
use sqfn_core::geom::{big_pieces_witness, generate, GeometryKind, GeometrySpec, GraphProfile};
use sqfn_core::kernels::{gradient_kernel, riesz_kernel};
use sqfn_core::operators::{EnergyEvaluator, SurfaceFunction};
use sqfn_core::{AdrSet, Error, KernelSpec};

fn theta() -> KernelSpec {
    gradient_kernel(&riesz_kernel(1, 1).unwrap())
}

fn line(n: usize) -> AdrSet {
    generate(&GeometrySpec::new(GeometryKind::Line { half_length: 1.0 }, n)).unwrap()
}

fn sawtooth(n: usize, split: bool) -> AdrSet {
    generate(&GeometrySpec::new(
        GeometryKind::LipschitzGraph {
            lip: 1.0,
            length: 1.0,
            profile: GraphProfile::Sawtooth { period: 0.5 },
            split_slopes: split,
        },
        n,
    ))
    .unwrap()
}

fn setup(e: &AdrSet, depth: u32, c_assign: f64) -> (DyadicLattice, WhitneyCover) {
    let lat = build_lattice(e, depth).unwrap();
    let mut cover = whitney_cover(e, 4.0 * e.diam(), 4.0 * e.resolution()).unwrap();
    cover.assign(&lat, c_assign).unwrap();
    (lat, cover)
}

#[test]
fn zero_family_is_rejected() {
    let e = line(128);
    let (lat, cover) = setup(&e, 3, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let fam = TestFamily::from_functions(vec![SurfaceFunction::zeros(&e)]);
    let r = estimate_sfe_with_family(&ev, &lat, &fam, "zero", 0);
    assert!(matches!(r, Err(Error::EmptyFamily)));
    assert_eq!(Error::EmptyFamily.to_string(), "empty effective family");
}

#[test]
fn sfe_is_deterministic_given_seed() {
    let e = line(128);
    let (lat, cover) = setup(&e, 3, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let spec = FamilySpec { rademacher: 4, bumps: 2, ..FamilySpec::default() };
    let a = estimate_sfe_constant(&ev, &lat, &spec, 9).unwrap();
    let b = estimate_sfe_constant(&ev, &lat, &spec, 9).unwrap();
    let c = estimate_sfe_constant(&ev, &lat, &spec, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.config_hash, c.config_hash);
    assert!(a.best_ratio >= 0.0 && a.best_ratio.is_finite());
}

#[test]
fn indicator_testing_family_needs_only_unit_constants_for_the_first_two_conditions() {
    let e = line(256);
    let (lat, cover) = setup(&e, 4, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let r = check_local_tb(&ev, &lat, &TbFamily::indicators(&e, &lat, 64.0, 1.0)).unwrap();
    assert!(r.pass, "{:?}", r.failures);
    assert!((r.cond1 - 1.0).abs() < 1e-12 && (r.cond2 - 1.0).abs() < 1e-12);
    assert_eq!(r.small_c0_measured, 1.0);
    // the theorem's direction: passing T(b) goes with a finite SFE constant
    let sfe = estimate_sfe_constant(&ev, &lat, &FamilySpec::indicators_only(), 1).unwrap();
    assert!(sfe.best_ratio.is_finite());
}

#[test]
fn vanishing_or_missing_testing_functions_fail() {
    let e = line(128);
    let (lat, cover) = setup(&e, 3, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let mut fam = TbFamily::indicators(&e, &lat, 64.0, 1.0);
    fam.b[2] = Some(SurfaceFunction::zeros(&e));
    fam.b[3] = None;
    let r = check_local_tb(&ev, &lat, &fam).unwrap();
    assert!(!r.pass);
    assert_eq!(r.missing, vec![3]);
    assert!(r.failures.iter().any(|f| f.contains("cube 3")));
    assert!(r.failures.iter().any(|f| f.contains("cube 2") && f.contains("non-degeneracy")));
}

#[test]
fn big_piece_indicators() {
    let e = line(128);
    let lat = build_lattice(&e, 3).unwrap();
    let q = lat.cube(lat.generation(lat.kappa_e() + 1)[0]);
    let all = AlignedSubset::new(&e, &(0..e.len()).collect::<Vec<_>>()).unwrap();
    let b = bq_from_bigpiece(q, &all, &e).unwrap();
    assert_eq!(b.values(), SurfaceFunction::indicator(&e, &q.members).values());
    let outside: Vec<usize> = (0..e.len()).filter(|i| !q.members.contains(i)).collect();
    let b = bq_from_bigpiece(q, &AlignedSubset::new(&e, &outside).unwrap(), &e).unwrap();
    assert!(b.values().iter().all(|&v| v == 0.0));
    // eta-big piece: half of Q's mass
    let half: Vec<usize> = q.members[..q.members.len() / 2].to_vec();
    let b = bq_from_bigpiece(q, &AlignedSubset::new(&e, &half).unwrap(), &e).unwrap();
    assert!(b.integral(&e) >= 0.5 * q.mass - 1e-12 - e.weights()[0]);
    // a piece of another cloud does not align
    let other = line(64);
    let foreign = AlignedSubset::new(&other, &[0, 1]).unwrap();
    assert!(matches!(bq_from_bigpiece(q, &foreign, &e), Err(Error::NotAligned)));
    let shifted = e.dilate(1.1).unwrap();
    assert!(matches!(AlignedSubset::align(&e, &shifted), Err(Error::NotAligned)));
}

#[test]
fn split_with_the_full_set_is_all_comparable() {
    let e = line(128);
    let (lat, cover) = setup(&e, 3, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let q = lat.cube(lat.generation(lat.kappa_e() + 1)[1]);
    let all = AlignedSubset::new(&e, &(0..e.len()).collect::<Vec<_>>()).unwrap();
    let b = bq_from_bigpiece(q, &all, &e).unwrap();
    let s = comparability_split(&ev, &lat, q, &all, 8.0, &b).unwrap();
    assert_eq!(s.i_not_a, 0.0);
    assert_eq!((s.cells_far, s.cells_near), (0, 0));
    assert!((s.i_a - ev.tent_energy(q, &lat, &b).unwrap()).abs() <= 1e-12 * s.i_a);
    assert!(comparability_split(&ev, &lat, q, &all, 1.0, &b).is_err());
}

#[test]
fn pipeline_with_trivial_witness_matches_the_indicator_run() {
    let e = line(256);
    let (lat, cover) = setup(&e, 3, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let witness = big_pieces_witness(&e, &lat);
    assert_eq!(witness.min_eta, 1.0);
    let params = PipelineParams {
        eta_required: 0.5,
        big_c0: 64.0,
        small_c0: 1.0,
        family: FamilySpec::indicators_only(),
        seed: 1,
    };
    let r = bpsfe_pipeline(&ev, &lat, &witness, &params).unwrap();
    let direct = check_local_tb(&ev, &lat, &TbFamily::indicators(&e, &lat, 64.0, 1.0)).unwrap();
    assert_eq!(r.tb, direct);
    assert!(r.flagged.is_empty());
}

#[test]
fn pipeline_on_split_sawtooth_and_cantor() {
    let th = theta();
    let params = PipelineParams {
        eta_required: 0.4,
        big_c0: 64.0,
        small_c0: 0.25,
        family: FamilySpec::indicators_only(),
        seed: 1,
    };
    let e = sawtooth(256, true);
    let (lat, cover) = setup(&e, 3, 8.0);
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let r = bpsfe_pipeline(&ev, &lat, &big_pieces_witness(&e, &lat), &params).unwrap();
    assert!(r.pieces.len() >= 2);
    for v in [r.c1, r.c2, r.tb.big_c0_measured, r.sfe.best_ratio] {
        assert!(v.is_finite() && v > 0.0, "{v}");
    }

    let c = generate(&GeometrySpec::new(GeometryKind::Cantor4 { generation: 4 }, 16)).unwrap();
    let (lat, cover) = setup(&c, 3, 8.0);
    let ev = EnergyEvaluator::new(&c, &th, &cover).unwrap();
    let r = bpsfe_pipeline(&ev, &lat, &big_pieces_witness(&c, &lat), &params).unwrap();
    assert_eq!(r.flagged.len(), lat.cubes().len());
    assert!(!r.tb.pass);
}

#[test]
fn results_do_not_depend_on_the_assignment_constant() {
    let e = line(256);
    let th = theta();
    let mut sfe = Vec::new();
    for c in [4.0, 8.0, 16.0] {
        let (lat, cover) = setup(&e, 4, c);
        let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
        let tb = check_local_tb(&ev, &lat, &TbFamily::indicators(&e, &lat, 64.0, 1.0)).unwrap();
        assert!(tb.pass, "C_assign = {c}: {:?}", tb.failures);
        sfe.push(estimate_sfe_constant(&ev, &lat, &FamilySpec::indicators_only(), 1).unwrap().best_ratio);
    }
    assert!(sfe.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12 * w[0]), "{sfe:?}");
}

#[test]
fn tail_bound_covers_doubling_the_truncation_radius() {
    let e = sawtooth(256, false);
    let th = theta();
    let f = SurfaceFunction::from_fn(&e, |p| (4.0 * p[0]).cos() + 1.5).unwrap();
    let eps = 4.0 * e.resolution();
    let near = whitney_cover(&e, 2.0 * e.diam(), eps).unwrap();
    let far = whitney_cover(&e, 4.0 * e.diam(), eps).unwrap();
    let a = EnergyEvaluator::new(&e, &th, &near).unwrap().square_energy(&f).unwrap();
    let b = EnergyEvaluator::new(&e, &th, &far).unwrap().square_energy(&f).unwrap();
    assert!(b.total >= a.total);
    assert!(a.truncation_tail_bound >= b.total - a.total, "{} < {}", a.truncation_tail_bound, b.total - a.total);
}

#[test]
fn refinement_is_stable_on_a_lipschitz_graph() {
    let e = sawtooth(1024, false);
    let th = theta();
    let f = SurfaceFunction::from_fn(&e, |p| (-8.0 * (p[0] - 0.5).powi(2)).exp()).unwrap();
    let eps = 4.0 * e.resolution();
    let coarse = whitney_cover(&e, 4.0 * e.diam(), 2.0 * eps).unwrap();
    let fine = whitney_cover(&e, 4.0 * e.diam(), eps).unwrap();
    let a = EnergyEvaluator::new(&e, &th, &coarse).unwrap().square_energy(&f).unwrap().total;
    let b = EnergyEvaluator::new(&e, &th, &fine).unwrap().square_energy(&f).unwrap().total;
    assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
}

#[test]
fn cone_l2_norm_matches_energy_up_to_the_overlap_factor() {
    // Fubini: ||S f||_2^2 is the sum over cells of the cell energy times
    // sigma(E ∩ B(c, (1 + kappa) delta_c)) / delta_c^d
    let e = line(512);
    let (lat, cover) = setup(&e, 3, 8.0);
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let kappa = 1.0;
    let cones = ConeIndex::build(&e, &cover, kappa).unwrap();
    let f = SurfaceFunction::from_fn(&e, |p| (-20.0 * p[0] * p[0]).exp()).unwrap();
    let fam = TestFamily::from_functions(vec![f.clone()]);
    let p2 = lp_sweep(&ev, &lat, &cones, &[2.0], &fam).unwrap()[0].ratio;
    let cone_sq = (p2 * f.p_norm(&e, 2.0).unwrap()).powi(2);
    let per_cell = ev.square_energy_detailed(&f).unwrap().per_cell.unwrap();
    let predicted: f64 = cover
        .cells()
        .iter()
        .zip(&per_cell)
        .map(|(c, en)| {
            let r = (1.0 + kappa) * c.dist_to_e;
            en * e.ball(&c.center, r).iter().map(|&i| e.weights()[i]).sum::<f64>() / c.dist_to_e
        })
        .sum();
    assert!((cone_sq - predicted).abs() <= 0.05 * predicted, "{cone_sq} vs {predicted}");
}

#[test]
fn atoms_are_normalized() {
    let e = line(512);
    let (lat, cover) = setup(&e, 3, 8.0);
    let _ = lat;
    let th = theta();
    let ev = EnergyEvaluator::new(&e, &th, &cover).unwrap();
    let p = 0.8;
    for (ball, a) in random_atoms(&ev, p, 16, 4).unwrap() {
        let members = e.ball(e.point(ball.center), ball.radius);
        let mass: f64 = members.iter().map(|&i| e.weights()[i]).sum();
        assert!(a.integral(&e).abs() <= 1e-12 * mass.powf(1.0 - 1.0 / p));
        let sup = a.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(sup <= mass.powf(-1.0 / p) * (1.0 + 1e-12));
        assert!(a.support().iter().all(|i| members.contains(i)));
    }
    let cones = ConeIndex::build(&e, &cover, 1.0).unwrap();
    let r = atomic_hp_test(&ev, &cones, p, 4, 4).unwrap();
    assert!(r.atoms.iter().all(|a| a.mean.abs() < 1e-10 && a.value.is_finite()));
    assert!(matches!(lp_sweep(&ev, &build_lattice(&e, 2).unwrap(), &cones, &[0.9], &TestFamily::from_functions(vec![SurfaceFunction::constant(&e, 1.0)])), Err(Error::Invalid(m)) if m.contains("atomic_hp_test")));
}
