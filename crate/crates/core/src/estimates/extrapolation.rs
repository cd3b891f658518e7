use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{ConeIndex, DyadicLattice};
use crate::error::{invalid, Error, Result};
use crate::estimates::family::{family_cell_sums, TestFamily};
use crate::operators::{EnergyEvaluator, SurfaceFunction};
use crate::qm::{alpha_rho, log_grid};

/// Surface ball `E ∩ B(x_center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBall {
    pub center: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// log-spaced from the root of the `sigma`-average of the square function
    /// over the ball up to the root of its maximum
    Auto { count: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistributionCurve {
    pub ball: SurfaceBall,
    pub ball_mass: f64,
    pub lambdas: Vec<f64>,
    /// `sigma({x : S(x) > lambda^2})`
    pub measures: Vec<f64>,
    /// minus the log-log slope over the middle 80% of the grid
    pub fitted_exponent: f64,
    /// smallest `C_o` with `measure <= C_o lambda^{-p} sigma(ball)` on the grid
    pub c_o: f64,
}

/// Least-squares slope of `log m` against `log lambda` over the middle 80% of
/// the grid, skipping empty super-level sets.
pub fn fit_decay_exponent(lambdas: &[f64], measures: &[f64]) -> f64 {
    let n = lambdas.len();
    let cut = n / 10;
    let pts: Vec<(f64, f64)> = (cut..n - cut)
        .filter(|&k| measures[k] > 0.0)
        .map(|k| (lambdas[k].ln(), measures[k].ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

/// Distribution of the cone square function of `1_Delta` for each ball.
pub fn weak_lp_indicator_test(
    ev: &EnergyEvaluator,
    cones: &ConeIndex,
    p: f64,
    balls: &[SurfaceBall],
    grid: &LambdaGrid,
) -> Result<Vec<DistributionCurve>> {
    let e = ev.set();
    if !(p > 0.0) {
        return Err(invalid("p must be positive"));
    }
    if let LambdaGrid::Explicit(l) = grid {
        if l.is_empty() || l.iter().any(|v| !(*v > 0.0)) || l.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("lambda grid must be positive and strictly increasing"));
        }
    }
    let w = e.weights();
    balls
        .iter()
        .map(|&ball| {
            if ball.center >= e.len() || !(ball.radius > 0.0) {
                return Err(invalid("surface ball needs a cloud center and a positive radius"));
            }
            let members = e.ball(e.point(ball.center), ball.radius);
            if members.is_empty() {
                return Err(invalid("surface ball is empty"));
            }
            let f = SurfaceFunction::indicator(e, &members);
            let mass: f64 = members.iter().map(|&i| w[i]).sum();
            let s: Vec<f64> = ev
                .cone_powers(&[&f], cones, 2.0)?
                .pop()
                .expect("one function")
                .into_iter()
                .map(|(v, _)| v)
                .collect();
            let lambdas = match grid {
                LambdaGrid::Explicit(l) => l.clone(),
                LambdaGrid::Auto { count } => {
                    let avg = members.iter().map(|&i| s[i] * w[i]).sum::<f64>() / mass;
                    let max = s.iter().cloned().fold(0.0, f64::max);
                    log_grid(avg.sqrt(), max.sqrt(), (*count).max(2))
                }
            };
            let measures: Vec<f64> = lambdas
                .iter()
                .map(|l| {
                    let l2 = l * l;
                    s.iter().zip(w).filter(|(v, _)| **v > l2).map(|(_, wi)| wi).sum()
                })
                .collect();
            let c_o = lambdas
                .iter()
                .zip(&measures)
                .map(|(l, m)| m * l.powf(p) / mass)
                .fold(0.0, f64::max);
            Ok(DistributionCurve {
                ball,
                ball_mass: mass,
                fitted_exponent: fit_decay_exponent(&lambdas, &measures),
                lambdas,
                measures,
                c_o,
            })
        })
        .collect()
}

/// `||x -> cone functional||_{L^p}` for every family member, `q = 2`.
fn cone_lp_norms(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    cones: &ConeIndex,
    family: &TestFamily,
    p_list: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let e = ev.set();
    if cones.lists.len() != e.len() {
        return Err(invalid("cone index was built for another cloud"));
    }
    let exponent = 2.0 * ev.kernel().decay_exp - e.ambient_dim() as f64;
    let sums = family_cell_sums(ev, lattice, family, 2.0, exponent)?;
    let w = e.weights();
    Ok(sums
        .iter()
        .map(|cells| {
            let cone: Vec<f64> = cones
                .lists
                .iter()
                .map(|l| l.iter().map(|&c| cells[c]).sum::<f64>().sqrt())
                .collect();
            p_list
                .iter()
                .map(|&p| cone.iter().zip(w).map(|(v, wi)| v.powf(p) * wi).sum::<f64>().powf(1.0 / p))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LpRow {
    pub p: f64,
    pub ratio: f64,
    pub argmax: String,
}

/// For each `p > 1`: sup over the family of `||cone f||_p / ||f||_p`.
pub fn lp_sweep(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    cones: &ConeIndex,
    p_list: &[f64],
    family: &TestFamily,
) -> Result<Vec<LpRow>> {
    if let Some(&p) = p_list.iter().find(|&&p| !(p > 1.0 && p.is_finite())) {
        return Err(invalid(format!(
            "lp_sweep needs 1 < p < inf (got {p}); use atomic_hp_test for p <= 1"
        )));
    }
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let e = ev.set();
    let norms = cone_lp_norms(ev, lattice, cones, family, p_list)?;
    let fnorms: Vec<Vec<f64>> = (0..family.len())
        .map(|i| {
            let f = family.materialize(i, e, lattice);
            p_list.iter().map(|&p| f.p_norm(e, p)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(p_list
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let (ratio, argmax) = (0..family.len())
                .filter(|&i| fnorms[i][k] > 0.0)
                .map(|i| (norms[i][k] / fnorms[i][k], i))
                .fold((0.0, usize::MAX), |acc, x| if x.0 > acc.0 { x } else { acc });
            LpRow {
                p,
                ratio,
                argmax: family.labels.get(argmax).cloned().unwrap_or_default(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtomResult {
    pub ball: SurfaceBall,
    pub ball_mass: f64,
    /// `int a dsigma`, zero up to rounding
    pub mean: f64,
    pub sup_norm: f64,
    /// `||cone a||_{L^p}`
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HpReport {
    pub p: f64,
    pub gamma: f64,
    pub range_lo: f64,
    pub sup: f64,
    pub atoms: Vec<AtomResult>,
}

/// Lower end `d/(d+gamma)` of the admissible exponents, `gamma = min(alpha_rho, alpha)`.
pub fn hp_range(ev: &EnergyEvaluator) -> Result<(f64, f64)> {
    let gamma = alpha_rho(ev.set().space())?.min(ev.kernel().hoelder_exp);
    let d = ev.set().dim();
    Ok((gamma, d / (d + gamma)))
}

/// Random `(p, inf)`-atoms: support ball with radius log-uniform in
/// `[4h, diam/4]`, values `±sigma(B)^{-1/p}` on the two halves of the ball cut
/// by a random hyperplane through its center, mean removed, rescaled to keep
/// the sup bound.
pub fn random_atoms(
    ev: &EnergyEvaluator,
    p: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(SurfaceBall, SurfaceFunction)>> {
    let e = ev.set();
    let w = e.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = 4.0 * e.resolution();
    let hi = (e.diam() / 4.0).max(lo * 1.0001);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count.max(1) {
            return Err(invalid("could not place atoms with at least two points"));
        }
        let center = rng.gen_range(0..e.len());
        let radius = (rng.gen_range(lo.ln()..hi.ln())).exp();
        let mut members = e.ball(e.point(center), radius);
        if members.len() < 2 {
            continue;
        }
        let mass: f64 = members.iter().map(|&i| w[i]).sum();
        let s = mass.powf(-1.0 / p);
        // the two halves are cut by a random hyperplane through the center
        let x = e.point(center);
        let u = loop {
            let u: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n2: f64 = u.iter().map(|c| c * c).sum();
            if n2 > 1e-6 && n2 <= 1.0 {
                break u;
            }
        };
        let side = |i: usize| e.point(i).iter().zip(x).zip(&u).map(|((a, b), c)| (a - b) * c).sum::<f64>();
        members.sort_by(|&a, &b| side(a).total_cmp(&side(b)).then(a.cmp(&b)));
        let half = members.len() / 2;
        let mut v = vec![0.0; e.len()];
        for (k, &i) in members.iter().enumerate() {
            v[i] = if k < half { s } else { -s };
        }
        let mean = members.iter().map(|&i| v[i] * w[i]).sum::<f64>() / mass;
        for &i in &members {
            v[i] -= mean;
        }
        let sup = members.iter().map(|&i| v[i].abs()).fold(0.0, f64::max);
        if sup > s {
            for &i in &members {
                v[i] *= s / sup;
            }
        }
        out.push((SurfaceBall { center, radius }, SurfaceFunction::new(v, e)?));
    }
    Ok(out)
}

pub fn atomic_hp_test(
    ev: &EnergyEvaluator,
    cones: &ConeIndex,
    p: f64,
    count: usize,
    seed: u64,
) -> Result<HpReport> {
    let (gamma, lo) = hp_range(ev)?;
    if !(p > lo && p <= 1.0) {
        return Err(Error::ExponentOutOfRange { p, lo, hi: 1.0 });
    }
    if count == 0 {
        return Err(Error::EmptyFamily);
    }
    let e = ev.set();
    let w = e.weights();
    let atoms = random_atoms(ev, p, count, seed)?;
    let fs: Vec<&SurfaceFunction> = atoms.iter().map(|(_, f)| f).collect();
    let powers = ev.cone_powers(&fs, cones, 2.0)?;
    let results: Vec<AtomResult> = atoms
        .iter()
        .zip(powers)
        .map(|((ball, f), s)| {
            let members = e.ball(e.point(ball.center), ball.radius);
            let value = s
                .iter()
                .zip(w)
                .map(|((v, _), wi)| v.sqrt().powf(p) * wi)
                .sum::<f64>()
                .powf(1.0 / p);
            AtomResult {
                ball: *ball,
                ball_mass: members.iter().map(|&i| w[i]).sum(),
                mean: f.integral(e),
                sup_norm: f.values().iter().map(|v| v.abs()).fold(0.0, f64::max),
                value,
            }
        })
        .collect();
    Ok(HpReport {
        p,
        gamma,
        range_lo: lo,
        sup: results.iter().map(|r| r.value).fold(0.0, f64::max),
        atoms: results,
    })
}
