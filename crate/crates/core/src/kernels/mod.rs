//! Kernels: odd homogeneous convolution kernels on `R^{n+1}`, their gradients,
//! and `(C_theta, alpha, upsilon)`-kernels with empirical axiom checks.

pub mod expr;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qm::euclid;
pub use expr::Expr;

/// Pairs closer than this are rejected as degenerate.
pub const MIN_SEPARATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum HomogeneousForm {
    /// `x_j / |x|^{n+1}` with a zero-based component index.
    Riesz { j: usize, n: usize },
    Expr(Expr),
}

/// A kernel `K` on `R^m \ {0}`, `m = n + 1`, odd and homogeneous of degree `-n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousKernel {
    form: HomogeneousForm,
    ambient_dim: usize,
}

impl HomogeneousKernel {
    /// User-supplied closed form in the [`expr`] language. The caller vouches
    /// for oddness and homogeneity; [`HomogeneousKernel::probe_symmetries`]
    /// checks them by sampling.
    pub fn from_expr(src: &str, ambient_dim: usize) -> Result<Self> {
        let e = Expr::parse(src)?;
        if let Some(i) = e.max_coord() {
            if i >= ambient_dim {
                return Err(Error::Expr(format!(
                    "coordinate x{i} out of range for ambient dimension {ambient_dim}"
                )));
            }
        }
        Ok(Self {
            form: HomogeneousForm::Expr(e),
            ambient_dim,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// `n = m - 1`.
    pub fn n(&self) -> usize {
        self.ambient_dim - 1
    }

    pub fn smoothness_order(&self) -> u32 {
        2
    }

    pub fn homogeneity_degree(&self) -> f64 {
        -(self.n() as f64)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.iter().map(|c| c * c).sum::<f64>().sqrt() < MIN_SEPARATION {
            return Err(Error::Singularity);
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.form {
            HomogeneousForm::Riesz { j, n } => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                x[*j] / r2.powf((*n as f64 + 1.0) / 2.0)
            }
            HomogeneousForm::Expr(e) => e.eval(x),
        }
    }

    /// `grad K(x)`; analytic for Riesz kernels, fourth-order central
    /// differences otherwise.
    #[inline]
    fn gradient_unchecked(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            HomogeneousForm::Riesz { j, n } => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                let n1 = *n as f64 + 1.0;
                let inv = r2.powf(-n1 / 2.0);
                let s = n1 * x[*j] * inv / r2;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = -s * x[i];
                }
                out[*j] += inv;
            }
            HomogeneousForm::Expr(e) => {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let h = 1e-3 * r;
                let mut p = x.to_vec();
                for i in 0..x.len() {
                    let f = |p: &mut Vec<f64>, t: f64| {
                        p[i] = x[i] + t;
                        let v = e.eval(p);
                        p[i] = x[i];
                        v
                    };
                    let d = (-f(&mut p, 2.0 * h) + 8.0 * f(&mut p, h) - 8.0 * f(&mut p, -h)
                        + f(&mut p, -2.0 * h))
                        / (12.0 * h);
                    out[i] = d;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().map(|c| c * c).sum::<f64>().sqrt() < MIN_SEPARATION {
            return Err(Error::Singularity);
        }
        let mut out = vec![0.0; self.ambient_dim];
        self.gradient_unchecked(x, &mut out);
        Ok(out)
    }

    /// Worst relative defects of oddness `K(-x) = -K(x)` and homogeneity
    /// `K(2x) = 2^{-n} K(x)` over `samples` random points.
    pub fn probe_symmetries(&self, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n() as f64;
        let (mut odd, mut hom) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let x: Vec<f64> = (0..self.ambient_dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let Ok(k) = self.evaluate(&x) else { continue };
            let neg: Vec<f64> = x.iter().map(|c| -c).collect();
            let dbl: Vec<f64> = x.iter().map(|c| 2.0 * c).collect();
            let scale = k.abs().max(f64::MIN_POSITIVE);
            odd = odd.max((self.eval_unchecked(&neg) + k).abs() / scale);
            hom = hom.max((self.eval_unchecked(&dbl) - 2f64.powf(-n) * k).abs() / scale);
        }
        (odd, hom)
    }
}

/// `x_j / |x|^{n+1}` on `R^{n+1}`, with `j` one-based as in the usual notation.
pub fn riesz_kernel(j: usize, n: usize) -> Result<HomogeneousKernel> {
    if n == 0 || j == 0 || j > n + 1 {
        return Err(invalid(format!("Riesz component j = {j} must lie in 1..={}", n + 1)));
    }
    Ok(HomogeneousKernel {
        form: HomogeneousForm::Riesz { j: j - 1, n },
        ambient_dim: n + 1,
    })
}

pub type KernelFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum ThetaForm {
    Convolution(HomogeneousKernel),
    Gradient(HomogeneousKernel),
    Custom { f: KernelFn, components: usize },
}

/// A kernel `theta(x, y)` on `X x X` minus the diagonal together with its
/// declared constants `C_theta`, `alpha`, `upsilon` and target dimension `d`.
///
/// Vector-valued kernels (gradients) are measured in the Euclidean norm of
/// their components.
#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    form: ThetaForm,
    ambient_dim: usize,
    pub decay_const: f64,
    pub hoelder_exp: f64,
    pub decay_exp: f64,
    pub target_dim: f64,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("components", &self.components())
            .field("decay_const", &self.decay_const)
            .field("hoelder_exp", &self.hoelder_exp)
            .field("decay_exp", &self.decay_exp)
            .field("target_dim", &self.target_dim)
            .finish()
    }
}

impl KernelSpec {
    /// `theta(x, y) = K(x - y)`, acting on sets of dimension `d`.
    ///
    /// `|K(z)| <= |z|^{-n}` and `|grad K| <= max(1,n) |z|^{-n-1}`, so the
    /// Lipschitz bound on the half-distance region gives `C_theta`.
    pub fn convolution(k: HomogeneousKernel, d: f64) -> Self {
        let n = k.n() as f64;
        let c = 1f64.max(n.max(1.0) * 2f64.powf(n + 1.0));
        Self {
            name: "riesz".into(),
            ambient_dim: k.ambient_dim,
            form: ThetaForm::Convolution(k),
            decay_const: c,
            hoelder_exp: 1.0,
            decay_exp: n - d,
            target_dim: d,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn components(&self) -> usize {
        match &self.form {
            ThetaForm::Convolution(_) => 1,
            ThetaForm::Gradient(k) => k.ambient_dim,
            ThetaForm::Custom { components, .. } => *components,
        }
    }

    /// Arbitrary kernel with declared constants.
    pub fn custom(
        name: impl Into<String>,
        ambient_dim: usize,
        components: usize,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        decay_const: f64,
        hoelder_exp: f64,
        decay_exp: f64,
        target_dim: f64,
    ) -> Self {
        Self {
            name: name.into(),
            form: ThetaForm::Custom {
                f: Arc::new(f),
                components,
            },
            ambient_dim,
            decay_const,
            hoelder_exp,
            decay_exp,
            target_dim,
        }
    }

    /// Scalar convolution kernel `theta(x,y) = e(x - y)` from an expression.
    pub fn from_expr(
        src: &str,
        ambient_dim: usize,
        decay_const: f64,
        hoelder_exp: f64,
        decay_exp: f64,
        target_dim: f64,
    ) -> Result<Self> {
        let k = HomogeneousKernel::from_expr(src, ambient_dim)?;
        let mut spec = Self::convolution(k, target_dim);
        spec.name = "custom".into();
        spec.decay_const = decay_const;
        spec.hoelder_exp = hoelder_exp;
        spec.decay_exp = decay_exp;
        Ok(spec)
    }

    /// `d + upsilon`.
    pub fn decay_order(&self) -> f64 {
        self.target_dim + self.decay_exp
    }

    /// Weight exponent `2 upsilon - (m - d)` of the square-function measure.
    pub fn weight_exponent(&self) -> f64 {
        2.0 * self.decay_exp - (self.ambient_dim as f64 - self.target_dim)
    }

    /// Checks the constants make sense for square-function work.
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_const > 0.0 && self.decay_const.is_finite()) {
            return Err(invalid("kernel decay constant must be positive and finite"));
        }
        if !(self.hoelder_exp > 0.0 && self.hoelder_exp <= 1.0) {
            return Err(invalid("kernel Hoelder exponent must lie in (0, 1]"));
        }
        if !(self.decay_exp > 0.0) {
            return Err(invalid(format!(
                "kernel decay exponent upsilon = {} must be positive",
                self.decay_exp
            )));
        }
        Ok(())
    }

    /// Evaluates `theta(x, y)`; rejects near-coincident pairs.
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        if euclid(x, y) < MIN_SEPARATION {
            return Err(Error::Singularity);
        }
        self.eval_unchecked(x, y, out);
        Ok(())
    }

    /// Hot-path evaluation; the caller guarantees `x != y`.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        if let ThetaForm::Custom { f, .. } = &self.form {
            return f(x, y, out);
        }
        let m = x.len();
        if m <= 8 {
            let mut z = [0.0f64; 8];
            for i in 0..m {
                z[i] = x[i] - y[i];
            }
            self.eval_diff(&z[..m], out);
        } else {
            let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            self.eval_diff(&z, out);
        }
    }

    #[inline]
    fn eval_diff(&self, z: &[f64], out: &mut [f64]) {
        match &self.form {
            ThetaForm::Convolution(k) => out[0] = k.eval_unchecked(z),
            ThetaForm::Gradient(k) => k.gradient_unchecked(z, out),
            ThetaForm::Custom { .. } => unreachable!("custom kernels are not convolutions"),
        }
    }

    pub fn eval_vec(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.components()];
        self.eval(x, y, &mut out)?;
        Ok(out)
    }
}

/// `theta(x, y) = (grad K)(x - y)` for a kernel homogeneous of degree `-n`.
///
/// Each component is homogeneous of degree `-(n+1)`, so on sets of dimension
/// `d = n` the decay exponent is `upsilon = 1`. `alpha` defaults to 1.
pub fn gradient_kernel(k: &HomogeneousKernel) -> KernelSpec {
    gradient_kernel_for_dim(k, k.n() as f64)
}

pub fn gradient_kernel_for_dim(k: &HomogeneousKernel, d: f64) -> KernelSpec {
    let n = k.n() as f64;
    let c = match k.form {
        // grad of x_1/|x|^2 is -1/conj(z)^2 in complex notation: |grad K| = |z|^-2
        // and the derivative has norm 2|z|^-3, giving 2 * 2^3 on the half-distance region
        HomogeneousForm::Riesz { n: 1, .. } => 16.0,
        HomogeneousForm::Riesz { .. } => (n + 1.0) * (n + 6.0) * 2f64.powf(n + 2.0),
        // closed forms carry no analytic bound; callers override
        HomogeneousForm::Expr(_) => 1.0,
    };
    KernelSpec {
        name: "riesz-grad".into(),
        ambient_dim: k.ambient_dim,
        form: ThetaForm::Gradient(k.clone()),
        decay_const: c,
        hoelder_exp: 1.0,
        decay_exp: n + 1.0 - d,
        target_dim: d,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelAxiomReport {
    pub samples: usize,
    /// sup of `|theta(x,y)| rho(x,y)^{d+upsilon}`
    pub decay_sup: f64,
    /// sup of `|theta(x,y) - theta(x,y')| rho(x,y)^{d+upsilon+alpha} / rho(y,y')^alpha`
    pub hoelder_sup: f64,
    pub empirical_const: f64,
    pub declared_const: f64,
    pub pass: bool,
    /// configuration attaining the larger of the two sups
    pub worst_config: Option<WorstConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WorstConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_tilde: Option<Vec<f64>>,
    pub ratio: f64,
}

fn random_unit(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Empirical decay and Hoelder constants of `theta` on random Euclidean
/// configurations with `rho(x,y)` log-uniform in `[1e-2, 1e2]`.
pub fn verify_kernel_axioms(theta: &KernelSpec, samples: usize, seed: u64) -> KernelAxiomReport {
    let m = theta.ambient_dim;
    let comps = theta.components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = theta.decay_order();
    let alpha = theta.hoelder_exp;
    let (mut decay_sup, mut hoelder_sup) = (0.0f64, 0.0f64);
    let mut worst: Option<WorstConfig> = None;
    let mut a = vec![0.0; comps];
    let mut b = vec![0.0; comps];
    for s in 0..samples.max(1) {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = (rng.gen_range(-2.0f64..2.0) * std::f64::consts::LN_10).exp();
        let u = random_unit(&mut rng, m);
        let y: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| xi + r * ui).collect();
        let rho = euclid(&x, &y);
        if theta.eval(&x, &y, &mut a).is_err() {
            continue;
        }
        let dr = norm(&a) * rho.powf(order);
        if dr > decay_sup {
            decay_sup = dr;
            if worst.as_ref().is_none_or(|w| dr > w.ratio) {
                worst = Some(WorstConfig {
                    x: x.clone(),
                    y: y.clone(),
                    y_tilde: None,
                    ratio: dr,
                });
            }
        }
        // every 16th sample probes y' = y exactly
        let yt: Vec<f64> = if s % 16 == 0 {
            y.clone()
        } else {
            let t = rng.gen_range(0.0f64..1.0).max(1e-6) * rho / 2.0;
            let v = random_unit(&mut rng, m);
            y.iter().zip(&v).map(|(yi, vi)| yi + t * vi).collect()
        };
        let sep = euclid(&y, &yt);
        if sep > rho / 2.0 || theta.eval(&x, &yt, &mut b).is_err() {
            continue;
        }
        let diff: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let hr = if sep == 0.0 {
            0.0
        } else {
            diff * rho.powf(order + alpha) / sep.powf(alpha)
        };
        if hr > hoelder_sup {
            hoelder_sup = hr;
            if worst.as_ref().is_none_or(|w| hr > w.ratio) {
                worst = Some(WorstConfig {
                    x: x.clone(),
                    y: y.clone(),
                    y_tilde: Some(yt),
                    ratio: hr,
                });
            }
        }
    }
    let empirical = decay_sup.max(hoelder_sup);
    KernelAxiomReport {
        samples: samples.max(1),
        decay_sup,
        hoelder_sup,
        empirical_const: empirical,
        declared_const: theta.decay_const,
        pass: empirical <= theta.decay_const,
        worst_config: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riesz_values() {
        let k1 = riesz_kernel(1, 1).unwrap();
        let k2 = riesz_kernel(2, 1).unwrap();
        assert!((k1.evaluate(&[3.0, 4.0]).unwrap() - 0.12).abs() < 1e-15);
        assert!((k2.evaluate(&[3.0, 4.0]).unwrap() - 0.16).abs() < 1e-15);
        assert!(matches!(k1.evaluate(&[0.0, 0.0]), Err(Error::Singularity)));
        assert!(riesz_kernel(3, 1).is_err());
        assert!(riesz_kernel(0, 1).is_err());
    }

    #[test]
    fn riesz_symmetries() {
        for n in 1..4 {
            for j in 1..=n + 1 {
                let (odd, hom) = riesz_kernel(j, n).unwrap().probe_symmetries(1000, 3);
                assert!(odd < 1e-12 && hom < 1e-12, "n={n} j={j}: {odd} {hom}");
            }
        }
    }

    #[test]
    fn gradient_at_unit_vector() {
        let k = riesz_kernel(1, 1).unwrap();
        let g = k.gradient(&[1.0, 0.0]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15 && g[1].abs() < 1e-15);
        let theta = gradient_kernel(&k);
        assert_eq!(theta.decay_exp, 1.0);
        assert_eq!(theta.weight_exponent(), 1.0);
        assert!(matches!(theta.eval(&[1.0, 1.0], &[1.0, 1.0], &mut [0.0; 2]), Err(Error::Singularity)));
    }

    #[test]
    fn gradient_matches_closed_form_n1() {
        let k = riesz_kernel(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let r2: f64 = x[0] * x[0] + x[1] * x[1];
            let g = k.gradient(&x).unwrap();
            let e0 = (x[1] * x[1] - x[0] * x[0]) / (r2 * r2);
            let e1 = -2.0 * x[0] * x[1] / (r2 * r2);
            assert!((g[0] - e0).abs() <= 1e-12 * e0.abs().max(1.0));
            assert!((g[1] - e1).abs() <= 1e-12 * e1.abs().max(1.0));
            // |grad K| = |x|^-2 exactly for n = 1
            assert!(((g[0].hypot(g[1])) * r2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expression_gradient_close_to_analytic() {
        let e = HomogeneousKernel::from_expr("x1 / r^2", 2).unwrap();
        let r = riesz_kernel(2, 1).unwrap();
        let x = [0.7, -0.4];
        let (a, b) = (e.gradient(&x).unwrap(), r.gradient(&x).unwrap());
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-8);
        }
        assert!(HomogeneousKernel::from_expr("x2", 2).is_err());
    }

    #[test]
    fn axioms_pass_for_riesz_gradient() {
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let rep = verify_kernel_axioms(&theta, 10_000, 11);
        assert!(rep.pass, "{rep:?}");
        assert!((rep.decay_sup - 1.0).abs() < 1e-9);
        assert!(rep.hoelder_sup > 0.0);
    }

    #[test]
    fn axioms_fail_for_constant_kernel() {
        let theta = KernelSpec::custom("one", 2, 1, |_, _, o| o[0] = 1.0, 10.0, 1.0, 1.0, 1.0);
        let rep = verify_kernel_axioms(&theta, 2000, 5);
        assert!(!rep.pass);
        assert!(rep.worst_config.unwrap().ratio > 10.0);
    }
}
