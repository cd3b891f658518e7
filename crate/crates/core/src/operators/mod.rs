//! Quadrature for `Theta_E f`, the Euclidean `T f`, and the square-function
//! functionals built on top of them.

mod energy;
mod quadrature;

use std::sync::Mutex;

use crate::error::{invalid, Error, Result};
use crate::kernels::{HomogeneousKernel, KernelSpec, MIN_SEPARATION};
use crate::qm::AdrSet;

pub use energy::{
    cone_functional, square_energy, tent_energy, ConeValue, EnergyBreakdown, EnergyEvaluator,
};
pub use quadrature::{QuadNode, Quadrature, ThetaField, DEFAULT_SPLIT_RATIO};

/// A function on the cloud, with cached weighted `L^p` norms.
#[derive(Debug)]
pub struct SurfaceFunction {
    values: Vec<f64>,
    norms: Mutex<Vec<(u64, f64)>>,
}

impl Clone for SurfaceFunction {
    fn clone(&self) -> Self {
        Self {
            values: self.values.clone(),
            norms: Mutex::new(self.norms.lock().expect("norm cache").clone()),
        }
    }
}

impl PartialEq for SurfaceFunction {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl SurfaceFunction {
    pub fn new(values: Vec<f64>, e: &AdrSet) -> Result<Self> {
        if values.len() != e.len() {
            return Err(invalid(format!(
                "function has {} values but the cloud has {} points",
                values.len(),
                e.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite function value"));
        }
        Ok(Self::from_values(values))
    }

    fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            norms: Mutex::new(Vec::new()),
        }
    }

    pub fn zeros(e: &AdrSet) -> Self {
        Self::from_values(vec![0.0; e.len()])
    }

    pub fn constant(e: &AdrSet, c: f64) -> Self {
        Self::from_values(vec![c; e.len()])
    }

    pub fn from_fn(e: &AdrSet, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new((0..e.len()).map(|i| f(e.point(i))).collect(), e)
    }

    /// Indicator of a subset of cloud indices.
    pub fn indicator(e: &AdrSet, members: &[usize]) -> Self {
        let mut v = vec![0.0; e.len()];
        for &i in members {
            v[i] = 1.0;
        }
        Self::from_values(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_values(self.values.iter().map(|v| c * v).collect())
    }

    /// `a f + b g`.
    pub fn combine(&self, a: f64, other: &SurfaceFunction, b: f64) -> Result<Self> {
        if other.len() != self.len() {
            return Err(invalid("functions live on different clouds"));
        }
        Ok(Self::from_values(
            self.values.iter().zip(&other.values).map(|(f, g)| a * f + b * g).collect(),
        ))
    }

    /// Pointwise product, e.g. `1_Q b`.
    pub fn mul(&self, other: &SurfaceFunction) -> Result<Self> {
        if other.len() != self.len() {
            return Err(invalid("functions live on different clouds"));
        }
        Ok(Self::from_values(
            self.values.iter().zip(&other.values).map(|(f, g)| f * g).collect(),
        ))
    }

    /// Indices of nonzero entries.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] != 0.0).collect()
    }

    /// `||f||_{L^p(sigma)}`, `p = inf` allowed.
    pub fn p_norm(&self, e: &AdrSet, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(invalid(format!("exponent p = {p} must be positive")));
        }
        if self.values.len() != e.len() {
            return Err(invalid("function does not match the cloud"));
        }
        let key = p.to_bits();
        if let Some(&(_, v)) = self.norms.lock().expect("norm cache").iter().find(|(k, _)| *k == key) {
            return Ok(v);
        }
        let v = if p.is_infinite() {
            self.values
                .iter()
                .zip(e.weights())
                .filter(|(_, w)| **w > 0.0)
                .map(|(f, _)| f.abs())
                .fold(0.0, f64::max)
        } else {
            let s: f64 = self.values.iter().zip(e.weights()).map(|(f, w)| f.abs().powf(p) * w).sum();
            s.powf(1.0 / p)
        };
        self.norms.lock().expect("norm cache").push((key, v));
        Ok(v)
    }

    /// `sum_j f_j w_j`.
    pub fn integral(&self, e: &AdrSet) -> f64 {
        self.values.iter().zip(e.weights()).map(|(f, w)| f * w).sum()
    }
}

fn check_off_set(e: &AdrSet, x: &[f64]) -> Result<()> {
    if x.len() != e.ambient_dim() {
        return Err(invalid("evaluation point has the wrong dimension"));
    }
    if e.delta(x) < MIN_SEPARATION {
        return Err(Error::Singularity);
    }
    Ok(())
}

/// `(Theta_E f)(x) = sum_j theta(x, y_j) f(y_j) w_j`, one entry per kernel component.
pub fn apply_theta(e: &AdrSet, theta: &KernelSpec, f: &SurfaceFunction, x: &[f64]) -> Result<Vec<f64>> {
    check_off_set(e, x)?;
    if f.len() != e.len() {
        return Err(invalid("function does not match the cloud"));
    }
    let c = theta.components();
    let mut acc = vec![0.0; c];
    let mut buf = vec![0.0; c];
    let w = e.weights();
    for j in f.support() {
        theta.eval_unchecked(x, e.point(j), &mut buf);
        let s = f.values[j] * w[j];
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b * s;
        }
    }
    Ok(acc)
}

/// `T f(x) = sum_j K(x - y_j) f(y_j) w_j` on a surface `Sigma`.
#[allow(non_snake_case)]
pub fn apply_T(sigma: &AdrSet, k: &HomogeneousKernel, f: &SurfaceFunction, x: &[f64]) -> Result<f64> {
    let spec = KernelSpec::convolution(k.clone(), sigma.dim());
    Ok(apply_theta(sigma, &spec, f, x)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::riesz_kernel;
    use crate::qm::QuasiMetricSpace;

    fn line(n: usize, half: f64) -> AdrSet {
        let h = 2.0 * half / n as f64;
        let coords = (0..n).flat_map(|i| [-half + (i as f64 + 0.5) * h, 0.0]).collect();
        AdrSet::new(QuasiMetricSpace::euclidean(2), coords, vec![h; n], 1.0).unwrap()
    }

    #[test]
    fn norms_and_cache() {
        let e = line(100, 1.0);
        let f = SurfaceFunction::constant(&e, 2.0);
        assert!((f.p_norm(&e, 2.0).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((f.p_norm(&e, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(f.p_norm(&e, f64::INFINITY).unwrap(), 2.0);
        assert_eq!(f.p_norm(&e, 2.0).unwrap(), f.p_norm(&e, 2.0).unwrap());
        assert!(SurfaceFunction::new(vec![1.0; 3], &e).is_err());
        assert!(SurfaceFunction::new(vec![f64::NAN; 100], &e).is_err());
    }

    #[test]
    fn poisson_oracle() {
        // K = x2/|x|^2 against 1_[-1,1] at (0, h) is 2 arctan(1/h)
        let e = line(8192, 2.0);
        let k = riesz_kernel(2, 1).unwrap();
        let f = SurfaceFunction::from_fn(&e, |p| if p[0].abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        for h in [0.25, 0.5, 1.0] {
            let v = apply_T(&e, &k, &f, &[0.0, h]).unwrap();
            let exact = 2.0 * (1.0 / h).atan();
            assert!((v - exact).abs() < 1e-3 * exact, "h={h}: {v} vs {exact}");
        }
    }

    #[test]
    fn zero_function_and_singularity() {
        let e = line(64, 1.0);
        let k = riesz_kernel(1, 1).unwrap();
        let f = SurfaceFunction::zeros(&e);
        assert_eq!(apply_T(&e, &k, &f, &[0.1, 0.3]).unwrap(), 0.0);
        let on = e.point(3).to_vec();
        assert!(matches!(apply_T(&e, &k, &f, &on), Err(Error::Singularity)));
    }

    #[test]
    fn odd_symmetry_cancels() {
        let e = line(400, 1.0);
        let k = riesz_kernel(1, 1).unwrap();
        let f = SurfaceFunction::constant(&e, 1.0);
        let v = apply_T(&e, &k, &f, &[0.0, 0.3]).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }
}
