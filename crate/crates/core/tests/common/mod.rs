//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use sqfn_core::{AdrSet, QuasiMetricSpace};

/// `n` equally weighted points on `[-half, half] x {0}`.
pub fn line(n: usize, half: f64) -> AdrSet {
    let h = 2.0 * half / n as f64;
    let coords = (0..n).flat_map(|i| [-half + (i as f64 + 0.5) * h, 0.0]).collect();
    AdrSet::new(QuasiMetricSpace::euclidean(2), coords, vec![h; n], 1.0).unwrap()
}

/// `pi^2 / (2 pi) * int |f^(xi)|^2 dxi`, with the transform computed by
/// direct quadrature of `f` on a fine grid.
pub fn frequency_side_energy(f: impl Fn(f64) -> f64, half: f64) -> f64 {
    let n = 4000;
    let h = 2.0 * half / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| -half + (i as f64 + 0.5) * h).collect();
    let fx: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let (xi_max, m) = (40.0, 4000);
    let dxi = 2.0 * xi_max / m as f64;
    let mut acc = 0.0;
    for k in 0..m {
        let xi = -xi_max + (k as f64 + 0.5) * dxi;
        let (mut re, mut im) = (0.0, 0.0);
        for (x, v) in xs.iter().zip(&fx) {
            re += v * (xi * x).cos() * h;
            im -= v * (xi * x).sin() * h;
        }
        acc += (re * re + im * im) * dxi;
    }
    PI * PI * acc / (2.0 * PI)
}
