//! Quadrature over the complex plane with the measure `d^2 z = pi^-1 dx dy`.
//!
//! In polar form `d^2 z = (2 pi)^-1 dt dtheta` with `t = |z|^2`, so a grid is
//! Gauss-Legendre in `t` on `[0, R^2]` times a uniform angular rule whose
//! weights are `1/M`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fock::C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p1 = P_n(z), p0 = P_{n-1}(z)
            let (mut p0, mut p1) = (0.0, 1.0);
            for k in 0..n {
                let p2 = p0;
                p0 = p1;
                p1 = ((2 * k + 1) as f64 * z * p0 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&u| mid + half * u).collect(),
        w.iter().map(|&v| v * half).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Radial cutoff; chosen per parameter point when absent.
    #[serde(default)]
    pub radius: Option<f64>,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub tol_quad: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            radius: None,
            radial_nodes: 200,
            angular_nodes: 64,
            tol_quad: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialGrid {
    radius: f64,
    t_nodes: Vec<f64>,
    t_weights: Vec<f64>,
    angular: usize,
}

/// One quadrature node `z` with its weight under `d^2 z`.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub z: C64,
    pub weight: f64,
}

impl RadialGrid {
    pub fn new(radius: f64, radial_nodes: usize, angular_nodes: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        if radial_nodes == 0 || angular_nodes == 0 {
            return Err(invalid("nodes", "node counts must be positive"));
        }
        let (t, w) = gauss_legendre_on(radial_nodes, 0.0, radius * radius);
        Ok(Self {
            radius,
            t_nodes: t,
            t_weights: w,
            angular: angular_nodes,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn radial_len(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn angular_len(&self) -> usize {
        self.angular
    }

    pub fn len(&self) -> usize {
        self.t_nodes.len() * self.angular
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Radial nodes `r_i = sqrt(t_i)` and their weights for radial integrands,
    /// so that `int d^2 z f(|z|) = sum_i w_i f(r_i)`.
    pub fn radial(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t_nodes
            .iter()
            .zip(&self.t_weights)
            .map(|(&t, &w)| (t.sqrt(), w))
    }

    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.angular as f64
    }

    /// Node `k = i * M + j` (radial index `i`, angular index `j`).
    pub fn node(&self, k: usize) -> Node {
        let (i, j) = (k / self.angular, k % self.angular);
        let r = self.t_nodes[i].sqrt();
        Node {
            z: C64::from_polar(r, self.angle(j)),
            weight: self.t_weights[i] / self.angular as f64,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }

    /// Index of the node at the complex-conjugate position.
    pub fn conjugate_index(&self, k: usize) -> usize {
        let (i, j) = (k / self.angular, k % self.angular);
        i * self.angular + (self.angular - j) % self.angular
    }

    /// Nodes in the closed upper half plane; with [`Self::conjugate_index`]
    /// these cover the grid.
    pub fn upper_half(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let j = k % self.angular;
                2 * j <= self.angular
            })
            .collect()
    }

    /// Indices of the outermost ring.
    pub fn outer_ring(&self) -> std::ops::Range<usize> {
        let i = self.t_nodes.len() - 1;
        i * self.angular..(i + 1) * self.angular
    }

    pub fn integrate(&self, f: impl Fn(C64) -> f64) -> f64 {
        self.nodes().map(|n| n.weight * f(n.z)).sum()
    }

    pub fn integrate_complex(&self, f: impl Fn(C64) -> C64) -> C64 {
        self.nodes().map(|n| f(n.z) * n.weight).sum()
    }

    /// Weighted sum of precomputed samples in node order.
    pub fn sum_samples(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.len());
        samples
            .iter()
            .enumerate()
            .map(|(k, &s)| s * self.node(k).weight)
            .sum()
    }

    /// `int e^{-|z|^2} d^2 z`, which is 1 for the convention and a wide enough cutoff.
    pub fn gaussian_mass(&self) -> f64 {
        self.integrate(|z| (-z.norm_sqr()).exp())
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let m = self.gaussian_mass();
        if (m - 1.0).abs() > tol {
            return Err(invalid(
                "radius",
                format!("gaussian normalization {m} deviates from 1 by more than {tol}"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        for deg in 0..20 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn large_rule_weights_sum_to_two() {
        let (_, w) = gauss_legendre(400);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_convention() {
        let g = RadialGrid::new(8.0, 200, 64).unwrap();
        assert!((g.gaussian_mass() - 1.0).abs() < 1e-12);
        assert!(g.validate(1e-8).is_ok());
        let small = RadialGrid::new(2.0, 200, 64).unwrap();
        assert!(small.validate(1e-8).is_err());
    }

    #[test]
    fn angular_moments_vanish() {
        let g = RadialGrid::new(8.0, 100, 16).unwrap();
        let m = g.integrate_complex(|z| z * (-z.norm_sqr()).exp());
        assert!(m.norm() < 1e-15);
        let m2 = g.integrate(|z| z.norm_sqr() * (-z.norm_sqr()).exp());
        assert!((m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_pairs_cover_grid() {
        let g = RadialGrid::new(3.0, 4, 8).unwrap();
        let half = g.upper_half();
        let mut covered = vec![false; g.len()];
        for &k in &half {
            covered[k] = true;
            covered[g.conjugate_index(k)] = true;
            let (a, b) = (g.node(k).z, g.node(g.conjugate_index(k)).z);
            assert!((a.conj() - b).norm() < 1e-12);
        }
        assert!(covered.iter().all(|&c| c));
    }
}
