//! Heisenberg ferromagnets on small periodic lattices, diagonalized sector by
//! sector in the total magnetization `M = sum_x S3_x`.
//!
//! `H = H0 - B M` with `H0 = -sum_{bonds} J S_x . S_y`, each unordered
//! nearest-neighbour pair counted once; energies are in units of `kT`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::fock::{MatrixOperator, C64};
use crate::griffiths::Measure;
use crate::linalg::ln_sum_exp;

pub const DEFAULT_SPIN_CAP: usize = 16384;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinLattice {
    pub dimension: u32,
    pub length: u32,
    /// `2 s`.
    pub twice_spin: u32,
    pub coupling: f64,
    /// Rescale of `H`; the temperature convention stays `kT = 1`.
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl SpinLattice {
    pub fn chain(sites: u32) -> Self {
        Self {
            dimension: 1,
            length: sites,
            twice_spin: 1,
            coupling: 1.0,
            beta: 1.0,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn sites(&self) -> usize {
        (self.length as usize).pow(self.dimension)
    }

    pub fn spin(&self) -> f64 {
        self.twice_spin as f64 / 2.0
    }

    pub fn local_dim(&self) -> usize {
        self.twice_spin as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.length == 0 || self.twice_spin == 0 {
            return Err(invalid("lattice", "dimension, length and spin must be positive"));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(invalid("coupling", "must be finite and nonnegative"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be positive"));
        }
        let dim = (self.local_dim() as f64).powi(self.sites() as i32);
        if dim > DEFAULT_SPIN_CAP as f64 {
            return Err(Error::TruncationTooLarge {
                dim: dim as usize,
                cap: DEFAULT_SPIN_CAP,
            });
        }
        Ok(())
    }

    /// Unordered periodic nearest-neighbour pairs.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.length as usize;
        let d = self.dimension;
        let mut set = BTreeSet::new();
        for x in 0..self.sites() {
            for axis in 0..d {
                let stride = l.pow(axis);
                let coord = (x / stride) % l;
                let y = x - coord * stride + ((coord + 1) % l) * stride;
                if x != y {
                    set.insert((x.min(y), x.max(y)));
                }
            }
        }
        set.into_iter().collect()
    }
}

/// `S1, S2, S3` for spin `twice_spin / 2` in the `m = s, s-1, ..., -s` basis.
pub fn spin_matrices(twice_spin: u32) -> [DMatrix<C64>; 3] {
    let n = twice_spin as usize + 1;
    let s = twice_spin as f64 / 2.0;
    let m = |i: usize| s - i as f64;
    let plus = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c {
            let mc = m(c);
            C64::new((s * (s + 1.0) - mc * (mc + 1.0)).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let minus = plus.adjoint();
    let half = C64::new(0.5, 0.0);
    let s1 = (&plus + &minus) * half;
    let s2 = (&plus - &minus) * C64::new(0.0, -0.5);
    let s3 = DMatrix::from_fn(n, n, |r, c| if r == c { C64::new(m(r), 0.0) } else { C64::new(0.0, 0.0) });
    [s1, s2, s3]
}

/// Product basis: state index in base `2s+1`, digit `k` of site `x` meaning
/// `m_x = s - k`.
struct SpinBasis {
    sites: usize,
    local: usize,
    spin: f64,
}

impl SpinBasis {
    fn digit(&self, state: usize, x: usize) -> usize {
        (state / self.local.pow(x as u32)) % self.local
    }

    fn m(&self, state: usize, x: usize) -> f64 {
        self.spin - self.digit(state, x) as f64
    }

    fn total_m(&self, state: usize) -> f64 {
        (0..self.sites).map(|x| self.m(state, x)).sum()
    }

    fn dim(&self) -> usize {
        self.local.pow(self.sites as u32)
    }

    /// `(target, amplitude)` of `S+_x S-_y` on `state`.
    fn flip(&self, state: usize, x: usize, y: usize) -> Option<(usize, f64)> {
        let s = self.spin;
        let (mx, my) = (self.m(state, x), self.m(state, y));
        if mx >= s || my <= -s {
            return None;
        }
        let amp = (s * (s + 1.0) - mx * (mx + 1.0)).sqrt() * (s * (s + 1.0) - my * (my - 1.0)).sqrt();
        let px = self.local.pow(x as u32);
        let py = self.local.pow(y as u32);
        Some((state - px + py, amp))
    }
}

fn h0_entries(lattice: &SpinLattice, basis: &SpinBasis) -> Vec<(usize, usize, f64)> {
    let j = lattice.coupling;
    let bonds = lattice.bonds();
    let mut out = Vec::new();
    for state in 0..basis.dim() {
        let diag: f64 = bonds.iter().map(|&(x, y)| basis.m(state, x) * basis.m(state, y)).sum();
        out.push((state, state, -j * diag));
        for &(x, y) in &bonds {
            for (a, b) in [(x, y), (y, x)] {
                if let Some((t, amp)) = basis.flip(state, a, b) {
                    out.push((t, state, -j * 0.5 * amp));
                }
            }
        }
    }
    out
}

fn basis_of(lattice: &SpinLattice) -> SpinBasis {
    SpinBasis {
        sites: lattice.sites(),
        local: lattice.local_dim(),
        spin: lattice.spin(),
    }
}

/// `H0 - B M` on the full product space.
pub fn build_spin_hamiltonian(lattice: &SpinLattice, field: f64) -> Result<MatrixOperator> {
    lattice.validate()?;
    let basis = basis_of(lattice);
    let mut entries: Vec<(usize, usize, C64)> = h0_entries(lattice, &basis)
        .into_iter()
        .map(|(i, j, v)| (i, j, C64::new(v, 0.0)))
        .collect();
    for s in 0..basis.dim() {
        entries.push((s, s, C64::new(-field * basis.total_m(s), 0.0)));
    }
    MatrixOperator::from_triplets(basis.dim(), entries)
        .checked_hermitian()
        .ok_or_else(|| invalid("coupling", "spin Hamiltonian is not hermitian"))
}

/// Total magnetization `M` as a diagonal operator.
pub fn magnetization_operator(lattice: &SpinLattice) -> Result<MatrixOperator> {
    lattice.validate()?;
    let basis = basis_of(lattice);
    let diag: Vec<f64> = (0..basis.dim()).map(|s| basis.total_m(s)).collect();
    Ok(MatrixOperator::diagonal_from(&diag))
}

/// Spectrum of `H0` in each magnetization sector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectorSpectrum {
    pub lattice: SpinLattice,
    /// `(M, energies of H0)`, ordered by `M`.
    pub sectors: Vec<(f64, Vec<f64>)>,
}

pub fn sector_spectrum(lattice: &SpinLattice, exec: Execution) -> Result<SectorSpectrum> {
    lattice.validate()?;
    let basis = basis_of(lattice);
    // key by 2M to keep it integral
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for s in 0..basis.dim() {
        groups.entry((2.0 * basis.total_m(s)).round() as i64).or_default().push(s);
    }
    let entries = h0_entries(lattice, &basis);
    let mut pos = vec![(0usize, 0usize); basis.dim()];
    let keys: Vec<i64> = groups.keys().copied().collect();
    for (g, idx) in groups.values().enumerate() {
        for (r, &s) in idx.iter().enumerate() {
            pos[s] = (g, r);
        }
    }
    let mut mats: Vec<DMatrix<f64>> = groups.values().map(|idx| DMatrix::zeros(idx.len(), idx.len())).collect();
    for (i, j, v) in entries {
        let (gi, ri) = pos[i];
        let (gj, rj) = pos[j];
        debug_assert_eq!(gi, gj);
        mats[gi][(ri, rj)] += v;
    }
    let energies = exec.map(&mats, |m| {
        let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    });
    let sectors = keys.into_iter().map(|k| k as f64 / 2.0).zip(energies).collect();
    Ok(SectorSpectrum {
        lattice: lattice.clone(),
        sectors,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MagnetReport {
    pub field: f64,
    /// `|Lambda|^-1 <M>`.
    pub m: f64,
    /// `-(beta |Lambda|)^-1 ln Tr exp(-beta H)`.
    pub g: f64,
    /// `<(M / |Lambda|)^2>`.
    pub m2: f64,
    /// `(M, probability)` pairs.
    pub distribution: Vec<(f64, f64)>,
}

impl SectorSpectrum {
    fn sites(&self) -> f64 {
        self.lattice.sites() as f64
    }

    /// `ln` of the Boltzmann sum of each sector at field `b`.
    fn sector_logs(&self, b: f64) -> Vec<f64> {
        let beta = self.lattice.beta;
        self.sectors
            .iter()
            .map(|(m, es)| ln_sum_exp(es.iter().map(|e| -beta * (e - b * m))))
            .collect()
    }

    pub fn ln_partition(&self, b: f64) -> f64 {
        ln_sum_exp(self.sector_logs(b))
    }

    pub fn at(&self, b: f64) -> MagnetReport {
        let logs = self.sector_logs(b);
        let z = ln_sum_exp(logs.iter().copied());
        let n = self.sites();
        let distribution: Vec<(f64, f64)> = self
            .sectors
            .iter()
            .zip(&logs)
            .map(|((m, _), l)| (*m, (l - z).exp()))
            .collect();
        let m: f64 = distribution.iter().map(|(mm, p)| p * mm).sum::<f64>() / n;
        let m2: f64 = distribution.iter().map(|(mm, p)| p * mm * mm).sum::<f64>() / (n * n);
        MagnetReport {
            field: b,
            m,
            g: -z / (self.lattice.beta * n),
            m2,
            distribution,
        }
    }

    /// Central difference of `g` in `B` with step `h`.
    pub fn dg_db(&self, b: f64, h: f64) -> f64 {
        let g = |x: f64| -self.ln_partition(x) / (self.lattice.beta * self.sites());
        (g(b + h) - g(b - h)) / (2.0 * h)
    }
}

pub fn thermodynamics(lattice: &SpinLattice, fields: &[f64], exec: Execution) -> Result<Vec<MagnetReport>> {
    let spec = sector_spectrum(lattice, exec)?;
    Ok(fields.iter().map(|&b| spec.at(b)).collect())
}

/// Distribution of `M` in the Gibbs state, as a measure with `n = |Lambda|`.
pub fn magnetization_distribution(lattice: &SpinLattice, field: f64, exec: Execution) -> Result<Measure> {
    let r = sector_spectrum(lattice, exec)?.at(field);
    let total: f64 = r.distribution.iter().map(|d| d.1).sum();
    Ok(Measure {
        n: lattice.sites() as u32,
        points: r.distribution.iter().map(|d| d.0).collect(),
        masses: r.distribution.iter().map(|d| d.1 / total).collect(),
    })
}

/// Whether probabilities are non-increasing in `|M|`.
pub fn monotone_in_abs_m(distribution: &[(f64, f64)], tol: f64) -> bool {
    let mut by_abs: Vec<(f64, f64)> = distribution.iter().map(|&(m, p)| (m.abs(), p)).collect();
    by_abs.sort_by(|a, b| a.0.total_cmp(&b.0));
    by_abs.windows(2).all(|w| w[0].0 == w[1].0 || w[1].1 <= w[0].1 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn two_spin_spectrum() {
        let s = sector_spectrum(&SpinLattice::chain(2), Execution::Sequential).unwrap();
        let mut all: Vec<f64> = s.sectors.iter().flat_map(|(_, e)| e.clone()).collect();
        all.sort_by(f64::total_cmp);
        let expected = [-0.25, -0.25, -0.25, 0.75];
        for (a, b) in all.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zeeman_splitting() {
        let h = build_spin_hamiltonian(&SpinLattice::chain(2), 0.3).unwrap();
        let (vals, _) = linalg::eigh(h.to_dense(), false).unwrap();
        let expected = [-0.25 - 0.3, -0.25, -0.25 + 0.3, 0.75];
        let mut e = expected.to_vec();
        e.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(e) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_algebra() {
        for twice in [1, 2, 3] {
            let [s1, s2, s3] = spin_matrices(twice);
            let comm = &s1 * &s2 - &s2 * &s1;
            let target = &s3 * C64::new(0.0, 1.0);
            assert!((comm - target).norm() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_commutes_with_m() {
        for lat in [SpinLattice::chain(5), SpinLattice { dimension: 2, length: 3, twice_spin: 1, coupling: 0.7, beta: 1.0 }] {
            let h = build_spin_hamiltonian(&lat, 0.0).unwrap();
            let m = magnetization_operator(&lat).unwrap();
            assert!(h.commutator(&m).max_abs() < 1e-12);
        }
    }

    #[test]
    fn bonds_are_unordered_pairs() {
        assert_eq!(SpinLattice::chain(2).bonds(), vec![(0, 1)]);
        assert_eq!(SpinLattice::chain(4).bonds().len(), 4);
        let sq = SpinLattice { dimension: 2, length: 3, twice_spin: 1, coupling: 1.0, beta: 1.0 };
        assert_eq!(sq.bonds().len(), 18);
    }

    #[test]
    fn zero_field_and_symmetry() {
        let lat = SpinLattice::chain(6);
        let s = sector_spectrum(&lat, Execution::Sequential).unwrap();
        assert!(s.at(0.0).m.abs() < 1e-12);
        for b in [0.1, 0.5, 1.3] {
            let (p, q) = (s.at(b), s.at(-b));
            assert!((p.m + q.m).abs() < 1e-10);
            assert!((p.g - q.g).abs() < 1e-10);
            assert!(p.m2 >= p.m * p.m - 1e-12);
            assert!((p.m + s.dg_db(b, 1e-4)).abs() < 1e-6);
        }
    }

    #[test]
    fn two_spin_low_temperature_moment() {
        let lat = SpinLattice::chain(2).with_beta(50.0);
        let r = thermodynamics(&lat, &[0.0], Execution::Sequential).unwrap();
        assert!((r[0].m2 - 1.0 / 6.0).abs() < 1e-3);
    }

    #[test]
    fn infinite_temperature_counts() {
        let lat = SpinLattice::chain(2).with_beta(1e-12);
        let d = magnetization_distribution(&lat, 0.0, Execution::Sequential).unwrap();
        assert_eq!(d.points, vec![-1.0, 0.0, 1.0]);
        for (p, e) in d.masses.iter().zip([0.25, 0.5, 0.25]) {
            assert!((p - e).abs() < 1e-10);
        }
    }

    #[test]
    fn distribution_matches_unblocked_trace() {
        let lat = SpinLattice::chain(8).with_beta(2.0);
        let d = magnetization_distribution(&lat, 0.0, Execution::Sequential).unwrap();
        d.validate().unwrap();
        // Tr(exp(-beta H) P_M) / Z with eigenvectors of the unblocked matrix
        let h = build_spin_hamiltonian(&lat, 0.0).unwrap();
        let (vals, vecs) = linalg::eigh(h.to_dense(), true).unwrap();
        let vecs = vecs.unwrap();
        let m = magnetization_operator(&lat).unwrap().diagonal();
        let z: f64 = vals.iter().map(|e| (-2.0 * e).exp()).sum();
        for (point, mass) in d.points.iter().zip(&d.masses) {
            let mut p = 0.0;
            for (j, e) in vals.iter().enumerate() {
                let w = (-2.0 * e).exp() / z;
                for (i, mi) in m.iter().enumerate() {
                    if (mi.re - point).abs() < 1e-9 {
                        p += w * vecs[(i, j)].norm_sqr();
                    }
                }
            }
            assert!((p - mass).abs() < 1e-12, "{point}: {p} vs {mass}");
        }
        let n = d.points.len();
        for k in 0..n {
            assert!((d.masses[k] - d.masses[n - 1 - k]).abs() < 1e-12);
        }
        let pairs: Vec<(f64, f64)> = d.points.iter().copied().zip(d.masses.iter().copied()).collect();
        assert!(monotone_in_abs_m(&pairs, 1e-14));
    }

    #[test]
    fn rejects_oversized_lattice() {
        assert!(SpinLattice::chain(15).validate().is_err());
        assert!(SpinLattice::chain(14).validate().is_ok());
    }
}
