//! Zero-mode coherent states and their lower and upper symbols.
//!
//! `|z> = exp(-|z|^2/2 + z a0^dag) |0>` has components
//! `<n|z> = e^{-|z|^2/2} z^n / sqrt(n!)`. The lower symbol of an operator is
//! `<z|F|z>`; the upper symbol is a function `u` with `F = int d^2 z u(z) |z><z|`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, MatrixOperator, ZeroMode, C64};
use crate::quadrature::RadialGrid;

/// A substitution value `z`; `zeta = z / sqrt(V)` is only formed for reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentPoint {
    pub z: C64,
}

impl CoherentPoint {
    pub fn new(z: C64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(crate::error::invalid("z", "components must be finite"));
        }
        Ok(Self { z })
    }

    pub fn zeta(&self, volume: f64) -> C64 {
        self.z / volume.sqrt()
    }
}

/// Normal-ordered zero-mode monomials `(a0^dag)^c a0^d` appearing in the gas
/// Hamiltonian, plus the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Monomial {
    Identity,
    A,
    Adag,
    AA,
    AdagAdag,
    AdagA,
    AdagAdagAA,
}

impl Monomial {
    pub const TABLE: [Monomial; 6] = [
        Monomial::A,
        Monomial::Adag,
        Monomial::AA,
        Monomial::AdagAdag,
        Monomial::AdagA,
        Monomial::AdagAdagAA,
    ];

    /// `(creators, annihilators)`.
    pub fn powers(self) -> (u8, u8) {
        match self {
            Monomial::Identity => (0, 0),
            Monomial::A => (0, 1),
            Monomial::Adag => (1, 0),
            Monomial::AA => (0, 2),
            Monomial::AdagAdag => (2, 0),
            Monomial::AdagA => (1, 1),
            Monomial::AdagAdagAA => (2, 2),
        }
    }

    pub fn from_powers(creators: u8, annihilators: u8) -> Result<Self> {
        Ok(match (creators, annihilators) {
            (0, 0) => Monomial::Identity,
            (0, 1) => Monomial::A,
            (1, 0) => Monomial::Adag,
            (0, 2) => Monomial::AA,
            (2, 0) => Monomial::AdagAdag,
            (1, 1) => Monomial::AdagA,
            (2, 2) => Monomial::AdagAdagAA,
            (c, d) => {
                return Err(Error::UnknownMonomial(format!(
                    "(a0^dag)^{c} a0^{d}"
                )))
            }
        })
    }

    pub fn lower(self, z: C64) -> C64 {
        let (c, d) = self.powers();
        z.conj().powu(c as u32) * z.powu(d as u32)
    }

    pub fn upper(self, z: C64) -> C64 {
        let t = z.norm_sqr();
        match self {
            Monomial::AdagA => C64::new(t - 1.0, 0.0),
            Monomial::AdagAdagAA => C64::new(t * t - 4.0 * t + 2.0, 0.0),
            other => other.lower(z),
        }
    }

    /// Matrix of the monomial on a single zero-mode ladder `0..=cap`.
    pub fn ladder_matrix(self, cap: usize) -> DMatrix<C64> {
        let dim = cap + 1;
        let a = DMatrix::from_fn(dim, dim, |i, j| {
            if j == i + 1 {
                C64::new((j as f64).sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let ad = a.adjoint();
        let (c, d) = self.powers();
        let mut m = DMatrix::<C64>::identity(dim, dim);
        for _ in 0..c {
            m = &m * &ad;
        }
        for _ in 0..d {
            m = &m * &a;
        }
        m
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Monomial::Identity => "1",
            Monomial::A => "a",
            Monomial::Adag => "adag",
            Monomial::AA => "a_a",
            Monomial::AdagAdag => "adag_adag",
            Monomial::AdagA => "adag_a",
            Monomial::AdagAdagAA => "adag_adag_a_a",
        };
        f.write_str(s)
    }
}

impl FromStr for Monomial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "1" | "identity" => Monomial::Identity,
            "a" => Monomial::A,
            "adag" => Monomial::Adag,
            "a_a" => Monomial::AA,
            "adag_adag" => Monomial::AdagAdag,
            "adag_a" => Monomial::AdagA,
            "adag_adag_a_a" => Monomial::AdagAdagAA,
            other => return Err(Error::UnknownMonomial(other.to_string())),
        })
    }
}

pub fn lower_symbol(monomial: Monomial, z: C64) -> C64 {
    monomial.lower(z)
}

pub fn upper_symbol(monomial: Monomial, z: C64) -> C64 {
    monomial.upper(z)
}

pub type SymbolFn = fn(Monomial, C64) -> C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Lower,
    Upper,
}

impl SymbolKind {
    pub fn eval(self, m: Monomial, z: C64) -> C64 {
        match self {
            SymbolKind::Lower => m.lower(z),
            SymbolKind::Upper => m.upper(z),
        }
    }
}

/// The six zero-mode monomials with their symbol evaluators.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    entries: Vec<(Monomial, SymbolFn, SymbolFn)>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self {
            entries: Monomial::TABLE
                .iter()
                .map(|&m| (m, lower_symbol as SymbolFn, upper_symbol as SymbolFn))
                .collect(),
        }
    }
}

impl SymbolTable {
    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    fn entry(&self, m: Monomial) -> Result<&(Monomial, SymbolFn, SymbolFn)> {
        self.entries
            .iter()
            .find(|e| e.0 == m)
            .ok_or_else(|| Error::UnknownMonomial(m.to_string()))
    }

    pub fn lower(&self, m: Monomial, z: C64) -> Result<C64> {
        self.entry(m).map(|e| (e.1)(m, z))
    }

    pub fn upper(&self, m: Monomial, z: C64) -> Result<C64> {
        self.entry(m).map(|e| (e.2)(m, z))
    }
}

/// `<n|z>` for `n = 0..=cap`, by upward recursion from `e^{-|z|^2/2}`.
pub fn coherent_amplitudes(z: C64, cap: usize) -> Vec<C64> {
    let mut c = Vec::with_capacity(cap + 1);
    c.push(C64::new((-0.5 * z.norm_sqr()).exp(), 0.0));
    for n in 1..=cap {
        let prev = c[n - 1];
        c.push(prev * z / (n as f64).sqrt());
    }
    c
}

/// Probability mass of `|z>` above the cap, `sum_{n > cap} e^{-|z|^2}|z|^{2n}/n!`.
pub fn leakage(z: C64, cap: usize) -> f64 {
    let inside: f64 = coherent_amplitudes(z, cap).iter().map(|c| c.norm_sqr()).sum();
    (1.0 - inside).max(0.0)
}

/// `|z> (x) |vacuum of the other modes>` on an explicit basis.
///
/// The vector is not renormalized; its norm deficit is the truncation leakage.
pub fn coherent_vector(basis: &FockBasis, z: C64, tol: f64) -> Result<DVector<C64>> {
    let cap = basis
        .zero_cap()
        .ok_or_else(|| crate::error::invalid("basis", "coherent vectors need the zero mode"))?
        as usize;
    let amps = coherent_amplitudes(z, cap);
    let mut v = DVector::zeros(basis.dim());
    let mut occ = vec![0u16; basis.slots()];
    for (n, &a) in amps.iter().enumerate() {
        occ[0] = n as u16;
        if let Some(i) = basis.index_of(&occ) {
            v[i] = a;
        }
    }
    let leak = leakage(z, cap);
    if leak > tol {
        warn!("coherent vector at |z| = {} leaks {leak:e} past cap {cap}", z.norm());
    }
    Ok(v)
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub operator: MatrixOperator,
    /// Largest deviation from the exact ladder matrix over interior entries.
    pub max_deviation: f64,
    /// Largest occupation counted as interior.
    pub interior: usize,
}

/// `int d^2 z u(z) |z><z|` on the zero-mode ladder of `basis`, compared with
/// the exact matrix on occupations `n <= cap - 4`. The identity monomial uses
/// `u = 1` (resolution of the identity).
pub fn reconstruct_from_upper(
    monomial: Monomial,
    basis: &FockBasis,
    grid: &RadialGrid,
) -> Result<Reconstruction> {
    let cap = basis
        .zero_cap()
        .ok_or_else(|| crate::error::invalid("basis", "reconstruction needs the zero mode"))?
        as usize;
    let dim = cap + 1;
    let mut acc = DMatrix::<C64>::zeros(dim, dim);
    for node in grid.nodes() {
        let u = monomial.upper(node.z) * node.weight;
        if u == C64::new(0.0, 0.0) {
            continue;
        }
        let c = coherent_amplitudes(node.z, cap);
        for i in 0..dim {
            let ci = c[i] * u;
            for j in 0..dim {
                acc[(i, j)] += ci * c[j].conj();
            }
        }
    }
    let exact = monomial.ladder_matrix(cap);
    let interior = cap.saturating_sub(4);
    let mut max_deviation: f64 = 0.0;
    for i in 0..=interior {
        for j in 0..=interior {
            max_deviation = max_deviation.max((acc[(i, j)] - exact[(i, j)]).norm());
        }
    }
    Ok(Reconstruction {
        operator: MatrixOperator::from_dense(acc),
        max_deviation,
        interior,
    })
}

/// Partial inner product `<z|Phi>` of a full-basis vector, as a vector on the
/// primed basis, together with its squared norm `c(z)`.
pub fn partial_inner(
    basis: &FockBasis,
    primed: &FockBasis,
    z: C64,
    vector: &DVector<C64>,
) -> Result<(DVector<C64>, f64)> {
    if basis.zero_mode() != ZeroMode::Explicit || primed.zero_mode() != ZeroMode::Substituted {
        return Err(crate::error::invalid(
            "basis",
            "partial inner product maps an explicit basis onto its primed basis",
        ));
    }
    let cap = basis.zero_cap().unwrap_or(0) as usize;
    let amps = coherent_amplitudes(z, cap);
    let mut out = DVector::zeros(primed.dim());
    for i in 0..basis.dim() {
        if let Some((n0, j)) = basis.split(i, primed) {
            out[j] += amps[n0].conj() * vector[i];
        }
    }
    let norm = out.norm_squared();
    Ok((out, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation, ModeSet, Truncation};

    fn ladder(cap: u32) -> FockBasis {
        FockBasis::build(&ModeSet::zero_only(1.0).unwrap(), Truncation::uniform(cap)).unwrap()
    }

    #[test]
    fn vacuum_at_origin() {
        let b = ladder(10);
        let v = coherent_vector(&b, C64::new(0.0, 0.0), 1e-8).unwrap();
        assert_eq!(v.norm(), 1.0);
        assert_eq!(v[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn overlap_matches_closed_form() {
        let b = ladder(60);
        let z = C64::new(1.0, 0.5);
        let z0 = C64::new(0.3, 0.0);
        let u = coherent_vector(&b, z, 1e-8).unwrap();
        let v = coherent_vector(&b, z0, 1e-8).unwrap();
        let ov = u.dotc(&v).norm_sqr();
        let exact = (-(z - z0).norm_sqr()).exp();
        assert!((ov - exact).abs() < 1e-14, "{ov} vs {exact}");
    }

    #[test]
    fn lower_symbol_of_annihilator() {
        let b = ladder(40);
        let z = C64::new(0.7, 0.0);
        let v = coherent_vector(&b, z, 1e-8).unwrap();
        let a = annihilation(&b, 0).unwrap();
        assert!((a.expectation(&v, &v) - z).norm() < 1e-10);
    }

    #[test]
    fn symbol_table_values() {
        let two = C64::new(2.0, 0.0);
        assert_eq!(lower_symbol(Monomial::AdagA, two), C64::new(4.0, 0.0));
        let w = C64::new(1.0, 1.0);
        assert_eq!(lower_symbol(Monomial::A, w), w);
        let r2 = C64::new(2f64.sqrt(), 0.0);
        assert!((lower_symbol(Monomial::AdagAdagAA, r2) - C64::new(4.0, 0.0)).norm() < 1e-12);
        assert_eq!(upper_symbol(Monomial::AdagA, two), C64::new(3.0, 0.0));
        let i = C64::new(0.0, 1.0);
        assert_eq!(upper_symbol(Monomial::A, i), i);
        assert_eq!(upper_symbol(Monomial::AdagAdagAA, C64::new(1.0, 0.0)), C64::new(-1.0, 0.0));
    }

    #[test]
    fn unknown_monomials_rejected() {
        assert!("a_adag".parse::<Monomial>().is_err());
        assert!(Monomial::from_powers(2, 1).is_err());
        assert_eq!("adag_a".parse::<Monomial>().unwrap(), Monomial::AdagA);
        let t = SymbolTable::default();
        assert!(t.lower(Monomial::Identity, C64::new(1.0, 0.0)).is_err());
        assert_eq!(t.monomials().count(), 6);
    }

    #[test]
    fn resolution_of_identity() {
        let b = ladder(20);
        let g = RadialGrid::new(8.0, 200, 64).unwrap();
        let r = reconstruct_from_upper(Monomial::Identity, &b, &g).unwrap();
        assert!(r.max_deviation < 1e-8, "{}", r.max_deviation);
    }

    #[test]
    fn number_and_lowering_reconstruction() {
        let b = ladder(20);
        let g = RadialGrid::new(8.0, 200, 64).unwrap();
        for m in [Monomial::AdagA, Monomial::A] {
            let r = reconstruct_from_upper(m, &b, &g).unwrap();
            assert!(r.max_deviation < 1e-8, "{m}: {}", r.max_deviation);
        }
    }

    #[test]
    fn partial_inner_of_single_excitation() {
        let modes = ModeSet::symmetric(1, 1.0).unwrap();
        let b = FockBasis::build(&modes, Truncation::uniform(3).with_zero_mode(30)).unwrap();
        let p = b.primed().unwrap();
        let g = RadialGrid::new(9.0, 200, 32).unwrap();

        let mut one = DVector::zeros(b.dim());
        one[b.index_of(&[1, 0, 0]).unwrap()] = C64::new(1.0, 0.0);
        let z = C64::new(0.8, -0.3);
        let (_, c) = partial_inner(&b, &p, z, &one).unwrap();
        let t = z.norm_sqr();
        assert!((c - t * (-t).exp()).abs() < 1e-14);
        let total = g.integrate(|z| partial_inner(&b, &p, z, &one).unwrap().1);
        assert!((total - 1.0).abs() < 1e-10);

        let mut k = DVector::zeros(b.dim());
        k[b.index_of(&[0, 1, 0]).unwrap()] = C64::new(1.0, 0.0);
        let (psi, _) = partial_inner(&b, &p, z, &k).unwrap();
        let j = p.index_of(&[1, 0]).unwrap();
        assert!((psi[j].re - (-0.5 * t).exp()).abs() < 1e-15);
        assert!(psi.iter().enumerate().all(|(i, v)| i == j || v.norm() == 0.0));

        let mut vac = DVector::zeros(b.dim());
        vac[0] = C64::new(1.0, 0.0);
        let (_, c0) = partial_inner(&b, &p, C64::new(0.0, 0.0), &vac).unwrap();
        assert_eq!(c0, 1.0);
    }
}
