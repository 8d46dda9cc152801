//! Gas Hamiltonians on truncated Fock spaces and their c-number substitutes.
//!
//! `H = sum_k k^2 n_k + (2V)^-1 sum_{k,p,q} nu(p) a^dag_{k+p} a^dag_{q-p} a_k a_q`
//! with momenta restricted to the mode set: a term whose output modes leave
//! the set is dropped, and a term whose output state leaves the truncation is
//! dropped (compression onto the basis). Units are `hbar = 2m = 1`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coherent::{Monomial, SymbolKind};
use crate::error::{invalid, Error, Result};
use crate::fock::{FockBasis, MatrixOperator, ModeSet, ZeroMode, C64};
use crate::linalg::{self, group_by_label};

/// Fourier coefficients `nu(p)` indexed by momentum-transfer label
/// (`p = 2 pi label / L`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    /// `nu(p) = g` for every transfer.
    Contact { g: f64 },
    /// Explicit entries; missing labels are zero.
    Table { values: Vec<(i32, f64)> },
}

impl Interaction {
    pub fn none() -> Self {
        Interaction::Contact { g: 0.0 }
    }

    pub fn value(&self, p: i32) -> f64 {
        match self {
            Interaction::Contact { g } => *g,
            Interaction::Table { values } => values
                .iter()
                .find(|(q, _)| *q == p)
                .map(|e| e.1)
                .unwrap_or(0.0),
        }
    }

    /// Smallest valid bound `phi`.
    pub fn sup(&self) -> f64 {
        match self {
            Interaction::Contact { g } => g.abs(),
            Interaction::Table { values } => values.iter().map(|e| e.1.abs()).fold(0.0, f64::max),
        }
    }

    pub fn validate(&self, phi: f64) -> Result<()> {
        let entries: Vec<(i32, f64)> = match self {
            Interaction::Contact { g } => vec![(0, *g)],
            Interaction::Table { values } => values.clone(),
        };
        let mut seen = BTreeMap::new();
        for &(p, v) in &entries {
            if !v.is_finite() {
                return Err(invalid("nu", format!("nu({p}) is not finite")));
            }
            if seen.insert(p, v).is_some() {
                return Err(invalid("nu", format!("duplicate entry for label {p}")));
            }
            if v.abs() > phi {
                return Err(Error::InteractionBound { p, value: v, phi });
            }
        }
        for &(p, v) in &entries {
            let back = self.value(-p);
            if back != v {
                return Err(Error::NonSymmetricInteraction {
                    p,
                    forward: v,
                    backward: back,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasParams {
    pub modes: ModeSet,
    pub interaction: Interaction,
    /// Declared bound `|nu(p)| <= phi`.
    pub phi: f64,
    pub volume: f64,
    pub mu: f64,
    /// Symmetry-breaking field; real by a gauge rotation of `a0`.
    pub lambda: f64,
    pub beta: f64,
}

impl GasParams {
    pub fn new(
        modes: ModeSet,
        interaction: Interaction,
        phi: f64,
        mu: f64,
        lambda: f64,
        beta: f64,
    ) -> Result<Self> {
        let p = Self {
            volume: modes.length(),
            modes,
            interaction,
            phi,
            mu,
            lambda,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Accepts a complex field only when its imaginary part vanishes.
    pub fn with_complex_lambda(mut self, lambda: C64) -> Result<Self> {
        if lambda.im != 0.0 {
            return Err(invalid(
                "lambda",
                format!(
                    "imaginary part {} must be zero; rotate a0 to make the field real",
                    lambda.im
                ),
            ));
        }
        self.lambda = lambda.re;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume.is_finite() && self.volume > 0.0) {
            return Err(invalid("volume", format!("must be positive, got {}", self.volume)));
        }
        if (self.modes.length() - self.volume).abs() > 1e-12 * self.volume {
            return Err(invalid("volume", "mode-set length must equal the volume"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return Err(invalid("phi", "must be finite and nonnegative"));
        }
        if !self.mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        if !self.lambda.is_finite() {
            return Err(invalid("lambda", "must be finite"));
        }
        self.interaction.validate(self.phi)
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }

    /// Same mode labels and couplings in a different volume.
    pub fn with_volume(&self, volume: f64) -> Result<Self> {
        let mut p = self.clone();
        p.modes = self.modes.with_length(volume)?;
        p.volume = volume;
        p.validate()?;
        Ok(p)
    }

    pub fn nu(&self, p: i32) -> f64 {
        self.interaction.value(p)
    }

    pub(crate) fn field(&self) -> f64 {
        self.volume.sqrt() * self.lambda
    }
}

/// Visit every pair-interaction term acting on `occ`. Zero-mode operators on
/// a substituted basis are counted as `(creators, annihilators)` instead of
/// being applied.
fn for_each_pair_term(
    params: &GasParams,
    basis: &FockBasis,
    occ: &[u16],
    mut emit: impl FnMut(f64, (u8, u8), &[u16]),
) {
    let modes = basis.modes();
    let symbolic = basis.zero_mode() == ZeroMode::Substituted;
    let offset = usize::from(symbolic);
    let m = modes.len();
    let prefactor = 1.0 / (2.0 * params.volume);
    let mut work = occ.to_vec();
    for k in 0..m {
        for q in 0..m {
            for a in 0..m {
                let p = modes.label(a) - modes.label(k);
                let Some(b) = modes.position_of(modes.label(q) - p) else {
                    continue;
                };
                let nu = params.nu(p);
                if nu == 0.0 {
                    continue;
                }
                work.copy_from_slice(occ);
                let mut amp = 1.0;
                let mut powers = (0u8, 0u8);
                let mut alive = true;
                for mode in [q, k] {
                    if symbolic && mode == 0 {
                        powers.1 += 1;
                    } else {
                        let s = mode - offset;
                        if work[s] == 0 {
                            alive = false;
                            break;
                        }
                        amp *= (work[s] as f64).sqrt();
                        work[s] -= 1;
                    }
                }
                if !alive {
                    continue;
                }
                for mode in [b, a] {
                    if symbolic && mode == 0 {
                        powers.0 += 1;
                    } else {
                        let s = mode - offset;
                        amp *= (work[s] as f64 + 1.0).sqrt();
                        work[s] += 1;
                    }
                }
                emit(prefactor * nu * amp, powers, &work);
            }
        }
    }
}

fn require(basis: &FockBasis, kind: ZeroMode) -> Result<()> {
    if basis.zero_mode() != kind {
        return Err(invalid(
            "basis",
            match kind {
                ZeroMode::Explicit => "expected a basis containing the zero mode",
                ZeroMode::Substituted => "expected a basis without the zero mode",
            },
        ));
    }
    Ok(())
}

fn kinetic(basis: &FockBasis, occ: &[u16]) -> f64 {
    occ.iter()
        .zip(basis.slot_modes())
        .map(|(&n, &m)| basis.modes().kinetic(m) * n as f64)
        .sum()
}

fn gas_triplets(params: &GasParams, basis: &FockBasis) -> Vec<(usize, usize, C64)> {
    let mut entries = Vec::new();
    for j in 0..basis.dim() {
        let occ = basis.state(j);
        entries.push((j, j, C64::new(kinetic(basis, occ), 0.0)));
        for_each_pair_term(params, basis, occ, |coef, _, target| {
            if let Some(i) = basis.index_of(target) {
                entries.push((i, j, C64::new(coef, 0.0)));
            }
        });
    }
    entries
}

fn finish(op: MatrixOperator, what: &str) -> Result<MatrixOperator> {
    op.checked_hermitian()
        .ok_or_else(|| invalid("nu", format!("{what} is not hermitian")))
}

/// Kinetic plus pair-interaction energy on an explicit basis.
pub fn build_h(params: &GasParams, basis: &FockBasis) -> Result<MatrixOperator> {
    params.validate()?;
    require(basis, ZeroMode::Explicit)?;
    finish(
        MatrixOperator::from_triplets(basis.dim(), gas_triplets(params, basis)),
        "H",
    )
}

/// `H - mu N + sqrt(V) lambda (a0 + a0^dag)`.
pub fn build_h_mu_lambda(params: &GasParams, basis: &FockBasis) -> Result<MatrixOperator> {
    params.validate()?;
    require(basis, ZeroMode::Explicit)?;
    let mut entries = gas_triplets(params, basis);
    let field = params.field();
    let mut lower = vec![0u16; basis.slots()];
    for j in 0..basis.dim() {
        let occ = basis.state(j);
        entries.push((j, j, C64::new(-params.mu * basis.total_number(j) as f64, 0.0)));
        if field != 0.0 && occ[0] > 0 {
            lower.copy_from_slice(occ);
            lower[0] -= 1;
            let i = basis.index_of(&lower).expect("downward closed");
            let v = C64::new(field * (occ[0] as f64).sqrt(), 0.0);
            entries.push((i, j, v));
            entries.push((j, i, v));
        }
    }
    finish(MatrixOperator::from_triplets(basis.dim(), entries), "H_mu_lambda")
}

/// Conserved-label blocks for the full Hamiltonian: total momentum, and the
/// particle number when the field vanishes.
pub fn full_blocks(params: &GasParams, basis: &FockBasis) -> Vec<Vec<usize>> {
    let conserve_n = params.lambda == 0.0;
    group_by_label((0..basis.dim()).map(|i| {
        (
            basis.momentum_label(i),
            if conserve_n { basis.total_number(i) as i64 } else { 0 },
        )
    }))
}

/// Momentum blocks of the primed space; substituted Hamiltonians conserve the
/// momentum of the nonzero modes.
pub fn primed_blocks(basis: &FockBasis) -> Vec<Vec<usize>> {
    group_by_label((0..basis.dim()).map(|i| basis.momentum_label(i)))
}

#[derive(Clone, Debug)]
pub struct SubstitutedHamiltonian {
    pub z: C64,
    pub kind: SymbolKind,
    pub matrix: MatrixOperator,
}

/// `H_{mu,lambda}` with zero-mode monomials replaced by symbols, stored as
/// z-independent coefficient operators per monomial:
/// `H_sub(z) = sum_m symbol(m, z) * part_m` on the primed space.
#[derive(Clone, Debug)]
pub struct SymbolExpansion {
    basis: FockBasis,
    parts: Vec<(Monomial, MatrixOperator)>,
    blocks: Vec<Vec<usize>>,
    block_parts: Vec<Vec<(Monomial, DMatrix<C64>)>>,
    beta: f64,
}

impl SymbolExpansion {
    pub fn new(params: &GasParams, basis: &FockBasis) -> Result<Self> {
        params.validate()?;
        require(basis, ZeroMode::Substituted)?;
        let dim = basis.dim();
        let mut entries: BTreeMap<Monomial, Vec<(usize, usize, C64)>> = BTreeMap::new();
        let field = params.field();
        for j in 0..dim {
            let occ = basis.state(j);
            let n_prime: u32 = occ.iter().map(|&n| n as u32).sum();
            let e0 = kinetic(basis, occ) - params.mu * n_prime as f64;
            entries
                .entry(Monomial::Identity)
                .or_default()
                .push((j, j, C64::new(e0, 0.0)));
            entries
                .entry(Monomial::AdagA)
                .or_default()
                .push((j, j, C64::new(-params.mu, 0.0)));
            if field != 0.0 {
                for m in [Monomial::A, Monomial::Adag] {
                    entries.entry(m).or_default().push((j, j, C64::new(field, 0.0)));
                }
            }
            let mut failure = None;
            for_each_pair_term(params, basis, occ, |coef, (c, d), target| {
                if let Some(i) = basis.index_of(target) {
                    match Monomial::from_powers(c, d) {
                        Ok(m) => entries.entry(m).or_default().push((i, j, C64::new(coef, 0.0))),
                        Err(e) => failure = Some(e),
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
        }
        let parts: Vec<(Monomial, MatrixOperator)> = entries
            .into_iter()
            .map(|(m, t)| (m, MatrixOperator::from_triplets(dim, t)))
            .collect();
        let blocks = primed_blocks(basis);
        let block_parts = blocks
            .iter()
            .map(|idx| parts.iter().map(|(m, op)| (*m, op.submatrix(idx))).collect())
            .collect();
        Ok(Self {
            basis: basis.clone(),
            parts,
            blocks,
            block_parts,
            beta: params.beta,
        })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn parts(&self) -> &[(Monomial, MatrixOperator)] {
        &self.parts
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn hamiltonian(&self, z: C64, kind: SymbolKind) -> MatrixOperator {
        let dim = self.basis.dim();
        let entries = self.parts.iter().flat_map(|(m, op)| {
            let s = kind.eval(*m, z);
            op.triplets().into_iter().map(move |(i, j, v)| (i, j, v * s))
        });
        MatrixOperator::from_triplets(dim, entries)
    }

    fn block_matrix(&self, b: usize, z: C64, kind: SymbolKind) -> DMatrix<C64> {
        let n = self.blocks[b].len();
        let mut h = DMatrix::<C64>::zeros(n, n);
        for (m, part) in &self.block_parts[b] {
            h += part * kind.eval(*m, z);
        }
        // symmetrize away rounding in the complex symbol products
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        h
    }

    /// Eigenvalues of `H_sub(z)`, all blocks concatenated.
    pub fn eigenvalues(&self, z: C64, kind: SymbolKind) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.basis.dim());
        for b in 0..self.blocks.len() {
            let (v, _) = linalg::eigh(self.block_matrix(b, z, kind), false)?;
            out.extend(v);
        }
        Ok(out)
    }

    /// `ln Tr exp(-beta H_sub(z))`.
    pub fn ln_trace(&self, z: C64, kind: SymbolKind) -> Result<f64> {
        let beta = self.beta;
        Ok(linalg::ln_sum_exp(
            self.eigenvalues(z, kind)?.into_iter().map(|e| -beta * e),
        ))
    }

    /// Expectation of the primed number operator in `exp(-beta H_sub(z))`,
    /// weighted by the trace: returns `(ln Tr, <N'>)`.
    pub fn ln_trace_and_number(&self, z: C64, kind: SymbolKind) -> Result<(f64, f64)> {
        let beta = self.beta;
        let mut logs = Vec::new();
        let mut numbers = Vec::new();
        for (b, idx) in self.blocks.iter().enumerate() {
            let (vals, vecs) = linalg::eigh(self.block_matrix(b, z, kind), true)?;
            let vecs = vecs.expect("requested vectors");
            for (col, &e) in vals.iter().enumerate() {
                let n: f64 = idx
                    .iter()
                    .enumerate()
                    .map(|(r, &i)| vecs[(r, col)].norm_sqr() * self.basis.total_number(i) as f64)
                    .sum();
                logs.push(-beta * e);
                numbers.push(n);
            }
        }
        let ln = linalg::ln_sum_exp(logs.iter().copied());
        let mean = logs
            .iter()
            .zip(&numbers)
            .map(|(l, n)| (l - ln).exp() * n)
            .sum();
        Ok((ln, mean))
    }
}

/// `H'(z)` (lower symbols) or `H''(z)` (upper symbols) on the primed basis.
pub fn build_substituted(
    params: &GasParams,
    basis_prime: &FockBasis,
    z: C64,
    kind: SymbolKind,
) -> Result<SubstitutedHamiltonian> {
    let expansion = SymbolExpansion::new(params, basis_prime)?;
    let matrix = finish(expansion.hamiltonian(z, kind), "substituted Hamiltonian")?;
    Ok(SubstitutedHamiltonian { z, kind, matrix })
}

/// `delta_mu(z) = mu + (2V)^-1 [(-4|z|^2 + 2) nu(0)
///   - sum_{k != 0} n_k (2 nu(0) + nu(k) + nu(-k))]`, diagonal on the primed basis.
pub fn delta_correction(params: &GasParams, basis_prime: &FockBasis, z: C64) -> Result<MatrixOperator> {
    params.validate()?;
    require(basis_prime, ZeroMode::Substituted)?;
    let modes = basis_prime.modes();
    let nu0 = params.nu(0);
    let t = z.norm_sqr();
    let diag: Vec<f64> = (0..basis_prime.dim())
        .map(|i| {
            let occ = basis_prime.state(i);
            let sum: f64 = occ
                .iter()
                .zip(basis_prime.slot_modes())
                .map(|(&n, &m)| {
                    let k = modes.label(m);
                    n as f64 * (2.0 * nu0 + params.nu(k) + params.nu(-k))
                })
                .sum();
            params.mu + ((-4.0 * t + 2.0) * nu0 - sum) / (2.0 * params.volume)
        })
        .collect();
    Ok(MatrixOperator::diagonal_from(&diag))
}

/// Smallest eigenvalue of `B - |delta_mu(z)|` with
/// `B = 2 phi (N'(z) + 1/2) / V + |mu|`; nonnegative when the bound holds.
pub fn delta_bound_margin(params: &GasParams, basis_prime: &FockBasis, z: C64) -> Result<f64> {
    let delta = delta_correction(params, basis_prime, z)?.diagonal();
    let number = number_lower_symbol(basis_prime, z)?.diagonal();
    Ok(delta
        .iter()
        .zip(&number)
        .map(|(d, n)| 2.0 * params.phi * (n.re + 0.5) / params.volume + params.mu.abs() - d.re.abs())
        .fold(f64::INFINITY, f64::min))
}

/// Lower symbol of the total number operator, `N'(z) = |z|^2 + sum_{k != 0} n_k`.
pub fn number_lower_symbol(basis_prime: &FockBasis, z: C64) -> Result<MatrixOperator> {
    require(basis_prime, ZeroMode::Substituted)?;
    let t = z.norm_sqr();
    let diag: Vec<f64> = (0..basis_prime.dim())
        .map(|i| t + basis_prime.total_number(i) as f64)
        .collect();
    Ok(MatrixOperator::diagonal_from(&diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::coherent_amplitudes;
    use crate::fock::{annihilation, number_operator, Truncation};
    use nalgebra::DVector;

    fn params(modes: ModeSet, g: f64, mu: f64, lambda: f64) -> GasParams {
        GasParams::new(modes, Interaction::Contact { g }, g.abs(), mu, lambda, 1.0).unwrap()
    }

    #[test]
    fn free_single_mode_is_zero() {
        let p = params(ModeSet::zero_only(2.0).unwrap(), 0.0, 0.0, 0.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(4)).unwrap();
        assert_eq!(build_h(&p, &b).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn free_gas_is_diagonal_kinetic() {
        let p = params(ModeSet::symmetric(1, 3.0).unwrap(), 0.0, 0.0, 0.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(2)).unwrap();
        let h = build_h(&p, &b).unwrap();
        let k2 = (2.0 * std::f64::consts::PI / 3.0).powi(2);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let s = b.state(i);
                let e = if i == j { k2 * (s[1] + s[2]) as f64 } else { 0.0 };
                assert!((h.get(i, j).re - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contact_single_mode_element() {
        let g = 0.8;
        let v = 2.5;
        let p = params(ModeSet::zero_only(v).unwrap(), g, 0.0, 0.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(2)).unwrap();
        let h = build_h(&p, &b).unwrap();
        // (g/2V) a^dag a^dag a a on |2>: 2 * 1 * g / (2V)
        assert!((h.get(2, 2).re - g / v).abs() < 1e-15);
        assert_eq!(h.get(1, 1).re, 0.0);
    }

    #[test]
    fn gauge_symmetry_and_its_breaking() {
        let p = params(ModeSet::symmetric(1, 2.0).unwrap(), 0.6, -0.4, 0.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(3)).unwrap();
        let n = number_operator(&b);
        let h = build_h_mu_lambda(&p, &b).unwrap();
        assert!(h.commutator(&n).max_abs() < 1e-10);
        let pl = p.with_lambda(0.3);
        let hl = build_h_mu_lambda(&pl, &b).unwrap();
        assert!(hl.commutator(&n).max_abs() >= 2f64.sqrt() * 0.3 * (1.0 - 1e-12));
    }

    #[test]
    fn rejects_bad_parameters() {
        let modes = ModeSet::symmetric(1, 2.0).unwrap();
        let bad = Interaction::Table {
            values: vec![(0, 1.0), (1, 0.5), (-1, 0.2)],
        };
        let e = GasParams::new(modes.clone(), bad, 2.0, 0.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(e, Error::NonSymmetricInteraction { .. }));
        let big = Interaction::Contact { g: 2.0 };
        assert!(GasParams::new(modes.clone(), big, 1.0, 0.0, 0.0, 1.0).is_err());
        let p = params(modes, 0.5, 0.0, 0.0);
        assert!(p.clone().with_complex_lambda(C64::new(0.1, 0.2)).is_err());
        assert_eq!(p.with_complex_lambda(C64::new(0.1, 0.0)).unwrap().lambda, 0.1);
    }

    #[test]
    fn scalar_substitution() {
        let (mu, lambda, v) = (-0.7, 0.3, 2.0);
        let p = params(ModeSet::zero_only(v).unwrap(), 0.0, mu, lambda);
        let b = FockBasis::build_primed(&p.modes, Truncation::uniform(1)).unwrap();
        assert_eq!(b.dim(), 1);
        let z = C64::new(0.4, -1.1);
        let t = z.norm_sqr();
        let lower = build_substituted(&p, &b, z, SymbolKind::Lower).unwrap();
        let upper = build_substituted(&p, &b, z, SymbolKind::Upper).unwrap();
        let field = v.sqrt() * lambda * 2.0 * z.re;
        assert!((lower.matrix.get(0, 0).re - (-mu * t + field)).abs() < 1e-14);
        assert!((upper.matrix.get(0, 0).re - (-mu * (t - 1.0) + field)).abs() < 1e-14);
        let d = upper.matrix.get(0, 0).re - lower.matrix.get(0, 0).re;
        assert!((d - mu).abs() < 1e-14);
    }

    #[test]
    fn contact_delta_single_mode() {
        let (g, v, mu) = (0.9, 3.0, 0.2);
        let p = params(ModeSet::zero_only(v).unwrap(), g, mu, 0.0);
        let b = FockBasis::build_primed(&p.modes, Truncation::uniform(1)).unwrap();
        let z = C64::new(1.3, 0.2);
        let d = delta_correction(&p, &b, z).unwrap();
        let expected = mu + g / (2.0 * v) * (-4.0 * z.norm_sqr() + 2.0);
        assert!((d.get(0, 0).re - expected).abs() < 1e-14);
    }

    #[test]
    fn delta_hand_expansion_one_extra_mode() {
        // modes {0, 1}, contact g, z = 0: delta = mu + g/V - (2g/V) n_1
        let (g, v, mu) = (0.5, 2.0, -0.3);
        let p = params(ModeSet::new(vec![0, 1], v).unwrap(), g, mu, 0.0);
        let b = FockBasis::build_primed(&p.modes, Truncation::uniform(2)).unwrap();
        let d = delta_correction(&p, &b, C64::new(0.0, 0.0)).unwrap();
        for i in 0..3 {
            let expected = mu + g / v - 2.0 * g / v * i as f64;
            assert!((d.get(i, i).re - expected).abs() < 1e-14);
        }
        let lower = build_substituted(&p, &b, C64::new(0.0, 0.0), SymbolKind::Lower).unwrap();
        let upper = build_substituted(&p, &b, C64::new(0.0, 0.0), SymbolKind::Upper).unwrap();
        assert!(upper.matrix.sub(&lower.matrix).sub(&d).max_abs() < 1e-12);
    }

    #[test]
    fn number_lower_symbol_on_product_states() {
        let p = params(ModeSet::symmetric(1, 2.0).unwrap(), 0.3, 0.0, 0.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(2).with_zero_mode(50)).unwrap();
        let bp = b.primed().unwrap();
        let n = number_operator(&b);
        let z = C64::new(0.9, 0.4);
        let amps = coherent_amplitudes(z, 50);
        let sym = number_lower_symbol(&bp, z).unwrap();
        for j in 0..bp.dim() {
            let mut v = DVector::zeros(b.dim());
            for (n0, a) in amps.iter().enumerate() {
                let mut occ = vec![n0 as u16];
                occ.extend_from_slice(bp.state(j));
                v[b.index_of(&occ).unwrap()] = *a;
            }
            let e = n.expectation(&v, &v).re;
            assert!((e - sym.get(j, j).re).abs() < 1e-10);
        }
    }

    #[test]
    fn lower_symbol_is_coherent_expectation() {
        // <z (x) phi| H |z (x) phi> = <phi| H'(z) |phi> for basis states phi
        let p = GasParams::new(
            ModeSet::symmetric(1, 2.0).unwrap(),
            Interaction::Table {
                values: vec![(0, 0.7), (1, 0.2), (-1, 0.2), (2, -0.1), (-2, -0.1)],
            },
            0.7,
            -0.5,
            0.4,
            1.0,
        )
        .unwrap();
        let b = FockBasis::build(&p.modes, Truncation::uniform(3).with_zero_mode(60)).unwrap();
        let bp = b.primed().unwrap();
        let h = build_h_mu_lambda(&p, &b).unwrap();
        let z = C64::new(0.6, -0.5);
        let hs = build_substituted(&p, &bp, z, SymbolKind::Lower).unwrap();
        let amps = coherent_amplitudes(z, 60);
        let embed = |phi: &DVector<C64>| {
            let mut v = DVector::zeros(b.dim());
            for j in 0..bp.dim() {
                for (n0, a) in amps.iter().enumerate() {
                    let mut occ = vec![n0 as u16];
                    occ.extend_from_slice(bp.state(j));
                    v[b.index_of(&occ).unwrap()] = *a * phi[j];
                }
            }
            v
        };
        for (j1, j2) in [(0, 0), (1, 1), (3, 3), (1, 4), (5, 2)] {
            let mut u = DVector::zeros(bp.dim());
            u[j1] = C64::new(1.0, 0.0);
            let mut w = DVector::zeros(bp.dim());
            w[j2] = C64::new(1.0, 0.0);
            let full = h.expectation(&embed(&u), &embed(&w));
            let sub = hs.matrix.get(j1, j2);
            assert!((full - sub).norm() < 1e-9, "({j1},{j2}): {full} vs {sub}");
        }
    }

    #[test]
    fn lambda_term_uses_annihilator() {
        let p = params(ModeSet::zero_only(4.0).unwrap(), 0.0, 0.0, 0.25);
        let b = FockBasis::build(&p.modes, Truncation::uniform(5)).unwrap();
        let h = build_h_mu_lambda(&p, &b).unwrap();
        let a = annihilation(&b, 0).unwrap();
        let expected = a.add(&a.adjoint()).scale(C64::new(2.0 * 0.25, 0.0));
        assert!(h.sub(&expected).max_abs() < 1e-14);
    }
}
