//! Truncated multi-mode bosonic Fock spaces and ladder operators.
//!
//! A [`FockBasis`] enumerates occupation vectors under a per-mode cap, an
//! optional separate cap for the zero mode, and an optional cap on the total
//! particle number. Every admissible set is downward closed, so normal-ordered
//! products of truncated ladder matrices coincide with the compression of the
//! untruncated operator onto the basis.
//!
//! Enumeration order is colexicographic: the first covered mode varies
//! fastest. With two modes and cap 1 the order is `00, 10, 01, 11`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Dimension above which operators are stored as sorted triplets.
pub const DENSE_LIMIT: usize = 512;
/// Default hard cap on the dimension of any basis.
pub const DEFAULT_DIM_CAP: usize = 20_000;

/// Ordered set of one-dimensional momentum modes `k = 2 pi n / L`.
///
/// Mode 0 (`n = 0`) is always present at position 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    indices: Vec<i32>,
    length: f64,
}

impl ModeSet {
    pub fn new(indices: Vec<i32>, length: f64) -> Result<Self> {
        if indices.first() != Some(&0) {
            return Err(invalid("modes", "mode 0 must be present at position 0"));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(invalid("modes", "mode labels must be unique"));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("length", format!("must be positive, got {length}")));
        }
        Ok(Self { indices, length })
    }

    /// `{0, +1, -1, ..., +n, -n}`.
    pub fn symmetric(n_pairs: u32, length: f64) -> Result<Self> {
        let mut indices = vec![0];
        for n in 1..=n_pairs as i32 {
            indices.push(n);
            indices.push(-n);
        }
        Self::new(indices, length)
    }

    pub fn zero_only(length: f64) -> Result<Self> {
        Self::new(vec![0], length)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[i32] {
        &self.indices
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn label(&self, mode: usize) -> i32 {
        self.indices[mode]
    }

    pub fn momentum(&self, mode: usize) -> f64 {
        2.0 * PI * self.indices[mode] as f64 / self.length
    }

    /// `k^2` in units with `hbar = 2m = 1`; exactly zero for mode 0.
    pub fn kinetic(&self, mode: usize) -> f64 {
        if self.indices[mode] == 0 {
            0.0
        } else {
            let k = self.momentum(mode);
            k * k
        }
    }

    pub fn position_of(&self, label: i32) -> Option<usize> {
        self.indices.iter().position(|&n| n == label)
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(self.indices.clone(), length)
    }
}

/// Whether the zero mode is an explicit tensor factor of the basis or has
/// been replaced by a c-number (the space usually written with a prime).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroMode {
    Explicit,
    Substituted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    /// Occupation cap for every nonzero mode (and for mode 0 unless overridden).
    pub n_max: u32,
    /// Separate occupation cap for mode 0.
    #[serde(default)]
    pub zero_mode_max: Option<u32>,
    #[serde(default)]
    pub total_max: Option<u32>,
}

impl Truncation {
    pub fn uniform(n_max: u32) -> Self {
        Self {
            n_max,
            zero_mode_max: None,
            total_max: None,
        }
    }

    pub fn with_zero_mode(mut self, cap: u32) -> Self {
        self.zero_mode_max = Some(cap);
        self
    }

    pub fn with_total(mut self, cap: u32) -> Self {
        self.total_max = Some(cap);
        self
    }

    pub fn zero_cap(&self) -> u32 {
        self.zero_mode_max.unwrap_or(self.n_max)
    }
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    modes: ModeSet,
    zero_mode: ZeroMode,
    truncation: Truncation,
    /// Mode index (into `modes`) of each occupation slot.
    slot_modes: Vec<usize>,
    caps: Vec<u32>,
    occupations: Vec<u16>,
    lookup: HashMap<Vec<u16>, usize>,
}

/// Enumerate occupation vectors with every entry `<= caps[i]` and (optionally)
/// total `<= total`, first slot fastest.
fn enumerate(caps: &[u32], total: Option<u32>) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    let mut cur = vec![0u16; caps.len()];
    loop {
        let sum: u32 = cur.iter().map(|&n| n as u32).sum();
        if total.map_or(true, |t| sum <= t) {
            out.push(cur.clone());
        }
        let mut slot = 0;
        loop {
            if slot == caps.len() {
                return out;
            }
            if (cur[slot] as u32) < caps[slot] {
                cur[slot] += 1;
                break;
            }
            cur[slot] = 0;
            slot += 1;
        }
    }
}

/// Number of admissible vectors, without enumerating them.
fn count_states(caps: &[u32], total: Option<u32>) -> u128 {
    match total {
        None => caps.iter().map(|&c| c as u128 + 1).product(),
        Some(t) => {
            let t = t as usize;
            let mut ways = vec![0u128; t + 1];
            ways[0] = 1;
            for &cap in caps {
                let mut next = vec![0u128; t + 1];
                for (s, &w) in ways.iter().enumerate() {
                    if w == 0 {
                        continue;
                    }
                    for n in 0..=cap as usize {
                        if s + n > t {
                            break;
                        }
                        next[s + n] += w;
                    }
                }
                ways = next;
            }
            ways.iter().sum()
        }
    }
}

impl FockBasis {
    /// Basis over all modes including the explicit zero mode.
    pub fn build(modes: &ModeSet, truncation: Truncation) -> Result<Self> {
        Self::build_with_cap(modes, truncation, ZeroMode::Explicit, DEFAULT_DIM_CAP)
    }

    /// Basis over the nonzero modes only.
    pub fn build_primed(modes: &ModeSet, truncation: Truncation) -> Result<Self> {
        Self::build_with_cap(modes, truncation, ZeroMode::Substituted, DEFAULT_DIM_CAP)
    }

    pub fn build_with_cap(
        modes: &ModeSet,
        truncation: Truncation,
        zero_mode: ZeroMode,
        dim_cap: usize,
    ) -> Result<Self> {
        if truncation.n_max < 1 {
            return Err(invalid("n_max", "occupation cap must be at least 1"));
        }
        if truncation.zero_cap() < 1 {
            return Err(invalid("zero_mode_max", "occupation cap must be at least 1"));
        }
        let first = match zero_mode {
            ZeroMode::Explicit => 0,
            ZeroMode::Substituted => 1,
        };
        let slot_modes: Vec<usize> = (first..modes.len()).collect();
        let caps: Vec<u32> = slot_modes
            .iter()
            .map(|&m| {
                if m == 0 {
                    truncation.zero_cap()
                } else {
                    truncation.n_max
                }
            })
            .collect();
        let count = count_states(&caps, truncation.total_max);
        if count > dim_cap as u128 {
            return Err(Error::TruncationTooLarge {
                dim: usize::try_from(count).unwrap_or(usize::MAX),
                cap: dim_cap,
            });
        }
        let states = enumerate(&caps, truncation.total_max);
        let mut lookup = HashMap::with_capacity(states.len());
        let mut occupations = Vec::with_capacity(states.len() * caps.len());
        for (i, s) in states.into_iter().enumerate() {
            occupations.extend_from_slice(&s);
            lookup.insert(s, i);
        }
        Ok(Self {
            modes: modes.clone(),
            zero_mode,
            truncation,
            slot_modes,
            caps,
            occupations,
            lookup,
        })
    }

    /// The basis of the space without the zero mode, with the same caps.
    pub fn primed(&self) -> Result<Self> {
        Self::build_primed(&self.modes, self.truncation)
    }

    pub fn dim(&self) -> usize {
        self.lookup.len()
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn zero_mode(&self) -> ZeroMode {
        self.zero_mode
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn slots(&self) -> usize {
        self.slot_modes.len()
    }

    pub fn slot_modes(&self) -> &[usize] {
        &self.slot_modes
    }

    pub fn slot_of_mode(&self, mode: usize) -> Option<usize> {
        self.slot_modes.iter().position(|&m| m == mode)
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }

    pub fn zero_cap(&self) -> Option<u32> {
        match self.zero_mode {
            ZeroMode::Explicit => Some(self.caps[0]),
            ZeroMode::Substituted => None,
        }
    }

    pub fn state(&self, i: usize) -> &[u16] {
        let w = self.slots();
        &self.occupations[i * w..(i + 1) * w]
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.lookup.get(occupation).copied()
    }

    pub fn total_number(&self, i: usize) -> u32 {
        self.state(i).iter().map(|&n| n as u32).sum()
    }

    /// Total momentum label `sum_k n_k * label(k)`.
    pub fn momentum_label(&self, i: usize) -> i64 {
        self.state(i)
            .iter()
            .zip(&self.slot_modes)
            .map(|(&n, &m)| n as i64 * self.modes.label(m) as i64)
            .sum()
    }

    /// Occupation of mode 0 and the index of the remaining occupations in
    /// `primed`. Only meaningful for an explicit basis.
    pub fn split(&self, i: usize, primed: &FockBasis) -> Option<(usize, usize)> {
        if self.zero_mode != ZeroMode::Explicit {
            return None;
        }
        let s = self.state(i);
        primed.index_of(&s[1..]).map(|j| (s[0] as usize, j))
    }
}

/// Entry storage; dense below [`DENSE_LIMIT`], sorted triplets above.
#[derive(Clone, Debug)]
enum Storage {
    Dense(DMatrix<C64>),
    Sparse(Vec<(usize, usize, C64)>),
}

/// Complex matrix on a basis of dimension `dim`.
#[derive(Clone, Debug)]
pub struct MatrixOperator {
    dim: usize,
    storage: Storage,
    hermitian: bool,
}

impl MatrixOperator {
    /// Accumulates duplicate entries; exact zeros are dropped.
    pub fn from_triplets(dim: usize, entries: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut map: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (i, j, v) in entries {
            assert!(i < dim && j < dim, "entry ({i}, {j}) outside dimension {dim}");
            *map.entry((i, j)).or_insert(C64::new(0.0, 0.0)) += v;
        }
        Self::from_map(dim, map)
    }

    fn from_map(dim: usize, map: BTreeMap<(usize, usize), C64>) -> Self {
        let storage = if dim < DENSE_LIMIT {
            let mut m = DMatrix::zeros(dim, dim);
            for ((i, j), v) in map {
                m[(i, j)] = v;
            }
            Storage::Dense(m)
        } else {
            Storage::Sparse(
                map.into_iter()
                    .filter(|(_, v)| *v != C64::new(0.0, 0.0))
                    .map(|((i, j), v)| (i, j, v))
                    .collect(),
            )
        };
        Self {
            dim,
            storage,
            hermitian: false,
        }
    }

    pub fn from_dense(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let dim = m.nrows();
        let entries: Vec<_> = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = m[(i, j)];
                (v != C64::new(0.0, 0.0)).then_some((i, j, v))
            })
            .collect();
        Self::from_triplets(dim, entries)
    }

    pub fn diagonal_from(values: &[f64]) -> Self {
        Self::from_triplets(
            values.len(),
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i, i, C64::new(v, 0.0))),
        )
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal_from(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, std::iter::empty())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Set the hermitian flag after checking `max |A - A^dag| < 1e-12`.
    pub fn checked_hermitian(mut self) -> Option<Self> {
        if self.max_antihermitian() < 1e-12 {
            self.hermitian = true;
            Some(self)
        } else {
            None
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        match &self.storage {
            Storage::Dense(m) => {
                let mut out = Vec::new();
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let v = m[(i, j)];
                        if v != C64::new(0.0, 0.0) {
                            out.push((i, j, v));
                        }
                    }
                }
                out
            }
            Storage::Sparse(t) => t.clone(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse(t) => t
                .binary_search_by(|&(a, b, _)| (a, b).cmp(&(i, j)))
                .map(|k| t[k].2)
                .unwrap_or_default(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(t) => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for &(i, j, v) in t {
                    m[(i, j)] = v;
                }
                m
            }
        }
    }

    /// Dense principal submatrix on `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> DMatrix<C64> {
        let n = indices.len();
        match &self.storage {
            Storage::Dense(m) => DMatrix::from_fn(n, n, |a, b| m[(indices[a], indices[b])]),
            Storage::Sparse(t) => {
                let mut position = vec![usize::MAX; self.dim];
                for (a, &i) in indices.iter().enumerate() {
                    position[i] = a;
                }
                let mut m = DMatrix::zeros(n, n);
                for &(i, j, v) in t {
                    let (a, b) = (position[i], position[j]);
                    if a != usize::MAX && b != usize::MAX {
                        m[(a, b)] = v;
                    }
                }
                m
            }
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::from_triplets(
            self.dim,
            self.triplets().into_iter().map(|(i, j, v)| (j, i, v.conj())),
        );
        out.hermitian = self.hermitian;
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(
            self.dim,
            self.triplets().into_iter().map(|(i, j, v)| (i, j, v * s)),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(
            self.dim,
            self.triplets().into_iter().chain(other.triplets()),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut rows: HashMap<usize, Vec<(usize, C64)>> = HashMap::new();
        for (k, j, b) in other.triplets() {
            rows.entry(k).or_default().push((j, b));
        }
        let mut map: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (i, k, a) in self.triplets() {
            if let Some(row) = rows.get(&k) {
                for &(j, b) in row {
                    *map.entry((i, j)).or_insert(C64::new(0.0, 0.0)) += a * b;
                }
            }
        }
        Self::from_map(self.dim, map)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn max_abs(&self) -> f64 {
        self.triplets()
            .into_iter()
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_antihermitian(&self) -> f64 {
        self.triplets()
            .into_iter()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        assert_eq!(v.len(), self.dim);
        match &self.storage {
            Storage::Dense(m) => m * v,
            Storage::Sparse(t) => {
                let mut out = DVector::zeros(self.dim);
                for &(i, j, a) in t {
                    out[i] += a * v[j];
                }
                out
            }
        }
    }

    /// `<u|A|v>`.
    pub fn expectation(&self, u: &DVector<C64>, v: &DVector<C64>) -> C64 {
        u.dotc(&self.apply(v))
    }
}

fn check_slot(basis: &FockBasis, mode: usize) -> Result<usize> {
    basis.slot_of_mode(mode).ok_or(Error::ModeOutOfRange {
        index: mode,
        modes: basis.modes().len(),
    })
}

/// `a_k |..., n_k, ...> = sqrt(n_k) |..., n_k - 1, ...>`.
pub fn annihilation(basis: &FockBasis, mode: usize) -> Result<MatrixOperator> {
    let slot = check_slot(basis, mode)?;
    let mut entries = Vec::new();
    let mut occ = Vec::with_capacity(basis.slots());
    for j in 0..basis.dim() {
        occ.clear();
        occ.extend_from_slice(basis.state(j));
        let n = occ[slot];
        if n == 0 {
            continue;
        }
        occ[slot] -= 1;
        let i = basis
            .index_of(&occ)
            .expect("truncated bases are downward closed");
        entries.push((i, j, C64::new((n as f64).sqrt(), 0.0)));
    }
    Ok(MatrixOperator::from_triplets(basis.dim(), entries))
}

/// Conjugate transpose of [`annihilation`]; maps the top of the ladder to zero.
pub fn creation(basis: &FockBasis, mode: usize) -> Result<MatrixOperator> {
    Ok(annihilation(basis, mode)?.adjoint())
}

pub fn number_operator(basis: &FockBasis) -> MatrixOperator {
    let diag: Vec<f64> = (0..basis.dim())
        .map(|i| basis.total_number(i) as f64)
        .collect();
    let mut n = MatrixOperator::diagonal_from(&diag);
    n.hermitian = true;
    n
}

/// `a_k^dag a_k` for one mode.
pub fn mode_number(basis: &FockBasis, mode: usize) -> Result<MatrixOperator> {
    let slot = check_slot(basis, mode)?;
    let diag: Vec<f64> = (0..basis.dim())
        .map(|i| basis.state(i)[slot] as f64)
        .collect();
    let mut n = MatrixOperator::diagonal_from(&diag);
    n.hermitian = true;
    Ok(n)
}
