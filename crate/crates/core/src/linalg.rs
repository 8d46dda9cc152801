//! Block-diagonal Hermitian eigendecomposition and stable trace exponentials.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fock::{MatrixOperator, C64};

/// Blocks above this size use scaled-and-squared exponentials when only a
/// trace is needed.
pub const EIGEN_LIMIT: usize = 2000;

#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`, in block coordinates.
    pub vectors: Option<DMatrix<C64>>,
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub dim: usize,
    pub blocks: Vec<BlockSpectrum>,
}

impl Spectrum {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flat_map(|b| b.values.iter().copied())
    }

    pub fn min_value(&self) -> f64 {
        self.values().fold(f64::INFINITY, f64::min)
    }

    /// `ln Tr exp(-beta H)`.
    pub fn ln_trace_exp(&self, beta: f64) -> f64 {
        ln_sum_exp(self.values().map(|e| -beta * e))
    }
}

/// Group state indices by a conserved label; blocks ordered by label.
pub fn group_by_label<L: Ord>(labels: impl IntoIterator<Item = L>) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.into_iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map.into_values().collect()
}

/// `ln sum exp(x_i)` with the maximum factored out.
pub fn ln_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn is_real(m: &DMatrix<C64>) -> bool {
    m.iter().all(|v| v.im == 0.0)
}

/// Eigenvalues (ascending) and optionally eigenvectors of a Hermitian block.
pub fn eigh(m: DMatrix<C64>, want_vectors: bool) -> Result<(Vec<f64>, Option<DMatrix<C64>>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), want_vectors.then(|| DMatrix::zeros(0, 0))));
    }
    if n == 1 {
        return Ok((vec![m[(0, 0)].re], want_vectors.then(|| DMatrix::identity(1, 1))));
    }
    let (values, vectors) = if is_real(&m) {
        let r = m.map(|v| v.re);
        if want_vectors {
            let e = SymmetricEigen::try_new(r, f64::EPSILON, 0).ok_or(Error::Eigensolver(n))?;
            (e.eigenvalues.as_slice().to_vec(), Some(e.eigenvectors.map(|v| C64::new(v, 0.0))))
        } else {
            let e = r.symmetric_eigenvalues();
            (e.as_slice().to_vec(), None)
        }
    } else if want_vectors {
        let e = SymmetricEigen::try_new(m, f64::EPSILON, 0).ok_or(Error::Eigensolver(n))?;
        (e.eigenvalues.as_slice().to_vec(), Some(e.eigenvectors))
    } else {
        let e = m.symmetric_eigenvalues();
        (e.as_slice().to_vec(), None)
    };
    // sort ascending, permuting vectors along
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let vectors = vectors.map(|v| DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]));
    Ok((sorted, vectors))
}

/// Eigendecomposition of `op` restricted to each block. The blocks must
/// partition the basis and `op` must not couple different blocks.
pub fn eigh_blocks(op: &MatrixOperator, blocks: &[Vec<usize>], want_vectors: bool) -> Result<Spectrum> {
    let mut out = Vec::with_capacity(blocks.len());
    for idx in blocks {
        let (values, vectors) = eigh(op.submatrix(idx), want_vectors)?;
        out.push(BlockSpectrum {
            indices: idx.clone(),
            values,
            vectors,
        });
    }
    Ok(Spectrum {
        dim: op.dim(),
        blocks: out,
    })
}

/// `ln Tr exp(-beta H)` over blocks; blocks larger than [`EIGEN_LIMIT`] go
/// through [`ln_trace_exp_squaring`].
pub fn ln_trace_exp_blocks(op: &MatrixOperator, blocks: &[Vec<usize>], beta: f64) -> Result<f64> {
    let mut parts = Vec::with_capacity(blocks.len());
    for idx in blocks {
        let m = op.submatrix(idx);
        if idx.len() > EIGEN_LIMIT {
            parts.push(ln_trace_exp_squaring(&m, beta));
        } else {
            let (values, _) = eigh(m, false)?;
            parts.push(ln_sum_exp(values.into_iter().map(|e| -beta * e)));
        }
    }
    Ok(ln_sum_exp(parts))
}

/// `ln Tr exp(-beta H)` by scaling and squaring a Taylor expansion.
///
/// `H` is shifted by its Gershgorin lower bound so the exponential has norm
/// at most one.
pub fn ln_trace_exp_squaring(h: &DMatrix<C64>, beta: f64) -> f64 {
    let n = h.nrows();
    let shift = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| h[(i, j)].norm()).sum();
            h[(i, i)].re - off
        })
        .fold(f64::INFINITY, f64::min);
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] -= C64::new(shift, 0.0);
    }
    a *= C64::new(-beta, 0.0);
    let norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    a *= C64::new(scale, 0.0);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=18 {
        term = &term * &a * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    let tr: f64 = (0..n).map(|i| sum[(i, i)].re).sum();
    tr.ln() - beta * shift
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hermitian(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (i.min(j) as f64, i.max(j) as f64);
            let re = ((a + 1.0) * 0.7 + b * 0.3).sin();
            let im = if i == j { 0.0 } else { (a * 1.3 - b * 0.4).cos() * 0.5 };
            if i <= j {
                C64::new(re, im)
            } else {
                C64::new(re, -im)
            }
        })
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let m = sample_hermitian(7);
        let (vals, vecs) = eigh(m.clone(), true).unwrap();
        let v = vecs.unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            7,
            vals.iter().map(|&x| C64::new(x, 0.0)),
        ));
        let r = &v * d * v.adjoint();
        assert!((r - m).norm() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn squaring_matches_eigen_route() {
        let m = sample_hermitian(9);
        let (vals, _) = eigh(m.clone(), false).unwrap();
        let exact = ln_sum_exp(vals.iter().map(|e| -1.7 * e));
        let approx = ln_trace_exp_squaring(&m, 1.7);
        assert!((exact - approx).abs() < 1e-12, "{exact} vs {approx}");
    }

    #[test]
    fn ln_sum_exp_is_shift_stable() {
        let v = ln_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(ln_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
    }

    #[test]
    fn grouping_is_ordered() {
        let g = group_by_label([2, 0, 2, 1, 0]);
        assert_eq!(g, vec![vec![1, 4], vec![3], vec![0, 2]]);
    }
}
