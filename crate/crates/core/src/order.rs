//! Weight densities over the substitution parameter, condensate
//! observables, field scans, and a closed-form pathological weight.

use serde::{Deserialize, Serialize};

use crate::coherent::coherent_amplitudes;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::fock::{FockBasis, C64};
use crate::gas::{GasParams, SymbolExpansion};
use crate::quadrature::{gauss_legendre_on, RadialGrid};
use crate::thermo::{
    diagonalize_full, integrate_ln, max_search_with, node_traces, resolve, Ensemble, FullSpectrum,
    ModelSpec, TAIL_TOL,
};
use crate::coherent::SymbolKind;

/// Largest tolerated negative value of a weight density.
const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Coherent diagonal of the full Gibbs operator.
    Full,
    /// Normalized upper-symbol trace.
    Substituted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightDensity {
    pub kind: WeightKind,
    pub params: GasParams,
    pub grid: RadialGrid,
    /// Density at each grid node, node order.
    pub values: Vec<f64>,
}

impl WeightDensity {
    fn checked(kind: WeightKind, params: &GasParams, grid: &RadialGrid, values: Vec<f64>) -> Result<Self> {
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, &v)| v < -NEGATIVE_TOL) {
            return Err(Error::NegativeWeight { value, node });
        }
        Ok(Self {
            kind,
            params: params.clone(),
            grid: grid.clone(),
            values,
        })
    }

    pub fn integral(&self) -> f64 {
        self.grid.sum_samples(&self.values)
    }

    /// `int z W(z) d^2 z`.
    pub fn mean_z(&self) -> C64 {
        (0..self.grid.len())
            .map(|k| {
                let n = self.grid.node(k);
                n.z * (n.weight * self.values[k])
            })
            .sum()
    }

    /// `int (|z|^2 - 1) W(z) d^2 z`.
    pub fn mean_t_minus_one(&self) -> f64 {
        (0..self.grid.len())
            .map(|k| {
                let n = self.grid.node(k);
                n.weight * self.values[k] * (n.z.norm_sqr() - 1.0)
            })
            .sum()
    }

    /// `(|z|, m(|z|))` per ring with `int m(r) dr = 1`, where `m` is
    /// `2 r` times the angular average.
    pub fn radial_marginal(&self) -> Vec<(f64, f64)> {
        let m = self.grid.angular_len();
        self.grid
            .radial()
            .enumerate()
            .map(|(i, (r, _))| {
                let avg = self.values[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64;
                (r, 2.0 * r * avg)
            })
            .collect()
    }

    /// Largest relative spread over angles on any ring.
    pub fn angular_variation(&self) -> f64 {
        let m = self.grid.angular_len();
        let peak = self.values.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        self.values
            .chunks(m)
            .map(|ring| {
                let hi = ring.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = ring.iter().copied().fold(f64::INFINITY, f64::min);
                (hi - lo) / peak
            })
            .fold(0.0, f64::max)
    }
}

/// `<z| rho_0 |z>` where `rho_0` is the zero-mode reduced Gibbs state.
pub fn weight_full(spectrum: &FullSpectrum, params: &GasParams, grid: &RadialGrid, exec: Execution) -> Result<WeightDensity> {
    let rho = spectrum.zero_mode_density()?;
    let cap = rho.nrows() - 1;
    let values = exec.map_range(grid.len(), |k| {
        let c = coherent_amplitudes(grid.node(k).z, cap);
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..=cap {
            let mut row = C64::new(0.0, 0.0);
            for m in 0..=cap {
                row += rho[(n, m)] * c[m];
            }
            acc += c[n].conj() * row;
        }
        acc.re
    });
    WeightDensity::checked(WeightKind::Full, params, grid, values)
}

/// `Tr exp(-beta H''(z)) / Xi''` from per-node log traces.
pub fn weight_from_traces(params: &GasParams, grid: &RadialGrid, ln_traces: &[f64]) -> Result<WeightDensity> {
    let (ln_total, _) = integrate_ln(grid, ln_traces);
    let values = ln_traces.iter().map(|&l| (l - ln_total).exp()).collect();
    WeightDensity::checked(WeightKind::Substituted, params, grid, values)
}

pub fn weight_substituted(
    params: &GasParams,
    basis_prime: &FockBasis,
    grid: &RadialGrid,
    exec: Execution,
) -> Result<WeightDensity> {
    let expansion = SymbolExpansion::new(params, basis_prime)?;
    let traces = node_traces(&expansion, grid, SymbolKind::Upper, exec)?;
    weight_from_traces(params, grid, &traces)
}

/// Compare `W''_lambda` with `W''_0(z) exp(-beta lambda sqrt(V) (z + conj z))`
/// renormalized on the grid. Returns the largest difference relative to the
/// peak of `W''_lambda`.
pub fn tilt_identity_residual(
    params: &GasParams,
    basis_prime: &FockBasis,
    grid: &RadialGrid,
    exec: Execution,
) -> Result<f64> {
    let tilted = weight_substituted(params, basis_prime, grid, exec)?;
    let flat = SymbolExpansion::new(&params.with_lambda(0.0), basis_prime)?;
    let flat_traces = node_traces(&flat, grid, SymbolKind::Upper, exec)?;
    let c = params.beta * params.lambda * params.volume.sqrt();
    let product: Vec<f64> = flat_traces
        .iter()
        .enumerate()
        .map(|(k, &l)| l - c * 2.0 * grid.node(k).z.re)
        .collect();
    let rebuilt = weight_from_traces(params, grid, &product)?;
    let peak = tilted.values.iter().copied().fold(0.0, f64::max);
    Ok(tilted
        .values
        .iter()
        .zip(&rebuilt.values)
        .map(|(a, b)| (a - b).abs() / peak)
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DirectTrace,
    WeightIntegral,
}

/// Zero-mode moments in the Gibbs state from the eigendecomposition.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DirectMoments {
    pub a0: C64,
    pub n0: f64,
}

pub fn direct_moments(spectrum: &FullSpectrum) -> Result<DirectMoments> {
    let basis = &spectrum.basis;
    if basis.zero_cap().is_none() {
        return Err(invalid("basis", "expected a basis containing the zero mode"));
    }
    let dim = basis.dim();
    let mut row_of = vec![usize::MAX; dim];
    let mut block_of = vec![usize::MAX; dim];
    for (b, block) in spectrum.blocks.iter().enumerate() {
        for (r, &i) in block.indices.iter().enumerate() {
            row_of[i] = r;
            block_of[i] = b;
        }
    }
    let mut a0 = C64::new(0.0, 0.0);
    let mut n0 = 0.0;
    let mut lower = vec![0u16; basis.slots()];
    for (b, block) in spectrum.blocks.iter().enumerate() {
        let vecs = block
            .vectors
            .as_ref()
            .ok_or_else(|| invalid("spectrum", "eigenvectors were not computed"))?;
        // (row, row of a0-image, sqrt(n0)) pairs inside this block
        let mut links = Vec::new();
        for (r, &i) in block.indices.iter().enumerate() {
            let occ = basis.state(i);
            if occ[0] == 0 {
                continue;
            }
            lower.copy_from_slice(occ);
            lower[0] -= 1;
            let target = basis.index_of(&lower).expect("downward closed");
            if block_of[target] == b {
                links.push((r, row_of[target], (occ[0] as f64).sqrt()));
            }
        }
        for (col, &e) in block.values.iter().enumerate() {
            let p = spectrum.probability(e);
            if p == 0.0 {
                continue;
            }
            for (r, &i) in block.indices.iter().enumerate() {
                n0 += p * vecs[(r, col)].norm_sqr() * basis.state(i)[0] as f64;
            }
            for &(r, t, s) in &links {
                a0 += vecs[(t, col)].conj() * vecs[(r, col)] * (p * s);
            }
        }
    }
    Ok(DirectMoments { a0, n0 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CondensateRecord {
    /// `V^-1 <a0^dag a0>`, direct trace.
    pub n0_density: f64,
    /// `V^-1 |<a0>|^2`, direct trace.
    pub order_param_sq: f64,
    /// `V^-1 |z_max|^2`.
    pub zmax_density: f64,
    pub a0_direct: C64,
    pub n0_direct: f64,
    pub a0_weight: C64,
    pub n0_weight: f64,
    pub weight_integral: f64,
    pub methods: Vec<Method>,
}

fn cauchy_schwarz(order_sq: f64, n0: f64) -> Result<()> {
    if order_sq > n0 + 1e-10 {
        return Err(Error::CauchySchwarz { order_sq, n0 });
    }
    Ok(())
}

/// Direct-trace moments cross-checked against moments of the full weight.
pub fn condensate_observables(ensemble: &Ensemble, exec: Execution) -> Result<CondensateRecord> {
    let p = &ensemble.params;
    let direct = direct_moments(&ensemble.spectrum)?;
    let w = weight_full(&ensemble.spectrum, p, ensemble.grid(), exec)?;
    let max = max_search_with(&ensemble.expansion, p, SymbolKind::Lower, ensemble.grid().radius())?;
    let v = p.volume;
    let rec = CondensateRecord {
        n0_density: direct.n0 / v,
        order_param_sq: direct.a0.norm_sqr() / v,
        zmax_density: max.z_max.norm_sqr() / v,
        a0_direct: direct.a0,
        n0_direct: direct.n0,
        a0_weight: w.mean_z(),
        n0_weight: w.mean_t_minus_one(),
        weight_integral: w.integral(),
        methods: vec![Method::DirectTrace, Method::WeightIntegral],
    };
    cauchy_schwarz(rec.order_param_sq, rec.n0_density)?;
    Ok(rec)
}

/// Gibbs state with the zero-mode cap grown until its top levels are empty.
pub fn gibbs_state(params: &GasParams, spec: &ModelSpec, exec: Execution) -> Result<FullSpectrum> {
    let mut truncation = resolve(params, spec)?.truncation;
    for _ in 0..5 {
        let basis = FockBasis::build(&params.modes, truncation)?;
        let s = diagonalize_full(params, &basis, true, exec)?;
        if spec.zero_mode_max.is_some() || s.zero_mode_tail()? <= TAIL_TOL {
            return Ok(s);
        }
        truncation = truncation.with_zero_mode((truncation.zero_cap() as f64 * 1.5).ceil() as u32);
    }
    let basis = FockBasis::build(&params.modes, truncation)?;
    diagonalize_full(params, &basis, true, exec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiAverageTable {
    pub volumes: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `[volume][lambda]`.
    pub order_param_sq: Vec<Vec<f64>>,
    pub n0_density: Vec<Vec<f64>>,
    /// Per volume: order parameter non-increasing as lambda decreases.
    pub row_monotone: Vec<bool>,
    /// Per lambda: order parameter non-decreasing in volume.
    pub column_increasing: Vec<bool>,
}

/// Direct-trace condensate observables over a `(V, lambda)` grid.
pub fn quasi_average_scan(
    base: &GasParams,
    lambdas: &[f64],
    volumes: &[f64],
    spec: &ModelSpec,
    exec: Execution,
) -> Result<QuasiAverageTable> {
    if lambdas.windows(2).any(|w| w[1] >= w[0]) || lambdas.iter().any(|&l| l < 0.0) {
        return Err(invalid("lambda", "grid must be nonnegative and strictly decreasing"));
    }
    if volumes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("volume", "grid must be strictly increasing"));
    }
    let mut points = Vec::new();
    for &v in volumes {
        let pv = base.with_volume(v)?;
        for &l in lambdas {
            points.push(pv.with_lambda(l));
        }
    }
    let results = exec.map(&points, |p| {
        let s = gibbs_state(p, spec, Execution::Sequential)?;
        let m = direct_moments(&s)?;
        let rec = (m.a0.norm_sqr() / p.volume, m.n0 / p.volume);
        cauchy_schwarz(rec.0, rec.1)?;
        Ok::<_, Error>(rec)
    });
    let nl = lambdas.len();
    let mut order = vec![vec![0.0; nl]; volumes.len()];
    let mut dens = vec![vec![0.0; nl]; volumes.len()];
    for (k, r) in results.into_iter().enumerate() {
        let (o, n) = r?;
        order[k / nl][k % nl] = o;
        dens[k / nl][k % nl] = n;
    }
    let row_monotone = order.iter().map(|row| row.windows(2).all(|w| w[1] <= w[0])).collect();
    let column_increasing = (0..nl)
        .map(|j| order.windows(2).all(|w| w[1][j] >= w[0][j]))
        .collect();
    Ok(QuasiAverageTable {
        volumes: volumes.to_vec(),
        lambdas: lambdas.to_vec(),
        order_param_sq: order,
        n0_density: dens,
        row_monotone,
        column_increasing,
    })
}

/// Radially symmetric weight in `zeta = z / sqrt(V)`: `V^2 - V + 1/V` on
/// `|zeta| <= 1/V`, `1/V` on `1/V < |zeta| <= 1`, zero beyond.
#[derive(Clone, Copy, Debug)]
pub struct PathologicalWeight {
    pub volume: f64,
}

impl PathologicalWeight {
    pub fn new(volume: f64) -> Result<Self> {
        if !(volume >= 2.0 && volume.is_finite()) {
            return Err(invalid("volume", format!("must be at least 2, got {volume}")));
        }
        Ok(Self { volume })
    }

    pub fn inner(&self) -> f64 {
        let v = self.volume;
        v * v - v + 1.0 / v
    }

    pub fn outer(&self) -> f64 {
        1.0 / self.volume
    }

    pub fn value(&self, zeta: C64) -> f64 {
        let r = zeta.norm();
        if r <= 1.0 / self.volume {
            self.inner()
        } else if r <= 1.0 {
            self.outer()
        } else {
            0.0
        }
    }

    /// Closed-form mass; `d^2 zeta` gives a disc of radius `a` area `a^2`.
    pub fn normalization(&self) -> f64 {
        let a = 1.0 / self.volume;
        self.inner() * a * a + self.outer() * (1.0 - a * a)
    }

    /// Closed-form `int |zeta|^2 w`, using `int_{|zeta|<=a} |zeta|^2 = a^4/2`.
    pub fn second_moment(&self) -> f64 {
        let a4 = self.volume.powi(-4);
        0.5 * (self.inner() * a4 + self.outer() * (1.0 - a4))
    }

    /// Piecewise radial quadrature of `int r^k w` with `d^2 zeta = pi^-1 r dr dtheta`.
    pub fn radial_moment(&self, k: i32) -> f64 {
        let a = 1.0 / self.volume;
        let piece = |lo: f64, hi: f64, w: f64| {
            let (x, wt) = gauss_legendre_on(32, lo, hi);
            x.iter().zip(&wt).map(|(r, q)| q * 2.0 * r.powi(k + 1) * w).sum::<f64>()
        };
        piece(0.0, a, self.inner()) + piece(a, 1.0, self.outer())
    }

    /// `int_{|zeta| <= r} g(Re zeta) d^2 zeta = (2/pi) r^2 int_0^pi sin^2 t g(r cos t) dt`,
    /// composite Gauss-Legendre; `ln_g` returns `(ln |g|, sign)`.
    fn disc(r: f64, shift: f64, g: &dyn Fn(f64) -> (f64, f64)) -> f64 {
        const PANELS: usize = 256;
        let (x, w) = crate::quadrature::gauss_legendre(16);
        let h = std::f64::consts::PI / PANELS as f64;
        let mut total = 0.0;
        for p in 0..PANELS {
            let mid = (p as f64 + 0.5) * h;
            for (u, q) in x.iter().zip(&w) {
                let t = mid + 0.5 * h * u;
                let (lg, sign) = g(r * t.cos());
                total += 0.5 * h * q * t.sin().powi(2) * sign * (lg - shift).exp();
            }
        }
        2.0 / std::f64::consts::PI * r * r * total
    }

    /// Mean of `Re zeta` under `w(zeta) exp(-c Re zeta)` with its norm, both
    /// relative to `exp(c)`.
    pub fn tilted(&self, c: f64) -> (f64, f64) {
        let a = 1.0 / self.volume;
        let shift = c.abs();
        let unit = |x: f64| (-c * x, 1.0);
        let first = |x: f64| (-c * x + x.abs().ln(), x.signum());
        let mass = |g: &dyn Fn(f64) -> (f64, f64)| {
            let inner = Self::disc(a, shift, g);
            let full = Self::disc(1.0, shift, g);
            self.inner() * inner + self.outer() * (full - inner)
        };
        let norm = mass(&unit);
        (mass(&first) / norm, norm)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathologicalReport {
    pub volume: f64,
    pub beta_lambda: f64,
    pub normalization: f64,
    pub normalization_numeric: f64,
    pub second_moment: f64,
    pub second_moment_numeric: f64,
    pub tilted_mean: f64,
    /// Distance of the tilted mean from `-1`.
    pub localization_error: f64,
}

pub fn pathological_weight(volume: f64, beta_lambda: f64) -> Result<PathologicalReport> {
    let w = PathologicalWeight::new(volume)?;
    let (mean, _) = w.tilted(beta_lambda * volume);
    Ok(PathologicalReport {
        volume,
        beta_lambda,
        normalization: w.normalization(),
        normalization_numeric: w.radial_moment(0),
        second_moment: w.second_moment(),
        second_moment_numeric: w.radial_moment(2),
        tilted_mean: mean,
        localization_error: (mean + 1.0).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ModeSet, Truncation};
    use crate::gas::Interaction;

    fn free_mode(mu: f64, lambda: f64) -> GasParams {
        GasParams::new(ModeSet::zero_only(1.0).unwrap(), Interaction::none(), 0.0, mu, lambda, 1.0).unwrap()
    }

    #[test]
    fn thermal_coherent_diagonal_is_gaussian() {
        let mu = -0.7;
        let p = free_mode(mu, 0.0);
        let e = Ensemble::compute(&p, &ModelSpec::new(1), Execution::Sequential).unwrap();
        let w = weight_full(&e.spectrum, &p, e.grid(), Execution::Sequential).unwrap();
        // <z| e^{beta mu n} |z> / Xi = (1 - e^{beta mu}) exp(-|z|^2 (1 - e^{beta mu}))
        let q = 1.0 - mu.exp();
        for k in (0..e.grid().len()).step_by(97) {
            let z = e.grid().node(k).z;
            let exact = q * (-z.norm_sqr() * q).exp();
            assert!((w.values[k] - exact).abs() < 1e-8, "{} vs {exact}", w.values[k]);
        }
        assert!((w.integral() - 1.0).abs() < 1e-8);
        assert!(w.angular_variation() < 1e-10);
    }

    #[test]
    fn free_mode_occupation_both_routes() {
        let p = free_mode(-1.0, 0.0);
        let e = Ensemble::compute(&p, &ModelSpec::new(1), Execution::Sequential).unwrap();
        let c = condensate_observables(&e, Execution::Sequential).unwrap();
        let exact = 1.0 / (std::f64::consts::E - 1.0);
        assert!((c.n0_direct - exact).abs() < 1e-10);
        assert!((c.n0_weight - exact).abs() < 1e-6);
        assert_eq!(c.a0_direct, C64::new(0.0, 0.0));
    }

    #[test]
    fn field_moments_agree() {
        let p = GasParams::new(
            ModeSet::new(vec![0, 1], 2.0).unwrap(),
            Interaction::Contact { g: 0.6 },
            0.6,
            -0.2,
            0.35,
            1.2,
        )
        .unwrap();
        let e = Ensemble::compute(&p, &ModelSpec::new(3), Execution::Sequential).unwrap();
        let c = condensate_observables(&e, Execution::Sequential).unwrap();
        assert!((c.weight_integral - 1.0).abs() < 1e-8);
        assert!((c.a0_weight - c.a0_direct).norm() < 1e-6 * c.a0_direct.norm());
        assert!((c.n0_weight - c.n0_direct).abs() < 1e-6 * c.n0_direct);
        assert!(c.a0_direct.re < 0.0);
        assert!(c.order_param_sq <= c.n0_density);
    }

    #[test]
    fn substituted_weight_free_mode() {
        let p = free_mode(-1.3, 0.0);
        let bp = FockBasis::build_primed(&p.modes, Truncation::uniform(1)).unwrap();
        let grid = RadialGrid::new(8.0, 200, 32).unwrap();
        let w = weight_substituted(&p, &bp, &grid, Execution::Sequential).unwrap();
        for k in (0..grid.len()).step_by(53) {
            let t = grid.node(k).z.norm_sqr();
            let exact = 1.3 * (-1.3 * t).exp();
            assert!((w.values[k] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn tilt_identity_and_negative_axis() {
        let p = GasParams::new(
            ModeSet::symmetric(1, 1.5).unwrap(),
            Interaction::Contact { g: 0.4 },
            0.4,
            -0.5,
            0.5,
            1.0,
        )
        .unwrap();
        let bp = FockBasis::build_primed(&p.modes, Truncation::uniform(2)).unwrap();
        let grid = RadialGrid::new(9.0, 200, 64).unwrap();
        assert!(tilt_identity_residual(&p, &bp, &grid, Execution::Sequential).unwrap() < 1e-10);
        let strong = p.with_lambda(3.0);
        let w = weight_substituted(&strong, &bp, &grid, Execution::Sequential).unwrap();
        assert!(w.mean_z().re < -1.0);
    }

    #[test]
    fn quasi_average_grid() {
        let base = GasParams::new(ModeSet::zero_only(1.0).unwrap(), Interaction::none(), 0.0, -0.5, 0.0, 1.0).unwrap();
        let t = quasi_average_scan(&base, &[0.4, 0.1, 0.0], &[1.0, 2.0], &ModelSpec::new(1), Execution::Sequential).unwrap();
        for row in &t.order_param_sq {
            assert_eq!(row[2], 0.0);
        }
        assert!(t.row_monotone.iter().all(|&b| b));
        // free mode: <a0> = -sqrt(V) lambda / (-mu)
        let exact = (1.0f64 * 0.4 / 0.5).powi(2);
        assert!((t.order_param_sq[0][0] - exact).abs() < 1e-8);
        assert!(quasi_average_scan(&base, &[0.0, 0.1], &[1.0], &ModelSpec::new(1), Execution::Sequential).is_err());
    }

    #[test]
    fn pathological_moments() {
        for v in [2.0, 10.0, 100.0, 1000.0] {
            let r = pathological_weight(v, 1.0).unwrap();
            assert!((r.normalization - 1.0).abs() < 1e-14);
            assert!((r.normalization_numeric - 1.0).abs() < 1e-10);
            assert!((r.second_moment - r.second_moment_numeric).abs() < 1e-12);
            assert!(r.second_moment <= 2.0 / v);
        }
        let w = PathologicalWeight::new(5.0).unwrap();
        let (mean, _) = w.tilted(0.0);
        assert!(mean.abs() < 1e-12);
        assert!(PathologicalWeight::new(1.0).is_err());
    }

    #[test]
    fn pathological_localizes_under_tilt() {
        let r = pathological_weight(200.0, 1.0).unwrap();
        assert!(r.localization_error < 0.05, "{}", r.tilted_mean);
    }
}
