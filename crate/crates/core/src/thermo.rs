//! Grand-canonical partition functions of the full and substituted
//! Hamiltonians, the best single substitution value, and the audit of the
//! inequalities relating them.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coherent::SymbolKind;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::fock::{FockBasis, Truncation, C64};
use crate::gas::{build_h_mu_lambda, full_blocks, GasParams, SymbolExpansion};
use crate::linalg::{self, ln_sum_exp, BlockSpectrum};
use crate::quadrature::{QuadratureSettings, RadialGrid};

/// Required drop of `beta * e(t)` below its minimum before the zero-mode
/// occupation is cut off.
const ZERO_MODE_DECAY: f64 = 46.0;
/// Bound on the Gibbs population of the top two zero-mode levels.
pub const TAIL_TOL: f64 = 1e-14;
/// Bound on the integrand at the outer ring relative to its peak.
pub const EDGE_TOL: f64 = 1e-14;
/// Warning threshold for the edge ratio.
pub const EDGE_WARN: f64 = 1e-10;
/// Step of the centered difference in `mu` that defines the density.
pub const DENSITY_STEP: f64 = 1e-4;
const MAX_GROWTH: usize = 5;

/// How to truncate and integrate for one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Occupation cap of the nonzero modes.
    pub n_max: u32,
    /// Zero-mode cap; chosen from the parameters when absent.
    #[serde(default)]
    pub zero_mode_max: Option<u32>,
    #[serde(default)]
    pub quadrature: QuadratureSettings,
}

impl ModelSpec {
    pub fn new(n_max: u32) -> Self {
        Self {
            n_max,
            zero_mode_max: None,
            quadrature: QuadratureSettings::default(),
        }
    }
}

/// Truncation and grid actually used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Resolved {
    pub truncation: Truncation,
    pub grid: RadialGrid,
    pub tol_quad: f64,
}

fn zero_mode_energy(params: &GasParams, t: f64) -> f64 {
    let v = params.volume;
    params.nu(0) * t * t / (2.0 * v) - params.mu * t - 2.0 * v.sqrt() * params.lambda.abs() * t.sqrt()
}

/// Occupation scale `t*` beyond which the classical zero-mode energy
/// `e(t) = nu(0) t^2/(2V) - mu t - 2 sqrt(V) |lambda| sqrt(t)` exceeds its
/// minimum by `ZERO_MODE_DECAY / beta`.
pub fn zero_mode_scale(params: &GasParams) -> Result<f64> {
    let g0 = params.nu(0);
    if g0 < 0.0 || (g0 == 0.0 && params.mu >= 0.0) {
        return Err(invalid(
            "mu",
            format!(
                "zero-mode energy unbounded below (nu(0) = {g0}, mu = {}): the integrals diverge",
                params.mu
            ),
        ));
    }
    let e = |t: f64| zero_mode_energy(params, t);
    // e is convex on [0, inf): bracket and golden-section the minimum
    let mut hi = 1.0;
    while e(2.0 * hi) < e(hi) {
        hi *= 2.0;
    }
    let t_min = golden_min(e, 0.0, 2.0 * hi, 1e-10);
    let e_min = e(t_min).min(e(0.0));
    let target = e_min + ZERO_MODE_DECAY / params.beta;
    let mut lo = t_min;
    let mut up = t_min.max(1.0);
    while e(up) < target {
        lo = up;
        up *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if e(mid) < target {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Ok(up)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn grid_for(params: &GasParams, n0_cap: u32, q: &QuadratureSettings) -> Result<RadialGrid> {
    let radius = q.radius.unwrap_or((n0_cap as f64).sqrt() + 6.0);
    let radial = q.radial_nodes.max((1.3 * radius * radius).ceil() as usize);
    let a = 2.0 * params.beta * params.volume.sqrt() * params.lambda.abs() * radius;
    let mut angular = q.angular_nodes.max(((80.0 * a).sqrt() + 16.0).ceil() as usize);
    angular += angular % 2;
    RadialGrid::new(radius, radial, angular)
}

/// Initial truncation and grid from the classical zero-mode energy.
pub fn resolve(params: &GasParams, spec: &ModelSpec) -> Result<Resolved> {
    params.validate()?;
    let n0_cap = match spec.zero_mode_max {
        Some(c) => c,
        None => {
            let t = zero_mode_scale(params)?;
            (t + 4.0 * t.sqrt() + 10.0).ceil() as u32
        }
    };
    let grid = grid_for(params, n0_cap, &spec.quadrature)?;
    grid.validate(spec.quadrature.tol_quad)?;
    Ok(Resolved {
        truncation: Truncation::uniform(spec.n_max).with_zero_mode(n0_cap),
        grid,
        tol_quad: spec.quadrature.tol_quad,
    })
}

fn grown(params: &GasParams, spec: &ModelSpec, prev: &Resolved) -> Result<Resolved> {
    let cap = (prev.truncation.zero_cap() as f64 * 1.5).ceil() as u32;
    let grid = grid_for(params, cap, &spec.quadrature)?;
    Ok(Resolved {
        truncation: prev.truncation.with_zero_mode(cap),
        grid,
        tol_quad: prev.tol_quad,
    })
}

/// Spectrum of `H_{mu,lambda}` on an explicit basis, block by block.
#[derive(Clone, Debug)]
pub struct FullSpectrum {
    pub basis: FockBasis,
    pub beta: f64,
    pub blocks: Vec<BlockSpectrum>,
    pub ln_partition: f64,
}

impl FullSpectrum {
    pub fn partition(&self) -> f64 {
        self.ln_partition.exp()
    }

    pub fn min_energy(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Gibbs probability of eigenvalue `e`.
    pub fn probability(&self, e: f64) -> f64 {
        (-self.beta * e - self.ln_partition).exp()
    }

    /// Reduced density matrix of the zero mode, indexed by occupation.
    /// Requires eigenvectors.
    pub fn zero_mode_density(&self) -> Result<DMatrix<C64>> {
        let cap = self
            .basis
            .zero_cap()
            .ok_or_else(|| invalid("basis", "expected a basis containing the zero mode"))?
            as usize;
        let primed = self.basis.primed()?;
        let mut rho = DMatrix::<C64>::zeros(cap + 1, cap + 1);
        for block in &self.blocks {
            let vecs = block
                .vectors
                .as_ref()
                .ok_or_else(|| invalid("spectrum", "eigenvectors were not computed"))?;
            // rows of the block sharing a primed configuration
            let mut groups: std::collections::BTreeMap<usize, Vec<(usize, usize)>> =
                std::collections::BTreeMap::new();
            for (row, &i) in block.indices.iter().enumerate() {
                let (n0, j) = self.basis.split(i, &primed).expect("explicit basis");
                groups.entry(j).or_default().push((n0, row));
            }
            for (col, &e) in block.values.iter().enumerate() {
                let p = self.probability(e);
                if p == 0.0 {
                    continue;
                }
                for members in groups.values() {
                    for &(n, r) in members {
                        let u = vecs[(r, col)] * p;
                        for &(m, s) in members {
                            rho[(n, m)] += u * vecs[(s, col)].conj();
                        }
                    }
                }
            }
        }
        Ok(rho)
    }

    /// Gibbs population of zero-mode occupations `>= cap - 1`.
    pub fn zero_mode_tail(&self) -> Result<f64> {
        let rho = self.zero_mode_density()?;
        let n = rho.nrows();
        Ok((n.saturating_sub(2)..n).map(|i| rho[(i, i)].re).sum())
    }
}

/// Diagonalize `H_{mu,lambda}` over its conserved blocks.
pub fn diagonalize_full(
    params: &GasParams,
    basis: &FockBasis,
    want_vectors: bool,
    exec: Execution,
) -> Result<FullSpectrum> {
    let h = build_h_mu_lambda(params, basis)?;
    let blocks = full_blocks(params, basis);
    let parts = exec.map(&blocks, |idx| {
        linalg::eigh(h.submatrix(idx), want_vectors).map(|(values, vectors)| BlockSpectrum {
            indices: idx.clone(),
            values,
            vectors,
        })
    });
    let blocks = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let beta = params.beta;
    let ln_partition = ln_sum_exp(blocks.iter().flat_map(|b| b.values.iter().map(move |e| -beta * e)));
    Ok(FullSpectrum {
        basis: basis.clone(),
        beta,
        blocks,
        ln_partition,
    })
}

/// `Xi = Tr exp(-beta H_{mu,lambda})`.
pub fn partition_full(params: &GasParams, basis: &FockBasis) -> Result<f64> {
    Ok(diagonalize_full(params, basis, false, Execution::Sequential)?.partition())
}

/// Quadrature of `Tr exp(-beta H_kind(z))` with per-node log traces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubstitutedPartition {
    pub kind: SymbolKind,
    pub ln_value: f64,
    /// `ln Tr exp(-beta H_kind(z_k))` in grid node order.
    pub ln_traces: Vec<f64>,
    /// Largest integrand on the outer ring relative to the largest anywhere.
    pub edge_ratio: f64,
}

impl SubstitutedPartition {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }
}

/// Per-node traces of an expansion on the whole grid, using `H(conj z) =
/// conj H(z)` to evaluate only the upper half plane.
pub fn node_traces(
    expansion: &SymbolExpansion,
    grid: &RadialGrid,
    kind: SymbolKind,
    exec: Execution,
) -> Result<Vec<f64>> {
    let upper = grid.upper_half();
    let values = exec.map(&upper, |&k| expansion.ln_trace(grid.node(k).z, kind));
    let mut out = vec![f64::NAN; grid.len()];
    for (&k, v) in upper.iter().zip(values) {
        let v = v?;
        out[k] = v;
        out[grid.conjugate_index(k)] = v;
    }
    Ok(out)
}

/// Integrate precomputed log traces over the grid.
pub fn integrate_ln(grid: &RadialGrid, ln_traces: &[f64]) -> (f64, f64) {
    let peak = ln_traces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = ln_traces
        .iter()
        .enumerate()
        .map(|(k, &l)| grid.node(k).weight * (l - peak).exp())
        .sum();
    let edge = grid
        .outer_ring()
        .map(|k| (ln_traces[k] - peak).exp())
        .fold(0.0, f64::max);
    (peak + sum.ln(), edge)
}

fn substituted_from(
    expansion: &SymbolExpansion,
    grid: &RadialGrid,
    kind: SymbolKind,
    exec: Execution,
) -> Result<SubstitutedPartition> {
    let ln_traces = node_traces(expansion, grid, kind, exec)?;
    let (ln_value, edge_ratio) = integrate_ln(grid, &ln_traces);
    if edge_ratio > EDGE_WARN {
        warn!("integrand at the radial cutoff is {edge_ratio:e} of its peak; enlarge the radius");
    }
    Ok(SubstitutedPartition {
        kind,
        ln_value,
        ln_traces,
        edge_ratio,
    })
}

/// `Xi'` (lower symbols) or `Xi''` (upper symbols).
pub fn partition_substituted(
    params: &GasParams,
    basis_prime: &FockBasis,
    grid: &RadialGrid,
    kind: SymbolKind,
    exec: Execution,
) -> Result<SubstitutedPartition> {
    let expansion = SymbolExpansion::new(params, basis_prime)?;
    substituted_from(&expansion, grid, kind, exec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxSearch {
    pub kind: SymbolKind,
    pub z_max: C64,
    /// `ln max_z Tr exp(-beta H_kind(z))`.
    pub ln_value: f64,
    /// `(beta V)^-1` times `ln_value`.
    pub pressure: f64,
    /// Another local maximum on the scan is within 1e-8 of the best.
    pub degenerate: bool,
    pub evaluations: usize,
}

impl MaxSearch {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }
}

const SCAN_POINTS: usize = 129;

/// Maximize `Tr exp(-beta H_kind(x))` over real `x`, which carries the
/// maximum for real `lambda`; at `lambda = 0` only `x >= 0` is scanned.
pub fn p_max_search(
    params: &GasParams,
    basis_prime: &FockBasis,
    kind: SymbolKind,
    radius: f64,
) -> Result<MaxSearch> {
    let expansion = SymbolExpansion::new(params, basis_prime)?;
    max_search_with(&expansion, params, kind, radius)
}

pub(crate) fn max_search_with(
    expansion: &SymbolExpansion,
    params: &GasParams,
    kind: SymbolKind,
    radius: f64,
) -> Result<MaxSearch> {
    let shift = if params.mu != 0.0 {
        params.volume.sqrt() * params.lambda.abs() / params.mu.abs()
    } else {
        radius
    };
    let (lo, hi) = if params.lambda > 0.0 {
        (-(shift + radius), radius)
    } else if params.lambda < 0.0 {
        (-radius, shift + radius)
    } else {
        (0.0, radius)
    };
    let mut evaluations = 0;
    let mut eval = |x: f64| -> Result<f64> {
        evaluations += 1;
        expansion.ln_trace(C64::new(x, 0.0), kind)
    };
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let mut fs = Vec::with_capacity(SCAN_POINTS);
    for &x in &xs {
        fs.push(eval(x)?);
    }
    let best = (0..SCAN_POINTS).fold(0, |b, i| if fs[i] > fs[b] { i } else { b });
    let mut a = xs[best.saturating_sub(1)];
    let mut b = xs[(best + 1).min(SCAN_POINTS - 1)];
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    let mut last = fc.max(fd);
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = eval(d)?;
        }
        let now = fc.max(fd);
        if (b - a).abs() < 1e-9 * (1.0 + b.abs()) && (now - last).abs() < 1e-10 {
            break;
        }
        last = now;
    }
    let (mut x, mut f) = if fc > fd { (c, fc) } else { (d, fd) };
    if fs[best] > f {
        x = xs[best];
        f = fs[best];
    }
    let degenerate = (0..SCAN_POINTS).any(|i| {
        let left = i == 0 || fs[i] >= fs[i - 1];
        let right = i == SCAN_POINTS - 1 || fs[i] >= fs[i + 1];
        let far = (xs[i] - x).abs() > 2.0 * (hi - lo) / (SCAN_POINTS - 1) as f64;
        left && right && far && (fs[i] - f).abs() < 1e-8
    });
    Ok(MaxSearch {
        kind,
        z_max: C64::new(x, 0.0),
        ln_value: f,
        pressure: f / (params.beta * params.volume),
        degenerate,
        evaluations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    /// `Xi' <= Xi`.
    JensenLower,
    /// `Xi <= Xi''`.
    UpperSymbolBound,
    /// `Xi'' <= Xi'(mu + 2 phi/V) exp(beta (|mu| + phi/V))`.
    ShiftedLower,
    /// `max_z Tr exp(-beta H'(z)) <= Xi`.
    SinglePointLower,
    /// `Xi'' <= 2 (V rho'' + 1) max_z Tr exp(-beta H''(z))`.
    SinglePointUpper,
}

impl CheckId {
    pub const ALL: [CheckId; 5] = [
        CheckId::JensenLower,
        CheckId::UpperSymbolBound,
        CheckId::ShiftedLower,
        CheckId::SinglePointLower,
        CheckId::SinglePointUpper,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CheckId::JensenLower => "i",
            CheckId::UpperSymbolBound => "ii",
            CheckId::ShiftedLower => "iii",
            CheckId::SinglePointLower => "iv",
            CheckId::SinglePointUpper => "v",
        }
    }
}

/// One inequality `lhs <= rhs` with slack `tol (1 + |lhs| + |rhs|)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditCheck {
    pub id: CheckId,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

impl AuditCheck {
    pub fn new(id: CheckId, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = tol * (1.0 + lhs.abs() + rhs.abs());
        Self {
            id,
            lhs,
            rhs,
            slack,
            pass: lhs <= rhs + slack,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub zero_mode_tail: f64,
    pub edge_ratio: f64,
    pub gaussian_mass: f64,
    pub growth_steps: usize,
    pub max_degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub params: GasParams,
    pub truncation: Truncation,
    pub radius: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub tol_quad: f64,
    pub xi: f64,
    pub xi_prime: f64,
    pub xi_dprime: f64,
    pub xi_max: f64,
    pub ln_xi: f64,
    pub ln_xi_prime: f64,
    pub ln_xi_dprime: f64,
    pub ln_xi_max: f64,
    pub p: f64,
    pub p_prime: f64,
    pub p_dprime: f64,
    pub p_max: f64,
    pub z_max: C64,
    /// Maximum of the upper-symbol trace and its location.
    pub xi_max_upper: f64,
    pub z_max_upper: C64,
    pub xi_prime_shifted: f64,
    pub rho_dprime: f64,
    pub audit: Vec<AuditCheck>,
    pub diagnostics: Diagnostics,
}

impl EnsembleReport {
    pub fn passed(&self) -> bool {
        self.audit.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&AuditCheck> {
        self.audit.iter().filter(|c| !c.pass).collect()
    }

    /// Largest slack among the checks.
    pub fn max_slack(&self) -> f64 {
        self.audit.iter().map(|c| c.slack).fold(0.0, f64::max)
    }

    /// Hard error carrying every operand when a check fails.
    pub fn require_pass(&self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let dump: Vec<String> = self
            .failures()
            .iter()
            .map(|c| format!("({}) lhs={:e} rhs={:e} slack={:e}", c.id.label(), c.lhs, c.rhs, c.slack))
            .collect();
        Err(Error::AuditFailed(format!(
            "{} at mu={} lambda={} beta={} V={} (Xi'={:e} Xi={:e} Xi''={:e} Xi_max={:e} rho''={:e})",
            dump.join("; "),
            self.params.mu,
            self.params.lambda,
            self.params.beta,
            self.params.volume,
            self.xi_prime,
            self.xi,
            self.xi_dprime,
            self.xi_max,
            self.rho_dprime
        )))
    }
}

/// Everything computed for one parameter point, kept for reuse by the
/// order-parameter routines.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub params: GasParams,
    pub resolved: Resolved,
    pub spectrum: FullSpectrum,
    pub basis_prime: FockBasis,
    pub expansion: SymbolExpansion,
    pub lower: SubstitutedPartition,
    pub upper: SubstitutedPartition,
    pub growth_steps: usize,
}

impl Ensemble {
    /// Diagonalize and integrate, enlarging the zero-mode cap and the radius
    /// until the tail and edge diagnostics are below tolerance.
    pub fn compute(params: &GasParams, spec: &ModelSpec, exec: Execution) -> Result<Self> {
        let mut resolved = resolve(params, spec)?;
        let mut steps = 0;
        loop {
            let basis = FockBasis::build(&params.modes, resolved.truncation)?;
            let basis_prime = basis.primed()?;
            let spectrum = diagonalize_full(params, &basis, true, exec)?;
            let tail = spectrum.zero_mode_tail()?;
            let expansion = SymbolExpansion::new(params, &basis_prime)?;
            let lower = substituted_from(&expansion, &resolved.grid, SymbolKind::Lower, exec)?;
            let upper = substituted_from(&expansion, &resolved.grid, SymbolKind::Upper, exec)?;
            let edge = lower.edge_ratio.max(upper.edge_ratio);
            let adaptive = spec.zero_mode_max.is_none() && spec.quadrature.radius.is_none();
            if adaptive && (tail > TAIL_TOL || edge > EDGE_TOL) && steps < MAX_GROWTH {
                resolved = grown(params, spec, &resolved)?;
                steps += 1;
                continue;
            }
            if tail > TAIL_TOL {
                warn!("zero-mode population {tail:e} at the occupation cap");
            }
            return Ok(Self {
                params: params.clone(),
                resolved,
                spectrum,
                basis_prime,
                expansion,
                lower,
                upper,
                growth_steps: steps,
            });
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.resolved.grid
    }

    fn shifted(&self, mu: f64, kind: SymbolKind, exec: Execution) -> Result<SubstitutedPartition> {
        let p = self.params.with_mu(mu);
        partition_substituted(&p, &self.basis_prime, self.grid(), kind, exec)
    }

    /// `rho'' = (beta V)^-1 d ln Xi'' / d mu` by a centered difference.
    pub fn rho_dprime(&self, exec: Execution) -> Result<f64> {
        let h = DENSITY_STEP;
        let plus = self.shifted(self.params.mu + h, SymbolKind::Upper, exec)?;
        let minus = self.shifted(self.params.mu - h, SymbolKind::Upper, exec)?;
        Ok((plus.ln_value - minus.ln_value) / (2.0 * h * self.params.beta * self.params.volume))
    }

    pub fn report(&self, exec: Execution) -> Result<EnsembleReport> {
        let p = &self.params;
        let bv = p.beta * p.volume;
        let tol = self.resolved.tol_quad;
        let radius = self.grid().radius();
        let max_lower = max_search_with(&self.expansion, p, SymbolKind::Lower, radius)?;
        let max_upper = max_search_with(&self.expansion, p, SymbolKind::Upper, radius)?;
        let shifted = self.shifted(p.mu + 2.0 * p.phi / p.volume, SymbolKind::Lower, exec)?;
        let rho = self.rho_dprime(exec)?;
        let xi = self.spectrum.partition();
        let xi_prime = self.lower.value();
        let xi_dprime = self.upper.value();
        let factor = (p.beta * (p.mu.abs() + p.phi / p.volume)).exp();
        let audit = vec![
            AuditCheck::new(CheckId::JensenLower, xi_prime, xi, tol),
            AuditCheck::new(CheckId::UpperSymbolBound, xi, xi_dprime, tol),
            AuditCheck::new(CheckId::ShiftedLower, xi_dprime, shifted.value() * factor, tol),
            AuditCheck::new(CheckId::SinglePointLower, max_lower.value(), xi, tol),
            AuditCheck::new(
                CheckId::SinglePointUpper,
                xi_dprime,
                2.0 * (p.volume * rho + 1.0) * max_upper.value(),
                tol,
            ),
        ];
        Ok(EnsembleReport {
            params: p.clone(),
            truncation: self.resolved.truncation,
            radius,
            radial_nodes: self.grid().radial_len(),
            angular_nodes: self.grid().angular_len(),
            tol_quad: tol,
            xi,
            xi_prime,
            xi_dprime,
            xi_max: max_lower.value(),
            ln_xi: self.spectrum.ln_partition,
            ln_xi_prime: self.lower.ln_value,
            ln_xi_dprime: self.upper.ln_value,
            ln_xi_max: max_lower.ln_value,
            p: self.spectrum.ln_partition / bv,
            p_prime: self.lower.ln_value / bv,
            p_dprime: self.upper.ln_value / bv,
            p_max: max_lower.pressure,
            z_max: max_lower.z_max,
            xi_max_upper: max_upper.value(),
            z_max_upper: max_upper.z_max,
            xi_prime_shifted: shifted.value(),
            rho_dprime: rho,
            audit,
            diagnostics: Diagnostics {
                zero_mode_tail: self.spectrum.zero_mode_tail()?,
                edge_ratio: self.lower.edge_ratio.max(self.upper.edge_ratio),
                gaussian_mass: self.grid().gaussian_mass(),
                growth_steps: self.growth_steps,
                max_degenerate: max_lower.degenerate || max_upper.degenerate,
            },
        })
    }
}

/// Compute all four partition functions at one point and audit the chain.
pub fn audit_chain(params: &GasParams, spec: &ModelSpec, exec: Execution) -> Result<EnsembleReport> {
    Ensemble::compute(params, spec, exec)?.report(exec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub volume: f64,
    pub p: f64,
    pub p_max: f64,
    pub p_prime: f64,
    pub p_dprime: f64,
    /// `p - p_max`.
    pub gap_max: f64,
    /// `p'' - p'`.
    pub gap_substituted: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapTrend {
    pub rows: Vec<GapRow>,
    pub gap_max_decreasing: bool,
    pub gap_substituted_decreasing: bool,
}

/// Pressure gaps over a family of parameter points ordered by volume.
pub fn pressure_gap_trend(family: &[GasParams], spec: &ModelSpec, exec: Execution) -> Result<GapTrend> {
    let reports = exec.map(family, |p| audit_chain(p, spec, Execution::Sequential));
    let mut rows = Vec::with_capacity(family.len());
    for r in reports {
        let r = r?;
        rows.push(GapRow {
            volume: r.params.volume,
            p: r.p,
            p_max: r.p_max,
            p_prime: r.p_prime,
            p_dprime: r.p_dprime,
            gap_max: r.p - r.p_max,
            gap_substituted: r.p_dprime - r.p_prime,
        });
    }
    let dec = |f: fn(&GapRow) -> f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]));
    Ok(GapTrend {
        gap_max_decreasing: dec(|r| r.gap_max),
        gap_substituted_decreasing: dec(|r| r.gap_substituted),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeSet;
    use crate::gas::Interaction;

    fn free_mode(mu: f64, lambda: f64, beta: f64) -> GasParams {
        GasParams::new(ModeSet::zero_only(1.0).unwrap(), Interaction::none(), 0.0, mu, lambda, beta).unwrap()
    }

    #[test]
    fn geometric_series_oracle() {
        let p = free_mode(-1.0, 0.0, 1.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(60)).unwrap();
        let xi = partition_full(&p, &b).unwrap();
        let exact = 1.0 / (1.0 - (-1f64).exp());
        assert!((xi - exact).abs() < 1e-12, "{xi}");
        assert!((xi - 1.581977).abs() < 1e-6);
    }

    #[test]
    fn zero_hamiltonian_trace_is_dimension() {
        let p = free_mode(0.0, 0.0, 1.0);
        let b = FockBasis::build(&p.modes, Truncation::uniform(7)).unwrap();
        assert!((partition_full(&p, &b).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn interacting_single_mode_direct_sum() {
        let (g, v, mu, beta) = (0.7, 2.0, 0.4, 1.3);
        let p = GasParams::new(
            ModeSet::zero_only(v).unwrap(),
            Interaction::Contact { g },
            g,
            mu,
            0.0,
            beta,
        )
        .unwrap();
        let b = FockBasis::build(&p.modes, Truncation::uniform(30)).unwrap();
        let exact: f64 = (0..=30)
            .map(|n| {
                let n = n as f64;
                (-beta * (-mu * n + g * n * (n - 1.0) / (2.0 * v))).exp()
            })
            .sum();
        let xi = partition_full(&p, &b).unwrap();
        assert!((xi - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn substituted_gaussian_oracles() {
        let p = free_mode(-1.0, 0.0, 1.0);
        let bp = FockBasis::build_primed(&p.modes, Truncation::uniform(1)).unwrap();
        let grid = RadialGrid::new(8.0, 200, 64).unwrap();
        let lower = partition_substituted(&p, &bp, &grid, SymbolKind::Lower, Execution::Sequential).unwrap();
        let upper = partition_substituted(&p, &bp, &grid, SymbolKind::Upper, Execution::Sequential).unwrap();
        assert!((lower.value() - 1.0).abs() < 1e-10);
        assert!((upper.value() - std::f64::consts::E).abs() < 1e-9);
        assert_eq!(lower.ln_traces.len(), grid.len());
    }

    #[test]
    fn small_field_continuity() {
        let p = free_mode(-0.8, 0.0, 1.0);
        let bp = FockBasis::build_primed(&p.modes, Truncation::uniform(1)).unwrap();
        let grid = RadialGrid::new(9.0, 200, 64).unwrap();
        let a = partition_substituted(&p, &bp, &grid, SymbolKind::Lower, Execution::Sequential).unwrap();
        let pl = p.with_lambda(1e-6);
        let b = partition_substituted(&pl, &bp, &grid, SymbolKind::Lower, Execution::Sequential).unwrap();
        assert!(((a.value() - b.value()) / a.value()).abs() < 1e-4);
    }

    #[test]
    fn max_search_scalar_oracles() {
        let p = free_mode(-1.5, 0.0, 1.0);
        let bp = FockBasis::build_primed(&p.modes, Truncation::uniform(1)).unwrap();
        let m = p_max_search(&p, &bp, SymbolKind::Lower, 8.0).unwrap();
        assert_eq!(m.z_max.re, 0.0);
        assert!(m.ln_value.abs() < 1e-14);
        // exponent -beta(-mu x^2 + 2 sqrt(V) lambda x) peaks at x = sqrt(V) lambda / mu
        let v = 2.0;
        let pl = GasParams::new(ModeSet::zero_only(v).unwrap(), Interaction::none(), 0.0, -1.5, 0.6, 1.0).unwrap();
        let m = p_max_search(&pl, &bp, SymbolKind::Lower, 8.0).unwrap();
        let x = v.sqrt() * 0.6 / -1.5;
        assert!((m.z_max.re - x).abs() < 1e-6, "{} vs {x}", m.z_max.re);
        assert!(!m.degenerate);
    }

    #[test]
    fn single_mode_chain() {
        let p = free_mode(-1.0, 0.0, 1.0);
        let r = audit_chain(&p, &ModelSpec::new(1), Execution::Sequential).unwrap();
        assert!((r.xi_prime - 1.0).abs() < 1e-6);
        assert!((r.xi - 1.581977).abs() < 1e-6);
        assert!((r.xi_dprime - 2.718282).abs() < 1e-6);
        assert!(r.passed(), "{:?}", r.audit);
        assert!(r.diagnostics.zero_mode_tail < TAIL_TOL);
    }

    #[test]
    fn rejects_unstable_points() {
        let p = free_mode(0.1, 0.0, 1.0);
        assert!(audit_chain(&p, &ModelSpec::new(1), Execution::Sequential).is_err());
    }

    #[test]
    fn interacting_two_mode_chain() {
        let p = GasParams::new(
            ModeSet::new(vec![0, 1], 2.0).unwrap(),
            Interaction::Contact { g: 0.8 },
            0.8,
            0.2,
            0.3,
            1.5,
        )
        .unwrap();
        let r = audit_chain(&p, &ModelSpec::new(3), Execution::Parallel).unwrap();
        assert!(r.passed(), "{:?}", r.audit);
        assert!(r.xi_prime < r.xi && r.xi < r.xi_dprime);
        assert!(r.z_max.re <= 0.0);
    }

    #[test]
    fn field_sign_symmetry() {
        let p = GasParams::new(
            ModeSet::new(vec![0, 1], 1.5).unwrap(),
            Interaction::Contact { g: 0.5 },
            0.5,
            -0.3,
            0.4,
            1.0,
        )
        .unwrap();
        let b = FockBasis::build(&p.modes, Truncation::uniform(3).with_zero_mode(25)).unwrap();
        let a = partition_full(&p, &b).unwrap();
        let c = partition_full(&p.with_lambda(-0.4), &b).unwrap();
        assert!((a - c).abs() < 1e-10 * a);
    }

    #[test]
    fn free_gas_gaps_shrink() {
        let family: Vec<GasParams> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&v| GasParams::new(ModeSet::zero_only(v).unwrap(), Interaction::none(), 0.0, -1.0, 0.0, 1.0).unwrap())
            .collect();
        let t = pressure_gap_trend(&family, &ModelSpec::new(1), Execution::Sequential).unwrap();
        assert!(t.gap_max_decreasing && t.gap_substituted_decreasing);
        for (row, v) in t.rows.iter().zip([2.0, 4.0, 8.0]) {
            // p = -ln(1 - e^-1)/V, p_max = 0, p'' - p' = 1/V
            let p = -(1.0 - (-1f64).exp()).ln() / v;
            assert!((row.p - p).abs() < 1e-9);
            assert!((row.gap_substituted - 1.0 / v).abs() < 1e-8);
            assert!(row.gap_max >= 0.0 && row.gap_substituted >= 0.0);
        }
    }
}
