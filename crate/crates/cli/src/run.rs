//! Orchestration: expand the config into parameter points, evaluate them on
//! the worker pool, and collect records in grid order.

use cnumlab_core::gas::GasParams;
use cnumlab_core::griffiths::{
    concentration_check, one_sided_derivatives, rate_function, ConcentrationReport, Derivatives, MeasureSequence,
    RateFunctionEstimate,
};
use cnumlab_core::magnet::{magnetization_distribution, sector_spectrum, MagnetReport, SpinLattice};
use cnumlab_core::order::{
    condensate_observables, pathological_weight, quasi_average_scan, tilt_identity_residual, weight_full,
    CondensateRecord, PathologicalReport, QuasiAverageTable,
};
use cnumlab_core::suite::random_suite;
use cnumlab_core::thermo::{Ensemble, EnsembleReport};
use cnumlab_core::{Error, Execution, C64};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Family, GasPoint, RunConfig};

/// Tolerance of the `m2 >= m^2` check.
const MOMENT_TOL: f64 = 1e-12;
/// Tolerance of the normalization check of the pathological weight.
const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub passed: usize,
    pub failed: usize,
}

impl AuditSummary {
    fn record(&mut self, ok: bool) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }

    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub report: EnsembleReport,
    /// Absent when the Cauchy-Schwarz check failed.
    pub condensate: Option<CondensateRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightRecord {
    pub params: GasParams,
    pub integral: f64,
    pub a0_direct: C64,
    pub a0_weight: C64,
    pub n0_direct: f64,
    pub n0_weight: f64,
    pub cauchy_schwarz: bool,
    /// Zero when `lambda = 0`.
    pub tilt_residual: f64,
    pub angular_variation: f64,
    /// `(|z|, density)` pairs.
    pub radial_marginal: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MagnetRecord {
    pub lattice: SpinLattice,
    pub report: MagnetReport,
    /// `-dg/dB` by a centered difference with step `1e-4`.
    pub m_from_g: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GriffithsRecord {
    pub estimate: RateFunctionEstimate,
    pub derivatives: Derivatives,
    pub concentration: ConcentrationReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathologicalRecord {
    pub report: PathologicalReport,
    /// Second moment of the untilted weight against `2 / V`.
    pub second_moment_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "kebab-case")]
pub enum Records {
    Audit(Vec<EnsembleReport>),
    Sweep(Vec<SweepRecord>),
    Weights(Vec<WeightRecord>),
    QuasiAverage(QuasiAverageTable),
    Magnet(Vec<MagnetRecord>),
    Griffiths(GriffithsRecord),
    Pathological(Vec<PathologicalRecord>),
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Records,
    pub audit: AuditSummary,
}

pub fn execution_for(config: &RunConfig) -> Execution {
    if config.workers == Some(1) || !Execution::parallel_available() {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Evaluate a validated config. Pure apart from the thread pool.
pub fn run(config: &RunConfig) -> cnumlab_core::Result<RunOutput> {
    let exec = execution_for(config);
    log::info!("running {} with {exec:?} execution", config.experiment);
    let output = with_pool(config.workers, || run_inner(config, exec))?;
    log::info!("{} audit checks passed, {} failed", output.audit.passed, output.audit.failed);
    Ok(output)
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(n) if n > 1 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("cannot build a pool of {n} workers ({e}); using the global pool");
                f()
            }
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<R: Send>(_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}

fn run_inner(config: &RunConfig, exec: Execution) -> cnumlab_core::Result<RunOutput> {
    let mut audit = AuditSummary::default();
    let records = match config.experiment {
        Experiment::Audit => {
            let points = audit_points(config)?;
            let reports = collect(exec.map(&points, |p| cnumlab_core::thermo::audit_chain(&p.params, &p.spec, exec)))?;
            for r in &reports {
                for c in &r.audit {
                    audit.record(c.pass);
                }
            }
            Records::Audit(reports)
        }
        Experiment::Sweep => {
            let points = config.gas_points()?;
            let rows = collect(exec.map(&points, |p| sweep_point(p, exec)))?;
            for r in &rows {
                for c in &r.report.audit {
                    audit.record(c.pass);
                }
                audit.record(r.condensate.is_some());
            }
            Records::Sweep(rows)
        }
        Experiment::Weights => {
            let points = config.gas_points()?;
            let rows = collect(exec.map(&points, |p| weight_point(p, exec)))?;
            for r in &rows {
                audit.record(r.cauchy_schwarz);
            }
            Records::Weights(rows)
        }
        Experiment::QuasiAverage => {
            let gas = config.gas.as_ref().expect("validated").params()?;
            let lambdas = if config.grids.lambda.is_empty() { vec![gas.lambda] } else { config.grids.lambda.clone() };
            let volumes = if config.grids.volume.is_empty() { vec![gas.volume] } else { config.grids.volume.clone() };
            let table = quasi_average_scan(&gas, &lambdas, &volumes, &config.model_spec(), exec)?;
            for (row_o, row_n) in table.order_param_sq.iter().zip(&table.n0_density) {
                for (o, n) in row_o.iter().zip(row_n) {
                    audit.record(*o <= n + 1e-10);
                }
            }
            Records::QuasiAverage(table)
        }
        Experiment::Magnet => {
            let rows = magnet_rows(config, exec)?;
            for r in &rows {
                audit.record(r.report.m2 >= r.report.m * r.report.m - MOMENT_TOL);
            }
            Records::Magnet(rows)
        }
        Experiment::Griffiths => {
            let rec = griffiths_record(config, exec)?;
            for c in &rec.estimate.curves {
                audit.record(c.convex);
            }
            Records::Griffiths(rec)
        }
        Experiment::Pathological => {
            let bl = config.pathological.as_ref().expect("validated").beta_lambda;
            let rows = collect(exec.map(&config.grids.volume, |&v| {
                pathological_weight(v, bl).map(|report| PathologicalRecord {
                    second_moment_bound: 2.0 / v,
                    report,
                })
            }))?;
            for r in &rows {
                audit.record((r.report.normalization_numeric - 1.0).abs() <= NORMALIZATION_TOL);
                audit.record(r.report.second_moment <= r.second_moment_bound);
            }
            Records::Pathological(rows)
        }
    };
    Ok(RunOutput { records, audit })
}

fn collect<T>(items: Vec<cnumlab_core::Result<T>>) -> cnumlab_core::Result<Vec<T>> {
    items.into_iter().collect()
}

/// The gas grid when a `gas` block is given, otherwise the seeded suite.
pub fn audit_points(config: &RunConfig) -> cnumlab_core::Result<Vec<GasPoint>> {
    if config.gas.is_some() {
        return config.gas_points();
    }
    let spec = config.model_spec();
    Ok(random_suite(config.seed, config.suite_size, &Default::default())?
        .into_iter()
        .map(|p| GasPoint {
            params: p.params,
            spec: cnumlab_core::thermo::ModelSpec {
                n_max: p.spec.n_max,
                ..spec.clone()
            },
        })
        .collect())
}

fn sweep_point(p: &GasPoint, exec: Execution) -> cnumlab_core::Result<SweepRecord> {
    let ensemble = Ensemble::compute(&p.params, &p.spec, exec)?;
    let report = ensemble.report(exec)?;
    let condensate = match condensate_observables(&ensemble, exec) {
        Ok(c) => Some(c),
        Err(Error::CauchySchwarz { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(SweepRecord { report, condensate })
}

fn weight_point(p: &GasPoint, exec: Execution) -> cnumlab_core::Result<WeightRecord> {
    let ensemble = Ensemble::compute(&p.params, &p.spec, exec)?;
    let w = weight_full(&ensemble.spectrum, &p.params, ensemble.grid(), exec)?;
    let (a0_direct, n0_direct, cauchy_schwarz) = match condensate_observables(&ensemble, exec) {
        Ok(c) => (c.a0_direct, c.n0_direct, true),
        Err(Error::CauchySchwarz { .. }) => {
            let d = cnumlab_core::order::direct_moments(&ensemble.spectrum)?;
            (d.a0, d.n0, false)
        }
        Err(e) => return Err(e),
    };
    let tilt_residual = if p.params.lambda == 0.0 {
        0.0
    } else {
        tilt_identity_residual(&p.params, &ensemble.basis_prime, ensemble.grid(), exec)?
    };
    Ok(WeightRecord {
        params: p.params.clone(),
        integral: w.integral(),
        a0_direct,
        a0_weight: w.mean_z(),
        n0_direct,
        n0_weight: w.mean_t_minus_one(),
        cauchy_schwarz,
        tilt_residual,
        angular_variation: w.angular_variation(),
        radial_marginal: w.radial_marginal(),
    })
}

fn magnet_rows(config: &RunConfig, exec: Execution) -> cnumlab_core::Result<Vec<MagnetRecord>> {
    let base = config.lattice.clone().expect("validated");
    let betas = if config.grids.beta.is_empty() { vec![base.beta] } else { config.grids.beta.clone() };
    let mut rows = Vec::new();
    for beta in betas {
        let lattice = SpinLattice { beta, ..base.clone() };
        let spectrum = sector_spectrum(&lattice, exec)?;
        for &b in &config.grids.field {
            rows.push(MagnetRecord {
                lattice: lattice.clone(),
                report: spectrum.at(b),
                m_from_g: -spectrum.dg_db(b, 1e-4),
            });
        }
    }
    Ok(rows)
}

pub fn measure_sequence(config: &RunConfig, exec: Execution) -> cnumlab_core::Result<MeasureSequence> {
    let g = config.griffiths.as_ref().expect("validated");
    match g.family {
        Family::FairCoins => MeasureSequence::fair_coins(&g.sizes),
        Family::TiltedCoins => MeasureSequence::tilted_coins(&g.sizes, g.parameter),
        Family::TwoPoint => MeasureSequence::two_point(&g.sizes),
        Family::PointMass => MeasureSequence::point_mass(&g.sizes, g.parameter),
        Family::Magnet => {
            let base = config.lattice.clone().expect("validated");
            let field = config.grids.field.first().copied().unwrap_or(0.0);
            let entries = g
                .sizes
                .iter()
                .map(|&n| magnetization_distribution(&SpinLattice { length: n, ..base.clone() }, field, exec))
                .collect::<cnumlab_core::Result<Vec<_>>>()?;
            MeasureSequence::new(entries)
        }
    }
}

fn griffiths_record(config: &RunConfig, exec: Execution) -> cnumlab_core::Result<GriffithsRecord> {
    let g = config.griffiths.as_ref().expect("validated");
    let seq = measure_sequence(config, exec)?;
    let estimate = rate_function(&seq, &g.y_grid, exec)?;
    let steps = g.steps.clone().unwrap_or_else(|| cnumlab_core::griffiths::default_steps(&seq));
    let derivatives = one_sided_derivatives(&seq, &steps)?;
    let concentration = concentration_check(&seq, derivatives.a_minus, derivatives.a_plus, g.epsilon)?;
    Ok(GriffithsRecord {
        estimate,
        derivatives,
        concentration,
    })
}
