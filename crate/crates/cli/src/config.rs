//! Run configuration: a JSON file, flag overrides on top, then validation of
//! every field before any computation starts.

use std::fmt;
use std::path::{Path, PathBuf};

use cnumlab_core::gas::{GasParams, Interaction};
use cnumlab_core::magnet::SpinLattice;
use cnumlab_core::quadrature::QuadratureSettings;
use cnumlab_core::thermo::ModelSpec;
use cnumlab_core::ModeSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = cnumlab_core::suite::DEFAULT_SEED;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Audit,
    Sweep,
    Weights,
    QuasiAverage,
    Magnet,
    Griffiths,
    Pathological,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Audit => "audit",
            Experiment::Sweep => "sweep",
            Experiment::Weights => "weights",
            Experiment::QuasiAverage => "quasi-average",
            Experiment::Magnet => "magnet",
            Experiment::Griffiths => "griffiths",
            Experiment::Pathological => "pathological",
        }
    }

    fn uses_gas(self) -> bool {
        matches!(self, Experiment::Sweep | Experiment::Weights | Experiment::QuasiAverage)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gas parameters with the mode set spelled out as labels plus a volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasBlock {
    pub modes: Vec<i32>,
    pub volume: f64,
    pub interaction: Interaction,
    pub phi: f64,
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    pub beta: f64,
}

impl GasBlock {
    pub fn params(&self) -> cnumlab_core::Result<GasParams> {
        GasParams::new(
            ModeSet::new(self.modes.clone(), self.volume)?,
            self.interaction.clone(),
            self.phi,
            self.mu,
            self.lambda,
            self.beta,
        )
    }
}

/// Parameter lists; an empty list means "the base value only".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub field: Vec<f64>,
    #[serde(default)]
    pub volume: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationBlock {
    pub n_max: u32,
    #[serde(default)]
    pub zero_mode_max: Option<u32>,
}

impl Default for TruncationBlock {
    fn default() -> Self {
        Self {
            n_max: 4,
            zero_mode_max: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    FairCoins,
    TiltedCoins,
    TwoPoint,
    PointMass,
    /// Magnetization sums of chains built from the `lattice` block.
    Magnet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GriffithsBlock {
    pub family: Family,
    pub sizes: Vec<u32>,
    pub y_grid: Vec<f64>,
    /// Tilt for `tilted-coins`, location for `point-mass`.
    #[serde(default)]
    pub parameter: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub steps: Option<Vec<f64>>,
}

impl Default for GriffithsBlock {
    fn default() -> Self {
        Self {
            family: Family::FairCoins,
            sizes: (1..=10).map(|k| 20 * k).collect(),
            y_grid: (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect(),
            parameter: 0.0,
            epsilon: 0.1,
            steps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathologicalBlock {
    pub beta_lambda: f64,
}

impl Default for PathologicalBlock {
    fn default() -> Self {
        Self { beta_lambda: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub gas: Option<GasBlock>,
    #[serde(default)]
    pub lattice: Option<SpinLattice>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub truncation: TruncationBlock,
    #[serde(default)]
    pub quadrature: QuadratureSettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Size of the generated audit suite when no `gas` block is given.
    #[serde(default = "default_suite_size")]
    pub suite_size: usize,
    #[serde(default)]
    pub griffiths: Option<GriffithsBlock>,
    #[serde(default)]
    pub pathological: Option<PathologicalBlock>,
}

fn default_output() -> PathBuf {
    PathBuf::from("cnumlab-out")
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_suite_size() -> usize {
    20
}

/// Every offending field, one message each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} issue(s)):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// A point of a gas grid.
#[derive(Clone, Debug)]
pub struct GasPoint {
    pub params: GasParams,
    pub spec: ModelSpec,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            gas: None,
            lattice: None,
            grids: Grids::default(),
            truncation: TruncationBlock::default(),
            quadrature: QuadratureSettings::default(),
            output: default_output(),
            workers: None,
            seed: DEFAULT_SEED,
            suite_size: default_suite_size(),
            griffiths: None,
            pathological: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            issues: vec![format!("config: cannot read {}: {e}", path.display())],
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError {
            issues: vec![format!("config: {e}")],
        })
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            n_max: self.truncation.n_max,
            zero_mode_max: self.truncation.zero_mode_max,
            quadrature: self.quadrature,
        }
    }

    /// Fill in the blocks an experiment needs but the file left out.
    pub fn with_defaults(mut self) -> Self {
        match self.experiment {
            Experiment::Magnet if self.lattice.is_none() => self.lattice = Some(SpinLattice::chain(2)),
            Experiment::Griffiths if self.griffiths.is_none() => self.griffiths = Some(GriffithsBlock::default()),
            Experiment::Pathological => {
                if self.pathological.is_none() {
                    self.pathological = Some(PathologicalBlock::default());
                }
                if self.grids.volume.is_empty() {
                    self.grids.volume = vec![10.0, 100.0, 1000.0];
                }
            }
            _ => {}
        }
        self
    }

    /// Gas grid in fixed order: volume outermost, then beta, mu, lambda.
    pub fn gas_points(&self) -> cnumlab_core::Result<Vec<GasPoint>> {
        let Some(gas) = &self.gas else {
            return Ok(Vec::new());
        };
        let or_base = |list: &Vec<f64>, base: f64| if list.is_empty() { vec![base] } else { list.clone() };
        let spec = self.model_spec();
        let mut out = Vec::new();
        for v in or_base(&self.grids.volume, gas.volume) {
            for beta in or_base(&self.grids.beta, gas.beta) {
                for mu in or_base(&self.grids.mu, gas.mu) {
                    for lambda in or_base(&self.grids.lambda, gas.lambda) {
                        let block = GasBlock {
                            volume: v,
                            beta,
                            mu,
                            lambda,
                            ..gas.clone()
                        };
                        out.push(GasPoint {
                            params: block.params()?,
                            spec: spec.clone(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |field: &str, reason: String| issues.push(format!("{field}: {reason}"));

        for (name, list) in [
            ("grids.mu", &self.grids.mu),
            ("grids.lambda", &self.grids.lambda),
            ("grids.beta", &self.grids.beta),
            ("grids.field", &self.grids.field),
            ("grids.volume", &self.grids.volume),
        ] {
            if list.iter().any(|x| !x.is_finite()) {
                bad(name, "entries must be finite".into());
            }
        }
        if self.grids.beta.iter().any(|&b| b <= 0.0) {
            bad("grids.beta", "entries must be positive".into());
        }
        if self.grids.volume.iter().any(|&v| v <= 0.0) {
            bad("grids.volume", "entries must be positive".into());
        }
        if self.truncation.n_max == 0 {
            bad("truncation.n_max", "must be at least 1".into());
        }
        if self.truncation.zero_mode_max == Some(0) {
            bad("truncation.zero_mode_max", "must be at least 1".into());
        }
        let q = &self.quadrature;
        if q.radial_nodes == 0 {
            bad("quadrature.radial_nodes", "must be positive".into());
        }
        if q.angular_nodes == 0 || q.angular_nodes % 2 != 0 {
            bad("quadrature.angular_nodes", "must be positive and even".into());
        }
        if !(q.tol_quad > 0.0 && q.tol_quad < 1.0) {
            bad("quadrature.tol_quad", "must lie in (0, 1)".into());
        }
        if let Some(r) = q.radius {
            if !(r > 0.0 && r.is_finite()) {
                bad("quadrature.radius", "must be positive".into());
            }
        }
        if self.workers == Some(0) {
            bad("workers", "must be at least 1".into());
        }
        if self.output.as_os_str().is_empty() {
            bad("output", "must not be empty".into());
        }

        if self.experiment.uses_gas() && self.gas.is_none() {
            bad("gas", format!("required by `{}`", self.experiment));
        }
        if self.experiment == Experiment::Audit && self.gas.is_none() && self.suite_size == 0 {
            bad("suite_size", "must be positive when no gas block is given".into());
        }
        if let Some(gas) = &self.gas {
            if let Err(e) = gas.params() {
                bad("gas", e.to_string());
            } else if let Err(e) = self.gas_points() {
                bad("grids", e.to_string());
            }
        }
        if self.experiment == Experiment::QuasiAverage {
            if self.grids.lambda.windows(2).any(|w| w[1] >= w[0]) || self.grids.lambda.iter().any(|&l| l < 0.0) {
                bad("grids.lambda", "must be nonnegative and strictly decreasing for `quasi-average`".into());
            }
            if self.grids.volume.windows(2).any(|w| w[1] <= w[0]) {
                bad("grids.volume", "must be strictly increasing for `quasi-average`".into());
            }
        }

        let needs_lattice = self.experiment == Experiment::Magnet
            || (self.experiment == Experiment::Griffiths
                && self.griffiths.as_ref().is_some_and(|g| g.family == Family::Magnet));
        match &self.lattice {
            Some(l) => {
                let mut probe = l.clone();
                if let Some(g) = self.griffiths.as_ref().filter(|g| g.family == Family::Magnet) {
                    probe.length = g.sizes.iter().copied().max().unwrap_or(1);
                }
                if let Err(e) = probe.validate() {
                    bad("lattice", e.to_string());
                }
            }
            None if needs_lattice => bad("lattice", format!("required by `{}`", self.experiment)),
            None => {}
        }

        if self.experiment == Experiment::Griffiths {
            match &self.griffiths {
                None => bad("griffiths", "required by `griffiths`".into()),
                Some(g) => {
                    if g.sizes.is_empty() || g.sizes.windows(2).any(|w| w[1] <= w[0]) || g.sizes[0] == 0 {
                        bad("griffiths.sizes", "must be nonempty, positive and strictly increasing".into());
                    }
                    if g.y_grid.is_empty() || g.y_grid.iter().any(|y| !y.is_finite()) {
                        bad("griffiths.y_grid", "must be nonempty and finite".into());
                    }
                    if !(g.epsilon > 0.0 && g.epsilon.is_finite()) {
                        bad("griffiths.epsilon", "must be positive".into());
                    }
                    if g.family == Family::PointMass && !(-1.0..=1.0).contains(&g.parameter) {
                        bad("griffiths.parameter", "point mass must lie in [-1, 1]".into());
                    }
                    if let Some(steps) = &g.steps {
                        if steps.is_empty() || steps.iter().any(|&h| !(h > 0.0)) {
                            bad("griffiths.steps", "must be nonempty and positive".into());
                        }
                    }
                }
            }
        }
        if self.experiment == Experiment::Pathological {
            match &self.pathological {
                None => bad("pathological", "required by `pathological`".into()),
                Some(p) if !(p.beta_lambda >= 0.0 && p.beta_lambda.is_finite()) => {
                    bad("pathological.beta_lambda", "must be finite and nonnegative".into())
                }
                _ => {}
            }
            if self.grids.volume.is_empty() {
                bad("grids.volume", "required by `pathological`".into());
            }
        }
        if self.experiment == Experiment::Magnet && self.grids.field.is_empty() {
            bad("grids.field", "required by `magnet`".into());
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

/// Flag values that replace config entries when present.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Chemical potential grid (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Option<Vec<f64>>,
    /// Symmetry-breaking field grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Option<Vec<f64>>,
    /// Inverse temperature grid.
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Volume grid.
    #[arg(long = "V", value_delimiter = ',')]
    pub volume: Option<Vec<f64>>,
    /// Magnetic field grid.
    #[arg(long = "B", value_delimiter = ',', allow_hyphen_values = true)]
    pub field: Option<Vec<f64>>,
    #[arg(long)]
    pub n_max: Option<u32>,
    #[arg(long)]
    pub zero_mode_max: Option<u32>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub radial_nodes: Option<usize>,
    #[arg(long)]
    pub angular_nodes: Option<usize>,
    #[arg(long)]
    pub tol_quad: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads; `CNUMLAB_WORKERS` is used when absent.
    #[arg(long, env = "CNUMLAB_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub suite_size: Option<usize>,
    /// Chain length (sites per axis) of the spin lattice.
    #[arg(long)]
    pub sites: Option<u32>,
    #[arg(long)]
    pub dimension: Option<u32>,
    /// Twice the spin quantum number.
    #[arg(long)]
    pub twice_spin: Option<u32>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub beta_lambda: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, mut c: RunConfig) -> RunConfig {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut c.grids.mu, &self.mu);
        set(&mut c.grids.lambda, &self.lambda);
        set(&mut c.grids.beta, &self.beta);
        set(&mut c.grids.volume, &self.volume);
        set(&mut c.grids.field, &self.field);
        set(&mut c.truncation.n_max, &self.n_max);
        if self.zero_mode_max.is_some() {
            c.truncation.zero_mode_max = self.zero_mode_max;
        }
        if self.radius.is_some() {
            c.quadrature.radius = self.radius;
        }
        set(&mut c.quadrature.radial_nodes, &self.radial_nodes);
        set(&mut c.quadrature.angular_nodes, &self.angular_nodes);
        set(&mut c.quadrature.tol_quad, &self.tol_quad);
        set(&mut c.output, &self.output);
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        set(&mut c.seed, &self.seed);
        set(&mut c.suite_size, &self.suite_size);

        let lattice_flags = self.sites.is_some() || self.dimension.is_some() || self.twice_spin.is_some() || self.coupling.is_some();
        if lattice_flags {
            let l = c.lattice.get_or_insert_with(|| SpinLattice::chain(2));
            set(&mut l.length, &self.sites);
            set(&mut l.dimension, &self.dimension);
            set(&mut l.twice_spin, &self.twice_spin);
            set(&mut l.coupling, &self.coupling);
        }
        let griffiths_flags = self.family.is_some() || self.sizes.is_some() || self.y_grid.is_some() || self.epsilon.is_some();
        if griffiths_flags {
            let g = c.griffiths.get_or_insert_with(GriffithsBlock::default);
            set(&mut g.family, &self.family);
            set(&mut g.sizes, &self.sizes);
            set(&mut g.y_grid, &self.y_grid);
            set(&mut g.epsilon, &self.epsilon);
        }
        if let Some(bl) = self.beta_lambda {
            c.pathological.get_or_insert_with(PathologicalBlock::default).beta_lambda = bl;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas_config() -> RunConfig {
        let mut c = RunConfig::new(Experiment::Sweep);
        c.gas = Some(GasBlock {
            modes: vec![0, 1, -1],
            volume: 2.0,
            interaction: Interaction::Contact { g: 0.5 },
            phi: 0.5,
            mu: -0.5,
            lambda: 0.1,
            beta: 1.0,
        });
        c
    }

    #[test]
    fn json_round_trip_keeps_hash() {
        let c = gas_config();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn flags_win_over_file() {
        let c = gas_config();
        let o = Overrides {
            mu: Some(vec![-1.0, -0.2]),
            n_max: Some(2),
            ..Default::default()
        };
        let c = o.apply(c);
        assert_eq!(c.grids.mu, vec![-1.0, -0.2]);
        assert_eq!(c.truncation.n_max, 2);
        assert_eq!(c.gas_points().unwrap().len(), 2);
    }

    #[test]
    fn validation_lists_every_field() {
        let mut c = gas_config();
        c.grids.beta = vec![-1.0];
        c.quadrature.angular_nodes = 3;
        c.workers = Some(0);
        let err = c.validate().unwrap_err();
        for field in ["grids.beta", "quadrature.angular_nodes", "workers"] {
            assert!(err.issues.iter().any(|i| i.starts_with(field)), "{field} missing from {:?}", err.issues);
        }
    }

    #[test]
    fn missing_blocks_are_reported() {
        let c = RunConfig::new(Experiment::Weights);
        let err = c.validate().unwrap_err();
        assert!(err.issues.iter().any(|i| i.starts_with("gas")));
        let c = RunConfig::new(Experiment::Magnet).with_defaults();
        assert!(c.validate().unwrap_err().issues.iter().any(|i| i.starts_with("grids.field")));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"experiment": "audit", "bogus": 1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }
}
