//! Seeded random small-gas configurations for audits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fock::{ModeSet, C64};
use crate::gas::{GasParams, Interaction};
use crate::thermo::{zero_mode_scale, ModelSpec};

pub const DEFAULT_SEED: u64 = 2006;
/// Largest automatically chosen zero-mode cap a suite point may need.
pub const MAX_ZERO_CAP: f64 = 60.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuitePoint {
    pub params: GasParams,
    pub spec: ModelSpec,
}

/// Ranges the generator samples from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteRanges {
    pub beta: (f64, f64),
    pub mu: (f64, f64),
    pub lambda: (f64, f64),
    pub g: (f64, f64),
    pub volume: (f64, f64),
    pub n_max: (u32, u32),
}

impl Default for SuiteRanges {
    fn default() -> Self {
        Self {
            beta: (0.2, 4.0),
            mu: (-2.0, 0.3),
            lambda: (0.0, 0.8),
            g: (0.0, 1.0),
            volume: (1.0, 3.0),
            n_max: (1, 6),
        }
    }
}

fn mode_set(choice: usize, volume: f64) -> Result<ModeSet> {
    match choice {
        0 => ModeSet::zero_only(volume),
        1 => ModeSet::new(vec![0, 1], volume),
        _ => ModeSet::symmetric(1, volume),
    }
}

/// `count` stable configurations drawn with a ChaCha8 stream. Draws whose
/// zero mode is unbounded or would need a cap above [`MAX_ZERO_CAP`] are
/// redrawn, so the sequence depends only on the seed.
pub fn random_suite(seed: u64, count: usize, ranges: &SuiteRanges) -> Result<Vec<SuitePoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let choice = rng.random_range(0..3usize);
        let n_max = rng.random_range(ranges.n_max.0..=ranges.n_max.1);
        let beta = rng.random_range(ranges.beta.0..ranges.beta.1);
        let mu = rng.random_range(ranges.mu.0..ranges.mu.1);
        let lambda = rng.random_range(ranges.lambda.0..ranges.lambda.1);
        let g = rng.random_range(ranges.g.0..ranges.g.1);
        let volume = rng.random_range(ranges.volume.0..ranges.volume.1);
        let params = GasParams::new(
            mode_set(choice, volume)?,
            Interaction::Contact { g },
            g,
            mu,
            lambda,
            beta,
        )?;
        let Ok(t) = zero_mode_scale(&params) else {
            continue;
        };
        if t + 4.0 * t.sqrt() + 10.0 > MAX_ZERO_CAP {
            continue;
        }
        out.push(SuitePoint {
            params,
            spec: ModelSpec::new(n_max),
        });
    }
    Ok(out)
}

/// Suite points each paired with a random substitution value `|z| <= 3`.
pub fn random_points(seed: u64, count: usize) -> Result<Vec<(SuitePoint, C64)>> {
    let points = random_suite(seed, count, &SuiteRanges::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    Ok(points
        .into_iter()
        .map(|p| {
            let r = 3.0 * rng.random::<f64>().sqrt();
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            (p, C64::from_polar(r, th))
        })
        .collect())
}
