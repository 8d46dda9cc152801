//! Scaled log-moment generating functions of measure sequences, their
//! one-sided derivatives at zero, and exponential tail concentration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::ln_sum_exp;

/// A discrete probability measure indexed by a size parameter `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub n: u32,
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Measure {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.masses.len() || self.points.is_empty() {
            return Err(Error::Measure(format!("n = {}: points and masses differ in length or are empty", self.n)));
        }
        if self.n == 0 {
            return Err(Error::Measure("size parameter must be positive".into()));
        }
        if let Some(m) = self.masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::Measure(format!("n = {}: invalid mass {m}", self.n)));
        }
        if self.points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Measure(format!("n = {}: non-finite support point", self.n)));
        }
        let total: f64 = self.masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Measure(format!("n = {}: total mass {total} is not 1", self.n)));
        }
        Ok(())
    }

    /// `n^-1 ln sum_i p_i exp(x_i y)`, max-shifted.
    pub fn scaled_cgf(&self, y: f64) -> f64 {
        let terms = self
            .points
            .iter()
            .zip(&self.masses)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&x, &p)| p.ln() + x * y);
        ln_sum_exp(terms) / self.n as f64
    }

    /// Mass outside `[lo, hi]`.
    pub fn mass_outside(&self, lo: f64, hi: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.masses)
            .filter(|(&x, _)| x < lo || x > hi)
            .map(|(_, &p)| p)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasureSequence {
    pub entries: Vec<Measure>,
}

fn ln_factorials(n: u32) -> Vec<f64> {
    let mut out = vec![0.0; n as usize + 1];
    for k in 1..=n as usize {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Law of the sum of `n` independent `±1` variables with `P(+1) = p`.
fn coin_sum(n: u32, p: f64) -> Measure {
    let lf = ln_factorials(n);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let logs: Vec<f64> = (0..=n)
        .map(|k| {
            let k_ = k as usize;
            lf[n as usize] - lf[k_] - lf[n as usize - k_] + k as f64 * lp + (n - k) as f64 * lq
        })
        .collect();
    let total = ln_sum_exp(logs.iter().copied());
    Measure {
        n,
        points: (0..=n).map(|k| 2.0 * k as f64 - n as f64).collect(),
        masses: logs.iter().map(|l| (l - total).exp()).collect(),
    }
}

impl MeasureSequence {
    pub fn new(entries: Vec<Measure>) -> Result<Self> {
        let s = Self { entries };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Measure("sequence is empty".into()));
        }
        for m in &self.entries {
            m.validate()?;
        }
        if self.entries.windows(2).any(|w| w[1].n <= w[0].n) {
            return Err(Error::Measure("sizes must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn fair_coins(ns: &[u32]) -> Result<Self> {
        Self::tilted_coins(ns, 0.0)
    }

    /// Sums of coins with `P(+1) = e^h / (2 cosh h)`, so `f(y) = ln cosh(y+h) - ln cosh h`.
    pub fn tilted_coins(ns: &[u32], h: f64) -> Result<Self> {
        let p = h.exp() / (2.0 * h.cosh());
        Self::new(ns.iter().map(|&n| coin_sum(n, p)).collect())
    }

    /// Half mass at `+n`, half at `-n`.
    pub fn two_point(ns: &[u32]) -> Result<Self> {
        Self::new(
            ns.iter()
                .map(|&n| Measure {
                    n,
                    points: vec![-(n as f64), n as f64],
                    masses: vec![0.5, 0.5],
                })
                .collect(),
        )
    }

    /// Unit mass at `n m0`.
    pub fn point_mass(ns: &[u32], m0: f64) -> Result<Self> {
        Self::new(
            ns.iter()
                .map(|&n| Measure {
                    n,
                    points: vec![n as f64 * m0],
                    masses: vec![1.0],
                })
                .collect(),
        )
    }

    /// `f + b/n` least-squares fit over the three largest sizes, at `y`.
    pub fn extrapolate(&self, y: f64) -> f64 {
        let tail = &self.entries[self.entries.len().saturating_sub(3)..];
        if tail.len() == 1 {
            return tail[0].scaled_cgf(y);
        }
        let xs: Vec<f64> = tail.iter().map(|m| 1.0 / m.n as f64).collect();
        let fs: Vec<f64> = tail.iter().map(|m| m.scaled_cgf(y)).collect();
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let mf = fs.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxf: f64 = xs.iter().zip(&fs).map(|(x, f)| (x - mx) * (f - mf)).sum();
        mf - sxf / sxx * mx
    }

    pub fn largest_n(&self) -> u32 {
        self.entries.last().map_or(0, |m| m.n)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateCurve {
    pub n: u32,
    pub values: Vec<f64>,
    pub convex: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateFunctionEstimate {
    pub y_grid: Vec<f64>,
    pub curves: Vec<RateCurve>,
    pub extrapolated: Vec<f64>,
    pub a_minus: f64,
    pub a_plus: f64,
    pub a_error: f64,
    pub quotients_monotone: bool,
}

fn convex_on(values: &[f64], ys: &[f64]) -> bool {
    values.windows(3).zip(ys.windows(3)).all(|(f, y)| {
        let (h1, h2) = (y[1] - y[0], y[2] - y[1]);
        let second = (f[2] - f[1]) / h2 - (f[1] - f[0]) / h1;
        second >= -1e-10
    })
}

/// Per-size curves on `y_grid` plus the extrapolated limit and one-sided
/// derivatives at zero.
pub fn rate_function(seq: &MeasureSequence, y_grid: &[f64], exec: Execution) -> Result<RateFunctionEstimate> {
    seq.validate()?;
    if y_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Measure("y grid must be strictly increasing".into()));
    }
    let curves = exec.map(&seq.entries, |m| {
        let values: Vec<f64> = y_grid.iter().map(|&y| m.scaled_cgf(y)).collect();
        RateCurve {
            n: m.n,
            convex: convex_on(&values, y_grid),
            values,
        }
    });
    if curves.iter().any(|c| c.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::Measure("scaled generating function overflowed".into()));
    }
    let extrapolated = exec.map(y_grid, |&y| seq.extrapolate(y));
    let d = one_sided_derivatives(seq, &default_steps(seq))?;
    Ok(RateFunctionEstimate {
        y_grid: y_grid.to_vec(),
        curves,
        extrapolated,
        a_minus: d.a_minus,
        a_plus: d.a_plus,
        a_error: d.error,
        quotients_monotone: d.monotone,
    })
}

/// `h0 [8, 4, 2, 1]` with `h0 = max(1e-3, 15 / n_largest)`.
pub fn default_steps(seq: &MeasureSequence) -> Vec<f64> {
    let h0 = (15.0 / seq.largest_n() as f64).max(1e-3);
    [8.0, 4.0, 2.0, 1.0].iter().map(|k| k * h0).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Derivatives {
    pub a_minus: f64,
    pub a_plus: f64,
    /// Spread of the last two extrapolants, larger of the two sides.
    pub error: f64,
    /// Difference quotients shrink toward zero from both sides.
    pub monotone: bool,
    pub plus_quotients: Vec<f64>,
    pub minus_quotients: Vec<f64>,
}

/// Value at 0 of the polynomial through `(h_i, q_i)`; returns the last two
/// diagonal entries of the Neville table.
fn neville_at_zero(h: &[f64], q: &[f64]) -> (f64, f64) {
    let mut p = q.to_vec();
    let n = h.len();
    let mut prev = p[n - 1];
    for level in 1..n {
        for i in 0..n - level {
            p[i] = (h[i + level] * p[i] - h[i] * p[i + 1]) / (h[i + level] - h[i]);
        }
        if level == n - 2 {
            prev = p[1];
        }
    }
    (p[0], prev)
}

/// `a_± = lim_{h -> 0+} (f(±h) - f(0)) / (±h)` on the extrapolated limit,
/// with Neville extrapolation of the quotients in `h`.
pub fn one_sided_derivatives(seq: &MeasureSequence, steps: &[f64]) -> Result<Derivatives> {
    if steps.is_empty() || steps.windows(2).any(|w| w[1] >= w[0]) || steps.iter().any(|&h| h <= 0.0) {
        return Err(Error::Measure("steps must be positive and strictly decreasing".into()));
    }
    let f0 = seq.extrapolate(0.0);
    let plus: Vec<f64> = steps.iter().map(|&h| (seq.extrapolate(h) - f0) / h).collect();
    let minus: Vec<f64> = steps.iter().map(|&h| (f0 - seq.extrapolate(-h)) / h).collect();
    let tol = 1e-9;
    let monotone = plus.windows(2).all(|w| w[1] <= w[0] + tol) && minus.windows(2).all(|w| w[1] >= w[0] - tol);
    if steps.len() == 1 {
        return Ok(Derivatives {
            a_minus: minus[0],
            a_plus: plus[0],
            error: f64::NAN,
            monotone,
            plus_quotients: plus,
            minus_quotients: minus,
        });
    }
    let (ap, ap_prev) = neville_at_zero(steps, &plus);
    let (am, am_prev) = neville_at_zero(steps, &minus);
    Ok(Derivatives {
        a_minus: am,
        a_plus: ap,
        error: (ap - ap_prev).abs().max((am - am_prev).abs()),
        monotone,
        plus_quotients: plus,
        minus_quotients: minus,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailRow {
    pub n: u32,
    pub tail: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub epsilon: f64,
    pub rows: Vec<TailRow>,
    /// Least-squares slope of `ln tail` against `n`; absent when every tail is 0.
    pub slope: Option<f64>,
    /// `exp(slope)`, or 0 when every tail vanishes.
    pub c_fit: f64,
}

impl ConcentrationReport {
    pub fn decaying(&self) -> bool {
        self.slope.is_none_or(|s| s < 0.0)
    }
}

/// Mass outside `[(a_- - eps) n, (a_+ + eps) n]` per size and its
/// exponential rate. Estimates with `a_-` above `a_+` by less than `eps`
/// are treated as the interval between them.
pub fn concentration_check(seq: &MeasureSequence, a_minus: f64, a_plus: f64, eps: f64) -> Result<ConcentrationReport> {
    seq.validate()?;
    if !(eps > 0.0) || a_minus > a_plus + eps {
        return Err(Error::Measure("need eps > 0 and a_minus <= a_plus".into()));
    }
    let (a_minus, a_plus) = (a_minus.min(a_plus), a_minus.max(a_plus));
    let rows: Vec<TailRow> = seq
        .entries
        .iter()
        .map(|m| {
            let n = m.n as f64;
            TailRow {
                n: m.n,
                tail: m.mass_outside((a_minus - eps) * n, (a_plus + eps) * n),
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.tail > 0.0)
        .map(|r| (r.n as f64, r.tail.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else if pts.is_empty() {
        None
    } else {
        // a single nonzero tail followed by zeros
        Some(f64::NEG_INFINITY)
    };
    Ok(ConcentrationReport {
        epsilon: eps,
        rows,
        c_fit: slope.map_or(0.0, f64::exp),
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns() -> Vec<u32> {
        (1..=10).map(|k| 20 * k).collect()
    }

    #[test]
    fn validation_rejects_bad_sequences() {
        let bad = Measure {
            n: 3,
            points: vec![0.0, 1.0],
            masses: vec![0.5, 0.4],
        };
        assert!(MeasureSequence::new(vec![bad]).is_err());
        let a = MeasureSequence::point_mass(&[5], 0.0).unwrap().entries[0].clone();
        assert!(MeasureSequence::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn fair_coins_give_log_cosh() {
        let seq = MeasureSequence::fair_coins(&ns()).unwrap();
        let ys: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.1).collect();
        let est = rate_function(&seq, &ys, Execution::Sequential).unwrap();
        for (y, f) in ys.iter().zip(&est.extrapolated) {
            assert!((f - y.cosh().ln()).abs() < 1e-10);
        }
        assert!(est.curves.iter().all(|c| c.convex));
        assert!(est.curves.iter().all(|c| c.values[10] == 0.0));
        assert!(est.a_plus.abs() < 1e-3 && est.a_minus.abs() < 1e-3);
        assert!(est.quotients_monotone);
    }

    #[test]
    fn point_mass_is_linear() {
        let seq = MeasureSequence::point_mass(&[10, 20, 40], 0.3).unwrap();
        let d = one_sided_derivatives(&seq, &default_steps(&seq)).unwrap();
        assert!((d.a_plus - 0.3).abs() < 1e-12 && (d.a_minus - 0.3).abs() < 1e-12);
        let c = concentration_check(&seq, 0.3, 0.3, 0.05).unwrap();
        assert!(c.rows.iter().all(|r| r.tail == 0.0));
        assert_eq!(c.c_fit, 0.0);
        assert!(c.decaying());
    }

    #[test]
    fn two_point_kink() {
        let seq = MeasureSequence::two_point(&[10, 20, 30, 40, 50]).unwrap();
        let d = one_sided_derivatives(&seq, &default_steps(&seq)).unwrap();
        assert!((d.a_plus - 1.0).abs() < 1e-3, "{}", d.a_plus);
        assert!((d.a_minus + 1.0).abs() < 1e-3, "{}", d.a_minus);
    }

    #[test]
    fn tilted_coins_mean() {
        let h = 0.5;
        let seq = MeasureSequence::tilted_coins(&ns(), h).unwrap();
        let d = one_sided_derivatives(&seq, &default_steps(&seq)).unwrap();
        assert!((d.a_plus - h.tanh()).abs() < 1e-4, "{}", d.a_plus);
        assert!((d.a_minus - h.tanh()).abs() < 1e-4, "{}", d.a_minus);
    }

    #[test]
    fn fair_coin_tails_decay() {
        let seq = MeasureSequence::fair_coins(&ns()).unwrap();
        let c = concentration_check(&seq, 0.0, 0.0, 0.1).unwrap();
        let crossed = concentration_check(&seq, 1e-7, -1e-7, 0.1).unwrap();
        assert_eq!(crossed.rows[0].tail, c.rows[0].tail);
        assert!(concentration_check(&seq, 0.5, -0.5, 0.1).is_err());
        let s = c.slope.unwrap();
        assert!(s < 0.0);
        assert!(c.c_fit <= (-0.005f64).exp());
        // exact binomial tail at n = 20: P(|S| > 2) = 1 - P(S in {-2, 0, 2})
        let central: f64 = [9u32, 10, 11]
            .iter()
            .map(|&k| {
                let lf = ln_factorials(20);
                (lf[20] - lf[k as usize] - lf[20 - k as usize] - 20.0 * 2f64.ln()).exp()
            })
            .sum();
        assert!((c.rows[0].tail - (1.0 - central)).abs() < 1e-14);
    }

    #[test]
    fn large_sizes_stay_finite() {
        // exp(x y) reaches e^1000 here
        let seq = MeasureSequence::fair_coins(&[1000]).unwrap();
        let v = seq.entries[0].scaled_cgf(1.0);
        assert!((v - 1f64.cosh().ln()).abs() < 1e-10);
    }
}
