//! Data-driven choice of the threshold of the weight region.

use serde::{Deserialize, Serialize};

use crate::crw::{confidence_region, estimate_weights, ConfidenceRegion, CrwConfig};
use crate::error::{Error, Result};
use crate::multiscale::IntervalSystem;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 0.1;

/// Level whose quantile bounds the split-sample search from above.
pub const SST_BOUND_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("threshold grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument(
                "threshold grid must be finite and strictly ascending".into(),
            ));
        }
        Ok(ThresholdGrid { values })
    }

    /// `lo, lo + step, ...` up to `hi`, rounded to 12 decimals.
    pub fn range(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidArgument(format!("bad grid {lo}..{hi} by {step}")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        let values = (0..=count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        ThresholdGrid::new(values)
    }

    /// `-1.0, -0.9, ..., 2.0`.
    pub fn standard() -> Self {
        ThresholdGrid::range(-1.0, 2.0, 0.1).expect("valid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for ThresholdGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ThresholdGrid::new(v)
    }
}

impl From<ThresholdGrid> for Vec<f64> {
    fn from(g: ThresholdGrid) -> Self {
        g.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvtSelection {
    pub q: f64,
    pub region: ConfidenceRegion,
    /// Grid values tried, in order.
    pub tried: Vec<f64>,
}

/// Smallest grid threshold with a nonempty region.
pub fn mvt_select(
    y: &[f64],
    sigma: f64,
    grid: &ThresholdGrid,
    system: &IntervalSystem,
    config: &CrwConfig,
) -> Result<MvtSelection> {
    let mut tried = Vec::new();
    for &q in grid.values() {
        tried.push(q);
        let region = confidence_region(y, sigma, q, system, config)?;
        if !region.empty {
            return Ok(MvtSelection { q, region, tried });
        }
    }
    Err(Error::AllEmpty)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    L1,
    L2Squared,
}

impl Loss {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| match self {
                Loss::L1 => (x - y).abs(),
                Loss::L2Squared => (x - y) * (x - y),
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SstSelection {
    pub q: f64,
    /// `(q, h(q))` for every grid value not above the bound.
    pub curve: Vec<(f64, f64)>,
    /// The last observation was dropped to make n even.
    pub trimmed: bool,
}

/// Odd and even half-samples `(y_1, y_3, ...)` and `(y_2, y_4, ...)`.
pub fn half_samples(y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let odd = y.iter().step_by(2).copied().collect();
    let even = y.iter().skip(1).step_by(2).copied().collect();
    (odd, even)
}

/// Weight estimate at `q`, `None` when the region is empty.
fn weights_at(y: &[f64], sigma: f64, q: f64, system: &IntervalSystem, config: &CrwConfig) -> Result<Option<Vec<f64>>> {
    let region = confidence_region(y, sigma, q, system, config)?;
    if region.empty {
        return Ok(None);
    }
    Ok(Some(estimate_weights(&region)?.as_slice().to_vec()))
}

/// Grid threshold not above `q0` minimizing the disagreement between the
/// full-sample estimate and the two half-sample estimates.
pub fn sst_select(
    y: &[f64],
    sigma: f64,
    loss: Loss,
    grid: &ThresholdGrid,
    q0: f64,
    system: &IntervalSystem,
    config: &CrwConfig,
) -> Result<SstSelection> {
    let trimmed = y.len() % 2 == 1;
    if trimmed {
        log::warn!("odd sample size {}; dropping the last observation", y.len());
    }
    let n = y.len() - y.len() % 2;
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    let y = &y[..n];
    let system = system.resized(n)?;
    let half_system = system.resized(n / 2)?;
    let (odd, even) = half_samples(y);
    let mut curve = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &q in grid.values().iter().filter(|&&q| q <= q0) {
        let full = weights_at(y, sigma, q, &system, config)?;
        let h = match full {
            None => f64::INFINITY,
            Some(w) => match (
                weights_at(&odd, sigma, q, &half_system, config)?,
                weights_at(&even, sigma, q, &half_system, config)?,
            ) {
                (Some(w1), Some(w2)) => 0.5 * (loss.eval(&w, &w1) + loss.eval(&w, &w2)),
                _ => f64::INFINITY,
            },
        };
        curve.push((q, h));
        if h.is_finite() && best.is_none_or(|(_, bh)| h < bh) {
            best = Some((q, h));
        }
    }
    match best {
        Some((q, _)) => Ok(SstSelection { q, curve, trimmed }),
        None => Err(Error::AllEmpty),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid() {
        let g = ThresholdGrid::standard();
        assert_eq!(g.values().len(), 31);
        assert_eq!(g.values()[0], -1.0);
        assert_eq!(g.values()[30], 2.0);
        assert_eq!(g.values()[13], 0.3);
    }

    #[test]
    fn grid_validation() {
        assert!(ThresholdGrid::new(vec![]).is_err());
        assert!(ThresholdGrid::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdGrid::new(vec![0.5]).is_ok());
    }

    #[test]
    fn half_sample_split() {
        let (a, b) = half_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a, vec![1.0, 3.0]);
        assert_eq!(b, vec![2.0, 4.0]);
    }

    #[test]
    fn losses() {
        assert!((Loss::L1.eval(&[0.1, 0.9], &[0.2, 0.8]) - 0.2).abs() < 1e-15);
        assert!((Loss::L2Squared.eval(&[0.0, 1.0], &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }
}
