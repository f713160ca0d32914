//! End-to-end estimation on one data set.

use serde::{Deserialize, Serialize};

use crate::crw::{confidence_region, estimate_weights, ConfidenceRegion, CrwConfig, SearchMode};
use crate::error::{Error, Result};
use crate::model::{estimate_sigma, Alphabet, Weights};
use crate::multiscale::{statistic, IntervalSystem, QuantileTable, SystemKind};
use crate::source_dp::{confidence_band, decode_sources, estimate_signal, BandProjection, DecodedSources, LevelSet, SignalFit, COLLISION_TOL};
use crate::tuning::{mvt_select, sst_select, Loss, ThresholdGrid, SST_BOUND_ALPHA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaChoice {
    Known(f64),
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Quantile of the null table at level alpha.
    Alpha(f64),
    /// A fixed threshold.
    Q(f64),
    /// Smallest grid value with a nonempty region; `alpha` is the fallback.
    Mvt { grid: ThresholdGrid, alpha: f64 },
    /// Split-sample selection bounded by the 0.01 quantile.
    Sst { grid: ThresholdGrid, loss: Loss },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Beta(f64),
    Q(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub alphabet: Alphabet,
    pub m: usize,
    pub sigma: SigmaChoice,
    pub selector: Selector,
    pub beta: BetaChoice,
    pub lambda: f64,
    pub lambda_star: f64,
    pub system: SystemKind,
    pub min_len: usize,
    pub search: SearchMode,
    /// Run the source recovery after the weight region.
    pub estimate_sources: bool,
}

impl PipelineConfig {
    pub fn new(alphabet: Alphabet, m: usize, lambda: f64) -> Self {
        PipelineConfig {
            alphabet,
            m,
            sigma: SigmaChoice::Estimate,
            selector: Selector::Alpha(crate::tuning::DEFAULT_ALPHA),
            beta: BetaChoice::Beta(crate::tuning::DEFAULT_BETA),
            lambda,
            lambda_star: lambda,
            system: SystemKind::Dyadic,
            min_len: 1,
            search: SearchMode::BranchAndBound,
            estimate_sources: true,
        }
    }

    pub fn crw(&self) -> CrwConfig {
        CrwConfig {
            search: self.search,
            lambda_star: self.lambda_star,
            ..CrwConfig::new(self.alphabet.clone(), self.m, self.lambda)
        }
    }

    /// Whether a null quantile table is needed.
    pub fn needs_table(&self) -> bool {
        matches!(self.selector, Selector::Alpha(_) | Selector::Mvt { .. } | Selector::Sst { .. })
            || matches!(self.beta, BetaChoice::Beta(_))
    }

    pub fn validate(&self) -> Result<()> {
        self.crw().validate()?;
        if let SigmaChoice::Known(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
            }
        }
        let level = |name: &str, a: f64| {
            if a > 0.0 && a < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {a}")))
            }
        };
        match &self.selector {
            Selector::Alpha(a) | Selector::Mvt { alpha: a, .. } => level("alpha", *a)?,
            Selector::Q(q) if !q.is_finite() => {
                return Err(Error::InvalidArgument("threshold must be finite".into()))
            }
            _ => {}
        }
        match self.beta {
            BetaChoice::Beta(b) => level("beta", b)?,
            BetaChoice::Q(q) if !q.is_finite() => {
                return Err(Error::InvalidArgument("beta threshold must be finite".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// No candidate survived; the region is the whole simplex.
    EmptyRegion,
    /// No admissible signal on the level set of the estimated weights.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub selector: String,
    /// Grid values tried by the minimum-threshold rule.
    pub tried: Vec<f64>,
    /// Split-sample criterion per grid value.
    pub curve: Vec<(f64, f64)>,
    /// The selector found nothing and the fallback quantile was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub n: usize,
    pub sigma: f64,
    pub sigma_estimated: bool,
    pub q: f64,
    pub q_beta: f64,
    pub selection: SelectionInfo,
    pub region: ConfidenceRegion,
    pub weights: Option<Weights>,
    pub fit: Option<SignalFit>,
    pub sources: Option<DecodedSources>,
    pub band: Option<BandProjection>,
    /// Multiscale statistic of the fitted signal; at most `q_beta`.
    pub certified_statistic: Option<f64>,
    pub status: Status,
}

fn need<'a>(table: Option<&'a QuantileTable>, what: &str) -> Result<&'a QuantileTable> {
    table.ok_or_else(|| Error::InvalidArgument(format!("{what} needs a null quantile table")))
}

/// Region, weights and, if configured, sources for `y`.
pub fn run(y: &[f64], config: &PipelineConfig, table: Option<&QuantileTable>) -> Result<PipelineResult> {
    config.validate()?;
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least two observations, got {n}")));
    }
    let system = IntervalSystem::new(n, config.system, config.min_len)?;
    if let Some(t) = table {
        if t.n != n || t.kind != system.kind() || t.min_len != system.min_len() {
            return Err(Error::InvalidArgument(format!(
                "quantile table for n = {} ({}, min_len {}) does not match the data (n = {n}, {}, min_len {})",
                t.n, t.kind, t.min_len, system.kind(), system.min_len()
            )));
        }
    }
    let (sigma, sigma_estimated) = match config.sigma {
        SigmaChoice::Known(s) => (s, false),
        SigmaChoice::Estimate => {
            let est = estimate_sigma(y)?;
            if est.degenerate {
                return Err(Error::DegenerateInput(
                    "all first differences vanish; supply sigma explicitly".into(),
                ));
            }
            (est.sigma, true)
        }
    };
    let crw = config.crw();
    let mut selection = SelectionInfo {
        selector: String::new(),
        tried: Vec::new(),
        curve: Vec::new(),
        fallback: false,
    };
    let (q, region) = match &config.selector {
        Selector::Alpha(a) => {
            selection.selector = format!("alpha {a}");
            let q = need(table, "alpha")?.quantile(*a);
            (q, confidence_region(y, sigma, q, &system, &crw)?)
        }
        Selector::Q(q) => {
            selection.selector = "fixed".into();
            (*q, confidence_region(y, sigma, *q, &system, &crw)?)
        }
        Selector::Mvt { grid, alpha } => {
            selection.selector = "mvt".into();
            match mvt_select(y, sigma, grid, &system, &crw) {
                Ok(sel) => {
                    selection.tried = sel.tried;
                    (sel.q, sel.region)
                }
                Err(Error::AllEmpty) => {
                    log::warn!("every grid threshold gives an empty region; using the alpha quantile");
                    selection.tried = grid.values().to_vec();
                    selection.fallback = true;
                    let q = need(table, "mvt fallback")?.quantile(*alpha);
                    (q, confidence_region(y, sigma, q, &system, &crw)?)
                }
                Err(e) => return Err(e),
            }
        }
        Selector::Sst { grid, loss } => {
            selection.selector = "sst".into();
            let q0 = need(table, "sst")?.quantile(SST_BOUND_ALPHA);
            match sst_select(y, sigma, *loss, grid, q0, &system, &crw) {
                Ok(sel) => {
                    selection.curve = sel.curve;
                    (sel.q, confidence_region(y, sigma, sel.q, &system, &crw)?)
                }
                Err(Error::AllEmpty) => {
                    log::warn!("split-sample selection found no nonempty region; using q0");
                    selection.fallback = true;
                    (q0, confidence_region(y, sigma, q0, &system, &crw)?)
                }
                Err(e) => return Err(e),
            }
        }
    };
    let q_beta = match config.beta {
        BetaChoice::Beta(b) => need(table, "beta")?.quantile(b),
        BetaChoice::Q(q) => q,
    };
    let mut result = PipelineResult {
        n,
        sigma,
        sigma_estimated,
        q,
        q_beta,
        selection,
        region,
        weights: None,
        fit: None,
        sources: None,
        band: None,
        certified_statistic: None,
        status: Status::Ok,
    };
    if result.region.empty {
        log::warn!("confidence region is empty at q = {q}");
        result.status = Status::EmptyRegion;
        return Ok(result);
    }
    let weights = estimate_weights(&result.region)?;
    result.weights = Some(weights.clone());
    if !config.estimate_sources {
        return Ok(result);
    }
    let levels = LevelSet::new(&weights, &config.alphabet, COLLISION_TOL)?;
    let fit = match estimate_signal(y, levels.levels(), sigma, q_beta, &system) {
        Ok(f) => f,
        Err(Error::Infeasible) => {
            log::warn!("no admissible signal at q_beta = {q_beta}; lower beta or check the model");
            result.status = Status::Infeasible;
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    result.certified_statistic = Some(statistic(y, &fit.g_hat, sigma, &system)?);
    result.sources = Some(decode_sources(&fit.g_hat, &levels)?);
    result.band = Some(confidence_band(
        y,
        &weights,
        sigma,
        q_beta,
        config.lambda,
        &config.alphabet,
        &fit.g_hat,
        &system,
    )?);
    result.fit = Some(fit);
    Ok(result)
}
