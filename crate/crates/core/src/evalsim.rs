//! Replication studies and their metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{synthesize, NoiseModel, Scenario, SourceSet, StepSignal, Weights};
use crate::multiscale::{default_quantile_reps, quantile_table, IntervalSystem, QuantileCache, QuantileTable, MIN_QUANTILE_REPS};
use crate::pipeline::{self, PipelineConfig, SigmaChoice, Status};
use crate::rng::derive_seed;

pub use crate::crw::dist_bar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    pub scenario: Scenario,
    pub reps: usize,
    pub pipeline: PipelineConfig,
    /// Replicates of the null quantile simulation; `None` picks a default by n.
    pub quantile_reps: Option<usize>,
    /// Free-form remarks copied into the report, e.g. reductions in n or reps.
    pub notes: Vec<String>,
}

impl StudyConfig {
    /// Study of `scenario` with the noise level known and the given priors.
    pub fn new(name: impl Into<String>, scenario: Scenario, reps: usize, lambda: f64) -> Self {
        let m = scenario.weights.m();
        let mut pipeline = PipelineConfig::new(scenario.alphabet.clone(), m, lambda);
        pipeline.sigma = SigmaChoice::Known(scenario.sigma);
        StudyConfig {
            name: name.into(),
            scenario,
            reps,
            pipeline,
            quantile_reps: None,
            notes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("a study needs at least one replicate".into()));
        }
        if let Some(r) = self.quantile_reps {
            if r < MIN_QUANTILE_REPS {
                return Err(Error::InvalidArgument(format!(
                    "quantile simulation needs at least {MIN_QUANTILE_REPS} replicates, got {r}"
                )));
            }
        }
        self.scenario.validate()?;
        if self.pipeline.m != self.scenario.weights.m() || self.pipeline.alphabet != self.scenario.alphabet {
            return Err(Error::InvalidArgument(
                "the estimation model does not match the scenario".into(),
            ));
        }
        self.pipeline.validate()
    }

    /// Error law for the null quantiles: the scenario's, Gaussian when noiseless.
    pub fn null_noise(&self) -> NoiseModel {
        match self.scenario.noise {
            NoiseModel::None => NoiseModel::Gaussian,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub seed: u64,
    pub status: Status,
    /// Set when the replicate failed for another reason.
    pub error: Option<String>,
    pub sigma: f64,
    pub q: f64,
    pub q_beta: f64,
    pub weights: Option<Vec<f64>>,
    pub abs_error: Option<Vec<f64>>,
    /// Sup distance from the truth to the covering box.
    pub dist_bar: Option<f64>,
    pub region_covers: bool,
    pub covering_box_covers: bool,
    pub candidates: usize,
    pub miae: Option<Vec<f64>>,
    pub band_covers: Option<bool>,
    pub band_covers_source: Option<Vec<bool>>,
    pub k_hat: Option<usize>,
    pub k_true: usize,
    /// `max_i min_j |tau_i - tau_hat_j|` on the unit interval.
    pub cp_true_to_hat: Option<f64>,
    /// `max_j min_i |tau_i - tau_hat_j|` on the unit interval.
    pub cp_hat_to_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub noise: NoiseModel,
    pub true_weights: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub quantile_reps: usize,
    pub q: Option<f64>,
    pub q_beta: Option<f64>,
    /// Per component, over replicates with an estimate.
    pub mae: Option<Vec<f64>>,
    /// Per source, over replicates with recovered sources.
    pub miae: Option<Vec<f64>>,
    pub mean_dist_bar: Option<f64>,
    /// Empty regions count as covering.
    pub region_coverage: f64,
    pub covering_box_coverage: f64,
    /// Over replicates with a band.
    pub band_coverage: Option<f64>,
    pub band_coverage_per_source: Option<Vec<f64>>,
    pub k_true: usize,
    pub k_mean_offset: Option<f64>,
    pub k_median_offset: Option<f64>,
    pub k_exact_rate: Option<f64>,
    pub mean_cp_true_to_hat: Option<f64>,
    pub mean_cp_hat_to_true: Option<f64>,
    pub empty_region_count: usize,
    pub infeasible_count: usize,
    pub error_count: usize,
    pub notes: Vec<String>,
}

/// `sum_j |a_j - b_j| / n`, the integrated absolute error on the grid.
pub fn integrated_abs_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n
}

/// `max over a of min over b of |a - b|`, with the max over nothing as 0 and
/// the min over nothing as `empty`.
pub fn directed_distance(a: &[f64], b: &[f64], empty: f64) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| (x - y).abs()).fold(empty, f64::min))
        .fold(0.0, f64::max)
}

/// Change points of `g` as locations `x_j = (j - 1) / n`.
pub fn change_locations(g: &StepSignal) -> Vec<f64> {
    let n = g.n() as f64;
    g.change_points().into_iter().map(|j| (j - 1) as f64 / n).collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn column_means(rows: &[&Vec<f64>], width: usize) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return None;
    }
    Some((0..width).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64).collect())
}

fn replicate(
    index: usize,
    config: &StudyConfig,
    truth: &SourceSet,
    g_true: &StepSignal,
    table: &QuantileTable,
) -> ReplicateResult {
    let seed = derive_seed(config.scenario.seed, index as u64);
    let w = &config.scenario.weights;
    let m = w.m();
    let k_true = g_true.num_jumps();
    let mut out = ReplicateResult {
        index,
        seed,
        status: Status::Ok,
        error: None,
        sigma: f64::NAN,
        q: f64::NAN,
        q_beta: f64::NAN,
        weights: None,
        abs_error: None,
        dist_bar: None,
        region_covers: false,
        covering_box_covers: false,
        candidates: 0,
        miae: None,
        band_covers: None,
        band_covers_source: None,
        k_hat: None,
        k_true,
        cp_true_to_hat: None,
        cp_hat_to_true: None,
    };
    let run = synthesize(&config.scenario.with_seed(seed))
        .and_then(|y| pipeline::run(&y, &config.pipeline, Some(table)));
    let res = match run {
        Ok(r) => r,
        Err(e) => {
            log::warn!("replicate {index} failed: {e}");
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.status = res.status;
    out.sigma = res.sigma;
    out.q = res.q;
    out.q_beta = res.q_beta;
    out.region_covers = res.region.contains(w);
    out.covering_box_covers = res.region.covering_contains(w);
    out.candidates = res.region.candidate_count();
    out.dist_bar = Some(dist_bar(w, &res.region.covering_box));
    if let Some(wh) = &res.weights {
        out.abs_error = Some(wh.as_slice().iter().zip(w.as_slice()).map(|(a, b)| (a - b).abs()).collect());
        out.weights = Some(wh.as_slice().to_vec());
    }
    if let Some(src) = &res.sources {
        out.miae = Some(
            (0..m)
                .map(|r| integrated_abs_error(&src.sources.source_values(r), &truth.source_values(r)))
                .collect(),
        );
    }
    if let Some(band) = &res.band {
        let per: Vec<bool> = (0..m).map(|r| band.covers_source(truth, r)).collect();
        out.band_covers = Some(per.iter().all(|&b| b));
        out.band_covers_source = Some(per);
    }
    if let Some(fit) = &res.fit {
        out.k_hat = Some(fit.k_hat);
        let tau = change_locations(g_true);
        let tau_hat = change_locations(&fit.g_hat);
        out.cp_true_to_hat = Some(directed_distance(&tau, &tau_hat, 1.0));
        out.cp_hat_to_true = Some(directed_distance(&tau_hat, &tau, 1.0));
    }
    out
}

/// Aggregate replicate rows; independent of their order.
pub fn summarize(config: &StudyConfig, quantile_reps: usize, rows: &[ReplicateResult]) -> MetricsReport {
    let sc = &config.scenario;
    let m = sc.weights.m();
    let reps = rows.len();
    let rate = |c: usize, of: usize| c as f64 / of.max(1) as f64;
    let ok_rows: Vec<&ReplicateResult> = rows.iter().filter(|r| r.error.is_none()).collect();
    let abs: Vec<&Vec<f64>> = ok_rows.iter().filter_map(|r| r.abs_error.as_ref()).collect();
    let miae: Vec<&Vec<f64>> = ok_rows.iter().filter_map(|r| r.miae.as_ref()).collect();
    let bands: Vec<&Vec<bool>> = ok_rows.iter().filter_map(|r| r.band_covers_source.as_ref()).collect();
    let offsets: Vec<f64> = ok_rows
        .iter()
        .filter_map(|r| r.k_hat.map(|k| k as f64 - r.k_true as f64))
        .collect();
    let first_q = |f: fn(&ReplicateResult) -> f64| {
        ok_rows.iter().map(|r| f(r)).find(|v| v.is_finite())
    };
    MetricsReport {
        name: config.name.clone(),
        n: sc.n(),
        m,
        sigma: sc.sigma,
        noise: sc.noise,
        true_weights: sc.weights.as_slice().to_vec(),
        reps,
        seed: sc.seed,
        quantile_reps,
        q: first_q(|r| r.q),
        q_beta: first_q(|r| r.q_beta),
        mae: column_means(&abs, m),
        miae: column_means(&miae, m),
        mean_dist_bar: mean(ok_rows.iter().filter_map(|r| r.dist_bar)),
        region_coverage: rate(ok_rows.iter().filter(|r| r.region_covers).count(), reps),
        covering_box_coverage: rate(ok_rows.iter().filter(|r| r.covering_box_covers).count(), reps),
        band_coverage: (!bands.is_empty())
            .then(|| rate(bands.iter().filter(|b| b.iter().all(|&x| x)).count(), bands.len())),
        band_coverage_per_source: (!bands.is_empty()).then(|| {
            (0..m)
                .map(|r| rate(bands.iter().filter(|b| b[r]).count(), bands.len()))
                .collect()
        }),
        k_true: sc.mixture().num_jumps(),
        k_mean_offset: mean(offsets.iter().copied()),
        k_median_offset: median(offsets.clone()),
        k_exact_rate: (!offsets.is_empty())
            .then(|| rate(offsets.iter().filter(|&&d| d == 0.0).count(), offsets.len())),
        mean_cp_true_to_hat: mean(ok_rows.iter().filter_map(|r| r.cp_true_to_hat)),
        mean_cp_hat_to_true: mean(ok_rows.iter().filter_map(|r| r.cp_hat_to_true)),
        empty_region_count: ok_rows.iter().filter(|r| r.status == Status::EmptyRegion).count(),
        infeasible_count: ok_rows.iter().filter(|r| r.status == Status::Infeasible).count(),
        error_count: reps - ok_rows.len(),
        notes: config.notes.clone(),
    }
}

/// Run all replicates of a study. Replicate seeds derive from the scenario
/// seed; the null quantiles use the scenario's error law.
pub fn run_study(config: &StudyConfig, cache: Option<&QuantileCache>) -> Result<(MetricsReport, Vec<ReplicateResult>)> {
    config.validate()?;
    let n = config.scenario.n();
    let system = IntervalSystem::new(n, config.pipeline.system, config.pipeline.min_len)?;
    let quantile_reps = config.quantile_reps.unwrap_or_else(|| default_quantile_reps(n));
    let table = quantile_table(
        cache,
        &system,
        quantile_reps,
        derive_seed(config.scenario.seed, u64::MAX),
        config.null_noise(),
    )?;
    let truth = &config.scenario.sources;
    let g_true = config.scenario.mixture();
    let rows: Vec<ReplicateResult> = (0..config.reps)
        .into_par_iter()
        .map(|i| replicate(i, config, truth, &g_true, &table))
        .collect();
    Ok((summarize(config, quantile_reps, &rows), rows))
}

/// Column names of [`replicate_csv_row`].
pub const CSV_HEADER: &str = "index,seed,status,error,sigma,q,q_beta,weights,abs_error,dist_bar,\
region_covers,covering_box_covers,candidates,miae,band_covers,k_hat,k_true,cp_true_to_hat,cp_hat_to_true";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn joined(v: &Option<Vec<f64>>) -> String {
    v.as_ref()
        .map(|x| x.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
        .unwrap_or_default()
}

/// One flat record per replicate; vectors are joined with `;`.
pub fn replicate_csv_row(r: &ReplicateResult) -> Vec<String> {
    let status = match r.status {
        Status::Ok => "ok",
        Status::EmptyRegion => "empty_region",
        Status::Infeasible => "infeasible",
    };
    vec![
        r.index.to_string(),
        r.seed.to_string(),
        if r.error.is_some() { "error".into() } else { status.into() },
        r.error.clone().unwrap_or_default(),
        r.sigma.to_string(),
        r.q.to_string(),
        r.q_beta.to_string(),
        joined(&r.weights),
        joined(&r.abs_error),
        opt(&r.dist_bar),
        r.region_covers.to_string(),
        r.covering_box_covers.to_string(),
        r.candidates.to_string(),
        joined(&r.miae),
        opt(&r.band_covers),
        opt(&r.k_hat),
        r.k_true.to_string(),
        opt(&r.cp_true_to_hat),
        opt(&r.cp_hat_to_true),
    ]
}

/// Truth-side helper for callers that compare one fitted weight vector.
pub fn weight_abs_error(estimate: &Weights, truth: &Weights) -> Vec<f64> {
    estimate.as_slice().iter().zip(truth.as_slice()).map(|(a, b)| (a - b).abs()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Segment;

    #[test]
    fn integrated_error_fixture() {
        // |0-1| + |1-1| + |1-0| + |2-2| = 2 over n = 4
        assert_eq!(integrated_abs_error(&[0.0, 1.0, 1.0, 2.0], &[1.0, 1.0, 0.0, 2.0]), 0.5);
    }

    #[test]
    fn change_point_distances_fixture() {
        let g = StepSignal::new(
            10,
            vec![
                Segment { start: 1, end: 3, level: 0.0 },
                Segment { start: 4, end: 10, level: 1.0 },
            ],
        )
        .unwrap();
        assert_eq!(change_locations(&g), vec![0.3]);
        let tau = [0.3, 0.7];
        let tau_hat = [0.4];
        assert!((directed_distance(&tau, &tau_hat, 1.0) - 0.3).abs() < 1e-15);
        assert!((directed_distance(&tau_hat, &tau, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(directed_distance(&[], &tau, 1.0), 0.0);
        assert_eq!(directed_distance(&tau, &[], 1.0), 1.0);
    }

    #[test]
    fn dist_bar_fixture() {
        let w = Weights::new(vec![0.2, 0.8]).unwrap();
        assert!((dist_bar(&w, &[(0.1, 0.3), (0.7, 0.95)]) - 0.15).abs() < 1e-15);
        assert_eq!(dist_bar(&w, &[(0.2, 0.2), (0.8, 0.8)]), 0.0);
    }

    #[test]
    fn summary_fixture() {
        let p = crate::presets::bump(2).unwrap().with_n(40);
        let config = StudyConfig::new("fixture", p.scenario(1).unwrap(), 2, p.lambda);
        let base = ReplicateResult {
            index: 0,
            seed: 0,
            status: Status::Ok,
            error: None,
            sigma: 0.02,
            q: 1.0,
            q_beta: 1.0,
            weights: Some(vec![0.03, 0.97]),
            abs_error: Some(vec![0.01, 0.01]),
            dist_bar: Some(0.1),
            region_covers: true,
            covering_box_covers: true,
            candidates: 1,
            miae: Some(vec![0.0, 0.5]),
            band_covers: Some(true),
            band_covers_source: Some(vec![true, true]),
            k_hat: Some(2),
            k_true: 2,
            cp_true_to_hat: Some(0.0),
            cp_hat_to_true: Some(0.0),
        };
        let other = ReplicateResult {
            index: 1,
            status: Status::EmptyRegion,
            weights: None,
            abs_error: None,
            dist_bar: Some(0.3),
            covering_box_covers: false,
            miae: None,
            band_covers: None,
            band_covers_source: None,
            k_hat: None,
            cp_true_to_hat: None,
            cp_hat_to_true: None,
            ..base.clone()
        };
        let rep = summarize(&config, 100, &[base.clone(), other.clone()]);
        assert_eq!(rep, summarize(&config, 100, &[other, base]));
        assert_eq!(rep.mae, Some(vec![0.01, 0.01]));
        assert_eq!(rep.miae, Some(vec![0.0, 0.5]));
        assert!((rep.mean_dist_bar.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(rep.region_coverage, 1.0);
        assert_eq!(rep.covering_box_coverage, 0.5);
        assert_eq!(rep.band_coverage, Some(1.0));
        assert_eq!(rep.k_exact_rate, Some(1.0));
        assert_eq!(rep.empty_region_count, 1);
        assert_eq!(rep.k_true, 2);
    }
}
