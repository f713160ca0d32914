use std::path::{Path, PathBuf};

use serde::Serialize;

use slam_core::evalsim::{run_study, StudyConfig};
use slam_core::model::synthesize;
use slam_core::multiscale::{default_quantile_reps, quantile_table, simulate_quantiles, QuantileCache, QuantileTable};
use slam_core::pipeline::{self, BetaChoice, PipelineConfig, PipelineResult, SigmaChoice, Selector, Status};
use slam_core::presets::{preset, Preset};
use slam_core::tuning::{Loss, ThresholdGrid, DEFAULT_ALPHA, DEFAULT_BETA};
use slam_core::{Alphabet, Error, IntervalSystem, NoiseModel, Result, SourceSet, StepSignal, Weights};

use crate::{exit, io, CacheArgs, EstimateArgs, LossArg, QuantilesArgs, ScenarioArgs, SelectorArg, StudyArgs, SynthArgs, ThresholdArgs};

/// `gaussian`, `t:DF`, `chi2:DF` or `none`.
pub fn parse_noise(s: &str) -> Result<NoiseModel> {
    let df = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad degrees of freedom {v:?} in noise {s:?}")))
    };
    let noise = match s.split_once(':') {
        None if s == "gaussian" => NoiseModel::Gaussian,
        None if s == "none" => NoiseModel::None,
        Some(("t", v)) => NoiseModel::StudentT { df: df(v)? },
        Some(("chi2", v)) => NoiseModel::ChiSquared { df: df(v)? },
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown noise {s:?}; use gaussian, t:DF, chi2:DF or none"
            )))
        }
    };
    noise.validate()?;
    Ok(noise)
}

fn cache_of(args: &CacheArgs) -> Option<QuantileCache> {
    args.cache.as_ref().map(QuantileCache::new)
}

#[derive(Serialize)]
struct QuantileLine {
    alpha: f64,
    q: f64,
}

#[derive(Serialize)]
struct QuantilesReport {
    n: usize,
    system: String,
    min_len: usize,
    reps: usize,
    seed: u64,
    noise: NoiseModel,
    cache: String,
    path: Option<PathBuf>,
    quantiles: Vec<QuantileLine>,
}

pub fn quantiles(a: QuantilesArgs) -> Result<u8> {
    let noise = parse_noise(&a.noise)?;
    if noise == NoiseModel::None {
        return Err(Error::InvalidArgument("null quantiles need an error law".into()));
    }
    let system = IntervalSystem::new(a.n, a.system.into(), a.min_len)?;
    let reps = a.reps.unwrap_or_else(|| default_quantile_reps(a.n));
    let (table, cache, path) = match cache_of(&a.cache) {
        Some(c) => {
            let (t, status) = c.get_or_simulate(&system, reps, a.seed, noise)?;
            (t, format!("{status:?}").to_lowercase(), Some(c.path_for(&system, reps, &noise)))
        }
        None => {
            log::warn!("no cache directory given (--cache or SLAM_QUANTILE_CACHE); the table is not stored");
            (simulate_quantiles(&system, reps, a.seed, noise)?, "none".into(), None)
        }
    };
    let report = QuantilesReport {
        n: table.n,
        system: table.kind.to_string(),
        min_len: table.min_len,
        reps: table.reps,
        seed: table.seed,
        noise: table.noise,
        cache,
        path,
        quantiles: [0.01, 0.05, 0.1].iter().map(|&alpha| QuantileLine { alpha, q: table.quantile(alpha) }).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(0)
}

/// Selector and thresholds from the flags; `default` applies when no
/// selector is given.
fn apply_thresholds(config: &mut PipelineConfig, t: &ThresholdArgs, default: SelectorArg) -> Result<()> {
    let selector = t.selector.unwrap_or(default);
    if t.q.is_some() && selector != SelectorArg::Fixed {
        return Err(Error::InvalidArgument("--q sets a fixed threshold; add --selector fixed".into()));
    }
    let grid = || ThresholdGrid::range(t.grid_min, t.grid_max, t.grid_step);
    config.selector = match selector {
        SelectorArg::Fixed => match t.q {
            Some(q) => Selector::Q(q),
            None => Selector::Alpha(t.alpha.unwrap_or(DEFAULT_ALPHA)),
        },
        SelectorArg::Mvt => Selector::Mvt { grid: grid()?, alpha: t.alpha.unwrap_or(DEFAULT_ALPHA) },
        SelectorArg::Sst => {
            if t.alpha.is_some() {
                log::warn!("--alpha is ignored by the split-sample selector");
            }
            let loss = match t.loss {
                LossArg::L1 => Loss::L1,
                LossArg::L2 => Loss::L2Squared,
            };
            Selector::Sst { grid: grid()?, loss }
        }
    };
    config.beta = match t.q_beta {
        Some(q) => BetaChoice::Q(q),
        None => BetaChoice::Beta(t.beta.unwrap_or(DEFAULT_BETA)),
    };
    config.system = t.system.into();
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    input: &'a Path,
    seed: u64,
    quantile_reps: Option<usize>,
    config: &'a PipelineConfig,
    result: &'a PipelineResult,
}

pub fn estimate(a: EstimateArgs) -> Result<u8> {
    let y = io::read_observations(&a.input)?;
    let n = y.len();
    let mut config = PipelineConfig::new(Alphabet::new(a.alphabet.clone())?, a.m, a.lambda);
    config.lambda_star = a.lambda_star.unwrap_or(a.lambda);
    config.sigma = match a.sigma {
        Some(s) => SigmaChoice::Known(s),
        None => SigmaChoice::Estimate,
    };
    apply_thresholds(&mut config, &a.threshold, SelectorArg::Mvt)?;
    config.validate()?;
    let quantile_reps = config
        .needs_table()
        .then(|| a.threshold.quantile_reps.unwrap_or_else(|| default_quantile_reps(n)));
    let table: Option<QuantileTable> = match quantile_reps {
        Some(reps) => {
            let system = IntervalSystem::new(n, config.system, config.min_len)?;
            Some(quantile_table(cache_of(&a.cache).as_ref(), &system, reps, a.seed, NoiseModel::Gaussian)?)
        }
        None => None,
    };
    let res = pipeline::run(&y, &config, table.as_ref())?;

    io::create_dir(&a.out)?;
    let report = EstimateReport { input: &a.input, seed: a.seed, quantile_reps, config: &config, result: &res };
    io::write_json(&a.out.join("result.json"), &report)?;
    io::write_mixture_segments(&a.out.join("segments.csv"), &res)?;
    io::write_source_segments(&a.out.join("sources.csv"), &res)?;

    let weights = res.weights.as_ref().map(|w| w.as_slice().to_vec());
    println!("n = {n}, sigma = {}, q = {}, q_beta = {}", res.sigma, res.q, res.q_beta);
    println!("covering box: {:?}", res.region.covering_box);
    println!("weights: {weights:?}");
    if let Some(fit) = &res.fit {
        println!("jumps: {}", fit.k_hat);
    }
    Ok(match res.status {
        Status::Ok => 0,
        Status::Infeasible => {
            eprintln!("no admissible signal on the estimated level set; try a larger --beta threshold");
            exit::INFEASIBLE
        }
        Status::EmptyRegion => {
            eprintln!("the weight region is empty at q = {}; try a larger threshold", res.q);
            exit::EMPTY_REGION
        }
    })
}

/// Preset by name or from a JSON file, with overrides applied.
fn load_scenario(a: &ScenarioArgs) -> Result<(Preset, Vec<String>)> {
    let path = Path::new(&a.scenario);
    let mut p = if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: a.scenario.clone(), message: e.to_string() })?;
        serde_json::from_str::<Preset>(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", a.scenario)))?
    } else {
        preset(&a.scenario)?
    };
    let mut notes = Vec::new();
    if let Some(n) = a.n {
        notes.push(format!("n changed from {} to {n}", p.n));
        p = p.with_n(n);
    }
    if let Some(s) = a.sigma {
        notes.push(format!("sigma changed from {} to {s}", p.sigma));
        p = p.with_sigma(s);
    }
    if let Some(noise) = &a.noise {
        let noise = parse_noise(noise)?;
        notes.push(format!("noise changed from {} to {}", p.noise.tag(), noise.tag()));
        p = p.with_noise(noise);
    }
    Ok((p, notes))
}

pub fn study(a: StudyArgs) -> Result<u8> {
    let (p, mut notes) = load_scenario(&a.scenario)?;
    let scenario = p.scenario(a.scenario.seed)?;
    let lambda = a.lambda.unwrap_or(p.lambda);
    let mut config = StudyConfig::new(p.name.clone(), scenario, a.reps, lambda);
    apply_thresholds(&mut config.pipeline, &a.threshold, SelectorArg::Fixed)?;
    config.quantile_reps = a.threshold.quantile_reps;
    if let Some(r) = a.threshold.quantile_reps {
        notes.push(format!("quantile replications set to {r}"));
    }
    config.notes = notes;
    let (report, rows) = run_study(&config, cache_of(&a.cache).as_ref())?;
    io::create_dir(&a.out)?;
    io::write_json(&a.out.join("report.json"), &report)?;
    io::write_replicates(&a.out.join("replicates.csv"), &rows)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(0)
}

#[derive(Serialize)]
struct Truth<'a> {
    name: &'a str,
    seed: u64,
    sigma: f64,
    noise: NoiseModel,
    weights: &'a Weights,
    sources: &'a SourceSet,
    mixture: StepSignal,
}

pub fn synth(a: SynthArgs) -> Result<u8> {
    let (p, _) = load_scenario(&a.scenario)?;
    let scenario = p.scenario(a.scenario.seed)?;
    let y = synthesize(&scenario)?;
    io::write_observations(&a.out, &y)?;
    if let Some(path) = &a.truth {
        let truth = Truth {
            name: &p.name,
            seed: scenario.seed,
            sigma: scenario.sigma,
            noise: scenario.noise,
            weights: &scenario.weights,
            sources: &scenario.sources,
            mixture: scenario.mixture(),
        };
        io::write_json(path, &truth)?;
    }
    Ok(0)
}
