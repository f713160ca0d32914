mod common;

use common::*;
use rand::Rng;

use slam_core::crw::{confidence_region, estimate_weights, CrwConfig};
use slam_core::model::synthesize;
use slam_core::multiscale::simulate_quantiles;
use slam_core::presets::example1;
use slam_core::tuning::{mvt_select, sst_select, Loss, ThresholdGrid, SST_BOUND_ALPHA};
use slam_core::{Error, IntervalSystem, NoiseModel};

#[test]
fn mvt_on_noiseless_data_takes_the_grid_minimum() {
    let p = example1().with_n(256);
    let g = p.sources().unwrap().mixture(&p.weights).to_values();
    let system = IntervalSystem::dyadic(256).unwrap();
    let cfg = CrwConfig::new(p.alphabet.clone(), 3, p.lambda);
    let grid = ThresholdGrid::standard();
    let sel = mvt_select(&g, 0.05, &grid, &system, &cfg).unwrap();
    assert_eq!(sel.q, -1.0);
    assert_eq!(sel.tried, vec![-1.0]);
    assert!(sel.region.contains(&p.weights));

    let single = ThresholdGrid::new(vec![0.7]).unwrap();
    assert_eq!(mvt_select(&g, 0.05, &single, &system, &cfg).unwrap().q, 0.7);
}

#[test]
fn mvt_certifies_emptiness_below_and_refines_downward() {
    let mut rng = rng(41);
    let grid = ThresholdGrid::range(-1.0, 2.0, 0.25).unwrap();
    let coarse = ThresholdGrid::range(0.0, 2.0, 0.5).unwrap();
    let mut found = 0;
    for _ in 0..40 {
        let m = rng.gen_range(2..=3);
        let inst = instance(&mut rng, 48, m);
        let cfg = CrwConfig::new(inst.alphabet.clone(), m, inst.lambda);
        match mvt_select(&inst.y, inst.sigma, &grid, &inst.system, &cfg) {
            Ok(sel) => {
                found += 1;
                assert!(!sel.region.empty);
                for &q in grid.values().iter().filter(|&&q| q < sel.q) {
                    assert!(confidence_region(&inst.y, inst.sigma, q, &inst.system, &cfg).unwrap().empty);
                }
                if let Ok(c) = mvt_select(&inst.y, inst.sigma, &coarse, &inst.system, &cfg) {
                    assert!(sel.q <= c.q);
                }
            }
            Err(e) => assert_eq!(e, Error::AllEmpty),
        }
    }
    assert!(found > 20);
}

#[test]
fn sst_with_identical_halves_compares_full_and_half_estimates() {
    let p = example1().with_n(128).with_sigma(0.02);
    let half = synthesize(&p.scenario(42).unwrap()).unwrap();
    let y: Vec<f64> = half.iter().flat_map(|&v| [v, v]).collect();
    let system = IntervalSystem::dyadic(256).unwrap();
    let half_system = IntervalSystem::dyadic(128).unwrap();
    let cfg = CrwConfig::new(p.alphabet.clone(), 3, p.lambda);
    let grid = ThresholdGrid::standard();
    let sel = sst_select(&y, 0.02, Loss::L1, &grid, 1.5, &system, &cfg).unwrap();
    assert!(!sel.trimmed);
    let estimate = |y: &[f64], system: &IntervalSystem, q: f64| {
        let region = confidence_region(y, 0.02, q, system, &cfg).unwrap();
        (!region.empty).then(|| estimate_weights(&region).unwrap().as_slice().to_vec())
    };
    let mut best = (f64::NAN, f64::INFINITY);
    for &(q, h) in &sel.curve {
        assert!(q <= 1.5);
        let want = match (estimate(&y, &system, q), estimate(&half, &half_system, q)) {
            (Some(a), Some(b)) => Loss::L1.eval(&a, &b),
            _ => f64::INFINITY,
        };
        assert_eq!(h, want, "q = {q}");
        if h < best.1 {
            best = (q, h);
        }
    }
    assert_eq!(sel.q, best.0);
}

// A single replicate's minimizer scatters over the whole grid, so the basin
// is checked on the loss curve averaged over replicates.
#[test]
fn sst_mean_curve_lands_in_the_reported_basin() {
    let p = example1().with_n(1280).with_sigma(0.05);
    let system = IntervalSystem::dyadic(1280).unwrap();
    let table = simulate_quantiles(&system, 500, 44, NoiseModel::Gaussian).unwrap();
    let q0 = table.quantile(SST_BOUND_ALPHA);
    let cfg = CrwConfig::new(p.alphabet.clone(), 3, p.lambda);
    let grid = ThresholdGrid::standard();
    let seeds = 1000..1024u64;
    let reps = (seeds.end - seeds.start) as f64;
    let mut mean: Vec<(f64, f64)> = Vec::new();
    for seed in seeds {
        let y = synthesize(&p.scenario(seed).unwrap()).unwrap();
        let sel = sst_select(&y, 0.05, Loss::L2Squared, &grid, q0, &system, &cfg).unwrap();
        assert!(sel.q <= q0);
        assert!(sel.curve.iter().all(|&(q, h)| q <= q0 && h >= 0.0));
        if mean.is_empty() {
            mean = sel.curve.iter().map(|&(q, _)| (q, 0.0)).collect();
        }
        assert_eq!(mean.len(), sel.curve.len());
        for (m, &(_, h)) in mean.iter_mut().zip(&sel.curve) {
            m.1 += h / reps;
        }
    }
    let (q_hat, _) = mean
        .iter()
        .copied()
        .filter(|(_, h)| h.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((0.1..=1.0).contains(&q_hat), "mean curve minimized at {q_hat}: {mean:?}");
}

#[test]
fn sst_trims_odd_samples() {
    let p = example1().with_n(129).with_sigma(0.02);
    let y = synthesize(&p.scenario(45).unwrap()).unwrap();
    let system = IntervalSystem::dyadic(129).unwrap();
    let cfg = CrwConfig::new(p.alphabet.clone(), 3, p.lambda);
    let sel = sst_select(&y, 0.02, Loss::L1, &ThresholdGrid::standard(), 1.0, &system, &cfg).unwrap();
    assert!(sel.trimmed);
    let again = sst_select(&y, 0.02, Loss::L1, &ThresholdGrid::standard(), 1.0, &system, &cfg).unwrap();
    assert_eq!(sel, again);
}
