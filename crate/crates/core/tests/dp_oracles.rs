mod common;

use common::*;

use slam_core::model::{synthesize, Weights};
use slam_core::presets::bump;
use slam_core::source_dp::{confidence_band, decode_sources, estimate_signal, minimal_jumps, LevelSet, COLLISION_TOL};
use slam_core::{Error, IntervalSystem};

#[test]
fn dp_matches_exhaustive_search() {
    let mut rng = rng(21);
    let mut feasible = 0;
    for case in 0..150 {
        let (y, levels, sigma, q) = dp_instance(&mut rng);
        let system = IntervalSystem::full(y.len()).unwrap();
        let got = estimate_signal(&y, &levels, sigma, q, &system);
        match brute_dp(&y, &levels, sigma, q, &system) {
            None => assert_eq!(got.unwrap_err(), Error::Infeasible, "case {case}"),
            Some((k, loss)) => {
                feasible += 1;
                let fit = got.unwrap();
                assert_eq!(fit.k_hat, k, "case {case}");
                assert_eq!(fit.loss, loss, "case {case}");
                let g = fit.g_hat.to_values();
                assert_eq!(fit.g_hat.num_jumps(), k);
                assert!(g.iter().all(|v| levels.contains(v)));
                let sse: f64 = y.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
                assert_eq!(sse, loss);
                assert!(brute_statistic(&y, &g, sigma, &system).unwrap() <= q + 1e-12);
            }
        }
    }
    assert!(feasible > 50, "only {feasible} feasible instances");
}

#[test]
fn fewest_jumps_do_not_increase_with_the_threshold() {
    let mut rng = rng(22);
    for _ in 0..100 {
        let (y, levels, sigma, _) = dp_instance(&mut rng);
        let system = IntervalSystem::full(y.len()).unwrap();
        let mut last: Option<usize> = None;
        for q in [-0.5, 0.0, 0.5, 1.0, 2.0, 4.0] {
            if let Ok(k) = minimal_jumps(&y, &levels, sigma, q, &system) {
                if let Some(prev) = last {
                    assert!(k <= prev);
                }
                last = Some(k);
            } else {
                assert!(last.is_none(), "feasible at a smaller threshold only");
            }
        }
    }
}

#[test]
fn noiseless_band_covers_the_sources() {
    let p = bump(3).unwrap().with_n(200).with_sigma(1e-3);
    let sc = p.scenario(3).unwrap();
    let y = synthesize(&sc).unwrap();
    let system = IntervalSystem::dyadic(200).unwrap();
    let levels = LevelSet::new(&sc.weights, &sc.alphabet, COLLISION_TOL).unwrap();
    let fit = estimate_signal(&y, levels.levels(), sc.sigma, 1.5, &system).unwrap();
    assert_eq!(fit.k_hat, sc.mixture().num_jumps());
    let decoded = decode_sources(&fit.g_hat, &levels).unwrap();
    assert_eq!(decoded.sources, sc.sources);
    let band = confidence_band(&y, &sc.weights, sc.sigma, 1.5, p.lambda, &sc.alphabet, &fit.g_hat, &system).unwrap();
    assert!(band.covers(&sc.sources));
    assert!(!band.misfit());
}

#[test]
fn level_set_rejects_bad_weights() {
    assert!(Weights::new(vec![0.6, 0.4]).is_err());
    let w = Weights::new(vec![0.25, 0.75]).unwrap();
    let a = slam_core::Alphabet::range(2).unwrap();
    let ls = LevelSet::new(&w, &a, COLLISION_TOL).unwrap();
    assert_eq!(ls.levels(), &[0.0, 0.25, 0.75, 1.0]);
}
