//! Named scenarios.
//!
//! Layouts are stored on the unit interval and rasterized for any `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, NoiseModel, Scenario, SourceSet, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub alphabet: Alphabet,
    pub weights: Weights,
    /// Left endpoints of the constant pieces, starting at 0.
    pub taus: Vec<f64>,
    pub tuples: Vec<Vec<f64>>,
    pub n: usize,
    pub sigma: f64,
    pub noise: NoiseModel,
    /// Prior lower bound on the distance between jumps, as a fraction of n.
    pub lambda: f64,
}

impl Preset {
    pub fn m(&self) -> usize {
        self.weights.m()
    }

    pub fn sources(&self) -> Result<SourceSet> {
        SourceSet::from_breakpoints(self.n, &self.taus, &self.tuples, &self.alphabet)
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let sc = Scenario {
            sources: self.sources()?,
            weights: self.weights.clone(),
            alphabet: self.alphabet.clone(),
            sigma: self.sigma,
            noise: self.noise,
            seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "example1",
    "bump-m2",
    "bump-m3",
    "bump-m4",
    "bump-m5",
    "alphabet-k2",
    "alphabet-k3",
    "alphabet-k4",
    "ls411",
];

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "example1" => Ok(example1()),
        "ls411" => Ok(ls411()),
        _ => {
            if let Some(m) = name.strip_prefix("bump-m").and_then(|s| s.parse::<usize>().ok()) {
                return bump(m);
            }
            if let Some(k) = name.strip_prefix("alphabet-k").and_then(|s| s.parse::<usize>().ok()) {
                return alphabet_k(k);
            }
            Err(Error::InvalidArgument(format!(
                "unknown preset {name:?}; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    }
}

fn equal_taus(count: usize) -> Vec<f64> {
    (0..count).map(|s| s as f64 / count as f64).collect()
}

fn tuples(rows: &[[u8; 3]]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// Three sources on `{0, 1, 2}` with weights `(0.11, 0.29, 0.6)` and
/// fourteen pieces; the shortest pieces have length 0.05.
pub fn example1() -> Preset {
    let pieces: [([u8; 3], usize); 14] = [
        ([0, 0, 0], 2), ([1, 0, 0], 2), ([1, 1, 0], 1), ([0, 1, 0], 3), ([0, 1, 1], 1),
        ([0, 0, 1], 2), ([2, 0, 1], 1), ([2, 1, 1], 1), ([1, 2, 1], 2), ([0, 2, 2], 1),
        ([1, 1, 2], 1), ([2, 0, 2], 1), ([0, 1, 2], 1), ([1, 0, 1], 1),
    ];
    let mut taus = Vec::with_capacity(pieces.len());
    let mut at = 0;
    for (_, len) in &pieces {
        taus.push(at as f64 / 20.0);
        at += len;
    }
    let rows: Vec<[u8; 3]> = pieces.iter().map(|(t, _)| *t).collect();
    Preset {
        name: "example1".into(),
        alphabet: Alphabet::range(3).expect("valid"),
        weights: Weights::new(vec![0.11, 0.29, 0.6]).expect("valid"),
        taus,
        tuples: tuples(&rows),
        n: 7680,
        sigma: 0.22,
        noise: NoiseModel::Gaussian,
        lambda: 0.025,
    }
}

/// Bump sources `f^i = 1` on `[(i-1)/5, i/5)` for `m` in `2..=5`.
pub fn bump(m: usize) -> Result<Preset> {
    let w = match m {
        2 => vec![0.02, 0.98],
        3 => vec![0.02, 0.04, 0.94],
        4 => vec![0.04, 0.06, 0.12, 0.78],
        5 => vec![0.06, 0.08, 0.12, 0.16, 0.58],
        _ => return Err(Error::InvalidArgument(format!("bump presets exist for m in 2..=5, got {m}"))),
    };
    let tuples = (0..5)
        .map(|s| (0..m).map(|r| if r == s { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok(Preset {
        name: format!("bump-m{m}"),
        alphabet: Alphabet::range(2)?,
        weights: Weights::new(w)?,
        taus: equal_taus(5),
        tuples,
        n: 1000,
        sigma: 0.02,
        noise: NoiseModel::Gaussian,
        lambda: 0.025,
    })
}

/// Two sources on `{0, ..., k-1}`: the first cycles through the alphabet on
/// pieces of length 1/16, the second on pieces of length k/16.
pub fn alphabet_k(k: usize) -> Result<Preset> {
    if !(2..=4).contains(&k) {
        return Err(Error::InvalidArgument(format!("alphabet presets exist for k in 2..=4, got {k}")));
    }
    let tuples = (0..16)
        .map(|s| vec![(s % k) as f64, ((s / k) % k) as f64])
        .collect();
    Ok(Preset {
        name: format!("alphabet-k{k}"),
        alphabet: Alphabet::range(k)?,
        weights: Weights::new(vec![0.02, 0.98])?,
        taus: equal_taus(16),
        tuples,
        n: 1056,
        sigma: 0.05,
        noise: NoiseModel::Gaussian,
        lambda: 1.0 / 32.0,
    })
}

/// Copy-number style stand-in with weights `(0.2, 0.35, 0.45)` on
/// `{0, ..., 5}`, mostly at the diploid state `(2, 2, 2)`.
pub fn ls411() -> Preset {
    let rows = [
        [2, 2, 2], [1, 0, 0], [2, 2, 2], [0, 1, 0], [2, 2, 2],
        [0, 0, 1], [2, 2, 2], [3, 2, 2], [2, 2, 3], [2, 3, 2],
        [2, 2, 2], [1, 1, 1], [2, 2, 2], [2, 2, 4], [2, 1, 2],
        [2, 2, 2], [4, 2, 2], [2, 2, 1], [2, 2, 2], [2, 4, 2],
    ];
    Preset {
        name: "ls411".into(),
        alphabet: Alphabet::range(6).expect("valid"),
        weights: Weights::new(vec![0.2, 0.35, 0.45]).expect("valid"),
        taus: equal_taus(rows.len()),
        tuples: tuples(&rows),
        n: 7480,
        sigma: 0.21,
        noise: NoiseModel::Gaussian,
        lambda: 0.025,
    }
}
