#![allow(dead_code)]

//! Brute-force oracles and random instance generators shared by the
//! integration tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use slam_core::model::{Alphabet, SourceSegment, SourceSet, Weights};
use slam_core::multiscale::{IntervalSystem, SystemKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pen(len: usize, n: usize) -> f64 {
    (2.0 * ((n as f64 / len as f64).ln() + 1.0)).sqrt()
}

fn mean(y: &[f64], i: usize, j: usize) -> f64 {
    y[i - 1..j].iter().sum::<f64>() / (j - i + 1) as f64
}

/// Box of `[i, j]` computed from scratch.
pub fn brute_box(y: &[f64], sigma: f64, q: f64, i: usize, j: usize) -> (f64, f64) {
    let len = j - i + 1;
    let half = sigma * (q + pen(len, y.len())) / (len as f64).sqrt();
    let c = mean(y, i, j);
    (c - half, c + half)
}

/// Maximal constant runs of `g`, 1-based inclusive.
pub fn runs(g: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut out: Vec<(usize, usize, f64)> = Vec::new();
    for (k, &v) in g.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.2 == v => last.1 = k + 1,
            _ => out.push((k + 1, k + 1, v)),
        }
    }
    out
}

/// Triple loop over runs of `g` and system intervals inside them.
pub fn brute_statistic(y: &[f64], g: &[f64], sigma: f64, system: &IntervalSystem) -> Option<f64> {
    let n = y.len();
    let mut best: Option<f64> = None;
    for (s, e, level) in runs(g) {
        for i in s..=e {
            for j in i..=e {
                if !system.contains(i, j) {
                    continue;
                }
                let sum: f64 = y[i - 1..j].iter().map(|v| v - level).sum();
                let len = j - i + 1;
                let t = sum.abs() / (sigma * (len as f64).sqrt()) - pen(len, n);
                best = Some(best.map_or(t, |b: f64| b.max(t)));
            }
        }
    }
    best
}

/// `(max lower, min upper)` over system intervals inside `[i, j]`.
pub fn brute_envelope(y: &[f64], sigma: f64, q: f64, system: &IntervalSystem, i: usize, j: usize) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for u in i..=j {
        for v in u..=j {
            if system.contains(u, v) {
                let (l, h) = brute_box(y, sigma, q, u, v);
                lo = lo.max(l);
                hi = hi.min(h);
            }
        }
    }
    (lo, hi)
}

/// Literal pair definition: two system sub-intervals with disjoint boxes.
pub fn brute_nonconstant(y: &[f64], sigma: f64, q: f64, system: &IntervalSystem, i: usize, j: usize) -> bool {
    let mut boxes = Vec::new();
    for u in i..=j {
        for v in u..=j {
            if system.contains(u, v) {
                boxes.push(brute_box(y, sigma, q, u, v));
            }
        }
    }
    boxes
        .iter()
        .any(|a| boxes.iter().any(|b| a.1 < b.0 || b.1 < a.0))
}

/// Fewest jumps and least squared loss by enumerating every partition of
/// `1..=n`; per partition the levels are chosen by a chain search with
/// distinct neighbours. Feasibility is checked interval by interval.
pub fn brute_dp(y: &[f64], levels: &[f64], sigma: f64, q: f64, system: &IntervalSystem) -> Option<(usize, f64)> {
    let n = y.len();
    let admissible = |s: usize, e: usize, l: f64| {
        for i in s..=e {
            for j in i..=e {
                if system.contains(i, j) {
                    let sum: f64 = y[i - 1..j].iter().map(|v| v - l).sum();
                    let len = j - i + 1;
                    if sum.abs() / (sigma * (len as f64).sqrt()) - pen(len, n) > q {
                        return false;
                    }
                }
            }
        }
        true
    };
    let mut best: Option<(usize, f64)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut segs = Vec::new();
        let mut start = 1;
        for p in 1..n {
            if mask & (1 << (p - 1)) != 0 {
                segs.push((start, p));
                start = p + 1;
            }
        }
        segs.push((start, n));
        let k = segs.len() - 1;
        if let Some((bk, _)) = best {
            if k > bk {
                continue;
            }
        }
        // chain search: cost[l] of the best assignment ending in level l
        let mut cost: Vec<f64> = vec![0.0; levels.len()];
        let mut first = true;
        for &(s, e) in &segs {
            let seg_cost: Vec<f64> = levels
                .iter()
                .map(|&l| {
                    if admissible(s, e, l) {
                        y[s - 1..e].iter().map(|v| (v - l) * (v - l)).sum()
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            cost = if first {
                seg_cost
            } else {
                (0..levels.len())
                    .map(|l| {
                        let prev = (0..levels.len())
                            .filter(|&p| p != l)
                            .map(|p| cost[p])
                            .fold(f64::INFINITY, f64::min);
                        prev + seg_cost[l]
                    })
                    .collect()
            };
            first = false;
        }
        let loss = cost.iter().copied().fold(f64::INFINITY, f64::min);
        if loss.is_finite() {
            best = match best {
                Some((bk, bl)) if bk == k => Some((k, bl.min(loss))),
                Some((bk, _)) if bk < k => best,
                _ => Some((k, loss)),
            };
        }
    }
    best
}

/// Random piecewise layout of `n` points into pieces of length at least
/// `min_len`; returns the piece lengths.
pub fn random_lengths<R: Rng>(rng: &mut R, n: usize, pieces: usize, min_len: usize) -> Vec<usize> {
    assert!(pieces * min_len <= n);
    let mut lens = vec![min_len; pieces];
    for _ in 0..n - pieces * min_len {
        let k = rng.gen_range(0..pieces);
        lens[k] += 1;
    }
    lens
}

/// Random separable sources: the witness rows appear on some pieces and
/// neighbouring pieces carry different tuples.
pub fn random_sources<R: Rng>(rng: &mut R, n: usize, m: usize, alphabet: &Alphabet, pieces: usize, min_len: usize) -> SourceSet {
    assert!(pieces >= m);
    let levels = alphabet.levels();
    let witness: Vec<Vec<f64>> = (0..m)
        .map(|r| (0..m).map(|c| if c == r { levels[1] } else { levels[0] }).collect())
        .collect();
    loop {
        let mut tuples: Vec<Vec<f64>> = (0..pieces)
            .map(|_| (0..m).map(|_| *levels.choose(rng).unwrap()).collect())
            .collect();
        let mut slots: Vec<usize> = (0..pieces).collect();
        slots.shuffle(rng);
        for (r, &s) in slots.iter().take(m).enumerate() {
            tuples[s] = witness[r].clone();
        }
        if tuples.windows(2).any(|p| p[0] == p[1]) {
            continue;
        }
        let lens = random_lengths(rng, n, pieces, min_len);
        let mut segs = Vec::with_capacity(pieces);
        let mut at = 1;
        for (t, len) in tuples.into_iter().zip(lens) {
            segs.push(SourceSegment { start: at, end: at + len - 1, tuple: t });
            at += len;
        }
        return SourceSet::new(n, m, segs, alphabet).unwrap();
    }
}

/// Random weights on the ordered simplex with every mixture gap at least
/// `delta`, by rejection.
pub fn random_weights<R: Rng>(rng: &mut R, m: usize, alphabet: &Alphabet, delta: f64) -> Weights {
    loop {
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let Ok(w) = Weights::normalized(raw) else { continue };
        if slam_core::model::asb(&w, alphabet).unwrap() >= delta {
            return w;
        }
    }
}

/// Dyadic rationals `k / 8` in `[lo, hi]`.
pub fn eighth<R: Rng>(rng: &mut R, lo: i32, hi: i32) -> f64 {
    rng.gen_range(lo..=hi) as f64 / 8.0
}

/// Noisy mixture of random separable sources with a random threshold.
pub struct Instance {
    pub y: Vec<f64>,
    pub sources: SourceSet,
    pub weights: Weights,
    pub alphabet: Alphabet,
    pub sigma: f64,
    pub q: f64,
    pub system: IntervalSystem,
    pub lambda: f64,
}

pub fn instance<R: Rng>(rng: &mut R, max_n: usize, m: usize) -> Instance {
    let k = rng.gen_range(2..=3);
    let alphabet = Alphabet::range(k).unwrap();
    let pieces = rng.gen_range(m.max(2)..=5);
    let min_len = rng.gen_range(2..=4);
    let n = rng.gen_range((pieces * min_len).max(8)..=max_n);
    let sources = random_sources(rng, n, m, &alphabet, pieces, min_len);
    let weights = random_weights(rng, m, &alphabet, 0.05);
    let sigma = [0.02, 0.05, 0.1][rng.gen_range(0..3)];
    let g = sources.mixture(&weights).to_values();
    let y = g.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let kind = if rng.gen_bool(0.5) { SystemKind::Full } else { SystemKind::Dyadic };
    Instance {
        y,
        sources,
        weights,
        alphabet,
        sigma,
        q: rng.gen_range(-0.5..2.0),
        system: IntervalSystem::new(n, kind, 1).unwrap(),
        lambda: min_len as f64 / n as f64,
    }
}

/// Data and levels on the grid of eighths so that squared losses are exact.
pub fn dp_instance<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let n = rng.gen_range(1..=12);
    let count = rng.gen_range(1..=4);
    let mut levels: Vec<f64> = Vec::new();
    while levels.len() < count {
        let v = eighth(rng, -16, 16);
        if !levels.contains(&v) {
            levels.push(v);
        }
    }
    levels.sort_by(f64::total_cmp);
    let y = (0..n)
        .map(|_| levels[rng.gen_range(0..count)] + eighth(rng, -3, 3))
        .collect();
    let q = rng.gen_range(-0.5..2.0);
    (y, levels, 0.25, q)
}
