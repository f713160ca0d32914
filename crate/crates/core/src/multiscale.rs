//! Interval systems, the penalized multiscale statistic, confidence boxes
//! with their sub-interval envelopes, and null quantiles.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, NoiseModel, StepSignal};
use crate::rng;

/// Largest n for which full-system envelope tables are kept in memory.
pub const MAX_FULL_ENVELOPE_N: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Every interval.
    Full,
    /// Intervals of length 1, 2, 4, ... at every start.
    Dyadic,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Full => "full",
            SystemKind::Dyadic => "dyadic",
        })
    }
}

impl FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SystemKind::Full),
            "dyadic" | "dyadic_lengths" => Ok(SystemKind::Dyadic),
            other => Err(Error::InvalidArgument(format!("unknown interval system {other:?}"))),
        }
    }
}

/// The intervals `[i, j]` (1-based, inclusive) the statistic maximizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSystem {
    n: usize,
    kind: SystemKind,
    min_len: usize,
}

impl IntervalSystem {
    pub fn new(n: usize, kind: SystemKind, min_len: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        if min_len == 0 || min_len > n {
            return Err(Error::InvalidArgument(format!(
                "min_len must lie in 1..={n}, got {min_len}"
            )));
        }
        Ok(IntervalSystem { n, kind, min_len })
    }

    pub fn full(n: usize) -> Result<Self> {
        IntervalSystem::new(n, SystemKind::Full, 1)
    }

    pub fn dyadic(n: usize) -> Result<Self> {
        IntervalSystem::new(n, SystemKind::Dyadic, 1)
    }

    /// Same kind and minimal length on a grid of size `n`.
    pub fn resized(&self, n: usize) -> Result<Self> {
        IntervalSystem::new(n, self.kind, self.min_len.min(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    /// Admissible lengths in ascending order.
    pub fn lengths(&self) -> Vec<usize> {
        match self.kind {
            SystemKind::Full => (self.min_len..=self.n).collect(),
            SystemKind::Dyadic => std::iter::successors(Some(1usize), |l| l.checked_mul(2))
                .take_while(|&l| l <= self.n)
                .filter(|&l| l >= self.min_len)
                .collect(),
        }
    }

    pub fn has_length(&self, len: usize) -> bool {
        len >= self.min_len
            && len <= self.n
            && (self.kind == SystemKind::Full || len.is_power_of_two())
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= 1 && j <= self.n && i <= j && self.has_length(j - i + 1)
    }

    /// All intervals, by length and then start.
    pub fn intervals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        self.lengths()
            .into_iter()
            .flat_map(move |len| (1..=n + 1 - len).map(move |i| (i, i + len - 1)))
    }

    pub fn count(&self) -> usize {
        self.lengths().iter().map(|&l| self.n + 1 - l).sum()
    }

    pub fn smallest_length_at_least(&self, len: usize) -> Option<usize> {
        self.lengths().into_iter().find(|&l| l >= len)
    }
}

/// `sqrt(2 (ln(n / len) + 1))`.
pub fn penalty(len: usize, n: usize) -> f64 {
    (2.0 * ((n as f64 / len as f64).ln() + 1.0)).sqrt()
}

/// Scale penalty, optionally enlarged by a term growing like `sqrt(len / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    Standard,
    /// `pen(len) + coefficient * sqrt(len / n)`.
    Modified { coefficient: f64 },
}

impl Penalty {
    /// The enlarged penalty behind the confidence band for the sources.
    pub fn modified(alphabet: &Alphabet, m: usize, sigma: f64, lambda: f64, n: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("m must be positive".into()));
        }
        let e = std::f64::consts::E;
        let coefficient = alphabet.gap() * (n as f64).ln() / m as f64
            + (8.0 * sigma * sigma * (e / lambda).ln() / lambda).sqrt();
        Ok(Penalty::Modified { coefficient })
    }

    pub fn value(&self, len: usize, n: usize) -> f64 {
        match *self {
            Penalty::Standard => penalty(len, n),
            Penalty::Modified { coefficient } => {
                penalty(len, n) + coefficient * (len as f64 / n as f64).sqrt()
            }
        }
    }
}

/// Prefix sums of the observations and their squares.
#[derive(Debug, Clone)]
pub struct PrefixSums {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl PrefixSums {
    pub fn new(y: &[f64]) -> Self {
        let mut s1 = Vec::with_capacity(y.len() + 1);
        let mut s2 = Vec::with_capacity(y.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for &v in y {
            a += v;
            b += v * v;
            s1.push(a);
            s2.push(b);
        }
        PrefixSums { s1, s2 }
    }

    pub fn n(&self) -> usize {
        self.s1.len() - 1
    }

    pub fn sum(&self, i: usize, j: usize) -> f64 {
        self.s1[j] - self.s1[i - 1]
    }

    pub fn mean(&self, i: usize, j: usize) -> f64 {
        self.sum(i, j) / (j - i + 1) as f64
    }

    /// `sum_{l=i}^{j} (y_l - level)^2`.
    pub fn sse(&self, i: usize, j: usize, level: f64) -> f64 {
        let len = (j - i + 1) as f64;
        (self.s2[j] - self.s2[i - 1]) - 2.0 * level * self.sum(i, j) + len * level * level
    }
}

fn check_inputs(y: &[f64], sigma: f64, system: &IntervalSystem) -> Result<()> {
    if y.len() != system.n() {
        return Err(Error::InvalidArgument(format!(
            "{} observations for a system on n = {}",
            y.len(),
            system.n()
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Multiscale statistic of `candidate` for data `y`.
pub fn statistic(y: &[f64], candidate: &StepSignal, sigma: f64, system: &IntervalSystem) -> Result<f64> {
    statistic_with(y, candidate, sigma, system, Penalty::Standard)
}

/// The statistic with the enlarged band penalty.
pub fn modified_statistic(
    y: &[f64],
    candidate: &StepSignal,
    sigma: f64,
    system: &IntervalSystem,
    alphabet: &Alphabet,
    m: usize,
    lambda: f64,
) -> Result<f64> {
    let pen = Penalty::modified(alphabet, m, sigma, lambda, system.n())?;
    statistic_with(y, candidate, sigma, system, pen)
}

/// Maximum over system intervals inside a single segment of `candidate`.
pub fn statistic_with(
    y: &[f64],
    candidate: &StepSignal,
    sigma: f64,
    system: &IntervalSystem,
    pen: Penalty,
) -> Result<f64> {
    check_inputs(y, sigma, system)?;
    if candidate.n() != y.len() {
        return Err(Error::InvalidArgument("candidate and data differ in length".into()));
    }
    let n = system.n();
    let residual: Vec<f64> = y.iter().zip(candidate.to_values()).map(|(a, b)| a - b).collect();
    let sums = PrefixSums::new(&residual);
    let lengths = system.lengths();
    let mut best = f64::NEG_INFINITY;
    for seg in candidate.segments() {
        for &len in lengths.iter().take_while(|&&l| l <= seg.len()) {
            let mut peak: f64 = 0.0;
            for i in seg.start..=seg.end + 1 - len {
                peak = peak.max(sums.sum(i, i + len - 1).abs());
            }
            best = best.max(peak / (sigma * (len as f64).sqrt()) - pen.value(len, n));
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::NoEligibleInterval);
    }
    Ok(best)
}

/// Null statistic of standardized noise `z`, maximized over all intervals.
pub fn null_statistic(z: &[f64], system: &IntervalSystem) -> f64 {
    let n = system.n();
    let sums = PrefixSums::new(z);
    system
        .lengths()
        .into_iter()
        .map(|len| {
            let mut peak: f64 = 0.0;
            for i in 1..=n + 1 - len {
                peak = peak.max(sums.sum(i, i + len - 1).abs());
            }
            peak / (len as f64).sqrt() - penalty(len, n)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Confidence boxes `mean(i, j) +- sigma (q + pen) / sqrt(len)`.
#[derive(Debug, Clone)]
pub struct BoxSystem {
    system: IntervalSystem,
    sigma: f64,
    q: f64,
    sums: PrefixSums,
    /// Half-widths indexed by length.
    half: Vec<f64>,
}

impl BoxSystem {
    pub fn new(y: &[f64], sigma: f64, q: f64, system: IntervalSystem) -> Result<Self> {
        BoxSystem::with_penalty(y, sigma, q, system, Penalty::Standard)
    }

    pub fn with_penalty(y: &[f64], sigma: f64, q: f64, system: IntervalSystem, pen: Penalty) -> Result<Self> {
        check_inputs(y, sigma, &system)?;
        if !q.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold must be finite, got {q}")));
        }
        let n = system.n();
        let half = (0..=n)
            .map(|len| {
                if len == 0 {
                    0.0
                } else {
                    sigma * (q + pen.value(len, n)) / (len as f64).sqrt()
                }
            })
            .collect();
        Ok(BoxSystem { system, sigma, q, sums: PrefixSums::new(y), half })
    }

    pub fn system(&self) -> &IntervalSystem {
        &self.system
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sums(&self) -> &PrefixSums {
        &self.sums
    }

    pub fn center(&self, i: usize, j: usize) -> f64 {
        self.sums.mean(i, j)
    }

    pub fn half_width(&self, len: usize) -> f64 {
        self.half[len]
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.center(i, j) - self.half[j - i + 1]
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.center(i, j) + self.half[j - i + 1]
    }
}

/// Range-extremum table over a fixed array.
#[derive(Debug, Clone)]
pub(crate) struct SparseTable {
    /// `levels[p][s]` = max of `base[s .. s + 2^p]`.
    levels: Vec<Vec<f64>>,
}

impl SparseTable {
    pub(crate) fn new(base: Vec<f64>) -> Self {
        let mut levels = vec![base];
        let mut width = 1;
        while 2 * width <= levels[0].len() {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..prev.len() - width)
                .map(|s| prev[s].max(prev[s + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        SparseTable { levels }
    }

    /// Max over 0-based inclusive `[a, b]`.
    pub(crate) fn query(&self, a: usize, b: usize) -> f64 {
        let span = b - a + 1;
        let p = (usize::BITS - 1 - span.leading_zeros()) as usize;
        let row = &self.levels[p];
        row[a].max(row[b + 1 - (1 << p)])
    }
}

#[derive(Debug, Clone)]
enum EnvelopeStorage {
    Full {
        offsets: Vec<usize>,
        max_lower: Vec<f64>,
        min_upper: Vec<f64>,
    },
    Dyadic {
        lengths: Vec<usize>,
        /// Per length: sparse tables of lower bounds and negated upper bounds.
        lower: Vec<SparseTable>,
        neg_upper: Vec<SparseTable>,
    },
}

/// Extremal box bounds over all system sub-intervals of `[i, j]`.
#[derive(Debug, Clone)]
pub struct EnvelopeTables {
    n: usize,
    storage: EnvelopeStorage,
}

impl EnvelopeTables {
    pub fn build(boxes: &BoxSystem) -> Result<Self> {
        let system = boxes.system();
        let n = system.n();
        let storage = match system.kind() {
            SystemKind::Full => {
                if n > MAX_FULL_ENVELOPE_N {
                    return Err(Error::InvalidArgument(format!(
                        "full-system envelopes need n <= {MAX_FULL_ENVELOPE_N}, got {n}; use the dyadic system"
                    )));
                }
                let mut offsets = Vec::with_capacity(n + 2);
                let mut acc = 0;
                offsets.push(0);
                for i in 1..=n {
                    offsets.push(acc);
                    acc += n - i + 1;
                }
                let mut max_lower = vec![f64::NEG_INFINITY; acc];
                let mut min_upper = vec![f64::INFINITY; acc];
                let min_len = system.min_len();
                for i in (1..=n).rev() {
                    for j in i..=n {
                        let idx = offsets[i] + (j - i);
                        let (mut lo, mut hi) = if j - i + 1 >= min_len {
                            (boxes.lower(i, j), boxes.upper(i, j))
                        } else {
                            (f64::NEG_INFINITY, f64::INFINITY)
                        };
                        if j > i {
                            let left = offsets[i] + (j - 1 - i);
                            let down = offsets[i + 1] + (j - i - 1);
                            lo = lo.max(max_lower[left]).max(max_lower[down]);
                            hi = hi.min(min_upper[left]).min(min_upper[down]);
                        }
                        max_lower[idx] = lo;
                        min_upper[idx] = hi;
                    }
                }
                EnvelopeStorage::Full { offsets, max_lower, min_upper }
            }
            SystemKind::Dyadic => {
                let lengths = system.lengths();
                let mut lower = Vec::with_capacity(lengths.len());
                let mut neg_upper = Vec::with_capacity(lengths.len());
                for &len in &lengths {
                    let starts = 1..=n + 1 - len;
                    lower.push(SparseTable::new(
                        starts.clone().map(|s| boxes.lower(s, s + len - 1)).collect(),
                    ));
                    neg_upper.push(SparseTable::new(
                        starts.map(|s| -boxes.upper(s, s + len - 1)).collect(),
                    ));
                }
                EnvelopeStorage::Dyadic { lengths, lower, neg_upper }
            }
        };
        Ok(EnvelopeTables { n, storage })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(maxLower, minUpper)` of `[i, j]`; `(-inf, inf)` when no system
    /// interval fits inside.
    pub fn bounds(&self, i: usize, j: usize) -> (f64, f64) {
        debug_assert!(1 <= i && i <= j && j <= self.n);
        match &self.storage {
            EnvelopeStorage::Full { offsets, max_lower, min_upper } => {
                let idx = offsets[i] + (j - i);
                (max_lower[idx], min_upper[idx])
            }
            EnvelopeStorage::Dyadic { lengths, lower, neg_upper } => {
                let span = j - i + 1;
                let mut lo = f64::NEG_INFINITY;
                let mut neg_hi = f64::NEG_INFINITY;
                for (t, &len) in lengths.iter().enumerate() {
                    if len > span {
                        break;
                    }
                    // starts i ..= j - len + 1, stored 0-based
                    lo = lo.max(lower[t].query(i - 1, j - len));
                    neg_hi = neg_hi.max(neg_upper[t].query(i - 1, j - len));
                }
                (lo, -neg_hi)
            }
        }
    }

    pub fn max_lower(&self, i: usize, j: usize) -> f64 {
        self.bounds(i, j).0
    }

    pub fn min_upper(&self, i: usize, j: usize) -> f64 {
        self.bounds(i, j).1
    }

    /// Two system sub-intervals of `[i, j]` have disjoint boxes, so no
    /// constant level is compatible with the data on `[i, j]`.
    pub fn is_nonconstant(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = self.bounds(i, j);
        lo > hi
    }

    /// Whether `level` lies in the envelope of `[i, j]`.
    pub fn admits(&self, i: usize, j: usize, level: f64) -> bool {
        let (lo, hi) = self.bounds(i, j);
        lo <= level && level <= hi
    }
}

/// Build the boxes and their envelope in one go.
pub fn envelope(y: &[f64], sigma: f64, q: f64, system: IntervalSystem) -> Result<(BoxSystem, EnvelopeTables)> {
    let boxes = BoxSystem::new(y, sigma, q, system)?;
    let env = EnvelopeTables::build(&boxes)?;
    Ok((boxes, env))
}

pub const QUANTILE_FORMAT_VERSION: u32 = 1;

/// Smallest number of replications accepted for a quantile table.
pub const MIN_QUANTILE_REPS: usize = 100;

/// Default number of replications for a grid of size `n`.
pub fn default_quantile_reps(n: usize) -> usize {
    if n <= 5000 {
        10_000
    } else {
        2_000
    }
}

/// Sorted Monte-Carlo draws of the null statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub n: usize,
    pub kind: SystemKind,
    pub min_len: usize,
    pub reps: usize,
    pub seed: u64,
    pub noise: NoiseModel,
    pub format_version: u32,
    pub sorted: Vec<f64>,
}

impl QuantileTable {
    /// Upper `alpha` quantile: the `ceil((1 - alpha) reps)`-th smallest draw.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let reps = self.sorted.len();
        let pos = ((1.0 - alpha) * reps as f64 - 1e-9).ceil();
        let k = (pos.max(1.0) as usize).min(reps);
        self.sorted[k - 1]
    }

    /// Empirical level of threshold `q`: the fraction of draws above it.
    pub fn exceedance(&self, q: f64) -> f64 {
        let above = self.sorted.len() - self.sorted.partition_point(|&v| v <= q);
        above as f64 / self.sorted.len() as f64
    }

    fn matches(&self, system: &IntervalSystem, reps: usize, noise: &NoiseModel) -> bool {
        self.n == system.n()
            && self.kind == system.kind()
            && self.min_len == system.min_len()
            && self.reps == reps
            && self.noise.tag() == noise.tag()
            && self.format_version == QUANTILE_FORMAT_VERSION
    }

    fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.sorted.len() * 22 + 200);
        out.push_str("# slam null-statistic quantile table\n");
        out.push_str(&format!("format_version {}\n", self.format_version));
        out.push_str(&format!("n {}\n", self.n));
        out.push_str(&format!("kind {}\n", self.kind));
        out.push_str(&format!("min_len {}\n", self.min_len));
        out.push_str(&format!("reps {}\n", self.reps));
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("noise {}\n", serde_noise(&self.noise)));
        out.push_str("values\n");
        for v in &self.sorted {
            out.push_str(&format!("{v:?}\n"));
        }
        out
    }

    fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let mut field = |name: &str| -> std::result::Result<String, String> {
            let line = lines.next().ok_or_else(|| format!("missing {name}"))?;
            let (key, value) = line.split_once(' ').ok_or_else(|| format!("malformed line {line:?}"))?;
            if key != name {
                return Err(format!("expected {name}, found {key}"));
            }
            Ok(value.to_string())
        };
        let parse_usize = |s: String| s.parse::<usize>().map_err(|e| e.to_string());
        let format_version = field("format_version")?.parse::<u32>().map_err(|e| e.to_string())?;
        let n = parse_usize(field("n")?)?;
        let kind = field("kind")?.parse::<SystemKind>().map_err(|e| e.to_string())?;
        let min_len = parse_usize(field("min_len")?)?;
        let reps = parse_usize(field("reps")?)?;
        let seed = field("seed")?.parse::<u64>().map_err(|e| e.to_string())?;
        let noise = parse_noise(&field("noise")?)?;
        let mut rest = text.lines().skip_while(|l| *l != "values");
        if rest.next() != Some("values") {
            return Err("missing values section".into());
        }
        let sorted = rest
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| format!("{l:?}: {e}")))
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        if sorted.len() != reps {
            return Err(format!("{} values for {reps} replications", sorted.len()));
        }
        if sorted.windows(2).any(|p| !(p[0] <= p[1])) {
            return Err("values are not sorted".into());
        }
        Ok(QuantileTable { n, kind, min_len, reps, seed, noise, format_version, sorted })
    }
}

fn serde_noise(noise: &NoiseModel) -> String {
    match *noise {
        NoiseModel::Gaussian => "gaussian".into(),
        NoiseModel::StudentT { df } => format!("student_t {df:?}"),
        NoiseModel::ChiSquared { df } => format!("chi_squared {df:?}"),
        NoiseModel::None => "none".into(),
    }
}

fn parse_noise(s: &str) -> std::result::Result<NoiseModel, String> {
    let mut parts = s.split_whitespace();
    let name = parts.next().unwrap_or("");
    let df = || -> std::result::Result<f64, String> {
        s.split_whitespace()
            .nth(1)
            .ok_or_else(|| "missing degrees of freedom".to_string())?
            .parse::<f64>()
            .map_err(|e| e.to_string())
    };
    match name {
        "gaussian" => Ok(NoiseModel::Gaussian),
        "student_t" => Ok(NoiseModel::StudentT { df: df()? }),
        "chi_squared" => Ok(NoiseModel::ChiSquared { df: df()? }),
        "none" => Ok(NoiseModel::None),
        other => Err(format!("unknown noise model {other:?}")),
    }
}

/// Simulate the null statistic `reps` times under standardized `noise`.
pub fn simulate_quantiles(system: &IntervalSystem, reps: usize, seed: u64, noise: NoiseModel) -> Result<QuantileTable> {
    if reps < MIN_QUANTILE_REPS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_QUANTILE_REPS} replications, got {reps}"
        )));
    }
    if noise == NoiseModel::None {
        return Err(Error::InvalidArgument("null quantiles need a random noise model".into()));
    }
    noise.validate()?;
    let n = system.n();
    let mut sorted: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, r as u64);
            let z: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            null_statistic(&z, system)
        })
        .collect();
    sorted.sort_by(f64::total_cmp);
    Ok(QuantileTable {
        n,
        kind: system.kind(),
        min_len: system.min_len(),
        reps,
        seed,
        noise,
        format_version: QUANTILE_FORMAT_VERSION,
        sorted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// An existing file could not be used and was replaced.
    Replaced,
}

/// Directory of quantile tables, one self-describing text file per key.
#[derive(Debug, Clone)]
pub struct QuantileCache {
    dir: PathBuf,
}

pub const CACHE_ENV: &str = "SLAM_QUANTILE_CACHE";

impl QuantileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        QuantileCache { dir: dir.into() }
    }

    /// Cache named by `SLAM_QUANTILE_CACHE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).map(QuantileCache::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, system: &IntervalSystem, reps: usize, noise: &NoiseModel) -> PathBuf {
        self.dir.join(format!(
            "quantiles_n{}_{}_min{}_reps{}_{}_v{}.txt",
            system.n(),
            system.kind(),
            system.min_len(),
            reps,
            noise.tag(),
            QUANTILE_FORMAT_VERSION
        ))
    }

    pub fn load(&self, system: &IntervalSystem, reps: usize, noise: &NoiseModel) -> Result<Option<QuantileTable>> {
        let path = self.path_for(system, reps, noise);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        match QuantileTable::from_text(&text) {
            Ok(table) if table.matches(system, reps, noise) => Ok(Some(table)),
            Ok(_) => Err(Error::io(&path, "cache entry does not match its key")),
            Err(msg) => Err(Error::io(&path, msg)),
        }
    }

    pub fn store(&self, table: &QuantileTable) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let system = IntervalSystem::new(table.n, table.kind, table.min_len)?;
        let path = self.path_for(&system, table.reps, &table.noise);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, table.to_text()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Load the table for this key or simulate and store it. Unreadable or
    /// mismatched entries are re-simulated with a warning.
    pub fn get_or_simulate(
        &self,
        system: &IntervalSystem,
        reps: usize,
        seed: u64,
        noise: NoiseModel,
    ) -> Result<(QuantileTable, CacheStatus)> {
        let mut status = CacheStatus::Miss;
        match self.load(system, reps, &noise) {
            Ok(Some(table)) => return Ok((table, CacheStatus::Hit)),
            Ok(None) => {}
            Err(Error::Io { path, message }) => {
                log::warn!("discarding quantile cache entry {path}: {message}");
                status = CacheStatus::Replaced;
            }
            Err(e) => return Err(e),
        }
        let table = simulate_quantiles(system, reps, seed, noise)?;
        self.store(&table)?;
        Ok((table, status))
    }
}

/// Quantile table from the cache when one is given, else a fresh simulation.
pub fn quantile_table(
    cache: Option<&QuantileCache>,
    system: &IntervalSystem,
    reps: usize,
    seed: u64,
    noise: NoiseModel,
) -> Result<QuantileTable> {
    match cache {
        Some(c) => c.get_or_simulate(system, reps, seed, noise).map(|(t, _)| t),
        None => simulate_quantiles(system, reps, seed, noise),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Segment;
    use rand::Rng;

    #[test]
    fn penalty_values() {
        assert!((penalty(7, 7) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((penalty(1, 4) - 2.184_625_533_641_814).abs() < 1e-12);
        for len in 1..100 {
            assert!(penalty(len, 100) > penalty(len + 1, 100));
        }
    }

    #[test]
    fn system_enumeration() {
        let s = IntervalSystem::new(5, SystemKind::Dyadic, 2).unwrap();
        assert_eq!(s.lengths(), vec![2, 4]);
        let all: Vec<_> = s.intervals().collect();
        assert_eq!(all, vec![(1, 2), (2, 3), (3, 4), (4, 5), (1, 4), (2, 5)]);
        assert_eq!(s.count(), 6);
        assert!(s.contains(2, 5) && !s.contains(1, 3) && !s.contains(1, 1));
        let f = IntervalSystem::full(4).unwrap();
        assert_eq!(f.count(), 10);
        assert_eq!(f.intervals().next(), Some((1, 1)));
        assert!(IntervalSystem::new(4, SystemKind::Full, 5).is_err());
    }

    #[test]
    fn constant_data_statistic() {
        let y = vec![0.3; 20];
        let g = StepSignal::constant(20, 0.3).unwrap();
        let t = statistic(&y, &g, 1.0, &IntervalSystem::full(20).unwrap()).unwrap();
        assert!((t + std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn two_segment_exact_fit() {
        let g = StepSignal::new(12, vec![
            Segment { start: 1, end: 4, level: 1.0 },
            Segment { start: 5, end: 12, level: 2.0 },
        ])
        .unwrap();
        let y = g.to_values();
        let t = statistic(&y, &g, 0.5, &IntervalSystem::full(12).unwrap()).unwrap();
        assert!((t + penalty(8, 12)).abs() < 1e-12);
    }

    #[test]
    fn no_eligible_interval() {
        let g = StepSignal::from_values(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        let sys = IntervalSystem::new(4, SystemKind::Full, 2).unwrap();
        assert_eq!(statistic(&[0.0; 4], &g, 1.0, &sys), Err(Error::NoEligibleInterval));
    }

    #[test]
    fn modified_penalty_zero_coefficient_matches_standard() {
        let mut rng = rng::seeded(3);
        let y: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let g = StepSignal::from_values(&[vec![0.2; 10], vec![0.8; 20]].concat()).unwrap();
        let sys = IntervalSystem::full(30).unwrap();
        let a = statistic(&y, &g, 0.3, &sys).unwrap();
        let b = statistic_with(&y, &g, 0.3, &sys, Penalty::Modified { coefficient: 0.0 }).unwrap();
        assert_eq!(a, b);
        let alph = Alphabet::range(2).unwrap();
        let c = modified_statistic(&y, &g, 0.3, &sys, &alph, 2, 0.1).unwrap();
        assert!(c <= a);
        let Penalty::Modified { coefficient } = Penalty::modified(&alph, 2, 0.3, 0.1, 30).unwrap() else {
            unreachable!()
        };
        let e = std::f64::consts::E;
        let expect = (30f64).ln() / 2.0 + (8.0 * 0.09 * (e / 0.1).ln() / 0.1).sqrt();
        assert!((coefficient - expect).abs() < 1e-12);
    }

    #[test]
    fn single_point_box() {
        let sys = IntervalSystem::full(1).unwrap();
        let b = BoxSystem::new(&[0.7], 0.5, 1.0, sys).unwrap();
        assert!((b.lower(1, 1) - (0.7 - 0.5 * (1.0 + penalty(1, 1)))).abs() < 1e-15);
        assert!((b.upper(1, 1) - (0.7 + 0.5 * (1.0 + penalty(1, 1)))).abs() < 1e-15);
    }

    #[test]
    fn sparse_table_queries() {
        let base = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let t = SparseTable::new(base.clone());
        for a in 0..base.len() {
            for b in a..base.len() {
                let want = base[a..=b].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(t.query(a, b), want);
            }
        }
    }

    #[test]
    fn quantile_lookup_rule() {
        let table = QuantileTable {
            n: 10,
            kind: SystemKind::Full,
            min_len: 1,
            reps: 10,
            seed: 0,
            noise: NoiseModel::Gaussian,
            format_version: QUANTILE_FORMAT_VERSION,
            sorted: (1..=10).map(|v| v as f64).collect(),
        };
        assert_eq!(table.quantile(0.1), 9.0);
        assert_eq!(table.quantile(0.0), 10.0);
        assert_eq!(table.quantile(1.0), 1.0);
        assert_eq!(table.quantile(0.55), 5.0);
        assert_eq!(table.exceedance(9.0), 0.1);
        let back = QuantileTable::from_text(&table.to_text()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn noise_round_trips_through_header() {
        for noise in [NoiseModel::Gaussian, NoiseModel::StudentT { df: 3.0 }, NoiseModel::ChiSquared { df: 3.0 }] {
            assert_eq!(parse_noise(&serde_noise(&noise)).unwrap(), noise);
        }
    }
}
