//! Domain types of the mixture model and the identifiability quantities
//! built on them.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest number of alphabet tuples we are willing to enumerate.
pub const MAX_TUPLES: usize = 1 << 24;

/// Tolerance of the weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Differences of mixture values below this (relative to the alphabet
/// magnitude) are treated as exact collisions.
const COLLISION_EPS: f64 = 1e-12;

/// Standard normal 0.75-quantile.
pub const Z_075: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Alphabet {
    levels: Vec<f64>,
}

impl Alphabet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidAlphabet(format!(
                "need at least two levels, got {}",
                levels.len()
            )));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAlphabet("levels must be finite".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidAlphabet(
                "levels must be strictly increasing".into(),
            ));
        }
        Ok(Alphabet { levels })
    }

    /// The alphabet `{0, 1, ..., k-1}`.
    pub fn range(k: usize) -> Result<Self> {
        Alphabet::new((0..k).map(|v| v as f64).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn a1(&self) -> f64 {
        self.levels[0]
    }

    pub fn a2(&self) -> f64 {
        self.levels[1]
    }

    pub fn ak(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// `a2 - a1`, the scale that maps values back to weights.
    pub fn gap(&self) -> f64 {
        self.a2() - self.a1()
    }

    /// `ak - a1`.
    pub fn span(&self) -> f64 {
        self.ak() - self.a1()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.levels.contains(&v)
    }

    pub fn index_of(&self, v: f64) -> Option<usize> {
        self.levels.iter().position(|&a| a == v)
    }

    /// Number of m-tuples, refusing counts above [`MAX_TUPLES`].
    pub fn tuple_count(&self, m: usize) -> Result<usize> {
        let k = self.k();
        let mut count: usize = 1;
        for _ in 0..m {
            count = match count.checked_mul(k) {
                Some(c) if c <= MAX_TUPLES => c,
                _ => return Err(Error::CombinatorialLimit { k, m }),
            };
        }
        Ok(count)
    }

    /// All m-tuples in lexicographic order.
    pub fn tuples(&self, m: usize) -> Result<TupleIter<'_>> {
        self.tuple_count(m)?;
        Ok(TupleIter {
            alphabet: self,
            idx: vec![0; m],
            done: false,
        })
    }
}

impl TryFrom<Vec<f64>> for Alphabet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Alphabet::new(v)
    }
}

impl From<Alphabet> for Vec<f64> {
    fn from(a: Alphabet) -> Self {
        a.levels
    }
}

/// Odometer over `alphabet^m`, first coordinate slowest.
pub struct TupleIter<'a> {
    alphabet: &'a Alphabet,
    idx: Vec<usize>,
    done: bool,
}

impl Iterator for TupleIter<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let levels = self.alphabet.levels();
        let out = self.idx.iter().map(|&i| levels[i]).collect();
        let mut r = self.idx.len();
        loop {
            if r == 0 {
                self.done = true;
                break;
            }
            r -= 1;
            self.idx[r] += 1;
            if self.idx[r] < levels.len() {
                break;
            }
            self.idx[r] = 0;
        }
        Some(out)
    }
}

/// Mixing weights, ascending and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights {
    w: Vec<f64>,
}

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("need at least one weight".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if w.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::InvalidWeights("weights must be ascending".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Weights { w })
    }

    /// Sort and rescale nonnegative values onto the simplex.
    pub fn normalized(mut w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidWeights(format!("cannot normalize sum {sum}")));
        }
        for v in w.iter_mut() {
            *v /= sum;
        }
        w.sort_by(f64::total_cmp);
        Weights::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn m(&self) -> usize {
        self.w.len()
    }

    pub fn get(&self, r: usize) -> f64 {
        self.w[r]
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Weights::new(v)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.w
    }
}

/// A constant piece on the 1-based inclusive index range `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub level: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Step function on the grid `x_j = (j-1)/n`, stored by maximal segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSignal {
    n: usize,
    segments: Vec<Segment>,
}

impl StepSignal {
    pub fn new(n: usize, segments: Vec<Segment>) -> Result<Self> {
        check_partition(n, segments.iter().map(|s| (s.start, s.end)))
            .map_err(Error::InvalidSignal)?;
        if segments.iter().any(|s| !s.level.is_finite()) {
            return Err(Error::InvalidSignal("levels must be finite".into()));
        }
        if segments.windows(2).any(|p| p[0].level == p[1].level) {
            return Err(Error::InvalidSignal(
                "adjacent segments must have different levels".into(),
            ));
        }
        Ok(StepSignal { n, segments })
    }

    pub fn constant(n: usize, level: f64) -> Result<Self> {
        StepSignal::new(n, vec![Segment { start: 1, end: n, level }])
    }

    /// Build from point values, merging runs of equal values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSignal("empty signal".into()));
        }
        let mut segments: Vec<Segment> = Vec::new();
        for (idx, &v) in values.iter().enumerate() {
            match segments.last_mut() {
                Some(s) if s.level == v => s.end = idx + 1,
                _ => segments.push(Segment {
                    start: idx + 1,
                    end: idx + 1,
                    level: v,
                }),
            }
        }
        StepSignal::new(values.len(), segments)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn num_jumps(&self) -> usize {
        self.segments.len() - 1
    }

    /// Value at 1-based index `j`.
    pub fn value_at(&self, j: usize) -> f64 {
        let pos = self.segments.partition_point(|s| s.end < j);
        self.segments[pos].level
    }

    pub fn to_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.level, s.len()));
        }
        out
    }

    /// Start indices of all segments but the first.
    pub fn change_points(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }
}

fn check_partition(n: usize, ranges: impl Iterator<Item = (usize, usize)>) -> std::result::Result<(), String> {
    if n == 0 {
        return Err("grid size must be positive".into());
    }
    let mut next = 1;
    for (start, end) in ranges {
        if start != next || end < start {
            return Err(format!("segment {start}..={end} breaks the partition at {next}"));
        }
        next = end + 1;
    }
    if next != n + 1 {
        return Err(format!("segments cover 1..{} instead of 1..={n}", next - 1));
    }
    Ok(())
}

/// A constant piece of all sources at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSegment {
    pub start: usize,
    pub end: usize,
    pub tuple: Vec<f64>,
}

impl SourceSegment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The m source functions, stored as runs of constant value tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    n: usize,
    m: usize,
    segments: Vec<SourceSegment>,
}

impl SourceSet {
    pub fn new(n: usize, m: usize, segments: Vec<SourceSegment>, alphabet: &Alphabet) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSources("need at least one source".into()));
        }
        check_partition(n, segments.iter().map(|s| (s.start, s.end)))
            .map_err(Error::InvalidSources)?;
        for s in &segments {
            if s.tuple.len() != m {
                return Err(Error::InvalidSources(format!(
                    "tuple of length {} for m = {m}",
                    s.tuple.len()
                )));
            }
            if let Some(v) = s.tuple.iter().find(|v| !alphabet.contains(**v)) {
                return Err(Error::InvalidSources(format!("{v} is not an alphabet level")));
            }
        }
        if segments.windows(2).any(|p| p[0].tuple == p[1].tuple) {
            return Err(Error::InvalidSources(
                "adjacent segments must have different tuples".into(),
            ));
        }
        Ok(SourceSet { n, m, segments })
    }

    /// Like [`SourceSet::new`] but merges adjacent runs with equal tuples first.
    pub fn merged(n: usize, m: usize, runs: Vec<SourceSegment>, alphabet: &Alphabet) -> Result<Self> {
        let mut segments: Vec<SourceSegment> = Vec::with_capacity(runs.len());
        for run in runs {
            match segments.last_mut() {
                Some(s) if s.tuple == run.tuple && s.end + 1 == run.start => s.end = run.end,
                _ => segments.push(run),
            }
        }
        SourceSet::new(n, m, segments, alphabet)
    }

    /// Sources constant on `[taus[s], taus[s+1])` of the unit interval, with
    /// `taus[0] = 0`. Grid point `j` sits at `(j-1)/n`.
    pub fn from_breakpoints(n: usize, taus: &[f64], tuples: &[Vec<f64>], alphabet: &Alphabet) -> Result<Self> {
        if taus.len() != tuples.len() || taus.is_empty() {
            return Err(Error::InvalidSources(
                "need one tuple per breakpoint".into(),
            ));
        }
        if taus[0] != 0.0 || taus.windows(2).any(|p| p[0] >= p[1]) || taus[taus.len() - 1] >= 1.0 {
            return Err(Error::InvalidSources(
                "breakpoints must start at 0 and increase inside [0, 1)".into(),
            ));
        }
        let m = tuples[0].len();
        let mut runs = Vec::with_capacity(taus.len());
        for (s, tuple) in tuples.iter().enumerate() {
            let start = points_below(taus[s], n) + 1;
            let end = if s + 1 < taus.len() { points_below(taus[s + 1], n) } else { n };
            if end < start {
                continue;
            }
            runs.push(SourceSegment { start, end, tuple: tuple.clone() });
        }
        SourceSet::merged(n, m, runs, alphabet)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn segments(&self) -> &[SourceSegment] {
        &self.segments
    }

    /// Tuple at 1-based index `j`.
    pub fn tuple_at(&self, j: usize) -> &[f64] {
        let pos = self.segments.partition_point(|s| s.end < j);
        &self.segments[pos].tuple
    }

    /// Source `r` (0-based) as a step signal.
    pub fn source(&self, r: usize) -> StepSignal {
        let mut segments: Vec<Segment> = Vec::new();
        for s in &self.segments {
            let v = s.tuple[r];
            match segments.last_mut() {
                Some(last) if last.level == v => last.end = s.end,
                _ => segments.push(Segment { start: s.start, end: s.end, level: v }),
            }
        }
        StepSignal { n: self.n, segments }
    }

    /// Grid values of source `r` (0-based).
    pub fn source_values(&self, r: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.tuple[r], s.len()));
        }
        out
    }

    /// The mixture `w^T f`, with equal adjacent levels merged.
    pub fn mixture(&self, w: &Weights) -> StepSignal {
        let mut segments: Vec<Segment> = Vec::new();
        for s in &self.segments {
            let v = encode(w, &s.tuple);
            match segments.last_mut() {
                Some(last) if last.level == v => last.end = s.end,
                _ => segments.push(Segment { start: s.start, end: s.end, level: v }),
            }
        }
        StepSignal { n: self.n, segments }
    }
}

/// Number of grid points `(j-1)/n` strictly below `tau`.
pub fn points_below(tau: f64, n: usize) -> usize {
    let x = tau * n as f64;
    // absorb representation error of fractions like 0.05 * 7680
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian,
    StudentT { df: f64 },
    ChiSquared { df: f64 },
    None,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::StudentT { df } if !(df > 2.0) => Err(Error::InvalidArgument(format!(
                "t noise needs df > 2 for a finite variance, got {df}"
            ))),
            NoiseModel::ChiSquared { df } if !(df > 0.0) => Err(Error::InvalidArgument(format!(
                "chi-squared noise needs df > 0, got {df}"
            ))),
            _ => Ok(()),
        }
    }

    /// One draw with mean zero and unit variance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Gaussian => StandardNormal.sample(rng),
            NoiseModel::StudentT { df } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                t * ((df - 2.0) / df).sqrt()
            }
            NoiseModel::ChiSquared { df } => {
                let x: f64 = ChiSquared::new(df).expect("validated df").sample(rng);
                (x - df) / (2.0 * df).sqrt()
            }
            NoiseModel::None => 0.0,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseModel::Gaussian)
    }

    /// Short tag used in cache keys and reports.
    pub fn tag(&self) -> String {
        match *self {
            NoiseModel::Gaussian => "gaussian".into(),
            NoiseModel::StudentT { df } => format!("t{df}"),
            NoiseModel::ChiSquared { df } => format!("chisq{df}"),
            NoiseModel::None => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sources: SourceSet,
    pub weights: Weights,
    pub alphabet: Alphabet,
    pub sigma: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.weights.m() != self.sources.m() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} sources",
                self.weights.m(),
                self.sources.m()
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        self.noise.validate()
    }

    pub fn n(&self) -> usize {
        self.sources.n()
    }

    pub fn mixture(&self) -> StepSignal {
        self.sources.mixture(&self.weights)
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario { seed, ..self.clone() }
    }
}

/// `w^T a`.
pub fn encode(w: &Weights, tuple: &[f64]) -> f64 {
    dot(w.as_slice(), tuple)
}

pub(crate) fn dot(w: &[f64], tuple: &[f64]) -> f64 {
    w.iter().zip(tuple).map(|(a, b)| a * b).sum()
}

/// The unique tuple whose mixture value is within `tol` of `level`.
pub fn decode(w: &Weights, level: f64, alphabet: &Alphabet, tol: f64) -> Result<Vec<f64>> {
    let mut found: Option<Vec<f64>> = None;
    for tuple in alphabet.tuples(w.m())? {
        if (encode(w, &tuple) - level).abs() <= tol {
            if let Some(first) = found {
                return Err(Error::Ambiguous { level, first, second: tuple });
            }
            found = Some(tuple);
        }
    }
    found.ok_or(Error::NoMatch { level })
}

fn collision_eps(alphabet: &Alphabet) -> f64 {
    COLLISION_EPS * alphabet.a1().abs().max(alphabet.ak().abs()).max(1.0)
}

/// Alphabet separation boundary: smallest gap between mixture values of
/// distinct tuples. Gaps at rounding level count as exact collisions.
pub fn asb(w: &Weights, alphabet: &Alphabet) -> Result<f64> {
    let mut values: Vec<f64> = alphabet.tuples(w.m())?.map(|t| encode(w, &t)).collect();
    values.sort_by(f64::total_cmp);
    let eps = collision_eps(alphabet);
    let gap = values
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    Ok(if gap <= eps { 0.0 } else { gap })
}

/// `a1 * E + (a2 - a1) * I`: diagonal `a2`, off-diagonal `a1`.
pub fn mixing_matrix(alphabet: &Alphabet, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|r| (0..m).map(|c| if r == c { alphabet.a2() } else { alphabet.a1() }).collect())
        .collect()
}

/// Witness runs `(start, end)` carrying each row of the mixing matrix for at
/// least `min_run` points, or `None` if some row never occurs that long.
pub fn separability_witness(sources: &SourceSet, alphabet: &Alphabet, min_run: usize) -> Option<Vec<(usize, usize)>> {
    mixing_matrix(alphabet, sources.m())
        .iter()
        .map(|row| {
            sources
                .segments()
                .iter()
                .find(|s| s.tuple == *row && s.len() >= min_run.max(1))
                .map(|s| (s.start, s.end))
        })
        .collect()
}

pub fn is_separable(sources: &SourceSet, alphabet: &Alphabet, min_run: usize) -> bool {
    separability_witness(sources, alphabet, min_run).is_some()
}

/// Draw `y` for the scenario; deterministic in `scenario.seed`.
pub fn synthesize(scenario: &Scenario) -> Result<Vec<f64>> {
    scenario.validate()?;
    let g = scenario.mixture().to_values();
    if scenario.noise == NoiseModel::None {
        return Ok(g);
    }
    let mut rng = rng::seeded(scenario.seed);
    Ok(g.into_iter()
        .map(|v| v + scenario.sigma * scenario.noise.sample(&mut rng))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    /// Set when all first differences vanish and the estimate is zero.
    pub degenerate: bool,
}

/// Difference-based MAD estimate of the noise level.
pub fn estimate_sigma(y: &[f64]) -> Result<SigmaEstimate> {
    if y.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two observations, got {}",
            y.len()
        )));
    }
    let mut diffs: Vec<f64> = y.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        log::warn!("all first differences are zero; noise level estimated as 0");
        return Ok(SigmaEstimate { sigma: 0.0, degenerate: true });
    }
    diffs.sort_by(f64::total_cmp);
    let len = diffs.len();
    let median = if len % 2 == 1 {
        diffs[len / 2]
    } else {
        0.5 * (diffs[len / 2 - 1] + diffs[len / 2])
    };
    Ok(SigmaEstimate {
        sigma: median / (std::f64::consts::SQRT_2 * Z_075),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub c1: f64,
    pub c2: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c1: f64,
    pub c2: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
    pub n_star: u64,
}

/// Constants of the finite-sample recovery guarantees.
pub fn theory_constants(delta: f64, lambda: f64, sigma: f64, alphabet: &Alphabet, m: usize, n: usize) -> Result<TheoryConstants> {
    let r = rate_constants(delta, lambda, sigma, alphabet, m, n)?;
    let n_star = n_star(delta, lambda, sigma, alphabet, m)?;
    Ok(TheoryConstants { c1: r.c1, c2: r.c2, alpha_n: r.alpha_n, beta_n: r.beta_n, n_star })
}

/// The constants that do not involve the minimal sample size.
pub fn rate_constants(delta: f64, lambda: f64, sigma: f64, alphabet: &Alphabet, m: usize, n: usize) -> Result<RateConstants> {
    for (name, v) in [("delta", delta), ("lambda", lambda), ("sigma", sigma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    if lambda > 1.0 {
        return Err(Error::InvalidArgument(format!("lambda must be at most 1, got {lambda}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    let gap = alphabet.gap();
    let span = alphabet.span();
    let mf = m as f64;
    let e = std::f64::consts::E;
    let c1 = delta * delta * gap * gap / (48600.0 * sigma * sigma * mf * mf * span * span);
    let c2 = (delta + (2.0 * sigma * sigma * (e / lambda).ln()).sqrt()) / lambda.sqrt();
    let ln2n = (n as f64).ln().powi(2);
    let alpha_n = (-c1 * ln2n).exp();
    let beta_n = (-75.0 * mf * mf * (span / gap).powi(2) * c1 * ln2n).exp();
    Ok(RateConstants { c1, c2, alpha_n, beta_n })
}

/// Smallest sample size `N >= 8` meeting both sample size conditions.
pub fn n_star(delta: f64, lambda: f64, sigma: f64, alphabet: &Alphabet, m: usize) -> Result<u64> {
    let e = std::f64::consts::E;
    let rhs1 = delta / (4.0 * sigma);
    let rhs2 = delta * alphabet.gap() / alphabet.span()
        / (2.0 * m as f64 * (delta + (2.0 * sigma * sigma * (e / lambda).ln()).sqrt()));
    let ok = |big_n: u64| {
        let nf = big_n as f64;
        let ln = nf.ln();
        let ln2 = ln * ln;
        let lhs1 = (2.0 * (e * nf / ln2).ln() / ln2).sqrt()
            + (6.0 * (3.0 * e / lambda).ln()).sqrt() / (nf * lambda).sqrt();
        let lhs2 = ln / (nf * lambda).sqrt();
        lhs1 <= rhs1 && lhs2 <= rhs2
    };
    const FLOOR: u64 = 8;
    const LIMIT: u64 = 1 << 62;
    if ok(FLOOR) {
        return Ok(FLOOR);
    }
    let mut lo = FLOOR;
    let mut hi = FLOOR;
    while !ok(hi) {
        if hi >= LIMIT {
            return Err(Error::Unsatisfiable);
        }
        lo = hi;
        hi = (hi * 2).min(LIMIT);
    }
    // invariant: !ok(lo), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> Weights {
        Weights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn alphabet_rejects_bad_levels() {
        assert!(Alphabet::new(vec![0.0]).is_err());
        assert!(Alphabet::new(vec![0.0, 0.0]).is_err());
        assert!(Alphabet::new(vec![1.0, 0.0]).is_err());
        assert!(Alphabet::new(vec![0.0, f64::NAN]).is_err());
        let a = Alphabet::new(vec![-1.0, 0.5, 3.0]).unwrap();
        assert_eq!(a.gap(), 1.5);
        assert_eq!(a.span(), 4.0);
    }

    #[test]
    fn weights_reject_unsorted_or_unnormalized() {
        assert!(Weights::new(vec![0.6, 0.4]).is_err());
        assert!(Weights::new(vec![0.3, 0.6]).is_err());
        assert!(Weights::new(vec![-0.1, 1.1]).is_err());
        assert!(Weights::new(vec![]).is_err());
        assert!(Weights::new(vec![0.11, 0.29, 0.6]).is_ok());
    }

    #[test]
    fn tuples_are_lexicographic() {
        let a = Alphabet::range(2).unwrap();
        let all: Vec<Vec<f64>> = a.tuples(2).unwrap().collect();
        assert_eq!(all, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(a.tuples(0).unwrap().count(), 1);
    }

    #[test]
    fn tuple_guard() {
        let a = Alphabet::range(2).unwrap();
        assert!(a.tuple_count(24).is_ok());
        assert_eq!(a.tuple_count(25), Err(Error::CombinatorialLimit { k: 2, m: 25 }));
    }

    #[test]
    fn asb_examples() {
        let b = Alphabet::range(2).unwrap();
        assert!((asb(&w(&[0.02, 0.98]), &b).unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(asb(&w(&[0.5, 0.5]), &Alphabet::range(3).unwrap()).unwrap(), 0.0);
        let v = asb(&w(&[0.11, 0.29, 0.6]), &Alphabet::range(3).unwrap()).unwrap();
        assert!((v - 0.02).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mixing_matrix_examples() {
        assert_eq!(mixing_matrix(&Alphabet::range(2).unwrap(), 2), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = Alphabet::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(mixing_matrix(&a, 2), vec![vec![3.0, 1.0], vec![1.0, 3.0]]);
    }

    #[test]
    fn encode_decode() {
        let wt = w(&[0.11, 0.29, 0.6]);
        let a = Alphabet::range(3).unwrap();
        assert_eq!(encode(&wt, &[0.0, 0.0, 1.0]), 0.6);
        assert_eq!(decode(&wt, 0.6, &a, 1e-9).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(matches!(decode(&wt, 0.615, &a, 1e-9), Err(Error::NoMatch { .. })));
        let half = w(&[0.5, 0.5]);
        match decode(&half, 0.5, &Alphabet::range(2).unwrap(), 1e-9) {
            Err(Error::Ambiguous { first, second, .. }) => {
                assert_eq!(first, vec![0.0, 1.0]);
                assert_eq!(second, vec![1.0, 0.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn step_signal_invariants() {
        assert!(StepSignal::new(4, vec![
            Segment { start: 1, end: 2, level: 1.0 },
            Segment { start: 3, end: 4, level: 1.0 },
        ]).is_err());
        assert!(StepSignal::new(4, vec![Segment { start: 1, end: 3, level: 1.0 }]).is_err());
        let s = StepSignal::from_values(&[1.0, 1.0, 2.0, 2.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.segments().len(), 3);
        assert_eq!(s.change_points(), vec![3, 6]);
        assert_eq!(s.value_at(5), 2.0);
        assert_eq!(s.value_at(6), 0.0);
        assert_eq!(s.to_values(), vec![1.0, 1.0, 2.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn source_set_from_breakpoints() {
        let a = Alphabet::range(2).unwrap();
        let s = SourceSet::from_breakpoints(
            10,
            &[0.0, 0.3, 0.5],
            &[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            &a,
        )
        .unwrap();
        assert_eq!(s.segments().len(), 2);
        assert_eq!((s.segments()[0].start, s.segments()[0].end), (1, 3));
        assert_eq!(s.source_values(0), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        // 0.05 * 7680 must land on 384 exactly
        assert_eq!(points_below(0.05, 7680), 384);
        assert_eq!(points_below(0.0, 10), 0);
    }

    #[test]
    fn separability() {
        let a = Alphabet::range(3).unwrap();
        let tuples = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let s = SourceSet::from_breakpoints(30, &[0.0, 1.0 / 3.0, 2.0 / 3.0], &tuples, &a).unwrap();
        assert_eq!(separability_witness(&s, &a, 10), Some(vec![(1, 10), (11, 20), (21, 30)]));
        assert!(!is_separable(&s, &a, 11));
        let flat = SourceSet::new(5, 2, vec![SourceSegment { start: 1, end: 5, tuple: vec![0.0, 0.0] }], &a).unwrap();
        assert!(!is_separable(&flat, &a, 1));
    }

    #[test]
    fn noiseless_synthesis_is_exact() {
        let a = Alphabet::range(3).unwrap();
        let wt = w(&[0.11, 0.29, 0.6]);
        let s = SourceSet::new(4, 3, vec![SourceSegment { start: 1, end: 4, tuple: vec![2.0, 1.0, 0.0] }], &a).unwrap();
        let sc = Scenario { sources: s, weights: wt.clone(), alphabet: a, sigma: 1.0, noise: NoiseModel::None, seed: 1 };
        let y = synthesize(&sc).unwrap();
        assert!(y.iter().all(|&v| v == encode(&wt, &[2.0, 1.0, 0.0])));
    }

    #[test]
    fn sigma_estimate_constant_is_degenerate() {
        let est = estimate_sigma(&[2.0; 10]).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.sigma, 0.0);
        assert!(estimate_sigma(&[1.0]).is_err());
    }

    #[test]
    fn theory_constant_examples() {
        let a = Alphabet::range(2).unwrap();
        let t = theory_constants(0.1, 0.1, 0.1, &a, 1, 100).unwrap();
        assert!((t.c1 - 1.0 / 48600.0).abs() < 1e-18);
        let t = rate_constants(0.02, 0.05, 0.05, &a, 2, 1000).unwrap();
        let e = std::f64::consts::E;
        let expected = (0.02 + (2.0 * 0.0025 * (e / 0.05).ln()).sqrt()) / 0.05f64.sqrt();
        assert!((t.c2 - expected).abs() < 1e-12);
        assert!(t.alpha_n > 0.0 && t.alpha_n < 1.0);
        assert!(t.beta_n <= t.alpha_n);
        assert_eq!(theory_constants(0.02, 0.05, 0.05, &a, 2, 1000), Err(Error::Unsatisfiable));
    }

    #[test]
    fn n_star_is_minimal() {
        let a = Alphabet::range(2).unwrap();
        let n = n_star(0.5, 0.2, 0.05, &a, 2).unwrap();
        assert!(n > 8);
        let m = n_star(0.25, 0.2, 0.05, &a, 2).unwrap();
        assert!(m >= n);
    }
}
