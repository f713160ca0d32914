//! Confidence region for the mixing weights.
//!
//! A candidate picks one confidence box per source. Boxes of intervals on
//! which the data are not compatible with a constant are discarded, as are
//! intervals shorter than the minimal scale. A tuple of boxes survives when
//! it is compatible with the ordered simplex and when every grid point is
//! covered by a window whose envelope meets a reachable mixture level.
//!
//! All deletion rules are monotone: enlarging a box coordinatewise never
//! turns a survivor into a deleted candidate. The search exploits this by
//! bounding groups of boxes with their hull (necessary condition) and their
//! common intersection (sufficient condition), which keeps it exact without
//! enumerating every product of boxes.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, Weights};
use crate::multiscale::{BoxSystem, EnvelopeTables, IntervalSystem, SparseTable};

const SIMPLEX_TOL: f64 = 1e-12;

/// Literal enumeration refuses to visit more partial tuples than this.
pub const LITERAL_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Grouped search with hull and intersection bounds.
    BranchAndBound,
    /// Plain enumeration of every tuple of boxes.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrwConfig {
    pub alphabet: Alphabet,
    pub m: usize,
    /// Minimal scale (fraction of n) of the windows in the existence rule.
    pub lambda: f64,
    /// Minimal scale (fraction of n) of the boxes that form candidates.
    pub lambda_star: f64,
    /// Keep only maximal boxes per source.
    pub prune_maximal: bool,
    pub search: SearchMode,
    /// Restrict to observations `start..=end` (1-based).
    pub window: Option<(usize, usize)>,
}

impl CrwConfig {
    pub fn new(alphabet: Alphabet, m: usize, lambda: f64) -> Self {
        CrwConfig {
            alphabet,
            m,
            lambda,
            lambda_star: lambda,
            prune_maximal: true,
            search: SearchMode::BranchAndBound,
            window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be positive".into()));
        }
        for (name, v) in [("lambda", self.lambda), ("lambda_star", self.lambda_star)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        self.alphabet.tuple_count(self.m)?;
        Ok(())
    }
}

/// Grid length of a minimal scale given as a fraction of `n`.
pub fn scale_len(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    ((x - 1e-9 * x.max(1.0)).ceil() as usize).clamp(1, n.max(1))
}

/// A confidence box in value space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawBox {
    pub interval: (usize, usize),
    pub lower: f64,
    pub upper: f64,
}

impl RawBox {
    pub fn contains_box(&self, other: &RawBox) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MBoxCandidate {
    pub interval_ids: Vec<(usize, usize)>,
    pub weight_box: Vec<(f64, f64)>,
}

/// A product of boxes that survives as a whole: every choice of one member
/// per source is a surviving candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub members: Vec<Vec<(usize, usize)>>,
    /// Weight-space hull of the members, per source.
    pub hull: Vec<(f64, f64)>,
    /// Weight-space boxes of the members, per source, aligned with `members`.
    pub member_boxes: Vec<Vec<(f64, f64)>>,
}

impl CandidateGroup {
    pub fn len(&self) -> usize {
        self.members.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn contains(&self, w: &[f64]) -> bool {
        self.member_boxes.len() == w.len()
            && self
                .member_boxes
                .iter()
                .zip(w)
                .all(|(boxes, &v)| boxes.iter().any(|&(l, u)| l <= v && v <= u))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub m: usize,
    pub groups: Vec<CandidateGroup>,
    pub covering_box: Vec<(f64, f64)>,
    pub q: f64,
    /// No candidate survived and the region is the whole ordered simplex.
    pub empty: bool,
}

impl ConfidenceRegion {
    /// The fallback region: all of the ordered simplex.
    pub fn full_simplex(m: usize, q: f64) -> Self {
        ConfidenceRegion {
            m,
            groups: Vec::new(),
            covering_box: simplex_cover(m),
            q,
            empty: true,
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.groups.iter().map(CandidateGroup::len).sum()
    }

    /// Whether `w` lies in the union of the candidates' weight boxes.
    pub fn contains(&self, w: &Weights) -> bool {
        if self.empty {
            return true;
        }
        self.groups.iter().any(|g| g.contains(w.as_slice()))
    }

    /// Whether `w` lies in the covering box.
    pub fn covering_contains(&self, w: &Weights) -> bool {
        self.covering_box
            .iter()
            .zip(w.as_slice())
            .all(|(&(l, u), &v)| l <= v && v <= u)
    }

    /// Expand the groups into individual candidates, at most `limit` of them.
    pub fn candidates(&self, limit: usize) -> Vec<MBoxCandidate> {
        let mut out = Vec::new();
        for g in &self.groups {
            let mut idx = vec![0usize; self.m];
            'group: loop {
                if out.len() >= limit {
                    return out;
                }
                out.push(MBoxCandidate {
                    interval_ids: (0..self.m).map(|r| g.members[r][idx[r]]).collect(),
                    weight_box: (0..self.m).map(|r| g.member_boxes[r][idx[r]]).collect(),
                });
                let mut r = self.m;
                loop {
                    if r == 0 {
                        break 'group;
                    }
                    r -= 1;
                    idx[r] += 1;
                    if idx[r] < g.members[r].len() {
                        break;
                    }
                    idx[r] = 0;
                }
            }
        }
        out
    }
}

/// Covering box of the ordered simplex.
pub fn simplex_cover(m: usize) -> Vec<(f64, f64)> {
    (1..=m)
        .map(|r| {
            if r == m {
                (1.0 / m as f64, 1.0)
            } else {
                (0.0, 1.0 / (m - r + 1) as f64)
            }
        })
        .collect()
}

/// Whether some `0 <= w_1 <= ... <= w_m` with unit sum lies in the box.
pub fn meets_simplex(wbox: &[(f64, f64)]) -> bool {
    let m = wbox.len();
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    let mut run = 0.0f64;
    for r in 0..m {
        run = run.max(wbox[r].0.max(0.0));
        lo[r] = run;
    }
    let mut run = f64::INFINITY;
    for r in (0..m).rev() {
        run = run.min(wbox[r].1);
        hi[r] = run;
    }
    if (0..m).any(|r| lo[r] > hi[r] + SIMPLEX_TOL) {
        return false;
    }
    let sum_lo: f64 = lo.iter().sum();
    let sum_hi: f64 = hi.iter().sum();
    sum_lo <= 1.0 + SIMPLEX_TOL && sum_hi >= 1.0 - SIMPLEX_TOL
}

/// Value-space box mapped to weight space and clipped to `[0, 1]`; `None`
/// when nothing is left.
fn to_weight(alphabet: &Alphabet, lower: f64, upper: f64) -> Option<(f64, f64)> {
    let a1 = alphabet.a1();
    let gap = alphabet.gap();
    let l = ((lower - a1) / gap).max(0.0);
    let u = ((upper - a1) / gap).min(1.0);
    (l <= u).then_some((l, u))
}

/// Predicate of boxes on which the data cannot be constant.
pub fn nonconstant_boxes(env: &EnvelopeTables) -> impl Fn(usize, usize) -> bool + '_ {
    move |i, j| env.is_nonconstant(i, j)
}

/// Existence-rule data: envelopes of all windows of the minimal length.
struct Coverage {
    n: usize,
    width: usize,
    /// Envelope per window start (0-based); `None` for non-constant windows.
    windows: Vec<Option<(f64, f64)>>,
    last_fail: Cell<Option<usize>>,
}

impl Coverage {
    fn new(env: &EnvelopeTables, system: &IntervalSystem, lambda_len: usize) -> Self {
        let n = system.n();
        let width = lambda_len.clamp(1, n);
        let windows = (1..=n + 1 - width)
            .map(|s| {
                let (lo, hi) = env.bounds(s, s + width - 1);
                (lo <= hi).then_some((lo, hi))
            })
            .collect();
        Coverage { n, width, windows, last_fail: Cell::new(None) }
    }

    fn hit(&self, s: usize, reach: &[(f64, f64)]) -> bool {
        let Some((lo, hi)) = self.windows[s] else {
            return false;
        };
        let pos = reach.partition_point(|&(_, u)| u < lo);
        pos < reach.len() && reach[pos].0 <= hi
    }

    /// Window starts (0-based) covering point `p` (0-based).
    fn starts_covering(&self, p: usize) -> std::ops::RangeInclusive<usize> {
        let last = self.windows.len() - 1;
        p.saturating_sub(self.width - 1)..=p.min(last)
    }

    fn point_covered(&self, p: usize, reach: &[(f64, f64)]) -> bool {
        self.starts_covering(p).rev().any(|s| self.hit(s, reach))
    }

    /// Every grid point is covered by a window meeting `reach`.
    fn covers(&self, reach: &[(f64, f64)]) -> bool {
        if let Some(p) = self.last_fail.get() {
            if !self.point_covered(p, reach) {
                return false;
            }
        }
        let mut p = 0;
        while p < self.n {
            match self.starts_covering(p).rev().find(|&s| self.hit(s, reach)) {
                Some(s) => p = s + self.width,
                None => {
                    self.last_fail.set(Some(p));
                    return false;
                }
            }
        }
        true
    }
}

/// Shared state of one region computation.
struct Problem<'a> {
    alphabet: &'a Alphabet,
    m: usize,
    tuples: Vec<Vec<f64>>,
    /// Absent for the value-space rules alone.
    coverage: Option<Coverage>,
}

impl Problem<'_> {
    /// The three sub-rules on value-space boxes `(lower, upper)`.
    fn r2(&self, raw: &[(f64, f64)]) -> bool {
        let m = self.m as f64;
        let a1 = self.alphabet.a1();
        let a2 = self.alphabet.a2();
        if !(raw[0].1 >= a1 && raw[0].0 <= a1 + (a2 - a1) / m) {
            return false;
        }
        let target = a2 + (m - 1.0) * a1;
        let mut lower_sum = raw[0].0;
        for r in 1..raw.len() {
            let bound = (target - lower_sum) / (m - r as f64);
            if !(bound >= raw[r].0 && raw[r - 1].0 <= raw[r].1) {
                return false;
            }
            lower_sum += raw[r].0;
        }
        raw.iter().map(|b| b.1).sum::<f64>() >= target
    }

    /// Union of the mixture values reachable from weights in the box.
    fn reachable(&self, wbox: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut spans: Vec<(f64, f64)> = self
            .tuples
            .iter()
            .map(|a| {
                let (mut lo, mut hi) = (0.0, 0.0);
                for (&(l, u), &v) in wbox.iter().zip(a) {
                    if v >= 0.0 {
                        lo += l * v;
                        hi += u * v;
                    } else {
                        lo += u * v;
                        hi += l * v;
                    }
                }
                (lo, hi)
            })
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
        for (lo, hi) in spans {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        merged
    }

    fn r3(&self, wbox: &[(f64, f64)]) -> bool {
        self.coverage.as_ref().is_none_or(|c| c.covers(&self.reachable(wbox)))
    }

    /// All rules on a value-space box tuple.
    fn survives(&self, raw: &[(f64, f64)]) -> bool {
        if !self.r2(raw) {
            return false;
        }
        let Some(wbox) = raw
            .iter()
            .map(|&(l, u)| to_weight(self.alphabet, l, u))
            .collect::<Option<Vec<_>>>()
        else {
            return false;
        };
        meets_simplex(&wbox) && self.r3(&wbox)
    }
}

/// Boxes eligible for source `r` (0-based): necessary single-source
/// conditions implied by the simplex and the first sub-rule.
fn eligible_for(alphabet: &Alphabet, m: usize, r: usize, b: &RawBox) -> bool {
    let Some((l, u)) = to_weight(alphabet, b.lower, b.upper) else {
        return false;
    };
    let cap = 1.0 / (m - r) as f64;
    if l > cap + SIMPLEX_TOL {
        return false;
    }
    if r + 1 == m && u < 1.0 / m as f64 - SIMPLEX_TOL {
        return false;
    }
    if r == 0 {
        let a1 = alphabet.a1();
        return b.upper >= a1 && b.lower <= a1 + alphabet.gap() / m as f64;
    }
    true
}

/// Keep boxes not contained in another one; equal boxes keep the first.
pub fn maximal_boxes(mut boxes: Vec<RawBox>) -> Vec<RawBox> {
    boxes.sort_by(|a, b| {
        a.lower
            .total_cmp(&b.lower)
            .then(b.upper.total_cmp(&a.upper))
            .then(a.interval.cmp(&b.interval))
    });
    let mut best_upper = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for b in boxes {
        if b.upper > best_upper {
            best_upper = b.upper;
            out.push(b);
        }
    }
    out
}

/// Boxes of constant-compatible system intervals of length at least
/// `lambda_star_len`.
fn base_boxes(boxes: &BoxSystem, env: &EnvelopeTables, lambda_star_len: usize) -> Vec<RawBox> {
    boxes
        .system()
        .intervals()
        .filter(|&(i, j)| j - i + 1 >= lambda_star_len && !env.is_nonconstant(i, j))
        .map(|(i, j)| RawBox { interval: (i, j), lower: boxes.lower(i, j), upper: boxes.upper(i, j) })
        .collect()
}

fn per_source_lists(
    boxes: &BoxSystem,
    env: &EnvelopeTables,
    alphabet: &Alphabet,
    m: usize,
    lambda_star_len: usize,
    prune: bool,
) -> Vec<Vec<RawBox>> {
    let base = base_boxes(boxes, env, lambda_star_len);
    (0..m)
        .map(|r| {
            let list: Vec<RawBox> = base.iter().copied().filter(|b| eligible_for(alphabet, m, r, b)).collect();
            if prune {
                maximal_boxes(list)
            } else {
                list
            }
        })
        .collect()
}

fn candidate_of(alphabet: &Alphabet, chosen: &[RawBox]) -> MBoxCandidate {
    MBoxCandidate {
        interval_ids: chosen.iter().map(|b| b.interval).collect(),
        weight_box: chosen
            .iter()
            .map(|b| to_weight(alphabet, b.lower, b.upper).expect("eligible boxes are nonempty"))
            .collect(),
    }
}

/// Candidates surviving the non-constancy, ordering and minimal-scale rules,
/// enumerated source by source and restricted to maximal boxes.
pub fn candidate_mboxes(
    boxes: &BoxSystem,
    env: &EnvelopeTables,
    alphabet: &Alphabet,
    m: usize,
    lambda_star_len: usize,
) -> Result<Vec<MBoxCandidate>> {
    enumerate_r2(boxes, env, alphabet, m, lambda_star_len, true)
}

fn enumerate_r2(
    boxes: &BoxSystem,
    env: &EnvelopeTables,
    alphabet: &Alphabet,
    m: usize,
    lambda_star_len: usize,
    prune: bool,
) -> Result<Vec<MBoxCandidate>> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    let lists = per_source_lists(boxes, env, alphabet, m, lambda_star_len, prune);
    let problem = Problem { alphabet, m, tuples: Vec::new(), coverage: None };
    let mut out = Vec::new();
    let mut chosen: Vec<RawBox> = Vec::with_capacity(m);
    let mut visited = 0usize;
    extend_literal(&problem, &lists, &mut chosen, &mut visited, &mut out)?;
    if out.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(out)
}

fn extend_literal(
    problem: &Problem<'_>,
    lists: &[Vec<RawBox>],
    chosen: &mut Vec<RawBox>,
    visited: &mut usize,
    out: &mut Vec<MBoxCandidate>,
) -> Result<()> {
    let r = chosen.len();
    if r == problem.m {
        let raw: Vec<(f64, f64)> = chosen.iter().map(|b| (b.lower, b.upper)).collect();
        if problem.r2(&raw) {
            let cand = candidate_of(problem.alphabet, chosen);
            if meets_simplex(&cand.weight_box) {
                out.push(cand);
            }
        }
        return Ok(());
    }
    for b in &lists[r] {
        *visited += 1;
        if *visited > LITERAL_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "literal enumeration exceeds {LITERAL_LIMIT} partial candidates"
            )));
        }
        chosen.push(*b);
        if prefix_ok(problem, chosen) {
            extend_literal(problem, lists, chosen, visited, out)?;
        }
        chosen.pop();
    }
    Ok(())
}

/// Sub-rules that only involve the first `chosen.len()` sources.
fn prefix_ok(problem: &Problem<'_>, chosen: &[RawBox]) -> bool {
    let m = problem.m as f64;
    let a1 = problem.alphabet.a1();
    let a2 = problem.alphabet.a2();
    let r = chosen.len() - 1;
    if r == 0 {
        return chosen[0].upper >= a1 && chosen[0].lower <= a1 + (a2 - a1) / m;
    }
    let lower_sum: f64 = chosen[..r].iter().map(|b| b.lower).sum();
    let bound = (a2 + (m - 1.0) * a1 - lower_sum) / (m - r as f64);
    bound >= chosen[r].lower && chosen[r - 1].lower <= chosen[r].upper
}

/// Keep candidates for which every grid point lies in a window of length
/// `lambda_len` whose envelope meets a reachable mixture level.
pub fn existence_filter(
    cands: Vec<MBoxCandidate>,
    boxes: &BoxSystem,
    env: &EnvelopeTables,
    alphabet: &Alphabet,
    lambda_len: usize,
) -> Result<Vec<MBoxCandidate>> {
    let Some(first) = cands.first() else {
        return Err(Error::EmptyCandidates);
    };
    let m = first.weight_box.len();
    let problem = Problem {
        alphabet,
        m,
        tuples: alphabet.tuples(m)?.collect(),
        coverage: Some(Coverage::new(env, boxes.system(), lambda_len)),
    };
    let kept: Vec<MBoxCandidate> = cands.into_iter().filter(|c| problem.r3(&c.weight_box)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(kept)
}

/// Region formed by the given candidates; empty input gives the fallback.
pub fn assemble_region(cands: &[MBoxCandidate], m: usize, q: f64) -> ConfidenceRegion {
    if cands.is_empty() {
        log::info!("no candidate survived at q = {q}; falling back to the full simplex");
        return ConfidenceRegion::full_simplex(m, q);
    }
    let groups = cands
        .iter()
        .map(|c| CandidateGroup {
            members: c.interval_ids.iter().map(|&id| vec![id]).collect(),
            hull: c.weight_box.clone(),
            member_boxes: c.weight_box.iter().map(|&b| vec![b]).collect(),
        })
        .collect::<Vec<_>>();
    finish_region(groups, m, q)
}

fn finish_region(groups: Vec<CandidateGroup>, m: usize, q: f64) -> ConfidenceRegion {
    if groups.is_empty() {
        log::info!("no candidate survived at q = {q}; falling back to the full simplex");
        return ConfidenceRegion::full_simplex(m, q);
    }
    let covering_box = (0..m)
        .map(|r| {
            groups.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), g| {
                (l.min(g.hull[r].0), u.max(g.hull[r].1))
            })
        })
        .collect();
    ConfidenceRegion { m, groups, covering_box, q, empty: false }
}

/// Covering box of the region.
pub fn covering_box(region: &ConfidenceRegion) -> &[(f64, f64)] {
    &region.covering_box
}

/// Normalized midpoints of the covering box, sorted ascending.
pub fn estimate_weights(region: &ConfidenceRegion) -> Result<Weights> {
    if region.empty {
        return Err(Error::EmptyRegion);
    }
    weights_from_box(&region.covering_box)
}

pub fn weights_from_box(cover: &[(f64, f64)]) -> Result<Weights> {
    let mids: Vec<f64> = cover.iter().map(|&(l, u)| l + u).collect();
    Weights::normalized(mids)
}

/// Confidence region of the weights at threshold `q`.
pub fn confidence_region(
    y: &[f64],
    sigma: f64,
    q: f64,
    system: &IntervalSystem,
    config: &CrwConfig,
) -> Result<ConfidenceRegion> {
    config.validate()?;
    let (y, system) = match config.window {
        None => (y, *system),
        Some((a, b)) => {
            if a == 0 || b < a || b > y.len() {
                return Err(Error::InvalidArgument(format!("window {a}..={b} outside 1..={}", y.len())));
            }
            (&y[a - 1..b], system.resized(b - a + 1)?)
        }
    };
    let boxes = BoxSystem::new(y, sigma, q, system)?;
    let env = EnvelopeTables::build(&boxes)?;
    region_from_boxes(&boxes, &env, config)
}

/// Region computation on prebuilt boxes.
pub fn region_from_boxes(boxes: &BoxSystem, env: &EnvelopeTables, config: &CrwConfig) -> Result<ConfidenceRegion> {
    let n = boxes.n();
    let m = config.m;
    let q = boxes.q();
    let alphabet = &config.alphabet;
    let lambda_len = scale_len(config.lambda, n);
    let lambda_star_len = scale_len(config.lambda_star, n);
    match config.search {
        SearchMode::Literal => {
            let cands = match enumerate_r2(boxes, env, alphabet, m, lambda_star_len, config.prune_maximal) {
                Ok(c) => c,
                Err(Error::EmptyCandidates) => Vec::new(),
                Err(e) => return Err(e),
            };
            let kept = if cands.is_empty() {
                cands
            } else {
                match existence_filter(cands, boxes, env, alphabet, lambda_len) {
                    Ok(c) => c,
                    Err(Error::EmptyCandidates) => Vec::new(),
                    Err(e) => return Err(e),
                }
            };
            Ok(assemble_region(&kept, m, q))
        }
        SearchMode::BranchAndBound => {
            let lists = per_source_lists(boxes, env, alphabet, m, lambda_star_len, config.prune_maximal);
            let problem = Problem {
                alphabet,
                m,
                tuples: alphabet.tuples(m)?.collect(),
                coverage: Some(Coverage::new(env, boxes.system(), lambda_len)),
            };
            if lists.iter().any(Vec::is_empty) {
                return Ok(ConfidenceRegion::full_simplex(m, q));
            }
            let trees: Vec<SourceTree> = lists.into_iter().map(SourceTree::new).collect();
            let mut groups = Vec::new();
            let mut nodes: Vec<(usize, usize)> = trees.iter().map(|t| (0, t.boxes.len())).collect();
            branch(&problem, &trees, &mut nodes, &mut groups);
            Ok(finish_region(groups, m, q))
        }
    }
}

/// Boxes of one source sorted by center, with range-extremum tables.
struct SourceTree {
    boxes: Vec<RawBox>,
    min_lower: SparseTable,
    max_upper: SparseTable,
    max_lower: SparseTable,
    min_upper: SparseTable,
}

impl SourceTree {
    fn new(mut boxes: Vec<RawBox>) -> Self {
        boxes.sort_by(|a, b| {
            (a.lower + a.upper)
                .total_cmp(&(b.lower + b.upper))
                .then(a.interval.cmp(&b.interval))
        });
        let neg = |f: fn(&RawBox) -> f64, s: f64| SparseTable::new(boxes.iter().map(|b| s * f(b)).collect());
        SourceTree {
            min_lower: neg(|b| b.lower, -1.0),
            max_upper: neg(|b| b.upper, 1.0),
            max_lower: neg(|b| b.lower, 1.0),
            min_upper: neg(|b| b.upper, -1.0),
            boxes,
        }
    }

    /// Hull of boxes `a..b`.
    fn hull(&self, (a, b): (usize, usize)) -> (f64, f64) {
        (-self.min_lower.query(a, b - 1), self.max_upper.query(a, b - 1))
    }

    /// Common intersection of boxes `a..b` (may be empty).
    fn meet(&self, (a, b): (usize, usize)) -> (f64, f64) {
        (self.max_lower.query(a, b - 1), -self.min_upper.query(a, b - 1))
    }
}

fn branch(problem: &Problem<'_>, trees: &[SourceTree], nodes: &mut Vec<(usize, usize)>, out: &mut Vec<CandidateGroup>) {
    let hull: Vec<(f64, f64)> = trees.iter().zip(nodes.iter()).map(|(t, &n)| t.hull(n)).collect();
    if !problem.survives(&hull) {
        return;
    }
    let singleton = nodes.iter().all(|&(a, b)| b - a == 1);
    let accept = singleton || {
        let meet: Vec<(f64, f64)> = trees.iter().zip(nodes.iter()).map(|(t, &n)| t.meet(n)).collect();
        meet.iter().all(|&(l, u)| l <= u) && problem.survives(&meet)
    };
    if accept {
        out.push(group_of(problem.alphabet, trees, nodes));
        return;
    }
    // split the largest node
    let (r, &(a, b)) = nodes
        .iter()
        .enumerate()
        .max_by(|x, y| (x.1 .1 - x.1 .0).cmp(&(y.1 .1 - y.1 .0)).then(y.0.cmp(&x.0)))
        .expect("m >= 1");
    let mid = a + (b - a) / 2;
    nodes[r] = (a, mid);
    branch(problem, trees, nodes, out);
    nodes[r] = (mid, b);
    branch(problem, trees, nodes, out);
    nodes[r] = (a, b);
}

fn group_of(alphabet: &Alphabet, trees: &[SourceTree], nodes: &[(usize, usize)]) -> CandidateGroup {
    let mut members = Vec::with_capacity(nodes.len());
    let mut member_boxes = Vec::with_capacity(nodes.len());
    let mut hull = Vec::with_capacity(nodes.len());
    for (t, &(a, b)) in trees.iter().zip(nodes) {
        let slice = &t.boxes[a..b];
        let wb: Vec<(f64, f64)> = slice
            .iter()
            .map(|x| to_weight(alphabet, x.lower, x.upper).expect("eligible boxes are nonempty"))
            .collect();
        hull.push(wb.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &(bl, bu)| (l.min(bl), u.max(bu))));
        members.push(slice.iter().map(|x| x.interval).collect());
        member_boxes.push(wb);
    }
    CandidateGroup { members, hull, member_boxes }
}

/// `sup` over the box of the sup-norm distance to `w`.
pub fn dist_bar(w: &Weights, cover: &[(f64, f64)]) -> f64 {
    w.as_slice()
        .iter()
        .zip(cover)
        .map(|(&v, &(l, u))| (v - l).abs().max((v - u).abs()))
        .fold(0.0, f64::max)
}
