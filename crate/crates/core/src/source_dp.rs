//! Recovery of the mixture and the sources on the finite level set
//! `{w^T a : a in alphabet^m}`.
//!
//! Stage one finds the fewest jumps of a step signal whose every segment
//! level lies in its envelope. Stage two minimizes the squared error among
//! the signals with exactly that many jumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{encode, Alphabet, SourceSegment, SourceSet, StepSignal, Segment, Weights};
use crate::multiscale::{BoxSystem, EnvelopeTables, IntervalSystem, Penalty, PrefixSums};

/// Mixture values closer than this are merged into one level.
pub const COLLISION_TOL: f64 = 1e-9;

const UNREACHED: u32 = u32::MAX;

/// Distinct mixture values with the tuples generating them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    alphabet: Alphabet,
    m: usize,
    levels: Vec<f64>,
    /// Generating tuples per level, lexicographically sorted.
    tuples: Vec<Vec<Vec<f64>>>,
}

impl LevelSet {
    /// All mixture values of `w`, merging values within `collision_tol`.
    /// A merged level takes the value of its lexicographically smallest tuple.
    pub fn new(w: &Weights, alphabet: &Alphabet, collision_tol: f64) -> Result<Self> {
        let mut pairs: Vec<(f64, Vec<f64>)> = alphabet
            .tuples(w.m())?
            .map(|t| (encode(w, &t), t))
            .collect();
        // stable: tuples stay lexicographic among equal values
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
        for p in pairs {
            match groups.last_mut() {
                Some(g) if p.0 - g[g.len() - 1].0 <= collision_tol => g.push(p),
                _ => groups.push(vec![p]),
            }
        }
        let mut levels = Vec::with_capacity(groups.len());
        let mut tuples = Vec::with_capacity(groups.len());
        for mut g in groups {
            g.sort_by(|a, b| lex_cmp(&a.1, &b.1));
            levels.push(g[0].0);
            tuples.push(g.into_iter().map(|(_, t)| t).collect());
        }
        Ok(LevelSet { alphabet: alphabet.clone(), m: w.m(), levels, tuples })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn index_of(&self, level: f64) -> Option<usize> {
        let pos = self.levels.partition_point(|&v| v < level);
        (pos < self.levels.len() && self.levels[pos] == level).then_some(pos)
    }

    pub fn tuples_of(&self, idx: usize) -> &[Vec<f64>] {
        &self.tuples[idx]
    }

    /// Indices of levels generated by more than one tuple.
    pub fn collisions(&self) -> Vec<usize> {
        (0..self.levels.len()).filter(|&i| self.tuples[i].len() > 1).collect()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Level set of the weights; see [`LevelSet::new`].
pub fn candidate_levels(w: &Weights, alphabet: &Alphabet, collision_tol: f64) -> Result<LevelSet> {
    LevelSet::new(w, alphabet, collision_tol)
}

/// Dynamic program over segments `[i, j]` with levels from a sorted set.
pub struct SegmentationDp<'a> {
    levels: &'a [f64],
    env: &'a EnvelopeTables,
    sums: &'a PrefixSums,
    n: usize,
}

/// Fewest jumps per (position, level) for prefixes and suffixes.
struct JumpTables {
    /// `forward[(j - 1) * L + l]`: fewest jumps on `1..=j` ending with level `l`.
    forward: Vec<u32>,
    /// `backward[(i - 1) * L + l]`: fewest jumps on `i..=n` starting with level `l`.
    backward: Vec<u32>,
}

/// Smallest and second smallest entries of a row, with the argmin.
#[derive(Clone, Copy)]
struct RowMin<T> {
    best: T,
    arg: usize,
    second: T,
}

impl<T: Copy + PartialOrd> RowMin<T> {
    fn of(row: &[T], worst: T) -> Self {
        let mut out = RowMin { best: worst, arg: usize::MAX, second: worst };
        for (l, &v) in row.iter().enumerate() {
            if v < out.best {
                out.second = out.best;
                out.best = v;
                out.arg = l;
            } else if v < out.second {
                out.second = v;
            }
        }
        out
    }

    /// Smallest entry at a level other than `l`.
    fn excluding(&self, l: usize) -> T {
        if l == self.arg {
            self.second
        } else {
            self.best
        }
    }
}

impl<'a> SegmentationDp<'a> {
    pub fn new(levels: &'a [f64], env: &'a EnvelopeTables, sums: &'a PrefixSums) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("level set is empty".into()));
        }
        if levels.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::InvalidArgument("levels must be strictly increasing".into()));
        }
        if env.n() != sums.n() {
            return Err(Error::InvalidArgument("envelope and data differ in length".into()));
        }
        Ok(SegmentationDp { levels, env, sums, n: sums.n() })
    }

    /// Level indices admissible on `[i, j]`, empty when none.
    fn admissible(&self, i: usize, j: usize) -> std::ops::Range<usize> {
        let (lo, hi) = self.env.bounds(i, j);
        if lo > hi {
            return 0..0;
        }
        let a = self.levels.partition_point(|&v| v < lo);
        let b = self.levels.partition_point(|&v| v <= hi);
        a..b.max(a)
    }

    fn jump_tables(&self) -> JumpTables {
        let n = self.n;
        let nl = self.levels.len();
        let mut forward = vec![UNREACHED; n * nl];
        let mut mins: Vec<RowMin<u32>> = Vec::with_capacity(n);
        let mut floor = 1;
        for j in 1..=n {
            for i in (floor..=j).rev() {
                let range = self.admissible(i, j);
                if range.is_empty() {
                    // no longer segment through [i, j] can be admissible
                    floor = i + 1;
                    break;
                }
                for l in range {
                    let cand = if i == 1 {
                        0
                    } else {
                        let prev = mins[i - 2].excluding(l);
                        if prev == UNREACHED {
                            continue;
                        }
                        prev + 1
                    };
                    let slot = &mut forward[(j - 1) * nl + l];
                    *slot = (*slot).min(cand);
                }
            }
            mins.push(RowMin::of(&forward[(j - 1) * nl..j * nl], UNREACHED));
        }

        let mut backward = vec![UNREACHED; n * nl];
        let mut mins: Vec<Option<RowMin<u32>>> = vec![None; n + 2];
        let mut ceil = n;
        for i in (1..=n).rev() {
            for j in i..=ceil {
                let range = self.admissible(i, j);
                if range.is_empty() {
                    ceil = j - 1;
                    break;
                }
                for l in range {
                    let cand = if j == n {
                        0
                    } else {
                        let prev = mins[j + 1].expect("row computed").excluding(l);
                        if prev == UNREACHED {
                            continue;
                        }
                        prev + 1
                    };
                    let slot = &mut backward[(i - 1) * nl + l];
                    *slot = (*slot).min(cand);
                }
            }
            mins[i] = Some(RowMin::of(&backward[(i - 1) * nl..i * nl], UNREACHED));
        }
        JumpTables { forward, backward }
    }

    /// Fewest jumps of an admissible signal.
    pub fn minimal_jumps(&self) -> Result<usize> {
        let tables = self.jump_tables();
        self.k_hat(&tables)
    }

    fn k_hat(&self, tables: &JumpTables) -> Result<usize> {
        let nl = self.levels.len();
        let k = tables.forward[(self.n - 1) * nl..].iter().copied().min().unwrap_or(UNREACHED);
        if k == UNREACHED {
            return Err(Error::Infeasible);
        }
        Ok(k as usize)
    }

    /// Fewest jumps and the least-squares admissible signal with that many.
    pub fn solve(&self) -> Result<(usize, StepSignal, f64)> {
        let tables = self.jump_tables();
        let k = self.k_hat(&tables)?;
        let (g, loss) = self.fit_with(&tables, k)?;
        Ok((k, g, loss))
    }

    /// Least-squares admissible signal with exactly `k` jumps.
    pub fn fit(&self, k: usize) -> Result<(StepSignal, f64)> {
        let tables = self.jump_tables();
        self.fit_with(&tables, k)
    }

    fn fit_with(&self, tables: &JumpTables, k: usize) -> Result<(StepSignal, f64)> {
        let n = self.n;
        let nl = self.levels.len();
        let kk = k as u32;
        // jump-count window per segment end p
        let mut c_lo = vec![0u32; n + 1];
        let mut c_hi = vec![0i64; n + 1];
        for p in 1..=n {
            c_lo[p] = tables.forward[(p - 1) * nl..p * nl].iter().copied().min().unwrap();
            c_hi[p] = if p == n {
                kk as i64
            } else {
                let rest = tables.backward[p * nl..(p + 1) * nl].iter().copied().min().unwrap();
                if rest == UNREACHED {
                    -1
                } else {
                    kk as i64 - 1 - rest as i64
                }
            };
        }
        let width = |p: usize| -> usize {
            if c_lo[p] == UNREACHED || c_hi[p] < c_lo[p] as i64 {
                0
            } else {
                (c_hi[p] - c_lo[p] as i64 + 1) as usize
            }
        };
        // cost[p][(c - c_lo[p]) * nl + l]
        let mut cost: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        let mut back: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n + 1];
        let mut mins: Vec<Vec<RowMin<f64>>> = vec![Vec::new(); n + 1];
        let mut floor = 1;
        for j in 1..=n {
            let w = width(j);
            let mut row = vec![f64::INFINITY; w * nl];
            let mut row_back = vec![(0u32, 0u32); w * nl];
            for i in (floor..=j).rev() {
                let range = self.admissible(i, j);
                if range.is_empty() {
                    floor = i + 1;
                    break;
                }
                if w == 0 {
                    continue;
                }
                for l in range {
                    let seg = self.sums.sse(i, j, self.levels[l]);
                    for slot in 0..w {
                        let c = c_lo[j] as usize + slot;
                        let (total, prev) = if i == 1 {
                            if c != 0 {
                                continue;
                            }
                            (seg, u32::MAX)
                        } else {
                            let p = i - 1;
                            if c == 0 || width(p) == 0 {
                                continue;
                            }
                            let cp = c - 1;
                            if cp < c_lo[p] as usize || cp as i64 > c_hi[p] {
                                continue;
                            }
                            let rm = &mins[p][cp - c_lo[p] as usize];
                            let (best, arg) = if l == rm.arg {
                                (rm.second, second_arg(&cost[p], cp - c_lo[p] as usize, nl, l))
                            } else {
                                (rm.best, rm.arg)
                            };
                            if !best.is_finite() {
                                continue;
                            }
                            (seg + best, arg as u32)
                        };
                        let idx = slot * nl + l;
                        // ties: keep the earlier start, scanned last
                        if total <= row[idx] {
                            row[idx] = total;
                            row_back[idx] = (i as u32, prev);
                        }
                    }
                }
            }
            mins[j] = (0..w).map(|s| RowMin::of(&row[s * nl..(s + 1) * nl], f64::INFINITY)).collect();
            cost[j] = row;
            back[j] = row_back;
        }
        if width(n) == 0 || (kk as i64) < c_lo[n] as i64 {
            return Err(Error::Infeasible);
        }
        let slot = k - c_lo[n] as usize;
        let last = &cost[n][slot * nl..(slot + 1) * nl];
        let rm = RowMin::of(last, f64::INFINITY);
        if !rm.best.is_finite() {
            return Err(Error::Infeasible);
        }
        let loss = rm.best;
        // walk back
        let mut segments = Vec::with_capacity(k + 1);
        let (mut p, mut c, mut l) = (n, k, rm.arg);
        loop {
            let (i, prev) = back[p][(c - c_lo[p] as usize) * nl + l];
            let i = i as usize;
            segments.push(Segment { start: i, end: p, level: self.levels[l] });
            if i == 1 {
                break;
            }
            p = i - 1;
            c -= 1;
            l = prev as usize;
        }
        segments.reverse();
        Ok((StepSignal::new(n, segments)?, loss))
    }
}

/// Lowest level index other than `skip` attaining the second-best cost.
fn second_arg(row: &[f64], slot: usize, nl: usize, skip: usize) -> usize {
    let vals = &row[slot * nl..(slot + 1) * nl];
    let mut arg = usize::MAX;
    let mut best = f64::INFINITY;
    for (l, &v) in vals.iter().enumerate() {
        if l != skip && v < best {
            best = v;
            arg = l;
        }
    }
    arg
}

/// Fewest jumps of a signal with levels in `levels` satisfying the
/// multiscale constraint at threshold `q`.
pub fn minimal_jumps(y: &[f64], levels: &[f64], sigma: f64, q: f64, system: &IntervalSystem) -> Result<usize> {
    let boxes = BoxSystem::new(y, sigma, q, *system)?;
    let env = EnvelopeTables::build(&boxes)?;
    SegmentationDp::new(levels, &env, boxes.sums())?.minimal_jumps()
}

/// Least-squares signal with exactly `k_hat` jumps under the constraint.
pub fn constrained_mle(
    y: &[f64],
    levels: &[f64],
    sigma: f64,
    q: f64,
    k_hat: usize,
    system: &IntervalSystem,
) -> Result<StepSignal> {
    let boxes = BoxSystem::new(y, sigma, q, *system)?;
    let env = EnvelopeTables::build(&boxes)?;
    SegmentationDp::new(levels, &env, boxes.sums())?.fit(k_hat).map(|(g, _)| g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFit {
    pub g_hat: StepSignal,
    pub k_hat: usize,
    pub loss: f64,
}

/// Both stages with one envelope.
pub fn estimate_signal(y: &[f64], levels: &[f64], sigma: f64, q: f64, system: &IntervalSystem) -> Result<SignalFit> {
    let boxes = BoxSystem::new(y, sigma, q, *system)?;
    let env = EnvelopeTables::build(&boxes)?;
    let (k_hat, g_hat, loss) = SegmentationDp::new(levels, &env, boxes.sums())?.solve()?;
    Ok(SignalFit { g_hat, k_hat, loss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSources {
    pub sources: SourceSet,
    /// Per source segment: its level was generated by several tuples.
    pub ambiguous: Vec<bool>,
}

/// Tuples behind the levels of `g_hat`; collisions resolve to the
/// lexicographically smallest tuple and are flagged.
pub fn decode_sources(g_hat: &StepSignal, levels: &LevelSet) -> Result<DecodedSources> {
    let mut runs: Vec<SourceSegment> = Vec::with_capacity(g_hat.segments().len());
    let mut ambiguous: Vec<bool> = Vec::with_capacity(g_hat.segments().len());
    for s in g_hat.segments() {
        let idx = levels.index_of(s.level).ok_or(Error::UnknownLevel(s.level))?;
        let tuples = levels.tuples_of(idx);
        let tuple = tuples[0].clone();
        let amb = tuples.len() > 1;
        match runs.last_mut() {
            Some(last) if last.tuple == tuple => {
                last.end = s.end;
                *ambiguous.last_mut().unwrap() |= amb;
            }
            _ => {
                runs.push(SourceSegment { start: s.start, end: s.end, tuple });
                ambiguous.push(amb);
            }
        }
    }
    let sources = SourceSet::new(g_hat.n(), levels.m(), runs, levels.alphabet())?;
    Ok(DecodedSources { sources, ambiguous })
}

/// Admissible tuples on one segment of the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSegment {
    pub start: usize,
    pub end: usize,
    pub level: f64,
    pub envelope: (f64, f64),
    pub tuples: Vec<Vec<f64>>,
    /// Admissible alphabet values per source, ascending.
    pub per_source: Vec<Vec<f64>>,
    /// Per source: number of admissible values besides the estimate's own.
    pub deviation_count: Vec<usize>,
    /// No tuple was admissible before adding the estimate's own.
    pub misfit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandProjection {
    pub segments: Vec<BandSegment>,
}

impl BandProjection {
    /// Whether every value of every source lies in the band.
    pub fn covers(&self, sources: &SourceSet) -> bool {
        (0..sources.m()).all(|r| self.covers_source(sources, r))
    }

    /// Whether source `r` (0-based) lies in the band at every grid point.
    pub fn covers_source(&self, sources: &SourceSet, r: usize) -> bool {
        self.segments.iter().all(|seg| {
            (seg.start..=seg.end).all(|j| seg.per_source[r].contains(&sources.tuple_at(j)[r]))
        })
    }

    pub fn misfit(&self) -> bool {
        self.segments.iter().any(|s| s.misfit)
    }
}

/// Per-segment projection of the source band built from the enlarged
/// penalty at threshold `beta_q`.
#[allow(clippy::too_many_arguments)]
pub fn confidence_band(
    y: &[f64],
    w: &Weights,
    sigma: f64,
    beta_q: f64,
    lambda: f64,
    alphabet: &Alphabet,
    g_hat: &StepSignal,
    system: &IntervalSystem,
) -> Result<BandProjection> {
    let m = w.m();
    let pen = Penalty::modified(alphabet, m, sigma, lambda, system.n())?;
    let boxes = BoxSystem::with_penalty(y, sigma, beta_q, *system, pen)?;
    let env = EnvelopeTables::build(&boxes)?;
    let all: Vec<(f64, Vec<f64>)> = alphabet.tuples(m)?.map(|t| (encode(w, &t), t)).collect();
    let mut segments = Vec::with_capacity(g_hat.segments().len());
    for s in g_hat.segments() {
        let (lo, hi) = env.bounds(s.start, s.end);
        let mut tuples: Vec<Vec<f64>> = all
            .iter()
            .filter(|(v, _)| lo <= *v && *v <= hi)
            .map(|(_, t)| t.clone())
            .collect();
        let misfit = tuples.is_empty();
        let own = all
            .iter()
            .filter(|(v, _)| (v - s.level).abs() <= COLLISION_TOL)
            .map(|(_, t)| t)
            .min_by(|a, b| lex_cmp(a, b));
        if let Some(own) = own {
            if !tuples.contains(own) {
                tuples.push(own.clone());
                tuples.sort_by(|a, b| lex_cmp(a, b));
            }
        }
        let per_source: Vec<Vec<f64>> = (0..m)
            .map(|r| {
                let mut vals: Vec<f64> = tuples.iter().map(|t| t[r]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                vals
            })
            .collect();
        let deviation_count = per_source.iter().map(|v| v.len().saturating_sub(1)).collect();
        segments.push(BandSegment {
            start: s.start,
            end: s.end,
            level: s.level,
            envelope: (lo, hi),
            tuples,
            per_source,
            deviation_count,
            misfit,
        });
    }
    Ok(BandProjection { segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_set_examples() {
        let b = Alphabet::range(2).unwrap();
        let ls = LevelSet::new(&Weights::new(vec![0.3, 0.7]).unwrap(), &b, COLLISION_TOL).unwrap();
        assert_eq!(ls.levels(), &[0.0, 0.3, 0.7, 1.0]);
        assert!(ls.collisions().is_empty());
        let ls = LevelSet::new(&Weights::new(vec![0.5, 0.5]).unwrap(), &b, COLLISION_TOL).unwrap();
        assert_eq!(ls.levels(), &[0.0, 0.5, 1.0]);
        assert_eq!(ls.collisions(), vec![1]);
        assert_eq!(ls.tuples_of(1), &[vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn decode_with_collision_flags() {
        let b = Alphabet::range(2).unwrap();
        let w = Weights::new(vec![0.5, 0.5]).unwrap();
        let ls = LevelSet::new(&w, &b, COLLISION_TOL).unwrap();
        let g = StepSignal::from_values(&[0.0, 0.0, 0.5, 0.5, 1.0]).unwrap();
        let d = decode_sources(&g, &ls).unwrap();
        assert_eq!(d.sources.segments().len(), 3);
        assert_eq!(d.sources.segments()[1].tuple, vec![0.0, 1.0]);
        assert_eq!(d.ambiguous, vec![false, true, false]);
        let bad = StepSignal::from_values(&[0.25, 0.5]).unwrap();
        assert_eq!(decode_sources(&bad, &ls).unwrap_err(), Error::UnknownLevel(0.25));
    }

    #[test]
    fn noiseless_two_segment_recovery() {
        let levels = [0.0, 0.3, 0.7, 1.0];
        let mut y = vec![0.3; 20];
        y.extend(vec![1.0; 20]);
        let sys = IntervalSystem::full(40).unwrap();
        let fit = estimate_signal(&y, &levels, 0.1, 0.0, &sys).unwrap();
        assert_eq!(fit.k_hat, 1);
        assert_eq!(fit.g_hat.to_values(), y);
        assert!(fit.loss.abs() < 1e-12);
    }

    #[test]
    fn constant_data_needs_no_jump() {
        let y = vec![0.7; 16];
        let sys = IntervalSystem::dyadic(16).unwrap();
        assert_eq!(minimal_jumps(&y, &[0.0, 0.7, 1.0], 0.1, 0.5, &sys).unwrap(), 0);
    }

    #[test]
    fn infeasible_when_no_level_fits() {
        let y = vec![0.5; 16];
        let sys = IntervalSystem::full(16).unwrap();
        assert_eq!(minimal_jumps(&y, &[0.0, 1.0], 0.01, 0.0, &sys), Err(Error::Infeasible));
    }
}
