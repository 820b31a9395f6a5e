//! Compiling a finite nested dyadic cover into a sum of sawtooth functions,
//! with certified evaluation, slope witnesses and variation accounting.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{floor, int, parse_rational, pow2, pow_int, CauchyName, Rational};
use crate::function::{sawtooth_eval, RationalFn};

/// Total chunk limit for one refinement.
pub const MAX_CHUNKS: u64 = 1 << 26;

pub fn is_dyadic(q: &Rational) -> bool {
    let d = q.denom().magnitude();
    d.count_ones() == 1
}

/// Finite levels of open intervals with dyadic endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCover {
    levels: Vec<Vec<(Rational, Rational)>>,
}

#[derive(Serialize, Deserialize)]
struct IntervalJson {
    a: String,
    b: String,
}

#[derive(Serialize, Deserialize)]
struct CoverJson {
    levels: Vec<Vec<IntervalJson>>,
}

fn union_measure(intervals: &[(Rational, Rational)]) -> Rational {
    let mut sorted = intervals.to_vec();
    sorted.sort();
    let mut total = Rational::zero();
    let mut cur: Option<(Rational, Rational)> = None;
    for (a, b) in sorted {
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

impl EffectiveCover {
    pub fn new(levels: Vec<Vec<(Rational, Rational)>>) -> Result<Self> {
        for (m, level) in levels.iter().enumerate() {
            for (a, b) in level {
                if !is_dyadic(a) || !is_dyadic(b) {
                    return Err(Error::PreconditionViolated(format!("level {m}: endpoints of ({a}, {b}) must be dyadic")));
                }
                if a >= b || a.is_negative() || b > &Rational::one() {
                    return Err(Error::PreconditionViolated(format!("level {m}: ({a}, {b}) is not a subinterval of [0, 1]")));
                }
            }
        }
        Ok(EffectiveCover { levels })
    }

    pub fn levels(&self) -> &[Vec<(Rational, Rational)>] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `λG_m` of the union at level `m`.
    pub fn measure(&self, m: usize) -> Rational {
        self.levels.get(m).map_or_else(Rational::zero, |l| union_measure(l))
    }

    /// Checks `λG_m ≤ 8^{-m}` at every level.
    pub fn check_measures(&self) -> Result<()> {
        for m in 0..self.depth() {
            let measure = self.measure(m);
            if measure > pow_int(8, -(m as i64)) {
                return Err(Error::MeasureTooLarge { level: m, measure });
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let raw: CoverJson = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse(e.to_string()))?;
        let mut levels = vec![];
        for (m, level) in raw.levels.iter().enumerate() {
            let mut out = vec![];
            for (l, iv) in level.iter().enumerate() {
                let a = parse_rational(&iv.a).map_err(|e| Error::Parse(format!("/levels/{m}/{l}/a: {e}")))?;
                let b = parse_rational(&iv.b).map_err(|e| Error::Parse(format!("/levels/{m}/{l}/b: {e}")))?;
                out.push((a, b));
            }
            levels.push(out);
        }
        EffectiveCover::new(levels)
    }

    pub fn to_json(&self) -> String {
        let raw = CoverJson {
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|(a, b)| IntervalJson { a: a.to_string(), b: b.to_string() }).collect())
                .collect(),
        };
        serde_json::to_string(&raw).expect("cover serializes")
    }
}

/// Depths of the fixture's nested basic dyadic intervals around `1/3`.
pub const FIXTURE_DEPTHS: [u32; 7] = [2, 3, 6, 13, 22, 35, 50];

/// The basic dyadic interval of depth `n` containing `1/3`.
pub fn third_interval(n: u32) -> (Rational, Rational) {
    let w = BigInt::one() << n as usize;
    let j = &w / BigInt::from(3);
    (Rational::new(j.clone(), w.clone()), Rational::new(j + 1, w))
}

/// Nested single-interval cover around `1/3`, one interval per level.
pub fn sawtooth_fixture_cover() -> EffectiveCover {
    EffectiveCover::new(FIXTURE_DEPTHS.iter().map(|&e| vec![third_interval(e)]).collect()).expect("fixture is valid")
}

/// `count` consecutive chunks of length `len` starting at `start`; chunk `j`
/// of the run has index `first + j` in its level.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub start: Rational,
    pub len: Rational,
    pub count: u64,
    pub first: u64,
    pub parent: usize,
}

impl Run {
    pub fn end(&self) -> Rational {
        &self.start + &self.len * Rational::from_integer(self.count.into())
    }

    pub fn chunk(&self, j: u64) -> (Rational, Rational) {
        let a = &self.start + &self.len * Rational::from_integer(j.into());
        let b = &a + &self.len;
        (a, b)
    }

    /// Chunk index within the run whose closed interval holds `x`.
    fn locate(&self, x: &Rational) -> Option<u64> {
        if x < &self.start || x > &self.end() {
            return None;
        }
        let j = floor(&((x - &self.start) / &self.len)).to_u64()?;
        Some(j.min(self.count - 1))
    }
}

/// One refinement batch: the chunks of a single `D_{m,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub d: usize,
    pub delta: Rational,
    pub eps: Rational,
    pub runs: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub m: usize,
    pub scale: Rational,
    pub d: Vec<(Rational, Rational)>,
    pub runs: Vec<Run>,
    pub batches: Vec<Batch>,
    by_pos: Vec<usize>,
}

impl Level {
    pub fn chunk_count(&self) -> u64 {
        self.runs.iter().map(|r| r.count).sum()
    }

    pub fn measure(&self) -> Rational {
        self.runs.iter().map(|r| &r.len * Rational::from_integer(r.count.into())).sum()
    }

    /// Run and chunk index whose closed chunk holds `x`.
    pub fn locate(&self, x: &Rational) -> Option<(usize, u64)> {
        let pos = self.by_pos.partition_point(|&r| &self.runs[r].start <= x);
        (pos.saturating_sub(2)..pos).rev().find_map(|p| {
            let r = self.by_pos[p];
            self.runs[r].locate(x).map(|j| (r, j))
        })
    }

    /// `f_m(x)`.
    pub fn value(&self, x: &Rational) -> Rational {
        match self.locate(x) {
            Some((r, j)) => {
                let (a, b) = self.runs[r].chunk(j);
                sawtooth_eval(&a, &b, &self.scale, x)
            }
            None => Rational::zero(),
        }
    }

    /// `g_m(x)`: `+4^m` on left halves of chunks, `-4^m` on right halves.
    pub fn density(&self, x: &Rational) -> Rational {
        match self.locate(x) {
            Some((r, j)) => {
                let (a, b) = self.runs[r].chunk(j);
                if x <= &a || x >= &b {
                    return Rational::zero();
                }
                let mid = (&a + &b) / int(2);
                if x < &mid {
                    self.scale.clone()
                } else {
                    -self.scale.clone()
                }
            }
            None => Rational::zero(),
        }
    }

    /// `∫_0^x g_m`, summed run by run over the step function. Whole chunks
    /// integrate to zero, so only a chunk cut by `x` contributes.
    pub fn integral_to(&self, x: &Rational) -> Rational {
        let mut total = Rational::zero();
        for run in &self.runs {
            if &run.start >= x {
                continue;
            }
            let full = if x >= &run.end() {
                run.count
            } else {
                floor(&((x - &run.start) / &run.len)).to_u64().unwrap_or(0)
            };
            let h = &run.len / int(2);
            if full < run.count {
                let (a, _) = run.chunk(full);
                let t = x - &a;
                if t.is_positive() {
                    let up = if t < h { t.clone() } else { h.clone() };
                    let down = if t > h { &t - &h } else { Rational::zero() };
                    total += &self.scale * up - &self.scale * down;
                }
            }
        }
        total
    }

    /// Largest value of `f_m`, attained at the midpoint of the longest chunk.
    pub fn peak(&self) -> Rational {
        self.runs.iter().map(|r| &self.scale * &r.len / int(2)).max().unwrap_or_else(Rational::zero)
    }

    pub fn variation(&self) -> Rational {
        &self.scale * self.measure()
    }

    /// Every chunk endpoint and midpoint.
    pub fn breakpoints(&self) -> Vec<Rational> {
        let mut out = vec![];
        for run in &self.runs {
            let h = &run.len / int(2);
            for j in 0..run.count {
                let (a, _) = run.chunk(j);
                out.push(&a + &h);
                out.push(a);
            }
            out.push(run.end());
        }
        out
    }
}

/// The truncated `f = Σ_{m ≤ M} f_m` of a refined cover.
#[derive(Debug, Clone, PartialEq)]
pub struct SawtoothFunction {
    pub levels: Vec<Level>,
}

/// Splits `[lo, hi]` into chunks of length `c` and a shorter remainder.
fn chunk_segment(lo: &Rational, hi: &Rational, c: &Rational, parent: usize, out: &mut Vec<Run>) -> Result<()> {
    let q = floor(&((hi - lo) / c));
    let count = q.to_u64().filter(|&n| n <= MAX_CHUNKS).ok_or(Error::BudgetExceeded {
        needed: u128::MAX,
        limit: MAX_CHUNKS as u128,
    })?;
    if count > 0 {
        out.push(Run { start: lo.clone(), len: c.clone(), count, first: 0, parent });
    }
    let rest_start = lo + c * Rational::from_integer(q);
    if &rest_start < hi {
        out.push(Run { start: rest_start.clone(), len: hi - &rest_start, count: 1, first: 0, parent });
    }
    Ok(())
}

/// Largest power of two `≤ x`.
fn pow2_floor(x: &Rational) -> Rational {
    let mut e = x.numer().bits() as i64 - x.denom().bits() as i64;
    while pow2(e) > *x {
        e -= 1;
    }
    while pow2(e + 1) <= *x {
        e += 1;
    }
    pow2(e)
}

/// Parent-level chunks meeting `[a, b]` in position order, as `(start, len, count)` spans.
fn parent_spans(parent: &Level, a: &Rational, b: &Rational) -> Vec<(Rational, Rational, u64)> {
    let mut spans = vec![];
    for &r in &parent.by_pos {
        let run = &parent.runs[r];
        let end = run.end();
        if &end <= a || &run.start >= b {
            continue;
        }
        let first = if &run.start >= a { 0 } else { floor(&((a - &run.start) / &run.len)).to_u64().unwrap_or(0) };
        let last = if &end <= b {
            run.count
        } else {
            let c = crate::exact::ceil(&((b - &run.start) / &run.len)).to_u64().unwrap_or(run.count);
            c.min(run.count)
        };
        let (start, _) = run.chunk(first);
        spans.push((start, run.len.clone(), last - first));
    }
    spans
}

/// Builds the chunk families level by level, processing intervals in list order.
pub fn refine(cover: &EffectiveCover) -> Result<SawtoothFunction> {
    let mut levels: Vec<Level> = vec![];
    let mut total: u64 = 0;
    for (m, ds) in cover.levels().iter().enumerate() {
        let mut sorted = ds.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::PreconditionViolated(format!("level {m}: ({}, {}) overlaps ({}, {})", w[0].0, w[0].1, w[1].0, w[1].1)));
            }
        }
        let eight_m = pow_int(8, -(m as i64));
        let mut runs: Vec<Run> = vec![];
        let mut batches = vec![];
        let mut last_len: Option<Rational> = None;
        let mut next_index: u64 = 0;
        for (l, (a, b)) in ds.iter().enumerate() {
            let mut pieces = vec![];
            let pending;
            let mut delta = b - a;
            if m > 0 {
                let parent = &levels[m - 1];
                if !parent.d.iter().any(|(pa, pb)| pa <= a && b <= pb) {
                    return Err(Error::NestingViolated { level: m, a: a.clone(), b: b.clone() });
                }
                let spans = parent_spans(parent, a, b);
                for (_, len, _) in &spans {
                    delta = delta.min(len.clone());
                }
                let eps = eps_for(&last_len, &eight_m, l, &delta);
                let c = pow2_floor(&eps);
                for (start, len, count) in spans {
                    let span_end = &start + &len * Rational::from_integer(count.into());
                    let lo = a.max(&start).clone();
                    let hi = b.min(&span_end).clone();
                    if (&len / &c).is_integer() && (&(&start - &lo) / &c).is_integer() {
                        chunk_segment(&lo, &hi, &c, l, &mut pieces)?;
                    } else {
                        for j in 0..count {
                            let ca = &start + &len * Rational::from_integer(j.into());
                            let cb = &ca + &len;
                            let (lo, hi) = (a.max(&ca).clone(), b.min(&cb).clone());
                            if lo < hi {
                                chunk_segment(&lo, &hi, &c, l, &mut pieces)?;
                            }
                        }
                    }
                }
                pending = (l, delta, eps);
            } else {
                let eps = eps_for(&last_len, &eight_m, l, &delta);
                let c = pow2_floor(&eps);
                chunk_segment(a, b, &c, l, &mut pieces)?;
                pending = (l, delta, eps);
            }
            pieces.sort_by(|x, y| y.len.cmp(&x.len));
            let begin = runs.len();
            for mut p in pieces {
                p.first = next_index;
                next_index += p.count;
                total += p.count;
                if total > MAX_CHUNKS {
                    return Err(Error::BudgetExceeded { needed: total as u128, limit: MAX_CHUNKS as u128 });
                }
                last_len = Some(p.len.clone());
                runs.push(p);
            }
            let (d, delta, eps) = pending;
            batches.push(Batch { d, delta, eps, runs: begin..runs.len() });
        }
        let mut by_pos: Vec<usize> = (0..runs.len()).collect();
        by_pos.sort_by(|&x, &y| runs[x].start.cmp(&runs[y].start));
        levels.push(Level { m, scale: pow_int(4, m as i64), d: ds.clone(), runs, batches, by_pos });
    }
    Ok(SawtoothFunction { levels })
}

fn eps_for(last: &Option<Rational>, eight_m: &Rational, l: usize, delta: &Rational) -> Rational {
    let rule = eight_m * pow2(-(l as i64)) * delta;
    match last {
        Some(c) if c < &rule => c.clone(),
        _ => rule,
    }
}

impl SawtoothFunction {
    /// Index `M` of the last level.
    pub fn top_level(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    /// Exact truncated `f(x)`.
    pub fn exact(&self, x: &Rational) -> Rational {
        self.levels.iter().map(|l| l.value(x)).sum()
    }

    /// Partial sum over levels `k ≤ m` and chunks longer than `8^{-m}/(m+1)`;
    /// within `2^{-m}` of `f(x)`.
    pub fn f_eval(&self, x: &Rational, m: usize) -> Rational {
        let tau = pow_int(8, -(m as i64)) / int(m as i64 + 1);
        self.levels
            .iter()
            .take(m + 1)
            .map(|level| match level.locate(x) {
                Some((r, j)) if level.runs[r].len > tau => {
                    let (a, b) = level.runs[r].chunk(j);
                    sawtooth_eval(&a, &b, &level.scale, x)
                }
                _ => Rational::zero(),
            })
            .sum()
    }

    /// `Σ_{k > M} 2^{-k+2}`.
    pub fn truncation_slack(&self) -> Rational {
        pow2(2 - self.top_level() as i64)
    }

    /// Maximal slope of the truncated sum.
    pub fn lipschitz(&self) -> Rational {
        self.levels.iter().map(|l| l.scale.clone()).sum()
    }

    pub fn check_invariants(&self) -> SawtoothReport {
        let mut rep = SawtoothReport::default();
        for (m, level) in self.levels.iter().enumerate() {
            let eight_m = pow_int(8, -(m as i64));
            if level.runs.windows(2).any(|w| w[0].len < w[1].len) {
                rep.ordering.push(m);
            }
            for w in level.by_pos.windows(2) {
                if level.runs[w[0]].end() > level.runs[w[1]].start {
                    rep.overlapping.push(m);
                }
            }
            if level.peak() > pow2(-(m as i64) - 1) {
                rep.peak.push(m);
            }
            let mut prev_last: Option<Rational> = None;
            for (l, batch) in level.batches.iter().enumerate() {
                let (a, b) = &level.d[batch.d];
                let mut delta = b - a;
                if m > 0 {
                    for (_, len, _) in parent_spans(&self.levels[m - 1], a, b) {
                        delta = delta.min(len);
                    }
                }
                let rule = &eight_m * pow2(-(l as i64)) * &delta;
                let runs = &level.runs[batch.runs.clone()];
                let longest = runs.iter().map(|r| r.len.clone()).max();
                let within = longest.as_ref().is_none_or(|c| c <= &rule && prev_last.as_ref().is_none_or(|p| c <= p));
                if !within {
                    rep.eps_rule.push((m, l));
                }
                let covered: Rational = runs.iter().map(|r| &r.len * Rational::from_integer(r.count.into())).sum();
                if covered != b - a || runs.iter().any(|r| &r.start < a || &r.end() > b) {
                    rep.coverage.push((m, l));
                }
                prev_last = runs.last().map(|r| r.len.clone()).or(prev_last);
            }
            if m > 0 {
                let parent = &self.levels[m - 1];
                for (ri, run) in level.runs.iter().enumerate() {
                    if !run_inside_parent(run, parent, &eight_m) {
                        rep.shrinking.push((m, ri));
                    }
                }
            }
        }
        rep
    }
}

/// Every chunk of `run` lies in one parent chunk `A` with `|B| ≤ 8^{-m}|A|`.
fn run_inside_parent(run: &Run, parent: &Level, eight_m: &Rational) -> bool {
    let spans = parent_spans(parent, &run.start, &run.end());
    if run.count <= 4096 {
        return (0..run.count).all(|j| {
            let (a, b) = run.chunk(j);
            parent.locate(&((&a + &b) / int(2))).is_some_and(|(r, k)| {
                let (pa, pb) = parent.runs[r].chunk(k);
                pa <= a && b <= pb && run.len <= (eight_m * (&pb - &pa))
            })
        });
    }
    !spans.is_empty()
        && spans.iter().all(|(start, len, _)| {
            (len / &run.len).is_integer() && ((&run.start - start) / &run.len).is_integer() && run.len <= (eight_m * len)
        })
        && {
            let covered: Rational = spans.iter().map(|(_, len, c)| len * Rational::from_integer((*c).into())).sum();
            let (lo, hi) = (&spans[0].0, &spans.last().expect("nonempty").0 + &spans.last().expect("nonempty").1 * Rational::from_integer(spans.last().expect("nonempty").2.into()));
            lo <= &run.start && run.end() <= hi && covered == &hi - lo
        }
}

impl RationalFn for SawtoothFunction {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(self.exact(x))
    }
    fn name(&self) -> String {
        format!("sawtooth sum to level {}", self.top_level())
    }
}

/// Failing levels or `(level, index)` pairs for each invariant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SawtoothReport {
    pub ordering: Vec<usize>,
    pub overlapping: Vec<usize>,
    pub peak: Vec<usize>,
    pub eps_rule: Vec<(usize, usize)>,
    pub coverage: Vec<(usize, usize)>,
    pub shrinking: Vec<(usize, usize)>,
}

impl SawtoothReport {
    pub fn passed(&self) -> bool {
        self.ordering.is_empty()
            && self.overlapping.is_empty()
            && self.peak.is_empty()
            && self.eps_rule.is_empty()
            && self.coverage.is_empty()
            && self.shrinking.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondiffWitness {
    pub m: usize,
    pub a: Rational,
    pub b: Rational,
    pub half: Half,
    pub h: Rational,
    pub z_approx: Rational,
    pub slope: Rational,
    pub bound: Rational,
    pub truncation_slack: Rational,
    pub displacement_slack: Rational,
}

impl NondiffWitness {
    pub fn passed(&self) -> bool {
        self.slope >= &self.bound - &self.truncation_slack - &self.displacement_slack
    }
}

/// Slope of `f` at `z` across a quarter of the level-`m` chunk holding `z`,
/// taken inside the half of the chunk that holds `z`.
pub fn nondiff_witness(f: &SawtoothFunction, z: &CauchyName, m: usize) -> Result<NondiffWitness> {
    let level = f.levels.get(m).ok_or_else(|| Error::PreconditionViolated(format!("no level {m}")))?;
    let lip = f.lipschitz();
    let mut prec = 64u32;
    loop {
        let q = z.approx(prec);
        let e = pow2(-(prec as i64));
        let (lo, hi) = (&q - &e, &q + &e);
        let found = match (level.locate(&lo), level.locate(&hi)) {
            (Some(x), Some(y)) if x == y => {
                let (a, b) = level.runs[x.0].chunk(x.1);
                (a < lo && hi < b).then_some((a, b))
            }
            (None, None) => {
                let run_starts_inside = level.runs.iter().any(|r| r.start >= lo && r.start <= hi);
                if !run_starts_inside {
                    return Err(Error::NotInCover(m));
                }
                None
            }
            _ => None,
        };
        if let Some((a, b)) = found {
            let len = &b - &a;
            let quarter = &len / int(4);
            let (tlo, thi) = ((&lo - &a) / &len, (&hi - &a) / &len);
            let cuts = [Rational::new(1.into(), 4.into()), Rational::new(1.into(), 2.into()), Rational::new(3.into(), 4.into())];
            let straddles = cuts.iter().any(|c| &tlo <= c && c <= &thi);
            let disp = int(2) * &lip * &e / &quarter;
            if !straddles && disp <= pow2(-20) {
                let t = (&q - &a) / &len;
                let (half, h) = if t < cuts[1] {
                    (Half::Left, if t < cuts[0] { quarter.clone() } else { -quarter.clone() })
                } else {
                    (Half::Right, if t > cuts[2] { -quarter.clone() } else { quarter.clone() })
                };
                let slope = (f.exact(&(&q + &h)) - f.exact(&q)) / &h;
                let bound = pow_int(4, m as i64 - 1) - int(4);
                return Ok(NondiffWitness {
                    m,
                    a,
                    b,
                    half,
                    h,
                    z_approx: q,
                    slope,
                    bound,
                    truncation_slack: f.truncation_slack(),
                    displacement_slack: disp,
                });
            }
        }
        if prec >= 1 << 14 {
            return Err(Error::PrecisionUnavailable(format!("cannot place z relative to the level-{m} chunks")));
        }
        prec *= 2;
    }
}

/// Per-level `∫|g_m| = 4^m λG_m` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub per_level: Vec<Rational>,
    pub total: Rational,
}

impl Variation {
    /// `∫|g_m| ≤ 2^{-m}` at every level and total `≤ 2`.
    pub fn within_bounds(&self) -> bool {
        self.per_level.iter().enumerate().all(|(m, v)| v <= &pow2(-(m as i64))) && self.total <= int(2)
    }
}

/// Variation of the density `g = Σ g_m`; requires `λG_m ≤ 8^{-m}`.
pub fn density_and_variation(f: &SawtoothFunction) -> Result<Variation> {
    for level in &f.levels {
        let measure = union_measure(&level.d);
        if measure > pow_int(8, -(level.m as i64)) {
            return Err(Error::MeasureTooLarge { level: level.m, measure });
        }
    }
    let per_level: Vec<Rational> = f.levels.iter().map(Level::variation).collect();
    let total = per_level.iter().sum();
    Ok(Variation { per_level, total })
}

/// Same midpoints, three times the length, clipped to `[0, 1]`, overlaps merged.
pub fn dilated_cover(cover: &EffectiveCover) -> EffectiveCover {
    let levels = cover
        .levels()
        .iter()
        .map(|level| {
            let mut out: Vec<(Rational, Rational)> = level
                .iter()
                .map(|(a, b)| {
                    let len = b - a;
                    let lo = a - &len;
                    let hi = b + &len;
                    (lo.max(Rational::zero()), hi.min(Rational::one()))
                })
                .collect();
            out.sort();
            let mut merged: Vec<(Rational, Rational)> = vec![];
            for (a, b) in out {
                match merged.last_mut() {
                    Some(last) if a <= last.1 => {
                        if b > last.1 {
                            last.1 = b;
                        }
                    }
                    _ => merged.push((a, b)),
                }
            }
            merged
        })
        .collect();
    EffectiveCover { levels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusReport {
    pub level: usize,
    pub pairs: usize,
    pub max_diff: Rational,
    pub violations: Vec<(Rational, Rational)>,
}

/// Sampled pairs `|x − y| ≤ 8^{-m}`, half of them near the level-`m` cover,
/// checked for `|f(x) − f(y)| < 2^{-m+2}`.
pub fn modulus_probe(f: &SawtoothFunction, m: usize, pairs: usize, seed: u64) -> ModulusReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let grid = pow2(-64);
    let radius = pow_int(8, -(m as i64));
    let near: Vec<(Rational, Rational)> = f.levels.get(m).map(|l| l.d.clone()).unwrap_or_default();
    let samples: Vec<(Rational, Rational)> = (0..pairs)
        .map(|i| {
            let x = if i % 2 == 1 && !near.is_empty() {
                let (a, b) = &near[rng.gen_range(0..near.len())];
                let u = Rational::new(BigInt::from(rng.gen::<u64>()), BigInt::one() << 64);
                let span = (b - a) * int(3);
                (a - (b - a) + span * u).max(Rational::zero()).min(Rational::one())
            } else {
                Rational::from_integer(BigInt::from(rng.gen::<u64>())) * &grid
            };
            let u = Rational::new(BigInt::from(rng.gen::<u32>()), BigInt::one() << 32);
            let sign = if rng.gen::<bool>() { int(1) } else { int(-1) };
            let y = (&x + sign * &radius * u).max(Rational::zero()).min(Rational::one());
            (x, y)
        })
        .collect();
    let bound = pow2(2 - m as i64);
    let diffs: Vec<Rational> = samples.par_iter().map(|(x, y)| (f.exact(x) - f.exact(y)).abs()).collect();
    let violations = samples.iter().zip(&diffs).filter(|(_, d)| *d >= &bound).map(|(p, _)| p.clone()).collect();
    ModulusReport { level: m, pairs, max_diff: diffs.into_iter().max().unwrap_or_else(Rational::zero), violations }
}

/// Points where `f_m(x) ≠ ∫_0^x g_m`, over all breakpoints of level `m` plus
/// `extra` seeded random points.
pub fn integral_identity_failures(f: &SawtoothFunction, m: usize, extra: usize, seed: u64) -> Vec<Rational> {
    let Some(level) = f.levels.get(m) else { return vec![] };
    let mut points = level.breakpoints();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = level.d.iter().fold((Rational::one(), Rational::zero()), |(lo, hi), (a, b)| (lo.min(a.clone()), hi.max(b.clone())));
    for i in 0..extra {
        let u = Rational::new(BigInt::from(rng.gen::<u64>()), BigInt::one() << 64);
        points.push(if i % 2 == 0 && lo < hi { &lo + (&hi - &lo) * u } else { u });
    }
    points.into_par_iter().filter(|x| level.value(x) != level.integral_to(x)).collect()
}

/// Index of the level-`m` chunk holding `x`, if any.
pub fn chunk_index(level: &Level, x: &Rational) -> Option<u64> {
    level.locate(x).map(|(r, j)| level.runs[r].first + j)
}

/// The `i`-th chunk of a level in processing order.
pub fn chunk_by_index(level: &Level, i: u64) -> Option<(Rational, Rational)> {
    let r = level.runs.partition_point(|r| r.first + r.count <= i);
    let run = level.runs.get(r)?;
    (i >= run.first).then(|| run.chunk(i - run.first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    fn fixture() -> SawtoothFunction {
        refine(&sawtooth_fixture_cover()).unwrap()
    }

    #[test]
    fn fixture_shape() {
        let f = fixture();
        for (m, level) in f.levels.iter().enumerate() {
            assert_eq!(level.chunk_count(), 8u64.pow(m as u32));
            assert_eq!(level.measure(), pow2(-(FIXTURE_DEPTHS[m] as i64)));
        }
        assert!(f.check_invariants().passed(), "{:?}", f.check_invariants());
    }

    #[test]
    fn chunk_lookup() {
        let f = fixture();
        let z = rat(1, 3);
        for level in &f.levels {
            let i = chunk_index(level, &z).unwrap();
            let (a, b) = chunk_by_index(level, i).unwrap();
            assert!(a < z && z < b);
            let mid = (&a + &b) / int(2);
            assert!(z < mid);
        }
    }

    #[test]
    fn nesting_and_overlap_rejected() {
        let bad = EffectiveCover::new(vec![vec![(rat(0, 1), rat(1, 4))], vec![(rat(1, 8), rat(1, 2))]]).unwrap();
        assert!(matches!(refine(&bad), Err(Error::NestingViolated { level: 1, .. })));
        let overlap = EffectiveCover::new(vec![vec![(rat(0, 1), rat(1, 2)), (rat(1, 4), rat(3, 4))]]).unwrap();
        assert!(refine(&overlap).is_err());
        assert!(EffectiveCover::new(vec![vec![(rat(0, 1), rat(1, 3))]]).is_err());
    }

    #[test]
    fn empty_level_is_zero() {
        let cover = EffectiveCover::new(vec![vec![(rat(1, 4), rat(1, 2))], vec![]]).unwrap();
        let f = refine(&cover).unwrap();
        assert_eq!(f.levels[1].value(&rat(3, 8)), int(0));
        assert_eq!(f.levels[1].chunk_count(), 0);
    }

    #[test]
    fn eval_examples() {
        let f = fixture();
        assert_eq!(f.exact(&rat(7, 8)), int(0));
        assert_eq!(f.f_eval(&rat(7, 8), 3), int(0));
        for m in 0..=6 {
            for x in [rat(1, 3), rat(5, 16), rat(11, 32)] {
                assert!((f.f_eval(&x, m) - f.exact(&x)).abs() <= pow2(-(m as i64)));
            }
        }
    }

    #[test]
    fn variation_examples() {
        let single = refine(&EffectiveCover::new(vec![vec![(rat(0, 1), rat(1, 2))]]).unwrap()).unwrap();
        assert_eq!(density_and_variation(&single).unwrap().total, rat(1, 2));
        let empty = refine(&EffectiveCover::new(vec![]).unwrap()).unwrap();
        assert_eq!(density_and_variation(&empty).unwrap().total, int(0));
        let big = refine(&EffectiveCover::new(vec![vec![(rat(0, 1), rat(1, 2))], vec![(rat(0, 1), rat(1, 4))]]).unwrap()).unwrap();
        assert!(matches!(density_and_variation(&big), Err(Error::MeasureTooLarge { level: 1, .. })));
    }

    #[test]
    fn dilation_examples() {
        let c = EffectiveCover::new(vec![vec![(rat(1, 4), rat(1, 2))], vec![(rat(0, 1), rat(1, 16))]]).unwrap();
        let d = dilated_cover(&c);
        assert_eq!(d.levels()[0], vec![(rat(0, 1), rat(3, 4))]);
        let mid = dilated_cover(&EffectiveCover::new(vec![vec![(rat(3, 8), rat(1, 2))]]).unwrap());
        assert_eq!(mid.levels()[0], vec![(rat(1, 4), rat(5, 8))]);
        assert_eq!(d.levels()[1], vec![(rat(0, 1), rat(1, 8))]);
    }

    #[test]
    fn witness_outside_cover() {
        let f = fixture();
        let z = CauchyName::constant(rat(3, 4));
        assert!(matches!(nondiff_witness(&f, &z, 1), Err(Error::NotInCover(1))));
    }

    #[test]
    fn json_roundtrip() {
        let c = sawtooth_fixture_cover();
        assert_eq!(EffectiveCover::from_json(&c.to_json()).unwrap(), c);
        assert!(EffectiveCover::from_json(r#"{"levels":[[{"a":"1/0","b":"1/2"}]]}"#).is_err());
    }
}
