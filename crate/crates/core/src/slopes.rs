//! Slopes, finite-resolution slope probes around a point, and grid decompositions.

use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{ceil, floor, int, pow2, CauchyName, Rational};
use crate::function::{Identity, LinearCombination, MonotoneRationalFunction, PiecewiseLinear, RationalFn, SharedFn};

/// `S_f(a, b) = (f(b) - f(a))/(b - a)`, from values within `2^-p`.
pub fn slope(f: &dyn RationalFn, a: &Rational, b: &Rational, p: u32) -> Result<Rational> {
    if a == b {
        return Err(Error::PreconditionViolated("slope needs a != b".into()));
    }
    Ok((f.value(b, p)? - f.value(a, p)?) / (b - a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeSample {
    pub a: Rational,
    pub b: Rational,
    pub slope: Rational,
}

impl SlopeSample {
    pub fn h(&self) -> Rational {
        &self.b - &self.a
    }
}

/// Point a probe is centred on.
#[derive(Debug, Clone)]
pub enum Target {
    Exact(Rational),
    Name(CauchyName),
}

impl Target {
    /// `a ≤ z`, with ties within `2^-p` counted as true.
    fn at_least(&self, a: &Rational, p: u32) -> bool {
        match self {
            Target::Exact(z) => a <= z,
            Target::Name(x) => a <= &(x.approx(p) + pow2(-(p as i64))),
        }
    }

    /// `z ≤ b`, with ties counted as true.
    fn at_most(&self, b: &Rational, p: u32) -> bool {
        match self {
            Target::Exact(z) => z <= b,
            Target::Name(x) => &(x.approx(p) - pow2(-(p as i64))) <= b,
        }
    }

    fn centre(&self, p: u32) -> Rational {
        match self {
            Target::Exact(z) => z.clone(),
            Target::Name(x) => x.approx(p),
        }
    }
}

impl From<Rational> for Target {
    fn from(z: Rational) -> Self {
        Target::Exact(z)
    }
}

impl From<CauchyName> for Target {
    fn from(z: CauchyName) -> Self {
        Target::Name(z)
    }
}

/// Sampling grid: multiples of `2^-exponent`, coarsened so each side of the
/// window holds at most `max_points` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub exponent: u32,
    pub max_points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        ProbeGrid { exponent: 14, max_points: 128 }
    }
}

impl ProbeGrid {
    /// Step exponent used at window radius `h`.
    pub fn step_exponent(&self, h: &Rational) -> u32 {
        let mut e = self.exponent;
        while e > 0 && h / pow2(-(e as i64)) > int(self.max_points as i64) {
            e -= 1;
        }
        e
    }

    fn points(&self, lo: &Rational, hi: &Rational, h: &Rational) -> Vec<Rational> {
        let step = pow2(-(self.step_exponent(h) as i64));
        let lo = crate::exact::max_r(lo, &Rational::zero()).clone();
        let hi = crate::exact::min_r(hi, &Rational::one()).clone();
        let first = ceil(&(&lo / &step));
        let last = floor(&(&hi / &step));
        let mut out = vec![];
        let mut i = first;
        while i <= last {
            out.push(Rational::from_integer(i.clone()) * &step);
            i += 1;
        }
        out
    }
}

/// Default resolutions `2^-1, …, 2^-12`.
pub fn default_schedule() -> Vec<Rational> {
    (1..=12).map(|j| pow2(-j)).collect()
}

/// Sup and inf of slopes seen at one resolution.
///
/// `sup` is a lower bound for the true sup over the family, `inf` an upper
/// bound for the true inf.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub h: Rational,
    pub sup: Option<SlopeSample>,
    pub inf: Option<SlopeSample>,
    pub n_pairs: usize,
}

impl ProbeRecord {
    fn new(h: Rational) -> Self {
        ProbeRecord { h, sup: None, inf: None, n_pairs: 0 }
    }

    fn offer(&mut self, s: SlopeSample) {
        self.n_pairs += 1;
        if self.sup.as_ref().is_none_or(|t| s.slope > t.slope) {
            self.sup = Some(s.clone());
        }
        if self.inf.as_ref().is_none_or(|t| s.slope < t.slope) {
            self.inf = Some(s);
        }
    }

    pub fn sup_slope(&self) -> Option<&Rational> {
        self.sup.as_ref().map(|s| &s.slope)
    }

    pub fn inf_slope(&self) -> Option<&Rational> {
        self.inf.as_ref().map(|s| &s.slope)
    }
}

#[derive(Debug, Clone)]
pub struct DerivativeProbe {
    pub target: Target,
    pub grid: ProbeGrid,
    pub records: Vec<ProbeRecord>,
}

impl DerivativeProbe {
    /// `h,sup_slope,inf_slope,n_pairs` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,sup_slope,inf_slope,n_pairs\n");
        for r in &self.records {
            let show = |v: Option<&Rational>| v.map(ToString::to_string).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.h, show(r.sup_slope()), show(r.inf_slope()), r.n_pairs));
        }
        out
    }
}

fn straddle_precision(grid: &ProbeGrid) -> u32 {
    grid.exponent + 4
}

fn scan(
    f: &dyn RationalFn,
    target: &Target,
    h: &Rational,
    grid: &ProbeGrid,
    p: u32,
    keep: impl Fn(&Rational, &Rational) -> bool,
) -> Result<ProbeRecord> {
    let sp = straddle_precision(grid);
    let z = target.centre(sp);
    let slack = pow2(-(sp as i64));
    let lefts: Vec<Rational> = grid
        .points(&(&z - h - &slack), &(&z + &slack), h)
        .into_iter()
        .filter(|a| target.at_least(a, sp))
        .collect();
    let rights: Vec<Rational> = grid
        .points(&(&z - &slack), &(&z + h + &slack), h)
        .into_iter()
        .filter(|b| target.at_most(b, sp))
        .collect();
    let mut values = std::collections::HashMap::new();
    for x in lefts.iter().chain(&rights) {
        if !values.contains_key(x) {
            values.insert(x.clone(), f.value(x, p)?);
        }
    }
    let mut rec = ProbeRecord::new(h.clone());
    for a in &lefts {
        for b in &rights {
            let w = b - a;
            if !w.is_positive() || &w > h || !keep(a, b) {
                continue;
            }
            let slope = (&values[b] - &values[a]) / &w;
            rec.offer(SlopeSample { a: a.clone(), b: b.clone(), slope });
        }
    }
    Ok(rec)
}

/// Slopes over grid pairs `a ≤ z ≤ b` with `0 < b - a ≤ h`, one record per `h`.
pub fn pseudo_derivative_probe(
    f: &dyn RationalFn,
    z: &Target,
    schedule: &[Rational],
    grid: &ProbeGrid,
) -> Result<DerivativeProbe> {
    let p = grid.exponent + 8;
    let records = schedule
        .par_iter()
        .map(|h| scan(f, z, h, grid, p, |_, _| true))
        .collect::<Result<Vec<_>>>()?;
    Ok(DerivativeProbe { target: z.clone(), grid: grid.clone(), records })
}

/// Slopes over grid pairs with `z` in the middle third of `[a, b]` and `b - a ≤ h`.
pub fn middle_third_slopes(f: &dyn RationalFn, z: &Target, h: &Rational, grid: &ProbeGrid) -> Result<ProbeRecord> {
    let sp = straddle_precision(grid);
    let p = grid.exponent + 8;
    scan(f, z, h, grid, p, |a, b| {
        let third = (b - a) / int(3);
        z.at_least(&(a + &third), sp) && z.at_most(&(b - &third), sp)
    })
}

/// Grid Jordan decomposition `f = f0 - f1` with both parts nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridJordan {
    pub f0: PiecewiseLinear,
    pub f1: PiecewiseLinear,
    pub variation: Rational,
}

pub fn jordan_decompose(f: &dyn RationalFn, grid: &[Rational]) -> Result<GridJordan> {
    if !f.is_exact() {
        return Err(Error::NotExact);
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    let values = grid.iter().map(|q| f.value(q, 0)).collect::<Result<Vec<_>>>()?;
    let mut var = Rational::zero();
    let mut f0 = vec![(grid[0].clone(), Rational::zero())];
    for i in 1..grid.len() {
        var += (&values[i] - &values[i - 1]).abs();
        f0.push((grid[i].clone(), var.clone()));
    }
    let f1 = f0.iter().zip(&values).map(|((q, v0), v)| (q.clone(), v0 - v)).collect();
    Ok(GridJordan { f0: PiecewiseLinear::new(f0)?, f1: PiecewiseLinear::new(f1)?, variation: var })
}

/// `f(x) = C·x - h(x)` after checking `|Δh| ≤ C·Δx` on adjacent grid points.
pub fn lipschitz_to_monotone(h: SharedFn, c: &Rational, grid: &[Rational]) -> Result<MonotoneRationalFunction> {
    for w in grid.windows(2) {
        let dh = (h.value(&w[1], 0)? - h.value(&w[0], 0)?).abs();
        if dh > c * (&w[1] - &w[0]) {
            return Err(Error::LipschitzViolated { a: w[0].clone(), b: w[1].clone() });
        }
    }
    let f = LinearCombination { terms: vec![(c.clone(), Arc::new(Identity)), (-Rational::one(), h)], offset: Rational::zero() };
    Ok(MonotoneRationalFunction::assume(Arc::new(f)))
}

/// `0, 1/n, …, 1`.
pub fn uniform_grid(n: usize) -> Vec<Rational> {
    (0..=n).map(|i| Rational::new(i.into(), n.into())).collect()
}
