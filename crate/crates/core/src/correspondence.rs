//! Transforms between atomless martingales and nondecreasing functions, and the
//! base-conversion pipeline built from them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::exact::{big_pow, floor, int, pow_int, Rational};
use crate::function::{RationalFn, SharedFn};
use crate::martingale::{all_strings, digits_value, GrowthBound, Martingale, SharedMartingale};

/// Default ceiling on martingale evaluations in one digit walk.
pub const DEFAULT_WALK_BUDGET: u128 = 1 << 20;

/// Deepest grid a bracketing evaluation may use.
pub const MAX_BRACKET_DEPTH: u32 = 4096;

/// Base-k digits of `i` padded to length `n`.
pub fn index_digits(i: &BigInt, k: u32, n: usize) -> Vec<u8> {
    let mut out = vec![0u8; n];
    let mut rest = i.clone();
    let kb = BigInt::from(k);
    for slot in out.iter_mut().rev() {
        let (d, r) = rest.div_rem(&kb);
        *slot = r.to_u8().expect("digit below base");
        rest = d;
    }
    out
}

/// Digits of `q = i·k^-n ∈ [0, 1)` with minimal `n`, if `q` is a base-k rational.
pub fn grid_digits(q: &Rational, k: u32) -> Option<Vec<u8>> {
    if q.is_negative() || q >= &Rational::one() {
        return None;
    }
    let d = q.denom();
    let mut pow = BigInt::one();
    for n in 0..=d.bits() as usize {
        if (&pow % d).is_zero() {
            let i = q.numer() * (&pow / d);
            return Some(index_digits(&i, k, n));
        }
        pow *= k;
    }
    None
}

/// Digits of the depth-`n` cell containing `q ∈ [0, 1)`.
pub fn floor_digits(q: &Rational, k: u32, n: usize) -> Vec<u8> {
    let i = floor(&(q * Rational::from_integer(big_pow(k, n as u32))));
    index_digits(&i, k, n)
}

/// `μ_M[0, 0.σ)` by walking the digits of `σ`: the mass of every cell left of the path.
pub fn grid_mass(m: &dyn Martingale, sigma: &[u8], p: u32, budget: u128) -> Result<Rational> {
    let k = m.base();
    let needed = sigma.len() as u128 * k as u128;
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, limit: budget });
    }
    let rows = m.walk(sigma, p)?;
    let mut acc = Rational::zero();
    let mut weight = Rational::one();
    let kr = int(k as i64);
    for (t, row) in rows.iter().enumerate() {
        weight /= &kr;
        let left: Rational = row[..sigma[t] as usize].iter().sum();
        acc += left * &weight;
    }
    Ok(acc)
}

/// `Fcn(M)(x) = μ_M[0, x)`.
#[derive(Clone)]
pub struct Fcn {
    m: SharedMartingale,
    bound: GrowthBound,
    budget: u128,
    /// Grid masses by digit prefix, kept only for exact martingales.
    prefix_mass: Option<Arc<Mutex<HashMap<Vec<u8>, Rational>>>>,
}

/// Builds `Fcn(M)`; the growth bound certifies that `μ_M` has no atoms.
pub fn fcn(m: SharedMartingale, bound: Option<GrowthBound>) -> Result<Fcn> {
    let bound = bound.ok_or(Error::NoAtomlessnessCertificate)?;
    if !bound.certifies_atomless(m.base()) {
        return Err(Error::NoAtomlessnessCertificate);
    }
    let prefix_mass = m.is_exact().then(|| Arc::new(Mutex::new(HashMap::new())));
    Ok(Fcn { m, bound, budget: DEFAULT_WALK_BUDGET, prefix_mass })
}

impl Fcn {
    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn martingale(&self) -> &SharedMartingale {
        &self.m
    }

    pub fn base(&self) -> u32 {
        self.m.base()
    }

    pub fn grid_value(&self, sigma: &[u8], p: u32) -> Result<Rational> {
        let Some(memo) = &self.prefix_mass else {
            return grid_mass(self.m.as_ref(), sigma, p, self.budget);
        };
        let needed = sigma.len() as u128 * self.base() as u128;
        if needed > self.budget {
            return Err(Error::BudgetExceeded { needed, limit: self.budget });
        }
        let (mut t, mut acc) = {
            let memo = memo.lock().expect("cache poisoned");
            (0..=sigma.len())
                .rev()
                .find_map(|t| memo.get(&sigma[..t]).map(|v| (t, v.clone())))
                .unwrap_or((0, Rational::zero()))
        };
        let k = self.base();
        let mut child = sigma[..t].to_vec();
        while t < sigma.len() {
            let weight = pow_int(k, -(t as i64) - 1);
            child.push(0);
            for c in 0..sigma[t] {
                *child.last_mut().expect("nonempty") = c;
                acc += self.m.eval(&child, p)? * &weight;
            }
            *child.last_mut().expect("nonempty") = sigma[t];
            t += 1;
            memo.lock().expect("cache poisoned").insert(child.clone(), acc.clone());
        }
        Ok(acc)
    }

    /// Grid depth used for a non-grid point at precision `p`.
    pub fn bracket_depth(&self, p: u32) -> Result<u32> {
        self.bound.depth_for(self.base(), p, MAX_BRACKET_DEPTH).ok_or(Error::BudgetExceeded {
            needed: MAX_BRACKET_DEPTH as u128 + 1,
            limit: MAX_BRACKET_DEPTH as u128,
        })
    }
}

impl RationalFn for Fcn {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational> {
        if !x.is_positive() {
            return Ok(Rational::zero());
        }
        if x >= &Rational::one() {
            return self.m.eval(&[], precision);
        }
        let k = self.base();
        if let Some(sigma) = grid_digits(x, k) {
            return self.grid_value(&sigma, precision);
        }
        // f(⌊x⌋_n) ≤ f(x) ≤ f(⌊x⌋_n) + k^-n·B(n)
        let n = self.bracket_depth(precision + 1)?;
        self.grid_value(&floor_digits(x, k, n as usize), precision + 1)
    }
    fn is_exact(&self) -> bool {
        false
    }
    fn exact_at(&self, x: &Rational) -> bool {
        self.m.is_exact() && (x <= &Rational::zero() || x >= &Rational::one() || grid_digits(x, self.base()).is_some())
    }
    fn exact_on_grid(&self, k: u32) -> bool {
        self.m.is_exact() && k == self.base()
    }
    fn name(&self) -> String {
        format!("Fcn({})", self.m.name())
    }
}

/// `Mart^k(f)(σ) = (f(0.σ + k^-n) - f(0.σ))·k^n`.
pub struct Mart {
    f: SharedFn,
    k: u32,
    exact: bool,
    cache: Option<Mutex<HashMap<Rational, Rational>>>,
}

pub fn mart(f: SharedFn, k: u32) -> Mart {
    let exact = f.exact_on_grid(k);
    Mart { f, k, exact, cache: None }
}

impl Mart {
    /// Remembers exact values of `f` at grid points.
    pub fn memoized(mut self) -> Self {
        if self.exact {
            self.cache = Some(Mutex::new(HashMap::new()));
        }
        self
    }

    pub fn function(&self) -> &SharedFn {
        &self.f
    }

    fn f_at(&self, x: &Rational, p: u32) -> Result<Rational> {
        if let Some(cache) = &self.cache {
            if let Some(v) = cache.lock().expect("cache poisoned").get(x) {
                return Ok(v.clone());
            }
            let v = self.f.value(x, p)?;
            cache.lock().expect("cache poisoned").insert(x.clone(), v.clone());
            return Ok(v);
        }
        self.f.value(x, p).map_err(|e| match e {
            Error::PreconditionViolated(_) => Error::DomainGap(x.clone()),
            other => other,
        })
    }
}

impl Martingale for Mart {
    fn base(&self) -> u32 {
        self.k
    }
    fn eval(&self, sigma: &[u8], p: u32) -> Result<Rational> {
        crate::martingale::check_digits(self.k, sigma)?;
        let i = sigma.iter().fold(BigInt::zero(), |acc, &d| acc * self.k + d);
        let scale = big_pow(self.k, sigma.len() as u32);
        let q = p + 1 + scale.bits() as u32;
        let fb = self.f_at(&Rational::new(&i + 1u8, scale.clone()), q)?;
        let fa = self.f_at(&Rational::new(i, scale.clone()), q)?;
        Ok((fb - fa) * Rational::from_integer(scale))
    }
    fn is_exact(&self) -> bool {
        self.exact
    }
    fn name(&self) -> String {
        format!("Mart^{}({})", self.k, self.f.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub at: String,
    pub expected: Rational,
    pub found: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripReport {
    pub base: u32,
    pub depth: usize,
    pub checked: usize,
    pub offset: Option<Rational>,
    pub mismatches: Vec<Mismatch>,
}

impl RoundTripReport {
    pub fn passed(&self) -> bool {
        self.offset.is_none() && self.mismatches.is_empty()
    }
}

fn label(sigma: &[u8]) -> String {
    if sigma.is_empty() {
        "∅".into()
    } else {
        sigma.iter().map(|d| char::from(b'0' + d)).collect()
    }
}

/// `Mart(Fcn(M)) = M` on every `|σ| ≤ depth`.
pub fn roundtrip_check(m: SharedMartingale, bound: Option<GrowthBound>, depth: usize) -> Result<RoundTripReport> {
    if !m.is_exact() {
        return Err(Error::NotExact);
    }
    let k = m.base();
    let f = fcn(m.clone(), bound.or_else(|| m.growth_bound()))?;
    let back = mart(Arc::new(f), k).memoized();
    let mut report = RoundTripReport { base: k, depth, checked: 0, offset: None, mismatches: vec![] };
    for n in 0..=depth {
        for s in all_strings(k, n) {
            let expected = m.eval(&s, 0)?;
            let found = back.eval(&s, 0)?;
            report.checked += 1;
            if expected != found {
                report.mismatches.push(Mismatch { at: label(&s), expected, found });
            }
        }
    }
    Ok(report)
}

/// `Fcn(Mart(f)) = f` on every grid point `i·k^-n`, `n ≤ depth`.
///
/// Only grid masses are needed, so no growth certificate is involved.
pub fn roundtrip_check_f(f: SharedFn, k: u32, depth: usize) -> Result<RoundTripReport> {
    if !f.exact_on_grid(k) {
        return Err(Error::NotExact);
    }
    let f0 = f.value(&Rational::zero(), 0)?;
    let m = mart(f.clone(), k).memoized();
    let mut report = RoundTripReport {
        base: k,
        depth,
        checked: 0,
        offset: (!f0.is_zero()).then_some(f0),
        mismatches: vec![],
    };
    for s in all_strings(k, depth) {
        // every shorter grid point is a prefix-padded point at this depth
        let x = digits_value(k, &s);
        let found = grid_mass(&m, &s, 0, u128::MAX)?;
        let expected = f.value(&x, 0)?;
        report.checked += 1;
        if expected != found {
            report.mismatches.push(Mismatch { at: x.to_string(), expected, found });
        }
    }
    let one = f.value(&Rational::one(), 0)?;
    let total = m.eval(&[], 0)?;
    report.checked += 1;
    if one != total {
        report.mismatches.push(Mismatch { at: "1".into(), expected: one, found: total });
    }
    Ok(report)
}

/// `Fcn(M)` made exact at every rational: values on the base-r grid of depth
/// `D` and linear inside each depth-`D` cell.
#[derive(Clone)]
pub struct TruncatedFcn {
    fcn: Fcn,
    depth: u32,
}

impl TruncatedFcn {
    pub fn new(fcn: Fcn, depth: u32) -> Self {
        TruncatedFcn { fcn, depth }
    }

    /// Bound on `|value(x) - Fcn(M)(x)|`: one cell mass at depth `D`.
    pub fn error_bound(&self) -> Rational {
        let r = self.fcn.base();
        self.fcn.bound.bound(self.depth) * pow_int(r, -(self.depth as i64))
    }
}

impl RationalFn for TruncatedFcn {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational> {
        let m = self.fcn.martingale();
        if !x.is_positive() {
            return Ok(Rational::zero());
        }
        if x >= &Rational::one() {
            return m.eval(&[], precision);
        }
        let r = self.fcn.base();
        let scaled = x * Rational::from_integer(big_pow(r, self.depth));
        let cell = floor(&scaled);
        let frac = &scaled - Rational::from_integer(cell.clone());
        let tau = index_digits(&cell, r, self.depth as usize);
        let lower = self.fcn.grid_value(&tau, precision)?;
        if frac.is_zero() {
            return Ok(lower);
        }
        let mass = m.eval(&tau, precision)? * pow_int(r, -(self.depth as i64));
        Ok(lower + frac * mass)
    }
    fn is_exact(&self) -> bool {
        self.fcn.martingale().is_exact()
    }
    fn name(&self) -> String {
        format!("Fcn_{}({})", self.depth, self.fcn.martingale().name())
    }
}

/// `N = Mart^k(Fcn(M))` with `Fcn(M)` truncated at base-r depth `D`.
///
/// `N` is itself an exact base-k martingale; its distance from the untruncated
/// conversion at `|σ| = n` is at most [`BaseConverted::error_bound`].
pub struct BaseConverted {
    inner: Mart,
    source_base: u32,
    truncation: Rational,
    depth: u32,
}

pub fn base_convert(m: SharedMartingale, k: u32, depth: u32) -> Result<BaseConverted> {
    if !m.is_exact() {
        return Err(Error::NotExact);
    }
    let r = m.base();
    let f = fcn(m.clone(), m.growth_bound())?;
    let t = TruncatedFcn::new(f, depth);
    let truncation = t.error_bound();
    Ok(BaseConverted { inner: mart(Arc::new(t), k).memoized(), source_base: r, truncation, depth })
}

impl BaseConverted {
    pub fn source_base(&self) -> u32 {
        self.source_base
    }

    pub fn truncation_depth(&self) -> u32 {
        self.depth
    }

    /// `2·B(D)·r^-D·k^n`.
    pub fn error_bound(&self, n: usize) -> Rational {
        int(2) * &self.truncation * pow_int(self.inner.k, n as i64)
    }
}

impl Martingale for BaseConverted {
    fn base(&self) -> u32 {
        self.inner.k
    }
    fn eval(&self, sigma: &[u8], p: u32) -> Result<Rational> {
        self.inner.eval(sigma, p)
    }
    fn is_exact(&self) -> bool {
        self.inner.exact
    }
    fn name(&self) -> String {
        format!("convert {} -> {} ({})", self.source_base, self.inner.k, self.inner.f.name())
    }
}
