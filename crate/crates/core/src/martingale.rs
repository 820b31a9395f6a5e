//! Base-k martingales, the savings transform, capital traces and fairness checks.

use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{int, pow2, pow_int, Rational};

/// Digits over `{0, …, base-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DigitString {
    base: u32,
    digits: Vec<u8>,
}

impl DigitString {
    pub fn new(base: u32, digits: Vec<u8>) -> Result<Self> {
        if !(2..=255).contains(&base) {
            return Err(Error::InvalidConfig(format!("base {base} out of range")));
        }
        check_digits(base, &digits)?;
        Ok(DigitString { base, digits })
    }

    pub fn from_fn(base: u32, len: usize, f: impl Fn(usize) -> u8) -> Result<Self> {
        DigitString::new(base, (0..len).map(f).collect())
    }

    /// Parses a string of decimal digit characters such as `"0110"`.
    pub fn parse(base: u32, s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::Parse(format!("bad digit {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        DigitString::new(base, digits)
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// The base-k rational `0.σ`.
    pub fn value(&self) -> Rational {
        digits_value(self.base, &self.digits)
    }
}

impl fmt::Display for DigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

pub fn check_digits(base: u32, digits: &[u8]) -> Result<()> {
    match digits.iter().find(|&&d| u32::from(d) >= base) {
        Some(&d) => Err(Error::InvalidDigit { digit: d.into(), base }),
        None => Ok(()),
    }
}

/// `0.σ` in base `base`.
pub fn digits_value(base: u32, digits: &[u8]) -> Rational {
    let mut num = num_bigint::BigInt::zero();
    for &d in digits {
        num = num * base + d;
    }
    Rational::new(num, num_bigint::BigInt::from(base).pow(digits.len() as u32))
}

/// Enumerates all strings of length `n` in lexicographic order.
pub fn all_strings(base: u32, n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..base as u8).map(move |d| {
                    let mut t = s.clone();
                    t.push(d);
                    t
                })
            })
            .collect();
    }
    out
}

/// Certified bound `M(σ) ≤ B(|σ|)`.
#[derive(Clone)]
pub enum GrowthBound {
    Constant(Rational),
    /// `intercept + slope·n`; the savings bound is `M(∅) + 2n`.
    Linear { intercept: Rational, slope: Rational },
    /// `initial·ratio^n`.
    Geometric { initial: Rational, ratio: Rational },
    Custom(Arc<dyn Fn(u32) -> Rational + Send + Sync>),
}

impl fmt::Debug for GrowthBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthBound::Constant(c) => write!(f, "Constant({c})"),
            GrowthBound::Linear { intercept, slope } => write!(f, "Linear({intercept} + {slope}n)"),
            GrowthBound::Geometric { initial, ratio } => write!(f, "Geometric({initial}·{ratio}^n)"),
            GrowthBound::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl GrowthBound {
    pub fn savings(initial: Rational) -> Self {
        GrowthBound::Linear { intercept: initial, slope: int(2) }
    }

    pub fn bound(&self, n: u32) -> Rational {
        match self {
            GrowthBound::Constant(c) => c.clone(),
            GrowthBound::Linear { intercept, slope } => intercept + slope * int(n as i64),
            GrowthBound::Geometric { initial, ratio } => initial * num_traits::pow(ratio.clone(), n as usize),
            GrowthBound::Custom(f) => f(n),
        }
    }

    /// Whether `B(n)·k^-n → 0` is evident from the shape of the bound.
    pub fn certifies_atomless(&self, k: u32) -> bool {
        match self {
            GrowthBound::Geometric { ratio, .. } => ratio < &int(k as i64),
            _ => true,
        }
    }

    /// Smallest `n ≤ max_depth` with `B(n)·k^-n ≤ 2^-p`.
    pub fn depth_for(&self, k: u32, p: u32, max_depth: u32) -> Option<u32> {
        let target = pow2(-(p as i64));
        (0..=max_depth).find(|&n| self.bound(n) * pow_int(k, -(n as i64)) <= target)
    }
}

/// Capital function on base-k digit strings.
pub trait Martingale: Send + Sync {
    fn base(&self) -> u32;

    /// `M(σ)` within `2^-p`; exact martingales ignore `p`.
    fn eval(&self, sigma: &[u8], p: u32) -> Result<Rational>;

    fn is_exact(&self) -> bool {
        true
    }

    /// `M` at every prefix of `sigma`, shortest first.
    fn trace(&self, sigma: &[u8], p: u32) -> Result<Vec<Rational>> {
        (0..=sigma.len()).map(|t| self.eval(&sigma[..t], p)).collect()
    }

    /// Row `t` holds `M(σ↾t · c)` for every digit `c`.
    fn walk(&self, sigma: &[u8], p: u32) -> Result<Vec<Vec<Rational>>> {
        let mut child = Vec::with_capacity(sigma.len() + 1);
        (0..sigma.len())
            .map(|t| {
                child.clear();
                child.extend_from_slice(&sigma[..t]);
                child.push(0);
                (0..self.base() as u8)
                    .map(|c| {
                        *child.last_mut().expect("nonempty") = c;
                        self.eval(&child, p)
                    })
                    .collect()
            })
            .collect()
    }

    fn growth_bound(&self) -> Option<GrowthBound> {
        None
    }

    fn name(&self) -> String {
        "martingale".into()
    }
}

pub type SharedMartingale = Arc<dyn Martingale>;

impl fmt::Debug for dyn Martingale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Martingale({}, base {})", self.name(), self.base())
    }
}

#[derive(Debug, Clone)]
pub struct ConstantMartingale {
    pub base: u32,
    pub value: Rational,
}

impl ConstantMartingale {
    pub fn new(base: u32, value: Rational) -> Result<Self> {
        if value.is_negative() {
            return Err(Error::InvalidConfig("capital must be nonnegative".into()));
        }
        Ok(ConstantMartingale { base, value })
    }
}

impl Martingale for ConstantMartingale {
    fn base(&self) -> u32 {
        self.base
    }
    fn eval(&self, sigma: &[u8], _: u32) -> Result<Rational> {
        check_digits(self.base, sigma)?;
        Ok(self.value.clone())
    }
    fn walk(&self, sigma: &[u8], _: u32) -> Result<Vec<Vec<Rational>>> {
        check_digits(self.base, sigma)?;
        Ok(vec![vec![self.value.clone(); self.base as usize]; sigma.len()])
    }
    fn growth_bound(&self) -> Option<GrowthBound> {
        Some(GrowthBound::Constant(self.value.clone()))
    }
    fn name(&self) -> String {
        format!("constant {}", self.value)
    }
}

/// Bets everything on `digit` for `rounds` rounds (forever when `None`).
#[derive(Debug, Clone)]
pub struct Doubler {
    pub base: u32,
    pub digit: u8,
    pub initial: Rational,
    pub rounds: Option<u32>,
}

impl Doubler {
    fn value_at(&self, sigma: &[u8]) -> Rational {
        let horizon = self.rounds.map_or(sigma.len(), |r| sigma.len().min(r as usize));
        if sigma[..horizon].iter().all(|&d| d == self.digit) {
            &self.initial * pow_int(self.base, horizon as i64)
        } else {
            Rational::zero()
        }
    }
}

impl Martingale for Doubler {
    fn base(&self) -> u32 {
        self.base
    }
    fn eval(&self, sigma: &[u8], _: u32) -> Result<Rational> {
        check_digits(self.base, sigma)?;
        Ok(self.value_at(sigma))
    }
    fn trace(&self, sigma: &[u8], _: u32) -> Result<Vec<Rational>> {
        check_digits(self.base, sigma)?;
        Ok((0..=sigma.len()).map(|t| self.value_at(&sigma[..t])).collect())
    }
    fn growth_bound(&self) -> Option<GrowthBound> {
        let k = int(self.base as i64);
        match self.rounds {
            Some(r) => Some(GrowthBound::Constant(&self.initial * num_traits::pow(k, r as usize))),
            None => Some(GrowthBound::Geometric { initial: self.initial.clone(), ratio: k }),
        }
    }
    fn name(&self) -> String {
        format!("doubler on {}", self.digit)
    }
}

/// Rule choosing the predicted next digit from the history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Constant(u8),
    /// Predicts `last + 1 mod k`, starting with 0.
    Alternate,
    /// Predicts the last digit, starting with 0.
    Repeat,
    Periodic(Vec<u8>),
}

impl Pattern {
    pub fn predict(&self, base: u32, history: &[u8]) -> u8 {
        match self {
            Pattern::Constant(d) => *d,
            Pattern::Alternate => history.last().map_or(0, |&d| ((u32::from(d) + 1) % base) as u8),
            Pattern::Repeat => history.last().copied().unwrap_or(0),
            Pattern::Periodic(v) => v[history.len() % v.len()],
        }
    }
}

/// Bets fraction `f` of capital on the predicted digit each round.
#[derive(Debug, Clone)]
pub struct Predictor {
    base: u32,
    pattern: Pattern,
    win: Rational,
    lose: Rational,
    fraction: Rational,
    initial: Rational,
}

impl Predictor {
    pub fn new(base: u32, pattern: Pattern, fraction: Rational, initial: Rational) -> Result<Self> {
        if fraction.is_negative() || fraction > Rational::one() {
            return Err(Error::InvalidConfig(format!("fraction {fraction} outside [0, 1]")));
        }
        if initial.is_negative() {
            return Err(Error::InvalidConfig("capital must be nonnegative".into()));
        }
        let bad = match &pattern {
            Pattern::Constant(d) => u32::from(*d) >= base,
            Pattern::Periodic(v) => v.is_empty() || v.iter().any(|&d| u32::from(d) >= base),
            _ => false,
        };
        if bad {
            return Err(Error::InvalidConfig("pattern digits must lie below the base".into()));
        }
        let one = Rational::one();
        let win = &one - &fraction + &fraction * int(base as i64);
        let lose = &one - &fraction;
        Ok(Predictor { base, pattern, win, lose, fraction, initial })
    }

    pub fn fraction(&self) -> &Rational {
        &self.fraction
    }

    fn factor(&self, history: &[u8], d: u8) -> &Rational {
        if self.pattern.predict(self.base, history) == d {
            &self.win
        } else {
            &self.lose
        }
    }
}

impl Martingale for Predictor {
    fn base(&self) -> u32 {
        self.base
    }
    fn eval(&self, sigma: &[u8], _: u32) -> Result<Rational> {
        check_digits(self.base, sigma)?;
        let wins = (0..sigma.len()).filter(|&t| self.pattern.predict(self.base, &sigma[..t]) == sigma[t]).count();
        let losses = sigma.len() - wins;
        let numer = self.initial.numer() * self.win.numer().pow(wins as u32) * self.lose.numer().pow(losses as u32);
        let denom = self.initial.denom() * self.win.denom().pow(wins as u32) * self.lose.denom().pow(losses as u32);
        Ok(Rational::new(numer, denom))
    }
    fn trace(&self, sigma: &[u8], _: u32) -> Result<Vec<Rational>> {
        check_digits(self.base, sigma)?;
        let mut out = Vec::with_capacity(sigma.len() + 1);
        let mut m = self.initial.clone();
        out.push(m.clone());
        for t in 0..sigma.len() {
            m *= self.factor(&sigma[..t], sigma[t]);
            out.push(m.clone());
        }
        Ok(out)
    }
    fn walk(&self, sigma: &[u8], p: u32) -> Result<Vec<Vec<Rational>>> {
        let tr = self.trace(sigma, p)?;
        Ok((0..sigma.len())
            .map(|t| (0..self.base as u8).map(|c| &tr[t] * self.factor(&sigma[..t], c)).collect())
            .collect())
    }
    fn growth_bound(&self) -> Option<GrowthBound> {
        Some(GrowthBound::Geometric { initial: self.initial.clone(), ratio: self.win.clone() })
    }
    fn name(&self) -> String {
        format!("predictor {:?} fraction {}", self.pattern, self.fraction)
    }
}

/// Explicit values on all strings of length `≤ depth`, constant below depth.
///
/// Fairness is not enforced here; [`check_fairness`] reports it.
#[derive(Debug, Clone)]
pub struct TableMartingale {
    base: u32,
    levels: Vec<Vec<Rational>>,
}

impl TableMartingale {
    /// `levels[t]` lists `M(σ)` for the `k^t` strings of length `t` in lexicographic order.
    pub fn new(base: u32, levels: Vec<Vec<Rational>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidConfig("table needs at least the root value".into()));
        }
        for (t, row) in levels.iter().enumerate() {
            let want = (base as usize).checked_pow(t as u32).unwrap_or(usize::MAX);
            if row.len() != want {
                return Err(Error::InvalidConfig(format!(
                    "level {t} has {} values, expected {want}",
                    row.len()
                )));
            }
            if row.iter().any(Signed::is_negative) {
                return Err(Error::InvalidConfig(format!("negative capital at level {t}")));
            }
        }
        Ok(TableMartingale { base, levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

impl Martingale for TableMartingale {
    fn base(&self) -> u32 {
        self.base
    }
    fn eval(&self, sigma: &[u8], _: u32) -> Result<Rational> {
        check_digits(self.base, sigma)?;
        let t = sigma.len().min(self.depth());
        let idx = sigma[..t].iter().fold(0usize, |acc, &d| acc * self.base as usize + d as usize);
        Ok(self.levels[t][idx].clone())
    }
    fn growth_bound(&self) -> Option<GrowthBound> {
        let max = self.levels.iter().flatten().max().cloned().unwrap_or_default();
        Some(GrowthBound::Constant(max))
    }
    fn name(&self) -> String {
        format!("table of depth {}", self.depth())
    }
}

/// Martingale given by a closure; fairness is the caller's claim.
pub struct FnMartingale {
    base: u32,
    exact: bool,
    f: Box<dyn Fn(&[u8]) -> Rational + Send + Sync>,
    label: String,
}

impl FnMartingale {
    pub fn new(base: u32, label: impl Into<String>, f: impl Fn(&[u8]) -> Rational + Send + Sync + 'static) -> Self {
        FnMartingale { base, exact: true, f: Box::new(f), label: label.into() }
    }

    pub fn approximate(mut self) -> Self {
        self.exact = false;
        self
    }
}

impl Martingale for FnMartingale {
    fn base(&self) -> u32 {
        self.base
    }
    fn eval(&self, sigma: &[u8], _: u32) -> Result<Rational> {
        check_digits(self.base, sigma)?;
        Ok((self.f)(sigma))
    }
    fn is_exact(&self) -> bool {
        self.exact
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// `L′(σ) = (L(σ) + 1)/(L(∅) + 2)`.
#[derive(Clone)]
pub struct Normalized {
    inner: SharedMartingale,
    denom: Rational,
}

pub fn normalize(l: SharedMartingale) -> Result<Normalized> {
    if !l.is_exact() {
        return Err(Error::NotExact);
    }
    let denom = l.eval(&[], 0)? + int(2);
    Ok(Normalized { inner: l, denom })
}

impl Normalized {
    fn map(&self, v: Rational) -> Rational {
        (v + Rational::one()) / &self.denom
    }
}

impl Martingale for Normalized {
    fn base(&self) -> u32 {
        self.inner.base()
    }
    fn eval(&self, sigma: &[u8], p: u32) -> Result<Rational> {
        Ok(self.map(self.inner.eval(sigma, p)?))
    }
    fn trace(&self, sigma: &[u8], p: u32) -> Result<Vec<Rational>> {
        Ok(self.inner.trace(sigma, p)?.into_iter().map(|v| self.map(v)).collect())
    }
    fn walk(&self, sigma: &[u8], p: u32) -> Result<Vec<Vec<Rational>>> {
        let rows = self.inner.walk(sigma, p)?;
        Ok(rows.into_iter().map(|r| r.into_iter().map(|v| self.map(v)).collect()).collect())
    }
    fn growth_bound(&self) -> Option<GrowthBound> {
        let inner = self.inner.growth_bound()?;
        let denom = self.denom.clone();
        Some(match inner {
            GrowthBound::Constant(c) => GrowthBound::Constant((c + Rational::one()) / denom),
            other => GrowthBound::Custom(Arc::new(move |n| (other.bound(n) + Rational::one()) / &denom)),
        })
    }
    fn name(&self) -> String {
        format!("normalized({})", self.inner.name())
    }
}

/// Savings/checking state after reading a string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accounts {
    pub savings: u64,
    pub checking: Rational,
}

impl Accounts {
    pub fn total(&self) -> Rational {
        &self.checking + int(self.savings as i64)
    }
}

/// `M = G + E`: `E` copies `L`'s bets, and each time a bet lifts `E` above 1
/// one unit moves into the savings balance `G`.
#[derive(Clone)]
pub struct SavingsMartingale {
    inner: SharedMartingale,
    root: Rational,
}

/// Depth to which `savings_transform` samples `L(σ) > 0` up front.
pub const SAVINGS_SAMPLE_DEPTH: usize = 8;

pub fn savings_transform(l: SharedMartingale) -> Result<SavingsMartingale> {
    if l.base() != 2 {
        return Err(Error::BaseMismatch { expected: 2, found: l.base() });
    }
    if !l.is_exact() {
        return Err(Error::NotExact);
    }
    let root = l.eval(&[], 0)?;
    if root >= Rational::one() || !root.is_positive() {
        return Err(Error::PreconditionViolated(format!("need 0 < L(∅) < 1, got {root}")));
    }
    for n in 1..=SAVINGS_SAMPLE_DEPTH {
        for s in all_strings(2, n) {
            if !l.eval(&s, 0)?.is_positive() {
                return Err(Error::PreconditionViolated(format!("L is not positive at {s:?}")));
            }
        }
    }
    Ok(SavingsMartingale { inner: l, root })
}

impl SavingsMartingale {
    pub fn inner(&self) -> &SharedMartingale {
        &self.inner
    }

    fn step(acc: &Accounts, before: &Rational, after: &Rational) -> Result<Accounts> {
        if !after.is_positive() {
            return Err(Error::PreconditionViolated("L reached nonpositive capital".into()));
        }
        let v = &acc.checking * after / before;
        Ok(if v > Rational::one() {
            Accounts { savings: acc.savings + 1, checking: v - Rational::one() }
        } else {
            Accounts { savings: acc.savings, checking: v }
        })
    }

    /// Accounts at every prefix of `sigma`.
    pub fn accounts_trace(&self, sigma: &[u8]) -> Result<Vec<Accounts>> {
        let l = self.inner.trace(sigma, 0)?;
        let mut out = Vec::with_capacity(sigma.len() + 1);
        let mut acc = Accounts { savings: 0, checking: self.root.clone() };
        out.push(acc.clone());
        for t in 0..sigma.len() {
            acc = Self::step(&acc, &l[t], &l[t + 1])?;
            out.push(acc.clone());
        }
        Ok(out)
    }

    pub fn accounts(&self, sigma: &[u8]) -> Result<Accounts> {
        Ok(self.accounts_trace(sigma)?.pop().expect("root entry"))
    }
}

impl Martingale for SavingsMartingale {
    fn base(&self) -> u32 {
        2
    }
    fn eval(&self, sigma: &[u8], _: u32) -> Result<Rational> {
        Ok(self.accounts(sigma)?.total())
    }
    fn trace(&self, sigma: &[u8], _: u32) -> Result<Vec<Rational>> {
        Ok(self.accounts_trace(sigma)?.iter().map(Accounts::total).collect())
    }
    fn walk(&self, sigma: &[u8], _: u32) -> Result<Vec<Vec<Rational>>> {
        let l = self.inner.trace(sigma, 0)?;
        let lw = self.inner.walk(sigma, 0)?;
        let accs = self.accounts_trace(sigma)?;
        (0..sigma.len())
            .map(|t| lw[t].iter().map(|after| Ok(Self::step(&accs[t], &l[t], after)?.total())).collect())
            .collect()
    }
    fn growth_bound(&self) -> Option<GrowthBound> {
        Some(GrowthBound::savings(self.root.clone()))
    }
    fn name(&self) -> String {
        format!("savings({})", self.inner.name())
    }
}

/// Nested pairs `σ ⊑ ρ` with `M(ρ) < M(σ) − 2`, and strings with
/// `M(σ) > 2|σ| + M(∅)`, over all binary strings to `depth`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SavingsReport {
    pub depth: usize,
    pub checked: usize,
    pub drops: Vec<(Vec<u8>, Vec<u8>)>,
    pub growth: Vec<Vec<u8>>,
}

impl SavingsReport {
    pub fn passed(&self) -> bool {
        self.drops.is_empty() && self.growth.is_empty()
    }
}

/// Compares every node with the largest value among its ancestors, which
/// covers all nested pairs.
pub fn check_savings(m: &dyn Martingale, depth: usize, budget: u128) -> Result<SavingsReport> {
    let needed = 1u128.checked_shl(depth as u32 + 1).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, limit: budget });
    }
    let root = m.eval(&[], 0)?;
    let mut rep = SavingsReport { depth, ..Default::default() };
    // (string, value, best ancestor value, where it occurred)
    let mut level = vec![(vec![], root.clone(), root.clone(), vec![])];
    for n in 1..=depth {
        let next: Vec<Vec<(Vec<u8>, Rational, Rational, Vec<u8>)>> = level
            .par_iter()
            .map(|(s, v, best, at)| {
                let (best, at) = if v > best { (v.clone(), s.clone()) } else { (best.clone(), at.clone()) };
                (0..2u8)
                    .map(|c| {
                        let mut t = s.clone();
                        t.push(c);
                        let val = m.eval(&t, 0)?;
                        Ok((t, val, best.clone(), at.clone()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        level = next.into_iter().flatten().collect();
        let cap = int(2 * n as i64) + &root;
        for (t, v, best, at) in &level {
            rep.checked += 1;
            if v < &(best - int(2)) {
                rep.drops.push((at.clone(), t.clone()));
            }
            if v > &cap {
                rep.growth.push(t.clone());
            }
        }
    }
    Ok(rep)
}

/// Entry `n` is `M(Z↾n)` for `n = 0..=N`.
pub fn capital_trace(m: &dyn Martingale, z: &DigitString, n: usize, p: u32) -> Result<Vec<Rational>> {
    if z.base() != m.base() {
        return Err(Error::BaseMismatch { expected: m.base(), found: z.base() });
    }
    if z.len() < n {
        return Err(Error::PreconditionViolated(format!("need {n} digits, have {}", z.len())));
    }
    m.trace(&z.digits()[..n], p)
}

/// Largest entry of a trace and its first index.
pub fn trace_max(trace: &[Rational]) -> Option<(usize, Rational)> {
    let mut best: Option<(usize, Rational)> = None;
    for (i, v) in trace.iter().enumerate() {
        if best.as_ref().is_none_or(|(_, b)| v > b) {
            best = Some((i, v.clone()));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessViolation {
    pub sigma: Vec<u8>,
    pub parent: Rational,
    pub children_sum: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub base: u32,
    pub depth: usize,
    pub exact: bool,
    pub tolerance: Rational,
    pub checked: usize,
    pub violations: Vec<FairnessViolation>,
    pub negative: Vec<Vec<u8>>,
}

impl FairnessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.negative.is_empty()
    }
}

/// Default ceiling on strings visited by enumeration checks.
pub const DEFAULT_BUDGET: u128 = 1 << 22;

/// Checks `Σ M(σi) = k·M(σ)` on every `|σ| < depth`.
pub fn check_fairness(m: &dyn Martingale, depth: usize, p: u32, budget: u128) -> Result<FairnessReport> {
    let k = m.base();
    let needed = (depth as u128).saturating_mul((k as u128).saturating_pow(depth as u32));
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, limit: budget });
    }
    let exact = m.is_exact();
    let tolerance = if exact { Rational::zero() } else { int(k as i64 + 2) * pow2(-(p as i64)) };
    let kq = int(k as i64);
    let mut report = FairnessReport {
        base: k,
        depth,
        exact,
        tolerance: tolerance.clone(),
        checked: 0,
        violations: vec![],
        negative: vec![],
    };
    let mut level: Vec<(Vec<u8>, Rational)> = vec![(vec![], m.eval(&[], p)?)];
    if level[0].1.is_negative() {
        report.negative.push(vec![]);
    }
    for _ in 0..depth {
        let next: Vec<Vec<(Vec<u8>, Rational)>> = level
            .par_iter()
            .map(|(s, _)| {
                (0..k as u8)
                    .map(|c| {
                        let mut t = s.clone();
                        t.push(c);
                        let v = m.eval(&t, p)?;
                        Ok((t, v))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for ((s, parent), kids) in level.iter().zip(&next) {
            let sum: Rational = kids.iter().map(|(_, v)| v).sum();
            report.checked += 1;
            if (&sum - &kq * parent).abs() > tolerance {
                report.violations.push(FairnessViolation {
                    sigma: s.clone(),
                    parent: parent.clone(),
                    children_sum: sum,
                });
            }
            report.negative.extend(kids.iter().filter(|(_, v)| v.is_negative()).map(|(t, _)| t.clone()));
        }
        level = next.into_iter().flatten().collect();
    }
    Ok(report)
}
