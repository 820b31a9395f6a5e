//! Outer and inner approximation of rational intervals by affine images of
//! basic dyadic intervals drawn from a finite set of scalings and shifts.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{ceil, floor, int, pow2, Rational};
use crate::function::RationalFn;

/// `[p·i·2^-n + q, p·(i+1)·2^-n + q]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PQInterval {
    pub p: Rational,
    pub q: Rational,
    pub i: BigInt,
    pub n: u32,
}

impl PQInterval {
    pub fn a(&self) -> Rational {
        &self.p * Rational::new(self.i.clone(), BigInt::one() << self.n as usize) + &self.q
    }

    pub fn b(&self) -> Rational {
        &self.p * Rational::new(&self.i + 1, BigInt::one() << self.n as usize) + &self.q
    }

    pub fn length(&self) -> Rational {
        &self.p * pow2(-(self.n as i64))
    }

    /// The two halves, again `(p, q)`-intervals.
    pub fn halves(&self) -> [PQInterval; 2] {
        let i2: BigInt = &self.i * 2;
        [
            PQInterval { p: self.p.clone(), q: self.q.clone(), i: i2.clone(), n: self.n + 1 },
            PQInterval { p: self.p.clone(), q: self.q.clone(), i: i2 + 1, n: self.n + 1 },
        ]
    }

    /// The `(p, q)`-interval of scale `n` whose interior or left endpoint holds `x`.
    pub fn containing(p: &Rational, q: &Rational, n: u32, x: &Rational) -> PQInterval {
        let t = (x - q) / p * Rational::from_integer(BigInt::one() << n as usize);
        PQInterval { p: p.clone(), q: q.clone(), i: floor(&t), n }
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.a() <= x && x <= &self.b()
    }
}

impl fmt::Display for PQInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.a(), self.b())
    }
}

/// Scalings `P = {l/k : k/2 ≤ l ≤ k}`, shifts `Q = {v/k : |v| ≤ k}` and `L = P ∪ PQ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LSet {
    pub alpha: Rational,
    pub k: u32,
    pub scalings: Vec<Rational>,
    pub shifts: Vec<Rational>,
    pub members: BTreeSet<Rational>,
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// Smallest odd prime `k` with `1 + 8/k < α`.
pub fn smallest_prime_for(alpha: &Rational) -> Result<u32> {
    if alpha <= &Rational::one() {
        return Err(Error::InvalidConfig(format!("alpha must exceed 1, got {alpha}")));
    }
    let bound = int(8) / (alpha - Rational::one());
    let mut k = floor(&bound).to_u64().ok_or_else(|| Error::InvalidConfig("alpha too close to 1".into()))? + 1;
    k = k.max(3);
    while !(k % 2 == 1 && is_prime(k)) {
        k += 1;
    }
    u32::try_from(k).map_err(|_| Error::InvalidConfig("alpha too close to 1".into()))
}

pub fn build_l(alpha: &Rational) -> Result<LSet> {
    let k = smallest_prime_for(alpha)?;
    let kk = k as i64;
    let scalings: Vec<Rational> = ((kk + 1) / 2..=kk).map(|l| Rational::new(l.into(), kk.into())).collect();
    let shifts: Vec<Rational> = (-kk..=kk).map(|v| Rational::new(v.into(), kk.into())).collect();
    let mut members: BTreeSet<Rational> = scalings.iter().cloned().collect();
    for p in &scalings {
        for q in &shifts {
            members.insert(p * q);
        }
    }
    Ok(LSet { alpha: alpha.clone(), k, scalings, shifts, members })
}

impl LSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.members.contains(x)
    }

    pub fn is_l_interval(&self, a: &PQInterval) -> bool {
        self.contains(&a.p) && self.contains(&a.q)
    }

    /// `(p, shift)` pairs with `p ∈ P` and `shift ∈ pQ`.
    pub fn pairs(&self) -> Vec<(Rational, Rational)> {
        let mut out = vec![];
        for p in &self.scalings {
            for q in &self.shifts {
                out.push((p.clone(), p * q));
            }
        }
        out
    }
}

/// Which solution of `i·k + v·2^n = M` produced the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BezoutBranch {
    /// `0 ≤ i < 2^n`, `|v| ≤ k`.
    Standard,
    /// `0 ≤ v < k`, `i` any integer.
    ShiftedIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LIntervalWitness {
    pub x: Rational,
    pub y: Rational,
    pub k: u32,
    pub n: u32,
    pub eta: Rational,
    pub p: Rational,
    pub m: BigInt,
    pub i: BigInt,
    pub v: BigInt,
    pub branch: BezoutBranch,
    pub interval: PQInterval,
}

impl LIntervalWitness {
    pub fn protrudes(&self) -> bool {
        self.interval.a().is_negative() || self.interval.b() > Rational::one()
    }

    /// Every inequality of the construction, with the names of any that fail.
    pub fn validate(&self, alpha: &Rational) -> Vec<&'static str> {
        let mut bad = vec![];
        let (x, y, eta, p) = (&self.x, &self.y, &self.eta, &self.p);
        let two_n = pow2(-(self.n as i64));
        let kr = int(self.k as i64);
        let width = y - x;
        let a = self.interval.a();
        let b = self.interval.b();
        let mut check = |ok: bool, name: &'static str| {
            if !ok {
                bad.push(name);
            }
        };
        check(eta == &(&two_n / &kr), "eta = 2^-n/k");
        check(width < (Rational::one() - Rational::one() / &kr) * &two_n, "y - x < (1 - 1/k) 2^-n");
        check(width >= (Rational::one() - Rational::one() / &kr) * &two_n / int(2), "n is largest");
        check(&width + eta < two_n, "y - x + eta < 2^-n");
        check(&width + eta < p * &two_n, "y - x + eta < p 2^-n");
        check(p * &two_n <= &width + eta * int(2), "p 2^-n <= y - x + 2 eta");
        check(Rational::from_integer(self.m.clone()) * eta < x / p, "M eta < x/p");
        check(Rational::from_integer(&self.m + 1) * eta >= x / p, "M is greatest");
        check(
            Rational::from_integer(&self.i * self.k + &self.v * (BigInt::one() << self.n as usize))
                == Rational::from_integer(self.m.clone()),
            "i/2^n + v/k = M eta",
        );
        check(self.v.abs() <= BigInt::from(self.k), "|v| <= k");
        if self.branch == BezoutBranch::Standard {
            check(!self.i.is_negative() && self.i < (BigInt::one() << self.n as usize), "0 <= i < 2^n");
        }
        check(self.interval.p == *p && self.interval.q == p * Rational::new(self.v.clone(), self.k.into()), "A = p[i2^-n, (i+1)2^-n] + pq");
        check(a == p * Rational::from_integer(self.m.clone()) * eta, "a = p M eta");
        check(&a < x, "a < x");
        check(x - &a <= *eta, "x - a <= eta");
        check(y < &b, "y < b");
        check(b < y + eta * int(2), "b < y + 2 eta");
        check(self.interval.length() / &width < *alpha, "|A|/(y - x) < alpha");
        bad
    }
}

impl Serialize for LIntervalWitness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("LIntervalWitness", 14)?;
        st.serialize_field("x", &self.x.to_string())?;
        st.serialize_field("y", &self.y.to_string())?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("eta", &self.eta.to_string())?;
        st.serialize_field("p", &self.p.to_string())?;
        st.serialize_field("M", &self.m.to_string())?;
        st.serialize_field("i", &self.i.to_string())?;
        st.serialize_field("v", &self.v.to_string())?;
        st.serialize_field("branch", &self.branch)?;
        st.serialize_field("shift", &self.interval.q.to_string())?;
        st.serialize_field("a", &self.interval.a().to_string())?;
        st.serialize_field("b", &self.interval.b().to_string())?;
        st.serialize_field("protrudes", &self.protrudes())?;
        st.end()
    }
}

/// An L-interval `A ⊇ [x, y]` with `a < x` and `|A|/(y - x) < α`.
pub fn outer_approx(l: &LSet, x: &Rational, y: &Rational) -> Result<(PQInterval, LIntervalWitness)> {
    if x >= y {
        return Err(Error::PreconditionViolated(format!("need x < y, got [{x}, {y}]")));
    }
    if !x.is_positive() || y >= &Rational::one() {
        return Err(Error::RangeUnsupported { x: x.clone(), y: y.clone() });
    }
    let k = l.k;
    let kr = int(k as i64);
    let width = y - x;
    let factor = Rational::one() - Rational::one() / &kr;
    if width >= factor {
        return Err(Error::RangeUnsupported { x: x.clone(), y: y.clone() });
    }
    // largest n with width < factor·2^-n
    let mut n = 0u32;
    while width < &factor * pow2(-(n as i64 + 1)) {
        n += 1;
    }
    let two_n = pow2(-(n as i64));
    let eta = &two_n / &kr;
    let p = l
        .scalings
        .iter()
        .find(|p| &width + &eta < *p * &two_n)
        .cloned()
        .ok_or_else(|| Error::RangeUnsupported { x: x.clone(), y: y.clone() })?;
    // greatest M with M·eta < x/p
    let m: BigInt = ceil(&(x / &p / &eta)) - 1;
    let pow = BigInt::one() << n as usize;
    let kb = BigInt::from(k);
    let modulus = &pow;
    let k_inv = mod_inverse(&kb, modulus).expect("k odd");
    let i: BigInt = Integer::mod_floor(&(&m * &k_inv), modulus);
    let v: BigInt = (&m - &i * &kb) / &pow;
    let (i, v, branch) = if v.abs() <= kb {
        (i, v, BezoutBranch::Standard)
    } else {
        let p_inv = mod_inverse(&pow, &kb).expect("coprime");
        let v: BigInt = Integer::mod_floor(&(&m * &p_inv), &kb);
        let i: BigInt = (&m - &v * &pow) / &kb;
        (i, v, BezoutBranch::ShiftedIndex)
    };
    let interval = PQInterval { p: p.clone(), q: &p * Rational::new(v.clone(), kb.clone()), i: i.clone(), n };
    let witness = LIntervalWitness { x: x.clone(), y: y.clone(), k, n, eta, p, m, i, v, branch, interval: interval.clone() };
    let bad = witness.validate(&l.alpha);
    if !bad.is_empty() || !l.is_l_interval(&interval) {
        return Err(Error::RangeUnsupported { x: x.clone(), y: y.clone() });
    }
    Ok((interval, witness))
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    if m.is_one() {
        return Some(BigInt::zero());
    }
    let e = a.mod_floor(m).extended_gcd(m);
    e.gcd.is_one().then(|| e.x.mod_floor(m))
}

/// `1 + ε` where `α = 1 + 2ε`; inner approximation at `α` uses the L-set of this value.
pub fn inner_precision(alpha: &Rational) -> Rational {
    (alpha + Rational::one()) / int(2)
}

pub fn inner_lset(alpha: &Rational) -> Result<LSet> {
    if alpha <= &Rational::one() {
        return Err(Error::InvalidConfig(format!("alpha must exceed 1, got {alpha}")));
    }
    build_l(&inner_precision(alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerWitness {
    pub u: Rational,
    pub v: Rational,
    pub outer: LIntervalWitness,
    pub contains_z: Option<bool>,
}

/// An L-interval `B ⊆ [x, y]` with `(y - x)/|B| < α`.
///
/// `l` must be the set returned by [`inner_lset`] for the same `α`. When `z`
/// is in the middle third of `[x, y]`, it lies in `B` for every `α < 3`.
pub fn inner_approx(
    l: &LSet,
    x: &Rational,
    y: &Rational,
    alpha: &Rational,
    z: Option<&Rational>,
) -> Result<(PQInterval, InnerWitness)> {
    if l.alpha != inner_precision(alpha) {
        return Err(Error::InvalidConfig(format!("L-set was built for {}, need {}", l.alpha, inner_precision(alpha))));
    }
    if x >= y {
        return Err(Error::PreconditionViolated(format!("need x < y, got [{x}, {y}]")));
    }
    let eps = (alpha - Rational::one()) / int(2);
    let inner_width = (y - x) / (Rational::one() + &eps * int(2));
    let u = x + &eps * &inner_width;
    let v = y - &eps * &inner_width;
    let (b, outer) = outer_approx(l, &u, &v).map_err(|e| match e {
        Error::RangeUnsupported { .. } => Error::RangeUnsupported { x: x.clone(), y: y.clone() },
        other => other,
    })?;
    if !(x < &b.a() && b.b() < *y) || (y - x) / b.length() >= *alpha {
        return Err(Error::RangeUnsupported { x: x.clone(), y: y.clone() });
    }
    let contains_z = z.map(|z| b.contains(z));
    Ok((b, InnerWitness { u, v, outer, contains_z }))
}

/// Slope records of one `(p, q)` family along the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRecord {
    pub p: Rational,
    pub q: Rational,
    pub slopes: Vec<(u32, Rational)>,
}

impl FamilyRecord {
    fn tail(&self) -> &[(u32, Rational)] {
        &self.slopes[self.slopes.len() / 2..]
    }

    /// Largest slope over the finer half of the schedule.
    pub fn tail_sup(&self) -> Option<&Rational> {
        self.tail().iter().map(|(_, s)| s).max()
    }

    pub fn tail_inf(&self) -> Option<&Rational> {
        self.tail().iter().map(|(_, s)| s).min()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqrsCandidate {
    pub p: Rational,
    pub q: Rational,
    pub r: Rational,
    pub s: Rational,
    pub sup: Rational,
    pub inf: Rational,
}

impl PqrsCandidate {
    pub fn gap(&self) -> Rational {
        &self.sup - &self.inf
    }
}

/// Slopes of `f` on the `(p, q)`-intervals containing `z` at each scale `n`,
/// with `f` read as constant outside `[0, 1]`.
pub fn family_record(f: &dyn RationalFn, z: &Rational, p: &Rational, q: &Rational, scales: &[u32]) -> Result<FamilyRecord> {
    let clamp = |x: Rational| {
        if x.is_negative() {
            Rational::zero()
        } else if x > Rational::one() {
            Rational::one()
        } else {
            x
        }
    };
    let mut slopes = vec![];
    for &n in scales {
        let a = PQInterval::containing(p, q, n, z);
        let (lo, hi) = (a.a(), a.b());
        let s = (f.value(&clamp(hi.clone()), n + 16)? - f.value(&clamp(lo.clone()), n + 16)?) / (hi - lo);
        slopes.push((n, s));
    }
    Ok(FamilyRecord { p: p.clone(), q: q.clone(), slopes })
}

/// Finite search over L-pairs for a family whose slopes at `z` rise above
/// `gamma_t` and one whose slopes fall below `beta_t`, over the finer half of
/// the scale schedule. `None` means the finite evidence shows no such gap.
pub fn search_pqrs(
    f: &dyn RationalFn,
    z: &Rational,
    beta_t: &Rational,
    gamma_t: &Rational,
    l: &LSet,
    scales: &[u32],
) -> Result<Option<PqrsCandidate>> {
    if scales.is_empty() {
        return Ok(None);
    }
    let records = l
        .pairs()
        .iter()
        .map(|(p, q)| family_record(f, z, p, q, scales))
        .collect::<Result<Vec<_>>>()?;
    let best_sup = records
        .iter()
        .filter_map(|r| r.tail_sup().map(|s| (r, s)))
        .fold(None::<(&FamilyRecord, &Rational)>, |acc, (r, s)| match acc {
            Some((_, t)) if t >= s => acc,
            _ => Some((r, s)),
        });
    let best_inf = records
        .iter()
        .filter_map(|r| r.tail_inf().map(|s| (r, s)))
        .fold(None::<(&FamilyRecord, &Rational)>, |acc, (r, s)| match acc {
            Some((_, t)) if t <= s => acc,
            _ => Some((r, s)),
        });
    Ok(match (best_sup, best_inf) {
        (Some((pq, sup)), Some((rs, inf))) if sup > gamma_t && inf < beta_t => Some(PqrsCandidate {
            p: pq.p.clone(),
            q: pq.q.clone(),
            r: rs.p.clone(),
            s: rs.q.clone(),
            sup: sup.clone(),
            inf: inf.clone(),
        }),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExhaustiveReport {
    pub instances: usize,
    pub outer_failures: Vec<(Rational, Rational, String)>,
    pub inner_failures: Vec<(Rational, Rational, String)>,
    pub shifted_branches: usize,
    pub protruding: usize,
}

impl ExhaustiveReport {
    pub fn passed(&self) -> bool {
        self.outer_failures.is_empty() && self.inner_failures.is_empty()
    }
}

struct Outcome {
    x: Rational,
    y: Rational,
    outer_error: Option<String>,
    inner_error: Option<String>,
    shifted: bool,
    protrudes: bool,
}

fn check_instance(outer_l: &LSet, inner_l: &LSet, alpha: &Rational, x: Rational, y: Rational) -> Outcome {
    let mut out = Outcome { x: x.clone(), y: y.clone(), outer_error: None, inner_error: None, shifted: false, protrudes: false };
    match outer_approx(outer_l, &x, &y) {
        Ok((a, w)) => {
            let bad = w.validate(alpha);
            if !(a.a() < x && y < a.b() && a.length() / (&y - &x) < *alpha && bad.is_empty()) {
                out.outer_error = Some(bad.join("; "));
            }
            out.shifted = w.branch == BezoutBranch::ShiftedIndex;
            out.protrudes = w.protrudes();
        }
        Err(e) => out.outer_error = Some(e.to_string()),
    }
    match inner_approx(inner_l, &x, &y, alpha, None) {
        Ok((b, w)) => {
            let bad = w.outer.validate(&inner_l.alpha);
            if !(x < b.a() && b.b() < y && (&y - &x) / b.length() < *alpha && bad.is_empty()) {
                out.inner_error = Some(bad.join("; "));
            }
        }
        Err(e) => out.inner_error = Some(e.to_string()),
    }
    out
}

/// Runs both approximations on every `x < y` in `{1/2^d, …, (2^(d-1)-1)/2^d}`.
pub fn exhaustive_check(alpha: &Rational, depth: u32) -> Result<ExhaustiveReport> {
    use rayon::prelude::*;
    let outer_l = build_l(alpha)?;
    let inner_l = inner_lset(alpha)?;
    let den = 1i64 << depth;
    let top = den / 2;
    let pairs: Vec<(i64, i64)> = (1..top).flat_map(|i| (i + 1..top).map(move |j| (i, j))).collect();
    let outcomes: Vec<Outcome> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let x = Rational::new(i.into(), den.into());
            let y = Rational::new(j.into(), den.into());
            check_instance(&outer_l, &inner_l, alpha, x, y)
        })
        .collect();
    let mut report = ExhaustiveReport { instances: pairs.len(), ..Default::default() };
    for o in outcomes {
        if let Some(msg) = o.outer_error {
            report.outer_failures.push((o.x.clone(), o.y.clone(), msg));
        }
        if let Some(msg) = o.inner_error {
            report.inner_failures.push((o.x, o.y, msg));
        }
        report.shifted_branches += usize::from(o.shifted);
        report.protruding += usize::from(o.protrudes);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::function::{Identity, Sawtooth};

    #[test]
    fn l_sets() {
        let l = build_l(&int(4)).unwrap();
        assert_eq!(l.k, 3);
        assert_eq!(l.scalings, vec![rat(2, 3), int(1)]);
        assert_eq!(l.shifts.len(), 7);
        assert!(l.len() <= 16);
        assert_eq!(l.len(), 11);
        assert_eq!(build_l(&int(2)).unwrap().k, 11);
        assert_eq!(build_l(&rat(9, 8)).unwrap().k, 67);
        assert!(build_l(&int(1)).is_err());
    }

    #[test]
    fn outer_examples() {
        let l = build_l(&int(4)).unwrap();
        for (x, y) in [(rat(1, 5), rat(1, 4)), (rat(1, 8) + rat(1, 64), rat(1, 4))] {
            let (a, w) = outer_approx(&l, &x, &y).unwrap();
            assert!(w.validate(&l.alpha).is_empty());
            assert!(a.a() < x && y < a.b());
            assert!(a.length() / (&y - &x) < int(4));
            assert!(l.is_l_interval(&a));
        }
        let (a, _) = outer_approx(&l, &rat(1, 5), &rat(1, 4)).unwrap();
        assert!(a.length() < rat(1, 5));
    }

    #[test]
    fn outer_full_range_and_errors() {
        let l = build_l(&int(4)).unwrap();
        let (_, w) = outer_approx(&l, &rat(7, 8), &rat(15, 16)).unwrap();
        assert!(w.validate(&l.alpha).is_empty());
        assert!(matches!(outer_approx(&l, &int(0), &rat(1, 2)), Err(Error::RangeUnsupported { .. })));
        assert!(matches!(outer_approx(&l, &rat(1, 2), &rat(1, 4)), Err(Error::PreconditionViolated(_))));
        assert!(matches!(outer_approx(&l, &rat(1, 10), &rat(9, 10)), Err(Error::RangeUnsupported { .. })));
    }

    #[test]
    fn inner_examples() {
        let alpha = rat(5, 4);
        let l = inner_lset(&alpha).unwrap();
        let (x, y) = (rat(1, 5), rat(1, 4));
        let (b, w) = inner_approx(&l, &x, &y, &alpha, Some(&rat(9, 40))).unwrap();
        assert!(x < b.a() && b.b() < y);
        assert!((&y - &x) / b.length() < alpha);
        assert_eq!(w.contains_z, Some(true));
        let tiny = &x + pow2(-20);
        let (b, _) = inner_approx(&l, &x, &tiny, &alpha, None).unwrap();
        assert!(x < b.a() && b.b() < tiny);
        assert!(inner_approx(&build_l(&int(4)).unwrap(), &x, &y, &alpha, None).is_err());
    }

    #[test]
    fn exhaustive_small() {
        let r = exhaustive_check(&int(4), 5).unwrap();
        assert_eq!(r.instances, 15 * 14 / 2);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn pqrs_identity_has_no_gap() {
        let l = build_l(&int(4)).unwrap();
        let scales: Vec<u32> = (4..16).collect();
        assert_eq!(search_pqrs(&Identity, &rat(1, 5), &int(1), &int(2), &l, &scales).unwrap(), None);
    }

    #[test]
    fn pqrs_sawtooth_peak() {
        let l = build_l(&int(4)).unwrap();
        let saw = Sawtooth { a: int(0), b: rat(1, 2), scale: int(4) };
        let scales: Vec<u32> = (3..12).collect();
        let c = search_pqrs(&saw, &rat(1, 4), &rat(-1, 2), &rat(1, 2), &l, &scales).unwrap().unwrap();
        assert!(c.gap() >= int(1));
    }
}
