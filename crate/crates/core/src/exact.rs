//! Exact rational and dyadic arithmetic, and Cauchy names for computable reals.
//!
//! A [`CauchyName`] is a pure evaluator `n -> q_n` with `|q_n - q_{n-1}| <= 2^-n`;
//! the named real `x` then satisfies `|x - q_n| <= 2^-n`. Arithmetic on names
//! re-indexes precision so the result is again a valid name.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational in lowest terms with positive denominator.
pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// `2^e` for any integer exponent.
pub fn pow2(e: i64) -> Rational {
    if e >= 0 {
        Rational::from_integer(BigInt::one() << (e as usize))
    } else {
        Rational::new(BigInt::one(), BigInt::one() << ((-e) as usize))
    }
}

/// `base^e` for any integer exponent.
pub fn pow_int(base: u32, e: i64) -> Rational {
    let p = num_traits::pow(BigInt::from(base), e.unsigned_abs() as usize);
    if e >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

pub fn big_pow(base: u32, e: u32) -> BigInt {
    num_traits::pow(BigInt::from(base), e as usize)
}

pub fn floor(q: &Rational) -> BigInt {
    q.numer().div_floor(q.denom())
}

pub fn ceil(q: &Rational) -> BigInt {
    -((-q.numer()).div_floor(q.denom()))
}

/// Number of bits of the integer ceiling of `|q|`; `2^bits >= |q|`.
pub fn magnitude_bits(q: &Rational) -> u32 {
    let c = ceil(&q.abs());
    c.bits() as u32
}

pub fn min_r<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a <= b {
        a
    } else {
        b
    }
}

pub fn max_r<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a >= b {
        a
    } else {
        b
    }
}

/// Parses `"n"`, `"num/den"` or `"i/2^n"` (any `"i/b^e"`) into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("malformed rational {s:?}"));
    let parse_int = |t: &str| BigInt::from_str(t.trim()).map_err(|_| bad());
    match s.split_once('/') {
        None => Ok(Rational::from_integer(parse_int(s)?)),
        Some((num, den)) => {
            let num = parse_int(num)?;
            let den = match den.split_once('^') {
                Some((b, e)) => {
                    let b = parse_int(b)?;
                    let e: u32 = e.trim().parse().map_err(|_| bad())?;
                    num_traits::pow(b, e as usize)
                }
                None => parse_int(den)?,
            };
            if den.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {s:?}")));
            }
            Ok(Rational::new(num, den))
        }
    }
}

/// Decimal rendering truncated toward zero; display only, never parsed back.
pub fn to_decimal(q: &Rational, digits: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), digits);
    let scaled = (q.numer().abs() * &scale) / q.denom();
    let (int_part, frac) = scaled.div_rem(&scale);
    let sign = if q.is_negative() && !scaled.is_zero() { "-" } else { "" };
    if digits == 0 {
        return format!("{sign}{int_part}");
    }
    format!("{sign}{int_part}.{:0>width$}", frac.to_string(), width = digits)
}

/// `mantissa * 2^-exponent`, canonical: mantissa odd unless exponent is 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DyadicRational {
    mantissa: BigInt,
    exponent: u32,
}

impl DyadicRational {
    pub fn new(mantissa: BigInt, exponent: u32) -> Self {
        let mut m = mantissa;
        let mut e = exponent;
        if m.is_zero() {
            e = 0;
        }
        while e > 0 && m.is_even() {
            m >>= 1usize;
            e -= 1;
        }
        DyadicRational { mantissa: m, exponent: e }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn to_rational(&self) -> Rational {
        Rational::new(self.mantissa.clone(), BigInt::one() << (self.exponent as usize))
    }

    /// `None` unless the denominator of `q` is a power of two.
    pub fn from_rational(q: &Rational) -> Option<Self> {
        let d = q.denom();
        let tz = d.trailing_zeros().unwrap_or(0);
        if (d >> (tz as usize)).is_one() {
            Some(DyadicRational::new(q.numer().clone(), tz as u32))
        } else {
            None
        }
    }
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent == 0 {
            write!(f, "{}", self.mantissa)
        } else {
            write!(f, "{}/2^{}", self.mantissa, self.exponent)
        }
    }
}

type Evaluator = dyn Fn(u32) -> Rational + Send + Sync;

/// A computable real given by a pure evaluator `n -> q_n` with `|x - q_n| <= 2^-n`.
#[derive(Clone)]
pub struct CauchyName {
    eval: Arc<Evaluator>,
    label: Option<String>,
}

impl fmt::Debug for CauchyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CauchyName").field("label", &self.label).finish()
    }
}

impl CauchyName {
    /// Wraps an evaluator that already satisfies the step bound.
    pub fn from_fn(f: impl Fn(u32) -> Rational + Send + Sync + 'static) -> Self {
        CauchyName { eval: Arc::new(f), label: None }
    }

    /// Builds a name from approximations `a(m)` with `|x - a(m)| <= 2^-m`
    /// (no step bound required); index `n` reads `a(n + 2)`.
    pub fn from_approximations(a: impl Fn(u32) -> Rational + Send + Sync + 'static) -> Self {
        CauchyName::from_fn(move |n| a(n + 2))
    }

    pub fn constant(q: Rational) -> Self {
        let label = q.to_string();
        CauchyName::from_fn(move |_| q.clone()).with_label(label)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn approx(&self, n: u32) -> Rational {
        (self.eval)(n)
    }

    /// Caches evaluations; returned values are unchanged.
    pub fn memoized(self) -> Self {
        let cache: Mutex<HashMap<u32, Rational>> = Mutex::new(HashMap::new());
        let inner = self.eval.clone();
        CauchyName {
            eval: Arc::new(move |n| {
                if let Some(q) = cache.lock().unwrap().get(&n) {
                    return q.clone();
                }
                let q = inner(n);
                cache.lock().unwrap().insert(n, q.clone());
                q
            }),
            label: self.label,
        }
    }

    /// First `n` in `1..=depth` violating `|q_n - q_{n-1}| <= 2^-n`, if any.
    pub fn check_steps(&self, depth: u32) -> Option<u32> {
        let mut prev = self.approx(0);
        for n in 1..=depth {
            let cur = self.approx(n);
            if (&cur - &prev).abs() > pow2(-(n as i64)) {
                return Some(n);
            }
            prev = cur;
        }
        None
    }

    pub fn add(&self, other: &CauchyName) -> CauchyName {
        let (x, y) = (self.clone(), other.clone());
        CauchyName::from_approximations(move |m| x.approx(m + 1) + y.approx(m + 1))
    }

    pub fn neg(&self) -> CauchyName {
        let x = self.clone();
        CauchyName::from_fn(move |n| -x.approx(n))
    }

    pub fn sub(&self, other: &CauchyName) -> CauchyName {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &CauchyName) -> CauchyName {
        let (x, y) = (self.clone(), other.clone());
        // |x| <= |x_0| + 1 and |y_j| <= |y_0| + 2
        let bound = x.approx(0).abs() + y.approx(0).abs() + int(4);
        let extra = magnitude_bits(&bound);
        CauchyName::from_approximations(move |m| {
            let j = m + extra;
            x.approx(j) * y.approx(j)
        })
    }

    pub fn scale(&self, c: &Rational) -> CauchyName {
        let x = self.clone();
        let c = c.clone();
        let extra = magnitude_bits(&c);
        CauchyName::from_approximations(move |m| &c * x.approx(m + extra))
    }
}

/// Arithmetic operations lifted to Cauchy names.
#[derive(Debug, Clone)]
pub enum LiftOp {
    Add,
    Sub,
    Mul,
    Scale(Rational),
}

/// Applies `op` to the operands; `Add`/`Mul` fold over all of them.
pub fn lift_arith(op: &LiftOp, xs: &[CauchyName]) -> Result<CauchyName> {
    let need = |k: usize| {
        if xs.len() < k {
            Err(Error::PreconditionViolated(format!("{op:?} needs {k} operand(s)")))
        } else {
            Ok(())
        }
    };
    match op {
        LiftOp::Add => {
            need(1)?;
            Ok(xs[1..].iter().fold(xs[0].clone(), |acc, x| acc.add(x)))
        }
        LiftOp::Sub => {
            need(2)?;
            Ok(xs[0].sub(&xs[1]))
        }
        LiftOp::Mul => {
            need(1)?;
            Ok(xs[1..].iter().fold(xs[0].clone(), |acc, x| acc.mul(x)))
        }
        LiftOp::Scale(c) => {
            need(1)?;
            Ok(xs[0].scale(c))
        }
    }
}

/// Signed-digit name: `q_0 = 0`, `q_1 = 1/2`, `q_n = q_{n-1} + a_n 2^-n` for `n >= 2`.
#[derive(Clone)]
pub struct SignedDigitName {
    digits: Arc<dyn Fn(u32) -> i8 + Send + Sync>,
}

impl SignedDigitName {
    /// `digits(n)` gives `a_n` for `n >= 2`; values outside `{-1, 0, 1}` are rejected on use.
    pub fn new(digits: impl Fn(u32) -> i8 + Send + Sync + 'static) -> Self {
        SignedDigitName { digits: Arc::new(digits) }
    }

    pub fn digit(&self, n: u32) -> Result<i8> {
        let a = (self.digits)(n);
        if !(-1..=1).contains(&a) {
            return Err(Error::InvalidDigit { digit: a as u32, base: 3 });
        }
        Ok(a)
    }

    pub fn prefix_value(&self, n: u32) -> Result<DyadicRational> {
        if n == 0 {
            return Ok(DyadicRational::new(BigInt::zero(), 0));
        }
        // mantissa at exponent n
        let mut m = BigInt::one() << ((n - 1) as usize);
        for j in 2..=n {
            let a = self.digit(j)?;
            m += BigInt::from(a) << ((n - j) as usize);
        }
        Ok(DyadicRational::new(m, n))
    }

    pub fn to_cauchy(&self) -> CauchyName {
        let sd = self.clone();
        CauchyName::from_fn(move |n| {
            sd.prefix_value(n)
                .map(|d| d.to_rational())
                .unwrap_or_else(|_| Rational::zero())
        })
    }
}

/// First `n` base-`base` digits of `x in [0,1)` (expansion ending in infinitely many
/// non-maximal digits). `sep` certifies the distance from `x` to every point
/// `i * base^-m`, `m <= n`; a violation is reported, never guessed.
pub fn expansion_prefix(x: &CauchyName, base: u32, n: u32, sep: &Rational) -> Result<Vec<u8>> {
    if !sep.is_positive() {
        return Err(Error::PreconditionViolated("separation bound must be positive".into()));
    }
    // smallest p with 2^-p < sep / 2
    let half = sep / int(2);
    let mut p_sep = 0u32;
    while pow2(-(p_sep as i64)) >= half {
        p_sep += 1;
    }
    let p_grid = big_pow(base, n).bits() as u32 + 2;
    expansion_at_precision(x, base, n, p_sep.max(p_grid))
}

pub fn binary_expansion_prefix(x: &CauchyName, n: u32, sep: &Rational) -> Result<Vec<u8>> {
    expansion_prefix(x, 2, n, sep)
}

/// Like [`expansion_prefix`] but refines precision until the prefix is certified,
/// up to `max_precision` bits.
pub fn expansion_prefix_adaptive(
    x: &CauchyName,
    base: u32,
    n: u32,
    max_precision: u32,
) -> Result<Vec<u8>> {
    let mut p = big_pow(base, n).bits() as u32 + 2;
    loop {
        match expansion_at_precision(x, base, n, p) {
            Err(Error::SeparationViolated { .. }) if p < max_precision => {
                p = (p + 16).min(max_precision);
            }
            other => return other,
        }
    }
}

fn expansion_at_precision(x: &CauchyName, base: u32, n: u32, p: u32) -> Result<Vec<u8>> {
    let q = x.approx(p);
    let e = pow2(-(p as i64));
    let scale = Rational::from_integer(big_pow(base, n));
    let lo = (&q - &e) * &scale;
    let hi = (&q + &e) * &scale;
    let first = ceil(&lo);
    if first <= floor(&hi) {
        return Err(Error::SeparationViolated {
            point: Rational::from_integer(first) / &scale,
            sep: int(2) * e,
        });
    }
    let cell = floor(&(q * &scale));
    if cell.sign() == Sign::Minus || cell >= *scale.numer() {
        return Err(Error::PreconditionViolated("x must lie in [0, 1)".into()));
    }
    let mut digits = vec![0u8; n as usize];
    let mut rest = cell;
    let b = BigInt::from(base);
    for slot in digits.iter_mut().rev() {
        let (d, r) = rest.div_rem(&b);
        *slot = r.to_u8().expect("digit below base");
        rest = d;
    }
    Ok(digits)
}

/// Dyadic `floor(2^m sqrt(c)) / 2^m` for a nonnegative rational `c`.
pub fn sqrt_floor(c: &Rational, m: u32) -> Rational {
    let scaled = c * Rational::from_integer(BigInt::one() << (2 * m as usize));
    let s = floor(&scaled).sqrt();
    Rational::new(s, BigInt::one() << (m as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn third() -> CauchyName {
        CauchyName::from_fn(|n| {
            let d = BigInt::one() << (n as usize);
            let num = (&d * 2 + 3) / 6; // round(2^n / 3)
            Rational::new(num, d)
        })
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/8").unwrap(), rat(3, 8));
        assert_eq!(parse_rational("-5/2^4").unwrap(), rat(-5, 16));
        assert_eq!(parse_rational("7").unwrap(), int(7));
        assert!(matches!(parse_rational("1/0"), Err(Error::Parse(_))));
        assert!(parse_rational("x/2").is_err());
    }

    #[test]
    fn dyadic_canonical() {
        let d = DyadicRational::new(BigInt::from(12), 4);
        assert_eq!(d.mantissa(), &BigInt::from(3));
        assert_eq!(d.exponent(), 2);
        assert_eq!(d.to_rational(), rat(3, 4));
        assert_eq!(DyadicRational::from_rational(&rat(5, 8)).unwrap().exponent(), 3);
        assert!(DyadicRational::from_rational(&rat(1, 3)).is_none());
        assert_eq!(DyadicRational::new(BigInt::zero(), 9).exponent(), 0);
    }

    #[test]
    fn third_name() {
        let x = third();
        assert_eq!(x.approx(3), rat(3, 8));
        assert!((rat(1, 3) - rat(3, 8)).abs() <= rat(1, 8));
        assert_eq!(x.check_steps(32), None);
    }

    #[test]
    fn constant_is_flat() {
        let z = CauchyName::constant(int(0));
        for n in [0, 5, 40] {
            assert_eq!(z.approx(n), int(0));
        }
    }

    #[test]
    fn sqrt2half_square_check() {
        let x = CauchyName::from_approximations(|m| sqrt_floor(&rat(1, 2), m));
        let q = x.approx(10);
        let err = (int(2) * &q * &q - int(1)).abs();
        assert!(err <= int(4) * pow2(-10) + pow2(-20));
    }

    #[test]
    fn lifted_ops() {
        let quarter = CauchyName::constant(rat(1, 4));
        let half = lift_arith(&LiftOp::Add, &[quarter.clone(), quarter]).unwrap();
        assert!((half.approx(20) - rat(1, 2)).abs() <= pow2(-20));
        let one = lift_arith(&LiftOp::Mul, &[third(), CauchyName::constant(int(3))]).unwrap();
        assert!((one.approx(20) - int(1)).abs() <= pow2(-20));
        assert_eq!(one.check_steps(32), None);
        let s2h = CauchyName::from_approximations(|m| sqrt_floor(&rat(1, 2), m));
        let s2 = lift_arith(&LiftOp::Scale(int(2)), &[s2h]).unwrap();
        let q = s2.approx(12);
        // |q^2 - 2| <= 2|q| 2^-12 + 2^-24 with |q| < 3/2
        assert!((&q * &q - int(2)).abs() <= int(3) * pow2(-12) + pow2(-24));
        assert!(lift_arith(&LiftOp::Sub, &[third()]).is_err());
    }

    #[test]
    fn binary_expansions() {
        let d = binary_expansion_prefix(&third(), 6, &rat(1, 24)).unwrap();
        assert_eq!(d, vec![0, 1, 0, 1, 0, 1]);
        let five_eighths = CauchyName::constant(rat(5, 8));
        assert!(matches!(
            binary_expansion_prefix(&five_eighths, 3, &int(1)),
            Err(Error::SeparationViolated { .. })
        ));
    }

    #[test]
    fn sqrt2half_expansion() {
        let x = CauchyName::from_approximations(|m| sqrt_floor(&rat(1, 2), m));
        // oracle: distance from sqrt(2)/2 to the depth-8 dyadic grid
        let hi = sqrt_floor(&rat(1, 2), 64);
        let below = Rational::new(floor(&(&hi * int(256))), BigInt::from(256));
        let sep = min_r(&(&hi - &below), &(&below + rat(1, 256) - &hi)).clone() / int(2);
        let d = binary_expansion_prefix(&x, 8, &sep).unwrap();
        assert_eq!(d, vec![1, 0, 1, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn signed_digits() {
        let sd = SignedDigitName::new(|n| if n % 2 == 0 { -1 } else { 0 });
        let name = sd.to_cauchy();
        assert_eq!(name.approx(0), int(0));
        assert_eq!(name.approx(1), rat(1, 2));
        assert_eq!(name.approx(2), rat(1, 4));
        assert_eq!(name.check_steps(24), None);
        let bad = SignedDigitName::new(|_| 2);
        assert!(bad.prefix_value(3).is_err());
    }

    #[test]
    fn memoized_is_transparent() {
        let x = third();
        let m = x.clone().memoized();
        for n in 0..20 {
            assert_eq!(m.approx(n), x.approx(n));
            assert_eq!(m.approx(n), x.approx(n));
        }
    }

    #[test]
    fn decimal_display() {
        assert_eq!(to_decimal(&rat(1, 3), 4), "0.3333");
        assert_eq!(to_decimal(&rat(-5, 2), 2), "-2.50");
    }
}
