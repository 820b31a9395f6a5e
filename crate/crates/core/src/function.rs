//! Functions evaluable on rationals, exactly or to a requested precision.

use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{int, pow2, rat, Rational};

/// A real function known through its values on rationals.
///
/// `value(x, p)` is within `2^-p` of `f(x)`; exact functions ignore `p`.
pub trait RationalFn: Send + Sync {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational>;

    fn is_exact(&self) -> bool {
        true
    }

    /// Whether `value` is exact at this particular point.
    fn exact_at(&self, _x: &Rational) -> bool {
        self.is_exact()
    }

    /// Whether `value` is exact at every base-k rational.
    fn exact_on_grid(&self, _k: u32) -> bool {
        self.is_exact()
    }

    fn name(&self) -> String {
        "function".into()
    }
}

pub type SharedFn = Arc<dyn RationalFn>;

impl fmt::Debug for dyn RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RationalFn({})", self.name())
    }
}

/// Exact value of an exact function.
pub fn exact_value(f: &dyn RationalFn, x: &Rational) -> Result<Rational> {
    f.value(x, 0)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl RationalFn for Identity {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(x.clone())
    }
    fn name(&self) -> String {
        "identity".into()
    }
}

/// `c0 + c1 x + c2 x^2 + ...`
#[derive(Debug, Clone)]
pub struct Polynomial {
    pub coeffs: Vec<Rational>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<Rational>) -> Self {
        Polynomial { coeffs }
    }

    pub fn square() -> Self {
        Polynomial::new(vec![int(0), int(0), int(1)])
    }
}

impl RationalFn for Polynomial {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(self.coeffs.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c))
    }
    fn name(&self) -> String {
        "polynomial".into()
    }
}

/// `scale * |x - center|`
#[derive(Debug, Clone)]
pub struct AbsShift {
    pub center: Rational,
    pub scale: Rational,
}

impl RationalFn for AbsShift {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(&self.scale * (x - &self.center).abs())
    }
    fn name(&self) -> String {
        format!("abs(x - {})", self.center)
    }
}

/// Continuous piecewise-linear function through sorted breakpoints; constant
/// extension outside the breakpoint range.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<Rational>,
    ys: Vec<Rational>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(Rational, Rational)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("piecewise-linear function needs a point".into()));
        }
        for w in points.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidConfig(format!(
                    "breakpoints must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        let (xs, ys) = points.into_iter().unzip();
        Ok(PiecewiseLinear { xs, ys })
    }

    /// Integrates a piecewise-constant density: `densities[i]` on `[cuts[i], cuts[i+1]]`,
    /// starting from value `start` at `cuts[0]`.
    pub fn from_density(cuts: &[Rational], densities: &[Rational], start: Rational) -> Result<Self> {
        if cuts.len() != densities.len() + 1 {
            return Err(Error::InvalidConfig("need one more cut than densities".into()));
        }
        let mut points = Vec::with_capacity(cuts.len());
        let mut y = start;
        points.push((cuts[0].clone(), y.clone()));
        for (w, d) in cuts.windows(2).zip(densities) {
            y += d * (&w[1] - &w[0]);
            points.push((w[1].clone(), y.clone()));
        }
        PiecewiseLinear::new(points)
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (&Rational, &Rational)> {
        self.xs.iter().zip(self.ys.iter())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        let n = self.xs.len();
        if x <= &self.xs[0] {
            return self.ys[0].clone();
        }
        if x >= &self.xs[n - 1] {
            return self.ys[n - 1].clone();
        }
        // first index with xs[i] > x
        let i = self.xs.partition_point(|t| t <= x);
        let (x0, x1) = (&self.xs[i - 1], &self.xs[i]);
        let (y0, y1) = (&self.ys[i - 1], &self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// `∫_{xs[0]}^{x}` of this function (constant extension outside), exact.
    pub fn integral_to(&self, x: &Rational) -> Rational {
        let mut acc = Rational::zero();
        let n = self.xs.len();
        if x <= &self.xs[0] {
            return &self.ys[0] * (x - &self.xs[0]);
        }
        for i in 1..n {
            let (x0, x1) = (&self.xs[i - 1], &self.xs[i]);
            let (y0, y1) = (&self.ys[i - 1], &self.ys[i]);
            if x <= x1 {
                let yx = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                return acc + (y0 + yx) * (x - x0) / int(2);
            }
            acc += (y0 + y1) * (x1 - x0) / int(2);
        }
        acc + &self.ys[n - 1] * (x - &self.xs[n - 1])
    }
}

impl RationalFn for PiecewiseLinear {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(self.eval(x))
    }
    fn name(&self) -> String {
        format!("piecewise-linear({} breakpoints)", self.xs.len())
    }
}

/// `x ↦ ∫_{lower}^{x} pwl`, exact (piecewise quadratic).
#[derive(Debug, Clone)]
pub struct PwlIntegral {
    pub integrand: PiecewiseLinear,
    pub lower: Rational,
}

impl RationalFn for PwlIntegral {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(self.integrand.integral_to(x) - self.integrand.integral_to(&self.lower))
    }
    fn name(&self) -> String {
        "integral".into()
    }
}

/// `Σ weight_i f_i(x) + offset`.
#[derive(Clone)]
pub struct LinearCombination {
    pub terms: Vec<(Rational, SharedFn)>,
    pub offset: Rational,
}

impl RationalFn for LinearCombination {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational> {
        let mut acc = self.offset.clone();
        let count = self.terms.len().max(1) as u32;
        for (w, f) in &self.terms {
            if w.is_zero() {
                continue;
            }
            // each term within 2^-p / (count |w|)
            let extra = crate::exact::magnitude_bits(w) + (32 - count.leading_zeros());
            acc += w * f.value(x, precision + extra)?;
        }
        Ok(acc)
    }
    fn is_exact(&self) -> bool {
        self.terms.iter().all(|(_, f)| f.is_exact())
    }
    fn exact_at(&self, x: &Rational) -> bool {
        self.terms.iter().all(|(_, f)| f.exact_at(x))
    }
    fn exact_on_grid(&self, k: u32) -> bool {
        self.terms.iter().all(|(_, f)| f.exact_on_grid(k))
    }
    fn name(&self) -> String {
        let inner: Vec<String> = self.terms.iter().map(|(w, f)| format!("{w}*{}", f.name())).collect();
        inner.join(" + ")
    }
}

/// `f(clamp(x, lo, hi)) - f(lo)`: zero left of `lo`, constant right of `hi`.
#[derive(Clone)]
pub struct ClampedShift {
    pub inner: SharedFn,
    pub lo: Rational,
    pub hi: Rational,
}

impl RationalFn for ClampedShift {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational> {
        let t = if x < &self.lo {
            &self.lo
        } else if x > &self.hi {
            &self.hi
        } else {
            x
        };
        Ok(self.inner.value(t, precision + 1)? - self.inner.value(&self.lo, precision + 1)?)
    }
    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }
    fn name(&self) -> String {
        format!("clamp[{}, {}]({})", self.lo, self.hi, self.inner.name())
    }
}

/// `f((x - q) / p)` for `p > 0`.
#[derive(Clone)]
pub struct AffinePrecompose {
    pub inner: SharedFn,
    pub p: Rational,
    pub q: Rational,
}

impl RationalFn for AffinePrecompose {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational> {
        self.inner.value(&((x - &self.q) / &self.p), precision)
    }
    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }
    fn name(&self) -> String {
        format!("{}((x - {}) / {})", self.inner.name(), self.q, self.p)
    }
}

/// Evaluates an arbitrary exact closure.
pub struct FnRational {
    f: Box<dyn Fn(&Rational) -> Rational + Send + Sync>,
    label: String,
}

impl FnRational {
    pub fn new(label: impl Into<String>, f: impl Fn(&Rational) -> Rational + Send + Sync + 'static) -> Self {
        FnRational { f: Box::new(f), label: label.into() }
    }
}

impl RationalFn for FnRational {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok((self.f)(x))
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Sawtooth bump `Λ_{A,p}`: zero outside `A = (a, b)`, peak `p|A|/2` at the
/// midpoint, slopes `±p` on the two halves.
pub fn sawtooth_eval(a: &Rational, b: &Rational, scale: &Rational, x: &Rational) -> Rational {
    if x <= a || x >= b {
        return Rational::zero();
    }
    let left = x - a;
    let right = b - x;
    scale * crate::exact::min_r(&left, &right)
}

#[derive(Debug, Clone)]
pub struct Sawtooth {
    pub a: Rational,
    pub b: Rational,
    pub scale: Rational,
}

impl RationalFn for Sawtooth {
    fn value(&self, x: &Rational, _: u32) -> Result<Rational> {
        Ok(sawtooth_eval(&self.a, &self.b, &self.scale, x))
    }
    fn name(&self) -> String {
        format!("sawtooth(({}, {}), {})", self.a, self.b, self.scale)
    }
}

/// A function known to be nondecreasing, with the grid it natively lives on.
#[derive(Clone)]
pub struct MonotoneRationalFunction {
    inner: SharedFn,
    native_base: Option<u32>,
    strictly_increasing: bool,
}

impl fmt::Debug for MonotoneRationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneRationalFunction")
            .field("inner", &self.inner.name())
            .field("native_base", &self.native_base)
            .field("strictly_increasing", &self.strictly_increasing)
            .finish()
    }
}

impl MonotoneRationalFunction {
    /// Trusts the caller that `f` is nondecreasing.
    pub fn assume(f: SharedFn) -> Self {
        MonotoneRationalFunction { inner: f, native_base: None, strictly_increasing: false }
    }

    /// Checks monotonicity on the dyadic grid of depth `depth` before wrapping.
    pub fn checked(f: SharedFn, depth: u32) -> Result<Self> {
        let tol = if f.is_exact() { Rational::zero() } else { pow2(-(depth as i64) - 8) * int(2) };
        let step = pow2(-(depth as i64));
        let mut prev = f.value(&Rational::zero(), depth + 8)?;
        let mut x = Rational::zero();
        for _ in 0..(1u64 << depth) {
            x += &step;
            let cur = f.value(&x, depth + 8)?;
            if cur + &tol < prev {
                return Err(Error::PreconditionViolated(format!("function decreases before {x}")));
            }
            prev = f.value(&x, depth + 8)?;
        }
        Ok(MonotoneRationalFunction::assume(f))
    }

    pub fn with_native_base(mut self, base: u32) -> Self {
        self.native_base = Some(base);
        self
    }

    pub fn with_strictly_increasing(mut self, strict: bool) -> Self {
        self.strictly_increasing = strict;
        self
    }

    pub fn native_base(&self) -> Option<u32> {
        self.native_base
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.strictly_increasing
    }

    pub fn shared(&self) -> SharedFn {
        self.inner.clone()
    }

    pub fn identity() -> Self {
        MonotoneRationalFunction::assume(Arc::new(Identity)).with_strictly_increasing(true)
    }

    /// `x ↦ f(x) + x`, strictly increasing whenever `f` is nondecreasing.
    pub fn plus_identity(&self) -> Self {
        let sum = LinearCombination {
            terms: vec![(Rational::one(), self.inner.clone()), (Rational::one(), Arc::new(Identity))],
            offset: Rational::zero(),
        };
        MonotoneRationalFunction::assume(Arc::new(sum)).with_strictly_increasing(true)
    }

    /// `x ↦ f(x) - f(0)`.
    pub fn vanishing_at_zero(&self) -> Result<Self> {
        let f0 = self.inner.value(&Rational::zero(), 64)?;
        if f0.is_zero() {
            return Ok(self.clone());
        }
        let shifted = LinearCombination { terms: vec![(Rational::one(), self.inner.clone())], offset: -f0 };
        Ok(MonotoneRationalFunction {
            inner: Arc::new(shifted),
            native_base: self.native_base,
            strictly_increasing: self.strictly_increasing,
        })
    }
}

impl RationalFn for MonotoneRationalFunction {
    fn value(&self, x: &Rational, precision: u32) -> Result<Rational> {
        self.inner.value(x, precision)
    }
    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }
    fn exact_at(&self, x: &Rational) -> bool {
        self.inner.exact_at(x)
    }
    fn exact_on_grid(&self, k: u32) -> bool {
        self.inner.exact_on_grid(k)
    }
    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Λ-integral staircase: `∫_0^x Σ_j Λ_{A_j, 4}` over a few disjoint bumps.
pub fn lambda_integral_staircase() -> PwlIntegral {
    let bumps = [(rat(0, 1), rat(1, 4)), (rat(3, 8), rat(1, 2)), (rat(5, 8), rat(11, 16))];
    let mut pts = vec![];
    for (a, b) in bumps {
        let mid = (&a + &b) / int(2);
        let peak = int(4) * (&b - &a) / int(2);
        pts.push((a, int(0)));
        pts.push((mid, peak));
        pts.push((b, int(0)));
    }
    pts.dedup_by(|x, y| x.0 == y.0);
    pts.push((int(1), int(0)));
    PwlIntegral { integrand: PiecewiseLinear::new(pts).expect("sorted bumps"), lower: int(0) }
}
