//! Choosing binary digits along which a fair martingale stays bounded, and the
//! pipeline from a nondecreasing function to such a point.

use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::correspondence::mart;
use crate::error::{Error, Result};
use crate::exact::{int, pow2, rat, Rational};
use crate::function::{AffinePrecompose, ClampedShift, LinearCombination, MonotoneRationalFunction, RationalFn};
use crate::martingale::{DigitString, Martingale};

/// Digits fixed before the diagonal choice starts.
pub const PREFIX: [u8; 3] = [1, 0, 0];

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Length of the prefix extended at this step.
    pub n: usize,
    pub chosen: u8,
    pub chosen_value: Rational,
    pub rejected_value: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalTrace {
    pub bits: Vec<u8>,
    /// `V(Z↾n)` for `n = 0..=bits.len()`, exact when `exact` holds.
    pub values: Vec<Rational>,
    pub steps: Vec<Step>,
    pub exact: bool,
}

impl DiagonalTrace {
    pub fn prefix(&self) -> DigitString {
        DigitString::new(2, self.bits.clone()).expect("binary digits")
    }

    /// Approximation error carried by each recorded value.
    fn value_slack(&self, n: usize) -> Rational {
        if self.exact {
            Rational::zero()
        } else {
            pow2(-(n as i64) - 3)
        }
    }

    /// Lengths `n` with `V(Z↾n) > V(Z↾3) + 1/4` beyond the certified slack.
    pub fn bound_violations(&self) -> Vec<usize> {
        let Some(base) = self.values.get(PREFIX.len()) else { return vec![] };
        let limit = base + rat(1, 4) + self.value_slack(PREFIX.len());
        (PREFIX.len()..self.values.len())
            .filter(|&n| self.values[n] > &limit + self.value_slack(n.saturating_sub(1)))
            .collect()
    }

    /// Steps whose chosen child exceeds the other child by more than `2^{-n}`.
    pub fn local_violations(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| s.chosen_value > &s.rejected_value + pow2(-(s.n as i64)))
            .map(|s| s.n)
            .collect()
    }
}

/// Extends the prefix `100` by choosing, at length `n`, digit `0` when
/// `V(σ0) ≤ V(σ1) + 2^{-n-1}` at precision `n + 3`, else `1`.
pub fn diagonalize(v: &dyn Martingale, depth: usize) -> Result<DiagonalTrace> {
    if v.base() != 2 {
        return Err(Error::BaseMismatch { expected: 2, found: v.base() });
    }
    let exact = v.is_exact();
    let mut bits: Vec<u8> = PREFIX.iter().copied().take(depth).collect();
    let mut values = vec![];
    for n in 0..=bits.len() {
        values.push(v.eval(&bits[..n], n as u32 + 3)?);
    }
    let mut steps = vec![];
    for n in bits.len()..depth {
        let p = n as u32 + 3;
        let mut s0 = bits.clone();
        s0.push(0);
        let mut s1 = bits.clone();
        s1.push(1);
        let v0 = v.eval(&s0, p)?;
        let v1 = v.eval(&s1, p)?;
        let (chosen, cv, rv) = if v0 <= &v1 + pow2(-(n as i64) - 1) { (0, v0, v1) } else { (1, v1, v0) };
        bits.push(chosen);
        values.push(cv.clone());
        steps.push(Step { n, chosen, chosen_value: cv, rejected_value: rv });
    }
    Ok(DiagonalTrace { bits, values, steps, exact })
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub function: MonotoneRationalFunction,
    pub terms: usize,
    /// `2^{-k0}·bound`, the sup-norm contribution of the omitted terms.
    pub tail_bound: Rational,
}

/// `f + Σ_{k ≤ k0} 2^{-k} g_k` over the first `k0` candidates; each `g_k` must
/// be exact with `g_k(1) − g_k(0) ≤ bound`.
pub fn mix_functions(f: &MonotoneRationalFunction, gs: &[MonotoneRationalFunction], k0: usize, bound: &Rational) -> Result<Mixture> {
    let mut terms = vec![(Rational::one(), f.shared())];
    for (k, g) in gs.iter().take(k0).enumerate() {
        if !g.is_exact() {
            return Err(Error::NotExact);
        }
        let rise = g.value(&Rational::one(), 0)? - g.value(&Rational::zero(), 0)?;
        if &rise > bound {
            return Err(Error::PreconditionViolated(format!("candidate {} rises by {rise} > {bound}", k + 1)));
        }
        terms.push((pow2(-(k as i64) - 1), g.shared()));
    }
    let n = terms.len() - 1;
    let function = if n == 0 {
        f.clone()
    } else {
        MonotoneRationalFunction::assume(Arc::new(LinearCombination { terms, offset: Rational::zero() }))
            .with_strictly_increasing(f.is_strictly_increasing())
    };
    Ok(Mixture { function, terms: n, tail_bound: pow2(-(k0 as i64)) * bound })
}

/// Where the rescaled function reads the mixture:
/// `r(x) = h(q + p·clamp(x, 1/3, 2/3)) − h(q + p/3)`, so `h` is read on `[q + p/3, q + 2p/3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub p: Rational,
    pub q: Rational,
}

impl Default for Placement {
    fn default() -> Self {
        Placement { p: int(1), q: int(0) }
    }
}

#[derive(Debug, Clone)]
pub struct DiffPoint {
    pub trace: DiagonalTrace,
    pub mixture_terms: usize,
    pub tail_bound: Rational,
}

/// Normalizes `f` to vanish at 0, mixes in the candidates, rescales onto
/// `[1/3, 2/3]` and diagonalizes against the derived binary martingale.
pub fn differentiability_point(
    f: &MonotoneRationalFunction,
    candidates: &[MonotoneRationalFunction],
    depth: usize,
    placement: &Placement,
) -> Result<DiffPoint> {
    if !f.is_exact() {
        return Err(Error::NotExact);
    }
    let normalized = f.vanishing_at_zero()?;
    let mut bound = Rational::zero();
    for g in candidates {
        let rise = g.value(&Rational::one(), 0)? - g.value(&Rational::zero(), 0)?;
        bound = bound.max(rise);
    }
    let mix = mix_functions(&normalized, candidates, candidates.len(), &bound)?;
    let placed: Arc<dyn RationalFn> = if placement == &Placement::default() {
        mix.function.shared()
    } else {
        if !placement.p.is_positive() {
            return Err(Error::InvalidConfig("placement scale must be positive".into()));
        }
        let q = -&placement.q / &placement.p;
        Arc::new(AffinePrecompose { inner: mix.function.shared(), p: placement.p.recip(), q })
    };
    let r = ClampedShift { inner: placed, lo: rat(1, 3), hi: rat(2, 3) };
    let v = mart(Arc::new(r), 2).memoized();
    let trace = diagonalize(&v, depth)?;
    Ok(DiffPoint { trace, mixture_terms: mix.terms, tail_bound: mix.tail_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::lambda_integral_staircase;
    use crate::martingale::{ConstantMartingale, Doubler};

    #[test]
    fn constant_is_flat() {
        let v = ConstantMartingale::new(2, int(1)).unwrap();
        let tr = diagonalize(&v, 12).unwrap();
        assert_eq!(tr.bits, [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(tr.values.iter().all(|x| x == &int(1)));
        assert!(tr.bound_violations().is_empty() && tr.local_violations().is_empty());
    }

    #[test]
    fn doubler_is_starved() {
        let v = Doubler { base: 2, digit: 0, initial: int(1), rounds: None };
        let tr = diagonalize(&v, 10).unwrap();
        assert_eq!(tr.bits, [1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(tr.values[1], int(0));
        assert!(tr.values[3..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn doubler_on_ones_avoided() {
        let v = Doubler { base: 2, digit: 1, initial: int(1), rounds: None };
        let tr = diagonalize(&v, 10).unwrap();
        assert!(tr.bound_violations().is_empty() && tr.local_violations().is_empty());
    }

    #[test]
    fn base_checked() {
        let v = ConstantMartingale::new(3, int(1)).unwrap();
        assert!(matches!(diagonalize(&v, 5), Err(Error::BaseMismatch { .. })));
    }

    #[test]
    fn mixing() {
        let id = MonotoneRationalFunction::identity();
        let same = mix_functions(&id, &[], 0, &int(1)).unwrap();
        assert_eq!(same.terms, 0);
        assert_eq!(same.function.value(&rat(3, 7), 0).unwrap(), rat(3, 7));
        let g = MonotoneRationalFunction::assume(Arc::new(lambda_integral_staircase()));
        let rise = g.value(&int(1), 0).unwrap();
        let mix = mix_functions(&id, &[g], 1, &rise).unwrap();
        assert_eq!(mix.tail_bound, &rise / int(2));
        let step = pow2(-8);
        let mut prev = mix.function.value(&int(0), 0).unwrap();
        for i in 1..=256 {
            let x = Rational::from_integer(i.into()) * &step;
            let cur = mix.function.value(&x, 0).unwrap();
            assert!((&cur - &prev) / &step >= int(1));
            prev = cur;
        }
        assert!(mix_functions(&id, &[MonotoneRationalFunction::identity()], 1, &rat(1, 2)).is_err());
    }

    #[test]
    fn identity_point() {
        let shifted = MonotoneRationalFunction::assume(Arc::new(LinearCombination {
            terms: vec![(int(1), Arc::new(crate::function::Identity))],
            offset: int(5),
        }));
        let dp = differentiability_point(&shifted, &[], 16, &Placement::default()).unwrap();
        assert_eq!(dp.trace.values[3..], vec![int(1); 14][..]);
        assert_eq!(&dp.trace.bits[..3], &PREFIX);
    }

    #[test]
    fn placement_reads_window() {
        let sq = MonotoneRationalFunction::assume(Arc::new(crate::function::Polynomial::square()));
        let pl = Placement { p: rat(1, 2), q: rat(1, 4) };
        let dp = differentiability_point(&sq, &[], 4, &pl).unwrap();
        // on [1/2, 9/16] the window reads h on [1/2, 17/32]; slope of x² there
        assert_eq!(dp.trace.values[4], (rat(17, 32) * rat(17, 32) - rat(1, 4)) * int(16));
    }
}
