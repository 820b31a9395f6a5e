use std::sync::Arc;

use num_traits::{One, Signed};
use proptest::prelude::*;

use dinidiff::correspondence::{fcn, mart, roundtrip_check, roundtrip_check_f};
use dinidiff::diffpoint::diagonalize;
use dinidiff::doobtree::{init_tree, run_strategy_partial, staircase_fixture, StrategyBudget};
use dinidiff::exact::{int, parse_rational, pow2, rat, to_decimal, CauchyName, Rational};
use dinidiff::function::{PiecewiseLinear, RationalFn};
use dinidiff::linterval::{build_l, inner_approx, inner_lset, outer_approx};
use dinidiff::martingale::{
    check_fairness, check_savings, normalize, savings_transform, Pattern, Predictor, SharedMartingale,
    TableMartingale, DEFAULT_BUDGET,
};
use dinidiff::sawtooth::{refine, sawtooth_fixture_cover, SawtoothFunction};
use dinidiff::slopes::{jordan_decompose, slope, uniform_grid};

fn q(n: i64, d: i64) -> Rational {
    rat(n, d)
}

fn arb_fraction() -> impl Strategy<Value = Rational> {
    (0i64..=16).prop_map(|n| q(n, 16))
}

fn arb_pattern(base: u32) -> impl Strategy<Value = Pattern> {
    prop_oneof![
        (0..base as u8).prop_map(Pattern::Constant),
        Just(Pattern::Alternate),
        Just(Pattern::Repeat),
        prop::collection::vec(0..base as u8, 1..4).prop_map(Pattern::Periodic),
    ]
}

fn arb_predictor(base: u32) -> impl Strategy<Value = Predictor> {
    (arb_pattern(base), arb_fraction(), 1i64..8)
        .prop_map(move |(p, f, c)| Predictor::new(base, p, f, q(c, 4)).unwrap())
}

/// Fair tables built by splitting each parent's mass by positive weights.
fn arb_fair_table(base: u32, depth: usize) -> impl Strategy<Value = TableMartingale> {
    let nodes: usize = (0..depth).map(|d| (base as usize).pow(d as u32)).sum();
    prop::collection::vec(prop::collection::vec(1i64..6, base as usize), nodes).prop_map(move |weights| {
        let k = int(base as i64);
        let mut levels = vec![vec![Rational::one()]];
        let mut w = weights.iter();
        for _ in 0..depth {
            let prev = levels.last().unwrap().clone();
            let mut next = vec![];
            for parent in &prev {
                let ws = w.next().unwrap();
                let total: i64 = ws.iter().sum();
                next.extend(ws.iter().map(|&x| &k * parent * q(x, total)));
            }
            levels.push(next);
        }
        TableMartingale::new(base, levels).unwrap()
    })
}

/// Increasing piecewise-linear functions through the origin with dyadic breakpoints.
fn arb_monotone_pwl() -> impl Strategy<Value = PiecewiseLinear> {
    prop::collection::btree_set(1i64..64, 1..6)
        .prop_flat_map(|xs| {
            let n = xs.len() + 1;
            (Just(xs), prop::collection::vec(0i64..9, n))
        })
        .prop_map(|(xs, rises)| {
            let mut pts = vec![(int(0), int(0))];
            let mut y = int(0);
            for (x, r) in xs.iter().map(|&x| q(x, 64)).chain(std::iter::once(int(1))).zip(rises) {
                y += q(r, 4);
                pts.push((x, y.clone()));
            }
            PiecewiseLinear::new(pts).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rational_strings_round_trip(n in -10_000i64..10_000, d in 1i64..10_000) {
        let x = q(n, d);
        prop_assert_eq!(parse_rational(&x.to_string()).unwrap(), x);
    }

    #[test]
    fn decimal_is_truncation(n in 0i64..100_000, d in 1i64..1000) {
        let x = q(n, d);
        let s = to_decimal(&x, 6);
        let shown = parse_rational(&s.replace('.', "")).unwrap() / int(1_000_000);
        prop_assert!(shown <= x && x - shown < pow2(-19));
    }

    #[test]
    fn constant_names_are_cauchy(n in -1000i64..1000, d in 1i64..1000) {
        prop_assert!(CauchyName::constant(q(n, d)).check_steps(32).is_none());
    }

    #[test]
    fn predictors_are_fair(p in (2u32..4).prop_flat_map(arb_predictor)) {
        let r = check_fairness(&p, 6, 0, DEFAULT_BUDGET).unwrap();
        prop_assert!(r.exact && r.passed());
    }

    #[test]
    fn normalized_savings_keep_their_properties(p in arb_predictor(2)) {
        let n: SharedMartingale = Arc::new(normalize(Arc::new(p)).unwrap());
        prop_assert!(check_fairness(n.as_ref(), 6, 0, DEFAULT_BUDGET).unwrap().passed());
        let s = savings_transform(n).unwrap();
        prop_assert!(check_fairness(&s, 8, 0, DEFAULT_BUDGET).unwrap().passed());
        prop_assert!(check_savings(&s, 9, DEFAULT_BUDGET).unwrap().passed());
    }

    #[test]
    fn tables_round_trip(t2 in arb_fair_table(2, 3), t3 in arb_fair_table(3, 2)) {
        for t in [t2, t3] {
            prop_assert!(check_fairness(&t, 4, 0, DEFAULT_BUDGET).unwrap().passed());
            let m: SharedMartingale = Arc::new(t);
            let bound = m.growth_bound();
            prop_assert!(roundtrip_check(m, bound, 5).unwrap().passed());
        }
    }

    #[test]
    fn functions_round_trip(f in arb_monotone_pwl()) {
        let r = roundtrip_check_f(Arc::new(f), 2, 7).unwrap();
        prop_assert!(r.passed() && r.offset.is_none());
    }

    #[test]
    fn fcn_of_mart_is_monotone_on_grid(f in arb_monotone_pwl()) {
        let m: SharedMartingale = Arc::new(mart(Arc::new(f.clone()), 2).memoized());
        let g = fcn(m.clone(), Some(dinidiff::martingale::GrowthBound::Constant(int(64)))).unwrap();
        let mut prev = int(0);
        for x in uniform_grid(32) {
            let v = g.value(&x, 0).unwrap();
            prop_assert!(v >= prev);
            prop_assert_eq!(&v, &f.eval(&x));
            prev = v;
        }
    }

    #[test]
    fn slopes_average(f in arb_monotone_pwl(), a in 0i64..30, b in 31i64..60, c in 61i64..90) {
        let (a, b, c) = (q(a, 90), q(b, 90), q(c, 90));
        let (s1, s2, s) = (slope(&f, &a, &b, 0).unwrap(), slope(&f, &b, &c, 0).unwrap(), slope(&f, &a, &c, 0).unwrap());
        let w = (&b - &a) / (&c - &a);
        prop_assert_eq!(&s, &(&w * &s1 + (Rational::one() - &w) * &s2));
        prop_assert!(s >= s1.clone().min(s2.clone()) && s <= s1.max(s2));
    }

    #[test]
    fn jordan_parts_are_monotone(pts in prop::collection::vec(-8i64..8, 2..10)) {
        let n = pts.len() - 1;
        let f = PiecewiseLinear::new(pts.iter().enumerate().map(|(i, &y)| (q(i as i64, n as i64), int(y))).collect()).unwrap();
        let grid = uniform_grid(n);
        let j = jordan_decompose(&f, &grid).unwrap();
        let mut total = int(0);
        for w in grid.windows(2) {
            let (d0, d1) = (j.f0.eval(&w[1]) - j.f0.eval(&w[0]), j.f1.eval(&w[1]) - j.f1.eval(&w[0]));
            prop_assert!(!d0.is_negative() && !d1.is_negative());
            total += (f.eval(&w[1]) - f.eval(&w[0])).abs();
        }
        for x in &grid {
            prop_assert_eq!(j.f0.eval(x) - j.f1.eval(x), f.eval(x));
        }
        prop_assert_eq!(total, j.variation);
    }

    #[test]
    fn outer_intervals_cover(x in 1i64..500, len in 1i64..500, alpha in prop_oneof![Just(int(4)), Just(int(2)), Just(q(3, 2))]) {
        let (x, y) = (q(x, 1001), q(x + len, 1001));
        prop_assume!(y < q(1, 2));
        let l = build_l(&alpha).unwrap();
        let (a, w) = outer_approx(&l, &x, &y).unwrap();
        prop_assert!(a.a() <= x && a.b() >= y);
        prop_assert!(a.length() / (&y - &x) < alpha);
        prop_assert!(w.validate(&alpha).is_empty());
        prop_assert!(l.is_l_interval(&a));
    }

    #[test]
    fn inner_intervals_fit(x in 1i64..500, len in 3i64..500, alpha in prop_oneof![Just(int(4)), Just(q(5, 4)), Just(q(9, 8))]) {
        let (x, y) = (q(x, 1001), q(x + len, 1001));
        prop_assume!(y < q(1, 2));
        let z = (&x * int(2) + &y) / int(3) + (&y - &x) / int(6);
        let l = inner_lset(&alpha).unwrap();
        let (b, w) = inner_approx(&l, &x, &y, &alpha, Some(&z)).unwrap();
        prop_assert!(b.a() >= x && b.b() <= y);
        prop_assert!((&y - &x) / b.length() < alpha);
        if alpha < q(4, 3) {
            prop_assert!(w.contains_z == Some(true) && b.contains(&z));
        }
    }

    #[test]
    fn diagonal_stays_bounded(t in arb_fair_table(2, 4), depth in 4usize..14) {
        let tr = diagonalize(&t, depth).unwrap();
        prop_assert!(tr.bound_violations().is_empty());
        prop_assert!(tr.local_violations().is_empty());
    }
}

fn fixture() -> &'static SawtoothFunction {
    static F: std::sync::OnceLock<SawtoothFunction> = std::sync::OnceLock::new();
    F.get_or_init(|| refine(&sawtooth_fixture_cover()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sawtooth_approximations_within_bound(n in 0u64..(1 << 40), m in 0usize..7) {
        let f = fixture();
        let x = Rational::new(n.into(), (1u64 << 40).into());
        let err = (f.f_eval(&x, m) - f.exact(&x)).abs();
        prop_assert!(err <= pow2(-(m as i64)));
    }

    #[test]
    fn doob_tree_invariants_along_random_points(n in 1i64..1_000_003, steps in 1usize..4) {
        let sc = staircase_fixture();
        // tree endpoints have denominators 2^a·3^b, so a prime denominator keeps z off them
        let z = CauchyName::constant(q(n, 1_000_003));
        let mut tree = init_tree(&sc.monotone(), &sc.config).unwrap();
        let budget = StrategyBudget { max_depth: 60, max_stall: 64 };
        let trace = run_strategy_partial(&mut tree, &z, steps, budget).unwrap();
        prop_assert!(!trace.entries.is_empty());
        prop_assert!(tree.check_invariants().passed());
        prop_assert!(trace.cycle_violations().is_empty());
    }
}
