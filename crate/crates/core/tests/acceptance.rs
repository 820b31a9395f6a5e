//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output; exits nonzero on any failure.
//! Runtime limits are wall-clock, measured in the test profile.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dinidiff::cli::builtin_real;
use dinidiff::correspondence::{base_convert, mart, roundtrip_check, roundtrip_check_f};
use dinidiff::diffpoint::{differentiability_point, Placement, PREFIX};
use dinidiff::doobtree::{run_strategy, staircase_fixture, StrategyBudget};
use dinidiff::exact::{expansion_prefix_adaptive, int, pow2, pow_int, rat, to_decimal, Rational};
use dinidiff::function::{lambda_integral_staircase, Identity, MonotoneRationalFunction, PiecewiseLinear, Polynomial, SharedFn};
use dinidiff::linterval::{build_l, exhaustive_check};
use dinidiff::martingale::{
    all_strings, capital_trace, check_fairness, check_savings, normalize, savings_transform, trace_max, ConstantMartingale,
    DigitString, Doubler, FnMartingale, Martingale, Pattern, Predictor, SharedMartingale, TableMartingale, DEFAULT_BUDGET,
};
use dinidiff::sawtooth::{
    density_and_variation, integral_identity_failures, modulus_probe, nondiff_witness, refine, sawtooth_fixture_cover,
    EffectiveCover,
};
use dinidiff::slopes::{default_schedule, pseudo_derivative_probe, ProbeGrid, Target};
use dinidiff::Error;

type Criterion = fn() -> (bool, String);

const CRITERIA: [(u32, &str, u64, Criterion); 10] = [
    (1, "fairness", 10, criterion_01_fairness),
    (2, "savings", 30, criterion_02_savings),
    (3, "round trips", 30, criterion_03_round_trips),
    (4, "L-interval exhaustive", 10, criterion_04_l_intervals),
    (5, "sawtooth invariants", 60, criterion_05_sawtooth_invariants),
    (6, "slope witness", 10, criterion_06_slope_witness),
    (7, "Doob growth", 60, criterion_07_doob_growth),
    (8, "diagonalization", 10, criterion_08_diagonalization),
    (9, "base conversion", 120, criterion_09_base_conversion),
    (10, "negative controls", 5, criterion_10_negative_controls),
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, secs, run) in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || f == &n.to_string()) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run);
        let elapsed = t.elapsed();
        let limit = Duration::from_secs(secs);
        let (ok, detail) = outcome.unwrap_or_else(|_| (false, "panicked".into()));
        let timely = elapsed < limit;
        let status = if ok && timely { "PASS" } else { "FAIL" };
        println!("ACCEPTANCE {n:>2} {status} {name}: {detail} [{:.2}s, limit {secs}s]", elapsed.as_secs_f64());
        if status == "FAIL" {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn builtin_martingales(base: u32) -> Vec<SharedMartingale> {
    let table = if base == 2 {
        TableMartingale::new(2, vec![vec![int(1)], vec![rat(1, 2), rat(3, 2)], vec![int(0), int(1), rat(9, 4), rat(3, 4)]])
    } else {
        TableMartingale::new(3, vec![vec![int(1)], vec![rat(1, 2), int(1), rat(3, 2)]])
    }
    .unwrap();
    vec![
        Arc::new(ConstantMartingale::new(base, rat(3, 2)).unwrap()),
        Arc::new(Doubler { base, digit: 1, initial: int(1), rounds: None }),
        Arc::new(Doubler { base, digit: 0, initial: rat(1, 2), rounds: Some(3) }),
        Arc::new(Predictor::new(base, Pattern::Alternate, rat(1, 3), int(1)).unwrap()),
        Arc::new(Predictor::new(base, Pattern::Constant(1), rat(1, 4), int(1)).unwrap()),
        Arc::new(table),
    ]
}

fn test_functions() -> Vec<SharedFn> {
    vec![
        Arc::new(Identity),
        Arc::new(Polynomial::square()),
        Arc::new(PiecewiseLinear::new(vec![(int(0), int(0)), (rat(1, 3), rat(1, 2)), (rat(1, 2), rat(1, 2)), (int(1), int(2))]).unwrap()),
        Arc::new(lambda_integral_staircase()),
    ]
}

fn criterion_01_fairness() -> (bool, String) {
    let mut checked = 0usize;
    let mut failed = vec![];
    for base in [2u32, 3] {
        let mut ms = builtin_martingales(base);
        let inner = ms.clone();
        for l in &inner {
            let n: SharedMartingale = Arc::new(normalize(l.clone()).unwrap());
            ms.push(n.clone());
            if base == 2 {
                ms.push(Arc::new(savings_transform(n).unwrap()));
            }
        }
        for f in test_functions() {
            ms.push(Arc::new(mart(f, base).memoized()));
        }
        let source: SharedMartingale = Arc::new(Predictor::new(5 - base, Pattern::Constant(1), rat(1, 4), int(1)).unwrap());
        ms.push(Arc::new(base_convert(source, base, 16).unwrap()));
        for m in &ms {
            let r = check_fairness(m.as_ref(), 10, 0, DEFAULT_BUDGET).unwrap();
            checked += r.checked;
            if !(r.exact && r.passed()) {
                failed.push(format!("{} base {base}", m.name()));
            }
        }
    }
    let detail = format!("{checked} strings exact to depth 10 in bases 2 and 3, failures {failed:?}");
    (failed.is_empty(), detail)
}

fn criterion_02_savings() -> (bool, String) {
    let sources: Vec<SharedMartingale> = vec![
        Arc::new(Doubler { base: 2, digit: 1, initial: int(1), rounds: None }),
        Arc::new(Predictor::new(2, Pattern::Alternate, rat(1, 2), int(1)).unwrap()),
        Arc::new(Predictor::new(2, Pattern::Constant(0), rat(3, 4), rat(1, 3)).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut ok = true;
    let mut exhaustive = 0usize;
    let mut sampled = 0usize;
    for l in sources {
        let s = savings_transform(Arc::new(normalize(l).unwrap())).unwrap();
        let r = check_savings(&s, 14, DEFAULT_BUDGET).unwrap();
        exhaustive += r.checked;
        ok &= r.passed();
        let root = s.eval(&[], 0).unwrap();
        for _ in 0..1000 / 3 + 1 {
            let n = rng.gen_range(0..=14);
            let sigma: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let mut rho = sigma.clone();
            rho.extend((0..rng.gen_range(0..=14 - n)).map(|_| rng.gen_range(0..2u8)));
            let (ms, mr) = (s.eval(&sigma, 0).unwrap(), s.eval(&rho, 0).unwrap());
            ok &= mr >= &ms - int(2);
            ok &= mr <= int(2 * rho.len() as i64) + &root;
            sampled += 1;
        }
    }
    let detail = format!("{sampled} sampled nested pairs, {exhaustive} strings checked exhaustively to depth 14");
    (ok && sampled >= 1000, detail)
}

fn criterion_03_round_trips() -> (bool, String) {
    let mut failures = vec![];
    let mut checked = 0usize;
    for base in [2u32, 3] {
        let mut ms = builtin_martingales(base);
        ms.remove(1);
        let doubler: SharedMartingale = Arc::new(normalize(builtin_martingales(base)[1].clone()).unwrap());
        ms[4] = if base == 2 { Arc::new(savings_transform(doubler).unwrap()) } else { doubler };
        for m in ms {
            let bound = m.growth_bound();
            let r = roundtrip_check(m.clone(), bound, 8).unwrap();
            checked += r.checked;
            if !r.passed() {
                failures.push(format!("Mart(Fcn({})) base {base}", m.name()));
            }
        }
        for (i, f) in test_functions().into_iter().enumerate().skip(1) {
            let r = roundtrip_check_f(f, base, 8).unwrap();
            checked += r.checked;
            if !r.passed() || r.offset.is_some() {
                failures.push(format!("Fcn(Mart(test function {i})) base {base}"));
            }
        }
    }
    let detail = format!("5 martingales and 3 functions per base, {checked} exact comparisons, failures {failures:?}");
    (failures.is_empty(), detail)
}

fn criterion_04_l_intervals() -> (bool, String) {
    let l = build_l(&int(4)).unwrap();
    let r = exhaustive_check(&int(4), 7).unwrap();
    let ok = l.k == 3 && l.members.len() <= 16 && r.passed() && r.instances == 63 * 62 / 2;
    let detail = format!(
        "k = {}, |L| = {}, {} instances, {} outer and {} inner failures",
        l.k,
        l.members.len(),
        r.instances,
        r.outer_failures.len(),
        r.inner_failures.len()
    );
    (ok, detail)
}

fn criterion_05_sawtooth_invariants() -> (bool, String) {
    let f = refine(&sawtooth_fixture_cover()).unwrap();
    let inv = f.check_invariants();
    let mut ok = inv.passed() && f.levels.len() == 7;
    let mut worst = Rational::zero();
    for m in 0..f.levels.len() {
        let rep = modulus_probe(&f, m, 1000, 5);
        ok &= rep.pairs == 1000 && rep.violations.is_empty();
        worst = worst.max(&rep.max_diff * pow2(m as i64 - 2));
        ok &= integral_identity_failures(&f, m, 64, m as u64).is_empty();
    }
    let var = density_and_variation(&f).unwrap();
    ok &= var.within_bounds() && var.total <= int(2);
    let detail = format!(
        "M = 6, variation {} <= 2, worst modulus ratio {}, integral identity at all breakpoints",
        to_decimal(&var.total, 4),
        to_decimal(&worst, 4)
    );
    (ok, detail)
}

fn criterion_06_slope_witness() -> (bool, String) {
    let f = refine(&sawtooth_fixture_cover()).unwrap();
    let z = builtin_real("third").unwrap();
    let mut ok = f.truncation_slack() <= pow2(-4);
    let mut parts = vec![];
    for m in 2..=4usize {
        let w = nondiff_witness(&f, &z, m).unwrap();
        let target = pow_int(4, m as i64 - 1) - int(4);
        ok &= w.passed() && w.bound == target && w.truncation_slack <= pow2(-4);
        ok &= w.slope >= &target - &w.truncation_slack - &w.displacement_slack;
        parts.push(format!("m={m} slope {} >= {}", to_decimal(&w.slope, 2), target));
    }
    (ok, parts.join(", "))
}

fn criterion_07_doob_growth() -> (bool, String) {
    let sc = staircase_fixture();
    let trace = run_strategy(&sc.monotone(), &sc.config, &sc.z_name(), 6, StrategyBudget::default()).unwrap();
    let target = num_traits::pow(sc.config.alpha.clone(), 6);
    let growth = trace.growth(6).unwrap_or_else(Rational::zero);
    let ok = trace.completed && trace.cycles() >= 6 && growth >= target && trace.cycle_violations().is_empty();
    let detail = format!(
        "{} cycles, Gamma ratio at sixth entry {} >= alpha^6 = {}",
        trace.cycles(),
        to_decimal(&growth, 3),
        to_decimal(&target, 3)
    );
    (ok, detail)
}

fn criterion_08_diagonalization() -> (bool, String) {
    let sc = staircase_fixture();
    let g = MonotoneRationalFunction::assume(Arc::new(lambda_integral_staircase()));
    let placement = Placement { p: int(1), q: rat(-3, 10) };
    let dp = differentiability_point(&sc.monotone(), &[g], 30, &placement).unwrap();
    let tr = &dp.trace;
    let limit = &tr.values[3] + rat(1, 4);
    let mut ok = tr.exact && tr.bits.len() == 30 && tr.bits[..3] == PREFIX;
    ok &= tr.values.iter().skip(3).all(|v| v <= &limit);
    ok &= tr.steps.iter().all(|s| s.chosen_value <= &s.rejected_value + pow2(-(s.n as i64)));
    ok &= tr.bound_violations().is_empty() && tr.local_violations().is_empty();
    let nontrivial = tr.values.iter().skip(3).any(|v| v != &tr.values[3]);
    let detail = format!(
        "Z = {}, V(Z|3) = {}, max V = {}, varies {nontrivial}",
        tr.prefix(),
        to_decimal(&tr.values[3], 4),
        to_decimal(tr.values.iter().skip(3).max().unwrap(), 4)
    );
    (ok, detail)
}

fn criterion_09_base_conversion() -> (bool, String) {
    let x = builtin_real("champernowne2").unwrap();
    let z2 = DigitString::new(2, expansion_prefix_adaptive(&x, 2, 64, 400).unwrap()).unwrap();
    let p = Predictor::new(2, Pattern::Constant(1), rat(1, 4), int(1)).unwrap();
    let tr2 = capital_trace(&p, &z2, 64, 0).unwrap();
    let (i2, max2) = trace_max(&tr2).unwrap();
    let saved: SharedMartingale = Arc::new(savings_transform(Arc::new(normalize(Arc::new(p)).unwrap())).unwrap());
    let bc = base_convert(saved, 3, 32).unwrap();
    let fair = check_fairness(&bc, 5, 0, DEFAULT_BUDGET).unwrap();
    let z3 = DigitString::new(3, expansion_prefix_adaptive(&x, 3, 30, 400).unwrap()).unwrap();
    let tr3 = capital_trace(&bc, &z3, 30, 0).unwrap();
    let (i3, max3) = trace_max(&tr3).unwrap();
    let ok = max2 > int(4) && fair.exact && fair.passed() && max3 > int(1);
    let detail = format!(
        "base-2 max {} at {i2}, base-3 fairness to depth 5 {}, base-3 max {} at {i3}",
        to_decimal(&max2, 3),
        fair.passed(),
        to_decimal(&max3, 3)
    );
    (ok, detail)
}

fn criterion_10_negative_controls() -> (bool, String) {
    let probe = pseudo_derivative_probe(&Identity, &Target::from(rat(2, 7)), &default_schedule(), &ProbeGrid::default()).unwrap();
    let flat_probe = probe
        .records
        .iter()
        .all(|r| r.n_pairs > 0 && r.sup_slope() == Some(&Rational::one()) && r.inf_slope() == Some(&Rational::one()));

    let c = ConstantMartingale::new(2, int(1)).unwrap();
    let flat_trace = all_strings(2, 6)
        .iter()
        .filter(|s| s.len() == 6)
        .all(|s| capital_trace(&c, &DigitString::new(2, s.clone()).unwrap(), 6, 0).unwrap().iter().all(|v| v == &int(1)));

    let broken = FnMartingale::new(2, "broken", |s: &[u8]| if s.len() == 3 && s[2] == 1 { int(2) } else { int(1) });
    let flagged = !check_fairness(&broken, 4, 0, DEFAULT_BUDGET).unwrap().passed();

    let bad = EffectiveCover::new(vec![vec![(rat(1, 4), rat(1, 2))], vec![(rat(1, 2), rat(9, 16))]]).unwrap();
    let rejected = matches!(refine(&bad), Err(Error::NestingViolated { level: 1, .. }));

    let ok = flat_probe && flat_trace && flagged && rejected;
    let detail = format!("flat probe {flat_probe}, flat trace {flat_trace}, broken fairness flagged {flagged}, bad nesting rejected {rejected}");
    (ok, detail)
}
