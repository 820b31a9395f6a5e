//! Command-line experiment runner: JSON descriptors in, JSON/CSV artifacts out.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer};
use serde_json::{json, Value};

use crate::correspondence::{base_convert, fcn, mart, roundtrip_check, roundtrip_check_f, RoundTripReport};
use crate::diffpoint::{differentiability_point, Placement};
use crate::doobtree::{init_tree, run_strategy_partial, staircase_fixture, DoobConfig, StrategyBudget};
use crate::error::{Error, Result};
use crate::exact::{expansion_prefix_adaptive, parse_rational, pow2, sqrt_floor, to_decimal, CauchyName, Rational};
use crate::function::{
    lambda_integral_staircase, AbsShift, Identity, LinearCombination, MonotoneRationalFunction, PiecewiseLinear, Polynomial,
    Sawtooth, SharedFn,
};
use crate::linterval::{build_l, exhaustive_check, inner_approx, inner_lset, outer_approx};
use crate::martingale::{
    capital_trace, check_fairness, check_savings, normalize, savings_transform, trace_max, ConstantMartingale, DigitString,
    Doubler, FairnessReport, Pattern, Predictor, SharedMartingale, TableMartingale, DEFAULT_BUDGET,
};
use crate::sawtooth::{
    density_and_variation, modulus_probe, nondiff_witness, refine, sawtooth_fixture_cover, EffectiveCover, SawtoothFunction,
};
use crate::slopes::{default_schedule, jordan_decompose, pseudo_derivative_probe, uniform_grid, ProbeGrid, Target};

/// Environment variable overriding enumeration budgets.
pub const BUDGET_ENV: &str = "DINIDIFF_BUDGET";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Exact rational read from a `"n"`, `"a/b"` or `"i/2^n"` string.
#[derive(Debug, Clone, PartialEq)]
pub struct Q(pub Rational);

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map(Q).map_err(serde::de::Error::custom)
    }
}

fn one_q() -> Q {
    Q(Rational::one())
}

fn zero_q() -> Q {
    Q(Rational::zero())
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternDesc {
    Constant { digit: u8 },
    Alternate,
    Repeat,
    Periodic { digits: Vec<u8> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MartingaleDesc {
    Constant {
        #[serde(default = "two")]
        base: u32,
        value: Q,
    },
    Doubler {
        #[serde(default = "two")]
        base: u32,
        digit: u8,
        #[serde(default = "one_q")]
        initial: Q,
        #[serde(default)]
        rounds: Option<u32>,
    },
    Predictor {
        #[serde(default = "two")]
        base: u32,
        pattern: PatternDesc,
        fraction: Q,
        #[serde(default = "one_q")]
        initial: Q,
    },
    Table {
        #[serde(default = "two")]
        base: u32,
        levels: Vec<Vec<Q>>,
    },
    Normalize {
        of: Box<MartingaleDesc>,
    },
    Savings {
        of: Box<MartingaleDesc>,
    },
    Mart {
        function: FunctionDesc,
        #[serde(default = "two")]
        base: u32,
    },
    BaseConvert {
        of: Box<MartingaleDesc>,
        base: u32,
        depth: u32,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDesc {
    pub weight: Q,
    pub function: FunctionDesc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionDesc {
    Identity,
    Polynomial { coeffs: Vec<Q> },
    PiecewiseLinear { points: Vec<(Q, Q)> },
    AbsShift { center: Q, scale: Q },
    Sawtooth { a: Q, b: Q, scale: Q },
    LambdaStaircase,
    DoobStaircase,
    SawtoothFixture,
    Fcn { martingale: Box<MartingaleDesc> },
    Sum {
        terms: Vec<TermDesc>,
        #[serde(default = "zero_q")]
        offset: Q,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoobConfigDesc {
    pub beta_t: Q,
    pub gamma_t: Q,
    pub alpha: Q,
    pub beta: Q,
    pub gamma: Q,
    #[serde(default)]
    pub k: Option<u32>,
    pub p: Q,
    pub q: Q,
    pub r: Q,
    pub s: Q,
}

impl DoobConfigDesc {
    pub fn build(&self) -> Result<DoobConfig> {
        DoobConfig::new(
            self.beta_t.0.clone(),
            self.gamma_t.0.clone(),
            self.alpha.0.clone(),
            self.beta.0.clone(),
            self.gamma.0.clone(),
            self.k,
            (self.p.0.clone(), self.q.0.clone()),
            (self.r.0.clone(), self.s.0.clone()),
        )
    }
}

/// Parses JSON, reporting the location of a schema error.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let raw: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    check_rationals(&raw, &mut String::new())?;
    serde_path_to_error::deserialize(raw).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse(format!("at {path}: {}", e.into_inner()))
    })
}

/// Every string other than a `kind`/`type` tag must be a rational literal.
fn check_rationals(v: &Value, path: &mut String) -> Result<()> {
    match v {
        Value::String(s) => {
            parse_rational(s).map_err(|e| Error::Parse(format!("at {}: {e}", if path.is_empty() { "/" } else { path })))?;
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                let _ = write!(path, "/{i}");
                check_rationals(item, path)?;
                path.truncate(len);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                if (k == "kind" || k == "type") && item.is_string() {
                    continue;
                }
                let len = path.len();
                let _ = write!(path, "/{k}");
                check_rationals(item, path)?;
                path.truncate(len);
            }
        }
        _ => {}
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_json(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl PatternDesc {
    fn build(&self) -> Pattern {
        match self {
            PatternDesc::Constant { digit } => Pattern::Constant(*digit),
            PatternDesc::Alternate => Pattern::Alternate,
            PatternDesc::Repeat => Pattern::Repeat,
            PatternDesc::Periodic { digits } => Pattern::Periodic(digits.clone()),
        }
    }
}

impl MartingaleDesc {
    pub fn build(&self) -> Result<SharedMartingale> {
        Ok(match self {
            MartingaleDesc::Constant { base, value } => Arc::new(ConstantMartingale::new(*base, value.0.clone())?),
            MartingaleDesc::Doubler { base, digit, initial, rounds } => {
                if u32::from(*digit) >= *base || *base < 2 {
                    return Err(Error::InvalidDigit { digit: u32::from(*digit), base: *base });
                }
                Arc::new(Doubler { base: *base, digit: *digit, initial: initial.0.clone(), rounds: *rounds })
            }
            MartingaleDesc::Predictor { base, pattern, fraction, initial } => {
                Arc::new(Predictor::new(*base, pattern.build(), fraction.0.clone(), initial.0.clone())?)
            }
            MartingaleDesc::Table { base, levels } => Arc::new(TableMartingale::new(
                *base,
                levels.iter().map(|l| l.iter().map(|q| q.0.clone()).collect()).collect(),
            )?),
            MartingaleDesc::Normalize { of } => Arc::new(normalize(of.build()?)?),
            MartingaleDesc::Savings { of } => Arc::new(savings_transform(of.build()?)?),
            MartingaleDesc::Mart { function, base } => Arc::new(mart(function.build()?, *base).memoized()),
            MartingaleDesc::BaseConvert { of, base, depth } => Arc::new(base_convert(of.build()?, *base, *depth)?),
        })
    }
}

impl FunctionDesc {
    pub fn build(&self) -> Result<SharedFn> {
        Ok(match self {
            FunctionDesc::Identity => Arc::new(Identity),
            FunctionDesc::Polynomial { coeffs } => Arc::new(Polynomial::new(coeffs.iter().map(|q| q.0.clone()).collect())),
            FunctionDesc::PiecewiseLinear { points } => {
                Arc::new(PiecewiseLinear::new(points.iter().map(|(x, y)| (x.0.clone(), y.0.clone())).collect())?)
            }
            FunctionDesc::AbsShift { center, scale } => Arc::new(AbsShift { center: center.0.clone(), scale: scale.0.clone() }),
            FunctionDesc::Sawtooth { a, b, scale } => Arc::new(Sawtooth { a: a.0.clone(), b: b.0.clone(), scale: scale.0.clone() }),
            FunctionDesc::LambdaStaircase => Arc::new(lambda_integral_staircase()),
            FunctionDesc::DoobStaircase => Arc::new(staircase_fixture().function),
            FunctionDesc::SawtoothFixture => Arc::new(refine(&sawtooth_fixture_cover())?),
            FunctionDesc::Fcn { martingale } => {
                let m = martingale.build()?;
                let bound = m.growth_bound();
                Arc::new(fcn(m, bound)?.with_budget(budget_from_env(crate::correspondence::DEFAULT_WALK_BUDGET)?))
            }
            FunctionDesc::Sum { terms, offset } => Arc::new(LinearCombination {
                terms: terms.iter().map(|t| Ok((t.weight.0.clone(), t.function.build()?))).collect::<Result<_>>()?,
                offset: offset.0.clone(),
            }),
        })
    }

    /// Wraps the function after checking monotonicity on the dyadic grid of depth 10.
    pub fn build_monotone(&self) -> Result<MonotoneRationalFunction> {
        let strict = matches!(self, FunctionDesc::Identity | FunctionDesc::DoobStaircase);
        Ok(MonotoneRationalFunction::checked(self.build()?, 10)?.with_strictly_increasing(strict))
    }
}

/// Budget override from the environment, else `default`.
pub fn budget_from_env(default: u128) -> Result<u128> {
    match std::env::var(BUDGET_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| Error::Parse(format!("{BUDGET_ENV}={s:?} is not a nonnegative integer"))),
        Err(_) => Ok(default),
    }
}

/// Binary digits of the Champernowne real `0.0 1 10 11 100 …`.
pub fn champernowne2_bits(n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n + 64);
    let mut k: u64 = 0;
    while out.len() < n {
        if k == 0 {
            out.push(0);
        } else {
            let bits = 64 - k.leading_zeros();
            out.extend((0..bits).rev().map(|i| ((k >> i) & 1) as u8));
        }
        k += 1;
    }
    out.truncate(n);
    out
}

fn truncation_name(label: &str, digits: impl Fn(u32) -> Rational + Send + Sync + 'static) -> CauchyName {
    CauchyName::from_fn(digits).with_label(label)
}

/// Test reals by name (`third`, `sqrt2half`, `champernowne2`) or any rational literal.
pub fn builtin_real(name: &str) -> Result<CauchyName> {
    match name {
        "third" => Ok(truncation_name("third", |n| {
            let d = BigInt::one() << n as usize;
            Rational::new(&d / BigInt::from(3), d)
        })),
        "sqrt2half" => Ok(truncation_name("sqrt2half", |n| sqrt_floor(&Rational::new(1.into(), 2.into()), n))),
        "champernowne2" => Ok(truncation_name("champernowne2", |n| {
            let bits = champernowne2_bits(n as usize);
            let mut num = BigInt::zero();
            for b in bits {
                num = (num << 1) + BigInt::from(b);
            }
            Rational::new(num, BigInt::one() << n as usize)
        })
        .memoized()),
        other => match parse_rational(other) {
            Ok(q) => Ok(CauchyName::constant(q)),
            Err(_) => Err(Error::UnknownName(other.to_string())),
        },
    }
}

#[derive(Parser, Debug)]
#[command(name = "dinidiff", version, about = "Exact-rational martingale and monotone-function experiments")]
pub struct Cli {
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write the artifact here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Add decimal renderings with this many digits, tagged display-only.
    #[arg(long, global = true)]
    pub decimals: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact fairness on all strings to a depth.
    Fairness(FairnessArgs),
    /// Savings transform and its two growth properties.
    Savings(SavingsArgs),
    /// Mart(Fcn(M)) = M or Fcn(Mart(f)) = f on grids.
    Roundtrip(RoundtripArgs),
    /// Convert a martingale to another base.
    BaseConvert(BaseConvertArgs),
    /// Capital along the expansion of a real.
    Trace(TraceArgs),
    /// L-interval approximations.
    Linterval(LintervalArgs),
    /// Interval betting strategy.
    Doob {
        #[command(subcommand)]
        cmd: DoobCmd,
    },
    /// Sawtooth functions from effective covers.
    Sawtooth {
        #[command(subcommand)]
        cmd: SawtoothCmd,
    },
    /// Digits along which the derived martingale stays bounded.
    Diffpoint(DiffpointArgs),
    /// Pseudo-derivative slope probes.
    SlopeProbe(SlopeProbeArgs),
    /// Grid Jordan decomposition.
    Jordan(JordanArgs),
}

#[derive(Args, Debug)]
pub struct FairnessArgs {
    #[arg(long)]
    pub martingale: PathBuf,
    #[arg(long)]
    pub depth: usize,
    #[arg(long, default_value_t = 32)]
    pub precision: u32,
}

#[derive(Args, Debug)]
pub struct SavingsArgs {
    #[arg(long)]
    pub martingale: PathBuf,
    #[arg(long)]
    pub depth: usize,
    /// Normalize before the transform.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    #[arg(long, conflicts_with = "function", required_unless_present = "function")]
    pub martingale: Option<PathBuf>,
    #[arg(long)]
    pub function: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub base: u32,
    #[arg(long)]
    pub depth: usize,
}

#[derive(Args, Debug)]
pub struct BaseConvertArgs {
    #[arg(long)]
    pub martingale: PathBuf,
    #[arg(long)]
    pub base: u32,
    /// Truncation depth of the source distribution function.
    #[arg(long, default_value_t = 24)]
    pub depth: u32,
    #[arg(long, default_value_t = 5)]
    pub fairness_depth: usize,
    #[arg(long)]
    pub real: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub digits: usize,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    pub martingale: PathBuf,
    #[arg(long)]
    pub real: String,
    #[arg(long)]
    pub digits: usize,
    #[arg(long, default_value_t = 32)]
    pub precision: u32,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct LintervalArgs {
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub inner: bool,
    #[arg(long)]
    pub z: Option<String>,
    /// Check all dyadic pairs of this depth.
    #[arg(long)]
    pub exhaustive: Option<u32>,
}

#[derive(Subcommand, Debug)]
pub enum DoobCmd {
    /// Follow a point down the strategy tree, one JSON line per visited interval.
    Run(DoobRunArgs),
}

#[derive(Args, Debug)]
pub struct DoobRunArgs {
    #[arg(long, conflicts_with = "function")]
    pub fixture: Option<String>,
    #[arg(long, requires = "config")]
    pub function: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub z: Option<String>,
    #[arg(long, default_value_t = 6)]
    pub cycles: usize,
    #[arg(long, default_value_t = 4000)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 256)]
    pub max_stall: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CoverSource {
    #[arg(long, conflicts_with = "fixture")]
    pub cover: Option<PathBuf>,
    /// Use the nested cover around 1/3.
    #[arg(long)]
    pub fixture: bool,
}

#[derive(Subcommand, Debug)]
pub enum SawtoothCmd {
    /// Refine a cover and report its invariants.
    Build(CoverSource),
    /// Evaluate the truncated sum.
    Eval {
        #[command(flatten)]
        source: CoverSource,
        #[arg(long)]
        x: String,
        /// Also report the certified approximation at this level.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Slope witness at a point of the cover and sampled modulus checks.
    Probe {
        #[command(flatten)]
        source: CoverSource,
        #[arg(long)]
        z: String,
        #[arg(long)]
        level: usize,
        #[arg(long, default_value_t = 0)]
        modulus_pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Density variation per level.
    Variation(CoverSource),
}

#[derive(Args, Debug)]
pub struct DiffpointArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub depth: usize,
    /// Extra nondecreasing functions mixed in with weights 2^-k.
    #[arg(long)]
    pub candidate: Vec<PathBuf>,
    #[arg(long, default_value = "1")]
    pub p: String,
    #[arg(long, default_value = "0")]
    pub q: String,
}

#[derive(Args, Debug)]
pub struct SlopeProbeArgs {
    #[arg(long)]
    pub function: PathBuf,
    #[arg(long)]
    pub z: String,
    #[arg(long, default_value_t = 14)]
    pub grid_exponent: u32,
    #[arg(long, default_value_t = 128)]
    pub max_points: usize,
    /// Comma-separated scales; defaults to 2^-1 .. 2^-12.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct JordanArgs {
    #[arg(long)]
    pub function: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
}

/// Exact rendering plus an optional display-only decimal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Render {
    pub decimals: Option<usize>,
}

impl Render {
    pub fn q(&self, q: &Rational) -> Value {
        match self.decimals {
            Some(d) => json!({"exact": q.to_string(), "display_only": to_decimal(q, d)}),
            None => Value::String(q.to_string()),
        }
    }

    fn qs(&self, v: &[Rational]) -> Value {
        Value::Array(v.iter().map(|q| self.q(q)).collect())
    }
}

/// Rendered artifact and whether every checked property held.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub passed: bool,
    /// Overrides the pass/violation status, e.g. for partial output under an exhausted budget.
    pub code: Option<i32>,
}

impl Outcome {
    fn json(v: Value, passed: bool) -> Self {
        Outcome { body: serde_json::to_string_pretty(&v).expect("json renders") + "\n", passed, code: None }
    }
}

fn digits_str(d: &[u8]) -> String {
    d.iter().map(|c| char::from_digit(u32::from(*c), 36).expect("digit")).collect()
}

fn q_arg(s: &str) -> Result<Rational> {
    parse_rational(s)
}

fn fairness_json(r: &FairnessReport, rd: Render) -> Value {
    json!({
        "base": r.base,
        "depth": r.depth,
        "exact": r.exact,
        "tolerance": rd.q(&r.tolerance),
        "checked": r.checked,
        "violations": r.violations.iter().take(32).map(|v| json!({
            "sigma": digits_str(&v.sigma),
            "parent": rd.q(&v.parent),
            "children_sum": rd.q(&v.children_sum),
        })).collect::<Vec<_>>(),
        "violation_count": r.violations.len(),
        "negative": r.negative.iter().take(32).map(|s| digits_str(s)).collect::<Vec<_>>(),
        "passed": r.passed(),
    })
}

fn roundtrip_json(r: &RoundTripReport, rd: Render) -> Value {
    json!({
        "base": r.base,
        "depth": r.depth,
        "checked": r.checked,
        "offset": r.offset.as_ref().map(|q| rd.q(q)),
        "mismatches": r.mismatches.iter().take(32).map(|m| format!("{m:?}")).collect::<Vec<_>>(),
        "mismatch_count": r.mismatches.len(),
        "passed": r.passed(),
    })
}

fn load_cover(src: &CoverSource) -> Result<EffectiveCover> {
    match (&src.cover, src.fixture) {
        (Some(path), false) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            EffectiveCover::from_json(&text)
        }
        (None, true) => Ok(sawtooth_fixture_cover()),
        _ => Err(Error::Parse("give exactly one of --cover or --fixture".into())),
    }
}

fn level_summary(f: &SawtoothFunction, rd: Render) -> Vec<Value> {
    f.levels
        .iter()
        .map(|l| {
            json!({
                "level": l.m,
                "intervals": l.d.len(),
                "chunks": l.chunk_count(),
                "measure": rd.q(&l.measure()),
                "peak": rd.q(&l.peak()),
                "variation": rd.q(&l.variation()),
            })
        })
        .collect()
}

/// Runs one command and renders its artifact.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let rd = Render { decimals: cli.decimals };
    match &cli.command {
        Command::Fairness(a) => {
            let m = read_json::<MartingaleDesc>(&a.martingale)?.build()?;
            let r = check_fairness(m.as_ref(), a.depth, a.precision, budget_from_env(DEFAULT_BUDGET)?)?;
            let mut v = fairness_json(&r, rd);
            v["martingale"] = Value::String(m.name());
            Ok(Outcome::json(v, r.passed()))
        }
        Command::Savings(a) => {
            let mut l = read_json::<MartingaleDesc>(&a.martingale)?.build()?;
            if a.normalize {
                l = Arc::new(normalize(l)?);
            }
            let s = savings_transform(l)?;
            let r = check_savings(&s, a.depth, budget_from_env(DEFAULT_BUDGET)?)?;
            let v = json!({
                "martingale": crate::martingale::Martingale::name(&s),
                "depth": r.depth,
                "checked": r.checked,
                "drops": r.drops.iter().take(32).map(|(x, y)| [digits_str(x), digits_str(y)]).collect::<Vec<_>>(),
                "growth_violations": r.growth.iter().take(32).map(|s| digits_str(s)).collect::<Vec<_>>(),
                "passed": r.passed(),
            });
            Ok(Outcome::json(v, r.passed()))
        }
        Command::Roundtrip(a) => {
            let r = if let Some(path) = &a.martingale {
                let m = read_json::<MartingaleDesc>(path)?.build()?;
                let bound = m.growth_bound();
                roundtrip_check(m, bound, a.depth)?
            } else {
                let path = a.function.as_ref().ok_or_else(|| Error::Parse("give --martingale or --function".into()))?;
                roundtrip_check_f(read_json::<FunctionDesc>(path)?.build()?, a.base, a.depth)?
            };
            let passed = r.passed();
            Ok(Outcome::json(roundtrip_json(&r, rd), passed))
        }
        Command::BaseConvert(a) => {
            let m = read_json::<MartingaleDesc>(&a.martingale)?.build()?;
            let n = base_convert(m, a.base, a.depth)?;
            let fair = check_fairness(&n, a.fairness_depth, 32, budget_from_env(DEFAULT_BUDGET)?)?;
            let mut v = json!({
                "source_base": n.source_base(),
                "target_base": a.base,
                "truncation_depth": n.truncation_depth(),
                "error_bound_at_fairness_depth": rd.q(&n.error_bound(a.fairness_depth)),
                "fairness": fairness_json(&fair, rd),
            });
            if let Some(name) = &a.real {
                let x = builtin_real(name)?;
                let digits = expansion_prefix_adaptive(&x, a.base, a.digits as u32, 1 << 14)?;
                let z = DigitString::new(a.base, digits)?;
                let tr = capital_trace(&n, &z, a.digits, 32)?;
                let (at, max) = trace_max(&tr).expect("nonempty trace");
                v["real"] = Value::String(name.clone());
                v["expansion"] = Value::String(z.to_string());
                v["trace"] = rd.qs(&tr);
                v["max"] = json!({"n": at, "capital": rd.q(&max)});
            }
            Ok(Outcome::json(v, fair.passed()))
        }
        Command::Trace(a) => {
            let m = read_json::<MartingaleDesc>(&a.martingale)?.build()?;
            let x = builtin_real(&a.real)?;
            let digits = expansion_prefix_adaptive(&x, m.base(), a.digits as u32, 1 << 14)?;
            let z = DigitString::new(m.base(), digits)?;
            let tr = capital_trace(m.as_ref(), &z, a.digits, a.precision)?;
            if a.csv {
                let mut out = String::from("n,prefix,capital\n");
                for (n, c) in tr.iter().enumerate() {
                    let _ = writeln!(out, "{n},{},{c}", digits_str(&z.digits()[..n]));
                }
                return Ok(Outcome { body: out, passed: true, code: None });
            }
            let (at, max) = trace_max(&tr).expect("nonempty trace");
            let v = json!({
                "martingale": m.name(),
                "real": a.real,
                "expansion": z.to_string(),
                "trace": rd.qs(&tr),
                "max": {"n": at, "capital": rd.q(&max)},
            });
            Ok(Outcome::json(v, true))
        }
        Command::Linterval(a) => run_linterval(a, rd),
        Command::Doob { cmd: DoobCmd::Run(a) } => run_doob(a, rd),
        Command::Sawtooth { cmd } => run_sawtooth(cmd, rd),
        Command::Diffpoint(a) => {
            let f = read_json::<FunctionDesc>(&a.input)?.build_monotone()?;
            let cands = a
                .candidate
                .iter()
                .map(|p| read_json::<FunctionDesc>(p)?.build_monotone())
                .collect::<Result<Vec<_>>>()?;
            let placement = Placement { p: q_arg(&a.p)?, q: q_arg(&a.q)? };
            let dp = differentiability_point(&f, &cands, a.depth, &placement)?;
            let tr = &dp.trace;
            let passed = tr.bound_violations().is_empty() && tr.local_violations().is_empty();
            let v = json!({
                "z": digits_str(&tr.bits),
                "exact": tr.exact,
                "values": rd.qs(&tr.values),
                "steps": tr.steps.iter().map(|s| json!({
                    "n": s.n,
                    "chosen": s.chosen,
                    "chosen_value": rd.q(&s.chosen_value),
                    "rejected_value": rd.q(&s.rejected_value),
                })).collect::<Vec<_>>(),
                "mixture_terms": dp.mixture_terms,
                "tail_bound": rd.q(&dp.tail_bound),
                "bound_violations": tr.bound_violations(),
                "local_violations": tr.local_violations(),
                "passed": passed,
            });
            Ok(Outcome::json(v, passed))
        }
        Command::SlopeProbe(a) => {
            let f = read_json::<FunctionDesc>(&a.function)?.build()?;
            let z = builtin_real(&a.z)?;
            let target = match parse_rational(&a.z) {
                Ok(q) => Target::from(q),
                Err(_) => Target::from(z),
            };
            let schedule = match &a.schedule {
                Some(s) => s.split(',').map(|h| parse_rational(h.trim())).collect::<Result<Vec<_>>>()?,
                None => default_schedule(),
            };
            let grid = ProbeGrid { exponent: a.grid_exponent, max_points: a.max_points };
            let probe = pseudo_derivative_probe(f.as_ref(), &target, &schedule, &grid)?;
            if !a.json {
                let body = String::from("# sup_slope is a certified lower bound for the sup, inf_slope an upper bound for the inf\n")
                    + &probe.to_csv();
                return Ok(Outcome { body, passed: true, code: None });
            }
            let v = json!({
                "note": "sup_slope_lower_bound and inf_slope_upper_bound are one-sided finite-sample bounds",
                "records": probe.records.iter().map(|r| json!({
                    "h": rd.q(&r.h),
                    "sup_slope_lower_bound": r.sup_slope().map(|q| rd.q(q)),
                    "inf_slope_upper_bound": r.inf_slope().map(|q| rd.q(q)),
                    "n_pairs": r.n_pairs,
                })).collect::<Vec<_>>(),
            });
            Ok(Outcome::json(v, true))
        }
        Command::Jordan(a) => {
            let f = read_json::<FunctionDesc>(&a.function)?.build()?;
            let j = jordan_decompose(f.as_ref(), &uniform_grid(a.grid))?;
            let pts = |p: &PiecewiseLinear| p.breakpoints().map(|(x, y)| [x.to_string(), y.to_string()]).collect::<Vec<_>>();
            let v = json!({
                "variation": rd.q(&j.variation),
                "f0": pts(&j.f0),
                "f1": pts(&j.f1),
            });
            Ok(Outcome::json(v, true))
        }
    }
}

fn run_linterval(a: &LintervalArgs, rd: Render) -> Result<Outcome> {
    let alpha = q_arg(&a.alpha)?;
    if let Some(depth) = a.exhaustive {
        let r = exhaustive_check(&alpha, depth)?;
        let fails = |v: &[(Rational, Rational, String)]| {
            v.iter().take(32).map(|(x, y, why)| json!({"x": rd.q(x), "y": rd.q(y), "reason": why})).collect::<Vec<_>>()
        };
        let v = json!({
            "alpha": rd.q(&alpha),
            "depth": depth,
            "instances": r.instances,
            "outer_failures": fails(&r.outer_failures),
            "inner_failures": fails(&r.inner_failures),
            "shifted_branches": r.shifted_branches,
            "protruding": r.protruding,
            "passed": r.passed(),
        });
        return Ok(Outcome::json(v, r.passed()));
    }
    let (x, y) = match (&a.x, &a.y) {
        (Some(x), Some(y)) => (q_arg(x)?, q_arg(y)?),
        _ => return Err(Error::Parse("give --x and --y, or --exhaustive".into())),
    };
    if a.inner {
        let l = inner_lset(&alpha)?;
        let z = a.z.as_deref().map(q_arg).transpose()?;
        let (b, w) = inner_approx(&l, &x, &y, &alpha, z.as_ref())?;
        let problems = w.outer.validate(&crate::linterval::inner_precision(&alpha));
        let v = json!({
            "interval": {"a": rd.q(&b.a()), "b": rd.q(&b.b()), "p": b.p.to_string(), "q": b.q.to_string(), "i": b.i.to_string(), "n": b.n},
            "u": rd.q(&w.u),
            "v": rd.q(&w.v),
            "outer": serde_json::to_value(&w.outer).expect("witness renders"),
            "contains_z": w.contains_z,
            "problems": problems,
        });
        return Ok(Outcome::json(v, problems.is_empty()));
    }
    let l = build_l(&alpha)?;
    let (_, w) = outer_approx(&l, &x, &y)?;
    let problems = w.validate(&alpha);
    let mut v = serde_json::to_value(&w).expect("witness renders");
    v["problems"] = json!(problems);
    Ok(Outcome::json(v, problems.is_empty()))
}

fn run_doob(a: &DoobRunArgs, rd: Render) -> Result<Outcome> {
    let (f, cfg, z) = match (&a.fixture, &a.function) {
        (Some(name), None) if name == "staircase" => {
            let sc = staircase_fixture();
            let z = match &a.z {
                Some(s) => builtin_real(s)?,
                None => sc.z_name(),
            };
            (sc.monotone(), sc.config.clone(), z)
        }
        (Some(other), None) => return Err(Error::UnknownName(other.clone())),
        (None, Some(path)) => {
            let f = read_json::<FunctionDesc>(path)?.build_monotone()?;
            let cfg_path = a.config.as_ref().ok_or_else(|| Error::Parse("--function needs --config".into()))?;
            let cfg = read_json::<DoobConfigDesc>(cfg_path)?.build()?;
            let z = builtin_real(a.z.as_deref().ok_or_else(|| Error::Parse("--function needs --z".into()))?)?;
            (f, cfg, z)
        }
        _ => return Err(Error::Parse("give --fixture staircase or --function with --config".into())),
    };
    let mut tree = init_tree(&f, &cfg)?;
    let budget = StrategyBudget { max_depth: a.max_depth, max_stall: a.max_stall };
    let trace = run_strategy_partial(&mut tree, &z, a.cycles, budget)?;
    let mut body = String::new();
    for e in &trace.entries {
        let line = json!({
            "depth": e.depth,
            "a": rd.q(&e.a),
            "b": rd.q(&e.b),
            "state": e.state,
            "entered": e.entered,
            "gamma": rd.q(&e.gamma),
            "slope_f": rd.q(&e.slope_f),
        });
        body.push_str(&serde_json::to_string(&line).expect("json renders"));
        body.push('\n');
    }
    let cycles = trace.cycles();
    let target = num_traits::pow(cfg.alpha.clone(), a.cycles);
    let growth = trace.growth(a.cycles);
    let growth_ok = growth.as_ref().is_some_and(|g| g >= &target);
    let invariants = tree.check_invariants();
    let passed = trace.completed && growth_ok && trace.cycle_violations().is_empty() && invariants.passed();
    let summary = json!({
        "summary": true,
        "completed": trace.completed,
        "cycles": cycles,
        "k": cfg.k,
        "growth": growth.as_ref().map(|g| rd.q(g)),
        "alpha_pow_cycles": rd.q(&target),
        "cycle_violations": trace.cycle_violations(),
        "invariants_passed": invariants.passed(),
        "nodes": invariants.nodes,
        "passed": passed,
    });
    body.push_str(&serde_json::to_string(&summary).expect("json renders"));
    body.push('\n');
    if !trace.completed {
        eprintln!("error: {}", Error::Stalled { completed: cycles, depth: trace.entries.last().map_or(0, |e| e.depth) });
        return Ok(Outcome { body, passed: false, code: Some(EXIT_BUDGET) });
    }
    Ok(Outcome { body, passed, code: None })
}

fn run_sawtooth(cmd: &SawtoothCmd, rd: Render) -> Result<Outcome> {
    match cmd {
        SawtoothCmd::Build(src) => {
            let f = refine(&load_cover(src)?)?;
            let r = f.check_invariants();
            let v = json!({
                "levels": level_summary(&f, rd),
                "truncation_slack": rd.q(&f.truncation_slack()),
                "invariants": format!("{r:?}"),
                "passed": r.passed(),
            });
            Ok(Outcome::json(v, r.passed()))
        }
        SawtoothCmd::Eval { source, x, level } => {
            let f = refine(&load_cover(source)?)?;
            let x = q_arg(x)?;
            let mut v = json!({"x": rd.q(&x), "value": rd.q(&f.exact(&x))});
            if let Some(m) = level {
                v["approx"] = json!({"level": m, "value": rd.q(&f.f_eval(&x, *m)), "error_bound": rd.q(&pow2(-(*m as i64)))});
            }
            Ok(Outcome::json(v, true))
        }
        SawtoothCmd::Probe { source, z, level, modulus_pairs, seed } => {
            let f = refine(&load_cover(source)?)?;
            let w = nondiff_witness(&f, &builtin_real(z)?, *level)?;
            let mut v = json!({
                "level": w.m,
                "chunk": {"a": rd.q(&w.a), "b": rd.q(&w.b)},
                "half": w.half,
                "h": rd.q(&w.h),
                "z_approx": rd.q(&w.z_approx),
                "slope": rd.q(&w.slope),
                "bound": rd.q(&w.bound),
                "truncation_slack": rd.q(&w.truncation_slack),
                "displacement_slack": rd.q(&w.displacement_slack),
                "passed": w.passed(),
            });
            let mut passed = w.passed();
            if *modulus_pairs > 0 {
                let m = modulus_probe(&f, *level, *modulus_pairs, *seed);
                passed &= m.violations.is_empty();
                v["modulus"] = json!({
                    "pairs": m.pairs,
                    "max_diff": rd.q(&m.max_diff),
                    "bound": rd.q(&pow2(2 - *level as i64)),
                    "violations": m.violations.len(),
                });
            }
            Ok(Outcome::json(v, passed))
        }
        SawtoothCmd::Variation(src) => {
            let f = refine(&load_cover(src)?)?;
            let var = density_and_variation(&f)?;
            let v = json!({
                "per_level": rd.qs(&var.per_level),
                "total": rd.q(&var.total),
                "within_bounds": var.within_bounds(),
            });
            Ok(Outcome::json(v, var.within_bounds()))
        }
    }
}

/// Exit status for a module error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BudgetExceeded { .. } | Error::SplitBudgetExceeded { .. } | Error::DepthExceeded { .. } | Error::Stalled { .. } => {
            EXIT_BUDGET
        }
        Error::NestingViolated { .. } | Error::MeasureTooLarge { .. } | Error::LipschitzViolated { .. } => EXIT_VIOLATION,
        _ => EXIT_USAGE,
    }
}

/// Parses arguments, runs, writes the artifact and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    }
    match run(&cli) {
        Ok(out) => {
            let written = match &cli.output {
                Some(path) => std::fs::write(path, &out.body).map_err(|e| e.to_string()),
                None => {
                    print!("{}", out.body);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
            if let Some(code) = out.code {
                code
            } else if out.passed {
                EXIT_PASS
            } else {
                EXIT_VIOLATION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, rat};

    #[test]
    fn champernowne_prefix() {
        assert_eq!(digits_str(&champernowne2_bits(10)), "0110111001");
        let x = builtin_real("champernowne2").unwrap();
        assert_eq!(x.approx(4), rat(6, 16));
        assert!(x.check_steps(40).is_none());
    }

    #[test]
    fn builtin_reals() {
        let t = builtin_real("third").unwrap();
        assert_eq!(t.approx(4), rat(5, 16));
        assert!((t.approx(4) - rat(1, 3)) <= pow2(-4));
        let s = builtin_real("sqrt2half").unwrap();
        let a = s.approx(30);
        assert!(&a * &a <= rat(1, 2) && (&a + pow2(-30)) * (&a + pow2(-30)) > rat(1, 2));
        assert_eq!(builtin_real("1/5").unwrap().approx(3), rat(1, 5));
        assert!(matches!(builtin_real("pi"), Err(Error::UnknownName(_))));
    }

    #[test]
    fn descriptor_errors_carry_location() {
        let bad = r#"{"kind":"predictor","pattern":{"type":"constant","digit":1},"fraction":"1/0"}"#;
        let e = parse_json::<MartingaleDesc>(bad).unwrap_err();
        assert!(e.to_string().contains("at /fraction"), "{e}");
        let nested = r#"{"kind":"savings","of":{"kind":"constant","value":"x"}}"#;
        let e = parse_json::<MartingaleDesc>(nested).unwrap_err();
        assert!(e.to_string().contains("at /of/value"), "{e}");
    }

    #[test]
    fn descriptors_build() {
        let d = parse_json::<MartingaleDesc>(r#"{"kind":"normalize","of":{"kind":"doubler","digit":1}}"#).unwrap();
        let m = d.build().unwrap();
        assert_eq!(m.eval(&[], 0).unwrap(), rat(2, 3));
        let f = parse_json::<FunctionDesc>(r#"{"kind":"sum","terms":[{"weight":"1/2","function":{"kind":"identity"}}],"offset":"1"}"#)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(f.value(&rat(1, 2), 0).unwrap(), rat(5, 4));
        let t = parse_json::<MartingaleDesc>(r#"{"kind":"table","levels":[["1"],["1/2","3/2"]]}"#).unwrap();
        assert!(t.build().is_ok());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::BudgetExceeded { needed: 2, limit: 1 }), EXIT_BUDGET);
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::NestingViolated { level: 1, a: int(0), b: int(1) }), EXIT_VIOLATION);
    }
}
