//! Two-state betting strategy on a tree of rational intervals and the
//! nondecreasing function `g` whose slopes are its capital.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{ceil, floor, int, pow2, rat, CauchyName, Rational};
use crate::function::{MonotoneRationalFunction, PiecewiseLinear, RationalFn};

/// Thresholds, growth factor, test precision and the two interval families.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobConfig {
    pub beta_t: Rational,
    pub gamma_t: Rational,
    pub alpha: Rational,
    pub beta: Rational,
    pub gamma: Rational,
    pub k: u32,
    /// Betting family `(p, q)`.
    pub p: Rational,
    pub q: Rational,
    /// Non-betting family `(r, s)`.
    pub r: Rational,
    pub s: Rational,
}

/// Largest `K` tried when searching for the test precision.
pub const MAX_K: u32 = 128;

fn k_ok(beta_t: &Rational, gamma_t: &Rational, alpha: &Rational, beta: &Rational, gamma: &Rational, k: u32) -> bool {
    let e = pow2(-(k as i64));
    (gamma - &e) / (beta + &e) >= *alpha && gamma + &e < gamma_t / alpha && beta - &e > beta_t * alpha
}

impl DoobConfig {
    /// Validates the threshold chain; `k = None` picks the smallest valid `K`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta_t: Rational,
        gamma_t: Rational,
        alpha: Rational,
        beta: Rational,
        gamma: Rational,
        k: Option<u32>,
        (p, q): (Rational, Rational),
        (r, s): (Rational, Rational),
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if beta_t >= gamma_t {
            return bad("need beta~ < gamma~");
        }
        if !(alpha > Rational::one() && alpha < rat(4, 3)) {
            return bad("need 1 < alpha < 4/3");
        }
        if &alpha * &alpha * &alpha * &beta_t >= gamma_t {
            return bad("need alpha^3 beta~ < gamma~");
        }
        let chain = [&beta_t * &alpha, beta.clone(), &beta * &alpha, gamma.clone(), &gamma * &alpha, gamma_t.clone()];
        if chain.windows(2).any(|w| w[0] >= w[1]) {
            return bad("need beta~ alpha < beta < beta alpha < gamma < gamma alpha < gamma~");
        }
        if !p.is_positive() || !r.is_positive() {
            return bad("family scalings must be positive");
        }
        let k = match k {
            Some(k) if k_ok(&beta_t, &gamma_t, &alpha, &beta, &gamma, k) => k,
            Some(k) => return Err(Error::InvalidConfig(format!("K = {k} does not satisfy the precision conditions"))),
            None => (0..=MAX_K)
                .find(|&k| k_ok(&beta_t, &gamma_t, &alpha, &beta, &gamma, k))
                .ok_or_else(|| Error::InvalidConfig("no K up to 128 satisfies the precision conditions".into()))?,
        };
        Ok(DoobConfig { beta_t, gamma_t, alpha, beta, gamma, k, p, q, r, s })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Betting,
    NonBetting,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            State::Betting => "betting",
            State::NonBetting => "non-betting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    /// Disjoint intervals of the family of the state just entered.
    Fresh,
    Halving,
}

/// Uncovered end of a fresh split, refined on demand.
#[derive(Debug, Clone, PartialEq)]
struct Gap {
    left_side: bool,
    /// Uncovered `[lo, hi]` in family coordinates `t = (x - shift)/scale`.
    lo: Rational,
    hi: Rational,
    next_n: u32,
    scale: Rational,
    shift: Rational,
    halve_above: Option<Rational>,
}

impl Gap {
    fn x_interval(&self) -> (Rational, Rational) {
        (&self.lo * &self.scale + &self.shift, &self.hi * &self.scale + &self.shift)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub a: Rational,
    pub b: Rational,
    pub state: State,
    /// Whether the strategy entered `state` at this node.
    pub entered: bool,
    pub gamma: Rational,
    pub fa: Rational,
    pub fb: Rational,
    pub parent: Option<usize>,
    pub depth: usize,
    pub children: Vec<usize>,
    pub split: Option<SplitKind>,
    gaps: Vec<Gap>,
}

impl Node {
    pub fn length(&self) -> Rational {
        &self.b - &self.a
    }

    pub fn slope_f(&self) -> Rational {
        (&self.fb - &self.fa) / self.length()
    }

    /// Uncovered parts of a fresh split.
    pub fn gaps(&self) -> Vec<(Rational, Rational)> {
        self.gaps.iter().map(Gap::x_interval).collect()
    }
}

/// Default per-split piece limit.
pub const DEFAULT_MAX_CHILDREN: usize = 4096;

pub struct DoobTree {
    f: MonotoneRationalFunction,
    cfg: DoobConfig,
    nodes: Vec<Node>,
    g: BTreeMap<Rational, Rational>,
    cutoff: Rational,
    max_children: usize,
}

/// Root `[0, 1]` with `g(0) = 0`, `g(1) = 1`, betting state and `Γ = 1`.
///
/// A function not flagged strictly increasing is replaced by `x ↦ f(x) + x`.
pub fn init_tree(f: &MonotoneRationalFunction, cfg: &DoobConfig) -> Result<DoobTree> {
    if !f.is_exact() {
        return Err(Error::NotExact);
    }
    let f = if f.is_strictly_increasing() { f.clone() } else { f.plus_identity() };
    let (zero, one) = (Rational::zero(), Rational::one());
    let fa = f.value(&zero, 0)?;
    let fb = f.value(&one, 0)?;
    if fb <= fa {
        return Err(Error::PreconditionViolated("f(1) must exceed f(0)".into()));
    }
    let mut tree = DoobTree {
        f,
        cfg: cfg.clone(),
        nodes: vec![],
        g: BTreeMap::from([(zero.clone(), zero.clone()), (one.clone(), one.clone())]),
        cutoff: pow2(-24),
        max_children: DEFAULT_MAX_CHILDREN,
    };
    let (state, _) = tree.resolve(State::Betting, &((&fb - &fa) / int(1)));
    tree.nodes.push(Node {
        a: zero,
        b: one,
        state,
        entered: true,
        gamma: Rational::one(),
        fa,
        fb,
        parent: None,
        depth: 0,
        children: vec![],
        split: None,
        gaps: vec![],
    });
    Ok(tree)
}

/// Whether `[a, b]` is the image of a basic dyadic interval under `t ↦ p·t + q`.
pub fn is_family_interval(a: &Rational, b: &Rational, p: &Rational, q: &Rational) -> bool {
    let ta = (a - q) / p;
    let len = (b - a) / p;
    if !len.is_positive() || len > Rational::one() || !len.numer().is_one() {
        return false;
    }
    let d = len.denom();
    d.magnitude().count_ones() == 1 && (&ta * Rational::from_integer(d.clone())).is_integer()
}

impl DoobTree {
    pub fn with_cutoff(mut self, cutoff: Rational) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_max_children(mut self, n: usize) -> Self {
        self.max_children = n;
        self
    }

    pub fn config(&self) -> &DoobConfig {
        &self.cfg
    }

    pub fn function(&self) -> &MonotoneRationalFunction {
        &self.f
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        0
    }

    /// `S_f(A)_K`; exact slopes make this the slope itself.
    fn slope_k(&self, s: &Rational) -> Rational {
        s.clone()
    }

    /// State after the tests at a node entered with `incoming`.
    fn resolve(&self, incoming: State, slope: &Rational) -> (State, bool) {
        let s = self.slope_k(slope);
        match incoming {
            State::Betting if s > self.cfg.gamma => (State::NonBetting, true),
            State::NonBetting if s < self.cfg.beta => (State::Betting, true),
            other => (other, false),
        }
    }

    fn family(&self, state: State) -> (Rational, Rational) {
        match state {
            State::Betting => (self.cfg.p.clone(), self.cfg.q.clone()),
            State::NonBetting => (self.cfg.r.clone(), self.cfg.s.clone()),
        }
    }

    /// `g` at a materialized endpoint.
    pub fn g_eval(&self, v: &Rational) -> Result<Rational> {
        self.g.get(v).cloned().ok_or_else(|| Error::DomainGap(v.clone()))
    }

    pub fn endpoints(&self) -> &BTreeMap<Rational, Rational> {
        &self.g
    }

    /// Materializes the children of `id`; `focus` forces refinement until no
    /// gap meets it.
    pub fn expand(&mut self, id: usize, focus: Option<(&Rational, &Rational)>) -> Result<&[usize]> {
        if self.nodes[id].split.is_none() {
            let node = &self.nodes[id];
            let pieces: Vec<(Rational, Rational)>;
            let kind;
            if node.entered {
                let (scale, shift) = self.family(node.state);
                let halve_above = (node.state == State::NonBetting).then(|| node.length() / int(2));
                let (ps, gaps) = self.decompose(&node.a, &node.b, &scale, &shift, halve_above, focus)?;
                pieces = ps;
                self.nodes[id].gaps = gaps;
                kind = SplitKind::Fresh;
            } else {
                let mid = (&node.a + &node.b) / int(2);
                pieces = vec![(node.a.clone(), mid.clone()), (mid, node.b.clone())];
                kind = SplitKind::Halving;
            }
            self.nodes[id].split = Some(kind);
            self.attach(id, pieces)?;
        } else if let Some(fc) = focus {
            self.refine_gaps(id, fc)?;
        }
        Ok(&self.nodes[id].children)
    }

    fn refine_gaps(&mut self, id: usize, focus: (&Rational, &Rational)) -> Result<()> {
        let mut gaps = std::mem::take(&mut self.nodes[id].gaps);
        let mut pieces = vec![];
        for gap in gaps.iter_mut() {
            pieces.extend(self.grow_gap(gap, Some(focus))?);
        }
        gaps.retain(|g| g.lo < g.hi);
        self.nodes[id].gaps = gaps;
        if !pieces.is_empty() {
            self.attach(id, pieces)?;
        }
        Ok(())
    }

    /// Greedy decomposition of `[a, b]` into maximal basic dyadic intervals in
    /// family coordinates.
    fn decompose(
        &self,
        a: &Rational,
        b: &Rational,
        scale: &Rational,
        shift: &Rational,
        halve_above: Option<Rational>,
        focus: Option<(&Rational, &Rational)>,
    ) -> Result<(Vec<(Rational, Rational)>, Vec<Gap>)> {
        let ta = (a - shift) / scale;
        let tb = (b - shift) / scale;
        let two = int(2);
        let mut n = 0u32;
        let (c, d) = loop {
            let w = Rational::from_integer(num_bigint::BigInt::one() << n as usize);
            let c = ceil(&(&ta * &w));
            let d = floor(&(&tb * &w));
            if c < d {
                break (c, d);
            }
            n += 1;
            if n > 4096 {
                return Err(Error::SplitBudgetExceeded { a: a.clone(), b: b.clone() });
            }
        };
        let step = pow2(-(n as i64));
        let mut out = vec![];
        let mut j = c.clone();
        while j < d {
            let lo = Rational::from_integer(j.clone()) * &step;
            out.push((&lo * scale + shift, (&lo + &step) * scale + shift));
            j += 1;
        }
        let left_end = Rational::from_integer(c) * &step;
        let right_end = Rational::from_integer(d) * &step;
        let mut gaps = vec![
            Gap { left_side: true, lo: ta, hi: left_end, next_n: n + 1, scale: scale.clone(), shift: shift.clone(), halve_above: halve_above.clone() },
            Gap { left_side: false, lo: right_end, hi: tb, next_n: n + 1, scale: scale.clone(), shift: shift.clone(), halve_above: halve_above.clone() },
        ];
        for gap in gaps.iter_mut() {
            out.extend(self.grow_gap(gap, focus)?);
        }
        gaps.retain(|g| g.lo < g.hi);
        let mut pieces = vec![];
        for (lo, hi) in out {
            split_long(lo, hi, halve_above.as_ref(), &two, &mut pieces);
        }
        if pieces.len() > self.max_children {
            return Err(Error::SplitBudgetExceeded { a: a.clone(), b: b.clone() });
        }
        Ok((pieces, gaps))
    }

    /// Extends a gap's greedy sequence until its pieces drop below the cutoff
    /// and, if given, the gap no longer meets `focus`.
    fn grow_gap(&self, gap: &mut Gap, focus: Option<(&Rational, &Rational)>) -> Result<Vec<(Rational, Rational)>> {
        let mut out = vec![];
        let two = int(2);
        loop {
            if gap.lo >= gap.hi {
                break;
            }
            let (xlo, xhi) = gap.x_interval();
            let meets = focus.is_some_and(|(flo, fhi)| flo <= &xhi && &xlo <= fhi);
            let len = pow2(-(gap.next_n as i64));
            if !meets && &len * &gap.scale < self.cutoff {
                break;
            }
            if gap.next_n > 8192 || out.len() > self.max_children {
                return Err(Error::SplitBudgetExceeded { a: xlo, b: xhi });
            }
            if gap.hi.clone() - &gap.lo >= len {
                let (lo, hi) = if gap.left_side {
                    let lo = &gap.hi - &len;
                    let hi = gap.hi.clone();
                    gap.hi = lo.clone();
                    (lo, hi)
                } else {
                    let hi = &gap.lo + &len;
                    let lo = gap.lo.clone();
                    gap.lo = hi.clone();
                    (lo, hi)
                };
                let x = (&lo * &gap.scale + &gap.shift, &hi * &gap.scale + &gap.shift);
                split_long(x.0, x.1, gap.halve_above.as_ref(), &two, &mut out);
            }
            gap.next_n += 1;
        }
        Ok(out)
    }

    fn attach(&mut self, id: usize, pieces: Vec<(Rational, Rational)>) -> Result<()> {
        let parent = self.nodes[id].clone();
        let gb_ga = self.g_eval(&parent.b)? - self.g_eval(&parent.a)?;
        let fb_fa = &parent.fb - &parent.fa;
        let width = parent.length();
        let s_parent = parent.slope_f();
        let mut ids = vec![];
        for (c, d) in pieces {
            let fc = self.f.value(&c, 0)?;
            let fd = self.f.value(&d, 0)?;
            let ga = self.g_eval(&parent.a)?;
            for (v, fv) in [(&c, &fc), (&d, &fd)] {
                if !self.g.contains_key(v) {
                    let gv = match parent.state {
                        State::Betting => &ga + &gb_ga * (fv - &parent.fa) / &fb_fa,
                        State::NonBetting => &ga + &gb_ga * (v - &parent.a) / &width,
                    };
                    self.g.insert(v.clone(), gv);
                }
            }
            let s_child = (&fd - &fc) / (&d - &c);
            let gamma = match parent.state {
                State::Betting => &parent.gamma * &s_child / &s_parent,
                State::NonBetting => parent.gamma.clone(),
            };
            let (state, entered) = self.resolve(parent.state, &s_child);
            ids.push(self.nodes.len());
            self.nodes.push(Node {
                a: c,
                b: d,
                state,
                entered,
                gamma,
                fa: fc,
                fb: fd,
                parent: Some(id),
                depth: parent.depth + 1,
                children: vec![],
                split: None,
                gaps: vec![],
            });
        }
        let mut children = std::mem::take(&mut self.nodes[id].children);
        children.extend(ids);
        children.sort_by(|&x, &y| self.nodes[x].a.cmp(&self.nodes[y].a));
        self.nodes[id].children = children;
        Ok(())
    }

    /// Child of `id` whose interior holds `[lo, hi]`, materializing as needed.
    pub fn child_containing(&mut self, id: usize, lo: &Rational, hi: &Rational) -> Result<Option<usize>> {
        let kids = self.expand(id, Some((lo, hi)))?.to_vec();
        Ok(kids.into_iter().find(|&c| &self.nodes[c].a < lo && hi < &self.nodes[c].b))
    }

    /// Descends along `x` until the `g`-increment of the bracketing interval is at most `2^-p`.
    pub fn g_extend(&mut self, x: &CauchyName, p: u32, max_depth: usize) -> Result<(Rational, usize)> {
        let target = pow2(-(p as i64));
        let mut cur = self.root();
        loop {
            let node = &self.nodes[cur];
            let inc = self.g_eval(&node.b)? - self.g_eval(&node.a)?;
            if inc <= target {
                return Ok((self.g_eval(&node.a)?, node.depth));
            }
            if node.depth >= max_depth {
                return Err(Error::DepthExceeded { achieved: inc });
            }
            cur = self.locate_child(cur, x)?;
        }
    }

    fn locate_child(&mut self, id: usize, x: &CauchyName) -> Result<usize> {
        let len = self.nodes[id].length();
        let mut prec = 64u32.max((len.denom().bits() - len.numer().bits()) as u32 + 32);
        loop {
            let q = x.approx(prec);
            let e = pow2(-(prec as i64));
            let (lo, hi) = (&q - &e, &q + &e);
            if let Some(c) = self.child_containing(id, &lo, &hi)? {
                return Ok(c);
            }
            if prec >= 8192 {
                return Err(Error::PrecisionUnavailable(format!(
                    "cannot place the point inside a child of [{}, {}]",
                    self.nodes[id].a, self.nodes[id].b
                )));
            }
            prec *= 2;
        }
    }

    /// Checks the structural identities on every materialized node.
    pub fn check_invariants(&self) -> TreeReport {
        let mut rep = TreeReport { nodes: self.nodes.len(), ..Default::default() };
        for (id, node) in self.nodes.iter().enumerate() {
            let (ga, gb) = (&self.g[&node.a], &self.g[&node.b]);
            if &node.gamma * node.length() != gb - ga {
                rep.gamma_slope.push(id);
            }
            let Some(kind) = node.split else { continue };
            let kids: Vec<&Node> = node.children.iter().map(|&c| &self.nodes[c]).collect();
            for w in kids.windows(2) {
                if w[0].b > w[1].a {
                    rep.overlapping.push(id);
                }
            }
            if kids.first().is_some_and(|k| k.a < node.a) || kids.last().is_some_and(|k| k.b > node.b) {
                rep.overlapping.push(id);
            }
            let (scale, shift) = self.family(node.state);
            for k in &kids {
                match node.state {
                    State::Betting => {
                        if &k.gamma * node.slope_f() != &node.gamma * k.slope_f() {
                            rep.proportional.push(id);
                        }
                    }
                    State::NonBetting => {
                        if k.gamma != node.gamma {
                            rep.proportional.push(id);
                        }
                        if k.length() * int(2) > node.length() {
                            rep.halving.push(id);
                        }
                    }
                }
                if kind == SplitKind::Fresh && !is_family_interval(&k.a, &k.b, &scale, &shift) && node.state == State::Betting {
                    rep.family.push(id);
                }
            }
        }
        let vals: Vec<&Rational> = self.g.values().collect();
        rep.monotone = vals.windows(2).all(|w| w[0] <= w[1]);
        rep
    }
}

fn split_long(lo: Rational, hi: Rational, above: Option<&Rational>, two: &Rational, out: &mut Vec<(Rational, Rational)>) {
    match above {
        Some(limit) if &(&hi - &lo) > limit => {
            let mid = (&lo + &hi) / two;
            split_long(lo, mid.clone(), above, two, out);
            split_long(mid, hi, above, two, out);
        }
        _ => out.push((lo, hi)),
    }
}

/// Node ids failing each structural check.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeReport {
    pub nodes: usize,
    pub gamma_slope: Vec<usize>,
    pub proportional: Vec<usize>,
    pub halving: Vec<usize>,
    pub family: Vec<usize>,
    pub overlapping: Vec<usize>,
    pub monotone: bool,
}

impl TreeReport {
    pub fn passed(&self) -> bool {
        self.monotone
            && self.gamma_slope.is_empty()
            && self.proportional.is_empty()
            && self.halving.is_empty()
            && self.family.is_empty()
            && self.overlapping.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub a: Rational,
    pub b: Rational,
    pub state: State,
    pub entered: bool,
    pub gamma: Rational,
    pub slope_f: Rational,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTrace {
    pub entries: Vec<TraceEntry>,
    pub alpha: Rational,
    pub completed: bool,
}

impl StrategyTrace {
    /// Trace indices where the betting state was entered.
    pub fn betting_entries(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.entered && e.state == State::Betting)
            .map(|(i, _)| i)
            .collect()
    }

    /// Completed betting → non-betting → betting cycles.
    pub fn cycles(&self) -> usize {
        self.betting_entries().len().saturating_sub(1)
    }

    /// `Γ` at the `j`-th betting entry divided by `Γ` at the first.
    pub fn growth(&self, j: usize) -> Option<Rational> {
        let be = self.betting_entries();
        Some(&self.entries[*be.get(j)?].gamma / &self.entries[be[0]].gamma)
    }

    /// Consecutive betting entries `A ⊇ C` with `Γ(C) < αΓ(A)`.
    pub fn cycle_violations(&self) -> Vec<usize> {
        let be = self.betting_entries();
        be.windows(2)
            .filter(|w| self.entries[w[1]].gamma < &self.alpha * &self.entries[w[0]].gamma)
            .map(|w| w[1])
            .collect()
    }
}

/// Expansion limits for [`run_strategy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyBudget {
    pub max_depth: usize,
    /// Levels allowed without a state change.
    pub max_stall: usize,
}

impl Default for StrategyBudget {
    fn default() -> Self {
        StrategyBudget { max_depth: 4000, max_stall: 256 }
    }
}

/// Follows `z` down the tree until `cycles` cycles have completed or the budget
/// runs out; the trace records whether the run completed.
pub fn run_strategy_partial(
    tree: &mut DoobTree,
    z: &CauchyName,
    cycles: usize,
    budget: StrategyBudget,
) -> Result<StrategyTrace> {
    let mut trace = StrategyTrace { entries: vec![], alpha: tree.cfg.alpha.clone(), completed: false };
    let mut cur = tree.root();
    let mut since_change = 0usize;
    loop {
        let n = &tree.nodes[cur];
        trace.entries.push(TraceEntry {
            a: n.a.clone(),
            b: n.b.clone(),
            state: n.state,
            entered: n.entered,
            gamma: n.gamma.clone(),
            slope_f: n.slope_f(),
            depth: n.depth,
        });
        since_change = if n.entered { 0 } else { since_change + 1 };
        if trace.cycles() >= cycles {
            trace.completed = true;
            return Ok(trace);
        }
        if n.depth >= budget.max_depth || since_change >= budget.max_stall {
            return Ok(trace);
        }
        cur = tree.locate_child(cur, z)?;
    }
}

pub fn run_strategy(
    f: &MonotoneRationalFunction,
    cfg: &DoobConfig,
    z: &CauchyName,
    cycles: usize,
    budget: StrategyBudget,
) -> Result<StrategyTrace> {
    let mut tree = init_tree(f, cfg)?;
    let trace = run_strategy_partial(&mut tree, z, cycles, budget)?;
    if !trace.completed {
        return Err(Error::Stalled { completed: trace.cycles(), depth: trace.entries.last().map_or(0, |e| e.depth) });
    }
    Ok(trace)
}

/// Staircase test asset: an exact increasing function around `z = 1/5` whose
/// density alternates between `γ̃ + 1` and `β̃/2` on shells `2^(-3-6j)`.
#[derive(Debug, Clone)]
pub struct Staircase {
    pub function: PiecewiseLinear,
    pub config: DoobConfig,
    pub z: Rational,
    pub radii: Vec<Rational>,
    pub high: Rational,
    pub low: Rational,
}

pub const STAIRCASE_SHELLS: usize = 24;

pub fn staircase_fixture() -> Staircase {
    let config = DoobConfig::new(
        int(1),
        int(8),
        rat(5, 4),
        rat(3, 2),
        int(2),
        None,
        (rat(2, 3), int(0)),
        (int(1), int(0)),
    )
    .expect("fixture config is valid");
    let z = rat(1, 5);
    let high = &config.gamma_t + int(1);
    let low = &config.beta_t / int(2);
    let radii: Vec<Rational> = (0..STAIRCASE_SHELLS).map(|j| pow2(-3 - 6 * j as i64)).collect();
    // shell j is ρ_{j+1} < |x - z| ≤ ρ_j
    let shell_density = |j: usize| if j.is_multiple_of(2) { high.clone() } else { low.clone() };
    let mut cuts = vec![int(0)];
    let mut dens = vec![int(1)];
    for j in 0..STAIRCASE_SHELLS {
        cuts.push(&z - &radii[j]);
        dens.push(shell_density(j));
    }
    cuts.push(&z - &radii[STAIRCASE_SHELLS - 1] / int(64));
    dens.push(int(1));
    for j in (0..STAIRCASE_SHELLS).rev() {
        cuts.push(&z + &radii[j] / int(64));
        dens.push(shell_density(j));
    }
    cuts.push(&z + &radii[0]);
    dens.push(int(1));
    cuts.push(int(1));
    let function = PiecewiseLinear::from_density(&cuts, &dens, int(0)).expect("cuts increase");
    Staircase { function, config, z, radii, high, low }
}

impl Staircase {
    pub fn monotone(&self) -> MonotoneRationalFunction {
        MonotoneRationalFunction::assume(std::sync::Arc::new(self.function.clone())).with_strictly_increasing(true)
    }

    pub fn z_name(&self) -> CauchyName {
        CauchyName::constant(self.z.clone()).with_label("1/5")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::Identity;
    use std::sync::Arc;

    fn identity_cfg() -> DoobConfig {
        staircase_fixture().config
    }

    #[test]
    fn config_validation() {
        let c = identity_cfg();
        assert_eq!(c.k, 5);
        let swapped = DoobConfig::new(int(1), int(8), rat(5, 4), int(2), rat(3, 2), None, (int(1), int(0)), (int(1), int(0)));
        assert!(matches!(swapped, Err(Error::InvalidConfig(_))));
        let low_k = DoobConfig::new(int(1), int(8), rat(5, 4), rat(3, 2), int(2), Some(2), (int(1), int(0)), (int(1), int(0)));
        assert!(low_k.is_err());
        let big_alpha = DoobConfig::new(int(1), int(8), rat(3, 2), rat(3, 2), int(2), None, (int(1), int(0)), (int(1), int(0)));
        assert!(big_alpha.is_err());
    }

    #[test]
    fn identity_keeps_betting() {
        let f = MonotoneRationalFunction::identity();
        let mut tree = init_tree(&f, &identity_cfg()).unwrap();
        assert_eq!(tree.node(0).gamma, int(1));
        let z = CauchyName::constant(rat(1, 5));
        let tr = run_strategy_partial(&mut tree, &z, 1, StrategyBudget { max_depth: 40, max_stall: 30 }).unwrap();
        assert!(!tr.completed);
        assert!(tr.entries.iter().all(|e| e.gamma == int(1) && e.state == State::Betting));
        for (v, g) in tree.endpoints() {
            assert_eq!(v, g);
        }
        assert!(tree.check_invariants().passed());
        let err = run_strategy(&f, &identity_cfg(), &z, 1, StrategyBudget { max_depth: 40, max_stall: 30 });
        assert!(matches!(err, Err(Error::Stalled { completed: 0, .. })));
    }

    #[test]
    fn pretransform_applied() {
        let f = MonotoneRationalFunction::assume(Arc::new(crate::function::Polynomial::square()));
        let mut tree = init_tree(&f, &identity_cfg()).unwrap();
        tree.expand(0, None).unwrap();
        for &c in &tree.node(0).children.clone() {
            assert!(tree.node(c).slope_f() >= int(1));
        }
    }

    #[test]
    fn non_betting_children_interpolate_linearly() {
        let sc = staircase_fixture();
        let mut tree = init_tree(&sc.monotone(), &sc.config).unwrap();
        assert_eq!(tree.node(0).state, State::NonBetting);
        tree.expand(0, None).unwrap();
        for &c in &tree.node(0).children.clone() {
            let n = tree.node(c);
            let sg = (tree.g_eval(&n.b).unwrap() - tree.g_eval(&n.a).unwrap()) / n.length();
            assert_eq!(sg, tree.node(0).gamma);
            assert_eq!(tree.g_eval(&n.a).unwrap(), n.a);
        }
    }

    #[test]
    fn family_intervals() {
        assert!(is_family_interval(&rat(1, 3), &rat(2, 3), &rat(2, 3), &int(0)));
        assert!(!is_family_interval(&rat(1, 3), &rat(1, 2), &int(1), &int(0)));
        assert!(is_family_interval(&rat(1, 4), &rat(1, 2), &int(1), &int(0)));
    }

    #[test]
    fn staircase_cycles_and_invariants() {
        let sc = staircase_fixture();
        let mut tree = init_tree(&sc.monotone(), &sc.config).unwrap().with_cutoff(pow2(-12));
        let tr = run_strategy_partial(&mut tree, &sc.z_name(), 3, StrategyBudget::default()).unwrap();
        assert!(tr.completed);
        assert!(tr.cycle_violations().is_empty());
        let g3 = tr.growth(3).unwrap();
        assert!(g3 >= num_traits::pow(sc.config.alpha.clone(), 3));
        let rep = tree.check_invariants();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn g_extend_identity() {
        let f = MonotoneRationalFunction::identity();
        let mut tree = init_tree(&f, &identity_cfg()).unwrap();
        let (v, depth) = tree.g_extend(&CauchyName::constant(rat(1, 5)), 6, 64).unwrap();
        assert!((v - rat(1, 5)).abs() <= pow2(-6));
        assert!(depth >= 6);
        let err = tree.g_extend(&CauchyName::constant(rat(1, 5)), 30, 8);
        assert!(matches!(err, Err(Error::DepthExceeded { .. })));
        let _ = Identity;
    }
}
