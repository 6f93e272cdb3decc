//! Finite-stage semantics for c.e. sets, c.e. pair relations and
//! limit-approximated sets.
//!
//! Every oracle is a pure function of the stage: an element (or pair) has a
//! fixed arrival stage and `snapshot(s)` is the union of all arrivals up to
//! `s`. Monotonicity therefore holds by construction; [`check_monotone`]
//! re-verifies it from snapshots.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::structures::{Class, EqStructure};

type ArrivalFn = Arc<dyn Fn(u64) -> Vec<u64> + Send + Sync>;
type PairArrivalFn = Arc<dyn Fn(u64) -> Vec<(u64, u64)> + Send + Sync>;
type ApproxFn = Arc<dyn Fn(u64, u64) -> bool + Send + Sync>;

/// Named generators for c.e. sets. Arrival conventions: `Identity` enumerates
/// `x` at stage `x + 1`, so `snapshot(5) = {0,…,4}` and `snapshot(0) = ∅`.
#[derive(Clone)]
pub enum SetGenerator {
    Identity,
    Evens,
    Squares,
    Multiples(u64),
    /// Identity shifted `k` stages later.
    Delayed(u64),
    /// ω, with each block `[4^j, 2·4^j)` arriving at once at stage `2·4^j` and
    /// every other `x` arriving late, at stage `2x + 1`.
    BlockBursty,
    /// ω in consecutive blocks of the given width, each block in reverse order.
    Scrambled(u64),
    /// One listed element per stage, starting at stage 1.
    Listed(Arc<Vec<u64>>),
    /// Explicit arrivals: entry `s` lists the elements enumerated at stage `s`.
    Table(Arc<Vec<Vec<u64>>>),
    Custom(ArrivalFn),
}

impl fmt::Debug for SetGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Evens => write!(f, "evens"),
            Self::Squares => write!(f, "squares"),
            Self::Multiples(m) => write!(f, "multiples({m})"),
            Self::Delayed(k) => write!(f, "delayed({k})"),
            Self::BlockBursty => write!(f, "block-bursty"),
            Self::Scrambled(b) => write!(f, "scrambled({b})"),
            Self::Listed(v) => write!(f, "listed[{}]", v.len()),
            Self::Table(t) => write!(f, "table[{}]", t.len()),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

fn is_bursty_prompt(x: u64) -> Option<u64> {
    // x in [4^j, 2·4^j) -> Some(2·4^j)
    let mut lo = 1u64;
    while lo <= x {
        if x < 2 * lo {
            return Some(2 * lo);
        }
        lo = lo.checked_mul(4)?;
    }
    None
}

impl SetGenerator {
    pub fn arrivals(&self, stage: u64) -> Vec<u64> {
        match self {
            Self::Identity => stage.checked_sub(1).into_iter().collect(),
            Self::Evens => stage.checked_sub(1).map(|i| 2 * i).into_iter().collect(),
            Self::Squares => stage.checked_sub(1).map(|i| i * i).into_iter().collect(),
            Self::Multiples(m) => stage.checked_sub(1).map(|i| m * i).into_iter().collect(),
            Self::Delayed(k) => stage.checked_sub(k + 1).into_iter().collect(),
            Self::BlockBursty => {
                let mut out = Vec::new();
                // a whole prompt block lands at stage 2·4^j
                let mut lo = 1u64;
                while 2 * lo <= stage {
                    if 2 * lo == stage {
                        out.extend(lo..2 * lo);
                    }
                    match lo.checked_mul(4) {
                        Some(n) => lo = n,
                        None => break,
                    }
                }
                if stage % 2 == 1 {
                    let x = (stage - 1) / 2;
                    if is_bursty_prompt(x).is_none() {
                        out.push(x);
                    }
                }
                out.sort_unstable();
                out
            }
            Self::Scrambled(b) => match stage.checked_sub(1) {
                Some(i) => {
                    let (k, r) = (i / b, i % b);
                    vec![b * k + (b - 1 - r)]
                }
                None => Vec::new(),
            },
            Self::Listed(v) => stage
                .checked_sub(1)
                .and_then(|i| v.get(i as usize).copied())
                .into_iter()
                .collect(),
            Self::Table(t) => t.get(stage as usize).cloned().unwrap_or_default(),
            Self::Custom(f) => f(stage),
        }
    }
}

/// A stage-indexed, monotone enumeration of a c.e. set.
#[derive(Debug, Clone)]
pub struct EnumerationOracle {
    generator: SetGenerator,
    budget: u64,
    label: String,
}

impl EnumerationOracle {
    pub fn new(label: impl Into<String>, generator: SetGenerator, budget: u64) -> Self {
        Self { generator, budget, label: label.into() }
    }

    pub fn identity(budget: u64) -> Self {
        Self::new("identity", SetGenerator::Identity, budget)
    }

    pub fn custom(label: impl Into<String>, budget: u64, f: impl Fn(u64) -> Vec<u64> + Send + Sync + 'static) -> Self {
        Self::new(label, SetGenerator::Custom(Arc::new(f)), budget)
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn generator(&self) -> &SetGenerator {
        &self.generator
    }

    pub fn with_budget(&self, budget: u64) -> Self {
        Self { budget, ..self.clone() }
    }

    /// Elements arriving at exactly `stage` (no budget check).
    pub fn arrivals(&self, stage: u64) -> Vec<u64> {
        self.generator.arrivals(stage)
    }

    /// `enumerate(stage)`.
    pub fn snapshot(&self, stage: u64) -> Result<BTreeSet<u64>> {
        if stage > self.budget {
            return Err(Error::BudgetExceeded { stage, budget: self.budget });
        }
        Ok((0..=stage).flat_map(|s| self.arrivals(s)).collect())
    }

    /// First-arrival stage of every element enumerated by `upto` (clamped to
    /// the budget).
    pub fn arrival_index(&self, upto: u64) -> ArrivalIndex {
        let upto = upto.min(self.budget);
        let mut first = HashMap::new();
        let mut order = Vec::new();
        for s in 0..=upto {
            let mut batch = self.arrivals(s);
            batch.sort_unstable();
            batch.dedup();
            for x in batch {
                if let std::collections::hash_map::Entry::Vacant(e) = first.entry(x) {
                    e.insert(s);
                    order.push((s, x));
                }
            }
        }
        ArrivalIndex { first, order, upto }
    }
}

/// Cached arrival stages of an oracle up to a fixed stage.
#[derive(Debug, Clone)]
pub struct ArrivalIndex {
    first: HashMap<u64, u64>,
    order: Vec<(u64, u64)>,
    upto: u64,
}

impl ArrivalIndex {
    pub fn upto(&self) -> u64 {
        self.upto
    }

    /// Stage at which `x` first appears, if within the indexed range.
    pub fn arrival(&self, x: u64) -> Option<u64> {
        self.first.get(&x).copied()
    }

    /// `x ∈ A_s`.
    pub fn member_at(&self, x: u64, stage: u64) -> bool {
        self.arrival(x).is_some_and(|t| t <= stage)
    }

    /// `(stage, element)` in enumeration order; within a stage by value.
    pub fn order(&self) -> &[(u64, u64)] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Named generators for c.e. pair relations.
#[derive(Clone)]
pub enum PairGenerator {
    /// Entry `s` lists the pairs enumerated at stage `s`.
    Table(Arc<Vec<Vec<(u64, u64)>>>),
    /// At stage `x + 1`, link `x` to the least member of its class (or to the
    /// previous member of a declared-infinite class).
    Prompt(EqStructure),
    /// Like `Prompt`, with elements visited in reverse order inside blocks of
    /// the given width.
    Scrambled(EqStructure, u64),
    /// Like `Prompt`, with element `x` linked at stage `delay(x) + x + 1`.
    Lagged(EqStructure, Arc<dyn Fn(u64) -> u64 + Send + Sync>),
    Custom(PairArrivalFn),
}

impl fmt::Debug for PairGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Table(t) => write!(f, "table[{}]", t.len()),
            Self::Prompt(s) => write!(f, "prompt({})", s.provenance()),
            Self::Scrambled(s, b) => write!(f, "scrambled({}, {b})", s.provenance()),
            Self::Lagged(s, _) => write!(f, "lagged({})", s.provenance()),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

/// The pair linking `x` to an earlier member of its class, if any.
fn link_pair(s: &EqStructure, x: u64) -> Option<(u64, u64)> {
    match s.class_of(x) {
        Class::Finite(members) => {
            let m = members[0];
            (m != x).then_some((x, m))
        }
        Class::Infinite { id } => (0..x)
            .rev()
            .find(|&y| matches!(s.class_of(y), Class::Infinite { id: other } if other == id))
            .map(|y| (x, y)),
        Class::Unknown => None,
    }
}

impl PairGenerator {
    pub fn arrivals(&self, stage: u64) -> Vec<(u64, u64)> {
        match self {
            Self::Table(t) => t.get(stage as usize).cloned().unwrap_or_default(),
            Self::Prompt(s) => stage.checked_sub(1).and_then(|x| link_pair(s, x)).into_iter().collect(),
            Self::Scrambled(s, b) => match stage.checked_sub(1) {
                Some(i) => {
                    let (k, r) = (i / b, i % b);
                    link_pair(s, b * k + (b - 1 - r)).into_iter().collect()
                }
                None => Vec::new(),
            },
            Self::Lagged(s, delay) => {
                // x arrives at delay(x) + x + 1; delay must be nondecreasing
                // in x so the scan below terminates.
                let mut out = Vec::new();
                let mut x = 0u64;
                while x < stage {
                    let t = delay(x) + x + 1;
                    if t == stage {
                        out.extend(link_pair(s, x));
                    } else if t > stage {
                        break;
                    }
                    x += 1;
                }
                out
            }
            Self::Custom(f) => f(stage),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairEnumerationOracle {
    generator: PairGenerator,
    budget: u64,
    label: String,
}

impl PairEnumerationOracle {
    pub fn new(label: impl Into<String>, generator: PairGenerator, budget: u64) -> Self {
        Self { generator, budget, label: label.into() }
    }

    pub fn prompt(structure: &EqStructure, budget: u64) -> Self {
        Self::new(
            format!("prompt({})", structure.provenance()),
            PairGenerator::Prompt(structure.clone()),
            budget,
        )
    }

    pub fn custom(
        label: impl Into<String>,
        budget: u64,
        f: impl Fn(u64) -> Vec<(u64, u64)> + Send + Sync + 'static,
    ) -> Self {
        Self::new(label, PairGenerator::Custom(Arc::new(f)), budget)
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_budget(&self, budget: u64) -> Self {
        Self { budget, ..self.clone() }
    }

    pub fn arrivals(&self, stage: u64) -> Vec<(u64, u64)> {
        self.generator.arrivals(stage)
    }

    pub fn snapshot(&self, stage: u64) -> Result<BTreeSet<(u64, u64)>> {
        if stage > self.budget {
            return Err(Error::BudgetExceeded { stage, budget: self.budget });
        }
        Ok((0..=stage).flat_map(|s| self.arrivals(s)).collect())
    }
}

/// Σ⁰₂-style set given by a stagewise guess; membership means
/// `approx(x, budget)`.
#[derive(Clone)]
pub struct LimitApproxOracle {
    approx: ApproxFn,
    budget: u64,
    label: String,
}

impl fmt::Debug for LimitApproxOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LimitApproxOracle")
            .field("label", &self.label)
            .field("budget", &self.budget)
            .finish()
    }
}

impl LimitApproxOracle {
    pub fn new(label: impl Into<String>, budget: u64, approx: impl Fn(u64, u64) -> bool + Send + Sync + 'static) -> Self {
        Self { approx: Arc::new(approx), budget, label: label.into() }
    }

    /// A decidable set viewed as a constant approximation.
    pub fn from_set(set: &crate::sets::DecidableSet, budget: u64) -> Self {
        let set = set.clone();
        Self::new(set.label().to_string(), budget, move |x, _| set.contains(x))
    }

    /// The set enumerated by `oracle`: `approx(x, s)` iff `x ∈ W_s`.
    pub fn from_enumeration(oracle: &EnumerationOracle) -> Self {
        let idx = Arc::new(oracle.arrival_index(oracle.budget()));
        Self::new(oracle.label().to_string(), oracle.budget(), move |x, s| idx.member_at(x, s))
    }

    pub fn approx(&self, x: u64, stage: u64) -> bool {
        (self.approx)(x, stage)
    }

    pub fn member(&self, x: u64) -> bool {
        self.approx(x, self.budget)
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Finite stand-in for the standard list W₀, W₁, … Indices are stable.
#[derive(Debug, Clone)]
pub struct OracleRegistry<T> {
    entries: Vec<T>,
}

impl<T> Default for OracleRegistry<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T> OracleRegistry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, oracle: T) -> usize {
        self.entries.push(oracle);
        self.entries.len() - 1
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.entries.get(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &T)> {
        self.entries.iter().enumerate()
    }
}

impl<T> FromIterator<T> for OracleRegistry<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self { entries: iter.into_iter().collect() }
    }
}

/// Disjoint-set forest over `0..len`, union by size with path compression.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len).collect(), size: vec![1; len] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Extend the universe to `0..len` with fresh singletons.
    pub fn grow(&mut self, len: usize) {
        let old = self.parent.len();
        if len > old {
            self.parent.extend(old..len);
            self.size.resize(len, 1);
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns true if two distinct sets were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// A partition of `{0,…,horizon−1}` into blocks, each sorted, blocks ordered
/// by least element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub horizon: u64,
    pub blocks: Vec<Vec<u64>>,
    /// Pairs dropped because an endpoint was `≥ horizon`.
    pub ignored_pairs: usize,
}

impl Partition {
    pub fn from_union_find(uf: &mut UnionFind, horizon: u64, ignored_pairs: usize) -> Self {
        let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for x in 0..horizon as usize {
            groups.entry(uf.find(x)).or_default().push(x as u64);
        }
        let mut blocks: Vec<Vec<u64>> = groups.into_values().collect();
        blocks.sort_by_key(|b| b[0]);
        Self { horizon, blocks, ignored_pairs }
    }

    pub fn block_of(&self, x: u64) -> Option<&[u64]> {
        self.blocks.iter().find(|b| b.binary_search(&x).is_ok()).map(Vec::as_slice)
    }

    /// Block index for every element below the horizon.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.horizon as usize];
        for (i, b) in self.blocks.iter().enumerate() {
            for &x in b {
                out[x as usize] = i;
            }
        }
        out
    }

    /// Every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let labels = coarser.labels();
        self.blocks.iter().all(|b| b.iter().all(|&x| labels[x as usize] == labels[b[0] as usize]))
    }
}

/// Reflexive-symmetric-transitive closure of the pairs enumerated by `stage`,
/// restricted to `{0,…,horizon−1}`.
pub fn ce_closure(pairs: &PairEnumerationOracle, stage: u64, horizon: u64) -> Result<Partition> {
    if stage > pairs.budget() {
        return Err(Error::BudgetExceeded { stage, budget: pairs.budget() });
    }
    let mut uf = UnionFind::new(horizon as usize);
    let mut ignored = 0;
    for s in 0..=stage {
        for (x, y) in pairs.arrivals(s) {
            if x >= horizon || y >= horizon {
                ignored += 1;
                continue;
            }
            uf.union(x as usize, y as usize);
        }
    }
    Ok(Partition::from_union_find(&mut uf, horizon, ignored))
}

/// Exhaustively re-check `enumerate(s) ⊆ enumerate(s+1)` for `s < budget`.
/// Returns the first offending stage.
pub fn check_monotone(oracle: &EnumerationOracle) -> std::result::Result<(), u64> {
    let mut prev: BTreeSet<u64> = BTreeSet::new();
    for s in 0..=oracle.budget() {
        let cur = oracle.snapshot(s).expect("stage within budget");
        if !prev.is_subset(&cur) {
            return Err(s);
        }
        prev = cur;
    }
    Ok(())
}

/// Incremental closure over an unbounded universe, used by stage loops that
/// need class sizes as pairs arrive.
#[derive(Debug, Clone, Default)]
pub struct IncrementalClosure {
    uf: UnionFind,
    /// Per root: members `≤ counted_upto`.
    counted: Vec<usize>,
    counted_upto: Option<u64>,
}

impl Default for UnionFind {
    fn default() -> Self {
        Self::new(0)
    }
}

impl IncrementalClosure {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, x: u64) {
        let need = x as usize + 1;
        if need > self.uf.len() {
            self.uf.grow(need);
            self.counted.resize(need, 0);
        }
    }

    pub fn add_pair(&mut self, x: u64, y: u64) {
        self.ensure(x.max(y));
        let (rx, ry) = (self.uf.find(x as usize), self.uf.find(y as usize));
        if rx == ry {
            return;
        }
        let total = self.counted[rx] + self.counted[ry];
        self.uf.union(rx, ry);
        let r = self.uf.find(rx);
        self.counted[r] = total;
    }

    /// Start counting every element `≤ p`.
    pub fn count_upto(&mut self, p: u64) {
        let start = self.counted_upto.map_or(0, |c| c + 1);
        if start > p {
            return;
        }
        self.ensure(p);
        for x in start..=p {
            let r = self.uf.find(x as usize);
            self.counted[r] += 1;
        }
        self.counted_upto = Some(p);
    }

    /// `|{a ≤ p : a ~ x}|` for the current counting bound `p`.
    pub fn counted_size(&mut self, x: u64) -> usize {
        if (x as usize) >= self.uf.len() {
            return usize::from(self.counted_upto.is_some_and(|p| x <= p));
        }
        let r = self.uf.find(x as usize);
        self.counted[r]
    }

    /// Size of the class of `x` among every element mentioned so far.
    pub fn full_size(&mut self, x: u64) -> usize {
        if (x as usize) >= self.uf.len() {
            return 1;
        }
        self.uf.set_size(x as usize)
    }

    pub fn root(&mut self, x: u64) -> u64 {
        if (x as usize) >= self.uf.len() {
            return x;
        }
        self.uf.find(x as usize) as u64
    }

    pub fn same_class(&mut self, x: u64, y: u64) -> bool {
        x == y || self.root(x) == self.root(y)
    }
}
