//! Equivalence structures on ω, observed through a finite horizon.
//!
//! A structure is queried one element at a time through [`EqRelation::class_of`],
//! which returns the full member list of a finite class, a tag for a
//! declared-infinite class, or `Unknown` when the element lies outside the
//! materialized range of a stage construction. Classes with a member at or
//! past the horizon are never guessed: they are reported as undetermined.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::sets::{DecidableSet, SortedPrefix, DEFAULT_SCAN_CAP};

/// What a structure knows about the class of one element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Class {
    /// Sorted members of a finite class.
    Finite(Vec<u64>),
    /// A class declared infinite by scenario metadata; equal ids mean the same class.
    Infinite { id: u64 },
    Unknown,
}

impl Class {
    pub fn len(&self) -> Option<usize> {
        match self {
            Class::Finite(m) => Some(m.len()),
            _ => None,
        }
    }
}

pub trait EqRelation: Send + Sync {
    fn class_of(&self, x: u64) -> Class;

    /// `E(x, y)`, or `None` when either side is unknown.
    fn related(&self, x: u64, y: u64) -> Option<bool> {
        if x == y {
            return Some(true);
        }
        match self.class_of(x) {
            Class::Finite(m) => Some(m.binary_search(&y).is_ok()),
            Class::Infinite { id } => match self.class_of(y) {
                Class::Infinite { id: other } => Some(id == other),
                Class::Finite(_) => Some(false),
                Class::Unknown => None,
            },
            Class::Unknown => None,
        }
    }

    fn describe(&self) -> String;
}

/// An equivalence structure with a (possibly restricted) universe.
#[derive(Clone)]
pub struct EqStructure {
    universe: Option<DecidableSet>,
    relation: Arc<dyn EqRelation>,
    provenance: String,
}

impl fmt::Debug for EqStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EqStructure")
            .field("provenance", &self.provenance)
            .field("universe", &self.universe.as_ref().map(|u| u.label().to_string()))
            .finish()
    }
}

impl EqStructure {
    pub fn new(relation: impl EqRelation + 'static, provenance: impl Into<String>) -> Self {
        Self { universe: None, relation: Arc::new(relation), provenance: provenance.into() }
    }

    pub fn from_arc(relation: Arc<dyn EqRelation>, provenance: impl Into<String>) -> Self {
        Self { universe: None, relation, provenance: provenance.into() }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn universe(&self) -> Option<&DecidableSet> {
        self.universe.as_ref()
    }

    pub fn in_universe(&self, x: u64) -> bool {
        self.universe.as_ref().is_none_or(|u| u.contains(x))
    }

    pub fn class_of(&self, x: u64) -> Class {
        if !self.in_universe(x) {
            return Class::Unknown;
        }
        self.relation.class_of(x)
    }

    pub fn related(&self, x: u64, y: u64) -> Option<bool> {
        if !self.in_universe(x) || !self.in_universe(y) {
            return None;
        }
        self.relation.related(x, y)
    }

    pub fn relation(&self) -> &Arc<dyn EqRelation> {
        &self.relation
    }

    pub fn relabel(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }
}

// ---------------------------------------------------------------------------
// concrete relations

/// Class sizes for consecutive-block layouts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SizeRule {
    /// Every class has `k` elements.
    Constant(u64),
    /// Class `i` has `first + step·i` elements.
    Linear { first: u64, step: u64 },
    /// Sizes repeat the given cycle.
    Cycle(Vec<u64>),
}

impl SizeRule {
    pub fn size(&self, i: u64) -> u64 {
        match self {
            SizeRule::Constant(k) => *k,
            SizeRule::Linear { first, step } => first + step * i,
            SizeRule::Cycle(c) => c[(i % c.len() as u64) as usize],
        }
    }

    /// Total size of classes `0..i`.
    pub fn prefix(&self, i: u64) -> u64 {
        match self {
            SizeRule::Constant(k) => k * i,
            SizeRule::Linear { first, step } => first * i + step * (i * i.saturating_sub(1) / 2),
            SizeRule::Cycle(c) => {
                let len = c.len() as u64;
                let total: u64 = c.iter().sum();
                let partial: u64 = c[..(i % len) as usize].iter().sum();
                (i / len) * total + partial
            }
        }
    }

    /// Index of the class containing `x`.
    pub fn index_of(&self, x: u64) -> u64 {
        // largest i with prefix(i) <= x
        let (mut lo, mut hi) = (0u64, x + 1);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.prefix(mid) <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }
}

/// Classes laid out consecutively: class `i` is `[prefix(i), prefix(i+1))`.
#[derive(Debug, Clone)]
pub struct ConsecutiveClasses {
    pub rule: SizeRule,
}

impl EqRelation for ConsecutiveClasses {
    fn class_of(&self, x: u64) -> Class {
        let i = self.rule.index_of(x);
        Class::Finite((self.rule.prefix(i)..self.rule.prefix(i + 1)).collect())
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        Some(self.rule.index_of(x) == self.rule.index_of(y))
    }

    fn describe(&self) -> String {
        format!("consecutive({:?})", self.rule)
    }
}

/// Every class a singleton.
#[derive(Debug, Clone, Copy)]
pub struct IdentityRelation;

impl EqRelation for IdentityRelation {
    fn class_of(&self, x: u64) -> Class {
        Class::Finite(vec![x])
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        Some(x == y)
    }

    fn describe(&self) -> String {
        "identity".into()
    }
}

/// Two infinite classes: a carrier set and its complement.
#[derive(Debug, Clone)]
pub struct TwoClassRelation {
    pub carrier: DecidableSet,
}

impl EqRelation for TwoClassRelation {
    fn class_of(&self, x: u64) -> Class {
        Class::Infinite { id: u64::from(!self.carrier.contains(x)) }
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        Some(self.carrier.contains(x) == self.carrier.contains(y))
    }

    fn describe(&self) -> String {
        format!("two-class({})", self.carrier.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairsMode {
    /// Singletons at the squares, disjoint pairs filling each gap.
    DensePairs,
    /// Pairs `{n², n²+1}` for `n ≥ 1`, singletons elsewhere.
    SparsePairs,
}

#[derive(Debug, Clone, Copy)]
pub struct Canonical12 {
    pub mode: PairsMode,
}

impl Canonical12 {
    fn partner(&self, x: u64) -> Option<u64> {
        let n = crate::sets::isqrt(x);
        let offset = x - n * n;
        match self.mode {
            PairsMode::DensePairs => match offset {
                0 => None,
                o if o % 2 == 1 => Some(x + 1),
                _ => Some(x - 1),
            },
            PairsMode::SparsePairs => match (n, offset) {
                (0, _) => None,
                (_, 0) => Some(x + 1),
                (_, 1) => Some(x - 1),
                _ => None,
            },
        }
    }
}

impl EqRelation for Canonical12 {
    fn class_of(&self, x: u64) -> Class {
        match self.partner(x) {
            Some(y) => Class::Finite(vec![x.min(y), x.max(y)]),
            None => Class::Finite(vec![x]),
        }
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        Some(x == y || self.partner(x) == Some(y))
    }

    fn describe(&self) -> String {
        format!("canonical-12({:?})", self.mode)
    }
}

/// A materialized structure: explicit classes for every element below `limit`.
#[derive(Debug, Clone)]
pub struct TableRelation {
    class_id: Vec<u32>,
    classes: Vec<TableClass>,
    label: String,
}

#[derive(Debug, Clone)]
pub enum TableClass {
    Finite(Vec<u64>),
    Infinite,
}

pub const NO_CLASS: u32 = u32::MAX;

impl TableRelation {
    /// `classes` must be disjoint; elements below `limit` not covered by any
    /// class become `Unknown`. Finite classes may contain members ≥ `limit`.
    pub fn new(label: impl Into<String>, limit: u64, classes: Vec<TableClass>) -> Result<Self> {
        let mut class_id = vec![NO_CLASS; limit as usize];
        let mut sorted = Vec::with_capacity(classes.len());
        for (i, c) in classes.into_iter().enumerate() {
            let c = match c {
                TableClass::Finite(mut m) => {
                    m.sort_unstable();
                    m.dedup();
                    for &x in &m {
                        if x < limit {
                            if class_id[x as usize] != NO_CLASS {
                                return Err(Error::InvariantViolation(format!("element {x} in two classes")));
                            }
                            class_id[x as usize] = i as u32;
                        }
                    }
                    TableClass::Finite(m)
                }
                TableClass::Infinite => TableClass::Infinite,
            };
            sorted.push(c);
        }
        Ok(Self { class_id, classes: sorted, label: label.into() })
    }

    /// Assign elements below `limit` to declared-infinite class `class`.
    pub fn assign_infinite(&mut self, x: u64, class: usize) {
        self.class_id[x as usize] = class as u32;
    }

    pub fn limit(&self) -> u64 {
        self.class_id.len() as u64
    }

    /// Dense class ids below the limit (`NO_CLASS` for unknown elements).
    pub fn class_ids(&self) -> &[u32] {
        &self.class_id
    }
}

impl EqRelation for TableRelation {
    fn class_of(&self, x: u64) -> Class {
        match self.class_id.get(x as usize) {
            Some(&id) if id != NO_CLASS => match &self.classes[id as usize] {
                TableClass::Finite(m) => Class::Finite(m.clone()),
                TableClass::Infinite => Class::Infinite { id: id as u64 },
            },
            _ => Class::Unknown,
        }
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        if x == y {
            return Some(true);
        }
        let a = *self.class_id.get(x as usize)?;
        if a == NO_CLASS {
            return None;
        }
        match self.class_id.get(y as usize) {
            Some(&b) if b != NO_CLASS => Some(a == b),
            _ => match &self.classes[a as usize] {
                TableClass::Finite(m) => Some(m.binary_search(&y).is_ok()),
                TableClass::Infinite => None,
            },
        }
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Rank/select access to a subset of ω, possibly known only below a limit.
pub trait IndexedSet: Send + Sync {
    fn contains(&self, x: u64) -> Option<bool>;
    /// `|S ∩ [0, x)|`.
    fn rank(&self, x: u64) -> Option<u64>;
    /// The `i`-th element.
    fn select(&self, i: u64) -> Option<u64>;
}

impl IndexedSet for DecidableSet {
    fn contains(&self, x: u64) -> Option<bool> {
        Some(DecidableSet::contains(self, x))
    }

    fn rank(&self, x: u64) -> Option<u64> {
        if !self.has_fast_count() && x > DEFAULT_SCAN_CAP {
            return None;
        }
        Some(self.count_below(x))
    }

    fn select(&self, i: u64) -> Option<u64> {
        DecidableSet::select(self, i, DEFAULT_SCAN_CAP)
    }
}

/// A set known exactly below `limit`.
impl IndexedSet for SortedPrefix {
    fn contains(&self, x: u64) -> Option<bool> {
        (x < self.limit()).then(|| self.rank_of(x).is_some())
    }

    fn rank(&self, x: u64) -> Option<u64> {
        (x <= self.limit()).then(|| self.count_below(x))
    }

    fn select(&self, i: u64) -> Option<u64> {
        SortedPrefix::select(self, i)
    }
}

/// Complement of an indexed set.
pub struct ComplementSet(pub Arc<dyn IndexedSet>);

impl IndexedSet for ComplementSet {
    fn contains(&self, x: u64) -> Option<bool> {
        self.0.contains(x).map(|b| !b)
    }

    fn rank(&self, x: u64) -> Option<u64> {
        self.0.rank(x).map(|r| x - r)
    }

    fn select(&self, i: u64) -> Option<u64> {
        // least x with rank(x + 1) > i, i.e. (x + 1) - inner.rank(x + 1) > i
        let ok = |x: u64| -> Option<bool> { Some((x + 1) - self.0.rank(x + 1)? > i) };
        let mut hi = i.max(1);
        loop {
            match ok(hi) {
                Some(true) => break,
                Some(false) => hi = hi.checked_mul(2)?,
                None => return None,
            }
        }
        let mut lo = 0u64;
        if ok(0)? {
            return Some(0);
        }
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Bijection of ω mapping `source` onto `target` and the complement of
/// `source` onto the complement of `target`, order-preservingly on each part.
#[derive(Clone)]
pub struct SplitPermutation {
    source: Arc<dyn IndexedSet>,
    target: Arc<dyn IndexedSet>,
    source_out: Arc<dyn IndexedSet>,
    target_out: Arc<dyn IndexedSet>,
}

impl fmt::Debug for SplitPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SplitPermutation")
    }
}

impl SplitPermutation {
    pub fn new(source: Arc<dyn IndexedSet>, target: Arc<dyn IndexedSet>) -> Self {
        let source_out: Arc<dyn IndexedSet> = Arc::new(ComplementSet(Arc::clone(&source)));
        let target_out: Arc<dyn IndexedSet> = Arc::new(ComplementSet(Arc::clone(&target)));
        Self { source, target, source_out, target_out }
    }

    pub fn forward(&self, x: u64) -> Option<u64> {
        if self.source.contains(x)? {
            self.target.select(self.source.rank(x)?)
        } else {
            self.target_out.select(self.source_out.rank(x)?)
        }
    }

    pub fn inverse(&self, y: u64) -> Option<u64> {
        if self.target.contains(y)? {
            self.source.select(self.target.rank(y)?)
        } else {
            self.source_out.select(self.target_out.rank(y)?)
        }
    }
}

/// A bijection of ω, possibly known only on part of its domain.
pub trait Permutation: Send + Sync {
    fn forward(&self, x: u64) -> Option<u64>;
    fn inverse(&self, y: u64) -> Option<u64>;
}

impl Permutation for SplitPermutation {
    fn forward(&self, x: u64) -> Option<u64> {
        SplitPermutation::forward(self, x)
    }

    fn inverse(&self, y: u64) -> Option<u64> {
        SplitPermutation::inverse(self, y)
    }
}

/// Bijection sending `dom[i] ↦ img[i]` for two equal-length finite lists and
/// the rest of ω onto the rest of ω, order-preservingly.
#[derive(Clone)]
pub struct ListPermutation {
    fwd: Arc<HashMap<u64, u64>>,
    inv: Arc<HashMap<u64, u64>>,
    outside: SplitPermutation,
}

impl ListPermutation {
    pub fn new(dom: &[u64], img: &[u64]) -> Result<Self> {
        if dom.len() != img.len() {
            return Err(Error::InvariantViolation(format!(
                "permutation lists differ in length: {} vs {}",
                dom.len(),
                img.len()
            )));
        }
        let fwd: HashMap<u64, u64> = dom.iter().copied().zip(img.iter().copied()).collect();
        let inv: HashMap<u64, u64> = img.iter().copied().zip(dom.iter().copied()).collect();
        if fwd.len() != dom.len() || inv.len() != img.len() {
            return Err(Error::InvariantViolation("permutation lists repeat an element".into()));
        }
        let sorted = |v: &[u64]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            Arc::new(SortedPrefix::from_sorted(v, u64::MAX)) as Arc<dyn IndexedSet>
        };
        // the complements are matched in order: ω∖dom → ω∖img
        let outside = SplitPermutation::new(
            Arc::new(ComplementSet(sorted(dom))),
            Arc::new(ComplementSet(sorted(img))),
        );
        Ok(Self { fwd: Arc::new(fwd), inv: Arc::new(inv), outside })
    }
}

impl Permutation for ListPermutation {
    fn forward(&self, x: u64) -> Option<u64> {
        match self.fwd.get(&x) {
            Some(&y) => Some(y),
            None => self.outside.forward(x),
        }
    }

    fn inverse(&self, y: u64) -> Option<u64> {
        match self.inv.get(&y) {
            Some(&x) => Some(x),
            None => self.outside.inverse(y),
        }
    }
}

/// A copy defined by `x E* y ⟺ π(x) E π(y)`.
#[derive(Clone)]
pub struct PullbackRelation {
    pub base: EqStructure,
    pub perm: Arc<dyn Permutation>,
}

impl EqRelation for PullbackRelation {
    fn class_of(&self, x: u64) -> Class {
        let Some(px) = self.perm.forward(x) else { return Class::Unknown };
        match self.base.class_of(px) {
            Class::Finite(members) => {
                let mut out = Vec::with_capacity(members.len());
                for m in members {
                    match self.perm.inverse(m) {
                        Some(v) => out.push(v),
                        None => return Class::Unknown,
                    }
                }
                out.sort_unstable();
                Class::Finite(out)
            }
            other => other,
        }
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        if x == y {
            return Some(true);
        }
        self.base.related(self.perm.forward(x)?, self.perm.forward(y)?)
    }

    fn describe(&self) -> String {
        format!("pullback({})", self.base.provenance())
    }
}

pub fn pullback(base: &EqStructure, perm: Arc<dyn Permutation>, provenance: impl Into<String>) -> EqStructure {
    EqStructure::new(PullbackRelation { base: base.clone(), perm }, provenance)
}

/// Substructure on a decidable subset.
#[derive(Clone)]
pub struct RestrictedRelation {
    pub base: EqStructure,
    pub domain: DecidableSet,
}

impl EqRelation for RestrictedRelation {
    fn class_of(&self, x: u64) -> Class {
        match self.base.class_of(x) {
            Class::Finite(m) => Class::Finite(m.into_iter().filter(|&y| self.domain.contains(y)).collect()),
            other => other,
        }
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        self.base.related(x, y)
    }

    fn describe(&self) -> String {
        format!("restrict({}, {})", self.base.provenance(), self.domain.label())
    }
}

/// Class queries answered by a closure.
pub struct FnRelation {
    label: String,
    f: Arc<dyn Fn(u64) -> Class + Send + Sync>,
}

impl FnRelation {
    pub fn new(label: impl Into<String>, f: impl Fn(u64) -> Class + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }
}

impl EqRelation for FnRelation {
    fn class_of(&self, x: u64) -> Class {
        (self.f)(x)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

// ---------------------------------------------------------------------------
// canonical structures and builders

/// One class of every finite size, in increasing order: `{0}, {1,2}, {3,4,5}, …`.
pub fn canonical_all_sizes() -> EqStructure {
    EqStructure::new(
        ConsecutiveClasses { rule: SizeRule::Linear { first: 1, step: 1 } },
        "canonical-all-sizes",
    )
}

pub fn canonical_12(mode: PairsMode) -> EqStructure {
    let name = match mode {
        PairsMode::DensePairs => "canonical-12-dense",
        PairsMode::SparsePairs => "canonical-12-sparse",
    };
    EqStructure::new(Canonical12 { mode }, name)
}

pub fn identity_structure() -> EqStructure {
    EqStructure::new(IdentityRelation, "identity")
}

pub fn consecutive(rule: SizeRule, provenance: impl Into<String>) -> EqStructure {
    EqStructure::new(ConsecutiveClasses { rule }, provenance)
}

/// Blocks `{nk, …, nk+k−1}`.
pub fn blocks(k: u64) -> EqStructure {
    consecutive(SizeRule::Constant(k), format!("blocks({k})"))
}

pub fn two_class(carrier: &DecidableSet) -> EqStructure {
    EqStructure::new(TwoClassRelation { carrier: carrier.clone() }, format!("two-class({})", carrier.label()))
}

/// `infinite` is one declared-infinite class; its complement carries a copy of
/// `rest` through the order isomorphism ω → ω∖infinite.
pub fn spliced(infinite: &DecidableSet, rest: &EqStructure) -> EqStructure {
    let inf = infinite.clone();
    let outside: Arc<dyn IndexedSet> = Arc::new(ComplementSet(Arc::new(infinite.clone())));
    let rest_c = rest.clone();
    let label = format!("spliced({}, {})", infinite.label(), rest.provenance());
    EqStructure::new(
        FnRelation::new(label.clone(), move |x| {
            if inf.contains(x) {
                return Class::Infinite { id: u64::MAX };
            }
            let Some(r) = outside.rank(x) else { return Class::Unknown };
            match rest_c.class_of(r) {
                Class::Finite(m) => {
                    let mut out = Vec::with_capacity(m.len());
                    for i in m {
                        match outside.select(i) {
                            Some(v) => out.push(v),
                            None => return Class::Unknown,
                        }
                    }
                    Class::Finite(out)
                }
                other => other,
            }
        }),
        label,
    )
}

pub fn restrict(s: &EqStructure, y: &DecidableSet) -> EqStructure {
    let domain = match &s.universe {
        Some(u) => u.intersect(y),
        None => y.clone(),
    };
    EqStructure {
        universe: Some(domain.clone()),
        relation: Arc::new(RestrictedRelation { base: s.clone(), domain }),
        provenance: format!("restrict({}, {})", s.provenance, y.label()),
    }
}

/// Elements of [`canonical_all_sizes`] lying in classes whose size is in `k`,
/// with the exact deficit check at every triangular checkpoint `T_n = n(n+1)/2`.
#[derive(Debug, Clone)]
pub struct AkSet {
    pub set: DecidableSet,
    pub checkpoints: Vec<DeficitCheckpoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeficitCheckpoint {
    /// Number of classes covered (sizes `1..=n`).
    pub n: u64,
    /// `T_n`.
    pub elements: u64,
    /// Sizes in `1..=n` missing from `K`.
    pub missing: u64,
    #[serde(with = "rational::serde_p_q")]
    pub deficit: Rational,
    #[serde(with = "rational::serde_p_q")]
    pub bound: Rational,
    pub holds: bool,
}

pub fn build_a_k(k: &DecidableSet, horizon: u64) -> AkSet {
    let rule = SizeRule::Linear { first: 1, step: 1 };
    let kk = k.clone();
    let set = DecidableSet::from_fn(format!("A_K({})", k.label()), move |x| kk.contains(rule.index_of(x) + 1));
    let mut checkpoints = Vec::new();
    let (mut in_ak, mut missing) = (0u64, 0u64);
    let mut n = 0u64;
    loop {
        let size = n + 1;
        let t_next = (n + 1) * (n + 2) / 2;
        if t_next > horizon {
            break;
        }
        n += 1;
        if k.contains(size) {
            in_ak += size;
        } else {
            missing += 1;
        }
        let deficit = Rational::from_integer(1) - rational::ratio(in_ak, t_next);
        let bound = rational::ratio(2 * missing, n);
        checkpoints.push(DeficitCheckpoint {
            n,
            elements: t_next,
            missing,
            deficit,
            bound,
            holds: deficit <= bound,
        });
    }
    AkSet { set, checkpoints }
}

// ---------------------------------------------------------------------------
// horizon snapshots

#[derive(Debug, Clone)]
pub struct SnapClass {
    /// Members below the horizon, sorted.
    pub members: Vec<u64>,
    /// `Some(size)` for a finite class with every member below the horizon.
    pub size: Option<usize>,
    pub infinite: bool,
}

/// Every class meeting `{0,…,horizon−1}`, as seen through `class_of`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub horizon: u64,
    /// Class index for each element below the horizon; `None` if outside the
    /// universe or unknown.
    pub label: Vec<Option<usize>>,
    pub classes: Vec<SnapClass>,
}

impl Snapshot {
    pub fn take(s: &EqStructure, horizon: u64) -> Result<Self> {
        let h = horizon as usize;
        let mut label: Vec<Option<usize>> = vec![None; h];
        let mut classes: Vec<SnapClass> = Vec::new();
        let mut infinite_ids: HashMap<u64, usize> = HashMap::new();
        let mut full_lists: Vec<Vec<u64>> = Vec::new();
        for x in 0..horizon {
            if !s.in_universe(x) {
                continue;
            }
            match s.class_of(x) {
                Class::Finite(m) => {
                    if m.binary_search(&x).is_err() {
                        return Err(Error::InvariantViolation(format!("class of {x} does not contain {x}")));
                    }
                    if let Some(id) = label[x as usize] {
                        if full_lists[id] != m {
                            return Err(Error::InvariantViolation(format!(
                                "class of {x} disagrees with class of {}",
                                classes[id].members[0]
                            )));
                        }
                        continue;
                    }
                    let id = classes.len();
                    let below: Vec<u64> = m.iter().copied().filter(|&y| y < horizon).collect();
                    for &y in &below {
                        if label[y as usize].is_some() || y < x {
                            return Err(Error::InvariantViolation(format!(
                                "classes of {x} and {y} overlap inconsistently"
                            )));
                        }
                        label[y as usize] = Some(id);
                    }
                    let complete = below.len() == m.len();
                    classes.push(SnapClass { members: below, size: complete.then_some(m.len()), infinite: false });
                    full_lists.push(m);
                }
                Class::Infinite { id: tag } => {
                    let id = *infinite_ids.entry(tag).or_insert_with(|| {
                        classes.push(SnapClass { members: Vec::new(), size: None, infinite: true });
                        full_lists.push(Vec::new());
                        classes.len() - 1
                    });
                    if label[x as usize].is_some() {
                        return Err(Error::InvariantViolation(format!("{x} listed in a finite class and an infinite one")));
                    }
                    classes[id].members.push(x);
                    label[x as usize] = Some(id);
                }
                Class::Unknown => {}
            }
        }
        Ok(Self { horizon, label, classes })
    }

    pub fn class_members(&self, x: u64) -> Option<&[u64]> {
        let id = (*self.label.get(x as usize)?)?;
        Some(&self.classes[id].members)
    }

    pub fn type_partition(&self) -> TypePartition {
        let mut by_size: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        let (mut undetermined, mut infinite) = (Vec::new(), Vec::new());
        for x in 0..self.horizon {
            match self.label[x as usize] {
                Some(id) => {
                    let c = &self.classes[id];
                    if c.infinite {
                        infinite.push(x);
                    } else if let Some(k) = c.size {
                        by_size.entry(k).or_default().push(x);
                    } else {
                        undetermined.push(x);
                    }
                }
                None => undetermined.push(x),
            }
        }
        TypePartition { horizon: self.horizon, by_size, undetermined, infinite }
    }

    pub fn character(&self) -> Character {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let (mut truncated, mut infinite) = (0usize, 0usize);
        let mut min_partial: Option<usize> = None;
        for c in &self.classes {
            if c.infinite {
                infinite += 1;
            } else if let Some(k) = c.size {
                *counts.entry(k).or_default() += 1;
            } else {
                truncated += 1;
                min_partial = Some(min_partial.map_or(c.members.len(), |m| m.min(c.members.len())));
            }
        }
        let entries = counts
            .into_iter()
            .map(|(k, count)| (k, CharEntry { count, exact: min_partial.is_none_or(|m| k < m) }))
            .collect();
        Character { horizon: self.horizon, entries, truncated_classes: truncated, infinite_classes: infinite }
    }

    /// JSON form: complete classes plus the undetermined tail.
    pub fn to_json(&self) -> SnapshotJson {
        let tp = self.type_partition();
        let mut classes: Vec<Vec<u64>> =
            self.classes.iter().filter(|c| c.size.is_some()).map(|c| c.members.clone()).collect();
        classes.sort();
        let mut undetermined = tp.undetermined;
        undetermined.extend(tp.infinite);
        undetermined.sort_unstable();
        SnapshotJson { horizon: self.horizon, classes, undetermined }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SnapshotJson {
    pub horizon: u64,
    pub classes: Vec<Vec<u64>>,
    pub undetermined: Vec<u64>,
}

/// Elements below the horizon grouped by the size of their class.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct TypePartition {
    pub horizon: u64,
    pub by_size: BTreeMap<usize, Vec<u64>>,
    /// Elements whose class reaches the horizon or is unknown.
    pub undetermined: Vec<u64>,
    /// Elements of declared-infinite classes.
    pub infinite: Vec<u64>,
}

impl TypePartition {
    /// `𝒜(k)` below the horizon.
    pub fn of_size(&self, k: usize) -> &[u64] {
        self.by_size.get(&k).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct CharEntry {
    pub count: usize,
    /// False if a class truncated by the horizon could still turn out this size.
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct Character {
    pub horizon: u64,
    pub entries: BTreeMap<usize, CharEntry>,
    pub truncated_classes: usize,
    pub infinite_classes: usize,
}

impl Character {
    pub fn count(&self, k: usize) -> usize {
        self.entries.get(&k).map_or(0, |e| e.count)
    }

    /// The size → count map.
    pub fn counts(&self) -> BTreeMap<usize, usize> {
        self.entries.iter().map(|(&k, e)| (k, e.count)).collect()
    }

    /// `{(k, n) : at least n classes of size k}`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.entries.iter().flat_map(|(&k, e)| (1..=e.count).map(move |n| (k, n))).collect()
    }
}

pub fn type_sets(s: &EqStructure, horizon: u64) -> Result<TypePartition> {
    Ok(Snapshot::take(s, horizon)?.type_partition())
}

pub fn character_of(s: &EqStructure, horizon: u64) -> Result<Character> {
    Ok(Snapshot::take(s, horizon)?.character())
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FaithfulReport {
    pub faithful: bool,
    /// `(a, b)` with `a ∈ A`, `b ∉ A`, `E(a, b)`.
    pub counterexample: Option<(u64, u64)>,
}

/// Is every class meeting `a` (below the horizon) contained in `a`?
pub fn is_faithful(a: &DecidableSet, s: &EqStructure, horizon: u64) -> Result<FaithfulReport> {
    let snap = Snapshot::take(s, horizon)?;
    for x in 0..horizon {
        if !a.contains(x) {
            continue;
        }
        if let Some(members) = snap.class_members(x) {
            if let Some(&b) = members.iter().find(|&&b| !a.contains(b)) {
                return Ok(FaithfulReport { faithful: false, counterexample: Some((x, b)) });
            }
        }
    }
    Ok(FaithfulReport { faithful: true, counterexample: None })
}

/// Exhaustive reflexivity/symmetry/transitivity check of `related` on
/// `{0,…,horizon−1} ∩ universe`, independent of `class_of`.
pub fn check_equivalence(s: &EqStructure, horizon: u64) -> Result<()> {
    let elems: Vec<u64> = (0..horizon).filter(|&x| s.in_universe(x)).collect();
    let n = elems.len();
    let words = n.div_ceil(64);
    let mut rows = vec![0u64; n * words];
    for (i, &x) in elems.iter().enumerate() {
        for (j, &y) in elems.iter().enumerate() {
            match s.related(x, y) {
                Some(true) => rows[i * words + j / 64] |= 1 << (j % 64),
                Some(false) => {}
                None => return Err(Error::InvariantViolation(format!("relation undefined at ({x}, {y})"))),
            }
        }
    }
    for (i, &x) in elems.iter().enumerate() {
        let row = &rows[i * words..(i + 1) * words];
        if row[i / 64] & (1 << (i % 64)) == 0 {
            return Err(Error::InvariantViolation(format!("not reflexive at {x}")));
        }
        for j in 0..n {
            if row[j / 64] & (1 << (j % 64)) != 0 && rows[j * words..(j + 1) * words] != *row {
                return Err(Error::InvariantViolation(format!(
                    "symmetry or transitivity fails at ({x}, {})",
                    elems[j]
                )));
            }
        }
    }
    Ok(())
}

/// Prefix of all elements of `s` that lie in classes selected by `keep`, scanning below `limit`.
pub fn collect_classes(s: &EqStructure, limit: u64, mut keep: impl FnMut(&[u64]) -> bool) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut x = 0;
    while x < limit {
        if let Class::Finite(m) = s.class_of(x) {
            if m[0] == x && keep(&m) {
                out.push(m);
            }
        }
        x += 1;
    }
    out
}
