//! Generically and coarsely computable copies.
//!
//! Copies are built as pullbacks `x E* y ⟺ π(x) E π(y)` along an explicit
//! permutation `π` of ω, so the isomorphism with the input is always on hand.
//! Carriers are materialized below a bound `L ≥ horizon`: `π` matches the
//! chosen part of the carrier below `L` with a chosen part of the input, and
//! sends everything else across in increasing order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::density::{extract_dense_subset, DenseSubset};
use crate::enumeration::{EnumerationOracle, LimitApproxOracle, OracleRegistry, PairEnumerationOracle, SetGenerator, UnionFind};
use crate::error::{Error, Result};
use crate::rational::{self, ratio, Rational};
use crate::s1::{build_from_character, CharacterApprox, S1Table};
use crate::sets::DecidableSet;
use crate::structures::{
    blocks, build_a_k, canonical_all_sizes, identity_structure, is_faithful, pullback, restrict, two_class, AkSet, Class,
    EqStructure, FaithfulReport, ListPermutation, Permutation, Snapshot, SizeRule, TableClass, TableRelation,
};

/// Scenario-declared properties that cannot be decided from a finite prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum CaseTag {
    /// The structure has an infinite class, reported by `class_of` under this id.
    InfiniteClass { id: u64 },
    /// Infinitely many classes of this size.
    RepeatedSize { k: u64 },
    /// The character has an infinite subset with an s₁-function.
    S1Subset,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioMetadata {
    pub case: CaseTag,
    /// A class size whose type set has positive density, if one is declared.
    pub positive_density_size: Option<u64>,
}

impl ScenarioMetadata {
    pub fn new(case: CaseTag) -> Self {
        Self { case, positive_density_size: None }
    }
}

/// Upper bound on elements scanned while searching an input structure for classes.
pub const DEFAULT_CLASS_SCAN: u64 = 1 << 26;

/// Visit each class of `s` once, in order of least element, scanning below `cap`.
/// Declared-infinite elements are reported one at a time.
fn scan_classes(s: &EqStructure, cap: u64, mut visit: impl FnMut(ScanItem<'_>) -> bool) {
    let mut x = 0u64;
    while x < cap {
        match s.class_of(x) {
            Class::Finite(m) => {
                if m[0] == x {
                    if !visit(ScanItem::Finite(&m)) {
                        return;
                    }
                    let interval = *m.last().unwrap() - m[0] + 1 == m.len() as u64;
                    if interval {
                        x += m.len() as u64;
                        continue;
                    }
                }
            }
            Class::Infinite { id } => {
                if !visit(ScanItem::Infinite(x, id)) {
                    return;
                }
            }
            Class::Unknown => {}
        }
        x += 1;
    }
}

enum ScanItem<'a> {
    Finite(&'a [u64]),
    Infinite(u64, u64),
}

// ---------------------------------------------------------------------------
// witnesses

type Phi = Arc<dyn Fn(u64, u64) -> Option<bool> + Send + Sync>;

/// A partial decision procedure `Φ` together with the dense set `A` with `A × A ⊆ dom(Φ)`.
#[derive(Clone)]
pub struct GenericWitness {
    phi: Phi,
    pub a: DecidableSet,
    pub faithful: bool,
}

impl fmt::Debug for GenericWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericWitness").field("a", &self.a.label()).field("faithful", &self.faithful).finish()
    }
}

impl GenericWitness {
    pub fn new(a: DecidableSet, faithful: bool, phi: impl Fn(u64, u64) -> Option<bool> + Send + Sync + 'static) -> Self {
        Self { phi: Arc::new(phi), a, faithful }
    }

    /// `Φ` restricted to `A × A` for a total comparison relation.
    pub fn on_carrier(a: DecidableSet, cmp: &EqStructure, faithful: bool) -> Self {
        let (a2, c) = (a.clone(), cmp.clone());
        Self::new(a, faithful, move |x, y| {
            if a2.contains(x) && a2.contains(y) {
                c.related(x, y)
            } else {
                None
            }
        })
    }

    pub fn phi(&self, x: u64, y: u64) -> Option<bool> {
        (self.phi)(x, y)
    }

    /// `A` enumerated in increasing order, one element per stage.
    pub fn enumeration(&self, limit: u64, budget: u64) -> EnumerationOracle {
        EnumerationOracle::new(
            format!("enum({})", self.a.label()),
            SetGenerator::Listed(Arc::new(self.a.elements_below(limit))),
            budget,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessCheck {
    pub horizon: u64,
    pub pairs_checked: u64,
    /// Pairs in `A × A` where `Φ` is undefined.
    pub domain_gaps: u64,
    /// Pairs where `Φ` disagrees with the copy.
    pub disagreements: u64,
    pub first_disagreement: Option<(u64, u64)>,
    #[serde(with = "rational::serde_p_q")]
    pub density_of_a: Rational,
    pub faithful_claimed: bool,
    pub faithful_in_copy: FaithfulReport,
}

impl WitnessCheck {
    pub fn passed(&self) -> bool {
        self.domain_gaps == 0 && self.disagreements == 0 && (!self.faithful_claimed || self.faithful_in_copy.faithful)
    }
}

/// Exhaustive check of a witness against a copy on `(A ∩ horizon)²`.
pub fn verify_witness(w: &GenericWitness, copy: &EqStructure, horizon: u64) -> Result<WitnessCheck> {
    let a: Vec<u64> = w.a.elements_below(horizon);
    let (mut checked, mut gaps, mut bad) = (0u64, 0u64, 0u64);
    let mut first = None;
    for &x in &a {
        for &y in &a {
            checked += 1;
            match w.phi(x, y) {
                None => gaps += 1,
                Some(v) => {
                    if copy.related(x, y) != Some(v) {
                        bad += 1;
                        first.get_or_insert((x, y));
                    }
                }
            }
        }
    }
    let faithful_in_copy = is_faithful(&w.a, copy, horizon)?;
    Ok(WitnessCheck {
        horizon,
        pairs_checked: checked,
        domain_gaps: gaps,
        disagreements: bad,
        first_disagreement: first,
        density_of_a: ratio(a.len() as u64, horizon.max(1)),
        faithful_claimed: w.faithful,
        faithful_in_copy,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoCheck {
    pub horizon: u64,
    /// `π⁻¹(π(x)) = x` for every `x` below the horizon.
    pub round_trip: bool,
    /// Pairs below the horizon where the copy's classes disagree with `E(π x, π y)`.
    pub relation_failures: u64,
    /// Complete copy classes whose image class has a different size.
    pub size_failures: u64,
    pub classes_compared: u64,
}

impl IsoCheck {
    pub fn passed(&self) -> bool {
        self.round_trip && self.relation_failures == 0 && self.size_failures == 0
    }
}

/// Check that `π` carries the copy onto `base` below the horizon, comparing the
/// copy's class snapshot with `base.related` on images.
pub fn check_isomorphism(copy: &EqStructure, base: &EqStructure, perm: &dyn Permutation, horizon: u64) -> Result<IsoCheck> {
    let snap = Snapshot::take(copy, horizon)?;
    let mut images = Vec::with_capacity(horizon as usize);
    let mut round_trip = true;
    for x in 0..horizon {
        let y = perm.forward(x);
        round_trip &= y.and_then(|y| perm.inverse(y)) == Some(x);
        images.push(y);
    }
    let mut relation_failures = 0u64;
    for x in 0..horizon {
        for y in x + 1..horizon {
            let same = snap.label[x as usize].is_some() && snap.label[x as usize] == snap.label[y as usize];
            let img = match (images[x as usize], images[y as usize]) {
                (Some(a), Some(b)) => base.related(a, b),
                _ => None,
            };
            if img != Some(same) {
                relation_failures += 1;
            }
        }
    }
    let mut size_failures = 0u64;
    let mut compared = 0u64;
    for c in &snap.classes {
        if let Some(k) = c.size {
            compared += 1;
            let img = images[c.members[0] as usize].map(|y| base.class_of(y));
            if img.and_then(|c| c.len()) != Some(k) {
                size_failures += 1;
            }
        }
    }
    Ok(IsoCheck { horizon, round_trip, relation_failures, size_failures, classes_compared: compared })
}

// ---------------------------------------------------------------------------
// strongly generic copies

#[derive(Clone)]
pub struct GenericCopy {
    pub case: CaseTag,
    pub copy: EqStructure,
    /// Materialized part of the carrier on which the copy agrees with `cmp`.
    pub a: DecidableSet,
    pub cmp: EqStructure,
    pub witness: GenericWitness,
    pub perm: Arc<dyn Permutation>,
    pub materialized: u64,
}

impl fmt::Debug for GenericCopy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericCopy")
            .field("case", &self.case)
            .field("copy", &self.copy)
            .field("cmp", &self.cmp)
            .field("materialized", &self.materialized)
            .finish()
    }
}

fn check_metadata(s: &EqStructure, meta: &ScenarioMetadata, horizon: u64) -> Result<()> {
    match meta.case {
        CaseTag::InfiniteClass { id } => {
            let seen = (0..horizon).any(|x| s.class_of(x) == Class::Infinite { id });
            if !seen {
                return Err(Error::Scenario(format!("no element of declared infinite class {id} below {horizon}")));
            }
        }
        CaseTag::RepeatedSize { k } => {
            let ch = Snapshot::take(s, horizon)?.character();
            if ch.count(k as usize) < 2 {
                return Err(Error::Scenario(format!("fewer than two classes of declared size {k} below {horizon}")));
            }
        }
        CaseTag::S1Subset => {
            let ch = Snapshot::take(s, horizon)?.character();
            if ch.entries.len() < 3 {
                return Err(Error::Scenario(format!(
                    "declared unbounded character shows only {} sizes below {horizon}",
                    ch.entries.len()
                )));
            }
        }
        CaseTag::None => {}
    }
    Ok(())
}

/// The carrier for the block case: `k`-blocks `{nk,…,nk+k−1}` containing no square.
pub fn block_carrier(k: u64, avoid: &DecidableSet) -> DecidableSet {
    let avoid = avoid.clone();
    DecidableSet::from_fn(format!("blocks({k}) avoiding {}", avoid.label()), move |x| {
        let start = x - x % k;
        (start..start + k).all(|y| !avoid.contains(y))
    })
}

/// A strongly generically computable copy of `s`, with `carrier` as the dense
/// set `A`, materialized below `max(horizon, materialize)`.
///
/// * infinite class: `A` becomes the infinite class, compared against the two-class relation;
/// * repeated size `k`: `A` (a union of `k`-blocks) carries every other `k`-class of `s`,
///   compared against the block relation;
/// * unbounded character: `A` meets one class of each size in a single point, compared
///   against the identity.
pub fn strongly_generic_copy(
    s: &EqStructure,
    meta: &ScenarioMetadata,
    carrier: &DecidableSet,
    horizon: u64,
    materialize: u64,
) -> Result<GenericCopy> {
    check_metadata(s, meta, horizon)?;
    let limit = horizon.max(materialize);
    let (dom, img, cmp, a, faithful) = match meta.case {
        CaseTag::InfiniteClass { id } => {
            let dom = carrier.elements_below(limit);
            let mut img = Vec::with_capacity(dom.len());
            scan_classes(s, DEFAULT_CLASS_SCAN, |item| {
                if let ScanItem::Infinite(x, got) = item {
                    if got == id {
                        img.push(x);
                    }
                }
                img.len() < dom.len()
            });
            (dom, img, two_class(carrier), carrier.clone(), true)
        }
        CaseTag::RepeatedSize { k } => {
            let a = block_carrier(k, &DecidableSet::squares());
            let starts: Vec<u64> = (0..limit.div_ceil(k)).map(|n| n * k).filter(|&x| a.contains(x)).collect();
            let mut targets: Vec<Vec<u64>> = Vec::with_capacity(starts.len());
            let mut ordinal = 0u64;
            scan_classes(s, DEFAULT_CLASS_SCAN, |item| {
                if let ScanItem::Finite(m) = item {
                    if m.len() as u64 == k {
                        // every other k-class stays outside the carrier's image
                        if ordinal.is_multiple_of(2) {
                            targets.push(m.to_vec());
                        }
                        ordinal += 1;
                    }
                }
                targets.len() < starts.len()
            });
            let dom: Vec<u64> = starts.iter().flat_map(|&x| x..x + k).collect();
            let img: Vec<u64> = targets.concat();
            (dom, img, blocks(k), a, true)
        }
        CaseTag::S1Subset => {
            let dom = carrier.elements_below(limit);
            let mut img = Vec::with_capacity(dom.len());
            let mut seen = std::collections::HashSet::new();
            scan_classes(s, DEFAULT_CLASS_SCAN, |item| {
                if let ScanItem::Finite(m) = item {
                    if seen.insert(m.len()) {
                        img.push(m[0]);
                    }
                }
                img.len() < dom.len()
            });
            (dom, img, identity_structure(), carrier.clone(), false)
        }
        CaseTag::None => {
            return Err(Error::Scenario("no case declared for the copy".into()));
        }
    };
    if img.len() != dom.len() {
        return Err(Error::Scenario(format!(
            "found {} of the {} target elements needed within the scan cap",
            img.len(),
            dom.len()
        )));
    }
    let a_fin = {
        let a = a.clone();
        DecidableSet::from_fn(format!("{} below {limit}", a.label()), move |x| x < limit && a.contains(x))
    };
    let perm: Arc<dyn Permutation> = Arc::new(ListPermutation::new(&dom, &img)?);
    let copy = pullback(s, Arc::clone(&perm), format!("generic-copy({})", s.provenance()));
    let witness = GenericWitness::on_carrier(a_fin.clone(), &cmp, faithful);
    Ok(GenericCopy { case: meta.case.clone(), copy, a: a_fin, cmp, witness, perm, materialized: limit })
}

/// A faithfully generically computable copy. The infinite-class and
/// repeated-size cases delegate to [`strongly_generic_copy`]; the s₁ case builds
/// a computable `(A, R)` with character from `k` and `f` on `carrier` and
/// matches each `R`-class with a class of `s` of the same size.
pub fn faithful_generic_copy(
    s: &EqStructure,
    meta: &ScenarioMetadata,
    k: &CharacterApprox,
    f: &S1Table,
    carrier: &DecidableSet,
    horizon: u64,
) -> Result<GenericCopy> {
    match meta.case {
        CaseTag::InfiniteClass { .. } | CaseTag::RepeatedSize { .. } => {
            strongly_generic_copy(s, meta, carrier, horizon, horizon)
        }
        CaseTag::None => Err(Error::Unsupported(
            "no infinite class, no repeated size and no s1 subset declared; no faithful copy exists".into(),
        )),
        CaseTag::S1Subset => {
            check_metadata(s, meta, horizon)?;
            let built = build_from_character(k, f, carrier)?;
            if built.limit < horizon {
                return Err(Error::Precondition(format!(
                    "the s1 table allocates only below {}, short of horizon {horizon}",
                    built.limit
                )));
            }
            // pair each R-class with an unused class of s of the same size
            let mut wanted: BTreeMap<usize, usize> = BTreeMap::new();
            for c in &built.classes {
                *wanted.entry(c.len()).or_default() += 1;
            }
            let mut pool: HashMap<usize, Vec<Vec<u64>>> = HashMap::new();
            let mut missing: usize = built.classes.len();
            scan_classes(s, DEFAULT_CLASS_SCAN, |item| {
                if let ScanItem::Finite(m) = item {
                    if let Some(w) = wanted.get_mut(&m.len()) {
                        if *w > 0 {
                            *w -= 1;
                            missing -= 1;
                            pool.entry(m.len()).or_default().push(m.to_vec());
                        }
                    }
                }
                missing > 0
            });
            if missing > 0 {
                return Err(Error::Scenario(format!("{missing} classes of the built character have no match in the input")));
            }
            for v in pool.values_mut() {
                v.reverse();
            }
            let (mut dom, mut img) = (Vec::new(), Vec::new());
            for c in &built.classes {
                let target = pool.get_mut(&c.len()).and_then(Vec::pop).expect("matched above");
                let mut c = c.clone();
                c.sort_unstable();
                dom.extend(c);
                img.extend(target);
            }
            let perm: Arc<dyn Permutation> = Arc::new(ListPermutation::new(&dom, &img)?);
            let copy = pullback(s, Arc::clone(&perm), format!("faithful-copy({})", s.provenance()));
            let a = built.structure.universe().cloned().expect("built structures have a universe");
            let witness = GenericWitness::on_carrier(a.clone(), &built.structure, true);
            Ok(GenericCopy {
                case: meta.case.clone(),
                copy,
                a,
                cmp: built.structure,
                witness,
                perm,
                materialized: built.limit,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// restriction to a computable set

#[derive(Debug, Clone)]
pub struct RestrictedWitness {
    pub y: DenseSubset,
    pub structure: EqStructure,
}

#[derive(Debug, Clone, Serialize)]
pub struct RestrictionCheck {
    pub horizon: u64,
    pub y_size: u64,
    pub y_outside_a: u64,
    pub disagreements: u64,
}

/// Extract a computable `Y ⊆ A` of upper density one from the witness's set and
/// decide the relation on `Y × Y` by `Φ`.
pub fn restrict_generic_witness(w: &GenericWitness, limit: u64, budget: u64, horizon: u64) -> Result<RestrictedWitness> {
    let y = extract_dense_subset(&w.enumeration(limit, budget), horizon)?;
    let ys = y.to_set(format!("Y({})", w.a.label()));
    let phi = Arc::clone(&w.phi);
    let structure = EqStructure::new(PhiRelation { phi, y: ys.clone(), below: y.decided_below() }, "phi-on-Y");
    let structure = restrict(&structure, &ys);
    Ok(RestrictedWitness { y, structure })
}

/// The relation `Φ` on a decided set `Y`, with classes read off by scanning `Y` below a bound.
struct PhiRelation {
    phi: Phi,
    y: DecidableSet,
    below: u64,
}

impl crate::structures::EqRelation for PhiRelation {
    fn class_of(&self, x: u64) -> Class {
        if x >= self.below {
            return Class::Unknown;
        }
        let mut out = Vec::new();
        for z in 0..self.below {
            if self.y.contains(z) {
                match (self.phi)(x, z) {
                    Some(true) => out.push(z),
                    Some(false) => {}
                    None => return Class::Unknown,
                }
            }
        }
        if out.binary_search(&x).is_err() {
            return Class::Unknown;
        }
        Class::Finite(out)
    }

    fn related(&self, x: u64, y: u64) -> Option<bool> {
        (self.phi)(x, y)
    }

    fn describe(&self) -> String {
        "phi-on-Y".into()
    }
}

pub fn check_restriction(r: &RestrictedWitness, w: &GenericWitness, copy: &EqStructure, horizon: u64) -> RestrictionCheck {
    let ys: Vec<u64> = (0..horizon).filter(|&x| r.y.contains(x) == Some(true)).collect();
    let outside = ys.iter().filter(|&&x| !w.a.contains(x)).count() as u64;
    let mut bad = 0u64;
    for &x in &ys {
        for &z in &ys {
            if r.structure.related(x, z) != copy.related(x, z) {
                bad += 1;
            }
        }
    }
    RestrictionCheck { horizon, y_size: ys.len() as u64, y_outside_a: outside, disagreements: bad }
}

// ---------------------------------------------------------------------------
// coarse constructions

#[derive(Debug, Clone, Serialize)]
pub struct CoarseAgreement {
    pub horizon: u64,
    pub checked: u64,
    /// Elements of `A_K` whose class differs between the two relations.
    pub mismatches: u64,
    pub faithful_in_canonical: FaithfulReport,
    pub faithful_in_r: FaithfulReport,
    /// Largest number of classes of one size in `R` below the horizon.
    pub max_count_per_size: usize,
    /// Sizes of complete `R`-classes outside `K`.
    pub sizes_outside_k: Vec<usize>,
    pub deficit_bound_holds: bool,
}

impl CoarseAgreement {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
            && self.faithful_in_canonical.faithful
            && self.faithful_in_r.faithful
            && self.max_count_per_size <= 2
            && self.sizes_outside_k.is_empty()
            && self.deficit_bound_holds
    }
}

#[derive(Debug, Clone)]
pub struct FaithfulCoarse {
    pub r: EqStructure,
    pub a_k: AkSet,
    pub agreement: CoarseAgreement,
}

/// `R`: the canonical classes whose size lies in `K`, plus the rest of ω carved,
/// in increasing order, into one class of each size in `K`.
pub fn build_faithful_coarse(k: &DecidableSet, horizon: u64) -> Result<FaithfulCoarse> {
    if horizon < 2 {
        return Err(Error::Precondition("horizon too small".into()));
    }
    let missing = (1..horizon).filter(|&x| !k.contains(x)).count() as u64;
    if missing == 0 {
        return Err(Error::Precondition(format!("K contains every size below {horizon}; it must be co-infinite")));
    }
    if 2 * missing > horizon {
        return Err(Error::Precondition(format!("K misses {missing} of the sizes below {horizon}; it must be dense")));
    }
    if k.contains(0) {
        return Err(Error::Precondition("K must contain only positive sizes".into()));
    }
    let rule = SizeRule::Linear { first: 1, step: 1 };
    let mut classes: Vec<TableClass> = Vec::new();
    let mut carve_sizes = (1u64..).filter(|&s| k.contains(s));
    let mut want = carve_sizes.next().expect("K is nonempty");
    let mut current: Vec<u64> = Vec::new();
    let mut i = 0u64;
    let cap = horizon.saturating_mul(64);
    loop {
        let (lo, hi) = (rule.prefix(i), rule.prefix(i + 1));
        if lo >= horizon && current.is_empty() || lo >= cap {
            break;
        }
        if k.contains(i + 1) {
            classes.push(TableClass::Finite((lo..hi).collect()));
        } else {
            for x in lo..hi {
                current.push(x);
                if current.len() as u64 == want {
                    classes.push(TableClass::Finite(std::mem::take(&mut current)));
                    want = carve_sizes.next().expect("K is infinite below the cap");
                }
            }
        }
        i += 1;
    }
    // a carved class still open at the cap stays unassigned
    let limit = rule.prefix(i);
    let table = TableRelation::new("faithful-coarse", limit, classes)?;
    let r = EqStructure::new(table, "faithful-coarse");
    let a_k = build_a_k(k, horizon);
    let e = canonical_all_sizes();
    let mut mismatches = 0u64;
    let mut checked = 0u64;
    for x in 0..horizon {
        if a_k.set.contains(x) {
            checked += 1;
            if r.class_of(x) != e.class_of(x) {
                mismatches += 1;
            }
        }
    }
    let faithful_in_canonical = is_faithful(&a_k.set, &e, horizon)?;
    let faithful_in_r = is_faithful(&a_k.set, &r, horizon)?;
    let ch = Snapshot::take(&r, horizon)?.character();
    let agreement = CoarseAgreement {
        horizon,
        checked,
        mismatches,
        faithful_in_canonical,
        faithful_in_r,
        max_count_per_size: ch.entries.values().map(|e| e.count).max().unwrap_or(0),
        sizes_outside_k: ch.entries.keys().copied().filter(|&s| !k.contains(s as u64)).collect(),
        deficit_bound_holds: a_k.checkpoints.iter().all(|c| c.holds),
    };
    Ok(FaithfulCoarse { r, a_k, agreement })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalOmission {
    /// 1-based position `i` of the oracle in the registry.
    pub i: u64,
    pub label: String,
    pub omitted: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityCheckpoint {
    pub i: u32,
    pub n: u64,
    pub count: u64,
    pub bound: u64,
    #[serde(with = "rational::serde_p_q")]
    pub density: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct DiagonalK {
    pub k: DecidableSet,
    pub omissions: Vec<DiagonalOmission>,
    pub checkpoints: Vec<DensityCheckpoint>,
}

/// `K = ω` minus, for the `i`-th registered oracle (1-based), the least member
/// above `2^i` at the oracle's budget, searching below `search_cap`.
pub fn diagonal_dense_k(registry: &OracleRegistry<LimitApproxOracle>, horizon: u64, search_cap: u64) -> DiagonalK {
    let mut omissions = Vec::new();
    let mut omitted = Vec::new();
    for (idx, s) in registry.iter() {
        let i = idx as u64 + 1;
        let value = if i < 63 { ((1u64 << i) + 1..search_cap).find(|&x| s.member(x)) } else { None };
        omitted.extend(value);
        omissions.push(DiagonalOmission { i, label: s.label().to_string(), omitted: value });
    }
    let removed = DecidableSet::finite("omitted", omitted);
    let k = removed.complement().relabel("diagonal-K");
    let mut checkpoints = Vec::new();
    let mut i = 0u32;
    while i < 63 && (1u64 << i) <= horizon {
        let n = 1u64 << i;
        let count = k.count_below(n);
        let bound = n - u64::from(i).min(n);
        checkpoints.push(DensityCheckpoint { i, n, count, bound, density: ratio(count, n), holds: count >= bound });
        i += 1;
    }
    DiagonalK { k, omissions, checkpoints }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Acted,
    /// Metadata declares a class size of positive density.
    NoAction,
    /// No fresh residue reached the density bound.
    Stalled,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionRecord {
    pub stage: u64,
    pub structure: String,
    pub modulus: u64,
    pub outcome: Outcome,
    pub residue: Option<u64>,
    pub preserved: Option<u64>,
    /// Residues mod `modulus` already covered by earlier removals.
    pub covered_residues: u64,
    #[serde(with = "rational::serde_p_q_opt")]
    pub upper_density: Option<Rational>,
    pub witness_point: Option<u64>,
    /// Density of `{x : |[x]| ∈ K}` at the witness point, with the final `K`.
    #[serde(with = "rational::serde_p_q_opt")]
    pub coverage: Option<Rational>,
    /// Mass of the preserved size plus elements whose class size was not yet stable.
    #[serde(with = "rational::serde_p_q_opt")]
    pub epsilon: Option<Rational>,
    pub bound_holds: Option<bool>,
    /// Largest density of a single size at the horizon, for comparison with the metadata.
    #[serde(with = "rational::serde_p_q")]
    pub max_single_size_density: Rational,
    pub metadata_warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AntiCoarseK {
    pub k: DecidableSet,
    pub removed: Vec<(u64, u64)>,
    pub actions: Vec<ActionRecord>,
}

/// A structure to diagonalize against, with its declared positive-density size.
#[derive(Debug, Clone)]
pub struct CeStructure {
    pub pairs: PairEnumerationOracle,
    pub positive_density_size: Option<u64>,
}

fn class_sizes(pairs: &PairEnumerationOracle, universe: u64) -> Result<Vec<u64>> {
    let mut uf = UnionFind::new(universe as usize);
    for (x, y) in pairs.snapshot(pairs.budget())? {
        if x < universe && y < universe {
            uf.union(x as usize, y as usize);
        }
    }
    Ok((0..universe as usize).map(|x| uf.set_size(x) as u64).collect())
}

fn removed_contains(removed: &[(u64, u64)], m: u64) -> bool {
    removed.iter().any(|&(modulus, j)| m % modulus == j && m != modulus + j)
}

/// Stage `t+1` handles the `t`-th structure with modulus `2^{t+2}`: unless a
/// positive-density size is declared, pick the residue `j` (fresh with respect
/// to earlier removals) whose type set `{x : |[x]| ≡ j}` has the largest
/// upper-density estimate (power-of-two checkpoints from 16 to the horizon),
/// require it to reach `2^{−t−2}`, and remove `{m ≡ j}` from `K` except `2^{t+2} + j`.
pub fn anti_coarse_k(structures: &[CeStructure], horizon: u64) -> Result<AntiCoarseK> {
    let mut removed: Vec<(u64, u64)> = Vec::new();
    let mut actions = Vec::new();
    let mut sizes_by_structure = Vec::new();
    for (t, st) in structures.iter().enumerate() {
        let t = t as u64;
        if t >= 58 {
            return Err(Error::Precondition("too many structures for 64-bit moduli".into()));
        }
        let modulus = 1u64 << (t + 2);
        let sizes = class_sizes(&st.pairs, horizon)?;
        let wide = class_sizes(&st.pairs, horizon.saturating_mul(2))?;
        let unstable: Vec<bool> = (0..horizon as usize).map(|x| sizes[x] != wide[x]).collect();
        let mut per_size: HashMap<u64, u64> = HashMap::new();
        for &s in &sizes {
            *per_size.entry(s).or_default() += 1;
        }
        let max_single = ratio(per_size.values().copied().max().unwrap_or(0), horizon.max(1));
        let covered = removed.iter().map(|&(m, _)| modulus / m).sum::<u64>();
        let mut rec = ActionRecord {
            stage: t + 1,
            structure: st.pairs.label().to_string(),
            modulus,
            outcome: Outcome::NoAction,
            residue: None,
            preserved: None,
            covered_residues: covered,
            upper_density: None,
            witness_point: None,
            coverage: None,
            epsilon: None,
            bound_holds: None,
            max_single_size_density: max_single,
            metadata_warning: None,
        };
        let floor = ratio(1, modulus);
        if st.positive_density_size.is_some() {
            if max_single < floor {
                rec.metadata_warning = Some("declared positive-density size not visible at the horizon".into());
            }
            actions.push(rec);
            sizes_by_structure.push(None);
            continue;
        }
        // best fresh residue by upper-density estimate
        let mut best: Option<(Rational, u64, u64)> = None; // (estimate, j, witness n)
        for j in 0..modulus {
            if removed.iter().any(|&(m, r)| j % m == r) {
                continue;
            }
            let mut count = 0u64;
            let mut n_next = 16u64;
            let (mut est, mut at) = (Rational::from_integer(0), 0u64);
            for (x, &s) in sizes.iter().enumerate() {
                if s % modulus == j {
                    count += 1;
                }
                if x as u64 + 1 == n_next {
                    let d = ratio(count, n_next);
                    if d > est {
                        est = d;
                        at = n_next;
                    }
                    n_next *= 2;
                }
            }
            if best.as_ref().is_none_or(|(b, _, _)| est > *b) {
                best = Some((est, j, at));
            }
        }
        match best {
            Some((est, j, at)) if est >= floor && at > 0 => {
                rec.outcome = Outcome::Acted;
                rec.residue = Some(j);
                rec.preserved = Some(modulus + j);
                rec.upper_density = Some(est);
                rec.witness_point = Some(at);
                removed.push((modulus, j));
            }
            Some((est, _, _)) => {
                rec.outcome = Outcome::Stalled;
                rec.upper_density = Some(est);
            }
            None => rec.outcome = Outcome::Stalled,
        }
        actions.push(rec);
        sizes_by_structure.push(Some((sizes, unstable)));
    }
    let final_removed = removed.clone();
    let k = DecidableSet::from_fn("anti-coarse-K", move |m| !removed_contains(&final_removed, m));
    // coverage at witness points, with the final K
    for (rec, data) in actions.iter_mut().zip(&sizes_by_structure) {
        let (Some((sizes, unstable)), Some(n), Some(j)) = (data, rec.witness_point, rec.residue) else { continue };
        let preserved = rec.modulus + j;
        let (mut covered, mut slack) = (0u64, 0u64);
        for x in 0..n as usize {
            if k.contains(sizes[x]) {
                covered += 1;
            }
            if sizes[x] == preserved || unstable[x] {
                slack += 1;
            }
        }
        let coverage = ratio(covered, n);
        let epsilon = ratio(slack, n);
        let bound = Rational::from_integer(1) - ratio(1, rec.modulus) + epsilon;
        rec.coverage = Some(coverage);
        rec.epsilon = Some(epsilon);
        rec.bound_holds = Some(coverage <= bound);
    }
    Ok(AntiCoarseK { k, removed, actions })
}

impl AntiCoarseK {
    /// Preserved elements of acted stages; distinct and all in `K`.
    pub fn preserved(&self) -> Vec<u64> {
        self.actions.iter().filter_map(|a| a.preserved).collect()
    }
}

/// Does `s` have a class whose members straddle `y`? Used by demos that show a
/// computable set is not faithful.
pub fn partial_class_witness(y: &DecidableSet, s: &EqStructure, horizon: u64) -> Result<Option<(u64, u64)>> {
    Ok(is_faithful(y, s, horizon)?.counterexample)
}

/// Whether a set looks like a union of `k`-blocks below a bound.
pub fn is_block_union(a: &DecidableSet, k: u64, below: u64) -> bool {
    (0..below).all(|x| a.contains(x) == a.contains(x - x % k))
}

/// Perfect squares are the default holes of every carrier.
pub fn default_carrier() -> DecidableSet {
    DecidableSet::non_squares()
}
