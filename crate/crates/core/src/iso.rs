//! Isomorphisms between (1,2)-structures: partial (generic) isomorphisms for
//! generic character {2}, coarse ones for generic character {1}, the density-q
//! builder, the staged subrelation, the interleaved bijection and the weakly
//! coarse composition, plus the sparse simple set behind the non-isomorphism demo.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::enumeration::{EnumerationOracle, OracleRegistry, PairEnumerationOracle, SetGenerator};
use crate::error::{Error, Result};
use crate::rational::{self, pow2_recip, ratio, Rational};
use crate::structures::{canonical_12, Class, EqRelation, EqStructure, PairsMode};

/// Tolerance used to cross-check declared densities against measured ones.
#[derive(Debug, Clone)]
pub struct IsoOptions {
    pub tolerance: Rational,
    /// Downgrade declared-density mismatches from errors to warnings.
    pub lenient: bool,
}

impl Default for IsoOptions {
    fn default() -> Self {
        Self { tolerance: ratio(1, 20), lenient: false }
    }
}

/// Partner of `x` in a structure whose classes have size one or two.
fn partner(s: &EqStructure, x: u64) -> Result<Option<u64>> {
    match s.class_of(x) {
        Class::Finite(m) if m.len() == 1 => Ok(None),
        Class::Finite(m) if m.len() == 2 => Ok(Some(if m[0] == x { m[1] } else { m[0] })),
        other => Err(Error::Precondition(format!(
            "{} is not a (1,2)-structure at {x}: {other:?}",
            s.provenance()
        ))),
    }
}

fn partners(s: &EqStructure, below: u64) -> Result<Vec<Option<u64>>> {
    (0..below).map(|x| partner(s, x)).collect()
}

/// Least element of the class of `x`, used as a class label.
fn class_label(s: &EqStructure, x: u64) -> Result<u64> {
    match s.class_of(x) {
        Class::Finite(m) => Ok(m[0]),
        Class::Infinite { id } => Ok(u64::MAX - id.min(u64::MAX / 2)),
        Class::Unknown => Err(Error::Precondition(format!("class of {x} in {} is unknown", s.provenance()))),
    }
}

fn density_of(count: usize, n: u64) -> Rational {
    ratio(count as u64, n.max(1))
}

fn declared_check(what: &str, measured: Rational, floor: Rational, opts: &IsoOptions, warnings: &mut Vec<String>) -> Result<()> {
    if measured + opts.tolerance < floor {
        let msg = format!("{what}: measured density {} is below the declared {}", rational::to_p_q(&measured), rational::to_p_q(&floor));
        if opts.lenient {
            warnings.push(msg);
        } else {
            return Err(Error::Precondition(msg));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// partial isomorphisms

#[derive(Debug, Clone, Serialize)]
pub struct PartialIsoWitness {
    pub source: String,
    pub target: String,
    pub horizon: u64,
    /// The table of `θ`; its keys are the domain.
    pub forward: BTreeMap<u64, u64>,
    #[serde(skip)]
    inverse: BTreeMap<u64, u64>,
    #[serde(with = "rational::serde_p_q")]
    pub domain_density: Rational,
    #[serde(with = "rational::serde_p_q")]
    pub range_density: Rational,
    pub warnings: Vec<String>,
}

impl PartialIsoWitness {
    pub fn from_table(source: &str, target: &str, horizon: u64, forward: BTreeMap<u64, u64>) -> Result<Self> {
        let mut inverse = BTreeMap::new();
        for (&x, &y) in &forward {
            if let Some(prev) = inverse.insert(y, x) {
                return Err(Error::InvariantViolation(format!("θ({prev}) = θ({x}) = {y}")));
            }
        }
        let domain_density = density_of(forward.range(..horizon).count(), horizon);
        let range_density = density_of(inverse.range(..horizon).count(), horizon);
        Ok(Self {
            source: source.into(),
            target: target.into(),
            horizon,
            forward,
            inverse,
            domain_density,
            range_density,
            warnings: Vec::new(),
        })
    }

    pub fn get(&self, x: u64) -> Option<u64> {
        self.forward.get(&x).copied()
    }

    pub fn inverse_get(&self, y: u64) -> Option<u64> {
        self.inverse.get(&y).copied()
    }

    pub fn invert(&self) -> Result<Self> {
        let mut w = Self::from_table(&self.target, &self.source, self.horizon, self.inverse.clone())?;
        w.warnings = self.warnings.clone();
        Ok(w)
    }

    /// `other ∘ self`, defined where both steps are.
    pub fn then(&self, other: &Self) -> Result<Self> {
        let table = self.forward.iter().filter_map(|(&x, &y)| other.get(y).map(|z| (x, z))).collect();
        let mut w = Self::from_table(&self.source, &other.target, self.horizon.min(other.horizon), table)?;
        w.warnings = self.warnings.iter().chain(&other.warnings).cloned().collect();
        Ok(w)
    }

    /// Merge a partial map for `f` with a partial map for `f⁻¹`: `φ(a)` is
    /// `θ(a)` or the `b` with `ψ(b) = a`. Disagreement means the two do not
    /// come from the same isomorphism.
    pub fn merge(theta: &Self, psi: &Self) -> Result<Self> {
        let mut table = theta.forward.clone();
        for (&b, &a) in &psi.forward {
            match table.get(&a) {
                Some(&v) if v != b => {
                    return Err(Error::InvariantViolation(format!("θ({a}) = {v} but ψ({b}) = {a}")));
                }
                Some(_) => {}
                None => {
                    table.insert(a, b);
                }
            }
        }
        Self::from_table(&theta.source, &theta.target, theta.horizon.min(psi.horizon), table)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialIsoCheck {
    pub horizon: u64,
    pub domain_below: u64,
    pub pairs_checked: u64,
    pub relation_failures: u64,
    pub first_failure: Option<(u64, u64)>,
}

impl PartialIsoCheck {
    pub fn passed(&self) -> bool {
        self.relation_failures == 0
    }
}

/// `x R y ⟺ θx R θy` for every pair in `dom(θ) ∩ horizon`.
pub fn verify_partial_iso(w: &PartialIsoWitness, source: &EqStructure, target: &EqStructure, horizon: u64) -> Result<PartialIsoCheck> {
    let dom: Vec<(u64, u64)> = w.forward.range(..horizon).map(|(&x, &y)| (x, y)).collect();
    let mut lab = Vec::with_capacity(dom.len());
    for &(x, y) in &dom {
        lab.push((class_label(source, x)?, class_label(target, y)?));
    }
    let (mut checked, mut bad, mut first) = (0u64, 0u64, None);
    for i in 0..dom.len() {
        for j in i + 1..dom.len() {
            checked += 1;
            if (lab[i].0 == lab[j].0) != (lab[i].1 == lab[j].1) {
                bad += 1;
                first.get_or_insert((dom[i].0, dom[j].0));
            }
        }
    }
    Ok(PartialIsoCheck { horizon, domain_below: dom.len() as u64, pairs_checked: checked, relation_failures: bad, first_failure: first })
}

/// Size-two classes of `a` in order of enumeration, each as `(min, max)`.
fn enumerated_pairs(pairs: &PairEnumerationOracle, want: usize) -> Vec<(u64, u64)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for stage in 0..=pairs.budget() {
        let mut arrived = pairs.arrivals(stage);
        arrived.sort_unstable();
        for (x, y) in arrived {
            if x != y && seen.insert((x.min(y), x.max(y))) {
                out.push((x.min(y), x.max(y)));
                if out.len() == want {
                    return out;
                }
            }
        }
    }
    out
}

/// Canonical dense pairs `{c_n, d_n}` with `d_n` below the horizon.
fn canonical_pairs(horizon: u64) -> Vec<(u64, u64)> {
    let c = canonical_12(PairsMode::DensePairs);
    (0..horizon)
        .filter_map(|x| match c.class_of(x) {
            Class::Finite(m) if m.len() == 2 && m[0] == x && m[1] < horizon => Some((m[0], m[1])),
            _ => None,
        })
        .collect()
}

/// `θ(a_n) = c_n`, `θ(b_n) = d_n`: the `n`-th enumerated pair of `a` onto the
/// `n`-th canonical dense pair, for the canonical pairs below the horizon.
pub fn generic_iso_char2(
    a: &EqStructure,
    pairs: &PairEnumerationOracle,
    declared: &[u64],
    horizon: u64,
    opts: &IsoOptions,
) -> Result<PartialIsoWitness> {
    if declared != [2] {
        return Err(Error::Precondition(format!("generic character {{2}} required, {declared:?} declared")));
    }
    let mut warnings = Vec::new();
    let p = partners(a, horizon)?;
    let measured = density_of(p.iter().filter(|q| q.is_some()).count(), horizon);
    declared_check("size-two part", measured, Rational::one(), opts, &mut warnings)?;
    let targets = canonical_pairs(horizon);
    let sources = enumerated_pairs(pairs, targets.len());
    if sources.len() < targets.len() {
        warnings.push(format!(
            "pair enumeration gave {} of {} pairs within budget {}",
            sources.len(),
            targets.len(),
            pairs.budget()
        ));
    }
    let mut table = BTreeMap::new();
    for (&(a0, b0), &(c, d)) in sources.iter().zip(&targets) {
        table.insert(a0, c);
        table.insert(b0, d);
    }
    let mut w = PartialIsoWitness::from_table(a.provenance(), "canonical-12(dense-pairs)", horizon, table)?;
    w.warnings = warnings;
    Ok(w)
}

// ---------------------------------------------------------------------------
// weakly coarse witnesses

#[derive(Debug, Clone, Serialize)]
pub struct WeakCoarseWitness {
    pub horizon: u64,
    /// `θ(x)` for `x` below the horizon.
    pub theta: Vec<u64>,
    /// Membership in `C` below the horizon.
    pub c: Vec<bool>,
    /// The set bijection `f` below the horizon.
    pub f: Vec<u64>,
    #[serde(with = "rational::serde_p_q")]
    pub density_c: Rational,
    /// Density at the horizon of `f[C]`.
    #[serde(with = "rational::serde_p_q")]
    pub density_fc: Rational,
    pub warnings: Vec<String>,
}

impl WeakCoarseWitness {
    fn new(horizon: u64, theta: Vec<u64>, c: Vec<bool>, f: Vec<u64>, warnings: Vec<String>) -> Self {
        let density_c = density_of(c.iter().filter(|&&b| b).count(), horizon);
        let fc = (0..horizon as usize).filter(|&x| c[x] && f[x] < horizon).count();
        Self { horizon, theta, c, f, density_c, density_fc: density_of(fc, horizon), warnings }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakCoarseCheck {
    pub horizon: u64,
    pub f_theta_disagreements: u64,
    pub f_injective: bool,
    /// Pairs in `C × C` where `θ` fails to preserve the relation.
    pub theta_failures: u64,
    pub pairs_checked: u64,
    #[serde(with = "rational::serde_p_q")]
    pub density_c: Rational,
    #[serde(with = "rational::serde_p_q")]
    pub density_fc: Rational,
}

impl WeakCoarseCheck {
    pub fn passed(&self) -> bool {
        self.f_theta_disagreements == 0 && self.f_injective && self.theta_failures == 0
    }
}

/// Exhaustive check on `C × C` below the horizon.
pub fn verify_weak_coarse(w: &WeakCoarseWitness, a: &EqStructure, b: &EqStructure) -> Result<WeakCoarseCheck> {
    let h = w.horizon as usize;
    let disagreements = (0..h).filter(|&x| w.c[x] && w.f[x] != w.theta[x]).count() as u64;
    let injective = w.f.iter().collect::<BTreeSet<_>>().len() == w.f.len();
    let members: Vec<usize> = (0..h).filter(|&x| w.c[x]).collect();
    let mut lab = Vec::with_capacity(members.len());
    for &x in &members {
        lab.push((class_label(a, x as u64)?, class_label(b, w.theta[x])?, w.theta[x]));
    }
    let (mut checked, mut bad) = (0u64, 0u64);
    for i in 0..lab.len() {
        for j in i + 1..lab.len() {
            checked += 1;
            // θ must be injective on C and preserve the relation both ways
            if lab[i].2 == lab[j].2 || (lab[i].0 == lab[j].0) != (lab[i].1 == lab[j].1) {
                bad += 1;
            }
        }
    }
    Ok(WeakCoarseCheck {
        horizon: w.horizon,
        f_theta_disagreements: disagreements,
        f_injective: injective,
        theta_failures: bad,
        pairs_checked: checked,
        density_c: w.density_c,
        density_fc: w.density_fc,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoarseChar1 {
    pub witness: WeakCoarseWitness,
    /// `|U_A ∖ U| − |U_B ∖ U|` at the horizon.
    pub imbalance: i64,
    /// Singletons of both structures at or above the horizon used as targets,
    /// and so removed from `V`.
    pub trimmed: Vec<u64>,
    /// Classes of `a` meeting the horizon whose image under `f` is a class of the same size.
    pub classes_matched: u64,
}

/// Identity on `U = U_A ∩ U_B` below the horizon, extended off `U` by greedy
/// class matching (least available class of `b` of the same size).
pub fn coarse_iso_char1(
    a: &EqStructure,
    b: &EqStructure,
    declared: (&[u64], &[u64]),
    horizon: u64,
    scan_cap: u64,
    opts: &IsoOptions,
) -> Result<CoarseChar1> {
    if declared.0 != [1] || declared.1 != [1] {
        return Err(Error::Precondition(format!("generic character {{1}} required, {:?} declared", declared)));
    }
    let size = |s: &EqStructure, x: u64| -> Result<usize> {
        s.class_of(x).len().ok_or_else(|| Error::Precondition(format!("class of {x} in {} is not finite", s.provenance())))
    };
    let mut warnings = Vec::new();
    let h = horizon as usize;
    let mut ua = vec![false; h];
    let mut ub = vec![false; h];
    for x in 0..horizon {
        ua[x as usize] = size(a, x)? == 1;
        ub[x as usize] = size(b, x)? == 1;
    }
    declared_check("type-one part of a", density_of(ua.iter().filter(|&&v| v).count(), horizon), Rational::one(), opts, &mut warnings)?;
    declared_check("type-one part of b", density_of(ub.iter().filter(|&&v| v).count(), horizon), Rational::one(), opts, &mut warnings)?;
    let v: Vec<bool> = (0..h).map(|x| ua[x] && ub[x]).collect();
    let imbalance = (0..h).filter(|&x| ua[x] && !ub[x]).count() as i64 - (0..h).filter(|&x| ub[x] && !ua[x]).count() as i64;

    // classes of a meeting the horizon and not inside V, in order of least element
    let mut a_classes: Vec<Vec<u64>> = Vec::new();
    for x in 0..horizon {
        if v[x as usize] {
            continue;
        }
        // members of V are singletons, so every other class is reached at its least element
        if let Class::Finite(m) = a.class_of(x) {
            if m[0] == x {
                a_classes.push(m);
            }
        }
    }
    let mut needed: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &a_classes {
        *needed.entry(c.len()).or_default() += 1;
    }
    let mut pool: HashMap<usize, std::collections::VecDeque<Vec<u64>>> = HashMap::new();
    let mut missing: usize = a_classes.len();
    let mut trimmed = Vec::new();
    let mut y = 0u64;
    while missing > 0 && y < scan_cap {
        if let Class::Finite(m) = b.class_of(y) {
            let skip = m.len() == 1 && y < horizon && v[y as usize];
            if m[0] == y && !skip {
                if let Some(n) = needed.get_mut(&m.len()) {
                    if *n > 0 {
                        *n -= 1;
                        missing -= 1;
                        if m.len() == 1 && y >= horizon && size(a, y)? == 1 {
                            trimmed.push(y);
                        }
                        pool.entry(m.len()).or_default().push_back(m);
                    }
                }
            }
        }
        y += 1;
    }
    if missing > 0 {
        return Err(Error::Scenario(format!("{missing} classes of a have no same-size partner in b below {scan_cap}")));
    }
    let theta: Vec<u64> = (0..horizon).collect();
    let mut f = theta.clone();
    let mut matched = 0u64;
    for c in &a_classes {
        let target = pool.get_mut(&c.len()).and_then(|q| q.pop_front()).expect("counted above");
        for (&x, &y) in c.iter().zip(&target) {
            if x < horizon {
                f[x as usize] = y;
            }
        }
        matched += 1;
    }
    let witness = WeakCoarseWitness::new(horizon, theta, v, f, warnings);
    Ok(CoarseChar1 { witness, imbalance, trimmed, classes_matched: matched })
}

// ---------------------------------------------------------------------------
// density-q structures

#[derive(Debug, Clone, Serialize)]
pub struct DyadicSchedule {
    #[serde(with = "rational::serde_p_q_vec")]
    pub q: Vec<Rational>,
    /// Declared limit.
    #[serde(with = "rational::serde_p_q")]
    pub limit: Rational,
}

impl DyadicSchedule {
    pub fn new(q: Vec<Rational>, limit: Rational) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Schedule("empty schedule".into()));
        }
        for (n, r) in q.iter().enumerate() {
            if *r <= Rational::zero() || *r >= Rational::one() {
                return Err(Error::Schedule(format!("q_{n} = {} is not strictly between 0 and 1", rational::to_p_q(r))));
            }
            if !rational::is_dyadic(r) {
                return Err(Error::Schedule(format!("q_{n} = {} is not dyadic", rational::to_p_q(r))));
            }
        }
        Ok(Self { q, limit })
    }

    pub fn constant(q: Rational, len: usize) -> Result<Self> {
        Self::new(vec![q; len], q)
    }

    /// `q_n = q + (−1)^n 2^{−(n+offset)}`.
    pub fn oscillating(q: Rational, offset: u32, len: usize) -> Result<Self> {
        let v = (0..len)
            .map(|n| {
                let d = pow2_recip(n as u32 + offset);
                if n % 2 == 0 {
                    q + d
                } else {
                    q - d
                }
            })
            .collect();
        Self::new(v, q)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityCheckpoint {
    pub n: usize,
    pub s_n: u64,
    #[serde(with = "rational::serde_p_q")]
    pub q_n: Rational,
    /// Type-one elements below `s_n`, counted from the built structure.
    pub singletons: u64,
    pub exact: bool,
}

#[derive(Debug, Clone)]
struct Block {
    start: u64,
    end: u64,
    /// Singletons in the block; the rest are pairs.
    singles: u64,
    /// Singletons first (the base block) or spread evenly.
    interleaved: bool,
}

impl Block {
    fn units(&self) -> u64 {
        self.singles + (self.end - self.start - self.singles) / 2
    }

    /// Singletons among the first `t` units.
    fn singles_before(&self, t: u64) -> u64 {
        if self.interleaved {
            (t as u128 * self.singles as u128 / self.units() as u128) as u64
        } else {
            t.min(self.singles)
        }
    }

    fn elements_before(&self, t: u64) -> u64 {
        2 * t - self.singles_before(t)
    }

    fn class_of(&self, x: u64) -> Vec<u64> {
        let o = x - self.start;
        // largest t with elements_before(t) ≤ o
        let (mut lo, mut hi) = (0u64, self.units());
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.elements_before(mid) <= o {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let first = self.start + self.elements_before(lo);
        if self.singles_before(lo + 1) > self.singles_before(lo) {
            vec![first]
        } else {
            vec![first, first + 1]
        }
    }
}

struct DensityQ {
    blocks: Vec<Block>,
}

impl EqRelation for DensityQ {
    fn class_of(&self, x: u64) -> Class {
        let i = self.blocks.partition_point(|b| b.end <= x);
        match self.blocks.get(i) {
            Some(b) => Class::Finite(b.class_of(x)),
            None => Class::Unknown,
        }
    }

    fn describe(&self) -> String {
        "density-q".into()
    }
}

/// Numerator and denominator of a dyadic rational.
fn parts(q: &Rational) -> (u64, u64) {
    (*q.numer() as u64, *q.denom() as u64)
}

/// The staged (1,2)-structure whose type-one part has exactly `q_n · s_n`
/// elements below each checkpoint `s_n`. The schedule's last value repeats
/// until the checkpoints would pass `2^62`. Inside each refinement block the
/// new singletons are spread evenly among the new pairs.
pub fn build_12_density_q(sched: &DyadicSchedule, horizon: u64) -> Result<(EqStructure, Vec<DensityCheckpoint>)> {
    const CAP: u64 = 1 << 62;
    let (i0, j0) = parts(&sched.q[0]);
    let mut blocks = vec![Block { start: 0, end: 2 * j0, singles: 2 * i0, interleaved: false }];
    let mut s = 2 * j0;
    let mut ones = 2 * i0;
    let mut qs = vec![(sched.q[0], s, ones)];
    let mut n = 0usize;
    loop {
        let q_n = qs[n].0;
        let next = sched.q.get(n + 1).copied().unwrap_or(*sched.q.last().unwrap());
        let (i, j) = parts(&next);
        // i − q_n > 0 and j − i − 1 + q_n > 0, as rationals
        if Rational::from_integer(i as i128) - q_n <= Rational::zero()
            || Rational::from_integer(j as i128 - i as i128 - 1) + q_n <= Rational::zero()
        {
            return Err(Error::Schedule(format!("step {} to q = {} violates positivity", n + 1, rational::to_p_q(&next))));
        }
        let Some(s_next) = s.checked_mul(j).filter(|&v| v <= CAP) else { break };
        let singles = i * s - ones;
        blocks.push(Block { start: s, end: s_next, singles, interleaved: true });
        s = s_next;
        ones = i * (s / j);
        qs.push((next, s, ones));
        n += 1;
        if n + 1 >= sched.q.len() && s > horizon.saturating_mul(4) {
            break;
        }
    }
    let st = EqStructure::new(DensityQ { blocks }, "density-q");
    let mut checkpoints = Vec::new();
    let mut counted = 0u64;
    let mut x = 0u64;
    for (idx, &(q, s_n, expected)) in qs.iter().enumerate() {
        if s_n > horizon.max(1 << 16) {
            break;
        }
        while x < s_n {
            if st.class_of(x).len() == Some(1) {
                counted += 1;
            }
            x += 1;
        }
        let exact = Rational::from_integer(counted as i128) == q * Rational::from_integer(s_n as i128) && counted == expected;
        checkpoints.push(DensityCheckpoint { n: idx, s_n, q_n: q, singletons: counted, exact });
    }
    Ok((st, checkpoints))
}

/// A (1,2)-structure with type-one density 1/2 and partners far apart: 0 and the
/// odd numbers are singletons, and `2^a·o` (`o` odd, `a` odd) is paired with `2^{a+1}·o`.
pub fn doubling_pairs() -> EqStructure {
    let rel = crate::structures::FnRelation::new("doubling-pairs", |x| {
        if x == 0 || x % 2 == 1 {
            return Class::Finite(vec![x]);
        }
        if x.trailing_zeros() % 2 == 1 {
            match x.checked_mul(2) {
                Some(y) => Class::Finite(vec![x, y]),
                None => Class::Unknown,
            }
        } else {
            Class::Finite(vec![x / 2, x])
        }
    });
    EqStructure::new(rel, "doubling-pairs")
}

/// Pullback of `base` along `x ↦ m + (3t mod m)` for `x = m + t` in each dyadic
/// block `[m, 2m)`. Adjacent partners end up about a third of a block apart
/// while counts below each power of two are unchanged.
pub fn dyadic_shuffle(base: &EqStructure) -> EqStructure {
    const INV3: u64 = 0xAAAA_AAAA_AAAA_AAAB; // 3⁻¹ mod 2^64
    fn map(x: u64, mult: u64) -> u64 {
        if x < 2 {
            return x;
        }
        let m = 1u64 << x.ilog2();
        m + ((x - m).wrapping_mul(mult) & (m - 1))
    }
    let b = base.clone();
    let rel = crate::structures::FnRelation::new(format!("dyadic-shuffle({})", base.provenance()), move |x| {
        match b.class_of(map(x, 3)) {
            Class::Finite(m) => {
                let mut v: Vec<u64> = m.into_iter().map(|y| map(y, INV3)).collect();
                v.sort_unstable();
                Class::Finite(v)
            }
            other => other,
        }
    });
    EqStructure::new(rel, format!("dyadic-shuffle({})", base.provenance()))
}

// ---------------------------------------------------------------------------
// staged subrelation

/// A real in `(0,1)` given exactly or by approximants with `|q_i − q| ≤ 2^{−i}`.
#[derive(Debug, Clone)]
pub enum RealApprox {
    Exact(Rational),
    Sequence(Vec<Rational>),
}

impl RealApprox {
    pub fn point(&self) -> Rational {
        match self {
            Self::Exact(q) => *q,
            Self::Sequence(v) => *v.last().expect("nonempty"),
        }
    }

    /// Threshold used to find `n_i`; never exceeds `q + 2^{−i}`.
    fn threshold(&self, i: u32) -> Rational {
        match self {
            Self::Exact(q) => q + pow2_recip(i),
            Self::Sequence(v) => {
                let k = (i as usize + 1).min(v.len() - 1);
                v[k] + pow2_recip(i + 1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BStatus {
    Single,
    Paired(u64),
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum B1Reason {
    /// No partner below `s_{i+1}`.
    NoPartner,
    /// Partner already in `B(1)`.
    PartnerInB1,
}

#[derive(Debug, Clone, Serialize)]
pub struct B1Entry {
    pub x: u64,
    pub step: u32,
    pub reason: B1Reason,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub i: u32,
    pub n_i: u64,
    pub s_i: u64,
    #[serde(with = "rational::serde_p_q_opt")]
    pub threshold: Option<Rational>,
    /// `|A^{s_i}(1) ∩ n_i| / n_i`.
    #[serde(with = "rational::serde_p_q")]
    pub approx_density: Rational,
    /// `|A(1) ∩ n_i| / n_i`.
    #[serde(with = "rational::serde_p_q")]
    pub q_i: Rational,
    #[serde(with = "rational::serde_p_q")]
    pub e_i: Rational,
    /// `q − q_i + 2^{−i}` (with the approximant standing in for `q` when `q` is not exact).
    #[serde(with = "rational::serde_p_q")]
    pub bound: Rational,
    pub holds: bool,
    /// Density of the elements below `n_i` whose classes differ between `R_B` and `R`.
    #[serde(with = "rational::serde_p_q")]
    pub divergence: Rational,
}

#[derive(Debug, Clone)]
pub struct StagedSubrelation {
    pub structure: EqStructure,
    pub status: Vec<Option<BStatus>>,
    pub log: Vec<B1Entry>,
    pub stages: Vec<StageRecord>,
    /// Every element below this is decided.
    pub decided_below: u64,
}

impl StagedSubrelation {
    pub fn status(&self, x: u64) -> Option<BStatus> {
        self.status.get(x as usize).copied().flatten()
    }
}

struct BRelation {
    status: Vec<Option<BStatus>>,
}

impl EqRelation for BRelation {
    fn class_of(&self, x: u64) -> Class {
        match self.status.get(x as usize).copied().flatten() {
            Some(BStatus::Single) => Class::Finite(vec![x]),
            Some(BStatus::Paired(y)) => Class::Finite(vec![x.min(y), x.max(y)]),
            None => Class::Unknown,
        }
    }

    fn describe(&self) -> String {
        "staged-subrelation".into()
    }
}

/// Lazily extended partner table for a (1,2)-structure.
struct Partners<'a> {
    s: &'a EqStructure,
    p: Vec<Option<u64>>,
}

impl Partners<'_> {
    fn get(&mut self, x: u64) -> Result<Option<u64>> {
        while self.p.len() as u64 <= x {
            let y = self.p.len() as u64;
            self.p.push(partner(self.s, y)?);
        }
        Ok(self.p[x as usize])
    }
}

/// The decidable subrelation `R_B ⊆ R` with `B(1)` decided for good at each
/// stage. Runs until `n_i ≥ horizon`; `s = {0,…,s−1}` throughout, and
/// `A^s(2)` is the set of `x < s` with partner below `s`.
pub fn staged_subrelation(a: &EqStructure, q: &RealApprox, budget: u64, horizon: u64) -> Result<StagedSubrelation> {
    let qp = q.point();
    if qp <= Rational::zero() || qp >= Rational::one() {
        return Err(Error::Precondition(format!("q = {} is not strictly between 0 and 1", rational::to_p_q(&qp))));
    }
    let mut pt = Partners { s: a, p: Vec::new() };
    let mut status: Vec<Option<BStatus>> = Vec::new();
    let mut log: Vec<B1Entry> = Vec::new();
    let mut stages: Vec<StageRecord> = Vec::new();

    fn set(status: &mut Vec<Option<BStatus>>, x: u64, v: BStatus) -> Result<()> {
        if status.len() as u64 <= x {
            status.resize(x as usize + 1, None);
        }
        match status[x as usize] {
            None => {
                status[x as usize] = Some(v);
                Ok(())
            }
            Some(old) if old == v => Ok(()),
            Some(old) => Err(Error::InvariantViolation(format!("decision for {x} changed from {old:?} to {v:?}"))),
        }
    }
    let get = |status: &Vec<Option<BStatus>>, x: u64| status.get(x as usize).copied().flatten();

    // one step of decisions, moving from (n, s) to (n2, s2)
    let apply = |status: &mut Vec<Option<BStatus>>,
                     log: &mut Vec<B1Entry>,
                     pt: &mut Partners<'_>,
                     step: u32,
                     (n, s): (u64, u64),
                     (n2, s2): (u64, u64)|
     -> Result<()> {
        for x in n..s2 {
            if get(status, x).is_none() {
                if let Some(y) = pt.get(x)? {
                    if x < y && y < s2 && get(status, y).is_none() {
                        set(status, x, BStatus::Paired(y))?;
                        set(status, y, BStatus::Paired(x))?;
                    }
                }
            }
        }
        for x in n..n2 {
            if get(status, x).is_none() {
                set(status, x, BStatus::Single)?;
                log.push(B1Entry { x, step, reason: B1Reason::NoPartner });
            }
        }
        for y in s..s2 {
            if get(status, y).is_none() {
                if let Some(p) = pt.get(y)? {
                    if get(status, p) == Some(BStatus::Single) {
                        set(status, y, BStatus::Single)?;
                        log.push(B1Entry { x: y, step, reason: B1Reason::PartnerInB1 });
                    }
                }
            }
        }
        Ok(())
    };

    let record = |pt: &mut Partners<'_>, status: &Vec<Option<BStatus>>, i: u32, n: u64, s: u64, threshold: Option<Rational>| -> Result<StageRecord> {
        let (mut approx1, mut true1, mut e, mut div) = (0u64, 0u64, 0u64, 0u64);
        for x in 0..n {
            let p = pt.get(x)?;
            let in_approx1 = p.is_none_or(|y| y >= s);
            approx1 += in_approx1 as u64;
            true1 += p.is_none() as u64;
            e += (in_approx1 && p.is_some()) as u64;
            let b_single = get(status, x) == Some(BStatus::Single);
            div += (b_single && p.is_some()) as u64;
        }
        let q_i = ratio(true1, n);
        let e_i = ratio(e, n);
        let bound = qp - q_i + pow2_recip(i);
        Ok(StageRecord {
            i,
            n_i: n,
            s_i: s,
            threshold,
            approx_density: ratio(approx1, n),
            q_i,
            e_i,
            bound,
            holds: e_i < bound,
            divergence: ratio(div, n),
        })
    };

    // (n_0, s_0) = (1, 1)
    apply(&mut status, &mut log, &mut pt, 0, (0, 0), (1, 1))?;
    stages.push(record(&mut pt, &status, 0, 1, 1, None)?);
    let (mut n, mut s, mut i) = (1u64, 1u64, 0u32);
    // A^t(2) membership of x < t, extended as t grows
    let mut in2: Vec<bool> = Vec::new();
    while n < horizon {
        if i >= 62 {
            return Err(Error::Precondition("too many stages for 64-bit thresholds".into()));
        }
        let tau = q.threshold(i + 1);
        let lo = (1u64 << (i + 1)).max(n + 1);
        let mut found = None;
        let mut t = s + 1;
        while found.is_none() {
            if t > budget {
                let partial = serde_json::to_value(&stages)?;
                return Err(Error::Exhausted { what: "staged subrelation threshold search", budget, step: u64::from(i) + 1, partial });
            }
            // element t − 1 enters; it and its partner join A^t(2) if the partner is below t
            while (in2.len() as u64) < t {
                let x = in2.len() as u64;
                in2.push(false);
                if let Some(y) = pt.get(x)? {
                    if y < x {
                        in2[x as usize] = true;
                        in2[y as usize] = true;
                    }
                }
            }
            if lo <= t {
                let mut twos = in2[..lo as usize].iter().filter(|&&v| v).count() as u64;
                for m in lo..=t {
                    // (m − twos)/m < τ, cross-multiplied
                    if ((m - twos) as i128) * tau.denom() < tau.numer() * m as i128 {
                        found = Some((m, t));
                        break;
                    }
                    if m < t && in2[m as usize] {
                        twos += 1;
                    }
                }
            }
            t += 1;
        }
        let (n2, s2) = found.expect("loop exits with a pair");
        apply(&mut status, &mut log, &mut pt, i + 1, (n, s), (n2, s2))?;
        i += 1;
        n = n2;
        s = s2;
        stages.push(record(&mut pt, &status, i, n, s, Some(tau))?);
    }
    let structure = EqStructure::new(BRelation { status: status.clone() }, format!("R_B({})", a.provenance()));
    Ok(StagedSubrelation { structure, status, log, stages, decided_below: n })
}

#[derive(Debug, Clone, Serialize)]
pub struct StagedCheck {
    pub horizon: u64,
    pub pairs_checked: u64,
    /// Pairs related in `R_B` but not in `R`.
    pub subset_violations: u64,
    /// Log entries that repeat an element or disagree with the final status.
    pub log_violations: u64,
    /// Type-one elements of `R` outside `B(1)`.
    pub missing_singletons: u64,
    pub bound_failures: u64,
    /// Both members of a true pair placed in `B(1)`; tolerated.
    pub split_pairs: u64,
}

impl StagedCheck {
    pub fn passed(&self) -> bool {
        self.subset_violations == 0 && self.log_violations == 0 && self.missing_singletons == 0 && self.bound_failures == 0
    }
}

pub fn verify_staged(a: &EqStructure, st: &StagedSubrelation, horizon: u64) -> Result<StagedCheck> {
    let h = horizon.min(st.decided_below);
    let p = partners(a, h)?;
    let b: Vec<Option<BStatus>> = (0..h).map(|x| st.status(x)).collect();
    let (mut checked, mut viol) = (0u64, 0u64);
    for x in 0..h {
        for y in x + 1..h {
            checked += 1;
            let rb = b[x as usize] == Some(BStatus::Paired(y));
            if rb && p[x as usize] != Some(y) {
                viol += 1;
            }
        }
    }
    let mut seen = BTreeSet::new();
    let log_violations = st
        .log
        .iter()
        .filter(|e| !seen.insert(e.x) || st.status(e.x) != Some(BStatus::Single))
        .count() as u64;
    let missing = (0..h).filter(|&x| p[x as usize].is_none() && b[x as usize] != Some(BStatus::Single)).count() as u64;
    let split = (0..h)
        .filter(|&x| matches!(p[x as usize], Some(y) if y > x && b[x as usize] == Some(BStatus::Single) && st.status(y) == Some(BStatus::Single)))
        .count() as u64;
    Ok(StagedCheck {
        horizon: h,
        pairs_checked: checked,
        subset_violations: viol,
        log_violations,
        missing_singletons: missing,
        bound_failures: st.stages.iter().filter(|r| !r.holds).count() as u64,
        split_pairs: split,
    })
}

// ---------------------------------------------------------------------------
// interleaved bijection

#[derive(Debug, Clone, Serialize)]
pub struct BoundPoint {
    pub n: u64,
    pub lhs: u64,
    pub rhs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Interleaved {
    pub f: BTreeMap<u64, u64>,
    pub stages: u64,
    pub truncated: Option<String>,
    /// `|(f[C] ∖ D) ∩ b_n| ≤ |C ∩ a_n|` for `n` up to the matched prefix.
    pub forward_bound: Vec<BoundPoint>,
    /// `|(f⁻¹[D] ∖ C) ∩ a_n| ≤ |D ∩ b_n|`, the same bound with the roles swapped.
    pub backward_bound: Vec<BoundPoint>,
    /// Prefix of `a` on which `f` is defined and whose images cover a prefix of `b`.
    pub matched: u64,
}

impl Interleaved {
    pub fn forward_holds(&self) -> bool {
        self.forward_bound.iter().all(|p| p.lhs <= p.rhs)
    }

    pub fn backward_holds(&self) -> bool {
        self.backward_bound.iter().all(|p| p.lhs <= p.rhs)
    }
}

/// Alternating construction: at stage `s`, send `c_s` to the least available
/// `d_j`, then `a_s` to the least available `b_i` (each only if not yet defined).
/// `a` and `b` are increasing lists; `c ⊆ a` and `d ⊆ b` are enumerations
/// without repetition.
pub fn interleaved_bijection(a: &[u64], b: &[u64], c: &[u64], d: &[u64]) -> Result<Interleaved> {
    if !a.windows(2).all(|w| w[0] < w[1]) || !b.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Precondition("a and b must be increasing".into()));
    }
    let aset: BTreeSet<u64> = a.iter().copied().collect();
    let bset: BTreeSet<u64> = b.iter().copied().collect();
    let cset: BTreeSet<u64> = c.iter().copied().collect();
    let dset: BTreeSet<u64> = d.iter().copied().collect();
    if cset.len() != c.len() || dset.len() != d.len() {
        return Err(Error::Precondition("enumerations of c and d must not repeat".into()));
    }
    if !cset.is_subset(&aset) {
        return Err(Error::Precondition("c is not contained in a".into()));
    }
    if !dset.is_subset(&bset) {
        return Err(Error::Precondition("d is not contained in b".into()));
    }
    let mut f: BTreeMap<u64, u64> = BTreeMap::new();
    let mut used: BTreeSet<u64> = BTreeSet::new();
    let (mut next_d, mut next_b) = (0usize, 0usize);
    let mut truncated = None;
    let mut stages = 0u64;
    for s in 0..a.len() {
        if let Some(&cs) = c.get(s) {
            if let Entry::Vacant(e) = f.entry(cs) {
                while next_d < d.len() && used.contains(&d[next_d]) {
                    next_d += 1;
                }
                match d.get(next_d) {
                    Some(&dj) => {
                        e.insert(dj);
                        used.insert(dj);
                    }
                    None => {
                        // d is finite here; later c-steps are skipped and the a-steps carry on
                        truncated.get_or_insert_with(|| format!("d exhausted at stage {s}"));
                    }
                }
            }
        }
        let as_ = a[s];
        if let Entry::Vacant(e) = f.entry(as_) {
            while next_b < b.len() && used.contains(&b[next_b]) {
                next_b += 1;
            }
            match b.get(next_b) {
                Some(&bi) => {
                    e.insert(bi);
                    used.insert(bi);
                }
                None => {
                    truncated = Some(format!("b exhausted at stage {s}"));
                    break;
                }
            }
        }
        stages += 1;
    }
    // matched prefix: the longest n with f defined on a_0..a_{n−1} and f⁻¹ on b_0..b_{n−1}
    let inv: BTreeMap<u64, u64> = f.iter().map(|(&x, &y)| (y, x)).collect();
    let mut matched = 0usize;
    while matched < a.len().min(b.len()) && f.contains_key(&a[matched]) && inv.contains_key(&b[matched]) {
        matched += 1;
    }
    let fc_not_d: Vec<u64> = {
        let mut v: Vec<u64> = c.iter().filter_map(|x| f.get(x)).copied().filter(|y| !dset.contains(y)).collect();
        v.sort_unstable();
        v
    };
    let finv_d_not_c: Vec<u64> = {
        let mut v: Vec<u64> = d.iter().filter_map(|y| inv.get(y)).copied().filter(|x| !cset.contains(x)).collect();
        v.sort_unstable();
        v
    };
    let below = |v: &[u64], t: u64| v.partition_point(|&x| x < t) as u64;
    let csorted: Vec<u64> = cset.iter().copied().collect();
    let dsorted: Vec<u64> = dset.iter().copied().collect();
    let mut forward_bound = Vec::with_capacity(matched);
    let mut backward_bound = Vec::with_capacity(matched);
    for n in 1..=matched {
        // "∩ a_n" means the elements below a_n, that is a_0, …, a_{n−1}
        let an = a.get(n).copied().unwrap_or(a[n - 1] + 1);
        let bn = b.get(n).copied().unwrap_or(b[n - 1] + 1);
        forward_bound.push(BoundPoint { n: n as u64, lhs: below(&fc_not_d, bn), rhs: below(&csorted, an) });
        backward_bound.push(BoundPoint { n: n as u64, lhs: below(&finv_d_not_c, an), rhs: below(&dsorted, bn) });
    }
    Ok(Interleaved { f, stages, truncated, forward_bound, backward_bound, matched: matched as u64 })
}

// ---------------------------------------------------------------------------
// composition

#[derive(Debug, Clone, Serialize)]
pub struct CaseTally {
    pub checked: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakCoarse12 {
    pub witness: WeakCoarseWitness,
    pub case1: CaseTally,
    pub case2: CaseTally,
    pub case3: CaseTally,
    /// Elements below the horizon where `ω ∖ E` and `(C(1) ∖ A(1)) ∪ g₁⁻¹[D(1) ∖ B(1)]` differ.
    pub complement_mismatches: u64,
    #[serde(with = "rational::serde_p_q")]
    pub density_e: Rational,
    pub stages_a: Vec<StageRecord>,
    pub stages_b: Vec<StageRecord>,
    pub g1_forward_bound_holds: bool,
    pub g1_backward_bound_holds: bool,
}

impl WeakCoarse12 {
    pub fn cases_pass(&self) -> bool {
        self.case1.failures == 0 && self.case2.failures == 0 && self.case3.failures == 0 && self.complement_mismatches == 0
    }
}

/// Elements of `C(1) ∖ A(1)` in order of discovery: `x` is enumerated once its
/// partner `p` has appeared, at stage `max(x, p) + 1`.
fn discovered(st: &StagedSubrelation, a: &EqStructure, below: u64) -> Result<Vec<u64>> {
    let mut v = Vec::new();
    for x in 0..below {
        if st.status(x) == Some(BStatus::Single) {
            if let Some(p) = partner(a, x)? {
                v.push((x.max(p) + 1, x));
            }
        }
    }
    v.sort_unstable();
    Ok(v.into_iter().map(|(_, x)| x).collect())
}

/// `A ≅ B` weakly coarsely, through staged subrelations `C ⊆ A` and `D ⊆ B`,
/// `g₂: C(2) → D(2)` in order of least elements and `g₁: C(1) → D(1)` by the
/// interleaved bijection; `E = C(2) ∪ (A(1) ∩ g₁⁻¹[B(1)])`.
pub fn weak_coarse_iso_12(
    a: &EqStructure,
    b: &EqStructure,
    q: (&RealApprox, &RealApprox),
    budget: u64,
    horizon: u64,
) -> Result<WeakCoarse12> {
    if q.0.point() != q.1.point() {
        return Err(Error::Precondition(format!(
            "declared densities differ: {} and {}",
            rational::to_p_q(&q.0.point()),
            rational::to_p_q(&q.1.point())
        )));
    }
    let mut warnings = Vec::new();
    let (sc, sd) = std::thread::scope(|scope| {
        let hc = scope.spawn(|| staged_subrelation(a, q.0, budget, horizon));
        let hd = scope.spawn(|| staged_subrelation(b, q.1, budget, horizon.saturating_mul(2)));
        (hc.join().expect("staged run panicked"), hd.join().expect("staged run panicked"))
    });
    let (sc, sd) = (sc?, sd?);
    let (nc, nd) = (sc.decided_below, sd.decided_below);

    // g2 on pairs, by least element
    let pairs_of = |st: &StagedSubrelation, below: u64| -> Vec<(u64, u64)> {
        (0..below)
            .filter_map(|x| match st.status(x) {
                Some(BStatus::Paired(y)) if x < y => Some((x, y)),
                _ => None,
            })
            .collect()
    };
    let cp = pairs_of(&sc, nc);
    let dp = pairs_of(&sd, nd);
    let mut f: BTreeMap<u64, u64> = BTreeMap::new();
    for (&(x0, x1), &(y0, y1)) in cp.iter().zip(&dp) {
        f.insert(x0, y0);
        f.insert(x1, y1);
    }
    if dp.len() < cp.len() {
        warnings.push(format!("g2 truncated: {} pairs of C, {} of D", cp.len(), dp.len()));
    }
    // g1 on singletons
    let ones = |st: &StagedSubrelation, below: u64| -> Vec<u64> {
        (0..below).filter(|&x| st.status(x) == Some(BStatus::Single)).collect()
    };
    let c1 = ones(&sc, nc);
    let d1 = ones(&sd, nd);
    let cx = discovered(&sc, a, nc)?;
    let dx = discovered(&sd, b, nd)?;
    let g1 = interleaved_bijection(&c1, &d1, &cx, &dx)?;
    if let Some(t) = &g1.truncated {
        warnings.push(format!("g1 truncated: {t}"));
    }
    for (&x, &y) in &g1.f {
        f.insert(x, y);
    }
    let h = horizon as usize;
    let mut fx = Vec::with_capacity(h);
    for x in 0..horizon {
        match f.get(&x) {
            Some(&y) => fx.push(y),
            None => return Err(Error::Scenario(format!("f undefined at {x}; raise the budget"))),
        }
    }
    // E and its pieces
    let pa = partners(a, horizon)?;
    let mut pb: HashMap<u64, Option<u64>> = HashMap::new();
    let mut b_partner = |y: u64| -> Result<Option<u64>> {
        if let Some(&v) = pb.get(&y) {
            return Ok(v);
        }
        let v = partner(b, y)?;
        pb.insert(y, v);
        Ok(v)
    };
    let in_c2 = |x: u64| matches!(sc.status(x), Some(BStatus::Paired(_)));
    let mut e = vec![false; h];
    let mut kind = vec![0u8; h]; // 2: C(2); 1: A(1) ∩ g1⁻¹[B(1)]
    let mut mismatches = 0u64;
    for x in 0..horizon {
        let xi = x as usize;
        let a1 = pa[xi].is_none();
        let c1x = sc.status(x) == Some(BStatus::Single);
        let fb1 = b_partner(fx[xi])?.is_none();
        if in_c2(x) {
            e[xi] = true;
            kind[xi] = 2;
        } else if a1 && c1x && fb1 {
            e[xi] = true;
            kind[xi] = 1;
        }
        let d1_not_b1 = c1x && sd.status(fx[xi]) == Some(BStatus::Single) && !fb1;
        let outside = (c1x && !a1) || d1_not_b1;
        if outside == e[xi] {
            mismatches += 1;
        }
    }
    // exhaustive three-case check on E
    let lab_a: Vec<u64> = (0..horizon).map(|x| pa[x as usize].map_or(x, |p| p.min(x))).collect();
    let mut lab_b = Vec::with_capacity(h);
    for &y in &fx {
        lab_b.push(b_partner(y)?.map_or(y, |p| p.min(y)));
    }
    let mut tallies = [CaseTally { checked: 0, failures: 0 }, CaseTally { checked: 0, failures: 0 }, CaseTally { checked: 0, failures: 0 }];
    let members: Vec<usize> = (0..h).filter(|&x| e[x]).collect();
    for (i, &x) in members.iter().enumerate() {
        for &y in &members[i + 1..] {
            let case = match (kind[x], kind[y]) {
                (2, 2) => 0,
                (1, 1) => 2,
                _ => 1,
            };
            let t = &mut tallies[case];
            t.checked += 1;
            if (lab_a[x] == lab_a[y]) != (lab_b[x] == lab_b[y]) || fx[x] == fx[y] {
                t.failures += 1;
            }
        }
    }
    let [case1, case2, case3] = tallies;
    let density_e = density_of(members.len(), horizon);
    let witness = WeakCoarseWitness::new(horizon, fx.clone(), e, fx, warnings);
    Ok(WeakCoarse12 {
        witness,
        case1,
        case2,
        case3,
        complement_mismatches: mismatches,
        density_e,
        stages_a: sc.stages,
        stages_b: sd.stages,
        g1_forward_bound_holds: g1.forward_holds(),
        g1_backward_bound_holds: g1.backward_holds(),
    })
}

// ---------------------------------------------------------------------------
// sparse simple set and the non-isomorphism demonstration

#[derive(Debug, Clone, Serialize)]
pub struct SparseEntry {
    pub e: usize,
    pub label: String,
    /// First element above `2^e` and the stage it appeared, if any within budget.
    pub element: Option<u64>,
    pub stage: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseCertificate {
    pub k: u32,
    pub count: u64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct SparseSimple {
    pub s: EnumerationOracle,
    pub elements: BTreeSet<u64>,
    pub entries: Vec<SparseEntry>,
    pub certificates: Vec<SparseCertificate>,
}

/// `S` receives, for each registered `W_e` (0-based), the first element it
/// enumerates above `2^e` within its budget.
pub fn sparse_simple_set(registry: &OracleRegistry<EnumerationOracle>, budget: u64, kmax: u32) -> SparseSimple {
    let mut entries = Vec::new();
    let mut table: Vec<Vec<u64>> = Vec::new();
    for (e, w) in registry.iter() {
        let floor = if e < 63 { 1u64 << e } else { u64::MAX };
        let mut hit = None;
        for stage in 0..=w.budget().min(budget) {
            let mut arr = w.arrivals(stage);
            arr.sort_unstable();
            if let Some(&x) = arr.iter().find(|&&x| x > floor) {
                hit = Some((x, stage));
                break;
            }
        }
        if let Some((x, stage)) = hit {
            let st = stage as usize;
            if table.len() <= st {
                table.resize(st + 1, Vec::new());
            }
            table[st].push(x);
        }
        entries.push(SparseEntry { e, label: w.label().to_string(), element: hit.map(|h| h.0), stage: hit.map(|h| h.1) });
    }
    let elements: BTreeSet<u64> = table.iter().flatten().copied().collect();
    let certificates = (0..=kmax.min(63))
        .map(|k| {
            let count = elements.range(..1u64 << k).count() as u64;
            SparseCertificate { k, count, holds: count <= u64::from(k) }
        })
        .collect();
    let s = EnumerationOracle::new("sparse-simple", SetGenerator::Table(std::sync::Arc::new(table)), budget);
    SparseSimple { s, elements, entries, certificates }
}

/// A candidate map from the comparison structure into the one built on `S`.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Candidate {
    Identity,
    Shift(u64),
}

impl Candidate {
    pub fn apply(&self, x: u64) -> u64 {
        match *self {
            Self::Identity => x,
            Self::Shift(k) => x + k,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm12Demo {
    pub sparse_elements: Vec<u64>,
    pub certificates: Vec<SparseCertificate>,
    pub entries: Vec<SparseEntry>,
    /// Enumerated elements of `(ω ∖ D) ∩ dom(φ)` whose images avoid `S`.
    pub obstruction_avoiding: Vec<u64>,
    /// Elements of the obstruction set whose images land in `S`: singletons sent into pairs.
    pub obstruction_hits: Vec<u64>,
    /// Elements of `S` left without a pair partner by the greedy pairing.
    pub unpaired: Vec<u64>,
}

/// `S` from the registry plus the image of the candidate on the obstruction
/// set; the (1,2)-structure pairs up the elements of `S` greedily in order of
/// enumeration; the comparison structure has pairs `{n², n²+1}` (`D`).
pub fn thm12_demo(base: &OracleRegistry<EnumerationOracle>, candidate: Candidate, budget: u64, horizon: u64) -> Thm12Demo {
    let d = canonical_12(PairsMode::SparsePairs);
    let in_d = move |x: u64| d.class_of(x).len() == Some(2);
    let mut registry = OracleRegistry::new();
    for (_, w) in base.iter() {
        registry.register(w.clone());
    }
    let image = {
        let in_d = in_d.clone();
        EnumerationOracle::custom(format!("image({candidate:?})"), budget, move |stage| match stage.checked_sub(1) {
            Some(x) if !in_d(x) => vec![candidate.apply(x)],
            _ => Vec::new(),
        })
    };
    registry.register(image);
    let kmax = 63 - horizon.max(2).leading_zeros();
    let sp = sparse_simple_set(&registry, budget, kmax);
    let mut unpaired = Vec::new();
    let mut order: Vec<(u64, u64)> = Vec::new();
    for st in 0..=budget {
        for x in sp.s.arrivals(st) {
            order.push((st, x));
        }
    }
    if order.len() % 2 == 1 {
        unpaired.push(order.last().unwrap().1);
    }
    let (mut avoiding, mut hits) = (Vec::new(), Vec::new());
    for x in 0..horizon.min(budget) {
        if in_d(x) {
            continue;
        }
        if sp.elements.contains(&candidate.apply(x)) {
            hits.push(x);
        } else {
            avoiding.push(x);
        }
    }
    Thm12Demo {
        sparse_elements: sp.elements.iter().copied().collect(),
        certificates: sp.certificates,
        entries: sp.entries,
        obstruction_avoiding: avoiding,
        obstruction_hits: hits,
        unpaired,
    }
}
