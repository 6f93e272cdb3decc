//! s₁-functions: validation, extraction from a c.e. equivalence relation, and
//! a monotone-growth builder that realizes a character approximation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::enumeration::{IncrementalClosure, PairEnumerationOracle};
use crate::error::{Error, Result};
use crate::sets::{DecidableSet, DEFAULT_SCAN_CAP};
use crate::structures::{EqStructure, TableClass, TableRelation};

/// Triangular table: `rows[s][i] = f(i, s)` for `i ≤ s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct S1Table {
    pub rows: Vec<Vec<u64>>,
}

impl S1Table {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            if row.len() != s + 1 {
                return Err(Error::InvalidS1(format!("row for stage {s} has {} entries, expected {}", row.len(), s + 1)));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_fn(stages: u64, f: impl Fn(u64, u64) -> u64) -> Self {
        Self { rows: (0..stages).map(|s| (0..=s).map(|i| f(i, s)).collect()).collect() }
    }

    pub fn stages(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn get(&self, i: u64, s: u64) -> Option<u64> {
        self.rows.get(s as usize)?.get(i as usize).copied()
    }

    /// `(i, s, f)` rows for CSV output.
    pub fn csv_rows(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().map(move |(i, &f)| (i as u64, s as u64, f)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum S1Violation {
    /// `f(i, s) > f(i, s+1)`.
    NotMonotone { i: u64, s: u64, before: u64, after: u64 },
    /// `m_i ≥ m_{i+1}` for two stabilized rows.
    LimitsNotIncreasing { i: u64, m_i: u64, m_next: u64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Limit {
    pub i: u64,
    pub m: u64,
    /// First stage from which the row is constant.
    pub since: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct S1Report {
    pub valid: bool,
    pub violation: Option<S1Violation>,
    /// Stabilized prefix of the limits.
    pub limits: Vec<Limit>,
}

/// Check monotonicity in `s` everywhere, then read off the prefix of rows that
/// stay constant for at least `settle` final stages and require their limits
/// to increase strictly.
pub fn validate_s1(t: &S1Table, settle: u64) -> S1Report {
    let last = t.stages().saturating_sub(1);
    for s in 0..last {
        for i in 0..=s {
            let (before, after) = (t.get(i, s).unwrap(), t.get(i, s + 1).unwrap());
            if before > after {
                return S1Report {
                    valid: false,
                    violation: Some(S1Violation::NotMonotone { i, s, before, after }),
                    limits: Vec::new(),
                };
            }
        }
    }
    let mut limits: Vec<Limit> = Vec::new();
    for i in 0..t.stages() {
        let m = t.get(i, last).unwrap();
        let mut since = last;
        while since > i && t.get(i, since - 1) == Some(m) {
            since -= 1;
        }
        if last - since < settle {
            break;
        }
        if let Some(prev) = limits.last() {
            if prev.m >= m {
                return S1Report {
                    valid: false,
                    violation: Some(S1Violation::LimitsNotIncreasing { i: prev.i, m_i: prev.m, m_next: m }),
                    limits,
                };
            }
        }
        limits.push(Limit { i, m, since });
    }
    S1Report { valid: true, violation: None, limits }
}

// ---------------------------------------------------------------------------
// extraction

#[derive(Debug, Clone, Serialize)]
pub struct S1Extraction {
    pub table: S1Table,
    /// `anchors[s][i] = a_i^s`.
    pub anchors: Vec<Vec<u64>>,
    /// `p_s` for each completed stage.
    pub checkpoints: Vec<u64>,
}

impl S1Extraction {
    pub fn final_anchors(&self) -> &[u64] {
        self.anchors.last().map_or(&[], Vec::as_slice)
    }
}

/// Build an s₁-function from a c.e. equivalence relation, running `stages`
/// stages with `p` ranging up to the oracle's budget.
///
/// At stage `s+1` the search takes the least `p > p_s` admitting anchors
/// `b_0,…,b_{s+1}` with `f(i,s) ≤ c_p(b_i) < c_p(b_{i+1})`, where `c_p(b)`
/// counts `{a ≤ p : a E^p b}`. Anchors whose classes (and all earlier ones)
/// gained no element in `(p_s, p]` are kept; the rest form the
/// lexicographically least admissible tail, drawn from classes untouched at
/// step `p` itself.
pub fn extract_s1(e: &PairEnumerationOracle, stages: u64) -> Result<S1Extraction> {
    let budget = e.budget();
    let mut closure = IncrementalClosure::new();
    for pair in e.arrivals(0) {
        closure.add_pair(pair.0, pair.1);
    }
    closure.count_upto(0);
    let mut rows = vec![vec![1u64]];
    let mut anchors = vec![vec![0u64]];
    let mut checkpoints = vec![0u64];
    let mut p_stage = 0u64; // stage of the pair enumeration absorbed so far
    for s in 0..stages.saturating_sub(1) {
        let ps = *checkpoints.last().unwrap();
        let prev_anchor = anchors.last().unwrap().clone();
        let prev_f = rows.last().unwrap().clone();
        let mut found = None;
        let mut p = ps + 1;
        while p <= budget {
            let mut touched = vec![p];
            while p_stage < p {
                p_stage += 1;
                for (x, y) in e.arrivals(p_stage) {
                    closure.add_pair(x, y);
                    if p_stage == p {
                        touched.extend([x, y]);
                    }
                }
            }
            closure.count_upto(p);
            if let Some(b) = choose_anchors(&mut closure, p, ps, &touched, &prev_anchor, &prev_f) {
                found = Some((p, b));
                break;
            }
            p += 1;
        }
        let Some((p, b)) = found else {
            let partial = S1Extraction { table: S1Table { rows }, anchors, checkpoints };
            return Err(Error::Exhausted {
                what: "s1 extraction",
                budget,
                step: s + 1,
                partial: serde_json::to_value(&partial)?,
            });
        };
        rows.push(b.iter().map(|&x| closure.counted_size(x) as u64).collect());
        anchors.push(b);
        checkpoints.push(p);
    }
    Ok(S1Extraction { table: S1Table { rows }, anchors, checkpoints })
}

fn choose_anchors(
    closure: &mut IncrementalClosure,
    p: u64,
    ps: u64,
    touched: &[u64],
    prev: &[u64],
    prev_f: &[u64],
) -> Option<Vec<u64>> {
    let s = prev.len() - 1;
    // first anchor whose class gained an element in (p_s, p]
    let grown: BTreeSet<u64> = (ps + 1..=p).map(|a| closure.root(a)).collect();
    let first_growth = prev.iter().position(|&a| grown.contains(&closure.root(a))).unwrap_or(prev.len());
    // least element realizing each counted size, skipping classes that changed
    // at step p itself: a class still filling up would be re-anchored forever
    let busy: BTreeSet<u64> = touched.iter().map(|&a| closure.root(a)).collect();
    let mut least: BTreeMap<u64, u64> = BTreeMap::new();
    for b in 0..=p {
        if b > 0 && busy.contains(&closure.root(b)) {
            continue;
        }
        let c = closure.counted_size(b) as u64;
        least.entry(c).or_insert(b);
    }
    let size = |closure: &mut IncrementalClosure, b: u64| closure.counted_size(b) as u64;
    let lo = |i: usize| prev_f.get(i).copied().unwrap_or(0);
    // largest usable value per position, from the back
    let mut cap = vec![0u64; s + 2];
    let mut upper = u64::MAX;
    for i in (0..s + 2).rev() {
        if lo(i) >= upper {
            return None;
        }
        let v = *least.range(lo(i)..upper).next_back()?.0;
        cap[i] = v;
        upper = v;
    }
    let mut out = Vec::with_capacity(s + 2);
    let mut prev_val = 0u64;
    for i in 0..s + 2 {
        let b = if i == 0 || i < first_growth {
            let b = if i == 0 { 0 } else { prev[i] };
            let v = size(closure, b);
            if v < lo(i) || (i > 0 && v <= prev_val) || v > cap[i] {
                return None;
            }
            b
        } else {
            let from = lo(i).max(if i == 0 { 0 } else { prev_val + 1 });
            if from > cap[i] {
                return None;
            }
            *least.range(from..=cap[i]).map(|(_, b)| b).min()?
        };
        prev_val = size(closure, b);
        out.push(b);
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// building from a character

/// Stagewise guesses `g(k, n, s)` at a finite set of candidate pairs.
#[derive(Clone)]
pub struct CharacterApprox {
    pub candidates: Vec<(u64, u64)>,
    pub budget: u64,
    guess: Arc<dyn Fn(u64, u64, u64) -> bool + Send + Sync>,
}

impl fmt::Debug for CharacterApprox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CharacterApprox").field("candidates", &self.candidates).field("budget", &self.budget).finish()
    }
}

impl CharacterApprox {
    pub fn new(
        candidates: Vec<(u64, u64)>,
        budget: u64,
        guess: impl Fn(u64, u64, u64) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self { candidates, budget, guess: Arc::new(guess) }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), 0, |_, _, _| false)
    }

    /// Every listed pair affirmed from stage 0.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        Self::new(pairs.into_iter().collect(), 0, |_, _, _| true)
    }

    pub fn guess(&self, k: u64, n: u64, s: u64) -> bool {
        (self.guess)(k, n, s)
    }

    /// Pairs affirmed at the budget.
    pub fn affirmed(&self) -> Vec<(u64, u64)> {
        self.candidates.iter().copied().filter(|&(k, n)| k > 0 && n > 0 && self.guess(k, n, self.budget)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BuiltStructure {
    pub structure: EqStructure,
    /// Final classes, one per row of the table followed by the extra classes.
    pub classes: Vec<Vec<u64>>,
    /// Sizes of the table-driven classes after each stage.
    pub growth: Vec<Vec<u64>>,
    /// Elements allocated; everything at or above the limit is unassigned.
    pub limit: u64,
}

/// Realize `f` (plus the pairs `K` affirms) as a computable structure on the
/// elements of `carrier`, taken in increasing order.
///
/// Class `i` is opened at stage `i` and grown with fresh elements to `f(i, s)`
/// at every stage `s`. Afterwards, for every size `k` with `(k, n)` affirmed,
/// fresh classes of size `k` are added until there are at least `n`.
pub fn build_from_character(k: &CharacterApprox, f: &S1Table, carrier: &DecidableSet) -> Result<BuiltStructure> {
    let report = validate_s1(f, 1);
    if let Some(v) = report.violation {
        return Err(Error::InvalidS1(format!("{v:?}")));
    }
    let mut next = 0u64;
    let mut fresh = || -> Result<u64> {
        let x = carrier
            .select(next, DEFAULT_SCAN_CAP)
            .ok_or_else(|| Error::Precondition(format!("carrier {} has no element {next}", carrier.label())))?;
        next += 1;
        Ok(x)
    };
    let mut classes: Vec<Vec<u64>> = Vec::new();
    let mut growth = Vec::new();
    for row in &f.rows {
        for (i, &target) in row.iter().enumerate() {
            if i == classes.len() {
                classes.push(Vec::new());
            }
            while (classes[i].len() as u64) < target {
                let x = fresh()?;
                classes[i].push(x);
            }
        }
        growth.push(classes.iter().map(|c| c.len() as u64).collect());
    }
    classes.retain(|c| !c.is_empty());
    let mut need: BTreeMap<u64, u64> = BTreeMap::new();
    for (size, n) in k.affirmed() {
        let e = need.entry(size).or_default();
        *e = (*e).max(n);
    }
    for (&size, &n) in &need {
        let have = classes.iter().filter(|c| c.len() as u64 == size).count() as u64;
        for _ in have..n {
            let c = (0..size).map(|_| fresh()).collect::<Result<Vec<_>>>()?;
            classes.push(c);
        }
    }
    let limit = carrier.select(next, DEFAULT_SCAN_CAP).unwrap_or(next);
    let table = TableRelation::new(
        "from-character",
        limit,
        classes.iter().cloned().map(TableClass::Finite).collect(),
    )?;
    let universe_limit = limit;
    let c = carrier.clone();
    let structure = crate::structures::restrict(
        &EqStructure::new(table, "from-character"),
        &DecidableSet::from_fn(format!("{} below {universe_limit}", carrier.label()), move |x| {
            x < universe_limit && c.contains(x)
        }),
    )
    .relabel("from-character");
    Ok(BuiltStructure { structure, classes, growth, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::{canonical_all_sizes, character_of, consecutive, SizeRule};

    #[test]
    fn validation_examples() {
        let t = S1Table::from_fn(20, |i, _| i + 1);
        let r = validate_s1(&t, 2);
        assert!(r.valid);
        assert!(r.limits.iter().all(|l| l.m == l.i + 1));
        let t = S1Table::new(vec![vec![2], vec![1, 5]]).unwrap();
        assert!(matches!(validate_s1(&t, 0).violation, Some(S1Violation::NotMonotone { i: 0, s: 0, .. })));
        let t = S1Table::new(vec![vec![3], vec![3, 3], vec![3, 3, 4]]).unwrap();
        assert!(matches!(validate_s1(&t, 0).violation, Some(S1Violation::LimitsNotIncreasing { .. })));
    }

    #[test]
    fn canonical_extraction() {
        let e = PairEnumerationOracle::prompt(&canonical_all_sizes(), 5000);
        let x = extract_s1(&e, 25).unwrap();
        for (s, row) in x.table.rows.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                assert_eq!(f, i as u64 + 1, "f({i},{s})");
            }
            assert_eq!(x.anchors[s][0], 0);
        }
        let last = x.final_anchors();
        for (i, &a) in last.iter().enumerate() {
            assert_eq!(a, (i * (i + 1) / 2) as u64);
        }
    }

    #[test]
    fn bounded_character_exhausts() {
        let e = PairEnumerationOracle::prompt(&consecutive(SizeRule::Cycle(vec![1, 2, 3]), "small"), 400);
        assert!(matches!(extract_s1(&e, 10), Err(Error::Exhausted { .. })));
    }

    #[test]
    fn growing_infinite_class_runs_out_cleanly() {
        // an infinite class can be anchored while it still looks small; the
        // rows then outgrow the budget and the search must stop without panicking
        let s = crate::structures::spliced(&DecidableSet::from_fn("odds", |x| x % 2 == 1), &canonical_all_sizes());
        let e = PairEnumerationOracle::prompt(&s, 3000);
        assert!(matches!(extract_s1(&e, 10), Err(Error::Exhausted { .. })));
    }

    #[test]
    fn build_one_class_per_size() {
        let f = S1Table::from_fn(12, |i, _| i + 1);
        let b = build_from_character(&CharacterApprox::empty(), &f, &DecidableSet::all()).unwrap();
        let ch = character_of(&b.structure, b.limit).unwrap();
        assert_eq!(ch.counts(), (1..=12).map(|k| (k, 1)).collect());
        let f2 = S1Table::from_fn(12, |i, s| (i + 1).min(s));
        let b2 = build_from_character(&CharacterApprox::empty(), &f2, &DecidableSet::all()).unwrap();
        let ch2 = character_of(&b2.structure, b2.limit).unwrap();
        for l in validate_s1(&f2, 1).limits {
            assert_eq!(l.m, l.i + 1);
            assert!(ch2.count(l.m as usize) >= 1);
        }
        let bad = S1Table::new(vec![vec![2], vec![1, 3]]).unwrap();
        assert!(matches!(
            build_from_character(&CharacterApprox::empty(), &bad, &DecidableSet::all()),
            Err(Error::InvalidS1(_))
        ));
    }

    #[test]
    fn build_adds_affirmed_classes() {
        let f = S1Table::from_fn(5, |i, _| 2 * i + 2);
        let k = CharacterApprox::from_pairs([(2, 3), (7, 1)]);
        let b = build_from_character(&k, &f, &DecidableSet::evens()).unwrap();
        let ch = character_of(&b.structure, b.limit).unwrap();
        assert_eq!(ch.count(2), 3);
        assert_eq!(ch.count(7), 1);
        assert_eq!(ch.count(4), 1);
        assert!(b.classes.iter().flatten().all(|x| x % 2 == 0));
    }
}
