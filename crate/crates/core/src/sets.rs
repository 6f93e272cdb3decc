//! Decidable subsets of the naturals.
//!
//! A [`DecidableSet`] is a total membership predicate plus optional fast
//! counting. Counting is what makes rank/select cheap on sparse sets such as
//! the perfect squares, which several constructions use as carriers.

use std::fmt;
use std::sync::Arc;

type Pred = Arc<dyn Fn(u64) -> bool + Send + Sync>;
type Count = Arc<dyn Fn(u64) -> u64 + Send + Sync>;

/// Default ceiling for linear scans when a set has no closed-form counter.
pub const DEFAULT_SCAN_CAP: u64 = 1 << 26;

#[derive(Clone)]
pub struct DecidableSet {
    label: Arc<str>,
    pred: Pred,
    /// `|S ∩ [0, n)|`, when a closed form exists.
    count_below: Option<Count>,
}

impl fmt::Debug for DecidableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecidableSet").field("label", &self.label).finish()
    }
}

pub fn isqrt(n: u64) -> u64 {
    n.isqrt()
}

pub fn is_square(n: u64) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// Number of perfect squares in `[0, n)`.
pub fn squares_below(n: u64) -> u64 {
    if n == 0 {
        0
    } else {
        isqrt(n - 1) + 1
    }
}

impl DecidableSet {
    pub fn from_fn(label: impl Into<String>, pred: impl Fn(u64) -> bool + Send + Sync + 'static) -> Self {
        Self {
            label: Arc::from(label.into()),
            pred: Arc::new(pred),
            count_below: None,
        }
    }

    fn with_counter(mut self, count: impl Fn(u64) -> u64 + Send + Sync + 'static) -> Self {
        self.count_below = Some(Arc::new(count));
        self
    }

    pub fn all() -> Self {
        Self::from_fn("omega", |_| true).with_counter(|n| n)
    }

    pub fn empty() -> Self {
        Self::from_fn("empty", |_| false).with_counter(|_| 0)
    }

    pub fn evens() -> Self {
        Self::from_fn("evens", |x| x % 2 == 0).with_counter(|n| n.div_ceil(2))
    }

    pub fn multiples(m: u64) -> Self {
        assert!(m > 0);
        Self::from_fn(format!("multiples({m})"), move |x| x % m == 0).with_counter(move |n| n.div_ceil(m))
    }

    pub fn squares() -> Self {
        Self::from_fn("squares", is_square).with_counter(squares_below)
    }

    pub fn non_squares() -> Self {
        Self::from_fn("non-squares", |x| !is_square(x)).with_counter(|n| n - squares_below(n))
    }

    /// `{2·x³ : x ≥ 0}`.
    pub fn doubled_cubes() -> Self {
        fn icbrt(n: u64) -> u64 {
            let mut r = (n as f64).cbrt() as u64;
            while r.saturating_mul(r).saturating_mul(r) > n {
                r -= 1;
            }
            while (r + 1).saturating_mul(r + 1).saturating_mul(r + 1) <= n {
                r += 1;
            }
            r
        }
        Self::from_fn("doubled-cubes", |x| x % 2 == 0 && icbrt(x / 2).pow(3) == x / 2)
            .with_counter(move |n| if n == 0 { 0 } else { icbrt((n - 1) / 2) + 1 })
    }

    /// A finite set given by its elements.
    pub fn finite(label: impl Into<String>, elements: impl IntoIterator<Item = u64>) -> Self {
        let mut v: Vec<u64> = elements.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        let v = Arc::new(v);
        let v2 = Arc::clone(&v);
        Self::from_fn(label, move |x| v.binary_search(&x).is_ok())
            .with_counter(move |n| v2.partition_point(|&e| e < n) as u64)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = Arc::from(label.into());
        self
    }

    pub fn contains(&self, x: u64) -> bool {
        (self.pred)(x)
    }

    pub fn has_fast_count(&self) -> bool {
        self.count_below.is_some()
    }

    /// `|S ∩ [0, n)|`.
    pub fn count_below(&self, n: u64) -> u64 {
        match &self.count_below {
            Some(c) => c(n),
            None => (0..n).filter(|&x| self.contains(x)).count() as u64,
        }
    }

    /// The `i`-th element (0-based) in increasing order, searching no further
    /// than `cap` when no closed-form counter exists.
    pub fn select(&self, i: u64, cap: u64) -> Option<u64> {
        match &self.count_below {
            Some(c) => {
                // smallest n with count_below(n) > i; the answer is n - 1
                let mut hi = 1u64;
                while c(hi) <= i {
                    if hi >= cap {
                        return None;
                    }
                    hi = hi.saturating_mul(2).min(cap.max(hi + 1));
                }
                let mut lo = 0u64;
                while lo + 1 < hi {
                    let mid = lo + (hi - lo) / 2;
                    if c(mid) > i {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi - 1)
            }
            None => {
                let mut seen = 0u64;
                for x in 0..cap {
                    if self.contains(x) {
                        if seen == i {
                            return Some(x);
                        }
                        seen += 1;
                    }
                }
                None
            }
        }
    }

    pub fn elements_below(&self, n: u64) -> Vec<u64> {
        (0..n).filter(|&x| self.contains(x)).collect()
    }

    pub fn complement(&self) -> Self {
        let p = Arc::clone(&self.pred);
        let out = Self::from_fn(format!("complement({})", self.label), move |x| !p(x));
        match &self.count_below {
            Some(c) => {
                let c = Arc::clone(c);
                out.with_counter(move |n| n - c(n))
            }
            None => out,
        }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (p, q) = (Arc::clone(&self.pred), Arc::clone(&other.pred));
        Self::from_fn(format!("({} & {})", self.label, other.label), move |x| p(x) && q(x))
    }

    pub fn difference(&self, other: &Self) -> Self {
        let (p, q) = (Arc::clone(&self.pred), Arc::clone(&other.pred));
        Self::from_fn(format!("({} - {})", self.label, other.label), move |x| p(x) && !q(x))
    }

    pub fn union(&self, other: &Self) -> Self {
        let (p, q) = (Arc::clone(&self.pred), Arc::clone(&other.pred));
        Self::from_fn(format!("({} | {})", self.label, other.label), move |x| p(x) || q(x))
    }
}

/// Sorted prefix of a set, cached for repeated rank/select queries.
#[derive(Debug, Clone)]
pub struct SortedPrefix {
    elements: Vec<u64>,
    limit: u64,
}

impl SortedPrefix {
    pub fn new(set: &DecidableSet, limit: u64) -> Self {
        Self { elements: set.elements_below(limit), limit }
    }

    pub fn from_sorted(elements: Vec<u64>, limit: u64) -> Self {
        debug_assert!(elements.windows(2).all(|w| w[0] < w[1]));
        Self { elements, limit }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.elements
    }

    pub fn select(&self, i: u64) -> Option<u64> {
        self.elements.get(i as usize).copied()
    }

    /// Index of `x` if present.
    pub fn rank_of(&self, x: u64) -> Option<u64> {
        self.elements.binary_search(&x).ok().map(|i| i as u64)
    }

    pub fn count_below(&self, n: u64) -> u64 {
        self.elements.partition_point(|&e| e < n) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_matches_scan() {
        for set in [
            DecidableSet::evens(),
            DecidableSet::squares(),
            DecidableSet::non_squares(),
            DecidableSet::multiples(3),
            DecidableSet::doubled_cubes(),
            DecidableSet::finite("f", [3, 9, 27]),
        ] {
            for n in 0..300 {
                let naive = (0..n).filter(|&x| set.contains(x)).count() as u64;
                assert_eq!(set.count_below(n), naive, "{} at {n}", set.label());
            }
        }
    }

    #[test]
    fn select_with_and_without_counter() {
        let sq = DecidableSet::squares();
        assert_eq!(sq.select(7, 1 << 20), Some(49));
        let ns = DecidableSet::non_squares();
        assert_eq!(ns.select(0, 1 << 20), Some(2));
        assert_eq!(ns.select(2, 1 << 20), Some(5));
        let slow = DecidableSet::from_fn("sq", is_square);
        assert_eq!(slow.select(7, 1 << 20), Some(49));
        assert_eq!(slow.select(7, 40), None);
    }

    #[test]
    fn isqrt_edges() {
        for n in 0..10_000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
        assert_eq!(isqrt(u64::MAX), 4_294_967_295);
    }
}
