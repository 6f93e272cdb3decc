use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use gencomp::density::{diagonal_antiproduct, square_density_check};
use gencomp::enumeration::{EnumerationOracle, OracleRegistry, SetGenerator};
use gencomp::iso::{build_12_density_q, interleaved_bijection, sparse_simple_set, DyadicSchedule, PartialIsoWitness};
use gencomp::rational::{parse_p_q, ratio, to_p_q, Rational};
use gencomp::s1::{validate_s1, S1Table};
use gencomp::scenario::Term;
use gencomp::sets::DecidableSet;
use gencomp::structures::{check_equivalence, consecutive, Snapshot, SizeRule};

fn term() -> impl Strategy<Value = Term> {
    let name = "[a-z][a-z0-9]{0,5}(-[a-z0-9]{1,4})?";
    let leaf = prop_oneof![
        (0u64..10_000).prop_map(Term::Int),
        (0i128..50, 1i128..50).prop_map(|(p, q)| Term::Ratio(Rational::new(p, q))),
        name.prop_map(|n| Term::Call(n, Vec::new())),
    ];
    leaf.prop_recursive(3, 24, 4, move |inner| {
        (name, proptest::collection::vec(inner, 1..4)).prop_map(|(n, args)| Term::Call(n, args))
    })
}

fn increasing(max: u64, len: usize) -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::btree_set(0..max, 1..len).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rationals_round_trip(p in 0u64..1_000_000, q in 1u64..1_000_000) {
        let r = ratio(p, q);
        prop_assert_eq!(parse_p_q(&to_p_q(&r)), Some(r));
    }

    #[test]
    fn terms_round_trip(t in term()) {
        let text = t.to_string();
        prop_assert_eq!(Term::parse(&text), Ok(t));
    }

    #[test]
    fn square_density_is_the_square_of_the_linear(elems in proptest::collection::btree_set(0u64..300, 0..120), n in 1u64..320) {
        let s = DecidableSet::finite("s", elems);
        let d = square_density_check(&s, n).unwrap();
        prop_assert_eq!(d.square, d.linear * d.linear);
        prop_assert!(d.linear >= Rational::from_integer(0) && d.linear <= Rational::from_integer(1));
    }

    #[test]
    fn consecutive_layouts_have_the_declared_character(sizes in proptest::collection::vec(1u64..6, 1..5), reps in 1u64..6) {
        let rule = SizeRule::Cycle(sizes.clone());
        let classes = sizes.len() as u64 * reps;
        let horizon = rule.prefix(classes);
        let st = consecutive(rule, "cycle");
        check_equivalence(&st, horizon).unwrap();
        let ch = Snapshot::take(&st, horizon).unwrap().character();
        let mut want: BTreeMap<usize, usize> = BTreeMap::new();
        for &k in &sizes {
            *want.entry(k as usize).or_default() += reps as usize;
        }
        prop_assert_eq!(ch.counts(), want);
    }

    #[test]
    fn interleaved_bijection_respects_both_bounds(
        a in increasing(400, 200),
        b in increasing(400, 200),
        cpick in proptest::collection::vec(any::<proptest::sample::Index>(), 0..40),
        dpick in proptest::collection::vec(any::<proptest::sample::Index>(), 0..40),
    ) {
        let mut seen = BTreeSet::new();
        let c: Vec<u64> = cpick.iter().map(|i| a[i.index(a.len())]).filter(|x| seen.insert(*x)).collect();
        let mut seen = BTreeSet::new();
        let d: Vec<u64> = dpick.iter().map(|i| b[i.index(b.len())]).filter(|x| seen.insert(*x)).collect();
        let f = interleaved_bijection(&a, &b, &c, &d).unwrap();
        let images: BTreeSet<u64> = f.f.values().copied().collect();
        prop_assert_eq!(images.len(), f.f.len());
        prop_assert!(f.f.keys().all(|x| a.binary_search(x).is_ok()));
        prop_assert!(images.iter().all(|y| b.binary_search(y).is_ok()));
        prop_assert!(f.matched as usize <= a.len().min(b.len()));
        prop_assert!(f.forward_holds() && f.backward_holds());
        if c.is_empty() && d.is_empty() {
            for i in 0..f.matched as usize {
                prop_assert_eq!(f.f.get(&a[i]), Some(&b[i]));
            }
        }
    }

    #[test]
    fn witness_inversion_and_merge(pairs in proptest::collection::btree_map(0u64..200, 0u64..200, 0..60)) {
        // keep the table injective
        let mut used = BTreeSet::new();
        let table: BTreeMap<u64, u64> = pairs.into_iter().filter(|(_, y)| used.insert(*y)).collect();
        let w = PartialIsoWitness::from_table("a", "b", 200, table.clone()).unwrap();
        let back = w.invert().unwrap().invert().unwrap();
        prop_assert_eq!(&back.forward, &table);
        let merged = PartialIsoWitness::merge(&w, &w.invert().unwrap()).unwrap();
        prop_assert_eq!(&merged.forward, &table);
    }

    #[test]
    fn s1_limits_are_read_off_exactly(
        steps in proptest::collection::vec(1u64..5, 2..12),
        delays in proptest::collection::vec(0u64..20, 12),
        extra in 0u64..8,
        settle in 0u64..4,
    ) {
        let m: Vec<u64> = steps.iter().scan(0, |acc, s| { *acc += s; Some(*acc) }).collect();
        let stages = m.len() as u64 + extra + 20;
        let (m2, d2) = (m.clone(), delays.clone());
        let f = move |i: u64, s: u64| {
            let (mi, di) = (m2.get(i as usize).copied().unwrap_or(1000 + i), d2[i as usize % d2.len()]);
            if s >= di { mi } else { mi.saturating_sub(di - s) }
        };
        let t = S1Table::from_fn(stages, f);
        let r = validate_s1(&t, settle);
        prop_assert!(r.valid);
        let last = stages - 1;
        let expected = (0..stages)
            .take_while(|&i| last - delays[i as usize % delays.len()].max(i) >= settle)
            .count();
        prop_assert_eq!(r.limits.len(), expected);
        for l in &r.limits {
            let want = m.get(l.i as usize).copied().unwrap_or(1000 + l.i);
            prop_assert_eq!(l.m, want);
        }
    }

    #[test]
    fn diagonal_antiproduct_bounds(lists in proptest::collection::vec(proptest::collection::vec(0u64..600, 0..80), 1..5)) {
        let reg: OracleRegistry<_> = lists
            .into_iter()
            .enumerate()
            .map(|(i, l)| EnumerationOracle::new(format!("w{i}"), SetGenerator::Listed(Arc::new(l)), 200))
            .collect();
        let c = diagonal_antiproduct(&reg, 256);
        prop_assert!(!c.squares.is_empty());
        for q in &c.squares {
            prop_assert!(q.holds, "{:?}", q);
            prop_assert!(q.in_c <= q.side * q.side);
        }
    }

    #[test]
    fn sparse_simple_certificates(lists in proptest::collection::vec(proptest::collection::vec(0u64..5000, 0..40), 1..10)) {
        let reg: OracleRegistry<_> = lists
            .into_iter()
            .enumerate()
            .map(|(i, l)| EnumerationOracle::new(format!("w{i}"), SetGenerator::Listed(Arc::new(l)), 100))
            .collect();
        let sp = sparse_simple_set(&reg, 100, 12);
        for c in &sp.certificates {
            prop_assert!(c.holds, "{:?}", c);
            prop_assert_eq!(c.count, sp.elements.range(..1u64 << c.k).count() as u64);
        }
        // each registered set contributes at most one element, above 2^e
        for e in &sp.entries {
            if let Some(x) = e.element {
                prop_assert!(x > 1u64 << e.e);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn density_q_checkpoints_are_exact(num in 0u64..8, k in 1u32..5, len in 2usize..7) {
        let den = 1u64 << k;
        let q = ratio(2 * num % den + 1, den);
        prop_assume!(q < Rational::from_integer(1));
        let sched = DyadicSchedule::constant(q, len).unwrap();
        let (st, cps) = build_12_density_q(&sched, 4000).unwrap();
        prop_assert!(!cps.is_empty());
        for c in &cps {
            prop_assert!(c.exact);
            let singles = (0..c.s_n).filter(|&x| st.class_of(x).len() == Some(1)).count() as i128;
            prop_assert_eq!(Rational::from_integer(singles), c.q_n * Rational::from_integer(c.s_n as i128));
        }
        let ch = Snapshot::take(&st, 2000).unwrap().character();
        prop_assert!(ch.counts().keys().all(|&s| s == 1 || s == 2));
    }
}
