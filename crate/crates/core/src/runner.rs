//! Executes a validated scenario and records every check in a [`Report`].

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde_json::json;

use crate::density::{diagonal_antiproduct, extract_dense_subset, square_density_check};
use crate::enumeration::{LimitApproxOracle, OracleRegistry, PairEnumerationOracle};
use crate::error::{Error, Result, StageExt};
use crate::generic::{
    anti_coarse_k, build_faithful_coarse, check_isomorphism, check_restriction, diagonal_dense_k, faithful_generic_copy,
    restrict_generic_witness, strongly_generic_copy, verify_witness, CaseTag, GenericCopy, Outcome, ScenarioMetadata,
};
use crate::iso::{
    build_12_density_q, coarse_iso_char1, generic_iso_char2, interleaved_bijection, staged_subrelation, thm12_demo,
    verify_partial_iso, verify_staged, verify_weak_coarse, weak_coarse_iso_12, IsoOptions, PartialIsoWitness, RealApprox,
};
use crate::rational::{ratio, to_p_q, Rational};
use crate::report::Report;
use crate::s1::{build_from_character, extract_s1, validate_s1, CharacterApprox, S1Table};
use crate::scenario::{one_class_per_size, oracle_is_finite, Construction, Scenario};
use crate::sets::DecidableSet;
use crate::structures::{
    canonical_12, character_of, is_faithful, spliced, EqStructure, PairsMode, Snapshot,
};

/// Number of rows in each emitted density profile.
const PROFILE_ROWS: u64 = 200;

/// `(n, ρ_n)` rows with `ρ_n = |S ∩ {0,…,n}| / (n+1)`, sampled up to `horizon`.
pub fn sampled_profile(member: impl Fn(u64) -> bool, horizon: u64) -> Vec<(u64, Rational)> {
    let stride = (horizon / PROFILE_ROWS).max(1);
    let mut rows = Vec::new();
    let mut count = 0u64;
    for x in 0..horizon {
        if member(x) {
            count += 1;
        }
        if (x + 1) % stride == 0 || x + 1 == horizon {
            rows.push((x, ratio(count, x + 1)));
        }
    }
    rows
}

fn at_least(r: &Rational, floor: &Rational) -> bool {
    r >= floor
}

fn one_minus(t: &Rational) -> Rational {
    Rational::from_integer(1) - t
}

/// `members / len ≥ 1 − 2^{−e}`, by cross-multiplication.
fn meets_dyadic(members: u64, len: u64, e: u32) -> bool {
    if e >= 64 {
        return members == len;
    }
    (members as u128) << e >= ((1u128 << e) - 1) * len as u128
}

pub fn run_scenario(s: &Scenario) -> Result<Report> {
    let t0 = Instant::now();
    let mut r = Report::new(&s.name, s.construction.id(), s.horizon, s.budget);
    match s.construction {
        Construction::Lemma2Sweep => lemma2(s, &mut r)?,
        Construction::Lemma1Extract => lemma1(s, &mut r)?,
        Construction::Thm1Diagonal => thm1(s, &mut r)?,
        Construction::S1Roundtrip => s1_roundtrip(s, &mut r)?,
        Construction::Prop1 => prop1(s, &mut r)?,
        Construction::Thm4 => thm4(s, &mut r)?,
        Construction::Thm2Restrict => thm2(s, &mut r)?,
        Construction::Ex1Demo => ex1(s, &mut r)?,
        Construction::FaithfulCoarse => faithful_coarse(s, &mut r)?,
        Construction::DiagonalK => diagonal_k(s, &mut r)?,
        Construction::AntiCoarseK => anti_coarse(s, &mut r)?,
        Construction::DensityQ => density_q(s, &mut r)?,
        Construction::Staged => staged(s, &mut r)?,
        Construction::Interleaved => interleaved(s, &mut r)?,
        Construction::Char2Iso => char2(s, &mut r)?,
        Construction::Char1Iso => char1(s, &mut r)?,
        Construction::WeakCoarseIso => weak_coarse(s, &mut r)?,
        Construction::Thm12Demo => thm12(s, &mut r)?,
    }
    r.timing = Some(t0.elapsed());
    Ok(r)
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Scenario(format!("missing {what}")))
}

fn opts(s: &Scenario) -> IsoOptions {
    IsoOptions { tolerance: s.tolerance, lenient: s.lenient }
}

// ---------------------------------------------------------------------------
// densities

fn lemma2(s: &Scenario, r: &mut Report) -> Result<()> {
    let mut exact = 0usize;
    for set in &s.sets {
        let mut first_failure = None;
        for n in 1..=s.horizon {
            let d = square_density_check(set, n)?;
            if d.square != d.linear * d.linear {
                first_failure = Some(n);
                break;
            }
        }
        let last = square_density_check(set, s.horizon)?;
        exact += usize::from(first_failure.is_none());
        r.check(
            format!("square-law/{}", set.label()),
            first_failure.is_none(),
            json!({"checked_upto": s.horizon, "first_failure": first_failure, "linear": to_p_q(&last.linear), "square": to_p_q(&last.square)}),
        )?;
        r.profile(format!("rho/{}", set.label()), sampled_profile(|x| set.contains(x), s.horizon));
    }
    r.check("families-exact", exact == s.sets.len(), format!("{exact}/{}", s.sets.len()))
}

fn lemma1(s: &Scenario, r: &mut Report) -> Result<()> {
    for (term, oracle) in &s.oracles {
        let b = extract_dense_subset(oracle, s.horizon).stage(&format!("extract from {term}"))?;
        let arrivals = oracle.arrival_index(oracle.budget());
        let segs = &b.certificate.segments;
        let mut bad_segments = Vec::new();
        for seg in segs {
            let members = (seg.start..seg.end).filter(|&x| b.contains(x) == Some(true)).count() as u64;
            let ok = members == seg.members && meets_dyadic(members, seg.len(), seg.bound_exp) && seg.meets_bound;
            if !ok {
                bad_segments.push(seg.index);
            }
        }
        r.check(
            format!("segments/{term}"),
            bad_segments.is_empty() && !segs.is_empty(),
            json!({"segments": segs.len(), "failing": bad_segments}),
        )?;
        let outside: Vec<u64> =
            (0..s.horizon).filter(|&x| b.contains(x) == Some(true) && arrivals.arrival(x).is_none()).take(10).collect();
        let undecided = b.decided_below() < s.horizon;
        r.check(
            format!("b-inside-a/{term}"),
            outside.is_empty() && !undecided,
            json!({"decided_below": b.decided_below(), "outside_a": outside}),
        )?;
        r.certificate(format!("checkpoints/{term}"), &b.certificate.checkpoints)?;
        r.profile(format!("rho-b/{term}"), sampled_profile(|x| b.contains(x) == Some(true), s.horizon));
    }
    Ok(())
}

fn thm1(s: &Scenario, r: &mut Report) -> Result<()> {
    let registry: OracleRegistry<_> = s.oracles.iter().map(|(_, o)| o.clone()).collect();
    let c = diagonal_antiproduct(&registry, s.horizon);
    let failing: Vec<u32> = c.squares.iter().filter(|q| !q.holds).map(|q| q.i).collect();
    r.check(
        "square-bounds",
        failing.is_empty() && !c.squares.is_empty(),
        json!({"checkpoints": c.squares.len(), "failing": failing}),
    )?;
    // recount small squares pair by pair
    let mut miscounted = Vec::new();
    for q in c.squares.iter().filter(|q| q.side <= 512) {
        let brute = (0..q.side).flat_map(|a| (0..q.side).map(move |b| (a, b))).filter(|&(a, b)| c.contains(a, b)).count();
        if brute as u64 != q.in_c {
            miscounted.push(q.i);
        }
    }
    r.check("square-recount", miscounted.is_empty(), json!({"miscounted": miscounted}))?;
    for ((term, oracle), entry) in s.oracles.iter().zip(&c.entries) {
        if oracle_is_finite(term) {
            continue;
        }
        let idx = oracle.arrival_index(oracle.budget());
        let ok = entry
            .witness
            .is_some_and(|(v, x)| idx.arrival(v).is_some() && idx.arrival(x).is_some() && !c.contains(v, x));
        r.check(format!("escape/{term}"), ok, json!({"value": entry.value, "witness": entry.witness}))?;
    }
    r.certificate("squares", &c.squares)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// s1

/// Extract an s₁-table and keep its stabilized rows.
fn stabilized_table(st: &EqStructure, budget: u64, stages: u64, settle: u64) -> Result<(S1Table, Vec<u64>)> {
    let pairs = PairEnumerationOracle::prompt(st, budget);
    let x = extract_s1(&pairs, stages).stage("s1 extraction")?;
    let rep = validate_s1(&x.table, settle);
    if let Some(v) = rep.violation {
        return Err(Error::InvalidS1(format!("{v:?}")));
    }
    let limits: Vec<u64> = rep.limits.iter().map(|l| l.m).collect();
    let lim = limits.clone();
    Ok((S1Table::from_fn(limits.len() as u64, move |i, _| lim[i as usize]), limits))
}

fn s1_roundtrip(s: &Scenario, r: &mut Report) -> Result<()> {
    let st = need(&s.structure, "structure")?;
    let pairs = PairEnumerationOracle::prompt(st, s.budget);
    let x = extract_s1(&pairs, s.stages).stage("s1 extraction")?;
    let rep = validate_s1(&x.table, s.settle);
    r.check(
        "table-valid",
        rep.valid && !rep.limits.is_empty(),
        json!({"stages": x.table.stages(), "stabilized": rep.limits.len(), "violation": rep.violation}),
    )?;
    let anchors = x.final_anchors();
    let mut mismatches = Vec::new();
    for l in &rep.limits {
        let size = anchors.get(l.i as usize).and_then(|&a| st.class_of(a).len());
        if size != Some(l.m as usize) {
            mismatches.push(json!({"i": l.i, "m": l.m, "realized": size}));
        }
    }
    r.check(
        "limits-realized",
        mismatches.is_empty() && !rep.limits.is_empty(),
        json!({"limits": rep.limits.len(), "mismatches": mismatches}),
    )?;
    let limits: Vec<u64> = rep.limits.iter().map(|l| l.m).collect();
    let lim = limits.clone();
    let table = S1Table::from_fn(limits.len() as u64, move |i, _| lim[i as usize]);
    let built = build_from_character(&CharacterApprox::empty(), &table, &DecidableSet::all()).stage("rebuild")?;
    let ch = character_of(&built.structure, built.limit)?;
    let want: BTreeMap<usize, usize> = limits.iter().map(|&m| (m as usize, 1)).collect();
    r.check(
        "character-reproduced",
        ch.counts() == want,
        json!({"realized_sizes": limits, "rebuilt": ch.counts().into_iter().collect::<Vec<_>>()}),
    )?;
    r.certificate("limits", &rep.limits)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// generic copies

fn witness_checks(r: &mut Report, c: &GenericCopy, base: &EqStructure, s: &Scenario) -> Result<bool> {
    let h = s.horizon;
    let w = verify_witness(&c.witness, &c.copy, h).stage("witness check")?;
    r.check("phi-agrees", w.disagreements == 0, json!({"pairs": w.pairs_checked, "disagreements": w.disagreements, "first": w.first_disagreement}))?;
    r.check("domain-contains-axa", w.domain_gaps == 0, json!({"gaps": w.domain_gaps}))?;
    r.check(
        "a-dense",
        at_least(&w.density_of_a, &one_minus(&s.tolerance)),
        json!({"density": to_p_q(&w.density_of_a), "floor": to_p_q(&one_minus(&s.tolerance))}),
    )?;
    let iso = check_isomorphism(&c.copy, base, c.perm.as_ref(), h.min(c.materialized)).stage("isomorphism check")?;
    r.check("copy-isomorphic", iso.passed(), &iso)?;
    r.profile("rho-a", sampled_profile(|x| c.a.contains(x), h));
    Ok(w.faithful_in_copy.faithful)
}

fn prop1(s: &Scenario, r: &mut Report) -> Result<()> {
    let st = need(&s.structure, "structure")?;
    let meta = need(&s.metadata, "metadata")?;
    let c = strongly_generic_copy(st, meta, &s.carrier, s.horizon, s.materialize.unwrap_or(s.horizon))
        .stage("strongly generic copy")?;
    let faithful = witness_checks(r, &c, st, s)?;
    let fr = is_faithful(&c.a, &c.copy, s.horizon)?;
    match meta.case {
        CaseTag::S1Subset => r.check(
            "faithfulness-counterexample",
            !faithful && fr.counterexample.is_some(),
            json!({"counterexample": fr.counterexample}),
        )?,
        _ => r.check("faithful", faithful && fr.faithful, json!({"counterexample": fr.counterexample}))?,
    }
    r.certificate("case", &c.case)?;
    Ok(())
}

fn thm4(s: &Scenario, r: &mut Report) -> Result<()> {
    let st = need(&s.structure, "structure")?;
    let meta = need(&s.metadata, "metadata")?;
    let (k, f) = match meta.case {
        CaseTag::S1Subset => {
            let (f, limits) = stabilized_table(st, s.budget, s.stages, s.settle)?;
            r.certificate("s1-limits", &limits)?;
            (CharacterApprox::empty(), f)
        }
        _ => (CharacterApprox::empty(), S1Table::from_fn(0, |_, _| 0)),
    };
    match faithful_generic_copy(st, meta, &k, &f, &s.carrier, s.horizon) {
        Err(Error::Unsupported(msg)) if meta.case == CaseTag::None => {
            r.check("no-faithful-copy", true, json!({"reason": msg}))?;
        }
        Err(e) => return Err(Error::Stage { stage: "faithful generic copy".into(), source: Box::new(e) }),
        Ok(_) if meta.case == CaseTag::None => {
            r.check("no-faithful-copy", false, "a copy was produced without a declared case")?;
        }
        Ok(c) => {
            let faithful = witness_checks(r, &c, st, s)?;
            let fr = is_faithful(&c.a, &c.copy, s.horizon)?;
            r.check("faithful", faithful && fr.faithful, json!({"counterexample": fr.counterexample}))?;
            r.certificate("case", &c.case)?;
        }
    }
    Ok(())
}

fn thm2(s: &Scenario, r: &mut Report) -> Result<()> {
    let st = need(&s.structure, "structure")?;
    let meta = need(&s.metadata, "metadata")?;
    let limit = s.materialize.unwrap_or(0).max(2 * s.horizon);
    let c = strongly_generic_copy(st, meta, &s.carrier, s.horizon, limit).stage("strongly generic copy")?;
    let rw = restrict_generic_witness(&c.witness, c.materialized, s.budget, s.horizon).stage("restriction")?;
    let chk = check_restriction(&rw, &c.witness, &c.copy, s.horizon);
    r.check("y-inside-a", chk.y_outside_a == 0, json!({"outside": chk.y_outside_a}))?;
    r.check("y-decided-correctly", chk.disagreements == 0, json!({"disagreements": chk.disagreements}))?;
    let segs = &rw.y.certificate.segments;
    let bad: Vec<u64> =
        segs.iter().filter(|g| !meets_dyadic(g.members, g.len(), g.bound_exp)).map(|g| g.index).collect();
    r.check("y-segments", bad.is_empty() && !segs.is_empty(), json!({"segments": segs.len(), "failing": bad}))?;
    r.check(
        "y-reaches-horizon",
        rw.y.decided_below() >= s.horizon && chk.y_size > 0,
        json!({"decided_below": rw.y.decided_below(), "y_size": chk.y_size}),
    )?;
    r.certificate("checkpoints", &rw.y.certificate.checkpoints)?;
    r.profile("rho-y", sampled_profile(|x| rw.y.contains(x) == Some(true), s.horizon));
    Ok(())
}

fn ex1(s: &Scenario, r: &mut Report) -> Result<()> {
    let b = need(&s.immune, "immune")?;
    let c_sizes = need(&s.k_set, "k-set")?;
    let y = need(&s.probe, "probe")?;
    let rest = one_class_per_size(c_sizes, 4 * s.horizon)?;
    let e = spliced(b, &rest);
    let meta = ScenarioMetadata::new(CaseTag::InfiniteClass { id: u64::MAX });
    let c = strongly_generic_copy(&e, &meta, &s.carrier, s.horizon, s.horizon).stage("generic copy")?;
    let faithful = witness_checks(r, &c, &e, s)?;
    r.check("infinite-class-faithful", faithful, json!({}))?;
    let met: Vec<u64> = (0..s.horizon).filter(|&x| y.contains(x) && !b.contains(x)).collect();
    let sizes: BTreeSet<usize> = met.iter().filter_map(|&x| e.class_of(x).len()).collect();
    let off_c: Vec<usize> = sizes.iter().copied().filter(|&k| !c_sizes.contains(k as u64)).collect();
    r.check(
        "probe-meets-finite-classes",
        !met.is_empty() && off_c.is_empty(),
        json!({"elements": met.len(), "sizes": sizes.len(), "sizes_outside_k": off_c}),
    )?;
    let fr = is_faithful(y, &e, s.horizon)?;
    r.check("probe-not-faithful", !fr.faithful && fr.counterexample.is_some(), json!({"counterexample": fr.counterexample}))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// coarse constructions

fn faithful_coarse(s: &Scenario, r: &mut Report) -> Result<()> {
    let k = need(&s.k_set, "k-set")?;
    let fc = build_faithful_coarse(k, s.horizon).stage("faithful coarse")?;
    let a = &fc.agreement;
    r.check("agreement-on-a-k", a.mismatches == 0, json!({"checked": a.checked, "mismatches": a.mismatches}))?;
    let bad: Vec<u64> = fc.a_k.checkpoints.iter().filter(|c| !c.holds).map(|c| c.n).collect();
    r.check(
        "deficit-bound",
        a.deficit_bound_holds && bad.is_empty(),
        json!({"checkpoints": fc.a_k.checkpoints.len(), "failing": bad}),
    )?;
    r.check(
        "faithful",
        a.faithful_in_canonical.faithful && a.faithful_in_r.faithful,
        json!({"canonical": a.faithful_in_canonical, "r": a.faithful_in_r}),
    )?;
    r.check(
        "r-character-in-k",
        a.max_count_per_size <= 2 && a.sizes_outside_k.is_empty(),
        json!({"max_count_per_size": a.max_count_per_size, "sizes_outside_k": a.sizes_outside_k}),
    )?;
    r.certificate("deficits", &fc.a_k.checkpoints)?;
    r.profile("rho-a-k", sampled_profile(|x| fc.a_k.set.contains(x), s.horizon));
    Ok(())
}

fn diagonal_k(s: &Scenario, r: &mut Report) -> Result<()> {
    let registry: OracleRegistry<_> = s.sets.iter().map(|x| LimitApproxOracle::from_set(x, s.budget)).collect();
    let d = diagonal_dense_k(&registry, s.horizon, s.budget);
    let bad: Vec<u32> = d.checkpoints.iter().filter(|c| !c.holds).map(|c| c.i).collect();
    r.check("density-checkpoints", bad.is_empty() && !d.checkpoints.is_empty(), json!({"checkpoints": d.checkpoints.len(), "failing": bad}))?;
    for (set, om) in s.sets.iter().zip(&d.omissions) {
        let ok = match om.omitted {
            Some(x) => !d.k.contains(x) && set.contains(x),
            // only an empty (or very sparse) set may escape within the cap
            None => set.select(0, s.budget).is_none(),
        };
        r.check(format!("omission/{}", set.label()), ok, json!({"i": om.i, "omitted": om.omitted}))?;
    }
    r.certificate("checkpoints", &d.checkpoints)?;
    r.profile("rho-k", sampled_profile(|x| d.k.contains(x), s.horizon));
    Ok(())
}

fn anti_coarse(s: &Scenario, r: &mut Report) -> Result<()> {
    let out = anti_coarse_k(&s.structures, s.horizon).stage("anti-coarse K")?;
    let acted: Vec<_> = out.actions.iter().filter(|a| matches!(a.outcome, Outcome::Acted)).collect();
    let preserved: Vec<u64> = acted.iter().filter_map(|a| a.preserved).collect();
    let distinct: BTreeSet<u64> = preserved.iter().copied().collect();
    let in_k = preserved.iter().all(|&m| out.k.contains(m));
    r.check(
        "one-preserved-per-action",
        preserved.len() == acted.len() && distinct.len() == preserved.len() && in_k,
        json!({"acted": acted.len(), "preserved": preserved}),
    )?;
    let below = (0..s.horizon).filter(|&m| out.k.contains(m)).count();
    r.check("k-infinite-at-horizon", below > preserved.len(), json!({"k_below_horizon": below}))?;
    let failing: Vec<u64> = acted.iter().filter(|a| a.bound_holds != Some(true)).map(|a| a.stage).collect();
    r.check("coverage-bound", failing.is_empty(), json!({"failing_stages": failing}))?;
    r.certificate("actions", &out.actions)?;
    r.profile("rho-k", sampled_profile(|x| out.k.contains(x), s.horizon));
    Ok(())
}

// ---------------------------------------------------------------------------
// (1,2)-structures

fn density_q(s: &Scenario, r: &mut Report) -> Result<()> {
    let sched = need(&s.schedule, "schedule")?;
    let (st, cps) = build_12_density_q(sched, s.horizon).stage("density-q builder")?;
    let bad: Vec<usize> = cps.iter().filter(|c| !c.exact).map(|c| c.n).collect();
    r.check("checkpoint-exact", bad.is_empty() && !cps.is_empty(), json!({"checkpoints": cps.len(), "failing": bad}))?;
    let ch = Snapshot::take(&st, s.horizon)?.character();
    let sizes: Vec<usize> = ch.entries.keys().copied().collect();
    r.check("sizes-one-and-two", sizes.iter().all(|&k| k == 1 || k == 2), json!({"sizes": sizes}))?;
    r.certificate("checkpoints", &cps)?;
    r.profile("rho-singletons", sampled_profile(|x| st.class_of(x).len() == Some(1), s.horizon));
    Ok(())
}

fn staged(s: &Scenario, r: &mut Report) -> Result<()> {
    let st = need(&s.structure, "structure")?;
    let q = *need(&s.q, "q")?;
    let out = staged_subrelation(st, &RealApprox::Exact(q), s.budget, s.horizon).stage("staged subrelation")?;
    let v = verify_staged(st, &out, s.horizon)?;
    r.check("subrelation", v.subset_violations == 0, json!({"pairs": v.pairs_checked, "violations": v.subset_violations}))?;
    r.check("log-append-only", v.log_violations == 0, json!({"entries": out.log.len(), "violations": v.log_violations}))?;
    r.check(
        "e-bound",
        v.bound_failures == 0 && out.stages.iter().all(|x| x.holds),
        json!({"stages": out.stages.len(), "failures": v.bound_failures}),
    )?;
    r.check("singletons-decided", v.missing_singletons == 0, json!({"missing": v.missing_singletons}))?;
    r.certificate("split-pairs", v.split_pairs)?;
    r.certificate("stages", &out.stages)?;
    r.profile(
        "rho-b1",
        sampled_profile(|x| matches!(out.status(x), Some(crate::iso::BStatus::Single)), s.horizon.min(out.decided_below)),
    );
    Ok(())
}

fn interleaved(s: &Scenario, r: &mut Report) -> Result<()> {
    let [a, b, c, d] = &s.sets[..] else { return Err(Error::Scenario("interleaved needs four sets".into())) };
    let list = |x: &DecidableSet| x.elements_below(s.budget);
    let (al, bl) = (list(a), list(b));
    let cl: Vec<u64> = list(c).into_iter().filter(|x| a.contains(*x)).collect();
    let dl: Vec<u64> = list(d).into_iter().filter(|x| b.contains(*x)).collect();
    let f = interleaved_bijection(&al, &bl, &cl, &dl).stage("interleaved bijection")?;
    let upto = |v: &[crate::iso::BoundPoint]| v.iter().take_while(|p| p.n <= s.horizon).all(|p| p.lhs <= p.rhs);
    r.check("matched-to-horizon", f.matched >= s.horizon, json!({"matched": f.matched, "truncated": f.truncated}))?;
    r.check("forward-bound", upto(&f.forward_bound), json!({"points": f.forward_bound.len().min(s.horizon as usize)}))?;
    r.check("backward-bound", upto(&f.backward_bound), json!({"points": f.backward_bound.len().min(s.horizon as usize)}))?;
    if cl.is_empty() && dl.is_empty() {
        let n = f.matched.min(s.horizon) as usize;
        let order = (0..n).all(|i| f.f.get(&al[i]) == Some(&bl[i]));
        r.check("order-isomorphism", order, json!({"checked": n}))?;
    }
    let fc_not_d: Vec<(u64, Rational)> = {
        let dset: BTreeSet<u64> = dl.iter().copied().collect();
        let mut img: Vec<u64> = cl.iter().filter_map(|x| f.f.get(x)).copied().filter(|y| !dset.contains(y)).collect();
        img.sort_unstable();
        let img: BTreeSet<u64> = img.into_iter().collect();
        sampled_profile(|y| img.contains(&y), s.horizon)
    };
    r.profile("rho-fc-minus-d", fc_not_d);
    Ok(())
}

fn char2(s: &Scenario, r: &mut Report) -> Result<()> {
    let st = need(&s.structure, "structure")?;
    let pairs = PairEnumerationOracle::prompt(st, s.budget);
    let w = generic_iso_char2(st, &pairs, &[2], s.horizon, &opts(s)).stage("generic iso")?;
    let target = canonical_12(PairsMode::DensePairs);
    let v = verify_partial_iso(&w, st, &target, s.horizon)?;
    r.check("relation-preserved", v.passed(), &v)?;
    let floor = one_minus(&s.tolerance);
    r.check(
        "domain-dense",
        w.domain_density >= floor,
        json!({"density": to_p_q(&w.domain_density), "floor": to_p_q(&floor)}),
    )?;
    r.check("range-dense", w.range_density >= floor, json!({"density": to_p_q(&w.range_density), "floor": to_p_q(&floor)}))?;
    // a second run at half the horizon merged with the inverse of the first
    let theta = generic_iso_char2(st, &pairs, &[2], s.horizon / 2, &opts(s)).stage("generic iso, half horizon")?;
    let merged = w.invert().and_then(|psi| PartialIsoWitness::merge(&theta, &psi));
    match merged {
        Ok(m) => {
            let covers = (0..s.horizon).all(|x| (theta.get(x).is_none() && w.get(x).is_none()) || m.get(x).is_some());
            let mv = verify_partial_iso(&m, st, &target, s.horizon)?;
            r.check("merge-with-inverse", covers && mv.passed(), json!({"merged_domain": mv.domain_below}))?;
        }
        Err(e) => r.check("merge-with-inverse", false, e.to_string())?,
    }
    if !w.warnings.is_empty() {
        r.certificate("warnings", &w.warnings)?;
    }
    r.profile("rho-domain", sampled_profile(|x| w.get(x).is_some(), s.horizon));
    Ok(())
}

fn char1(s: &Scenario, r: &mut Report) -> Result<()> {
    let a = need(&s.structure, "structure")?;
    let b = need(&s.other, "other")?;
    let out = coarse_iso_char1(a, b, (&[1], &[1]), s.horizon, s.budget.max(s.horizon * 4), &opts(s)).stage("coarse iso")?;
    let v = verify_weak_coarse(&out.witness, a, b)?;
    let floor = one_minus(&s.tolerance);
    r.check("theta-on-c", v.theta_failures == 0, json!({"pairs": v.pairs_checked, "failures": v.theta_failures}))?;
    r.check("f-extends-theta", v.f_theta_disagreements == 0 && v.f_injective, json!({"disagreements": v.f_theta_disagreements, "injective": v.f_injective}))?;
    r.check("c-dense", v.density_c >= floor && v.density_fc >= floor, json!({"c": to_p_q(&v.density_c), "fc": to_p_q(&v.density_fc), "floor": to_p_q(&floor)}))?;
    r.certificate("imbalance", out.imbalance)?;
    r.certificate("trimmed", &out.trimmed)?;
    r.profile("rho-c", sampled_profile(|x| out.witness.c.get(x as usize).copied().unwrap_or(false), s.horizon));
    Ok(())
}

fn weak_coarse(s: &Scenario, r: &mut Report) -> Result<()> {
    let a = need(&s.structure, "structure")?;
    let b = need(&s.other, "other")?;
    let q = RealApprox::Exact(*need(&s.q, "q")?);
    let out = weak_coarse_iso_12(a, b, (&q, &q), s.budget, s.horizon).stage("weak coarse iso")?;
    for (name, t) in [("case-1", &out.case1), ("case-2", &out.case2), ("case-3", &out.case3)] {
        r.check(name, t.failures == 0 && t.checked > 0, t)?;
    }
    r.check("complement-identity", out.complement_mismatches == 0, json!({"mismatches": out.complement_mismatches}))?;
    r.check(
        "density-e",
        out.density_e >= s.density_floor,
        json!({"density": to_p_q(&out.density_e), "floor": to_p_q(&s.density_floor)}),
    )?;
    r.check("g1-bounds", out.g1_forward_bound_holds && out.g1_backward_bound_holds, json!({"forward": out.g1_forward_bound_holds, "backward": out.g1_backward_bound_holds}))?;
    let v = verify_weak_coarse(&out.witness, a, b)?;
    r.check("witness-verified", v.theta_failures == 0 && v.f_theta_disagreements == 0 && v.f_injective, json!({"pairs": v.pairs_checked}))?;
    r.certificate("stages-a", &out.stages_a)?;
    r.certificate("stages-b", &out.stages_b)?;
    r.profile("rho-e", sampled_profile(|x| out.witness.c.get(x as usize).copied().unwrap_or(false), s.horizon));
    Ok(())
}

fn thm12(s: &Scenario, r: &mut Report) -> Result<()> {
    let registry: OracleRegistry<_> = s.oracles.iter().map(|(_, o)| o.clone()).collect();
    let cand = *need(&s.candidate, "candidate")?;
    let d = thm12_demo(&registry, cand, s.budget, s.horizon);
    let bad: Vec<u32> = d.certificates.iter().filter(|c| !c.holds).map(|c| c.k).collect();
    r.check("sparse-certificates", bad.is_empty() && !d.certificates.is_empty(), json!({"k_max": d.certificates.last().map(|c| c.k), "failing": bad}))?;
    let sset: BTreeSet<u64> = d.sparse_elements.iter().copied().collect();
    let pairs = canonical_12(PairsMode::SparsePairs);
    let leaks: Vec<u64> = d
        .obstruction_avoiding
        .iter()
        .copied()
        .filter(|&x| sset.contains(&cand.apply(x)) || pairs.class_of(x).len() == Some(2))
        .take(10)
        .collect();
    r.check("obstruction-images-avoid-s", leaks.is_empty(), json!({"leaks": leaks}))?;
    r.check(
        "obstruction-size",
        d.obstruction_avoiding.len() as u64 >= s.min_avoiding,
        json!({"avoiding": d.obstruction_avoiding.len(), "required": s.min_avoiding, "hits": d.obstruction_hits}),
    )?;
    r.certificate("sparse-elements", &d.sparse_elements)?;
    r.certificate("unpaired", &d.unpaired)?;
    r.certificate("entries", &d.entries)?;
    let members: BTreeSet<u64> = d.sparse_elements.iter().copied().collect();
    r.profile("rho-s", sampled_profile(|x| members.contains(&x), s.horizon));
    Ok(())
}
