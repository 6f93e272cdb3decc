//! End-to-end acceptance: every shipped scenario is run once, each criterion
//! checks the relevant reports and then recomputes its key quantities with an
//! oracle written here, and a second run of the whole suite must match the
//! first byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gencomp::density::{diagonal_antiproduct, extract_dense_subset, square_density_check};
use gencomp::enumeration::{EnumerationOracle, LimitApproxOracle, OracleRegistry};
use gencomp::generic::{
    anti_coarse_k, build_faithful_coarse, diagonal_dense_k, faithful_generic_copy, strongly_generic_copy, CaseTag, GenericCopy,
    Outcome,
};
use gencomp::iso::{
    build_12_density_q, interleaved_bijection, staged_subrelation, thm12_demo, weak_coarse_iso_12, BStatus, RealApprox,
};
use gencomp::rational::{ratio, to_p_q, Rational};
use gencomp::report::{emit_report, Report};
use gencomp::runner::run_scenario;
use gencomp::s1::{CharacterApprox, S1Table};
use gencomp::scenario::{oracle_is_finite, Overrides, Scenario};
use gencomp::structures::{canonical_12, Class, EqStructure, PairsMode};

type Verdict = Result<String, String>;

struct Suite {
    paths: Vec<PathBuf>,
    scenarios: BTreeMap<String, Scenario>,
    reports: BTreeMap<String, Report>,
}

impl Suite {
    fn load() -> Self {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
        let mut paths: Vec<PathBuf> =
            std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "toml")).collect();
        paths.sort();
        let mut scenarios = BTreeMap::new();
        let mut reports = BTreeMap::new();
        for p in &paths {
            let s = Scenario::load(p, &Overrides::default()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            let r = run_scenario(&s).unwrap_or_else(|e| panic!("{}: {e}", s.name));
            reports.insert(s.name.clone(), r);
            scenarios.insert(s.name.clone(), s);
        }
        Self { paths, scenarios, reports }
    }

    fn scenario(&self, name: &str) -> Result<&Scenario, String> {
        self.scenarios.get(name).ok_or_else(|| format!("scenario {name} is not shipped"))
    }

    /// Every check in the report passes and each listed check (or prefix ending in `/`) is present.
    fn passes(&self, name: &str, required: &[&str]) -> Result<&Report, String> {
        let r = self.reports.get(name).ok_or_else(|| format!("no report for {name}"))?;
        report_passes(r, required)?;
        Ok(r)
    }
}

fn report_passes<'a>(r: &'a Report, required: &[&str]) -> Result<&'a Report, String> {
    if let Some(f) = r.failures().next() {
        return Err(format!("{}: {} failed with {}", r.scenario, f.name, f.measured));
    }
    for want in required {
        let found = if want.ends_with('/') {
            r.invariants.iter().any(|i| i.name.starts_with(want))
        } else {
            r.invariants.iter().any(|i| i.name == *want)
        };
        if !found {
            return Err(format!("{}: check {want} missing", r.scenario));
        }
    }
    Ok(r)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

/// First arrival stage of each `x < below`, scanning every stage up to the budget.
fn arrivals_below(o: &EnumerationOracle, below: u64) -> Vec<Option<u64>> {
    let mut arr = vec![None; below as usize];
    for stage in 0..=o.budget() {
        for x in o.arrivals(stage) {
            if x < below && arr[x as usize].is_none() {
                arr[x as usize] = Some(stage);
            }
        }
    }
    arr
}

/// `(len − members)·2^k ≤ len`, i.e. density at least `1 − 2^{−k}`.
fn meets_dyadic(members: u64, len: u64, k: u32) -> bool {
    let missing = len - members;
    missing == 0 || (k < 64 && (u128::from(missing) << k) <= u128::from(len))
}

fn finite_members(s: &EqStructure, x: u64) -> Option<Vec<u64>> {
    match s.class_of(x) {
        Class::Finite(m) => Some(m),
        _ => None,
    }
}

// ---------------------------------------------------------------------------

fn c1_density_exactness(suite: &Suite) -> Verdict {
    let s = suite.scenario("lemma2-sweep")?;
    suite.passes("lemma2-sweep", &["families-exact", "square-law/"])?;
    ensure(s.sets.len() >= 10, || format!("only {} families", s.sets.len()))?;
    let h = 10_000u64;
    ensure(s.horizon >= h, || format!("horizon {}", s.horizon))?;
    for set in &s.sets {
        // incremental pair count: a new member m adds (m, b), (b, m) for earlier b, and (m, m)
        let (mut c, mut pairs) = (0u64, 0u64);
        for n in 1..=h {
            if set.contains(n - 1) {
                pairs += 2 * c + 1;
                c += 1;
            }
            let got = square_density_check(set, n).map_err(|e| e.to_string())?;
            let x = ratio(c, n);
            if got.linear != x || got.square != ratio(pairs, n * n) || got.square != x * x {
                return Err(format!("{} at n = {n}: y = {}, x = {}", set.label(), to_p_q(&got.square), to_p_q(&got.linear)));
            }
        }
    }
    Ok(format!("{} families, every n ≤ {h}, y = x² exactly", s.sets.len()))
}

fn c2_extraction(suite: &Suite) -> Verdict {
    let s = suite.scenario("lemma1-extract")?;
    suite.passes("lemma1-extract", &["segments/", "b-inside-a/"])?;
    let h = 100_000u64;
    ensure(s.horizon >= h, || format!("horizon {}", s.horizon))?;
    let mut dense = 0;
    let mut segments = 0;
    for (term, o) in &s.oracles {
        let arr = arrivals_below(o, h);
        // upper density one at the horizon: everything below it is enumerated within budget
        if arr.iter().all(Option::is_some) {
            dense += 1;
        }
        let b = extract_dense_subset(o, h).map_err(|e| format!("{term}: {e}"))?;
        for seg in &b.certificate.segments {
            let k = seg.index as u32;
            let members = (seg.start..seg.end).filter(|&x| arr.get(x as usize).copied().flatten().is_some_and(|t| t <= seg.stage)).count() as u64;
            ensure(members == seg.members && seg.bound_exp == k && meets_dyadic(members, seg.len(), k), || {
                format!("{term}: segment {k} [{}, {}) has {members} members at stage {}", seg.start, seg.end, seg.stage)
            })?;
        }
        segments += b.certificate.segments.len();
        ensure(b.decided_below() >= h, || format!("{term}: decided below {}", b.decided_below()))?;
        for x in 0..h {
            if b.contains(x) == Some(true) && arr[x as usize].is_none() {
                return Err(format!("{term}: {x} in B but not in A"));
            }
        }
    }
    ensure(dense >= 3, || format!("only {dense} oracles of upper density one"))?;
    Ok(format!("{dense} oracles, {segments} segments recounted, B ⊆ A below {h}"))
}

fn c3_diagonal(suite: &Suite) -> Verdict {
    let s = suite.scenario("thm1-diagonal")?;
    suite.passes("thm1-diagonal", &["square-bounds", "square-recount", "escape/"])?;
    let registry: OracleRegistry<_> = s.oracles.iter().map(|(_, o)| o.clone()).collect();
    let c = diagonal_antiproduct(&registry, 1 << 14);
    let mut brute_checked = 0;
    for i in 1..=14u32 {
        let side = 1u64 << i;
        let sq = c.squares.iter().find(|q| q.side == side).ok_or_else(|| format!("no checkpoint at 2^{i}"))?;
        let need = (side - u64::from(i)).pow(2);
        ensure(sq.in_c >= need, || format!("2^{i}: {} pairs in C, need {need}", sq.in_c))?;
        if i <= 12 {
            let brute = (0..side).map(|a| (0..side).filter(|&b| c.contains(a, b)).count() as u64).sum::<u64>();
            ensure(brute == sq.in_c, || format!("2^{i}: recount {brute} vs logged {}", sq.in_c))?;
            brute_checked += 1;
        }
    }
    let mut escapes = 0;
    for ((term, o), entry) in s.oracles.iter().zip(&c.entries) {
        if oracle_is_finite(term) {
            continue;
        }
        let (v, x) = entry.witness.ok_or_else(|| format!("{term}: no pair outside C"))?;
        let arr = arrivals_below(o, v.max(x) + 1);
        ensure(arr[v as usize].is_some() && arr[x as usize].is_some() && !c.contains(v, x), || {
            format!("{term}: ({v}, {x}) is not in A × A ∖ C")
        })?;
        escapes += 1;
    }
    Ok(format!("14 checkpoints ({brute_checked} recounted pair by pair), {escapes} infinite oracles escaped"))
}

fn c4_s1_roundtrip(suite: &Suite) -> Verdict {
    let mut reports: Vec<(String, Report, EqStructure)> = Vec::new();
    for name in ["s1-roundtrip", "s1-roundtrip-linear"] {
        let s = suite.scenario(name)?;
        reports.push((name.into(), suite.reports[name].clone(), s.structure.clone().unwrap()));
    }
    for structure in ["linear(1, 1)", "linear(3, 2)", "sizes-from(non-squares)"] {
        let text = format!(
            "name = \"s1-{}\"\nconstruction = \"s1-roundtrip\"\nstructure = \"{structure}\"\nstages = 30\nbudget = 8000\n",
            structure.replace(|c: char| !c.is_ascii_alphanumeric(), "-")
        );
        let s = Scenario::from_toml(&text, &Overrides::default()).map_err(|e| e.to_string())?;
        let r = run_scenario(&s).map_err(|e| format!("{structure}: {e}"))?;
        reports.push((structure.into(), r, s.structure.unwrap()));
    }
    let mut total = 0;
    for (label, r, st) in &reports {
        report_passes(r, &["table-valid", "limits-realized", "character-reproduced"])?;
        let limits = r.certificates["limits"].as_array().ok_or("limits certificate missing")?;
        let ms: Vec<u64> = limits.iter().map(|l| l["m"].as_u64().unwrap()).collect();
        ensure(ms.windows(2).all(|w| w[0] < w[1]), || format!("{label}: limits not increasing: {ms:?}"))?;
        // sizes actually realized in the structure, scanning well past the anchors
        let top = *ms.last().ok_or_else(|| format!("{label}: no stabilized limits"))?;
        let mut sizes = BTreeSet::new();
        for x in 0..(top * top * 4).max(20_000) {
            if let Some(n) = st.class_of(x).len() {
                sizes.insert(n as u64);
            }
        }
        let missing: Vec<u64> = ms.iter().copied().filter(|m| !sizes.contains(m)).collect();
        ensure(missing.is_empty(), || format!("{label}: limits {missing:?} are not class sizes"))?;
        total += ms.len();
    }
    Ok(format!("{} structures, {total} stabilized limits all realized", reports.len()))
}

/// Φ is defined on A × A below `h` and agrees there with the copy.
fn witness_oracle(c: &GenericCopy, h: u64, label: &str) -> Result<u64, String> {
    let a: Vec<u64> = (0..h).filter(|&x| c.a.contains(x)).collect();
    let mut pairs = 0u64;
    for &x in &a {
        for &y in &a {
            let truth = c.copy.related(x, y).ok_or_else(|| format!("{label}: copy undecided at ({x}, {y})"))?;
            ensure(c.witness.phi(x, y) == Some(truth), || format!("{label}: Φ({x}, {y}) disagrees"))?;
            pairs += 1;
        }
    }
    Ok(pairs)
}

/// A member of `A` whose copy class leaves `A`, if any.
fn faithfulness_break(c: &GenericCopy, h: u64) -> Option<(u64, u64)> {
    (0..h).filter(|&x| c.a.contains(x)).find_map(|x| {
        (0..h).find(|&y| c.copy.related(x, y) == Some(true) && !c.a.contains(y)).map(|y| (x, y))
    })
}

fn c5_generic_copies(suite: &Suite) -> Verdict {
    let h = 2000u64;
    let mut pairs = 0u64;
    let mut counterexample = None;
    for name in ["prop1-infinite-class", "prop1-repeated-size", "prop1-unbounded"] {
        let s = suite.scenario(name)?;
        ensure(s.horizon >= h, || format!("{name}: horizon {}", s.horizon))?;
        let meta = s.metadata.as_ref().unwrap();
        let unbounded = meta.case == CaseTag::S1Subset;
        suite.passes(name, &["phi-agrees", "domain-contains-axa", if unbounded { "faithfulness-counterexample" } else { "faithful" }])?;
        let c = strongly_generic_copy(s.structure.as_ref().unwrap(), meta, &s.carrier, s.horizon, s.materialize.unwrap_or(s.horizon))
            .map_err(|e| format!("{name}: {e}"))?;
        pairs += witness_oracle(&c, h, name)?;
        match (unbounded, faithfulness_break(&c, h)) {
            (true, Some(p)) => counterexample = Some(p),
            (true, None) => return Err(format!("{name}: no faithfulness counterexample below {h}")),
            (false, Some((x, y))) => return Err(format!("{name}: class of {x} leaves A at {y}")),
            (false, None) => {}
        }
    }
    for name in ["thm4-infinite-class", "thm4-s1"] {
        suite.passes(name, &["phi-agrees", "domain-contains-axa", "faithful"])?;
    }
    suite.passes("thm4-none", &["no-faithful-copy"])?;
    // the faithful variant, rebuilt and checked here
    let s = suite.scenario("thm4-infinite-class")?;
    let c = faithful_generic_copy(
        s.structure.as_ref().unwrap(),
        s.metadata.as_ref().unwrap(),
        &CharacterApprox::empty(),
        &S1Table::from_fn(0, |_, _| 0),
        &s.carrier,
        s.horizon,
    )
    .map_err(|e| e.to_string())?;
    pairs += witness_oracle(&c, h, "thm4-infinite-class")?;
    if let Some((x, y)) = faithfulness_break(&c, h) {
        return Err(format!("faithful copy: class of {x} leaves A at {y}"));
    }
    let (x, y) = counterexample.unwrap();
    Ok(format!("3 cases + faithful variants, {pairs} pairs of A × A below {h}; unbounded case breaks at ({x}, {y})"))
}

fn c6_coarse_constructions(suite: &Suite) -> Verdict {
    suite.passes("faithful-coarse", &["agreement-on-a-k", "deficit-bound", "faithful"])?;
    suite.passes("diagonal-k", &["density-checkpoints", "omission/"])?;
    suite.passes("anti-coarse-k", &["one-preserved-per-action", "k-infinite-at-horizon", "coverage-bound"])?;

    let s = suite.scenario("faithful-coarse")?;
    let h = 10_000u64;
    ensure(s.horizon >= h, || format!("horizon {}", s.horizon))?;
    let k = s.k_set.as_ref().unwrap();
    let fc = build_faithful_coarse(k, h).map_err(|e| e.to_string())?;
    // canonical classes are {T_{j−1}, …, T_j − 1} of size j, T_j = j(j+1)/2
    let mut j = 1u64;
    let mut agreed = 0;
    while j * (j - 1) / 2 < h {
        let (lo, hi) = (j * (j - 1) / 2, j * (j + 1) / 2);
        if k.contains(j) {
            for x in lo..hi.min(h) {
                ensure(finite_members(&fc.r, x) == Some((lo..hi).collect()), || format!("x = {x}: class differs on A_K"))?;
                ensure(fc.a_k.set.contains(x), || format!("{x} missing from A_K"))?;
                agreed += 1;
            }
        }
        j += 1;
    }
    let mut triangular = 0;
    for n in 1u64.. {
        let t = n * (n + 1) / 2;
        if t > h {
            break;
        }
        let missing: Vec<u64> = (1..=n).filter(|&j| !k.contains(j)).collect();
        let outside: u64 = missing.iter().sum();
        let deficit = ratio(outside, t);
        ensure(deficit <= ratio(2 * missing.len() as u64, n), || format!("T_{n}: deficit {}", to_p_q(&deficit)))?;
        if let Some(cp) = fc.a_k.checkpoints.iter().find(|c| c.n == n) {
            ensure(cp.deficit == deficit, || format!("T_{n}: logged deficit {} vs {}", to_p_q(&cp.deficit), to_p_q(&deficit)))?;
        }
        triangular += 1;
    }

    let s = suite.scenario("diagonal-k")?;
    let registry: OracleRegistry<_> = s.sets.iter().map(|x| LimitApproxOracle::from_set(x, s.budget)).collect();
    let d = diagonal_dense_k(&registry, s.horizon, s.budget);
    for cp in &d.checkpoints {
        let count = (0..cp.n).filter(|&x| d.k.contains(x)).count() as u64;
        // (2^i − i)/2^i of the first n = 2^i
        let need = ratio(cp.n - u64::from(cp.i).min(cp.n), cp.n);
        ensure(count == cp.count && ratio(count, cp.n) >= need, || format!("checkpoint {}: {count} of {}", cp.i, cp.n))?;
    }

    let s = suite.scenario("anti-coarse-k")?;
    let out = anti_coarse_k(&s.structures, s.horizon).map_err(|e| e.to_string())?;
    let mut acted = 0;
    for (e, a) in out.actions.iter().enumerate() {
        if !matches!(a.outcome, Outcome::Acted) {
            continue;
        }
        acted += 1;
        ensure(a.modulus == 1 << (e + 2), || format!("action {e}: modulus {}", a.modulus))?;
        let m = a.preserved.ok_or("acted without preserving")?;
        ensure(out.k.contains(m), || format!("preserved {m} not in K"))?;
        let (cov, eps) = (a.coverage.unwrap(), a.epsilon.unwrap());
        let bound = Rational::from_integer(1) - ratio(1, a.modulus) + eps;
        ensure(cov <= bound, || format!("action {e}: coverage {} > {}", to_p_q(&cov), to_p_q(&bound)))?;
    }
    let k_below = (0..s.horizon).filter(|&m| out.k.contains(m)).count();
    ensure(acted > 0 && k_below > acted, || format!("{acted} actions, |K ∩ horizon| = {k_below}"))?;
    Ok(format!(
        "A_K agreement on {agreed} elements, {triangular} triangular checkpoints; {} diagonal checkpoints; {acted} anti-coarse actions",
        d.checkpoints.len()
    ))
}

fn c7_density_q(suite: &Suite) -> Verdict {
    let mut names = Vec::new();
    let mut constant_half = false;
    let mut oscillating = false;
    for (name, s) in &suite.scenarios {
        let Some(sched) = &s.schedule else { continue };
        if s.construction.id() != "density-q" {
            continue;
        }
        suite.passes(name, &["checkpoint-exact", "sizes-one-and-two"])?;
        let (st, cps) = build_12_density_q(sched, s.horizon).map_err(|e| e.to_string())?;
        ensure(!cps.is_empty(), || format!("{name}: no checkpoints"))?;
        let qs: Vec<Rational> = cps.iter().map(|c| c.q_n).collect();
        constant_half |= qs.iter().all(|q| *q == ratio(1, 2));
        oscillating |= qs.windows(2).any(|w| w[0] < w[1]) && qs.windows(2).any(|w| w[0] > w[1]);
        let top = cps.iter().map(|c| c.s_n).max().unwrap();
        let mut singles = vec![0u64; top as usize + 1];
        for x in 0..top {
            singles[x as usize + 1] = singles[x as usize] + u64::from(st.class_of(x).len() == Some(1));
        }
        for c in &cps {
            let want = c.q_n * Rational::from_integer(i128::from(c.s_n));
            ensure(Rational::from_integer(i128::from(singles[c.s_n as usize])) == want, || {
                format!("{name}: {} singletons below s_{} = {}, want {}", singles[c.s_n as usize], c.n, c.s_n, to_p_q(&want))
            })?;
        }
        names.push(format!("{name} ({} checkpoints)", cps.len()));
    }
    ensure(names.len() >= 3 && constant_half && oscillating, || format!("schedules: {names:?}"))?;
    Ok(names.join(", "))
}

fn c8_staged(suite: &Suite) -> Verdict {
    let s = suite.scenario("staged-subrelation")?;
    suite.passes("staged-subrelation", &["subrelation", "log-append-only", "e-bound", "singletons-decided"])?;
    let h = 10_000u64;
    ensure(s.horizon >= h, || format!("horizon {}", s.horizon))?;
    let a = s.structure.as_ref().unwrap();
    let q = s.q.unwrap();
    let out = staged_subrelation(a, &RealApprox::Exact(q), s.budget, h).map_err(|e| e.to_string())?;
    ensure(out.decided_below >= h, || format!("decided below {}", out.decided_below))?;
    for x in 0..h {
        if let Some(BStatus::Paired(y)) = out.status(x) {
            ensure(a.related(x, y) == Some(true) && out.status(y) == Some(BStatus::Paired(x)), || format!("R_B pairs {x}, {y}"))?;
        }
    }
    let mut seen = BTreeSet::new();
    let mut last_step = 0;
    for e in &out.log {
        ensure(seen.insert(e.x) && e.step >= last_step && out.status(e.x) == Some(BStatus::Single), || {
            format!("log entry {} at step {} rewrites history", e.x, e.step)
        })?;
        last_step = e.step;
    }
    let mut singles = vec![0u64; 1];
    for st in &out.stages {
        while (singles.len() as u64) <= st.n_i {
            let x = singles.len() as u64 - 1;
            let last = *singles.last().unwrap();
            singles.push(last + u64::from(a.class_of(x).len() == Some(1)));
        }
        let q_i = ratio(singles[st.n_i as usize], st.n_i);
        let bound = q - q_i + ratio(1, 1u64 << st.i.min(62));
        ensure(q_i == st.q_i && st.e_i < bound, || {
            format!("stage {}: e = {}, q_i = {}, bound {}", st.i, to_p_q(&st.e_i), to_p_q(&q_i), to_p_q(&bound))
        })?;
    }
    Ok(format!("R_B ⊆ R below {h}, {} log entries, {} stages with e_i < q − q_i + 2^-i", out.log.len(), out.stages.len()))
}

fn c9_interleaved(suite: &Suite) -> Verdict {
    let h = 10_000usize;
    let mut families = 0;
    let mut order = false;
    for (name, s) in &suite.scenarios {
        if s.construction.id() != "interleaved" {
            continue;
        }
        suite.passes(name, &["matched-to-horizon", "forward-bound", "backward-bound"])?;
        let [a, b, c, d] = &s.sets[..] else { return Err(format!("{name}: four sets expected")) };
        let al = a.elements_below(s.budget);
        let bl = b.elements_below(s.budget);
        let cl: Vec<u64> = c.elements_below(s.budget).into_iter().filter(|&x| a.contains(x)).collect();
        let dl: Vec<u64> = d.elements_below(s.budget).into_iter().filter(|&x| b.contains(x)).collect();
        let f = interleaved_bijection(&al, &bl, &cl, &dl).map_err(|e| e.to_string())?;
        ensure(f.matched as usize >= h, || format!("{name}: matched {}", f.matched))?;
        let inv: HashMap<u64, u64> = f.f.iter().map(|(&x, &y)| (y, x)).collect();
        ensure(inv.len() == f.f.len(), || format!("{name}: f is not injective"))?;
        let (cs, ds): (BTreeSet<u64>, BTreeSet<u64>) = (cl.iter().copied().collect(), dl.iter().copied().collect());
        let fc_not_d: BTreeSet<u64> = cl.iter().filter_map(|x| f.f.get(x)).copied().filter(|y| !ds.contains(y)).collect();
        let finv_d_not_c: BTreeSet<u64> = dl.iter().filter_map(|y| inv.get(y)).copied().filter(|x| !cs.contains(x)).collect();
        for n in 1..=h {
            let (an, bn) = (al[n], bl[n]);
            let fwd = (fc_not_d.range(..bn).count(), cs.range(..an).count());
            let bwd = (finv_d_not_c.range(..an).count(), ds.range(..bn).count());
            ensure(fwd.0 <= fwd.1 && bwd.0 <= bwd.1, || format!("{name}, n = {n}: forward {fwd:?}, backward {bwd:?}"))?;
        }
        if cl.is_empty() && dl.is_empty() {
            ensure((0..h).all(|i| f.f.get(&al[i]) == Some(&bl[i])), || format!("{name}: not the order isomorphism"))?;
            order = true;
        }
        families += 1;
    }
    ensure(families >= 3 && order, || format!("{families} families, order case {order}"))?;
    Ok(format!("{families} families, both bounds at every n ≤ {h}, C = D = ∅ gives the order isomorphism"))
}

fn c10_weak_coarse(suite: &Suite) -> Verdict {
    let s = suite.scenario("weak-coarse-iso")?;
    suite.passes("weak-coarse-iso", &["case-1", "case-2", "case-3", "complement-identity", "density-e", "witness-verified"])?;
    let h = 10_000u64;
    ensure(s.horizon >= h, || format!("horizon {}", s.horizon))?;
    let (a, b) = (s.structure.as_ref().unwrap(), s.other.as_ref().unwrap());
    let q = s.q.unwrap();
    ensure(q == ratio(1, 2), || format!("q = {}", to_p_q(&q)))?;
    // both inputs have singleton density near 1/2 at the horizon
    for (label, st) in [("A", a), ("B", b)] {
        let singles = (0..h).filter(|&x| st.class_of(x).len() == Some(1)).count() as u64;
        let rho = ratio(singles, h);
        ensure(rho >= q - ratio(1, 20) && rho <= q + ratio(1, 20), || format!("{label}: singleton density {}", to_p_q(&ratio(singles, h))))?;
    }
    let rq = RealApprox::Exact(q);
    let out = weak_coarse_iso_12(a, b, (&rq, &rq), s.budget, h).map_err(|e| e.to_string())?;
    let w = &out.witness;
    let e: Vec<u64> = (0..h).filter(|&x| w.c[x as usize]).collect();
    let density = ratio(e.len() as u64, h);
    ensure(density == out.density_e && density >= ratio(9, 10), || format!("density of E {}", to_p_q(&density)))?;
    // θ on E: injective, agrees with f, carries classes to classes of the same size
    let mut image: HashMap<u64, u64> = HashMap::new();
    for &x in &e {
        let t = w.theta[x as usize];
        ensure(w.f[x as usize] == t, || format!("f({x}) ≠ θ({x})"))?;
        ensure(image.insert(t, x).is_none(), || format!("θ not injective at {x}"))?;
        let ca = finite_members(a, x).ok_or_else(|| format!("A-class of {x} undecided"))?;
        let cb = finite_members(b, t).ok_or_else(|| format!("B-class of {t} undecided"))?;
        ensure(ca.len() == cb.len(), || format!("|[{x}]| = {} but |[θ({x})]| = {}", ca.len(), cb.len()))?;
    }
    for &x in &e {
        let t = w.theta[x as usize];
        for &u in &finite_members(b, t).unwrap() {
            if let Some(&y) = image.get(&u) {
                ensure(a.related(x, y) == Some(true), || format!("θ relates {x} and {y} wrongly"))?;
            }
        }
        for &y in &finite_members(a, x).unwrap() {
            if y < h && w.c[y as usize] {
                ensure(b.related(t, w.theta[y as usize]) == Some(true), || format!("θ splits {x} and {y}"))?;
            }
        }
    }
    let band = out.stages_a.iter().chain(&out.stages_b).map(|r| r.divergence).max().unwrap_or_default();
    Ok(format!("|E ∩ {h}|/{h} = {} ≥ 9/10, θ checked on all of E; largest logged divergence {}", to_p_q(&density), to_p_q(&band)))
}

fn c11_sparse_simple(suite: &Suite) -> Verdict {
    let s = suite.scenario("thm12-demo")?;
    suite.passes("thm12-demo", &["sparse-certificates", "obstruction-images-avoid-s", "obstruction-size"])?;
    let registry: OracleRegistry<_> = s.oracles.iter().map(|(_, o)| o.clone()).collect();
    let cand = s.candidate.unwrap();
    let d = thm12_demo(&registry, cand, s.budget, s.horizon);
    let sset: BTreeSet<u64> = d.sparse_elements.iter().copied().collect();
    for k in 0..=14u32 {
        let count = sset.range(..1u64 << k).count() as u64;
        ensure(count <= u64::from(k), || format!("|S ∩ 2^{k}| = {count}"))?;
        let logged = d.certificates.iter().find(|c| c.k == k).ok_or_else(|| format!("no certificate for k = {k}"))?;
        ensure(logged.count == count, || format!("k = {k}: logged {} vs {count}", logged.count))?;
    }
    let pairs = canonical_12(PairsMode::SparsePairs);
    let distinct: BTreeSet<u64> = d.obstruction_avoiding.iter().copied().collect();
    for &x in &distinct {
        ensure(x < s.budget && pairs.class_of(x).len() == Some(1) && !sset.contains(&cand.apply(x)), || {
            format!("{x} is not an avoiding element of the obstruction set")
        })?;
    }
    ensure(distinct.len() >= 50, || format!("only {} avoiding elements", distinct.len()))?;
    Ok(format!("|S ∩ 2^k| ≤ k for k ≤ 14, {} obstruction elements avoid S", distinct.len()))
}

fn c12_determinism(suite: &Suite) -> Verdict {
    let (one, two) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut files = 0;
    for p in &suite.paths {
        let s = Scenario::load(p, &Overrides::default()).map_err(|e| e.to_string())?;
        let again = run_scenario(&s).map_err(|e| e.to_string())?;
        let first = &suite.reports[&s.name];
        let a = emit_report(first, s.format(), one.path()).map_err(|e| e.to_string())?;
        let b = emit_report(&again, s.format(), two.path()).map_err(|e| e.to_string())?;
        ensure(a.len() == b.len(), || format!("{}: file counts differ", s.name))?;
        for (x, y) in a.iter().zip(&b) {
            let (bx, by) = (std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
            ensure(bx == by, || format!("{} differs between runs", x.display()))?;
            files += 1;
        }
    }
    Ok(format!("{} scenarios rerun, {files} report files byte-identical", suite.paths.len()))
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let suite = Suite::load();
    let criteria: [(&str, fn(&Suite) -> Verdict); 12] = [
        ("density exactness", c1_density_exactness),
        ("dense subset extraction", c2_extraction),
        ("diagonal anti-product", c3_diagonal),
        ("s1 round trip", c4_s1_roundtrip),
        ("generic copies", c5_generic_copies),
        ("coarse constructions", c6_coarse_constructions),
        ("density-q checkpoints", c7_density_q),
        ("staged subrelation", c8_staged),
        ("interleaved bijection", c9_interleaved),
        ("weak coarse isomorphism", c10_weak_coarse),
        ("sparse simple set", c11_sparse_simple),
        ("determinism", c12_determinism),
    ];
    let mut failed = Vec::new();
    // written straight to stderr so the lines show up without --nocapture
    let mut err = std::io::stderr();
    for (i, (title, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = check(&suite);
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        writeln!(err, "acceptance {tag} {:>2} {title}: {detail} ({} ms)", i + 1, t.elapsed().as_millis()).unwrap();
        if verdict.is_err() {
            failed.push(i + 1);
        }
    }
    writeln!(err, "acceptance total {} s", start.elapsed().as_secs()).unwrap();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
