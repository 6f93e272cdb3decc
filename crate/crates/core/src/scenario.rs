//! Scenario files: a TOML document naming a construction and its inputs.
//!
//! Inputs that are not plain numbers are written as terms, `name` or
//! `name(arg, …)`, where an argument is a term, a natural number or a
//! rational `p/q`. For example `spliced(multiples(3), canonical-all-sizes)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::enumeration::{EnumerationOracle, PairEnumerationOracle, PairGenerator, SetGenerator};
use crate::error::{Error, Result};
use crate::generic::{default_carrier, CaseTag, CeStructure, ScenarioMetadata};
use crate::iso::{build_12_density_q, doubling_pairs, dyadic_shuffle, Candidate, DyadicSchedule};
use crate::rational::{self, Rational};
use crate::sets::DecidableSet;
use crate::structures::{
    blocks, canonical_12, canonical_all_sizes, consecutive, identity_structure, spliced, two_class, EqStructure,
    PairsMode, SizeRule,
};

/// Largest horizon a scenario may request.
pub const MAX_HORIZON: u64 = 1_000_000;
pub const DEFAULT_HORIZON: u64 = 2000;
pub const DEFAULT_BUDGET: u64 = 100_000;

// ---------------------------------------------------------------------------
// terms

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Call(String, Vec<Term>),
    Int(u64),
    Ratio(Rational),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => write!(f, "{n}"),
            Term::Ratio(r) => write!(f, "{}", rational::to_p_q(r)),
            Term::Call(name, args) if args.is_empty() => write!(f, "{name}"),
            Term::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl Lexer<'_> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &str {
        let start = self.pos;
        while let Some(c) = self.src[self.pos..].chars().next().filter(|&c| pred(c)) {
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn term(&mut self) -> std::result::Result<Term, String> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                let num = self.take_while(|c| c.is_ascii_digit()).to_string();
                let n: u64 = num.parse().map_err(|_| format!("number {num} out of range"))?;
                if self.src[self.pos..].starts_with('/') {
                    self.pos += 1;
                    let den = self.take_while(|c| c.is_ascii_digit()).to_string();
                    let d: u64 = den.parse().map_err(|_| format!("bad denominator after {num}/"))?;
                    if d == 0 {
                        return Err(format!("zero denominator in {num}/0"));
                    }
                    return Ok(Term::Ratio(rational::ratio(n, d)));
                }
                Ok(Term::Int(n))
            }
            Some(c) if c.is_ascii_lowercase() => {
                let name = self.take_while(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-').to_string();
                let mut args = Vec::new();
                if self.eat('(') && !self.eat(')') {
                    loop {
                        args.push(self.term()?);
                        if self.eat(')') {
                            break;
                        }
                        if !self.eat(',') {
                            return Err(format!("expected ',' or ')' at offset {} in {:?}", self.pos, self.src));
                        }
                    }
                }
                Ok(Term::Call(name, args))
            }
            Some(c) => Err(format!("unexpected {c:?} at offset {} in {:?}", self.pos, self.src)),
            None => Err(format!("unexpected end of {:?}", self.src)),
        }
    }
}

impl Term {
    pub fn parse(src: &str) -> std::result::Result<Term, String> {
        let mut lx = Lexer { src, pos: 0 };
        let t = lx.term()?;
        if lx.peek().is_some() {
            return Err(format!("trailing input at offset {} in {src:?}", lx.pos));
        }
        Ok(t)
    }

    fn call(&self) -> std::result::Result<(&str, &[Term]), String> {
        match self {
            Term::Call(n, a) => Ok((n, a)),
            other => Err(format!("expected a name, found {other}")),
        }
    }

    fn int(&self) -> std::result::Result<u64, String> {
        match self {
            Term::Int(n) => Ok(*n),
            other => Err(format!("expected a natural number, found {other}")),
        }
    }

    fn rational(&self) -> std::result::Result<Rational, String> {
        match self {
            Term::Int(n) => Ok(Rational::from_integer(*n as i128)),
            Term::Ratio(r) => Ok(*r),
            other => Err(format!("expected a rational, found {other}")),
        }
    }
}

type Res<T> = std::result::Result<T, String>;

fn arity(name: &str, args: &[Term], n: usize) -> Res<()> {
    if args.len() != n {
        return Err(format!("{name} takes {n} argument(s), got {}", args.len()));
    }
    Ok(())
}

fn ints(args: &[Term]) -> Res<Vec<u64>> {
    args.iter().map(Term::int).collect()
}

pub fn set_of(t: &Term) -> Res<DecidableSet> {
    let (name, args) = t.call()?;
    let nullary = |s: DecidableSet| arity(name, args, 0).map(|_| s);
    match name {
        "all" => nullary(DecidableSet::all()),
        "empty" => nullary(DecidableSet::empty()),
        "evens" => nullary(DecidableSet::evens()),
        "odds" => nullary(DecidableSet::evens().complement().relabel("odds")),
        "squares" => nullary(DecidableSet::squares()),
        "non-squares" => nullary(DecidableSet::non_squares()),
        "doubled-cubes" => nullary(DecidableSet::doubled_cubes()),
        "multiples" => {
            arity(name, args, 1)?;
            let m = args[0].int()?;
            if m == 0 {
                return Err("multiples(0) is not a set of naturals".into());
            }
            Ok(DecidableSet::multiples(m))
        }
        "residue" => {
            arity(name, args, 2)?;
            let (m, r) = (args[0].int()?, args[1].int()?);
            if m == 0 || r >= m {
                return Err(format!("residue({m}, {r}) needs 0 ≤ r < m"));
            }
            Ok(DecidableSet::from_fn(t.to_string(), move |x| x % m == r))
        }
        "below" => {
            arity(name, args, 1)?;
            let n = args[0].int()?;
            Ok(DecidableSet::from_fn(t.to_string(), move |x| x < n))
        }
        "finite" => Ok(DecidableSet::finite(t.to_string(), ints(args)?)),
        "complement" => {
            arity(name, args, 1)?;
            Ok(set_of(&args[0])?.complement())
        }
        "union" | "intersect" | "difference" => {
            arity(name, args, 2)?;
            let (a, b) = (set_of(&args[0])?, set_of(&args[1])?);
            Ok(match name {
                "union" => a.union(&b),
                "intersect" => a.intersect(&b),
                _ => a.difference(&b),
            })
        }
        _ => Err(format!("unknown set {name}")),
    }
}

pub fn oracle_of(t: &Term, budget: u64) -> Res<EnumerationOracle> {
    let (name, args) = t.call()?;
    let label = t.to_string();
    let gen = match name {
        "identity" => SetGenerator::Identity,
        "evens" => SetGenerator::Evens,
        "squares" => SetGenerator::Squares,
        "block-bursty" => SetGenerator::BlockBursty,
        "multiples" | "delayed" | "scrambled" => {
            arity(name, args, 1)?;
            let k = args[0].int()?;
            match name {
                "multiples" if k == 0 => return Err("multiples(0) is not a set of naturals".into()),
                "multiples" => SetGenerator::Multiples(k),
                "delayed" => SetGenerator::Delayed(k),
                _ if k == 0 => return Err("scrambled(0) needs a positive block width".into()),
                _ => SetGenerator::Scrambled(k),
            }
        }
        "listed" => SetGenerator::Listed(Arc::new(ints(args)?)),
        "enumerate" => {
            arity(name, args, 1)?;
            let s = set_of(&args[0])?;
            return Ok(EnumerationOracle::custom(label, budget, move |stage| {
                if stage >= 1 && s.contains(stage - 1) {
                    vec![stage - 1]
                } else {
                    Vec::new()
                }
            }));
        }
        _ => return Err(format!("unknown oracle {name}")),
    };
    if matches!(name, "identity" | "evens" | "squares" | "block-bursty") {
        arity(name, args, 0)?;
    }
    Ok(EnumerationOracle::new(label, gen, budget))
}

/// Whether an oracle term names a finite set.
pub fn oracle_is_finite(t: &Term) -> bool {
    matches!(t, Term::Call(n, _) if n == "listed")
}

pub fn schedule_of(t: &Term) -> Res<DyadicSchedule> {
    let (name, args) = t.call()?;
    let r = match name {
        "constant" => {
            arity(name, args, 2)?;
            DyadicSchedule::constant(args[0].rational()?, args[1].int()? as usize)
        }
        "oscillating" => {
            arity(name, args, 3)?;
            DyadicSchedule::oscillating(args[0].rational()?, args[1].int()? as u32, args[2].int()? as usize)
        }
        "listed" => {
            let qs = args.iter().map(Term::rational).collect::<Res<Vec<_>>>()?;
            let Some(&last) = qs.last() else { return Err("listed schedule is empty".into()) };
            DyadicSchedule::new(qs, last)
        }
        _ => return Err(format!("unknown schedule {name}")),
    };
    r.map_err(|e| e.to_string())
}

pub fn structure_of(t: &Term, horizon: u64) -> Res<EqStructure> {
    let (name, args) = t.call()?;
    let nullary = |s: EqStructure| arity(name, args, 0).map(|_| s);
    match name {
        "canonical-all-sizes" => nullary(canonical_all_sizes()),
        "identity" => nullary(identity_structure()),
        "doubling-pairs" => nullary(doubling_pairs()),
        "canonical-12" => {
            arity(name, args, 1)?;
            match args[0].call()?.0 {
                "dense-pairs" => Ok(canonical_12(PairsMode::DensePairs)),
                "sparse-pairs" => Ok(canonical_12(PairsMode::SparsePairs)),
                other => Err(format!("unknown pairs mode {other}")),
            }
        }
        "blocks" => {
            arity(name, args, 1)?;
            match args[0].int()? {
                0 => Err("blocks(0) has empty classes".into()),
                k => Ok(blocks(k)),
            }
        }
        "linear" => {
            arity(name, args, 2)?;
            let (first, step) = (args[0].int()?, args[1].int()?);
            if first == 0 {
                return Err("linear sizes must start at 1 or more".into());
            }
            Ok(consecutive(SizeRule::Linear { first, step }, t.to_string()))
        }
        "cycle" => {
            let sizes = ints(args)?;
            if sizes.is_empty() || sizes.contains(&0) {
                return Err("cycle needs positive sizes".into());
            }
            Ok(consecutive(SizeRule::Cycle(sizes), t.to_string()))
        }
        "sizes-from" => {
            arity(name, args, 1)?;
            one_class_per_size(&set_of(&args[0])?, horizon.saturating_mul(4).max(64)).map_err(|e| e.to_string())
        }
        "two-class" => {
            arity(name, args, 1)?;
            Ok(two_class(&set_of(&args[0])?))
        }
        "spliced" => {
            arity(name, args, 2)?;
            Ok(spliced(&set_of(&args[0])?, &structure_of(&args[1], horizon)?))
        }
        "density-q" => {
            arity(name, args, 1)?;
            let sched = schedule_of(&args[0])?;
            build_12_density_q(&sched, horizon).map(|(s, _)| s).map_err(|e| e.to_string())
        }
        "dyadic-shuffle" => {
            arity(name, args, 1)?;
            Ok(dyadic_shuffle(&structure_of(&args[0], horizon)?))
        }
        _ => Err(format!("unknown structure {name}")),
    }
}

/// One class of each size in `sizes`, laid out consecutively, covering at least `cover` elements.
pub fn one_class_per_size(sizes: &DecidableSet, cover: u64) -> Result<EqStructure> {
    let mut list = Vec::new();
    let mut total = 0u64;
    let mut k = 1u64;
    while total < cover && k <= cover {
        if sizes.contains(k) {
            list.push(k);
            total += k;
        }
        k += 1;
    }
    if total < cover {
        return Err(Error::Precondition(format!("{} has too few members to cover {cover} elements", sizes.label())));
    }
    Ok(consecutive(SizeRule::Cycle(list), format!("one-class-per-size({})", sizes.label())))
}

pub fn pair_oracle_of(t: &Term, s: &EqStructure, budget: u64) -> Res<PairEnumerationOracle> {
    let (name, args) = t.call()?;
    match name {
        "prompt" => {
            arity(name, args, 0)?;
            Ok(PairEnumerationOracle::prompt(s, budget))
        }
        "scrambled-pairs" => {
            arity(name, args, 1)?;
            let w = args[0].int()?;
            if w == 0 {
                return Err("scrambled-pairs(0) needs a positive block width".into());
            }
            Ok(PairEnumerationOracle::new(format!("{}/{t}", s.provenance()), PairGenerator::Scrambled(s.clone(), w), budget))
        }
        _ => Err(format!("unknown pair oracle {name}")),
    }
}

pub fn candidate_of(t: &Term) -> Res<Candidate> {
    let (name, args) = t.call()?;
    match name {
        "identity" => arity(name, args, 0).map(|_| Candidate::Identity),
        "shift" => {
            arity(name, args, 1)?;
            Ok(Candidate::Shift(args[0].int()?))
        }
        _ => Err(format!("unknown candidate {name}")),
    }
}

// ---------------------------------------------------------------------------
// constructions

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Construction {
    Lemma2Sweep,
    Lemma1Extract,
    Thm1Diagonal,
    S1Roundtrip,
    Prop1,
    Thm4,
    Thm2Restrict,
    Ex1Demo,
    FaithfulCoarse,
    DiagonalK,
    AntiCoarseK,
    DensityQ,
    Staged,
    Interleaved,
    Char2Iso,
    Char1Iso,
    WeakCoarseIso,
    Thm12Demo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Structure,
    Other,
    Sets,
    Oracles,
    Metadata,
    Schedule,
    Q,
    Candidate,
    Stages,
    KSet,
    Immune,
    Probe,
    Structures,
}

impl Field {
    pub fn key(self) -> &'static str {
        match self {
            Field::Structure => "structure",
            Field::Other => "other",
            Field::Sets => "sets",
            Field::Oracles => "oracles",
            Field::Metadata => "metadata",
            Field::Schedule => "schedule",
            Field::Q => "q",
            Field::Candidate => "candidate",
            Field::Stages => "stages",
            Field::KSet => "k-set",
            Field::Immune => "immune",
            Field::Probe => "probe",
            Field::Structures => "structures",
        }
    }
}

impl Construction {
    pub const ALL: [Construction; 18] = [
        Construction::Lemma2Sweep,
        Construction::Lemma1Extract,
        Construction::Thm1Diagonal,
        Construction::S1Roundtrip,
        Construction::Prop1,
        Construction::Thm4,
        Construction::Thm2Restrict,
        Construction::Ex1Demo,
        Construction::FaithfulCoarse,
        Construction::DiagonalK,
        Construction::AntiCoarseK,
        Construction::DensityQ,
        Construction::Staged,
        Construction::Interleaved,
        Construction::Char2Iso,
        Construction::Char1Iso,
        Construction::WeakCoarseIso,
        Construction::Thm12Demo,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Construction::Lemma2Sweep => "lemma2-sweep",
            Construction::Lemma1Extract => "lemma1-extract",
            Construction::Thm1Diagonal => "thm1-diagonal",
            Construction::S1Roundtrip => "s1-roundtrip",
            Construction::Prop1 => "prop1",
            Construction::Thm4 => "thm4",
            Construction::Thm2Restrict => "thm2-restrict",
            Construction::Ex1Demo => "ex1-demo",
            Construction::FaithfulCoarse => "faithful-coarse",
            Construction::DiagonalK => "diagonal-k",
            Construction::AntiCoarseK => "anti-coarse-k",
            Construction::DensityQ => "density-q",
            Construction::Staged => "staged-subrelation",
            Construction::Interleaved => "interleaved",
            Construction::Char2Iso => "char2-iso",
            Construction::Char1Iso => "char1-iso",
            Construction::WeakCoarseIso => "weak-coarse-iso",
            Construction::Thm12Demo => "thm12-demo",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Construction::Lemma2Sweep => "exact density of A and of A×A for each set in `sets`, every n ≤ horizon",
            Construction::Lemma1Extract => "computable subsets of upper density one inside each oracle",
            Construction::Thm1Diagonal => "dense C ⊆ ω×ω containing no W×W for the registered oracles",
            Construction::S1Roundtrip => "s1 table from a c.e. structure, then a structure rebuilt from it",
            Construction::Prop1 => "strongly generically computable copy with witness checks",
            Construction::Thm4 => "faithfully generically computable copy with witness checks",
            Construction::Thm2Restrict => "computable Y of upper density one on which the copy is decided",
            Construction::Ex1Demo => "a copy with a dense infinite class; a computable probe set is not faithful",
            Construction::FaithfulCoarse => "coarse copy of the K-sized part of the canonical structure",
            Construction::DiagonalK => "dense K omitting one element of each limit-approximated set",
            Construction::AntiCoarseK => "K defeating each registered c.e. structure as a coarse description",
            Construction::DensityQ => "(1,2)-structure whose singleton part has density q at every checkpoint",
            Construction::Staged => "staged subrelation with singleton part of density q",
            Construction::Interleaved => "bijection A → B sending C into D with counting bounds",
            Construction::Char2Iso => "partial isomorphism onto the dense-pairs canonical structure",
            Construction::Char1Iso => "weakly coarse isomorphism between two structures of generic character {1}",
            Construction::WeakCoarseIso => "weakly coarse isomorphism between two (1,2)-structures of density q",
            Construction::Thm12Demo => "sparse simple set and the obstruction set of a candidate map",
        }
    }

    pub fn required(self) -> &'static [Field] {
        use Field::*;
        match self {
            Construction::Lemma2Sweep => &[Sets],
            Construction::Lemma1Extract | Construction::Thm1Diagonal => &[Oracles],
            Construction::S1Roundtrip => &[Structure, Stages],
            Construction::Prop1 | Construction::Thm4 | Construction::Thm2Restrict => &[Structure, Metadata],
            Construction::Ex1Demo => &[Immune, KSet, Probe],
            Construction::FaithfulCoarse => &[KSet],
            Construction::DiagonalK => &[Sets],
            Construction::AntiCoarseK => &[Structures],
            Construction::DensityQ => &[Schedule],
            Construction::Staged => &[Structure, Q],
            Construction::Interleaved => &[Sets],
            Construction::Char2Iso => &[Structure],
            Construction::Char1Iso => &[Structure, Other],
            Construction::WeakCoarseIso => &[Structure, Other, Q],
            Construction::Thm12Demo => &[Oracles, Candidate],
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id)
    }
}

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MetadataFile {
    pub case: String,
    pub id: Option<u64>,
    pub k: Option<u64>,
    pub positive_density: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CeStructureFile {
    pub structure: String,
    pub pairs: Option<String>,
    pub positive_density: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    CsvBundle,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutputFile {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// The document as written.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub construction: Option<String>,
    pub horizon: Option<u64>,
    pub budget: Option<u64>,
    pub structure: Option<String>,
    pub other: Option<String>,
    pub carrier: Option<String>,
    #[serde(default)]
    pub sets: Vec<String>,
    #[serde(default)]
    pub oracles: Vec<String>,
    pub metadata: Option<MetadataFile>,
    pub schedule: Option<String>,
    pub q: Option<String>,
    pub candidate: Option<String>,
    pub stages: Option<u64>,
    pub settle: Option<u64>,
    pub materialize: Option<u64>,
    pub k_set: Option<String>,
    pub immune: Option<String>,
    pub probe: Option<String>,
    #[serde(default)]
    pub structures: Vec<CeStructureFile>,
    pub tolerance: Option<String>,
    #[serde(default)]
    pub lenient: bool,
    pub min_avoiding: Option<u64>,
    pub density_floor: Option<String>,
    pub output: Option<OutputFile>,
}

/// Command-line values that replace the file's.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub horizon: Option<u64>,
    pub budget: Option<u64>,
}

/// A validated scenario with every term resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub construction: Construction,
    pub horizon: u64,
    pub budget: u64,
    pub structure: Option<EqStructure>,
    pub other: Option<EqStructure>,
    pub carrier: DecidableSet,
    pub sets: Vec<DecidableSet>,
    /// Oracles with their source terms.
    pub oracles: Vec<(Term, EnumerationOracle)>,
    pub metadata: Option<ScenarioMetadata>,
    pub schedule: Option<DyadicSchedule>,
    pub q: Option<Rational>,
    pub candidate: Option<Candidate>,
    pub stages: u64,
    pub settle: u64,
    pub materialize: Option<u64>,
    pub k_set: Option<DecidableSet>,
    pub immune: Option<DecidableSet>,
    pub probe: Option<DecidableSet>,
    pub structures: Vec<CeStructure>,
    pub tolerance: Rational,
    pub lenient: bool,
    pub min_avoiding: u64,
    pub density_floor: Rational,
    pub output: OutputFile,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    fn present(&self, f: Field) -> bool {
        match f {
            Field::Structure => self.structure.is_some(),
            Field::Other => self.other.is_some(),
            Field::Sets => !self.sets.is_empty(),
            Field::Oracles => !self.oracles.is_empty(),
            Field::Metadata => self.metadata.is_some(),
            Field::Schedule => self.schedule.is_some(),
            Field::Q => self.q.is_some(),
            Field::Candidate => self.candidate.is_some(),
            Field::Stages => self.stages.is_some(),
            Field::KSet => self.k_set.is_some(),
            Field::Immune => self.immune.is_some(),
            Field::Probe => self.probe.is_some(),
            Field::Structures => !self.structures.is_empty(),
        }
    }

    /// Resolve every field, collecting all problems before failing.
    pub fn validate(&self, ov: &Overrides) -> Result<Scenario> {
        let mut errs: Vec<String> = Vec::new();
        let name = self.name.clone().unwrap_or_else(|| {
            errs.push("missing `name`".into());
            String::new()
        });
        if !name.is_empty() && !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.') {
            errs.push(format!("name {name:?} may only use ASCII letters, digits, '-', '_' and '.'"));
        }
        let construction = match self.construction.as_deref() {
            None => {
                errs.push("missing `construction`".into());
                None
            }
            Some(id) => Construction::from_id(id).or_else(|| {
                errs.push(format!("unknown construction {id:?} (see `list-constructions`)"));
                None
            }),
        };
        let horizon = ov.horizon.or(self.horizon).unwrap_or(DEFAULT_HORIZON);
        if horizon == 0 || horizon > MAX_HORIZON {
            errs.push(format!("horizon {horizon} outside 1..={MAX_HORIZON}"));
        }
        let budget = ov.budget.or(self.budget).unwrap_or(DEFAULT_BUDGET);
        if budget == 0 {
            errs.push("budget must be positive".into());
        }
        if let Some(c) = construction {
            for &f in c.required() {
                if !self.present(f) {
                    errs.push(format!("construction {} needs `{}`", c.id(), f.key()));
                }
            }
        }

        let mut term = |key: &str, src: &str| -> Option<Term> {
            Term::parse(src).map_err(|e| errs.push(format!("`{key}`: {e}"))).ok()
        };
        let structure_t = self.structure.as_deref().and_then(|s| term("structure", s));
        let other_t = self.other.as_deref().and_then(|s| term("other", s));
        let carrier_t = self.carrier.as_deref().and_then(|s| term("carrier", s));
        let sets_t: Vec<_> = self.sets.iter().enumerate().filter_map(|(i, s)| term(&format!("sets[{i}]"), s)).collect();
        let oracles_t: Vec<_> =
            self.oracles.iter().enumerate().filter_map(|(i, s)| term(&format!("oracles[{i}]"), s)).collect();
        let schedule_t = self.schedule.as_deref().and_then(|s| term("schedule", s));
        let q_t = self.q.as_deref().and_then(|s| term("q", s));
        let cand_t = self.candidate.as_deref().and_then(|s| term("candidate", s));
        let k_t = self.k_set.as_deref().and_then(|s| term("k-set", s));
        let immune_t = self.immune.as_deref().and_then(|s| term("immune", s));
        let probe_t = self.probe.as_deref().and_then(|s| term("probe", s));
        let tol_t = self.tolerance.as_deref().and_then(|s| term("tolerance", s));
        let floor_t = self.density_floor.as_deref().and_then(|s| term("density-floor", s));
        let ce_t: Vec<_> = self
            .structures
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let s = term(&format!("structures[{i}].structure"), &e.structure)?;
                let p = term(&format!("structures[{i}].pairs"), e.pairs.as_deref().unwrap_or("prompt"))?;
                Some((i, s, p, e.positive_density))
            })
            .collect();

        let mut check = |key: String, r: Res<()>| {
            if let Err(e) = r {
                errs.push(format!("`{key}`: {e}"));
            }
        };
        let resolve_structure = |key: &str, t: &Option<Term>, check: &mut dyn FnMut(String, Res<()>)| {
            t.as_ref().and_then(|t| structure_of(t, horizon).map_err(|e| check(key.into(), Err(e))).ok())
        };
        let structure = resolve_structure("structure", &structure_t, &mut check);
        let other = resolve_structure("other", &other_t, &mut check);
        let set = |key: &str, t: &Option<Term>, check: &mut dyn FnMut(String, Res<()>)| {
            t.as_ref().and_then(|t| set_of(t).map_err(|e| check(key.into(), Err(e))).ok())
        };
        let carrier = set("carrier", &carrier_t, &mut check).unwrap_or_else(default_carrier);
        let k_set = set("k-set", &k_t, &mut check);
        let immune = set("immune", &immune_t, &mut check);
        let probe = set("probe", &probe_t, &mut check);
        let mut sets = Vec::new();
        for (i, t) in sets_t.iter().enumerate() {
            match set_of(t) {
                Ok(s) => sets.push(s),
                Err(e) => check(format!("sets[{i}]"), Err(e)),
            }
        }
        let mut oracles = Vec::new();
        for (i, t) in oracles_t.iter().enumerate() {
            match oracle_of(t, budget) {
                Ok(o) => oracles.push((t.clone(), o)),
                Err(e) => check(format!("oracles[{i}]"), Err(e)),
            }
        }
        let schedule = schedule_t.and_then(|t| schedule_of(&t).map_err(|e| check("schedule".into(), Err(e))).ok());
        let q = q_t.and_then(|t| t.rational().map_err(|e| check("q".into(), Err(e))).ok());
        if let Some(q) = q {
            if !rational::is_unit_interval(&q) {
                check("q".into(), Err(format!("{} is outside [0, 1]", rational::to_p_q(&q))));
            }
        }
        let candidate = cand_t.and_then(|t| candidate_of(&t).map_err(|e| check("candidate".into(), Err(e))).ok());
        let tolerance = tol_t
            .and_then(|t| t.rational().map_err(|e| check("tolerance".into(), Err(e))).ok())
            .unwrap_or_else(|| rational::ratio(1, 20));
        let density_floor = floor_t
            .and_then(|t| t.rational().map_err(|e| check("density-floor".into(), Err(e))).ok())
            .unwrap_or_else(|| rational::ratio(9, 10));
        let mut structures = Vec::new();
        for (i, s, p, pd) in ce_t {
            let built = structure_of(&s, horizon).and_then(|st| pair_oracle_of(&p, &st, budget));
            match built {
                Ok(pairs) => structures.push(CeStructure { pairs, positive_density_size: pd }),
                Err(e) => check(format!("structures[{i}]"), Err(e)),
            }
        }
        let metadata = self.metadata.as_ref().and_then(|m| {
            let case = match m.case.as_str() {
                "infinite-class" => Some(CaseTag::InfiniteClass { id: m.id.unwrap_or(u64::MAX) }),
                "repeated-size" => match m.k {
                    Some(k) if k > 0 => Some(CaseTag::RepeatedSize { k }),
                    _ => {
                        check("metadata.k".into(), Err("repeated-size needs a positive `k`".into()));
                        None
                    }
                },
                "s1-subset" => Some(CaseTag::S1Subset),
                "none" => Some(CaseTag::None),
                other => {
                    check("metadata.case".into(), Err(format!("unknown case {other:?}")));
                    None
                }
            };
            case.map(|case| ScenarioMetadata { case, positive_density_size: m.positive_density })
        });
        if construction == Some(Construction::Interleaved) && sets.len() != 4 {
            errs.push(format!("interleaved needs exactly four sets A, B, C, D; got {}", self.sets.len()));
        }
        if construction == Some(Construction::Thm4)
            && matches!(metadata.as_ref().map(|m| &m.case), Some(CaseTag::S1Subset))
            && self.stages.is_none()
        {
            errs.push("thm4 with case s1-subset needs `stages`".into());
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(Scenario {
            name,
            construction: construction.expect("checked above"),
            horizon,
            budget,
            structure,
            other,
            carrier,
            sets,
            oracles,
            metadata,
            schedule,
            q,
            candidate,
            stages: self.stages.unwrap_or(0),
            settle: self.settle.unwrap_or(2),
            materialize: self.materialize,
            k_set,
            immune,
            probe,
            structures,
            tolerance,
            lenient: self.lenient,
            min_avoiding: self.min_avoiding.unwrap_or(50),
            density_floor,
            output: self.output.clone().unwrap_or_default(),
        })
    }
}

impl Scenario {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ScenarioFile::parse(&text)?.validate(ov)
    }

    pub fn from_toml(text: &str, ov: &Overrides) -> Result<Self> {
        ScenarioFile::parse(text)?.validate(ov)
    }

    pub fn format(&self) -> Format {
        self.output.format.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_round_trip() {
        for src in ["evens", "multiples(3)", "spliced(multiples(3), canonical-all-sizes)", "constant(1/2, 30)"] {
            let t = Term::parse(src).unwrap();
            assert_eq!(t.to_string(), src);
        }
        assert!(Term::parse("f(1,").is_err());
        assert!(Term::parse("f(1) g").is_err());
        assert!(Term::parse("1/0").is_err());
        assert!(Term::parse("Evens").is_err());
    }

    #[test]
    fn sets_resolve() {
        let s = set_of(&Term::parse("union(squares, multiples(4))").unwrap()).unwrap();
        assert!(s.contains(9) && s.contains(8) && !s.contains(6));
        let r = set_of(&Term::parse("residue(5, 2)").unwrap()).unwrap();
        assert!(r.contains(7) && !r.contains(5));
        assert!(set_of(&Term::parse("residue(5, 5)").unwrap()).is_err());
        assert!(set_of(&Term::parse("evens(2)").unwrap()).is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = r#"
            construction = "no-such-thing"
            horizon = 5000000
            structure = "nope("
        "#;
        let Err(Error::Validation(errs)) = Scenario::from_toml(text, &Overrides::default()) else { panic!() };
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("name")));
        assert!(errs.iter().any(|e| e.contains("no-such-thing")));
        assert!(errs.iter().any(|e| e.contains("horizon")));
        assert!(errs.iter().any(|e| e.contains("structure")));
    }

    #[test]
    fn required_fields_are_checked() {
        let text = "name = \"x\"\nconstruction = \"prop1\"\n";
        let Err(Error::Validation(errs)) = Scenario::from_toml(text, &Overrides::default()) else { panic!() };
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn overrides_replace_file_values() {
        let text = "name = \"x\"\nconstruction = \"lemma2-sweep\"\nhorizon = 10\nsets = [\"evens\"]\n";
        let s = Scenario::from_toml(text, &Overrides { horizon: Some(20), budget: Some(7) }).unwrap();
        assert_eq!((s.horizon, s.budget), (20, 7));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "name = \"x\"\nconstruction = \"lemma2-sweep\"\nsets = [\"evens\"]\nhorizn = 3\n";
        assert!(matches!(Scenario::from_toml(text, &Overrides::default()), Err(Error::Parse(_))));
    }
}
