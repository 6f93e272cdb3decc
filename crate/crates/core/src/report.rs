//! Reports: named pass/fail checks with measured values, certificates and
//! density profiles, emitted as sorted-key JSON (and CSV for profiles).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::scenario::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub pass: bool,
    pub measured: Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub construction: String,
    pub horizon: u64,
    pub budget: u64,
    pub invariants: Vec<Invariant>,
    pub certificates: BTreeMap<String, Value>,
    /// Profile name to `(n, ρ_n)` rows.
    #[serde(skip)]
    pub profiles: BTreeMap<String, Vec<(u64, Rational)>>,
    /// Wall-clock time; kept out of the emitted files so reruns compare equal.
    #[serde(skip)]
    pub timing: Option<Duration>,
}

impl Report {
    pub fn new(scenario: &str, construction: &str, horizon: u64, budget: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            construction: construction.to_string(),
            horizon,
            budget,
            ..Self::default()
        }
    }

    /// Record a check. Each name may appear once.
    pub fn check(&mut self, name: impl Into<String>, pass: bool, measured: impl Serialize) -> Result<()> {
        let name = name.into();
        if self.invariants.iter().any(|i| i.name == name) {
            return Err(Error::InvariantViolation(format!("check {name:?} recorded twice")));
        }
        self.invariants.push(Invariant { name, pass, measured: serde_json::to_value(measured)? });
        Ok(())
    }

    pub fn certificate(&mut self, name: impl Into<String>, value: impl Serialize) -> Result<()> {
        self.certificates.insert(name.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn profile(&mut self, name: impl Into<String>, rows: Vec<(u64, Rational)>) {
        self.profiles.insert(name.into(), rows);
    }

    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Invariant> {
        self.invariants.iter().filter(|i| !i.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        // profiles travel in the JSON too, as "p/q" strings
        if !self.profiles.is_empty() {
            let profiles: BTreeMap<&str, Vec<(u64, String)>> = self
                .profiles
                .iter()
                .map(|(k, rows)| (k.as_str(), rows.iter().map(|(n, r)| (*n, rational::to_p_q(r))).collect()))
                .collect();
            v["profiles"] = serde_json::to_value(profiles)?;
        }
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s)
    }

    /// The summary written next to the CSV files: everything except the profile rows.
    pub fn summary_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v["profiles"] = serde_json::to_value(self.profiles.keys().map(|k| format!("{}.csv", file_stem(k))).collect::<Vec<_>>())?;
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s)
    }
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

pub fn profile_csv(rows: &[(u64, Rational)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "rho_n"]).map_err(csv_err)?;
    for (n, r) in rows {
        w.write_record([n.to_string(), rational::to_p_q(r)]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Write the report under `dir`: `<scenario>.json`, or a `<scenario>/`
/// directory with `summary.json` and one CSV per profile.
pub fn emit_report(r: &Report, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = file_stem(&r.scenario);
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            fs::write(&path, r.to_json()?)?;
            Ok(vec![path])
        }
        Format::CsvBundle => {
            let sub = dir.join(&stem);
            fs::create_dir_all(&sub)?;
            let mut out = Vec::new();
            let summary = sub.join("summary.json");
            fs::write(&summary, r.summary_json()?)?;
            out.push(summary);
            for (name, rows) in &r.profiles {
                let path = sub.join(format!("{}.csv", file_stem(name)));
                fs::write(&path, profile_csv(rows)?)?;
                out.push(path);
            }
            Ok(out)
        }
    }
}
