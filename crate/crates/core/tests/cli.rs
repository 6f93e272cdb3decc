use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gencomp");

fn gencomp(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("GENCOMP_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("GENCOMP_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
name = "small"
construction = "density-q"
horizon = 2000
schedule = "constant(1/2, 8)"
"#;

const FAILING: &str = r#"
name = "failing"
construction = "thm12-demo"
horizon = 1024
budget = 2000
oracles = ["identity"]
candidate = "identity"
min-avoiding = 1000000
"#;

#[test]
fn list_constructions_names_every_id() {
    let o = gencomp(&["list-constructions"], None);
    assert!(o.status.success());
    let out = stdout(&o);
    for id in ["lemma2-sweep", "prop1", "thm4", "density-q", "staged-subrelation", "weak-coarse-iso", "thm12-demo"] {
        assert!(out.lines().any(|l| l.starts_with(id)), "{id} missing from\n{out}");
    }
    assert_eq!(out.lines().count(), gencomp::scenario::Construction::ALL.len());
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let o = gencomp(&["validate", p.to_str().unwrap()], None);
        assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
        n += 1;
    }
    assert!(n >= 20);
}

#[test]
fn validation_reports_every_problem_with_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(
        tmp.path(),
        "bad.toml",
        "name = \"bad\"\nconstruction = \"prop1\"\nhorizon = 0\nstructure = \"nosuch(1)\"\n",
    );
    let o = gencomp(&["validate", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("horizon 0"), "{err}");
    assert!(err.contains("metadata"), "{err}");
    assert!(err.contains("nosuch"), "{err}");

    let p = write(tmp.path(), "unknown.toml", "name = \"x\"\nconstruction = \"prop1\"\nbogus = 1\n");
    let o = gencomp(&["validate", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bogus"));

    let p = write(tmp.path(), "construction.toml", "name = \"x\"\nconstruction = \"lemma9\"\n");
    let o = gencomp(&["run", p.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("lemma9"));
}

#[test]
fn run_writes_sorted_json_without_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = gencomp(&["run", p.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS small/checkpoint-exact"));
    let text = fs::read_to_string(out.join("small.json")).unwrap();
    assert!(!text.contains("timing"));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["construction"], "density-q");
    assert_eq!(v["horizon"], 2000);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    // rerunning gives the same bytes
    let again = tmp.path().join("again");
    gencomp(&["run", p.to_str().unwrap(), "--out", again.to_str().unwrap()], None);
    assert_eq!(fs::read(out.join("small.json")).unwrap(), fs::read(again.join("small.json")).unwrap());
}

#[test]
fn horizon_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "small.toml", SMALL);
    let o = gencomp(&["run", p.to_str().unwrap(), "--horizon", "500", "--out", tmp.path().to_str().unwrap()], None);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("small.json")).unwrap()).unwrap();
    assert_eq!(v["horizon"], 500);
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let from_file = tmp.path().join("from-file");
    let text = format!("{SMALL}\n[output]\ndir = {:?}\n", from_file.to_str().unwrap());
    let p = write(tmp.path(), "small.toml", &text);
    let (env_dir, flag_dir) = (tmp.path().join("env"), tmp.path().join("flag"));

    gencomp(&["run", p.to_str().unwrap()], None);
    assert!(from_file.join("small.json").exists());

    gencomp(&["run", p.to_str().unwrap()], Some(&env_dir));
    assert!(env_dir.join("small.json").exists());

    gencomp(&["run", p.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert!(flag_dir.join("small.json").exists());
}

#[test]
fn csv_bundle_has_summary_and_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "small.toml", SMALL);
    let o = gencomp(&["run", p.to_str().unwrap(), "--format", "csv-bundle", "--out", tmp.path().to_str().unwrap()], None);
    assert!(o.status.success());
    let dir = tmp.path().join("small");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let csvs = summary["profiles"].as_array().unwrap();
    assert!(!csvs.is_empty());
    for name in csvs {
        let text = fs::read_to_string(dir.join(name.as_str().unwrap())).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,rho_n"));
        for line in lines {
            let (n, r) = line.split_once(',').unwrap();
            n.parse::<u64>().unwrap();
            assert!(gencomp::rational::parse_p_q(r).is_some(), "{line}");
        }
    }
}

#[test]
fn failing_invariant_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "failing.toml", FAILING);
    let o = gencomp(&["run", p.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL failing/obstruction-size"));
    // the report is still written
    assert!(tmp.path().join("failing.json").exists());
}

#[test]
fn batch_reports_the_worst_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenarios");
    fs::create_dir(&scen).unwrap();
    let out = tmp.path().join("out");
    write(&scen, "a.toml", SMALL);
    let run = |jobs: &str| gencomp(&["batch", scen.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap()], None);
    assert_eq!(run("2").status.code(), Some(0));
    write(&scen, "b.toml", FAILING);
    let o = run("2");
    assert_eq!(o.status.code(), Some(1));
    // results come back in file order whatever the scheduling
    let s = stdout(&o);
    assert!(s.find("small passed").unwrap() < s.find("failing FAILED").unwrap());
    write(&scen, "c.toml", "name = \"broken\"\n");
    assert_eq!(run("3").status.code(), Some(3));
    assert!(out.join("small.json").exists() && out.join("failing.json").exists());
}
