use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use gencomp::report::{emit_report, Report};
use gencomp::runner::run_scenario;
use gencomp::scenario::{Construction, Format, Overrides, Scenario};

/// Environment variable that overrides the output directory of every scenario.
const OUT_DIR_ENV: &str = "GENCOMP_OUT_DIR";
const DEFAULT_OUT: &str = "reports";

const EXIT_FAILED: u8 = 1;
const EXIT_EMPTY: u8 = 2;
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "gencomp", version, about = "Run generic and coarse computability experiments from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunFlags {
    /// Replace the scenario's horizon.
    #[arg(long)]
    horizon: Option<u64>,
    /// Replace the scenario's budget.
    #[arg(long)]
    budget: Option<u64>,
    /// Output directory (overrides the scenario file and the environment).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (overrides the scenario file).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    CsvBundle,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run every `*.toml` scenario in a directory.
    Batch {
        dir: PathBuf,
        /// Scenarios run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// List the known construction ids.
    ListConstructions,
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
}

enum Outcome {
    Passed,
    Failed,
    Empty,
    Error,
}

impl Outcome {
    fn of(r: &Report) -> Self {
        if r.invariants.is_empty() {
            Outcome::Empty
        } else if r.passed() {
            Outcome::Passed
        } else {
            Outcome::Failed
        }
    }

    fn code(&self) -> u8 {
        match self {
            Outcome::Passed => 0,
            Outcome::Failed => EXIT_FAILED,
            Outcome::Empty => EXIT_EMPTY,
            Outcome::Error => EXIT_ERROR,
        }
    }
}

fn out_dir(flags: &RunFlags, s: &Scenario) -> PathBuf {
    flags
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| s.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn format(flags: &RunFlags, s: &Scenario) -> Format {
    match flags.format {
        Some(FormatArg::Json) => Format::Json,
        Some(FormatArg::CsvBundle) => Format::CsvBundle,
        None => s.format(),
    }
}

/// Run one file and return its printable log and outcome.
fn run_file(path: &Path, flags: &RunFlags) -> (String, Outcome) {
    let ov = Overrides { horizon: flags.horizon, budget: flags.budget };
    let mut log = String::new();
    let s = match Scenario::load(path, &ov) {
        Ok(s) => s,
        Err(e) => return (format!("{}: {e}\n", path.display()), Outcome::Error),
    };
    let report = match run_scenario(&s) {
        Ok(r) => r,
        Err(e) => return (format!("{} [{}]: {e}\n", s.name, s.construction.id()), Outcome::Error),
    };
    for inv in &report.invariants {
        log.push_str(&format!("{} {}/{} {}\n", if inv.pass { "PASS" } else { "FAIL" }, s.name, inv.name, inv.measured));
    }
    let dir = out_dir(flags, &s);
    match emit_report(&report, format(flags, &s), &dir) {
        Ok(files) => {
            for f in files {
                log.push_str(&format!("wrote {}\n", f.display()));
            }
        }
        Err(e) => return (format!("{log}{}: writing report: {e}\n", s.name), Outcome::Error),
    }
    let outcome = Outcome::of(&report);
    let ms = report.timing.map_or(0, |t| t.as_millis());
    let verdict = match outcome {
        Outcome::Passed => "passed",
        Outcome::Failed => "FAILED",
        Outcome::Empty => "empty",
        Outcome::Error => "error",
    };
    log.push_str(&format!("{} {verdict} ({} checks, {ms} ms)\n", s.name, report.invariants.len()));
    (log, outcome)
}

fn emit_log(log: &str, outcome: &Outcome) {
    match outcome {
        Outcome::Error => eprint!("{log}"),
        _ => print!("{log}"),
    }
}

fn batch(dir: &Path, jobs: usize, flags: &RunFlags) -> ExitCode {
    let mut files: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "toml")).collect(),
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return ExitCode::from(EXIT_ERROR);
        }
    };
    files.sort();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(String, Outcome)>>> = Mutex::new((0..files.len()).map(|_| None).collect());
    std::thread::scope(|sc| {
        for _ in 0..jobs.clamp(1, files.len().max(1)) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(f) = files.get(i) else { break };
                let res = run_file(f, flags);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(res);
            });
        }
    });
    let results = results.into_inner().expect("workers finished");
    let mut worst = 0u8;
    for (log, outcome) in results.into_iter().flatten() {
        emit_log(&log, &outcome);
        // errors outrank failures, failures outrank empty reports
        let rank = |c: u8| match c {
            EXIT_ERROR => 3,
            EXIT_FAILED => 2,
            EXIT_EMPTY => 1,
            _ => 0,
        };
        if rank(outcome.code()) > rank(worst) {
            worst = outcome.code();
        }
    }
    ExitCode::from(worst)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, flags } => {
            let (log, outcome) = run_file(&file, &flags);
            emit_log(&log, &outcome);
            ExitCode::from(outcome.code())
        }
        Command::Batch { dir, jobs, flags } => batch(&dir, jobs, &flags),
        Command::ListConstructions => {
            for c in Construction::ALL {
                let req: Vec<&str> = c.required().iter().map(|f| f.key()).collect();
                println!("{:<20} {}  [needs: {}]", c.id(), c.summary(), req.join(", "));
            }
            ExitCode::SUCCESS
        }
        Command::Validate { file } => match Scenario::load(&file, &Overrides::default()) {
            Ok(s) => {
                println!("{}: ok ({}, horizon {}, budget {})", file.display(), s.construction.id(), s.horizon, s.budget);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                ExitCode::from(EXIT_ERROR)
            }
        },
    }
}
