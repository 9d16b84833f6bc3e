//! Stand-ins for the environment manager and the in-environment executor.
//!
//! Both honor the same command contracts as the real tools, so the whole
//! pipeline runs hermetically. The executor does not run Python: it replays
//! each code cell's stored outputs, unless the cell carries a directive
//! comment of the form `#mock: <verb> [arg]`:
//!
//! | verb | effect |
//! |------|--------|
//! | `raise Name: message` | cell fails with that exception (`raise : msg` omits the name) |
//! | `sleep <seconds>` | sleeps; past `--cell-timeout` the cell fails with `CellTimeoutError` |
//! | `stdout <text>` | cell prints `<text>` instead of replaying |
//! | `drift` | replayed text gets ` (rerun)` appended |
//! | `flood` | writes 11 MB to stdout |
//! | `crash` | exits 70 without writing a record |
//! | `hang` | starts a `sleep` child and blocks forever |
//!
//! A stored error output is replayed as a failure of that cell.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use serde_json::Value;

use crate::exec::{CellStatus, RecordCell, RecordFile, Traceback, CELL_TIMEOUT_ENAME, RECORD_SCHEMA_VERSION};
use crate::inventory::{output_to_json, parse_notebook, CellKind, CellRecord, OutputBundle};

pub const ENV_ROOT_VAR: &str = "NBREPRO_ENV_ROOT";
pub const ENV_NAME_VAR: &str = "NBREPRO_ENV_NAME";
pub const UNAVAILABLE_VAR: &str = "NBREPRO_MOCK_UNAVAILABLE";

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Raise { ename: Option<String>, evalue: String },
    Sleep(f64),
    Stdout(String),
    Drift,
    Flood,
    Crash,
    Hang,
}

pub fn directives(source: &str) -> Vec<Directive> {
    source
        .lines()
        .filter_map(|l| l.trim().strip_prefix("#mock:"))
        .filter_map(|d| {
            let d = d.trim();
            let (verb, arg) = d.split_once(' ').map(|(v, a)| (v, a.trim())).unwrap_or((d, ""));
            Some(match verb {
                "raise" => {
                    let (name, value) = arg.split_once(':').unwrap_or((arg, ""));
                    let name = name.trim();
                    Directive::Raise {
                        ename: (!name.is_empty()).then(|| name.to_string()),
                        evalue: value.trim().to_string(),
                    }
                }
                "sleep" => Directive::Sleep(arg.parse().ok()?),
                "stdout" => Directive::Stdout(arg.to_string()),
                "drift" => Directive::Drift,
                "flood" => Directive::Flood,
                "crash" => Directive::Crash,
                "hang" => Directive::Hang,
                _ => return None,
            })
        })
        .collect()
}

#[derive(Parser, Debug)]
#[command(name = "nbrepro-mock-exec", about = "Replays notebooks under the executor contract")]
pub struct ExecArgs {
    #[arg(long)]
    pub notebook: PathBuf,
    #[arg(long = "output-record")]
    pub output_record: PathBuf,
    #[arg(long = "cell-timeout")]
    pub cell_timeout: f64,
    #[arg(long)]
    pub workdir: PathBuf,
    /// Environment name; defaults to $NBREPRO_ENV_NAME.
    #[arg(long)]
    pub env: Option<String>,
    /// Environment root; defaults to $NBREPRO_ENV_ROOT.
    #[arg(long = "env-root")]
    pub env_root: Option<PathBuf>,
}

fn drifted(o: &OutputBundle) -> OutputBundle {
    let mut o = o.clone();
    if let Some(t) = o.text.as_mut() {
        t.push_str(" (rerun)");
    }
    if let Some(Value::String(t)) = o.data.get_mut("text/plain") {
        t.push_str(" (rerun)");
    }
    o
}

enum CellRun {
    Ok(Vec<OutputBundle>),
    Fail {
        ename: Option<String>,
        evalue: String,
        traceback: Vec<String>,
        outputs: Vec<OutputBundle>,
    },
}

fn run_cell(cell: &CellRecord, cell_timeout: f64, counter: &mut u64) -> Result<CellRun, i32> {
    *counter += 1;
    let mut outputs: Vec<OutputBundle> = Vec::new();
    let mut replay = true;
    let mut drift = false;
    for d in directives(&cell.source) {
        match d {
            Directive::Crash => return Err(70),
            Directive::Hang => {
                let _child = std::process::Command::new("sleep").arg("3600").spawn();
                loop {
                    std::thread::sleep(Duration::from_secs(3600));
                }
            }
            Directive::Flood => {
                let line = [b'x'; 1023];
                let mut out = std::io::stdout().lock();
                for _ in 0..(11 * 1024) {
                    if out.write_all(&line).and_then(|_| out.write_all(b"\n")).is_err() {
                        break;
                    }
                }
            }
            Directive::Sleep(s) => {
                if s > cell_timeout {
                    std::thread::sleep(Duration::from_secs_f64(cell_timeout.max(0.0)));
                    return Ok(CellRun::Fail {
                        ename: Some(CELL_TIMEOUT_ENAME.into()),
                        evalue: format!("cell exceeded {cell_timeout} s"),
                        traceback: vec![],
                        outputs,
                    });
                }
                std::thread::sleep(Duration::from_secs_f64(s));
            }
            Directive::Raise { ename, evalue } => {
                let tb = vec![format!("{}: {}", ename.as_deref().unwrap_or(""), evalue)];
                return Ok(CellRun::Fail {
                    ename,
                    evalue,
                    traceback: tb,
                    outputs,
                });
            }
            Directive::Stdout(t) => {
                outputs.push(OutputBundle::stream("stdout", &format!("{t}\n")));
                replay = false;
            }
            Directive::Drift => drift = true,
        }
    }
    if !replay {
        return Ok(CellRun::Ok(outputs));
    }
    for o in &cell.outputs {
        if o.output_type == "error" {
            return Ok(CellRun::Fail {
                ename: o.ename.clone(),
                evalue: o.evalue.clone().unwrap_or_default(),
                traceback: o.traceback.clone(),
                outputs,
            });
        }
        let mut o = if drift { drifted(o) } else { o.clone() };
        if o.output_type == "execute_result" {
            o.execution_count = Some(*counter);
        }
        outputs.push(o);
    }
    Ok(CellRun::Ok(outputs))
}

fn interpreter_of(root: Option<&Path>, env: Option<&str>) -> Result<Option<String>, String> {
    let (Some(root), Some(env)) = (root, env) else {
        return Ok(None);
    };
    let dir = root.join(env);
    if !dir.is_dir() {
        return Err(format!("environment {env} not found under {}", root.display()));
    }
    Ok(std::fs::read_to_string(dir.join("python"))
        .ok()
        .map(|s| s.trim().trim_start_matches("python=").to_string()))
}

/// Entry point of the mock executor; returns the process exit code.
pub fn mock_exec_main(args: ExecArgs) -> i32 {
    let env_root = args
        .env_root
        .or_else(|| std::env::var_os(ENV_ROOT_VAR).map(PathBuf::from));
    let env_name = args.env.or_else(|| std::env::var(ENV_NAME_VAR).ok());
    let interpreter = match interpreter_of(env_root.as_deref(), env_name.as_deref()) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    let display = args.notebook.display().to_string();
    let nb = match parse_notebook(&args.notebook, &display) {
        Ok(nb) => nb,
        Err(e) => {
            eprintln!("cannot read notebook: {}", e.reason);
            return 2;
        }
    };
    let mut cells = Vec::new();
    let mut failed = false;
    let mut counter = 0;
    for cell in nb.cells.iter().filter(|c| c.kind == CellKind::Code) {
        if failed {
            cells.push(RecordCell {
                index: cell.index,
                status: CellStatus::Skipped,
                duration_s: 0.0,
                outputs: vec![],
                ename: None,
                evalue: None,
                traceback: None,
            });
            continue;
        }
        let start = Instant::now();
        let run = match run_cell(cell, args.cell_timeout, &mut counter) {
            Ok(r) => r,
            Err(code) => return code,
        };
        let duration_s = (start.elapsed().as_secs_f64() * 1000.0).round() / 1000.0;
        cells.push(match run {
            CellRun::Ok(outputs) => RecordCell {
                index: cell.index,
                status: CellStatus::Ok,
                duration_s,
                outputs: outputs.iter().map(output_to_json).collect(),
                ename: None,
                evalue: None,
                traceback: None,
            },
            CellRun::Fail {
                ename,
                evalue,
                traceback,
                mut outputs,
            } => {
                failed = true;
                outputs.push(OutputBundle {
                    output_type: "error".into(),
                    ename: ename.clone(),
                    evalue: Some(evalue.clone()),
                    traceback: traceback.clone(),
                    ..Default::default()
                });
                RecordCell {
                    index: cell.index,
                    status: CellStatus::Error,
                    duration_s,
                    outputs: outputs.iter().map(output_to_json).collect(),
                    ename,
                    evalue: Some(evalue),
                    traceback: Some(Traceback::Lines(traceback)),
                }
            }
        });
    }
    let record = RecordFile {
        schema_version: RECORD_SCHEMA_VERSION,
        notebook: display,
        interpreter,
        cells,
    };
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    match std::fs::write(&args.output_record, text) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cannot write record {}: {e}", args.output_record.display());
            1
        }
    }
}

fn unavailable(name: &str) -> bool {
    let listed = std::env::var(UNAVAILABLE_VAR).unwrap_or_default();
    name.starts_with("definitely-not") || listed.split(',').map(str::trim).any(|u| !u.is_empty() && u == name)
}

/// Entry point of the mock manager:
/// `create --name <id> python=<ver>` and `install --name <id> <spec>...`.
/// Environments are directories under `$NBREPRO_ENV_ROOT`.
pub fn mock_manager_main(args: &[String]) -> i32 {
    let Some(root) = std::env::var_os(ENV_ROOT_VAR).map(PathBuf::from) else {
        eprintln!("{ENV_ROOT_VAR} is not set");
        return 2;
    };
    let mut it = args.iter();
    let Some(cmd) = it.next() else {
        eprintln!("usage: create|install --name <id> ...");
        return 2;
    };
    let mut name = None;
    let mut rest = Vec::new();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--name" | "-n" => name = it.next().cloned(),
            flag if flag.starts_with('-') => {}
            other => rest.push(other.to_string()),
        }
    }
    let Some(name) = name else {
        eprintln!("missing --name");
        return 2;
    };
    let dir = root.join(&name);
    match cmd.as_str() {
        "create" => {
            let python = rest.iter().find_map(|r| r.strip_prefix("python=")).unwrap_or("3");
            if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("python"), python)) {
                eprintln!("cannot create {}: {e}", dir.display());
                return 1;
            }
            println!("created environment {name} with python {python}");
            0
        }
        "install" => {
            if !dir.is_dir() {
                eprintln!("environment {name} does not exist");
                return 1;
            }
            let mut installed: BTreeMap<String, String> = std::fs::read_to_string(dir.join("packages"))
                .unwrap_or_default()
                .lines()
                .filter_map(|l| l.split_once(' ').map(|(a, b)| (a.to_string(), b.to_string())))
                .collect();
            for spec in &rest {
                let pkg = spec.split(|c: char| "<>=!~; [".contains(c)).next().unwrap_or(spec);
                println!("Collecting {spec}");
                if unavailable(pkg) {
                    println!("ERROR: Could not find a version that satisfies the requirement {spec}");
                    eprintln!("ERROR: No matching distribution found for {pkg}");
                    return 1;
                }
                installed.insert(pkg.to_string(), spec.clone());
            }
            let body: String = installed.iter().map(|(k, v)| format!("{k} {v}\n")).collect();
            if let Err(e) = std::fs::write(dir.join("packages"), body) {
                eprintln!("cannot record packages: {e}");
                return 1;
            }
            println!("Successfully installed {}", rest.join(" "));
            0
        }
        other => {
            eprintln!("unknown command {other}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directive_parsing() {
        let d = directives("x = 1\n#mock: raise ModuleNotFoundError: No module named 'foo'\n  #mock:sleep 0.5\n#mock: raise : bare\n#mock: bogus");
        assert_eq!(
            d,
            vec![
                Directive::Raise {
                    ename: Some("ModuleNotFoundError".into()),
                    evalue: "No module named 'foo'".into()
                },
                Directive::Sleep(0.5),
                Directive::Raise {
                    ename: None,
                    evalue: "bare".into()
                },
            ]
        );
    }

    fn code(source: &str, outputs: Vec<OutputBundle>) -> CellRecord {
        CellRecord {
            index: 0,
            kind: CellKind::Code,
            source: source.into(),
            execution_count: Some(7),
            outputs,
        }
    }

    #[test]
    fn replay_and_drift() {
        let mut n = 0;
        let c = code("print(1)", vec![OutputBundle::stream("stdout", "1\n")]);
        match run_cell(&c, 5.0, &mut n).unwrap() {
            CellRun::Ok(o) => assert_eq!(o, vec![OutputBundle::stream("stdout", "1\n")]),
            _ => panic!(),
        }
        let c = code("#mock: drift", vec![OutputBundle::stream("stdout", "1\n")]);
        match run_cell(&c, 5.0, &mut n).unwrap() {
            CellRun::Ok(o) => assert_eq!(o[0].text.as_deref(), Some("1\n (rerun)")),
            _ => panic!(),
        }
    }

    #[test]
    fn sleep_past_cell_timeout_fails_cell() {
        let mut n = 0;
        match run_cell(&code("#mock: sleep 5", vec![]), 0.05, &mut n).unwrap() {
            CellRun::Fail { ename, .. } => assert_eq!(ename.as_deref(), Some(CELL_TIMEOUT_ENAME)),
            _ => panic!(),
        }
    }

    #[test]
    fn stored_error_replays_as_failure() {
        let err = OutputBundle {
            output_type: "error".into(),
            ename: Some("NameError".into()),
            evalue: Some("name 'x' is not defined".into()),
            ..Default::default()
        };
        let mut n = 0;
        assert!(matches!(
            run_cell(&code("x", vec![err]), 5.0, &mut n).unwrap(),
            CellRun::Fail { .. }
        ));
    }
}
