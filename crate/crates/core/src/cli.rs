//! Subcommand dispatch, atomic output and exit codes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_config, RunConfig};
use crate::error::{Result, WedError};
use crate::flow::solve_gradient_flow;
use crate::optctl::{solve_p, solve_p_eps, solve_p_eps_lambda, OptimalPair};
use crate::oracle::certificate_table;
use crate::sweep::{gamma_liminf_probe, sweep_eps, sweep_joint, sweep_lambda, SweepOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Proximal implicit Euler for the controlled gradient flow.
    GradientFlow,
    /// Minimizer of the WED functional for `run.u_params`.
    WedMin,
    /// Optimal control of the gradient flow.
    SolveP,
    /// Bilevel WED approximation.
    SolvePEps,
    /// Penalized WED approximation.
    SolvePEpsLambda,
    SweepEps,
    SweepLambda,
    SweepJoint,
    GammaProbe,
    /// Certify the closed forms of the scalar example.
    VerifyOracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GradientFlow => "gradient_flow",
            Command::WedMin => "wed_min",
            Command::SolveP => "solve_p",
            Command::SolvePEps => "solve_p_eps",
            Command::SolvePEpsLambda => "solve_p_eps_lambda",
            Command::SweepEps => "sweep_eps",
            Command::SweepLambda => "sweep_lambda",
            Command::SweepJoint => "sweep_joint",
            Command::GammaProbe => "gamma_probe",
            Command::VerifyOracle => "verify_oracle",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "wedflow",
    version,
    about = "WED solvers for controlled gradient flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; must exist. Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; WEDFLOW_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Inner solver tolerance; overrides `solver.tol`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

/// Thread count after applying the environment override.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("WEDFLOW_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| {
                WedError::Config(format!(
                    "WEDFLOW_THREADS must be a positive integer, got {v:?}"
                ))
            }),
        Err(_) => Ok(flag),
    }
}

pub fn exit_code(e: &WedError) -> i32 {
    match e {
        WedError::Solver { .. } | WedError::Oracle(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, &target)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(WedError::Io(e));
    }
    Ok(target)
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("result serializes");
    s.push(b'\n');
    s
}

/// Files produced by one run, in write order.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    /// False when the run finished but a certificate or assertion failed.
    pub all_pass: bool,
}

fn pair_outputs(name: &str, hash: &str, pair: &OptimalPair) -> Outputs {
    let mut rec = serde_json::to_value(pair.record()).expect("record serializes");
    rec["config_hash"] = json!(hash);
    rec["penalty_residual"] = json!(pair.penalty_residual);
    rec["skipped"] = json!(pair.skipped);
    Outputs {
        files: vec![
            (format!("{name}.json"), to_json(&rec)),
            (
                format!("{name}_trajectory.csv"),
                pair.y.to_csv_string().into_bytes(),
            ),
        ],
        summary: rec,
        all_pass: true,
    }
}

fn sweep_outputs(name: &str, hash: &str, o: &SweepOutcome) -> Outputs {
    let summary = json!({
        "config_hash": hash,
        "sweep": name,
        "assertions": o.assertions,
        "table": o.table,
    });
    Outputs {
        files: vec![
            (format!("{name}.csv"), o.table.to_csv_string().into_bytes()),
            (format!("{name}.json"), to_json(&summary)),
        ],
        summary,
        all_pass: o.assertions.iter().all(|a| a.pass),
    }
}

/// Executes `cmd` and returns the files to write; writes nothing.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Outputs> {
    let hash = cfg.hash();
    let name = cmd.name();
    match cmd {
        Command::GradientFlow => {
            let u = cfg.control_point()?;
            let (y, report) = solve_gradient_flow(&cfg.flow()?, &u)?;
            let summary = json!({
                "config_hash": hash,
                "u_params": u.params(),
                "report": report,
                "terminal": y.terminal(),
            });
            Ok(Outputs {
                files: vec![
                    (format!("{name}.csv"), y.to_csv_string().into_bytes()),
                    (format!("{name}.json"), to_json(&summary)),
                ],
                summary,
                all_pass: true,
            })
        }
        Command::WedMin => {
            let u = cfg.control_point()?;
            let eps = cfg.epsilon()?;
            let wed = cfg.wed(eps)?;
            let sol = wed.minimizer(&u)?;
            let summary = json!({
                "config_hash": hash,
                "epsilon": eps,
                "u_params": u.params(),
                "report": sol.report,
                "m_eps": sol.value,
                "lemma1_value": wed.lemma1_value(&u)?,
            });
            Ok(Outputs {
                files: vec![
                    (format!("{name}.csv"), sol.y.to_csv_string().into_bytes()),
                    (format!("{name}.json"), to_json(&summary)),
                ],
                summary,
                all_pass: sol.report.converged,
            })
        }
        Command::SolveP => {
            let pair = solve_p(&cfg.target, &cfg.flow()?, &cfg.family(), &cfg.solver)?;
            Ok(pair_outputs(name, &hash, &pair))
        }
        Command::SolvePEps => {
            let wed = cfg.wed(cfg.epsilon()?)?;
            let pair = solve_p_eps(&cfg.target, &wed, &cfg.family(), &cfg.solver)?;
            Ok(pair_outputs(name, &hash, &pair))
        }
        Command::SolvePEpsLambda => {
            let wed = cfg.wed(cfg.epsilon()?)?;
            let pair =
                solve_p_eps_lambda(&cfg.target, &wed, &cfg.family(), cfg.lambda()?, &cfg.solver)?;
            Ok(pair_outputs(name, &hash, &pair))
        }
        Command::SweepEps => Ok(sweep_outputs(name, &hash, &sweep_eps(&cfg.sweep_plan()?)?)),
        Command::SweepLambda => Ok(sweep_outputs(
            name,
            &hash,
            &sweep_lambda(&cfg.sweep_plan()?, cfg.epsilon()?)?,
        )),
        Command::SweepJoint => Ok(sweep_outputs(
            name,
            &hash,
            &sweep_joint(&cfg.sweep_plan()?)?,
        )),
        Command::GammaProbe => {
            let u = cfg.control_point()?;
            Ok(sweep_outputs(
                name,
                &hash,
                &gamma_liminf_probe(&cfg.sweep_plan()?, &u)?,
            ))
        }
        Command::VerifyOracle => {
            let rows = certificate_table();
            let all_pass = rows.iter().all(|r| r.pass != Some(false));
            let summary =
                json!({ "config_hash": hash, "all_pass": all_pass, "certificates": rows });
            Ok(Outputs {
                files: vec![(format!("{name}.json"), to_json(&summary))],
                summary,
                all_pass,
            })
        }
    }
}

fn render_certificates(summary: &Value) -> String {
    let mut s = String::new();
    if let Some(rows) = summary["certificates"].as_array() {
        for r in rows {
            let status = match r["pass"].as_bool() {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            s.push_str(&format!(
                "{status:4}  {}  value={}  reference={}\n",
                r["check"].as_str().unwrap_or(""),
                r["value"],
                r["reference"]
            ));
        }
    }
    s
}

/// Loads the config, applies overrides, executes and writes outputs.
/// Returns the process exit code; diagnostics go to stderr.
pub fn run(cmd: Command, config: &Path, out: Option<&Path>, tol: Option<f64>) -> i32 {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(t) = tol {
        cfg.solver.tol = t;
        if let Err(e) = cfg.validate() {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    }
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.dir.clone());
    if !dir.is_dir() {
        eprintln!(
            "config error: output directory {} does not exist",
            dir.display()
        );
        return EXIT_CONFIG;
    }
    let outputs = match execute(cmd, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return exit_code(&e);
        }
    };
    for (name, bytes) in &outputs.files {
        if let Err(e) = write_atomic(&dir, name, bytes) {
            eprintln!("cannot write {}: {e}", dir.join(name).display());
            return EXIT_CONFIG;
        }
    }
    if cmd == Command::VerifyOracle {
        print!("{}", render_certificates(&outputs.summary));
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(&outputs.summary).expect("summary serializes")
        );
    }
    if outputs.all_pass {
        EXIT_OK
    } else {
        EXIT_SOLVER
    }
}
