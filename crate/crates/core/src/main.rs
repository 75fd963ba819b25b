use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use rayon::prelude::*;

use polyscal::domain::{DomainKind, DomainSpec};
use polyscal::foliation::write_trace_csv;
use polyscal::scenario::{persist, regress, run, Baseline, Bundle, Scenario, Task};
use polyscal::Error;

#[derive(Parser)]
#[command(name = "polyscal", version, about = "Capillary surfaces in Riemannian polyhedra")]
struct Cli {
    /// Scenario config (one scenario, or {"scenarios": [...]}).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for scenario sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace every scenario's mesh size.
    #[arg(long, global = true)]
    h_override: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimize the capillary energy.
    Solve,
    /// Build a CMC foliation and check its dynamics.
    Foliate {
        /// Also write the trace CSV here (single scenario only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the verification suites.
    Verify {
        #[arg(value_enum)]
        what: Check,
    },
    /// Scalar-curvature sign and face convexity of the metric.
    Curvature,
    /// Rerun and compare against the scenario's baseline.
    Regress {
        /// Baseline file; defaults to the one named in the scenario.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write a new baseline from this run instead of comparing.
        #[arg(long)]
        write: bool,
        /// Relative tolerance recorded with --write.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Fields recorded with --write (all scalar fields when omitted).
        #[arg(long)]
        field: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Wedge,
    Comparison,
    Gaussbonnet,
    Evolution,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::HypothesisFailed(_) => 2,
        _ => 3,
    }
}

fn wedge_default() -> Scenario {
    Scenario::from_json(
        &serde_json::to_string(&serde_json::json!({
            "name": "wedge-suite",
            "task": "wedge",
            "h": 1.0,
            "domain": DomainSpec {
                kind: DomainKind::Prism,
                base: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                apex: None,
                top_scale: Some(1.0),
                top_offset: Some([0.0, 0.0, 1.0]),
            },
        }))
        .unwrap(),
    )
    .unwrap()
    .remove(0)
}

fn scenarios(cli: &Cli, allow_default: bool) -> Result<Vec<Scenario>, Error> {
    let mut list = match &cli.config {
        Some(p) => Scenario::load(p)?,
        None if allow_default => vec![wedge_default()],
        None => return Err(Error::Config("--config is required".into())),
    };
    if let Some(h) = cli.h_override {
        list.iter_mut().for_each(|s| s.h = h);
    }
    Ok(list)
}

fn one(cli: &Cli, sc: &Scenario, task: Task, out_csv: Option<&Path>) -> u8 {
    let out = match run(sc, Some(task)) {
        Ok(o) => o,
        Err(e) => {
            error!("{e}");
            println!("{}: error: {e}", sc.name);
            return exit_code(&e);
        }
    };
    if let Err(e) = persist(&out, &cli.out_dir) {
        println!("{}: error: {e}", sc.name);
        return 3;
    }
    if let (Some(path), Bundle::Foliate(t)) = (out_csv, &out.bundle) {
        if let Err(e) = write_trace_csv(path, &t.trace, t.dynamics.as_ref()) {
            println!("{}: error: {e}", sc.name);
            return 3;
        }
    }
    let pass = out.bundle.pass();
    println!("{}: {task:?} {}", sc.name, if pass { "pass" } else { "fail" });
    u8::from(!pass)
}

fn regress_one(cli: &Cli, sc: &Scenario, baseline: Option<&Path>, write: bool, tol: f64, fields: &[String]) -> u8 {
    let path = match baseline.map(Path::to_path_buf).or_else(|| sc.baseline.clone()) {
        Some(p) => p,
        None => {
            println!("{}: error: {}", sc.name, Error::MissingBaseline("no baseline given".into()));
            return 3;
        }
    };
    let out = match run(sc, None) {
        Ok(o) => o,
        Err(e) => {
            println!("{}: error: {e}", sc.name);
            return exit_code(&e);
        }
    };
    if write {
        let res = Baseline::from_bundle(&sc.name, &out.bundle, fields, tol)
            .and_then(|b| Ok(serde_json::to_string_pretty(&b)?))
            .and_then(|s| std::fs::write(&path, s).map_err(Error::from));
        return match res {
            Ok(()) => {
                println!("{}: baseline written to {}", sc.name, path.display());
                0
            }
            Err(e) => {
                println!("{}: error: {e}", sc.name);
                3
            }
        };
    }
    let rep = match Baseline::load(&path).and_then(|b| regress(&out.bundle, &b)) {
        Ok(r) => r,
        Err(e) => {
            println!("{}: error: {e}", sc.name);
            return 3;
        }
    };
    let _ = std::fs::create_dir_all(&cli.out_dir);
    if let Ok(s) = serde_json::to_string_pretty(&rep) {
        let _ = std::fs::write(cli.out_dir.join(format!("{}.regress.json", sc.name)), s);
    }
    if rep.pass {
        println!("{}: regress pass ({} fields)", sc.name, rep.diffs.len());
        0
    } else {
        println!("{}: regress fail: {}", sc.name, rep.failed.join(", "));
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{e}");
            return ExitCode::from(3);
        }
    }
    let allow_default = matches!(cli.cmd, Cmd::Verify { what: Check::Wedge });
    let list = match scenarios(&cli, allow_default) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    info!("{} scenario(s)", list.len());
    let codes: Vec<u8> = match &cli.cmd {
        Cmd::Regress {
            baseline,
            write,
            tol,
            field,
        } => list
            .par_iter()
            .map(|s| regress_one(&cli, s, baseline.as_deref(), *write, *tol, field))
            .collect(),
        cmd => {
            let task = match cmd {
                Cmd::Solve => Task::Solve,
                Cmd::Foliate { .. } => Task::Foliate,
                Cmd::Curvature => Task::Curvature,
                Cmd::Verify { what } => match what {
                    Check::Wedge => Task::Wedge,
                    Check::Comparison => Task::Comparison,
                    Check::Gaussbonnet => Task::Gaussbonnet,
                    Check::Evolution => Task::Evolution,
                },
                Cmd::Regress { .. } => unreachable!(),
            };
            let csv = match cmd {
                Cmd::Foliate { out: Some(p) } if list.len() == 1 => Some(p.as_path()),
                _ => None,
            };
            list.par_iter().map(|s| one(&cli, s, task, csv)).collect()
        }
    };
    // worst outcome wins: numerical > hypothesis > verdict
    ExitCode::from(codes.into_iter().max().unwrap_or(0))
}
