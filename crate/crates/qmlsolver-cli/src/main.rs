//! `qmlsolver`: decide one problem file and print a JSON report.
//!
//! Exit status: 0 sat or valid, 1 unsat or invalid, 2 error, 3 resource cap.

use clap::Parser;
use qmlsolver::error::Error;
use qmlsolver::oracle::Bounds;
use qmlsolver::parse::{parse_problem, ConstSemantics, Domains, Logic, SourceProblem, Task};
use qmlsolver::solver::{self, Backend, Emit, RunConfig};
use std::io::{Read, Write};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "qmlsolver", version, about = "Satisfiability and validity for one-variable first-order modal logic")]
struct Args {
    /// problem file, or `-` for standard input
    input: String,
    /// kn:<n>, s5 or s5n:<n> (overrides the file header)
    #[arg(long)]
    logic: Option<Logic>,
    /// constant or expanding
    #[arg(long)]
    domains: Option<Domains>,
    /// sat, valid or global
    #[arg(long)]
    task: Option<Task>,
    /// partial or total interpretation of constants
    #[arg(long)]
    constants: Option<ConstSemantics>,
    /// qksat, weakq, links or oracle
    #[arg(long)]
    backend: Option<Backend>,
    /// json or dot
    #[arg(long, value_parser = parse_emit)]
    emit_witness: Option<Emit>,
    /// bounds for the oracle backend, e.g. w=4,d=2,b=3,dom=4
    #[arg(long, value_parser = parse_bounds)]
    oracle_bounds: Option<Bounds>,
    /// print the problem after the named reduction instead of solving
    #[arg(long)]
    reduce: Option<String>,
    /// run every applicable backend and fail on disagreement
    #[arg(long)]
    cross_validate: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_emit(s: &str) -> Result<Emit, String> {
    match s {
        "json" => Ok(Emit::Json),
        "dot" => Ok(Emit::Dot),
        o => Err(format!("unknown witness format '{o}' (expected json or dot)")),
    }
}

fn parse_bounds(s: &str) -> Result<Bounds, String> {
    Bounds::parse(s).map_err(|e| e.to_string())
}

fn load(args: &Args) -> Result<SourceProblem, Error> {
    let text = if args.input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| Error::Invalid(format!("reading stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(&args.input).map_err(|e| Error::Invalid(format!("reading {}: {e}", args.input)))?
    };
    let mut p = parse_problem(&text)?;
    if let Some(l) = args.logic {
        p.logic = l;
    }
    if let Some(d) = args.domains {
        p.domains = d;
    }
    if let Some(t) = args.task {
        p.task = t;
    }
    if let Some(c) = args.constants {
        p.constants = c;
    }
    Ok(p)
}

fn emit(text: &str) {
    // a closed pipe is the reader's choice, not an error
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json(v: &serde_json::Value) {
    emit(&format!("{}\n", serde_json::to_string_pretty(v).expect("report serialises")));
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match load(&args) {
        Err(e) => {
            print_json(&solver::error_json(&e));
            solver::error_exit_code(&e)
        }
        Ok(p) => match &args.reduce {
            Some(which) => match solver::reduce(&p, which) {
                Ok(r) => {
                    emit(&solver::render_problem(&r));
                    0
                }
                Err(e) => {
                    print_json(&solver::error_json(&e));
                    solver::error_exit_code(&e)
                }
            },
            None => {
                let cfg = RunConfig {
                    backend: args.backend,
                    cross_validate: args.cross_validate,
                    oracle_bounds: args.oracle_bounds.unwrap_or_default(),
                    emit: args.emit_witness,
                    seed: args.seed,
                    limits: None,
                };
                match solver::run(&p, &cfg) {
                    Ok(r) => {
                        print_json(&serde_json::to_value(&r).expect("report serialises"));
                        r.exit_code()
                    }
                    Err(e) => {
                        print_json(&solver::error_json(&e));
                        solver::error_exit_code(&e)
                    }
                }
            }
        },
    };
    ExitCode::from(code as u8)
}
