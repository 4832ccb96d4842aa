//! `pullback`: typecheck, normalize, trace and differentiate programs.

use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pullback::anf::{a_normalize, A_FUEL};
use pullback::engine::DEFAULT_FUEL;
use pullback::oracle::{finite_diff, lower, reverse_mode};
use pullback::syntax::Gensym;
use pullback::types::infer;
use pullback::{parse_program, Engine, EngineError, Registry, SourceProgram, Term};

#[derive(Parser)]
#[command(name = "pullback", version, about = "Reverse-mode differentiation by reduction of pullback terms")]
struct Cli {
    /// Step budget for a reduction.
    #[arg(long, global = true, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the type of the program.
    Check { file: PathBuf },
    /// Print the administrative normal form of the first pullback body.
    Anf { file: PathBuf },
    /// Normalize the program and print its value.
    Run { file: PathBuf },
    /// Print a row of the Jacobian of the program's function.
    Grad {
        file: PathBuf,
        /// Point, comma separated. Defaults to the literal the file applies its function to.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Option<Vec<f64>>,
        /// Output row, from 1.
        #[arg(long, default_value_t = 1)]
        row: usize,
        /// Compare against the first-order oracle and finite differences.
        #[arg(long)]
        check: bool,
    },
    /// Print every reduction step.
    Trace {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Pretty)]
        format: Format,
    },
    /// List the registered primitives.
    Prims,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pretty,
    Lines,
}

enum Failure {
    Input(String),
    Fuel(String),
    Closed,
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Fuel { .. } => Failure::Fuel(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn load(path: &PathBuf) -> Result<SourceProgram, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_program(&src).map_err(|e| Failure::Input(format!("{}:{e}", path.display())))
}

fn typecheck(prog: &SourceProgram, reg: &Registry) -> Result<pullback::Ty, Failure> {
    infer(&prog.env(), reg, &prog.term).map_err(|e| Failure::Input(format!("type error: {e}")))
}

fn first_pullback(t: &Term) -> Option<&Term> {
    if matches!(t, Term::Pullback(..)) {
        return Some(t);
    }
    pullback::syntax::children(t).into_iter().find_map(first_pullback)
}

/// The function a file differentiates and the point it is applied to, if any.
fn function_of(t: &Term) -> (Term, Option<&Term>) {
    let (head, arg) = match t {
        Term::App(h, a) => (&**h, Some(&**a)),
        _ => (t, None),
    };
    match head {
        Term::Pullback(b, body, _) => (Term::Lam(b.clone(), body.clone()), arg),
        Term::Lam(..) => (head.clone(), arg),
        _ => (t.clone(), None),
    }
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    let reg = Registry::builtin();
    let engine = Engine::new(reg).with_fuel(cli.fuel);
    match cli.command {
        Command::Prims => {
            for p in reg.iter() {
                writeln!(out, "{}: R^{} → R^{}", p.name, p.n_in, p.n_out)?;
            }
        }
        Command::Check { file } => {
            let prog = load(&file)?;
            writeln!(out, "{}", typecheck(&prog, reg)?)?;
        }
        Command::Anf { file } => {
            let prog = load(&file)?;
            typecheck(&prog, reg)?;
            let target = match first_pullback(&prog.term) {
                Some(Term::Pullback(_, body, _)) => &**body,
                _ => &prog.term,
            };
            let (series, _) = a_normalize(target, &mut Gensym::above(&prog.term), A_FUEL.min(cli.fuel))
                .map_err(|e| Failure::Fuel(e.to_string()))?;
            writeln!(out, "{}", series.to_term())?;
        }
        Command::Run { file } => {
            let prog = load(&file)?;
            typecheck(&prog, reg)?;
            let n = engine.recording(false).normalize(&prog.term)?;
            for note in &n.trace.notes {
                eprintln!("note: {note}");
            }
            writeln!(out, "{}", n.value)?;
        }
        Command::Trace { file, format } => {
            let prog = load(&file)?;
            typecheck(&prog, reg)?;
            let n = engine.normalize(&prog.term)?;
            for e in &n.trace.entries {
                match format {
                    Format::Pretty => writeln!(out, "{e}")?,
                    Format::Lines => writeln!(
                        out,
                        "{}",
                        serde_json::json!({
                            "step": e.step,
                            "rule": e.rule.id(),
                            "redex": e.redex,
                            "result": e.result,
                            "depth": e.depth,
                            "phase": e.phase.to_string(),
                        })
                    )?,
                }
            }
            match format {
                Format::Pretty => {
                    for note in &n.trace.notes {
                        writeln!(out, "note: {note}")?;
                    }
                    writeln!(out, "value: {}", n.value)?;
                }
                Format::Lines => {
                    writeln!(out, "{}", serde_json::json!({ "value": n.value.to_string(), "notes": n.trace.notes }))?;
                }
            }
        }
        Command::Grad { file, at, row, check } => {
            let prog = load(&file)?;
            let (f, arg) = function_of(&prog.term);
            let x = match at {
                Some(x) => x,
                None => arg
                    .and_then(pullback::syntax::flatten_literal)
                    .ok_or_else(|| Failure::Input("no point given; use --at".into()))?,
            };
            let g = engine.recording(false).grad(&f, &x, row)?;
            writeln!(out, "{}", fmt_row(&g))?;
            if check {
                check_row(&mut out, reg, &f, &x, row, &g)?;
            }
        }
    }
    Ok(())
}

fn check_row(out: &mut impl Write, reg: &Registry, f: &Term, x: &[f64], row: usize, g: &[f64]) -> Result<(), Failure> {
    let graph = lower(reg, f, x.len()).map_err(|e| Failure::Input(format!("check: {e}")))?;
    let oracle = reverse_mode(&graph, reg, x, row).map_err(|e| Failure::Input(format!("check: {e}")))?;
    let eval = |p: &[f64]| graph.eval(reg, p).expect("lowered graph evaluates");
    let fd = finite_diff(&eval, x, 1e-5);
    let fd_row: Vec<f64> = (0..x.len()).map(|c| fd.get(row - 1, c)).collect();
    let ok_oracle = g.iter().zip(&oracle).all(|(a, b)| close(*a, *b, 1e-9, 0.0));
    let ok_fd = g.iter().zip(&fd_row).all(|(a, b)| close(*a, *b, 1e-4, 1e-6));
    writeln!(out, "oracle: {} {}", fmt_row(&oracle), if ok_oracle { "ok" } else { "MISMATCH" })?;
    writeln!(out, "finite differences: {} {}", fmt_row(&fd_row), if ok_fd { "ok" } else { "MISMATCH" })?;
    if ok_oracle && ok_fd {
        Ok(())
    } else {
        Err(Failure::Input("gradient check failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Exit code 2 is reserved for fuel exhaustion.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Fuel(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

