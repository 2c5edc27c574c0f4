//! Command-line front end: compile, witness, extract, verify, solve,
//! selftest. Exit codes: 0 success, 2 parse error, 3 pipeline error,
//! 4 semantic error (non-root, failed verification, probe failure, ...).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nnfact::compiler::{compile, Instance};
use nnfact::exact::{rat, rat_to_f64, rat_to_string, RatMatrix};
use nnfact::gadgets::{gamma_params_for_range, gamma_wrap, product_gadget, variable_gadget};
use nnfact::incomplete::{IncompleteMatrix, VarRange};
use nnfact::poly::parse_poly;
use nnfact::solver::{nmf_search, DenseMatrix, SolveConfig};
use nnfact::witness::{
    build_witness, extract_root, verify_factorization, Factorization, VerifyMode,
};
use nnfact::Error;

#[derive(Parser)]
#[command(name = "nnfact", version, about = "polynomial roots as nonnegative factorizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a polynomial into a matrix instance.
    Compile {
        /// File containing the polynomial, e.g. "x1 + x2 - 1".
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the exact factorization attached to a root.
    Witness {
        #[arg(long)]
        instance: PathBuf,
        /// Root as "x1=1/2,x2=1/2".
        #[arg(long)]
        assign: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read the root back out of a factorization.
    Extract {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        fact: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Check a factorization against an instance (or a bare matrix).
    Verify {
        #[arg(long, conflicts_with = "matrix")]
        instance: Option<PathBuf>,
        #[arg(long, requires = "rank")]
        matrix: Option<PathBuf>,
        /// Target size when verifying against a bare matrix.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        fact: PathBuf,
        /// Residual tolerance; omit for exact mode.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Numeric factorization search.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the built-in check corpus.
    Selftest,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Defaults to NMFU_THREADS, then 1.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Json(_) => 2,
        Error::NotARoot(_)
        | Error::OutOfCube { .. }
        | Error::OutOfRange { .. }
        | Error::ProbeFailure(_)
        | Error::DegenerateFactorization
        | Error::CompletionInfeasible(_)
        | Error::UnderDetermined(_) => 4,
        _ => 3,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn default_threads() -> usize {
    std::env::var("NMFU_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

fn run(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Compile { poly, out } => {
            let text = std::fs::read_to_string(&poly)?;
            let f = parse_poly(text.trim())?;
            let inst = compile(&f)?;
            write_json(&out, &inst)?;
            println!(
                "compiled: {} x {} matrix, k = {}, {} variables",
                inst.matrix.rows(),
                inst.matrix.cols(),
                inst.k,
                inst.n
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Witness {
            instance,
            assign,
            out,
        } => {
            let inst: Instance = read_json(&instance)?;
            let point = inst.parse_point(&assign)?;
            let fac = build_witness(&inst, &point)?;
            write_json(&out, &fac)?;
            println!("witness: {} exact factors, sum verified", fac.k);
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract {
            instance,
            fact,
            tol,
        } => {
            let inst: Instance = read_json(&instance)?;
            let fac: Factorization = read_json(&fact)?;
            let point = extract_root(&inst, &fac, tol)?;
            for (name, value) in inst.x_names().iter().zip(&point) {
                println!("{name} = {} ({})", rat_to_string(value), rat_to_f64(value));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            instance,
            matrix,
            rank,
            fact,
            tol,
        } => {
            let (m, k) = match (instance, matrix) {
                (Some(p), None) => {
                    let inst: Instance = read_json(&p)?;
                    (inst.matrix, inst.k)
                }
                (None, Some(p)) => {
                    let m: RatMatrix = read_json(&p)?;
                    (m, rank.expect("clap enforces --rank with --matrix"))
                }
                _ => {
                    return Err(Error::InvalidInstance(
                        "pass exactly one of --instance / --matrix".into(),
                    ))
                }
            };
            let fac: Factorization = read_json(&fact)?;
            fac.validate()?;
            let mode = match tol {
                Some(t) => VerifyMode::Tol(t),
                None => VerifyMode::Exact,
            };
            let report = verify_factorization(&m, k, &fac, mode);
            print!("{report}");
            if report.all_ok() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(4))
            }
        }
        Command::Solve {
            matrix,
            rank,
            out,
            solver,
        } => {
            let m: RatMatrix = read_json(&matrix)?;
            let cfg = SolveConfig {
                k: rank,
                restarts: solver.restarts,
                max_iters: solver.iters,
                tol: solver.tol,
                threshold: solver.threshold,
                seed: solver.seed,
                threads: solver.threads.unwrap_or_else(default_threads),
            };
            match nmf_search(&DenseMatrix::from_exact(&m), &cfg)? {
                Some(fac) => {
                    write_json(&out, &fac)?;
                    println!("found at rank {rank}");
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("not found at rank {rank}");
                    Ok(ExitCode::from(4))
                }
            }
        }
        Command::Selftest => selftest(),
    }
}

// ---------------------------------------------------------------------------
// Self-test corpus. NNFACT_SELFTEST_CORRUPT=<check id> deliberately breaks
// one check to exercise failure reporting.
// ---------------------------------------------------------------------------

fn selftest() -> Result<ExitCode, Error> {
    let corrupt = std::env::var("NNFACT_SELFTEST_CORRUPT").ok();
    let corrupted = |id: &str| corrupt.as_deref() == Some(id);
    let mut failures = 0usize;
    let mut check = |id: &str, result: Result<(), String>| match result {
        Ok(()) => println!("pass [{id}]"),
        Err(msg) => {
            println!("FAIL [{id}] {msg}");
            failures += 1;
        }
    };

    check("rank1-completion", selftest_rank1(corrupted("rank1-completion")));
    check("k-formula", selftest_k_formula(corrupted("k-formula")));
    check("witness-roundtrip", selftest_roundtrip(corrupted("witness-roundtrip")));
    check("gadget-shapes", selftest_shapes(corrupted("gadget-shapes")));

    if failures == 0 {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failures} check(s) failed");
        Ok(ExitCode::from(4))
    }
}

fn selftest_rank1(corrupt: bool) -> Result<(), String> {
    let mut h = IncompleteMatrix::constants(3, 3);
    let range = |n: &str| VarRange::new(n, rat(0), rat(2)).unwrap();
    h.set_constant(0, 0, rat(1));
    h.set_constant(0, 1, rat(1));
    h.set_var(0, 2, range("x1")).unwrap();
    h.set_var(1, 0, range("x2")).unwrap();
    h.set_var(1, 1, range("y")).unwrap();
    h.set_constant(1, 2, rat(1));
    h.set_var(2, 0, range("x3")).unwrap();
    h.set_constant(2, 1, if corrupt { rat(3) } else { rat(2) });
    h.set_var(2, 2, range("y")).unwrap();

    let sols = h.rank1_complete(1e-9).map_err(|e| e.to_string())?;
    if sols.len() != 1 {
        return Err(format!("{} solutions", sols.len()));
    }
    let a = &sols[0];
    let expect = [
        ("x1", 0.5f64.sqrt()),
        ("x2", 2f64.sqrt()),
        ("x3", 2.0),
        ("y", 2f64.sqrt()),
    ];
    for (name, want) in expect {
        if (a[name] - want).abs() > 1e-9 {
            return Err(format!("{name} = {} (want {want})", a[name]));
        }
    }
    let entries = h.complete_f64(a, 1e-9).map_err(|e| e.to_string())?;
    let dense = DenseMatrix::new(3, 3, entries).map_err(|e| e.to_string())?;
    let cfg = SolveConfig {
        k: 1,
        restarts: 10,
        max_iters: 500,
        tol: 1e-14,
        threshold: 1e-10,
        seed: 1,
        threads: 1,
    };
    match nmf_search(&dense, &cfg).map_err(|e| e.to_string())? {
        Some(_) => Ok(()),
        None => Err("rank-one search rejected the completed matrix".into()),
    }
}

fn selftest_k_formula(corrupt: bool) -> Result<(), String> {
    let cases = [
        ("x1 + x2 - 1", 11, 43),
        ("x1^2 - x1", 19, 66),
        ("x1 x2 - x3", 19, 74),
        ("3 x1 x2 x3 - x1", 28, if corrupt { 103 } else { 102 }),
    ];
    for (text, rho, k) in cases {
        let inst =
            compile(&parse_poly(text).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if inst.claimed_rho != rho || inst.k != k || inst.k != inst.recompute_k() {
            return Err(format!(
                "{text}: rho {} (want {rho}), k {} (want {k}, recomputed {})",
                inst.claimed_rho,
                inst.k,
                inst.recompute_k()
            ));
        }
    }
    Ok(())
}

fn selftest_roundtrip(corrupt: bool) -> Result<(), String> {
    use nnfact::exact::ratio;
    let mut inst =
        compile(&parse_poly("x1 + x2 - 1").unwrap()).map_err(|e| e.to_string())?;
    if corrupt {
        let v = inst.matrix.get(0, 0) + rat(1);
        inst.matrix.set(0, 0, v);
    }
    let point = [ratio(1, 2), ratio(1, 2)];
    let fac = build_witness(&inst, &point).map_err(|e| e.to_string())?;
    let report = verify_factorization(&inst.matrix, inst.k, &fac, VerifyMode::Exact);
    if !report.all_ok() {
        return Err("witness failed exact verification".into());
    }
    let back = extract_root(&inst, &fac, 1e-9).map_err(|e| e.to_string())?;
    if back != point {
        return Err("extracted root differs".into());
    }
    Ok(())
}

fn selftest_shapes(corrupt: bool) -> Result<(), String> {
    let base = IncompleteMatrix::from_matrix(&RatMatrix::from_i64(&[&[1, 1], &[1, 1]]));
    let (g, _) = variable_gadget(&base, 0, &[0], rat(1)).map_err(|e| e.to_string())?;
    if (g.rows(), g.cols()) != (6, 6) {
        return Err(format!("variable gadget shape {:?}", (g.rows(), g.cols())));
    }
    let (p, _) = product_gadget("u1", "u2", "v").map_err(|e| e.to_string())?;
    let want = if corrupt { (12, 11) } else { (11, 11) };
    if (p.rows(), p.cols()) != want {
        return Err(format!("product gadget shape {:?}", (p.rows(), p.cols())));
    }
    let mut b = IncompleteMatrix::constants(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            b.set_constant(i, j, rat(1));
        }
    }
    b.set_var(0, 0, VarRange::new("x", rat(0), rat(1)).unwrap())
        .map_err(|e| e.to_string())?;
    let (m, n, pr, q) = gamma_params_for_range(&rat(0), &rat(1)).map_err(|e| e.to_string())?;
    let (g, trace) = gamma_wrap(&b, "x", m, n, pr, q).map_err(|e| e.to_string())?;
    if g.rows() != 2 + 5 * trace.tau + 5 || g.cols() != 2 + 5 * trace.tau + 4 {
        return Err(format!("gamma shape {:?}", (g.rows(), g.cols())));
    }
    Ok(())
}
