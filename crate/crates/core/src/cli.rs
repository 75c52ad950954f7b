//! `oic` command line: compile, run, verify, diff, ensemble and rekey.
//!
//! Exit codes: 0 success, 1 verification or statistical failure, 2 usage,
//! parse or semantic error, 3 abort or fuel exhaustion.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{self, ensemble::ALPHA, Linkage, TestKind, TestPlan, TracePosition, Verdict};
use crate::codegen::{compile, lower_nominal, verify_scheme, CompileOptions, ObfuscationScheme};
use crate::frontend::{load, CheckedAst};
use crate::isa::{run, write_trace_jsonl, ObjectCode, RunStatus, VarId, Word, DEFAULT_FUEL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "oic", version, about = "Obfuscating compiler and VM for a one-instruction machine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile a source program under a seeded delta scheme.
    Compile {
        #[arg(short = 'i', long = "input")]
        src: PathBuf,
        /// Object code file (stdout if omitted).
        #[arg(short = 'o', long = "output")]
        out_obj: Option<PathBuf>,
        #[arg(long = "scheme")]
        out_scheme: Option<PathBuf>,
        #[arg(long, value_parser = parse_seed, default_value = "0")]
        seed: u64,
        /// Let inputs and outputs carry random deltas too.
        #[arg(long = "no-pin-io")]
        no_pin_io: bool,
    },
    /// Run object code and print its outputs.
    Run {
        #[arg(short = 'i', long = "input")]
        obj: PathBuf,
        /// Decode inputs and outputs with this scheme.
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[command(flatten)]
        inputs: Inputs,
        /// Write the execution trace as JSON lines.
        #[arg(long = "trace")]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Check object code and scheme against a recompilation of the source.
    Verify {
        #[arg(short = 'i', long = "input")]
        src: PathBuf,
        #[arg(long)]
        scheme: PathBuf,
        obj: PathBuf,
        /// With inputs, also run physical and nominal code side by side.
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Compare two object codes.
    Diff { obj_a: PathBuf, obj_b: PathBuf },
    /// Compile under many seeds, run each, and test the trace statistics.
    Ensemble {
        #[arg(short = 'i', long = "input")]
        src: PathBuf,
        #[arg(short = 'n', default_value_t = 4096)]
        n: u64,
        #[arg(long = "seed", value_parser = parse_seed, default_value = "0")]
        base_seed: u64,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long = "report")]
        report_out: Option<PathBuf>,
        /// Trace positions `pc:occ:field` to test instead of the default plan.
        #[arg(long = "pos")]
        positions: Vec<TracePosition>,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Fold extra per-variable deltas into object code.
    Rekey {
        #[arg(short = 'i', long = "input")]
        obj: PathBuf,
        #[arg(long = "delta", value_parser = parse_assignment)]
        deltas: Vec<(String, Word)>,
        #[arg(short = 'o', long = "output")]
        out_obj: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
pub struct Inputs {
    /// `name=value`, decimal or 0x hex; repeatable.
    #[arg(long = "in", value_parser = parse_assignment)]
    pub values: Vec<(String, Word)>,
}

impl Inputs {
    fn map(&self) -> BTreeMap<String, Word> {
        self.values.iter().cloned().collect()
    }
}

pub fn parse_seed(s: &str) -> Result<u64, String> {
    let hex = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u64::from_str_radix(hex, 16).map_err(|e| format!("bad seed `{s}`: {e}"))
}

pub fn parse_assignment(s: &str) -> Result<(String, Word), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let w = Word::parse_literal(value.trim()).map_err(|e| e.to_string())?;
    Ok((name.trim().to_string(), w))
}

/// A failed command: exit code plus diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail<T>(code: i32, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure { code, message: message.into() })
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_USAGE, message: e.to_string() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_src(path: &Path) -> Result<CheckedAst, Failure> {
    load(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_obj(path: &Path) -> Result<ObjectCode, Failure> {
    ObjectCode::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_scheme(path: &Path) -> Result<ObfuscationScheme, Failure> {
    ObfuscationScheme::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let io = |e: std::io::Error| usage(e);
    match cmd {
        Command::Compile { src, out_obj, out_scheme, seed, no_pin_io } => {
            let ast = load_src(&src)?;
            let opts = CompileOptions { seed, pin_io: !no_pin_io };
            let (code, scheme) = compile(&ast, opts).map_err(usage)?;
            let text = code.to_json() + "\n";
            match out_obj {
                Some(p) => write(&p, &text)?,
                None => out.write_all(text.as_bytes()).map_err(io)?,
            }
            if let Some(p) = out_scheme {
                write(&p, &scheme.to_json())?;
            }
            Ok(EXIT_OK)
        }

        Command::Run { obj, scheme, inputs, trace_out, fuel } => {
            let code = load_obj(&obj)?;
            let scheme = scheme.map(|p| load_scheme(&p)).transpose()?;
            let given = inputs.map();
            let init = physical_inputs(&code, &given, scheme.as_ref())?;
            let res = run(&code, &init, fuel).map_err(usage)?;
            if let Some(p) = trace_out {
                let f = fs::File::create(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                write_trace_jsonl(std::io::BufWriter::new(f), &res.trace).map_err(io)?;
            }
            match res.status {
                RunStatus::Halted => {}
                RunStatus::Aborted => {
                    return fail(EXIT_RUNTIME, format!("aborted after {} steps", res.trace.len()));
                }
                RunStatus::FuelExhausted => {
                    return fail(EXIT_RUNTIME, format!("fuel exhausted after {fuel} steps"));
                }
            }
            if scheme.is_none() {
                writeln!(out, "# physical values (no scheme given)").map_err(io)?;
            }
            for &v in &code.out_vars {
                let name = code.var_name(v);
                let d = scheme
                    .as_ref()
                    .and_then(|s| s.out_deltas.get(name).copied())
                    .unwrap_or(Word::ZERO);
                writeln!(out, "{name}={}", (res.value(v) - d).to_hex()).map_err(io)?;
            }
            Ok(EXIT_OK)
        }

        Command::Verify { src, scheme, obj, inputs, fuel } => {
            let ast = load_src(&src)?;
            let code = load_obj(&obj)?;
            let scheme = load_scheme(&scheme)?;
            let nom = lower_nominal(&ast, scheme_pins_io(&ast, &scheme)).map_err(usage)?;
            let report = verify_scheme(&code, &scheme, &nom);
            for v in &report.violations {
                writeln!(out, "violation: {v}").map_err(io)?;
            }
            let mut ok = report.ok;
            if ok && !inputs.values.is_empty() {
                let given = inputs.map();
                check_names(&ast.vars, ast.in_names(), &given)?;
                let r = analysis::lockstep_check(&ast, &code, &scheme, &given, fuel).map_err(usage)?;
                if let Some(d) = &r.divergence {
                    writeln!(out, "lockstep: diverged at step {} ({}): {}", d.step, d.pc, d.detail)
                        .map_err(io)?;
                    ok = false;
                } else {
                    writeln!(out, "lockstep: {} steps, no divergence", r.steps).map_err(io)?;
                }
            }
            writeln!(out, "verify: {}", if ok { "ok" } else { "FAILED" }).map_err(io)?;
            Ok(if ok { EXIT_OK } else { EXIT_FAIL })
        }

        Command::Diff { obj_a, obj_b } => {
            let r = analysis::structural_diff(&load_obj(&obj_a)?, &load_obj(&obj_b)?);
            writeln!(out, "{r}").map_err(io)?;
            Ok(if r.structurally_identical { EXIT_OK } else { EXIT_FAIL })
        }

        Command::Ensemble { src, n, base_seed, inputs, report_out, positions, fuel } => {
            let ast = load_src(&src)?;
            let given = inputs.map();
            check_names(&ast.vars, ast.in_names(), &given)?;
            let seeds: Vec<u64> = (0..n).map(|i| base_seed.wrapping_add(i)).collect();
            let input_json: BTreeMap<&str, String> = given.iter().map(|(k, v)| (k.as_str(), v.to_hex())).collect();
            let ens = match analysis::ensemble(&ast, &seeds, &given, fuel) {
                Ok(e) => e,
                Err(e @ (analysis::AnalysisError::Structure(_) | analysis::AnalysisError::Branch { .. })) => {
                    writeln!(err, "ensemble: {e}").map_err(io)?;
                    let report = json!({
                        "program": src.display().to_string(), "n": n, "input": input_json,
                        "structural_ok": false, "tests": [],
                    });
                    if let Some(p) = report_out {
                        write(&p, &(serde_json::to_string_pretty(&report).unwrap() + "\n"))?;
                    }
                    return Ok(EXIT_FAIL);
                }
                Err(e) => return Err(usage(e)),
            };
            if ens.status != RunStatus::Halted {
                writeln!(err, "note: members ended with {:?}", ens.status).map_err(io)?;
            }
            let mut plan = if positions.is_empty() { ens.default_plan(20) } else { explicit_plan(&ens, &positions)? };
            if n < 1280 && !plan.indep.is_empty() {
                writeln!(err, "note: independence tests need n >= 1280; skipped").map_err(io)?;
                plan.indep.clear();
            }
            if n < 80 && !plan.uniform.is_empty() {
                writeln!(err, "note: uniformity tests need n >= 80; skipped").map_err(io)?;
                plan.uniform.clear();
            }
            let tests = ens.run_plan(&plan).map_err(usage)?;
            let rejected = |k: TestKind| tests.iter().filter(|t| t.kind == k && t.verdict == Verdict::Reject).count();
            let (ru, ri, rl) = (rejected(TestKind::Uniform), rejected(TestKind::Indep), rejected(TestKind::Linked));
            writeln!(out, "ensemble: {n} members, {} steps each, structure ok", ens.pcs.len()).map_err(io)?;
            for (kind, name, rej) in
                [(TestKind::Uniform, "uniform", ru), (TestKind::Indep, "indep", ri), (TestKind::Linked, "linked", rl)]
            {
                let total = tests.iter().filter(|t| t.kind == kind).count();
                writeln!(out, "{name}: {rej}/{total} rejected at alpha={ALPHA}").map_err(io)?;
            }
            if let Some(p) = report_out {
                let report = json!({
                    "program": src.display().to_string(), "n": n, "input": input_json,
                    "structural_ok": true, "tests": tests,
                });
                write(&p, &(serde_json::to_string_pretty(&report).unwrap() + "\n"))?;
            }
            Ok(if ru > 1 || ri > 1 || rl > 0 { EXIT_FAIL } else { EXIT_OK })
        }

        Command::Rekey { obj, deltas, out_obj } => {
            let code = load_obj(&obj)?;
            let mut by_id = BTreeMap::new();
            for (name, w) in deltas {
                let v = code.var_id(&name).ok_or_else(|| usage(format!("unknown variable `{name}`")))?;
                by_id.insert(v, w);
            }
            let rekeyed = analysis::rekey(&code, &by_id).map_err(usage)?;
            let text = rekeyed.to_json() + "\n";
            match out_obj {
                Some(p) => write(&p, &text)?,
                None => out.write_all(text.as_bytes()).map_err(io)?,
            }
            Ok(EXIT_OK)
        }
    }
}

fn check_names<'a>(
    vars: &[String],
    in_names: impl Iterator<Item = &'a str>,
    given: &BTreeMap<String, Word>,
) -> Result<(), Failure> {
    let ins: Vec<&str> = in_names.collect();
    for name in given.keys() {
        if !ins.contains(&name.as_str()) {
            let what = if vars.contains(name) { "is not an input" } else { "is not declared" };
            return fail(EXIT_USAGE, format!("`{name}` {what}"));
        }
    }
    for name in ins {
        if !given.contains_key(name) {
            return fail(EXIT_USAGE, format!("missing value for input `{name}`"));
        }
    }
    Ok(())
}

fn physical_inputs(
    code: &ObjectCode,
    given: &BTreeMap<String, Word>,
    scheme: Option<&ObfuscationScheme>,
) -> Result<BTreeMap<VarId, Word>, Failure> {
    check_names(&code.vars, code.in_vars.iter().map(|&v| code.var_name(v)), given)?;
    Ok(given
        .iter()
        .map(|(name, &w)| {
            let d = scheme.and_then(|s| s.in_deltas.get(name).copied()).unwrap_or(Word::ZERO);
            (code.var_id(name).expect("checked name"), w + d)
        })
        .collect())
}

/// Whether the scheme was compiled with pinned I/O, read off its pin flags.
fn scheme_pins_io(ast: &CheckedAst, scheme: &ObfuscationScheme) -> bool {
    let pinned = |s: crate::codegen::SlotId| scheme.slots.get(s.index()).is_some_and(|v| v.pinned);
    let entry = scheme.envs.first().map(|e| &e.pre);
    let exit = scheme.envs.last().map(|e| &e.post);
    let mut io = ast
        .in_vars
        .iter()
        .filter_map(|&v| entry.map(|e| pinned(e.0[v.index()])))
        .chain(ast.out_vars.iter().filter_map(|&v| exit.map(|e| pinned(e.0[v.index()]))))
        .peekable();
    io.peek().is_none() || io.any(|p| p)
}

fn explicit_plan(ens: &analysis::Ensemble, positions: &[TracePosition]) -> Result<TestPlan, Failure> {
    let mut plan = TestPlan { uniform: positions.to_vec(), ..TestPlan::default() };
    for w in positions.windows(2) {
        match ens.linkage(w[0], w[1]).map_err(usage)? {
            Linkage::Linked => plan.linked.push((w[0], w[1])),
            Linkage::Free => plan.indep.push((w[0], w[1])),
        }
    }
    Ok(plan)
}
