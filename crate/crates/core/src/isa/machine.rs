use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{lt_wrap, Addr, ObjectCode, VarId, Word};

/// Default step budget for [`run`].
pub const DEFAULT_FUEL: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub pc: Addr,
    /// Total over the object code's variable table.
    pub store: Vec<Word>,
}

impl MachineState {
    pub fn new(nvars: usize) -> MachineState {
        MachineState { pc: Addr(0), store: vec![Word::ZERO; nvars] }
    }

    pub fn get(&self, v: VarId) -> Word {
        self.store[v.index()]
    }
}

/// One executed instruction, with the physical values it saw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub pc: Addr,
    #[serde(rename = "xv")]
    pub x_read: Word,
    #[serde(rename = "zv")]
    pub z_read: Word,
    #[serde(rename = "yv")]
    pub y_written: Word,
    pub taken: bool,
    pub next: Addr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Halted,
    Aborted,
    FuelExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub status: RunStatus,
    pub final_store: Vec<Word>,
    pub final_pc: Addr,
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    pub fn pcs(&self) -> impl Iterator<Item = Addr> + '_ {
        self.trace.iter().map(|r| r.pc)
    }

    pub fn value(&self, v: VarId) -> Word {
        self.final_store[v.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("missing value for input variable `{0}`")]
    MissingInput(String),
    #[error("initial value given for unknown variable {0}")]
    UnknownVar(VarId),
}

/// Result of a single [`step`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Next(MachineState, TraceRecord),
    Halted,
    Aborted,
}

/// Executes the instruction at `st.pc`. Pure: the input state is untouched.
pub fn step(code: &ObjectCode, st: &MachineState) -> Step {
    let mut next = st.clone();
    match exec(code, &mut next, 0) {
        Ok(rec) => Step::Next(next, rec),
        Err(RunStatus::Aborted) => Step::Aborted,
        Err(_) => Step::Halted,
    }
}

#[inline]
fn exec(code: &ObjectCode, st: &mut MachineState, t: u64) -> Result<TraceRecord, RunStatus> {
    let pc = st.pc.index();
    let len = code.code.len();
    if pc == len {
        return Err(RunStatus::Halted);
    }
    if pc > len {
        return Err(RunStatus::Aborted);
    }
    let ins = &code.code[pc];
    let x_read = st.store[ins.x.index()];
    let y_written = x_read + ins.a;
    st.store[ins.y.index()] = y_written;
    // reads the fresh y when z == y
    let z_read = st.store[ins.z.index()];
    let taken = lt_wrap(y_written, z_read + ins.b);
    let next = if taken { ins.l1 } else { ins.l2 };
    st.pc = next;
    Ok(TraceRecord { t, pc: Addr(pc as u32), x_read, z_read, y_written, taken, next })
}

/// Runs from address 0 until halt, abort, or `fuel` executed steps.
///
/// `init` must cover every input variable; every other variable starts at 0.
pub fn run(
    code: &ObjectCode,
    init: &BTreeMap<VarId, Word>,
    fuel: u64,
) -> Result<RunResult, RunError> {
    let mut st = MachineState::new(code.vars.len());
    for v in &code.in_vars {
        if !init.contains_key(v) {
            return Err(RunError::MissingInput(code.var_name(*v).to_string()));
        }
    }
    for (&v, &w) in init {
        if v.index() >= st.store.len() {
            return Err(RunError::UnknownVar(v));
        }
        st.store[v.index()] = w;
    }
    let mut trace = Vec::new();
    let mut t = 0u64;
    let status = loop {
        if t == fuel {
            break match st.pc.index() {
                p if p == code.len() => RunStatus::Halted,
                p if p > code.len() => RunStatus::Aborted,
                _ => RunStatus::FuelExhausted,
            };
        }
        match exec(code, &mut st, t) {
            Ok(rec) => trace.push(rec),
            Err(status) => break status,
        }
        t += 1;
    };
    Ok(RunResult { status, final_pc: st.pc, final_store: st.store, trace })
}

/// Writes one JSON object per line.
pub fn write_trace_jsonl<W: Write>(mut out: W, trace: &[TraceRecord]) -> io::Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
