use std::collections::BTreeMap;

use super::AnalysisError;
use crate::isa::{Instruction, ObjectCode, VarId, Word};

/// Folds per-variable deltas into the constants of `code`, so that every
/// stored value of `v` is shifted by `deltas[v]` while branches and I/O are
/// unchanged. Variables missing from `deltas` keep delta 0.
///
/// Fails with `E_IODELTA` if an input or output has a nonzero delta, or if a
/// variable with a nonzero delta can be read at its zero-initialised value
/// (the machine would read 0, not 0 + delta).
pub fn rekey(code: &ObjectCode, deltas: &BTreeMap<VarId, Word>) -> Result<ObjectCode, AnalysisError> {
    let d = |v: VarId| deltas.get(&v).copied().unwrap_or(Word::ZERO);
    for (&v, &w) in deltas {
        if v.index() >= code.vars.len() {
            return Err(AnalysisError::UnknownInput(v.to_string()));
        }
        if w == Word::ZERO {
            continue;
        }
        let name = code.var_name(v);
        if code.in_vars.contains(&v) || code.out_vars.contains(&v) {
            return Err(AnalysisError::IoDelta(format!("`{name}` is an input or output")));
        }
        if reads_initial_value(code, v) {
            return Err(AnalysisError::IoDelta(format!("`{name}` can be read before it is written")));
        }
    }
    let rekeyed = code
        .code
        .iter()
        .map(|ins| {
            let dy = d(ins.y);
            let dz = if ins.z == ins.y { dy } else { d(ins.z) };
            Instruction { a: ins.a - d(ins.x) + dy, b: ins.b - dz + dy, ..*ins }
        })
        .collect();
    Ok(ObjectCode { code: rekeyed, ..code.clone() })
}

/// Whether some path from the entry reads `v` before any write to it.
fn reads_initial_value(code: &ObjectCode, v: VarId) -> bool {
    let len = code.code.len();
    let mut seen = vec![false; len];
    let mut work = vec![0usize];
    while let Some(pc) = work.pop() {
        if pc >= len || seen[pc] {
            continue;
        }
        seen[pc] = true;
        let ins = &code.code[pc];
        if ins.x == v || (ins.z == v && ins.y != v) {
            return true;
        }
        if ins.y != v {
            work.push(ins.l1.index());
            work.push(ins.l2.index());
        }
    }
    false
}
