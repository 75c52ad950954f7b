use std::collections::BTreeMap;

use serde::Serialize;

use super::{reference_eval, AnalysisError};
use crate::codegen::{lower_nominal, DeltaEnv, ObfuscationScheme};
use crate::frontend::CheckedAst;
use crate::isa::{step, Addr, MachineState, ObjectCode, RunStatus, Step, Word};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub step: u64,
    pub pc: Addr,
    pub var: Option<String>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LockstepReport {
    pub ok: bool,
    pub steps: u64,
    pub status: RunStatus,
    /// Physical outputs minus their out-deltas.
    pub outputs: BTreeMap<String, Word>,
    pub divergence: Option<Divergence>,
}

/// Runs `code` next to the nominal code of `ast` and checks, before and
/// after every step, that both are at the same pc and that every physical
/// value equals the nominal value plus the delta of its slot. The decoded
/// outputs are then compared with [`reference_eval`].
pub fn lockstep_check(
    ast: &CheckedAst,
    code: &ObjectCode,
    scheme: &ObfuscationScheme,
    inputs: &BTreeMap<String, Word>,
    fuel: u64,
) -> Result<LockstepReport, AnalysisError> {
    let nominal = lower_nominal(ast, true)?.object_code();
    if nominal.code.len() != code.code.len() || scheme.envs.len() != code.code.len() {
        return Err(AnalysisError::Mismatch("object code, scheme and source disagree in length".into()));
    }
    let mut nom = MachineState::new(nominal.vars.len());
    let mut phys = MachineState::new(code.vars.len());
    for &v in &code.in_vars {
        let name = code.var_name(v);
        let w = *inputs.get(name).ok_or_else(|| AnalysisError::MissingInput(name.to_string()))?;
        nom.store[v.index()] = w;
        phys.store[v.index()] = w + scheme.in_deltas.get(name).copied().unwrap_or(Word::ZERO);
    }

    let diverge = |t: u64, pc: Addr, nom: &[Word], phys: &[Word], env: &DeltaEnv, when: &str| {
        phys.iter().zip(nom).enumerate().find_map(|(i, (&p, &n))| {
            let d = scheme.delta(env.0[i]);
            (p != n + d).then(|| Divergence {
                step: t,
                pc,
                var: Some(code.vars[i].clone()),
                detail: format!("{when}: physical {p} != nominal {n} + delta {d}"),
            })
        })
    };

    let mut t = 0u64;
    let mut divergence = None;
    let mut status = RunStatus::FuelExhausted;
    while t < fuel {
        let pc = phys.pc;
        if pc.index() < code.code.len() {
            divergence = diverge(t, pc, &nom.store, &phys.store, &scheme.envs[pc.index()].pre, "before");
            if divergence.is_some() {
                break;
            }
        }
        match (step(code, &phys), step(&nominal, &nom)) {
            (Step::Next(p, _), Step::Next(n, _)) => {
                divergence = diverge(t, pc, &n.store, &p.store, &scheme.envs[pc.index()].post, "after");
                if divergence.is_none() && p.pc != n.pc {
                    divergence = Some(Divergence {
                        step: t,
                        pc,
                        var: None,
                        detail: format!("physical jumps to {} but nominal to {}", p.pc, n.pc),
                    });
                }
                if divergence.is_some() {
                    break;
                }
                (phys, nom) = (p, n);
            }
            (Step::Halted, Step::Halted) => {
                status = RunStatus::Halted;
                break;
            }
            (Step::Aborted, Step::Aborted) => {
                status = RunStatus::Aborted;
                break;
            }
            _ => unreachable!("pcs are equal"),
        }
        t += 1;
    }
    if t == fuel && divergence.is_none() {
        status = match phys.pc.index() {
            p if p == code.code.len() => RunStatus::Halted,
            p if p > code.code.len() => RunStatus::Aborted,
            _ => RunStatus::FuelExhausted,
        };
    }

    let outputs: BTreeMap<String, Word> = code
        .out_vars
        .iter()
        .map(|&v| {
            let name = code.var_name(v);
            let d = scheme.out_deltas.get(name).copied().unwrap_or(Word::ZERO);
            (name.to_string(), phys.get(v) - d)
        })
        .collect();

    if divergence.is_none() {
        let reference = reference_eval(ast, inputs, fuel);
        let mismatch = match (status, &reference) {
            (RunStatus::Halted, Ok(want)) if want != &outputs => {
                Some(format!("decoded outputs {outputs:?} != reference {want:?}"))
            }
            (RunStatus::Halted, Ok(_)) => None,
            (RunStatus::Aborted, Err(AnalysisError::Bounds { .. })) => None,
            (RunStatus::FuelExhausted, _) => None,
            (s, r) => Some(format!("machine ended {s:?}, reference gave {r:?}")),
        };
        divergence = mismatch.map(|detail| Divergence { step: t, pc: phys.pc, var: None, detail });
    }

    Ok(LockstepReport { ok: divergence.is_none(), steps: t, status, outputs, divergence })
}
