use std::fmt;

use serde::Serialize;

use super::{DeltaEnv, NominalCode, ObfuscationScheme, SlotId};
use crate::isa::{Addr, ObjectCode, Word};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Object code differs from the nominal code outside the constants.
    Structure { addr: Option<Addr>, detail: String },
    /// The scheme's envs or slot table disagree with the nominal code.
    Env { addr: Option<Addr>, detail: String },
    ConstA { addr: Addr, expected: Word, found: Word },
    ConstB { addr: Addr, expected: Word, found: Word },
    LoopEnv { header: Addr, back_edge: Addr },
    Edge { from: Addr, to: Addr },
    Pinned { slot: SlotId, delta: Word },
    IoDelta { var: String, expected: Word, found: Option<Word> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = |a: &Option<Addr>| a.map(|a| format!(" at {a}")).unwrap_or_default();
        match self {
            Violation::Structure { addr, detail } => write!(f, "structure{}: {detail}", at(addr)),
            Violation::Env { addr, detail } => write!(f, "env{}: {detail}", at(addr)),
            Violation::ConstA { addr, expected, found } => {
                write!(f, "constant a at {addr}: expected {expected}, found {found}")
            }
            Violation::ConstB { addr, expected, found } => {
                write!(f, "constant b at {addr}: expected {expected}, found {found}")
            }
            Violation::LoopEnv { header, back_edge } => {
                write!(f, "loop env at header {header} differs from back-edge {back_edge}")
            }
            Violation::Edge { from, to } => write!(f, "edge {from} -> {to} changes env"),
            Violation::Pinned { slot, delta } => write!(f, "pinned slot {} has delta {delta}", slot.0),
            Violation::IoDelta { var, expected, found } => match found {
                Some(w) => write!(f, "io delta of {var}: expected {expected}, found {w}"),
                None => write!(f, "io delta of {var}: missing"),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub violations: Vec<Violation>,
    pub ok: bool,
}

/// Checks `code` and `scheme` against `nom`: unchanged structure, the
/// constant identities at every instruction, slot-identical envs at loop
/// headers and back-edges and along every edge, pinned slots at zero, and
/// the I/O delta tables.
pub fn verify_scheme(code: &ObjectCode, scheme: &ObfuscationScheme, nom: &NominalCode) -> VerifyReport {
    let mut out = Vec::new();
    check_structure(code, nom, &mut out);
    let envs_ok = check_envs(scheme, nom, &mut out);

    for (i, sv) in scheme.slots.iter().enumerate() {
        if sv.pinned && sv.delta != Word::ZERO {
            out.push(Violation::Pinned { slot: SlotId(i as u32), delta: sv.delta });
        }
    }

    if envs_ok {
        for (i, (phys, nins)) in code.code.iter().zip(&nom.code).enumerate() {
            let (a, b) = scheme.physical(nins, &scheme.envs[i]);
            let addr = Addr(i as u32);
            if phys.a != a {
                out.push(Violation::ConstA { addr, expected: a, found: phys.a });
            }
            if phys.b != b {
                out.push(Violation::ConstB { addr, expected: b, found: phys.b });
            }
        }
        check_io(scheme, nom, &mut out);
    }

    for lp in &nom.loops {
        let (h, be) = (lp.header.index(), lp.back_edge.index());
        if h >= nom.envs.len() || be >= nom.envs.len() || nom.envs[h].pre != nom.envs[be].post {
            out.push(Violation::LoopEnv { header: lp.header, back_edge: lp.back_edge });
        }
    }
    for (i, ins) in nom.code.iter().enumerate() {
        let from = Addr(i as u32);
        let targets = if ins.l1 == ins.l2 { vec![ins.l1] } else { vec![ins.l1, ins.l2] };
        for to in targets {
            if let Some(env) = nom.env_at(to) {
                if env != &nom.envs[i].post {
                    out.push(Violation::Edge { from, to });
                }
            }
        }
    }

    VerifyReport { ok: out.is_empty(), violations: out }
}

fn check_structure(code: &ObjectCode, nom: &NominalCode, out: &mut Vec<Violation>) {
    let mut bad = |addr, detail: &str| out.push(Violation::Structure { addr, detail: detail.to_string() });
    if code.vars != nom.vars || code.in_vars != nom.in_vars || code.out_vars != nom.out_vars {
        bad(None, "variable tables differ");
    }
    if code.code.len() != nom.code.len() {
        bad(None, &format!("length {} != {}", code.code.len(), nom.code.len()));
    }
    for (i, (p, n)) in code.code.iter().zip(&nom.code).enumerate() {
        if p.with_constants(Word::ZERO, Word::ZERO) != n.with_constants(Word::ZERO, Word::ZERO) {
            bad(Some(Addr(i as u32)), "operands or targets differ");
        }
    }
}

/// Returns whether the envs are usable for the constant checks.
fn check_envs(scheme: &ObfuscationScheme, nom: &NominalCode, out: &mut Vec<Violation>) -> bool {
    let mut bad = |addr, detail: String| out.push(Violation::Env { addr, detail });
    let mut usable = true;
    if scheme.slots.len() != nom.slots.len() {
        bad(None, format!("{} slots, expected {}", scheme.slots.len(), nom.slots.len()));
        usable = false;
    } else {
        for (i, (s, n)) in scheme.slots.iter().zip(&nom.slots).enumerate() {
            if s.pinned != n.pinned {
                bad(None, format!("slot {i} pin flag differs"));
            }
        }
    }
    if scheme.envs.len() != nom.envs.len() {
        bad(None, format!("{} envs, expected {}", scheme.envs.len(), nom.envs.len()));
        return false;
    }
    let fits = |e: &DeltaEnv| e.len() == nom.vars.len() && e.0.iter().all(|s| s.index() < scheme.slots.len());
    for (i, (s, n)) in scheme.envs.iter().zip(nom.envs.iter()).enumerate() {
        if !fits(&s.pre) || !fits(&s.post) {
            bad(Some(Addr(i as u32)), "env does not cover the variable table".to_string());
            usable = false;
        } else if s != n {
            bad(Some(Addr(i as u32)), "env differs from lowering".to_string());
        }
    }
    usable
}

fn check_io(scheme: &ObfuscationScheme, nom: &NominalCode, out: &mut Vec<Violation>) {
    let sides = [
        (&nom.in_vars, &nom.entry_env, &scheme.in_deltas),
        (&nom.out_vars, &nom.exit_env, &scheme.out_deltas),
    ];
    for (vars, env, table) in sides {
        for &v in vars {
            let name = &nom.vars[v.index()];
            let expected = scheme.delta(env.slot(v));
            let found = table.get(name).copied();
            if found != Some(expected) {
                out.push(Violation::IoDelta { var: name.clone(), expected, found });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{lower_nominal, randomize};
    use crate::frontend::load;

    const SRC: &str = "vars a[3], n, i, s; in n; out s;
        i = 0; s = 0;
        while (i < n) { if (i < 3) { a[i] = s; } s = s + i; i = i + 1; }";

    fn build(seed: u64) -> (ObjectCode, ObfuscationScheme, NominalCode) {
        let nom = lower_nominal(&load(SRC).unwrap(), true).unwrap();
        let (obj, s) = randomize(&nom, seed);
        (obj, s, nom)
    }

    #[test]
    fn compile_output_verifies() {
        for seed in 0..5 {
            let (obj, s, nom) = build(seed);
            let r = verify_scheme(&obj, &s, &nom);
            assert!(r.ok, "{:?}", r.violations);
        }
    }

    #[test]
    fn single_tamper_is_one_violation() {
        let (mut obj, s, nom) = build(9);
        obj.code[7].a += Word(1);
        let r = verify_scheme(&obj, &s, &nom);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::ConstA { addr: Addr(7), .. }));
    }

    #[test]
    fn pinned_tamper_is_reported() {
        let (obj, mut s, nom) = build(9);
        let k = s.slots.iter().position(|v| v.pinned).unwrap();
        s.slots[k].delta = Word(1);
        let r = verify_scheme(&obj, &s, &nom);
        assert!(!r.ok);
        assert!(r.violations.contains(&Violation::Pinned { slot: SlotId(k as u32), delta: Word(1) }));
    }

    #[test]
    fn structural_tamper_is_reported() {
        let (mut obj, s, nom) = build(3);
        obj.code[2].l2 = Addr(0);
        let r = verify_scheme(&obj, &s, &nom);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::Structure { addr: Some(Addr(2)), .. }));
    }
}
