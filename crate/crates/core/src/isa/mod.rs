//! The one-instruction machine.
//!
//! Every instruction has the single form
//!
//! ```text
//! L: if (Y = X + A) < Z + B goto L1 else goto L2
//! ```
//!
//! with `A`, `B` embedded 32-bit constants, `X`, `Y`, `Z` variables and all
//! arithmetic and comparison in wrapped 32-bit words (see [`lt_wrap`]).
//! A jump to address `len` halts normally; a jump to `len + 1` aborts.

mod machine;
mod word;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use machine::{
    run, step, write_trace_jsonl, MachineState, RunError, RunResult, RunStatus, Step,
    TraceRecord, DEFAULT_FUEL,
};
pub use word::{lt_wrap, wrap_add, ParseWordError, Word};

/// Index into an object code's variable table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Instruction location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Addr(pub u32);

impl Addr {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// `if (y = x + a) < z + b goto l1 else goto l2`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub x: VarId,
    pub a: Word,
    pub y: VarId,
    pub z: VarId,
    pub b: Word,
    pub l1: Addr,
    pub l2: Addr,
}

impl Instruction {
    /// Same structure, different constants.
    pub fn with_constants(self, a: Word, b: Word) -> Instruction {
        Instruction { a, b, ..self }
    }

    pub fn is_unconditional(&self) -> bool {
        self.l1 == self.l2
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "if ({} = {} + {}) < {} + {} goto {} else goto {}",
            self.y, self.x, self.a, self.z, self.b, self.l1, self.l2
        )
    }
}

/// A compiled program: variable table, I/O lists and the instruction stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectCode {
    pub vars: Vec<String>,
    #[serde(rename = "in")]
    pub in_vars: Vec<VarId>,
    #[serde(rename = "out")]
    pub out_vars: Vec<VarId>,
    pub code: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodeError {
    #[error("instruction {index}: variable {var} out of range ({nvars} declared)")]
    BadVar { index: usize, var: VarId, nvars: usize },
    #[error("instruction {index}: jump target {target} beyond abort address {max}")]
    BadTarget { index: usize, target: Addr, max: usize },
    #[error("i/o list references undeclared variable {0}")]
    BadIoVar(VarId),
    #[error("malformed object code: {0}")]
    Json(String),
}

impl ObjectCode {
    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    pub fn halt_addr(&self) -> Addr {
        Addr(self.code.len() as u32)
    }

    pub fn abort_addr(&self) -> Addr {
        Addr(self.code.len() as u32 + 1)
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name).map(|i| VarId(i as u32))
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.index()]
    }

    /// Checks the variable and address invariants.
    pub fn validate(&self) -> Result<(), CodeError> {
        let nvars = self.vars.len();
        let max = self.code.len() + 1;
        for v in self.in_vars.iter().chain(&self.out_vars) {
            if v.index() >= nvars {
                return Err(CodeError::BadIoVar(*v));
            }
        }
        for (index, ins) in self.code.iter().enumerate() {
            for var in [ins.x, ins.y, ins.z] {
                if var.index() >= nvars {
                    return Err(CodeError::BadVar { index, var, nvars });
                }
            }
            for target in [ins.l1, ins.l2] {
                if target.index() > max {
                    return Err(CodeError::BadTarget { index, target, max });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("object code serializes")
    }

    pub fn from_json(text: &str) -> Result<ObjectCode, CodeError> {
        let code: ObjectCode =
            serde_json::from_str(text).map_err(|e| CodeError::Json(e.to_string()))?;
        code.validate()?;
        Ok(code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ObjectCode {
        ObjectCode {
            vars: vec!["x".into(), "y".into(), "z".into()],
            in_vars: vec![VarId(0)],
            out_vars: vec![VarId(1)],
            code: vec![Instruction {
                x: VarId(0),
                a: Word(5),
                y: VarId(1),
                z: VarId(2),
                b: Word(0xFFFF_FFFC),
                l1: Addr(1),
                l2: Addr(1),
            }],
        }
    }

    #[test]
    fn json_shape() {
        let text = serde_json::to_string(&sample()).unwrap();
        assert_eq!(
            text,
            r#"{"vars":["x","y","z"],"in":[0],"out":[1],"code":[{"x":0,"a":"0x00000005","y":1,"z":2,"b":"0xFFFFFFFC","l1":1,"l2":1}]}"#
        );
        assert_eq!(ObjectCode::from_json(&text).unwrap(), sample());
    }

    #[test]
    fn validate_rejects_bad_targets_and_vars() {
        let mut c = sample();
        c.code[0].l1 = Addr(3);
        assert!(matches!(c.validate(), Err(CodeError::BadTarget { .. })));
        let mut c = sample();
        c.code[0].l2 = Addr(2);
        assert!(c.validate().is_ok());
        let mut c = sample();
        c.code[0].z = VarId(7);
        assert!(matches!(c.validate(), Err(CodeError::BadVar { .. })));
        let mut c = sample();
        c.out_vars.push(VarId(9));
        assert!(matches!(c.validate(), Err(CodeError::BadIoVar(_))));
    }
}
