//! Lowering to the one-instruction machine and seeded delta obfuscation.
//!
//! Lowering ([`lower_nominal`]) is seed-independent: it fixes the instruction
//! stream, its nominal constants, and for every instruction the *delta
//! environment* before and after it, i.e. which slot offsets each variable.
//! [`randomize`] then draws one word per free slot and rewrites every
//! constant so that each physical value equals the nominal value plus the
//! delta of its slot:
//!
//! ```text
//! A_phys = A_nom - d(x, pre) + d(y, post)
//! B_phys = B_nom - d(z, pre) + d(y, post)     (d(y, post) for z when z == y)
//! ```
//!
//! Since [`crate::isa::lt_wrap`] is invariant under a common shift, every branch
//! goes the same way as in the nominal program.

mod lower;
mod prng;
mod scheme;
mod verify;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::frontend::CheckedAst;
use crate::isa::{Addr, Instruction, ObjectCode, VarId};

pub use lower::{lower_nominal, MAX_CODE_LEN};
pub use prng::SplitMix64;
pub use scheme::{randomize, ObfuscationScheme, SchemeError, SlotValue};
pub use verify::{verify_scheme, Violation, VerifyReport};

/// A unit of delta randomness. Two trace values offset by the same slot
/// carry the same delta in every compilation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotId(pub u32);

impl SlotId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotInfo {
    /// The variable whose writes this slot offsets.
    pub var: VarId,
    /// Pinned slots always have delta 0.
    pub pinned: bool,
}

/// Slot in force for every variable at one program point (indexed by `VarId`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeltaEnv(pub Vec<SlotId>);

impl DeltaEnv {
    pub fn slot(&self, v: VarId) -> SlotId {
        self.0[v.index()]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrEnv {
    pub pre: DeltaEnv,
    pub post: DeltaEnv,
}

impl InstrEnv {
    pub fn x_slot(&self, ins: &Instruction) -> SlotId {
        self.pre.slot(ins.x)
    }

    pub fn y_slot(&self, ins: &Instruction) -> SlotId {
        self.post.slot(ins.y)
    }

    /// The comparison reads the freshly written `y` when `z == y`.
    pub fn z_slot(&self, ins: &Instruction) -> SlotId {
        if ins.z == ins.y {
            self.post.slot(ins.y)
        } else {
            self.pre.slot(ins.z)
        }
    }
}

/// `header` is the first instruction of a loop's condition, `back_edge` the
/// instruction that jumps back to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopEdge {
    pub header: Addr,
    pub back_edge: Addr,
}

/// Seed-independent lowering result.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NominalCode {
    pub vars: Vec<String>,
    pub in_vars: Vec<VarId>,
    pub out_vars: Vec<VarId>,
    /// Instructions carrying nominal constants.
    pub code: Vec<Instruction>,
    pub envs: Arc<Vec<InstrEnv>>,
    pub slots: Vec<SlotInfo>,
    pub entry_env: DeltaEnv,
    pub exit_env: DeltaEnv,
    pub loops: Vec<LoopEdge>,
    pub pin_io: bool,
}

impl NominalCode {
    /// The nominal program as runnable object code (every delta zero).
    pub fn object_code(&self) -> ObjectCode {
        ObjectCode {
            vars: self.vars.clone(),
            in_vars: self.in_vars.clone(),
            out_vars: self.out_vars.clone(),
            code: self.code.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Env in force on arrival at `addr` (the exit env at the halt address).
    pub fn env_at(&self, addr: Addr) -> Option<&DeltaEnv> {
        match addr.index() {
            i if i < self.code.len() => Some(&self.envs[i].pre),
            i if i == self.code.len() => Some(&self.exit_env),
            _ => None,
        }
    }

    pub fn free_slot_count(&self) -> usize {
        self.slots.iter().filter(|s| !s.pinned).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub seed: u64,
    pub pin_io: bool,
}

impl CompileOptions {
    pub fn new(seed: u64) -> CompileOptions {
        CompileOptions { seed, pin_io: true }
    }
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions::new(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodegenError {
    #[error("E_TOOBIG: code would exceed {MAX_CODE_LEN} instructions")]
    TooBig,
}

/// `randomize(lower_nominal(ast), seed)`.
pub fn compile(
    ast: &CheckedAst,
    opts: CompileOptions,
) -> Result<(ObjectCode, ObfuscationScheme), CodegenError> {
    let nominal = lower_nominal(ast, opts.pin_io)?;
    Ok(randomize(&nominal, opts.seed))
}
