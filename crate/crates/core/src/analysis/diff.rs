use std::fmt;

use serde::Serialize;

use crate::isa::{ObjectCode, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstField {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConstDiff {
    pub index: usize,
    pub field: ConstField,
    pub left: Word,
    pub right: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiffReport {
    pub structurally_identical: bool,
    pub constant_diffs: Vec<ConstDiff>,
    pub structural_diffs: Vec<String>,
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.structurally_identical {
            write!(f, "structural: identical; constants differ at {} sites", self.constant_diffs.len())
        } else {
            writeln!(f, "structural: {} differences", self.structural_diffs.len())?;
            for d in &self.structural_diffs {
                writeln!(f, "  {d}")?;
            }
            write!(f, "constants differ at {} sites", self.constant_diffs.len())
        }
    }
}

/// Compares two object codes field by field, separating operands and
/// targets from the embedded constants.
pub fn structural_diff(a: &ObjectCode, b: &ObjectCode) -> DiffReport {
    let mut structural = Vec::new();
    if a.vars != b.vars {
        structural.push(format!("variable tables differ ({} vs {} entries)", a.vars.len(), b.vars.len()));
    }
    if a.in_vars != b.in_vars {
        structural.push("input lists differ".to_string());
    }
    if a.out_vars != b.out_vars {
        structural.push("output lists differ".to_string());
    }
    if a.code.len() != b.code.len() {
        structural.push(format!("lengths differ ({} vs {})", a.code.len(), b.code.len()));
    }
    let mut constants = Vec::new();
    for (i, (p, q)) in a.code.iter().zip(&b.code).enumerate() {
        for (name, l, r) in [
            ("x", p.x.0, q.x.0),
            ("y", p.y.0, q.y.0),
            ("z", p.z.0, q.z.0),
            ("l1", p.l1.0, q.l1.0),
            ("l2", p.l2.0, q.l2.0),
        ] {
            if l != r {
                structural.push(format!("instruction {i}: {name} {l} vs {r}"));
            }
        }
        if p.a != q.a {
            constants.push(ConstDiff { index: i, field: ConstField::A, left: p.a, right: q.a });
        }
        if p.b != q.b {
            constants.push(ConstDiff { index: i, field: ConstField::B, left: p.b, right: q.b });
        }
    }
    DiffReport {
        structurally_identical: structural.is_empty(),
        constant_diffs: constants,
        structural_diffs: structural,
    }
}
