use std::fmt;

use crate::isa::Word;

/// Source position (1-based). Positions never take part in equality, so two
/// trees that differ only in layout compare equal.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Pos {
    fn eq(&self, _other: &Pos) -> bool {
        true
    }
}

impl std::hash::Hash for Pos {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeclKind {
    Scalar,
    Array(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub kind: DeclKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IoName {
    pub name: String,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ast {
    pub decls: Vec<Decl>,
    pub in_list: Vec<IoName>,
    pub out_list: Vec<IoName>,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Assign { lhs: LValue, rhs: Expr, pos: Pos },
    If { cond: Cond, then: Vec<Stmt>, els: Vec<Stmt>, pos: Pos },
    While { cond: Cond, body: Vec<Stmt>, pos: Pos },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LValue {
    Var { name: String, pos: Pos },
    Index { array: String, index: Box<Expr>, pos: Pos },
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Var { name, .. } => name,
            LValue::Index { array, .. } => array,
        }
    }

    pub fn pos(&self) -> Pos {
        match self {
            LValue::Var { pos, .. } | LValue::Index { pos, .. } => *pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(Word),
    Var { name: String, pos: Pos },
    Index { array: String, index: Box<Expr>, pos: Pos },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn from_lvalue(lv: LValue) -> Expr {
        match lv {
            LValue::Var { name, pos } => Expr::Var { name, pos },
            LValue::Index { array, index, pos } => Expr::Index { array, index, pos },
        }
    }

    /// Value of an expression built only from literals.
    pub fn const_value(&self) -> Option<Word> {
        match self {
            Expr::Const(w) => Some(*w),
            Expr::Add(l, r) => Some(l.const_value()? + r.const_value()?),
            Expr::Sub(l, r) => Some(l.const_value()? - r.const_value()?),
            Expr::Var { .. } | Expr::Index { .. } => None,
        }
    }

    /// Nesting depth; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var { .. } => 1,
            Expr::Index { index, .. } => 1 + index.depth(),
            Expr::Add(l, r) | Expr::Sub(l, r) => 1 + l.depth().max(r.depth()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cond {
    pub lhs: Expr,
    pub op: RelOp,
    pub rhs: Expr,
}
