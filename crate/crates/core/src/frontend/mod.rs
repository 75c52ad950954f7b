//! Lexing, parsing and static checks for the `.min` source language.
//!
//! ```text
//! program := "vars" decl ("," decl)* ";" ("in" names ";")? ("out" names ";")? stmt*
//! stmt    := lvalue "=" expr ";" | "if" "(" cond ")" block ("else" block)?
//!          | "while" "(" cond ")" block
//! expr    := term (("+" | "-") term)*
//! term    := "-"? number | lvalue
//! lvalue  := name | name "[" expr "]"
//! cond    := expr ("<" | "<=" | ">" | ">=" | "==" | "!=") expr
//! ```

pub mod ast;
mod check;
mod lexer;
mod parser;
mod pretty;

use std::fmt;

pub use ast::{Ast, Cond, Decl, DeclKind, Expr, IoName, LValue, Pos, RelOp, Stmt};
pub use check::{check, CheckedAst, ErrorCode, SemanticError, Symbol, MAX_EXPR_DEPTH};
pub use parser::parse;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub pos: Pos,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)?;
        if !self.expected.is_empty() {
            write!(f, "; expected {}", self.expected.join(" | "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum FrontendError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Semantic(Vec<SemanticError>),
}

/// `parse` followed by `check`.
pub fn load(text: &str) -> Result<CheckedAst, FrontendError> {
    let ast = parse(text)?;
    check(&ast).map_err(FrontendError::Semantic)
}
