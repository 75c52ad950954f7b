use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ast::*;
use crate::isa::VarId;

/// Deepest expression the checker accepts.
pub const MAX_EXPR_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCode {
    Undeclared,
    Duplicate,
    Uninitialized,
    Bounds,
    IoKind,
    /// Scalar indexed, or array used as a value.
    Kind,
    Depth,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Undeclared => "E_UNDECL",
            ErrorCode::Duplicate => "E_DUP",
            ErrorCode::Uninitialized => "E_UNINIT",
            ErrorCode::Bounds => "E_BOUNDS",
            ErrorCode::IoKind => "E_IOKIND",
            ErrorCode::Kind => "E_KIND",
            ErrorCode::Depth => "E_DEPTH",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticError {
    pub code: ErrorCode,
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for SemanticError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.pos, self.code, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symbol {
    Scalar(VarId),
    Array { base: VarId, size: u32 },
}

/// A program that passed [`check`], with its variable layout fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckedAst {
    pub ast: Ast,
    pub symbols: BTreeMap<String, Symbol>,
    /// One name per machine location; array elements are `a[0]`, `a[1]`, ...
    pub vars: Vec<String>,
    pub in_vars: Vec<VarId>,
    pub out_vars: Vec<VarId>,
}

impl CheckedAst {
    pub fn scalar(&self, name: &str) -> Option<VarId> {
        match self.symbols.get(name) {
            Some(Symbol::Scalar(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn array(&self, name: &str) -> Option<(VarId, u32)> {
        match self.symbols.get(name) {
            Some(Symbol::Array { base, size }) => Some((*base, *size)),
            _ => None,
        }
    }

    pub fn in_names(&self) -> impl Iterator<Item = &str> {
        self.ast.in_list.iter().map(|n| n.name.as_str())
    }

    pub fn out_names(&self) -> impl Iterator<Item = &str> {
        self.ast.out_list.iter().map(|n| n.name.as_str())
    }
}

/// Builds the symbol table and runs the static checks.
pub fn check(ast: &Ast) -> Result<CheckedAst, Vec<SemanticError>> {
    let mut cx = Checker { symbols: BTreeMap::new(), errors: Vec::new() };
    let mut vars = Vec::new();
    for d in &ast.decls {
        if cx.symbols.contains_key(&d.name) {
            cx.err(ErrorCode::Duplicate, d.pos, format!("`{}` declared twice", d.name));
            continue;
        }
        let base = VarId(vars.len() as u32);
        let sym = match d.kind {
            DeclKind::Scalar => {
                vars.push(d.name.clone());
                Symbol::Scalar(base)
            }
            DeclKind::Array(size) => {
                vars.extend((0..size).map(|i| format!("{}[{i}]", d.name)));
                Symbol::Array { base, size }
            }
        };
        cx.symbols.insert(d.name.clone(), sym);
    }
    let in_vars = cx.io_list(&ast.in_list, "in");
    let out_vars = cx.io_list(&ast.out_list, "out");

    let mut assigned: BTreeSet<String> =
        ast.in_list.iter().map(|n| n.name.clone()).collect();
    cx.stmts(&ast.body, &mut assigned);

    if cx.errors.is_empty() {
        Ok(CheckedAst { ast: ast.clone(), symbols: cx.symbols, vars, in_vars, out_vars })
    } else {
        Err(cx.errors)
    }
}

struct Checker {
    symbols: BTreeMap<String, Symbol>,
    errors: Vec<SemanticError>,
}

impl Checker {
    fn err(&mut self, code: ErrorCode, pos: Pos, message: String) {
        self.errors.push(SemanticError { code, pos, message });
    }

    fn io_list(&mut self, list: &[IoName], what: &str) -> Vec<VarId> {
        let mut seen = BTreeSet::new();
        let mut ids = Vec::new();
        for n in list {
            if !seen.insert(n.name.as_str()) {
                self.err(ErrorCode::Duplicate, n.pos, format!("`{}` listed twice in {what}", n.name));
                continue;
            }
            match self.symbols.get(&n.name) {
                None => self.err(ErrorCode::Undeclared, n.pos, format!("`{}` is not declared", n.name)),
                Some(Symbol::Array { .. }) => self.err(
                    ErrorCode::IoKind,
                    n.pos,
                    format!("`{}` is an array; {what} names must be scalars", n.name),
                ),
                Some(Symbol::Scalar(v)) => ids.push(*v),
            }
        }
        ids
    }

    fn stmts(&mut self, stmts: &[Stmt], assigned: &mut BTreeSet<String>) {
        for s in stmts {
            self.stmt(s, assigned);
        }
    }

    fn stmt(&mut self, s: &Stmt, assigned: &mut BTreeSet<String>) {
        match s {
            Stmt::Assign { lhs, rhs, .. } => {
                self.expr_top(rhs, assigned);
                match lhs {
                    LValue::Var { name, pos } => match self.symbols.get(name) {
                        None => self.err(ErrorCode::Undeclared, *pos, format!("`{name}` is not declared")),
                        Some(Symbol::Array { .. }) => self.err(
                            ErrorCode::Kind,
                            *pos,
                            format!("cannot assign to array `{name}` without an index"),
                        ),
                        Some(Symbol::Scalar(_)) => {
                            assigned.insert(name.clone());
                        }
                    },
                    LValue::Index { array, index, pos } => {
                        self.index(array, index, *pos, assigned);
                    }
                }
            }
            Stmt::If { cond, then, els, .. } => {
                self.cond(cond, assigned);
                let mut a_then = assigned.clone();
                let mut a_else = assigned.clone();
                self.stmts(then, &mut a_then);
                self.stmts(els, &mut a_else);
                *assigned = a_then.intersection(&a_else).cloned().collect();
            }
            Stmt::While { cond, body, .. } => {
                self.cond(cond, assigned);
                let mut inner = assigned.clone();
                self.stmts(body, &mut inner);
            }
        }
    }

    fn cond(&mut self, c: &Cond, assigned: &BTreeSet<String>) {
        self.expr_top(&c.lhs, assigned);
        self.expr_top(&c.rhs, assigned);
    }

    fn expr_top(&mut self, e: &Expr, assigned: &BTreeSet<String>) {
        if e.depth() > MAX_EXPR_DEPTH {
            let pos = first_pos(e).unwrap_or_default();
            self.err(
                ErrorCode::Depth,
                pos,
                format!("expression nesting {} exceeds {MAX_EXPR_DEPTH}", e.depth()),
            );
            return;
        }
        self.expr(e, assigned);
    }

    fn expr(&mut self, e: &Expr, assigned: &BTreeSet<String>) {
        match e {
            Expr::Const(_) => {}
            Expr::Var { name, pos } => match self.symbols.get(name) {
                None => self.err(ErrorCode::Undeclared, *pos, format!("`{name}` is not declared")),
                Some(Symbol::Array { .. }) => {
                    self.err(ErrorCode::Kind, *pos, format!("array `{name}` used without an index"))
                }
                Some(Symbol::Scalar(_)) => {
                    if !assigned.contains(name) {
                        self.err(
                            ErrorCode::Uninitialized,
                            *pos,
                            format!("`{name}` may be read before it is written"),
                        );
                    }
                }
            },
            Expr::Index { array, index, pos } => self.index(array, index, *pos, assigned),
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                self.expr(l, assigned);
                self.expr(r, assigned);
            }
        }
    }

    fn index(&mut self, array: &str, index: &Expr, pos: Pos, assigned: &BTreeSet<String>) {
        self.expr(index, assigned);
        match self.symbols.get(array) {
            None => self.err(ErrorCode::Undeclared, pos, format!("`{array}` is not declared")),
            Some(Symbol::Scalar(_)) => {
                self.err(ErrorCode::Kind, pos, format!("scalar `{array}` cannot be indexed"))
            }
            Some(Symbol::Array { size, .. }) => {
                let size = *size;
                if let Some(k) = index.const_value() {
                    if k.get() >= size {
                        self.err(
                            ErrorCode::Bounds,
                            pos,
                            format!("index {} out of bounds for `{array}[{size}]`", k.get()),
                        );
                    }
                }
            }
        }
    }
}

fn first_pos(e: &Expr) -> Option<Pos> {
    match e {
        Expr::Const(_) => None,
        Expr::Var { pos, .. } | Expr::Index { pos, .. } => Some(*pos),
        Expr::Add(l, r) | Expr::Sub(l, r) => first_pos(l).or_else(|| first_pos(r)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn codes(src: &str) -> Vec<ErrorCode> {
        match check(&parse(src).unwrap()) {
            Ok(_) => Vec::new(),
            Err(errs) => errs.into_iter().map(|e| e.code).collect(),
        }
    }

    #[test]
    fn accepts_simple_program() {
        let c = check(&parse("vars x, y; in x; out y; y = x + 1;").unwrap()).unwrap();
        assert_eq!(c.vars, vec!["x", "y"]);
        assert_eq!(c.in_vars, vec![VarId(0)]);
        assert_eq!(c.out_vars, vec![VarId(1)]);
    }

    #[test]
    fn reports_each_error_code() {
        assert_eq!(codes("vars x, y; out y; y = x;"), vec![ErrorCode::Uninitialized]);
        assert_eq!(codes("vars a[2], y; out y; y = a[5];"), vec![ErrorCode::Bounds]);
        assert_eq!(codes("vars y; out y; y = q;"), vec![ErrorCode::Undeclared]);
        assert_eq!(codes("vars y, y; y = 1;"), vec![ErrorCode::Duplicate]);
        assert_eq!(codes("vars a[2]; out a;"), vec![ErrorCode::IoKind]);
        assert_eq!(codes("vars a[2], y; y = a;"), vec![ErrorCode::Kind]);
        assert_eq!(codes("vars x; in x; x = x[0];"), vec![ErrorCode::Kind]);
        assert_eq!(codes("vars x; in x, x;"), vec![ErrorCode::Duplicate]);
        assert_eq!(codes("vars a[2]; a[0 - 1] = 3;"), vec![ErrorCode::Bounds]);
    }

    #[test]
    fn error_carries_location() {
        let errs = check(&parse("vars x, y;\nout y;\ny = x;").unwrap()).unwrap_err();
        assert_eq!((errs[0].pos.line, errs[0].pos.col), (3, 5));
        assert!(errs[0].to_string().starts_with("3:5: E_UNINIT"));
    }

    #[test]
    fn definite_assignment_is_conservative() {
        assert_eq!(
            codes("vars c, t, y; in c; out y; if (c < 1) { t = 1; } y = t;"),
            vec![ErrorCode::Uninitialized]
        );
        assert!(codes("vars c, t, y; in c; out y; if (c < 1) { t = 1; } else { t = 2; } y = t;").is_empty());
        assert_eq!(
            codes("vars n, i, y; in n; out y; while (n < 3) { i = 1; n = n + 1; } y = i;"),
            vec![ErrorCode::Uninitialized]
        );
        // arrays start zeroed and are not tracked
        assert!(codes("vars a[3], y; out y; y = a[1];").is_empty());
    }

    #[test]
    fn depth_limit() {
        let mut src = String::from("vars a[1], y; out y; y = ");
        for _ in 0..70 {
            src.push_str("a[");
        }
        src.push('0');
        for _ in 0..70 {
            src.push(']');
        }
        src.push(';');
        assert_eq!(codes(&src), vec![ErrorCode::Depth]);
    }

    #[test]
    fn array_layout() {
        let c = check(&parse("vars p, a[3], q; p = 1; q = 2;").unwrap()).unwrap();
        assert_eq!(c.vars, vec!["p", "a[0]", "a[1]", "a[2]", "q"]);
        assert_eq!(c.array("a"), Some((VarId(1), 3)));
        assert_eq!(c.scalar("q"), Some(VarId(4)));
    }
}
