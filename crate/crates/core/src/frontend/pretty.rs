use std::fmt::{self, Write};

use super::ast::*;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(w) => write!(f, "{}", w.get()),
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Index { array, index, .. } => write!(f, "{array}[{index}]"),
            Expr::Add(l, r) => write!(f, "{l} + {r}"),
            Expr::Sub(l, r) => write!(f, "{l} - {r}"),
        }
    }
}

impl fmt::Display for LValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LValue::Var { name, .. } => f.write_str(name),
            LValue::Index { array, index, .. } => write!(f, "{array}[{index}]"),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        stmt(out, s, depth);
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match s {
        Stmt::Assign { lhs, rhs, .. } => {
            let _ = writeln!(out, "{pad}{lhs} = {rhs};");
        }
        Stmt::If { cond, then, els, .. } => {
            let _ = writeln!(out, "{pad}if ({cond}) {{");
            block(out, then, depth + 1);
            if els.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                block(out, els, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Stmt::While { cond, body, .. } => {
            let _ = writeln!(out, "{pad}while ({cond}) {{");
            block(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let decls: Vec<String> = self
            .decls
            .iter()
            .map(|d| match d.kind {
                DeclKind::Scalar => d.name.clone(),
                DeclKind::Array(n) => format!("{}[{n}]", d.name),
            })
            .collect();
        writeln!(f, "vars {};", decls.join(", "))?;
        let names = |l: &[IoName]| l.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(", ");
        if !self.in_list.is_empty() {
            writeln!(f, "in {};", names(&self.in_list))?;
        }
        if !self.out_list.is_empty() {
            writeln!(f, "out {};", names(&self.out_list))?;
        }
        let mut body = String::new();
        block(&mut body, &self.body, 0);
        f.write_str(&body)
    }
}

#[cfg(test)]
mod tests {
    use crate::frontend::parse;

    #[test]
    fn canonical_layout() {
        let ast = parse("vars a[2],x,y;in x;out y;if(x<1){y=a[x]-1;}else{y=0;}while(y>=0x10){y=y-1;}")
            .unwrap();
        let text = ast.to_string();
        assert_eq!(
            text,
            "vars a[2], x, y;\nin x;\nout y;\nif (x < 1) {\n    y = a[x] - 1;\n} else {\n    y = 0;\n}\nwhile (y >= 16) {\n    y = y - 1;\n}\n"
        );
        assert_eq!(parse(&text).unwrap(), ast);
    }
}
