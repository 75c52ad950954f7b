use std::collections::BTreeMap;

use super::AnalysisError;
use crate::frontend::{CheckedAst, Cond, Expr, LValue, RelOp, Stmt};
use crate::isa::{lt_wrap, Word};

/// Interprets the source program directly and returns its outputs by name.
///
/// Fuel counts executed statements plus loop-condition tests.
pub fn reference_eval(
    ast: &CheckedAst,
    inputs: &BTreeMap<String, Word>,
    fuel: u64,
) -> Result<BTreeMap<String, Word>, AnalysisError> {
    let mut ev = Eval { ast, store: vec![Word::ZERO; ast.vars.len()], fuel, used: 0 };
    for name in ast.in_names() {
        let v = ast.scalar(name).expect("checked input");
        let w = inputs.get(name).ok_or_else(|| AnalysisError::MissingInput(name.to_string()))?;
        ev.store[v.index()] = *w;
    }
    ev.block(&ast.ast.body)?;
    Ok(ast.out_names().map(|n| (n.to_string(), ev.store[ast.scalar(n).unwrap().index()])).collect())
}

/// The relation as the compiled compare sequences decide it.
pub fn relop_holds(op: RelOp, l: Word, r: Word) -> bool {
    match op {
        RelOp::Lt => lt_wrap(l, r),
        RelOp::Gt => lt_wrap(r, l),
        RelOp::Le => !lt_wrap(r, l),
        RelOp::Ge => !lt_wrap(l, r),
        RelOp::Eq => l == r,
        RelOp::Ne => l != r,
    }
}

struct Eval<'a> {
    ast: &'a CheckedAst,
    store: Vec<Word>,
    fuel: u64,
    used: u64,
}

impl Eval<'_> {
    fn tick(&mut self) -> Result<(), AnalysisError> {
        if self.used == self.fuel {
            return Err(AnalysisError::FuelExhausted(self.used));
        }
        self.used += 1;
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), AnalysisError> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), AnalysisError> {
        self.tick()?;
        match s {
            Stmt::Assign { lhs, rhs, .. } => {
                let value = self.expr(rhs)?;
                let slot = match lhs {
                    LValue::Var { name, .. } => self.ast.scalar(name).unwrap().index(),
                    LValue::Index { array, index, .. } => self.element(array, index)?,
                };
                self.store[slot] = value;
            }
            Stmt::If { cond, then, els, .. } => {
                if self.cond(cond)? {
                    self.block(then)?;
                } else {
                    self.block(els)?;
                }
            }
            Stmt::While { cond, body, .. } => {
                while self.cond(cond)? {
                    self.block(body)?;
                    self.tick()?;
                }
            }
        }
        Ok(())
    }

    fn cond(&mut self, c: &Cond) -> Result<bool, AnalysisError> {
        Ok(relop_holds(c.op, self.expr(&c.lhs)?, self.expr(&c.rhs)?))
    }

    fn element(&mut self, array: &str, index: &Expr) -> Result<usize, AnalysisError> {
        let (base, size) = self.ast.array(array).unwrap();
        let i = self.expr(index)?;
        if i.0 >= size {
            return Err(AnalysisError::Bounds { array: array.to_string(), index: i });
        }
        Ok(base.index() + i.0 as usize)
    }

    fn expr(&mut self, e: &Expr) -> Result<Word, AnalysisError> {
        Ok(match e {
            Expr::Const(w) => *w,
            Expr::Var { name, .. } => self.store[self.ast.scalar(name).unwrap().index()],
            Expr::Index { array, index, .. } => {
                let slot = self.element(array, index)?;
                self.store[slot]
            }
            Expr::Add(l, r) => self.expr(l)? + self.expr(r)?,
            Expr::Sub(l, r) => self.expr(l)? - self.expr(r)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load;
    use proptest::prelude::*;

    fn eval(src: &str, inputs: &[(&str, u32)]) -> Result<BTreeMap<String, Word>, AnalysisError> {
        let ast = load(src).unwrap();
        let inputs = inputs.iter().map(|&(n, v)| (n.to_string(), Word(v))).collect();
        reference_eval(&ast, &inputs, 10_000)
    }

    #[test]
    fn add_const() {
        let out = eval("vars x, y; in x; out y; y = x + 5;", &[("x", 10)]).unwrap();
        assert_eq!(out["y"], Word(15));
    }

    #[test]
    fn wraparound() {
        let out = eval("vars x1, x2, y; in x1, x2; out y; y = x1 + x2;", &[("x1", 1), ("x2", 0xFFFF_FFFF)]).unwrap();
        assert_eq!(out["y"], Word(0));
    }

    #[test]
    fn sum_loop() {
        let src = "vars i, s; out s; i = 1; s = 0; while (i <= 5) { s = s + i; i = i + 1; }";
        let want: u32 = (1..=5).sum();
        assert_eq!(eval(src, &[]).unwrap()["s"], Word(want));
    }

    #[test]
    fn bounds_and_fuel() {
        let src = "vars a[2], i, y; in i; out y; y = a[i];";
        assert!(matches!(eval(src, &[("i", 2)]), Err(AnalysisError::Bounds { .. })));
        assert!(eval(src, &[("i", 1)]).is_ok());
        let spin = "vars x; out x; x = 0; while (x == 0) { x = 0; }";
        assert!(matches!(eval(spin, &[]), Err(AnalysisError::FuelExhausted(10_000))));
        assert!(matches!(eval(src, &[]), Err(AnalysisError::MissingInput(_))));
    }

    proptest! {
        #[test]
        fn relops_are_consistent(l: u32, r: u32) {
            let (l, r) = (Word(l), Word(r));
            // at distance 2^31 both orders compare "less"
            prop_assume!((l - r).0 != 0x8000_0000);
            prop_assert_eq!(relop_holds(RelOp::Le, l, r), relop_holds(RelOp::Lt, l, r) || l == r);
            prop_assert_eq!(relop_holds(RelOp::Ge, l, r), relop_holds(RelOp::Gt, l, r) || l == r);
            // equality as the two chained compares decide it
            prop_assert_eq!(relop_holds(RelOp::Eq, l, r), !lt_wrap(l, r) && !lt_wrap(r, l));
        }
    }
}
