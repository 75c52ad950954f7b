use std::collections::BTreeMap;
use std::sync::Arc;

use super::{CodegenError, DeltaEnv, InstrEnv, LoopEdge, NominalCode, SlotId, SlotInfo};
use crate::frontend::{CheckedAst, Cond, Expr, LValue, RelOp, Stmt};
use crate::isa::{Addr, Instruction, VarId, Word};

/// Largest instruction stream the lowering will produce.
pub const MAX_CODE_LEN: usize = 1 << 20;

const ZERO: &str = "$zero";
const COND: &str = "$c";
const MACRO: &str = "$r";

/// Lowers a checked program to nominal one-instruction code.
///
/// The result depends only on `ast` and `pin_io`: instruction shape, nominal
/// constants, slot numbering and every per-instruction env are fixed here so
/// that recompiling under any seed changes nothing but the constants.
///
/// Every write moves its target to a fresh slot. Where control flow merges,
/// each incoming path ends with `v := v + 0` reconciliations that move every
/// variable written on any path onto one shared join slot; loops additionally
/// move the variables they write onto fresh header slots before entry, and
/// back onto them at the back-edge.
///
/// `$zero` (never written) is the constant source, `$c` holds comparison and
/// dispatch results, `$r` is the bit-serial adder's shift register, and
/// `$t0, $t1, ...` hold expression temporaries by nesting depth.
pub fn lower_nominal(ast: &CheckedAst, pin_io: bool) -> Result<NominalCode, CodegenError> {
    let mut lw = Lowerer::new(ast, pin_io);
    let mut block = Block { items: Vec::new(), env: lw.entry.clone() };
    lw.stmts(&mut block, &ast.ast.body)?;
    for &v in &ast.out_vars {
        let slot = lw.new_slot(v, pin_io);
        lw.emit(&mut block, v, Word::ZERO, v, v, Word::ZERO, Target::Next, Target::Next, Some(slot))?;
    }
    let exit = lw.padded(&block.env);
    Ok(lw.finish(block, exit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Next,
    Label(u32),
    Abort,
}

struct Pending {
    ins: Instruction,
    l1: Target,
    l2: Target,
    pre: Vec<SlotId>,
    post: Vec<SlotId>,
}

enum Item {
    Instr(Pending),
    Label(u32),
}

/// A straight run of items plus the env in force at its end.
struct Block {
    items: Vec<Item>,
    env: Vec<SlotId>,
}

#[derive(Clone, Copy, Debug)]
struct Operand {
    var: VarId,
    off: Word,
}

enum Leaf {
    Read { dst: VarId },
    Write { value: Operand },
}

struct Lowerer<'a> {
    ast: &'a CheckedAst,
    vars: Vec<String>,
    slots: Vec<SlotInfo>,
    entry: Vec<SlotId>,
    scratch: BTreeMap<String, VarId>,
    labels: u32,
    emitted: usize,
    loops: Vec<(u32, u32)>,
    pin_io: bool,
}

impl<'a> Lowerer<'a> {
    fn new(ast: &'a CheckedAst, pin_io: bool) -> Lowerer<'a> {
        let mut lw = Lowerer {
            ast,
            vars: ast.vars.clone(),
            slots: Vec::new(),
            entry: Vec::new(),
            scratch: BTreeMap::new(),
            labels: 0,
            emitted: 0,
            loops: Vec::new(),
            pin_io,
        };
        for i in 0..ast.vars.len() {
            let v = VarId(i as u32);
            // non-inputs are zero-initialised by the machine, so their entry
            // delta must be 0
            let pinned = pin_io || !ast.in_vars.contains(&v);
            let s = lw.new_slot(v, pinned);
            lw.entry.push(s);
        }
        lw
    }

    fn label(&mut self) -> u32 {
        self.labels += 1;
        self.labels - 1
    }

    fn new_slot(&mut self, var: VarId, pinned: bool) -> SlotId {
        self.slots.push(SlotInfo { var, pinned });
        SlotId(self.slots.len() as u32 - 1)
    }

    fn fresh(&mut self, var: VarId) -> SlotId {
        self.new_slot(var, false)
    }

    fn scratch(&mut self, name: &str) -> VarId {
        if let Some(&v) = self.scratch.get(name) {
            return v;
        }
        let v = VarId(self.vars.len() as u32);
        self.vars.push(name.to_string());
        let s = self.new_slot(v, true);
        self.entry.push(s);
        self.scratch.insert(name.to_string(), v);
        v
    }

    fn temp(&mut self, depth: usize) -> VarId {
        self.scratch(&format!("$t{depth}"))
    }

    fn padded(&self, env: &[SlotId]) -> Vec<SlotId> {
        let mut env = env.to_vec();
        env.extend_from_slice(&self.entry[env.len()..]);
        env
    }

    fn pad_block(&self, block: &mut Block) {
        let n = self.vars.len();
        for item in &mut block.items {
            if let Item::Instr(p) = item {
                if p.pre.len() < n {
                    p.pre.extend_from_slice(&self.entry[p.pre.len()..]);
                    p.post.extend_from_slice(&self.entry[p.post.len()..]);
                }
            }
        }
        if block.env.len() < n {
            block.env.extend_from_slice(&self.entry[block.env.len()..]);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        block: &mut Block,
        x: VarId,
        a: Word,
        y: VarId,
        z: VarId,
        b: Word,
        l1: Target,
        l2: Target,
        post_slot: Option<SlotId>,
    ) -> Result<(), CodegenError> {
        self.emitted += 1;
        if self.emitted > MAX_CODE_LEN {
            return Err(CodegenError::TooBig);
        }
        let pre = self.padded(&block.env);
        let mut post = pre.clone();
        post[y.index()] = match post_slot {
            Some(s) => s,
            None => self.fresh(y),
        };
        block.env = post.clone();
        let ins = Instruction { x, a, y, z, b, l1: Addr(0), l2: Addr(0) };
        block.items.push(Item::Instr(Pending { ins, l1, l2, pre, post }));
        Ok(())
    }

    /// `dst := src + off`, unconditional.
    fn copy(
        &mut self,
        block: &mut Block,
        dst: VarId,
        src: Operand,
        to: Target,
        slot: Option<SlotId>,
    ) -> Result<(), CodegenError> {
        self.emit(block, src.var, src.off, dst, dst, Word::ZERO, to, to, slot)
    }

    fn reconcile(
        &mut self,
        block: &mut Block,
        vars: &[(VarId, SlotId)],
        last: Target,
    ) -> Result<(), CodegenError> {
        for (i, &(v, s)) in vars.iter().enumerate() {
            let to = if i + 1 == vars.len() { last } else { Target::Next };
            self.copy(block, v, Operand { var: v, off: Word::ZERO }, to, Some(s))?;
        }
        Ok(())
    }

    fn stmts(&mut self, block: &mut Block, stmts: &[Stmt]) -> Result<(), CodegenError> {
        for s in stmts {
            self.stmt(block, s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, block: &mut Block, s: &Stmt) -> Result<(), CodegenError> {
        match s {
            Stmt::Assign { lhs, rhs, .. } => match lhs {
                LValue::Var { name, .. } => {
                    let v = self.ast.scalar(name).expect("checked scalar");
                    self.expr_into(block, rhs, v, 0)
                }
                LValue::Index { array, index, .. } => {
                    let (base, size) = self.ast.array(array).expect("checked array");
                    if let Some(k) = index.const_value() {
                        self.expr_into(block, rhs, VarId(base.0 + k.get()), 0)
                    } else {
                        let value = self.expr(block, rhs, 0)?;
                        let idx = self.expr(block, index, 1)?;
                        self.dispatch(block, base, size, idx, Leaf::Write { value })
                    }
                }
            },
            Stmt::If { cond, then, els, .. } => self.if_else(block, cond, then, els),
            Stmt::While { cond, body, .. } => self.while_loop(block, cond, body),
        }
    }

    fn if_else(
        &mut self,
        block: &mut Block,
        cond: &Cond,
        then: &[Stmt],
        els: &[Stmt],
    ) -> Result<(), CodegenError> {
        let (l_then, l_else, l_end) = (self.label(), self.label(), self.label());
        self.cond(block, cond, Target::Label(l_then), Target::Label(l_else))?;
        let start = self.padded(&block.env);
        let mut tb = Block { items: Vec::new(), env: start.clone() };
        self.stmts(&mut tb, then)?;
        let mut eb = Block { items: Vec::new(), env: start.clone() };
        self.stmts(&mut eb, els)?;
        self.pad_block(&mut tb);
        self.pad_block(&mut eb);
        let start = self.padded(&start);

        let written: Vec<VarId> = (0..self.vars.len())
            .filter(|&i| tb.env[i] != start[i] || eb.env[i] != start[i])
            .map(|i| VarId(i as u32))
            .collect();
        let joins: Vec<(VarId, SlotId)> = written.iter().map(|&v| (v, self.fresh(v))).collect();
        self.reconcile(&mut tb, &joins, Target::Label(l_end))?;
        self.reconcile(&mut eb, &joins, Target::Next)?;
        debug_assert_eq!(tb.env, eb.env);

        block.items.push(Item::Label(l_then));
        block.items.append(&mut tb.items);
        block.items.push(Item::Label(l_else));
        block.items.append(&mut eb.items);
        block.items.push(Item::Label(l_end));
        block.env = tb.env;
        Ok(())
    }

    fn while_loop(&mut self, block: &mut Block, cond: &Cond, body: &[Stmt]) -> Result<(), CodegenError> {
        let (l_head, l_body, l_exit, l_back) = (self.label(), self.label(), self.label(), self.label());
        let before = self.padded(&block.env);
        let mut sub = Block { items: vec![Item::Label(l_head)], env: before.clone() };
        self.cond(&mut sub, cond, Target::Label(l_body), Target::Label(l_exit))?;
        let mut exit_env = sub.env.clone();
        sub.items.push(Item::Label(l_body));
        self.stmts(&mut sub, body)?;
        self.pad_block(&mut sub);
        let before = self.padded(&before);
        let mut exit_env_padded = self.padded(&exit_env);

        let written: Vec<VarId> = (0..self.vars.len())
            .filter(|&i| sub.env[i] != before[i])
            .map(|i| VarId(i as u32))
            .collect();
        let header: Vec<(VarId, SlotId)> = written.iter().map(|&v| (v, self.fresh(v))).collect();

        // the loop body was lowered against the pre-loop slots; move them to
        // the header slots
        for &(v, h) in &header {
            let (i, old) = (v.index(), before[v.index()]);
            for item in &mut sub.items {
                if let Item::Instr(p) = item {
                    if p.pre[i] == old {
                        p.pre[i] = h;
                    }
                    if p.post[i] == old {
                        p.post[i] = h;
                    }
                }
            }
            if exit_env_padded[i] == old {
                exit_env_padded[i] = h;
            }
            if sub.env[i] == old {
                sub.env[i] = h;
            }
        }
        exit_env = exit_env_padded;

        if let Some((&last, rest)) = header.split_last() {
            self.reconcile(&mut sub, rest, Target::Next)?;
            sub.items.push(Item::Label(l_back));
            self.reconcile(&mut sub, &[last], Target::Label(l_head))?;
        }
        sub.items.push(Item::Label(l_exit));

        self.reconcile(block, &header, Target::Next)?;
        block.items.append(&mut sub.items);
        block.env = exit_env;
        self.loops.push((l_head, l_back));
        Ok(())
    }

    /// Branches to `t` when the condition holds and to `f` otherwise. Both
    /// outgoing edges leave the same env.
    fn cond(&mut self, block: &mut Block, c: &Cond, t: Target, f: Target) -> Result<(), CodegenError> {
        let lhs = self.expr(block, &c.lhs, 0)?;
        let rhs = self.expr(block, &c.rhs, 1)?;
        let cv = self.scratch(COND);
        let cmp = |lw: &mut Self, block: &mut Block, p: Operand, q: Operand, taken, not_taken| {
            lw.emit(block, p.var, p.off, cv, q.var, q.off, taken, not_taken, None)
        };
        match c.op {
            RelOp::Lt => cmp(self, block, lhs, rhs, t, f),
            RelOp::Gt => cmp(self, block, rhs, lhs, t, f),
            RelOp::Le => cmp(self, block, rhs, lhs, f, t),
            RelOp::Ge => cmp(self, block, lhs, rhs, f, t),
            RelOp::Eq | RelOp::Ne => {
                let (yes, no) = if c.op == RelOp::Eq { (t, f) } else { (f, t) };
                let l_fix = self.label();
                cmp(self, block, lhs, rhs, Target::Label(l_fix), Target::Next)?;
                let after_first = block.env.clone();
                cmp(self, block, rhs, lhs, no, yes)?;
                let joined = block.env[cv.index()];
                // lhs < rhs exits through here, onto the second compare's slot
                block.env = after_first;
                block.items.push(Item::Label(l_fix));
                self.copy(block, cv, Operand { var: cv, off: Word::ZERO }, no, Some(joined))
            }
        }
    }

    /// Evaluates `e` to a variable plus a constant offset, emitting code for
    /// anything that is not already of that form.
    fn expr(&mut self, block: &mut Block, e: &Expr, depth: usize) -> Result<Operand, CodegenError> {
        if let Some(c) = e.const_value() {
            return Ok(Operand { var: self.scratch(ZERO), off: c });
        }
        match e {
            Expr::Const(_) => unreachable!(),
            Expr::Var { name, .. } => {
                Ok(Operand { var: self.ast.scalar(name).expect("checked scalar"), off: Word::ZERO })
            }
            Expr::Index { array, index, .. } => {
                let (base, size) = self.ast.array(array).expect("checked array");
                if let Some(k) = index.const_value() {
                    return Ok(Operand { var: VarId(base.0 + k.get()), off: Word::ZERO });
                }
                let t = self.temp(depth);
                let idx = self.expr(block, index, depth)?;
                self.dispatch(block, base, size, idx, Leaf::Read { dst: t })?;
                Ok(Operand { var: t, off: Word::ZERO })
            }
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                let neg = matches!(e, Expr::Sub(..));
                if let Some(c) = r.const_value() {
                    let mut op = self.expr(block, l, depth)?;
                    op.off = if neg { op.off - c } else { op.off + c };
                    Ok(op)
                } else if let (false, Some(c)) = (neg, l.const_value()) {
                    let mut op = self.expr(block, r, depth)?;
                    op.off += c;
                    Ok(op)
                } else {
                    let t = self.temp(depth);
                    self.add_vars(block, l, r, neg, t, depth)?;
                    Ok(Operand { var: t, off: Word::ZERO })
                }
            }
        }
    }

    /// Evaluates `e` straight into `dst`.
    fn expr_into(&mut self, block: &mut Block, e: &Expr, dst: VarId, depth: usize) -> Result<(), CodegenError> {
        match e {
            Expr::Index { array, index, .. } if index.const_value().is_none() => {
                let (base, size) = self.ast.array(array).expect("checked array");
                let idx = self.expr(block, index, depth)?;
                self.dispatch(block, base, size, idx, Leaf::Read { dst })
            }
            Expr::Add(l, r) | Expr::Sub(l, r)
                if e.const_value().is_none()
                    && r.const_value().is_none()
                    && (matches!(e, Expr::Sub(..)) || l.const_value().is_none()) =>
            {
                self.add_vars(block, l, r, matches!(e, Expr::Sub(..)), dst, depth)
            }
            _ => {
                let op = self.expr(block, e, depth)?;
                self.copy(block, dst, op, Target::Next, None)
            }
        }
    }

    /// `dst = l ± r` for two non-constant operands.
    ///
    /// Only `var + const` exists in the machine, so `r` is copied into `$r`
    /// and transferred bit by bit, top bit first: test `$r < 2^i`; if not,
    /// subtract `2^i` from `$r` and add `±2^i` to `dst`. Each bit is
    /// `test, sub, acc` on the set path and `test, keep, keep` on the clear
    /// path, both ending on the same two join slots.
    fn add_vars(
        &mut self,
        block: &mut Block,
        l: &Expr,
        r: &Expr,
        neg: bool,
        dst: VarId,
        depth: usize,
    ) -> Result<(), CodegenError> {
        let left = self.expr(block, l, depth)?;
        let right = self.expr(block, r, depth + 1)?;
        let (rv, zero) = (self.scratch(MACRO), self.scratch(ZERO));
        let keep = |v| Operand { var: v, off: Word::ZERO };
        self.copy(block, rv, right, Target::Next, None)?;
        self.copy(block, dst, left, Target::Next, None)?;
        for i in (0..32).rev() {
            let bit = Word(1u32 << i);
            let (l_clear, l_next) = (self.label(), self.label());
            self.emit(block, rv, Word::ZERO, rv, zero, bit, Target::Label(l_clear), Target::Next, None)?;
            let tested = block.env.clone();
            let (jr, jd) = (self.fresh(rv), self.fresh(dst));
            self.copy(block, rv, Operand { var: rv, off: -bit }, Target::Next, Some(jr))?;
            let acc = if neg { -bit } else { bit };
            self.copy(block, dst, Operand { var: dst, off: acc }, Target::Label(l_next), Some(jd))?;
            block.env = tested;
            block.items.push(Item::Label(l_clear));
            self.copy(block, rv, keep(rv), Target::Next, Some(jr))?;
            self.copy(block, dst, keep(dst), Target::Next, Some(jd))?;
            block.items.push(Item::Label(l_next));
        }
        Ok(())
    }

    /// Balanced dispatch over `idx` for an array access. Two guards send
    /// indices outside `0..size` to the abort address; the tree then has one
    /// compare per internal node and one static access per element.
    fn dispatch(
        &mut self,
        block: &mut Block,
        base: VarId,
        size: u32,
        idx: Operand,
        leaf: Leaf,
    ) -> Result<(), CodegenError> {
        let (cv, zero) = (self.scratch(COND), self.scratch(ZERO));
        let l_end = self.label();
        self.emit(block, idx.var, idx.off, cv, zero, Word::ZERO, Target::Abort, Target::Next, None)?;
        self.emit(block, idx.var, idx.off, cv, zero, Word(size), Target::Next, Target::Abort, None)?;
        let jc = self.fresh(cv);
        let joins: Vec<SlotId> = match &leaf {
            Leaf::Read { dst } => vec![self.fresh(*dst)],
            Leaf::Write { .. } => (0..size).map(|k| self.fresh(VarId(base.0 + k))).collect(),
        };
        let cx = Dispatch { cv, zero, idx, base, jc, joins: &joins, leaf: &leaf, end: l_end };
        self.tree(block, &cx, 0, size)?;
        block.items.push(Item::Label(l_end));
        Ok(())
    }

    fn tree(&mut self, block: &mut Block, cx: &Dispatch<'_>, lo: u32, hi: u32) -> Result<(), CodegenError> {
        if hi - lo == 1 {
            return self.leaf(block, cx, lo);
        }
        let mid = lo + (hi - lo).div_ceil(2);
        let l_right = self.label();
        let (i, off) = (cx.idx.var, cx.idx.off);
        self.emit(block, i, off, cx.cv, cx.zero, Word(mid), Target::Next, Target::Label(l_right), None)?;
        let node_env = block.env.clone();
        self.tree(block, cx, lo, mid)?;
        block.env = node_env;
        block.items.push(Item::Label(l_right));
        self.tree(block, cx, mid, hi)
    }

    fn leaf(&mut self, block: &mut Block, cx: &Dispatch<'_>, k: u32) -> Result<(), CodegenError> {
        let elem = |j: u32| VarId(cx.base.0 + j);
        let keep = |v| Operand { var: v, off: Word::ZERO };
        match cx.leaf {
            Leaf::Read { dst } => {
                self.copy(block, *dst, keep(elem(k)), Target::Next, Some(cx.joins[0]))?;
            }
            Leaf::Write { value } => {
                self.copy(block, elem(k), *value, Target::Next, Some(cx.joins[k as usize]))?;
                for j in (0..cx.joins.len() as u32).filter(|&j| j != k) {
                    self.copy(block, elem(j), keep(elem(j)), Target::Next, Some(cx.joins[j as usize]))?;
                }
            }
        }
        self.copy(block, cx.cv, keep(cx.cv), Target::Label(cx.end), Some(cx.jc))
    }

    fn finish(self, block: Block, exit: Vec<SlotId>) -> NominalCode {
        let n = self.vars.len();
        let mut label_at = vec![0u32; self.labels as usize];
        let mut pending = Vec::with_capacity(self.emitted);
        for item in block.items {
            match item {
                Item::Label(l) => label_at[l as usize] = pending.len() as u32,
                Item::Instr(p) => pending.push(p),
            }
        }
        let len = pending.len() as u32;
        let resolve = |t: Target, i: u32| match t {
            Target::Next => Addr(i + 1),
            Target::Label(l) => Addr(label_at[l as usize]),
            Target::Abort => Addr(len + 1),
        };
        let pad = |mut env: Vec<SlotId>| {
            env.extend_from_slice(&self.entry[env.len()..n]);
            DeltaEnv(env)
        };
        let mut code = Vec::with_capacity(pending.len());
        let mut envs = Vec::with_capacity(pending.len());
        for (i, p) in pending.into_iter().enumerate() {
            let i = i as u32;
            code.push(Instruction { l1: resolve(p.l1, i), l2: resolve(p.l2, i), ..p.ins });
            envs.push(InstrEnv { pre: pad(p.pre), post: pad(p.post) });
        }
        let loops = self
            .loops
            .iter()
            .map(|&(h, b)| LoopEdge { header: Addr(label_at[h as usize]), back_edge: Addr(label_at[b as usize]) })
            .collect();
        NominalCode {
            vars: self.vars,
            in_vars: self.ast.in_vars.clone(),
            out_vars: self.ast.out_vars.clone(),
            code,
            envs: Arc::new(envs),
            slots: self.slots,
            entry_env: pad(self.entry.clone()),
            exit_env: pad(exit),
            loops,
            pin_io: self.pin_io,
        }
    }
}

struct Dispatch<'l> {
    cv: VarId,
    zero: VarId,
    idx: Operand,
    base: VarId,
    jc: SlotId,
    joins: &'l [SlotId],
    leaf: &'l Leaf,
    end: u32,
}
