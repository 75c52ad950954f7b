use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stats::{chi2_indep, chi2_uniform};
use super::AnalysisError;
use crate::codegen::{lower_nominal, randomize, NominalCode, ObfuscationScheme, SlotId, SplitMix64};
use crate::frontend::CheckedAst;
use crate::isa::{run, Addr, ObjectCode, RunStatus, VarId, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    XRead,
    ZRead,
    YWritten,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::XRead, Field::ZRead, Field::YWritten];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::XRead => "x_read",
            Field::ZRead => "z_read",
            Field::YWritten => "y_written",
        }
    }
}

/// The `occ`-th execution of `pc` (0-based), and one of its operand values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TracePosition {
    pub pc: Addr,
    pub occ: u32,
    pub field: Field,
}

impl fmt::Display for TracePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.pc.0, self.occ, self.field.as_str())
    }
}

impl FromStr for TracePosition {
    type Err = String;

    /// `pc:occ:field`, field one of `x_read`, `z_read`, `y_written`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [pc, occ, field] = parts[..] else {
            return Err(format!("expected pc:occ:field, got `{s}`"));
        };
        let field = Field::ALL
            .into_iter()
            .find(|f| f.as_str() == field)
            .ok_or_else(|| format!("unknown field `{field}`"))?;
        Ok(TracePosition {
            pc: Addr(pc.parse().map_err(|_| format!("bad pc `{pc}`"))?),
            occ: occ.parse().map_err(|_| format!("bad occurrence `{occ}`"))?,
            field,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Linked,
    Free,
}

/// The slot offsetting the value at `pos` in every compilation.
pub fn slot_of(nom: &NominalCode, pos: TracePosition) -> Result<SlotId, AnalysisError> {
    let ins = nom.code.get(pos.pc.index()).ok_or(AnalysisError::Pos(pos))?;
    let env = &nom.envs[pos.pc.index()];
    Ok(match pos.field {
        Field::XRead => env.x_slot(ins),
        Field::ZRead => env.z_slot(ins),
        Field::YWritten => env.y_slot(ins),
    })
}

pub fn is_free(nom: &NominalCode, pos: TracePosition) -> Result<bool, AnalysisError> {
    Ok(!nom.slots[slot_of(nom, pos)?.index()].pinned)
}

/// Linked when both values carry the same slot's delta or both are pinned,
/// so that their difference is the same in every compilation.
pub fn linkage(nom: &NominalCode, a: TracePosition, b: TracePosition) -> Result<Linkage, AnalysisError> {
    let (sa, sb) = (slot_of(nom, a)?, slot_of(nom, b)?);
    let pinned = |s: SlotId| nom.slots[s.index()].pinned;
    Ok(if sa == sb || (pinned(sa) && pinned(sb)) { Linked } else { Free })
}

use Linkage::{Free, Linked};

/// One compilation and its run; `values[t]` holds `[x_read, z_read, y_written]`
/// of step `t`.
#[derive(Clone, Debug)]
pub struct Member {
    pub seed: u64,
    pub code: ObjectCode,
    pub scheme: ObfuscationScheme,
    pub values: Vec<[Word; 3]>,
}

/// Many compilations of one program, all run on the same nominal input.
/// They share one pc sequence.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub nominal: Arc<NominalCode>,
    pub inputs: BTreeMap<String, Word>,
    pub pcs: Vec<Addr>,
    pub status: RunStatus,
    pub members: Vec<Member>,
    /// Step indices at which each pc executes.
    occurrences: Vec<Vec<u32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is on; sequential otherwise.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

fn map_seeds<R: Send>(seeds: &[u64], exec: Exec, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            seeds.par_iter().map(|&s| f(s)).collect()
        }
        _ => seeds.iter().map(|&s| f(s)).collect(),
    }
}

/// Compiles `ast` once per seed (I/O pinned), runs every compilation on
/// `inputs` shifted by its in-deltas, and checks that all members share the
/// nominal structure and one pc sequence.
pub fn ensemble(
    ast: &CheckedAst,
    seeds: &[u64],
    inputs: &BTreeMap<String, Word>,
    fuel: u64,
) -> Result<Ensemble, AnalysisError> {
    ensemble_with(ast, seeds, inputs, fuel, Exec::default())
}

pub fn ensemble_with(
    ast: &CheckedAst,
    seeds: &[u64],
    inputs: &BTreeMap<String, Word>,
    fuel: u64,
    exec: Exec,
) -> Result<Ensemble, AnalysisError> {
    let mut seen = BTreeSet::new();
    if let Some(&dup) = seeds.iter().find(|&&s| !seen.insert(s)) {
        return Err(AnalysisError::DuplicateSeed(dup));
    }
    let nominal = Arc::new(lower_nominal(ast, true)?);
    let nominal_in: Vec<(VarId, Word)> = nominal
        .in_vars
        .iter()
        .map(|&v| {
            let name = &nominal.vars[v.index()];
            inputs.get(name).map(|&w| (v, w)).ok_or_else(|| AnalysisError::MissingInput(name.clone()))
        })
        .collect::<Result<_, _>>()?;

    let build = |seed: u64| -> Result<(Member, Vec<Addr>, RunStatus), AnalysisError> {
        let (code, scheme) = randomize(&nominal, seed);
        let init = nominal_in
            .iter()
            .map(|&(v, w)| (v, w + scheme.in_deltas[&nominal.vars[v.index()]]))
            .collect();
        let res = run(&code, &init, fuel)?;
        let pcs = res.trace.iter().map(|r| r.pc).collect();
        let values = res.trace.iter().map(|r| [r.x_read, r.z_read, r.y_written]).collect();
        Ok((Member { seed, code, scheme, values }, pcs, res.status))
    };

    let Some((&first, rest)) = seeds.split_first() else {
        return Err(AnalysisError::Small { n: 0, need: 1 });
    };
    let (m0, pcs, status) = build(first)?;
    let others = map_seeds(rest, exec, |seed| {
        let (m, p, s) = build(seed)?;
        if !same_structure(&m.code, &m0.code) {
            return Err(AnalysisError::Structure(seed));
        }
        if p != pcs || s != status {
            let step = p.iter().zip(&pcs).take_while(|(a, b)| a == b).count();
            return Err(AnalysisError::Branch { seed, step: step as u64 });
        }
        Ok(m)
    });
    let mut members = Vec::with_capacity(seeds.len());
    members.push(m0);
    for m in others {
        members.push(m?);
    }

    let mut occurrences = vec![Vec::new(); nominal.code.len()];
    for (t, pc) in pcs.iter().enumerate() {
        occurrences[pc.index()].push(t as u32);
    }
    Ok(Ensemble { nominal, inputs: inputs.clone(), pcs, status, members, occurrences })
}

fn same_structure(a: &ObjectCode, b: &ObjectCode) -> bool {
    a.vars == b.vars
        && a.in_vars == b.in_vars
        && a.out_vars == b.out_vars
        && a.code.len() == b.code.len()
        && a.code.iter().zip(&b.code).all(|(p, q)| {
            (p.x, p.y, p.z, p.l1, p.l2) == (q.x, q.y, q.z, q.l1, q.l2)
        })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TestPlan {
    pub uniform: Vec<TracePosition>,
    pub indep: Vec<(TracePosition, TracePosition)>,
    pub linked: Vec<(TracePosition, TracePosition)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Uniform,
    Indep,
    Linked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub pos: TracePosition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos_b: Option<TracePosition>,
    pub kind: TestKind,
    pub stat: f64,
    pub dof: usize,
    pub p: f64,
    pub verdict: Verdict,
}

/// Significance level of the uniformity and independence tests.
pub const ALPHA: f64 = 0.001;

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn step_of(&self, pos: TracePosition) -> Result<usize, AnalysisError> {
        self.occurrences
            .get(pos.pc.index())
            .and_then(|o| o.get(pos.occ as usize))
            .map(|&t| t as usize)
            .ok_or(AnalysisError::Pos(pos))
    }

    /// The value at `pos` in every member, in seed order.
    pub fn position_samples(&self, pos: TracePosition) -> Result<Vec<Word>, AnalysisError> {
        let t = self.step_of(pos)?;
        let f = pos.field as usize;
        Ok(self.members.iter().map(|m| m.values[t][f]).collect())
    }

    pub fn linkage(&self, a: TracePosition, b: TracePosition) -> Result<Linkage, AnalysisError> {
        self.step_of(a)?;
        self.step_of(b)?;
        linkage(&self.nominal, a, b)
    }

    /// Every position of the common run whose value carries a free slot.
    pub fn free_positions(&self) -> Vec<TracePosition> {
        let mut seen = vec![0u32; self.nominal.code.len()];
        let mut out = Vec::new();
        for pc in &self.pcs {
            let occ = seen[pc.index()];
            seen[pc.index()] += 1;
            for field in Field::ALL {
                let pos = TracePosition { pc: *pc, occ, field };
                if is_free(&self.nominal, pos).unwrap_or(false) {
                    out.push(pos);
                }
            }
        }
        out
    }

    /// Positions pairs whose slots coincide by construction: a loop-header
    /// operand at its first and second execution, and two reads of one slot
    /// at different instructions (first executions).
    pub fn linked_pairs(&self, max_read_pairs: usize) -> Vec<(TracePosition, TracePosition)> {
        let nom = &self.nominal;
        let mut out = Vec::new();
        for lp in &nom.loops {
            if self.occurrences[lp.header.index()].len() < 2 {
                continue;
            }
            for field in [Field::XRead, Field::ZRead] {
                let a = TracePosition { pc: lp.header, occ: 0, field };
                if is_free(nom, a).unwrap_or(false) {
                    out.push((a, TracePosition { occ: 1, ..a }));
                }
            }
        }
        let mut first_read: BTreeMap<SlotId, TracePosition> = BTreeMap::new();
        let mut visited = vec![false; nom.code.len()];
        let mut reads = 0;
        for pc in &self.pcs {
            if reads == max_read_pairs {
                break;
            }
            if std::mem::replace(&mut visited[pc.index()], true) {
                continue;
            }
            for field in [Field::XRead, Field::ZRead] {
                let pos = TracePosition { pc: *pc, occ: 0, field };
                let s = slot_of(nom, pos).expect("pc in range");
                if nom.slots[s.index()].pinned {
                    continue;
                }
                match first_read.get(&s) {
                    Some(&a) if a.pc != pos.pc && reads < max_read_pairs => {
                        out.push((a, pos));
                        reads += 1;
                    }
                    Some(_) => {}
                    None => {
                        first_read.insert(s, pos);
                    }
                }
            }
        }
        out
    }

    /// Deterministic selection from the nominal code: `n` free positions on
    /// distinct slots, `n` free pairs on distinct slots, and the linked pairs.
    pub fn default_plan(&self, n: usize) -> TestPlan {
        let bytes = serde_json::to_vec(&self.nominal.code).expect("code serializes");
        let mut rng = SplitMix64::new(fnv1a(&bytes));
        let mut free = self.free_positions();
        for i in (1..free.len()).rev() {
            free.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let slot = |p: TracePosition| slot_of(&self.nominal, p).expect("valid position");
        let mut used = BTreeSet::new();
        let uniform: Vec<TracePosition> =
            free.iter().copied().filter(|&p| used.insert(slot(p))).take(n).collect();
        let mut indep = Vec::new();
        let mut rest = free.iter().rev().copied();
        while indep.len() < n {
            let (Some(a), Some(b)) = (rest.next(), rest.next()) else { break };
            if slot(a) != slot(b) {
                indep.push((a, b));
            }
        }
        TestPlan { uniform, indep, linked: self.linked_pairs(5) }
    }

    /// Runs every test of `plan`. Uniformity uses 256 buckets from 1280
    /// members on, 16 below that.
    pub fn run_plan(&self, plan: &TestPlan) -> Result<Vec<TestOutcome>, AnalysisError> {
        let buckets = if self.len() >= 1280 { 256 } else { 16 };
        let verdict = |reject| if reject { Verdict::Reject } else { Verdict::Pass };
        let mut out = Vec::new();
        for &pos in &plan.uniform {
            let r = chi2_uniform(&self.position_samples(pos)?, buckets)?;
            out.push(TestOutcome {
                pos,
                pos_b: None,
                kind: TestKind::Uniform,
                stat: r.statistic,
                dof: r.dof,
                p: r.p_value,
                verdict: verdict(r.rejects(ALPHA)),
            });
        }
        for &(a, b) in &plan.indep {
            let r = chi2_indep(&self.position_samples(a)?, &self.position_samples(b)?)?;
            out.push(TestOutcome {
                pos: a,
                pos_b: Some(b),
                kind: TestKind::Indep,
                stat: r.statistic,
                dof: r.dof,
                p: r.p_value,
                verdict: verdict(r.rejects(ALPHA)),
            });
        }
        for &(a, b) in &plan.linked {
            let distinct = self.differences(a, b)?.len();
            out.push(TestOutcome {
                pos: a,
                pos_b: Some(b),
                kind: TestKind::Linked,
                stat: (distinct - 1) as f64,
                dof: 0,
                p: if distinct == 1 { 1.0 } else { 0.0 },
                verdict: verdict(distinct != 1),
            });
        }
        Ok(out)
    }

    /// Distinct values of `sample_a - sample_b` across members.
    pub fn differences(&self, a: TracePosition, b: TracePosition) -> Result<BTreeSet<Word>, AnalysisError> {
        let (sa, sb) = (self.position_samples(a)?, self.position_samples(b)?);
        Ok(sa.iter().zip(&sb).map(|(&x, &y)| x - y).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load;

    const LOOP: &str = "vars n, i, s, t; in n; out s;
        i = 0; s = 7; t = 0;
        while (i < n) { t = s + 3; s = t + i; i = i + 1; }";

    fn inputs() -> BTreeMap<String, Word> {
        BTreeMap::from([("n".to_string(), Word(4))])
    }

    fn build(seeds: &[u64]) -> Ensemble {
        ensemble(&load(LOOP).unwrap(), seeds, &inputs(), 1_000_000).unwrap()
    }

    #[test]
    fn two_members_share_pcs() {
        let src = load("vars x, y; in x; out y; y = x + 5;").unwrap();
        let e = ensemble(&src, &[1, 2], &BTreeMap::from([("x".to_string(), Word(3))]), 100).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.pcs, vec![Addr(0), Addr(1)]);
        let pos = TracePosition { pc: Addr(0), occ: 0, field: Field::YWritten };
        assert_eq!(e.position_samples(pos).unwrap().len(), 2);
        // the output reconciliation writes the pinned exit slot
        let out = TracePosition { pc: Addr(1), occ: 0, field: Field::YWritten };
        assert_eq!(e.position_samples(out).unwrap(), vec![Word(8), Word(8)]);
    }

    #[test]
    fn duplicate_seed_and_bad_position() {
        let ast = load(LOOP).unwrap();
        assert!(matches!(ensemble(&ast, &[3, 4, 3], &inputs(), 1000), Err(AnalysisError::DuplicateSeed(3))));
        let e = build(&[1, 2]);
        let past = TracePosition { pc: Addr(0), occ: 1, field: Field::XRead };
        assert!(matches!(e.position_samples(past), Err(AnalysisError::Pos(_))));
        let beyond = TracePosition { pc: Addr(100_000), occ: 0, field: Field::XRead };
        assert!(e.position_samples(beyond).unwrap_err().to_string().starts_with("E_POS"));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let ast = load(LOOP).unwrap();
        let seeds: Vec<u64> = (100..140).collect();
        let a = ensemble_with(&ast, &seeds, &inputs(), 1_000_000, Exec::Sequential).unwrap();
        let b = ensemble_with(&ast, &seeds, &inputs(), 1_000_000, Exec::Parallel).unwrap();
        assert_eq!(a.pcs, b.pcs);
        for (x, y) in a.members.iter().zip(&b.members) {
            assert_eq!((x.seed, &x.code, &x.values), (y.seed, &y.code, &y.values));
        }
    }

    #[test]
    fn linkage_examples() {
        let e = build(&(0..64).collect::<Vec<_>>());
        let nom = &e.nominal;
        // two different assignments write fresh slots
        let writes: Vec<TracePosition> = (0..3)
            .map(|pc| TracePosition { pc: Addr(pc), occ: 0, field: Field::YWritten })
            .collect();
        assert_eq!(linkage(nom, writes[0], writes[1]).unwrap(), Free);
        let pairs = e.linked_pairs(5);
        assert!(pairs.iter().any(|(a, b)| a.pc == b.pc && a.occ == 0 && b.occ == 1));
        assert!(pairs.iter().any(|(a, b)| a.pc != b.pc));
        for (a, b) in pairs {
            assert_eq!(e.linkage(a, b).unwrap(), Linked);
            assert_eq!(e.differences(a, b).unwrap().len(), 1, "{a} {b}");
        }
    }

    #[test]
    fn default_plan_is_deterministic_and_free() {
        let e = build(&(0..32).collect::<Vec<_>>());
        let p = e.default_plan(20);
        assert_eq!(p, build(&(500..520).collect::<Vec<_>>()).default_plan(20));
        assert!(!p.uniform.is_empty());
        for &pos in &p.uniform {
            assert!(is_free(&e.nominal, pos).unwrap());
        }
        for &(a, b) in &p.indep {
            assert_eq!(e.linkage(a, b).unwrap(), Free);
        }
    }

    #[test]
    fn position_parse() {
        let p: TracePosition = "12:3:z_read".parse().unwrap();
        assert_eq!(p, TracePosition { pc: Addr(12), occ: 3, field: Field::ZRead });
        assert_eq!(p.to_string(), "12:3:z_read");
        assert!("12:3".parse::<TracePosition>().is_err());
        assert!("1:2:q".parse::<TracePosition>().is_err());
    }
}
