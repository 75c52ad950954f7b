mod support;

use std::collections::BTreeMap;

use oic::analysis::{lockstep_check, reference_eval, structural_diff, AnalysisError};
use oic::codegen::{compile, lower_nominal, randomize, verify_scheme, CompileOptions};
use oic::frontend::load;
use oic::isa::{run, RunStatus, Word};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FUEL: u64 = 2_000_000;

#[test]
fn corpus_has_required_coverage() {
    let names: Vec<String> = support::corpus().into_iter().map(|(n, _)| n).collect();
    assert!(names.len() >= 10, "{names:?}");
    for need in ["add_const", "add_vars", "max", "sum_loop", "array_sum", "oic_interp"] {
        assert!(names.iter().any(|n| n == need), "{need}");
    }
}

#[test]
fn corpus_matches_reference_under_lockstep() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, ast) in support::corpus() {
        for seed in [1u64, 0xFEED] {
            for pin_io in [true, false] {
                let (code, scheme) = compile(&ast, CompileOptions { seed, pin_io }).unwrap();
                for _ in 0..4 {
                    let inputs = support::random_inputs(&ast, &mut rng);
                    let r = lockstep_check(&ast, &code, &scheme, &inputs, FUEL).unwrap();
                    assert!(r.ok, "{name} seed {seed} {inputs:?}: {:?}", r.divergence);
                    assert_ne!(r.status, RunStatus::FuelExhausted, "{name}");
                }
            }
        }
    }
}

#[test]
fn corpus_reseeding_keeps_structure() {
    for (name, ast) in support::corpus() {
        let (a, _) = compile(&ast, CompileOptions::new(10)).unwrap();
        let (b, _) = compile(&ast, CompileOptions::new(11)).unwrap();
        let d = structural_diff(&a, &b);
        assert!(d.structurally_identical, "{name}: {:?}", d.structural_diffs);
        assert!(!d.constant_diffs.is_empty(), "{name}");
    }
}

type Binding<'a> = &'a [(&'a str, u32)];

#[test]
fn known_outputs() {
    let cases: &[(&str, Binding, Binding)] = &[
        ("add_const", &[("x", 10)], &[("y", 15)]),
        ("add_vars", &[("x1", 1), ("x2", 0xFFFF_FFFF)], &[("y", 0)]),
        ("sum_loop", &[("n", 5)], &[("s", 10)]),
        ("mul_loop", &[("a", 7), ("b", 6)], &[("p", 42)]),
        ("fib", &[("n", 10)], &[("f0", 55)]),
        ("gcd", &[("a", 84), ("b", 36)], &[("g", 12)]),
        ("max", &[("a", 3), ("b", 9)], &[("m", 9)]),
    ];
    for &(name, ins, outs) in cases {
        let ast = support::corpus_program(name);
        let inputs: BTreeMap<String, Word> = ins.iter().map(|&(n, v)| (n.to_string(), Word(v))).collect();
        let (code, scheme) = compile(&ast, CompileOptions::new(0x5EED)).unwrap();
        let init = inputs.iter().map(|(n, &w)| (code.var_id(n).unwrap(), w + scheme.in_deltas[n])).collect();
        let res = run(&code, &init, FUEL).unwrap();
        assert_eq!(res.status, RunStatus::Halted);
        for &(n, v) in outs {
            let got = res.value(code.var_id(n).unwrap()) - scheme.out_deltas[n];
            assert_eq!(got, Word(v), "{name}.{n}");
        }
        let reference = reference_eval(&ast, &inputs, FUEL).unwrap();
        for &(n, v) in outs {
            assert_eq!(reference[n], Word(v));
        }
    }
}

#[test]
fn lookup_out_of_range_aborts_everywhere() {
    let ast = support::corpus_program("lookup");
    let inputs = BTreeMap::from([("k".to_string(), Word(5))]);
    assert!(matches!(reference_eval(&ast, &inputs, FUEL), Err(AnalysisError::Bounds { .. })));
    let (code, scheme) = compile(&ast, CompileOptions::new(3)).unwrap();
    let r = lockstep_check(&ast, &code, &scheme, &inputs, FUEL).unwrap();
    assert!(r.ok);
    assert_eq!(r.status, RunStatus::Aborted);
}

#[test]
fn self_interpreter_runs_p1() {
    let ast = support::corpus_program("oic_interp");
    let p1 = support::p1();
    let (code, scheme) = compile(&ast, CompileOptions::new(77)).unwrap();
    for (a, b) in [(5u32, 9u32), (9, 5), (0xFFFF_FFF0, 3)] {
        let data = [Word(a), Word(b), Word(0), Word(0)];
        let inputs = support::interp_inputs(&p1, data);
        let r = lockstep_check(&ast, &code, &scheme, &inputs, FUEL).unwrap();
        assert!(r.ok, "{:?}", r.divergence);
        let direct = run(&p1, &BTreeMap::from([(p1.in_vars[0], data[0]), (p1.in_vars[1], data[1])]), 1000).unwrap();
        assert_eq!(direct.status, RunStatus::Halted);
        let bonus = if oic::isa::lt_wrap(Word(a), Word(b)) { 100 } else { 0 };
        assert_eq!(direct.value(p1.out_vars[0]), Word(a) + Word(18 + bonus));
        assert_eq!(r.outputs["o1"], direct.value(p1.out_vars[0]));
        assert_eq!(r.outputs["st"], Word(0));
    }
}

/// Random straight-line, branching and bounded-loop programs.
fn program() -> impl Strategy<Value = String> {
    let scalar = prop::sample::select(vec!["x", "y", "u", "v"]);
    let atom = prop_oneof![
        scalar.clone().prop_map(str::to_string),
        (0u32..40).prop_map(|c| c.to_string()),
        (scalar.clone(), 0u32..3).prop_map(|(s, k)| format!("a[{s} - {s} + {k}]")),
        scalar.clone().prop_map(|s| format!("a[{s}]")),
    ];
    let expr = (atom.clone(), prop::option::of((prop::bool::ANY, atom))).prop_map(|(l, r)| match r {
        None => l,
        Some((true, r)) => format!("{l} + {r}"),
        Some((false, r)) => format!("{l} - {r}"),
    });
    let relop = prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]);
    let assign = (prop::sample::select(vec!["u", "v", "y", "a[1]", "a[u]"]), expr.clone())
        .prop_map(|(l, e)| format!("{l} = {e};"));
    let stmt = assign.prop_recursive(2, 12, 3, move |inner| {
        let cond = (expr.clone(), relop.clone(), expr.clone()).prop_map(|(l, o, r)| format!("{l} {o} {r}"));
        prop_oneof![
            (cond.clone(), prop::collection::vec(inner.clone(), 0..3), prop::collection::vec(inner.clone(), 0..3))
                .prop_map(|(c, t, e)| format!("if ({c}) {{ {} }} else {{ {} }}", t.join(" "), e.join(" "))),
            (cond, prop::collection::vec(inner, 0..3), 1u32..4).prop_map(|(c, b, k)| {
                format!("w = 0; while (w < {k}) {{ if ({c}) {{ {} }} w = w + 1; }}", b.join(" "))
            }),
        ]
    });
    prop::collection::vec(stmt, 1..5).prop_map(|body| {
        format!("vars a[3], x, y, u, v, w; in x, y; out y, u; u = x; v = y; {}", body.join(" "))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_programs_simulate_and_verify(src in program(), s1: u64, s2: u64, x in 0u32..6, y: u32) {
        let ast = load(&src).unwrap();
        let nom = lower_nominal(&ast, true).unwrap();
        let (c1, k1) = randomize(&nom, s1);
        let (c2, _) = randomize(&nom, s2);
        prop_assert!(verify_scheme(&c1, &k1, &nom).ok);
        let d = structural_diff(&c1, &c2);
        prop_assert!(d.structurally_identical);
        let inputs = BTreeMap::from([("x".to_string(), Word(x)), ("y".to_string(), Word(y))]);
        let r = lockstep_check(&ast, &c1, &k1, &inputs, FUEL).unwrap();
        prop_assert!(r.ok, "{:?}", r.divergence);
    }

    #[test]
    fn branch_congruence(s1: u64, s2: u64, n in 0u32..25) {
        let ast = support::corpus_program("sum_loop");
        let nom = lower_nominal(&ast, true).unwrap();
        let pcs = |seed| {
            let (code, _) = randomize(&nom, seed);
            let init = BTreeMap::from([(code.in_vars[0], Word(n))]);
            run(&code, &init, FUEL).unwrap().trace.iter().map(|r| r.pc).collect::<Vec<_>>()
        };
        prop_assert_eq!(pcs(s1), pcs(s2));
    }
}
