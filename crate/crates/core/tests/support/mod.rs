#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use oic::frontend::{load, CheckedAst};
use oic::isa::{Addr, Instruction, ObjectCode, VarId, Word};
use rand::Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus_source(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(format!("{name}.min"))).unwrap()
}

pub fn corpus_program(name: &str) -> CheckedAst {
    load(&corpus_source(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every corpus program, sorted by name.
pub fn corpus() -> Vec<(String, CheckedAst)> {
    let mut names: Vec<String> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "min").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), corpus_program(&n))).collect()
}

/// Half the inputs small (0..32), half arbitrary words.
pub fn random_inputs<R: Rng>(ast: &CheckedAst, rng: &mut R) -> BTreeMap<String, Word> {
    let small = rng.gen_bool(0.5);
    ast.in_names()
        .map(|n| {
            let w = if small { rng.gen_range(0..32) } else { rng.gen() };
            (n.to_string(), Word(w))
        })
        .collect()
}

// ---- chi-square oracle: regularized incomplete gamma -------------------

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut s = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Q(a, x) = Gamma(a, x) / Gamma(a).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lead = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // series for P
        let (mut ap, mut sum, mut del) = (a, 1.0 / a, 1.0 / a);
        for _ in 0..100_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        1.0 - sum * lead.exp()
    } else {
        // Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        lead.exp() * h
    }
}

/// Exact upper tail of a chi-square distribution.
pub fn chi2_sf_exact(x: f64, dof: usize) -> f64 {
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

// ---- interpreted programs for the self-interpreter ---------------------

fn ins(x: u32, a: u32, y: u32, z: u32, b: u32, l1: u32, l2: u32) -> Instruction {
    Instruction { x: VarId(x), a: Word(a), y: VarId(y), z: VarId(z), b: Word(b), l1: Addr(l1), l2: Addr(l2) }
}

/// Four variables: `v0` in, `v1` in and out, `v2`, `v3` internal.
/// Computes `v1 = v0 + 18 + (v0 < v1 ? 100 : 0)`.
pub fn p1() -> ObjectCode {
    ObjectCode {
        vars: vec!["v0".into(), "v1".into(), "v2".into(), "v3".into()],
        in_vars: vec![VarId(0), VarId(1)],
        out_vars: vec![VarId(1)],
        code: vec![
            ins(0, 0, 2, 1, 0, 1, 2),
            ins(2, 100, 2, 2, 0, 2, 2),
            ins(1, 0, 3, 3, 0, 3, 3),
            ins(2, 3, 2, 2, 0, 4, 4),
            ins(3, 0xFFFF_FFFF, 3, 1, 0xFFFF_FFFB, 5, 3),
            ins(2, 0, 1, 1, 0, 6, 6),
        ],
    }
}

/// Inputs of `oic_interp` running `prog` on memory `data`.
pub fn interp_inputs(prog: &ObjectCode, data: [Word; 4]) -> BTreeMap<String, Word> {
    assert!(prog.code.len() <= 8 && prog.vars.len() <= 4);
    let mut m = BTreeMap::new();
    for i in 0..8 {
        let ins = prog.code.get(i).copied().unwrap_or(ins(0, 0, 0, 0, 0, 0, 0));
        let fields = [
            ('x', Word(ins.x.0)),
            ('a', ins.a),
            ('y', Word(ins.y.0)),
            ('z', Word(ins.z.0)),
            ('b', ins.b),
            ('t', Word(ins.l1.0)),
            ('f', Word(ins.l2.0)),
        ];
        for (f, w) in fields {
            m.insert(format!("{f}{i}"), w);
        }
    }
    m.insert("n".into(), Word(prog.code.len() as u32));
    for (i, d) in data.iter().enumerate() {
        m.insert(format!("d{i}"), *d);
    }
    m
}
