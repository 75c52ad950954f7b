mod support;

use oic::analysis::{chi2_sf, chi2_uniform};
use oic::codegen::SplitMix64;
use oic::isa::Word;
use proptest::prelude::*;

#[test]
fn oracle_sanity() {
    // dof 2 has the closed form exp(-x/2)
    for x in [0.5, 1.0, 3.0, 10.0] {
        assert!((support::chi2_sf_exact(x, 2) - (-x / 2.0f64).exp()).abs() < 1e-12);
    }
    // median of chi-square(1) is 0.454936...
    assert!((support::chi2_sf_exact(0.454_936_423_119_572_8, 1) - 0.5).abs() < 1e-9);
}

#[test]
fn dof_255_at_its_mean() {
    let p = chi2_sf(255.0, 255);
    let exact = support::chi2_sf_exact(255.0, 255);
    assert!((p - exact).abs() < 0.002, "{p} vs {exact}");
    assert!((p - 0.49).abs() <= 0.02);
}

#[test]
fn wilson_hilferty_tracks_exact_tail() {
    for dof in [15usize, 225, 255] {
        let k = dof as f64;
        for i in 0..=40 {
            let x = k / 2.0 + (1.5 * k) * i as f64 / 40.0;
            let (p, e) = (chi2_sf(x, dof), support::chi2_sf_exact(x, dof));
            assert!((p - e).abs() <= 0.02, "dof {dof} x {x}: {p} vs {e}");
        }
    }
}

#[test]
fn uniform_stream_has_uniform_p_values() {
    // p-values from a good generator should not pile up near 0
    let mut rng = SplitMix64::new(99);
    let mut low = 0;
    for _ in 0..200 {
        let s: Vec<Word> = (0..2048).map(|_| Word(rng.next_u32())).collect();
        if chi2_uniform(&s, 256).unwrap().p_value < 0.05 {
            low += 1;
        }
    }
    // Binomial(200, 0.05): mean 10, sd ~3.1
    assert!(low <= 22, "{low}");
}

proptest! {
    #[test]
    fn sf_is_monotone(dof in 1usize..300, a in 0.0f64..600.0, b in 0.0f64..600.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(chi2_sf(lo, dof) >= chi2_sf(hi, dof));
        prop_assert!((0.0..=1.0).contains(&chi2_sf(a, dof)));
    }
}
