use serde::Serialize;

use super::AnalysisError;
use crate::isa::Word;

/// Bucket counts accepted by [`chi2_uniform`].
pub const UNIFORM_BUCKETS: [usize; 2] = [16, 256];
/// Per-axis bucket count of [`chi2_indep`].
pub const INDEP_BUCKETS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl StatReport {
    fn new(statistic: f64, dof: usize) -> StatReport {
        StatReport { statistic, dof, p_value: chi2_sf(statistic, dof) }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Complementary error function (Chebyshev fit, |relative error| < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Upper tail `P(X >= x)` of a chi-square with `dof` degrees of freedom,
/// by the Wilson–Hilferty cube-root normal approximation.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    let k = dof as f64;
    let v = 2.0 / (9.0 * k);
    let z = ((x / k).cbrt() - (1.0 - v)) / v.sqrt();
    (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

/// Pearson chi-square of `value mod buckets` against the uniform distribution.
pub fn chi2_uniform(samples: &[Word], buckets: usize) -> Result<StatReport, AnalysisError> {
    if !UNIFORM_BUCKETS.contains(&buckets) {
        return Err(AnalysisError::Buckets(buckets));
    }
    let n = samples.len();
    if n < 5 * buckets {
        return Err(AnalysisError::Small { n, need: 5 * buckets });
    }
    let mut counts = vec![0u64; buckets];
    for w in samples {
        counts[w.0 as usize % buckets] += 1;
    }
    let expected = n as f64 / buckets as f64;
    let stat = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    Ok(StatReport::new(stat, buckets - 1))
}

/// Contingency-table chi-square on `(a mod 16, b mod 16)`. Rows and columns
/// with a zero marginal are dropped and the degrees of freedom reduced.
pub fn chi2_indep(a: &[Word], b: &[Word]) -> Result<StatReport, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    let k = INDEP_BUCKETS;
    let n = a.len();
    if n < 5 * k * k {
        return Err(AnalysisError::Small { n, need: 5 * k * k });
    }
    let mut table = vec![[0u64; INDEP_BUCKETS]; k];
    for (x, y) in a.iter().zip(b) {
        table[x.0 as usize % k][y.0 as usize % k] += 1;
    }
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let live_rows: Vec<usize> = (0..k).filter(|&i| rows[i] > 0).collect();
    let live_cols: Vec<usize> = (0..k).filter(|&j| cols[j] > 0).collect();
    let nf = n as f64;
    let mut stat = 0.0;
    for &i in &live_rows {
        for &j in &live_cols {
            let e = rows[i] as f64 * cols[j] as f64 / nf;
            stat += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let dof = live_rows.len().saturating_sub(1) * live_cols.len().saturating_sub(1);
    Ok(StatReport::new(if dof == 0 { 0.0 } else { stat }, dof))
}
