//! Trend and contingency tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Increasing,
    Decreasing,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    /// S = Σ_{i<j} sign(x_j − x_i).
    pub s: i64,
    /// Variance of S under no trend, tie-corrected.
    pub var_s: f64,
    pub z: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub direction: Direction,
}

impl TrendResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

/// Mann–Kendall trend test with tie correction and continuity correction.
pub fn mann_kendall(x: &[f64]) -> Result<TrendResult> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("Mann-Kendall needs at least 3 values, got {n}")));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("Mann-Kendall input".into()));
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += match x[j].partial_cmp(&x[i]).expect("no NaN") {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let var_s = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if var_s <= 0.0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / var_s.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var_s.sqrt()
    } else {
        0.0
    };
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - std_normal.cdf(z.abs()))).clamp(0.0, 1.0);
    let direction = match s.signum() {
        1 => Direction::Increasing,
        -1 => Direction::Decreasing,
        _ => Direction::None,
    };
    Ok(TrendResult { s, var_s, z, p, direction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

/// Pearson χ² test of independence on an r × c table of counts.
pub fn chi_square_proportions(table: &[Vec<f64>]) -> Result<ChiSquareResult> {
    let r = table.len();
    let c = table.first().map_or(0, |row| row.len());
    if r < 2 || c < 2 || table.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("χ² needs a rectangular table of at least 2 × 2".into()));
    }
    if table.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("counts must be finite and nonnegative".into()));
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    if rows.iter().chain(&cols).any(|&s| s <= 0.0) {
        return Err(Error::InvalidInput("every row and column needs a positive total".into()));
    }
    let total: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / total;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    let df = (r - 1) * (c - 1);
    let dist = ChiSquared::new(df as f64).expect("positive df");
    let p = (1.0 - dist.cdf(stat)).clamp(0.0, 1.0);
    Ok(ChiSquareResult { statistic: stat, df, p })
}
