//! Independence tests on contingency tables and the chi-square upper tail.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decoder::{JointTarget, N_CLASSES};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn new(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if rows < 2 || cols < 2 || counts.len() != rows * cols {
            return Err(Error::Validation(format!(
                "table needs at least 2x2 cells and {} counts, got {rows}x{cols} with {}",
                rows * cols,
                counts.len()
            )));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::Validation("table total must be at least 1".into()));
        }
        Ok(ContingencyTable { rows, cols, counts })
    }

    pub fn from_rows(rows: &[&[u64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Validation("ragged table".into()));
        }
        Self::new(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// Intention x type table of documented decisions.
    pub fn from_targets(targets: &[JointTarget]) -> Result<Self> {
        let mut counts = vec![0u64; N_CLASSES * N_CLASSES];
        for t in targets {
            counts[t.flat_index()] += 1;
        }
        Self::new(N_CLASSES, N_CLASSES, counts)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn degrees_of_freedom(&self) -> u32 {
        ((self.rows - 1) * (self.cols - 1)) as u32
    }

    /// Observed and expected count of every cell under independence.
    fn cells(&self) -> Result<Vec<(f64, f64)>> {
        let rs = self.row_sums();
        let cs = self.col_sums();
        if let Some(i) = rs.iter().position(|&r| r == 0) {
            return Err(Error::Degenerate(format!("row {i} is empty")));
        }
        if let Some(j) = cs.iter().position(|&c| c == 0) {
            return Err(Error::Degenerate(format!("column {j} is empty")));
        }
        let n = self.total() as f64;
        let mut out = Vec::with_capacity(self.counts.len());
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push((self.get(i, j) as f64, rs[i] as f64 * cs[j] as f64 / n));
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Pearson's chi-squared test of independence, no continuity correction.
pub fn chi_squared_test(t: &ContingencyTable) -> Result<TestResult> {
    let statistic = t
        .cells()?
        .iter()
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = t.degrees_of_freedom();
    Ok(TestResult {
        statistic,
        df,
        p_value: chi2_sf(statistic, df),
    })
}

/// Likelihood-ratio (G) test of independence.
pub fn g_test(t: &ContingencyTable) -> Result<TestResult> {
    let half: f64 = t
        .cells()?
        .iter()
        .filter(|(o, _)| *o > 0.0)
        .map(|&(o, e)| o * libm::log(o / e))
        .sum();
    // Rounding can leave a tiny negative sum for tables at exact independence.
    let statistic = (2.0 * half).max(0.0);
    let df = t.degrees_of_freedom();
    Ok(TestResult {
        statistic,
        df,
        p_value: chi2_sf(statistic, df),
    })
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Upper tail `P(X > x)` of a chi-square variable with `df` degrees of
/// freedom.
pub fn chi2_sf(x: f64, df: u32) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(df as f64 / 2.0, x / 2.0)
}

/// `Q(a, x) = Γ(a, x) / Γ(a)`: power series for `x < a + 1`, Lentz's
/// continued fraction otherwise.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefactor = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        1.0 - sum * libm::exp(log_prefactor)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        libm::exp(log_prefactor) * h
    }
}
