//! Cross-trial comparison of optimisers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Exact p-values are used up to this combined sample size when there are
/// no ties.
pub const EXACT_MAX_N: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub method: String,
    pub values: Vec<f64>,
}

impl TrialSet {
    pub fn new(method: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("trial set needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("trial values must be finite".into()));
        }
        Ok(TrialSet {
            method: method.into(),
            values,
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `min(U_a, U_b)`.
    pub u: f64,
    pub u_a: f64,
    pub u_b: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Number of pairs with `a > b`, ties counted one half.
fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Sizes of groups of tied values in the pooled sample.
fn tie_groups(a: &[f64], b: &[f64]) -> Vec<usize> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j] == all[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

/// Null distribution of U for sample sizes `(m, n)` without ties:
/// `counts[u]` is the number of rank arrangements yielding `U = u`.
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u): the largest observation
    // belongs either to the first sample (beating all j of the second) or not.
    let max_u = m * n;
    let mut table = vec![vec![vec![0.0f64; max_u + 1]; n + 1]; m + 1];
    for row in table.iter_mut() {
        row[0][0] = 1.0;
    }
    for cell in table[0].iter_mut() {
        cell[0] = 1.0;
    }
    for i in 1..=m {
        for j in 1..=n {
            for u in 0..=(i * j) {
                let from_a = if u >= j { table[i - 1][j][u - j] } else { 0.0 };
                table[i][j][u] = from_a + table[i][j - 1][u];
            }
        }
    }
    table[m][n].clone()
}

/// Exact two-sided p-value for `U = u` under the no-ties null.
pub fn exact_p_value(u: f64, m: usize, n: usize) -> f64 {
    let counts = u_distribution(m, n);
    let total: f64 = counts.iter().sum();
    let lower = u.min((m * n) as f64 - u);
    let tail: f64 = counts
        .iter()
        .enumerate()
        .filter(|(k, _)| (*k as f64) <= lower + 1e-9)
        .map(|(_, c)| c)
        .sum();
    (2.0 * tail / total).min(1.0)
}

/// Two-sided p-value from the normal approximation with tie and continuity
/// corrections.
pub fn normal_p_value(u: f64, m: usize, n: usize, ties: &[usize]) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let total = mf + nf;
    let mean = mf * nf / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = mf * nf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = (((u - mean).abs() - 0.5).max(0.0)) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "mann-whitney needs two non-empty samples".into(),
        ));
    }
    let (m, n) = (a.len(), b.len());
    let u_a = u_statistic(a, b);
    let u_b = (m * n) as f64 - u_a;
    let u = u_a.min(u_b);
    let ties = tie_groups(a, b);
    let has_ties = ties.iter().any(|&t| t > 1);
    let (p_value, method) = if m + n <= EXACT_MAX_N && !has_ties {
        (exact_p_value(u, m, n), PValueMethod::Exact)
    } else {
        (normal_p_value(u, m, n, &ties), PValueMethod::Normal)
    };
    Ok(MannWhitney {
        u,
        u_a,
        u_b,
        p_value,
        method,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(trials: &TrialSet) -> Summary {
    let mut v = trials.values.clone();
    v.sort_by(f64::total_cmp);
    Summary {
        n: v.len(),
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    }
}

/// True when the best value of `a` beats every value of `b`.
pub fn dominance_check(a: &TrialSet, b: &TrialSet) -> bool {
    a.max() > b.max()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: TrialSet,
    pub b: TrialSet,
    pub summary_a: Summary,
    pub summary_b: Summary,
    pub test: MannWhitney,
    pub a_dominates_b: bool,
}

impl ComparisonReport {
    pub fn new(a: TrialSet, b: TrialSet) -> Result<Self> {
        let test = mann_whitney_u(&a.values, &b.values)?;
        Ok(ComparisonReport {
            summary_a: summarize(&a),
            summary_b: summarize(&b),
            a_dominates_b: dominance_check(&a, &b),
            test,
            a,
            b,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n,median,q1,q3,max,U,p\n");
        for (set, s) in [(&self.a, &self.summary_a), (&self.b, &self.summary_b)] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                set.method, s.n, s.median, s.q1, s.q3, s.max, self.test.u, self.test.p_value
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (set, s) in [(&self.a, &self.summary_a), (&self.b, &self.summary_b)] {
            let _ = writeln!(
                out,
                "{:<8} n={:<3} median={:.4} q1={:.4} q3={:.4} min={:.4} max={:.4}",
                set.method, s.n, s.median, s.q1, s.q3, s.min, s.max
            );
        }
        let _ = writeln!(
            out,
            "Mann-Whitney U = {} (U_{} = {}, U_{} = {}), two-sided p = {:.6} ({:?})",
            self.test.u,
            self.a.method,
            self.test.u_a,
            self.b.method,
            self.test.u_b,
            self.test.p_value,
            self.test.method
        );
        let _ = writeln!(
            out,
            "best {} {} best {}: {}",
            self.a.method,
            if self.a_dominates_b {
                "dominates"
            } else {
                "does not dominate"
            },
            self.b.method,
            self.a_dominates_b
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_exact() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, PValueMethod::Exact);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pair_counting() {
        let r = mann_whitney_u(&[1.0, 3.0, 5.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.u_a, 3.0);
        assert_eq!(r.u, 3.0);
    }

    #[test]
    fn identical_samples_are_not_separated() {
        let a = [0.5, 0.6, 0.7, 0.7, 0.8];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.method, PValueMethod::Normal);
        assert!(r.p_value >= 0.99);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
        assert!(mann_whitney_u(&[1.0], &[]).is_err());
    }

    #[test]
    fn summary_cases() {
        let s = summarize(&TrialSet::new("x", vec![0.3]).unwrap());
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (0.3, 0.3, 0.3, 0.3, 0.3));
        let s = summarize(&TrialSet::new("x", vec![1.0, 0.0]).unwrap());
        assert_eq!(s.median, 0.5);
        let s = summarize(&TrialSet::new("x", vec![4.0, 1.0, 3.0, 2.0, 5.0]).unwrap());
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
    }

    #[test]
    fn dominance_cases() {
        let a = TrialSet::new("qd", vec![0.6, 0.724]).unwrap();
        let b = TrialSet::new("cmaes", vec![0.704, 0.7]).unwrap();
        assert!(dominance_check(&a, &b));
        assert!(!dominance_check(&a, &a));
        let one = TrialSet::new("a", vec![0.2]).unwrap();
        let two = TrialSet::new("b", vec![0.1]).unwrap();
        assert!(dominance_check(&one, &two));
        assert!(!dominance_check(&two, &one));
    }

    #[test]
    fn report_csv_layout() {
        let a = TrialSet::new("qd", vec![0.7, 0.72]).unwrap();
        let b = TrialSet::new("cmaes", vec![0.6, 0.65]).unwrap();
        let r = ComparisonReport::new(a, b).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,n,median,q1,q3,max,U,p");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("qd,2,"));
    }
}
