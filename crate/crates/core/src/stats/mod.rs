//! One-way Welch ANOVA and the Games-Howell post-hoc test.

pub mod dist;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dist::{f_upper_tail, studentized_range_quantile, studentized_range_upper_tail, t_two_sided};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample variance (divisor n - 1).
    pub variance: f64,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "group `{label}` has {} value(s); at least 2 are needed",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("group `{label}` contains non-finite values")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(SampleGroup {
            label,
            values,
            mean,
            variance,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Squared standard error of the mean.
    fn sem2(&self) -> f64 {
        self.variance / self.n() as f64
    }
}

fn check_groups(groups: &[SampleGroup]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().find(|g| g.variance <= 0.0) {
        return Err(Error::Numeric(format!(
            "group `{}` has zero variance, so Welch weights are undefined; \
             try a coarser grain or a different grouping",
            g.label
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchAnovaResult {
    #[serde(rename = "F")]
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

/// One-way Welch ANOVA for groups with unequal variances and sizes.
pub fn welch_anova(groups: &[SampleGroup]) -> Result<WelchAnovaResult> {
    check_groups(groups)?;
    let k = groups.len() as f64;
    let weights: Vec<f64> = groups.iter().map(|g| 1.0 / g.sem2()).collect();
    let w_sum: f64 = weights.iter().sum();
    let grand_mean = groups
        .iter()
        .zip(&weights)
        .map(|(g, w)| w * g.mean)
        .sum::<f64>()
        / w_sum;
    let between = groups
        .iter()
        .zip(&weights)
        .map(|(g, w)| w * (g.mean - grand_mean).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    let lambda = 3.0
        * groups
            .iter()
            .zip(&weights)
            .map(|(g, w)| (1.0 - w / w_sum).powi(2) / (g.n() as f64 - 1.0))
            .sum::<f64>()
        / (k * k - 1.0);
    let f = between / (1.0 + 2.0 * lambda * (k - 2.0) / 3.0);
    let df1 = k - 1.0;
    let df2 = 1.0 / lambda;
    if !f.is_finite() || !df2.is_finite() {
        return Err(Error::Numeric(format!(
            "Welch ANOVA produced non-finite values (F = {f}, df2 = {df2})"
        )));
    }
    let p = f_upper_tail(f, df1, df2)?;
    Ok(WelchAnovaResult { f, df1, df2, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

fn welch_satterthwaite(a: &SampleGroup, b: &SampleGroup) -> f64 {
    let (va, vb) = (a.sem2(), b.sem2());
    (va + vb).powi(2) / (va.powi(2) / (a.n() as f64 - 1.0) + vb.powi(2) / (b.n() as f64 - 1.0))
}

/// Two-sample t-test without the equal-variance assumption.
pub fn welch_t_test(a: &SampleGroup, b: &SampleGroup) -> Result<WelchTTest> {
    check_groups(&[a.clone(), b.clone()])?;
    let t = (a.mean - b.mean) / (a.sem2() + b.sem2()).sqrt();
    let df = welch_satterthwaite(a, b);
    Ok(WelchTTest {
        t,
        df,
        p: t_two_sided(t, df)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub group_i: String,
    pub group_j: String,
    /// `mean_i - mean_j`
    pub diff: f64,
    pub se: f64,
    pub df: f64,
    pub q: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
}

impl PairComparison {
    /// The same comparison seen from the other group.
    pub fn reversed(&self) -> PairComparison {
        PairComparison {
            group_i: self.group_j.clone(),
            group_j: self.group_i.clone(),
            diff: -self.diff,
            ci_low: -self.ci_high,
            ci_high: -self.ci_low,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamesHowellResult {
    pub alpha: f64,
    pub pairs: Vec<PairComparison>,
}

impl GamesHowellResult {
    pub fn pair(&self, a: &str, b: &str) -> Option<PairComparison> {
        self.pairs.iter().find_map(|p| {
            if p.group_i == a && p.group_j == b {
                Some(p.clone())
            } else if p.group_i == b && p.group_j == a {
                Some(p.reversed())
            } else {
                None
            }
        })
    }
}

/// Games-Howell pairwise comparisons with simultaneous `1 - alpha` intervals.
/// Pairs are ordered `(0,1), (0,2), .., (1,2), ..`.
pub fn games_howell(groups: &[SampleGroup], alpha: f64) -> Result<GamesHowellResult> {
    check_groups(groups)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let k = groups.len() as u32;
    let index_pairs: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|i| (i + 1..groups.len()).map(move |j| (i, j)))
        .collect();
    let pairs = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&groups[i], &groups[j]);
            let diff = a.mean - b.mean;
            let se = (a.sem2() + b.sem2()).sqrt();
            let df = welch_satterthwaite(a, b);
            let q = diff.abs() * std::f64::consts::SQRT_2 / se;
            let p = studentized_range_upper_tail(q, k, df)?;
            let q_crit = studentized_range_quantile(alpha, k, df)?;
            let half_width = q_crit * se / std::f64::consts::SQRT_2;
            Ok(PairComparison {
                group_i: a.label.clone(),
                group_j: b.label.clone(),
                diff,
                se,
                df,
                q,
                p,
                ci_low: diff - half_width,
                ci_high: diff + half_width,
                significant: p < alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GamesHowellResult { alpha, pairs })
}
