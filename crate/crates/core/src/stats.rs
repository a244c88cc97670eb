//! Two-sided Mann-Whitney U tests with Bonferroni correction, run between
//! every pair of classes inside each difficulty level for each heuristic
//! measure.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::features::{csv_field, format_sig17};
use crate::gmm::Difficulty;
use crate::heuristics::{HeuristicProfile, Measure};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("samples contain non-finite values")]
    NonFinite,
    #[error("p-value {0} outside [0, 1]")]
    BadPValue(f64),
    #[error("comparison count must be at least 1")]
    ZeroComparisons,
    #[error("instance {0:?} is missing from {1}")]
    Misaligned(String, &'static str),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// `min(U_a, U_b)`.
    pub u_statistic: f64,
    /// U computed from the ranks of the first sample.
    pub u_first: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub tie_correction_applied: bool,
    /// Every pooled value was identical; the p-value is 1 by convention.
    pub all_tied: bool,
}

/// Midranks (1-based) of the pooled sample plus the tie term `sum(t^3 - t)`.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    (ranks, tie_term)
}

/// Two-sided Mann-Whitney U test using the normal approximation with tie
/// correction and a 0.5 continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u_a = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let u_b = n1 * n2 - u_a;
    let mean = n1 * n2 / 2.0;
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));

    let all_tied = pooled.iter().all(|v| *v == pooled[0]);
    let p_value = if all_tied || variance <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5) / variance.sqrt();
        if z <= 0.0 {
            1.0
        } else {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * normal.sf(z)).clamp(f64::MIN_POSITIVE, 1.0)
        }
    };
    Ok(UTestResult {
        u_statistic: u_a.min(u_b),
        u_first: u_a,
        p_value,
        n1: a.len(),
        n2: b.len(),
        tie_correction_applied: tie_term > 0.0,
        all_tied,
    })
}

pub fn bonferroni(p: f64, m: usize) -> Result<f64, StatsError> {
    if m < 1 {
        return Err(StatsError::ZeroComparisons);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::BadPValue(p));
    }
    Ok((p * m as f64).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "ns")]
    NotSignificant,
    #[serde(rename = "*")]
    Weak,
    #[serde(rename = "**")]
    Strong,
    #[serde(rename = "***")]
    VeryStrong,
}

impl Significance {
    pub fn as_str(self) -> &'static str {
        match self {
            Significance::NotSignificant => "ns",
            Significance::Weak => "*",
            Significance::Strong => "**",
            Significance::VeryStrong => "***",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Thresholds .05 / .01 / .001; a p-value exactly on a boundary gets the
/// more significant code.
pub fn significance_code(p_adjusted: f64) -> Significance {
    if p_adjusted <= 0.001 {
        Significance::VeryStrong
    } else if p_adjusted <= 0.01 {
        Significance::Strong
    } else if p_adjusted <= 0.05 {
        Significance::Weak
    } else {
        Significance::NotSignificant
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCell {
    pub difficulty: Difficulty,
    pub measure: Measure,
    pub class_a: String,
    pub class_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub u: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub code: Significance,
}

/// A (difficulty, class) group too small to test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub difficulty: Difficulty,
    pub class: String,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    /// Number of tests actually run, the Bonferroni family size.
    pub m: usize,
    pub cells: Vec<SignificanceCell>,
    pub skipped: Vec<SkippedCell>,
}

/// Minimum group size for a class to take part in a comparison.
pub const MIN_CELL_SIZE: usize = 2;

/// Run every class-pair test within each difficulty level for each measure.
///
/// `classes` fixes the class order; pairs are `(classes[i], classes[j])` with `i < j`.
pub fn compare_splits(
    profiles: &BTreeMap<String, HeuristicProfile>,
    difficulties: &BTreeMap<String, Difficulty>,
    golds: &BTreeMap<String, String>,
    classes: &[String],
) -> Result<SignificanceReport, StatsError> {
    let mut groups: BTreeMap<(Difficulty, usize), Vec<&HeuristicProfile>> = BTreeMap::new();
    for (id, profile) in profiles {
        let d = *difficulties.get(id).ok_or_else(|| StatsError::Misaligned(id.clone(), "assignment"))?;
        let gold = golds.get(id).ok_or_else(|| StatsError::Misaligned(id.clone(), "gold labels"))?;
        let c = classes.iter().position(|c| c == gold).ok_or_else(|| StatsError::UnknownClass(gold.clone()))?;
        groups.entry((d, c)).or_default().push(profile);
    }
    for id in difficulties.keys() {
        if !profiles.contains_key(id) {
            return Err(StatsError::Misaligned(id.clone(), "profiles"));
        }
    }

    let mut skipped = Vec::new();
    let mut raw = Vec::new();
    for d in Difficulty::ALL {
        let size = |c: usize| groups.get(&(d, c)).map_or(0, Vec::len);
        if classes.len() >= 2 {
            for (c, name) in classes.iter().enumerate() {
                if size(c) < MIN_CELL_SIZE {
                    skipped.push(SkippedCell { difficulty: d, class: name.clone(), n: size(c) });
                }
            }
        }
        for measure in Measure::ALL {
            for i in 0..classes.len() {
                for j in i + 1..classes.len() {
                    if size(i) < MIN_CELL_SIZE || size(j) < MIN_CELL_SIZE {
                        continue;
                    }
                    let sample = |c: usize| -> Vec<f64> { groups[&(d, c)].iter().map(|p| measure.value(p)).collect() };
                    let result = mann_whitney_u(&sample(i), &sample(j))?;
                    raw.push((d, measure, i, j, result));
                }
            }
        }
    }

    let m = raw.len();
    let mut cells = Vec::with_capacity(m);
    for (d, measure, i, j, r) in raw {
        let p_adjusted = bonferroni(r.p_value, m)?;
        cells.push(SignificanceCell {
            difficulty: d,
            measure,
            class_a: classes[i].clone(),
            class_b: classes[j].clone(),
            n_a: r.n1,
            n_b: r.n2,
            u: r.u_statistic,
            p_raw: r.p_value,
            p_adjusted,
            code: significance_code(p_adjusted),
        });
    }
    Ok(SignificanceReport { m, cells, skipped })
}

impl SignificanceReport {
    /// CSV `difficulty,measure,class_a,class_b,n_a,n_b,u,p_raw,p_adjusted,code`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "difficulty,measure,class_a,class_b,n_a,n_b,u,p_raw,p_adjusted,code")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                c.difficulty,
                c.measure.name(),
                csv_field(&c.class_a),
                csv_field(&c.class_b),
                c.n_a,
                c.n_b,
                c.u,
                format_sig17(c.p_raw),
                format_sig17(c.p_adjusted),
                c.code
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &self.cells {
            *counts.entry(c.code.as_str()).or_default() += 1;
        }
        serde_json::json!({
            "m": self.m,
            "tests": self.cells.len(),
            "code_counts": counts,
            "skipped": self.skipped,
            "min_cell_size": MIN_CELL_SIZE,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u_statistic, 12.5);
        assert!(r.p_value >= 0.99);
        assert!(r.tie_correction_applied);
    }

    #[test]
    fn complete_separation() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert!(!r.tie_correction_applied);
    }

    #[test]
    fn matches_reference_value() {
        // Asymptotic two-sided p for U = 0, n1 = n2 = 5, continuity-corrected.
        let a: Vec<f64> = (1..=5).map(f64::from).collect();
        let b: Vec<f64> = (6..=10).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!((r.p_value - 0.012185780355344813).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn all_tied_is_flagged() {
        let r = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!(r.all_tied);
        assert_eq!(r.p_value, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
        assert!(mann_whitney_u(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn bonferroni_examples() {
        assert!((bonferroni(0.01, 3).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(bonferroni(0.5, 4).unwrap(), 1.0);
        assert_eq!(bonferroni(0.123, 1).unwrap(), 0.123);
        assert!(bonferroni(0.1, 0).is_err());
    }

    #[test]
    fn codes_follow_thresholds() {
        assert_eq!(significance_code(0.2), Significance::NotSignificant);
        assert_eq!(significance_code(0.03), Significance::Weak);
        assert_eq!(significance_code(0.0005), Significance::VeryStrong);
        assert_eq!(significance_code(0.05), Significance::Weak);
        assert_eq!(significance_code(0.01), Significance::Strong);
        assert_eq!(significance_code(0.001), Significance::VeryStrong);
        assert_eq!(significance_code(0.005), Significance::Strong);
    }

    #[test]
    fn single_class_gives_empty_report() {
        let p = HeuristicProfile {
            word_overlap: 0.5,
            antonym_score: 0.0,
            length_mismatch: 0.1,
            misspelled_ratio: 0.0,
            contains_negation: false,
        };
        let profiles: BTreeMap<String, HeuristicProfile> = (0..5).map(|i| (i.to_string(), p)).collect();
        let diffs = profiles.keys().map(|k| (k.clone(), Difficulty::Easy)).collect();
        let golds = profiles.keys().map(|k| (k.clone(), "only".to_owned())).collect();
        let r = compare_splits(&profiles, &diffs, &golds, &["only".to_owned()]).unwrap();
        assert_eq!(r.m, 0);
        assert!(r.cells.is_empty());
    }

    fn samples() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (prop::collection::vec(-50i32..50, 1..12), prop::collection::vec(-50i32..50, 1..12)).prop_map(|(a, b)| {
            (a.into_iter().map(f64::from).collect(), b.into_iter().map(f64::from).collect())
        })
    }

    proptest! {
        #[test]
        fn u_complements((a, b) in samples()) {
            let ab = mann_whitney_u(&a, &b).unwrap();
            let ba = mann_whitney_u(&b, &a).unwrap();
            prop_assert_eq!(ab.u_first + ba.u_first, (a.len() * b.len()) as f64);
            prop_assert_eq!(ab.u_statistic, ba.u_statistic);
            prop_assert_eq!(ab.p_value, ba.p_value);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
            prop_assert!(ab.u_statistic >= 0.0 && ab.u_statistic <= (a.len() * b.len()) as f64);
        }

        #[test]
        fn rank_based_monotone_invariance((a, b) in samples()) {
            let f = |v: &Vec<f64>| -> Vec<f64> { v.iter().map(|x| (x / 10.0).exp() * 3.0 + 1.0).collect() };
            let r1 = mann_whitney_u(&a, &b).unwrap();
            let r2 = mann_whitney_u(&f(&a), &f(&b)).unwrap();
            prop_assert_eq!(r1.u_statistic, r2.u_statistic);
            prop_assert_eq!(r1.p_value, r2.p_value);
        }

        #[test]
        fn bonferroni_monotone(p in 0.0f64..1.0, q in 0.0f64..1.0, m in 1usize..50) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(bonferroni(lo, m).unwrap() <= bonferroni(hi, m).unwrap());
            prop_assert!(bonferroni(p, m).unwrap() <= bonferroni(p, m + 1).unwrap());
            prop_assert!(bonferroni(p, m).unwrap() <= 1.0);
        }
    }
}
