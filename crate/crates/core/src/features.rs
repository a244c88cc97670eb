//! Per-instance training-dynamics features and standard scaling.
//!
//! For each setting the four measures are computed against the gold label:
//! mean gold probability (confidence), its population standard deviation
//! across epochs (variability), the fraction of epochs whose argmax is the
//! gold label (correctness), and the mean logit margin of the gold label over
//! the strongest competitor (AUM). The premise+hypothesis block comes first,
//! then the hypothesis-only block.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{softmax, DynamicsLog, EpochLogits, LogError, Setting};
use crate::numeric::{argmax, compensated_sum, mean};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty epoch series")]
    EmptySeries,
    #[error("gold index {index} out of range for {classes} classes")]
    GoldOutOfRange { index: usize, classes: usize },
    #[error("margin needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("instance {id:?} has no {setting} records")]
    MissingSetting { id: String, setting: Setting },
    #[error("log has no {0} records; single-setting mode requires the premise+hypothesis setting")]
    SettingAbsent(Setting),
    #[error("standard scaling needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("rows have inconsistent widths")]
    Ragged,
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The four measures for one instance under one setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingDynamics {
    pub confidence: f64,
    pub variability: f64,
    pub correctness: f64,
    pub aum: f64,
}

impl SettingDynamics {
    pub fn to_array(self) -> [f64; 4] {
        [self.confidence, self.variability, self.correctness, self.aum]
    }
}

pub fn confidence(gold_probs: &[f64]) -> Result<f64, FeatureError> {
    mean(gold_probs).ok_or(FeatureError::EmptySeries)
}

/// Population standard deviation of the gold probability.
pub fn variability(gold_probs: &[f64]) -> Result<f64, FeatureError> {
    let mu = confidence(gold_probs)?;
    let ss = compensated_sum(gold_probs.iter().map(|p| (p - mu) * (p - mu)));
    Ok((ss / gold_probs.len() as f64).sqrt())
}

pub fn correctness(logit_series: &[Vec<f64>], gold: usize) -> Result<f64, FeatureError> {
    if logit_series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let mut hits = 0usize;
    for logits in logit_series {
        if gold >= logits.len() {
            return Err(FeatureError::GoldOutOfRange { index: gold, classes: logits.len() });
        }
        if argmax(logits) == Some(gold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / logit_series.len() as f64)
}

/// Mean over epochs of `z_gold - max_{y != gold} z_y`.
pub fn aum(logit_series: &[Vec<f64>], gold: usize) -> Result<f64, FeatureError> {
    if logit_series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let mut margins = Vec::with_capacity(logit_series.len());
    for logits in logit_series {
        if logits.len() < 2 {
            return Err(FeatureError::TooFewClasses(logits.len()));
        }
        if gold >= logits.len() {
            return Err(FeatureError::GoldOutOfRange { index: gold, classes: logits.len() });
        }
        let other = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != gold)
            .map(|(_, z)| *z)
            .fold(f64::NEG_INFINITY, f64::max);
        margins.push(logits[gold] - other);
    }
    Ok(compensated_sum(margins.iter().copied()) / margins.len() as f64)
}

/// All four measures from an epoch-ordered logit series.
pub fn setting_dynamics(logit_series: &[Vec<f64>], gold: usize) -> Result<SettingDynamics, FeatureError> {
    if logit_series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let mut gold_probs = Vec::with_capacity(logit_series.len());
    for logits in logit_series {
        if gold >= logits.len() {
            return Err(FeatureError::GoldOutOfRange { index: gold, classes: logits.len() });
        }
        gold_probs.push(softmax(logits)?[gold]);
    }
    Ok(SettingDynamics {
        confidence: confidence(&gold_probs)?,
        variability: variability(&gold_probs)?,
        correctness: correctness(logit_series, gold)?,
        aum: aum(logit_series, gold)?,
    })
}

/// Which setting blocks a feature set carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    /// `[conf, var, corr, aum]_ph ++ [conf, var, corr, aum]_h`
    Paired,
    /// `[conf, var, corr, aum]_ph` only.
    PremiseHypothesisOnly,
}

impl FeatureLayout {
    pub fn column_names(self) -> &'static [&'static str] {
        const PAIRED: [&str; 8] =
            ["conf_ph", "var_ph", "corr_ph", "aum_ph", "conf_h", "var_h", "corr_h", "aum_h"];
        match self {
            FeatureLayout::Paired => &PAIRED,
            FeatureLayout::PremiseHypothesisOnly => &PAIRED[..4],
        }
    }

    pub fn width(self) -> usize {
        self.column_names().len()
    }

    pub fn settings(self) -> &'static [Setting] {
        match self {
            FeatureLayout::Paired => &Setting::ALL,
            FeatureLayout::PremiseHypothesisOnly => &Setting::ALL[..1],
        }
    }
}

/// Column positions shared by both layouts.
pub const CONF_PH: usize = 0;
pub const VAR_PH: usize = 1;
pub const CORR_PH: usize = 2;
pub const AUM_PH: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub instance_id: String,
    pub values: Vec<f64>,
}

/// Feature vectors for a whole log, ordered by instance id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub layout: FeatureLayout,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.vectors.iter().map(|v| v.values[index]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|v| v.values.clone()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.vectors.iter().map(|v| v.instance_id.as_str()).collect()
    }

    /// CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FeatureError> {
        writeln!(w, "instance_id,{}", self.layout.column_names().join(","))?;
        for v in &self.vectors {
            write!(w, "{}", csv_field(&v.instance_id))?;
            for x in &v.values {
                write!(w, ",{}", format_sig17(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub(crate) fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn logits_of(series: &[EpochLogits]) -> Vec<Vec<f64>> {
    series.iter().map(|r| r.logits.clone()).collect()
}

/// One feature vector per instance, in instance-id order.
pub fn build_feature_vectors(log: &DynamicsLog, layout: FeatureLayout) -> Result<FeatureSet, FeatureError> {
    let present = log.present_settings();
    for s in layout.settings() {
        if !present.contains(s) && !log.instances().is_empty() {
            return Err(match layout {
                FeatureLayout::PremiseHypothesisOnly => FeatureError::SettingAbsent(*s),
                FeatureLayout::Paired => FeatureError::MissingSetting {
                    id: log.instances()[0].instance_id.clone(),
                    setting: *s,
                },
            });
        }
    }
    let mut vectors = Vec::with_capacity(log.instances().len());
    for meta in log.instances() {
        let gold = log
            .label_space()
            .index_of(&meta.gold_label)
            .expect("validated log has known gold labels");
        let mut values = Vec::with_capacity(layout.width());
        for &setting in layout.settings() {
            let series = log.series(&meta.instance_id, setting).ok_or_else(|| {
                FeatureError::MissingSetting { id: meta.instance_id.clone(), setting }
            })?;
            values.extend(setting_dynamics(&logits_of(series), gold)?.to_array());
        }
        vectors.push(FeatureVector { instance_id: meta.instance_id.clone(), values });
    }
    Ok(FeatureSet { layout, vectors })
}

/// Standard-scaled feature rows plus the moments used to scale them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledFeatureMatrix {
    pub instance_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
}

/// Standard deviation below which a column counts as constant, relative to
/// the column's magnitude.
const ZERO_VARIANCE_RTOL: f64 = 1e-12;

/// Scale each column to zero mean and unit population standard deviation.
/// Constant columns become all zeros.
pub fn standard_scale(ids: &[&str], rows: &[Vec<f64>]) -> Result<ScaledFeatureMatrix, FeatureError> {
    let n = rows.len();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) || ids.len() != n {
        return Err(FeatureError::Ragged);
    }
    let mut means = Vec::with_capacity(width);
    let mut stds = Vec::with_capacity(width);
    for c in 0..width {
        let m = compensated_sum(rows.iter().map(|r| r[c])) / n as f64;
        let var = compensated_sum(rows.iter().map(|r| (r[c] - m) * (r[c] - m))) / n as f64;
        means.push(m);
        stds.push(var.sqrt());
    }
    let scaled = rows
        .iter()
        .map(|r| {
            (0..width)
                .map(|c| {
                    if stds[c] <= ZERO_VARIANCE_RTOL * means[c].abs().max(1.0) {
                        0.0
                    } else {
                        (r[c] - means[c]) / stds[c]
                    }
                })
                .collect()
        })
        .collect();
    Ok(ScaledFeatureMatrix {
        instance_ids: ids.iter().map(|s| (*s).to_owned()).collect(),
        rows: scaled,
        column_means: means,
        column_stds: stds,
    })
}

impl FeatureSet {
    pub fn standard_scale(&self) -> Result<ScaledFeatureMatrix, FeatureError> {
        standard_scale(&self.ids(), &self.rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!((confidence(&[0.2, 0.4, 0.6]).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(confidence(&[]), Err(FeatureError::EmptySeries)));
    }

    #[test]
    fn variability_examples() {
        assert_eq!(variability(&[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(variability(&[0.0, 1.0]).unwrap(), 0.5);
        assert!(variability(&[]).is_err());
    }

    #[test]
    fn correctness_examples() {
        let always: Vec<Vec<f64>> = (0..5).map(|_| vec![3.0, 1.0, 0.0]).collect();
        assert_eq!(correctness(&always, 0).unwrap(), 1.0);
        let mut mixed = always.clone();
        mixed[1] = vec![0.0, 2.0, 0.0];
        mixed[3] = vec![0.0, 0.0, 2.0];
        assert!((correctness(&mixed, 0).unwrap() - 0.6).abs() < 1e-15);
        // Tie between classes 0 and 1 resolves to 0, so gold=1 is wrong.
        assert_eq!(correctness(&[vec![1.0, 1.0, 0.0]], 1).unwrap(), 0.0);
        assert_eq!(correctness(&[vec![1.0, 1.0, 0.0]], 0).unwrap(), 1.0);
        assert!(matches!(correctness(&[vec![1.0, 1.0]], 2), Err(FeatureError::GoldOutOfRange { .. })));
        assert!(correctness(&[], 0).is_err());
    }

    #[test]
    fn aum_examples() {
        assert_eq!(aum(&[vec![2.0, 0.5, -1.0]], 0).unwrap(), 1.5);
        assert_eq!(aum(&[vec![2.0, 0.5, -1.0]], 2).unwrap(), -3.0);
        assert_eq!(aum(&[vec![2.0, 0.0, 0.0], vec![0.0, 2.0, 0.0]], 0).unwrap(), 0.0);
        assert!(matches!(aum(&[vec![1.0]], 0), Err(FeatureError::TooFewClasses(1))));
        assert!(aum(&[], 0).is_err());
    }

    #[test]
    fn single_epoch_has_zero_variability() {
        let d = setting_dynamics(&[vec![0.0, 3f64.ln()]], 1).unwrap();
        assert_eq!(d.variability, 0.0);
        assert!((d.confidence - 0.75).abs() < 1e-15);
    }

    #[test]
    fn scale_examples() {
        let s = standard_scale(&["a", "b"], &[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.rows, vec![vec![-1.0], vec![1.0]]);
        let s = standard_scale(&["a", "b", "c"], &[vec![0.1], vec![0.1], vec![0.1]]).unwrap();
        assert!(s.rows.iter().all(|r| r[0] == 0.0));
        assert!(matches!(standard_scale(&["a"], &[vec![1.0]]), Err(FeatureError::TooFewRows(1))));
    }

    fn series_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
        (1usize..8, 2usize..5).prop_flat_map(|(epochs, classes)| {
            (
                prop::collection::vec(prop::collection::vec(-30.0f64..30.0, classes), epochs),
                0..classes,
            )
        })
    }

    proptest! {
        #[test]
        fn measures_stay_in_range((series, gold) in series_strategy()) {
            let d = setting_dynamics(&series, gold).unwrap();
            prop_assert!((0.0..=1.0).contains(&d.confidence));
            prop_assert!((0.0..=1.0).contains(&d.correctness));
            prop_assert!((0.0..=0.5).contains(&d.variability));
            prop_assert!(d.aum.is_finite());
        }

        #[test]
        fn aum_is_translation_invariant((series, gold) in series_strategy(), shift in -100.0f64..100.0) {
            let shifted: Vec<Vec<f64>> = series.iter().map(|l| l.iter().map(|z| z + shift).collect()).collect();
            let a = aum(&series, gold).unwrap();
            let b = aum(&shifted, gold).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn scaling_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..30)) {
            let ids: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
            let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            let once = standard_scale(&ids, &rows).unwrap();
            let twice = standard_scale(&ids, &once.rows).unwrap();
            for (a, b) in once.rows.iter().flatten().zip(twice.rows.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
