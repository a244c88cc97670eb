//! Percentile-threshold selection baselines.
//!
//! Each baseline is a [`SelectionStrategy`] registered by name in a
//! [`StrategyRegistry`]; callers pick strategies at runtime (the CLI's
//! `--methods` flag). Two ship by default:
//!
//! * `datamaps`: instances whose P+H variability is among the top `top_q`
//!   percent;
//! * `aum`: instances whose P+H margin lies between two percentiles.
//!
//! Percentiles use the nearest-rank convention and threshold ties are
//! always included, so selections never depend on input order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSet, AUM_PH, CONF_PH, VAR_PH};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty dataset")]
    Empty,
    #[error("percentile {0} outside [0, 100]")]
    BadPercentile(f64),
    #[error("lower percentile {lower} must be below upper percentile {upper}")]
    BadBand { lower: f64, upper: f64 },
    #[error("unknown selection strategy {0:?} (known: {1})")]
    UnknownStrategy(String, String),
}

/// Nearest-rank percentile: the `ceil(q/100 * N)`-th smallest value, with
/// `q = 0` giving the minimum.
pub fn percentile(values: &[f64], q: f64) -> Result<f64, BaselineError> {
    if values.is_empty() {
        return Err(BaselineError::Empty);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(BaselineError::BadPercentile(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(q, sorted.len()).saturating_sub(1)])
}

/// 1-based nearest rank for percentile `q` over `n` values (0 for `q = 0`).
fn nearest_rank(q: f64, n: usize) -> usize {
    ((q * n as f64) / 100.0).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankedFeature {
    VariabilityPh,
    AumPh,
    ConfidencePh,
}

impl RankedFeature {
    pub fn column(self) -> usize {
        match self {
            RankedFeature::VariabilityPh => VAR_PH,
            RankedFeature::AumPh => AUM_PH,
            RankedFeature::ConfidencePh => CONF_PH,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileRule {
    pub feature: RankedFeature,
    pub lower_q: f64,
    pub upper_q: f64,
}

impl PercentileRule {
    pub fn new(feature: RankedFeature, lower_q: f64, upper_q: f64) -> Result<Self, BaselineError> {
        for q in [lower_q, upper_q] {
            if !(0.0..=100.0).contains(&q) {
                return Err(BaselineError::BadPercentile(q));
            }
        }
        if lower_q >= upper_q {
            return Err(BaselineError::BadBand { lower: lower_q, upper: upper_q });
        }
        Ok(Self { feature, lower_q, upper_q })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSelection {
    pub method: String,
    pub rule: PercentileRule,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub total: usize,
    /// Selected ids in instance-id order.
    pub selected: Vec<String>,
}

impl BaselineSelection {
    pub fn write_ids<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for id in &self.selected {
            writeln!(w, "{id}")?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "rule": self.rule,
            "thresholds": { "lower": self.lower_threshold, "upper": self.upper_threshold },
            "total": self.total,
            "selected": self.selected.len(),
        })
    }
}

fn select_band(features: &FeatureSet, column: usize, lower: f64, upper: f64) -> Vec<String> {
    let mut ids: Vec<String> = features
        .vectors
        .iter()
        .filter(|v| v.values[column] >= lower && v.values[column] <= upper)
        .map(|v| v.instance_id.clone())
        .collect();
    ids.sort();
    ids
}

/// Keep instances whose P+H variability is among the top `top_q` percent:
/// the threshold is the `ceil(top_q/100 * N)`-th largest variability, and
/// every instance at or above it is kept.
pub fn datamaps_ambiguous(features: &FeatureSet, top_q: f64) -> Result<BaselineSelection, BaselineError> {
    if features.is_empty() {
        return Err(BaselineError::Empty);
    }
    let rule = PercentileRule::new(RankedFeature::VariabilityPh, 100.0 - top_q, 100.0)?;
    let mut values = features.column(rule.feature.column());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let keep = nearest_rank(top_q, n).min(n);
    let threshold = if keep == 0 { f64::INFINITY } else { values[n - keep] };
    let upper = values[n - 1];
    Ok(BaselineSelection {
        method: "datamaps".into(),
        rule,
        lower_threshold: threshold,
        upper_threshold: upper,
        total: n,
        selected: select_band(features, rule.feature.column(), threshold, f64::INFINITY),
    })
}

/// Keep instances whose P+H margin lies in `[P_lower, P_upper]`, inclusive.
pub fn aum_ambiguous(features: &FeatureSet, lower_q: f64, upper_q: f64) -> Result<BaselineSelection, BaselineError> {
    if features.is_empty() {
        return Err(BaselineError::Empty);
    }
    let rule = PercentileRule::new(RankedFeature::AumPh, lower_q, upper_q)?;
    let values = features.column(rule.feature.column());
    let lower = percentile(&values, lower_q)?;
    let upper = percentile(&values, upper_q)?;
    Ok(BaselineSelection {
        method: "aum".into(),
        rule,
        lower_threshold: lower,
        upper_threshold: upper,
        total: values.len(),
        selected: select_band(features, rule.feature.column(), lower, upper),
    })
}

/// A named way of selecting a training subset from feature vectors.
pub trait SelectionStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, features: &FeatureSet) -> Result<BaselineSelection, BaselineError>;
}

impl fmt::Debug for dyn SelectionStrategy + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SelectionStrategy({})", self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataMaps {
    pub top_q: f64,
}

impl Default for DataMaps {
    fn default() -> Self {
        Self { top_q: 66.0 }
    }
}

impl SelectionStrategy for DataMaps {
    fn name(&self) -> &'static str {
        "datamaps"
    }

    fn select(&self, features: &FeatureSet) -> Result<BaselineSelection, BaselineError> {
        datamaps_ambiguous(features, self.top_q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AumBand {
    pub lower_q: f64,
    pub upper_q: f64,
}

impl Default for AumBand {
    fn default() -> Self {
        Self { lower_q: 33.0, upper_q: 66.0 }
    }
}

impl SelectionStrategy for AumBand {
    fn name(&self) -> &'static str {
        "aum"
    }

    fn select(&self, features: &FeatureSet) -> Result<BaselineSelection, BaselineError> {
        aum_ambiguous(features, self.lower_q, self.upper_q)
    }
}

#[derive(Default)]
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Box<dyn SelectionStrategy>>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the two percentile baselines with the given parameters.
    pub fn with_baselines(datamaps: DataMaps, aum: AumBand) -> Self {
        let mut r = Self::new();
        r.register(Box::new(datamaps));
        r.register(Box::new(aum));
        r
    }

    /// Adds or replaces a strategy under its own name.
    pub fn register(&mut self, strategy: Box<dyn SelectionStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SelectionStrategy, BaselineError> {
        self.strategies
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| BaselineError::UnknownStrategy(name.to_owned(), self.names().join(", ")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}
