//! Difficulty splits and per-split summaries.
//!
//! All tables are keyed by `(difficulty, class)`; cells with no instances
//! are reported as `null`, not zero.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{instance_json_line, DynamicsLog, InstanceMeta, LogError};
use crate::features::{csv_field, format_sig17};
use crate::gmm::Difficulty;
use crate::heuristics::{HeuristicProfile, Measure, NORMALIZATION_NOTES};
use crate::numeric::{mean, population_std};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("instance {0:?} has no difficulty assignment")]
    Unassigned(String),
    #[error("assignment lists unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("instance {0:?} has no heuristic profile")]
    MissingProfile(String),
    #[error("instance {0:?} has gold label {1:?} outside the class list")]
    UnknownClass(String, String),
    #[error("{} instance(s) lack a reference prediction: {}", .0.len(), .0.join(", "))]
    MissingReference(Vec<String>),
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Instances partitioned by difficulty, each list sorted by instance id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub easy: Vec<InstanceMeta>,
    pub ambiguous: Vec<InstanceMeta>,
    pub hard: Vec<InstanceMeta>,
}

impl Splits {
    pub fn get(&self, d: Difficulty) -> &[InstanceMeta] {
        match d {
            Difficulty::Easy => &self.easy,
            Difficulty::Ambiguous => &self.ambiguous,
            Difficulty::Hard => &self.hard,
        }
    }

    fn get_mut(&mut self, d: Difficulty) -> &mut Vec<InstanceMeta> {
        match d {
            Difficulty::Easy => &mut self.easy,
            Difficulty::Ambiguous => &mut self.ambiguous,
            Difficulty::Hard => &mut self.hard,
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.easy.len(), self.ambiguous.len(), self.hard.len()]
    }

    pub fn total(&self) -> usize {
        self.sizes().iter().sum()
    }

    /// One instance-metadata JSON object per line.
    pub fn write_jsonl<W: Write>(&self, d: Difficulty, mut w: W) -> Result<(), ReportError> {
        for m in self.get(d) {
            writeln!(w, "{}", instance_json_line(m)?)?;
        }
        Ok(())
    }
}

fn check_alignment(instances: &[InstanceMeta], difficulties: &BTreeMap<String, Difficulty>) -> Result<(), ReportError> {
    let ids: BTreeSet<&str> = instances.iter().map(|m| m.instance_id.as_str()).collect();
    if let Some(extra) = difficulties.keys().find(|k| !ids.contains(k.as_str())) {
        return Err(ReportError::UnknownInstance(extra.clone()));
    }
    if let Some(m) = instances.iter().find(|m| !difficulties.contains_key(&m.instance_id)) {
        return Err(ReportError::Unassigned(m.instance_id.clone()));
    }
    Ok(())
}

pub fn build_splits(difficulties: &BTreeMap<String, Difficulty>, instances: &[InstanceMeta]) -> Result<Splits, ReportError> {
    check_alignment(instances, difficulties)?;
    let mut splits = Splits::default();
    for m in instances {
        splits.get_mut(difficulties[&m.instance_id]).push(m.clone());
    }
    for d in Difficulty::ALL {
        splits.get_mut(d).sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    }
    Ok(splits)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitAccuracy {
    pub overall: f64,
    /// `None` for an empty split.
    pub per_split: BTreeMap<Difficulty, Option<f64>>,
    pub per_class: BTreeMap<Difficulty, BTreeMap<String, Option<f64>>>,
}

/// Fraction of instances whose reference prediction equals the gold label,
/// overall, per split and per (split, class).
pub fn split_accuracy(
    instances: &[InstanceMeta],
    difficulties: &BTreeMap<String, Difficulty>,
) -> Result<SplitAccuracy, ReportError> {
    check_alignment(instances, difficulties)?;
    if instances.is_empty() {
        return Err(ReportError::Empty);
    }
    let missing: Vec<String> = instances
        .iter()
        .filter(|m| m.reference_prediction.is_none())
        .map(|m| m.instance_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ReportError::MissingReference(missing));
    }

    // (correct, total) tallies
    let mut split: BTreeMap<Difficulty, (usize, usize)> = BTreeMap::new();
    let mut class: BTreeMap<Difficulty, BTreeMap<String, (usize, usize)>> = BTreeMap::new();
    let mut correct_total = 0;
    for m in instances {
        let d = difficulties[&m.instance_id];
        let hit = usize::from(m.reference_prediction.as_deref() == Some(m.gold_label.as_str()));
        correct_total += hit;
        let s = split.entry(d).or_default();
        s.0 += hit;
        s.1 += 1;
        let c = class.entry(d).or_default().entry(m.gold_label.clone()).or_default();
        c.0 += hit;
        c.1 += 1;
    }
    let ratio = |(hit, n): (usize, usize)| (n > 0).then(|| hit as f64 / n as f64);
    Ok(SplitAccuracy {
        overall: correct_total as f64 / instances.len() as f64,
        per_split: Difficulty::ALL
            .iter()
            .map(|d| (*d, ratio(split.get(d).copied().unwrap_or_default())))
            .collect(),
        per_class: Difficulty::ALL
            .iter()
            .map(|d| {
                let cells = class.get(d).cloned().unwrap_or_default();
                (*d, cells.into_iter().map(|(k, v)| (k, ratio(v))).collect())
            })
            .collect(),
    })
}

/// Contingency table of difficulty against gold class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub classes: Vec<String>,
    /// `counts[d][i]` counts instances of `classes[i]` in split `d`.
    pub counts: BTreeMap<Difficulty, Vec<usize>>,
}

impl ClassCounts {
    pub fn split_total(&self, d: Difficulty) -> usize {
        self.counts[&d].iter().sum()
    }

    pub fn class_total(&self, class: usize) -> usize {
        self.counts.values().map(|row| row[class]).sum()
    }

    /// CSV `difficulty,class,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "difficulty,class,count")?;
        for (d, row) in &self.counts {
            for (class, n) in self.classes.iter().zip(row) {
                writeln!(w, "{d},{},{n}", csv_field(class))?;
            }
        }
        Ok(())
    }
}

pub fn class_counts(
    difficulties: &BTreeMap<String, Difficulty>,
    golds: &BTreeMap<String, String>,
    classes: &[String],
) -> Result<ClassCounts, ReportError> {
    let mut counts: BTreeMap<Difficulty, Vec<usize>> =
        Difficulty::ALL.iter().map(|d| (*d, vec![0; classes.len()])).collect();
    for (id, gold) in golds {
        let d = difficulties.get(id).ok_or_else(|| ReportError::Unassigned(id.clone()))?;
        let c = classes
            .iter()
            .position(|c| c == gold)
            .ok_or_else(|| ReportError::UnknownClass(id.clone(), gold.clone()))?;
        counts.get_mut(d).expect("all difficulties present")[c] += 1;
    }
    if let Some(extra) = difficulties.keys().find(|k| !golds.contains_key(*k)) {
        return Err(ReportError::UnknownInstance(extra.clone()));
    }
    Ok(ClassCounts { classes: classes.to_vec(), counts })
}

/// Mean and population std of one measure in one (difficulty, class) cell.
/// For boolean measures the mean is the proportion of true values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateCell {
    pub difficulty: Difficulty,
    pub class: String,
    pub measure: Measure,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub empty: bool,
}

pub fn aggregate_heuristics(
    profiles: &BTreeMap<String, HeuristicProfile>,
    difficulties: &BTreeMap<String, Difficulty>,
    golds: &BTreeMap<String, String>,
    classes: &[String],
) -> Result<Vec<AggregateCell>, ReportError> {
    let mut groups: BTreeMap<(Difficulty, usize), Vec<&HeuristicProfile>> = BTreeMap::new();
    for (id, gold) in golds {
        let d = *difficulties.get(id).ok_or_else(|| ReportError::Unassigned(id.clone()))?;
        let p = profiles.get(id).ok_or_else(|| ReportError::MissingProfile(id.clone()))?;
        let c = classes
            .iter()
            .position(|c| c == gold)
            .ok_or_else(|| ReportError::UnknownClass(id.clone(), gold.clone()))?;
        groups.entry((d, c)).or_default().push(p);
    }
    let mut cells = Vec::new();
    for d in Difficulty::ALL {
        for (c, class) in classes.iter().enumerate() {
            let members = groups.get(&(d, c)).map(Vec::as_slice).unwrap_or_default();
            for measure in Measure::ALL {
                let values: Vec<f64> = members.iter().map(|p| measure.value(p)).collect();
                let (m, s) = (mean(&values), population_std(&values));
                cells.push(AggregateCell {
                    difficulty: d,
                    class: class.clone(),
                    measure,
                    n: values.len(),
                    mean: m,
                    std: s,
                    empty: values.is_empty(),
                });
            }
        }
    }
    Ok(cells)
}

/// CSV `difficulty,class,measure,n,mean,std`; empty cells leave mean and std blank.
pub fn write_aggregates_csv<W: Write>(cells: &[AggregateCell], mut w: W) -> std::io::Result<()> {
    writeln!(w, "difficulty,class,measure,n,mean,std")?;
    let opt = |v: Option<f64>| v.map(format_sig17).unwrap_or_default();
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.difficulty,
            csv_field(&c.class),
            c.measure.name(),
            c.n,
            opt(c.mean),
            opt(c.std)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitSummary {
    pub difficulty: Difficulty,
    pub count: usize,
    pub fraction: f64,
    pub accuracy: Option<f64>,
    pub class_accuracy: BTreeMap<String, Option<f64>>,
    pub class_counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitReport {
    pub total: usize,
    pub classes: Vec<String>,
    pub splits: Vec<SplitSummary>,
    /// Absent when no instance carries a reference prediction.
    pub overall_accuracy: Option<f64>,
    pub heuristics: Option<Vec<AggregateCell>>,
    pub normalization: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl SplitReport {
    /// CSV `difficulty,count,fraction,accuracy` with blank accuracy when absent.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "difficulty,count,fraction,accuracy")?;
        for s in &self.splits {
            writeln!(
                w,
                "{},{},{},{}",
                s.difficulty,
                s.count,
                format_sig17(s.fraction),
                s.accuracy.map(format_sig17).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Assemble the full report for a log and its difficulty assignment.
///
/// Accuracies are reported when every instance has a reference prediction,
/// omitted with a warning when none has, and rejected when only some have.
pub fn build_report(
    log: &DynamicsLog,
    difficulties: &BTreeMap<String, Difficulty>,
    profiles: Option<&BTreeMap<String, HeuristicProfile>>,
) -> Result<SplitReport, ReportError> {
    let instances = log.instances();
    if instances.is_empty() {
        return Err(ReportError::Empty);
    }
    let splits = build_splits(difficulties, instances)?;
    let classes: Vec<String> = log.label_space().labels().to_vec();
    let golds: BTreeMap<String, String> =
        instances.iter().map(|m| (m.instance_id.clone(), m.gold_label.clone())).collect();
    let counts = class_counts(difficulties, &golds, &classes)?;

    let mut warnings = Vec::new();
    let accuracy = if instances.iter().all(|m| m.reference_prediction.is_none()) {
        warnings.push("no reference predictions; accuracies omitted".to_owned());
        None
    } else {
        Some(split_accuracy(instances, difficulties)?)
    };

    let total = instances.len();
    let splits = Difficulty::ALL
        .iter()
        .map(|&d| SplitSummary {
            difficulty: d,
            count: splits.get(d).len(),
            fraction: splits.get(d).len() as f64 / total as f64,
            accuracy: accuracy.as_ref().and_then(|a| a.per_split[&d]),
            class_accuracy: accuracy.as_ref().map(|a| a.per_class[&d].clone()).unwrap_or_default(),
            class_counts: classes.iter().cloned().zip(counts.counts[&d].iter().copied()).collect(),
        })
        .collect();

    let heuristics = match profiles {
        Some(p) => {
            let cells = aggregate_heuristics(p, difficulties, &golds, &classes)?;
            let empty: BTreeSet<(Difficulty, &str)> =
                cells.iter().filter(|c| c.empty).map(|c| (c.difficulty, c.class.as_str())).collect();
            for (d, class) in empty {
                warnings.push(format!("no {class} instances in the {d} split; heuristic aggregates are null"));
            }
            Some(cells)
        }
        None => None,
    };

    Ok(SplitReport {
        total,
        classes,
        splits,
        overall_accuracy: accuracy.map(|a| a.overall),
        heuristics,
        normalization: NORMALIZATION_NOTES.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect(),
        warnings,
    })
}
