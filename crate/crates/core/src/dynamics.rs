//! Training-dynamics logs: the JSONL wire format, its validation, and the
//! in-memory [`DynamicsLog`] every other module consumes.
//!
//! A log has three kinds of lines:
//!
//! ```text
//! {"kind":"header","labels":["entailment","neutral","contradiction"],"epochs":{"ph":5,"h":5}}
//! {"kind":"instance","id":"x1","premise":"...","hypothesis":"...","gold":"neutral"}
//! {"kind":"record","id":"x1","setting":"ph","epoch":1,"logits":[0.1,2.3,-0.4]}
//! ```
//!
//! The header must precede every other line. Instances and records may be
//! interleaved in any order; the parsed log is canonicalized (instances sorted
//! by id, records by id, setting and epoch) so line order never matters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which input the model saw while the dynamics were recorded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Premise and hypothesis.
    #[serde(rename = "ph")]
    PremiseHypothesis,
    /// Hypothesis only.
    #[serde(rename = "h")]
    HypothesisOnly,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::PremiseHypothesis, Setting::HypothesisOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::PremiseHypothesis => "ph",
            Setting::HypothesisOnly => "h",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered class names. Logit index `i` always refers to `labels()[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self, LogError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(LogError::LabelSpace(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(LogError::LabelSpace(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = LogError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        LabelSpace::new(v)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(l: LabelSpace) -> Self {
        l.labels
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub premise: String,
    pub hypothesis: String,
    #[serde(rename = "gold")]
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_prediction: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLogits {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub setting: Setting,
    pub epoch: u32,
    pub logits: Vec<f64>,
}

/// A validated, canonically ordered training-dynamics log.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsLog {
    label_space: LabelSpace,
    instances: Vec<InstanceMeta>,
    records: Vec<EpochLogits>,
    epochs_per_setting: BTreeMap<Setting, u32>,
    index: BTreeMap<(String, Setting), Range<usize>>,
}

/// One problem found while parsing, tied to the 1-based line it came from.
/// Line 0 means the problem is not attributable to a single line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("invalid label space: {0}")]
    LabelSpace(String),
    #[error("invalid dynamics log ({} problem(s)); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error("non-finite logit")]
    NonFinite,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LogError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            LogError::Invalid(d) => d,
            _ => &[],
        }
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header {
        labels: Vec<String>,
        epochs: BTreeMap<Setting, u32>,
    },
    Instance(InstanceMeta),
    Record(EpochLogits),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRef<'a> {
    Header {
        labels: &'a [String],
        epochs: &'a BTreeMap<Setting, u32>,
    },
    Instance(&'a InstanceMeta),
    Record(&'a EpochLogits),
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, LogError> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(LogError::NonFinite);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Parse and validate a JSONL dynamics log.
///
/// All problems are collected and returned together, sorted by line number.
pub fn parse_log<R: BufRead>(reader: R) -> Result<DynamicsLog, LogError> {
    let mut diags = Vec::new();
    let mut header: Option<(LabelSpace, BTreeMap<Setting, u32>)> = None;
    let mut instances: Vec<(usize, InstanceMeta)> = Vec::new();
    let mut records: Vec<(usize, EpochLogits)> = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                diags.push(Diagnostic { line: lineno, message: format!("malformed line: {e}") });
                continue;
            }
        };
        match parsed {
            Line::Header { labels, epochs } => {
                if header.is_some() {
                    diags.push(Diagnostic { line: lineno, message: "duplicate header".into() });
                    continue;
                }
                if !instances.is_empty() || !records.is_empty() {
                    diags.push(Diagnostic {
                        line: lineno,
                        message: "header must precede all other lines".into(),
                    });
                }
                let space = match LabelSpace::new(labels) {
                    Ok(s) => s,
                    Err(e) => {
                        diags.push(Diagnostic { line: lineno, message: e.to_string() });
                        continue;
                    }
                };
                if epochs.is_empty() {
                    diags.push(Diagnostic { line: lineno, message: "header declares no settings".into() });
                }
                for (s, e) in &epochs {
                    if *e == 0 {
                        diags.push(Diagnostic {
                            line: lineno,
                            message: format!("setting {s} declares 0 epochs"),
                        });
                    }
                }
                header = Some((space, epochs));
            }
            Line::Instance(meta) => {
                if header.is_none() {
                    diags.push(Diagnostic { line: lineno, message: "missing header".into() });
                }
                instances.push((lineno, meta));
            }
            Line::Record(rec) => {
                if header.is_none() {
                    diags.push(Diagnostic { line: lineno, message: "missing header".into() });
                }
                records.push((lineno, rec));
            }
        }
    }

    let Some((label_space, epochs_per_setting)) = header else {
        if diags.is_empty() {
            diags.push(Diagnostic { line: 0, message: "missing header".into() });
        }
        diags.sort_by_key(|d| d.line);
        return Err(LogError::Invalid(diags));
    };

    let mut ids: HashMap<&str, usize> = HashMap::new();
    for (lineno, meta) in &instances {
        if let Some(first) = ids.insert(meta.instance_id.as_str(), *lineno) {
            diags.push(Diagnostic {
                line: *lineno,
                message: format!("duplicate instance {:?} (first on line {first})", meta.instance_id),
            });
        }
        if label_space.index_of(&meta.gold_label).is_none() {
            diags.push(Diagnostic {
                line: *lineno,
                message: format!("unknown gold label {:?}", meta.gold_label),
            });
        }
        if let Some(pred) = &meta.reference_prediction {
            if label_space.index_of(pred).is_none() {
                diags.push(Diagnostic {
                    line: *lineno,
                    message: format!("unknown reference prediction {pred:?}"),
                });
            }
        }
    }

    let mut seen: HashMap<(&str, Setting, u32), usize> = HashMap::new();
    for (lineno, rec) in &records {
        if !ids.contains_key(rec.instance_id.as_str()) {
            diags.push(Diagnostic {
                line: *lineno,
                message: format!("record for unknown instance {:?}", rec.instance_id),
            });
        }
        if rec.logits.len() != label_space.len() {
            diags.push(Diagnostic {
                line: *lineno,
                message: format!(
                    "logit arity mismatch: expected {}, got {}",
                    label_space.len(),
                    rec.logits.len()
                ),
            });
        }
        if rec.logits.iter().any(|z| !z.is_finite()) {
            diags.push(Diagnostic { line: *lineno, message: "non-finite logit".into() });
        }
        match epochs_per_setting.get(&rec.setting) {
            None => diags.push(Diagnostic {
                line: *lineno,
                message: format!("setting {} not declared in header", rec.setting),
            }),
            Some(&e) if rec.epoch == 0 || rec.epoch > e => diags.push(Diagnostic {
                line: *lineno,
                message: format!("epoch {} outside 1..={e} for setting {}", rec.epoch, rec.setting),
            }),
            Some(_) => {}
        }
        if let Some(first) = seen.insert((rec.instance_id.as_str(), rec.setting, rec.epoch), *lineno) {
            diags.push(Diagnostic {
                line: *lineno,
                message: format!(
                    "duplicate record ({:?}, {}, epoch {}) (first on line {first})",
                    rec.instance_id, rec.setting, rec.epoch
                ),
            });
        }
    }

    // Contiguity: every (instance, setting) that appears must cover 1..=E.
    let mut coverage: BTreeMap<(&str, Setting), (BTreeSet<u32>, usize)> = BTreeMap::new();
    for (lineno, rec) in &records {
        let entry = coverage
            .entry((rec.instance_id.as_str(), rec.setting))
            .or_insert_with(|| (BTreeSet::new(), *lineno));
        entry.0.insert(rec.epoch);
        entry.1 = entry.1.max(*lineno);
    }
    for ((id, setting), (epochs, last_line)) in &coverage {
        let Some(&e) = epochs_per_setting.get(setting) else { continue };
        let missing: Vec<u32> = (1..=e).filter(|k| !epochs.contains(k)).collect();
        if !missing.is_empty() {
            diags.push(Diagnostic {
                line: *last_line,
                message: format!("instance {id:?} setting {setting}: missing epoch(s) {missing:?}"),
            });
        }
    }

    if !diags.is_empty() {
        diags.sort_by_key(|d| d.line);
        return Err(LogError::Invalid(diags));
    }

    let instances = instances.into_iter().map(|(_, m)| m).collect();
    let records = records.into_iter().map(|(_, r)| r).collect();
    Ok(DynamicsLog::assemble(label_space, instances, records, epochs_per_setting))
}

pub fn parse_log_str(text: &str) -> Result<DynamicsLog, LogError> {
    parse_log(text.as_bytes())
}

impl DynamicsLog {
    fn assemble(
        label_space: LabelSpace,
        mut instances: Vec<InstanceMeta>,
        mut records: Vec<EpochLogits>,
        epochs_per_setting: BTreeMap<Setting, u32>,
    ) -> Self {
        instances.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        records.sort_by(|a, b| {
            (&a.instance_id, a.setting, a.epoch).cmp(&(&b.instance_id, b.setting, b.epoch))
        });
        let mut index: BTreeMap<(String, Setting), Range<usize>> = BTreeMap::new();
        let mut start = 0;
        while start < records.len() {
            let key = (records[start].instance_id.clone(), records[start].setting);
            let mut end = start + 1;
            while end < records.len()
                && records[end].instance_id == key.0
                && records[end].setting == key.1
            {
                end += 1;
            }
            index.insert(key, start..end);
            start = end;
        }
        Self { label_space, instances, records, epochs_per_setting, index }
    }

    /// Build a log from parts, applying the same validation as [`parse_log`].
    pub fn from_parts(
        label_space: LabelSpace,
        instances: Vec<InstanceMeta>,
        records: Vec<EpochLogits>,
        epochs_per_setting: BTreeMap<Setting, u32>,
    ) -> Result<Self, LogError> {
        let probe = Self::assemble(label_space, instances, records, epochs_per_setting);
        let mut buf = Vec::new();
        probe.write_jsonl(&mut buf)?;
        parse_log(buf.as_slice())
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    /// Instances sorted by id.
    pub fn instances(&self) -> &[InstanceMeta] {
        &self.instances
    }

    /// Records sorted by (id, setting, epoch).
    pub fn records(&self) -> &[EpochLogits] {
        &self.records
    }

    pub fn epochs_per_setting(&self) -> &BTreeMap<Setting, u32> {
        &self.epochs_per_setting
    }

    pub fn instance(&self, id: &str) -> Option<&InstanceMeta> {
        self.instances
            .binary_search_by(|m| m.instance_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.instances[i])
    }

    /// The epoch-ordered records for one instance under one setting.
    pub fn series(&self, id: &str, setting: Setting) -> Option<&[EpochLogits]> {
        self.index
            .get(&(id.to_owned(), setting))
            .map(|r| &self.records[r.clone()])
    }

    /// Settings that actually have at least one record.
    pub fn present_settings(&self) -> BTreeSet<Setting> {
        self.index.keys().map(|(_, s)| *s).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        let header = LineRef::Header {
            labels: self.label_space.labels(),
            epochs: &self.epochs_per_setting,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for m in &self.instances {
            serde_json::to_writer(&mut w, &LineRef::Instance(m))?;
            w.write_all(b"\n")?;
        }
        for r in &self.records {
            serde_json::to_writer(&mut w, &LineRef::Record(r))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Serialize a single instance as a standalone JSON line (used for split exports).
pub fn instance_json_line(meta: &InstanceMeta) -> Result<String, LogError> {
    Ok(serde_json::to_string(meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(e_ph: u32, e_h: u32) -> String {
        format!(
            r#"{{"kind":"header","labels":["entailment","neutral","contradiction"],"epochs":{{"ph":{e_ph},"h":{e_h}}}}}"#
        )
    }

    fn instance(id: &str, gold: &str) -> String {
        format!(r#"{{"kind":"instance","id":"{id}","premise":"p {id}","hypothesis":"h {id}","gold":"{gold}"}}"#)
    }

    fn record(id: &str, setting: &str, epoch: u32, logits: &str) -> String {
        format!(r#"{{"kind":"record","id":"{id}","setting":"{setting}","epoch":{epoch},"logits":{logits}}}"#)
    }

    fn well_formed() -> Vec<String> {
        let mut lines = vec![header(5, 5), instance("a", "neutral"), instance("b", "entailment")];
        for id in ["a", "b"] {
            for s in ["ph", "h"] {
                for e in 1..=5 {
                    lines.push(record(id, s, e, &format!("[{e}.0,0.5,-1.0]")));
                }
            }
        }
        lines
    }

    #[test]
    fn parses_two_settings() {
        let log = parse_log_str(&well_formed().join("\n")).unwrap();
        assert_eq!(log.instances().len(), 2);
        assert_eq!(log.records().len(), 20);
        assert_eq!(log.epochs_per_setting()[&Setting::PremiseHypothesis], 5);
        assert_eq!(log.epochs_per_setting()[&Setting::HypothesisOnly], 5);
        let s = log.series("b", Setting::HypothesisOnly).unwrap();
        assert_eq!(s.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn arity_mismatch_names_line() {
        let mut lines = well_formed();
        lines[4] = record("a", "ph", 2, "[1,2,3,4]");
        let err = parse_log_str(&lines.join("\n")).unwrap_err();
        let d = err.diagnostics();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 5);
        assert!(d[0].message.contains("arity"), "{}", d[0].message);
    }

    #[test]
    fn missing_epoch_detected() {
        let text = [
            header(4, 4),
            instance("a", "neutral"),
            record("a", "ph", 1, "[0,0,0]"),
            record("a", "ph", 2, "[0,0,0]"),
            record("a", "ph", 4, "[0,0,0]"),
        ]
        .join("\n");
        let err = parse_log_str(&text).unwrap_err();
        assert!(err.diagnostics().iter().any(|d| d.message.contains("missing epoch(s) [3]")));
    }

    #[test]
    fn other_errors() {
        let cases: Vec<(Vec<String>, &str)> = vec![
            (vec![header(1, 1), "{not json".into()], "malformed"),
            (vec![header(1, 1), instance("a", "maybe")], "unknown gold label"),
            (
                vec![header(1, 1), instance("a", "neutral"), record("a", "ph", 1, "[0,0,0]"), record("a", "ph", 1, "[0,0,0]")],
                "duplicate record",
            ),
            (vec![header(1, 1), record("zz", "ph", 1, "[0,0,0]")], "unknown instance"),
            (vec![instance("a", "neutral"), header(1, 1)], "missing header"),
            (vec![header(1, 1), instance("a", "neutral"), record("a", "h", 2, "[0,0,0]")], "outside"),
            (vec![header(1, 1), instance("a", "neutral"), record("a", "ph", 1, "[0,1e999,0]")], "malformed"),
        ];
        for (lines, needle) in cases {
            let err = parse_log_str(&lines.join("\n")).unwrap_err();
            assert!(
                err.diagnostics().iter().any(|d| d.message.contains(needle)),
                "expected {needle:?} in {:?}",
                err.diagnostics()
            );
        }
        let err = parse_log_str("").unwrap_err();
        assert_eq!(err.diagnostics()[0].message, "missing header");
    }

    #[test]
    fn diagnostics_sorted_by_line() {
        let mut lines = well_formed();
        lines[10] = "garbage".into();
        lines[3] = record("a", "ph", 9, "[0,0,0]");
        let err = parse_log_str(&lines.join("\n")).unwrap_err();
        let numbers: Vec<usize> = err.diagnostics().iter().map(|d| d.line).collect();
        let mut sorted = numbers.clone();
        sorted.sort();
        assert_eq!(numbers, sorted);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
        assert!(softmax(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn softmax_large_logits_match_high_precision_values() {
        // Reference values evaluated with 50-digit arithmetic: 1/(2+e^-1), e^-1/(2+e^-1).
        let big = 0.422_318_798_251_518_2;
        let small = 0.155_362_403_496_963_6;
        let p = softmax(&[1000.0, 1000.0, 999.0]).unwrap();
        assert_eq!(p[0], p[1]);
        assert!((p[0] - big).abs() < 1e-15);
        assert!((p[2] - small).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_space_invariants() {
        assert!(LabelSpace::new(["a"]).is_err());
        assert!(LabelSpace::new(["a", "a"]).is_err());
        assert_eq!(LabelSpace::new(["a", "b"]).unwrap().index_of("b"), Some(1));
    }
}
