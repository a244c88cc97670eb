//! Lexical measures of spurious premise/hypothesis correlation.
//!
//! Normalization choices:
//! * word overlap and antonym score are divided by the number of distinct
//!   hypothesis tokens;
//! * misspelled ratio is divided by the total token count of both sides;
//! * length mismatch is `(|P| - |H|) / (|P| + |H|)`, so its sign is kept.
//!
//! Stopwords are never removed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::InstanceMeta;
use crate::features::{csv_field, format_sig17};

pub const DEFAULT_NEGATIONS: [&str; 4] = ["no", "not", "never", "none"];

/// Human-readable statement of the normalization choices, echoed into reports.
pub const NORMALIZATION_NOTES: [(&str, &str); 5] = [
    ("word_overlap", "distinct shared tokens / distinct hypothesis tokens"),
    ("antonym_score", "premise-token/hypothesis-type antonym hits / distinct hypothesis tokens"),
    ("length_mismatch", "(premise tokens - hypothesis tokens) / (premise tokens + hypothesis tokens)"),
    ("misspelled_ratio", "alphabetic tokens absent from the dictionary / all tokens of both sides"),
    ("contains_negation", "1 if any token of either side is in the negation list"),
];

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("hypothesis has no tokens")]
    EmptyHypothesis,
    #[error("premise and hypothesis are both empty")]
    EmptyPair,
    #[error("{path} line {line}: {message}")]
    Lexicon { path: String, line: usize, message: String },
    #[error("instance {id:?}: {source}")]
    Instance {
        id: String,
        #[source]
        source: Box<HeuristicError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercase, split on non-alphanumeric characters, and rewrite a trailing
/// `n't` as a separate `not` token (`doesn't` -> `does`, `not`).
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            current.push(c);
            i += 1;
            continue;
        }
        let is_apostrophe = c == '\'' || c == '\u{2019}';
        let negated = is_apostrophe
            && current.ends_with('n')
            && chars.get(i + 1) == Some(&'t')
            && chars.get(i + 2).is_none_or(|c| !c.is_alphanumeric());
        if negated {
            current.pop();
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push("not".to_owned());
            i += 2;
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        i += 1;
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedPair {
    pub premise_tokens: Vec<String>,
    pub hypothesis_tokens: Vec<String>,
}

impl TokenizedPair {
    pub fn new(premise: &str, hypothesis: &str) -> Self {
        Self { premise_tokens: tokenize(premise), hypothesis_tokens: tokenize(hypothesis) }
    }

    fn hypothesis_types(&self) -> BTreeSet<&str> {
        self.hypothesis_tokens.iter().map(String::as_str).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LexiconSet {
    pub antonyms: BTreeMap<String, BTreeSet<String>>,
    pub dictionary: HashSet<String>,
    pub negations: BTreeSet<String>,
}

impl LexiconSet {
    /// Empty antonyms and dictionary, default negation words.
    pub fn with_default_negations() -> Self {
        Self {
            negations: DEFAULT_NEGATIONS.iter().map(|s| (*s).to_owned()).collect(),
            ..Self::default()
        }
    }

    pub fn add_antonym_pair(&mut self, word: &str, antonym: &str, symmetrize: bool) {
        let (w, a) = (word.to_lowercase(), antonym.to_lowercase());
        self.antonyms.entry(w.clone()).or_default().insert(a.clone());
        if symmetrize {
            self.antonyms.entry(a).or_default().insert(w);
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.dictionary.is_empty() {
            w.push("dictionary is empty; every alphabetic token counts as misspelled".to_owned());
        }
        w
    }
}

/// Read `word<TAB>antonym` lines. Blank lines and `#` comments are skipped.
pub fn read_antonyms<R: BufRead>(
    reader: R,
    path: &str,
    symmetrize: bool,
    into: &mut LexiconSet,
) -> Result<(), HeuristicError> {
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(w), Some(a), None) if !w.trim().is_empty() && !a.trim().is_empty() => {
                into.add_antonym_pair(w.trim(), a.trim(), symmetrize);
            }
            _ => {
                return Err(HeuristicError::Lexicon {
                    path: path.to_owned(),
                    line: i + 1,
                    message: "expected word<TAB>antonym".into(),
                })
            }
        }
    }
    Ok(())
}

/// Read a one-word-per-line list, lowercased. Blank lines and `#` comments are skipped.
pub fn read_word_list<R: BufRead>(reader: R) -> Result<BTreeSet<String>, HeuristicError> {
    let mut out = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        out.insert(w.to_lowercase());
    }
    Ok(out)
}

pub fn word_overlap(pair: &TokenizedPair) -> Result<f64, HeuristicError> {
    let hyp = pair.hypothesis_types();
    if hyp.is_empty() {
        return Err(HeuristicError::EmptyHypothesis);
    }
    let prem: BTreeSet<&str> = pair.premise_tokens.iter().map(String::as_str).collect();
    Ok(hyp.intersection(&prem).count() as f64 / hyp.len() as f64)
}

pub fn antonym_score(pair: &TokenizedPair, lexicon: &LexiconSet) -> Result<f64, HeuristicError> {
    let hyp = pair.hypothesis_types();
    if hyp.is_empty() {
        return Err(HeuristicError::EmptyHypothesis);
    }
    let hits: usize = pair
        .premise_tokens
        .iter()
        .filter_map(|t| lexicon.antonyms.get(t))
        .map(|ants| hyp.iter().filter(|h| ants.contains(**h)).count())
        .sum();
    Ok(hits as f64 / hyp.len() as f64)
}

pub fn length_mismatch(pair: &TokenizedPair) -> Result<f64, HeuristicError> {
    let p = pair.premise_tokens.len() as f64;
    let h = pair.hypothesis_tokens.len() as f64;
    if p + h == 0.0 {
        return Err(HeuristicError::EmptyPair);
    }
    Ok((p - h) / (p + h))
}

fn is_alphabetic_token(t: &str) -> bool {
    t.chars().all(char::is_alphabetic)
}

pub fn misspelled_ratio(pair: &TokenizedPair, dictionary: &HashSet<String>) -> Result<f64, HeuristicError> {
    let total = pair.premise_tokens.len() + pair.hypothesis_tokens.len();
    if total == 0 {
        return Err(HeuristicError::EmptyPair);
    }
    let missing = pair
        .premise_tokens
        .iter()
        .chain(&pair.hypothesis_tokens)
        .filter(|t| is_alphabetic_token(t) && !dictionary.contains(*t))
        .count();
    Ok(missing as f64 / total as f64)
}

pub fn contains_negation(pair: &TokenizedPair, negations: &BTreeSet<String>) -> bool {
    pair.premise_tokens
        .iter()
        .chain(&pair.hypothesis_tokens)
        .any(|t| negations.contains(t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicProfile {
    pub word_overlap: f64,
    pub antonym_score: f64,
    pub length_mismatch: f64,
    pub misspelled_ratio: f64,
    pub contains_negation: bool,
}

/// The five measures, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    WordOverlap,
    AntonymScore,
    LengthMismatch,
    MisspelledRatio,
    ContainsNegation,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::WordOverlap,
        Measure::AntonymScore,
        Measure::LengthMismatch,
        Measure::MisspelledRatio,
        Measure::ContainsNegation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::WordOverlap => "word_overlap",
            Measure::AntonymScore => "antonym_score",
            Measure::LengthMismatch => "length_mismatch",
            Measure::MisspelledRatio => "misspelled_ratio",
            Measure::ContainsNegation => "contains_negation",
        }
    }

    pub fn is_boolean(self) -> bool {
        matches!(self, Measure::ContainsNegation)
    }

    /// Numeric value of this measure; booleans map to 0/1.
    pub fn value(self, p: &HeuristicProfile) -> f64 {
        match self {
            Measure::WordOverlap => p.word_overlap,
            Measure::AntonymScore => p.antonym_score,
            Measure::LengthMismatch => p.length_mismatch,
            Measure::MisspelledRatio => p.misspelled_ratio,
            Measure::ContainsNegation => f64::from(u8::from(p.contains_negation)),
        }
    }
}

pub fn profile_pair(pair: &TokenizedPair, lexicon: &LexiconSet) -> Result<HeuristicProfile, HeuristicError> {
    Ok(HeuristicProfile {
        word_overlap: word_overlap(pair)?,
        antonym_score: antonym_score(pair, lexicon)?,
        length_mismatch: length_mismatch(pair)?,
        misspelled_ratio: misspelled_ratio(pair, &lexicon.dictionary)?,
        contains_negation: contains_negation(pair, &lexicon.negations),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceProfile {
    pub instance_id: String,
    pub profile: HeuristicProfile,
}

/// Profile every instance, in input order.
pub fn profile_dataset(instances: &[InstanceMeta], lexicon: &LexiconSet) -> Result<Vec<InstanceProfile>, HeuristicError> {
    for w in lexicon.warnings() {
        log::warn!("{w}");
    }
    instances
        .iter()
        .map(|m| {
            let pair = TokenizedPair::new(&m.premise, &m.hypothesis);
            profile_pair(&pair, lexicon)
                .map(|profile| InstanceProfile { instance_id: m.instance_id.clone(), profile })
                .map_err(|e| HeuristicError::Instance { id: m.instance_id.clone(), source: Box::new(e) })
        })
        .collect()
}

pub fn profile_map(profiles: &[InstanceProfile]) -> BTreeMap<String, HeuristicProfile> {
    profiles.iter().map(|p| (p.instance_id.clone(), p.profile)).collect()
}

/// CSV `instance_id,word_overlap,antonym_score,length_mismatch,misspelled_ratio,contains_negation`.
pub fn write_profiles_csv<W: Write>(profiles: &[InstanceProfile], mut w: W) -> std::io::Result<()> {
    writeln!(w, "instance_id,word_overlap,antonym_score,length_mismatch,misspelled_ratio,contains_negation")?;
    for p in profiles {
        let v = &p.profile;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            csv_field(&p.instance_id),
            format_sig17(v.word_overlap),
            format_sig17(v.antonym_score),
            format_sig17(v.length_mismatch),
            format_sig17(v.misspelled_ratio),
            v.contains_negation
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| (*t).to_owned()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("It doesn't get it."), toks(&["it", "does", "not", "get", "it"]));
        assert!(tokenize("").is_empty());
        let t = tokenize("Three kids in a forest standing on a tree log.");
        assert_eq!(t.len(), 10);
        assert!(t.iter().all(|w| w.chars().all(|c| !c.is_uppercase())));
        assert_eq!(tokenize("Won\u{2019}t n't"), toks(&["wo", "not", "not"]));
        assert_eq!(tokenize("the n'th term"), toks(&["the", "n", "th", "term"]));
    }

    #[test]
    fn overlap_examples() {
        let same = TokenizedPair::new("a dog runs", "a dog runs");
        assert_eq!(word_overlap(&same).unwrap(), 1.0);
        let disjoint = TokenizedPair::new("a dog runs", "cats sleep");
        assert_eq!(word_overlap(&disjoint).unwrap(), 0.0);
        let snow = TokenizedPair::new("a brown dog plays in a deep pile of snow", "a brown dog plays in snow");
        assert_eq!(word_overlap(&snow).unwrap(), 1.0);
        assert!(matches!(word_overlap(&TokenizedPair::new("x", "")), Err(HeuristicError::EmptyHypothesis)));
    }

    #[test]
    fn antonym_examples() {
        let empty = LexiconSet::default();
        let pair = TokenizedPair::new("the happy child", "the sad child cries loudly");
        assert_eq!(antonym_score(&pair, &empty).unwrap(), 0.0);
        let mut lex = LexiconSet::default();
        lex.add_antonym_pair("happy", "sad", true);
        assert_eq!(antonym_score(&pair, &lex).unwrap(), 0.2);
    }

    #[test]
    fn length_examples() {
        assert_eq!(length_mismatch(&TokenizedPair::new("a b", "c d")).unwrap(), 0.0);
        assert_eq!(length_mismatch(&TokenizedPair::new("", "c d")).unwrap(), -1.0);
        assert_eq!(length_mismatch(&TokenizedPair::new("a b c", "d e f g h i j k l")).unwrap(), -0.5);
        assert!(length_mismatch(&TokenizedPair::new("", "")).is_err());
    }

    #[test]
    fn misspelling_examples() {
        let pair = TokenizedPair::new("one two three four five", "six seven eight nine tenn");
        let full: HashSet<String> = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "tenn"]
            .iter()
            .map(|s| (*s).to_owned())
            .collect();
        assert_eq!(misspelled_ratio(&pair, &full).unwrap(), 0.0);
        let mut partial = full.clone();
        partial.remove("tenn");
        assert_eq!(misspelled_ratio(&pair, &partial).unwrap(), 0.1);
        let numeric = TokenizedPair::new("3 girls", "girls");
        let dict: HashSet<String> = ["girls".to_owned()].into();
        assert_eq!(misspelled_ratio(&numeric, &dict).unwrap(), 0.0);
    }

    #[test]
    fn negation_examples() {
        let neg = LexiconSet::with_default_negations().negations;
        assert!(contains_negation(&TokenizedPair::new("it gets it", "It doesn't get it."), &neg));
        assert!(!contains_negation(&TokenizedPair::new("a dog", "a cat"), &neg));
        assert!(contains_negation(&TokenizedPair::new("a dog", "none of them"), &neg));
    }

    #[test]
    fn lexicon_parsing() {
        let mut lex = LexiconSet::default();
        read_antonyms("Happy\tsad\n# comment\n\nup\tdown\n".as_bytes(), "ants.tsv", true, &mut lex).unwrap();
        assert!(lex.antonyms["sad"].contains("happy"));
        assert!(lex.antonyms["down"].contains("up"));
        let mut asym = LexiconSet::default();
        read_antonyms("up\tdown\n".as_bytes(), "a", false, &mut asym).unwrap();
        assert!(!asym.antonyms.contains_key("down"));
        let err = read_antonyms("ok\tfine\nbroken\n".as_bytes(), "ants.tsv", true, &mut lex).unwrap_err();
        assert!(err.to_string().contains("ants.tsv line 2"));
        let words = read_word_list("Dog\n cat \n\n".as_bytes()).unwrap();
        assert_eq!(words, ["cat".to_owned(), "dog".to_owned()].into());
    }

    #[test]
    fn profile_reports_instance_context() {
        let meta = InstanceMeta {
            instance_id: "bad".into(),
            premise: "words".into(),
            hypothesis: "...".into(),
            gold_label: "x".into(),
            reference_prediction: None,
        };
        let err = profile_dataset(&[meta], &LexiconSet::default()).unwrap_err();
        assert!(err.to_string().contains("\"bad\""));
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["a", "dog", "cat", "not", "sad", "happy", "Runs", "no"]), 1..8)
            .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn length_mismatch_is_antisymmetric(p in sentence(), h in sentence()) {
            let a = length_mismatch(&TokenizedPair::new(&p, &h)).unwrap();
            let b = length_mismatch(&TokenizedPair::new(&h, &p)).unwrap();
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn measures_ignore_case_and_trailing_punctuation(p in sentence(), h in sentence()) {
            let mut lex = LexiconSet::with_default_negations();
            lex.add_antonym_pair("happy", "sad", true);
            let plain = profile_pair(&TokenizedPair::new(&p, &h), &lex).unwrap();
            let loud = profile_pair(&TokenizedPair::new(&format!("{}.", p.to_uppercase()), &format!("{}!", h.to_uppercase())), &lex).unwrap();
            prop_assert_eq!(plain, loud);
        }

        #[test]
        fn negation_is_monotone(p in sentence(), h in sentence(), extra in sentence()) {
            let neg = LexiconSet::with_default_negations().negations;
            if contains_negation(&TokenizedPair::new(&p, &h), &neg) {
                let longer = format!("{} {}", p, extra);
                prop_assert!(contains_negation(&TokenizedPair::new(&longer, &h), &neg));
            }
        }

        #[test]
        fn symmetric_antonyms_zero_iff_swapped_zero(p in sentence(), h in sentence()) {
            let mut lex = LexiconSet::default();
            lex.add_antonym_pair("happy", "sad", true);
            lex.add_antonym_pair("dog", "cat", true);
            let a = antonym_score(&TokenizedPair::new(&p, &h), &lex).unwrap();
            let b = antonym_score(&TokenizedPair::new(&h, &p), &lex).unwrap();
            prop_assert_eq!(a == 0.0, b == 0.0);
        }
    }
}
