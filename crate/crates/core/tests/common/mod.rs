#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const LABELS: [&str; 3] = ["entailment", "neutral", "contradiction"];

pub fn header(labels: &[&str], epochs: &[(&str, u32)]) -> String {
    let epochs: serde_json::Map<String, serde_json::Value> =
        epochs.iter().map(|(s, e)| ((*s).to_owned(), json!(e))).collect();
    json!({ "kind": "header", "labels": labels, "epochs": epochs }).to_string()
}

pub fn instance(id: &str, premise: &str, hypothesis: &str, gold: &str, pred: Option<&str>) -> String {
    let mut v = json!({ "kind": "instance", "id": id, "premise": premise, "hypothesis": hypothesis, "gold": gold });
    if let Some(p) = pred {
        v["reference_prediction"] = json!(p);
    }
    v.to_string()
}

pub fn record(id: &str, setting: &str, epoch: u32, logits: &[f64]) -> String {
    json!({ "kind": "record", "id": id, "setting": setting, "epoch": epoch, "logits": logits }).to_string()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dyncart")
}

pub fn run_cli<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin()).args(args).env("RUST_LOG", "error").output().expect("spawn dyncart")
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Synthetic log with three behavior groups, identical in both settings:
/// group 0 gold probability near 0.95 with variability near 0.02, group 1
/// near 0.5 with variability near 0.25, group 2 near 0.1 and never correct.
pub struct GroupFixture {
    pub text: String,
    pub group: BTreeMap<String, usize>,
    pub gold: BTreeMap<String, String>,
    pub pred: BTreeMap<String, String>,
}

const PREMISES: [&str; 4] = [
    "A man is playing a guitar on stage.",
    "Two dogs run through the snow.",
    "A woman reads a book in the park.",
    "Children are not playing outside.",
];
const HYPOTHESES: [&str; 4] = [
    "A man plays music.",
    "The animals are asleep.",
    "A woman is outside.",
    "Kids play in the yard.",
];

/// Gold logit giving probability `p` when the other two logits are 0.
fn gold_logit(p: f64) -> f64 {
    (2.0 * p / (1.0 - p)).ln()
}

pub fn three_group_fixture(seed: u64, sizes: [usize; 3], epochs: u32) -> GroupFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = vec![header(&LABELS, &[("ph", epochs), ("h", epochs)])];
    let mut fx = GroupFixture { text: String::new(), group: BTreeMap::new(), gold: BTreeMap::new(), pred: BTreeMap::new() };
    let targets = [(0.95, 0.02), (0.5, 0.25), (0.1, 0.02)];
    for (g, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let id = format!("g{g}-{i:04}");
            let gold_idx = i % 3;
            let gold = LABELS[gold_idx];
            let correct = match g {
                0 => true,
                1 => i % 4 != 3,
                _ => i % 2 == 0,
            };
            let pred = if correct { gold } else { LABELS[(gold_idx + 1) % 3] };
            lines.push(instance(&id, PREMISES[i % 4], HYPOTHESES[(i / 4) % 4], gold, Some(pred)));
            fx.group.insert(id.clone(), g);
            fx.gold.insert(id.clone(), gold.to_owned());
            fx.pred.insert(id.clone(), pred.to_owned());
            let (center, spread) = targets[g];
            for setting in ["ph", "h"] {
                for e in 1..=epochs {
                    let sign = if e % 2 == 1 { 1.0 } else { -1.0 };
                    let mut logits: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.03..0.03)).collect();
                    logits[gold_idx] += gold_logit(center + sign * spread);
                    lines.push(record(&id, setting, e, &logits));
                }
            }
        }
    }
    fx.text = lines.join("\n") + "\n";
    fx
}
