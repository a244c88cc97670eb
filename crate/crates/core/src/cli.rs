//! `dyncart` command-line interface.
//!
//! Every command reads its inputs, writes its outputs under `--out` and
//! drops a `manifest.json` next to them with the resolved configuration,
//! the SHA-256 of every input file and the tool version. Settings may also
//! come from a TOML file given with `--config`; flags win over the file.
//!
//! Exit codes: 0 on success, 1 on internal failure, 2 on invalid input or
//! configuration.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{AumBand, BaselineError, DataMaps, StrategyRegistry};
use crate::dynamics::{parse_log, DynamicsLog, LogError};
use crate::features::{build_feature_vectors, FeatureError, FeatureLayout};
use crate::gmm::{read_assignment_csv, Difficulty, GmmConfig, GmmError};
use crate::heuristics::{
    profile_dataset, profile_map, read_antonyms, read_word_list, write_profiles_csv, HeuristicError, HeuristicProfile,
    LexiconSet,
};
use crate::pipeline::{characterize, PipelineError};
use crate::report::{build_report, build_splits, write_aggregates_csv, ReportError};
use crate::stats::{compare_splits, StatsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Json(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::MissingSetting { .. } | FeatureError::SettingAbsent(_) => {
                CliError::Input(format!("{e} (use --single-setting to characterize from premise+hypothesis only)"))
            }
            FeatureError::Io(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<GmmError> for CliError {
    fn from(e: GmmError) -> Self {
        match e {
            GmmError::NotPositiveDefinite(_) | GmmError::DimensionMismatch { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Features(f) => f.into(),
            PipelineError::Gmm(g) => g.into(),
            PipelineError::PersistentEmptyCluster(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<HeuristicError> for CliError {
    fn from(e: HeuristicError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io(_) | ReportError::Log(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("writing {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "dyncart", version, about = "Split a classification dataset into easy / ambiguous / hard from training dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dynamics log and print line-numbered diagnostics.
    Validate(ValidateArgs),
    /// Compute per-instance training-dynamics features.
    Features(FeaturesArgs),
    /// Fit the mixture, rank clusters and write difficulty splits.
    Characterize(CharacterizeArgs),
    /// Run the percentile selection baselines.
    Baselines(BaselinesArgs),
    /// Compute lexical heuristic measures per instance.
    Heuristics(HeuristicsArgs),
    /// Mann-Whitney U tests between classes within each split.
    Stats(StatsArgs),
    /// Per-split fractions, accuracies, class counts and heuristic aggregates.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Dynamics log (JSONL).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use premise+hypothesis features only.
    #[arg(long)]
    pub single_setting: bool,
}

#[derive(Debug, Args, Default)]
pub struct GmmArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Added to every covariance diagonal.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct LexiconArgs {
    /// Tab-separated `word<TAB>antonym` file.
    #[arg(long)]
    pub antonyms: Option<PathBuf>,
    /// One word per line.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// One word per line; replaces the default negation list.
    #[arg(long)]
    pub negations: Option<PathBuf>,
    /// Keep antonym pairs one-directional.
    #[arg(long)]
    pub no_symmetrize: bool,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gmm: GmmArgs,
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Percent of instances kept by the Data Maps baseline, by variability.
    #[arg(long)]
    pub datamaps_top_q: Option<f64>,
    /// Percentile band of the AUM baseline, as `LOWER,UPPER`.
    #[arg(long, value_parser = parse_band)]
    pub aum_band: Option<(f64, f64)>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct HeuristicsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
    /// `assignment.csv` written by `characterize`.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
    #[arg(long)]
    pub assignment: Option<PathBuf>,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LOWER,UPPER")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Settings accepted from a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub log: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub assignment: Option<PathBuf>,
    pub antonyms: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub negations: Option<PathBuf>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub n_init: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub epsilon: Option<f64>,
    pub single_setting: Option<bool>,
    pub symmetrize: Option<bool>,
    pub datamaps_top_q: Option<f64>,
    pub aum_band: Option<[f64; 2]>,
    pub methods: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("reading config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved settings, echoed into `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub log: Option<PathBuf>,
    pub assignment: Option<PathBuf>,
    pub antonyms: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub negations: Option<PathBuf>,
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub epsilon: f64,
    pub single_setting: bool,
    pub symmetrize: bool,
    pub datamaps_top_q: f64,
    pub aum_band: [f64; 2],
    pub methods: Vec<String>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    fn resolve(
        command: &str,
        common: &CommonArgs,
        gmm: Option<&GmmArgs>,
        lex: Option<&LexiconArgs>,
        assignment: Option<&PathBuf>,
        base: Option<&BaselinesArgs>,
    ) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let d = GmmConfig::default();
        let gmm_default = GmmArgs::default();
        let g = gmm.unwrap_or(&gmm_default);
        let lex_default = LexiconArgs::default();
        let l = lex.unwrap_or(&lex_default);
        let cfg = RunConfig {
            command: command.to_owned(),
            log: common.log.clone().or(file.log),
            assignment: assignment.cloned().or(file.assignment),
            antonyms: l.antonyms.clone().or(file.antonyms),
            dictionary: l.dictionary.clone().or(file.dictionary),
            negations: l.negations.clone().or(file.negations),
            k: g.k.or(file.k).unwrap_or(d.k),
            seed: g.seed.or(file.seed).unwrap_or(d.seed),
            n_init: g.n_init.or(file.n_init).unwrap_or(d.n_init),
            max_iter: g.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
            tol: g.tol.or(file.tol).unwrap_or(d.tol),
            epsilon: g.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
            single_setting: common.single_setting || file.single_setting.unwrap_or(false),
            symmetrize: !l.no_symmetrize && file.symmetrize.unwrap_or(true),
            datamaps_top_q: base.and_then(|b| b.datamaps_top_q).or(file.datamaps_top_q).unwrap_or(DataMaps::default().top_q),
            aum_band: base
                .and_then(|b| b.aum_band)
                .map(|(a, b)| [a, b])
                .or(file.aum_band)
                .unwrap_or([AumBand::default().lower_q, AumBand::default().upper_q]),
            methods: base
                .and_then(|b| b.methods.clone())
                .or(file.methods)
                .unwrap_or_else(|| vec!["datamaps".into(), "aum".into()]),
            out: common.out.clone().or(file.out),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        self.gmm_config().validate()?;
        if !(self.datamaps_top_q > 0.0 && self.datamaps_top_q <= 100.0) {
            return Err(CliError::Input(format!("--datamaps-top-q must be in (0, 100], got {}", self.datamaps_top_q)));
        }
        let [lo, hi] = self.aum_band;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(CliError::Input(format!("--aum-band needs 0 <= LOWER < UPPER <= 100, got {lo},{hi}")));
        }
        for p in [&self.log, &self.assignment, &self.antonyms, &self.dictionary, &self.negations].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Input(format!("input file {} not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn gmm_config(&self) -> GmmConfig {
        GmmConfig {
            k: self.k,
            seed: self.seed,
            n_init: self.n_init,
            max_iter: self.max_iter,
            tol: self.tol,
            epsilon: self.epsilon,
            ..GmmConfig::default()
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        if self.single_setting {
            FeatureLayout::PremiseHypothesisOnly
        } else {
            FeatureLayout::Paired
        }
    }

    fn log_path(&self) -> Result<&Path, CliError> {
        self.log.as_deref().ok_or_else(|| CliError::Input("--log is required".into()))
    }

    fn assignment_path(&self) -> Result<&Path, CliError> {
        self.assignment.as_deref().ok_or_else(|| CliError::Input("--assignment is required".into()))
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Input("--out is required".into()))
    }
}

/// Collects outputs under one directory and writes the manifest last.
struct RunDir<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl<'a> RunDir<'a> {
    fn create(dir: &'a Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
        Ok(Self { dir, outputs: Vec::new() })
    }

    fn write<F, E>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
        E: Into<CliError>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| write_err(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(Into::into)?;
        w.flush().map_err(|e| write_err(&path, e))?;
        self.outputs.push(name.to_owned());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        self.write(name, |w| -> Result<(), CliError> {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::Internal(e.to_string()))
        })
    }

    fn finish(mut self, cfg: &RunConfig) -> Result<(), CliError> {
        let mut inputs = BTreeMap::new();
        let named = [
            ("log", &cfg.log),
            ("assignment", &cfg.assignment),
            ("antonyms", &cfg.antonyms),
            ("dictionary", &cfg.dictionary),
            ("negations", &cfg.negations),
        ];
        for (name, path) in named {
            if let Some(p) = path {
                inputs.insert(name, serde_json::json!({ "path": p, "sha256": sha256_file(p)? }));
            }
        }
        self.outputs.sort();
        let manifest = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "inputs": inputs,
            "outputs": self.outputs,
        });
        self.write_json("manifest.json", &manifest)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn load_log(path: &Path) -> Result<DynamicsLog, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let log = parse_log(BufReader::new(file))?;
    if log.instances().is_empty() {
        return Err(CliError::Input(format!("{}: log contains no instances", path.display())));
    }
    Ok(log)
}

fn load_lexicons(cfg: &RunConfig) -> Result<LexiconSet, CliError> {
    let mut lex = LexiconSet::with_default_negations();
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| CliError::Input(format!("{}: {e}", p.display())));
    if let Some(p) = &cfg.antonyms {
        read_antonyms(open(p)?, &p.display().to_string(), cfg.symmetrize, &mut lex)?;
    }
    if let Some(p) = &cfg.dictionary {
        lex.dictionary = read_word_list(open(p)?)?.into_iter().collect();
    }
    if let Some(p) = &cfg.negations {
        lex.negations = read_word_list(open(p)?)?;
    }
    Ok(lex)
}

fn load_assignment(path: &Path) -> Result<BTreeMap<String, Difficulty>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let rows = read_assignment_csv(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for r in rows {
        if map.insert(r.instance_id.clone(), r.difficulty).is_some() {
            return Err(CliError::Input(format!("{}: duplicate instance {:?}", path.display(), r.instance_id)));
        }
    }
    Ok(map)
}

fn profiles_for(log: &DynamicsLog, cfg: &RunConfig) -> Result<BTreeMap<String, HeuristicProfile>, CliError> {
    let lex = load_lexicons(cfg)?;
    Ok(profile_map(&profile_dataset(log.instances(), &lex)?))
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let file = File::open(&args.log).map_err(|e| CliError::Input(format!("{}: {e}", args.log.display())))?;
    match parse_log(BufReader::new(file)) {
        Ok(log) => {
            let settings: Vec<String> = log
                .epochs_per_setting()
                .iter()
                .map(|(s, e)| format!("{}={e}", s.as_str()))
                .collect();
            println!(
                "ok: {} instances, {} labels, epochs {}",
                log.instances().len(),
                log.label_space().len(),
                settings.join(" ")
            );
            Ok(())
        }
        Err(e) if !e.diagnostics().is_empty() => {
            for d in e.diagnostics() {
                eprintln!("{}: {d}", args.log.display());
            }
            Err(CliError::Input(format!("{} problem(s) found", e.diagnostics().len())))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_features(cfg: &RunConfig) -> Result<(), CliError> {
    let log = load_log(cfg.log_path()?)?;
    let features = build_feature_vectors(&log, cfg.layout())?;
    let mut run = RunDir::create(cfg.out_dir()?)?;
    run.write("features.csv", |w| features.write_csv(w))?;
    run.finish(cfg)
}

fn cmd_characterize(cfg: &RunConfig) -> Result<(), CliError> {
    let log = load_log(cfg.log_path()?)?;
    let result = characterize(&log, cfg.layout(), &cfg.gmm_config())?;
    let splits = build_splits(&result.assignment.difficulty_map(), log.instances())?;
    let mut run = RunDir::create(cfg.out_dir()?)?;
    run.write("features.csv", |w| result.features.write_csv(w))?;
    run.write("assignment.csv", |w| result.assignment.write_csv(w))?;
    run.write_json(
        "model.json",
        &serde_json::json!({
            "model": result.fit.model,
            "clusters": result.ranking.clusters,
            "restarts": result.fit.restarts,
            "refits": result.refits,
            "warnings": result.fit.warnings,
            "scaling": {
                "columns": result.features.layout.column_names(),
                "means": result.scaled.column_means,
                "stds": result.scaled.column_stds,
            },
        }),
    )?;
    for d in Difficulty::ALL {
        run.write(&format!("{d}.jsonl"), |w| splits.write_jsonl(d, w))?;
    }
    let [e, a, h] = splits.sizes();
    println!("easy {e}, ambiguous {a}, hard {h}");
    run.finish(cfg)
}

fn cmd_baselines(cfg: &RunConfig) -> Result<(), CliError> {
    let registry = StrategyRegistry::with_baselines(
        DataMaps { top_q: cfg.datamaps_top_q },
        AumBand { lower_q: cfg.aum_band[0], upper_q: cfg.aum_band[1] },
    );
    let strategies = cfg.methods.iter().map(|m| registry.get(m)).collect::<Result<Vec<_>, _>>()?;
    let log = load_log(cfg.log_path()?)?;
    let features = build_feature_vectors(&log, cfg.layout())?;
    let mut run = RunDir::create(cfg.out_dir()?)?;
    for s in strategies {
        let sel = s.select(&features)?;
        run.write(&format!("{}.ids", s.name()), |w| sel.write_ids(w))?;
        run.write_json(&format!("{}.json", s.name()), &sel.sidecar_json())?;
        println!("{}: {} of {}", s.name(), sel.selected.len(), sel.total);
    }
    run.finish(cfg)
}

fn cmd_heuristics(cfg: &RunConfig) -> Result<(), CliError> {
    let log = load_log(cfg.log_path()?)?;
    let lex = load_lexicons(cfg)?;
    let profiles = profile_dataset(log.instances(), &lex)?;
    let mut run = RunDir::create(cfg.out_dir()?)?;
    run.write("heuristics.csv", |w| write_profiles_csv(&profiles, w))?;
    run.finish(cfg)
}

fn cmd_stats(cfg: &RunConfig) -> Result<(), CliError> {
    let log = load_log(cfg.log_path()?)?;
    let difficulties = load_assignment(cfg.assignment_path()?)?;
    build_splits(&difficulties, log.instances())?;
    let profiles = profiles_for(&log, cfg)?;
    let golds = log.instances().iter().map(|m| (m.instance_id.clone(), m.gold_label.clone())).collect();
    let report = compare_splits(&profiles, &difficulties, &golds, log.label_space().labels())?;
    let mut run = RunDir::create(cfg.out_dir()?)?;
    run.write("significance.csv", |w| report.write_csv(w))?;
    run.write_json("significance.json", &report.summary_json())?;
    println!("{} tests", report.m);
    run.finish(cfg)
}

fn cmd_report(cfg: &RunConfig) -> Result<(), CliError> {
    let log = load_log(cfg.log_path()?)?;
    let difficulties = load_assignment(cfg.assignment_path()?)?;
    let splits = build_splits(&difficulties, log.instances())?;
    let profiles = profiles_for(&log, cfg)?;
    let report = build_report(&log, &difficulties, Some(&profiles))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let mut run = RunDir::create(cfg.out_dir()?)?;
    run.write_json("report.json", &report)?;
    run.write("split_summary.csv", |w| report.write_summary_csv(w))?;
    run.write("class_counts.csv", |w| -> Result<(), CliError> {
        let golds = log.instances().iter().map(|m| (m.instance_id.clone(), m.gold_label.clone())).collect();
        crate::report::class_counts(&difficulties, &golds, log.label_space().labels())?.write_csv(w)?;
        Ok(())
    })?;
    run.write("heuristic_aggregates.csv", |w| {
        write_aggregates_csv(report.heuristics.as_deref().unwrap_or_default(), w)
    })?;
    for d in Difficulty::ALL {
        run.write(&format!("{d}.jsonl"), |w| splits.write_jsonl(d, w))?;
    }
    run.finish(cfg)
}

/// Execute an already-parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Features(a) => cmd_features(&RunConfig::resolve("features", &a.common, None, None, None, None)?),
        Command::Characterize(a) => {
            cmd_characterize(&RunConfig::resolve("characterize", &a.common, Some(&a.gmm), None, None, None)?)
        }
        Command::Baselines(a) => cmd_baselines(&RunConfig::resolve("baselines", &a.common, None, None, None, Some(a))?),
        Command::Heuristics(a) => {
            cmd_heuristics(&RunConfig::resolve("heuristics", &a.common, None, Some(&a.lexicons), None, None)?)
        }
        Command::Stats(a) => cmd_stats(&RunConfig::resolve(
            "stats",
            &a.common,
            None,
            Some(&a.lexicons),
            a.assignment.as_ref(),
            None,
        )?),
        Command::Report(a) => cmd_report(&RunConfig::resolve(
            "report",
            &a.common,
            None,
            Some(&a.lexicons),
            a.assignment.as_ref(),
            None,
        )?),
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
