//! Experiment orchestration: versioned configs, staged runs with manifests,
//! and report rendering.
//!
//! A run owns one output directory. The manifest is written (status
//! `running`) before any result file, updated as artifacts appear, and
//! finalized at the end; failures leave a `FAILED` marker naming the stage.
//! Timestamps live only in the manifest so result files are byte-identical
//! across reruns of the same config + seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    default_threshold_grid, load_mlc, load_msp, save_mlc, save_msp, train_mlc, train_msp,
    tune_threshold, MspConfig, WordVocab,
};
use crate::corpus::{apply_split, load_dataset, of_split, save_dataset, DatasetId, SentenceRecord, Split};
use crate::embedder::{PrecomputedVictim, ToyAdditive, ToyBlind, ToyLeaky, Victim};
use crate::error::{Error, Result};
use crate::geia::{
    load_attacker, save_attacker, train_attacker, DecodeParams, DecoderConfig, TrainConfig,
};
use crate::leakage::{audit, AuditReport};
use crate::metrics::{compute_bundle, LmScorer, MetricsBundle, UniformScorer};
use crate::reasoner::{
    generate_triples, load_triples, save_triples, MaskedTriple, ReasonerConfig, ReasonerTransport,
};
use crate::synthetic::{bag_sentences, BagConfig};
use crate::textops::{DictionaryNer, EntityLabel, stopword_set, WordTokenizer};

pub const CONFIG_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Geia,
    Mlc,
    Msp,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Geia => "geia",
            Self::Mlc => "mlc",
            Self::Msp => "msp",
        }
    }
}

/// Where the sentences come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Jsonl {
        path: PathBuf,
        #[serde(default = "default_dataset_id")]
        dataset: DatasetId,
    },
    SyntheticBag {
        vocab_size: usize,
        sentences: usize,
        min_len: usize,
        max_len: usize,
        canonical: bool,
        gen_seed: u64,
    },
}

fn default_dataset_id() -> DatasetId {
    DatasetId::Pc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    /// Re-split ratios (train, dev, test); `None` keeps stored splits.
    #[serde(default)]
    pub ratios: Option<(u8, u8, u8)>,
    #[serde(default)]
    pub split_seed: Option<u64>,
}

/// Victim construction recipe. Toy victims derive their token vectors from
/// (vocab, dim, seed); the vocabulary may be pinned in the config or taken
/// from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VictimSpec {
    ToyAdditive { victim_id: String, dim: usize, seed: u64, #[serde(default)] vocab: VocabSource },
    ToyBlind { victim_id: String, dim: usize, seed: u64, #[serde(default)] vocab: VocabSource },
    ToyLeaky {
        victim_id: String,
        dim: usize,
        seed: u64,
        #[serde(default)]
        vocab: VocabSource,
        /// JSONL of {"masked": …, "original": …} side-channel pairs.
        leak_pairs: PathBuf,
    },
    Precomputed { victim_id: String, path: PathBuf },
}

impl VictimSpec {
    pub fn victim_id(&self) -> &str {
        match self {
            Self::ToyAdditive { victim_id, .. }
            | Self::ToyBlind { victim_id, .. }
            | Self::ToyLeaky { victim_id, .. }
            | Self::Precomputed { victim_id, .. } => victim_id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabSource {
    #[default]
    FromTrainSplit,
    Words(Vec<String>),
}

/// Optimization knobs without a seed: the experiment seed governs data
/// shuffling, weight init, and decoding alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 64, learning_rate: 3e-4 }
    }
}

impl OptimizerConfig {
    fn with_seed(self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    /// Dictionary entities for the NERR metric (empty → NERR reported as 0).
    #[serde(default)]
    pub ner_entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub attack: AttackKind,
    pub victim: VictimSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub train: OptimizerConfig,
    /// Generative-attacker architecture (ignored by MLC/MSP).
    #[serde(default)]
    pub decoder: DecoderConfig,
    /// MSP recurrent settings (ignored by the others).
    #[serde(default)]
    pub msp: MspConfig,
    /// Beam settings for inversion (GEIA only).
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub metrics: MetricOptions,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if let Some((a, b, c)) = self.data.ratios {
            if a as u32 + b as u32 + c as u32 != 100 {
                return Err(Error::Config("split ratios must sum to 100".into()));
            }
        }
        Ok(())
    }
}

pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub status: RunStatus,
    pub failed_stage: Option<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub input_checksums: BTreeMap<String, String>,
    pub started_at_epoch_s: u64,
    pub finished_at_epoch_s: Option<u64>,
    pub artifacts: Vec<String>,
    /// Stage-reported values (tuned threshold, losses, …).
    pub extras: BTreeMap<String, serde_json::Value>,
}

fn now_epoch_s() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn file_checksum(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Handle on a run directory; keeps the manifest on disk current.
pub struct RunContext {
    pub dir: PathBuf,
    manifest: RunManifest,
}

impl RunContext {
    /// Create the run directory and write the initial manifest — before any
    /// result file exists.
    pub fn start(
        dir: impl AsRef<Path>,
        seed: u64,
        config: serde_json::Value,
        input_checksums: BTreeMap<String, String>,
    ) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        if dir.join("manifest.json").exists() {
            return Err(Error::Run(format!(
                "{} already contains a run (manifest.json exists)",
                dir.display()
            )));
        }
        let manifest = RunManifest {
            schema_version: MANIFEST_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Running,
            failed_stage: None,
            seed,
            config,
            input_checksums,
            started_at_epoch_s: now_epoch_s(),
            finished_at_epoch_s: None,
            artifacts: Vec::new(),
            extras: BTreeMap::new(),
        };
        let ctx = Self { dir, manifest };
        ctx.write_manifest()?;
        Ok(ctx)
    }

    fn write_manifest(&self) -> Result<()> {
        std::fs::write(
            self.dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        Ok(())
    }

    pub fn add_artifact(&mut self, name: &str) -> Result<()> {
        self.manifest.artifacts.push(name.to_string());
        self.write_manifest()
    }

    pub fn extra(&mut self, key: &str, value: serde_json::Value) -> Result<()> {
        self.manifest.extras.insert(key.to_string(), value);
        self.write_manifest()
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.status = RunStatus::Complete;
        self.manifest.finished_at_epoch_s = Some(now_epoch_s());
        self.write_manifest()?;
        Ok(self.dir)
    }

    /// Record a stage failure: manifest status + `FAILED` marker file.
    pub fn fail(mut self, stage: &str, err: &Error) -> Result<()> {
        self.manifest.status = RunStatus::Failed;
        self.manifest.failed_stage = Some(stage.to_string());
        self.manifest.finished_at_epoch_s = Some(now_epoch_s());
        self.write_manifest()?;
        std::fs::write(self.dir.join("FAILED"), format!("{stage}: {err}\n"))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Data + victim assembly
// ---------------------------------------------------------------------------

/// Load or generate the corpus and apply splits per the config.
pub fn build_data(spec: &DataSpec, seed: u64) -> Result<Vec<SentenceRecord>> {
    let records = match &spec.source {
        DataSource::Jsonl { path, dataset } => load_dataset(path, *dataset)?,
        DataSource::SyntheticBag { vocab_size, sentences, min_len, max_len, canonical, gen_seed } => {
            let (_, records) = bag_sentences(&BagConfig {
                vocab_size: *vocab_size,
                sentences: *sentences,
                min_len: *min_len,
                max_len: *max_len,
                canonical: *canonical,
                seed: *gen_seed,
            });
            records
        }
    };
    match spec.ratios {
        Some(ratios) => apply_split(records, ratios, spec.split_seed.unwrap_or(seed)),
        None => Ok(records),
    }
}

#[derive(Debug, Deserialize)]
struct LeakPair {
    masked: String,
    original: String,
}

fn load_leak_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: LeakPair = serde_json::from_str(line)
            .map_err(|e| Error::MalformedLine { line: i + 1, msg: e.to_string() })?;
        out.push((pair.masked, pair.original));
    }
    Ok(out)
}

fn vocab_words(source: &VocabSource, train_records: &[SentenceRecord]) -> Vec<String> {
    match source {
        VocabSource::Words(w) => w.clone(),
        VocabSource::FromTrainSplit => {
            WordVocab::from_records(train_records).words().to_vec()
        }
    }
}

/// Construct the configured victim. Toy vocabularies defaulting to the train
/// split keep the whole experiment self-contained.
pub fn build_victim(spec: &VictimSpec, train_records: &[SentenceRecord]) -> Result<Box<dyn Victim>> {
    match spec {
        VictimSpec::ToyAdditive { victim_id, dim, seed, vocab } => Ok(Box::new(ToyAdditive::new(
            victim_id,
            &vocab_words(vocab, train_records),
            *dim,
            *seed,
        ))),
        VictimSpec::ToyBlind { victim_id, dim, seed, vocab } => Ok(Box::new(ToyBlind::new(
            victim_id,
            &vocab_words(vocab, train_records),
            *dim,
            *seed,
        ))),
        VictimSpec::ToyLeaky { victim_id, dim, seed, vocab, leak_pairs } => {
            let pairs = load_leak_pairs(leak_pairs)?;
            Ok(Box::new(ToyLeaky::new(
                victim_id,
                &vocab_words(vocab, train_records),
                *dim,
                *seed,
                pairs,
            )))
        }
        VictimSpec::Precomputed { victim_id, path } => {
            Ok(Box::new(PrecomputedVictim::load(victim_id, path)?))
        }
    }
}

fn input_checksums(cfg: &ExperimentConfig) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    match &cfg.data.source {
        DataSource::Jsonl { path, .. } => {
            if !path.exists() {
                return Err(Error::Config(format!("data file {} not found", path.display())));
            }
            out.insert(format!("data:{}", path.display()), file_checksum(path)?);
        }
        DataSource::SyntheticBag { .. } => {
            out.insert(
                "data:synthetic".into(),
                sha256_hex(serde_json::to_string(&cfg.data)?.as_bytes()),
            );
        }
    }
    if let VictimSpec::ToyLeaky { leak_pairs, .. } = &cfg.victim {
        if !leak_pairs.exists() {
            return Err(Error::Config(format!(
                "leak-pairs file {} not found",
                leak_pairs.display()
            )));
        }
        out.insert(format!("leak_pairs:{}", leak_pairs.display()), file_checksum(leak_pairs)?);
    }
    if let VictimSpec::Precomputed { path, .. } = &cfg.victim {
        if !path.exists() {
            return Err(Error::Config(format!("embedding file {} not found", path.display())));
        }
        out.insert(format!("embeddings:{}", path.display()), file_checksum(path)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Attack experiment stages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRow {
    pub id: String,
    pub gold: String,
    pub prediction: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_generated(path: &Path) -> Result<Vec<GeneratedRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Train the configured attacker and checkpoint it under `ctx.dir/attacker`.
fn stage_train(cfg: &ExperimentConfig, ctx: &mut RunContext, records: &[SentenceRecord], victim: &dyn Victim) -> Result<()> {
    let train_records = of_split(records, Split::Train);
    let dev_records = of_split(records, Split::Dev);
    if train_records.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let ckpt = ctx.dir.join("attacker");
    let train_cfg = cfg.train.with_seed(cfg.seed);
    match cfg.attack {
        AttackKind::Geia => {
            let texts: Vec<String> = train_records.iter().map(|r| r.text.clone()).collect();
            let tokenizer = WordTokenizer::from_texts(texts.iter().map(|s| s.as_str()));
            let (model, log) =
                train_attacker(&train_records, victim, tokenizer, cfg.decoder, train_cfg, false)?;
            save_attacker(&ckpt, &model)?;
            ctx.extra("train_log", serde_json::to_value(&log)?)?;
        }
        AttackKind::Mlc => {
            let (mut model, log) = train_mlc(&train_records, victim, train_cfg)?;
            if dev_records.is_empty() {
                ctx.extra("threshold_note", serde_json::Value::String(
                    "dev split empty; default threshold 0.5 kept".into(),
                ))?;
            } else {
                let t = tune_threshold(&model, &dev_records, victim, &default_threshold_grid())?;
                model.threshold = t;
            }
            save_mlc(&ckpt, &model)?;
            ctx.extra("threshold", serde_json::to_value(model.threshold)?)?;
            ctx.extra("train_log", serde_json::to_value(&log)?)?;
        }
        AttackKind::Msp => {
            let (model, log) = train_msp(&train_records, victim, cfg.msp, train_cfg)?;
            save_msp(&ckpt, &model)?;
            ctx.extra("train_log", serde_json::to_value(&log)?)?;
            ctx.extra("msp_policy", serde_json::Value::String(
                crate::baselines::MSP_POLICY.into(),
            ))?;
        }
    }
    ctx.add_artifact("attacker")?;
    Ok(())
}

/// Invert every test-split embedding with the checkpointed attacker.
fn stage_attack(
    cfg: &ExperimentConfig,
    ctx: &mut RunContext,
    records: &[SentenceRecord],
    victim: &dyn Victim,
    ckpt: &Path,
) -> Result<()> {
    let test_records = of_split(records, Split::Test);
    if test_records.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let texts: Vec<&str> = test_records.iter().map(|r| r.text.as_str()).collect();
    let embeddings = victim.embed_batch(&texts)?;
    let mut rows = Vec::with_capacity(test_records.len());
    let check_victim = |ckpt_victim: &str| -> Result<()> {
        let configured = &victim.descriptor().victim_id;
        if ckpt_victim != configured {
            return Err(Error::Run(format!(
                "checkpoint victim {ckpt_victim:?} does not match configured victim {configured:?}"
            )));
        }
        Ok(())
    };
    match cfg.attack {
        AttackKind::Geia => {
            let model = load_attacker(ckpt)?;
            check_victim(&model.victim_id)?;
            for (r, e) in test_records.iter().zip(embeddings.iter()) {
                let inv = model.invert(e, &cfg.decode)?;
                rows.push(GeneratedRow {
                    id: r.id.clone(),
                    gold: r.text.clone(),
                    prediction: inv.text,
                    logprob: Some(inv.logprob),
                });
            }
        }
        AttackKind::Mlc => {
            let model = load_mlc(ckpt)?;
            check_victim(&model.victim_id)?;
            for (r, e) in test_records.iter().zip(embeddings.iter()) {
                rows.push(GeneratedRow {
                    id: r.id.clone(),
                    gold: r.text.clone(),
                    prediction: model.predict(e)?.join(" "),
                    logprob: None,
                });
            }
        }
        AttackKind::Msp => {
            let model = load_msp(ckpt)?;
            check_victim(&model.victim_id)?;
            for (r, e) in test_records.iter().zip(embeddings.iter()) {
                rows.push(GeneratedRow {
                    id: r.id.clone(),
                    gold: r.text.clone(),
                    prediction: model.predict(e)?.join(" "),
                    logprob: None,
                });
            }
        }
    }
    write_jsonl(&ctx.dir.join("generated.jsonl"), &rows)?;
    ctx.add_artifact("generated.jsonl")?;
    Ok(())
}

/// The metrics file: bundle plus identification of how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub attack: String,
    pub victim_id: String,
    pub dataset: String,
    pub granularity: String,
    pub ppl_scorer: String,
    pub ppl_vocab_size: usize,
    pub bundle: MetricsBundle,
}

fn stage_evaluate(
    cfg: &ExperimentConfig,
    ctx: &mut RunContext,
    records: &[SentenceRecord],
    victim: &dyn Victim,
    generated: &Path,
) -> Result<MetricsReport> {
    let rows = read_generated(generated)?;
    let predicted: Vec<String> = rows.iter().map(|r| r.prediction.clone()).collect();
    let gold: Vec<String> = rows.iter().map(|r| r.gold.clone()).collect();
    let test_texts: Vec<String> = of_split(records, Split::Test)
        .iter()
        .map(|r| r.text.clone())
        .collect();
    let train_records = of_split(records, Split::Train);
    let vocab_size = WordVocab::from_records(&train_records).len().max(2);
    let scorer = UniformScorer { vocab_size };
    let ner = DictionaryNer::new(
        cfg.metrics
            .ner_entities
            .iter()
            .map(|e| (e.clone(), EntityLabel::Entity)),
    );
    let stopwords: std::collections::BTreeSet<String> =
        stopword_set()?.into_iter().map(str::to_string).collect();
    let bundle = compute_bundle(&predicted, &gold, &test_texts, victim, &scorer, &ner, &stopwords)?;
    let dataset = records
        .first()
        .map(|r| format!("{:?}", r.dataset).to_lowercase())
        .unwrap_or_else(|| "unknown".into());
    let report = MetricsReport {
        attack: cfg.attack.name().to_string(),
        victim_id: victim.descriptor().victim_id.clone(),
        dataset,
        granularity: "word".into(),
        ppl_scorer: scorer.id().to_string(),
        ppl_vocab_size: vocab_size,
        bundle,
    };
    std::fs::write(
        ctx.dir.join("metrics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    ctx.add_artifact("metrics.json")?;
    Ok(report)
}

/// Which pipeline stages a run executes, and where cross-run artifacts live.
#[derive(Debug, Clone, Default)]
pub struct RunPlan {
    pub train: bool,
    pub attack: bool,
    pub evaluate: bool,
    /// Checkpoint consumed by the attack stage when training ran elsewhere.
    pub ckpt_dir: Option<PathBuf>,
    /// Predictions consumed by the evaluate stage when inversion ran elsewhere.
    pub generated: Option<PathBuf>,
}

impl RunPlan {
    pub fn full() -> Self {
        Self { train: true, attack: true, evaluate: true, ckpt_dir: None, generated: None }
    }
}

/// Execute the planned stages in `cfg.output_dir` under one manifest.
pub fn run_plan(cfg: &ExperimentConfig, plan: &RunPlan) -> Result<PathBuf> {
    cfg.validate()?;
    if !(plan.train || plan.attack || plan.evaluate) {
        return Err(Error::Config("plan selects no stages".into()));
    }
    let checksums = input_checksums(cfg)?;
    let mut ctx = RunContext::start(
        &cfg.output_dir,
        cfg.seed,
        serde_json::to_value(cfg)?,
        checksums,
    )?;

    macro_rules! stage {
        ($name:expr, $body:expr) => {
            match $body {
                Ok(v) => v,
                Err(e) => {
                    let msg = e.to_string();
                    ctx.fail($name, &e)?;
                    return Err(Error::Run(format!("stage {} failed: {msg}", $name)));
                }
            }
        };
    }

    let records = stage!("load-data", build_data(&cfg.data, cfg.seed));
    let train_records = of_split(&records, Split::Train);
    let victim = stage!("build-victim", build_victim(&cfg.victim, &train_records));
    if plan.train {
        stage!("train", stage_train(cfg, &mut ctx, &records, victim.as_ref()));
    }
    if plan.attack {
        let ckpt = plan.ckpt_dir.clone().unwrap_or_else(|| ctx.dir.join("attacker"));
        stage!("attack", stage_attack(cfg, &mut ctx, &records, victim.as_ref(), &ckpt));
    }
    if plan.evaluate {
        let generated = plan
            .generated
            .clone()
            .unwrap_or_else(|| ctx.dir.join("generated.jsonl"));
        stage!(
            "evaluate",
            stage_evaluate(cfg, &mut ctx, &records, victim.as_ref(), &generated)
        );
    }
    ctx.finish()
}

/// End-to-end attack experiment: train → invert test split → evaluate.
pub fn run_attack_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    run_plan(cfg, &RunPlan::full())
}

// ---------------------------------------------------------------------------
// Leakage audit runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRunConfig {
    pub version: u32,
    /// JSONL of masked triples (from the masking pipeline).
    pub triples_path: PathBuf,
    /// Attacker checkpoint directory.
    pub attacker_dir: PathBuf,
    pub victim: VictimSpec,
    /// Vocabulary for toy victims (audits have no train split to borrow).
    #[serde(default)]
    pub vocab_words: Vec<String>,
    pub output_dir: PathBuf,
}

impl AuditRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !self.triples_path.exists() {
            return Err(Error::Config(format!(
                "triples file {} not found",
                self.triples_path.display()
            )));
        }
        if !self.attacker_dir.join("attacker.json").exists() {
            return Err(Error::Config(format!(
                "attacker checkpoint {} not found",
                self.attacker_dir.display()
            )));
        }
        Ok(())
    }
}

pub fn load_audit_config(path: impl AsRef<Path>) -> Result<AuditRunConfig> {
    let cfg: AuditRunConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(cfg)
}

/// Run the four-cell leakage audit from persisted artifacts.
pub fn run_leakage_audit(cfg: &AuditRunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let mut checksums = BTreeMap::new();
    checksums.insert(
        format!("triples:{}", cfg.triples_path.display()),
        file_checksum(&cfg.triples_path)?,
    );
    checksums.insert(
        "attacker:weights".into(),
        file_checksum(cfg.attacker_dir.join("weights.bin"))?,
    );
    let mut ctx = RunContext::start(&cfg.output_dir, 0, serde_json::to_value(cfg)?, checksums)?;

    macro_rules! stage {
        ($name:expr, $body:expr) => {
            match $body {
                Ok(v) => v,
                Err(e) => {
                    let msg = e.to_string();
                    ctx.fail($name, &e)?;
                    return Err(Error::Run(format!("stage {} failed: {msg}", $name)));
                }
            }
        };
    }

    let triples = stage!("load-triples", load_triples(&cfg.triples_path));
    let attacker = stage!("load-attacker", load_attacker(&cfg.attacker_dir));
    let seed_records: Vec<SentenceRecord> = Vec::new();
    let spec = match (&cfg.victim, cfg.vocab_words.is_empty()) {
        (v, true) => v.clone(),
        (v, false) => {
            // pin the configured vocabulary onto the toy spec
            let mut v = v.clone();
            let words = VocabSource::Words(cfg.vocab_words.clone());
            match &mut v {
                VictimSpec::ToyAdditive { vocab, .. }
                | VictimSpec::ToyBlind { vocab, .. }
                | VictimSpec::ToyLeaky { vocab, .. } => *vocab = words,
                VictimSpec::Precomputed { .. } => {}
            }
            v
        }
    };
    let victim = stage!("build-victim", build_victim(&spec, &seed_records));
    let report = stage!("audit", audit(&triples, &attacker, victim.as_ref()));
    stage!(
        "write-report",
        std::fs::write(
            ctx.dir.join("audit.json"),
            serde_json::to_string_pretty(&report).map_err(Error::from)?,
        )
        .map_err(Error::from)
    );
    ctx.add_artifact("audit.json")?;
    ctx.finish()
}

// ---------------------------------------------------------------------------
// Masking runs (offline: scripted or replayed transports)
// ---------------------------------------------------------------------------

/// Generate triples for a sentence file and persist them plus the rejection
/// log. Returns (triples written, rejections).
pub fn run_masking(
    records: &[SentenceRecord],
    reasoner_cfg: &ReasonerConfig,
    transport: &mut dyn ReasonerTransport,
    out_triples: impl AsRef<Path>,
    out_rejections: impl AsRef<Path>,
) -> Result<(usize, usize)> {
    let outcome = generate_triples(records, reasoner_cfg, transport)?;
    let kept: Vec<MaskedTriple> = outcome.triples.into_iter().flatten().collect();
    save_triples(out_triples, &kept)?;
    std::fs::write(
        out_rejections,
        serde_json::to_string_pretty(&outcome.log)?,
    )?;
    Ok((kept.len(), outcome.log.rejected.len()))
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderedReport {
    pub text: String,
    pub attack_csv: Option<String>,
    pub audit_csv: Option<String>,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.2}")
}

/// Render attack-metric rows and audit grids from finished run directories.
pub fn render_report(run_dirs: &[PathBuf]) -> Result<RenderedReport> {
    if run_dirs.is_empty() {
        return Ok(RenderedReport {
            text: "no runs\n".to_string(),
            attack_csv: None,
            audit_csv: None,
        });
    }
    let mut schema: Option<u32> = None;
    let mut attack_rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut audit_rows: Vec<(String, AuditReport)> = Vec::new();
    for dir in run_dirs {
        let manifest_path = dir.join("manifest.json");
        let manifest: RunManifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path)
                .map_err(|e| Error::Run(format!("{}: {e}", manifest_path.display())))?,
        )?;
        match schema {
            None => schema = Some(manifest.schema_version),
            Some(v) if v != manifest.schema_version => {
                return Err(Error::Run(format!(
                    "mixed manifest schema versions {v} and {}",
                    manifest.schema_version
                )));
            }
            Some(_) => {}
        }
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let metrics_path = dir.join("metrics.json");
        if metrics_path.exists() {
            let report: MetricsReport =
                serde_json::from_str(&std::fs::read_to_string(metrics_path)?)?;
            attack_rows.push((name.clone(), report));
        }
        let audit_path = dir.join("audit.json");
        if audit_path.exists() {
            let report: AuditReport = serde_json::from_str(&std::fs::read_to_string(audit_path)?)?;
            audit_rows.push((name, report));
        }
    }

    let mut text = String::new();
    let mut attack_csv = None;
    let mut audit_csv = None;

    if !attack_rows.is_empty() {
        text.push_str("## Attack metrics\n\n");
        text.push_str(
            "run | attack | victim | dataset | P | R | F1 | SWR | dSWR | NERR | ES | PPL | R1 | RL | B1 | B2 | B4\n",
        );
        text.push_str("--- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | ---\n");
        let mut csv = String::from(
            "run,attack,victim,dataset,precision,recall,f1,swr,swr_diff_vs_test,nerr,es,ppl,rouge1,rougeL,bleu1,bleu2,bleu4\n",
        );
        for (name, r) in &attack_rows {
            let b = &r.bundle;
            text.push_str(&format!(
                "{} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {}\n",
                name,
                r.attack,
                r.victim_id,
                r.dataset,
                fmt_f(b.precision),
                fmt_f(b.recall),
                fmt_f(b.f1),
                fmt_f(b.swr),
                fmt_f(b.swr_diff_vs_test),
                fmt_f(b.nerr),
                fmt_f(b.es),
                fmt_f(b.ppl),
                fmt_f(b.rouge1),
                fmt_f(b.rouge_l),
                fmt_f(b.bleu1),
                fmt_f(b.bleu2),
                fmt_f(b.bleu4),
            ));
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                name,
                r.attack,
                r.victim_id,
                r.dataset,
                b.precision,
                b.recall,
                b.f1,
                b.swr,
                b.swr_diff_vs_test,
                b.nerr,
                b.es,
                b.ppl,
                b.rouge1,
                b.rouge_l,
                b.bleu1,
                b.bleu2,
                b.bleu4,
            ));
        }
        text.push('\n');
        attack_csv = Some(csv);
    }

    if !audit_rows.is_empty() {
        text.push_str("## Leakage audits\n\n");
        let mut csv = String::from(
            "run,victim,reasoner,aggregation,condition,mean_orig,mean_sim,percent_diff,t,p,n_included,n_excluded\n",
        );
        for (name, r) in &audit_rows {
            text.push_str(&format!(
                "run {name}: victim {} | reasoner {} | {} triples, {} scored\n",
                r.victim_id, r.reasoner_id, r.n_triples, r.n_scored
            ));
            text.push_str(
                "aggregation | condition | orig | sim | %diff | t | p | n\n--- | --- | --- | --- | --- | --- | --- | ---\n",
            );
            for (key, cell) in &r.cells {
                let (agg, cond) = key.split_once('/').unwrap_or((key.as_str(), ""));
                let t_s = cell
                    .t_statistic
                    .map(|t| format!("{t:.3}"))
                    .unwrap_or_else(|| "-".into());
                let p_s = match cell.p_value.value() {
                    Some(p) => format!("{p:.4}"),
                    None => "NOT_COMPUTABLE".into(),
                };
                text.push_str(&format!(
                    "{agg} | {cond} | {} | {} | {:+.2}% | {t_s} | {p_s} | {}\n",
                    fmt_f(cell.mean_orig),
                    fmt_f(cell.mean_sim),
                    cell.percent_diff,
                    cell.n_included,
                ));
                csv.push_str(&format!(
                    "{name},{},{},{agg},{cond},{},{},{},{},{},{},{}\n",
                    r.victim_id,
                    r.reasoner_id,
                    cell.mean_orig,
                    cell.mean_sim,
                    cell.percent_diff,
                    cell.t_statistic.map(|t| t.to_string()).unwrap_or_else(|| "".into()),
                    cell.p_value.value().map(|p| p.to_string()).unwrap_or_else(|| "NOT_COMPUTABLE".into()),
                    cell.n_included,
                    cell.n_excluded,
                ));
            }
            text.push('\n');
        }
        audit_csv = Some(csv);
    }

    if attack_rows.is_empty() && audit_rows.is_empty() {
        text.push_str("no runs\n");
    }

    Ok(RenderedReport { text, attack_csv, audit_csv })
}

/// Convert an external corpus file into split JSONL (CLI `prepare-data`).
pub fn prepare_data(
    input: impl AsRef<Path>,
    format: &str,
    out: impl AsRef<Path>,
    ratios: Option<(u8, u8, u8)>,
    sample_fraction: Option<f64>,
    seed: u64,
) -> Result<usize> {
    use crate::corpus::{import_dialog_json, import_qnli_tsv, import_text_lines, sample_fraction as sample};
    let input = input.as_ref();
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Config(format!("{}: {e}", input.display())))?;
    let mut records = match format {
        "dialog-json" => import_dialog_json(&text)?,
        "qnli-tsv" => import_qnli_tsv(&text)?,
        "lines" => import_text_lines(&text, DatasetId::Altlex),
        other => {
            return Err(Error::Config(format!(
                "unknown format {other:?} (expected dialog-json, qnli-tsv, or lines)"
            )))
        }
    };
    if let Some(f) = sample_fraction {
        records = sample(&records, f, seed)?;
    }
    if let Some(r) = ratios {
        records = apply_split(records, r, seed)?;
    }
    save_dataset(&out, &records)?;
    Ok(records.len())
}
