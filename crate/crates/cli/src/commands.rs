//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fastdoc_core::datapipe::{
    derive_taxonomy, load_corpus, map_category_to_hierarchy, mine_triplets_metadata,
    mine_triplets_rouge, read_triplets, Corpus, RougeMiningConfig, Taxonomy, Triplet,
    WordVectors,
};
use fastdoc_core::encoder::{parse_targets, LoraConfig};
use fastdoc_core::evalkit::{
    finetune_pair_classification, finetune_span_qa, finetune_token_classification,
    load_pairs, load_span_examples, load_tagged, paragraph_similarity, pca_project,
    representation_correlation, token_doc_vector, wl_for_documents, CorrelationReport,
    EmbeddingMode, FinetuneConfig, FinetuneReport, ParagraphSimilarity,
};
use fastdoc_core::rng::seeded;
use fastdoc_core::trainer::{
    hierarchy_labels, pretrain, pretrain_mlm, read_checkpoint, steps_per_epoch, track_drift,
    Checkpoint, DriftReport, StepLog, TrainConfig, FORMAT_VERSION,
};
use fastdoc_core::{Error, Result};
use rand::seq::index::sample;
use serde::Serialize;

use crate::args::{
    AnalyzeArgs, Command, DeriveTaxonomyArgs, FinetuneArgs, InspectArgs, MineArgs, Objective,
    PretrainArgs, Strategy, Task,
};
use crate::manifest::{io_error, with_suffix, Outputs};

/// What a subcommand hands back besides its files.
#[derive(Debug, Default)]
pub struct Execution {
    pub steps: usize,
    pub stdout: Option<String>,
}

/// Fills every optional output path with its default.
pub fn resolve(cmd: &mut Command) {
    fn fill(slot: &mut Option<PathBuf>, base: &Path, suffix: &str) {
        if slot.is_none() {
            *slot = Some(with_suffix(base, suffix));
        }
    }
    match cmd {
        Command::Mine(a) => fill(&mut a.manifest.manifest_out, &a.out, "manifest.json"),
        Command::DeriveTaxonomy(a) => {
            fill(&mut a.manifest.manifest_out, &a.out_taxonomy, "manifest.json")
        }
        Command::Pretrain(a) => {
            fill(&mut a.log, &a.out, "log.jsonl");
            fill(&mut a.manifest.manifest_out, &a.out, "manifest.json");
        }
        Command::Finetune(a) => {
            fill(&mut a.metrics, &a.out, "metrics.json");
            fill(&mut a.manifest.manifest_out, &a.out, "manifest.json");
        }
        Command::Analyze(a) => {
            fill(&mut a.pca_csv, &a.out, "pca.csv");
            fill(&mut a.manifest.manifest_out, &a.out, "manifest.json");
        }
        Command::InspectCheckpoint(_) | Command::Replay(_) => {}
    }
}

/// Files the command reads, in a fixed order.
pub fn inputs(cmd: &Command) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = Vec::new();
    match cmd {
        Command::Mine(a) => v.push(a.corpus.clone()),
        Command::DeriveTaxonomy(a) => v.push(a.corpus.clone()),
        Command::Pretrain(a) => {
            v.push(a.corpus.clone());
            v.extend(a.triplets.iter().cloned());
            v.extend(a.taxonomy.iter().cloned());
            v.extend(a.word_vectors.iter().cloned());
        }
        Command::Finetune(a) => {
            v.push(a.checkpoint.clone());
            v.push(a.train.clone());
            v.extend(a.dev.iter().cloned());
        }
        Command::Analyze(a) => {
            v.push(a.checkpoint.clone());
            v.push(a.corpus.clone());
            v.extend(a.baseline.iter().cloned());
            v.extend(a.paragraphs_a.iter().cloned());
            v.extend(a.paragraphs_b.iter().cloned());
        }
        Command::InspectCheckpoint(a) => v.push(a.checkpoint.clone()),
        Command::Replay(a) => v.push(a.manifest.clone()),
    }
    v
}

pub fn manifest_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Mine(a) => a.manifest.manifest_out.as_deref(),
        Command::DeriveTaxonomy(a) => a.manifest.manifest_out.as_deref(),
        Command::Pretrain(a) => a.manifest.manifest_out.as_deref(),
        Command::Finetune(a) => a.manifest.manifest_out.as_deref(),
        Command::Analyze(a) => a.manifest.manifest_out.as_deref(),
        Command::InspectCheckpoint(_) | Command::Replay(_) => None,
    }
}

/// Moves every output path (manifest included) into `dir`, keeping file names.
pub fn redirect(cmd: &mut Command, dir: &Path) {
    fn mv(p: &mut PathBuf, dir: &Path) {
        if let Some(name) = p.file_name() {
            *p = dir.join(name);
        }
    }
    fn mv_opt(p: &mut Option<PathBuf>, dir: &Path) {
        if let Some(p) = p {
            mv(p, dir);
        }
    }
    match cmd {
        Command::Mine(a) => {
            mv(&mut a.out, dir);
            mv_opt(&mut a.manifest.manifest_out, dir);
        }
        Command::DeriveTaxonomy(a) => {
            mv(&mut a.out_taxonomy, dir);
            mv(&mut a.out_corpus, dir);
            mv_opt(&mut a.manifest.manifest_out, dir);
        }
        Command::Pretrain(a) => {
            mv(&mut a.out, dir);
            mv_opt(&mut a.log, dir);
            mv_opt(&mut a.manifest.manifest_out, dir);
        }
        Command::Finetune(a) => {
            mv(&mut a.out, dir);
            mv_opt(&mut a.metrics, dir);
            mv_opt(&mut a.manifest.manifest_out, dir);
        }
        Command::Analyze(a) => {
            mv(&mut a.out, dir);
            mv_opt(&mut a.pca_csv, dir);
            mv_opt(&mut a.manifest.manifest_out, dir);
        }
        Command::InspectCheckpoint(a) => mv_opt(&mut a.out, dir),
        Command::Replay(_) => {}
    }
}

pub fn execute(cmd: &Command, threads: usize, out: &mut Outputs) -> Result<Execution> {
    match cmd {
        Command::Mine(a) => mine(a, threads, out),
        Command::DeriveTaxonomy(a) => derive(a, out),
        Command::Pretrain(a) => pretrain_cmd(a, out),
        Command::Finetune(a) => finetune_cmd(a, out),
        Command::Analyze(a) => analyze(a, out),
        Command::InspectCheckpoint(a) => inspect(a, out),
        Command::Replay(_) => Err(Error::Config("replay cannot be nested".into())),
    }
}

fn json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record serializes")
}

fn triplet_bytes(triplets: &[Triplet]) -> Vec<u8> {
    let mut s = String::new();
    for t in triplets {
        s.push_str(&json_line(t));
        s.push('\n');
    }
    s.into_bytes()
}

fn mine(a: &MineArgs, threads: usize, out: &mut Outputs) -> Result<Execution> {
    let corpus = load_corpus(&a.corpus, a.mode)?;
    let triplets = match a.strategy {
        Strategy::Metadata => mine_triplets_metadata(&corpus, a.count, a.seed)?,
        Strategy::Rouge => mine_triplets_rouge(
            &corpus,
            &RougeMiningConfig {
                count: a.count,
                seed: a.seed,
                pos_threshold: a.pos_threshold,
                neg_threshold: a.neg_threshold,
                truncate_tokens: a.truncate_tokens,
                threads,
            },
        )?,
    };
    log::info!("mined {} triplets", triplets.len());
    out.write(&a.out, &triplet_bytes(&triplets))?;
    Ok(Execution {
        steps: triplets.len(),
        stdout: None,
    })
}

fn derive(a: &DeriveTaxonomyArgs, out: &mut Outputs) -> Result<Execution> {
    let corpus = load_corpus(&a.corpus, a.mode)?;
    let (taxonomy, paths) = derive_taxonomy(&corpus, a.levels, a.branching, a.seed)?;
    let mut documents = corpus.documents;
    for (d, p) in documents.iter_mut().zip(paths) {
        d.hierarchy = Some(p);
    }
    let labelled = Corpus::new(documents, corpus.mode)?;
    out.write(&a.out_taxonomy, taxonomy.to_text().as_bytes())?;
    out.write(&a.out_corpus, labelled.to_jsonl().as_bytes())?;
    Ok(Execution {
        steps: labelled.len(),
        stdout: None,
    })
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogLine<'a> {
    Step(&'a StepLog),
    Drift(&'a DriftReport),
}

fn lora_config(rank: usize, targets: &str) -> Result<Option<LoraConfig>> {
    if rank == 0 {
        return Ok(None);
    }
    Ok(Some(LoraConfig {
        rank,
        targets: parse_targets(targets)?,
    }))
}

fn pretrain_cmd(a: &PretrainArgs, out: &mut Outputs) -> Result<Execution> {
    let mut corpus = load_corpus(&a.corpus, a.mode)?;
    let triplets = a.triplets.as_ref().map(read_triplets).transpose()?;
    let taxonomy = a.taxonomy.as_ref().map(Taxonomy::load).transpose()?;
    let fastdoc = a.objective == Objective::Fastdoc;
    if fastdoc && triplets.is_none() {
        return Err(Error::Config("the fastdoc objective needs --triplets".into()));
    }
    if fastdoc && a.loss.hier() && taxonomy.is_none() {
        return Err(Error::Config(format!(
            "--loss {} needs --taxonomy",
            a.loss
        )));
    }
    if a.word_vectors.is_some() && taxonomy.is_none() {
        return Err(Error::Config("--word-vectors needs --taxonomy".into()));
    }
    if let (Some(tax), Some(wv_path)) = (&taxonomy, &a.word_vectors) {
        let vectors = WordVectors::load(wv_path)?;
        for d in corpus.documents.iter_mut() {
            if d.hierarchy.is_none() {
                if let Some(cat) = &d.category {
                    d.hierarchy = Some(map_category_to_hierarchy(cat, tax, &vectors)?);
                }
            }
        }
    }

    let level_sizes = taxonomy.as_ref().map(Taxonomy::level_sizes).unwrap_or_default();
    let model_cfg = a.model.config(a.seed, level_sizes, !fastdoc);
    let mut model = fastdoc_core::encoder::FastDocModel::new(model_cfg)?;
    let cfg = TrainConfig {
        batch_size: a.batch,
        initial_lr: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        loss: a.loss,
        lora: lora_config(a.lora_rank, &a.lora_targets)?,
        clip_norm: a.clip_norm,
        drift_interval: a.drift_interval,
        ..TrainConfig::default()
    };
    cfg.validate()?;

    let outcome = if fastdoc {
        let labels = match &taxonomy {
            Some(t) => hierarchy_labels(&corpus, t)?,
            None => Default::default(),
        };
        let triplets = triplets.unwrap_or_default();
        pretrain(&mut model, &corpus, &triplets, &labels, &cfg)?
    } else {
        let steps = if a.mlm_steps > 0 {
            a.mlm_steps
        } else {
            let examples = triplets.as_ref().map_or(corpus.len(), Vec::len);
            steps_per_epoch(examples, a.batch) * a.epochs
        };
        pretrain_mlm(&mut model, &corpus, steps, &cfg)?
    };
    if let Some(last) = outcome.losses.last() {
        log::info!("finished {} steps, final loss {:.4}", outcome.steps, last.loss);
    }

    let ckpt = Checkpoint::from_model(&model, Some(&outcome.optimizer));
    out.write(&a.out, &ckpt.to_bytes())?;
    let mut log = String::new();
    for s in &outcome.losses {
        log.push_str(&json_line(&LogLine::Step(s)));
        log.push('\n');
    }
    for d in &outcome.drift {
        log.push_str(&json_line(&LogLine::Drift(d)));
        log.push('\n');
    }
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, "log.jsonl"));
    out.write(&log_path, log.as_bytes())?;
    Ok(Execution {
        steps: outcome.steps,
        stdout: None,
    })
}

/// Keeps a seeded sample of `k` items in their original order.
fn few_shot<T>(items: Vec<T>, k: usize, seed: u64) -> Vec<T> {
    if k == 0 || k >= items.len() {
        return items;
    }
    let mut rng = seeded(seed, "cli.few_shot");
    let mut keep = sample(&mut rng, items.len(), k).into_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    keep.into_iter().filter_map(|i| slots[i].take()).collect()
}

#[derive(Serialize)]
struct FinetuneSummary {
    task: Task,
    train_examples: usize,
    dev_examples: usize,
    report: FinetuneReport,
}

fn finetune_cmd(a: &FinetuneArgs, out: &mut Outputs) -> Result<Execution> {
    let mut model = read_checkpoint(&a.checkpoint)?.to_model()?;
    if let Some(l) = lora_config(a.lora_rank, &a.lora_targets)? {
        model.apply_lora(l.rank, &l.targets)?;
    }
    let cfg = FinetuneConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        patience: (a.patience > 0).then_some(a.patience),
        clip_norm: a.clip_norm,
        ..FinetuneConfig::default()
    };
    let (train_n, dev_n, report) = match a.task {
        Task::Span => {
            let train = few_shot(load_span_examples(&a.train)?, a.few_shot, a.seed);
            let dev = match &a.dev {
                Some(p) => load_span_examples(p)?,
                None => train.clone(),
            };
            let (t, d) = (train.len(), dev.len());
            (t, d, finetune_span_qa(&mut model, train, dev, &cfg)?)
        }
        Task::Tagging => {
            let train = few_shot(load_tagged(&a.train, a.num_classes)?, a.few_shot, a.seed);
            let dev = match &a.dev {
                Some(p) => load_tagged(p, a.num_classes)?,
                None => train.clone(),
            };
            let (t, d) = (train.len(), dev.len());
            (
                t,
                d,
                finetune_token_classification(&mut model, train, dev, a.num_classes, &cfg)?,
            )
        }
        Task::Pair => {
            let train = few_shot(load_pairs(&a.train)?, a.few_shot, a.seed);
            let dev = match &a.dev {
                Some(p) => load_pairs(p)?,
                None => train.clone(),
            };
            let (t, d) = (train.len(), dev.len());
            (t, d, finetune_pair_classification(&mut model, train, dev, &cfg)?)
        }
    };
    log::info!(
        "best epoch {} of {}, primary {:.4}",
        report.best_epoch,
        report.epochs_run,
        report.best.primary
    );
    let epochs = report.epochs_run;
    out.write(&a.out, &Checkpoint::from_model(&model, None).to_bytes())?;
    let metrics_path = a.metrics.clone().unwrap_or_else(|| with_suffix(&a.out, "metrics.json"));
    let summary = FinetuneSummary {
        task: a.task,
        train_examples: train_n,
        dev_examples: dev_n,
        report,
    };
    out.write(&metrics_path, &json_pretty(&summary))?;
    Ok(Execution {
        steps: epochs,
        stdout: None,
    })
}

#[derive(Serialize)]
struct WlPair {
    a: String,
    b: String,
    sentence: f64,
    token: f64,
}

#[derive(Serialize)]
struct WlSummary {
    sentence_mean: f64,
    token_mean: f64,
    pairs: Vec<WlPair>,
}

#[derive(Serialize)]
struct PcaSummary {
    sentence_explained: Vec<f64>,
    token_explained: Vec<f64>,
}

#[derive(Serialize)]
struct AnalysisReport {
    documents: usize,
    correlation: CorrelationReport,
    wl: WlSummary,
    pca: PcaSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    paragraphs: Option<ParagraphSimilarity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<DriftReport>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn analyze(a: &AnalyzeArgs, out: &mut Outputs) -> Result<Execution> {
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let model = ckpt.to_model()?;
    let corpus = load_corpus(&a.corpus, a.mode)?;
    if a.docs < 2 {
        return Err(Error::Config("--docs must be at least 2".into()));
    }
    let docs: Vec<_> = corpus.documents.iter().take(a.docs).cloned().collect();
    if docs.len() < 2 {
        return Err(Error::Validation("analysis needs at least two documents".into()));
    }

    let correlation = representation_correlation(&model, &docs)?;
    let mut pairs = Vec::with_capacity(docs.len() - 1);
    for w in docs.windows(2) {
        pairs.push(WlPair {
            a: w[0].id.clone(),
            b: w[1].id.clone(),
            sentence: wl_for_documents(&model, &w[0], &w[1], EmbeddingMode::Sentence)?,
            token: wl_for_documents(&model, &w[0], &w[1], EmbeddingMode::Token)?,
        });
    }
    let n = pairs.len() as f64;
    let wl = WlSummary {
        sentence_mean: pairs.iter().map(|p| p.sentence).sum::<f64>() / n,
        token_mean: pairs.iter().map(|p| p.token).sum::<f64>() / n,
        pairs,
    };

    let sentence_vecs: Vec<Vec<f32>> = docs
        .iter()
        .map(|d| model.encode_document(d))
        .collect::<Result<_>>()?;
    let token_vecs: Vec<Vec<f32>> = docs
        .iter()
        .map(|d| token_doc_vector(&model, d))
        .collect::<Result<_>>()?;
    let sentence_pca = pca_project(&sentence_vecs, 2, a.seed)?;
    let token_pca = pca_project(&token_vecs, 2, a.seed)?;
    let mut csv = String::from("id,path,pc1,pc2\n");
    for (label, proj) in [("sentence", &sentence_pca), ("token", &token_pca)] {
        for (d, c) in docs.iter().zip(&proj.coords) {
            csv.push_str(&format!("{},{label},{},{}\n", d.id, c[0], c[1]));
        }
    }

    let paragraphs = match (&a.paragraphs_a, &a.paragraphs_b) {
        (Some(pa), Some(pb)) => Some(paragraph_similarity(&read_text(pa)?, &read_text(pb)?)?),
        _ => None,
    };
    let drift = match &a.baseline {
        Some(b) => Some(track_drift(&read_checkpoint(b)?, &ckpt)?),
        None => None,
    };

    let report = AnalysisReport {
        documents: docs.len(),
        correlation,
        wl,
        pca: PcaSummary {
            sentence_explained: sentence_pca.explained,
            token_explained: token_pca.explained,
        },
        paragraphs,
        drift,
    };
    out.write(&a.out, &json_pretty(&report))?;
    let csv_path = a.pca_csv.clone().unwrap_or_else(|| with_suffix(&a.out, "pca.csv"));
    out.write(&csv_path, csv.as_bytes())?;
    Ok(Execution {
        steps: docs.len(),
        stdout: None,
    })
}

#[derive(Serialize)]
struct TensorSummary {
    name: String,
    group: String,
    shape: Vec<usize>,
}

#[derive(Serialize)]
struct CheckpointSummary {
    format_version: u32,
    digest: String,
    config: fastdoc_core::encoder::ModelConfig,
    lower_seed: u64,
    optimizer: bool,
    group_parameters: BTreeMap<String, usize>,
    tensors: Vec<TensorSummary>,
}

fn inspect(a: &InspectArgs, out: &mut Outputs) -> Result<Execution> {
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let mut group_parameters = BTreeMap::new();
    for t in &ckpt.tensors {
        *group_parameters.entry(t.group.clone()).or_insert(0) += t.data.len();
    }
    let summary = CheckpointSummary {
        format_version: FORMAT_VERSION,
        digest: ckpt.digest(),
        config: ckpt.config.clone(),
        lower_seed: ckpt.lower_seed,
        optimizer: ckpt.optimizer.is_some(),
        group_parameters,
        tensors: ckpt
            .tensors
            .iter()
            .map(|t| TensorSummary {
                name: t.name.clone(),
                group: t.group.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let bytes = json_pretty(&summary);
    match &a.out {
        Some(p) => {
            out.write(p, &bytes)?;
            Ok(Execution::default())
        }
        None => Ok(Execution {
            steps: 0,
            stdout: Some(String::from_utf8(bytes).expect("json is utf-8")),
        }),
    }
}
