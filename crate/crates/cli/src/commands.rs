//! One function per subcommand. Each reads its inputs from the output
//! directory and writes its artifacts back there.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use narralyze_core::coherence::{CachedEmbedder, Embedder, MockEmbedder, RemoteEmbedder};
use narralyze_core::corpus::{self, generate_synthetic, is_eligible, Corpus, CorpusError, GroundTruth};
use narralyze_core::evaluator::{ChatClient, EvaluationResult, EvaluatorError, PromptSet, RemoteChat};
use narralyze_core::explain::{self, ShapSummary};
use narralyze_core::featureset::{self, apply_zero_fill, assemble, select_combo, FeatureError, FeatureMatrix, L2Input};
use narralyze_core::lexicon::{LexicalProfile, LexiconDictionary};
use narralyze_core::models::cv::{task_data, train_task};
use narralyze_core::models::{report as table, run_experiment, CVReport, ModelError, Task, TreeEnsembleModel};
use narralyze_core::pipeline;
use narralyze_core::providers::{ContentStore, ProviderClient, ProviderConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, RunConfig};
use crate::CliError;

const CORPUS: &str = "corpus.jsonl";
const TRUTH: &str = "truth.jsonl";
const L1_FILE: &str = "layers/l1.jsonl";
const L2_FILE: &str = "layers/l2.jsonl";
const L3_FILE: &str = "l3.jsonl";
const FEATURES: &str = "features.csv";
const SCHEMA: &str = "features.schema.json";
const CV_REPORT: &str = "cv_report.json";
const REPORT: &str = "report.md";
const RADAR: &str = "radar.json";

#[derive(Serialize, Deserialize)]
struct L1Row {
    id: String,
    profile: LexicalProfile,
}

#[derive(Serialize, Deserialize)]
struct L2Row {
    id: String,
    profile: L2Input,
}

fn model_path(out: &Path, task: Task) -> PathBuf {
    out.join("models").join(format!("{}.json", task.name()))
}

fn shap_path(out: &Path, task: Task) -> PathBuf {
    out.join(format!("shap_{}.json", task.name()))
}

fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, producer })
    }
}

fn corpus_error(e: CorpusError) -> CliError {
    match e {
        CorpusError::Io { .. } => CliError::Internal(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn feature_error(e: FeatureError) -> CliError {
    match e {
        FeatureError::Io { .. } => CliError::Internal(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::NoTargets { .. } | ModelError::TooFewSamples { .. } | ModelError::Format { .. } => {
            CliError::Validation(e.to_string())
        }
        _ => CliError::Internal(e.to_string()),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| CliError::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_corpus(out: &Path) -> Result<Corpus, CliError> {
    let path = require(out.join(CORPUS), "synth` or `narralyze ingest")?;
    Ok(corpus::ingest(path).map_err(corpus_error)?.corpus)
}

fn dictionary(cfg: &RunConfig) -> Result<LexiconDictionary, CliError> {
    let dict = match &cfg.paths.dictionary {
        Some(p) => LexiconDictionary::load(p).map_err(|e| CliError::Validation(e.to_string()))?,
        None => LexiconDictionary::demo(),
    };
    for w in dict.warnings() {
        log::warn!("dictionary: {w}");
    }
    Ok(dict)
}

fn provider_config(cfg: &RunConfig, base: &ProviderConfig, cache: &str) -> ProviderConfig {
    ProviderConfig {
        cache_dir: Some(base.cache_dir.clone().unwrap_or_else(|| cfg.cache_dir().join(cache))),
        offline: base.offline || cfg.offline,
        ..base.clone()
    }
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let synthetic = generate_synthetic(&cfg.synth_config()).map_err(corpus_error)?;
    corpus::emit(&synthetic.corpus, out.join(CORPUS)).map_err(corpus_error)?;
    write_jsonl(&out.join(TRUTH), &synthetic.truth)?;
    log::info!("wrote {} synthetic samples to {}", synthetic.corpus.samples.len(), out.display());
    Ok(())
}

pub fn ingest(cfg: &RunConfig, input: Option<&Path>) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| CliError::Validation("no corpus given: pass a path or set paths.corpus".into()))?;
    if !input.exists() {
        return Err(CliError::Validation(format!("corpus {} does not exist", input.display())));
    }
    let ingested = corpus::ingest(&input).map_err(corpus_error)?;
    let dict = dictionary(cfg)?;
    let total = ingested.corpus.samples.len();
    let samples: Vec<_> = ingested
        .corpus
        .samples
        .into_iter()
        .filter(|s| {
            let keep = is_eligible(&s.text, &dict);
            if !keep {
                log::warn!("{}: 100 tokens or fewer, excluded", s.id);
            }
            keep
        })
        .collect();
    if samples.is_empty() {
        return Err(CliError::Validation(format!("{}: no eligible samples", input.display())));
    }
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let kept = samples.len();
    corpus::emit(&Corpus { samples }, out.join(CORPUS)).map_err(corpus_error)?;
    // Generator truth from an earlier `synth` run does not describe this corpus.
    let truth = out.join(TRUTH);
    if truth.exists() {
        fs::remove_file(&truth).map_err(|e| CliError::io(&truth, e))?;
    }
    log::info!("ingested {kept} of {total} samples");
    Ok(())
}

fn embedder(cfg: &RunConfig) -> Result<Box<dyn Embedder>, CliError> {
    let e = &cfg.embedding;
    match e.backend {
        Backend::Mock => Ok(Box::new(MockEmbedder::new(e.dimension, cfg.seed()))),
        Backend::Remote => {
            let pc = provider_config(cfg, &e.provider, "embeddings");
            let store = ContentStore::new(pc.cache_dir.clone().expect("set above"));
            let offline = pc.offline;
            let client = ProviderClient::new(ProviderConfig { cache_dir: None, ..pc })
                .map_err(|e| CliError::Provider(e.to_string()))?;
            let remote = RemoteEmbedder::new(Arc::new(client), e.dimension);
            Ok(Box::new(CachedEmbedder::new(remote, Some(store)).offline(offline)))
        }
    }
}

pub fn extract(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let corpus = load_corpus(&out)?;
    let l1 = if cfg.layers.l1 {
        let dict = dictionary(cfg)?;
        pipeline::extract_l1(&corpus, &dict)
            .map_err(|(id, e)| CliError::Validation(format!("{id}: lexical profile: {e}")))?
    } else {
        log::warn!("L1 disabled: lexical columns are zero");
        corpus
            .samples
            .iter()
            .map(|s| {
                let zero = LexicalProfile {
                    token_count: 0,
                    frequencies: [0.0; 8],
                };
                (s.id.clone(), zero)
            })
            .collect()
    };
    let l2 = if cfg.layers.l2 {
        let embedder = embedder(cfg)?;
        let (l2, warnings) = pipeline::extract_l2(&corpus, embedder.as_ref())
            .map_err(|(id, e)| CliError::Validation(format!("{id}: coherence: {e}")))?;
        for w in &warnings {
            log::warn!("{w}");
        }
        if !corpus.samples.is_empty() && l2.values().all(Option::is_none) {
            return Err(CliError::Provider(format!(
                "embedding failed for every sample; first failure: {}",
                warnings.first().map(String::as_str).unwrap_or("unknown")
            )));
        }
        l2
    } else {
        log::warn!("L2 disabled: coherence columns flagged missing");
        corpus.samples.iter().map(|s| (s.id.clone(), None)).collect()
    };
    write_jsonl(
        &out.join(L1_FILE),
        l1.iter().map(|(id, p)| L1Row {
            id: id.clone(),
            profile: p.clone(),
        }),
    )?;
    write_jsonl(
        &out.join(L2_FILE),
        l2.iter().map(|(id, p)| L2Row {
            id: id.clone(),
            profile: *p,
        }),
    )?;
    assemble_features(cfg, &corpus)
}

/// Builds the feature matrix from whatever layer files exist.
fn assemble_features(cfg: &RunConfig, corpus: &Corpus) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let l1: BTreeMap<_, _> = read_jsonl::<L1Row>(&require(out.join(L1_FILE), "extract")?)?
        .into_iter()
        .map(|r| (r.id, r.profile))
        .collect();
    let l2: BTreeMap<_, _> = read_jsonl::<L2Row>(&require(out.join(L2_FILE), "extract")?)?
        .into_iter()
        .map(|r| (r.id, r.profile))
        .collect();
    let l3_path = out.join(L3_FILE);
    let l3 = if cfg.layers.l3 && l3_path.exists() {
        pipeline::l3_inputs(&read_jsonl::<EvaluationResult>(&l3_path)?)
    } else {
        if cfg.layers.l3 {
            log::warn!("{} not found: L3 flagged missing until `narralyze evaluate` runs", l3_path.display());
        }
        corpus.samples.iter().map(|s| (s.id.clone(), None)).collect()
    };
    let matrix = assemble(corpus, &cfg.severity, &l1, &l2, &l3).map_err(feature_error)?;
    let matrix = apply_zero_fill(&matrix);
    featureset::save(&matrix, &out.join(FEATURES), &out.join(SCHEMA)).map_err(feature_error)?;
    log::info!("feature matrix: {} rows x {} columns", matrix.n_rows(), matrix.n_cols());
    Ok(())
}

fn chat_client(cfg: &RunConfig, corpus: &Corpus) -> Result<Box<dyn ChatClient>, CliError> {
    match cfg.chat.backend {
        Backend::Mock => {
            let truth_path = cfg.out_dir().join(TRUTH);
            let truth: Vec<GroundTruth> = if truth_path.exists() {
                read_jsonl(&truth_path)?
            } else {
                Vec::new()
            };
            Ok(Box::new(pipeline::mock_chat(corpus, &truth, cfg.chat.mock_default_severity)))
        }
        Backend::Remote => {
            let pc = provider_config(cfg, &cfg.chat.provider, "chat");
            let client = ProviderClient::new(pc).map_err(|e| CliError::Provider(e.to_string()))?;
            Ok(Box::new(RemoteChat::new(Arc::new(client))))
        }
    }
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let corpus = load_corpus(&out)?;
    let templates = match &cfg.paths.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| CliError::Validation(e.to_string()))?,
        None => PromptSet::builtin(),
    };
    let chat = chat_client(cfg, &corpus)?;
    let results = pipeline::evaluate_corpus(&corpus, chat.as_ref(), &templates, true).map_err(|(id, e)| match e {
        EvaluatorError::Provider(_) => CliError::Provider(format!("{id}: {e}")),
        _ => CliError::Internal(format!("{id}: {e}")),
    })?;
    if !results.is_empty() && results.iter().all(EvaluationResult::all_missing) {
        return Err(CliError::Provider("narrative evaluation failed for every sample".into()));
    }
    let incomplete = results.iter().filter(|r| r.any_missing()).count();
    if incomplete > 0 {
        log::warn!("{incomplete} samples have at least one missing protocol");
    }
    write_jsonl(&out.join(L3_FILE), &results)?;
    if out.join(L1_FILE).exists() && out.join(L2_FILE).exists() {
        assemble_features(cfg, &corpus)?;
    } else {
        log::info!("layer files not found; run `narralyze extract` to build the feature matrix");
    }
    Ok(())
}

fn load_matrix(cfg: &RunConfig) -> Result<FeatureMatrix, CliError> {
    let out = cfg.out_dir();
    let csv = require(out.join(FEATURES), "extract")?;
    let schema = require(out.join(SCHEMA), "extract")?;
    let matrix = featureset::load(&csv, &schema).map_err(feature_error)?;
    Ok(if cfg.layers.missing_flags {
        matrix
    } else {
        matrix.without_flags()
    })
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let matrix = load_matrix(cfg)?;
    let experiment = cfg.experiment();
    let report = run_experiment(&matrix, &experiment).map_err(model_error)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(&out.join(CV_REPORT), &report)?;
    let models = out.join("models");
    fs::create_dir_all(&models).map_err(|e| CliError::io(&models, e))?;
    for &task in &experiment.tasks {
        let (model, _, warnings) = train_task(&matrix, task, cfg.explain.combo, &experiment).map_err(model_error)?;
        for w in &warnings {
            log::warn!("{task}: {w}");
        }
        model.save(&model_path(&out, task)).map_err(model_error)?;
    }
    log::info!("cross-validated {} tasks x {} combinations", experiment.tasks.len(), experiment.combos.len());
    Ok(())
}

pub fn explain(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let matrix = load_matrix(cfg)?;
    let view = select_combo(&matrix, cfg.explain.combo);
    let layers: Vec<_> = view.columns.iter().map(|c| c.layer).collect();
    let names: Vec<String> = view.columns.iter().map(|c| c.name.clone()).collect();
    for &task in &cfg.experiment.tasks {
        let model = TreeEnsembleModel::load(&require(model_path(&out, task), "train")?).map_err(model_error)?;
        if model.feature_names != names {
            return Err(CliError::Validation(format!(
                "model for {task} was trained on different features than {}; rerun `narralyze train`",
                cfg.explain.combo.label()
            )));
        }
        let rows = task_data(&matrix, task.condition)
            .map(|d| d.rows)
            .ok_or_else(|| CliError::Validation(format!("task {task} has no targets")))?;
        let values: Vec<Vec<f64>> = rows.iter().map(|&i| view.values[i].clone()).collect();
        let summary: ShapSummary = explain::summarize(&model, &task.name(), &layers, &values, cfg.explain.top_n)
            .map_err(|e| CliError::Internal(format!("{task}: {e}")))?;
        write_json(&shap_path(&out, task), &summary)?;
        if let Some(first) = summary.ranking.first() {
            log::info!("{task}: top feature {} (mean |SHAP| {:.4})", first.feature, first.mean_abs_shap);
        }
    }
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let cv: CVReport = read_json(&require(out.join(CV_REPORT), "train")?)?;
    let mut md = String::from("# Feature-layer comparison\n\n");
    md.push_str(&format!(
        "Mean ± SD over {}-fold stratified cross-validation (seed {}). Best value per column in bold.\n\n",
        cv.k, cv.seed
    ));
    md.push_str(&table::markdown_table(&cv));
    let mut shap_sections = String::new();
    for &task in &cv.tasks {
        let path = shap_path(&out, task);
        if !path.exists() {
            continue;
        }
        let summary: ShapSummary = read_json(&path)?;
        shap_sections.push_str(&format!("\n### {} ({})\n\n", task.name(), summary.output));
        shap_sections.push_str("| Rank | Feature | Layer | Mean \\|SHAP\\| |\n|---|---|---|---|\n");
        for (i, f) in summary.top.iter().enumerate() {
            shap_sections.push_str(&format!(
                "| {} | {} | {} | {:.4} |\n",
                i + 1,
                f.feature,
                f.layer_tag.name(),
                f.mean_abs_shap
            ));
        }
    }
    if !shap_sections.is_empty() {
        md.push_str("\n## Feature attributions\n");
        md.push_str(&shap_sections);
    }
    if !cv.warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for w in &cv.warnings {
            md.push_str(&format!("- {w}\n"));
        }
    }
    let path = out.join(REPORT);
    fs::write(&path, md).map_err(|e| CliError::io(&path, e))?;
    write_json(&out.join(RADAR), &table::radar(&cv))?;
    log::info!("wrote {} and {}", REPORT, RADAR);
    Ok(())
}
