//! Acceptance checks. Each returns a one-line summary on success and the
//! first violation on failure.

use std::collections::BTreeSet;
use std::time::Instant;

use narralyze_core::coherence::{coherence_profile, MockEmbedder};
use narralyze_core::corpus::{generate_synthetic, Condition, SeverityBoundaries, SynthConfig};
use narralyze_core::evaluator::mock::{clinical_reply, labov_reply, propositional_reply};
use narralyze_core::evaluator::schema::{parse_clinical, parse_labov, parse_propositional};
use narralyze_core::evaluator::{PromptSet, SchemaError};
use narralyze_core::explain::{brute_force_shapley, summarize, tree_shap_single};
use narralyze_core::featureset::{self, apply_zero_fill, assemble, FeatureCombo, FeatureMatrix, Layer};
use narralyze_core::lexicon::{profile, LexiconDictionary};
use narralyze_core::models::cv::train_task;
use narralyze_core::models::metrics::binary_auc;
use narralyze_core::models::{
    metrics_classification, metrics_regression, run_experiment, stratified_kfold, train, CVReport,
    ExperimentConfig, Hyperparameters, ModelKind, Task, TaskKind, TrainTarget,
};
use narralyze_core::pipeline::{evaluate_corpus, extract_l1, extract_l2, l3_inputs, mock_chat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ------------------------------------------------------------ 1. lexicon

pub fn lexicon_oracle(n: usize, seed: u64) -> Outcome {
    let dict = LexiconDictionary::demo();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for i in 0..n {
        let text = super::random_text(&mut rng, &dict, 60);
        match (profile(&text, &dict), super::naive_profile(&text, &dict)) {
            (Ok(p), Some(f)) => {
                ensure(p.frequencies == f, || format!("text {i} {text:?}: {:?} vs {f:?}", p.frequencies))?;
                compared += 1;
            }
            (Err(_), None) => {}
            (got, want) => return Err(format!("text {i} {text:?}: {got:?} vs {want:?}")),
        }
    }
    Ok(format!("{n} texts, {compared} non-empty profiles identical"))
}

// ---------------------------------------------------------- 2. coherence

pub fn coherence_oracle(n: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for doc in 0..n {
        let d = rng.gen_range(2..96);
        let k = if doc % 10 == 0 { 1 } else { rng.gen_range(2..30) };
        let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            v[0] += 1e-3;
            v
        };
        let sentences: Vec<Vec<f64>> = (0..k).map(|_| vec(&mut rng)).collect();
        let document = vec(&mut rng);
        let p = coherence_profile(&sentences, &document).map_err(|e| format!("doc {doc}: {e}"))?;
        let want = super::naive_coherence(&sentences, &document);
        let diff = super::max_abs_diff(&p, &want);
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("doc {doc}: diff {diff:e}"))?;
        ensure(p.degenerate == (k == 1), || format!("doc {doc}: degenerate flag wrong"))?;
        degenerate += usize::from(p.degenerate);
    }
    // Single-sentence texts through the full path.
    let embedder = MockEmbedder::new(64, seed);
    for text in ["一句话", "一句话。", "Only one sentence", "他说：“好！”"] {
        let p = narralyze_core::coherence::analyze(text, &embedder).map_err(|e| format!("{text}: {e}"))?;
        ensure(p.degenerate, || format!("{text}: not flagged degenerate"))?;
        degenerate += 1;
    }
    Ok(format!("{n} documents, max |diff| {worst:.1e}, {degenerate} degenerate flagged"))
}

// ---------------------------------------------------------- 3. evaluator

type Mutation = (&'static str, fn(&mut Value));

fn set(v: &mut Value, pointer: &str, x: Value) {
    *v.pointer_mut(pointer).expect("pointer exists") = x;
}

fn remove(v: &mut Value, parent: &str, key: &str) {
    v.pointer_mut(parent)
        .and_then(Value::as_object_mut)
        .expect("object")
        .remove(key);
}

const PROPOSITIONAL_MUTATIONS: &[Mutation] = &[
    ("out_of_range", |v| set(v, "/narrative_time_score", 6.into())),
    ("out_of_range", |v| set(v, "/narrative_detail_score", (-1).into())),
    ("out_of_range", |v| set(v, "/rst/relations/0/quality", 9.into())),
    ("cardinality", |v| set(v, "/propositions", Value::Array(vec![]))),
    ("missing_field", |v| remove(v, "", "narrative_location_score")),
    ("missing_field", |v| remove(v, "", "rst")),
    ("missing_field", |v| remove(v, "/propositions/0", "category")),
    ("unknown_value", |v| set(v, "/propositions/0/category", "gossip".into())),
    ("unknown_value", |v| set(v, "/rst/relations/0/relation", "digression".into())),
    ("wrong_type", |v| set(v, "/narrative_time_score", "3".into())),
    ("wrong_type", |v| set(v, "/narrative_time_score", 2.5.into())),
];

const LABOV_MUTATIONS: &[Mutation] = &[
    ("out_of_range", |v| set(v, "/evaluation/score", 0.into())),
    ("out_of_range", |v| set(v, "/coda/score", 6.into())),
    ("missing_field", |v| remove(v, "", "orientation")),
    ("missing_field", |v| remove(v, "/abstract", "score")),
    ("wrong_type", |v| set(v, "/resolution", 3.into())),
    ("missing_evidence", |v| {
        set(v, "/complicating_action/score", 4.into());
        set(v, "/complicating_action/evidence", "  ".into());
    }),
];

const CLINICAL_MUTATIONS: &[Mutation] = &[
    ("out_of_range", |v| set(v, "/dimensions/3/score", 6.into())),
    ("out_of_range", |v| set(v, "/dimensions/14/score", (-2).into())),
    ("cardinality", |v| {
        v["dimensions"].as_array_mut().unwrap().pop();
    }),
    ("cardinality", |v| {
        let first = v["dimensions"][0].clone();
        v["dimensions"].as_array_mut().unwrap().push(first);
    }),
    ("duplicate", |v| {
        let name = v["dimensions"][0]["name"].clone();
        v["dimensions"][1]["name"] = name;
    }),
    ("missing_field", |v| remove(v, "", "dimensions")),
    ("missing_field", |v| remove(v, "/dimensions/7", "score")),
    ("unknown_value", |v| set(v, "/dimensions/2/name", "charisma".into())),
];

fn check_mutations<T>(
    base: &Value,
    mutations: &[Mutation],
    parse: fn(&str) -> Result<T, SchemaError>,
    label: &str,
) -> Result<usize, String> {
    let mut n = 0;
    for (expected, mutate) in mutations {
        let mut v = base.clone();
        mutate(&mut v);
        match parse(&v.to_string()) {
            Err(e) if e.class() == *expected => n += 1,
            Err(e) => return Err(format!("{label}: expected {expected}, got {} ({e})", e.class())),
            Ok(_) => return Err(format!("{label}: mutation expecting {expected} was accepted")),
        }
    }
    let raw: Vec<char> = base.to_string().chars().collect();
    for cut in [0, 1, raw.len() / 2, raw.len() - 1] {
        let truncated: String = raw[..cut].iter().collect();
        match parse(&truncated) {
            Err(SchemaError::InvalidJson(_)) => n += 1,
            other => return Err(format!("{label}: truncated at {cut}: {:?}", other.err())),
        }
    }
    Ok(n)
}

pub fn evaluator_schema_suite(n: usize, seed: u64) -> Outcome {
    let synthetic = generate_synthetic(&SynthConfig {
        n_samples: n,
        seed,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    let mut rejected = 0;
    for s in &synthetic.corpus.samples {
        let p: f64 = rng.gen_range(0.0..=1.0);
        let prop = propositional_reply(&s.text, p);
        let result = parse_propositional(&prop.to_string()).map_err(|e| format!("{}: {e}", s.id))?;
        let r = result.ratios;
        let total = r.cognitive + r.affective + r.grounding;
        ensure((total - 1.0).abs() <= 1e-9, || format!("{}: C+A+G = {total}", s.id))?;
        let labov = labov_reply(&s.text, p);
        parse_labov(&labov.to_string()).map_err(|e| format!("{}: {e}", s.id))?;
        let clinical = clinical_reply(&s.text, p);
        parse_clinical(&clinical.to_string()).map_err(|e| format!("{}: {e}", s.id))?;
        accepted += 3;
        rejected += check_mutations(&prop, PROPOSITIONAL_MUTATIONS, parse_propositional, "propositional")?;
        rejected += check_mutations(&labov, LABOV_MUTATIONS, parse_labov, "labov")?;
        rejected += check_mutations(&clinical, CLINICAL_MUTATIONS, parse_clinical, "clinical")?;
    }
    // The same texts through the full prompt path.
    let chat = mock_chat(&synthetic.corpus, &synthetic.truth, 0.5);
    let results = evaluate_corpus(&synthetic.corpus, &chat, &PromptSet::builtin(), false)
        .map_err(|(id, e)| format!("{id}: {e}"))?;
    for r in &results {
        ensure(!r.any_missing() && r.provenance.iter().all(|p| !p.repaired), || {
            format!("{}: mock output needed repair or was rejected", r.id)
        })?;
        let ratios = &r.propositional.as_ref().expect("present").ratios;
        let total = ratios.cognitive + ratios.affective + ratios.grounding;
        ensure((total - 1.0).abs() <= 1e-9, || format!("{}: C+A+G = {total}", r.id))?;
    }
    Ok(format!(
        "{} mock outputs accepted, {rejected} mutated outputs rejected with the expected class",
        accepted + 3 * results.len()
    ))
}

// --------------------------------------------------------------- 4. SHAP

pub fn shap_suite(pairs: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut dummies = 0;
    for i in 0..pairs {
        let d = rng.gen_range(1..=8);
        let outputs = if i % 5 == 0 { 3 } else { 1 };
        let depth = rng.gen_range(0..=3);
        let tree = super::random_tree(&mut rng, d, depth, outputs);
        let x: Vec<f64> = (0..d)
            .map(|j| match rng.gen_range(0..4) {
                0 => tree.nodes.iter().find(|n| n.feature == Some(j)).map_or(0.0, |n| n.threshold),
                _ => rng.gen_range(-1.2..1.2),
            })
            .collect();
        let fast = tree_shap_single(&tree, &x);
        let exact = brute_force_shapley(&tree, &x).map_err(|e| e.to_string())?;
        for o in 0..outputs {
            ensure((fast.base_value[o] - exact.base_value[o]).abs() <= 1e-9, || format!("pair {i}: base value"))?;
            for f in 0..d {
                let diff = (fast.phi[o][f] - exact.phi[o][f]).abs();
                worst = worst.max(diff);
                ensure(diff <= 1e-9, || format!("pair {i}, output {o}, feature {f}: diff {diff:e}"))?;
            }
        }
        let used: BTreeSet<usize> = tree.nodes.iter().filter_map(|n| n.feature).collect();
        for f in (0..d).filter(|f| !used.contains(f)) {
            for o in 0..outputs {
                ensure(fast.phi[o][f] == 0.0, || format!("pair {i}: dummy feature {f} has φ {}", fast.phi[o][f]))?;
                dummies += 1;
            }
        }
    }

    // Efficiency on trained ensembles of every kind, every training sample.
    let n = 150;
    let d = 6;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] - 0.5 * r[1] * r[2]).collect();
    let labels: Vec<usize> = y.iter().map(|v| ((v + 1.5) * 1.4).clamp(0.0, 3.0) as usize).collect();
    let mut params = Hyperparameters::default();
    params.extratrees.n_trees = 40;
    params.gbdt.n_rounds = 40;
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let layers = vec![Layer::L1; d];
    let mut explained = 0;
    for (kind, target) in [
        (ModelKind::ExtratreesRegressor, TrainTarget::Regression(&y)),
        (ModelKind::ExtratreesClassifier, TrainTarget::Classification(&labels)),
        (ModelKind::GbdtClassifier, TrainTarget::Classification(&labels)),
    ] {
        let (mut model, _) = train(&x, target, kind, &params, None, seed).map_err(|e| e.to_string())?;
        model.feature_names = names.clone();
        summarize(&model, "efficiency", &layers, &x, 5).map_err(|e| format!("{kind:?}: {e}"))?;
        explained += n;
    }
    Ok(format!(
        "{pairs} tree/input pairs, max |diff| {worst:.1e}; {dummies} dummy φ exactly 0; efficiency within 1e-6 on {explained} samples"
    ))
}

// ----------------------------------------------------------------- 5. CV

pub fn cv_machinery(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Balanced stratification.
    for trial in 0..200 {
        let k = rng.gen_range(2..=10);
        let n = rng.gen_range(k..200);
        let n_classes = rng.gen_range(1..6);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
        let (folds, _) = stratified_kfold(&labels, k, trial).map_err(|e| e.to_string())?;
        for c in 0..n_classes {
            let mut counts = vec![0usize; k];
            for (l, f) in labels.iter().zip(&folds) {
                if *l == c {
                    counts[*f] += 1;
                }
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            ensure(hi - lo <= 1, || format!("trial {trial}: class {c} fold counts {counts:?}"))?;
        }
    }

    // Metrics against naive recomputation.
    let mut checked = 0;
    for trial in 0..500 {
        let n = rng.gen_range(3..40);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = metrics_regression(&y, &p).map_err(|e| e.to_string())?;
        for (got, want, name) in [
            (m.r2, super::naive_r2(&y, &p), "r2"),
            (m.rmse, super::naive_rmse(&y, &p), "rmse"),
            (m.mae, super::naive_mae(&y, &p), "mae"),
        ] {
            ensure((got - want).abs() <= 1e-12, || format!("trial {trial}: {name} {got} vs {want}"))?;
        }

        let k = rng.gen_range(2..5);
        let classes: Vec<usize> = (0..k).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let proba: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                // Coarse values so ties occur.
                let raw: Vec<f64> = (0..k).map(|_| f64::from(rng.gen_range(1..5))).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|r| r / s).collect()
            })
            .collect();
        let m = metrics_classification(&labels, &proba, &classes).map_err(|e| e.to_string())?;
        let pred: Vec<usize> = proba
            .iter()
            .map(|r| (0..k).fold(0, |best, j| if r[j] > r[best] { j } else { best }))
            .collect();
        let want_auc = super::naive_macro_auc(&labels, &proba, &classes);
        match (m.auc_macro_ovr, want_auc) {
            (Some(a), Some(b)) => ensure((a - b).abs() <= 1e-12, || format!("trial {trial}: auc {a} vs {b}"))?,
            (None, None) => {}
            (a, b) => return Err(format!("trial {trial}: auc {a:?} vs {b:?}")),
        }
        let ba = super::naive_balanced_accuracy(&labels, &pred);
        let f1 = super::naive_macro_f1(&labels, &pred);
        ensure((m.balanced_accuracy - ba).abs() <= 1e-12, || format!("trial {trial}: balanced accuracy"))?;
        ensure((m.macro_f1 - f1).abs() <= 1e-12, || format!("trial {trial}: macro F1"))?;
        checked += 1;
    }
    let fixture = binary_auc(&[true, true, false, false], &[0.8, 0.4, 0.6, 0.2]);
    ensure(fixture == Some(0.75), || format!("AUC fixture gave {fixture:?}"))?;
    ensure(
        super::pairwise_auc(&[true, true, false, false], &[0.8, 0.4, 0.6, 0.2]) == Some(0.75),
        || "pairwise AUC fixture".into(),
    )?;

    // No id overlap and stratified folds inside a real experiment.
    let matrix = synthetic_matrix(160, 0.8, seed)?;
    let cfg = ExperimentConfig {
        k: 5,
        seed,
        tasks: Task::defaults(),
        combos: vec![FeatureCombo::B, FeatureCombo::BL1L2L3],
        hyperparameters: small_hyperparameters(),
    };
    let report = run_experiment(&matrix, &cfg).map_err(|e| e.to_string())?;
    check_report_folds(&matrix, &report)?;
    Ok(format!(
        "200 fold assignments balanced within ±1; {checked} metric instances within 1e-12; AUC fixture 0.75; no train/validation overlap"
    ))
}

/// Every scored sample is validated exactly once, folds are disjoint and each
/// severity level is spread within ±1 across folds.
pub fn check_report_folds(matrix: &FeatureMatrix, report: &CVReport) -> Result<(), String> {
    for c in Condition::ALL {
        let folds = &report.folds[&c];
        let target = matrix.target(c).ok_or("missing target")?;
        for f in 0..report.k {
            let validation: BTreeSet<&str> = (0..folds.len())
                .filter(|&i| folds[i] == Some(f))
                .map(|i| report.sample_ids[i].as_str())
                .collect();
            let train: BTreeSet<&str> = (0..folds.len())
                .filter(|&i| folds[i].is_some_and(|g| g != f))
                .map(|i| report.sample_ids[i].as_str())
                .collect();
            ensure(validation.is_disjoint(&train), || format!("{c} fold {f}: overlap"))?;
            ensure(!validation.is_empty(), || format!("{c} fold {f}: empty"))?;
        }
        for i in 0..folds.len() {
            ensure(folds[i].is_some() == target.severity[i].is_some(), || {
                format!("{c}: sample {i} fold assignment does not match target presence")
            })?;
        }
        let levels: BTreeSet<usize> = target.severity.iter().flatten().copied().collect();
        for l in levels {
            let mut counts = vec![0usize; report.k];
            for i in 0..folds.len() {
                if target.severity[i] == Some(l) {
                    counts[folds[i].expect("scored")] += 1;
                }
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            ensure(hi - lo <= 1, || format!("{c} level {l}: fold counts {counts:?}"))?;
        }
    }
    Ok(())
}

// -------------------------------------------------- synthetic experiments

pub fn small_hyperparameters() -> Hyperparameters {
    let mut h = Hyperparameters::default();
    h.extratrees.n_trees = 30;
    h.gbdt.n_rounds = 30;
    h
}

/// Synthetic corpus through the mock embedder and mock evaluator, zero-filled.
pub fn synthetic_matrix(n: usize, signal: f64, seed: u64) -> Result<FeatureMatrix, String> {
    let synthetic = generate_synthetic(&SynthConfig {
        n_samples: n,
        signal_strength: signal,
        seed,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let dict = LexiconDictionary::demo();
    let l1 = extract_l1(&synthetic.corpus, &dict).map_err(|(id, e)| format!("{id}: {e}"))?;
    let (l2, _) = extract_l2(&synthetic.corpus, &MockEmbedder::new(1536, seed)).map_err(|(id, e)| format!("{id}: {e}"))?;
    let chat = mock_chat(&synthetic.corpus, &synthetic.truth, 0.5);
    let results = evaluate_corpus(&synthetic.corpus, &chat, &PromptSet::builtin(), false)
        .map_err(|(id, e)| format!("{id}: {e}"))?;
    let matrix = assemble(&synthetic.corpus, &SeverityBoundaries::default(), &l1, &l2, &l3_inputs(&results))
        .map_err(|e| e.to_string())?;
    Ok(apply_zero_fill(&matrix))
}

fn headline(report: &CVReport, task: Task, combo: FeatureCombo) -> f64 {
    report.mean(task, combo, task.headline_metric()).unwrap_or(f64::NAN)
}

pub fn format_table(report: &CVReport) -> String {
    narralyze_core::models::report::markdown_table(report)
}

// ---------------------------------------------------------- 6. direction

pub fn directional(seed: u64) -> (Outcome, Option<CVReport>) {
    let start = Instant::now();
    let matrix = match synthetic_matrix(800, 0.8, seed) {
        Ok(m) => m,
        Err(e) => return (Err(e), None),
    };
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    let report = match run_experiment(&matrix, &cfg) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), None),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let check = || -> Result<String, String> {
        let auc_tasks: Vec<Task> = report.tasks.iter().copied().filter(|t| t.kind == TaskKind::Classification).collect();
        for &t in &auc_tasks {
            let best = report.best_combo(t, t.headline_metric());
            ensure(best == Some(FeatureCombo::BL1L2L3), || format!("{t}: best AUC from {best:?}"))?;
        }
        for &t in &report.tasks {
            let l3 = headline(&report, t, FeatureCombo::L3);
            for other in [FeatureCombo::L1, FeatureCombo::L2] {
                let v = headline(&report, t, other);
                ensure(l3 > v, || format!("{t}: L3 {l3:.3} not above {} {v:.3}", other.label()))?;
            }
        }
        let dep = Task::new(Condition::Depression, TaskKind::Classification);
        let full = headline(&report, dep, FeatureCombo::BL1L2L3);
        ensure(full >= 0.90, || format!("full-combo depression AUC {full:.3} < 0.90"))?;
        ensure(elapsed <= 300.0, || format!("runtime {elapsed:.0}s exceeds 5 minutes"))?;
        Ok(format!("full combo best AUC on all conditions, L3 above L1/L2 on every column, depression AUC {full:.3}, {elapsed:.0}s"))
    };
    (check(), Some(report))
}

// -------------------------------------------------------------- 7. null

pub fn null_control(seed: u64) -> (Outcome, Option<CVReport>) {
    let matrix = match synthetic_matrix(800, 0.0, seed) {
        Ok(m) => m,
        Err(e) => return (Err(e), None),
    };
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    let report = match run_experiment(&matrix, &cfg) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), None),
    };
    let check = || -> Result<String, String> {
        let mut auc_range = (f64::INFINITY, f64::NEG_INFINITY);
        let mut max_r2 = f64::NEG_INFINITY;
        for &t in &report.tasks {
            for &c in &report.combos {
                let v = headline(&report, t, c);
                match t.kind {
                    TaskKind::Classification => {
                        ensure((v - 0.5).abs() <= 0.07, || format!("{t} {}: AUC {v:.3}", c.label()))?;
                        auc_range = (auc_range.0.min(v), auc_range.1.max(v));
                    }
                    TaskKind::Regression => {
                        ensure(v <= 0.05, || format!("{t} {}: R² {v:.3}", c.label()))?;
                        max_r2 = max_r2.max(v);
                    }
                }
            }
        }
        Ok(format!("AUC in [{:.3}, {:.3}], max R² {max_r2:.3}", auc_range.0, auc_range.1))
    };
    (check(), Some(report))
}

// ------------------------------------------------------- 8. determinism

/// Artifacts of one offline pipeline run, serialized as written to disk.
pub struct PipelineBytes {
    pub features_csv: Vec<u8>,
    pub features_schema: Vec<u8>,
    pub cv_report: Vec<u8>,
    pub shap: Vec<Vec<u8>>,
}

pub fn run_pipeline(n: usize, seed: u64, dir: &std::path::Path) -> Result<PipelineBytes, String> {
    let matrix = synthetic_matrix(n, 0.8, seed)?;
    let csv = dir.join("features.csv");
    let schema = dir.join("features.schema.json");
    featureset::save(&matrix, &csv, &schema).map_err(|e| e.to_string())?;
    let matrix = featureset::load(&csv, &schema).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        k: 3,
        seed,
        hyperparameters: small_hyperparameters(),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&matrix, &cfg).map_err(|e| e.to_string())?;
    let mut shap = Vec::new();
    for &task in &cfg.tasks {
        let (model, view, _) = train_task(&matrix, task, FeatureCombo::BL1L2L3, &cfg).map_err(|e| e.to_string())?;
        let layers: Vec<Layer> = view.columns.iter().map(|c| c.layer).collect();
        let summary = summarize(&model, &task.name(), &layers, &view.values, 10).map_err(|e| e.to_string())?;
        shap.push(serde_json::to_vec_pretty(&summary).map_err(|e| e.to_string())?);
    }
    Ok(PipelineBytes {
        features_csv: std::fs::read(&csv).map_err(|e| e.to_string())?,
        features_schema: std::fs::read(&schema).map_err(|e| e.to_string())?,
        cv_report: serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?,
        shap,
    })
}

pub fn determinism(n: usize, seed: u64) -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let a = run_pipeline(n, seed, dirs[0].path())?;
    let b = run_pipeline(n, seed, dirs[1].path())?;
    ensure(a.features_csv == b.features_csv && a.features_schema == b.features_schema, || {
        "feature matrices differ".into()
    })?;
    ensure(a.cv_report == b.cv_report, || "CV reports differ".into())?;
    ensure(a.shap == b.shap, || "SHAP summaries differ".into())?;
    let bytes = a.features_csv.len() + a.cv_report.len() + a.shap.iter().map(Vec::len).sum::<usize>();
    Ok(format!("two runs byte-identical ({bytes} bytes compared)"))
}
