use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use toxlab_core::augment::{
    augment_train, build_pool, read_pool_jsonl, write_pool_jsonl, CandidateStatus, MockProvider, ParaphraseProvider,
    PoolStats, RemoteProvider, ENDPOINT_VAR, KEY_VAR,
};
use toxlab_core::calibrate::{
    calibrate_logits, expected_calibration_error, fit_calibration, mean_nll, CalibrationParams,
};
use toxlab_core::corpus::{
    class_distribution, duplicate_report, parse_dataset, read_predictions, split_dataset, write_dataset_jsonl,
    write_predictions, DataFormat, DuplicateReport, ClassHistogram,
};
use toxlab_core::evaluate::{
    classification_report, confusion_matrix, experiment_ledger, ratio_sweep, reference_rows, trap_report, EvalReport,
    LedgerRow, SweepSetup,
};
use toxlab_core::generator::generate_corpus;
use toxlab_core::model::loss::PROB_FLOOR;
use toxlab_core::model::LLM_BASE_LR;
use toxlab_core::strategies::{apply_class_boost, confidence_route, ensemble_average, ensemble_vote, TrainedModel};
use toxlab_core::{ClassId, Dataset, ProbDist};

use crate::config::{self, EnsembleMode, ProviderKind, RunConfig};
use crate::manifest::ArtifactSink;
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let loaded = config::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let mut cfg = loaded.config;
    apply_flags(&mut cfg, &cli.command);
    cfg.validate()?;
    let mut sink = ArtifactSink::new(&cli.global.out)?;
    let name = command_name(&cli.command);
    match &cli.command {
        Command::GenCorpus { .. } => gen_corpus(&cfg, &mut sink)?,
        Command::Ingest { input, .. } => ingest(&cfg, input.as_deref(), &mut sink)?,
        Command::Analyze => analyze(&cfg, &mut sink)?,
        Command::Augment { .. } => augment(&cfg, &mut sink)?,
        Command::Train { .. } => train(&cfg, &mut sink)?,
        Command::Predict { input, .. } => predict(&cfg, input.as_deref(), &mut sink)?,
        Command::Evaluate { gold, pred } => evaluate(&cfg, gold.as_deref(), pred.as_deref(), &mut sink)?,
        Command::Calibrate { .. } => calibrate(&cfg, &mut sink)?,
        Command::Sweep { .. } => sweep(&cfg, &mut sink)?,
        Command::Ledger { rows, reference } => ledger(&cfg, rows.as_deref(), *reference, &mut sink)?,
    }
    let manifest = sink.finish(name, &cfg, &loaded.warnings)?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenCorpus { .. } => "gen-corpus",
        Command::Ingest { .. } => "ingest",
        Command::Analyze => "analyze",
        Command::Augment { .. } => "augment",
        Command::Train { .. } => "train",
        Command::Predict { .. } => "predict",
        Command::Evaluate { .. } => "evaluate",
        Command::Calibrate { .. } => "calibrate",
        Command::Sweep { .. } => "sweep",
        Command::Ledger { .. } => "ledger",
    }
}

/// Typed flags win over both the file and `--set`.
fn apply_flags(cfg: &mut RunConfig, c: &Command) {
    fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
        if let Some(v) = v {
            *slot = v.clone();
        }
    }
    match c {
        Command::GenCorpus { seed } => set(&mut cfg.corpus.seed, seed),
        Command::Ingest { split, train_fraction, seed, .. } => {
            cfg.corpus.split |= *split;
            set(&mut cfg.corpus.train_fraction, train_fraction);
            set(&mut cfg.corpus.seed, seed);
        }
        Command::Augment { train, ratio, seed } => {
            if train.is_some() {
                cfg.paths.train = train.clone();
            }
            set(&mut cfg.augment.target_ratio, ratio);
            set(&mut cfg.augment.seed, seed);
        }
        Command::Train { train, epochs, seed, llm_lr } => {
            if train.is_some() {
                cfg.paths.train = train.clone();
            }
            if *llm_lr {
                cfg.train.base_lr = LLM_BASE_LR;
            }
            set(&mut cfg.train.epochs, epochs);
            set(&mut cfg.train.seed, seed);
        }
        Command::Predict { model, .. } | Command::Calibrate { model } => {
            if model.is_some() {
                cfg.paths.model = model.clone();
            }
        }
        Command::Evaluate { gold, pred } => {
            if gold.is_some() {
                cfg.paths.test = gold.clone();
            }
            if pred.is_some() {
                cfg.paths.predictions = pred.clone();
            }
        }
        Command::Sweep { ratios, workers } => {
            set(&mut cfg.sweep.ratios, ratios);
            set(&mut cfg.sweep.workers, workers);
        }
        Command::Ledger { rows, .. } => {
            if rows.is_some() {
                cfg.paths.ledger_rows = rows.clone();
            }
        }
        Command::Analyze => {}
    }
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| anyhow!("`{key}` is not set (use --config or --set {key}=PATH)"))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let out = parse_dataset(BufReader::new(file), DataFormat::from_path(path), name)
        .with_context(|| format!("parsing {}", path.display()))?;
    if out.skipped_label + out.skipped_empty > 0 {
        eprintln!(
            "warning: {}: skipped {} records with invalid labels and {} with empty text",
            path.display(),
            out.skipped_label,
            out.skipped_empty
        );
    }
    Ok(out.dataset)
}

fn dataset_bytes(d: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset_jsonl(d, &mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let file = File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    TrainedModel::load(BufReader::new(file)).with_context(|| format!("loading model {}", path.display()))
}

fn gen_corpus(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let corpus = generate_corpus(&cfg.generator, cfg.corpus.seed)?;
    for (name, d) in [("train.jsonl", &corpus.train), ("val.jsonl", &corpus.val), ("test.jsonl", &corpus.test)] {
        sink.write(name, &dataset_bytes(d)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    source: String,
    records: usize,
    skipped_label: usize,
    skipped_empty: usize,
    train: Option<usize>,
    val: Option<usize>,
}

fn ingest(cfg: &RunConfig, input: Option<&Path>, sink: &mut ArtifactSink) -> Result<()> {
    let path = match input {
        Some(p) => p,
        None => require(&cfg.paths.train, "paths.train")?,
    };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let out = parse_dataset(BufReader::new(file), DataFormat::from_path(path), name)?;
    let mut summary = IngestSummary {
        source: name.to_owned(),
        records: out.dataset.len(),
        skipped_label: out.skipped_label,
        skipped_empty: out.skipped_empty,
        train: None,
        val: None,
    };
    if cfg.corpus.split {
        let (tr, va) = split_dataset(&out.dataset, cfg.corpus.train_fraction, cfg.corpus.seed)?;
        summary.train = Some(tr.len());
        summary.val = Some(va.len());
        sink.write("train.jsonl", &dataset_bytes(&tr)?)?;
        sink.write("val.jsonl", &dataset_bytes(&va)?)?;
    } else {
        sink.write("ingested.jsonl", &dataset_bytes(&out.dataset)?)?;
    }
    sink.write("ingest.json", &json_bytes(&summary)?)?;
    Ok(())
}

#[derive(Serialize)]
struct SplitAnalysis {
    split: &'static str,
    distribution: ClassHistogram,
    duplicates: DuplicateReport,
}

fn analyze(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let splits = [("train", &cfg.paths.train), ("val", &cfg.paths.val), ("test", &cfg.paths.test)];
    let mut md = String::new();
    let mut all = Vec::new();
    for (split, path) in splits {
        let Some(path) = path else { continue };
        let d = load_dataset(path)?;
        let a = SplitAnalysis {
            split,
            distribution: class_distribution(&d),
            duplicates: duplicate_report(&d),
        };
        md.push_str(&format!("## {split}\n\n{}\n", a.distribution.to_markdown()));
        md.push_str(&format!(
            "Exact duplicates: {:.1}% of examples in {} groups. Conflicting labels: {:.1}%.\n\n",
            100.0 * a.duplicates.exact_duplicate_fraction,
            a.duplicates.group_count,
            100.0 * a.duplicates.conflicting_label_fraction
        ));
        all.push(a);
    }
    if all.is_empty() {
        bail!("analyze needs at least one of paths.train, paths.val, paths.test");
    }
    sink.write("analysis.md", md.as_bytes())?;
    sink.write("analysis.json", &json_bytes(&all)?)?;
    Ok(())
}

fn provider(cfg: &RunConfig) -> Result<Box<dyn ParaphraseProvider>> {
    Ok(match cfg.provider.kind {
        ProviderKind::Mock => Box::new(MockProvider::default()),
        ProviderKind::Remote => {
            let var = |name: &str| std::env::var(name).with_context(|| format!("{name} is not set"));
            let (endpoint, key) = (var(ENDPOINT_VAR)?, var(KEY_VAR)?);
            Box::new(RemoteProvider::new(
                endpoint,
                key,
                Duration::from_secs(cfg.provider.timeout_secs),
                cfg.provider.max_retries,
            ))
        }
    })
}

#[derive(Serialize)]
struct PoolSummary<'a> {
    stats: &'a PoolStats,
    failures: usize,
    synthetic_in_train: usize,
    synthetic_share: f64,
}

fn augment(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let train = load_dataset(require(&cfg.paths.train, "paths.train")?)?;
    let provider = provider(cfg)?;
    let pool = build_pool(&train, provider.as_ref(), &cfg.augment, &cfg.features)?;
    for f in &pool.failures {
        eprintln!("warning: paraphrase of {} failed: {}", f.source_id, f.message);
    }
    let mut bytes = Vec::new();
    write_pool_jsonl(&pool.candidates, &mut bytes)?;
    sink.write("pool.jsonl", &bytes)?;
    let mixed = augment_train(&train, &pool.kept(), &cfg.augment)
        .context("sampling the synthetic pool (lower augment.target_ratio or raise augment.per_source)")?;
    sink.write("augmented_train.jsonl", &dataset_bytes(&mixed)?)?;
    let summary = PoolSummary {
        stats: &pool.stats,
        failures: pool.failures.len(),
        synthetic_in_train: mixed.synthetic_count(),
        synthetic_share: mixed.synthetic_share(),
    };
    sink.write("pool_stats.json", &json_bytes(&summary)?)?;
    Ok(())
}

fn train(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let data = load_dataset(require(&cfg.paths.train, "paths.train")?)?;
    let model = TrainedModel::fit(
        cfg.strategy.kind,
        &data,
        &cfg.train,
        &cfg.features,
        cfg.strategy.toxic_threshold,
        cfg.strategy.oversample_cap,
    )?;
    let mut bytes = Vec::new();
    model.save(&mut bytes)?;
    sink.write("model.bin", &bytes)?;
    Ok(())
}

/// Per-text logits for any strategy. Non-flat models expose probabilities
/// only, so their log-probabilities stand in (softmax maps them back).
fn logits(model: &TrainedModel, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
    if let Some(z) = model.flat_logits(texts) {
        return Ok(z?);
    }
    Ok(model
        .predict(texts)?
        .into_iter()
        .map(|(_, p)| p.as_slice().iter().map(|&v| v.max(PROB_FLOOR).ln()).collect())
        .collect())
}

fn load_calibration(cfg: &RunConfig) -> Result<Option<CalibrationParams>> {
    let Some(path) = &cfg.paths.calibration else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Labels and distributions of one model, calibrated when configured.
fn model_outputs(model: &TrainedModel, texts: &[&str], cal: Option<&CalibrationParams>) -> Result<Vec<(ClassId, ProbDist)>> {
    match cal {
        None => Ok(model.predict(texts)?),
        Some(params) => logits(model, texts)?
            .iter()
            .map(|z| {
                let p = calibrate_logits(z, params)?;
                Ok((ClassId::from_index(p.argmax()), p))
            })
            .collect(),
    }
}

fn predict(cfg: &RunConfig, input: Option<&Path>, sink: &mut ArtifactSink) -> Result<()> {
    let path = match input {
        Some(p) => p,
        None => require(&cfg.paths.test, "paths.test")?,
    };
    let data = load_dataset(path)?;
    let texts = data.texts();
    let cal = load_calibration(cfg)?;
    let mut model_paths = vec![require(&cfg.paths.model, "paths.model")?.to_path_buf()];
    model_paths.extend(cfg.strategy.ensemble.iter().cloned());
    let outputs: Vec<Vec<(ClassId, ProbDist)>> = model_paths
        .iter()
        .map(|p| model_outputs(&load_model(p)?, &texts, cal.as_ref()))
        .collect::<Result<_>>()?;
    if cfg.strategy.ensemble_mode == EnsembleMode::Route && outputs.len() != 2 {
        bail!("route mode needs exactly two models, got {}", outputs.len());
    }

    let mut labels = Vec::with_capacity(texts.len());
    for i in 0..texts.len() {
        let members: Vec<&(ClassId, ProbDist)> = outputs.iter().map(|o| &o[i]).collect();
        let label = if members.len() == 1 {
            let (label, p) = members[0];
            match &cfg.strategy.boost {
                Some(b) => ClassId::from_index(apply_class_boost(p, b).argmax()),
                None => *label,
            }
        } else {
            let dists: Vec<ProbDist> = members.iter().map(|m| m.1.clone()).collect();
            let mut avg = ensemble_average(&dists)?;
            if let Some(b) = &cfg.strategy.boost {
                avg = apply_class_boost(&avg, b);
            }
            match cfg.strategy.ensemble_mode {
                EnsembleMode::Average => ClassId::from_index(avg.argmax()),
                EnsembleMode::Vote => {
                    let votes: Vec<ClassId> = members.iter().map(|m| m.0).collect();
                    ensemble_vote(&votes, &avg)
                }
                EnsembleMode::Route => confidence_route(&dists[0], &dists[1], cfg.strategy.route_tau),
            }
        };
        labels.push(label);
    }
    let mut bytes = Vec::new();
    write_predictions(&data.ids(), &labels, &mut bytes)?;
    sink.write("predictions.tsv", &bytes)?;
    Ok(())
}

/// Gold and predicted labels aligned on id.
fn aligned(gold_path: &Path, pred_path: &Path) -> Result<(Vec<ClassId>, Vec<ClassId>)> {
    let gold = load_dataset(gold_path)?;
    let file = File::open(pred_path).with_context(|| format!("opening {}", pred_path.display()))?;
    let preds: HashMap<String, ClassId> = read_predictions(BufReader::new(file))
        .with_context(|| format!("parsing {}", pred_path.display()))?
        .into_iter()
        .collect();
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    for e in &gold {
        let label = e
            .label
            .ok_or_else(|| anyhow!("{}: example {} has no gold label", gold_path.display(), e.id))?;
        let pred = preds
            .get(&e.id)
            .ok_or_else(|| anyhow!("{}: no prediction for {}", pred_path.display(), e.id))?;
        g.push(label);
        p.push(*pred);
    }
    Ok((g, p))
}

fn report_for(gold: &Path, pred: &Path) -> Result<EvalReport> {
    let (g, p) = aligned(gold, pred)?;
    Ok(classification_report(&confusion_matrix(&g, &p)?))
}

fn evaluate(cfg: &RunConfig, gold: Option<&Path>, pred: Option<&Path>, sink: &mut ArtifactSink) -> Result<()> {
    let gold = gold.map_or_else(|| require(&cfg.paths.test, "paths.test"), Ok)?;
    let pred = pred.map_or_else(|| require(&cfg.paths.predictions, "paths.predictions"), Ok)?;
    let test = report_for(gold, pred)?;
    sink.write("report.json", test.to_json()?.as_bytes())?;
    sink.write("report.md", test.to_markdown().as_bytes())?;
    if let (Some(vg), Some(vp)) = (&cfg.paths.val, &cfg.paths.val_predictions) {
        let val = report_for(vg, vp)?;
        let trap = trap_report(&val, &test, cfg.evaluate.trap_margin);
        sink.write("trap.json", &json_bytes(&trap)?)?;
        sink.write("trap.md", trap.to_markdown().as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationMetrics {
    split: &'static str,
    nll_before: f64,
    nll_after: f64,
    ece_before: f64,
    ece_after: f64,
}

fn calibration_metrics(
    split: &'static str,
    model: &TrainedModel,
    d: &Dataset,
    params: &CalibrationParams,
    bins: usize,
) -> Result<CalibrationMetrics> {
    let labels: Vec<usize> = d.labels()?.into_iter().map(ClassId::index).collect();
    let z = logits(model, &d.texts())?;
    let before: Vec<ProbDist> = z.iter().map(|v| toxlab_core::model::softmax(v)).collect();
    let after: Vec<ProbDist> = z.iter().map(|v| calibrate_logits(v, params)).collect::<Result<_, _>>()?;
    Ok(CalibrationMetrics {
        split,
        nll_before: mean_nll(&before, &labels),
        nll_after: mean_nll(&after, &labels),
        ece_before: expected_calibration_error(&before, &labels, bins),
        ece_after: expected_calibration_error(&after, &labels, bins),
    })
}

fn calibrate(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let model = load_model(require(&cfg.paths.model, "paths.model")?)?;
    let val = load_dataset(require(&cfg.paths.val, "paths.val")?)?;
    let labels: Vec<usize> = val.labels()?.into_iter().map(ClassId::index).collect();
    let params = fit_calibration(cfg.calibration.method, &logits(&model, &val.texts())?, &labels)?;
    sink.write("calibration.json", &json_bytes(&params)?)?;

    let mut rows = vec![calibration_metrics("val", &model, &val, &params, cfg.calibration.ece_bins)?];
    if let Some(p) = &cfg.paths.test {
        let test = load_dataset(p)?;
        if test.iter().all(|e| e.label.is_some()) {
            rows.push(calibration_metrics("test", &model, &test, &params, cfg.calibration.ece_bins)?);
        }
    }
    let mut md = String::from("| Split | NLL before | NLL after | ECE before | ECE after |\n|---|---:|---:|---:|---:|\n");
    for r in &rows {
        md.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            r.split, r.nll_before, r.nll_after, r.ece_before, r.ece_after
        ));
    }
    sink.write("calibration_report.json", &json_bytes(&rows)?)?;
    sink.write("calibration_report.md", md.as_bytes())?;
    Ok(())
}

fn sweep(cfg: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let train = load_dataset(require(&cfg.paths.train, "paths.train")?)?;
    let val = load_dataset(require(&cfg.paths.val, "paths.val")?)?;
    let test = load_dataset(require(&cfg.paths.test, "paths.test")?)?;
    let pool_path = require(&cfg.paths.pool, "paths.pool")?;
    let file = File::open(pool_path).with_context(|| format!("opening {}", pool_path.display()))?;
    let pool: Vec<_> = read_pool_jsonl(BufReader::new(file))?
        .into_iter()
        .filter(|c| c.status == CandidateStatus::Kept)
        .collect();
    let setup = SweepSetup {
        train: &train,
        val: &val,
        test: &test,
        pool: &pool,
        strategy: cfg.strategy.kind,
        train_cfg: cfg.train.clone(),
        features: cfg.features.clone(),
        augment: cfg.augment.clone(),
        toxic_threshold: cfg.strategy.toxic_threshold,
        oversample_cap: cfg.strategy.oversample_cap,
        workers: cfg.sweep.workers,
    };
    let table = ratio_sweep(&setup, &cfg.sweep.ratios)?;
    sink.write("sweep.md", table.to_markdown().as_bytes())?;
    sink.write("sweep.tsv", table.to_tsv().as_bytes())?;
    sink.write("sweep.json", &json_bytes(&table)?)?;
    Ok(())
}

fn ledger(cfg: &RunConfig, rows: Option<&Path>, reference: bool, sink: &mut ArtifactSink) -> Result<()> {
    let mut all: Vec<LedgerRow> = if reference { reference_rows() } else { Vec::new() };
    if let Some(p) = rows.or(cfg.paths.ledger_rows.as_deref()) {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let extra: Vec<LedgerRow> = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        all.extend(extra);
    }
    if all.is_empty() {
        bail!("ledger has no rows: pass --rows FILE and/or --reference");
    }
    sink.write("ledger.md", experiment_ledger(&all).as_bytes())?;
    Ok(())
}
