//! Subcommand bodies. Each writes its reports plus `manifest.toml` under
//! the output directory and returns a short summary for stdout.

use std::path::Path;

use infostat::corpus::{corpus_stats, gen_synthetic, load_corpus, save_corpus, split_kfold, Corpus};
use infostat::eval::{randomization_test, CvResult};
use infostat::pipeline::{cross_validate_encoder, TrainedModel};
use infostat::probe::probe_model;
use infostat::tokenizer::build_vocab;
use infostat::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.toml";

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    write(dir, name, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
}

fn corpus(config: &ExperimentConfig) -> Result<Corpus> {
    let path = config.corpus.as_ref().ok_or_else(|| Error::Config("--corpus is required".into()))?;
    load_corpus(path)
}

/// The whole corpus, or the training side of `config.fold`.
fn training_part(config: &ExperimentConfig, corpus: &Corpus) -> Result<Corpus> {
    match config.fold {
        None => Ok(corpus.clone()),
        Some(i) => {
            let folds = split_kfold(corpus, config.folds, config.seed)?;
            let fold = folds
                .get(i)
                .ok_or_else(|| Error::Config(format!("fold {i} out of range for {} folds", config.folds)))?;
            Ok(corpus.subset(&fold.train))
        }
    }
}

pub fn execute(mut config: ExperimentConfig) -> Result<String> {
    let dir = config.output_dir.clone();
    let summary = match config.command.as_str() {
        "gen-synthetic" => gen_synthetic_cmd(&config, &dir)?,
        "build-vocab" => build_vocab_cmd(&config, &dir)?,
        "train" => train_cmd(&mut config, &dir)?,
        "cross-validate" => cross_validate_cmd(&mut config, &dir)?,
        "ablate" => ablate_cmd(&mut config, &dir)?,
        "probe" => probe_cmd(&mut config, &dir)?,
        other => return Err(Error::Config(format!("unknown command {other:?}"))),
    };
    write(&dir, MANIFEST, &config.to_toml())?;
    Ok(summary)
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn gen_synthetic_cmd(config: &ExperimentConfig, dir: &Path) -> Result<String> {
    let corpus = gen_synthetic(&config.synthetic, config.seed)?;
    prepare(dir)?;
    save_corpus(&corpus, dir.join("corpus.jsonl"))?;
    let stats = corpus_stats(&corpus).to_table();
    write(dir, "stats.txt", &stats)?;
    Ok(stats)
}

fn build_vocab_cmd(config: &ExperimentConfig, dir: &Path) -> Result<String> {
    let corpus = corpus(config)?;
    let vocab = build_vocab(&training_part(config, &corpus)?, config.vocab_size)?;
    prepare(dir)?;
    vocab.save(dir.join("vocab.txt"))?;
    Ok(format!("vocabulary of {} tokens\n", vocab.len()))
}

fn train_cmd(config: &mut ExperimentConfig, dir: &Path) -> Result<String> {
    let settings = config.settings()?;
    let corpus = corpus(config)?;
    let train = training_part(config, &corpus)?;
    prepare(dir)?;
    let (model, log) = TrainedModel::fit_with(&train, &settings, |e, _| {
        eprintln!("epoch {:>3}  loss {:.4}", e.epoch, e.mean_loss)
    })?;
    let extra = json!({ "fold": config.fold, "folds": config.folds, "split_seed": config.seed });
    model.save(dir.join("model.ckpt"), extra)?;
    write_json(dir, "train_log.json", &log)?;
    Ok(format!(
        "trained on {} mentions, final loss {:.4}\n",
        train.mention_count(),
        log.epochs.last().map_or(f64::NAN, |e| e.mean_loss)
    ))
}

fn write_cv(dir: &Path, result: &CvResult) -> Result<()> {
    prepare(dir)?;
    write(dir, "report.txt", &result.to_table())?;
    write_json(dir, "report.json", result)?;
    write(dir, "records.jsonl", &result.records_jsonl())
}

fn cross_validate_cmd(config: &mut ExperimentConfig, dir: &Path) -> Result<String> {
    let settings = config.settings()?;
    let corpus = corpus(config)?;
    let result = cross_validate_encoder(&corpus, &settings, config.folds, config.seed)?;
    write_cv(dir, &result)?;
    Ok(result.to_table())
}

#[derive(Serialize)]
struct AblationRow {
    variant: String,
    accuracy: f64,
    delta: f64,
    p_value: Option<f64>,
    f1: Vec<(String, f64)>,
}

fn ablate_cmd(config: &mut ExperimentConfig, dir: &Path) -> Result<String> {
    let settings = config.settings()?;
    let corpus = corpus(config)?;
    let mut variants = vec![("full", settings.context.clone())];
    variants.extend(settings.context.ablations());
    let mut results = Vec::new();
    for (name, context) in variants {
        let mut s = settings.clone();
        s.context = context;
        let result = cross_validate_encoder(&corpus, &s, config.folds, config.seed)?;
        write_cv(&dir.join(name), &result)?;
        results.push((name, result));
    }
    let full = &results[0].1;
    let gold = full.gold();
    let mut rows = Vec::new();
    for (name, r) in &results {
        let p_value = if *name == "full" {
            None
        } else {
            Some(randomization_test(&full.predicted(), &r.predicted(), &gold, config.rounds, config.seed)?)
        };
        rows.push(AblationRow {
            variant: name.to_string(),
            accuracy: r.pooled.accuracy,
            delta: r.pooled.accuracy - full.pooled.accuracy,
            p_value,
            f1: r.pooled.classes.iter().map(|c| (c.label.clone(), c.f1)).collect(),
        });
    }
    let table = ablation_table(&rows);
    write(dir, "ablation.txt", &table)?;
    write_json(dir, "ablation.json", &rows)?;
    Ok(table)
}

/// Classes as rows, variants as columns (F1 percent), then accuracy and p.
fn ablation_table(rows: &[AblationRow]) -> String {
    let width = rows[0].f1.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<width$}", "IS class");
    for r in rows {
        out.push_str(&format!(" {:>11}", r.variant));
    }
    out.push('\n');
    for (i, (label, _)) in rows[0].f1.iter().enumerate() {
        out.push_str(&format!("{label:<width$}"));
        for r in rows {
            out.push_str(&format!(" {:>11.1}", 100.0 * r.f1[i].1));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<width$}", "acc"));
    for r in rows {
        out.push_str(&format!(" {:>11.1}", 100.0 * r.accuracy));
    }
    out.push('\n');
    out.push_str(&format!("{:<width$}", "p vs full"));
    for r in rows {
        match r.p_value {
            Some(p) => out.push_str(&format!(" {p:>11.4}")),
            None => out.push_str(&format!(" {:>11}", "-")),
        }
    }
    out.push('\n');
    out
}

fn probe_cmd(config: &mut ExperimentConfig, dir: &Path) -> Result<String> {
    let path = config.probe.checkpoint.clone().ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    let (model, extra) = TrainedModel::load(&path)?;
    let corpus = corpus(config)?;
    // Default to the held-out side of the fold the checkpoint was trained on.
    if config.fold.is_none() {
        if let Some(f) = extra.get("fold").and_then(|v| v.as_u64()) {
            config.fold = Some(f as usize);
            if let Some(k) = extra.get("folds").and_then(|v| v.as_u64()) {
                config.folds = k as usize;
            }
            if let Some(s) = extra.get("split_seed").and_then(|v| v.as_u64()) {
                config.seed = s;
            }
        }
    }
    let target = match config.fold {
        None => corpus,
        Some(i) => {
            let folds = split_kfold(&corpus, config.folds, config.seed)?;
            let fold = folds
                .get(i)
                .ok_or_else(|| Error::Config(format!("fold {i} out of range for {} folds", config.folds)))?;
            corpus.subset(&fold.test)
        }
    };
    let summary = probe_model(&model, &target, config.probe.top_k, config.probe.group_by)?;
    prepare(dir)?;
    let table = summary.to_table();
    write(dir, "probe.txt", &table)?;
    write_json(dir, "probe.json", &summary)?;
    Ok(table)
}
