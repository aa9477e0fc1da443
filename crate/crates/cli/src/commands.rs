//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use geoseq_core::corpus::{
    load_corpus, save_corpus, split_corpus, GeometryProblem, ProblemKind, SplitSpec,
};
use geoseq_core::evaluator::{
    calculation_accuracy, read_prediction_dump, render_report, topk_accuracy, write_prediction_dump,
    EvalReport, GoldTarget, ProblemPrediction, ReportConfig,
};
use geoseq_core::interpreter::{execute_program, parse_program_str, NumberEnvironment};
use geoseq_core::pipeline::{
    build_finetune_samples, build_pretrain_samples, build_proving_sample, load_diagram, seeds,
    to_train_sample, PreparedSample,
};
use geoseq_core::reformulator::ReasonCatalog;
use geoseq_core::rng::derive_seed;
use geoseq_core::seqmodel::{
    beam_search, load_checkpoint, save_checkpoint, ModelConfig, SeqModel, TaskMix, TrainConfig,
    TrainSample, TrainSession,
};
use geoseq_core::synthetic::{generate, SyntheticSpec};
use geoseq_core::tokenizer::{build_vocab, Vocab, VocabCaps};

use crate::manifest::ManifestBuilder;
use crate::ModelArgs;

const SPLITS: [&str; 3] = ["train", "val", "test"];

pub fn gen_synthetic(out: &Path, seed: u64, proving: usize, calculation: usize) -> Result<()> {
    let mut manifest = ManifestBuilder::new("gen-synthetic", seed);
    manifest.config("proving", proving).config("calculation", calculation);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let corpus = generate(&SyntheticSpec { proving, calculation, seed });
    let proving_path = out.join("proving.jsonl");
    let calculation_path = out.join("calculation.jsonl");
    let manifest_path = out.join("manifest.json");
    save_corpus(&corpus.proving, &proving_path)?;
    save_corpus(&corpus.calculation, &calculation_path)?;
    corpus.manifest.save(&manifest_path)?;
    log::info!(
        "generated {} proving + {} calculation problems in {}",
        proving,
        calculation,
        out.display()
    );
    manifest.output(&proving_path).output(&calculation_path).output(&manifest_path);
    manifest.write(out)
}

pub fn prepare(corpus_dir: &Path, out: &Path, seed: u64, ratios: &str) -> Result<()> {
    let ratios = parse_ratios(ratios)?;
    let mut manifest = ManifestBuilder::new("prepare", seed);
    manifest.config("ratios", format!("{},{},{}", ratios.0, ratios.1, ratios.2));
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let spec = SplitSpec::new(ratios, seed)?;
    let mut any = false;
    let mut all_problems: Vec<GeometryProblem> = Vec::new();
    let mut split_files: Vec<PathBuf> = Vec::new();
    for (kind, file) in
        [(ProblemKind::Proving, "proving.jsonl"), (ProblemKind::Calculation, "calculation.jsonl")]
    {
        let path = corpus_dir.join(file);
        if !path.exists() {
            continue;
        }
        any = true;
        manifest.input(&path)?;
        let problems = load_corpus(&path, Some(kind))?;
        log::info!("loaded {} problems from {}", problems.len(), path.display());
        all_problems.extend(problems.iter().cloned());
        let (train, val, test) = split_corpus(&problems, &spec)?;
        for (split_name, subset) in SPLITS.iter().zip([&train, &val, &test]) {
            let out_path = out.join(format!("{}.{split_name}.jsonl", kind));
            save_corpus(subset, &out_path)?;
            split_files.push(out_path);
        }
    }
    if !any {
        bail!(
            "no corpus files found in {} (expected proving.jsonl and/or calculation.jsonl)",
            corpus_dir.display()
        );
    }

    let vocab = build_vocab(&[&all_problems], VocabCaps::default())?;
    let vocab_path = out.join("vocab.txt");
    let sidecar_path = out.join("vocab.classes.json");
    vocab.save(&vocab_path, &sidecar_path)?;
    log::info!("vocabulary: {} tokens", vocab.len());

    for f in &split_files {
        manifest.output(f);
    }
    manifest.output(&vocab_path).output(&sidecar_path);
    manifest.write(out)
}

/// Print pretraining pairs to stdout: input tokens, tab, target tokens.
pub fn pretrain_targets(corpus: &Path, seed: u64) -> Result<()> {
    let problems = if corpus.is_dir() {
        let mut all = Vec::new();
        for (kind, file) in [
            (ProblemKind::Calculation, "calculation.jsonl"),
            (ProblemKind::Proving, "proving.jsonl"),
        ] {
            let path = corpus.join(file);
            if path.exists() {
                all.extend(load_corpus(&path, Some(kind))?);
            }
        }
        all
    } else {
        load_corpus(corpus, None)?
    };
    if problems.is_empty() {
        bail!("no problems found at {}", corpus.display());
    }
    let samples = build_pretrain_samples(&problems, seed)?;
    let mut out = String::new();
    for sample in &samples {
        out.push_str(&sample.src_tokens.join(" "));
        out.push('\t');
        out.push_str(&sample.tgt_tokens.join(" "));
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

pub fn execute(numbers: &str, program: &str) -> Result<()> {
    let numbers: Vec<f64> = numbers
        .split(',')
        .map(|n| n.trim().parse::<f64>().with_context(|| format!("bad number '{n}'")))
        .collect::<Result<_>>()?;
    let env = NumberEnvironment::new(numbers);
    let parsed = parse_program_str(program)?;
    let value = execute_program(&parsed, &env)?;
    println!("{value}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn pretrain(
    data: &Path,
    out: &Path,
    seed: u64,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    model_args: ModelArgs,
) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size,
        max_epochs: epochs,
        seed,
        task_mix: TaskMix::Pretrain,
    };
    run_training("pretrain", data, out, seed, cfg, None, model_args)
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    data: &Path,
    out: &Path,
    seed: u64,
    task_mix: &str,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    init_from: Option<&Path>,
    model_args: ModelArgs,
) -> Result<()> {
    let task_mix: TaskMix = task_mix.parse().map_err(anyhow::Error::msg)?;
    if task_mix == TaskMix::Pretrain {
        bail!("`train` runs on program/target sequences; use the `pretrain` subcommand for the pretraining mix");
    }
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size,
        max_epochs: epochs,
        seed,
        task_mix,
    };
    run_training("train", data, out, seed, cfg, init_from, model_args)
}

fn run_training(
    command: &str,
    data: &Path,
    out: &Path,
    seed: u64,
    cfg: TrainConfig,
    init_from: Option<&Path>,
    model_args: ModelArgs,
) -> Result<()> {
    let mut manifest = ManifestBuilder::new(command, seed);
    manifest
        .config("lr", cfg.learning_rate)
        .config("epochs", cfg.max_epochs)
        .config("batch_size", cfg.batch_size)
        .config("task_mix", format!("{:?}", cfg.task_mix));
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let vocab = load_vocab(data, &mut manifest)?;
    let catalog = ReasonCatalog::builtin();
    let problems = load_split(data, "train", &mut manifest)?;
    if problems.is_empty() {
        bail!("no training problems under {}", data.display());
    }

    let prepared = match cfg.task_mix {
        TaskMix::Pretrain => build_pretrain_samples(&problems, seed)?,
        _ => build_finetune_samples(&problems, &catalog, seed)?,
    };

    let mut model = match init_from {
        Some(ckpt) => {
            manifest.input(ckpt)?;
            load_checkpoint(ckpt, Some(vocab.len()))?
        }
        None => {
            let config = model_config(model_args, vocab.len());
            SeqModel::new(config, derive_seed(seed, seeds::MODEL_INIT, "geoseq"))?
        }
    };

    let samples = encode_samples(&prepared, &problems, &vocab, data, &model)?;
    log::info!("training on {} samples ({:?})", samples.len(), cfg.task_mix);

    let mut session = TrainSession::new(&model, &samples, &cfg)?;
    let mut loss_log = String::from("epoch,split,mean_loss\n");
    for epoch in 0..cfg.max_epochs {
        let loss = session.run_epoch(&mut model)?;
        loss_log.push_str(&format!("{epoch},train,{loss}\n"));
        if epoch % 10 == 0 || epoch + 1 == cfg.max_epochs {
            log::info!("epoch {epoch}: mean loss {loss:.6}");
        }
    }

    let ckpt_path = out.join("checkpoint.json");
    let loss_path = out.join("loss_log.csv");
    save_checkpoint(&model, &ckpt_path)?;
    fs::write(&loss_path, loss_log).with_context(|| format!("writing {}", loss_path.display()))?;
    manifest.output(&ckpt_path).output(&loss_path);
    manifest.write(out)
}

pub fn decode(
    data: &Path,
    checkpoint: &Path,
    out: &Path,
    seed: u64,
    split: &str,
    beam_width: usize,
    max_len: usize,
) -> Result<()> {
    check_split(split)?;
    let mut manifest = ManifestBuilder::new("decode", seed);
    manifest
        .config("split", split)
        .config("beam_width", beam_width)
        .config("max_len", max_len);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let vocab = load_vocab(data, &mut manifest)?;
    manifest.input(checkpoint)?;
    let model = load_checkpoint(checkpoint, Some(vocab.len()))?;
    let catalog = ReasonCatalog::builtin();
    let problems = load_split(data, split, &mut manifest)?;
    if problems.is_empty() {
        bail!("no problems in split '{split}' under {}", data.display());
    }
    let prepared = build_finetune_samples(&problems, &catalog, seed)?;

    let mut predictions = Vec::with_capacity(problems.len());
    for (problem, sample) in problems.iter().zip(&prepared) {
        let diagram = load_diagram(problem, data, model.featurizer())?;
        let src_ids = vocab.encode_ids(&sample.src_tokens);
        let beams = beam_search(&model, &src_ids, &diagram, beam_width, max_len)?;
        let beam_strings: Vec<String> = beams
            .iter()
            .map(|b| {
                let tokens = vocab.decode_ids(&b.tokens).expect("beam ids are in-vocab");
                tokens
                    .iter()
                    .filter(|t| !vocab.id_of(t).map(|id| vocab.is_control(id)).unwrap_or(false))
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        predictions.push(ProblemPrediction { id: problem.id.clone(), beams: beam_strings });
    }

    let dump_path = out.join("predictions.tsv");
    write_prediction_dump(&predictions, &dump_path)?;
    log::info!("decoded {} problems into {}", predictions.len(), dump_path.display());
    manifest.output(&dump_path);
    manifest.write(out)
}

pub fn eval(
    data: &Path,
    predictions_path: &Path,
    out: &Path,
    seed: u64,
    split: &str,
    beam_width: usize,
    tolerance: f64,
) -> Result<()> {
    check_split(split)?;
    let mut manifest = ManifestBuilder::new("eval", seed);
    manifest
        .config("split", split)
        .config("beam_width", beam_width)
        .config("tolerance", tolerance);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    manifest.input(predictions_path)?;
    let predictions = read_prediction_dump(predictions_path)?;
    let catalog = ReasonCatalog::builtin();
    let problems = load_split(data, split, &mut manifest)?;
    let by_id: BTreeMap<String, GeometryProblem> =
        problems.iter().map(|p| (p.id.clone(), p.clone())).collect();

    let mut proving_preds = Vec::new();
    let mut calc_preds = Vec::new();
    for prediction in predictions {
        match by_id.get(&prediction.id) {
            Some(p) if p.kind == ProblemKind::Proving => proving_preds.push(prediction),
            Some(_) => calc_preds.push(prediction),
            None => bail!("prediction for unknown problem '{}'", prediction.id),
        }
    }

    let mut report = EvalReport::new(ReportConfig::new(beam_width, tolerance));
    if !calc_preds.is_empty() {
        let calc = calculation_accuracy(&calc_preds, &by_id, tolerance)?;
        report = report.with_calculation(&calc);
    }
    if !proving_preds.is_empty() {
        let golds: BTreeMap<String, GoldTarget> = problems
            .iter()
            .filter(|p| p.kind == ProblemKind::Proving)
            .map(|p| {
                let sample = build_proving_sample(p, &catalog, seed)?;
                Ok((
                    p.id.clone(),
                    GoldTarget { target: sample.gold_string, subtask: p.subtask },
                ))
            })
            .collect::<Result<_>>()?;
        let top1 = topk_accuracy(&proving_preds, &golds, 1)?;
        let topk = topk_accuracy(&proving_preds, &golds, beam_width)?;
        report = report.with_proving(&top1, &topk);
    }

    let (text, json) = render_report(&report);
    print!("{text}");
    let text_path = out.join("report.txt");
    let json_path = out.join("report.json");
    fs::write(&text_path, &text).with_context(|| format!("writing {}", text_path.display()))?;
    fs::write(&json_path, &json).with_context(|| format!("writing {}", json_path.display()))?;
    manifest.output(&text_path).output(&json_path);
    manifest.write(out)
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad ratio '{p}'")))
        .collect::<Result<_>>()?;
    let [train, val, test] = parts.as_slice() else {
        bail!("ratios must be three comma-separated numbers, got '{s}'");
    };
    Ok((*train, *val, *test))
}

fn check_split(split: &str) -> Result<()> {
    if !SPLITS.contains(&split) {
        bail!("unknown split '{split}' (expected train|val|test)");
    }
    Ok(())
}

fn model_config(args: ModelArgs, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        d_model: args.d_model,
        n_layers: args.layers,
        n_heads: args.heads,
        d_ff: args.d_ff,
        max_src_len: args.max_src_len,
        max_tgt_len: args.max_tgt_len,
        vocab_size,
        ..ModelConfig::desk_default(vocab_size)
    }
}

fn load_vocab(data: &Path, manifest: &mut ManifestBuilder) -> Result<Vocab> {
    let vocab_path = data.join("vocab.txt");
    let sidecar_path = data.join("vocab.classes.json");
    manifest.input(&vocab_path)?;
    manifest.input(&sidecar_path)?;
    Ok(Vocab::load(&vocab_path, &sidecar_path)?)
}

/// Load one split, calculation problems first, then proving.
fn load_split(
    data: &Path,
    split: &str,
    manifest: &mut ManifestBuilder,
) -> Result<Vec<GeometryProblem>> {
    let mut problems = Vec::new();
    for (kind, stem) in
        [(ProblemKind::Calculation, "calculation"), (ProblemKind::Proving, "proving")]
    {
        let path = data.join(format!("{stem}.{split}.jsonl"));
        if path.exists() {
            manifest.input(&path)?;
            problems.extend(load_corpus(&path, Some(kind))?);
        }
    }
    Ok(problems)
}

fn encode_samples(
    prepared: &[PreparedSample],
    problems: &[GeometryProblem],
    vocab: &Vocab,
    data: &Path,
    model: &SeqModel,
) -> Result<Vec<TrainSample>> {
    let by_id: BTreeMap<&str, &GeometryProblem> =
        problems.iter().map(|p| (p.id.as_str(), p)).collect();
    prepared
        .iter()
        .map(|sample| {
            // Pretraining sample ids carry a #mep/#mlm suffix.
            let base_id = sample.id.split('#').next().unwrap_or(&sample.id);
            let problem = by_id
                .get(base_id)
                .with_context(|| format!("sample '{}' has no source problem", sample.id))?;
            let diagram = load_diagram(problem, data, model.featurizer())?;
            Ok(to_train_sample(sample, vocab, diagram))
        })
        .collect()
}

