use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tempnorm::anchor::{anchor_with, AnchorContext, AnchorOptions, TenseHint};
use tempnorm::calendar::CalendarDate;
use tempnorm::checkpoint;
use tempnorm::config::{load_groups, PipelineConfig};
use tempnorm::corpus::{load_jsonl, save_jsonl, Document};
use tempnorm::decoding::{CrfTrainConfig, DecodeStrategy};
use tempnorm::eval::{aggregate, evaluate, evaluate_by_language};
use tempnorm::extraction::{tag, train_tagger};
use tempnorm::mlm::{char_mode_for, train_on_documents, ValueMode};
use tempnorm::pipeline::{
    normalize_spans, run_pipeline, score_normalizer, train_crf_on_documents, ExtractionMode, PipelineModels,
    PipelineOptions, PipelineReport,
};
use tempnorm::slots::{decode_slots, encode_cir, SlotName, SlotSequence, PAD};
use tempnorm::weak::{generate, Style, SyntheticGrammar};

#[derive(Parser)]
#[command(name = "tempnorm", version, about = "Temporal expression extraction, normalization and anchoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CIR into its eleven slots.
    Encode {
        cir: String,
        #[arg(long)]
        json: bool,
    },
    /// Rebuild a CIR from eleven slot tokens (`_` for an empty slot).
    Decode {
        #[arg(num_args = 11, required = true)]
        slots: Vec<String>,
    },
    /// Resolve a CIR against a reference date.
    Anchor {
        cir: String,
        #[arg(long)]
        dct: CalendarDate,
        #[arg(long, default_value = "unknown")]
        tense: TenseHint,
        #[arg(long, default_value_t = AnchorOptions::default().shrove_tide_offset, allow_hyphen_values = true)]
        shrove_offset: i64,
    },
    /// Generate a synthetic weakly annotated corpus.
    SynthData {
        #[arg(long, default_value = "news")]
        style: Style,
        #[arg(long, default_value_t = 2)]
        languages: usize,
        #[arg(long, default_value_t = 1000)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the normalizer.
    Train {
        #[command(flatten)]
        common: TrainArgs,
        /// Tokenize values as characters instead of slots.
        #[arg(long)]
        chars: bool,
    },
    /// Train the BIO extraction tagger.
    TrainTagger {
        #[command(flatten)]
        common: TrainArgs,
    },
    /// Fit CRF transitions on top of a trained normalizer.
    TrainCrf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        normalizer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CrfTrainConfig::default().steps)]
        steps: usize,
    },
    /// Predict temporal expression spans.
    Tag {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tagger: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict CIRs for the annotated spans of each document.
    Normalize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        normalizer: PathBuf,
        #[arg(long)]
        crf: Option<PathBuf>,
        #[arg(long, default_value = "sequential")]
        decode: DecodeStrategy,
        #[arg(long)]
        out: PathBuf,
        /// Print slot accuracy and exact match against the input values.
        #[arg(long)]
        score: bool,
    },
    /// Run extraction, normalization and anchoring, then evaluate.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Use gold spans instead of the tagger.
        #[arg(long)]
        gold_boundaries: bool,
        /// Train and save the checkpoints named in the config before running.
        #[arg(long)]
        train_first: bool,
        #[arg(long)]
        decode: Option<DecodeStrategy>,
    },
    /// Score predicted documents against gold documents.
    Evaluate {
        gold: PathBuf,
        pred: PathBuf,
        #[arg(long)]
        group_file: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Config file whose `[training]` section supplies the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn training_config(args: &TrainArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(std::env::vars())?;
    Ok(cfg)
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<Vec<Document>> {
    load_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn summarize_trace(what: &str, trace: &[f64]) {
    let tail = &trace[trace.len().saturating_sub(50)..];
    if !tail.is_empty() {
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        eprintln!("{what}: {} steps, final mean loss {mean:.4}", trace.len());
    }
}

fn pipeline(config: &Path, gold_boundaries: bool, train_first: bool, decode: Option<DecodeStrategy>) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load(config)?;
    cfg.apply_overrides(std::env::vars())?;
    if gold_boundaries {
        cfg.pipeline.extraction = ExtractionMode::Gold;
    }
    if let Some(d) = decode {
        cfg.pipeline.decode = d;
    }
    cfg.check_inputs(train_first)?;
    let paths = &cfg.paths;
    let data = load(paths.data.as_deref().expect("checked"))?;
    let uses_tagger = cfg.pipeline.extraction == ExtractionMode::Model;
    let uses_crf = cfg.pipeline.decode == DecodeStrategy::ViterbiCrf;

    if train_first {
        let train_docs = match &paths.train_data {
            Some(p) => load(p)?,
            None => data.clone(),
        };
        let t = &cfg.training;
        let (norm, trace) = train_on_documents(&train_docs, ValueMode::Slots, &t.model, &t.normalizer)?;
        summarize_trace("normalizer", &trace);
        checkpoint::save_normalizer(paths.normalizer.as_ref().expect("checked"), &norm)?;
        if uses_tagger {
            let (tagger, trace) = train_tagger(&train_docs, &t.model, &t.tagger)?;
            summarize_trace("tagger", &trace);
            checkpoint::save_tagger(paths.tagger.as_ref().expect("checked"), &tagger)?;
        }
        if uses_crf {
            let (crf, _) = train_crf_on_documents(&norm, &train_docs, &t.crf)?;
            checkpoint::save_crf(paths.crf.as_ref().expect("checked"), &crf)?;
        }
    }

    let normalizer = checkpoint::load_normalizer(paths.normalizer.as_ref().expect("checked"))?;
    let tagger = match (&paths.tagger, uses_tagger) {
        (Some(p), true) => Some(checkpoint::load_tagger(p)?),
        _ => None,
    };
    let crf = match (&paths.crf, uses_crf) {
        (Some(p), true) => Some(checkpoint::load_crf(p)?),
        _ => None,
    };
    let groups = paths.groups.as_ref().map(load_groups).transpose()?;
    let models = PipelineModels { tagger: tagger.as_ref(), normalizer: &normalizer, crf: crf.as_ref() };
    let out = run_pipeline(&data, &models, &cfg.pipeline, groups.as_ref())?;
    if let Some(p) = &paths.output {
        save_jsonl(p, &out.predictions)?;
    }
    for (stage, n) in &out.report.errors {
        eprintln!("{n} {stage} errors");
    }
    write_json(paths.report.as_deref(), &out.report)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode { cir, json } => {
            let (slots, class) = encode_cir(&cir)?;
            if json {
                write_json(None, &serde_json::json!({ "class": format!("{class:?}"), "slots": slots }))?;
            } else {
                let filled: Vec<String> = SlotName::ALL
                    .iter()
                    .map(|s| format!("{s}={}", slots.get(*s).unwrap_or("_")))
                    .collect();
                println!("{class:?}\t{}", filled.join(" "));
            }
        }
        Command::Decode { slots } => {
            let tokens = slots.into_iter().map(|t| if t == "_" { PAD.to_string() } else { t });
            let d = decode_slots(&SlotSequence::from_tokens(tokens)?)?;
            if !d.canonical {
                log::warn!("slots are not a canonical encoding; output is a best-effort reconstruction");
            }
            println!("{}", d.value);
        }
        Command::Anchor { cir, dct, tense, shrove_offset } => {
            let ctx = AnchorContext::new(dct).with_tense(tense);
            println!("{}", anchor_with(&cir, &ctx, &AnchorOptions { shrove_tide_offset: shrove_offset })?);
        }
        Command::SynthData { style, languages, docs, seed, out } => {
            let g = SyntheticGrammar::builtin(languages);
            save_jsonl(&out, &generate(&g, style, docs, seed)?)?;
        }
        Command::Train { common, chars } => {
            let cfg = training_config(&common)?;
            let mut t = cfg.training.normalizer.clone();
            t.steps = common.steps.unwrap_or(t.steps);
            t.seed = common.seed.unwrap_or(t.seed);
            let docs = load(&common.data)?;
            let mode = if chars { char_mode_for(&docs) } else { ValueMode::Slots };
            let (model, trace) = train_on_documents(&docs, mode, &cfg.training.model, &t)?;
            summarize_trace("normalizer", &trace);
            checkpoint::save_normalizer(&common.out, &model)?;
        }
        Command::TrainTagger { common } => {
            let cfg = training_config(&common)?;
            let mut t = cfg.training.tagger.clone();
            t.steps = common.steps.unwrap_or(t.steps);
            t.seed = common.seed.unwrap_or(t.seed);
            let (model, trace) = train_tagger(&load(&common.data)?, &cfg.training.model, &t)?;
            summarize_trace("tagger", &trace);
            checkpoint::save_tagger(&common.out, &model)?;
        }
        Command::TrainCrf { data, normalizer, out, steps } => {
            let norm = checkpoint::load_normalizer(&normalizer)?;
            let cfg = CrfTrainConfig { steps, ..CrfTrainConfig::default() };
            let (crf, trace) = train_crf_on_documents(&norm, &load(&data)?, &cfg)?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                eprintln!("crf: log-likelihood {first:.4} -> {last:.4}");
            }
            checkpoint::save_crf(&out, &crf)?;
        }
        Command::Tag { data, tagger, out } => {
            let model = checkpoint::load_tagger(&tagger)?;
            let mut docs = load(&data)?;
            for d in &mut docs {
                d.annotations = tag(&model, d)?;
            }
            save_jsonl(&out, &docs)?;
        }
        Command::Normalize { data, normalizer, crf, decode, out, score } => {
            let norm = checkpoint::load_normalizer(&normalizer)?;
            let crf = crf.map(checkpoint::load_crf).transpose()?;
            if decode == DecodeStrategy::ViterbiCrf && crf.is_none() {
                bail!("--decode viterbi needs --crf");
            }
            let docs = load(&data)?;
            if score {
                write_json(None, &score_normalizer(&docs, &norm, decode, crf.as_ref())?)?;
            }
            let models = PipelineModels { tagger: None, normalizer: &norm, crf: crf.as_ref() };
            let opts = PipelineOptions { decode, ..PipelineOptions::default() };
            let mut w = BufWriter::new(File::create(&out)?);
            let mut failed = 0;
            let mut outputs = Vec::with_capacity(docs.len());
            for d in &docs {
                let (spans, errors) = normalize_spans(d, d.annotations.clone(), &models, &opts);
                failed += errors.len();
                outputs.push(Document { annotations: spans, ..d.clone() });
            }
            tempnorm::corpus::write_jsonl(&mut w, &outputs)?;
            w.flush()?;
            if failed > 0 {
                eprintln!("{failed} normalization errors");
            }
        }
        Command::Pipeline { config, gold_boundaries, train_first, decode } => {
            pipeline(&config, gold_boundaries, train_first, decode)?;
        }
        Command::Evaluate { gold, pred, group_file, report } => {
            let (gold, pred) = (load(&gold)?, load(&pred)?);
            let by_language = evaluate_by_language(&gold, &pred)?;
            let grouped = match group_file {
                Some(p) => Some(aggregate(&by_language, &load_groups(p)?)?),
                None => None,
            };
            let r = PipelineReport {
                documents: gold.len(),
                overall: evaluate(&gold, &pred)?,
                by_language,
                grouped,
                ..PipelineReport::default()
            };
            write_json(report.as_deref(), &r)?;
        }
    }
    Ok(())
}

/// 1 for usage and configuration errors, 3 for numeric failures, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<tempnorm::Error>() {
        Some(e) if e.is_numeric() => 3,
        Some(tempnorm::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
