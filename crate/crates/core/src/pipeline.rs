//! End-to-end tagging: extraction, normalization, anchoring, evaluation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{anchor_with, date_of_value, AnchorContext, AnchorOptions, TenseHint};
use crate::corpus::{Document, TimexAnnotation};
use crate::decoding::{crf_instances, decode, train_crf, CrfInstance, CrfModel, CrfTrainConfig, DecodeStrategy};
use crate::error::{Error, Result};
use crate::eval::{aggregate, evaluate, evaluate_by_language, EvalReport, GroupedAverages, Groups};
use crate::extraction::{gold_boundaries, tag, Tagger};
use crate::mlm::Normalizer;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMode {
    #[default]
    Model,
    Gold,
}

impl std::str::FromStr for ExtractionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "model" => Ok(ExtractionMode::Model),
            "gold" => Ok(ExtractionMode::Gold),
            other => Err(format!("unknown extraction mode {other:?}")),
        }
    }
}

/// Where the anchoring tense hint comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TenseSource {
    /// The document's `tense` field.
    #[default]
    Document,
    /// Always `unknown`.
    None,
}

impl std::str::FromStr for TenseSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "document" => Ok(TenseSource::Document),
            "none" => Ok(TenseSource::None),
            other => Err(format!("unknown tense source {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub extraction: ExtractionMode,
    pub decode: DecodeStrategy,
    /// Restrict value positions to value tokens.
    pub restricted: bool,
    pub tense_source: TenseSource,
    pub anchor: AnchorOptions,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            extraction: ExtractionMode::Model,
            decode: DecodeStrategy::Sequential,
            restricted: true,
            tense_source: TenseSource::Document,
            anchor: AnchorOptions::default(),
            seed: 0,
            workers: 0,
        }
    }
}

pub struct PipelineModels<'a> {
    pub tagger: Option<&'a Tagger>,
    pub normalizer: &'a Normalizer,
    pub crf: Option<&'a CrfModel>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StageError {
    pub document: String,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Run options, including the seed; absent for standalone evaluation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub options: Option<PipelineOptions>,
    pub documents: usize,
    pub overall: EvalReport,
    pub by_language: BTreeMap<String, EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grouped: Option<GroupedAverages>,
    /// Error counts per stage.
    pub errors: BTreeMap<String, usize>,
    pub error_details: Vec<StageError>,
}

pub struct PipelineOutput {
    /// Documents with predicted spans and anchored values.
    pub predictions: Vec<Document>,
    /// Gold documents with anchored values, as scored.
    pub gold: Vec<Document>,
    pub report: PipelineReport,
}

fn context(doc: &Document, opts: &PipelineOptions) -> Result<AnchorContext> {
    let dct = doc.dct.ok_or_else(|| Error::Data(format!("document {:?} has no DCT", doc.id)))?;
    let tense = match opts.tense_source {
        TenseSource::Document => doc.tense.unwrap_or(TenseHint::Unknown),
        TenseSource::None => TenseHint::Unknown,
    };
    Ok(AnchorContext::new(dct).with_tense(tense))
}

/// Anchors every annotation value in order, feeding day-level results back
/// as reference dates. Failed annotations keep an empty value.
pub fn anchor_document(doc: &Document, opts: &PipelineOptions) -> (Document, Vec<StageError>) {
    let mut out = doc.clone();
    let mut errors = Vec::new();
    let mut ctx = match context(doc, opts) {
        Ok(c) => c,
        Err(e) => {
            for a in &mut out.annotations {
                a.value.clear();
            }
            if !doc.annotations.is_empty() {
                errors.push(StageError { document: doc.id.clone(), stage: "anchor".into(), message: e.to_string() });
            }
            return (out, errors);
        }
    };
    for a in &mut out.annotations {
        if a.value.is_empty() {
            continue;
        }
        match anchor_with(&a.value, &ctx, &opts.anchor) {
            Ok(v) => {
                if let Some(d) = date_of_value(&v) {
                    ctx.previous_dates.push(d);
                }
                a.value = v;
            }
            Err(e) => {
                errors.push(StageError { document: doc.id.clone(), stage: "anchor".into(), message: e.to_string() });
                a.value.clear();
            }
        }
    }
    (out, errors)
}

/// Predicted CIRs for `spans` of `doc`; failed spans get an empty value.
pub fn normalize_spans(
    doc: &Document,
    spans: Vec<TimexAnnotation>,
    models: &PipelineModels<'_>,
    opts: &PipelineOptions,
) -> (Vec<TimexAnnotation>, Vec<StageError>) {
    let mut spans = spans;
    let mut errors = Vec::new();
    let err = |m: String| StageError { document: doc.id.clone(), stage: "normalize".into(), message: m };
    for a in &mut spans {
        a.value.clear();
    }
    let mut query = doc.clone();
    query.annotations = spans.clone();
    let lin = match models.normalizer.linearize(&query) {
        Ok(l) => l,
        Err(e) => {
            errors.push(err(e.to_string()));
            return (spans, errors);
        }
    };
    for ex in &lin.examples {
        let masked = ex.mask_all_values();
        match decode(models.normalizer, &masked, opts.decode, models.crf, opts.restricted) {
            Ok(ids) => {
                for (r, ids) in ex.regions.iter().zip(ids) {
                    match models.normalizer.vocab.decode_value(&ids) {
                        Ok(v) => spans[r.annotation].value = v,
                        Err(e) => errors.push(err(format!("annotation {}: {e}", r.annotation))),
                    }
                }
            }
            Err(e) => errors.push(err(e.to_string())),
        }
    }
    (spans, errors)
}

struct DocResult {
    pred: Document,
    gold: Document,
    errors: Vec<StageError>,
}

fn process(doc: &Document, models: &PipelineModels<'_>, opts: &PipelineOptions) -> DocResult {
    let mut errors = Vec::new();
    let spans = match opts.extraction {
        ExtractionMode::Gold => gold_boundaries(doc),
        ExtractionMode::Model => match models.tagger {
            Some(t) => tag(t, doc).unwrap_or_else(|e| {
                errors.push(StageError { document: doc.id.clone(), stage: "extract".into(), message: e.to_string() });
                Vec::new()
            }),
            None => {
                errors.push(StageError {
                    document: doc.id.clone(),
                    stage: "extract".into(),
                    message: "no tagger model".into(),
                });
                Vec::new()
            }
        },
    };
    let (spans, norm_errors) = normalize_spans(doc, spans, models, opts);
    errors.extend(norm_errors);
    let mut pred = doc.clone();
    pred.annotations = spans;
    let (pred, anchor_errors) = anchor_document(&pred, opts);
    errors.extend(anchor_errors);
    let (gold, _) = anchor_document(doc, opts);
    DocResult { pred, gold, errors }
}

/// Runs all three steps on `docs` and scores the anchored values against
/// the anchored gold values. Document order is preserved.
pub fn run_pipeline(
    docs: &[Document],
    models: &PipelineModels<'_>,
    opts: &PipelineOptions,
    groups: Option<&Groups>,
) -> Result<PipelineOutput> {
    if opts.decode == DecodeStrategy::ViterbiCrf && models.crf.is_none() {
        return Err(Error::Config("viterbi decoding needs a CRF model".into()));
    }
    if opts.extraction == ExtractionMode::Model && models.tagger.is_none() {
        return Err(Error::Config("model extraction needs a tagger".into()));
    }
    for d in docs {
        d.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<DocResult> = pool.install(|| docs.par_iter().map(|d| process(d, models, opts)).collect());

    let mut predictions = Vec::with_capacity(results.len());
    let mut gold = Vec::with_capacity(results.len());
    let mut report = PipelineReport { options: Some(opts.clone()), documents: docs.len(), ..Default::default() };
    for r in results {
        for e in r.errors {
            *report.errors.entry(e.stage.clone()).or_default() += 1;
            report.error_details.push(e);
        }
        predictions.push(r.pred);
        gold.push(r.gold);
    }
    report.overall = evaluate(&gold, &predictions)?;
    report.by_language = evaluate_by_language(&gold, &predictions)?;
    if let Some(g) = groups {
        report.grouped = Some(aggregate(&report.by_language, g)?);
    }
    Ok(PipelineOutput { predictions, gold, report })
}

/// Fits CRF transitions on the normalizer's emissions for gold values in `docs`.
pub fn train_crf_on_documents(
    normalizer: &Normalizer,
    docs: &[Document],
    cfg: &CrfTrainConfig,
) -> Result<(CrfModel, Vec<f64>)> {
    let mut examples = Vec::new();
    for d in docs {
        examples.extend(normalizer.linearize(d)?.examples.into_iter().filter(|e| !e.regions.is_empty()));
    }
    let chunks: Vec<Result<Vec<CrfInstance>>> =
        examples.par_chunks(64).map(|c| crf_instances(normalizer, c)).collect();
    let mut instances = Vec::new();
    for c in chunks {
        instances.extend(c?);
    }
    train_crf(normalizer.vocab.value_count(), &instances, cfg)
}

/// Slot-level and whole-value agreement of predicted and gold CIRs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationScore {
    pub annotations: usize,
    pub positions: usize,
    pub position_accuracy: f64,
    pub exact_match: f64,
}

/// Scores the normalizer on gold spans of `docs` (whose values are CIRs).
pub fn score_normalizer(
    docs: &[Document],
    normalizer: &Normalizer,
    strategy: DecodeStrategy,
    crf: Option<&CrfModel>,
) -> Result<NormalizationScore> {
    let per_doc: Vec<Result<(usize, usize, usize, usize)>> = docs
        .par_iter()
        .map(|doc| {
            let lin = normalizer.linearize(doc)?;
            let (mut n, mut pos, mut pos_ok, mut exact) = (0, 0, 0, 0);
            for ex in &lin.examples {
                let pred = decode(normalizer, &ex.mask_all_values(), strategy, crf, true)?;
                for (r, ids) in ex.regions.iter().zip(pred) {
                    let gold = ex.region_gold(r);
                    n += 1;
                    pos += gold.len();
                    pos_ok += gold.iter().zip(&ids).filter(|(a, b)| a == b).count();
                    let gold_cir = &doc.annotations[r.annotation].value;
                    if normalizer.vocab.decode_value(&ids).is_ok_and(|v| &v == gold_cir) {
                        exact += 1;
                    }
                }
            }
            Ok((n, pos, pos_ok, exact))
        })
        .collect();
    let mut s = NormalizationScore::default();
    let (mut pos_ok, mut exact) = (0, 0);
    for r in per_doc {
        let (n, p, po, e) = r?;
        s.annotations += n;
        s.positions += p;
        pos_ok += po;
        exact += e;
    }
    if s.annotations > 0 {
        s.position_accuracy = 100.0 * pos_ok as f64 / s.positions as f64;
        s.exact_match = 100.0 * exact as f64 / s.annotations as f64;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TimexType;

    #[test]
    fn anchoring_chains_reference_dates() {
        let mut d = Document::new("a", vec!["w".to_string(); 6]);
        d.dct = Some("2022-05-01".parse().unwrap());
        d.annotations = vec![
            TimexAnnotation::new(0, 1, TimexType::Date, "2010-12-30"),
            TimexAnnotation::new(2, 3, TimexType::Date, "UNDEF-REF-day-PLUS-3"),
            TimexAnnotation::new(4, 5, TimexType::Date, "not a cir"),
        ];
        let (out, errors) = anchor_document(&d, &PipelineOptions::default());
        assert_eq!(out.annotations[1].value, "2011-01-02");
        assert_eq!(out.annotations[2].value, "");
        assert_eq!(errors.len(), 1);
    }

    #[test]
    fn missing_dct_is_an_anchor_error() {
        let mut d = Document::new("a", vec!["w".to_string()]);
        d.annotations = vec![TimexAnnotation::new(0, 1, TimexType::Date, "UNDEF-last-day")];
        let (out, errors) = anchor_document(&d, &PipelineOptions::default());
        assert_eq!(errors[0].stage, "anchor");
        assert!(out.annotations[0].value.is_empty());
    }
}
