//! Temporal expression extraction as BIO token classification, plus the
//! gold-boundary bypass.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{from_bio, to_bio, BioTag, Document, TimexAnnotation};
use crate::error::{Error, Result};
use crate::mlm::{ModelVocab, TrainConfig, ValueMode};
use crate::nn::{cross_entropy, Encoder, EncoderInput, ModelConfig, OptimizerState};
use crate::vocab::SlotVocabulary;

#[derive(Debug)]
pub struct Tagger {
    pub encoder: Encoder,
    pub vocab: ModelVocab,
}

struct Window {
    input: EncoderInput,
    /// `(position in window, token index in doc)`.
    positions: Vec<(usize, usize)>,
}

fn windows(vocab: &ModelVocab, tokens: &[String], max_seq: usize) -> Vec<Window> {
    let width = max_seq.saturating_sub(2).max(1);
    let mut out = Vec::new();
    for chunk_start in (0..tokens.len()).step_by(width) {
        let end = (chunk_start + width).min(tokens.len());
        let mut ids = vec![vocab.cls_id()];
        let mut positions = Vec::new();
        for (i, t) in tokens[chunk_start..end].iter().enumerate() {
            positions.push((i + 1, chunk_start + i));
            ids.push(vocab.word_id(t));
        }
        ids.push(vocab.sep_id());
        out.push(Window { input: EncoderInput::plain(ids), positions });
    }
    out
}

impl Tagger {
    pub fn new(encoder: Encoder, vocab: ModelVocab) -> Result<Self> {
        if encoder.config.out_dim != BioTag::COUNT || encoder.config.vocab_size != vocab.len() {
            return Err(Error::Config("tagger encoder does not match its vocabulary or label set".into()));
        }
        Ok(Tagger { encoder, vocab })
    }

    pub fn init(arch: &ModelConfig, vocab: ModelVocab) -> Result<Self> {
        let cfg = ModelConfig { vocab_size: vocab.len(), out_dim: BioTag::COUNT, slot_positions: 1, ..arch.clone() };
        Tagger::new(Encoder::new(cfg)?, vocab)
    }

    /// Most likely BIO label per token.
    pub fn predict_tags(&self, tokens: &[String]) -> Result<Vec<BioTag>> {
        let mut tags = vec![BioTag::O; tokens.len()];
        for w in windows(&self.vocab, tokens, self.encoder.config.max_seq) {
            let fwd = self.encoder.forward(&w.input)?;
            for (p, t) in w.positions {
                let best = crate::decoding::argmax(&self.encoder.logits_at(&fwd, p));
                tags[t] = BioTag::from_index(best).expect("head has one output per label");
            }
        }
        Ok(tags)
    }
}

/// Trains a BIO tagger on `docs` with per-token cross-entropy. The masking
/// policy in `cfg` is ignored.
pub fn train_tagger(docs: &[Document], arch: &ModelConfig, cfg: &TrainConfig) -> Result<(Tagger, Vec<f64>)> {
    let vocab = ModelVocab::build(ValueMode::None, &SlotVocabulary::baseline(), docs)?;
    let mut model = Tagger::init(arch, vocab)?;
    let mut data = Vec::new();
    for d in docs {
        d.validate()?;
        let labels = to_bio(d);
        for w in windows(&model.vocab, &d.tokens, arch.max_seq) {
            let targets: Vec<(usize, usize)> = w.positions.iter().map(|&(p, t)| (p, labels[t].index())).collect();
            if !targets.is_empty() {
                data.push((w.input, targets));
            }
        }
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("no tokens to train the tagger on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.clip, model.encoder.num_params());
    let mut grads = vec![0.0; model.encoder.num_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::new();
        for _ in 0..cfg.batch_size.max(1) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let total: usize = batch.iter().map(|&i| data[i].1.len()).sum();
        let w = 1.0 / total as f64;
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for &i in &batch {
            let (input, targets) = &data[i];
            let fwd = model.encoder.forward(input)?;
            let mut d = Vec::with_capacity(targets.len());
            for &(p, y) in targets {
                let (l, dl) = cross_entropy(&model.encoder.logits_at(&fwd, p), y, w);
                loss += l;
                d.push((p, dl));
            }
            model.encoder.backward(&fwd, &d, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        opt.apply(&mut model.encoder.params, &mut grads);
        trace.push(loss);
    }
    Ok((model, trace))
}

/// Predicted annotations with empty values.
pub fn tag(model: &Tagger, doc: &Document) -> Result<Vec<TimexAnnotation>> {
    if doc.tokens.is_empty() {
        return Ok(Vec::new());
    }
    let tags = model.predict_tags(&doc.tokens)?;
    Ok(from_bio(&tags, &doc.tokens))
}

/// Gold spans and types with values stripped.
pub fn gold_boundaries(doc: &Document) -> Vec<TimexAnnotation> {
    doc.annotations
        .iter()
        .map(|a| TimexAnnotation { value: String::new(), ..a.clone() })
        .collect()
}
