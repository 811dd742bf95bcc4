//! Masked-language-model normalizer.
//!
//! Documents are linearized with inline TIMEX3 markup whose value field is
//! expanded into a fixed number of value positions (the 11 slots, or a run
//! of characters in the ablation mode). Training masks positions per token
//! class and fits the encoder with cross-entropy at masked positions only.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TimexType};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, Encoder, EncoderInput, ModelConfig, Optimizer, OptimizerState};
use crate::slots::{decode_slots, encode_cir, SLOT_COUNT};
use crate::vocab::SlotVocabulary;

pub const MASK: &str = "[MASK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const TIMEX_OPEN: &str = "<TIMEX3";
pub const TIMEX_GT: &str = ">";
pub const TIMEX_CLOSE: &str = "</TIMEX3>";

const SPECIALS: [&str; 11] =
    [MASK, CLS, SEP, UNK, TIMEX_OPEN, TIMEX_GT, TIMEX_CLOSE, "DATE", "TIME", "DURATION", "SET"];

/// How the value attribute is tokenized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValueMode {
    /// Eleven slot tokens per value.
    Slots,
    /// Fixed-length character run, padded with `[PAD]`.
    Chars { len: usize },
    /// No value positions (extraction tagger).
    None,
}

impl ValueMode {
    pub fn positions(self) -> usize {
        match self {
            ValueMode::Slots => SLOT_COUNT,
            ValueMode::Chars { len } => len,
            ValueMode::None => 0,
        }
    }
}

fn char_alphabet() -> Vec<String> {
    std::iter::once(crate::slots::PAD.to_string())
        .chain((0x20u8..0x7f).map(|b| (b as char).to_string()))
        .collect()
}

/// Model vocabulary: value tokens first (so the restricted output range is
/// `0..value_count`), then fixed specials, then lowercase words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelVocab {
    pub mode: ValueMode,
    tokens: Vec<String>,
    value_count: usize,
    words: HashMap<String, u32>,
    values: HashMap<String, u32>,
}

impl ModelVocab {
    pub fn new(mode: ValueMode, values: Vec<String>, words: impl IntoIterator<Item = String>) -> Result<Self> {
        let value_count = values.len();
        let mut tokens = values;
        tokens.extend(SPECIALS.iter().map(|s| s.to_string()));
        let specials_end = tokens.len();
        let mut seen = BTreeSet::new();
        for w in words {
            let w = w.to_lowercase();
            if SPECIALS.contains(&w.as_str()) || !seen.insert(w.clone()) {
                continue;
            }
            tokens.push(w);
        }
        let values = tokens[..value_count].iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let words = tokens[specials_end..]
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), (specials_end + i) as u32))
            .collect();
        Ok(ModelVocab { mode, tokens, value_count, words, values })
    }

    /// Vocabulary for `mode` with words collected from `docs`.
    pub fn build(mode: ValueMode, slot_vocab: &SlotVocabulary, docs: &[Document]) -> Result<Self> {
        let values = match mode {
            ValueMode::Slots => slot_vocab.tokens().to_vec(),
            ValueMode::Chars { .. } => char_alphabet(),
            ValueMode::None => Vec::new(),
        };
        let words: BTreeSet<String> = docs.iter().flat_map(|d| d.tokens.iter().map(|t| t.to_lowercase())).collect();
        ModelVocab::new(mode, values, words)
    }

    /// Rebuilds a vocabulary from its full token list.
    pub fn from_tokens(mode: ValueMode, value_count: usize, tokens: &[String]) -> Result<Self> {
        let specials_end = value_count + SPECIALS.len();
        if tokens.len() < specials_end || tokens[value_count..specials_end].iter().zip(SPECIALS).any(|(a, b)| a != b) {
            return Err(Error::Checkpoint("vocabulary does not match the special-token layout".into()));
        }
        ModelVocab::new(mode, tokens[..value_count].to_vec(), tokens[specials_end..].iter().cloned())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn value_count(&self) -> usize {
        self.value_count
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn special(&self, i: usize) -> u32 {
        (self.value_count + i) as u32
    }

    pub fn mask_id(&self) -> u32 {
        self.special(0)
    }

    pub fn cls_id(&self) -> u32 {
        self.special(1)
    }

    pub fn sep_id(&self) -> u32 {
        self.special(2)
    }

    pub fn unk_id(&self) -> u32 {
        self.special(3)
    }

    pub fn type_id(&self, t: TimexType) -> u32 {
        self.special(7 + t.index())
    }

    pub fn word_id(&self, word: &str) -> u32 {
        self.words.get(&word.to_lowercase()).copied().unwrap_or_else(|| self.unk_id())
    }

    pub fn is_value_id(&self, id: u32) -> bool {
        (id as usize) < self.value_count
    }

    /// Value-position ids for a CIR string.
    pub fn encode_value(&self, cir: &str) -> Result<Vec<u32>> {
        match self.mode {
            ValueMode::Slots => {
                let (slots, _) = encode_cir(cir)?;
                slots
                    .tokens()
                    .iter()
                    .map(|t| self.values.get(t).copied().ok_or_else(|| Error::UnknownSlotToken(t.clone())))
                    .collect()
            }
            ValueMode::Chars { len } => {
                let mut ids = Vec::with_capacity(len);
                for c in cir.chars() {
                    let id = self
                        .values
                        .get(c.to_string().as_str())
                        .copied()
                        .ok_or_else(|| Error::UnencodableCir(cir.to_string()))?;
                    ids.push(id);
                }
                if ids.is_empty() || ids.len() > len {
                    return Err(Error::UnencodableCir(cir.to_string()));
                }
                ids.resize(len, 0);
                Ok(ids)
            }
            ValueMode::None => Err(Error::Config("vocabulary has no value positions".into())),
        }
    }

    /// CIR string for value-position ids.
    pub fn decode_value(&self, ids: &[u32]) -> Result<String> {
        let toks: Vec<&str> = ids
            .iter()
            .map(|&i| match self.token(i) {
                Some(t) if self.is_value_id(i) => Ok(t),
                Some(t) => Err(Error::UnknownSlotToken(t.to_string())),
                None => Err(Error::UnknownSlotToken(format!("#{i}"))),
            })
            .collect::<Result<_>>()?;
        match self.mode {
            ValueMode::Slots => {
                let seq = crate::slots::SlotSequence::from_tokens(toks)?;
                Ok(decode_slots(&seq)?.value)
            }
            ValueMode::Chars { .. } => {
                let s: String = toks.into_iter().filter(|t| *t != crate::slots::PAD).collect();
                if s.is_empty() {
                    return Err(Error::EmptySlots);
                }
                Ok(s)
            }
            ValueMode::None => Err(Error::Config("vocabulary has no value positions".into())),
        }
    }
}

/// Masking class of each linearized position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenClass {
    Value,
    Annotated,
    Type,
    Other,
    /// `[CLS]`, `[SEP]` and TIMEX3 markup; never masked.
    Markup,
}

/// Location of one annotation's value positions in an example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueRegion {
    /// Index of the annotation in its document.
    pub annotation: usize,
    pub start: usize,
    pub len: usize,
    /// Whether the region holds gold value ids (false at inference).
    pub has_gold: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub token_ids: Vec<u32>,
    pub classes: Vec<TokenClass>,
    pub slot_index: Vec<Option<u16>>,
    pub regions: Vec<ValueRegion>,
    pub mask_positions: Vec<usize>,
    /// Original ids at `mask_positions`.
    pub gold_ids: Vec<u32>,
    pub mask_id: u32,
}

impl TrainingExample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn encoder_input(&self) -> EncoderInput {
        EncoderInput { tokens: self.token_ids.clone(), slot_index: self.slot_index.clone() }
    }

    /// Gold ids of every value position in `region`, with masks undone.
    pub fn region_gold(&self, region: &ValueRegion) -> Vec<u32> {
        let mut ids = self.token_ids[region.start..region.start + region.len].to_vec();
        for (p, g) in self.mask_positions.iter().zip(&self.gold_ids) {
            if (region.start..region.start + region.len).contains(p) {
                ids[p - region.start] = *g;
            }
        }
        ids
    }

    /// Copy with every value position masked, as at inference time.
    pub fn mask_all_values(&self) -> TrainingExample {
        let mut out = self.unmasked();
        let mut masked = Vec::new();
        for r in &out.regions {
            masked.extend(r.start..r.start + r.len);
        }
        out.gold_ids = masked.iter().map(|&p| out.token_ids[p]).collect();
        for &p in &masked {
            out.token_ids[p] = out.mask_id;
        }
        out.mask_positions = masked;
        out
    }

    /// Copy with all masks reverted to their gold ids.
    pub fn unmasked(&self) -> TrainingExample {
        let mut out = self.clone();
        for (p, g) in self.mask_positions.iter().zip(&self.gold_ids) {
            out.token_ids[*p] = *g;
        }
        out.mask_positions.clear();
        out.gold_ids.clear();
        out
    }
}

/// Windows produced for one document.
#[derive(Clone, Debug, Default)]
pub struct Linearized {
    pub examples: Vec<TrainingExample>,
    /// Annotations left out because their value could not be encoded.
    pub skipped: usize,
}

enum Unit {
    Word(usize),
    Annotation(usize),
}

struct Builder {
    ex: TrainingExample,
}

impl Builder {
    fn new(vocab: &ModelVocab) -> Self {
        let mut b = Builder {
            ex: TrainingExample {
                token_ids: Vec::new(),
                classes: Vec::new(),
                slot_index: Vec::new(),
                regions: Vec::new(),
                mask_positions: Vec::new(),
                gold_ids: Vec::new(),
                mask_id: vocab.mask_id(),
            },
        };
        b.push(vocab.cls_id(), TokenClass::Markup, None);
        b
    }

    fn push(&mut self, id: u32, class: TokenClass, slot: Option<u16>) {
        self.ex.token_ids.push(id);
        self.ex.classes.push(class);
        self.ex.slot_index.push(slot);
    }

    fn finish(mut self, vocab: &ModelVocab) -> TrainingExample {
        self.push(vocab.sep_id(), TokenClass::Markup, None);
        self.ex
    }
}

/// Linearizes `doc` into windows of at most `max_seq` positions. Each
/// annotation becomes `<TIMEX3 TYPE v_1 .. v_n > surface </TIMEX3>`, where
/// the value positions hold the encoded annotation value, or `[MASK]` when
/// the value is empty. Windows never split an annotation.
pub fn linearize(doc: &Document, vocab: &ModelVocab, max_seq: usize) -> Result<Linearized> {
    let n_values = vocab.mode.positions();
    if n_values == 0 {
        return Err(Error::Config("linearize needs a vocabulary with value positions".into()));
    }
    let mut out = Linearized::default();
    let mut values: Vec<Option<Vec<u32>>> = Vec::with_capacity(doc.annotations.len());
    for a in &doc.annotations {
        if a.value.is_empty() {
            values.push(Some(vec![vocab.mask_id(); n_values]));
            continue;
        }
        match vocab.encode_value(&a.value) {
            Ok(ids) => values.push(Some(ids)),
            Err(e) => {
                log::warn!("document {:?}: skipping annotation {:?}: {e}", doc.id, a.value);
                out.skipped += 1;
                values.push(None);
            }
        }
    }

    let mut units = Vec::new();
    let mut i = 0;
    let mut ann = doc.annotations.iter().enumerate().filter(|(k, _)| values[*k].is_some()).peekable();
    while i < doc.tokens.len() {
        match ann.peek() {
            Some((k, a)) if a.start == i => {
                units.push(Unit::Annotation(*k));
                i = a.end;
                ann.next();
            }
            _ => {
                units.push(Unit::Word(i));
                i += 1;
            }
        }
    }

    let capacity = max_seq.saturating_sub(2);
    let unit_len = |u: &Unit| match u {
        Unit::Word(_) => 1,
        Unit::Annotation(k) => {
            let a = &doc.annotations[*k];
            n_values + 4 + (a.end - a.start)
        }
    };
    let mut b = Builder::new(vocab);
    let mut used = 0;
    for u in &units {
        let len = unit_len(u);
        if len > capacity {
            return Err(Error::SequenceTooLong { len: len + 2, max: max_seq });
        }
        if used + len > capacity {
            out.examples.push(std::mem::replace(&mut b, Builder::new(vocab)).finish(vocab));
            used = 0;
        }
        used += len;
        match *u {
            Unit::Word(t) => b.push(vocab.word_id(&doc.tokens[t]), TokenClass::Other, None),
            Unit::Annotation(k) => {
                let a = &doc.annotations[k];
                let ids = values[k].as_ref().expect("filtered above");
                b.push(vocab.special(4), TokenClass::Markup, None);
                b.push(vocab.type_id(a.ttype), TokenClass::Type, None);
                let start = b.ex.token_ids.len();
                for (s, &id) in ids.iter().enumerate() {
                    b.push(id, TokenClass::Value, Some(s as u16));
                }
                b.ex.regions.push(ValueRegion { annotation: k, start, len: n_values, has_gold: !a.value.is_empty() });
                b.push(vocab.special(5), TokenClass::Markup, None);
                for t in a.start..a.end {
                    b.push(vocab.word_id(&doc.tokens[t]), TokenClass::Annotated, None);
                }
                b.push(vocab.special(6), TokenClass::Markup, None);
            }
        }
    }
    if used > 0 || out.examples.is_empty() {
        out.examples.push(b.finish(vocab));
    }
    Ok(out)
}

/// Per-class masking probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub p_value_slots: f64,
    pub p_annotated_tokens: f64,
    pub p_types: f64,
    pub p_other_text: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy { p_value_slots: 0.70, p_annotated_tokens: 0.15, p_types: 0.10, p_other_text: 0.05 }
    }
}

impl MaskingPolicy {
    pub fn none() -> Self {
        MaskingPolicy { p_value_slots: 0.0, p_annotated_tokens: 0.0, p_types: 0.0, p_other_text: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p_value_slots, self.p_annotated_tokens, self.p_types, self.p_other_text] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("masking probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn rate(&self, class: TokenClass) -> f64 {
        match class {
            TokenClass::Value => self.p_value_slots,
            TokenClass::Annotated => self.p_annotated_tokens,
            TokenClass::Type => self.p_types,
            TokenClass::Other => self.p_other_text,
            TokenClass::Markup => 0.0,
        }
    }
}

/// Number of eligible value positions per annotation as training proceeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub total_steps: usize,
    pub max_masks: usize,
}

impl CurriculumSchedule {
    pub fn new(total_steps: usize, max_masks: usize) -> Self {
        CurriculumSchedule { total_steps, max_masks: max_masks.max(1) }
    }

    /// `min(max, 1 + floor((max - 1) * t / (T / 2)))`.
    pub fn k(&self, step: usize) -> usize {
        if self.total_steps == 0 {
            return self.max_masks;
        }
        let grow = (self.max_masks - 1) * 2 * step / self.total_steps;
        (1 + grow).min(self.max_masks)
    }
}

/// Masks `ex` under `policy` with `k` eligible value positions per region.
pub fn apply_masking(ex: &TrainingExample, policy: &MaskingPolicy, k: usize, rng: &mut impl Rng) -> TrainingExample {
    let mut out = ex.unmasked();
    let mut masked = vec![false; out.len()];
    for r in &out.regions {
        let k = k.clamp(1, r.len);
        for off in sample(rng, r.len, k).into_iter() {
            if rng.gen_bool(policy.p_value_slots) {
                masked[r.start + off] = true;
            }
        }
    }
    for (p, class) in out.classes.iter().enumerate() {
        if matches!(class, TokenClass::Value | TokenClass::Markup) {
            continue;
        }
        if rng.gen_bool(policy.rate(*class)) {
            masked[p] = true;
        }
    }
    let mask_id = out.mask_id;
    for (p, m) in masked.into_iter().enumerate() {
        if m {
            out.mask_positions.push(p);
            out.gold_ids.push(out.token_ids[p]);
            out.token_ids[p] = mask_id;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub clip: f64,
    pub seed: u64,
    pub policy: MaskingPolicy,
    /// Skip the curriculum and use every value position from step 0.
    pub no_curriculum: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 8000,
            batch_size: 8,
            optimizer: Optimizer::default(),
            clip: 1.0,
            seed: 13,
            policy: MaskingPolicy::default(),
            no_curriculum: false,
        }
    }
}

/// Trained encoder plus vocabulary.
#[derive(Debug)]
pub struct Normalizer {
    pub encoder: Encoder,
    pub vocab: ModelVocab,
    passes: AtomicUsize,
}

impl Normalizer {
    pub fn new(encoder: Encoder, vocab: ModelVocab) -> Result<Self> {
        if encoder.config.vocab_size != vocab.len() || encoder.config.out_dim != vocab.len() {
            return Err(Error::Config(format!(
                "encoder sized for {} tokens but vocabulary has {}",
                encoder.config.vocab_size,
                vocab.len()
            )));
        }
        Ok(Normalizer { encoder, vocab, passes: AtomicUsize::new(0) })
    }

    /// Fresh model for `vocab` with the architecture from `arch`.
    pub fn init(arch: &ModelConfig, vocab: ModelVocab) -> Result<Self> {
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            out_dim: vocab.len(),
            slot_positions: vocab.mode.positions().max(1),
            ..arch.clone()
        };
        Normalizer::new(Encoder::new(cfg)?, vocab)
    }

    pub fn max_seq(&self) -> usize {
        self.encoder.config.max_seq
    }

    pub fn linearize(&self, doc: &Document) -> Result<Linearized> {
        linearize(doc, &self.vocab, self.max_seq())
    }

    /// Full-vocabulary scores at each mask position of `ex`.
    pub fn predict_logits(&self, ex: &TrainingExample) -> Result<Vec<Vec<f64>>> {
        if ex.mask_positions.is_empty() {
            return Ok(Vec::new());
        }
        let fwd = self.encoder.forward(&ex.encoder_input())?;
        self.passes.fetch_add(1, Ordering::Relaxed);
        Ok(ex.mask_positions.iter().map(|&p| self.encoder.logits_at(&fwd, p)).collect())
    }

    /// Forward passes run so far.
    pub fn pass_count(&self) -> usize {
        self.passes.load(Ordering::Relaxed)
    }
}

/// Mean masked-position cross-entropy of one batch; accumulates gradients.
fn batch_loss(enc: &Encoder, batch: &[TrainingExample], grads: &mut [f64], step: usize) -> Result<Option<f64>> {
    let total: usize = batch.iter().map(|e| e.mask_positions.len()).sum();
    if total == 0 {
        return Ok(None);
    }
    let w = 1.0 / total as f64;
    let mut loss = 0.0;
    for ex in batch {
        if ex.mask_positions.is_empty() {
            continue;
        }
        let fwd = enc.forward(&ex.encoder_input())?;
        let mut d = Vec::with_capacity(ex.mask_positions.len());
        for (&p, &g) in ex.mask_positions.iter().zip(&ex.gold_ids) {
            let (l, dl) = cross_entropy(&enc.logits_at(&fwd, p), g as usize, w);
            loss += l;
            d.push((p, dl));
        }
        enc.backward(&fwd, &d, grads);
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    Ok(Some(loss))
}

/// Trains a fresh normalizer on `data`. Returns the model and the per-step
/// loss trace (steps with no masked position are skipped in the trace).
pub fn train(
    data: &[TrainingExample],
    arch: &ModelConfig,
    vocab: ModelVocab,
    cfg: &TrainConfig,
) -> Result<(Normalizer, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training examples".into()));
    }
    cfg.policy.validate()?;
    let max_masks = vocab.mode.positions();
    let mut model = Normalizer::init(arch, vocab)?;
    let schedule = CurriculumSchedule::new(cfg.steps, max_masks);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.clip, model.encoder.num_params());
    let mut grads = vec![0.0; model.encoder.num_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let k = if cfg.no_curriculum { max_masks } else { schedule.k(step) };
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size.max(1) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(apply_masking(&data[order[cursor]], &cfg.policy, k, &mut rng));
            cursor += 1;
        }
        grads.iter_mut().for_each(|g| *g = 0.0);
        if let Some(loss) = batch_loss(&model.encoder, &batch, &mut grads, step)? {
            opt.apply(&mut model.encoder.params, &mut grads);
            if model.encoder.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { step });
            }
            trace.push(loss);
            if step % 500 == 0 {
                log::debug!("mlm step {step} k={k} loss={loss:.4}");
            }
        }
    }
    Ok((model, trace))
}

/// Character-mode width fitting the longest annotation value in `docs`.
pub fn char_mode_for(docs: &[Document]) -> ValueMode {
    let len = docs.iter().flat_map(|d| &d.annotations).map(|a| a.value.chars().count()).max().unwrap_or(1);
    ValueMode::Chars { len: len.max(1) }
}

/// Builds a vocabulary from `docs`, linearizes them and trains a normalizer.
/// Annotations whose value cannot be encoded are skipped with a warning.
pub fn train_on_documents(
    docs: &[Document],
    mode: ValueMode,
    arch: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Normalizer, Vec<f64>)> {
    let vocab = ModelVocab::build(mode, &crate::vocab::SlotVocabulary::baseline(), docs)?;
    let mut data = Vec::new();
    let mut skipped = 0;
    for d in docs {
        d.validate()?;
        let lin = linearize(d, &vocab, arch.max_seq)?;
        skipped += lin.skipped;
        data.extend(lin.examples.into_iter().filter(|e| !e.regions.is_empty()));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} annotations that do not fit the value encoding");
    }
    train(&data, arch, vocab, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TimexAnnotation;

    fn may_doc() -> Document {
        let mut d = Document::new("d", "we met in May .".split(' ').map(String::from).collect());
        d.annotations.push(TimexAnnotation::new(3, 4, TimexType::Date, "UNDEF-year-05"));
        d
    }

    fn vocab_for(docs: &[Document]) -> ModelVocab {
        ModelVocab::build(ValueMode::Slots, &SlotVocabulary::baseline(), docs).unwrap()
    }

    pub(crate) fn tiny_arch() -> ModelConfig {
        ModelConfig {
            layers: 1,
            hidden: 16,
            heads: 2,
            ff_dim: 32,
            max_seq: 32,
            vocab_size: 0,
            slot_positions: 0,
            out_dim: 0,
            seed: 3,
        }
    }

    #[test]
    fn vocabulary_layout() {
        let v = vocab_for(&[may_doc()]);
        assert_eq!(v.value_count(), SlotVocabulary::baseline().len());
        assert_eq!(v.token(v.mask_id()), Some(MASK));
        assert_eq!(v.token(v.type_id(TimexType::Set)), Some("SET"));
        assert_eq!(v.token(v.word_id("May")), Some("may"));
        assert_eq!(v.word_id("unseen"), v.unk_id());
        let again = ModelVocab::from_tokens(v.mode, v.value_count(), v.tokens()).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn may_value_region() {
        let doc = may_doc();
        let v = vocab_for(&[doc.clone()]);
        let lin = linearize(&doc, &v, 64).unwrap();
        assert_eq!(lin.examples.len(), 1);
        let ex = &lin.examples[0];
        let r = &ex.regions[0];
        let toks: Vec<&str> = ex.token_ids[r.start..r.start + r.len].iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, ["[PAD]", "year", "05", "[PAD]", "[PAD]", "[PAD]", "[PAD]", "[PAD]", "[PAD]", "[PAD]", "[PAD]"]);
        let text: Vec<&str> = ex.token_ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(&text[..6], &["[CLS]", "we", "met", "in", "<TIMEX3", "DATE"]);
        assert_eq!(&text[text.len() - 5..], &[">", "may", "</TIMEX3>", ".", "[SEP]"]);
        assert_eq!(v.decode_value(&ex.region_gold(r)).unwrap(), "UNDEF-year-05");
    }

    #[test]
    fn plain_document_has_only_other_text() {
        let doc = Document::new("p", vec!["no".into(), "dates".into()]);
        let lin = linearize(&doc, &vocab_for(&[doc.clone()]), 16).unwrap();
        let classes = &lin.examples[0].classes;
        assert!(classes[1..classes.len() - 1].iter().all(|c| *c == TokenClass::Other));
    }

    #[test]
    fn unencodable_values_are_skipped() {
        let mut doc = may_doc();
        doc.annotations[0].value = "not a cir".into();
        let lin = linearize(&doc, &vocab_for(&[doc.clone()]), 64).unwrap();
        assert_eq!(lin.skipped, 1);
        assert!(lin.examples[0].regions.is_empty());
    }

    #[test]
    fn windows_do_not_split_annotations() {
        let mut doc = Document::new("w", (0..30).map(|i| format!("w{i}")).collect());
        doc.annotations.push(TimexAnnotation::new(5, 7, TimexType::Date, "PRESENT_REF"));
        doc.annotations.push(TimexAnnotation::new(20, 21, TimexType::Duration, "P3D"));
        let v = vocab_for(&[doc.clone()]);
        let lin = linearize(&doc, &v, 24).unwrap();
        assert!(lin.examples.len() > 1);
        assert!(lin.examples.iter().all(|e| e.len() <= 24));
        let regions: usize = lin.examples.iter().map(|e| e.regions.len()).sum();
        assert_eq!(regions, 2);
        let words: usize = lin
            .examples
            .iter()
            .map(|e| e.classes.iter().filter(|c| matches!(c, TokenClass::Other | TokenClass::Annotated)).count())
            .sum();
        assert_eq!(words, 30);
    }

    #[test]
    fn curriculum_endpoints() {
        let s = CurriculumSchedule::new(100, 11);
        assert_eq!(s.k(0), 1);
        assert!((0..100).all(|t| s.k(t) <= s.k(t + 1)));
        assert!((50..200).all(|t| s.k(t) == 11));
        assert!(s.k(49) < 11);
    }

    #[test]
    fn masking_extremes() {
        let doc = may_doc();
        let v = vocab_for(&[doc.clone()]);
        let ex = &linearize(&doc, &v, 64).unwrap().examples[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(apply_masking(ex, &MaskingPolicy::none(), 11, &mut rng).mask_positions.is_empty());
        let forced = MaskingPolicy { p_value_slots: 1.0, ..MaskingPolicy::none() };
        let m = apply_masking(ex, &forced, 11, &mut rng);
        assert_eq!(m.mask_positions, (ex.regions[0].start..ex.regions[0].start + 11).collect::<Vec<_>>());
        assert!(m.mask_positions.iter().all(|&p| m.token_ids[p] == v.mask_id()));
        assert_eq!(m.unmasked(), *ex);
        let one = apply_masking(ex, &forced, 1, &mut rng);
        assert_eq!(one.mask_positions.len(), 1);
    }

    #[test]
    fn memorizes_single_example() {
        let doc = may_doc();
        let v = vocab_for(&[doc.clone()]);
        let data = linearize(&doc, &v, 32).unwrap().examples;
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 1,
            optimizer: Optimizer::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            policy: MaskingPolicy { p_value_slots: 1.0, ..MaskingPolicy::none() },
            no_curriculum: true,
            ..TrainConfig::default()
        };
        let (model, trace) = train(&data, &tiny_arch(), v, &cfg).unwrap();
        assert!(*trace.last().unwrap() <= 0.01, "final loss {}", trace.last().unwrap());
        let ex = data[0].mask_all_values();
        let logits = model.predict_logits(&ex).unwrap();
        assert_eq!(logits.len(), 11);
        for l in &logits {
            let z: f64 = crate::nn::log_softmax(l).iter().map(|x| x.exp()).sum();
            assert!((z - 1.0).abs() < 1e-6);
        }
        assert_eq!(model.predict_logits(&ex).unwrap(), logits);
        assert!(model.predict_logits(&data[0]).unwrap().is_empty());
    }

    #[test]
    fn char_mode_memorizes_single_example() {
        let docs = [may_doc()];
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 1,
            optimizer: Optimizer::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            policy: MaskingPolicy { p_value_slots: 1.0, ..MaskingPolicy::none() },
            no_curriculum: true,
            ..TrainConfig::default()
        };
        let (model, _) = train_on_documents(&docs, char_mode_for(&docs), &tiny_arch(), &cfg).unwrap();
        let s = crate::pipeline::score_normalizer(&docs, &model, crate::decoding::DecodeStrategy::Simultaneous, None)
            .unwrap();
        assert_eq!(s.exact_match, 100.0);
    }

    #[test]
    fn char_mode_round_trip() {
        let v = ModelVocab::build(ValueMode::Chars { len: 24 }, &SlotVocabulary::baseline(), &[]).unwrap();
        let ids = v.encode_value("UNDEF-last-day").unwrap();
        assert_eq!(ids.len(), 24);
        assert_eq!(v.decode_value(&ids).unwrap(), "UNDEF-last-day");
        assert!(v.encode_value(&"x".repeat(25)).is_err());
    }
}
