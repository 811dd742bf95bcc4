//! The closed slot-token vocabulary.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::slots::{lexicon, SlotSequence, PAD};

/// Default cap on vocabulary size.
pub const DEFAULT_CAP: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotVocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

fn numerals() -> (Vec<String>, Vec<String>) {
    let two = (0..100).map(|n| format!("{n:02}")).collect();
    let one = (0..10).map(|n| n.to_string()).collect();
    (two, one)
}

/// Token classes in their fixed order; a token belongs to the first class
/// listing it.
fn closed_classes() -> Vec<Vec<String>> {
    let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (two, one) = numerals();
    vec![
        vec![PAD.to_string()],
        owned(lexicon::UNITS),
        owned(lexicon::UNITS_F),
        owned(lexicon::DAYTIME),
        owned(lexicon::SPECIAL),
        owned(lexicon::NAMES),
        owned(lexicon::RELATIONAL),
        owned(lexicon::OPERATORS),
        owned(lexicon::FUNCTIONS),
        owned(lexicon::LITERALS),
        two,
        one,
    ]
}

impl SlotVocabulary {
    /// The closed-class vocabulary every encoded CIR draws from.
    pub fn baseline() -> Self {
        SlotVocabulary::from_tokens(Self::ordered(closed_classes())).expect("baseline has no duplicates")
    }

    fn ordered(classes: Vec<Vec<String>>) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for mut class in classes {
            class.sort();
            for t in class {
                if seen.insert(t.clone()) {
                    out.push(t);
                }
            }
        }
        out
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD) {
            return Err(Error::Data("slot vocabulary must start with [PAD]".into()));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(SlotVocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn encode(&self, slots: &SlotSequence) -> Result<Vec<u32>> {
        slots
            .tokens()
            .iter()
            .map(|t| self.id(t).ok_or_else(|| Error::UnknownSlotToken(t.clone())))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<SlotSequence> {
        let toks: Vec<String> = ids
            .iter()
            .map(|i| self.token(*i).map(str::to_string).ok_or_else(|| Error::UnknownSlotToken(format!("#{i}"))))
            .collect::<Result<_>>()?;
        SlotSequence::from_tokens(toks)
    }

    /// One token per line; the line number is the token id.
    pub fn write(&self, mut w: impl Write) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Self> {
        let tokens = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        SlotVocabulary::from_tokens(tokens)
    }
}

/// Baseline vocabulary extended by any corpus tokens outside it. Extra
/// tokens form a final class in lexicographic order.
pub fn build_vocabulary<'a>(corpus: impl IntoIterator<Item = &'a SlotSequence>, cap: usize) -> Result<SlotVocabulary> {
    let base = SlotVocabulary::baseline();
    let extra: BTreeSet<String> = corpus
        .into_iter()
        .flat_map(|s| s.tokens().iter())
        .filter(|t| !base.contains(t))
        .cloned()
        .collect();
    let mut tokens = base.tokens;
    tokens.extend(extra);
    if tokens.len() > cap {
        return Err(Error::VocabularyOverflow { cap, overflow: tokens[cap..].to_vec() });
    }
    SlotVocabulary::from_tokens(tokens)
}
