//! TimeML documents: inline TIMEX3 parsing and serialization, JSONL I/O and
//! BIO conversion.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anchor::TenseHint;
use crate::calendar::CalendarDate;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TimexType {
    Date,
    Time,
    Duration,
    Set,
}

impl TimexType {
    pub const ALL: [TimexType; 4] = [TimexType::Date, TimexType::Time, TimexType::Duration, TimexType::Set];

    pub fn as_str(self) -> &'static str {
        match self {
            TimexType::Date => "DATE",
            TimexType::Time => "TIME",
            TimexType::Duration => "DURATION",
            TimexType::Set => "SET",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TimexType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimexType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        TimexType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown TIMEX3 type {s:?}"))
    }
}

/// A temporal expression over the half-open token range `start..end`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimexAnnotation {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub ttype: TimexType,
    #[serde(default)]
    pub value: String,
}

impl TimexAnnotation {
    pub fn new(start: usize, end: usize, ttype: TimexType, value: impl Into<String>) -> Self {
        TimexAnnotation { start, end, ttype, value: value.into() }
    }

    pub fn overlaps(&self, other: &TimexAnnotation) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn same_span(&self, other: &TimexAnnotation) -> bool {
        self.start == other.start && self.end == other.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub dct: Option<CalendarDate>,
    #[serde(default)]
    pub annotations: Vec<TimexAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tense: Option<TenseHint>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Self {
        Document { id: id.into(), tokens, ..Default::default() }
    }

    /// Checks span bounds, ordering and non-overlap.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0;
        for (i, a) in self.annotations.iter().enumerate() {
            if a.start >= a.end || a.end > self.tokens.len() {
                return Err(Error::Data(format!(
                    "document {:?}: annotation {i} has invalid span {}..{} for {} tokens",
                    self.id,
                    a.start,
                    a.end,
                    self.tokens.len()
                )));
            }
            if i > 0 && a.start < prev_end {
                return Err(Error::Data(format!(
                    "document {:?}: annotation {i} overlaps or is out of order",
                    self.id
                )));
            }
            prev_end = a.end;
        }
        Ok(())
    }

    pub fn span_text(&self, a: &TimexAnnotation) -> String {
        self.tokens[a.start..a.end].join(" ")
    }

    /// Copy of the document with all annotation values cleared.
    pub fn without_values(&self) -> Document {
        let mut d = self.clone();
        for a in &mut d.annotations {
            a.value.clear();
        }
        d
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '«' | '»' | '“' | '”' | '„' | '‘' | '’' | '…' | '–' | '—' | '¿' | '¡')
}

/// Splits on Unicode whitespace, then peels leading and trailing punctuation
/// characters off each chunk as single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let lead = chars.iter().take_while(|c| is_punct(**c)).count();
        if lead == chars.len() {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| is_punct(**c)).count();
        out.extend(chars[..lead].iter().map(|c| c.to_string()));
        out.push(chars[lead..chars.len() - trail].iter().collect());
        out.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    out
}

fn unescape(s: &str, offset: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        let (ch, len) = [("&amp;", '&'), ("&lt;", '<'), ("&gt;", '>'), ("&quot;", '"'), ("&apos;", '\'')]
            .iter()
            .find(|(e, _)| tail.starts_with(e))
            .map(|(e, c)| (*c, e.len()))
            .ok_or_else(|| Error::parse(offset + (s.len() - rest.len()) + i, "unknown entity"))?;
        out.push(ch);
        rest = &tail[len..];
    }
    out.push_str(rest);
    Ok(out)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// An opening or closing tag found at `offset`.
struct Tag {
    offset: usize,
    end: usize,
    name: String,
    closing: bool,
    attrs: Vec<(String, String)>,
}

fn parse_tag(text: &str, offset: usize) -> Result<Tag> {
    let close = text[offset..]
        .find('>')
        .map(|i| offset + i)
        .ok_or_else(|| Error::parse(offset, "unterminated tag"))?;
    let inner = &text[offset + 1..close];
    let (closing, inner) = match inner.strip_prefix('/') {
        Some(rest) => (true, rest),
        None => (false, inner),
    };
    let name_len = inner.find(|c: char| c.is_whitespace()).unwrap_or(inner.len());
    let name = inner[..name_len].to_string();
    if name.is_empty() {
        return Err(Error::parse(offset, "empty tag name"));
    }
    let mut attrs = Vec::new();
    let mut rest = inner[name_len..].trim_start();
    let attr_base = |r: &str| offset + 1 + usize::from(closing) + (inner.len() - r.len());
    while !rest.is_empty() {
        if closing {
            return Err(Error::parse(attr_base(rest), "closing tag with attributes"));
        }
        let eq = rest.find('=').ok_or_else(|| Error::parse(attr_base(rest), "attribute without value"))?;
        let key = rest[..eq].trim().to_string();
        let after = rest[eq + 1..].trim_start();
        let quote = after
            .chars()
            .next()
            .filter(|c| *c == '"' || *c == '\'')
            .ok_or_else(|| Error::parse(attr_base(after), "unquoted attribute value"))?;
        let body = &after[1..];
        let end = body.find(quote).ok_or_else(|| Error::parse(attr_base(after), "unterminated attribute value"))?;
        let value = unescape(&body[..end], attr_base(body))?;
        attrs.push((key, value));
        rest = body[end + 1..].trim_start();
    }
    Ok(Tag { offset, end: close + 1, name, closing, attrs })
}

fn attr<'a>(tag: &'a Tag, key: &str) -> Option<&'a str> {
    tag.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Parses inline TimeML, optionally wrapped in `<DOC id=".." dct="..">`.
pub fn parse_inline(text: &str) -> Result<Document> {
    let mut doc = Document::default();
    let mut pos = 0;
    let mut open: Option<(Tag, usize)> = None;
    let mut in_doc = false;
    let mut doc_closed = false;

    let push_text = |doc: &mut Document, from: usize, to: usize| -> Result<()> {
        let raw = unescape(&text[from..to], from)?;
        doc.tokens.extend(tokenize(&raw));
        Ok(())
    };

    while let Some(rel) = text[pos..].find('<') {
        let at = pos + rel;
        push_text(&mut doc, pos, at)?;
        if doc_closed && !text[pos..at].trim().is_empty() {
            return Err(Error::parse(pos, "text after </DOC>"));
        }
        let tag = parse_tag(text, at)?;
        let tag_end = tag.end;
        match (tag.name.as_str(), tag.closing) {
            ("DOC", false) => {
                if in_doc || doc_closed || !doc.tokens.is_empty() {
                    return Err(Error::parse(at, "DOC must wrap the whole text"));
                }
                in_doc = true;
                doc.id = attr(&tag, "id").unwrap_or_default().to_string();
                if let Some(d) = attr(&tag, "dct") {
                    doc.dct = Some(d.parse().map_err(|e| Error::parse(at, format!("bad dct: {e}")))?);
                }
                doc.lang = attr(&tag, "lang").map(str::to_string);
                if let Some(t) = attr(&tag, "tense") {
                    doc.tense = Some(t.parse().map_err(|e: String| Error::parse(at, e))?);
                }
            }
            ("DOC", true) => {
                if !in_doc || open.is_some() {
                    return Err(Error::parse(at, "unexpected </DOC>"));
                }
                in_doc = false;
                doc_closed = true;
            }
            ("TIMEX3", false) => {
                if open.is_some() {
                    return Err(Error::parse(at, "nested TIMEX3"));
                }
                let start = doc.tokens.len();
                open = Some((tag, start));
            }
            ("TIMEX3", true) => {
                let (open_tag, start) = open.take().ok_or_else(|| Error::parse(at, "</TIMEX3> without opening tag"))?;
                let ttype = attr(&open_tag, "type")
                    .ok_or_else(|| Error::parse(open_tag.offset, "TIMEX3 without type attribute"))?
                    .parse::<TimexType>()
                    .map_err(|e| Error::parse(open_tag.offset, e))?;
                let value = attr(&open_tag, "value")
                    .ok_or_else(|| Error::parse(open_tag.offset, "TIMEX3 without value attribute"))?
                    .to_string();
                let end = doc.tokens.len();
                if end == start {
                    return Err(Error::parse(open_tag.offset, "empty TIMEX3"));
                }
                doc.annotations.push(TimexAnnotation { start, end, ttype, value });
            }
            (other, _) => return Err(Error::parse(at, format!("unsupported element <{other}>"))),
        }
        pos = tag_end;
    }
    if let Some((tag, _)) = open {
        return Err(Error::parse(tag.offset, "unclosed TIMEX3"));
    }
    if in_doc {
        return Err(Error::parse(text.len(), "unclosed DOC"));
    }
    if doc_closed && !text[pos..].trim().is_empty() {
        return Err(Error::parse(pos, "text after </DOC>"));
    }
    push_text(&mut doc, pos, text.len())?;
    Ok(doc)
}

/// Serializes tokens joined by single spaces with inline TIMEX3 elements.
/// A `<DOC>` wrapper is written when the document carries an id, DCT,
/// language or tense.
pub fn serialize_inline(doc: &Document) -> String {
    let mut body = String::new();
    let mut ann = doc.annotations.iter().peekable();
    for (i, tok) in doc.tokens.iter().enumerate() {
        if i > 0 {
            body.push(' ');
        }
        if let Some(a) = ann.peek().filter(|a| a.start == i) {
            body.push_str(&format!(
                "<TIMEX3 type=\"{}\" value=\"{}\">",
                a.ttype,
                escape(&a.value)
            ));
        }
        body.push_str(&escape(tok));
        if ann.peek().is_some_and(|a| a.end == i + 1) {
            body.push_str("</TIMEX3>");
            ann.next();
        }
    }
    if doc.id.is_empty() && doc.dct.is_none() && doc.lang.is_none() && doc.tense.is_none() {
        return body;
    }
    let mut head = format!("<DOC id=\"{}\"", escape(&doc.id));
    if let Some(d) = doc.dct {
        head.push_str(&format!(" dct=\"{d}\""));
    }
    if let Some(l) = &doc.lang {
        head.push_str(&format!(" lang=\"{}\"", escape(l)));
    }
    if let Some(t) = doc.tense {
        head.push_str(&format!(" tense=\"{t}\""));
    }
    format!("{head}>{body}</DOC>")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BioTag {
    O,
    B(TimexType),
    I(TimexType),
}

impl BioTag {
    /// Number of distinct labels: O plus B/I for each type.
    pub const COUNT: usize = 9;

    pub fn index(self) -> usize {
        match self {
            BioTag::O => 0,
            BioTag::B(t) => 1 + 2 * t.index(),
            BioTag::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<BioTag> {
        match i {
            0 => Some(BioTag::O),
            1..=8 => {
                let t = TimexType::ALL[(i - 1) / 2];
                Some(if i % 2 == 1 { BioTag::B(t) } else { BioTag::I(t) })
            }
            _ => None,
        }
    }
}

pub fn to_bio(doc: &Document) -> Vec<BioTag> {
    let mut tags = vec![BioTag::O; doc.tokens.len()];
    for a in &doc.annotations {
        for (k, tag) in tags[a.start..a.end].iter_mut().enumerate() {
            *tag = if k == 0 { BioTag::B(a.ttype) } else { BioTag::I(a.ttype) };
        }
    }
    tags
}

/// Maximal `B I*` runs become annotations with empty values. An `I` that
/// does not continue a run of its own type opens a new span.
pub fn from_bio(tags: &[BioTag], tokens: &[String]) -> Vec<TimexAnnotation> {
    debug_assert_eq!(tags.len(), tokens.len());
    let mut out: Vec<TimexAnnotation> = Vec::new();
    let mut current: Option<TimexAnnotation> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            BioTag::O => out.extend(current.take()),
            BioTag::B(t) => {
                out.extend(current.take());
                current = Some(TimexAnnotation::new(i, i + 1, t, ""));
            }
            BioTag::I(t) => match current.as_mut() {
                Some(c) if c.ttype == t => c.end = i + 1,
                _ => {
                    out.extend(current.take());
                    current = Some(TimexAnnotation::new(i, i + 1, t, ""));
                }
            },
        }
    }
    out.extend(current);
    out
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("line {}: {e}", n + 1)))?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl(mut writer: impl Write, docs: &[Document]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_jsonl(path: impl AsRef<std::path::Path>) -> Result<Vec<Document>> {
    let f = std::fs::File::open(path.as_ref())?;
    read_jsonl(std::io::BufReader::new(f))
}

pub fn save_jsonl(path: impl AsRef<std::path::Path>, docs: &[Document]) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(&mut w, docs)?;
    w.flush()?;
    Ok(())
}
