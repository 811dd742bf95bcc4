//! Synthetic weakly-labelled corpora.
//!
//! Each language is a pattern table: surface templates paired with CIR
//! templates, grouped by CIR class, plus sentence frames to embed them in.
//! Two hand-written lexicons (`de`-like and `en`-like) are built in; further
//! languages are pseudo-languages derived from the `en` lexicon by a
//! deterministic word substitution, so the CIR space stays shared.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchor::TenseHint;
use crate::calendar::CalendarDate;
use crate::corpus::{Document, TimexAnnotation, TimexType};
use crate::error::{Error, Result};
use crate::slots::CirClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    News,
    Narrative,
}

impl std::str::FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "news" => Ok(Style::News),
            "narrative" => Ok(Style::Narrative),
            other => Err(format!("unknown style {other:?}")),
        }
    }
}

/// Share of explicit and relative expressions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMix {
    pub explicit_fraction: f64,
    pub relative_fraction: f64,
}

impl DomainMix {
    pub fn new(explicit_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&explicit_fraction) {
            return Err(Error::Config(format!("explicit fraction {explicit_fraction} outside [0, 1]")));
        }
        Ok(DomainMix { explicit_fraction, relative_fraction: 1.0 - explicit_fraction })
    }

    /// Preset for a style and language. Even language indices use the
    /// `de` distribution, odd ones the `en` distribution.
    pub fn preset(style: Style, language: usize) -> Self {
        let explicit = match (style, language % 2) {
            (Style::News, 0) => 0.671,
            (Style::News, _) => 0.523,
            (Style::Narrative, 0) => 0.476,
            (Style::Narrative, _) => 0.442,
        };
        DomainMix { explicit_fraction: explicit, relative_fraction: 1.0 - explicit }
    }
}

/// One surface template with its CIR template and TimeML type.
///
/// Placeholders: `{n}` count 2..=9, `{d}`/`{DD}` day, `{m}`/`{MM}` month,
/// `{y}` year, `{wd}`/`{WD}` weekday, `{h}`/`{hh}` hour, `{mi}` minute.
/// Lowercase forms are surface text, uppercase forms their CIR spelling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub surface: String,
    pub cir: String,
    pub ttype: TimexType,
}

/// Sentence frames for one tense: `{TE}` marks the expression slot and
/// `{S}`, `{V}`, `{O}` draw from the filler lists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Frames {
    pub frames: Vec<String>,
    pub subjects: Vec<String>,
    pub verbs: Vec<String>,
    pub objects: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    pub code: String,
    pub months: Vec<String>,
    pub weekdays: Vec<String>,
    pub patterns: HashMap<CirClass, Vec<Pattern>>,
    pub frames: HashMap<(Style, TenseHint), Frames>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticGrammar {
    pub languages: Vec<Lexicon>,
    /// Relative sampling weight of each class within its explicit or
    /// relative side, indexed like [`CirClass::ALL`].
    pub class_weights: [u32; 6],
}

const WEEKDAY_CIR: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];

fn p(surface: &str, cir: &str, ttype: TimexType) -> Pattern {
    Pattern { surface: surface.into(), cir: cir.into(), ttype }
}

fn words(s: &str) -> Vec<String> {
    s.split('|').map(str::to_string).collect()
}

fn frames(frames: &str, subjects: &str, verbs: &str, objects: &str) -> Frames {
    Frames { frames: words(frames), subjects: words(subjects), verbs: words(verbs), objects: words(objects) }
}

fn feast_patterns(names: &[(&str, &str)], year_frame: &str) -> Vec<Pattern> {
    use TimexType::Date;
    let mut out = Vec::new();
    for (surface, call) in names {
        let (mm, call) = call.split_once(' ').expect("month prefix");
        out.push(p(surface, &format!("UNDEF-year-{mm}-00 funcDateCalc({call})"), Date));
        let with_year = year_frame.replace("{f}", surface);
        out.push(p(&with_year, &format!("{{y}}-{mm}-00 funcDateCalc({call})"), Date));
    }
    out
}

fn en_lexicon() -> Lexicon {
    use TimexType::*;
    let mut patterns = HashMap::new();
    patterns.insert(
        CirClass::Reference,
        vec![
            p("now", "PRESENT_REF", Date),
            p("currently", "PRESENT_REF", Date),
            p("at present", "PRESENT_REF", Date),
            p("recently", "PAST_REF", Date),
            p("in the past", "PAST_REF", Date),
            p("in the future", "FUTURE_REF", Date),
            p("soon", "FUTURE_REF", Date),
        ],
    );
    patterns.insert(
        CirClass::ExplicitDate,
        vec![
            p("{m} {d} , {y}", "{y}-{MM}-{DD}", Date),
            p("{m} {y}", "{y}-{MM}", Date),
            p("{y}", "{y}", Date),
            p("{m} {d} , {y} at {h} : {mi}", "{y}-{MM}-{DD}T{hh}:{mi}", Time),
            p("the morning of {m} {d} , {y}", "{y}-{MM}-{DD}TMO", Time),
            p("the summer of {y}", "{y}-SU", Date),
        ],
    );
    patterns.insert(
        CirClass::Duration,
        vec![
            p("{n} days", "P{n}D", Duration),
            p("{n} weeks", "P{n}W", Duration),
            p("{n} months", "P{n}M", Duration),
            p("{n} years", "P{n}Y", Duration),
            p("{n} hours", "PT{n}H", Duration),
            p("{n} minutes", "PT{n}M", Duration),
            p("{n} days and 12 hours", "P{n}D12H", Duration),
            p("every day", "P1D", Set),
            p("every week", "P1W", Set),
            p("every month", "P1M", Set),
            p("every year", "P1Y", Set),
        ],
    );
    patterns.insert(
        CirClass::RelativeDate,
        vec![
            p("yesterday", "UNDEF-last-day", Date),
            p("today", "UNDEF-this-day", Date),
            p("tomorrow", "UNDEF-next-day", Date),
            p("the day after tomorrow", "UNDEF-this-day-PLUS-2", Date),
            p("the day before yesterday", "UNDEF-this-day-MINUS-2", Date),
            p("last week", "UNDEF-last-week", Date),
            p("this week", "UNDEF-this-week", Date),
            p("next week", "UNDEF-next-week", Date),
            p("last month", "UNDEF-last-month", Date),
            p("next month", "UNDEF-next-month", Date),
            p("last year", "UNDEF-last-year", Date),
            p("this year", "UNDEF-this-year", Date),
            p("next year", "UNDEF-next-year", Date),
            p("last {wd}", "UNDEF-last-{WD}", Date),
            p("next {wd}", "UNDEF-next-{WD}", Date),
            p("{n} days ago", "UNDEF-this-day-MINUS-{n}", Date),
            p("{n} weeks ago", "UNDEF-this-week-MINUS-{n}", Date),
            p("{n} years ago", "UNDEF-this-year-MINUS-{n}", Date),
            p("in {n} days", "UNDEF-this-day-PLUS-{n}", Date),
            p("in {n} months", "UNDEF-this-month-PLUS-{n}", Date),
            p("{n} days later", "UNDEF-REF-day-PLUS-{n}", Date),
            p("{n} years earlier", "UNDEF-REF-year-MINUS-{n}", Date),
            p("this morning", "UNDEF-this-dayTMO", Time),
            p("tonight", "UNDEF-this-dayTNI", Time),
            p("yesterday evening", "UNDEF-last-dayTEV", Time),
        ],
    );
    patterns.insert(
        CirClass::CoarseRelative,
        vec![
            p("{m}", "UNDEF-year-{MM}", Date),
            p("{m} {d}", "UNDEF-year-{MM}-{DD}", Date),
            p("early {m}", "UNDEF-year-{MM}", Date),
            p("{m} {d} at {h} : {mi}", "UNDEF-year-{MM}-{DD}T{hh}:{mi}", Time),
        ],
    );
    patterns.insert(
        CirClass::FunctionDate,
        feast_patterns(
            &[
                ("easter", "00 EasterSunday(YEAR, 0)"),
                ("good friday", "00 EasterSunday(YEAR, -2)"),
                ("easter monday", "00 EasterSunday(YEAR, 1)"),
                ("ascension day", "00 EasterSunday(YEAR, 39)"),
                ("pentecost", "00 EasterSunday(YEAR, 49)"),
                ("orthodox easter", "00 EasterSundayOrthodox(YEAR, 0)"),
                ("clean monday", "00 ShroveTideOrthodox(YEAR)"),
                ("mothers day", "05 WeekdayRelativeTo(YEAR-05-01, 1, 2, true)"),
                ("thanksgiving", "11 WeekdayRelativeTo(YEAR-11-01, 5, 4, true)"),
            ],
            "{f} {y}",
        ),
    );
    let mut fr = HashMap::new();
    let news_s = "the minister|the company|the council|officials|the president|the court|the union|the bank";
    let news_o = "the budget|a trade deal|the report|the results|the plan|new rules|the merger|the contract";
    let news_frames = "{S} {V} {O} {TE} .|{TE} , {S} {V} {O} .|{S} {V} {O} .";
    fr.insert(
        (Style::News, TenseHint::Past),
        frames(news_frames, news_s, "announced|approved|rejected|reported|signed|published", news_o),
    );
    fr.insert(
        (Style::News, TenseHint::Present),
        frames(news_frames, news_s, "announces|approves|rejects|reviews|discusses|expects", news_o),
    );
    fr.insert(
        (Style::News, TenseHint::Future),
        frames(news_frames, news_s, "will announce|will approve|will sign|will review|will publish", news_o),
    );
    fr.insert(
        (Style::Narrative, TenseHint::Past),
        frames(
            "{S} {V} {TE} .|{TE} {S} {V} .|{S} {V} .",
            "the king|the painter|the village|the army|the writer|the family|the monastery|she|he",
            "moved to the city|built a church|wrote a letter|returned home|lost the battle|was born|married|died",
            "",
        ),
    );
    Lexicon {
        code: "en".into(),
        months: words("january|february|march|april|may|june|july|august|september|october|november|december"),
        weekdays: words("monday|tuesday|wednesday|thursday|friday|saturday|sunday"),
        patterns,
        frames: fr,
    }
}

fn de_lexicon() -> Lexicon {
    use TimexType::*;
    let mut patterns = HashMap::new();
    patterns.insert(
        CirClass::Reference,
        vec![
            p("jetzt", "PRESENT_REF", Date),
            p("derzeit", "PRESENT_REF", Date),
            p("zur zeit", "PRESENT_REF", Date),
            p("kürzlich", "PAST_REF", Date),
            p("früher", "PAST_REF", Date),
            p("in zukunft", "FUTURE_REF", Date),
            p("bald", "FUTURE_REF", Date),
        ],
    );
    patterns.insert(
        CirClass::ExplicitDate,
        vec![
            p("{d} . {m} {y}", "{y}-{MM}-{DD}", Date),
            p("{m} {y}", "{y}-{MM}", Date),
            p("{y}", "{y}", Date),
            p("{d} . {m} {y} um {h} : {mi} uhr", "{y}-{MM}-{DD}T{hh}:{mi}", Time),
            p("am morgen des {d} . {m} {y}", "{y}-{MM}-{DD}TMO", Time),
            p("im sommer {y}", "{y}-SU", Date),
        ],
    );
    patterns.insert(
        CirClass::Duration,
        vec![
            p("{n} tage", "P{n}D", Duration),
            p("{n} wochen", "P{n}W", Duration),
            p("{n} monate", "P{n}M", Duration),
            p("{n} jahre", "P{n}Y", Duration),
            p("{n} stunden", "PT{n}H", Duration),
            p("{n} minuten", "PT{n}M", Duration),
            p("{n} tage und 12 stunden", "P{n}D12H", Duration),
            p("jeden tag", "P1D", Set),
            p("jede woche", "P1W", Set),
            p("jeden monat", "P1M", Set),
            p("jedes jahr", "P1Y", Set),
        ],
    );
    patterns.insert(
        CirClass::RelativeDate,
        vec![
            p("gestern", "UNDEF-last-day", Date),
            p("heute", "UNDEF-this-day", Date),
            p("morgen", "UNDEF-next-day", Date),
            p("übermorgen", "UNDEF-this-day-PLUS-2", Date),
            p("vorgestern", "UNDEF-this-day-MINUS-2", Date),
            p("letzte woche", "UNDEF-last-week", Date),
            p("diese woche", "UNDEF-this-week", Date),
            p("nächste woche", "UNDEF-next-week", Date),
            p("letzten monat", "UNDEF-last-month", Date),
            p("nächsten monat", "UNDEF-next-month", Date),
            p("letztes jahr", "UNDEF-last-year", Date),
            p("dieses jahr", "UNDEF-this-year", Date),
            p("nächstes jahr", "UNDEF-next-year", Date),
            p("letzten {wd}", "UNDEF-last-{WD}", Date),
            p("nächsten {wd}", "UNDEF-next-{WD}", Date),
            p("vor {n} tagen", "UNDEF-this-day-MINUS-{n}", Date),
            p("vor {n} wochen", "UNDEF-this-week-MINUS-{n}", Date),
            p("vor {n} jahren", "UNDEF-this-year-MINUS-{n}", Date),
            p("in {n} tagen", "UNDEF-this-day-PLUS-{n}", Date),
            p("in {n} monaten", "UNDEF-this-month-PLUS-{n}", Date),
            p("{n} tage später", "UNDEF-REF-day-PLUS-{n}", Date),
            p("{n} jahre zuvor", "UNDEF-REF-year-MINUS-{n}", Date),
            p("heute morgen", "UNDEF-this-dayTMO", Time),
            p("heute nacht", "UNDEF-this-dayTNI", Time),
            p("gestern abend", "UNDEF-last-dayTEV", Time),
        ],
    );
    patterns.insert(
        CirClass::CoarseRelative,
        vec![
            p("{m}", "UNDEF-year-{MM}", Date),
            p("{d} . {m}", "UNDEF-year-{MM}-{DD}", Date),
            p("anfang {m}", "UNDEF-year-{MM}", Date),
            p("{d} . {m} um {h} : {mi} uhr", "UNDEF-year-{MM}-{DD}T{hh}:{mi}", Time),
        ],
    );
    patterns.insert(
        CirClass::FunctionDate,
        feast_patterns(
            &[
                ("ostern", "00 EasterSunday(YEAR, 0)"),
                ("karfreitag", "00 EasterSunday(YEAR, -2)"),
                ("ostermontag", "00 EasterSunday(YEAR, 1)"),
                ("christi himmelfahrt", "00 EasterSunday(YEAR, 39)"),
                ("pfingsten", "00 EasterSunday(YEAR, 49)"),
                ("orthodoxe ostern", "00 EasterSundayOrthodox(YEAR, 0)"),
                ("reiner montag", "00 ShroveTideOrthodox(YEAR)"),
                ("muttertag", "05 WeekdayRelativeTo(YEAR-05-01, 1, 2, true)"),
                ("erntedankfest", "10 WeekdayRelativeTo(YEAR-10-01, 1, 1, true)"),
            ],
            "{f} {y}",
        ),
    );
    let mut fr = HashMap::new();
    let news_s = "der minister|die firma|der rat|beamte|die präsidentin|das gericht|die gewerkschaft|die bank";
    let news_o = "den haushalt|ein abkommen|den bericht|die ergebnisse|den plan|neue regeln|die fusion|den vertrag";
    let news_frames = "{S} {V} {O} {TE} .|{TE} {V} {S} {O} .|{S} {V} {O} .";
    fr.insert(
        (Style::News, TenseHint::Past),
        frames(news_frames, news_s, "kündigte|billigte|verwarf|meldete|unterzeichnete|veröffentlichte", news_o),
    );
    fr.insert(
        (Style::News, TenseHint::Present),
        frames(news_frames, news_s, "kündigt|billigt|verwirft|prüft|diskutiert|erwartet", news_o),
    );
    fr.insert(
        (Style::News, TenseHint::Future),
        frames(news_frames, news_s, "wird ankündigen|wird billigen|wird unterzeichnen|wird prüfen", news_o),
    );
    fr.insert(
        (Style::Narrative, TenseHint::Past),
        frames(
            "{S} {V} {TE} .|{TE} {V} {S} .|{S} {V} .",
            "der könig|der maler|das dorf|das heer|der dichter|die familie|das kloster|sie|er",
            "zog in die stadt|baute eine kirche|schrieb einen brief|kehrte heim|verlor die schlacht|wurde geboren|heiratete|starb",
            "",
        ),
    );
    Lexicon {
        code: "de".into(),
        months: words("januar|februar|märz|april|mai|juni|juli|august|september|oktober|november|dezember"),
        weekdays: words("montag|dienstag|mittwoch|donnerstag|freitag|samstag|sonntag"),
        patterns,
        frames: fr,
    }
}

/// Deterministic pseudo-word for `word` in pseudo-language `index`.
fn pseudo_word(word: &str, index: usize) -> String {
    if word.chars().all(|c| !c.is_alphabetic()) {
        return word.to_string();
    }
    const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ index as u64;
    for b in word.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let syllables = 1 + (word.chars().count() / 4).min(3);
    let mut out = String::new();
    for _ in 0..syllables {
        out.push_str(ONSETS[(h % 14) as usize]);
        h /= 14;
        out.push_str(NUCLEI[(h % 6) as usize]);
        h /= 6;
    }
    out.push_str(["", "n", "k", "s"][(h % 4) as usize]);
    out
}

fn translate(text: &str, index: usize) -> String {
    text.split(' ')
        .map(|w| if w.starts_with('{') { w.to_string() } else { pseudo_word(w, index) })
        .collect::<Vec<_>>()
        .join(" ")
}

fn pseudo_lexicon(index: usize) -> Lexicon {
    let base = en_lexicon();
    let tr = |s: &String| translate(s, index);
    let tr_frames = |f: &Frames| Frames {
        frames: f.frames.clone(),
        subjects: f.subjects.iter().map(tr).collect(),
        verbs: f.verbs.iter().map(tr).collect(),
        objects: f.objects.iter().map(tr).collect(),
    };
    Lexicon {
        code: format!("x{index}"),
        months: base.months.iter().map(tr).collect(),
        weekdays: base.weekdays.iter().map(tr).collect(),
        patterns: base
            .patterns
            .iter()
            .map(|(c, ps)| (*c, ps.iter().map(|p| Pattern { surface: tr(&p.surface), ..p.clone() }).collect()))
            .collect(),
        frames: base.frames.iter().map(|(k, f)| (*k, tr_frames(f))).collect(),
    }
}

impl SyntheticGrammar {
    /// `de`-like, `en`-like, then pseudo-languages up to `languages` in total.
    pub fn builtin(languages: usize) -> Self {
        let languages = (0..languages.max(1))
            .map(|i| match i {
                0 => de_lexicon(),
                1 => en_lexicon(),
                i => pseudo_lexicon(i),
            })
            .collect();
        SyntheticGrammar { languages, class_weights: [1; 6] }
    }

    fn validate(&self, style: Style) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::Config("grammar has no languages".into()));
        }
        for lex in &self.languages {
            if !lex.frames.keys().any(|(s, _)| *s == style) {
                return Err(Error::Config(format!("language {} has no {style:?} templates", lex.code)));
            }
            for side in [true, false] {
                let any = CirClass::ALL.iter().enumerate().any(|(i, c)| {
                    c.is_explicit() == side
                        && self.class_weights[i] > 0
                        && lex.patterns.get(c).is_some_and(|v| !v.is_empty())
                });
                if !any {
                    return Err(Error::Config(format!("language {} has no patterns on one side", lex.code)));
                }
            }
        }
        Ok(())
    }
}

struct Fill {
    n: u32,
    day: u8,
    month: u8,
    year: i32,
    weekday: usize,
    hour: u8,
    minute: u8,
}

fn fill(template: &str, lex: &Lexicon, f: &Fill) -> String {
    template
        .replace("{n}", &f.n.to_string())
        .replace("{d}", &f.day.to_string())
        .replace("{DD}", &format!("{:02}", f.day))
        .replace("{m}", &lex.months[f.month as usize - 1])
        .replace("{MM}", &format!("{:02}", f.month))
        .replace("{y}", &f.year.to_string())
        .replace("{wd}", &lex.weekdays[f.weekday])
        .replace("{WD}", WEEKDAY_CIR[f.weekday])
        .replace("{h}", &f.hour.to_string())
        .replace("{hh}", &format!("{:02}", f.hour))
        .replace("{mi}", &format!("{:02}", f.minute))
}

fn pick_class(grammar: &SyntheticGrammar, lex: &Lexicon, explicit: bool, rng: &mut impl Rng) -> CirClass {
    let options: Vec<(CirClass, u32)> = CirClass::ALL
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_explicit() == explicit && lex.patterns.get(c).is_some_and(|v| !v.is_empty()))
        .map(|(i, c)| (*c, grammar.class_weights[i]))
        .filter(|(_, w)| *w > 0)
        .collect();
    let total: u32 = options.iter().map(|(_, w)| w).sum();
    let mut r = rng.gen_range(0..total);
    for (c, w) in &options {
        if r < *w {
            return *c;
        }
        r -= w;
    }
    unreachable!("weights sum to total")
}

fn tense_for(style: Style, rng: &mut impl Rng) -> TenseHint {
    match style {
        Style::Narrative => TenseHint::Past,
        Style::News => *[TenseHint::Past, TenseHint::Past, TenseHint::Present, TenseHint::Future]
            .choose(rng)
            .expect("non-empty"),
    }
}

/// Generates `n_docs` documents. Document `i` uses language `i % K`; each
/// language keeps its explicit share on target by error diffusion over its
/// expressions in generation order.
pub fn generate(grammar: &SyntheticGrammar, style: Style, n_docs: usize, seed: u64) -> Result<Vec<Document>> {
    if n_docs == 0 {
        return Err(Error::Config("n_docs must be at least 1".into()));
    }
    grammar.validate(style)?;
    let k = grammar.languages.len();
    let mut explicit_seen = vec![0usize; k];
    let mut total_seen = vec![0usize; k];
    let mut docs = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let li = i % k;
        let lex = &grammar.languages[li];
        let mix = DomainMix::preset(style, li);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut tense = tense_for(style, &mut rng);
        if !lex.frames.contains_key(&(style, tense)) {
            tense = TenseHint::Past;
        }
        let fr = lex
            .frames
            .get(&(style, tense))
            .or_else(|| lex.frames.iter().find(|((s, _), _)| *s == style).map(|(_, f)| f))
            .expect("validated");
        let dct = CalendarDate::new(rng.gen_range(2000..=2025), rng.gen_range(1..=12), rng.gen_range(1..=28))?;
        let mut doc = Document::new(format!("{}-{}-{i:05}", lex.code, style_name(style)), Vec::new());
        doc.dct = Some(dct);
        doc.lang = Some(lex.code.clone());
        doc.tense = Some(tense);
        let sentences = rng.gen_range(2..=4);
        for s in 0..sentences {
            let with_te: Vec<&String> = fr.frames.iter().filter(|f| f.contains("{TE}")).collect();
            let frame = if s == 0 || rng.gen_bool(0.8) {
                (*with_te.choose(&mut rng).expect("frames with TE")).clone()
            } else {
                fr.frames.iter().find(|f| !f.contains("{TE}")).cloned().unwrap_or_else(|| with_te[0].clone())
            };
            for part in frame.split(' ') {
                match part {
                    "{TE}" => {
                        let t = total_seen[li];
                        let explicit = ((t + 1) as f64 * mix.explicit_fraction).floor() as usize > explicit_seen[li];
                        total_seen[li] += 1;
                        if explicit {
                            explicit_seen[li] += 1;
                        }
                        let class = pick_class(grammar, lex, explicit, &mut rng);
                        let pat = lex.patterns[&class].choose(&mut rng).expect("non-empty");
                        let f = Fill {
                            n: rng.gen_range(2..=9),
                            day: rng.gen_range(1..=28),
                            month: rng.gen_range(1..=12),
                            year: rng.gen_range(1990..=2030),
                            weekday: rng.gen_range(0..7),
                            hour: rng.gen_range(0..24),
                            minute: *[0u8, 15, 30, 45].choose(&mut rng).expect("non-empty"),
                        };
                        let start = doc.tokens.len();
                        doc.tokens.extend(fill(&pat.surface, lex, &f).split(' ').map(str::to_string));
                        doc.annotations.push(TimexAnnotation::new(start, doc.tokens.len(), pat.ttype, fill(&pat.cir, lex, &f)));
                    }
                    "{S}" => push_words(&mut doc, fr.subjects.choose(&mut rng)),
                    "{V}" => push_words(&mut doc, fr.verbs.choose(&mut rng)),
                    "{O}" => push_words(&mut doc, fr.objects.choose(&mut rng)),
                    w => doc.tokens.push(w.to_string()),
                }
            }
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn push_words(doc: &mut Document, phrase: Option<&String>) {
    if let Some(p) = phrase.filter(|p| !p.is_empty()) {
        doc.tokens.extend(p.split(' ').map(str::to_string));
    }
}

fn style_name(style: Style) -> &'static str {
    match style {
        Style::News => "news",
        Style::Narrative => "narrative",
    }
}

/// Fraction of annotations whose CIR is explicit.
pub fn explicit_share(docs: &[Document]) -> f64 {
    let mut total = 0usize;
    let mut explicit = 0usize;
    for a in docs.iter().flat_map(|d| &d.annotations) {
        total += 1;
        if crate::slots::classify(&a.value).is_some_and(CirClass::is_explicit) {
            explicit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        explicit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{anchor, date_of_value, AnchorContext};
    use crate::slots::{decode_slots, encode_cir};

    fn by_lang(docs: &[Document], code: &str) -> Vec<Document> {
        docs.iter().filter(|d| d.lang.as_deref() == Some(code)).cloned().collect()
    }

    #[test]
    fn presets_are_hit() {
        let g = SyntheticGrammar::builtin(2);
        let news = generate(&g, Style::News, 1000, 1).unwrap();
        let narr = generate(&g, Style::Narrative, 1000, 1).unwrap();
        assert!((explicit_share(&by_lang(&news, "de")) - 0.671).abs() < 0.02);
        assert!((1.0 - explicit_share(&by_lang(&narr, "en")) - 0.558).abs() < 0.02);
    }

    #[test]
    fn single_document() {
        let docs = generate(&SyntheticGrammar::builtin(1), Style::News, 1, 4).unwrap();
        assert_eq!(docs.len(), 1);
        docs[0].validate().unwrap();
        assert!(docs[0].dct.is_some());
        assert!(!docs[0].annotations.is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let g = SyntheticGrammar::builtin(3);
        assert_eq!(generate(&g, Style::News, 20, 9).unwrap(), generate(&g, Style::News, 20, 9).unwrap());
        assert_ne!(generate(&g, Style::News, 20, 9).unwrap(), generate(&g, Style::News, 20, 10).unwrap());
    }

    #[test]
    fn every_cir_round_trips_and_anchors() {
        for langs in [2, 3] {
            let g = SyntheticGrammar::builtin(langs);
            for style in [Style::News, Style::Narrative] {
                for doc in generate(&g, style, 300, 5).unwrap() {
                    doc.validate().unwrap();
                    let mut ctx = AnchorContext::new(doc.dct.unwrap()).with_tense(doc.tense.unwrap());
                    for a in &doc.annotations {
                        let (s, _) = encode_cir(&a.value).unwrap();
                        assert_eq!(decode_slots(&s).unwrap().value, a.value);
                        let v = anchor(&a.value, &ctx).unwrap_or_else(|e| panic!("{}: {e}", a.value));
                        if let Some(d) = date_of_value(&v) {
                            ctx.previous_dates.push(d);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn empty_grammar_rejected() {
        let g = SyntheticGrammar { languages: Vec::new(), class_weights: [1; 6] };
        assert!(generate(&g, Style::News, 1, 0).is_err());
        let mut one = SyntheticGrammar::builtin(1);
        one.languages[0].frames.clear();
        assert!(generate(&one, Style::News, 1, 0).is_err());
        assert!(generate(&SyntheticGrammar::builtin(1), Style::News, 0, 0).is_err());
    }

    #[test]
    fn styles_are_distinguishable() {
        let g = SyntheticGrammar::builtin(2);
        let count = |docs: &[Document]| {
            let n = docs.iter().map(|d| d.annotations.len()).sum::<usize>() as f64;
            let e = explicit_share(docs) * n;
            (e, n - e)
        };
        let (a, b) = count(&generate(&g, Style::News, 1000, 2).unwrap());
        let (c, d) = count(&generate(&g, Style::Narrative, 1000, 2).unwrap());
        let n = a + b + c + d;
        let chi2 = n * (a * d - b * c).powi(2) / ((a + b) * (c + d) * (a + c) * (b + d));
        assert!(chi2 > 6.635, "chi-square {chi2}");
    }

    #[test]
    fn pseudo_languages_differ() {
        let g = SyntheticGrammar::builtin(4);
        assert_ne!(g.languages[2].months, g.languages[3].months);
        assert_ne!(g.languages[2].months, g.languages[1].months);
        assert_eq!(pseudo_word("2021", 2), "2021");
    }
}
