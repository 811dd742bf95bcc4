//! Fixed-length slot representation of context-independent values (CIRs).
//!
//! Every CIR is split by one of six whole-string grammars into eleven slots
//! (`SB`, `SD1`..`SD4`, `ST1`..`ST3`, `SA1`..`SA3`). Separators, `UNDEF`,
//! `REF` and `T` are implied by the grammar and restored on decode, so for
//! every accepted CIR `decode_slots(encode_cir(c)) == c`.
//!
//! Grammars are tried in priority order: references, durations, function
//! dates, relative dates, coarse relative dates, explicit dates. Explicit
//! dates come last because that grammar accepts bare digit strings.

use std::fmt;

use once_cell::sync::Lazy;
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const SLOT_COUNT: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotName {
    SB,
    SD1,
    SD2,
    SD3,
    SD4,
    ST1,
    ST2,
    ST3,
    SA1,
    SA2,
    SA3,
}

impl SlotName {
    pub const ALL: [SlotName; SLOT_COUNT] = [
        SlotName::SB,
        SlotName::SD1,
        SlotName::SD2,
        SlotName::SD3,
        SlotName::SD4,
        SlotName::ST1,
        SlotName::ST2,
        SlotName::ST3,
        SlotName::SA1,
        SlotName::SA2,
        SlotName::SA3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SlotName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CirClass {
    /// `PRESENT_REF`, `PAST_REF`, `FUTURE_REF`.
    Reference,
    /// Fully specified dates and times such as `2022-03-15TMO` or `BC1000`.
    ExplicitDate,
    /// `P1D12H`, `PT3H`.
    Duration,
    /// `UNDEF-this-day-PLUS-2`, `UNDEF-last-monday`.
    RelativeDate,
    /// `UNDEF-year-05`: missing year (or decade/century) information.
    CoarseRelative,
    /// Moveable feasts and weekday functions, `... funcDateCalc(EasterSunday(YEAR, 49))`.
    FunctionDate,
}

impl CirClass {
    pub const ALL: [CirClass; 6] = [
        CirClass::Reference,
        CirClass::ExplicitDate,
        CirClass::Duration,
        CirClass::RelativeDate,
        CirClass::CoarseRelative,
        CirClass::FunctionDate,
    ];

    /// Values of these classes need no anchoring.
    pub fn is_explicit(self) -> bool {
        matches!(self, CirClass::Reference | CirClass::ExplicitDate | CirClass::Duration)
    }
}

/// Eleven slot tokens; unused slots hold [`PAD`].
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotSequence(Vec<String>);

impl Default for SlotSequence {
    fn default() -> Self {
        SlotSequence(vec![PAD.to_string(); SLOT_COUNT])
    }
}

impl fmt::Debug for SlotSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let filled: Vec<String> = SlotName::ALL
            .iter()
            .filter_map(|s| self.get(*s).map(|t| format!("{s}={t}")))
            .collect();
        write!(f, "SlotSequence[{}]", filled.join(", "))
    }
}

impl SlotSequence {
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let v: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if v.len() != SLOT_COUNT {
            return Err(Error::Data(format!("slot sequence needs {SLOT_COUNT} tokens, got {}", v.len())));
        }
        Ok(SlotSequence(v))
    }

    /// Slot contents, `None` for PAD.
    pub fn get(&self, slot: SlotName) -> Option<&str> {
        let t = self.0[slot.index()].as_str();
        (t != PAD).then_some(t)
    }

    pub fn set(&mut self, slot: SlotName, token: impl Into<String>) {
        self.0[slot.index()] = token.into();
    }

    fn set_opt(&mut self, slot: SlotName, token: Option<&str>) {
        if let Some(t) = token {
            self.set(slot, t);
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|t| t == PAD)
    }
}

pub(crate) mod lexicon {
    pub const UNITS: &[&str] = &["H", "D", "DE", "DT", "M", "C", "Y", "CE", "W", "WE", "Qu", "Q", "S"];
    pub const UNITS_F: &[&str] = &[
        "day", "month", "year", "decade", "century", "week", "weekend", "quarter", "hour", "minute", "second",
    ];
    pub const DAYTIME: &[&str] = &["NI", "AF", "MO", "EV", "MD", "MI"];
    pub const SPECIAL: &[&str] = &["SP", "SU", "FA", "AU", "WI", "H1", "H2", "Q1", "Q2", "Q3", "Q4", "H", "Q"];
    pub const NAMES: &[&str] = &[
        "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "january", "february",
        "march", "april", "may", "june", "july", "august", "september", "october", "november", "december",
    ];
    pub const RELATIONAL: &[&str] = &[
        "this", "next", "last", "year", "decade", "century", "REF", "REFUNIT", "REFDATE", "PRESENT", "PAST",
        "FUTURE",
    ];
    pub const OPERATORS: &[&str] = &["PLUS", "MINUS", "LESS", "P", "PT", "BC", "X", "XX"];
    pub const FUNCTIONS: &[&str] = &["EasterSunday", "EasterSundayOrthodox", "ShroveTideOrthodox", "WeekdayRelativeTo"];
    /// Literal fragments the grammars capture that fall outside the classes above.
    pub const LITERALS: &[&str] = &["true", "false", "."];
}

/// Alternation with longer alternatives first.
fn alt(items: &[&str]) -> String {
    let mut v: Vec<&str> = items.to_vec();
    v.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    format!("(?:{})", v.join("|"))
}

struct Grammars {
    reference: Regex,
    duration: Regex,
    function: Regex,
    relative: Regex,
    coarse: Regex,
    explicit: Regex,
}

static GRAMMARS: Lazy<Grammars> = Lazy::new(|| {
    use lexicon::*;
    let units = alt(UNITS);
    let units_f = alt(UNITS_F);
    let daytime = alt(DAYTIME);
    let special = alt(SPECIAL);
    let names = alt(NAMES);
    let functions = alt(FUNCTIONS);
    let compile = |p: String| Regex::new(&format!("^(?:{p})$")).expect("slot grammar compiles");

    Grammars {
        reference: compile("(?P<sd1>PRESENT|PAST|FUTURE)_REF".into()),
        duration: compile(format!(
            r"(?P<sb>PT|P)(?P<sd1>\d\d?|XX|X)(?P<sd2>\d\d|\.)?(?P<sd3>\d\d?)?(?P<sd4>{units})?(?P<st1>\d\d?)?(?P<st2>{units})?"
        )),
        function: compile(format!(
            concat!(
                r"(?:UNDEF-(?P<year>year)|UNDEF-(?P<this>this)-year|UNDEF-(?P<century>century)(?P<cc>\d\d)|(?P<y1>\d\d)(?P<y2>\d\d))",
                r"-(?P<sd2>\d\d)-00 funcDateCalc\((?P<sb>{functions})\(YEAR",
                r"(?:-(?P<sd3>\d\d))?(?:-(?P<sd4>\d\d))?",
                r"(?:, (?P<neg1>-)?(?P<sa1>\d\d?))?(?:, (?P<neg2>-)?(?P<sa2>\d\d?))?",
                r"(?:, (?P<sa3>true|false))?\)\)"
            ),
            functions = functions
        )),
        relative: compile(format!(
            concat!(
                r"UNDEF-(?P<sd1>{rel})(?:-(?P<sd2>{units_f}|{special}))?",
                r"(?:-(?P<sd3>{names}|{special}|XX|\d\d?))?(?:-(?P<sd4>\d\d?|XX))?",
                r"(?:-(?P<sb>PLUS|MINUS|LESS)-(?P<sa1>\d\d?)(?P<sa2>\d\d)?)?",
                r"(?:T(?P<st1>\d\d?|XX|X|{daytime})(?::(?P<st2>\d\d?|XX))?(?::(?P<st3>\d\d|XX))?)?"
            ),
            rel = alt(&["this", "next", "last", "REF", "REFUNIT", "REFDATE"]),
            units_f = units_f,
            special = special,
            names = names,
            daytime = daytime
        )),
        coarse: compile(format!(
            concat!(
                r"UNDEF-(?P<sd1>year|decade|century)",
                r"(?:-(?P<c1>\d\d?|X|{special}))?(?:-(?P<c2>\d\d?|X))?(?:-(?P<c3>\d\d?|X|{special}))?",
                r"(?:T(?P<st1>\d\d?|X|{daytime})(?::(?P<st2>\d\d?|XX))?(?::(?P<st3>\d\d|XX))?)?"
            ),
            special = special,
            daytime = daytime
        )),
        explicit: compile(format!(
            concat!(
                r"(?P<sb>BC)?(?P<sd1>\d\d?|XX)?(?P<sd2>\d\d|XX)?",
                r"(?:-(?P<week>W)?(?P<sd3>\d\d?|XX|{special}))?(?:-(?P<sd4>\d\d?|XX|WE))?",
                r"(?:T(?P<st1>\d\d|XX|X|{daytime})(?::(?P<st2>\d\d))?(?::(?P<st3>\d\d))?)?"
            ),
            special = special,
            daytime = daytime
        )),
    }
});

fn group<'t>(caps: &'t Captures<'_>, name: &str) -> Option<&'t str> {
    caps.name(name).map(|m| m.as_str())
}

/// Splits a CIR into its slot sequence and grammar class.
pub fn encode_cir(cir: &str) -> Result<(SlotSequence, CirClass)> {
    use SlotName::*;
    let g = &*GRAMMARS;
    let unencodable = || Error::UnencodableCir(cir.to_string());
    let mut s = SlotSequence::default();

    let class = if let Some(c) = g.reference.captures(cir) {
        s.set_opt(SD1, group(&c, "sd1"));
        CirClass::Reference
    } else if let Some(c) = g.duration.captures(cir) {
        for (slot, name) in [(SB, "sb"), (SD1, "sd1"), (SD2, "sd2"), (SD3, "sd3"), (SD4, "sd4"), (ST1, "st1"), (ST2, "st2")] {
            s.set_opt(slot, group(&c, name));
        }
        CirClass::Duration
    } else if let Some(c) = g.function.captures(cir) {
        s.set_opt(SB, group(&c, "sb"));
        if group(&c, "year").is_some() {
            s.set(SD1, "year");
        } else if group(&c, "this").is_some() {
            s.set(SD1, "this");
        } else if group(&c, "century").is_some() {
            s.set(SD1, "century");
            s.set_opt(ST1, group(&c, "cc"));
        } else {
            s.set_opt(SD1, group(&c, "y1"));
            s.set_opt(ST1, group(&c, "y2"));
        }
        s.set_opt(SD2, group(&c, "sd2"));
        s.set_opt(SD3, group(&c, "sd3"));
        s.set_opt(SD4, group(&c, "sd4"));
        s.set_opt(ST2, group(&c, "neg1").map(|_| "MINUS"));
        s.set_opt(ST3, group(&c, "neg2").map(|_| "MINUS"));
        s.set_opt(SA1, group(&c, "sa1"));
        s.set_opt(SA2, group(&c, "sa2"));
        s.set_opt(SA3, group(&c, "sa3"));
        CirClass::FunctionDate
    } else if let Some(c) = g.relative.captures(cir) {
        for (slot, name) in [
            (SB, "sb"),
            (SD1, "sd1"),
            (SD2, "sd2"),
            (SD3, "sd3"),
            (SD4, "sd4"),
            (ST1, "st1"),
            (ST2, "st2"),
            (ST3, "st3"),
            (SA1, "sa1"),
            (SA2, "sa2"),
        ] {
            s.set_opt(slot, group(&c, name));
        }
        CirClass::RelativeDate
    } else if let Some(c) = g.coarse.captures(cir) {
        s.set_opt(SD1, group(&c, "sd1"));
        let comps: Vec<&str> = ["c1", "c2", "c3"].iter().filter_map(|n| group(&c, n)).collect();
        // One component (a month) sits in SD2; a month-day pair in SD3/SD4.
        let targets: &[SlotName] = match comps.len() {
            0 => &[],
            1 => &[SD2],
            2 => &[SD3, SD4],
            _ => &[SD2, SD3, SD4],
        };
        for (slot, tok) in targets.iter().zip(comps) {
            s.set(*slot, tok);
        }
        for (slot, name) in [(ST1, "st1"), (ST2, "st2"), (ST3, "st3")] {
            s.set_opt(slot, group(&c, name));
        }
        CirClass::CoarseRelative
    } else if let Some(c) = g.explicit.captures(cir) {
        for (slot, name) in [(SB, "sb"), (SD1, "sd1"), (SD2, "sd2"), (SD3, "sd3"), (SD4, "sd4"), (ST1, "st1"), (ST2, "st2")] {
            s.set_opt(slot, group(&c, name));
        }
        match (group(&c, "week"), group(&c, "st3")) {
            (Some(_), Some(_)) => return Err(unencodable()),
            (Some(w), None) => s.set(ST3, w),
            (None, sec) => s.set_opt(ST3, sec),
        }
        CirClass::ExplicitDate
    } else {
        return Err(unencodable());
    };

    if s.is_empty() {
        return Err(unencodable());
    }
    Ok((s, class))
}

/// Grammar class implied by which slots are filled.
pub fn infer_class(slots: &SlotSequence) -> CirClass {
    use SlotName::*;
    let sb = slots.get(SB);
    let sd1 = slots.get(SD1);
    if matches!(sb, Some("P" | "PT")) {
        CirClass::Duration
    } else if matches!(sd1, Some("PRESENT" | "PAST" | "FUTURE")) {
        CirClass::Reference
    } else if sb.is_some_and(|t| lexicon::FUNCTIONS.contains(&t)) {
        CirClass::FunctionDate
    } else if matches!(sd1, Some("this" | "next" | "last" | "REF" | "REFUNIT" | "REFDATE")) {
        CirClass::RelativeDate
    } else if matches!(sd1, Some("year" | "decade" | "century")) {
        CirClass::CoarseRelative
    } else {
        CirClass::ExplicitDate
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedCir {
    pub value: String,
    pub class: CirClass,
    /// False when the slots are not the encoding of any CIR; `value` is
    /// then a best-effort reconstruction.
    pub canonical: bool,
}

fn time_part(out: &mut String, slots: &SlotSequence) {
    use SlotName::*;
    let (st1, st2, st3) = (slots.get(ST1), slots.get(ST2), slots.get(ST3));
    if st1.is_none() && st2.is_none() && st3.is_none() {
        return;
    }
    out.push('T');
    out.push_str(st1.unwrap_or_default());
    for t in [st2, st3].into_iter().flatten() {
        out.push(':');
        out.push_str(t);
    }
}

/// Rebuilds the CIR string from its slots.
pub fn decode_slots(slots: &SlotSequence) -> Result<DecodedCir> {
    use SlotName::*;
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    let get = |s: SlotName| slots.get(s).unwrap_or_default();
    let class = infer_class(slots);
    let mut out = String::new();
    match class {
        CirClass::Reference => {
            out.push_str(get(SD1));
            out.push_str("_REF");
        }
        CirClass::Duration => {
            for s in [SB, SD1, SD2, SD3, SD4, ST1, ST2] {
                out.push_str(get(s));
            }
        }
        CirClass::FunctionDate => {
            match slots.get(SD1) {
                Some("year") => out.push_str("UNDEF-year"),
                Some("this") => out.push_str("UNDEF-this-year"),
                Some("century") => {
                    out.push_str("UNDEF-century");
                    out.push_str(get(ST1));
                }
                other => {
                    out.push_str(other.unwrap_or_default());
                    out.push_str(get(ST1));
                }
            }
            out.push('-');
            out.push_str(slots.get(SD2).unwrap_or("00"));
            out.push_str("-00 funcDateCalc(");
            out.push_str(get(SB));
            out.push_str("(YEAR");
            for s in [SD3, SD4] {
                if let Some(t) = slots.get(s) {
                    out.push('-');
                    out.push_str(t);
                }
            }
            for (sign, arg) in [(ST2, SA1), (ST3, SA2)] {
                if let Some(a) = slots.get(arg) {
                    out.push_str(", ");
                    if slots.get(sign).is_some() {
                        out.push('-');
                    }
                    out.push_str(a);
                }
            }
            if let Some(b) = slots.get(SA3) {
                out.push_str(", ");
                out.push_str(b);
            }
            out.push_str("))");
        }
        CirClass::RelativeDate => {
            out.push_str("UNDEF-");
            out.push_str(get(SD1));
            for s in [SD2, SD3, SD4] {
                if let Some(t) = slots.get(s) {
                    out.push('-');
                    out.push_str(t);
                }
            }
            if slots.get(SB).is_some() || slots.get(SA1).is_some() || slots.get(SA2).is_some() {
                out.push('-');
                out.push_str(slots.get(SB).unwrap_or("PLUS"));
                out.push('-');
                out.push_str(get(SA1));
                out.push_str(get(SA2));
            }
            time_part(&mut out, slots);
        }
        CirClass::CoarseRelative => {
            out.push_str("UNDEF-");
            out.push_str(get(SD1));
            for s in [SD2, SD3, SD4] {
                if let Some(t) = slots.get(s) {
                    out.push('-');
                    out.push_str(t);
                }
            }
            time_part(&mut out, slots);
        }
        CirClass::ExplicitDate => {
            out.push_str(get(SB));
            out.push_str(get(SD1));
            out.push_str(get(SD2));
            let week = slots.get(ST3) == Some("W");
            if let Some(t) = slots.get(SD3) {
                out.push('-');
                if week {
                    out.push('W');
                }
                out.push_str(t);
            }
            if let Some(t) = slots.get(SD4) {
                out.push('-');
                out.push_str(t);
            }
            let (st1, st2) = (slots.get(ST1), slots.get(ST2));
            let st3 = slots.get(ST3).filter(|t| *t != "W");
            if st1.is_some() || st2.is_some() || st3.is_some() {
                out.push('T');
                out.push_str(st1.unwrap_or_default());
                for t in [st2, st3].into_iter().flatten() {
                    out.push(':');
                    out.push_str(t);
                }
            }
        }
    }
    let canonical = matches!(encode_cir(&out), Ok((ref re, c)) if re == slots && c == class);
    Ok(DecodedCir { value: out, class, canonical })
}

/// Which grammar accepts `cir`, if any.
pub fn classify(cir: &str) -> Option<CirClass> {
    encode_cir(cir).ok().map(|(_, c)| c)
}
