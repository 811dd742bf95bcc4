//! Resolving CIRs to TimeML values against a reference date.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{easter_sunday, CalendarDate, EasterVariant, Weekday};
use crate::error::{Error, Result};
use crate::slots::{classify, encode_cir, lexicon, CirClass, SlotName, SlotSequence};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TenseHint {
    Past,
    Present,
    Future,
    #[default]
    Unknown,
}

impl fmt::Display for TenseHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TenseHint::Past => "past",
            TenseHint::Present => "present",
            TenseHint::Future => "future",
            TenseHint::Unknown => "unknown",
        })
    }
}

impl FromStr for TenseHint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "past" => Ok(TenseHint::Past),
            "present" => Ok(TenseHint::Present),
            "future" => Ok(TenseHint::Future),
            "unknown" => Ok(TenseHint::Unknown),
            other => Err(format!("unknown tense {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorContext {
    pub reference: CalendarDate,
    /// Dates of preceding expressions, most recent last.
    pub previous_dates: Vec<CalendarDate>,
    pub tense: TenseHint,
}

impl AnchorContext {
    pub fn new(reference: CalendarDate) -> Self {
        AnchorContext { reference, previous_dates: Vec::new(), tense: TenseHint::Unknown }
    }

    pub fn with_tense(mut self, tense: TenseHint) -> Self {
        self.tense = tense;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorOptions {
    /// Day offset of `ShroveTideOrthodox` from Orthodox Easter Sunday.
    pub shrove_tide_offset: i64,
}

impl Default for AnchorOptions {
    fn default() -> Self {
        AnchorOptions { shrove_tide_offset: -48 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DateFunction {
    EasterSunday,
    EasterSundayOrthodox,
    ShroveTideOrthodox,
    WeekdayRelativeTo,
}

impl FromStr for DateFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EasterSunday" => Ok(DateFunction::EasterSunday),
            "EasterSundayOrthodox" => Ok(DateFunction::EasterSundayOrthodox),
            "ShroveTideOrthodox" => Ok(DateFunction::ShroveTideOrthodox),
            "WeekdayRelativeTo" => Ok(DateFunction::WeekdayRelativeTo),
            other => Err(Error::UnknownFunction(other.to_string())),
        }
    }
}

/// Arguments following `YEAR` in a `funcDateCalc` call.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunctionArgs {
    /// `YEAR-MM-DD` base date components.
    pub month: Option<u8>,
    pub day: Option<u8>,
    pub numbers: Vec<i64>,
    pub flag: Option<bool>,
}

/// Evaluates a date function for `year`.
///
/// `WeekdayRelativeTo(YEAR-MM-DD, weekday, n, count_itself)` takes the
/// weekday numbered Sunday = 1 through Saturday = 7 and returns its `n`-th
/// occurrence after (n > 0) or before (n < 0) the base date. With
/// `count_itself` the base date counts as an occurrence.
pub fn func_date_calc(func: DateFunction, year: i32, args: &FunctionArgs, opts: &AnchorOptions) -> Result<CalendarDate> {
    let offset = args.numbers.first().copied().unwrap_or(0);
    match func {
        DateFunction::EasterSunday => easter_sunday(year, EasterVariant::Gregorian)?.add_days(offset),
        DateFunction::EasterSundayOrthodox => easter_sunday(year, EasterVariant::Orthodox)?.add_days(offset),
        DateFunction::ShroveTideOrthodox => {
            easter_sunday(year, EasterVariant::Orthodox)?.add_days(opts.shrove_tide_offset + offset)
        }
        DateFunction::WeekdayRelativeTo => {
            let malformed = |why: &str| Error::Data(format!("WeekdayRelativeTo: {why}"));
            let (Some(month), Some(day)) = (args.month, args.day) else {
                return Err(malformed("missing base date"));
            };
            let base = CalendarDate::new(year, month, day)?;
            let weekday = args
                .numbers
                .first()
                .and_then(|n| Weekday::from_sunday_based(*n))
                .ok_or_else(|| malformed("weekday must be 1..=7"))?;
            let n = args.numbers.get(1).copied().unwrap_or(1);
            if n == 0 {
                return Err(malformed("occurrence 0"));
            }
            let count_itself = args.flag.unwrap_or(false);
            let step = n.signum();
            let mut d = if count_itself { base } else { base.add_days(step)? };
            while d.weekday() != weekday {
                d = d.add_days(step)?;
            }
            d.add_days(7 * (n - step))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Granularity {
    Century,
    Decade,
    Year,
    Quarter,
    Month,
    Week,
    Weekend,
    Day,
    Hour,
    Minute,
    Second,
}

impl Granularity {
    fn from_unit(unit: &str) -> Option<Self> {
        Some(match unit {
            "century" => Granularity::Century,
            "decade" => Granularity::Decade,
            "year" => Granularity::Year,
            "quarter" => Granularity::Quarter,
            "month" => Granularity::Month,
            "week" => Granularity::Week,
            "weekend" => Granularity::Weekend,
            "day" => Granularity::Day,
            "hour" => Granularity::Hour,
            "minute" => Granularity::Minute,
            "second" => Granularity::Second,
            _ => return None,
        })
    }

    fn shift(self, d: &CalendarDate, n: i64) -> Result<CalendarDate> {
        match self {
            Granularity::Century => d.add_years(100 * n),
            Granularity::Decade => d.add_years(10 * n),
            Granularity::Year => d.add_years(n),
            Granularity::Quarter => d.add_months(3 * n),
            Granularity::Month => d.add_months(n),
            Granularity::Week | Granularity::Weekend => d.add_days(7 * n),
            Granularity::Day => d.add_days(n),
            Granularity::Hour => shift_seconds(d, 3600 * n),
            Granularity::Minute => shift_seconds(d, 60 * n),
            Granularity::Second => shift_seconds(d, n),
        }
    }

    fn format(self, d: &CalendarDate) -> Result<String> {
        Ok(match self {
            Granularity::Century => format!("{:02}", d.year / 100),
            Granularity::Decade => format!("{:03}", d.year / 10),
            Granularity::Year => format!("{:04}", d.year),
            Granularity::Quarter => format!("{:04}-Q{}", d.year, (d.month - 1) / 3 + 1),
            Granularity::Month => format!("{:04}-{:02}", d.year, d.month),
            Granularity::Week => {
                let (y, w) = d.iso_week();
                format!("{y:04}-W{w:02}")
            }
            Granularity::Weekend => {
                let (y, w) = d.iso_week();
                format!("{y:04}-W{w:02}-WE")
            }
            Granularity::Day => d.date_only().iso_string(),
            Granularity::Hour | Granularity::Minute | Granularity::Second => {
                let (h, m, s) = (d.hour.unwrap_or(0), d.minute.unwrap_or(0), d.second.unwrap_or(0));
                let mut out = format!("{}T{h:02}", d.date_only().iso_string());
                if self != Granularity::Hour {
                    out.push_str(&format!(":{m:02}"));
                }
                if self == Granularity::Second {
                    out.push_str(&format!(":{s:02}"));
                }
                out
            }
        })
    }
}

fn shift_seconds(d: &CalendarDate, secs: i64) -> Result<CalendarDate> {
    let Some(hour) = d.hour else {
        return Err(Error::Data("reference has no time of day".into()));
    };
    let total = d.day_number() * 86_400
        + i64::from(hour) * 3600
        + i64::from(d.minute.unwrap_or(0)) * 60
        + i64::from(d.second.unwrap_or(0))
        + secs;
    let day = CalendarDate::from_day_number(total.div_euclid(86_400))?;
    let rem = total.rem_euclid(86_400);
    day.with_time((rem / 3600) as u8, Some((rem % 3600 / 60) as u8), Some((rem % 60) as u8))
}

fn parse_num(tok: &str) -> Option<i64> {
    tok.parse().ok()
}

fn month_number(tok: &str) -> Option<u8> {
    let idx = lexicon::NAMES.iter().position(|n| *n == tok)?;
    (idx >= 7).then(|| (idx - 6) as u8)
}

/// Year after applying the tense rule for a month `m` relative to the reference.
fn tense_year(ctx: &AnchorContext, m: u8) -> i32 {
    let r = ctx.reference;
    match ctx.tense {
        TenseHint::Past if m > r.month => r.year - 1,
        TenseHint::Future if m < r.month => r.year + 1,
        _ => r.year,
    }
}

fn time_suffix(slots: &SlotSequence) -> Option<String> {
    let st1 = slots.get(SlotName::ST1)?;
    let mut s = format!("T{st1}");
    for t in [slots.get(SlotName::ST2), slots.get(SlotName::ST3)].into_iter().flatten() {
        s.push(':');
        s.push_str(t);
    }
    Some(s)
}

/// Resolves `cir` to a TimeML value with default options.
pub fn anchor(cir: &str, ctx: &AnchorContext) -> Result<String> {
    anchor_with(cir, ctx, &AnchorOptions::default())
}

pub fn anchor_with(cir: &str, ctx: &AnchorContext, opts: &AnchorOptions) -> Result<String> {
    let (slots, class) = encode_cir(cir)?;
    let value = match class {
        CirClass::Reference | CirClass::ExplicitDate | CirClass::Duration => return Ok(cir.to_string()),
        CirClass::FunctionDate => anchor_function(cir, &slots, ctx, opts)?,
        CirClass::CoarseRelative => anchor_coarse(cir, &slots, ctx)?,
        CirClass::RelativeDate => anchor_relative(cir, &slots, ctx)?,
    };
    match classify(&value) {
        Some(c) if c.is_explicit() => Ok(value),
        _ => Err(Error::anchor(cir, format!("result {value:?} is not a fully specified value"))),
    }
}

fn anchor_function(cir: &str, slots: &SlotSequence, ctx: &AnchorContext, opts: &AnchorOptions) -> Result<String> {
    use SlotName::*;
    let func: DateFunction = slots.get(SB).unwrap_or_default().parse()?;
    let sign = |s: SlotName| if slots.get(s).is_some() { -1 } else { 1 };
    let mut args = FunctionArgs {
        month: slots.get(SD3).and_then(parse_num).map(|m| m as u8),
        day: slots.get(SD4).and_then(parse_num).map(|d| d as u8),
        numbers: Vec::new(),
        flag: slots.get(SA3).map(|b| b == "true"),
    };
    for (s, a) in [(ST2, SA1), (ST3, SA2)] {
        if let Some(n) = slots.get(a).and_then(parse_num) {
            args.numbers.push(sign(s) * n);
        }
    }
    let eval = |year: i32| func_date_calc(func, year, &args, opts);
    let date = match slots.get(SD1) {
        Some("year") => {
            let r = ctx.reference.date_only();
            let d = eval(r.year)?;
            match ctx.tense {
                TenseHint::Past if d > r => eval(r.year - 1)?,
                TenseHint::Future if d < r => eval(r.year + 1)?,
                _ => d,
            }
        }
        Some("this") => eval(ctx.reference.year)?,
        Some("century") => return Err(Error::anchor(cir, "century-level function dates have no year")),
        Some(hi) => {
            let lo = slots.get(ST1).unwrap_or_default();
            let year = format!("{hi}{lo}").parse::<i32>().map_err(|_| Error::anchor(cir, "bad year"))?;
            eval(year)?
        }
        None => return Err(Error::anchor(cir, "missing year")),
    };
    Ok(date.iso_string())
}

fn anchor_coarse(cir: &str, slots: &SlotSequence, ctx: &AnchorContext) -> Result<String> {
    use SlotName::*;
    let unsupported = || Error::anchor(cir, "unsupported coarse form");
    let r = ctx.reference;
    let comps: Vec<&str> = [SD2, SD3, SD4].iter().filter_map(|s| slots.get(*s)).collect();
    let time = time_suffix(slots);
    match slots.get(SD1) {
        Some("decade") if comps.is_empty() && time.is_none() => Ok(format!("{:03}", r.year / 10)),
        Some("century") if comps.is_empty() && time.is_none() => Ok(format!("{:02}", r.year / 100)),
        Some("year") => {
            let out = match comps.as_slice() {
                [] => format!("{:04}", r.year),
                [only] => match parse_num(only) {
                    Some(m @ 1..=12) => format!("{:04}-{m:02}", tense_year(ctx, m as u8)),
                    Some(_) => return Err(Error::anchor(cir, "month out of range")),
                    None if lexicon::SPECIAL.contains(only) => format!("{:04}-{only}", r.year),
                    None => return Err(unsupported()),
                },
                [month, day] => {
                    let (Some(m), Some(d)) = (parse_num(month), parse_num(day)) else {
                        return Err(unsupported());
                    };
                    let year = tense_year(ctx, m as u8);
                    CalendarDate::new(year, m as u8, d as u8)?.iso_string()
                }
                _ => return Err(unsupported()),
            };
            match time {
                Some(t) if out.len() == 10 => Ok(out + &t),
                Some(_) => Err(Error::anchor(cir, "time of day on a coarse value")),
                None => Ok(out),
            }
        }
        _ => Err(unsupported()),
    }
}

fn anchor_relative(cir: &str, slots: &SlotSequence, ctx: &AnchorContext) -> Result<String> {
    use SlotName::*;
    let unsupported = || Error::anchor(cir, "unsupported relative form");
    let relation = slots.get(SD1).unwrap_or_default();
    let base = match relation {
        "REF" | "REFUNIT" | "REFDATE" => ctx.previous_dates.last().copied().unwrap_or(ctx.reference),
        _ => ctx.reference,
    };
    let step: i64 = match relation {
        "next" => 1,
        "last" => -1,
        _ => 0,
    };
    let offset: i64 = match slots.get(SB) {
        Some(op) => {
            let digits = format!("{}{}", slots.get(SA1).unwrap_or_default(), slots.get(SA2).unwrap_or_default());
            let n: i64 = digits.parse().map_err(|_| Error::anchor(cir, "missing offset"))?;
            if op == "PLUS" {
                n
            } else {
                -n
            }
        }
        None => 0,
    };

    let (sd2, sd3, sd4) = (slots.get(SD2), slots.get(SD3), slots.get(SD4));
    let (gran, date) = match (sd2, sd3, sd4) {
        (Some(unit), None, None) if Granularity::from_unit(unit).is_some() => {
            let g = Granularity::from_unit(unit).expect("checked");
            (g, g.shift(&g.shift(&base, step)?, offset)?)
        }
        (Some(special), None, None) if lexicon::SPECIAL.contains(&special) => {
            let d = base.add_years(step + offset)?;
            return finish(cir, format!("{:04}-{special}", d.year), None, slots);
        }
        (None, Some(name), None) if Weekday::from_name(name).is_some() => {
            let wd = Weekday::from_name(name).expect("checked");
            let d = match step {
                1 => {
                    let mut d = base.add_days(1)?;
                    while d.weekday() != wd {
                        d = d.add_days(1)?;
                    }
                    d
                }
                -1 => {
                    let mut d = base.add_days(-1)?;
                    while d.weekday() != wd {
                        d = d.add_days(-1)?;
                    }
                    d
                }
                _ => base.add_days(i64::from(wd.iso_number()) - i64::from(base.weekday().iso_number()))?,
            };
            (Granularity::Day, d.add_days(offset)?)
        }
        (None, Some(name), None) if month_number(name).is_some() => {
            let m = month_number(name).expect("checked");
            let year = match step {
                1 if m > base.month => base.year,
                1 => base.year + 1,
                -1 if m < base.month => base.year,
                -1 => base.year - 1,
                _ => base.year,
            };
            let d = CalendarDate::new(year, m, 1)?;
            (Granularity::Month, d.add_months(offset)?)
        }
        (Some("year"), Some(part), day) if offset == 0 => {
            let year = base.add_years(step)?.year;
            let month = parse_num(part).map(|m| m as u8).or_else(|| month_number(part));
            let out = match (month, day) {
                (Some(m), None) if (1..=12).contains(&m) => format!("{year:04}-{m:02}"),
                (Some(m), Some(d)) => {
                    let d = parse_num(d).ok_or_else(unsupported)?;
                    CalendarDate::new(year, m, d as u8)?.iso_string()
                }
                (None, None) if lexicon::SPECIAL.contains(&part) => format!("{year:04}-{part}"),
                _ => return Err(unsupported()),
            };
            let day_level = out.len() == 10;
            return finish(cir, out, Some(day_level), slots);
        }
        _ => return Err(unsupported()),
    };
    let out = gran.format(&date)?;
    finish(cir, out, Some(gran == Granularity::Day), slots)
}

/// Appends the time part when the value is at day granularity.
fn finish(cir: &str, value: String, day_level: Option<bool>, slots: &SlotSequence) -> Result<String> {
    match (time_suffix(slots), day_level) {
        (None, _) => Ok(value),
        (Some(t), Some(true)) => Ok(value + &t),
        (Some(_), _) => Err(Error::anchor(cir, "time of day on a value coarser than a day")),
    }
}

/// Leading `YYYY-MM-DD` of an anchored value, if it has day granularity.
pub fn date_of_value(value: &str) -> Option<CalendarDate> {
    value.get(..10)?.parse().ok()
}
