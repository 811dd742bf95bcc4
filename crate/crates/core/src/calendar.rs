//! Proleptic Gregorian calendar arithmetic.
//!
//! Dates are converted to a day count relative to 1970-01-01 for all
//! offset computations, so adding and subtracting days are exact inverses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Smallest year accepted by date arithmetic.
pub const MIN_YEAR: i32 = 1;
/// Largest year accepted by date arithmetic (TimeML years have four digits).
pub const MAX_YEAR: i32 = 9999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
        Weekday::Sunday,
    ];

    /// ISO-8601 number, Monday = 1 through Sunday = 7.
    pub fn iso_number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_iso_number(n: u8) -> Option<Weekday> {
        Weekday::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    /// Numbering used by `WeekdayRelativeTo`: Sunday = 1 through Saturday = 7.
    pub fn from_sunday_based(n: i64) -> Option<Weekday> {
        match n {
            1 => Some(Weekday::Sunday),
            2..=7 => Weekday::from_iso_number((n - 1) as u8),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Weekday::Monday => "monday",
            Weekday::Tuesday => "tuesday",
            Weekday::Wednesday => "wednesday",
            Weekday::Thursday => "thursday",
            Weekday::Friday => "friday",
            Weekday::Saturday => "saturday",
            Weekday::Sunday => "sunday",
        }
    }

    pub fn from_name(name: &str) -> Option<Weekday> {
        Weekday::ALL.iter().copied().find(|w| w.name() == name)
    }
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

/// Days since 1970-01-01 of a proleptic Gregorian civil date.
pub fn days_from_civil(year: i32, month: u8, day: u8) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(month);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of [`days_from_civil`].
pub fn civil_from_days(days: i64) -> (i32, u8, u8) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
    let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
    (year, month, day)
}

/// A calendar date with optional time of day.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CalendarDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    pub hour: Option<u8>,
    pub minute: Option<u8>,
    pub second: Option<u8>,
}

impl CalendarDate {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self> {
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(Error::DateOutOfRange(format!("year {year}")));
        }
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(Error::InvalidDate(format!("{year:04}-{month:02}-{day:02}")));
        }
        Ok(CalendarDate { year, month, day, hour: None, minute: None, second: None })
    }

    pub fn with_time(mut self, hour: u8, minute: Option<u8>, second: Option<u8>) -> Result<Self> {
        if hour > 24 || minute.is_some_and(|m| m > 59) || second.is_some_and(|s| s > 60) {
            return Err(Error::InvalidDate(format!("time {hour}:{minute:?}:{second:?}")));
        }
        self.hour = Some(hour);
        self.minute = minute;
        self.second = second;
        Ok(self)
    }

    pub fn day_number(&self) -> i64 {
        days_from_civil(self.year, self.month, self.day)
    }

    /// Date from a day count; fails outside years 1..=9999.
    pub fn from_day_number(days: i64) -> Result<Self> {
        let (y, m, d) = civil_from_days(days);
        CalendarDate::new(y, m, d)
    }

    pub fn weekday(&self) -> Weekday {
        // 1970-01-01 was a Thursday.
        let idx = (self.day_number() + 3).rem_euclid(7);
        Weekday::ALL[idx as usize]
    }

    /// Date only, time dropped.
    pub fn date_only(&self) -> Self {
        CalendarDate { hour: None, minute: None, second: None, ..*self }
    }

    pub fn add_days(&self, n: i64) -> Result<Self> {
        let mut out = CalendarDate::from_day_number(self.day_number() + n)?;
        out.hour = self.hour;
        out.minute = self.minute;
        out.second = self.second;
        Ok(out)
    }

    /// Calendar month offset; the day is clamped to the target month length.
    pub fn add_months(&self, n: i64) -> Result<Self> {
        let total = i64::from(self.year) * 12 + i64::from(self.month) - 1 + n;
        let year = total.div_euclid(12);
        let month = (total.rem_euclid(12) + 1) as u8;
        if !(i64::from(MIN_YEAR)..=i64::from(MAX_YEAR)).contains(&year) {
            return Err(Error::DateOutOfRange(format!("year {year}")));
        }
        let year = year as i32;
        let day = self.day.min(days_in_month(year, month));
        let mut out = CalendarDate::new(year, month, day)?;
        out.hour = self.hour;
        out.minute = self.minute;
        out.second = self.second;
        Ok(out)
    }

    pub fn add_years(&self, n: i64) -> Result<Self> {
        self.add_months(n * 12)
    }

    /// ISO-8601 week-numbering year and week.
    pub fn iso_week(&self) -> (i32, u8) {
        let wd = i64::from(self.weekday().iso_number());
        let thursday = self.day_number() - wd + 4;
        let (y, _, _) = civil_from_days(thursday);
        let week = (thursday - days_from_civil(y, 1, 1)) / 7 + 1;
        (y, week as u8)
    }

    /// Monday of the given ISO week.
    pub fn from_iso_week(year: i32, week: u8) -> Result<Self> {
        let jan4 = CalendarDate::new(year, 1, 4)?;
        let monday1 = jan4.day_number() - i64::from(jan4.weekday().iso_number()) + 1;
        let out = CalendarDate::from_day_number(monday1 + 7 * (i64::from(week) - 1))?;
        if out.iso_week() != (year, week) {
            return Err(Error::InvalidDate(format!("{year:04}-W{week:02}")));
        }
        Ok(out)
    }

    pub fn iso_string(&self) -> String {
        let mut s = format!("{:04}-{:02}-{:02}", self.year, self.month, self.day);
        if let Some(h) = self.hour {
            s.push_str(&format!("T{h:02}"));
            if let Some(m) = self.minute {
                s.push_str(&format!(":{m:02}"));
                if let Some(sec) = self.second {
                    s.push_str(&format!(":{sec:02}"));
                }
            }
        }
        s
    }
}

impl fmt::Display for CalendarDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.iso_string())
    }
}

impl FromStr for CalendarDate {
    type Err = Error;

    /// Parses `YYYY-MM-DD` with an optional `THH[:MM[:SS]]` suffix.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidDate(s.to_string());
        let (date, time) = match s.split_once('T') {
            Some((d, t)) => (d, Some(t)),
            None => (s, None),
        };
        let mut parts = date.split('-');
        let (Some(y), Some(m), Some(d), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        if y.len() != 4 || m.len() != 2 || d.len() != 2 {
            return Err(bad());
        }
        let num = |t: &str| t.parse::<u32>().map_err(|_| bad());
        let mut out = CalendarDate::new(num(y)? as i32, num(m)? as u8, num(d)? as u8)?;
        if let Some(t) = time {
            let fields: Vec<&str> = t.split(':').collect();
            if fields.is_empty() || fields.len() > 3 || fields.iter().any(|f| f.len() != 2) {
                return Err(bad());
            }
            let hour = num(fields[0])? as u8;
            let minute = fields.get(1).map(|f| num(f)).transpose()?.map(|v| v as u8);
            let second = fields.get(2).map(|f| num(f)).transpose()?.map(|v| v as u8);
            out = out.with_time(hour, minute, second)?;
        }
        Ok(out)
    }
}

impl Serialize for CalendarDate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.iso_string())
    }
}

impl<'de> Deserialize<'de> for CalendarDate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EasterVariant {
    Gregorian,
    Orthodox,
}

/// Date of Easter Sunday, expressed in the Gregorian calendar.
///
/// The Gregorian variant uses the anonymous Gregorian computus and covers
/// 1583..=4099. The Orthodox variant runs the Julian computus and shifts the
/// Julian result onto the Gregorian calendar.
pub fn easter_sunday(year: i32, variant: EasterVariant) -> Result<CalendarDate> {
    match variant {
        EasterVariant::Gregorian => {
            if !(1583..=4099).contains(&year) {
                return Err(Error::DateOutOfRange(format!("Gregorian Easter for year {year}")));
            }
            let a = year % 19;
            let b = year / 100;
            let c = year % 100;
            let d = b / 4;
            let e = b % 4;
            let f = (b + 8) / 25;
            let g = (b - f + 1) / 3;
            let h = (19 * a + b - d - g + 15) % 30;
            let i = c / 4;
            let k = c % 4;
            let l = (32 + 2 * e + 2 * i - h - k) % 7;
            let m = (a + 11 * h + 22 * l) / 451;
            let month = (h + l - 7 * m + 114) / 31;
            let day = (h + l - 7 * m + 114) % 31 + 1;
            CalendarDate::new(year, month as u8, day as u8)
        }
        EasterVariant::Orthodox => {
            if !(1583..=MAX_YEAR).contains(&year) {
                return Err(Error::DateOutOfRange(format!("Orthodox Easter for year {year}")));
            }
            let a = year % 4;
            let b = year % 7;
            let c = year % 19;
            let d = (19 * c + 15) % 30;
            let e = (2 * a + 4 * b - d + 34) % 7;
            let month = (d + e + 114) / 31;
            let day = (d + e + 114) % 31 + 1;
            // Julian calendar date -> Gregorian: the gap grows by one day in
            // every century year that is not divisible by 400.
            let shift = i64::from(year / 100 - year / 400 - 2);
            let julian_as_gregorian = days_from_civil(year, month as u8, day as u8);
            // Julian dates in March/April of `year` never cross a century leap
            // day, so the shift of the same year applies.
            CalendarDate::from_day_number(julian_as_gregorian + shift)
        }
    }
}
