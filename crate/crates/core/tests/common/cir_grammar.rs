//! Independent CIR string generator used as a round-trip oracle.
//!
//! Each production builds strings directly from the grammar's token
//! classes; none of the codec's regexes or slot tables are used here.

use rand::seq::SliceRandom;
use rand::Rng;

pub const UNITS: &[&str] = &["H", "D", "DE", "DT", "M", "C", "Y", "CE", "W", "WE", "Qu", "Q", "S"];
pub const UNITS_F: &[&str] = &[
    "day", "month", "year", "decade", "century", "week", "weekend", "quarter", "hour", "minute", "second",
];
pub const DAYTIME: &[&str] = &["NI", "AF", "MO", "EV", "MD", "MI"];
pub const SPECIAL: &[&str] = &["SP", "SU", "FA", "AU", "WI", "H1", "H2", "Q1", "Q2", "Q3", "Q4", "H", "Q"];
pub const NAMES: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "january", "february", "march",
    "april", "may", "june", "july", "august", "september", "october", "november", "december",
];
pub const FUNCTIONS: &[&str] = &["WeekdayRelativeTo", "EasterSundayOrthodox", "EasterSunday", "ShroveTideOrthodox"];

/// Expected class name, matching `CirClass`'s Debug output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Production {
    Reference,
    ExplicitDate,
    Duration,
    RelativeDate,
    CoarseRelative,
    FunctionDate,
}

pub const ALL: [Production; 6] = [
    Production::Reference,
    Production::ExplicitDate,
    Production::Duration,
    Production::RelativeDate,
    Production::CoarseRelative,
    Production::FunctionDate,
];

fn pick<R: Rng>(rng: &mut R, xs: &[&str]) -> String {
    xs.choose(rng).unwrap().to_string()
}

fn digits<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
}

/// `\d\d?`
fn d12<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=2);
    digits(rng, n)
}

fn one_of<R: Rng>(rng: &mut R, options: &[&dyn Fn(&mut R) -> String]) -> String {
    let i = rng.gen_range(0..options.len());
    options[i](rng)
}

pub fn reference<R: Rng>(rng: &mut R) -> String {
    format!("{}_REF", pick(rng, &["PRESENT", "PAST", "FUTURE"]))
}

pub fn duration<R: Rng>(rng: &mut R) -> String {
    let mut s = pick(rng, &["P", "PT"]);
    let number = match rng.gen_range(0..4) {
        0 => pick(rng, &["X", "XX"]),
        1 => format!("{}.{}", d12(rng), d12(rng)),
        _ => {
            let n = rng.gen_range(1..=6);
            digits(rng, n)
        }
    };
    s.push_str(&number);
    if rng.gen_bool(0.85) {
        s.push_str(&pick(rng, UNITS));
        if rng.gen_bool(0.3) {
            s.push_str(&d12(rng));
            if rng.gen_bool(0.8) {
                s.push_str(&pick(rng, UNITS));
            }
        }
    }
    s
}

fn time_suffix<R: Rng>(rng: &mut R, hour: &dyn Fn(&mut R) -> String, minute: &dyn Fn(&mut R) -> String, second: &dyn Fn(&mut R) -> String) -> String {
    let mut s = format!("T{}", hour(rng));
    if rng.gen_bool(0.5) {
        s.push(':');
        s.push_str(&minute(rng));
        if rng.gen_bool(0.4) {
            s.push(':');
            s.push_str(&second(rng));
        }
    }
    s
}

pub fn explicit_date<R: Rng>(rng: &mut R) -> String {
    loop {
        let mut s = String::new();
        let mut week = false;
        let mut seconds = false;
        if rng.gen_bool(0.1) {
            s.push_str("BC");
        }
        if rng.gen_bool(0.85) {
            s.push_str(&one_of(rng, &[&|r: &mut R| d12(r), &|_| "XX".into()]));
            if rng.gen_bool(0.8) {
                s.push_str(&one_of(rng, &[&|r: &mut R| digits(r, 2), &|_| "XX".into()]));
            }
        }
        if rng.gen_bool(0.6) {
            s.push('-');
            if rng.gen_bool(0.15) {
                s.push('W');
                week = true;
            }
            s.push_str(&one_of(rng, &[&|r: &mut R| d12(r), &|_| "XX".into(), &|r: &mut R| pick(r, SPECIAL)]));
        }
        if rng.gen_bool(0.5) {
            s.push('-');
            s.push_str(&one_of(rng, &[&|r: &mut R| d12(r), &|_| "XX".into(), &|_| "WE".into()]));
        }
        if rng.gen_bool(0.3) {
            let t = format!(
                "T{}",
                one_of(rng, &[&|r: &mut R| digits(r, 2), &|_| "X".into(), &|r: &mut R| pick(r, DAYTIME), &|_| "XX".into()])
            );
            s.push_str(&t);
            if rng.gen_bool(0.5) {
                s.push(':');
                s.push_str(&digits(rng, 2));
                if rng.gen_bool(0.4) {
                    s.push(':');
                    s.push_str(&digits(rng, 2));
                    seconds = true;
                }
            }
        }
        // The week marker and seconds share a slot; such values are outside
        // the encodable language.
        if !s.is_empty() && !(week && seconds) {
            return s;
        }
    }
}

pub fn relative_date<R: Rng>(rng: &mut R) -> String {
    let mut s = format!("UNDEF-{}", pick(rng, &["this", "next", "last", "REF", "REFUNIT", "REFDATE"]));
    if rng.gen_bool(0.8) {
        s.push('-');
        s.push_str(&one_of(rng, &[&|r: &mut R| pick(r, UNITS_F), &|r: &mut R| pick(r, SPECIAL)]));
    }
    if rng.gen_bool(0.35) {
        s.push('-');
        s.push_str(&one_of(
            rng,
            &[&|r: &mut R| pick(r, NAMES), &|r: &mut R| pick(r, SPECIAL), &|_| "XX".into(), &|r: &mut R| d12(r)],
        ));
    }
    if rng.gen_bool(0.2) {
        s.push('-');
        s.push_str(&one_of(rng, &[&|r: &mut R| d12(r), &|_| "XX".into()]));
    }
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(1..=4);
        s.push_str(&format!("-{}-{}", pick(rng, &["PLUS", "MINUS", "LESS"]), digits(rng, n)));
    }
    if rng.gen_bool(0.25) {
        s.push_str(&time_suffix(
            rng,
            &|r: &mut R| one_of(r, &[&|r: &mut R| d12(r), &|_| "X".into(), &|r: &mut R| pick(r, DAYTIME), &|_| "XX".into()]),
            &|r: &mut R| one_of(r, &[&|r: &mut R| d12(r), &|_| "XX".into()]),
            &|r: &mut R| one_of(r, &[&|r: &mut R| digits(r, 2), &|_| "XX".into()]),
        ));
    }
    s
}

pub fn coarse_relative<R: Rng>(rng: &mut R) -> String {
    let mut s = format!("UNDEF-{}", pick(rng, &["year", "decade", "century"]));
    let comp = |r: &mut R, special: bool| -> String {
        if special && r.gen_bool(0.3) {
            pick(r, SPECIAL)
        } else if r.gen_bool(0.1) {
            "X".into()
        } else {
            d12(r)
        }
    };
    if rng.gen_bool(0.7) {
        s.push_str(&format!("-{}", comp(rng, true)));
    }
    if rng.gen_bool(0.5) {
        s.push_str(&format!("-{}", comp(rng, false)));
    }
    if rng.gen_bool(0.3) {
        s.push_str(&format!("-{}", comp(rng, true)));
    }
    if rng.gen_bool(0.2) {
        s.push_str(&time_suffix(
            rng,
            &|r: &mut R| one_of(r, &[&|r: &mut R| d12(r), &|_| "X".into(), &|r: &mut R| pick(r, DAYTIME)]),
            &|r: &mut R| one_of(r, &[&|r: &mut R| d12(r), &|_| "XX".into()]),
            &|r: &mut R| one_of(r, &[&|r: &mut R| digits(r, 2), &|_| "XX".into()]),
        ));
    }
    s
}

pub fn function_date<R: Rng>(rng: &mut R) -> String {
    let prefix = match rng.gen_range(0..4) {
        0 => "UNDEF-year".to_string(),
        1 => "UNDEF-this-year".to_string(),
        2 => format!("UNDEF-century{}", digits(rng, 2)),
        _ => digits(rng, 4),
    };
    let mut s = format!("{prefix}-{}-00 funcDateCalc({}(YEAR", digits(rng, 2), pick(rng, FUNCTIONS));
    if rng.gen_bool(0.4) {
        s.push_str(&format!("-{}", digits(rng, 2)));
        if rng.gen_bool(0.8) {
            s.push_str(&format!("-{}", digits(rng, 2)));
        }
    }
    let arg = |r: &mut R| format!(", {}{}", if r.gen_bool(0.3) { "-" } else { "" }, d12(r));
    if rng.gen_bool(0.8) {
        s.push_str(&arg(rng));
        if rng.gen_bool(0.4) {
            s.push_str(&arg(rng));
        }
    }
    if rng.gen_bool(0.3) {
        s.push_str(&format!(", {}", pick(rng, &["true", "false"])));
    }
    s.push_str("))");
    s
}

pub fn sample<R: Rng>(rng: &mut R, production: Production) -> String {
    match production {
        Production::Reference => reference(rng),
        Production::ExplicitDate => explicit_date(rng),
        Production::Duration => duration(rng),
        Production::RelativeDate => relative_date(rng),
        Production::CoarseRelative => coarse_relative(rng),
        Production::FunctionDate => function_date(rng),
    }
}
