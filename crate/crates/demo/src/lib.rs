//! WebAssembly bindings for the demo page: CIR encoding, anchoring and
//! Easter dates. Results are returned as JSON strings.

use serde_json::json;
use tempnorm::anchor::{anchor_with, AnchorContext, AnchorOptions, TenseHint};
use tempnorm::calendar::{easter_sunday, CalendarDate, EasterVariant};
use tempnorm::slots::{decode_slots, encode_cir, SlotName};
use wasm_bindgen::prelude::*;

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `{"class", "slots": [{"name", "token"}], "decoded"}` for a CIR.
#[wasm_bindgen]
pub fn encode(cir: &str) -> Result<String, JsError> {
    let (slots, class) = encode_cir(cir.trim()).map_err(fail)?;
    let decoded = decode_slots(&slots).map_err(fail)?.value;
    let rows: Vec<_> = SlotName::ALL
        .iter()
        .map(|s| json!({ "name": s.to_string(), "token": slots.get(*s) }))
        .collect();
    Ok(json!({ "class": format!("{class:?}"), "slots": rows, "decoded": decoded }).to_string())
}

/// Anchored TimeML value of `cir` for a `YYYY-MM-DD` reference date.
#[wasm_bindgen]
pub fn anchor(cir: &str, dct: &str, tense: &str, shrove_offset: i32) -> Result<String, JsError> {
    let dct: CalendarDate = dct.trim().parse().map_err(fail)?;
    let tense: TenseHint = tense.parse().map_err(fail)?;
    let opts = AnchorOptions { shrove_tide_offset: i64::from(shrove_offset) };
    anchor_with(cir.trim(), &AnchorContext::new(dct).with_tense(tense), &opts).map_err(fail)
}

/// `{"western", "orthodox"}` Easter Sundays of `year`.
#[wasm_bindgen]
pub fn easter(year: i32) -> Result<String, JsError> {
    let w = easter_sunday(year, EasterVariant::Gregorian).map_err(fail)?;
    let o = easter_sunday(year, EasterVariant::Orthodox).map_err(fail)?;
    Ok(json!({ "western": w.iso_string(), "orthodox": o.iso_string() }).to_string())
}
