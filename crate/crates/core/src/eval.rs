//! Strict, relaxed, type and value scoring of predicted annotations.
//!
//! Relaxed matching is one-to-one: gold spans are visited in order and each
//! takes the earliest-starting unmatched overlapping prediction. Type and
//! value scores count relaxed matches whose type, or canonicalized value
//! (trimmed, uppercased), agree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TimexAnnotation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Percentages from a match count over gold and predicted totals.
    pub fn from_counts(matched: usize, gold: usize, pred: usize) -> Self {
        let precision = if pred == 0 { 0.0 } else { 100.0 * matched as f64 / pred as f64 };
        let recall = if gold == 0 { 0.0 } else { 100.0 * matched as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub pred: usize,
    pub strict: usize,
    pub relaxed: usize,
    #[serde(rename = "type")]
    pub ttype: usize,
    pub value: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.gold += o.gold;
        self.pred += o.pred;
        self.strict += o.strict;
        self.relaxed += o.relaxed;
        self.ttype += o.ttype;
        self.value += o.value;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strict: Prf,
    pub relaxed: Prf,
    #[serde(rename = "type")]
    pub ttype: Prf,
    pub value: Prf,
    pub counts: Counts,
}

impl EvalReport {
    pub fn from_counts(c: Counts) -> Self {
        EvalReport {
            strict: Prf::from_counts(c.strict, c.gold, c.pred),
            relaxed: Prf::from_counts(c.relaxed, c.gold, c.pred),
            ttype: Prf::from_counts(c.ttype, c.gold, c.pred),
            value: Prf::from_counts(c.value, c.gold, c.pred),
            counts: c,
        }
    }
}

/// Canonical form used for value comparison.
pub fn canonical_value(v: &str) -> String {
    v.trim().to_uppercase()
}

/// Relaxed one-to-one alignment: `(gold index, pred index)` pairs.
pub fn relaxed_matches(gold: &[TimexAnnotation], pred: &[TimexAnnotation]) -> Vec<(usize, usize)> {
    let mut used = vec![false; pred.len()];
    let mut out = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        let best = pred
            .iter()
            .enumerate()
            .filter(|(pi, p)| !used[*pi] && g.overlaps(p))
            .min_by_key(|(pi, p)| (p.start, *pi))
            .map(|(pi, _)| pi);
        if let Some(pi) = best {
            used[pi] = true;
            out.push((gi, pi));
        }
    }
    out
}

/// Match counts for one document's annotation lists.
pub fn count_matches(gold: &[TimexAnnotation], pred: &[TimexAnnotation]) -> Counts {
    let mut c = Counts { gold: gold.len(), pred: pred.len(), ..Counts::default() };
    let mut pred_used = vec![false; pred.len()];
    for g in gold {
        if let Some(pi) = (0..pred.len()).find(|&pi| !pred_used[pi] && pred[pi].same_span(g)) {
            pred_used[pi] = true;
            c.strict += 1;
        }
    }
    for (gi, pi) in relaxed_matches(gold, pred) {
        c.relaxed += 1;
        if gold[gi].ttype == pred[pi].ttype {
            c.ttype += 1;
        }
        if canonical_value(&gold[gi].value) == canonical_value(&pred[pi].value) {
            c.value += 1;
        }
    }
    c
}

fn check_aligned(gold: &[Document], pred: &[Document]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!("{} gold documents but {} predicted", gold.len(), pred.len())));
    }
    for (g, p) in gold.iter().zip(pred) {
        if g.id != p.id {
            return Err(Error::Data(format!("document id mismatch: {:?} vs {:?}", g.id, p.id)));
        }
        if g.tokens.len() != p.tokens.len() {
            return Err(Error::Data(format!("document {:?}: token counts differ", g.id)));
        }
    }
    Ok(())
}

/// Micro-averaged scores over aligned document lists.
pub fn evaluate(gold: &[Document], pred: &[Document]) -> Result<EvalReport> {
    check_aligned(gold, pred)?;
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c += count_matches(&g.annotations, &p.annotations);
    }
    Ok(EvalReport::from_counts(c))
}

/// Per-language reports, keyed by `Document::lang` (missing → `"und"`).
pub fn evaluate_by_language(gold: &[Document], pred: &[Document]) -> Result<BTreeMap<String, EvalReport>> {
    check_aligned(gold, pred)?;
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let lang = g.lang.clone().unwrap_or_else(|| "und".into());
        *counts.entry(lang).or_default() += count_matches(&g.annotations, &p.annotations);
    }
    Ok(counts.into_iter().map(|(k, c)| (k, EvalReport::from_counts(c))).collect())
}

/// Language groups for averaging.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Groups {
    #[serde(default)]
    pub high: Vec<String>,
    #[serde(default)]
    pub low: Vec<String>,
}

/// Unweighted F1 means of each metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Means {
    pub strict: f64,
    pub relaxed: f64,
    #[serde(rename = "type")]
    pub ttype: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupedAverages {
    pub high: F1Means,
    pub low: F1Means,
    pub overall: F1Means,
}

fn mean(reports: &[&EvalReport]) -> F1Means {
    let n = reports.len() as f64;
    let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    F1Means {
        strict: avg(|r| r.strict.f1),
        relaxed: avg(|r| r.relaxed.f1),
        ttype: avg(|r| r.ttype.f1),
        value: avg(|r| r.value.f1),
    }
}

/// Unweighted mean F1 per group and over all grouped languages.
pub fn aggregate(reports: &BTreeMap<String, EvalReport>, groups: &Groups) -> Result<GroupedAverages> {
    let collect = |names: &[String]| -> Result<Vec<&EvalReport>> {
        if names.is_empty() {
            return Err(Error::Data("empty language group".into()));
        }
        names
            .iter()
            .map(|n| reports.get(n).ok_or_else(|| Error::Data(format!("no report for language {n:?}"))))
            .collect()
    };
    let high = collect(&groups.high)?;
    let low = collect(&groups.low)?;
    let all: Vec<&EvalReport> = high.iter().chain(&low).copied().collect();
    Ok(GroupedAverages { high: mean(&high), low: mean(&low), overall: mean(&all) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TimexType;

    fn ann(s: usize, e: usize, t: TimexType, v: &str) -> TimexAnnotation {
        TimexAnnotation::new(s, e, t, v)
    }

    fn doc(anns: Vec<TimexAnnotation>) -> Document {
        let mut d = Document::new("d", vec!["w".to_string(); 20]);
        d.annotations = anns;
        d
    }

    #[test]
    fn identical_is_perfect() {
        let g = doc(vec![ann(0, 2, TimexType::Date, "2022-05"), ann(5, 6, TimexType::Duration, "P3D")]);
        let r = evaluate(&[g.clone()], &[g]).unwrap();
        for m in [r.strict, r.relaxed, r.ttype, r.value] {
            assert_eq!(m.f1, 100.0);
        }
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let g = doc(vec![ann(0, 2, TimexType::Date, "2022-05")]);
        let r = evaluate(&[g], &[doc(vec![])]).unwrap();
        assert_eq!((r.relaxed.f1, r.value.precision), (0.0, 0.0));
    }

    #[test]
    fn two_gold_one_pred() {
        let g = doc(vec![ann(0, 2, TimexType::Date, "2022-05"), ann(5, 6, TimexType::Date, "2022-04-30")]);
        let p = doc(vec![ann(1, 3, TimexType::Date, "2022-06")]);
        let r = evaluate(&[g], &[p]).unwrap();
        assert_eq!((r.relaxed.precision, r.relaxed.recall), (100.0, 50.0));
        assert!((r.relaxed.f1 - 66.666_666).abs() < 1e-4);
        assert_eq!(r.value.f1, 0.0);
        assert_eq!(r.strict.f1, 0.0);
    }

    #[test]
    fn value_comparison_is_canonicalized() {
        let g = doc(vec![ann(0, 1, TimexType::Date, "2022-w17")]);
        let p = doc(vec![ann(0, 1, TimexType::Date, " 2022-W17 ")]);
        assert_eq!(evaluate(&[g], &[p]).unwrap().value.f1, 100.0);
    }

    #[test]
    fn one_to_one_and_earliest_start() {
        let gold = vec![ann(0, 10, TimexType::Date, "a")];
        let pred = vec![ann(4, 5, TimexType::Date, "b"), ann(1, 2, TimexType::Date, "a")];
        assert_eq!(relaxed_matches(&gold, &pred), vec![(0, 1)]);
        let gold = vec![ann(0, 2, TimexType::Date, "a"), ann(2, 4, TimexType::Date, "a")];
        let pred = vec![ann(1, 3, TimexType::Date, "a")];
        assert_eq!(relaxed_matches(&gold, &pred), vec![(0, 0)]);
    }

    #[test]
    fn misaligned_inputs_fail() {
        let mut other = doc(vec![]);
        other.id = "x".into();
        assert!(evaluate(&[doc(vec![])], &[other]).is_err());
        assert!(evaluate(&[doc(vec![])], &[]).is_err());
    }

    #[test]
    fn aggregation() {
        let mk = |f1: f64| EvalReport { value: Prf { precision: f1, recall: f1, f1 }, ..Default::default() };
        let mut reports = BTreeMap::new();
        reports.insert("a".to_string(), mk(80.0));
        reports.insert("b".to_string(), mk(60.0));
        reports.insert("c".to_string(), mk(30.0));
        let groups = Groups { high: vec!["a".into(), "b".into()], low: vec!["c".into()] };
        let agg = aggregate(&reports, &groups).unwrap();
        assert_eq!(agg.high.value, 70.0);
        assert_eq!(agg.low.value, 30.0);
        assert!((agg.overall.value - (80.0 + 60.0 + 30.0) / 3.0).abs() < 1e-12);
        assert!(aggregate(&reports, &Groups { high: vec![], low: vec!["c".into()] }).is_err());
    }
}
