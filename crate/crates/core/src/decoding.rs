//! Turning per-mask scores into value tokens: sequential, simultaneous and
//! linear-chain CRF (Viterbi) decoding.
//!
//! All argmax operations break ties towards the lowest token id. By default
//! value positions only consider value tokens (`0..value_count`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::{Normalizer, TrainingExample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStrategy {
    Sequential,
    Simultaneous,
    #[serde(rename = "viterbi")]
    ViterbiCrf,
}

impl std::str::FromStr for DecodeStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sequential" => Ok(DecodeStrategy::Sequential),
            "simultaneous" => Ok(DecodeStrategy::Simultaneous),
            "viterbi" => Ok(DecodeStrategy::ViterbiCrf),
            other => Err(format!("unknown decode strategy {other:?}")),
        }
    }
}

impl std::fmt::Display for DecodeStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeStrategy::Sequential => "sequential",
            DecodeStrategy::Simultaneous => "simultaneous",
            DecodeStrategy::ViterbiCrf => "viterbi",
        })
    }
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn pick(model: &Normalizer, logits: &[f64], restricted: bool) -> u32 {
    if restricted {
        argmax(&logits[..model.vocab.value_count()]) as u32
    } else {
        argmax(logits) as u32
    }
}

fn region_ids(ex: &TrainingExample) -> Vec<Vec<u32>> {
    ex.regions.iter().map(|r| ex.token_ids[r.start..r.start + r.len].to_vec()).collect()
}

/// One forward pass; every mask takes its own argmax.
pub fn decode_simultaneous(model: &Normalizer, ex: &TrainingExample, restricted: bool) -> Result<Vec<Vec<u32>>> {
    let logits = model.predict_logits(ex)?;
    let mut filled = ex.clone();
    for (&p, l) in ex.mask_positions.iter().zip(&logits) {
        filled.token_ids[p] = pick(model, l, restricted);
    }
    Ok(region_ids(&filled))
}

/// Left-to-right decoding: each pass fixes the left-most remaining mask of
/// every value region, keeping later masks masked. With `n` masks per region
/// this takes `n` forward passes.
pub fn decode_sequential(model: &Normalizer, ex: &TrainingExample, restricted: bool) -> Result<Vec<Vec<u32>>> {
    let mut cur = ex.clone();
    let in_region = |p: usize| ex.regions.iter().position(|r| (r.start..r.start + r.len).contains(&p));
    loop {
        let mut chosen: Vec<usize> = Vec::new();
        let mut seen = vec![false; ex.regions.len()];
        for (i, &p) in cur.mask_positions.iter().enumerate() {
            if let Some(r) = in_region(p) {
                if !seen[r] {
                    seen[r] = true;
                    chosen.push(i);
                }
            }
        }
        if chosen.is_empty() {
            break;
        }
        let logits = model.predict_logits(&cur)?;
        for &i in &chosen {
            let p = cur.mask_positions[i];
            cur.token_ids[p] = pick(model, &logits[i], restricted);
        }
        let keep: Vec<bool> = (0..cur.mask_positions.len()).map(|i| !chosen.contains(&i)).collect();
        let mut k = keep.iter();
        cur.mask_positions.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        cur.gold_ids.retain(|_| *k.next().unwrap());
    }
    Ok(region_ids(&cur))
}

/// Linear-chain CRF over value tokens with one shared transition matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub labels: usize,
    /// Row-major `labels x labels`, `[from * labels + to]`.
    pub transitions: Vec<f64>,
}

impl CrfModel {
    pub fn zeros(labels: usize) -> Self {
        CrfModel { labels, transitions: vec![0.0; labels * labels] }
    }

    fn t(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * self.labels + to]
    }

    /// Score of `path` under `emissions` (one row per position).
    pub fn path_score(&self, emissions: &[Vec<f64>], path: &[u32]) -> f64 {
        let mut s = 0.0;
        for (i, (&y, e)) in path.iter().zip(emissions).enumerate() {
            s += e[y as usize];
            if i > 0 {
                s += self.t(path[i - 1] as usize, y as usize);
            }
        }
        s
    }
}

/// Maximum-score label path; ties resolve towards lower ids.
pub fn decode_viterbi(crf: &CrfModel, emissions: &[Vec<f64>]) -> Vec<u32> {
    let n = emissions.len();
    let l = crf.labels;
    if n == 0 {
        return Vec::new();
    }
    let mut delta = emissions[0][..l].to_vec();
    let mut back = vec![vec![0usize; l]; n];
    for t in 1..n {
        let mut next = vec![0.0; l];
        for to in 0..l {
            let mut best = 0;
            let mut best_s = f64::NEG_INFINITY;
            for (from, &d) in delta.iter().enumerate() {
                let s = d + crf.t(from, to);
                if s > best_s {
                    best_s = s;
                    best = from;
                }
            }
            back[t][to] = best;
            next[to] = best_s + emissions[t][to];
        }
        delta = next;
    }
    let mut y = argmax(&delta);
    let mut path = vec![0u32; n];
    for t in (0..n).rev() {
        path[t] = y as u32;
        y = back[t][y];
    }
    path
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Emissions plus gold labels for one value region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfInstance {
    pub emissions: Vec<Vec<f64>>,
    pub gold: Vec<u32>,
}

/// Log-likelihood of `inst.gold` and its gradient w.r.t. the transitions
/// (accumulated into `grad`).
pub fn crf_log_likelihood(crf: &CrfModel, inst: &CrfInstance, grad: Option<&mut [f64]>) -> f64 {
    let l = crf.labels;
    let e = &inst.emissions;
    let n = e.len();
    if n == 0 {
        return 0.0;
    }
    let mut alpha = vec![vec![0.0; l]; n];
    alpha[0].copy_from_slice(&e[0][..l]);
    let mut buf = vec![0.0; l];
    for t in 1..n {
        for to in 0..l {
            for (from, b) in buf.iter_mut().enumerate() {
                *b = alpha[t - 1][from] + crf.t(from, to);
            }
            alpha[t][to] = log_sum_exp(&buf) + e[t][to];
        }
    }
    let log_z = log_sum_exp(&alpha[n - 1]);
    let ll = crf.path_score(e, &inst.gold) - log_z;
    if let Some(grad) = grad {
        let mut beta = vec![vec![0.0; l]; n];
        for t in (0..n - 1).rev() {
            for from in 0..l {
                for (to, b) in buf.iter_mut().enumerate() {
                    *b = crf.t(from, to) + e[t + 1][to] + beta[t + 1][to];
                }
                beta[t][from] = log_sum_exp(&buf);
            }
        }
        for t in 1..n {
            let (a, b) = (inst.gold[t - 1] as usize, inst.gold[t] as usize);
            grad[a * l + b] += 1.0;
            for from in 0..l {
                let af = alpha[t - 1][from] - log_z;
                for to in 0..l {
                    let p = (af + crf.t(from, to) + e[t][to] + beta[t][to]).exp();
                    grad[from * l + to] -= p;
                }
            }
        }
    }
    ll
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfTrainConfig {
    pub steps: usize,
    pub initial_step: f64,
    /// L2 penalty on the transitions.
    pub l2: f64,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        CrfTrainConfig { steps: 30, initial_step: 1.0, l2: 0.0 }
    }
}

fn objective(crf: &CrfModel, data: &[CrfInstance], l2: f64, grad: Option<&mut Vec<f64>>) -> f64 {
    let n = data.len() as f64;
    let mut total = 0.0;
    match grad {
        Some(g) => {
            g.iter_mut().for_each(|x| *x = 0.0);
            for inst in data {
                total += crf_log_likelihood(crf, inst, Some(g));
            }
            for (gi, ti) in g.iter_mut().zip(&crf.transitions) {
                *gi = *gi / n - l2 * ti;
            }
        }
        None => {
            for inst in data {
                total += crf_log_likelihood(crf, inst, None);
            }
        }
    }
    total / n - 0.5 * l2 * crf.transitions.iter().map(|t| t * t).sum::<f64>()
}

/// Fits transitions by gradient ascent on the mean log-likelihood with a
/// backtracking step size, so the objective never decreases. Returns the
/// model and the objective after each accepted step (index 0 is the start).
pub fn train_crf(labels: usize, data: &[CrfInstance], cfg: &CrfTrainConfig) -> Result<(CrfModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no CRF instances".into()));
    }
    for inst in data {
        if inst.emissions.len() != inst.gold.len()
            || inst.emissions.iter().any(|e| e.len() < labels)
            || inst.gold.iter().any(|&g| g as usize >= labels)
        {
            return Err(Error::Data("CRF instance does not match the label set".into()));
        }
    }
    let mut crf = CrfModel::zeros(labels);
    let mut grad = vec![0.0; labels * labels];
    let mut cur = objective(&crf, data, cfg.l2, Some(&mut grad));
    if !cur.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    let mut trace = vec![cur];
    let mut step = cfg.initial_step;
    for it in 0..cfg.steps {
        let mut accepted = false;
        for _ in 0..40 {
            let cand = CrfModel {
                labels,
                transitions: crf.transitions.iter().zip(&grad).map(|(t, g)| t + step * g).collect(),
            };
            let val = objective(&cand, data, cfg.l2, None);
            if val.is_finite() && val >= cur {
                crf = cand;
                accepted = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        cur = objective(&crf, data, cfg.l2, Some(&mut grad));
        if !cur.is_finite() {
            return Err(Error::NonFiniteLoss { step: it + 1 });
        }
        trace.push(cur);
    }
    Ok((crf, trace))
}

/// Large emission for value positions that are already known.
const FIXED: f64 = 1e6;

/// Emission rows for every value position of each region, restricted to
/// value tokens. Known positions get a one-hot emission.
pub fn region_emissions(model: &Normalizer, ex: &TrainingExample) -> Result<Vec<Vec<Vec<f64>>>> {
    let s = model.vocab.value_count();
    let logits = model.predict_logits(ex)?;
    let mut out = Vec::with_capacity(ex.regions.len());
    for r in &ex.regions {
        let mut rows = Vec::with_capacity(r.len);
        for p in r.start..r.start + r.len {
            match ex.mask_positions.iter().position(|&m| m == p) {
                Some(i) => rows.push(logits[i][..s].to_vec()),
                None => {
                    let mut row = vec![0.0; s];
                    if let Some(v) = row.get_mut(ex.token_ids[p] as usize) {
                        *v = FIXED;
                    }
                    rows.push(row);
                }
            }
        }
        out.push(rows);
    }
    Ok(out)
}

/// One forward pass followed by Viterbi decoding of each region.
pub fn decode_with_crf(model: &Normalizer, crf: &CrfModel, ex: &TrainingExample) -> Result<Vec<Vec<u32>>> {
    if crf.labels != model.vocab.value_count() {
        return Err(Error::Config(format!(
            "CRF has {} labels but the model has {} value tokens",
            crf.labels,
            model.vocab.value_count()
        )));
    }
    Ok(region_emissions(model, ex)?.iter().map(|e| decode_viterbi(crf, e)).collect())
}

/// Decodes every value region of `ex` with `strategy`.
pub fn decode(
    model: &Normalizer,
    ex: &TrainingExample,
    strategy: DecodeStrategy,
    crf: Option<&CrfModel>,
    restricted: bool,
) -> Result<Vec<Vec<u32>>> {
    match strategy {
        DecodeStrategy::Sequential => decode_sequential(model, ex, restricted),
        DecodeStrategy::Simultaneous => decode_simultaneous(model, ex, restricted),
        DecodeStrategy::ViterbiCrf => {
            let crf = crf.ok_or_else(|| Error::Config("viterbi decoding needs a CRF model".into()))?;
            decode_with_crf(model, crf, ex)
        }
    }
}

/// CRF training instances from gold-labelled examples: each value region
/// becomes one instance with all of its positions masked.
pub fn crf_instances(model: &Normalizer, data: &[TrainingExample]) -> Result<Vec<CrfInstance>> {
    let mut out = Vec::new();
    for ex in data {
        if ex.regions.iter().any(|r| !r.has_gold) {
            continue;
        }
        let masked = ex.mask_all_values();
        let ems = region_emissions(model, &masked)?;
        for (r, emissions) in ex.regions.iter().zip(ems) {
            out.push(CrfInstance { emissions, gold: ex.region_gold(r) });
        }
    }
    Ok(out)
}
